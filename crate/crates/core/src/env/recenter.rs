use super::{Domain, GridWorld, Pose};
use crate::error::{Error, Result};

/// Robot-centered network input: occupancy window and goal map, both `N×N`
/// row-major, with the robot cell at `(N/2, N/2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Recentered {
    pub n: usize,
    pub occupancy: Vec<u8>,
    pub goal_map: Vec<u8>,
    /// Goal fell outside the window and was clamped onto its border.
    pub goal_clamped: bool,
}

/// Cells outside the world read as obstacles. The goal cell carries `1` in
/// 2D and `θ+1` in 3D.
pub fn recenter(world: &GridWorld, goal: Pose, robot: Pose, domain: Domain) -> Result<Recentered> {
    let n = world.n();
    if !world.contains(robot.x, robot.y) {
        return Err(Error::OutsideWorld { x: robot.x, y: robot.y, n });
    }
    let half = (n / 2) as i32;
    let (ox, oy) = (robot.x - half, robot.y - half);
    let mut occupancy = vec![1u8; n * n];
    let occ = world.occupancy();
    // Overlap of the window with the world, in window coordinates.
    let x0 = (-ox).max(0) as usize;
    let x1 = (n as i32 - ox).min(n as i32) as usize;
    for wy in 0..n {
        let y = wy as i32 + oy;
        if y < 0 || y >= n as i32 || x0 >= x1 {
            continue;
        }
        let src = y as usize * n + (x0 as i32 + ox) as usize;
        occupancy[wy * n + x0..wy * n + x1].copy_from_slice(&occ[src..src + (x1 - x0)]);
    }
    let mut goal_map = vec![0u8; n * n];
    let gx = goal.x - ox;
    let gy = goal.y - oy;
    let cx = gx.clamp(0, n as i32 - 1);
    let cy = gy.clamp(0, n as i32 - 1);
    let value = match domain {
        Domain::Grid2d => 1,
        Domain::Locomotion3d => goal.theta as u8 + 1,
    };
    goal_map[cy as usize * n + cx as usize] = value;
    Ok(Recentered { n, occupancy, goal_map, goal_clamped: (cx, cy) != (gx, gy) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate::{gen_random_obstacles, ObstacleConfig};
    use proptest::prelude::*;

    #[test]
    fn centered_robot_sees_the_world() {
        let w = gen_random_obstacles(16, 4, &ObstacleConfig::for_size(16)).unwrap();
        let goal = Pose::cell(3, 12);
        let r = recenter(&w, goal, Pose::cell(8, 8), Domain::Grid2d).unwrap();
        assert_eq!(r.occupancy, w.occupancy());
        assert_eq!(r.goal_map[12 * 16 + 3], 1);
        assert_eq!(r.goal_map.iter().map(|&v| v as u32).sum::<u32>(), 1);
        assert!(!r.goal_clamped);
    }

    #[test]
    fn corner_robot_pads_with_obstacles() {
        let w = GridWorld::free(8, 1.0).unwrap();
        let r = recenter(&w, Pose::cell(2, 2), Pose::cell(0, 0), Domain::Grid2d).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let expected = u8::from(x < 4 || y < 4);
                assert_eq!(r.occupancy[y * 8 + x], expected, "({x},{y})");
            }
        }
        assert_eq!(r.goal_map[6 * 8 + 6], 1);
    }

    #[test]
    fn goal_orientation_is_one_based() {
        let w = GridWorld::free(16, 0.2).unwrap();
        let r = recenter(&w, Pose::new(10, 8, 0), Pose::new(8, 8, 3), Domain::Locomotion3d).unwrap();
        assert_eq!(r.goal_map[8 * 16 + 10], 1);
        let r = recenter(&w, Pose::new(10, 8, 15), Pose::new(8, 8, 3), Domain::Locomotion3d).unwrap();
        assert_eq!(r.goal_map[8 * 16 + 10], 16);
    }

    #[test]
    fn far_goal_is_clamped_and_flagged() {
        let w = GridWorld::free(8, 1.0).unwrap();
        let r = recenter(&w, Pose::cell(7, 7), Pose::cell(0, 0), Domain::Grid2d).unwrap();
        assert!(r.goal_clamped);
        assert_eq!(r.goal_map[7 * 8 + 7], 1);
    }

    #[test]
    fn robot_outside_world_is_an_error() {
        let w = GridWorld::free(8, 1.0).unwrap();
        assert!(recenter(&w, Pose::cell(1, 1), Pose::cell(8, 0), Domain::Grid2d).is_err());
    }

    proptest! {
        #[test]
        fn recenter_is_shift_equivariant(seed in 0u64..200, rx in 0i32..16, ry in 0i32..16, a in 0u8..8) {
            let w = gen_random_obstacles(16, seed, &ObstacleConfig::for_size(16)).unwrap();
            let robot = Pose::cell(rx, ry);
            let (dx, dy) = crate::env::MOVES[a as usize];
            let moved = Pose::cell(rx + dx, ry + dy);
            prop_assume!(w.contains(moved.x, moved.y));
            let before = recenter(&w, Pose::cell(8, 8), robot, Domain::Grid2d).unwrap();
            let after = recenter(&w, Pose::cell(8, 8), moved, Domain::Grid2d).unwrap();
            for y in 0..16i32 {
                for x in 0..16i32 {
                    let (px, py) = (x + dx, y + dy);
                    if (0..16).contains(&px) && (0..16).contains(&py) {
                        prop_assert_eq!(
                            after.occupancy[(y * 16 + x) as usize],
                            before.occupancy[(py * 16 + px) as usize]
                        );
                    } else {
                        let (wx, wy) = (moved.x - 8 + x, moved.y - 8 + y);
                        prop_assert_eq!(after.occupancy[(y * 16 + x) as usize], u8::from(w.blocked(wx, wy)));
                    }
                }
            }
        }
    }
}
