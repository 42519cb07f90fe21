//! Grid worlds, agent kinematics and collision semantics.
//!
//! Coordinates: `x` is the column, `y` the row (growing downwards).
//! Orientation `θ` indexes `θ·2π/16`, counter-clockwise.

mod dataset;
mod generate;
pub mod io;
mod recenter;

pub use dataset::{
    action_frequencies, build_dataset, inverse_frequency_weights, sample_tasks, Dataset,
    DatasetConfig, TaskRecord,
};
pub use generate::{gen_maze, gen_random_obstacles, gen_worlds, MazeConfig, ObstacleConfig, WorldKind};
pub use recenter::{recenter, Recentered};

use crate::error::{Error, Result};

/// Discrete orientations of the locomotion domain.
pub const ORIENTATIONS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Grid2d,
    Locomotion3d,
}

impl Domain {
    pub fn action_count(self) -> usize {
        match self {
            Domain::Grid2d => 8,
            Domain::Locomotion3d => 10,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Domain::Grid2d => 0,
            Domain::Locomotion3d => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Domain::Grid2d),
            1 => Ok(Domain::Locomotion3d),
            _ => Err(Error::Format(format!("unknown domain code {code}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Grid2d => "grid2d",
            Domain::Locomotion3d => "locomotion3d",
        }
    }

    pub fn default_cell_size(self) -> f32 {
        match self {
            Domain::Grid2d => 1.0,
            Domain::Locomotion3d => 0.2,
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid2d" | "2d" => Ok(Domain::Grid2d),
            "locomotion3d" | "3d" => Ok(Domain::Locomotion3d),
            _ => Err(Error::Config(format!("unknown domain {s:?}"))),
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pose {
    pub x: i32,
    pub y: i32,
    pub theta: usize,
}

impl Pose {
    pub fn new(x: i32, y: i32, theta: usize) -> Self {
        Pose { x, y, theta }
    }

    pub fn cell(x: i32, y: i32) -> Self {
        Pose { x, y, theta: 0 }
    }

    pub fn chebyshev(&self, other: &Pose) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

impl std::fmt::Display for Pose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.x, self.y, self.theta)
    }
}

/// `x,y,theta`, or `x,y` for orientation 0.
impl std::str::FromStr for Pose {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad pose {s:?}, expected x,y[,theta]"));
        let f: Vec<&str> = s.trim().split(',').collect();
        let (x, y, t) = match f[..] {
            [x, y] => (x, y, "0"),
            [x, y, t] => (x, y, t),
            _ => return Err(bad()),
        };
        Ok(Pose::new(
            x.trim().parse().map_err(|_| bad())?,
            y.trim().parse().map_err(|_| bad())?,
            t.trim().parse().map_err(|_| bad())?,
        ))
    }
}

/// Action id. `0..8` are the eight moves, `8`/`9` turn left/right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action(pub u8);

/// Cell offsets of the eight moves: N, NE, E, SE, S, SW, W, NW.
pub const MOVES: [(i32, i32); 8] =
    [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

impl Action {
    pub const NORTH: Action = Action(0);
    pub const EAST: Action = Action(2);
    pub const SOUTH: Action = Action(4);
    pub const WEST: Action = Action(6);
    pub const TURN_LEFT: Action = Action(8);
    pub const TURN_RIGHT: Action = Action(9);

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn is_move(self) -> bool {
        self.0 < 8
    }

    pub fn is_diagonal(self) -> bool {
        self.is_move() && self.0 % 2 == 1
    }

    pub fn offset(self) -> (i32, i32) {
        if self.is_move() {
            MOVES[self.0 as usize]
        } else {
            (0, 0)
        }
    }

    /// Action that undoes this one.
    pub fn inverse(self) -> Action {
        match self.0 {
            m @ 0..=7 => Action((m + 4) % 8),
            8 => Action(9),
            _ => Action(8),
        }
    }

    pub fn all(domain: Domain) -> impl Iterator<Item = Action> {
        (0..domain.action_count() as u8).map(Action)
    }
}

/// Pure kinematics; no collision checking.
pub fn apply_action(pose: Pose, action: Action, domain: Domain) -> Pose {
    assert!(action.id() < domain.action_count(), "action {action:?} invalid for {domain}");
    match action.0 {
        0..=7 => {
            let (dx, dy) = MOVES[action.id()];
            Pose { x: pose.x + dx, y: pose.y + dy, theta: pose.theta }
        }
        8 => Pose { theta: (pose.theta + 1) % ORIENTATIONS, ..pose },
        _ => Pose { theta: (pose.theta + ORIENTATIONS - 1) % ORIENTATIONS, ..pose },
    }
}

/// Square occupancy grid; `1` marks an obstacle.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    n: usize,
    occupancy: Vec<u8>,
    pub cell_size_m: f32,
}

pub const SUPPORTED_SIZES: [usize; 5] = [8, 16, 32, 64, 128];

impl GridWorld {
    pub fn free(n: usize, cell_size_m: f32) -> Result<Self> {
        Self::from_occupancy(n, vec![0; n * n], cell_size_m)
    }

    pub fn from_occupancy(n: usize, occupancy: Vec<u8>, cell_size_m: f32) -> Result<Self> {
        if !SUPPORTED_SIZES.contains(&n) {
            return Err(Error::Config(format!("world side {n} not in {SUPPORTED_SIZES:?}")));
        }
        if occupancy.len() != n * n {
            return Err(Error::Format(format!("occupancy has {} cells, want {}", occupancy.len(), n * n)));
        }
        if occupancy.iter().any(|&v| v > 1) {
            return Err(Error::Format("occupancy values must be 0 or 1".into()));
        }
        Ok(GridWorld { n, occupancy, cell_size_m })
    }

    /// Parse rows of `.`/`#` characters (test helper and fixtures).
    pub fn from_ascii(rows: &[&str], cell_size_m: f32) -> Result<Self> {
        let n = rows.len();
        let mut occ = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::Format("ascii world must be square".into()));
            }
            occ.extend(r.bytes().map(|b| u8::from(b == b'#')));
        }
        Self::from_occupancy(n, occ, cell_size_m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.n && (y as usize) < self.n
    }

    /// Out-of-bounds cells count as blocked.
    pub fn blocked(&self, x: i32, y: i32) -> bool {
        !self.contains(x, y) || self.occupancy[y as usize * self.n + x as usize] == 1
    }

    pub fn set(&mut self, x: usize, y: usize, occupied: bool) {
        self.occupancy[y * self.n + x] = u8::from(occupied);
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.n / 2) as i32, (self.n / 2) as i32)
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.occupancy.iter().map(|&v| v as f64).sum::<f64>() / self.occupancy.len() as f64
    }
}

pub fn collision_2d(world: &GridWorld, x: i32, y: i32) -> bool {
    world.blocked(x, y)
}

/// Wheel ground-contact points relative to the robot base, in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Footprint {
    pub wheel_offsets_m: [(f64, f64); 4],
}

impl Default for Footprint {
    /// Square 0.8 m × 0.8 m wheel base.
    fn default() -> Self {
        Footprint { wheel_offsets_m: [(0.4, 0.4), (-0.4, 0.4), (-0.4, -0.4), (0.4, -0.4)] }
    }
}

impl Footprint {
    /// Wheel cell offsets at orientation `theta` out of `orientations`, for
    /// cells of `cell_size_m`. Rounds half away from zero after rotation.
    pub fn wheel_cells(&self, theta: usize, orientations: usize, cell_size_m: f64) -> [(i32, i32); 4] {
        let angle = theta as f64 * std::f64::consts::TAU / orientations as f64;
        let (s, c) = angle.sin_cos();
        self.wheel_offsets_m.map(|(dx, dy)| {
            let rx = dx * c - dy * s;
            let ry = dx * s + dy * c;
            ((rx / cell_size_m).round() as i32, (ry / cell_size_m).round() as i32)
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.wheel_offsets_m
            .iter()
            .all(|&(x, y)| self.wheel_offsets_m.iter().any(|&(a, b)| a == -x && b == -y))
    }
}

/// True iff any wheel cell of `pose` is outside the world or occupied. The
/// base cell itself is not checked.
pub fn collision_footprint(world: &GridWorld, pose: Pose, footprint: &Footprint) -> bool {
    footprint
        .wheel_cells(pose.theta, ORIENTATIONS, world.cell_size_m as f64)
        .iter()
        .any(|&(dx, dy)| world.blocked(pose.x + dx, pose.y + dy))
}

/// Domain-specific kinematics and collision rules.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub domain: Domain,
    pub footprint: Footprint,
    /// Allow diagonal 2D moves between two blocked cardinal cells.
    pub corner_cutting: bool,
}

impl Agent {
    pub fn new(domain: Domain) -> Self {
        Agent { domain, footprint: Footprint::default(), corner_cutting: false }
    }

    pub fn pose_valid(&self, world: &GridWorld, pose: Pose) -> bool {
        match self.domain {
            Domain::Grid2d => !collision_2d(world, pose.x, pose.y),
            Domain::Locomotion3d => {
                world.contains(pose.x, pose.y)
                    && pose.theta < ORIENTATIONS
                    && !collision_footprint(world, pose, &self.footprint)
            }
        }
    }

    /// Successor pose if the transition is collision-free.
    pub fn transition(&self, world: &GridWorld, pose: Pose, action: Action) -> Option<Pose> {
        let next = apply_action(pose, action, self.domain);
        if !self.pose_valid(world, next) {
            return None;
        }
        if self.domain == Domain::Grid2d && action.is_diagonal() && !self.corner_cutting {
            let (dx, dy) = action.offset();
            if world.blocked(pose.x + dx, pose.y) || world.blocked(pose.x, pose.y + dy) {
                return None;
            }
        }
        Some(next)
    }

    /// Goal test: cell match in 2D, full pose match in 3D.
    pub fn at_goal(&self, pose: Pose, goal: Pose) -> bool {
        match self.domain {
            Domain::Grid2d => pose.x == goal.x && pose.y == goal.y,
            Domain::Locomotion3d => pose == goal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanningTask {
    pub world_index: usize,
    pub start: Pose,
    pub goal: Pose,
    pub domain: Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleSource {
    FullPath,
    SubPath,
}

impl SampleSource {
    pub fn name(self) -> &'static str {
        match self {
            SampleSource::FullPath => "full_path",
            SampleSource::SubPath => "sub_path",
        }
    }
}

/// One supervised example: robot pose, goal, and the expert's next action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub world_index: usize,
    pub current: Pose,
    pub goal: Pose,
    pub expert_action: Action,
    pub source: SampleSource,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poses_parse_from_text() {
        assert_eq!("3,4,5".parse::<Pose>().unwrap(), Pose::new(3, 4, 5));
        assert_eq!("3,4".parse::<Pose>().unwrap(), Pose::cell(3, 4));
        let p = Pose::new(-1, 7, 15);
        assert_eq!(p.to_string().parse::<Pose>().unwrap(), p);
        for bad in ["", "1", "1,2,3,4", "a,2", "1,2,-3"] {
            assert!(bad.parse::<Pose>().is_err(), "{bad}");
        }
    }

    #[test]
    fn collision_2d_basics() {
        let mut w = GridWorld::free(8, 1.0).unwrap();
        w.set(3, 2, true);
        assert!(!collision_2d(&w, 4, 4));
        assert!(collision_2d(&w, 3, 2));
        assert!(collision_2d(&w, -1, 0));
        assert!(collision_2d(&w, 0, 8));
    }

    #[test]
    fn unsupported_sizes_rejected() {
        assert!(GridWorld::free(12, 1.0).is_err());
        assert!(GridWorld::from_occupancy(8, vec![2; 64], 1.0).is_err());
    }

    #[test]
    fn move_and_turn_kinematics() {
        let p = Pose::new(3, 3, 0);
        assert_eq!(apply_action(p, Action::EAST, Domain::Grid2d), Pose::new(4, 3, 0));
        let q = Pose::new(5, 5, 15);
        assert_eq!(apply_action(q, Action::TURN_LEFT, Domain::Locomotion3d).theta, 0);
        let r = apply_action(q, Action::TURN_RIGHT, Domain::Locomotion3d);
        assert_eq!(apply_action(r, Action::TURN_LEFT, Domain::Locomotion3d), q);
        for a in Action::all(Domain::Locomotion3d) {
            let back = apply_action(apply_action(q, a, Domain::Locomotion3d), a.inverse(), Domain::Locomotion3d);
            assert_eq!(back, q);
        }
    }

    #[test]
    #[should_panic]
    fn turn_is_invalid_in_2d() {
        apply_action(Pose::cell(1, 1), Action::TURN_LEFT, Domain::Grid2d);
    }

    #[test]
    fn footprint_wheels_at_zero_orientation() {
        let f = Footprint::default();
        assert!(f.is_symmetric());
        let mut cells = f.wheel_cells(0, 16, 0.2).to_vec();
        cells.sort();
        assert_eq!(cells, vec![(-2, -2), (-2, 2), (2, -2), (2, 2)]);
    }

    #[test]
    fn obstacle_between_wheels_is_legal() {
        let mut w = GridWorld::free(16, 0.2).unwrap();
        let f = Footprint::default();
        w.set(8, 8, true);
        for theta in 0..16 {
            assert!(!collision_footprint(&w, Pose::new(8, 8, theta), &f));
        }
    }

    #[test]
    fn obstacle_under_wheel_collides_under_quarter_turn() {
        let mut w = GridWorld::free(16, 0.2).unwrap();
        let f = Footprint::default();
        w.set(10, 10, true);
        assert!(collision_footprint(&w, Pose::new(8, 8, 0), &f));
        assert!(collision_footprint(&w, Pose::new(8, 8, 4), &f));
        assert!(!collision_footprint(&w, Pose::new(8, 8, 2), &f));
    }

    #[test]
    fn four_distinct_wheel_patterns() {
        let f = Footprint::default();
        let mut patterns: Vec<Vec<(i32, i32)>> = (0..16)
            .map(|t| {
                let mut c = f.wheel_cells(t, 16, 0.2).to_vec();
                c.sort();
                c
            })
            .collect();
        patterns.sort();
        patterns.dedup();
        assert_eq!(patterns.len(), 4);
    }

    #[test]
    fn corner_cutting_rule() {
        let w = GridWorld::from_ascii(
            &["........", ".#......", "........", "........", "........", "........", "........", "........"],
            1.0,
        )
        .unwrap();
        let mut agent = Agent::new(Domain::Grid2d);
        // From (0,0) moving SE to (1,1) hits the obstacle; from (0,1) NE to (1,0) cuts its corner.
        assert!(agent.transition(&w, Pose::cell(0, 0), Action(3)).is_none());
        assert!(agent.transition(&w, Pose::cell(0, 1), Action(1)).is_none());
        agent.corner_cutting = true;
        assert_eq!(agent.transition(&w, Pose::cell(0, 1), Action(1)), Some(Pose::cell(1, 0)));
    }
}
