//! Optimal A* expert for point agents (8-connected) and footprint agents
//! (8 moves plus two turns over 16 orientations).
//!
//! Costs are accumulated as integer micro-cells so that equal-cost
//! alternatives compare exactly and tie-breaking stays deterministic.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::env::{Action, Agent, Domain, GridWorld, Pose, ORIENTATIONS};

const UNITS_PER_CELL: f64 = 1_000_000.0;

/// Action prices, in cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    pub straight_cost: f64,
    pub diagonal_cost: f64,
    pub turn_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { straight_cost: 1.0, diagonal_cost: std::f64::consts::SQRT_2, turn_cost: 0.5 }
    }
}

/// Integer price table derived from a [`CostModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostUnits {
    pub straight: u64,
    pub diagonal: u64,
    pub turn: u64,
}

impl CostModel {
    pub fn units(&self) -> CostUnits {
        assert!(
            self.straight_cost > 0.0 && self.turn_cost > 0.0 && self.diagonal_cost >= self.straight_cost,
            "invalid cost model {self:?}"
        );
        let q = |c: f64| (c * UNITS_PER_CELL).round() as u64;
        CostUnits { straight: q(self.straight_cost), diagonal: q(self.diagonal_cost), turn: q(self.turn_cost) }
    }

    /// Geometric length of one action; turns add nothing.
    pub fn geometric(&self, action: Action) -> f64 {
        if !action.is_move() {
            0.0
        } else if action.is_diagonal() {
            std::f64::consts::SQRT_2
        } else {
            1.0
        }
    }
}

impl CostUnits {
    pub fn action(&self, a: Action) -> u64 {
        if !a.is_move() {
            self.turn
        } else if a.is_diagonal() {
            self.diagonal
        } else {
            self.straight
        }
    }

    /// Octile distance plus the cheapest orientation change (3D only).
    pub fn heuristic(&self, from: Pose, goal: Pose, domain: Domain) -> u64 {
        let dx = (from.x - goal.x).unsigned_abs() as u64;
        let dy = (from.y - goal.y).unsigned_abs() as u64;
        let (lo, hi) = (dx.min(dy), dx.max(dy));
        let planar = self.diagonal * lo + self.straight * (hi - lo);
        match domain {
            Domain::Grid2d => planar,
            Domain::Locomotion3d => {
                let d = (from.theta as i64 - goal.theta as i64).rem_euclid(ORIENTATIONS as i64) as u64;
                planar + self.turn * d.min(ORIENTATIONS as u64 - d)
            }
        }
    }

    pub fn to_cells(units: u64) -> f64 {
        units as f64 / UNITS_PER_CELL
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub poses: Vec<Pose>,
    pub actions: Vec<Action>,
    pub geometric_length: f64,
    pub action_count: usize,
    /// Total cost in integer units (see [`CostUnits`]).
    pub cost_units: u64,
}

impl Path {
    pub fn from_actions(start: Pose, actions: Vec<Action>, domain: Domain, cost: &CostModel) -> Path {
        let units = cost.units();
        let mut poses = vec![start];
        let mut p = start;
        for &a in &actions {
            p = crate::env::apply_action(p, a, domain);
            poses.push(p);
        }
        Path {
            geometric_length: actions.iter().map(|&a| cost.geometric(a)).sum(),
            action_count: actions.len(),
            cost_units: actions.iter().map(|&a| units.action(a)).sum(),
            poses,
            actions,
        }
    }

    pub fn cost(&self) -> f64 {
        CostUnits::to_cells(self.cost_units)
    }

    pub fn start(&self) -> Pose {
        self.poses[0]
    }

    pub fn goal(&self) -> Pose {
        *self.poses.last().expect("path has a start pose")
    }
}

/// Dense state index: `(θ·N + y)·N + x`.
pub fn state_index(pose: Pose, n: usize) -> usize {
    (pose.theta * n + pose.y as usize) * n + pose.x as usize
}

fn state_count(n: usize, domain: Domain) -> usize {
    match domain {
        Domain::Grid2d => n * n,
        Domain::Locomotion3d => ORIENTATIONS * n * n,
    }
}

/// A* over the agent's action set. Open-list ties break on the lower
/// heuristic, then the lower state index. `None` when the goal is
/// unreachable or either endpoint is in collision.
pub fn astar(world: &GridWorld, agent: &Agent, cost: &CostModel, start: Pose, goal: Pose) -> Option<Path> {
    let domain = agent.domain;
    let (start, goal) = match domain {
        Domain::Grid2d => (Pose { theta: 0, ..start }, Pose { theta: 0, ..goal }),
        Domain::Locomotion3d => (start, goal),
    };
    if !agent.pose_valid(world, start) || !agent.pose_valid(world, goal) {
        return None;
    }
    let n = world.n();
    let units = cost.units();
    let total = state_count(n, domain);
    let mut g = vec![u64::MAX; total];
    let mut parent: Vec<Option<(u32, Action)>> = vec![None; total];
    let mut closed = vec![false; total];
    let mut open = BinaryHeap::new();
    let s0 = state_index(start, n);
    g[s0] = 0;
    let h0 = units.heuristic(start, goal, domain);
    open.push(Reverse((h0, h0, s0 as u32)));
    let goal_idx = state_index(goal, n);
    while let Some(Reverse((_, _, idx))) = open.pop() {
        let idx = idx as usize;
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == goal_idx {
            break;
        }
        let pose = pose_of(idx, n);
        for a in Action::all(domain) {
            let Some(next) = agent.transition(world, pose, a) else { continue };
            let ni = state_index(next, n);
            if closed[ni] {
                continue;
            }
            let cand = g[idx] + units.action(a);
            if cand < g[ni] {
                g[ni] = cand;
                parent[ni] = Some((idx as u32, a));
                let h = units.heuristic(next, goal, domain);
                open.push(Reverse((cand + h, h, ni as u32)));
            }
        }
    }
    if g[goal_idx] == u64::MAX {
        return None;
    }
    let mut actions = Vec::new();
    let mut cur = goal_idx;
    while let Some((p, a)) = parent[cur] {
        actions.push(a);
        cur = p as usize;
    }
    actions.reverse();
    Some(Path::from_actions(start, actions, domain, cost))
}

fn pose_of(idx: usize, n: usize) -> Pose {
    Pose { x: (idx % n) as i32, y: ((idx / n) % n) as i32, theta: idx / (n * n) }
}

pub fn astar_2d(world: &GridWorld, agent: &Agent, cost: &CostModel, start: (i32, i32), goal: (i32, i32)) -> Option<Path> {
    debug_assert_eq!(agent.domain, Domain::Grid2d);
    astar(world, agent, cost, Pose::cell(start.0, start.1), Pose::cell(goal.0, goal.1))
}

pub fn astar_3d(world: &GridWorld, agent: &Agent, cost: &CostModel, start: Pose, goal: Pose) -> Option<Path> {
    debug_assert_eq!(agent.domain, Domain::Locomotion3d);
    astar(world, agent, cost, start, goal)
}

/// The expert's canonical next action: the first step of the A* path.
pub fn expert_label(world: &GridWorld, agent: &Agent, cost: &CostModel, current: Pose, goal: Pose) -> Option<Action> {
    astar(world, agent, cost, current, goal)?.actions.first().copied()
}

/// Path obtained by repeatedly taking [`expert_label`] until the goal.
///
/// Every state on it is labelled with the action the path takes there, and
/// its cost equals the optimal A* cost.
pub fn expert_path(world: &GridWorld, agent: &Agent, cost: &CostModel, start: Pose, goal: Pose) -> Option<Path> {
    let first = astar(world, agent, cost, start, goal)?;
    let mut actions = Vec::with_capacity(first.action_count);
    let mut pose = first.start();
    let mut plan = first;
    while let Some(&a) = plan.actions.first() {
        actions.push(a);
        pose = plan.poses[1];
        if agent.at_goal(pose, goal) {
            break;
        }
        plan = astar(world, agent, cost, pose, goal).expect("successor of an optimal step reaches the goal");
    }
    let start = Pose { theta: if agent.domain == Domain::Grid2d { 0 } else { start.theta }, ..start };
    let path = Path::from_actions(start, actions, agent.domain, cost);
    debug_assert_eq!(path.goal(), pose);
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GridWorld, ORIENTATIONS};

    fn free(n: usize, cell: f32) -> GridWorld {
        GridWorld::free(n, cell).unwrap()
    }

    #[test]
    fn straight_and_diagonal_lengths() {
        let w = free(8, 1.0);
        let agent = Agent::new(Domain::Grid2d);
        let c = CostModel::default();
        let p = astar_2d(&w, &agent, &c, (0, 0), (3, 0)).unwrap();
        assert_eq!(p.action_count, 3);
        assert_eq!(p.geometric_length, 3.0);
        let p = astar_2d(&w, &agent, &c, (0, 0), (2, 2)).unwrap();
        assert_eq!(p.action_count, 2);
        assert!((p.geometric_length - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(p.actions.iter().all(|a| a.is_diagonal()));
    }

    #[test]
    fn unreachable_goal_gives_none() {
        let w = GridWorld::from_ascii(
            &["...#....", "...#....", "...#....", "...#....", "...#....", "...#....", "...#....", "...#...."],
            1.0,
        )
        .unwrap();
        let agent = Agent::new(Domain::Grid2d);
        assert!(astar_2d(&w, &agent, &CostModel::default(), (0, 0), (7, 7)).is_none());
    }

    #[test]
    fn pure_rotation_costs_turns() {
        let w = free(16, 0.2);
        let agent = Agent::new(Domain::Locomotion3d);
        let c = CostModel::default();
        let p = astar_3d(&w, &agent, &c, Pose::new(8, 8, 3), Pose::new(8, 8, 5)).unwrap();
        assert_eq!(p.actions, vec![Action::TURN_LEFT, Action::TURN_LEFT]);
        assert_eq!(p.cost(), 2.0 * c.turn_cost);
        assert_eq!(p.geometric_length, 0.0);
        let p = astar_3d(&w, &agent, &c, Pose::new(8, 8, 1), Pose::new(8, 8, ORIENTATIONS - 1)).unwrap();
        assert_eq!(p.actions, vec![Action::TURN_RIGHT, Action::TURN_RIGHT]);
    }

    #[test]
    fn free_3d_translation_matches_2d() {
        let w = free(16, 0.2);
        let c = CostModel::default();
        let p3 = astar_3d(&w, &Agent::new(Domain::Locomotion3d), &c, Pose::new(6, 8, 0), Pose::new(10, 8, 0)).unwrap();
        let p2 = astar_2d(&free(16, 1.0), &Agent::new(Domain::Grid2d), &c, (6, 8), (10, 8)).unwrap();
        assert_eq!(p3.actions, p2.actions);
        assert!(p3.poses.iter().all(|p| p.theta == 0));
    }

    #[test]
    fn adjacent_goal_label_is_the_connecting_move() {
        let w = free(8, 1.0);
        let agent = Agent::new(Domain::Grid2d);
        let c = CostModel::default();
        for a in Action::all(Domain::Grid2d) {
            let (dx, dy) = a.offset();
            let label = expert_label(&w, &agent, &c, Pose::cell(4, 4), Pose::cell(4 + dx, 4 + dy));
            assert_eq!(label, Some(a));
        }
    }

    #[test]
    fn labels_along_expert_path_reproduce_it() {
        let w = GridWorld::from_ascii(
            &["........", "..##....", "..#.....", "..#..#..", ".....#..", "..####..", "........", "........"],
            1.0,
        )
        .unwrap();
        let agent = Agent::new(Domain::Grid2d);
        let c = CostModel::default();
        let path = expert_path(&w, &agent, &c, Pose::cell(4, 4), Pose::cell(0, 0)).unwrap();
        let opt = astar(&w, &agent, &c, Pose::cell(4, 4), Pose::cell(0, 0)).unwrap();
        assert_eq!(path.cost_units, opt.cost_units);
        for (pose, &a) in path.poses.iter().zip(&path.actions) {
            assert_eq!(expert_label(&w, &agent, &c, *pose, Pose::cell(0, 0)), Some(a));
        }
    }

    #[test]
    fn tie_break_is_stable() {
        let w = free(8, 1.0);
        let agent = Agent::new(Domain::Grid2d);
        let c = CostModel::default();
        // Goal a knight's move away: two optimal straight+diagonal orders.
        let first = expert_label(&w, &agent, &c, Pose::cell(3, 3), Pose::cell(5, 4));
        for _ in 0..5 {
            assert_eq!(expert_label(&w, &agent, &c, Pose::cell(3, 3), Pose::cell(5, 4)), first);
        }
    }

    #[test]
    fn reversed_2d_query_costs_the_same() {
        let w = GridWorld::from_ascii(
            &["........", ".####...", "....#...", "..#.#.#.", "..#...#.", "..#####.", "........", "........"],
            1.0,
        )
        .unwrap();
        let agent = Agent::new(Domain::Grid2d);
        let c = CostModel::default();
        let a = astar_2d(&w, &agent, &c, (0, 0), (3, 4)).unwrap();
        let b = astar_2d(&w, &agent, &c, (3, 4), (0, 0)).unwrap();
        assert_eq!(a.cost_units, b.cost_units);
    }
}
