use std::collections::HashMap;

use super::policy::{Policy, Query};
use crate::env::{Action, Agent, GridWorld, Pose};
use crate::error::Result;
use crate::expert::CostModel;

/// Revisiting a pose this often marks a trace as oscillating.
pub const OSCILLATION_VISITS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    pub reached_goal: bool,
    pub collided: bool,
    pub actions_taken: usize,
    pub geometric_length: f64,
    /// Path cost in integer units of the expert's cost model.
    pub cost_units: u64,
    pub success: bool,
    /// Visited poses, starting with the start pose. A colliding action is
    /// not applied, so the trace ends at the last valid pose.
    pub trace: Vec<Pose>,
    pub actions: Vec<Action>,
    /// The goal lay outside the input window at some step.
    pub goal_clamped_flag: bool,
    pub oscillation: bool,
}

/// One rollout request.
#[derive(Clone, Copy, Debug)]
pub struct RolloutTask<'a> {
    pub world: &'a GridWorld,
    pub start: Pose,
    pub goal: Pose,
    /// Action count of the expert path; the budget is twice this plus one.
    pub expert_actions: usize,
    /// Stable task id handed to the policy.
    pub id: usize,
}

impl RolloutTask<'_> {
    pub fn max_steps(&self) -> usize {
        2 * self.expert_actions + 1
    }
}

pub fn goal_outside_window(n: usize, robot: Pose, goal: Pose) -> bool {
    let half = (n / 2) as i32;
    let (gx, gy) = (goal.x - robot.x + half, goal.y - robot.y + half);
    gx < 0 || gy < 0 || gx >= n as i32 || gy >= n as i32
}

pub fn has_oscillation(trace: &[Pose]) -> bool {
    let mut visits: HashMap<Pose, usize> = HashMap::new();
    trace.iter().any(|&p| {
        let v = visits.entry(p).or_default();
        *v += 1;
        *v >= OSCILLATION_VISITS
    })
}

struct Running {
    pose: Pose,
    result: RolloutResult,
    done: bool,
}

/// Run all tasks in lockstep, querying the policy with up to `batch` live
/// rollouts at a time. Each rollout stops at the goal, on collision, or
/// after `2·expert_actions + 1` actions.
pub fn rollout_batch(
    policy: &dyn Policy,
    agent: &Agent,
    cost: &CostModel,
    tasks: &[RolloutTask],
    batch: usize,
) -> Result<Vec<RolloutResult>> {
    let units = cost.units();
    let mut out = Vec::with_capacity(tasks.len());
    for chunk in tasks.chunks(batch.max(1)) {
        let mut state: Vec<Running> = chunk
            .iter()
            .map(|t| Running {
                pose: t.start,
                done: agent.at_goal(t.start, t.goal),
                result: RolloutResult {
                    reached_goal: agent.at_goal(t.start, t.goal),
                    collided: false,
                    actions_taken: 0,
                    geometric_length: 0.0,
                    cost_units: 0,
                    success: false,
                    trace: vec![t.start],
                    actions: Vec::new(),
                    goal_clamped_flag: false,
                    oscillation: false,
                },
            })
            .collect();
        let mut step = 0;
        loop {
            let live: Vec<usize> = (0..chunk.len()).filter(|&i| !state[i].done).collect();
            if live.is_empty() {
                break;
            }
            let queries: Vec<Query> = live
                .iter()
                .map(|&i| Query { world: chunk[i].world, pose: state[i].pose, goal: chunk[i].goal, task: chunk[i].id, step })
                .collect();
            let actions = policy.act(&queries)?;
            for (&i, &a) in live.iter().zip(&actions) {
                let t = &chunk[i];
                let s = &mut state[i];
                s.result.goal_clamped_flag |= goal_outside_window(t.world.n(), s.pose, t.goal);
                s.result.actions_taken += 1;
                s.result.actions.push(a);
                match agent.transition(t.world, s.pose, a) {
                    None => {
                        s.result.collided = true;
                        s.done = true;
                    }
                    Some(next) => {
                        s.pose = next;
                        s.result.trace.push(next);
                        s.result.geometric_length += cost.geometric(a);
                        s.result.cost_units += units.action(a);
                        if agent.at_goal(next, t.goal) {
                            s.result.reached_goal = true;
                            s.done = true;
                        }
                    }
                }
                if s.result.actions_taken >= t.max_steps() {
                    s.done = true;
                }
            }
            step += 1;
        }
        for (t, s) in chunk.iter().zip(state) {
            let mut r = s.result;
            r.success = r.reached_goal && !r.collided && r.actions_taken <= 2 * t.expert_actions;
            r.oscillation = has_oscillation(&r.trace);
            out.push(r);
        }
    }
    Ok(out)
}

pub fn rollout(policy: &dyn Policy, agent: &Agent, cost: &CostModel, task: RolloutTask) -> Result<RolloutResult> {
    Ok(rollout_batch(policy, agent, cost, &[task], 1)?.remove(0))
}

/// Independent re-check of a successful rollout: replaying its actions from
/// the start never collides and ends at the goal.
pub fn replay_reaches_goal(agent: &Agent, world: &GridWorld, start: Pose, goal: Pose, actions: &[Action]) -> bool {
    let mut pose = start;
    for &a in actions {
        match agent.transition(world, pose, a) {
            Some(p) => pose = p,
            None => return false,
        }
    }
    agent.at_goal(pose, goal)
}
