use std::time::Instant;

use super::policy::{Policy, Query};
use super::report::{EvalReport, TaskLine};
use super::rollout::{rollout_batch, RolloutResult, RolloutTask};
use crate::env::{sample_tasks, Agent, DatasetConfig, Domain, GridWorld, TaskRecord};
use crate::error::{Error, Result};
use crate::expert::{astar, CostModel, CostUnits};
use crate::rng::{derive_seed, rng};

/// Held-out worlds with their planning tasks and expert paths.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSet {
    pub domain: Domain,
    /// Kinematics for the expert paths and the rollouts.
    pub agent: Agent,
    pub worlds: Vec<GridWorld>,
    pub tasks: Vec<TaskRecord>,
    pub skipped_worlds: Vec<usize>,
}

impl EvalSet {
    /// Draw `tasks_per_world` tasks per world exactly as the dataset does.
    pub fn new(worlds: Vec<GridWorld>, domain: Domain, tasks_per_world: usize, seed: u64) -> Self {
        Self::with_agent(worlds, Agent::new(domain), tasks_per_world, seed)
    }

    pub fn with_agent(worlds: Vec<GridWorld>, agent: Agent, tasks_per_world: usize, seed: u64) -> Self {
        let cost = CostModel::default();
        let cfg = DatasetConfig { tasks_per_world, seed, ..DatasetConfig::default() };
        let mut tasks = Vec::new();
        let mut skipped_worlds = Vec::new();
        for (wi, world) in worlds.iter().enumerate() {
            let mut r = rng(derive_seed(seed, wi as u64));
            match sample_tasks(world, wi, &agent, &cost, &cfg, &mut r) {
                Some(t) => tasks.extend(t),
                None => skipped_worlds.push(wi),
            }
        }
        EvalSet { domain: agent.domain, agent, worlds, tasks, skipped_worlds }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// Live rollouts per policy call.
    pub batch: usize,
    pub threads: usize,
    /// Also time single-query planning of the policy against A*.
    pub timing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { batch: 64, threads: super::worker_count(), timing: false }
    }
}

struct Chunk {
    matches: Vec<usize>,
    rollouts: Vec<RolloutResult>,
}

fn run_chunk(policy: &dyn Policy, set: &EvalSet, first: usize, tasks: &[TaskRecord], batch: usize) -> Result<Chunk> {
    let agent = &set.agent;
    let cost = CostModel::default();
    // Accuracy along the expert path states.
    let mut owners = Vec::new();
    let mut queries = Vec::new();
    for (k, rec) in tasks.iter().enumerate() {
        for (i, &pose) in rec.path.poses[..rec.path.action_count].iter().enumerate() {
            owners.push((k, rec.path.actions[i]));
            queries.push(Query { world: &set.worlds[rec.task.world_index], pose, goal: rec.task.goal, task: first + k, step: i });
        }
    }
    let mut matches = vec![0; tasks.len()];
    for (qs, os) in queries.chunks(batch.max(1)).zip(owners.chunks(batch.max(1))) {
        for (a, &(k, want)) in policy.act(qs)?.into_iter().zip(os) {
            matches[k] += usize::from(a == want);
        }
    }
    let rollout_tasks: Vec<RolloutTask> = tasks
        .iter()
        .enumerate()
        .map(|(k, rec)| RolloutTask {
            world: &set.worlds[rec.task.world_index],
            start: rec.task.start,
            goal: rec.task.goal,
            expert_actions: rec.path.action_count,
            id: first + k,
        })
        .collect();
    let rollouts = rollout_batch(policy, agent, &cost, &rollout_tasks, batch)?;
    Ok(Chunk { matches, rollouts })
}

/// Accuracy along expert paths plus rollout success and path difference.
/// Results do not depend on `threads` or `batch`.
pub fn evaluate(
    policy: &dyn Policy,
    name: &str,
    set: &EvalSet,
    opts: EvalOptions,
) -> Result<(EvalReport, Vec<RolloutResult>)> {
    if policy.domain() != set.domain {
        return Err(Error::Config(format!("policy plans in {} but the worlds are {}", policy.domain(), set.domain)));
    }
    let threads = opts.threads.clamp(1, set.tasks.len().max(1));
    let per = set.tasks.len().div_ceil(threads).max(1);
    let chunks: Vec<Result<Chunk>> = std::thread::scope(|s| {
        let handles: Vec<_> = set
            .tasks
            .chunks(per)
            .enumerate()
            .map(|(c, tasks)| s.spawn(move || run_chunk(policy, set, c * per, tasks, opts.batch)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut matches = Vec::with_capacity(set.tasks.len());
    let mut rollouts = Vec::with_capacity(set.tasks.len());
    for c in chunks {
        let c = c?;
        matches.extend(c.matches);
        rollouts.extend(c.rollouts);
    }
    let timings = if opts.timing { Some(time_planners(policy, set)?) } else { None };
    let lines = set
        .tasks
        .iter()
        .zip(&matches)
        .zip(&rollouts)
        .enumerate()
        .map(|(k, ((rec, &m), r))| TaskLine {
            world: rec.task.world_index,
            start: rec.task.start,
            goal: rec.task.goal,
            success: r.success,
            acc_matches: m,
            acc_steps: rec.path.action_count,
            len: CostUnits::to_cells(r.cost_units),
            opt: CostUnits::to_cells(rec.path.cost_units),
            collided: r.collided,
            oscillation: r.oscillation,
            goal_clamped: r.goal_clamped_flag,
            timing: timings.as_ref().map(|t| t[k]),
        })
        .collect();
    let report = EvalReport::from_lines(name, set.domain, set.worlds.len(), set.skipped_worlds.len(), lines);
    Ok((report, rollouts))
}

/// Milliseconds for one policy decision and for one A* plan, per task.
fn time_planners(policy: &dyn Policy, set: &EvalSet) -> Result<Vec<(f64, f64)>> {
    let agent = &set.agent;
    let cost = CostModel::default();
    set.tasks
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            let world = &set.worlds[rec.task.world_index];
            let q = Query { world, pose: rec.task.start, goal: rec.task.goal, task: k, step: 0 };
            let t0 = Instant::now();
            policy.act(&[q])?;
            let model_ms = t0.elapsed().as_secs_f64() * 1e3;
            let t0 = Instant::now();
            astar(world, agent, &cost, rec.task.start, rec.task.goal);
            Ok((model_ms, t0.elapsed().as_secs_f64() * 1e3))
        })
        .collect()
}
