//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 5 and 6 train on a thousand worlds each and take hours on one
//! core. They run only when `AVIN_ACCEPTANCE_FULL` names them (`5`, `6`,
//! `5,6` or `all`); otherwise they print SKIP. Positional arguments restrict
//! the run to the given criterion numbers.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng as _;

use avin::autodiff::Graph;
use avin::env::io::{load_samples, load_worlds, read_samples, save_samples, save_worlds, write_samples, WorldSet};
use avin::env::{
    build_dataset, collision_footprint, gen_random_obstacles, gen_worlds, Action, Agent, DatasetConfig, Domain,
    Footprint, GridWorld, ObstacleConfig, Pose, Sample, WorldKind, MOVES, ORIENTATIONS,
};
use avin::expert::{astar, expert_label, expert_path, state_index, CostModel};
use avin::models::stages::{self, BellmanKernels};
use avin::models::{Checkpoint, Model, ModelConfig, ModelInput, ModelKind};
use avin::optim::LrSchedule;
use avin::rng::rng;
use avin::tensor::Tensor;
use avin::train::{
    evaluate, rollout, train, EvalOptions, EvalSet, ModelPolicy, RolloutTask, ScriptedPolicy, TrainConfig, TrainData,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64, what: &str) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s as f64, || format!("{what} took {elapsed:.1?}, limit {limit_s} s"))
}

// ---------------------------------------------------------------- 1

/// Value iteration over an explicit state table, zero value off the map.
fn tabular_vi(reward: &[f64], n: usize, iterations: usize) -> Vec<f64> {
    let n = n as i32;
    let mut v = vec![0.0; (n * n) as usize];
    for _ in 0..iterations {
        let mut next = v.clone();
        for y in 0..n {
            for x in 0..n {
                let s = (y * n + x) as usize;
                let mut best = f64::NEG_INFINITY;
                for &(dx, dy) in &MOVES {
                    let (nx, ny) = (x + dx, y + dy);
                    let succ = if (0..n).contains(&nx) && (0..n).contains(&ny) { v[(ny * n + nx) as usize] } else { 0.0 };
                    best = best.max(reward[s] + succ);
                }
                next[s] = best;
            }
        }
        v = next;
    }
    v
}

/// The same recursion through the convolutional module: the reward kernel
/// copies the center tap into every action channel, the value kernel reads
/// the successor cell of each move.
fn network_vi(reward: &[f64], n: usize, iterations: usize) -> Vec<f64> {
    let mut rk = Tensor::zeros(vec![8, 1, 3, 3]);
    let mut vk = Tensor::zeros(vec![8, 1, 3, 3]);
    for (a, &(dx, dy)) in MOVES.iter().enumerate() {
        rk.set(&[a, 0, 1, 1], 1.0);
        vk.set(&[a, 0, (1 + dy) as usize, (1 + dx) as usize], 1.0);
    }
    let mut g = Graph::<f64>::new();
    let r = g.input(Tensor::new(vec![1, 1, n, n], reward.to_vec()));
    let kernels = BellmanKernels {
        reward_kernel: g.input(rk),
        reward_bias: g.input(Tensor::zeros(vec![8])),
        value_kernel: g.input(vk),
    };
    let init = stages::zero_values(&mut g, r);
    let v = stages::value_iteration(&mut g, r, None, init, kernels, iterations);
    g.value(v).data().to_vec()
}

fn c1_vi_oracle() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let world = gen_random_obstacles(8, 100 + i, &ObstacleConfig::for_size(8)).map_err(|e| e.to_string())?;
        let free: Vec<usize> = (0..64).filter(|&c| world.occupancy()[c] == 0).collect();
        let goal = free[rng(i).gen_range(0..free.len())];
        let reward: Vec<f64> = (0..64)
            .map(|c| if c == goal { 10.0 } else if world.occupancy()[c] != 0 { -50.0 } else { -1.0 })
            .collect();
        let want = tabular_vi(&reward, 8, 20);
        let got = network_vi(&reward, 8, 20);
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let elapsed = t.elapsed();
    check(worst < 1e-5, || format!("max |dV| = {worst:e}"))?;
    within(elapsed, 10, "50 worlds")?;
    Ok(format!("50 worlds, max |dV| = {worst:e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 2

fn grad_input(domain: Domain, seed: u64) -> (ModelInput<f64>, Vec<usize>) {
    let agent = Agent::new(domain);
    let cfg = match domain {
        Domain::Grid2d => ObstacleConfig::for_size(8),
        Domain::Locomotion3d => ObstacleConfig { count: (0, 1), size: (1, 2), clear_radius: 1, cell_size_m: 0.2 },
    };
    let mut r = rng(seed);
    let mut input = ModelInput::new(8);
    let mut targets = Vec::new();
    while input.batch < 3 {
        let world = gen_random_obstacles(8, r.gen(), &cfg).unwrap();
        let mut pose = || {
            let t = if domain == Domain::Grid2d { 0 } else { r.gen_range(0..ORIENTATIONS) };
            Pose::new(r.gen_range(0..8), r.gen_range(0..8), t)
        };
        let (robot, goal) = (pose(), pose());
        if robot == goal || !agent.pose_valid(&world, robot) || !agent.pose_valid(&world, goal) {
            continue;
        }
        if let Some(a) = expert_label(&world, &agent, &CostModel::default(), robot, goal) {
            input.push(&world, robot, goal, domain).unwrap();
            targets.push(a.id());
        }
    }
    (input, targets)
}

fn c2_gradients() -> Outcome {
    let t = Instant::now();
    let mut notes = Vec::new();
    for (domain, seed) in [(Domain::Grid2d, 21), (Domain::Locomotion3d, 22)] {
        let cfg = ModelConfig { seed, ..ModelConfig::avin(domain, 8, 2).map_err(|e| e.to_string())? };
        let mut model = Model::<f64>::new(cfg).map_err(|e| e.to_string())?;
        // Zero-initialized biases leave exact ties in the max over actions,
        // where the loss is not differentiable.
        model.randomize_biases(0.5, seed);
        let (input, targets) = grad_input(domain, seed);
        let weights: Vec<f64> = (0..domain.action_count()).map(|a| 0.5 + 0.1 * a as f64).collect();
        let entries = model.gradient_check(&input, &targets, &weights, 10, 1e-5, seed);
        let worst = entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).ok_or("no parameters")?;
        check(worst.rel_error < 1e-3, || format!("{domain}: {worst:?}"))?;
        notes.push(format!("{domain} {} coords max rel {:.1e}", entries.len(), worst.rel_error));
    }
    within(t.elapsed(), 300, "gradient checks")?;
    Ok(format!("{}, {:.1?}", notes.join(", "), t.elapsed()))
}

// ---------------------------------------------------------------- 3

/// Single-source uniform-cost search over the agent's transitions.
fn dijkstra(world: &GridWorld, agent: &Agent, start: Pose) -> Vec<Option<u64>> {
    let units = CostModel::default().units();
    let planes = if agent.domain == Domain::Grid2d { 1 } else { ORIENTATIONS };
    let n = world.n();
    let mut dist = vec![None; n * n * planes];
    let mut heap = BinaryHeap::new();
    dist[state_index(start, n)] = Some(0);
    heap.push(Reverse((0u64, start.theta, start.y, start.x)));
    while let Some(Reverse((d, theta, y, x))) = heap.pop() {
        let p = Pose::new(x, y, theta);
        if dist[state_index(p, n)] != Some(d) {
            continue;
        }
        for a in Action::all(agent.domain) {
            if let Some(q) = agent.transition(world, p, a) {
                let nd = d + units.action(a);
                let slot = &mut dist[state_index(q, n)];
                if slot.is_none_or(|old| nd < old) {
                    *slot = Some(nd);
                    heap.push(Reverse((nd, q.theta, q.y, q.x)));
                }
            }
        }
    }
    dist
}

/// Replays the path's actions under the collision rules and re-prices them.
fn replay_cost(world: &GridWorld, agent: &Agent, path: &avin::Path) -> Option<u64> {
    let units = CostModel::default().units();
    let mut p = path.start();
    let mut total = 0;
    for (i, &a) in path.actions.iter().enumerate() {
        p = agent.transition(world, p, a)?;
        if p != path.poses[i + 1] {
            return None;
        }
        total += units.action(a);
    }
    Some(total)
}

fn compare_expert(world: &GridWorld, agent: &Agent, start: Pose, goals: &[Pose]) -> Result<usize, String> {
    let dist = dijkstra(world, agent, start);
    let cost = CostModel::default();
    let mut solved = 0;
    for &goal in goals {
        let want = dist[state_index(goal, world.n())];
        let got = astar(world, agent, &cost, start, goal);
        match (&got, want) {
            (None, None) => {}
            (Some(path), Some(d)) => {
                check(path.cost_units == d, || format!("{start} -> {goal}: A* {} vs Dijkstra {d}", path.cost_units))?;
                check(path.goal() == goal && replay_cost(world, agent, path) == Some(d), || {
                    format!("{start} -> {goal}: path does not replay to its cost")
                })?;
                solved += 1;
            }
            _ => return Err(format!("{start} -> {goal}: A* {:?} vs Dijkstra {want:?}", got.map(|p| p.cost_units))),
        }
    }
    Ok(solved)
}

fn c3_expert_optimality() -> Outcome {
    let t = Instant::now();
    let agent = Agent::new(Domain::Grid2d);
    let mut solved2 = 0;
    for i in 0..200u64 {
        let world = gen_random_obstacles(16, 3000 + i, &ObstacleConfig::for_size(16)).map_err(|e| e.to_string())?;
        let (cx, cy) = world.center();
        let goals: Vec<Pose> =
            (0..16).flat_map(|y| (0..16).map(move |x| Pose::cell(x, y))).filter(|&p| agent.pose_valid(&world, p)).collect();
        solved2 += compare_expert(&world, &agent, Pose::cell(cx, cy), &goals)?;
    }
    let agent = Agent::new(Domain::Locomotion3d);
    let mut solved3 = 0;
    for i in 0..50u64 {
        let world = gen_random_obstacles(16, 4000 + i, &ObstacleConfig::for_locomotion(16)).map_err(|e| e.to_string())?;
        let (cx, cy) = world.center();
        let start = (0..ORIENTATIONS)
            .map(|th| Pose::new(cx, cy, th))
            .find(|&p| agent.pose_valid(&world, p))
            .ok_or("no valid start pose")?;
        let mut r = rng(i);
        let mut goals = Vec::new();
        while goals.len() < 20 {
            let g = Pose::new(r.gen_range(0..16), r.gen_range(0..16), r.gen_range(0..ORIENTATIONS));
            if agent.pose_valid(&world, g) {
                goals.push(g);
            }
        }
        solved3 += compare_expert(&world, &agent, start, &goals)?;
    }
    let elapsed = t.elapsed();
    within(elapsed, 120, "expert comparison")?;
    Ok(format!("2D {solved2} paths on 200 worlds, 3D {solved3} paths on 50 worlds, all exact, {elapsed:.1?}"))
}

// ---------------------------------------------------------------- 4

fn c4_schedule() -> Outcome {
    let mut s = LrSchedule::default();
    let mut lens = Vec::new();
    let mut bases = Vec::new();
    for _ in 0..3 {
        lens.push(s.cycle_len);
        bases.push(s.cycle_base_lr());
        check(s.lr() == s.cycle_base_lr(), || format!("cycle starts at lr {} not {}", s.lr(), s.cycle_base_lr()))?;
        let len = s.cycle_len;
        for e in 1..=len {
            let ended = s.advance_epoch();
            check(ended == (e == len), || format!("cycle of {len} epochs ended after {e}"))?;
        }
    }
    check(lens == [48, 72, 108], || format!("cycle lengths {lens:?}"))?;
    check(bases == [0.001, 0.00095, 0.0009025], || format!("cycle base rates {bases:?}"))?;
    Ok(format!("lengths {lens:?}, base rates {bases:?}"))
}

// ---------------------------------------------------------------- 5, 6

fn progress(tag: &str) -> impl FnMut(&avin::train::LogLine) + '_ {
    move |l| eprintln!("[{tag}] {l}")
}

struct Study {
    train: WorldSet,
    samples: Vec<Sample>,
    val: EvalSet,
    test: EvalSet,
}

fn study(domain: Domain, n: usize, kind: WorldKind, subpaths: usize, seed: u64) -> Result<Study, String> {
    let worlds = |count, s| gen_worlds(domain, n, count, kind, s).map_err(|e| e.to_string());
    let train = worlds(1000, seed)?;
    let cfg = DatasetConfig { tasks_per_world: 7, subpaths_per_task: subpaths, seed, ..DatasetConfig::default() };
    let ds = build_dataset(&train.worlds, &Agent::new(domain), &CostModel::default(), &cfg);
    let val = EvalSet::new(worlds(100, seed + 1)?.worlds, domain, 7, seed + 1);
    let test = EvalSet::new(worlds(100, seed + 2)?.worlds, domain, 7, seed + 2);
    eprintln!("[data] {} samples from {} tasks", ds.samples.len(), ds.tasks.len());
    Ok(Study { train, samples: ds.samples, val, test })
}

fn learn(s: &Study, cfg: ModelConfig, epochs: usize, schedule: LrSchedule, tag: &str) -> Result<(f64, f64), String> {
    let model = Model::new(cfg).map_err(|e| e.to_string())?;
    let data = TrainData { domain: s.train.domain, worlds: &s.train.worlds, samples: &s.samples };
    let tc = TrainConfig { epochs, batch_size: 128, seed: 7, schedule, ..TrainConfig::default() };
    let out = train(model, data, Some(&s.val), &tc, 0, progress(tag)).map_err(|e| e.to_string())?;
    let policy = ModelPolicy { model: &out.best };
    let (report, _) =
        evaluate(&policy, tag, &s.test, EvalOptions::default()).map_err(|e| e.to_string())?;
    eprintln!("[{tag}] test: success {} accuracy {} path_difference {:?}", report.success_rate, report.accuracy, report.path_difference);
    Ok((report.success_rate, out.best_val_success.unwrap_or(f64::NAN)))
}

fn c5_learning_2d() -> Outcome {
    let t = Instant::now();
    let s = study(Domain::Grid2d, 16, WorldKind::RandomObstacles, 1, 500)?;
    let cfg = ModelConfig { seed: 5, ..ModelConfig::avin(Domain::Grid2d, 16, 3).map_err(|e| e.to_string())? };
    let (success, val) = learn(&s, cfg, 120, LrSchedule::default(), "avin16")?;
    let msg = format!("test success {success:.4} (best val {val:.4}), {:.0?}", t.elapsed());
    check(success >= 0.85, || msg.clone())?;
    Ok(msg)
}

/// Epochs per model on the 32×32 mazes; two trainings must fit the run budget.
const MAZE_EPOCHS: usize = 6;

fn c6_maze_ordering() -> Outcome {
    let t = Instant::now();
    let s = study(Domain::Grid2d, 32, WorldKind::Maze, 0, 600)?;
    let schedule = LrSchedule::new(0.001, MAZE_EPOCHS, 1.5, 0.95);
    let avin = ModelConfig { seed: 6, ..ModelConfig::avin(Domain::Grid2d, 32, 3).map_err(|e| e.to_string())? };
    let hvin = ModelConfig { seed: 6, ..ModelConfig::hvin(32).map_err(|e| e.to_string())? };
    let (a, _) = learn(&s, avin, MAZE_EPOCHS, schedule.clone(), "avin32")?;
    let (h, _) = learn(&s, hvin, MAZE_EPOCHS, schedule, "hvin32")?;
    let msg = format!("AVIN {a:.4} vs HVIN {h:.4} ({MAZE_EPOCHS} epochs each), {:.0?}", t.elapsed());
    check(a - h >= 0.10, || msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 7

fn count_optimal_paths(world: &GridWorld, agent: &Agent, start: Pose, goal: Pose) -> (Option<u64>, u64) {
    let dist = dijkstra(world, agent, start);
    let units = CostModel::default().units();
    let n = world.n();
    let mut order: Vec<Pose> = (0..ORIENTATIONS)
        .flat_map(|t| (0..n as i32).flat_map(move |y| (0..n as i32).map(move |x| Pose::new(x, y, t))))
        .filter(|&p| dist[state_index(p, n)].is_some())
        .collect();
    order.sort_by_key(|&p| dist[state_index(p, n)]);
    let mut count = vec![0u64; dist.len()];
    count[state_index(start, n)] = 1;
    for p in order {
        let (dp, cp) = (dist[state_index(p, n)].unwrap(), count[state_index(p, n)]);
        for a in Action::all(agent.domain) {
            if let Some(q) = agent.transition(world, p, a) {
                if dist[state_index(q, n)] == Some(dp + units.action(a)) {
                    count[state_index(q, n)] += cp;
                }
            }
        }
    }
    (dist[state_index(goal, n)], count[state_index(goal, n)])
}

fn c7_footprint() -> Outcome {
    let t = Instant::now();
    let mut world = GridWorld::free(16, 0.2).map_err(|e| e.to_string())?;
    world.set(8, 8, true);
    let over = Pose::new(8, 8, 0);
    let fp = Footprint::default();
    let wheels = fp.wheel_cells(0, ORIENTATIONS, 0.2);
    check(wheels.iter().all(|&(dx, dy)| dx.abs() == 2 && dy.abs() == 2), || format!("wheels at {wheels:?}"))?;
    check(!collision_footprint(&world, over, &fp), || "pose over the obstacle collides".into())?;
    let agent = Agent::new(Domain::Locomotion3d);
    let (start, goal) = (Pose::new(3, 8, 0), Pose::new(12, 8, 0));
    let path = expert_path(&world, &agent, &CostModel::default(), start, goal).ok_or("no 3D expert path")?;
    let straight = CostModel::default().units().straight;
    check(path.cost_units == 9 * straight, || format!("3D path cost {}", path.cost()))?;
    check(path.poses.iter().any(|p| (p.x, p.y) == (8, 8)), || "3D path avoids the obstacle cell".into())?;
    let (best, count) = count_optimal_paths(&world, &agent, start, goal);
    check(best == Some(path.cost_units) && count == 1, || format!("optimum {best:?} reached by {count} paths"))?;
    let point = Agent::new(Domain::Grid2d);
    let detour = expert_path(&world, &point, &CostModel::default(), Pose::cell(3, 8), Pose::cell(12, 8)).ok_or("no 2D path")?;
    check(detour.cost_units > path.cost_units, || format!("point agent path cost {}", detour.cost()))?;
    check(t.elapsed() < Duration::from_secs(1), || format!("took {:.2?}", t.elapsed()))?;
    Ok(format!("unique optimum of cost {} straddles (8,8); point agent detours at {:.4}", path.cost(), detour.cost()))
}

// ---------------------------------------------------------------- 8

fn c8_success_budget() -> Outcome {
    let world = GridWorld::free(8, 1.0).map_err(|e| e.to_string())?;
    let agent = Agent::new(Domain::Grid2d);
    let cost = CostModel::default();
    let (n, ne, e, se, sw, w) = (Action(0), Action(1), Action(2), Action(3), Action(5), Action(6));
    let start = Pose::cell(4, 4);
    let cases = [
        (Pose::cell(5, 4), vec![n, se], true),
        (Pose::cell(5, 4), vec![w, ne, se], false),
        (Pose::cell(6, 4), vec![w, e, e, e], true),
        (Pose::cell(6, 4), vec![n, e, e, e, sw], false),
    ];
    let mut notes = Vec::new();
    for (goal, actions, want) in cases {
        let opt = expert_path(&world, &agent, &cost, start, goal).ok_or("no expert path")?.action_count;
        let count = actions.len();
        let policy = ScriptedPolicy { domain: Domain::Grid2d, actions };
        let task = RolloutTask { world: &world, start, goal, expert_actions: opt, id: 0 };
        let r = rollout(&policy, &agent, &cost, task).map_err(|e| e.to_string())?;
        check(r.reached_goal && !r.collided && r.actions_taken == count, || format!("{count} actions: {r:?}"))?;
        check(r.success == want, || format!("opt {opt}, {count} actions scored success={}", r.success))?;
        notes.push(format!("opt {opt}: {count} -> {}", if want { "success" } else { "failure" }));
    }
    Ok(notes.join(", "))
}

// ---------------------------------------------------------------- 9

fn audit(cfg: ModelConfig) -> Result<String, String> {
    let model = Model::<f32>::new(cfg.clone()).map_err(|e| e.to_string())?;
    let world = GridWorld::free(cfg.n, cfg.cell_size_m as f32).map_err(|e| e.to_string())?;
    let c = (cfg.n / 2) as i32;
    let theta = if cfg.is_3d() { 3 } else { 0 };
    let input = ModelInput::single(&world, Pose::new(c, c, theta), Pose::new(1, 1, theta), cfg.domain)
        .map_err(|e| e.to_string())?;
    let mut g = Graph::new();
    let bound = model.params.bind_constant(&mut g);
    let f = model.forward(&mut g, &bound, &input);
    for l in 0..cfg.levels {
        let side = match cfg.kind {
            ModelKind::Avin => cfg.n >> (cfg.levels - 1),
            ModelKind::Hvin | ModelKind::Vin => cfg.n >> l,
        };
        let planes = if cfg.is_3d() { vec![cfg.orientations[l]] } else { vec![] };
        let want_r = [vec![1, cfg.features[l]], planes.clone(), vec![side, side]].concat();
        let want_v = [vec![1, 1], planes, vec![side, side]].concat();
        check(g.shape(f.rewards[l]) == want_r, || format!("level {l} reward {:?} != {want_r:?}", g.shape(f.rewards[l])))?;
        check(g.shape(f.values[l]) == want_v, || format!("level {l} value {:?} != {want_v:?}", g.shape(f.values[l])))?;
    }
    check(g.shape(f.logits) == [1, cfg.actions()], || format!("logits {:?}", g.shape(f.logits)))?;
    let levels: Vec<String> = (0..cfg.levels)
        .map(|l| format!("r{:?} v{:?}", g.shape(f.rewards[l]), g.shape(f.values[l])))
        .collect();
    Ok(format!("{} {} N={} L={}: {} logits {:?}", cfg.kind, cfg.domain, cfg.n, cfg.levels, levels.join(" "), g.shape(f.logits)))
}

fn c9_shapes() -> Outcome {
    let t = Instant::now();
    let mut lines = Vec::new();
    for n in [16, 32, 64, 128] {
        for domain in [Domain::Grid2d, Domain::Locomotion3d] {
            for levels in [3, 4] {
                let valid = levels == 3 || (n == 128 && domain == Domain::Grid2d);
                match ModelConfig::avin(domain, n, levels) {
                    Ok(cfg) if valid => lines.push(audit(cfg)?),
                    Ok(_) => return Err(format!("{domain} N={n} L={levels} accepted")),
                    Err(_) if valid => return Err(format!("{domain} N={n} L={levels} rejected")),
                    Err(_) => {}
                }
            }
        }
        lines.push(audit(ModelConfig::hvin(n).map_err(|e| e.to_string())?)?);
        lines.push(audit(ModelConfig::vin(n).map_err(|e| e.to_string())?)?);
    }
    let side16 = ModelConfig::avin(Domain::Grid2d, 16, 3).map_err(|e| e.to_string())?.side(0);
    check(side16 == 4, || format!("N=16 level side {side16}"))?;
    within(t.elapsed(), 60, "shape audit")?;
    Ok(format!("{} configurations, level side 4 at N=16, {:.1?}\n{}", lines.len(), t.elapsed(), lines.join("\n    ")))
}

// ---------------------------------------------------------------- 10

struct RunFiles {
    worlds: Vec<u8>,
    samples: Vec<u8>,
    checkpoint: Vec<u8>,
    report: String,
}

fn end_to_end(threads: usize) -> Result<RunFiles, String> {
    let e = |err: avin::Error| err.to_string();
    let dir = tempfile::tempdir().map_err(|err| err.to_string())?;
    let train_worlds = gen_worlds(Domain::Grid2d, 16, 12, WorldKind::RandomObstacles, 10).map_err(e)?;
    let val_worlds = gen_worlds(Domain::Grid2d, 16, 4, WorldKind::RandomObstacles, 11).map_err(e)?;
    let test_worlds = gen_worlds(Domain::Grid2d, 16, 4, WorldKind::RandomObstacles, 12).map_err(e)?;
    let cfg = DatasetConfig { tasks_per_world: 7, subpaths_per_task: 1, seed: 10, ..DatasetConfig::default() };
    let ds = build_dataset(&train_worlds.worlds, &Agent::new(Domain::Grid2d), &CostModel::default(), &cfg);

    // Everything downstream reads the files back.
    let (wp, sp, cp) = (dir.path().join("w.avw"), dir.path().join("s.avs"), dir.path().join("m.avc"));
    save_worlds(&wp, &train_worlds).map_err(e)?;
    save_samples(&sp, Domain::Grid2d, &ds.samples).map_err(e)?;
    let worlds = load_worlds(&wp).map_err(e)?;
    let (domain, samples) = load_samples(&sp).map_err(e)?;
    check(worlds == train_worlds && samples == ds.samples, || "files did not round-trip".into())?;

    let model = Model::new(ModelConfig { seed: 10, ..ModelConfig::avin(Domain::Grid2d, 16, 3).map_err(e)? }).map_err(e)?;
    let eval = EvalOptions { threads, ..EvalOptions::default() };
    let tc = TrainConfig {
        epochs: 5,
        batch_size: 32,
        seed: 10,
        schedule: LrSchedule::new(0.001, 2, 1.5, 0.95),
        eval,
        ..TrainConfig::default()
    };
    let val = EvalSet::new(val_worlds.worlds, Domain::Grid2d, 7, 11);
    let data = TrainData { domain, worlds: &worlds.worlds, samples: &samples };
    let out = train(model, data, Some(&val), &tc, 0, |_| {}).map_err(e)?;
    out.checkpoint().save(&cp).map_err(e)?;
    let ck = Checkpoint::load(&cp).map_err(e)?;
    let best = ck.to_model().map_err(e)?;
    let test = EvalSet::new(test_worlds.worlds, Domain::Grid2d, 7, 12);
    let (report, _) = evaluate(&ModelPolicy { model: &best }, "avin", &test, eval).map_err(e)?;
    Ok(RunFiles {
        worlds: std::fs::read(&wp).map_err(|err| err.to_string())?,
        samples: std::fs::read(&sp).map_err(|err| err.to_string())?,
        checkpoint: std::fs::read(&cp).map_err(|err| err.to_string())?,
        report: report.to_text(),
    })
}

fn c10_determinism() -> Outcome {
    let a = end_to_end(1)?;
    let b = end_to_end(3)?;
    check(a.worlds == b.worlds && a.samples == b.samples, || "generated files differ between runs".into())?;
    check(a.checkpoint == b.checkpoint, || "checkpoints differ between runs".into())?;
    check(a.report == b.report, || format!("reports differ:\n{}\n{}", a.report, b.report))?;

    let set = WorldSet::from_bytes(&a.worlds).map_err(|e| e.to_string())?;
    check(set.to_bytes() == a.worlds, || "world file does not re-serialize bit-exactly".into())?;
    let (domain, samples) = read_samples(a.samples.as_slice()).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    write_samples(&mut again, domain, &samples).map_err(|e| e.to_string())?;
    check(again == a.samples, || "sample file does not re-serialize bit-exactly".into())?;
    let ck = Checkpoint::from_bytes(&a.checkpoint).map_err(|e| e.to_string())?;
    check(ck.to_bytes() == a.checkpoint, || "checkpoint does not re-serialize bit-exactly".into())?;
    let model = ck.to_model().map_err(|e| e.to_string())?;
    let reloaded = Checkpoint::from_model(&model).to_model().map_err(|e| e.to_string())?;
    let bits = |m: &Model<f32>| -> Vec<u32> { m.params.iter().flat_map(|p| p.value.data().iter().map(|v| v.to_bits())).collect() };
    check(reloaded.config == model.config && bits(&reloaded) == bits(&model), || {
        "model parameters change through a checkpoint".into()
    })?;
    Ok(format!(
        "checkpoint {} bytes and report identical across runs; world/sample/checkpoint files round-trip",
        a.checkpoint.len()
    ))
}

// ----------------------------------------------------------------

struct Criterion {
    id: usize,
    name: &'static str,
    run: fn() -> Outcome,
    long: bool,
}

const CRITERIA: [Criterion; 10] = [
    Criterion { id: 1, name: "tabular value iteration oracle", run: c1_vi_oracle, long: false },
    Criterion { id: 2, name: "gradient integrity", run: c2_gradients, long: false },
    Criterion { id: 3, name: "expert optimality", run: c3_expert_optimality, long: false },
    Criterion { id: 4, name: "learning-rate schedule", run: c4_schedule, long: false },
    Criterion { id: 5, name: "2D learning at 16x16", run: c5_learning_2d, long: true },
    Criterion { id: 6, name: "AVIN over HVIN on 32x32 mazes", run: c6_maze_ordering, long: true },
    Criterion { id: 7, name: "footprint semantics", run: c7_footprint, long: false },
    Criterion { id: 8, name: "success budget", run: c8_success_budget, long: false },
    Criterion { id: 9, name: "shape audit", run: c9_shapes, long: false },
    Criterion { id: 10, name: "determinism and serialization", run: c10_determinism, long: false },
];

fn long_enabled(id: usize) -> bool {
    std::env::var("AVIN_ACCEPTANCE_FULL").is_ok_and(|v| {
        v.split(',').any(|s| s.trim() == "all" || s.trim() == "1" || s.trim().parse() == Ok(id))
    })
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        if c.long && !long_enabled(c.id) {
            println!("criterion {:>2} {}: SKIP (hours of training; set AVIN_ACCEPTANCE_FULL={})", c.id, c.name, c.id);
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (verdict, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        // Extra detail lines go below the verdict line.
        let mut lines = detail.lines();
        println!("criterion {:>2} {}: {verdict} ({})", c.id, c.name, lines.next().unwrap_or(""));
        for l in lines {
            println!("    {l}");
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
