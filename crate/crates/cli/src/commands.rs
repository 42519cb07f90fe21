use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use avin::env::io::{load_samples, load_worlds, save_samples, save_worlds, WorldSet};
use avin::env::{build_dataset, Agent, DatasetConfig, WorldKind};
use avin::expert::{expert_path, CostModel};
use avin::models::{Checkpoint, Model, ModelConfig, ModelInput, ModelKind};
use avin::optim::LrSchedule;
use avin::render::{palette_color, render_paths, render_values, Overlay, Trace, EXPERT};
use avin::train::{evaluate, EvalOptions, EvalSet, ModelPolicy, OraclePolicy, Policy, TrainConfig, TrainData};
use avin::Pose;

use crate::{EvalArgs, GenDatasetArgs, GenWorldsArgs, InputError, RenderArgs, TrainArgs};

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn agent(domain: avin::Domain, corner_cutting: bool) -> Agent {
    Agent { corner_cutting, ..Agent::new(domain) }
}

fn read_worlds(path: &Path) -> Result<WorldSet> {
    load_worlds(path).with_context(|| format!("reading worlds {}", path.display()))
}

pub fn gen_worlds(a: &GenWorldsArgs) -> Result<()> {
    let kind = if a.maze { WorldKind::Maze } else { WorldKind::RandomObstacles };
    let set = avin::env::gen_worlds(a.domain, a.n, a.count, kind, a.seed)?;
    save_worlds(&a.out, &set).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("wrote {} {} worlds of {}x{} to {}", set.worlds.len(), set.domain, set.n, set.n, a.out.display());
    Ok(())
}

pub fn gen_dataset(a: &GenDatasetArgs) -> Result<()> {
    let set = read_worlds(&a.worlds)?;
    let cfg = DatasetConfig { tasks_per_world: a.tasks, subpaths_per_task: a.subpaths, seed: a.seed, ..Default::default() };
    let ds = build_dataset(&set.worlds, &agent(set.domain, a.corner_cutting), &CostModel::default(), &cfg);
    save_samples(&a.out, set.domain, &ds.samples).with_context(|| format!("writing {}", a.out.display()))?;
    if !ds.skipped_worlds.is_empty() {
        eprintln!("warning: {} worlds skipped (no solvable tasks)", ds.skipped_worlds.len());
    }
    eprintln!("wrote {} samples from {} tasks to {}", ds.samples.len(), ds.tasks.len(), a.out.display());
    Ok(())
}

/// Model configuration from the flags, checked against the training worlds.
fn train_config(a: &TrainArgs, set: &WorldSet, seed: u64) -> Result<ModelConfig> {
    if let Some(d) = a.domain.filter(|&d| d != set.domain) {
        return Err(input_error(format!("--domain {d} but the worlds are {}", set.domain)));
    }
    if let Some(n) = a.n.filter(|&n| n != set.n) {
        return Err(input_error(format!("--n {n} but the worlds are {}x{}", set.n, set.n)));
    }
    model_config(a.model, a.levels, set.domain, set.n, seed)
}

fn model_config(kind: ModelKind, levels: Option<usize>, domain: avin::Domain, n: usize, seed: u64) -> Result<ModelConfig> {
    let cfg = match kind {
        ModelKind::Avin => ModelConfig::avin(domain, n, levels.unwrap_or(3))?,
        _ if levels.is_some() => return Err(input_error(format!("--levels applies to avin only, not {kind}"))),
        _ => ModelConfig::for_kind(kind, domain, n)?,
    };
    Ok(ModelConfig { seed, ..cfg })
}

/// `model.avc` with seed 3 becomes `model.seed3.avc`.
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    // Flag-only validation first, so bad combinations fail before any I/O.
    if let (Some(d), Some(n)) = (a.domain, a.n) {
        model_config(a.model, a.levels, d, n, a.seed)?;
    }
    if a.batch == 0 || a.cycle == 0 {
        return Err(input_error("--batch and --cycle must be positive"));
    }
    if a.seeds.is_empty() {
        return train_seed(a, a.seed, &a.out_ckpt, a.log.as_deref());
    }
    for &seed in &a.seeds {
        eprintln!("seed {seed}");
        let log = a.log.as_deref().map(|p| seeded_path(p, seed));
        train_seed(a, seed, &seeded_path(&a.out_ckpt, seed), log.as_deref())?;
    }
    Ok(())
}

fn train_seed(a: &TrainArgs, seed: u64, out_ckpt: &Path, log_path: Option<&Path>) -> Result<()> {
    let set = read_worlds(&a.worlds)?;
    let (domain, samples) = load_samples(&a.dataset).with_context(|| format!("reading {}", a.dataset.display()))?;
    if domain != set.domain {
        return Err(input_error(format!("dataset is {domain} but the worlds are {}", set.domain)));
    }
    let (model, schedule, first_epoch) = match &a.resume {
        Some(path) => {
            let ck = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            let schedule = LrSchedule::from_pairs(|k| ck.meta(k).map(str::to_string))
                .context("checkpoint lacks schedule state")?;
            let epoch = ck.meta("epoch").and_then(|v| v.parse().ok()).unwrap_or(0);
            let model = ck.to_model()?;
            if model.config.domain != set.domain || model.config.n != set.n {
                return Err(input_error("checkpoint does not match the training worlds"));
            }
            (model, schedule, epoch)
        }
        None => {
            let cfg = train_config(a, &set, seed)?;
            (Model::new(cfg)?, LrSchedule::new(a.lr, a.cycle, 1.5, 0.95), 0)
        }
    };
    let validation = match &a.val_worlds {
        Some(p) => {
            let v = read_worlds(p)?;
            if v.domain != set.domain || v.n != set.n {
                return Err(input_error("validation worlds differ in domain or size"));
            }
            Some(EvalSet::with_agent(v.worlds, agent(v.domain, a.corner_cutting), a.val_tasks, a.val_seed))
        }
        None => None,
    };
    let cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch, seed, schedule, ..TrainConfig::default() };
    let data = TrainData { domain, worlds: &set.worlds, samples: &samples };
    let mut log = match log_path {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => None,
    };
    let mut log_err = None;
    let outcome = avin::train::train(model, data, validation.as_ref(), &cfg, first_epoch, |line| {
        println!("{line}");
        if let Some(w) = log.as_mut() {
            if let Err(e) = writeln!(w, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e).context("writing the training log");
    }
    if let Some(mut w) = log {
        w.flush().context("writing the training log")?;
    }
    outcome.checkpoint().save(out_ckpt).with_context(|| format!("writing {}", out_ckpt.display()))?;
    match outcome.best_val_success {
        Some(v) => eprintln!("best epoch {} val_success {v}", outcome.best_epoch),
        None => eprintln!("trained {} epochs (no validation)", outcome.epochs_done),
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let set = read_worlds(&a.worlds)?;
    let model = match &a.ckpt {
        Some(p) => Some(Checkpoint::load(p).with_context(|| format!("reading checkpoint {}", p.display()))?.to_model()?),
        None => None,
    };
    let (policy, name): (Box<dyn Policy + '_>, String) = match &model {
        Some(m) => {
            if m.config.domain != set.domain || m.config.n != set.n {
                let (d, n) = (m.config.domain, m.config.n);
                return Err(input_error(format!(
                    "checkpoint plans {d} {n}x{n} but the worlds are {} {}x{}",
                    set.domain, set.n, set.n
                )));
            }
            (Box::new(ModelPolicy { model: m }), m.config.kind.name().to_string())
        }
        None => (
            Box::new(OraclePolicy { agent: agent(set.domain, a.corner_cutting), cost: CostModel::default() }),
            "oracle".to_string(),
        ),
    };
    let es = EvalSet::with_agent(set.worlds, agent(set.domain, a.corner_cutting), a.tasks, a.seed);
    let opts = EvalOptions { batch: a.batch.max(1), timing: a.compare_expert, ..EvalOptions::default() };
    let (report, rollouts) = evaluate(policy.as_ref(), &name, &es, opts)?;
    let text = report.to_text();
    match &a.report {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    if let Some(dir) = &a.trace_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, (rec, r)) in es.tasks.iter().zip(&rollouts).enumerate() {
            let t = Trace {
                domain: es.domain,
                label: name.clone(),
                world_index: rec.task.world_index,
                goal: rec.task.goal,
                poses: r.trace.clone(),
            };
            let p = dir.join(format!("task{k:05}.avt"));
            t.save(&p).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    let pd = report.path_difference.map_or("n/a".to_string(), |v| format!("{:.4}", v));
    eprintln!(
        "{name}: success {:.4} accuracy {:.4} path_difference {pd} ({} tasks, {} skipped worlds)",
        report.success_rate, report.accuracy, report.tasks, report.skipped_worlds
    );
    Ok(())
}

fn parse_pose(flag: &str, s: &str) -> Result<Pose> {
    s.parse().map_err(|e| input_error(format!("--{flag}: {e}")))
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let set = read_worlds(&a.world)?;
    let traces = a
        .traces
        .iter()
        .map(|p| {
            if !p.exists() {
                return Err(input_error(format!("trace file {} not found", p.display())));
            }
            Trace::load(p).with_context(|| format!("reading trace {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(t) = traces.iter().find(|t| t.domain != set.domain) {
        return Err(input_error(format!("trace {:?} is {} but the worlds are {}", t.label, t.domain, set.domain)));
    }
    let first = traces.first();
    let index = a.index.or(first.map(|t| t.world_index)).unwrap_or(0);
    let world = set
        .worlds
        .get(index)
        .ok_or_else(|| input_error(format!("world {index} not in a file of {}", set.worlds.len())))?;
    let start = match (&a.start, first.and_then(Trace::start)) {
        (Some(s), _) => parse_pose("start", s)?,
        (None, Some(p)) => p,
        (None, None) => return Err(input_error("--start is required without a trace")),
    };
    let goal = match (&a.goal, first) {
        (Some(s), _) => parse_pose("goal", s)?,
        (None, Some(t)) => t.goal,
        (None, None) => return Err(input_error("--goal is required without a trace")),
    };
    for (flag, p) in [("start", start), ("goal", goal)] {
        if !world.contains(p.x, p.y) {
            return Err(input_error(format!("--{flag} {p} lies outside the {0}x{0} world", world.n())));
        }
    }
    let agent = agent(set.domain, a.corner_cutting);
    let expert = if a.no_expert { None } else { expert_path(world, &agent, &CostModel::default(), start, goal) };
    if !a.no_expert && expert.is_none() {
        log::warn!("no expert path from {start} to {goal}");
    }
    let mut overlays = Vec::new();
    if let Some(p) = &expert {
        overlays.push(Overlay { poses: &p.poses, color: EXPERT });
    }
    for (i, t) in traces.iter().enumerate() {
        overlays.push(Overlay { poses: &t.poses, color: palette_color(i) });
    }
    render_paths(world, &overlays, start, goal, a.scale)
        .save_ppm(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    if let (Some(ck), Some(out)) = (&a.ckpt, &a.values_out) {
        let model = Checkpoint::load(ck).with_context(|| format!("reading checkpoint {}", ck.display()))?.to_model()?;
        if model.config.domain != set.domain || model.config.n != set.n {
            return Err(input_error("checkpoint does not match the world"));
        }
        let input = ModelInput::single(world, start, goal, set.domain)?;
        let (side, values) = model.value_map(&input);
        let scale = (a.scale * world.n() / side).max(1);
        render_values(&values, side, scale)?.save_ppm(out).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
