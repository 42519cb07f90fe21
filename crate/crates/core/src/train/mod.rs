//! Imitation training, rollouts and evaluation metrics.

mod eval;
mod policy;
mod report;
mod rollout;

pub use eval::{evaluate, EvalOptions, EvalSet};
pub use policy::{ModelPolicy, OraclePolicy, Policy, Query, RandomPolicy, ScriptedPolicy};
pub use report::{EvalReport, TaskLine};
pub use rollout::{
    goal_outside_window, has_oscillation, replay_reaches_goal, rollout, rollout_batch, RolloutResult, RolloutTask,
    OSCILLATION_VISITS,
};

use std::fmt;

use rand::seq::SliceRandom;

use crate::autodiff::Graph;
use crate::env::{action_frequencies, inverse_frequency_weights, Domain, GridWorld, Sample};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Model, ModelInput};
use crate::optim::{LrSchedule, RmsProp};
use crate::rng::{derive_seed, rng};

/// Worker threads: `AVIN_THREADS` when set, else the available cores.
pub fn worker_count() -> usize {
    std::env::var("AVIN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: LrSchedule,
    pub rmsprop: RmsProp,
    /// Options for the validation rollouts.
    pub eval: EvalOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 48,
            batch_size: 128,
            seed: 0,
            schedule: LrSchedule::default(),
            rmsprop: RmsProp::default(),
            eval: EvalOptions::default(),
        }
    }
}

/// One training log entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LogLine {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_success: Option<f64>,
}

impl fmt::Display for LogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {} lr {} train_loss {}", self.epoch, self.lr, self.train_loss)?;
        if let Some(v) = self.val_success {
            write!(f, " val_success {v}")?;
        }
        Ok(())
    }
}

/// Training data: worlds plus expert samples referring to them by index.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub domain: Domain,
    pub worlds: &'a [GridWorld],
    pub samples: &'a [Sample],
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot with the best validation success (the last one without
    /// validation).
    pub best: Model<f32>,
    pub best_epoch: usize,
    pub best_val_success: Option<f64>,
    pub last: Model<f32>,
    pub log: Vec<LogLine>,
    /// Schedule state after the last epoch.
    pub schedule: LrSchedule,
    /// Total epochs trained, including those of a resumed run.
    pub epochs_done: usize,
}

impl TrainOutcome {
    /// Best snapshot with optimizer and schedule state for resuming.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::with_optimizer_state(&self.best);
        ck.set_meta("epoch", self.epochs_done);
        ck.set_meta("best_epoch", self.best_epoch);
        if let Some(v) = self.best_val_success {
            ck.set_meta("best_val_success", v);
        }
        for (k, v) in self.schedule.to_pairs() {
            ck.set_meta(&k, v);
        }
        ck
    }
}

/// Inputs for the samples at `indices`.
pub fn batch_input(data: &TrainData, n: usize, indices: &[usize]) -> Result<(ModelInput<f32>, Vec<usize>)> {
    let mut input = ModelInput::new(n);
    let mut targets = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &data.samples[i];
        let world = data.worlds.get(s.world_index).ok_or_else(|| {
            Error::Config(format!("sample {i} refers to world {} of {}", s.world_index, data.worlds.len()))
        })?;
        input.push(world, s.current, s.goal, data.domain)?;
        targets.push(s.expert_action.id());
    }
    Ok((input, targets))
}

/// Abort with a dump of the offending batch when the loss is not finite.
pub fn check_loss(loss: f64, epoch: usize, batch: usize, data: &TrainData, indices: &[usize]) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    let mut dump = format!("loss {loss} at epoch {epoch} batch {batch}; samples:");
    for &i in indices {
        let s = &data.samples[i];
        dump.push_str(&format!(
            "\n  #{i} world {} pose {} goal {} action {}",
            s.world_index,
            s.current,
            s.goal,
            s.expert_action.id()
        ));
    }
    Err(Error::NonFinite(dump))
}

/// Minibatch RMSprop on the weighted cross-entropy, one schedule step per
/// epoch. `first_epoch` counts epochs already trained (for resumed runs);
/// `on_line` sees every log line as it is produced.
pub fn train(
    model: Model<f32>,
    data: TrainData,
    validation: Option<&EvalSet>,
    cfg: &TrainConfig,
    first_epoch: usize,
    mut on_line: impl FnMut(&LogLine),
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let c = model.config.clone();
    if data.domain != c.domain {
        return Err(Error::Config(format!("{} dataset for a {} model", data.domain, c.domain)));
    }
    if let Some(w) = data.worlds.iter().find(|w| w.n() != c.n) {
        return Err(Error::Config(format!("{}x{0} world for a model with N={}", w.n(), c.n)));
    }
    if data.samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let weights: Vec<f32> = inverse_frequency_weights(&action_frequencies(data.samples, c.actions()))
        .into_iter()
        .map(|w| w as f32)
        .collect();
    let mut model = model;
    let mut schedule = cfg.schedule.clone();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    for e in first_epoch..first_epoch + cfg.epochs {
        let lr = schedule.lr();
        order.sort_unstable();
        order.shuffle(&mut rng(derive_seed(cfg.seed, e as u64)));
        let mut total = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (input, targets) = batch_input(&data, c.n, idx)?;
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let f = model.forward(&mut g, &bound, &input);
            let l = g.weighted_cross_entropy(f.logits, &targets, &weights);
            let loss = g.value(l).data()[0] as f64;
            check_loss(loss, e + 1, bi, &data, idx)?;
            total += loss * idx.len() as f64;
            g.backward(l)?;
            model.params.accumulate_grads(&g, &bound);
            cfg.rmsprop.step(&mut model.params, lr);
        }
        let cycle_end = schedule.advance_epoch();
        let last = e + 1 == first_epoch + cfg.epochs;
        let val_success = match validation {
            Some(set) if cycle_end || last => {
                let (report, _) = evaluate(&ModelPolicy { model: &model }, c.kind.name(), set, cfg.eval)?;
                Some(report.success_rate)
            }
            _ => None,
        };
        if let Some(v) = val_success {
            if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                best = Some((v, e + 1, model.clone()));
            }
        }
        let line = LogLine { epoch: e + 1, lr, train_loss: total / data.samples.len() as f64, val_success };
        on_line(&line);
        log.push(line);
    }
    let epochs_done = first_epoch + cfg.epochs;
    let (best_val_success, best_epoch, best) = match best {
        Some((v, e, m)) => (Some(v), e, m),
        None => (None, epochs_done, model.clone()),
    };
    Ok(TrainOutcome { best, best_epoch, best_val_success, last: model, log, schedule, epochs_done })
}
