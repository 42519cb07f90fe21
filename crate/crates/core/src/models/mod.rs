//! VIN, HVIN and AVIN planners built on the differentiation engine.

mod checkpoint;
mod config;
mod gradcheck;
pub mod geometry;
pub mod stages;

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, ModelKind};
pub use gradcheck::{rel_error, GradCheckEntry};

use crate::autodiff::{Graph, Var};
use crate::env::{recenter, Action, Domain, Footprint, GridWorld, Pose};
use crate::error::{Error, Result};
use crate::optim::{kaiming_uniform, Bound, ParamStore};
use crate::rng::rng;
use crate::tensor::{Scalar, Tensor};

use stages::BellmanKernels;

/// A batch of robot-centered network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T> {
    pub n: usize,
    pub batch: usize,
    /// `[B, 1, N, N]`, 1 for obstacles (and outside the world).
    pub occupancy: Vec<T>,
    /// `[B, 1, N, N]`, nonzero only at the goal cell.
    pub goal: Vec<T>,
    pub start_theta: Vec<usize>,
    pub goal_clamped: Vec<bool>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn new(n: usize) -> Self {
        ModelInput {
            n,
            batch: 0,
            occupancy: Vec::new(),
            goal: Vec::new(),
            start_theta: Vec::new(),
            goal_clamped: Vec::new(),
        }
    }

    /// Append the view of `robot` heading for `goal`.
    pub fn push(&mut self, world: &GridWorld, robot: Pose, goal: Pose, domain: Domain) -> Result<()> {
        if world.n() != self.n {
            return Err(Error::Config(format!("world side {} but model input side {}", world.n(), self.n)));
        }
        let r = recenter(world, goal, robot, domain)?;
        self.occupancy.extend(r.occupancy.iter().map(|&v| T::of(v as f64)));
        self.goal.extend(r.goal_map.iter().map(|&v| T::of(v as f64)));
        self.start_theta.push(robot.theta);
        self.goal_clamped.push(r.goal_clamped);
        self.batch += 1;
        Ok(())
    }

    pub fn single(world: &GridWorld, robot: Pose, goal: Pose, domain: Domain) -> Result<Self> {
        let mut input = Self::new(world.n());
        input.push(world, robot, goal, domain)?;
        Ok(input)
    }
}

/// Handles to the intermediate maps of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub logits: Var,
    pub env: Vec<Var>,
    pub goals: Vec<Var>,
    pub rewards: Vec<Var>,
    pub values: Vec<Var>,
}

enum Init {
    Kaiming,
    Zero,
}

/// Network parameters together with the architecture that uses them.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
}

type Spec = (String, Vec<usize>, Init);

fn conv_spec(specs: &mut Vec<Spec>, name: String, out: usize, inp: usize, kernel: &[usize]) {
    specs.push((format!("{name}.w"), [&[out, inp][..], kernel].concat(), Init::Kaiming));
    specs.push((format!("{name}.b"), vec![out], Init::Zero));
}

fn param_specs(c: &ModelConfig) -> Vec<Spec> {
    let mut specs = Vec::new();
    let (h, a) = (c.hidden, c.actions());
    let avin = c.kind == ModelKind::Avin;
    let vi_kernel: &[usize] = if c.is_3d() { &[3, 3, 3] } else { &[3, 3] };
    for l in 0..c.levels {
        let lv = l + 1;
        if avin && l > 0 {
            conv_spec(&mut specs, format!("abs.l{lv}"), c.features[l], c.features[l - 1], &[3, 3]);
        }
        let env_channels = if avin { c.features[l] } else { 1 };
        conv_spec(&mut specs, format!("reward.l{lv}.in"), h, env_channels + 1, &[3, 3]);
        if avin && l > 0 {
            conv_spec(&mut specs, format!("reward.l{lv}.up"), h, h, &[3, 3]);
            conv_spec(&mut specs, format!("reward.l{lv}.fuse"), h, 2 * h, &[1, 1]);
        }
        for k in 0..stages::extra_convs(c.is_3d(), l) {
            conv_spec(&mut specs, format!("reward.l{lv}.extra{}", k + 1), h, h, &[3, 3]);
        }
        conv_spec(&mut specs, format!("reward.l{lv}.out"), c.features[l] * c.orientations[l], h, &[3, 3]);
        if c.is_3d() {
            specs.push((format!("reward.l{lv}.oob"), vec![1], Init::Zero));
        }
        conv_spec(&mut specs, format!("vi.l{lv}.r"), a, c.features[l], vi_kernel);
        specs.push((format!("vi.l{lv}.v.w"), [&[a, 1][..], vi_kernel].concat(), Init::Kaiming));
    }
    let taps = if c.is_3d() { 11 } else { 9 };
    specs.push(("policy.w".into(), vec![a, taps], Init::Kaiming));
    specs.push(("policy.b".into(), vec![a], Init::Zero));
    specs
}

impl<T: Scalar> Model<T> {
    /// Fresh model with seeded fan-in uniform weights and zero biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng(config.seed);
        let mut params = ParamStore::new();
        for (name, shape, init) in param_specs(&config) {
            let value = match init {
                Init::Kaiming => kaiming_uniform(shape, &mut r),
                Init::Zero => Tensor::zeros(shape),
            };
            params.add(&name, value)?;
        }
        Ok(Model { config, params })
    }

    /// Model from explicit parameters, checked against the architecture.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != params.len() {
            return Err(Error::Format(format!(
                "{} parameters given, architecture has {}",
                params.len(),
                specs.len()
            )));
        }
        for ((name, shape, _), p) in specs.iter().zip(params.iter()) {
            if &p.name != name || p.value.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Model { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { config: self.config.clone(), params: self.params.cast() }
    }

    /// Build the full network on `g` for a batch.
    pub fn forward(&self, g: &mut Graph<T>, bound: &Bound, input: &ModelInput<T>) -> Forward {
        let c = &self.config;
        assert_eq!(input.n, c.n, "input side must match the model");
        let shape = vec![input.batch, 1, c.n, c.n];
        let occ = g.input(Tensor::new(shape.clone(), input.occupancy.clone()));
        let goal = g.input(Tensor::new(shape, input.goal.clone()));
        let lookup = |name: &str| {
            let id = self.params.id(name).unwrap_or_else(|| panic!("missing parameter {name}"));
            bound.var(id)
        };
        match c.kind {
            ModelKind::Avin => self.avin(g, &lookup, occ, goal, &input.start_theta),
            ModelKind::Vin | ModelKind::Hvin => self.pyramid(g, &lookup, occ, goal),
        }
    }

    fn avin(&self, g: &mut Graph<T>, p: stages::Params, occ: Var, goal: Var, thetas: &[usize]) -> Forward {
        let c = &self.config;
        let side = c.side(0);
        let (env, goals) = stages::abstraction(g, p, occ, goal, c.levels, side);
        let raw = stages::reward(g, p, &env, &goals, c.is_3d());
        let footprint = Footprint::default();
        let rewards: Vec<Var> = raw
            .into_iter()
            .enumerate()
            .map(|(l, r)| {
                if !c.is_3d() {
                    return r;
                }
                let b = g.shape(r)[0];
                let r = g.reshape(r, vec![b, c.features[l], c.orientations[l], side, side]);
                let oob = p(&format!("reward.l{}.oob", l + 1));
                let cell = c.cell_size_m * (1usize << l) as f64;
                stages::footprint_transform(g, r, oob, &footprint, cell)
            })
            .collect();
        let mut values: Vec<Var> = rewards.iter().map(|&r| stages::zero_values(g, r)).collect();
        for _ in 0..c.sweeps {
            for l in (0..c.levels).rev() {
                let higher = (l + 1 < c.levels).then(|| g.concat(&[rewards[l + 1], values[l + 1]]));
                let kernels = BellmanKernels::named(p, l + 1);
                values[l] =
                    stages::value_iteration(g, rewards[l], higher, values[l], kernels, c.iterations[l]);
            }
        }
        let logits = stages::policy(g, p, values[0], c.is_3d().then_some(thetas));
        Forward { logits, env, goals, rewards, values }
    }

    /// VIN (one level) and HVIN: whole-map levels, coarsest first, each
    /// initialized from the up-sampled values of the level above.
    fn pyramid(&self, g: &mut Graph<T>, p: stages::Params, occ: Var, goal: Var) -> Forward {
        let c = &self.config;
        let mut env = vec![occ];
        let mut goals = vec![goal];
        for _ in 1..c.levels {
            let (e, gl) = (*env.last().expect("level"), *goals.last().expect("level"));
            env.push(g.maxpool(e, &[1, 1, 2, 2]));
            goals.push(g.maxpool(gl, &[1, 1, 2, 2]));
        }
        let mut rewards = Vec::with_capacity(c.levels);
        for l in 0..c.levels {
            let x = g.concat(&[env[l], goals[l]]);
            let name = format!("reward.l{}", l + 1);
            let (w, b) = (p(&format!("{name}.in.w")), p(&format!("{name}.in.b")));
            let hidden = g.conv(x, w, Some(b), 1, crate::OrientationMode::None);
            let (w, b) = (p(&format!("{name}.out.w")), p(&format!("{name}.out.b")));
            rewards.push(g.conv(hidden, w, Some(b), 1, crate::OrientationMode::None));
        }
        let mut values = Vec::with_capacity(c.levels);
        let mut v = stages::zero_values(g, rewards[c.levels - 1]);
        for l in (0..c.levels).rev() {
            if l + 1 < c.levels {
                v = g.upsample2x(v);
            }
            let kernels = BellmanKernels::named(p, l + 1);
            v = stages::value_iteration(g, rewards[l], None, v, kernels, c.iterations[l]);
            values.push(v);
        }
        values.reverse();
        let logits = stages::policy(g, p, values[0], None);
        Forward { logits, env, goals, rewards, values }
    }

    /// Action logits `[B, A]` for a batch, without gradient bookkeeping.
    pub fn logits(&self, input: &ModelInput<T>) -> Tensor<T> {
        let mut g = Graph::new();
        let bound = self.params.bind_constant(&mut g);
        let f = self.forward(&mut g, &bound, input);
        g.value(f.logits).clone()
    }

    /// Softmax action probabilities per batch row.
    pub fn probabilities(&self, input: &ModelInput<T>) -> Vec<Vec<T>> {
        let logits = self.logits(input);
        let a = self.config.actions();
        logits
            .data()
            .chunks(a)
            .map(|row| {
                let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                let e: Vec<T> = row.iter().map(|&z| (z - mx).exp()).collect();
                let s: T = e.iter().copied().sum();
                e.into_iter().map(|x| x / s).collect()
            })
            .collect()
    }

    /// Finest-level state values of the first sample, maximized over
    /// orientations: `(side, row-major values)`.
    pub fn value_map(&self, input: &ModelInput<T>) -> (usize, Vec<f64>) {
        let mut g = Graph::new();
        let bound = self.params.bind_constant(&mut g);
        let f = self.forward(&mut g, &bound, input);
        let v = g.value(f.values[0]);
        let side = *v.shape().last().expect("value map has axes");
        let plane = side * side;
        let per = v.len() / v.shape()[0];
        let mut out = vec![f64::NEG_INFINITY; plane];
        for chunk in v.data()[..per].chunks(plane) {
            for (o, &x) in out.iter_mut().zip(chunk) {
                *o = o.max(x.as_f64());
            }
        }
        (side, out)
    }

    /// Greedy actions; ties go to the lowest action id.
    pub fn predict(&self, input: &ModelInput<T>) -> Vec<Action> {
        let logits = self.logits(input);
        logits.data().chunks(self.config.actions()).map(|row| Action(argmax(row) as u8)).collect()
    }
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
