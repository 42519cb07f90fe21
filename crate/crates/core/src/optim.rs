//! Named parameters, RMSprop and the cyclic cosine learning-rate schedule.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng as _;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub rmsprop_accumulator: Vec<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let n = value.len();
        Parameter {
            name: name.into(),
            value,
            grad: vec![T::zero(); n],
            rmsprop_accumulator: vec![T::zero(); n],
        }
    }
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered set of uniquely named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

/// Graph handles for every parameter of a store, valid for one graph.
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId> {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Config(format!("invalid parameter name {name:?}")));
        }
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        self.by_name.insert(name.to_string(), self.params.len());
        self.params.push(Parameter::new(name, value));
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.id(name).map(|id| &mut self.params[id.0])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Put every parameter on `graph` as a gradient-tracking leaf.
    pub fn bind(&self, graph: &mut Graph<T>) -> Bound {
        Bound(self.params.iter().map(|p| graph.leaf(p.value.clone(), true)).collect())
    }

    /// Put every parameter on `graph` as a constant, for inference.
    pub fn bind_constant(&self, graph: &mut Graph<T>) -> Bound {
        Bound(self.params.iter().map(|p| graph.input(p.value.clone())).collect())
    }

    /// Add the gradients of a finished backward pass to the stored buffers.
    pub fn accumulate_grads(&mut self, graph: &Graph<T>, bound: &Bound) {
        for (p, &v) in self.params.iter_mut().zip(&bound.0) {
            match graph.grad(v) {
                Some(g) => {
                    for (a, &b) in p.grad.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                None => log::trace!("parameter {} received no gradient", p.name),
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let params = self
            .params
            .iter()
            .map(|p| Parameter {
                name: p.name.clone(),
                value: p.value.cast(),
                grad: p.grad.iter().map(|&g| U::of(g.as_f64())).collect(),
                rmsprop_accumulator: p
                    .rmsprop_accumulator
                    .iter()
                    .map(|&g| U::of(g.as_f64()))
                    .collect(),
            })
            .collect();
        ParamStore { params, by_name: self.by_name.clone() }
    }
}

/// Uniform fan-in initialization with bound `1/sqrt(fan_in)` (the Kaiming
/// uniform rule with negative slope √5), as used by common deep-learning
/// frameworks for conv and dense kernels.
pub fn kaiming_uniform<T: Scalar>(shape: Vec<usize>, rng: &mut Rng) -> Tensor<T> {
    let fan_in: usize = shape[1..].iter().product();
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..bound)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp { decay: 0.99, eps: 1e-8 }
    }
}

impl RmsProp {
    /// `acc ← decay·acc + (1−decay)·g²; p ← p − lr·g/(√acc + eps)`, then zero
    /// the gradients.
    pub fn step<T: Scalar>(&self, params: &mut ParamStore<T>, lr: f64) {
        let (decay, keep, lr, eps) =
            (T::of(self.decay), T::of(1.0 - self.decay), T::of(lr), T::of(self.eps));
        for p in params.iter_mut() {
            for ((v, g), acc) in
                p.value.data_mut().iter_mut().zip(&mut p.grad).zip(&mut p.rmsprop_accumulator)
            {
                *acc = decay * *acc + keep * *g * *g;
                *v -= lr * *g / (acc.sqrt() + eps);
                *g = T::zero();
            }
        }
    }
}

/// Cosine annealing with warm restarts; each restart stretches the cycle by
/// `len_growth` (floored) and scales the starting rate by `lr_decay`.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub cycle_len: usize,
    pub len_growth: f64,
    pub lr_decay: f64,
    pub epoch_in_cycle: usize,
    pub cycle_index: usize,
    cycle_base_lr: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::new(0.001, 48, 1.5, 0.95)
    }
}

impl LrSchedule {
    pub fn new(base_lr: f64, cycle_len: usize, len_growth: f64, lr_decay: f64) -> Self {
        assert!(cycle_len >= 1, "cycle length must be at least one epoch");
        assert!(lr_decay > 0.0 && lr_decay <= 1.0, "lr decay must lie in (0, 1]");
        assert!(len_growth >= 1.0, "cycle growth must be >= 1");
        LrSchedule {
            base_lr,
            min_lr: 0.0,
            cycle_len,
            len_growth,
            lr_decay,
            epoch_in_cycle: 0,
            cycle_index: 0,
            cycle_base_lr: base_lr,
        }
    }

    /// Constant rate: one endless cycle with no annealing.
    pub fn constant(lr: f64) -> Self {
        let mut s = LrSchedule::new(lr, usize::MAX, 1.0, 1.0);
        s.min_lr = lr;
        s
    }

    pub fn cycle_base_lr(&self) -> f64 {
        self.cycle_base_lr
    }

    pub fn lr(&self) -> f64 {
        let phase = self.epoch_in_cycle as f64 / self.cycle_len as f64;
        self.min_lr + (self.cycle_base_lr - self.min_lr) * 0.5 * (1.0 + (PI * phase).cos())
    }

    /// Move to the next epoch; returns true when a cycle just ended.
    pub fn advance_epoch(&mut self) -> bool {
        self.epoch_in_cycle += 1;
        if self.epoch_in_cycle < self.cycle_len {
            return false;
        }
        self.epoch_in_cycle = 0;
        self.cycle_index += 1;
        self.cycle_len = ((self.cycle_len as f64) * self.len_growth).floor() as usize;
        self.cycle_base_lr *= self.lr_decay;
        true
    }

    /// Key/value form used by checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("schedule.base_lr".into(), self.base_lr.to_string()),
            ("schedule.min_lr".into(), self.min_lr.to_string()),
            ("schedule.cycle_len".into(), self.cycle_len.to_string()),
            ("schedule.len_growth".into(), self.len_growth.to_string()),
            ("schedule.lr_decay".into(), self.lr_decay.to_string()),
            ("schedule.epoch_in_cycle".into(), self.epoch_in_cycle.to_string()),
            ("schedule.cycle_index".into(), self.cycle_index.to_string()),
            ("schedule.cycle_base_lr".into(), self.cycle_base_lr.to_string()),
        ]
    }

    pub fn from_pairs(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        fn parse<V: std::str::FromStr>(get: &impl Fn(&str) -> Option<String>, k: &str) -> Result<V> {
            get(k)
                .ok_or_else(|| Error::Format(format!("missing {k}")))?
                .parse()
                .map_err(|_| Error::Format(format!("bad value for {k}")))
        }
        Ok(LrSchedule {
            base_lr: parse(&get, "schedule.base_lr")?,
            min_lr: parse(&get, "schedule.min_lr")?,
            cycle_len: parse(&get, "schedule.cycle_len")?,
            len_growth: parse(&get, "schedule.len_growth")?,
            lr_decay: parse(&get, "schedule.lr_decay")?,
            epoch_in_cycle: parse(&get, "schedule.epoch_in_cycle")?,
            cycle_index: parse(&get, "schedule.cycle_index")?,
            cycle_base_lr: parse(&get, "schedule.cycle_base_lr")?,
        })
    }
}
