//! Central finite-difference check of backpropagated parameter gradients.

use rand::seq::index::sample;
use rand::Rng as _;

use super::{Model, ModelInput};
use crate::autodiff::Graph;
use crate::rng::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Relative error `|a−n| / max(|a|, |n|)`; zero when both are below `floor`.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

impl Model<f64> {
    /// Weighted cross-entropy of the batch against `targets`.
    pub fn loss(&self, input: &ModelInput<f64>, targets: &[usize], weights: &[f64]) -> f64 {
        let mut g = Graph::new();
        let bound = self.params.bind_constant(&mut g);
        let f = self.forward(&mut g, &bound, input);
        let l = g.weighted_cross_entropy(f.logits, targets, weights);
        g.value(l).data()[0]
    }

    /// Replace every bias and out-of-map reward with a seeded draw from
    /// `U[-scale, scale]`, moving the network off exact max ties.
    pub fn randomize_biases(&mut self, scale: f64, seed: u64) {
        let mut r = rng(seed);
        for p in self.params.iter_mut() {
            if p.name.ends_with(".b") || p.name.ends_with(".oob") {
                p.value.data_mut().iter_mut().for_each(|v| *v = r.gen_range(-scale..scale));
            }
        }
    }

    /// Compare backprop gradients with central differences of step `h` at up
    /// to `per_param` seeded coordinates of every parameter.
    pub fn gradient_check(
        &self,
        input: &ModelInput<f64>,
        targets: &[usize],
        weights: &[f64],
        per_param: usize,
        h: f64,
        seed: u64,
    ) -> Vec<GradCheckEntry> {
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let f = self.forward(&mut g, &bound, input);
        let l = g.weighted_cross_entropy(f.logits, targets, weights);
        g.backward(l).expect("fresh graph");
        let mut probe = self.clone();
        let mut r = rng(seed);
        let mut out = Vec::new();
        for (pi, p) in self.params.iter().enumerate() {
            let id = crate::optim::ParamId(pi);
            let grad = g.grad(bound.var(id)).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; p.value.len()]);
            let k = per_param.min(p.value.len());
            let mut coords: Vec<usize> = sample(&mut r, p.value.len(), k).into_vec();
            coords.sort_unstable();
            for i in coords {
                let orig = p.value.data()[i];
                probe.params.get_mut(id).value.data_mut()[i] = orig + h;
                let plus = probe.loss(input, targets, weights);
                probe.params.get_mut(id).value.data_mut()[i] = orig - h;
                let minus = probe.loss(input, targets, weights);
                probe.params.get_mut(id).value.data_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                out.push(GradCheckEntry {
                    param: p.name.clone(),
                    index: i,
                    analytic: grad[i],
                    numeric,
                    rel_error: rel_error(grad[i], numeric, 1e-7),
                });
            }
        }
        out
    }
}
