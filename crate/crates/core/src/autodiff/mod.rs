//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation in evaluation order. Calling
//! [`Graph::backward`] walks the tape once in reverse and fills the gradient
//! buffer of every node that depends on a `requires_grad` leaf. Shape
//! contract violations panic at op construction time.

mod conv;

pub use conv::OrientationMode;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv { input: Var, kernel: Var, bias: Option<Var>, geom: conv::ConvGeom },
    MaxPool { input: Var, argmax: Vec<u32> },
    Linear { input: Var, weight: Var, bias: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<T>, probs: Vec<T> },
    Add(Var, Var),
    Concat { inputs: Vec<Var> },
    Shift { input: Var, dy: isize, dx: isize },
    Reshape { input: Var },
    CrossLevelPad { lower: Var, higher: Option<Var>, border: Vec<(u32, u32)>, higher_channels: usize },
    Gather { input: Var, offsets: Vec<u32>, indices: Vec<u32> },
    AddScaledMap { input: Var, scalar: Var, map: Vec<T> },
    Upsample2x { input: Var },
    Sum { input: Var },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Option<Var>]) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by graph op");
        let requires_grad = inputs.iter().flatten().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite leaf");
        self.nodes.push(Node { value, grad: None, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass, present iff the node requires grad
    /// and was reached from the loss.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Convolution over `[B, C, H, W]` or `[B, C, Θ, H, W]` inputs.
    ///
    /// Spatial padding is zero-fill; the orientation axis (5-axis inputs only)
    /// keeps its extent and is padded per `mode`.
    pub fn conv(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        padding: usize,
        mode: OrientationMode,
    ) -> Var {
        let is = self.shape(input).to_vec();
        let ks = self.shape(kernel).to_vec();
        assert!(is.len() == 4 || is.len() == 5, "conv input must have 4 or 5 axes, got {is:?}");
        assert_eq!(is.len(), ks.len(), "conv kernel rank must match input rank");
        assert_eq!(ks[1], is[1], "conv kernel expects {} input channels, input has {}", ks[1], is[1]);
        for &k in &ks[2..] {
            assert!(k % 2 == 1, "conv kernel extents must be odd, got {ks:?}");
        }
        let (theta, kt) = if is.len() == 5 { (is[2], ks[2]) } else { (1, 1) };
        let n = is.len();
        let geom = conv::ConvGeom {
            batch: is[0],
            c_in: is[1],
            c_out: ks[0],
            theta,
            h: is[n - 2],
            w: is[n - 1],
            kt,
            kh: ks[n - 2],
            kw: ks[n - 1],
            pad: padding,
            mode,
        };
        assert!(
            geom.h + 2 * padding >= geom.kh && geom.w + 2 * padding >= geom.kw,
            "conv kernel {ks:?} larger than padded input {is:?}"
        );
        if let Some(b) = bias {
            assert_eq!(self.shape(b), &[ks[0]], "conv bias must have C_out entries");
        }
        let mut out_shape = vec![geom.batch, geom.c_out];
        if n == 5 {
            out_shape.push(theta);
        }
        out_shape.extend([geom.out_h(), geom.out_w()]);
        let mut out = Tensor::zeros(out_shape);
        conv::forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            out.data_mut(),
        );
        self.push(out, Op::Conv { input, kernel, bias, geom }, &[Some(input), Some(kernel), bias])
    }

    /// Non-overlapping max pooling with one window extent per axis.
    ///
    /// Ties resolve to the lowest linear input index.
    pub fn maxpool(&mut self, input: Var, window: &[usize]) -> Var {
        let shape = self.shape(input).to_vec();
        assert_eq!(window.len(), shape.len(), "maxpool window rank must match input rank");
        for (&n, &w) in shape.iter().zip(window) {
            assert!(w >= 1 && n % w == 0, "maxpool extent {n} not divisible by window {w}");
        }
        let out_shape: Vec<usize> = shape.iter().zip(window).map(|(&n, &w)| n / w).collect();
        let rank = shape.len();
        let mut strides = vec![1usize; rank];
        for a in (0..rank.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        // Window element offsets in increasing linear order.
        let mut win_offsets = vec![0usize];
        for a in 0..rank {
            let mut next = Vec::with_capacity(win_offsets.len() * window[a]);
            for &o in &win_offsets {
                for k in 0..window[a] {
                    next.push(o + k * strides[a]);
                }
            }
            win_offsets = next;
        }
        let src = self.value(input).data();
        let out_len: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(out_len);
        let mut argmax = Vec::with_capacity(out_len);
        let mut idx = vec![0usize; rank];
        for _ in 0..out_len {
            let base: usize = (0..rank).map(|a| idx[a] * window[a] * strides[a]).sum();
            let mut best = base;
            for &o in &win_offsets[1..] {
                if src[base + o] > src[best] {
                    best = base + o;
                }
            }
            out.push(src[best]);
            argmax.push(best as u32);
            for a in (0..rank).rev() {
                idx[a] += 1;
                if idx[a] < out_shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        self.push(Tensor::new(out_shape, out), Op::MaxPool { input, argmax }, &[Some(input)])
    }

    /// Affine map `[B, n] x [m, n]^T + [m]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Var {
        let is = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        assert_eq!(is.len(), 2, "linear input must be [B, n]");
        assert_eq!(ws.len(), 2, "linear weights must be [m, n]");
        assert_eq!(is[1], ws[1], "linear extent mismatch: input {is:?}, weights {ws:?}");
        assert_eq!(self.shape(bias), &[ws[0]], "linear bias must have m entries");
        let (b, n, m) = (is[0], is[1], ws[0]);
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let bv = self.value(bias).data();
        let mut out = Vec::with_capacity(b * m);
        for i in 0..b {
            let row = &x[i * n..(i + 1) * n];
            for j in 0..m {
                let wr = &w[j * n..(j + 1) * n];
                out.push(bv[j] + row.iter().zip(wr).map(|(&a, &c)| a * c).sum::<T>());
            }
        }
        self.push(
            Tensor::new(vec![b, m], out),
            Op::Linear { input, weight, bias },
            &[Some(input), Some(weight), Some(bias)],
        )
    }

    /// Mean over the batch of `weights[t] * (logsumexp(z) - z[t])`.
    pub fn weighted_cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[T]) -> Var {
        let s = self.shape(logits).to_vec();
        assert_eq!(s.len(), 2, "logits must be [B, A]");
        let (b, a) = (s[0], s[1]);
        assert_eq!(targets.len(), b, "one target per batch row");
        assert_eq!(weights.len(), a, "one class weight per action");
        for &t in targets {
            assert!(t < a, "target {t} out of range for {a} actions");
        }
        let z = self.value(logits).data();
        let mut probs = Vec::with_capacity(b * a);
        let mut total = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = &z[i * a..(i + 1) * a];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum_exp: T = row.iter().map(|&v| (v - mx).exp()).sum();
            let lse = mx + sum_exp.ln();
            total += weights[t] * (lse - row[t]);
            probs.extend(row.iter().map(|&v| (v - mx).exp() / sum_exp));
        }
        let loss = total / T::of(b.max(1) as f64);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), weights: weights.to_vec(), probs },
            &[Some(logits)],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add operands must share a shape");
        let out: Vec<T> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, out), Op::Add(a, b), &[Some(a), Some(b)])
    }

    /// Concatenate along axis 1 (channels).
    pub fn concat(&mut self, inputs: &[Var]) -> Var {
        assert!(!inputs.is_empty());
        let first = self.shape(inputs[0]).to_vec();
        let mut channels = 0;
        for &v in inputs {
            let s = self.shape(v);
            assert_eq!(s.len(), first.len(), "concat rank mismatch");
            assert_eq!(s[0], first[0], "concat batch mismatch");
            assert_eq!(s[2..], first[2..], "concat trailing extents mismatch");
            channels += s[1];
        }
        let inner: usize = first[2..].iter().product();
        let mut shape = first.clone();
        shape[1] = channels;
        let mut out = Vec::with_capacity(first[0] * channels * inner);
        for b in 0..first[0] {
            for &v in inputs {
                let c = self.shape(v)[1];
                out.extend_from_slice(&self.value(v).data()[b * c * inner..(b + 1) * c * inner]);
            }
        }
        let deps: Vec<Option<Var>> = inputs.iter().copied().map(Some).collect();
        self.push(Tensor::new(shape, out), Op::Concat { inputs: inputs.to_vec() }, &deps)
    }

    /// Window over the last two axes: `out[.., y, x] = in[.., y + dy, x + dx]`,
    /// zero where the source falls outside. Crops (positive offsets) and
    /// zero-embeds (negative offsets).
    pub fn shift(&mut self, input: Var, out_h: usize, out_w: usize, dy: isize, dx: isize) -> Var {
        let s = self.shape(input).to_vec();
        let n = s.len();
        assert!(n >= 2);
        let (h, w) = (s[n - 2], s[n - 1]);
        let planes: usize = s[..n - 2].iter().product();
        let src = self.value(input).data();
        let mut out = vec![T::zero(); planes * out_h * out_w];
        for p in 0..planes {
            for y in 0..out_h {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for x in 0..out_w {
                    let sx = x as isize + dx;
                    if sx >= 0 && sx < w as isize {
                        out[(p * out_h + y) * out_w + x] =
                            src[(p * h + sy as usize) * w + sx as usize];
                    }
                }
            }
        }
        let mut shape = s;
        shape[n - 2] = out_h;
        shape[n - 1] = out_w;
        self.push(Tensor::new(shape, out), Op::Shift { input, dy, dx }, &[Some(input)])
    }

    /// Centered crop of the last two axes to `side × side`.
    pub fn center_crop(&mut self, input: Var, side: usize) -> Var {
        let s = self.shape(input);
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        assert!(side <= h && side <= w, "crop {side} larger than {h}x{w}");
        self.shift(input, side, side, ((h - side) / 2) as isize, ((w - side) / 2) as isize)
    }

    /// Embed the last two axes centered into a zero map of `side × side`.
    pub fn center_pad(&mut self, input: Var, side: usize) -> Var {
        let s = self.shape(input);
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        assert!(side >= h && side >= w);
        self.shift(input, side, side, -(((side - h) / 2) as isize), -(((side - w) / 2) as isize))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Var {
        let value = self.value(input).clone().reshaped(shape);
        self.push(value, Op::Reshape { input }, &[Some(input)])
    }

    /// One-cell border around a level map, filled from the next coarser level.
    ///
    /// `lower` is `[B, C, (Θ,) s, s]`; `higher` is `[B, C', (Θ',) s, s]` with
    /// the lower map registered on its center quarter. Each border cell takes
    /// the mean over the `C'` features of the higher cell covering it
    /// (orientation `θ` reads higher orientation `θ·Θ'/Θ`). Without a higher
    /// level the border is zero.
    pub fn cross_level_pad(&mut self, lower: Var, higher: Option<Var>) -> Var {
        let ls = self.shape(lower).to_vec();
        let n = ls.len();
        assert!(n == 4 || n == 5, "cross_level_pad expects 4 or 5 axes");
        let (bsz, c, side) = (ls[0], ls[1], ls[n - 1]);
        assert_eq!(ls[n - 2], side, "level maps must be square");
        let theta = if n == 5 { ls[2] } else { 1 };
        let padded = side + 2;
        let (higher_channels, higher_theta) = match higher {
            Some(h) => {
                let hs = self.shape(h);
                assert_eq!(hs.len(), n, "level rank mismatch");
                assert_eq!(hs[0], bsz);
                assert_eq!(hs[n - 1], side, "levels must share a side");
                assert_eq!(hs[n - 2], side);
                let ht = if n == 5 { hs[2] } else { 1 };
                assert!(ht >= 1 && theta % ht == 0, "orientation counts must nest");
                (hs[1], ht)
            }
            None => (0, 1),
        };
        // (padded-plane border offset within one θ-plane of the lower map,
        //  higher-map offset within one batch-channel block) per θ.
        let mut border = Vec::new();
        if higher.is_some() {
            for t in 0..theta {
                let ht = t * higher_theta / theta;
                for py in 0..padded {
                    for px in 0..padded {
                        if py != 0 && px != 0 && py != padded - 1 && px != padded - 1 {
                            continue;
                        }
                        let (hy, hx) = crate::models::geometry::parent_cell(
                            py as isize - 1,
                            px as isize - 1,
                            side,
                        );
                        border.push((
                            (t * padded * padded + py * padded + px) as u32,
                            (ht * side * side + hy * side + hx) as u32,
                        ));
                    }
                }
            }
        }
        let lplane = side * side;
        let pplane = padded * padded;
        let mut out = vec![T::zero(); bsz * c * theta * pplane];
        let src = self.value(lower).data();
        for bc in 0..bsz * c {
            for t in 0..theta {
                let sbase = (bc * theta + t) * lplane;
                let dbase = (bc * theta + t) * pplane;
                for y in 0..side {
                    out[dbase + (y + 1) * padded + 1..dbase + (y + 1) * padded + 1 + side]
                        .copy_from_slice(&src[sbase + y * side..sbase + (y + 1) * side]);
                }
            }
        }
        if let Some(h) = higher {
            let hv = self.value(h).data();
            let hblock = higher_theta * lplane;
            let inv = T::one() / T::of(higher_channels as f64);
            for b in 0..bsz {
                for &(dst, srco) in &border {
                    let mut acc = T::zero();
                    for ch in 0..higher_channels {
                        acc += hv[(b * higher_channels + ch) * hblock + srco as usize];
                    }
                    let mean = acc * inv;
                    for ch in 0..c {
                        out[(b * c + ch) * theta * pplane + dst as usize] = mean;
                    }
                }
            }
        }
        let mut shape = ls;
        shape[n - 2] = padded;
        shape[n - 1] = padded;
        self.push(
            Tensor::new(shape, out),
            Op::CrossLevelPad { lower, higher, border, higher_channels },
            &[Some(lower), higher],
        )
    }

    /// Sparse sum gather: `out[i] = Σ input[indices[k]]` for `k` in
    /// `offsets[i]..offsets[i+1]`, over flat buffers.
    pub fn gather(
        &mut self,
        input: Var,
        out_shape: Vec<usize>,
        offsets: Vec<u32>,
        indices: Vec<u32>,
    ) -> Var {
        let out_len: usize = out_shape.iter().product();
        assert_eq!(offsets.len(), out_len + 1, "gather needs one offset per output plus one");
        let src = self.value(input).data();
        assert!(indices.iter().all(|&i| (i as usize) < src.len()), "gather index out of range");
        let out: Vec<T> = offsets
            .windows(2)
            .map(|r| indices[r[0] as usize..r[1] as usize].iter().map(|&i| src[i as usize]).sum())
            .collect();
        self.push(Tensor::new(out_shape, out), Op::Gather { input, offsets, indices }, &[Some(input)])
    }

    /// `input + map * scalar`, with `map` broadcast over the leading batch axis.
    pub fn add_scaled_map(&mut self, input: Var, scalar: Var, map: Vec<T>) -> Var {
        assert_eq!(self.value(scalar).len(), 1, "scale must be a single value");
        let len = self.value(input).len();
        assert!(!map.is_empty() && len.is_multiple_of(map.len()), "map must tile the input");
        let s = self.value(scalar).data()[0];
        let out: Vec<T> = self
            .value(input)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + map[i % map.len()] * s)
            .collect();
        let shape = self.shape(input).to_vec();
        self.push(
            Tensor::new(shape, out),
            Op::AddScaledMap { input, scalar, map },
            &[Some(input), Some(scalar)],
        )
    }

    /// Nearest-neighbour 2× up-sampling of the last two axes.
    pub fn upsample2x(&mut self, input: Var) -> Var {
        let s = self.shape(input).to_vec();
        let n = s.len();
        let (h, w) = (s[n - 2], s[n - 1]);
        let planes: usize = s[..n - 2].iter().product();
        let src = self.value(input).data();
        let mut out = Vec::with_capacity(planes * 4 * h * w);
        for p in 0..planes {
            for y in 0..2 * h {
                for x in 0..2 * w {
                    out.push(src[(p * h + y / 2) * w + x / 2]);
                }
            }
        }
        let mut shape = s;
        shape[n - 2] = 2 * h;
        shape[n - 1] = 2 * w;
        self.push(Tensor::new(shape, out), Op::Upsample2x { input }, &[Some(input)])
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total: T = self.value(input).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum { input }, &[Some(input)])
    }

    /// Populate gradients of every node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Autodiff("backward already ran on this graph".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Autodiff(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(gout) = self.nodes[i].grad.take() else { continue };
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            self.propagate(i, &op, &gout);
            self.nodes[i].op = op;
            self.nodes[i].grad = Some(gout);
        }
        Ok(())
    }

    /// Gradient buffer of `v`, allocated on first touch. `None` if `v` does not
    /// require a gradient.
    fn grad_buf(&mut self, v: Var) -> Option<&mut Vec<T>> {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let len = node.value.len();
        Some(node.grad.get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn propagate(&mut self, index: usize, op: &Op<T>, gout: &[T]) {
        match op {
            Op::Leaf => {}
            Op::Conv { input, kernel, bias, geom } => {
                let mut gi = self.take_grad(*input);
                let mut gk = self.take_grad(*kernel);
                let mut gb = bias.and_then(|b| self.take_grad(b));
                conv::backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    gout,
                    gi.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                self.restore_grad(*input, gi);
                self.restore_grad(*kernel, gk);
                if let Some(b) = bias {
                    self.restore_grad(*b, gb);
                }
            }
            Op::MaxPool { input, argmax } => {
                if let Some(g) = self.grad_buf(*input) {
                    for (&src, &d) in argmax.iter().zip(gout) {
                        g[src as usize] += d;
                    }
                }
            }
            Op::Linear { input, weight, bias } => {
                let (b, n) = (self.shape(*input)[0], self.shape(*input)[1]);
                let m = self.shape(*weight)[0];
                if let Some(mut g) = self.take_grad(*bias) {
                    for i in 0..b {
                        for j in 0..m {
                            g[j] += gout[i * m + j];
                        }
                    }
                    self.restore_grad(*bias, Some(g));
                }
                if let Some(mut g) = self.take_grad(*weight) {
                    let x = self.value(*input).data();
                    for i in 0..b {
                        for j in 0..m {
                            let d = gout[i * m + j];
                            for k in 0..n {
                                g[j * n + k] += d * x[i * n + k];
                            }
                        }
                    }
                    self.restore_grad(*weight, Some(g));
                }
                if let Some(mut g) = self.take_grad(*input) {
                    let w = self.value(*weight).data();
                    for i in 0..b {
                        for j in 0..m {
                            let d = gout[i * m + j];
                            for k in 0..n {
                                g[i * n + k] += d * w[j * n + k];
                            }
                        }
                    }
                    self.restore_grad(*input, Some(g));
                }
            }
            Op::CrossEntropy { logits, targets, weights, probs } => {
                let a = weights.len();
                let scale = gout[0] / T::of(targets.len().max(1) as f64);
                if let Some(g) = self.grad_buf(*logits) {
                    for (i, &t) in targets.iter().enumerate() {
                        let w = weights[t] * scale;
                        for k in 0..a {
                            let onehot = if k == t { T::one() } else { T::zero() };
                            g[i * a + k] += w * (probs[i * a + k] - onehot);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(g) = self.grad_buf(v) {
                        for (x, &d) in g.iter_mut().zip(gout) {
                            *x += d;
                        }
                    }
                }
            }
            Op::Concat { inputs } => {
                let s = self.value(Var(index)).shape().to_vec();
                let inner: usize = s[2..].iter().product();
                let total_c = s[1];
                let mut c0 = 0;
                for &v in inputs {
                    let c = self.shape(v)[1];
                    if let Some(g) = self.grad_buf(v) {
                        for b in 0..s[0] {
                            let src = &gout[(b * total_c + c0) * inner..(b * total_c + c0 + c) * inner];
                            for (x, &d) in g[b * c * inner..(b + 1) * c * inner].iter_mut().zip(src) {
                                *x += d;
                            }
                        }
                    }
                    c0 += c;
                }
            }
            Op::Shift { input, dy, dx } => {
                let s = self.shape(*input).to_vec();
                let os = self.value(Var(index)).shape().to_vec();
                let n = s.len();
                let (h, w, oh, ow) = (s[n - 2], s[n - 1], os[n - 2], os[n - 1]);
                let planes: usize = s[..n - 2].iter().product();
                if let Some(g) = self.grad_buf(*input) {
                    for p in 0..planes {
                        for y in 0..oh {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for x in 0..ow {
                                let sx = x as isize + dx;
                                if sx >= 0 && sx < w as isize {
                                    g[(p * h + sy as usize) * w + sx as usize] +=
                                        gout[(p * oh + y) * ow + x];
                                }
                            }
                        }
                    }
                }
            }
            Op::Reshape { input } => {
                if let Some(g) = self.grad_buf(*input) {
                    for (x, &d) in g.iter_mut().zip(gout) {
                        *x += d;
                    }
                }
            }
            Op::CrossLevelPad { lower, higher, border, higher_channels } => {
                let ls = self.shape(*lower).to_vec();
                let n = ls.len();
                let (bsz, c, side) = (ls[0], ls[1], ls[n - 1]);
                let theta = if n == 5 { ls[2] } else { 1 };
                let padded = side + 2;
                let (lplane, pplane) = (side * side, padded * padded);
                if let Some(g) = self.grad_buf(*lower) {
                    for bc in 0..bsz * c {
                        for t in 0..theta {
                            let sbase = (bc * theta + t) * lplane;
                            let dbase = (bc * theta + t) * pplane;
                            for y in 0..side {
                                let row = dbase + (y + 1) * padded + 1;
                                for (x, &d) in g[sbase + y * side..sbase + (y + 1) * side]
                                    .iter_mut()
                                    .zip(&gout[row..row + side])
                                {
                                    *x += d;
                                }
                            }
                        }
                    }
                }
                if let Some(h) = higher {
                    let hs = self.shape(*h).to_vec();
                    let ht = if n == 5 { hs[2] } else { 1 };
                    let hblock = ht * lplane;
                    let hc = *higher_channels;
                    let inv = T::one() / T::of(hc as f64);
                    if let Some(g) = self.grad_buf(*h) {
                        for b in 0..bsz {
                            for &(dst, srco) in border {
                                let mut acc = T::zero();
                                for ch in 0..c {
                                    acc += gout[(b * c + ch) * theta * pplane + dst as usize];
                                }
                                let share = acc * inv;
                                for ch in 0..hc {
                                    g[(b * hc + ch) * hblock + srco as usize] += share;
                                }
                            }
                        }
                    }
                }
            }
            Op::Gather { input, offsets, indices } => {
                if let Some(g) = self.grad_buf(*input) {
                    for (r, &d) in offsets.windows(2).zip(gout) {
                        for &i in &indices[r[0] as usize..r[1] as usize] {
                            g[i as usize] += d;
                        }
                    }
                }
            }
            Op::AddScaledMap { input, scalar, map } => {
                if let Some(g) = self.grad_buf(*input) {
                    for (x, &d) in g.iter_mut().zip(gout) {
                        *x += d;
                    }
                }
                if let Some(g) = self.grad_buf(*scalar) {
                    let acc: T = gout.iter().enumerate().map(|(i, &d)| d * map[i % map.len()]).sum();
                    g[0] += acc;
                }
            }
            Op::Upsample2x { input } => {
                let s = self.shape(*input).to_vec();
                let n = s.len();
                let (h, w) = (s[n - 2], s[n - 1]);
                let planes: usize = s[..n - 2].iter().product();
                if let Some(g) = self.grad_buf(*input) {
                    for p in 0..planes {
                        for y in 0..2 * h {
                            for x in 0..2 * w {
                                g[(p * h + y / 2) * w + x / 2] += gout[(p * 2 * h + y) * 2 * w + x];
                            }
                        }
                    }
                }
            }
            Op::Sum { input } => {
                if let Some(g) = self.grad_buf(*input) {
                    for x in g.iter_mut() {
                        *x += gout[0];
                    }
                }
            }
        }
    }

    fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.grad_buf(v)?;
        self.nodes[v.0].grad.take()
    }

    fn restore_grad(&mut self, v: Var, g: Option<Vec<T>>) {
        if g.is_some() {
            self.nodes[v.0].grad = g;
        }
    }
}
