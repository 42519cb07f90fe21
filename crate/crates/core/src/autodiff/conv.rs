//! Convolution over `[B, C, Θ, H, W]` buffers via im2col and GEMM.
//!
//! Planar (4-axis) tensors are handled as Θ = 1 with a unit orientation
//! kernel. The orientation axis is either zero-padded or wrapped.

use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrientationMode {
    /// Zero-fill beyond the orientation ends.
    None,
    /// Orientation `Θ-1` and `0` are neighbours.
    Cyclic,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub theta: usize,
    pub h: usize,
    pub w: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
    pub mode: OrientationMode,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.kh
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.kw
    }

    fn in_plane(&self) -> usize {
        self.h * self.w
    }

    fn out_plane(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Source orientation for output orientation `ot` and kernel tap `dt`.
    fn source_theta(&self, ot: usize, dt: usize) -> Option<usize> {
        let shifted = ot as isize + dt as isize - (self.kt / 2) as isize;
        match self.mode {
            OrientationMode::Cyclic => Some(shifted.rem_euclid(self.theta as isize) as usize),
            OrientationMode::None => {
                (shifted >= 0 && shifted < self.theta as isize).then_some(shifted as usize)
            }
        }
    }

    /// Valid output row range for kernel row `ky`, and the matching column range for `kx`.
    fn rows(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(ky);
        let hi = (self.h + self.pad).saturating_sub(ky).min(self.out_h());
        (lo, hi.max(lo))
    }

    fn cols(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.out_w());
        (lo, hi.max(lo))
    }
}

/// Upper bound on unrolled-input elements held at once.
const COL_BUDGET: usize = 1 << 20;
const DIRECT_MAX_OUT: usize = 8;

impl ConvGeom {
    fn positions(&self) -> usize {
        self.theta * self.out_plane()
    }

    fn taps(&self) -> usize {
        self.c_in * self.kt * self.kh * self.kw
    }

    /// Batch ranges whose unrolled inputs fit the budget.
    fn batch_chunks(&self) -> impl Iterator<Item = std::ops::Range<usize>> {
        let per = (COL_BUDGET / (self.taps() * self.positions()).max(1)).max(1);
        let batch = self.batch;
        (0..batch).step_by(per).map(move |b| b..(b + per).min(batch))
    }

    /// Visit every (column-matrix segment, input segment) pair of the
    /// unrolled input of samples `bs`: `f(col_offset, input_offset, len)`.
    /// The column matrix is `[taps, bs.len()·positions]` with rows in kernel
    /// layout order.
    fn for_each_segment(&self, bs: std::ops::Range<usize>, mut f: impl FnMut(usize, usize, usize)) {
        let (ow, op, ip) = (self.out_w(), self.out_plane(), self.in_plane());
        let p = self.positions();
        let cols = bs.len() * p;
        for (j, b) in bs.enumerate() {
            for c in 0..self.c_in {
                let in_base = (b * self.c_in + c) * self.theta * ip;
                for dt in 0..self.kt {
                    for ky in 0..self.kh {
                        let (y0, y1) = self.rows(ky);
                        for kx in 0..self.kw {
                            let (x0, x1) = self.cols(kx);
                            if x1 == x0 {
                                continue;
                            }
                            let r = ((c * self.kt + dt) * self.kh + ky) * self.kw + kx;
                            for ot in 0..self.theta {
                                let Some(it) = self.source_theta(ot, dt) else { continue };
                                let col_base = r * cols + j * p + ot * op;
                                let src_base = in_base + it * ip;
                                for oy in y0..y1 {
                                    let iy = oy + ky - self.pad;
                                    let ix0 = x0 + kx - self.pad;
                                    f(col_base + oy * ow + x0, src_base + iy * self.w + ix0, x1 - x0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Visit every input row segment feeding an output row segment:
    /// `f(b, c, tap, out_offset, input_offset, len)`, where `out_offset` is
    /// relative to one output channel block of sample `b` and `tap` indexes
    /// the kernel row of input channel `c`.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let (ow, op, ip) = (self.out_w(), self.out_plane(), self.in_plane());
        let taps = self.kt * self.kh * self.kw;
        for b in 0..self.batch {
            for c in 0..self.c_in {
                let in_base = (b * self.c_in + c) * self.theta * ip;
                for dt in 0..self.kt {
                    for ky in 0..self.kh {
                        let (y0, y1) = self.rows(ky);
                        for kx in 0..self.kw {
                            let (x0, x1) = self.cols(kx);
                            if x1 == x0 {
                                continue;
                            }
                            let t = (dt * self.kh + ky) * self.kw + kx;
                            debug_assert!(t < taps);
                            for ot in 0..self.theta {
                                let Some(it) = self.source_theta(ot, dt) else { continue };
                                for oy in y0..y1 {
                                    let iy = oy + ky - self.pad;
                                    f(b, c, t, ot * op + oy * ow + x0, in_base + it * ip + iy * self.w + x0 + kx - self.pad, x1 - x0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Few output channels make the unrolled input more expensive than the
    /// products it saves.
    fn prefers_direct(&self) -> bool {
        self.c_out <= DIRECT_MAX_OUT
    }

    fn im2col<T: Scalar>(&self, input: &[T], bs: std::ops::Range<usize>) -> Vec<T> {
        let mut col = vec![T::zero(); self.taps() * bs.len() * self.positions()];
        self.for_each_segment(bs, |c, s, n| col[c..c + n].copy_from_slice(&input[s..s + n]));
        col
    }
}

/// Convolution as matrix products of the kernel with the unrolled input.
pub(crate) fn forward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    bias: Option<&[T]>,
    out: &mut [T],
) {
    let (k, p) = (g.taps(), g.positions());
    if g.prefers_direct() {
        for b in 0..g.batch {
            for o in 0..g.c_out {
                let init = bias.map_or(T::zero(), |bias| bias[o]);
                out[(b * g.c_out + o) * p..][..p].fill(init);
            }
        }
        let taps = g.kt * g.kh * g.kw;
        g.for_each_tap(|b, c, t, oo, io, n| {
            let src = &input[io..io + n];
            for o in 0..g.c_out {
                let w = kernel[(o * g.c_in + c) * taps + t];
                let dst = &mut out[(b * g.c_out + o) * p + oo..][..n];
                for (d, &x) in dst.iter_mut().zip(src) {
                    *d += w * x;
                }
            }
        });
        return;
    }
    for bs in g.batch_chunks() {
        let cols = bs.len() * p;
        let col = g.im2col(input, bs.clone());
        let mut prod = vec![T::zero(); g.c_out * cols];
        T::gemm(g.c_out, k, cols, (kernel, k, 1), (&col, cols, 1), T::zero(), (&mut prod, cols, 1));
        for (j, b) in bs.enumerate() {
            for o in 0..g.c_out {
                let init = bias.map_or(T::zero(), |bias| bias[o]);
                let dst = &mut out[(b * g.c_out + o) * p..][..p];
                for (d, &v) in dst.iter_mut().zip(&prod[o * cols + j * p..][..p]) {
                    *d = v + init;
                }
            }
        }
    }
}

pub(crate) fn backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    mut grad_in: Option<&mut [T]>,
    mut grad_kernel: Option<&mut [T]>,
    mut grad_bias: Option<&mut [T]>,
) {
    let (k, p) = (g.taps(), g.positions());
    if g.prefers_direct() {
        if let Some(gb) = grad_bias.as_deref_mut() {
            for b in 0..g.batch {
                for (o, gbo) in gb.iter_mut().enumerate() {
                    *gbo += grad_out[(b * g.c_out + o) * p..][..p].iter().copied().sum::<T>();
                }
            }
        }
        let taps = g.kt * g.kh * g.kw;
        g.for_each_tap(|b, c, t, oo, io, n| {
            for o in 0..g.c_out {
                let ki = (o * g.c_in + c) * taps + t;
                let go = &grad_out[(b * g.c_out + o) * p + oo..][..n];
                if let Some(gk) = grad_kernel.as_deref_mut() {
                    gk[ki] += go.iter().zip(&input[io..io + n]).map(|(&a, &x)| a * x).sum::<T>();
                }
                if let Some(gi) = grad_in.as_deref_mut() {
                    let w = kernel[ki];
                    for (d, &a) in gi[io..io + n].iter_mut().zip(go) {
                        *d += w * a;
                    }
                }
            }
        });
        return;
    }
    for bs in g.batch_chunks() {
        let cols = bs.len() * p;
        // Output gradient as `[c_out, samples·positions]`.
        let mut go = vec![T::zero(); g.c_out * cols];
        for (j, b) in bs.clone().enumerate() {
            for o in 0..g.c_out {
                go[o * cols + j * p..][..p].copy_from_slice(&grad_out[(b * g.c_out + o) * p..][..p]);
            }
        }
        if let Some(gb) = grad_bias.as_deref_mut() {
            for (o, gbo) in gb.iter_mut().enumerate() {
                *gbo += go[o * cols..(o + 1) * cols].iter().copied().sum::<T>();
            }
        }
        if let Some(gk) = grad_kernel.as_deref_mut() {
            let col = g.im2col(input, bs.clone());
            T::gemm(g.c_out, cols, k, (&go, cols, 1), (&col, 1, cols), T::one(), (gk, k, 1));
        }
        if let Some(gi) = grad_in.as_deref_mut() {
            let mut gcol = vec![T::zero(); k * cols];
            T::gemm(k, g.c_out, cols, (kernel, 1, k), (&go, cols, 1), T::zero(), (&mut gcol, cols, 1));
            g.for_each_segment(bs, |c, s, n| {
                for (d, &v) in gi[s..s + n].iter_mut().zip(&gcol[c..c + n]) {
                    *d += v;
                }
            });
        }
    }
}
