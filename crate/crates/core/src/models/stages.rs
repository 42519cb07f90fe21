//! Graph builders for the abstraction, reward, value-iteration and policy
//! stages. Parameters are looked up by name through `p`.

use crate::autodiff::{Graph, OrientationMode, Var};
use crate::env::{Footprint, MOVES};
use crate::tensor::{Scalar, Tensor};

use super::geometry::level_wheel_cells;

pub type Params<'a> = &'a dyn Fn(&str) -> Var;

fn pool2<T: Scalar>(g: &mut Graph<T>, x: Var) -> Var {
    let rank = g.shape(x).len();
    let mut window = vec![1; rank];
    window[rank - 2] = 2;
    window[rank - 1] = 2;
    g.maxpool(x, &window)
}

fn conv_named<T: Scalar>(g: &mut Graph<T>, p: Params, x: Var, name: &str, pad: usize) -> Var {
    let w = p(&format!("{name}.w"));
    let b = p(&format!("{name}.b"));
    g.conv(x, w, Some(b), pad, OrientationMode::None)
}

/// Robot-centered abstraction pyramid: `(env maps, goal maps)` per level,
/// finest first, each cropped to `side`.
pub fn abstraction<T: Scalar>(
    g: &mut Graph<T>,
    p: Params,
    occ: Var,
    goal: Var,
    levels: usize,
    side: usize,
) -> (Vec<Var>, Vec<Var>) {
    let mut env = vec![g.center_crop(occ, side)];
    let mut goals = vec![g.center_crop(goal, side)];
    let (mut full_env, mut full_goal) = (occ, goal);
    for l in 1..levels {
        let c = conv_named(g, p, full_env, &format!("abs.l{}", l + 1), 1);
        full_env = pool2(g, c);
        full_goal = pool2(g, full_goal);
        env.push(g.center_crop(full_env, side));
        goals.push(g.center_crop(full_goal, side));
    }
    (env, goals)
}

/// Number of extra hidden convolutions per level (locomotion only).
pub fn extra_convs(is_3d: bool, level: usize) -> usize {
    match (is_3d, level) {
        (true, 0) => 2,
        (true, 1) => 1,
        _ => 0,
    }
}

/// Hidden features and raw reward maps per level. Each coarser level fuses
/// its own features with the pooled features of the level below, placed on
/// its center quarter. Rewards have `features·orientations` channels.
pub fn reward<T: Scalar>(
    g: &mut Graph<T>,
    p: Params,
    env: &[Var],
    goals: &[Var],
    is_3d: bool,
) -> Vec<Var> {
    let mut out = Vec::with_capacity(env.len());
    let mut prev: Option<Var> = None;
    for l in 0..env.len() {
        let name = format!("reward.l{}", l + 1);
        let x = g.concat(&[env[l], goals[l]]);
        let mut h = conv_named(g, p, x, &format!("{name}.in"), 1);
        if let Some(ph) = prev {
            let side = g.shape(h)[3];
            let u = conv_named(g, p, ph, &format!("{name}.up"), 1);
            let u = pool2(g, u);
            let u = g.center_pad(u, side);
            let cat = g.concat(&[h, u]);
            h = conv_named(g, p, cat, &format!("{name}.fuse"), 0);
        }
        for k in 0..extra_convs(is_3d, l) {
            h = conv_named(g, p, h, &format!("{name}.extra{}", k + 1), 1);
        }
        prev = Some(h);
        out.push(conv_named(g, p, h, &format!("{name}.out"), 1));
    }
    out
}

/// Sum of the four wheel-cell rewards for every base pose, per feature
/// channel and orientation plane. Wheels off the map read `oob`.
pub fn footprint_transform<T: Scalar>(
    g: &mut Graph<T>,
    reward: Var,
    oob: Var,
    footprint: &Footprint,
    cell_size_m: f64,
) -> Var {
    let s = g.shape(reward).to_vec();
    assert_eq!(s.len(), 5, "footprint transform expects [B, f, Θ, s, s]");
    let (b, f, theta, h, w) = (s[0], s[1], s[2], s[3], s[4]);
    let wheels = level_wheel_cells(footprint, theta, cell_size_m);
    let inner = f * theta * h * w;
    let mut offsets = Vec::with_capacity(b * inner + 1);
    let mut indices = Vec::with_capacity(b * inner * 4);
    let mut oob_map = vec![T::zero(); inner];
    offsets.push(0u32);
    for bi in 0..b {
        for fi in 0..f {
            for t in 0..theta {
                let plane = ((bi * f + fi) * theta + t) * h * w;
                for y in 0..h as i32 {
                    for x in 0..w as i32 {
                        let mut missing = 0;
                        for &(dx, dy) in &wheels[t] {
                            let (wx, wy) = (x + dx, y + dy);
                            if wx >= 0 && wy >= 0 && wx < w as i32 && wy < h as i32 {
                                indices.push((plane + wy as usize * w + wx as usize) as u32);
                            } else {
                                missing += 1;
                            }
                        }
                        if bi == 0 {
                            oob_map[((fi * theta + t) * h + y as usize) * w + x as usize] =
                                T::of(missing as f64);
                        }
                        offsets.push(indices.len() as u32);
                    }
                }
            }
        }
    }
    let summed = g.gather(reward, s, offsets, indices);
    g.add_scaled_map(summed, oob, oob_map)
}

/// Bellman kernels of one level. The action-value convolution over
/// `concat(reward, value)` is split into its reward and value parts.
#[derive(Clone, Copy, Debug)]
pub struct BellmanKernels {
    pub reward_kernel: Var,
    pub reward_bias: Var,
    pub value_kernel: Var,
}

impl BellmanKernels {
    pub fn named(p: Params, level: usize) -> Self {
        BellmanKernels {
            reward_kernel: p(&format!("vi.l{level}.r.w")),
            reward_bias: p(&format!("vi.l{level}.r.b")),
            value_kernel: p(&format!("vi.l{level}.v.w")),
        }
    }
}

/// `iterations` Bellman updates `V ← max_a conv(pad(R, V))_a` starting from
/// `init`. The border comes from `higher` (zero at the top level).
pub fn value_iteration<T: Scalar>(
    g: &mut Graph<T>,
    reward: Var,
    higher: Option<Var>,
    init: Var,
    kernels: BellmanKernels,
    iterations: usize,
) -> Var {
    let rank = g.shape(reward).len();
    let mode = if rank == 5 { OrientationMode::Cyclic } else { OrientationMode::None };
    let rpad = g.cross_level_pad(reward, higher);
    let qr = g.conv(rpad, kernels.reward_kernel, Some(kernels.reward_bias), 0, mode);
    let actions = g.shape(qr)[1];
    let mut window = vec![1; rank];
    window[1] = actions;
    let mut v = init;
    for _ in 0..iterations {
        let vpad = g.cross_level_pad(v, higher);
        let qv = g.conv(vpad, kernels.value_kernel, None, 0, mode);
        let q = g.add(qr, qv);
        v = g.maxpool(q, &window);
    }
    v
}

/// Zero value map matching a reward map's batch, orientation and spatial extents.
pub fn zero_values<T: Scalar>(g: &mut Graph<T>, reward: Var) -> Var {
    let mut shape = g.shape(reward).to_vec();
    shape[1] = 1;
    g.input(Tensor::zeros(shape))
}

/// Flat indices of the policy inputs for one batch row: the eight
/// neighbours in action order, then (3D) the center at `θ+1` and `θ−1`,
/// then the center itself.
pub fn policy_taps(
    batch_row: usize,
    theta: Option<(usize, usize)>,
    side: usize,
    center: usize,
) -> Vec<u32> {
    let (t, planes) = theta.unwrap_or((0, 1));
    let at = |t: usize, y: usize, x: usize| ((((batch_row * planes) + t) * side + y) * side + x) as u32;
    let c = center;
    let mut taps: Vec<u32> = MOVES
        .iter()
        .map(|&(dx, dy)| at(t, (c as i32 + dy) as usize, (c as i32 + dx) as usize))
        .collect();
    if theta.is_some() {
        taps.push(at((t + 1) % planes, c, c));
        taps.push(at((t + planes - 1) % planes, c, c));
    }
    taps.push(at(t, c, c));
    taps
}

/// Reactive policy on the finest value map: gather the start's neighbour
/// values and map them to action logits with one dense layer.
pub fn policy<T: Scalar>(
    g: &mut Graph<T>,
    p: Params,
    values: Var,
    start_theta: Option<&[usize]>,
) -> Var {
    let s = g.shape(values).to_vec();
    let (b, side) = (s[0], s[s.len() - 1]);
    let planes = if s.len() == 5 { s[2] } else { 1 };
    let center = side / 2;
    let mut indices = Vec::new();
    for bi in 0..b {
        let theta = start_theta.map(|ts| (ts[bi] % planes, planes));
        indices.extend(policy_taps(bi, theta, side, center));
    }
    let width = indices.len() / b.max(1);
    let offsets: Vec<u32> = (0..=indices.len() as u32).collect();
    let feats = g.gather(values, vec![b, width], offsets, indices);
    g.linear(feats, p("policy.w"), p("policy.b"))
}
