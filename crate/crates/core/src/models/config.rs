use std::fmt;
use std::str::FromStr;

use crate::env::{Domain, ORIENTATIONS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Single full-resolution planning level.
    Vin,
    /// Whole-map resolution pyramid with coarse-to-fine value initialization.
    Hvin,
    /// Robot-centered abstraction levels of constant side.
    Avin,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Vin => "vin",
            ModelKind::Hvin => "hvin",
            ModelKind::Avin => "avin",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vin" => Ok(ModelKind::Vin),
            "hvin" => Ok(ModelKind::Hvin),
            "avin" => Ok(ModelKind::Avin),
            _ => Err(Error::Config(format!("unknown model kind {s:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture hyper-parameters. Per-level vectors are ordered from the
/// finest level (index 0) to the coarsest.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub domain: Domain,
    /// Side of the robot-centered input window.
    pub n: usize,
    pub levels: usize,
    /// Reward channels per level.
    pub features: Vec<usize>,
    /// Orientation planes per level (all 1 in 2D).
    pub orientations: Vec<usize>,
    /// Bellman iterations per level and sweep.
    pub iterations: Vec<usize>,
    /// Coarse-to-fine sweeps over all levels (AVIN).
    pub sweeps: usize,
    pub hidden: usize,
    /// Grid cell size of the finest level, in meters.
    pub cell_size_m: f64,
    /// Parameter initialization seed.
    pub seed: u64,
}

const GRID_FEATURES: [usize; 4] = [1, 2, 6, 10];
const LOCO_FEATURES: [usize; 3] = [1, 5, 10];
const LOCO_ORIENTATIONS: [usize; 3] = [16, 8, 4];

impl ModelConfig {
    /// AVIN defaults: three levels, or four for 128×128 2D inputs when asked.
    pub fn avin(domain: Domain, n: usize, levels: usize) -> Result<Self> {
        if levels == 0 || levels > 4 {
            return Err(Error::Config(format!("{levels} levels not supported")));
        }
        if domain == Domain::Locomotion3d && levels > 3 {
            return Err(Error::Config("locomotion models support at most 3 levels".into()));
        }
        let side = n >> (levels - 1);
        let (features, orientations) = match domain {
            Domain::Grid2d => (GRID_FEATURES[..levels].to_vec(), vec![1; levels]),
            Domain::Locomotion3d => {
                (LOCO_FEATURES[..levels].to_vec(), LOCO_ORIENTATIONS[..levels].to_vec())
            }
        };
        let cfg = ModelConfig {
            kind: ModelKind::Avin,
            domain,
            n,
            levels,
            features,
            orientations,
            iterations: vec![2 * side.max(1) - 1; levels],
            sweeps: 3,
            hidden: 32,
            cell_size_m: domain.default_cell_size() as f64,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Plain VIN with `K = 2N`.
    pub fn vin(n: usize) -> Result<Self> {
        let cfg = ModelConfig {
            kind: ModelKind::Vin,
            domain: Domain::Grid2d,
            n,
            levels: 1,
            features: vec![1],
            orientations: vec![1],
            iterations: vec![2 * n],
            sweeps: 1,
            hidden: 32,
            cell_size_m: 1.0,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// HVIN over `N`, `N/2`, `N/4`: `2·(N/4)` iterations at the coarsest
    /// level, two at each finer one.
    pub fn hvin(n: usize) -> Result<Self> {
        let cfg = ModelConfig {
            kind: ModelKind::Hvin,
            domain: Domain::Grid2d,
            n,
            levels: 3,
            features: vec![1; 3],
            orientations: vec![1; 3],
            iterations: vec![2, 2, 2 * (n / 4)],
            sweeps: 1,
            hidden: 32,
            cell_size_m: 1.0,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default configuration of a kind for a domain and input side.
    pub fn for_kind(kind: ModelKind, domain: Domain, n: usize) -> Result<Self> {
        if kind != ModelKind::Avin && domain != Domain::Grid2d {
            return Err(Error::Config(format!("{kind} is only implemented for grid2d")));
        }
        match kind {
            ModelKind::Vin => Self::vin(n),
            ModelKind::Hvin => Self::hvin(n),
            ModelKind::Avin => Self::avin(domain, n, 3),
        }
    }

    pub fn actions(&self) -> usize {
        self.domain.action_count()
    }

    pub fn is_3d(&self) -> bool {
        self.domain == Domain::Locomotion3d
    }

    /// Spatial side of level `l` (0 = finest).
    pub fn side(&self, l: usize) -> usize {
        match self.kind {
            ModelKind::Avin => self.n >> (self.levels - 1),
            ModelKind::Vin | ModelKind::Hvin => self.n >> l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let l = self.levels;
        if l == 0 {
            return bad("at least one level is required".into());
        }
        if self.features.len() != l || self.orientations.len() != l || self.iterations.len() != l {
            return bad(format!("per-level settings must have {l} entries"));
        }
        if self.hidden == 0 || self.sweeps == 0 {
            return bad("hidden channels and sweeps must be positive".into());
        }
        if !self.n.is_multiple_of(1 << (l - 1)) {
            return bad(format!("input side {} not divisible by 2^{}", self.n, l - 1));
        }
        if self.features[0] != 1 || self.features.contains(&0) {
            return bad(format!("features {:?} must start at 1 and be positive", self.features));
        }
        if self.cell_size_m.is_nan() || self.cell_size_m <= 0.0 {
            return bad("cell size must be positive".into());
        }
        if self.kind != ModelKind::Avin && self.domain != Domain::Grid2d {
            return bad(format!("{} supports grid2d only", self.kind));
        }
        match self.kind {
            ModelKind::Avin => {
                if l > 3 && self.n != 128 {
                    return bad(format!("{l} levels are only supported for N=128"));
                }
                let side = self.side(0);
                if side < 4 || !side.is_multiple_of(4) {
                    return bad(format!(
                        "level side {side} (N={}, L={l}) must be a multiple of 4 and at least 4",
                        self.n
                    ));
                }
            }
            ModelKind::Vin | ModelKind::Hvin => {
                if self.side(l - 1) < 2 {
                    return bad(format!("coarsest side of N={} with {l} levels below 2", self.n));
                }
            }
        }
        match self.domain {
            Domain::Grid2d => {
                if self.orientations.iter().any(|&t| t != 1) {
                    return bad("grid2d models have a single orientation".into());
                }
            }
            Domain::Locomotion3d => {
                if self.orientations[0] != ORIENTATIONS {
                    return bad(format!("finest level must have {ORIENTATIONS} orientations"));
                }
                for w in self.orientations.windows(2) {
                    if w[1] == 0 || w[0] != 2 * w[1] {
                        return bad(format!("orientations {:?} must halve per level", self.orientations));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("kind".into(), self.kind.name().into()),
            ("domain".into(), self.domain.name().into()),
            ("n".into(), self.n.to_string()),
            ("levels".into(), self.levels.to_string()),
            ("features".into(), list(&self.features)),
            ("orientations".into(), list(&self.orientations)),
            ("iterations".into(), list(&self.iterations)),
            ("sweeps".into(), self.sweeps.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            ("cell_size_m".into(), format!("{:?}", self.cell_size_m)),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    pub fn from_pairs(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let req = |k: &str| get(k).ok_or_else(|| Error::Format(format!("missing config key {k}")));
        fn num<N: FromStr>(k: &str, v: &str) -> Result<N> {
            v.parse().map_err(|_| Error::Format(format!("bad value {v:?} for {k}")))
        }
        let list = |k: &str| -> Result<Vec<usize>> {
            let v = req(k)?;
            v.split(',').map(|x| num(k, x)).collect()
        };
        let cfg = ModelConfig {
            kind: req("kind")?.parse()?,
            domain: req("domain")?.parse()?,
            n: num("n", &req("n")?)?,
            levels: num("levels", &req("levels")?)?,
            features: list("features")?,
            orientations: list("orientations")?,
            iterations: list("iterations")?,
            sweeps: num("sweeps", &req("sweeps")?)?,
            hidden: num("hidden", &req("hidden")?)?,
            cell_size_m: num("cell_size_m", &req("cell_size_m")?)?,
            seed: num("seed", &req("seed")?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
