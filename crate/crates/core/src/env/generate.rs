use rand::seq::SliceRandom;
use rand::Rng as _;

use super::io::WorldSet;
use super::{Domain, GridWorld};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};

/// Random rectangular obstacle placement.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleConfig {
    /// Inclusive range of obstacle counts.
    pub count: (usize, usize),
    /// Inclusive range of rectangle side lengths, in cells.
    pub size: (usize, usize),
    /// Chebyshev radius around the center cell kept free.
    pub clear_radius: usize,
    pub cell_size_m: f32,
}

impl ObstacleConfig {
    /// Counts `U[6,14]` at 32×32, scaled with the map area; sides `U[2,6]`.
    pub fn for_size(n: usize) -> Self {
        let scale = (n * n) as f64 / 1024.0;
        let lo = ((6.0 * scale).round() as usize).max(1);
        let hi = ((14.0 * scale).round() as usize).max(lo);
        ObstacleConfig { count: (lo, hi), size: (2, 6), clear_radius: 1, cell_size_m: 1.0 }
    }

    /// Footprint worlds keep every start orientation at the center valid.
    pub fn for_locomotion(n: usize) -> Self {
        ObstacleConfig { clear_radius: 3, cell_size_m: 0.2, ..Self::for_size(n) }
    }
}

const MAX_ATTEMPTS: usize = 100;

/// Stamp axis-aligned rectangles onto an empty grid. A world whose center
/// neighbourhood got covered is regenerated.
pub fn gen_random_obstacles(n: usize, seed: u64, cfg: &ObstacleConfig) -> Result<GridWorld> {
    let (cmin, cmax) = cfg.count;
    let (smin, smax) = cfg.size;
    if cmin > cmax || smin == 0 || smin > smax {
        return Err(Error::Config(format!("bad obstacle ranges {cfg:?}")));
    }
    let mut r = rng(seed);
    let c = (n / 2) as i64;
    let rad = cfg.clear_radius as i64;
    for _ in 0..MAX_ATTEMPTS {
        let mut world = GridWorld::free(n, cfg.cell_size_m)?;
        let count = r.gen_range(cmin..=cmax);
        for _ in 0..count {
            let w = r.gen_range(smin..=smax).min(n);
            let h = r.gen_range(smin..=smax).min(n);
            let x0 = r.gen_range(0..=n - w);
            let y0 = r.gen_range(0..=n - h);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    world.set(x, y, true);
                }
            }
        }
        let center_free = (c - rad..=c + rad)
            .all(|y| (c - rad..=c + rad).all(|x| !world.blocked(x as i32, y as i32)));
        if center_free {
            return Ok(world);
        }
    }
    Err(Error::Generation(format!(
        "could not keep the center free after {MAX_ATTEMPTS} attempts with {cfg:?}"
    )))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MazeConfig {
    /// Fraction of remaining interior walls knocked out after carving.
    pub loop_fraction: f64,
    pub cell_size_m: f32,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig { loop_fraction: 0.05, cell_size_m: 1.0 }
    }
}

/// Randomized depth-first maze on an `(n/2)×(n/2)` lattice. Lattice cell
/// `(i, j)` sits at grid cell `(2i, 2j)`; odd rows/columns hold walls.
pub fn gen_maze(n: usize, seed: u64, cfg: &MazeConfig) -> Result<GridWorld> {
    if n < 8 {
        return Err(Error::Config(format!("maze side {n} below 8")));
    }
    let mut world = GridWorld::from_occupancy(n, vec![1; n * n], cfg.cell_size_m)?;
    let m = n / 2;
    let mut r = rng(seed);
    let mut visited = vec![false; m * m];
    let start = (m / 2, m / 2);
    let mut stack = vec![start];
    visited[start.1 * m + start.0] = true;
    world.set(2 * start.0, 2 * start.1, false);
    let dirs: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    while let Some(&(i, j)) = stack.last() {
        let mut options: Vec<(usize, usize)> = dirs
            .iter()
            .filter_map(|&(dx, dy)| {
                let (ni, nj) = (i as i64 + dx, j as i64 + dy);
                (ni >= 0 && nj >= 0 && ni < m as i64 && nj < m as i64)
                    .then_some((ni as usize, nj as usize))
            })
            .filter(|&(ni, nj)| !visited[nj * m + ni])
            .collect();
        if options.is_empty() {
            stack.pop();
            continue;
        }
        options.shuffle(&mut r);
        let (ni, nj) = options[0];
        visited[nj * m + ni] = true;
        world.set(i + ni, j + nj, false);
        world.set(2 * ni, 2 * nj, false);
        stack.push((ni, nj));
    }
    // Interior walls: cells between two horizontally or vertically adjacent lattice cells.
    let mut walls: Vec<(usize, usize)> = Vec::new();
    for y in 0..n {
        for x in 0..n {
            let between_h = x % 2 == 1 && x + 3 <= n && y % 2 == 0;
            let between_v = y % 2 == 1 && y + 3 <= n && x % 2 == 0;
            if (between_h || between_v) && world.blocked(x as i32, y as i32) {
                walls.push((x, y));
            }
        }
    }
    let remove = (walls.len() as f64 * cfg.loop_fraction).round() as usize;
    walls.shuffle(&mut r);
    for &(x, y) in walls.iter().take(remove) {
        world.set(x, y, false);
    }
    Ok(world)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorldKind {
    RandomObstacles,
    Maze,
}

/// `count` worlds of one kind; world `i` uses the stream `derive_seed(seed, i)`.
pub fn gen_worlds(domain: Domain, n: usize, count: usize, kind: WorldKind, seed: u64) -> Result<WorldSet> {
    let cell_size_m = domain.default_cell_size();
    let worlds = (0..count)
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            match (kind, domain) {
                (WorldKind::Maze, Domain::Grid2d) => gen_maze(n, s, &MazeConfig { cell_size_m, ..MazeConfig::default() }),
                (WorldKind::Maze, Domain::Locomotion3d) => {
                    Err(Error::Config("mazes are only generated for grid2d".into()))
                }
                (WorldKind::RandomObstacles, Domain::Grid2d) => gen_random_obstacles(n, s, &ObstacleConfig::for_size(n)),
                (WorldKind::RandomObstacles, Domain::Locomotion3d) => {
                    gen_random_obstacles(n, s, &ObstacleConfig::for_locomotion(n))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WorldSet { domain, n, cell_size_m, worlds })
}
