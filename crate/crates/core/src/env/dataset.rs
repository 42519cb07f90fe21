use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Agent, Domain, GridWorld, PlanningTask, Pose, Sample, SampleSource, ORIENTATIONS};
use crate::expert::{expert_path, CostModel, Path};
use crate::rng::{derive_seed, rng, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub tasks_per_world: usize,
    pub subpaths_per_task: usize,
    /// Minimum Chebyshev start–goal distance; `None` means `N/4`.
    pub min_goal_distance: Option<usize>,
    pub max_goal_draws: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { tasks_per_world: 7, subpaths_per_task: 0, min_goal_distance: None, max_goal_draws: 50, seed: 0 }
    }
}

/// A planning task together with its canonical expert path.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskRecord {
    pub task: PlanningTask,
    pub path: Path,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub tasks: Vec<TaskRecord>,
    pub skipped_worlds: Vec<usize>,
}

fn start_pose(world: &GridWorld, agent: &Agent, r: &mut Rng) -> Option<Pose> {
    let (cx, cy) = world.center();
    match agent.domain {
        Domain::Grid2d => agent.pose_valid(world, Pose::cell(cx, cy)).then_some(Pose::cell(cx, cy)),
        Domain::Locomotion3d => {
            let valid: Vec<usize> =
                (0..ORIENTATIONS).filter(|&t| agent.pose_valid(world, Pose::new(cx, cy, t))).collect();
            valid.choose(r).map(|&t| Pose::new(cx, cy, t))
        }
    }
}

/// Sample `count` tasks from the world center with reachable goals. Returns
/// `None` when some task exhausts its goal draws.
pub fn sample_tasks(
    world: &GridWorld,
    world_index: usize,
    agent: &Agent,
    cost: &CostModel,
    cfg: &DatasetConfig,
    r: &mut Rng,
) -> Option<Vec<TaskRecord>> {
    let n = world.n() as i32;
    let start = start_pose(world, agent, r)?;
    let min_d = cfg.min_goal_distance.unwrap_or(world.n() / 4) as i32;
    let candidates: Vec<(i32, i32)> = (0..n)
        .flat_map(|y| (0..n).map(move |x| (x, y)))
        .filter(|&(x, y)| !world.blocked(x, y) && Pose::cell(x, y).chebyshev(&start) >= min_d)
        .collect();
    if candidates.is_empty() {
        return None;
    }
    let mut tasks = Vec::with_capacity(cfg.tasks_per_world);
    for _ in 0..cfg.tasks_per_world {
        let mut found = None;
        for _ in 0..cfg.max_goal_draws {
            let &(x, y) = candidates.choose(r).expect("non-empty");
            let goal = match agent.domain {
                Domain::Grid2d => Pose::cell(x, y),
                Domain::Locomotion3d => Pose::new(x, y, r.gen_range(0..ORIENTATIONS)),
            };
            if !agent.pose_valid(world, goal) {
                continue;
            }
            if let Some(path) = expert_path(world, agent, cost, start, goal) {
                found = Some(TaskRecord {
                    task: PlanningTask { world_index, start, goal, domain: agent.domain },
                    path,
                });
                break;
            }
        }
        tasks.push(found?);
    }
    Some(tasks)
}

fn path_samples(
    world_index: usize,
    path: &Path,
    from: usize,
    to: usize,
    source: SampleSource,
    out: &mut Vec<Sample>,
) {
    let goal = path.poses[to];
    for i in from..to {
        out.push(Sample {
            world_index,
            current: path.poses[i],
            goal,
            expert_action: path.actions[i],
            source,
        });
    }
}

/// Expert-labelled samples: every step of every task path, plus steps of
/// random sub-paths between two distinct positions on each path.
pub fn build_dataset(worlds: &[GridWorld], agent: &Agent, cost: &CostModel, cfg: &DatasetConfig) -> Dataset {
    let mut ds = Dataset::default();
    for (wi, world) in worlds.iter().enumerate() {
        let mut r = rng(derive_seed(cfg.seed, wi as u64));
        let Some(tasks) = sample_tasks(world, wi, agent, cost, cfg, &mut r) else {
            log::warn!("world {wi}: no solvable goal within {} draws, skipped", cfg.max_goal_draws);
            ds.skipped_worlds.push(wi);
            continue;
        };
        for rec in tasks {
            let len = rec.path.poses.len();
            path_samples(wi, &rec.path, 0, len - 1, SampleSource::FullPath, &mut ds.samples);
            for _ in 0..cfg.subpaths_per_task {
                if len < 2 {
                    break;
                }
                let a = r.gen_range(0..len);
                let mut b = r.gen_range(0..len - 1);
                if b >= a {
                    b += 1;
                }
                let (from, to) = (a.min(b), a.max(b));
                path_samples(wi, &rec.path, from, to, SampleSource::SubPath, &mut ds.samples);
            }
            ds.tasks.push(rec);
        }
    }
    ds
}

/// Fraction of samples per action id.
pub fn action_frequencies(samples: &[Sample], actions: usize) -> Vec<f64> {
    let mut counts = vec![0.0; actions];
    for s in samples {
        counts[s.expert_action.id()] += 1.0;
    }
    let total = samples.len().max(1) as f64;
    counts.iter().map(|c| c / total).collect()
}

/// Inverse frequencies scaled to mean 1 over the observed actions; unseen
/// actions get weight 0.
pub fn inverse_frequency_weights(freqs: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = freqs.iter().map(|&f| if f > 0.0 { 1.0 / f } else { 0.0 }).collect();
    let seen = freqs.iter().filter(|&&f| f > 0.0).count();
    if seen == 0 {
        return inv;
    }
    let mean = inv.iter().sum::<f64>() / seen as f64;
    inv.iter().map(|w| w / mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::env::generate::{gen_random_obstacles, ObstacleConfig};

    #[test]
    fn uniform_frequencies_give_unit_weights() {
        assert_eq!(inverse_frequency_weights(&[0.25; 4]), vec![1.0; 4]);
    }

    #[test]
    fn skewed_frequencies() {
        let w = inverse_frequency_weights(&[3.0, 1.0]);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn unseen_actions_get_zero_weight() {
        let w = inverse_frequency_weights(&[0.5, 0.0, 0.5]);
        assert_eq!(w, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn duplicating_a_class_keeps_contributions_balanced() {
        let mk = |a: u8| Sample {
            world_index: 0,
            current: Pose::cell(0, 0),
            goal: Pose::cell(1, 1),
            expert_action: Action(a),
            source: SampleSource::FullPath,
        };
        let mut samples = vec![mk(0), mk(0), mk(0), mk(1)];
        let w1 = inverse_frequency_weights(&action_frequencies(&samples, 2));
        samples.extend([mk(0), mk(0), mk(0)]);
        let f2 = action_frequencies(&samples, 2);
        let w2 = inverse_frequency_weights(&f2);
        assert!((w2[0] / w2[1] - 0.5 * w1[0] / w1[1]).abs() < 1e-12);
        assert!((f2[0] * w2[0] - f2[1] * w2[1]).abs() < 1e-12);
    }

    #[test]
    fn full_path_samples_follow_the_path() {
        let worlds: Vec<_> =
            (0..4).map(|s| gen_random_obstacles(16, s, &ObstacleConfig::for_size(16)).unwrap()).collect();
        let agent = Agent::new(Domain::Grid2d);
        let cfg = DatasetConfig { seed: 9, ..Default::default() };
        let ds = build_dataset(&worlds, &agent, &CostModel::default(), &cfg);
        assert_eq!(ds.tasks.len() + 7 * ds.skipped_worlds.len(), 28);
        let total: usize = ds.tasks.iter().map(|t| t.path.action_count).sum();
        assert_eq!(ds.samples.len(), total);
        let mut k = 0;
        for rec in &ds.tasks {
            assert_eq!(rec.task.start, Pose::cell(8, 8));
            assert!(rec.task.goal.chebyshev(&rec.task.start) >= 4);
            for (i, &a) in rec.path.actions.iter().enumerate() {
                assert_eq!(ds.samples[k].expert_action, a);
                assert_eq!(ds.samples[k].current, rec.path.poses[i]);
                assert_eq!(ds.samples[k].source, SampleSource::FullPath);
                k += 1;
            }
        }
    }

    #[test]
    fn sub_paths_lie_on_the_expert_path() {
        let worlds = vec![gen_random_obstacles(16, 1, &ObstacleConfig::for_size(16)).unwrap()];
        let agent = Agent::new(Domain::Grid2d);
        let cfg = DatasetConfig { subpaths_per_task: 3, seed: 2, ..Default::default() };
        let ds = build_dataset(&worlds, &agent, &CostModel::default(), &cfg);
        for s in ds.samples.iter().filter(|s| s.source == SampleSource::SubPath) {
            let on_path = ds.tasks.iter().any(|t| {
                let ci = t.path.poses.iter().position(|&p| p == s.current);
                let gi = t.path.poses.iter().position(|&p| p == s.goal);
                matches!((ci, gi), (Some(c), Some(g)) if c < g && t.path.actions[c] == s.expert_action)
            });
            assert!(on_path, "{s:?}");
        }
        assert!(ds.samples.iter().any(|s| s.source == SampleSource::SubPath));
    }

    #[test]
    fn five_step_path_gives_five_samples() {
        let path = Path::from_actions(
            Pose::cell(2, 2),
            vec![Action::EAST; 5],
            Domain::Grid2d,
            &CostModel::default(),
        );
        let mut out = Vec::new();
        path_samples(0, &path, 0, 5, SampleSource::FullPath, &mut out);
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|s| s.expert_action == Action::EAST && s.goal == Pose::cell(7, 2)));
    }
}
