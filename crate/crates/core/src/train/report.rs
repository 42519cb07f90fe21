use std::fmt::Write as _;
use std::str::FromStr;

use crate::env::{Domain, Pose};
use crate::error::{Error, Result};

/// Outcome of one evaluation task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskLine {
    pub world: usize,
    pub start: Pose,
    pub goal: Pose,
    pub success: bool,
    /// Expert-path states where the policy chose the expert's action.
    pub acc_matches: usize,
    pub acc_steps: usize,
    /// Rollout path cost, in cells.
    pub len: f64,
    /// Expert path cost, in cells.
    pub opt: f64,
    pub collided: bool,
    pub oscillation: bool,
    pub goal_clamped: bool,
    /// Wall-clock planning time of the policy and of A*, in milliseconds.
    pub timing: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub domain: Domain,
    pub worlds: usize,
    pub skipped_worlds: usize,
    pub tasks: usize,
    pub successes: usize,
    pub collisions: usize,
    pub oscillations: usize,
    pub goal_clamped: usize,
    pub acc_matches: usize,
    pub acc_steps: usize,
    pub accuracy: f64,
    pub success_rate: f64,
    /// Mean relative excess cost over successful rollouts; `None` without
    /// any success.
    pub path_difference: Option<f64>,
    /// Mean per-task planning times (policy, A*) in milliseconds.
    pub timing: Option<(f64, f64)>,
    pub lines: Vec<TaskLine>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl EvalReport {
    pub fn from_lines(model: &str, domain: Domain, worlds: usize, skipped_worlds: usize, lines: Vec<TaskLine>) -> Self {
        let count = |f: fn(&TaskLine) -> bool| lines.iter().filter(|l| f(l)).count();
        let successes = count(|l| l.success);
        let acc_matches = lines.iter().map(|l| l.acc_matches).sum();
        let acc_steps = lines.iter().map(|l| l.acc_steps).sum();
        let diffs: Vec<f64> = lines.iter().filter(|l| l.success).map(|l| (l.len - l.opt) / l.opt).collect();
        let path_difference = (!diffs.is_empty()).then(|| diffs.iter().sum::<f64>() / diffs.len() as f64);
        let timed: Vec<(f64, f64)> = lines.iter().filter_map(|l| l.timing).collect();
        let timing = (!timed.is_empty() && timed.len() == lines.len()).then(|| {
            let k = timed.len() as f64;
            (timed.iter().map(|t| t.0).sum::<f64>() / k, timed.iter().map(|t| t.1).sum::<f64>() / k)
        });
        EvalReport {
            model: model.to_string(),
            domain,
            worlds,
            skipped_worlds,
            tasks: lines.len(),
            successes,
            collisions: count(|l| l.collided),
            oscillations: count(|l| l.oscillation),
            goal_clamped: count(|l| l.goal_clamped),
            acc_matches,
            acc_steps,
            accuracy: ratio(acc_matches, acc_steps),
            success_rate: ratio(successes, lines.len()),
            path_difference,
            timing,
            lines,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let pd = self.path_difference.map_or("n/a".to_string(), |v| v.to_string());
        for (k, v) in [
            ("model", self.model.clone()),
            ("domain", self.domain.to_string()),
            ("worlds", self.worlds.to_string()),
            ("skipped_worlds", self.skipped_worlds.to_string()),
            ("tasks", self.tasks.to_string()),
            ("successes", self.successes.to_string()),
            ("collisions", self.collisions.to_string()),
            ("oscillations", self.oscillations.to_string()),
            ("goal_clamped", self.goal_clamped.to_string()),
            ("acc_matches", self.acc_matches.to_string()),
            ("acc_steps", self.acc_steps.to_string()),
            ("accuracy", self.accuracy.to_string()),
            ("success_rate", self.success_rate.to_string()),
            ("path_difference", pd),
        ] {
            writeln!(s, "{k}={v}").expect("string write");
        }
        if let Some((m, e)) = self.timing {
            writeln!(s, "model_ms={m}\nexpert_ms={e}").expect("string write");
        }
        for l in &self.lines {
            write!(
                s,
                "task {} {} {} success {} acc_steps {}/{} len {} opt {} collided {} oscillation {} goal_clamped {}",
                l.world,
                l.start,
                l.goal,
                u8::from(l.success),
                l.acc_matches,
                l.acc_steps,
                l.len,
                l.opt,
                u8::from(l.collided),
                u8::from(l.oscillation),
                u8::from(l.goal_clamped),
            )
            .expect("string write");
            if let Some((m, e)) = l.timing {
                write!(s, " model_ms {m} expert_ms {e}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("report: {m}"));
        let mut keys: Vec<(&str, &str)> = Vec::new();
        let mut lines = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(rest) = line.strip_prefix("task ") {
                lines.push(parse_task(rest).map_err(|e| bad(format!("{e} in {line:?}")))?);
            } else {
                let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("bad line {line:?}")))?;
                keys.push((k, v));
            }
        }
        let get = |k: &str| keys.iter().find(|(a, _)| *a == k).map(|(_, v)| *v).ok_or_else(|| bad(format!("missing {k}")));
        fn num<V: FromStr>(k: &str, v: &str) -> Result<V> {
            v.parse().map_err(|_| Error::Format(format!("report: bad value {v:?} for {k}")))
        }
        let int = |k: &str| -> Result<usize> { num(k, get(k)?) };
        let real = |k: &str| -> Result<f64> { num(k, get(k)?) };
        let path_difference = match get("path_difference")? {
            "n/a" => None,
            v => Some(num("path_difference", v)?),
        };
        let timing = match (get("model_ms"), get("expert_ms")) {
            (Ok(m), Ok(e)) => Some((num("model_ms", m)?, num("expert_ms", e)?)),
            _ => None,
        };
        let report = EvalReport {
            model: get("model")?.to_string(),
            domain: get("domain")?.parse()?,
            worlds: int("worlds")?,
            skipped_worlds: int("skipped_worlds")?,
            tasks: int("tasks")?,
            successes: int("successes")?,
            collisions: int("collisions")?,
            oscillations: int("oscillations")?,
            goal_clamped: int("goal_clamped")?,
            acc_matches: int("acc_matches")?,
            acc_steps: int("acc_steps")?,
            accuracy: real("accuracy")?,
            success_rate: real("success_rate")?,
            path_difference,
            timing,
            lines,
        };
        if report.tasks != report.lines.len() {
            return Err(bad(format!("{} task lines for tasks={}", report.lines.len(), report.tasks)));
        }
        Ok(report)
    }
}

fn parse_pose(s: &str) -> std::result::Result<Pose, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("bad pose {s:?}"));
    }
    let bad = || format!("bad pose {s:?}");
    Ok(Pose::new(
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

fn parse_task(rest: &str) -> std::result::Result<TaskLine, String> {
    let f: Vec<&str> = rest.split_whitespace().collect();
    if f.len() < 17 || !(f.len() - 3).is_multiple_of(2) {
        return Err(format!("unexpected field count {}", f.len()));
    }
    let world = f[0].parse().map_err(|_| "bad world index".to_string())?;
    let (start, goal) = (parse_pose(f[1])?, parse_pose(f[2])?);
    let field = |name: &str| -> std::result::Result<&str, String> {
        f[3..].chunks(2).find(|c| c[0] == name).map(|c| c[1]).ok_or_else(|| format!("missing {name}"))
    };
    let flag = |name: &str| -> std::result::Result<bool, String> {
        match field(name)? {
            "0" => Ok(false),
            "1" => Ok(true),
            v => Err(format!("bad flag {v:?} for {name}")),
        }
    };
    let real = |name: &str| -> std::result::Result<f64, String> {
        field(name)?.parse().map_err(|_| format!("bad number for {name}"))
    };
    let (k, n) = field("acc_steps")?.split_once('/').ok_or("bad acc_steps")?;
    let timing = match (real("model_ms"), real("expert_ms")) {
        (Ok(m), Ok(e)) => Some((m, e)),
        _ => None,
    };
    Ok(TaskLine {
        world,
        start,
        goal,
        success: flag("success")?,
        acc_matches: k.parse().map_err(|_| "bad acc_steps")?,
        acc_steps: n.parse().map_err(|_| "bad acc_steps")?,
        len: real("len")?,
        opt: real("opt")?,
        collided: flag("collided")?,
        oscillation: flag("oscillation")?,
        goal_clamped: flag("goal_clamped")?,
        timing,
    })
}
