//! World and sample file formats.
//!
//! Worlds (binary, little-endian): `"AVW1"`, `u32` version (1), `u32` count,
//! `u32` N, `u32` domain, `f32` cell size, then `count·N·N` occupancy bytes.
//!
//! Samples (text): header `AVS1 <domain> <A>`, then one line per sample:
//! `world_index start_x start_y start_theta goal_x goal_y goal_theta action source`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{Action, Domain, GridWorld, Pose, Sample, SampleSource};
use crate::error::{Error, Result};

pub const WORLDS_MAGIC: &[u8; 4] = b"AVW1";
pub const WORLDS_VERSION: u32 = 1;
pub const SAMPLES_MAGIC: &str = "AVS1";

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSet {
    pub domain: Domain,
    pub n: usize,
    pub cell_size_m: f32,
    pub worlds: Vec<GridWorld>,
}

impl WorldSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.worlds.len() * self.n * self.n);
        out.extend_from_slice(WORLDS_MAGIC);
        out.extend_from_slice(&WORLDS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.worlds.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&self.domain.code().to_le_bytes());
        out.extend_from_slice(&self.cell_size_m.to_le_bytes());
        for w in &self.worlds {
            assert_eq!(w.n(), self.n, "all worlds in a set share a size");
            out.extend_from_slice(w.occupancy());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 {
            return Err(Error::Format("worlds file truncated before header end".into()));
        }
        if &bytes[0..4] != WORLDS_MAGIC {
            return Err(Error::Format("not a worlds file (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != WORLDS_VERSION {
            return Err(Error::Format(format!(
                "unsupported worlds file version {version}, expected {WORLDS_VERSION}"
            )));
        }
        let count = word(8) as usize;
        let n = word(12) as usize;
        let domain = Domain::from_code(word(16))?;
        let cell_size_m = f32::from_le_bytes(bytes[20..24].try_into().expect("4 bytes"));
        let body = &bytes[24..];
        if body.len() != count * n * n {
            return Err(Error::Format(format!(
                "worlds file holds {} occupancy bytes, header implies {}",
                body.len(),
                count * n * n
            )));
        }
        let worlds = body
            .chunks(n * n)
            .take(count)
            .map(|c| GridWorld::from_occupancy(n, c.to_vec(), cell_size_m))
            .collect::<Result<Vec<_>>>()?;
        Ok(WorldSet { domain, n, cell_size_m, worlds })
    }
}

pub fn save_worlds(path: impl AsRef<Path>, set: &WorldSet) -> Result<()> {
    fs::write(path, set.to_bytes())?;
    Ok(())
}

pub fn load_worlds(path: impl AsRef<Path>) -> Result<WorldSet> {
    WorldSet::from_bytes(&fs::read(path)?)
}

pub fn write_samples(mut out: impl Write, domain: Domain, samples: &[Sample]) -> Result<()> {
    writeln!(out, "{SAMPLES_MAGIC} {} {}", domain.name(), domain.action_count())?;
    for s in samples {
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {}",
            s.world_index,
            s.current.x,
            s.current.y,
            s.current.theta,
            s.goal.x,
            s.goal.y,
            s.goal.theta,
            s.expert_action.0,
            s.source.name()
        )?;
    }
    Ok(())
}

pub fn save_samples(path: impl AsRef<Path>, domain: Domain, samples: &[Sample]) -> Result<()> {
    let mut buf = Vec::new();
    write_samples(&mut buf, domain, samples)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_samples(input: impl BufRead) -> Result<(Domain, Vec<Sample>)> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty samples file".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.first() != Some(&SAMPLES_MAGIC) {
        return Err(Error::Format("not a samples file (bad magic)".into()));
    }
    if parts.len() != 3 {
        return Err(Error::Format(format!("malformed samples header {header:?}")));
    }
    let domain: Domain = parts[1].parse()?;
    let actions: usize = parts[2].parse().map_err(|_| Error::Format("bad action count".into()))?;
    if actions != domain.action_count() {
        return Err(Error::Format(format!("{} actions declared for {domain}", actions)));
    }
    let mut samples = Vec::new();
    for (no, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("samples line {}: {line:?}", no + 2));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let int = |i: usize| f[i].parse::<i64>().map_err(|_| bad());
        let action = int(7)?;
        if action < 0 || action as usize >= actions {
            return Err(bad());
        }
        let source = match f[8] {
            "full_path" => SampleSource::FullPath,
            "sub_path" => SampleSource::SubPath,
            _ => return Err(bad()),
        };
        samples.push(Sample {
            world_index: int(0)? as usize,
            current: Pose::new(int(1)? as i32, int(2)? as i32, int(3)? as usize),
            goal: Pose::new(int(4)? as i32, int(5)? as i32, int(6)? as usize),
            expert_action: Action(action as u8),
            source,
        });
    }
    Ok((domain, samples))
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<(Domain, Vec<Sample>)> {
    read_samples(BufReader::new(fs::File::open(path)?))
}
