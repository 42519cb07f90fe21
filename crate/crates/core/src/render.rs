//! Trace files and plain-PPM renderings of worlds, paths and value maps.
//!
//! Trace (text): `AVT1 <domain>` header, `label <name>`, `world <index>`,
//! `goal <x> <y> <theta>`, then one `<x> <y> <theta>` line per visited pose,
//! start first.
//!
//! Images put cell `(x, y)` at column `x`, row `y`, so `y` grows downwards.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use crate::env::{Domain, GridWorld, Pose};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &str = "AVT1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub domain: Domain,
    pub label: String,
    pub world_index: usize,
    pub goal: Pose,
    pub poses: Vec<Pose>,
}

impl Trace {
    pub fn start(&self) -> Option<Pose> {
        self.poses.first().copied()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{TRACE_MAGIC} {}\nlabel {}\nworld {}\n", self.domain, self.label, self.world_index);
        let g = self.goal;
        writeln!(s, "goal {} {} {}", g.x, g.y, g.theta).expect("string write");
        for p in &self.poses {
            writeln!(s, "{} {} {}", p.x, p.y, p.theta).expect("string write");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("trace: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let domain = match header.split_whitespace().collect::<Vec<_>>()[..] {
            [TRACE_MAGIC, d] => d.parse()?,
            _ => return Err(bad(format!("bad header {header:?}"))),
        };
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected {key}, found {line:?}")))
        };
        let label = field("label")?;
        let world_index = field("world")?.trim().parse().map_err(|_| bad("bad world index".into()))?;
        let goal = parse_pose(&field("goal")?).ok_or_else(|| bad("bad goal".into()))?;
        let poses = lines
            .map(|l| parse_pose(l).ok_or_else(|| bad(format!("bad pose line {l:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trace { domain, label, world_index, goal, poses })
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

fn parse_pose(s: &str) -> Option<Pose> {
    let f: Vec<&str> = s.split_whitespace().collect();
    match f[..] {
        [x, y, t] => Some(Pose::new(x.parse().ok()?, y.parse().ok()?, t.parse().ok()?)),
        _ => None,
    }
}

pub type Rgb = [u8; 3];

pub const FREE: Rgb = [255, 255, 255];
pub const OCCUPIED: Rgb = [40, 40, 40];
pub const EXPERT: Rgb = [0, 160, 0];
pub const START: Rgb = [230, 160, 0];
pub const GOAL: Rgb = [200, 0, 200];
/// Colors of model paths, cycled by trace index.
pub const PALETTE: [Rgb; 6] =
    [[220, 30, 30], [30, 80, 230], [0, 170, 190], [140, 70, 20], [120, 120, 120], [150, 0, 90]];

pub fn palette_color(index: usize) -> Rgb {
    PALETTE[index % PALETTE.len()]
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Image { width, height, pixels: vec![fill; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = c;
        }
    }

    fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: Rgb) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x, y, c);
            }
        }
    }

    /// Plain (ASCII) PPM, one pixel row per line.
    pub fn to_ppm(&self) -> String {
        let mut s = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width.max(1)) {
            let line: Vec<String> = row.iter().map(|p| format!("{} {} {}", p[0], p[1], p[2])).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save_ppm(&self, path: impl AsRef<FsPath>) -> Result<()> {
        fs::write(path, self.to_ppm())?;
        Ok(())
    }
}

/// A path drawn in one color.
#[derive(Clone, Debug)]
pub struct Overlay<'a> {
    pub poses: &'a [Pose],
    pub color: Rgb,
}

/// Occupancy with overlaid paths (in order, later on top), a circle at
/// `start` and a square at `goal`. Each cell spans `scale`×`scale` pixels.
pub fn render_paths(world: &GridWorld, overlays: &[Overlay], start: Pose, goal: Pose, scale: usize) -> Image {
    let scale = scale.max(1);
    let n = world.n();
    let mut img = Image::new(n * scale, n * scale, FREE);
    let s = scale as i64;
    for y in 0..n {
        for x in 0..n {
            if world.blocked(x as i32, y as i32) {
                img.fill_rect(x as i64 * s, y as i64 * s, s, s, OCCUPIED);
            }
        }
    }
    let center = |p: Pose| (p.x as i64 * s + s / 2, p.y as i64 * s + s / 2);
    let thick = (s / 4).max(1);
    for o in overlays {
        for w in o.poses.windows(2) {
            draw_line(&mut img, center(w[0]), center(w[1]), thick, o.color);
        }
        if let [p] = o.poses {
            let (cx, cy) = center(*p);
            img.fill_rect(cx - thick / 2, cy - thick / 2, thick, thick, o.color);
        }
    }
    let (cx, cy) = center(start);
    let r = (s * 2 / 5).max(1);
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                img.put(cx + dx, cy + dy, START);
            }
        }
    }
    let (gx, gy) = center(goal);
    let half = (s * 2 / 5).max(1);
    img.fill_rect(gx - half, gy - half, 2 * half + 1, 2 * half + 1, GOAL);
    img
}

/// Bresenham line with a square pen of side `thick`.
fn draw_line(img: &mut Image, (x0, y0): (i64, i64), (x1, y1): (i64, i64), thick: i64, c: Rgb) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        img.fill_rect(x - thick / 2, y - thick / 2, thick, thick, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Row-major `side`×`side` values as a blue (low) to yellow (high) heat map.
pub fn render_values(values: &[f64], side: usize, scale: usize) -> Result<Image> {
    if values.len() != side * side {
        return Err(Error::Config(format!("{} values for a {side}x{side} map", values.len())));
    }
    let scale = scale.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = Image::new(side * scale, side * scale, FREE);
    for (i, &v) in values.iter().enumerate() {
        let t = ((v - lo) / span).clamp(0.0, 1.0);
        let c = [(255.0 * t).round() as u8, (200.0 * t + 30.0).round() as u8, (160.0 * (1.0 - t)).round() as u8];
        let (x, y) = ((i % side) as i64, (i / side) as i64);
        img.fill_rect(x * scale as i64, y * scale as i64, scale as i64, scale as i64, c);
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> Trace {
        Trace {
            domain: Domain::Grid2d,
            label: "avin".into(),
            world_index: 3,
            goal: Pose::cell(4, 2),
            poses: vec![Pose::cell(1, 1), Pose::cell(2, 1), Pose::cell(3, 2), Pose::cell(4, 2)],
        }
    }

    #[test]
    fn trace_round_trips() {
        let t = trace();
        assert_eq!(Trace::parse(&t.to_text()).unwrap(), t);
        let t3 = Trace { domain: Domain::Locomotion3d, poses: vec![Pose::new(5, 6, 15)], ..t };
        assert_eq!(Trace::parse(&t3.to_text()).unwrap(), t3);
    }

    #[test]
    fn malformed_traces_are_rejected() {
        for text in [
            "",
            "AVT2 grid2d\nlabel a\nworld 0\ngoal 1 1 0\n",
            "AVT1 grid2d\nworld 0\nlabel a\ngoal 1 1 0\n",
            "AVT1 grid2d\nlabel a\nworld 0\ngoal 1 1 0\n1 2\n",
            "AVT1 plane\nlabel a\nworld 0\ngoal 1 1 0\n",
        ] {
            assert!(Trace::parse(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn paths_markers_and_obstacles_land_on_their_cells() {
        let mut w = GridWorld::free(8, 1.0).unwrap();
        w.set(6, 6, true);
        let t = trace();
        let img = render_paths(&w, &[Overlay { poses: &t.poses, color: palette_color(0) }], Pose::cell(1, 1), t.goal, 10);
        assert_eq!((img.width, img.height), (80, 80));
        assert_eq!(img.get(65, 65), OCCUPIED);
        assert_eq!(img.get(15, 15), START);
        assert_eq!(img.get(45, 25), GOAL);
        // Midway along the first segment.
        assert_eq!(img.get(25, 15), palette_color(0));
        assert_eq!(img.get(5, 75), FREE);
    }

    #[test]
    fn ppm_header_and_size() {
        let img = Image::new(3, 2, [1, 2, 3]);
        let ppm = img.to_ppm();
        let mut lines = ppm.lines();
        assert_eq!(lines.next(), Some("P3"));
        assert_eq!(lines.next(), Some("3 2"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(lines.next(), Some("1 2 3 1 2 3 1 2 3"));
        assert_eq!(ppm.lines().count(), 5);
    }

    #[test]
    fn palette_colors_differ_from_fixed_colors() {
        for (i, c) in PALETTE.iter().enumerate() {
            assert!(![FREE, OCCUPIED, EXPERT, START, GOAL].contains(c));
            assert!(PALETTE[..i].iter().all(|d| d != c));
        }
        assert_eq!(palette_color(PALETTE.len()), PALETTE[0]);
    }

    #[test]
    fn value_maps_span_the_color_ramp() {
        let img = render_values(&[0.0, 1.0, 2.0, 3.0], 2, 1).unwrap();
        assert_eq!(img.get(0, 0), [0, 30, 160]);
        assert_eq!(img.get(1, 1), [255, 230, 0]);
        assert!(render_values(&[0.0; 3], 2, 1).is_err());
    }
}
