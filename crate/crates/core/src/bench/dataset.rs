//! Moving-shapes videos with captions, and their on-disk layout.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seqtok::BBox;

pub const COLORS: [(&str, [u8; 3]); 6] = [
    ("red", [220, 40, 40]),
    ("green", [40, 180, 60]),
    ("blue", [50, 80, 230]),
    ("yellow", [235, 215, 40]),
    ("purple", [150, 60, 200]),
    ("orange", [245, 140, 30]),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Square,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Circle, Shape::Square, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether the offset `(dx, dy)` from the center, in units of the half
    /// side, lies inside the shape.
    fn contains(self, dx: f64, dy: f64) -> bool {
        match self {
            Shape::Circle => dx * dx + dy * dy <= 1.0,
            Shape::Square => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            // apex at the top, base at the bottom
            Shape::Triangle => dy.abs() <= 1.0 && dx.abs() <= (dy + 1.0) / 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attribute {
    ScaleVariation,
    FastMotion,
    Distractor,
    Occlusion,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::ScaleVariation,
        Attribute::FastMotion,
        Attribute::Distractor,
        Attribute::Occlusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::ScaleVariation => "scale-variation",
            Attribute::FastMotion => "fast-motion",
            Attribute::Distractor => "distractor",
            Attribute::Occlusion => "occlusion",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    #[default]
    Easy,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(Error::Config(format!("unknown difficulty `{s}` (easy | hard)"))),
        }
    }
}

pub const CAPTION_TEMPLATES: [&str; 4] = [
    "the {color} {shape}",
    "the {color} {shape} moving among other shapes",
    "track the {color} {shape}",
    "a {color} {shape} on a textured background",
];

pub fn render_caption(template_id: usize, color: &str, shape: Shape) -> String {
    CAPTION_TEMPLATES[template_id]
        .replace("{color}", color)
        .replace("{shape}", shape.name())
}

/// Recovers `(color, shape)` from a caption built by [`render_caption`].
pub fn parse_caption(caption: &str) -> Option<(String, Shape)> {
    let words: Vec<&str> = caption.split_whitespace().collect();
    words.windows(2).find_map(|w| {
        let shape = Shape::ALL.into_iter().find(|s| s.name() == w[1])?;
        COLORS.iter().find(|c| c.0 == w[0]).map(|c| (c.0.to_string(), shape))
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectDesc {
    pub color: String,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub seed: u64,
    pub difficulty: Difficulty,
    pub attributes: Vec<Attribute>,
    pub frame_width: usize,
    pub frame_height: usize,
    pub template_id: usize,
    /// Every rendered object; the first is the target.
    pub objects: Vec<ObjectDesc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    pub name: String,
    pub frames: Vec<Image>,
    pub boxes: Vec<BBox>,
    pub caption: String,
    pub meta: SequenceMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub count: usize,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub frame_size: usize,
    pub length: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            count: 8,
            seed: 0,
            difficulty: Difficulty::Easy,
            frame_size: 128,
            length: 30,
        }
    }
}

struct Track {
    desc: ObjectDesc,
    rgb: [u8; 3],
    /// Center and half side per frame.
    path: Vec<(f64, f64, f64)>,
}

const MIN_SIZE: f64 = 8.0;
const MAX_SIZE: f64 = 32.0;

fn walk<R: Rng>(rng: &mut R, frame: f64, length: usize, size: f64, max_speed: f64, scale_var: bool) -> Vec<(f64, f64, f64)> {
    let jolt = Normal::new(0.0, max_speed * 0.3).expect("positive std");
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let period = rng.random_range(length as f64 * 0.5..length as f64 * 1.5).max(2.0);
    let half = |t: usize| {
        let s = if scale_var {
            size * (1.0 + 0.35 * (std::f64::consts::TAU * t as f64 / period + phase).sin())
        } else {
            size
        };
        s.clamp(MIN_SIZE, MAX_SIZE) / 2.0
    };
    let margin = MAX_SIZE / 2.0;
    let mut x = rng.random_range(margin..frame - margin);
    let mut y = rng.random_range(margin..frame - margin);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = rng.random_range(0.3..1.0) * max_speed;
    let (mut vx, mut vy) = (speed * angle.cos(), speed * angle.sin());
    let mut path = Vec::with_capacity(length);
    for t in 0..length {
        let r = half(t);
        path.push((x, y, r));
        vx += jolt.sample(rng);
        vy += jolt.sample(rng);
        let v = (vx * vx + vy * vy).sqrt();
        if v > max_speed {
            vx *= max_speed / v;
            vy *= max_speed / v;
        }
        let next = half(t + 1);
        let (lo, hi) = (next, frame - next);
        x += vx;
        y += vy;
        if x < lo || x > hi {
            vx = -vx;
            x = x.clamp(lo, hi);
        }
        if y < lo || y > hi {
            vy = -vy;
            y = y.clamp(lo, hi);
        }
    }
    path
}

fn background<R: Rng>(rng: &mut R, size: usize) -> Vec<[f64; 3]> {
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(15.0..50.0));
    let waves: Vec<(f64, f64, f64, usize)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.03..0.25),
                rng.random_range(0.03..0.25),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0..3),
            )
        })
        .collect();
    let mut px = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut c = base;
            for &(fx, fy, ph, ch) in &waves {
                c[ch] += 12.0 * (fx * x as f64 + fy * y as f64 + ph).sin();
            }
            let n = rng.random_range(-6.0..6.0);
            px.push(c.map(|v| v + n));
        }
    }
    px
}

fn render(bg: &[[f64; 3]], size: usize, tracks: &[&Track], t: usize) -> Image {
    let mut px: Vec<[f64; 3]> = bg.to_vec();
    for tr in tracks {
        let (cx, cy, r) = tr.path[t];
        let y0 = ((cy - r).floor().max(0.0)) as usize;
        let y1 = ((cy + r).ceil() as usize).min(size);
        let x0 = ((cx - r).floor().max(0.0)) as usize;
        let x1 = ((cx + r).ceil() as usize).min(size);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = (x as f64 + 0.5 - cx) / r;
                let dy = (y as f64 + 0.5 - cy) / r;
                if tr.desc.shape.contains(dx, dy) {
                    px[y * size + x] = tr.rgb.map(f64::from);
                }
            }
        }
    }
    let bytes: Vec<u8> = px.iter().flat_map(|c| c.map(|v| v.round().clamp(0.0, 255.0) as u8)).collect();
    Image::from_rgb8(size, size, &bytes).expect("consistent size")
}

/// Seed of sequence `index` under a master seed.
pub fn sequence_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// One sequence, fully determined by `seed`.
pub fn generate_sequence(name: &str, seed: u64, difficulty: Difficulty, frame_size: usize, length: usize) -> Result<SyntheticSequence> {
    if length == 0 {
        return Err(Error::InvalidArgument("sequence length must be positive".into()));
    }
    if (frame_size as f64) < 2.0 * MAX_SIZE {
        return Err(Error::InvalidArgument(format!("frame size {frame_size} below {}", 2.0 * MAX_SIZE)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frame = frame_size as f64;
    let attributes: Vec<Attribute> = match difficulty {
        Difficulty::Easy => Vec::new(),
        Difficulty::Hard => {
            let picked: Vec<Attribute> = Attribute::ALL.into_iter().filter(|_| rng.random_bool(0.5)).collect();
            if picked.is_empty() {
                vec![Attribute::ALL[rng.random_range(0..4)]]
            } else {
                picked
            }
        }
    };
    let has = |a| attributes.contains(&a);

    // distinct colors for the base objects; the target is object 0
    let n_objects = rng.random_range(1..=4);
    let mut color_ids: Vec<usize> = (0..COLORS.len()).collect();
    color_ids.shuffle(&mut rng);
    let mut descs: Vec<(usize, Shape)> = color_ids[..n_objects]
        .iter()
        .map(|&c| (c, Shape::ALL[rng.random_range(0..3)]))
        .collect();
    let target = descs[0];
    let unused_pair = |descs: &[(usize, Shape)], color: Option<usize>, rng: &mut ChaCha8Rng| -> (usize, Shape) {
        loop {
            let c = color.unwrap_or_else(|| rng.random_range(0..COLORS.len()));
            let s = Shape::ALL[rng.random_range(0..3)];
            if !descs.contains(&(c, s)) {
                return (c, s);
            }
        }
    };
    if has(Attribute::Distractor) {
        let d = unused_pair(&descs, Some(target.0), &mut rng);
        descs.push(d);
    }
    let occluder = if has(Attribute::Occlusion) {
        let o = unused_pair(&descs, None, &mut rng);
        descs.push(o);
        Some(descs.len() - 1)
    } else {
        None
    };

    let normal_speed = 2.0;
    let mut tracks = Vec::with_capacity(descs.len());
    for (i, &(c, s)) in descs.iter().enumerate() {
        let size = rng.random_range(MIN_SIZE..=24.0);
        let speed = if i == 0 && has(Attribute::FastMotion) { 6.0 } else { normal_speed };
        let scale = i == 0 && has(Attribute::ScaleVariation);
        let path = walk(&mut rng, frame, length, size, speed, scale);
        tracks.push(Track {
            desc: ObjectDesc {
                color: COLORS[c].0.to_string(),
                shape: s,
            },
            rgb: COLORS[c].1,
            path,
        });
    }
    if let Some(o) = occluder {
        // sweep across the target, passing over it mid-sequence
        let offset = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let reach = 2.5 * MAX_SIZE;
        let target_path = tracks[0].path.clone();
        let mid = (length as f64 - 1.0) / 2.0;
        for (t, p) in tracks[o].path.iter_mut().enumerate() {
            let u = if length > 1 { (t as f64 - mid) / mid.max(1.0) } else { 0.0 };
            let (tx, ty, _) = target_path[t];
            p.0 = (tx + offset.0 * reach * u).clamp(p.2, frame - p.2);
            p.1 = (ty + offset.1 * reach * u).clamp(p.2, frame - p.2);
        }
    }

    // other shapes pass behind the target; only the occluder covers it
    let mut order: Vec<&Track> = tracks[1..].iter().enumerate().filter(|&(i, _)| Some(i + 1) != occluder).map(|(_, t)| t).collect();
    order.push(&tracks[0]);
    order.extend(occluder.map(|o| &tracks[o]));
    let bg = background(&mut rng, frame_size);
    let frames = (0..length).map(|t| render(&bg, frame_size, &order, t)).collect();
    let boxes = tracks[0]
        .path
        .iter()
        .map(|&(cx, cy, r)| BBox::corner(cx - r, cy - r, cx + r, cy + r))
        .collect();
    let template_id = rng.random_range(0..CAPTION_TEMPLATES.len());
    let caption = render_caption(template_id, &tracks[0].desc.color, tracks[0].desc.shape);
    Ok(SyntheticSequence {
        name: name.to_string(),
        frames,
        boxes,
        caption,
        meta: SequenceMeta {
            seed,
            difficulty,
            attributes,
            frame_width: frame_size,
            frame_height: frame_size,
            template_id,
            objects: tracks.into_iter().map(|t| t.desc).collect(),
        },
    })
}

/// `cfg.count` sequences named `seq_0000`, `seq_0001`, ...
pub fn generate_dataset(cfg: &GenConfig) -> Result<Vec<SyntheticSequence>> {
    if cfg.count == 0 {
        return Err(Error::InvalidArgument("dataset needs at least one sequence".into()));
    }
    (0..cfg.count)
        .map(|i| {
            generate_sequence(
                &format!("seq_{i:04}"),
                sequence_seed(cfg.seed, i),
                cfg.difficulty,
                cfg.frame_size,
                cfg.length,
            )
        })
        .collect()
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write!(f, "P6\n{} {}\n255\n", img.width(), img.height())?;
    f.write_all(&img.to_rgb8())?;
    f.flush()?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(format_err(path, "expected binary 8-bit P6"));
    }
    let dim = |s: &str| s.parse::<usize>().map_err(|_| format_err(path, format!("bad dimension `{s}`")));
    let (w, h) = (dim(&fields[1])?, dim(&fields[2])?);
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h * 3 {
        return Err(format_err(path, format!("expected {} pixel bytes, found {}", w * h * 3, body.len())));
    }
    Image::from_rgb8(h, w, body)
}

/// One `x,y,w,h` line per box.
pub fn write_boxes(path: &Path, boxes: &[BBox]) -> Result<()> {
    let mut out = String::new();
    for b in boxes {
        let [x, y, w, h] = b.xywh();
        out.push_str(&format!("{x},{y},{w},{h}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_boxes(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?;
            match v[..] {
                [x, y, w, h] if w >= 0.0 && h >= 0.0 => Ok(BBox::from_xywh(x, y, w, h)),
                _ => Err(format_err(path, format!("line {}: expected x,y,w,h", i + 1))),
            }
        })
        .collect()
}

pub fn write_sequence(dir: &Path, seq: &SyntheticSequence) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in seq.frames.iter().enumerate() {
        write_ppm(&dir.join(format!("frame_{i:06}.ppm")), f)?;
    }
    write_boxes(&dir.join("groundtruth.txt"), &seq.boxes)?;
    fs::write(dir.join("language.txt"), format!("{}\n", seq.caption))?;
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&seq.meta)? + "\n")?;
    Ok(())
}

/// Every `frame_*.ppm` in `dir`, in name order.
pub fn read_frames(dir: &Path) -> Result<Vec<Image>> {
    let mut frame_paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".ppm"))
        })
        .collect();
    frame_paths.sort();
    frame_paths.iter().map(|p| read_ppm(p)).collect()
}

pub fn read_caption(dir: &Path) -> Result<String> {
    Ok(fs::read_to_string(dir.join("language.txt"))?.trim().to_string())
}

pub fn read_sequence(dir: &Path) -> Result<SyntheticSequence> {
    let frames = read_frames(dir)?;
    let boxes = read_boxes(&dir.join("groundtruth.txt"))?;
    if frames.len() != boxes.len() {
        return Err(format_err(
            dir,
            format!("{} frames but {} ground-truth boxes", frames.len(), boxes.len()),
        ));
    }
    let caption = read_caption(dir)?;
    let meta: SequenceMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_string();
    Ok(SyntheticSequence {
        name,
        frames,
        boxes,
        caption,
        meta,
    })
}

pub fn write_dataset(dir: &Path, seqs: &[SyntheticSequence]) -> Result<()> {
    for s in seqs {
        write_sequence(&dir.join(&s.name), s)?;
    }
    Ok(())
}

/// Every sequence directory under `dir`, in name order.
pub fn read_dataset(dir: &Path) -> Result<Vec<SyntheticSequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("groundtruth.txt").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(format_err(dir, "no sequence directories"));
    }
    dirs.iter().map(|d| read_sequence(d)).collect()
}
