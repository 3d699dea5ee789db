//! Seeded synthetic data with known ground truth: planted-block matrices and
//! procedurally rendered photographs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::DataMatrix;
use crate::pursuit::Tiling;

/// Parameters of a planted-block matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub rows: usize,
    pub columns: usize,
    pub regions: usize,
    /// Rows `0..planted_rows` carry the planted block in every region.
    pub planted_rows: usize,
    pub block_columns: usize,
    /// Probability of a high entry inside a block.
    pub p_block: f64,
    /// Probability of a high entry elsewhere.
    pub p_background: f64,
    pub negatives: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            rows: 40,
            columns: 256,
            regions: 4,
            planted_rows: 20,
            block_columns: 16,
            p_block: 0.9,
            p_background: 0.2,
            negatives: 400,
            seed: 7,
        }
    }
}

/// Planted-block matrix with its ground truth.
#[derive(Debug, Clone)]
pub struct PlantedBlocks {
    pub matrix: DataMatrix,
    pub negatives: DataMatrix,
    pub tiling: Tiling,
    pub planted_rows: Vec<usize>,
    /// Planted columns per region.
    pub planted_columns: Vec<Vec<usize>>,
}

/// High entries are uniform on `[0.6, 1]`, low entries uniform on `[0, 0.2]`.
fn entry(rng: &mut ChaCha8Rng, p_high: f64) -> f64 {
    if rng.gen_bool(p_high) {
        rng.gen_range(0.6..=1.0)
    } else {
        rng.gen_range(0.0..=0.2)
    }
}

pub fn planted_blocks(spec: &PlantedSpec) -> Result<PlantedBlocks> {
    if spec.planted_rows > spec.rows || spec.regions == 0 || spec.columns % spec.regions != 0 {
        return invalid("inconsistent planted-block specification");
    }
    let tiling = Tiling::contiguous(spec.columns, spec.regions)?;
    if spec.block_columns > spec.columns / spec.regions {
        return invalid("planted block wider than its region");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let planted_columns: Vec<Vec<usize>> = tiling
        .regions
        .iter()
        .map(|r| {
            let mut cols: Vec<usize> = r.columns.choose_multiple(&mut rng, spec.block_columns).copied().collect();
            cols.sort_unstable();
            cols
        })
        .collect();
    let mut in_block = vec![false; spec.columns];
    for c in planted_columns.iter().flatten() {
        in_block[*c] = true;
    }
    let rows = (0..spec.rows)
        .map(|i| {
            let values = (0..spec.columns)
                .map(|c| {
                    let p = if i < spec.planted_rows && in_block[c] { spec.p_block } else { spec.p_background };
                    entry(&mut rng, p)
                })
                .collect();
            (format!("x{i}"), values)
        })
        .collect();
    let negatives = (0..spec.negatives)
        .map(|i| (format!("n{i}"), (0..spec.columns).map(|_| entry(&mut rng, spec.p_background)).collect()))
        .collect();
    Ok(PlantedBlocks {
        matrix: DataMatrix::from_rows(rows)?,
        negatives: DataMatrix::from_rows(negatives)?,
        tiling,
        planted_rows: (0..spec.planted_rows).collect(),
        planted_columns,
    })
}

/// `|a ∩ b| / |a ∪ b|` of two index sets; 1 for two empty sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    use std::collections::BTreeSet;
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Side of every synthetic photograph, in pixels.
pub const SYNTH_SIZE: u32 = 192;
/// Side of the half-size candidate windows of a synthetic photograph.
const WINDOW: u32 = SYNTH_SIZE / 2;
/// Stride of the half-size candidate windows.
const STRIDE: u32 = SYNTH_SIZE / 4;

/// Annotated object of a synthetic photograph; `bbox` is `[x, y, w, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub bbox: [u32; 4],
}

impl Annotation {
    pub fn rect(&self) -> crate::features::PixelRect {
        let [x, y, w, h] = self.bbox;
        crate::features::PixelRect { x, y, w, h }
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub name: String,
    pub image: image::RgbImage,
    pub objects: Vec<Annotation>,
    /// Generating class, when the corpus has several.
    pub class: Option<String>,
    /// `1 - difficulty`, when the generator grades its images.
    pub quality_score: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SynthCorpus {
    pub train: Vec<SynthImage>,
    pub test: Vec<SynthImage>,
    pub negatives: Vec<SynthImage>,
}

/// The corpora the generator knows how to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusKind {
    TwoClass,
    MountainRiver,
    SingleObject,
    ShuffledLayout,
}

/// Generator parameters; counts default per corpus when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: CorpusKind,
    #[serde(default)]
    pub train: Option<usize>,
    #[serde(default)]
    pub test: Option<usize>,
    #[serde(default)]
    pub negatives: Option<usize>,
}

impl SynthSpec {
    pub fn new(kind: CorpusKind) -> Self {
        Self { kind, train: None, test: None, negatives: None }
    }
}

pub const EDGE_GRID: &str = "edge-grid";
pub const COLOR_FIELD: &str = "color-field";

/// Renders a corpus. Every random draw flows from `seed`.
pub fn generate(spec: &SynthSpec, seed: u64) -> SynthCorpus {
    let negatives = spec.negatives.unwrap_or(24);
    let mut corpus = match spec.kind {
        CorpusKind::TwoClass => two_class(seed, spec.train.unwrap_or(20), spec.test.unwrap_or(20)),
        CorpusKind::MountainRiver => mountain_river(seed, spec.train.unwrap_or(12), spec.test.unwrap_or(0)),
        CorpusKind::SingleObject => single_object(seed, spec.train.unwrap_or(12)),
        CorpusKind::ShuffledLayout => shuffled_layout(seed, spec.train.unwrap_or(36)),
    };
    corpus.negatives = clutter(negatives, seed.wrapping_add(1_000_003));
    corpus
}

type Color = [f64; 3];

/// Floating-point RGB canvas in `[0, 1]`.
struct Canvas {
    w: u32,
    h: u32,
    px: Vec<Color>,
}

impl Canvas {
    fn new(w: u32, h: u32, color: Color) -> Self {
        Self { w, h, px: vec![color; (w * h) as usize] }
    }

    fn set(&mut self, x: i64, y: i64, c: Color) {
        if x >= 0 && y >= 0 && x < i64::from(self.w) && y < i64::from(self.h) {
            self.px[(y as u32 * self.w + x as u32) as usize] = c;
        }
    }

    fn rect(&mut self, x: u32, y: u32, w: u32, h: u32, c: Color) {
        for yy in y..(y + h).min(self.h) {
            for xx in x..(x + w).min(self.w) {
                self.set(i64::from(xx), i64::from(yy), c);
            }
        }
    }

    /// Vertical gradient from `top` to `bottom` over rows `y0..y1`.
    fn vgradient(&mut self, y0: u32, y1: u32, top: Color, bottom: Color) {
        for y in y0..y1.min(self.h) {
            let t = f64::from(y - y0) / f64::from((y1 - y0).max(1));
            let c = [0, 1, 2].map(|i| top[i] + (bottom[i] - top[i]) * t);
            self.rect(0, y, self.w, 1, c);
        }
    }

    fn hgradient(&mut self, left: Color, right: Color) {
        for x in 0..self.w {
            let t = f64::from(x) / f64::from(self.w.max(2) - 1);
            let c = [0, 1, 2].map(|i| left[i] + (right[i] - left[i]) * t);
            for y in 0..self.h {
                self.set(i64::from(x), i64::from(y), c);
            }
        }
    }

    /// Thick segment from `a` to `b`.
    fn line(&mut self, a: (f64, f64), b: (f64, f64), width: f64, c: Color) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = (dx * dx + dy * dy).max(1e-12);
        let pad = width.ceil() as i64 + 1;
        let (x0, x1) = (a.0.min(b.0).floor() as i64 - pad, a.0.max(b.0).ceil() as i64 + pad);
        let (y0, y1) = (a.1.min(b.1).floor() as i64 - pad, a.1.max(b.1).ceil() as i64 + pad);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0);
                let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
                if qx * qx + qy * qy <= width * width / 4.0 {
                    self.set(x, y, c);
                }
            }
        }
    }

    fn triangle(&mut self, p: [(f64, f64); 3], c: Color) {
        let edge = |a: (f64, f64), b: (f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
        let x0 = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).floor() as i64;
        let x1 = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        let y0 = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).floor() as i64;
        let y1 = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let e = [edge(p[0], p[1], px, py), edge(p[1], p[2], px, py), edge(p[2], p[0], px, py)];
                if e.iter().all(|v| *v >= 0.0) || e.iter().all(|v| *v <= 0.0) {
                    self.set(x, y, c);
                }
            }
        }
    }

    fn disk(&mut self, center: (f64, f64), radius: f64, c: Color) {
        let r = radius.ceil() as i64;
        let (cx, cy) = (center.0.floor() as i64, center.1.floor() as i64);
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                let (dx, dy) = (x as f64 + 0.5 - center.0, y as f64 + 0.5 - center.1);
                if dx * dx + dy * dy <= radius * radius {
                    self.set(x, y, c);
                }
            }
        }
    }

    fn noise(&mut self, rng: &mut ChaCha8Rng, sigma: f64) {
        if sigma <= 0.0 {
            return;
        }
        let normal = rand_distr::Normal::new(0.0, sigma).expect("positive sigma");
        for p in &mut self.px {
            let n: f64 = rng.sample(normal);
            *p = p.map(|c| c + n);
        }
    }

    fn into_image(self) -> image::RgbImage {
        image::RgbImage::from_fn(self.w, self.h, |x, y| {
            let c = self.px[(y * self.w + x) as usize];
            image::Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        })
    }
}

fn hsv(h: f64, s: f64, v: f64) -> Color {
    crate::features::hsv_to_rgb(h, s, v)
}

/// Generic clutter: random segments, blobs, color patches and noise.
pub fn clutter(n: usize, seed: u64) -> Vec<SynthImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let s = f64::from(SYNTH_SIZE);
            let base = hsv(rng.gen(), rng.gen_range(0.0..0.6), rng.gen_range(0.3..1.0));
            let mut c = Canvas::new(SYNTH_SIZE, SYNTH_SIZE, base);
            for _ in 0..rng.gen_range(2..6) {
                let color = hsv(rng.gen(), rng.gen_range(0.0..1.0), rng.gen_range(0.1..1.0));
                let (x, y) = (rng.gen_range(0..SYNTH_SIZE), rng.gen_range(0..SYNTH_SIZE));
                c.rect(x, y, rng.gen_range(16..96), rng.gen_range(16..96), color);
            }
            for _ in 0..rng.gen_range(2..8) {
                let color = hsv(rng.gen(), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
                let a = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
                let b = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
                c.line(a, b, rng.gen_range(1.0..6.0), color);
            }
            for _ in 0..rng.gen_range(0..4) {
                let color = hsv(rng.gen(), rng.gen_range(0.0..1.0), rng.gen_range(0.1..1.0));
                c.disk((rng.gen_range(0.0..s), rng.gen_range(0.0..s)), rng.gen_range(6.0..40.0), color);
            }
            let sigma = rng.gen_range(0.0..0.12);
            c.noise(&mut rng, sigma);
            SynthImage {
                name: format!("clutter-{i:03}"),
                image: c.into_image(),
                objects: Vec::new(),
                class: None,
                quality_score: None,
            }
        })
        .collect()
}

/// Light background shared by both classes; also the occluder color.
const PAPER: Color = [0.85, 0.85, 0.82];

/// Covers a band of `fraction` of the frame along a random side.
fn occlude(c: &mut Canvas, rng: &mut ChaCha8Rng, fraction: f64) {
    let span = (fraction * f64::from(SYNTH_SIZE)).round() as u32;
    if span == 0 {
        return;
    }
    let far = SYNTH_SIZE - span;
    match rng.gen_range(0..4) {
        0 => c.rect(0, 0, SYNTH_SIZE, span, PAPER),
        1 => c.rect(0, far, SYNTH_SIZE, span, PAPER),
        2 => c.rect(0, 0, span, SYNTH_SIZE, PAPER),
        _ => c.rect(far, 0, span, SYNTH_SIZE, PAPER),
    }
}

fn edge_grid(rng: &mut ChaCha8Rng, difficulty: f64) -> Canvas {
    let mut c = Canvas::new(SYNTH_SIZE, SYNTH_SIZE, PAPER);
    let dark = [0.1, 0.1, 0.12];
    let period = 24.0;
    let s = f64::from(SYNTH_SIZE);
    let mut k = 0.0;
    while k * period < s {
        let x = k * period + 12.0 + rng.gen_range(-1.0..1.0);
        let y = k * period + 12.0 + rng.gen_range(-1.0..1.0);
        c.line((x, 0.0), (x, s), 4.0, dark);
        c.line((0.0, y), (s, y), 4.0, dark);
        k += 1.0;
    }
    occlude(&mut c, rng, 0.7 * difficulty);
    c.noise(rng, 0.04 * difficulty);
    c
}

fn color_field(rng: &mut ChaCha8Rng, difficulty: f64) -> Canvas {
    let hue = rng.gen_range(0.05..0.1);
    let left = hsv(hue, 0.9, 0.95);
    let right = hsv(hue + rng.gen_range(0.0..0.02), 0.85, 0.8);
    let mut c = Canvas::new(SYNTH_SIZE, SYNTH_SIZE, left);
    c.hgradient(left, right);
    occlude(&mut c, rng, 0.7 * difficulty);
    c
}

/// Edge-grid versus color-field photographs. Every image annotates its
/// central half-size window; difficulty is spread evenly over `[0, 0.9]`.
pub fn two_class(seed: u64, train_per_class: usize, test_per_class: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = [STRIDE, STRIDE, WINDOW, WINDOW];
    let mut make = |split: &str, n: usize, hard: bool| {
        let mut out = Vec::new();
        for class in [EDGE_GRID, COLOR_FIELD] {
            let object = if class == EDGE_GRID { "grid" } else { "field" };
            for i in 0..n {
                let difficulty = if hard { 0.9 * i as f64 / (n.max(2) - 1) as f64 } else { rng.gen_range(0.0..0.15) };
                let canvas =
                    if class == EDGE_GRID { edge_grid(&mut rng, difficulty) } else { color_field(&mut rng, difficulty) };
                out.push(SynthImage {
                    name: format!("{split}-{class}-{i:03}"),
                    image: canvas.into_image(),
                    objects: vec![Annotation { label: object.into(), bbox: center }],
                    class: Some(class.into()),
                    quality_score: Some(1.0 - difficulty),
                });
            }
        }
        out
    };
    let train = make("train", train_per_class, false);
    let test = make("test", test_per_class, true);
    SynthCorpus { train, test, negatives: Vec::new() }
}

fn sky_and_ground(c: &mut Canvas) {
    c.vgradient(0, WINDOW, hsv(0.58, 0.35, 0.95), hsv(0.58, 0.15, 0.98));
    c.rect(0, WINDOW, SYNTH_SIZE, SYNTH_SIZE - WINDOW, hsv(0.3, 0.45, 0.6));
}

/// Mountain filling the half-size window at `(x, 0)`.
fn draw_mountain(c: &mut Canvas, rng: &mut ChaCha8Rng, x: u32) {
    let x = f64::from(x);
    let w = f64::from(WINDOW);
    let apex = (x + w / 2.0 + rng.gen_range(-3.0..3.0), 12.0 + rng.gen_range(-2.0..2.0));
    c.triangle([apex, (x + 4.0, w), (x + w - 4.0, w)], hsv(0.07, 0.35, 0.35));
    let snow = 0.28;
    let left = (apex.0 + (x + 4.0 - apex.0) * snow, apex.1 + (w - apex.1) * snow);
    let right = (apex.0 + (x + w - 4.0 - apex.0) * snow, apex.1 + (w - apex.1) * snow);
    c.triangle([apex, left, right], [0.95, 0.95, 0.97]);
}

/// River band across the lower part of the frame.
fn draw_river(c: &mut Canvas, rng: &mut ChaCha8Rng) {
    let top = WINDOW + 24 + rng.gen_range(0..4);
    let bottom = top + 48;
    c.rect(0, top, SYNTH_SIZE, bottom - top, hsv(0.6, 0.75, 0.7));
    let s = f64::from(SYNTH_SIZE);
    for k in 1..4 {
        let y = f64::from(top) + f64::from(k) * 12.0;
        c.line((0.0, y), (s, y), 2.0, hsv(0.58, 0.35, 0.9));
    }
}

/// Mountains in the upper windows above a river in the lower windows.
pub fn mountain_river(seed: u64, n_train: usize, n_test: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |split: &str, n: usize| {
        (0..n)
            .map(|i| {
                let mut c = Canvas::new(SYNTH_SIZE, SYNTH_SIZE, [1.0; 3]);
                sky_and_ground(&mut c);
                let mx = STRIDE * (i as u32 % 3);
                draw_mountain(&mut c, &mut rng, mx);
                draw_river(&mut c, &mut rng);
                c.noise(&mut rng, 0.02);
                SynthImage {
                    name: format!("{split}-mountain-river-{i:03}"),
                    image: c.into_image(),
                    objects: vec![
                        Annotation { label: "mountain".into(), bbox: [mx, 0, WINDOW, WINDOW] },
                        Annotation { label: "river".into(), bbox: [STRIDE, WINDOW, WINDOW, WINDOW] },
                    ],
                    class: Some("mountain-river".into()),
                    quality_score: None,
                }
            })
            .collect::<Vec<_>>()
    };
    let train = make("train", n_train);
    let test = make("test", n_test);
    SynthCorpus { train, test, negatives: Vec::new() }
}

/// One mountain, always in the top-left window.
pub fn single_object(seed: u64, n: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = (0..n)
        .map(|i| {
            let mut c = Canvas::new(SYNTH_SIZE, SYNTH_SIZE, [1.0; 3]);
            sky_and_ground(&mut c);
            draw_mountain(&mut c, &mut rng, 0);
            c.noise(&mut rng, 0.02);
            SynthImage {
                name: format!("single-{i:03}"),
                image: c.into_image(),
                objects: vec![Annotation { label: "mountain".into(), bbox: [0, 0, WINDOW, WINDOW] }],
                class: Some("single".into()),
                quality_score: None,
            }
        })
        .collect();
    SynthCorpus { train, test: Vec::new(), negatives: Vec::new() }
}

/// One mountain per image in a uniformly drawn half-size window.
pub fn shuffled_layout(seed: u64, n: usize) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = (0..n)
        .map(|i| {
            let (gx, gy) = (rng.gen_range(0..3u32), rng.gen_range(0..3u32));
            let (x, y) = (gx * STRIDE, gy * STRIDE);
            let mut c = Canvas::new(SYNTH_SIZE, SYNTH_SIZE, hsv(0.3, 0.2, 0.9));
            let mut patch = Canvas::new(WINDOW, WINDOW, [1.0; 3]);
            patch.vgradient(0, WINDOW, hsv(0.58, 0.35, 0.95), hsv(0.58, 0.15, 0.98));
            draw_mountain(&mut patch, &mut rng, 0);
            for py in 0..WINDOW {
                for px in 0..WINDOW {
                    c.set(i64::from(x + px), i64::from(y + py), patch.px[(py * WINDOW + px) as usize]);
                }
            }
            c.noise(&mut rng, 0.02);
            SynthImage {
                name: format!("shuffled-{i:03}"),
                image: c.into_image(),
                objects: vec![Annotation { label: "mountain".into(), bbox: [x, y, WINDOW, WINDOW] }],
                class: Some("shuffled".into()),
                quality_score: None,
            }
        })
        .collect();
    SynthCorpus { train, test: Vec::new(), negatives: Vec::new() }
}
