//! Feature extraction: converts object windows into response vectors over the
//! canonical dictionary, every response in `[0, 1]`.

mod filters;
mod lattice;

use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{
    canonical_dictionary, Channel, DataMatrix, FeatureDictionary, FeatureKind, FeatureSpec, Geometry, LatticeDims,
    Transform,
};

pub use filters::{FilterBank, Kernel};
pub use lattice::{hsv_to_rgb, mean_hsv, rgb_to_hsv, ImageLattice};

/// Energy floor for the local sketch normalizer, in units of a unit-contrast
/// step edge.
pub const SKETCH_ENERGY_FLOOR: f64 = 0.1;
/// Mean gradient magnitude at which flatness has dropped to `1 - tanh(1)`.
pub const FLATNESS_SCALE: f64 = 0.08;
/// Bins of the per-cell orientation histogram behind the texture descriptor.
pub const TEXTURE_BINS: usize = 8;
/// Gradient magnitudes below this are ignored by the texture descriptor.
pub const TEXTURE_MIN_GRADIENT: f64 = 0.04;

/// Local search lattice for sketch features: offsets in cells, orientation
/// steps and scale steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub xy: u32,
    pub theta: u32,
    pub scale: u32,
}

impl Perturbation {
    pub const NONE: Perturbation = Perturbation { xy: 0, theta: 0, scale: 0 };

    pub fn contains(&self, t: &Transform) -> bool {
        t.dx.unsigned_abs() <= self.xy
            && t.dy.unsigned_abs() <= self.xy
            && t.dtheta.unsigned_abs() <= self.theta
            && t.dscale.unsigned_abs() <= self.scale
    }
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { xy: 1, theta: 1, scale: 1 }
    }
}

/// Lattice and dictionary parameters for object windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub cells_x: u32,
    pub cells_y: u32,
    pub cell_size: u32,
    pub orientations: u16,
    pub scales: u16,
    pub color_bins: u16,
    pub perturbation: Perturbation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            cells_x: 8,
            cells_y: 8,
            cell_size: 16,
            orientations: 16,
            scales: 2,
            color_bins: 12,
            perturbation: Perturbation::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 {
            return invalid("empty cell: cell size is zero");
        }
        if self.cells_x == 0 || self.cells_y == 0 {
            return invalid(format!("zero-sized lattice {}x{}", self.cells_x, self.cells_y));
        }
        if self.orientations == 0 || self.scales == 0 || self.color_bins == 0 {
            return invalid("orientation, scale and color bin counts must be positive");
        }
        Ok(())
    }

    pub fn dims(&self) -> LatticeDims {
        LatticeDims { width: self.cells_x, height: self.cells_y }
    }

    pub fn window_px(&self) -> (u32, u32) {
        (self.cells_x * self.cell_size, self.cells_y * self.cell_size)
    }

    pub fn dictionary(&self) -> Result<FeatureDictionary> {
        canonical_dictionary(self.dims(), self.orientations, self.scales, self.color_bins)
    }

    pub fn dimension(&self) -> usize {
        self.dims().cells()
            * (self.orientations as usize * self.scales as usize + self.color_bins as usize + 2)
    }

    pub fn filter_bank(&self) -> FilterBank {
        FilterBank::new(self.orientations, self.scales, self.cell_size)
    }
}

/// Pixel rectangle inside a source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// An annotated object crop of a source image.
#[derive(Debug, Clone)]
pub struct ObjectWindow {
    pub image: Arc<RgbImage>,
    pub rect: PixelRect,
    pub label: String,
}

impl ObjectWindow {
    pub fn new(image: Arc<RgbImage>, rect: PixelRect, label: impl Into<String>) -> Result<Self> {
        if rect.w == 0 || rect.h == 0 {
            return invalid("object window has zero area");
        }
        if rect.x + rect.w > image.width() || rect.y + rect.h > image.height() {
            return invalid(format!(
                "window {}x{}+{}+{} exceeds image {}x{}",
                rect.w,
                rect.h,
                rect.x,
                rect.y,
                image.width(),
                image.height()
            ));
        }
        Ok(Self { image, rect, label: label.into() })
    }

    /// Window covering the whole image.
    pub fn full(image: Arc<RgbImage>, label: impl Into<String>) -> Result<Self> {
        let rect = PixelRect { x: 0, y: 0, w: image.width(), h: image.height() };
        Self::new(image, rect, label)
    }

    pub fn crop(&self) -> RgbImage {
        image::imageops::crop_imm(&*self.image, self.rect.x, self.rect.y, self.rect.w, self.rect.h).to_image()
    }

    pub fn lattice(&self, cfg: &FeatureConfig) -> Result<ImageLattice> {
        cfg.validate()?;
        if self.rect.w < cfg.cells_x || self.rect.h < cfg.cells_y {
            return invalid(format!(
                "window {}x{} is smaller than the {}x{} cell grid",
                self.rect.w, self.rect.h, cfg.cells_x, cfg.cells_y
            ));
        }
        ImageLattice::from_rgb(&self.crop(), cfg)
    }
}

/// Feature responses of one window plus per-column geometric evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector {
    pub values: Vec<f64>,
    /// Argmax transform for sketch columns (object level) or object
    /// attributes (scene level); `None` elsewhere.
    pub geometry: Vec<Option<Geometry>>,
}

impl ResponseVector {
    /// Plain responses without geometric evidence.
    pub fn from_values(values: Vec<f64>) -> Self {
        let geometry = vec![None; values.len()];
        Self { values, geometry }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Maps a pixel color to a hue-saturation bin: bin 0 holds achromatic
/// pixels, bins `1..C` split the hue circle with red centred on bin 1.
pub fn color_bin(hsv: [f64; 3], bins: u16) -> u16 {
    let [h, s, v] = hsv;
    if bins <= 1 || s < 0.25 || v < 0.2 {
        return 0;
    }
    let hue_bins = f64::from(bins - 1);
    let width = 1.0 / hue_bins;
    let idx = ((h + width / 2.0).rem_euclid(1.0) / width) as u16;
    1 + idx.min(bins - 2)
}

/// Representative RGB (in `[0, 1]`) of a color bin, used for rendering.
pub fn bin_color(bin: u16, bins: u16) -> [f64; 3] {
    if bin == 0 || bins <= 1 {
        return [0.5, 0.5, 0.5];
    }
    let hue = f64::from(bin - 1) / f64::from(bins - 1);
    hsv_to_rgb(hue, 0.8, 0.85)
}

/// Per-cell histogram descriptors.
#[derive(Debug, Clone, PartialEq)]
struct CellHistograms {
    texture: f64,
    flatness: f64,
    color: Vec<f64>,
}

/// All filter energies and histogram descriptors of one lattice.
#[derive(Debug, Clone)]
pub struct WindowFeatures {
    cfg: FeatureConfig,
    energies: Vec<f64>,
    sigma: f64,
    cells: Vec<CellHistograms>,
}

impl WindowFeatures {
    pub fn compute(lattice: &ImageLattice, bank: &FilterBank, cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let support = bank.max_support() as u32;
        if lattice.px_width() < support || lattice.px_height() < support {
            return invalid(format!(
                "window {}x{} px is smaller than the filter support {support} px",
                lattice.px_width(),
                lattice.px_height()
            ));
        }
        if lattice.width != cfg.cells_x || lattice.height != cfg.cells_y || lattice.cell_size != cfg.cell_size {
            return invalid("lattice does not match the feature configuration");
        }
        let (o_count, s_count) = (cfg.orientations, cfg.scales);
        let mut energies = Vec::with_capacity(cfg.dims().cells() * o_count as usize * s_count as usize);
        let plane = bank.pad(lattice);
        for cy in 0..cfg.cells_y {
            for cx in 0..cfg.cells_x {
                for o in 0..o_count {
                    for s in 0..s_count {
                        energies.push(bank.energy_at_cell(&plane, cx, cy, o, s));
                    }
                }
            }
        }
        let sigma = median(&energies).max(SKETCH_ENERGY_FLOOR);
        let cells = cell_histograms(lattice, cfg)?;
        Ok(Self { cfg: *cfg, energies, sigma, cells })
    }

    /// Local normalizer applied to the sketch energies.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Raw filter energy at a cell, orientation and scale.
    pub fn energy(&self, cx: u32, cy: u32, orientation: u16, scale: u16) -> f64 {
        self.energies[self.energy_index(cx, cy, orientation, scale)]
    }

    fn energy_index(&self, cx: u32, cy: u32, orientation: u16, scale: u16) -> usize {
        let cell = (cy * self.cfg.cells_x + cx) as usize;
        (cell * self.cfg.orientations as usize + orientation as usize) * self.cfg.scales as usize + scale as usize
    }

    /// Saturated sketch response without local search.
    pub fn sketch_at(&self, cx: u32, cy: u32, orientation: u16, scale: u16) -> f64 {
        (self.energy(cx, cy, orientation, scale) / self.sigma).tanh()
    }

    /// Sketch response maximized over the perturbation lattice around `spec`.
    /// The search compares raw energies (saturation is monotone); ties go to
    /// the smallest offset (L1 norm, then lexicographic).
    pub fn sketch(&self, spec: &FeatureSpec, perturb: Perturbation) -> Result<(f64, Transform)> {
        let FeatureKind::Sketch { orientation, scale } = spec.kind else {
            return invalid(format!("{spec} is not a sketch feature"));
        };
        if spec.x >= self.cfg.cells_x || spec.y >= self.cfg.cells_y {
            return invalid(format!("{spec} outside the lattice"));
        }
        let o_count = i32::from(self.cfg.orientations);
        let (pxy, pth, psc) = (perturb.xy as i32, perturb.theta as i32, perturb.scale as i32);
        let mut best: Option<(f64, u32, Transform)> = None;
        for dx in -pxy..=pxy {
            for dy in -pxy..=pxy {
                let (x, y) = (spec.x as i32 + dx, spec.y as i32 + dy);
                if x < 0 || y < 0 || x >= self.cfg.cells_x as i32 || y >= self.cfg.cells_y as i32 {
                    continue;
                }
                for dtheta in -pth..=pth {
                    let o = (i32::from(orientation) + dtheta).rem_euclid(o_count) as u16;
                    for dscale in -psc..=psc {
                        let s = i32::from(scale) + dscale;
                        if s < 0 || s >= i32::from(self.cfg.scales) {
                            continue;
                        }
                        let value = self.energy(x as u32, y as u32, o, s as u16);
                        if best.as_ref().is_some_and(|(bv, _, _)| value < *bv) {
                            continue;
                        }
                        let t = Transform::new(dx, dy, dtheta, dscale);
                        let l1 = t.dx.unsigned_abs() + t.dy.unsigned_abs() + t.dtheta.unsigned_abs() + t.dscale.unsigned_abs();
                        let better = match &best {
                            None => true,
                            Some((bv, bl1, bt)) => {
                                value > *bv
                                    || (value == *bv
                                        && (l1, (t.dx, t.dy, t.dtheta, t.dscale))
                                            < (*bl1, (bt.dx, bt.dy, bt.dtheta, bt.dscale)))
                            }
                        };
                        if better {
                            best = Some((value, l1, t));
                        }
                    }
                }
            }
        }
        let (energy, _, t) = best.expect("the zero offset is always inside the lattice");
        Ok(((energy / self.sigma).tanh(), t))
    }

    /// Texture, flatness or color response of a cell.
    pub fn histogram(&self, spec: &FeatureSpec) -> Result<f64> {
        if spec.x >= self.cfg.cells_x || spec.y >= self.cfg.cells_y {
            return invalid(format!("{spec} outside the lattice"));
        }
        let cell = &self.cells[(spec.y * self.cfg.cells_x + spec.x) as usize];
        match spec.kind {
            FeatureKind::Texture => Ok(cell.texture),
            FeatureKind::Flatness => Ok(cell.flatness),
            FeatureKind::Color { bin } => cell
                .color
                .get(bin as usize)
                .copied()
                .ok_or_else(|| crate::Error::InvalidArgument(format!("color bin {bin} out of range"))),
            FeatureKind::Sketch { .. } => invalid(format!("{spec} is not a histogram feature")),
        }
    }

    /// Responses for every dictionary column, in dictionary order.
    pub fn response_vector(&self, dict: &FeatureDictionary) -> Result<ResponseVector> {
        let mut values = Vec::with_capacity(dict.len());
        let mut geometry = Vec::with_capacity(dict.len());
        for spec in dict.specs() {
            if spec.channel() == Channel::Sketch {
                let (v, t) = self.sketch(spec, self.cfg.perturbation)?;
                values.push(v);
                geometry.push(Some(Geometry::Transform(t)));
            } else {
                values.push(self.histogram(spec)?);
                geometry.push(None);
            }
        }
        Ok(ResponseVector { values, geometry })
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn cell_histograms(lattice: &ImageLattice, cfg: &FeatureConfig) -> Result<Vec<CellHistograms>> {
    let cs = i64::from(cfg.cell_size);
    if cs == 0 {
        return invalid("empty cell");
    }
    let mut out = Vec::with_capacity(cfg.dims().cells());
    for cy in 0..i64::from(cfg.cells_y) {
        for cx in 0..i64::from(cfg.cells_x) {
            let mut mag_sum = 0.0;
            let mut orient = [0.0; TEXTURE_BINS];
            let mut color = vec![0.0; cfg.color_bins as usize];
            for y in cy * cs..(cy + 1) * cs {
                for x in cx * cs..(cx + 1) * cs {
                    let gx = 0.5 * (lattice.intensity(x + 1, y) - lattice.intensity(x - 1, y));
                    let gy = 0.5 * (lattice.intensity(x, y + 1) - lattice.intensity(x, y - 1));
                    let mag = gx.hypot(gy);
                    mag_sum += mag;
                    if mag >= TEXTURE_MIN_GRADIENT {
                        let angle = gy.atan2(gx).rem_euclid(std::f64::consts::PI);
                        let bin = ((angle / std::f64::consts::PI) * TEXTURE_BINS as f64) as usize;
                        orient[bin.min(TEXTURE_BINS - 1)] += mag;
                    }
                    color[color_bin(lattice.hsv(x, y), cfg.color_bins) as usize] += 1.0;
                }
            }
            let n = (cs * cs) as f64;
            let flatness = 1.0 - (mag_sum / n / FLATNESS_SCALE).tanh();
            let total: f64 = orient.iter().sum();
            let texture = if total > 0.0 {
                let entropy: f64 = orient
                    .iter()
                    .filter(|w| **w > 0.0)
                    .map(|w| {
                        let p = w / total;
                        -p * p.ln()
                    })
                    .sum();
                (entropy / (TEXTURE_BINS as f64).ln()).clamp(0.0, 1.0)
            } else {
                0.0
            };
            for c in &mut color {
                *c /= n;
            }
            out.push(CellHistograms { texture, flatness: flatness.clamp(0.0, 1.0), color });
        }
    }
    Ok(out)
}

/// Single sketch response of a window (computes the whole lattice; use
/// [`extract_responses`] for full vectors).
pub fn extract_sketch(
    window: &ObjectWindow,
    spec: &FeatureSpec,
    perturb: Perturbation,
    cfg: &FeatureConfig,
) -> Result<(f64, Transform)> {
    if spec.channel() != Channel::Sketch {
        return invalid(format!("{spec} is not a sketch feature"));
    }
    let lattice = window.lattice(cfg)?;
    WindowFeatures::compute(&lattice, &cfg.filter_bank(), cfg)?.sketch(spec, perturb)
}

/// Single histogram response (texture, flatness or color) of a window.
pub fn extract_histogram(window: &ObjectWindow, spec: &FeatureSpec, cfg: &FeatureConfig) -> Result<f64> {
    if spec.channel() == Channel::Sketch {
        return invalid(format!("{spec} is not a histogram feature"));
    }
    let lattice = window.lattice(cfg)?;
    WindowFeatures::compute(&lattice, &cfg.filter_bank(), cfg)?.histogram(spec)
}

/// Full response vector of a lattice.
pub fn lattice_responses(lattice: &ImageLattice, bank: &FilterBank, cfg: &FeatureConfig) -> Result<ResponseVector> {
    WindowFeatures::compute(lattice, bank, cfg)?.response_vector(&cfg.dictionary()?)
}

/// Full response vector of a window.
pub fn extract_responses(window: &ObjectWindow, bank: &FilterBank, cfg: &FeatureConfig) -> Result<ResponseVector> {
    lattice_responses(&window.lattice(cfg)?, bank, cfg)
}

/// Stacks the response vectors of same-label windows into a data matrix.
pub fn build_data_matrix(windows: &[ObjectWindow], cfg: &FeatureConfig) -> Result<DataMatrix> {
    let (matrix, _) = build_data_matrix_with_geometry(windows, cfg)?;
    Ok(matrix)
}

/// As [`build_data_matrix`], also returning each row's response vector.
pub fn build_data_matrix_with_geometry(
    windows: &[ObjectWindow],
    cfg: &FeatureConfig,
) -> Result<(DataMatrix, Vec<ResponseVector>)> {
    let Some(first) = windows.first() else {
        return invalid("no object windows");
    };
    if let Some(w) = windows.iter().find(|w| w.label != first.label) {
        return invalid(format!("mixed object labels '{}' and '{}'", first.label, w.label));
    }
    let dict = cfg.dictionary()?;
    let bank = cfg.filter_bank();
    let rows: Vec<ResponseVector> = windows
        .par_iter()
        .map(|w| WindowFeatures::compute(&w.lattice(cfg)?, &bank, cfg)?.response_vector(&dict))
        .collect::<Result<_>>()?;
    let names = windows
        .iter()
        .enumerate()
        .map(|(i, w)| format!("{}#{i}@{},{},{},{}", w.label, w.rect.x, w.rect.y, w.rect.w, w.rect.h))
        .collect();
    let columns = dict.specs().iter().map(ToString::to_string).collect();
    let values = rows.iter().flat_map(|r| r.values.iter().copied()).collect();
    Ok((DataMatrix::new(names, columns, values)?, rows))
}
