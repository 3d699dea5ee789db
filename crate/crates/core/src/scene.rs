//! Scene level: responses of learned object templates over candidate regions
//! of a photograph, and the scene template learned from them by the same
//! block pursuit.
//!
//! Scene columns are ordered region-major; for every (region, object) pair
//! there are four channels: presence, position, size and color. The three
//! attribute channels are gated by presence, so a region where the object is
//! absent responds near zero on all four. Where candidate regions overlap
//! heavily, only the one with the strongest presence of an object keeps it.

use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::{color_bin, lattice_responses, mean_hsv, rgb_to_hsv, ObjectWindow, PixelRect, ResponseVector};
use crate::inference::{infer_configuration, matching_score};
use crate::model::{
    AndOrTemplate, Attributes, CellRect, DataMatrix, Geometry, Layout, Level, ObjectStats, Pat, ReferenceModel,
};
use crate::pursuit::{pursue, Pursuit, PursuitConfig, RegionSpec, Tiling};

/// Attribute channels per (region, object) pair.
pub const SCENE_CHANNELS: usize = 4;
/// Side of the coarse scene grid, in cells.
pub const SCENE_GRID: u32 = 12;

/// Spread of the position match, in image fractions.
const POSITION_SIGMA: f64 = 0.2;
/// Spread of the size match, in natural-log area ratio.
const SIZE_SIGMA: f64 = 0.5;
/// Spread of the color match, in HSV-cone distance.
const COLOR_SIGMA: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneChannel {
    Presence,
    Position,
    Size,
    Color,
}

impl SceneChannel {
    pub const ALL: [SceneChannel; SCENE_CHANNELS] =
        [SceneChannel::Presence, SceneChannel::Position, SceneChannel::Size, SceneChannel::Color];
}

/// Reference from a scene template to an object template document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub label: String,
    /// File name of the object template document, when written to disk.
    pub file: Option<String>,
    /// Content digest of the object template.
    pub digest: String,
}

/// Column semantics of a scene template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub grid: u32,
    /// Candidate regions on the `grid x grid` scene lattice.
    pub regions: Vec<CellRect>,
    pub objects: Vec<ObjectRef>,
    /// Mean attributes of each scene part over the training parses it won.
    #[serde(default)]
    pub expected: Vec<Option<Attributes>>,
}

/// A 3x3 grid of overlapping windows at two scales: half-size windows at a
/// quarter stride, then two-thirds windows at a sixth stride.
pub fn candidate_regions(grid: u32) -> Result<Vec<CellRect>> {
    if grid == 0 || grid % 12 != 0 {
        return invalid(format!("scene grid {grid} must be a positive multiple of 12"));
    }
    let mut out = Vec::with_capacity(18);
    for (size, stride) in [(grid / 2, grid / 4), (2 * grid / 3, grid / 6)] {
        for y in 0..3 {
            for x in 0..3 {
                out.push(CellRect::new(x * stride, y * stride, size, size));
            }
        }
    }
    Ok(out)
}

impl SceneLayout {
    /// Layout over the default candidate regions.
    pub fn new(objects: &[AndOrTemplate]) -> Result<Self> {
        if objects.is_empty() {
            return invalid("scene layout needs at least one object template");
        }
        let objects = objects
            .iter()
            .map(|t| ObjectRef { label: t.label.clone(), file: None, digest: crate::serial::digest_of(t) })
            .collect();
        Ok(Self { grid: SCENE_GRID, regions: candidate_regions(SCENE_GRID)?, objects, expected: Vec::new() })
    }

    pub fn dimension(&self) -> usize {
        self.regions.len() * self.objects.len() * SCENE_CHANNELS
    }

    pub fn column(&self, region: usize, object: usize, channel: SceneChannel) -> usize {
        (region * self.objects.len() + object) * SCENE_CHANNELS + channel as usize
    }

    /// `(region, object, channel)` of a column.
    pub fn decode(&self, column: usize) -> (usize, usize, SceneChannel) {
        let channel = SceneChannel::ALL[column % SCENE_CHANNELS];
        let pair = column / SCENE_CHANNELS;
        (pair / self.objects.len(), pair % self.objects.len(), channel)
    }

    /// Columns regioned by candidate region.
    pub fn tiling(&self) -> Tiling {
        let per = self.objects.len() * SCENE_CHANNELS;
        Tiling {
            regions: (0..self.regions.len())
                .map(|r| RegionSpec { id: r, rect: None, columns: (r * per..(r + 1) * per).collect() })
                .collect(),
        }
    }

    /// Object a scene part stands for: the object with the largest summed
    /// `beta` among its selected columns.
    pub fn object_of(&self, pat: &Pat) -> Option<usize> {
        let mut weight = vec![0.0; self.objects.len()];
        for f in &pat.selected {
            let (_, object, _) = self.decode(f.column);
            weight[object] += f.beta;
        }
        let mut best = None;
        for (o, w) in weight.iter().enumerate() {
            if *w > 0.0 && best.map_or(true, |b: usize| *w > weight[b]) {
                best = Some(o);
            }
        }
        best
    }

    pub fn part_object_label(&self, pat: &Pat) -> Option<String> {
        self.object_of(pat).map(|o| self.objects[o].label.clone())
    }

    /// Pixel rectangle of a candidate region in an image.
    pub fn pixel_rect(&self, region: usize, width: u32, height: u32) -> PixelRect {
        let r = self.regions[region];
        let g = u64::from(self.grid);
        let sx = |c: u32| (u64::from(c) * u64::from(width) / g) as u32;
        let sy = |c: u32| (u64::from(c) * u64::from(height) / g) as u32;
        let (x0, y0, x1, y1) = (sx(r.x), sy(r.y), sx(r.x + r.w), sy(r.y + r.h));
        PixelRect { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    /// Region centre and area as image fractions.
    pub fn region_geometry(&self, region: usize) -> ([f64; 2], f64) {
        let r = self.regions[region];
        let g = f64::from(self.grid);
        let center = [(f64::from(r.x) + f64::from(r.w) / 2.0) / g, (f64::from(r.y) + f64::from(r.h) / 2.0) / g];
        (center, f64::from(r.area()) / (g * g))
    }
}

fn object_stats(template: &AndOrTemplate) -> Option<ObjectStats> {
    match &template.layout {
        Layout::Object { stats, .. } => *stats,
        _ => None,
    }
}

fn object_features(template: &AndOrTemplate) -> Result<crate::features::FeatureConfig> {
    match &template.layout {
        Layout::Object { features, .. } => Ok(*features),
        _ => invalid(format!("template '{}' is not an object template", template.label)),
    }
}

/// Normalized matching score of an object template on a window of an image.
pub fn object_response(image: &Arc<RgbImage>, template: &AndOrTemplate, region: PixelRect) -> Result<f64> {
    let cfg = object_features(template)?;
    let window = ObjectWindow::new(Arc::clone(image), region, template.label.clone())?;
    let responses = lattice_responses(&window.lattice(&cfg)?, &cfg.filter_bank(), &cfg)?;
    Ok(matching_score(&responses, template)?.normalized)
}

/// Point of an HSV color in the HSV cone.
fn cone(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let angle = h * std::f64::consts::TAU;
    [s * v * angle.cos(), s * v * angle.sin(), v]
}

pub fn color_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (p, q) = (cone(a), cone(b));
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}

/// Circular distance between the hue-saturation bins of two colors.
pub fn color_bin_distance(a: [f64; 3], b: [f64; 3], bins: u16) -> u32 {
    let (x, y) = (color_bin(a, bins), color_bin(b, bins));
    if x == y {
        return 0;
    }
    if x == 0 || y == 0 {
        // Saturation is continuous, so the achromatic bin borders every hue.
        return 1;
    }
    let hue_bins = u32::from(bins - 1);
    let d = (i32::from(x) - i32::from(y)).unsigned_abs();
    d.min(hue_bins - d)
}

fn region_mean_color(image: &RgbImage, rect: PixelRect) -> [f64; 3] {
    let samples = (rect.y..rect.y + rect.h).flat_map(|y| {
        (rect.x..rect.x + rect.w).map(move |x| {
            let [r, g, b] = image.get_pixel(x, y).0.map(|c| f64::from(c) / 255.0);
            rgb_to_hsv(r, g, b)
        })
    });
    mean_hsv(samples)
}

/// Scene response vector of one photograph.
pub fn scene_responses(image: &Arc<RgbImage>, objects: &[AndOrTemplate], layout: &SceneLayout) -> Result<ResponseVector> {
    if objects.len() != layout.objects.len() {
        return invalid(format!("{} object templates for a layout over {}", objects.len(), layout.objects.len()));
    }
    let configs = objects.iter().map(object_features).collect::<Result<Vec<_>>>()?;
    let mut banks: Vec<(crate::features::FeatureConfig, crate::features::FilterBank)> = Vec::new();
    for cfg in &configs {
        if !banks.iter().any(|(c, _)| c == cfg) {
            banks.push((*cfg, cfg.filter_bank()));
        }
    }
    // channels[region][object]
    let mut channels = vec![vec![([0.0; SCENE_CHANNELS], None); objects.len()]; layout.regions.len()];
    for (region, slot) in channels.iter_mut().enumerate() {
        let rect = layout.pixel_rect(region, image.width(), image.height());
        let window = ObjectWindow::new(Arc::clone(image), rect, "scene")?;
        let mean_color = region_mean_color(image, rect);
        let (center, area) = layout.region_geometry(region);
        let mut cache: Vec<(crate::features::FeatureConfig, ResponseVector)> = Vec::new();
        for (o, template) in objects.iter().enumerate() {
            let cfg = configs[o];
            let responses = match cache.iter().find(|(c, _)| *c == cfg) {
                Some((_, r)) => r.clone(),
                None => {
                    let bank = &banks.iter().find(|(c, _)| *c == cfg).expect("bank per config").1;
                    let r = lattice_responses(&window.lattice(&cfg)?, bank, &cfg)?;
                    cache.push((cfg, r.clone()));
                    r
                }
            };
            let score = matching_score(&responses, template)?;
            let presence = score.normalized;
            let coverage = if template.or_nodes.is_empty() {
                0.0
            } else {
                score.configuration.s.iter().filter(|s| **s).count() as f64 / template.or_nodes.len() as f64
            };
            let (position, size, color) = match object_stats(template) {
                Some(stats) => {
                    let d2 = (center[0] - stats.mean_center[0]).powi(2) + (center[1] - stats.mean_center[1]).powi(2);
                    let ratio = (area / stats.mean_area.max(1e-9)).ln();
                    let c = color_distance(mean_color, stats.mean_color);
                    (
                        presence * (-d2 / (2.0 * POSITION_SIGMA * POSITION_SIGMA)).exp(),
                        presence * (-ratio * ratio / (2.0 * SIZE_SIGMA * SIZE_SIGMA)).exp(),
                        presence * (-c * c / (2.0 * COLOR_SIGMA * COLOR_SIGMA)).exp(),
                    )
                }
                None => (presence, presence, presence),
            };
            let attributes = Attributes { position: layout.regions[region], size: area * coverage, mean_color };
            slot[o] = ([presence, position, size, color].map(|v| v.clamp(0.0, 1.0)), Some(attributes));
        }
    }
    suppress_overlaps(layout, &mut channels);

    let mut values = vec![0.0; layout.dimension()];
    let mut geometry = vec![None; layout.dimension()];
    for (region, slot) in channels.iter().enumerate() {
        for (o, (v, attributes)) in slot.iter().enumerate() {
            for (k, channel) in SceneChannel::ALL.into_iter().enumerate() {
                let c = layout.column(region, o, channel);
                values[c] = v[k];
                geometry[c] = attributes.map(Geometry::Attributes);
            }
        }
    }
    Ok(ResponseVector { values, geometry })
}

/// Regions overlapping at least this much (intersection over union) compete
/// for the same object.
pub const SUPPRESSION_IOU: f64 = 0.5;
/// Presence lead a region needs to suppress a competitor.
pub const SUPPRESSION_MARGIN: f64 = 0.25;

/// Per object, zeroes every region whose presence is clearly beaten by a
/// heavily overlapping region. Near-equal competitors (uniform stuff such as
/// a texture covering the frame) all survive.
fn suppress_overlaps(layout: &SceneLayout, channels: &mut [Vec<([f64; SCENE_CHANNELS], Option<Attributes>)>]) {
    let n = layout.regions.len();
    let objects = channels.first().map_or(0, Vec::len);
    for o in 0..objects {
        let presence: Vec<f64> = (0..n).map(|r| channels[r][o].0[0]).collect();
        let beaten: Vec<bool> = (0..n)
            .map(|r| {
                (0..n).any(|other| {
                    presence[other] > presence[r] + SUPPRESSION_MARGIN
                        && layout.regions[r].iou(&layout.regions[other]) >= SUPPRESSION_IOU
                })
            })
            .collect();
        for r in (0..n).filter(|r| beaten[*r]) {
            channels[r][o].0 = [0.0; SCENE_CHANNELS];
        }
    }
}

/// Scene matrix of a set of photographs: one row per image.
pub fn build_scene_matrix(
    images: &[(String, Arc<RgbImage>)],
    objects: &[AndOrTemplate],
    layout: &SceneLayout,
) -> Result<(DataMatrix, Vec<ResponseVector>)> {
    if images.is_empty() {
        return invalid("no scene images");
    }
    if objects.is_empty() {
        return invalid("no object templates");
    }
    let rows: Vec<ResponseVector> =
        images.par_iter().map(|(_, img)| scene_responses(img, objects, layout)).collect::<Result<_>>()?;
    let columns = (0..layout.dimension())
        .map(|c| {
            let (r, o, ch) = layout.decode(c);
            format!("r{r}.{}.{}", layout.objects[o].label, serde_json::to_value(ch).expect("enum").as_str().unwrap_or(""))
        })
        .collect();
    let names = images.iter().map(|(n, _)| n.clone()).collect();
    let values = rows.iter().flat_map(|r| r.values.iter().copied()).collect();
    Ok((DataMatrix::new(names, columns, values)?, rows))
}

/// Learns a scene template by block pursuit with columns regioned by
/// candidate region.
pub fn learn_scene_template(
    r: &DataMatrix,
    q: &ReferenceModel,
    cfg: &PursuitConfig,
    layout: &SceneLayout,
) -> Result<Pursuit> {
    if r.n_cols() != layout.dimension() {
        return invalid(format!("scene matrix has {} columns, layout expects {}", r.n_cols(), layout.dimension()));
    }
    let mut result = pursue(r, q, &layout.tiling(), cfg)?;
    result.template.level = Level::Scene;
    result.template.layout = Layout::Scene(layout.clone());
    Ok(result)
}

/// Records the mean attributes of each scene part over the training parses
/// that activate it.
pub fn attach_expectations(template: &mut AndOrTemplate, rows: &[ResponseVector]) -> Result<()> {
    let mut sums: Vec<Vec<Attributes>> = vec![Vec::new(); template.part_count()];
    for row in rows {
        let (config, _) = infer_configuration(row, template)?;
        for (k, g) in &config.g {
            if let Geometry::Attributes(a) = g {
                sums[*k].push(*a);
            }
        }
    }
    let expected = sums
        .into_iter()
        .enumerate()
        .map(|(k, list)| {
            if list.is_empty() {
                return None;
            }
            let n = list.len() as f64;
            let position = template.terminals[k]
                .rect
                .unwrap_or(list[0].position);
            Some(Attributes {
                position,
                size: list.iter().map(|a| a.size).sum::<f64>() / n,
                mean_color: mean_hsv(list.iter().map(|a| a.mean_color)),
            })
        })
        .collect();
    match &mut template.layout {
        Layout::Scene(layout) => {
            layout.expected = expected;
            Ok(())
        }
        _ => invalid("expected attributes apply to scene templates only"),
    }
}
