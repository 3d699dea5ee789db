//! Mean-template visualization.
//!
//! Every content branch contributes its selected features weighted by the
//! branch's share of the content prior mass. Each cell is filled with its
//! dominant color bin, texture in excess of flatness adds
//! deterministic noise, and the dominant sketch orientation of a cell darkens
//! the half of the cell on one side of an edge along that orientation.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::features::{bin_color, FeatureConfig};
use crate::model::{AndOrTemplate, FeatureKind, Layout};
use crate::scene::SceneLayout;

/// Pixels per scene grid cell in scene renderings.
pub const SCENE_CELL_PX: u32 = 16;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
/// Darkening of the strongest sketch feature; keeps drawn colors chromatic.
const MAX_BAR_OPACITY: f64 = 0.6;

/// Content branches of every OR node as `(part, weight)`, weight being the
/// branch prior normalized over the node's content branches.
fn weighted_parts(t: &AndOrTemplate) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for node in &t.or_nodes {
        let mass: f64 = node.branches.iter().filter(|b| b.part.is_some()).map(|b| b.log_prob.exp()).sum();
        if mass <= 0.0 {
            continue;
        }
        for b in &node.branches {
            if let Some(k) = b.part {
                out.push((k, b.log_prob.exp() / mass));
            }
        }
    }
    out
}

/// Renders the mean of all template configurations.
pub fn render_mean_template(t: &AndOrTemplate) -> Result<RgbImage> {
    match &t.layout {
        Layout::Object { features, .. } => render_object(t, features),
        Layout::Scene(layout) => Ok(render_scene(t, layout)),
        Layout::Matrix { .. } => invalid("templates over raw matrices have no lattice to render"),
    }
}

fn render_object(t: &AndOrTemplate, cfg: &FeatureConfig) -> Result<RgbImage> {
    let dict = cfg.dictionary()?;
    let (w, h) = cfg.window_px();
    let cells = cfg.dims().cells();
    let sketch_slots = cfg.orientations as usize * cfg.scales as usize;
    let mut sketch = vec![0.0; cells * sketch_slots];
    let mut color = vec![0.0; cells * cfg.color_bins as usize];
    let mut texture = vec![0.0; cells];
    let mut flatness = vec![0.0; cells];
    for (k, weight) in weighted_parts(t) {
        for f in &t.terminals[k].selected {
            let Some(spec) = dict.get(f.column) else {
                return invalid(format!("column {} outside the dictionary", f.column));
            };
            let cell = (spec.y * cfg.cells_x + spec.x) as usize;
            match spec.kind {
                FeatureKind::Sketch { orientation, scale } => {
                    let slot = orientation as usize * cfg.scales as usize + scale as usize;
                    sketch[cell * sketch_slots + slot] += weight * f.beta.max(0.0) * f.mean;
                }
                FeatureKind::Color { bin } => color[cell * cfg.color_bins as usize + bin as usize] += weight * f.mean,
                FeatureKind::Texture => texture[cell] += weight * f.mean,
                FeatureKind::Flatness => flatness[cell] += weight * f.mean,
            }
        }
    }

    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let cs = cfg.cell_size;
    for cy in 0..cfg.cells_y {
        for cx in 0..cfg.cells_x {
            let cell = (cy * cfg.cells_x + cx) as usize;
            let bins = &color[cell * cfg.color_bins as usize..(cell + 1) * cfg.color_bins as usize];
            let mut best = 0;
            for (b, m) in bins.iter().enumerate() {
                if *m > bins[best] {
                    best = b;
                }
            }
            // Achromatic cells stay white.
            if best == 0 || bins[best] <= 0.0 {
                continue;
            }
            let rgb = bin_color(best as u16, cfg.color_bins).map(|c| (c * 255.0).round() as u8);
            for y in cy * cs..(cy + 1) * cs {
                for x in cx * cs..(cx + 1) * cs {
                    img.put_pixel(x, y, Rgb(rgb));
                }
            }
        }
    }

    for cy in 0..cfg.cells_y {
        for cx in 0..cfg.cells_x {
            let cell = (cy * cfg.cells_x + cx) as usize;
            let amount = (texture[cell] - flatness[cell]).min(1.0);
            if amount <= 0.0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cell as u64);
            for y in cy * cs..(cy + 1) * cs {
                for x in cx * cs..(cx + 1) * cs {
                    let factor = 1.0 - amount * rng.gen_range(0.0..0.8);
                    let p = img.get_pixel_mut(x, y);
                    p.0 = p.0.map(|c| (f64::from(c) * factor).round() as u8);
                }
            }
        }
    }

    // One edge per cell: the orientation with the most weight over scales.
    let per_orientation: Vec<f64> = (0..cells * cfg.orientations as usize)
        .map(|i| {
            let (cell, o) = (i / cfg.orientations as usize, i % cfg.orientations as usize);
            (0..cfg.scales as usize).map(|s| sketch[cell * sketch_slots + o * cfg.scales as usize + s]).sum()
        })
        .collect();
    let peak = per_orientation.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        for cy in 0..cfg.cells_y {
            for cx in 0..cfg.cells_x {
                let cell = (cy * cfg.cells_x + cx) as usize;
                let slots = &per_orientation[cell * cfg.orientations as usize..(cell + 1) * cfg.orientations as usize];
                let mut best = 0;
                for (o, a) in slots.iter().enumerate() {
                    if *a > slots[best] {
                        best = o;
                    }
                }
                if slots[best] > 0.0 {
                    draw_half_bar(&mut img, cfg, cx, cy, best as u16, MAX_BAR_OPACITY * slots[best] / peak);
                }
            }
        }
    }
    Ok(img)
}

/// Darkens the part of the cell on the positive-normal side of the edge line
/// through its centre at the feature's orientation.
fn draw_half_bar(img: &mut RgbImage, cfg: &FeatureConfig, cx: u32, cy: u32, o: u16, opacity: f64) {
    let cs = f64::from(cfg.cell_size);
    let theta = f64::from(o) * std::f64::consts::PI / f64::from(cfg.orientations);
    let (nx, ny) = (-theta.sin(), theta.cos());
    let center = ((f64::from(cx) + 0.5) * cs, (f64::from(cy) + 0.5) * cs);
    for y in cy * cfg.cell_size..(cy + 1) * cfg.cell_size {
        for x in cx * cfg.cell_size..(cx + 1) * cfg.cell_size {
            let (dx, dy) = (f64::from(x) + 0.5 - center.0, f64::from(y) + 0.5 - center.1);
            if dx * nx + dy * ny > 0.0 {
                let p = img.get_pixel_mut(x, y);
                p.0 = p.0.map(|c| (f64::from(c) * (1.0 - opacity)).round() as u8);
            }
        }
    }
}

fn render_scene(t: &AndOrTemplate, layout: &SceneLayout) -> RgbImage {
    let side = layout.grid * SCENE_CELL_PX;
    let mut acc = vec![[0.0f64; 3]; (side * side) as usize];
    let mut weight = vec![0.0f64; (side * side) as usize];
    for (k, w) in weighted_parts(t) {
        let Some(Some(expected)) = layout.expected.get(k) else {
            continue;
        };
        let presence: f64 = t.terminals[k].selected.iter().map(|f| f.mean).sum::<f64>()
            / t.terminals[k].selected.len().max(1) as f64;
        let alpha = w * presence;
        if alpha <= 0.0 {
            continue;
        }
        let [h, s, v] = expected.mean_color;
        let rgb = crate::features::hsv_to_rgb(h, s, v);
        let r = layout.regions[t.terminals[k].region];
        for y in r.y * SCENE_CELL_PX..(r.y + r.h) * SCENE_CELL_PX {
            for x in r.x * SCENE_CELL_PX..(r.x + r.w) * SCENE_CELL_PX {
                let i = (y * side + x) as usize;
                for c in 0..3 {
                    acc[i][c] += alpha * rgb[c];
                }
                weight[i] += alpha;
            }
        }
    }
    RgbImage::from_fn(side, side, |x, y| {
        let i = (y * side + x) as usize;
        if weight[i] <= 0.0 {
            return WHITE;
        }
        let cover = weight[i].min(1.0);
        Rgb([0, 1, 2].map(|c| {
            let mean = acc[i][c] / weight[i];
            ((cover * mean + (1.0 - cover)) * 255.0).round() as u8
        }))
    })
}
