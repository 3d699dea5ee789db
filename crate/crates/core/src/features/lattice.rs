use image::imageops::{self, FilterType};
use image::RgbImage;

use crate::error::{invalid, Result};
use crate::features::FeatureConfig;

/// Normalized raster on a fixed cell grid: intensity plus hue, saturation and
/// value planes, every sample in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLattice {
    /// Width in cells.
    pub width: u32,
    /// Height in cells.
    pub height: u32,
    pub cell_size: u32,
    intensity: Vec<f64>,
    hue: Vec<f64>,
    saturation: Vec<f64>,
    value: Vec<f64>,
}

impl ImageLattice {
    /// Resizes `img` to the configured window and converts it to planes.
    pub fn from_rgb(img: &RgbImage, cfg: &FeatureConfig) -> Result<Self> {
        if img.width() == 0 || img.height() == 0 {
            return invalid("empty image");
        }
        let (pw, ph) = cfg.window_px();
        let resized;
        let src = if img.width() == pw && img.height() == ph {
            img
        } else {
            resized = imageops::resize(img, pw, ph, FilterType::Triangle);
            &resized
        };
        let n = (pw * ph) as usize;
        let mut lattice = Self {
            width: cfg.cells_x,
            height: cfg.cells_y,
            cell_size: cfg.cell_size,
            intensity: Vec::with_capacity(n),
            hue: Vec::with_capacity(n),
            saturation: Vec::with_capacity(n),
            value: Vec::with_capacity(n),
        };
        for p in src.pixels() {
            let [r, g, b] = p.0.map(|c| f64::from(c) / 255.0);
            lattice.intensity.push(0.299 * r + 0.587 * g + 0.114 * b);
            let [h, s, v] = rgb_to_hsv(r, g, b);
            lattice.hue.push(h);
            lattice.saturation.push(s);
            lattice.value.push(v);
        }
        Ok(lattice)
    }

    pub fn px_width(&self) -> u32 {
        self.width * self.cell_size
    }

    pub fn px_height(&self) -> u32 {
        self.height * self.cell_size
    }

    fn index(&self, x: i64, y: i64) -> usize {
        let x = x.clamp(0, i64::from(self.px_width()) - 1) as usize;
        let y = y.clamp(0, i64::from(self.px_height()) - 1) as usize;
        y * self.px_width() as usize + x
    }

    /// Intensity with clamp-to-edge addressing.
    pub fn intensity(&self, x: i64, y: i64) -> f64 {
        self.intensity[self.index(x, y)]
    }

    pub fn hsv(&self, x: i64, y: i64) -> [f64; 3] {
        let i = self.index(x, y);
        [self.hue[i], self.saturation[i], self.value[i]]
    }

    /// Mean (hue, saturation, value) over the whole lattice, hue averaged on
    /// the circle.
    pub fn mean_hsv(&self) -> [f64; 3] {
        mean_hsv(self.hue.iter().zip(&self.saturation).zip(&self.value).map(|((h, s), v)| [*h, *s, *v]))
    }
}

/// RGB in `[0, 1]` to HSV with hue as a fraction of a turn.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return [0.0, s, max];
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    [(h / 6.0).rem_euclid(1.0), s, max]
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h6 % 2.0) - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Circular-mean hue (saturation-weighted), arithmetic mean saturation/value.
pub fn mean_hsv(samples: impl Iterator<Item = [f64; 3]>) -> [f64; 3] {
    let (mut cx, mut cy, mut s_sum, mut v_sum, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for [h, s, v] in samples {
        let angle = h * std::f64::consts::TAU;
        cx += s * angle.cos();
        cy += s * angle.sin();
        s_sum += s;
        v_sum += v;
        n += 1;
    }
    if n == 0 {
        return [0.0, 0.0, 0.0];
    }
    let hue = if cx.abs() + cy.abs() > 1e-12 {
        (cy.atan2(cx) / std::f64::consts::TAU).rem_euclid(1.0)
    } else {
        0.0
    };
    [hue, s_sum / n as f64, v_sum / n as f64]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_roundtrip_primaries() {
        assert_eq!(rgb_to_hsv(1.0, 0.0, 0.0), [0.0, 1.0, 1.0]);
        let [h, s, v] = rgb_to_hsv(0.0, 0.0, 1.0);
        assert!((h - 2.0 / 3.0).abs() < 1e-12 && s == 1.0 && v == 1.0);
        for rgb in [[0.2, 0.7, 0.4], [0.9, 0.1, 0.5], [0.3, 0.3, 0.3]] {
            let [h, s, v] = rgb_to_hsv(rgb[0], rgb[1], rgb[2]);
            let back = hsv_to_rgb(h, s, v);
            for c in 0..3 {
                assert!((back[c] - rgb[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lattice_has_configured_size() {
        let cfg = FeatureConfig::default();
        let img = RgbImage::from_pixel(37, 90, image::Rgb([10, 200, 30]));
        let lat = ImageLattice::from_rgb(&img, &cfg).unwrap();
        assert_eq!((lat.px_width(), lat.px_height()), cfg.window_px());
        assert!(lat.intensity(-5, 400) > 0.0 && lat.intensity(0, 0) <= 1.0);
    }
}
