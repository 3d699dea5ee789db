//! Oriented difference-of-offset-Gaussian (DoOG) edge kernels.
//!
//! Orientation index `o` denotes an edge whose line runs at angle
//! `o * pi / O` from the x axis (y pointing down). Each kernel is the
//! difference of two anisotropic Gaussians, elongated along the edge and
//! offset by one across-sigma on either side of it, scaled so that an ideal
//! unit step through the kernel centre responds with exactly 1.

use std::f64::consts::PI;

use crate::features::lattice::ImageLattice;

#[derive(Debug, Clone)]
pub struct Kernel {
    /// Kernel spans pixel offsets `-radius .. radius` (exclusive upper end for
    /// even cells) around the sampling point.
    pub radius: i64,
    /// Whether samples sit on half-integer offsets (cell centre on a pixel corner).
    pub half_offset: bool,
    pub weights: Vec<f64>,
    side: usize,
}

impl Kernel {
    fn build(theta: f64, sigma_across: f64, half_offset: bool) -> Self {
        let sigma_along = 2.0 * sigma_across;
        let radius = (3.0 * sigma_along).ceil() as i64;
        let (ux, uy) = (theta.cos(), theta.sin());
        let (nx, ny) = (-uy, ux);
        let d = sigma_across;
        let offsets = Self::offsets(radius, half_offset);
        let side = offsets.len();
        let gauss = |px: f64, py: f64| {
            let a = px * ux + py * uy;
            let c = px * nx + py * ny;
            (-(a * a) / (2.0 * sigma_along * sigma_along) - (c * c) / (2.0 * sigma_across * sigma_across)).exp()
        };
        let mut weights = Vec::with_capacity(side * side);
        let mut step = 0.0;
        for &py in &offsets {
            for &px in &offsets {
                let w = gauss(px - d * nx, py - d * ny) - gauss(px + d * nx, py + d * ny);
                if px * nx + py * ny > 0.0 {
                    step += w;
                }
                weights.push(w);
            }
        }
        for w in &mut weights {
            *w /= step;
        }
        Self { radius, half_offset, weights, side }
    }

    fn offsets(radius: i64, half_offset: bool) -> Vec<f64> {
        if half_offset {
            (-radius..radius).map(|i| i as f64 + 0.5).collect()
        } else {
            (-radius..=radius).map(|i| i as f64).collect()
        }
    }

    /// Support width in pixels.
    pub fn support(&self) -> usize {
        self.side
    }

    /// Signed response at a sampling point given by the pixel index of the
    /// first kernel column/row.
    fn apply(&self, plane: &PaddedPlane, x0: i64, y0: i64) -> f64 {
        let mut acc = 0.0;
        for (row, ky) in self.weights.chunks_exact(self.side).zip(y0..) {
            let samples = plane.row(x0, ky, self.side);
            acc += row.iter().zip(samples).map(|(w, v)| w * v).sum::<f64>();
        }
        acc
    }
}

/// Intensity plane extended by clamp-to-edge padding, so that kernels read
/// contiguous rows.
#[derive(Debug, Clone)]
pub struct PaddedPlane {
    pad: i64,
    stride: usize,
    data: Vec<f64>,
}

impl PaddedPlane {
    pub fn new(lattice: &ImageLattice, pad: usize) -> Self {
        let (w, h) = (i64::from(lattice.px_width()), i64::from(lattice.px_height()));
        let pad = pad as i64;
        let stride = (w + 2 * pad) as usize;
        let mut data = Vec::with_capacity(stride * (h + 2 * pad) as usize);
        for y in -pad..h + pad {
            for x in -pad..w + pad {
                data.push(lattice.intensity(x, y));
            }
        }
        Self { pad, stride, data }
    }

    fn row(&self, x0: i64, y: i64, len: usize) -> &[f64] {
        let start = (y + self.pad) as usize * self.stride + (x0 + self.pad) as usize;
        &self.data[start..start + len]
    }
}

/// Kernels for every (orientation, scale) pair.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub orientations: u16,
    pub scales: u16,
    pub cell_size: u32,
    kernels: Vec<Kernel>,
}

impl FilterBank {
    pub fn new(orientations: u16, scales: u16, cell_size: u32) -> Self {
        let half_offset = cell_size % 2 == 0;
        let base = f64::from(cell_size) / 8.0;
        let mut kernels = Vec::with_capacity(orientations as usize * scales as usize);
        for o in 0..orientations {
            let theta = f64::from(o) * PI / f64::from(orientations);
            for s in 0..scales {
                kernels.push(Kernel::build(theta, base * f64::from(1u32 << s), half_offset));
            }
        }
        Self { orientations, scales, cell_size, kernels }
    }

    pub fn kernel(&self, orientation: u16, scale: u16) -> &Kernel {
        &self.kernels[orientation as usize * self.scales as usize + scale as usize]
    }

    /// Largest kernel support in pixels.
    pub fn max_support(&self) -> usize {
        self.kernels.iter().map(Kernel::support).max().unwrap_or(0)
    }

    /// Padded intensity plane wide enough for every kernel of the bank.
    pub fn pad(&self, lattice: &ImageLattice) -> PaddedPlane {
        let radius = self.kernels.iter().map(|k| k.radius).max().unwrap_or(0);
        PaddedPlane::new(lattice, radius as usize + 1)
    }

    /// Edge energy `|response|` at the centre of cell `(cx, cy)`.
    pub fn energy_at_cell(&self, plane: &PaddedPlane, cx: u32, cy: u32, orientation: u16, scale: u16) -> f64 {
        let k = self.kernel(orientation, scale);
        let cs = i64::from(self.cell_size);
        let centre_x = i64::from(cx) * cs + cs / 2;
        let centre_y = i64::from(cy) * cs + cs / 2;
        // With half offsets the centre lies on the corner before pixel `centre`.
        let (x0, y0) = (centre_x - k.radius, centre_y - k.radius);
        k.apply(plane, x0, y0).abs()
    }
}
