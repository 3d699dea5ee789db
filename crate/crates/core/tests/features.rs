use std::f64::consts::PI;
use std::sync::Arc;

use aot_core::features::{
    build_data_matrix, extract_histogram, extract_responses, extract_sketch, FeatureConfig, ObjectWindow,
    Perturbation, PixelRect, WindowFeatures,
};
use aot_core::model::{FeatureKind, FeatureSpec, Transform};
use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: u32 = 128;

/// Black/white step edge whose line runs at `theta` through `(cx, cy)`
/// (pixel-corner coordinates); the positive-normal side is black. Pixels on
/// the line get their white area fraction (8x8 supersampling).
fn step_edge(theta: f64, cx: f64, cy: f64) -> Arc<RgbImage> {
    let (nx, ny) = (-theta.sin(), theta.cos());
    Arc::new(RgbImage::from_fn(SIDE, SIDE, |x, y| {
        let mut white = 0;
        for sy in 0..8 {
            for sx in 0..8 {
                let px = f64::from(x) + (f64::from(sx) + 0.5) / 8.0;
                let py = f64::from(y) + (f64::from(sy) + 0.5) / 8.0;
                if (px - cx) * nx + (py - cy) * ny <= 0.0 {
                    white += 1;
                }
            }
        }
        let v = (f64::from(white) / 64.0 * 255.0).round() as u8;
        Rgb([v, v, v])
    }))
}

fn full(img: Arc<RgbImage>) -> ObjectWindow {
    ObjectWindow::full(img, "test").unwrap()
}

fn sketch(x: u32, y: u32, orientation: u16, scale: u16) -> FeatureSpec {
    FeatureSpec { x, y, kind: FeatureKind::Sketch { orientation, scale } }
}

fn theta(o: u16, cfg: &FeatureConfig) -> f64 {
    f64::from(o) * PI / f64::from(cfg.orientations)
}

#[test]
fn step_edge_dominates_the_perpendicular_orientation() {
    let cfg = FeatureConfig::default();
    for o in [0u16, 3, 4, 8, 12, 15] {
        let win = full(step_edge(theta(o, &cfg), 56.0, 56.0));
        let (along, _) = extract_sketch(&win, &sketch(3, 3, o, 0), Perturbation::NONE, &cfg).unwrap();
        let perpendicular = (o + cfg.orientations / 2) % cfg.orientations;
        let (across, _) = extract_sketch(&win, &sketch(3, 3, perpendicular, 0), Perturbation::NONE, &cfg).unwrap();
        assert!(along >= 0.95, "orientation {o}: response {along}");
        assert!(along >= 2.0 * across, "orientation {o}: {along} vs perpendicular {across}");
    }
}

#[test]
fn constant_image_has_no_sketch_response() {
    let cfg = FeatureConfig::default();
    let img = Arc::new(RgbImage::from_pixel(SIDE, SIDE, Rgb([90, 140, 200])));
    let win = full(img);
    let r = extract_responses(&win, &cfg.filter_bank(), &cfg).unwrap();
    let dict = cfg.dictionary().unwrap();
    for (j, spec) in dict.specs().iter().enumerate() {
        if let FeatureKind::Sketch { .. } = spec.kind {
            assert!(r.values[j].abs() <= 1e-6, "{spec}: {}", r.values[j]);
        }
    }
}

#[test]
fn displaced_edge_is_found_one_cell_over() {
    let cfg = FeatureConfig::default();
    let vertical = cfg.orientations / 2;
    let centered = full(step_edge(theta(vertical, &cfg), 56.0, 56.0));
    let shifted = full(step_edge(theta(vertical, &cfg), 72.0, 56.0));
    let spec = sketch(3, 3, vertical, 0);
    let p = Perturbation { xy: 1, theta: 0, scale: 0 };
    let (a, ta) = extract_sketch(&centered, &spec, p, &cfg).unwrap();
    let (b, tb) = extract_sketch(&shifted, &spec, p, &cfg).unwrap();
    assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    assert_eq!(ta, Transform::new(0, 0, 0, 0));
    assert_eq!(tb, Transform::new(1, 0, 0, 0));
}

#[test]
fn rotating_the_edge_by_one_step_moves_the_argmax_by_one() {
    let cfg = FeatureConfig::default();
    let mut previous = None;
    for o in 0..cfg.orientations {
        let win = full(step_edge(theta(o, &cfg), 56.0, 56.0));
        let wf = WindowFeatures::compute(&win.lattice(&cfg).unwrap(), &cfg.filter_bank(), &cfg).unwrap();
        let argmax = (0..cfg.orientations).max_by(|a, b| wf.energy(3, 3, *a, 0).total_cmp(&wf.energy(3, 3, *b, 0))).unwrap();
        assert_eq!(argmax, o);
        if let Some(p) = previous {
            assert_eq!((p + 1) % cfg.orientations, argmax);
        }
        previous = Some(argmax);
    }
}

#[test]
fn constant_cell_is_flat_and_textureless() {
    let cfg = FeatureConfig::default();
    let win = full(Arc::new(RgbImage::from_pixel(SIDE, SIDE, Rgb([120, 120, 120]))));
    let flat = extract_histogram(&win, &FeatureSpec { x: 2, y: 5, kind: FeatureKind::Flatness }, &cfg).unwrap();
    let texture = extract_histogram(&win, &FeatureSpec { x: 2, y: 5, kind: FeatureKind::Texture }, &cfg).unwrap();
    assert!((flat - 1.0).abs() <= 1e-6);
    assert!(texture.abs() <= 1e-6);
}

#[test]
fn pure_red_cell_fills_the_red_bin() {
    let cfg = FeatureConfig::default();
    let win = full(Arc::new(RgbImage::from_pixel(SIDE, SIDE, Rgb([255, 0, 0]))));
    for bin in 0..cfg.color_bins {
        let v = extract_histogram(&win, &FeatureSpec { x: 4, y: 4, kind: FeatureKind::Color { bin } }, &cfg).unwrap();
        let expected = if bin == 1 { 1.0 } else { 0.0 };
        assert_eq!(v, expected, "bin {bin}");
    }
}

#[test]
fn white_noise_has_high_texture() {
    let cfg = FeatureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = RgbImage::from_fn(SIDE, SIDE, |_, _| {
        let v: u8 = rng.gen();
        Rgb([v, v, v])
    });
    let win = full(Arc::new(img));
    for (x, y) in [(1, 1), (4, 6), (7, 2)] {
        let t = extract_histogram(&win, &FeatureSpec { x, y, kind: FeatureKind::Texture }, &cfg).unwrap();
        assert!(t >= 0.9, "cell ({x},{y}): texture {t}");
    }
}

#[test]
fn undersized_filter_support_and_empty_cells_are_rejected() {
    let tiny = FeatureConfig { cells_x: 1, cells_y: 1, ..FeatureConfig::default() };
    let win = full(Arc::new(RgbImage::from_pixel(64, 64, Rgb([0, 0, 0]))));
    assert!(extract_sketch(&win, &sketch(0, 0, 0, 0), Perturbation::NONE, &tiny).is_err());
    let empty = FeatureConfig { cell_size: 0, ..FeatureConfig::default() };
    assert!(extract_histogram(&win, &FeatureSpec { x: 0, y: 0, kind: FeatureKind::Flatness }, &empty).is_err());
    assert!(extract_histogram(&win, &sketch(0, 0, 0, 0), &FeatureConfig::default()).is_err());
}

fn small_config() -> FeatureConfig {
    FeatureConfig { cells_x: 4, cells_y: 4, cell_size: 16, orientations: 4, scales: 2, color_bins: 4, ..Default::default() }
}

#[test]
fn data_matrix_shape_duplicates_and_resizing() {
    let cfg = small_config();
    assert_eq!(cfg.dimension(), 224);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut windows = Vec::new();
    for i in 0..10u32 {
        let size = 48 + 8 * i;
        let img = RgbImage::from_fn(size, size, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
        windows.push(full(Arc::new(img)));
    }
    windows[9] = windows[3].clone();
    let m = build_data_matrix(&windows, &cfg).unwrap();
    assert_eq!((m.n_rows(), m.n_cols()), (10, 224));
    assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(m.row(3), m.row(9));
    assert!(build_data_matrix(&[], &cfg).is_err());
}

#[test]
fn window_outside_the_image_is_rejected() {
    let img = Arc::new(RgbImage::new(32, 32));
    assert!(ObjectWindow::new(img.clone(), PixelRect { x: 20, y: 0, w: 16, h: 16 }, "x").is_err());
    assert!(ObjectWindow::new(img, PixelRect { x: 0, y: 0, w: 0, h: 16 }, "x").is_err());
}

fn random_image(seed: u64, blocks: usize) -> Arc<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = RgbImage::from_pixel(64, 64, Rgb([rng.gen(), rng.gen(), rng.gen()]));
    for _ in 0..blocks {
        let (x, y) = (rng.gen_range(0..60), rng.gen_range(0..60));
        let (w, h) = (rng.gen_range(1..=64 - x), rng.gen_range(1..=64 - y));
        let c = Rgb([rng.gen(), rng.gen(), rng.gen()]);
        for yy in y..y + h {
            for xx in x..x + w {
                img.put_pixel(xx, yy, c);
            }
        }
    }
    Arc::new(img)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn responses_lie_in_the_unit_interval(seed in any::<u64>(), blocks in 0usize..12) {
        let cfg = small_config();
        let r = extract_responses(&full(random_image(seed, blocks)), &cfg.filter_bank(), &cfg).unwrap();
        prop_assert_eq!(r.values.len(), cfg.dimension());
        for v in &r.values {
            prop_assert!((0.0..=1.0).contains(v));
        }
        for t in r.geometry.iter().flatten() {
            if let aot_core::model::Geometry::Transform(t) = t {
                prop_assert!(cfg.perturbation.contains(t));
            }
        }
    }

    #[test]
    fn larger_search_lattice_never_lowers_a_response(
        seed in any::<u64>(),
        x in 0u32..4, y in 0u32..4, o in 0u16..4, s in 0u16..2,
    ) {
        let cfg = small_config();
        let win = full(random_image(seed, 8));
        let wf = WindowFeatures::compute(&win.lattice(&cfg).unwrap(), &cfg.filter_bank(), &cfg).unwrap();
        let spec = sketch(x, y, o, s);
        let chain = [
            Perturbation::NONE,
            Perturbation { xy: 0, theta: 1, scale: 0 },
            Perturbation { xy: 1, theta: 1, scale: 0 },
            Perturbation { xy: 1, theta: 1, scale: 1 },
        ];
        let mut last = 0.0;
        for p in chain {
            let (v, t) = wf.sketch(&spec, p).unwrap();
            prop_assert!(v >= last);
            prop_assert!(p.contains(&t));
            last = v;
        }
    }

    #[test]
    fn identical_windows_give_identical_bytes(seed in any::<u64>()) {
        let cfg = small_config();
        let img = random_image(seed, 5);
        let a = extract_responses(&full(img.clone()), &cfg.filter_bank(), &cfg).unwrap();
        let b = extract_responses(&full(Arc::new((*img).clone())), &cfg.filter_bank(), &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
