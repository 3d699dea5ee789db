use std::sync::Arc;

use aot_core::features::{lattice_responses, FeatureConfig, ObjectWindow};
use aot_core::inference::matching_score;
use aot_core::model::{AndOrTemplate, Branch, FeatureKind, FeatureSpec, Layout, Level, OrNode, Pat, SelectedFeature};
use aot_core::pipeline::{learn_theme, LearnConfig, TrainingImage};
use aot_core::render::render_mean_template;
use aot_core::synth::{clutter, mountain_river};
use image::{Rgb, RgbImage};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

fn config() -> FeatureConfig {
    FeatureConfig { cells_x: 7, cells_y: 7, ..FeatureConfig::default() }
}

/// Single-region object template whose one part holds `features`.
fn object_template(cfg: FeatureConfig, features: Vec<(FeatureSpec, f64, f64)>) -> AndOrTemplate {
    let dict = cfg.dictionary().unwrap();
    let selected: Vec<SelectedFeature> = features
        .into_iter()
        .map(|(spec, beta, mean)| SelectedFeature { column: dict.index_of(&spec).unwrap(), beta, log_z: 0.0, mean, gain: 0.0 })
        .collect();
    let mut branches = vec![Branch { part: None, log_prob: 0.5f64.ln() }];
    let mut terminals = Vec::new();
    if !selected.is_empty() {
        terminals.push(Pat::new(0, 0, None, selected));
        branches.push(Branch { part: Some(0), log_prob: 0.5f64.ln() });
    } else {
        branches[0].log_prob = 0.0;
    }
    AndOrTemplate {
        label: "drawn".into(),
        level: Level::Object,
        layout: Layout::Object { features: cfg, stats: None },
        or_nodes: vec![OrNode { region: 0, rect: None, columns: (0..cfg.dimension()).collect(), branches }],
        terminals,
    }
}

fn sketch(x: u32, y: u32, orientation: u16) -> FeatureSpec {
    FeatureSpec { x, y, kind: FeatureKind::Sketch { orientation, scale: 0 } }
}

#[test]
fn template_without_parts_renders_blank() {
    let cfg = config();
    let img = render_mean_template(&object_template(cfg, Vec::new())).unwrap();
    assert_eq!(img.dimensions(), cfg.window_px());
    assert!(img.pixels().all(|p| *p == WHITE));
}

#[test]
fn horizontal_sketch_draws_a_horizontal_edge_in_the_centre_cell() {
    let cfg = config();
    let img = render_mean_template(&object_template(cfg, vec![(sketch(3, 3, 0), 2.0, 0.8)])).unwrap();
    let cs = cfg.cell_size;
    let inside = |x: u32, y: u32| (3 * cs..4 * cs).contains(&x) && (3 * cs..4 * cs).contains(&y);
    for (x, y, p) in img.enumerate_pixels() {
        if !inside(x, y) {
            assert_eq!(*p, WHITE, "pixel ({x},{y})");
        }
    }
    for y in 3 * cs..4 * cs {
        let row = *img.get_pixel(3 * cs, y);
        for x in 3 * cs..4 * cs {
            assert_eq!(*img.get_pixel(x, y), row, "row {y} is not uniform");
        }
        let dark = row.0[0] < 200;
        assert_eq!(dark, y >= 3 * cs + cs / 2, "row {y}: {row:?}");
    }
}

#[test]
fn color_features_fill_their_cell() {
    let cfg = config();
    let red = FeatureSpec { x: 1, y: 5, kind: FeatureKind::Color { bin: 1 } };
    let img = render_mean_template(&object_template(cfg, vec![(red, 1.0, 0.9)])).unwrap();
    let p = img.get_pixel(cfg.cell_size + 3, 5 * cfg.cell_size + 3);
    assert!(p.0[0] > 200 && p.0[1] < 80 && p.0[2] < 80, "{p:?}");
    assert_eq!(*img.get_pixel(0, 0), WHITE);
}

#[test]
fn rendering_is_deterministic() {
    let cfg = config();
    let t = object_template(
        cfg,
        vec![
            (sketch(2, 4, 5), 1.5, 0.7),
            (FeatureSpec { x: 2, y: 4, kind: FeatureKind::Texture }, 1.0, 0.9),
            (FeatureSpec { x: 2, y: 4, kind: FeatureKind::Color { bin: 6 } }, 1.0, 0.8),
        ],
    );
    let a = render_mean_template(&t).unwrap();
    let b = render_mean_template(&t.clone()).unwrap();
    assert_eq!(a.as_raw(), b.as_raw());
}

#[test]
fn matrix_templates_cannot_be_rendered() {
    let mut t = object_template(config(), Vec::new());
    t.layout = Layout::Matrix { columns: 4 };
    assert!(render_mean_template(&t).is_err());
}

#[test]
fn learned_templates_match_their_own_rendering() {
    let corpus = mountain_river(11, 12, 0);
    let images: Vec<TrainingImage> = corpus.train.iter().map(TrainingImage::from_synth).collect();
    let negatives: Vec<Arc<RgbImage>> = clutter(24, 1_000_014).into_iter().map(|n| Arc::new(n.image)).collect();
    let theme = learn_theme("mountain-river", &images, &negatives, &LearnConfig::default()).unwrap();
    for o in &theme.objects {
        let Layout::Object { features: cfg, .. } = &o.template.layout else { panic!("object layout expected") };
        let img = Arc::new(render_mean_template(&o.template).unwrap());
        let win = ObjectWindow::full(img, "render").unwrap();
        let r = lattice_responses(&win.lattice(cfg).unwrap(), &cfg.filter_bank(), cfg).unwrap();
        let score = matching_score(&r, &o.template).unwrap().normalized;
        assert!(score >= 0.7, "{}: {score}", o.template.label);
    }
    let scene = render_mean_template(&theme.scene).unwrap();
    assert!(scene.pixels().any(|p| *p != WHITE));
}
