//! End-to-end learning of a theme: object templates from annotated windows,
//! then the scene template over their responses.

use std::collections::BTreeMap;
use std::sync::Arc;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::{build_data_matrix_with_geometry, mean_hsv, rgb_to_hsv, FeatureConfig, ObjectWindow, PixelRect, ResponseVector};
use crate::infoproj::estimate_reference_pooled;
use crate::model::{AndOrTemplate, DataMatrix, Layout, ObjectStats, ReferenceModel};
use crate::pursuit::{pursue, PursuitConfig, TraceRow, Tiling};
use crate::scene::{attach_expectations, build_scene_matrix, learn_scene_template, ObjectRef, SceneLayout, SCENE_CHANNELS};
use crate::serial::TemplateDocument;
use crate::synth::SynthImage;

/// Minimum number of positive images for learning.
pub const MIN_POSITIVES: usize = 5;

/// Every learning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub features: FeatureConfig,
    /// Regions per side of the object window tiling.
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub object_pursuit: PursuitConfig,
    pub scene_pursuit: PursuitConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::default(),
            tiles_x: 4,
            tiles_y: 4,
            object_pursuit: PursuitConfig::default(),
            scene_pursuit: PursuitConfig::default(),
        }
    }
}

impl LearnConfig {
    /// Replaces both pursuit seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.object_pursuit.seed = seed;
        self.scene_pursuit.seed = seed;
        self
    }
}

/// A positive photograph with its annotated objects.
#[derive(Debug, Clone)]
pub struct TrainingImage {
    pub name: String,
    pub image: Arc<RgbImage>,
    pub objects: Vec<(String, PixelRect)>,
}

impl TrainingImage {
    pub fn from_synth(s: &SynthImage) -> Self {
        Self {
            name: s.name.clone(),
            image: Arc::new(s.image.clone()),
            objects: s.objects.iter().map(|a| (a.label.clone(), a.rect())).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnedObject {
    pub template: AndOrTemplate,
    pub reference: ReferenceModel,
    pub trace: Vec<TraceRow>,
    /// File name the scene template refers to.
    pub file: String,
}

impl LearnedObject {
    pub fn document(&self) -> TemplateDocument {
        TemplateDocument::new(self.template.clone(), Some(self.reference.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct LearnedTheme {
    pub objects: Vec<LearnedObject>,
    pub scene: AndOrTemplate,
    pub scene_reference: ReferenceModel,
    pub scene_trace: Vec<TraceRow>,
    /// Scene responses of the training images.
    pub scene_rows: Vec<ResponseVector>,
}

impl LearnedTheme {
    pub fn object_templates(&self) -> Vec<AndOrTemplate> {
        self.objects.iter().map(|o| o.template.clone()).collect()
    }

    pub fn scene_document(&self) -> TemplateDocument {
        TemplateDocument::new(self.scene.clone(), Some(self.scene_reference.clone()))
    }
}

fn window_stats(windows: &[ObjectWindow]) -> ObjectStats {
    let n = windows.len() as f64;
    let mut center = [0.0; 2];
    let mut area = 0.0;
    let mut colors = Vec::with_capacity(windows.len());
    for w in windows {
        let (iw, ih) = (f64::from(w.image.width()), f64::from(w.image.height()));
        center[0] += (f64::from(w.rect.x) + f64::from(w.rect.w) / 2.0) / iw / n;
        center[1] += (f64::from(w.rect.y) + f64::from(w.rect.h) / 2.0) / ih / n;
        area += f64::from(w.rect.w) * f64::from(w.rect.h) / (iw * ih) / n;
        let crop = w.crop();
        colors.push(mean_hsv(crop.pixels().map(|p| {
            let [r, g, b] = p.0.map(|c| f64::from(c) / 255.0);
            rgb_to_hsv(r, g, b)
        })));
    }
    ObjectStats { mean_center: center, mean_area: area, mean_color: mean_hsv(colors.into_iter()), examples: windows.len() }
}

/// Candidate windows of every negative photograph, as generic object windows.
fn negative_windows(negatives: &[Arc<RgbImage>]) -> Result<Vec<ObjectWindow>> {
    let layout = SceneLayout {
        grid: crate::scene::SCENE_GRID,
        regions: crate::scene::candidate_regions(crate::scene::SCENE_GRID)?,
        objects: Vec::new(),
        expected: Vec::new(),
    };
    let mut out = Vec::new();
    for img in negatives {
        for r in 0..layout.regions.len() {
            out.push(ObjectWindow::new(Arc::clone(img), layout.pixel_rect(r, img.width(), img.height()), "negative")?);
        }
    }
    Ok(out)
}

/// Reference model of object responses, pooled over lattice cells.
pub fn object_reference(negatives: &[Arc<RgbImage>], cfg: &FeatureConfig) -> Result<ReferenceModel> {
    if negatives.is_empty() {
        return invalid("no negative images for the reference model");
    }
    let matrix = crate::features::build_data_matrix(&negative_windows(negatives)?, cfg)?;
    let per_cell = cfg.dictionary()?.per_cell();
    let keys: Vec<usize> = (0..matrix.n_cols()).map(|c| c % per_cell).collect();
    estimate_reference_pooled(&matrix, &keys)
}

/// Reference model of scene responses, pooled over candidate regions.
pub fn scene_reference(
    negatives: &[Arc<RgbImage>],
    objects: &[AndOrTemplate],
    layout: &SceneLayout,
) -> Result<ReferenceModel> {
    let named: Vec<(String, Arc<RgbImage>)> =
        negatives.iter().enumerate().map(|(i, img)| (format!("negative{i}"), Arc::clone(img))).collect();
    let (matrix, _) = build_scene_matrix(&named, objects, layout)?;
    let per_region = objects.len() * SCENE_CHANNELS;
    let keys: Vec<usize> = (0..matrix.n_cols()).map(|c| c % per_region).collect();
    estimate_reference_pooled(&matrix, &keys)
}

/// Learns one object template from its annotated windows.
pub fn learn_object(
    label: &str,
    windows: &[ObjectWindow],
    reference: &ReferenceModel,
    cfg: &LearnConfig,
) -> Result<(AndOrTemplate, Vec<TraceRow>, DataMatrix)> {
    let (matrix, _) = build_data_matrix_with_geometry(windows, &cfg.features)?;
    let tiling = Tiling::object(&cfg.features, cfg.tiles_x, cfg.tiles_y)?;
    let result = pursue(&matrix, reference, &tiling, &cfg.object_pursuit)?;
    let mut template = result.template;
    template.label = label.to_string();
    template.layout = Layout::Object { features: cfg.features, stats: Some(window_stats(windows)) };
    Ok((template, result.trace, matrix))
}

/// Learns every object of a theme, then the scene template.
pub fn learn_theme(
    theme: &str,
    images: &[TrainingImage],
    negatives: &[Arc<RgbImage>],
    cfg: &LearnConfig,
) -> Result<LearnedTheme> {
    if images.len() < MIN_POSITIVES {
        return invalid(format!("need at least {MIN_POSITIVES} positive images, got {}", images.len()));
    }
    let mut by_label: BTreeMap<String, Vec<ObjectWindow>> = BTreeMap::new();
    for img in images {
        for (label, rect) in &img.objects {
            by_label.entry(label.clone()).or_default().push(ObjectWindow::new(Arc::clone(&img.image), *rect, label.clone())?);
        }
    }
    if by_label.is_empty() {
        return invalid("no annotated objects");
    }
    let reference = object_reference(negatives, &cfg.features)?;
    let learned: Vec<(String, AndOrTemplate, Vec<TraceRow>)> = by_label
        .par_iter()
        .map(|(label, windows)| {
            let (template, trace, _) = learn_object(label, windows, &reference, cfg)?;
            Ok((label.clone(), template, trace))
        })
        .collect::<Result<_>>()?;
    let mut objects = Vec::with_capacity(learned.len());
    for (label, template, trace) in learned {
        objects.push(LearnedObject { template, reference: reference.clone(), trace, file: format!("{theme}.{label}.json") });
    }

    let templates: Vec<AndOrTemplate> = objects.iter().map(|o| o.template.clone()).collect();
    let refs = objects
        .iter()
        .map(|o| {
            Ok(ObjectRef { label: o.template.label.clone(), file: Some(o.file.clone()), digest: o.document().digest()? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut layout = SceneLayout::new(&templates)?;
    layout.objects = refs;

    let named: Vec<(String, Arc<RgbImage>)> = images.iter().map(|i| (i.name.clone(), Arc::clone(&i.image))).collect();
    let (scene_matrix, scene_rows) = build_scene_matrix(&named, &templates, &layout)?;
    let scene_ref = scene_reference(negatives, &templates, &layout)?;
    let result = learn_scene_template(&scene_matrix, &scene_ref, &cfg.scene_pursuit, &layout)?;
    let mut scene = result.template;
    scene.label = theme.to_string();
    attach_expectations(&mut scene, &scene_rows)?;
    Ok(LearnedTheme { objects, scene, scene_reference: scene_ref, scene_trace: result.trace, scene_rows })
}
