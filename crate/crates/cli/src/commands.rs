//! One function per subcommand. Each returns the JSON printed on stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aot_core::features::{extract_responses, ObjectWindow, ResponseVector};
use aot_core::guidance::{diff_configuration, generate_report, GuidanceReport, RuleCorpus};
use aot_core::inference::{classify, infer_configuration, matching_score, Candidate};
use aot_core::model::{validate_template, AndOrTemplate, Layout, Level};
use aot_core::pipeline::learn_theme;
use aot_core::pursuit::trace_to_string;
use aot_core::render::render_mean_template;
use aot_core::serial::TemplateDocument;
use aot_core::stats::spearman;
use aot_core::synth::{clutter, generate, SynthImage, SynthSpec};
use image::RgbImage;
use serde_json::{json, Map, Value};

use crate::config::{CliConfig, CLUTTER_SEED_OFFSET};
use crate::error::{CliError, CliResult};
use crate::manifest::{load_image, Manifest, ManifestImage, ManifestObject};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

/// A template file plus the object templates a scene template refers to.
#[derive(Debug, Clone)]
pub struct LoadedTemplate {
    pub document: TemplateDocument,
    pub objects: Vec<AndOrTemplate>,
}

impl LoadedTemplate {
    pub fn template(&self) -> &AndOrTemplate {
        &self.document.template
    }

    /// Responses of a whole image in this template's column space.
    pub fn responses(&self, image: &Arc<RgbImage>) -> CliResult<ResponseVector> {
        let t = self.template();
        match &t.layout {
            Layout::Object { features, .. } => {
                let window = ObjectWindow::full(Arc::clone(image), t.label.clone())?;
                Ok(extract_responses(&window, &features.filter_bank(), features)?)
            }
            Layout::Scene(layout) => Ok(aot_core::scene::scene_responses(image, &self.objects, layout)?),
            Layout::Matrix { .. } => Err(CliError::input(format!("template '{}' has no image layout", t.label))),
        }
    }
}

fn read_document(path: &Path) -> CliResult<TemplateDocument> {
    let doc = TemplateDocument::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let violations = validate_template(&doc.template);
    if let Some(v) = violations.first() {
        return Err(CliError::input(format!("{}: invalid template ({} violations, first: {v})", path.display(), violations.len())));
    }
    Ok(doc)
}

/// Reads a template; scene templates also load and verify their objects,
/// which are looked up next to the scene file.
pub fn load_template(path: &Path) -> CliResult<LoadedTemplate> {
    let document = read_document(path)?;
    let mut objects = Vec::new();
    if let Layout::Scene(layout) = &document.template.layout {
        let dir = path.parent().unwrap_or(Path::new("."));
        for r in &layout.objects {
            let Some(file) = &r.file else {
                return Err(CliError::input(format!("{}: object '{}' names no file", path.display(), r.label)));
            };
            let object_path = dir.join(file);
            let doc = read_document(&object_path)?;
            if doc.digest()? != r.digest {
                return Err(CliError::input(format!("{}: digest does not match the scene template", object_path.display())));
            }
            if doc.template.level != Level::Object {
                return Err(CliError::input(format!("{}: not an object template", object_path.display())));
            }
            objects.push(doc.template);
        }
    }
    Ok(LoadedTemplate { document, objects })
}

/// Learns the object and scene templates of a theme and writes them to `out`.
pub fn learn(manifest_path: &Path, theme: &str, cfg: &CliConfig, out: &Path) -> CliResult<Value> {
    if theme.is_empty() || theme.contains(['/', '\\']) {
        return Err(CliError::input(format!("theme '{theme}' is not a valid name")));
    }
    let manifest = Manifest::load(manifest_path)?;
    let images = manifest.training_images()?;
    let negatives: Vec<Arc<RgbImage>> = if manifest.negatives.is_empty() {
        clutter(cfg.negatives, cfg.seed().wrapping_add(CLUTTER_SEED_OFFSET)).into_iter().map(|n| Arc::new(n.image)).collect()
    } else {
        manifest.negative_images()?
    };
    let learned = learn_theme(theme, &images, &negatives, &cfg.learn)?;

    create_dir(out)?;
    let mut objects = Vec::new();
    for o in &learned.objects {
        let path = out.join(&o.file);
        let trace_path = out.join(format!("{theme}.{}.trace.tsv", o.template.label));
        write(&path, o.document().to_json()?)?;
        write(&trace_path, trace_to_string(&o.trace))?;
        objects.push(json!({
            "label": o.template.label,
            "file": path_string(&path),
            "trace": path_string(&trace_path),
            "parts": o.template.part_count(),
            "objective": o.trace.last().map(|t| t.objective),
        }));
    }
    let scene_path = out.join(format!("{theme}.scene.json"));
    let trace_path = out.join(format!("{theme}.scene.trace.tsv"));
    write(&scene_path, learned.scene_document().to_json()?)?;
    write(&trace_path, trace_to_string(&learned.scene_trace))?;
    Ok(json!({
        "theme": theme,
        "images": images.len(),
        "negatives": negatives.len(),
        "objects": objects,
        "scene": {
            "file": path_string(&scene_path),
            "trace": path_string(&trace_path),
            "parts": learned.scene.part_count(),
            "objective": learned.scene_trace.last().map(|t| t.objective),
        },
    }))
}

/// Matching score of one image.
pub fn score(template_path: &Path, image_path: &Path) -> CliResult<Value> {
    let t = load_template(template_path)?;
    let image = Arc::new(load_image(image_path)?);
    let m = matching_score(&t.responses(&image)?, t.template())?;
    Ok(json!({
        "template": t.template().label,
        "image": path_string(image_path),
        "raw": m.raw,
        "normalized": m.normalized,
        "s_max": m.s_max,
        "parse_tree": m.parse_tree,
    }))
}

/// Every `*.scene.json` in a directory, sorted by file name.
fn scene_templates(dir: &Path) -> CliResult<Vec<LoadedTemplate>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::input(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(".scene.json")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::input(format!("no *.scene.json templates in {}", dir.display())));
    }
    paths.iter().map(|p| load_template(p)).collect()
}

/// Labels every manifest image with its best-matching theme.
pub fn classify_manifest(templates_dir: &Path, manifest_path: &Path) -> CliResult<Value> {
    let templates = scene_templates(templates_dir)?;
    let manifest = Manifest::load(manifest_path)?;
    let mut rows = Vec::with_capacity(manifest.images.len());
    let (mut labeled, mut correct) = (0usize, 0usize);
    let (mut predicted, mut annotated) = (Vec::new(), Vec::new());
    for entry in &manifest.images {
        let image = Arc::new(load_image(&manifest.resolve(&entry.image_path))?);
        let responses = templates.iter().map(|t| t.responses(&image)).collect::<CliResult<Vec<_>>>()?;
        let candidates: Vec<Candidate<'_>> = templates
            .iter()
            .zip(&responses)
            .map(|(t, r)| Candidate { label: &t.template().label, template: t.template(), responses: r })
            .collect();
        let c = classify(&candidates)?;
        let best = c.scores.iter().find(|s| s.label == c.label).map_or(0.0, |s| s.normalized);
        if let Some(truth) = &entry.quality_label {
            labeled += 1;
            correct += usize::from(*truth == c.label);
        }
        if let Some(q) = entry.quality_score {
            predicted.push(best);
            annotated.push(q);
        }
        let mut row = Map::new();
        row.insert("image_path".into(), json!(entry.image_path));
        row.insert("label".into(), json!(c.label));
        row.insert("score".into(), json!(best));
        row.insert("scores".into(), json!(c.scores));
        if let Some(l) = &entry.quality_label {
            row.insert("quality_label".into(), json!(l));
        }
        if let Some(q) = entry.quality_score {
            row.insert("quality_score".into(), json!(q));
        }
        rows.push(Value::Object(row));
    }
    let mut out = Map::new();
    out.insert("templates".into(), json!(templates.iter().map(|t| t.template().label.clone()).collect::<Vec<_>>()));
    out.insert("images".into(), Value::Array(rows));
    let mut metrics = Map::new();
    if labeled > 0 {
        metrics.insert("accuracy".into(), json!(correct as f64 / labeled as f64));
        metrics.insert("labeled".into(), json!(labeled));
    }
    if !annotated.is_empty() {
        metrics.insert("srcc".into(), json!(spearman(&predicted, &annotated)));
    }
    if !metrics.is_empty() {
        out.insert("metrics".into(), Value::Object(metrics));
    }
    Ok(Value::Object(out))
}

/// Parses an image, writes the guidance report (JSON and text) and the
/// template rendering to `out`.
pub fn guide(template_path: &Path, image_path: &Path, corpus_path: Option<&Path>, cfg: &CliConfig, out: &Path) -> CliResult<Value> {
    let t = load_template(template_path)?;
    let corpus = match corpus_path {
        Some(p) => RuleCorpus::load(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
        None => RuleCorpus::default_corpus(),
    };
    let image = Arc::new(load_image(image_path)?);
    let (_, parse) = infer_configuration(&t.responses(&image)?, t.template())?;
    let diff = diff_configuration(&parse, t.template(), &cfg.tolerances)?;

    create_dir(out)?;
    let render_path = out.join(format!("{}.render.png", t.template().label));
    render_mean_template(t.template())?
        .save(&render_path)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", render_path.display())))?;
    let report = generate_report(&diff, &corpus, t.template(), &parse, Some(&path_string(&render_path)));
    let stem = image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let json_path = out.join(format!("{stem}.guide.json"));
    let text_path = out.join(format!("{stem}.guide.txt"));
    write(&json_path, serde_json::to_string_pretty(&report).map_err(aot_core::Error::from)?)?;
    write(&text_path, report.to_text())?;
    Ok(report_summary(&report, &json_path, &text_path))
}

fn report_summary(report: &GuidanceReport, json_path: &Path, text_path: &Path) -> Value {
    json!({
        "template": report.template,
        "report": path_string(json_path),
        "text": path_string(text_path),
        "visualization": report.visualization,
        "messages": report.messages,
        "diff": report.diff,
    })
}

/// Writes the mean-template visualization as PNG.
pub fn render(template_path: &Path, out: &Path) -> CliResult<Value> {
    let t = load_template(template_path)?;
    let img = render_mean_template(t.template())?;
    img.save(out).map_err(|e| CliError::input(format!("cannot write {}: {e}", out.display())))?;
    Ok(json!({ "template": t.template().label, "out": path_string(out), "width": img.width(), "height": img.height() }))
}

fn save_images(images: &[SynthImage], dir: &Path, sub: &str) -> CliResult<Vec<String>> {
    create_dir(&dir.join(sub))?;
    images
        .iter()
        .map(|s| {
            let rel = format!("{sub}/{}.png", s.name);
            let path = dir.join(&rel);
            s.image.save(&path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
            Ok(rel)
        })
        .collect()
}

fn synth_manifest(images: &[SynthImage], paths: &[String], negatives: &[String]) -> Manifest {
    Manifest {
        images: images
            .iter()
            .zip(paths)
            .map(|(s, p)| ManifestImage {
                image_path: p.clone(),
                objects: s.objects.iter().map(|a| ManifestObject { label: a.label.clone(), bbox: a.bbox }).collect(),
                quality_label: s.class.clone(),
                quality_score: s.quality_score,
            })
            .collect(),
        negatives: negatives.to_vec(),
        base: PathBuf::new(),
    }
}

/// Renders a synthetic corpus with ground-truth manifests.
pub fn synth(spec_path: &Path, out: &Path, seed: u64) -> CliResult<Value> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::input(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("spec {}: {e}", spec_path.display())))?;
    synth_corpus(&spec, out, seed)
}

pub fn synth_corpus(spec: &SynthSpec, out: &Path, seed: u64) -> CliResult<Value> {
    let corpus = generate(spec, seed);
    create_dir(out)?;
    let negatives = save_images(&corpus.negatives, out, "negatives")?;
    let mut manifests = Vec::new();
    let mut emit = |name: String, images: &[SynthImage], paths: &[String]| -> CliResult<()> {
        let path = out.join(name);
        let m = synth_manifest(images, paths, &negatives);
        write(&path, serde_json::to_string_pretty(&m).map_err(aot_core::Error::from)?)?;
        manifests.push(path_string(&path));
        Ok(())
    };
    for (split, images) in [("train", &corpus.train), ("test", &corpus.test)] {
        if images.is_empty() {
            continue;
        }
        let paths = save_images(images, out, split)?;
        emit(format!("{split}.json"), images, &paths)?;
        let mut classes: Vec<&str> = images.iter().filter_map(|s| s.class.as_deref()).collect();
        classes.sort_unstable();
        classes.dedup();
        if split == "train" && classes.len() > 1 {
            for class in classes {
                let (subset, sub_paths): (Vec<SynthImage>, Vec<String>) = images
                    .iter()
                    .zip(&paths)
                    .filter(|(s, _)| s.class.as_deref() == Some(class))
                    .map(|(s, p)| (s.clone(), p.clone()))
                    .unzip();
                emit(format!("train.{class}.json"), &subset, &sub_paths)?;
            }
        }
    }
    Ok(json!({
        "kind": spec.kind,
        "seed": seed,
        "train": corpus.train.len(),
        "test": corpus.test.len(),
        "negatives": corpus.negatives.len(),
        "manifests": manifests,
    }))
}
