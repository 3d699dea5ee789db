//! Annotation manifests: the images of a dataset with their object boxes and
//! optional quality annotations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use aot_core::features::PixelRect;
use aot_core::pipeline::TrainingImage;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestObject {
    pub label: String,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestImage {
    pub image_path: String,
    #[serde(default)]
    pub objects: Vec<ManifestObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_score: Option<f64>,
}

/// A manifest file. A bare JSON array of images is accepted as well.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub images: Vec<ManifestImage>,
    /// Images of generic content used for the reference model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negatives: Vec<String>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl Manifest {
    pub fn from_json(text: &str, base: &Path) -> CliResult<Self> {
        let diag = |e: serde_json::Error| CliError::input(format!("manifest: {e}"));
        let mut manifest = if text.trim_start().starts_with('[') {
            Manifest { images: serde_json::from_str(text).map_err(diag)?, ..Default::default() }
        } else {
            serde_json::from_str(text).map_err(diag)?
        };
        manifest.base = base.to_path_buf();
        manifest.check()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read manifest {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn check(&self) -> CliResult<()> {
        for (i, img) in self.images.iter().enumerate() {
            if img.image_path.is_empty() {
                return Err(CliError::input(format!("manifest: images[{i}].image_path is empty")));
            }
            for (j, o) in img.objects.iter().enumerate() {
                if o.label.is_empty() || o.label.contains(['/', '\\']) {
                    return Err(CliError::input(format!("manifest: images[{i}].objects[{j}].label '{}' is not a valid name", o.label)));
                }
                if o.bbox[2] == 0 || o.bbox[3] == 0 {
                    return Err(CliError::input(format!("manifest: images[{i}].objects[{j}].bbox has zero width or height")));
                }
            }
            if img.quality_score.is_some_and(|s| !s.is_finite()) {
                return Err(CliError::input(format!("manifest: images[{i}].quality_score is not finite")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base.join(path)
    }

    pub fn has_labels(&self) -> bool {
        self.images.iter().any(|i| i.quality_label.is_some())
    }

    pub fn has_scores(&self) -> bool {
        self.images.iter().any(|i| i.quality_score.is_some())
    }

    /// Loads every image with its boxes checked against the image bounds.
    pub fn training_images(&self) -> CliResult<Vec<TrainingImage>> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let image = Arc::new(load_image(&self.resolve(&entry.image_path))?);
                let mut objects = Vec::with_capacity(entry.objects.len());
                for (j, o) in entry.objects.iter().enumerate() {
                    let [x, y, w, h] = o.bbox;
                    if u64::from(x) + u64::from(w) > u64::from(image.width())
                        || u64::from(y) + u64::from(h) > u64::from(image.height())
                    {
                        return Err(CliError::input(format!(
                            "manifest: images[{i}].objects[{j}].bbox {:?} exceeds the {}x{} image",
                            o.bbox,
                            image.width(),
                            image.height()
                        )));
                    }
                    objects.push((o.label.clone(), PixelRect { x, y, w, h }));
                }
                Ok(TrainingImage { name: entry.image_path.clone(), image, objects })
            })
            .collect()
    }

    pub fn negative_images(&self) -> CliResult<Vec<Arc<RgbImage>>> {
        self.negatives.iter().map(|p| load_image(&self.resolve(p)).map(Arc::new)).collect()
    }
}

/// Reads a PNG or PPM file as 8-bit RGB.
pub fn load_image(path: &Path) -> CliResult<RgbImage> {
    let img = image::open(path).map_err(|e| CliError::input(format!("cannot read image {}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}
