//! On-disk dataset layout.
//!
//! ```text
//! <root>/color/<id>.png          8-bit RGB
//! <root>/depth/<id>.png          16-bit millimetres, 0 = no reading
//! <root>/truth/<id>.png          0 background, non-zero waste
//! <root>/scene_logits/<id>.mlf   scene-level logits, H x W x 2
//! <root>/fine_logits/<id>.mlf    full-frame fine-level logits (synthetic sets only)
//! <root>/manifests/<id>.json     region manifest
//! <root>/regions/<id>_r<k>.mlf   fine-level logits of region k
//! ```
//!
//! Image ids are the file stems under `scene_logits/`.

use std::path::{Path, PathBuf};

use mlcrf_core::imagedata::{read_array, read_color_png, read_depth_png, read_png_mask, LabelField, LogitField};

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use crate::manifest::RegionManifest;
use crate::pipeline::{propose_regions, RegionLogits, Scene};

#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
}

/// Where depth maps come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DepthSource {
    /// `<root>/depth/<id>.png` when present, otherwise none.
    #[default]
    Dataset,
    Dir(PathBuf),
    Disabled,
}

impl DepthSource {
    /// `none` disables depth; anything else is a directory.
    pub fn from_arg(arg: &str) -> Self {
        if arg == "none" {
            DepthSource::Disabled
        } else {
            DepthSource::Dir(PathBuf::from(arg))
        }
    }
}

impl Dataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn color_path(&self, id: &str) -> PathBuf {
        self.root.join("color").join(format!("{id}.png"))
    }

    pub fn depth_path(&self, id: &str) -> PathBuf {
        self.root.join("depth").join(format!("{id}.png"))
    }

    pub fn truth_path(&self, id: &str) -> PathBuf {
        self.root.join("truth").join(format!("{id}.png"))
    }

    pub fn scene_logits_path(&self, id: &str) -> PathBuf {
        self.root.join("scene_logits").join(format!("{id}.mlf"))
    }

    pub fn fine_logits_path(&self, id: &str) -> PathBuf {
        self.root.join("fine_logits").join(format!("{id}.mlf"))
    }

    pub fn manifest_dir(&self) -> PathBuf {
        self.root.join("manifests")
    }

    pub fn region_path(&self, id: &str, region: usize) -> PathBuf {
        self.root.join("regions").join(format!("{id}_r{region}.mlf"))
    }

    pub fn ids(&self) -> Result<Vec<String>> {
        list_stems(&self.root.join("scene_logits"), "mlf")
    }

    pub fn scene_logits(&self, id: &str) -> Result<LogitField> {
        Ok(read_array(self.scene_logits_path(id))?.into_logits()?)
    }

    pub fn truth(&self, id: &str) -> Result<LabelField> {
        Ok(read_png_mask(self.truth_path(id))?)
    }

    pub fn load_scene(&self, id: &str, depth: &DepthSource) -> Result<Scene> {
        let depth_file = match depth {
            DepthSource::Dataset => Some(self.depth_path(id)).filter(|p| p.is_file()),
            DepthSource::Dir(dir) => Some(dir.join(format!("{id}.png"))),
            DepthSource::Disabled => None,
        };
        let scene = Scene {
            color: read_color_png(self.color_path(id))?,
            depth: depth_file.map(read_depth_png).transpose()?,
            scene_logits: self.scene_logits(id)?,
        };
        scene.check_dimensions()?;
        Ok(scene)
    }

    /// Loads a scene with the region logits its manifest points to, after checking
    /// that the manifest's proposals regenerate from the scene logits.
    pub fn load_refine_inputs(
        &self,
        id: &str,
        manifest_dir: &Path,
        depth: &DepthSource,
        cfg: &RunConfig,
    ) -> Result<(Scene, Vec<RegionLogits>)> {
        let scene = self.load_scene(id, depth)?;
        let manifest = RegionManifest::read(&manifest_dir.join(format!("{id}.json")))?;
        let proposals = propose_regions(&scene.scene_logits, &cfg.proposer)?;
        let (w, h) = (scene.color.width(), scene.color.height());
        if manifest.image_id != id || !manifest.matches(w, h, &proposals) {
            return Err(PipelineError::StaleManifest { image_id: id.to_string() });
        }
        let regions = manifest
            .logit_paths(manifest_dir)?
            .into_iter()
            .zip(proposals)
            .map(|(path, proposal)| {
                Ok(RegionLogits {
                    proposal,
                    logits: read_array(path)?.into_logits()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((scene, regions))
    }
}

/// Sorted file stems in `dir` with the given extension.
pub fn list_stems(dir: &Path, extension: &str) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut ids = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == extension) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}
