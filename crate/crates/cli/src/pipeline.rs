//! In-memory per-image processing: proposals from the scene logits, and the joint
//! refinement of scene and region evidence.

use mlcrf_core::densecrf::{self, MarginalField, MeanField, DEFAULT_ENERGY_CAP};
use mlcrf_core::depthfill::fill_missing;
use mlcrf_core::imagedata::{ColorField, DepthField, LabelField, LogitField};
use mlcrf_core::proposer::{propose, ProposerConfig, RegionProposal};
use mlcrf_core::unary::{fuse_object_unary, resample_bilinear, softmax, to_unary};
use mlcrf_core::Error as CoreError;

use crate::config::RunConfig;
use crate::error::Result;

/// Everything the refinement needs for one image.
#[derive(Debug, Clone)]
pub struct Scene {
    pub color: ColorField,
    pub depth: Option<DepthField>,
    pub scene_logits: LogitField,
}

impl Scene {
    pub fn check_dimensions(&self) -> Result<()> {
        let (w, h) = (self.color.width(), self.color.height());
        if (self.scene_logits.width(), self.scene_logits.height()) != (w, h) {
            return Err(CoreError::DimensionMismatch(format!(
                "scene logits are {}x{}, image is {w}x{h}",
                self.scene_logits.width(),
                self.scene_logits.height()
            ))
            .into());
        }
        if let Some(d) = &self.depth {
            if (d.width(), d.height()) != (w, h) {
                return Err(CoreError::DimensionMismatch(format!(
                    "depth is {}x{}, image is {w}x{h}",
                    d.width(),
                    d.height()
                ))
                .into());
            }
        }
        Ok(())
    }
}

/// Fine-model output for one proposal, at whatever resolution the model used.
#[derive(Debug, Clone)]
pub struct RegionLogits {
    pub proposal: RegionProposal,
    pub logits: LogitField,
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub labels: LabelField,
    pub marginals: MarginalField,
    pub kernel_count: usize,
    /// Only computed on request, for images within the diagnostic cap.
    pub energy: Option<f64>,
}

/// Label map the scene-level model alone would give.
pub fn scene_argmax(scene_logits: &LogitField) -> Result<LabelField> {
    Ok(softmax(scene_logits)?.argmax())
}

pub fn propose_regions(scene_logits: &LogitField, cfg: &ProposerConfig) -> Result<Vec<RegionProposal>> {
    Ok(propose(&scene_argmax(scene_logits)?, cfg)?)
}

/// Joint inference over the scene unary, the region unaries and the pairwise kernels.
pub fn refine(scene: &Scene, regions: &[RegionLogits], cfg: &RunConfig, with_energy: bool) -> Result<Refined> {
    scene.check_dimensions()?;
    let coarse = to_unary(&softmax(&scene.scene_logits)?, cfg.probability_floor)?;

    let mut region_unaries = Vec::with_capacity(regions.len());
    for r in regions {
        let p = &r.proposal;
        let probs = resample_bilinear(&softmax(&r.logits)?, p.width, p.height)?;
        region_unaries.push((p.translation(), to_unary(&probs, cfg.probability_floor)?));
    }
    let fused = fuse_object_unary(&coarse, &region_unaries)?;

    let depth = match (&scene.depth, cfg.crf.use_depth) {
        (Some(d), true) if d.missing_count() > 0 => Some(fill_missing(d, cfg.depth_fill_window)?),
        (Some(d), true) => Some(d.clone()),
        _ => None,
    };
    let kernels = densecrf::build_kernels(&scene.color, depth.as_ref(), &cfg.crf)?;
    let marginals = MeanField::new(&coarse, &fused, &kernels, &cfg.crf, cfg.filter)?.run()?;
    let labels = densecrf::map_labels(&marginals);

    let energy = if with_energy && labels.width() * labels.height() <= DEFAULT_ENERGY_CAP {
        Some(densecrf::energy(&labels, &coarse, &fused, &kernels, &cfg.crf, DEFAULT_ENERGY_CAP)?)
    } else {
        None
    };
    Ok(Refined {
        labels,
        marginals,
        kernel_count: kernels.len(),
        energy,
    })
}
