//! Dataset-level commands. Images are processed in parallel; each image's own
//! pipeline is sequential, and the first failure aborts the command.

use std::path::{Path, PathBuf};

use mlcrf_core::imagedata::{
    read_png_mask, write_array, write_color_png, write_depth_png, write_mask_png, LogitField, PortableArray,
};
use mlcrf_core::metrics::{ConfusionCounts, MetricSummary};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::{ensure_dir, list_stems, Dataset, DepthSource};
use crate::error::{PipelineError, Result};
use crate::gridsearch::{grid_search, GridResult, ParameterGrid, ValidationItem};
use crate::manifest::RegionManifest;
use crate::pipeline::{propose_regions, refine};
use crate::synth::{fine_model_standin, generate, SynthParams};

const WASTE: usize = 1;

#[derive(Debug, Clone)]
pub struct ProposeArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub depth: DepthSource,
    /// Full-frame fine logits; when given, a stand-in fine model writes region
    /// logits and the manifest points at them.
    pub fine_logits: Option<PathBuf>,
}

/// Writes `<out>/manifests/<id>.json` and per-region colour and depth crops under
/// `<out>/crops/`.
pub fn cmd_propose(args: &ProposeArgs, cfg: &RunConfig) -> Result<Vec<RegionManifest>> {
    cfg.validate()?;
    let ds = Dataset::new(&args.data);
    let out = Dataset::new(&args.out);
    let ids = ds.ids()?;
    for dir in ["manifests", "crops"] {
        ensure_dir(&args.out.join(dir))?;
    }
    if args.fine_logits.is_some() {
        ensure_dir(&args.out.join("regions"))?;
    }
    ids.par_iter()
        .map(|id| {
            let scene = ds.load_scene(id, &args.depth)?;
            let (w, h) = (scene.color.width(), scene.color.height());
            let proposals = propose_regions(&scene.scene_logits, &cfg.proposer)?;
            let mut manifest = RegionManifest::new(id, w, h, &proposals);
            let fine = match &args.fine_logits {
                Some(dir) => Some(read_logits(&dir.join(format!("{id}.mlf")))?),
                None => None,
            };
            for (k, p) in proposals.iter().enumerate() {
                let crops = args.out.join("crops");
                write_color_png(
                    &scene.color.crop(p.top, p.left, p.height, p.width)?,
                    crops.join(format!("{id}_r{k}_color.png")),
                )?;
                if let Some(d) = &scene.depth {
                    write_depth_png(
                        &d.crop(p.top, p.left, p.height, p.width)?,
                        crops.join(format!("{id}_r{k}_depth.png")),
                    )?;
                }
                if let Some(fine) = &fine {
                    let logits = fine_model_standin(fine, p)?;
                    write_array(&PortableArray::from(&logits), out.region_path(id, k))?;
                    manifest.regions[k].logits = Some(format!("../regions/{id}_r{k}.mlf"));
                }
            }
            manifest.write(&out.manifest_dir().join(format!("{id}.json")))?;
            Ok(manifest)
        })
        .collect()
}

fn read_logits(path: &Path) -> Result<LogitField> {
    Ok(mlcrf_core::imagedata::read_array(path)?.into_logits()?)
}

#[derive(Debug, Clone)]
pub struct RefineArgs {
    pub data: PathBuf,
    /// Defaults to `<data>/manifests`.
    pub manifests: Option<PathBuf>,
    pub out: PathBuf,
    pub depth: DepthSource,
    /// Compute the energy of each result (small images only).
    pub energy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub id: String,
    pub regions: usize,
    pub kernels: usize,
    pub energy: Option<f64>,
}

/// Writes `<out>/masks/<id>.png` (0/255) and `<out>/marginals/<id>.mlf`.
pub fn cmd_refine(args: &RefineArgs, cfg: &RunConfig) -> Result<Vec<RefineReport>> {
    cfg.validate()?;
    let ds = Dataset::new(&args.data);
    let manifests = args.manifests.clone().unwrap_or_else(|| ds.manifest_dir());
    let ids = ds.ids()?;
    let (masks, marginals) = (args.out.join("masks"), args.out.join("marginals"));
    ensure_dir(&masks)?;
    ensure_dir(&marginals)?;
    ids.par_iter()
        .map(|id| {
            let (scene, regions) = ds.load_refine_inputs(id, &manifests, &args.depth, cfg)?;
            let out = refine(&scene, &regions, cfg, args.energy)?;
            write_mask_png(&out.labels, masks.join(format!("{id}.png")))?;
            write_array(&PortableArray::from(&out.marginals), marginals.join(format!("{id}.mlf")))?;
            Ok(RefineReport {
                id: id.clone(),
                regions: regions.len(),
                kernels: out.kernel_count,
                energy: out.energy,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub images: usize,
    #[serde(flatten)]
    pub metrics: MetricSummary,
    pub counts: ConfusionCounts,
}

/// Compares every mask in `pred` with the mask of the same name in `truth`.
pub fn cmd_evaluate(pred: &Path, truth: &Path) -> Result<Evaluation> {
    let pred_ids = list_stems(pred, "png")?;
    let truth_ids = list_stems(truth, "png")?;
    if pred_ids != truth_ids {
        let only = |a: &[String], b: &[String]| -> Vec<String> {
            a.iter().filter(|x| !b.contains(x)).take(5).cloned().collect()
        };
        return Err(PipelineError::IdMismatch(format!(
            "only in predictions: {:?}; only in truth: {:?}",
            only(&pred_ids, &truth_ids),
            only(&truth_ids, &pred_ids)
        )));
    }
    let counts = pred_ids
        .par_iter()
        .map(|id| -> Result<ConfusionCounts> {
            let p = read_png_mask(pred.join(format!("{id}.png")))?;
            let t = read_png_mask(truth.join(format!("{id}.png")))?;
            let mut c = ConfusionCounts::new(2);
            c.accumulate(&p, &t)?;
            Ok(c)
        })
        .try_reduce(
            || ConfusionCounts::new(2),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )?;
    Ok(Evaluation {
        images: pred_ids.len(),
        metrics: counts.summary(WASTE),
        counts,
    })
}

#[derive(Debug, Clone)]
pub struct GridArgs {
    pub data: PathBuf,
    pub manifests: Option<PathBuf>,
    pub depth: DepthSource,
    pub grid: ParameterGrid,
}

pub fn load_validation_set(
    data: &Path,
    manifests: Option<&Path>,
    depth: &DepthSource,
    cfg: &RunConfig,
) -> Result<Vec<ValidationItem>> {
    let ds = Dataset::new(data);
    let manifests = manifests.map(Path::to_path_buf).unwrap_or_else(|| ds.manifest_dir());
    ds.ids()?
        .par_iter()
        .map(|id| {
            let (scene, regions) = ds.load_refine_inputs(id, &manifests, depth, cfg)?;
            Ok(ValidationItem {
                scene,
                regions,
                truth: ds.truth(id)?,
            })
        })
        .collect()
}

pub fn cmd_gridsearch(args: &GridArgs, cfg: &RunConfig) -> Result<GridResult> {
    cfg.validate()?;
    let items = load_validation_set(&args.data, args.manifests.as_deref(), &args.depth, cfg)?;
    grid_search(&items, &args.grid, cfg)
}

/// Writes the synthetic dataset, then proposals and region logits for it.
pub fn cmd_synth(params: &SynthParams, out: &Path, cfg: &RunConfig) -> Result<Vec<RegionManifest>> {
    params.validate()?;
    cfg.validate()?;
    let ds = Dataset::new(out);
    for dir in ["color", "depth", "truth", "scene_logits", "fine_logits"] {
        ensure_dir(&out.join(dir))?;
    }
    (0..params.count).into_par_iter().try_for_each(|i| -> Result<()> {
        let s = generate(params, i)?;
        write_color_png(&s.color, ds.color_path(&s.id))?;
        write_depth_png(&s.depth, ds.depth_path(&s.id))?;
        write_mask_png(&s.truth, ds.truth_path(&s.id))?;
        write_array(&PortableArray::from(&s.scene_logits), ds.scene_logits_path(&s.id))?;
        write_array(&PortableArray::from(&s.fine_logits), ds.fine_logits_path(&s.id))?;
        Ok(())
    })?;
    cmd_propose(
        &ProposeArgs {
            data: out.to_path_buf(),
            out: out.to_path_buf(),
            depth: DepthSource::Dataset,
            fine_logits: Some(out.join("fine_logits")),
        },
        cfg,
    )
}
