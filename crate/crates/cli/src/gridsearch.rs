//! Exhaustive search over CRF parameters, scored by waste-class IoU on a
//! validation set.
//!
//! A grid file lists one parameter per line as `key = v1, v2, ...`. Points are
//! visited in nested-loop order with the first listed key varying slowest.

use std::fmt::Write as _;

use mlcrf_core::imagedata::LabelField;
use mlcrf_core::metrics::{ConfusionCounts, MetricSummary};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use crate::pipeline::{refine, RegionLogits, Scene};

const WASTE: usize = 1;

/// Keys that would change the proposals, which the validation regions are tied to.
const FIXED_KEYS: &[&str] = &["preset", "extension_fraction", "n_min", "n_max", "connectivity", "classes"];

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    axes: Vec<(String, Vec<String>)>,
}

impl ParameterGrid {
    pub fn new(axes: Vec<(String, Vec<String>)>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(PipelineError::EmptyGrid);
        }
        for (key, _) in &axes {
            if FIXED_KEYS.contains(&key.as_str()) {
                return Err(PipelineError::Config(format!("{key} cannot be searched over")));
            }
        }
        Ok(Self { axes })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, values) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("grid line {}: expected key = v1, v2, ...", n + 1))
            })?;
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            axes.push((key.trim().to_string(), values));
        }
        Self::new(axes)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.axes.iter().map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point as `(key, value)` settings.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((key.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        points
    }
}

/// One validation image with its region evidence and ground truth.
#[derive(Debug, Clone)]
pub struct ValidationItem {
    pub scene: Scene,
    pub regions: Vec<RegionLogits>,
    pub truth: LabelField,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub params: Vec<(String, String)>,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Index of the first row with the highest IoU.
    pub best: usize,
    pub best_config: RunConfig,
}

impl GridResult {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        if let Some(first) = self.rows.first() {
            for (k, _) in &first.params {
                let _ = write!(s, "{k:>14} ");
            }
        }
        let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>8}", "IoU", "mIoU", "Prec", "Mean");
        for (i, row) in self.rows.iter().enumerate() {
            for (_, v) in &row.params {
                let _ = write!(s, "{v:>14} ");
            }
            let m = row.metrics;
            let _ = write!(
                s,
                "{:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                100.0 * m.iou,
                100.0 * m.miou,
                100.0 * m.prec,
                100.0 * m.mean
            );
            s.push_str(if i == self.best { "  *\n" } else { "\n" });
        }
        s
    }
}

/// Scores `items` under one configuration.
pub fn evaluate_config(items: &[ValidationItem], cfg: &RunConfig) -> Result<ConfusionCounts> {
    items
        .par_iter()
        .map(|item| {
            let out = refine(&item.scene, &item.regions, cfg, false)?;
            let mut counts = ConfusionCounts::new(cfg.classes);
            counts.accumulate(&out.labels, &item.truth)?;
            Ok(counts)
        })
        .try_reduce(
            || ConfusionCounts::new(cfg.classes),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )
}

pub fn grid_search(items: &[ValidationItem], grid: &ParameterGrid, base: &RunConfig) -> Result<GridResult> {
    let mut configs = Vec::with_capacity(grid.len());
    for point in grid.points() {
        let mut cfg = base.clone();
        for (k, v) in &point {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        configs.push((point, cfg));
    }
    let mut rows = Vec::with_capacity(configs.len());
    let (mut best, mut best_iou) = (0, f64::NEG_INFINITY);
    for (i, (params, cfg)) in configs.iter().enumerate() {
        let metrics = evaluate_config(items, cfg)?.summary(WASTE);
        if metrics.iou > best_iou {
            (best, best_iou) = (i, metrics.iou);
        }
        rows.push(GridRow {
            params: params.clone(),
            metrics,
        });
    }
    Ok(GridResult {
        rows,
        best,
        best_config: configs.swap_remove(best).1,
    })
}
