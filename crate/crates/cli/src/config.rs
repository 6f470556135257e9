//! Run configuration as a flat `key = value` text file.
//!
//! Lines starting with `#` are comments. A `preset` key selects the starting values
//! and is applied before every other key, wherever it appears.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mlcrf_core::densecrf::{CrfConfig, FilterBackend, Init, KernelNorm};
use mlcrf_core::depthfill::DEFAULT_WINDOW;
use mlcrf_core::proposer::{Connectivity, ProposerConfig};
use mlcrf_core::unary::DEFAULT_PROBABILITY_FLOOR;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    MjuWaste,
    Taco,
}

impl FromStr for Preset {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mju-waste" => Ok(Preset::MjuWaste),
            "taco" => Ok(Preset::Taco),
            other => Err(PipelineError::Config(format!(
                "unknown preset {other:?}, expected mju-waste or taco"
            ))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::MjuWaste => "mju-waste",
            Preset::Taco => "taco",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_root: Option<PathBuf>,
    pub crf: CrfConfig,
    pub proposer: ProposerConfig,
    pub depth_fill_window: usize,
    pub probability_floor: f64,
    /// Always 2: background and waste.
    pub classes: usize,
    pub output_dir: Option<PathBuf>,
    pub filter: FilterBackend,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (crf, proposer) = match preset {
            Preset::MjuWaste => (CrfConfig::mju_waste(), ProposerConfig::mju_waste()),
            Preset::Taco => (CrfConfig::taco(), ProposerConfig::taco()),
        };
        Self {
            dataset_root: None,
            crf,
            proposer,
            depth_fill_window: DEFAULT_WINDOW,
            probability_floor: DEFAULT_PROBABILITY_FLOOR,
            classes: 2,
            output_dir: None,
            filter: FilterBackend::Neighbourhood,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.crf.validate()?;
        self.proposer.validate()?;
        if self.depth_fill_window < 3 || self.depth_fill_window.is_multiple_of(2) {
            return Err(PipelineError::Config(format!(
                "depth_fill_window must be odd and >= 3, got {}",
                self.depth_fill_window
            )));
        }
        if !(self.probability_floor > 0.0 && self.probability_floor < 1.0 / self.classes as f64) {
            return Err(PipelineError::Config(format!(
                "probability_floor {} must lie in (0, 1/classes)",
                self.probability_floor
            )));
        }
        if self.classes != 2 {
            return Err(PipelineError::Config(format!(
                "classes is fixed to 2 (background, waste), got {}",
                self.classes
            )));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| PipelineError::Config(format!("bad value {value:?} for {key}")))
        }
        let crf = &mut self.crf;
        match key {
            "preset" => *self = Self::preset(value.parse()?),
            "dataset_root" => self.dataset_root = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "alpha" => crf.alpha = num(key, value)?,
            "w_appearance" => crf.w_appearance = num(key, value)?,
            "w_smooth" => crf.w_smooth = num(key, value)?,
            "w_depth" => crf.w_depth = num(key, value)?,
            "theta_alpha" => crf.theta_alpha = num(key, value)?,
            "theta_beta" => crf.theta_beta = num(key, value)?,
            "theta_gamma" => crf.theta_gamma = num(key, value)?,
            "theta_delta" => crf.theta_delta = num(key, value)?,
            "theta_epsilon" => crf.theta_epsilon = num(key, value)?,
            "iterations" => crf.iterations = num(key, value)?,
            "use_depth" => crf.use_depth = num(key, value)?,
            "init" => {
                crf.init = match value {
                    "unary" => Init::Unary,
                    "uniform" => Init::Uniform,
                    _ => return Err(PipelineError::Config(format!("bad init {value:?}"))),
                }
            }
            "kernel_norm" => {
                crf.kernel_norm = match value {
                    "none" => KernelNorm::None,
                    "symmetric" => KernelNorm::Symmetric,
                    _ => return Err(PipelineError::Config(format!("bad kernel_norm {value:?}"))),
                }
            }
            "filter" => {
                self.filter = match value {
                    "neighbourhood" => FilterBackend::Neighbourhood,
                    "bruteforce" => FilterBackend::BruteForce,
                    "lattice" => FilterBackend::Lattice,
                    _ => return Err(PipelineError::Config(format!("bad filter {value:?}"))),
                }
            }
            "extension_fraction" => self.proposer.extension_fraction = num(key, value)?,
            "n_min" => self.proposer.n_min = num(key, value)?,
            "n_max" => self.proposer.n_max = num(key, value)?,
            "connectivity" => self.proposer.connectivity = Connectivity::from_count(num(key, value)?)?,
            "depth_fill_window" => self.depth_fill_window = num(key, value)?,
            "probability_floor" => self.probability_floor = num(key, value)?,
            "classes" => self.classes = num(key, value)?,
            other => return Err(PipelineError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, base: Preset) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", n + 1))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut cfg = Self::preset(base);
        if let Some((_, p)) = pairs.iter().find(|(k, _)| k == "preset") {
            cfg = Self::preset(p.parse()?);
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text, base)
    }

    pub fn to_text(&self) -> String {
        let c = &self.crf;
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(p) = &self.dataset_root {
            line("dataset_root", p.display().to_string());
        }
        if let Some(p) = &self.output_dir {
            line("output_dir", p.display().to_string());
        }
        line("alpha", c.alpha.to_string());
        line("w_appearance", c.w_appearance.to_string());
        line("w_smooth", c.w_smooth.to_string());
        line("w_depth", c.w_depth.to_string());
        line("theta_alpha", c.theta_alpha.to_string());
        line("theta_beta", c.theta_beta.to_string());
        line("theta_gamma", c.theta_gamma.to_string());
        line("theta_delta", c.theta_delta.to_string());
        line("theta_epsilon", c.theta_epsilon.to_string());
        line("iterations", c.iterations.to_string());
        line("use_depth", c.use_depth.to_string());
        line(
            "init",
            match c.init {
                Init::Unary => "unary",
                Init::Uniform => "uniform",
            }
            .into(),
        );
        line(
            "kernel_norm",
            match c.kernel_norm {
                KernelNorm::None => "none",
                KernelNorm::Symmetric => "symmetric",
            }
            .into(),
        );
        line(
            "filter",
            match self.filter {
                FilterBackend::Neighbourhood => "neighbourhood",
                FilterBackend::BruteForce => "bruteforce",
                FilterBackend::Lattice => "lattice",
            }
            .into(),
        );
        line("extension_fraction", self.proposer.extension_fraction.to_string());
        line("n_min", self.proposer.n_min.to_string());
        line("n_max", self.proposer.n_max.to_string());
        line("connectivity", self.proposer.connectivity.count().to_string());
        line("depth_fill_window", self.depth_fill_window.to_string());
        line("probability_floor", self.probability_floor.to_string());
        line("classes", self.classes.to_string());
        s
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::MjuWaste)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_published_values() {
        let mju = RunConfig::preset(Preset::MjuWaste);
        let c = mju.crf;
        assert_eq!(
            (c.alpha, c.w_appearance, c.w_smooth, c.w_depth),
            (1.0, 3.0, 1.0, 1.0)
        );
        assert_eq!(
            (c.theta_alpha, c.theta_beta, c.theta_gamma, c.theta_delta, c.theta_epsilon),
            (20.0, 20.0, 1.0, 10.0, 20.0)
        );
        assert_eq!(c.iterations, 10);
        assert_eq!((mju.proposer.n_min, mju.proposer.n_max), (900, 40_000));

        let taco = RunConfig::preset(Preset::Taco);
        assert!(!taco.crf.use_depth);
        assert_eq!((taco.crf.theta_alpha, taco.crf.theta_gamma), (100.0, 10.0));
        assert_eq!((taco.proposer.n_min, taco.proposer.n_max), (25_000, 250_000));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::preset(Preset::Taco);
        cfg.crf.w_appearance = 2.5;
        cfg.dataset_root = Some("data/x".into());
        let back = RunConfig::parse(&cfg.to_text(), Preset::MjuWaste).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn preset_key_applies_first() {
        let cfg = RunConfig::parse("w_smooth = 5\n# note\npreset = taco\n", Preset::MjuWaste).unwrap();
        assert_eq!(cfg.crf.w_smooth, 5.0);
        assert_eq!(cfg.crf.theta_alpha, 100.0);
    }

    #[test]
    fn bad_input_is_reported() {
        assert!(RunConfig::parse("alpha 3", Preset::MjuWaste).is_err());
        assert!(RunConfig::parse("alpha = x", Preset::MjuWaste).is_err());
        assert!(RunConfig::parse("colour = 3", Preset::MjuWaste).is_err());
        assert!(RunConfig::parse("classes = 3", Preset::MjuWaste).is_err());
        assert!(RunConfig::parse("depth_fill_window = 4", Preset::MjuWaste).is_err());
        assert!(RunConfig::parse("preset = coco", Preset::MjuWaste).is_err());
    }
}
