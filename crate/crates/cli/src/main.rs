use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use mlcrf::commands::{
    cmd_evaluate, cmd_gridsearch, cmd_propose, cmd_refine, cmd_synth, GridArgs, ProposeArgs, RefineArgs,
};
use mlcrf::dataset::DepthSource;
use mlcrf::gridsearch::ParameterGrid;
use mlcrf::synth::{SynthParams, DEFAULT_NOISE};
use mlcrf::{Preset, RunConfig};

#[derive(Parser)]
#[command(name = "mlcrf", version, about = "Multi-level CRF refinement of waste segmentation")]
struct Cli {
    /// Flat key = value configuration file, applied over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "mju-waste")]
    preset: String,
    /// Depth directory, or `none` to run without depth.
    #[arg(long, global = true)]
    depth: Option<String>,
    /// Window of the median hole filter.
    #[arg(long, global = true)]
    depth_fill_window: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print per-image details, including the energy of small results.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset root; defaults to `dataset_root` from the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Manifest directory; defaults to `<data>/manifests`.
    #[arg(long)]
    manifests: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Region proposals from the scene logits.
    Propose {
        #[command(flatten)]
        data: DataArgs,
        /// Full-frame fine logits to cut region logits from.
        #[arg(long)]
        fine_logits: Option<PathBuf>,
    },
    /// Joint refinement into masks and marginals.
    Refine {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Dataset-level metrics of predicted masks against truth masks.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Exhaustive CRF parameter search on a validation set.
    Gridsearch {
        #[command(flatten)]
        data: DataArgs,
        /// Lines of `key = v1, v2, ...`.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = DEFAULT_NOISE)]
        noise: f64,
        /// Objects share the background's appearance and differ only in depth.
        #[arg(long)]
        camouflage: bool,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let preset: Preset = cli.preset.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, preset)?,
        None => RunConfig::preset(preset),
    };
    if let Some(w) = cli.depth_fill_window {
        cfg.depth_fill_window = w;
        cfg.validate()?;
    }
    let depth = cli.depth.as_deref().map(DepthSource::from_arg).unwrap_or_default();
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone());
    let data_root = |d: &DataArgs| -> anyhow::Result<PathBuf> {
        d.data
            .clone()
            .or_else(|| cfg.dataset_root.clone())
            .context("no dataset: pass --data or set dataset_root")
    };
    let require_out = || out.clone().context("--out is required");

    match &cli.command {
        Command::Propose { data, fine_logits } => {
            let root = data_root(data)?;
            let args = ProposeArgs {
                out: out.clone().unwrap_or_else(|| root.clone()),
                data: root,
                depth,
                fine_logits: fine_logits.clone(),
            };
            let manifests = cmd_propose(&args, &cfg)?;
            for m in &manifests {
                if cli.verbose {
                    println!("{}: {} regions", m.image_id, m.regions.len());
                }
            }
            println!(
                "{} manifests, {} regions",
                manifests.len(),
                manifests.iter().map(|m| m.regions.len()).sum::<usize>()
            );
        }
        Command::Refine { data } => {
            let args = RefineArgs {
                data: data_root(data)?,
                manifests: data.manifests.clone(),
                out: require_out()?,
                depth,
                energy: cli.verbose,
            };
            let reports = cmd_refine(&args, &cfg)?;
            if cli.verbose {
                for r in &reports {
                    let energy = r.energy.map_or("n/a".to_string(), |e| format!("{e:.4}"));
                    println!("{}: {} regions, {} kernels, energy {energy}", r.id, r.regions, r.kernels);
                }
            }
            println!("refined {} images", reports.len());
        }
        Command::Evaluate { pred, truth } => {
            let eval = cmd_evaluate(pred, truth)?;
            let table = eval.metrics.to_table();
            print!("{table}");
            if let Some(dir) = &out {
                write(dir, "metrics.txt", &table)?;
                write(dir, "metrics.json", &(serde_json::to_string_pretty(&eval)? + "\n"))?;
            }
        }
        Command::Gridsearch { data, grid } => {
            let text = std::fs::read_to_string(grid).with_context(|| format!("reading {}", grid.display()))?;
            let args = GridArgs {
                data: data_root(data)?,
                manifests: data.manifests.clone(),
                depth,
                grid: ParameterGrid::parse(&text)?,
            };
            let result = cmd_gridsearch(&args, &cfg)?;
            let table = result.to_table();
            print!("{table}");
            if let Some(dir) = &out {
                write(dir, "scores.txt", &table)?;
                write(dir, "scores.json", &(serde_json::to_string_pretty(&result.rows)? + "\n"))?;
                write(dir, "best.conf", &result.best_config.to_text())?;
            }
        }
        Command::Synth {
            seed,
            count,
            size,
            noise,
            camouflage,
        } => {
            let Some(dir) = out else {
                bail!("--out is required");
            };
            let params = SynthParams {
                seed: *seed,
                count: *count,
                size: *size,
                noise: *noise,
                camouflage: *camouflage,
            };
            let manifests = cmd_synth(&params, &dir, &cfg)?;
            println!(
                "wrote {} scenes with {} regions to {}",
                manifests.len(),
                manifests.iter().map(|m| m.regions.len()).sum::<usize>(),
                dir.display()
            );
        }
    }
    Ok(())
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}
