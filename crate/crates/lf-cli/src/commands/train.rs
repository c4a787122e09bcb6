//! `lfrecon train`: resolve the run config, load and validate the dataset,
//! then drive the training loop with logging and checkpoints.

use std::path::PathBuf;

use clap::Args;
use lf_core::data::{rgb_to_ycbcr, ColorSpace, LightField};
use lf_core::train::{sample_batch, Trainer};

use crate::config::{self, RunConfig};
use crate::{checkpoint, lock, run, scene, validation, CliError};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene directory or directory of scene directories.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory for config.resolved, train.log and checkpoints.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Architecture preset: tablefit (default), text, or default.
    #[arg(long)]
    pub preset: Option<String>,
    /// Reconstruction task: 2x2to8x8 or 3x3to9x9.
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Resume from a checkpoint (its .sadm sidecar must sit next to it).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set")]
    pub sets: Vec<String>,
}

pub fn resolve_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut entries = Vec::new();
    if let Some(path) = &args.config {
        entries.extend(config::parse_config_file(path)?);
    }
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            entries.push((key.to_string(), v));
        }
    };
    flag("preset", args.preset.clone());
    flag("task", args.task.clone());
    flag("iterations", args.iters.map(|v| v.to_string()));
    flag("seed", args.seed.map(|v| v.to_string()));
    flag("batch_size", args.batch.map(|v| v.to_string()));
    flag("patch_size", args.patch.map(|v| v.to_string()));
    flag("learning_rate", args.lr.map(|v| v.to_string()));
    flag(
        "checkpoint_every",
        args.checkpoint_every.map(|v| v.to_string()),
    );
    flag("dataset", args.dataset.as_ref().map(|p| p.display().to_string()));
    flag("out", args.out.as_ref().map(|p| p.display().to_string()));
    entries.extend(config::parse_overrides(&args.sets)?);
    config::resolve(&entries)
}

/// Convert ingested scenes to the luminance-only training representation.
pub fn to_luma_scenes(scenes: Vec<LightField>) -> Result<Vec<LightField>, CliError> {
    scenes
        .into_iter()
        .map(|lf| match lf.colorspace {
            ColorSpace::YOnly => Ok(lf),
            ColorSpace::Rgb => {
                let ycbcr = rgb_to_ycbcr(&lf).map_err(validation)?;
                ycbcr.extract_channel(0).map_err(validation)
            }
            ColorSpace::YCbCr => ycbcr_unexpected(),
        })
        .collect()
}

fn ycbcr_unexpected() -> Result<LightField, CliError> {
    Err(validation("scene files cannot carry ycbcr data"))
}

pub fn execute(args: &TrainArgs) -> Result<(), CliError> {
    let run_cfg = resolve_config(args)?;
    let dataset_dir = run_cfg
        .dataset
        .clone()
        .ok_or_else(|| validation("missing dataset path (--dataset or dataset=...)"))?;
    let out_dir = run_cfg
        .out
        .clone()
        .ok_or_else(|| validation("missing output directory (--out or out=...)"))?;

    // everything is validated before the output directory is touched
    let dataset = to_luma_scenes(scene::load_dataset(&dataset_dir)?)?;
    let pattern = run_cfg.pattern();
    sample_batch::<f32>(&dataset, &pattern, &run_cfg.train, 0).map_err(validation)?;

    let mut trainer;
    let start_iter;
    if let Some(ckpt) = &args.resume {
        let state = checkpoint::load_expecting(ckpt, &run_cfg.net)?;
        let adam = checkpoint::load_sidecar(&checkpoint::sidecar_path(ckpt), &run_cfg.net)?;
        start_iter = adam.t;
        trainer = Trainer::from_parts(
            run_cfg.net.clone(),
            run_cfg.train.clone(),
            pattern,
            state,
            adam,
        )
        .map_err(validation)?;
    } else {
        start_iter = 0;
        trainer = Trainer::new(run_cfg.net.clone(), run_cfg.train.clone(), pattern)
            .map_err(validation)?;
    }

    let _lock = lock::acquire(&out_dir)?;
    std::fs::write(out_dir.join("config.resolved"), run_cfg.render_resolved())
        .map_err(|e| crate::runtime(format!("cannot write config.resolved: {e}")))?;

    let outcome = run::run_training(&mut trainer, &dataset, &out_dir, start_iter)?;
    println!(
        "trained {} iterations (scenes: {}, batch {}, patch {} px)",
        outcome.iterations_run,
        dataset.len(),
        run_cfg.train.batch_size,
        run_cfg.train.patch_size
    );
    if outcome.iterations_run > 0 {
        println!(
            "loss {} -> {}",
            outcome.first_loss, outcome.final_loss
        );
    }
    println!("outputs in {}", out_dir.display());
    Ok(())
}
