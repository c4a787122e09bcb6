//! `lfrecon bench`: timed forward passes with instrumented MAC counts
//! checked against the static audit.

use std::time::Instant;

use clap::Args;
use lf_core::net::{build_plan, count_macs, forward_eval, init_model};
use lf_core::tensor::ModeTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{parse_pair, thousands};
use crate::config;
use crate::{runtime, validation, CliError};

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// Spatial extents of the benchmark input.
    #[arg(long, default_value = "64x64")]
    pub size: String,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "set")]
    pub sets: Vec<String>,
}

pub fn execute(args: &BenchArgs) -> Result<(), CliError> {
    let mut entries = Vec::new();
    if let Some(p) = &args.preset {
        entries.push(("preset".to_string(), p.clone()));
    }
    if let Some(t) = &args.task {
        entries.push(("task".to_string(), t.clone()));
    }
    entries.extend(config::parse_overrides(&args.sets)?);
    let cfg = config::resolve(&entries)?.net;
    let (w, h) = parse_pair(&args.size, "--size")?;

    let plan = build_plan(&cfg).map_err(validation)?;
    let state = init_model::<f32>(&cfg, args.seed).map_err(validation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0xbe9c);
    let x = {
        let data = (0..cfg.u0 * cfg.v0 * w * h)
            .map(|_| rng.random_range(0.0f32..1.0))
            .collect();
        ModeTensor::new(cfg.u0, cfg.v0, w, h, 1, data).map_err(validation)?
    };

    let audit = count_macs(&cfg, w, h).map_err(validation)?;
    println!(
        "preset={} task input {}x{} -> {} views, spatial {}x{}, {} reps",
        cfg.preset, cfg.u0, cfg.v0, cfg.n_out, w, h, args.reps
    );

    let mut counted = 0u128;
    let mut seconds = Vec::new();
    for rep in 0..args.reps.max(1) {
        counted = 0;
        let started = Instant::now();
        forward_eval(&cfg, &plan, &state, &x, Some(&mut counted)).map_err(validation)?;
        let dt = started.elapsed().as_secs_f64();
        seconds.push(dt);
        println!(
            "rep {rep}: {:.4} s  ({:.1} Mmac/s)",
            dt,
            counted as f64 / dt / 1e6
        );
    }
    println!("instrumented macs per forward: {}", thousands(counted));
    println!("count_macs prediction:         {}", thousands(audit.total));
    if counted != audit.total {
        return Err(runtime(format!(
            "mac accounting mismatch: forward counted {counted}, audit predicts {}",
            audit.total
        )));
    }
    println!("mac accounting identity: exact");
    println!(
        "per-block separable vs full-4d: ratio {}/{} = {:.4}",
        audit.sas_vs_4d_ratio.0,
        audit.sas_vs_4d_ratio.1,
        audit.ratio_f64()
    );
    let best = seconds.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "best: {:.4} s  ({:.1} Mmac/s)",
        best,
        counted as f64 / best / 1e6
    );
    Ok(())
}
