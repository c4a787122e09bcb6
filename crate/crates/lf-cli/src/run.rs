//! Wall-clock training driver: drives the core stepper, writes the
//! append-only `train.log` (`iter<TAB>loss<TAB>seconds`), and checkpoints
//! on schedule. Per-sample gradients inside a batch are computed on
//! separate threads and reduced in fixed sample order, so the result is
//! bit-identical to a sequential run.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use lf_core::data::LightField;
use lf_core::train::{ModelGrads, TrainError, TrainSample, Trainer};

use crate::checkpoint;
use crate::{runtime, CliError};

pub struct TrainOutcome {
    pub first_loss: f32,
    pub final_loss: f32,
    pub iterations_run: u64,
    pub losses: Vec<f32>,
}

fn batch_results(
    trainer: &Trainer<f32>,
    batch: &[TrainSample<f32>],
) -> Result<Vec<(f32, ModelGrads<f32>)>, TrainError> {
    if batch.len() < 2 {
        return batch.iter().map(|s| trainer.sample_gradients(s)).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .iter()
            .map(|sample| scope.spawn(move || trainer.sample_gradients(sample)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    })
}

/// Run iterations `start_iter..train_cfg.iterations`. Writes checkpoints
/// every `checkpoint_every` iterations plus a final one; on a non-finite
/// loss the run aborts with the last checkpoint intact.
pub fn run_training(
    trainer: &mut Trainer<f32>,
    dataset: &[LightField],
    out_dir: &Path,
    start_iter: u64,
) -> Result<TrainOutcome, CliError> {
    let iterations = trainer.train_cfg().iterations;
    let every = trainer.train_cfg().checkpoint_every;
    let log_path = out_dir.join("train.log");
    let mut log = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| runtime(format!("cannot open {}: {e}", log_path.display())))?,
    );

    let write_checkpoint = |trainer: &Trainer<f32>, name: &str| -> Result<(), CliError> {
        let path = out_dir.join(name);
        checkpoint::save(&path, trainer.net_cfg(), trainer.state())?;
        checkpoint::save_sidecar(
            &checkpoint::sidecar_path(&path),
            trainer.net_cfg(),
            trainer.state(),
            trainer.adam(),
        )
    };

    let mut losses = Vec::new();
    for iter in start_iter..iterations {
        let started = Instant::now();
        let batch = trainer
            .sample(dataset, iter)
            .map_err(|e| runtime(format!("iteration {iter}: {e}")))?;
        let results = batch_results(trainer, &batch)
            .map_err(|e| runtime(format!("iteration {iter}: {e}")))?;
        let loss = trainer
            .apply_gradients(iter, results)
            .map_err(|e| runtime(format!("aborting, last checkpoint kept: {e}")))?;
        let seconds = started.elapsed().as_secs_f64();
        writeln!(log, "{iter}\t{loss}\t{seconds:.6}")
            .map_err(|e| runtime(format!("cannot append to train.log: {e}")))?;
        log.flush()
            .map_err(|e| runtime(format!("cannot flush train.log: {e}")))?;
        losses.push(loss);

        if (iter + 1) % every == 0 && iter + 1 != iterations {
            write_checkpoint(trainer, &checkpoint::checkpoint_name(iter + 1))?;
        }
    }
    write_checkpoint(trainer, "ckpt_final.sadn")?;

    Ok(TrainOutcome {
        first_loss: losses.first().copied().unwrap_or(0.0),
        final_loss: losses.last().copied().unwrap_or(0.0),
        iterations_run: iterations.saturating_sub(start_iter),
        losses,
    })
}
