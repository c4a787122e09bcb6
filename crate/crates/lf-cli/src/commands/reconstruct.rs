//! `lfrecon reconstruct`: synthesize the dense view grid from a sparse
//! scene. Luminance goes through the network, chroma through angular
//! interpolation, input views pass through untouched.

use std::path::PathBuf;

use clap::Args;
use lf_core::data::{
    assemble_dense, chroma_angular_upsample, extract_sparse, make_pattern, rgb_to_ycbcr,
    unstack_planes, ycbcr_to_rgb, ColorSpace, LightField, Plane, Task, ViewPattern,
};
use lf_core::net::{build_plan, forward_eval, NetworkConfig};

use crate::{checkpoint, lock, scene, validation, CliError};

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Trained checkpoint (.sadn).
    pub checkpoint: PathBuf,
    /// Sparse input scene directory (or a dense one; the pattern's input
    /// views are then extracted).
    pub scene: PathBuf,
    /// Output scene directory.
    pub out: PathBuf,
    /// Task override when the checkpoint dims are non-standard.
    #[arg(long)]
    pub task: Option<String>,
}

/// Match checkpoint dims against the standard tasks.
fn infer_task(cfg: &NetworkConfig, flag: &Option<String>) -> Result<Task, CliError> {
    let fits = |task: Task| {
        let p = make_pattern(task);
        p.in_rows == cfg.u0 && p.in_cols == cfg.v0 && p.n_out() == cfg.n_out
    };
    if let Some(name) = flag {
        let task =
            Task::parse(name).ok_or_else(|| validation(format!("unknown task '{name}'")))?;
        if !fits(task) {
            return Err(validation(format!(
                "checkpoint was trained for ({},{}) inputs with {} outputs, which is not task {}",
                cfg.u0,
                cfg.v0,
                cfg.n_out,
                task.name()
            )));
        }
        return Ok(task);
    }
    [Task::From2x2To8x8, Task::From3x3To9x9]
        .into_iter()
        .find(|t| fits(*t))
        .ok_or_else(|| {
            validation("checkpoint dims match no standard task; pass --task explicitly")
        })
}

fn sparse_input(
    lf: LightField,
    cfg: &NetworkConfig,
    pattern: &ViewPattern,
) -> Result<LightField, CliError> {
    if lf.u == cfg.u0 && lf.v == cfg.v0 {
        Ok(lf)
    } else if lf.u == pattern.rows && lf.v == pattern.cols {
        let (input, _) = extract_sparse(&lf, pattern).map_err(validation)?;
        Ok(input)
    } else {
        Err(validation(format!(
            "scene grid {}x{} matches neither the sparse {}x{} input nor the dense {}x{} grid",
            lf.u, lf.v, cfg.u0, cfg.v0, pattern.rows, pattern.cols
        )))
    }
}

fn chroma_plane(view: &Plane) -> Plane {
    let mut p = Plane::zeros(view.width, view.height, 2);
    for y in 0..view.height {
        for x in 0..view.width {
            p.set(x, y, 0, view.get(x, y, 1));
            p.set(x, y, 1, view.get(x, y, 2));
        }
    }
    p
}

fn ycbcr_view_to_rgb(y: &Plane, chroma: &Plane) -> Result<Plane, CliError> {
    let mut lf = LightField::zeros(1, 1, y.width, y.height, ColorSpace::YCbCr);
    for yy in 0..y.height {
        for x in 0..y.width {
            lf.set(0, 0, x, yy, 0, y.get(x, yy, 0));
            lf.set(0, 0, x, yy, 1, chroma.get(x, yy, 0));
            lf.set(0, 0, x, yy, 2, chroma.get(x, yy, 1));
        }
    }
    Ok(ycbcr_to_rgb(&lf).map_err(validation)?.view_plane(0, 0))
}

pub fn execute(args: &ReconstructArgs) -> Result<(), CliError> {
    let (net_cfg, state) = checkpoint::load(&args.checkpoint)?;
    let task = infer_task(&net_cfg, &args.task)?;
    let pattern = make_pattern(task);
    let input = sparse_input(scene::load_view_directory(&args.scene)?, &net_cfg, &pattern)?;

    let plan = build_plan(&net_cfg).map_err(validation)?;

    let (predictions, assembled_input): (Vec<Plane>, LightField) = match input.colorspace {
        ColorSpace::YOnly => {
            let x = input.to_tensor::<f32>();
            let out = forward_eval(&net_cfg, &plan, &state, &x, None).map_err(validation)?;
            (unstack_planes(&out).map_err(validation)?, input)
        }
        ColorSpace::Rgb => {
            let ycbcr = rgb_to_ycbcr(&input).map_err(validation)?;
            let y = ycbcr.extract_channel(0).map_err(validation)?;
            let out =
                forward_eval(&net_cfg, &plan, &state, &y.to_tensor::<f32>(), None)
                    .map_err(validation)?;
            let pred_y = unstack_planes(&out).map_err(validation)?;

            let control: Vec<Plane> = pattern
                .inputs
                .iter()
                .enumerate()
                .map(|(i, _)| {
                    let (r, c) = (i / pattern.in_cols, i % pattern.in_cols);
                    chroma_plane(&ycbcr.view_plane(r, c))
                })
                .collect();
            let dense_chroma = chroma_angular_upsample(&control, &pattern).map_err(validation)?;

            let rgb_predictions = pred_y
                .iter()
                .zip(&pattern.outputs)
                .map(|(y_plane, &(r, c))| {
                    ycbcr_view_to_rgb(y_plane, &dense_chroma[r * pattern.cols + c])
                })
                .collect::<Result<Vec<_>, _>>()?;
            (rgb_predictions, input)
        }
        ColorSpace::YCbCr => unreachable!("scene loader never yields ycbcr"),
    };

    let dense =
        assemble_dense(&assembled_input, &predictions, &pattern).map_err(validation)?;

    let _lock = lock::acquire(&args.out)?;
    scene::save_view_directory(&args.out, &dense)?;
    println!(
        "wrote {} views ({} pass-through, {} synthesized) to {}",
        pattern.rows * pattern.cols,
        pattern.inputs.len(),
        pattern.outputs.len(),
        args.out.display()
    );
    Ok(())
}
