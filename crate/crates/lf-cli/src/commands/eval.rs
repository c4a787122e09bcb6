//! `lfrecon eval`: per-view PSNR/SSIM between a reconstructed scene and
//! ground truth, with optional heat maps and EPI slices.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use image::RgbImage;
use lf_core::data::{
    make_pattern, prepare_eval_views, rgb_to_ycbcr, shave_borders, ColorSpace, LightField, Task,
};
use lf_core::metrics::{
    epi_slice, error_heatmap, mse, psnr_from_mse, ssim, EpiAxis, EvalSpace, MetricReport,
    ViewMetrics, ViewSet,
};

use crate::{lock, runtime, scene, validation, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Rgb,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewsArg {
    Novel,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    None,
    Lytro8x8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Table,
    Tsv,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Reconstructed scene directory.
    pub recon: PathBuf,
    /// Ground truth scene directory.
    pub truth: PathBuf,
    /// Color space the metrics are computed in.
    #[arg(long, value_enum, default_value_t = SpaceArg::Rgb)]
    pub space: SpaceArg,
    /// Evaluate synthesized views only, or every view in the grid.
    #[arg(long, value_enum, default_value_t = ViewsArg::Novel)]
    pub views: ViewsArg,
    /// lytro8x8 crops to the central 8x8 views and shaves 22 border pixels.
    #[arg(long, value_enum, default_value_t = ProtocolArg::None)]
    pub protocol: ProtocolArg,
    /// Task used to tell novel views from inputs (inferred from the grid
    /// size when omitted).
    #[arg(long)]
    pub task: Option<String>,
    /// stdout format.
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    pub format: FormatArg,
    /// Directory for report files and diagnostics.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one error heat map PNG per evaluated view (needs --out).
    #[arg(long)]
    pub heatmaps: bool,
    /// Absolute error mapped to the last colormap entry.
    #[arg(long, default_value_t = 0.1)]
    pub heatmap_scale: f64,
    /// Write central EPI slices of both fields (needs --out).
    #[arg(long)]
    pub epi: bool,
}

fn apply_protocol(lf: LightField, protocol: ProtocolArg) -> Result<LightField, CliError> {
    match protocol {
        ProtocolArg::None => Ok(lf),
        ProtocolArg::Lytro8x8 => {
            let cropped = prepare_eval_views(&lf).map_err(validation)?;
            shave_borders(&cropped, 22).map_err(validation)
        }
    }
}

fn to_eval_space(lf: &LightField, space: SpaceArg) -> Result<LightField, CliError> {
    match (space, lf.colorspace) {
        (SpaceArg::Rgb, ColorSpace::Rgb) => Ok(lf.clone()),
        (SpaceArg::Rgb, ColorSpace::YOnly) => Err(validation(
            "--space rgb needs rgb scenes; these are grayscale (use --space y)",
        )),
        (SpaceArg::Y, ColorSpace::YOnly) => Ok(lf.clone()),
        (SpaceArg::Y, ColorSpace::Rgb) => {
            let ycbcr = rgb_to_ycbcr(lf).map_err(validation)?;
            ycbcr.extract_channel(0).map_err(validation)
        }
        (_, ColorSpace::YCbCr) => unreachable!("scene loader never yields ycbcr"),
    }
}

fn save_rgb_bytes(path: &PathBuf, width: usize, height: usize, rgb: Vec<u8>) -> Result<(), CliError> {
    RgbImage::from_raw(width as u32, height as u32, rgb)
        .expect("raw buffer matches dimensions")
        .save(path)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn execute(args: &EvalArgs) -> Result<(), CliError> {
    let recon = apply_protocol(scene::load_view_directory(&args.recon)?, args.protocol)?;
    let truth = apply_protocol(scene::load_view_directory(&args.truth)?, args.protocol)?;
    if recon.u != truth.u || recon.v != truth.v {
        return Err(validation(format!(
            "grid mismatch: reconstruction is {}x{}, ground truth {}x{}",
            recon.u, recon.v, truth.u, truth.v
        )));
    }
    if recon.w != truth.w || recon.h != truth.h {
        return Err(validation(format!(
            "spatial mismatch: reconstruction is {}x{}, ground truth {}x{}",
            recon.w, recon.h, truth.w, truth.h
        )));
    }

    let positions: Vec<(usize, usize)> = match args.views {
        ViewsArg::All => (0..recon.u)
            .flat_map(|r| (0..recon.v).map(move |c| (r, c)))
            .collect(),
        ViewsArg::Novel => {
            let task = match &args.task {
                Some(name) => Task::parse(name)
                    .ok_or_else(|| validation(format!("unknown task '{name}'")))?,
                None => match (recon.u, recon.v) {
                    (8, 8) => Task::From2x2To8x8,
                    (9, 9) => Task::From3x3To9x9,
                    (u, v) => {
                        return Err(validation(format!(
                            "cannot infer the task from a {u}x{v} grid; pass --task or --views all"
                        )))
                    }
                },
            };
            let pattern = make_pattern(task);
            if pattern.rows != recon.u || pattern.cols != recon.v {
                return Err(validation(format!(
                    "task {} expects a {}x{} grid, scenes are {}x{}",
                    task.name(),
                    pattern.rows,
                    pattern.cols,
                    recon.u,
                    recon.v
                )));
            }
            pattern.outputs.clone()
        }
    };

    let recon_eval = to_eval_space(&recon, args.space)?;
    let truth_eval = to_eval_space(&truth, args.space)?;

    let mut entries = Vec::with_capacity(positions.len());
    for &(r, c) in &positions {
        let a = recon_eval.view_plane(r, c);
        let b = truth_eval.view_plane(r, c);
        let view_mse = mse(&a, &b).map_err(validation)?;
        entries.push(ViewMetrics {
            row: r,
            col: c,
            psnr: psnr_from_mse(view_mse, 1.0).map_err(validation)?,
            ssim: ssim(&a, &b).map_err(validation)?,
            mse: view_mse,
        });
    }
    let report = MetricReport {
        entries,
        space: match args.space {
            SpaceArg::Rgb => EvalSpace::Rgb,
            SpaceArg::Y => EvalSpace::YOnly,
        },
        view_set: match args.views {
            ViewsArg::Novel => ViewSet::NovelOnly,
            ViewsArg::All => ViewSet::All,
        },
        peak: 1.0,
    };

    match args.format {
        FormatArg::Table => print!("{}", report.render_table()),
        FormatArg::Tsv => print!("{}", report.render_lines()),
    }

    if args.heatmaps || args.epi {
        if args.out.is_none() {
            return Err(validation("--heatmaps and --epi need --out DIR"));
        }
    }
    if let Some(out) = &args.out {
        let _lock = lock::acquire(out)?;
        std::fs::write(out.join("report.tsv"), report.render_lines())
            .map_err(|e| runtime(format!("cannot write report.tsv: {e}")))?;
        std::fs::write(out.join("report.txt"), report.render_table())
            .map_err(|e| runtime(format!("cannot write report.txt: {e}")))?;
        if args.heatmaps {
            for &(r, c) in &positions {
                let a = recon_eval.view_plane(r, c);
                let b = truth_eval.view_plane(r, c);
                let hm = error_heatmap(&a, &b, args.heatmap_scale).map_err(validation)?;
                save_rgb_bytes(
                    &out.join(format!("heatmap_r{r}_c{c}.png")),
                    hm.width,
                    hm.height,
                    hm.rgb,
                )?;
            }
        }
        if args.epi {
            let jobs = [
                ("epi_h_recon.png", &recon_eval, EpiAxis::Horizontal),
                ("epi_h_truth.png", &truth_eval, EpiAxis::Horizontal),
                ("epi_v_recon.png", &recon_eval, EpiAxis::Vertical),
                ("epi_v_truth.png", &truth_eval, EpiAxis::Vertical),
            ];
            for (name, lf, axis) in jobs {
                let (view_ix, spatial_ix) = match axis {
                    EpiAxis::Horizontal => (lf.u / 2, lf.h / 2),
                    EpiAxis::Vertical => (lf.v / 2, lf.w / 2),
                };
                let slice = epi_slice(lf, axis, view_ix, spatial_ix).map_err(validation)?;
                scene::save_plane_png(&out.join(name), &slice)?;
            }
        }
    }
    Ok(())
}
