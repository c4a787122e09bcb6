//! `lfrecon make-synthetic`: build a constant-disparity scene directory
//! from a texture image.

use std::path::PathBuf;

use clap::Args;
use lf_core::data::{synth_lf, Plane};

use crate::commands::parse_pair;
use crate::{lock, scene, validation, CliError};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Source texture (8-bit rgb or grayscale PNG).
    pub texture: PathBuf,
    /// Output scene directory.
    pub out: PathBuf,
    /// Disparity in pixels per view step.
    #[arg(long, default_value_t = 0.0)]
    pub disparity: f64,
    /// View grid, rows x cols.
    #[arg(long, default_value = "8x8")]
    pub grid: String,
    /// Spatial size of each view.
    #[arg(long)]
    pub size: String,
    /// Collapse an rgb texture to luminance first.
    #[arg(long)]
    pub gray: bool,
}

fn to_gray(p: &Plane) -> Plane {
    if p.channels == 1 {
        return p.clone();
    }
    let mut out = Plane::zeros(p.width, p.height, 1);
    for y in 0..p.height {
        for x in 0..p.width {
            let v = 0.299 * p.get(x, y, 0) as f64
                + 0.587 * p.get(x, y, 1) as f64
                + 0.114 * p.get(x, y, 2) as f64;
            out.set(x, y, 0, v as f32);
        }
    }
    out
}

pub fn execute(args: &SynthArgs) -> Result<(), CliError> {
    let (rows, cols) = parse_pair(&args.grid, "--grid")?;
    let (w, h) = parse_pair(&args.size, "--size")?;
    let mut texture = scene::load_plane_png(&args.texture)?;
    if args.gray {
        texture = to_gray(&texture);
    }
    let lf = synth_lf(&texture, args.disparity, rows, cols, w, h).map_err(validation)?;
    let _lock = lock::acquire(&args.out)?;
    scene::save_view_directory(&args.out, &lf)?;
    println!(
        "wrote a {rows}x{cols} grid of {w}x{h} views at disparity {} to {}",
        args.disparity,
        args.out.display()
    );
    Ok(())
}
