//! Scene directories: `meta.txt` plus one 8-bit PNG per view named
//! `view_r{row}_c{col}.png`, zero-based indices.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};
use lf_core::data::{ColorSpace, LightField, Plane};

use crate::{validation, CliError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meta {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub colorspace: ColorSpace,
}

pub fn parse_meta(path: &Path) -> Result<Meta, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = None;
    let mut cols = None;
    let mut width = None;
    let mut height = None;
    let mut colorspace = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| validation(format!("malformed meta line '{raw}'")))?;
        let value = value.trim();
        match key.trim() {
            "rows" => rows = value.parse::<usize>().ok(),
            "cols" => cols = value.parse::<usize>().ok(),
            "width" => width = value.parse::<usize>().ok(),
            "height" => height = value.parse::<usize>().ok(),
            "colorspace" => colorspace = ColorSpace::parse(value),
            other => return Err(validation(format!("unknown meta key '{other}'"))),
        }
    }
    let field = |name: &str, v: Option<usize>| {
        v.ok_or_else(|| validation(format!("meta.txt is missing or malformed at '{name}'")))
    };
    let colorspace =
        colorspace.ok_or_else(|| validation("meta.txt is missing a valid 'colorspace'"))?;
    if colorspace == ColorSpace::YCbCr {
        return Err(validation(
            "scene directories store rgb or y_only views, not ycbcr",
        ));
    }
    Ok(Meta {
        rows: field("rows", rows)?,
        cols: field("cols", cols)?,
        width: field("width", width)?,
        height: field("height", height)?,
        colorspace,
    })
}

pub fn view_file_name(row: usize, col: usize) -> String {
    format!("view_r{row}_c{col}.png")
}

/// Decode an 8-bit PNG into a normalized plane (values divided by 255).
pub fn load_plane_png(path: &Path) -> Result<Plane, CliError> {
    let img = image::open(path)
        .map_err(|e| validation(format!("cannot decode {}: {e}", path.display())))?;
    let plane = match img {
        DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = rgb.dimensions();
            let data = rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
            Plane::new(w as usize, h as usize, 3, data).unwrap()
        }
        DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            let data = gray.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
            Plane::new(w as usize, h as usize, 1, data).unwrap()
        }
        _ => {
            return Err(validation(format!(
                "{} must be an 8-bit rgb or grayscale PNG",
                path.display()
            )))
        }
    };
    Ok(plane)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Write a plane as an 8-bit PNG, quantizing round half up.
pub fn save_plane_png(path: &Path, plane: &Plane) -> Result<(), CliError> {
    let err = |e: image::ImageError| {
        crate::runtime(format!("cannot write {}: {e}", path.display()))
    };
    match plane.channels {
        3 => {
            let buf: Vec<u8> = plane.data.iter().map(|&v| quantize(v)).collect();
            RgbImage::from_raw(plane.width as u32, plane.height as u32, buf)
                .expect("raw buffer matches dimensions")
                .save(path)
                .map_err(err)
        }
        1 => {
            let buf: Vec<u8> = plane.data.iter().map(|&v| quantize(v)).collect();
            GrayImage::from_raw(plane.width as u32, plane.height as u32, buf)
                .expect("raw buffer matches dimensions")
                .save(path)
                .map_err(err)
        }
        other => Err(validation(format!(
            "cannot encode a {other} channel plane as PNG"
        ))),
    }
}

/// Load a scene directory into a normalized light field. Missing views,
/// inconsistent sizes, or malformed metadata are rejected.
pub fn load_view_directory(dir: &Path) -> Result<LightField, CliError> {
    let meta = parse_meta(&dir.join("meta.txt"))?;
    let mut views = Vec::with_capacity(meta.rows * meta.cols);
    for r in 0..meta.rows {
        for c in 0..meta.cols {
            let path = dir.join(view_file_name(r, c));
            if !path.exists() {
                return Err(validation(format!(
                    "missing view ({r}, {c}): {}",
                    path.display()
                )));
            }
            let plane = load_plane_png(&path)?;
            if plane.width != meta.width || plane.height != meta.height {
                return Err(validation(format!(
                    "view ({r}, {c}) is {}x{}, meta says {}x{}",
                    plane.width, plane.height, meta.width, meta.height
                )));
            }
            if plane.channels != meta.colorspace.channels() {
                return Err(validation(format!(
                    "view ({r}, {c}) has {} channels, colorspace {} expects {}",
                    plane.channels,
                    meta.colorspace.name(),
                    meta.colorspace.channels()
                )));
            }
            views.push(plane);
        }
    }
    let lf = LightField::from_views(meta.rows, meta.cols, &views, meta.colorspace)
        .map_err(validation)?;
    lf.check_ingestion_range().map_err(validation)?;
    Ok(lf)
}

/// Write a light field as a scene directory (meta plus one PNG per view).
pub fn save_view_directory(dir: &Path, lf: &LightField) -> Result<(), CliError> {
    if lf.colorspace == ColorSpace::YCbCr {
        return Err(validation("convert to rgb or y_only before writing PNGs"));
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| crate::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let meta = format!(
        "rows={}\ncols={}\nwidth={}\nheight={}\ncolorspace={}\n",
        lf.u,
        lf.v,
        lf.w,
        lf.h,
        lf.colorspace.name()
    );
    std::fs::write(dir.join("meta.txt"), meta)
        .map_err(|e| crate::runtime(format!("cannot write meta.txt: {e}")))?;
    for r in 0..lf.u {
        for c in 0..lf.v {
            save_plane_png(&dir.join(view_file_name(r, c)), &lf.view_plane(r, c))?;
        }
    }
    Ok(())
}

/// A dataset path is either one scene directory (contains `meta.txt`) or a
/// directory of scene directories.
pub fn load_dataset(dir: &Path) -> Result<Vec<LightField>, CliError> {
    if !dir.exists() {
        return Err(validation(format!(
            "dataset path {} does not exist",
            dir.display()
        )));
    }
    if dir.join("meta.txt").exists() {
        return Ok(vec![load_view_directory(dir)?]);
    }
    let mut scene_dirs: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| validation(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("meta.txt").exists())
        .collect();
    scene_dirs.sort();
    if scene_dirs.is_empty() {
        return Err(validation(format!(
            "{} contains no scene directories (meta.txt not found)",
            dir.display()
        )));
    }
    scene_dirs.iter().map(|p| load_view_directory(p)).collect()
}
