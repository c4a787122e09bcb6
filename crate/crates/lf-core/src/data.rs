//! Light fields, view patterns, color handling, grid decoding, chroma
//! angular upsampling, and a synthetic light field generator.
//!
//! Conventions used throughout: `u` indexes angular rows and pairs with the
//! spatial row coordinate `h` (y), `v` indexes angular columns and pairs
//! with the spatial column coordinate `w` (x). Moving the viewpoint along a
//! row of the camera grid shifts scene content horizontally, which is what
//! makes rows of a horizontal EPI slice plain translations of each other.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;


use crate::tensor::{ModeTensor, Real, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("expected colorspace {expected:?}, got {actual:?}")]
    Colorspace {
        expected: ColorSpace,
        actual: ColorSpace,
    },
    #[error("extents too small: {0}")]
    ExtentTooSmall(String),
    #[error("light field grid is {got_rows}x{got_cols}, pattern needs {rows}x{cols}")]
    GridMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("invalid view pattern: {0}")]
    PatternInvalid(String),
    #[error("image {dim} {size} is not divisible by {by}")]
    Indivisible {
        dim: &'static str,
        size: usize,
        by: usize,
    },
    #[error("need at least 2 control points per angular axis")]
    TooFewControlPoints,
    #[error(
        "texture {got_w}x{got_h} too small; need at least {required_w}x{required_h} for this disparity"
    )]
    InsufficientTexture {
        required_w: usize,
        required_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("expected {expected} predictions, got {got}")]
    PredictionCount { expected: usize, got: usize },
    #[error("channel count mismatch: {0}")]
    ChannelMismatch(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("ingested values must be finite and within [0, 1]")]
    ValueRange,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
    YOnly,
}

impl ColorSpace {
    pub fn channels(self) -> usize {
        match self {
            ColorSpace::Rgb | ColorSpace::YCbCr => 3,
            ColorSpace::YOnly => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "rgb",
            ColorSpace::YCbCr => "ycbcr",
            ColorSpace::YOnly => "y_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rgb" => Some(ColorSpace::Rgb),
            "ycbcr" => Some(ColorSpace::YCbCr),
            "y_only" | "y" | "gray" => Some(ColorSpace::YOnly),
            _ => None,
        }
    }
}

/// A single raster image: `width` columns (x), `height` rows (y),
/// interleaved channels, row-major `(y, x, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width * height * channels).then_some(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, ch: usize) -> usize {
        (y * self.width + x) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f32 {
        self.data[self.idx(x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, value: f32) {
        let i = self.idx(x, y, ch);
        self.data[i] = value;
    }
}

/// 4D grid of views with a color tag. Storage matches [`ModeTensor`]:
/// row-major `(u, v, w, h, c)` with `w` the horizontal pixel coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    pub u: usize,
    pub v: usize,
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub colorspace: ColorSpace,
    pub data: Vec<f32>,
}

impl LightField {
    pub fn new(
        u: usize,
        v: usize,
        w: usize,
        h: usize,
        colorspace: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Self, DataError> {
        let c = colorspace.channels();
        if u == 0 || v == 0 || w == 0 || h == 0 {
            return Err(DataError::ExtentTooSmall("all extents must be positive".into()));
        }
        if data.len() != u * v * w * h * c {
            return Err(DataError::Tensor(TensorError::LengthMismatch {
                len: data.len(),
                expected: u * v * w * h * c,
            }));
        }
        Ok(Self {
            u,
            v,
            w,
            h,
            c,
            colorspace,
            data,
        })
    }

    pub fn zeros(u: usize, v: usize, w: usize, h: usize, colorspace: ColorSpace) -> Self {
        let c = colorspace.channels();
        Self {
            u,
            v,
            w,
            h,
            c,
            colorspace,
            data: vec![0.0; u * v * w * h * c],
        }
    }

    #[inline]
    pub fn idx(&self, u: usize, v: usize, w: usize, h: usize, c: usize) -> usize {
        ((((u * self.v + v) * self.w + w) * self.h + h) * self.c) + c
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, w: usize, h: usize, c: usize) -> f32 {
        self.data[self.idx(u, v, w, h, c)]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, w: usize, h: usize, c: usize, value: f32) {
        let i = self.idx(u, v, w, h, c);
        self.data[i] = value;
    }

    /// Enforce the ingestion contract: every value finite and in [0, 1].
    pub fn check_ingestion_range(&self) -> Result<(), DataError> {
        for &x in &self.data {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(DataError::ValueRange);
            }
        }
        Ok(())
    }

    /// Copy one view out as a raster image.
    pub fn view_plane(&self, r: usize, c: usize) -> Plane {
        let mut p = Plane::zeros(self.w, self.h, self.c);
        for x in 0..self.w {
            for y in 0..self.h {
                for ch in 0..self.c {
                    p.set(x, y, ch, self.get(r, c, x, y, ch));
                }
            }
        }
        p
    }

    /// Build a light field from a row-major list of equally sized views.
    pub fn from_views(
        rows: usize,
        cols: usize,
        views: &[Plane],
        colorspace: ColorSpace,
    ) -> Result<Self, DataError> {
        if views.len() != rows * cols {
            return Err(DataError::PredictionCount {
                expected: rows * cols,
                got: views.len(),
            });
        }
        let first = &views[0];
        let c = colorspace.channels();
        if first.channels != c {
            return Err(DataError::ChannelMismatch(format!(
                "views have {} channels, colorspace {} needs {c}",
                first.channels,
                colorspace.name()
            )));
        }
        let mut lf = LightField::zeros(rows, cols, first.width, first.height, colorspace);
        for (i, view) in views.iter().enumerate() {
            if view.width != first.width || view.height != first.height {
                return Err(DataError::ExtentTooSmall(
                    "all views must share the same size".into(),
                ));
            }
            let (r, cc) = (i / cols, i % cols);
            for x in 0..lf.w {
                for y in 0..lf.h {
                    for ch in 0..c {
                        lf.set(r, cc, x, y, ch, view.get(x, y, ch));
                    }
                }
            }
        }
        Ok(lf)
    }

    /// Spatial crop of every view: `width x height` starting at `(x0, y0)`.
    pub fn crop_spatial(
        &self,
        x0: usize,
        y0: usize,
        width: usize,
        height: usize,
    ) -> Result<Self, DataError> {
        if x0 + width > self.w || y0 + height > self.h || width == 0 || height == 0 {
            return Err(DataError::OutOfRange(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.w, self.h
            )));
        }
        let mut out = LightField::zeros(self.u, self.v, width, height, self.colorspace);
        for r in 0..self.u {
            for c in 0..self.v {
                for x in 0..width {
                    for y in 0..height {
                        for ch in 0..self.c {
                            out.set(r, c, x, y, ch, self.get(r, c, x0 + x, y0 + y, ch));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Central angular crop to a `rows x cols` sub-grid.
    pub fn crop_angular_center(&self, rows: usize, cols: usize) -> Result<Self, DataError> {
        if self.u < rows || self.v < cols {
            return Err(DataError::ExtentTooSmall(format!(
                "angular grid {}x{} cannot be cropped to {rows}x{cols}",
                self.u, self.v
            )));
        }
        let (r0, c0) = ((self.u - rows) / 2, (self.v - cols) / 2);
        let mut out = LightField::zeros(rows, cols, self.w, self.h, self.colorspace);
        for r in 0..rows {
            for c in 0..cols {
                for x in 0..self.w {
                    for y in 0..self.h {
                        for ch in 0..self.c {
                            out.set(r, c, x, y, ch, self.get(r0 + r, c0 + c, x, y, ch));
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Single-channel copy (keeps extents, tags the result `y_only`).
    pub fn extract_channel(&self, ch: usize) -> Result<Self, DataError> {
        if ch >= self.c {
            return Err(DataError::OutOfRange(format!(
                "channel {ch} of {}",
                self.c
            )));
        }
        let mut out = LightField::zeros(self.u, self.v, self.w, self.h, ColorSpace::YOnly);
        for i in 0..out.data.len() {
            out.data[i] = self.data[i * self.c + ch];
        }
        Ok(out)
    }

    /// View the raw values as a mode tensor (same storage order).
    pub fn to_tensor<T: Real>(&self) -> ModeTensor<T> {
        let data = self.data.iter().map(|&x| T::from_f32(x)).collect();
        ModeTensor::new(self.u, self.v, self.w, self.h, self.c, data)
            .expect("light field extents are valid")
    }
}

/// Central 8x8 angular crop used by the evaluation protocol for 14x14
/// capture grids (rows and columns 3..=10).
pub fn prepare_eval_views(lf: &LightField) -> Result<LightField, DataError> {
    if lf.u < 8 || lf.v < 8 {
        return Err(DataError::ExtentTooSmall(format!(
            "need at least an 8x8 grid, got {}x{}",
            lf.u, lf.v
        )));
    }
    lf.crop_angular_center(8, 8)
}

/// Remove `margin` pixels from each spatial border of every view.
pub fn shave_borders(lf: &LightField, margin: usize) -> Result<LightField, DataError> {
    if lf.w <= 2 * margin || lf.h <= 2 * margin {
        return Err(DataError::ExtentTooSmall(format!(
            "cannot shave {margin} px from {}x{} views",
            lf.w, lf.h
        )));
    }
    lf.crop_spatial(margin, margin, lf.w - 2 * margin, lf.h - 2 * margin)
}

/// Which angular positions are network inputs and which are reconstruction
/// targets. Inputs form a full sub-lattice (`in_rows x in_cols`), both
/// orderings are row-major, and inputs plus outputs partition the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewPattern {
    pub rows: usize,
    pub cols: usize,
    pub in_rows: usize,
    pub in_cols: usize,
    pub inputs: Vec<(usize, usize)>,
    pub outputs: Vec<(usize, usize)>,
}

/// The two standard reconstruction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Corner views of an 8x8 grid reconstruct the other 60.
    From2x2To8x8,
    /// A 3x3 lattice at rows/cols {0, 4, 8} of a 9x9 grid reconstructs 72.
    From3x3To9x9,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::From2x2To8x8 => "2x2to8x8",
            Task::From3x3To9x9 => "3x3to9x9",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "2x2to8x8" => Some(Task::From2x2To8x8),
            "3x3to9x9" => Some(Task::From3x3To9x9),
            _ => None,
        }
    }
}

impl ViewPattern {
    /// Build a pattern from the full grid size and the input lattice rows
    /// and columns; outputs are all remaining positions in row-major order.
    pub fn from_lattice(
        rows: usize,
        cols: usize,
        in_row_set: &[usize],
        in_col_set: &[usize],
    ) -> Result<Self, DataError> {
        if in_row_set.is_empty() || in_col_set.is_empty() {
            return Err(DataError::PatternInvalid("empty input lattice".into()));
        }
        let mut in_row_set = in_row_set.to_vec();
        let mut in_col_set = in_col_set.to_vec();
        in_row_set.sort_unstable();
        in_row_set.dedup();
        in_col_set.sort_unstable();
        in_col_set.dedup();
        let mut inputs = Vec::new();
        for &r in &in_row_set {
            for &c in &in_col_set {
                if r >= rows || c >= cols {
                    return Err(DataError::PatternInvalid(format!(
                        "input ({r}, {c}) outside {rows}x{cols} grid"
                    )));
                }
                inputs.push((r, c));
            }
        }
        let mut outputs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if !inputs.contains(&(r, c)) {
                    outputs.push((r, c));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            in_rows: in_row_set.len(),
            in_cols: in_col_set.len(),
            inputs,
            outputs,
        })
    }

    pub fn n_out(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_input(&self, pos: (usize, usize)) -> bool {
        self.inputs.contains(&pos)
    }

    /// True when the input set (hence the output set) maps onto itself
    /// under the dihedral element `g`.
    pub fn invariant_under(&self, g: u8) -> bool {
        self.inputs.iter().all(|&p| {
            let q = dihedral_map(g, p, (self.rows, self.cols));
            self.inputs.contains(&q)
        }) && dihedral_dims(g, (self.rows, self.cols)) == (self.rows, self.cols)
    }
}

/// Pattern for one of the standard tasks.
pub fn make_pattern(task: Task) -> ViewPattern {
    match task {
        Task::From2x2To8x8 => ViewPattern::from_lattice(8, 8, &[0, 7], &[0, 7]),
        Task::From3x3To9x9 => ViewPattern::from_lattice(9, 9, &[0, 4, 8], &[0, 4, 8]),
    }
    .expect("standard patterns are valid")
}

/// Split a dense light field into the sparse input grid and the ordered
/// stack of target views.
pub fn extract_sparse(
    lf: &LightField,
    pattern: &ViewPattern,
) -> Result<(LightField, Vec<Plane>), DataError> {
    if lf.u != pattern.rows || lf.v != pattern.cols {
        return Err(DataError::GridMismatch {
            rows: pattern.rows,
            cols: pattern.cols,
            got_rows: lf.u,
            got_cols: lf.v,
        });
    }
    let views: Vec<Plane> = pattern
        .inputs
        .iter()
        .map(|&(r, c)| lf.view_plane(r, c))
        .collect();
    let input = LightField::from_views(pattern.in_rows, pattern.in_cols, &views, lf.colorspace)?;
    let targets = pattern
        .outputs
        .iter()
        .map(|&(r, c)| lf.view_plane(r, c))
        .collect();
    Ok((input, targets))
}

/// Interleave the sparse input views and the predicted views back into the
/// dense grid. With `predictions` equal to the extracted targets this is
/// the exact inverse of [`extract_sparse`].
pub fn assemble_dense(
    input: &LightField,
    predictions: &[Plane],
    pattern: &ViewPattern,
) -> Result<LightField, DataError> {
    if input.u != pattern.in_rows || input.v != pattern.in_cols {
        return Err(DataError::GridMismatch {
            rows: pattern.in_rows,
            cols: pattern.in_cols,
            got_rows: input.u,
            got_cols: input.v,
        });
    }
    if predictions.len() != pattern.outputs.len() {
        return Err(DataError::PredictionCount {
            expected: pattern.outputs.len(),
            got: predictions.len(),
        });
    }
    let mut lf = LightField::zeros(pattern.rows, pattern.cols, input.w, input.h, input.colorspace);
    for (i, &(r, c)) in pattern.inputs.iter().enumerate() {
        let (ir, ic) = (i / pattern.in_cols, i % pattern.in_cols);
        for x in 0..lf.w {
            for y in 0..lf.h {
                for ch in 0..lf.c {
                    lf.set(r, c, x, y, ch, input.get(ir, ic, x, y, ch));
                }
            }
        }
    }
    for (plane, &(r, c)) in predictions.iter().zip(&pattern.outputs) {
        if plane.width != input.w || plane.height != input.h || plane.channels != input.c {
            return Err(DataError::ChannelMismatch(
                "prediction size does not match the input views".into(),
            ));
        }
        for x in 0..lf.w {
            for y in 0..lf.h {
                for ch in 0..lf.c {
                    lf.set(r, c, x, y, ch, plane.get(x, y, ch));
                }
            }
        }
    }
    Ok(lf)
}

/// Stack single-channel views into a `(1, 1, w, h, n)` tensor, channel `n`
/// holding view `n`.
pub fn stack_planes<T: Real>(planes: &[Plane]) -> Result<ModeTensor<T>, DataError> {
    let first = planes
        .first()
        .ok_or_else(|| DataError::PatternInvalid("empty stack".into()))?;
    if planes.iter().any(|p| p.channels != 1) {
        return Err(DataError::ChannelMismatch(
            "stacked views must be single channel".into(),
        ));
    }
    let (w, h, n) = (first.width, first.height, planes.len());
    let mut t = ModeTensor::zeros(1, 1, w, h, n);
    for (i, p) in planes.iter().enumerate() {
        if p.width != w || p.height != h {
            return Err(DataError::ExtentTooSmall(
                "stacked views must share the same size".into(),
            ));
        }
        for x in 0..w {
            for y in 0..h {
                t.set(0, 0, x, y, i, T::from_f32(p.get(x, y, 0)));
            }
        }
    }
    Ok(t)
}

/// Split a `(1, 1, w, h, n)` tensor into n single-channel views.
pub fn unstack_planes<T: Real>(t: &ModeTensor<T>) -> Result<Vec<Plane>, DataError> {
    if t.u != 1 || t.v != 1 {
        return Err(DataError::OutOfRange(
            "expected a (1, 1, w, h, n) tensor".into(),
        ));
    }
    let mut planes = Vec::with_capacity(t.c);
    for ch in 0..t.c {
        let mut p = Plane::zeros(t.w, t.h, 1);
        for x in 0..t.w {
            for y in 0..t.h {
                p.set(x, y, 0, t.get(0, 0, x, y, ch).into_f32());
            }
        }
        planes.push(p);
    }
    Ok(planes)
}

// BT.601 full-range luma/chroma matrix.
const YR: f64 = 0.299;
const YG: f64 = 0.587;
const YB: f64 = 0.114;

/// RGB to YCbCr, BT.601 full range. The tag must be `rgb`.
pub fn rgb_to_ycbcr(lf: &LightField) -> Result<LightField, DataError> {
    if lf.colorspace != ColorSpace::Rgb {
        return Err(DataError::Colorspace {
            expected: ColorSpace::Rgb,
            actual: lf.colorspace,
        });
    }
    let mut out = lf.clone();
    out.colorspace = ColorSpace::YCbCr;
    for px in out.data.chunks_exact_mut(3) {
        let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
        px[0] = (YR * r + YG * g + YB * b) as f32;
        px[1] = (0.5 - 0.168_736 * r - 0.331_264 * g + 0.5 * b) as f32;
        px[2] = (0.5 + 0.5 * r - 0.418_688 * g - 0.081_312 * b) as f32;
    }
    Ok(out)
}

/// YCbCr back to RGB; output clamped to [0, 1]. Composes with
/// [`rgb_to_ycbcr`] to the identity within 1e-6.
pub fn ycbcr_to_rgb(lf: &LightField) -> Result<LightField, DataError> {
    if lf.colorspace != ColorSpace::YCbCr {
        return Err(DataError::Colorspace {
            expected: ColorSpace::YCbCr,
            actual: lf.colorspace,
        });
    }
    let mut out = lf.clone();
    out.colorspace = ColorSpace::Rgb;
    for px in out.data.chunks_exact_mut(3) {
        let (y, cb, cr) = (px[0] as f64, px[1] as f64 - 0.5, px[2] as f64 - 0.5);
        let r = y + 1.402 * cr;
        let g = y - 0.344_136 * cb - 0.714_136 * cr;
        let b = y + 1.772 * cb;
        px[0] = r.clamp(0.0, 1.0) as f32;
        px[1] = g.clamp(0.0, 1.0) as f32;
        px[2] = b.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Layout of views inside one big image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    /// View `(r, c)` is the `(r, c)` tile.
    Tiled,
    /// Lenslet/macropixel layout: view sample `(r, c)` at spatial `(x, y)`
    /// reads image pixel row `y*rows + r`, column `x*cols + c`.
    Interleaved,
}

/// Split one image into a `rows x cols` view grid.
pub fn decode_sai_grid(
    image: &Plane,
    rows: usize,
    cols: usize,
    layout: GridLayout,
) -> Result<LightField, DataError> {
    if image.height % rows != 0 {
        return Err(DataError::Indivisible {
            dim: "height",
            size: image.height,
            by: rows,
        });
    }
    if image.width % cols != 0 {
        return Err(DataError::Indivisible {
            dim: "width",
            size: image.width,
            by: cols,
        });
    }
    let (vw, vh) = (image.width / cols, image.height / rows);
    let colorspace = if image.channels == 3 {
        ColorSpace::Rgb
    } else {
        ColorSpace::YOnly
    };
    if image.channels != colorspace.channels() {
        return Err(DataError::ChannelMismatch(format!(
            "{} channel images are not supported",
            image.channels
        )));
    }
    let mut lf = LightField::zeros(rows, cols, vw, vh, colorspace);
    for r in 0..rows {
        for c in 0..cols {
            for x in 0..vw {
                for y in 0..vh {
                    let (ix, iy) = match layout {
                        GridLayout::Tiled => (c * vw + x, r * vh + y),
                        GridLayout::Interleaved => (x * cols + c, y * rows + r),
                    };
                    for ch in 0..lf.c {
                        lf.set(r, c, x, y, ch, image.get(ix, iy, ch));
                    }
                }
            }
        }
    }
    Ok(lf)
}

/// Catmull-Rom basis on `(p0, p1, p2, p3)` for the segment `p1..p2`, with
/// out-of-range neighbors replaced by linear extrapolation so that two
/// control points reduce exactly to linear interpolation.
fn catmull_rom_weights(t: f64, k: isize, m: usize) -> [(usize, f64); 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let mut w = [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ];
    // fold ghost points p[-1] = 2 p[0] - p[1] and p[m] = 2 p[m-1] - p[m-2]
    let mut idx = [k - 1, k, k + 1, k + 2];
    if idx[0] < 0 {
        w[1] += 2.0 * w[0];
        w[2] -= w[0];
        w[0] = 0.0;
        idx[0] = 0;
    }
    if idx[3] > (m as isize - 1) {
        w[2] += 2.0 * w[3];
        w[1] -= w[3];
        w[3] = 0.0;
        idx[3] = m as isize - 1;
    }
    [
        (idx[0] as usize, w[0]),
        (idx[1] as usize, w[1]),
        (idx[2] as usize, w[2]),
        (idx[3] as usize, w[3]),
    ]
}

/// 1D interpolation weights over control coordinates `coords` (sorted,
/// at least 2) for a query position `q`.
fn axis_weights(coords: &[usize], q: usize) -> Vec<(usize, f64)> {
    let m = coords.len();
    let qf = q as f64;
    if let Some(i) = coords.iter().position(|&c| c == q) {
        return vec![(i, 1.0)];
    }
    // clamp outside the hull, otherwise find the enclosing segment
    if qf <= coords[0] as f64 {
        return vec![(0, 1.0)];
    }
    if qf >= coords[m - 1] as f64 {
        return vec![(m - 1, 1.0)];
    }
    let k = (0..m - 1)
        .find(|&k| (coords[k] as f64) < qf && qf < (coords[k + 1] as f64))
        .expect("q is inside the hull");
    let t = (qf - coords[k] as f64) / ((coords[k + 1] - coords[k]) as f64);
    catmull_rom_weights(t, k as isize, m).to_vec()
}

/// Upsample chroma (or any per-view planes known at the pattern's input
/// positions) across the full angular grid with separable Catmull-Rom
/// interpolation. Exact at the input positions; with a 2x2 control lattice
/// the interpolation is linear along each angular axis.
pub fn chroma_angular_upsample(
    sparse: &[Plane],
    pattern: &ViewPattern,
) -> Result<Vec<Plane>, DataError> {
    if sparse.len() != pattern.inputs.len() {
        return Err(DataError::PredictionCount {
            expected: pattern.inputs.len(),
            got: sparse.len(),
        });
    }
    if pattern.in_rows < 2 || pattern.in_cols < 2 {
        return Err(DataError::TooFewControlPoints);
    }
    let first = &sparse[0];
    if sparse
        .iter()
        .any(|p| p.width != first.width || p.height != first.height || p.channels != first.channels)
    {
        return Err(DataError::ExtentTooSmall(
            "control planes must share the same size".into(),
        ));
    }
    let mut row_coords: Vec<usize> = pattern.inputs.iter().map(|p| p.0).collect();
    let mut col_coords: Vec<usize> = pattern.inputs.iter().map(|p| p.1).collect();
    row_coords.sort_unstable();
    row_coords.dedup();
    col_coords.sort_unstable();
    col_coords.dedup();

    let control = |ri: usize, ci: usize| -> &Plane { &sparse[ri * pattern.in_cols + ci] };
    let n_px = first.width * first.height * first.channels;

    let mut dense = Vec::with_capacity(pattern.rows * pattern.cols);
    for r in 0..pattern.rows {
        for c in 0..pattern.cols {
            if let Some(i) = pattern.inputs.iter().position(|&p| p == (r, c)) {
                dense.push(sparse[i].clone());
                continue;
            }
            let wr = axis_weights(&row_coords, r);
            let wc = axis_weights(&col_coords, c);
            let mut plane = Plane::zeros(first.width, first.height, first.channels);
            for (ri, rw) in &wr {
                for (ci, cw) in &wc {
                    let src = control(*ri, *ci);
                    let weight = rw * cw;
                    if weight == 0.0 {
                        continue;
                    }
                    for i in 0..n_px {
                        plane.data[i] += (weight * src.data[i] as f64) as f32;
                    }
                }
            }
            dense.push(plane);
        }
    }
    Ok(dense)
}

/// Bilinear texture sample; reads a single texel when the coordinate is
/// exactly integral so integer-disparity fields stay bit-exact.
fn sample_bilinear(tex: &Plane, sx: f64, sy: f64, ch: usize) -> f32 {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    let v00 = tex.get(x0, y0, ch) as f64;
    let v10 = tex.get(x1, y0, ch) as f64;
    let v01 = tex.get(x0, y1, ch) as f64;
    let v11 = tex.get(x1, y1, ch) as f64;
    let top = v00 * (1.0 - fx) + v10 * fx;
    let bottom = v01 * (1.0 - fx) + v11 * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Constant-depth synthetic light field: view `(r, c)` is the texture
/// cropped at an offset of `d` pixels per view step, columns shifting along
/// x and rows along y, sampled bilinearly for fractional positions. All
/// views of a `d = 0` field are identical; integer `d` gives exact
/// translations between adjacent views.
pub fn synth_lf(
    texture: &Plane,
    d: f64,
    rows: usize,
    cols: usize,
    w: usize,
    h: usize,
) -> Result<LightField, DataError> {
    if rows == 0 || cols == 0 || w == 0 || h == 0 {
        return Err(DataError::ExtentTooSmall("all extents must be positive".into()));
    }
    let span_x = d.abs() * (cols - 1) as f64;
    let span_y = d.abs() * (rows - 1) as f64;
    let base_x = (texture.width as f64 - w as f64) / 2.0;
    let base_y = (texture.height as f64 - h as f64) / 2.0;
    let r_ctr = (rows - 1) as f64 / 2.0;
    let c_ctr = (cols - 1) as f64 / 2.0;

    let fits = |base: f64, span: f64, extent: usize, size: usize| -> bool {
        let lo = base - span / 2.0;
        let hi = base + span / 2.0 + (extent - 1) as f64;
        let hi_needed = if hi.fract() > 0.0 { hi.floor() + 1.0 } else { hi };
        lo >= 0.0 && hi_needed <= (size - 1) as f64
    };
    if !fits(base_x, span_x, w, texture.width) || !fits(base_y, span_y, h, texture.height) {
        return Err(DataError::InsufficientTexture {
            required_w: (w as f64 + span_x).ceil() as usize + 1,
            required_h: (h as f64 + span_y).ceil() as usize + 1,
            got_w: texture.width,
            got_h: texture.height,
        });
    }

    let colorspace = if texture.channels == 3 {
        ColorSpace::Rgb
    } else {
        ColorSpace::YOnly
    };
    if texture.channels != colorspace.channels() {
        return Err(DataError::ChannelMismatch(format!(
            "{} channel textures are not supported",
            texture.channels
        )));
    }
    let mut lf = LightField::zeros(rows, cols, w, h, colorspace);
    for r in 0..rows {
        for c in 0..cols {
            let ox = base_x + d * (c as f64 - c_ctr);
            let oy = base_y + d * (r as f64 - r_ctr);
            for x in 0..w {
                for y in 0..h {
                    for ch in 0..lf.c {
                        lf.set(
                            r,
                            c,
                            x,
                            y,
                            ch,
                            sample_bilinear(texture, ox + x as f64, oy + y as f64, ch),
                        );
                    }
                }
            }
        }
    }
    Ok(lf)
}

/// Dihedral group of the square, elements 0..8: `g = k + 4f` applies a
/// horizontal flip first when `f = 1`, then `k` counterclockwise quarter
/// turns. The same element acts jointly on the angular and spatial grids.
pub fn dihedral_map(g: u8, pos: (usize, usize), dims: (usize, usize)) -> (usize, usize) {
    let (mut r, mut c) = pos;
    let (mut nr, mut nc) = dims;
    if g & 4 != 0 {
        c = nc - 1 - c;
    }
    for _ in 0..(g & 3) {
        // (r, c) in (R, C) -> (C-1-c, r) in (C, R)
        let t = r;
        r = nc - 1 - c;
        c = t;
        core::mem::swap(&mut nr, &mut nc);
    }
    let _ = (nr, nc);
    (r, c)
}

/// Grid dimensions after applying element `g`.
pub fn dihedral_dims(g: u8, dims: (usize, usize)) -> (usize, usize) {
    if g & 1 != 0 {
        (dims.1, dims.0)
    } else {
        dims
    }
}

/// Inverse element: rotations invert to the complementary rotation,
/// flip-then-rotate elements are involutions.
pub fn dihedral_inverse(g: u8) -> u8 {
    if g & 4 != 0 {
        g
    } else {
        (4 - (g & 3)) as u8 % 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_plane(w: usize, h: usize, c: usize) -> Plane {
        let mut p = Plane::zeros(w, h, c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    p.set(x, y, ch, ((y * w + x) * c + ch) as f32 / (w * h * c) as f32);
                }
            }
        }
        p
    }

    #[test]
    fn pattern_2x2_to_8x8() {
        let p = make_pattern(Task::From2x2To8x8);
        assert_eq!(p.inputs.len(), 4);
        assert_eq!(p.outputs.len(), 60);
        assert_eq!(p.inputs, vec![(0, 0), (0, 7), (7, 0), (7, 7)]);
        // first non-input position in row-major order
        assert_eq!(p.outputs[0], (0, 1));
    }

    #[test]
    fn pattern_3x3_to_9x9() {
        let p = make_pattern(Task::From3x3To9x9);
        assert_eq!(p.outputs.len(), 81 - 9);
        assert_eq!(p.in_rows, 3);
        // partition of the grid
        for r in 0..9 {
            for c in 0..9 {
                let ins = p.inputs.contains(&(r, c));
                let outs = p.outputs.contains(&(r, c));
                assert!(ins ^ outs);
            }
        }
    }

    #[test]
    fn standard_patterns_are_dihedral_invariant() {
        for task in [Task::From2x2To8x8, Task::From3x3To9x9] {
            let p = make_pattern(task);
            for g in 0..8 {
                assert!(p.invariant_under(g), "task {:?} element {g}", task);
            }
        }
    }

    #[test]
    fn extract_assemble_round_trip() {
        let p = make_pattern(Task::From2x2To8x8);
        let mut lf = LightField::zeros(8, 8, 3, 2, ColorSpace::YOnly);
        for (i, v) in lf.data.iter_mut().enumerate() {
            *v = (i as f32).sin() * 0.5 + 0.5;
        }
        let (input, targets) = extract_sparse(&lf, &p).unwrap();
        assert_eq!((input.u, input.v), (2, 2));
        let back = assemble_dense(&input, &targets, &p).unwrap();
        assert_eq!(back, lf);
    }

    #[test]
    fn ycbcr_gray_axis_and_pure_red() {
        let mut lf = LightField::zeros(1, 1, 2, 1, ColorSpace::Rgb);
        for ch in 0..3 {
            lf.set(0, 0, 0, 0, ch, 0.5);
        }
        lf.set(0, 0, 1, 0, 0, 1.0);
        let y = rgb_to_ycbcr(&lf).unwrap();
        // gray maps to (0.5, 0.5, 0.5)
        assert!((y.get(0, 0, 0, 0, 0) - 0.5).abs() < 1e-7);
        assert!((y.get(0, 0, 0, 0, 1) - 0.5).abs() < 1e-7);
        assert!((y.get(0, 0, 0, 0, 2) - 0.5).abs() < 1e-7);
        // pure red maps to (0.299, 0.331264, 1.0)
        assert!((y.get(0, 0, 1, 0, 0) - 0.299).abs() < 1e-7);
        assert!((y.get(0, 0, 1, 0, 1) - 0.331_264).abs() < 1e-7);
        assert!((y.get(0, 0, 1, 0, 2) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn color_round_trip_under_1e6() {
        let mut lf = LightField::zeros(1, 1, 16, 16, ColorSpace::Rgb);
        for (i, x) in lf.data.iter_mut().enumerate() {
            *x = ((i as f32 * 0.377).sin() * 0.5 + 0.5).clamp(0.0, 1.0);
        }
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&lf).unwrap()).unwrap();
        let worst = lf
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 1e-6, "worst {worst}");
        assert!(matches!(
            rgb_to_ycbcr(&back.clone()).map(|_| ()),
            Ok(())
        ));
        assert!(matches!(
            ycbcr_to_rgb(&lf),
            Err(DataError::Colorspace { .. })
        ));
    }

    #[test]
    fn eval_view_prep_crops_center_and_shaves() {
        let lf = LightField::zeros(14, 14, 48, 47, ColorSpace::YOnly);
        let central = prepare_eval_views(&lf).unwrap();
        assert_eq!((central.u, central.v), (8, 8));
        let shaved = shave_borders(&central, 22).unwrap();
        assert_eq!((shaved.w, shaved.h), (48 - 44, 47 - 44));
        // minimal case collapses to a single pixel
        let tiny = LightField::zeros(8, 8, 45, 45, ColorSpace::YOnly);
        let shaved = shave_borders(&tiny, 22).unwrap();
        assert_eq!((shaved.w, shaved.h), (1, 1));
        assert!(shave_borders(&LightField::zeros(8, 8, 44, 45, ColorSpace::YOnly), 22).is_err());
    }

    #[test]
    fn central_8x8_crop_uses_rows_3_to_10() {
        let mut lf = LightField::zeros(14, 14, 1, 1, ColorSpace::YOnly);
        for r in 0..14 {
            for c in 0..14 {
                lf.set(r, c, 0, 0, 0, (r * 14 + c) as f32 / 255.0);
            }
        }
        let central = prepare_eval_views(&lf).unwrap();
        assert_eq!(central.get(0, 0, 0, 0, 0), (3 * 14 + 3) as f32 / 255.0);
        assert_eq!(central.get(7, 7, 0, 0, 0), (10 * 14 + 10) as f32 / 255.0);
    }

    #[test]
    fn tiled_and_interleaved_decoding() {
        // 4x4 single channel image with distinct values
        let data: Vec<f32> = (0..16).map(|i| i as f32 / 16.0).collect();
        let img = Plane::new(4, 4, 1, data).unwrap();
        let tiled = decode_sai_grid(&img, 2, 2, GridLayout::Tiled).unwrap();
        // view (0,0) is the top-left quadrant
        assert_eq!(tiled.get(0, 0, 0, 0, 0), img.get(0, 0, 0));
        assert_eq!(tiled.get(0, 0, 1, 1, 0), img.get(1, 1, 0));
        assert_eq!(tiled.get(1, 1, 0, 0, 0), img.get(2, 2, 0));

        let il = decode_sai_grid(&img, 2, 2, GridLayout::Interleaved).unwrap();
        // view (r,c) samples with stride 2 starting at (c, r)
        assert_eq!(il.get(0, 0, 0, 0, 0), img.get(0, 0, 0));
        assert_eq!(il.get(0, 1, 0, 0, 0), img.get(1, 0, 0));
        assert_eq!(il.get(1, 0, 0, 0, 0), img.get(0, 1, 0));
        assert_eq!(il.get(1, 0, 1, 0, 0), img.get(2, 1, 0));

        assert!(decode_sai_grid(&img, 3, 2, GridLayout::Tiled).is_err());
    }

    #[test]
    fn chroma_upsample_constants_and_corner_ramp() {
        let pattern = make_pattern(Task::From2x2To8x8);
        let constant = vec![
            {
                let mut p = Plane::zeros(2, 2, 1);
                p.data.fill(0.3);
                p
            };
            4
        ];
        let dense = chroma_angular_upsample(&constant, &pattern).unwrap();
        assert_eq!(dense.len(), 64);
        for p in &dense {
            for v in &p.data {
                assert!((v - 0.3).abs() < 1e-7);
            }
        }

        // corners varying along rows: value r/7 at grid row r
        let mk = |v: f32| {
            let mut p = Plane::zeros(2, 2, 1);
            p.data.fill(v);
            p
        };
        let sparse = vec![mk(0.0), mk(0.0), mk(1.0), mk(1.0)];
        let dense = chroma_angular_upsample(&sparse, &pattern).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let got = dense[r * 8 + c].get(0, 0, 0);
                let want = r as f32 / 7.0;
                assert!((got - want).abs() < 1e-6, "r={r} c={c} got {got}");
            }
        }
        // exact at an input position
        let p07 = &dense[7];
        assert_eq!(p07.data, sparse[1].data);
    }

    #[test]
    fn synth_zero_disparity_views_identical() {
        let tex = ramp_plane(12, 12, 1);
        let lf = synth_lf(&tex, 0.0, 3, 3, 6, 6).unwrap();
        let base = lf.view_plane(1, 1);
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(lf.view_plane(r, c), base);
            }
        }
    }

    #[test]
    fn synth_unit_disparity_shifts_adjacent_views() {
        let tex = ramp_plane(24, 24, 1);
        let lf = synth_lf(&tex, 1.0, 3, 3, 8, 8).unwrap();
        // photo consistency: columns shift along x, rows along y
        for x in 0..7 {
            for y in 0..8 {
                assert_eq!(lf.get(1, 1, x + 1, y, 0), lf.get(1, 2, x, y, 0));
            }
        }
        for x in 0..8 {
            for y in 0..7 {
                assert_eq!(lf.get(1, 1, x, y + 1, 0), lf.get(2, 1, x, y, 0));
            }
        }
    }

    #[test]
    fn synth_margin_violation_reports_required_size() {
        let tex = ramp_plane(8, 8, 1);
        let err = synth_lf(&tex, 1.0, 3, 3, 8, 8).unwrap_err();
        match err {
            DataError::InsufficientTexture {
                required_w, got_w, ..
            } => {
                assert!(required_w > got_w);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn dihedral_group_basics() {
        // identity
        assert_eq!(dihedral_map(0, (1, 2), (3, 4)), (1, 2));
        // one ccw quarter turn: top-right corner moves to top-left
        assert_eq!(dihedral_map(1, (0, 3), (3, 4)), (0, 0));
        assert_eq!(dihedral_dims(1, (3, 4)), (4, 3));
        // inverses compose to the identity on every element
        for g in 0..8u8 {
            let dims = (4, 4);
            for r in 0..4 {
                for c in 0..4 {
                    let there = dihedral_map(g, (r, c), dims);
                    let back = dihedral_map(dihedral_inverse(g), there, dihedral_dims(g, dims));
                    assert_eq!(back, (r, c), "g={g} r={r} c={c}");
                }
            }
        }
    }
}
