//! Reconstruction quality metrics and visual diagnostics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;


use crate::data::{LightField, Plane};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("images must share width, height and channel count")]
    ShapeMismatch,
    #[error("peak must be positive")]
    NonPositivePeak,
    #[error("image {width}x{height} is smaller than the 11x11 SSIM window")]
    WindowTooLarge { width: usize, height: usize },
    #[error("heat map scale must be positive")]
    NonPositiveScale,
    #[error("index out of range: {0}")]
    OutOfRange(String),
}

fn check_shapes(a: &Plane, b: &Plane) -> Result<(), MetricsError> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(MetricsError::ShapeMismatch);
    }
    Ok(())
}

/// Mean squared error over all channels jointly, accumulated in f64.
pub fn mse(a: &Plane, b: &Plane) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let mut acc = 0.0f64;
    for (x, y) in a.data.iter().zip(&b.data) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    Ok(acc / a.data.len() as f64)
}

/// `10 log10(peak^2 / mse)`; infinite when the MSE is zero.
pub fn psnr_from_mse(mse: f64, peak: f64) -> Result<f64, MetricsError> {
    if !(peak > 0.0) {
        return Err(MetricsError::NonPositivePeak);
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Peak signal-to-noise ratio in decibels.
pub fn psnr(a: &Plane, b: &Plane, peak: f64) -> Result<f64, MetricsError> {
    psnr_from_mse(mse(a, b)?, peak)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 1.0;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let di = i as f64 - center;
            let dj = j as f64 - center;
            let g = (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[i * SSIM_WINDOW + j] = g;
            total += g;
        }
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

fn ssim_channel(a: &Plane, b: &Plane, ch: usize, window: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);
    let (w, h) = (a.width, a.height);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let (mut sa, mut sb) = (0.0f64, 0.0f64);
            let (mut saa, mut sbb, mut sab) = (0.0f64, 0.0f64, 0.0f64);
            for wy in 0..SSIM_WINDOW {
                for wx in 0..SSIM_WINDOW {
                    let wt = window[wy * SSIM_WINDOW + wx];
                    let va = a.get(x0 + wx, y0 + wy, ch) as f64;
                    let vb = b.get(x0 + wx, y0 + wy, ch) as f64;
                    sa += wt * va;
                    sb += wt * vb;
                    saa += wt * (va * va);
                    sbb += wt * (vb * vb);
                    sab += wt * (va * vb);
                }
            }
            let var_a = saa - sa * sa;
            let var_b = sbb - sb * sb;
            let cov = sab - sa * sb;
            let value = ((2.0 * sa * sb + c1) * (2.0 * cov + c2))
                / ((sa * sa + sb * sb + c1) * (var_a + var_b + c2));
            total += value;
            count += 1;
        }
    }
    total / count as f64
}

/// Windowed structural similarity: 11x11 Gaussian window with sigma 1.5,
/// stabilizers K1 = 0.01 and K2 = 0.03 at unit dynamic range, averaged over
/// valid window positions. Multichannel images average the per-channel
/// scores. Identical images score exactly 1.
pub fn ssim(a: &Plane, b: &Plane) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(MetricsError::WindowTooLarge {
            width: a.width,
            height: a.height,
        });
    }
    let window = gaussian_window();
    let mut total = 0.0;
    for ch in 0..a.channels {
        total += ssim_channel(a, b, ch, &window);
    }
    Ok(total / a.channels as f64)
}

/// 256-entry monotone heat colormap: black through red and yellow to white.
/// Entry `i` is `(min(3i, 255), clamp(3i - 255), clamp(3i - 510))`,
/// integer arithmetic only, so the table is bit-exact everywhere.
pub fn heat_colormap() -> [[u8; 3]; 256] {
    let mut map = [[0u8; 3]; 256];
    for (i, entry) in map.iter_mut().enumerate() {
        let i = i as i32;
        entry[0] = (3 * i).clamp(0, 255) as u8;
        entry[1] = (3 * i - 255).clamp(0, 255) as u8;
        entry[2] = (3 * i - 510).clamp(0, 255) as u8;
    }
    map
}

/// 8-bit RGB rendering of a per-pixel error map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB rows.
    pub rgb: Vec<u8>,
}

/// Map the per-pixel absolute error (mean over channels) linearly onto the
/// heat colormap, saturating at `scale_max`.
pub fn error_heatmap(a: &Plane, b: &Plane, scale_max: f64) -> Result<Heatmap, MetricsError> {
    check_shapes(a, b)?;
    if !(scale_max > 0.0) {
        return Err(MetricsError::NonPositiveScale);
    }
    let map = heat_colormap();
    let mut rgb = Vec::with_capacity(a.width * a.height * 3);
    for y in 0..a.height {
        for x in 0..a.width {
            let mut err = 0.0f64;
            for ch in 0..a.channels {
                err += (a.get(x, y, ch) as f64 - b.get(x, y, ch) as f64).abs();
            }
            err /= a.channels as f64;
            let scaled = (err / scale_max).min(1.0);
            let index = ((scaled * 255.0 + 0.5).floor() as usize).min(255);
            rgb.extend_from_slice(&map[index]);
        }
    }
    Ok(Heatmap {
        width: a.width,
        height: a.height,
        rgb,
    })
}

/// Which coordinate pair an EPI slice fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpiAxis {
    /// Fix the angular row `u` and the spatial row `y`; the slice spans
    /// angular columns (rows of the image) against x (columns).
    Horizontal,
    /// Fix the angular column `v` and the spatial column `x`; the slice
    /// spans angular rows against y.
    Vertical,
}

/// Extract an epipolar-plane image.
pub fn epi_slice(
    lf: &LightField,
    axis: EpiAxis,
    fixed_view_index: usize,
    fixed_spatial_index: usize,
) -> Result<Plane, MetricsError> {
    match axis {
        EpiAxis::Horizontal => {
            if fixed_view_index >= lf.u || fixed_spatial_index >= lf.h {
                return Err(MetricsError::OutOfRange(format!(
                    "horizontal slice at u={fixed_view_index}, y={fixed_spatial_index}"
                )));
            }
            let mut out = Plane::zeros(lf.w, lf.v, lf.c);
            for c in 0..lf.v {
                for x in 0..lf.w {
                    for ch in 0..lf.c {
                        out.set(x, c, ch, lf.get(fixed_view_index, c, x, fixed_spatial_index, ch));
                    }
                }
            }
            Ok(out)
        }
        EpiAxis::Vertical => {
            if fixed_view_index >= lf.v || fixed_spatial_index >= lf.w {
                return Err(MetricsError::OutOfRange(format!(
                    "vertical slice at v={fixed_view_index}, x={fixed_spatial_index}"
                )));
            }
            let mut out = Plane::zeros(lf.h, lf.u, lf.c);
            for r in 0..lf.u {
                for y in 0..lf.h {
                    for ch in 0..lf.c {
                        out.set(y, r, ch, lf.get(r, fixed_view_index, fixed_spatial_index, y, ch));
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Color space a report was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSpace {
    Rgb,
    YOnly,
}

impl EvalSpace {
    pub fn name(self) -> &'static str {
        match self {
            EvalSpace::Rgb => "rgb",
            EvalSpace::YOnly => "y",
        }
    }
}

/// Which views a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewSet {
    NovelOnly,
    All,
}

impl ViewSet {
    pub fn name(self) -> &'static str {
        match self {
            ViewSet::NovelOnly => "novel",
            ViewSet::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMetrics {
    pub row: usize,
    pub col: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Raw MSE kept for pooled aggregation.
    pub mse: f64,
}

/// Per-view quality scores plus the evaluation context.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub entries: Vec<ViewMetrics>,
    pub space: EvalSpace,
    pub view_set: ViewSet,
    pub peak: f64,
}

fn fmt_db(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.4}")
    }
}

impl MetricReport {
    /// Arithmetic mean of per-view PSNR (infinite if any view is exact).
    pub fn mean_psnr(&self) -> f64 {
        self.entries.iter().map(|e| e.psnr).sum::<f64>() / self.entries.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.entries.iter().map(|e| e.ssim).sum::<f64>() / self.entries.len() as f64
    }

    /// PSNR of the MSE pooled over all evaluated views.
    pub fn pooled_psnr(&self) -> f64 {
        let pooled = self.entries.iter().map(|e| e.mse).sum::<f64>() / self.entries.len() as f64;
        psnr_from_mse(pooled, self.peak).unwrap_or(f64::INFINITY)
    }

    /// Machine-readable lines: `view_r,c<TAB>psnr<TAB>ssim`.
    pub fn render_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "view_{},{}\t{}\t{:.6}\n",
                e.row,
                e.col,
                fmt_db(e.psnr),
                e.ssim
            ));
        }
        out
    }

    /// Human-readable table with the aggregate row.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "space={} views={} peak={}\n",
            self.space.name(),
            self.view_set.name(),
            self.peak
        ));
        out.push_str("view      psnr(db)     ssim\n");
        for e in &self.entries {
            out.push_str(&format!(
                "({:>2},{:>2})  {:>10}  {:.6}\n",
                e.row,
                e.col,
                fmt_db(e.psnr),
                e.ssim
            ));
        }
        out.push_str(&format!(
            "mean      {:>10}  {:.6}   (pooled psnr {})\n",
            fmt_db(self.mean_psnr()),
            self.mean_ssim(),
            fmt_db(self.pooled_psnr())
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_lf, ColorSpace};

    fn noise_plane(w: usize, h: usize, c: usize, seed: u64) -> Plane {
        let mut p = Plane::zeros(w, h, c);
        let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        for v in p.data.iter_mut() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            *v = (x >> 40) as f32 / (1u64 << 24) as f32;
        }
        p
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let a = noise_plane(16, 16, 3, 5);
        assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn psnr_constant_one_255th_error() {
        let a = Plane::zeros(32, 32, 1);
        let mut b = Plane::zeros(32, 32, 1);
        b.data.fill(1.0 / 255.0);
        let got = psnr(&a, &b, 1.0).unwrap();
        let want = 20.0 * 255.0f64.log10();
        assert!((got - want).abs() < 1e-3, "got {got}, want {want}");
        assert!((want - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn doubling_error_costs_six_db() {
        let a = Plane::zeros(8, 8, 1);
        let d = noise_plane(8, 8, 1, 11);
        let mut twice = d.clone();
        for v in twice.data.iter_mut() {
            *v *= 2.0;
        }
        let drop = psnr(&a, &d, 1.0).unwrap() - psnr(&a, &twice, 1.0).unwrap();
        let want = 20.0 * 2.0f64.log10();
        assert!((drop - want).abs() < 1e-9, "drop {drop}");
    }

    #[test]
    fn psnr_rejects_shape_mismatch_and_bad_peak() {
        let a = Plane::zeros(4, 4, 1);
        let b = Plane::zeros(4, 5, 1);
        assert!(matches!(psnr(&a, &b, 1.0), Err(MetricsError::ShapeMismatch)));
        assert!(matches!(
            psnr(&a, &a, 0.0),
            Err(MetricsError::NonPositivePeak)
        ));
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let a = noise_plane(20, 14, 1, 3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_offset_closed_form() {
        let mut a = Plane::zeros(16, 16, 1);
        a.data.fill(0.25);
        let mut b = Plane::zeros(16, 16, 1);
        b.data.fill(0.75);
        let c1 = 1e-4;
        let want = (2.0 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn ssim_is_symmetric() {
        let a = noise_plane(18, 18, 1, 21);
        let b = noise_plane(18, 18, 1, 22);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
    }

    #[test]
    fn ssim_window_must_fit() {
        let a = Plane::zeros(10, 12, 1);
        assert!(matches!(
            ssim(&a, &a),
            Err(MetricsError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn heatmap_extremes_and_monotone_map() {
        let a = noise_plane(6, 6, 1, 9);
        let hm = error_heatmap(&a, &a, 0.5).unwrap();
        let map = heat_colormap();
        for px in hm.rgb.chunks_exact(3) {
            assert_eq!(px, map[0]);
        }
        // a single pixel at exactly scale_max hits the last entry
        let mut b = a.clone();
        b.data[0] += 0.5;
        let hm = error_heatmap(&a, &b, 0.5).unwrap();
        assert_eq!(&hm.rgb[0..3], &map[255]);
        // monotone channels
        for i in 1..256 {
            for ch in 0..3 {
                assert!(map[i][ch] >= map[i - 1][ch]);
            }
        }
    }

    #[test]
    fn epi_constant_and_degenerate() {
        let mut lf = LightField::zeros(1, 1, 7, 3, ColorSpace::YOnly);
        for (i, v) in lf.data.iter_mut().enumerate() {
            *v = i as f32 / 100.0;
        }
        let slice = epi_slice(&lf, EpiAxis::Horizontal, 0, 1).unwrap();
        assert_eq!((slice.width, slice.height), (7, 1));
        for x in 0..7 {
            assert_eq!(slice.get(x, 0, 0), lf.get(0, 0, x, 1, 0));
        }
        assert!(matches!(
            epi_slice(&lf, EpiAxis::Horizontal, 1, 0),
            Err(MetricsError::OutOfRange(_))
        ));
    }

    #[test]
    fn epi_rows_of_unit_disparity_field_shift_by_one_pixel() {
        let tex = noise_plane(32, 32, 1, 77);
        let lf = synth_lf(&tex, 1.0, 5, 5, 12, 12).unwrap();
        let slice = epi_slice(&lf, EpiAxis::Horizontal, 2, 6).unwrap();
        assert_eq!((slice.width, slice.height), (12, 5));
        for row in 0..4 {
            for x in 0..11 {
                assert_eq!(
                    slice.get(x, row + 1, 0),
                    slice.get(x + 1, row, 0),
                    "row {row} x {x}"
                );
            }
        }
        let vslice = epi_slice(&lf, EpiAxis::Vertical, 2, 6).unwrap();
        for row in 0..4 {
            for y in 0..11 {
                assert_eq!(vslice.get(y, row + 1, 0), vslice.get(y + 1, row, 0));
            }
        }
    }
}

