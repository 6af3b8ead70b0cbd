//! Whole-image contrast maps.
//!
//! Two estimation modes:
//!
//! * **Temporal**: at each pixel the samples are the `N` channel vectors of
//!   the time series.
//! * **Spatial**: at each pixel of one frame the samples are the channel
//!   vectors inside a centered `w×w` boxcar, clipped at the image border.
//!
//! Rows are processed in parallel. Every output pixel is computed by a fixed
//! sequence of floating-point operations that does not depend on which
//! worker handles it, so maps are bit-identical for any thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::mcv::{vmai, McvConfig, McvEvaluator, McvKind, Normalization, PixelStats, Undefined};
use crate::stack::{ScalarMap, SpeckleStack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    Temporal,
    Spatial { window: usize, frame: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScanOptions {
    pub normalization: Normalization,
}

type PixelResult = Result<f64, Undefined>;

fn check_inputs(stack: &SpeckleStack, kinds: &[McvKind], mode: EstimationMode) -> Result<()> {
    stack.require_real("contrast estimation")?;
    let s = stack.shape();
    for k in kinds {
        if let McvKind::Single(c) = *k {
            if c >= s.n_chan {
                return Err(Error::precondition(format!(
                    "channel {c} out of range for a {}-channel stack",
                    s.n_chan
                )));
            }
        }
    }
    match mode {
        EstimationMode::Temporal => {
            if s.n_time < 2 {
                return Err(Error::precondition("temporal estimation needs at least 2 frames"));
            }
        }
        EstimationMode::Spatial { window, frame } => {
            if window < 3 || window % 2 == 0 {
                return Err(Error::precondition(format!(
                    "window must be odd and at least 3, got {window}"
                )));
            }
            if frame >= s.n_time {
                return Err(Error::precondition(format!(
                    "frame {frame} out of range for {} frames",
                    s.n_time
                )));
            }
            if s.height < window || s.width < window {
                return Err(Error::precondition(format!(
                    "{}x{} image is smaller than a {window}x{window} window",
                    s.height, s.width
                )));
            }
        }
    }
    Ok(())
}

/// Contrast map of one estimator.
pub fn compute_map(stack: &SpeckleStack, kind: McvKind, mode: EstimationMode) -> Result<ScalarMap> {
    compute_map_with(stack, kind, mode, ScanOptions::default())
}

pub fn compute_map_with(
    stack: &SpeckleStack,
    kind: McvKind,
    mode: EstimationMode,
    opts: ScanOptions,
) -> Result<ScalarMap> {
    Ok(compute_maps(stack, &[kind], mode, opts)?.pop().unwrap())
}

/// Several estimator maps from a single pass over the data; the per-pixel
/// statistics are shared between kinds.
pub fn compute_maps(
    stack: &SpeckleStack,
    kinds: &[McvKind],
    mode: EstimationMode,
    opts: ScanOptions,
) -> Result<Vec<ScalarMap>> {
    check_inputs(stack, kinds, mode)?;
    let cfg = McvConfig::for_data_magnitude(stack.max_magnitude());
    let rows = match mode {
        EstimationMode::Temporal => temporal_rows(stack, kinds, cfg, opts),
        EstimationMode::Spatial { window, frame } => spatial_rows(stack, kinds, cfg, opts, window, frame),
    };
    let s = stack.shape();
    kinds
        .iter()
        .enumerate()
        .map(|(ki, kind)| {
            let mut values = Vec::with_capacity(s.pixels());
            let mut valid = Vec::with_capacity(s.pixels());
            for row in &rows {
                for px in row.chunks(kinds.len()) {
                    match px[ki] {
                        Ok(v) => {
                            values.push(v);
                            valid.push(true);
                        }
                        Err(_) => {
                            values.push(ScalarMap::UNDEFINED);
                            valid.push(false);
                        }
                    }
                }
            }
            ScalarMap::new(s.height, s.width, values, format!("gamma_{kind}"))?.with_validity(valid)
        })
        .collect()
}

fn eval_kinds(stats: &PixelStats, kinds: &[McvKind], cfg: McvConfig, out: &mut Vec<PixelResult>) {
    let mut ev = McvEvaluator::new(stats, cfg);
    out.extend(kinds.iter().map(|k| ev.eval(*k)));
}

fn temporal_rows(
    stack: &SpeckleStack,
    kinds: &[McvKind],
    cfg: McvConfig,
    opts: ScanOptions,
) -> Vec<Vec<PixelResult>> {
    let data = stack.real_data().unwrap();
    let s = stack.shape();
    let (n, p, w) = (s.n_time, s.n_chan, s.width);
    let per_px = n * p;
    (0..s.height)
        .into_par_iter()
        .map(|y| {
            // Transpose the row into pixel-major [x][t][c] order.
            let mut buf = vec![0.0f64; w * per_px];
            for t in 0..n {
                for c in 0..p {
                    let start = s.index(t, c, y, 0);
                    for (x, v) in data[start..start + w].iter().enumerate() {
                        buf[x * per_px + t * p + c] = *v as f64;
                    }
                }
            }
            let mut stats = PixelStats::zeroed(p);
            let mut scratch = Vec::with_capacity(n);
            let mut out = Vec::with_capacity(w * kinds.len());
            for x in 0..w {
                stats
                    .fill_from_samples(&buf[x * per_px..(x + 1) * per_px], p, opts.normalization, &mut scratch)
                    .expect("n >= 2 checked");
                eval_kinds(&stats, kinds, cfg, &mut out);
            }
            out
        })
        .collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Number of accumulated quantities per pixel: `p` first moments and the
/// `p(p+1)/2` upper-triangular second moments.
fn moment_count(p: usize) -> usize {
    p + p * (p + 1) / 2
}

#[inline]
fn fill_moments(x: &[f64], out: &mut [f64]) {
    let p = x.len();
    out[..p].copy_from_slice(x);
    let mut k = p;
    for i in 0..p {
        for j in i..p {
            out[k] = x[i] * x[j];
            k += 1;
        }
    }
}

fn spatial_rows(
    stack: &SpeckleStack,
    kinds: &[McvKind],
    cfg: McvConfig,
    opts: ScanOptions,
    window: usize,
    frame: usize,
) -> Vec<Vec<PixelResult>> {
    let data = stack.real_data().unwrap();
    let s = stack.shape();
    let (p, h, w) = (s.n_chan, s.height, s.width);
    let r = window / 2;
    let q = moment_count(p);

    // Shift each channel by its frame mean so that Σxxᵀ/n − μμᵀ does not
    // cancel catastrophically on bright, low-contrast data.
    let offsets: Vec<f64> = (0..p)
        .map(|c| {
            let start = s.index(frame, c, 0, 0);
            let plane: Vec<f64> = data[start..start + h * w].iter().map(|v| *v as f64).collect();
            pairwise_sum(&plane) / plane.len() as f64
        })
        .collect();

    // Horizontal running window sums, one independent pass per row.
    let hsums: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut moments = vec![0.0f64; w * q];
            let mut xv = vec![0.0f64; p];
            for x in 0..w {
                for c in 0..p {
                    xv[c] = data[s.index(frame, c, y, x)] as f64 - offsets[c];
                }
                fill_moments(&xv, &mut moments[x * q..(x + 1) * q]);
            }
            let mut acc = vec![CompensatedSum::default(); q];
            let mut out = vec![0.0f64; w * q];
            for col in 0..=r.min(w - 1) {
                for k in 0..q {
                    acc[k].add(moments[col * q + k]);
                }
            }
            for x in 0..w {
                for k in 0..q {
                    out[x * q + k] = acc[k].value();
                }
                let enter = x + r + 1;
                if enter < w {
                    for k in 0..q {
                        acc[k].add(moments[enter * q + k]);
                    }
                }
                if x >= r {
                    let leave = x - r;
                    for k in 0..q {
                        acc[k].add(-moments[leave * q + k]);
                    }
                }
            }
            out
        })
        .collect();

    (0..h)
        .into_par_iter()
        .map(|y| {
            let y0 = y.saturating_sub(r);
            let y1 = (y + r).min(h - 1);
            let mut stats = PixelStats::zeroed(p);
            let mut sums = vec![0.0f64; q];
            let mut out = Vec::with_capacity(w * kinds.len());
            for x in 0..w {
                let x0 = x.saturating_sub(r);
                let x1 = (x + r).min(w - 1);
                let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
                for (k, sum) in sums.iter_mut().enumerate() {
                    let mut acc = CompensatedSum::default();
                    for row in &hsums[y0..=y1] {
                        acc.add(row[x * q + k]);
                    }
                    *sum = acc.value();
                }
                let scale = match opts.normalization {
                    Normalization::MaxLikelihood => 1.0,
                    Normalization::Unbiased => n / (n - 1.0),
                };
                let (mu, cov) = stats.parts_mut();
                for c in 0..p {
                    mu[c] = sums[c] / n;
                }
                let mut k = p;
                for i in 0..p {
                    for j in i..p {
                        let v = (sums[k] / n - mu[i] * mu[j]) * scale;
                        cov[i * p + j] = v;
                        cov[j * p + i] = v;
                        k += 1;
                    }
                }
                for c in 0..p {
                    mu[c] += offsets[c];
                }
                eval_kinds(&stats, kinds, cfg, &mut out);
            }
            out
        })
        .collect()
}

/// Activity map `1/γ²` with a companion saturation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VmaiMap {
    pub map: ScalarMap,
    pub saturated: Vec<bool>,
}

impl VmaiMap {
    pub fn from_gamma(gamma: &ScalarMap) -> VmaiMap {
        let mut values = Vec::with_capacity(gamma.len());
        let mut saturated = Vec::with_capacity(gamma.len());
        for (g, ok) in gamma.values.iter().zip(&gamma.valid) {
            if *ok {
                let v = vmai(*g);
                values.push(v.value);
                saturated.push(v.saturated);
            } else {
                values.push(ScalarMap::UNDEFINED);
                saturated.push(false);
            }
        }
        let name = gamma
            .name
            .strip_prefix("gamma_")
            .map(|k| format!("vmai_{k}"))
            .unwrap_or_else(|| "vmai".into());
        VmaiMap {
            map: ScalarMap {
                height: gamma.height,
                width: gamma.width,
                values,
                valid: gamma.valid.clone(),
                name,
            },
            saturated,
        }
    }

    pub fn saturation_map(&self) -> ScalarMap {
        ScalarMap::from_mask(
            self.map.height,
            self.map.width,
            &self.saturated,
            format!("{}.saturated", self.map.name),
        )
    }

    /// The map with saturated pixels additionally marked invalid.
    pub fn unsaturated(&self) -> ScalarMap {
        let valid = self
            .map
            .valid
            .iter()
            .zip(&self.saturated)
            .map(|(v, s)| *v && !*s)
            .collect();
        self.map.clone().with_validity(valid).expect("same extent")
    }
}

pub fn compute_vmai_map(stack: &SpeckleStack, kind: McvKind, mode: EstimationMode) -> Result<VmaiMap> {
    compute_vmai_map_with(stack, kind, mode, ScanOptions::default())
}

pub fn compute_vmai_map_with(
    stack: &SpeckleStack,
    kind: McvKind,
    mode: EstimationMode,
    opts: ScanOptions,
) -> Result<VmaiMap> {
    Ok(VmaiMap::from_gamma(&compute_map_with(stack, kind, mode, opts)?))
}
