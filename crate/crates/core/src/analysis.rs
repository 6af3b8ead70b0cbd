//! Detection, scoring and visualization of maps.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use image::{GrayImage, RgbImage};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::stack::{ScalarMap, SpeckleStack};

/// Which side of the threshold counts as a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Values above the threshold are changes.
    HighIsChange,
    /// Values below the threshold are permanent scatterers.
    LowIsPs,
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "high" | "high_is_change" => Ok(Polarity::HighIsChange),
            "low" | "low_is_ps" => Ok(Polarity::LowIsPs),
            _ => Err(Error::precondition(format!("unknown polarity {s:?}"))),
        }
    }
}

impl Polarity {
    fn score(self, v: f64) -> f64 {
        match self {
            Polarity::HighIsChange => v,
            Polarity::LowIsPs => -v,
        }
    }
}

/// Threshold a map into a 0/1 detection map. Undefined pixels are never
/// detected.
pub fn detect(map: &ScalarMap, polarity: Polarity, threshold: f64) -> Result<ScalarMap> {
    if !threshold.is_finite() {
        return Err(Error::precondition("threshold must be finite"));
    }
    let hits: Vec<bool> = map
        .values
        .iter()
        .zip(&map.valid)
        .map(|(v, ok)| {
            *ok && match polarity {
                Polarity::HighIsChange => *v > threshold,
                Polarity::LowIsPs => *v < threshold,
            }
        })
        .collect();
    Ok(ScalarMap::from_mask(map.height, map.width, &hits, "detection"))
}

/// Receiver operating characteristic of a map against a binary truth.
///
/// Operating points run from "nothing detected" to "everything detected";
/// `thresholds[i]` is the map value at which point `i` is reached. For
/// [`Polarity::HighIsChange`] the thresholds descend; for
/// [`Polarity::LowIsPs`] they ascend. The first point has an infinite
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for i in 0..self.thresholds.len() {
            writeln!(out, "{},{},{}", self.thresholds[i], self.fpr[i], self.tpr[i]).unwrap();
        }
        out
    }

    pub fn summary_json(&self, positives: usize, negatives: usize) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::json!({
            "auc": self.auc,
            "points": self.thresholds.len(),
            "positives": positives,
            "negatives": negatives,
        }))
        .unwrap();
        s.push('\n');
        s
    }
}

/// ROC over every distinct map value; equal values form one operating
/// point. Pixels undefined in the map are left out.
pub fn roc(map: &ScalarMap, truth: &ScalarMap, polarity: Polarity) -> Result<RocCurve> {
    if !map.same_extent(truth) {
        return Err(Error::Shape("map and truth differ in size".into()));
    }
    let truth_mask = truth.to_mask();
    let mut scored: Vec<(f64, f64, bool)> = map
        .values
        .iter()
        .zip(&map.valid)
        .zip(&truth_mask)
        .filter(|((_, ok), _)| **ok)
        .map(|((v, _), t)| (polarity.score(*v), *v, *t))
        .collect();
    let pos = scored.iter().filter(|s| s.2).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::precondition(format!(
            "truth needs positives and negatives among valid pixels (got {pos} and {neg})"
        )));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let start = match polarity {
        Polarity::HighIsChange => f64::INFINITY,
        Polarity::LowIsPs => f64::NEG_INFINITY,
    };
    let mut thresholds = vec![start];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < scored.len() {
        let score = scored[i].0;
        while i < scored.len() && scored[i].0 == score {
            if scored[i].2 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x - fpr.last().unwrap()) * (y + tpr.last().unwrap()) / 2.0;
        thresholds.push(scored[i - 1].1);
        fpr.push(x);
        tpr.push(y);
    }
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc: auc.clamp(0.0, 1.0),
    })
}

/// Pearson correlation over pixels valid in both maps.
pub fn pearson(a: &ScalarMap, b: &ScalarMap) -> Result<f64> {
    if !a.same_extent(b) {
        return Err(Error::Shape("maps differ in size".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..a.len())
        .filter(|i| a.valid[*i] && b.valid[*i])
        .map(|i| (a.values[i], b.values[i]))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::precondition("fewer than 2 jointly valid pixels"));
    }
    let n = xs.len() as f64;
    let mx = pairwise_sum(&xs) / n;
    let my = pairwise_sum(&ys) / n;
    let dx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let dy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let sxx = pairwise_sum(&dx.iter().map(|d| d * d).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|d| d * d).collect::<Vec<_>>());
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>());
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::precondition("a map has zero variance over the valid pixels"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 100.0) / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReactivParams {
    /// Temporal CV mapped to full saturation.
    pub cv_sat: f64,
    /// Hue (degrees) of the last frame; the first frame is at 0°.
    pub hue_span: f64,
    /// Percentile of the max-intensity image mapped to full value.
    pub value_percentile: f64,
}

impl Default for ReactivParams {
    fn default() -> Self {
        ReactivParams {
            cv_sat: 1.0,
            hue_span: 300.0,
            value_percentile: 99.0,
        }
    }
}

/// Per-pixel HSV components of the change composite, each in `[0, 1]`
/// except hue, which is in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactivHsv {
    pub height: usize,
    pub width: usize,
    pub hue: Vec<f64>,
    pub saturation: Vec<f64>,
    pub value: Vec<f64>,
}

impl ReactivHsv {
    pub fn to_rgb(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            let (r, g, b) = hsv_to_rgb(self.hue[i], self.saturation[i], self.value[i]);
            px.0 = [to_u8(r), to_u8(g), to_u8(b)];
        }
        img
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `h` in degrees, `s`, `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Change composite of a single-channel real time series: hue encodes the
/// date of the maximum, saturation the temporal coefficient of variation,
/// value the maximum normalized by a high percentile of the image.
pub fn reactiv(stack: &SpeckleStack, params: ReactivParams) -> Result<ReactivHsv> {
    let data = stack.require_real("the change composite")?;
    let s = stack.shape();
    if s.n_chan != 1 {
        return Err(Error::precondition(format!(
            "the change composite needs one channel, got {}",
            s.n_chan
        )));
    }
    if s.n_time < 2 {
        return Err(Error::precondition("the change composite needs at least 2 frames"));
    }
    if params.cv_sat.is_nan() || params.cv_sat <= 0.0 {
        return Err(Error::precondition("cv_sat must be positive"));
    }
    let plane = s.pixels();
    let n = s.n_time;
    let mut hue = vec![0.0; plane];
    let mut saturation = vec![0.0; plane];
    let mut peak = vec![0.0; plane];
    let mut series = vec![0.0f64; n];
    for i in 0..plane {
        for (t, v) in series.iter_mut().enumerate() {
            *v = data[t * plane + i] as f64;
        }
        let (arg, max) = series
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(ai, am), (t, v)| if *v > am { (t, *v) } else { (ai, am) });
        let mean = pairwise_sum(&series) / n as f64;
        let var = pairwise_sum(&series.iter().map(|v| (v - mean) * (v - mean)).collect::<Vec<_>>()) / n as f64;
        let cv = if mean.abs() > 0.0 { var.sqrt() / mean.abs() } else { 0.0 };
        hue[i] = arg as f64 / (n - 1) as f64 * params.hue_span;
        saturation[i] = (cv / params.cv_sat).clamp(0.0, 1.0);
        peak[i] = max;
    }
    let norm = percentile(&peak, params.value_percentile).unwrap_or(0.0);
    let value = peak
        .iter()
        .map(|m| if norm > 0.0 { (m / norm).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    Ok(ReactivHsv {
        height: s.height,
        width: s.width,
        hue,
        saturation,
        value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stretch {
    MinMax,
    /// Clip to the given low/high percentiles.
    Percentile(f64, f64),
}

impl FromStr for Stretch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Stretch::MinMax),
            "p2_98" => Ok(Stretch::Percentile(2.0, 98.0)),
            _ => Err(Error::precondition(format!("unknown stretch {s:?}"))),
        }
    }
}

/// Linear 8-bit rendering of a map. Undefined pixels are black; a constant
/// map renders mid-gray.
pub fn render_gray(map: &ScalarMap, stretch: Stretch) -> Result<GrayImage> {
    let valid: Vec<f64> = map.valid_values().collect();
    if valid.is_empty() {
        return Err(Error::precondition("map has no valid pixel to render"));
    }
    let (lo, hi) = match stretch {
        Stretch::MinMax => valid
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v))),
        Stretch::Percentile(a, b) => (percentile(&valid, a).unwrap(), percentile(&valid, b).unwrap()),
    };
    let mut img = GrayImage::new(map.width as u32, map.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        px.0[0] = if !map.valid[i] {
            0
        } else if hi <= lo {
            128
        } else {
            to_u8((map.values[i] - lo) / (hi - lo))
        };
    }
    Ok(img)
}

pub fn save_png(img: &impl PngSave, path: &Path) -> Result<()> {
    img.save_png(path)
}

/// Images that can be written as PNG.
pub trait PngSave {
    fn save_png(&self, path: &Path) -> Result<()>;
}

impl PngSave for GrayImage {
    fn save_png(&self, path: &Path) -> Result<()> {
        self.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))
    }
}

impl PngSave for RgbImage {
    fn save_png(&self, path: &Path) -> Result<()> {
        self.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::Shape;

    fn row(values: &[f64]) -> ScalarMap {
        ScalarMap::new(1, values.len(), values.to_vec(), "m").unwrap()
    }

    #[test]
    fn detect_both_polarities() {
        let m = row(&[0.0, 1.0, 2.0]);
        assert_eq!(detect(&m, Polarity::HighIsChange, 0.5).unwrap().values, vec![0.0, 1.0, 1.0]);
        assert_eq!(detect(&m, Polarity::LowIsPs, 0.5).unwrap().values, vec![1.0, 0.0, 0.0]);
        let m = m.with_validity(vec![true, false, true]).unwrap();
        assert_eq!(detect(&m, Polarity::HighIsChange, -5.0).unwrap().values, vec![1.0, 0.0, 1.0]);
        assert!(detect(&m, Polarity::HighIsChange, f64::NAN).is_err());
    }

    #[test]
    fn roc_of_truth_is_perfect() {
        let t = row(&[0.0, 1.0, 1.0, 0.0, 1.0]);
        let c = roc(&t, &t, Polarity::HighIsChange).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.fpr.first(), Some(&0.0));
        assert_eq!((c.fpr.last(), c.tpr.last()), (Some(&1.0), Some(&1.0)));
        assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.thresholds.windows(2).all(|w| w[0] > w[1]));
        let inv = row(&[1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(roc(&inv, &t, Polarity::HighIsChange).unwrap().auc, 0.0);
        assert_eq!(roc(&inv, &t, Polarity::LowIsPs).unwrap().auc, 1.0);
    }

    #[test]
    fn roc_ties_are_one_point() {
        let m = row(&[1.0, 1.0, 1.0, 1.0]);
        let t = row(&[1.0, 0.0, 1.0, 0.0]);
        let c = roc(&m, &t, Polarity::HighIsChange).unwrap();
        assert_eq!(c.thresholds.len(), 2);
        assert_eq!(c.auc, 0.5);
    }

    #[test]
    fn roc_needs_both_classes() {
        let m = row(&[0.1, 0.2]);
        assert!(roc(&m, &row(&[1.0, 1.0]), Polarity::HighIsChange).is_err());
        assert!(roc(&m, &row(&[1.0]), Polarity::HighIsChange).is_err());
    }

    #[test]
    fn roc_csv_layout() {
        let t = row(&[0.0, 1.0]);
        let csv = roc(&t, &t, Polarity::HighIsChange).unwrap().to_csv();
        assert_eq!(csv, "threshold,fpr,tpr\ninf,0,0\n1,0,1\n0,1,1\n");
    }

    #[test]
    fn pearson_anchors() {
        let a = row(&[1.0, 4.0, 2.0, 8.0, 5.0]);
        let neg = row(&a.values.iter().map(|v| 7.0 - v).collect::<Vec<_>>());
        let aff = row(&a.values.iter().map(|v| 2.0 * v + 3.0).collect::<Vec<_>>());
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&a, &aff).unwrap() - 1.0).abs() < 1e-15);
        assert!(pearson(&a, &row(&[3.0; 5])).is_err());
    }

    #[test]
    fn pearson_skips_invalid() {
        let a = row(&[1.0, 2.0, 3.0, 100.0]).with_validity(vec![true, true, true, false]).unwrap();
        let b = row(&[2.0, 4.0, 6.0, -9.0]);
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 2.0), Some(2.0));
        assert_eq!(percentile(&[1.0, 3.0], 50.0), Some(2.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn render_minmax_and_constant() {
        let m = row(&[0.0, 0.5, 1.0]);
        let img = render_gray(&m, Stretch::MinMax).unwrap();
        assert_eq!(img.as_raw(), &vec![0u8, 128, 255]);
        let c = render_gray(&row(&[3.0; 4]), Stretch::MinMax).unwrap();
        assert!(c.as_raw().iter().all(|v| *v == 128));
        let undef = row(&[1.0, 2.0]).with_validity(vec![false, false]).unwrap();
        assert!(render_gray(&undef, Stretch::MinMax).is_err());
    }

    #[test]
    fn render_percentile_clips_outliers() {
        let mut v: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        v[50] = 1e6;
        let m = ScalarMap::new(10, 10, v, "m").unwrap();
        let img = render_gray(&m, Stretch::Percentile(2.0, 98.0)).unwrap();
        assert_eq!(img.as_raw()[50], 255);
        assert_eq!(img.as_raw()[0], 0);
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), (1.0, 0.0, 0.0));
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), (0.0, 1.0, 0.0));
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), (0.0, 0.0, 1.0));
        assert_eq!(hsv_to_rgb(77.0, 0.0, 1.0), (1.0, 1.0, 1.0));
    }

    #[test]
    fn reactiv_constant_is_white_and_spike_is_top_hue() {
        // pixel 0 constant bright, pixel 1 spike at the last frame
        let n = 5;
        let mut data = vec![0.0f32; n * 2];
        for t in 0..n {
            data[t * 2] = 4.0;
            data[t * 2 + 1] = if t == n - 1 { 4.0 } else { 0.5 };
        }
        let st = SpeckleStack::real(Shape::new(n, 1, 1, 2), data).unwrap();
        let hsv = reactiv(&st, ReactivParams::default()).unwrap();
        assert_eq!(hsv.saturation[0], 0.0);
        assert_eq!(hsv.value[0], 1.0);
        assert_eq!(hsv.to_rgb().get_pixel(0, 0).0, [255, 255, 255]);
        assert_eq!(hsv.hue[1], ReactivParams::default().hue_span);
    }
}
