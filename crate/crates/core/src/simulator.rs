//! Synthetic polarimetric speckle with known ground truth.
//!
//! Each pixel carries a `p`-channel circular complex Gaussian field that
//! decorrelates in time as a first-order autoregressive process
//!
//! ```text
//! E[t+1] = ρ E[t] + sqrt(1 - ρ²) · L · w[t],    ρ = exp(-1/τ)
//! ```
//!
//! where `w[t]` is white complex standard normal, `L` is the Cholesky factor
//! of the channel correlation matrix, and each channel is finally scaled by
//! the square root of its power. The process starts in its stationary
//! distribution, so the field autocorrelation at lag `k` is `ρ^k` and the
//! intensity is exponentially distributed (fully developed speckle).
//!
//! Permanent scatterers are constant fields of amplitude `10·sqrt(mean
//! power)`. Change pixels have their power multiplied by `change_gain` from
//! `change_frame` on.
//!
//! Randomness is drawn from a ChaCha stream selected by the pixel index, so
//! every pixel's series depends only on `(seed, pixel)` and generation can
//! be split across any number of workers.

use std::collections::BTreeSet;

use num_complex::{Complex32, Complex64};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_psd;
use crate::stack::{ScalarMap, Shape, SpeckleStack};

/// PS amplitude relative to the speckle RMS amplitude.
pub const PS_AMPLITUDE_FACTOR: f64 = 10.0;

fn one() -> f64 {
    1.0
}

/// A set of pixels, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSpec {
    #[default]
    None,
    /// Explicit `[y, x]` pixels.
    Pixels(Vec<[usize; 2]>),
    /// `[y0, x0, height, width]` rectangles.
    Rects(Vec<[usize; 4]>),
    /// `round(fraction · H · W)` pixels drawn without replacement, avoiding
    /// pixels claimed by the other mask.
    Random { fraction: f64, seed: u64 },
}

/// A rectangle with its own decorrelation and channel parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_power: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_corr: Option<Vec<Vec<f64>>>,
}

/// Simulator configuration. Missing optional fields default to unit power,
/// uncorrelated channels, `τ = 1`, no masks and seed 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// `[N, p, H, W]`
    pub shape: [usize; 4],
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default)]
    pub channel_power: Vec<f64>,
    #[serde(default)]
    pub channel_corr: Vec<Vec<f64>>,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub ps_mask: MaskSpec,
    #[serde(default)]
    pub change_mask: MaskSpec,
    #[serde(default)]
    pub change_frame: usize,
    #[serde(default = "one")]
    pub change_gain: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub channel_names: Vec<String>,
    /// Optional detector clipping of the field modulus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_amplitude: Option<f64>,
}

impl Scenario {
    /// Homogeneous scene with default parameters.
    pub fn homogeneous(n_time: usize, n_chan: usize, height: usize, width: usize) -> Self {
        Scenario {
            shape: [n_time, n_chan, height, width],
            tau: 1.0,
            channel_power: Vec::new(),
            channel_corr: Vec::new(),
            regions: Vec::new(),
            ps_mask: MaskSpec::None,
            change_mask: MaskSpec::None,
            change_frame: 0,
            change_gain: 1.0,
            seed: 0,
            channel_names: Vec::new(),
            clip_amplitude: None,
        }
    }

    pub fn stack_shape(&self) -> Shape {
        let [n, p, h, w] = self.shape;
        Shape::new(n, p, h, w)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Header {
            path: "<scenario>".into(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Per-pixel process parameters after validation.
#[derive(Debug, Clone)]
struct ChannelModel {
    rho: f64,
    innovation: f64,
    mixing: Vec<f64>,
    amp: Vec<f64>,
    ps_amplitude: f64,
}

impl ChannelModel {
    fn build(p: usize, tau: f64, power: &[f64], corr: &[Vec<f64>]) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::precondition(format!("tau must be positive, got {tau}")));
        }
        let power: Vec<f64> = if power.is_empty() { vec![1.0; p] } else { power.to_vec() };
        if power.len() != p || power.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::precondition(format!(
                "channel_power needs {p} nonnegative entries"
            )));
        }
        let corr_flat: Vec<f64> = if corr.is_empty() {
            (0..p * p).map(|i| if i / p == i % p { 1.0 } else { 0.0 }).collect()
        } else {
            if corr.len() != p || corr.iter().any(|r| r.len() != p) {
                return Err(Error::precondition(format!("channel_corr must be {p}x{p}")));
            }
            corr.iter().flatten().copied().collect()
        };
        for i in 0..p {
            if (corr_flat[i * p + i] - 1.0).abs() > 1e-12 {
                return Err(Error::precondition("channel_corr needs a unit diagonal"));
            }
            for j in 0..i {
                if (corr_flat[i * p + j] - corr_flat[j * p + i]).abs() > 1e-12 {
                    return Err(Error::precondition("channel_corr must be symmetric"));
                }
            }
        }
        let mixing = cholesky_psd(&corr_flat, p, 1e-12)
            .ok_or_else(|| Error::precondition("channel_corr is not positive semi-definite"))?;
        let rho = (-1.0 / tau).exp();
        let mean_power = power.iter().sum::<f64>() / p as f64;
        Ok(ChannelModel {
            rho,
            innovation: (1.0 - rho * rho).sqrt(),
            mixing,
            amp: power.iter().map(|v| v.sqrt()).collect(),
            ps_amplitude: PS_AMPLITUDE_FACTOR * mean_power.sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PixelRole {
    Speckle,
    Permanent,
    Change,
}

struct Resolved {
    shape: Shape,
    models: Vec<ChannelModel>,
    /// Index into `models` for each pixel.
    model_of: Vec<usize>,
    role: Vec<PixelRole>,
}

fn resolve_mask(spec: &MaskSpec, h: usize, w: usize, taken: &BTreeSet<usize>, what: &str) -> Result<BTreeSet<usize>> {
    let oob = || Error::precondition(format!("{what} reaches outside the {h}x{w} image"));
    let mut set = BTreeSet::new();
    match spec {
        MaskSpec::None => {}
        MaskSpec::Pixels(px) => {
            for [y, x] in px {
                if *y >= h || *x >= w {
                    return Err(oob());
                }
                set.insert(y * w + x);
            }
        }
        MaskSpec::Rects(rects) => {
            for [y0, x0, rh, rw] in rects {
                if y0 + rh > h || x0 + rw > w {
                    return Err(oob());
                }
                for y in *y0..y0 + rh {
                    for x in *x0..x0 + rw {
                        set.insert(y * w + x);
                    }
                }
            }
        }
        MaskSpec::Random { fraction, seed } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::precondition(format!("{what} fraction must lie in [0, 1]")));
            }
            let free: Vec<usize> = (0..h * w).filter(|i| !taken.contains(i)).collect();
            let count = ((fraction * (h * w) as f64).round() as usize).min(free.len());
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for i in index::sample(&mut rng, free.len(), count) {
                set.insert(free[i]);
            }
        }
    }
    Ok(set)
}

fn explicit(spec: &MaskSpec) -> bool {
    !matches!(spec, MaskSpec::Random { .. })
}

/// Resolve both masks; explicit masks first so random draws can avoid them.
fn resolve_masks(sc: &Scenario) -> Result<(BTreeSet<usize>, BTreeSet<usize>)> {
    let [_, _, h, w] = sc.shape;
    let none = BTreeSet::new();
    let (change, ps) = if explicit(&sc.change_mask) || !explicit(&sc.ps_mask) {
        let change = resolve_mask(&sc.change_mask, h, w, &none, "change_mask")?;
        let ps = resolve_mask(&sc.ps_mask, h, w, &change, "ps_mask")?;
        (change, ps)
    } else {
        let ps = resolve_mask(&sc.ps_mask, h, w, &none, "ps_mask")?;
        let change = resolve_mask(&sc.change_mask, h, w, &ps, "change_mask")?;
        (change, ps)
    };
    if change.intersection(&ps).next().is_some() {
        return Err(Error::precondition("ps_mask and change_mask overlap"));
    }
    Ok((change, ps))
}

fn resolve(sc: &Scenario) -> Result<Resolved> {
    let shape = sc.stack_shape();
    let [n, p, h, w] = sc.shape;
    if n == 0 || p == 0 || h == 0 || w == 0 {
        return Err(Error::precondition(format!("scenario shape must be positive, got {:?}", sc.shape)));
    }
    let base = ChannelModel::build(p, sc.tau, &sc.channel_power, &sc.channel_corr)?;
    let mut models = vec![base];
    for r in &sc.regions {
        if r.y0 + r.height > h || r.x0 + r.width > w {
            return Err(Error::precondition("region reaches outside the image"));
        }
        models.push(ChannelModel::build(
            p,
            r.tau.unwrap_or(sc.tau),
            r.channel_power.as_deref().unwrap_or(&sc.channel_power),
            r.channel_corr.as_deref().unwrap_or(&sc.channel_corr),
        )?);
    }
    let mut model_of = vec![0usize; h * w];
    for (ri, r) in sc.regions.iter().enumerate() {
        for y in r.y0..r.y0 + r.height {
            for x in r.x0..r.x0 + r.width {
                model_of[y * w + x] = ri + 1;
            }
        }
    }
    let (change, ps) = resolve_masks(sc)?;
    if !change.is_empty() {
        if sc.change_frame >= n {
            return Err(Error::precondition(format!(
                "change_frame {} must be below N = {n}",
                sc.change_frame
            )));
        }
        if !(sc.change_gain > 0.0 && sc.change_gain.is_finite()) {
            return Err(Error::precondition("change_gain must be positive"));
        }
    }
    if let Some(c) = sc.clip_amplitude {
        if c.is_nan() || c <= 0.0 {
            return Err(Error::precondition("clip_amplitude must be positive"));
        }
    }
    let mut role = vec![PixelRole::Speckle; h * w];
    for i in change {
        role[i] = PixelRole::Change;
    }
    for i in ps {
        role[i] = PixelRole::Permanent;
    }
    Ok(Resolved {
        shape,
        models,
        model_of,
        role,
    })
}

/// Check a scenario without generating data.
pub fn validate(sc: &Scenario) -> Result<()> {
    resolve(sc).map(|_| ())
}

#[inline]
fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// The `N×p` series of one pixel, `out[t*p + c]`.
fn pixel_series(sc: &Scenario, res: &Resolved, pixel: usize, out: &mut [Complex32]) {
    let Shape { n_time: n, n_chan: p, .. } = res.shape;
    let model = &res.models[res.model_of[pixel]];
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(pixel as u64);
    let clip = |z: Complex64| match sc.clip_amplitude {
        Some(c) if z.norm() > c => z * (c / z.norm()),
        _ => z,
    };

    if res.role[pixel] == PixelRole::Permanent {
        for c in 0..p {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let z = clip(Complex64::from_polar(model.ps_amplitude, phase));
            for t in 0..n {
                out[t * p + c] = Complex32::new(z.re as f32, z.im as f32);
            }
        }
        return;
    }

    let gain = if res.role[pixel] == PixelRole::Change {
        sc.change_gain.sqrt()
    } else {
        1.0
    };
    let mut state = vec![Complex64::new(0.0, 0.0); p];
    let mut white = vec![Complex64::new(0.0, 0.0); p];
    for t in 0..n {
        for z in white.iter_mut() {
            *z = complex_normal(&mut rng);
        }
        for (c, s) in state.iter_mut().enumerate() {
            let mixed: Complex64 = (0..=c).map(|k| white[k] * model.mixing[c * p + k]).sum();
            *s = if t == 0 {
                mixed
            } else {
                *s * model.rho + mixed * model.innovation
            };
        }
        let g = if t >= sc.change_frame { gain } else { 1.0 };
        for c in 0..p {
            let z = clip(state[c] * (model.amp[c] * g));
            out[t * p + c] = Complex32::new(z.re as f32, z.im as f32);
        }
    }
}

/// Generate the complex stack described by `sc`.
pub fn simulate(sc: &Scenario) -> Result<SpeckleStack> {
    let res = resolve(sc)?;
    let s = res.shape;
    let (n, p, h, w) = (s.n_time, s.n_chan, s.height, s.width);
    let rows: Vec<Vec<Complex32>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = vec![Complex32::new(0.0, 0.0); w * n * p];
            for x in 0..w {
                pixel_series(sc, &res, y * w + x, &mut row[x * n * p..(x + 1) * n * p]);
            }
            row
        })
        .collect();
    let mut data = vec![Complex32::new(0.0, 0.0); s.len()];
    for (y, row) in rows.iter().enumerate() {
        for t in 0..n {
            for c in 0..p {
                let start = s.index(t, c, y, 0);
                for x in 0..w {
                    data[start + x] = row[x * n * p + t * p + c];
                }
            }
        }
    }
    let stack = SpeckleStack::complex(s, data)?;
    if sc.channel_names.is_empty() {
        Ok(stack)
    } else {
        stack.with_channel_names(sc.channel_names.clone())
    }
}

/// Binary `(change, permanent scatterer)` maps of the scenario.
pub fn ground_truth(sc: &Scenario) -> Result<(ScalarMap, ScalarMap)> {
    let res = resolve(sc)?;
    let (h, w) = (res.shape.height, res.shape.width);
    let change: Vec<bool> = res.role.iter().map(|r| *r == PixelRole::Change).collect();
    let ps: Vec<bool> = res.role.iter().map(|r| *r == PixelRole::Permanent).collect();
    Ok((
        ScalarMap::from_mask(h, w, &change, "truth_change"),
        ScalarMap::from_mask(h, w, &ps, "truth_ps"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permanent_scatterer_is_constant() {
        let mut sc = Scenario::homogeneous(20, 2, 3, 3);
        sc.ps_mask = MaskSpec::Pixels(vec![[1, 1]]);
        let st = simulate(&sc).unwrap();
        let s = st.shape();
        let d = st.complex_data().unwrap();
        for c in 0..2 {
            let first = d[s.index(0, c, 1, 1)];
            assert!((first.norm() - 10.0).abs() < 1e-5);
            assert!((0..20).all(|t| d[s.index(t, c, 1, 1)] == first));
        }
    }

    #[test]
    fn same_seed_same_stack() {
        let mut sc = Scenario::homogeneous(8, 2, 5, 7);
        sc.seed = 42;
        assert_eq!(simulate(&sc).unwrap(), simulate(&sc).unwrap());
        let mut other = sc.clone();
        other.seed = 43;
        assert_ne!(simulate(&sc).unwrap(), simulate(&other).unwrap());
    }

    #[test]
    fn change_pixels_scale_after_change_frame() {
        let mut sc = Scenario::homogeneous(10, 1, 2, 2);
        sc.change_mask = MaskSpec::Pixels(vec![[0, 0]]);
        sc.change_frame = 4;
        sc.change_gain = 4.0;
        let mut plain = sc.clone();
        plain.change_mask = MaskSpec::None;
        let a = simulate(&sc).unwrap();
        let b = simulate(&plain).unwrap();
        let s = a.shape();
        let (da, db) = (a.complex_data().unwrap(), b.complex_data().unwrap());
        for t in 0..10 {
            let i = s.index(t, 0, 0, 0);
            let want = if t >= 4 { db[i] * 2.0 } else { db[i] };
            assert!((da[i] - want).norm() < 1e-6);
            // untouched pixel identical
            assert_eq!(da[s.index(t, 0, 1, 1)], db[s.index(t, 0, 1, 1)]);
        }
    }

    #[test]
    fn invalid_scenarios() {
        let base = Scenario::homogeneous(4, 2, 4, 4);
        let mut sc = base.clone();
        sc.tau = 0.0;
        assert!(validate(&sc).is_err());
        let mut sc = base.clone();
        sc.channel_corr = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(validate(&sc).is_err());
        let mut sc = base.clone();
        sc.channel_corr = vec![vec![2.0, 0.0], vec![0.0, 1.0]];
        assert!(validate(&sc).is_err());
        let mut sc = base.clone();
        sc.change_mask = MaskSpec::Pixels(vec![[0, 0]]);
        sc.change_frame = 4;
        assert!(validate(&sc).is_err());
        let mut sc = base.clone();
        sc.change_mask = MaskSpec::Pixels(vec![[0, 0]]);
        sc.ps_mask = MaskSpec::Rects(vec![[0, 0, 2, 2]]);
        assert!(validate(&sc).is_err());
        let mut sc = base.clone();
        sc.ps_mask = MaskSpec::Pixels(vec![[4, 0]]);
        assert!(validate(&sc).is_err());
        let mut sc = base;
        sc.channel_power = vec![1.0];
        assert!(validate(&sc).is_err());
    }

    #[test]
    fn fully_correlated_channels_are_allowed() {
        let mut sc = Scenario::homogeneous(5, 2, 2, 2);
        sc.channel_corr = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let st = simulate(&sc).unwrap();
        let s = st.shape();
        let d = st.complex_data().unwrap();
        for t in 0..5 {
            assert!((d[s.index(t, 0, 1, 0)] - d[s.index(t, 1, 1, 0)]).norm() < 1e-6);
        }
    }

    #[test]
    fn random_masks_are_disjoint_and_sized() {
        let mut sc = Scenario::homogeneous(4, 1, 20, 20);
        sc.ps_mask = MaskSpec::Random { fraction: 0.05, seed: 1 };
        sc.change_mask = MaskSpec::Rects(vec![[0, 0, 10, 20]]);
        sc.change_frame = 2;
        let (change, ps) = ground_truth(&sc).unwrap();
        let c = change.to_mask();
        let p = ps.to_mask();
        assert_eq!(c.iter().filter(|v| **v).count(), 200);
        assert_eq!(p.iter().filter(|v| **v).count(), 20);
        assert!(c.iter().zip(&p).all(|(a, b)| !(*a && *b)));
    }

    #[test]
    fn empty_masks_give_zero_truth() {
        let (c, p) = ground_truth(&Scenario::homogeneous(2, 1, 3, 4)).unwrap();
        assert!(c.values.iter().chain(&p.values).all(|v| *v == 0.0));
    }

    #[test]
    fn scenario_json_round_trip() {
        let mut sc = Scenario::homogeneous(40, 2, 8, 8);
        sc.ps_mask = MaskSpec::Pixels(vec![[1, 2], [3, 4]]);
        sc.change_mask = MaskSpec::Random { fraction: 0.1, seed: 9 };
        sc.change_frame = 20;
        sc.regions.push(Region {
            y0: 0,
            x0: 0,
            height: 4,
            width: 4,
            tau: Some(3.0),
            channel_power: None,
            channel_corr: Some(vec![vec![1.0, 0.5], vec![0.5, 1.0]]),
        });
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc);
        assert_eq!(ground_truth(&back).unwrap(), ground_truth(&sc).unwrap());
        let minimal = Scenario::from_json(r#"{"shape":[4,1,2,2]}"#).unwrap();
        assert_eq!(minimal, Scenario::homogeneous(4, 1, 2, 2));
    }
}
