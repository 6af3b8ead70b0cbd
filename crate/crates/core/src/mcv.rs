//! Per-pixel statistics and multivariate coefficients of variation.
//!
//! For a real `p`-vector time series with mean `μ` and covariance `C`:
//!
//! | kind   | value                                  |
//! |--------|----------------------------------------|
//! | `R`    | `sqrt(det(C)^(1/p) / μᵀμ)`             |
//! | `VV`   | `sqrt(trace(C) / μᵀμ)`                 |
//! | `VN`   | `sqrt(1 / μᵀC⁻¹μ)`                     |
//! | `AZ`   | `sqrt(μᵀCμ / (μᵀμ)²)`                  |
//! | Single | `sqrt(C[c][c]) / abs(μ[c])`            |
//!
//! All collapse to `σ/|μ|` for `p = 1`, and all are invariant under a
//! positive rescaling of the data and under an orthogonal change of basis.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, sym_eigen};

/// Contrast below this is treated as zero by [`vmai`].
pub const GAMMA_FLOOR: f64 = 1e-6;
/// Relative eigenvalue floor applied before inverting `C` for `VN`.
pub const VN_RIDGE: f64 = 1e-9;
/// Negative covariance eigenvalues down to this (relative to the largest)
/// are accepted as rounding and clamped to zero.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// `mu_floor = MU_FLOOR_REL · (max data magnitude)²`.
pub const MU_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum McvKind {
    R,
    VV,
    VN,
    AZ,
    Single(usize),
}

impl McvKind {
    pub const MULTIVARIATE: [McvKind; 4] = [McvKind::R, McvKind::VV, McvKind::VN, McvKind::AZ];

    fn needs_spectrum(self) -> bool {
        matches!(self, McvKind::R | McvKind::VN)
    }
}

impl fmt::Display for McvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McvKind::R => f.write_str("r"),
            McvKind::VV => f.write_str("vv"),
            McvKind::VN => f.write_str("vn"),
            McvKind::AZ => f.write_str("az"),
            McvKind::Single(c) => write!(f, "single{c}"),
        }
    }
}

impl FromStr for McvKind {
    type Err = Error;

    /// Accepts `r`, `vv`, `vn`, `az`, `single` (channel 0) or `singleN`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "r" => Ok(McvKind::R),
            "vv" => Ok(McvKind::VV),
            "vn" => Ok(McvKind::VN),
            "az" => Ok(McvKind::AZ),
            "single" => Ok(McvKind::Single(0)),
            other => other
                .strip_prefix("single")
                .and_then(|c| c.parse().ok())
                .map(McvKind::Single)
                .ok_or_else(|| Error::precondition(format!("unknown estimator {s:?}"))),
        }
    }
}

/// Covariance normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `1/N`: fully developed speckle has contrast exactly 1 in expectation.
    #[default]
    MaxLikelihood,
    /// `1/(N-1)`.
    Unbiased,
}

/// Why a coefficient could not be evaluated at a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Undefined {
    #[error("mean vector is (numerically) zero")]
    ZeroMean,
    #[error("channel {0} out of range")]
    Channel(usize),
}

/// Temporal (or windowed) mean vector and covariance matrix of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelStats {
    mu: Vec<f64>,
    cov: Vec<f64>,
}

impl PixelStats {
    /// Build from an explicit mean and row-major covariance.
    pub fn new(mu: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let p = mu.len();
        if p == 0 || cov.len() != p * p {
            return Err(Error::Shape(format!(
                "mean of length {p} needs a {p}x{p} covariance, got {} entries",
                cov.len()
            )));
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            for j in i + 1..p {
                let (a, b) = (cov[i * p + j], cov[j * p + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(Error::precondition("covariance is not symmetric"));
                }
            }
        }
        let mut vals = vec![0.0; p];
        sym_eigen(&cov, p, &mut vals, None);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::precondition(format!(
                "covariance is not positive semi-definite (eigenvalue {min:e})"
            )));
        }
        Ok(PixelStats { mu, cov })
    }

    /// Statistics of `n = samples.len() / p` row-major `p`-vectors.
    pub fn from_samples(samples: &[f64], p: usize, norm: Normalization) -> Result<Self> {
        let mut scratch = Vec::new();
        let mut out = PixelStats {
            mu: vec![0.0; p],
            cov: vec![0.0; p * p],
        };
        out.fill_from_samples(samples, p, norm, &mut scratch)?;
        Ok(out)
    }

    /// Two-pass mean/covariance with pairwise summation over samples, reusing
    /// `self` and `scratch` to avoid allocation in per-pixel loops.
    pub(crate) fn fill_from_samples(
        &mut self,
        samples: &[f64],
        p: usize,
        norm: Normalization,
        scratch: &mut Vec<f64>,
    ) -> Result<()> {
        if p == 0 || samples.len() % p != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form {p}-vectors",
                samples.len()
            )));
        }
        let n = samples.len() / p;
        if n < 2 {
            return Err(Error::precondition(format!("need at least 2 samples, got {n}")));
        }
        self.mu.resize(p, 0.0);
        self.cov.resize(p * p, 0.0);
        scratch.resize(n, 0.0);
        for j in 0..p {
            for k in 0..n {
                scratch[k] = samples[k * p + j];
            }
            self.mu[j] = pairwise_sum(scratch) / n as f64;
        }
        let denom = match norm {
            Normalization::MaxLikelihood => n as f64,
            Normalization::Unbiased => (n - 1) as f64,
        };
        for i in 0..p {
            for j in i..p {
                let (mi, mj) = (self.mu[i], self.mu[j]);
                for k in 0..n {
                    scratch[k] = (samples[k * p + i] - mi) * (samples[k * p + j] - mj);
                }
                let c = pairwise_sum(scratch) / denom;
                self.cov[i * p + j] = c;
                self.cov[j * p + i] = c;
            }
        }
        Ok(())
    }

    pub(crate) fn zeroed(p: usize) -> Self {
        PixelStats {
            mu: vec![0.0; p],
            cov: vec![0.0; p * p],
        }
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.mu, &mut self.cov)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Row-major `p×p` covariance.
    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn cov_at(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.dim() + j]
    }

    fn mu_norm2(&self) -> f64 {
        self.mu.iter().map(|m| m * m).sum()
    }

    fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.cov_at(i, i)).sum()
    }

    /// `μᵀCμ`
    fn quad_form(&self) -> f64 {
        let p = self.dim();
        let mut acc = 0.0;
        for i in 0..p {
            let row: f64 = (0..p).map(|j| self.cov[i * p + j] * self.mu[j]).sum();
            acc += self.mu[i] * row;
        }
        acc
    }
}

/// Sample statistics of a list of `p`-vectors with `1/N` normalization.
pub fn pixel_stats(samples: &[Vec<f64>]) -> Result<PixelStats> {
    let p = samples.first().map_or(0, Vec::len);
    if samples.iter().any(|s| s.len() != p) {
        return Err(Error::Shape("samples differ in dimension".into()));
    }
    let flat: Vec<f64> = samples.iter().flatten().copied().collect();
    PixelStats::from_samples(&flat, p, Normalization::MaxLikelihood)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McvConfig {
    /// `μᵀμ` at or below this is a zero-mean pixel.
    pub mu_floor: f64,
    /// Relative eigenvalue floor for `VN`.
    pub ridge: f64,
}

impl Default for McvConfig {
    fn default() -> Self {
        McvConfig {
            mu_floor: 0.0,
            ridge: VN_RIDGE,
        }
    }
}

impl McvConfig {
    /// Floor scaled to the data: `1e-12 · max_magnitude²`.
    pub fn for_data_magnitude(max_magnitude: f64) -> Self {
        McvConfig {
            mu_floor: MU_FLOOR_REL * max_magnitude * max_magnitude,
            ..Default::default()
        }
    }
}

/// Evaluates several kinds on one [`PixelStats`], sharing the
/// eigendecomposition between `R` and `VN`.
pub struct McvEvaluator<'a> {
    stats: &'a PixelStats,
    cfg: McvConfig,
    mu2: f64,
    spectrum: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> McvEvaluator<'a> {
    pub fn new(stats: &'a PixelStats, cfg: McvConfig) -> Self {
        McvEvaluator {
            stats,
            cfg,
            mu2: stats.mu_norm2(),
            spectrum: None,
        }
    }

    fn spectrum(&mut self) -> &(Vec<f64>, Vec<f64>) {
        let stats = self.stats;
        self.spectrum.get_or_insert_with(|| {
            let p = stats.dim();
            let mut vals = vec![0.0; p];
            let mut vecs = vec![0.0; p * p];
            if p == 1 {
                vals[0] = stats.cov[0];
                vecs[0] = 1.0;
            } else {
                sym_eigen(&stats.cov, p, &mut vals, Some(&mut vecs));
            }
            // PSD projection: rounding can leave tiny negative eigenvalues.
            vals.iter_mut().for_each(|v| *v = v.max(0.0));
            (vals, vecs)
        })
    }

    pub fn eval(&mut self, kind: McvKind) -> Result<f64, Undefined> {
        let p = self.stats.dim();
        if let McvKind::Single(c) = kind {
            if c >= p {
                return Err(Undefined::Channel(c));
            }
            let m = self.stats.mu[c];
            if m * m <= self.cfg.mu_floor || m == 0.0 {
                return Err(Undefined::ZeroMean);
            }
            return Ok(self.stats.cov_at(c, c).max(0.0).sqrt() / m.abs());
        }
        let mu2 = self.mu2;
        if mu2 <= self.cfg.mu_floor || mu2 == 0.0 {
            return Err(Undefined::ZeroMean);
        }
        debug_assert!(!kind.needs_spectrum() || p > 0);
        let value = match kind {
            McvKind::VV => (self.stats.trace().max(0.0) / mu2).sqrt(),
            McvKind::AZ => self.stats.quad_form().max(0.0).sqrt() / mu2,
            McvKind::R => {
                let (vals, _) = self.spectrum();
                let det_root = if vals.contains(&0.0) {
                    0.0
                } else {
                    (vals.iter().map(|v| v.ln()).sum::<f64>() / p as f64).exp()
                };
                (det_root / mu2).sqrt()
            }
            McvKind::VN => {
                let trace = self.stats.trace();
                let ridge = self.cfg.ridge;
                let mu = self.stats.mu.clone();
                let (vals, vecs) = self.spectrum();
                if trace <= 0.0 {
                    // C = 0: limit of sqrt(1/μᵀC⁻¹μ) is 0.
                    return Ok(0.0);
                }
                let floor = ridge * trace / p as f64;
                let mut q = 0.0;
                for (i, lambda) in vals.iter().enumerate() {
                    let proj: f64 = (0..p).map(|r| vecs[r * p + i] * mu[r]).sum();
                    q += proj * proj / lambda.max(floor);
                }
                (1.0 / q).sqrt()
            }
            McvKind::Single(_) => unreachable!(),
        };
        Ok(value)
    }
}

/// Coefficient of variation of `kind` with default configuration.
pub fn mcv(stats: &PixelStats, kind: McvKind) -> Result<f64, Undefined> {
    mcv_with(stats, kind, McvConfig::default())
}

pub fn mcv_with(stats: &PixelStats, kind: McvKind, cfg: McvConfig) -> Result<f64, Undefined> {
    McvEvaluator::new(stats, cfg).eval(kind)
}

/// Activity index `1/γ²` with explicit saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmaiValue {
    pub value: f64,
    pub saturated: bool,
}

pub fn vmai(gamma: f64) -> VmaiValue {
    if gamma >= GAMMA_FLOOR {
        VmaiValue {
            value: 1.0 / (gamma * gamma),
            saturated: false,
        }
    } else {
        VmaiValue {
            value: 1.0 / (GAMMA_FLOOR * GAMMA_FLOOR),
            saturated: true,
        }
    }
}
