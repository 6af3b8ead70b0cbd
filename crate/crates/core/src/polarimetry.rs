//! Complex field to real-valued conversions and degree of polarization.
//!
//! The contrast estimators only apply to real vectors, so complex dual-pol
//! data goes through either the per-channel modulus (`p = 2`) or the Stokes
//! vector (`p = 4`).
//!
//! Stokes convention, with `E1` the first (co-pol) and `E2` the second
//! (cross-pol) channel:
//!
//! ```text
//! s0 = |E1|² + |E2|²      s2 =  2 Re(E1 E2*)
//! s1 = |E1|² - |E2|²      s3 = -2 Im(E1 E2*)
//! ```

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::stack::{Samples, ScalarMap, Shape, SpeckleStack};

/// Floor applied to the DOP before inversion.
pub const DOP_FLOOR: f64 = 1e-3;
/// `⟨s0⟩` at or below `DOP_S0_FLOOR_REL · max(s0)` leaves the DOP undefined.
pub const DOP_S0_FLOOR_REL: f64 = 1e-12;

pub const STOKES_NAMES: [&str; 4] = ["S0", "S1", "S2", "S3"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn from_fields(e1: num_complex::Complex64, e2: num_complex::Complex64) -> Self {
        let i1 = e1.norm_sqr();
        let i2 = e2.norm_sqr();
        let cross = e1 * e2.conj();
        StokesVector {
            s0: i1 + i2,
            s1: i1 - i2,
            s2: 2.0 * cross.re,
            s3: -2.0 * cross.im,
        }
    }

    /// Degree of polarization `sqrt(s1²+s2²+s3²)/s0`.
    pub fn dop(&self) -> Option<f64> {
        (self.s0 > 0.0).then(|| (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt() / self.s0)
    }
}

fn widen(z: num_complex::Complex32) -> num_complex::Complex64 {
    num_complex::Complex64::new(z.re as f64, z.im as f64)
}

fn map_complex(stack: &SpeckleStack, what: &str, f: impl Fn(f64) -> f64 + Sync) -> Result<SpeckleStack> {
    let data = stack.require_complex(what)?;
    let out: Vec<f32> = data
        .par_iter()
        .map(|z| f((z.re as f64).hypot(z.im as f64)) as f32)
        .collect();
    SpeckleStack::new(stack.shape(), Samples::Real(out), stack.channel_names().to_vec())
}

/// Per-sample modulus `|E|`.
pub fn amplitudes(stack: &SpeckleStack) -> Result<SpeckleStack> {
    map_complex(stack, "amplitudes", |a| a)
}

/// Per-sample intensity `|E|²`.
pub fn intensities(stack: &SpeckleStack) -> Result<SpeckleStack> {
    map_complex(stack, "intensities", |a| a * a)
}

/// Convert a dual-pol complex stack into a 4-channel real Stokes stack.
pub fn to_stokes(stack: &SpeckleStack) -> Result<SpeckleStack> {
    let data = stack.require_complex("Stokes conversion")?;
    let s = stack.shape();
    if s.n_chan != 2 {
        return Err(Error::precondition(format!(
            "Stokes conversion needs exactly 2 complex channels, got {}",
            s.n_chan
        )));
    }
    let plane = s.pixels();
    let out_shape = Shape::new(s.n_time, 4, s.height, s.width);
    let mut out = vec![0.0f32; out_shape.len()];
    out.par_chunks_mut(4 * plane).enumerate().for_each(|(t, frame)| {
        let e1 = &data[(2 * t) * plane..(2 * t + 1) * plane];
        let e2 = &data[(2 * t + 1) * plane..(2 * t + 2) * plane];
        for i in 0..plane {
            let sv = StokesVector::from_fields(widen(e1[i]), widen(e2[i]));
            frame[i] = sv.s0 as f32;
            frame[plane + i] = sv.s1 as f32;
            frame[2 * plane + i] = sv.s2 as f32;
            frame[3 * plane + i] = sv.s3 as f32;
        }
    });
    SpeckleStack::new(
        out_shape,
        Samples::Real(out),
        STOKES_NAMES.iter().map(|n| n.to_string()).collect(),
    )
}

/// Partial temporal degree of polarization: the DOP of the time-averaged
/// Stokes vector at each pixel.
///
/// Accepts a 4-channel real Stokes stack, or a dual-pol complex stack whose
/// Stokes vectors are then formed in double precision on the fly (no `f32`
/// rounding of the intermediate components).
pub fn temporal_dop(stokes: &SpeckleStack) -> Result<ScalarMap> {
    let s = stokes.shape();
    let want_chan = match stokes.samples() {
        Samples::Real(_) => 4,
        Samples::Complex(_) => 2,
    };
    if s.n_chan != want_chan {
        return Err(Error::precondition(format!(
            "temporal DOP needs a 4-channel Stokes stack or a 2-channel complex stack, got {} channels",
            s.n_chan
        )));
    }
    if s.n_time < 2 {
        return Err(Error::precondition("temporal DOP needs at least 2 frames"));
    }
    let plane = s.pixels();
    let n = s.n_time;
    let sample = |t: usize, i: usize| -> [f64; 4] {
        match stokes.samples() {
            Samples::Real(d) => {
                let at = |c: usize| d[(t * 4 + c) * plane + i] as f64;
                [at(0), at(1), at(2), at(3)]
            }
            Samples::Complex(d) => {
                let sv = StokesVector::from_fields(
                    widen(d[(2 * t) * plane + i]),
                    widen(d[(2 * t + 1) * plane + i]),
                );
                [sv.s0, sv.s1, sv.s2, sv.s3]
            }
        }
    };

    let means: Vec<[f64; 4]> = (0..plane)
        .into_par_iter()
        .map_init(
            || (vec![[0.0f64; 4]; n], vec![0.0f64; n]),
            |(buf, scratch), i| {
                for (t, v) in buf.iter_mut().enumerate() {
                    *v = sample(t, i);
                }
                let mut mean = [0.0f64; 4];
                for (c, m) in mean.iter_mut().enumerate() {
                    for (t, v) in scratch.iter_mut().enumerate() {
                        *v = buf[t][c];
                    }
                    *m = pairwise_sum(scratch) / n as f64;
                }
                mean
            },
        )
        .collect();
    let s0_max = means.iter().fold(0.0f64, |m, v| m.max(v[0]));
    let floor = DOP_S0_FLOOR_REL * s0_max;
    let mut values = Vec::with_capacity(plane);
    let mut valid = Vec::with_capacity(plane);
    for m in &means {
        if m[0] <= floor || m[0] <= 0.0 {
            values.push(ScalarMap::UNDEFINED);
            valid.push(false);
        } else {
            values.push((m[1] * m[1] + m[2] * m[2] + m[3] * m[3]).sqrt() / m[0]);
            valid.push(true);
        }
    }
    ScalarMap::new(s.height, s.width, values, "dop")?.with_validity(valid)
}

/// Depolarization image `1/max(DOP, DOP_FLOOR)`.
pub fn inverse_dop(dop: &ScalarMap) -> ScalarMap {
    let values = dop
        .values
        .iter()
        .zip(&dop.valid)
        .map(|(d, ok)| if *ok { 1.0 / d.max(DOP_FLOOR) } else { ScalarMap::UNDEFINED })
        .collect();
    ScalarMap {
        height: dop.height,
        width: dop.width,
        values,
        valid: dop.valid.clone(),
        name: "inverse_dop".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::{Complex32, Complex64};

    fn one_pixel(fields: &[(Complex32, Complex32)]) -> SpeckleStack {
        let data = fields.iter().flat_map(|(a, b)| [*a, *b]).collect();
        SpeckleStack::complex(Shape::new(fields.len(), 2, 1, 1), data).unwrap()
    }

    #[test]
    fn amplitude_of_three_four() {
        let st = SpeckleStack::complex(
            Shape::new(2, 1, 1, 1),
            vec![Complex32::new(3.0, 4.0), Complex32::new(0.0, 0.0)],
        )
        .unwrap();
        assert_eq!(amplitudes(&st).unwrap().real_data().unwrap(), &[5.0, 0.0]);
        assert_eq!(intensities(&st).unwrap().real_data().unwrap(), &[25.0, 0.0]);
    }

    #[test]
    fn amplitude_of_nonnegative_reals_is_identity() {
        let vals = [0.0f32, 0.25, 1.5, 7.0];
        let st = SpeckleStack::complex(
            Shape::new(4, 1, 1, 1),
            vals.iter().map(|v| Complex32::new(*v, 0.0)).collect(),
        )
        .unwrap();
        assert_eq!(amplitudes(&st).unwrap().real_data().unwrap(), &vals);
    }

    #[test]
    fn real_input_rejected() {
        let st = SpeckleStack::real(Shape::new(2, 2, 1, 1), vec![1.0; 4]).unwrap();
        assert!(amplitudes(&st).is_err());
        assert!(to_stokes(&st).is_err());
    }

    #[test]
    fn stokes_anchors() {
        let one = Complex32::new(1.0, 0.0);
        let zero = Complex32::new(0.0, 0.0);
        let i = Complex32::new(0.0, 1.0);
        let st = to_stokes(&one_pixel(&[(one, zero), (one, i)])).unwrap();
        assert_eq!(st.real_data().unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 2.0]);
        assert_eq!(st.channel_names(), &["S0", "S1", "S2", "S3"]);
    }

    #[test]
    fn stokes_needs_two_channels() {
        let st = SpeckleStack::complex(Shape::new(2, 4, 1, 1), vec![Complex32::new(1.0, 0.0); 8]).unwrap();
        assert!(matches!(to_stokes(&st), Err(Error::Precondition(_))));
    }

    #[test]
    fn dop_anchors() {
        let c = SpeckleStack::real(Shape::new(3, 4, 1, 1), [2.0, 0.0, 0.0, 2.0].repeat(3)).unwrap();
        assert_eq!(temporal_dop(&c).unwrap().values, vec![1.0]);
        let cancel = SpeckleStack::real(
            Shape::new(2, 4, 1, 1),
            vec![1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(temporal_dop(&cancel).unwrap().values, vec![0.0]);
        let dark = SpeckleStack::real(Shape::new(2, 4, 1, 1), vec![0.0; 8]).unwrap();
        let m = temporal_dop(&dark).unwrap();
        assert!(!m.valid[0]);
        assert!(temporal_dop(&SpeckleStack::real(Shape::new(2, 3, 1, 1), vec![1.0; 6]).unwrap()).is_err());
    }

    #[test]
    fn inverse_dop_floor() {
        let m = ScalarMap::new(1, 4, vec![1.0, 0.5, 0.0, 0.2], "dop")
            .unwrap()
            .with_validity(vec![true, true, true, false])
            .unwrap();
        let inv = inverse_dop(&m);
        assert_eq!(&inv.values[..3], &[1.0, 2.0, 1000.0]);
        assert!(!inv.valid[3]);
        assert_eq!(inv.values[3], ScalarMap::UNDEFINED);
    }

    #[test]
    fn single_sample_is_fully_polarized() {
        let sv = StokesVector::from_fields(Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
        let lhs = sv.s0 * sv.s0;
        let rhs = sv.s1 * sv.s1 + sv.s2 * sv.s2 + sv.s3 * sv.s3;
        assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        assert!((sv.dop().unwrap() - 1.0).abs() < 1e-12);
    }
}
