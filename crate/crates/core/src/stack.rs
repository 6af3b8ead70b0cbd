//! In-memory image stacks and maps, and their on-disk representation.
//!
//! A stack is a dense `[time, channel, y, x]` array of `f32` samples, real
//! or complex. On disk it is a JSON header plus a raw little-endian file:
//!
//! ```text
//! { "format": "specklestack/1", "kind": "real", "shape": [N, p, H, W],
//!   "order": "tcyx", "dtype": "f32le", "channels": [...], "data": "<name>.raw" }
//! ```
//!
//! Complex samples are stored as interleaved `(re, im)` pairs. Maps use the
//! same format with shape `[1, 1, H, W]`; their validity mask is a second
//! map stored next to them as `<name>.valid.json`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "specklestack/1";
pub const ORDER_TAG: &str = "tcyx";
pub const DTYPE_TAG: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackKind {
    Real,
    Complex,
}

/// Dimensions of a stack, in `t -> c -> y -> x` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n_time: usize,
    pub n_chan: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(n_time: usize, n_chan: usize, height: usize, width: usize) -> Self {
        Shape {
            n_time,
            n_chan,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.n_time * self.n_chan * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Flat sample index of `(t, c, y, x)`.
    #[inline]
    pub fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.n_chan + c) * self.height + y) * self.width + x
    }

    fn as_array(&self) -> [usize; 4] {
        [self.n_time, self.n_chan, self.height, self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Real(Vec<f32>),
    Complex(Vec<Complex32>),
}

impl Samples {
    fn len(&self) -> usize {
        match self {
            Samples::Real(v) => v.len(),
            Samples::Complex(v) => v.len(),
        }
    }
}

/// An immutable time series of (possibly multi-channel) coherent images.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleStack {
    shape: Shape,
    samples: Samples,
    channel_names: Vec<String>,
}

fn default_channel_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("c{c}")).collect()
}

impl SpeckleStack {
    pub fn new(shape: Shape, samples: Samples, channel_names: Vec<String>) -> Result<Self> {
        if shape.n_chan == 0 || shape.n_time == 0 || shape.height == 0 || shape.width == 0 {
            return Err(Error::Shape(format!(
                "all dimensions must be positive, got {:?}",
                shape.as_array()
            )));
        }
        if samples.len() != shape.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} samples, got {}",
                shape.as_array(),
                shape.len(),
                samples.len()
            )));
        }
        let channel_names = if channel_names.is_empty() {
            default_channel_names(shape.n_chan)
        } else if channel_names.len() != shape.n_chan {
            return Err(Error::Shape(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                shape.n_chan
            )));
        } else {
            channel_names
        };
        let bad = match &samples {
            Samples::Real(v) => v.iter().position(|s| !s.is_finite()),
            Samples::Complex(v) => v.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()),
        };
        if let Some(index) = bad {
            return Err(Error::NonFinite { index });
        }
        Ok(SpeckleStack {
            shape,
            samples,
            channel_names,
        })
    }

    pub fn real(shape: Shape, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, Samples::Real(data), Vec::new())
    }

    pub fn complex(shape: Shape, data: Vec<Complex32>) -> Result<Self> {
        Self::new(shape, Samples::Complex(data), Vec::new())
    }

    pub fn with_channel_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.shape.n_chan {
            return Err(Error::Shape(format!(
                "{} channel names for {} channels",
                names.len(),
                self.shape.n_chan
            )));
        }
        self.channel_names = names;
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn kind(&self) -> StackKind {
        match self.samples {
            Samples::Real(_) => StackKind::Real,
            Samples::Complex(_) => StackKind::Complex,
        }
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn real_data(&self) -> Option<&[f32]> {
        match &self.samples {
            Samples::Real(v) => Some(v),
            Samples::Complex(_) => None,
        }
    }

    pub fn complex_data(&self) -> Option<&[Complex32]> {
        match &self.samples {
            Samples::Complex(v) => Some(v),
            Samples::Real(_) => None,
        }
    }

    pub(crate) fn require_real(&self, what: &str) -> Result<&[f32]> {
        self.real_data()
            .ok_or_else(|| Error::precondition(format!("{what} needs a real stack")))
    }

    pub(crate) fn require_complex(&self, what: &str) -> Result<&[Complex32]> {
        self.complex_data()
            .ok_or_else(|| Error::precondition(format!("{what} needs a complex stack")))
    }

    /// Largest sample magnitude in the stack (0 for an all-zero stack).
    pub fn max_magnitude(&self) -> f64 {
        match &self.samples {
            Samples::Real(v) => v.iter().fold(0.0f64, |m, s| m.max(s.abs() as f64)),
            Samples::Complex(v) => v.iter().fold(0.0f64, |m, s| m.max(s.norm() as f64)),
        }
    }

    /// Extract one channel as a single-channel stack.
    pub fn slice_channel(&self, chan: usize) -> Result<SpeckleStack> {
        let s = self.shape;
        if chan >= s.n_chan {
            return Err(Error::OutOfRange {
                index: chan,
                len: s.n_chan,
            });
        }
        let plane = s.pixels();
        let out_shape = Shape::new(s.n_time, 1, s.height, s.width);
        let pick = |t: usize| {
            let start = (t * s.n_chan + chan) * plane;
            start..start + plane
        };
        let samples = match &self.samples {
            Samples::Real(v) => {
                Samples::Real((0..s.n_time).flat_map(|t| v[pick(t)].iter().copied()).collect())
            }
            Samples::Complex(v) => {
                Samples::Complex((0..s.n_time).flat_map(|t| v[pick(t)].iter().copied()).collect())
            }
        };
        SpeckleStack::new(out_shape, samples, vec![self.channel_names[chan].clone()])
    }

    /// Concatenate stacks along the channel axis. All parts must agree in
    /// kind, time length and image size.
    pub fn stack_channels(parts: &[SpeckleStack]) -> Result<SpeckleStack> {
        let first = parts
            .first()
            .ok_or_else(|| Error::precondition("no stacks to concatenate"))?;
        let s0 = first.shape;
        for p in parts {
            let s = p.shape;
            if p.kind() != first.kind()
                || s.n_time != s0.n_time
                || s.height != s0.height
                || s.width != s0.width
            {
                return Err(Error::Shape("stacks disagree in kind or extent".into()));
            }
        }
        let n_chan: usize = parts.iter().map(|p| p.shape.n_chan).sum();
        let shape = Shape::new(s0.n_time, n_chan, s0.height, s0.width);
        let plane = s0.pixels();
        let names = parts.iter().flat_map(|p| p.channel_names.clone()).collect();
        let samples = match first.kind() {
            StackKind::Real => {
                let mut out = Vec::with_capacity(shape.len());
                for t in 0..s0.n_time {
                    for p in parts {
                        let v = p.real_data().unwrap();
                        let start = t * p.shape.n_chan * plane;
                        out.extend_from_slice(&v[start..start + p.shape.n_chan * plane]);
                    }
                }
                Samples::Real(out)
            }
            StackKind::Complex => {
                let mut out = Vec::with_capacity(shape.len());
                for t in 0..s0.n_time {
                    for p in parts {
                        let v = p.complex_data().unwrap();
                        let start = t * p.shape.n_chan * plane;
                        out.extend_from_slice(&v[start..start + p.shape.n_chan * plane]);
                    }
                }
                Samples::Complex(out)
            }
        };
        SpeckleStack::new(shape, samples, names)
    }

    /// Average `k` consecutive frames of a real stack into one, modelling a
    /// detector that integrates intensity over `k` field snapshots. Trailing
    /// frames that do not fill a whole group are dropped.
    pub fn integrate_time(&self, k: usize) -> Result<SpeckleStack> {
        let data = self.require_real("time integration")?;
        let s = self.shape;
        if k == 0 || s.n_time / k == 0 {
            return Err(Error::precondition(format!(
                "cannot integrate {} frames in groups of {k}",
                s.n_time
            )));
        }
        let n_out = s.n_time / k;
        let frame = s.n_chan * s.pixels();
        let mut out = vec![0.0f32; n_out * frame];
        for (g, dst) in out.chunks_mut(frame).enumerate() {
            for (i, d) in dst.iter_mut().enumerate() {
                let acc: f64 = (0..k).map(|j| data[(g * k + j) * frame + i] as f64).sum();
                *d = (acc / k as f64) as f32;
            }
        }
        SpeckleStack::new(
            Shape::new(n_out, s.n_chan, s.height, s.width),
            Samples::Real(out),
            self.channel_names.clone(),
        )
    }
}

/// A single H×W float field with a per-pixel validity flag.
///
/// Invalid pixels hold [`ScalarMap::UNDEFINED`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub name: String,
}

impl ScalarMap {
    /// Sentinel stored at undefined pixels. Every derived quantity in this
    /// crate is nonnegative, so a negative sentinel cannot collide.
    pub const UNDEFINED: f64 = -1.0;

    pub fn new(height: usize, width: usize, values: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "{}x{} map needs {} values, got {}",
                height,
                width,
                height * width,
                values.len()
            )));
        }
        Ok(ScalarMap {
            height,
            width,
            valid: vec![true; values.len()],
            values,
            name: name.into(),
        })
    }

    pub fn with_validity(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.values.len() {
            return Err(Error::Shape("validity mask size differs from map".into()));
        }
        for (v, ok) in self.values.iter_mut().zip(&valid) {
            if !ok {
                *v = Self::UNDEFINED;
            }
        }
        self.valid = valid;
        Ok(self)
    }

    pub fn filled(height: usize, width: usize, value: f64, name: impl Into<String>) -> Self {
        ScalarMap {
            height,
            width,
            values: vec![value; height * width],
            valid: vec![true; height * width],
            name: name.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Iterator over `(value)` for valid pixels only.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter_map(|(v, ok)| ok.then_some(*v))
    }

    /// Mean over valid pixels, `None` if there are none.
    pub fn mean_valid(&self) -> Option<f64> {
        let (sum, n) = self
            .valid_values()
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn same_extent(&self, other: &ScalarMap) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// The validity flags as a 0/1 map.
    pub fn validity_map(&self) -> ScalarMap {
        let values = self.valid.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
        ScalarMap {
            height: self.height,
            width: self.width,
            values,
            valid: vec![true; self.len()],
            name: format!("{}.valid", self.name),
        }
    }

    pub fn from_mask(height: usize, width: usize, mask: &[bool], name: impl Into<String>) -> Self {
        let values = mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
        ScalarMap {
            height,
            width,
            values,
            valid: vec![true; height * width],
            name: name.into(),
        }
    }

    /// Interpret the map as a binary mask (nonzero valid pixels are set).
    pub fn to_mask(&self) -> Vec<bool> {
        self.values
            .iter()
            .zip(&self.valid)
            .map(|(v, ok)| *ok && *v != 0.0)
            .collect()
    }

    fn to_stack(&self) -> Result<SpeckleStack> {
        let data = self.values.iter().map(|v| *v as f32).collect();
        SpeckleStack::new(
            Shape::new(1, 1, self.height, self.width),
            Samples::Real(data),
            vec![self.name.clone()],
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StackHeader {
    format: String,
    kind: StackKind,
    shape: Vec<usize>,
    order: String,
    dtype: String,
    channels: Vec<String>,
    data: String,
}

/// Resolve a user-supplied path (`foo`, `foo.json` or `dir/foo.json`) to the
/// header path, raw path and bare file stem.
pub fn artifact_paths(path: &Path) -> (PathBuf, PathBuf, String) {
    let s = path.to_string_lossy();
    let base = s.strip_suffix(".json").unwrap_or(&s).to_string();
    let stem = Path::new(&base)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    (
        PathBuf::from(format!("{base}.json")),
        PathBuf::from(format!("{base}.raw")),
        stem,
    )
}

fn validity_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    let base = s.strip_suffix(".json").unwrap_or(&s);
    PathBuf::from(format!("{base}.valid"))
}

pub fn read_stack(path: &Path) -> Result<SpeckleStack> {
    let (header_path, _, _) = artifact_paths(path);
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let bad = |message: String| Error::Header {
        path: header_path.clone(),
        message,
    };
    let header: StackHeader = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if header.format != FORMAT_TAG {
        return Err(bad(format!("unsupported format {:?}", header.format)));
    }
    if header.order != ORDER_TAG {
        return Err(bad(format!("unsupported order {:?}", header.order)));
    }
    if header.dtype != DTYPE_TAG {
        return Err(bad(format!("unsupported dtype {:?}", header.dtype)));
    }
    let [n_time, n_chan, height, width]: [usize; 4] = header
        .shape
        .as_slice()
        .try_into()
        .map_err(|_| bad(format!("shape must have 4 entries, got {}", header.shape.len())))?;
    let shape = Shape::new(n_time, n_chan, height, width);

    let raw_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let slots = match header.kind {
        StackKind::Real => 1,
        StackKind::Complex => 2,
    };
    let expected = shape.len() * slots * 4;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "{} declares {} bytes but {} holds {}",
            header_path.display(),
            expected,
            raw_path.display(),
            bytes.len()
        )));
    }
    let floats = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let samples = match header.kind {
        StackKind::Real => Samples::Real(floats.collect()),
        StackKind::Complex => {
            let flat: Vec<f32> = floats.collect();
            Samples::Complex(
                flat.chunks_exact(2)
                    .map(|p| Complex32::new(p[0], p[1]))
                    .collect(),
            )
        }
    };
    SpeckleStack::new(shape, samples, header.channels)
}

pub fn write_stack(stack: &SpeckleStack, path: &Path) -> Result<()> {
    let (header_path, raw_path, stem) = artifact_paths(path);
    if let Some(dir) = header_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let header = StackHeader {
        format: FORMAT_TAG.into(),
        kind: stack.kind(),
        shape: stack.shape.as_array().to_vec(),
        order: ORDER_TAG.into(),
        dtype: DTYPE_TAG.into(),
        channels: stack.channel_names.clone(),
        data: format!("{stem}.raw"),
    };
    let mut bytes = Vec::with_capacity(stack.shape.len() * 8);
    match &stack.samples {
        Samples::Real(v) => v.iter().for_each(|s| bytes.extend_from_slice(&s.to_le_bytes())),
        Samples::Complex(v) => v.iter().for_each(|s| {
            bytes.extend_from_slice(&s.re.to_le_bytes());
            bytes.extend_from_slice(&s.im.to_le_bytes());
        }),
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))
}

/// Write a map and its validity sidecar.
pub fn write_map(map: &ScalarMap, path: &Path) -> Result<()> {
    write_stack(&map.to_stack()?, path)?;
    write_stack(&map.validity_map().to_stack()?, &validity_path(path))
}

/// Read a map; a `<name>.valid.json` sidecar, if present, supplies validity.
pub fn read_map(path: &Path) -> Result<ScalarMap> {
    let stack = read_stack(path)?;
    let map = stack_to_map(&stack)?;
    let vpath = validity_path(path);
    let (vheader, _, _) = artifact_paths(&vpath);
    if vheader.exists() {
        let mask = stack_to_map(&read_stack(&vpath)?)?;
        if !mask.same_extent(&map) {
            return Err(Error::Shape("validity sidecar size differs from map".into()));
        }
        return map.with_validity(mask.values.iter().map(|v| *v != 0.0).collect());
    }
    Ok(map)
}

fn stack_to_map(stack: &SpeckleStack) -> Result<ScalarMap> {
    let s = stack.shape();
    if s.n_time != 1 || s.n_chan != 1 {
        return Err(Error::Shape(format!(
            "a map has shape [1,1,H,W], got [{},{},{},{}]",
            s.n_time, s.n_chan, s.height, s.width
        )));
    }
    let data = stack.require_real("a map")?;
    ScalarMap::new(
        s.height,
        s.width,
        data.iter().map(|v| *v as f64).collect(),
        stack.channel_names()[0].clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: Shape) -> SpeckleStack {
        SpeckleStack::real(shape, (0..shape.len()).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn index_order_is_tcyx() {
        let shape = Shape::new(3, 2, 4, 5);
        let st = ramp(shape);
        let data = st.real_data().unwrap();
        assert_eq!(shape.index(2, 1, 3, 4), shape.len() - 1);
        assert_eq!(data[shape.index(1, 0, 2, 3)], ((2 * 4 + 2) * 5 + 3) as f32);
        assert_eq!(shape.index(0, 1, 0, 0), 20);
    }

    #[test]
    fn rejects_non_finite() {
        let err = SpeckleStack::real(Shape::new(2, 1, 1, 1), vec![1.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
        let err = SpeckleStack::complex(
            Shape::new(1, 1, 1, 1),
            vec![Complex32::new(0.0, f32::INFINITY)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 0 }));
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            SpeckleStack::real(Shape::new(2, 1, 2, 2), vec![0.0; 7]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn slice_channel_and_restack() {
        let st = ramp(Shape::new(3, 2, 2, 2));
        let c0 = st.slice_channel(0).unwrap();
        let c1 = st.slice_channel(1).unwrap();
        assert_eq!(c0.shape().n_chan, 1);
        assert_eq!(&c0.real_data().unwrap()[..4], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(&c0.real_data().unwrap()[4..8], &[8.0, 9.0, 10.0, 11.0]);
        assert!(matches!(
            st.slice_channel(2),
            Err(Error::OutOfRange { index: 2, len: 2 })
        ));
        let back = SpeckleStack::stack_channels(&[c0, c1]).unwrap();
        assert_eq!(back, st);
    }

    #[test]
    fn integrate_time_averages_groups() {
        let st = SpeckleStack::real(Shape::new(5, 1, 1, 1), vec![1.0, 3.0, 5.0, 7.0, 100.0]).unwrap();
        let out = st.integrate_time(2).unwrap();
        assert_eq!(out.shape().n_time, 2);
        assert_eq!(out.real_data().unwrap(), &[2.0, 6.0]);
        assert!(st.integrate_time(6).is_err());
    }

    #[test]
    fn artifact_paths_accept_basename_or_header() {
        let (h, r, stem) = artifact_paths(Path::new("out/g_az"));
        assert_eq!(h, PathBuf::from("out/g_az.json"));
        assert_eq!(r, PathBuf::from("out/g_az.raw"));
        assert_eq!(stem, "g_az");
        let (h2, _, _) = artifact_paths(Path::new("out/g_az.json"));
        assert_eq!(h2, h);
    }

    #[test]
    fn raw_sizes_match_layout() {
        let dir = tempfile::tempdir().unwrap();
        let real = SpeckleStack::real(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_stack(&real, &dir.path().join("r")).unwrap();
        assert_eq!(fs::metadata(dir.path().join("r.raw")).unwrap().len(), 16);
        let cplx = SpeckleStack::complex(Shape::new(1, 1, 1, 1), vec![Complex32::new(1.0, -2.0)]).unwrap();
        write_stack(&cplx, &dir.path().join("c")).unwrap();
        let bytes = fs::read(dir.path().join("c.raw")).unwrap();
        assert_eq!(bytes.len(), 8);
        assert_eq!(&bytes[..4], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[4..], &(-2.0f32).to_le_bytes());
    }

    #[test]
    fn reads_hand_written_header() {
        let dir = tempfile::tempdir().unwrap();
        let header = r#"{"format":"specklestack/1","kind":"real","shape":[2,1,1,1],
            "order":"tcyx","dtype":"f32le","channels":["HH"],"data":"s.raw"}"#;
        fs::write(dir.path().join("s.json"), header).unwrap();
        let mut raw = 1.0f32.to_le_bytes().to_vec();
        raw.extend_from_slice(&2.0f32.to_le_bytes());
        fs::write(dir.path().join("s.raw"), raw).unwrap();
        let st = read_stack(&dir.path().join("s.json")).unwrap();
        assert_eq!(st.real_data().unwrap(), &[1.0, 2.0]);
        assert_eq!(st.channel_names(), &["HH".to_string()]);
    }

    #[test]
    fn short_raw_file_is_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let header = r#"{"format":"specklestack/1","kind":"real","shape":[100,1,1,1],
            "order":"tcyx","dtype":"f32le","channels":["a"],"data":"s.raw"}"#;
        fs::write(dir.path().join("s.json"), header).unwrap();
        fs::write(dir.path().join("s.raw"), vec![0u8; 96 * 4]).unwrap();
        assert!(matches!(read_stack(&dir.path().join("s")), Err(Error::Shape(_))));
    }

    #[test]
    fn malformed_header_and_nan_payload() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.json"), "{\"format\": 3}").unwrap();
        assert!(matches!(read_stack(&dir.path().join("bad")), Err(Error::Header { .. })));

        let header = r#"{"format":"specklestack/1","kind":"real","shape":[1,1,1,1],
            "order":"tcyx","dtype":"f32le","channels":["a"],"data":"n.raw"}"#;
        fs::write(dir.path().join("n.json"), header).unwrap();
        fs::write(dir.path().join("n.raw"), f32::NAN.to_le_bytes()).unwrap();
        assert!(matches!(read_stack(&dir.path().join("n")), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn map_round_trip_keeps_validity() {
        let dir = tempfile::tempdir().unwrap();
        let map = ScalarMap::new(2, 2, vec![0.5, 1.5, 2.5, 3.5], "g")
            .unwrap()
            .with_validity(vec![true, false, true, true])
            .unwrap();
        write_map(&map, &dir.path().join("g")).unwrap();
        let back = read_map(&dir.path().join("g.json")).unwrap();
        assert_eq!(back, map);
        assert_eq!(back.values[1], ScalarMap::UNDEFINED);
    }
}
