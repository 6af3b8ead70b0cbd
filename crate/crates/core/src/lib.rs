//! Multivariate speckle contrast for coherent image time series.
//!
//! A [`SpeckleStack`] holds `N` frames of `p` co-registered channels. The
//! [`scan`] module turns it into per-pixel maps of a multivariate coefficient
//! of variation ([`McvKind`]) or its activity counterpart `1/γ²`, estimated
//! either over time at each pixel or over a spatial window of one frame.
//! [`polarimetry`] converts complex dual-pol fields into amplitudes or Stokes
//! vectors and computes the temporal degree of polarization, [`simulator`]
//! generates synthetic stacks with known ground truth and [`analysis`] scores
//! maps against it.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod mcv;
pub mod polarimetry;
pub mod scan;
pub mod simulator;
pub mod stack;

pub use error::{Error, Result};
pub use mcv::{mcv, vmai, McvKind, Normalization, PixelStats, Undefined};
pub use scan::{compute_map, compute_maps, compute_vmai_map, EstimationMode, ScanOptions, VmaiMap};
pub use simulator::{simulate, Scenario};
pub use stack::{read_map, read_stack, write_map, write_stack, ScalarMap, Shape, SpeckleStack, StackKind};
