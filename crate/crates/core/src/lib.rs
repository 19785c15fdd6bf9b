//! Semi-supervised recovery of quasi-periodic pulse signals.
//!
//! This crate is `no_std` (with `alloc`) and holds every numerical piece of
//! the pipeline: band-limited spectral scoring of pulse waveforms, a small
//! reverse-mode differentiation tape, the temporal-convolution pulse
//! encoder, the supervised and consistency losses, the SNR-ranked
//! curriculum for pseudo-labels, a synthetic clip generator, and the
//! training loop itself. File formats, run directories and the command
//! line live in the companion `pulse` crate.
//!
//! ```
//! use pulse_core::signal::{hr_class_of, BandConfig, BvpSignal};
//!
//! let fps = 30.0;
//! let samples = (0..300)
//!     .map(|t| libm::sin(2.0 * core::f64::consts::PI * 1.5 * t as f64 / fps))
//!     .collect();
//! let bvp = BvpSignal::new(samples, fps).unwrap();
//! let hr = hr_class_of(&bvp, &BandConfig::default()).unwrap();
//! assert_eq!(hr.bpm, 90);
//! ```
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod augment;
pub mod autodiff;
pub mod curriculum;
mod error;
pub mod losses;
mod math;
pub mod model;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
