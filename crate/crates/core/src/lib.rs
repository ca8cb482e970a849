//! Constellation-independent range estimation for payload-based OFDM
//! sensing.
//!
//! The crate models the post-FFT OFDM sensing channel, designs three
//! receive filters (matched, reciprocal, and the region-of-interest
//! mismatched filter), estimates off-grid target delays with a matrix
//! pencil, and provides the closed-form MSE / Cramér–Rao expressions used
//! to validate Monte Carlo runs.
//!
//! ```
//! use isac_core::constellation::{make_constellation, ConstellationKind};
//! use isac_core::filterbank::{roi_mmf, ShiftSet};
//! use isac_core::constellation::draw_block;
//! use rand::SeedableRng;
//!
//! let c = make_constellation(&ConstellationKind::Qam16).unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let x = draw_block(&c, 256, &mut rng, true);
//! let w = roi_mmf(&x, &ShiftSet::new(50, 256).unwrap(), 0.1).unwrap();
//! let d = w.diagnostics.unwrap();
//! assert!(d.rho_s > 0.0 && d.rho_s < 1.0);
//! ```

pub mod config;
pub mod constellation;
pub mod dft;
pub mod error;
pub mod estimator;
pub mod filterbank;
pub mod framefile;
pub mod harness;
pub mod pipeline;
pub mod signal;
pub mod theory;

pub use error::{Error, ErrorClass, Result};
pub use num_complex::Complex64;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
