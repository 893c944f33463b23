//! Multistatic UAV-borne OFDM radar toolkit.
//!
//! `sarkit` simulates a transmitter and any number of monostatic or bistatic
//! receivers flying over a point-target scene, injects the clock and
//! localization errors that appear between unsynchronized radar nodes, and
//! runs the coherent receiver chain:
//!
//! 1. OFDM demodulation and spectral division by the known code symbols,
//! 2. internal-delay calibration (monostatic) or division by the sidelink
//!    reference received over the direct transmitter-receiver path (bistatic),
//! 3. range compression,
//! 4. time-domain backprojection and image combination,
//! 5. coherence and resolution metrics.
//!
//! The crate is organized one module per stage; [`pipeline`] strings them
//! together and [`cli`] exposes the same runners through the `sarkit` binary.
//!
//! ```
//! use sarkit::waveform::{generate_code, generate_symbol, OfdmParams};
//! use sarkit::rangeproc::{demodulate, spectral_divide, strip_cyclic_prefix};
//!
//! let params = OfdmParams::table1();
//! let code = generate_code(&params, 7);
//! let tx = generate_symbol(&params, &code).unwrap();
//! let body = strip_cyclic_prefix(&tx, &params).unwrap();
//! let d = spectral_divide(&demodulate(&body, &params).unwrap(), &code).unwrap();
//! assert!(d.values.iter().all(|v| (v - 1.0).norm() < 1e-9));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod dsp;
mod error;
pub mod imaging;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod rangeproc;
pub mod rng;
pub mod scenario;
pub mod scene;
pub mod signal;
pub mod trigger;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use signal::ComplexSignal;

/// Speed of light in vacuum [m/s].
pub const C0: f64 = 299_792_458.0;

/// Three-dimensional Cartesian position or direction (ENU, meters).
pub type Vec3 = [f64; 3];

pub(crate) mod vec3 {
    use super::Vec3;

    pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn add(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn scale(a: Vec3, s: f64) -> Vec3 {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    pub fn dot(a: Vec3, b: Vec3) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    pub fn norm(a: Vec3) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn dist(a: Vec3, b: Vec3) -> f64 {
        norm(sub(a, b))
    }

    pub fn is_finite(a: Vec3) -> bool {
        a.iter().all(|v| v.is_finite())
    }
}
