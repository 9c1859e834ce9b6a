//! Few-photon scattering off quantum emitters side-coupled to a one-dimensional waveguide.
//!
//! The crate covers three complementary descriptions of the same physics:
//!
//! * [`single_photon`]: exact one-photon transmission and reflection of emitter
//!   chains, their poles and the group delay.
//! * [`closed_form`]: analytic two-photon quantities for a pair of two-level emitters,
//!   including the transmitted intensity decomposition and the rectification factor.
//! * [`engine`]: a weak-drive master-equation solver for arbitrary short chains of
//!   two-level and driven three-level emitters, giving inelastic spectra, fluxes and
//!   second-order correlations.
//!
//! [`scenarios`] strings these together into reproducible figure-style runs and
//! [`cli`] exposes them through the `simulate` binary.
//!
//! Units: the reference decay rate is `1`, frequencies are absolute (default resonance
//! `100`), and emitter positions are stored as phases `k0 * x`.

pub mod closed_form;
pub mod cli;
pub mod engine;
pub mod error;
pub mod model;
pub mod numerics;
pub mod scenarios;
pub mod single_photon;

pub use error::{Error, Result};
pub use model::{
    build_232, build_pair, map_pair_to_lambda, DrivenLambdaEmitter, Emitter, EmitterChain,
    Incidence, PairGeometry, PhaseMode, TwoLevelEmitter, UnitsConvention,
};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Crate version, written into output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
