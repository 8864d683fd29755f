//! Exact finite-size generators of the open ASEP and its dual shock
//! exclusion process, reverse-duality checks and Monte Carlo.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod asep;
pub mod combinatorics;
pub mod duality;
pub mod eigen;
pub mod error;
pub mod expm;
pub mod lattice;
pub mod limits;
pub mod mc;
pub mod measures;
pub mod scalar;
pub mod shock;
pub mod sparse;
pub mod xxz;

pub use asep::{
    build_h, build_w, kappa, kappa_pair, manifold_residuals, solve_manifold, BoundaryParametrization, ManifoldCheck,
    ManifoldSpec, OmegaChoice, Rates, Sign,
};
pub use combinatorics::DualStateIndex;
pub use duality::{
    evolve_and_compare, invariant_measure, spectrum_containment, verify_projection_lemma, verify_reverse_duality,
    DualityReport,
};
pub use error::{Error, Result};
pub use expm::{expm_action, Evolver};
pub use lattice::{Configuration, Lattice, TwoVector};
pub use limits::Limits;
pub use mc::{EnsembleStats, SimOptions, Trajectory};
pub use measures::{build_duality_matrices, shock_measure_vector, DualityMatrices};
pub use scalar::Scalar;
pub use shock::{build_q, rw_propagator, shock_rates, ShockPositions, ShockProfile, ShockRates};
pub use sparse::{Convention, GeneratorBuilder, SparseGenerator};
pub use xxz::{xxz_from_rates, xxz_residual, XXZParams};

pub type RatesF64 = Rates<f64>;
pub type ParametrizationF64 = BoundaryParametrization<f64>;
pub type GeneratorF64 = SparseGenerator<f64>;
pub type ProfileF64 = ShockProfile<f64>;
pub type ShockRatesF64 = ShockRates<f64>;
pub type RatesF32 = Rates<f32>;
pub type GeneratorF32 = SparseGenerator<f32>;
