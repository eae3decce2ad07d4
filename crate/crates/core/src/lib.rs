//! Quasi-stationary distributions of birth-and-death processes absorbed at 0.
//!
//! - [`model`]: rate sequences, built-in families, validation.
//! - [`spectral`]: decay parameter, the QSD family, Lyapunov certificates and
//!   truncated-matrix references.
//! - [`simulate`]: exact simulation of the chain and of the Fleming-Viot
//!   particle system.
//! - [`estimate`]: empirical measures, distances and bias experiments.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod measure;
pub mod model;
mod numeric;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use estimate::{
    bias_experiment, build_reference, decay_fit, mean_measure, BiasConfig, BiasReport, BiasRow,
    DecayFit, DistanceNorm, Estimator, ReferenceKind,
};
pub use measure::{l1_distance, tv_distance, EmpiricalMeasure};
pub use model::{absorption_series_partial, named_model, validate, BirthDeathModel, Family, Params, TailRule};
pub use simulate::{fv_run, fv_step, simulate_bd, stream_rng, FvConfig, FvRun, ParticleSystem, PathEvent, SimRng};
pub use spectral::{
    check_lyapunov, conditioned_semigroup, generator_apply, pi_weights, q_ratios, qsd_family, s_diagnostic,
    truncated_decay_oracle, xi1, LyapunovCertificate, LyapunovFunction, QsdVector, RatioSequence,
    SpectralResult,
};

/// Crate version, embedded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
