//! Deterministic computations on a birth-and-death model: the orthogonal
//! polynomial recursion, the decay parameter, the QSD family, the
//! expected-absorption-time series, Lyapunov certificates and truncated
//! matrix references.
//!
//! `Q_n(x)` grows super-exponentially in `n`, so nothing here forms it
//! directly. The recursion runs on the ratios `Q_{n+1}(x) / Q_n(x)` and
//! every product of rates is accumulated in log space.

mod lyapunov;
mod oracle;
mod recursion;
mod semigroup;

use serde::{Deserialize, Serialize};

pub use lyapunov::{check_lyapunov, fit_lyapunov_constant, generator_apply, LyapunovCertificate, LyapunovFunction};
pub use oracle::{truncated_decay_oracle, truncated_decay_oracle_with, DecayOracle, OracleOptions};
pub use recursion::{
    ln_pi_weights, pi_weights, q_ratios, qsd_family, s_diagnostic, xi1, xi1_two_level, xi1_with,
    RatioSequence, SDiagnostic, SpectralResult, Trend, TwoLevel, Xi1Options,
};
pub use semigroup::{conditioned_semigroup, conditioned_semigroup_with, SemigroupOptions, SemigroupOutcome};

use crate::error::Result;
use crate::measure::EmpiricalMeasure;

/// A probability vector on states `1..=weights.len()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QsdVector {
    /// `weights[k]` is the mass of state `k + 1`.
    pub weights: Vec<f64>,
    /// Spectral parameter the vector was built from, when there is one.
    pub x: Option<f64>,
    /// Mass missing before renormalisation: the tail beyond the truncation
    /// for the QSD family, mass leaked through the boundary for the
    /// semigroup.
    pub truncation_mass: f64,
}

impl QsdVector {
    pub fn weight(&self, state: u64) -> f64 {
        match state {
            0 => 0.0,
            s => self.weights.get(s as usize - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn to_measure(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::from_dense(&self.weights)
    }

    /// Write `index,weight` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "weight"])?;
        for (k, p) in self.weights.iter().enumerate() {
            w.write_record([(k + 1).to_string(), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
