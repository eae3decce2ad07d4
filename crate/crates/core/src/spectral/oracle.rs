use serde::{Deserialize, Serialize};

use super::QsdVector;
use crate::error::{Error, Result};
use crate::model::BirthDeathModel;
use crate::numeric::normalize_ln;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub max_iter: usize,
    /// Relative change of the eigenvalue estimate that ends the iteration.
    pub tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-14,
        }
    }
}

/// Principal eigenpair of the generator restricted to `1..=m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayOracle {
    pub m: usize,
    /// Smallest eigenvalue of minus the sub-generator. Decreases towards the
    /// decay parameter as `m` grows.
    pub xi1_upper: f64,
    /// Positive left eigenvector normalised to a probability vector.
    pub qsd: QsdVector,
    pub iterations: usize,
}

pub fn truncated_decay_oracle(model: &BirthDeathModel, m: usize) -> Result<DecayOracle> {
    truncated_decay_oracle_with(model, m, &OracleOptions::default())
}

/// Inverse power iteration on the symmetrised sub-generator.
///
/// With `D = diag(pi)` the matrix `S = D^{1/2} (-A) D^{-1/2}` is symmetric
/// tridiagonal with diagonal `b_i + d_i` and off-diagonal
/// `-sqrt(b_i d_{i+1})`. Its eigenvector `u` maps back to the left
/// eigenvector `v = D^{1/2} u` of `-A`, formed in log space.
pub fn truncated_decay_oracle_with(
    model: &BirthDeathModel,
    m: usize,
    opts: &OracleOptions,
) -> Result<DecayOracle> {
    model.require_valid()?;
    if m < 2 {
        return Err(Error::InvalidInput("truncation M must be at least 2".into()));
    }
    let mut b = Vec::with_capacity(m);
    let mut d = Vec::with_capacity(m + 1);
    for i in 1..=m as u64 {
        let (bi, di) = model.rates(i)?;
        b.push(bi);
        d.push(di);
    }
    let diag: Vec<f64> = b.iter().zip(&d).map(|(x, y)| x + y).collect();
    let off: Vec<f64> = (0..m - 1).map(|k| (b[k] * d[k + 1]).sqrt()).collect();

    let mut u = vec![1.0 / (m as f64).sqrt(); m];
    let mut w = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut lambda = rayleigh(&diag, &off, &u);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        solve_tridiagonal(&diag, &off, &u, &mut w, &mut scratch);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Overflow("inverse iteration".into()));
        }
        let mut delta: f64 = 0.0;
        for (ui, wi) in u.iter_mut().zip(&w) {
            let next = wi / norm;
            delta = delta.max((next - *ui).abs());
            *ui = next;
        }
        let next = rayleigh(&diag, &off, &u);
        let change = (next - lambda).abs();
        lambda = next;
        if change <= opts.tol * lambda.abs() && delta <= 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations });
    }

    let mut ln_pi = 0.0;
    let mut ln_v = Vec::with_capacity(m);
    for k in 0..m {
        if k > 0 {
            ln_pi += b[k - 1].ln() - d[k].ln();
        }
        let uk = u[k].abs();
        ln_v.push(if uk > 0.0 { uk.ln() + 0.5 * ln_pi } else { f64::NEG_INFINITY });
    }
    Ok(DecayOracle {
        m,
        xi1_upper: lambda,
        qsd: QsdVector {
            weights: normalize_ln(&ln_v),
            x: Some(lambda),
            truncation_mass: 0.0,
        },
        iterations,
    })
}

fn rayleigh(diag: &[f64], off: &[f64], u: &[f64]) -> f64 {
    let n = diag.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let mut su = diag[i] * u[i];
        if i > 0 {
            su -= off[i - 1] * u[i - 1];
        }
        if i + 1 < n {
            su -= off[i] * u[i + 1];
        }
        num += u[i] * su;
        den += u[i] * u[i];
    }
    num / den
}

/// Thomas algorithm for the symmetric tridiagonal system with diagonal
/// `diag` and off-diagonal `-off`. The matrix is positive definite, so no
/// pivoting is needed.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64], out: &mut [f64], c: &mut [f64]) {
    let n = diag.len();
    let mut denom = diag[0];
    c[0] = if n > 1 { -off[0] / denom } else { 0.0 };
    out[0] = rhs[0] / denom;
    for i in 1..n {
        let lower = -off[i - 1];
        denom = diag[i] - lower * c[i - 1];
        c[i] = if i + 1 < n { -off[i] / denom } else { 0.0 };
        out[i] = (rhs[i] - lower * out[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        out[i] -= c[i] * out[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear, logistic};

    #[test]
    fn two_by_two_matches_quadratic_formula() {
        let m = logistic(2.0, 1.0, 1.0);
        let (b1, d1) = m.rates(1).unwrap();
        let (b2, d2) = m.rates(2).unwrap();
        let (a1, a2) = (b1 + d1, b2 + d2);
        let closed = 0.5 * (a1 + a2 - ((a1 - a2).powi(2) + 4.0 * b1 * d2).sqrt());
        let o = truncated_decay_oracle(&m, 2).unwrap();
        assert!((o.xi1_upper - closed).abs() < 1e-12, "{} vs {closed}", o.xi1_upper);
        // Left eigenvector of [[-a1, b1], [d2, -a2]]: v1 (a1 - l) = v2 d2.
        let v = &o.qsd.weights;
        assert!((v[0] * (a1 - closed) - v[1] * d2).abs() < 1e-12);
    }

    #[test]
    fn linear_reference() {
        let o = truncated_decay_oracle(&linear(1.0, 2.0), 400).unwrap();
        assert!((o.xi1_upper - 1.0).abs() < 1e-4);
        for j in 1..=15u64 {
            assert!((o.qsd.weight(j) - 0.5f64.powi(j as i32)).abs() < 1e-4);
        }
    }

    #[test]
    fn logistic_stable_across_truncations() {
        let m = logistic(2.0, 1.0, 1.0);
        let a = truncated_decay_oracle(&m, 200).unwrap();
        let b = truncated_decay_oracle(&m, 400).unwrap();
        assert!((a.xi1_upper - b.xi1_upper).abs() < 1e-8);
        for j in 1..=200u64 {
            assert!((a.qsd.weight(j) - b.qsd.weight(j)).abs() < 1e-8);
        }
    }

    #[test]
    fn thomas_solves_small_system() {
        let diag = [4.0, 5.0, 6.0];
        let off = [1.0, 2.0];
        let x = [1.0, -2.0, 0.5];
        let rhs = [
            4.0 * x[0] - 1.0 * x[1],
            -x[0] + 5.0 * x[1] - 2.0 * x[2],
            -2.0 * x[1] + 6.0 * x[2],
        ];
        let mut out = [0.0; 3];
        let mut c = [0.0; 3];
        solve_tridiagonal(&diag, &off, &rhs, &mut out, &mut c);
        for k in 0..3 {
            assert!((out[k] - x[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_tiny_truncation() {
        assert!(truncated_decay_oracle(&linear(1.0, 2.0), 1).is_err());
    }
}
