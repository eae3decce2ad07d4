use serde::{Deserialize, Serialize};

use super::QsdVector;
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::model::BirthDeathModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOptions {
    /// Max abs difference between the conditioned laws on two step sizes.
    pub tol: f64,
    pub max_halvings: usize,
    /// Largest tolerated ratio of leaked to surviving mass.
    pub max_leak: f64,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_halvings: 14,
            max_leak: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOutcome {
    /// Law at time `t` conditioned on survival. Its `truncation_mass` is the
    /// leaked mass relative to the surviving mass.
    pub law: QsdVector,
    /// Unconditioned mass absorbed at 0 by time `t`.
    pub absorbed: f64,
    /// Unconditioned mass lost through the boundary above `m`.
    pub leaked: f64,
    pub steps: usize,
}

pub fn conditioned_semigroup(
    model: &BirthDeathModel,
    mu0: &EmpiricalMeasure,
    t: f64,
    m: usize,
) -> Result<SemigroupOutcome> {
    conditioned_semigroup_with(model, mu0, t, m, &SemigroupOptions::default())
}

/// `P_mu0(X_t in . | t < T_0)` from the forward equation on `0..=m`, with
/// killing past `m`.
///
/// Fixed-step RK4; the step count doubles until two consecutive grids give
/// conditioned laws within `tol` of each other.
pub fn conditioned_semigroup_with(
    model: &BirthDeathModel,
    mu0: &EmpiricalMeasure,
    t: f64,
    m: usize,
    opts: &SemigroupOptions,
) -> Result<SemigroupOutcome> {
    model.require_valid()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time must be finite and nonnegative, got {t}")));
    }
    if m < 1 {
        return Err(Error::InvalidInput("truncation M must be positive".into()));
    }
    if mu0.max_state().is_some_and(|s| s > m as u64) {
        return Err(Error::InvalidInput(format!(
            "initial law has mass above the truncation M = {m}"
        )));
    }
    let p0 = mu0.to_dense(m);
    if t == 0.0 {
        return Ok(SemigroupOutcome {
            law: QsdVector {
                weights: p0,
                x: None,
                truncation_mass: 0.0,
            },
            absorbed: 0.0,
            leaked: 0.0,
            steps: 0,
        });
    }
    let gen = ForwardGenerator::new(model, m)?;
    let h0 = 1.0 / gen.max_exit_rate;
    let mut steps = ((t / h0).ceil() as usize).max(1);
    let mut prev = gen.evolve(&p0, t, steps);
    let mut halvings = 0;
    loop {
        steps *= 2;
        halvings += 1;
        let next = gen.evolve(&p0, t, steps);
        let diff = conditioned(&prev.0)
            .iter()
            .zip(conditioned(&next.0))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = next;
        if diff <= opts.tol {
            break;
        }
        if halvings >= opts.max_halvings {
            return Err(Error::NonConvergence { iterations: halvings });
        }
    }
    let (p, absorbed, leaked) = prev;
    let surviving: f64 = p.iter().sum();
    if !(surviving > 0.0) {
        return Err(Error::Overflow("surviving mass vanished".into()));
    }
    let leak_ratio = leaked / surviving;
    if leak_ratio > opts.max_leak {
        return Err(Error::LeakedMass {
            leaked: leak_ratio,
            threshold: opts.max_leak,
        });
    }
    Ok(SemigroupOutcome {
        law: QsdVector {
            weights: conditioned(&p),
            x: None,
            truncation_mass: leak_ratio,
        },
        absorbed,
        leaked,
        steps,
    })
}

fn conditioned(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().map(|x| x.max(0.0)).sum();
    p.iter().map(|x| x.max(0.0) / s).collect()
}

struct ForwardGenerator {
    b: Vec<f64>,
    d: Vec<f64>,
    max_exit_rate: f64,
}

impl ForwardGenerator {
    fn new(model: &BirthDeathModel, m: usize) -> Result<Self> {
        let mut b = Vec::with_capacity(m);
        let mut d = Vec::with_capacity(m);
        for i in 1..=m as u64 {
            let (bi, di) = model.rates(i)?;
            b.push(bi);
            d.push(di);
        }
        let max_exit_rate = b.iter().zip(&d).map(|(x, y)| x + y).fold(0.0, f64::max);
        Ok(Self { b, d, max_exit_rate })
    }

    /// Time derivative of `(p_1..p_m, absorbed, leaked)`.
    fn rhs(&self, p: &[f64], out: &mut [f64]) {
        let m = self.b.len();
        for k in 0..m {
            let mut v = -(self.b[k] + self.d[k]) * p[k];
            if k > 0 {
                v += self.b[k - 1] * p[k - 1];
            }
            if k + 1 < m {
                v += self.d[k + 1] * p[k + 1];
            }
            out[k] = v;
        }
        out[m] = self.d[0] * p[0];
        out[m + 1] = self.b[m - 1] * p[m - 1];
    }

    fn evolve(&self, p0: &[f64], t: f64, steps: usize) -> (Vec<f64>, f64, f64) {
        let m = self.b.len();
        let h = t / steps as f64;
        let mut y = p0.to_vec();
        y.extend([0.0, 0.0]);
        let n = y.len();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        for _ in 0..steps {
            self.rhs(&y, &mut k1);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k1[i];
            }
            self.rhs(&tmp, &mut k2);
            for i in 0..n {
                tmp[i] = y[i] + 0.5 * h * k2[i];
            }
            self.rhs(&tmp, &mut k3);
            for i in 0..n {
                tmp[i] = y[i] + h * k3[i];
            }
            self.rhs(&tmp, &mut k4);
            for i in 0..n {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        let leaked = y[m + 1];
        let absorbed = y[m];
        y.truncate(m);
        (y, absorbed, leaked)
    }
}
