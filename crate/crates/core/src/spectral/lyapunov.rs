use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BirthDeathModel;

/// Candidate Lyapunov functions. All vanish at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LyapunovFunction {
    /// `phi(i) = sqrt(ratio)^i`, with `ratio = d / b` for power-law rates.
    SqrtRatioPower { ratio: f64 },
    /// `phi(i) = base^i`; `base = 2` is the two-power function.
    Power { base: f64 },
    /// Explicit values, `values[i] = phi(i)`, starting at `phi(0)`.
    Table { values: Vec<f64> },
}

impl LyapunovFunction {
    pub fn eval(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return Ok(match self {
                LyapunovFunction::Table { values } => values[0],
                _ => 0.0,
            });
        }
        let v = match self {
            LyapunovFunction::SqrtRatioPower { ratio } => ratio.sqrt().powf(i as f64),
            LyapunovFunction::Power { base } => base.powf(i as f64),
            LyapunovFunction::Table { values } => *values.get(i as usize).ok_or_else(|| {
                Error::InvalidInput(format!("phi table has no value at i = {i}"))
            })?,
        };
        if !v.is_finite() {
            return Err(Error::Overflow(format!("phi({i})")));
        }
        Ok(v)
    }

    /// Largest `i` at which the generator can be applied (needs `phi(i+1)`).
    fn max_checkable(&self) -> Option<u64> {
        match self {
            LyapunovFunction::Table { values } => Some(values.len().saturating_sub(2) as u64),
            _ => None,
        }
    }
}

/// `L phi(i) = b_i (phi(i+1) - phi(i)) + d_i (phi(i-1) - phi(i))`.
pub fn generator_apply(model: &BirthDeathModel, phi: impl Fn(u64) -> f64, i: u64) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidInput("the generator is applied at i >= 1".into()));
    }
    let (b, d) = model.rates(i)?;
    let here = phi(i);
    Ok(b * (phi(i + 1) - here) + d * (phi(i - 1) - here))
}

fn apply(model: &BirthDeathModel, phi: &LyapunovFunction, i: u64) -> Result<(f64, f64)> {
    let (b, d) = model.rates(i)?;
    let here = phi.eval(i)?;
    let up = phi.eval(i + 1)?;
    let down = phi.eval(i - 1)?;
    Ok((b * (up - here) + d * (down - here), here))
}

/// Outcome of checking `L phi(i) <= -lambda1 phi(i) + C` on `1..=i_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub phi: LyapunovFunction,
    pub lambda1: f64,
    pub c: f64,
    pub checked_range: (u64, u64),
    /// `min_i (-L phi(i) - lambda1 phi(i) + C)` over the checked range.
    pub margin: f64,
    /// Where the margin is attained; a violation when the margin is negative.
    pub witness: u64,
    /// `lambda1 > d_1`: usable as a drift certificate for the particle system.
    pub exceeds_d1: bool,
    /// `lambda1 > xi_1`, when a decay-parameter estimate was supplied.
    pub exceeds_xi1: Option<bool>,
    /// Heuristic: `phi` is nondecreasing on the upper half of the range and
    /// strictly larger at its end than at its midpoint.
    pub phi_grows: bool,
}

impl LyapunovCertificate {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }

    /// Inequality holds, `lambda1 > d_1` and `phi` appears to diverge.
    pub fn valid_for_particles(&self) -> bool {
        self.holds() && self.exceeds_d1 && self.phi_grows
    }

    /// `N > lambda1 / (lambda1 - d_1)`, the particle count from which the
    /// drift certificate applies. `None` unless `lambda1 > d_1`.
    pub fn min_particles(&self, d1: f64) -> Option<usize> {
        (self.lambda1 > d1).then(|| (self.lambda1 / (self.lambda1 - d1)).floor() as usize + 1)
    }

    /// `C / (lambda1 - d_1 N / (N - 1))`, the bound on the stationary mean of
    /// `phi` under the `N`-particle empirical measure.
    pub fn moment_bound(&self, d1: f64, n: usize) -> Option<f64> {
        let nf = n as f64;
        let denom = self.lambda1 - d1 * nf / (nf - 1.0);
        (n >= 2 && denom > 0.0).then(|| self.c / denom)
    }
}

fn check_preconditions(phi: &LyapunovFunction, i_max: u64) -> Result<()> {
    if i_max == 0 {
        return Err(Error::InvalidInput("i_max must be at least 1".into()));
    }
    if let Some(top) = phi.max_checkable() {
        if i_max > top {
            return Err(Error::InvalidInput(format!(
                "phi table covers i <= {top} but i_max = {i_max}"
            )));
        }
    }
    if phi.eval(0)? != 0.0 {
        return Err(Error::InvalidInput("phi(0) must be 0".into()));
    }
    for i in 1..=i_max + 1 {
        let v = phi.eval(i)?;
        if !(v > 0.0) {
            return Err(Error::InvalidInput(format!("phi({i}) = {v} is not positive")));
        }
    }
    Ok(())
}

/// Smallest `C >= 0` making the inequality hold on `1..=i_max`.
pub fn fit_lyapunov_constant(
    model: &BirthDeathModel,
    phi: &LyapunovFunction,
    lambda1: f64,
    i_max: u64,
) -> Result<f64> {
    model.require_valid()?;
    check_preconditions(phi, i_max)?;
    let mut c: f64 = 0.0;
    for i in 1..=i_max {
        let (lphi, here) = apply(model, phi, i)?;
        c = c.max(lphi + lambda1 * here);
    }
    Ok(c)
}

pub fn check_lyapunov(
    model: &BirthDeathModel,
    phi: &LyapunovFunction,
    lambda1: f64,
    c: f64,
    i_max: u64,
    xi1: Option<f64>,
) -> Result<LyapunovCertificate> {
    model.require_valid()?;
    if !(c >= 0.0) {
        return Err(Error::InvalidInput("C must be nonnegative".into()));
    }
    check_preconditions(phi, i_max)?;
    let mut margin = f64::INFINITY;
    let mut witness = 1;
    for i in 1..=i_max {
        let (lphi, here) = apply(model, phi, i)?;
        let m = -lphi - lambda1 * here + c;
        if m < margin {
            margin = m;
            witness = i;
        }
    }
    let mid = (i_max / 2).max(1);
    let mut phi_grows = phi.eval(i_max)? > phi.eval(mid)?;
    let mut prev = phi.eval(mid)?;
    for i in mid + 1..=i_max {
        let v = phi.eval(i)?;
        if v < prev {
            phi_grows = false;
            break;
        }
        prev = v;
    }
    let d1 = model.death(1)?;
    Ok(LyapunovCertificate {
        phi: phi.clone(),
        lambda1,
        c,
        checked_range: (1, i_max),
        margin,
        witness,
        exceeds_d1: lambda1 > d1,
        exceeds_xi1: xi1.map(|x| lambda1 > x),
        phi_grows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example3, linear, power};

    #[test]
    fn example1_closed_form_drift() {
        // L phi(i) = -i^a (sqrt d - sqrt b)^2 sqrt(d/b)^i for i >= 2.
        let m = power(1.0, 4.0, 1.0);
        let phi = |i: u64| if i == 0 { 0.0 } else { 2f64.powi(i as i32) };
        assert!((generator_apply(&m, phi, 2).unwrap() + 8.0).abs() < 1e-12);
        let m = power(0.5, 3.0, 1.7);
        let r: f64 = (3.0f64 / 0.5).sqrt();
        let phi = |i: u64| if i == 0 { 0.0 } else { r.powi(i as i32) };
        for i in 2..30u64 {
            let expected = -(i as f64).powf(1.7) * (3f64.sqrt() - 0.5f64.sqrt()).powi(2) * r.powi(i as i32);
            let got = generator_apply(&m, phi, i).unwrap();
            assert!((got - expected).abs() <= 1e-10 * expected.abs(), "i={i}");
        }
    }

    #[test]
    fn constant_phi_is_harmonic_away_from_zero() {
        assert_eq!(generator_apply(&linear(1.0, 2.0), |_| 3.0, 5).unwrap(), 0.0);
    }

    #[test]
    fn example3_two_power_bound() {
        let m = example3();
        let phi = |i: u64| if i == 0 { 0.0 } else { 2f64.powi(i as i32) };
        for i in 2..60u64 {
            let l = generator_apply(&m, phi, i).unwrap();
            assert!(l <= -((i - 1) as f64) * phi(i) + 1e-9, "i={i}");
        }
        assert!(generator_apply(&m, phi, 4).unwrap() <= -48.0);
    }

    #[test]
    fn linear_certificate_with_fitted_constant() {
        let m = linear(1.0, 2.0);
        let phi = LyapunovFunction::SqrtRatioPower { ratio: 2.0 };
        let c = fit_lyapunov_constant(&m, &phi, 2.05, 200).unwrap();
        let cert = check_lyapunov(&m, &phi, 2.05, c, 200, Some(1.0)).unwrap();
        assert!(cert.holds());
        assert!(cert.margin.abs() < 1e-9);
        assert!(cert.valid_for_particles());
        assert_eq!(cert.exceeds_xi1, Some(true));
        assert_eq!(cert.min_particles(2.0), Some(42));
        let violated = check_lyapunov(&m, &phi, 2.05, 0.5 * c, 200, None).unwrap();
        assert!(!violated.holds());
        assert!(violated.witness >= 1 && violated.witness <= 12);
    }

    #[test]
    fn example3_certificate() {
        let m = example3();
        let phi = LyapunovFunction::Power { base: 2.0 };
        let c = (1..=3u64)
            .map(|i| {
                let f = |j: u64| if j == 0 { 0.0 } else { 2f64.powi(j as i32) };
                (generator_apply(&m, f, i).unwrap() + 3.0 * f(i)).max(0.0)
            })
            .fold(0.0, f64::max);
        let cert = check_lyapunov(&m, &phi, 3.0, c, 500, None).unwrap();
        assert!(cert.holds(), "{cert:?}");
        assert!(!cert.exceeds_d1);
    }

    #[test]
    fn bounded_phi_fails_growth_heuristic() {
        let m = linear(1.0, 2.0);
        let mut values = vec![1.0; 102];
        values[0] = 0.0;
        let phi = LyapunovFunction::Table { values };
        let cert = check_lyapunov(&m, &phi, 0.5, 2.0, 100, None).unwrap();
        assert!(!cert.phi_grows);
        assert!(!cert.valid_for_particles());
    }

    #[test]
    fn rejects_bad_phi() {
        let m = linear(1.0, 2.0);
        let phi = LyapunovFunction::Table { values: vec![1.0, 1.0, 1.0] };
        assert!(check_lyapunov(&m, &phi, 1.0, 1.0, 1, None).is_err());
        let phi = LyapunovFunction::Table { values: vec![0.0, 1.0, 1.0] };
        assert!(check_lyapunov(&m, &phi, 1.0, 1.0, 5, None).is_err());
        let phi = LyapunovFunction::Power { base: 2.0 };
        assert!(matches!(
            check_lyapunov(&m, &phi, 1.0, 1.0, 2000, None),
            Err(Error::Overflow(_))
        ));
    }
}
