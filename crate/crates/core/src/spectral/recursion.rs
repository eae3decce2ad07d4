use serde::{Deserialize, Serialize};

use super::QsdVector;
use crate::error::{Error, Result};
use crate::model::BirthDeathModel;
use crate::numeric::LogSum;

/// Relative threshold under which a value of `Q_n(x)` counts as zero.
const SIGN_EPS: f64 = 1e-13;

/// Ratios `r_n = Q_{n+1}(x) / Q_n(x)` of the orthogonal polynomial sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSequence {
    pub x: f64,
    /// `ratios[k]` holds `r_{k+1}`.
    pub ratios: Vec<f64>,
    /// First `n` with `Q_n(x) <= 0`. The recursion stops there, so the last
    /// stored ratio is the nonpositive one.
    pub first_nonpositive: Option<usize>,
}

impl RatioSequence {
    /// `ln Q_j(x)` for `j = 1..=ratios.len() + 1`, while all are positive.
    pub fn ln_q(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ratios.len() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for &r in &self.ratios {
            if r <= 0.0 {
                break;
            }
            acc += r.ln();
            out.push(acc);
        }
        out
    }

    pub fn all_positive(&self) -> bool {
        self.first_nonpositive.is_none()
    }
}

/// Run the recursion `b_n r_n = (b_n + d_n - x) - d_n / r_{n-1}` for
/// `n = 1..=n_max` (with `r_1 = (b_1 + d_1 - x) / b_1`).
///
/// This is `b_n Q_{n+1} = (b_n + d_n - x) Q_n - d_n Q_{n-1}` with `Q_0 = 0`,
/// `Q_1 = 1`: the indexing under which `rho_x(j) = pi_j x Q_j(x) / d_1`
/// solves the quasi-stationarity equations.
pub fn q_ratios(model: &BirthDeathModel, x: f64, n_max: usize) -> Result<RatioSequence> {
    model.require_valid()?;
    if n_max == 0 {
        return Err(Error::InvalidInput("n_max must be at least 1".into()));
    }
    q_ratios_unchecked(model, x, n_max)
}

pub(crate) fn q_ratios_unchecked(model: &BirthDeathModel, x: f64, n_max: usize) -> Result<RatioSequence> {
    let mut ratios = Vec::with_capacity(n_max);
    // Q_{n-1} / Q_n; Q_0 = 0.
    let mut inv_prev = 0.0;
    let mut first_nonpositive = None;
    for n in 1..=n_max as u64 {
        let (b, d) = model.rates(n)?;
        let carry = d * inv_prev;
        let numerator = (b + d - x) - carry;
        let scale = b + d + x.abs() + carry;
        let r = numerator / b;
        ratios.push(r);
        if numerator <= SIGN_EPS * scale {
            first_nonpositive = Some(n as usize + 1);
            break;
        }
        inv_prev = 1.0 / r;
    }
    Ok(RatioSequence {
        x,
        ratios,
        first_nonpositive,
    })
}

/// `Q_n(x) > 0` for every `n <= n_trunc`.
fn all_positive_up_to(model: &BirthDeathModel, x: f64, n_trunc: usize) -> Result<bool> {
    if n_trunc < 2 {
        return Ok(true);
    }
    Ok(q_ratios_unchecked(model, x, n_trunc - 1)?.all_positive())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Xi1Options {
    pub n_trunc: usize,
    pub tol: f64,
    /// The bracket search gives up past this value of `x`.
    pub ceiling: f64,
    /// Number of `pi_k` weights stored with the result.
    pub pi_len: usize,
}

impl Default for Xi1Options {
    fn default() -> Self {
        Self {
            n_trunc: 2000,
            tol: 1e-8,
            ceiling: 1e12,
            pi_len: 30,
        }
    }
}

/// Bisection estimate of the decay parameter at a fixed truncation.
///
/// `[lo, hi]` brackets the smallest zero of `Q_{n_trunc}`; `hi` is the
/// reported estimate and is an upper bound on the decay parameter that can
/// only decrease as `n_trunc` grows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub xi1: f64,
    pub lo: f64,
    pub hi: f64,
    pub n_trunc: usize,
    pub tol: f64,
    /// `pi[k]` is `pi_{k+1}`.
    pub pi: Vec<f64>,
}

pub fn xi1(model: &BirthDeathModel, n_trunc: usize, tol: f64) -> Result<SpectralResult> {
    xi1_with(
        model,
        &Xi1Options {
            n_trunc,
            tol,
            ..Xi1Options::default()
        },
    )
}

pub fn xi1_with(model: &BirthDeathModel, opts: &Xi1Options) -> Result<SpectralResult> {
    model.require_valid()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    if opts.n_trunc == 0 {
        return Err(Error::InvalidInput("n_trunc must be positive".into()));
    }
    let n = opts.n_trunc;
    if !all_positive_up_to(model, 0.0, n)? {
        return Err(Error::InvalidModel("Q_n(0) is not positive for all n".into()));
    }
    let (_, d1) = model.rates(1)?;
    let mut lo = 0.0;
    let mut hi = d1;
    while all_positive_up_to(model, hi, n)? {
        lo = hi;
        hi *= 2.0;
        if hi > opts.ceiling {
            return Err(Error::NoSignChange {
                ceiling: opts.ceiling,
                n_trunc: n,
            });
        }
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if all_positive_up_to(model, mid, n)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pi = pi_weights(model, opts.pi_len.max(1))?;
    Ok(SpectralResult {
        xi1: hi,
        lo,
        hi,
        n_trunc: n,
        tol: opts.tol,
        pi,
    })
}

/// Estimates at `n_trunc` and `2 n_trunc`, and whether they agree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevel {
    pub coarse: SpectralResult,
    pub fine: SpectralResult,
    pub agree: bool,
}

pub fn xi1_two_level(model: &BirthDeathModel, opts: &Xi1Options) -> Result<TwoLevel> {
    let coarse = xi1_with(model, opts)?;
    let fine = xi1_with(
        model,
        &Xi1Options {
            n_trunc: 2 * opts.n_trunc,
            ..opts.clone()
        },
    )?;
    let agree = (coarse.xi1 - fine.xi1).abs() <= opts.tol;
    Ok(TwoLevel { coarse, fine, agree })
}

/// `ln pi_k` for `k = 1..=k_max`, with `pi_1 = 1` and
/// `pi_{k+1} = pi_k b_k / d_{k+1}`.
pub fn ln_pi_weights(model: &BirthDeathModel, k_max: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(k_max);
    let mut acc = 0.0;
    for k in 1..=k_max as u64 {
        if k > 1 {
            let b = model.birth(k - 1)?;
            let d = model.death(k)?;
            acc += b.ln() - d.ln();
        }
        out.push(acc);
    }
    Ok(out)
}

/// `pi_k = (b_1 ... b_{k-1}) / (d_2 ... d_k)` for `k = 1..=k_max`. Fails when
/// a weight leaves the range of `f64`.
pub fn pi_weights(model: &BirthDeathModel, k_max: usize) -> Result<Vec<f64>> {
    model.require_valid()?;
    ln_pi_weights(model, k_max)?
        .into_iter()
        .enumerate()
        .map(|(k, l)| {
            let v = l.exp();
            if v.is_finite() && v > 0.0 && v.is_normal() {
                Ok(v)
            } else {
                Err(Error::Overflow(format!("pi_k at k = {} (ln pi_k = {l})", k + 1)))
            }
        })
        .collect()
}

/// The QSD family member `rho_x(j) = pi_j x Q_j(x) / d_1` on `j = 1..=j_max`,
/// renormalised. `truncation_mass` is `1 - sum_j rho_x(j)` before
/// renormalisation; it errors past `max_truncation_mass` when one is given.
///
/// For the minimal QSD pass the `lo` end of a bisection bracket: just above
/// the decay parameter `Q_j(x)` turns negative at some large `j`.
pub fn qsd_family(
    model: &BirthDeathModel,
    x: f64,
    j_max: usize,
    max_truncation_mass: Option<f64>,
) -> Result<QsdVector> {
    model.require_valid()?;
    if !(x > 0.0) {
        return Err(Error::InvalidInput(format!("x must be positive, got {x}")));
    }
    if j_max == 0 {
        return Err(Error::InvalidInput("j_max must be at least 1".into()));
    }
    let seq = q_ratios_unchecked(model, x, j_max.saturating_sub(1).max(1))?;
    if let Some(n) = seq.first_nonpositive {
        if n <= j_max {
            let q = seq.ratios.iter().product::<f64>();
            return Err(Error::NegativeWeight { index: n, value: q });
        }
    }
    let ln_q = seq.ln_q();
    let ln_pi = ln_pi_weights(model, j_max)?;
    let d1 = model.death(1)?;
    let shift = x.ln() - d1.ln();
    let ln_w: Vec<f64> = (0..j_max).map(|k| ln_pi[k] + ln_q[k] + shift).collect();
    let raw: f64 = ln_w.iter().map(|l| l.exp()).sum();
    if !raw.is_finite() {
        return Err(Error::Overflow("QSD family weights".into()));
    }
    let truncation_mass = 1.0 - raw;
    if let Some(threshold) = max_truncation_mass {
        if truncation_mass > threshold {
            return Err(Error::TruncationMass {
                mass: truncation_mass,
                threshold,
            });
        }
    }
    Ok(QsdVector {
        weights: crate::numeric::normalize_ln(&ln_w),
        x: Some(x),
        truncation_mass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Converging,
    Diverging,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SDiagnostic {
    pub partial_sum: f64,
    pub trend: Trend,
    /// Fitted decay exponent `p` of the terms, `t_k ~ k^-p`, over the last
    /// half of the range.
    pub tail_exponent: Option<f64>,
}

/// Exponent above which the terms are taken as summable.
const CONVERGING_EXPONENT: f64 = 1.25;
/// Exponent below which the terms are taken as non-summable.
const DIVERGING_EXPONENT: f64 = 1.05;

/// Partial sum, over `k = 2..=k_max`, of the series
/// `sum_k (1 / (d_k pi_k)) sum_{l >= k} pi_l` for `sup_x E_x(T_1)`, with a
/// heuristic verdict on convergence from the decay of the terms.
///
/// The inner tails are summed up to `l = 2 k_max`, so the last terms are not
/// artificially cut short.
pub fn s_diagnostic(model: &BirthDeathModel, k_max: usize) -> Result<SDiagnostic> {
    model.require_valid()?;
    if k_max < 2 {
        return Ok(SDiagnostic {
            partial_sum: 0.0,
            trend: Trend::Inconclusive,
            tail_exponent: None,
        });
    }
    let l_max = 2 * k_max;
    let ln_pi = ln_pi_weights(model, l_max)?;
    let mut tail = LogSum::new();
    let mut ln_tails = vec![0.0; l_max];
    for l in (0..l_max).rev() {
        tail.add_ln(ln_pi[l]);
        ln_tails[l] = tail.ln();
    }
    let mut partial_sum = 0.0;
    let mut terms = Vec::with_capacity(k_max - 1);
    for k in 2..=k_max {
        let d = model.death(k as u64)?;
        let t = (ln_tails[k - 1] - d.ln() - ln_pi[k - 1]).exp();
        if !t.is_finite() {
            return Err(Error::Overflow(format!("S series term at k = {k}")));
        }
        partial_sum += t;
        terms.push((k as f64, t));
    }
    let window = &terms[terms.len() / 2..];
    if window.len() < 8 {
        return Ok(SDiagnostic {
            partial_sum,
            trend: Trend::Inconclusive,
            tail_exponent: None,
        });
    }
    let p = -log_log_slope(window);
    let trend = if p >= CONVERGING_EXPONENT {
        Trend::Converging
    } else if p <= DIVERGING_EXPONENT {
        Trend::Diverging
    } else {
        Trend::Inconclusive
    };
    Ok(SDiagnostic {
        partial_sum,
        trend,
        tail_exponent: Some(p),
    })
}

/// Least-squares slope of `ln t` against `ln k`; zero terms count as a
/// steep decay.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(k, t)| (k.ln(), if t > 0.0 { t.ln() } else { -745.0 }))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example3, linear, logistic, power};

    #[test]
    fn first_ratio_is_exact() {
        let s = q_ratios(&linear(1.0, 2.0), 1.0, 1).unwrap();
        assert_eq!(s.ratios, vec![2.0]);
        assert!(s.all_positive());
    }

    #[test]
    fn exact_zero_is_a_sign_change() {
        let s = q_ratios(&linear(1.0, 2.0), 3.0, 2).unwrap();
        assert_eq!(s.first_nonpositive, Some(2));
        assert_eq!(s.ratios.len(), 1);
    }

    #[test]
    fn everything_positive_at_zero() {
        for m in [linear(1.0, 2.0), logistic(2.0, 1.0, 1.0), example3(), power(1.0, 4.0, 1.0)] {
            assert!(q_ratios(&m, 0.0, 5000).unwrap().all_positive(), "{m}");
        }
    }

    #[test]
    fn linear_q_at_decay_parameter_is_index() {
        // For b_i = i, d_i = 2i, Q_j(1) = j. At the decay parameter this is
        // the minimal solution of the recursion and rounding errors grow like
        // 2^n, so only the first 30 ratios are held to full precision.
        let s = q_ratios(&linear(1.0, 2.0), 1.0, 30).unwrap();
        for (k, r) in s.ratios.iter().enumerate() {
            let n = k as f64 + 1.0;
            assert!((r - (n + 1.0) / n).abs() < 1e-12);
        }
    }

    #[test]
    fn xi1_linear_and_bracket_width() {
        let r = xi1(&linear(1.0, 2.0), 2000, 1e-8).unwrap();
        assert!((r.xi1 - 1.0).abs() < 1e-7, "{r:?}");
        assert!(r.hi - r.lo <= 1e-8);
        assert_eq!(r.pi[0], 1.0);
        let r = xi1(&example3(), 500, 1e-6).unwrap();
        assert!(r.hi - r.lo <= 1e-6);
    }

    #[test]
    fn xi1_power_sanity_bounds() {
        let m = power(1.0, 4.0, 1.0);
        let r = xi1(&m, 2000, 1e-9).unwrap();
        assert!(r.xi1 >= 0.0 && r.xi1 <= 4.0);
        assert!((r.xi1 - 3.0).abs() < 1e-7);
    }

    #[test]
    fn xi1_rejects_bad_tolerance_and_short_truncation() {
        assert!(matches!(xi1(&linear(1.0, 2.0), 10, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(xi1(&linear(1.0, 2.0), 1, 1e-6), Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn xi1_two_level_agrees_on_linear() {
        let t = xi1_two_level(
            &linear(1.0, 2.0),
            &Xi1Options {
                n_trunc: 500,
                tol: 1e-8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(t.agree);
        assert!(t.fine.xi1 <= t.coarse.xi1 + 1e-12);
    }

    #[test]
    fn pi_examples() {
        let p = pi_weights(&linear(1.0, 2.0), 3).unwrap();
        assert_eq!(p[0], 1.0);
        assert!((p[2] - 1.0 / 12.0).abs() < 1e-15);
        let p = pi_weights(&logistic(2.0, 1.0, 1.0), 2).unwrap();
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert!(matches!(
            pi_weights(&logistic(2.0, 1.0, 1.0), 400),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn qsd_family_linear_is_geometric() {
        let r = xi1(&linear(1.0, 2.0), 2000, 1e-10).unwrap();
        let q = qsd_family(&linear(1.0, 2.0), r.lo, 30, Some(1e-6)).unwrap();
        for j in 1..=20u64 {
            assert!((q.weight(j) - 0.5f64.powi(j as i32)).abs() < 1e-6);
        }
        assert!(q.truncation_mass < 1e-8);
    }

    #[test]
    fn qsd_family_single_point() {
        for m in [linear(1.0, 2.0), logistic(2.0, 1.0, 1.0), example3()] {
            let q = qsd_family(&m, 0.1, 1, None).unwrap();
            assert_eq!(q.weights, vec![1.0]);
        }
    }

    #[test]
    fn qsd_family_below_decay_parameter_has_heavier_tail() {
        let m = linear(1.0, 2.0);
        let minimal = qsd_family(&m, 1.0, 400, None).unwrap();
        let other = qsd_family(&m, 0.5, 400, None).unwrap();
        let tail = |q: &QsdVector| q.weights[9..].iter().sum::<f64>();
        assert!(tail(&other) > tail(&minimal));
        assert!(other.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn qsd_family_above_decay_parameter_fails() {
        let err = qsd_family(&linear(1.0, 2.0), 1.5, 200, None).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { .. }), "{err:?}");
        assert!(qsd_family(&linear(1.0, 2.0), 0.0, 10, None).is_err());
    }

    #[test]
    fn qsd_family_truncation_threshold() {
        let err = qsd_family(&linear(1.0, 2.0), 1.0, 5, Some(1e-3)).unwrap_err();
        assert!(matches!(err, Error::TruncationMass { .. }));
    }

    #[test]
    fn s_diagnostic_trends() {
        let s = s_diagnostic(&logistic(2.0, 1.0, 1.0), 200).unwrap();
        assert_eq!(s.trend, Trend::Converging, "{s:?}");
        let s = s_diagnostic(&linear(1.0, 2.0), 10_000).unwrap();
        assert_eq!(s.trend, Trend::Diverging, "{s:?}");
        let s = s_diagnostic(&linear(1.0, 2.0), 1).unwrap();
        assert_eq!(s.partial_sum, 0.0);
        assert_eq!(s.trend, Trend::Inconclusive);
    }

    #[test]
    fn s_partial_sums_grow_logarithmically_for_linear() {
        // Terms behave like 1/k, so doubling k_max adds about ln 2.
        let m = linear(1.0, 2.0);
        let a = s_diagnostic(&m, 2000).unwrap().partial_sum;
        let b = s_diagnostic(&m, 4000).unwrap().partial_sum;
        assert!(((b - a) - 2f64.ln()).abs() < 0.01, "{}", b - a);
    }
}
