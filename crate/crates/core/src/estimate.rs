//! Bias of the Fleming-Viot estimator of the minimal QSD.
//!
//! For each particle count `N`, independent replicas give estimates of the
//! mean empirical stationary measure; the distance from their average to a
//! reference QSD is the reported bias, with a bootstrap standard error over
//! replicas.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::measure::{l1_distance, tv_distance, EmpiricalMeasure};

use crate::error::{Error, Result};
use crate::model::{BirthDeathModel, Family};
use crate::simulate::{fv_run, stream_rng, FvConfig};
use crate::spectral::{truncated_decay_oracle, QsdVector};

/// Pointwise average of measures, summed in list order.
pub fn mean_measure(samples: &[EmpiricalMeasure]) -> Result<EmpiricalMeasure> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("mean of an empty list of measures".into()));
    }
    let mut acc = std::collections::BTreeMap::<u64, f64>::new();
    for m in samples {
        for (s, w) in m.iter() {
            *acc.entry(s).or_insert(0.0) += w;
        }
    }
    let n = samples.len() as f64;
    EmpiricalMeasure::new(acc.into_iter().map(|(s, w)| (s, w / n)))
}

/// Which per-replica estimate of the stationary measure is averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Occupation measure over `[t_burn, t_max]` of a single long run.
    #[default]
    TimeAverage,
    /// Empirical measure at `t_max` only.
    FinalSnapshot,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::TimeAverage => "time_average",
            Estimator::FinalSnapshot => "final_snapshot",
        }
    }
}

/// How the distance between the estimate and the reference is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceNorm {
    /// `sum_i |mu_i - nu_i|`, the total variation norm of the difference.
    #[default]
    L1,
    /// Half of it, the probability-metric convention.
    Half,
}

impl DistanceNorm {
    pub fn distance(&self, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
        match self {
            DistanceNorm::L1 => l1_distance(mu, nu),
            DistanceNorm::Half => tv_distance(mu, nu),
        }
    }
}

/// Where the reference QSD came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ReferenceKind {
    ClosedForm,
    TruncatedEigenvector { m: usize },
    LargeNFv { n0: usize, t_max: f64, replicas: usize },
}

impl ReferenceKind {
    pub fn label(&self) -> String {
        match self {
            ReferenceKind::ClosedForm => "closed_form".into(),
            ReferenceKind::TruncatedEigenvector { m } => format!("truncated_eigenvector(M={m})"),
            ReferenceKind::LargeNFv { n0, .. } => format!("large_n_fv(N0={n0})"),
        }
    }
}

/// Geometric minimal QSD `(1 - b/d) (b/d)^{i-1}` of the subcritical linear
/// process, when the model is one.
pub fn closed_form_qsd(model: &BirthDeathModel, len: usize) -> Option<QsdVector> {
    match model.family {
        Family::Power { b, d, a } if a == 1.0 && b < d => {
            let r = b / d;
            let weights: Vec<f64> = (0..len).map(|k| (1.0 - r) * r.powi(k as i32)).collect();
            let mass: f64 = weights.iter().sum();
            Some(QsdVector {
                weights: weights.iter().map(|w| w / mass).collect(),
                x: Some(d - b),
                truncation_mass: 1.0 - mass,
            })
        }
        _ => None,
    }
}

/// Build the reference QSD of the requested kind.
pub fn build_reference(model: &BirthDeathModel, kind: &ReferenceKind, seed: u64) -> Result<EmpiricalMeasure> {
    match kind {
        ReferenceKind::ClosedForm => closed_form_qsd(model, 200)
            .ok_or_else(|| Error::InvalidInput(format!("no closed-form QSD known for {model}")))?
            .to_measure(),
        ReferenceKind::TruncatedEigenvector { m } => truncated_decay_oracle(model, *m)?.qsd.to_measure(),
        ReferenceKind::LargeNFv { n0, t_max, replicas } => {
            let cfg = FvConfig::new(*t_max);
            let runs: Result<Vec<EmpiricalMeasure>> = (0..*replicas as u64)
                .into_par_iter()
                .map(|r| {
                    fv_run(model, vec![1; *n0], &cfg, stream_rng(seed, stream_id(*n0, r) ^ (1 << 63)))
                        .map(|run| run.occupation)
                })
                .collect();
            mean_measure(&runs?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub t_max: f64,
    /// Defaults to `t_max / 5`.
    pub t_burn: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub bootstrap: usize,
    pub estimator: Estimator,
    pub norm: DistanceNorm,
    pub stationarity_tol: f64,
    pub start_state: u64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            t_max: 500.0,
            t_burn: None,
            replicas: 20,
            seed: 0,
            bootstrap: 200,
            estimator: Estimator::TimeAverage,
            norm: DistanceNorm::L1,
            stationarity_tol: 0.1,
            start_state: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub n: usize,
    pub tv: f64,
    /// Bootstrap standard error over replicas.
    pub se: f64,
    pub replicas: usize,
    pub t_max: f64,
    pub t_burn: f64,
    pub estimator: Estimator,
    /// Replicas failing the stationarity diagnostic.
    pub unstable_runs: usize,
    pub flagged: bool,
    pub mean_rebirth_rate: f64,
    pub mean: EmpiricalMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub model: String,
    pub reference: ReferenceKind,
    pub norm: DistanceNorm,
    pub seed: u64,
    pub rows: Vec<BiasRow>,
}

impl BiasReport {
    /// `N,tv,se,replicas,t_max,t_burn,estimator,reference` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "tv", "se", "replicas", "t_max", "t_burn", "estimator", "reference"])?;
        let reference = self.reference.label();
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                format!("{:e}", r.tv),
                format!("{:e}", r.se),
                r.replicas.to_string(),
                r.t_max.to_string(),
                r.t_burn.to_string(),
                r.estimator.label().to_string(),
                reference.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn stream_id(n: usize, replica: u64) -> u64 {
    ((n as u64) << 32) | replica
}

/// Run the bias experiment for every `N` in `n_list`.
///
/// Replica `r` at particle count `N` uses stream `(N << 32) | r` of
/// `config.seed`; replicas run on the current rayon pool and are reduced in
/// index order, so the report does not depend on the thread count.
pub fn bias_experiment(
    model: &BirthDeathModel,
    n_list: &[usize],
    config: &BiasConfig,
    reference: &EmpiricalMeasure,
    reference_kind: ReferenceKind,
) -> Result<BiasReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidInput("N list is empty".into()));
    }
    if let Some(&n) = n_list.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidInput(format!("N = {n} is below 2")));
    }
    if config.replicas == 0 {
        return Err(Error::InvalidInput("replicas must be positive".into()));
    }
    if config.start_state == 0 {
        return Err(Error::InvalidInput("start state must be at least 1".into()));
    }
    let fv = FvConfig {
        t_max: config.t_max,
        t_burn: config.t_burn,
        observe: Vec::new(),
        record_events: false,
        stationarity_tol: config.stationarity_tol,
    };
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let runs: Result<Vec<_>> = (0..config.replicas as u64)
            .into_par_iter()
            .map(|r| fv_run(model, vec![config.start_state; n], &fv, stream_rng(config.seed, stream_id(n, r))))
            .collect();
        let runs = runs?;
        let estimates: Vec<EmpiricalMeasure> = runs
            .iter()
            .map(|run| match config.estimator {
                Estimator::TimeAverage => run.occupation.clone(),
                Estimator::FinalSnapshot => EmpiricalMeasure::from_positions(&run.final_positions)
                    .expect("positions are nonempty"),
            })
            .collect();
        let mean = mean_measure(&estimates)?;
        let tv = config.norm.distance(&mean, reference);
        let se = bootstrap_se(&estimates, reference, config, n)?;
        let unstable_runs = runs.iter().filter(|r| !r.stationary).count();
        let mean_rebirth_rate = runs.iter().map(|r| r.rebirth_rate).sum::<f64>() / runs.len() as f64;
        rows.push(BiasRow {
            n,
            tv,
            se,
            replicas: config.replicas,
            t_max: config.t_max,
            t_burn: fv.burn_in(),
            estimator: config.estimator,
            unstable_runs,
            flagged: unstable_runs > 0,
            mean_rebirth_rate,
            mean,
        });
    }
    Ok(BiasReport {
        model: model.name.clone(),
        reference: reference_kind,
        norm: config.norm,
        seed: config.seed,
        rows,
    })
}

fn bootstrap_se(
    estimates: &[EmpiricalMeasure],
    reference: &EmpiricalMeasure,
    config: &BiasConfig,
    n: usize,
) -> Result<f64> {
    let k = estimates.len();
    if k < 2 || config.bootstrap < 2 {
        return Ok(0.0);
    }
    let mut rng = stream_rng(config.seed ^ 0x9e37_79b9_7f4a_7c15, stream_id(n, u32::MAX as u64));
    let mut values = Vec::with_capacity(config.bootstrap);
    let mut resample = Vec::with_capacity(k);
    for _ in 0..config.bootstrap {
        resample.clear();
        for _ in 0..k {
            resample.push(estimates[rng.random_range(0..k)].clone());
        }
        values.push(config.norm.distance(&mean_measure(&resample)?, reference));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Ok(var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `None` with only two points.
    pub slope_se: Option<f64>,
}

/// Least-squares line through `(ln N, ln tv)`.
pub fn decay_fit(rows: &[(usize, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, tv)| *tv > 0.0)
        .map(|&(n, tv)| ((n as f64).ln(), tv.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidInput("need at least two rows with positive distance".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all rows have the same N".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = (pts.len() > 2).then(|| {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (rss / (k - 2.0) / sxx).sqrt()
    });
    Ok(DecayFit {
        slope,
        intercept,
        slope_se,
    })
}

impl BiasReport {
    pub fn fit(&self) -> Result<DecayFit> {
        decay_fit(&self.rows.iter().map(|r| (r.n, r.tv)).collect::<Vec<_>>())
    }
}

/// Write `state,weight` rows.
pub fn write_measure_csv<W: std::io::Write>(measure: &EmpiricalMeasure, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "weight"])?;
    for (s, p) in measure.iter() {
        w.write_record([s.to_string(), format!("{p:e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear, logistic};

    #[test]
    fn mean_of_one_and_of_disjoint_diracs() {
        let m = EmpiricalMeasure::new([(1, 0.3), (2, 0.7)]).unwrap();
        assert_eq!(mean_measure(std::slice::from_ref(&m)).unwrap(), m);
        let half = mean_measure(&[EmpiricalMeasure::dirac(1), EmpiricalMeasure::dirac(3)]).unwrap();
        assert_eq!(half.get(1), 0.5);
        assert_eq!(half.get(3), 0.5);
        assert!(mean_measure(&[]).is_err());
    }

    #[test]
    fn decay_fit_exact_power_law() {
        let rows: Vec<_> = [2usize, 10, 100, 1000].iter().map(|&n| (n, 0.37 / n as f64)).collect();
        let f = decay_fit(&rows).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!(f.slope_se.unwrap() < 1e-10);
        let two = decay_fit(&[(2, 0.5), (8, 0.125)]).unwrap();
        assert!((two.slope + 1.0).abs() < 1e-12);
        assert!(two.slope_se.is_none());
        assert!(decay_fit(&[(5, 0.1), (5, 0.2), (5, 0.3)]).is_err());
    }

    #[test]
    fn decay_fit_on_published_linear_table() {
        let rows = [(2, 0.190), (10, 4.5e-2), (100, 5.0e-3), (1000, 5.1e-4), (10_000, 2.3e-5)];
        let f = decay_fit(&rows).unwrap();
        assert!((f.slope + 1.0).abs() <= 0.2, "{f:?}");
    }

    #[test]
    fn closed_form_reference_is_geometric() {
        let q = closed_form_qsd(&linear(1.0, 2.0), 60).unwrap();
        assert!((q.weight(3) - 0.125).abs() < 1e-15);
        assert!(closed_form_qsd(&logistic(2.0, 1.0, 1.0), 10).is_none());
    }

    #[test]
    fn bias_experiment_rejects_bad_input() {
        let m = linear(1.0, 2.0);
        let r = EmpiricalMeasure::dirac(1);
        let cfg = BiasConfig::default();
        assert!(bias_experiment(&m, &[], &cfg, &r, ReferenceKind::ClosedForm).is_err());
        assert!(bias_experiment(&m, &[1], &cfg, &r, ReferenceKind::ClosedForm).is_err());
    }

    #[test]
    fn bias_report_csv_layout() {
        let m = linear(1.0, 2.0);
        let reference = build_reference(&m, &ReferenceKind::ClosedForm, 0).unwrap();
        let cfg = BiasConfig {
            t_max: 20.0,
            replicas: 3,
            bootstrap: 10,
            ..Default::default()
        };
        let report = bias_experiment(&m, &[2, 4], &cfg, &reference, ReferenceKind::ClosedForm).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "N,tv,se,replicas,t_max,t_burn,estimator,reference");
        assert!(lines.next().unwrap().starts_with("2,"));
        assert_eq!(text.lines().count(), 3);
        for row in &report.rows {
            assert!(row.tv >= 0.0 && row.tv <= 2.0);
            assert!(row.se >= 0.0);
        }
    }
}
