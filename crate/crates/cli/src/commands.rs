use std::path::PathBuf;

use bdqsd::estimate::{closed_form_qsd, write_measure_csv};
use bdqsd::model::validate;
use bdqsd::simulate::{write_events_csv, write_snapshots_csv};
use bdqsd::spectral::{
    conditioned_semigroup_with, fit_lyapunov_constant, xi1_with, SemigroupOptions, Xi1Options,
};
use bdqsd::{
    bias_experiment, build_reference, check_lyapunov, fv_run, qsd_family, stream_rng, truncated_decay_oracle,
    BiasConfig, BirthDeathModel, DistanceNorm, EmpiricalMeasure, Estimator, FvConfig, LyapunovFunction,
    ReferenceKind,
};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::config::{require_positive, ModelArgs};
use crate::output::{write_artifact, write_csv, write_json, Meta};
use crate::{CliError, Context};

fn resolve_model(ctx: &Context, cli: &ModelArgs) -> Result<(ModelArgs, BirthDeathModel), CliError> {
    let args: ModelArgs = ctx.config.resolve("model", cli)?;
    let model = args.build()?;
    let report = validate(&model);
    if !report.is_valid() {
        return Err(CliError::Config(format!("invalid model: {}", report.errors.join("; "))));
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok((args, model))
}

macro_rules! cli_args {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fmeta])*
                #[serde(skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }
    };
}

cli_args! {
    Xi1Args {
        /// Truncation level of the bisection predicate.
        #[arg(long)] n_trunc: usize,
        /// Width of the final bisection bracket.
        #[arg(long)] tol: f64,
        /// Size of the truncated generator for the eigenvalue cross-check.
        #[arg(long)] m: usize,
        /// Also run at twice the truncation and report whether they agree.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")] two_level: bool,
        /// Write the result (.json, or .csv for the pi weights).
        #[arg(long)] out: PathBuf,
    }
}

pub fn xi1(ctx: &Context, model_args: &ModelArgs, cli: &Xi1Args) -> Result<i32, CliError> {
    let (model_args, model) = resolve_model(ctx, model_args)?;
    let mut a: Xi1Args = ctx.config.resolve("xi1", cli)?;
    let n_trunc = *a.n_trunc.get_or_insert(2000);
    let tol = *a.tol.get_or_insert(1e-8);
    let m = *a.m.get_or_insert(n_trunc);
    let two_level = *a.two_level.get_or_insert(false);
    require_positive("tol", tol)?;
    let opts = Xi1Options {
        n_trunc,
        tol,
        ..Xi1Options::default()
    };
    let result = xi1_with(&model, &opts)?;
    let oracle = truncated_decay_oracle(&model, m)?;
    let delta = (result.xi1 - oracle.xi1_upper).abs();
    println!("model        {}", model.name);
    println!("xi1          {:.12}  (bracket [{:.12}, {:.12}], n_trunc {n_trunc})", result.xi1, result.lo, result.hi);
    println!("oracle       {:.12}  (truncated generator, M = {m})", oracle.xi1_upper);
    println!("delta        {delta:.3e}");
    let fine = if two_level {
        let fine = xi1_with(
            &model,
            &Xi1Options {
                n_trunc: 2 * n_trunc,
                ..opts.clone()
            },
        )?;
        let agree = (fine.xi1 - result.xi1).abs() <= tol;
        println!(
            "two-level    {:.12} at n_trunc {}: {}",
            fine.xi1,
            2 * n_trunc,
            if agree { "agree" } else { "DISAGREE" }
        );
        Some((fine, agree))
    } else {
        None
    };
    if let Some(path) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            spectral: &'a bdqsd::SpectralResult,
            oracle_xi1: f64,
            oracle_m: usize,
            delta: f64,
            two_level: Option<(&'a bdqsd::SpectralResult, bool)>,
        }
        let meta = Meta::new("xi1", None, &model_args, &a);
        let out = Out {
            spectral: &result,
            oracle_xi1: oracle.xi1_upper,
            oracle_m: m,
            delta,
            two_level: fine.as_ref().map(|(f, ok)| (f, *ok)),
        };
        write_artifact(path, &meta, &out, |w| {
            let mut w = csv_writer(w);
            w.write_record(["k", "pi"])?;
            for (k, p) in result.pi.iter().enumerate() {
                w.write_record([(k + 1).to_string(), format!("{p:e}")])?;
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let disagree = fine.is_some_and(|(_, ok)| !ok);
    Ok(if ctx.strict && disagree { 4 } else { 0 })
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

cli_args! {
    QsdArgs {
        /// Spectral parameter; defaults to the decay parameter.
        #[arg(long)] x: f64,
        /// Number of states in the output.
        #[arg(long)] j_max: usize,
        #[arg(long)] n_trunc: usize,
        #[arg(long)] tol: f64,
        /// Fail when more than this much mass lies beyond `j_max`.
        #[arg(long)] max_truncation_mass: f64,
        /// Write the weights (.csv, or .json).
        #[arg(long)] out: PathBuf,
    }
}

pub fn qsd(ctx: &Context, model_args: &ModelArgs, cli: &QsdArgs) -> Result<i32, CliError> {
    let (model_args, model) = resolve_model(ctx, model_args)?;
    let mut a: QsdArgs = ctx.config.resolve("qsd", cli)?;
    let j_max = *a.j_max.get_or_insert(50);
    let n_trunc = *a.n_trunc.get_or_insert(2000);
    let tol = *a.tol.get_or_insert(1e-12);
    require_positive("tol", tol)?;
    if j_max == 0 {
        return Err(CliError::Config("j_max must be positive".into()));
    }
    let x = match a.x {
        Some(x) => {
            require_positive("x", x)?;
            x
        }
        None => {
            let r = xi1_with(
                &model,
                &Xi1Options {
                    n_trunc,
                    tol,
                    ..Xi1Options::default()
                },
            )?;
            *a.x.insert(r.lo)
        }
    };
    let rho = qsd_family(&model, x, j_max, a.max_truncation_mass)?;
    println!("model            {}", model.name);
    println!("x                {x:.12}");
    println!("truncation mass  {:.3e}", rho.truncation_mass);
    for (j, w) in rho.weights.iter().enumerate().take(10) {
        println!("rho({:>2})         {w:.6e}", j + 1);
    }
    if j_max > 10 {
        println!("...              ({j_max} states)");
    }
    if let Some(path) = &a.out {
        let meta = Meta::new("qsd", None, &model_args, &a);
        write_artifact(path, &meta, &rho, |w| rho.write_csv(w))?;
    }
    Ok(0)
}

cli_args! {
    FvArgs {
        /// Number of particles.
        #[arg(long)] n: usize,
        #[arg(long)] t_max: f64,
        /// Start of the averaging window (default t_max / 5).
        #[arg(long)] t_burn: f64,
        /// Initial state of every particle.
        #[arg(long)] start: u64,
        #[arg(long)] seed: u64,
        /// Snapshot times, comma separated.
        #[arg(long, value_delimiter = ',')] observe: Vec<f64>,
        #[arg(long)] stationarity_tol: f64,
        /// Occupation measure over the averaging window (.csv or .json).
        #[arg(long)] out: PathBuf,
        /// Snapshot measures as t,state,weight rows.
        #[arg(long)] snapshots: PathBuf,
        /// Every jump as a CSV row.
        #[arg(long)] events: PathBuf,
    }
}

pub fn fv(ctx: &Context, model_args: &ModelArgs, cli: &FvArgs) -> Result<i32, CliError> {
    let (model_args, model) = resolve_model(ctx, model_args)?;
    let mut a: FvArgs = ctx.config.resolve("fv", cli)?;
    let n = *a.n.get_or_insert(100);
    let t_max = *a.t_max.get_or_insert(100.0);
    let t_burn = *a.t_burn.get_or_insert(t_max / 5.0);
    let start = *a.start.get_or_insert(1);
    let seed = *a.seed.get_or_insert(0);
    let stationarity_tol = *a.stationarity_tol.get_or_insert(0.1);
    let observe = a.observe.get_or_insert_with(Vec::new).clone();
    require_positive("t_max", t_max)?;
    if n < 2 {
        return Err(CliError::Config(format!("n must be at least 2, got {n}")));
    }
    if start == 0 {
        return Err(CliError::Config("start must be at least 1".into()));
    }
    let cfg = FvConfig {
        t_max,
        t_burn: Some(t_burn),
        observe,
        record_events: a.events.is_some(),
        stationarity_tol,
    };
    let run = fv_run(&model, vec![start; n], &cfg, stream_rng(seed, 0))?;
    println!("model           {}", model.name);
    println!("particles       {n}, t_max {t_max}, window [{t_burn}, {t_max}], seed {seed}");
    println!("events          {}", run.event_count);
    println!("rebirths        {} ({:.4} per unit time, {:.4} per particle)", run.rebirth_count, run.rebirth_rate, run.rebirth_rate / n as f64);
    println!(
        "stationarity    tv between half-windows {:.4} ({})",
        run.stationarity_tv,
        if run.stationary { "ok" } else { "FLAGGED" }
    );
    for (s, w) in run.occupation.iter().take(10) {
        println!("occupation({s:>2})  {w:.6e}");
    }
    let meta = Meta::new("fv", Some(seed), &model_args, &a);
    if let Some(path) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            occupation: &'a EmpiricalMeasure,
            stationarity_tv: f64,
            stationary: bool,
            rebirth_count: u64,
            rebirth_rate: f64,
            event_count: u64,
        }
        let out = Out {
            occupation: &run.occupation,
            stationarity_tv: run.stationarity_tv,
            stationary: run.stationary,
            rebirth_count: run.rebirth_count,
            rebirth_rate: run.rebirth_rate,
            event_count: run.event_count,
        };
        write_artifact(path, &meta, &out, |w| write_measure_csv(&run.occupation, w))?;
    }
    if let Some(path) = &a.snapshots {
        write_csv(path, &meta, |w| write_snapshots_csv(&run.snapshots, w))?;
    }
    if let Some(path) = &a.events {
        write_csv(path, &meta, |w| write_events_csv(&run.events, w))?;
    }
    Ok(if ctx.strict && !run.stationary { 4 } else { 0 })
}

cli_args! {
    BiasArgs {
        /// Particle counts, comma separated.
        #[arg(long, value_delimiter = ',')] n_list: Vec<usize>,
        #[arg(long)] t_max: f64,
        #[arg(long)] t_burn: f64,
        #[arg(long)] replicas: usize,
        #[arg(long)] seed: u64,
        /// Bootstrap resamples for the standard error.
        #[arg(long)] bootstrap: usize,
        /// time_average or final_snapshot.
        #[arg(long)] estimator: String,
        /// l1 (sum of absolute differences) or half.
        #[arg(long)] norm: String,
        /// closed_form, eigenvector or large_n_fv.
        #[arg(long)] reference: String,
        /// Truncation of the eigenvector reference.
        #[arg(long)] m: usize,
        /// Particle count of the large-N reference.
        #[arg(long)] n0: usize,
        /// Horizon of the large-N reference runs.
        #[arg(long)] ref_t_max: f64,
        #[arg(long)] ref_replicas: usize,
        #[arg(long)] stationarity_tol: f64,
        #[arg(long)] start: u64,
        /// Bias table (.csv, or .json with the mean measures).
        #[arg(long)] out: PathBuf,
        /// Mean measure per N as N,state,weight rows.
        #[arg(long)] histogram: PathBuf,
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(field: &str, value: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| CliError::Config(format!("unknown {field} `{value}`")))
}

pub fn bias_table(ctx: &Context, model_args: &ModelArgs, cli: &BiasArgs) -> Result<i32, CliError> {
    let (model_args, model) = resolve_model(ctx, model_args)?;
    let mut a: BiasArgs = ctx.config.resolve("bias-table", cli)?;
    let n_list = a.n_list.clone().unwrap_or_default();
    if n_list.is_empty() {
        return Err(CliError::Config("n_list is empty: pass --n-list, e.g. --n-list 2,10,100".into()));
    }
    let t_max = *a.t_max.get_or_insert(500.0);
    let t_burn = *a.t_burn.get_or_insert(t_max / 5.0);
    let replicas = *a.replicas.get_or_insert(20);
    let seed = *a.seed.get_or_insert(0);
    let bootstrap = *a.bootstrap.get_or_insert(200);
    let estimator: Estimator = parse_enum("estimator", a.estimator.get_or_insert("time_average".into()))?;
    let norm: DistanceNorm = parse_enum("norm", a.norm.get_or_insert("l1".into()))?;
    let default_reference = if closed_form_qsd(&model, 1).is_some() { "closed_form" } else { "eigenvector" };
    let reference = a.reference.get_or_insert(default_reference.into()).clone();
    let stationarity_tol = *a.stationarity_tol.get_or_insert(0.1);
    let start = *a.start.get_or_insert(1);
    require_positive("t_max", t_max)?;
    if replicas == 0 {
        return Err(CliError::Config("replicas must be positive".into()));
    }
    let kind = match reference.as_str() {
        "closed_form" => ReferenceKind::ClosedForm,
        "eigenvector" => ReferenceKind::TruncatedEigenvector {
            m: *a.m.get_or_insert(200),
        },
        "large_n_fv" => ReferenceKind::LargeNFv {
            n0: *a.n0.get_or_insert(10_000),
            t_max: *a.ref_t_max.get_or_insert(t_max),
            replicas: *a.ref_replicas.get_or_insert(replicas),
        },
        other => return Err(CliError::Config(format!("unknown reference `{other}`"))),
    };
    let reference_measure = build_reference(&model, &kind, seed)?;
    let cfg = BiasConfig {
        t_max,
        t_burn: Some(t_burn),
        replicas,
        seed,
        bootstrap,
        estimator,
        norm,
        stationarity_tol,
        start_state: start,
    };
    let report = bias_experiment(&model, &n_list, &cfg, &reference_measure, kind.clone())?;
    println!("model      {}", model.name);
    println!("reference  {}", kind.label());
    println!("norm       {norm:?}, estimator {}, t_max {t_max}, t_burn {t_burn}, replicas {replicas}, seed {seed}", estimator.label());
    println!("{:>8}  {:>12}  {:>10}  {:>9}", "N", "distance", "se", "unstable");
    for r in &report.rows {
        println!(
            "{:>8}  {:>12.4e}  {:>10.2e}  {:>9}{}",
            r.n,
            r.tv,
            r.se,
            r.unstable_runs,
            if r.flagged { "  FLAGGED" } else { "" }
        );
    }
    if let Ok(fit) = report.fit() {
        match fit.slope_se {
            Some(se) => println!("slope      {:.3} +- {se:.3}", fit.slope),
            None => println!("slope      {:.3}", fit.slope),
        }
    }
    let meta = Meta::new("bias-table", Some(seed), &model_args, &a);
    if let Some(path) = &a.out {
        write_artifact(path, &meta, &report, |w| report.write_csv(w))?;
    }
    if let Some(path) = &a.histogram {
        write_csv(path, &meta, |w| {
            let mut w = csv_writer(w);
            w.write_record(["N", "state", "weight"])?;
            for r in &report.rows {
                for (s, p) in r.mean.iter() {
                    w.write_record([r.n.to_string(), s.to_string(), format!("{p:e}")])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let flagged = report.rows.iter().any(|r| r.flagged);
    Ok(if ctx.strict && flagged { 4 } else { 0 })
}

cli_args! {
    LyapunovArgs {
        /// sqrt_ratio_power, power or table.
        #[arg(long)] phi: String,
        /// Ratio for sqrt_ratio_power; defaults to d / b.
        #[arg(long)] ratio: f64,
        /// Base for power (default 2).
        #[arg(long)] base: f64,
        /// Text file of phi(0), phi(1), ... separated by commas or whitespace.
        #[arg(long)] phi_table: PathBuf,
        #[arg(long)] lambda1: f64,
        /// Additive constant C; fitted on the checked range when omitted.
        #[arg(long)] constant: f64,
        /// Check states 1..=i_max.
        #[arg(long)] i_max: u64,
        /// Particle count for the moment bound.
        #[arg(long)] n: usize,
        /// Certificate (.json).
        #[arg(long)] out: PathBuf,
    }
}

fn read_phi_table(path: &PathBuf) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| CliError::Config(format!("{}: `{s}` is not a number", path.display())))
        })
        .collect()
}

pub fn lyapunov(ctx: &Context, model_args: &ModelArgs, cli: &LyapunovArgs) -> Result<i32, CliError> {
    let (model_args, model) = resolve_model(ctx, model_args)?;
    let mut a: LyapunovArgs = ctx.config.resolve("lyapunov", cli)?;
    let lambda1 = a
        .lambda1
        .ok_or_else(|| CliError::Config("missing lambda1 (--lambda1)".into()))?;
    require_positive("lambda1", lambda1)?;
    let i_max = *a.i_max.get_or_insert(200);
    let phi = match a.phi.get_or_insert("sqrt_ratio_power".into()).as_str() {
        "sqrt_ratio_power" => {
            let ratio = match a.ratio {
                Some(r) => r,
                None => *a.ratio.insert(model.death(1)? / model.birth(1)?),
            };
            LyapunovFunction::SqrtRatioPower { ratio }
        }
        "power" => LyapunovFunction::Power {
            base: *a.base.get_or_insert(2.0),
        },
        "table" => {
            let path = a
                .phi_table
                .as_ref()
                .ok_or_else(|| CliError::Config("phi = table needs --phi-table".into()))?;
            LyapunovFunction::Table {
                values: read_phi_table(path)?,
            }
        }
        other => return Err(CliError::Config(format!("unknown phi `{other}`"))),
    };
    let c = match a.constant {
        Some(c) => c,
        None => *a.constant.insert(fit_lyapunov_constant(&model, &phi, lambda1, i_max)?),
    };
    let xi = bdqsd::xi1(&model, 2000, 1e-8).ok().map(|r| r.xi1);
    let cert = check_lyapunov(&model, &phi, lambda1, c, i_max, xi)?;
    let d1 = model.death(1)?;
    println!("model        {}", model.name);
    println!("phi          {phi:?}");
    println!("lambda1      {lambda1}, C {c:.6}, states 1..={i_max}");
    println!(
        "inequality   {} (margin {:.3e} at i = {})",
        if cert.holds() { "holds" } else { "VIOLATED" },
        cert.margin,
        cert.witness
    );
    println!("lambda1 > d1 {}", cert.exceeds_d1);
    if let (Some(x), Some(e)) = (xi, cert.exceeds_xi1) {
        println!("lambda1 > xi1 {e} (xi1 = {x:.8})");
    }
    println!("phi grows    {}", cert.phi_grows);
    if let Some(n_min) = cert.min_particles(d1) {
        println!("particles    certificate applies for N >= {n_min}");
    }
    let bound = a.n.and_then(|n| cert.moment_bound(d1, n));
    if let (Some(n), Some(b)) = (a.n, bound) {
        println!("moment bound mean of phi under the N = {n} system <= {b:.6}");
    }
    if let Some(path) = &a.out {
        #[derive(Serialize)]
        struct Out<'a> {
            certificate: &'a bdqsd::LyapunovCertificate,
            valid_for_particles: bool,
            min_particles: Option<usize>,
            moment_bound: Option<f64>,
        }
        let meta = Meta::new("lyapunov", None, &model_args, &a);
        let out = Out {
            certificate: &cert,
            valid_for_particles: cert.valid_for_particles(),
            min_particles: cert.min_particles(d1),
            moment_bound: bound,
        };
        write_json(path, &meta, &out)?;
    }
    Ok(if ctx.strict && !cert.holds() { 4 } else { 0 })
}

cli_args! {
    SemigroupArgs {
        /// Initial state (a point mass).
        #[arg(long)] start: u64,
        /// Initial law as state,weight CSV rows; overrides start.
        #[arg(long)] init: PathBuf,
        #[arg(long)] t: f64,
        /// Truncation level of the state space.
        #[arg(long)] m: usize,
        #[arg(long)] tol: f64,
        /// Largest tolerated leaked-to-surviving mass ratio.
        #[arg(long)] max_leak: f64,
        /// Conditioned law (.csv or .json).
        #[arg(long)] out: PathBuf,
    }
}

fn read_measure(path: &PathBuf) -> Result<EmpiricalMeasure, CliError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in r.deserialize::<(u64, f64)>() {
        rows.push(rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(EmpiricalMeasure::new(rows)?)
}

pub fn semigroup(ctx: &Context, model_args: &ModelArgs, cli: &SemigroupArgs) -> Result<i32, CliError> {
    let (model_args, model) = resolve_model(ctx, model_args)?;
    let mut a: SemigroupArgs = ctx.config.resolve("semigroup", cli)?;
    let t = a.t.ok_or_else(|| CliError::Config("missing t (--t)".into()))?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(CliError::Config(format!("t must be nonnegative, got {t}")));
    }
    let m = *a.m.get_or_insert(200);
    let tol = *a.tol.get_or_insert(1e-10);
    let max_leak = *a.max_leak.get_or_insert(1e-6);
    require_positive("tol", tol)?;
    let mu0 = match &a.init {
        Some(path) => read_measure(path)?,
        None => EmpiricalMeasure::dirac(*a.start.get_or_insert(1)),
    };
    let opts = SemigroupOptions {
        tol,
        max_leak,
        ..SemigroupOptions::default()
    };
    let out = conditioned_semigroup_with(&model, &mu0, t, m, &opts)?;
    println!("model       {}", model.name);
    println!("t           {t}, M {m}, {} RK4 steps", out.steps);
    println!("absorbed    {:.6e}", out.absorbed);
    println!("leaked      {:.3e}", out.leaked);
    for (j, w) in out.law.weights.iter().enumerate().take(10) {
        println!("law({:>2})     {w:.6e}", j + 1);
    }
    if let Some(path) = &a.out {
        let meta = Meta::new("semigroup", None, &model_args, &a);
        write_artifact(path, &meta, &out, |w| out.law.write_csv(w))?;
    }
    Ok(0)
}
