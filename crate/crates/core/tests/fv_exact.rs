//! The two-particle system solved exactly on a truncated state space, as an
//! independent reference for the simulator and the bias experiment.

use bdqsd::model::{linear, logistic};
use bdqsd::{bias_experiment, build_reference, BiasConfig, BirthDeathModel, EmpiricalMeasure, ReferenceKind};

/// Stationary mean empirical measure of the `N = 2` system on `{1..k}^2`,
/// births out of `k` suppressed, by power iteration on the uniformised chain.
fn exact_two_particle_mean(model: &BirthDeathModel, k: usize) -> Vec<f64> {
    let rates: Vec<(f64, f64)> = (1..=k as u64).map(|i| model.rates(i).unwrap()).collect();
    let id = |i: usize, j: usize| i * k + j;
    // Each particle moves independently; the one at 1 dying jumps onto the
    // other.
    let mut moves: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k * k];
    let mut lambda: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let out = &mut moves[id(i, j)];
            for (me, other, first) in [(i, j, true), (j, i, false)] {
                let (b, d) = rates[me];
                let place = |to: usize| if first { id(to, other) } else { id(other, to) };
                if me + 1 < k {
                    out.push((place(me + 1), b));
                }
                out.push((place(if me == 0 { other } else { me - 1 }), d));
            }
            lambda = lambda.max(out.iter().map(|m| m.1).sum());
        }
    }
    let mut p = vec![0.0; k * k];
    p[id(0, 0)] = 1.0;
    let mut next = vec![0.0; k * k];
    for _ in 0..200_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (s, out) in moves.iter().enumerate() {
            let mut stay = p[s];
            for &(t, r) in out {
                let f = p[s] * r / lambda;
                next[t] += f;
                stay -= f;
            }
            next[s] += stay;
        }
        let change: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if change < 1e-15 {
            break;
        }
    }
    let mut mean = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            mean[i] += 0.5 * p[id(i, j)];
            mean[j] += 0.5 * p[id(i, j)];
        }
    }
    mean
}

fn check(model: BirthDeathModel, k: usize, kind: ReferenceKind, expected_l1: f64) {
    let exact = EmpiricalMeasure::from_dense(&exact_two_particle_mean(&model, k)).unwrap();
    let reference = build_reference(&model, &kind, 0).unwrap();
    let exact_l1 = bdqsd::l1_distance(&exact, &reference);
    assert!((exact_l1 - expected_l1).abs() < 2e-4, "{model}: exact bias {exact_l1}");

    let cfg = BiasConfig {
        t_max: 4000.0,
        replicas: 10,
        seed: 5,
        ..BiasConfig::default()
    };
    let report = bias_experiment(&model, &[2], &cfg, &reference, kind).unwrap();
    let row = &report.rows[0];
    let sim_vs_exact = bdqsd::l1_distance(&row.mean, &exact);
    assert!(sim_vs_exact < 0.02, "{model}: simulated mean off by {sim_vs_exact}");
    assert!((row.tv - exact_l1).abs() < 4.0 * row.se + 0.01, "{model}: {} vs {exact_l1}", row.tv);
}

#[test]
fn linear_two_particle_bias() {
    check(linear(1.0, 2.0), 40, ReferenceKind::ClosedForm, 0.1905);
}

#[test]
fn logistic_two_particle_bias() {
    check(logistic(2.0, 1.0, 1.0), 16, ReferenceKind::TruncatedEigenvector { m: 200 }, 0.01747);
}
