use bdqsd::model::{linear, logistic};
use bdqsd::simulate::EventKind;
use bdqsd::{fv_run, simulate_bd, stream_rng, xi1, FvConfig, ParticleSystem};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn single_chain_holding_time_and_jump_probabilities() {
    let model = linear(1.0, 2.0);
    let mut rng = stream_rng(11, 0);
    let mut holds = Vec::new();
    let mut ups = 0;
    let runs = 20_000;
    for _ in 0..runs {
        let p = simulate_bd(&model, 3, 100.0, &mut rng).unwrap();
        let first = &p.events[0];
        holds.push(first.time);
        if first.kind == EventKind::Birth {
            ups += 1;
        }
    }
    // Exit rate from 3 is 9, birth probability 1/3.
    let (m, se) = mean_and_se(&holds);
    assert!((m - 1.0 / 9.0).abs() < 3.0 * se, "{m} +- {se}");
    let p = ups as f64 / runs as f64;
    let se_p = (p * (1.0 - p) / runs as f64).sqrt();
    assert!((p - 1.0 / 3.0).abs() < 3.0 * se_p, "{p}");
}

#[test]
fn subcritical_chain_is_absorbed() {
    let model = linear(1.0, 2.0);
    let mut rng = stream_rng(12, 0);
    let absorbed = (0..2000)
        .filter(|_| simulate_bd(&model, 1, 20.0, &mut rng).unwrap().absorbed)
        .count();
    assert!(absorbed as f64 / 2000.0 >= 0.99);
}

#[test]
fn path_events_are_nearest_neighbour() {
    let model = logistic(2.0, 1.0, 1.0);
    let mut rng = stream_rng(13, 0);
    let p = simulate_bd(&model, 4, 50.0, &mut rng).unwrap();
    let mut state = 4;
    let mut t = 0.0;
    for ev in &p.events {
        assert_eq!(ev.from, state);
        assert_eq!(ev.from.abs_diff(ev.to), 1);
        assert!(ev.time > t);
        state = ev.to;
        t = ev.time;
    }
    assert_eq!(p.absorbed, state == 0);
}

#[test]
fn particle_holding_time_is_exponential_with_total_rate() {
    let model = linear(1.0, 2.0);
    let positions = vec![1, 2, 2, 5];
    let total = 3.0 * 10.0;
    let mut sys = ParticleSystem::new(&model, positions, stream_rng(14, 0)).unwrap();
    assert!((sys.total_rate() - total).abs() < 1e-12);
    let draws: Vec<f64> = (0..20_000).map(|_| sys.draw_holding()).collect();
    let (m, se) = mean_and_se(&draws);
    assert!((m - 1.0 / total).abs() < 3.0 * se);
    let (m2, _) = mean_and_se(&draws.iter().map(|x| x * x).collect::<Vec<_>>());
    assert!((m2 / (m * m) - 2.0).abs() < 0.1);
}

#[test]
fn rebirth_rate_is_bounded_and_tracks_decay_parameter() {
    // In the stationary regime particles hit 0 at rate N d_1 rho(1) = N xi_1
    // up to O(1) corrections, and never faster than N d_1 on average.
    let model = linear(1.0, 2.0);
    let n = 100;
    let xi = xi1(&model, 2000, 1e-10).unwrap().xi1;
    let rates: Vec<f64> = (0..8)
        .map(|r| {
            fv_run(&model, vec![1; n], &FvConfig::new(200.0), stream_rng(15, r))
                .unwrap()
                .rebirth_rate
        })
        .collect();
    let (m, se) = mean_and_se(&rates);
    assert!(m <= n as f64 * 2.0 + 3.0 * se);
    assert!((m / n as f64 - xi).abs() < 0.05, "{}", m / n as f64);
}

#[test]
fn particles_are_exchangeable() {
    let model = linear(1.0, 2.0);
    let n = 5;
    let mut first = Vec::new();
    let mut last = Vec::new();
    for r in 0..4000 {
        let run = fv_run(&model, vec![1; n], &FvConfig::new(1.0), stream_rng(16, r)).unwrap();
        first.push(run.final_positions[0] as f64);
        last.push(run.final_positions[n - 1] as f64);
    }
    let (a, sa) = mean_and_se(&first);
    let (b, sb) = mean_and_se(&last);
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
}

#[test]
fn snapshots_follow_the_schedule() {
    let model = logistic(2.0, 1.0, 1.0);
    let mut cfg = FvConfig::new(10.0);
    cfg.observe = vec![7.5, 2.5, 50.0, 5.0];
    let run = fv_run(&model, vec![1; 8], &cfg, stream_rng(17, 0)).unwrap();
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.time).collect();
    assert_eq!(times, vec![2.5, 5.0, 7.5]);
    for s in &run.snapshots {
        assert!((s.measure.total() - 1.0).abs() < 1e-12);
    }
}
