use curvarb::portfolio::{
    check_sufficient_volatility, generate_strategy, verify_relative_arbitrage, GeneratingFunction, StrategyPath,
    VolatilityCondition,
};
use curvarb::sde::{
    circle_ensemble, exit_time_statistics, simulate_market, skew_gradient_ensemble, to_market_path,
    write_ensemble_csv, DiskField, PlanarPath, SimConfig,
};
use curvarb::{build_isometry, mcf2d, Ball, PolytopeK};

fn cfg(dt: f64, n_paths: usize, seed: u64) -> SimConfig {
    SimConfig { dt, n_paths, seed, ..SimConfig::default() }
}

/// Position of a fully recorded path at step `n`.
fn at(p: &PlanarPath, n: usize) -> [f64; 2] {
    p.points[n]
}

#[test]
fn circle_increments_have_zero_mean() {
    // a ball large enough that no path leaves before t = 0.5
    let ball = Ball::new(vec![0.0, 0.0], 10.0);
    let c = SimConfig { t_max: Some(0.5), ..cfg(1e-3, 2000, 11) };
    let e = circle_ensemble([0.3, -0.2], &ball, &c).unwrap();
    for n in [100, 200, 300, 400, 500] {
        for k in 0..2 {
            let xs: Vec<f64> = e.iter().map(|p| at(p, n)[k]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            let start = [0.3, -0.2][k];
            assert!((m - start).abs() < 3.0 * sd / (xs.len() as f64).sqrt() + 1e-12, "step {n} coord {k}");
        }
    }
    // E |X(t)|^2 = |x0|^2 + t
    let r2: f64 = e.iter().map(|p| at(p, 500)[0].powi(2) + at(p, 500)[1].powi(2)).sum::<f64>() / 2000.0;
    assert!((r2 - 0.13 - 0.5).abs() < 0.03, "{r2}");
}

#[test]
fn trace_clock_band_covers_almost_every_path() {
    let k = PolytopeK::simplex(3).unwrap();
    let dt = 1e-4;
    let e = circle_ensemble([0.0, 0.0], &k, &cfg(dt, 1000, 5)).unwrap();
    let inside = e.iter().filter(|p| p.diagnostics.max_trace_deviation <= 5.0 * dt.sqrt()).count();
    assert!(inside >= 990, "{inside}");
    for p in &e {
        // increments are orthogonal to the position, so |X|^2 is the trace
        for (x, tr) in p.points.iter().zip(&p.realized_trace) {
            assert!((x[0] * x[0] + x[1] * x[1] - tr).abs() < 1e-12);
        }
        assert!(p.diagnostics.max_orthogonality <= f64::EPSILON);
    }
}

#[test]
fn circle_exit_concentrates_at_inradius_squared() {
    let k = PolytopeK::simplex(3).unwrap();
    let c = SimConfig { record_every: 0, ..cfg(1e-5, 2000, 9) };
    let s = exit_time_statistics(&circle_ensemble([0.0, 0.0], &k, &c).unwrap()).unwrap();
    let essinf = s.essinf_estimate.value;
    assert!((essinf - 1.0 / 6.0).abs() < 0.05 / 6.0, "{essinf}");
    assert!(s.essinf_estimate.lo <= essinf && essinf <= s.essinf_estimate.hi);
    assert_eq!(s.censored_fraction, 0.0);
}

#[test]
fn skew_gradient_descends_levels_of_the_disk() {
    let disk = Ball::unit(2);
    let dt = 1e-5;
    let c = SimConfig { record_every: 0, ..cfg(dt, 200, 21) };
    let e = skew_gradient_ensemble([0.3, 0.0], &DiskField, &disk, &c).unwrap();
    for p in &e {
        assert!(p.diagnostics.max_level_deviation < 5.0 * dt.sqrt());
        let t = p.exit_time.expect("exits");
        assert!((t - 0.91).abs() <= 0.02, "{t}");
    }
}

#[test]
fn skew_gradient_has_no_drift() {
    let disk = Ball::unit(2);
    let c = SimConfig { t_max: Some(0.3), ..cfg(1e-3, 2000, 4) };
    let e = skew_gradient_ensemble([0.3, 0.2], &DiskField, &disk, &c).unwrap();
    for n in [60, 120, 180, 240, 300] {
        for k in 0..2 {
            let xs: Vec<f64> = e.iter().map(|p| at(p, n)[k]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            assert!((m - [0.3, 0.2][k]).abs() < 3.0 * sd / (xs.len() as f64).sqrt(), "step {n} coord {k}");
        }
    }
}

#[test]
fn ensembles_are_reproducible_across_thread_counts() {
    let k = PolytopeK::simplex(3).unwrap();
    let c = cfg(1e-3, 64, 42);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let e = pool.install(|| circle_ensemble([0.05, 0.0], &k, &c).unwrap());
        let mut buf = Vec::new();
        write_ensemble_csv(&e, &mut buf).unwrap();
        buf
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run(1));
    let other = SimConfig { seed: 43, ..c.clone() };
    let mut buf = Vec::new();
    write_ensemble_csv(&circle_ensemble([0.05, 0.0], &k, &other).unwrap(), &mut buf).unwrap();
    assert_ne!(a, buf);
}

#[test]
fn market_conversion_preserves_the_trace() {
    let k = PolytopeK::simplex(3).unwrap();
    let chart = build_isometry(3).unwrap();
    let dt = 1e-4;
    let e = circle_ensemble([0.0, 0.0], &k, &cfg(dt, 50, 8)).unwrap();
    for p in &e {
        let m = to_market_path(p, &chart).unwrap();
        for n in 0..m.len() {
            assert!((m.trace(n) - p.realized_trace[n]).abs() < 1e-9);
        }
        let v = check_sufficient_volatility(&m, VolatilityCondition::Trace, 5.0 * dt.sqrt()).unwrap();
        assert!(v.satisfied, "margin {}", v.worst_margin);
    }
    // the frozen chart origin is the barycenter market
    let still = PlanarPath {
        times: vec![0.0, 0.5, 1.0],
        points: vec![[0.0, 0.0]; 3],
        realized_trace: vec![0.0; 3],
        exit_time: None,
        diagnostics: Default::default(),
    };
    let m = to_market_path(&still, &chart).unwrap();
    for n in 0..3 {
        assert!(m.weight(n).iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
    }
}

#[test]
fn skew_gradient_markets_admit_quadratic_arbitrage() {
    let k = PolytopeK::simplex(3).unwrap();
    let field = mcf2d::arrival_grid(&k, k.inradius() / 40.0).unwrap();
    let chart = build_isometry(3).unwrap();
    let dt = 1e-4;
    let horizon = 2.0 / 3.0 + 0.05;
    let markets = simulate_market([0.0, 0.0], &field, &k, &chart, &cfg(dt, 100, 13), horizon).unwrap();
    for m in &markets {
        assert!((m.times()[m.len() - 1] - horizon).abs() < 1e-9);
        let v = check_sufficient_volatility(m, VolatilityCondition::Trace, 5.0 * dt.sqrt()).unwrap();
        assert!(v.satisfied, "margin {}", v.worst_margin);
        let s = generate_strategy(m, GeneratingFunction::Quadratic).unwrap();
        assert!(s.self_financing_residual(m) <= StrategyPath::residual_bound(m));
        let r = verify_relative_arbitrage(&s, horizon).unwrap();
        assert!(r.nonneg && r.gain > 0.0, "gain {}", r.gain);
    }
}

#[test]
fn short_horizon_censors_every_path() {
    let disk = Ball::unit(2);
    let c = SimConfig { t_max: Some(0.01), ..cfg(1e-3, 20, 1) };
    let e = skew_gradient_ensemble([0.0, 0.5], &DiskField, &disk, &c).unwrap();
    let s = exit_time_statistics(&e).unwrap();
    assert_eq!(s.censored_fraction, 1.0);
    assert!((s.mean.value - 0.01).abs() < 1e-12);
}
