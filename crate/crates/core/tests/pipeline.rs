use rcmc::{
    compare, generate, parse_native, project, run_step1, simulate, stationary_limit, write_native,
    GeneratorSpec, Method, Mode, YieldVector,
};

#[test]
fn file_round_trip_preserves_results() {
    let spec = GeneratorSpec::new(120, 17).with_weight_range(-40.0, 40.0);
    let k = generate(&spec).unwrap();
    let text = write_native(&k, &spec.header());
    let back = parse_native(&text).unwrap();
    assert_eq!(back, k);
    let a = run_step1(&k, 86400.0, Method::Stable).unwrap();
    let b = run_step1(&back, 86400.0, Method::Stable).unwrap();
    assert_eq!(a.result, b.result);
}

#[test]
fn last_mode_matches_full_mode() {
    let k = generate(&GeneratorSpec::new(80, 4)).unwrap();
    let p = YieldVector::uniform(80);
    let full = simulate(&k, &p, 50.0, Method::Relaxed(1e-16), Mode::Full).unwrap();
    let last = simulate(&k, &p, 50.0, Method::Relaxed(1e-16), Mode::Last).unwrap();
    assert_eq!(last.trajectory.entries.len(), 1);
    let (a, b) = (&last.trajectory.entries[0], full.trajectory.entries.last().unwrap());
    assert_eq!(a.j, b.j);
    assert_eq!(a.t, b.t);
    for (x, y) in a.q.values().iter().zip(b.q.values()) {
        assert!((x - y).abs() <= 1e-13, "{x} vs {y}");
    }
}

#[test]
fn long_horizon_reaches_the_stationary_limit() {
    let k = generate(&GeneratorSpec::new(30, 9).with_weight_range(-1.0, 1.0)).unwrap();
    let p = YieldVector::point_mass(30, 3).unwrap();
    let step = run_step1(&k, 1e12, Method::Stable).unwrap();
    assert_eq!(step.result.k(), 29);
    let traj = project(&k, &step.result, &step.factor, &p, Mode::Last).unwrap();
    let limit = stationary_limit(&k, &p).unwrap();
    for (x, y) in traj.entries[0].q.values().iter().zip(limit.values()) {
        assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
    }
}

#[test]
fn divergence_is_consistent_with_digests() {
    let k = generate(&GeneratorSpec::new(300, 1).with_weight_range(-150.0, 150.0)).unwrap();
    let methods = [Method::Greedy, Method::Fast, Method::LazyFast, Method::Stable, Method::Relaxed(1e-16)];
    let reports = compare(&k, 86400.0, &methods, true).unwrap();
    for r in &reports {
        assert_eq!(r.divergence_index.is_none(), r.pivots_digest == reports[0].pivots_digest, "{}", r.method);
        if let Some(j) = r.divergence_index {
            let (a, b) = (r.pivots.as_ref().unwrap(), reports[0].pivots.as_ref().unwrap());
            assert_eq!(a[..j], b[..j]);
            assert!(a.get(j) != b.get(j));
        }
    }
    assert!(reports[3].divergence_index.is_none());
    assert!(reports[4].divergence_index.is_none());
}
