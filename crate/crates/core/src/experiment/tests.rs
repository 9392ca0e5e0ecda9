use super::*;
use crate::collision::kinetic_time;
use proptest::prelude::*;

fn small(lambda: f64, times: Vec<f64>, m: usize) -> ExperimentConfig {
    ExperimentConfig::new(TorusSpec::generic(1, 4.0, 1.0, 2).unwrap(), lambda, times, m, 17)
}

fn strip(mut r: EnsembleResult) -> EnsembleResult {
    r.metadata.seconds = 0.0;
    r
}

#[test]
fn zero_coupling_keeps_the_profile() {
    let cfg = small(0.0, vec![0.0, 1.0, 3.0], 20);
    let res = run_ensemble(&cfg, None).unwrap();
    let lat = Lattice::<f64>::new(&cfg.spec).unwrap();
    let phi = cfg.profile.on_lattice(&lat).unwrap();
    for s in 0..3 {
        for (r, p) in phi.iter().enumerate() {
            assert!((res.mean[s][r] - p).abs() <= 1e-15 * p.max(1.0));
            assert!(res.stderr[s][r] <= 1e-15);
        }
    }
    assert!(res.mass_consistent());
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = small(1.0, vec![0.5], 1);
    let a = strip(run_ensemble(&cfg, None).unwrap());
    let b = strip(run_ensemble(&cfg, None).unwrap());
    assert_eq!(a, b);
    assert!(a.stderr[0].iter().all(|e| *e == 0.0));
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = small(1.5, vec![0.2, 0.4], 70);
    cfg.block = 8;
    let one = strip(run_ensemble(&cfg, Some(1)).unwrap());
    let three = strip(run_ensemble(&cfg, Some(3)).unwrap());
    assert_eq!(one, three);
    assert_eq!(one.metadata.config_hash, cfg.hash());
}

#[test]
fn standard_errors_follow_the_square_root_law() {
    let mut cfg = small(2.0, vec![1.0], 400);
    let lat = Lattice::<f64>::new(&cfg.spec).unwrap();
    let spread = |res: &EnsembleResult| {
        let mut e: Vec<f64> = res.stderr[0].clone();
        e.sort_by(f64::total_cmp);
        e[e.len() / 2]
    };
    let base = spread(&run_ensemble(&cfg, None).unwrap());
    cfg.ensemble = 800;
    let double = spread(&run_ensemble(&cfg, None).unwrap());
    cfg.ensemble = 1600;
    let quad = spread(&run_ensemble(&cfg, None).unwrap());
    assert!(lat.len() > 3);
    let r2 = base / double;
    let r4 = base / quad;
    assert!((1.3..=1.6).contains(&r2), "doubling ratio {r2}");
    assert!((1.7..=2.3).contains(&r4), "quadrupling ratio {r4}");
}

#[test]
fn ensemble_matches_second_order_trees() {
    let spec = TorusSpec::generic(1, 4.0, 1.0, 2).unwrap();
    let lambda = 1.5;
    let tau = kinetic_time(lambda, 4.0, 1).unwrap();
    let t = 0.1 * tau.sqrt();
    let mut cfg = ExperimentConfig::new(spec, lambda, vec![0.0, t], 2000, 9);
    cfg.tree_order = Some(2);
    let res = run_ensemble(&cfg, None).unwrap();
    let tree = res.target("tree_order_2").unwrap();
    assert!(tree.max_z[1] < 4.0, "{tree:?}");
    assert_eq!(tree.sup_discrepancy[0], 0.0);
    assert!(res.max_mass_drift < 1e-8);
    assert!(res.mass_consistent());
}

#[test]
fn member_failures_name_the_sample() {
    let mut cfg = small(1e6, vec![1.0], 3);
    cfg.dt = Some(0.5);
    match run_ensemble(&cfg, None) {
        Err(Error::Member { sample, .. }) => assert_eq!(sample, 0),
        other => panic!("expected a member failure, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(run_ensemble(&small(1.0, vec![1.0], 0), None).is_err());
    assert!(run_ensemble(&small(1.0, vec![2.0, 1.0], 1), None).is_err());
    let mut cfg = small(1.0, vec![1.0], 1);
    cfg.tree_order = Some(3);
    assert!(matches!(run_ensemble(&cfg, None), Err(Error::Unsupported(_))));
    cfg.tree_order = None;
    cfg.kinetic = true;
    assert!(matches!(run_ensemble(&cfg, None), Err(Error::Unsupported(_))));
}

#[test]
fn kinetic_check_reports_noise_at_time_zero() {
    let spec = TorusSpec::generic(2, 3.0, 1.0, 5).unwrap();
    let lambda = 2.0;
    let tau = kinetic_time(lambda, 3.0, 2).unwrap();
    let mut cfg = ExperimentConfig::new(spec.clone(), lambda, vec![0.0, 0.05 * tau], 64, 3);
    cfg.tree_order = Some(2);
    cfg.kinetic = true;
    cfg.kinetic_scheme = DeltaScheme::surface(8);
    let res = run_ensemble(&cfg, None).unwrap();
    assert!(res.target("kinetic").is_some());
    let report = kinetic_check(&res, &cfg.profile, lambda, &spec, &cfg.kinetic_scheme).unwrap();
    assert_eq!(report.rows.len(), 2);
    let zero = &report.rows[0];
    assert!(zero.kinetic_normalized <= zero.noise_normalized + 1e-12, "{zero:?}");
    assert!(report.rows[1].tree_normalized.is_some());
    assert!((report.tau - tau).abs() < 1e-9 * tau);
}

#[test]
fn single_mode_strichartz_ratio_is_one() {
    let spec = TorusSpec::generic(2, 4.0, 1.0, 1).unwrap();
    let profile = Profile::Table {
        entries: vec![(vec![1, 2], 2.5)],
    };
    let one = strichartz_check(&spec, &profile, 1.0, 3, 4, 5).unwrap();
    assert!((one.ratio - 1.0).abs() < 1e-12, "{one:?}");
    let two = strichartz_check(&spec, &profile, 2.0, 3, 4, 5).unwrap();
    assert!((two.mean_norm4 / one.mean_norm4 - 2.0).abs() < 1e-12);
}

#[test]
fn strichartz_ratio_is_stable_in_l() {
    let reports: Vec<StrichartzReport> = [4.0, 8.0]
        .iter()
        .map(|&l| strichartz_check(&TorusSpec::generic(2, l, 1.0, 1).unwrap(), &Profile::default(), 1.0, 40, 2, 9).unwrap())
        .collect();
    assert!(strichartz_band(&reports) < 1.3, "{reports:?}");
    assert!(reports.iter().all(|r| r.ratio > 1.0 && r.ratio < 2.0));
}

#[test]
fn regime_parameter_examples() {
    assert!((strichartz_theta(3).unwrap() - 30.0 / 13.0).abs() < 1e-15);
    assert!((strichartz_theta(4).unwrap() - 8.0 / 3.0).abs() < 1e-15);
    assert_eq!(strichartz_theta(2), None);
    let p = regime_params(1.0, 16.0, 3, 0.01, 1.0, 100.0).unwrap();
    assert_eq!(p.tau, kinetic_time(1.0, 16.0, 3).unwrap());
    assert_eq!(p.windows.len(), 2);
    assert!(p.windows[0].applies && !p.windows[1].applies);
    assert!(regime_params(5.0, 16.0, 3, 0.01, 1.0, 100.0).unwrap().windows[1].applies);
    // below both coupling windows
    assert!(regime_params(0.3, 16.0, 3, 0.01, 1.0, 100.0).unwrap().windows.iter().all(|w| !w.applies));
    let r = p.r.unwrap();
    let expect = 12.0 * (p.s_star.unwrap() * p.interaction).powi(2);
    assert!((r - expect).abs() < 1e-12 * expect);
    let low = regime_params(0.3, 16.0, 2, 0.01, 1.0, 100.0).unwrap();
    assert!(low.theta.is_none() && low.r.is_none() && low.windows.is_empty());
    assert!(regime_params(0.0, 16.0, 3, 0.01, 1.0, 1.0).is_err());
}

#[test]
fn outputs_land_in_the_directory() {
    let mut cfg = small(1.0, vec![0.0, 0.5], 4);
    cfg.tree_order = Some(0);
    let res = run_ensemble(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&res, dir.path()).unwrap();
    for f in ["spectra_0.csv", "spectra_1.csv", "long.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let long = std::fs::read_to_string(dir.path().join("long.csv")).unwrap();
    assert!(long.starts_with("k_norm,t,mean,stderr,target,discrepancy\n"));
    assert_eq!(long.lines().count(), 1 + 2 * res.modes.len());
    let back: EnsembleResult = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, res);
}

#[test]
fn configs_round_trip_and_hash_stably() {
    let cfg = small(1.0, vec![0.5], 4);
    let text = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(cfg.hash().len(), 64);
}

proptest! {
    #[test]
    fn welford_merge_matches_a_single_pass(xs in prop::collection::vec(-10.0f64..10.0, 1..40), cut in 0usize..40) {
        let cut = cut.min(xs.len());
        let mut whole = Welford::default();
        xs.iter().for_each(|x| whole.push(*x));
        let (mut a, mut b) = (Welford::default(), Welford::default());
        xs[..cut].iter().for_each(|x| a.push(*x));
        xs[cut..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        prop_assert_eq!(a.n, whole.n);
        prop_assert!((a.mean - whole.mean).abs() < 1e-12);
        prop_assert!((a.m2 - whole.m2).abs() < 1e-9 * (1.0 + whole.m2));
    }
}
