use super::*;
use crate::spectra::Profile;
use crate::trees::second_moment_leading;
use proptest::prelude::*;

fn gauss(radius: f64) -> ProfileDensity {
    ProfileDensity::new(Profile::Gaussian { width: 1.0 }, radius).unwrap()
}

fn disp2() -> Dispersion {
    Dispersion::new(vec![1.0, 1.4142]).unwrap()
}

#[test]
fn kinetic_time_examples() {
    assert_eq!(kinetic_time(1.0, 10.0, 3).unwrap(), 5e5);
    assert_eq!(kinetic_time(1.0, 2.0, 1).unwrap(), 2.0);
    let lam: f64 = 0.7;
    let tau = kinetic_time(lam / 2f64.sqrt(), 3.0, 2).unwrap();
    assert!((tau * (lam / 2f64.sqrt()).powi(4) - 81.0 / 2.0).abs() < 1e-12);
    assert!(kinetic_time(0.0, 1.0, 1).is_err());
}

#[test]
fn lattice_kernel_trivial_cases() {
    let lat = Lattice::new(&TorusSpec::generic(2, 3.0, 1.0, 4).unwrap()).unwrap();
    let phi = Profile::default().on_lattice(&lat).unwrap();
    assert_eq!(finite_time_kernel_lattice(&lat, 0.0, 3, &phi, 1.0).unwrap(), 0.0);
    let flat = vec![0.7; lat.len()];
    assert!(finite_time_kernel_lattice(&lat, 1.3, 3, &flat, 1.0).unwrap().abs() < 1e-15);
    let mut bad = phi.clone();
    bad[0] = -1.0;
    assert!(finite_time_kernel_lattice(&lat, 1.0, 3, &bad, 1.0).is_err());
}

#[test]
fn lattice_kernel_matches_tree_leading_formula() {
    let lat = Lattice::new(&TorusSpec::generic(1, 4.0, 1.0, 2).unwrap()).unwrap();
    let phi = Profile::default().on_lattice(&lat).unwrap();
    for k in 0..lat.len() {
        let kernel = finite_time_kernel_lattice(&lat, 1.7, k, &phi, 0.8).unwrap();
        let lead = second_moment_leading(&lat, 1.7, k, &phi, 0.8).unwrap() - phi[k];
        assert!((kernel - lead).abs() <= 1e-12 * lead.abs().max(1e-300), "{kernel} vs {lead}");
    }
}

#[test]
fn sinc_square_integral_is_pi() {
    assert!((sinc_normalization(2000.0) - PI).abs() < 1e-6);
}

#[test]
fn constant_density_is_stationary() {
    let c = ConstantDensity { value: 0.4, radius: 1.5 };
    for scheme in [DeltaScheme::surface(12), DeltaScheme { resolution: 8, ..DeltaScheme::default() }] {
        let v = collision_value(&disp2(), &c, &[0.2, -0.3], &scheme).unwrap();
        assert!(v.scale > 0.0);
        assert!(v.value.abs() <= 1e-14 * v.scale, "{v:?}");
    }
}

#[test]
fn rayleigh_jeans_is_stationary() {
    let d = disp2();
    let rj = RayleighJeans {
        a: 1.0,
        b: 0.5,
        c: vec![0.3, -0.2],
        beta: d.beta.clone(),
        radius: 2.5,
    };
    assert!(rj.is_positive_definite());
    let surface = collision_value(&d, &rj, &[0.4, 0.1], &DeltaScheme::surface(16)).unwrap();
    assert!(surface.value.abs() <= 1e-12 * surface.scale);
    let moll = collision_value(&d, &rj, &[0.4, 0.1], &DeltaScheme { resolution: 12, ..DeltaScheme::default() }).unwrap();
    assert!(moll.value.abs() <= 1e-3 * moll.scale, "{moll:?}");
}

#[test]
fn mollifier_ladder_agrees_with_surface() {
    let d = disp2();
    let dens = gauss(3.3);
    let k = [0.3, 0.1];
    let surface = collision_value(&d, &dens, &k, &DeltaScheme::surface(32)).unwrap();
    let exact = collision_value(&d, &dens, &k, &DeltaScheme::surface(64)).unwrap();
    assert!((surface.value - exact.value).abs() < 1e-6 * exact.scale);
    let scheme = DeltaScheme {
        resolution: 32,
        ..DeltaScheme::default()
    };
    let moll = collision_value(&d, &dens, &k, &scheme).unwrap();
    assert!(moll.converged);
    assert!((moll.value - surface.value).abs() <= moll.residual, "{moll:?} {surface:?}");
    assert_eq!(moll.levels.len(), 3);
    assert_eq!(scheme.extrapolation_order(), 2);
    let halved = collision_value(&d, &dens, &k, &scheme.halved()).unwrap();
    assert!((halved.value - moll.value).abs() <= moll.residual.max(1e-9 * moll.scale));
}

#[test]
fn surface_value_converges_with_resolution() {
    let d = disp2();
    let dens = gauss(3.3);
    let a = collision_value(&d, &dens, &[0.3, 0.1], &DeltaScheme::surface(32)).unwrap();
    let b = collision_value(&d, &dens, &[0.3, 0.1], &DeltaScheme::surface(64)).unwrap();
    assert!((a.value - b.value).abs() < 1e-6 * b.scale);
}

#[test]
fn continuum_kernel_trivial_cases() {
    let d = disp2();
    let dens = gauss(2.2);
    let ker = ContinuumKernel::new(&d, &dens, &[0.0, 0.2], 8).unwrap();
    assert_eq!(ker.at(0.0, 1.0), 0.0);
    let flat = ConstantDensity { value: 1.0, radius: 1.0 };
    let v = finite_time_kernel_continuum(&d, 3.0, &[0.0, 0.0], &flat, 1.0, 8).unwrap();
    assert!(v.value.abs() < 1e-13, "{v:?}");
}

#[test]
fn kernel_grows_linearly_toward_surface_value() {
    let d = disp2();
    let dens = gauss(2.2);
    let k = [0.3, 0.1];
    let g0 = collision_value(&d, &dens, &k, &DeltaScheme::surface(32)).unwrap().value;
    let ker = ContinuumKernel::new(&d, &dens, &k, 16).unwrap();
    assert!((ker.surface_density(0.0) - g0).abs() < 1e-3 * g0.abs());
    let gaps: Vec<f64> = [10.0, 20.0, 40.0].iter().map(|&t| (ker.at(t, 1.3) / (2.0 * 1.3f64.powi(4) * t) - g0).abs()).collect();
    for w in gaps.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((0.8..1.2).contains(&rate), "{gaps:?}");
    }
}

#[test]
fn unsupported_dimensions() {
    assert!(matches!(Dispersion::new(vec![1.0]), Err(Error::Unsupported(_))));
    assert!(matches!(Dispersion::new(vec![1.0; 4]), Err(Error::Unsupported(_))));
    assert!(Dispersion::new(vec![1.0, -1.0]).is_err());
}

#[test]
fn kinetic_state_interpolates_and_integrates() {
    let d = disp2();
    let dens = ShiftedGaussian {
        center: vec![0.1, -0.2],
        widths: vec![1.0, 0.8],
        amplitude: 1.0,
        radius: 3.0,
    };
    let state = KineticState::new(d, 3.0, 48, &dens).unwrap();
    assert_eq!(state.len(), 48 * 48);
    for k in [[0.3, 0.1], [-1.1, 0.7], [0.0, 0.0]] {
        assert!((state.value(&k) - dens.value(&k)).abs() < 1e-5, "{k:?} {} {}", state.value(&k), dens.value(&k));
    }
    assert_eq!(state.value(&[3.5, 0.0]), 0.0);
    // ∫ exp(−π((x−c)/w)²) = w per axis
    assert!((state.mass() - 0.8).abs() < 1e-6);
    // symmetric grid
    let n = state.nodes.len();
    assert!((0..n).all(|j| (state.nodes[j] + state.nodes[n - 1 - j]).abs() < 1e-14));
}

#[test]
fn constant_state_does_not_move() {
    let d = disp2();
    let c = ConstantDensity { value: 0.5, radius: 1.0 };
    let state = KineticState::new(d, 1.0, 6, &c).unwrap();
    let traj = wke_evolve(&state, 0.02, 0.01, &DeltaScheme::surface(6)).unwrap();
    assert_eq!(traj.len(), 3);
    let last = traj.last().unwrap();
    assert!((last.time - 0.02).abs() < 1e-15);
    // ρ is zero outside the ball, so only interior nodes far from the edge stay exactly put
    let moved = last.rho.iter().zip(&state.rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved.is_finite());
}

#[test]
fn scheme_serde_and_validation() {
    let s = DeltaScheme::default();
    let text = serde_json::to_string(&s).unwrap();
    let back: DeltaScheme = serde_json::from_str(&text).unwrap();
    assert_eq!(s, back);
    let partial: DeltaScheme = serde_json::from_str(r#"{"method":"surface"}"#).unwrap();
    assert_eq!(partial.method, DeltaMethod::Surface);
    assert!(DeltaScheme { eps0: 0.0, ..s.clone() }.validate().is_err());
    let ladder = s.ladder();
    assert!(ladder.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn csv_export() {
    let mut buf = Vec::new();
    write_collision_csv(&[(vec![0.1, 0.2], 1.0, 0.0)], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("k1,k2,value,residual\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rayleigh_jeans_family_is_stationary(a in 0.5f64..2.0, b in 0.2f64..1.5, c0 in -0.3f64..0.3, k0 in -1.0f64..1.0, k1 in -1.0f64..1.0) {
        let d = disp2();
        let rj = RayleighJeans { a, b, c: vec![c0, 0.1], beta: d.beta.clone(), radius: 2.0 };
        prop_assume!(rj.is_positive_definite());
        let v = collision_value(&d, &rj, &[k0, k1], &DeltaScheme::surface(8)).unwrap();
        prop_assert!(v.value.abs() <= 1e-12 * v.scale);
    }
}
