use super::*;
use crate::lattice::TorusSpec;
use crate::solver::{evolve, SolverConfig};
use crate::spectra::{sample_initial, sample_with_values, Profile, SeedPlan};
use proptest::prelude::*;

fn lattice(d: usize, l: f64, cutoff: f64, seed: u64) -> Lattice<f64> {
    Lattice::new(&TorusSpec::generic(d, l, cutoff, seed).unwrap()).unwrap()
}

fn gaussian_phi(lat: &Lattice<f64>) -> Vec<f64> {
    Profile::default().on_lattice(lat).unwrap()
}

#[test]
fn index_counts_and_signatures() {
    for (n, expect) in [(0, 1), (1, 1), (2, 3), (3, 15), (4, 105)] {
        let idx = enumerate_indices(n, 4).unwrap();
        assert_eq!(idx.len(), expect);
        assert_eq!(index_count(n), expect as u64);
        let total: i32 = idx.iter().map(TreeIndex::signature).sum();
        assert_eq!(total, 1, "n = {n}");
    }
    assert!(matches!(enumerate_indices(5, 4), Err(Error::Budget { .. })));
    assert!(TreeIndex::new(vec![4, 1]).is_err());
    assert_eq!(TreeIndex::new(vec![3, 1]).unwrap().signature(), 1);
    assert_eq!(TreeIndex::new(vec![2, 1]).unwrap().signature(), -1);
}

#[test]
fn assignments_preserve_alternating_momentum() {
    let lat = lattice(2, 2.0, 1.0, 3);
    let k = lat.rank_of(&[1, 0]).unwrap();
    for idx in enumerate_indices(2, 4).unwrap() {
        let list = assignments(&lat, &idx, k, 1_000_000).unwrap();
        assert!(!list.is_empty());
        for a in &list {
            for level in &a.levels {
                let mut sum = vec![0i64; 2];
                for (pos, &r) in level.iter().enumerate() {
                    let s = if pos % 2 == 0 { 1 } else { -1 };
                    for (acc, c) in sum.iter_mut().zip(lat.mode(r)) {
                        *acc += s * c;
                    }
                }
                assert_eq!(sum, lat.mode(k));
            }
        }
    }
}

#[test]
fn first_tree_matches_literal_sum() {
    let lat = lattice(1, 4.0, 2.0, 5);
    let a0 = sample_initial(&lat, &Profile::default(), &SeedPlan::new(2), 0).unwrap();
    let (t, lambda, k) = (0.7, 0.9, 2);
    let eps = coupling(lat.spec(), lambda);
    let mut literal = Complex::default();
    for k1 in 0..lat.len() {
        for k2 in 0..lat.len() {
            let Some(k3) = lat.combine(k, k1, k2) else { continue };
            let om = lat.omega_ranks(k, k1, k2, k3);
            let integral = if om == 0.0 {
                Complex::new(t, 0.0)
            } else {
                (Complex::new(0.0, -std::f64::consts::TAU * om * t).exp() - 1.0) / Complex::new(0.0, -std::f64::consts::TAU * om)
            };
            literal += a0.amps[k1] * a0.amps[k2].conj() * a0.amps[k3] * integral;
        }
    }
    literal *= Complex::new(0.0, eps);
    let idx = TreeIndex::new(vec![1]).unwrap();
    let j = evaluate_j(&lat, &idx, t, k, &a0, lambda, &TreeBudget::default()).unwrap();
    assert!((j - literal).norm() < 1e-13 * literal.norm().max(1.0), "{j} vs {literal}");
}

#[test]
fn truncated_expansion_tracks_solver() {
    let lat = lattice(1, 3.0, 1.0, 9);
    let a0 = sample_initial(&lat, &Profile::default(), &SeedPlan::new(4), 0).unwrap();
    let (t, lambda) = (0.8, 0.6);
    let exact = evolve(&lat, &a0, t, &SolverConfig::new(lambda).with_dt(1e-3)).unwrap();
    let exact = exact.last();
    let budget = TreeBudget::default();
    let mut partial: Vec<Complex<f64>> = vec![Complex::default(); lat.len()];
    let mut errors = Vec::new();
    for n in 0..=3 {
        for (p, v) in partial.iter_mut().zip(evaluate_order(&lat, n, t, &a0, lambda, &budget).unwrap()) {
            *p += v;
        }
        let err = partial.iter().zip(&exact.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        errors.push(err);
    }
    for w in errors.windows(2) {
        assert!(w[1] < 0.2 * w[0], "{errors:?}");
    }
}

#[test]
fn degenerate_parts_and_closed_form() {
    let lat = lattice(2, 2.0, 1.0, 7);
    let a0 = sample_initial(&lat, &Profile::default(), &SeedPlan::new(8), 0).unwrap();
    let (t, lambda) = (1.3, 1.1);
    let budget = TreeBudget::default();
    for n in 1..=2 {
        for idx in enumerate_indices(n, 4).unwrap() {
            for k in [0, 3] {
                let parts = evaluate_j_parts(&lat, &idx, t, k, &a0, lambda, &budget).unwrap();
                assert!((parts.total - parts.degenerate - parts.nondegenerate).norm() < 1e-14);
                let once = degenerate_branch_sum(&lat, &idx, t, k, &a0, lambda, true);
                assert!((once - parts.degenerate).norm() < 1e-12 * once.norm().max(1e-3));
                let twice = degenerate_branch_sum(&lat, &idx, t, k, &a0, lambda, false);
                let closed = evaluate_d(&lat, &idx, t, k, &a0, lambda);
                assert!((twice - closed).norm() < 1e-12 * closed.norm(), "{twice} vs {closed}");
            }
        }
    }
}

#[test]
fn degenerate_moments_cancel() {
    let lat = lattice(1, 3.0, 1.0, 2);
    let phi = gaussian_phi(&lat);
    for order in 1..=4 {
        let report = degenerate_cancellation(order, &lat, &phi, 0.9, 1, 1.2, &TreeBudget::default()).unwrap();
        assert!(report.scale > 0.0);
        assert!(report.relative() < 1e-12, "order {order}: {}", report.relative());
    }
}

#[test]
fn pairing_counts() {
    for (n, n2) in [(0, 0), (1, 0), (1, 1), (2, 1)] {
        let list = enumerate_pairings(n, n2, 1_000_000).unwrap();
        let expect: usize = (1..=n + n2 + 1).product();
        assert_eq!(list.len(), expect);
        let parity = leaf_parities(n, n2);
        for p in &list {
            assert!(p.is_involution());
            assert!(p.psi.iter().enumerate().all(|(j, &q)| parity[j] == -parity[q]));
        }
    }
}

#[test]
fn correlation_matches_monte_carlo() {
    let lat = lattice(1, 3.0, 1.0, 6);
    let phi = gaussian_phi(&lat);
    let idx = TreeIndex::new(vec![1]).unwrap();
    let (t, lambda, k) = (0.9, 1.0, 1);
    let budget = TreeBudget::default();
    let exact = correlation(&lat, &idx, &idx, t, k, &phi, lambda, PhaseModel::Uniform, &budget).unwrap();
    assert!(exact.im.abs() < 1e-14);
    let plan = SeedPlan::new(31);
    let samples = 4000;
    let (mut mean, mut sq) = (0.0, 0.0);
    for s in 0..samples {
        let a0 = sample_with_values(&phi, &plan, s, PhaseModel::Uniform);
        let v = evaluate_j(&lat, &idx, t, k, &a0, lambda, &budget).unwrap().norm_sqr();
        mean += v;
        sq += v * v;
    }
    mean /= samples as f64;
    let stderr = ((sq / samples as f64 - mean * mean) / samples as f64).sqrt();
    assert!((mean - exact.re).abs() < 5.0 * stderr, "{mean} ± {stderr} vs {}", exact.re);
}

#[test]
fn gaussian_weights_exceed_uniform_for_same_tree() {
    let lat = lattice(1, 3.0, 1.0, 6);
    let phi = gaussian_phi(&lat);
    let idx = TreeIndex::root();
    let b = TreeBudget::default();
    let u = correlation(&lat, &idx, &idx, 0.5, 0, &phi, 1.0, PhaseModel::Uniform, &b).unwrap();
    let g = correlation(&lat, &idx, &idx, 0.5, 0, &phi, 1.0, PhaseModel::ComplexGaussian, &b).unwrap();
    assert!((u.re - phi[0]).abs() < 1e-15 && (g.re - phi[0]).abs() < 1e-15);
    let one = TreeIndex::new(vec![1]).unwrap();
    let u = correlation(&lat, &one, &one, 0.5, 0, &phi, 1.0, PhaseModel::Uniform, &b).unwrap();
    let g = correlation(&lat, &one, &one, 0.5, 0, &phi, 1.0, PhaseModel::ComplexGaussian, &b).unwrap();
    assert!(g.re > u.re);
}

#[test]
fn first_order_cross_terms_are_imaginary() {
    let lat = lattice(2, 2.0, 1.0, 4);
    let phi = gaussian_phi(&lat);
    let rows = correlation_table(&lat, 1..=1, 0.8, 2, &phi, 0.7, PhaseModel::Uniform, &TreeBudget::default()).unwrap();
    assert_eq!(rows.len(), 2);
    let sum: Complex<f64> = rows.iter().map(|r| r.value).sum();
    assert!(sum.re.abs() < 1e-15 * rows[0].value.norm().max(1e-300));
}

#[test]
fn leading_formula_approaches_expansion() {
    let t = 1.0;
    let mut gaps = Vec::new();
    for l in [4.0, 8.0, 16.0] {
        let lat = lattice(1, l, 1.0, 12);
        let phi = gaussian_phi(&lat);
        let k = lat.rank_of(&[0]).unwrap();
        let lambda = 1.0;
        let full = second_moment_expansion(&lat, t, k, &phi, lambda, 2, PhaseModel::Uniform, &TreeBudget::default()).unwrap();
        let lead = second_moment_leading(&lat, t, k, &phi, lambda).unwrap();
        gaps.push(((full - lead) / (full - phi[k])).abs());
    }
    assert!(gaps[2] < gaps[0], "{gaps:?}");
}

#[test]
fn csv_export() {
    let lat = lattice(1, 2.0, 1.0, 1);
    let phi = gaussian_phi(&lat);
    let rows = correlation_table(&lat, 0..=1, 0.4, 0, &phi, 1.0, PhaseModel::Uniform, &TreeBudget::default()).unwrap();
    let mut buf = Vec::new();
    write_correlation_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert!(text.starts_with("n,ell,n2,ell2,re,im"));
}

#[test]
fn single_precision_tree() {
    let spec = TorusSpec::generic(1, 3.0, 1.0, 2).unwrap();
    let lat32 = Lattice::<f32>::new(&spec).unwrap();
    let lat64 = Lattice::<f64>::new(&spec).unwrap();
    let a0 = sample_initial(&lat64, &Profile::default(), &SeedPlan::new(1), 0).unwrap();
    let idx = TreeIndex::new(vec![1, 1]).unwrap();
    let b = TreeBudget::default();
    let j64 = evaluate_j(&lat64, &idx, 0.5, 1, &a0, 1.0, &b).unwrap();
    let j32 = evaluate_j(&lat32, &idx, 0.5, 1, &a0.cast::<f32>(), 1.0, &b).unwrap();
    assert!((Complex::new(j32.re as f64, j32.im as f64) - j64).norm() < 1e-4 * j64.norm().max(1e-6));
}

#[test]
fn budget_guard() {
    let lat = lattice(2, 4.0, 2.0, 1);
    let a0 = SpectralField::zeros(lat.len());
    let tight = TreeBudget {
        max_terms: 10.0,
        ..TreeBudget::default()
    };
    let idx = TreeIndex::new(vec![1]).unwrap();
    assert!(matches!(evaluate_j(&lat, &idx, 1.0, 0, &a0, 1.0, &tight), Err(Error::Budget { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_holds_for_random_data(seed in 0u64..1000, t in 0.1f64..2.0, k in 0usize..5) {
        let lat = lattice(1, 2.5, 1.0, seed);
        let k = k % lat.len();
        let a0 = sample_initial(&lat, &Profile::default(), &SeedPlan::new(seed), 0).unwrap();
        let idx = TreeIndex::new(vec![2, 1]).unwrap();
        let parts = evaluate_j_parts(&lat, &idx, t, k, &a0, 1.0, &TreeBudget::default()).unwrap();
        let once = degenerate_branch_sum(&lat, &idx, t, k, &a0, 1.0, true);
        prop_assert!((parts.degenerate - once).norm() <= 1e-12 * once.norm().max(1e-6));
    }

    #[test]
    fn assignment_frequencies_vanish_when_degenerate(seed in 0u64..1000) {
        let lat = lattice(2, 2.0, 1.0, seed);
        let idx = TreeIndex::new(vec![1, 1]).unwrap();
        for a in assignments(&lat, &idx, 0, 1_000_000).unwrap() {
            for j in 1..=2 {
                if a.transition_degenerate(j) {
                    prop_assert!(a.omegas[j - 1].abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn alternating_factorial_sums_vanish() {
    use num_traits::Zero;
    for s in 1..=20 {
        assert!(alternating_factorial_sum(s).is_zero(), "S = {s}");
    }
    assert_eq!(alternating_factorial_sum(0), num_rational::BigRational::from_integer(1.into()));
}
