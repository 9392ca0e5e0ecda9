//! Oscillatory integrals over the time simplex, evaluated as divided differences of
//! the exponential.

use num_complex::Complex;

use crate::scalar::Real;

/// Blocks whose node spread satisfies `2π·spread·t` below this value use the Taylor form.
pub const TAYLOR_SPREAD: f64 = 1.0;

/// `∫_{0≤t_1≤…≤t_n≤t} Π_m e^{−2πi t_m Ω_m} dt`.
///
/// With `c_j = Ω_{j+1} + … + Ω_n` (so `c_n = 0`) the integral is the divided
/// difference of `z ↦ e^{tz}` at the nodes `z_j = −2πi c_j`.
pub fn simplex_oscillatory_integral<T: Real>(omegas: &[T], t: T) -> Complex<T> {
    let n = omegas.len();
    let mut c = vec![T::zero(); n + 1];
    for j in (0..n).rev() {
        c[j] = c[j + 1] + omegas[j];
    }
    exp_divided_difference(&mut c, t)
}

/// Divided difference of `e^{−2πi c t}` over the real nodes `c` (reordered in place).
///
/// Sorted nodes make every contiguous block's spread its end-to-end distance; blocks
/// that are tight relative to `1/t` are summed by the confluent Taylor series
/// `e^{tζ} Σ_q t^{k+q}/(k+q)! h_q(z − ζ)`, the rest by the recursive table.
pub fn exp_divided_difference<T: Real>(c: &mut [T], t: T) -> Complex<T> {
    let n = c.len();
    assert!(n >= 1);
    if t == T::zero() {
        return if n == 1 { Complex::new(T::one(), T::zero()) } else { Complex::default() };
    }
    c.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
    let two_pi = T::lit(std::f64::consts::TAU);
    let z = |j: usize| Complex::new(T::zero(), -two_pi * c[j]);
    // table[i] holds f[z_i, …, z_{i+width}]
    let mut table: Vec<Complex<T>> = (0..n).map(|i| (z(i) * t).exp()).collect();
    for width in 1..n {
        for i in 0..n - width {
            let spread = c[i + width] - c[i];
            table[i] = if (two_pi * spread * t).abs().as_f64() < TAYLOR_SPREAD {
                taylor_block(&c[i..=i + width], t)
            } else {
                (table[i + 1] - table[i]) / (z(i + width) - z(i))
            };
        }
    }
    table[0]
}

fn taylor_block<T: Real>(c: &[T], t: T) -> Complex<T> {
    let k = c.len() - 1;
    let two_pi = T::lit(std::f64::consts::TAU);
    let center = c.iter().fold(T::zero(), |a, &b| a + b) / T::lit(c.len() as f64);
    let w: Vec<Complex<T>> = c.iter().map(|&x| Complex::new(T::zero(), -two_pi * (x - center) * t)).collect();
    // h[q] over the first i variables; iterate over variables, updating in place.
    const TERMS: usize = 40;
    let mut h = [Complex::<T>::default(); TERMS];
    h[0] = Complex::new(T::one(), T::zero());
    for wi in &w {
        for q in 1..TERMS {
            h[q] = h[q] + *wi * h[q - 1];
        }
    }
    // Σ_q h_q(w t) / (k+q)!, with the t^k prefactor applied at the end
    let mut sum = Complex::default();
    let mut fact = T::one();
    for i in 1..=k {
        fact = fact * T::lit(i as f64);
    }
    let eps = T::epsilon();
    let mut small = 0;
    for (q, hq) in h.iter().enumerate() {
        if q > 0 {
            fact = fact * T::lit((k + q) as f64);
        }
        let term = *hq / fact;
        sum = sum + term;
        // symmetric nodes make odd h_q vanish, so require two quiet terms in a row
        small = if term.norm() <= eps * sum.norm() { small + 1 } else { 0 };
        if small == 2 {
            break;
        }
    }
    let phase = Complex::new(T::zero(), -two_pi * center * t).exp();
    sum * phase * t.powi(k as i32)
}

/// `|sin(πtΩ)/(πΩ)|²`, equal to `t²` at `Ω = 0`.
pub fn sinc_squared(omega: f64, t: f64) -> f64 {
    let x = std::f64::consts::PI * omega;
    if (x * t).abs() < 1e-8 {
        t * t
    } else {
        let s = (x * t).sin() / x;
        s * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Rule;
    use proptest::prelude::*;

    /// Nested Gauss quadrature of the ordered-time integral, independent of the node formula.
    fn iterated_quadrature(omegas: &[f64], t: f64) -> Complex<f64> {
        fn inner(omegas: &[f64], upper: f64) -> Complex<f64> {
            // integrates over t_1 ≤ … ≤ t_m ≤ upper, innermost variable first
            match omegas.split_last() {
                None => Complex::new(1.0, 0.0),
                Some((&last, rest)) => {
                    let panels = ((upper * last.abs() * 3.0).ceil() as usize).clamp(2, 64);
                    let rule = Rule::uniform(0.0, upper, panels, 16);
                    let mut acc = Complex::default();
                    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
                        let phase = Complex::from_polar(1.0, -std::f64::consts::TAU * s * last);
                        acc += inner(rest, s) * phase * w;
                    }
                    acc
                }
            }
        }
        inner(omegas, t)
    }

    #[test]
    fn closed_forms() {
        assert!((simplex_oscillatory_integral(&[0.0], 2.5) - Complex::new(2.5, 0.0)).norm() < 1e-15);
        assert!(simplex_oscillatory_integral(&[1.0], 1.0).norm() < 1e-15);
        for n in 0..5usize {
            let t = 1.3f64;
            let fact: f64 = (1..=n).map(|i| i as f64).product();
            let v = simplex_oscillatory_integral(&vec![0.0; n], t);
            assert!((v - Complex::new(t.powi(n as i32) / fact, 0.0)).norm() < 1e-14);
        }
        // n = 1 literal: (1 − e^{−2πitΩ}) / (2πiΩ)
        let (w, t) = (0.37, 2.2);
        let lit = (Complex::new(1.0, 0.0) - Complex::from_polar(1.0, -std::f64::consts::TAU * t * w))
            / Complex::new(0.0, std::f64::consts::TAU * w);
        assert!((simplex_oscillatory_integral(&[w], t) - lit).norm() < 1e-14);
    }

    #[test]
    fn clustered_nodes_match_quadrature() {
        let cases: &[&[f64]] = &[
            &[1e-9, -1e-9],
            &[0.3, -0.3 + 1e-7],
            &[0.5, 1e-6, -0.5],
            &[2.0, -2.0 + 1e-12, 1e-5],
            &[0.05, 0.02, -0.07],
        ];
        for om in cases {
            for &t in &[0.5, 3.0] {
                let a = simplex_oscillatory_integral(om, t);
                let b = iterated_quadrature(om, t);
                assert!((a - b).norm() < 1e-9, "{om:?} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn single_precision_instantiation() {
        let a = simplex_oscillatory_integral(&[0.4f32, -0.1], 1.5);
        let b = simplex_oscillatory_integral(&[0.4f64, -0.1], 1.5);
        assert!(((a.re as f64 - b.re).powi(2) + (a.im as f64 - b.im).powi(2)).sqrt() < 1e-5);
    }

    #[test]
    fn sinc_normalization() {
        let t = 1.7;
        assert_eq!(sinc_squared(0.0, t), t * t);
        assert!((sinc_squared(1e-12, t) - t * t).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn random_frequencies_match_quadrature(
            om in prop::collection::vec(-3.0f64..3.0, 1..=3),
            t in 0.1f64..2.0,
        ) {
            let a = simplex_oscillatory_integral(&om, t);
            let b = iterated_quadrature(&om, t);
            prop_assert!((a - b).norm() < 1e-9, "{:?} t={} {} {}", om, t, a, b);
        }

        #[test]
        fn divided_difference_is_symmetric(mut c in prop::collection::vec(-2.0f64..2.0, 2..=5), t in 0.1f64..3.0) {
            let a = exp_divided_difference(&mut c.clone(), t);
            c.reverse();
            let b = exp_divided_difference(&mut c, t);
            prop_assert!((a - b).norm() < 1e-13);
        }
    }
}
