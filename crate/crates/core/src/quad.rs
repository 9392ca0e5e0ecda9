//! Quadrature rules and special functions used by the integral evaluators.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A one-dimensional rule as parallel node/weight vectors.
#[derive(Clone, Debug, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Composite Gauss–Legendre rule with `order` nodes on each panel.
    pub fn panels(edges: &[f64], order: usize) -> Rule {
        let (x, w) = gauss_legendre(order);
        let mut rule = Rule::default();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (xi, wi) in x.iter().zip(&w) {
                rule.nodes.push(mid + half * xi);
                rule.weights.push(half * wi);
            }
        }
        rule
    }

    /// `count` equal Gauss–Legendre panels on [a, b].
    pub fn uniform(a: f64, b: f64, count: usize, order: usize) -> Rule {
        let count = count.max(1);
        let edges: Vec<f64> = (0..=count)
            .map(|i| a + (b - a) * i as f64 / count as f64)
            .collect();
        Rule::panels(&edges, order)
    }

    /// Periodic trapezoid rule with `n` points on [0, period).
    pub fn periodic(period: f64, n: usize) -> Rule {
        let h = period / n as f64;
        Rule {
            nodes: (0..n).map(|i| i as f64 * h).collect(),
            weights: vec![h; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Panel edges on [0, b] refined geometrically towards 0: `[0, b 2^-levels, ..., b/2, b]`,
/// with the outermost part split into `outer` equal panels.
pub fn graded_edges(b: f64, levels: usize, outer: usize) -> Vec<f64> {
    let outer = outer.max(1);
    let first = b / outer as f64;
    let mut edges = vec![0.0];
    for j in (1..=levels).rev() {
        edges.push(first * 0.5f64.powi(j as i32));
    }
    for i in 1..=outer {
        edges.push(first * i as f64);
    }
    edges
}

/// Adaptive Simpson quadrature, used as an independent reference in tests and checks.
pub fn adaptive_simpson(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &mut dyn FnMut(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Fresnel integrals `C(x) = ∫_0^x cos(πt²/2) dt`, `S(x) = ∫_0^x sin(πt²/2) dt`.
///
/// Power series for small arguments, complementary-error-function continued
/// fraction (modified Lentz) otherwise.
pub fn fresnel(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;
    const XMIN: f64 = 1.5;
    let ax = x.abs();
    let (c, s) = if ax < 1e-150 {
        (ax, 0.0)
    } else if ax <= XMIN {
        let fact = 0.5 * PI * ax * ax;
        let (mut sumc, mut sums) = (ax, 0.0);
        let mut term = ax;
        let mut sign = 1.0;
        let mut k = 1usize;
        loop {
            // odd k feeds S, even k feeds C; both alternate in sign every other term
            term *= fact / k as f64;
            let n = (2 * k + 1) as f64;
            if k % 2 == 1 {
                sums += sign * term / n;
            } else {
                sign = -sign;
                sumc += sign * term / n;
            }
            if term / n < EPS * sumc.abs().max(sums.abs()) || k > 200 {
                break;
            }
            k += 1;
        }
        (sumc, sums)
    } else {
        let pix2 = PI * ax * ax;
        let one = (1.0, 0.0);
        let mut b = (1.0, -pix2);
        let mut cc = (1.0 / FPMIN, 0.0);
        let mut d = cdiv(one, b);
        let mut h = d;
        let mut n = -1.0;
        for _ in 2..400 {
            n += 2.0;
            let a = -n * (n + 1.0);
            b = (b.0 + 4.0, b.1);
            d = cdiv(one, (a * d.0 + b.0, a * d.1 + b.1));
            let q = cdiv((a, 0.0), cc);
            cc = (b.0 + q.0, b.1 + q.1);
            let del = cmul(cc, d);
            h = cmul(h, del);
            if (del.0 - 1.0).abs() + del.1.abs() < EPS {
                break;
            }
        }
        h = cmul((ax, -ax), h);
        let e = ((0.5 * pix2).cos(), (0.5 * pix2).sin());
        let eh = cmul(e, h);
        let cs = cmul((0.5, 0.5), (1.0 - eh.0, -eh.1));
        (cs.0, cs.1)
    };
    if x < 0.0 {
        (-c, -s)
    } else {
        (c, s)
    }
}

fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn cdiv(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let den = b.0 * b.0 + b.1 * b.1;
    ((a.0 * b.0 + a.1 * b.1) / den, (a.1 * b.0 - a.0 * b.1) / den)
}

/// `∫_0^u e^{iξx²} dx` for real `u` and `ξ`, as (re, im).
pub fn chirp_integral(xi: f64, u: f64) -> (f64, f64) {
    if xi == 0.0 {
        return (u, 0.0);
    }
    let scale = (PI / (2.0 * xi.abs())).sqrt();
    let (c, s) = fresnel(u * (2.0 * xi.abs() / PI).sqrt());
    (scale * c, xi.signum() * scale * s)
}

/// Richardson extrapolation of values computed at widths `h, h/2, h/4, ...`
/// assuming an even error expansion `c₁h² + c₂h⁴ + …`.
///
/// Returns the extrapolated value and the gap between the two highest-order
/// estimates as a residual.
pub fn richardson_even(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mut table = values.to_vec();
    let mut last_gap = f64::INFINITY;
    let mut factor = 4.0;
    while table.len() > 1 {
        let next: Vec<f64> = table
            .windows(2)
            .map(|w| (factor * w[1] - w[0]) / (factor - 1.0))
            .collect();
        last_gap = (next[next.len() - 1] - table[table.len() - 1]).abs();
        table = next;
        factor *= 4.0;
    }
    if values.len() == 1 {
        last_gap = 0.0;
    }
    (table[0], last_gap)
}
