//! Feynman-tree expansion of the mode amplitudes: tree indices, momentum
//! assignments, exact tree values, degenerate parts and exact phase expectations.

mod pairing;
mod simplex;

use std::collections::BTreeMap;
use std::io::Write;

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Real;
use crate::spectra::{moment_weight, PhaseModel, SpectralField};

pub use pairing::{enumerate_pairings, leaf_parities, Pairing};
pub use simplex::{exp_divided_difference, simplex_oscillatory_integral, sinc_squared, TAYLOR_SPREAD};

pub const DEFAULT_MAX_DEPTH: usize = 4;

/// Limits on combinatorial work.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeBudget {
    pub max_depth: usize,
    /// Maximum number of leaf assignments a single evaluation may enumerate.
    pub max_terms: f64,
    /// Maximum `n + n′` for correlations.
    pub max_correlation_order: usize,
}

impl Default for TreeBudget {
    fn default() -> Self {
        TreeBudget {
            max_depth: DEFAULT_MAX_DEPTH,
            max_terms: 2e9,
            max_correlation_order: 4,
        }
    }
}

impl TreeBudget {
    fn check<T: Real>(&self, lat: &Lattice<T>, idx: &TreeIndex) -> Result<()> {
        let n = idx.depth();
        if n > self.max_depth {
            return Err(Error::budget(format!("tree depth {n} above max depth {}", self.max_depth), n as f64));
        }
        let estimate = (lat.len() as f64).powi(2 * n as i32);
        if estimate > self.max_terms {
            return Err(Error::budget(format!("tree {} enumeration", idx.label()), estimate));
        }
        Ok(())
    }
}

/// Index vector `(ℓ_1, …, ℓ_n)` with `ℓ_j ∈ {1, …, 2(n−j)+1}`: at level `j` the node in
/// position `ℓ_j` splits into three children.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeIndex {
    pub ell: Vec<usize>,
}

impl TreeIndex {
    pub fn new(ell: Vec<usize>) -> Result<Self> {
        let n = ell.len();
        for (j0, &l) in ell.iter().enumerate() {
            let max = 2 * (n - j0 - 1) + 1;
            if l < 1 || l > max {
                return Err(Error::invalid(format!("ℓ_{} = {l} outside 1..={max}", j0 + 1)));
            }
        }
        Ok(TreeIndex { ell })
    }

    pub fn root() -> Self {
        TreeIndex { ell: Vec::new() }
    }

    pub fn depth(&self) -> usize {
        self.ell.len()
    }

    /// `σ_ℓ = Π_j (−1)^{ℓ_j + 1}`.
    pub fn signature(&self) -> i32 {
        self.ell.iter().map(|l| if l % 2 == 1 { 1 } else { -1 }).product()
    }

    pub fn label(&self) -> String {
        let parts: Vec<String> = self.ell.iter().map(|l| l.to_string()).collect();
        format!("({})", parts.join(" "))
    }
}

/// `(2n−1)!!`, the number of depth-`n` tree indices.
pub fn index_count(n: usize) -> u64 {
    (1..=n as u64).map(|j| 2 * j - 1).product()
}

/// All depth-`n` indices in lexicographic order.
pub fn enumerate_indices(n: usize, max_depth: usize) -> Result<Vec<TreeIndex>> {
    if n > max_depth {
        return Err(Error::budget(format!("tree depth {n} above max depth {max_depth}"), index_count(n) as f64));
    }
    let ranges: Vec<usize> = (1..=n).map(|j| 2 * (n - j) + 1).collect();
    let mut out = Vec::with_capacity(index_count(n) as usize);
    let mut cur = vec![1usize; n];
    loop {
        out.push(TreeIndex { ell: cur.clone() });
        let mut j = n;
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            if cur[j] < ranges[j] {
                cur[j] += 1;
                for c in cur.iter_mut().skip(j + 1) {
                    *c = 1;
                }
                break;
            }
        }
    }
}

/// One momentum assignment of a tree, level by level.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeAssignment {
    pub index: TreeIndex,
    /// `levels[j]` holds the `2(n−j)+1` mode ranks at level `j`; `levels[0]` are the leaves
    /// and `levels[n] = [k]`.
    pub levels: Vec<Vec<usize>>,
    /// `omegas[j−1] = Ω_j`.
    pub omegas: Vec<f64>,
}

impl TreeAssignment {
    pub fn leaves(&self) -> &[usize] {
        &self.levels[0]
    }

    /// Transition `j` (1-based) is degenerate when the split node equals its first or third child.
    pub fn transition_degenerate(&self, j: usize) -> bool {
        let pos = self.index.ell[j - 1] - 1;
        let p = self.levels[j][pos];
        let children = &self.levels[j - 1][pos..pos + 3];
        p == children[0] || p == children[2]
    }
}

/// True when every transition of the assignment is degenerate.
pub fn is_degenerate(assignment: &TreeAssignment) -> bool {
    (1..=assignment.index.depth()).all(|j| assignment.transition_degenerate(j))
}

/// Enumeration mode for assignments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    /// Every admissible assignment.
    Full,
    /// Only degenerate transitions, built branch by branch. Each level either keeps the
    /// split momentum in the first child `(p, y, y)` or in the third `(y, y, p)`; with
    /// `once` the coincident case `y = p` is taken a single time, otherwise twice.
    Degenerate { once: bool },
}

struct Walk<'w, T> {
    levels: &'w [Vec<usize>],
    omegas: &'w [T],
    degenerate: &'w [bool],
}

fn walk<T: Real>(lat: &Lattice<T>, idx: &TreeIndex, k: usize, source: Source, f: &mut dyn FnMut(&Walk<'_, T>)) {
    let n = idx.depth();
    let mut levels: Vec<Vec<usize>> = (0..=n).map(|j| vec![0; 2 * (n - j) + 1]).collect();
    levels[n][0] = k;
    let mut omegas = vec![T::zero(); n];
    let mut degenerate = vec![false; n];
    descend(lat, idx, n, &mut levels, &mut omegas, &mut degenerate, source, f);
}

#[allow(clippy::too_many_arguments)]
fn descend<T: Real>(
    lat: &Lattice<T>,
    idx: &TreeIndex,
    j: usize,
    levels: &mut [Vec<usize>],
    omegas: &mut [T],
    degenerate: &mut [bool],
    source: Source,
    f: &mut dyn FnMut(&Walk<'_, T>),
) {
    if j == 0 {
        f(&Walk {
            levels,
            omegas,
            degenerate,
        });
        return;
    }
    let pos = idx.ell[j - 1] - 1;
    let sign = if pos % 2 == 0 { T::one() } else { -T::one() };
    let (lower, upper) = levels.split_at_mut(j);
    let parent = &upper[0];
    let child = &mut lower[j - 1];
    let p = parent[pos];
    child[..pos].copy_from_slice(&parent[..pos]);
    child[pos + 3..].copy_from_slice(&parent[pos + 1..]);
    let n_modes = lat.len();
    match source {
        Source::Full => {
            for x in 0..n_modes {
                for y in 0..n_modes {
                    let Some(z) = lat.combine(p, x, y) else { continue };
                    levels[j - 1][pos] = x;
                    levels[j - 1][pos + 1] = y;
                    levels[j - 1][pos + 2] = z;
                    omegas[j - 1] = sign * (lat.q(p) - lat.q(x) + lat.q(y) - lat.q(z));
                    degenerate[j - 1] = p == x || p == z;
                    descend(lat, idx, j - 1, levels, omegas, degenerate, source, f);
                }
            }
        }
        Source::Degenerate { once } => {
            for y in 0..n_modes {
                for branch in 0..2 {
                    if branch == 1 && once && y == p {
                        continue;
                    }
                    let triple = if branch == 0 { [p, y, y] } else { [y, y, p] };
                    levels[j - 1][pos..pos + 3].copy_from_slice(&triple);
                    omegas[j - 1] = T::zero();
                    degenerate[j - 1] = true;
                    descend(lat, idx, j - 1, levels, omegas, degenerate, source, f);
                }
            }
        }
    }
}

/// Explicit assignments (for inspection and invariant checks), capped at `limit`.
pub fn assignments<T: Real>(lat: &Lattice<T>, idx: &TreeIndex, k: usize, limit: usize) -> Result<Vec<TreeAssignment>> {
    let mut out = Vec::new();
    let mut over = false;
    walk(lat, idx, k, Source::Full, &mut |w| {
        if out.len() >= limit {
            over = true;
            return;
        }
        out.push(TreeAssignment {
            index: idx.clone(),
            levels: w.levels.to_vec(),
            omegas: w.omegas.iter().map(|o| o.as_f64()).collect(),
        });
    });
    if over {
        return Err(Error::budget("assignment listing", limit as f64));
    }
    Ok(out)
}

/// `ε = λ² / L^{2d}`.
pub fn coupling(spec: &crate::lattice::TorusSpec, lambda: f64) -> f64 {
    lambda * lambda / spec.l.powi(2 * spec.d as i32)
}

fn prefactor<T: Real>(lat: &Lattice<T>, idx: &TreeIndex, lambda: f64) -> Complex<T> {
    let eps = coupling(lat.spec(), lambda);
    let base = Complex::new(0.0, eps).powu(idx.depth() as u32) * idx.signature() as f64;
    Complex::new(T::lit(base.re), T::lit(base.im))
}

fn leaf_product<T: Real>(a0: &[Complex<T>], leaves: &[usize]) -> Complex<T> {
    let mut prod = Complex::new(T::one(), T::zero());
    for (m, &r) in leaves.iter().enumerate() {
        prod = prod * if m % 2 == 0 { a0[r] } else { a0[r].conj() };
    }
    prod
}

/// A tree value split into its all-degenerate and remaining parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JParts<T> {
    pub total: Complex<T>,
    /// Sum over assignments whose every transition is degenerate, each counted once.
    pub degenerate: Complex<T>,
    pub nondegenerate: Complex<T>,
}

/// `J_{n,ℓ}(t, k)` for initial data `a0`.
pub fn evaluate_j<T: Real>(
    lat: &Lattice<T>,
    idx: &TreeIndex,
    t: T,
    k: usize,
    a0: &SpectralField<T>,
    lambda: f64,
    budget: &TreeBudget,
) -> Result<Complex<T>> {
    Ok(evaluate_j_parts(lat, idx, t, k, a0, lambda, budget)?.total)
}

pub fn evaluate_j_parts<T: Real>(
    lat: &Lattice<T>,
    idx: &TreeIndex,
    t: T,
    k: usize,
    a0: &SpectralField<T>,
    lambda: f64,
    budget: &TreeBudget,
) -> Result<JParts<T>> {
    a0.check_on(lat)?;
    budget.check(lat, idx)?;
    let (mut deg, mut rest): (Complex<T>, Complex<T>) = (Complex::default(), Complex::default());
    walk(lat, idx, k, Source::Full, &mut |w| {
        let v = leaf_product(&a0.amps, &w.levels[0]) * simplex_oscillatory_integral(w.omegas, t);
        if w.degenerate.iter().all(|&d| d) {
            deg = deg + v;
        } else {
            rest = rest + v;
        }
    });
    let pre = prefactor(lat, idx, lambda);
    Ok(JParts {
        total: (deg + rest) * pre,
        degenerate: deg * pre,
        nondegenerate: rest * pre,
    })
}

/// `Σ_ℓ J_{n,ℓ}(t, k)` for every mode `k`.
pub fn evaluate_order<T: Real>(
    lat: &Lattice<T>,
    n: usize,
    t: T,
    a0: &SpectralField<T>,
    lambda: f64,
    budget: &TreeBudget,
) -> Result<Vec<Complex<T>>> {
    let indices = enumerate_indices(n, budget.max_depth)?;
    let mut out = vec![Complex::default(); lat.len()];
    for (k, o) in out.iter_mut().enumerate() {
        for idx in &indices {
            *o = *o + evaluate_j(lat, idx, t, k, a0, lambda, budget)?;
        }
    }
    Ok(out)
}

/// Closed form of the all-degenerate tree:
/// `2^n t^n/n! (iλ²/L^{2d})^n σ_ℓ a_k (Σ_y |a_y|²)^n`.
pub fn evaluate_d<T: Real>(lat: &Lattice<T>, idx: &TreeIndex, t: T, k: usize, a0: &SpectralField<T>, lambda: f64) -> Complex<T> {
    let n = idx.depth();
    let mass: T = a0.amps.iter().map(|a| a.norm_sqr()).sum();
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    let scalar = T::lit(2f64.powi(n as i32) / fact) * t.powi(n as i32) * mass.powi(n as i32);
    prefactor(lat, idx, lambda) * a0.amps[k] * scalar
}

/// Sum over degenerate branches. With `once = false` coincident levels weigh 2 and the
/// result reproduces [`evaluate_d`]; with `once = true` it is the all-degenerate part of
/// [`evaluate_j`].
pub fn degenerate_branch_sum<T: Real>(
    lat: &Lattice<T>,
    idx: &TreeIndex,
    t: T,
    k: usize,
    a0: &SpectralField<T>,
    lambda: f64,
    once: bool,
) -> Complex<T> {
    let mut acc = Complex::default();
    let n = idx.depth();
    let fact: f64 = (1..=n).map(|i| i as f64).product();
    let vol = t.powi(n as i32) / T::lit(fact);
    walk(lat, idx, k, Source::Degenerate { once }, &mut |w| {
        acc = acc + leaf_product(&a0.amps, &w.levels[0]);
    });
    acc * vol * prefactor(lat, idx, lambda)
}

type CountKey = Vec<(u32, u8, u8)>;
type NetKey = Vec<(u32, i16)>;

/// A tree expanded into monomials of the initial data, grouped by per-mode
/// `(plus, minus)` leaf counts. Coefficients include the `√φ` leaf moduli.
#[derive(Clone, Debug)]
pub struct TreeTerms {
    pub index: TreeIndex,
    terms: BTreeMap<CountKey, Complex<f64>>,
}

impl TreeTerms {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn count_key(leaves: &[usize], scratch: &mut Vec<(u32, bool)>) -> CountKey {
    scratch.clear();
    scratch.extend(leaves.iter().enumerate().map(|(m, &r)| (r as u32, m % 2 == 0)));
    scratch.sort_unstable();
    let mut key: CountKey = Vec::with_capacity(scratch.len());
    for &(r, plus) in scratch.iter() {
        match key.last_mut() {
            Some(last) if last.0 == r => {
                if plus {
                    last.1 += 1
                } else {
                    last.2 += 1
                }
            }
            _ => key.push((r, plus as u8, (!plus) as u8)),
        }
    }
    key
}

fn net_key(key: &CountKey) -> NetKey {
    key.iter()
        .filter(|(_, p, m)| p != m)
        .map(|&(r, p, m)| (r, p as i16 - m as i16))
        .collect()
}

fn tree_terms_from(
    lat: &Lattice<f64>,
    idx: &TreeIndex,
    t: f64,
    k: usize,
    phi: &[f64],
    lambda: f64,
    source: Source,
) -> TreeTerms {
    let sqrt_phi: Vec<f64> = phi.iter().map(|p| p.sqrt()).collect();
    let pre = prefactor(lat, idx, lambda);
    let mut terms: BTreeMap<CountKey, Complex<f64>> = BTreeMap::new();
    let mut scratch = Vec::new();
    let n = idx.depth();
    // all frequencies vanish on degenerate branches
    let flat = Complex::new(t.powi(n as i32) / (1..=n).map(|i| i as f64).product::<f64>(), 0.0);
    walk(lat, idx, k, source, &mut |w| {
        let leaves = &w.levels[0];
        let modulus: f64 = leaves.iter().map(|&r| sqrt_phi[r]).product();
        if modulus == 0.0 {
            return;
        }
        let integral = match source {
            Source::Full => simplex_oscillatory_integral(w.omegas, t),
            Source::Degenerate { .. } => flat,
        };
        let v = integral * modulus;
        *terms.entry(count_key(leaves, &mut scratch)).or_default() += v;
    });
    for v in terms.values_mut() {
        *v *= pre;
    }
    TreeTerms { index: idx.clone(), terms }
}

/// Monomial expansion of `J_{n,ℓ}(t, k)` with `|a_k^0|² = φ_k`.
pub fn tree_terms(
    lat: &Lattice<f64>,
    idx: &TreeIndex,
    t: f64,
    k: usize,
    phi: &[f64],
    lambda: f64,
    budget: &TreeBudget,
) -> Result<TreeTerms> {
    budget.check(lat, idx)?;
    check_profile(lat, phi)?;
    Ok(tree_terms_from(lat, idx, t, k, phi, lambda, Source::Full))
}

/// Monomial expansion of the closed-form degenerate tree `D_{n,ℓ}`.
pub fn degenerate_terms(lat: &Lattice<f64>, idx: &TreeIndex, t: f64, k: usize, phi: &[f64], lambda: f64) -> Result<TreeTerms> {
    check_profile(lat, phi)?;
    Ok(tree_terms_from(lat, idx, t, k, phi, lambda, Source::Degenerate { once: false }))
}

fn check_profile(lat: &Lattice<f64>, phi: &[f64]) -> Result<()> {
    if phi.len() != lat.len() {
        return Err(Error::invalid("profile length differs from mode count"));
    }
    if let Some(p) = phi.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::invalid(format!("negative profile value {p}")));
    }
    Ok(())
}

/// `E(A · conj(B))` from grouped monomials.
pub fn expectation(a: &TreeTerms, b: &TreeTerms, model: PhaseModel) -> Complex<f64> {
    match model {
        PhaseModel::Uniform => {
            let mut grouped: BTreeMap<NetKey, Complex<f64>> = BTreeMap::new();
            for (key, v) in &b.terms {
                *grouped.entry(net_key(key)).or_default() += v.conj();
            }
            a.terms
                .iter()
                .filter_map(|(key, v)| grouped.get(&net_key(key)).map(|w| v * w))
                .sum()
        }
        PhaseModel::ComplexGaussian => {
            let mut grouped: BTreeMap<NetKey, Vec<(&CountKey, Complex<f64>)>> = BTreeMap::new();
            for (key, v) in &b.terms {
                grouped.entry(net_key(key)).or_default().push((key, v.conj()));
            }
            let mut acc = Complex::default();
            let mut counts: Vec<(u32, u32)> = Vec::new();
            for (key, v) in &a.terms {
                let Some(list) = grouped.get(&net_key(key)) else { continue };
                for (other, w) in list {
                    merged_counts(key, other, &mut counts);
                    acc += v * w * moment_weight(model, &counts);
                }
            }
            acc
        }
    }
}

/// Per-mode `(plus, minus)` of `A · conj(B)`.
fn merged_counts(a: &CountKey, b: &CountKey, out: &mut Vec<(u32, u32)>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j >= b.len() || (i < a.len() && a[i].0 <= b[j].0);
        let take_b = i >= a.len() || (j < b.len() && b[j].0 <= a[i].0);
        let (mut p, mut m) = (0u32, 0u32);
        if take_a {
            p += a[i].1 as u32;
            m += a[i].2 as u32;
            i += 1;
        }
        if take_b {
            p += b[j].2 as u32;
            m += b[j].1 as u32;
            j += 1;
        }
        out.push((p, m));
    }
}

/// `E(J_{n,ℓ}(t,k) · conj(J_{n′,ℓ′}(t,k)))` for random initial data with `E|a_k|² = φ_k`.
#[allow(clippy::too_many_arguments)]
pub fn correlation(
    lat: &Lattice<f64>,
    idx: &TreeIndex,
    idx2: &TreeIndex,
    t: f64,
    k: usize,
    phi: &[f64],
    lambda: f64,
    model: PhaseModel,
    budget: &TreeBudget,
) -> Result<Complex<f64>> {
    let order = idx.depth() + idx2.depth();
    if order > budget.max_correlation_order {
        return Err(Error::budget(
            format!("correlation order {order} above {}", budget.max_correlation_order),
            order as f64,
        ));
    }
    let a = tree_terms(lat, idx, t, k, phi, lambda, budget)?;
    let b = if idx2 == idx { a.clone() } else { tree_terms(lat, idx2, t, k, phi, lambda, budget)? };
    Ok(expectation(&a, &b, model))
}

/// One row of a correlation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub n: usize,
    pub ell: TreeIndex,
    pub n2: usize,
    pub ell2: TreeIndex,
    pub value: Complex<f64>,
}

/// All correlations with `n + n′` in `orders`.
#[allow(clippy::too_many_arguments)]
pub fn correlation_table(
    lat: &Lattice<f64>,
    orders: std::ops::RangeInclusive<usize>,
    t: f64,
    k: usize,
    phi: &[f64],
    lambda: f64,
    model: PhaseModel,
    budget: &TreeBudget,
) -> Result<Vec<CorrelationRow>> {
    let top = *orders.end();
    if top > budget.max_correlation_order {
        return Err(Error::budget(format!("correlation order {top}"), top as f64));
    }
    let mut cache: Vec<Vec<TreeTerms>> = Vec::new();
    for n in 0..=top {
        let terms = enumerate_indices(n, budget.max_depth)?
            .iter()
            .map(|idx| tree_terms(lat, idx, t, k, phi, lambda, budget))
            .collect::<Result<Vec<_>>>()?;
        cache.push(terms);
    }
    let mut rows = Vec::new();
    for s in orders {
        for n in 0..=s {
            for a in &cache[n] {
                for b in &cache[s - n] {
                    rows.push(CorrelationRow {
                        n,
                        ell: a.index.clone(),
                        n2: s - n,
                        ell2: b.index.clone(),
                        value: expectation(a, b, model),
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// CSV with header `n,ell,n2,ell2,re,im`.
pub fn write_correlation_csv<W: Write>(rows: &[CorrelationRow], mut w: W) -> Result<()> {
    writeln!(w, "n,ell,n2,ell2,re,im")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{:e},{:e}", r.n, r.ell.label(), r.n2, r.ell2.label(), r.value.re, r.value.im)?;
    }
    Ok(())
}

/// `E|a_k(t)|²` through order `λ^{2·order}`: order 0 gives `φ_k`, order 2 sums all
/// correlations with `n + n′ ≤ 2`.
#[allow(clippy::too_many_arguments)]
pub fn second_moment_expansion(
    lat: &Lattice<f64>,
    t: f64,
    k: usize,
    phi: &[f64],
    lambda: f64,
    order: usize,
    model: PhaseModel,
    budget: &TreeBudget,
) -> Result<f64> {
    check_profile(lat, phi)?;
    match order {
        0 => Ok(phi[k]),
        2 => {
            let rows = correlation_table(lat, 0..=2, t, k, phi, lambda, model, budget)?;
            Ok(rows.iter().map(|r| r.value.re).sum())
        }
        _ => Err(Error::Unsupported(format!("second moment order {order}; supported orders are 0 and 2"))),
    }
}

/// The explicit leading formula
/// `φ_k + (2λ⁴/L^{4d}) Σ (φ1φ2φ3 − φφ2φ3 + φφ1φ3 − φφ1φ2) |sin(πtΩ)/(πΩ)|²`.
pub fn second_moment_leading(lat: &Lattice<f64>, t: f64, k: usize, phi: &[f64], lambda: f64) -> Result<f64> {
    check_profile(lat, phi)?;
    let eps = coupling(lat.spec(), lambda);
    let p0 = phi[k];
    let mut acc = 0.0;
    for (k1, k2, k3) in lat.sigma_zero_triples(k) {
        let (p1, p2, p3) = (phi[k1], phi[k2], phi[k3]);
        let f = p1 * p2 * p3 - p0 * p2 * p3 + p0 * p1 * p3 - p0 * p1 * p2;
        if f != 0.0 {
            acc += f * sinc_squared(lat.omega_ranks(k, k1, k2, k3), t);
        }
    }
    Ok(p0 + 2.0 * eps * eps * acc)
}

/// Result of the degenerate second-moment cancellation check.
#[derive(Clone, Debug)]
pub struct CancellationReport {
    pub order: usize,
    pub sum: Complex<f64>,
    /// `Σ |E(D D̄′)|` over all contributing pairs.
    pub scale: f64,
    pub rows: Vec<CorrelationRow>,
}

impl CancellationReport {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.sum.norm() / self.scale
        }
    }
}

/// `Σ_{n+n′=S} Σ_{ℓ,ℓ′} E(D_{n,ℓ} D̄_{n′,ℓ′})`, each expectation evaluated from the
/// monomial expansion of the degenerate trees.
pub fn degenerate_cancellation(
    order: usize,
    lat: &Lattice<f64>,
    phi: &[f64],
    t: f64,
    k: usize,
    lambda: f64,
    budget: &TreeBudget,
) -> Result<CancellationReport> {
    if order == 0 || order > 2 * budget.max_depth {
        return Err(Error::invalid(format!("cancellation order {order} outside 1..={}", 2 * budget.max_depth)));
    }
    let mut cache: Vec<Vec<TreeTerms>> = Vec::new();
    for n in 0..=order.min(budget.max_depth) {
        cache.push(
            enumerate_indices(n, budget.max_depth)?
                .iter()
                .map(|idx| degenerate_terms(lat, idx, t, k, phi, lambda))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut rows = Vec::new();
    let (mut sum, mut scale) = (Complex::default(), 0.0);
    for n in 0..=order {
        let n2 = order - n;
        if n >= cache.len() || n2 >= cache.len() {
            continue;
        }
        for a in &cache[n] {
            for b in &cache[n2] {
                let v = expectation(a, b, PhaseModel::Uniform);
                sum += v;
                scale += v.norm();
                rows.push(CorrelationRow {
                    n,
                    ell: a.index.clone(),
                    n2,
                    ell2: b.index.clone(),
                    value: v,
                });
            }
        }
    }
    Ok(CancellationReport { order, sum, scale, rows })
}

/// `Σ_{j=0}^{S} (−1)^j / ((S−j)! j!)` in exact rational arithmetic; zero for every `S ≥ 1`.
pub fn alternating_factorial_sum(s: u32) -> BigRational {
    let factorial = |n: u32| (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i));
    (0..=s).fold(BigRational::zero(), |acc, j| {
        let term = BigRational::new(BigInt::one(), factorial(s - j) * factorial(j));
        if j % 2 == 0 {
            acc + term
        } else {
            acc - term
        }
    })
}

#[cfg(test)]
mod tests;
