//! Lattice point counts for the quadratic form `Q(p, q) = Σ β_i (p_i² − q_i²)` and for
//! quasi-resonant shells, with continuum comparisons.
//!
//! Both counters evaluate `Q` with the same floating-point association: the axes are split
//! into a leading block of `⌈d/2⌉` axes and a trailing block, each block is summed left to
//! right from `0.0`, and `Q = fl(sum_A + sum_B)`. Counts therefore agree exactly even for
//! values on a window edge.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, TorusSpec};
use crate::quad::{chirp_integral, gauss_legendre};

/// Degenerate sets removed from `R_Z`. A pair is dropped when any axis meets an enabled
/// condition, so the kept set factorizes over axes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exclusions {
    /// Drop pairs with some `|p_i − q_i| ≤ h`.
    pub near_diagonal: Option<i64>,
    /// Drop pairs with some `|p_i| ≤ h`.
    pub small_coordinate: Option<i64>,
    /// Drop pairs with some `p_i = q_i`.
    pub equal_coordinate: bool,
}

impl Exclusions {
    fn keeps(&self, p: i64, q: i64) -> bool {
        if let Some(h) = self.near_diagonal {
            if (p - q).abs() <= h {
                return false;
            }
        }
        if let Some(h) = self.small_coordinate {
            if p.abs() <= h {
                return false;
            }
        }
        !(self.equal_coordinate && p == q)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Pairs `(p, q) ∈ ([0, L] ∩ Z)^{2d}`, `p ≠ q`, with `Q(p, q) ∈ [a, b]`.
    Rz,
    /// Mode triples `(K1, K2, K3)` of the spec's lattice with `K1 − K2 + K3 = K` and
    /// `Ω ∈ [a, b]` (continuum units).
    Shell { k: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountQuery {
    pub spec: TorusSpec,
    pub window: [f64; 2],
    pub region: Region,
    #[serde(default)]
    pub exclusions: Exclusions,
}

impl CountQuery {
    pub fn rz(spec: TorusSpec, a: f64, b: f64) -> Self {
        CountQuery {
            spec,
            window: [a, b],
            region: Region::Rz,
            exclusions: Exclusions::default(),
        }
    }

    pub fn shell(spec: TorusSpec, k: Vec<i64>, a: f64, b: f64) -> Self {
        CountQuery {
            spec,
            window: [a, b],
            region: Region::Shell { k },
            exclusions: Exclusions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let [a, b] = self.window;
        if !(a <= b) {
            return Err(Error::invalid(format!("window [{a}, {b}] is empty or not finite")));
        }
        if let Region::Rz = self.region {
            self.side()?;
        }
        Ok(())
    }

    fn side(&self) -> Result<i64> {
        let l = self.spec.l;
        if l.fract() != 0.0 || l < 1.0 {
            return Err(Error::invalid(format!("R_Z counting needs a positive integer L (got {l})")));
        }
        Ok(l as i64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Brute,
    Fast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountResult {
    pub count: u64,
    /// Matching continuum volume, when one is defined for the region.
    pub continuum: Option<f64>,
    /// `|count − continuum| / max(continuum, 1)`.
    pub rel_error: Option<f64>,
    pub method: CountMethod,
    pub seconds: f64,
    pub window: [f64; 2],
    pub exclusions: Exclusions,
    /// Shell triples with `u′_i u″_i = 0` on every axis (included in `count`).
    pub degenerate: Option<u64>,
}

impl CountResult {
    /// Attach a continuum value and its relative error.
    pub fn with_continuum(mut self, continuum: f64) -> Self {
        self.continuum = Some(continuum);
        self.rel_error = Some((self.count as f64 - continuum).abs() / continuum.max(1.0));
        self
    }
}

/// Work limits for enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountBudget {
    pub max_work: f64,
}

impl Default for CountBudget {
    fn default() -> Self {
        CountBudget { max_work: 2e11 }
    }
}

fn split(d: usize) -> usize {
    d.div_ceil(2)
}

/// Kept `(β_i·w, is_diagonal)` per axis, `w = p_i² − q_i²`, in `(p_i, q_i)` order.
fn axis_values(beta: f64, side: i64, ex: &Exclusions) -> Vec<(f64, bool)> {
    let mut out = Vec::new();
    for p in 0..=side {
        for q in 0..=side {
            if ex.keeps(p, q) {
                out.push((beta * (p * p - q * q) as f64, p == q));
            }
        }
    }
    out
}

/// All block partial sums, accumulated left to right from `0.0`.
fn block_sums(axes: &[Vec<(f64, bool)>]) -> Vec<(f64, bool)> {
    let mut cur = vec![(0.0f64, true)];
    for axis in axes {
        let mut next = Vec::with_capacity(cur.len() * axis.len());
        for &(s, diag) in &cur {
            for &(v, dv) in axis {
                next.push((s + v, diag && dv));
            }
        }
        cur = next;
    }
    cur
}

fn check_work(what: &str, work: f64, budget: &CountBudget) -> Result<()> {
    if work > budget.max_work {
        return Err(Error::budget(what, work));
    }
    Ok(())
}

/// Exact count by full enumeration.
pub fn count_brute(query: &CountQuery, budget: &CountBudget) -> Result<CountResult> {
    query.validate()?;
    let start = Instant::now();
    let [a, b] = query.window;
    let (count, degenerate) = match &query.region {
        Region::Rz => {
            let side = query.side()?;
            let d = query.spec.d;
            check_work("brute R_Z enumeration", ((side + 1) as f64).powi(2 * d as i32), budget)?;
            let axes: Vec<Vec<(f64, bool)>> =
                (0..d).map(|i| axis_values(query.spec.beta[i], side, &query.exclusions)).collect();
            let h = split(d);
            let tail = block_sums(&axes[h..]);
            let tail_diag: Vec<f64> = tail.iter().filter(|t| t.1).map(|t| t.0).collect();
            let tail_all: Vec<f64> = tail.iter().map(|t| t.0).collect();
            let in_window = |s: f64, vals: &[f64]| vals.iter().filter(|&&v| (a..=b).contains(&(s + v))).count() as u64;
            // leading block enumerated axis by axis without materializing it
            let lead = &axes[..h];
            let first = &lead[0];
            let rest = &lead[1..];
            let count = first
                .par_iter()
                .map(|&(v0, d0)| {
                    let mut acc = 0u64;
                    let mut stack = vec![(0.0 + v0, d0)];
                    for axis in rest {
                        let mut next = Vec::with_capacity(stack.len() * axis.len());
                        for &(s, diag) in &stack {
                            for &(v, dv) in axis {
                                next.push((s + v, diag && dv));
                            }
                        }
                        stack = next;
                    }
                    for (s, diag) in stack {
                        acc += in_window(s, &tail_all);
                        if diag {
                            acc -= in_window(s, &tail_diag);
                        }
                    }
                    acc
                })
                .reduce(|| 0, |x, y| x + y);
            (count, None)
        }
        Region::Shell { k } => {
            let lat = Lattice::<f64>::new(&query.spec)?;
            let kr = lat
                .rank_of(k)
                .ok_or_else(|| Error::invalid(format!("{k:?} is not a mode of the spec")))?;
            check_work("brute shell enumeration", (lat.len() as f64).powi(2), budget)?;
            let (mut count, mut degenerate) = (0u64, 0u64);
            for (k1, k2, k3) in lat.sigma_zero_triples(kr) {
                if (a..=b).contains(&lat.omega_ranks(kr, k1, k2, k3)) {
                    count += 1;
                    let deg = lat
                        .mode(k1)
                        .iter()
                        .zip(lat.mode(k3))
                        .zip(k)
                        .all(|((x1, x3), x)| (x1 - x) * (x3 - x) == 0);
                    degenerate += deg as u64;
                }
            }
            (count, Some(degenerate))
        }
    };
    Ok(CountResult {
        count,
        continuum: None,
        rel_error: None,
        method: CountMethod::Brute,
        seconds: start.elapsed().as_secs_f64(),
        window: query.window,
        exclusions: query.exclusions.clone(),
        degenerate,
    })
}

/// Per-axis multiplicity table `w ↦ #{(p_i, q_i) kept : β_i (p_i² − q_i²) = w}`, plus the
/// number of kept diagonal pairs.
fn axis_table(beta: f64, side: i64, ex: &Exclusions) -> (Vec<(f64, u64)>, u64) {
    let span = side * side;
    let mut mult = vec![0u64; (2 * span + 1) as usize];
    let mut diag = 0;
    for p in 0..=side {
        for q in 0..=side {
            if ex.keeps(p, q) {
                mult[(p * p - q * q + span) as usize] += 1;
                diag += (p == q) as u64;
            }
        }
    }
    let table = mult
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0)
        .map(|(w, &m)| (beta * (w as i64 - span) as f64, m))
        .collect();
    (table, diag)
}

fn block_table(tables: &[Vec<(f64, u64)>]) -> Result<Vec<(f64, u64)>> {
    let mut cur = vec![(0.0f64, 1u64)];
    for t in tables {
        let mut next = Vec::with_capacity(cur.len() * t.len());
        for &(s, m) in &cur {
            for &(v, mv) in t {
                next.push((s + v, m.checked_mul(mv).ok_or_else(|| Error::budget("u64 multiplicity", f64::MAX))?));
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// Exact `R_Z` count by meet-in-the-middle over per-axis multiplicity tables.
pub fn count_fast(query: &CountQuery, budget: &CountBudget) -> Result<CountResult> {
    query.validate()?;
    if !matches!(query.region, Region::Rz) {
        return Err(Error::Unsupported("the fast counter handles the separable R_Z region only".into()));
    }
    let start = Instant::now();
    let [a, b] = query.window;
    let side = query.side()?;
    let d = query.spec.d;
    let built: Vec<(Vec<(f64, u64)>, u64)> = (0..d)
        .into_par_iter()
        .map(|i| axis_table(query.spec.beta[i], side, &query.exclusions))
        .collect();
    let h = split(d);
    let tables: Vec<Vec<(f64, u64)>> = built.iter().map(|t| t.0.clone()).collect();
    let lead_size: f64 = tables[..h].iter().map(|t| t.len() as f64).product();
    check_work("fast R_Z table", lead_size * 24.0, budget)?;
    let mut lead = block_table(&tables[..h])?;
    lead.sort_by(|x, y| x.0.total_cmp(&y.0));
    // merge equal sums; prefix[i] = multiplicity of values[..i]
    let mut values: Vec<f64> = Vec::with_capacity(lead.len());
    let mut prefix: Vec<u64> = vec![0];
    for (s, m) in lead {
        let total = prefix.last().unwrap().checked_add(m).ok_or_else(|| Error::budget("u64 count", f64::MAX))?;
        if values.last() == Some(&s) {
            *prefix.last_mut().unwrap() = total;
        } else {
            values.push(s);
            prefix.push(total);
        }
    }
    let tail = block_table(&tables[h..])?;
    let mut count = 0u64;
    for (sb, mb) in tail {
        let lo = values.partition_point(|&sa| sa + sb < a);
        let hi = values.partition_point(|&sa| sa + sb <= b);
        if hi > lo {
            let inner = prefix[hi] - prefix[lo];
            count = inner
                .checked_mul(mb)
                .and_then(|v| count.checked_add(v))
                .ok_or_else(|| Error::budget("u64 count", f64::MAX))?;
        }
    }
    if a <= 0.0 && 0.0 <= b {
        let diagonal: u64 = built.iter().map(|t| t.1).product();
        count -= diagonal;
    }
    Ok(CountResult {
        count,
        continuum: None,
        rel_error: None,
        method: CountMethod::Fast,
        seconds: start.elapsed().as_secs_f64(),
        window: query.window,
        exclusions: query.exclusions.clone(),
        degenerate: None,
    })
}

/// Quadrature value with a convergence flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuumValue {
    pub value: f64,
    /// Bound on the truncated Fourier tail, in the same units as `value`.
    pub tail: f64,
    pub converged: bool,
}

pub const CONTINUUM_TOLERANCE: f64 = 1e-4;
const MAX_PANELS: usize = 400_000;

/// `ψ_i(ξ) = E e^{iξβ_i X²}` for `X` uniform on the cell-centered interval `[−½, L+½]`.
fn axis_characteristic(xi: f64, beta: f64, side: f64) -> (f64, f64) {
    let (r1, i1) = chirp_integral(xi * beta, side + 0.5);
    let (r0, i0) = chirp_integral(xi * beta, 0.5);
    ((r1 + r0) / (side + 1.0), (i1 + i0) / (side + 1.0))
}

/// `E e^{iξ S}` for `S = Σ β_i (X_i² − Y_i²)`; real and even.
fn form_characteristic(xi: f64, beta: &[f64], side: f64) -> f64 {
    beta.iter()
        .map(|&b| {
            let (re, im) = axis_characteristic(xi, b, side);
            re * re + im * im
        })
        .product()
}

/// `ξ` beyond which the characteristic-function tail contributes less than `tol`.
fn fourier_cutoff(beta: &[f64], side: f64, tol: f64) -> f64 {
    let d = beta.len() as f64;
    // |∫_0^u e^{iξx²} dx| ≤ 1.25/√ξ bounds each |ψ_i|² by 6.25 / (ξ β_i (L+1)²)
    let c: f64 = beta.iter().map(|b| 6.25 / (b * (side + 1.0).powi(2))).product();
    (2.0 * c / (std::f64::consts::PI * d * tol)).powf(1.0 / d)
}

/// Volume of `{(x, y) ∈ [−½, L+½]^{2d} : Q(x) − Q(y) ∈ [a, b]}` by Fourier inversion,
/// the continuum counterpart of `R_Z`. Exclusions are not applied to the volume.
pub fn continuum_volume(query: &CountQuery) -> Result<ContinuumValue> {
    query.validate()?;
    if !matches!(query.region, Region::Rz) {
        return Err(Error::Unsupported("continuum volume is defined for the R_Z region".into()));
    }
    let side = query.side()? as f64;
    let beta = &query.spec.beta;
    let [a, b] = query.window;
    let cells = (side + 1.0).powi(2 * beta.len() as i32);
    let cutoff = fourier_cutoff(beta, side, CONTINUUM_TOLERANCE * 1e-2);
    let beta_max = beta.iter().cloned().fold(0.0, f64::max);
    let freq = a.abs().max(b.abs()).max(beta_max * (side + 0.5).powi(2));
    let width = std::f64::consts::PI / (4.0 * freq);
    let wanted = (cutoff / width).ceil() as usize;
    let panels = wanted.clamp(1, MAX_PANELS);
    let upper = panels as f64 * width;
    let (x, w) = gauss_legendre(8);
    let mut prob = 0.0;
    for j in 0..panels {
        let mid = (j as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(&w) {
            let z = mid + 0.5 * width * xi;
            let window = ((z * b).sin() - (z * a).sin()) / z;
            prob += 0.5 * width * wi * form_characteristic(z, beta, side) * window;
        }
    }
    prob /= std::f64::consts::PI;
    let c: f64 = beta.iter().map(|b| 6.25 / (b * (side + 1.0).powi(2))).product();
    let d = beta.len() as f64;
    let tail = 2.0 * c / (std::f64::consts::PI * d * upper.powf(d));
    Ok(ContinuumValue {
        value: cells * prob,
        tail: cells * tail,
        converged: tail <= CONTINUUM_TOLERANCE * prob.abs().max(1e-300),
    })
}

/// Lattice sum `Σ_{p ≠ q} g(μ Q(p, q))` with `g(x) = (sin πx / πx)²` over `[0, L]^{2d}`.
pub fn weighted_lattice_sum(beta: &[f64], side: i64, mu: f64, budget: &CountBudget) -> Result<f64> {
    let d = beta.len();
    check_work("weighted lattice sum", ((side + 1) as f64).powi(2 * d as i32), budget)?;
    let axes: Vec<Vec<(f64, bool)>> = beta.iter().map(|&b| axis_values(b, side, &Exclusions::default())).collect();
    let all = block_sums(&axes);
    let g = |x: f64| {
        let y = std::f64::consts::PI * x;
        if y == 0.0 {
            1.0
        } else {
            (y.sin() / y).powi(2)
        }
    };
    Ok(all.iter().filter(|(_, diag)| !diag).map(|(s, _)| g(mu * s)).sum())
}

/// Continuum counterpart `(L+1)^{2d} ∫_{−1}^{1} (1 − |ω|) E e^{2πiμωS} dω`.
pub fn weighted_continuum(beta: &[f64], side: i64, mu: f64) -> f64 {
    let s = side as f64;
    let cells = (s + 1.0).powi(2 * beta.len() as i32);
    let beta_max = beta.iter().cloned().fold(0.0, f64::max);
    let freq = 2.0 * std::f64::consts::PI * mu * beta_max * (s + 0.5).powi(2);
    let panels = ((freq / std::f64::consts::PI * 8.0).ceil() as usize).clamp(8, MAX_PANELS);
    let (x, w) = gauss_legendre(8);
    let h = 1.0 / panels as f64;
    let mut acc = 0.0;
    for j in 0..panels {
        let mid = (j as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            let om = mid + 0.5 * h * xi;
            acc += 0.5 * h * wi * (1.0 - om) * form_characteristic(2.0 * std::f64::consts::PI * mu * om, beta, s);
        }
    }
    // the integrand is even in ω
    2.0 * cells * acc
}

/// How the window scales along an `L` ladder: `[c − w/2, c + w/2]` with
/// `w = width_scale · L^{width_exponent}` and `c = center_scale · L^{center_exponent}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowLaw {
    pub width_scale: f64,
    pub width_exponent: f64,
    pub center_scale: f64,
    pub center_exponent: f64,
}

impl WindowLaw {
    pub fn window(&self, l: f64) -> [f64; 2] {
        let w = self.width_scale * l.powf(self.width_exponent);
        let c = self.center_scale * l.powf(self.center_exponent);
        [c - 0.5 * w, c + 0.5 * w]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    #[serde(rename = "L")]
    pub l: u32,
    pub count: f64,
    pub continuum: f64,
    pub rel_error: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistributionReport {
    pub beta: Vec<f64>,
    pub law: WindowLaw,
    pub sharp: Vec<LadderRow>,
    /// `g`-weighted rows with `μ = t L^{−2}`; empty unless requested.
    pub weighted: Vec<LadderRow>,
    /// The sharp-window error sequence decreases along the ladder.
    pub decreasing: bool,
}

/// Sharp-window `R_Z` counts (fast counter) against the continuum volume along a ladder of
/// `L`, plus optional `g`-weighted sums at rescaled time `μ = t L^{−2}`.
pub fn equidistribution_report(
    beta: &[f64],
    ladder: &[u32],
    law: &WindowLaw,
    weighted_time: Option<f64>,
    budget: &CountBudget,
) -> Result<EquidistributionReport> {
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("L ladder must be strictly increasing"));
    }
    let d = beta.len();
    let mut sharp = Vec::new();
    let mut weighted = Vec::new();
    for &l in ladder {
        let spec = TorusSpec::new(d, l as f64, beta.to_vec(), 1.0)?;
        let [a, b] = law.window(l as f64);
        let query = CountQuery::rz(spec, a, b);
        let res = count_fast(&query, budget)?;
        let cont = continuum_volume(&query)?;
        let res = res.with_continuum(cont.value);
        sharp.push(LadderRow {
            l,
            count: res.count as f64,
            continuum: cont.value,
            rel_error: res.rel_error.unwrap_or(f64::NAN),
            seconds: res.seconds,
        });
        if let Some(t) = weighted_time {
            let start = Instant::now();
            let mu = t / (l as f64).powi(2);
            let lattice = weighted_lattice_sum(beta, l as i64, mu, budget)?;
            let cont = weighted_continuum(beta, l as i64, mu);
            weighted.push(LadderRow {
                l,
                count: lattice,
                continuum: cont,
                rel_error: (lattice - cont).abs() / cont.max(1.0),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    let decreasing = sharp.windows(2).all(|w| w[1].rel_error < w[0].rel_error);
    Ok(EquidistributionReport {
        beta: beta.to_vec(),
        law: law.clone(),
        sharp,
        weighted,
        decreasing,
    })
}

/// All `Ω` values of the shell around mode `k`, sorted.
pub fn shell_frequencies(spec: &TorusSpec, k: &[i64], budget: &CountBudget) -> Result<Vec<f64>> {
    let lat = Lattice::<f64>::new(spec)?;
    let kr = lat
        .rank_of(k)
        .ok_or_else(|| Error::invalid(format!("{k:?} is not a mode of the spec")))?;
    check_work("shell enumeration", (lat.len() as f64).powi(2), budget)?;
    let mut out: Vec<f64> = lat
        .sigma_zero_triples(kr)
        .map(|(k1, k2, k3)| lat.omega_ranks(kr, k1, k2, k3))
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Count concentration over shifted windows: `max / mean` of the number of sorted values
/// falling in `[c − w/2, c + w/2]` across `centers`.
pub fn concentration_ratio(sorted: &[f64], width: f64, centers: &[f64]) -> f64 {
    let counts: Vec<usize> = centers
        .iter()
        .map(|&c| {
            let lo = sorted.partition_point(|&v| v < c - 0.5 * width);
            let hi = sorted.partition_point(|&v| v <= c + 0.5 * width);
            hi - lo
        })
        .collect();
    let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let max = counts.iter().cloned().max().unwrap_or(0) as f64;
    if mean == 0.0 {
        0.0
    } else {
        max / mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    #[serde(rename = "L")]
    pub l: u32,
    pub lhs: f64,
    pub shape: f64,
    /// `lhs / shape`
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundAudit {
    pub rows: Vec<AuditRow>,
    /// Largest `log2(c(L_{j+1}) / c(L_j)) / log2(L_{j+1} / L_j)` along the ladder.
    pub growth_exponent: f64,
    /// `growth_exponent ≤ 0.1`.
    pub passes: bool,
}

fn audit(rows: Vec<AuditRow>) -> BoundAudit {
    let growth_exponent = rows
        .windows(2)
        .map(|w| (w[1].constant / w[0].constant).log2() / (w[1].l as f64 / w[0].l as f64).log2())
        .fold(f64::NEG_INFINITY, f64::max);
    BoundAudit {
        rows,
        growth_exponent,
        passes: growth_exponent <= 0.1,
    }
}

/// `#R_Z` against `L^{2(d−1)}(b−a) + L^{d−1}` along a ladder with a fixed window.
pub fn bound_audit(beta: &[f64], ladder: &[u32], window: [f64; 2], budget: &CountBudget) -> Result<BoundAudit> {
    let d = beta.len() as i32;
    let mut rows = Vec::new();
    for &l in ladder {
        let spec = TorusSpec::new(beta.len(), l as f64, beta.to_vec(), 1.0)?;
        let res = count_fast(&CountQuery::rz(spec, window[0], window[1]), budget)?;
        let lf = l as f64;
        let shape = lf.powi(2 * (d - 1)) * (window[1] - window[0]) + lf.powi(d - 1);
        rows.push(AuditRow {
            l,
            lhs: res.count as f64,
            shape,
            constant: res.count as f64 / shape,
        });
    }
    Ok(audit(rows))
}

/// `Σ_{p,q ∈ [0,L]^d, |Q(p,q)| ≥ a} Q(p,q)^{−2}` against `L^{2d−2} / a`.
pub fn tail_sum_audit(beta: &[f64], ladder: &[u32], a: f64, budget: &CountBudget) -> Result<BoundAudit> {
    if !(a > 0.0) {
        return Err(Error::invalid("tail sum threshold must be positive"));
    }
    let d = beta.len() as i32;
    let mut rows = Vec::new();
    for &l in ladder {
        check_work("tail sum", ((l + 1) as f64).powi(2 * d), budget)?;
        let axes: Vec<Vec<(f64, bool)>> = beta.iter().map(|&b| axis_values(b, l as i64, &Exclusions::default())).collect();
        let lhs: f64 = block_sums(&axes)
            .iter()
            .filter(|(s, _)| s.abs() >= a)
            .map(|(s, _)| 1.0 / (s * s))
            .sum();
        let shape = (l as f64).powi(2 * d - 2) / a;
        rows.push(AuditRow {
            l,
            lhs,
            shape,
            constant: lhs / shape,
        });
    }
    Ok(audit(rows))
}

/// `#{n ∈ Z^d : |n_i| ≤ M, β·n ∈ [a, b]}` by enumeration.
pub fn linear_form_count(beta: &[f64], m: i64, window: [f64; 2], budget: &CountBudget) -> Result<u64> {
    let d = beta.len();
    check_work("linear form count", ((2 * m + 1) as f64).powi(d as i32), budget)?;
    let mut sums = vec![0.0f64];
    for &b in beta {
        let mut next = Vec::with_capacity(sums.len() * (2 * m + 1) as usize);
        for &s in &sums {
            for n in -m..=m {
                next.push(s + b * n as f64);
            }
        }
        sums = next;
    }
    Ok(sums.iter().filter(|&&s| (window[0]..=window[1]).contains(&s)).count() as u64)
}

/// Linear-form counts against `M^{d−1}(b−a) + 1` along a ladder of `M`.
pub fn pigeonhole_audit(beta: &[f64], ladder: &[u32], window: [f64; 2], budget: &CountBudget) -> Result<BoundAudit> {
    let d = beta.len() as i32;
    let mut rows = Vec::new();
    for &m in ladder {
        let lhs = linear_form_count(beta, m as i64, window, budget)? as f64;
        let shape = (m as f64).powi(d - 1) * (window[1] - window[0]) + 1.0;
        rows.push(AuditRow {
            l: m,
            lhs,
            shape,
            constant: lhs / shape,
        });
    }
    Ok(audit(rows))
}

/// CSV with header `L,count,continuum,rel_error,seconds`.
pub fn write_ladder_csv<W: std::io::Write>(rows: &[LadderRow], mut w: W) -> Result<()> {
    writeln!(w, "L,count,continuum,rel_error,seconds")?;
    for r in rows {
        writeln!(w, "{},{},{:e},{:e},{:.6}", r.l, r.count, r.continuum, r.rel_error, r.seconds)?;
    }
    Ok(())
}
