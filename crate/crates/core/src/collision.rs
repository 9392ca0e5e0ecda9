//! Kinetic collision operator, finite-time sinc² kernels and a kinetic-time stepper.
//!
//! Continuum integrals use the frame `p = k1 − k`, `q = k3 − k` (so `k2 = k + p + q`), in
//! which `Ω = 2 (β∘p)·q`. For fixed `p` the resonance constraint is linear in `q`: writing
//! `q = s + r n̂` with `n̂ ∥ β∘p` and `s ⟂ n̂`, `δ(ω − Ω)` fixes `r = ω / g` with
//! `g = 2|β∘p|`. This gives the surface density
//!
//! `G(ω) = ∫ dp (1/g) ∫ ds F(k, k+p, k+p+q, k+q)|_{r = ω/g}`
//!
//! from which the collision value (`G(0)`), the mollified values and the sinc² kernel
//! all follow.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, TorusSpec};
use crate::quad::{gauss_legendre, graded_edges, richardson_even, Rule};
use crate::spectra::Profile;
use crate::trees::sinc_squared;

/// `τ = L^{2d} / (2λ⁴)`.
pub fn kinetic_time(lambda: f64, l: f64, d: usize) -> Result<f64> {
    if !(lambda > 0.0) || !(l > 0.0) {
        return Err(Error::invalid(format!("kinetic time needs λ, L > 0 (got λ={lambda}, L={l})")));
    }
    Ok(l.powi(2 * d as i32) / (2.0 * lambda.powi(4)))
}

/// `ρ1ρ2ρ3 − ρρ2ρ3 + ρρ1ρ3 − ρρ1ρ2` and the sum of the absolute values of its terms.
#[inline]
fn bracket(r0: f64, r1: f64, r2: f64, r3: f64) -> (f64, f64) {
    let terms = [r1 * r2 * r3, r0 * r2 * r3, r0 * r1 * r3, r0 * r1 * r2];
    (
        terms[0] - terms[1] + terms[2] - terms[3],
        terms[0].abs() + terms[1].abs() + terms[2].abs() + terms[3].abs(),
    )
}

/// Exact lattice sum
/// `(2λ⁴/L^{4d}) Σ φφ1φ2φ3 [1/φ − 1/φ1 + 1/φ2 − 1/φ3] |sin(πtΩ)/(πΩ)|²`
/// over the triples with `k1 − k2 + k3 = k`.
pub fn finite_time_kernel_lattice(lat: &Lattice<f64>, t: f64, k: usize, phi: &[f64], lambda: f64) -> Result<f64> {
    if phi.len() != lat.len() {
        return Err(Error::invalid("profile length differs from mode count"));
    }
    if let Some(p) = phi.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::invalid(format!("negative profile value {p}")));
    }
    let spec = lat.spec();
    let scale = 2.0 * lambda.powi(4) / spec.l.powi(4 * spec.d as i32);
    let p0 = phi[k];
    let mut acc = 0.0;
    for (k1, k2, k3) in lat.sigma_zero_triples(k) {
        let (p1, p2, p3) = (phi[k1], phi[k2], phi[k3]);
        let product = p0 * p1 * p2 * p3;
        let weight = if product > 0.0 {
            product * (1.0 / p0 - 1.0 / p1 + 1.0 / p2 - 1.0 / p3)
        } else {
            // limit of the reciprocal form when a factor vanishes
            bracket(p0, p1, p2, p3).0
        };
        if weight != 0.0 {
            acc += weight * sinc_squared(lat.omega_ranks(k, k1, k2, k3), t);
        }
    }
    Ok(scale * acc)
}

/// Continuum dispersion `Q(k) = Σ β_i k_i²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub beta: Vec<f64>,
}

impl Dispersion {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&beta.len()) {
            return Err(Error::Unsupported(format!(
                "continuum quadrature is implemented for d = 2, 3 (got d = {})",
                beta.len()
            )));
        }
        if beta.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid("β entries must be positive"));
        }
        Ok(Dispersion { beta })
    }

    pub fn from_spec(spec: &TorusSpec) -> Result<Self> {
        Dispersion::new(spec.beta.clone())
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn q(&self, k: &[f64]) -> f64 {
        k.iter().zip(&self.beta).map(|(x, b)| b * x * x).sum()
    }
}

/// Continuum density `ρ(k)` together with the radius of the region that carries it.
pub trait Density: Sync {
    fn value(&self, k: &[f64]) -> f64;
    /// Beyond this radius the density is negligible and is not integrated.
    fn radius(&self) -> f64;
}

/// Analytic spectral profile, integrated over the ball of `radius`.
#[derive(Clone, Debug)]
pub struct ProfileDensity {
    pub profile: Profile,
    pub radius: f64,
}

impl ProfileDensity {
    pub fn new(profile: Profile, radius: f64) -> Result<Self> {
        profile.validate()?;
        if profile.eval(&[0.0]).is_none() {
            return Err(Error::invalid("tabulated profiles have no continuum values"));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid("density radius must be positive"));
        }
        Ok(ProfileDensity { profile, radius })
    }
}

impl Density for ProfileDensity {
    fn value(&self, k: &[f64]) -> f64 {
        self.profile.eval(k).unwrap_or(0.0)
    }
    fn radius(&self) -> f64 {
        self.radius
    }
}

/// `amplitude · exp(−π Σ ((k_i − c_i)/w_i)²)`.
#[derive(Clone, Debug)]
pub struct ShiftedGaussian {
    pub center: Vec<f64>,
    pub widths: Vec<f64>,
    pub amplitude: f64,
    pub radius: f64,
}

impl Density for ShiftedGaussian {
    fn value(&self, k: &[f64]) -> f64 {
        let e: f64 = k
            .iter()
            .zip(&self.center)
            .zip(&self.widths)
            .map(|((x, c), w)| ((x - c) / w).powi(2))
            .sum();
        self.amplitude * (-PI * e).exp()
    }
    fn radius(&self) -> f64 {
        self.radius
    }
}

/// `1 / (a + b·Q(k) + c·k)`.
#[derive(Clone, Debug)]
pub struct RayleighJeans {
    pub a: f64,
    pub b: f64,
    pub c: Vec<f64>,
    pub beta: Vec<f64>,
    pub radius: f64,
}

impl RayleighJeans {
    /// Positive on all of `R^d` when `a > Σ c_i² / (4 b β_i)`.
    pub fn is_positive_definite(&self) -> bool {
        self.b > 0.0 && self.a > self.c.iter().zip(&self.beta).map(|(c, be)| c * c / (4.0 * self.b * be)).sum::<f64>()
    }
}

impl Density for RayleighJeans {
    fn value(&self, k: &[f64]) -> f64 {
        let q: f64 = k.iter().zip(&self.beta).map(|(x, b)| b * x * x).sum();
        let lin: f64 = k.iter().zip(&self.c).map(|(x, c)| x * c).sum();
        1.0 / (self.a + self.b * q + lin)
    }
    fn radius(&self) -> f64 {
        self.radius
    }
}

#[derive(Clone, Debug)]
pub struct ConstantDensity {
    pub value: f64,
    pub radius: f64,
}

impl Density for ConstantDensity {
    fn value(&self, _k: &[f64]) -> f64 {
        self.value
    }
    fn radius(&self) -> f64 {
        self.radius
    }
}

#[derive(Clone, Debug)]
struct Direction {
    e: [f64; 3],
    /// `|β∘e|`
    a: f64,
    n: [f64; 3],
    t1: [f64; 3],
    t2: [f64; 3],
    weight: f64,
}

/// Quadrature over `p` (directions × radius) and the plane `s ⟂ β∘p`.
#[derive(Clone, Debug)]
struct InnerGrid {
    d: usize,
    dirs: Vec<Direction>,
    radial: Rule,
    plane: Vec<([f64; 2], f64)>,
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl InnerGrid {
    /// `graded` refines the radial rule toward `|p| = 0`, where `r = ω/g` sweeps through the
    /// support for `ω ≠ 0`; on the resonant set itself the radial integrand is smooth.
    fn new(disp: &Dispersion, reach: f64, m: usize, graded: bool) -> Self {
        let d = disp.dim();
        let m = m.max(4);
        let panels = (m / 4).max(1);
        let mut dirs = Vec::new();
        let mut push = |e: [f64; 3], weight: f64| {
            let b = [disp.beta[0] * e[0], disp.beta[1] * e[1], if d == 3 { disp.beta[2] * e[2] } else { 0.0 }];
            let a = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let n = unit(b);
            let (t1, t2) = if d == 2 {
                ([-n[1], n[0], 0.0], [0.0; 3])
            } else {
                let helper = if n[0].abs() < 0.6 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
                let t1 = unit(cross(n, helper));
                (t1, cross(n, t1))
            };
            dirs.push(Direction { e, a, n, t1, t2, weight });
        };
        if d == 2 {
            let n_theta = 4 * m;
            for i in 0..n_theta {
                let th = 2.0 * PI * i as f64 / n_theta as f64;
                push([th.cos(), th.sin(), 0.0], 2.0 * PI / n_theta as f64);
            }
        } else {
            let (x, w) = gauss_legendre(m);
            let n_az = 2 * m;
            for (ci, wi) in x.iter().zip(&w) {
                let si = (1.0 - ci * ci).sqrt();
                for j in 0..n_az {
                    let ph = 2.0 * PI * j as f64 / n_az as f64;
                    push([si * ph.cos(), si * ph.sin(), *ci], wi * 2.0 * PI / n_az as f64);
                }
            }
        }
        let radial = if graded {
            Rule::panels(&graded_edges(reach, 6, panels), 8)
        } else {
            Rule::uniform(0.0, reach, panels, 8)
        };
        let line = Rule::uniform(-reach, reach, panels, 8);
        let plane = if d == 2 {
            line.nodes.iter().zip(&line.weights).map(|(&s, &w)| ([s, 0.0], w)).collect()
        } else {
            let mut v = Vec::with_capacity(line.len() * line.len());
            for (&s1, &w1) in line.nodes.iter().zip(&line.weights) {
                for (&s2, &w2) in line.nodes.iter().zip(&line.weights) {
                    v.push(([s1, s2], w1 * w2));
                }
            }
            v
        };
        InnerGrid { d, dirs, radial, plane }
    }

    /// `(G(ω), G_abs(ω))` for every `ω` in `omegas`, where `G_abs` integrates the absolute
    /// values of the four bracket terms.
    fn surface<D: Density + ?Sized>(&self, density: &D, k: &[f64], omegas: &[f64]) -> Vec<(f64, f64)> {
        let d = self.d;
        let r0 = density.value(k);
        let mut out = vec![(0.0, 0.0); omegas.len()];
        let mut k1 = [0.0; 3];
        let mut k2 = [0.0; 3];
        let mut k3 = [0.0; 3];
        // on the resonant set k3 = k + s does not depend on |p|
        let resonant = omegas.iter().all(|&o| o == 0.0);
        let mut plane_rho = vec![0.0; if resonant { self.plane.len() } else { 0 }];
        for dir in &self.dirs {
            if resonant {
                for (v, (s, _)) in plane_rho.iter_mut().zip(&self.plane) {
                    for i in 0..d {
                        k3[i] = k[i] + s[0] * dir.t1[i] + s[1] * dir.t2[i];
                    }
                    *v = density.value(&k3[..d]);
                }
            }
            for (&rho, &wr) in self.radial.nodes.iter().zip(&self.radial.weights) {
                let g = 2.0 * rho * dir.a;
                let base = dir.weight * wr * rho.powi(d as i32 - 2) / (2.0 * dir.a);
                for i in 0..d {
                    k1[i] = k[i] + rho * dir.e[i];
                }
                let r1 = density.value(&k1[..d]);
                if resonant {
                    let (mut v_acc, mut a_acc) = (0.0, 0.0);
                    for ((s, ws), &r3) in self.plane.iter().zip(&plane_rho) {
                        for i in 0..d {
                            k2[i] = k1[i] + s[0] * dir.t1[i] + s[1] * dir.t2[i];
                        }
                        let (v, a) = bracket(r0, r1, density.value(&k2[..d]), r3);
                        v_acc += ws * v;
                        a_acc += ws * a;
                    }
                    for o in out.iter_mut() {
                        o.0 += base * v_acc;
                        o.1 += base * a_acc;
                    }
                    continue;
                }
                for (s, ws) in &self.plane {
                    for (o, &omega) in out.iter_mut().zip(omegas) {
                        let r = omega / g;
                        for i in 0..d {
                            let q = s[0] * dir.t1[i] + s[1] * dir.t2[i] + r * dir.n[i];
                            k3[i] = k[i] + q;
                            k2[i] = k1[i] + q;
                        }
                        let r3 = density.value(&k3[..d]);
                        let r2 = density.value(&k2[..d]);
                        let (v, a) = bracket(r0, r1, r2, r3);
                        o.0 += base * ws * v;
                        o.1 += base * ws * a;
                    }
                }
            }
        }
        out
    }
}

/// Half-width of the region in `p` and `q` that can carry a nonzero integrand at `k`.
fn reach<D: Density + ?Sized>(density: &D, k: &[f64]) -> f64 {
    let rad = density.radius();
    let norm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    (2.0 * rad).max(rad + norm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMethod {
    /// Gaussian mollifier on a width ladder with Richardson extrapolation.
    #[default]
    Mollifier,
    /// Direct evaluation on the resonant set through the co-area factor `1/g`.
    Surface,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MollifierShape {
    #[default]
    Gaussian,
}

/// How `δ(Ω)` is realized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeltaScheme {
    pub method: DeltaMethod,
    pub shape: MollifierShape,
    /// Largest mollifier width, in units of Ω.
    pub eps0: f64,
    /// Ladder length; widths are `eps0 / 2^j`.
    pub levels: usize,
    /// Inner quadrature resolution.
    pub resolution: usize,
    /// Relative residual above which a value is flagged.
    pub tolerance: f64,
}

impl Default for DeltaScheme {
    fn default() -> Self {
        DeltaScheme {
            method: DeltaMethod::Mollifier,
            shape: MollifierShape::Gaussian,
            eps0: 0.05,
            levels: 3,
            resolution: 16,
            tolerance: 1e-3,
        }
    }
}

impl DeltaScheme {
    pub fn surface(resolution: usize) -> Self {
        DeltaScheme {
            method: DeltaMethod::Surface,
            resolution,
            ..DeltaScheme::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0) || self.levels == 0 {
            return Err(Error::invalid("mollifier ladder needs eps0 > 0 and at least one level"));
        }
        if self.resolution < 4 {
            return Err(Error::invalid("inner resolution must be at least 4"));
        }
        Ok(())
    }

    pub fn ladder(&self) -> Vec<f64> {
        (0..self.levels).map(|j| self.eps0 / 2f64.powi(j as i32)).collect()
    }

    /// Number of even error terms removed by the extrapolation.
    pub fn extrapolation_order(&self) -> usize {
        self.levels - 1
    }

    pub fn halved(&self) -> Self {
        DeltaScheme {
            eps0: 0.5 * self.eps0,
            ..self.clone()
        }
    }
}

/// A collision value with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionValue {
    pub value: f64,
    /// Same integral with every bracket term taken in absolute value.
    pub scale: f64,
    /// Extrapolation residual (zero for the surface method).
    pub residual: f64,
    pub converged: bool,
    /// Mollified values along the ladder.
    pub levels: Vec<f64>,
}

const MOLLIFIER_NODES: usize = 32;
const MOLLIFIER_SPAN: f64 = 8.0;

/// `T(ρ)(k) = ∫ δ(Σ) δ(Ω) ρρ1ρ2ρ3 [1/ρ − 1/ρ1 + 1/ρ2 − 1/ρ3] dk1 dk2 dk3`, without a
/// `1/τ` prefactor.
pub fn collision_value<D: Density + ?Sized>(disp: &Dispersion, density: &D, k: &[f64], scheme: &DeltaScheme) -> Result<CollisionValue> {
    scheme.validate()?;
    if k.len() != disp.dim() {
        return Err(Error::invalid("k has the wrong dimension"));
    }
    let grid = InnerGrid::new(
        disp,
        reach(density, k),
        scheme.resolution,
        scheme.method == DeltaMethod::Mollifier,
    );
    match scheme.method {
        DeltaMethod::Surface => {
            let (value, scale) = grid.surface(density, k, &[0.0])[0];
            Ok(CollisionValue {
                value,
                scale,
                residual: 0.0,
                converged: true,
                levels: Vec::new(),
            })
        }
        DeltaMethod::Mollifier => {
            let (x, w) = gauss_legendre(MOLLIFIER_NODES);
            let ladder = scheme.ladder();
            let mut omegas = Vec::new();
            let mut weights = Vec::new();
            for &eps in &ladder {
                let half = MOLLIFIER_SPAN * eps;
                for (xi, wi) in x.iter().zip(&w) {
                    let om = half * xi;
                    omegas.push(om);
                    weights.push(half * wi * (-0.5 * (om / eps).powi(2)).exp() / ((2.0 * PI).sqrt() * eps));
                }
            }
            let g = grid.surface(density, k, &omegas);
            let mut levels = Vec::new();
            let mut scale = 0.0;
            for j in 0..ladder.len() {
                let range = j * MOLLIFIER_NODES..(j + 1) * MOLLIFIER_NODES;
                levels.push(range.clone().map(|i| weights[i] * g[i].0).sum());
                scale = range.map(|i| weights[i] * g[i].1).sum();
            }
            let (value, gap) = richardson_even(&levels);
            // G(ω) carries an ω² log|ω| term at the origin that the even expansion does not
            // remove; the doubled gap covers it across the default ladder.
            let residual = 2.0 * gap;
            Ok(CollisionValue {
                value,
                scale,
                residual,
                converged: residual <= scheme.tolerance * scale,
                levels,
            })
        }
    }
}

/// Collision value of a kinetic state at `k`.
pub fn collision_operator(state: &KineticState, k: &[f64], scheme: &DeltaScheme) -> Result<CollisionValue> {
    collision_value(&state.dispersion, state, k, scheme)
}

/// Surface density `G(ω)` tabulated on panels graded geometrically toward `ω = 0`.
#[derive(Clone, Debug)]
pub struct ContinuumKernel {
    edges: Vec<f64>,
    order: usize,
    nodes: Vec<f64>,
    values: Vec<f64>,
    bary: Vec<f64>,
    omega_max: f64,
}

const KERNEL_PANEL_ORDER: usize = 8;
const KERNEL_GRADING: usize = 18;

impl ContinuumKernel {
    pub fn new<D: Density + ?Sized>(disp: &Dispersion, density: &D, k: &[f64], resolution: usize) -> Result<Self> {
        if k.len() != disp.dim() {
            return Err(Error::invalid("k has the wrong dimension"));
        }
        let reach = reach(density, k);
        let beta_max = disp.beta.iter().cloned().fold(0.0, f64::max);
        let omega_max = 2.0 * beta_max * reach * reach * (disp.dim() as f64).sqrt();
        let mut positive: Vec<f64> = (0..=KERNEL_GRADING).map(|j| omega_max * 0.5f64.powi(j as i32)).collect();
        positive.reverse();
        let mut edges: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
        edges.extend(positive);
        let order = KERNEL_PANEL_ORDER;
        let (x, w) = gauss_legendre(order);
        let bary: Vec<f64> = x
            .iter()
            .zip(&w)
            .enumerate()
            .map(|(j, (xi, wi))| if j % 2 == 0 { 1.0 } else { -1.0 } * ((1.0 - xi * xi) * wi).sqrt())
            .collect();
        let mut nodes = Vec::new();
        for pair in edges.windows(2) {
            let (mid, half) = (0.5 * (pair[0] + pair[1]), 0.5 * (pair[1] - pair[0]));
            nodes.extend(x.iter().map(|xi| mid + half * xi));
        }
        let grid = InnerGrid::new(disp, reach, resolution, true);
        let values = grid.surface(density, k, &nodes).into_iter().map(|(v, _)| v).collect();
        Ok(ContinuumKernel {
            edges,
            order,
            nodes,
            values,
            bary,
            omega_max,
        })
    }

    /// Interpolated `G(ω)`; zero outside the tabulated range.
    pub fn surface_density(&self, omega: f64) -> f64 {
        if omega.abs() >= self.omega_max {
            return 0.0;
        }
        let panel = self.edges.partition_point(|&e| e <= omega).clamp(1, self.edges.len() - 1) - 1;
        let nodes = &self.nodes[panel * self.order..(panel + 1) * self.order];
        let values = &self.values[panel * self.order..(panel + 1) * self.order];
        let (mut num, mut den) = (0.0, 0.0);
        for ((&xn, &v), &b) in nodes.iter().zip(values).zip(&self.bary) {
            let diff = omega - xn;
            if diff == 0.0 {
                return v;
            }
            num += b * v / diff;
            den += b / diff;
        }
        num / den
    }

    /// `2λ⁴ ∫ G(ω) |sin(πtΩ)/(πΩ)|² dω`.
    pub fn at(&self, t: f64, lambda: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let (x, w) = gauss_legendre(8);
        let mut acc = 0.0;
        for pair in self.edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pieces = ((b - a) * 4.0 * t).ceil().max(1.0) as usize;
            let h = (b - a) / pieces as f64;
            for i in 0..pieces {
                let mid = a + (i as f64 + 0.5) * h;
                for (xi, wi) in x.iter().zip(&w) {
                    let om = mid + 0.5 * h * xi;
                    acc += 0.5 * h * wi * self.surface_density(om) * sinc_squared(om, t);
                }
            }
        }
        2.0 * lambda.powi(4) * acc
    }
}

/// Kernel value with a resolution-doubling check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// Relative gap between resolutions `m` and `2m`.
    pub gap: f64,
    pub converged: bool,
}

pub const KERNEL_TOLERANCE: f64 = 1e-3;

/// `2λ⁴ ∫ δ(Σ) F |sin(πtΩ)/(πΩ)|² dk1 dk2 dk3`: the `L → ∞` limit of
/// `L^{2d}` times [`finite_time_kernel_lattice`].
pub fn finite_time_kernel_continuum<D: Density + ?Sized>(
    disp: &Dispersion,
    t: f64,
    k: &[f64],
    density: &D,
    lambda: f64,
    m: usize,
) -> Result<KernelValue> {
    let coarse = ContinuumKernel::new(disp, density, k, m)?.at(t, lambda);
    let fine = ContinuumKernel::new(disp, density, k, 2 * m)?.at(t, lambda);
    let gap = if fine == 0.0 {
        (coarse - fine).abs()
    } else {
        ((coarse - fine) / fine).abs()
    };
    Ok(KernelValue {
        value: fine,
        gap,
        converged: gap <= KERNEL_TOLERANCE,
    })
}

/// `∫_{−X}^{X} (sin x / x)² dx` by panel quadrature plus the analytic `2/X` tail bound
/// correction; approaches `π`.
pub fn sinc_normalization(span: f64) -> f64 {
    let pieces = (span * 2.0).ceil() as usize;
    let rule = Rule::uniform(-span, span, pieces, 16);
    let body = rule.integrate(|x| if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) });
    // ∫_X^∞ sin²x/x² dx = 1/(2X) + O(X^{-2}) on average
    body + 1.0 / span
}

/// Density on a tensor Gauss–Legendre grid over `[−κ, κ]^d`, zero outside the ball `|k| ≤ κ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KineticState {
    pub dispersion: Dispersion,
    pub kappa: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major values, first axis slowest.
    pub rho: Vec<f64>,
    pub time: f64,
    bary: Vec<f64>,
}

impl KineticState {
    pub fn new<D: Density + ?Sized>(disp: Dispersion, kappa: f64, m: usize, density: &D) -> Result<Self> {
        if !(kappa > 0.0) || !(2..=64).contains(&m) {
            return Err(Error::invalid("kinetic grid needs κ > 0 and 2 ≤ m ≤ 64"));
        }
        let (x, w) = gauss_legendre(m);
        let nodes: Vec<f64> = x.iter().map(|xi| kappa * xi).collect();
        let weights: Vec<f64> = w.iter().map(|wi| kappa * wi).collect();
        let bary = x
            .iter()
            .zip(&w)
            .enumerate()
            .map(|(j, (xi, wi))| if j % 2 == 0 { 1.0 } else { -1.0 } * ((1.0 - xi * xi) * wi).sqrt())
            .collect();
        let mut state = KineticState {
            dispersion: disp,
            kappa,
            nodes,
            weights,
            rho: Vec::new(),
            time: 0.0,
            bary,
        };
        let rho = (0..state.len())
            .map(|i| {
                let k = state.node(i);
                if state.inside(&k) {
                    density.value(&k)
                } else {
                    0.0
                }
            })
            .collect::<Vec<_>>();
        if let Some((i, v)) = rho.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NonPositive {
                node: i,
                value: *v,
                time: 0.0,
            });
        }
        state.rho = rho;
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.dispersion.dim()
    }

    pub fn len(&self) -> usize {
        self.nodes.len().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    fn inside(&self, k: &[f64]) -> bool {
        k.iter().map(|x| x * x).sum::<f64>() <= self.kappa * self.kappa
    }

    fn axes(&self, i: usize) -> Vec<usize> {
        let m = self.nodes.len();
        let mut rest = i;
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = rest % m;
            rest /= m;
        }
        idx
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        self.axes(i).into_iter().map(|j| self.nodes[j]).collect()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.axes(i).into_iter().map(|j| self.weights[j]).product()
    }

    /// `∫ f(k) ρ(k) dk` on the grid.
    pub fn moment(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weight(i) * f(&self.node(i)) * self.rho[i]).sum()
    }

    pub fn mass(&self) -> f64 {
        self.moment(|_| 1.0)
    }

    pub fn energy(&self) -> f64 {
        self.moment(|k| self.dispersion.q(k))
    }

    fn with_values(&self, rho: Vec<f64>, time: f64) -> Self {
        KineticState {
            rho,
            time,
            ..self.clone()
        }
    }

    fn basis(&self, x: f64, out: &mut [f64]) {
        let mut den = 0.0;
        for (j, (&xn, &b)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let diff = x - xn;
            if diff == 0.0 {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[j] = 1.0;
                return;
            }
            out[j] = b / diff;
            den += out[j];
        }
        out.iter_mut().for_each(|o| *o /= den);
    }
}

impl Density for KineticState {
    fn value(&self, k: &[f64]) -> f64 {
        if !self.inside(k) {
            return 0.0;
        }
        let m = self.nodes.len();
        let mut lx = [[0.0; 64]; 3];
        for (a, &x) in k.iter().enumerate() {
            self.basis(x, &mut lx[a][..m]);
        }
        match self.dim() {
            2 => {
                let mut acc = 0.0;
                for i in 0..m {
                    let row = &self.rho[i * m..(i + 1) * m];
                    acc += lx[0][i] * row.iter().zip(&lx[1][..m]).map(|(r, l)| r * l).sum::<f64>();
                }
                acc
            }
            _ => {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        let row = &self.rho[(i * m + j) * m..(i * m + j + 1) * m];
                        acc += lx[0][i] * lx[1][j] * row.iter().zip(&lx[2][..m]).map(|(r, l)| r * l).sum::<f64>();
                    }
                }
                acc
            }
        }
    }

    fn radius(&self) -> f64 {
        self.kappa
    }
}

/// `T(ρ)` at every grid node inside the ball (zero outside).
pub fn collision_field(state: &KineticState, scheme: &DeltaScheme) -> Result<Vec<f64>> {
    (0..state.len())
        .into_par_iter()
        .map(|i| {
            let k = state.node(i);
            if state.inside(&k) {
                collision_operator(state, &k, scheme).map(|v| v.value)
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

/// Nodes whose initial value is below this fraction of the peak are numerical tail.
pub const SUPPORT_FLOOR: f64 = 1e-6;
/// Tail nodes may dip below zero by at most this fraction of the peak.
pub const TAIL_SLACK: f64 = 1e-6;

/// Explicit RK4 in kinetic time for `∂_s ρ = T(ρ)`. Returns the state after every step.
pub fn wke_evolve(state: &KineticState, s_end: f64, ds: f64, scheme: &DeltaScheme) -> Result<Vec<KineticState>> {
    if !(ds > 0.0) || !(s_end >= 0.0) {
        return Err(Error::invalid("wke_evolve needs ds > 0 and s_end ≥ 0"));
    }
    let peak = state.rho.iter().cloned().fold(0.0, f64::max);
    let support: Vec<bool> = state.rho.iter().map(|&r| r > SUPPORT_FLOOR * peak).collect();
    let steps = (s_end / ds).ceil() as usize;
    let mut out = vec![state.clone()];
    let mut cur = state.clone();
    for _ in 0..steps {
        let h = ds.min(s_end - cur.time);
        let axpy = |base: &KineticState, k: &[f64], c: f64| {
            let rho = base.rho.iter().zip(k).map(|(r, t)| r + c * t).collect();
            base.with_values(rho, base.time + c)
        };
        let k1 = collision_field(&cur, scheme)?;
        let k2 = collision_field(&axpy(&cur, &k1, 0.5 * h), scheme)?;
        let k3 = collision_field(&axpy(&cur, &k2, 0.5 * h), scheme)?;
        let k4 = collision_field(&axpy(&cur, &k3, h), scheme)?;
        let rho: Vec<f64> = (0..cur.rho.len())
            .map(|i| cur.rho[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        let time = cur.time + h;
        if let Some(node) = (0..rho.len()).find(|&i| (support[i] && !(rho[i] > 0.0)) || !(rho[i] >= -TAIL_SLACK * peak)) {
            return Err(Error::NonPositive {
                node,
                value: rho[node],
                time,
            });
        }
        cur = cur.with_values(rho, time);
        out.push(cur.clone());
    }
    Ok(out)
}

/// `∫ T dk`, `∫ k_i T dk` and `∫ Q T dk` over an outer Gauss–Legendre grid, each paired
/// with the matching integral of `|·|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub mass: (f64, f64),
    pub momentum: Vec<(f64, f64)>,
    pub energy: (f64, f64),
    /// Largest `|T(k)| / scale(k)` over the outer nodes.
    pub max_pointwise: f64,
}

impl ConservationReport {
    pub fn worst_relative(&self) -> f64 {
        let rel = |(v, s): (f64, f64)| if s == 0.0 { 0.0 } else { v.abs() / s };
        self.momentum
            .iter()
            .map(|&p| rel(p))
            .fold(rel(self.mass).max(rel(self.energy)), f64::max)
    }
}

pub fn conservation_check<D: Density + ?Sized>(
    disp: &Dispersion,
    density: &D,
    outer_radius: f64,
    outer_nodes: usize,
    scheme: &DeltaScheme,
) -> Result<ConservationReport> {
    let d = disp.dim();
    let (x, w) = gauss_legendre(outer_nodes);
    let total = outer_nodes.pow(d as u32);
    let points: Vec<(Vec<f64>, f64)> = (0..total)
        .map(|lin| {
            let mut rest = lin;
            let mut k = vec![0.0; d];
            let mut weight = 1.0;
            for a in (0..d).rev() {
                let j = rest % outer_nodes;
                rest /= outer_nodes;
                k[a] = outer_radius * x[j];
                weight *= outer_radius * w[j];
            }
            (k, weight)
        })
        .collect();
    let values = points
        .par_iter()
        .map(|(k, _)| collision_value(disp, density, k, scheme))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ConservationReport {
        mass: (0.0, 0.0),
        momentum: vec![(0.0, 0.0); d],
        energy: (0.0, 0.0),
        max_pointwise: 0.0,
    };
    for ((k, weight), v) in points.iter().zip(&values) {
        let q = disp.q(k);
        report.mass.0 += weight * v.value;
        report.mass.1 += weight * v.value.abs();
        for (i, m) in report.momentum.iter_mut().enumerate() {
            m.0 += weight * k[i] * v.value;
            m.1 += weight * (k[i] * v.value).abs();
        }
        report.energy.0 += weight * q * v.value;
        report.energy.1 += weight * (q * v.value).abs();
        if v.scale > 0.0 {
            report.max_pointwise = report.max_pointwise.max(v.value.abs() / v.scale);
        }
    }
    Ok(report)
}

/// CSV with header `k1..kd,value,residual`.
pub fn write_collision_csv<W: Write>(rows: &[(Vec<f64>, f64, f64)], mut w: W) -> Result<()> {
    let d = rows.first().map_or(0, |r| r.0.len());
    let head: Vec<String> = (1..=d).map(|i| format!("k{i}")).collect();
    writeln!(w, "{}{}value,residual", head.join(","), if d > 0 { "," } else { "" })?;
    for (k, v, r) in rows {
        let ks: Vec<String> = k.iter().map(|x| format!("{x:e}")).collect();
        writeln!(w, "{},{v:e},{r:e}", ks.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
