//! Time integration of the interaction-picture mode equations
//! `ȧ_k = i (λ/L^d)² Σ_{k−k1+k2−k3=0} a_{k1} ā_{k2} a_{k3} e^{−2πitΩ}`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::quad::Rule;
use crate::scalar::Real;
use crate::spectra::SpectralField;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Integrating-factor RK4: classical RK4 on the interaction variables, which
    /// is the exponential RK4 scheme for `û = a e^{2πitQ}` with the linear phase exact.
    #[default]
    ExpRk4,
    /// Duhamel iterates by nested Gauss panels.
    Picard,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityPath {
    /// Explicit sum over admissible triples, O(N²) per mode.
    DirectConvolution,
    /// Cubic product on a zero-padded FFT grid of side `2(2K_max+1)`.
    #[default]
    PaddedTransform,
}

fn default_picard_order() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Step size; `None` selects [`default_dt`].
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub nonlinearity_path: NonlinearityPath,
    pub lambda: f64,
    /// Iterate count used when `integrator` is `picard`.
    #[serde(default = "default_picard_order")]
    pub picard_order: usize,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        SolverConfig {
            dt: None,
            integrator: Integrator::ExpRk4,
            nonlinearity_path: NonlinearityPath::PaddedTransform,
            lambda,
            picard_order: default_picard_order(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_path(mut self, path: NonlinearityPath) -> Self {
        self.nonlinearity_path = path;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("coupling λ={} must be nonnegative", self.lambda)));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("time step {dt} must be positive")));
            }
        }
        Ok(())
    }
}

/// Default step: the nonlinear scale `0.1·L^{2d}/(λ² N max|a|²)` capped by 0.1
/// and by a resolution limit on the fastest interaction phase `2π max|Ω|`.
pub fn default_dt<T: Real>(lat: &Lattice<T>, field0: &SpectralField<T>, lambda: f64) -> f64 {
    let spec = lat.spec();
    let l2d = spec.l.powi(2 * spec.d as i32);
    let amax = field0.amps.iter().map(|a| a.norm_sqr().as_f64()).fold(0.0, f64::max);
    let mut dt: f64 = 0.1;
    let nl = lambda * lambda * lat.len() as f64 * amax;
    if nl > 0.0 {
        dt = dt.min(0.1 * l2d / nl);
    }
    let qmax = lat.q_values().iter().map(|q| q.as_f64()).fold(0.0, f64::max);
    if qmax > 0.0 {
        dt = dt.min(LINEAR_PHASE_STEP / (2.0 * std::f64::consts::PI * 2.0 * qmax));
    }
    dt
}

/// Largest phase increment `2π max|Ω| dt` the default step allows.
pub const LINEAR_PHASE_STEP: f64 = 0.05;

/// Zero-padded FFT grid holding the lattice modes.
pub struct PaddedGrid<T: Real> {
    d: usize,
    m: usize,
    index: Vec<usize>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    line: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> PaddedGrid<T> {
    pub fn new(lat: &Lattice<T>) -> Self {
        let d = lat.dim();
        let m = (2 * (2 * lat.kmax() + 1)) as usize;
        let index = (0..lat.len())
            .map(|r| {
                lat.mode(r)
                    .iter()
                    .fold(0usize, |acc, &x| acc * m + x.rem_euclid(m as i64) as usize)
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        PaddedGrid {
            d,
            m,
            index,
            fwd,
            inv,
            line: vec![Complex::default(); m],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    /// Grid side M.
    pub fn side(&self) -> usize {
        self.m
    }

    /// Number of grid points `M^d`.
    pub fn size(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    /// Grid position of each mode.
    pub fn index(&self) -> &[usize] {
        &self.index
    }

    /// Unnormalized d-dimensional transform in place (`inverse` uses `e^{+2πi}`).
    pub fn transform(&mut self, data: &mut [Complex<T>], inverse: bool) {
        let m = self.m;
        let fft = if inverse { self.inv.clone() } else { self.fwd.clone() };
        let total = data.len();
        debug_assert_eq!(total, self.size());
        for axis in 0..self.d {
            let stride = m.pow((self.d - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut self.scratch);
                continue;
            }
            let block = stride * m;
            for base in (0..total).step_by(block) {
                for inner in 0..stride {
                    for j in 0..m {
                        self.line[j] = data[base + inner + j * stride];
                    }
                    fft.process_with_scratch(&mut self.line, &mut self.scratch);
                    for j in 0..m {
                        data[base + inner + j * stride] = self.line[j];
                    }
                }
            }
        }
    }
}

/// Evaluator of the interaction-picture right-hand side.
pub struct Nonlinearity<'a, T: Real> {
    lat: &'a Lattice<T>,
    path: NonlinearityPath,
    coupling: T,
    u: Vec<Complex<T>>,
    grid: Option<PaddedGrid<T>>,
    work: Vec<Complex<T>>,
}

impl<'a, T: Real> Nonlinearity<'a, T> {
    pub fn new(lat: &'a Lattice<T>, lambda: f64, path: NonlinearityPath) -> Self {
        let spec = lat.spec();
        let coupling = T::lit((lambda / spec.l.powi(spec.d as i32)).powi(2));
        let grid = match path {
            NonlinearityPath::PaddedTransform => Some(PaddedGrid::new(lat)),
            NonlinearityPath::DirectConvolution => None,
        };
        let work = vec![Complex::default(); grid.as_ref().map_or(0, |g| g.size())];
        Nonlinearity {
            lat,
            path,
            coupling,
            u: vec![Complex::default(); lat.len()],
            grid,
            work,
        }
    }

    /// Writes `ȧ(t)` for amplitudes `a` into `out`.
    pub fn eval(&mut self, t: T, a: &[Complex<T>], out: &mut [Complex<T>]) {
        let lat = self.lat;
        let tau = T::lit(std::f64::consts::TAU);
        for (r, (u, &ar)) in self.u.iter_mut().zip(a).enumerate() {
            *u = ar * Complex::from_polar(T::one(), tau * t * lat.q(r));
        }
        match self.path {
            NonlinearityPath::DirectConvolution => {
                let n = lat.len();
                for (k, o) in out.iter_mut().enumerate() {
                    let mut acc = Complex::default();
                    for k1 in 0..n {
                        let u1 = self.u[k1];
                        let mut inner = Complex::default();
                        for k2 in 0..n {
                            if let Some(k3) = lat.combine(k, k1, k2) {
                                inner = inner + self.u[k2].conj() * self.u[k3];
                            }
                        }
                        acc = acc + u1 * inner;
                    }
                    *o = acc;
                }
            }
            NonlinearityPath::PaddedTransform => {
                let grid = self.grid.as_mut().expect("grid for padded path");
                self.work.iter_mut().for_each(|w| *w = Complex::default());
                for (r, &g) in grid.index.iter().enumerate() {
                    self.work[g] = self.u[r];
                }
                grid.transform(&mut self.work, true);
                for w in self.work.iter_mut() {
                    *w = *w * w.norm_sqr();
                }
                grid.transform(&mut self.work, false);
                let norm = T::one() / T::lit(grid.size() as f64);
                for (o, &g) in out.iter_mut().zip(&grid.index) {
                    *o = self.work[g] * norm;
                }
            }
        }
        let i_c = Complex::new(T::zero(), self.coupling);
        for (r, o) in out.iter_mut().enumerate() {
            *o = *o * i_c * Complex::from_polar(T::one(), -tau * t * lat.q(r));
        }
    }
}

/// `ȧ` at time `t`, returned as a field tagged with `t`.
pub fn rhs<T: Real>(
    lat: &Lattice<T>,
    field: &SpectralField<T>,
    t: T,
    lambda: f64,
    path: NonlinearityPath,
) -> Result<SpectralField<T>> {
    field.check_on(lat)?;
    let mut out = vec![Complex::default(); lat.len()];
    Nonlinearity::new(lat, lambda, path).eval(t, &field.amps, &mut out);
    Ok(SpectralField { amps: out, time_tag: t })
}

/// Snapshots of a solver run with the mass log.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub fields: Vec<SpectralField<T>>,
    pub mass: Vec<T>,
    pub dt: f64,
    pub steps: usize,
}

impl<T: Real> Trajectory<T> {
    /// `max_t |mass(t) − mass(0)| / mass(0)`.
    pub fn relative_mass_drift(&self) -> f64 {
        let m0 = self.mass[0].as_f64();
        if m0 == 0.0 {
            return 0.0;
        }
        self.mass
            .iter()
            .map(|m| (m.as_f64() - m0).abs() / m0)
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> &SpectralField<T> {
        self.fields.last().expect("trajectory has snapshots")
    }
}

/// Integrates from `field0` at time 0 to `t_end`, snapshotting at both ends.
pub fn evolve<T: Real>(
    lat: &Lattice<T>,
    field0: &SpectralField<T>,
    t_end: f64,
    config: &SolverConfig,
) -> Result<Trajectory<T>> {
    evolve_snapshots(lat, field0, &[t_end], config)
}

/// Integrates and snapshots at each requested time (strictly increasing, > 0).
pub fn evolve_snapshots<T: Real>(
    lat: &Lattice<T>,
    field0: &SpectralField<T>,
    times: &[f64],
    config: &SolverConfig,
) -> Result<Trajectory<T>> {
    config.validate()?;
    field0.check_on(lat)?;
    let mut prev = 0.0;
    for &t in times {
        if !(t.is_finite() && t > prev) {
            return Err(Error::invalid("snapshot times must be positive and strictly increasing"));
        }
        prev = t;
    }
    let dt = config.dt.unwrap_or_else(|| default_dt(lat, field0, config.lambda));
    let mut traj = Trajectory {
        times: vec![T::zero()],
        fields: vec![SpectralField {
            amps: field0.amps.clone(),
            time_tag: T::zero(),
        }],
        mass: vec![field0.mass(lat)],
        dt,
        steps: 0,
    };
    if config.integrator == Integrator::Picard {
        for &t in times {
            let f = picard_iterate(lat, field0, t, config.picard_order, config)?;
            traj.mass.push(f.mass(lat));
            traj.times.push(T::lit(t));
            traj.fields.push(f);
        }
        return Ok(traj);
    }
    let n = lat.len();
    let mut nl = Nonlinearity::new(lat, config.lambda, config.nonlinearity_path);
    let mut a = field0.amps.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![Complex::default(); n],
        vec![Complex::default(); n],
        vec![Complex::default(); n],
        vec![Complex::default(); n],
        vec![Complex::default(); n],
    );
    let mut t0 = 0.0;
    for &t1 in times {
        let steps = ((t1 - t0) / dt).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        let (hh, half, sixth) = (T::lit(h), T::lit(0.5 * h), T::lit(h / 6.0));
        let two = T::lit(2.0);
        for s in 0..steps {
            let t = T::lit(t0 + s as f64 * h);
            nl.eval(t, &a, &mut k1);
            for i in 0..n {
                tmp[i] = a[i] + k1[i] * half;
            }
            nl.eval(t + half, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = a[i] + k2[i] * half;
            }
            nl.eval(t + half, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = a[i] + k3[i] * hh;
            }
            nl.eval(t + hh, &tmp, &mut k4);
            for i in 0..n {
                a[i] = a[i] + (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * sixth;
            }
            traj.steps += 1;
            if let Some(mode) = a.iter().position(|x| !(x.re.is_finite() && x.im.is_finite())) {
                return Err(Error::NonFinite { step: traj.steps, mode });
            }
        }
        let f = SpectralField {
            amps: a.clone(),
            time_tag: T::lit(t1),
        };
        traj.mass.push(f.mass(lat));
        traj.times.push(T::lit(t1));
        traj.fields.push(f);
        t0 = t1;
    }
    Ok(traj)
}

/// Panel rule on [0, t] fine enough for the interaction phases of `lat`.
fn picard_rule<T: Real>(lat: &Lattice<T>, t: f64) -> Rule {
    let qmax = lat.q_values().iter().map(|q| q.as_f64()).fold(0.0, f64::max);
    let phase = std::f64::consts::TAU * 2.0 * qmax * t;
    let panels = ((phase / 6.0).ceil() as usize).max(2);
    Rule::uniform(0.0, t, panels, 12)
}

/// N-th Duhamel iterate `Φ^N` at `t_end`, with `Φ^0 ≡ field0`.
pub fn picard_iterate<T: Real>(
    lat: &Lattice<T>,
    field0: &SpectralField<T>,
    t_end: f64,
    order: usize,
    config: &SolverConfig,
) -> Result<SpectralField<T>> {
    config.validate()?;
    field0.check_on(lat)?;
    let rule = picard_rule(lat, t_end);
    let mut nl = Nonlinearity::new(lat, config.lambda, config.nonlinearity_path);
    let amps = picard_level(lat, &mut nl, &field0.amps, t_end, order, rule.len());
    Ok(SpectralField {
        amps,
        time_tag: T::lit(t_end),
    })
}

fn picard_level<T: Real>(
    lat: &Lattice<T>,
    nl: &mut Nonlinearity<'_, T>,
    a0: &[Complex<T>],
    t: f64,
    level: usize,
    nodes: usize,
) -> Vec<Complex<T>> {
    let mut out = a0.to_vec();
    if level == 0 || t == 0.0 {
        return out;
    }
    let panels = (nodes / 12).max(1);
    let rule = Rule::uniform(0.0, t, panels, 12);
    let mut f = vec![Complex::default(); a0.len()];
    for (&s, &w) in rule.nodes.iter().zip(&rule.weights) {
        let inner = picard_level(lat, nl, a0, s, level - 1, nodes);
        nl.eval(T::lit(s), &inner, &mut f);
        let w = T::lit(w);
        for (o, fi) in out.iter_mut().zip(&f) {
            *o = *o + *fi * w;
        }
    }
    out
}

/// Physical-space samples `u(t, x_j) = L^{-d} Σ_k a_k e^{2πi(k·x_j + tQ(k))}` on the padded grid,
/// restricted to the modes selected by `keep`.
pub fn physical_samples<T: Real>(
    lat: &Lattice<T>,
    grid: &mut PaddedGrid<T>,
    field: &SpectralField<T>,
    t: f64,
    keep: &dyn Fn(usize) -> bool,
    out: &mut Vec<Complex<T>>,
) {
    out.clear();
    out.resize(grid.size(), Complex::default());
    let scale = 1.0 / lat.spec().l.powi(lat.dim() as i32);
    let tau = std::f64::consts::TAU;
    for r in 0..lat.len() {
        if keep(r) {
            let phase = Complex::from_polar(T::lit(scale), T::lit(tau * t * lat.q(r).as_f64()));
            out[grid.index()[r]] = field.amps[r] * phase;
        }
    }
    grid.transform(out, true);
}

/// `∫_{T_L} |u|⁴ dx` for a field of modes selected by `keep`; exact on the padded grid.
pub fn spatial_l4_power<T: Real>(
    lat: &Lattice<T>,
    grid: &mut PaddedGrid<T>,
    field: &SpectralField<T>,
    t: f64,
    keep: &dyn Fn(usize) -> bool,
    buf: &mut Vec<Complex<T>>,
) -> f64 {
    physical_samples(lat, grid, field, t, keep, buf);
    let mean: f64 = buf.iter().map(|u| u.norm_sqr().as_f64().powi(2)).sum::<f64>() / buf.len() as f64;
    mean * lat.spec().l.powi(lat.dim() as i32)
}

/// Block-decomposed space-time norm `(Σ_j ⟨j⟩^{2s} ‖u_{B_j}‖²_{L⁴_{t,x}})^{1/2}`, with unit
/// frequency cubes centred at integer `j` and the time integral by the trapezoid rule on
/// the snapshots.
pub fn zs_norm<T: Real>(lat: &Lattice<T>, traj: &Trajectory<T>, s: f64) -> Result<f64> {
    if traj.times.len() < 2 {
        return Err(Error::invalid("Z^s norm needs at least two snapshots"));
    }
    let l = lat.spec().l;
    let block_of = |r: usize| -> Vec<i64> { lat.mode(r).iter().map(|&x| (x as f64 / l).round() as i64).collect() };
    let mut blocks: Vec<Vec<i64>> = (0..lat.len()).map(block_of).collect();
    blocks.sort();
    blocks.dedup();
    let mut grid = PaddedGrid::new(lat);
    let mut buf = Vec::new();
    let mut total = 0.0;
    for j in &blocks {
        let keep = |r: usize| block_of(r) == *j;
        let vals: Vec<f64> = traj
            .fields
            .iter()
            .zip(&traj.times)
            .map(|(f, t)| spatial_l4_power(lat, &mut grid, f, t.as_f64(), &keep, &mut buf))
            .collect();
        let mut integral = 0.0;
        for i in 1..vals.len() {
            let h = (traj.times[i] - traj.times[i - 1]).as_f64();
            integral += 0.5 * h * (vals[i] + vals[i - 1]);
        }
        let weight = 1.0 + j.iter().map(|x| (x * x) as f64).sum::<f64>();
        total += weight.powf(s) * integral.sqrt();
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TorusSpec;
    use crate::spectra::{sample_initial, Profile, SeedPlan};

    fn setup(d: usize, l: f64, seed: u64) -> (Lattice<f64>, SpectralField<f64>) {
        let lat = Lattice::new(&TorusSpec::generic(d, l, 1.0, seed).unwrap()).unwrap();
        let f = sample_initial(&lat, &Profile::default(), &SeedPlan::new(seed), 0).unwrap();
        (lat, f)
    }

    #[test]
    fn zero_field_has_zero_rhs() {
        let (lat, _) = setup(2, 3.0, 1);
        for path in [NonlinearityPath::DirectConvolution, NonlinearityPath::PaddedTransform] {
            let r = rhs(&lat, &SpectralField::zeros(lat.len()), 0.3, 1.0, path).unwrap();
            assert!(r.amps.iter().all(|a| a.norm() == 0.0));
        }
    }

    #[test]
    fn single_mode_rhs() {
        let (lat, _) = setup(2, 3.0, 1);
        let star = lat.rank_of(&[1, -2]).unwrap();
        let c = Complex::new(0.3, -0.8);
        let mut f = SpectralField::zeros(lat.len());
        f.amps[star] = c;
        let lambda = 1.7;
        let eps = (lambda / 9.0f64).powi(2);
        for path in [NonlinearityPath::DirectConvolution, NonlinearityPath::PaddedTransform] {
            let r = rhs(&lat, &f, 0.37, lambda, path).unwrap();
            let expect = Complex::new(0.0, eps) * c.norm_sqr() * c;
            for (k, a) in r.amps.iter().enumerate() {
                let target = if k == star { expect } else { Complex::default() };
                assert!((a - target).norm() < 1e-15, "{path:?} mode {k}");
            }
        }
    }

    #[test]
    fn paths_agree() {
        for (d, l) in [(1, 2.0), (1, 5.0), (2, 3.0), (3, 2.0)] {
            let (lat, f) = setup(d, l, 9);
            let a = rhs(&lat, &f, 0.71, 2.0, NonlinearityPath::DirectConvolution).unwrap();
            let b = rhs(&lat, &f, 0.71, 2.0, NonlinearityPath::PaddedTransform).unwrap();
            let scale = a.amps.iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(a.sup_distance(&b) <= 1e-12 * scale, "d={d} L={l}");
        }
    }

    #[test]
    fn paths_agree_in_single_precision() {
        let (lat, f) = setup(2, 3.0, 9);
        let lat32 = Lattice::<f32>::new(lat.spec()).unwrap();
        let f32field: SpectralField<f32> = f.cast();
        let a = rhs(&lat32, &f32field, 0.5, 2.0, NonlinearityPath::DirectConvolution).unwrap();
        let b = rhs(&lat32, &f32field, 0.5, 2.0, NonlinearityPath::PaddedTransform).unwrap();
        let c = rhs(&lat, &f, 0.5, 2.0, NonlinearityPath::DirectConvolution).unwrap();
        let scale = c.amps.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!((a.sup_distance(&b) as f64) < 1e-5 * scale);
        assert!(a.cast::<f64>().sup_distance(&c) < 1e-5 * scale);
    }

    #[test]
    fn zero_coupling_freezes_data() {
        let (lat, f) = setup(1, 4.0, 2);
        let traj = evolve(&lat, &f, 2.0, &SolverConfig::new(0.0)).unwrap();
        assert_eq!(traj.last().amps, f.amps);
    }

    #[test]
    fn single_mode_exact_solution() {
        let (lat, _) = setup(1, 4.0, 2);
        let star = lat.rank_of(&[3]).unwrap();
        let c = Complex::new(0.6, 0.9);
        let mut f = SpectralField::zeros(lat.len());
        f.amps[star] = c;
        let lambda = 2.5;
        let traj = evolve(&lat, &f, 1.0, &SolverConfig::new(lambda)).unwrap();
        let eps = (lambda / 4.0f64).powi(2);
        let exact = c * Complex::from_polar(1.0, eps * c.norm_sqr());
        assert!((traj.last().amps[star] - exact).norm() < 1e-10);
        assert!(traj.relative_mass_drift() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let (lat, f) = setup(1, 4.0, 3);
        let lambda = 2.0;
        let run = |dt: f64| evolve(&lat, &f, 1.0, &SolverConfig::new(lambda).with_dt(dt)).unwrap();
        let reference = run(1e-4);
        let e1 = run(0.02).last().l2_distance(reference.last());
        let e2 = run(0.01).last().l2_distance(reference.last());
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn default_step_conserves_mass() {
        for (d, l, lambda) in [(1, 4.0, 2.0), (2, 3.0, 3.0)] {
            let (lat, f) = setup(d, l, 4);
            let traj = evolve_snapshots(&lat, &f, &[2.5, 5.0, 10.0], &SolverConfig::new(lambda)).unwrap();
            assert!(traj.relative_mass_drift() <= 1e-8, "d={d}: {}", traj.relative_mass_drift());
        }
    }

    #[test]
    fn trajectory_paths_agree() {
        let (lat, f) = setup(2, 3.0, 5);
        let cfg = SolverConfig::new(2.0);
        let a = evolve(&lat, &f, 1.0, &cfg.clone().with_path(NonlinearityPath::DirectConvolution)).unwrap();
        let b = evolve(&lat, &f, 1.0, &cfg.with_path(NonlinearityPath::PaddedTransform)).unwrap();
        assert!(a.last().sup_distance(b.last()) < 1e-9);
    }

    #[test]
    fn gauge_covariance() {
        let (lat, f) = setup(1, 4.0, 6);
        let rot = Complex::from_polar(1.0, 0.77);
        let g = SpectralField::from_amps(f.amps.iter().map(|a| a * rot).collect());
        let cfg = SolverConfig::new(2.0);
        let a = evolve(&lat, &f, 1.5, &cfg).unwrap();
        let b = evolve(&lat, &g, 1.5, &cfg).unwrap();
        for (x, y) in a.last().amps.iter().zip(&b.last().amps) {
            assert!((x * rot - y).norm() < 1e-13);
        }
    }

    #[test]
    fn time_reversal_recovers_initial_data() {
        let (lat, f) = setup(1, 4.0, 7);
        let t = 1.2;
        let cfg = SolverConfig::new(2.0);
        let forward = evolve(&lat, &f, t, &cfg).unwrap();
        let tau = std::f64::consts::TAU;
        let b0 = SpectralField::from_amps(
            forward
                .last()
                .amps
                .iter()
                .enumerate()
                .map(|(r, a)| a.conj() * Complex::from_polar(1.0, -tau * t * lat.q(r)))
                .collect(),
        );
        let back = evolve(&lat, &b0, t, &cfg).unwrap();
        for (r, (b, a0)) in back.last().amps.iter().zip(&f.amps).enumerate() {
            let rec = (b * Complex::from_polar(1.0, tau * t * lat.q(r))).conj();
            assert!((rec - a0).norm() < 1e-10);
        }
    }

    #[test]
    fn nan_is_reported_with_step_and_mode() {
        let (lat, mut f) = setup(1, 4.0, 8);
        f.amps[2] = Complex::new(f64::NAN, 0.0);
        match evolve(&lat, &f, 0.1, &SolverConfig::new(1.0).with_dt(0.05)) {
            Err(Error::NonFinite { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn picard_iterates_approach_solution() {
        let (lat, f) = setup(1, 4.0, 10);
        let cfg = SolverConfig::new(0.8);
        let t = 0.8;
        assert_eq!(picard_iterate(&lat, &f, t, 0, &cfg).unwrap().amps, f.amps);
        let exact = evolve(&lat, &f, t, &cfg.clone().with_dt(1e-3)).unwrap();
        let errs: Vec<f64> = (0..4)
            .map(|n| picard_iterate(&lat, &f, t, n, &cfg).unwrap().l2_distance(exact.last()))
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < 0.5 * w[0], "{errs:?}");
        }
    }

    #[test]
    fn mass_and_zs_norm_single_block() {
        let (lat, _) = setup(1, 4.0, 11);
        assert_eq!(SpectralField::zeros(lat.len()).mass(&lat), 0.0);
        let star = lat.rank_of(&[4]).unwrap();
        let c = Complex::new(0.5, 0.5);
        let mut f = SpectralField::zeros(lat.len());
        f.amps[star] = c;
        let traj = evolve_snapshots(&lat, &f, &[0.5, 1.0], &SolverConfig::new(0.0)).unwrap();
        let s = 1.5;
        // one block (j = 1), constant modulus |c|/L^d over a torus of volume L
        let l4 = (1.0 * 4.0 * (c.norm() / 4.0).powi(4)).powf(0.25);
        let expect = 2f64.powf(s / 2.0) * l4;
        assert!((zs_norm(&lat, &traj, s).unwrap() - expect).abs() < 1e-14);
        let short = Trajectory {
            times: vec![0.0],
            fields: vec![f.clone()],
            mass: vec![0.0],
            dt: 0.1,
            steps: 0,
        };
        assert!(zs_norm(&lat, &short, s).is_err());
    }
}
