//! Monte Carlo ensembles of the mode equations, compared against the second-order tree
//! expansion and the kinetic prediction `φ + (t/τ) T(φ)`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collision::{collision_value, kinetic_time, DeltaScheme, Dispersion, ProfileDensity};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, TorusSpec};
use crate::solver::{evolve_snapshots, spatial_l4_power, NonlinearityPath, PaddedGrid, SolverConfig};
use crate::spectra::{sample_with_values, PhaseModel, Profile, SeedPlan, SpectralField};
use crate::trees::{second_moment_expansion, TreeBudget};

fn default_block() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: TorusSpec,
    #[serde(default)]
    pub profile: Profile,
    pub lambda: f64,
    /// Snapshot times, strictly increasing; `0` may lead.
    pub times: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
    #[serde(default)]
    pub phase_model: PhaseModel,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub nonlinearity_path: NonlinearityPath,
    /// Tree-expansion target order (0 or 2).
    #[serde(default)]
    pub tree_order: Option<usize>,
    /// Kinetic target `φ + (t/τ) T(φ)`, available for `d = 2, 3`.
    #[serde(default)]
    pub kinetic: bool,
    #[serde(default)]
    pub kinetic_scheme: DeltaScheme,
    /// Members per aggregation block. Blocks are the unit of parallel work and are merged
    /// in order, so results do not depend on the worker count.
    #[serde(default = "default_block")]
    pub block: usize,
}

impl ExperimentConfig {
    pub fn new(spec: TorusSpec, lambda: f64, times: Vec<f64>, ensemble: usize, seed: u64) -> Self {
        ExperimentConfig {
            spec,
            profile: Profile::default(),
            lambda,
            times,
            ensemble,
            seed,
            phase_model: PhaseModel::Uniform,
            dt: None,
            nonlinearity_path: NonlinearityPath::default(),
            tree_order: None,
            kinetic: false,
            kinetic_scheme: DeltaScheme::default(),
            block: default_block(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.profile.validate()?;
        self.solver().validate()?;
        if self.ensemble == 0 {
            return Err(Error::invalid("ensemble size must be at least 1"));
        }
        if self.block == 0 {
            return Err(Error::invalid("block size must be at least 1"));
        }
        if self.times.is_empty() {
            return Err(Error::invalid("at least one snapshot time is needed"));
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("snapshot times must be nonnegative and strictly increasing"));
        }
        if let Some(order) = self.tree_order {
            if order != 0 && order != 2 {
                return Err(Error::Unsupported(format!("tree target order {order}; use 0 or 2")));
            }
        }
        if self.kinetic {
            Dispersion::from_spec(&self.spec)?;
            self.kinetic_scheme.validate()?;
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.lambda).with_path(self.nonlinearity_path);
        cfg.dt = self.dt;
        cfg
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Streaming mean and sum of squared deviations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        self.n = n;
    }

    /// Sample standard deviation over `√n`; zero for a single member.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }
}

/// Accumulators for one block: per snapshot, per mode `|a|²`, plus the mass.
#[derive(Clone, Debug)]
struct BlockStats {
    modes: Vec<Vec<Welford>>,
    mass: Vec<Welford>,
    drift: f64,
}

impl BlockStats {
    fn new(snapshots: usize, n: usize) -> Self {
        BlockStats {
            modes: vec![vec![Welford::default(); n]; snapshots],
            mass: vec![Welford::default(); snapshots],
            drift: 0.0,
        }
    }

    fn merge(&mut self, other: &BlockStats) {
        for (a, b) in self.modes.iter_mut().zip(&other.modes) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        for (x, y) in self.mass.iter_mut().zip(&other.mass) {
            x.merge(y);
        }
        self.drift = self.drift.max(other.drift);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub name: String,
    /// `values[snapshot][mode]`
    pub values: Vec<Vec<f64>>,
    /// `max_k |mean − target|` per snapshot.
    pub sup_discrepancy: Vec<f64>,
    /// `(Σ_k |mean − target|² / N)^{1/2}` per snapshot.
    pub l2_discrepancy: Vec<f64>,
    /// `max_k |mean − target| / stderr` per snapshot (infinite where the error is zero
    /// and the target is missed).
    pub max_z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub root_seed: u64,
    pub seconds: f64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    #[serde(rename = "L")]
    pub l: f64,
    pub times: Vec<f64>,
    pub modes: Vec<Vec<i64>>,
    pub ensemble: usize,
    /// `mean[snapshot][mode]` of `|a_k(t)|²`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub mass_mean: Vec<f64>,
    pub mass_stderr: Vec<f64>,
    /// `L^{−d} Σ φ(k)`.
    pub expected_mass: f64,
    /// Largest relative mass drift of any member trajectory.
    pub max_mass_drift: f64,
    pub targets: Vec<TargetSeries>,
    pub metadata: RunMetadata,
}

impl EnsembleResult {
    pub fn target(&self, name: &str) -> Option<&TargetSeries> {
        self.targets.iter().find(|t| t.name == name)
    }

    /// Ensemble-mean mass within four standard errors of `L^{−d} Σ φ` at every snapshot,
    /// with a floor of `1e−12` relative for rounding.
    pub fn mass_consistent(&self) -> bool {
        self.mass_mean
            .iter()
            .zip(&self.mass_stderr)
            .all(|(m, s)| (m - self.expected_mass).abs() <= 4.0 * s + 1e-12 * self.expected_mass)
    }

    fn series(&self, name: &str, values: Vec<Vec<f64>>) -> TargetSeries {
        let mut sup = Vec::new();
        let mut l2 = Vec::new();
        let mut max_z = Vec::new();
        for (s, row) in values.iter().enumerate() {
            let diffs: Vec<f64> = row.iter().zip(&self.mean[s]).map(|(t, m)| (m - t).abs()).collect();
            sup.push(diffs.iter().cloned().fold(0.0, f64::max));
            l2.push((diffs.iter().map(|x| x * x).sum::<f64>() / diffs.len() as f64).sqrt());
            max_z.push(
                diffs
                    .iter()
                    .zip(&self.stderr[s])
                    .map(|(d, e)| if *d == 0.0 { 0.0 } else { d / e })
                    .fold(0.0, f64::max),
            );
        }
        TargetSeries {
            name: name.to_string(),
            values,
            sup_discrepancy: sup,
            l2_discrepancy: l2,
            max_z,
        }
    }
}

fn run_member(
    lat: &Lattice<f64>,
    phi: &[f64],
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    sample: u64,
    stats: &mut BlockStats,
) -> Result<()> {
    let plan = SeedPlan::new(cfg.seed);
    let field0: SpectralField<f64> = sample_with_values(phi, &plan, sample, cfg.phase_model);
    let leading_zero = cfg.times[0] == 0.0;
    let positive: Vec<f64> = cfg.times.iter().cloned().filter(|t| *t > 0.0).collect();
    let fields: Vec<SpectralField<f64>> = if positive.is_empty() {
        vec![field0]
    } else {
        let traj = evolve_snapshots(lat, &field0, &positive, solver).map_err(|e| Error::Member {
            sample,
            source: Box::new(e),
        })?;
        stats.drift = stats.drift.max(traj.relative_mass_drift());
        // trajectory snapshots start at t = 0
        let skip = if leading_zero { 0 } else { 1 };
        traj.fields.into_iter().skip(skip).collect()
    };
    for (s, f) in fields.iter().enumerate() {
        for (w, a) in stats.modes[s].iter_mut().zip(&f.amps) {
            w.push(a.norm_sqr());
        }
        stats.mass[s].push(f.mass(lat));
    }
    Ok(())
}

/// Runs the ensemble on `workers` threads (`None` uses the global pool).
pub fn run_ensemble(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<EnsembleResult> {
    cfg.validate()?;
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            pool.install(|| run_ensemble_inner(cfg))
        }
        None => run_ensemble_inner(cfg),
    }
}

fn run_ensemble_inner(cfg: &ExperimentConfig) -> Result<EnsembleResult> {
    let start = Instant::now();
    let lat = Lattice::<f64>::new(&cfg.spec)?;
    let phi = cfg.profile.on_lattice(&lat)?;
    let solver = cfg.solver();
    let n = lat.len();
    let snapshots = cfg.times.len();
    let blocks: Vec<(u64, u64)> = (0..cfg.ensemble as u64)
        .step_by(cfg.block)
        .map(|lo| (lo, (lo + cfg.block as u64).min(cfg.ensemble as u64)))
        .collect();
    let partial: Vec<Result<BlockStats>> = blocks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut stats = BlockStats::new(snapshots, n);
            for sample in lo..hi {
                run_member(&lat, &phi, cfg, &solver, sample, &mut stats)?;
            }
            Ok(stats)
        })
        .collect();
    let mut total = BlockStats::new(snapshots, n);
    for p in partial {
        total.merge(&p?);
    }
    let mut result = EnsembleResult {
        l: cfg.spec.l,
        times: cfg.times.clone(),
        modes: (0..n).map(|r| lat.mode(r).to_vec()).collect(),
        ensemble: cfg.ensemble,
        mean: total.modes.iter().map(|row| row.iter().map(|w| w.mean).collect()).collect(),
        stderr: total.modes.iter().map(|row| row.iter().map(|w| w.stderr()).collect()).collect(),
        mass_mean: total.mass.iter().map(|w| w.mean).collect(),
        mass_stderr: total.mass.iter().map(|w| w.stderr()).collect(),
        expected_mass: phi.iter().sum::<f64>() / cfg.spec.l.powi(cfg.spec.d as i32),
        max_mass_drift: total.drift,
        targets: Vec::new(),
        metadata: RunMetadata {
            config_hash: cfg.hash(),
            root_seed: cfg.seed,
            seconds: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    if let Some(order) = cfg.tree_order {
        let budget = TreeBudget::default();
        let values = cfg
            .times
            .iter()
            .map(|&t| {
                (0..n)
                    .map(|k| second_moment_expansion(&lat, t, k, &phi, cfg.lambda, order, cfg.phase_model, &budget))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let series = result.series(&format!("tree_order_{order}"), values);
        result.targets.push(series);
    }
    if cfg.kinetic {
        let prediction = kinetic_prediction(&lat, &cfg.profile, cfg.lambda, &cfg.times, &cfg.kinetic_scheme)?;
        let series = result.series("kinetic", prediction.values);
        result.targets.push(series);
    }
    result.metadata.seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// `φ(k) + (t/τ) T(φ)(k)` at every lattice mode and snapshot, with the density cut at
/// the lattice cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticPrediction {
    pub tau: f64,
    /// `T(φ)(k)` per mode.
    pub collision: Vec<f64>,
    pub converged: bool,
    pub values: Vec<Vec<f64>>,
}

pub fn kinetic_prediction(
    lat: &Lattice<f64>,
    profile: &Profile,
    lambda: f64,
    times: &[f64],
    scheme: &DeltaScheme,
) -> Result<KineticPrediction> {
    let spec = lat.spec();
    let tau = kinetic_time(lambda, spec.l, spec.d)?;
    let disp = Dispersion::from_spec(spec)?;
    let density = ProfileDensity::new(profile.clone(), spec.cutoff)?;
    let phi = profile.on_lattice(lat)?;
    let values: Vec<_> = (0..lat.len())
        .into_par_iter()
        .map(|r| collision_value(&disp, &density, &lat.k_vec(r), scheme))
        .collect::<Result<_>>()?;
    let converged = values.iter().all(|v| v.converged);
    let collision: Vec<f64> = values.iter().map(|v| v.value).collect();
    let values = times
        .iter()
        .map(|&t| phi.iter().zip(&collision).map(|(p, c)| p + t / tau * c).collect())
        .collect();
    Ok(KineticPrediction {
        tau,
        collision,
        converged,
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticRow {
    pub t: f64,
    pub t_over_tau: f64,
    /// `max_k |mean − φ − (t/τ)T|`
    pub kinetic_sup: f64,
    /// `kinetic_sup` divided by `t/τ` (by `t₁/τ` for `t = 0`, `t₁` the first positive snapshot).
    pub kinetic_normalized: f64,
    pub tree_sup: Option<f64>,
    pub tree_normalized: Option<f64>,
    pub max_stderr: f64,
    /// `4 · max_stderr` under the same normalization.
    pub noise_normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticReport {
    pub tau: f64,
    pub collision: Vec<f64>,
    pub converged: bool,
    pub rows: Vec<KineticRow>,
}

/// Kinetic discrepancy per snapshot, reported next to the tree-order-2 discrepancy when the
/// result carries it.
pub fn kinetic_check(
    result: &EnsembleResult,
    profile: &Profile,
    lambda: f64,
    spec: &TorusSpec,
    scheme: &DeltaScheme,
) -> Result<KineticReport> {
    let lat = Lattice::<f64>::new(spec)?;
    if lat.len() != result.modes.len() {
        return Err(Error::invalid("result was produced on a different lattice"));
    }
    let pred = kinetic_prediction(&lat, profile, lambda, &result.times, scheme)?;
    let first = result.times.iter().cloned().find(|t| *t > 0.0);
    let tree = result.target("tree_order_2");
    let mut rows = Vec::new();
    for (s, &t) in result.times.iter().enumerate() {
        let norm = if t > 0.0 { t } else { first.unwrap_or(1.0) } / pred.tau;
        let kinetic_sup = pred.values[s]
            .iter()
            .zip(&result.mean[s])
            .map(|(p, m)| (m - p).abs())
            .fold(0.0, f64::max);
        let max_stderr = result.stderr[s].iter().cloned().fold(0.0, f64::max);
        let tree_sup = tree.map(|tr| tr.sup_discrepancy[s]);
        rows.push(KineticRow {
            t,
            t_over_tau: t / pred.tau,
            kinetic_sup,
            kinetic_normalized: kinetic_sup / norm,
            tree_sup,
            tree_normalized: tree_sup.map(|x| x / norm),
            max_stderr,
            noise_normalized: 4.0 * max_stderr / norm,
        });
    }
    Ok(KineticReport {
        tau: pred.tau,
        collision: pred.collision,
        converged: pred.converged,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrichartzReport {
    #[serde(rename = "L")]
    pub l: f64,
    pub horizon: f64,
    pub samples: usize,
    /// Mean of `‖e^{itΔ}u₀‖⁴_{L⁴([0,T]×T_L)} / (T L^{−d} ‖u₀‖⁴_{L²})`.
    pub ratio: f64,
    pub stderr: f64,
    pub mean_norm4: f64,
}

/// Monte Carlo L⁴ space-time ratio for the linear flow, with the time integral by the
/// trapezoid rule on `time_nodes` points and the spatial integral exact on the padded grid.
pub fn strichartz_check(
    spec: &TorusSpec,
    profile: &Profile,
    horizon: f64,
    samples: usize,
    seed: u64,
    time_nodes: usize,
) -> Result<StrichartzReport> {
    if !(horizon > 0.0) || samples == 0 || time_nodes < 2 {
        return Err(Error::invalid("Strichartz check needs T > 0, M ≥ 1 and at least two time nodes"));
    }
    let lat = Lattice::<f64>::new(spec)?;
    let phi = profile.on_lattice(&lat)?;
    let plan = SeedPlan::new(seed);
    let h = horizon / (time_nodes - 1) as f64;
    let volume_scale = spec.l.powi(-(spec.d as i32));
    let per_sample: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map_init(
            || (PaddedGrid::new(&lat), Vec::new()),
            |(grid, buf), sample| {
                let field = sample_with_values(&phi, &plan, sample, PhaseModel::Uniform);
                let mut norm4 = 0.0;
                for j in 0..time_nodes {
                    let w = if j == 0 || j == time_nodes - 1 { 0.5 * h } else { h };
                    norm4 += w * spatial_l4_power(&lat, grid, &field, j as f64 * h, &|_| true, buf);
                }
                let l2 = field.mass(&lat);
                (norm4, norm4 / (horizon * volume_scale * l2 * l2))
            },
        )
        .collect();
    let mut ratio = Welford::default();
    let mut norm = Welford::default();
    for (n4, r) in &per_sample {
        ratio.push(*r);
        norm.push(*n4);
    }
    Ok(StrichartzReport {
        l: spec.l,
        horizon,
        samples,
        ratio: ratio.mean,
        stderr: ratio.stderr(),
        mean_norm4: norm.mean,
    })
}

/// `max ratio / min ratio` over a ladder of reports.
pub fn strichartz_band(reports: &[StrichartzReport]) -> f64 {
    let max = reports.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = reports.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    max / min
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeWindow {
    pub label: String,
    /// Coupling range `[lo, hi]` in which the window applies.
    pub lambda_range: [f64; 2],
    /// Predicted horizon `T` at the given `λ`.
    pub horizon: f64,
    pub applies: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub d: usize,
    pub lambda: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eps0: f64,
    /// Constant in `S_*`, an explicit input.
    pub c: f64,
    /// Time horizon `T` at which `S_*`, `𝓘` and `R` are evaluated.
    pub horizon: f64,
    /// `None` for `d < 3`.
    pub theta: Option<f64>,
    pub tau: f64,
    /// `C L^{ε₀} ⟨T/L^θ⟩^{1/4}`
    pub s_star: Option<f64>,
    /// `L^{ε₀} (T L^{−d})^{1/4}`
    pub interaction: f64,
    /// `12 (λ S_* 𝓘)²`
    pub r: Option<f64>,
    pub windows: Vec<RegimeWindow>,
}

/// Strichartz exponent: `4/13 + 2` for `d = 3`, `(d−2)²/(2(d−1)) + 2` for `d ≥ 4`.
pub fn strichartz_theta(d: usize) -> Option<f64> {
    match d {
        0..=2 => None,
        3 => Some(4.0 / 13.0 + 2.0),
        _ => {
            let d = d as f64;
            Some((d - 2.0).powi(2) / (2.0 * (d - 1.0)) + 2.0)
        }
    }
}

pub fn regime_params(lambda: f64, l: f64, d: usize, eps0: f64, c: f64, horizon: f64) -> Result<RegimeParams> {
    if !(eps0 >= 0.0) || !(c > 0.0) || !(horizon >= 0.0) {
        return Err(Error::invalid("regime parameters need ε₀ ≥ 0, C > 0 and T ≥ 0"));
    }
    let tau = kinetic_time(lambda, l, d)?;
    let theta = strichartz_theta(d);
    let bracket = |x: f64| (1.0 + x * x).sqrt();
    let s_star = theta.map(|th| c * l.powf(eps0) * bracket(horizon / l.powf(th)).powf(0.25));
    let interaction = l.powf(eps0) * (horizon * l.powi(-(d as i32))).powf(0.25);
    let r = s_star.map(|s| 12.0 * (lambda * s * interaction).powi(2));
    let mut windows = Vec::new();
    if let Some(th) = theta {
        let df = d as f64;
        let lo = l.powf((th - df) / 4.0);
        let hi = l.powf((df - th) / 4.0 - 2.0 * eps0);
        windows.push(RegimeWindow {
            label: "intermediate coupling: T ~ λ^{-2} L^{(d+θ)/2 − 4ε₀}".into(),
            lambda_range: [lo, hi],
            horizon: lambda.powi(-2) * l.powf((df + th) / 2.0 - 4.0 * eps0),
            applies: lo <= lambda && lambda <= hi,
        });
        windows.push(RegimeWindow {
            label: "strong coupling: T ~ λ^{-4} L^{d − 8ε₀}".into(),
            lambda_range: [hi, f64::INFINITY],
            horizon: lambda.powi(-4) * l.powf(df - 8.0 * eps0),
            applies: lambda >= hi,
        });
    }
    Ok(RegimeParams {
        d,
        lambda,
        l,
        eps0,
        c,
        horizon,
        theta,
        tau,
        s_star,
        interaction,
        r,
        windows,
    })
}

/// Writes `spectra_<i>.csv` per snapshot, the long-format `long.csv` and `report.json`.
pub fn write_outputs(result: &EnsembleResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let d = result.modes.first().map_or(0, |m| m.len());
    let axes: Vec<String> = (1..=d).map(|i| format!("K{i}")).collect();
    for (s, t) in result.times.iter().enumerate() {
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("spectra_{s}.csv")))?);
        writeln!(w, "{},t,mean,stderr", axes.join(","))?;
        for (r, k) in result.modes.iter().enumerate() {
            let coords: Vec<String> = k.iter().map(|x| x.to_string()).collect();
            writeln!(w, "{},{t},{:e},{:e}", coords.join(","), result.mean[s][r], result.stderr[s][r])?;
        }
    }
    let mut w = std::io::BufWriter::new(fs::File::create(dir.join("long.csv"))?);
    write_long_csv(result, &mut w)?;
    w.flush()?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(result).map_err(|e| Error::invalid(e.to_string()))?,
    )?;
    Ok(())
}

/// Header `k_norm,t,mean,stderr,target,discrepancy`; one row per mode, snapshot and target.
pub fn write_long_csv<W: Write>(result: &EnsembleResult, mut w: W) -> Result<()> {
    writeln!(w, "k_norm,t,mean,stderr,target,discrepancy")?;
    for (s, t) in result.times.iter().enumerate() {
        for (r, k) in result.modes.iter().enumerate() {
            let k_norm = (k.iter().map(|x| (x * x) as f64).sum::<f64>()).sqrt() / result.l;
            let (m, e) = (result.mean[s][r], result.stderr[s][r]);
            if result.targets.is_empty() {
                writeln!(w, "{k_norm},{t},{m:e},{e:e},none,")?;
            }
            for tg in &result.targets {
                writeln!(w, "{k_norm},{t},{m:e},{e:e},{},{:e}", tg.name, m - tg.values[s][r])?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
