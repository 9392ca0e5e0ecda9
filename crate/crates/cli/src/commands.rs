use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use num_traits::Zero;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use wavekin::collision::{collision_value, finite_time_kernel_continuum, write_collision_csv, DeltaScheme, Dispersion, ProfileDensity};
use wavekin::counting::{
    bound_audit, concentration_ratio, continuum_volume, count_brute, count_fast, equidistribution_report, pigeonhole_audit,
    shell_frequencies, tail_sum_audit, write_ladder_csv, CountBudget, CountQuery, CountResult, Region, WindowLaw,
};
use wavekin::experiment::{
    kinetic_check, regime_params, run_ensemble, strichartz_band, strichartz_check, write_outputs, ExperimentConfig,
};
use wavekin::trees::{alternating_factorial_sum, correlation_table, degenerate_cancellation, second_moment_leading, write_correlation_csv};
use wavekin::{Lattice, PhaseModel, Profile, TorusSpec, TreeBudget};

use crate::manifest::Manifest;
use crate::{CheckKind, Cli, Command, Failure, Method};

type Outcome = Result<(), Failure>;

pub fn dispatch(cli: &Cli, manifest: &mut Manifest) -> Outcome {
    match &cli.command {
        Command::Simulate => simulate(cli, manifest),
        Command::Trees => trees(cli, manifest),
        Command::Collision => collision(cli, manifest),
        Command::Count { method } => count(cli, *method, manifest),
        Command::Report => report(cli, manifest),
        Command::Check { what, s } => match what {
            CheckKind::Cancellation => cancellation(cli, *s, manifest),
        },
    }
}

fn read_config<T: DeserializeOwned>(cli: &Cli) -> Result<T, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Validation("this subcommand needs --config PATH".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, manifest: &mut Manifest) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(dir.join(name), text)?;
    manifest.record(name);
    Ok(())
}

fn create(dir: &Path, name: &str, manifest: &mut Manifest) -> Result<BufWriter<File>, Failure> {
    manifest.record(name);
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn flag(cli: &Cli, ok: bool, what: &str) -> Outcome {
    if ok {
        return Ok(());
    }
    if cli.strict {
        Err(Failure::Flagged(what.to_string()))
    } else {
        eprintln!("warning: {what}");
        Ok(())
    }
}

fn tree_budget(cli: &Cli) -> TreeBudget {
    let mut b = TreeBudget::default();
    if let Some(x) = cli.budget {
        b.max_terms = x;
    }
    b
}

fn count_budget(cli: &Cli) -> CountBudget {
    let mut b = CountBudget::default();
    if let Some(x) = cli.budget {
        b.max_work = x;
    }
    b
}

fn simulate(cli: &Cli, manifest: &mut Manifest) -> Outcome {
    let mut cfg: ExperimentConfig = read_config(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let res = run_ensemble(&cfg, None)?;
    write_outputs(&res, &cli.out)?;
    for s in 0..res.times.len() {
        manifest.record(&format!("spectra_{s}.csv"));
    }
    manifest.record("long.csv");
    manifest.record("report.json");
    println!(
        "ensemble M={} modes={} snapshots={} max mass drift {:.3e}",
        res.ensemble,
        res.modes.len(),
        res.times.len(),
        res.max_mass_drift
    );
    for t in &res.targets {
        println!("target {}: sup discrepancy {:?}", t.name, t.sup_discrepancy);
    }
    if cfg.kinetic {
        let report = kinetic_check(&res, &cfg.profile, cfg.lambda, &cfg.spec, &cfg.kinetic_scheme)?;
        write_json(&cli.out, "kinetic.json", &report, manifest)?;
        flag(cli, report.converged, "kinetic collision values did not converge")?;
    }
    flag(cli, res.max_mass_drift <= 1e-8, "relative mass drift above 1e-8")?;
    flag(cli, res.mass_consistent(), "ensemble mass is inconsistent with the profile")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreesConfig {
    spec: TorusSpec,
    #[serde(default)]
    profile: Profile,
    lambda: f64,
    t: f64,
    k: Vec<i64>,
    /// Largest `n + n′` in the correlation table.
    #[serde(default = "two")]
    max_order: usize,
    #[serde(default)]
    phase_model: PhaseModel,
}

fn two() -> usize {
    2
}

#[derive(Debug, Serialize)]
struct TreesSummary {
    k: Vec<i64>,
    t: f64,
    phi: f64,
    max_order: usize,
    /// Sum of the real parts of all rows with `n + n′ ≤ max_order`.
    expansion: f64,
    /// Explicit leading formula.
    leading: f64,
    rows: usize,
}

fn trees(cli: &Cli, manifest: &mut Manifest) -> Outcome {
    let cfg: TreesConfig = read_config(cli)?;
    let lat = Lattice::<f64>::new(&cfg.spec)?;
    let k = lat
        .rank_of(&cfg.k)
        .ok_or_else(|| Failure::Validation(format!("{:?} is not a mode of the spec", cfg.k)))?;
    let phi = cfg.profile.on_lattice(&lat)?;
    let rows = correlation_table(&lat, 0..=cfg.max_order, cfg.t, k, &phi, cfg.lambda, cfg.phase_model, &tree_budget(cli))?;
    write_correlation_csv(&rows, create(&cli.out, "correlations.csv", manifest)?)?;
    let summary = TreesSummary {
        k: cfg.k.clone(),
        t: cfg.t,
        phi: phi[k],
        max_order: cfg.max_order,
        expansion: rows.iter().map(|r| r.value.re).sum(),
        leading: second_moment_leading(&lat, cfg.t, k, &phi, cfg.lambda)?,
        rows: rows.len(),
    };
    println!(
        "E|a_k|² through order {}: {:.12e} (leading formula {:.12e}, {} correlations)",
        summary.max_order, summary.expansion, summary.leading, summary.rows
    );
    write_json(&cli.out, "trees.json", &summary, manifest)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRequest {
    times: Vec<f64>,
    lambda: f64,
    #[serde(default = "sixteen")]
    resolution: usize,
}

fn sixteen() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CollisionConfig {
    beta: Vec<f64>,
    #[serde(default)]
    profile: Profile,
    radius: f64,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    scheme: DeltaScheme,
    #[serde(default)]
    kernel: Option<KernelRequest>,
}

#[derive(Debug, Serialize)]
struct CollisionRow {
    k: Vec<f64>,
    value: f64,
    scale: f64,
    residual: f64,
    converged: bool,
    kernels: Vec<KernelRow>,
}

#[derive(Debug, Serialize)]
struct KernelRow {
    t: f64,
    value: f64,
    gap: f64,
    converged: bool,
}

fn collision(cli: &Cli, manifest: &mut Manifest) -> Outcome {
    let cfg: CollisionConfig = read_config(cli)?;
    let disp = Dispersion::new(cfg.beta.clone())?;
    let density = ProfileDensity::new(cfg.profile.clone(), cfg.radius)?;
    let mut rows = Vec::new();
    for k in &cfg.points {
        let v = collision_value(&disp, &density, k, &cfg.scheme)?;
        let mut kernels = Vec::new();
        if let Some(req) = &cfg.kernel {
            for &t in &req.times {
                let kv = finite_time_kernel_continuum(&disp, t, k, &density, req.lambda, req.resolution)?;
                kernels.push(KernelRow {
                    t,
                    value: kv.value,
                    gap: kv.gap,
                    converged: kv.converged,
                });
            }
        }
        rows.push(CollisionRow {
            k: k.clone(),
            value: v.value,
            scale: v.scale,
            residual: v.residual,
            converged: v.converged,
            kernels,
        });
    }
    let csv: Vec<(Vec<f64>, f64, f64)> = rows.iter().map(|r| (r.k.clone(), r.value, r.residual)).collect();
    write_collision_csv(&csv, create(&cli.out, "collision.csv", manifest)?)?;
    for r in &rows {
        println!("T({:?}) = {:.6e} (residual {:.1e})", r.k, r.value, r.residual);
    }
    write_json(&cli.out, "collision.json", &rows, manifest)?;
    let converged = rows.iter().all(|r| r.converged && r.kernels.iter().all(|k| k.converged));
    flag(cli, converged, "some collision values did not converge")
}

#[derive(Debug, Serialize)]
struct CountOutput {
    results: Vec<CountResult>,
    continuum_converged: Option<bool>,
    /// Brute and fast counts agree (only when both ran).
    agree: Option<bool>,
}

fn count(cli: &Cli, method: Method, manifest: &mut Manifest) -> Outcome {
    let query: CountQuery = read_config(cli)?;
    query.validate()?;
    let budget = count_budget(cli);
    let mut results = Vec::new();
    if matches!(method, Method::Brute | Method::Both) {
        results.push(count_brute(&query, &budget)?);
    }
    if matches!(method, Method::Fast | Method::Both) {
        results.push(count_fast(&query, &budget)?);
    }
    let mut continuum_converged = None;
    if let Region::Rz = query.region {
        let cont = continuum_volume(&query)?;
        continuum_converged = Some(cont.converged);
        results = results.into_iter().map(|r| r.with_continuum(cont.value)).collect();
    }
    let agree = (results.len() == 2).then(|| results[0].count == results[1].count);
    for r in &results {
        println!("{:?}: count {} ({:.3}s)", r.method, r.count, r.seconds);
    }
    if let Some(a) = agree {
        println!("brute and fast {}", if a { "agree" } else { "DISAGREE" });
    }
    let out = CountOutput {
        results,
        continuum_converged,
        agree,
    };
    write_json(&cli.out, "count.json", &out, manifest)?;
    if agree == Some(false) {
        return Err(Failure::Runtime("brute and fast counts differ".into()));
    }
    flag(cli, continuum_converged.unwrap_or(true), "continuum volume did not converge")
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ReportConfig {
    Equidistribution {
        beta: Vec<f64>,
        ladder: Vec<u32>,
        law: WindowLaw,
        #[serde(default)]
        weighted_time: Option<f64>,
    },
    BoundAudit {
        beta: Vec<f64>,
        ladder: Vec<u32>,
        window: [f64; 2],
    },
    TailSum {
        beta: Vec<f64>,
        ladder: Vec<u32>,
        a: f64,
    },
    Pigeonhole {
        beta: Vec<f64>,
        ladder: Vec<u32>,
        window: [f64; 2],
    },
    /// Rational against generic β on the shell of `k`.
    Concentration {
        d: usize,
        #[serde(rename = "L")]
        l: f64,
        cutoff: f64,
        k: Vec<i64>,
        width_exponent: f64,
        centers: [f64; 2],
        points: usize,
        beta_seed: u64,
        #[serde(default = "five")]
        min_factor: f64,
    },
    Strichartz {
        d: usize,
        ladder: Vec<f64>,
        cutoff: f64,
        beta_seed: u64,
        #[serde(default)]
        profile: Profile,
        horizon: f64,
        samples: usize,
        time_nodes: usize,
        seed: u64,
        #[serde(default = "band")]
        max_band: f64,
    },
    Regime {
        lambda: f64,
        #[serde(rename = "L")]
        l: f64,
        d: usize,
        eps0: f64,
        #[serde(default = "one")]
        c: f64,
        horizon: f64,
    },
}

fn five() -> f64 {
    5.0
}

fn band() -> f64 {
    1.2
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize)]
struct ConcentrationReport {
    width: f64,
    rational_ratio: f64,
    generic_ratio: f64,
    factor: f64,
    passes: bool,
}

#[derive(Debug, Serialize)]
struct StrichartzLadder {
    reports: Vec<wavekin::experiment::StrichartzReport>,
    band: f64,
    passes: bool,
}

fn report(cli: &Cli, manifest: &mut Manifest) -> Outcome {
    let cfg: ReportConfig = read_config(cli)?;
    let budget = count_budget(cli);
    let out = &cli.out;
    match cfg {
        ReportConfig::Equidistribution {
            beta,
            ladder,
            law,
            weighted_time,
        } => {
            let rep = equidistribution_report(&beta, &ladder, &law, weighted_time, &budget)?;
            write_ladder_csv(&rep.sharp, create(out, "ladder.csv", manifest)?)?;
            if !rep.weighted.is_empty() {
                write_ladder_csv(&rep.weighted, create(out, "weighted.csv", manifest)?)?;
            }
            for r in &rep.sharp {
                println!("L={} count={} continuum={:.1} rel_error={:.4}", r.l, r.count, r.continuum, r.rel_error);
            }
            write_json(out, "report.json", &rep, manifest)?;
            flag(cli, rep.decreasing, "relative errors do not decrease along the ladder")
        }
        ReportConfig::BoundAudit { beta, ladder, window } => audit_out(cli, bound_audit(&beta, &ladder, window, &budget)?, manifest),
        ReportConfig::TailSum { beta, ladder, a } => audit_out(cli, tail_sum_audit(&beta, &ladder, a, &budget)?, manifest),
        ReportConfig::Pigeonhole { beta, ladder, window } => {
            audit_out(cli, pigeonhole_audit(&beta, &ladder, window, &budget)?, manifest)
        }
        ReportConfig::Concentration {
            d,
            l,
            cutoff,
            k,
            width_exponent,
            centers,
            points,
            beta_seed,
            min_factor,
        } => {
            if points < 2 {
                return Err(Failure::Validation("concentration needs at least two centers".into()));
            }
            let width = l.powf(width_exponent);
            let grid: Vec<f64> = (0..points)
                .map(|i| centers[0] + (centers[1] - centers[0]) * i as f64 / (points - 1) as f64)
                .collect();
            let seed = cli.seed.unwrap_or(beta_seed);
            let ratio = |spec: TorusSpec| -> Result<f64, Failure> {
                Ok(concentration_ratio(&shell_frequencies(&spec, &k, &budget)?, width, &grid))
            };
            let rational_ratio = ratio(TorusSpec::rational(d, l, cutoff)?)?;
            let generic_ratio = ratio(TorusSpec::generic(d, l, cutoff, seed)?)?;
            let factor = rational_ratio / generic_ratio;
            let rep = ConcentrationReport {
                width,
                rational_ratio,
                generic_ratio,
                factor,
                passes: factor >= min_factor,
            };
            println!("concentration rational {rational_ratio:.3} generic {generic_ratio:.3} factor {factor:.2}");
            write_json(out, "report.json", &rep, manifest)?;
            flag(cli, rep.passes, "concentration contrast below the required factor")
        }
        ReportConfig::Strichartz {
            d,
            ladder,
            cutoff,
            beta_seed,
            profile,
            horizon,
            samples,
            time_nodes,
            seed,
            max_band,
        } => {
            let seed = cli.seed.unwrap_or(seed);
            let mut reports = Vec::new();
            for &l in &ladder {
                let spec = TorusSpec::generic(d, l, cutoff, beta_seed)?;
                let r = strichartz_check(&spec, &profile, horizon, samples, seed, time_nodes)?;
                println!("L={l} ratio={:.4} ± {:.4}", r.ratio, r.stderr);
                reports.push(r);
            }
            let band = strichartz_band(&reports);
            let rep = StrichartzLadder {
                reports,
                band,
                passes: band <= max_band,
            };
            write_json(out, "report.json", &rep, manifest)?;
            flag(cli, rep.passes, "Strichartz ratio leaves the allowed band")
        }
        ReportConfig::Regime {
            lambda,
            l,
            d,
            eps0,
            c,
            horizon,
        } => {
            let p = regime_params(lambda, l, d, eps0, c, horizon)?;
            println!("tau={:.6e} theta={:?} R={:?}", p.tau, p.theta, p.r);
            write_json(out, "report.json", &p, manifest)
        }
    }
}

fn audit_out(cli: &Cli, audit: wavekin::counting::BoundAudit, manifest: &mut Manifest) -> Outcome {
    for r in &audit.rows {
        println!("L={} lhs={} constant={:.4e}", r.l, r.lhs, r.constant);
    }
    println!("growth exponent {:.4}", audit.growth_exponent);
    write_json(&cli.out, "report.json", &audit, manifest)?;
    flag(cli, audit.passes, "implied constant grows faster than L^0.1")
}

#[derive(Debug, Serialize)]
struct CancellationRow {
    order: usize,
    exact_identity_zero: bool,
    sum_abs: f64,
    scale: f64,
    relative: f64,
}

fn cancellation(cli: &Cli, max_order: usize, manifest: &mut Manifest) -> Outcome {
    if max_order == 0 {
        return Err(Failure::Validation("--S must be at least 1".into()));
    }
    let budget = tree_budget(cli);
    if max_order > 2 * budget.max_depth {
        return Err(Failure::Validation(format!("--S above {}", 2 * budget.max_depth)));
    }
    let spec = TorusSpec::generic(1, 2.0, 1.0, cli.seed.unwrap_or(1))?;
    let lat = Lattice::<f64>::new(&spec)?;
    let phi = Profile::default().on_lattice(&lat)?;
    let k = lat.rank_of(&[0]).expect("zero mode is always present");
    let mut rows = Vec::new();
    println!("{:>3} {:>8} {:>12} {:>12} {:>12}", "S", "exact", "|sum|", "scale", "relative");
    for order in 1..=max_order {
        let rep = degenerate_cancellation(order, &lat, &phi, 1.0, k, 1.0, &budget)?;
        let row = CancellationRow {
            order,
            exact_identity_zero: alternating_factorial_sum(order as u32).is_zero(),
            sum_abs: rep.sum.norm(),
            scale: rep.scale,
            relative: rep.relative(),
        };
        println!(
            "{:>3} {:>8} {:>12.3e} {:>12.3e} {:>12.3e}",
            row.order,
            if row.exact_identity_zero { "0" } else { "nonzero" },
            row.sum_abs,
            row.scale,
            row.relative
        );
        rows.push(row);
    }
    write_json(&cli.out, "cancellation.json", &rows, manifest)?;
    let ok = rows.iter().all(|r| r.exact_identity_zero && r.relative <= 1e-12);
    flag(cli, ok, "degenerate sums do not cancel")
}
