//! Spectral profiles, random-phase initial data and field serialization.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use num_complex::Complex;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Real;

fn one() -> f64 {
    1.0
}

/// Deterministic spectral density φ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Profile {
    /// `exp(−π |k|² / width²)`.
    Gaussian {
        #[serde(default = "one")]
        width: f64,
    },
    /// `exp(1 − 1/(1 − |k/radius|²))` inside the ball, 0 outside; φ(0) = 1.
    Bump { radius: f64 },
    /// Explicit per-mode values keyed by integer vector; missing modes are 0.
    Table { entries: Vec<(Vec<i64>, f64)> },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Gaussian { width: 1.0 }
    }
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Profile::Gaussian { width } if !(*width > 0.0) => {
                Err(Error::invalid(format!("gaussian width {width} must be positive")))
            }
            Profile::Bump { radius } if !(*radius > 0.0) => {
                Err(Error::invalid(format!("bump radius {radius} must be positive")))
            }
            Profile::Table { entries } => match entries.iter().find(|(_, v)| !(*v >= 0.0)) {
                Some((k, v)) => Err(Error::invalid(format!("negative profile value {v} at {k:?}"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Value at a continuum point; `None` for tabulated profiles.
    pub fn eval(&self, k: &[f64]) -> Option<f64> {
        let n2: f64 = k.iter().map(|x| x * x).sum();
        match self {
            Profile::Gaussian { width } => Some((-std::f64::consts::PI * n2 / (width * width)).exp()),
            Profile::Bump { radius } => {
                let s = n2 / (radius * radius);
                Some(if s < 1.0 { (1.0 - 1.0 / (1.0 - s)).exp() } else { 0.0 })
            }
            Profile::Table { .. } => None,
        }
    }

    /// Values on every lattice mode, in canonical order.
    pub fn on_lattice<T: Real>(&self, lat: &Lattice<T>) -> Result<Vec<T>> {
        self.validate()?;
        match self {
            Profile::Table { entries } => {
                let mut out = vec![T::zero(); lat.len()];
                for (k, v) in entries {
                    let r = lat
                        .rank_of(k)
                        .ok_or_else(|| Error::invalid(format!("table entry {k:?} is not a lattice mode")))?;
                    out[r] = T::lit(*v);
                }
                Ok(out)
            }
            _ => Ok((0..lat.len())
                .map(|r| T::lit(self.eval(&lat.k_vec(r)).expect("analytic profile")))
                .collect()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Profile = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

/// Randomization of the initial amplitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModel {
    /// `a = √φ e^{iθ}`, θ uniform: deterministic modulus.
    #[default]
    Uniform,
    /// `a` circular complex Gaussian with `E|a|² = φ`.
    ComplexGaussian,
}

/// Counter-based seed plan: `(root_seed, sample_index, mode rank)` determines a draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub root_seed: u64,
}

impl SeedPlan {
    pub fn new(root_seed: u64) -> Self {
        SeedPlan { root_seed }
    }

    /// The stream of a sample; mode `r` consumes words `4r..4r+4`.
    pub fn stream(&self, sample_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root_seed);
        rng.set_stream(sample_index);
        rng
    }

    /// Two uniforms in [0,1) for a single mode, without generating the others.
    pub fn uniforms(&self, sample_index: u64, rank: usize) -> (f64, f64) {
        let mut rng = self.stream(sample_index);
        rng.set_word_pos(4 * rank as u128);
        (unit(rng.next_u64()), unit(rng.next_u64()))
    }
}

#[inline]
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Finite amplitude array on a lattice, in canonical mode order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T> {
    pub amps: Vec<Complex<T>>,
    pub time_tag: T,
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(n: usize) -> Self {
        SpectralField {
            amps: vec![Complex::new(T::zero(), T::zero()); n],
            time_tag: T::zero(),
        }
    }

    pub fn from_amps(amps: Vec<Complex<T>>) -> Self {
        SpectralField {
            amps,
            time_tag: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn check_on(&self, lat: &Lattice<T>) -> Result<()> {
        if self.amps.len() != lat.len() {
            return Err(Error::invalid(format!(
                "field has {} amplitudes, lattice has {} modes",
                self.amps.len(),
                lat.len()
            )));
        }
        Ok(())
    }

    /// `L^{-d} Σ |a_k|²`.
    pub fn mass(&self, lat: &Lattice<T>) -> T {
        let s: T = self.amps.iter().map(|a| a.norm_sqr()).sum();
        s / T::lit(lat.spec().l.powi(lat.dim() as i32))
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max)
    }

    pub fn l2_distance(&self, other: &Self) -> T {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<T>()
            .sqrt()
    }

    pub fn cast<U: Real>(&self) -> SpectralField<U> {
        SpectralField {
            amps: self
                .amps
                .iter()
                .map(|a| Complex::new(U::lit(a.re.as_f64()), U::lit(a.im.as_f64())))
                .collect(),
            time_tag: U::lit(self.time_tag.as_f64()),
        }
    }
}

/// Random initial data `a_k(0)` for sample `sample_index`.
pub fn sample_initial<T: Real>(
    lat: &Lattice<T>,
    profile: &Profile,
    plan: &SeedPlan,
    sample_index: u64,
) -> Result<SpectralField<T>> {
    let phi = profile.on_lattice(lat)?;
    Ok(sample_with_values(&phi, plan, sample_index, PhaseModel::Uniform))
}

/// Random initial data from precomputed profile values.
pub fn sample_with_values<T: Real>(
    phi: &[T],
    plan: &SeedPlan,
    sample_index: u64,
    model: PhaseModel,
) -> SpectralField<T> {
    let mut rng = plan.stream(sample_index);
    let amps = phi
        .iter()
        .map(|&p| {
            let u1 = unit(rng.next_u64());
            let u2 = unit(rng.next_u64());
            let modulus = match model {
                PhaseModel::Uniform => p.as_f64().sqrt(),
                PhaseModel::ComplexGaussian => (-p.as_f64() * (1.0 - u1).ln()).sqrt(),
            };
            let theta = std::f64::consts::TAU * u2;
            Complex::new(T::lit(modulus * theta.cos()), T::lit(modulus * theta.sin()))
        })
        .collect();
    SpectralField::from_amps(amps)
}

/// `E Π_k e^{i m_k θ_k}` for independent uniform phases: 1 if every merged
/// multiplicity vanishes, else 0.
pub fn phase_expectation<K: Ord>(exponents: impl IntoIterator<Item = (K, i64)>) -> f64 {
    let mut merged: BTreeMap<K, i64> = BTreeMap::new();
    for (k, m) in exponents {
        *merged.entry(k).or_insert(0) += m;
    }
    if merged.values().all(|&m| m == 0) {
        1.0
    } else {
        0.0
    }
}

/// `E Π_k a_k^{p_k} ā_k^{m_k}` divided by `Π_k φ_k^{(p_k+m_k)/2}`, given per-mode
/// `(p_k, m_k)` counts.
///
/// Uniform phases give 1 when every `p_k = m_k`; complex Gaussian data give
/// `Π p_k!` under the same condition (Wick/Isserlis).
pub fn moment_weight(model: PhaseModel, counts: &[(u32, u32)]) -> f64 {
    if counts.iter().any(|(p, m)| p != m) {
        return 0.0;
    }
    match model {
        PhaseModel::Uniform => 1.0,
        PhaseModel::ComplexGaussian => counts
            .iter()
            .map(|&(p, _)| (1..=p).map(f64::from).product::<f64>())
            .product(),
    }
}

/// CSV dump with header `K1..Kd,re,im` in canonical order.
pub fn write_field_csv<T: Real, W: Write>(lat: &Lattice<T>, field: &SpectralField<T>, mut w: W) -> Result<()> {
    field.check_on(lat)?;
    let head: Vec<String> = (1..=lat.dim()).map(|i| format!("K{i}")).collect();
    writeln!(w, "{},re,im", head.join(","))?;
    for (r, a) in field.amps.iter().enumerate() {
        let ks: Vec<String> = lat.mode(r).iter().map(|x| x.to_string()).collect();
        writeln!(w, "{},{:e},{:e}", ks.join(","), a.re.as_f64(), a.im.as_f64())?;
    }
    Ok(())
}

/// Reads a CSV dump written by [`write_field_csv`].
pub fn read_field_csv<T: Real, R: BufRead>(lat: &Lattice<T>, r: R) -> Result<SpectralField<T>> {
    let mut field = SpectralField::zeros(lat.len());
    let mut seen = vec![false; lat.len()];
    for (i, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != lat.dim() + 2 {
            return Err(Error::invalid(format!("line {}: expected {} columns", i + 1, lat.dim() + 2)));
        }
        let parse_err = |e: &dyn std::fmt::Display| Error::invalid(format!("line {}: {e}", i + 1));
        let k: Vec<i64> = cols[..lat.dim()]
            .iter()
            .map(|c| c.trim().parse::<i64>().map_err(|e| parse_err(&e)))
            .collect::<Result<_>>()?;
        let re: f64 = cols[lat.dim()].trim().parse().map_err(|e| parse_err(&e))?;
        let im: f64 = cols[lat.dim() + 1].trim().parse().map_err(|e| parse_err(&e))?;
        let rank = lat
            .rank_of(&k)
            .ok_or_else(|| Error::invalid(format!("line {}: {k:?} is not a lattice mode", i + 1)))?;
        field.amps[rank] = Complex::new(T::lit(re), T::lit(im));
        seen[rank] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("field dump is missing modes"));
    }
    Ok(field)
}

/// Binary dump: little-endian `u64 N, u64 d`, then per mode `d × i64` followed by `re, im` as f64.
pub fn write_field_binary<T: Real, W: Write>(lat: &Lattice<T>, field: &SpectralField<T>, mut w: W) -> Result<()> {
    field.check_on(lat)?;
    w.write_all(&(lat.len() as u64).to_le_bytes())?;
    w.write_all(&(lat.dim() as u64).to_le_bytes())?;
    for (r, a) in field.amps.iter().enumerate() {
        for x in lat.mode(r) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&a.re.as_f64().to_le_bytes())?;
        w.write_all(&a.im.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field_binary<T: Real, R: Read>(lat: &Lattice<T>, mut r: R) -> Result<SpectralField<T>> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let d = u64::from_le_bytes(next(&mut r)?) as usize;
    if n != lat.len() || d != lat.dim() {
        return Err(Error::invalid("binary dump does not match lattice"));
    }
    let mut field = SpectralField::zeros(n);
    for _ in 0..n {
        let k: Vec<i64> = (0..d).map(|_| next(&mut r).map(i64::from_le_bytes)).collect::<Result<_>>()?;
        let re = f64::from_le_bytes(next(&mut r)?);
        let im = f64::from_le_bytes(next(&mut r)?);
        let rank = lat.rank_of(&k).ok_or_else(|| Error::invalid(format!("{k:?} is not a lattice mode")))?;
        field.amps[rank] = Complex::new(T::lit(re), T::lit(im));
    }
    Ok(field)
}
