//! Truncated frequency lattice, the diagonal quadratic form and the resonance modulus.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAX_DIM: usize = 4;

/// Shape of the frequency truncation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    /// `|k| ≤ κ` in the Euclidean norm.
    #[default]
    Ball,
    /// `max_i |k_i| ≤ κ`.
    Box,
}

/// Torus geometry: dimension, box size, dispersion coefficients and cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusSpec {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub beta: Vec<f64>,
    pub cutoff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_seed: Option<u64>,
    #[serde(default)]
    pub shape: CutoffShape,
}

impl TorusSpec {
    pub fn new(d: usize, l: f64, beta: Vec<f64>, cutoff: f64) -> Result<Self> {
        let spec = TorusSpec {
            d,
            l,
            beta,
            cutoff,
            beta_seed: None,
            shape: CutoffShape::Ball,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The rational torus `β = (1, …, 1)`.
    pub fn rational(d: usize, l: f64, cutoff: f64) -> Result<Self> {
        Self::new(d, l, vec![1.0; d], cutoff)
    }

    /// β drawn uniformly from `[1,2]^d` with a recorded seed.
    pub fn generic(d: usize, l: f64, cutoff: f64, seed: u64) -> Result<Self> {
        let mut spec = Self::new(d, l, generic_beta(d, seed), cutoff)?;
        spec.beta_seed = Some(seed);
        Ok(spec)
    }

    pub fn with_shape(mut self, shape: CutoffShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn with_l(&self, l: f64) -> Result<Self> {
        let mut spec = self.clone();
        spec.l = l;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(Error::invalid(format!("dimension d={} outside 1..={MAX_DIM}", self.d)));
        }
        if self.beta.len() != self.d {
            return Err(Error::invalid(format!(
                "beta has {} entries, expected d={}",
                self.beta.len(),
                self.d
            )));
        }
        if let Some(b) = self.beta.iter().find(|b| !(1.0..=2.0).contains(*b)) {
            return Err(Error::invalid(format!("beta entry {b} outside [1,2]")));
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::invalid(format!("box size L={} must be positive", self.l)));
        }
        if !(self.cutoff.is_finite() && self.cutoff >= 0.0) {
            return Err(Error::invalid(format!("cutoff {} must be nonnegative", self.cutoff)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: TorusSpec = serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// Largest integer coordinate magnitude admitted by the cutoff.
    pub fn max_coordinate(&self) -> i64 {
        (self.cutoff * self.l * (1.0 + 1e-12)).floor() as i64
    }

    fn admits(&self, k: &[i64]) -> bool {
        let r = self.cutoff * self.l;
        match self.shape {
            CutoffShape::Ball => {
                let n2: i64 = k.iter().map(|x| x * x).sum();
                (n2 as f64) <= r * r * (1.0 + 1e-12)
            }
            CutoffShape::Box => k.iter().all(|&x| (x.abs() as f64) <= r * (1.0 + 1e-12)),
        }
    }
}

/// β sampled uniformly from `[1,2]^d`.
pub fn generic_beta(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..d).map(|_| rng.gen_range(1.0..2.0)).collect()
}

/// Integer lattice vector `K`, with `k = K / L`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex(pub Vec<i64>);

/// The finite mode set of a [`TorusSpec`] in canonical (lexicographic) order,
/// with cached `Q(k)` values and an O(1) lookup table for `K ↦ rank`.
#[derive(Clone, Debug)]
pub struct Lattice<T> {
    spec: TorusSpec,
    coords: Vec<i64>,
    q: Vec<T>,
    kmax: i64,
    reach: i64,
    strides: [i64; MAX_DIM],
    table: Vec<u32>,
    offsets: Vec<i64>,
}

const ABSENT: u32 = u32::MAX;

impl<T: Real> Lattice<T> {
    pub fn new(spec: &TorusSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.d;
        let kmax = spec.max_coordinate();
        let side = (2 * kmax + 1) as usize;
        let total = side
            .checked_pow(d as u32)
            .filter(|&n| n <= 50_000_000)
            .ok_or_else(|| Error::budget("mode box too large", side.pow(d.min(4) as u32) as f64))?;
        let mut coords = Vec::new();
        let mut k = vec![0i64; d];
        for lin in 0..total {
            let mut rest = lin;
            for i in (0..d).rev() {
                k[i] = (rest % side) as i64 - kmax;
                rest /= side;
            }
            if spec.admits(&k) {
                coords.extend_from_slice(&k);
            }
        }
        let n = coords.len() / d;
        if n >= ABSENT as usize {
            return Err(Error::budget("too many modes", n as f64));
        }
        // Lookup covers [-3kmax, 3kmax]^d so that K + K2 - K1 never leaves the table.
        let reach = 3 * kmax;
        let tside = 2 * reach + 1;
        let mut strides = [0i64; MAX_DIM];
        let mut s = 1i64;
        for i in (0..d).rev() {
            strides[i] = s;
            s *= tside;
        }
        let mut table = vec![ABSENT; s as usize];
        let mut offsets = Vec::with_capacity(n);
        for r in 0..n {
            let kk = &coords[r * d..(r + 1) * d];
            let lin: i64 = kk.iter().zip(&strides).map(|(x, st)| (x + reach) * st).sum();
            table[lin as usize] = r as u32;
            offsets.push(lin);
        }
        let l2 = spec.l * spec.l;
        let q = (0..n)
            .map(|r| {
                let kk = &coords[r * d..(r + 1) * d];
                let v: f64 = kk.iter().zip(&spec.beta).map(|(&x, b)| b * (x * x) as f64).sum();
                T::lit(v / l2)
            })
            .collect();
        Ok(Lattice {
            spec: spec.clone(),
            coords,
            q,
            kmax,
            reach,
            strides,
            table,
            offsets,
        })
    }

    pub fn spec(&self) -> &TorusSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    /// Mode count N.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn kmax(&self) -> i64 {
        self.kmax
    }

    /// Integer coordinates of the mode with the given rank.
    pub fn mode(&self, rank: usize) -> &[i64] {
        &self.coords[rank * self.spec.d..(rank + 1) * self.spec.d]
    }

    pub fn mode_index(&self, rank: usize) -> ModeIndex {
        ModeIndex(self.mode(rank).to_vec())
    }

    /// `k = K / L` as reals.
    pub fn k_vec(&self, rank: usize) -> Vec<f64> {
        self.mode(rank).iter().map(|&x| x as f64 / self.spec.l).collect()
    }

    pub fn rank_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.spec.d || k.iter().any(|x| x.abs() > self.reach) {
            return None;
        }
        let lin: i64 = k.iter().zip(&self.strides).map(|(x, st)| (x + self.reach) * st).sum();
        match self.table[lin as usize] {
            ABSENT => None,
            r => Some(r as usize),
        }
    }

    /// Rank of `K + K2 − K1` for modes given by rank.
    #[inline]
    pub fn combine(&self, k: usize, k1: usize, k2: usize) -> Option<usize> {
        let lin = self.offsets[k] + self.offsets[k2] - self.offsets[k1];
        match self.table[lin as usize] {
            ABSENT => None,
            r => Some(r as usize),
        }
    }

    /// Cached `Q(k)` by rank.
    #[inline]
    pub fn q(&self, rank: usize) -> T {
        self.q[rank]
    }

    pub fn q_values(&self) -> &[T] {
        &self.q
    }

    /// `Q(k) = Σ β_i (K_i / L)²` for an arbitrary integer vector of the right dimension.
    pub fn q_form(&self, k: &[i64]) -> Result<T> {
        if k.len() != self.spec.d {
            return Err(Error::invalid(format!(
                "mode has dimension {}, spec has d={}",
                k.len(),
                self.spec.d
            )));
        }
        let v: f64 = k.iter().zip(&self.spec.beta).map(|(&x, b)| b * (x * x) as f64).sum();
        Ok(T::lit(v / (self.spec.l * self.spec.l)))
    }

    /// `Ω = Q(k) − Q(k1) + Q(k2) − Q(k3)`.
    pub fn omega(&self, k: &[i64], k1: &[i64], k2: &[i64], k3: &[i64]) -> Result<T> {
        Ok(self.q_form(k)? - self.q_form(k1)? + self.q_form(k2)? - self.q_form(k3)?)
    }

    #[inline]
    pub fn omega_ranks(&self, k: usize, k1: usize, k2: usize, k3: usize) -> T {
        self.q[k] - self.q[k1] + self.q[k2] - self.q[k3]
    }

    /// All `(k1, k2, k3)` (as ranks) with `k − k1 + k2 − k3 = 0` inside the cutoff.
    pub fn sigma_zero_triples(&self, k: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |k1| {
            (0..n).filter_map(move |k2| self.combine(k, k1, k2).map(|k3| (k1, k2, k3)))
        })
    }

    /// Map from integer vectors to ranks, for callers holding explicit coordinates.
    pub fn rank_map(&self) -> HashMap<Vec<i64>, usize> {
        (0..self.len()).map(|r| (self.mode(r).to_vec(), r)).collect()
    }

    /// Rank of `-K`, which exists for both cutoff shapes.
    pub fn negate(&self, rank: usize) -> usize {
        let neg: Vec<i64> = self.mode(rank).iter().map(|x| -x).collect();
        self.rank_of(&neg).expect("cutoff is symmetric")
    }
}
