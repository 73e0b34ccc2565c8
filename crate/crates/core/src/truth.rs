//! Seeded generation of ground-truth parameters.
//!
//! Each family normalizes to a fixed constraint level so that in the multi
//! setting every arm shares one radius: sparse vectors place `s` entries of
//! magnitude 1/sqrt(s) (l1 norm sqrt(s)), dense vectors sit on the unit
//! sphere, and low-rank factor products are rescaled to nuclear norm
//! sqrt(r).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{GroundTruth, TruthMode};
use crate::error::{Error, Result};
use crate::norms::{NormFamily, NormSpec, Shape};

fn default_k() -> usize {
    1
}

/// Declarative description of the ground truth to draw per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub mode: TruthMode,
    /// Flattened parameter dimension (context dimension).
    pub p: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub family: NormFamily,
    /// Number of nonzero entries for the l1 family.
    #[serde(default)]
    pub sparsity: Option<usize>,
    /// Target rank for the nuclear family.
    #[serde(default)]
    pub rank: Option<usize>,
    /// Matrix row count for the nuclear family; must divide `p`.
    #[serde(default)]
    pub rows: Option<usize>,
}

impl TruthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::config("truth.p must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::config("truth.k must be at least 1"));
        }
        match self.family {
            NormFamily::L1 => {
                let s = self.sparsity.ok_or_else(|| Error::config("truth.sparsity required for the l1 family"))?;
                if s == 0 || s > self.p {
                    return Err(Error::config(format!(
                        "truth.sparsity must be in 1..={}, got {s}",
                        self.p
                    )));
                }
            }
            NormFamily::L2 => {}
            NormFamily::Nuclear => {
                let m = self.rows.ok_or_else(|| Error::config("truth.rows required for the nuclear family"))?;
                let r = self.rank.ok_or_else(|| Error::config("truth.rank required for the nuclear family"))?;
                if m == 0 || self.p % m != 0 {
                    return Err(Error::config(format!(
                        "truth.rows must divide truth.p; got rows {m}, p {}",
                        self.p
                    )));
                }
                let cols = self.p / m;
                if r == 0 || r > m.min(cols) {
                    return Err(Error::config(format!(
                        "truth.rank must be in 1..={}, got {r}",
                        m.min(cols)
                    )));
                }
            }
        }
        Ok(())
    }

    /// The norm-ball shape implied by the family.
    pub fn shape(&self) -> Shape {
        match self.family {
            NormFamily::Nuclear => {
                let m = self.rows.unwrap_or(1);
                Shape::Matrix(m, self.p / m.max(1))
            }
            _ => Shape::Vector(self.p),
        }
    }
}

/// Draw the ground truth described by `cfg`.
pub fn generate_truth<R: Rng + ?Sized>(cfg: &TruthConfig, rng: &mut R) -> Result<GroundTruth> {
    cfg.validate()?;
    let count = match cfg.mode {
        TruthMode::Single => 1,
        TruthMode::Multi => cfg.k,
    };
    let (thetas, radius) = match cfg.family {
        NormFamily::L1 => {
            let s = cfg.sparsity.expect("validated");
            let radius = (s as f64).sqrt();
            let thetas = (0..count).map(|_| sparse_vector(cfg.p, s, rng)).collect();
            (thetas, radius)
        }
        NormFamily::L2 => {
            let thetas = (0..count)
                .map(|_| {
                    let v = DVector::from_fn(cfg.p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let n = v.norm();
                    v / n
                })
                .collect();
            (thetas, 1.0)
        }
        NormFamily::Nuclear => {
            let m = cfg.rows.expect("validated");
            let r = cfg.rank.expect("validated");
            let cols = cfg.p / m;
            let radius = (r as f64).sqrt();
            let thetas = (0..count).map(|_| low_rank_vector(m, cols, r, rng)).collect();
            (thetas, radius)
        }
    };
    let spec = NormSpec::new(cfg.family, cfg.shape(), radius)?;
    GroundTruth::new(cfg.mode, thetas, spec)
}

fn sparse_vector<R: Rng + ?Sized>(p: usize, s: usize, rng: &mut R) -> DVector<f64> {
    let mut coords: Vec<usize> = (0..p).collect();
    coords.shuffle(rng);
    let magnitude = 1.0 / (s as f64).sqrt();
    let mut theta = DVector::zeros(p);
    for &idx in coords.iter().take(s) {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        theta[idx] = sign * magnitude;
    }
    theta
}

fn low_rank_vector<R: Rng + ?Sized>(m: usize, cols: usize, r: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let a = DMatrix::from_fn(m, r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(r, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let product = a * b;
        let nuclear: f64 = product.singular_values().iter().sum();
        if nuclear < 1e-9 {
            continue;
        }
        let scaled = product * ((r as f64).sqrt() / nuclear);
        return DVector::from_iterator(m * cols, scaled.transpose().iter().cloned());
    }
}
