//! Toy datasets and perturbations on the `[-1, 1]^2` domain.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::distance::DistanceMap;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Supervised points are kept at least this far from the boundary.
pub const SUP_MARGIN: f64 = 0.2;
const MAX_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataMode {
    /// Unsupervised points avoid a band around the boundary.
    Gap,
    NoGap,
}

impl FromStr for DataMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap" => Ok(DataMode::Gap),
            "no-gap" => Ok(DataMode::NoGap),
            _ => Err(Error::config(
                "mode",
                format!("expected gap or no-gap, got {s:?}"),
            )),
        }
    }
}

impl fmt::Display for DataMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataMode::Gap => "gap",
            DataMode::NoGap => "no-gap",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub sup: Vec<([f64; 2], usize)>,
    pub unsup: Vec<[f64; 2]>,
    pub mode: DataMode,
}

fn uniform_point(rng: &mut SeedStream) -> [f64; 2] {
    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
}

fn rejection(
    rng: &mut SeedStream,
    what: &str,
    accept: impl Fn([f64; 2]) -> bool,
) -> Result<[f64; 2]> {
    for _ in 0..MAX_ATTEMPTS {
        let p = uniform_point(rng);
        if accept(p) {
            return Ok(p);
        }
    }
    Err(Error::SamplingFailed {
        attempts: MAX_ATTEMPTS,
        what: what.to_string(),
    })
}

/// `n_sup` labeled points per class with `|m| > 0.2`, and `n_unsup` uniform
/// points; in gap mode unsupervised points with `|m| < gap_width / 2` are
/// rejected.
pub fn sample_toy_dataset(
    dmap: &DistanceMap,
    mode: DataMode,
    n_sup: usize,
    n_unsup: usize,
    gap_width: f64,
    rng: &mut SeedStream,
) -> Result<ToyDataset> {
    let mut sup = Vec::with_capacity(2 * n_sup);
    for class in 0..2 {
        for _ in 0..n_sup {
            let p = rejection(rng, "supervised point", |p| {
                let m = dmap.sample(p);
                m.abs() > SUP_MARGIN && (m > 0.0) as usize == class
            })?;
            sup.push((p, class));
        }
    }
    let half = gap_width / 2.0;
    let unsup = (0..n_unsup)
        .map(|_| match mode {
            DataMode::Gap => rejection(rng, "unsupervised point", |p| dmap.sample(p).abs() >= half),
            DataMode::NoGap => Ok(uniform_point(rng)),
        })
        .collect::<Result<_>>()?;
    Ok(ToyDataset { sup, unsup, mode })
}

pub(crate) fn in_domain(p: [f64; 2]) -> bool {
    p.iter().all(|v| (-1.0..=1.0).contains(v))
}

/// Isotropic Gaussian offset with standard deviation `sigma` per axis.
pub fn isotropic_perturb(p: [f64; 2], sigma: f64, rng: &mut SeedStream) -> [f64; 2] {
    if sigma == 0.0 {
        return p;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    [p[0] + normal.sample(rng), p[1] + normal.sample(rng)]
}

/// Isotropic perturbation, rejected (`None`) when it changes the distance to
/// the boundary by more than `tol` or leaves the domain.
pub fn constrained_perturb(
    p: [f64; 2],
    dmap: &DistanceMap,
    sigma: f64,
    tol: f64,
    rng: &mut SeedStream,
) -> Option<[f64; 2]> {
    let q = isotropic_perturb(p, sigma, rng);
    if !in_domain(q) || (dmap.sample(q) - dmap.sample(p)).abs() > tol {
        return None;
    }
    Some(q)
}
