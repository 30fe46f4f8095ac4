//! Brownian bridge and excursion on `[0, 1]`, and the Vervaat transform
//! between them.
//!
//! `Ψ` cuts a bridge at its minimum and swaps the two pieces, which turns it
//! into an excursion. `Φ(ω, u)` cuts an excursion at `u` and swaps the pieces
//! the other way. Both act on grid paths by index arithmetic, and the second
//! branch of `Ψ` is read modulo 1 so that `Ψ ∘ Φ` is the identity.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::norm_cdf;
use crate::rng::{derive_seed, par_samples, Stream};
use crate::stats::{ks2_test, ks_test, EmpiricalLaw, GofReport};

/// A path on the grid `i/n`, `i = 0..=n`, pinned to 0 at both ends.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoopPath {
    pub values: Vec<f64>,
}

impl LoopPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Domain(format!("a loop needs at least 2 steps, got {}", values.len().saturating_sub(1))));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 0.0 {
            return Err(Error::Domain("a loop starts and ends at 0".into()));
        }
        Ok(LoopPath { values })
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.steps() as f64
    }

    /// Linear interpolation at `t ∈ [0, 1]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.steps();
        let s = t.clamp(0.0, 1.0) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let w = s - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Earliest index of the minimum over `0..n`, and how many indices tie.
    pub fn argmin(&self) -> (usize, usize) {
        let body = &self.values[..self.steps()];
        let mut k = 0;
        for (i, &v) in body.iter().enumerate() {
            if v < body[k] {
                k = i;
            }
        }
        let ties = body.iter().filter(|&&v| v == body[k]).count();
        (k, ties)
    }

    pub fn min(&self) -> f64 {
        self.values[self.argmin().0]
    }

    /// `ω(i + k mod n) − ω(k)` for `i = 0..=n`.
    fn rotated(&self, k: usize) -> LoopPath {
        let n = self.steps();
        let base = self.values[k];
        let mut values: Vec<f64> = (0..n).map(|i| self.values[(k + i) % n] - base).collect();
        values.push(0.0);
        values[0] = 0.0;
        LoopPath { values }
    }
}

fn check_steps(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 steps, got {n}")));
    }
    Ok(())
}

/// `W_t − t W_1` on the grid.
pub fn sample_bridge01(n: usize, rng: &mut Stream) -> Result<LoopPath> {
    check_steps(n)?;
    let sd = (1.0 / n as f64).sqrt();
    let mut walk = Vec::with_capacity(n + 1);
    walk.push(0.0);
    let mut w = 0.0;
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        w += sd * z;
        walk.push(w);
    }
    let end = walk[n];
    let mut values: Vec<f64> = walk.iter().enumerate().map(|(i, &v)| v - (i as f64 / n as f64) * end).collect();
    values[n] = 0.0;
    Ok(LoopPath { values })
}

/// Bessel(3) bridge: the radius of three independent bridges.
pub fn sample_excursion01(n: usize, rng: &mut Stream) -> Result<LoopPath> {
    let b: Vec<LoopPath> = (0..3).map(|_| sample_bridge01(n, rng)).collect::<Result<_>>()?;
    let values = (0..=n)
        .map(|i| (b[0].values[i].powi(2) + b[1].values[i].powi(2) + b[2].values[i].powi(2)).sqrt())
        .collect();
    Ok(LoopPath { values })
}

/// `Ψ`: the bridge seen from its earliest grid minimum, wrapped around.
pub fn vervaat_forward(bridge: &LoopPath) -> LoopPath {
    bridge.rotated(bridge.argmin().0)
}

/// `Φ(ω, u)` with `u` moved to the nearest grid point.
pub fn vervaat_inverse(excursion: &LoopPath, u: f64) -> Result<LoopPath> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("cut point must lie in ]0, 1[, got {u}")));
    }
    let n = excursion.steps();
    let k = ((u * n as f64).round() as usize).clamp(1, n - 1);
    Ok(excursion.rotated(k))
}

/// `P(X_{1/2} ≤ x)` under the excursion law: Maxwell with scale 1/2.
pub fn excursion_midpoint_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (2.0 * norm_cdf(2.0 * x) - 1.0) - (2.0 / std::f64::consts::PI).sqrt() * 2.0 * x * (-2.0 * x * x).exp()
}

/// Midpoint of `Ψ(bridge)` against the excursion marginal.
pub fn verify_forward(steps: usize, n: usize, seed: u64) -> Result<GofReport> {
    check_steps(steps)?;
    let mids = par_samples(n, seed, |_, rng| -> Result<f64> {
        Ok(vervaat_forward(&sample_bridge01(steps, rng)?).value_at(0.5))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ks_test(&EmpiricalLaw::new(mids), excursion_midpoint_cdf)
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundTripReport {
    pub n: usize,
    pub steps: usize,
    /// Every `Ψ(Φ(ω, u))` has the minimum where the index arithmetic puts it.
    pub index_exact: bool,
    /// Largest `|Ψ(Φ(ω, u)) − ω|`, from rounding in the two subtractions.
    pub max_deviation: f64,
    pub max_abs_value: f64,
    /// Midpoint of `Φ(ω, U)` against `N(0, 1/4)`.
    pub midpoint: GofReport,
    /// `ρ₁` of `Φ(ω, U)` against `1 − U`.
    pub argmin: GofReport,
    /// `−H₁` of `Φ(ω, U)` against `ω(U)`.
    pub depth: GofReport,
}

impl RoundTripReport {
    pub fn passes(&self, level: f64) -> bool {
        self.index_exact
            && self.max_deviation <= 8.0 * f64::EPSILON * self.max_abs_value.max(1.0)
            && self.midpoint.passes(level)
            && self.argmin.passes(level)
            && self.depth.passes(level)
    }
}

struct Trip {
    exact: bool,
    deviation: f64,
    scale: f64,
    mid: f64,
    rho: f64,
    depth: f64,
}

/// `Ψ ∘ Φ = id` on excursions cut at grid-uniform `U`, and the joint law of
/// `(ρ₁, −H₁)` after `Φ` against `(1 − U, ω(U))` from an independent sample.
pub fn verify_round_trip(steps: usize, n: usize, seed: u64) -> Result<RoundTripReport> {
    check_steps(steps)?;
    let grid_uniform = |rng: &mut Stream| -> f64 {
        let k = rand::Rng::random_range(rng, 1..steps);
        k as f64 / steps as f64
    };
    let trips = par_samples(n, seed, |_, rng| -> Result<Trip> {
        let omega = sample_excursion01(steps, rng)?;
        let u = grid_uniform(rng);
        let cut = vervaat_inverse(&omega, u)?;
        let back = vervaat_forward(&cut);
        let (k, _) = cut.argmin();
        let m = (u * steps as f64).round() as usize;
        let deviation = back.values.iter().zip(&omega.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(Trip {
            exact: k == steps - m,
            deviation,
            scale: omega.values.iter().fold(0.0, |a: f64, &b| a.max(b.abs())),
            mid: cut.value_at(0.5),
            rho: cut.time(k),
            depth: -cut.values[k],
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    // (1 − U, ω(U)) from fresh excursions and cut points
    let reference = par_samples(n, derive_seed(seed, 1), |_, rng| -> Result<(f64, f64)> {
        let omega = sample_excursion01(steps, rng)?;
        let u = grid_uniform(rng);
        Ok((1.0 - u, omega.value_at(u)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let half_sd = 0.5;
    Ok(RoundTripReport {
        n,
        steps,
        index_exact: trips.iter().all(|t| t.exact),
        max_deviation: trips.iter().map(|t| t.deviation).fold(0.0, f64::max),
        max_abs_value: trips.iter().map(|t| t.scale).fold(0.0, f64::max),
        midpoint: ks_test(&EmpiricalLaw::new(trips.iter().map(|t| t.mid).collect()), |x| norm_cdf(x / half_sd))?,
        argmin: ks2_test(
            &EmpiricalLaw::new(trips.iter().map(|t| t.rho).collect()),
            &EmpiricalLaw::new(reference.iter().map(|r| r.0).collect()),
        )?,
        depth: ks2_test(
            &EmpiricalLaw::new(trips.iter().map(|t| t.depth).collect()),
            &EmpiricalLaw::new(reference.iter().map(|r| r.1).collect()),
        )?,
    })
}

/// Fraction of bridges whose grid minimum is attained more than once.
pub fn argmin_tie_rate(steps: usize, n: usize, seed: u64) -> Result<f64> {
    check_steps(steps)?;
    let ties = par_samples(n, seed, |_, rng| sample_bridge01(steps, rng).map(|b| b.argmin().1 > 1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ties.iter().filter(|&&t| t).count() as f64 / n.max(1) as f64)
}
