//! Excursions above the running minimum, indexed by the level at which they
//! start.
//!
//! Seen from `x`, the levels `y < x` of excursions above the minimum form a
//! Poisson process with intensity `ds(y) n↑_y`, stopped at the first
//! excursion that never comes back. Only excursions lasting longer than `ε`
//! are generated: `n↑_y(ζ > ε)` is finite, and it already contains the
//! escaping excursions, which last forever.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::decomp::{conditioned_down_dynamics, ConditionedUp, CONDITIONED_HORIZON};
use crate::densities::{bm_hitting_cdf, bm_passage_density, LaplaceLadder};
use crate::eigen::{ruin_function, solve_eigenfunctions, EigenPair, RuinFunction};
use crate::error::{Error, Result};
use crate::num::{adaptive, norm_cdf, norm_pdf};
use crate::pathsim::{Dynamics, Path};
use crate::rng::{par_samples, Stream};
use crate::spec::DiffusionSpec;
use crate::stats::Welford;

/// One point of the level process.
#[derive(Clone, Debug, Serialize)]
pub struct LevelPoint {
    pub level: f64,
    /// The excursion from time `ε` on, started at its position at `ε`.
    pub excursion: Path,
    pub escaped: bool,
}

#[derive(Clone, Debug)]
pub struct ProcessOptions {
    pub eps: f64,
    pub dt: f64,
    /// Lowest level generated. Required when the diffusion is recurrent.
    pub y_min: Option<f64>,
    /// Stop at the first escaping excursion. Without stopping the points
    /// below it are those of the unstopped Poisson process.
    pub stop_at_escape: bool,
    /// Simulate the excursions; otherwise only their position at `ε` is kept.
    pub with_paths: bool,
    /// How long escaping excursions are followed.
    pub escape_horizon: f64,
}

impl ProcessOptions {
    pub fn new(eps: f64, dt: f64) -> Self {
        ProcessOptions { eps, dt, y_min: None, stop_at_escape: true, with_paths: true, escape_horizon: 1.0 }
    }
}

/// First-passage density `f(ε; z, y)` at the fixed time `ε`.
enum PassageAt {
    Drift(f64),
    Ladder(LaplaceLadder),
}

impl PassageAt {
    fn new(spec: &DiffusionSpec, eps: f64) -> Result<Self> {
        Ok(match spec.brownian_drift() {
            Some(mu) => PassageAt::Drift(mu),
            None => PassageAt::Ladder(LaplaceLadder::new(spec, eps)?),
        })
    }

    fn density(&self, eps: f64, z: f64, y: f64) -> f64 {
        match self {
            PassageAt::Drift(mu) => bm_passage_density(*mu, eps, z, y),
            PassageAt::Ladder(l) => l.invert_both(|p| p.hitting_laplace(z, y)).0.max(0.0),
        }
    }

    /// `n↑_y(ζ > ε)` per unit of `s`.
    fn tail_mass(&self, spec: &DiffusionSpec, eps: f64, y: f64) -> f64 {
        match self {
            PassageAt::Drift(mu) => 2.0 * (2.0 * mu * y).exp() * drift_tail(*mu, eps),
            PassageAt::Ladder(l) => {
                let _ = spec;
                l.invert_both(|p| p.excursion_resolvent_parts(y, |_| 1.0).1).0
            }
        }
    }
}

/// `φ(μ√ε)/√ε + μΦ(μ√ε)`: half the tail mass per unit level for drift `μ`.
fn drift_tail(mu: f64, eps: f64) -> f64 {
    let se = eps.sqrt();
    norm_pdf(mu * se) / se + mu * norm_cdf(mu * se)
}

/// Inverse-cdf sampler of a tabulated density on `[lo, hi]`.
struct Tabulated {
    xs: Vec<f64>,
    cdf: Vec<f64>,
}

impl Tabulated {
    fn new(lo: f64, hi: f64, cells: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (hi - lo) / cells as f64;
        let xs: Vec<f64> = (0..=cells).map(|i| lo + i as f64 * h).collect();
        let f: Vec<f64> = xs.iter().map(|&x| density(x).max(0.0)).collect();
        let mut cdf = vec![0.0; xs.len()];
        for i in 1..xs.len() {
            cdf[i] = cdf[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
        }
        let total = cdf[cells];
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain(format!("entrance density has no mass on [{lo}, {hi}]")));
        }
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Tabulated { xs, cdf })
    }

    fn sample(&self, rng: &mut Stream) -> f64 {
        let u: f64 = rng.random();
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.xs.len() - 1);
        let w = (u - self.cdf[k - 1]) / (self.cdf[k] - self.cdf[k - 1]).max(1e-300);
        self.xs[k - 1] + w.clamp(0.0, 1.0) * (self.xs[k] - self.xs[k - 1])
    }
}

/// Extent of the entrance law at time `ε` above `y`.
fn entrance_reach(spec: &DiffusionSpec, eps: f64, y: f64) -> f64 {
    spec.drift(y).abs() * eps + 10.0 * spec.sigma(y) * eps.sqrt()
}

/// Level spacing of the dominating intensity for thinning.
const BAND: f64 = 0.05;
const BAND_SLACK: f64 = 1.25;

/// Sampler of the stopped level process from `x`.
pub struct ExcursionProcess {
    spec: DiffusionSpec,
    x: f64,
    opts: ProcessOptions,
    ruin: Option<RuinFunction>,
    passage: PassageAt,
    /// Level-free law of `z − y` for Brownian presets.
    drift_table: Option<Tabulated>,
    /// Intensity per unit level on the band nodes `x − k BAND/2`.
    nodes: Vec<f64>,
}

impl ExcursionProcess {
    pub fn new(spec: &DiffusionSpec, x: f64, opts: ProcessOptions) -> Result<Self> {
        if !(opts.eps >= opts.dt && opts.dt > 0.0) {
            return Err(Error::Domain(format!("need 0 < dt ≤ ε, got dt = {} and ε = {}", opts.dt, opts.eps)));
        }
        let ruin = match ruin_function(spec, x) {
            Ok(r) => Some(r),
            Err(Error::NotTransient(why)) => {
                if opts.y_min.is_none() {
                    return Err(Error::NotTransient(format!("{why}; supply a lowest level")));
                }
                None
            }
            Err(e) => return Err(e),
        };
        if ruin.is_none() && !opts.stop_at_escape && opts.y_min.is_none() {
            return Err(Error::Domain("an unstopped level process needs a lowest level".into()));
        }
        let passage = PassageAt::new(spec, opts.eps)?;
        let eps = opts.eps;
        let (drift_table, nodes) = match &passage {
            PassageAt::Drift(mu) => {
                let mu = *mu;
                let reach = entrance_reach(spec, eps, 0.0);
                // f(ε; y+d, y) m(y+d) ∝ d exp(−(d − με)²/2ε)
                let table = Tabulated::new(0.0, reach, 1024, |d| d * (-(d - mu * eps).powi(2) / (2.0 * eps)).exp())?;
                (Some(table), vec![2.0 * drift_tail(mu, eps)])
            }
            PassageAt::Ladder(_) => {
                let floor = opts.y_min.unwrap_or(spec.window().lo()).max(spec.window().lo());
                if floor >= x {
                    return Err(Error::Domain(format!("lowest level {floor} must lie below the start {x}")));
                }
                let count = ((x - floor) / (0.5 * BAND)).ceil() as usize + 1;
                let nodes = (0..=count)
                    .map(|k| {
                        let y = x - k as f64 * 0.5 * BAND;
                        if y < spec.window().lo() {
                            return Ok(0.0);
                        }
                        let v = passage.tail_mass(spec, eps, y) * spec.scale_derivative(y);
                        if !v.is_finite() {
                            return Err(Error::QuadratureNonConvergence {
                                what: format!("excursion tail mass at level {y}"),
                                partials: vec![v],
                            });
                        }
                        Ok(v.max(0.0))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (None, nodes)
            }
        };
        Ok(ExcursionProcess { spec: spec.clone(), x, opts, ruin, passage, drift_table, nodes })
    }

    /// `n↑_y(ζ > ε) s'(y)`, the rate of points per unit level.
    pub fn intensity(&self, y: f64) -> f64 {
        match self.passage {
            PassageAt::Drift(_) => self.nodes[0],
            PassageAt::Ladder(_) => self.passage.tail_mass(&self.spec, self.opts.eps, y) * self.spec.scale_derivative(y),
        }
    }

    /// Rate per unit level of the escaping excursions, `−r⁺/r · s'`.
    pub fn escape_rate(&self, y: f64) -> f64 {
        match &self.ruin {
            Some(r) => r.escape_rate(&self.spec, y) * self.spec.scale_derivative(y),
            None => 0.0,
        }
    }

    /// Dominating constant rate on band `k`, the levels `x − (k+1)BAND ≤ y < x − k BAND`.
    fn bound(&self, k: usize) -> Option<f64> {
        if self.drift_table.is_some() {
            return Some(self.nodes[0]);
        }
        let idx = [2 * k, 2 * k + 1, 2 * k + 2];
        if idx[2] >= self.nodes.len() {
            return None;
        }
        Some(BAND_SLACK * idx.iter().map(|&i| self.nodes[i]).fold(0.0, f64::max))
    }

    fn floor(&self) -> f64 {
        match self.opts.y_min {
            Some(m) => m,
            None if self.drift_table.is_some() => f64::NEG_INFINITY,
            None => self.spec.window().lo(),
        }
    }

    /// Levels in decreasing order, each with its excursion.
    pub fn sample(&self, rng: &mut Stream) -> Result<Vec<LevelPoint>> {
        let floor = self.floor();
        let mut points = Vec::new();
        let mut y = self.x;
        let mut band = 0;
        loop {
            // thinning against the band bound; a new band restarts the clock
            let Some(rate) = self.bound(band) else {
                if self.opts.y_min.is_some() {
                    break;
                }
                return Err(Error::Domain(format!("level process left the window at {y}")));
            };
            let band_end = if self.drift_table.is_some() {
                f64::NEG_INFINITY
            } else {
                self.x - (band + 1) as f64 * BAND
            };
            let step: f64 = Exp1.sample(rng);
            let next = y - step / rate.max(1e-300);
            if next <= band_end {
                y = band_end;
                band += 1;
                if y <= floor {
                    break;
                }
                continue;
            }
            y = next;
            if y <= floor {
                break;
            }
            if self.drift_table.is_none() {
                let lambda = self.intensity(y);
                if lambda > rate {
                    log::warn!("thinning bound {rate} below the intensity {lambda} at level {y}");
                }
                if rng.random::<f64>() * rate >= lambda {
                    continue;
                }
            }
            let point = self.point(y, rng)?;
            let stop = point.escaped && self.opts.stop_at_escape;
            points.push(point);
            if stop {
                break;
            }
        }
        Ok(points)
    }

    fn entrance_position(&self, y: f64, rng: &mut Stream) -> Result<f64> {
        if let Some(t) = &self.drift_table {
            return Ok(y + t.sample(rng));
        }
        let eps = self.opts.eps;
        let reach = entrance_reach(&self.spec, eps, y);
        let table = Tabulated::new(0.0, reach, 256, |d| {
            if d <= 0.0 {
                0.0
            } else {
                self.passage.density(eps, y + d, y) * self.spec.speed_density(y + d)
            }
        })?;
        Ok(y + table.sample(rng))
    }

    fn point(&self, y: f64, rng: &mut Stream) -> Result<LevelPoint> {
        let z = self.entrance_position(y, rng)?;
        // returns to y with probability P^z(T_y < ∞) = r(z)/r(y)
        let escaped = match &self.ruin {
            Some(r) => rng.random::<f64>() >= r.hitting_probability(z, y),
            None => false,
        };
        let eps = self.opts.eps;
        let mut excursion = if !self.opts.with_paths {
            Path::from_values(vec![z], self.opts.dt)
        } else if escaped {
            let up = ConditionedUp::new(&self.spec, self.ruin.as_ref().expect("escape needs r"), y)?;
            let mut p = up.sample(z - y, self.opts.dt, self.opts.escape_horizon, rng)?;
            p.values[0] = z;
            p
        } else {
            let dynamics = match &self.ruin {
                Some(r) => conditioned_down_dynamics(&self.spec, r, y),
                None => Dynamics::from_spec(&self.spec).with_absorbing(Some(y), None),
            };
            dynamics.sample_path(z, self.opts.dt, CONDITIONED_HORIZON, rng)?
        };
        excursion.t0 = eps;
        excursion.lifetime += eps;
        Ok(LevelPoint { level: y, excursion, escaped })
    }
}

pub fn sample_excursion_process(spec: &DiffusionSpec, x: f64, opts: ProcessOptions, rng: &mut Stream) -> Result<Vec<LevelPoint>> {
    ExcursionProcess::new(spec, x, opts)?.sample(rng)
}

/// The optional weight `Z_u` at an excursion start `u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Weight {
    /// `e^{−u}`
    Discount,
    /// `1{u < T}`
    Before(f64),
}

/// The excursion functional `F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Functional {
    Zero,
    /// `1{ζ > ε}`
    Longer,
    /// `e^{−αζ} 1{ζ > ε}`
    DiscountedLength(f64),
    /// `1{sup > h}`, accepted only when such excursions outlast `ε`.
    Height(f64),
}

#[derive(Clone, Debug, Serialize)]
pub struct LevyConfig {
    pub x: f64,
    pub weight: Weight,
    pub functional: Functional,
    pub eps: f64,
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    /// Simulated time for the discounted weight.
    pub discount_horizon: f64,
}

impl LevyConfig {
    pub fn new(x: f64, weight: Weight, functional: Functional, eps: f64, n: usize, dt: f64, seed: u64) -> Self {
        LevyConfig { x, weight, functional, eps, n, dt, seed, discount_horizon: 12.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    /// The right side is a deterministic quadrature.
    pub se_rhs: f64,
    pub z_score: f64,
    pub n: usize,
}

impl LevyReport {
    pub fn passes(&self, sigmas: f64) -> bool {
        if self.se_lhs == 0.0 && self.se_rhs == 0.0 {
            return (self.lhs - self.rhs).abs() <= 1e-12 * (1.0 + self.rhs.abs());
        }
        self.z_score.abs() <= sigmas
    }
}

/// Heights this far above `√(σ²ε)` are essentially never reached by
/// excursions shorter than `ε`.
const HEIGHT_MARGIN: f64 = 25.0;

/// Both sides of `P^x Σ_{u∈G} Z_u F(e_u) = P^x ∫ Z_{T_y} n↑_y(F) ds(y)`:
/// the left by simulation with the refined minimum tracker, the right by
/// quadrature over levels.
pub fn verify_levy_system(spec: &DiffusionSpec, cfg: &LevyConfig) -> Result<LevyReport> {
    if !(cfg.eps >= cfg.dt && cfg.dt > 0.0) {
        return Err(Error::Domain(format!("need 0 < dt ≤ ε, got dt = {} and ε = {}", cfg.dt, cfg.eps)));
    }
    if let Functional::Height(h) = cfg.functional {
        let sigma = spec.window().points().map(|z| spec.sigma(z)).fold(0.0, f64::max);
        if !(h > 0.0) || h * h < HEIGHT_MARGIN * sigma * sigma * cfg.eps {
            return Err(Error::RejectedFunctional(format!(
                "height {h} is within reach of excursions shorter than ε = {}",
                cfg.eps
            )));
        }
    }
    if let Functional::DiscountedLength(a) = cfg.functional {
        if !(a > 0.0) {
            return Err(Error::Domain(format!("discount rate must be positive, got {a}")));
        }
    }
    if let Weight::Before(t) = cfg.weight {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("weight horizon must be positive, got {t}")));
        }
    }
    let lhs = levy_lhs(spec, cfg)?;
    let rhs = levy_rhs(spec, cfg)?;
    let se = lhs.se();
    let z_score = if se > 0.0 { (lhs.mean() - rhs) / se } else { 0.0 };
    Ok(LevyReport { lhs: lhs.mean(), rhs, se_lhs: se, se_rhs: 0.0, z_score, n: cfg.n })
}

fn levy_lhs(spec: &DiffusionSpec, cfg: &LevyConfig) -> Result<Welford> {
    let mut dynamics = Dynamics::from_spec(spec);
    if spec.brownian_drift().is_some() {
        dynamics = dynamics.with_window(f64::NEG_INFINITY, f64::INFINITY);
    }
    let horizon = match cfg.weight {
        Weight::Discount => cfg.discount_horizon,
        // an excursion starting just before T is known to outlast ε by T + ε
        Weight::Before(t) => t + cfg.eps,
    };
    let pair = match cfg.functional {
        Functional::DiscountedLength(a) => Some(solve_eigenfunctions(spec, a, spec.window())?),
        _ => None,
    };
    let sums = par_samples(cfg.n, cfg.seed, |_, rng| {
        let trace = dynamics.track_minimum(cfg.x, cfg.dt, horizon, cfg.eps, rng);
        let mut total = 0.0;
        for e in &trace.excursions {
            let z = match cfg.weight {
                Weight::Discount => (-e.u).exp(),
                Weight::Before(t) => f64::from(e.u < t),
            };
            if z == 0.0 {
                continue;
            }
            let open = e.censored && !trace.killed;
            let f = match cfg.functional {
                Functional::Zero => 0.0,
                Functional::Longer => 1.0,
                Functional::DiscountedLength(a) => {
                    let done = (-a * e.duration).exp();
                    if open {
                        // the rest of the excursion, from where the path stands
                        done * pair_hitting(pair.as_ref(), trace.end, e.level)
                    } else {
                        done
                    }
                }
                Functional::Height(h) => {
                    if e.height > h {
                        1.0
                    } else if open {
                        let s = |v: f64| spec.scale(v);
                        ((s(trace.end) - s(e.level)) / (s(e.level + h) - s(e.level))).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                }
            };
            total += z * f;
        }
        total
    });
    Ok(sums.into_iter().collect())
}

fn pair_hitting(pair: Option<&EigenPair>, from: f64, to: f64) -> f64 {
    match pair {
        Some(p) if from > to => p.hitting_laplace(from, to),
        _ => 1.0,
    }
}

fn levy_rhs(spec: &DiffusionSpec, cfg: &LevyConfig) -> Result<f64> {
    if cfg.functional == Functional::Zero {
        return Ok(0.0);
    }
    let x = cfg.x;
    let eps = cfg.eps;
    let mu = spec.brownian_drift();
    let passage = PassageAt::new(spec, eps)?;

    // Z̃(y) = P^x(Z_{T_y}; T_y < ∞)
    let discount = match (cfg.weight, mu) {
        (Weight::Discount, None) => Some(solve_eigenfunctions(spec, 1.0, spec.window())?),
        _ => None,
    };
    let before = match (cfg.weight, mu) {
        (Weight::Before(t), None) => Some(LaplaceLadder::new(spec, t)?),
        _ => None,
    };
    let weight = |y: f64| -> f64 {
        match (cfg.weight, mu) {
            (Weight::Discount, Some(m)) => (-(x - y) * (m + (m * m + 2.0).sqrt())).exp(),
            (Weight::Discount, None) => discount.as_ref().map_or(0.0, |p| p.hitting_laplace(x, y)),
            (Weight::Before(t), Some(m)) => bm_hitting_cdf(m, t, x, y),
            (Weight::Before(_), None) => before
                .as_ref()
                .map_or(0.0, |l| l.invert_both(|p| p.hitting_laplace(x, y) / p.alpha()).0.clamp(0.0, 1.0)),
        }
    };

    let alpha_pair = match cfg.functional {
        Functional::DiscountedLength(a) if mu.is_none() => Some(solve_eigenfunctions(spec, a, spec.window())?),
        _ => None,
    };
    // n↑_y(F) per unit of s
    let excursion_mass = |y: f64| -> f64 {
        match cfg.functional {
            Functional::Zero => 0.0,
            Functional::Longer => passage.tail_mass(spec, eps, y),
            Functional::Height(h) => 1.0 / (spec.scale(y + h) - spec.scale(y)),
            Functional::DiscountedLength(a) => {
                // Markov at ε: e^{−αε} ∫ f(ε; z, y) P^z(e^{−αT_y}) m(dz)
                let back = |z: f64| match mu {
                    Some(m) => (-(z - y) * (m + (m * m + 2.0 * a).sqrt())).exp(),
                    None => alpha_pair.as_ref().map_or(0.0, |p| p.hitting_laplace(z, y)),
                };
                let reach = entrance_reach(spec, eps, y);
                let inner = adaptive(
                    |d| {
                        if d <= 0.0 {
                            return 0.0;
                        }
                        let z = y + d;
                        passage.density(eps, z, y) * back(z) * spec.speed_density(z)
                    },
                    0.0,
                    reach,
                    1e-14,
                    1e-9,
                );
                (-a * eps).exp() * inner
            }
        }
    };

    let reach_down = match (mu, cfg.weight) {
        (Some(_), Weight::Discount) => 60.0,
        (Some(_), Weight::Before(t)) => 12.0 * t.sqrt() + mu.unwrap().abs() * t,
        (None, _) => x - spec.window().lo(),
    };
    let lo = x - reach_down;
    let integrand = |y: f64| weight(y) * excursion_mass(y) * spec.scale_derivative(y);
    // split at the start, where the weight has its kink in y when T is finite
    let value = adaptive(integrand, lo, x, 1e-12, 1e-9);
    if !value.is_finite() {
        return Err(Error::QuadratureNonConvergence { what: "level integral of the Lévy system".into(), partials: vec![value] });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::spec::Preset;
    use crate::stats::{ks_test, EmpiricalLaw};
    use approx::assert_relative_eq;

    fn drift() -> DiffusionSpec {
        Preset::BmDrift { mu: 0.5 }.build().unwrap()
    }

    #[test]
    fn drift_intensity_closed_form() {
        let p = ExcursionProcess::new(&drift(), 0.0, ProcessOptions::new(0.01, 1e-3)).unwrap();
        assert_relative_eq!(p.intensity(-3.0), 2.0 * 4.24441, max_relative = 1e-5);
        assert_relative_eq!(p.escape_rate(-3.0), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn stopping_level_is_exponential() {
        let mut opts = ProcessOptions::new(0.01, 1e-3);
        opts.with_paths = false;
        let p = ExcursionProcess::new(&drift(), 0.0, opts).unwrap();
        let runs = par_samples(10_000, 1, |_, rng| p.sample(rng).unwrap());
        for run in &runs {
            assert_eq!(run.iter().filter(|q| q.escaped).count(), 1);
            assert!(run.last().unwrap().escaped);
            assert!(run.windows(2).all(|w| w[1].level < w[0].level));
            assert!(run.iter().all(|q| q.excursion.first() > q.level));
        }
        let stop = EmpiricalLaw::new(runs.iter().map(|r| -r.last().unwrap().level).collect());
        assert!(ks_test(&stop, |v| 1.0 - (-v.max(0.0)).exp()).unwrap().p_value > 0.01);
    }

    #[test]
    fn excursion_paths_end_where_they_should() {
        let p = ExcursionProcess::new(&drift(), 0.0, ProcessOptions::new(0.01, 1e-3)).unwrap();
        for i in 0..50 {
            for q in p.sample(&mut stream(2, i)).unwrap() {
                assert_eq!(q.excursion.t0, 0.01);
                let interior = &q.excursion.values[..q.excursion.len() - 1];
                assert!(interior.iter().all(|&v| v > q.level));
                if !q.escaped {
                    assert!(q.excursion.absorbed);
                    assert_eq!(q.excursion.last(), q.level);
                }
            }
        }
    }

    #[test]
    fn numeric_route_matches_the_preset() {
        use crate::spec::{Form, Interval, SpecBuilder};
        let spec = SpecBuilder::new(Form::sde(|_| 0.5, |_| 1.0), Interval::real_line()).window(-8.0, 8.0).build().unwrap();
        let mut opts = ProcessOptions::new(0.05, 1e-3);
        opts.with_paths = false;
        let p = ExcursionProcess::new(&spec, 0.0, opts).unwrap();
        let exact = 2.0 * drift_tail(0.5, 0.05);
        for y in [-0.3, -2.0, -5.0] {
            assert_relative_eq!(p.intensity(y), exact, max_relative = 2e-3);
            assert_relative_eq!(p.escape_rate(y), 1.0, max_relative = 1e-4);
        }
        let stops: Vec<f64> = (0..200).map(|i| -p.sample(&mut stream(4, i)).unwrap().last().unwrap().level).collect();
        assert!(ks_test(&EmpiricalLaw::new(stops), |v| 1.0 - (-v.max(0.0)).exp()).unwrap().p_value > 0.01);
    }

    #[test]
    fn zero_functional_gives_zero() {
        let cfg = LevyConfig::new(0.0, Weight::Discount, Functional::Zero, 0.01, 100, 1e-2, 3);
        let r = verify_levy_system(&drift(), &cfg).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
        assert!(r.passes(3.0));
    }

    #[test]
    fn rhs_closed_forms() {
        let spec = drift();
        let rhs = |f| levy_rhs(&spec, &LevyConfig::new(0.0, Weight::Discount, f, 0.01, 1, 1e-3, 0)).unwrap();
        // 2K / (μ + √(μ² + 2)) with K = 4.24441
        assert_relative_eq!(rhs(Functional::Longer), 4.24441, max_relative = 1e-5);
        // 2μ/(1 − e^{−2μh}) / 2 at h = 1
        assert_relative_eq!(rhs(Functional::Height(1.0)), 0.5 / (1.0 - (-1.0f64).exp()), max_relative = 1e-7);
        // excursion lengths under n↑ have density φ(μ√t) t^{−3/2} per unit level
        let a = 2.0;
        let length_law = adaptive(|t| (-a * t).exp() * norm_pdf(0.5 * t.sqrt()) * t.powf(-1.5), 0.01, 60.0, 1e-14, 1e-11);
        assert_relative_eq!(rhs(Functional::DiscountedLength(a)), length_law / 2.0, max_relative = 1e-6);
    }

    #[test]
    fn short_heights_are_rejected() {
        let cfg = LevyConfig::new(0.0, Weight::Discount, Functional::Height(0.2), 0.01, 10, 1e-3, 0);
        assert!(matches!(verify_levy_system(&drift(), &cfg), Err(Error::RejectedFunctional(_))));
    }

    #[test]
    fn levy_system_small_sample() {
        let spec = drift();
        for f in [Functional::Longer, Functional::DiscountedLength(1.0), Functional::Height(1.0)] {
            let cfg = LevyConfig::new(0.0, Weight::Before(1.0), f, 0.01, 4000, 1e-3, 11);
            let r = verify_levy_system(&spec, &cfg).unwrap();
            assert!(r.passes(3.0), "{f:?}: {r:?}");
        }
    }
}
