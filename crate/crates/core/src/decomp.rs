//! Path decompositions at the global minimum (Williams) and at the minimum
//! before a fixed time.
//!
//! The conditioned laws are Doob h-transforms of the base diffusion:
//! `h = r` gives the process conditioned to reach `y` (killed there) and
//! `h = r_y = 1 − r/r(y)` the process started at `y` and conditioned never
//! to return. Near `y` the second drift behaves like `σ²/(z − y)`, which is
//! integrated exactly by a three-dimensional Bessel step.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::densities::{bm_killed_density, bm_passage_density, LaplaceLadder, PassageDensity};
use crate::eigen::{ruin_function, solve_eigenfunctions, RuinFunction};
use crate::error::{Error, Result};
use crate::num::{adaptive, bisect, norm_cdf};
use crate::pathsim::{Dynamics, Path};
use crate::rng::{par_samples, Stream};
use crate::spec::{classify_boundary, coef, BoundaryClass, DiffusionSpec, End};
use crate::stats::{chi2_test, ks2_test, ks_test, EmpiricalLaw, GofReport};

/// Default cap on the simulated lifetime of conditioned paths.
pub const CONDITIONED_HORIZON: f64 = 1.0e3;

/// Law of the global minimum `γ` and its location `ρ` started from `x`.
pub struct MinimumLaw {
    spec: DiffusionSpec,
    x: f64,
    ruin: RuinFunction,
    passage: PassageCdf,
}

enum PassageCdf {
    Drift(f64),
    Table { ts: Vec<f64>, ladders: Vec<LaplaceLadder> },
}

const TABLE_T_MIN: f64 = 1e-3;
const TABLE_T_MAX: f64 = 1e3;
const TABLE_PER_DECADE: usize = 8;

impl MinimumLaw {
    /// Fails unless the diffusion drifts off upwards and cannot reach its
    /// lower end, so that `γ > A` and `ρ < ζ` almost surely.
    pub fn new(spec: &DiffusionSpec, x: f64) -> Result<MinimumLaw> {
        let lower = classify_boundary(spec, End::Lower)?;
        let iv = spec.interval();
        if iv.lower_absorbing() || !matches!(lower.kind, BoundaryClass::Natural | BoundaryClass::Entrance) {
            return Err(Error::Unsupported(format!(
                "the lower end {} is reachable ({:?}), so the global minimum can sit on it",
                iv.lower(),
                lower.kind
            )));
        }
        let ruin = ruin_function(spec, x)?;
        let passage = match spec.brownian_drift() {
            Some(mu) => PassageCdf::Drift(mu),
            None => {
                let decades = (TABLE_T_MAX / TABLE_T_MIN).log10();
                let n = (decades * TABLE_PER_DECADE as f64).round() as usize + 1;
                let ts: Vec<f64> = (0..n).map(|i| TABLE_T_MIN * 10f64.powf(i as f64 / TABLE_PER_DECADE as f64)).collect();
                let ladders = ts.iter().map(|&t| LaplaceLadder::new(spec, t)).collect::<Result<_>>()?;
                PassageCdf::Table { ts, ladders }
            }
        };
        Ok(MinimumLaw { spec: spec.clone(), x, ruin, passage })
    }

    pub fn start(&self) -> f64 {
        self.x
    }

    pub fn ruin(&self) -> &RuinFunction {
        &self.ruin
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    /// `P^x(γ ≤ y) = r(x)/r(y)`.
    pub fn gamma_cdf(&self, y: f64) -> f64 {
        if y >= self.x {
            return 1.0;
        }
        match self.passage {
            PassageCdf::Drift(mu) => (-2.0 * mu * (self.x - y)).exp(),
            PassageCdf::Table { .. } => self.ruin.hitting_probability(self.x, y),
        }
    }

    pub fn sample_gamma(&self, rng: &mut Stream) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        if let PassageCdf::Drift(mu) = self.passage {
            return self.x + u.ln() / (2.0 * mu);
        }
        // ln r(γ) = ln r(x) − ln U, with ln r decreasing
        let target = self.ruin.ln_r(self.x) - u.ln();
        let lo_limit = self.spec.interval().lower();
        let mut lo = self.spec.window().lo();
        let mut width = self.x - lo;
        while self.ruin.ln_r(lo) < target && lo > lo_limit {
            width *= 2.0;
            lo = (self.x - width).max(lo_limit + 1e-12 * width);
        }
        bisect(|y| self.ruin.ln_r(y), target, lo, self.x, 1e-12 * (1.0 + self.x.abs()))
    }

    /// `P^x(T_y ≤ t)`.
    pub fn passage_cdf(&self, t: f64, y: f64) -> f64 {
        match &self.passage {
            PassageCdf::Drift(mu) => crate::densities::bm_hitting_cdf(*mu, t, self.x, y),
            PassageCdf::Table { ts, ladders } => {
                let at = |k: usize| {
                    ladders[k].invert_both(|p| p.hitting_laplace(self.x, y) / p.alpha()).0.clamp(0.0, 1.0)
                };
                if t <= ts[0] {
                    return at(0) * (t / ts[0]);
                }
                let k = ts.partition_point(|&s| s < t).min(ts.len() - 1);
                let (a, b) = (at(k - 1), at(k));
                let w = (t / ts[k - 1]).ln() / (ts[k] / ts[k - 1]).ln();
                (a + w * (b - a)).clamp(0.0, 1.0)
            }
        }
    }

    /// `ρ` given `γ = y`: the passage time `T_y` given `T_y < ∞`, by inverse cdf.
    pub fn sample_rho_given(&self, y: f64, rng: &mut Stream) -> f64 {
        let reach = self.gamma_cdf(y);
        let u: f64 = rng.random::<f64>() * reach;
        match &self.passage {
            PassageCdf::Drift(_) => {
                let mut hi = 1.0;
                while self.passage_cdf(hi, y) < u && hi < 1e12 {
                    hi *= 2.0;
                }
                bisect(|t| self.passage_cdf(t, y), u, 0.0, hi, 1e-12 * hi)
            }
            PassageCdf::Table { ts, .. } => {
                // monotone envelope of the tabulated cdf
                let mut prev = 0.0;
                let cdf: Vec<f64> = (0..ts.len())
                    .map(|k| {
                        prev = self.passage_cdf(ts[k], y).max(prev);
                        prev
                    })
                    .collect();
                let k = cdf.partition_point(|&c| c < u);
                if k == 0 {
                    return ts[0] * u / cdf[0].max(1e-300);
                }
                if k == ts.len() {
                    log::warn!("passage time beyond the tabulated range {TABLE_T_MAX}");
                    return ts[ts.len() - 1];
                }
                let w = (u - cdf[k - 1]) / (cdf[k] - cdf[k - 1]).max(1e-300);
                ts[k - 1] * (ts[k] / ts[k - 1]).powf(w)
            }
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> (f64, f64) {
        let gamma = self.sample_gamma(rng);
        let rho = self.sample_rho_given(gamma, rng);
        (gamma, rho)
    }
}

/// One draw of `(γ, ρ)` from a freshly built [`MinimumLaw`].
pub fn sample_minimum(spec: &DiffusionSpec, x: f64, rng: &mut Stream) -> Result<(f64, f64)> {
    Ok(MinimumLaw::new(spec, x)?.sample(rng))
}

/// Dynamics of `P^{x↓}_y`: drift `b + σ² r'/r`, absorbed at `y`. Since
/// `G r = 0` the transformed process is not killed.
pub fn conditioned_down_dynamics(spec: &DiffusionSpec, ruin: &RuinFunction, y: f64) -> Dynamics {
    let (s, r) = (spec.clone(), ruin.clone());
    Dynamics::from_spec(spec)
        .with_drift(coef(move |z| s.drift(z) + s.sigma(z).powi(2) * r.log_derivative(z)))
        .without_kill()
        .with_absorbing(Some(y), None)
        .with_window(f64::NEG_INFINITY, f64::INFINITY)
}

/// Path from `x` under `P^{x↓}_y`, ending at `y`.
pub fn sample_conditioned_down(
    spec: &DiffusionSpec,
    ruin: &RuinFunction,
    x: f64,
    y: f64,
    dt: f64,
    rng: &mut Stream,
) -> Result<Path> {
    if !(y < x) {
        return Err(Error::Domain(format!("conditioning on reaching y = {y} needs y < x = {x}")));
    }
    let dynamics = conditioned_down_dynamics(spec, ruin, y);
    let path = dynamics.sample_path(x, dt, CONDITIONED_HORIZON, rng)?;
    if !path.absorbed {
        return Err(Error::Domain(format!(
            "conditioned path from {x} did not reach {y} within {CONDITIONED_HORIZON} (exited: {})",
            path.exited
        )));
    }
    Ok(path)
}

/// Sampler of `P^↑_y`, the diffusion started at `y` and conditioned never to
/// come back.
#[derive(Clone)]
pub struct ConditionedUp {
    spec: DiffusionSpec,
    ruin: RuinFunction,
    y: f64,
    ln_ry: f64,
}

impl ConditionedUp {
    pub fn new(spec: &DiffusionSpec, ruin: &RuinFunction, y: f64) -> Result<Self> {
        if !ruin.is_transient() {
            return Err(Error::NotTransient("conditioning never to return needs r non-constant".into()));
        }
        Ok(ConditionedUp { spec: spec.clone(), ruin: ruin.clone(), y, ln_ry: ruin.ln_r(y) })
    }

    /// `r_y'/r_y` at `z > y`.
    pub fn h_log_derivative(&self, z: f64) -> f64 {
        let q = (self.ruin.ln_r(z) - self.ln_ry).exp();
        -self.ruin.log_derivative(z) * q / (1.0 - q)
    }

    /// Kill rate `c / r_y` of the transformed process.
    fn kill_rate(&self, z: f64) -> f64 {
        let c = self.spec.kill_rate(z);
        if c == 0.0 {
            0.0
        } else {
            c / -(self.ruin.ln_r(z) - self.ln_ry).exp_m1()
        }
    }

    /// Path on `[0, horizon]` from `y`, entering at `y + δ`. The singular
    /// part `σ²/(z − y)` of the drift is carried by a Bessel(3) radius step.
    pub fn sample(&self, delta: f64, dt: f64, horizon: f64, rng: &mut Stream) -> Result<Path> {
        if !(delta > 0.0 && dt > 0.0 && horizon > 0.0) {
            return Err(Error::Domain("entrance offset, step and horizon must be positive".into()));
        }
        let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil() as usize;
        let hi = self.spec.window().hi();
        let killing = !self.spec.is_conservative();
        let mut clock: f64 = if killing { Exp1.sample(rng) } else { f64::INFINITY };
        let mut values = Vec::with_capacity(steps + 1);
        values.push(self.y);
        let mut w = delta;
        let mut t = 0.0;
        let (mut killed, mut exited) = (false, false);
        for k in 0..steps {
            let span = if k + 1 == steps { horizon - t } else { dt };
            let z = self.y + w;
            let sig = self.spec.sigma(z);
            let s2 = sig * sig;
            let regular = self.spec.drift(z) + s2 * self.h_log_derivative(z) - s2 / w;
            let sd = sig * span.sqrt();
            let (z1, z2, z3): (f64, f64, f64) =
                (StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
            let radial = w + regular * span + sd * z1;
            w = (radial * radial + sd * sd * (z2 * z2 + z3 * z3)).sqrt();
            if killing {
                clock -= self.kill_rate(z) * span;
                if clock <= 0.0 {
                    killed = true;
                }
            }
            t += span;
            values.push(self.y + w);
            if killed {
                break;
            }
            if self.y + w > hi {
                exited = true;
                break;
            }
        }
        Ok(Path { t0: 0.0, dt, values, lifetime: t, absorbed: false, killed, exited })
    }
}

pub fn sample_conditioned_up(
    spec: &DiffusionSpec,
    ruin: &RuinFunction,
    y: f64,
    horizon: f64,
    dt: f64,
    rng: &mut Stream,
) -> Result<Path> {
    ConditionedUp::new(spec, ruin, y)?.sample(spec.window().h(), dt, horizon, rng)
}

/// The path split at its global minimum.
#[derive(Clone, Debug, Serialize)]
pub struct WilliamsSample {
    pub gamma: f64,
    pub rho: f64,
    /// Lifetime; infinite for a conservative diffusion.
    pub zeta: f64,
    pub pre: Path,
    pub post: Path,
    pub full: Path,
}

/// `γ` from [`MinimumLaw`], the pre-minimum path under `P^{x↓}_γ` and
/// `post_horizon` of the post-minimum path under `P^↑_γ`.
pub fn williams_sample(law: &MinimumLaw, dt: f64, post_horizon: f64, rng: &mut Stream) -> Result<WilliamsSample> {
    let spec = law.spec();
    let gamma = law.sample_gamma(rng);
    let pre = sample_conditioned_down(spec, law.ruin(), law.start(), gamma, dt, rng)?;
    let post = ConditionedUp::new(spec, law.ruin(), gamma)?.sample(spec.window().h(), dt, post_horizon, rng)?;
    let rho = pre.lifetime;
    let zeta = if post.killed { rho + post.lifetime } else if spec.is_conservative() { f64::INFINITY } else { f64::NAN };
    let full = pre.concat(&post);
    Ok(WilliamsSample { gamma, rho, zeta, pre, post, full })
}

/// Right side of the joint Laplace identity at `β = 0`:
/// `P^x(e^{−αρ}) = ∫ P^x(e^{−α T_y}) (−r'(y)/r(y)) dy`.
pub fn williams_laplace(spec: &DiffusionSpec, x: f64, alpha: f64) -> Result<f64> {
    let ruin = ruin_function(spec, x)?;
    let pair = solve_eigenfunctions(spec, alpha, spec.window())?;
    let lo = spec.window().lo();
    let f = |y: f64| pair.hitting_laplace(x, y) * (-ruin.log_derivative(y)).max(0.0);
    Ok(adaptive(f, lo, x, 1e-12, 1e-10))
}

/// Density of `(H_t, ρ_t, X_t)` at `(y, u, x)` with respect to `ds(y) du m(dx)`.
pub fn minimum_joint_density(spec: &DiffusionSpec, b: f64, t: f64, u: f64, y: f64, x: f64) -> Result<f64> {
    if !(u > 0.0 && u < t) {
        return Err(Error::Domain(format!("need 0 < u < t, got u = {u}, t = {t}")));
    }
    if !(y < b.min(x)) {
        return Err(Error::Domain(format!("need y < min(b, x), got y = {y}, b = {b}, x = {x}")));
    }
    let p = PassageDensity::new(spec);
    Ok(p.density(u, b, y)? * p.density(t - u, x, y)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeKind {
    /// From the floor up to the endpoint.
    Hat,
    /// From the endpoint down to the floor.
    Reversed,
}

/// Law of a path of duration `duration` between `floor` and `endpoint`,
/// staying above the floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BridgeLaw {
    pub kind: BridgeKind,
    pub floor: f64,
    pub duration: f64,
    pub endpoint: f64,
}

const BRIDGE_CELLS: usize = 256;
const BRIDGE_SPREAD: f64 = 10.0;
const BRIDGE_TOLERANCE: f64 = 1e-2;

/// Markov-chain bridge sampler on the time grid `k ℓ/n`, with transition
/// weights normalized per step on a local spatial grid. Endpoints are
/// pinned. Needs a Brownian preset, whose killed and passage densities are
/// closed forms.
pub fn sample_bridge(spec: &DiffusionSpec, law: &BridgeLaw, dt: f64, rng: &mut Stream) -> Result<Path> {
    let mu = spec.brownian_drift().ok_or_else(|| {
        Error::Unsupported("bridge sampling needs the closed-form kernels of a Brownian preset".into())
    })?;
    let BridgeLaw { kind, floor: y, duration: ell, endpoint: x } = *law;
    if !(ell > dt && dt > 0.0) {
        return Err(Error::Domain(format!("bridge duration {ell} must exceed the step {dt}")));
    }
    if !(x > y) {
        return Err(Error::Domain(format!("bridge endpoint {x} must lie above the floor {y}")));
    }
    let n = (ell / dt).round().max(2.0) as usize;
    let h = ell / n as f64;
    let m = |w: f64| 2.0 * (2.0 * mu * w).exp();
    let q = |s: f64, a: f64, b: f64| bm_killed_density(mu, s, a, b, y);
    let f = |s: f64, a: f64| bm_passage_density(mu, s, a, y);
    let mut values = Vec::with_capacity(n + 1);
    let (start, end) = match kind {
        BridgeKind::Hat => (y, x),
        BridgeKind::Reversed => (x, y),
    };
    values.push(start);
    let mut z = start;
    let mut cum = vec![0.0; BRIDGE_CELLS + 1];
    for k in 0..n - 1 {
        let (t0, t1) = (k as f64 * h, (k + 1) as f64 * h);
        let rest = ell - t1;
        let reach = BRIDGE_SPREAD * h.sqrt();
        let lo = (z - reach).max(y);
        let hi = z + reach;
        let cell = (hi - lo) / BRIDGE_CELLS as f64;
        let (weight, norm): (Box<dyn Fn(f64) -> f64>, f64) = match kind {
            BridgeKind::Hat if k == 0 => (Box::new(move |w| f(h, w) * q(rest, w, x) * m(w)), f(ell, x)),
            BridgeKind::Hat => (Box::new(move |w| q(h, z, w) * q(rest, w, x) * m(w)), q(ell - t0, z, x)),
            BridgeKind::Reversed => (Box::new(move |w| q(h, z, w) * f(rest, w) * m(w)), f(ell - t0, z)),
        };
        for j in 0..BRIDGE_CELLS {
            let w = lo + (j as f64 + 0.5) * cell;
            cum[j + 1] = cum[j] + weight(w) * cell;
        }
        let total = cum[BRIDGE_CELLS];
        if norm > 1e-250 && norm.is_finite() {
            let deviation = (total / norm - 1.0).abs();
            if deviation > BRIDGE_TOLERANCE {
                return Err(Error::BridgeNormalization { t: t1, deviation });
            }
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::BridgeNormalization { t: t1, deviation: 1.0 });
        }
        let target = rng.random::<f64>() * total;
        let j = cum.partition_point(|&c| c <= target).clamp(1, BRIDGE_CELLS) - 1;
        let frac = (target - cum[j]) / (cum[j + 1] - cum[j]).max(1e-300);
        z = lo + (j as f64 + frac.clamp(0.0, 1.0)) * cell;
        values.push(z);
    }
    values.push(end);
    Ok(Path { t0: 0.0, dt: h, values, lifetime: ell, absorbed: kind == BridgeKind::Reversed, killed: false, exited: false })
}

/// Marginal density of the hat bridge at time `t` with respect to `dz`:
/// `f(t; z, y) q^y(ℓ − t; z, x) m'(z) / f(ℓ; x, y)`, Brownian presets only.
pub fn hat_bridge_marginal(mu: f64, law: &BridgeLaw, t: f64, z: f64) -> f64 {
    let BridgeLaw { floor: y, duration: ell, endpoint: x, .. } = *law;
    if z <= y {
        return 0.0;
    }
    bm_passage_density(mu, t, z, y) * bm_killed_density(mu, ell - t, z, x, y) * 2.0 * (2.0 * mu * z).exp()
        / bm_passage_density(mu, ell, x, y)
}

/// Bin edges for the triple histogram, in units of `√t` for levels and `t`
/// for times. Levels use half-normal quartiles, times arcsine quartiles and
/// the endpoint normal quartiles.
fn local_edges(b: f64, t: f64) -> [Vec<f64>; 3] {
    let st = t.sqrt();
    let q = [0.318_639, 0.674_490, 1.150_349];
    let h_edges = vec![f64::NEG_INFINITY, b - q[2] * st, b - q[1] * st, b - q[0] * st, b];
    let u_edges = vec![0.0, 0.146_447 * t, 0.5 * t, 0.853_553 * t, t];
    let x_edges = vec![f64::NEG_INFINITY, b - q[1] * st, b, b + q[1] * st, f64::INFINITY];
    [h_edges, u_edges, x_edges]
}

/// Report of [`verify_local_decomposition`].
#[derive(Clone, Debug, Serialize)]
pub struct LocalReport {
    pub n: usize,
    pub dt: f64,
    pub t: f64,
    pub start: f64,
    pub triple: GofReport,
    pub expected_total: f64,
    pub min_marginal: GofReport,
    pub argmin_marginal: GofReport,
    /// Pre- and post-minimum midpoint laws against the bridge samplers, for
    /// paths whose triple falls in the central bin. `None` when undersampled.
    pub pre_bridge: Option<GofReport>,
    pub post_bridge: Option<GofReport>,
    pub bin_count: usize,
}

impl LocalReport {
    pub fn passes(&self, level: f64) -> bool {
        self.triple.passes(level) && self.min_marginal.passes(level) && self.argmin_marginal.passes(level)
    }
}

/// Probability that `(H_t, ρ_t, X_t)` falls in the box `[y0,y1] × [u0,u1] × [x0,x1]`.
fn triple_cell(spec: &DiffusionSpec, b: f64, t: f64, ys: (f64, f64), us: (f64, f64), xs: (f64, f64)) -> Result<f64> {
    let mu = spec
        .brownian_drift()
        .ok_or_else(|| Error::Unsupported("triple histogram needs a Brownian preset".into()))?;
    let st = t.sqrt();
    let floor = b - 12.0 * st - mu.abs() * t;
    let ceil = b + 12.0 * st + mu.abs() * t;
    let y_lo = ys.0.max(floor);
    let tol = 1e-11;
    let inner_x = |u: f64, y: f64| {
        let lo = xs.0.max(y);
        let hi = xs.1.min(ceil);
        if hi <= lo {
            return 0.0;
        }
        adaptive(|x| bm_passage_density(mu, t - u, x, y) * 2.0 * (2.0 * mu * x).exp(), lo, hi, tol, 1e-9)
    };
    let over_u = |y: f64| {
        let sp = (-2.0 * mu * y).exp();
        adaptive(|u| if u <= 0.0 || u >= t { 0.0 } else { bm_passage_density(mu, u, b, y) * inner_x(u, y) }, us.0, us.1, tol, 1e-9) * sp
    };
    if ys.1 <= y_lo {
        return Ok(0.0);
    }
    Ok(adaptive(over_u, y_lo, ys.1, tol, 1e-8))
}

/// Density of `ρ_t` for Brownian motion with drift `μ`, in `θ` with
/// `u = t sin²θ`: the new-minimum rate at `u` times `n↑(ζ > t − u)`.
fn argmin_density_theta(mu: f64, t: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let st = t.sqrt();
    let pre = crate::num::norm_pdf(mu * st * s) / st - mu * s * norm_cdf(-mu * st * s);
    let post = crate::num::norm_pdf(mu * st * c) / st + mu * c * norm_cdf(mu * st * c);
    4.0 * t * pre * post
}

/// Local decomposition check at time `t` from `b`: triple histogram, the
/// `H_t` and `ρ_t` marginals, and the conditional pre/post laws against the
/// bridge samplers.
pub fn verify_local_decomposition(spec: &DiffusionSpec, b: f64, t: f64, n: usize, dt: f64, seed: u64) -> Result<LocalReport> {
    let mu = spec
        .brownian_drift()
        .ok_or_else(|| Error::Unsupported("local decomposition check needs a Brownian preset".into()))?;
    let dynamics = Dynamics::from_spec(spec);
    let traces = par_samples(n, seed, |_, rng| dynamics.track_minimum(b, dt, t, f64::INFINITY, rng));
    let [h_edges, u_edges, x_edges] = local_edges(b, t);
    let bin = |edges: &[f64], v: f64| edges.partition_point(|&e| e <= v).clamp(1, edges.len() - 1) - 1;
    let mut counts = vec![0.0; 64];
    for tr in &traces {
        let i = bin(&h_edges, tr.min) * 16 + bin(&u_edges, tr.argmin) * 4 + bin(&x_edges, tr.end);
        counts[i] += 1.0;
    }
    let mut probs = vec![0.0; 64];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                probs[i * 16 + j * 4 + k] = triple_cell(
                    spec,
                    b,
                    t,
                    (h_edges[i], h_edges[i + 1]),
                    (u_edges[j], u_edges[j + 1]),
                    (x_edges[k], x_edges[k + 1]),
                )?;
            }
        }
    }
    let expected_total: f64 = probs.iter().sum();
    let expected: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let triple = chi2_test(&counts, &expected)?;

    let mins = EmpiricalLaw::new(traces.iter().map(|tr| tr.min).collect());
    let min_marginal = ks_test(&mins, |y| if y >= b { 1.0 } else { crate::densities::bm_hitting_cdf(mu, t, b, y) })?;
    let argmins = EmpiricalLaw::new(traces.iter().map(|tr| tr.argmin).collect());
    let argmin_marginal = if mu == 0.0 {
        ks_test(&argmins, |u| 2.0 / std::f64::consts::PI * (u / t).clamp(0.0, 1.0).sqrt().asin())?
    } else {
        let half_pi = std::f64::consts::FRAC_PI_2;
        let thetas: Vec<f64> = (0..=400).map(|i| half_pi * i as f64 / 400.0).collect();
        let grid: Vec<f64> = thetas.iter().map(|th| t * th.sin().powi(2)).collect();
        let mut cdf = vec![0.0];
        for w in thetas.windows(2) {
            let v = adaptive(|th| argmin_density_theta(mu, t, th), w[0], w[1], 1e-13, 1e-9);
            cdf.push(cdf.last().unwrap() + v);
        }
        let total = *cdf.last().unwrap();
        ks_test(&argmins, |u| crate::num::interp_linear(&grid, &cdf, u.clamp(0.0, t)) / total)?
    };

    // conditional laws in the central bin, from grid paths
    let st = t.sqrt();
    let (yc, uc, xc) = (b - 0.674_49 * st, 0.5 * t, b);
    let in_bin = |y: f64, u: f64, x: f64| (y - yc).abs() < 0.2 * st && (u - uc).abs() < 0.15 * t && (x - xc).abs() < 0.3 * st;
    let picked: Vec<(f64, f64, f64, f64, f64)> = par_samples(n, crate::rng::derive_seed(seed, 1), |_, rng| {
        let p = dynamics.sample_path(b, dt, t, rng).ok()?;
        let m = crate::pathsim::running_minimum(&p, |v| v);
        let (y, u, x) = (m.min(), m.rho, p.last());
        (in_bin(y, u, x) && u > 2.0 * dt && t - u > 2.0 * dt).then(|| (y, u, x, p.value_at(0.5 * u), p.value_at(0.5 * (t + u))))
    })
    .into_iter()
    .flatten()
    .collect();
    let bin_count = picked.len();
    let (pre_bridge, post_bridge) = if bin_count >= 200 {
        let used = &picked[..bin_count.min(2000)];
        let bridges: Vec<(f64, f64)> = par_samples(used.len(), crate::rng::derive_seed(seed, 2), |i, rng| {
            let (y, u, x, _, _) = used[i];
            let steps = 40.0;
            let pre = sample_bridge(spec, &BridgeLaw { kind: BridgeKind::Reversed, floor: y, duration: u, endpoint: b }, u / steps, rng);
            let post =
                sample_bridge(spec, &BridgeLaw { kind: BridgeKind::Hat, floor: y, duration: t - u, endpoint: x }, (t - u) / steps, rng);
            match (pre, post) {
                (Ok(a), Ok(c)) => (a.values[a.len() / 2], c.values[c.len() / 2]),
                _ => (f64::NAN, f64::NAN),
            }
        });
        let path_pre = EmpiricalLaw::new(used.iter().map(|p| p.3).collect());
        let path_post = EmpiricalLaw::new(used.iter().map(|p| p.4).collect());
        let br_pre = EmpiricalLaw::new(bridges.iter().map(|p| p.0).filter(|v| v.is_finite()).collect());
        let br_post = EmpiricalLaw::new(bridges.iter().map(|p| p.1).filter(|v| v.is_finite()).collect());
        (ks2_test(&path_pre, &br_pre).ok(), ks2_test(&path_post, &br_post).ok())
    } else {
        log::info!("central bin holds only {bin_count} paths; conditional checks skipped");
        (None, None)
    };
    Ok(LocalReport {
        n,
        dt,
        t,
        start: b,
        triple,
        expected_total,
        min_marginal,
        argmin_marginal,
        pre_bridge,
        post_bridge,
        bin_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::spec::{Form, Interval, Preset, SpecBuilder};
    use crate::stats::Welford;
    use approx::assert_relative_eq;

    #[test]
    fn argmin_density_is_a_probability_density() {
        let half_pi = std::f64::consts::FRAC_PI_2;
        // arcsine law without drift: uniform in θ
        for th in [0.1, 0.7, 1.3] {
            assert_relative_eq!(argmin_density_theta(0.0, 2.0, th), 1.0 / half_pi, max_relative = 1e-12);
        }
        for mu in [0.5, -0.8, 2.0] {
            let total = adaptive(|th| argmin_density_theta(mu, 1.5, th), 0.0, half_pi, 1e-13, 1e-11);
            assert_relative_eq!(total, 1.0, max_relative = 1e-9);
        }
    }

    fn drift() -> DiffusionSpec {
        Preset::BmDrift { mu: 0.5 }.build().unwrap()
    }

    #[test]
    fn minimum_of_drifting_brownian_motion_is_exponential() {
        let law = MinimumLaw::new(&drift(), 0.0).unwrap();
        let draws = par_samples(10_000, 3, |_, rng| law.sample(rng));
        assert!(draws.iter().all(|&(g, r)| g <= 0.0 && r >= 0.0));
        let g = EmpiricalLaw::new(draws.iter().map(|d| -d.0).collect());
        assert!(ks_test(&g, |v| 1.0 - (-v.max(0.0)).exp()).unwrap().p_value > 0.01);
    }

    #[test]
    fn numeric_ruin_function_gives_the_same_minimum_law() {
        let spec = SpecBuilder::new(Form::sde(|_| 0.5, |_| 1.0), Interval::real_line()).window(-15.0, 15.0).build().unwrap();
        let law = MinimumLaw::new(&spec, 0.0).unwrap();
        for y in [-0.5, -2.0, -5.0] {
            assert_relative_eq!(law.gamma_cdf(y), y.exp(), max_relative = 1e-5);
        }
        assert_relative_eq!(law.passage_cdf(1.0, -1.0), crate::densities::bm_hitting_cdf(0.5, 1.0, 0.0, -1.0), max_relative = 5e-3);
        let mut rng = stream(2, 0);
        let g: Vec<f64> = (0..2000).map(|_| -law.sample_gamma(&mut rng)).collect();
        assert!(ks_test(&EmpiricalLaw::new(g), |v| 1.0 - (-v.max(0.0)).exp()).unwrap().p_value > 0.01);
    }

    #[test]
    fn recurrent_and_reachable_ends_are_rejected() {
        assert!(matches!(MinimumLaw::new(&Preset::Brownian.build().unwrap(), 0.0), Err(Error::NotTransient(_))));
        assert!(MinimumLaw::new(&Preset::BrownianAbsorbed.build().unwrap(), 1.0).is_err());
    }

    #[test]
    fn conditioned_down_lifetime_laplace() {
        let spec = drift();
        let ruin = ruin_function(&spec, 1.0).unwrap();
        let ends: Vec<(f64, f64, f64)> = par_samples(20_000, 11, |_, rng| {
            let p = sample_conditioned_down(&spec, &ruin, 1.0, 0.0, 1e-2, rng).unwrap();
            (p.last(), p.values.iter().copied().fold(f64::INFINITY, f64::min), (-p.lifetime).exp())
        });
        assert!(ends.iter().all(|e| e.0 == 0.0 && e.1 == 0.0));
        let w: Welford = ends.iter().map(|e| e.2).collect();
        // P^1(e^{−T_0}) / P^1(T_0 < ∞) = e^{−2} / e^{−1}
        assert!((w.mean() - (-1.0f64).exp()).abs() < 4.0 * w.se(), "{} ± {}", w.mean(), w.se());
    }

    #[test]
    fn conditioned_up_drift_and_positivity() {
        let spec = drift();
        let ruin = ruin_function(&spec, 0.0).unwrap();
        let up = ConditionedUp::new(&spec, &ruin, 0.0).unwrap();
        // h-drift μ coth(μ w)
        for w in [0.05, 0.5, 3.0] {
            let got = spec.drift(w) + up.h_log_derivative(w);
            assert_relative_eq!(got, 0.5 / (0.5 * w).tanh(), max_relative = 1e-4);
        }
        let rates: Vec<f64> = par_samples(2000, 5, |_, rng| {
            let p = up.sample(spec.window().h(), 1e-2, 8.0, rng).unwrap();
            assert!(p.values[1..].iter().all(|&v| v > 0.0));
            (p.last() - p.value_at(4.0)) / 4.0
        });
        let w: Welford = rates.into_iter().collect();
        assert!((w.mean() - 0.5).abs() < 3.0 * w.se() + 0.01, "{}", w.mean());
    }

    #[test]
    fn williams_pieces_fit_together() {
        let law = MinimumLaw::new(&drift(), 0.0).unwrap();
        for i in 0..100 {
            let s = williams_sample(&law, 1e-2, 2.0, &mut stream(6, i)).unwrap();
            assert_eq!(s.pre.last(), s.gamma);
            assert_eq!(s.post.first(), s.gamma);
            let attained = s.full.values.iter().filter(|&&v| v == s.gamma).count();
            assert_eq!(attained, 1);
            assert!(s.full.values.iter().all(|&v| v >= s.gamma));
            assert_eq!(s.rho, s.pre.lifetime);
            assert!(s.zeta.is_infinite());
        }
    }

    #[test]
    fn joint_laplace_oracle() {
        // ∫ e^{−2(x−y)} dy = 1/2 for drift 1/2 and α = 1
        assert_relative_eq!(williams_laplace(&drift(), 0.0, 1.0).unwrap(), 0.5, max_relative = 1e-5);
    }

    #[test]
    fn joint_density_example() {
        let spec = Preset::Brownian.build().unwrap();
        let d = minimum_joint_density(&spec, 0.0, 1.0, 0.5, -1.0, 0.0).unwrap();
        assert_relative_eq!(d, 0.17232, max_relative = 1e-4);
        let a = minimum_joint_density(&spec, 0.3, 1.0, 0.5, -0.6, 1.1).unwrap();
        let b = minimum_joint_density(&spec, 1.1, 1.0, 0.5, -0.6, 0.3).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert!(minimum_joint_density(&spec, 0.0, 1.0, 0.5, 0.2, 1.0).is_err());
    }

    #[test]
    fn joint_density_integrates_to_one() {
        let spec = Preset::Brownian.build().unwrap();
        let total = triple_cell(&spec, 0.0, 1.0, (f64::NEG_INFINITY, 0.0), (0.0, 1.0), (f64::NEG_INFINITY, f64::INFINITY)).unwrap();
        assert!((total - 1.0).abs() < 2e-2, "{total}");
    }

    #[test]
    fn hat_bridge_endpoints_and_midpoint() {
        let spec = Preset::Brownian.build().unwrap();
        let law = BridgeLaw { kind: BridgeKind::Hat, floor: 0.0, duration: 1.0, endpoint: 0.5 };
        let paths = par_samples(3000, 7, |_, rng| sample_bridge(&spec, &law, 0.05, rng).unwrap());
        assert!(paths.iter().all(|p| p.first() == 0.0 && p.last() == 0.5 && p.values[1..].iter().all(|&v| v > 0.0)));
        let mids = EmpiricalLaw::new(paths.iter().map(|p| p.values[10]).collect());
        let cdf = |z: f64| adaptive(|w| hat_bridge_marginal(0.0, &law, 0.5, w), 0.0, z.max(0.0), 1e-12, 1e-10);
        assert!(ks_test(&mids, cdf).unwrap().p_value > 0.01);
        let bad = BridgeLaw { endpoint: 0.0, ..law };
        assert!(sample_bridge(&spec, &bad, 0.05, &mut stream(0, 0)).is_err());
    }

    #[test]
    fn reversed_bridge_is_the_time_reversed_hat_bridge() {
        let spec = Preset::Brownian.build().unwrap();
        let hat = BridgeLaw { kind: BridgeKind::Hat, floor: 0.0, duration: 1.0, endpoint: 0.8 };
        let rev = BridgeLaw { kind: BridgeKind::Reversed, ..hat };
        let a = par_samples(3000, 8, |_, rng| sample_bridge(&spec, &hat, 0.05, rng).unwrap().reversed().values[5]);
        let b = par_samples(3000, 9, |_, rng| {
            let p = sample_bridge(&spec, &rev, 0.05, rng).unwrap();
            assert_eq!((p.first(), p.last()), (0.8, 0.0));
            p.values[5]
        });
        assert!(ks2_test(&EmpiricalLaw::new(a), &EmpiricalLaw::new(b)).unwrap().p_value > 0.01);
    }
}
