//! Path simulation, the running minimum and excursions above it.
//!
//! Paths are Euler–Maruyama with an exponential kill clock. For constant
//! coefficients (the Brownian presets) the Euler step is the exact Gaussian
//! increment. Crossing an absorbing boundary or the working window stops
//! the path at the linearly interpolated crossing time.
//!
//! [`Dynamics::track_minimum`] follows the running minimum between grid
//! times as well: inside each step the path is treated as a Brownian bridge
//! and refined by midpoint sampling wherever the bridge may dip below the
//! current minimum. The discrete minimum of a grid path overestimates the
//! true minimum by about `0.58 σ √dt`; the refined tracker does not.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::spec::{coef, Coef, DiffusionSpec};

/// Coefficients and stopping rules for the simulator.
#[derive(Clone)]
pub struct Dynamics {
    drift: Coef,
    sigma: Coef,
    kill: Option<Coef>,
    absorb_lo: Option<f64>,
    absorb_hi: Option<f64>,
    window: (f64, f64),
}

impl std::fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dynamics")
            .field("killing", &self.kill.is_some())
            .field("absorb_lo", &self.absorb_lo)
            .field("absorb_hi", &self.absorb_hi)
            .field("window", &self.window)
            .finish()
    }
}

/// Why a path stopped before its horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stop {
    Horizon,
    Absorbed,
    Killed,
    Exited,
}

impl Dynamics {
    /// `dX = b dt + σ dW` with no killing, no absorption and an unbounded window.
    pub fn new(drift: Coef, sigma: Coef) -> Self {
        Dynamics { drift, sigma, kill: None, absorb_lo: None, absorb_hi: None, window: (f64::NEG_INFINITY, f64::INFINITY) }
    }

    pub fn from_spec(spec: &DiffusionSpec) -> Self {
        let iv = spec.interval();
        let w = spec.window();
        Dynamics {
            drift: spec.drift_coef(),
            sigma: spec.sigma_coef(),
            kill: (!spec.is_conservative()).then(|| {
                let s = spec.clone();
                coef(move |x| s.kill_rate(x))
            }),
            absorb_lo: (iv.lower_absorbing() && iv.lower().is_finite()).then(|| iv.lower()),
            absorb_hi: (iv.upper_absorbing() && iv.upper().is_finite()).then(|| iv.upper()),
            window: (w.lo(), w.hi()),
        }
    }

    pub fn with_kill(mut self, c: Coef) -> Self {
        self.kill = Some(c);
        self
    }

    pub fn without_kill(mut self) -> Self {
        self.kill = None;
        self
    }

    pub fn with_absorbing(mut self, lower: Option<f64>, upper: Option<f64>) -> Self {
        self.absorb_lo = lower;
        self.absorb_hi = upper;
        self
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = (lo, hi);
        self
    }

    /// Same noise, different drift: used for h-transforms.
    pub fn with_drift(mut self, drift: Coef) -> Self {
        self.drift = drift;
        self
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    /// Steps from `x0` until `horizon` or a stop, calling
    /// `visit(t, span, a, b, rng)` after every completed step. `visit`
    /// returns `true` to stop early. Returns the stop time, the last value
    /// and the reason.
    fn walk(
        &self,
        x0: f64,
        dt: f64,
        horizon: f64,
        rng: &mut Stream,
        mut visit: impl FnMut(f64, f64, f64, f64, &mut Stream) -> bool,
    ) -> (f64, f64, Stop) {
        let steps = step_count(horizon, dt);
        let mut clock: f64 = if self.kill.is_some() { Exp1.sample(rng) } else { f64::INFINITY };
        let mut x = x0;
        let mut t = 0.0;
        for k in 0..steps {
            let span = if k + 1 == steps { horizon - t } else { dt };
            let z: f64 = StandardNormal.sample(rng);
            let mut next = x + self.drift(x) * span + self.sigma(x) * span.sqrt() * z;
            let mut frac = 1.0;
            let mut stop = Stop::Horizon;
            let crossing = |bound: f64| (x - bound) / (x - next);
            if let Some(lo) = self.absorb_lo.filter(|&lo| next <= lo) {
                frac = crossing(lo);
                next = lo;
                stop = Stop::Absorbed;
            } else if let Some(hi) = self.absorb_hi.filter(|&hi| next >= hi) {
                frac = crossing(hi);
                next = hi;
                stop = Stop::Absorbed;
            } else if let Some((tau, bound)) = self.bridge_absorption(rng, x, next, t, span) {
                frac = (tau - t) / span;
                next = bound;
                stop = Stop::Absorbed;
            } else if next < self.window.0 || next > self.window.1 || !next.is_finite() {
                let edge = if next < self.window.0 { self.window.0 } else { self.window.1 };
                frac = if next.is_finite() { crossing(edge) } else { 0.0 };
                next = if next.is_finite() { edge } else { x };
                stop = Stop::Exited;
                log::debug!("path left the window [{}, {}] at t = {}", self.window.0, self.window.1, t + frac * span);
            }
            if let Some(c) = &self.kill {
                let rate = c(x);
                if rate * span * frac >= clock {
                    let f = clock / (rate * span);
                    next = x + (next - x) * f / frac;
                    frac = f;
                    stop = Stop::Killed;
                } else {
                    clock -= rate * span * frac;
                }
            }
            let done = visit(t, span * frac, x, next, rng);
            t += span * frac;
            x = next;
            if stop != Stop::Horizon {
                return (t, x, stop);
            }
            if done {
                return (t, x, Stop::Horizon);
            }
        }
        (horizon, x, Stop::Horizon)
    }

    /// Time at which the Brownian bridge from `a` to `b` over the step
    /// crosses an absorbing boundary that both endpoints avoid, and that boundary.
    fn bridge_absorption(&self, rng: &mut Stream, a: f64, b: f64, t: f64, span: f64) -> Option<(f64, f64)> {
        if self.absorb_lo.is_none() && self.absorb_hi.is_none() {
            return None;
        }
        let s2 = self.sigma(a).powi(2);
        let mut hit = None;
        if let Some(lo) = self.absorb_lo {
            let mut floor = lo;
            dip(rng, a, b, t, span, s2, &mut floor, 0, &mut |tau, _, _| {
                hit = Some((tau, lo));
                true
            });
        }
        if let Some(hi) = self.absorb_hi {
            // mirror image: a dip of −X below −hi
            let mut floor = -hi;
            let mut up = None;
            dip(rng, -a, -b, t, span, s2, &mut floor, 0, &mut |tau, _, _| {
                up = Some((tau, hi));
                true
            });
            hit = match (hit, up) {
                (Some(l), Some(u)) => Some(if l.0 <= u.0 { l } else { u }),
                (l, u) => l.or(u),
            };
        }
        hit
    }

    pub fn sample_path(&self, x0: f64, dt: f64, horizon: f64, rng: &mut Stream) -> Result<Path> {
        check_step(dt, horizon)?;
        let mut values = Vec::with_capacity(step_count(horizon, dt) + 1);
        values.push(x0);
        let (lifetime, _, stop) = self.walk(x0, dt, horizon, rng, |_, _, _, b, _| {
            values.push(b);
            false
        });
        Ok(Path {
            t0: 0.0,
            dt,
            values,
            lifetime,
            absorbed: stop == Stop::Absorbed,
            killed: stop == Stop::Killed,
            exited: stop == Stop::Exited,
        })
    }

    /// Running minimum, its location and the excursions above it lasting at
    /// least `eps`, with the minimum followed between grid times.
    pub fn track_minimum(&self, x0: f64, dt: f64, horizon: f64, eps: f64, rng: &mut Stream) -> MinimumTrace {
        let mut floor = x0;
        let mut since = 0.0;
        let mut peak = x0;
        let mut spans = Vec::new();
        let (lifetime, end, stop) = self.walk(x0, dt, horizon, rng, |t, span, a, b, rng| {
            let s2 = self.sigma(a).powi(2);
            let before = since;
            dip(rng, a, b, t, span, s2, &mut floor, 0, &mut |tau, old, new| {
                if tau - since >= eps {
                    let height = peak.max(a) - old;
                    spans.push(ExcursionSpan { u: since, level: old, duration: tau - since, height, censored: false });
                }
                since = tau;
                peak = new;
                false
            });
            if since == before {
                peak = peak.max(bridge_max(rng, a, b, span, s2, peak));
            }
            peak = peak.max(b);
            false
        });
        if lifetime - since >= eps {
            spans.push(ExcursionSpan { u: since, level: floor, duration: lifetime - since, height: peak - floor, censored: true });
        }
        MinimumTrace {
            min: floor,
            argmin: since,
            end,
            lifetime,
            horizon,
            absorbed: stop == Stop::Absorbed,
            killed: stop == Stop::Killed,
            exited: stop == Stop::Exited,
            excursions: spans,
        }
    }

    /// First time the path is at or below `y`, followed between grid times
    /// like the tracker. `None` when the path stops first.
    pub fn first_passage_below(&self, x0: f64, y: f64, dt: f64, horizon: f64, rng: &mut Stream) -> Option<f64> {
        if x0 <= y {
            return Some(0.0);
        }
        let mut hit = None;
        let mut floor = y;
        self.walk(x0, dt, horizon, rng, |t, span, a, b, rng| {
            let s2 = self.sigma(a).powi(2);
            dip(rng, a, b, t, span, s2, &mut floor, 0, &mut |tau, _, _| {
                hit = Some(tau);
                true
            })
        });
        hit
    }
}

const PRUNE_EXPONENT: f64 = 20.0;

/// Maximum of the Brownian bridge from `a` to `b` over `span`, or `a` when
/// it cannot plausibly exceed `level`.
fn bridge_max(rng: &mut Stream, a: f64, b: f64, span: f64, s2: f64, level: f64) -> f64 {
    if a < level && b < level && 2.0 * (level - a) * (level - b) > PRUNE_EXPONENT * s2 * span {
        return a;
    }
    let u: f64 = rng.random();
    0.5 * (a + b + ((a - b).powi(2) - 2.0 * s2 * span * (1.0 - u).ln()).sqrt())
}
const MAX_DEPTH: u32 = 6;

/// Brownian-bridge refinement of one step from `a` to `b`. Calls
/// `hit(time, old_floor, new_floor)` whenever the bridge sets a new minimum
/// below `floor`, in time order; stops early when `hit` returns `true`.
#[allow(clippy::too_many_arguments)]
fn dip(
    rng: &mut Stream,
    a: f64,
    b: f64,
    t0: f64,
    span: f64,
    s2: f64,
    floor: &mut f64,
    depth: u32,
    hit: &mut dyn FnMut(f64, f64, f64) -> bool,
) -> bool {
    if span <= 0.0 {
        return false;
    }
    // P(bridge min < floor) = exp(−2(a−f)(b−f)/(σ²Δ))
    if b > *floor && 2.0 * (a - *floor) * (b - *floor) > PRUNE_EXPONENT * s2 * span {
        return false;
    }
    if depth == MAX_DEPTH {
        let u: f64 = rng.random();
        let m = 0.5 * (a + b - ((a - b).powi(2) - 2.0 * s2 * span * (1.0 - u).ln()).sqrt());
        if m < *floor {
            let old = *floor;
            *floor = m;
            return hit(t0 + 0.5 * span, old, m);
        }
        return false;
    }
    let z: f64 = StandardNormal.sample(rng);
    let mid = 0.5 * (a + b) + (0.25 * s2 * span).sqrt() * z;
    let half = 0.5 * span;
    dip(rng, a, mid, t0, half, s2, floor, depth + 1, hit) || dip(rng, mid, b, t0 + half, half, s2, floor, depth + 1, hit)
}

fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn check_step(dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive and finite, got {horizon}")));
    }
    Ok(())
}

/// A sampled path on the grid `t0 + k dt`. The last step may be shorter:
/// it ends at `lifetime`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub lifetime: f64,
    pub absorbed: bool,
    pub killed: bool,
    /// Left the working window; the path is cut at the exit.
    pub exited: bool,
}

impl Path {
    /// A path from given values on a uniform grid, ending at the last value.
    pub fn from_values(values: Vec<f64>, dt: f64) -> Path {
        let lifetime = (values.len().saturating_sub(1)) as f64 * dt;
        Path { t0: 0.0, dt, values, lifetime, absorbed: false, killed: false, exited: false }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.values.len() {
            self.lifetime
        } else {
            self.t0 + i as f64 * self.dt
        }
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("empty path")
    }

    /// Linear interpolation at time `t`, clamped to the path's span.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 1 || t <= self.t0 {
            return self.values[0];
        }
        if t >= self.lifetime {
            return self.last();
        }
        let i = (((t - self.t0) / self.dt).floor() as usize).min(n - 2);
        let (ta, tb) = (self.time(i), self.time(i + 1));
        let w = if tb > ta { (t - ta) / (tb - ta) } else { 0.0 };
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Values in reverse time order, on the same grid when the last step is full.
    pub fn reversed(&self) -> Path {
        let mut values = self.values.clone();
        values.reverse();
        Path { values, ..self.clone() }
    }

    /// The path followed by `next`, whose start is dropped.
    pub fn concat(&self, next: &Path) -> Path {
        let mut values = self.values.clone();
        values.extend_from_slice(&next.values[1..]);
        Path {
            t0: self.t0,
            dt: self.dt,
            values,
            lifetime: self.lifetime + next.lifetime - next.t0,
            absorbed: next.absorbed,
            killed: next.killed,
            exited: self.exited || next.exited,
        }
    }
}

pub fn sample_path(spec: &DiffusionSpec, x0: f64, dt: f64, horizon: f64, rng: &mut Stream) -> Result<Path> {
    let w = spec.window();
    if !(x0 >= w.lo() && x0 <= w.hi()) {
        return Err(Error::Domain(format!("start {x0} outside the window [{}, {}]", w.lo(), w.hi())));
    }
    Dynamics::from_spec(spec).sample_path(x0, dt, horizon, rng)
}

/// Euler path from explicit coefficients; `σ` may vanish.
pub fn sample_sde_path(drift: Coef, sigma: Coef, x0: f64, dt: f64, horizon: f64, rng: &mut Stream) -> Result<Path> {
    Dynamics::new(drift, sigma).sample_path(x0, dt, horizon, rng)
}

/// Running minimum `H`, the additive functional `C_t = s(H_0) − s(H_t)`
/// and the argmin `ρ_t` at the path horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinFunctional {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub rho: f64,
}

impl MinFunctional {
    pub fn min(&self) -> f64 {
        *self.h.last().expect("empty path")
    }
}

/// Ties in the argmin go to the earliest index.
pub fn running_minimum(path: &Path, scale: impl Fn(f64) -> f64) -> MinFunctional {
    assert!(!path.is_empty(), "running minimum of an empty path");
    let mut h = Vec::with_capacity(path.len());
    let mut arg = 0;
    let mut cur = path.values[0];
    for (i, &x) in path.values.iter().enumerate() {
        if x < cur {
            cur = x;
            arg = i;
        }
        h.push(cur);
    }
    let s0 = scale(h[0]);
    let mut c: Vec<f64> = h.iter().map(|&y| s0 - scale(y)).collect();
    // guard against a non-monotone float scale
    for i in 1..c.len() {
        c[i] = c[i].max(c[i - 1]);
    }
    MinFunctional { h, c, rho: path.time(arg) }
}

/// One excursion of the path above its running minimum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExcursionRecord {
    pub u: f64,
    pub level: f64,
    pub duration: f64,
    /// Still running when the path stopped.
    pub censored: bool,
    pub fragment: Path,
}

/// Excursions above the running minimum lasting at least `eps`, in time
/// order. An excursion starts at the last grid time where the path equals
/// its running minimum and ends at the next time it is at or below it.
pub fn extract_excursions(path: &Path, eps: f64) -> Result<Vec<ExcursionRecord>> {
    if eps < path.dt * (1.0 - 1e-12) {
        return Err(Error::Domain(format!("excursion threshold {eps} below the time step {}", path.dt)));
    }
    let v = &path.values;
    let mut out = Vec::new();
    let mut start = 0;
    let mut level = v[0];
    let close = |start: usize, end: usize, censored: bool, level: f64, out: &mut Vec<ExcursionRecord>| {
        let (u, t_end) = (path.time(start), path.time(end));
        if end > start + 1 || (censored && end > start) {
            let duration = t_end - u;
            if duration >= eps * (1.0 - 1e-12) {
                let mut frag = Path::from_values(v[start..=end].to_vec(), path.dt);
                frag.t0 = 0.0;
                frag.lifetime = duration;
                frag.absorbed = censored && path.absorbed;
                frag.killed = censored && path.killed;
                frag.exited = censored && path.exited;
                out.push(ExcursionRecord { u, level, duration, censored, fragment: frag });
            }
        }
    };
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x <= level {
            close(start, i, false, level, &mut out);
            start = i;
            level = x;
        }
    }
    close(start, v.len() - 1, true, level, &mut out);
    Ok(out)
}

/// Result of [`Dynamics::track_minimum`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinimumTrace {
    pub min: f64,
    pub argmin: f64,
    pub end: f64,
    pub lifetime: f64,
    pub horizon: f64,
    pub absorbed: bool,
    pub killed: bool,
    pub exited: bool,
    pub excursions: Vec<ExcursionSpan>,
}

/// Start, level, duration and height of one excursion above the minimum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExcursionSpan {
    pub u: f64,
    pub level: f64,
    pub duration: f64,
    /// Highest point above `level` seen so far.
    pub height: f64,
    pub censored: bool,
}
