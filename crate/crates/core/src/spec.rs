//! Diffusion specifications: SDE coefficients and scale/speed form, kept
//! mutually consistent, plus Feller boundary classification.
//!
//! Normalization follows Itô–McKean: `s'(x) = exp(-∫ 2b/σ²)` and
//! `m'(x) = 2 / (σ²(x) s'(x))`, so standard Brownian motion has `s(x) = x`
//! and `m(dx) = 2 dx`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{adaptive, anchored_integral, tail_integral, GaussRule, Grid, Hermite, Tail};

/// A coefficient function of the state.
pub type Coef = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn coef(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Coef {
    Arc::new(f)
}

pub const DEFAULT_GRID_N: usize = 2001;

/// The state interval `]A, B[`. The lower end never belongs to the state space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
    upper_in_e: bool,
    lower_absorbing: bool,
    upper_absorbing: bool,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidInterval(format!("need A < B, got A = {lower}, B = {upper}")));
        }
        Ok(Interval { lower, upper, upper_in_e: false, lower_absorbing: false, upper_absorbing: false })
    }

    pub fn real_line() -> Self {
        Interval::new(f64::NEG_INFINITY, f64::INFINITY).expect("valid")
    }

    pub fn positive_half_line() -> Self {
        Interval::new(0.0, f64::INFINITY).expect("valid")
    }

    /// Paths reaching `A` are absorbed (sent to the cemetery).
    pub fn absorbing_lower(mut self) -> Self {
        self.lower_absorbing = true;
        self
    }

    pub fn absorbing_upper(mut self) -> Self {
        self.upper_absorbing = true;
        self
    }

    pub fn with_upper_in_e(mut self, inside: bool) -> Result<Self> {
        if inside && self.upper.is_infinite() {
            return Err(Error::InvalidInterval("an infinite upper end cannot belong to E".into()));
        }
        self.upper_in_e = inside;
        Ok(self)
    }

    /// Only `false` is accepted: the lower end is never part of the state space.
    pub fn with_lower_in_e(self, inside: bool) -> Result<Self> {
        if inside {
            return Err(Error::InvalidInterval("the lower end A must not belong to E".into()));
        }
        Ok(self)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn lower_in_e(&self) -> bool {
        false
    }

    pub fn upper_in_e(&self) -> bool {
        self.upper_in_e
    }

    pub fn lower_absorbing(&self) -> bool {
        self.lower_absorbing
    }

    pub fn upper_absorbing(&self) -> bool {
        self.upper_absorbing
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

/// How the diffusion is described.
#[derive(Clone)]
pub enum Form {
    Sde { drift: Coef, sigma: Coef },
    ScaleSpeed { scale_derivative: Coef, speed_density: Coef },
    Dual { drift: Coef, sigma: Coef, scale_derivative: Coef, speed_density: Coef },
}

impl Form {
    pub fn sde(drift: impl Fn(f64) -> f64 + Send + Sync + 'static, sigma: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Form::Sde { drift: coef(drift), sigma: coef(sigma) }
    }

    pub fn scale_speed(
        scale_derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
        speed_density: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Form::ScaleSpeed { scale_derivative: coef(scale_derivative), speed_density: coef(speed_density) }
    }
}

/// Named diffusions with closed-form scale, speed and (where known) densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Preset {
    Brownian,
    BmDrift { mu: f64 },
    Bessel3,
    BrownianAbsorbed,
    Ou { theta: f64 },
}

pub const PRESET_NAMES: &str = "brownian, bm-drift:mu=<f64>, bessel3, brownian-absorbed, ou:theta=<f64>";

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Brownian => write!(f, "brownian"),
            Preset::BmDrift { mu } => write!(f, "bm-drift:mu={mu}"),
            Preset::Bessel3 => write!(f, "bessel3"),
            Preset::BrownianAbsorbed => write!(f, "brownian-absorbed"),
            Preset::Ou { theta } => write!(f, "ou:theta={theta}"),
        }
    }
}

impl Preset {
    pub fn builder(self) -> SpecBuilder {
        let b = match self {
            Preset::Brownian => SpecBuilder::new(
                Form::Dual { drift: coef(|_| 0.0), sigma: coef(|_| 1.0), scale_derivative: coef(|_| 1.0), speed_density: coef(|_| 2.0) },
                Interval::real_line(),
            )
            .closed_scale(coef(|x| x)),
            Preset::BmDrift { mu } => SpecBuilder::new(
                Form::Dual {
                    drift: coef(move |_| mu),
                    sigma: coef(|_| 1.0),
                    scale_derivative: coef(move |x| (-2.0 * mu * x).exp()),
                    speed_density: coef(move |x| 2.0 * (2.0 * mu * x).exp()),
                },
                Interval::real_line(),
            )
            .closed_scale(coef(move |x| if mu == 0.0 { x } else { -(-2.0 * mu * x).exp_m1() / (2.0 * mu) })),
            Preset::Bessel3 => SpecBuilder::new(
                Form::Dual {
                    drift: coef(|x| 1.0 / x),
                    sigma: coef(|_| 1.0),
                    scale_derivative: coef(|x| 1.0 / (x * x)),
                    speed_density: coef(|x| 2.0 * x * x),
                },
                Interval::positive_half_line(),
            )
            .closed_scale(coef(|x| -1.0 / x)),
            Preset::BrownianAbsorbed => SpecBuilder::new(
                Form::Dual { drift: coef(|_| 0.0), sigma: coef(|_| 1.0), scale_derivative: coef(|_| 1.0), speed_density: coef(|_| 2.0) },
                Interval::positive_half_line().absorbing_lower(),
            )
            .closed_scale(coef(|x| x)),
            Preset::Ou { theta } => {
                let half = 6.0 / theta.max(1.0).sqrt();
                SpecBuilder::new(Form::sde(move |x| -theta * x, |_| 1.0), Interval::real_line()).window(-half, half)
            }
        };
        b.preset(self)
    }

    pub fn build(self) -> Result<DiffusionSpec> {
        self.builder().build()
    }

    /// Parses `name` or `name:key=value,...` (a bare number is accepted as the
    /// single parameter).
    pub fn parse(selector: &str) -> Result<Preset> {
        let (name, args) = match selector.split_once(':') {
            Some((n, a)) => (n.trim(), a.trim()),
            None => (selector.trim(), ""),
        };
        let param = |key: &str, default: f64| -> Result<f64> {
            if args.is_empty() {
                return Ok(default);
            }
            for part in args.split(',') {
                let (k, v) = match part.split_once('=') {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => (key, part.trim()),
                };
                if k == key {
                    return v.parse::<f64>().map_err(|_| Error::Config(format!("cannot parse {key} = '{v}'")));
                }
                return Err(Error::Config(format!("unknown parameter '{k}' for preset '{name}'")));
            }
            Ok(default)
        };
        let unknown = || Error::UnknownSpec { name: selector.to_string(), valid: PRESET_NAMES.to_string() };
        match name {
            "brownian" | "bm" => Ok(Preset::Brownian),
            "bm-drift" => Ok(Preset::BmDrift { mu: param("mu", 0.5)? }),
            "bessel3" => Ok(Preset::Bessel3),
            "brownian-absorbed" => Ok(Preset::BrownianAbsorbed),
            "ou" => Ok(Preset::Ou { theta: param("theta", 1.0)? }),
            _ => Err(unknown()),
        }
    }
}

/// Builder for [`DiffusionSpec`].
#[derive(Clone)]
pub struct SpecBuilder {
    form: Form,
    interval: Interval,
    kill: Option<Coef>,
    window: Option<(f64, f64)>,
    grid_n: usize,
    anchor: Option<f64>,
    preset: Option<Preset>,
    scale: Option<Coef>,
    tolerance: f64,
}

impl SpecBuilder {
    pub fn new(form: Form, interval: Interval) -> Self {
        SpecBuilder {
            form,
            interval,
            kill: None,
            window: None,
            grid_n: DEFAULT_GRID_N,
            anchor: None,
            preset: None,
            scale: None,
            tolerance: 1e-6,
        }
    }

    pub fn kill_rate(mut self, c: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.kill = Some(coef(c));
        self
    }

    pub fn kill_rate_coef(mut self, c: Coef) -> Self {
        self.kill = Some(c);
        self
    }

    /// Working window used for tabulation and numerics.
    pub fn window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }

    pub fn grid_n(mut self, n: usize) -> Self {
        self.grid_n = n;
        self
    }

    pub fn anchor(mut self, x0: f64) -> Self {
        self.anchor = Some(x0);
        self
    }

    /// Relative tolerance for the consistency check of a dual specification.
    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    fn preset(mut self, p: Preset) -> Self {
        self.preset = Some(p);
        self
    }

    fn closed_scale(mut self, s: Coef) -> Self {
        self.scale = Some(s);
        self
    }

    fn default_window(&self) -> (f64, f64) {
        let iv = &self.interval;
        let lo = if iv.lower.is_finite() {
            if iv.lower_absorbing {
                iv.lower
            } else {
                iv.lower + 1e-3
            }
        } else if iv.upper.is_finite() {
            iv.upper - 20.0
        } else {
            -10.0
        };
        let hi = if iv.upper.is_finite() {
            if iv.upper_absorbing {
                iv.upper
            } else {
                iv.upper - 1e-3
            }
        } else if iv.lower.is_finite() {
            iv.lower + 20.0
        } else {
            10.0
        };
        (lo, hi)
    }

    pub fn build(self) -> Result<DiffusionSpec> {
        let iv = self.interval;
        let (lo, hi) = self.window.unwrap_or_else(|| self.default_window());
        let lo_ok = lo > iv.lower || (lo == iv.lower && iv.lower_absorbing);
        let hi_ok = hi < iv.upper || (hi == iv.upper && (iv.upper_absorbing || iv.upper_in_e));
        if !(lo_ok && hi_ok && lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidInterval(format!(
                "working window [{lo}, {hi}] must be finite and lie inside ]{}, {}[",
                iv.lower, iv.upper
            )));
        }
        let grid = Grid::new(lo, hi, self.grid_n)?;
        let anchor = self.anchor.unwrap_or(0.5 * (lo + hi));
        if !(anchor > lo && anchor < hi) {
            return Err(Error::Domain(format!("anchor {anchor} must lie strictly inside the window [{lo}, {hi}]")));
        }

        let reps = match &self.form {
            Form::Sde { drift, sigma } => from_sde(&grid, anchor, drift.clone(), sigma.clone())?,
            Form::ScaleSpeed { scale_derivative, speed_density } => {
                from_scale_speed(&grid, iv, scale_derivative.clone(), speed_density.clone())?
            }
            Form::Dual { drift, sigma, scale_derivative, speed_density } => {
                check_dual(&grid, iv, drift, sigma, scale_derivative, speed_density, self.tolerance)?;
                let sp = scale_derivative.clone();
                Reps {
                    drift: drift.clone(),
                    sigma: sigma.clone(),
                    ln_sp: coef(move |x| sp(x).ln()),
                    sp: scale_derivative.clone(),
                    mp: speed_density.clone(),
                }
            }
        };

        let scale = match &self.scale {
            Some(s) => s.clone(),
            None => numeric_scale(&grid, anchor, reps.sp.clone()),
        };

        let kill_free = self.kill.is_none();
        let kill = self.kill.clone().unwrap_or_else(|| coef(|_| 0.0));

        let spec = DiffusionSpec {
            interval: iv,
            window: grid,
            anchor,
            drift: reps.drift,
            sigma: reps.sigma,
            kill,
            kill_free,
            sp: reps.sp,
            ln_sp: reps.ln_sp,
            mp: reps.mp,
            scale,
            preset: self.preset,
            builder: Arc::new(self),
        };
        spec.validate()?;
        Ok(spec)
    }
}

struct Reps {
    drift: Coef,
    sigma: Coef,
    sp: Coef,
    ln_sp: Coef,
    mp: Coef,
}

fn check_finite(x: f64, v: f64, what: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { x, what })
    }
}

fn from_sde(grid: &Grid, anchor: f64, drift: Coef, sigma: Coef) -> Result<Reps> {
    let mut k = Vec::with_capacity(grid.len());
    for x in grid.points() {
        let s = sigma(x);
        let b = drift(x);
        check_finite(x, s, "sigma")?;
        check_finite(x, b, "drift")?;
        if s <= 0.0 {
            return Err(Error::NonPositiveDiffusion { x, value: s });
        }
        k.push(2.0 * b / (s * s));
    }
    let (b2, s2) = (drift.clone(), sigma.clone());
    let ratio = move |x: f64| {
        let s = s2(x);
        2.0 * b2(x) / (s * s)
    };
    let table = Hermite::new(*grid, anchored_integral(&ratio, grid, anchor), k);
    let (lo, hi) = (grid.lo(), grid.hi());
    let ln_sp = coef(move |x| {
        let inside = if x < lo {
            table.eval(lo) + adaptive(&ratio, lo, x, 1e-12, 1e-10)
        } else if x > hi {
            table.eval(hi) + adaptive(&ratio, hi, x, 1e-12, 1e-10)
        } else {
            table.eval(x)
        };
        -inside
    });
    let l1 = ln_sp.clone();
    let sp = coef(move |x| l1(x).exp());
    let (l2, s3) = (ln_sp.clone(), sigma.clone());
    let mp = coef(move |x| {
        let s = s3(x);
        2.0 / (s * s) * (-l2(x)).exp()
    });
    Ok(Reps { drift, sigma, sp, ln_sp, mp })
}

/// Central difference with one Richardson step, kept inside the interval.
fn log_derivative(f: &Coef, x: f64, lower: f64, upper: f64) -> f64 {
    let mut h = 1e-4 * x.abs().max(1.0);
    let room = (x - lower).min(upper - x);
    if room.is_finite() {
        h = h.min(room / 4.0);
    }
    let d = |h: f64| (f(x + h).ln() - f(x - h).ln()) / (2.0 * h);
    (4.0 * d(h) - d(2.0 * h)) / 3.0
}

fn from_scale_speed(grid: &Grid, iv: Interval, sp: Coef, mp: Coef) -> Result<Reps> {
    for x in grid.points() {
        let (a, m) = (sp(x), mp(x));
        check_finite(x, a, "scale derivative")?;
        check_finite(x, m, "speed density")?;
        if a <= 0.0 {
            return Err(Error::NonMonotoneScale { x });
        }
        if m <= 0.0 {
            return Err(Error::NonPositiveSpeed { x, value: m });
        }
    }
    let (s1, m1) = (sp.clone(), mp.clone());
    let sigma = coef(move |x| (2.0 / (m1(x) * s1(x))).sqrt());
    let (s2, m2) = (sp.clone(), mp.clone());
    let (lower, upper) = (iv.lower, iv.upper);
    let drift = coef(move |x| {
        let var = 2.0 / (m2(x) * s2(x));
        -0.5 * var * log_derivative(&s2, x, lower, upper)
    });
    let s3 = sp.clone();
    let ln_sp = coef(move |x| s3(x).ln());
    Ok(Reps { drift, sigma, sp, ln_sp, mp })
}

fn check_dual(grid: &Grid, iv: Interval, drift: &Coef, sigma: &Coef, sp: &Coef, mp: &Coef, tol: f64) -> Result<()> {
    for x in grid.points() {
        let s = sigma(x);
        let prod = mp(x) * sp(x) * s * s / 2.0;
        if !((prod - 1.0).abs() <= tol) {
            return Err(Error::InconsistentSpec { x, detail: format!("m'·s'·σ²/2 = {prod}, expected 1") });
        }
        // the derivative check needs room for the difference stencil
        if (x - iv.lower).min(iv.upper - x) < 1e-2 * x.abs().max(1.0) {
            continue;
        }
        let want = -2.0 * drift(x) / (s * s);
        let got = log_derivative(sp, x, iv.lower, iv.upper);
        if !((got - want).abs() <= tol * want.abs().max(1.0)) {
            return Err(Error::InconsistentSpec {
                x,
                detail: format!("(ln s')' = {got} but -2b/σ² = {want}"),
            });
        }
    }
    Ok(())
}

fn numeric_scale(grid: &Grid, anchor: f64, sp: Coef) -> Coef {
    let d: Vec<f64> = grid.points().map(|x| sp(x)).collect();
    let table = Hermite::new(*grid, anchored_integral(sp.as_ref(), grid, anchor), d);
    let (lo, hi) = (grid.lo(), grid.hi());
    coef(move |x| {
        let v = if x < lo {
            table.eval(lo) - adaptive(sp.as_ref(), x, lo, 1e-14, 1e-11)
        } else if x > hi {
            table.eval(hi) + adaptive(sp.as_ref(), hi, x, 1e-14, 1e-11)
        } else {
            table.eval(x)
        };
        v
    })
}

/// A validated, immutable one-dimensional diffusion.
#[derive(Clone)]
pub struct DiffusionSpec {
    interval: Interval,
    window: Grid,
    anchor: f64,
    drift: Coef,
    sigma: Coef,
    kill: Coef,
    kill_free: bool,
    sp: Coef,
    ln_sp: Coef,
    mp: Coef,
    scale: Coef,
    preset: Option<Preset>,
    builder: Arc<SpecBuilder>,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name())
            .field("interval", &self.interval)
            .field("window", &self.window)
            .field("anchor", &self.anchor)
            .field("kill_free", &self.kill_free)
            .finish()
    }
}

/// Builds a spec from either coefficient form with default numerics.
pub fn build_spec(form: Form, interval: Interval) -> Result<DiffusionSpec> {
    SpecBuilder::new(form, interval).build()
}

impl DiffusionSpec {
    fn validate(&self) -> Result<()> {
        let mut prev_s = f64::NEG_INFINITY;
        for x in self.window.points() {
            let (sig, sp, mp, c, s) = (self.sigma(x), self.scale_derivative(x), self.speed_density(x), self.kill_rate(x), self.scale(x));
            check_finite(x, sig, "sigma")?;
            check_finite(x, sp, "scale derivative")?;
            check_finite(x, mp, "speed density")?;
            check_finite(x, c, "kill rate")?;
            check_finite(x, s, "scale")?;
            if sig <= 0.0 {
                return Err(Error::NonPositiveDiffusion { x, value: sig });
            }
            if mp <= 0.0 {
                return Err(Error::NonPositiveSpeed { x, value: mp });
            }
            if c < 0.0 {
                return Err(Error::NegativeKillRate { x, value: c });
            }
            if s <= prev_s || sp <= 0.0 {
                return Err(Error::NonMonotoneScale { x });
            }
            prev_s = s;
        }
        Ok(())
    }

    pub fn builder(&self) -> SpecBuilder {
        (*self.builder).clone()
    }

    /// Same diffusion with a different working window and grid size.
    pub fn with_window(&self, lo: f64, hi: f64, n: usize) -> Result<DiffusionSpec> {
        let mut b = self.builder();
        b.window = Some((lo, hi));
        b.grid_n = n;
        if let Some(a) = b.anchor {
            if !(a > lo && a < hi) {
                b.anchor = None;
            }
        }
        b.build()
    }

    pub fn name(&self) -> String {
        match self.preset {
            Some(p) if self.kill_free => p.to_string(),
            Some(p) => format!("{p}+killing"),
            None => "custom".to_string(),
        }
    }

    pub fn interval(&self) -> &Interval {
        &self.interval
    }

    pub fn window(&self) -> &Grid {
        &self.window
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn preset(&self) -> Option<Preset> {
        self.preset
    }

    /// Drift `μ` when the spec is Brownian motion with constant drift on the
    /// whole line and no killing. Closed forms apply exactly in that case.
    pub fn brownian_drift(&self) -> Option<f64> {
        if !self.kill_free {
            return None;
        }
        match self.preset? {
            Preset::Brownian => Some(0.0),
            Preset::BmDrift { mu } => Some(mu),
            _ => None,
        }
    }

    pub fn is_conservative(&self) -> bool {
        self.kill_free
    }

    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    pub fn kill_rate(&self, x: f64) -> f64 {
        (self.kill)(x)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (self.scale)(x)
    }

    pub fn scale_derivative(&self, x: f64) -> f64 {
        (self.sp)(x)
    }

    pub fn ln_scale_derivative(&self, x: f64) -> f64 {
        (self.ln_sp)(x)
    }

    pub fn speed_density(&self, x: f64) -> f64 {
        (self.mp)(x)
    }

    pub fn drift_coef(&self) -> Coef {
        self.drift.clone()
    }

    pub fn sigma_coef(&self) -> Coef {
        self.sigma.clone()
    }

    /// Drift recovered from the scale/speed representation alone.
    pub fn recovered_drift(&self, x: f64) -> f64 {
        let var = 2.0 / (self.speed_density(x) * self.scale_derivative(x));
        -0.5 * var * log_derivative(&self.sp, x, self.interval.lower, self.interval.upper)
    }

    /// Diffusion coefficient recovered from the scale/speed representation alone.
    pub fn recovered_sigma(&self, x: f64) -> f64 {
        (2.0 / (self.speed_density(x) * self.scale_derivative(x))).sqrt()
    }
}

/// Which end of the interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryClass {
    Natural,
    Exit,
    Entrance,
    RegularAbsorbing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub end: End,
    pub kind: BoundaryClass,
    /// `∫ (M(c) − M(x)) ds(x)`, finite iff the end is reachable.
    pub sigma_integral: Option<f64>,
    /// `∫ (s(c) − s(x)) dm(x)`, finite iff the process can start from the end.
    pub n_integral: Option<f64>,
    /// The end is unattainable, absorbing, or not part of the state space.
    pub assumptions_hold: bool,
}

/// Feller classification of one end, with integrals taken from the anchor.
pub fn classify_boundary(spec: &DiffusionSpec, end: End) -> Result<BoundaryReport> {
    let iv = spec.interval();
    let (endpoint, absorbing) = match end {
        End::Lower => (iv.lower(), iv.lower_absorbing()),
        End::Upper => (iv.upper(), iv.upper_absorbing()),
    };
    if absorbing {
        return Ok(BoundaryReport {
            end,
            kind: BoundaryClass::RegularAbsorbing,
            sigma_integral: None,
            n_integral: None,
            assumptions_hold: true,
        });
    }
    let c = spec.anchor();
    let gl = GaussRule::new(16);
    let seg = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| gl.integrate(f, a.min(b), a.max(b), 1);

    // N: ∫ |s(c) − s(x)| m'(x) dx
    let sc = spec.scale(c);
    let n_tail = tail_integral(
        |near, far| seg(&|x| (sc - spec.scale(x)).abs() * spec.speed_density(x), near, far),
        c,
        endpoint,
    );

    // Σ: ∫ |M(c) − M(x)| s'(x) dx, with the inner mass carried across pieces
    let mut mass_near = 0.0;
    let sigma_tail = tail_integral(
        |near, far| {
            let base = mass_near;
            let v = seg(
                &|x| (base + seg(&|z| spec.speed_density(z), x, near)) * spec.scale_derivative(x),
                near,
                far,
            );
            mass_near += seg(&|z| spec.speed_density(z), far, near);
            v
        },
        c,
        endpoint,
    );

    let resolve = |t: Tail, what: &str| -> Result<Option<f64>> {
        match t {
            Tail::Converged(v) => Ok(Some(v.abs())),
            Tail::Diverged(_) => Ok(None),
            Tail::Undetermined(partials) => Err(Error::QuadratureNonConvergence {
                what: format!("{what} at the {end:?} end"),
                partials,
            }),
        }
    };
    let sigma_integral = resolve(sigma_tail, "Feller integral Sigma")?;
    let n_integral = resolve(n_tail, "Feller integral N")?;
    let kind = match (sigma_integral.is_some(), n_integral.is_some()) {
        (false, false) => BoundaryClass::Natural,
        (true, false) => BoundaryClass::Exit,
        (false, true) => BoundaryClass::Entrance,
        (true, true) => BoundaryClass::RegularAbsorbing,
    };
    let assumptions_hold = match (kind, end) {
        (BoundaryClass::RegularAbsorbing, End::Lower) => false,
        (BoundaryClass::RegularAbsorbing, End::Upper) => !iv.upper_in_e(),
        _ => true,
    };
    Ok(BoundaryReport { end, kind, sigma_integral, n_integral, assumptions_hold })
}

/// Builds a spec from the flat `key = value` format.
///
/// Keys: `kind`, `mu`, `theta`, `window_lo`, `window_hi`, `grid_n`,
/// `kill_rate_expr` (an expression in `x`). Lines starting with `#` are
/// comments.
pub fn parse_spec_text(text: &str) -> Result<DiffusionSpec> {
    let mut kind = None;
    let mut mu = None;
    let mut theta = None;
    let mut window = (None, None);
    let mut grid_n = None;
    let mut kill_expr = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        let num = |v: &str| v.parse::<f64>().map_err(|_| Error::Config(format!("line {}: cannot parse '{v}' for {k}", lineno + 1)));
        match k {
            "kind" => kind = Some(v.to_string()),
            "mu" => mu = Some(num(v)?),
            "theta" => theta = Some(num(v)?),
            "window_lo" => window.0 = Some(num(v)?),
            "window_hi" => window.1 = Some(num(v)?),
            "grid_n" => grid_n = Some(v.parse::<usize>().map_err(|_| Error::Config(format!("grid_n must be an integer, got '{v}'")))?),
            "kill_rate_expr" => kill_expr = Some(v.to_string()),
            other => return Err(Error::Config(format!("line {}: unknown key '{other}'", lineno + 1))),
        }
    }
    let kind = kind.ok_or_else(|| Error::Config("spec file needs a 'kind' key".into()))?;
    let preset = match kind.as_str() {
        "bm-drift" => Preset::BmDrift { mu: mu.unwrap_or(0.5) },
        "ou" => Preset::Ou { theta: theta.unwrap_or(1.0) },
        other => Preset::parse(other)?,
    };
    let mut b = preset.builder();
    if let Some(n) = grid_n {
        b = b.grid_n(n);
    }
    match window {
        (Some(lo), Some(hi)) => b = b.window(lo, hi),
        (None, None) => {}
        _ => return Err(Error::Config("window_lo and window_hi must be given together".into())),
    }
    if let Some(expr) = kill_expr {
        b = b.kill_rate_coef(kill_expression(&expr)?);
    }
    b.build()
}

pub fn load_spec_file(path: &Path) -> Result<DiffusionSpec> {
    parse_spec_text(&std::fs::read_to_string(path)?)
}

/// Resolves a CLI selector: an existing file path, otherwise a preset name.
pub fn resolve_spec(selector: &str) -> Result<DiffusionSpec> {
    let p = Path::new(selector);
    if p.is_file() {
        return load_spec_file(p);
    }
    Preset::parse(selector)?.build()
}

struct StateContext {
    x: evalexpr::Value,
}

impl evalexpr::Context for StateContext {
    type NumericTypes = evalexpr::DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&evalexpr::Value> {
        (identifier == "x").then_some(&self.x)
    }

    fn call_function(&self, identifier: &str, _argument: &evalexpr::Value) -> evalexpr::EvalexprResult<evalexpr::Value> {
        Err(evalexpr::EvalexprError::FunctionIdentifierNotFound(identifier.to_string()))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        false
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> evalexpr::EvalexprResult<()> {
        Err(evalexpr::EvalexprError::ContextNotMutable)
    }
}

/// Compiles a kill-rate expression in the variable `x`, e.g. `0.5` or
/// `0.1 * x * x`. Builtins such as `math::exp` are available.
pub fn kill_expression(expr: &str) -> Result<Coef> {
    let tree = evalexpr::build_operator_tree::<evalexpr::DefaultNumericTypes>(expr)
        .map_err(|e| Error::Config(format!("kill_rate_expr '{expr}': {e}")))?;
    let eval = move |x: f64| {
        tree.eval_number_with_context(&StateContext { x: evalexpr::Value::Float(x) })
    };
    if let Err(e) = eval(0.5) {
        return Err(Error::Config(format!("kill_rate_expr '{expr}': {e}")));
    }
    Ok(coef(move |x| eval(x).unwrap_or(f64::NAN)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brownian_sde_form_gives_unit_scale_and_speed_two() {
        let spec = build_spec(Form::sde(|_| 0.0, |_| 1.0), Interval::real_line()).unwrap();
        for x in [-3.0, -0.7, 0.0, 1.3, 4.0] {
            assert_relative_eq!(spec.scale_derivative(x), 1.0, max_relative = 1e-12);
            assert_relative_eq!(spec.speed_density(x), 2.0, max_relative = 1e-12);
            assert_relative_eq!(spec.scale(x), x, epsilon = 1e-10);
        }
    }

    #[test]
    fn drift_sde_form_matches_exponential_scale() {
        let mu = 0.5;
        let spec = SpecBuilder::new(Form::sde(move |_| mu, |_| 1.0), Interval::real_line())
            .anchor(0.0)
            .window(-6.0, 6.0)
            .build()
            .unwrap();
        for x in [-5.0, -1.0, 0.3, 2.0, 5.5, 8.0] {
            assert_relative_eq!(spec.scale_derivative(x), (-2.0 * mu * x).exp(), max_relative = 1e-9);
            assert_relative_eq!(spec.speed_density(x), 2.0 * (2.0 * mu * x).exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn round_trip_through_scale_speed() {
        let drift = |x: f64| 0.3 - 0.4 * x.sin();
        let sigma = |x: f64| 1.0 + 0.2 * x.cos();
        let sde = SpecBuilder::new(Form::sde(drift, sigma), Interval::real_line()).window(-4.0, 4.0).build().unwrap();
        let sp = {
            let s = sde.clone();
            move |x| s.scale_derivative(x)
        };
        let mp = {
            let s = sde.clone();
            move |x| s.speed_density(x)
        };
        let ss = SpecBuilder::new(Form::scale_speed(sp, mp), Interval::real_line()).window(-4.0, 4.0).build().unwrap();
        for x in ss.window().points().step_by(50) {
            assert_relative_eq!(ss.sigma(x), sigma(x), max_relative = 1e-8);
            assert_relative_eq!(ss.drift(x), drift(x), max_relative = 1e-8, epsilon = 1e-9);
        }
    }

    #[test]
    fn identity_scale_recovers_standard_brownian() {
        let spec = build_spec(Form::scale_speed(|_| 1.0, |_| 2.0), Interval::real_line()).unwrap();
        for x in [-2.0, 0.0, 3.0] {
            assert_relative_eq!(spec.drift(x), 0.0, epsilon = 1e-12);
            assert_relative_eq!(spec.sigma(x), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn affine_rescaling_of_scale_leaves_coefficients() {
        let a = 3.7;
        let base = build_spec(Form::scale_speed(|x: f64| (-x).exp(), |x: f64| 2.0 * x.exp()), Interval::real_line()).unwrap();
        let scaled = build_spec(
            Form::scale_speed(move |x: f64| a * (-x).exp(), move |x: f64| 2.0 * x.exp() / a),
            Interval::real_line(),
        )
        .unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_relative_eq!(base.drift(x), scaled.drift(x), max_relative = 1e-9);
            assert_relative_eq!(base.sigma(x), scaled.sigma(x), max_relative = 1e-12);
        }
    }

    #[test]
    fn scale_is_strictly_increasing_on_grid() {
        for p in [Preset::Brownian, Preset::BmDrift { mu: 0.5 }, Preset::Bessel3, Preset::Ou { theta: 1.0 }] {
            let spec = p.build().unwrap();
            let g = spec.window();
            for i in 1..g.len() {
                assert!(spec.scale(g.x(i)) > spec.scale(g.x(i - 1)), "{p} at {}", g.x(i));
            }
        }
    }

    #[test]
    fn inconsistent_dual_form_is_rejected() {
        let form = Form::Dual {
            drift: coef(|_| 0.0),
            sigma: coef(|_| 1.0),
            scale_derivative: coef(|x: f64| (-x).exp()),
            speed_density: coef(|_| 2.0),
        };
        assert!(matches!(build_spec(form, Interval::real_line()), Err(Error::InconsistentSpec { .. })));
    }

    #[test]
    fn nonpositive_sigma_and_decreasing_scale_are_rejected() {
        assert!(matches!(
            build_spec(Form::sde(|_| 0.0, |x: f64| x), Interval::real_line()),
            Err(Error::NonPositiveDiffusion { .. })
        ));
        assert!(matches!(
            build_spec(Form::scale_speed(|x: f64| x, |_| 1.0), Interval::real_line()),
            Err(Error::NonMonotoneScale { .. })
        ));
    }

    #[test]
    fn lower_end_cannot_be_in_state_space() {
        assert!(Interval::real_line().with_lower_in_e(true).is_err());
        assert!(!Interval::real_line().lower_in_e());
        assert!(Interval::new(1.0, 1.0).is_err());
    }

    #[test]
    fn brownian_ends_are_natural() {
        let spec = Preset::Brownian.build().unwrap();
        for end in [End::Lower, End::Upper] {
            let r = classify_boundary(&spec, end).unwrap();
            assert_eq!(r.kind, BoundaryClass::Natural);
            assert!(r.assumptions_hold);
        }
    }

    #[test]
    fn bessel3_zero_is_entrance() {
        let spec = Preset::Bessel3.build().unwrap();
        let r = classify_boundary(&spec, End::Lower).unwrap();
        assert_eq!(r.kind, BoundaryClass::Entrance);
        // N = ∫_0^c (1/x − 1/c) 2x² dx = c²/3
        let c = spec.anchor();
        assert_relative_eq!(r.n_integral.unwrap(), c * c / 3.0, max_relative = 1e-6);
        assert_eq!(classify_boundary(&spec, End::Upper).unwrap().kind, BoundaryClass::Natural);
    }

    #[test]
    fn absorbed_brownian_lower_end_is_regular_absorbing() {
        let spec = Preset::BrownianAbsorbed.build().unwrap();
        assert_eq!(classify_boundary(&spec, End::Lower).unwrap().kind, BoundaryClass::RegularAbsorbing);
    }

    #[test]
    fn reflecting_like_regular_end_flags_assumptions() {
        // BM on ]0, 1[ with nothing declared at 0: regular, not absorbing
        let spec = SpecBuilder::new(Form::sde(|_| 0.0, |_| 1.0), Interval::new(0.0, 1.0).unwrap()).build().unwrap();
        let r = classify_boundary(&spec, End::Lower).unwrap();
        assert_eq!(r.kind, BoundaryClass::RegularAbsorbing);
        assert!(!r.assumptions_hold);
    }

    #[test]
    fn bm_drift_ends_are_natural() {
        let spec = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        for end in [End::Lower, End::Upper] {
            assert_eq!(classify_boundary(&spec, end).unwrap().kind, BoundaryClass::Natural);
        }
    }

    #[test]
    fn spec_text_with_killing_expression() {
        let spec = parse_spec_text("kind = brownian\nwindow_lo = -5\nwindow_hi = 5\ngrid_n = 501\nkill_rate_expr = 0.25 + 0 * x\n").unwrap();
        assert_eq!(spec.window().len(), 501);
        assert_relative_eq!(spec.kill_rate(1.3), 0.25);
        assert!(!spec.is_conservative());
        assert!(spec.brownian_drift().is_none());
        let spec = parse_spec_text("kind = bm-drift\nmu = 0.25\n").unwrap();
        assert_eq!(spec.brownian_drift(), Some(0.25));
    }

    #[test]
    fn unknown_preset_names_valid_ones() {
        match resolve_spec("geometric") {
            Err(Error::UnknownSpec { valid, .. }) => assert!(valid.contains("bm-drift")),
            other => panic!("{other:?}"),
        }
        assert_eq!(Preset::parse("bm-drift:mu=0.5").unwrap(), Preset::BmDrift { mu: 0.5 });
        assert_eq!(Preset::parse("ou:2").unwrap(), Preset::Ou { theta: 2.0 });
    }
}
