//! Experiment configuration, verification menus, suites and their manifests,
//! and the CSV tables written by the command-line tool.

use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::decomp::{
    sample_bridge, verify_local_decomposition, williams_laplace, williams_sample, BridgeKind, BridgeLaw, MinimumLaw,
};
use crate::densities::{entrance_density_from_killed_kernel, first_passage_density, killed_resolvent, PassageDensity};
use crate::eigen::solve_eigenfunctions;
use crate::error::{Error, Result};
use crate::pathsim::{extract_excursions, running_minimum, sample_path, Dynamics};
use crate::ppp::{verify_levy_system, Functional, LevyConfig, Weight};
use crate::rng::{derive_seed, par_samples, stream};
use crate::spec::{resolve_spec, DiffusionSpec, Form, Interval, Preset, SpecBuilder};
use crate::stats::{ks_test, EmpiricalLaw, GofReport, Welford};
use crate::vervaat::{
    sample_bridge01, sample_excursion01, verify_forward, verify_round_trip, vervaat_forward, vervaat_inverse, LoopPath,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Significance level of every goodness-of-fit verdict.
pub const LEVEL: f64 = 0.01;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: String,
    pub alpha: f64,
    pub dt: f64,
    pub horizon: f64,
    pub eps: f64,
    /// Sample size; each check has its own default.
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub menu: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            spec: "brownian".into(),
            alpha: 1.0,
            dt: 1e-3,
            horizon: 1.0,
            eps: 0.01,
            n: None,
            seed: None,
            out: None,
            report: None,
            menu: vec!["all".into()],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, sampling: bool) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if sampling && self.seed.is_none() {
            return bad("a seed is required for sampling".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.eps >= self.dt) {
            return bad(format!("eps = {} must be at least dt = {}", self.eps, self.dt));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.n == Some(0) {
            return bad("n must be positive".into());
        }
        for item in &self.menu {
            if item != "all" && !MENU.iter().any(|c| c.id == item) {
                let known: Vec<&str> = MENU.iter().map(|c| c.id).collect();
                return bad(format!("unknown check '{item}'; known: all, {}", known.join(", ")));
            }
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    /// The quantity compared with `threshold`.
    pub value: f64,
    pub threshold: f64,
    pub reports: Vec<GofReport>,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    fn new(id: &str, title: &str, passed: bool, value: f64, threshold: f64) -> Self {
        CheckResult {
            id: id.into(),
            title: title.into(),
            passed,
            value,
            threshold,
            reports: Vec::new(),
            detail: String::new(),
            seconds: 0.0,
        }
    }

    fn with_reports(mut self, reports: Vec<GofReport>) -> Self {
        self.reports = reports;
        self
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }

    fn failed(id: &str, title: &str, err: &Error) -> Self {
        CheckResult::new(id, title, false, f64::NAN, f64::NAN).with_detail(err.to_string())
    }

    /// `PASS`/`FAIL` line for terminals and logs.
    pub fn line(&self) -> String {
        format!(
            "{} {:<22} {} ({:.1}s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            if self.detail.is_empty() { String::new() } else { format!(": {}", self.detail) }
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub version: String,
    pub config: serde_json::Value,
    pub wall_seconds: f64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl RunManifest {
    fn new(name: &str, config: serde_json::Value, checks: Vec<CheckResult>, started: Instant) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        RunManifest {
            name: name.into(),
            version: VERSION.into(),
            config,
            wall_seconds: started.elapsed().as_secs_f64(),
            checks,
            passed,
        }
    }
}

fn timed(id: &str, title: &str, f: impl FnOnce() -> Result<CheckResult>) -> CheckResult {
    let t = Instant::now();
    let mut r = f().map_err(|e| e.in_stage(id)).unwrap_or_else(|e| CheckResult::failed(id, title, &e));
    r.seconds = t.elapsed().as_secs_f64();
    r
}

// ---------------------------------------------------------------------------
// checks shared by the menu and the suites

/// Same coefficients, solved numerically instead of in closed form.
fn numeric_twin(mu: f64) -> Result<DiffusionSpec> {
    SpecBuilder::new(Form::sde(move |_| mu, |_| 1.0), Interval::real_line()).window(-12.0, 12.0).build()
}

/// Largest relative error of the numeric resolvent density against
/// `e^{−μ(x+y) − γ|x−y|}/(2γ)`, `γ = √(μ² + 2α)`, on `[−2, 2]²`.
fn resolvent_oracle(mu: f64, alpha: f64) -> Result<f64> {
    let spec = numeric_twin(mu)?;
    let pair = solve_eigenfunctions(&spec, alpha, spec.window())?;
    let gamma = (mu * mu + 2.0 * alpha).sqrt();
    let pts: Vec<f64> = (0..=20).map(|i| -2.0 + 0.2 * i as f64).collect();
    let mut worst: f64 = 0.0;
    for &x in &pts {
        for &y in &pts {
            let exact = (-mu * (x + y) - gamma * (x - y).abs()).exp() / (2.0 * gamma);
            worst = worst.max((pair.resolvent_density(x, y) / exact - 1.0).abs());
        }
    }
    Ok(worst)
}

struct Hitting {
    solver: f64,
    closed: Option<f64>,
    mc: Welford,
}

fn hitting_check(spec: &DiffusionSpec, x: f64, y: f64, alpha: f64, n: usize, dt: f64, seed: u64) -> Result<Hitting> {
    if !(y < x) {
        return Err(Error::Domain(format!("hitting check runs downwards, got x = {x}, y = {y}")));
    }
    let pair = solve_eigenfunctions(spec, alpha, spec.window())?;
    let solver = pair.hitting_laplace(x, y);
    let closed = spec.brownian_drift().map(|mu| (-(x - y) * (mu + (mu * mu + 2.0 * alpha).sqrt())).exp());
    let dynamics = Dynamics::from_spec(spec);
    // beyond this horizon e^{−αT} < e^{−12}
    let horizon = 12.0 / alpha;
    let mc = par_samples(n, seed, |_, rng| {
        dynamics.first_passage_below(x, y, dt, horizon, rng).map_or(0.0, |t| (-alpha * t).exp())
    })
    .into_iter()
    .collect();
    Ok(Hitting { solver, closed, mc })
}

fn hitting_result(id: &str, title: &str, h: Hitting) -> CheckResult {
    let closed_err = h.closed.map_or(0.0, |c| (h.solver / c - 1.0).abs());
    let allowance = 3.0 * h.mc.se() + 0.01 * h.solver;
    let gap = (h.mc.mean() - h.solver).abs();
    let passed = closed_err <= 1e-4 && gap <= allowance;
    CheckResult::new(id, title, passed, gap, allowance).with_detail(format!(
        "solver {:.6}, closed form {}, MC {:.6} ± {:.6}",
        h.solver,
        h.closed.map_or("n/a".into(), |c| format!("{c:.6}")),
        h.mc.mean(),
        h.mc.se()
    ))
}

/// Largest relative gap between the entrance density from the killed kernel
/// and the first-passage density on a `k × k` grid of `(t, x)`.
fn entrance_gap(spec: &DiffusionSpec, y: f64, k: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let step = |i: usize| 0.2 + 1.8 * i as f64 / (k - 1).max(1) as f64;
    for i in 0..k {
        for j in 0..k {
            let (t, x) = (step(i), y + step(j));
            let a = entrance_density_from_killed_kernel(spec, t, x, y)?;
            let b = first_passage_density(spec, t, x, y)?;
            worst = worst.max((a / b - 1.0).abs());
        }
    }
    Ok(worst)
}

fn williams_minimum(spec: &DiffusionSpec, x: f64, n: usize, seed: u64) -> Result<GofReport> {
    let law = MinimumLaw::new(spec, x)?;
    let gammas = par_samples(n, seed, |_, rng| law.sample_gamma(rng));
    ks_test(&EmpiricalLaw::new(gammas), |y| law.gamma_cdf(y))
}

fn williams_joint(spec: &DiffusionSpec, x: f64, n: usize, dt: f64, seed: u64) -> Result<(Welford, f64)> {
    let law = MinimumLaw::new(spec, x)?;
    let draws = par_samples(n, seed, |_, rng| williams_sample(&law, dt, 10.0 * dt, rng).map(|s| (-s.rho).exp()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((draws.into_iter().collect(), williams_laplace(spec, x, 1.0)?))
}

fn local_check(id: &str, title: &str, spec: &DiffusionSpec, n: usize, dt: f64, seed: u64) -> Result<CheckResult> {
    let r = verify_local_decomposition(spec, 0.0, 1.0, n, dt, seed)?;
    let p = r.triple.p_value.min(r.min_marginal.p_value).min(r.argmin_marginal.p_value);
    Ok(CheckResult::new(id, title, r.passes(LEVEL), p, LEVEL)
        .with_reports(vec![r.triple.clone(), r.min_marginal.clone(), r.argmin_marginal.clone()])
        .with_detail(format!(
            "triple p = {:.3}, −H₁ p = {:.3}, ρ₁ p = {:.3}",
            r.triple.p_value, r.min_marginal.p_value, r.argmin_marginal.p_value
        )))
}

fn gof_result(id: &str, title: &str, r: GofReport) -> CheckResult {
    CheckResult::new(id, title, r.passes(LEVEL), r.p_value, LEVEL)
        .with_detail(format!("{:?} statistic {:.4}, p = {:.4}, n = {}", r.test, r.statistic, r.p_value, r.n))
        .with_reports(vec![r])
}

fn wronskian_drift(spec: &DiffusionSpec, alpha: f64) -> Result<f64> {
    let pair = solve_eigenfunctions(spec, alpha, spec.window())?;
    Ok(pair.wronskian_deviation().into_iter().fold(0.0, f64::max))
}

fn resolvent_asymmetry(spec: &DiffusionSpec, alpha: f64) -> Result<f64> {
    let pair = solve_eigenfunctions(spec, alpha, spec.window())?;
    let g = spec.window();
    let pts: Vec<f64> = (1..16).map(|i| g.lo() + (g.hi() - g.lo()) * (0.25 + 0.5 * i as f64 / 16.0)).collect();
    let mut worst: f64 = 0.0;
    for &x in &pts {
        for &y in &pts {
            let (a, b) = (pair.resolvent_density(x, y), pair.resolvent_density(y, x));
            worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
        }
    }
    Ok(worst)
}

/// `U^α f(x) = killed part + u^α(x, y) · excursion part`, relative gap.
fn splitting_gap(spec: &DiffusionSpec, alpha: f64) -> Result<f64> {
    let pair = solve_eigenfunctions(spec, alpha, spec.window())?;
    let c = spec.anchor();
    let f = move |z: f64| (-(z - c - 0.5).powi(2)).exp();
    let uf = pair.resolvent_apply_fn(f);
    let g = spec.window();
    let mut worst: f64 = 0.0;
    for (dx, dy) in [(0.5, 0.0), (1.2, -0.4), (0.1, 0.05)] {
        let i = g.nearest(c + dx);
        let (x, y) = (g.x(i), c + dy);
        let v = killed_resolvent(spec, alpha, x, y, f)?;
        let w = pair.excursion_resolvent(y, f);
        worst = worst.max(((v + pair.resolvent_density(x, y) * w) / uf[i] - 1.0).abs());
    }
    Ok(worst)
}

/// Paths violating `C_t` monotone or excursion disjointness.
fn path_properties(spec: &DiffusionSpec, n: usize, dt: f64, seed: u64) -> Result<(usize, usize)> {
    let x0 = spec.anchor();
    let outcomes = par_samples(n, seed, |_, rng| -> Result<(bool, bool)> {
        let path = sample_path(spec, x0, dt, 1.0, rng)?;
        let m = running_minimum(&path, |v| spec.scale(v));
        let monotone = m.c.windows(2).all(|w| w[1] >= w[0]) && m.h.windows(2).all(|w| w[1] <= w[0]);
        let ex = extract_excursions(&path, 5.0 * dt)?;
        let disjoint = ex.windows(2).all(|w| w[0].u + w[0].duration <= w[1].u + 1e-12 && w[1].level <= w[0].level);
        Ok((monotone, disjoint))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((outcomes.iter().filter(|o| !o.0).count(), outcomes.iter().filter(|o| !o.1).count()))
}

/// Bridges and loops whose pinned ends are not exactly where they belong.
fn endpoint_violations(spec: Option<&DiffusionSpec>, n: usize, seed: u64) -> Result<usize> {
    let mut bad = 0;
    for i in 0..n as u64 {
        let rng = &mut stream(seed, i);
        let loops = [sample_bridge01(50, rng)?, sample_excursion01(50, rng)?];
        for l in &loops {
            bad += usize::from(l.values[0] != 0.0 || l.values[50] != 0.0);
        }
        let e = vervaat_forward(&loops[0]);
        bad += usize::from(e.values[0] != 0.0 || e.values[50] != 0.0 || e.values.iter().any(|&v| v < 0.0));
        let cut = vervaat_inverse(&loops[1], 0.3)?;
        bad += usize::from(cut.values[0] != 0.0 || cut.values[50] != 0.0);
        if let Some(spec) = spec {
            let hat = BridgeLaw { kind: BridgeKind::Hat, floor: 0.0, duration: 1.0, endpoint: 0.7 };
            let rev = BridgeLaw { kind: BridgeKind::Reversed, ..hat };
            let p = sample_bridge(spec, &hat, 0.02, rng)?;
            bad += usize::from(p.first() != 0.0 || p.last() != 0.7);
            let q = sample_bridge(spec, &rev, 0.02, rng)?;
            bad += usize::from(q.first() != 0.7 || q.last() != 0.0);
        }
    }
    Ok(bad)
}

// ---------------------------------------------------------------------------
// verification menu

struct MenuItem {
    id: &'static str,
    title: &'static str,
    applies: fn(&DiffusionSpec) -> bool,
    run: fn(&str, &str, &DiffusionSpec, &ExperimentConfig, u64) -> Result<CheckResult>,
}

fn any(_: &DiffusionSpec) -> bool {
    true
}

fn brownian(spec: &DiffusionSpec) -> bool {
    spec.brownian_drift().is_some()
}

fn standard_brownian(spec: &DiffusionSpec) -> bool {
    spec.brownian_drift() == Some(0.0)
}

fn transient(spec: &DiffusionSpec) -> bool {
    MinimumLaw::new(spec, spec.anchor()).is_ok()
}

const MENU: &[MenuItem] = &[
    MenuItem {
        id: "resolvent-oracle",
        title: "numeric resolvent vs closed form",
        applies: brownian,
        run: |id, title, spec, cfg, _| {
            let e = resolvent_oracle(spec.brownian_drift().unwrap_or(0.0), cfg.alpha)?;
            Ok(CheckResult::new(id, title, e <= 1e-4, e, 1e-4))
        },
    },
    MenuItem {
        id: "wronskian",
        title: "Wronskian constancy",
        applies: any,
        run: |id, title, spec, cfg, _| {
            let e = wronskian_drift(spec, cfg.alpha)?;
            Ok(CheckResult::new(id, title, e <= 1e-6, e, 1e-6))
        },
    },
    MenuItem {
        id: "resolvent-symmetry",
        title: "resolvent density symmetric in m",
        applies: any,
        run: |id, title, spec, cfg, _| {
            let e = resolvent_asymmetry(spec, cfg.alpha)?;
            Ok(CheckResult::new(id, title, e <= 1e-12, e, 1e-12))
        },
    },
    MenuItem {
        id: "splitting",
        title: "resolvent split at a level",
        applies: any,
        run: |id, title, spec, cfg, _| {
            let e = splitting_gap(spec, cfg.alpha)?;
            Ok(CheckResult::new(id, title, e <= 1e-3, e, 1e-3))
        },
    },
    MenuItem {
        id: "hitting-laplace",
        title: "hitting Laplace transform",
        applies: any,
        run: |id, title, spec, cfg, seed| {
            let x = spec.anchor();
            let h = hitting_check(spec, x + 1.0, x, cfg.alpha, cfg.n.unwrap_or(20_000), cfg.dt, seed)?;
            Ok(hitting_result(id, title, h))
        },
    },
    MenuItem {
        id: "entrance",
        title: "entrance law vs passage density",
        applies: any,
        run: |id, title, spec, _, _| {
            let k = if brownian(spec) { 10 } else { 3 };
            let e = entrance_gap(spec, spec.anchor(), k)?;
            Ok(CheckResult::new(id, title, e <= 1e-3, e, 1e-3))
        },
    },
    MenuItem {
        id: "path-properties",
        title: "C_t monotone, excursions disjoint",
        applies: any,
        run: |id, title, spec, cfg, seed| {
            let (a, b) = path_properties(spec, cfg.n.unwrap_or(1000), cfg.dt, seed)?;
            Ok(CheckResult::new(id, title, a + b == 0, (a + b) as f64, 0.0)
                .with_detail(format!("{a} non-monotone, {b} overlapping")))
        },
    },
    MenuItem {
        id: "levy",
        title: "Lévy system, Z = e^{−u}, F = 1{ζ > ε}",
        applies: transient,
        run: |id, title, spec, cfg, seed| {
            let lc = LevyConfig::new(spec.anchor(), Weight::Discount, Functional::Longer, cfg.eps, cfg.n.unwrap_or(10_000), cfg.dt, seed);
            let r = verify_levy_system(spec, &lc)?;
            Ok(CheckResult::new(id, title, r.passes(3.0), r.z_score.abs(), 3.0)
                .with_detail(format!("lhs {:.5} ± {:.5}, rhs {:.5}", r.lhs, r.se_lhs, r.rhs)))
        },
    },
    MenuItem {
        id: "williams-minimum",
        title: "global minimum law",
        applies: transient,
        run: |id, title, spec, cfg, seed| {
            Ok(gof_result(id, title, williams_minimum(spec, spec.anchor(), cfg.n.unwrap_or(10_000), seed)?))
        },
    },
    MenuItem {
        id: "williams-laplace",
        title: "joint Laplace transform of the minimum location",
        applies: transient,
        run: |id, title, spec, cfg, seed| {
            let (w, exact) = williams_joint(spec, spec.anchor(), cfg.n.unwrap_or(4000), cfg.dt, seed)?;
            let gap = (w.mean() - exact).abs();
            Ok(CheckResult::new(id, title, gap <= 3.0 * w.se(), gap, 3.0 * w.se())
                .with_detail(format!("empirical {:.5} ± {:.5}, quadrature {exact:.5}", w.mean(), w.se())))
        },
    },
    MenuItem {
        id: "local-decomposition",
        title: "pre-t minimum decomposition",
        applies: brownian,
        run: |id, title, spec, cfg, seed| local_check(id, title, spec, cfg.n.unwrap_or(20_000), cfg.dt, seed),
    },
    MenuItem {
        id: "bridges",
        title: "bridge endpoints exact",
        applies: brownian,
        run: |id, title, spec, _, seed| {
            let bad = endpoint_violations(Some(spec), 200, seed)?;
            Ok(CheckResult::new(id, title, bad == 0, bad as f64, 0.0))
        },
    },
    MenuItem {
        id: "vervaat-forward",
        title: "bridge to excursion, midpoint law",
        applies: standard_brownian,
        run: |id, title, _, cfg, seed| Ok(gof_result(id, title, verify_forward(1000, cfg.n.unwrap_or(2000), seed)?)),
    },
    MenuItem {
        id: "vervaat-round-trip",
        title: "excursion to bridge and back",
        applies: standard_brownian,
        run: |id, title, _, cfg, seed| {
            let r = verify_round_trip(1000, cfg.n.unwrap_or(2000), seed)?;
            let p = r.midpoint.p_value.min(r.argmin.p_value).min(r.depth.p_value);
            Ok(CheckResult::new(id, title, r.passes(LEVEL), p, LEVEL)
                .with_detail(format!("index exact {}, max deviation {:.1e}", r.index_exact, r.max_deviation))
                .with_reports(vec![r.midpoint, r.argmin, r.depth]))
        },
    },
];

/// Ids of the menu checks that apply to `spec`.
pub fn applicable_checks(spec: &DiffusionSpec) -> Vec<&'static str> {
    MENU.iter().filter(|c| (c.applies)(spec)).map(|c| c.id).collect()
}

/// Runs the selected menu checks on the configured spec.
pub fn run(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate(false)?;
    let started = Instant::now();
    let spec = resolve_spec(&config.spec)?;
    let all = config.menu.iter().any(|m| m == "all");
    let mut checks = Vec::new();
    for (k, item) in MENU.iter().enumerate() {
        let selected = config.menu.iter().any(|m| m == item.id);
        if !(selected || (all && (item.applies)(&spec))) {
            continue;
        }
        let seed = derive_seed(config.seed(), k as u64);
        let r = timed(item.id, item.title, || (item.run)(item.id, item.title, &spec, config, seed));
        log::info!("{}", r.line());
        checks.push(r);
    }
    Ok(RunManifest::new(&format!("verify {}", config.spec), serde_json::to_value(config)?, checks, started))
}

// ---------------------------------------------------------------------------
// acceptance criteria

/// Sample sizes are divided by `divisor`; smoke runs use 10.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Scale {
    pub divisor: usize,
    pub seed: u64,
}

impl Scale {
    pub const ACCEPTANCE: Scale = Scale { divisor: 1, seed: 20_240_601 };
    pub const SMOKE: Scale = Scale { divisor: 10, seed: 20_240_601 };

    fn n(&self, full: usize) -> usize {
        (full / self.divisor).max(100)
    }

    fn seed(&self, id: u64) -> u64 {
        derive_seed(self.seed, id)
    }
}

pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    run: fn(&Scale) -> Result<CheckResult>,
}

impl Criterion {
    pub fn run(&self, scale: &Scale) -> CheckResult {
        let id = format!("criterion-{}", self.id);
        timed(&id, self.title, || (self.run)(scale))
    }
}

fn cid(k: u32) -> String {
    format!("criterion-{k}")
}

pub const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "resolvent oracle, Brownian motion, α = 1",
        run: |_| {
            let e = resolvent_oracle(0.0, 1.0)?;
            Ok(CheckResult::new(&cid(1), CRITERIA[0].title, e <= 1e-4, e, 1e-4).with_detail(format!("max relative error {e:.2e}")))
        },
    },
    Criterion {
        id: 2,
        title: "hitting Laplace, drift 0.5, x = 1, y = 0",
        run: |s| {
            let spec = Preset::BmDrift { mu: 0.5 }.build()?;
            let h = hitting_check(&spec, 1.0, 0.0, 1.0, s.n(100_000), 1e-3, s.seed(2))?;
            Ok(hitting_result(&cid(2), CRITERIA[1].title, h))
        },
    },
    Criterion {
        id: 3,
        title: "entrance law vs first-passage density",
        run: |_| {
            let e = entrance_gap(&Preset::Brownian.build()?, 0.0, 10)?;
            Ok(CheckResult::new(&cid(3), CRITERIA[2].title, e <= 1e-3, e, 1e-3).with_detail(format!("max relative error {e:.2e}")))
        },
    },
    Criterion {
        id: 4,
        title: "Lévy system, Z = e^{−u}, F = 1{ζ > 0.01}",
        run: |s| {
            let spec = Preset::BmDrift { mu: 0.5 }.build()?;
            let lc = LevyConfig::new(0.0, Weight::Discount, Functional::Longer, 0.01, s.n(100_000), 1e-3, s.seed(4));
            let r = verify_levy_system(&spec, &lc)?;
            Ok(CheckResult::new(&cid(4), CRITERIA[3].title, r.passes(3.0), r.z_score.abs(), 3.0)
                .with_detail(format!("lhs {:.5} ± {:.5}, rhs {:.5}", r.lhs, r.se_lhs, r.rhs)))
        },
    },
    Criterion {
        id: 5,
        title: "global minimum, −γ ~ Exp(1)",
        run: |s| {
            let spec = Preset::BmDrift { mu: 0.5 }.build()?;
            Ok(gof_result(&cid(5), CRITERIA[4].title, williams_minimum(&spec, 0.0, s.n(10_000), s.seed(5))?))
        },
    },
    Criterion {
        id: 6,
        title: "joint Laplace at (α, β) = (1, 0)",
        run: |s| {
            let spec = Preset::BmDrift { mu: 0.5 }.build()?;
            let (w, exact) = williams_joint(&spec, 0.0, s.n(10_000), 1e-3, s.seed(6))?;
            let gap = (w.mean() - exact).abs();
            Ok(CheckResult::new(&cid(6), CRITERIA[5].title, gap <= 3.0 * w.se(), gap, 3.0 * w.se())
                .with_detail(format!("empirical {:.5} ± {:.5}, quadrature {exact:.5}", w.mean(), w.se())))
        },
    },
    Criterion {
        id: 7,
        title: "local decomposition at t = 1",
        run: |s| local_check(&cid(7), CRITERIA[6].title, &Preset::Brownian.build()?, s.n(100_000), 1e-3, s.seed(7)),
    },
    Criterion {
        id: 8,
        title: "Vervaat forward, midpoint law, n = 1000",
        run: |s| Ok(gof_result(&cid(8), CRITERIA[7].title, verify_forward(1000, s.n(10_000), s.seed(8))?)),
    },
    Criterion {
        id: 9,
        title: "Vervaat round trip",
        run: |s| {
            let r = verify_round_trip(1000, s.n(10_000), s.seed(9))?;
            let p = r.midpoint.p_value.min(r.argmin.p_value).min(r.depth.p_value);
            Ok(CheckResult::new(&cid(9), CRITERIA[8].title, r.passes(LEVEL), p, LEVEL)
                .with_detail(format!(
                    "index exact {}, max deviation {:.1e}, midpoint p = {:.3}",
                    r.index_exact, r.max_deviation, r.midpoint.p_value
                ))
                .with_reports(vec![r.midpoint, r.argmin, r.depth]))
        },
    },
    Criterion {
        id: 10,
        title: "property suite",
        run: |s| {
            let bm = Preset::Brownian.build()?;
            let ou = Preset::Ou { theta: 1.0 }.build()?;
            let wr = wronskian_drift(&ou, 0.7)?.max(wronskian_drift(&Preset::BmDrift { mu: 0.5 }.build()?, 1.0)?);
            let sym = resolvent_asymmetry(&ou, 1.0)?.max(resolvent_asymmetry(&bm, 1.0)?);
            let split = splitting_gap(&bm, 1.0)?;
            let (mono, overlap) = path_properties(&bm, 1000, 1e-3, s.seed(10))?;
            let ends = endpoint_violations(Some(&bm), 200, s.seed(11))?;
            let verdicts = [
                ("wronskian", wr <= 1e-6, wr),
                ("symmetry", sym <= 1e-12, sym),
                ("splitting", split <= 1e-3, split),
                ("C_t monotone", mono == 0, mono as f64),
                ("disjoint", overlap == 0, overlap as f64),
                ("endpoints", ends == 0, ends as f64),
            ];
            let failing: Vec<&str> = verdicts.iter().filter(|v| !v.1).map(|v| v.0).collect();
            let detail = verdicts.iter().map(|v| format!("{} {:.1e}", v.0, v.2)).collect::<Vec<_>>().join(", ");
            Ok(CheckResult::new(&cid(10), CRITERIA[9].title, failing.is_empty(), failing.len() as f64, 0.0).with_detail(detail))
        },
    },
];

/// Runs the acceptance criteria at the given scale.
pub fn suite(name: &str) -> Result<RunManifest> {
    let scale = match name {
        "acceptance" => Scale::ACCEPTANCE,
        "smoke" => Scale::SMOKE,
        other => return Err(Error::Config(format!("unknown suite '{other}'; known: acceptance, smoke"))),
    };
    let started = Instant::now();
    let checks = CRITERIA
        .iter()
        .map(|c| {
            let r = c.run(&scale);
            log::info!("{}", r.line());
            r
        })
        .collect();
    Ok(RunManifest::new(name, serde_json::to_value(scale)?, checks, started))
}

// ---------------------------------------------------------------------------
// tables

pub fn write_csv<T: Serialize>(path: &FsPath, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenRow {
    pub x: f64,
    pub g1: f64,
    pub g2: f64,
    pub g1_plus: f64,
    pub g2_plus: f64,
}

/// The eigenfunctions on every `stride`-th node of the working window.
pub fn eigen_table(spec: &DiffusionSpec, alpha: f64, stride: usize) -> Result<Vec<EigenRow>> {
    let pair = solve_eigenfunctions(spec, alpha, spec.window())?;
    Ok(spec
        .window()
        .points()
        .step_by(stride.max(1))
        .map(|x| EigenRow { x, g1: pair.g1(x), g2: pair.g2(x), g1_plus: pair.g1_plus(spec, x), g2_plus: pair.g2_plus(spec, x) })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct FptRow {
    pub t: f64,
    pub f: f64,
}

pub fn fpt_table(spec: &DiffusionSpec, x: f64, y: f64, tmax: f64, points: usize) -> Result<Vec<FptRow>> {
    if !(tmax > 0.0) || points == 0 {
        return Err(Error::Config("tmax and the number of points must be positive".into()));
    }
    let pd = PassageDensity::new(spec);
    (1..=points)
        .map(|i| {
            let t = tmax * i as f64 / points as f64;
            Ok(FptRow { t, f: pd.density(t, x, y)? })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PathRow {
    pub path_id: usize,
    pub t: f64,
    pub x: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcursionRow {
    pub path_id: usize,
    pub u: f64,
    pub level: f64,
    pub duration: f64,
}

pub fn simulate_tables(
    spec: &DiffusionSpec,
    x0: f64,
    dt: f64,
    horizon: f64,
    n: usize,
    eps: f64,
    seed: u64,
) -> Result<(Vec<PathRow>, Vec<ExcursionRow>)> {
    let paths = par_samples(n, seed, |_, rng| sample_path(spec, x0, dt, horizon, rng)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut exc = Vec::new();
    for (id, p) in paths.iter().enumerate() {
        rows.extend((0..p.len()).map(|i| PathRow { path_id: id, t: p.time(i), x: p.values[i] }));
        for e in extract_excursions(p, eps)? {
            exc.push(ExcursionRow { path_id: id, u: e.u, level: e.level, duration: e.duration });
        }
    }
    Ok((rows, exc))
}

#[derive(Clone, Debug, Serialize)]
pub struct WilliamsRow {
    pub gamma: f64,
    pub rho: f64,
    pub zeta: f64,
}

pub fn williams_table(spec: &DiffusionSpec, x: f64, n: usize, dt: f64, seed: u64) -> Result<Vec<WilliamsRow>> {
    let law = MinimumLaw::new(spec, x)?;
    par_samples(n, seed, |_, rng| {
        williams_sample(&law, dt, 10.0 * dt, rng).map(|s| WilliamsRow { gamma: s.gamma, rho: s.rho, zeta: s.zeta })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopRow {
    pub path_id: usize,
    pub t: f64,
    pub x: f64,
}

/// Transformed loops: bridges through `Ψ`, or excursions through `Φ` at a
/// uniform cut. The first `keep` outputs are returned in full.
pub fn vervaat_table(direction: Direction, steps: usize, n: usize, keep: usize, seed: u64) -> Result<(Vec<LoopRow>, GofReport)> {
    let outs = par_samples(n, seed, |_, rng| -> Result<LoopPath> {
        match direction {
            Direction::Forward => Ok(vervaat_forward(&sample_bridge01(steps, rng)?)),
            Direction::Inverse => {
                let omega = sample_excursion01(steps, rng)?;
                let k = rand::Rng::random_range(rng, 1..steps);
                vervaat_inverse(&omega, k as f64 / steps as f64)
            }
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mids = EmpiricalLaw::new(outs.iter().map(|l| l.value_at(0.5)).collect());
    let report = match direction {
        Direction::Forward => ks_test(&mids, crate::vervaat::excursion_midpoint_cdf)?,
        Direction::Inverse => ks_test(&mids, |x| crate::num::norm_cdf(2.0 * x))?,
    };
    let rows = outs
        .iter()
        .take(keep)
        .enumerate()
        .flat_map(|(id, l)| l.values.iter().enumerate().map(move |(i, &x)| LoopRow { path_id: id, t: l.time(i), x }))
        .collect();
    Ok((rows, report))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointRow {
    pub t: f64,
    pub x: f64,
}

/// Reads a loop from `(t, x)` rows on a uniform grid over `[0, 1]`.
pub fn read_loop(path: &FsPath) -> Result<LoopPath> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize::<PointRow>().collect::<std::result::Result<Vec<_>, _>>()?;
    let n = rows.len().saturating_sub(1);
    for (i, row) in rows.iter().enumerate() {
        if (row.t - i as f64 / n.max(1) as f64).abs() > 1e-9 {
            return Err(Error::Config(format!("row {i}: t = {} is off the uniform grid over [0, 1]", row.t)));
        }
    }
    LoopPath::new(rows.into_iter().map(|r| r.x).collect())
}

pub fn loop_rows(l: &LoopPath) -> Vec<PointRow> {
    l.values.iter().enumerate().map(|(i, &x)| PointRow { t: l.time(i), x }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate(false).is_ok());
        assert!(matches!(c.validate(true), Err(Error::Config(_))));
        c.seed = Some(3);
        c.eps = 1e-4;
        assert!(c.validate(true).is_err());
        c.eps = 0.01;
        c.menu = vec!["nonsense".into()];
        assert!(c.validate(true).is_err());
    }

    #[test]
    fn brownian_menu_has_at_least_six_checks() {
        let spec = Preset::Brownian.build().unwrap();
        let ids = applicable_checks(&spec);
        assert!(ids.len() >= 6, "{ids:?}");
        assert!(!ids.contains(&"levy"));
        let drift = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        assert!(applicable_checks(&drift).contains(&"williams-minimum"));
    }

    #[test]
    fn criteria_are_numbered_once() {
        let ids: Vec<u32> = CRITERIA.iter().map(|c| c.id).collect();
        assert_eq!(ids, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(suite("nightly"), Err(Error::Config(_))));
    }

    #[test]
    fn failing_stage_is_named() {
        let r = timed("demo", "demo", || Err(Error::Domain("boom".into())));
        assert!(!r.passed);
        assert!(r.detail.contains("demo") && r.detail.contains("boom"), "{}", r.detail);
    }
}
