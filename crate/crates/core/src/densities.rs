//! Time-domain densities: first passage `f(t; x, y)`, the killed kernel
//! `q^y(t; x, z)` and the excursion entrance law `q↑_y(t; x) = f(t; x, y)`.
//!
//! Brownian presets use closed forms. Everything else goes through
//! Gaver–Stehfest inversion of eigenfunction ratios, or a Crank–Nicolson
//! solve of the killed equation for `q^y`.

use std::f64::consts::{LN_2, PI};

use crate::eigen::{solve_eigenfunctions, EigenPair};
use crate::error::{Error, Result};
use crate::num::{adaptive, ln_norm_sf, norm_cdf, norm_pdf, Grid};
use crate::spec::DiffusionSpec;

pub const STEHFEST_ORDER: usize = 12;

/// Gaver–Stehfest weights `V_1..V_N` for even `N`.
pub fn stehfest_weights(n: usize) -> Vec<f64> {
    assert!(n % 2 == 0 && n >= 2, "Stehfest order must be even");
    let fact = |k: usize| (1..=k).fold(1.0f64, |acc, i| acc * i as f64);
    let half = n / 2;
    (1..=n)
        .map(|k| {
            let mut sum = 0.0;
            for j in k.div_ceil(2)..=k.min(half) {
                sum += (j as f64).powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half) % 2 == 0 {
                sum
            } else {
                -sum
            }
        })
        .collect()
}

/// Inverts the Laplace transform `F` at `t` with order `n`.
pub fn stehfest(mut transform: impl FnMut(f64) -> f64, t: f64, n: usize) -> f64 {
    let a = LN_2 / t;
    stehfest_weights(n).iter().enumerate().map(|(i, w)| w * transform((i + 1) as f64 * a)).sum::<f64>() * a
}

fn stehfest_with(weights: &[f64], pairs: &[EigenPair], t: f64, eval: &impl Fn(&EigenPair) -> f64) -> f64 {
    weights.iter().zip(pairs).map(|(w, p)| w * eval(p)).sum::<f64>() * LN_2 / t
}

/// Eigen solutions at the Stehfest abscissae `k ln2 / t`.
pub struct LaplaceLadder {
    t: f64,
    order: usize,
    main: Vec<EigenPair>,
    w_main: Vec<f64>,
    w_check: Vec<f64>,
}

impl LaplaceLadder {
    pub fn new(spec: &DiffusionSpec, t: f64) -> Result<Self> {
        Self::with_order(spec, t, STEHFEST_ORDER)
    }

    /// Uses order `order` and checks against `order − 2`.
    pub fn with_order(spec: &DiffusionSpec, t: f64, order: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        if order < 4 || order % 2 != 0 {
            return Err(Error::Domain(format!("Stehfest order must be even and at least 4, got {order}")));
        }
        let grid = spec.window();
        let solve = |n: usize| -> Result<Vec<EigenPair>> {
            (1..=n).map(|k| solve_eigenfunctions(spec, k as f64 * LN_2 / t, grid)).collect()
        };
        Ok(LaplaceLadder {
            t,
            order,
            main: solve(order)?,
            w_main: stehfest_weights(order),
            w_check: stehfest_weights(order - 2),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Inversions at the working order and two below it, unchecked.
    pub fn invert_both(&self, eval: impl Fn(&EigenPair) -> f64) -> (f64, f64) {
        // the lower order uses the first abscissae of the same ladder
        (
            stehfest_with(&self.w_main, &self.main, self.t, &eval),
            stehfest_with(&self.w_check, &self.main, self.t, &eval),
        )
    }

    /// Inverts `α ↦ eval(pair_α)`; fails when the two orders disagree.
    pub fn invert(&self, eval: impl Fn(&EigenPair) -> f64) -> Result<f64> {
        let (v, c) = self.invert_both(eval);
        if (v - c).abs() > 1e-3 * v.abs() + 1e-6 {
            return Err(Error::InversionUnstable {
                t: self.t,
                order: self.order,
                value: v,
                lower_order: self.order - 2,
                lower_value: c,
            });
        }
        Ok(v)
    }
}

/// `f(t; x, y) − G F_{t,y}(x)` with `F_{t,y}(z) = P^z(T_y ≤ t)` and `G` by
/// central differences of width `h`. A diagnostic: the second difference
/// amplifies the inversion error by `h^{-2}`.
pub fn generator_residual(spec: &DiffusionSpec, t: f64, x: f64, y: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) || (x - y).abs() <= h {
        return Err(Error::Domain(format!("need 0 < h < |x − y|, got h = {h}, x = {x}, y = {y}")));
    }
    let zs = [x - h, x, x + h];
    let (cdf, f): (Vec<f64>, f64) = match spec.brownian_drift() {
        Some(mu) => (zs.iter().map(|&z| bm_hitting_cdf(mu, t, z, y)).collect(), bm_passage_density(mu, t, x, y)),
        None => {
            // unchecked orders: the residual itself measures the error
            let ladder = LaplaceLadder::new(spec, t)?;
            let cdf = zs.iter().map(|&z| ladder.invert_both(|p| p.hitting_laplace(z, y) / p.alpha()).0).collect();
            (cdf, ladder.invert_both(|p| p.hitting_laplace(x, y)).0)
        }
    };
    let d1 = (cdf[2] - cdf[0]) / (2.0 * h);
    let d2 = (cdf[2] - 2.0 * cdf[1] + cdf[0]) / (h * h);
    let gf = 0.5 * spec.sigma(x).powi(2) * d2 + spec.drift(x) * d1 - spec.kill_rate(x) * cdf[1];
    Ok(f - gf)
}

/// `f(t; x, y)` for Brownian motion with drift `μ`.
pub fn bm_passage_density(mu: f64, t: f64, x: f64, y: f64) -> f64 {
    let d = y - x;
    d.abs() / (2.0 * PI * t * t * t).sqrt() * (-(d - mu * t).powi(2) / (2.0 * t)).exp()
}

/// `P^x(T_y ≤ t)` for Brownian motion with drift `μ`.
pub fn bm_hitting_cdf(mu: f64, t: f64, x: f64, y: f64) -> f64 {
    let d = (y - x).abs();
    if d == 0.0 {
        return 1.0;
    }
    let nu = if y > x { mu } else { -mu };
    let st = t.sqrt();
    let first = norm_cdf((nu * t - d) / st);
    let second = (2.0 * nu * d + ln_norm_sf((nu * t + d) / st)).exp();
    (first + second).clamp(0.0, 1.0)
}

/// Kernel of Brownian motion with drift `μ` killed at `y`, with respect to
/// `m(dz) = 2 e^{2μz} dz`.
pub fn bm_killed_density(mu: f64, t: f64, x: f64, z: f64, y: f64) -> f64 {
    if (x - y) * (z - y) <= 0.0 {
        return 0.0;
    }
    let st = t.sqrt();
    let gauss = |u: f64| norm_pdf(u / st) / st;
    (-mu * (z + x) - 0.5 * mu * mu * t).exp() * (gauss(z - x) - gauss(z + x - 2.0 * y)) * 0.5
}

/// Evaluator of the first-passage density with respect to `dt`.
#[derive(Clone, Debug)]
pub struct PassageDensity {
    spec: DiffusionSpec,
    order: usize,
}

impl PassageDensity {
    pub fn new(spec: &DiffusionSpec) -> Self {
        PassageDensity { spec: spec.clone(), order: STEHFEST_ORDER }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn density(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(self.densities(t, &[(x, y)])?[0])
    }

    /// Densities at a common time for several `(x, y)` pairs, sharing the
    /// eigen solves.
    pub fn densities(&self, t: f64, points: &[(f64, f64)]) -> Result<Vec<f64>> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        if let Some((x, y)) = points.iter().find(|(x, y)| x == y) {
            let _ = y;
            return Err(Error::Domain(format!("first passage needs x ≠ y, got x = y = {x}")));
        }
        if let Some(mu) = self.spec.brownian_drift() {
            return Ok(points.iter().map(|&(x, y)| bm_passage_density(mu, t, x, y)).collect());
        }
        let ladder = LaplaceLadder::with_order(&self.spec, t, self.order)?;
        points
            .iter()
            .map(|&(x, y)| ladder.invert(|p| p.hitting_laplace(x, y)).map(|v| v.max(0.0)))
            .collect()
    }

    /// `P^x(T_y ≤ t)`.
    pub fn cdf(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        if x == y {
            return Ok(1.0);
        }
        if let Some(mu) = self.spec.brownian_drift() {
            return Ok(bm_hitting_cdf(mu, t, x, y));
        }
        let ladder = LaplaceLadder::with_order(&self.spec, t, self.order)?;
        ladder.invert(|p| p.hitting_laplace(x, y) / p.alpha()).map(|v| v.clamp(0.0, 1.0))
    }
}

pub fn first_passage_density(spec: &DiffusionSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    PassageDensity::new(spec).density(t, x, y)
}

pub fn hitting_cdf(spec: &DiffusionSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    PassageDensity::new(spec).cdf(t, x, y)
}

/// Entrance density `q↑_y(t; x)` of `n↑_y` with respect to `m(dx)`.
pub fn entrance_density(spec: &DiffusionSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    if x <= y {
        return Ok(0.0);
    }
    first_passage_density(spec, t, x, y)
}

/// `q↑_y(t; x)` obtained without passage times: the scale derivative of the
/// killed kernel at the barrier, `lim q^y(t; y+δ, x) / (s(y+δ) − s(y))`.
pub fn entrance_density_from_killed_kernel(spec: &DiffusionSpec, t: f64, x: f64, y: f64) -> Result<f64> {
    if x <= y {
        return Ok(0.0);
    }
    let ratio = |q: f64, z: f64| q / (spec.scale(z) - spec.scale(y));
    if let Some(mu) = spec.brownian_drift() {
        let d = 1e-3 * (x - y).min(t.sqrt());
        let g = |d: f64| ratio(bm_killed_density(mu, t, y + d, x, y), y + d);
        return Ok(2.0 * g(d) - g(2.0 * d));
    }
    let kernel = KilledKernel::solve(spec, y, x, &[t], None)?;
    let g = |j: usize| ratio(kernel.values[0][j], kernel.grid.x(j));
    Ok(2.0 * g(1) - g(2))
}

/// `n↑_y(ζ > ε) = ∫ f(ε; z, y) m(dz)`, the mass of excursions above `y`
/// lasting longer than `ε` (including those that never return).
pub fn excursion_tail_mass(spec: &DiffusionSpec, y: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("duration threshold must be positive, got {eps}")));
    }
    if let Some(mu) = spec.brownian_drift() {
        let se = eps.sqrt();
        return Ok(2.0 * (2.0 * mu * y).exp() * (norm_pdf(mu * se) / se + mu * norm_cdf(mu * se)));
    }
    let ladder = LaplaceLadder::new(spec, eps)?;
    ladder.invert(|p| {
        p.excursion_resolvent_parts(y, |_| 1.0).1
    })
}

/// Killed kernel `q^y(t; x, ·)` tabulated at a list of times by Crank–Nicolson.
#[derive(Clone, Debug)]
pub struct KilledKernel {
    y: f64,
    x: f64,
    grid: Grid,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

/// The symmetric (in `m`) finite-difference generator of the killed process
/// on `[y, hi]` with zero boundary values.
struct KilledOperator {
    grid: Grid,
    mp: Vec<f64>,
    a_half: Vec<f64>,
    kill: Vec<f64>,
}

impl KilledOperator {
    fn new(spec: &DiffusionSpec, grid: Grid) -> Self {
        let h = grid.h();
        let mp = grid.points().map(|z| spec.speed_density(z)).collect();
        let a_half = (0..grid.len() - 1).map(|i| 1.0 / spec.scale_derivative(grid.x(i) + 0.5 * h)).collect();
        let kill = grid.points().map(|z| spec.kill_rate(z)).collect();
        KilledOperator { grid, mp, a_half, kill }
    }

    /// One θ-step of `m' du/dt = L u` (θ = 1/2 Crank–Nicolson, θ = 1 implicit Euler).
    fn step(&self, u: &mut [f64], dt: f64, theta: f64, scratch: &mut Scratch) {
        let n = self.grid.len();
        let h2 = self.grid.h().powi(2);
        let m = n - 2;
        let Scratch { lower, diag, upper, rhs } = scratch;
        for k in 0..m {
            let i = k + 1;
            let al = self.a_half[i - 1] / h2;
            let ar = self.a_half[i] / h2;
            let c = self.kill[i] * self.mp[i];
            let lu = al * u[i - 1] + ar * u[i + 1] - (al + ar + c) * u[i];
            rhs[k] = self.mp[i] * u[i] + (1.0 - theta) * dt * lu;
            lower[k] = -theta * dt * al;
            upper[k] = -theta * dt * ar;
            diag[k] = self.mp[i] + theta * dt * (al + ar + c);
        }
        // Thomas algorithm
        for k in 1..m {
            let w = lower[k] / diag[k - 1];
            diag[k] -= w * upper[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        u[m] = rhs[m - 1] / diag[m - 1];
        for k in (0..m - 1).rev() {
            u[k + 1] = (rhs[k] - upper[k] * u[k + 2]) / diag[k];
        }
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }

    fn mass(&self, u: &[f64], f: &[f64]) -> f64 {
        let h = self.grid.h();
        u.iter().zip(&self.mp).zip(f).map(|((u, m), f)| u * m * f).sum::<f64>() * h
    }
}

struct Scratch {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n], rhs: vec![0.0; n] }
    }
}

const RANNACHER_STEPS: usize = 4;

impl KilledKernel {
    /// Largest time step accepted: one cell width over the largest `σ`.
    pub fn step_bound(spec: &DiffusionSpec, grid: &Grid) -> f64 {
        let smax = grid.points().map(|z| spec.sigma(z)).fold(0.0f64, f64::max);
        grid.h() / smax.max(1e-12)
    }

    fn pde_grid(spec: &DiffusionSpec, y: f64, x: f64) -> Result<Grid> {
        let window = spec.window();
        let hi = window.hi();
        if !(y >= window.lo() && x > y && x < hi) {
            return Err(Error::Domain(format!(
                "killed kernel needs window.lo ≤ y < x < window.hi, got y = {y}, x = {x}"
            )));
        }
        let h0 = window.h();
        let cells_to_x = ((x - y) / h0).round().max(8.0);
        let h = (x - y) / cells_to_x;
        let n = (((hi - y) / h).floor() as usize + 1).min(40_001);
        Grid::new(y, y + (n - 1) as f64 * h, n)
    }

    /// Solves from a unit mass at `x` and records `q^y(t; x, ·)` at each of
    /// `times` (increasing). `dt` defaults to a quarter of the step bound.
    pub fn solve(spec: &DiffusionSpec, y: f64, x: f64, times: &[f64], dt: Option<f64>) -> Result<KilledKernel> {
        let grid = Self::pde_grid(spec, y, x)?;
        let bound = Self::step_bound(spec, &grid);
        let dt = match dt {
            Some(d) if d > bound => return Err(Error::StepTooLarge { dt: d, bound }),
            Some(d) if d > 0.0 => d,
            Some(d) => return Err(Error::Domain(format!("time step must be positive, got {d}"))),
            None => 0.25 * bound,
        };
        if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t <= 0.0) {
            return Err(Error::Domain("output times must be positive and increasing".into()));
        }
        let op = KilledOperator::new(spec, grid);
        let mut u = vec![0.0; grid.len()];
        let k = grid.nearest(x);
        u[k] = 1.0 / (op.mp[k] * grid.h());
        let mut scratch = Scratch::new(grid.len());
        let mut now = 0.0;
        let mut steps = 0usize;
        let mut values = Vec::with_capacity(times.len());
        for &target in times {
            while now < target {
                let remaining = target - now;
                let n_left = (remaining / dt).ceil().max(1.0);
                let this = remaining / n_left;
                if steps < RANNACHER_STEPS {
                    // two implicit half steps damp the initial spike
                    op.step(&mut u, 0.5 * this, 1.0, &mut scratch);
                    op.step(&mut u, 0.5 * this, 1.0, &mut scratch);
                } else {
                    op.step(&mut u, this, 0.5, &mut scratch);
                }
                steps += 1;
                now = if n_left <= 1.0 { target } else { now + this };
            }
            values.push(u.clone());
        }
        Ok(KilledKernel { y, x, grid, times: times.to_vec(), values })
    }

    pub fn barrier(&self) -> f64 {
        self.y
    }

    pub fn start(&self) -> f64 {
        self.x
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Density at the `k`-th recorded time, linear in `z` between nodes.
    pub fn density(&self, k: usize, z: f64) -> f64 {
        if z <= self.grid.lo() || z >= self.grid.hi() {
            return 0.0;
        }
        let (i, t) = self.grid.locate(z);
        self.values[k][i] * (1.0 - t) + self.values[k][i + 1] * t
    }

    pub fn nodes(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

/// `q^y(t; x, z)` with respect to `m(dz)`.
pub fn killed_density(spec: &DiffusionSpec, t: f64, x: f64, z: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    if let Some(mu) = spec.brownian_drift() {
        return Ok(bm_killed_density(mu, t, x, z, y));
    }
    if z <= y {
        return Ok(0.0);
    }
    let kernel = KilledKernel::solve(spec, y, x, &[t], None)?;
    Ok(kernel.density(0, z))
}

/// `V^α_y f(x) = ∫ e^{−αt} ∫ q^y(t; x, z) f(z) m(dz) dt` by quadrature of the
/// killed kernel in time. Outside the Brownian presets only `x > y` is
/// supported.
pub fn killed_resolvent(spec: &DiffusionSpec, alpha: f64, x: f64, y: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    if x == y {
        return Ok(0.0);
    }
    let horizon = 40.0 / alpha;
    if let Some(mu) = spec.brownian_drift() {
        let inner = |t: f64| {
            let spread = 12.0 * t.sqrt() + mu.abs() * t;
            let (lo, hi) = if x > y { ((x - spread).max(y), x + spread) } else { (x - spread, (x + spread).min(y)) };
            adaptive(
                |z| bm_killed_density(mu, t, x, z, y) * f(z) * 2.0 * (2.0 * mu * z).exp(),
                lo,
                hi,
                1e-13,
                1e-10,
            )
        };
        // log-spaced panels in time resolve the short-time spike
        let mut total = 0.0;
        let mut a = 0.0;
        let mut b: f64 = 1e-6;
        while a < horizon {
            total += adaptive(|t| if t > 0.0 { (-alpha * t).exp() * inner(t) } else { f(x) }, a, b.min(horizon), 1e-12, 1e-9);
            a = b;
            b *= 2.0;
        }
        return Ok(total);
    }
    let grid = KilledKernel::pde_grid(spec, y, x)?;
    let dt = 0.25 * KilledKernel::step_bound(spec, &grid);
    let op = KilledOperator::new(spec, grid);
    let fv: Vec<f64> = grid.points().map(&f).collect();
    let mut u = vec![0.0; grid.len()];
    let k = grid.nearest(x);
    u[k] = 1.0 / (op.mp[k] * grid.h());
    let mut scratch = Scratch::new(grid.len());
    let mut prev = f(x);
    let mut total = 0.0;
    let mut t = 0.0;
    let mut steps = 0;
    while t < horizon {
        if steps < RANNACHER_STEPS {
            op.step(&mut u, 0.5 * dt, 1.0, &mut scratch);
            op.step(&mut u, 0.5 * dt, 1.0, &mut scratch);
        } else {
            op.step(&mut u, dt, 0.5, &mut scratch);
        }
        steps += 1;
        let now = (-alpha * (t + dt)).exp() * op.mass(&u, &fv);
        total += 0.5 * dt * (prev * (-alpha * t).exp() + now);
        prev = op.mass(&u, &fv);
        t += dt;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_eigenfunctions;
    use crate::spec::{Form, Interval, Preset, SpecBuilder};
    use approx::assert_relative_eq;

    fn drift_numeric(mu: f64) -> DiffusionSpec {
        // same law as the preset, but without closed forms
        SpecBuilder::new(Form::sde(move |_| mu, |_| 1.0), Interval::real_line()).window(-10.0, 10.0).build().unwrap()
    }

    #[test]
    fn generator_form_of_the_passage_density() {
        let bm = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        let f = bm_passage_density(0.5, 1.0, 1.0, 0.0);
        assert!(generator_residual(&bm, 1.0, 1.0, 0.0, 1e-3).unwrap().abs() < 1e-5 * f);
        let ou = SpecBuilder::new(Form::sde(|x| -x, |_| 1.0), Interval::real_line()).window(-8.0, 8.0).build().unwrap();
        let r = generator_residual(&ou, 1.0, 1.0, 0.0, 0.05).unwrap();
        assert!(r.abs() < 2e-2 * 0.44, "residual {r}");
    }

    #[test]
    fn stehfest_inverts_simple_transforms() {
        // 1/(α+1) ↔ e^{−t}
        for t in [0.3, 1.0, 2.5] {
            assert_relative_eq!(stehfest(|a| 1.0 / (a + 1.0), t, 12), (-t).exp(), max_relative = 2e-3);
            assert_relative_eq!(stehfest(|a| a.powi(-2), t, 12), t, max_relative = 1e-5);
        }
        let w = stehfest_weights(12);
        assert_relative_eq!(w.iter().sum::<f64>(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn brownian_passage_density_value() {
        let spec = Preset::Brownian.build().unwrap();
        let f = first_passage_density(&spec, 1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(f, (-0.5f64).exp() / (2.0 * PI).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(f, 0.24197, max_relative = 1e-4);
    }

    #[test]
    fn numeric_inversion_matches_closed_form() {
        let spec = drift_numeric(0.5);
        for t in [0.5, 1.0, 3.0] {
            let ladder = LaplaceLadder::new(&spec, t).unwrap();
            let (f, _) = ladder.invert_both(|p| p.hitting_laplace(1.0, 0.0));
            assert_relative_eq!(f, bm_passage_density(0.5, t, 1.0, 0.0), max_relative = 2e-3);
            let (c, _) = ladder.invert_both(|p| p.hitting_laplace(1.0, 0.0) / p.alpha());
            assert_relative_eq!(c, bm_hitting_cdf(0.5, t, 1.0, 0.0), max_relative = 2e-3);
        }
        let c = hitting_cdf(&spec, 3.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(c, bm_hitting_cdf(0.5, 3.0, 1.0, 0.0), max_relative = 1e-3);
        // sharp peak at short times: orders 12 and 10 disagree and it is reported
        assert!(matches!(first_passage_density(&spec, 0.25, 1.0, 0.0), Err(Error::InversionUnstable { .. })));
    }

    #[test]
    fn total_passage_mass() {
        let g = |mu: f64| {
            adaptive(|t| if t > 0.0 { bm_passage_density(mu, t, 1.0, 0.0) } else { 0.0 }, 0.0, 1e3, 1e-12, 1e-10)
                + adaptive(|t| bm_passage_density(mu, t, 1.0, 0.0), 1e3, 1e7, 1e-12, 1e-10)
        };
        assert_relative_eq!(g(0.5), (-1.0f64).exp(), max_relative = 1e-6);
        assert!((g(0.0) - 1.0).abs() < 1e-2);
        assert_relative_eq!(bm_hitting_cdf(0.5, 1e6, 1.0, 0.0), (-1.0f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn laplace_round_trip() {
        let spec = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        for alpha in [0.5, 1.0, 2.0] {
            let pair = solve_eigenfunctions(&spec, alpha, spec.window()).unwrap();
            let lt = adaptive(|t| if t > 0.0 { (-alpha * t).exp() * bm_passage_density(0.5, t, 1.0, 0.0) } else { 0.0 }, 0.0, 80.0, 1e-13, 1e-10);
            assert_relative_eq!(lt, pair.hitting_laplace(1.0, 0.0), max_relative = 1e-6);
        }
    }

    #[test]
    fn killed_density_symmetry_and_image_formula() {
        let spec = Preset::Brownian.build().unwrap();
        let (t, x, z) = (0.7, 0.4, 1.3);
        let q = killed_density(&spec, t, x, z, 0.0).unwrap();
        let p = |u: f64| (-u * u / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        assert_relative_eq!(q, 0.5 * (p(z - x) - p(z + x)), max_relative = 1e-12);
        assert_relative_eq!(q, killed_density(&spec, t, z, x, 0.0).unwrap(), max_relative = 1e-12);
        assert_eq!(killed_density(&spec, t, -0.1, z, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn crank_nicolson_matches_images_and_is_symmetric() {
        let spec = drift_numeric(0.5);
        let exact = |x: f64, z: f64| bm_killed_density(0.5, 0.5, x, z, 0.0);
        let k = KilledKernel::solve(&spec, 0.0, 1.0, &[0.5], None).unwrap();
        for z in [0.3, 1.0, 1.8] {
            assert_relative_eq!(k.density(0, z), exact(1.0, z), max_relative = 2e-3);
        }
        let k2 = KilledKernel::solve(&spec, 0.0, 1.8, &[0.5], None).unwrap();
        assert_relative_eq!(k.density(0, 1.8), k2.density(0, 1.0), max_relative = 2e-3);
    }

    #[test]
    fn oversized_pde_step_is_rejected() {
        let spec = drift_numeric(0.0);
        assert!(matches!(
            KilledKernel::solve(&spec, 0.0, 1.0, &[1.0], Some(1.0)),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn chapman_kolmogorov_for_killed_brownian() {
        let (s, t, x, z) = (0.3, 0.5, 0.6, 1.1);
        let lhs = adaptive(|w| bm_killed_density(0.0, s, x, w, 0.0) * bm_killed_density(0.0, t, w, z, 0.0) * 2.0, 0.0, 12.0, 1e-14, 1e-11);
        assert_relative_eq!(lhs, bm_killed_density(0.0, s + t, x, z, 0.0), max_relative = 1e-6);
    }

    #[test]
    fn entrance_density_two_routes() {
        let spec = Preset::Brownian.build().unwrap();
        for (t, x) in [(0.2, 0.3), (1.0, 1.0), (2.0, 0.5)] {
            let a = entrance_density(&spec, t, x, 0.0).unwrap();
            let b = entrance_density_from_killed_kernel(&spec, t, x, 0.0).unwrap();
            assert_relative_eq!(a, x * (-x * x / (2.0 * t)).exp() / (2.0 * PI * t * t * t).sqrt(), max_relative = 1e-12);
            assert_relative_eq!(a, b, max_relative = 1e-5);
        }
        assert_eq!(entrance_density(&spec, 1.0, -0.5, 0.0).unwrap(), 0.0);
        let numeric = drift_numeric(0.5);
        let a = entrance_density_from_killed_kernel(&numeric, 0.5, 1.0, 0.0).unwrap();
        assert_relative_eq!(a, bm_passage_density(0.5, 0.5, 1.0, 0.0), max_relative = 5e-3);
    }

    #[test]
    fn exit_law_property() {
        // ∫ q↑(t; z) q^0(u; z, x) m(dz) = q↑(t + u; x)
        let (t, u, x) = (0.4, 0.3, 0.8);
        let lhs = adaptive(
            |z| bm_passage_density(0.0, t, z, 0.0) * bm_killed_density(0.0, u, z, x, 0.0) * 2.0,
            0.0,
            12.0,
            1e-14,
            1e-11,
        );
        assert_relative_eq!(lhs, bm_passage_density(0.0, t + u, x, 0.0), max_relative = 1e-6);
    }

    #[test]
    fn tail_mass_closed_form_and_inversion() {
        let spec = Preset::Brownian.build().unwrap();
        let eps = 0.01;
        assert_relative_eq!(excursion_tail_mass(&spec, 0.0, eps).unwrap(), 2.0 / (2.0 * PI * eps).sqrt(), max_relative = 1e-12);
        let drift = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        let closed = excursion_tail_mass(&drift, 0.3, 0.2).unwrap();
        let direct = adaptive(
            |z| bm_passage_density(0.5, 0.2, z, 0.3) * 2.0 * (z).exp(),
            0.3,
            8.0,
            1e-14,
            1e-11,
        );
        assert_relative_eq!(closed, direct, max_relative = 1e-5);
        let numeric = excursion_tail_mass(&drift_numeric(0.5), 0.3, 0.2).unwrap();
        assert_relative_eq!(numeric, closed, max_relative = 1e-3);
        // nonincreasing in ε
        let m: Vec<f64> = [0.01, 0.05, 0.2, 1.0].iter().map(|&e| excursion_tail_mass(&drift, 0.0, e).unwrap()).collect();
        assert!(m.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn resolvent_splitting_identity() {
        let spec = Preset::Brownian.build().unwrap();
        let alpha = 1.0;
        let pair = solve_eigenfunctions(&spec, alpha, spec.window()).unwrap();
        let f = |z: f64| (-(z - 0.5).powi(2)).exp();
        let uf = pair.resolvent_apply_fn(f);
        for (x, y) in [(0.5, 0.0), (1.2, -0.4), (0.1, 0.05)] {
            let v = killed_resolvent(&spec, alpha, x, y, f).unwrap();
            let w = pair.excursion_resolvent(y, f);
            let i = spec.window().nearest(x);
            let lhs = uf[i];
            let x_node = spec.window().x(i);
            let v = if (x_node - x).abs() > 1e-12 { killed_resolvent(&spec, alpha, x_node, y, f).unwrap() } else { v };
            assert_relative_eq!(lhs, v + pair.resolvent_density(x_node, y) * w, max_relative = 1e-3);
        }
    }
}
