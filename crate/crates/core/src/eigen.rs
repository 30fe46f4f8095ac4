//! Increasing and decreasing solutions of `G g = α g`, the ruin function
//! `G r = 0`, and the resolvent-level quantities built from them.
//!
//! Solutions are carried in log form: `φ = ln g` and `v = g'/g` solve the
//! Riccati system `φ' = v`, `v' = 2(α + c − b v)/σ² − v²`, integrated with
//! RK4 in the direction in which the wanted solution dominates.

use crate::error::{Error, Result};
use crate::num::{tail_integral, GaussRule, Grid, Tail};
use crate::spec::DiffusionSpec;

/// `(k, a)` with `k = 2(α + c)/σ²` and `a = 2b/σ²`.
fn riccati_coefs(spec: &DiffusionSpec, alpha: f64, x: f64) -> (f64, f64) {
    let s = spec.sigma(x);
    let s2 = s * s;
    (2.0 * (alpha + spec.kill_rate(x)) / s2, 2.0 * spec.drift(x) / s2)
}

/// Root of `k − a v − v² = 0`: the local growth rate of the increasing
/// (`up = true`) or decreasing solution.
fn wkb_rate(k: f64, a: f64, up: bool) -> f64 {
    let disc = (a * a + 4.0 * k).max(0.0).sqrt();
    if up {
        0.5 * (-a + disc)
    } else {
        0.5 * (-a - disc)
    }
}

/// Dirichlet edge: `g` vanishes at the edge node and grows linearly away from it.
#[derive(Clone, Copy, Debug)]
struct DirichletEdge {
    lower: bool,
    /// `ln |g'|` at the edge.
    ln_slope: f64,
    /// `g''/g'` at the edge, in the distance-from-edge variable.
    curvature: f64,
}

/// `ln g` and `g'/g` tabulated on a grid.
#[derive(Clone, Debug)]
pub(crate) struct LogTable {
    grid: Grid,
    phi: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    edge: Option<DirichletEdge>,
}

impl LogTable {
    fn shift(&mut self, by: f64) {
        for p in &mut self.phi {
            *p -= by;
        }
        if let Some(e) = &mut self.edge {
            e.ln_slope -= by;
        }
    }

    /// Cubic `g = p0 t + q t² + c t³` in the Dirichlet cell, `t` the distance to the edge.
    fn edge_cubic(&self, e: &DirichletEdge) -> (f64, f64, f64) {
        let h = self.grid.h();
        let inner = if e.lower { 1 } else { self.grid.len() - 2 };
        let p0 = e.ln_slope.exp();
        let q = 0.5 * e.curvature * p0;
        let g1 = self.phi[inner].exp();
        (p0, q, (g1 - p0 * h - q * h * h) / (h * h * h))
    }

    fn in_edge_cell(&self, x: f64) -> Option<(DirichletEdge, f64)> {
        let e = self.edge?;
        let g = &self.grid;
        let t = if e.lower { x - g.lo() } else { g.hi() - x };
        (t < g.h()).then_some((e, t))
    }

    pub(crate) fn ln_g(&self, x: f64) -> f64 {
        if let Some((e, t)) = self.in_edge_cell(x) {
            if t <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let (p0, q, c) = self.edge_cubic(&e);
            return (t * (p0 + t * (q + c * t))).ln();
        }
        hermite(&self.grid, &self.phi, &self.v, x)
    }

    /// Logarithmic derivative `g'/g` (with respect to `x`).
    pub(crate) fn v(&self, x: f64) -> f64 {
        if let Some((e, t)) = self.in_edge_cell(x) {
            let (p0, q, c) = self.edge_cubic(&e);
            let r = (p0 + t * (2.0 * q + 3.0 * c * t)) / (t * (p0 + t * (q + c * t)));
            return if e.lower { r } else { -r };
        }
        hermite(&self.grid, &self.v, &self.dv, x)
    }
}

/// Cubic Hermite on a grid with linear extension outside it.
fn hermite(grid: &Grid, y: &[f64], d: &[f64], x: f64) -> f64 {
    if x <= grid.lo() {
        return y[0] + d[0] * (x - grid.lo());
    }
    if x >= grid.hi() {
        let n = grid.len() - 1;
        return y[n] + d[n] * (x - grid.hi());
    }
    let (i, t) = grid.locate(x);
    let h = grid.h();
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y[i]
        + (t3 - 2.0 * t2 + t) * h * d[i]
        + (-2.0 * t3 + 3.0 * t2) * y[i + 1]
        + (t3 - t2) * h * d[i + 1]
}

/// How the sweep is started at its first node.
enum Start {
    /// Prescribed `g'/g`.
    Robin(f64),
    /// `g = 0` at the edge.
    Dirichlet,
}

fn sweep(spec: &DiffusionSpec, grid: &Grid, alpha: f64, upward: bool, start: Start) -> Result<LogTable> {
    let n = grid.len();
    let mut phi = vec![0.0; n];
    let mut v = vec![0.0; n];
    let order: Vec<usize> = if upward { (0..n).collect() } else { (0..n).rev().collect() };
    let h_grid = grid.h();
    let h = if upward { h_grid } else { -h_grid };
    let f = |x: f64, v: f64| {
        let (k, a) = riccati_coefs(spec, alpha, x);
        k - a * v - v * v
    };

    let mut edge = None;
    let first_free = match start {
        Start::Robin(v0) => {
            v[order[0]] = v0;
            1
        }
        Start::Dirichlet => {
            // near the edge g'/g ~ 1/t is stiff for the Riccati form, so the
            // linear system (g, g') is carried from g = 0, g' = ±1 over the
            // first cells
            let x0 = grid.x(order[0]);
            let cells = (n - 1).min(50);
            let subs = 16;
            let hs = h / subs as f64;
            let (mut g, mut p) = (0.0, if upward { 1.0 } else { -1.0 });
            let rhs = |x: f64, g: f64, p: f64| {
                let (k, a) = riccati_coefs(spec, alpha, x);
                (p, k * g - a * p)
            };
            for cell in 1..=cells {
                let xc = grid.x(order[cell - 1]);
                for j in 0..subs {
                    let x = xc + j as f64 * hs;
                    let (k1g, k1p) = rhs(x, g, p);
                    let (k2g, k2p) = rhs(x + 0.5 * hs, g + 0.5 * hs * k1g, p + 0.5 * hs * k1p);
                    let (k3g, k3p) = rhs(x + 0.5 * hs, g + 0.5 * hs * k2g, p + 0.5 * hs * k2p);
                    let (k4g, k4p) = rhs(x + hs, g + hs * k3g, p + hs * k3p);
                    g += hs / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
                    p += hs / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                }
                if !(g > 0.0 && g.is_finite()) {
                    return Err(Error::BoundaryCondition(format!("solution from the absorbing edge at {x0} is not positive")));
                }
                phi[order[cell]] = g.ln();
                v[order[cell]] = p / g;
            }
            phi[order[0]] = f64::NEG_INFINITY;
            v[order[0]] = if upward { f64::INFINITY } else { f64::NEG_INFINITY };
            // g'' = k g − a g' with g = 0; a flips sign with the direction
            let (_, a) = riccati_coefs(spec, alpha, x0);
            let curvature = if upward { -a } else { a };
            edge = Some(DirichletEdge { lower: upward, ln_slope: 0.0, curvature });
            cells + 1
        }
    };

    for step in first_free..n {
        let (prev, cur) = (order[step - 1], order[step]);
        let x_prev = grid.x(prev);
        let (mut vv, mut pp) = (v[prev], phi[prev]);
        let (k, a) = riccati_coefs(spec, alpha, x_prev);
        let stiff = (a * a + 4.0 * k.abs()).sqrt() + a.abs() + 2.0 * vv.abs();
        let subs = ((h_grid * stiff / 0.15).ceil() as usize).clamp(1, 4096);
        let hs = h / subs as f64;
        for j in 0..subs {
            let x = x_prev + j as f64 * hs;
            let k1 = f(x, vv);
            let v2 = vv + 0.5 * hs * k1;
            let k2 = f(x + 0.5 * hs, v2);
            let v3 = vv + 0.5 * hs * k2;
            let k3 = f(x + 0.5 * hs, v3);
            let v4 = vv + hs * k3;
            let k4 = f(x + hs, v4);
            pp += hs / 6.0 * (vv + 2.0 * v2 + 2.0 * v3 + v4);
            vv += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !(vv.is_finite() && pp.is_finite()) {
            return Err(Error::NonFinite { x: grid.x(cur), what: "eigenfunction log-derivative" });
        }
        v[cur] = vv;
        phi[cur] = pp;
    }

    let dv = (0..n).map(|i| if v[i].is_finite() { f(grid.x(i), v[i]) } else { 0.0 }).collect();
    Ok(LogTable { grid: *grid, phi, v, dv, edge })
}

fn anchor_node(grid: &Grid, anchor: f64) -> usize {
    let i = grid.nearest(anchor);
    i.clamp(1, grid.len() - 2)
}

/// Increasing and decreasing solutions of `G g = α g`, normalized to 1 at the
/// anchor node.
#[derive(Clone, Debug)]
pub struct EigenPair {
    alpha: f64,
    grid: Grid,
    g1: LogTable,
    g2: LogTable,
    ln_sp: Vec<f64>,
    ln_mp: Vec<f64>,
    ln_w: f64,
    anchor: f64,
}

/// Solves for `g1` (increasing) and `g2` (decreasing) on `grid`.
///
/// An absorbing endpoint that coincides with a grid edge gets a Dirichlet
/// condition. Other edges use the local exponential rate, which is exact at
/// natural boundaries of constant-coefficient diffusions.
pub fn solve_eigenfunctions(spec: &DiffusionSpec, alpha: f64, grid: &Grid) -> Result<EigenPair> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let iv = spec.interval();
    let lo_start = if iv.lower_absorbing() && grid.lo() == iv.lower() {
        Start::Dirichlet
    } else {
        let (k, a) = riccati_coefs(spec, alpha, grid.lo());
        Start::Robin(wkb_rate(k, a, true))
    };
    let hi_start = if iv.upper_absorbing() && grid.hi() == iv.upper() {
        Start::Dirichlet
    } else {
        let (k, a) = riccati_coefs(spec, alpha, grid.hi());
        Start::Robin(wkb_rate(k, a, false))
    };
    let mut g1 = sweep(spec, grid, alpha, true, lo_start)?;
    let mut g2 = sweep(spec, grid, alpha, false, hi_start)?;

    let k = anchor_node(grid, spec.anchor());
    g1.shift(g1.phi[k]);
    g2.shift(g2.phi[k]);
    let ln_sp: Vec<f64> = grid.points().map(|x| spec.ln_scale_derivative(x)).collect();
    let ln_mp: Vec<f64> = grid.points().map(|x| spec.speed_density(x).ln()).collect();
    let dv = g1.v[k] - g2.v[k];
    if !(dv > 0.0) {
        return Err(Error::BoundaryCondition(format!("solutions are not independent at the anchor (v1 − v2 = {dv})")));
    }
    let ln_w = dv.ln() - ln_sp[k];
    Ok(EigenPair { alpha, grid: *grid, g1, g2, ln_sp, ln_mp, ln_w, anchor: grid.x(k) })
}

impl EigenPair {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// Wronskian `g1⁺ g2 − g2⁺ g1`, with `⁺` the derivative in scale.
    pub fn wronskian(&self) -> f64 {
        self.ln_w.exp()
    }

    pub fn ln_g1(&self, x: f64) -> f64 {
        self.g1.ln_g(x)
    }

    pub fn ln_g2(&self, x: f64) -> f64 {
        self.g2.ln_g(x)
    }

    pub fn g1(&self, x: f64) -> f64 {
        self.ln_g1(x).exp()
    }

    pub fn g2(&self, x: f64) -> f64 {
        self.ln_g2(x).exp()
    }

    /// `g1'/g1` in the state variable.
    pub fn v1(&self, x: f64) -> f64 {
        self.g1.v(x)
    }

    pub fn v2(&self, x: f64) -> f64 {
        self.g2.v(x)
    }

    pub fn g1_plus(&self, spec: &DiffusionSpec, x: f64) -> f64 {
        self.g1(x) * self.v1(x) / spec.scale_derivative(x)
    }

    pub fn g2_plus(&self, spec: &DiffusionSpec, x: f64) -> f64 {
        self.g2(x) * self.v2(x) / spec.scale_derivative(x)
    }

    /// Relative deviation of the pointwise Wronskian from the stored constant,
    /// at every grid node where both solutions are finite and positive.
    pub fn wronskian_deviation(&self) -> Vec<f64> {
        (0..self.grid.len())
            .filter(|&i| self.g1.phi[i].is_finite() && self.g2.phi[i].is_finite())
            .map(|i| {
                let ln_wi = self.g1.phi[i] + self.g2.phi[i] + (self.g1.v[i] - self.g2.v[i]).ln() - self.ln_sp[i];
                (ln_wi - self.ln_w).exp_m1().abs()
            })
            .collect()
    }

    /// Resolvent density `u^α(x, y)` with respect to `m(dy)`.
    pub fn resolvent_density(&self, x: f64, y: f64) -> f64 {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        (self.ln_g1(a) + self.ln_g2(b) - self.ln_w).exp()
    }

    /// `P^x(e^{−α T_y})`.
    pub fn hitting_laplace(&self, x: f64, y: f64) -> f64 {
        if x == y {
            1.0
        } else if x < y {
            (self.ln_g1(x) - self.ln_g1(y)).exp()
        } else {
            (self.ln_g2(x) - self.ln_g2(y)).exp()
        }
    }

    /// `U^α f` on the grid nodes for `f` tabulated on the same grid.
    ///
    /// Uses the split `U^α f(x) = g2(x)/W ∫_{<x} g1 f dm + g1(x)/W ∫_{>x} g2 f dm`
    /// accumulated cell by cell with ratios that stay bounded, so nothing
    /// overflows. Emits a warning when the window edges cut off more than
    /// `1e-6` of the result at central nodes.
    pub fn resolvent_apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid.len());
        let n = self.grid.len();
        let h = self.grid.h();
        // e1_j = ln g1 + ln m' at node j, similarly e2
        let e1: Vec<f64> = (0..n).map(|j| self.g1.phi[j] + self.ln_mp[j]).collect();
        let e2: Vec<f64> = (0..n).map(|j| self.g2.phi[j] + self.ln_mp[j]).collect();
        let cell = |e: &[f64], i0: usize, i1: usize, reference: f64| -> f64 {
            // integral over [x_i0, x_i1] (adjacent nodes) of exp(e − reference)·f
            let lo = i0.min(i1);
            let val = |j: usize| {
                let w = (e[j] - reference).exp();
                if w.is_finite() {
                    w * f[j]
                } else {
                    0.0
                }
            };
            if lo >= 1 && lo + 2 < n {
                h * (-val(lo - 1) + 13.0 * val(lo) + 13.0 * val(lo + 1) - val(lo + 2)) / 24.0
            } else if lo == 0 {
                h * (5.0 * val(0) + 8.0 * val(1) - val(2)) / 12.0
            } else {
                h * (-val(lo - 1) + 8.0 * val(lo) + 5.0 * val(lo + 1)) / 12.0
            }
        };
        // lower[i] = ∫_{lo}^{x_i} g1 m' f / (g1 m')(x_i)
        let mut lower = vec![0.0; n];
        for i in 1..n {
            let carry = (e1[i - 1] - e1[i]).exp();
            let carried = if carry.is_finite() { lower[i - 1] * carry } else { 0.0 };
            lower[i] = carried + cell(&e1, i - 1, i, e1[i]);
        }
        let mut upper = vec![0.0; n];
        for i in (0..n - 1).rev() {
            let carry = (e2[i + 1] - e2[i]).exp();
            let carried = if carry.is_finite() { upper[i + 1] * carry } else { 0.0 };
            upper[i] = carried + cell(&e2, i, i + 1, e2[i]);
        }
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let pref = (self.g1.phi[i] + self.g2.phi[i] + self.ln_mp[i] - self.ln_w).exp();
                if pref.is_finite() {
                    pref * (lower[i] + upper[i])
                } else {
                    0.0
                }
            })
            .collect();
        let tail = self.truncation_estimate(f[0], f[n - 1]);
        let worst = (n / 4..3 * n / 4)
            .map(|i| tail[i] / out[i].abs().max(1e-300))
            .fold(0.0f64, f64::max);
        if worst > 1e-6 {
            log::warn!("resolvent window truncates up to {worst:.2e} of U^α f at central nodes");
        }
        out
    }

    /// `U^α f` on the grid nodes for a function of the state.
    pub fn resolvent_apply_fn(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let vals: Vec<f64> = self.grid.points().map(f).collect();
        self.resolvent_apply(&vals)
    }

    /// Estimate of the mass of `u^α(x_i, ·) f m'` lying outside the window,
    /// from the exponential decay of `g1 m'` below and `g2 m'` above it.
    fn truncation_estimate(&self, f_lo: f64, f_hi: f64) -> Vec<f64> {
        let n = self.grid.len();
        let h = self.grid.h();
        let iv_closed_lo = self.g1.edge.map(|e| e.lower).unwrap_or(false);
        let iv_closed_hi = self.g2.edge.map(|e| !e.lower).unwrap_or(false);
        let rate_lo = (self.g1.phi[1] + self.ln_mp[1] - self.g1.phi[0] - self.ln_mp[0]) / h;
        let rate_hi = -(self.g2.phi[n - 1] + self.ln_mp[n - 1] - self.g2.phi[n - 2] - self.ln_mp[n - 2]) / h;
        (0..n)
            .map(|i| {
                let mut t = 0.0;
                if !iv_closed_lo {
                    let edge = (self.g1.phi[0] + self.g2.phi[i] + self.ln_mp[0] - self.ln_w).exp();
                    t += if rate_lo > 0.0 { f_lo.abs() * edge / rate_lo } else { f64::INFINITY };
                }
                if !iv_closed_hi {
                    let edge = (self.g1.phi[i] + self.g2.phi[n - 1] + self.ln_mp[n - 1] - self.ln_w).exp();
                    t += if rate_hi > 0.0 { f_hi.abs() * edge / rate_hi } else { f64::INFINITY };
                }
                t
            })
            .collect()
    }

    /// Excursion resolvent `W^α f(y) = ∫_{<y} g1(z)/g1(y) f dm + ∫_{>y} g2(z)/g2(y) f dm`,
    /// integrated over the window.
    pub fn excursion_resolvent(&self, y: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (below, above) = self.excursion_resolvent_parts(y, f);
        below + above
    }

    /// The two halves of the excursion resolvent: excursions below and above `y`.
    pub fn excursion_resolvent_parts(&self, y: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let rule = GaussRule::new(8);
        let g = &self.grid;
        let (l1y, l2y) = (self.ln_g1(y), self.ln_g2(y));
        let below_f = |z: f64| (self.ln_g1(z) - l1y + self.ln_mp_at(z)).exp() * f(z);
        let above_f = |z: f64| (self.ln_g2(z) - l2y + self.ln_mp_at(z)).exp() * f(z);
        let mut below = 0.0;
        let mut above = 0.0;
        let k = g.locate(y.clamp(g.lo(), g.hi())).0;
        for i in 0..g.len() - 1 {
            let (a, b) = (g.x(i), g.x(i + 1));
            if i < k {
                below += rule.integrate(below_f, a, b, 1);
            } else if i > k {
                above += rule.integrate(above_f, a, b, 1);
            } else {
                below += rule.integrate(below_f, a, y.max(a), 1);
                above += rule.integrate(above_f, y.min(b), b, 1);
            }
        }
        let n = g.len();
        if self.g2.edge.is_none() {
            let rate = -(self.g2.phi[n - 1] + self.ln_mp[n - 1] - self.g2.phi[n - 2] - self.ln_mp[n - 2]) / g.h();
            let edge = above_f(g.hi());
            if rate <= 0.0 || edge / rate > 1e-6 * above.abs().max(1e-300) {
                log::warn!("excursion resolvent window truncates mass above y = {y}");
            }
        }
        (below, above)
    }

    fn ln_mp_at(&self, z: f64) -> f64 {
        let g = &self.grid;
        let (i, t) = g.locate(z);
        let t = t.clamp(0.0, 1.0);
        self.ln_mp[i] * (1.0 - t) + self.ln_mp[i + 1] * t
    }
}

/// The decreasing solution of `G r = 0`, normalized by `r(x0) = 1`.
#[derive(Clone, Debug)]
pub struct RuinFunction {
    table: LogTable,
    x0: f64,
    transient: bool,
}

impl RuinFunction {
    /// Solves `G r = 0` on the spec window. A recurrent diffusion gets the
    /// constant solution with `transient` unset.
    pub fn solve(spec: &DiffusionSpec, x0: f64) -> Result<RuinFunction> {
        let grid = *spec.window();
        if !(x0 >= grid.lo() && x0 <= grid.hi()) {
            return Err(Error::Domain(format!("anchor {x0} outside the window [{}, {}]", grid.lo(), grid.hi())));
        }
        let iv = spec.interval();
        let hi = grid.hi();
        let (start, transient) = if iv.upper_absorbing() && hi == iv.upper() {
            (Start::Dirichlet, true)
        } else if !spec.is_conservative() && spec.kill_rate(hi) > 0.0 {
            let (k, a) = riccati_coefs(spec, 0.0, hi);
            (Start::Robin(wkb_rate(k, a, false)), true)
        } else {
            let gl = GaussRule::new(16);
            let tail = tail_integral(
                |near, far| gl.integrate(|z| spec.scale_derivative(z), near.min(far), near.max(far), 2),
                hi,
                iv.upper(),
            );
            match tail {
                Tail::Converged(t) => (Start::Robin(-spec.scale_derivative(hi) / t.abs()), true),
                Tail::Diverged(_) => (Start::Robin(0.0), false),
                Tail::Undetermined(partials) => {
                    return Err(Error::QuadratureNonConvergence { what: "scale integral towards the upper end".into(), partials })
                }
            }
        };
        let mut table = if transient {
            sweep(spec, &grid, 0.0, false, start)?
        } else {
            let n = grid.len();
            LogTable { grid, phi: vec![0.0; n], v: vec![0.0; n], dv: vec![0.0; n], edge: None }
        };
        let shift = table.ln_g(x0);
        table.shift(shift);
        Ok(RuinFunction { table, x0, transient })
    }

    pub fn is_transient(&self) -> bool {
        self.transient
    }

    pub fn anchor(&self) -> f64 {
        self.x0
    }

    pub fn grid(&self) -> &Grid {
        &self.table.grid
    }

    pub fn ln_r(&self, x: f64) -> f64 {
        self.table.ln_g(x)
    }

    pub fn r(&self, x: f64) -> f64 {
        self.ln_r(x).exp()
    }

    /// `r'/r` in the state variable.
    pub fn log_derivative(&self, x: f64) -> f64 {
        self.table.v(x)
    }

    /// `r⁺ = dr/ds`.
    pub fn r_plus(&self, spec: &DiffusionSpec, x: f64) -> f64 {
        self.r(x) * self.log_derivative(x) / spec.scale_derivative(x)
    }

    /// `P^x(T_y < ∞) = r(x)/r(y)` for `y ≤ x`.
    pub fn hitting_probability(&self, x: f64, y: f64) -> f64 {
        if y >= x {
            1.0
        } else {
            (self.ln_r(x) - self.ln_r(y)).exp().min(1.0)
        }
    }

    /// `−r⁺(y)/r(y)`: the escape rate per unit scale.
    pub fn escape_rate(&self, spec: &DiffusionSpec, y: f64) -> f64 {
        (-self.log_derivative(y) / spec.scale_derivative(y)).max(0.0)
    }

}

/// The ruin function of an upward-transient diffusion.
pub fn ruin_function(spec: &DiffusionSpec, x0: f64) -> Result<RuinFunction> {
    let rf = RuinFunction::solve(spec, x0)?;
    if !rf.is_transient() {
        return Err(Error::NotTransient(format!(
            "∫ s' diverges towards the upper end {} so P^x(T_y < ∞) = 1 and r is constant",
            spec.interval().upper()
        )));
    }
    Ok(rf)
}

/// `n↑_y(S_y = ∞) = −r⁺(y)/r(y)`; zero for recurrent diffusions.
pub fn escape_rate(rf: &RuinFunction, spec: &DiffusionSpec, y: f64) -> f64 {
    rf.escape_rate(spec, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Form, Interval, Preset, SpecBuilder};
    use approx::assert_relative_eq;

    fn bm() -> DiffusionSpec {
        Preset::Brownian.build().unwrap()
    }

    #[test]
    fn brownian_eigenfunctions_are_exponentials() {
        let spec = bm();
        let alpha = 1.3;
        let pair = solve_eigenfunctions(&spec, alpha, spec.window()).unwrap();
        let r = (2.0 * alpha).sqrt();
        for x in [-3.0, -0.25, 0.0, 1.7, 4.1] {
            assert_relative_eq!(pair.g1(x), (r * x).exp(), max_relative = 1e-9);
            assert_relative_eq!(pair.g2(x), (-r * x).exp(), max_relative = 1e-9);
        }
        assert_relative_eq!(pair.wronskian(), 2.0 * r, max_relative = 1e-12);
    }

    #[test]
    fn drift_g2_at_one_is_e_minus_two() {
        let spec = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        let pair = solve_eigenfunctions(&spec, 1.0, spec.window()).unwrap();
        assert_relative_eq!(pair.g2(1.0) / pair.g2(0.0), (-2.0f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn wronskian_is_constant_for_ou() {
        let spec = Preset::Ou { theta: 1.0 }.build().unwrap();
        let pair = solve_eigenfunctions(&spec, 0.7, spec.window()).unwrap();
        let worst = pair.wronskian_deviation().into_iter().fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn brownian_resolvent_density() {
        let spec = bm();
        let pair = solve_eigenfunctions(&spec, 1.0, spec.window()).unwrap();
        for (x, y) in [(0.0f64, 0.0f64), (-1.0, 0.5), (2.0, -2.0)] {
            let exact = (-(2f64).sqrt() * (x - y).abs()).exp() / (2.0 * 2f64.sqrt());
            assert_relative_eq!(pair.resolvent_density(x, y), exact, max_relative = 1e-10);
            assert_eq!(pair.resolvent_density(x, y), pair.resolvent_density(y, x));
        }
    }

    #[test]
    fn resolvent_of_one_is_inverse_rate() {
        let spec = bm();
        let pair = solve_eigenfunctions(&spec, 1.0, spec.window()).unwrap();
        let u = pair.resolvent_apply_fn(|_| 1.0);
        let g = spec.window();
        for i in (g.len() / 4..3 * g.len() / 4).step_by(97) {
            assert_relative_eq!(u[i], 1.0, max_relative = 1e-3);
        }
        let killed = SpecBuilder::new(Form::sde(|_| 0.0, |_| 1.0), Interval::real_line()).kill_rate(|_| 0.5).build().unwrap();
        let pair = solve_eigenfunctions(&killed, 1.0, killed.window()).unwrap();
        let u = pair.resolvent_apply_fn(|_| 1.0);
        assert_relative_eq!(u[g.len() / 2], 1.0 / 1.5, max_relative = 1e-3);
    }

    #[test]
    fn hitting_laplace_closed_forms_and_product_rule() {
        let spec = bm();
        let pair = solve_eigenfunctions(&spec, 1.0, spec.window()).unwrap();
        assert_relative_eq!(pair.hitting_laplace(1.0, 0.0), (-(2f64).sqrt()).exp(), max_relative = 1e-9);
        assert_eq!(pair.hitting_laplace(0.3, 0.3), 1.0);
        let ou = Preset::Ou { theta: 1.0 }.build().unwrap();
        let pair = solve_eigenfunctions(&ou, 1.0, ou.window()).unwrap();
        let (x, y, z) = (-1.0, 0.2, 1.5);
        assert_relative_eq!(
            pair.hitting_laplace(x, z),
            pair.hitting_laplace(x, y) * pair.hitting_laplace(y, z),
            max_relative = 1e-10
        );
    }

    #[test]
    fn excursion_resolvent_of_upper_indicator() {
        let spec = bm();
        let pair = solve_eigenfunctions(&spec, 1.0, spec.window()).unwrap();
        let (below, above) = pair.excursion_resolvent_parts(0.0, |z| if z > 0.0 { 1.0 } else { 0.0 });
        assert_relative_eq!(below, 0.0);
        assert_relative_eq!(above, 2f64.sqrt(), max_relative = 1e-6);
    }

    #[test]
    fn ruin_function_for_drift_and_bessel() {
        let spec = Preset::BmDrift { mu: 0.5 }.build().unwrap();
        let rf = ruin_function(&spec, 0.0).unwrap();
        for x in [-4.0, -1.0, 0.0, 2.0, 6.0] {
            assert_relative_eq!(rf.r(x), (-x).exp(), max_relative = 1e-8);
        }
        assert_relative_eq!(rf.escape_rate(&spec, 0.0), 1.0, max_relative = 1e-8);
        assert_relative_eq!(rf.escape_rate(&spec, 1.0), 1f64.exp(), max_relative = 1e-8);

        let bes = Preset::Bessel3.build().unwrap();
        let rf = ruin_function(&bes, 1.0).unwrap();
        for x in [0.5, 2.0, 7.0] {
            assert_relative_eq!(rf.r(x), 1.0 / x, max_relative = 1e-7);
        }
    }

    #[test]
    fn recurrent_brownian_is_rejected_but_escape_rate_is_zero() {
        let spec = bm();
        assert!(matches!(ruin_function(&spec, 0.0), Err(Error::NotTransient(_))));
        let rf = RuinFunction::solve(&spec, 0.0).unwrap();
        assert_eq!(escape_rate(&rf, &spec, 0.3), 0.0);
    }

    #[test]
    fn absorbing_edge_gives_vanishing_g1() {
        let spec = Preset::BrownianAbsorbed.build().unwrap();
        let alpha = 0.8;
        let pair = solve_eigenfunctions(&spec, alpha, spec.window()).unwrap();
        let r = (2.0 * alpha).sqrt();
        // g1 ∝ sinh(r x) on ]0, ∞[
        let norm = (r * pair.anchor()).sinh();
        for x in [0.004, 0.5, 3.0] {
            assert_relative_eq!(pair.g1(x), (r * x).sinh() / norm, max_relative = 1e-6);
        }
        assert_eq!(pair.g1(0.0), 0.0);
    }
}
