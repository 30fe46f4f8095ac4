//! Goodness-of-fit tests and mergeable accumulators.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const KS_MIN_SAMPLES: usize = 30;

/// Samples with optional nonnegative weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EmpiricalLaw {
    samples: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl EmpiricalLaw {
    pub fn new(samples: Vec<f64>) -> Self {
        EmpiricalLaw { samples, weights: None }
    }

    pub fn weighted(samples: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if samples.len() != weights.len() {
            return Err(Error::Domain(format!("{} samples but {} weights", samples.len(), weights.len())));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0 && total.is_finite()) {
            return Err(Error::Domain("weights must be nonnegative with a positive finite total".into()));
        }
        Ok(EmpiricalLaw { samples, weights: Some(weights) })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Kish effective sample size; equals `len` without weights.
    pub fn effective_size(&self) -> f64 {
        match &self.weights {
            None => self.samples.len() as f64,
            Some(w) => {
                let s: f64 = w.iter().sum();
                let s2: f64 = w.iter().map(|w| w * w).sum();
                s * s / s2
            }
        }
    }

    /// Sorted `(value, cumulative weight fraction)` steps.
    fn steps(&self) -> Vec<(f64, f64)> {
        let mut idx: Vec<usize> = (0..self.samples.len()).collect();
        idx.sort_by(|&a, &b| self.samples[a].total_cmp(&self.samples[b]));
        let w = |i: usize| self.weights.as_ref().map_or(1.0, |w| w[i]);
        let total: f64 = idx.iter().map(|&i| w(i)).sum();
        let mut acc = 0.0;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        for i in idx {
            acc += w(i);
            let x = self.samples[i];
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = acc / total,
                _ => out.push((x, acc / total)),
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        match &self.weights {
            None => self.samples.iter().sum::<f64>() / self.samples.len() as f64,
            Some(w) => self.samples.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / w.iter().sum::<f64>(),
        }
    }
}

impl From<Vec<f64>> for EmpiricalLaw {
    fn from(samples: Vec<f64>) -> Self {
        EmpiricalLaw::new(samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Ks,
    Ks2,
    Chi2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GofReport {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl GofReport {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // small-λ series for the cdf
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=8).map(|k| (c * ((2 * k - 1) as f64).powi(2)).exp()).sum::<f64>() * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let sf: f64 = (1..=100)
        .map(|k| {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
        })
        .sum::<f64>()
        * 2.0;
    sf.clamp(0.0, 1.0)
}

fn kolmogorov_p(n_eff: f64, d: f64) -> f64 {
    let rn = n_eff.sqrt();
    kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)
}

/// One-sample KS test against a continuous cdf.
pub fn ks_test(law: &EmpiricalLaw, cdf: impl Fn(f64) -> f64) -> Result<GofReport> {
    if law.len() < KS_MIN_SAMPLES {
        return Err(Error::TooFewSamples { test: "ks", n: law.len(), min: KS_MIN_SAMPLES });
    }
    let mut d: f64 = 0.0;
    let mut prev_emp = 0.0;
    let mut prev_cdf = f64::NEG_INFINITY;
    for (x, emp) in law.steps() {
        let f = cdf(x);
        if !f.is_finite() || f < prev_cdf - 1e-12 || !(-1e-12..=1.0 + 1e-12).contains(&f) {
            return Err(Error::NonMonotoneCdf { x });
        }
        prev_cdf = f;
        d = d.max((emp - f).abs()).max((f - prev_emp).abs());
        prev_emp = emp;
    }
    Ok(GofReport { test: TestKind::Ks, statistic: d, p_value: kolmogorov_p(law.effective_size(), d), n: law.len() })
}

/// Two-sample KS test.
pub fn ks2_test(a: &EmpiricalLaw, b: &EmpiricalLaw) -> Result<GofReport> {
    for l in [a, b] {
        if l.len() < KS_MIN_SAMPLES {
            return Err(Error::TooFewSamples { test: "ks2", n: l.len(), min: KS_MIN_SAMPLES });
        }
    }
    let (sa, sb) = (a.steps(), b.steps());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < sa.len() || j < sb.len() {
        let xa = sa.get(i).map_or(f64::INFINITY, |s| s.0);
        let xb = sb.get(j).map_or(f64::INFINITY, |s| s.0);
        let x = xa.min(xb);
        if xa == x {
            fa = sa[i].1;
            i += 1;
        }
        if xb == x {
            fb = sb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let (na, nb) = (a.effective_size(), b.effective_size());
    Ok(GofReport { test: TestKind::Ks2, statistic: d, p_value: kolmogorov_p(na * nb / (na + nb), d), n: a.len() + b.len() })
}

/// Adjacent bins merged until every expected count is at least 5.
pub fn pool_bins(counts: &[f64], expected: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut c_out = Vec::new();
    let mut e_out = Vec::new();
    let (mut c, mut e) = (0.0, 0.0);
    for (&ci, &ei) in counts.iter().zip(expected) {
        c += ci;
        e += ei;
        if e >= 5.0 {
            c_out.push(c);
            e_out.push(e);
            c = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || c > 0.0 {
        match (c_out.last_mut(), e_out.last_mut()) {
            (Some(lc), Some(le)) => {
                *lc += c;
                *le += e;
            }
            _ => {
                c_out.push(c);
                e_out.push(e);
            }
        }
    }
    (c_out, e_out)
}

/// Pearson chi-square test with `bins − 1` degrees of freedom after pooling.
pub fn chi2_test(counts: &[f64], expected: &[f64]) -> Result<GofReport> {
    if counts.len() != expected.len() {
        return Err(Error::Domain(format!("{} counts but {} expected bins", counts.len(), expected.len())));
    }
    if expected.iter().all(|&e| e <= 0.0) {
        return Err(Error::ZeroExpected);
    }
    let n = counts.iter().sum::<f64>().round() as usize;
    let (c, e) = pool_bins(counts, expected);
    let stat: f64 = c.iter().zip(&e).map(|(c, e)| (c - e).powi(2) / e).sum();
    let dof = c.len().saturating_sub(1);
    let p = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN)
    };
    Ok(GofReport { test: TestKind::Chi2, statistic: stat, p_value: p.clamp(0.0, 1.0), n })
}

/// Streaming mean and variance; merges exactly in any order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Welford) -> Welford {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.n.max(1) as f64).sqrt()
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn kolmogorov_quantiles() {
        assert_relative_eq!(kolmogorov_sf(1.358), 0.05, epsilon = 5e-4);
        assert_relative_eq!(kolmogorov_sf(1.628), 0.01, epsilon = 2e-4);
        // the two series agree where they meet
        let a = kolmogorov_sf(0.999_999);
        let b = kolmogorov_sf(1.000_001);
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn uniform_sample_statistic_below_quantile() {
        let mut rng = stream(1, 0);
        let law = EmpiricalLaw::new((0..10_000).map(|_| rng.random::<f64>()).collect());
        let r = ks_test(&law, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic < 0.0163, "D = {}", r.statistic);
    }

    #[test]
    fn ks_null_calibration() {
        let mut low = 0;
        for rep in 0..200 {
            let mut rng = stream(2, rep);
            let law = EmpiricalLaw::new((0..500).map(|_| rng.random::<f64>()).collect());
            if ks_test(&law, |x| x).unwrap().p_value < 0.05 {
                low += 1;
            }
        }
        let frac = low as f64 / 200.0;
        assert!((0.01..=0.12).contains(&frac), "{frac}");
    }

    #[test]
    fn constant_sample_is_rejected() {
        let law = EmpiricalLaw::new(vec![0.5; 100]);
        assert!(ks_test(&law, |x| x).unwrap().p_value < 1e-10);
    }

    #[test]
    fn ks_errors() {
        assert!(matches!(ks_test(&EmpiricalLaw::new(vec![0.1; 5]), |x| x), Err(Error::TooFewSamples { .. })));
        let law = EmpiricalLaw::new((0..100).map(|i| i as f64 / 100.0).collect());
        assert!(matches!(ks_test(&law, |x| 1.0 - x), Err(Error::NonMonotoneCdf { .. })));
    }

    #[test]
    fn ks_invariant_under_monotone_transform() {
        let mut rng = stream(3, 0);
        let xs: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let a = ks_test(&EmpiricalLaw::new(xs.clone()), |x| x).unwrap();
        let b = ks_test(&EmpiricalLaw::new(xs.iter().map(|x| x.exp()).collect()), |y: f64| y.ln()).unwrap();
        assert_relative_eq!(a.statistic, b.statistic, epsilon = 1e-12);
    }

    #[test]
    fn weighted_law_matches_repeated_samples() {
        let a = EmpiricalLaw::weighted((0..50).map(|i| i as f64).collect(), vec![2.0; 50]).unwrap();
        let b = EmpiricalLaw::new((0..100).map(|i| (i / 2) as f64).collect());
        let f = |x: f64| ((x + 0.5) / 50.0).clamp(0.0, 1.0);
        assert_relative_eq!(ks_test(&a, f).unwrap().statistic, ks_test(&b, f).unwrap().statistic, epsilon = 1e-12);
        assert!(EmpiricalLaw::weighted(vec![1.0], vec![-1.0]).is_err());
    }

    #[test]
    fn two_sample_extremes() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let a = EmpiricalLaw::new(xs.clone());
        assert_eq!(ks2_test(&a, &a).unwrap().statistic, 0.0);
        let b = EmpiricalLaw::new(xs.iter().map(|x| x + 1000.0).collect());
        assert_eq!(ks2_test(&a, &b).unwrap().statistic, 1.0);
    }

    #[test]
    fn two_sample_null_calibration() {
        let mut pass = 0;
        for rep in 0..200 {
            let mut r1 = stream(4, 2 * rep);
            let mut r2 = stream(4, 2 * rep + 1);
            let a = EmpiricalLaw::new((0..2000).map(|_| StandardNormal.sample(&mut r1)).collect());
            let b = EmpiricalLaw::new((0..2000).map(|_| StandardNormal.sample(&mut r2)).collect());
            if ks2_test(&a, &b).unwrap().p_value > 0.01 {
                pass += 1;
            }
        }
        assert!(pass >= 195, "{pass}");
    }

    #[test]
    fn chi2_examples() {
        let e = [25.0; 4];
        let r = chi2_test(&e, &e).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = chi2_test(&[30.0, 20.0, 25.0, 25.0], &e).unwrap();
        assert_relative_eq!(r.statistic, 2.0, epsilon = 1e-12);
        assert!(matches!(chi2_test(&[1.0], &[0.0]), Err(Error::ZeroExpected)));
        // permuting bins leaves the statistic unchanged
        let r2 = chi2_test(&[25.0, 30.0, 25.0, 20.0], &e).unwrap();
        assert_relative_eq!(r2.statistic, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn small_bins_are_pooled() {
        let (c, e) = pool_bins(&[1.0, 2.0, 10.0, 1.0], &[2.0, 3.0, 10.0, 1.0]);
        assert_eq!(c, vec![3.0, 11.0]);
        assert_eq!(e, vec![5.0, 11.0]);
    }

    #[test]
    fn welford_merge_is_exact() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let whole: Welford = xs.iter().copied().collect();
        let left: Welford = xs[..300].iter().copied().collect();
        let right: Welford = xs[300..].iter().copied().collect();
        let merged = right.merge(left);
        assert_relative_eq!(merged.mean(), whole.mean(), epsilon = 1e-14);
        assert_relative_eq!(merged.variance(), whole.variance(), epsilon = 1e-12);
    }
}
