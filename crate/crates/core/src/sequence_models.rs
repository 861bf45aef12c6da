//! Gaussian sequence models.
//!
//! Two settings share the observation scheme `W_j = β_j + n^{-1/2} ε_j`:
//! the white-noise linear functional `θ = Σ α_i μ_i` with `α_i = i^{-ξ}`
//! and `|μ_i| ≤ c_i = i^{-ν}`, and the sparse normal-means toy model with
//! its lasso and spike-and-slab estimators.

use crate::error::{invalid, require_finite, LabError, Result};
use crate::numeric::{normal_log_pdf, normal_sf, posterior_from_log_ratio, GaussLegendre};
use crate::stochastics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteNoiseSpec {
    pub n: f64,
    pub p: usize,
    pub xi: f64,
    pub nu: f64,
}

impl WhiteNoiseSpec {
    pub fn new(n: f64, p: usize, xi: f64, nu: f64) -> Result<Self> {
        if !(n >= 1.0 && n.is_finite()) {
            return invalid(format!("n must be at least 1, got {n}"));
        }
        if !(xi > 0.0 && xi < 0.5) {
            return invalid(format!("xi must lie in (0, 1/2), got {xi}"));
        }
        if !(nu + xi > 1.0) || !nu.is_finite() {
            return invalid(format!("need nu + xi > 1, got nu={nu}, xi={xi}"));
        }
        let spec = Self { n, p, xi, nu };
        let needed = spec.raw_cutoff();
        if (p as f64) < needed.round() {
            return invalid(format!(
                "p = {p} is below the frequentist cutoff n^(1/(2nu-1)) = {needed:.1}"
            ));
        }
        Ok(spec)
    }

    /// Spec with `p` set to the default cutoff.
    pub fn with_default_length(n: f64, xi: f64, nu: f64) -> Result<Self> {
        let probe = Self { n, p: 0, xi, nu };
        let p = (probe.raw_cutoff().round() as usize).max(1);
        Self::new(n, p, xi, nu)
    }

    fn raw_cutoff(&self) -> f64 {
        self.n.powf(1.0 / (2.0 * self.nu - 1.0))
    }

    /// `round(n^{1/(2ν−1)})` clamped to `[1, p]`.
    pub fn default_cutoff(&self) -> usize {
        let m = self.raw_cutoff().round();
        (m.max(1.0) as usize).min(self.p.max(1))
    }

    /// `α_i = i^{-ξ}`, 1-based.
    pub fn alpha(&self, i: usize) -> f64 {
        (i as f64).powf(-self.xi)
    }

    /// `c_i = i^{-ν}`, 1-based.
    pub fn bound(&self, i: usize) -> f64 {
        (i as f64).powf(-self.nu)
    }

    pub fn noise_sd(&self) -> f64 {
        self.n.powf(-0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteNoiseInstance {
    pub mu: Vec<f64>,
    pub theta: f64,
}

impl WhiteNoiseInstance {
    pub fn new(spec: &WhiteNoiseSpec, mu: Vec<f64>) -> Result<Self> {
        if mu.len() != spec.p {
            return invalid(format!("mu has length {}, spec p = {}", mu.len(), spec.p));
        }
        for (k, &m) in mu.iter().enumerate() {
            let c = spec.bound(k + 1);
            if !m.is_finite() || m.abs() > c * (1.0 + 1e-12) {
                return invalid(format!("|mu_{}| = {} exceeds c = {c}", k + 1, m.abs()));
            }
        }
        let theta = mu
            .iter()
            .enumerate()
            .map(|(k, m)| spec.alpha(k + 1) * m)
            .sum();
        Ok(Self { mu, theta })
    }

    /// `μ_i = c_i·sign(α_i)` for `m_star < i < m`, zero elsewhere.
    pub fn adversarial(spec: &WhiteNoiseSpec, m_star: usize, m: usize) -> Result<Self> {
        let mu = (1..=spec.p)
            .map(|i| if i > m_star && i < m { spec.bound(i) } else { 0.0 })
            .collect();
        Self::new(spec, mu)
    }
}

/// Observations `W_j = β_j + n^{-1/2} ε_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub w: Vec<f64>,
    pub n: f64,
}

impl SequenceData {
    pub fn simulate(means: &[f64], n: f64, stream: &mut RngStream) -> Result<Self> {
        if !(n > 0.0 && n.is_finite()) {
            return invalid(format!("noise scale n must be positive, got {n}"));
        }
        let sd = n.powf(-0.5);
        let w = means
            .iter()
            .map(|&m| m + sd * stream.standard_normal())
            .collect();
        Ok(Self { w, n })
    }
}

fn check_shape(data: &SequenceData, spec: &WhiteNoiseSpec) -> Result<()> {
    if data.w.len() != spec.p {
        return invalid(format!(
            "data length {} does not match p = {}",
            data.w.len(),
            spec.p
        ));
    }
    Ok(())
}

/// `Σ_{i≤m} α_i X_i`.
pub fn freq_functional_estimate(data: &SequenceData, spec: &WhiteNoiseSpec, m: usize) -> Result<f64> {
    check_shape(data, spec)?;
    if m < 1 || m > spec.p {
        return invalid(format!("cutoff m = {m} outside [1, {}]", spec.p));
    }
    Ok(data.w[..m]
        .iter()
        .enumerate()
        .map(|(k, x)| spec.alpha(k + 1) * x)
        .sum())
}

/// Exact bias and variance of the truncated estimator.
pub fn freq_functional_risk(spec: &WhiteNoiseSpec, mu: &[f64], m: usize) -> Result<(f64, f64)> {
    if mu.len() != spec.p {
        return invalid("mu length does not match spec");
    }
    if m < 1 || m > spec.p {
        return invalid(format!("cutoff m = {m} outside [1, {}]", spec.p));
    }
    let bias = -mu[m..]
        .iter()
        .enumerate()
        .map(|(k, v)| spec.alpha(m + k + 1) * v)
        .sum::<f64>();
    let variance = (1..=m).map(|i| spec.alpha(i).powi(2)).sum::<f64>() / spec.n;
    Ok((bias, variance))
}

/// Symmetric prior shapes on `[−c, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorShape {
    #[default]
    Uniform,
    Triangular,
}

impl PriorShape {
    /// Unnormalized log density at `t = μ/c ∈ [−1, 1]`.
    fn log_shape(self, t: f64) -> f64 {
        match self {
            PriorShape::Uniform => 0.0,
            PriorShape::Triangular => (1.0 - t.abs()).max(0.0).ln(),
        }
    }
}

const MAX_PRIOR_NODES: usize = 1 << 14;
const POSTERIOR_TOL: f64 = 1e-8;

/// Gauss–Legendre nodes with log weights.
struct Rule {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

struct RuleCache {
    base: usize,
    rules: Vec<Rule>,
}

impl RuleCache {
    fn new(base: usize) -> Self {
        Self {
            base,
            rules: Vec::new(),
        }
    }

    fn level(&mut self, j: usize) -> Option<&Rule> {
        while self.rules.len() <= j {
            let n = self.base << self.rules.len();
            if n > MAX_PRIOR_NODES {
                return None;
            }
            let gl = GaussLegendre::new(n);
            self.rules.push(Rule {
                log_weights: gl.weights.iter().map(|w| w.ln()).collect(),
                nodes: gl.nodes,
            });
        }
        Some(&self.rules[j])
    }
}

fn bounded_posterior_once(x: f64, c: f64, sd: f64, shape: PriorShape, gl: &Rule) -> f64 {
    // Nodes on [-c, 0] and [0, c]; weights folded into log space.
    let k = gl.nodes.len();
    let mut logs = Vec::with_capacity(2 * k);
    let mut mus = Vec::with_capacity(2 * k);
    let inv2v = 0.5 / (sd * sd);
    for (sign, _) in [(-1.0, 0), (1.0, 1)] {
        for (t, lw) in gl.nodes.iter().zip(&gl.log_weights) {
            let u = sign * 0.5 * (t + 1.0);
            let mu = u * c;
            let d = mu - x;
            logs.push(lw + shape.log_shape(u) - d * d * inv2v);
            mus.push(mu);
        }
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (l, mu) in logs.iter().zip(&mus) {
        let e = (l - max).exp();
        num += e * mu;
        den += e;
    }
    num / den
}

/// Posterior mean of μ under the prior `shape` on `[−c, c]` after
/// observing `x ~ N(μ, sd²)`, by Gauss–Legendre quadrature refined by
/// doubling until successive values agree to 1e-8.
pub fn bounded_posterior_mean(x: f64, c: f64, sd: f64, prior_grid: usize, shape: PriorShape) -> Result<f64> {
    let mut cache = RuleCache::new(prior_grid);
    bounded_posterior_mean_cached(x, c, sd, shape, &mut cache)
}

fn bounded_posterior_mean_cached(
    x: f64,
    c: f64,
    sd: f64,
    shape: PriorShape,
    cache: &mut RuleCache,
) -> Result<f64> {
    require_finite("x", x)?;
    if c == 0.0 {
        return Ok(0.0);
    }
    let mut prev = bounded_posterior_once(x, c, sd, shape, cache.level(0).unwrap());
    let mut j = 1;
    loop {
        let Some(gl) = cache.level(j) else {
            return Err(LabError::NonConvergence(format!(
                "posterior quadrature for x={x}, c={c}, sd={sd} did not stabilize to {POSTERIOR_TOL} within {MAX_PRIOR_NODES} nodes"
            )));
        };
        let next = bounded_posterior_once(x, c, sd, shape, gl);
        if (next - prev).abs() <= POSTERIOR_TOL {
            return Ok(next);
        }
        prev = next;
        j += 1;
    }
}

/// `Σ α_i E[μ_i | X_i]` under independent uniform priors on `[−c_i, c_i]`.
pub fn bounded_bayes_functional(data: &SequenceData, spec: &WhiteNoiseSpec, prior_grid: usize) -> Result<f64> {
    bounded_bayes_functional_with(data, spec, prior_grid, PriorShape::Uniform)
}

pub fn bounded_bayes_functional_with(
    data: &SequenceData,
    spec: &WhiteNoiseSpec,
    prior_grid: usize,
    shape: PriorShape,
) -> Result<f64> {
    check_shape(data, spec)?;
    if prior_grid < 3 {
        return invalid(format!("prior_grid must be at least 3, got {prior_grid}"));
    }
    let sd = data.n.powf(-0.5);
    let mut cache = RuleCache::new(prior_grid);
    let mut total = 0.0;
    for (k, &x) in data.w.iter().enumerate() {
        let i = k + 1;
        let post = bounded_posterior_mean_cached(x, spec.bound(i), sd, shape, &mut cache)?;
        total += spec.alpha(i) * post;
    }
    Ok(total)
}

/// Minimizer of `(w − b)² + λ|b|`.
pub fn soft_threshold(w: f64, lambda: f64) -> f64 {
    let h = 0.5 * lambda;
    if w > h {
        w - h
    } else if w < -h {
        w + h
    } else {
        0.0
    }
}

pub fn lasso_toy(data: &SequenceData, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return invalid(format!("lambda must be finite and nonnegative, got {lambda}"));
    }
    Ok(data.w.iter().map(|&w| soft_threshold(w, lambda)).collect())
}

/// Slab probability γ and slab variance τ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeSlabPrior {
    pub gamma: f64,
    pub tau2: f64,
}

impl SpikeSlabPrior {
    pub fn new(gamma: f64, tau2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return invalid(format!("gamma must lie in [0,1], got {gamma}"));
        }
        if !(tau2 > 0.0 && tau2.is_finite()) {
            return invalid(format!("tau2 must be positive, got {tau2}"));
        }
        Ok(Self { gamma, tau2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeSlabPosterior {
    pub mass_at_zero: f64,
    pub slab_mean: f64,
    pub slab_var: f64,
}

impl SpikeSlabPosterior {
    pub fn mixture_mean(&self) -> f64 {
        (1.0 - self.mass_at_zero) * self.slab_mean
    }
}

/// Posterior of β given `W ~ N(β, 1/n)` and the spike-and-slab prior.
///
/// Marginally W is `N(0, 1/n)` under the spike and `N(0, 1/n + τ²)` under
/// the slab; the mass at zero is their weighted ratio, taken in log space.
pub fn spike_slab_posterior(w: f64, n: f64, prior: &SpikeSlabPrior) -> Result<SpikeSlabPosterior> {
    require_finite("w", w)?;
    if !(n >= 1.0 && n.is_finite()) {
        return invalid(format!("n must be at least 1, got {n}"));
    }
    SpikeSlabPrior::new(prior.gamma, prior.tau2)?;
    let (g, t2) = (prior.gamma, prior.tau2);
    let shrink = n * t2 / (1.0 + n * t2);
    let slab_mean = shrink * w;
    let slab_var = t2 / (1.0 + n * t2);
    let mass_at_zero = if g == 0.0 {
        1.0
    } else if g == 1.0 {
        0.0
    } else {
        let log_spike = (1.0 - g).ln() + normal_log_pdf(w, 0.0, 1.0 / n);
        let log_slab = g.ln() + normal_log_pdf(w, 0.0, 1.0 / n + t2);
        posterior_from_log_ratio(log_spike - log_slab)
    };
    if mass_at_zero.is_nan() {
        return Err(LabError::Numerical(format!(
            "spike-slab posterior is NaN at w={w}, n={n}"
        )));
    }
    Ok(SpikeSlabPosterior {
        mass_at_zero,
        slab_mean,
        slab_var,
    })
}

/// `√(8(ln p − ln n/(2α))/n)`.
pub fn optimal_lambda(n: f64, p: f64, alpha: f64) -> Result<f64> {
    if !(n > 1.0 && p > n && alpha > 0.5) {
        return invalid(format!("need p > n > 1 and alpha > 1/2, got n={n}, p={p}, alpha={alpha}"));
    }
    let arg = 8.0 * (p.ln() - n.ln() / (2.0 * alpha)) / n;
    if arg < 0.0 {
        return invalid(format!("invalid regime: square-root argument {arg} is negative"));
    }
    Ok(arg.sqrt())
}

/// Relative residual `|LHS − RHS| / LHS` of the tail equation
/// `n^{1/(2α)}/p = 2(1 − Φ(√n λ/2))` at the given λ.
pub fn tail_equation_residual(n: f64, p: f64, alpha: f64, lambda: f64) -> f64 {
    let lhs = n.powf(1.0 / (2.0 * alpha)) / p;
    let rhs = 2.0 * normal_sf(n.sqrt() * lambda / 2.0);
    (lhs - rhs).abs() / lhs
}

/// Root of the tail equation itself, by bisection on λ.
pub fn solve_tail_lambda(n: f64, p: f64, alpha: f64) -> Result<f64> {
    let lhs = n.powf(1.0 / (2.0 * alpha)) / p;
    if !(lhs > 0.0 && lhs < 1.0) {
        return invalid(format!("tail equation has no root: target {lhs}"));
    }
    let f = |lam: f64| 2.0 * normal_sf(n.sqrt() * lam / 2.0) - lhs;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(1.0, 1.0), 0.5);
        assert_eq!(soft_threshold(0.3, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.0, 1.0), -1.5);
    }

    #[test]
    fn spec_rejects_bad_exponents() {
        assert!(WhiteNoiseSpec::new(100.0, 1000, 0.6, 0.9).is_err());
        assert!(WhiteNoiseSpec::new(100.0, 1000, 0.3, 0.6).is_err());
        assert!(WhiteNoiseSpec::new(1e4, 10, 0.3, 0.9).is_err());
    }

    #[test]
    fn spike_slab_edges() {
        let p0 = SpikeSlabPrior::new(0.0, 1.0).unwrap();
        assert_eq!(spike_slab_posterior(3.0, 10.0, &p0).unwrap().mass_at_zero, 1.0);
        let p1 = SpikeSlabPrior::new(1.0, 1.0).unwrap();
        let post = spike_slab_posterior(3.0, 10.0, &p1).unwrap();
        assert_eq!(post.mass_at_zero, 0.0);
        assert!((post.slab_mean - 10.0 * 3.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_vanishes_at_the_root_boundary() {
        // ln p = ln n/(2α) sits just outside p > n, α > 1/2; approach it.
        let n = 1000.0;
        let lam = optimal_lambda(n, n * (1.0 + 1e-12), 0.5 + 1e-12).unwrap();
        assert!(lam < 1e-6, "{lam}");
    }
}
