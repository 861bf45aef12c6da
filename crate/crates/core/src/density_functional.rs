//! Estimating the quadratic functional `θ = ∫f²` of a density on [0, 1].
//!
//! The frequentist estimator splits the sample in two, bins each half
//! into M cells and combines the two histograms so that the squared-noise
//! terms cancel up to a known constant. The Bayesian competitor places a
//! prior on an adversarial family: a base density `f0` plus sign-modulated
//! sine bumps on K bins, and reports the posterior mean of `∫f²`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, LabError, Result};
use crate::experiments::{parallel_map, slope_fit, McSummary};
use crate::numeric::{log_sum_exp, posterior_from_log_ratio, GaussLegendre};
use crate::stochastics::RngStream;

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const CDF_KNOTS: usize = 1 << 14;

/// Piecewise-linear CDF on a uniform knot grid.
#[derive(Debug, Clone)]
struct CdfTable {
    cum: Vec<f64>,
}

impl CdfTable {
    fn build(pdf: &DensityFn) -> Self {
        let gl = GaussLegendre::new(4);
        let h = 1.0 / CDF_KNOTS as f64;
        let mut cum = Vec::with_capacity(CDF_KNOTS + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for j in 0..CDF_KNOTS {
            let a = j as f64 * h;
            acc += gl.integrate(a, a + h, |x| pdf(x));
            cum.push(acc);
        }
        let total = acc;
        for c in &mut cum {
            *c /= total;
        }
        Self { cum }
    }

    fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let pos = x * CDF_KNOTS as f64;
        let j = (pos.floor() as usize).min(CDF_KNOTS - 1);
        let frac = pos - j as f64;
        self.cum[j] + frac * (self.cum[j + 1] - self.cum[j])
    }

    fn inverse(&self, u: f64) -> f64 {
        // Largest j with cum[j] <= u.
        let j = match self.cum.partition_point(|&c| c <= u) {
            0 => 0,
            k => (k - 1).min(CDF_KNOTS - 1),
        };
        let (lo, hi) = (self.cum[j], self.cum[j + 1]);
        let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        (j as f64 + frac.clamp(0.0, 1.0)) / CDF_KNOTS as f64
    }
}

/// A density on [0, 1] with a nominal Hölder exponent.
#[derive(Clone)]
pub struct HolderDensity {
    pdf: DensityFn,
    cdf: Option<DensityFn>,
    pub alpha: f64,
    pub description: String,
    table: Arc<CdfTable>,
}

impl std::fmt::Debug for HolderDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HolderDensity")
            .field("alpha", &self.alpha)
            .field("description", &self.description)
            .finish()
    }
}

fn integral_gl() -> GaussLegendre {
    GaussLegendre::new(8)
}

impl HolderDensity {
    pub fn new(pdf: DensityFn, alpha: f64, description: impl Into<String>) -> Result<Self> {
        if !(alpha > 0.25 && alpha < 0.5) {
            return invalid(format!("Hölder exponent must lie in (1/4, 1/2), got {alpha}"));
        }
        let total = integral_gl().integrate_composite(0.0, 1.0, 1024, |x| pdf(x));
        if (total - 1.0).abs() > 1e-6 {
            return invalid(format!("density integrates to {total}, not 1"));
        }
        let grid_min = (0..10_000)
            .map(|i| pdf((i as f64 + 0.5) / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        if !(grid_min > 0.0) {
            return invalid(format!("density is not bounded away from zero (min {grid_min})"));
        }
        let table = Arc::new(CdfTable::build(&pdf));
        Ok(Self {
            pdf,
            cdf: None,
            alpha,
            description: description.into(),
            table,
        })
    }

    /// Attaches an exact CDF, used where a smooth inverse is needed.
    pub fn with_cdf(mut self, cdf: DensityFn) -> Self {
        self.cdf = Some(cdf);
        self
    }

    pub fn uniform(alpha: f64) -> Result<Self> {
        Ok(Self::new(Arc::new(|_| 1.0), alpha, "uniform on [0,1]")?.with_cdf(Arc::new(|x| x)))
    }

    /// `f(x) = 1 + a·sin(2πx)`, |a| < 1.
    pub fn sine(amplitude: f64, alpha: f64) -> Result<Self> {
        if !(amplitude.abs() < 1.0) {
            return invalid(format!("sine amplitude must be below 1 in magnitude, got {amplitude}"));
        }
        let a = amplitude;
        let d = Self::new(
            Arc::new(move |x| 1.0 + a * (2.0 * PI * x).sin()),
            alpha,
            format!("1 + {a} sin(2 pi x)"),
        )?;
        Ok(d.with_cdf(Arc::new(move |x| x + a * (1.0 - (2.0 * PI * x).cos()) / (2.0 * PI))))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (self.pdf)(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.cdf {
            Some(c) => c(x),
            None => self.table.cdf(x),
        }
    }

    /// `∫ f^k` by composite Gauss–Legendre.
    pub fn moment_integral(&self, k: i32) -> f64 {
        integral_gl().integrate_composite(0.0, 1.0, 1024, |x| self.pdf(x).powi(k))
    }

    /// `θ = ∫f²`.
    pub fn theta(&self) -> f64 {
        self.moment_integral(2)
    }

    /// `var f(X) = ∫f³ − (∫f²)²`.
    pub fn variance_of_f(&self) -> f64 {
        let t = self.theta();
        self.moment_integral(3) - t * t
    }

    fn sample_one(&self, stream: &mut RngStream) -> f64 {
        self.table.inverse(stream.uniform())
    }
}

/// `∫_{-1}^{0} ((π/2) sin(πs))² ds`, the per-bin squared-bump constant.
pub fn bump_square_constant() -> f64 {
    GaussLegendre::new(64).integrate(-1.0, 0.0, |s| (0.5 * PI * (PI * s).sin()).powi(2))
}

/// The prior family: `f0` plus `±a K^{-α} (π/2) sin(π(Kx − k))` on bin k.
#[derive(Debug, Clone)]
pub struct AdversarialFamily {
    pub f0: HolderDensity,
    pub k: usize,
    pub amplitude: f64,
    base_mass: Vec<f64>,
    cross: Vec<f64>,
    delta: f64,
    theta_const: f64,
    bump_sq: f64,
}

impl AdversarialFamily {
    pub fn new(f0: HolderDensity, k: usize, amplitude: f64) -> Result<Self> {
        if k < 2 || k % 2 != 0 {
            return invalid(format!("bin count K must be even and at least 2, got {k}"));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return invalid(format!("amplitude must be positive, got {amplitude}"));
        }
        let kf = k as f64;
        let height = amplitude * kf.powf(-f0.alpha);
        // Worst sign everywhere: f0 − height·(π/2)|sin| on a 1e5 grid.
        let grid = 100_000;
        for i in 0..grid {
            let x = (i as f64 + 0.5) / grid as f64;
            let s = (PI * (kf * x - (kf * x).ceil())).sin().abs();
            if f0.pdf(x) - height * 0.5 * PI * s < 0.0 {
                return invalid(format!(
                    "adversarial family with K={k}, amplitude={amplitude} is negative near x={x:.5}"
                ));
            }
        }
        let gl = GaussLegendre::new(16);
        let mut base_mass = Vec::with_capacity(k);
        let mut cross = Vec::with_capacity(k);
        for b in 1..=k {
            let lo = (b - 1) as f64 / kf;
            let hi = b as f64 / kf;
            base_mass.push(match &f0.cdf {
                Some(c) => c(hi) - c(lo),
                None => gl.integrate(lo, hi, |x| f0.pdf(x)),
            });
            let bf = b as f64;
            let bump = gl.integrate(lo, hi, |x| f0.pdf(x) * 0.5 * PI * (PI * (kf * x - bf)).sin());
            cross.push(2.0 * height * bump);
        }
        let bump_sq = bump_square_constant();
        let theta_const = f0.theta() + amplitude * amplitude * bump_sq * kf.powf(-2.0 * f0.alpha);
        Ok(Self {
            delta: amplitude * kf.powf(-(1.0 + f0.alpha)),
            f0,
            k,
            amplitude,
            base_mass,
            cross,
            theta_const,
            bump_sq,
        })
    }

    /// Base-density mass of each bin.
    pub fn base_mass(&self) -> &[f64] {
        &self.base_mass
    }

    /// Cross terms `g_k`, so that `θ(ξ) = const + Σ ξ_k g_k`.
    pub fn cross_terms(&self) -> &[f64] {
        &self.cross
    }

    /// Magnitude of the bin-mass shift, `a K^{-(1+α)}`.
    pub fn mass_shift(&self) -> f64 {
        self.delta
    }

    /// `∫f0² + a² (π²/8) K^{-2α}`, the sign-free part of θ.
    pub fn theta_constant(&self) -> f64 {
        self.theta_const
    }

    /// Squared-bump constant actually used (quadrature, ≈ π²/8).
    pub fn bump_square(&self) -> f64 {
        self.bump_sq
    }

    /// Bin mass when the bin's sign is `s`.
    pub fn bin_mass(&self, bin: usize, s: i8) -> f64 {
        self.base_mass[bin] - f64::from(s) * self.delta
    }

    pub fn theta_of(&self, xi: &[i8]) -> f64 {
        self.theta_const
            + xi
                .iter()
                .zip(&self.cross)
                .map(|(s, g)| f64::from(*s) * g)
                .sum::<f64>()
    }
}

/// A member of the adversarial family with a fixed balanced sign vector.
#[derive(Debug, Clone)]
pub struct AdversarialDensity {
    pub family: Arc<AdversarialFamily>,
    pub xi: Vec<i8>,
    cum_mass: Vec<f64>,
}

impl AdversarialDensity {
    pub fn new(family: Arc<AdversarialFamily>, xi: Vec<i8>) -> Result<Self> {
        if xi.len() != family.k {
            return invalid(format!("need {} signs, got {}", family.k, xi.len()));
        }
        if xi.iter().any(|s| *s != 1 && *s != -1) {
            return invalid("signs must be +1 or -1");
        }
        let positive = xi.iter().filter(|s| **s == 1).count();
        if positive * 2 != family.k {
            return invalid(format!("sign vector is unbalanced: {positive} of {} positive", family.k));
        }
        let mut cum_mass = Vec::with_capacity(family.k);
        let mut acc = 0.0;
        for (b, s) in xi.iter().enumerate() {
            acc += family.bin_mass(b, *s);
            cum_mass.push(acc);
        }
        Ok(Self { family, xi, cum_mass })
    }

    /// Positive signs on the K/2 bins where `f0` carries the most mass.
    pub fn aligned(family: Arc<AdversarialFamily>) -> Result<Self> {
        let k = family.k;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| family.base_mass[b].total_cmp(&family.base_mass[a]).then(a.cmp(&b)));
        let mut xi = vec![-1i8; k];
        for &b in &order[..k / 2] {
            xi[b] = 1;
        }
        Self::new(family, xi)
    }

    /// A uniformly random balanced sign vector.
    pub fn random(family: Arc<AdversarialFamily>, stream: &mut RngStream) -> Result<Self> {
        let k = family.k;
        let mut xi: Vec<i8> = (0..k).map(|b| if b < k / 2 { 1 } else { -1 }).collect();
        stream.shuffle(&mut xi);
        Self::new(family, xi)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let fam = &self.family;
        let kf = fam.k as f64;
        let bin = ((kf * x).ceil() as usize).clamp(1, fam.k);
        let height = fam.amplitude * kf.powf(-fam.f0.alpha);
        fam.f0.pdf(x)
            + f64::from(self.xi[bin - 1]) * height * 0.5 * PI * (PI * (kf * x - bin as f64)).sin()
    }

    pub fn theta(&self) -> f64 {
        self.family.theta_of(&self.xi)
    }

    pub fn bin_masses(&self) -> Vec<f64> {
        (0..self.family.k)
            .map(|b| self.family.bin_mass(b, self.xi[b]))
            .collect()
    }

    /// Draws one point and returns it with its (0-based) bin.
    fn sample_one(&self, stream: &mut RngStream) -> (f64, usize) {
        let fam = &self.family;
        let total = *self.cum_mass.last().unwrap();
        let u = stream.uniform() * total;
        let bin = self.cum_mass.partition_point(|&c| c <= u).min(fam.k - 1);
        let before = if bin == 0 { 0.0 } else { self.cum_mass[bin - 1] };
        let mass = self.cum_mass[bin] - before;
        let t = (u - before).clamp(0.0, mass);
        (self.invert_in_bin(bin, t, mass), bin)
    }

    /// Solves `∫_{lo}^{x} f = t` within a bin by safeguarded Newton.
    fn invert_in_bin(&self, bin: usize, t: f64, mass: f64) -> f64 {
        let fam = &self.family;
        let kf = fam.k as f64;
        let lo = bin as f64 / kf;
        let hi = (bin + 1) as f64 / kf;
        let b1 = (bin + 1) as f64;
        let sign = f64::from(self.xi[bin]);
        let height = fam.amplitude * kf.powf(-fam.f0.alpha);
        let f0_lo = fam.f0.cdf(lo);
        let g = |x: f64| {
            let bump = -(1.0 / (2.0 * kf)) * ((PI * (kf * x - b1)).cos() + 1.0);
            fam.f0.cdf(x) - f0_lo + sign * height * bump - t
        };
        let (mut a, mut b) = (lo, hi);
        let mut x = lo + (t / mass.max(f64::MIN_POSITIVE)) * (hi - lo);
        for _ in 0..60 {
            let gx = g(x);
            if gx.abs() < 1e-15 {
                break;
            }
            if gx > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let d = self.pdf(x);
            let mut next = if d > 0.0 { x - gx / d } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - x).abs() < 1e-16 {
                x = next;
                break;
            }
            x = next;
        }
        x
    }
}

/// Either kind of density the sampler understands.
#[derive(Debug, Clone, Copy)]
pub enum SamplingTarget<'a> {
    Holder(&'a HolderDensity),
    Adversarial(&'a AdversarialDensity),
}

/// `n` i.i.d. points from `f`.
pub fn sample_density(stream: &mut RngStream, f: SamplingTarget<'_>, n: usize) -> Vec<f64> {
    match f {
        SamplingTarget::Holder(d) => (0..n).map(|_| d.sample_one(stream)).collect(),
        SamplingTarget::Adversarial(d) => (0..n).map(|_| d.sample_one(stream).0).collect(),
    }
}

/// Counts in K equal bins using the `k−1 < Kx ≤ k` convention.
pub fn bin_counts(points: &[f64], k: usize) -> Vec<u64> {
    let kf = k as f64;
    let mut counts = vec![0u64; k];
    for &x in points {
        let b = ((kf * x).ceil() as usize).clamp(1, k);
        counts[b - 1] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramPair {
    pub counts1: Vec<u64>,
    pub counts2: Vec<u64>,
    pub n_half: usize,
    pub m: usize,
    /// Set when there are more bins than points.
    pub degenerate: bool,
}

impl HistogramPair {
    /// `f̃_{jm} = M·count/n_half` for split `j ∈ {1, 2}`.
    pub fn density_values(&self, split: usize) -> Vec<f64> {
        let counts = if split == 1 { &self.counts1 } else { &self.counts2 };
        let scale = self.m as f64 / self.n_half as f64;
        counts.iter().map(|&c| c as f64 * scale).collect()
    }

    pub fn swapped(&self) -> Self {
        Self {
            counts1: self.counts2.clone(),
            counts2: self.counts1.clone(),
            ..self.clone()
        }
    }
}

/// Random equal split into two halves, each binned into M equal cells.
pub fn histogram_split(points: &[f64], m: usize, stream: &mut RngStream) -> Result<HistogramPair> {
    if points.len() % 2 != 0 {
        return invalid(format!("need an even number of points, got {}", points.len()));
    }
    if m < 1 {
        return invalid("need at least one bin");
    }
    let n_half = points.len() / 2;
    let mut idx: Vec<u32> = (0..points.len() as u32).collect();
    // Partial Fisher–Yates: the first half becomes a uniform random subset.
    for i in 0..n_half {
        let j = i + stream.below(points.len() - i);
        idx.swap(i, j);
    }
    let mf = m as f64;
    let bin = |x: f64| ((x * mf).floor() as usize).min(m - 1);
    let mut counts1 = vec![0u64; m];
    let mut counts2 = vec![0u64; m];
    for &i in &idx[..n_half] {
        counts1[bin(points[i as usize])] += 1;
    }
    for &i in &idx[n_half..] {
        counts2[bin(points[i as usize])] += 1;
    }
    Ok(HistogramPair {
        counts1,
        counts2,
        n_half,
        m,
        degenerate: m > points.len(),
    })
}

/// How the `c·M/n` term of the frequentist estimator is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BiasCorrection {
    /// Constant that makes the estimator exactly unbiased at uniform f.
    #[default]
    Calibrated,
    Fixed(f64),
}

/// Expected squared histogram height `E[(M N/n_h)²]` for
/// `N ~ Binomial(n_h, 1/M)`, by summing the pmf.
fn expected_squared_height(m: usize, n_half: usize) -> f64 {
    if m == 1 {
        return 1.0;
    }
    let p = 1.0 / m as f64;
    let log_odds = (p / (1.0 - p)).ln();
    let nf = n_half as f64;
    let mut log_pmf = nf * (-p).ln_1p();
    let scale = m as f64 / nf;
    let mut terms = Vec::with_capacity(n_half + 1);
    let mut logs = Vec::with_capacity(n_half + 1);
    for k in 0..=n_half {
        if k > 0 {
            log_pmf += (nf - (k - 1) as f64).ln() - (k as f64).ln() + log_odds;
        }
        logs.push(log_pmf);
        terms.push((k as f64 * scale).powi(2));
    }
    let lse = log_sum_exp(&logs);
    logs.iter()
        .zip(&terms)
        .map(|(l, t)| (l - lse).exp() * t)
        .sum()
}

/// The `c` that makes `E θ̂ = 1` at uniform f, from the exact binomial
/// expectation of the quadratic terms.
pub fn calibrated_correction(m: usize, n_half: usize) -> f64 {
    let e_sq = expected_squared_height(m, n_half);
    // E θ̂ without correction = 2·E[f̃1]E[f̃2] − E[f̃²] = 2 − e_sq.
    let n = 2.0 * n_half as f64;
    (e_sq - 1.0) * n / m as f64
}

/// `(1/M) Σ (2 f̃1 f̃2 − ½ f̃1² − ½ f̃2²) + c·M/n`.
pub fn theta_hat_freq(h: &HistogramPair, correction: BiasCorrection) -> f64 {
    let c = match correction {
        BiasCorrection::Calibrated => calibrated_correction(h.m, h.n_half),
        BiasCorrection::Fixed(c) => c,
    };
    let mf = h.m as f64;
    let scale = mf / h.n_half as f64;
    let s: f64 = h
        .counts1
        .iter()
        .zip(&h.counts2)
        .map(|(&a, &b)| {
            let (f1, f2) = (a as f64 * scale, b as f64 * scale);
            2.0 * f1 * f2 - 0.5 * (f1 * f1 + f2 * f2)
        })
        .sum();
    s / mf + c * mf / (2.0 * h.n_half as f64)
}

/// Exact posterior of `ξ_k = +1` per bin under independent symmetric
/// signs, from the binomial likelihood of each bin count.
pub fn bin_sign_posteriors(counts: &[u64], family: &AdversarialFamily) -> Result<Vec<f64>> {
    if counts.len() != family.k {
        return invalid(format!("need {} counts, got {}", family.k, counts.len()));
    }
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let qp = family.bin_mass(b, 1);
            let qm = family.bin_mass(b, -1);
            let cf = c as f64;
            let llr = cf * (qp / qm).ln() + (nf - cf) * ((1.0 - qp) / (1.0 - qm)).ln();
            posterior_from_log_ratio(llr)
        })
        .collect())
}

fn balanced_sign_vectors(k: usize) -> Vec<Vec<i8>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize * 2 == k {
            out.push((0..k).map(|b| if mask >> b & 1 == 1 { 1 } else { -1 }).collect());
        }
    }
    out
}

/// Largest K for which the balanced prior is enumerated exactly.
pub const EXACT_ENUMERATION_MAX_K: usize = 6;

/// Posterior mean of `∫f²` under the adversarial prior given full-sample
/// bin counts.
pub fn theta_bayes_plugin(counts: &[u64], family: &AdversarialFamily) -> Result<f64> {
    if counts.len() != family.k {
        return invalid(format!("need {} counts, got {}", family.k, counts.len()));
    }
    if family.k <= EXACT_ENUMERATION_MAX_K {
        let signs = balanced_sign_vectors(family.k);
        let logs: Vec<f64> = signs
            .iter()
            .map(|xi| {
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(b, &c)| c as f64 * family.bin_mass(b, xi[b]).ln())
                    .sum()
            })
            .collect();
        let lse = log_sum_exp(&logs);
        if !lse.is_finite() {
            return Err(LabError::Numerical("balanced-sign likelihood vanished".into()));
        }
        return Ok(signs
            .iter()
            .zip(&logs)
            .map(|(xi, l)| (l - lse).exp() * family.theta_of(xi))
            .sum());
    }
    let post = bin_sign_posteriors(counts, family)?;
    Ok(family.theta_constant()
        + post
            .iter()
            .zip(family.cross_terms())
            .map(|(p, g)| (2.0 * p - 1.0) * g)
            .sum::<f64>())
}

/// `P(+μ | x)` under the prior `½δ_{μ} + ½δ_{−μ}` and `x ~ N(·, σ²)`.
pub fn two_point_posterior(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    Ok(posterior_from_log_ratio(2.0 * x * mu / (sigma * sigma)))
}

/// First-order expansion `½ + xμ/(2σ²)` of [`two_point_posterior`].
pub fn two_point_posterior_linearized(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    Ok(0.5 + x * mu / (2.0 * sigma * sigma))
}

/// Bin-count rule `M = round(scale · n^{1/(4α) + offset})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRule {
    pub scale: f64,
    pub exponent_offset: f64,
}

impl Default for HistogramRule {
    fn default() -> Self {
        Self {
            scale: 0.1,
            exponent_offset: 0.025,
        }
    }
}

impl HistogramRule {
    pub fn bins(&self, n: usize, alpha: f64) -> usize {
        let e = 1.0 / (4.0 * alpha) + self.exponent_offset;
        ((self.scale * (n as f64).powf(e)).round() as usize).clamp(1, n.max(1))
    }
}

/// `K = round((n ln n)^{1/(1+2α)})`, moved to the nearest even number.
pub fn adversarial_bins(n: usize, alpha: f64) -> usize {
    let nf = n as f64;
    let raw = (nf * nf.ln()).powf(1.0 / (1.0 + 2.0 * alpha));
    ((raw / 2.0).round() as usize * 2).max(2)
}

#[derive(Debug, Clone)]
pub enum RateTarget {
    /// Frequentist estimator only, on data from this density.
    Plain(HolderDensity),
    /// Both estimators on the aligned member of the adversarial family.
    Adversarial { f0: HolderDensity, amplitude: f64 },
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub target: RateTarget,
    pub correction: BiasCorrection,
    pub rule: HistogramRule,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub n: usize,
    pub m_bins: usize,
    pub k_bins: Option<usize>,
    pub theta: f64,
    pub freq: McSummary,
    pub bayes: Option<McSummary>,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub freq_slope: f64,
    pub bayes_slope: Option<f64>,
    pub warnings: Vec<String>,
}

/// One replication at sample size `n`: `(θ̂_freq, θ̂_bayes)`.
pub fn density_replicate(
    target: SamplingTarget<'_>,
    n: usize,
    m: usize,
    correction: BiasCorrection,
    stream: &mut RngStream,
) -> Result<(f64, Option<f64>)> {
    match target {
        SamplingTarget::Holder(_) => {
            let pts = sample_density(stream, target, n);
            let h = histogram_split(&pts, m, stream)?;
            Ok((theta_hat_freq(&h, correction), None))
        }
        SamplingTarget::Adversarial(d) => {
            let mut pts = Vec::with_capacity(n);
            let mut counts = vec![0u64; d.family.k];
            for _ in 0..n {
                let (x, b) = d.sample_one(stream);
                pts.push(x);
                counts[b] += 1;
            }
            let h = histogram_split(&pts, m, stream)?;
            let bayes = theta_bayes_plugin(&counts, &d.family)?;
            Ok((theta_hat_freq(&h, correction), Some(bayes)))
        }
    }
}

/// RMSE of both estimators over an n-grid, with fitted log-log slopes.
pub fn rate_experiment(cfg: &RateConfig) -> Result<RateReport> {
    if cfg.n_grid.len() < 3 {
        return invalid("rate experiment needs at least three sample sizes");
    }
    if cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("n_grid must be increasing");
    }
    let mut warnings = Vec::new();
    if cfg.reps < 100 {
        warnings.push(format!("only {} replications; slopes may be unstable", cfg.reps));
    }
    let mut rows = Vec::new();
    for (gi, &n) in cfg.n_grid.iter().enumerate() {
        if n % 2 != 0 {
            return invalid(format!("sample sizes must be even, got {n}"));
        }
        let (alpha, adv) = match &cfg.target {
            RateTarget::Plain(f) => (f.alpha, None),
            RateTarget::Adversarial { f0, amplitude } => {
                let k = adversarial_bins(n, f0.alpha);
                let fam = Arc::new(AdversarialFamily::new(f0.clone(), k, *amplitude)?);
                (f0.alpha, Some(AdversarialDensity::aligned(fam)?))
            }
        };
        let m = cfg.rule.bins(n, alpha);
        let (theta, target) = match (&cfg.target, &adv) {
            (RateTarget::Plain(f), _) => (f.theta(), SamplingTarget::Holder(f)),
            (_, Some(d)) => (d.theta(), SamplingTarget::Adversarial(d)),
            _ => unreachable!(),
        };
        let results = parallel_map(cfg.workers, cfg.reps, |r| {
            let mut stream = RngStream::new(cfg.master_seed, r as u64).lane(gi as u64);
            density_replicate(target, n, m, cfg.correction, &mut stream)
        })?;
        let mut freq = Vec::with_capacity(cfg.reps);
        let mut bayes = Vec::with_capacity(cfg.reps);
        for res in results {
            let (f, b) = res?;
            freq.push(f);
            if let Some(b) = b {
                bayes.push(b);
            }
        }
        rows.push(RateRow {
            n,
            m_bins: m,
            k_bins: adv.as_ref().map(|d| d.family.k),
            theta,
            freq: McSummary::from_values("theta_hat_freq", n, &freq, Some(theta)),
            bayes: (!bayes.is_empty())
                .then(|| McSummary::from_values("theta_bayes_plugin", n, &bayes, Some(theta))),
        });
    }
    let freq_slope = slope_fit(&rows.iter().map(|r| r.freq.clone()).collect::<Vec<_>>())?.0;
    let bayes_slope = if rows.iter().all(|r| r.bayes.is_some()) {
        Some(slope_fit(&rows.iter().map(|r| r.bayes.clone().unwrap()).collect::<Vec<_>>())?.0)
    } else {
        None
    };
    Ok(RateReport {
        rows,
        freq_slope,
        bayes_slope,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrated_constant_matches_closed_form() {
        for (m, nh) in [(1usize, 10usize), (2, 7), (100, 5000), (9, 500), (178, 50_000)] {
            let c = calibrated_correction(m, nh);
            let closed = 2.0 * (m as f64 - 1.0) / m as f64;
            assert!((c - closed).abs() < 1e-9, "m={m} nh={nh}: {c} vs {closed}");
        }
    }

    #[test]
    fn exact_counts_give_one_at_uniform() {
        let h = HistogramPair {
            counts1: vec![5; 4],
            counts2: vec![5; 4],
            n_half: 20,
            m: 4,
            degenerate: false,
        };
        assert!((theta_hat_freq(&h, BiasCorrection::Fixed(0.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bins_follow_the_rules() {
        let rule = HistogramRule::default();
        assert_eq!(rule.bins(1000, 0.4), 9);
        assert_eq!(rule.bins(10_000, 0.4), 40);
        assert_eq!(rule.bins(100_000, 0.4), 178);
        assert_eq!(adversarial_bins(1000, 0.4), 136);
        assert_eq!(adversarial_bins(10_000, 0.4) % 2, 0);
    }

    #[test]
    fn bump_constant_is_pi_squared_over_eight() {
        assert!((bump_square_constant() - PI * PI / 8.0).abs() < 1e-13);
    }

    #[test]
    fn two_point_rejects_bad_sigma() {
        assert!(two_point_posterior(0.1, 0.1, 0.0).is_err());
        assert_eq!(two_point_posterior(0.0, 3.0, 1.0).unwrap(), 0.5);
        assert_eq!(two_point_posterior(2.0, 0.0, 1.0).unwrap(), 0.5);
    }
}
