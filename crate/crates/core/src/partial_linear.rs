//! Partial linear model with many confounders, estimated by exponential
//! weighting over working models.
//!
//! ```text
//! X = φᵀW + ζ,   Y = ψᵀW + ξ,   β = cov(ζ, ξ) / var(ζ)
//! ```
//!
//! For every size-m subset M of the confounders, X and Y are regressed on
//! `W_M`; residual vectors are averaged with weights proportional to
//! `exp(−‖r_M‖²/α)` and β is the slope of the aggregated Y-residual on
//! the aggregated X-residual.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, LabError, Result};
use crate::numeric::log_sum_exp;
use crate::stochastics::RngStream;

pub const MAX_SUBSETS: u128 = 100_000;

pub fn binomial_coefficient(p: usize, m: usize) -> u128 {
    if m > p {
        return 0;
    }
    let m = m.min(p - m);
    let mut c: u128 = 1;
    for i in 0..m {
        c = c * (p - i) as u128 / (i + 1) as u128;
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlmDesign {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub beta: f64,
    pub var_zeta: f64,
    pub var_xi: f64,
    pub cov_zeta_xi: f64,
}

impl PlmDesign {
    /// Builds a design; `beta` must equal `cov/var_zeta` to 1e-12.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        phi: Vec<f64>,
        psi: Vec<f64>,
        beta: f64,
        var_zeta: f64,
        var_xi: f64,
        cov_zeta_xi: f64,
    ) -> Result<Self> {
        let p = phi.len();
        if psi.len() != p {
            return invalid("phi and psi must have the same length");
        }
        if m < 1 || m > p {
            return invalid(format!("working model size m = {m} outside [1, {p}]"));
        }
        if binomial_coefficient(p, m) > MAX_SUBSETS {
            return invalid(format!("C({p},{m}) exceeds the enumeration cap of {MAX_SUBSETS}"));
        }
        if !(var_zeta > 0.0 && var_xi >= 0.0 && cov_zeta_xi * cov_zeta_xi <= var_zeta * var_xi * (1.0 + 1e-12)) {
            return invalid("noise covariance must be positive semi-definite with var(zeta) > 0");
        }
        if (cov_zeta_xi / var_zeta - beta).abs() > 1e-12 {
            return invalid(format!(
                "beta = {beta} does not equal cov/var(zeta) = {}",
                cov_zeta_xi / var_zeta
            ));
        }
        Ok(Self {
            n,
            p,
            m,
            phi,
            psi,
            beta,
            var_zeta,
            var_xi,
            cov_zeta_xi,
        })
    }

    /// Stability threshold `4·max(var ζ, var ξ)` for the temperature.
    pub fn temperature_threshold(&self) -> f64 {
        4.0 * self.var_zeta.max(self.var_xi)
    }

    /// Warning text when `alpha` sits below the stability threshold.
    pub fn temperature_warning(&self, alpha: f64) -> Option<String> {
        (alpha <= self.temperature_threshold()).then(|| {
            format!(
                "temperature {alpha} is at or below 4*max(var zeta, var xi) = {}",
                self.temperature_threshold()
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlmSample {
    /// n×p confounder matrix.
    pub w: DMatrix<f64>,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

pub fn generate_plm(design: &PlmDesign, stream: &mut RngStream) -> Result<PlmSample> {
    let (n, p) = (design.n, design.p);
    let sz = design.var_zeta.sqrt();
    let l21 = design.cov_zeta_xi / sz;
    let l22 = (design.var_xi - l21 * l21).max(0.0).sqrt();
    let mut w = DMatrix::zeros(n, p);
    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let (mut fx, mut fy) = (0.0, 0.0);
        for j in 0..p {
            let v = stream.standard_normal();
            w[(i, j)] = v;
            fx += design.phi[j] * v;
            fy += design.psi[j] * v;
        }
        let (u1, u2) = (stream.standard_normal(), stream.standard_normal());
        x[i] = fx + sz * u1;
        y[i] = fy + l21 * u1 + l22 * u2;
    }
    Ok(PlmSample { w, x, y })
}

/// All size-m subsets of `0..p` in colexicographic order.
pub fn colex_subsets(p: usize, m: usize) -> Vec<Vec<usize>> {
    if m > p {
        return Vec::new();
    }
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let mut c: Vec<usize> = (0..m).collect();
    loop {
        out.push(c.clone());
        let mut j = 0;
        while j < m {
            let limit = if j + 1 < m { c[j + 1] } else { p };
            if c[j] + 1 < limit {
                break;
            }
            j += 1;
        }
        if j == m {
            return out;
        }
        c[j] += 1;
        for (i, slot) in c.iter_mut().enumerate().take(j) {
            *slot = i;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetWeights {
    pub subsets: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    pub rss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub residuals: DVector<f64>,
    pub weights: SubsetWeights,
    /// Indices of subsets solved by pseudo-inverse.
    pub degenerate_subsets: Vec<usize>,
}

struct SubsetFit {
    coef: DVector<f64>,
    degenerate: bool,
}

fn fit_subset(gram: &DMatrix<f64>, wv: &DVector<f64>, subset: &[usize]) -> SubsetFit {
    let k = subset.len();
    let g = DMatrix::from_fn(k, k, |a, b| gram[(subset[a], subset[b])]);
    let rhs = DVector::from_fn(k, |a, _| wv[subset[a]]);
    if let Some(ch) = g.clone().cholesky() {
        let coef = ch.solve(&rhs);
        let d = ch.l().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
        if lo > 1e-7 * hi {
            return SubsetFit { coef, degenerate: false };
        }
    }
    let svd = g.svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-10 * svd.singular_values.max())
        .unwrap_or_else(|_| DVector::zeros(k));
    SubsetFit { coef, degenerate: true }
}

fn subset_residual(w: &DMatrix<f64>, v: &DVector<f64>, subset: &[usize], coef: &DVector<f64>) -> DVector<f64> {
    let mut r = v.clone();
    for (a, &j) in subset.iter().enumerate() {
        r.axpy(-coef[a], &w.column(j), 1.0);
    }
    r
}

/// Exponentially weighted average of least-squares residual vectors over
/// all size-m subsets of the columns of `w`.
pub fn residual_aggregate(w: &DMatrix<f64>, v: &DVector<f64>, m: usize, alpha: f64) -> Result<AggregateResult> {
    let (n, p) = w.shape();
    if v.len() != n {
        return invalid("response length does not match the design");
    }
    if !(alpha > 0.0) {
        return invalid(format!("temperature alpha must be positive, got {alpha}"));
    }
    if m < 1 || m > p {
        return invalid(format!("subset size m = {m} outside [1, {p}]"));
    }
    if binomial_coefficient(p, m) > MAX_SUBSETS {
        return invalid(format!("C({p},{m}) exceeds the enumeration cap"));
    }
    let gram = w.transpose() * w;
    let wv = w.transpose() * v;
    let subsets = colex_subsets(p, m);
    let mut fits = Vec::with_capacity(subsets.len());
    let mut rss = Vec::with_capacity(subsets.len());
    let mut degenerate_subsets = Vec::new();
    for (idx, s) in subsets.iter().enumerate() {
        let fit = fit_subset(&gram, &wv, s);
        if fit.degenerate {
            degenerate_subsets.push(idx);
        }
        let r = subset_residual(w, v, s, &fit.coef);
        rss.push(r.norm_squared());
        fits.push(fit);
    }
    if degenerate_subsets.len() == subsets.len() {
        return Err(LabError::Degenerate("every working model is rank deficient".into()));
    }
    // Shift by the least RSS so ties stay exact at tiny temperatures.
    let best = rss.iter().cloned().fold(f64::INFINITY, f64::min);
    let scores: Vec<f64> = rss.iter().map(|r| (best - r) / alpha).collect();
    let lse = log_sum_exp(&scores);
    let weights: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    let mut residuals = DVector::zeros(n);
    for ((s, fit), wt) in subsets.iter().zip(&fits).zip(&weights) {
        if *wt == 0.0 {
            continue;
        }
        residuals.axpy(*wt, &subset_residual(w, v, s, &fit.coef), 1.0);
    }
    Ok(AggregateResult {
        residuals,
        weights: SubsetWeights {
            subsets,
            weights,
            rss,
        },
        degenerate_subsets,
    })
}

fn residual_ratio(zx: &DVector<f64>, zy: &DVector<f64>) -> Result<f64> {
    let den = zx.norm_squared();
    if !(den >= 1e-10 * zx.len() as f64) {
        return Err(LabError::Degenerate(format!("residual denominator {den:.3e} is near zero")));
    }
    Ok(zx.dot(zy) / den)
}

/// `⟨ζ̂, ξ̂⟩ / ‖ζ̂‖²` from the aggregated residuals.
pub fn beta_hat_plm(w: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>, m: usize, alpha: f64) -> Result<f64> {
    beta_hat_plm_with(w, x, y, m, alpha, alpha)
}

/// As [`beta_hat_plm`] with separate temperatures for X and Y.
pub fn beta_hat_plm_with(
    w: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    m: usize,
    alpha_x: f64,
    alpha_y: f64,
) -> Result<f64> {
    let zx = residual_aggregate(w, x, m, alpha_x)?.residuals;
    let zy = residual_aggregate(w, y, m, alpha_y)?.residuals;
    residual_ratio(&zx, &zy)
}

/// Residual of the single least-RSS subset (first in colex order on ties).
pub fn min_rss_residual(w: &DMatrix<f64>, v: &DVector<f64>, m: usize) -> Result<DVector<f64>> {
    let (_, p) = w.shape();
    if m < 1 || m > p {
        return invalid(format!("subset size m = {m} outside [1, {p}]"));
    }
    let gram = w.transpose() * w;
    let wv = w.transpose() * v;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for s in colex_subsets(p, m) {
        let fit = fit_subset(&gram, &wv, &s);
        let r = subset_residual(w, v, &s, &fit.coef);
        let rss = r.norm_squared();
        if best.as_ref().is_none_or(|(b, _)| rss < *b) {
            best = Some((rss, r));
        }
    }
    Ok(best.expect("at least one subset").1)
}

/// Single-model plug-in: one least-RSS working model for X, one for Y.
pub fn naive_plugin_beta(w: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>, m: usize) -> Result<f64> {
    let zx = min_rss_residual(w, x, m)?;
    let zy = min_rss_residual(w, y, m)?;
    residual_ratio(&zx, &zy)
}

/// Best achievable mean squared error of a linear fit on fewer than m
/// independent standard-normal confounders, for m = 1..p:
/// `var + (sum of the p−m+1 smallest squared coefficients)`.
pub fn sparse_approx_profile(design: &PlmDesign) -> (Vec<f64>, Vec<f64>) {
    let profile = |coef: &[f64], var: f64| {
        let mut sq: Vec<f64> = coef.iter().map(|c| c * c).collect();
        sq.sort_by(f64::total_cmp);
        let p = sq.len();
        (1..=p)
            .map(|m| var + sq[..p - m + 1].iter().sum::<f64>())
            .collect::<Vec<f64>>()
    };
    (
        profile(&design.phi, design.var_zeta),
        profile(&design.psi, design.var_xi),
    )
}
