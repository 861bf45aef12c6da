//! Bernoulli panel with known sampling weights.
//!
//! Unit i has success probability `p_i` and is observed with known
//! probability `w_i`; when observed we see `Y_i ~ B(1, p_i)`. The target
//! is `p̄ = mean(p)`. Weighting by `1/w_i` (Hájek) is consistent whatever
//! the relation between p and w; the plain observed mean converges to the
//! w-weighted mean `p̄_w` instead.

use crate::error::{invalid, LabError, Result};
use crate::numeric::log_sum_exp;
use crate::stochastics::{draw_beta, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliPanel {
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub s: Vec<u8>,
    pub y: Vec<Option<u8>>,
}

impl BernoulliPanel {
    pub fn new(p: Vec<f64>, w: Vec<f64>, s: Vec<u8>, y: Vec<Option<u8>>) -> Result<Self> {
        let n = p.len();
        if w.len() != n || s.len() != n || y.len() != n {
            return invalid("panel vectors must have equal length");
        }
        for i in 0..n {
            if !(w[i] > 0.0 && w[i] <= 1.0) {
                return invalid(format!("weight w_{i} = {} outside (0,1]", w[i]));
            }
            if !(0.0..=1.0).contains(&p[i]) {
                return invalid(format!("p_{i} = {} outside [0,1]", p[i]));
            }
            match (s[i], y[i]) {
                (0, None) | (1, Some(0)) | (1, Some(1)) => {}
                _ => return invalid(format!("unit {i}: Y must be 0/1 exactly when S = 1")),
            }
        }
        Ok(Self { p, w, s, y })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// The estimand `p̄`.
    pub fn p_bar(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.len() as f64
    }

    /// `p̄_w = Σ w_i p_i / Σ w_i`.
    pub fn p_bar_w(&self) -> f64 {
        let sw: f64 = self.w.iter().sum();
        self.w.iter().zip(&self.p).map(|(w, p)| w * p).sum::<f64>() / sw
    }

    pub fn w_bar(&self) -> f64 {
        self.w.iter().sum::<f64>() / self.len() as f64
    }

    /// Observed outcomes, in unit order.
    pub fn observed(&self) -> Vec<u8> {
        self.y.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PLaw {
    Constant(f64),
    /// `Beta(τρ, τ(1−ρ))`.
    Beta { tau: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WLaw {
    Constant(f64),
    /// Stratum weights and sizes; units are assigned in blocks.
    Strata { values: Vec<f64>, sizes: Vec<usize> },
    /// Uniform on `[w_min, 1]`.
    Continuous { w_min: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelGenConfig {
    pub n: usize,
    pub p_law: PLaw,
    pub w_law: WLaw,
    /// Coupling: `p_i = clamp(base_i + κ(w_i − w̄), ε, 1−ε)`.
    pub kappa: f64,
    pub clamp_eps: f64,
}

pub const DEFAULT_W_MIN: f64 = 0.02;
pub const MAX_CLAMP_RATE: f64 = 0.05;

impl PanelGenConfig {
    pub fn new(n: usize, p_law: PLaw, w_law: WLaw, kappa: f64) -> Self {
        Self {
            n,
            p_law,
            w_law,
            kappa,
            clamp_eps: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("panel size must be positive");
        }
        if !self.kappa.is_finite() {
            return invalid("coupling must be finite");
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return invalid("clamp epsilon must lie in (0, 1/2)");
        }
        match &self.p_law {
            PLaw::Constant(p) if !(0.0..=1.0).contains(p) => {
                return invalid(format!("constant p = {p} outside [0,1]"))
            }
            PLaw::Beta { tau, rho } if !(*tau > 0.0 && *rho > 0.0 && *rho < 1.0) => {
                return invalid(format!("beta law needs tau > 0 and rho in (0,1), got ({tau}, {rho})"))
            }
            _ => {}
        }
        match &self.w_law {
            WLaw::Constant(w) if !(*w > 0.0 && *w <= 1.0) => {
                return invalid(format!("constant weight {w} outside (0,1]"))
            }
            WLaw::Strata { values, sizes } => {
                if values.len() != sizes.len() || values.is_empty() {
                    return invalid("strata need matching, nonempty value and size lists");
                }
                if sizes.iter().sum::<usize>() != self.n {
                    return invalid("stratum sizes must sum to n");
                }
                if values.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
                    return invalid("stratum weights must lie in (0,1]");
                }
            }
            WLaw::Continuous { w_min } if !(*w_min > 0.0 && *w_min <= 1.0) => {
                return invalid(format!("w_min = {w_min} must lie in (0,1]"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Fixed design: the unit-level `p` and `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDesign {
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub clamp_rate: f64,
}

pub fn generate_design(cfg: &PanelGenConfig, stream: &mut RngStream) -> Result<PanelDesign> {
    cfg.validate()?;
    let n = cfg.n;
    let w: Vec<f64> = match &cfg.w_law {
        WLaw::Constant(w) => vec![*w; n],
        WLaw::Strata { values, sizes } => values
            .iter()
            .zip(sizes)
            .flat_map(|(v, s)| std::iter::repeat_n(*v, *s))
            .collect(),
        WLaw::Continuous { w_min } => (0..n)
            .map(|_| w_min + (1.0 - w_min) * stream.uniform())
            .collect(),
    };
    let base: Vec<f64> = match &cfg.p_law {
        PLaw::Constant(p) => vec![*p; n],
        PLaw::Beta { tau, rho } => (0..n)
            .map(|_| draw_beta(stream, tau * rho, tau * (1.0 - rho)))
            .collect::<Result<_>>()?,
    };
    let w_bar = w.iter().sum::<f64>() / n as f64;
    let eps = cfg.clamp_eps;
    let mut clamped = 0usize;
    let p = base
        .iter()
        .zip(&w)
        .map(|(b, wi)| {
            let raw = b + cfg.kappa * (wi - w_bar);
            let c = raw.clamp(eps, 1.0 - eps);
            if c != raw && cfg.kappa != 0.0 {
                clamped += 1;
            }
            if cfg.kappa == 0.0 {
                *b
            } else {
                c
            }
        })
        .collect();
    let clamp_rate = clamped as f64 / n as f64;
    if clamp_rate > MAX_CLAMP_RATE {
        return Err(LabError::Config(format!(
            "coupling clamps {:.1}% of units (limit {:.0}%)",
            100.0 * clamp_rate,
            100.0 * MAX_CLAMP_RATE
        )));
    }
    Ok(PanelDesign { p, w, clamp_rate })
}

/// Draws selection indicators and outcomes for a fixed design.
pub fn draw_outcomes(design: &PanelDesign, stream: &mut RngStream) -> Result<BernoulliPanel> {
    let n = design.p.len();
    let mut s = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for (p, w) in design.p.iter().zip(&design.w) {
        // Both draws always happen so streams stay aligned across designs.
        let sel = u8::from(stream.uniform() < *w);
        let out = u8::from(stream.uniform() < *p);
        s.push(sel);
        y.push((sel == 1).then_some(out));
    }
    BernoulliPanel::new(design.p.clone(), design.w.clone(), s, y)
}

pub fn generate_panel(cfg: &PanelGenConfig, stream: &mut RngStream) -> Result<BernoulliPanel> {
    let design = generate_design(cfg, stream)?;
    draw_outcomes(&design, stream)
}

fn no_data() -> LabError {
    LabError::NoData("no unit was observed".into())
}

/// `Σ (S_i/w_i) Y_i / Σ (S_i/w_i)`.
pub fn ht_hajek(panel: &BernoulliPanel) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (w, y) in panel.w.iter().zip(&panel.y) {
        if let Some(y) = y {
            num += f64::from(*y) / w;
            den += 1.0 / w;
        }
    }
    if den == 0.0 {
        return Err(no_data());
    }
    Ok(num / den)
}

/// Mean of the observed outcomes.
pub fn naive_bayes_mean(panel: &BernoulliPanel) -> Result<f64> {
    let obs = panel.observed();
    if obs.is_empty() {
        return Err(no_data());
    }
    Ok(obs.iter().map(|&y| f64::from(y)).sum::<f64>() / obs.len() as f64)
}

/// Partition of units by distinct weight value.
#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    pub values: Vec<f64>,
    pub members: Vec<Vec<usize>>,
}

impl Strata {
    pub fn from_weights(w: &[f64]) -> Self {
        let mut values: Vec<f64> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
        for i in order {
            if values.last().is_some_and(|v| *v == w[i]) {
                members.last_mut().unwrap().push(i);
            } else {
                values.push(w[i]);
                members.push(vec![i]);
            }
        }
        Self { values, members }
    }
}

/// `(1/n) Σ_k n_k · (observed mean in stratum k)`, with unobserved strata
/// taking the grand observed mean.
pub fn stratified_bayes(panel: &BernoulliPanel, strata: &Strata) -> Result<f64> {
    let grand = naive_bayes_mean(panel)?;
    let n: usize = strata.members.iter().map(Vec::len).sum();
    if n != panel.len() {
        return invalid("strata do not cover the panel");
    }
    let mut total = 0.0;
    for units in &strata.members {
        let (mut sum, mut cnt) = (0.0, 0usize);
        for &i in units {
            if let Some(y) = panel.y[i] {
                sum += f64::from(y);
                cnt += 1;
            }
        }
        let mean = if cnt > 0 { sum / cnt as f64 } else { grand };
        total += units.len() as f64 * mean;
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticVariances {
    pub v_ht: f64,
    pub v_b: f64,
    pub e_b: f64,
}

/// Asymptotic variances of `√(n w̄)(p̂ − target)` for the Hájek and naive
/// estimators, and the naive estimator's scaled bias `e_b`.
pub fn asymptotic_variances(panel: &BernoulliPanel) -> AsymptoticVariances {
    let n = panel.len() as f64;
    let w_bar = panel.w_bar();
    let p_bar = panel.p_bar();
    let p_bar_w = panel.p_bar_w();
    let (mut v_ht, mut v_b, mut e) = (0.0, 0.0, 0.0);
    for (p, w) in panel.p.iter().zip(&panel.w) {
        let q = p * (1.0 - p);
        v_ht += (w_bar / w) * q + (w_bar * (1.0 - w) / w) * (p - p_bar).powi(2);
        v_b += (w / w_bar) * q + (w * (1.0 - w) / w_bar) * (p - p_bar_w).powi(2);
        e += (w / w_bar - 1.0) * (p - p_bar);
    }
    AsymptoticVariances {
        v_ht: v_ht / n,
        v_b: v_b / n,
        e_b: (w_bar / n).sqrt() * e,
    }
}

/// `p̂ + (Y_i − p̂)/(τ0 + 1)` for each observation.
pub fn beta_hierarchy_shrinkage(y_obs: &[u8], tau0: f64) -> Result<Vec<f64>> {
    if y_obs.is_empty() {
        return Err(no_data());
    }
    if !(tau0 > 0.0) {
        return invalid(format!("tau0 must be positive, got {tau0}"));
    }
    let p_hat = y_obs.iter().map(|&y| f64::from(y)).sum::<f64>() / y_obs.len() as f64;
    Ok(y_obs
        .iter()
        .map(|&y| p_hat + (f64::from(y) - p_hat) / (tau0 + 1.0))
        .collect())
}

pub const RHO_GRID: usize = 10_000;

/// Mode and standard deviation of the posterior of ρ given i.i.d.
/// Bernoulli(ρ) observations, on a midpoint grid over (0, 1).
pub fn posterior_rho_concentration(y_obs: &[u8], prior_rho: &dyn Fn(f64) -> f64) -> Result<(f64, f64)> {
    if y_obs.is_empty() {
        return Err(no_data());
    }
    let ones = y_obs.iter().filter(|&&y| y == 1).count() as f64;
    let zeros = y_obs.len() as f64 - ones;
    let grid: Vec<f64> = (0..RHO_GRID)
        .map(|i| (i as f64 + 0.5) / RHO_GRID as f64)
        .collect();
    let logs: Vec<f64> = grid
        .iter()
        .map(|&r| prior_rho(r).ln() + ones * r.ln() + zeros * (1.0 - r).ln())
        .collect();
    let lse = log_sum_exp(&logs);
    if !lse.is_finite() {
        return Err(LabError::Numerical("posterior of rho has no mass on the grid".into()));
    }
    let mut mode = grid[0];
    let mut best = f64::NEG_INFINITY;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (r, l) in grid.iter().zip(&logs) {
        if *l > best {
            best = *l;
            mode = *r;
        }
        let wgt = (l - lse).exp();
        m1 += wgt * r;
        m2 += wgt * r * r;
    }
    Ok((mode, (m2 - m1 * m1).max(0.0).sqrt()))
}

/// For a prior density g on p: `E(p|Y=1) − E(p|Y=0)` and the identity's
/// right-hand side `var/(m(1−m))`, both by quadrature.
pub fn outcome_posterior_gap(prior: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let gl = crate::numeric::GaussLegendre::new(32);
    let int = |f: &dyn Fn(f64) -> f64| gl.integrate_composite(0.0, 1.0, 256, f);
    let z = int(&|p| prior(p));
    let m = int(&|p| p * prior(p)) / z;
    let m2 = int(&|p| p * p * prior(p)) / z;
    let e1 = m2 / m;
    let e0 = (m - m2) / (1.0 - m);
    (e1 - e0, (m2 - m * m) / (m * (1.0 - m)))
}
