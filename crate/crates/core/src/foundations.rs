//! Empirical checkers for persistence of priors on finite grids and for
//! the bias of posterior-mean estimators.

use crate::error::{invalid, Result};
use crate::numeric::{log_sum_exp, normal_log_pdf};
use crate::stochastics::{draw_beta, RngStream};

pub use crate::density_functional::{two_point_posterior, two_point_posterior_linearized};

/// Observation law given a grid point β and sample size n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    /// Sufficient statistic `X ~ N(β, σ²/n)`.
    GaussianMean { sigma: f64 },
}

/// A finite parameter grid with loss `|a − b|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModel {
    grid: Vec<f64>,
    pub observation: Observation,
}

impl FiniteModel {
    pub fn new(mut grid: Vec<f64>, observation: Observation) -> Result<Self> {
        if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) {
            return invalid("parameter grid must be non-empty and finite");
        }
        grid.sort_by(f64::total_cmp);
        if grid.windows(2).any(|w| w[0] == w[1]) {
            return invalid("parameter grid points must be distinct");
        }
        match observation {
            Observation::GaussianMean { sigma } if !(sigma > 0.0) => {
                return invalid(format!("sigma must be positive, got {sigma}"))
            }
            _ => {}
        }
        Ok(Self { grid, observation })
    }

    /// `{0, 1}` with unit-variance Gaussian noise.
    pub fn two_point() -> Self {
        Self::new(vec![0.0, 1.0], Observation::GaussianMean { sigma: 1.0 }).expect("valid grid")
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn loss(&self, a: f64, b: f64) -> f64 {
        (a - b).abs()
    }

    /// Half the smallest spacing; infinite for a single point.
    pub fn default_delta(&self) -> f64 {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
            * 0.5
    }

    pub fn sample(&self, beta: f64, n: usize, stream: &mut RngStream) -> f64 {
        match self.observation {
            Observation::GaussianMean { sigma } => beta + sigma / (n as f64).sqrt() * stream.standard_normal(),
        }
    }

    pub fn log_density(&self, x: f64, beta: f64, n: usize) -> f64 {
        match self.observation {
            Observation::GaussianMean { sigma } => normal_log_pdf(x, beta, sigma * sigma / n as f64),
        }
    }

    /// Grid maximum-likelihood estimate (lowest grid point on ties).
    pub fn mle(&self, x: f64, n: usize) -> f64 {
        let mut best = (f64::NEG_INFINITY, self.grid[0]);
        for &g in &self.grid {
            let l = self.log_density(x, g, n);
            if l > best.0 {
                best = (l, g);
            }
        }
        best.1
    }

    /// Exact posterior over the grid from density ratios.
    pub fn posterior(&self, prior: &[f64], x: f64, n: usize) -> Vec<f64> {
        let logs: Vec<f64> = self
            .grid
            .iter()
            .zip(prior)
            .map(|(&g, &w)| if w > 0.0 { w.ln() + self.log_density(x, g, n) } else { f64::NEG_INFINITY })
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    fn check_prior(&self, prior: &[f64]) -> Result<()> {
        if prior.len() != self.grid.len() {
            return invalid("prior length must match the grid");
        }
        if prior.iter().any(|w| !(*w >= 0.0)) {
            return invalid("prior weights must be nonnegative");
        }
        let s: f64 = prior.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return invalid(format!("prior weights sum to {s}, not 1"));
        }
        Ok(())
    }
}

fn draw_index(probs: &[f64], stream: &mut RngStream) -> usize {
    let u = stream.uniform();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub type GridEstimator<'a> = dyn Fn(f64, usize) -> f64 + Sync + 'a;

/// One pass of `β → X → (β̂, β^π)`. Returns the three exceedance
/// indicators `[ℓ(β,β̂)>δ, ℓ(β^π,β̂)>δ, ℓ(β,β^π)>δ]` and the posterior
/// mass (which should be 1).
pub fn persistence_replicate(
    model: &FiniteModel,
    prior: &[f64],
    estimator: &GridEstimator<'_>,
    n: usize,
    delta: f64,
    stream: &mut RngStream,
) -> ([bool; 3], f64) {
    let beta = model.grid[draw_index(prior, stream)];
    let x = model.sample(beta, n, stream);
    let post = model.posterior(prior, x, n);
    let beta_pi = model.grid[draw_index(&post, stream)];
    let est = estimator(x, n);
    (
        [
            model.loss(beta, est) > delta,
            model.loss(beta_pi, est) > delta,
            model.loss(beta, beta_pi) > delta,
        ],
        post.iter().sum(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceRow {
    pub n: usize,
    /// `P(ℓ(β,β̂)>δ)`, `P(ℓ(β^π,β̂)>δ)`, `P(ℓ(β,β^π)>δ)`.
    pub probabilities: [f64; 3],
    pub standard_errors: [f64; 3],
    /// Third ≤ first + second within two combined standard errors.
    pub triangle_holds: bool,
    /// Largest `|Σ posterior − 1|` seen.
    pub max_posterior_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceReport {
    pub delta: f64,
    pub rows: Vec<PersistenceRow>,
}

impl PersistenceReport {
    /// Each probability is non-increasing along the grid.
    pub fn monotone(&self) -> [bool; 3] {
        let mut out = [true; 3];
        for w in self.rows.windows(2) {
            for k in 0..3 {
                out[k] &= w[1].probabilities[k] <= w[0].probabilities[k];
            }
        }
        out
    }
}

/// Simulates the persistence chain at each n. Replication r at grid
/// index g uses `stream.lane(g).lane(r)`.
pub fn persistence_check(
    model: &FiniteModel,
    prior: &[f64],
    estimator: &GridEstimator<'_>,
    n_grid: &[usize],
    reps: usize,
    delta: Option<f64>,
    stream: &RngStream,
) -> Result<PersistenceReport> {
    model.check_prior(prior)?;
    if reps == 0 {
        return invalid("reps must be at least 1");
    }
    if n_grid.iter().any(|&n| n == 0) {
        return invalid("sample sizes must be positive");
    }
    let delta = delta.unwrap_or_else(|| model.default_delta());
    if !(delta >= 0.0) {
        return invalid(format!("delta must be nonnegative, got {delta}"));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (g, &n) in n_grid.iter().enumerate() {
        let lane = stream.lane(g as u64);
        let mut counts = [0usize; 3];
        let mut max_err = 0.0f64;
        for r in 0..reps {
            let mut s = lane.lane(r as u64);
            let (hits, mass) = persistence_replicate(model, prior, estimator, n, delta, &mut s);
            for k in 0..3 {
                counts[k] += hits[k] as usize;
            }
            max_err = max_err.max((mass - 1.0).abs());
        }
        let probabilities = counts.map(|c| c as f64 / reps as f64);
        let standard_errors = probabilities.map(|p| (p * (1.0 - p) / reps as f64).sqrt());
        let slack = 2.0 * standard_errors.iter().map(|s| s * s).sum::<f64>().sqrt();
        rows.push(PersistenceRow {
            n,
            probabilities,
            standard_errors,
            triangle_holds: probabilities[2] <= probabilities[0] + probabilities[1] + slack,
            max_posterior_error: max_err,
        });
    }
    Ok(PersistenceReport { delta, rows })
}

/// Conjugate prior/likelihood pairs with exact posterior means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JointModel {
    /// θ ~ Beta(a, b), S | θ ~ Binomial(trials, θ).
    BetaBinomial { a: f64, b: f64, trials: u32 },
    /// θ ~ N(m0, v0), X | θ ~ N(θ, σ²).
    NormalNormal { m0: f64, v0: f64, sigma2: f64 },
}

impl JointModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JointModel::BetaBinomial { a, b, .. } if !(a > 0.0 && b > 0.0) => {
                invalid(format!("beta prior parameters must be positive, got ({a}, {b})"))
            }
            JointModel::NormalNormal { v0, sigma2, .. } if !(v0 > 0.0 && sigma2 >= 0.0) => {
                invalid(format!("need v0 > 0 and sigma2 >= 0, got ({v0}, {sigma2})"))
            }
            _ => Ok(()),
        }
    }

    /// The observation pins θ down exactly.
    pub fn is_degenerate(&self) -> bool {
        matches!(*self, JointModel::NormalNormal { sigma2, .. } if sigma2 == 0.0)
    }

    /// Draws `(θ, E[θ | X])`.
    pub fn draw(&self, stream: &mut RngStream) -> Result<(f64, f64)> {
        match *self {
            JointModel::BetaBinomial { a, b, trials } => {
                let theta = draw_beta(stream, a, b)?;
                let s = (0..trials).filter(|_| stream.uniform() < theta).count() as f64;
                Ok((theta, (a + s) / (a + b + trials as f64)))
            }
            JointModel::NormalNormal { m0, v0, sigma2 } => {
                let theta = m0 + v0.sqrt() * stream.standard_normal();
                let x = theta + sigma2.sqrt() * stream.standard_normal();
                Ok((theta, m0 + v0 / (v0 + sigma2) * (x - m0)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesBiasReport {
    pub mean_theta: f64,
    pub mean_estimate: f64,
    pub var_theta: f64,
    pub var_estimate: f64,
    /// MC-SE of `mean(θ̂ − θ)`.
    pub mean_se: f64,
    /// `var θ − var θ̂`.
    pub variance_gap: f64,
    pub variance_gap_se: f64,
    pub degenerate: bool,
    pub mean_matched: bool,
    /// `var θ̂ < var θ − 3 MC-SE`; vacuously true when degenerate.
    pub variance_reduced: bool,
}

impl BayesBiasReport {
    pub fn passed(&self) -> bool {
        self.mean_matched && self.variance_reduced
    }
}

/// Monte Carlo check that the posterior mean is unbiased on average over
/// the prior but strictly less variable than θ. Replication r uses
/// `stream.lane(r)`.
pub fn bayes_bias_check(model: &JointModel, reps: usize, stream: &RngStream) -> Result<BayesBiasReport> {
    model.validate()?;
    if reps < 2 {
        return invalid("reps must be at least 2");
    }
    let mut theta = Vec::with_capacity(reps);
    let mut est = Vec::with_capacity(reps);
    for r in 0..reps {
        let (t, e) = model.draw(&mut stream.lane(r as u64))?;
        theta.push(t);
        est.push(e);
    }
    let nf = reps as f64;
    let mt = theta.iter().sum::<f64>() / nf;
    let me = est.iter().sum::<f64>() / nf;
    let vt = theta.iter().map(|t| (t - mt).powi(2)).sum::<f64>() / nf;
    let ve = est.iter().map(|e| (e - me).powi(2)).sum::<f64>() / nf;
    let diffs: Vec<f64> = theta.iter().zip(&est).map(|(t, e)| e - t).collect();
    let md = me - mt;
    let vd = diffs.iter().map(|d| (d - md).powi(2)).sum::<f64>() / (nf - 1.0);
    let mean_se = (vd / nf).sqrt();
    let gap = vt - ve;
    let psi: Vec<f64> = theta
        .iter()
        .zip(&est)
        .map(|(t, e)| (t - mt).powi(2) - (e - me).powi(2))
        .collect();
    let vpsi = psi.iter().map(|p| (p - gap).powi(2)).sum::<f64>() / (nf - 1.0);
    let gap_se = (vpsi / nf).sqrt();
    let degenerate = model.is_degenerate() || diffs.iter().all(|d| *d == 0.0);
    Ok(BayesBiasReport {
        mean_theta: mt,
        mean_estimate: me,
        var_theta: vt,
        var_estimate: ve,
        mean_se,
        variance_gap: gap,
        variance_gap_se: gap_se,
        degenerate,
        mean_matched: if degenerate { md == 0.0 } else { md.abs() < 3.0 * mean_se },
        variance_reduced: degenerate || gap > 3.0 * gap_se,
    })
}
