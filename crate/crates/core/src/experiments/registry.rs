//! The registered experiments and their parameter tables.

use std::sync::Arc;

use crate::density_functional::{
    adversarial_bins, density_replicate, AdversarialDensity, AdversarialFamily, BiasCorrection, HistogramRule,
    HolderDensity, SamplingTarget,
};
use crate::error::{LabError, Result};
use crate::foundations::{persistence_replicate, FiniteModel, JointModel, Observation};
use crate::missing_data::{
    draw_outcomes, generate_design, ht_hajek, naive_bayes_mean, stratified_bayes, PLaw, PanelDesign,
    PanelGenConfig, Strata, WLaw,
};
use crate::mixed_model::{differencing_estimator, gaussian_joint_fit, generate_hospitals, MixedModelTruth};
use crate::partial_linear::{beta_hat_plm, generate_plm, naive_plugin_beta, PlmDesign};
use crate::sequence_models::{
    bounded_bayes_functional_with, freq_functional_estimate, lasso_toy, optimal_lambda, spike_slab_posterior,
    PriorShape, SequenceData, SpikeSlabPrior, WhiteNoiseInstance, WhiteNoiseSpec,
};
use crate::stochastics::RngStream;

use super::config::{ExperimentConfig, ParamValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamDef {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExperimentDef {
    pub id: &'static str,
    pub title: &'static str,
    pub model: &'static str,
    pub default_sizes: &'static [usize],
    pub params: &'static [ParamDef],
}

const fn p(name: &'static str, default: &'static str, help: &'static str) -> ParamDef {
    ParamDef { name, default, help }
}

static REGISTRY: &[ExperimentDef] = &[
    ExperimentDef {
        id: "ex1_neyman_scott",
        title: "Paired hospitals with informative second-patient observation",
        model: "X = g + eta, Y = h + theta X + eps for two patients per hospital; the second patient is seen \
                with probability sigmoid(a + kappa_w (g + h)). Compares differencing with Gaussian maximum \
                likelihood on complete pairs and on all hospitals.",
        default_sizes: &[10_000],
        params: &[
            p("theta", "1", "slope theta"),
            p("mu_g", "0", "mean of g"),
            p("mu_h", "0", "mean of h"),
            p("var_g", "1", "variance of g"),
            p("var_h", "1", "variance of h"),
            p("cov_gh", "0.5", "covariance of g and h"),
            p("noise_var_x", "1", "variance of eta"),
            p("noise_var_y", "1", "variance of eps"),
            p("kappa_w", "2", "observation log-odds slope in g + h"),
            p("target_rate", "0.5", "mean observation rate of the second patient"),
        ],
    },
    ExperimentDef {
        id: "ex2_white_noise",
        title: "Linear functional in the white-noise sequence model",
        model: "X_i = mu_i + n^(-1/2) e_i, theta = sum i^(-xi) mu_i with |mu_i| <= i^(-nu). Truncated sum versus \
                the posterior mean under bounded priors, on the instance mu_i = c_i for m* < i < p with \
                p = round(n^(1/(2nu-1))) and m* = round(n^(1/(2nu))).",
        default_sizes: &[1_000],
        params: &[
            p("xi", "0.3", "functional exponent, in (0, 1/2)"),
            p("nu", "0.8", "smoothness exponent, nu + xi > 1"),
            p("prior_grid", "8", "initial quadrature nodes per half-interval"),
            p("prior_shape", "uniform", "uniform or triangular prior on [-c_i, c_i]"),
        ],
    },
    ExperimentDef {
        id: "ex4_missing_data",
        title: "Bernoulli outcomes missing at known rates",
        model: "Y_i ~ Bernoulli(p_i) observed when S_i = 1, S_i ~ Bernoulli(w_i), with \
                p_i = base_i + kappa (w_i - mean w). The design (p, w) is drawn once per n. Target is mean p.",
        default_sizes: &[10_000],
        params: &[
            p("kappa", "0.2", "coupling between p and w"),
            p("p_law", "constant", "constant or beta"),
            p("p0", "0.4", "base p for the constant law"),
            p("tau", "10", "beta law concentration"),
            p("rho", "0.4", "beta law mean"),
            p("w_law", "uniform", "uniform (on [w_min, 1]) or strata"),
            p("w_min", "0.1", "lower end of the uniform weight law"),
            p("w_values", "0.2, 0.8", "stratum weights"),
            p("w_fractions", "0.5, 0.5", "stratum shares of n"),
        ],
    },
    ExperimentDef {
        id: "ex5_sparse_means",
        title: "Sparse normal means: lasso versus spike and slab",
        model: "W_j = beta_j + n^(-1/2) e_j for j <= p, beta_j = j^(-alpha), p = p_ratio n. Reports the summed \
                squared error of soft thresholding at the tuned lambda and of the spike-and-slab posterior mean.",
        default_sizes: &[1_000],
        params: &[
            p("alpha", "1", "decay exponent of the ordered means, > 1/2"),
            p("p_ratio", "10", "dimension as a multiple of n"),
            p("gamma", "0", "slab probability; 0 selects n^(1/(2 alpha))/p"),
            p("tau2", "1", "slab variance"),
        ],
    },
    ExperimentDef {
        id: "ex6_density_functional",
        title: "Integrated squared density",
        model: "theta = integral of f^2 on [0,1]. Split-sample histogram estimator with bias correction; \
                on the adversarial sign-modulated family also the posterior-mean plug-in.",
        default_sizes: &[1_000, 10_000],
        params: &[
            p("alpha", "0.4", "Holder exponent, in (1/4, 1/2)"),
            p("sine_amplitude", "0.5", "f0(x) = 1 + a sin(2 pi x)"),
            p("target", "plain", "plain or adversarial"),
            p("bump_amplitude", "1", "scale of the adversarial bumps"),
            p("correction", "calibrated", "calibrated, or a number for a fixed constant"),
            p("bin_scale", "0.1", "M = round(scale n^(1/(4 alpha) + offset))"),
            p("bin_offset", "0.025", "exponent offset of the bin rule"),
        ],
    },
    ExperimentDef {
        id: "ex7_partial_linear",
        title: "Partial linear model with many confounders",
        model: "X = phi'W + zeta, Y = psi'W + xi. phi loads on the first m confounders and psi on the next m, \
                each with coefficient coef. Exponentially weighted residual aggregate versus the single \
                least-RSS working model.",
        default_sizes: &[2_000],
        params: &[
            p("p", "10", "number of confounders"),
            p("m", "3", "working model size"),
            p("coef", "0", "loading on each active confounder; 0 selects m^(-1/2)"),
            p("var_zeta", "1", "variance of zeta"),
            p("var_xi", "2", "variance of xi"),
            p("cov", "1", "covariance of zeta and xi"),
            p("alpha_factor", "8", "temperature as a multiple of max(var_zeta, var_xi)"),
        ],
    },
    ExperimentDef {
        id: "thm1_persistence",
        title: "Persistence of priors on a finite grid",
        model: "beta ~ prior on a grid, X ~ N(beta, sigma^2/n), beta_pi a posterior draw. Each replication \
                records the indicators loss(beta, est) > delta, loss(beta_pi, est) > delta and \
                loss(beta, beta_pi) > delta, so summary means are exceedance probabilities.",
        default_sizes: &[4, 16, 64, 256],
        params: &[
            p("grid", "0, 1", "parameter grid"),
            p("prior", "uniform", "uniform, or a list of weights"),
            p("sigma", "1", "noise scale"),
            p("estimator", "mle", "mle or constant"),
            p("constant", "0", "value returned by the constant estimator"),
            p("delta", "-1", "loss threshold; negative selects half the grid spacing"),
        ],
    },
    ExperimentDef {
        id: "thm_bayes_bias",
        title: "Posterior means are conditionally biased",
        model: "Draws (theta, E[theta | X]) from a conjugate pair. For beta_binomial, n is the number of \
                trials; for normal_normal, X is the mean of n observations with variance sigma2.",
        default_sizes: &[10],
        params: &[
            p("model", "beta_binomial", "beta_binomial or normal_normal"),
            p("a", "1", "beta prior a"),
            p("b", "1", "beta prior b"),
            p("m0", "0", "normal prior mean"),
            p("v0", "1", "normal prior variance"),
            p("sigma2", "1", "per-observation noise variance"),
        ],
    },
];

pub fn registered() -> &'static [ExperimentDef] {
    REGISTRY
}

pub fn lookup(id: &str) -> Result<&'static ExperimentDef> {
    REGISTRY.iter().find(|d| d.id == id).ok_or_else(|| {
        let ids: Vec<&str> = REGISTRY.iter().map(|d| d.id).collect();
        LabError::Config(format!("unknown experiment '{id}' (registered: {})", ids.join(", ")))
    })
}

/// Human-readable parameter table for `id`.
pub fn describe(id: &str) -> Result<String> {
    let d = lookup(id)?;
    let mut out = format!("{}\n  {}\n\n{}\n\n", d.id, d.title, d.model);
    let sizes: Vec<String> = d.default_sizes.iter().map(|n| n.to_string()).collect();
    out.push_str(&format!("suggested sizes: {}\n\nparameters:\n", sizes.join(", ")));
    let w = d.params.iter().map(|p| p.name.len()).max().unwrap_or(0);
    for p in d.params {
        out.push_str(&format!("  {:w$}  default {:<10}  {}\n", p.name, p.default, p.help, w = w));
    }
    Ok(out)
}

struct Params<'a> {
    cfg: &'a ExperimentConfig,
    def: &'static ExperimentDef,
}

impl<'a> Params<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        let def = lookup(&cfg.experiment_id)?;
        for key in cfg.params.keys() {
            if !def.params.iter().any(|p| p.name == key) {
                return Err(LabError::Config(format!("experiment {} has no parameter '{key}'", def.id)));
            }
        }
        Ok(Self { cfg, def })
    }

    fn value(&self, name: &str) -> ParamValue {
        match self.cfg.params.get(name) {
            Some(v) => v.clone(),
            None => {
                let d = self.def.params.iter().find(|p| p.name == name).expect("declared parameter");
                ParamValue::parse(d.default)
            }
        }
    }

    fn num(&self, name: &str) -> Result<f64> {
        match self.value(name) {
            ParamValue::Number(x) => Ok(x),
            other => Err(LabError::Config(format!("parameter '{name}' must be a number, got '{other}'"))),
        }
    }

    fn count(&self, name: &str) -> Result<usize> {
        let x = self.num(name)?;
        if x.fract() != 0.0 || x < 0.0 {
            return Err(LabError::Config(format!("parameter '{name}' must be a nonnegative integer, got {x}")));
        }
        Ok(x as usize)
    }

    fn list(&self, name: &str) -> Result<Vec<f64>> {
        match self.value(name) {
            ParamValue::Number(x) => Ok(vec![x]),
            ParamValue::List(v) => Ok(v),
            other => Err(LabError::Config(format!("parameter '{name}' must be numeric, got '{other}'"))),
        }
    }

    fn text(&self, name: &str) -> String {
        self.value(name).to_string()
    }
}

/// Parameter problems found while building become configuration errors.
fn as_config(e: LabError) -> LabError {
    match e {
        LabError::InvalidArgument(m) | LabError::Degenerate(m) => LabError::Config(m),
        other => other,
    }
}

pub(crate) trait Replicator: Sync {
    fn estimators(&self) -> Vec<String>;
    fn truth(&self, grid_index: usize) -> Vec<Option<f64>>;
    fn replicate(&self, grid_index: usize, stream: &mut RngStream) -> Result<Vec<f64>>;

    /// Non-fatal remarks about the configuration.
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Stream id reserved for drawing fixed designs.
const DESIGN_STREAM: u64 = u64::MAX - 1;

pub(crate) fn build_replicator(cfg: &ExperimentConfig) -> Result<Box<dyn Replicator>> {
    let params = Params::new(cfg)?;
    let rep: Box<dyn Replicator> = match params.def.id {
        "ex1_neyman_scott" => Box::new(NeymanScott::build(&params)?),
        "ex2_white_noise" => Box::new(WhiteNoise::build(&params)?),
        "ex4_missing_data" => Box::new(MissingData::build(&params)?),
        "ex5_sparse_means" => Box::new(SparseMeans::build(&params)?),
        "ex6_density_functional" => Box::new(DensityFunctional::build(&params)?),
        "ex7_partial_linear" => Box::new(PartialLinear::build(&params)?),
        "thm1_persistence" => Box::new(Persistence::build(&params)?),
        "thm_bayes_bias" => Box::new(BayesBias::build(&params)?),
        other => unreachable!("registered experiment {other} has no builder"),
    };
    Ok(rep)
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

struct NeymanScott {
    truth: MixedModelTruth,
    sizes: Vec<usize>,
}

impl NeymanScott {
    fn build(p: &Params<'_>) -> Result<Self> {
        let cov = p.num("cov_gh")?;
        let truth = MixedModelTruth {
            theta: p.num("theta")?,
            mu_g: p.num("mu_g")?,
            mu_h: p.num("mu_h")?,
            sigma_gh: [[p.num("var_g")?, cov], [cov, p.num("var_h")?]],
            sigma_noise: [[p.num("noise_var_x")?, 0.0], [0.0, p.num("noise_var_y")?]],
            kappa_w: p.num("kappa_w")?,
            target_rate: p.num("target_rate")?,
        };
        truth.validate().map_err(as_config)?;
        Ok(Self {
            truth,
            sizes: p.cfg.size_grid.clone(),
        })
    }
}

impl Replicator for NeymanScott {
    fn estimators(&self) -> Vec<String> {
        names(&["differencing", "joint_complete", "joint_incomplete"])
    }

    fn truth(&self, _: usize) -> Vec<Option<f64>> {
        vec![Some(self.truth.theta); 3]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let records = generate_hospitals(&self.truth, self.sizes[gi], stream)?;
        Ok(vec![
            differencing_estimator(&records)?,
            gaussian_joint_fit(&records, false)?.theta_hat,
            gaussian_joint_fit(&records, true)?.theta_hat,
        ])
    }
}

struct WhiteNoise {
    grid: Vec<(WhiteNoiseSpec, WhiteNoiseInstance)>,
    prior_grid: usize,
    shape: PriorShape,
}

impl WhiteNoise {
    fn build(p: &Params<'_>) -> Result<Self> {
        let (xi, nu) = (p.num("xi")?, p.num("nu")?);
        let prior_grid = p.count("prior_grid")?;
        if prior_grid < 3 {
            return Err(LabError::Config("prior_grid must be at least 3".into()));
        }
        let shape = match p.text("prior_shape").as_str() {
            "uniform" => PriorShape::Uniform,
            "triangular" => PriorShape::Triangular,
            other => return Err(LabError::Config(format!("unknown prior_shape '{other}'"))),
        };
        let mut grid = Vec::new();
        for &n in &p.cfg.size_grid {
            let spec = WhiteNoiseSpec::with_default_length(n as f64, xi, nu).map_err(as_config)?;
            let m_star = ((n as f64).powf(1.0 / (2.0 * nu)).round() as usize).min(spec.p);
            let inst = WhiteNoiseInstance::adversarial(&spec, m_star, spec.p).map_err(as_config)?;
            grid.push((spec, inst));
        }
        Ok(Self { grid, prior_grid, shape })
    }
}

impl Replicator for WhiteNoise {
    fn estimators(&self) -> Vec<String> {
        names(&["freq", "bayes_bounded"])
    }

    fn truth(&self, gi: usize) -> Vec<Option<f64>> {
        vec![Some(self.grid[gi].1.theta); 2]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let (spec, inst) = &self.grid[gi];
        let data = SequenceData::simulate(&inst.mu, spec.n, stream)?;
        Ok(vec![
            freq_functional_estimate(&data, spec, spec.default_cutoff())?,
            bounded_bayes_functional_with(&data, spec, self.prior_grid, self.shape)?,
        ])
    }
}

struct MissingData {
    designs: Vec<PanelDesign>,
    strata: Option<Vec<Strata>>,
}

impl MissingData {
    fn build(p: &Params<'_>) -> Result<Self> {
        let p_law = match p.text("p_law").as_str() {
            "constant" => PLaw::Constant(p.num("p0")?),
            "beta" => PLaw::Beta {
                tau: p.num("tau")?,
                rho: p.num("rho")?,
            },
            other => return Err(LabError::Config(format!("unknown p_law '{other}'"))),
        };
        let kappa = p.num("kappa")?;
        let law = p.text("w_law");
        let mut designs = Vec::new();
        for (gi, &n) in p.cfg.size_grid.iter().enumerate() {
            let w_law = match law.as_str() {
                "uniform" => WLaw::Continuous { w_min: p.num("w_min")? },
                "strata" => {
                    let values = p.list("w_values")?;
                    let fr = p.list("w_fractions")?;
                    if fr.len() != values.len() || fr.iter().any(|f| !(*f > 0.0)) {
                        return Err(LabError::Config("w_fractions must be positive and match w_values".into()));
                    }
                    let total: f64 = fr.iter().sum();
                    let mut sizes: Vec<usize> = fr.iter().map(|f| (f / total * n as f64).floor() as usize).collect();
                    let short = n - sizes.iter().sum::<usize>();
                    *sizes.last_mut().unwrap() += short;
                    WLaw::Strata { values, sizes }
                }
                other => return Err(LabError::Config(format!("unknown w_law '{other}'"))),
            };
            let gen = PanelGenConfig::new(n, p_law.clone(), w_law, kappa);
            let mut s = RngStream::new(p.cfg.master_seed, DESIGN_STREAM).lane(gi as u64);
            designs.push(generate_design(&gen, &mut s).map_err(as_config)?);
        }
        let strata = (law == "strata").then(|| designs.iter().map(|d| Strata::from_weights(&d.w)).collect());
        Ok(Self { designs, strata })
    }
}

impl Replicator for MissingData {
    fn estimators(&self) -> Vec<String> {
        let mut e = names(&["ht_hajek", "naive_bayes"]);
        if self.strata.is_some() {
            e.push("stratified_bayes".into());
        }
        e
    }

    fn truth(&self, gi: usize) -> Vec<Option<f64>> {
        let d = &self.designs[gi];
        let p_bar = d.p.iter().sum::<f64>() / d.p.len() as f64;
        vec![Some(p_bar); self.estimators().len()]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let panel = draw_outcomes(&self.designs[gi], stream)?;
        let mut out = vec![ht_hajek(&panel)?, naive_bayes_mean(&panel)?];
        if let Some(strata) = &self.strata {
            out.push(stratified_bayes(&panel, &strata[gi])?);
        }
        Ok(out)
    }
}

struct SparseMeans {
    grid: Vec<SparseSetting>,
}

struct SparseSetting {
    n: f64,
    beta: Vec<f64>,
    lambda: f64,
    prior: SpikeSlabPrior,
}

impl SparseMeans {
    fn build(p: &Params<'_>) -> Result<Self> {
        let alpha = p.num("alpha")?;
        let ratio = p.num("p_ratio")?;
        let gamma = p.num("gamma")?;
        let tau2 = p.num("tau2")?;
        let mut grid = Vec::new();
        for &n in &p.cfg.size_grid {
            let nf = n as f64;
            let dim = (ratio * nf).round();
            if !(dim >= 1.0) {
                return Err(LabError::Config("p_ratio gives an empty model".into()));
            }
            let lambda = optimal_lambda(nf, dim, alpha).map_err(as_config)?;
            let g = if gamma == 0.0 { (nf.powf(1.0 / (2.0 * alpha)) / dim).min(1.0) } else { gamma };
            let prior = SpikeSlabPrior::new(g, tau2).map_err(as_config)?;
            let beta = (1..=dim as usize).map(|j| (j as f64).powf(-alpha)).collect();
            grid.push(SparseSetting { n: nf, beta, lambda, prior });
        }
        Ok(Self { grid })
    }
}

impl Replicator for SparseMeans {
    fn estimators(&self) -> Vec<String> {
        names(&["lasso_sse", "spike_slab_sse"])
    }

    fn truth(&self, _: usize) -> Vec<Option<f64>> {
        vec![None, None]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let s = &self.grid[gi];
        let data = SequenceData::simulate(&s.beta, s.n, stream)?;
        let lasso = lasso_toy(&data, s.lambda)?;
        let mut sse_l = 0.0;
        let mut sse_s = 0.0;
        for ((w, b), l) in data.w.iter().zip(&s.beta).zip(&lasso) {
            sse_l += (l - b).powi(2);
            let post = spike_slab_posterior(*w, s.n, &s.prior)?;
            sse_s += (post.mixture_mean() - b).powi(2);
        }
        Ok(vec![sse_l, sse_s])
    }
}

enum DensityTarget {
    Plain(HolderDensity),
    Adversarial(AdversarialDensity),
}

struct DensityFunctional {
    grid: Vec<(usize, usize, DensityTarget)>,
    correction: BiasCorrection,
    adversarial: bool,
}

impl DensityFunctional {
    fn build(p: &Params<'_>) -> Result<Self> {
        let alpha = p.num("alpha")?;
        let f0 = HolderDensity::sine(p.num("sine_amplitude")?, alpha).map_err(as_config)?;
        let correction = match p.value("correction") {
            ParamValue::Number(c) => BiasCorrection::Fixed(c),
            ParamValue::Text(t) if t == "calibrated" => BiasCorrection::Calibrated,
            other => return Err(LabError::Config(format!("correction must be 'calibrated' or a number, got '{other}'"))),
        };
        let rule = HistogramRule {
            scale: p.num("bin_scale")?,
            exponent_offset: p.num("bin_offset")?,
        };
        let adversarial = match p.text("target").as_str() {
            "plain" => false,
            "adversarial" => true,
            other => return Err(LabError::Config(format!("unknown target '{other}'"))),
        };
        let amp = p.num("bump_amplitude")?;
        let mut grid = Vec::new();
        for &n in &p.cfg.size_grid {
            if n % 2 != 0 || n < 4 {
                return Err(LabError::Config(format!("sample sizes must be even and at least 4, got {n}")));
            }
            let m = rule.bins(n, alpha);
            let target = if adversarial {
                let fam = AdversarialFamily::new(f0.clone(), adversarial_bins(n, alpha), amp).map_err(as_config)?;
                DensityTarget::Adversarial(AdversarialDensity::aligned(Arc::new(fam)).map_err(as_config)?)
            } else {
                DensityTarget::Plain(f0.clone())
            };
            grid.push((n, m, target));
        }
        Ok(Self {
            grid,
            correction,
            adversarial,
        })
    }
}

impl Replicator for DensityFunctional {
    fn estimators(&self) -> Vec<String> {
        if self.adversarial {
            names(&["freq", "bayes_plugin"])
        } else {
            names(&["freq"])
        }
    }

    fn truth(&self, gi: usize) -> Vec<Option<f64>> {
        let theta = match &self.grid[gi].2 {
            DensityTarget::Plain(f) => f.theta(),
            DensityTarget::Adversarial(d) => d.theta(),
        };
        vec![Some(theta); self.estimators().len()]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let (n, m, target) = &self.grid[gi];
        let t = match target {
            DensityTarget::Plain(f) => SamplingTarget::Holder(f),
            DensityTarget::Adversarial(d) => SamplingTarget::Adversarial(d),
        };
        let (f, b) = density_replicate(t, *n, *m, self.correction, stream)?;
        Ok(std::iter::once(f).chain(b).collect())
    }
}

struct PartialLinear {
    designs: Vec<PlmDesign>,
    alpha: f64,
}

impl PartialLinear {
    fn build(p: &Params<'_>) -> Result<Self> {
        let dim = p.count("p")?;
        let m = p.count("m")?;
        if m == 0 || 2 * m > dim {
            return Err(LabError::Config(format!("need 1 <= m and 2m <= p, got m={m}, p={dim}")));
        }
        let coef = match p.num("coef")? {
            c if c == 0.0 => (m as f64).powf(-0.5),
            c => c,
        };
        let (vz, vx, cov) = (p.num("var_zeta")?, p.num("var_xi")?, p.num("cov")?);
        let phi: Vec<f64> = (0..dim).map(|j| if j < m { coef } else { 0.0 }).collect();
        let psi: Vec<f64> = (0..dim).map(|j| if (m..2 * m).contains(&j) { coef } else { 0.0 }).collect();
        let mut designs = Vec::new();
        for &n in &p.cfg.size_grid {
            let beta = if vz > 0.0 { cov / vz } else { f64::NAN };
            designs.push(PlmDesign::new(n, m, phi.clone(), psi.clone(), beta, vz, vx, cov).map_err(as_config)?);
        }
        let alpha = p.num("alpha_factor")? * vz.max(vx);
        if !(alpha > 0.0) {
            return Err(LabError::Config("temperature must be positive".into()));
        }
        Ok(Self { designs, alpha })
    }
}

impl Replicator for PartialLinear {
    fn estimators(&self) -> Vec<String> {
        names(&["aggregate", "naive"])
    }

    fn truth(&self, gi: usize) -> Vec<Option<f64>> {
        vec![Some(self.designs[gi].beta); 2]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let d = &self.designs[gi];
        let s = generate_plm(d, stream)?;
        Ok(vec![
            beta_hat_plm(&s.w, &s.x, &s.y, d.m, self.alpha)?,
            naive_plugin_beta(&s.w, &s.x, &s.y, d.m)?,
        ])
    }

    fn warnings(&self) -> Vec<String> {
        self.designs[0].temperature_warning(self.alpha).into_iter().collect()
    }
}

struct Persistence {
    model: FiniteModel,
    prior: Vec<f64>,
    constant: Option<f64>,
    delta: f64,
    sizes: Vec<usize>,
}

impl Persistence {
    fn build(p: &Params<'_>) -> Result<Self> {
        let model = FiniteModel::new(p.list("grid")?, Observation::GaussianMean { sigma: p.num("sigma")? })
            .map_err(as_config)?;
        let k = model.grid().len();
        let prior = match p.value("prior") {
            ParamValue::Text(t) if t == "uniform" => vec![1.0 / k as f64; k],
            ParamValue::Text(t) => return Err(LabError::Config(format!("unknown prior '{t}'"))),
            ParamValue::Number(x) => vec![x],
            ParamValue::List(v) => v,
        };
        let total: f64 = prior.iter().sum();
        if prior.len() != k || prior.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(LabError::Config("prior must list one nonnegative weight per grid point".into()));
        }
        let prior = prior.iter().map(|w| w / total).collect();
        let constant = match p.text("estimator").as_str() {
            "mle" => None,
            "constant" => Some(p.num("constant")?),
            other => return Err(LabError::Config(format!("unknown estimator '{other}'"))),
        };
        let delta = match p.num("delta")? {
            d if d < 0.0 => model.default_delta(),
            d => d,
        };
        Ok(Self {
            model,
            prior,
            constant,
            delta,
            sizes: p.cfg.size_grid.clone(),
        })
    }
}

impl Replicator for Persistence {
    fn estimators(&self) -> Vec<String> {
        names(&["exceed_truth_estimate", "exceed_draw_estimate", "exceed_truth_draw"])
    }

    fn truth(&self, _: usize) -> Vec<Option<f64>> {
        vec![None; 3]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let est = |x: f64, n: usize| self.constant.unwrap_or_else(|| self.model.mle(x, n));
        let (hits, _) = persistence_replicate(&self.model, &self.prior, &est, self.sizes[gi], self.delta, stream);
        Ok(hits.iter().map(|&h| f64::from(u8::from(h))).collect())
    }
}

struct BayesBias {
    models: Vec<JointModel>,
}

impl BayesBias {
    fn build(p: &Params<'_>) -> Result<Self> {
        let kind = p.text("model");
        let mut models = Vec::new();
        for &n in &p.cfg.size_grid {
            let m = match kind.as_str() {
                "beta_binomial" => JointModel::BetaBinomial {
                    a: p.num("a")?,
                    b: p.num("b")?,
                    trials: u32::try_from(n).map_err(|_| LabError::Config(format!("trials {n} too large")))?,
                },
                "normal_normal" => JointModel::NormalNormal {
                    m0: p.num("m0")?,
                    v0: p.num("v0")?,
                    sigma2: p.num("sigma2")? / n as f64,
                },
                other => return Err(LabError::Config(format!("unknown model '{other}'"))),
            };
            m.validate().map_err(as_config)?;
            models.push(m);
        }
        Ok(Self { models })
    }
}

impl Replicator for BayesBias {
    fn estimators(&self) -> Vec<String> {
        names(&["theta", "posterior_mean"])
    }

    fn truth(&self, _: usize) -> Vec<Option<f64>> {
        vec![None; 2]
    }

    fn replicate(&self, gi: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
        let (t, e) = self.models[gi].draw(stream)?;
        Ok(vec![t, e])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_default_builds() {
        for d in registered() {
            let cfg = ExperimentConfig::new(d.id, 1, 1, vec![d.default_sizes[0]]);
            assert!(build_replicator(&cfg).is_ok(), "{}", d.id);
            assert!(describe(d.id).unwrap().contains(d.id));
        }
    }

    #[test]
    fn unknown_parameter_is_a_config_error() {
        let cfg = ExperimentConfig::new("ex7_partial_linear", 1, 1, vec![100]).with_param("bogus", ParamValue::Number(1.0));
        assert!(matches!(build_replicator(&cfg), Err(LabError::Config(_))));
        assert!(matches!(lookup("nope"), Err(LabError::Config(_))));
    }
}
