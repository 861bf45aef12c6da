//! Paired-hospital model with hospital-level nuisance parameters.
//!
//! Hospital i has effects `(g_i, h_i)` and two patients:
//!
//! ```text
//! X = g + η,    Y = h + θX + ε
//! X̃ = g + η̃,   Ỹ = h + θX̃ + ε̃
//! ```
//!
//! The second patient is observed only when `w_i = 1`. Differencing the
//! two patients removes `(g, h)`. The competitor fits a jointly Gaussian
//! model for all four observables by maximum likelihood and, when asked,
//! uses the first patient of incomplete hospitals too; that is only valid
//! when `w` is independent of `(g, h)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, LabError, Result};
use crate::numeric::{sigmoid, GaussLegendre, LN_2PI};
use crate::optimize::{minimize_bfgs, BfgsOptions};
use crate::stochastics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HospitalRecord {
    pub x: f64,
    pub y: f64,
    /// `(X̃, Ỹ)`, present exactly when the second patient is observed.
    pub second: Option<(f64, f64)>,
}

impl HospitalRecord {
    pub fn w(&self) -> u8 {
        u8::from(self.second.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedModelTruth {
    pub theta: f64,
    pub mu_g: f64,
    pub mu_h: f64,
    /// Covariance of `(g, h)`.
    pub sigma_gh: [[f64; 2]; 2],
    /// Covariance of `(η, ε)`.
    pub sigma_noise: [[f64; 2]; 2],
    /// Slope of the observation log-odds in `g + h`.
    pub kappa_w: f64,
    /// Target mean observation rate; 1 or more observes everything.
    pub target_rate: f64,
}

fn chol2(m: &[[f64; 2]; 2], name: &str) -> Result<[f64; 3]> {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    if (m[1][0] - b).abs() > 1e-12 * (1.0 + b.abs()) {
        return invalid(format!("{name} is not symmetric"));
    }
    if !(a >= 0.0 && c >= 0.0 && a * c - b * b >= -1e-12 * (1.0 + a * c)) {
        return invalid(format!("{name} is not positive semi-definite"));
    }
    let l11 = a.sqrt();
    let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
    let l22 = (c - l21 * l21).max(0.0).sqrt();
    Ok([l11, l21, l22])
}

impl MixedModelTruth {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta", self.theta),
            ("mu_g", self.mu_g),
            ("mu_h", self.mu_h),
            ("kappa_w", self.kappa_w),
        ] {
            if !v.is_finite() {
                return invalid(format!("{name} must be finite"));
            }
        }
        if !(self.target_rate > 0.0) {
            return invalid(format!("target rate must be positive, got {}", self.target_rate));
        }
        chol2(&self.sigma_gh, "sigma_gh")?;
        chol2(&self.sigma_noise, "sigma_noise")?;
        Ok(())
    }

    /// Observation intercept `a` with `E sigmoid(a + κ(g+h))` equal to the
    /// target rate; `+∞` when everything is observed.
    pub fn observation_intercept(&self) -> Result<f64> {
        self.validate()?;
        let rate = self.target_rate;
        if rate >= 1.0 {
            return Ok(f64::INFINITY);
        }
        let logit = (rate / (1.0 - rate)).ln();
        let s = &self.sigma_gh;
        let v = s[0][0] + s[0][1] + s[1][0] + s[1][1];
        if self.kappa_w == 0.0 || v <= 0.0 {
            return Ok(logit - self.kappa_w * (self.mu_g + self.mu_h));
        }
        let sd = v.sqrt();
        let mean = self.mu_g + self.mu_h;
        let gl = GaussLegendre::new(32);
        let kappa = self.kappa_w;
        let rate_at = |a: f64| {
            gl.integrate_composite(-12.0, 12.0, 16, |z| {
                crate::numeric::normal_pdf(z) * sigmoid(a + kappa * (mean + sd * z))
            })
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while rate_at(lo) > rate {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(LabError::Numerical("could not bracket observation intercept".into()));
            }
        }
        while rate_at(hi) < rate {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(LabError::Numerical("could not bracket observation intercept".into()));
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if rate_at(mid) < rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn generate_hospitals(truth: &MixedModelTruth, n: usize, stream: &mut RngStream) -> Result<Vec<HospitalRecord>> {
    truth.validate()?;
    let a = truth.observation_intercept()?;
    let lg = chol2(&truth.sigma_gh, "sigma_gh")?;
    let ln = chol2(&truth.sigma_noise, "sigma_noise")?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (z1, z2) = (stream.standard_normal(), stream.standard_normal());
        let g = truth.mu_g + lg[0] * z1;
        let h = truth.mu_h + lg[1] * z1 + lg[2] * z2;
        let patient = |s: &mut RngStream| {
            let (u1, u2) = (s.standard_normal(), s.standard_normal());
            let eta = ln[0] * u1;
            let eps = ln[1] * u1 + ln[2] * u2;
            let x = g + eta;
            (x, h + truth.theta * x + eps)
        };
        let (x, y) = patient(stream);
        let second = patient(stream);
        let u = stream.uniform();
        let observed = a == f64::INFINITY || u < sigmoid(a + truth.kappa_w * (g + h));
        out.push(HospitalRecord {
            x,
            y,
            second: observed.then_some(second),
        });
    }
    Ok(out)
}

/// `Σ dx·dy / Σ dx²` over hospitals with both patients observed.
pub fn differencing_estimator(records: &[HospitalRecord]) -> Result<f64> {
    let (mut sxy, mut sxx, mut pairs) = (0.0, 0.0, 0usize);
    for r in records {
        if let Some((x2, y2)) = r.second {
            let dx = x2 - r.x;
            let dy = y2 - r.y;
            sxy += dx * dy;
            sxx += dx * dx;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(LabError::NoData("no hospital has both patients observed".into()));
    }
    if pairs < 2 {
        return invalid("differencing needs at least two complete pairs");
    }
    if !(sxx > 0.0) {
        return Err(LabError::Degenerate("all patient differences in X are zero".into()));
    }
    Ok(sxy / sxx)
}

/// Natural parameters of the Gaussian working model. The noise
/// covariance `cov(η, ε)` is fixed at zero (see [`gaussian_joint_fit`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointParams {
    pub mu_g: f64,
    pub mu_h: f64,
    /// `(Σ11, Σ12, Σ22)` of `(g, h)`.
    pub sigma_gh: [f64; 3],
    pub var_eta: f64,
    pub var_eps: f64,
    pub theta: f64,
}

impl JointParams {
    pub fn from_truth(t: &MixedModelTruth) -> Result<Self> {
        if t.sigma_noise[0][1] != 0.0 {
            return invalid("the working model assumes cov(eta, eps) = 0");
        }
        Ok(Self {
            mu_g: t.mu_g,
            mu_h: t.mu_h,
            sigma_gh: [t.sigma_gh[0][0], t.sigma_gh[0][1], t.sigma_gh[1][1]],
            var_eta: t.sigma_noise[0][0],
            var_eps: t.sigma_noise[1][1],
            theta: t.theta,
        })
    }

    /// `[μ_g, μ_h, ln l11, l21, ln l22, ln σ_η, ln σ_ε, θ]` with `l` the
    /// Cholesky factor of `Σ_gh`.
    pub fn to_unconstrained(&self) -> Result<Vec<f64>> {
        let [a, b, c] = self.sigma_gh;
        let l = chol2(&[[a, b], [b, c]], "sigma_gh")?;
        if !(l[0] > 0.0 && l[2] > 0.0 && self.var_eta > 0.0 && self.var_eps > 0.0) {
            return invalid("working-model covariances must be positive definite");
        }
        Ok(vec![
            self.mu_g,
            self.mu_h,
            l[0].ln(),
            l[1],
            l[2].ln(),
            0.5 * self.var_eta.ln(),
            0.5 * self.var_eps.ln(),
            self.theta,
        ])
    }

    pub fn from_unconstrained(q: &[f64]) -> Self {
        let (l11, l21, l22) = (q[2].exp(), q[3], q[4].exp());
        Self {
            mu_g: q[0],
            mu_h: q[1],
            sigma_gh: [l11 * l11, l11 * l21, l21 * l21 + l22 * l22],
            var_eta: (2.0 * q[5]).exp(),
            var_eps: (2.0 * q[6]).exp(),
            theta: q[7],
        }
    }

    /// `[μ_g, μ_h, Σgh11, Σgh12, Σgh22, var η, cov(η,ε), var ε, θ]`.
    pub fn nine(&self) -> [f64; 9] {
        [
            self.mu_g,
            self.mu_h,
            self.sigma_gh[0],
            self.sigma_gh[1],
            self.sigma_gh[2],
            self.var_eta,
            0.0,
            self.var_eps,
            self.theta,
        ]
    }
}

pub const N_UNCONSTRAINED: usize = 8;

/// Sufficient statistics of one observation pattern.
#[derive(Debug, Clone)]
struct Group {
    count: f64,
    mean: DVector<f64>,
    /// Centered scatter divided by `count`.
    scatter: DMatrix<f64>,
}

impl Group {
    fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let d = rows[0].len();
        let count = rows.len() as f64;
        let mut mean = DVector::zeros(d);
        for r in rows {
            mean += DVector::from_column_slice(r);
        }
        mean /= count;
        let mut scatter = DMatrix::zeros(d, d);
        for r in rows {
            let c = DVector::from_column_slice(r) - &mean;
            scatter += &c * c.transpose();
        }
        scatter /= count;
        Some(Self {
            count,
            mean,
            scatter,
        })
    }
}

/// Sufficient statistics of a record set for the working model.
#[derive(Debug, Clone)]
pub struct JointData {
    complete: Option<Group>,
    incomplete: Option<Group>,
    total: f64,
}

pub const MIN_JOINT_RECORDS: usize = 50;

impl JointData {
    pub fn new(records: &[HospitalRecord], use_incomplete: bool) -> Result<Self> {
        let mut full = Vec::new();
        let mut half = Vec::new();
        for r in records {
            match r.second {
                Some((x2, y2)) => full.push(vec![r.x, r.y, x2, y2]),
                None if use_incomplete => half.push(vec![r.x, r.y]),
                None => {}
            }
        }
        let used = full.len() + half.len();
        if used < MIN_JOINT_RECORDS {
            return invalid(format!(
                "joint fit needs at least {MIN_JOINT_RECORDS} usable records, got {used}"
            ));
        }
        if full.len() < 2 {
            return Err(LabError::Degenerate("joint fit needs complete pairs to identify theta".into()));
        }
        Ok(Self {
            complete: Group::from_rows(&full),
            incomplete: Group::from_rows(&half),
            total: used as f64,
        })
    }
}

/// Mean, covariance and their derivatives for one observation pattern.
struct Moments {
    m: DVector<f64>,
    s: DMatrix<f64>,
    dm: Vec<DVector<f64>>,
    ds: Vec<DMatrix<f64>>,
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// Blocks `D = T(G+N)Tᵀ`, `C = T G Tᵀ` and the two-vector mean, with
/// derivatives with respect to each unconstrained coordinate.
fn blocks(q: &[f64]) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>, Vec<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>) {
    let (mu_g, mu_h, l11, l21, l22, se, sn, th) =
        (q[0], q[1], q[2].exp(), q[3], q[4].exp(), q[5].exp(), q[6].exp(), q[7]);
    let l = m2(l11, 0.0, l21, l22);
    let g = &l * l.transpose();
    let nn = m2(se * se, 0.0, 0.0, sn * sn);
    let t = m2(1.0, 0.0, th, 1.0);
    let tt = t.transpose();
    let d = &t * (&g + &nn) * &tt;
    let c = &t * &g * &tt;
    let mean = DVector::from_vec(vec![mu_g, mu_h + th * mu_g]);

    let zero2 = DMatrix::<f64>::zeros(2, 2);
    let zv = DVector::<f64>::zeros(2);
    let dg = |dl: DMatrix<f64>| &dl * l.transpose() + &l * dl.transpose();
    let mut out = Vec::with_capacity(N_UNCONSTRAINED);
    out.push((DVector::from_vec(vec![1.0, th]), zero2.clone(), zero2.clone()));
    out.push((DVector::from_vec(vec![0.0, 1.0]), zero2.clone(), zero2.clone()));
    for dl in [m2(l11, 0.0, 0.0, 0.0), m2(0.0, 0.0, 1.0, 0.0), m2(0.0, 0.0, 0.0, l22)] {
        let dgm = dg(dl);
        let dc = &t * &dgm * &tt;
        out.push((zv.clone(), dc.clone(), dc));
    }
    out.push((zv.clone(), &t * m2(2.0 * se * se, 0.0, 0.0, 0.0) * &tt, zero2.clone()));
    out.push((zv.clone(), &t * m2(0.0, 0.0, 0.0, 2.0 * sn * sn) * &tt, zero2.clone()));
    let dt = m2(0.0, 0.0, 1.0, 0.0);
    let gn = &g + &nn;
    let dd = &dt * &gn * &tt + &t * &gn * dt.transpose();
    let dc = &dt * &g * &tt + &t * &g * dt.transpose();
    out.push((DVector::from_vec(vec![0.0, mu_g]), dd, dc));
    (mean, d, c, out)
}

fn stack_mean(m: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![m[0], m[1], m[0], m[1]])
}

fn stack_cov(d: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(4, 4);
    s.view_mut((0, 0), (2, 2)).copy_from(d);
    s.view_mut((2, 2), (2, 2)).copy_from(d);
    s.view_mut((0, 2), (2, 2)).copy_from(c);
    s.view_mut((2, 0), (2, 2)).copy_from(c);
    s
}

fn moments(q: &[f64], complete: bool) -> Moments {
    let (mean, d, c, parts) = blocks(q);
    if complete {
        Moments {
            m: stack_mean(&mean),
            s: stack_cov(&d, &c),
            dm: parts.iter().map(|p| stack_mean(&p.0)).collect(),
            ds: parts.iter().map(|p| stack_cov(&p.1, &p.2)).collect(),
        }
    } else {
        Moments {
            m: mean,
            s: d,
            dm: parts.iter().map(|p| p.0.clone()).collect(),
            ds: parts.into_iter().map(|p| p.1).collect(),
        }
    }
}

pub const EIGEN_FLOOR: f64 = 1e-10;

/// Inverse and log-determinant, clipping eigenvalues at [`EIGEN_FLOOR`]
/// when the matrix is not numerically positive definite.
fn inverse_logdet(s: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    if let Some(ch) = s.clone().cholesky() {
        let logdet = 2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        return (ch.inverse(), logdet);
    }
    let eig = SymmetricEigen::new(s.clone());
    let vals = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();
    (inv, vals.iter().map(|v| v.ln()).sum())
}

/// Mean log-likelihood per used record and its gradient in the
/// unconstrained coordinates.
pub fn joint_loglik_grad(data: &JointData, q: &[f64]) -> (f64, Vec<f64>) {
    let mut ll = 0.0;
    let mut grad = vec![0.0; N_UNCONSTRAINED];
    for (group, complete) in [(&data.complete, true), (&data.incomplete, false)] {
        let Some(gr) = group else { continue };
        let mo = moments(q, complete);
        let dim = mo.m.len() as f64;
        let (inv, logdet) = inverse_logdet(&mo.s);
        let r = &gr.mean - &mo.m;
        let a = &gr.scatter + &r * r.transpose();
        ll += -0.5 * gr.count * (dim * LN_2PI + logdet + (&inv * &a).trace());
        let inner = &inv * &a * &inv - &inv;
        let ir = &inv * &r;
        for j in 0..N_UNCONSTRAINED {
            let ds_term = 0.5 * gr.count * inner.component_mul(&mo.ds[j]).sum();
            let dm_term = gr.count * ir.dot(&mo.dm[j]);
            grad[j] += ds_term + dm_term;
        }
    }
    let scale = 1.0 / data.total;
    (ll * scale, grad.into_iter().map(|g| g * scale).collect())
}

pub fn joint_loglik(data: &JointData, q: &[f64]) -> f64 {
    joint_loglik_grad(data, q).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub theta_hat: f64,
    pub params: JointParams,
    pub nine: [f64; 9],
    pub unconstrained: Vec<f64>,
    pub loglik: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn moment_start(records: &[HospitalRecord], use_incomplete: bool) -> Result<Vec<f64>> {
    let theta0 = differencing_estimator(records)?;
    let used: Vec<&HospitalRecord> = records
        .iter()
        .filter(|r| use_incomplete || r.second.is_some())
        .collect();
    let nu = used.len() as f64;
    let mx = used.iter().map(|r| r.x).sum::<f64>() / nu;
    let mr = used.iter().map(|r| r.y - theta0 * r.x).sum::<f64>() / nu;
    let mut tot = [0.0; 3];
    for r in &used {
        let (a, b) = (r.x - mx, r.y - theta0 * r.x - mr);
        tot[0] += a * a / nu;
        tot[1] += a * b / nu;
        tot[2] += b * b / nu;
    }
    let mut cross = [0.0; 3];
    let mut pairs = 0.0;
    for r in records {
        if let Some((x2, y2)) = r.second {
            let (a1, b1) = (r.x - mx, r.y - theta0 * r.x - mr);
            let (a2, b2) = (x2 - mx, y2 - theta0 * x2 - mr);
            cross[0] += a1 * a2;
            cross[1] += 0.5 * (a1 * b2 + a2 * b1);
            cross[2] += b1 * b2;
            pairs += 1.0;
        }
    }
    for c in &mut cross {
        *c /= pairs;
    }
    let floor = 0.05 * (tot[0] + tot[2]).max(1e-6);
    let eig = SymmetricEigen::new(m2(cross[0], cross[1], cross[1], cross[2]));
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    let g = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    let var_eta = (tot[0] - g[(0, 0)]).max(0.05 * tot[0]).max(1e-6);
    let var_eps = (tot[2] - g[(1, 1)]).max(0.05 * tot[2]).max(1e-6);
    JointParams {
        mu_g: mx,
        mu_h: mr,
        sigma_gh: [g[(0, 0)], g[(0, 1)], g[(1, 1)]],
        var_eta,
        var_eps,
        theta: theta0,
    }
    .to_unconstrained()
}

pub const FIT_GRAD_TOL: f64 = 1e-5;

/// Maximum-likelihood fit of the jointly Gaussian working model.
///
/// With an unrestricted noise covariance the model has nine parameters
/// but the observed moments identify only eight of them, and θ trades off
/// against `cov(η, ε)`. The fit therefore holds `cov(η, ε) = 0`; the
/// reported nine-vector carries that zero in its seventh slot.
pub fn gaussian_joint_fit(records: &[HospitalRecord], use_incomplete: bool) -> Result<JointFit> {
    let data = JointData::new(records, use_incomplete)?;
    let q0 = moment_start(records, use_incomplete)?;
    let res = minimize_bfgs(
        |q| {
            let (ll, g) = joint_loglik_grad(&data, q);
            (-ll, g.into_iter().map(|v| -v).collect())
        },
        &q0,
        BfgsOptions {
            max_iter: 2000,
            grad_tol: FIT_GRAD_TOL,
        },
    );
    if !res.converged {
        return Err(LabError::NonConvergence(format!(
            "joint fit stopped after {} iterations with gradient norm {:.3e} (theta = {:.6})",
            res.iterations,
            res.grad_norm(),
            res.x[7]
        )));
    }
    let params = JointParams::from_unconstrained(&res.x);
    Ok(JointFit {
        theta_hat: params.theta,
        nine: params.nine(),
        params,
        loglik: -res.f,
        grad_norm: res.grad_norm(),
        iterations: res.iterations,
        unconstrained: res.x,
    })
}
