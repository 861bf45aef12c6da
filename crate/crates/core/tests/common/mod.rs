//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use priorlab::density_functional::{
    theta_hat_freq, AdversarialDensity, AdversarialFamily, BiasCorrection, HistogramPair,
};
use statrs::function::erf::erfc;

pub fn phi_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn phi_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Golden-section minimizer of `(w − b)² + λ|b|` on a bracket. Points
/// are compared through `f(c) − f(d)` written without cancellation, since
/// f is too flat near its minimum for direct comparison at 1e-8.
pub fn golden_argmin(w: f64, lambda: f64) -> f64 {
    let below = |c: f64, d: f64| (c - d) * (c + d - 2.0 * w) + lambda * (c.abs() - d.abs()) < 0.0;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-w.abs() - 1.0, w.abs() + 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-12 {
        if below(c, d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Posterior spike probability from the simplified odds
/// `(1−γ)/γ · √(1+nτ²) · exp(−(n w²/2)·nτ²/(1+nτ²))`.
pub fn spike_mass_oracle(w: f64, n: f64, gamma: f64, tau2: f64) -> f64 {
    let r = n * tau2;
    let log_odds = ((1.0 - gamma) / gamma).ln() + 0.5 * (1.0 + r).ln() - 0.5 * n * w * w * r / (1.0 + r);
    1.0 / (1.0 + (-log_odds).exp())
}

/// Composite Simpson, written out here so the tests do not lean on the
/// library's quadrature.
pub fn integrate(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = panels * 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∫ g` over [0, 1] split at the K bin edges, where g is smooth inside bins.
pub fn integrate_binned(k: usize, g: impl Fn(f64) -> f64) -> f64 {
    (0..k)
        .map(|b| integrate(b as f64 / k as f64, (b + 1) as f64 / k as f64, 2000, &g))
        .sum()
}

pub fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn multinomial_pmf(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut logc = (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    for (&c, &p) in counts.iter().zip(probs) {
        logc -= (1..=c).map(|i| (i as f64).ln()).sum::<f64>();
        if c > 0 {
            logc += c as f64 * p.ln();
        }
    }
    logc.exp()
}

/// Posterior mean of θ by brute force over the balanced sign vectors,
/// with plain likelihood products and θ(ξ) from quadrature of f_ξ².
pub fn enumeration_oracle(counts: &[u64], fam: &Arc<AdversarialFamily>) -> f64 {
    let k = fam.k;
    let (mut num, mut den) = (0.0, 0.0);
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize * 2 != k {
            continue;
        }
        let xi: Vec<i8> = (0..k).map(|b| if mask >> b & 1 == 1 { 1 } else { -1 }).collect();
        let d = AdversarialDensity::new(fam.clone(), xi).unwrap();
        let masses = d.bin_masses();
        let lik: f64 = counts.iter().zip(&masses).map(|(&c, p)| p.powi(c as i32)).product();
        let theta = integrate_binned(k, |x| d.pdf(x).powi(2));
        num += lik * theta;
        den += lik;
    }
    num / den
}

/// `P(β ≠ β^π)` for the uniform two-point prior with `X ~ N(β, 1/n)`:
/// `∫ φ0 φ1 / (φ0 + φ1)` by the trapezoid rule on a fine grid.
pub fn two_point_disagreement(n: usize) -> f64 {
    let s = 1.0 / (n as f64).sqrt();
    let dens = |x: f64, m: f64| (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let (lo, hi, k) = (0.5 - 40.0 * s, 0.5 + 40.0 * s, 200_000);
    let h = (hi - lo) / k as f64;
    (0..=k)
        .map(|i| {
            let x = lo + i as f64 * h;
            let (a, b) = (dens(x, 0.0), dens(x, 1.0));
            let f = if a + b > 0.0 { a * b / (a + b) } else { 0.0 };
            if i == 0 || i == k { 0.5 * f } else { f }
        })
        .sum::<f64>()
        * h
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..k {
            let f = a[r][c] / a[c][c];
            for j in c..k {
                a[r][j] -= f * a[c][j];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|j| a[c][j] * x[j]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x
}

/// Straight-line reimplementation: every subset by nested loops, plain
/// normal equations, max-shifted softmax.
pub fn oracle_residuals(w: &[Vec<f64>], v: &[f64], m: usize, alpha: f64) -> Vec<f64> {
    let (n, p) = (w.len(), w[0].len());
    let mut subsets = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, p: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur.push(j);
            rec(j + 1, p, m, cur, out);
            cur.pop();
        }
    }
    rec(0, p, m, &mut cur, &mut subsets);
    let mut resid = Vec::new();
    let mut rss = Vec::new();
    for s in &subsets {
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for i in 0..n {
            for (x, &j) in s.iter().enumerate() {
                b[x] += w[i][j] * v[i];
                for (y, &l) in s.iter().enumerate() {
                    a[x][y] += w[i][j] * w[i][l];
                }
            }
        }
        let c = solve(a, b);
        let r: Vec<f64> = (0..n)
            .map(|i| v[i] - s.iter().zip(&c).map(|(&j, cj)| cj * w[i][j]).sum::<f64>())
            .collect();
        rss.push(r.iter().map(|x| x * x).sum::<f64>());
        resid.push(r);
    }
    let best = rss.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = rss.iter().map(|r| (-(r - best) / alpha).exp()).collect();
    let total: f64 = raw.iter().sum();
    (0..n)
        .map(|i| raw.iter().zip(&resid).map(|(wt, r)| wt / total * r[i]).sum())
        .collect()
}

pub fn rows(w: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..w.nrows()).map(|i| w.row(i).iter().cloned().collect()).collect()
}

/// `c` making the uncorrected estimator's exact expectation 1 at uniform
/// f, by summing over every pair of multinomial count vectors.
pub fn calibration_oracle(m: usize, n_half: usize) -> f64 {
    let probs = vec![1.0 / m as f64; m];
    let comps = compositions(n_half as u64, m);
    let mut expected = 0.0;
    for c1 in &comps {
        let p1 = multinomial_pmf(c1, &probs);
        for c2 in &comps {
            let p2 = multinomial_pmf(c2, &probs);
            let h = HistogramPair {
                counts1: c1.clone(),
                counts2: c2.clone(),
                n_half,
                m,
                degenerate: false,
            };
            expected += p1 * p2 * theta_hat_freq(&h, BiasCorrection::Fixed(0.0));
        }
    }
    (1.0 - expected) * (2 * n_half) as f64 / m as f64
}

