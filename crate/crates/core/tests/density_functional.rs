use std::f64::consts::PI;
use std::sync::Arc;

use priorlab::density_functional::*;
use priorlab::stochastics::draw_multinomial;
use priorlab::{DiscreteDensity, RngStream};
use proptest::prelude::*;

mod common;
use common::*;

fn family(k: usize, sine: f64, amp: f64) -> Arc<AdversarialFamily> {
    let f0 = if sine == 0.0 {
        HolderDensity::uniform(0.4).unwrap()
    } else {
        HolderDensity::sine(sine, 0.4).unwrap()
    };
    Arc::new(AdversarialFamily::new(f0, k, amp).unwrap())
}

#[test]
fn sine_density_moments() {
    let f = HolderDensity::sine(0.5, 0.4).unwrap();
    assert!((f.theta() - 1.125).abs() < 1e-10);
    let cube = integrate(0.0, 1.0, 5000, |x| (1.0 + 0.5 * (2.0 * PI * x).sin()).powi(3));
    assert!((f.variance_of_f() - (cube - 1.125f64.powi(2))).abs() < 1e-10);
    assert!((f.variance_of_f() - 0.109375).abs() < 1e-10);
}

#[test]
fn holder_density_validation() {
    assert!(HolderDensity::uniform(0.2).is_err());
    assert!(HolderDensity::uniform(0.5).is_err());
    assert!(HolderDensity::new(Arc::new(|x| if x < 0.5 { 2.0 } else { 0.0 }), 0.4, "zero on a half").is_err());
    assert!(HolderDensity::new(Arc::new(|_| 1.1), 0.4, "mass 1.1").is_err());
}

#[test]
fn bump_constant() {
    assert!((bump_square_constant() - PI * PI / 8.0).abs() < 1e-12);
    let oracle = integrate(-1.0, 0.0, 1000, |s| (0.5 * PI * (PI * s).sin()).powi(2));
    assert!((bump_square_constant() - oracle).abs() < 1e-12);
}

#[test]
fn adversarial_density_integrates_to_one() {
    for (k, sine, amp) in [(2, 0.0, 0.5), (4, 0.5, 0.3), (20, 0.5, 1.0), (136, 0.5, 1.0)] {
        let fam = family(k, sine, amp);
        let mut s = RngStream::new(k as u64, 0);
        let d = AdversarialDensity::random(fam, &mut s).unwrap();
        let total = integrate_binned(k, |x| d.pdf(x));
        assert!((total - 1.0).abs() < 1e-8, "K={k}: {total}");
        let masses: f64 = d.bin_masses().iter().sum();
        assert!((masses - 1.0).abs() < 1e-12);
    }
}

#[test]
fn adversarial_theta_matches_quadrature() {
    for (k, sine, amp) in [(2, 0.0, 0.5), (4, 0.5, 0.3), (12, 0.5, 0.5)] {
        let fam = family(k, sine, amp);
        let d = AdversarialDensity::aligned(fam).unwrap();
        let q = integrate_binned(k, |x| d.pdf(x).powi(2));
        assert!((d.theta() - q).abs() < 1e-10, "K={k}: {} vs {q}", d.theta());
    }
}

#[test]
fn family_rejects_negative_members() {
    let f0 = HolderDensity::sine(0.5, 0.4).unwrap();
    assert!(AdversarialFamily::new(f0.clone(), 2, 1.0).is_err());
    assert!(AdversarialFamily::new(f0.clone(), 3, 0.1).is_err());
    assert!(AdversarialFamily::new(f0, 136, 1.0).is_ok());
}

#[test]
fn sampling_examples() {
    let u = HolderDensity::uniform(0.4).unwrap();
    let mut s = RngStream::new(1, 0);
    assert!(sample_density(&mut s, SamplingTarget::Holder(&u), 0).is_empty());

    let fam = family(2, 0.0, 0.5);
    let d = AdversarialDensity::new(fam, vec![1, -1]).unwrap();
    let pts = sample_density(&mut s, SamplingTarget::Adversarial(&d), 1_000_000);
    let left = pts.iter().filter(|&&x| x <= 0.5).count() as f64 / 1e6;
    let exact = integrate(0.0, 0.5, 2000, |x| d.pdf(x));
    assert!((left - exact).abs() < 0.003, "{left} vs {exact}");

    let mut xs = sample_density(&mut s, SamplingTarget::Holder(&u), 100_000);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / n.sqrt(), "KS {ks}");
}

#[test]
fn sine_sampler_matches_its_cdf() {
    let f = HolderDensity::sine(0.5, 0.4).unwrap();
    let cdf = |x: f64| x + 0.5 * (1.0 - (2.0 * PI * x).cos()) / (2.0 * PI);
    let mut xs = sample_density(&mut RngStream::new(2, 0), SamplingTarget::Holder(&f), 100_000);
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (cdf(x) - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf(x)).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / n.sqrt(), "KS {ks}");
}

#[test]
fn histogram_split_examples() {
    let mut s = RngStream::new(3, 0);
    let h = histogram_split(&[0.01; 10], 4, &mut s).unwrap();
    assert_eq!(h.counts1, vec![5, 0, 0, 0]);
    assert_eq!(h.counts2, vec![5, 0, 0, 0]);
    let h = histogram_split(&[0.3, 0.9], 1, &mut s).unwrap();
    assert_eq!((h.counts1.clone(), h.counts2.clone()), (vec![1], vec![1]));
    assert!(histogram_split(&[0.3, 0.9, 0.1], 1, &mut s).is_err());
    assert!(histogram_split(&[0.3, 0.9], 5, &mut s).unwrap().degenerate);

    let u = HolderDensity::uniform(0.4).unwrap();
    let pts = sample_density(&mut s, SamplingTarget::Holder(&u), 100_000);
    let h = histogram_split(&pts, 100, &mut s).unwrap();
    assert_eq!(h.counts1.iter().sum::<u64>(), 50_000);
    assert_eq!(h.counts2.iter().sum::<u64>(), 50_000);
    // ±70 is a per-count 3σ band; across 200 counts a few may leave it.
    let outside = h.counts1.iter().chain(&h.counts2).filter(|&&c| (c as i64 - 500).abs() > 70).count();
    assert!(outside <= 4, "{outside} counts outside 500 ± 70");
    assert!(h.counts1.iter().chain(&h.counts2).all(|&c| (c as i64 - 500).abs() <= 112));
}

#[test]
fn plug_in_without_noise_is_the_binned_functional() {
    // Exact counts proportional to bin masses of a step density.
    let masses = [0.1, 0.2, 0.3, 0.4];
    let n_half = 1000;
    let counts: Vec<u64> = masses.iter().map(|m| (m * n_half as f64) as u64).collect();
    let h = HistogramPair {
        counts1: counts.clone(),
        counts2: counts,
        n_half,
        m: 4,
        degenerate: false,
    };
    let binned: f64 = masses.iter().map(|m| (4.0 * m).powi(2)).sum::<f64>() / 4.0;
    assert!((theta_hat_freq(&h, BiasCorrection::Fixed(0.0)) - binned).abs() < 1e-12);
}

#[test]
fn calibration_matches_multinomial_enumeration() {
    for (m, n_half) in [(2usize, 3usize), (3, 4), (4, 5), (5, 3)] {
        let c = calibration_oracle(m, n_half);
        assert!((calibrated_correction(m, n_half) - c).abs() < 1e-12, "M={m}: {c}");
    }
}

#[test]
fn bayes_plugin_matches_enumeration_small_k() {
    let mut s = RngStream::new(4, 0);
    for (k, sine, amp) in [(2usize, 0.0, 0.5), (2, 0.5, 0.3), (4, 0.0, 1.0), (4, 0.5, 0.3)] {
        let fam = family(k, sine, amp);
        for n in [1u64, 7, 20, 50] {
            let truth = AdversarialDensity::random(fam.clone(), &mut s).unwrap();
            let d = DiscreteDensity::new(truth.bin_masses()).unwrap();
            let counts = draw_multinomial(&mut s, n, &d).unwrap();
            let got = theta_bayes_plugin(&counts, &fam).unwrap();
            let want = enumeration_oracle(&counts, &fam);
            assert!((got - want).abs() < 1e-10, "K={k} n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn symmetric_counts_return_the_prior_mean() {
    let fam = family(4, 0.0, 1.0);
    let got = theta_bayes_plugin(&[10, 10, 10, 10], &fam).unwrap();
    assert!((got - fam.theta_constant()).abs() < 1e-12);
}

#[test]
fn bin_posterior_is_a_two_point_posterior() {
    let fam = family(20, 0.5, 1.0);
    let counts: Vec<u64> = (0..20).map(|b| 40 + 3 * b as u64).collect();
    let n: u64 = counts.iter().sum();
    let post = bin_sign_posteriors(&counts, &fam).unwrap();
    for (b, &c) in counts.iter().enumerate() {
        let (qp, qm) = (fam.bin_mass(b, 1), fam.bin_mass(b, -1));
        let llr = c as f64 * (qp / qm).ln() + (n - c) as f64 * ((1.0 - qp) / (1.0 - qm)).ln();
        assert_eq!(post[b], priorlab::foundations::two_point_posterior(llr / 2.0, 1.0, 1.0).unwrap());
    }
}

#[test]
fn bin_posteriors_concentrate_with_n() {
    let fam = family(20, 0.5, 1.0);
    let truth = AdversarialDensity::aligned(fam.clone()).unwrap();
    let d = DiscreteDensity::new(truth.bin_masses()).unwrap();
    let mut prev = 0.0;
    for n in [100u64, 1000, 10_000, 100_000] {
        let mut total = 0.0;
        for r in 0..20 {
            let counts = draw_multinomial(&mut RngStream::new(5, r).lane(n), n, &d).unwrap();
            let post = bin_sign_posteriors(&counts, &fam).unwrap();
            total += post.iter().map(|p| (p - 0.5).abs()).sum::<f64>() / 20.0;
        }
        assert!(total > prev, "n={n}: {total} <= {prev}");
        prev = total;
    }
}

#[test]
fn linearized_two_point_error_is_quadratic() {
    // Sweep: the worst error over |x| <= 3σ scaled by (μ/σ)².
    let mut c_sweep = 0.0f64;
    for sigma in [0.5, 1.0, 2.0] {
        for r in [1e-3, 1e-2, 5e-2, 0.1] {
            let mu = r * sigma;
            for j in -30..=30 {
                let x = j as f64 / 10.0 * sigma;
                let e = (two_point_posterior(x, mu, sigma).unwrap() - two_point_posterior_linearized(x, mu, sigma).unwrap()).abs();
                c_sweep = c_sweep.max(e / (r * r));
            }
        }
    }
    assert!(c_sweep < 1.0, "{c_sweep}");
    let e = (two_point_posterior(0.1, 0.01, 1.0).unwrap() - two_point_posterior_linearized(0.1, 0.01, 1.0).unwrap()).abs();
    assert!(e <= c_sweep * 1e-4);
    assert_eq!(two_point_posterior(0.0, 0.3, 1.0).unwrap(), 0.5);
    assert!(two_point_posterior(1e6, 1e3, 1e-3).unwrap().is_finite());
}

proptest! {
    #[test]
    fn freq_estimator_is_split_symmetric(c1 in prop::collection::vec(0u64..50, 6), perm in Just(()), seed in any::<u64>()) {
        let _ = perm;
        let n_half: u64 = c1.iter().sum();
        prop_assume!(n_half > 0);
        let mut s = RngStream::new(seed, 0);
        let d = DiscreteDensity::uniform(6).unwrap();
        let c2 = draw_multinomial(&mut s, n_half, &d).unwrap();
        let h = HistogramPair { counts1: c1, counts2: c2, n_half: n_half as usize, m: 6, degenerate: false };
        prop_assert_eq!(theta_hat_freq(&h, BiasCorrection::Calibrated), theta_hat_freq(&h.swapped(), BiasCorrection::Calibrated));
    }

    #[test]
    fn two_point_posteriors_are_complementary(x in -50.0f64..50.0, mu in -5.0f64..5.0, sigma in 0.01f64..10.0) {
        let a = two_point_posterior(x, mu, sigma).unwrap();
        let b = two_point_posterior(-x, mu, sigma).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }
}
