use priorlab::numeric::normal_cdf;
use priorlab::stochastics::{draw_bernoulli, draw_beta, draw_multinomial, draw_normal};
use priorlab::{DiscreteDensity, RngStream};
use proptest::prelude::*;
use rand::RngCore;

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn degenerate_normal_returns_mean() {
    let mut s = RngStream::new(1, 0);
    assert_eq!(draw_normal(&mut s, 0.0, 0.0).unwrap(), 0.0);
    assert_eq!(draw_normal(&mut s, -3.25, 0.0).unwrap(), -3.25);
    assert!(draw_normal(&mut s, f64::NAN, 1.0).is_err());
    assert!(draw_normal(&mut s, 0.0, f64::INFINITY).is_err());
    assert!(draw_normal(&mut s, 0.0, -1.0).is_err());
}

#[test]
fn normal_moments() {
    let mut s = RngStream::new(11, 0);
    let xs: Vec<f64> = (0..1_000_000).map(|_| draw_normal(&mut s, 2.0, 1.0).unwrap()).collect();
    assert!((moments(&xs).0 - 2.0).abs() < 0.01);
    let ys: Vec<f64> = (0..1_000_000).map(|_| draw_normal(&mut s, 0.0, 3.0).unwrap()).collect();
    assert!((moments(&ys).1 - 9.0).abs() < 0.15);
}

#[test]
fn normal_passes_kolmogorov_smirnov() {
    let mut s = RngStream::new(5, 2);
    let mut xs: Vec<f64> = (0..20_000).map(|_| s.standard_normal()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic.
    assert!(d < 1.628 / n.sqrt(), "D = {d}");
}

#[test]
fn bernoulli_edges_and_mean() {
    let mut s = RngStream::new(2, 0);
    for _ in 0..1000 {
        assert_eq!(draw_bernoulli(&mut s, 0.0).unwrap(), 0);
        assert_eq!(draw_bernoulli(&mut s, 1.0).unwrap(), 1);
    }
    let hits: u64 = (0..1_000_000).map(|_| u64::from(draw_bernoulli(&mut s, 0.3).unwrap())).sum();
    assert!((hits as f64 / 1e6 - 0.3).abs() < 0.002);
    assert!(draw_bernoulli(&mut s, 1.5).is_err());
    assert!(draw_bernoulli(&mut s, -0.1).is_err());
}

#[test]
fn multinomial_examples() {
    let mut s = RngStream::new(3, 0);
    let u = DiscreteDensity::uniform(10).unwrap();
    assert_eq!(draw_multinomial(&mut s, 0, &u).unwrap(), vec![0; 10]);
    let one = DiscreteDensity::new(vec![1.0]).unwrap();
    assert_eq!(draw_multinomial(&mut s, 17, &one).unwrap(), vec![17]);
    let c = draw_multinomial(&mut s, 100_000, &u).unwrap();
    assert_eq!(c.iter().sum::<u64>(), 100_000);
    assert!(c.iter().all(|&k| (k as i64 - 10_000).abs() <= 300), "{c:?}");
}

#[test]
fn multinomial_marginal_is_binomial() {
    let d = DiscreteDensity::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let reps = 20_000;
    let mut s = RngStream::new(4, 0);
    let mut sums = [0.0f64; 4];
    let mut sq = [0.0f64; 4];
    for _ in 0..reps {
        let c = draw_multinomial(&mut s, 50, &d).unwrap();
        for k in 0..4 {
            sums[k] += c[k] as f64;
            sq[k] += (c[k] as f64).powi(2);
        }
    }
    for (k, p) in d.probabilities().iter().enumerate() {
        let mean = sums[k] / reps as f64;
        let var = sq[k] / reps as f64 - mean * mean;
        let (m0, v0) = (50.0 * p, 50.0 * p * (1.0 - p));
        assert!((mean - m0).abs() < 4.0 * (v0 / reps as f64).sqrt(), "bin {k}: {mean}");
        assert!((var - v0).abs() < 0.05 * v0, "bin {k}: {var} vs {v0}");
    }
}

#[test]
fn beta_moments_and_support() {
    let mut s = RngStream::new(6, 0);
    let a: Vec<f64> = (0..1_000_000).map(|_| draw_beta(&mut s, 1.0, 1.0).unwrap()).collect();
    assert!((moments(&a).0 - 0.5).abs() < 0.001);
    let b: Vec<f64> = (0..1_000_000).map(|_| draw_beta(&mut s, 3.0, 1.0).unwrap()).collect();
    let (m, v) = moments(&b);
    assert!((m - 0.75).abs() < 0.001);
    // Var Beta(3,1) = 3/80.
    assert!((v - 3.0 / 80.0).abs() < 4.0 * 0.0375 * (2.0f64 / 1e6).sqrt() * 3.0);
    for _ in 0..100_000 {
        let x = draw_beta(&mut s, 2.0, 2.0).unwrap();
        assert!(x > 0.0 && x < 1.0);
    }
    assert!(draw_beta(&mut s, 0.0, 1.0).is_err());
}

#[test]
fn distinct_streams_are_uncorrelated() {
    let mut a = RngStream::new(9, 0);
    let mut b = RngStream::new(9, 1);
    let mut c = RngStream::new(9, 0).lane(1);
    let xs: Vec<f64> = (0..100_000).map(|_| a.uniform()).collect();
    let ys: Vec<f64> = (0..100_000).map(|_| b.uniform()).collect();
    let zs: Vec<f64> = (0..100_000).map(|_| c.uniform()).collect();
    assert!(priorlab::numeric::correlation(&xs, &ys).abs() < 0.01);
    assert!(priorlab::numeric::correlation(&xs, &zs).abs() < 0.01);
}

#[test]
fn density_normalization_is_enforced() {
    assert!(DiscreteDensity::new(vec![0.5, 0.5 + 1e-10]).is_err());
    assert!(DiscreteDensity::new(vec![1.5, -0.5]).is_err());
    assert!(DiscreteDensity::new(vec![f64::NAN, 1.0]).is_err());
    assert!(DiscreteDensity::new(vec![0.25; 4]).is_ok());
}

proptest! {
    #[test]
    fn replay_is_bit_identical(seed in any::<u64>(), id in any::<u64>(), lane in any::<u64>()) {
        let mut a = RngStream::new(seed, id).lane(lane);
        let mut b = RngStream::new(seed, id).lane(lane);
        for _ in 0..64 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn multinomial_counts_sum_to_n(seed in any::<u64>(), n in 0u64..5000, w in prop::collection::vec(0.0f64..1.0, 1..12)) {
        prop_assume!(w.iter().sum::<f64>() > 0.0);
        let d = DiscreteDensity::from_weights(&w).unwrap();
        let c = draw_multinomial(&mut RngStream::new(seed, 0), n, &d).unwrap();
        prop_assert_eq!(c.iter().sum::<u64>(), n);
        for (k, wk) in w.iter().enumerate() {
            if *wk == 0.0 {
                prop_assert_eq!(c[k], 0);
            }
        }
    }
}
