//! Deterministic random streams and the samplers built on them.
//!
//! A stream is a ChaCha8 generator keyed by the master seed, with the
//! stream id selecting ChaCha's 64-bit stream (nonce). Streams are
//! therefore derived directly from `(seed, id)` without advancing any
//! other generator, which is what makes parallel replication
//! schedule-independent.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};

use crate::error::{invalid, require_finite, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh, independent stream for a sub-purpose of this one. The
    /// result depends only on `(master_seed, stream_id, lane)`, never on
    /// how much of `self` has been consumed.
    pub fn lane(&self, lane: u64) -> RngStream {
        let key = splitmix64(self.master_seed ^ splitmix64(lane.wrapping_add(1)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(self.stream_id);
        RngStream {
            master_seed: self.master_seed,
            stream_id: self.stream_id,
            rng,
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.rng.random_range(0..bound)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

/// Probabilities over K bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    probs: Vec<f64>,
}

impl DiscreteDensity {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("discrete density needs at least one bin");
        }
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return invalid(format!("bin {k} has invalid probability {p}"));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return invalid(format!("bin probabilities sum to {total}, not 1"));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights and validates the result.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return invalid("weights must have a positive finite sum");
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; k])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn draw_normal(stream: &mut RngStream, mean: f64, sd: f64) -> Result<f64> {
    require_finite("mean", mean)?;
    require_finite("sd", sd)?;
    if sd < 0.0 {
        return invalid(format!("sd must be nonnegative, got {sd}"));
    }
    if sd == 0.0 {
        return Ok(mean);
    }
    Ok(mean + sd * stream.standard_normal())
}

pub fn draw_bernoulli(stream: &mut RngStream, p: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("Bernoulli probability {p} outside [0,1]"));
    }
    Ok(u8::from(stream.uniform() < p))
}

/// Multinomial counts by sequential conditional binomials.
pub fn draw_multinomial(stream: &mut RngStream, n: u64, d: &DiscreteDensity) -> Result<Vec<u64>> {
    let probs = d.probabilities();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass_left = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            counts[k] = remaining;
            break;
        }
        let q = if mass_left > 0.0 {
            (p / mass_left).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let c = Binomial::new(remaining, q)
            .map_err(|e| crate::LabError::Numerical(format!("binomial: {e}")))?
            .sample(stream);
        counts[k] = c;
        remaining -= c;
        mass_left -= p;
    }
    Ok(counts)
}

/// Beta(a, b) via the two-gamma construction.
pub fn draw_beta(stream: &mut RngStream, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
        return invalid(format!("beta shapes must be positive, got ({a}, {b})"));
    }
    let ga = Gamma::new(a, 1.0).map_err(|e| crate::LabError::Numerical(e.to_string()))?;
    let gb = Gamma::new(b, 1.0).map_err(|e| crate::LabError::Numerical(e.to_string()))?;
    loop {
        let x: f64 = ga.sample(stream);
        let y: f64 = gb.sample(stream);
        let s = x + y;
        if s > 0.0 {
            let v = x / s;
            if v > 0.0 && v < 1.0 {
                return Ok(v);
            }
        }
    }
}
