//! Small numeric helpers shared by the prior and the sampler.

use rand::Rng;
pub use statrs::function::gamma::ln_gamma;

/// `log(sum(exp(xs)))`, stable for large magnitudes. Returns `-inf` for an
/// empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights into probabilities in place.
pub fn normalize_log_weights(weights: &mut [f64]) {
    let lse = log_sum_exp(weights);
    for w in weights.iter_mut() {
        *w = (*w - lse).exp();
    }
}

/// Draws an index from unnormalized log-weights. The weights are shifted by
/// their maximum before exponentiation; the slice is used as scratch space.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &mut [f64], rng: &mut R) -> usize {
    debug_assert!(!log_weights.is_empty());
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut u = rng.random::<f64>() * total;
    for (k, w) in log_weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    // floating point slack lands on the last positive weight
    log_weights
        .iter()
        .rposition(|w| *w > 0.0)
        .unwrap_or(log_weights.len() - 1)
}

/// Cached `ln(y!)` for small counts, falling back to `ln_gamma` above the cache.
#[derive(Debug, Clone)]
pub struct LnFactorial {
    table: Vec<f64>,
}

impl LnFactorial {
    pub fn new(max_cached: u32) -> Self {
        let mut table = Vec::with_capacity(max_cached as usize + 1);
        let mut acc = 0.0f64;
        table.push(0.0);
        for y in 1..=max_cached {
            acc += (y as f64).ln();
            table.push(acc);
        }
        Self { table }
    }

    #[inline]
    pub fn get(&self, y: u32) -> f64 {
        match self.table.get(y as usize) {
            Some(v) => *v,
            None => ln_gamma(y as f64 + 1.0),
        }
    }
}

/// Poisson log-pmf at `y` with mean `rate`, through log-gamma.
#[inline]
pub fn poisson_ln_pmf(y: u32, rate: f64) -> f64 {
    if y == 0 {
        -rate
    } else {
        y as f64 * rate.ln() - rate - ln_gamma(y as f64 + 1.0)
    }
}

/// SplitMix64 finalizer, used to derive independent seeds from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_handles_large_values() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = [0.0f64.ln(), 1.0f64.ln(), 3.0f64.ln()];
        let mut counts = [0usize; 3];
        let draws = 200_000;
        for _ in 0..draws {
            let mut w = base;
            counts[sample_log_categorical(&mut w, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        let p1 = counts[1] as f64 / draws as f64;
        assert!((p1 - 0.25).abs() < 0.005, "{p1}");
    }

    #[test]
    fn ln_factorial_matches_gamma() {
        let lf = LnFactorial::new(16);
        for y in [0u32, 1, 5, 16, 17, 200] {
            assert!((lf.get(y) - ln_gamma(y as f64 + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        let c = derive_seed(2, 0);
        assert!(a != b && a != c && b != c);
    }
}
