//! Aggregate binomial draws for per-step photon counting.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Below this mean the draw is exact (CDF inversion); above it a normal
/// approximation with continuity correction is used.
pub const EXACT_MEAN_LIMIT: f64 = 50.0;

/// Draws from Binomial(n, p).
pub fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let nf = n as f64;
    let mean = nf * p;
    if mean < EXACT_MEAN_LIMIT {
        invert(n, p, rng)
    } else if nf * (1.0 - p) < EXACT_MEAN_LIMIT {
        n - invert(n, 1.0 - p, rng)
    } else {
        let sd = (mean * (1.0 - p)).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        let k = (mean + sd * z + 0.5).floor();
        k.clamp(0.0, nf) as u64
    }
}

/// Sequential-search inversion; expects n p < ~50 so that P(0) does not underflow.
fn invert<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let ratio = p / (1.0 - p);
    let mut pmf = (n as f64 * (-p).ln_1p()).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    while u > cdf && k < n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
        k += 1;
        cdf += pmf;
        if pmf < 1e-300 && cdf < u {
            // accumulated rounding; the remaining mass is negligible
            break;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(n: u64, p: f64, draws: usize) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..draws).map(|_| binomial(n, p, &mut rng) as f64).collect();
        let m = xs.iter().sum::<f64>() / draws as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
        (m, v)
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(binomial(10, 0.0, &mut rng), 0);
        assert_eq!(binomial(10, 1.0, &mut rng), 10);
        assert_eq!(binomial(0, 0.5, &mut rng), 0);
    }

    #[test]
    fn exact_branch_moments() {
        // few-hundred-per-second regime of the near-vacuum decoy
        let (n, p) = (3_900_000u64, 5e-6);
        let (m, v) = moments(n, p, 20_000);
        let mean = n as f64 * p;
        let var = mean * (1.0 - p);
        assert!((m - mean).abs() < 4.0 * (var / 20_000.0).sqrt(), "{m}");
        assert!((v / var - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn normal_branch_moments() {
        let (n, p) = (988_300_000u64, 0.004);
        let (m, v) = moments(n, p, 20_000);
        let mean = n as f64 * p;
        let var = mean * (1.0 - p);
        assert!((m - mean).abs() < 4.0 * (var / 20_000.0).sqrt());
        assert!((v / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn near_one_uses_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = binomial(1000, 0.999, &mut rng);
            assert!(k <= 1000 && k >= 980);
        }
    }
}
