use crate::error::StatsError;
use crate::special::beta_quantile_lower;

/// Two-sided confidence interval on a binomial success probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialBound {
    pub lower: f64,
    pub upper: f64,
}

impl BinomialBound {
    /// Degenerate interval at a known value.
    pub fn exact(p: f64) -> Self {
        Self { lower: p, upper: p }
    }

    pub fn vacuous() -> Self {
        Self { lower: 0.0, upper: 1.0 }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            lower: (self.lower * k).min(1.0),
            upper: (self.upper * k).min(1.0),
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Exact (Clopper-Pearson) interval: each tail holds at most
/// `confidence_epsilon / 2` of binomial probability.
pub fn clopper_pearson(successes: u64, trials: u64, confidence_epsilon: f64) -> Result<BinomialBound, StatsError> {
    if trials == 0 {
        return Err(StatsError::NoTrials);
    }
    if successes > trials {
        return Err(StatsError::SuccessesExceedTrials { successes, trials });
    }
    if !(confidence_epsilon > 0.0 && confidence_epsilon < 1.0) {
        return Err(StatsError::BadEpsilon(confidence_epsilon));
    }
    let tail = confidence_epsilon / 2.0;
    let k = successes as f64;
    let n = trials as f64;
    // P[Bin(n, p) >= k] = I_p(k, n - k + 1)
    let lower = if successes == 0 {
        0.0
    } else {
        beta_quantile_lower(k, n - k + 1.0, tail).0
    };
    // P[Bin(n, p) <= k] = I_{1-p}(n - k, k + 1)
    let upper = if successes == trials {
        1.0
    } else {
        beta_quantile_lower(n - k, k + 1.0, tail).1
    };
    Ok(BinomialBound { lower, upper })
}
