//! Next-token probability vectors. Construction enforces normalization and
//! zero pad mass so downstream samplers never have to re-check.

use super::{CoreError, RandomSource, TokenId};

pub const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
    pad_id: TokenId,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>, pad_id: TokenId) -> Result<TokenDistribution, CoreError> {
        if pad_id >= probs.len() {
            return Err(CoreError::invariant("pad_id outside probability vector"));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(CoreError::invariant(format!("probability {p} is not in [0, 1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(CoreError::invariant(format!("probabilities sum to {sum}, not 1")));
        }
        if probs[pad_id] != 0.0 {
            return Err(CoreError::invariant("pad token carries probability mass"));
        }
        Ok(TokenDistribution { probs, pad_id })
    }

    /// Masked softmax: pad is excluded from the support entirely.
    pub fn from_logits(logits: &[f64], pad_id: TokenId) -> Result<TokenDistribution, CoreError> {
        if pad_id >= logits.len() {
            return Err(CoreError::invariant("pad_id outside logit vector"));
        }
        let max = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != pad_id)
            .map(|(_, &l)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(CoreError::invariant("no finite non-pad logit"));
        }
        let mut probs = vec![0.0; logits.len()];
        let mut sum = 0.0;
        for (i, &l) in logits.iter().enumerate() {
            if i != pad_id {
                let e = (l - max).exp();
                probs[i] = e;
                sum += e;
            }
        }
        for p in &mut probs {
            *p /= sum;
        }
        TokenDistribution { probs, pad_id }.renormalized()
    }

    /// Builds from unnormalized non-negative weights (pad weight must be 0).
    pub(crate) fn from_weights(
        weights: Vec<f64>,
        pad_id: TokenId,
    ) -> Result<TokenDistribution, CoreError> {
        if pad_id >= weights.len() || weights[pad_id] != 0.0 {
            return Err(CoreError::invariant("pad weight must be zero"));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(CoreError::invariant("negative or non-finite weight"));
        }
        TokenDistribution { probs: weights, pad_id }.renormalized()
    }

    /// Rescale so the entries sum to exactly 1 (guards accumulated float drift
    /// after filtering). Support is unchanged.
    pub(crate) fn renormalized(mut self) -> Result<TokenDistribution, CoreError> {
        let sum: f64 = self.probs.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return Err(CoreError::DegenerateDistribution);
        }
        for p in &mut self.probs {
            *p /= sum;
        }
        Ok(self)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Highest-probability token; ties break toward the lower index.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > best_p {
                best = i;
                best_p = p;
            }
        }
        best
    }

    /// Number of tokens with positive probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }
}

/// Draws a token index. The walk over the cumulative distribution is in
/// ascending index order, so a given uniform draw always maps to the same
/// token.
pub fn sample_categorical(
    dist: &TokenDistribution,
    rng: &mut RandomSource,
) -> Result<TokenId, CoreError> {
    let u = rng.next_f64();
    let mut cum = 0.0;
    let mut last_positive = None;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last_positive = Some(i);
        cum += p;
        if u < cum {
            return Ok(i);
        }
    }
    // Rounding can leave cum marginally below 1; fall back to the last
    // positive-mass token.
    last_positive.ok_or(CoreError::DegenerateDistribution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_within_tolerance_rejects_outside() {
        assert!(TokenDistribution::new(vec![0.0, 0.5, 0.5 - 2e-7], 0).is_ok());
        assert!(TokenDistribution::new(vec![0.0, 0.5, 0.4999], 0).is_err());
    }

    #[test]
    fn rejects_pad_mass_and_negatives() {
        assert!(TokenDistribution::new(vec![0.1, 0.9, 0.0], 0).is_err());
        assert!(TokenDistribution::new(vec![0.0, 1.1, -0.1], 0).is_err());
    }

    #[test]
    fn one_hot_always_sampled() {
        let d = TokenDistribution::new(vec![0.0, 0.0, 1.0, 0.0], 0).unwrap();
        let mut rng = RandomSource::new(1);
        for _ in 0..50 {
            assert_eq!(sample_categorical(&d, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn uniform_frequencies_converge() {
        let d = TokenDistribution::new(vec![0.0, 0.25, 0.25, 0.25, 0.25], 0).unwrap();
        let mut rng = RandomSource::new(9);
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_categorical(&d, &mut rng).unwrap()] += 1;
        }
        for &c in &counts[1..] {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.01, "freq {freq} drifted from 0.25");
        }
        assert_eq!(counts[0], 0);
    }

    #[test]
    fn same_seed_reproduces_draws() {
        let d = TokenDistribution::new(vec![0.0, 0.9, 0.1], 0).unwrap();
        let draw = |seed| {
            let mut rng = RandomSource::new(seed);
            (0..200).map(|_| sample_categorical(&d, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(123), draw(123));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let d = TokenDistribution::new(vec![0.0, 0.4, 0.4, 0.2], 0).unwrap();
        assert_eq!(d.argmax(), 1);
    }

    #[test]
    fn from_logits_masks_pad_exactly() {
        let d = TokenDistribution::from_logits(&[5.0, 0.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(d.probs()[0], 0.0);
        let sum: f64 = d.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
