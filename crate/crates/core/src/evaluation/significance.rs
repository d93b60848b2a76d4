use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which system did better on one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    A,
    B,
    Tie,
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(k: u64, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // log C(n, i) accumulated incrementally from i = 0
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_c = 0.0;
    let mut tail = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_c += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            tail += (ln_c + ln_half_n).exp();
        }
    }
    tail.min(1.0)
}

/// One-tailed sign test that A beats B, averaged over bootstrap resamples of
/// the sentence indices. Ties are dropped inside each resample; a resample
/// with only ties contributes p = 1.
pub fn sign_test_bootstrap(outcomes: &[Outcome], resamples: usize, seed: u64) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("sign test needs at least one sentence"));
    }
    if resamples == 0 {
        return Err(Error::invalid("sign test needs at least one resample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = outcomes.len();
    let mut total = 0.0;
    for _ in 0..resamples {
        let (mut a, mut b) = (0u64, 0u64);
        for _ in 0..n {
            match outcomes[rng.random_range(0..n)] {
                Outcome::A => a += 1,
                Outcome::B => b += 1,
                Outcome::Tie => {}
            }
        }
        total += binomial_upper_tail(a, a + b);
    }
    Ok(total / resamples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_values() {
        assert_eq!(binomial_upper_tail(0, 5), 1.0);
        assert!((binomial_upper_tail(5, 5) - 1.0 / 32.0).abs() < 1e-15);
        assert!((binomial_upper_tail(3, 5) - 0.5).abs() < 1e-12);
        // scipy.stats.binom.sf(59, 100, 0.5)
        assert!((binomial_upper_tail(60, 100) - 0.028443966820490392).abs() < 1e-12);
    }

    #[test]
    fn unanimous_and_ties() {
        let all_a = vec![Outcome::A; 50];
        assert!(sign_test_bootstrap(&all_a, 100, 7).unwrap() < 0.01);
        let ties = vec![Outcome::Tie; 50];
        assert_eq!(sign_test_bootstrap(&ties, 100, 7).unwrap(), 1.0);
        assert!(sign_test_bootstrap(&[], 100, 7).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut v = vec![Outcome::A; 30];
        v.extend(vec![Outcome::B; 25]);
        let p1 = sign_test_bootstrap(&v, 100, 3).unwrap();
        assert_eq!(p1, sign_test_bootstrap(&v, 100, 3).unwrap());
    }

    // Reference values: the exact expectation of the per-resample p-value when
    // resampled counts follow Multinomial(n, observed proportions), computed
    // with scipy (sum over all count vectors of pmf * binom.sf). The bootstrap
    // mean must land within 4 standard errors.
    fn check_against_reference(outcomes: &[Outcome], mean: f64, sd: f64) {
        for (resamples, seed) in [(100usize, 11u64), (20_000, 12)] {
            let p = sign_test_bootstrap(outcomes, resamples, seed).unwrap();
            let se = sd / (resamples as f64).sqrt();
            assert!((p - mean).abs() <= 4.0 * se, "p={p} mean={mean} se={se}");
        }
    }

    #[test]
    fn sixty_forty_matches_reference_script() {
        let mut v = vec![Outcome::A; 60];
        v.extend(vec![Outcome::B; 40]);
        check_against_reference(&v, 0.08759794686884026, 0.1380136315470594);
    }

    #[test]
    fn with_ties_matches_reference_script() {
        let mut v = vec![Outcome::A; 60];
        v.extend(vec![Outcome::B; 30]);
        v.extend(vec![Outcome::Tie; 10]);
        check_against_reference(&v, 0.013534778600280387, 0.041597300394614414);
    }
}
