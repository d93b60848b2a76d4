use crate::error::{Error, Result};
use crate::textcore::{ngram_counts, TokenSeq};

/// Sentence BLEU with clipped n-gram precisions up to order `max_n`.
///
/// Orders `n >= 2` use add-one smoothing on numerator and denominator, which
/// makes `bleu(x, x) == 1` for every non-empty `x`. The brevity penalty is
/// `min(1, exp(1 - |ref| / |hyp|))`. An empty hypothesis scores 0, except
/// against an empty reference where it scores 1.
pub fn bleu(hyp: &TokenSeq, reference: &TokenSeq, max_n: usize) -> f64 {
    if hyp.is_empty() {
        return if reference.is_empty() { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n.max(1) {
        let hyp_counts = ngram_counts(hyp, n).expect("n >= 1");
        let ref_counts = ngram_counts(reference, n).expect("n >= 1");
        let total: usize = hyp_counts.values().sum();
        let clipped: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            clipped as f64 / total as f64
        } else {
            (clipped as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    bp * (log_sum / max_n.max(1) as f64).exp()
}

/// `1 -` the mean symmetrised sentence BLEU between two aligned output lists.
pub fn diversity(outputs_a: &[TokenSeq], outputs_b: &[TokenSeq]) -> Result<f64> {
    if outputs_a.len() != outputs_b.len() {
        return Err(Error::LengthMismatch(format!(
            "diversity over {} vs {} outputs",
            outputs_a.len(),
            outputs_b.len()
        )));
    }
    if outputs_a.is_empty() {
        return Err(Error::invalid("diversity needs at least one sentence pair"));
    }
    let total: f64 = outputs_a
        .iter()
        .zip(outputs_b)
        .map(|(a, b)| 0.5 * (bleu(a, b, 4) + bleu(b, a, 4)))
        .sum();
    Ok(1.0 - total / outputs_a.len() as f64)
}

/// Mean of [`diversity`] over every unordered pair of systems.
pub fn pairwise_diversity(systems: &[Vec<TokenSeq>]) -> Result<f64> {
    if systems.len() < 2 {
        return Err(Error::invalid("pairwise diversity needs at least two systems"));
    }
    let mut sum = 0.0;
    let mut pairs = 0;
    for i in 0..systems.len() {
        for j in i + 1..systems.len() {
            sum += diversity(&systems[i], &systems[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}
