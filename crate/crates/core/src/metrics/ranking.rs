use crate::error::{Result, UncleError};
use crate::graph::CausalMatrix;

/// Off-diagonal `(score, is_edge)` pairs. Truth entries above 0.5 are edges.
pub fn off_diagonal_pairs(scores: &CausalMatrix, truth: &CausalMatrix) -> Result<Vec<(f64, bool)>> {
    if scores.n() != truth.n() {
        return Err(UncleError::Contract(format!(
            "score matrix is {0}x{0} but truth is {1}x{1}",
            scores.n(),
            truth.n()
        )));
    }
    if scores.as_slice().iter().any(|v| v.is_nan()) {
        return Err(UncleError::Contract("scores contain NaN".into()));
    }
    Ok(scores.off_diagonal().into_iter().zip(truth.off_diagonal().into_iter().map(|t| t > 0.5)).collect())
}

fn counts(pairs: &[(f64, bool)]) -> (usize, usize) {
    let pos = pairs.iter().filter(|p| p.1).count();
    (pos, pairs.len() - pos)
}

fn require_both(pairs: &[(f64, bool)]) -> Result<()> {
    match counts(pairs) {
        (0, _) => Err(UncleError::UndefinedMetric("truth has no off-diagonal edges".into())),
        (_, 0) => Err(UncleError::UndefinedMetric("truth has no off-diagonal non-edges".into())),
        _ => Ok(()),
    }
}

/// Pairs sorted by descending score, grouped into tie blocks of
/// `(score, positives, negatives)`.
fn tie_blocks(pairs: &[(f64, bool)]) -> Vec<(f64, usize, usize)> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut blocks: Vec<(f64, usize, usize)> = Vec::new();
    for (s, edge) in sorted {
        match blocks.last_mut() {
            Some(b) if b.0 == s => {
                if edge {
                    b.1 += 1
                } else {
                    b.2 += 1
                }
            }
            _ => blocks.push((s, edge as usize, (!edge) as usize)),
        }
    }
    blocks
}

/// Probability that a random edge outscores a random non-edge; ties count half.
pub fn auroc(scores: &CausalMatrix, truth: &CausalMatrix) -> Result<f64> {
    let pairs = off_diagonal_pairs(scores, truth)?;
    require_both(&pairs)?;
    let (pos, neg) = counts(&pairs);
    // Walk from the lowest score up, counting negatives already passed.
    let mut below = 0usize;
    let mut wins = 0.0;
    for (_, p, n) in tie_blocks(&pairs).into_iter().rev() {
        wins += p as f64 * (below as f64 + 0.5 * n as f64);
        below += n;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// Step-interpolated area under the precision-recall curve, one point per
/// distinct score threshold.
pub fn auprc(scores: &CausalMatrix, truth: &CausalMatrix) -> Result<f64> {
    let pairs = off_diagonal_pairs(scores, truth)?;
    let (pos, _) = counts(&pairs);
    if pos == 0 {
        return Err(UncleError::UndefinedMetric("truth has no off-diagonal edges".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut last_recall = 0.0;
    for (_, p, n) in tie_blocks(&pairs) {
        tp += p;
        fp += n;
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - last_recall) * precision;
        last_recall = recall;
    }
    Ok(area)
}

/// Best accuracy of `score > threshold` over thresholds at the midpoints of
/// consecutive distinct scores plus `±inf`; ties go to the smallest threshold.
pub fn acc_best_threshold(scores: &CausalMatrix, truth: &CausalMatrix) -> Result<(f64, f64)> {
    let pairs = off_diagonal_pairs(scores, truth)?;
    require_both(&pairs)?;
    let (pos, _) = counts(&pairs);
    let total = pairs.len() as f64;
    let mut blocks = tie_blocks(&pairs);
    blocks.reverse();
    // Threshold -inf: everything predicted positive.
    let mut correct = pos;
    let mut best = (correct, f64::NEG_INFINITY);
    for (k, &(s, p, n)) in blocks.iter().enumerate() {
        // Moving the threshold above block k flips it to negative.
        correct = correct + n - p;
        let thr = match blocks.get(k + 1) {
            Some(next) => 0.5 * (s + next.0),
            None => f64::INFINITY,
        };
        if correct > best.0 {
            best = (correct, thr);
        }
    }
    Ok((best.0 as f64 / total, best.1))
}
