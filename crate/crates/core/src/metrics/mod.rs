//! Ranking metrics over off-diagonal adjacency entries and their reports.

mod ranking;
mod report;

pub use ranking::{acc_best_threshold, auprc, auroc, off_diagonal_pairs};
pub use report::{aggregate_replicas, Ci95, EvalReport, SegmentScore};

use log::warn;

use crate::datagen::{GroundTruth, Segment};
use crate::discovery::{DynamicCausalGraph, Summary};
use crate::error::{Result, UncleError};
use crate::graph::CausalMatrix;

fn segment_adjacency(truth: &GroundTruth) -> Result<&[Segment]> {
    match truth {
        GroundTruth::Dynamic(segs) => Ok(segs),
        GroundTruth::Static(_) => Err(UncleError::Contract("expected dynamic ground truth".into())),
    }
}

pub fn evaluate_static(scores: &CausalMatrix, truth: &CausalMatrix) -> Result<EvalReport> {
    let auroc = auroc(scores, truth)?;
    let auprc = auprc(scores, truth)?;
    let (acc, threshold) = acc_best_threshold(scores, truth)?;
    Ok(EvalReport::single(auroc, auprc, acc, Some(threshold)))
}

/// Scores each segment with `scores_for(segment)`, skipping segments whose
/// truth lacks an off-diagonal edge or non-edge, and averages the rest
/// without weighting by length.
fn evaluate_segments(
    segments: &[Segment],
    mut scores_for: impl FnMut(&Segment) -> Result<Option<CausalMatrix>>,
) -> Result<EvalReport> {
    let mut per_segment = Vec::new();
    let mut skipped = Vec::new();
    for (k, seg) in segments.iter().enumerate() {
        let off = seg.adjacency.off_diagonal();
        let pos = off.iter().filter(|&&v| v > 0.5).count();
        if pos == 0 || pos == off.len() {
            warn!("segment {k} [{}, {}] has no off-diagonal edges or non-edges; skipped", seg.t_start, seg.t_end);
            skipped.push(k);
            continue;
        }
        let Some(scores) = scores_for(seg)? else {
            warn!("segment {k} [{}, {}] lies outside the scored horizon; skipped", seg.t_start, seg.t_end);
            skipped.push(k);
            continue;
        };
        let r = evaluate_static(&scores, &seg.adjacency)?;
        per_segment.push(SegmentScore {
            index: k,
            t_start: seg.t_start,
            t_end: seg.t_end,
            auroc: r.auroc,
            auprc: r.auprc,
            acc: r.acc,
        });
    }
    if per_segment.is_empty() {
        return Err(UncleError::UndefinedMetric("no segment could be scored".into()));
    }
    let k = per_segment.len() as f64;
    let mean = |f: fn(&SegmentScore) -> f64| per_segment.iter().map(f).sum::<f64>() / k;
    let mut report = EvalReport::single(mean(|s| s.auroc), mean(|s| s.auprc), mean(|s| s.acc), None);
    report.per_segment = per_segment;
    report.skipped_segments = skipped;
    Ok(report)
}

/// Per-segment evaluation of time-averaged strengths. Each segment is
/// clipped to the graph's horizon (the first `L` steps have no forecast).
pub fn evaluate_dynamic(g: &DynamicCausalGraph, truth: &GroundTruth) -> Result<EvalReport> {
    let segments = segment_adjacency(truth)?;
    if truth.num_vars() != g.num_vars() {
        return Err(UncleError::Contract(format!(
            "graph has {} variables, truth has {}",
            g.num_vars(),
            truth.num_vars()
        )));
    }
    evaluate_segments(segments, |seg| {
        let a = seg.t_start.max(g.t_first());
        let b = seg.t_end.min(g.t_last());
        if a > b {
            return Ok(None);
        }
        g.summarize(Summary::Mean, Some((a, b))).map(Some)
    })
}

/// A single static score matrix scored against every segment.
pub fn evaluate_constant(scores: &CausalMatrix, truth: &GroundTruth) -> Result<EvalReport> {
    match truth {
        GroundTruth::Static(t) => evaluate_static(scores, t),
        GroundTruth::Dynamic(segs) => evaluate_segments(segs, |_| Ok(Some(scores.clone()))),
    }
}

/// Heuristic upper bound `(auroc, auprc)` for any time-invariant graph.
///
/// Candidates: every segment's adjacency, the time-weighted edge frequency
/// matrix, and a greedy search over adjacent rank swaps starting from the
/// frequency ranking. Each bound is the best value any candidate reaches.
pub fn static_best(truth: &GroundTruth) -> Result<(f64, f64)> {
    let segments = segment_adjacency(truth)?;
    let n = truth.num_vars();
    let total: usize = segments.iter().map(Segment::len).sum();
    let freq = CausalMatrix::from_fn(n, |j, i| {
        segments.iter().map(|s| s.len() as f64 * s.adjacency.get(j, i)).sum::<f64>() / total as f64
    });
    let score = |m: &CausalMatrix| evaluate_constant(m, truth).map(|r| (r.auroc, r.auprc));

    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut consider = |v: (f64, f64)| {
        best.0 = best.0.max(v.0);
        best.1 = best.1.max(v.1);
    };
    for s in segments {
        consider(score(&s.adjacency)?);
    }
    consider(score(&freq)?);

    // Greedy rank search: off-diagonal cells ordered by frequency (ties by
    // position), scored by rank; swap neighbours while the objective rises.
    let cells: Vec<(usize, usize)> =
        (0..n).flat_map(|j| (0..n).map(move |i| (j, i))).filter(|(j, i)| j != i).collect();
    let mut order = cells.clone();
    order.sort_by(|a, b| freq.get(a.0, a.1).total_cmp(&freq.get(b.0, b.1)));
    let ranked = |order: &[(usize, usize)]| {
        let mut m = CausalMatrix::zeros(n);
        for (r, &(j, i)) in order.iter().enumerate() {
            m.set(j, i, (r + 1) as f64);
        }
        m
    };
    let objective = |v: (f64, f64)| v.0 + v.1;
    let mut current = score(&ranked(&order))?;
    consider(current);
    loop {
        let mut improved = false;
        for k in 0..order.len().saturating_sub(1) {
            order.swap(k, k + 1);
            let v = score(&ranked(&order))?;
            if objective(v) > objective(current) + 1e-12 {
                current = v;
                consider(v);
                improved = true;
            } else {
                order.swap(k, k + 1);
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_nd8, gen_tvsem};

    fn two_segment_truth() -> GroundTruth {
        let a = CausalMatrix::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let b = CausalMatrix::from_rows(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]]).unwrap();
        GroundTruth::dynamic(
            vec![
                Segment { t_start: 1, t_end: 10, adjacency: a },
                Segment { t_start: 11, t_end: 20, adjacency: b },
            ],
            20,
        )
        .unwrap()
    }

    #[test]
    fn static_truth_scores_itself_perfectly() {
        let t = CausalMatrix::from_rows(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let r = evaluate_static(&t, &t).unwrap();
        assert_eq!((r.auroc, r.auprc, r.acc), (1.0, 1.0, 1.0));
    }

    #[test]
    fn dynamic_graph_matching_each_segment_is_perfect() {
        let truth = two_segment_truth();
        let GroundTruth::Dynamic(segs) = &truth else { unreachable!() };
        let mut s = Vec::new();
        for t in 2..=20 {
            s.extend_from_slice(truth.at(t).unwrap().as_slice());
        }
        let g = DynamicCausalGraph::new(3, 2, s).unwrap();
        let r = evaluate_dynamic(&g, &truth).unwrap();
        assert_eq!((r.auroc, r.auprc, r.acc), (1.0, 1.0, 1.0));
        assert_eq!(r.per_segment.len(), 2);
        assert_eq!(r.per_segment[1].t_start, segs[1].t_start);
        assert!(evaluate_dynamic(&g, &GroundTruth::Static(CausalMatrix::zeros(3))).is_err());
    }

    #[test]
    fn constant_graph_against_constant_truth() {
        let truth = two_segment_truth();
        let GroundTruth::Dynamic(segs) = &truth else { unreachable!() };
        let same = GroundTruth::dynamic(
            segs.iter().map(|s| Segment { adjacency: segs[0].adjacency.clone(), ..s.clone() }).collect(),
            20,
        )
        .unwrap();
        let g = DynamicCausalGraph::constant(&segs[0].adjacency, 1, 20).unwrap();
        assert_eq!(evaluate_dynamic(&g, &same).unwrap().auroc, 1.0);
        assert_eq!(static_best(&same).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn segments_without_edges_are_skipped() {
        let empty = CausalMatrix::zeros(3);
        let full = CausalMatrix::from_fn(3, |j, i| (j != i) as u8 as f64);
        let truth = two_segment_truth();
        let GroundTruth::Dynamic(mut segs) = truth else { unreachable!() };
        segs.push(Segment { t_start: 21, t_end: 25, adjacency: empty });
        segs.push(Segment { t_start: 26, t_end: 30, adjacency: full });
        let truth = GroundTruth::dynamic(segs, 30).unwrap();
        let g = DynamicCausalGraph::constant(&CausalMatrix::from_fn(3, |j, i| (j * 3 + i) as f64), 1, 30).unwrap();
        let r = evaluate_dynamic(&g, &truth).unwrap();
        assert_eq!(r.per_segment.len(), 2);
        assert_eq!(r.skipped_segments, vec![2, 3]);
    }

    #[test]
    fn tvsem_static_best_is_below_dynamic_truth() {
        let (_, truth) = gen_tvsem(2000, 0).unwrap();
        let (a, p) = static_best(&truth).unwrap();
        // Three of five segments share one direction.
        assert!((a - 0.6).abs() < 1e-12, "{a}");
        assert!((p - 0.8).abs() < 1e-12, "{p}");
    }

    #[test]
    fn nd8_frequency_candidate_is_strong() {
        let (_, truth) = gen_nd8(2000, 0).unwrap();
        let GroundTruth::Dynamic(segs) = &truth else { unreachable!() };
        let freq = CausalMatrix::from_fn(8, |j, i| segs.iter().map(|s| s.adjacency.get(j, i)).sum::<f64>() / 4.0);
        let r = evaluate_constant(&freq, &truth).unwrap();
        assert!(r.auroc >= 0.85, "{}", r.auroc);
        let (a, _) = static_best(&truth).unwrap();
        assert!(a >= r.auroc);
    }
}
