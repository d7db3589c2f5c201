//! Structure-recovery scores.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhinoError};
use crate::graph::TemporalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    fn add(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    fn merge(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }

    /// `None` when the truth has no edges.
    pub fn f1(&self) -> Option<f64> {
        if self.tp + self.fn_ == 0 {
            return None;
        }
        Some(2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let p = self.tp + self.fp;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let t = self.tp + self.fn_;
        (t > 0).then(|| self.tp as f64 / t as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_lag: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_inst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1_temporal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    pub lag: Confusion,
    pub inst: Confusion,
    pub temporal: Confusion,
}

/// F1 over lagged slices, the lag-0 slice and all slices pooled.
pub fn f1_scores(pred: &TemporalGraph, truth: &TemporalGraph) -> Result<EvalReport> {
    f1_scores_masked(pred, truth, false)
}

/// As [`f1_scores`], optionally skipping lagged self-edges too. The lag-0
/// diagonal is never scored.
pub fn f1_scores_masked(pred: &TemporalGraph, truth: &TemporalGraph, ignore_self: bool) -> Result<EvalReport> {
    if pred.adjacency().dim() != truth.adjacency().dim() {
        return Err(RhinoError::invalid(format!(
            "graph shapes differ: {:?} vs {:?}",
            pred.adjacency().dim(),
            truth.adjacency().dim()
        )));
    }
    let (k1, d, _) = pred.adjacency().dim();
    let mut lag = Confusion::default();
    let mut inst = Confusion::default();
    for tau in 0..k1 {
        for i in 0..d {
            for j in 0..d {
                if i == j && (tau == 0 || ignore_self) {
                    continue;
                }
                let slot = if tau == 0 { &mut inst } else { &mut lag };
                slot.add(pred.has_edge(tau, i, j), truth.has_edge(tau, i, j));
            }
        }
    }
    let temporal = lag.merge(inst);
    Ok(EvalReport {
        f1_lag: lag.f1(),
        f1_inst: inst.f1(),
        f1_temporal: temporal.f1(),
        auroc: None,
        lag,
        inst,
        temporal,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(RhinoError::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(RhinoError::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(RhinoError::UndefinedMetric(
            "AUROC needs both positive and negative entries".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Rank-sum of positives with midranks for ties.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        rank_sum += mid * order[start..end].iter().filter(|&&i| labels[i]).count() as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// AUROC of a score matrix against a binary matrix.
pub fn auroc_matrix(scores: &Array2<f64>, truth: &Array2<u8>, ignore_self: bool) -> Result<f64> {
    if scores.dim() != truth.dim() {
        return Err(RhinoError::invalid("score and truth matrices differ in shape"));
    }
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for ((i, j), &v) in scores.indexed_iter() {
        if ignore_self && i == j {
            continue;
        }
        s.push(v);
        l.push(truth[[i, j]] != 0);
    }
    auroc(&s, &l)
}

/// AUROC over every temporal entry except the lag-0 diagonal.
pub fn temporal_auroc(probs: &Array3<f64>, truth: &TemporalGraph) -> Result<f64> {
    if probs.dim() != truth.adjacency().dim() {
        return Err(RhinoError::invalid("probability tensor does not match the graph"));
    }
    let (mut s, mut l) = (Vec::new(), Vec::new());
    for ((tau, i, j), &v) in probs.indexed_iter() {
        if tau == 0 && i == j {
            continue;
        }
        s.push(v);
        l.push(truth.has_edge(tau, i, j));
    }
    auroc(&s, &l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(d: usize, k: usize, edges: &[(usize, usize, usize)]) -> TemporalGraph {
        let mut g = TemporalGraph::empty(d, k);
        for &(t, i, j) in edges {
            g.set_edge(t, i, j, true).unwrap();
        }
        g
    }

    fn brute_auroc(s: &[f64], l: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in l.iter().enumerate() {
            for (j, &lj) in l.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn f1_examples() {
        let truth = graph(3, 1, &[(1, 0, 1), (0, 1, 2)]);
        let r = f1_scores(&truth, &truth).unwrap();
        assert_eq!((r.f1_lag, r.f1_inst, r.f1_temporal), (Some(1.0), Some(1.0), Some(1.0)));
        let r = f1_scores(&graph(3, 1, &[]), &truth).unwrap();
        assert_eq!(r.f1_temporal, Some(0.0));
        let pred = graph(3, 1, &[(0, 1, 2), (1, 2, 2)]);
        let r = f1_scores(&pred, &truth).unwrap();
        assert_eq!((r.temporal.tp, r.temporal.fp, r.temporal.fn_), (1, 1, 1));
        assert_eq!(r.f1_temporal, Some(0.5));
    }

    #[test]
    fn empty_truth_slice_is_absent() {
        let truth = graph(2, 1, &[(1, 0, 1)]);
        let pred = graph(2, 1, &[(1, 0, 1), (0, 0, 1)]);
        let r = f1_scores(&pred, &truth).unwrap();
        assert_eq!(r.f1_inst, None);
        assert_eq!(r.inst.fp, 1);
        assert_eq!(r.f1_lag, Some(1.0));
    }

    #[test]
    fn self_edges_can_be_skipped() {
        let truth = graph(2, 1, &[(1, 0, 0), (1, 0, 1)]);
        let pred = graph(2, 1, &[(1, 0, 1)]);
        assert_eq!(f1_scores_masked(&pred, &truth, true).unwrap().f1_lag, Some(1.0));
        assert!(f1_scores(&pred, &truth).unwrap().f1_lag.unwrap() < 1.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(f1_scores(&graph(2, 1, &[]), &graph(3, 1, &[])).is_err());
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8, 0.1], &[true, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.3, 0.3, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(RhinoError::UndefinedMetric(_))));
    }

    #[test]
    fn matrix_auroc_masks_diagonal() {
        let scores = ndarray::array![[1.0, 0.9], [0.1, 1.0]];
        let truth = ndarray::array![[0u8, 1], [0, 0]];
        assert_eq!(auroc_matrix(&scores, &truth, true).unwrap(), 1.0);
        assert!(auroc_matrix(&scores, &truth, false).unwrap() < 1.0);
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_count(
            items in proptest::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let s: Vec<f64> = items.iter().map(|&(v, _)| v as f64 / 5.0).collect();
            let l: Vec<bool> = items.iter().map(|&(_, b)| b).collect();
            let pos = l.iter().filter(|&&b| b).count();
            prop_assume!(pos > 0 && pos < l.len());
            let fast = auroc(&s, &l).unwrap();
            prop_assert!((fast - brute_auroc(&s, &l)).abs() < 1e-12);
            let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert!((auroc(&warped, &l).unwrap() - fast).abs() < 1e-12);
        }

        #[test]
        fn f1_symmetric_and_matches_counts(
            a in proptest::collection::vec(any::<bool>(), 18),
            b in proptest::collection::vec(any::<bool>(), 18),
        ) {
            let build = |bits: &[bool]| {
                let mut g = TemporalGraph::empty(3, 1);
                for (n, &on) in bits.iter().enumerate() {
                    let (t, i, j) = (n / 9, (n / 3) % 3, n % 3);
                    if on && !(t == 0 && i == j) {
                        g.set_edge(t, i, j, true).unwrap();
                    }
                }
                g
            };
            let (ga, gb) = (build(&a), build(&b));
            let ab = f1_scores(&ga, &gb).unwrap();
            let ba = f1_scores(&gb, &ga).unwrap();
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for t in 0..2 {
                for i in 0..3 {
                    for j in 0..3 {
                        if t == 0 && i == j { continue; }
                        let (p, q) = (ga.has_edge(t, i, j), gb.has_edge(t, i, j));
                        tp += usize::from(p && q);
                        fp += usize::from(p && !q);
                        fn_ += usize::from(!p && q);
                    }
                }
            }
            prop_assert_eq!((ab.temporal.tp, ab.temporal.fp, ab.temporal.fn_), (tp, fp, fn_));
            if ab.f1_temporal.is_some() && ba.f1_temporal.is_some() {
                prop_assert_eq!(ab.f1_temporal, ba.f1_temporal);
                prop_assert_eq!(ab.temporal.precision(), ba.temporal.recall());
            }
        }
    }
}
