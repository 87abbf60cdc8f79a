//! Class-agnostic average precision, clustering agreement (ARI, NMI) and
//! semantic mIoU / mAcc.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::SemanticMap;

/// Assignment of elements (pixels or points) to instance IDs; `0` means the
/// element belongs to no instance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstancePartition {
    pub labels: Vec<u32>,
    /// Per-instance confidence; instances not listed score 1.0.
    pub confidence: BTreeMap<u32, f64>,
}

impl InstancePartition {
    pub fn new(labels: Vec<u32>) -> Self {
        Self {
            labels,
            confidence: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn confidence_of(&self, id: u32) -> f64 {
        self.confidence.get(&id).copied().unwrap_or(1.0)
    }

    fn instance_sizes(&self) -> BTreeMap<u32, usize> {
        let mut sizes = BTreeMap::new();
        for &l in &self.labels {
            if l > 0 {
                *sizes.entry(l).or_insert(0) += 1;
            }
        }
        sizes
    }
}

fn check_universe(pred: &[u32], gt: &[u32]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::dimension("partition element universe", gt.len(), pred.len()));
    }
    Ok(())
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// AP at a single IoU threshold.
///
/// Predictions are visited by descending confidence, then larger best IoU,
/// then earlier first element; each takes the unmatched ground-truth instance
/// with the highest IoU at or above `threshold` (earlier first element on
/// ties). Ties never look at ID values, so relabeling either side leaves the
/// result unchanged. AP is the area under the all-point
/// interpolated precision-recall curve. With no ground truth, AP is 1 if there
/// are no predictions either and 0 otherwise.
pub fn average_precision_at(pred: &InstancePartition, gt: &InstancePartition, threshold: f64) -> Result<f64> {
    check_universe(&pred.labels, &gt.labels)?;
    let pred_sizes = pred.instance_sizes();
    let gt_sizes = gt.instance_sizes();
    if gt_sizes.is_empty() {
        return Ok(if pred_sizes.is_empty() { 1.0 } else { 0.0 });
    }
    if pred_sizes.is_empty() {
        return Ok(0.0);
    }

    let mut inter: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if p > 0 && g > 0 {
            *inter.entry(p).or_default().entry(g).or_insert(0) += 1;
        }
    }
    let ious: BTreeMap<u32, Vec<(u32, f64)>> = pred_sizes
        .iter()
        .map(|(&p, &sp)| {
            let row = inter.get(&p).map(|r| {
                r.iter()
                    .map(|(&g, &i)| (g, i as f64 / (sp + gt_sizes[&g] - i) as f64))
                    .collect()
            });
            (p, row.unwrap_or_default())
        })
        .collect();
    let best_iou = |p: u32| ious[&p].iter().map(|&(_, v)| v).fold(0.0, f64::max);
    let pred_first = first_elements(&pred.labels);
    let gt_first = first_elements(&gt.labels);

    let mut order: Vec<u32> = pred_sizes.keys().copied().collect();
    order.sort_by(|&a, &b| {
        pred.confidence_of(b)
            .total_cmp(&pred.confidence_of(a))
            .then(best_iou(b).total_cmp(&best_iou(a)))
            .then(pred_first[&a].cmp(&pred_first[&b]))
    });

    let mut matched: BTreeSet<u32> = BTreeSet::new();
    let mut hits = Vec::with_capacity(order.len());
    for p in order {
        let candidate = ious[&p]
            .iter()
            .filter(|(g, iou)| *iou >= threshold && !matched.contains(g))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(gt_first[&b.0].cmp(&gt_first[&a.0])));
        match candidate {
            Some(&(g, _)) => {
                matched.insert(g);
                hits.push(true);
            }
            None => hits.push(false),
        }
    }
    Ok(area_under_pr(&hits, gt_sizes.len()))
}

/// Index of the first element carrying each nonzero label.
fn first_elements(labels: &[u32]) -> BTreeMap<u32, usize> {
    let mut first = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            first.entry(l).or_insert(i);
        }
    }
    first
}

/// All-point interpolated area under the precision-recall curve of a ranked
/// hit list.
fn area_under_pr(hits: &[bool], num_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ApSummary {
    /// Mean AP over IoU 0.50:0.95:0.05.
    pub ap: f64,
    pub ap50: f64,
    pub ap25: f64,
}

pub fn average_precision(pred: &InstancePartition, gt: &InstancePartition) -> Result<ApSummary> {
    let thresholds = coco_thresholds();
    let mut sum = 0.0;
    for &t in &thresholds {
        sum += average_precision_at(pred, gt, t)?;
    }
    Ok(ApSummary {
        ap: sum / thresholds.len() as f64,
        ap50: average_precision_at(pred, gt, 0.5)?,
        ap25: average_precision_at(pred, gt, 0.25)?,
    })
}

struct Contingency {
    n: usize,
    left: BTreeMap<u32, usize>,
    right: BTreeMap<u32, usize>,
    joint: BTreeMap<(u32, u32), usize>,
}

impl Contingency {
    fn build(left: &[u32], right: &[u32]) -> Self {
        let mut c = Contingency {
            n: left.len(),
            left: BTreeMap::new(),
            right: BTreeMap::new(),
            joint: BTreeMap::new(),
        };
        for (&a, &b) in left.iter().zip(right) {
            *c.left.entry(a).or_insert(0) += 1;
            *c.right.entry(b).or_insert(0) += 1;
            *c.joint.entry((a, b)).or_insert(0) += 1;
        }
        c
    }

    /// Same partition up to relabeling: every row and column has one cell.
    fn identical(&self) -> bool {
        self.joint.len() == self.left.len() && self.joint.len() == self.right.len()
    }
}

fn comb2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Every label value, including 0, is a cluster.
/// When the chance-adjusted denominator vanishes the result is 1 for
/// identical partitions and 0 otherwise.
pub fn ari(pred: &[u32], gt: &[u32]) -> Result<f64> {
    check_universe(pred, gt)?;
    let c = Contingency::build(pred, gt);
    if c.n < 2 {
        return Ok(1.0);
    }
    let index: f64 = c.joint.values().map(|&v| comb2(v)).sum();
    let sum_left: f64 = c.left.values().map(|&v| comb2(v)).sum();
    let sum_right: f64 = c.right.values().map(|&v| comb2(v)).sum();
    let expected = sum_left * sum_right / comb2(c.n);
    let max_index = 0.5 * (sum_left + sum_right);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(if c.identical() { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

fn entropy(counts: &BTreeMap<u32, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&v| {
            let p = v as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization. Every
/// label value, including 0, is a cluster. If either side has zero entropy
/// the result is 1 for identical partitions and 0 otherwise.
pub fn nmi(pred: &[u32], gt: &[u32]) -> Result<f64> {
    check_universe(pred, gt)?;
    let c = Contingency::build(pred, gt);
    if c.n == 0 {
        return Ok(1.0);
    }
    let n = c.n as f64;
    let h_left = entropy(&c.left, n);
    let h_right = entropy(&c.right, n);
    if h_left == 0.0 || h_right == 0.0 {
        return Ok(if c.identical() { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (&(a, b), &v) in &c.joint {
        let v = v as f64;
        mi += v / n * (n * v / (c.left[&a] as f64 * c.right[&b] as f64)).ln();
    }
    Ok((mi / (0.5 * (h_left + h_right))).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SemanticScores {
    pub miou: f64,
    pub macc: f64,
    /// Number of classes present in the ground truth.
    pub classes: usize,
}

/// Mean IoU and mean accuracy over classes `1..=num_classes` present in the
/// ground truth. Pixels unlabeled (0) in the ground truth are ignored. Both
/// scores are 0 when the ground truth has no labeled pixel.
pub fn miou_macc(pred: &[SemanticMap], gt: &[SemanticMap], num_classes: usize) -> Result<SemanticScores> {
    if pred.len() != gt.len() {
        return Err(Error::dimension("semantic map count", gt.len(), pred.len()));
    }
    let mut tp = vec![0usize; num_classes + 1];
    let mut pred_count = vec![0usize; num_classes + 1];
    let mut gt_count = vec![0usize; num_classes + 1];
    for (p, g) in pred.iter().zip(gt) {
        g.check_shape(p, "semantic prediction vs ground truth")?;
        for (&pc, &gc) in p.as_slice().iter().zip(g.as_slice()) {
            if gc == 0 {
                continue;
            }
            if gc as usize > num_classes || pc as usize > num_classes {
                return Err(Error::InvalidInput(format!(
                    "class ID {} exceeds class count {num_classes}",
                    gc.max(pc)
                )));
            }
            gt_count[gc as usize] += 1;
            pred_count[pc as usize] += 1;
            if pc == gc {
                tp[gc as usize] += 1;
            }
        }
    }
    let present: Vec<usize> = (1..=num_classes).filter(|&c| gt_count[c] > 0).collect();
    if present.is_empty() {
        return Ok(SemanticScores {
            miou: 0.0,
            macc: 0.0,
            classes: 0,
        });
    }
    let k = present.len() as f64;
    let miou = present
        .iter()
        .map(|&c| tp[c] as f64 / (gt_count[c] + pred_count[c] - tp[c]) as f64)
        .sum::<f64>()
        / k;
    let macc = present.iter().map(|&c| tp[c] as f64 / gt_count[c] as f64).sum::<f64>() / k;
    Ok(SemanticScores {
        miou,
        macc,
        classes: present.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(v: &[u32]) -> InstancePartition {
        InstancePartition::new(v.to_vec())
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = part(&[1, 1, 2, 2, 0, 3]);
        let pred = part(&[7, 7, 4, 4, 0, 9]);
        let s = average_precision(&pred, &gt).unwrap();
        assert_eq!((s.ap, s.ap50, s.ap25), (1.0, 1.0, 1.0));
    }

    #[test]
    fn half_recall_gives_half_ap() {
        // Hand-computed PR curve: one TP at rank 1, recall 1/2, precision 1.
        let gt = part(&[1, 1, 2, 2]);
        let pred = part(&[5, 5, 0, 0]);
        assert_eq!(average_precision_at(&pred, &gt, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn false_positive_ranked_first_lowers_ap() {
        let gt = part(&[1, 1, 2, 2, 0, 0]);
        let mut pred = part(&[5, 5, 0, 0, 6, 6]);
        pred.confidence.insert(6, 0.9);
        pred.confidence.insert(5, 0.5);
        // ranks: FP (p=0), TP (p=1/2, r=1/2) -> AP = 0.5 * 0.5
        assert_eq!(average_precision_at(&pred, &gt, 0.5).unwrap(), 0.25);
    }

    #[test]
    fn degenerate_empty_cases() {
        assert_eq!(average_precision_at(&part(&[0, 0]), &part(&[0, 0]), 0.5).unwrap(), 1.0);
        assert_eq!(average_precision_at(&part(&[1, 0]), &part(&[0, 0]), 0.5).unwrap(), 0.0);
        assert_eq!(average_precision_at(&part(&[0, 0]), &part(&[1, 0]), 0.5).unwrap(), 0.0);
        assert!(average_precision_at(&part(&[0]), &part(&[1, 0]), 0.5).is_err());
    }

    #[test]
    fn ari_nmi_identical_and_trivial() {
        let a = [1, 1, 2, 2, 3];
        let b = [4, 4, 9, 9, 0];
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert!((nmi(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ari(&[1, 1, 1], &[2, 2, 2]).unwrap(), 1.0);
        assert_eq!(nmi(&[1, 1, 1], &[2, 2, 2]).unwrap(), 1.0);
        assert_eq!(nmi(&[1, 1, 1], &[1, 2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn ari_one_cluster_vs_singletons() {
        // n = 10: index = 0, sum_left = 45, sum_right = 0, expected = 0,
        // max = 22.5 -> ARI = 0 / 22.5 = 0.
        let pred = [1u32; 10];
        let gt: Vec<u32> = (1..=10).collect();
        assert_eq!(ari(&pred, &gt).unwrap(), 0.0);
    }

    #[test]
    fn nmi_independent_product_partition() {
        // Elements indexed (i, j) on a 4x3 grid; pred = i, gt = j.
        let pred: Vec<u32> = (0..12).map(|k| k / 3).collect();
        let gt: Vec<u32> = (0..12).map(|k| k % 3).collect();
        assert!(nmi(&pred, &gt).unwrap().abs() < 1e-9);
        assert!(ari(&pred, &gt).unwrap() <= 0.0);
    }

    #[test]
    fn semantic_scores() {
        let gt = vec![SemanticMap::from_vec(4, 1, vec![1, 1, 2, 2]).unwrap()];
        let same = miou_macc(&gt, &gt, 2).unwrap();
        assert_eq!((same.miou, same.macc), (1.0, 1.0));
        // Class 2 fully predicted as class 1: IoU_1 = 2/4, IoU_2 = 0.
        let wrong = vec![SemanticMap::from_vec(4, 1, vec![1, 1, 1, 1]).unwrap()];
        let s = miou_macc(&wrong, &gt, 2).unwrap();
        assert_eq!((s.miou, s.macc), (0.5 * 0.5, 0.5));
        let background = vec![SemanticMap::filled(4, 1, 0)];
        let s = miou_macc(&background, &gt, 2).unwrap();
        assert_eq!((s.miou, s.macc), (0.0, 0.0));
    }
}
