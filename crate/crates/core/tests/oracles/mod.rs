//! Independent reference implementations used by the integration and
//! acceptance tests. Each one is written from the metric's textbook
//! definition with naive data structures, sharing no code with the library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use idfuse::disambiguation::{MaskGroup, MaskKey, MaskRecord};
use idfuse::geometry::{LabeledPoint, LabeledPointCloud};
use rand::seq::SliceRandom;
use rand::Rng;

/// ARI from raw pair counts over all element pairs.
pub fn ari_pairs(pred: &[u32], gt: &[u32]) -> f64 {
    let n = pred.len();
    let (mut both, mut only_pred, mut only_gt, mut neither) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            match (pred[i] == pred[j], gt[i] == gt[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_pred += 1.0,
                (false, true) => only_gt += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let denom = (both + only_pred) * (only_pred + neither) + (both + only_gt) * (only_gt + neither);
    if denom == 0.0 {
        return if same_partition(pred, gt) { 1.0 } else { 0.0 };
    }
    2.0 * (both * neither - only_pred * only_gt) / denom
}

/// True when two labelings induce the same partition.
pub fn same_partition(a: &[u32], b: &[u32]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// NMI from explicit probability sums in base 2, arithmetic-mean
/// normalization.
pub fn nmi_direct(pred: &[u32], gt: &[u32]) -> f64 {
    let n = pred.len() as f64;
    if pred.is_empty() {
        return 1.0;
    }
    let values = |v: &[u32]| v.iter().copied().collect::<BTreeSet<u32>>();
    let p_of = |v: &[u32], x: u32| v.iter().filter(|&&y| y == x).count() as f64 / n;
    let h = |v: &[u32]| -> f64 {
        values(v)
            .into_iter()
            .map(|x| {
                let p = p_of(v, x);
                -p * p.log2()
            })
            .sum()
    };
    let (hp, hg) = (h(pred), h(gt));
    if hp == 0.0 || hg == 0.0 {
        return if same_partition(pred, gt) { 1.0 } else { 0.0 };
    }
    let mut mi = 0.0;
    for a in values(pred) {
        for b in values(gt) {
            let joint = pred.iter().zip(gt).filter(|(&x, &y)| x == a && y == b).count() as f64 / n;
            if joint > 0.0 {
                mi += joint * (joint / (p_of(pred, a) * p_of(gt, b))).log2();
            }
        }
    }
    (2.0 * mi / (hp + hg)).clamp(0.0, 1.0)
}

fn pixel_sets(labels: &[u32]) -> BTreeMap<u32, HashSet<usize>> {
    let mut sets: BTreeMap<u32, HashSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            sets.entry(l).or_default().insert(i);
        }
    }
    sets
}

/// AP at one threshold: IoU from explicit pixel sets, greedy matching in
/// ranked order (ties by first pixel), precision envelope taken as the best precision at any rank
/// at or after each true positive.
pub fn ap_reference(pred: &[u32], gt: &[u32], confidence: &BTreeMap<u32, f64>, threshold: f64) -> f64 {
    let p_sets = pixel_sets(pred);
    let g_sets = pixel_sets(gt);
    if g_sets.is_empty() {
        return if p_sets.is_empty() { 1.0 } else { 0.0 };
    }
    let iou = |p: u32, g: u32| {
        let (ps, gs) = (&p_sets[&p], &g_sets[&g]);
        ps.intersection(gs).count() as f64 / ps.union(gs).count() as f64
    };
    let conf = |p: u32| confidence.get(&p).copied().unwrap_or(1.0);
    let best = |p: u32| g_sets.keys().map(|&g| iou(p, g)).fold(0.0, f64::max);
    let first = |v: &[u32], id: u32| v.iter().position(|&x| x == id).unwrap();
    let mut ranked: Vec<u32> = p_sets.keys().copied().collect();
    ranked.sort_by(|&a, &b| {
        conf(b)
            .partial_cmp(&conf(a))
            .unwrap()
            .then(best(b).partial_cmp(&best(a)).unwrap())
            .then(first(pred, a).cmp(&first(pred, b)))
    });
    let mut taken = BTreeSet::new();
    let mut hits = Vec::new();
    for p in ranked {
        let mut choice: Option<(u32, f64)> = None;
        let mut candidates: Vec<u32> = g_sets.keys().copied().collect();
        candidates.sort_by_key(|&g| first(gt, g));
        for g in candidates {
            let v = iou(p, g);
            if v >= threshold && !taken.contains(&g) && choice.is_none_or(|(_, cv)| v > cv) {
                choice = Some((g, v));
            }
        }
        if let Some((g, _)) = choice {
            taken.insert(g);
        }
        hits.push(choice.is_some());
    }
    let precision_at = |k: usize| hits[..=k].iter().filter(|&&h| h).count() as f64 / (k + 1) as f64;
    let mut ap = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            let envelope = (k..hits.len()).map(precision_at).fold(0.0, f64::max);
            ap += envelope / g_sets.len() as f64;
        }
    }
    ap
}

/// Mean IoU and mean accuracy over GT-present classes, ignoring GT-0 pixels.
pub fn miou_reference(pred: &[u32], gt: &[u32], num_classes: u32) -> (f64, f64) {
    let mut ious = Vec::new();
    let mut accs = Vec::new();
    for c in 1..=num_classes {
        let in_gt: HashSet<usize> = (0..gt.len()).filter(|&i| gt[i] == c).collect();
        if in_gt.is_empty() {
            continue;
        }
        let in_pred: HashSet<usize> = (0..gt.len()).filter(|&i| gt[i] != 0 && pred[i] == c).collect();
        let inter = in_gt.intersection(&in_pred).count() as f64;
        ious.push(inter / in_gt.union(&in_pred).count() as f64);
        accs.push(inter / in_gt.len() as f64);
    }
    if ious.is_empty() {
        return (0.0, 0.0);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&ious), mean(&accs))
}

/// Nearest-neighbor matching by exhaustive search, same tie and side rules
/// as the library: query the smaller cloud (`a` on equal sizes), strict
/// radius, nearest then smallest index, pairs as sorted `(a, b)`.
pub fn radius_match_brute(a: &LabeledPointCloud, b: &LabeledPointCloud, tau: f64) -> Vec<(usize, usize)> {
    let (query, target, swapped) = if b.len() < a.len() { (b, a, true) } else { (a, b, false) };
    let mut pairs = Vec::new();
    for (qi, q) in query.points().iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (ti, t) in target.points().iter().enumerate() {
            let d = (q.position - t.position).norm();
            if d < tau && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, ti));
            }
        }
        if let Some((_, ti)) = best {
            pairs.push(if swapped { (ti, qi) } else { (qi, ti) });
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Minimum total cost over all permutations of a square matrix.
pub fn min_cost_by_permutation(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], col: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if col == cost.len() {
            *best = best.min(acc);
            return;
        }
        for row in 0..cost.len() {
            if !used[row] {
                used[row] = true;
                rec(cost, col + 1, used, acc + cost[row][col], best);
                used[row] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

/// Partition as a set of blocks, for order-free comparison.
pub fn normalize(blocks: &[BTreeSet<MaskKey>]) -> BTreeSet<BTreeSet<MaskKey>> {
    blocks.iter().cloned().collect()
}

/// A group whose true partition is known and whose masks overlap strongly
/// enough that every pair of masks of one object satisfies the half rule,
/// while masks of different objects are far apart. On such groups the merge
/// outcome does not depend on comparison order.
///
/// Each object is a grid of points at voxel centers; each mask covers a
/// window of at least 80% of its object's columns, with sub-voxel jitter.
pub struct ConsistentGroup {
    pub group: MaskGroup,
    pub truth: BTreeSet<BTreeSet<MaskKey>>,
}

pub fn consistent_group(rng: &mut impl Rng, max_masks: usize) -> ConsistentGroup {
    let num_masks = rng.random_range(1..=max_masks);
    let num_objects = rng.random_range(1..=num_masks.min(4));
    let mut owner: Vec<usize> = (0..num_masks).map(|i| i % num_objects).collect();
    owner.shuffle(rng);
    let shapes: Vec<(usize, usize)> = (0..num_objects)
        .map(|_| (rng.random_range(5..=14), rng.random_range(2..=8)))
        .collect();

    let mut records = Vec::new();
    let mut truth: Vec<BTreeSet<MaskKey>> = vec![BTreeSet::new(); num_objects];
    for (m, &obj) in owner.iter().enumerate() {
        let (nx, ny) = shapes[obj];
        let width = rng.random_range(((nx * 4).div_ceil(5))..=nx);
        let start = rng.random_range(0..=nx - width);
        let mut points = Vec::new();
        for i in start..start + width {
            for j in 0..ny {
                let jitter = |rng: &mut dyn rand::RngCore| rng.random_range(-0.005..0.005);
                points.push(LabeledPoint::new(
                    obj as f64 * 2.0 + (i as f64 + 0.5) * 0.05 + jitter(rng),
                    (j as f64 + 0.5) * 0.05 + jitter(rng),
                    0.025 + jitter(rng),
                    0,
                    0,
                ));
            }
        }
        let key = MaskKey {
            rendered_id: 1,
            view: m,
            label_id: 1,
        };
        truth[obj].insert(key);
        records.push(MaskRecord::new(m as u32 + 1, key, LabeledPointCloud::from_points(points)));
    }
    ConsistentGroup {
        group: MaskGroup {
            rendered_id: 1,
            records,
        },
        truth: truth.into_iter().collect(),
    }
}
