//! Label alignment between per-pixel instance distributions and crisp label
//! maps (soft-IoU and cross-entropy costs solved by the Hungarian method),
//! and fusion of rendered ID maps with label maps by largest overlap.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image::InstanceMap;

/// Probabilities are clamped to `[LOG_EPS, 1 - LOG_EPS]` before taking logs.
pub const LOG_EPS: f64 = 1e-7;

/// Per-pixel distribution over instance slots. Slot 0 means "empty".
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    num_slots: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    /// `data` is pixel-major: `data[(v * width + u) * num_slots + slot]`.
    pub fn new(width: usize, height: usize, num_slots: usize, data: Vec<f64>) -> Result<Self> {
        if num_slots < 2 {
            return Err(Error::InvalidInput(
                "probability map needs the empty slot plus at least one instance slot".into(),
            ));
        }
        if data.len() != width * height * num_slots {
            return Err(Error::dimension(
                "probability map buffer",
                width * height * num_slots,
                data.len(),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            num_slots,
            data,
        })
    }

    /// Number of usable instance slots `U` (excluding the empty slot).
    pub fn instance_slots(&self) -> usize {
        self.num_slots - 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn prob(&self, pixel: usize, slot: usize) -> f64 {
        self.data[pixel * self.num_slots + slot]
    }

    fn check_label(&self, label: &InstanceMap) -> Result<()> {
        if label.width() != self.width || label.height() != self.height {
            return Err(Error::dimension(
                "probability map vs label map",
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", label.height(), label.width()),
            ));
        }
        Ok(())
    }
}

/// `U × T` matrix of costs; row `r` is instance slot `r + 1`, column `c` is
/// label instance `c + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dimension("cost matrix buffer", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cost matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Element-wise sum of two equally shaped matrices.
    pub fn add(&self, other: &CostMatrix) -> Result<CostMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::dimension(
                "cost matrix sum",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        CostMatrix::new(self.rows, self.cols, data)
    }

    /// Total cost of an assignment returned by [`hungarian_assign`].
    pub fn assignment_cost(&self, assignment: &[usize]) -> f64 {
        assignment
            .iter()
            .enumerate()
            .map(|(col, &row)| self.get(row, col))
            .sum()
    }
}

/// Per-(slot, label) sums shared by both costs: `Σ y`, `Σ M` and `Σ y·M`.
struct OverlapSums {
    pred_sum: Vec<f64>,
    label_count: Vec<f64>,
    joint: Vec<f64>,
}

fn overlap_sums(pred: &ProbabilityMap, label: &InstanceMap) -> Result<(usize, usize, OverlapSums)> {
    pred.check_label(label)?;
    let slots = pred.instance_slots();
    let labels = label.max_id() as usize;
    let mut sums = OverlapSums {
        pred_sum: vec![0.0; slots],
        label_count: vec![0.0; labels],
        joint: vec![0.0; slots * labels],
    };
    for (pixel, &t) in label.as_slice().iter().enumerate() {
        if t > 0 {
            sums.label_count[t as usize - 1] += 1.0;
        }
        for u in 0..slots {
            let y = pred.prob(pixel, u + 1);
            sums.pred_sum[u] += y;
            if t > 0 {
                sums.joint[u * labels + t as usize - 1] += y;
            }
        }
    }
    Ok((slots, labels, sums))
}

/// Negative soft IoU between every instance slot and every label mask.
///
/// Entries lie in `[-1, 0]`; an empty slot against an empty mask scores 0.
pub fn siou_cost(pred: &ProbabilityMap, label: &InstanceMap) -> Result<CostMatrix> {
    let (slots, labels, sums) = overlap_sums(pred, label)?;
    CostMatrix::from_fn(slots, labels, |u, t| {
        let inter = sums.joint[u * labels + t];
        let union = sums.pred_sum[u] + sums.label_count[t] - inter;
        if union <= 0.0 {
            0.0
        } else {
            -inter / union
        }
    })
}

/// Mean binary cross-entropy between every slot's probability channel and
/// every one-hot label channel, over all pixels.
pub fn ce_cost(pred: &ProbabilityMap, label: &InstanceMap) -> Result<CostMatrix> {
    pred.check_label(label)?;
    let slots = pred.instance_slots();
    let labels = label.max_id() as usize;
    let pixels = label.len();
    if pixels == 0 {
        return CostMatrix::new(slots, labels, vec![0.0; slots * labels]);
    }
    // Σ_j log(1 - y) over all pixels, then correct the pixels inside mask t:
    // for those, log(1 - y) is replaced by log(y).
    let mut neg_sum = vec![0.0; slots];
    let mut inside = vec![0.0; slots * labels];
    for (pixel, &t) in label.as_slice().iter().enumerate() {
        for u in 0..slots {
            let y = pred.prob(pixel, u + 1).clamp(LOG_EPS, 1.0 - LOG_EPS);
            let log_neg = (1.0 - y).ln();
            neg_sum[u] += log_neg;
            if t > 0 {
                inside[u * labels + t as usize - 1] += y.ln() - log_neg;
            }
        }
    }
    let j = pixels as f64;
    CostMatrix::from_fn(slots, labels, |u, t| {
        (-(neg_sum[u] + inside[u * labels + t]) / j).max(0.0)
    })
}

/// Minimum-cost injective assignment of columns (label instances) to rows
/// (instance slots). Returns the row chosen for each column.
pub fn hungarian_assign(cost: &CostMatrix) -> Result<Vec<usize>> {
    let n = cost.cols();
    let m = cost.rows();
    if n > m {
        return Err(Error::Capacity { labels: n, slots: m });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Shortest augmenting path with potentials; 1-based, index 0 is a sentinel.
    // Worker i = column i of `cost`, job j = row j of `cost`.
    let at = |i: usize, j: usize| cost.get(j - 1, i - 1);
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = at(i0, j) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Aligns label instances `1..=T` to instance slots by minimizing the summed
/// soft-IoU and cross-entropy costs. Returns `label ID → slot ID`.
pub fn align_labels(pred: &ProbabilityMap, label: &InstanceMap) -> Result<BTreeMap<u32, u32>> {
    let cost = siou_cost(pred, label)?.add(&ce_cost(pred, label)?)?;
    let assignment = hungarian_assign(&cost)?;
    Ok(assignment
        .into_iter()
        .enumerate()
        .map(|(t, u)| (t as u32 + 1, u as u32 + 1))
        .collect())
}

/// For each label mask, the rendered ID it overlaps most (background never
/// counts; ties go to the smallest ID). Masks with no rendered overlap draw a
/// fresh ID from `next_fresh_id`.
pub fn fill_assignment(
    label: &InstanceMap,
    rendered: &InstanceMap,
    next_fresh_id: &mut u32,
) -> Result<BTreeMap<u32, u32>> {
    label.check_shape(rendered, "overlap fill label vs rendered")?;
    let mut overlap: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&t, &u) in label.as_slice().iter().zip(rendered.as_slice()) {
        if t == 0 {
            continue;
        }
        let counts = overlap.entry(t).or_default();
        if u > 0 {
            *counts.entry(u).or_insert(0) += 1;
        }
    }
    Ok(overlap
        .into_iter()
        .map(|(t, counts)| {
            // BTreeMap iterates IDs ascending, so `max_by` on (count, -id)
            // keeps the smallest ID among equal counts.
            let best = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&u, _)| u);
            let u = best.unwrap_or_else(|| {
                let fresh = *next_fresh_id;
                *next_fresh_id += 1;
                fresh
            });
            (t, u)
        })
        .collect())
}

/// Rewrites every label mask with the rendered ID it overlaps most.
pub fn overlap_fill(
    label: &InstanceMap,
    rendered: &InstanceMap,
    next_fresh_id: &mut u32,
) -> Result<InstanceMap> {
    let assignment = fill_assignment(label, rendered, next_fresh_id)?;
    Ok(label.map(|&t| if t == 0 { 0 } else { assignment[&t] }))
}

/// A crisp label map together with the rendered ID each of its masks was
/// filled with. Keeping the label map lets later stages address individual
/// label masks even when two of them were filled with the same ID.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedView {
    pub label: InstanceMap,
    pub assignment: BTreeMap<u32, u32>,
}

impl FusedView {
    pub fn new(label: InstanceMap, rendered: &InstanceMap, next_fresh_id: &mut u32) -> Result<Self> {
        let assignment = fill_assignment(&label, rendered, next_fresh_id)?;
        Ok(Self { label, assignment })
    }

    /// The fused map: every label mask painted with its assigned rendered ID.
    pub fn fused_map(&self) -> InstanceMap {
        self.label
            .map(|&t| if t == 0 { 0 } else { self.assignment[&t] })
    }
}
