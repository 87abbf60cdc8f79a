use std::collections::BTreeMap;

use nalgebra::Point3;

use crate::error::{Error, Result};

/// A world-frame point carrying its current instance label and the ordinal
/// of the mask it was extracted from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledPoint {
    pub position: Point3<f64>,
    pub label: u32,
    pub mask_index: u32,
}

impl LabeledPoint {
    pub fn new(x: f64, y: f64, z: f64, label: u32, mask_index: u32) -> Self {
        Self {
            position: Point3::new(x, y, z),
            label,
            mask_index,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPointCloud {
    points: Vec<LabeledPoint>,
}

impl LabeledPointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<LabeledPoint>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [LabeledPoint] {
        &mut self.points
    }

    pub fn into_points(self) -> Vec<LabeledPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, point: LabeledPoint) {
        self.points.push(point);
    }

    /// Appends all points of `other` (set union of two masks' clouds).
    pub fn append(&mut self, mut other: LabeledPointCloud) {
        self.points.append(&mut other.points);
    }

    /// Number of points per label.
    pub fn label_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for p in &self.points {
            *counts.entry(p.label).or_insert(0) += 1;
        }
        counts
    }

    /// Rewrites every label through `f`.
    pub fn relabel(&mut self, mut f: impl FnMut(u32) -> u32) {
        for p in &mut self.points {
            p.label = f(p.label);
        }
    }

    /// Splits the cloud by label, preserving point order within each part.
    pub fn split_by_label(self) -> BTreeMap<u32, LabeledPointCloud> {
        let mut parts: BTreeMap<u32, LabeledPointCloud> = BTreeMap::new();
        for p in self.points {
            parts.entry(p.label).or_default().push(p);
        }
        parts
    }

    /// Checks that coordinates are finite and labels are positive.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.position.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidInput(format!("point {i} is not finite")));
            }
            if p.label == 0 {
                return Err(Error::InvalidInput(format!("point {i} has label 0")));
            }
        }
        Ok(())
    }
}

impl FromIterator<LabeledPoint> for LabeledPointCloud {
    fn from_iter<I: IntoIterator<Item = LabeledPoint>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}
