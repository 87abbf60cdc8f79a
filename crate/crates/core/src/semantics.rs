//! Instance-to-class voting: every instance votes, per view, for the class it
//! overlaps most; the class with the most votes across views wins.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{InstanceMap, SemanticMap};

/// `Ū × C` vote tallies; instance IDs `1..=Ū`, class IDs `1..=C`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteMatrix {
    num_instances: usize,
    num_classes: usize,
    counts: Vec<u32>,
}

impl VoteMatrix {
    pub fn zeros(num_instances: usize, num_classes: usize) -> Self {
        Self {
            num_instances,
            num_classes,
            counts: vec![0; num_instances * num_classes],
        }
    }

    pub fn num_instances(&self) -> usize {
        self.num_instances
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Votes of instance `u` for class `c` (both 1-based).
    pub fn get(&self, u: u32, c: u32) -> u32 {
        self.counts[self.offset(u, c)]
    }

    fn offset(&self, u: u32, c: u32) -> usize {
        assert!(u >= 1 && (u as usize) <= self.num_instances, "instance {u} out of range");
        assert!(c >= 1 && (c as usize) <= self.num_classes, "class {c} out of range");
        (u as usize - 1) * self.num_classes + (c as usize - 1)
    }

    pub fn row(&self, u: u32) -> &[u32] {
        let start = (u as usize - 1) * self.num_classes;
        &self.counts[start..start + self.num_classes]
    }

    pub fn row_sum(&self, u: u32) -> u32 {
        self.row(u).iter().sum()
    }

    pub fn add_assign(&mut self, other: &VoteMatrix) -> Result<()> {
        if self.num_instances != other.num_instances || self.num_classes != other.num_classes {
            return Err(Error::dimension(
                "vote matrix sum",
                format!("{}x{}", self.num_instances, self.num_classes),
                format!("{}x{}", other.num_instances, other.num_classes),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Non-zero entries as `(instance, class, votes)`, row-major.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        self.counts.iter().enumerate().filter(|(_, &v)| v > 0).map(|(i, &v)| {
            (
                (i / self.num_classes) as u32 + 1,
                (i % self.num_classes) as u32 + 1,
                v,
            )
        })
    }
}

/// One view's votes: each instance present votes once for the class it
/// overlaps most (ties to the smallest class). Instances that only cover
/// unlabeled pixels abstain.
pub fn vote_single_view(
    instances: &InstanceMap,
    classes: &SemanticMap,
    num_instances: usize,
    num_classes: usize,
) -> Result<VoteMatrix> {
    instances.check_shape(classes, "voting instance vs semantic map")?;
    let mut overlap: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&u, &c) in instances.as_slice().iter().zip(classes.as_slice()) {
        if u == 0 || c == 0 {
            continue;
        }
        if u as usize > num_instances {
            return Err(Error::InvalidInput(format!(
                "instance ID {u} exceeds vote matrix rows {num_instances}"
            )));
        }
        if c as usize > num_classes {
            return Err(Error::InvalidInput(format!(
                "class ID {c} exceeds class count {num_classes}"
            )));
        }
        *overlap.entry(u).or_default().entry(c).or_insert(0) += 1;
    }
    let mut votes = VoteMatrix::zeros(num_instances, num_classes);
    for (u, counts) in overlap {
        if let Some((&c, _)) = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))) {
            let at = votes.offset(u, c);
            votes.counts[at] = 1;
        }
    }
    Ok(votes)
}

/// Sums per-view votes.
pub fn aggregate(votes: &[VoteMatrix]) -> Result<VoteMatrix> {
    let mut iter = votes.iter();
    let Some(first) = iter.next() else {
        return Ok(VoteMatrix::zeros(0, 0));
    };
    let mut total = first.clone();
    for v in iter {
        total.add_assign(v)?;
    }
    Ok(total)
}

/// Class with the most votes per instance (ties to the smallest class ID,
/// `0` when an instance received no vote).
pub fn assign_classes(total: &VoteMatrix) -> BTreeMap<u32, u32> {
    (1..=total.num_instances as u32)
        .map(|u| {
            let row = total.row(u);
            let best = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(c, _)| c as u32 + 1)
                .unwrap_or(0);
            (u, best)
        })
        .collect()
}

/// [`aggregate`] followed by [`assign_classes`].
pub fn aggregate_and_assign(votes: &[VoteMatrix]) -> Result<BTreeMap<u32, u32>> {
    Ok(assign_classes(&aggregate(votes)?))
}

/// Reads a class-names file: line `k` (1-based) names class `k`.
pub fn read_class_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.trim().to_string()).collect())
}
