//! Hierarchical 3D disambiguation of masks that share a rendered instance ID.
//!
//! Masks extracted from every view are grouped by the rendered ID they were
//! filled with. Inside a group, adjacent masks are compared pairwise round
//! after round; each comparison counts nearest-neighbor matches per label
//! pair and merges two labels when the matches exceed half of the smaller
//! label's point count or an absolute floor `tau_n`. The union of both
//! clouds moves on to the next round until one cloud remains. The merge
//! history yields a partition of the group's masks into real objects, which
//! then receive globally unique IDs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::FusedView;
use crate::error::{Error, Result};
use crate::geometry::{backproject, radius_match, voxel_downsample, CameraIntrinsics, LabeledPointCloud, Pose};
use crate::image::{DepthMap, InstanceMap};
use crate::union_find::DisjointSet;

pub const DEFAULT_TAU_D: f64 = 0.075;
pub const DEFAULT_TAU_N: usize = 50;
pub const DEFAULT_VOXEL_SIZE: f64 = 0.05;

/// Address of one 2D label mask: the rendered ID it was filled with, its view
/// and its ID in that view's label map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MaskKey {
    pub rendered_id: u32,
    pub view: usize,
    pub label_id: u32,
}

/// One 3D mask: its voxelized cloud and the index set of 2D masks it stands for.
#[derive(Clone, Debug)]
pub struct MaskRecord {
    /// Globally unique ordinal (≥ 1); every point of `cloud` carries it.
    pub mask_index: u32,
    pub index_set: BTreeSet<MaskKey>,
    pub cloud: LabeledPointCloud,
}

impl MaskRecord {
    /// A record for a single 2D mask; relabels the cloud with `mask_index`.
    pub fn new(mask_index: u32, key: MaskKey, mut cloud: LabeledPointCloud) -> Self {
        for p in cloud.points_mut() {
            p.label = mask_index;
            p.mask_index = mask_index;
        }
        Self {
            mask_index,
            index_set: BTreeSet::from([key]),
            cloud,
        }
    }

    fn view(&self) -> usize {
        self.index_set.iter().map(|k| k.view).min().unwrap_or(0)
    }
}

/// All 3D masks filled with one rendered ID, in view order.
#[derive(Clone, Debug)]
pub struct MaskGroup {
    pub rendered_id: u32,
    pub records: Vec<MaskRecord>,
}

/// Matched-point counts per `(label in a, label in b)`.
pub type OverlapTable = BTreeMap<(u32, u32), usize>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MergeRule {
    /// Matches exceed half of the smaller label's point count.
    HalfOverlap,
    /// Matches exceed the absolute floor `tau_n` (and not the half rule).
    MinMatches,
}

impl fmt::Display for MergeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeRule::HalfOverlap => "half",
            MergeRule::MinMatches => "tau_n",
        })
    }
}

/// One positive decision of [`compare_pair`]: `absorbed` joins `winner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairMerge {
    pub winner: u32,
    pub absorbed: u32,
    pub overlap: usize,
    pub rule: MergeRule,
}

/// A [`PairMerge`] located in the hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MergeEvent {
    pub round: usize,
    pub group: u32,
    pub merge: PairMerge,
}

impl fmt::Display for MergeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.round,
            self.group,
            self.merge.winner,
            self.merge.absorbed,
            self.merge.overlap,
            self.merge.rule
        )
    }
}

/// Line-oriented merge log: a header, then one event per line.
pub fn format_merge_log(events: &[MergeEvent]) -> String {
    let mut out = String::from("# round group winner absorbed overlap rule\n");
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisambiguationParams {
    /// Maximum distance between matched points, meters.
    pub tau_d: f64,
    /// Absolute match-count floor above which two labels merge.
    pub tau_n: usize,
}

impl Default for DisambiguationParams {
    fn default() -> Self {
        Self {
            tau_d: DEFAULT_TAU_D,
            tau_n: DEFAULT_TAU_N,
        }
    }
}

impl DisambiguationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_d > 0.0 && self.tau_d.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tau_d must be positive, got {}",
                self.tau_d
            )));
        }
        Ok(())
    }
}

/// Order in which a group's masks enter the first round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MaskOrder {
    /// By view index, then label ID.
    #[default]
    Timestamp,
    /// A seeded shuffle of the timestamp order.
    Shuffled(u64),
}

/// Counts matched points per label pair.
pub fn overlap_table(a: &LabeledPointCloud, b: &LabeledPointCloud, pairs: &[(usize, usize)]) -> OverlapTable {
    let mut table = OverlapTable::new();
    for &(ia, ib) in pairs {
        let key = (a.points()[ia].label, b.points()[ib].label);
        *table.entry(key).or_insert(0) += 1;
    }
    table
}

/// Compares two clouds and returns their union with merged labels relabeled
/// to the smallest label of each merged set, plus the positive decisions.
///
/// Label point counts for the half rule are taken from the clouds as passed
/// in, before any relabeling done by this comparison.
pub fn compare_pair(
    a: &LabeledPointCloud,
    b: &LabeledPointCloud,
    params: &DisambiguationParams,
) -> (LabeledPointCloud, Vec<PairMerge>) {
    let pairs = radius_match(a, b, params.tau_d);
    let table = overlap_table(a, b, &pairs);
    let counts_a = a.label_counts();
    let counts_b = b.label_counts();

    let mut merges = Vec::new();
    for (&(la, lb), &overlap) in &table {
        let smaller = counts_a[&la].min(counts_b[&lb]);
        let rule = if 2 * overlap > smaller {
            MergeRule::HalfOverlap
        } else if overlap > params.tau_n {
            MergeRule::MinMatches
        } else {
            continue;
        };
        merges.push(PairMerge {
            winner: la,
            absorbed: lb,
            overlap,
            rule,
        });
    }

    let mut union = a.clone();
    union.append(b.clone());
    if !merges.is_empty() {
        let canonical = resolve_labels(&merges);
        union.relabel(|l| canonical.get(&l).copied().unwrap_or(l));
    }
    (union, merges)
}

/// Maps every label touched by `merges` to the smallest label of its set.
fn resolve_labels(merges: &[PairMerge]) -> BTreeMap<u32, u32> {
    let labels: Vec<u32> = merges
        .iter()
        .flat_map(|m| [m.winner, m.absorbed])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let slot = |l: u32| labels.binary_search(&l).expect("label collected above");
    let mut sets = DisjointSet::new(labels.len());
    for m in merges {
        sets.union(slot(m.winner), slot(m.absorbed));
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, labels[sets.find(i)]))
        .collect()
}

/// Result of disambiguating one group.
#[derive(Clone, Debug)]
pub struct GroupResult {
    pub rendered_id: u32,
    /// Index sets of the corrected masks, one per real object, ordered by
    /// their smallest mask ordinal.
    pub blocks: Vec<BTreeSet<MaskKey>>,
    pub events: Vec<MergeEvent>,
    /// Union of all masks with labels resolved to each block's smallest
    /// mask ordinal.
    pub cloud: LabeledPointCloud,
}

/// Runs the hierarchical pairwise comparison over one group.
pub fn disambiguate_group(group: &MaskGroup, params: &DisambiguationParams, order: MaskOrder) -> Result<GroupResult> {
    params.validate()?;
    if group.records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "group {} has no masks",
            group.rendered_id
        )));
    }
    let mut records: Vec<&MaskRecord> = group.records.iter().collect();
    records.sort_by_key(|r| (r.view(), r.mask_index));
    if let MaskOrder::Shuffled(seed) = order {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(group.rendered_id) << 32));
        records.shuffle(&mut rng);
    }

    let ordinals: Vec<u32> = {
        let mut v: Vec<u32> = records.iter().map(|r| r.mask_index).collect();
        v.sort_unstable();
        v
    };
    if ordinals.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Consistency(format!(
            "group {} repeats a mask ordinal",
            group.rendered_id
        )));
    }
    let slot = |l: u32| {
        ordinals
            .binary_search(&l)
            .map_err(|_| Error::Consistency(format!("label {l} is not a mask of group {}", group.rendered_id)))
    };
    let mut sets = DisjointSet::new(ordinals.len());
    let mut events = Vec::new();

    let mut level: Vec<LabeledPointCloud> = records.iter().map(|r| r.cloud.clone()).collect();
    let mut round = 0;
    while level.len() > 1 {
        let compared: Vec<(LabeledPointCloud, Vec<PairMerge>)> = level
            .par_chunks(2)
            .map(|chunk| match chunk {
                [a, b] => compare_pair(a, b, params),
                [single] => (single.clone(), Vec::new()),
                _ => unreachable!("chunks of two"),
            })
            .collect();
        level = Vec::with_capacity(compared.len());
        for (cloud, merges) in compared {
            for merge in merges {
                sets.union(slot(merge.winner)?, slot(merge.absorbed)?);
                events.push(MergeEvent {
                    round,
                    group: group.rendered_id,
                    merge,
                });
            }
            level.push(cloud);
        }
        round += 1;
    }

    let by_ordinal: BTreeMap<u32, &MaskRecord> = records.iter().map(|r| (r.mask_index, *r)).collect();
    let blocks = sets
        .groups()
        .into_iter()
        .map(|members| {
            members
                .into_iter()
                .flat_map(|i| by_ordinal[&ordinals[i]].index_set.iter().copied())
                .collect()
        })
        .collect();
    Ok(GroupResult {
        rendered_id: group.rendered_id,
        blocks,
        events,
        cloud: level.pop().unwrap_or_default(),
    })
}

/// Disambiguates every group in parallel; results are in group order.
pub fn disambiguate_all(groups: &[MaskGroup], params: &DisambiguationParams, order: MaskOrder) -> Result<Vec<GroupResult>> {
    groups
        .par_iter()
        .map(|g| disambiguate_group(g, params, order))
        .collect()
}

/// Back-projects every label mask of every view, voxelizes it and groups the
/// resulting 3D masks by the rendered ID their 2D mask was filled with.
///
/// Mask ordinals are assigned from 1 in (view, label ID) order.
pub fn extract_groups(
    views: &[FusedView],
    depths: &[DepthMap],
    intrinsics: &CameraIntrinsics,
    poses: &[Pose],
    voxel_size: f64,
) -> Result<Vec<MaskGroup>> {
    if views.len() != depths.len() || views.len() != poses.len() {
        return Err(Error::dimension(
            "views vs depth maps vs poses",
            views.len(),
            format!("{} depth maps, {} poses", depths.len(), poses.len()),
        ));
    }
    let per_view: Vec<BTreeMap<u32, LabeledPointCloud>> = views
        .par_iter()
        .zip(depths.par_iter().zip(poses.par_iter()))
        .map(|(view, (depth, pose))| -> Result<_> {
            let mut parts = backproject(depth, intrinsics, pose, &view.label)?.split_by_label();
            let mut out = BTreeMap::new();
            for &t in view.assignment.keys() {
                let cloud = parts.remove(&t).unwrap_or_default();
                out.insert(t, voxel_downsample(&cloud, voxel_size)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut groups: BTreeMap<u32, Vec<MaskRecord>> = BTreeMap::new();
    let mut ordinal = 0u32;
    for (n, (view, clouds)) in views.iter().zip(per_view).enumerate() {
        for (t, cloud) in clouds {
            ordinal += 1;
            let u = view.assignment[&t];
            let key = MaskKey {
                rendered_id: u,
                view: n,
                label_id: t,
            };
            groups.entry(u).or_default().push(MaskRecord::new(ordinal, key, cloud));
        }
    }
    Ok(groups
        .into_iter()
        .map(|(rendered_id, records)| MaskGroup { rendered_id, records })
        .collect())
}

/// Global instance ID per 2D mask, after disambiguation.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedMaps {
    pub maps: Vec<InstanceMap>,
    /// `(view, label ID) → global ID` for every label mask.
    pub global_ids: BTreeMap<(usize, u32), u32>,
    /// Number of global IDs handed out; IDs are `1..=num_instances`.
    pub num_instances: u32,
}

/// Gives each block a fresh global ID (in the order given) and rewrites the
/// label maps. Masks no block mentions receive singleton IDs after that.
pub fn correct_maps(blocks: &[BTreeSet<MaskKey>], views: &[FusedView]) -> Result<CorrectedMaps> {
    let mut global_ids: BTreeMap<(usize, u32), u32> = BTreeMap::new();
    let mut next = 1u32;
    for block in blocks {
        for key in block {
            let view = views.get(key.view).ok_or_else(|| {
                Error::Consistency(format!("mask {key:?} refers to missing view {}", key.view))
            })?;
            match view.assignment.get(&key.label_id) {
                Some(&u) if u == key.rendered_id => {}
                _ => {
                    return Err(Error::Consistency(format!(
                        "mask {key:?} does not exist in the fused map of view {}",
                        key.view
                    )))
                }
            }
            if global_ids.insert((key.view, key.label_id), next).is_some() {
                return Err(Error::Consistency(format!("mask {key:?} appears in two blocks")));
            }
        }
        next += 1;
    }
    for (n, view) in views.iter().enumerate() {
        for &t in view.assignment.keys() {
            global_ids.entry((n, t)).or_insert_with(|| {
                next += 1;
                next - 1
            });
        }
    }
    let maps = views
        .iter()
        .enumerate()
        .map(|(n, view)| view.label.map(|&t| if t == 0 { 0 } else { global_ids[&(n, t)] }))
        .collect();
    Ok(CorrectedMaps {
        maps,
        global_ids,
        num_instances: next - 1,
    })
}
