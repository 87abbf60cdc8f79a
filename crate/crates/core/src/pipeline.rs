//! End-to-end orchestration over a [`SceneBundle`]: overlap fill per view,
//! per-mask back-projection and voxelization, grouping by rendered ID,
//! disambiguation, map correction, semantic voting and evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::FusedView;
use crate::bundle::SceneBundle;
use crate::disambiguation::{
    correct_maps, disambiguate_all, extract_groups, CorrectedMaps, DisambiguationParams, MaskGroup, MaskOrder,
    MergeEvent, MergeRule, DEFAULT_TAU_D, DEFAULT_TAU_N, DEFAULT_VOXEL_SIZE,
};
use crate::error::{Error, Result};
use crate::evaluation::{ari, average_precision, miou_macc, nmi, ApSummary, InstancePartition};
use crate::geometry::LabeledPointCloud;
use crate::image::{InstanceMap, SemanticMap};
use crate::semantics::{aggregate, assign_classes, vote_single_view, VoteMatrix};
use crate::synthetic::{synthesize_rendered, CorruptionSpec};

pub const DEFAULT_MAX_INSTANCES: u32 = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeOrder {
    #[default]
    Timestamp,
    Shuffled,
}

impl MergeOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeOrder::Timestamp => "timestamp",
            MergeOrder::Shuffled => "shuffled",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub tau_d: f64,
    pub tau_n: usize,
    pub voxel_size: f64,
    /// Number of rendered ID slots `U`.
    pub max_instances: u32,
    pub order: MergeOrder,
    pub seed: u64,
    /// Used only to synthesize rendered maps from ground truth when the
    /// bundle has none.
    pub corruption: CorruptionSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_d: DEFAULT_TAU_D,
            tau_n: DEFAULT_TAU_N,
            voxel_size: DEFAULT_VOXEL_SIZE,
            max_instances: DEFAULT_MAX_INSTANCES,
            order: MergeOrder::Timestamp,
            seed: 0,
            corruption: CorruptionSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "voxel size must be positive, got {}",
                self.voxel_size
            )));
        }
        if self.max_instances == 0 {
            return Err(Error::InvalidInput("max instances must be at least 1".into()));
        }
        self.corruption.validate()
    }

    pub fn params(&self) -> DisambiguationParams {
        DisambiguationParams {
            tau_d: self.tau_d,
            tau_n: self.tau_n,
        }
    }

    pub fn mask_order(&self) -> MaskOrder {
        match self.order {
            MergeOrder::Timestamp => MaskOrder::Timestamp,
            MergeOrder::Shuffled => MaskOrder::Shuffled(self.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReportValue {
    Int(i64),
    Float(f64),
    Text(String),
}

/// Ordered flat key-value metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, ReportValue)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn int(&mut self, key: impl Into<String>, value: impl TryInto<i64>) {
        let v = value.try_into().unwrap_or(i64::MAX);
        self.entries.push((key.into(), ReportValue::Int(v)));
    }

    pub fn float(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), ReportValue::Float(value)));
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), ReportValue::Text(value.into())));
    }

    pub fn entries(&self) -> &[(String, ReportValue)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&ReportValue> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Numeric value of `key`, whether stored as integer or float.
    pub fn get_f64(&self, key: &str) -> Option<f64> {
        match self.get(key)? {
            ReportValue::Int(i) => Some(*i as f64),
            ReportValue::Float(f) => Some(*f),
            ReportValue::Text(_) => None,
        }
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }

    /// `key=value` lines; floats with six decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            match v {
                ReportValue::Int(i) => writeln!(out, "{k}={i}"),
                ReportValue::Float(f) => writeln!(out, "{k}={f:.6}"),
                ReportValue::Text(s) => writeln!(out, "{k}={s}"),
            }
            .expect("writing to a string");
        }
        out
    }

    pub fn to_json(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, v)| {
                let value = match v {
                    ReportValue::Int(i) => serde_json::Value::from(*i),
                    ReportValue::Float(f) => serde_json::Value::from(*f),
                    ReportValue::Text(s) => serde_json::Value::from(s.clone()),
                };
                (k.clone(), value)
            })
            .collect();
        let mut text = serde_json::to_string_pretty(&map).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Agreement of one set of instance maps with ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InstanceScores {
    pub ap: ApSummary,
    /// ARI over ground-truth foreground pixels.
    pub ari: f64,
    pub nmi: f64,
}

/// AP over all pixels of all views, ARI/NMI over ground-truth foreground
/// pixels.
pub fn evaluate_instances(pred: &[InstanceMap], gt: &[InstanceMap]) -> Result<InstanceScores> {
    if pred.len() != gt.len() {
        return Err(Error::dimension("predicted vs ground-truth views", gt.len(), pred.len()));
    }
    let mut pred_all = Vec::new();
    let mut gt_all = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        p.check_shape(g, "predicted vs ground-truth instance map")?;
        pred_all.extend_from_slice(p.as_slice());
        gt_all.extend_from_slice(g.as_slice());
    }
    let (fg_pred, fg_gt): (Vec<u32>, Vec<u32>) = pred_all
        .iter()
        .zip(&gt_all)
        .filter(|(_, &g)| g > 0)
        .map(|(&p, &g)| (p, g))
        .unzip();
    Ok(InstanceScores {
        ap: average_precision(&InstancePartition::new(pred_all), &InstancePartition::new(gt_all))?,
        ari: ari(&fg_pred, &fg_gt)?,
        nmi: nmi(&fg_pred, &fg_gt)?,
    })
}

fn push_instance_scores(report: &mut Report, suffix: &str, s: &InstanceScores) {
    report.float(format!("ap_{suffix}"), s.ap.ap);
    report.float(format!("ap50_{suffix}"), s.ap.ap50);
    report.float(format!("ap25_{suffix}"), s.ap.ap25);
    report.float(format!("ari_pixel_{suffix}"), s.ari);
    report.float(format!("nmi_pixel_{suffix}"), s.nmi);
}

/// Metrics-only report for a set of predicted instance maps.
pub fn evaluation_report(
    pred: &[InstanceMap],
    gt: &[InstanceMap],
    semantic: Option<(&[SemanticMap], &[SemanticMap], usize)>,
) -> Result<Report> {
    let mut report = Report::new();
    report.int("num_views", pred.len());
    push_instance_scores(&mut report, "pred", &evaluate_instances(pred, gt)?);
    if let Some((p, g, classes)) = semantic {
        let s = miou_macc(p, g, classes)?;
        report.float("miou", s.miou);
        report.float("macc", s.macc);
    }
    Ok(report)
}

/// Everything a pipeline run produces.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    /// Overlap-filled maps before disambiguation.
    pub fused: Vec<InstanceMap>,
    pub corrected: CorrectedMaps,
    /// All voxelized mask points labeled with their global instance ID.
    pub cloud: LabeledPointCloud,
    /// Per-mask point counts in mask-ordinal order.
    pub mask_sizes: Vec<usize>,
    pub events: Vec<MergeEvent>,
    pub votes: Option<VoteMatrix>,
    /// Global instance ID → class (0 when it received no vote).
    pub classes: BTreeMap<u32, u32>,
    /// Per-view class maps implied by instance classes.
    pub semantic_maps: Option<Vec<SemanticMap>>,
    pub report: Report,
}

impl PipelineOutput {
    pub fn merge_log(&self) -> String {
        crate::disambiguation::format_merge_log(&self.events)
    }
}

/// Plurality value among `ids`, smallest on ties.
fn plurality(ids: impl Iterator<Item = u32>) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for id in ids {
        *counts.entry(id).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(id, _)| id)
        .unwrap_or(0)
}

/// Mask-level ARI/NMI: one element per label mask, predicted by the ID it
/// was given and labeled by the plurality ground-truth ID under it.
fn mask_scores(
    views: &[FusedView],
    gt: &[InstanceMap],
    predicted: impl Fn(usize, u32) -> u32,
) -> Result<(f64, f64)> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (n, (view, g)) in views.iter().zip(gt).enumerate() {
        let mut under: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (&t, &id) in view.label.as_slice().iter().zip(g.as_slice()) {
            if t > 0 {
                under.entry(t).or_default().push(id);
            }
        }
        for (t, ids) in under {
            pred.push(predicted(n, t));
            truth.push(plurality(ids.into_iter()));
        }
    }
    Ok((ari(&pred, &truth)?, nmi(&pred, &truth)?))
}

pub fn run_pipeline(bundle: &SceneBundle, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    bundle.validate()?;
    let started = Instant::now();
    let u_max = config.max_instances;

    let (rendered, rendered_source): (Vec<InstanceMap>, &str) = if bundle.has_rendered() {
        let maps: Vec<InstanceMap> = bundle.views.iter().map(|v| v.rendered.clone().expect("present")).collect();
        (maps, "bundle")
    } else if bundle.has_gt_instance() {
        let gt: Vec<InstanceMap> = bundle.views.iter().map(|v| v.gt_instance.clone().expect("present")).collect();
        let corruption = CorruptionSpec {
            max_instances: u_max,
            ..config.corruption.clone()
        };
        (synthesize_rendered(&gt, &corruption, config.seed)?, "synthesized")
    } else {
        return Err(Error::Consistency(
            "bundle has neither rendered nor ground-truth instance maps".into(),
        ));
    };
    let max_rendered = rendered.iter().map(InstanceMap::max_id).max().unwrap_or(0);
    if max_rendered > u_max {
        return Err(Error::Consistency(format!(
            "rendered ID {max_rendered} exceeds max instances {u_max}"
        )));
    }

    let mut fresh = u_max + 1;
    let views: Vec<FusedView> = bundle
        .views
        .iter()
        .zip(&rendered)
        .map(|(v, r)| FusedView::new(v.instance.clone(), r, &mut fresh))
        .collect::<Result<_>>()?;
    let fused: Vec<InstanceMap> = views.iter().map(FusedView::fused_map).collect();
    debug!("overlap fill: {} fresh IDs", fresh - u_max - 1);

    let depths: Vec<_> = bundle.views.iter().map(|v| v.depth.clone()).collect();
    let poses: Vec<_> = bundle.views.iter().map(|v| v.pose).collect();
    let groups = extract_groups(&views, &depths, &bundle.intrinsics, &poses, config.voxel_size)?;
    let num_masks: usize = groups.iter().map(|g| g.records.len()).sum();
    info!("{} masks in {} groups", num_masks, groups.len());

    let results = disambiguate_all(&groups, &config.params(), config.mask_order())?;
    let mut blocks = Vec::new();
    let mut events = Vec::new();
    for r in results {
        blocks.extend(r.blocks);
        events.extend(r.events);
    }
    let corrected = correct_maps(&blocks, &views)?;
    info!(
        "{} merges, {} instances after disambiguation",
        events.len(),
        corrected.num_instances
    );

    let (cloud, mask_sizes) = labeled_cloud(&groups, &corrected);

    let num_classes = bundle.num_classes();
    let (votes, classes, semantic_maps) = if bundle.has_semantic() && num_classes > 0 {
        let per_view: Vec<VoteMatrix> = corrected
            .maps
            .par_iter()
            .zip(bundle.views.par_iter())
            .map(|(m, v)| {
                vote_single_view(
                    m,
                    v.semantic.as_ref().expect("present"),
                    corrected.num_instances as usize,
                    num_classes,
                )
            })
            .collect::<Result<_>>()?;
        let total = aggregate(&per_view)?;
        let classes = assign_classes(&total);
        let maps: Vec<SemanticMap> = corrected
            .maps
            .iter()
            .map(|m| m.map(|&g| if g == 0 { 0 } else { classes[&g] }))
            .collect();
        (Some(total), classes, Some(maps))
    } else {
        (None, BTreeMap::new(), None)
    };

    let mut report = Report::new();
    report.int("num_views", bundle.num_views());
    report.text("rendered_source", rendered_source);
    report.int("num_masks", num_masks);
    report.int("num_groups", groups.len());
    report.int("num_points", cloud.len());
    report.int("num_merges", events.len());
    let count_rule = |rule| events.iter().filter(|e| e.merge.rule == rule).count();
    report.int("merges_half", count_rule(MergeRule::HalfOverlap));
    report.int("merges_tau_n", count_rule(MergeRule::MinMatches));
    report.int("num_instances", corrected.num_instances);
    report.float("tau_d", config.tau_d);
    report.int("tau_n", config.tau_n);
    report.float("voxel_size", config.voxel_size);
    report.int("max_instances", u_max);
    report.text("order", config.order.as_str());
    report.int("seed", config.seed);

    if bundle.has_gt_instance() {
        let gt: Vec<InstanceMap> = bundle.views.iter().map(|v| v.gt_instance.clone().expect("present")).collect();
        let gt_ids: std::collections::BTreeSet<u32> =
            gt.iter().flat_map(|m| m.as_slice().iter().copied()).filter(|&g| g > 0).collect();
        report.int("gt_instances", gt_ids.len());
        push_instance_scores(&mut report, "before", &evaluate_instances(&fused, &gt)?);
        push_instance_scores(&mut report, "after", &evaluate_instances(&corrected.maps, &gt)?);
        let (ari_b, nmi_b) = mask_scores(&views, &gt, |n, t| views[n].assignment[&t])?;
        let (ari_a, nmi_a) = mask_scores(&views, &gt, |n, t| corrected.global_ids[&(n, t)])?;
        report.float("ari_mask_before", ari_b);
        report.float("nmi_mask_before", nmi_b);
        report.float("ari_mask_after", ari_a);
        report.float("nmi_mask_after", nmi_a);
    }
    if let Some(maps) = &semantic_maps {
        report.int("num_classes", num_classes);
        let mut per_class: BTreeMap<u32, usize> = BTreeMap::new();
        for &c in classes.values() {
            *per_class.entry(c).or_insert(0) += 1;
        }
        for (c, k) in per_class {
            let name = match (c, &bundle.class_names) {
                (0, _) => "unclassified".to_string(),
                (c, Some(names)) if (c as usize) <= names.len() => names[c as usize - 1].clone(),
                (c, _) => format!("class_{c}"),
            };
            report.int(format!("instances.{name}"), k);
        }
        if bundle.has_gt_semantic() {
            let gt: Vec<SemanticMap> = bundle.views.iter().map(|v| v.gt_semantic.clone().expect("present")).collect();
            let s = miou_macc(maps, &gt, num_classes)?;
            report.float("miou", s.miou);
            report.float("macc", s.macc);
        }
    }
    info!("pipeline finished in {:.3} s", started.elapsed().as_secs_f64());

    Ok(PipelineOutput {
        fused,
        corrected,
        cloud,
        mask_sizes,
        events,
        votes,
        classes,
        semantic_maps,
        report,
    })
}

/// Every mask's voxelized points, in mask-ordinal order, labeled with the
/// mask's global ID.
fn labeled_cloud(groups: &[MaskGroup], corrected: &CorrectedMaps) -> (LabeledPointCloud, Vec<usize>) {
    let mut records: Vec<_> = groups.iter().flat_map(|g| g.records.iter()).collect();
    records.sort_by_key(|r| r.mask_index);
    let mut cloud = LabeledPointCloud::new();
    let mut sizes = Vec::with_capacity(records.len());
    for r in records {
        let key = r.index_set.iter().next().expect("one key per record");
        let id = corrected.global_ids[&(key.view, key.label_id)];
        let mut part = r.cloud.clone();
        part.relabel(|_| id);
        sizes.push(part.len());
        cloud.append(part);
    }
    (cloud, sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_bundle, SceneConfig, SceneSpec};

    fn small_scene(seed: u64) -> SceneSpec {
        SceneSpec::random(&SceneConfig {
            num_objects: 4,
            seed,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn clean_scene_is_recovered_exactly() {
        let bundle = generate_bundle(&small_scene(3), &CorruptionSpec::default()).unwrap();
        let out = run_pipeline(&bundle, &PipelineConfig::default()).unwrap();
        assert_eq!(out.report.get_f64("ari_pixel_after"), Some(1.0));
        assert_eq!(out.report.get_f64("ap_after"), Some(1.0));
        assert_eq!(out.cloud.len(), out.mask_sizes.iter().sum::<usize>());
    }

    #[test]
    fn missing_rendered_and_gt_fails_fast() {
        let mut bundle = generate_bundle(&small_scene(1), &CorruptionSpec::default()).unwrap();
        for v in &mut bundle.views {
            v.rendered = None;
            v.gt_instance = None;
        }
        let err = run_pipeline(&bundle, &PipelineConfig::default()).unwrap_err();
        assert!(err.is_data_error());
    }

    #[test]
    fn rendered_maps_synthesized_from_ground_truth() {
        let mut bundle = generate_bundle(&small_scene(2), &CorruptionSpec::default()).unwrap();
        for v in &mut bundle.views {
            v.rendered = None;
        }
        let out = run_pipeline(&bundle, &PipelineConfig::default()).unwrap();
        assert_eq!(out.report.get("rendered_source"), Some(&ReportValue::Text("synthesized".into())));
        assert_eq!(out.report.get_f64("ari_pixel_after"), Some(1.0));
    }

    #[test]
    fn config_violations_are_usage_errors() {
        let bundle = generate_bundle(&small_scene(1), &CorruptionSpec::default()).unwrap();
        for config in [
            PipelineConfig {
                tau_d: 0.0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                voxel_size: -1.0,
                ..PipelineConfig::default()
            },
            PipelineConfig {
                max_instances: 0,
                ..PipelineConfig::default()
            },
        ] {
            assert!(!run_pipeline(&bundle, &config).unwrap_err().is_data_error());
        }
    }

    #[test]
    fn report_formats() {
        let mut r = Report::new();
        r.int("a", 3);
        r.float("b", 0.5);
        r.text("c", "x");
        assert_eq!(r.to_text(), "a=3\nb=0.500000\nc=x\n");
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["b"], 0.5);
        assert_eq!(r.get_f64("a"), Some(3.0));
    }
}
