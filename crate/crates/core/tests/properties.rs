mod oracles;

use std::collections::{BTreeMap, BTreeSet};

use idfuse::alignment::{ce_cost, hungarian_assign, overlap_fill, siou_cost, CostMatrix, ProbabilityMap};
use idfuse::disambiguation::{compare_pair, disambiguate_group, DisambiguationParams, MaskOrder, MergeRule};
use idfuse::evaluation::{ari, average_precision_at, coco_thresholds, nmi, InstancePartition};
use idfuse::geometry::{
    backproject, radius_match, reproject, voxel_downsample, CameraIntrinsics, LabeledPoint, LabeledPointCloud, Pose,
};
use idfuse::semantics::{aggregate, vote_single_view};
use idfuse::synthetic::brute_force_disambiguate;
use idfuse::{DepthMap, InstanceMap};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud_from(points: &[(f64, f64, f64, u32)]) -> LabeledPointCloud {
    points
        .iter()
        .enumerate()
        .map(|(i, &(x, y, z, l))| LabeledPoint::new(x, y, z, l, i as u32))
        .collect()
}

fn points(max: usize, extent: f64) -> impl Strategy<Value = Vec<(f64, f64, f64, u32)>> {
    prop::collection::vec((-extent..extent, -extent..extent, -extent..extent, 1u32..4), 0..max)
}

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (
        -5.0..5.0f64,
        -5.0..5.0f64,
        -5.0..5.0f64,
        -1.0..1.0f64,
        -1.0..1.0f64,
        0.5..1.5f64,
    )
        .prop_filter_map("degenerate look-at", |(x, y, z, tx, ty, tz)| {
            let eye = Point3::new(x, y, z);
            Pose::look_at(eye, eye + Vector3::new(tx, ty, tz), Vector3::z()).ok()
        })
}

fn label_map(w: usize, h: usize, max_id: u32) -> impl Strategy<Value = InstanceMap> {
    prop::collection::vec(0..=max_id, w * h).prop_map(move |v| InstanceMap::from_vec(w, h, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn backproject_then_reproject_returns_the_pixel(
        pose in pose_strategy(),
        fx in 30.0..200.0f64,
        depth in 0.1..20.0f32,
        u in 0usize..40,
        v in 0usize..30,
    ) {
        let intr = CameraIntrinsics::new(fx, fx * 1.1, 19.5, 14.5, 40, 30).unwrap();
        let mut d = DepthMap::filled(40, 30, 0.0);
        d.set(u, v, depth);
        let ids = InstanceMap::filled(40, 30, 3);
        let cloud = backproject(&d, &intr, &pose, &ids).unwrap();
        prop_assert_eq!(cloud.len(), 1);
        let (ru, rv, rz) = reproject(&cloud.points()[0].position, &intr, &pose);
        prop_assert!((ru - u as f64).abs() < 1e-6 && (rv - v as f64).abs() < 1e-6);
        prop_assert!((rz - f64::from(depth)).abs() < 1e-9 * f64::from(depth).max(1.0));
    }

    #[test]
    fn voxel_downsample_is_idempotent(pts in points(200, 1.0), size in 0.02..0.5f64) {
        let once = voxel_downsample(&cloud_from(&pts), size).unwrap();
        let twice = voxel_downsample(&once, size).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn voxel_downsample_never_grows_and_keeps_labels(pts in points(200, 1.0), size in 0.02..0.5f64) {
        let cloud = cloud_from(&pts);
        let down = voxel_downsample(&cloud, size).unwrap();
        prop_assert!(down.len() <= cloud.len());
        let before: BTreeSet<u32> = cloud.points().iter().map(|p| p.label).collect();
        prop_assert!(down.points().iter().all(|p| before.contains(&p.label)));
    }

    #[test]
    fn radius_match_equals_brute_force(a in points(60, 0.5), b in points(60, 0.5), tau in 0.01..0.3f64) {
        let (a, b) = (cloud_from(&a), cloud_from(&b));
        prop_assert_eq!(radius_match(&a, &b, tau), oracles::radius_match_brute(&a, &b, tau));
    }

    #[test]
    fn radius_match_is_symmetric_for_unequal_sizes(a in points(40, 0.5), b in points(40, 0.5), tau in 0.01..0.3f64) {
        prop_assume!(a.len() != b.len());
        let (a, b) = (cloud_from(&a), cloud_from(&b));
        let mut swapped: Vec<(usize, usize)> = radius_match(&b, &a, tau).into_iter().map(|(i, j)| (j, i)).collect();
        swapped.sort_unstable();
        prop_assert_eq!(radius_match(&a, &b, tau), swapped);
    }

    #[test]
    fn hungarian_matches_permutation_minimum(n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let cost = CostMatrix::from_fn(n, n, |r, c| rows[r][c]).unwrap();
        let assignment = hungarian_assign(&cost).unwrap();
        let best = oracles::min_cost_by_permutation(&rows);
        prop_assert!((cost.assignment_cost(&assignment) - best).abs() < 1e-9);
    }

    #[test]
    fn hungarian_is_invariant_to_shift_and_scale(
        rows in 1usize..8,
        extra in 0usize..4,
        seed in any::<u64>(),
        shift in -100.0..100.0f64,
        scale in 0.1..10.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (rows + extra, rows);
        let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let base = CostMatrix::new(m, n, data.clone()).unwrap();
        let moved = CostMatrix::new(m, n, data.iter().map(|x| x * scale + shift).collect()).unwrap();
        prop_assert_eq!(hungarian_assign(&base).unwrap(), hungarian_assign(&moved).unwrap());
    }

    #[test]
    fn hungarian_assignment_is_injective(rows in 1usize..10, extra in 0usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (rows + extra, rows);
        let cost = CostMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0)).unwrap();
        let a = hungarian_assign(&cost).unwrap();
        prop_assert_eq!(a.len(), n);
        prop_assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), n);
        prop_assert!(a.iter().all(|&r| r < m));
    }

    #[test]
    fn cost_entries_stay_in_range(seed in any::<u64>(), slots in 1usize..5, label in label_map(6, 5, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for _ in 0..30 {
            let raw: Vec<f64> = (0..=slots).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|x| x / total));
        }
        let pred = ProbabilityMap::new(6, 5, slots + 1, data).unwrap();
        let s = siou_cost(&pred, &label).unwrap();
        let c = ce_cost(&pred, &label).unwrap();
        for r in 0..s.rows() {
            for col in 0..s.cols() {
                prop_assert!((-1.0..=0.0).contains(&s.get(r, col)));
                prop_assert!(c.get(r, col) >= 0.0 && c.get(r, col).is_finite());
            }
        }
    }

    #[test]
    fn overlap_fill_refines_only_by_union(label in label_map(8, 6, 5), rendered in label_map(8, 6, 4)) {
        let mut fresh = 100;
        let fused = overlap_fill(&label, &rendered, &mut fresh).unwrap();
        // each label mask maps to one fused ID, and background stays background
        let mut image: BTreeMap<u32, u32> = BTreeMap::new();
        for (&t, &f) in label.as_slice().iter().zip(fused.as_slice()) {
            prop_assert_eq!(t == 0, f == 0);
            prop_assert_eq!(*image.entry(t).or_insert(f), f);
        }
        // distinct fused IDs per label mask give back the label partition
        let fused_ids: BTreeSet<u32> = image.iter().filter(|(&t, _)| t > 0).map(|(_, &f)| f).collect();
        if fused_ids.len() == image.keys().filter(|&&t| t > 0).count() {
            prop_assert!(oracles::same_partition(label.as_slice(), fused.as_slice()));
        }
    }

    #[test]
    fn ari_and_nmi_are_symmetric(a in prop::collection::vec(0u32..5, 2..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<u32> = a.iter().map(|_| rng.random_range(0..5)).collect();
        prop_assert!((ari(&a, &b).unwrap() - ari(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ari_and_nmi_ignore_relabeling(a in prop::collection::vec(0u32..6, 2..40), b in prop::collection::vec(0u32..6, 40)) {
        let b = &b[..a.len()];
        let renamed: Vec<u32> = a.iter().map(|&x| (x * 7 + 3) % 43).collect();
        prop_assert!((ari(&a, b).unwrap() - ari(&renamed, b).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&a, b).unwrap() - nmi(&renamed, b).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&a, &renamed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_match_oracles(
        pred in prop::collection::vec(0u32..5, 1..30),
        gt in prop::collection::vec(0u32..5, 30),
        conf in prop::collection::vec(0.0..1.0f64, 5),
    ) {
        let gt = &gt[..pred.len()];
        prop_assert!((ari(&pred, gt).unwrap() - oracles::ari_pairs(&pred, gt)).abs() < 1e-9);
        prop_assert!((nmi(&pred, gt).unwrap() - oracles::nmi_direct(&pred, gt)).abs() < 1e-9);
        let confidence: BTreeMap<u32, f64> = (1..5).map(|i| (i, (conf[i as usize] * 4.0).round() / 4.0)).collect();
        let p = InstancePartition { labels: pred.clone(), confidence: confidence.clone() };
        let g = InstancePartition::new(gt.to_vec());
        for t in [0.25, 0.5, 0.75] {
            let ours = average_precision_at(&p, &g, t).unwrap();
            prop_assert!((ours - oracles::ap_reference(&pred, gt, &confidence, t)).abs() < 1e-9);
        }
    }

    #[test]
    fn ap_ignores_relabeling_and_falls_with_threshold(
        pred in prop::collection::vec(0u32..6, 1..40),
        gt in prop::collection::vec(0u32..6, 40),
    ) {
        let gt = InstancePartition::new(gt[..pred.len()].to_vec());
        let renamed = InstancePartition::new(pred.iter().map(|&x| if x == 0 { 0 } else { 50 - x }).collect());
        let gt_renamed = InstancePartition::new(gt.labels.iter().map(|&x| if x == 0 { 0 } else { 9 * x + 4 }).collect());
        let pred = InstancePartition::new(pred);
        let mut last = f64::INFINITY;
        for t in [0.25].into_iter().chain(coco_thresholds()) {
            let ap = average_precision_at(&pred, &gt, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&ap));
            prop_assert!(ap <= last + 1e-12);
            last = ap;
            prop_assert_eq!(ap, average_precision_at(&renamed, &gt, t).unwrap());
            prop_assert_eq!(ap, average_precision_at(&pred, &gt_renamed, t).unwrap());
        }
    }

    #[test]
    fn vote_rows_bounded_by_views_and_order_free(seed in any::<u64>(), views in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_view: Vec<_> = (0..views)
            .map(|_| {
                let inst = InstanceMap::from_fn(5, 4, |_, _| rng.random_range(0..4));
                let cls = InstanceMap::from_fn(5, 4, |_, _| rng.random_range(0..3));
                vote_single_view(&inst, &cls, 3, 2).unwrap()
            })
            .collect();
        let total = aggregate(&per_view).unwrap();
        for u in 1..=3 {
            prop_assert!(total.row_sum(u) as usize <= views);
        }
        let mut reversed = per_view.clone();
        reversed.reverse();
        prop_assert_eq!(aggregate(&reversed).unwrap(), total);
    }

    #[test]
    fn raising_tau_n_only_drops_floor_merges(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random_cloud = |labels: u32| -> LabeledPointCloud {
            (0..rng.random_range(20..120))
                .map(|i| {
                    let l = rng.random_range(1..=labels);
                    LabeledPoint::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.0, l, i)
                })
                .collect()
        };
        let (a, b) = (random_cloud(3), random_cloud(3));
        let low = DisambiguationParams { tau_d: 0.075, tau_n: 5 };
        let high = DisambiguationParams { tau_d: 0.075, tau_n: 40 };
        let (_, m_low) = compare_pair(&a, &b, &low);
        let (_, m_high) = compare_pair(&a, &b, &high);
        for m in &m_high {
            prop_assert!(m_low.contains(m));
        }
        for m in &m_low {
            if !m_high.contains(m) {
                prop_assert_eq!(m.rule, MergeRule::MinMatches);
            }
        }
    }

    #[test]
    fn hierarchical_matches_brute_force_on_consistent_groups(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::consistent_group(&mut rng, 16);
        let params = DisambiguationParams::default();
        let brute = oracles::normalize(&brute_force_disambiguate(&g.group, &params));
        prop_assert_eq!(&brute, &g.truth);
        let ours = disambiguate_group(&g.group, &params, MaskOrder::Timestamp).unwrap();
        prop_assert_eq!(oracles::normalize(&ours.blocks), brute.clone());
        let shuffled = disambiguate_group(&g.group, &params, MaskOrder::Shuffled(seed)).unwrap();
        prop_assert_eq!(oracles::normalize(&shuffled.blocks), brute);
    }

    #[test]
    fn brute_force_ignores_mask_enumeration_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut group = oracles::consistent_group(&mut rng, 10).group;
        let params = DisambiguationParams { tau_d: 0.075, tau_n: 3 };
        let before = oracles::normalize(&brute_force_disambiguate(&group, &params));
        group.records.shuffle(&mut rng);
        prop_assert_eq!(oracles::normalize(&brute_force_disambiguate(&group, &params)), before);
    }
}
