//! Analytic test scenes: boxes and spheres rendered by per-pixel ray casting
//! into exact depth, instance and class maps, plus a corruption model that
//! turns ground truth into realistic pipeline inputs.
//!
//! The corrupted rendered map keeps IDs consistent across views but aliases
//! some objects onto one ID and jitters mask boundaries. The corrupted label
//! map keeps exact boundaries but draws fresh IDs per view and splits some
//! masks into fragments.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{BundleView, SceneBundle};
use crate::disambiguation::{compare_pair, DisambiguationParams, MaskGroup, MaskKey};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::image::{DepthMap, InstanceMap, SemanticMap};
use crate::union_find::DisjointSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
}

impl Shape {
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Box {
                center,
                half_extents,
            } => (
                [0, 1, 2].map(|i| center[i] - half_extents[i]),
                [0, 1, 2].map(|i| center[i] + half_extents[i]),
            ),
            Shape::Sphere { center, radius } => {
                ([0, 1, 2].map(|i| center[i] - radius), [0, 1, 2].map(|i| center[i] + radius))
            }
        }
    }

    fn is_degenerate(&self) -> bool {
        match self {
            Shape::Box { half_extents, .. } => half_extents.iter().any(|&h| h.is_nan() || h <= 0.0),
            Shape::Sphere { radius, .. } => radius.is_nan() || *radius <= 0.0,
        }
    }

    /// Smallest positive ray parameter at which `origin + t * dir` hits the shape.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Box {
                center,
                half_extents,
            } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for i in 0..3 {
                    let lo = center[i] - half_extents[i];
                    let hi = center[i] + half_extents[i];
                    if dir[i] == 0.0 {
                        if origin[i] < lo || origin[i] > hi {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[i];
                    let (t0, t1) = {
                        let a = (lo - origin[i]) * inv;
                        let b = (hi - origin[i]) * inv;
                        if a < b {
                            (a, b)
                        } else {
                            (b, a)
                        }
                    };
                    t_near = t_near.max(t0);
                    t_far = t_far.min(t1);
                }
                if t_near > t_far {
                    None
                } else if t_near > 0.0 {
                    Some(t_near)
                } else if t_far > 0.0 {
                    Some(t_far)
                } else {
                    None
                }
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - Point3::from(center);
                let a = dir.dot(dir);
                let half_b = oc.dot(dir);
                let c = oc.dot(&oc) - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-half_b - sq) / a;
                let t1 = (-half_b + sq) / a;
                if t0 > 0.0 {
                    Some(t0)
                } else if t1 > 0.0 {
                    Some(t1)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    /// Ground-truth instance ID, ≥ 1 and unique in the scene.
    pub id: u32,
    /// Ground-truth class ID in `1..=num_classes`.
    pub class_id: u32,
    pub shape: Shape,
}

/// A camera placed at `eye`, looking at `target`, with +z as world up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPlacement {
    pub eye: [f64; 3],
    pub target: [f64; 3],
}

impl CameraPlacement {
    pub fn pose(&self) -> Result<Pose> {
        Pose::look_at(Point3::from(self.eye), Point3::from(self.target), Vector3::z())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub num_classes: u32,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
    pub cameras: Vec<CameraPlacement>,
    pub objects: Vec<SceneObject>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.cameras.is_empty() {
            return Err(Error::InvalidInput("scene needs at least one camera".into()));
        }
        let mut ids = BTreeSet::new();
        for obj in &self.objects {
            if obj.id == 0 || !ids.insert(obj.id) {
                return Err(Error::InvalidInput(format!(
                    "object IDs must be unique and positive (got {})",
                    obj.id
                )));
            }
            if obj.class_id == 0 || obj.class_id > self.num_classes {
                return Err(Error::InvalidInput(format!(
                    "object {} class {} outside 1..={}",
                    obj.id, obj.class_id, self.num_classes
                )));
            }
            if obj.shape.is_degenerate() {
                return Err(Error::InvalidInput(format!("object {} is degenerate", obj.id)));
            }
            let (lo, hi) = obj.shape.bounds();
            if (0..3).any(|i| lo[i] < self.room_min[i] || hi[i] > self.room_max[i]) {
                return Err(Error::InvalidInput(format!("object {} leaves the room", obj.id)));
            }
        }
        for cam in &self.cameras {
            cam.pose()?;
        }
        Ok(())
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        self.cameras.iter().map(CameraPlacement::pose).collect()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SceneSpec =
            toml::from_str(text).map_err(|e| Error::InvalidInput(format!("scene spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene spec serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// Random scene in a 6 × 6 × 3 m room: non-touching boxes and spheres
    /// around the center, cameras on a ring looking inward.
    pub fn random(config: &SceneConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let room_min = [0.0, 0.0, 0.0];
        let room_max = [6.0, 6.0, 3.0];
        let center = [3.0, 3.0];
        let mut objects: Vec<SceneObject> = Vec::new();
        let mut boxes: Vec<([f64; 3], [f64; 3])> = Vec::new();
        let mut attempts = 0;
        while objects.len() < config.num_objects {
            attempts += 1;
            if attempts > 100_000 {
                return Err(Error::InvalidInput(format!(
                    "could not place {} objects",
                    config.num_objects
                )));
            }
            let large = config.large_object && objects.is_empty();
            let r = rng.random_range(0.0..config.placement_radius);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let (x, y) = (center[0] + r * phi.cos(), center[1] + r * phi.sin());
            let shape = if large {
                let h = [0.9, 1.1, 0.3];
                Shape::Box {
                    center: [x, y, h[2]],
                    half_extents: h,
                }
            } else if rng.random_bool(0.6) {
                let h = [
                    rng.random_range(0.18..0.45),
                    rng.random_range(0.18..0.45),
                    rng.random_range(0.15..0.5),
                ];
                let lift = rng.random_range(0.0..0.6);
                Shape::Box {
                    center: [x, y, h[2] + lift],
                    half_extents: h,
                }
            } else {
                let radius = rng.random_range(0.18..0.4);
                let lift = rng.random_range(0.0..0.8);
                Shape::Sphere {
                    center: [x, y, radius + lift],
                    radius,
                }
            };
            let (lo, hi) = shape.bounds();
            if (0..3).any(|i| lo[i] < room_min[i] || hi[i] > room_max[i]) {
                continue;
            }
            let gap = config.min_gap;
            let clear = boxes.iter().all(|(blo, bhi)| {
                (0..3).any(|i| lo[i] > bhi[i] + gap || hi[i] < blo[i] - gap)
            });
            if !clear {
                continue;
            }
            boxes.push((lo, hi));
            objects.push(SceneObject {
                id: objects.len() as u32 + 1,
                class_id: rng.random_range(1..=config.num_classes),
                shape,
            });
        }

        let cameras = (0..config.num_views)
            .map(|k| {
                let phi = std::f64::consts::TAU * k as f64 / config.num_views as f64
                    + rng.random_range(-0.05..0.05);
                let eye = [
                    center[0] + config.camera_radius * phi.cos(),
                    center[1] + config.camera_radius * phi.sin(),
                    rng.random_range(1.4..2.2),
                ];
                let target = [
                    center[0] + rng.random_range(-0.6..0.6),
                    center[1] + rng.random_range(-0.6..0.6),
                    rng.random_range(0.2..0.6),
                ];
                CameraPlacement { eye, target }
            })
            .collect();

        let (w, h) = (config.width, config.height);
        let spec = SceneSpec {
            room_min,
            room_max,
            num_classes: config.num_classes,
            intrinsics: CameraIntrinsics::new(config.focal, config.focal, (w / 2) as f64, (h / 2) as f64, w, h)?,
            seed: config.seed,
            cameras,
            objects,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Knobs for [`SceneSpec::random`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub num_objects: usize,
    pub num_views: usize,
    pub num_classes: u32,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub seed: u64,
    /// Objects are placed within this distance of the room center (meters).
    pub placement_radius: f64,
    pub camera_radius: f64,
    /// Minimum clearance between object bounding boxes (meters).
    pub min_gap: f64,
    /// Make the first object a large 1.8 × 2.2 m slab.
    pub large_object: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_objects: 10,
            num_views: 20,
            num_classes: 20,
            width: 128,
            height: 96,
            focal: 90.0,
            seed: 0,
            placement_radius: 1.9,
            camera_radius: 2.8,
            min_gap: 0.15,
            large_object: false,
        }
    }
}

/// Named scene presets with their corruption settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// 10 objects, 20 views, alias and fragmentation rates 0.3, seed 7.
    Golden,
    /// Like [`Preset::Golden`] but the first object is a large slab that no
    /// single view covers.
    LargeObject,
}

impl Preset {
    pub fn scene(self) -> Result<(SceneSpec, CorruptionSpec)> {
        let corruption = CorruptionSpec {
            alias_rate: 0.3,
            fragment_rate: 0.3,
            boundary_noise_px: 1,
            semantic_noise_rate: 0.1,
            ..CorruptionSpec::default()
        };
        let config = SceneConfig {
            seed: 7,
            large_object: self == Preset::LargeObject,
            ..SceneConfig::default()
        };
        Ok((SceneSpec::random(&config)?, corruption))
    }
}

/// Ground truth of one rendered view.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub pose: Pose,
    pub depth: DepthMap,
    pub instance: InstanceMap,
    pub semantic: SemanticMap,
}

/// Ray-casts every pixel center; the nearest positive hit wins and depth is
/// measured along the optical axis. Pixels without a hit get depth 0, ID 0.
pub fn render_views(spec: &SceneSpec) -> Result<Vec<RenderedView>> {
    spec.validate()?;
    let intr = spec.intrinsics;
    spec.poses()?
        .into_par_iter()
        .map(|pose| {
            let rotation = pose.rotation();
            let origin = Point3::from(pose.translation());
            let mut depth = DepthMap::filled(intr.width, intr.height, 0.0);
            let mut instance = InstanceMap::filled(intr.width, intr.height, 0);
            let mut semantic = SemanticMap::filled(intr.width, intr.height, 0);
            for v in 0..intr.height {
                for u in 0..intr.width {
                    // Camera-frame direction with unit z: the ray parameter is the depth.
                    let cam_dir = Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
                    let dir = rotation * cam_dir;
                    let hit = spec
                        .objects
                        .iter()
                        .filter_map(|o| o.shape.intersect(&origin, &dir).map(|t| (t, o)))
                        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
                    if let Some((t, obj)) = hit {
                        depth.set(u, v, t as f32);
                        instance.set(u, v, obj.id);
                        semantic.set(u, v, obj.class_id);
                    }
                }
            }
            Ok(RenderedView {
                pose,
                depth,
                instance,
                semantic,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Fraction of objects whose rendered ID is replaced by another object's.
    pub alias_rate: f64,
    /// Probability that an object's label mask in a view is split in two.
    pub fragment_rate: f64,
    /// Square-kernel radius of per-mask dilation or erosion in rendered maps.
    pub boundary_noise_px: usize,
    /// Probability that an object's class in a view is replaced by a wrong one.
    pub semantic_noise_rate: f64,
    /// Explicit `(source, target)` GT pairs: the source takes the target's rendered ID.
    #[serde(default)]
    pub alias_pairs: Vec<(u32, u32)>,
    /// Draw rendered IDs from `1..=max_instances` and label IDs per view at
    /// random; when false, IDs stay equal to ground truth wherever possible.
    pub permute_ids: bool,
    pub max_instances: u32,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            alias_rate: 0.0,
            fragment_rate: 0.0,
            boundary_noise_px: 0,
            semantic_noise_rate: 0.0,
            alias_pairs: Vec::new(),
            permute_ids: true,
            max_instances: 200,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("alias rate", self.alias_rate),
            ("fragment rate", self.fragment_rate),
            ("semantic noise rate", self.semantic_noise_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidInput(format!("{name} {rate} outside [0, 1]")));
            }
        }
        if self.max_instances == 0 {
            return Err(Error::InvalidInput("max instances must be at least 1".into()));
        }
        Ok(())
    }
}

/// Corrupted inputs for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedView {
    /// View-consistent IDs with aliasing and boundary noise.
    pub rendered: InstanceMap,
    /// Exact boundaries with per-view IDs and fragments.
    pub label: InstanceMap,
    /// Class map with per-object class noise.
    pub semantic: SemanticMap,
}

/// Rendered ID per ground-truth object, after aliasing.
pub fn rendered_id_table(
    object_ids: &[u32],
    corruption: &CorruptionSpec,
    seed: u64,
) -> Result<BTreeMap<u32, u32>> {
    corruption.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = object_ids.len();
    if corruption.permute_ids && k > corruption.max_instances as usize {
        return Err(Error::Capacity {
            labels: k,
            slots: corruption.max_instances as usize,
        });
    }
    let mut table: BTreeMap<u32, u32> = if corruption.permute_ids {
        let mut pool: Vec<u32> = (1..=corruption.max_instances).collect();
        pool.shuffle(&mut rng);
        object_ids.iter().copied().zip(pool).collect()
    } else {
        object_ids.iter().map(|&id| (id, id)).collect()
    };

    let mut order: Vec<u32> = object_ids.to_vec();
    order.shuffle(&mut rng);
    let n_alias = ((corruption.alias_rate * k as f64).round() as usize).min(k.saturating_sub(1));
    if n_alias > 0 {
        let (sources, rest) = order.split_at(n_alias);
        let partners = if rest.len() >= n_alias { &rest[..n_alias] } else { rest };
        for (i, src) in sources.iter().enumerate() {
            let target = partners[i % partners.len()];
            table.insert(*src, table[&target]);
        }
    }
    for &(src, target) in &corruption.alias_pairs {
        let rid = *table
            .get(&target)
            .ok_or_else(|| Error::InvalidInput(format!("alias target {target} is not an object")))?;
        if !table.contains_key(&src) {
            return Err(Error::InvalidInput(format!("alias source {src} is not an object")));
        }
        table.insert(src, rid);
    }
    Ok(table)
}

fn view_rng(seed: u64, view: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(view as u64 + 1);
    rng
}

/// Rendered-map emulation for one view: GT masks painted with their rendered
/// IDs, each eroded or dilated by the boundary noise.
pub fn corrupt_rendered(
    gt: &InstanceMap,
    table: &BTreeMap<u32, u32>,
    boundary_noise_px: usize,
    rng: &mut impl Rng,
) -> InstanceMap {
    let (w, h) = (gt.width(), gt.height());
    let visible: BTreeSet<u32> = gt.as_slice().iter().copied().filter(|&id| id > 0).collect();
    let mut out = gt.map(|&id| if id == 0 { 0 } else { table[&id] });
    if boundary_noise_px == 0 {
        return out;
    }
    let k = boundary_noise_px as isize;
    let window = |u: usize, v: usize| {
        (-k..=k).flat_map(move |dv| (-k..=k).map(move |du| (u as isize + du, v as isize + dv)))
    };
    let dilate: BTreeMap<u32, bool> = visible.iter().map(|&id| (id, rng.random_bool(0.5))).collect();
    // Erosion: drop mask pixels whose window leaves the object.
    for v in 0..h {
        for u in 0..w {
            let id = *gt.get(u, v);
            if id == 0 || dilate[&id] {
                continue;
            }
            let touches_outside = window(u, v).any(|(x, y)| {
                x < 0 || y < 0 || x >= w as isize || y >= h as isize || *gt.get(x as usize, y as usize) != id
            });
            if touches_outside {
                out.set(u, v, 0);
            }
        }
    }
    // Dilation: grow into background only, smallest object first.
    for v in 0..h {
        for u in 0..w {
            if *gt.get(u, v) != 0 {
                continue;
            }
            let grower = window(u, v)
                .filter(|&(x, y)| x >= 0 && y >= 0 && x < w as isize && y < h as isize)
                .map(|(x, y)| *gt.get(x as usize, y as usize))
                .filter(|&id| id > 0 && dilate[&id])
                .min();
            if let Some(id) = grower {
                out.set(u, v, table[&id]);
            }
        }
    }
    out
}

/// Label-map emulation for one view: exact GT masks, some split in two along
/// the median column or row, then numbered `1..=T` (shuffled if permuting).
pub fn corrupt_label(gt: &InstanceMap, fragment_rate: f64, permute_ids: bool, rng: &mut impl Rng) -> InstanceMap {
    let mut pixels: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for v in 0..gt.height() {
        for u in 0..gt.width() {
            let id = *gt.get(u, v);
            if id > 0 {
                pixels.entry(id).or_default().push((u, v));
            }
        }
    }
    let mut pieces: Vec<Vec<(usize, usize)>> = Vec::new();
    for (_, px) in pixels {
        let split = rng.random_bool(fragment_rate) && px.len() >= 16;
        let by_column = rng.random_bool(0.5);
        if !split {
            pieces.push(px);
            continue;
        }
        let coord = |p: &(usize, usize)| if by_column { p.0 } else { p.1 };
        let mut values: Vec<usize> = px.iter().map(coord).collect();
        values.sort_unstable();
        let median = values[values.len() / 2];
        let (lo, hi): (Vec<_>, Vec<_>) = px.into_iter().partition(|p| coord(p) < median);
        for part in [lo, hi] {
            if !part.is_empty() {
                pieces.push(part);
            }
        }
    }
    let mut ids: Vec<u32> = (1..=pieces.len() as u32).collect();
    if permute_ids {
        ids.shuffle(rng);
    }
    let mut out = InstanceMap::filled(gt.width(), gt.height(), 0);
    for (piece, id) in pieces.into_iter().zip(ids) {
        for (u, v) in piece {
            out.set(u, v, id);
        }
    }
    out
}

/// Class-map emulation for one view: with probability `rate` per visible
/// object, its pixels carry a wrong class.
pub fn corrupt_semantic(
    gt_instance: &InstanceMap,
    gt_semantic: &SemanticMap,
    num_classes: u32,
    rate: f64,
    rng: &mut impl Rng,
) -> SemanticMap {
    let visible: BTreeSet<u32> = gt_instance.as_slice().iter().copied().filter(|&id| id > 0).collect();
    let mut replacement: BTreeMap<u32, u32> = BTreeMap::new();
    for id in visible {
        if num_classes > 1 && rng.random_bool(rate) {
            let true_class = gt_instance
                .as_slice()
                .iter()
                .zip(gt_semantic.as_slice())
                .find(|(&i, _)| i == id)
                .map(|(_, &c)| c)
                .unwrap_or(0);
            let mut wrong = rng.random_range(1..num_classes);
            if wrong >= true_class {
                wrong += 1;
            }
            replacement.insert(id, wrong);
        }
    }
    let mut out = gt_semantic.clone();
    for (px, &id) in gt_instance.as_slice().iter().enumerate() {
        if let Some(&c) = replacement.get(&id) {
            out.as_mut_slice()[px] = c;
        }
    }
    out
}

/// Corrupts every view. Streams are split per view, so results do not depend
/// on scheduling.
pub fn corrupt(
    views: &[RenderedView],
    num_classes: u32,
    corruption: &CorruptionSpec,
    seed: u64,
) -> Result<Vec<CorruptedView>> {
    let mut ids = BTreeSet::new();
    for v in views {
        ids.extend(v.instance.as_slice().iter().copied().filter(|&id| id > 0));
    }
    let ids: Vec<u32> = ids.into_iter().collect();
    let table = rendered_id_table(&ids, corruption, seed)?;
    Ok(views
        .par_iter()
        .enumerate()
        .map(|(n, view)| {
            let mut rng = view_rng(seed, n);
            let rendered = corrupt_rendered(&view.instance, &table, corruption.boundary_noise_px, &mut rng);
            let label = corrupt_label(&view.instance, corruption.fragment_rate, corruption.permute_ids, &mut rng);
            let semantic = corrupt_semantic(
                &view.instance,
                &view.semantic,
                num_classes,
                corruption.semantic_noise_rate,
                &mut rng,
            );
            CorruptedView {
                rendered,
                label,
                semantic,
            }
        })
        .collect())
}

/// Rendered-map emulation straight from ground-truth instance maps, for
/// bundles that carry GT but no rendered maps.
pub fn synthesize_rendered(gt: &[InstanceMap], corruption: &CorruptionSpec, seed: u64) -> Result<Vec<InstanceMap>> {
    let mut ids = BTreeSet::new();
    for map in gt {
        ids.extend(map.as_slice().iter().copied().filter(|&id| id > 0));
    }
    let ids: Vec<u32> = ids.into_iter().collect();
    let table = rendered_id_table(&ids, corruption, seed)?;
    Ok(gt
        .par_iter()
        .enumerate()
        .map(|(n, map)| corrupt_rendered(map, &table, corruption.boundary_noise_px, &mut view_rng(seed, n)))
        .collect())
}

/// Renders and corrupts a scene into a complete bundle with ground truth.
/// The corruption stream is seeded from the scene seed.
pub fn generate_bundle(spec: &SceneSpec, corruption: &CorruptionSpec) -> Result<SceneBundle> {
    let views = render_views(spec)?;
    let corrupted = corrupt(&views, spec.num_classes, corruption, spec.seed)?;
    let views = views
        .into_iter()
        .zip(corrupted)
        .map(|(gt, c)| BundleView {
            pose: gt.pose,
            depth: gt.depth,
            instance: c.label,
            rendered: Some(c.rendered),
            semantic: Some(c.semantic),
            gt_instance: Some(gt.instance),
            gt_semantic: Some(gt.semantic),
        })
        .collect();
    let bundle = SceneBundle {
        intrinsics: spec.intrinsics,
        views,
        class_names: Some((1..=spec.num_classes).map(|c| format!("class_{c:02}")).collect()),
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Oracle partition of a group: compares every unordered pair of masks
/// independently and takes the transitive closure of positive decisions.
pub fn brute_force_disambiguate(group: &MaskGroup, params: &DisambiguationParams) -> Vec<BTreeSet<MaskKey>> {
    let mut records: Vec<_> = group.records.iter().collect();
    records.sort_by_key(|r| r.mask_index);
    let n = records.len();
    let mut sets = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let (_, merges) = compare_pair(&records[i].cloud, &records[j].cloud, params);
            if !merges.is_empty() {
                sets.union(i, j);
            }
        }
    }
    sets.groups()
        .into_iter()
        .map(|members| {
            members
                .into_iter()
                .flat_map(|i| records[i].index_set.iter().copied())
                .collect()
        })
        .collect()
}
