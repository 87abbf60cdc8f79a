use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::Point3;

use super::cloud::{LabeledPoint, LabeledPointCloud};
use crate::error::{Error, Result};

/// Integer voxel coordinates of `p` for cubes of edge `size`.
#[inline]
pub fn voxel_key(p: &Point3<f64>, size: f64) -> (i64, i64, i64) {
    (
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    )
}

struct Accum {
    sum: [f64; 3],
    min: [f64; 3],
    max: [f64; 3],
    count: usize,
    mask_index: u32,
    labels: Vec<(u32, usize)>,
}

/// Replaces the points of each occupied voxel by their centroid.
///
/// The representative takes the majority label of the voxel (ties go to the
/// smallest label) and the mask index of the first point that fell into it.
/// Output order follows the first occurrence of each voxel in the input.
pub fn voxel_downsample(cloud: &LabeledPointCloud, voxel_size: f64) -> Result<LabeledPointCloud> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut accums: Vec<Accum> = Vec::new();
    for p in cloud.points() {
        let key = voxel_key(&p.position, voxel_size);
        let c = [p.position.x, p.position.y, p.position.z];
        match slots.entry(key) {
            Entry::Vacant(e) => {
                e.insert(accums.len());
                accums.push(Accum {
                    sum: c,
                    min: c,
                    max: c,
                    count: 1,
                    mask_index: p.mask_index,
                    labels: vec![(p.label, 1)],
                });
            }
            Entry::Occupied(e) => {
                let acc = &mut accums[*e.get()];
                for (axis, &x) in c.iter().enumerate() {
                    acc.sum[axis] += x;
                    acc.min[axis] = acc.min[axis].min(x);
                    acc.max[axis] = acc.max[axis].max(x);
                }
                acc.count += 1;
                match acc.labels.iter_mut().find(|(l, _)| *l == p.label) {
                    Some((_, n)) => *n += 1,
                    None => acc.labels.push((p.label, 1)),
                }
            }
        }
    }

    let points = accums
        .into_iter()
        .map(|acc| {
            let n = acc.count as f64;
            // Clamping to the member bounding box keeps the rounded centroid
            // inside the voxel, so a second pass is a no-op.
            let coord = |axis: usize| (acc.sum[axis] / n).clamp(acc.min[axis], acc.max[axis]);
            let label = acc
                .labels
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|&(l, _)| l)
                .unwrap_or(0);
            LabeledPoint {
                position: Point3::new(coord(0), coord(1), coord(2)),
                label,
                mask_index: acc.mask_index,
            }
        })
        .collect();
    Ok(LabeledPointCloud::from_points(points))
}
