use std::collections::HashMap;

use nalgebra::Point3;

use super::cloud::LabeledPointCloud;
use super::voxel::voxel_key;

/// Uniform hash grid over a point set for fixed-radius queries.
///
/// The cell edge equals the query radius, so every neighbor within the radius
/// lives in the 3×3×3 block of cells around the query.
pub struct VoxelHashGrid<'a> {
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    positions: Vec<&'a Point3<f64>>,
    cell_size: f64,
}

impl<'a> VoxelHashGrid<'a> {
    pub fn build(positions: impl IntoIterator<Item = &'a Point3<f64>>, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let positions: Vec<_> = positions.into_iter().collect();
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in positions.iter().enumerate() {
            cells.entry(voxel_key(p, cell_size)).or_default().push(i as u32);
        }
        Self {
            cells,
            positions,
            cell_size,
        }
    }

    /// Index of the closest point strictly closer than the cell size, ties
    /// broken by the smaller index.
    pub fn nearest_within(&self, query: &Point3<f64>) -> Option<usize> {
        let (kx, ky, kz) = voxel_key(query, self.cell_size);
        let radius_sq = self.cell_size * self.cell_size;
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &idx in bucket {
                        let d2 = (self.positions[idx as usize] - query).norm_squared();
                        if d2 >= radius_sq {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bd, bi)) => d2 < bd || (d2 == bd && idx < bi),
                        };
                        if better {
                            best = Some((d2, idx));
                        }
                    }
                }
            }
        }
        best.map(|(_, i)| i as usize)
    }
}

/// Nearest-neighbor pairs closer than `tau_d` between two clouds.
///
/// Every point of the smaller cloud (`a` on equal sizes) contributes at most
/// one pair: itself and its nearest neighbor in the other cloud. Pairs are
/// `(index_in_a, index_in_b)`, sorted.
pub fn radius_match(a: &LabeledPointCloud, b: &LabeledPointCloud, tau_d: f64) -> Vec<(usize, usize)> {
    assert!(tau_d > 0.0, "tau_d must be positive");
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let a_is_query = a.len() <= b.len();
    let (query, target) = if a_is_query { (a, b) } else { (b, a) };
    let grid = VoxelHashGrid::build(target.points().iter().map(|p| &p.position), tau_d);
    let mut pairs: Vec<(usize, usize)> = query
        .points()
        .iter()
        .enumerate()
        .filter_map(|(qi, p)| {
            grid.nearest_within(&p.position)
                .map(|ti| if a_is_query { (qi, ti) } else { (ti, qi) })
        })
        .collect();
    pairs.sort_unstable();
    pairs
}
