use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::cloud::{LabeledPoint, LabeledPointCloud};
use crate::error::{Error, Result};
use crate::image::{DepthMap, InstanceMap};

const ROTATION_TOLERANCE: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be finite and positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Camera-frame point for pixel `(u, v)` at optical-axis depth `z`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Pixel coordinates and depth of a camera-frame point.
    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64, f64) {
        (
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
            p.z,
        )
    }
}

/// Camera-to-world rigid transform (x right, y down, z forward in the camera).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose(Matrix4<f64>);

impl Pose {
    pub fn new(matrix: Matrix4<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("pose has non-finite entries".into()));
        }
        let last = matrix.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidInput(format!(
                "pose last row must be (0, 0, 0, 1), got ({}, {}, {}, {})",
                last[0], last[1], last[2], last[3]
            )));
        }
        let r: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho_err = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = r.determinant();
        if ortho_err > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "pose rotation not orthonormal (error {ortho_err:.3e}, det {det:.9})"
            )));
        }
        Ok(Self(matrix))
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self> {
        Self::new(Matrix4::from_row_slice(values))
    }

    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self(Matrix4::new_translation(&t))
    }

    /// Camera at `eye` looking at `target`, with image "up" closest to
    /// `world_up`.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, world_up: Vector3<f64>) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidInput("look_at eye coincides with target".into()))?;
        let right = forward
            .cross(&world_up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidInput("look_at up is parallel to view".into()))?;
        let down = forward.cross(&right);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 0).copy_from(&right);
        m.fixed_view_mut::<3, 1>(0, 1).copy_from(&down);
        m.fixed_view_mut::<3, 1>(0, 2).copy_from(&forward);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye.coords);
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation() * p + self.translation()
    }

    /// World-to-camera transform of a point.
    #[inline]
    pub fn inverse_transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation().transpose() * (p - self.translation()))
    }
}

/// Lifts every pixel with positive depth and non-zero ID into the world frame.
///
/// Both `label` and `mask_index` of an emitted point are the pixel's ID.
pub fn backproject(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    pose: &Pose,
    ids: &InstanceMap,
) -> Result<LabeledPointCloud> {
    depth.check_shape(ids, "backproject depth vs instance map")?;
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(Error::dimension(
            "backproject depth vs intrinsics",
            format!("{}x{}", intr.height, intr.width),
            format!("{}x{}", depth.height(), depth.width()),
        ));
    }
    let rotation = pose.rotation();
    let translation = pose.translation();
    let mut points = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let z = *depth.get(u, v);
            if !z.is_finite() || z < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "depth at pixel ({u}, {v}) is {z}; expected finite and >= 0"
                )));
            }
            let id = *ids.get(u, v);
            if z == 0.0 || id == 0 {
                continue;
            }
            let cam = intr.unproject(u as f64, v as f64, z as f64);
            points.push(LabeledPoint {
                position: Point3::from(rotation * cam.coords + translation),
                label: id,
                mask_index: id,
            });
        }
    }
    Ok(LabeledPointCloud::from_points(points))
}

/// Inverse of [`backproject`] for a single world point: `(u, v, depth)`.
pub fn reproject(point: &Point3<f64>, intr: &CameraIntrinsics, pose: &Pose) -> (f64, f64, f64) {
    intr.project(&pose.inverse_transform_point(point))
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
        }};
    }

    fn intr(w: usize, h: usize, f: f64, c: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(f, f, c, c, w, h).unwrap()
    }

    #[test]
    fn principal_ray_lands_on_optical_axis() {
        let k = CameraIntrinsics::new(100.0, 100.0, 4.0, 3.0, 9, 7).unwrap();
        let mut depth = DepthMap::filled(9, 7, 0.0);
        depth.set(4, 3, 2.0);
        let ids = InstanceMap::filled(9, 7, 1);
        let cloud = backproject(&depth, &k, &Pose::identity(), &ids).unwrap();
        assert_eq!(cloud.len(), 1);
        let p = cloud.points()[0].position;
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 2.0));
    }

    #[test]
    fn invalid_depth_and_background_are_skipped() {
        let k = intr(2, 2, 1.0, 0.0);
        let depth = DepthMap::from_vec(2, 2, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
        let ids = InstanceMap::from_vec(2, 2, vec![1, 0, 2, 3]).unwrap();
        let cloud = backproject(&depth, &k, &Pose::identity(), &ids).unwrap();
        let labels: Vec<u32> = cloud.points().iter().map(|p| p.label).collect();
        assert_eq!(labels, vec![2, 3]);
    }

    #[test]
    fn four_pixel_map_matches_matrix_product() {
        let k = intr(2, 2, 1.0, 0.0);
        let depth = DepthMap::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ids = InstanceMap::from_vec(2, 2, vec![1, 2, 3, 4]).unwrap();
        let pose = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let cloud = backproject(&depth, &k, &pose, &ids).unwrap();
        // Oracle: explicit homogeneous product T · (x, y, z, 1) per pixel.
        let t = [
            [1.0, 0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let pixels = [(0.0, 0.0, 1.0), (1.0, 0.0, 2.0), (0.0, 1.0, 3.0), (1.0, 1.0, 4.0)];
        for (point, &(u, v, z)) in cloud.points().iter().zip(&pixels) {
            let cam = [u * z, v * z, z, 1.0];
            let mut world = [0.0; 4];
            for r in 0..4 {
                world[r] = (0..4).map(|c| t[r][c] * cam[c]).sum();
            }
            assert_close!(point.position.x, world[0], 1e-12);
            assert_close!(point.position.y, world[1], 1e-12);
            assert_close!(point.position.z, world[2], 1e-12);
        }
        // (1,0) at depth 2: (1*2 + 1, 0, 2)
        assert_eq!(cloud.points()[1].position, Point3::new(3.0, 0.0, 2.0));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let k = intr(2, 2, 1.0, 0.0);
        let depth = DepthMap::filled(2, 2, 1.0);
        let ids = InstanceMap::filled(3, 2, 1);
        let err = backproject(&depth, &k, &Pose::identity(), &ids).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn non_finite_depth_is_input_error() {
        let k = intr(2, 1, 1.0, 0.0);
        let depth = DepthMap::from_vec(2, 1, vec![1.0, f32::NAN]).unwrap();
        let ids = InstanceMap::filled(2, 1, 1);
        let err = backproject(&depth, &k, &Pose::identity(), &ids).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn pose_validation() {
        let mut m = Matrix4::identity();
        m[(0, 0)] = 2.0;
        assert!(Pose::new(m).is_err());
        let mut m = Matrix4::identity();
        m[(3, 0)] = 0.5;
        assert!(Pose::new(m).is_err());
        // reflection has det -1
        let mut m = Matrix4::identity();
        m[(2, 2)] = -1.0;
        assert!(Pose::new(m).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.5, 3.9, 4, 4).is_ok());
    }

    #[test]
    fn look_at_points_optical_axis_at_target() {
        let eye = Point3::new(1.0, -2.0, 1.5);
        let target = Point3::new(0.3, 0.4, 0.2);
        let pose = Pose::look_at(eye, target, Vector3::z()).unwrap();
        let cam = pose.inverse_transform_point(&target);
        assert_close!(cam.x, 0.0, 1e-12);
        assert_close!(cam.y, 0.0, 1e-12);
        assert_close!(cam.z, (target - eye).norm(), 1e-12);
        // Points above the target appear higher in the image (smaller v).
        let above = pose.inverse_transform_point(&(target + Vector3::z()));
        assert!(above.y < 0.0);
    }
}
