//! Rigid transforms, the pinhole camera and point clouds.
//!
//! Conventions: right-handed camera frame with +Z looking into the scene,
//! image origin top-left with `v` growing downward, all lengths in
//! millimetres. Pinhole pixel coordinates put the centre of pixel `(u, v)` at
//! the integer position `(u, v)`; in raster terms pixel `(u, v)` covers the
//! continuous square `[u, u+1) x [v, v+1)` with its sample at `(u+0.5, v+0.5)`.

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, Vector3, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::DepthImage;

/// Element-wise tolerance on `RᵀR − I` and `det R − 1` for a valid rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Drift beyond which [`RigidTransform::compose`] re-orthonormalises.
const COMPOSE_DRIFT: f64 = 1e-9;

/// A proper rigid motion `p ↦ R·p + t` (translation in mm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform and checks the rotation invariants.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `angle_rad` about `axis` (need not be normalised), no translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle_rad: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle_rad);
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation from a rotation vector (axis × angle); zero gives identity.
    pub fn from_rotation_vector(omega: &Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::new(*omega).matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_x(deg: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), deg.to_radians())
    }

    pub fn rot_y(deg: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), deg.to_radians())
    }

    pub fn rot_z(deg: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), deg.to_radians())
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    /// Row-major 3×3 rotation, the BOP `cam_R_m2c` layout.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::from_column_slice(translation),
        )
    }

    /// Largest element of `|RᵀR − I|` together with `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
        gram.max((r.determinant() - 1.0).abs())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("transform has non-finite entries".into()));
        }
        let err = self.orthonormality_error();
        if err > ROTATION_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal with det +1 (error {err:.3e})"
            )));
        }
        Ok(())
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut out = RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        if out.orthonormality_error() > COMPOSE_DRIFT {
            out.rotation = nearest_rotation(&out.rotation);
        }
        out
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }
}

/// Projects `m` onto SO(3) (closest rotation in Frobenius norm).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Row-major `cam_K`.
    pub fn k_row_major(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    pub fn from_k_row_major(k: &[f64; 9], width: u32, height: u32) -> Result<Self> {
        Self::new(k[0], k[4], k[2], k[5], width, height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Pinhole projection of a camera-frame point; `None` when `z <= 0`.
#[inline]
pub fn project(p: &Point3<f64>, k: &CameraIntrinsics) -> Option<Point2<f64>> {
    if p.z <= 0.0 {
        return None;
    }
    Some(Point2::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

/// Camera-frame point seen at pixel `(u, v)` with depth `z`.
#[inline]
pub fn unproject(u: f64, v: f64, z: f64, k: &CameraIntrinsics) -> Point3<f64> {
    Point3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z)
}

/// One point per valid depth pixel, in row-major pixel order.
pub fn backproject(depth: &DepthImage, k: &CameraIntrinsics) -> Result<PointCloud> {
    backproject_with_pixels(depth, k).map(|(cloud, _)| cloud)
}

/// Like [`backproject`], also returning the linear pixel index of every point.
pub fn backproject_with_pixels(
    depth: &DepthImage,
    k: &CameraIntrinsics,
) -> Result<(PointCloud, Vec<usize>)> {
    if depth.width != k.width || depth.height != k.height {
        return Err(Error::DimensionMismatch(format!(
            "depth is {}x{}, intrinsics expect {}x{}",
            depth.width, depth.height, k.width, k.height
        )));
    }
    let w = depth.width as usize;
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for (i, &z) in depth.data.iter().enumerate() {
        if DepthImage::is_valid_value(z) {
            let (u, v) = (i % w, i / w);
            points.push(unproject(u as f64, v as f64, z as f64, k));
            pixels.push(i);
        }
    }
    Ok((PointCloud::new(points), pixels))
}

/// Points in mm with optional unit normals and sRGB colours.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self {
            points,
            normals: None,
            colors: None,
        }
    }

    pub fn with_normals(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let cloud = Self {
            points,
            normals: Some(normals),
            colors: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(normals) = &self.normals {
            if normals.len() != self.points.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} normals for {} points",
                    normals.len(),
                    self.points.len()
                )));
            }
            if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-4) {
                return Err(Error::InvalidInput(format!("normal {i} is not unit length")));
            }
        }
        if let Some(colors) = &self.colors {
            if colors.len() != self.points.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} colours for {} points",
                    colors.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }
}

/// `p ↦ R·p + t` on every point; normals are only rotated.
pub fn transform_points(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|n| t.rotate(n)).collect()),
        colors: cloud.colors.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn vga() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn max_abs_diff(a: &RigidTransform, b: &RigidTransform) -> f64 {
        (a.rotation - b.rotation)
            .abs()
            .max()
            .max((a.translation - b.translation).abs().max())
    }

    #[test]
    fn compose_identity_and_inverse() {
        let t = RigidTransform::rot_x(23.0).with_translation(Vector3::new(4.0, -7.0, 500.0));
        assert_eq!(RigidTransform::identity().compose(&t), t);
        let id = t.compose(&t.inverse());
        assert!(max_abs_diff(&id, &RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn compose_rotz_against_matrix_product() {
        // oracle: explicit matrix of rotZ(70°)
        let (s, c) = 70f64.to_radians().sin_cos();
        let expected = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let got = RigidTransform::rot_z(30.0).compose(&RigidTransform::rot_z(40.0));
        assert!((got.rotation - expected).abs().max() < 1e-9);
    }

    #[test]
    fn invert_cases() {
        assert_eq!(
            RigidTransform::identity().inverse(),
            RigidTransform::identity()
        );
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(t.inverse().translation, Vector3::new(-1.0, -2.0, -3.0));
        let r = RigidTransform::rot_z(90.0).with_translation(Vector3::new(5.0, 0.0, 1.0));
        assert!(max_abs_diff(&r.compose(&r.inverse()), &RigidTransform::identity()) < 1e-9);
        assert!(max_abs_diff(&r.inverse().compose(&r), &RigidTransform::identity()) < 1e-9);
    }

    #[test]
    fn rejects_non_rotation() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0; // reflection
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        assert!(RigidTransform::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
    }

    #[test]
    fn compose_reorthonormalises_drift() {
        let mut a = RigidTransform::rot_y(10.0);
        a.rotation[(0, 1)] += 1e-7;
        let out = a.compose(&RigidTransform::identity());
        assert!(out.orthonormality_error() < 1e-12);
    }

    #[test]
    fn project_examples() {
        let k = vga();
        let c = project(&Point3::new(0.0, 0.0, 1000.0), &k).unwrap();
        assert_eq!((c.x, c.y), (320.0, 240.0));
        let c = project(&Point3::new(100.0, 0.0, 1000.0), &k).unwrap();
        assert_eq!((c.x, c.y), (370.0, 240.0));
        assert!(project(&Point3::new(0.0, 0.0, -5.0), &k).is_none());
        assert!(project(&Point3::new(1.0, 1.0, 0.0), &k).is_none());
    }

    #[test]
    fn backproject_examples() {
        let k = vga();
        let empty = DepthImage::new(640, 480);
        assert!(backproject(&empty, &k).unwrap().is_empty());

        let mut d = DepthImage::new(640, 480);
        d.set(320, 240, 1000.0);
        d.set(10, 10, f32::NAN);
        d.set(11, 10, -3.0);
        let cloud = backproject(&d, &k).unwrap();
        assert_eq!(cloud.points, vec![Point3::new(0.0, 0.0, 1000.0)]);

        assert!(matches!(
            backproject(&DepthImage::new(10, 10), &k),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn transform_points_examples() {
        let cloud = PointCloud::with_normals(
            vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 3.0)],
            vec![Vector3::x(), Vector3::z()],
        )
        .unwrap();
        assert_eq!(transform_points(&cloud, &RigidTransform::identity()), cloud);

        let shifted =
            transform_points(&cloud, &RigidTransform::from_translation(Vector3::new(0.0, 0.0, 5.0)));
        assert_eq!(shifted.points[1].z, 8.0);
        assert_eq!(shifted.normals.as_ref().unwrap()[1], Vector3::z());

        let rotated = transform_points(&cloud, &RigidTransform::rot_z(90.0));
        assert_abs_diff_eq!(rotated.points[0], Point3::new(0.0, 1.0, 0.0), epsilon = 1e-9);
        assert_abs_diff_eq!(rotated.normals.unwrap()[0], Vector3::y(), epsilon = 1e-9);
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            0.0f64..std::f64::consts::PI,
            prop::array::uniform3(-500.0f64..500.0),
        )
            .prop_filter("axis", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
            .prop_map(|(axis, angle, t)| {
                RigidTransform::from_axis_angle(&Vector3::from(axis), angle)
                    .with_translation(Vector3::from(t))
            })
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(max_abs_diff(&left, &right) < 1e-9);
        }

        #[test]
        fn transform_points_respects_compose(
            a in arb_transform(),
            b in arb_transform(),
            pts in prop::collection::vec(prop::array::uniform3(-200.0f64..200.0), 1..20),
        ) {
            let cloud = PointCloud::new(pts.into_iter().map(Point3::from).collect());
            let twice = transform_points(&transform_points(&cloud, &b), &a);
            let once = transform_points(&cloud, &a.compose(&b));
            for (p, q) in twice.points.iter().zip(&once.points) {
                prop_assert!((p - q).abs().max() < 1e-9);
            }
        }

        #[test]
        fn backproject_project_round_trip(
            pixels in prop::collection::vec((0u32..64, 0u32..48, 1.0f32..5000.0), 1..50)
        ) {
            let k = CameraIntrinsics::new(70.0, 65.0, 31.7, 23.2, 64, 48).unwrap();
            let mut d = DepthImage::new(64, 48);
            for &(u, v, z) in &pixels {
                d.set(u, v, z);
            }
            let (cloud, idx) = backproject_with_pixels(&d, &k).unwrap();
            for (p, i) in cloud.points.iter().zip(idx) {
                let uv = project(p, &k).unwrap();
                let (u, v) = ((i % 64) as f64, (i / 64) as f64);
                prop_assert!((uv.x - u).abs() <= 0.5 && (uv.y - v).abs() <= 0.5);
            }
        }
    }
}
