//! ICP pose refinement of a CAD model against a depth-derived scene cloud.
//!
//! The model (surface samples, in model coordinates) is the moving cloud and
//! the back-projected scene is the fixed one. Each iteration transforms the
//! visible model samples by the current pose, pairs them with their nearest
//! scene point inside the gating distance, solves a least-squares rigid
//! update and left-composes it onto the pose.

use nalgebra::{Matrix3, Matrix6, Point3, Vector3, Vector6, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::DepthImage;
use crate::geometry::{backproject_with_pixels, project, CameraIntrinsics, PointCloud, RigidTransform};
use crate::mesh::TriangleMesh;
use crate::render::{render_depth_only_with, RenderOptions};

use super::kdtree::KdTree;
use super::normals::estimate_normals_with;
use super::sampling::sample_mesh_surface;

/// Share of the model samples that must be matched for `converged`.
pub const MIN_MATCHED_FRACTION: f64 = 0.10;

/// Pose drift after which model-sample visibility is recomputed.
const VISIBILITY_REFRESH_DEG: f64 = 1.0;
const VISIBILITY_REFRESH_MM: f64 = 1.0;

/// RMSE changes below this (mm) count as converged whatever the relative
/// change, since round-off dominates near an exact fit.
const RMSE_ABS_FLOOR: f64 = 1e-9;

/// How many earlier RMSE values a new one is compared against.
const CYCLE_LOOKBACK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpMethod {
    PointToPoint,
    PointToPlane,
}

/// Which model samples take part in correspondence search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    /// Every sample.
    All,
    /// Samples whose face normal points at the camera.
    Facing,
    /// Facing samples that also pass the Z-buffer test of a render at the
    /// current pose.
    ZBuffer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Gating distance for correspondences, mm.
    pub max_correspondence_distance: f64,
    /// Stop once `|Δrmse| / rmse` falls below this.
    pub convergence_rmse_delta: f64,
    pub method: IcpMethod,
    pub sample_count: usize,
    pub normal_k: usize,
    pub seed: u64,
    pub visibility: Visibility,
    /// Measure point-to-plane residuals along the bisector of the model and
    /// scene normals instead of the scene normal alone. On faceted surfaces
    /// the one-sided form carries a curvature bias of the order of 0.01 mm.
    pub symmetric_normals: bool,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_correspondence_distance: 10.0,
            convergence_rmse_delta: 1e-6,
            method: IcpMethod::PointToPlane,
            sample_count: 5000,
            normal_k: 20,
            seed: 0,
            visibility: Visibility::ZBuffer,
            symmetric_normals: true,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.max_correspondence_distance > 0.0
            && self.convergence_rmse_delta > 0.0
            && self.normal_k > 0
            && self.sample_count >= 100;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid ICP parameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    #[serde(with = "crate::annotations::pose_serde")]
    pub refined_pose: RigidTransform,
    /// Correspondence RMSE at the refined pose, mm (point-to-plane residual
    /// for the point-to-plane method).
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub correspondence_count: usize,
    pub method: IcpMethod,
    /// RMSE at the start of every iteration.
    pub rmse_history: Vec<f64>,
    pub diagnostic: Option<String>,
}

/// The fixed side: scene points, their search tree and (when estimable) normals.
pub struct IcpTarget {
    cloud: PointCloud,
    tree: KdTree,
    /// Points on a depth discontinuity; never used as correspondences.
    boundary: Option<Vec<bool>>,
}

impl IcpTarget {
    /// Estimates normals when `normal_k + 1` points are available; otherwise
    /// the target has none and refinement falls back to point-to-point.
    pub fn from_cloud(cloud: PointCloud, normal_k: usize, exec: Exec) -> Self {
        let tree = KdTree::build(&cloud.points);
        let cloud = if cloud.normals.is_some() {
            cloud
        } else {
            match estimate_normals_with(&cloud, normal_k, &tree, exec) {
                Ok(with_normals) => with_normals,
                Err(_) => cloud,
            }
        };
        Self {
            cloud,
            tree,
            boundary: None,
        }
    }

    pub fn from_depth(
        depth: &DepthImage,
        k: &CameraIntrinsics,
        normal_k: usize,
        exec: Exec,
    ) -> Result<Self> {
        let (cloud, pixels) = backproject_with_pixels(depth, k)?;
        let mut target = Self::from_cloud(cloud, normal_k, exec);
        target.boundary = Some(depth_boundary(depth, k, &pixels));
        Ok(target)
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.cloud.normals.is_some()
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }
}

/// Valid pixels with an invalid 8-neighbour (or the image border), or with a
/// neighbour more than five pixel footprints nearer or farther.
fn depth_boundary(depth: &DepthImage, k: &CameraIntrinsics, pixels: &[usize]) -> Vec<bool> {
    let (w, h) = (depth.width as i64, depth.height as i64);
    pixels
        .iter()
        .map(|&i| {
            let (u, v) = (i as i64 % w, i as i64 / w);
            let z = depth.data[i] as f64;
            let jump = 5.0 * z / k.fx;
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (nu, nv) = (u + du, v + dv);
                    if nu < 0 || nv < 0 || nu >= w || nv >= h {
                        return true;
                    }
                    let zn = depth.data[(nv * w + nu) as usize];
                    if !DepthImage::is_valid_value(zn) || (zn as f64 - z).abs() > jump {
                        return true;
                    }
                }
            }
            false
        })
        .collect()
}

/// The moving side: surface samples of a mesh, plus what is needed to decide
/// which of them the camera can see.
pub struct IcpModel<'a> {
    mesh: &'a TriangleMesh,
    samples: PointCloud,
}

impl<'a> IcpModel<'a> {
    pub fn from_mesh(mesh: &'a TriangleMesh, params: &IcpParams) -> Result<Self> {
        params.validate()?;
        let samples = sample_mesh_surface(mesh, params.sample_count, params.seed)?;
        Ok(Self { mesh, samples })
    }

    pub fn samples(&self) -> &PointCloud {
        &self.samples
    }

    /// Refines `initial` (model → camera) against `target`.
    pub fn refine(
        &self,
        target: &IcpTarget,
        k: &CameraIntrinsics,
        initial: &RigidTransform,
        params: &IcpParams,
        exec: Exec,
    ) -> IcpResult {
        let visibility = |pose: &RigidTransform| -> Vec<bool> {
            match params.visibility {
                Visibility::All => vec![true; self.samples.len()],
                Visibility::Facing => facing_mask(&self.samples, pose),
                Visibility::ZBuffer => zbuffer_mask(self.mesh, &self.samples, pose, k, exec),
            }
        };
        run_icp(&self.samples, target, initial, params, exec, visibility)
    }
}

fn facing_mask(samples: &PointCloud, pose: &RigidTransform) -> Vec<bool> {
    match &samples.normals {
        Some(normals) => samples
            .points
            .iter()
            .zip(normals)
            .map(|(p, n)| pose.rotate(n).dot(&pose.apply(p).coords) < 0.0)
            .collect(),
        None => vec![true; samples.len()],
    }
}

fn zbuffer_mask(
    mesh: &TriangleMesh,
    samples: &PointCloud,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    exec: Exec,
) -> Vec<bool> {
    let depth = render_depth_only_with(
        mesh,
        pose,
        k,
        RenderOptions {
            exec,
            ..Default::default()
        },
    );
    let facing = facing_mask(samples, pose);
    samples
        .points
        .iter()
        .zip(facing)
        .map(|(p, facing)| {
            if !facing {
                return false;
            }
            let pc = pose.apply(p);
            let Some(uv) = project(&pc, k) else {
                return false;
            };
            let (u, v) = (uv.x.round(), uv.y.round());
            if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
                return false;
            }
            let z = depth.get(u as u32, v as u32);
            // three pixel footprints absorbs the lateral offset to the pixel centre
            let tolerance = (3.0 * pc.z / k.fx).max(1.0);
            DepthImage::is_valid_value(z) && pc.z <= z as f64 + tolerance
        })
        .collect()
}

/// ICP of a bare point cloud (model coordinates) against a target, with no
/// mesh-based visibility reasoning beyond `params.visibility == Facing`.
pub fn icp_clouds(
    source: &PointCloud,
    target: &IcpTarget,
    initial: &RigidTransform,
    params: &IcpParams,
    exec: Exec,
) -> IcpResult {
    let visibility = |pose: &RigidTransform| match params.visibility {
        Visibility::All => vec![true; source.len()],
        Visibility::Facing | Visibility::ZBuffer => facing_mask(source, pose),
    };
    run_icp(source, target, initial, params, exec, visibility)
}

/// Samples `params.sample_count` model points, back-projects the scene and
/// runs ICP from `initial_pose`.
pub fn icp_refine(
    mesh: &TriangleMesh,
    scene_depth: &DepthImage,
    k: &CameraIntrinsics,
    initial_pose: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    let exec = Exec::default();
    let model = IcpModel::from_mesh(mesh, params)?;
    let target = IcpTarget::from_depth(scene_depth, k, params.normal_k, exec)?;
    if target.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: target.len(),
        });
    }
    Ok(model.refine(&target, k, initial_pose, params, exec))
}

struct Pair {
    p: Point3<f64>,
    q: Point3<f64>,
    n: Option<Vector3<f64>>,
}

fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (((a.transpose() * b).trace() - 1.0) / 2.0)
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

fn run_icp(
    source: &PointCloud,
    target: &IcpTarget,
    initial: &RigidTransform,
    params: &IcpParams,
    exec: Exec,
    visibility: impl Fn(&RigidTransform) -> Vec<bool>,
) -> IcpResult {
    let method = match (params.method, target.has_normals()) {
        (IcpMethod::PointToPlane, true) => IcpMethod::PointToPlane,
        _ => IcpMethod::PointToPoint,
    };
    let mut result = IcpResult {
        refined_pose: *initial,
        rmse: 0.0,
        iterations: 0,
        converged: false,
        correspondence_count: 0,
        method,
        rmse_history: Vec::new(),
        diagnostic: None,
    };
    if target.is_empty() {
        result.diagnostic = Some("empty target cloud".into());
        return result;
    }
    let target_normals = target.cloud.normals.as_deref();
    let gate = params.max_correspondence_distance;
    let min_matched = (MIN_MATCHED_FRACTION * source.len() as f64).ceil() as usize;

    let correspond = |pose: &RigidTransform, mask: &[bool]| -> Vec<Pair> {
        exec.map_range(source.len(), |i| {
            if !mask[i] {
                return None;
            }
            let p = pose.apply(&source.points[i]);
            let (j, _) = target.tree.nearest_within(&p, gate)?;
            if target.boundary.as_ref().is_some_and(|b| b[j]) {
                return None;
            }
            let n = target_normals.map(|ns| {
                let nt = ns[j];
                match (&source.normals, params.symmetric_normals) {
                    (Some(sn), true) => {
                        let np = pose.rotate(&sn[i]);
                        (nt + np * np.dot(&nt).signum()).normalize()
                    }
                    _ => nt,
                }
            });
            Some(Pair {
                p,
                q: target.tree.point(j),
                n,
            })
        })
        .into_iter()
        .flatten()
        .collect()
    };
    let residual_rmse = |pairs: &[Pair]| -> f64 {
        let sum: f64 = match method {
            IcpMethod::PointToPoint => pairs.iter().map(|c| (c.p - c.q).norm_squared()).sum(),
            IcpMethod::PointToPlane => pairs
                .iter()
                .map(|c| (c.p - c.q).dot(&c.n.expect("target normals")).powi(2))
                .sum(),
        };
        (sum / pairs.len() as f64).sqrt()
    };

    let mut pose = *initial;
    let mut mask = visibility(&pose);
    let mut mask_pose = pose;
    let mut rmse_converged = false;
    let mut moved_since_eval = false;

    for _ in 0..params.max_iterations {
        if rotation_angle_deg(&pose.rotation, &mask_pose.rotation) > VISIBILITY_REFRESH_DEG
            || (pose.translation - mask_pose.translation).norm() > VISIBILITY_REFRESH_MM
        {
            mask = visibility(&pose);
            mask_pose = pose;
        }
        let pairs = correspond(&pose, &mask);
        result.iterations += 1;
        result.correspondence_count = pairs.len();
        moved_since_eval = false;
        if pairs.len() < 3 {
            result.diagnostic = Some(format!(
                "only {} correspondences within {gate} mm",
                pairs.len()
            ));
            break;
        }
        let rmse = residual_rmse(&pairs);
        result.rmse = rmse;
        result.rmse_history.push(rmse);
        // Gated nearest-neighbour assignment can settle into a short cycle of
        // correspondence sets; a repeat of a recent RMSE counts as converged.
        let h = &result.rmse_history;
        let settled = h.iter().rev().skip(1).take(CYCLE_LOOKBACK).any(|&prev| {
            let change = (prev - rmse).abs();
            change < params.convergence_rmse_delta * prev || change < RMSE_ABS_FLOOR
        });
        if settled {
            rmse_converged = true;
            break;
        }

        let update = match method {
            IcpMethod::PointToPoint => solve_point_to_point(&pairs),
            IcpMethod::PointToPlane => solve_point_to_plane(&pairs),
        };
        match update {
            Ok(delta) => {
                pose = delta.compose(&pose);
                moved_since_eval = true;
            }
            Err(e) => {
                result.diagnostic = Some(e.to_string());
                break;
            }
        }
    }

    if moved_since_eval {
        // report the residual at the pose actually returned
        let pairs = correspond(&pose, &mask);
        result.correspondence_count = pairs.len();
        if pairs.len() >= 3 {
            result.rmse = residual_rmse(&pairs);
        }
    }
    result.refined_pose = pose;
    result.converged = rmse_converged && result.correspondence_count >= min_matched;
    if rmse_converged && !result.converged && result.diagnostic.is_none() {
        result.diagnostic = Some(format!(
            "only {} of {} samples matched",
            result.correspondence_count,
            source.len()
        ));
    }
    result
}

/// Closed-form least-squares rigid motion taking each `p` onto its `q`
/// (Kabsch / SVD of the cross-covariance).
pub fn kabsch(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Numerical(format!(
            "need at least 3 correspondences, have {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let h = src
        .iter()
        .zip(dst)
        .fold(Matrix3::zeros(), |acc, (p, q)| {
            acc + (p.coords - cs) * (q.coords - cd).transpose()
        });
    let svd = SVD::new(h, true, true);
    let sv = svd.singular_values;
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(Error::Numerical(
            "degenerate correspondences (coincident or collinear)".into(),
        ));
    }
    let u = svd.u.expect("svd u");
    let v = svd.v_t.expect("svd v_t").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

fn solve_point_to_point(pairs: &[Pair]) -> Result<RigidTransform> {
    let (src, dst): (Vec<_>, Vec<_>) = pairs.iter().map(|c| (c.p, c.q)).unzip();
    kabsch(&src, &dst)
}

/// Linearised point-to-plane step: minimises `Σ ((ω×p + t + p − q)·n)²`
/// and maps the rotation vector `ω` back onto SO(3).
fn solve_point_to_plane(pairs: &[Pair]) -> Result<RigidTransform> {
    let mut ata = Matrix6::<f64>::zeros();
    let mut atb = Vector6::<f64>::zeros();
    for c in pairs {
        let n = c.n.expect("target normals");
        let pxn = c.p.coords.cross(&n);
        let a = Vector6::new(pxn.x, pxn.y, pxn.z, n.x, n.y, n.z);
        let b = (c.q - c.p).dot(&n);
        ata += a * a.transpose();
        atb += a * b;
    }
    let eig = ata.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Err(Error::Numerical(
            "point-to-plane system is rank deficient (surface does not constrain all 6 DoF)"
                .into(),
        ));
    }
    let x = ata
        .cholesky()
        .ok_or_else(|| Error::Numerical("point-to-plane normal equations not positive definite".into()))?
        .solve(&atb);
    let omega = Vector3::new(x[0], x[1], x[2]);
    let t = Vector3::new(x[3], x[4], x[5]);
    Ok(RigidTransform::from_rotation_vector(&omega).with_translation(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::transform_points;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-80.0..80.0),
                    rng.random_range(400.0..560.0),
                )
            })
            .collect()
    }

    fn rot_err(a: &RigidTransform, b: &RigidTransform) -> f64 {
        rotation_angle_deg(&a.rotation, &b.rotation)
    }

    /// Independent optimum: Horn's quaternion method (largest eigenvector
    /// of the 4×4 symmetric matrix built from the cross-covariance).
    fn horn(src: &[Point3<f64>], dst: &[Point3<f64>]) -> RigidTransform {
        let n = src.len() as f64;
        let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
        let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
        let mut s = Matrix3::zeros();
        for (p, q) in src.iter().zip(dst) {
            s += (p.coords - cs) * (q.coords - cd).transpose();
        }
        let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
        let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
        let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
        let nmat = nalgebra::Matrix4::new(
            sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
            syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
            szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
            sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
        );
        let eig = nalgebra::SymmetricEigen::new(nmat);
        let q = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
        let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        let r = *uq.to_rotation_matrix().matrix();
        RigidTransform { rotation: r, translation: cd - r * cs }
    }

    #[test]
    fn kabsch_matches_horn_on_noisy_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let src = blob(4 + trial % 7, 100 + trial as u64);
            let truth = RigidTransform::from_axis_angle(
                &Vector3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1),
                rng.random_range(0.0..3.0),
            )
            .with_translation(Vector3::new(rng.random_range(-50.0..50.0), 3.0, -7.0));
            let dst: Vec<_> = src
                .iter()
                .map(|p| truth.apply(p) + Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let a = kabsch(&src, &dst).unwrap();
            let b = horn(&src, &dst);
            assert!((a.rotation - b.rotation).abs().max() < 1e-8);
            assert!((a.translation - b.translation).abs().max() < 1e-6);
        }
    }

    #[test]
    fn kabsch_rejects_collinear_points() {
        let src: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(kabsch(&src, &src), Err(Error::Numerical(_))));
        assert!(kabsch(&src[..2], &src[..2]).is_err());
    }

    fn p2p_params() -> IcpParams {
        IcpParams {
            method: IcpMethod::PointToPoint,
            max_correspondence_distance: 1e6,
            visibility: Visibility::All,
            max_iterations: 100,
            convergence_rmse_delta: 1e-10,
            ..Default::default()
        }
    }

    #[test]
    fn exact_recovery_point_to_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let target_pts = blob(600, trial);
            let truth = RigidTransform::from_axis_angle(
                &Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                rng.random_range(0.0..3f64).to_radians(),
            );
            let truth = RigidTransform {
                // rotate about the cloud rather than the camera origin
                translation: Vector3::new(0.0, 0.0, 480.0) - truth.rotation * Vector3::new(0.0, 0.0, 480.0)
                    + Vector3::new(rng.random_range(-1.7..1.7), rng.random_range(-1.7..1.7), rng.random_range(-1.7..1.7)),
                ..truth
            };
            // source = truth⁻¹ applied to a subset, so ICP from identity must find truth
            let subset: Vec<_> = target_pts.iter().step_by(2).copied().collect();
            let source = transform_points(&PointCloud::new(subset), &truth.inverse());
            let target = IcpTarget::from_cloud(PointCloud::new(target_pts), 20, Exec::default());
            let res = icp_clouds(&source, &target, &RigidTransform::identity(), &p2p_params(), Exec::default());
            assert!(rot_err(&res.refined_pose, &truth) < 0.1, "trial {trial}");
            assert!((res.refined_pose.translation - truth.translation).norm() < 0.01, "trial {trial}");
            assert!(res.converged, "trial {trial}: {:?} {:?}", res.iterations, res.rmse_history);
        }
    }

    #[test]
    fn point_to_point_rmse_is_monotone() {
        let target_pts = blob(800, 3);
        let truth = RigidTransform::rot_z(8.0).compose(&RigidTransform::rot_x(-6.0));
        let source = transform_points(&PointCloud::new(target_pts[..400].to_vec()), &truth);
        let target = IcpTarget::from_cloud(PointCloud::new(target_pts), 20, Exec::default());
        let res = icp_clouds(&source, &target, &RigidTransform::identity(), &p2p_params(), Exec::default());
        assert!(res.rmse_history.len() > 2);
        for w in res.rmse_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", res.rmse_history);
        }
    }

    #[test]
    fn degenerate_target_is_reported_not_fatal() {
        let line: Vec<_> = (0..50).map(|i| Point3::new(i as f64, 0.0, 500.0)).collect();
        let target = IcpTarget::from_cloud(PointCloud::new(line.clone()), 20, Exec::default());
        let res = icp_clouds(&PointCloud::new(line), &target, &RigidTransform::identity(), &p2p_params(), Exec::default());
        assert!(!res.converged);
        assert!(res.diagnostic.is_some());

        let far = IcpTarget::from_cloud(PointCloud::new(blob(50, 1)), 20, Exec::default());
        let src = PointCloud::new(vec![Point3::new(0.0, 0.0, -1e4); 10]);
        let res = icp_clouds(&src, &far, &RigidTransform::identity(), &IcpParams { visibility: Visibility::All, ..Default::default() }, Exec::default());
        assert!(!res.converged);
        assert!(res.diagnostic.unwrap().contains("correspondences"));
    }

    #[test]
    fn params_validation() {
        assert!(IcpParams::default().validate().is_ok());
        assert!(IcpParams { sample_count: 50, ..Default::default() }.validate().is_err());
        assert!(IcpParams { max_correspondence_distance: 0.0, ..Default::default() }.validate().is_err());
    }
}
