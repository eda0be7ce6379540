//! Desk-scale reproductions of the two experiments: render/write timing and
//! the perturb-then-refine ICP study.

use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::DepthImage;
use crate::geometry::{CameraIntrinsics, PointCloud, RigidTransform};
use crate::mesh::TriangleMesh;
use crate::metrics::{success_curve, PoseError, ThresholdCurve};
use crate::registration::{IcpModel, IcpParams, IcpTarget};
use crate::render::{render_depth_only_with, render_rgbd_with, write_frame, RenderOptions};

pub const DEFAULT_THRESHOLDS_MM: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub count: usize,
    pub max_rotation_deg: f64,
    pub max_translation_mm: f64,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            max_rotation_deg: 10.0,
            max_translation_mm: 10.0,
            seed: 0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_rotation_deg >= 0.0
            && self.max_rotation_deg <= 180.0
            && self.max_translation_mm >= 0.0
            && self.max_translation_mm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid perturbation spec {self:?}")))
        }
    }
}

/// The `index`-th perturbation of `gt`: a rotation about a uniformly random
/// axis through the object origin by an angle uniform in
/// `[0, max_rotation_deg]`, plus a shift in a uniformly random direction by a
/// length uniform in `[0, max_translation_mm]`. Each index draws from its own
/// ChaCha stream, so results do not depend on evaluation order.
pub fn perturb_pose(gt: &RigidTransform, spec: &PerturbationSpec, index: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let axis = Vector3::from(UnitSphere.sample(&mut rng));
    let angle = rng.random::<f64>() * spec.max_rotation_deg;
    let dir = Vector3::from(UnitSphere.sample(&mut rng));
    let shift = rng.random::<f64>() * spec.max_translation_mm;
    if angle == 0.0 && shift == 0.0 {
        return *gt;
    }
    let r = RigidTransform::from_axis_angle(&axis, angle.to_radians());
    RigidTransform {
        rotation: r.rotation * gt.rotation,
        translation: gt.translation + dir * shift,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub pose_id: usize,
    pub rot_before_deg: f64,
    pub trans_before_mm: f64,
    pub add_before_mm: f64,
    pub rot_after_deg: f64,
    pub trans_after_mm: f64,
    pub add_after_mm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub count: usize,
    pub noise_sigma_mm: f64,
    pub median_add_before_mm: f64,
    pub median_add_after_mm: f64,
    pub converged: usize,
    pub curve_before: Option<ThresholdCurve>,
    pub curve_after: Option<ThresholdCurve>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpStudy {
    pub rows: Vec<StudyRow>,
    pub summary: StudySummary,
}

impl IcpStudy {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut s = String::from_utf8(bytes).expect("csv is utf-8");
        if self.rows.is_empty() {
            s = "pose_id,rot_before_deg,trans_before_mm,add_before_mm,rot_after_deg,trans_after_mm,add_after_mm,iterations,converged\n".into();
        }
        Ok(s)
    }

    /// Share of refined poses with ADD strictly below `threshold_mm`.
    pub fn success_rate(&self, threshold_mm: f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.add_after_mm < threshold_mm).count() as f64 / self.rows.len() as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Adds zero-mean Gaussian noise to the valid pixels; pixels pushed to or
/// below zero stay at a tiny positive depth so validity is preserved.
pub fn add_depth_noise(depth: &mut DepthImage, sigma_mm: f64, seed: u64) -> Result<()> {
    if sigma_mm == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma_mm).map_err(|e| Error::InvalidInput(format!("noise sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in depth.data.iter_mut() {
        if DepthImage::is_valid_value(*z) {
            *z = ((*z as f64 + normal.sample(&mut rng)) as f32).max(f32::MIN_POSITIVE);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    /// Gaussian depth noise added to the ground-truth render, mm.
    pub noise_sigma_mm: f64,
    pub noise_seed: u64,
    pub thresholds_mm: Vec<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            noise_sigma_mm: 0.0,
            noise_seed: 0,
            thresholds_mm: DEFAULT_THRESHOLDS_MM.to_vec(),
        }
    }
}

/// Renders the ground-truth depth once, then refines `spec.count` perturbed
/// poses against it (in parallel across poses under [`Exec::Parallel`]).
/// ADD uses the mesh vertices.
pub fn run_icp_study(
    mesh: &TriangleMesh,
    gt: &RigidTransform,
    k: &CameraIntrinsics,
    spec: &PerturbationSpec,
    params: &IcpParams,
    opts: &StudyOptions,
    exec: Exec,
) -> Result<IcpStudy> {
    spec.validate()?;
    params.validate()?;
    let started = Instant::now();
    let mut depth = render_depth_only_with(mesh, gt, k, RenderOptions { exec, ..Default::default() });
    add_depth_noise(&mut depth, opts.noise_sigma_mm, opts.noise_seed)?;
    let target = IcpTarget::from_depth(&depth, k, params.normal_k, exec)?;
    if target.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: target.len(),
        });
    }
    let model = IcpModel::from_mesh(mesh, params)?;
    let points: PointCloud = mesh.vertex_cloud();

    // parallelism goes across poses; each refinement runs sequentially inside
    let rows = exec.map_range(spec.count, |i| -> Result<StudyRow> {
        let initial = perturb_pose(gt, spec, i as u64);
        let before = PoseError::between(&points, &initial, gt)?;
        let res = model.refine(&target, k, &initial, params, Exec::Sequential);
        let after = PoseError::between(&points, &res.refined_pose, gt)?;
        Ok(StudyRow {
            pose_id: i,
            rot_before_deg: before.rotation_deg,
            trans_before_mm: before.translation_mm,
            add_before_mm: before.add_mm,
            rot_after_deg: after.rotation_deg,
            trans_after_mm: after.translation_mm,
            add_after_mm: after.add_mm,
            iterations: res.iterations,
            converged: res.converged,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let before: Vec<f64> = rows.iter().map(|r| r.add_before_mm).collect();
    let after: Vec<f64> = rows.iter().map(|r| r.add_after_mm).collect();
    let curve = |e: &[f64]| -> Result<Option<ThresholdCurve>> {
        if e.is_empty() {
            Ok(None)
        } else {
            success_curve(e, &opts.thresholds_mm).map(Some)
        }
    };
    let summary = StudySummary {
        count: rows.len(),
        noise_sigma_mm: opts.noise_sigma_mm,
        curve_before: curve(&before)?,
        curve_after: curve(&after)?,
        median_add_before_mm: median(before),
        median_add_after_mm: median(after),
        converged: rows.iter().filter(|r| r.converged).count(),
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok(IcpStudy { rows, summary })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Render,
    Write,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub phase: Phase,
    pub durations_s: Vec<f64>,
    pub mean_s: f64,
    /// Population standard deviation.
    pub std_s: f64,
}

impl BenchStats {
    pub fn from_durations(phase: Phase, durations_s: Vec<f64>) -> Self {
        let n = durations_s.len().max(1) as f64;
        let mean_s = durations_s.iter().sum::<f64>() / n;
        let var = durations_s.iter().map(|d| (d - mean_s).powi(2)).sum::<f64>() / n;
        Self {
            phase,
            durations_s,
            mean_s,
            std_s: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderBenchOptions {
    pub runs: usize,
    /// Untimed runs before measuring.
    pub warmup: usize,
    /// Skip the write phase (its stats then hold zero samples).
    pub skip_write: bool,
    pub depth_scale: f64,
    pub exec: Exec,
}

impl Default for RenderBenchOptions {
    fn default() -> Self {
        Self {
            runs: 100,
            warmup: 0,
            skip_write: false,
            depth_scale: crate::annotations::DEFAULT_DEPTH_SCALE,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderBenchReport {
    pub triangles: usize,
    pub width: u32,
    pub height: u32,
    pub init: BenchStats,
    pub render: BenchStats,
    pub write: BenchStats,
    /// Peak resident set size in KiB, where the platform reports it.
    pub peak_rss_kib: Option<u64>,
}

/// Peak resident memory of this process (Linux `VmHWM`).
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse().ok())
}

/// Times `init` once (typically mesh loading), then `runs` render and write
/// phases one after another. Frames are written to `out_dir/rgb.png` and
/// `out_dir/depth.png`, overwritten every run.
pub fn run_render_bench(
    init: impl FnOnce() -> Result<TriangleMesh>,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    opts: &RenderBenchOptions,
    out_dir: &Path,
) -> Result<RenderBenchReport> {
    if opts.runs == 0 {
        return Err(Error::InvalidInput("runs must be >= 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let t0 = Instant::now();
    let mesh = init()?;
    mesh.validate()?;
    let init_s = t0.elapsed().as_secs_f64();

    let ropts = RenderOptions {
        exec: opts.exec,
        ..Default::default()
    };
    let (rgb, depth) = (out_dir.join("rgb.png"), out_dir.join("depth.png"));
    for _ in 0..opts.warmup {
        let f = render_rgbd_with(&mesh, pose, k, ropts);
        if !opts.skip_write {
            write_frame(&f, opts.depth_scale, &rgb, &depth)?;
        }
    }
    let mut render = Vec::with_capacity(opts.runs);
    let mut write = Vec::with_capacity(opts.runs);
    for _ in 0..opts.runs {
        let t = Instant::now();
        let f = render_rgbd_with(&mesh, pose, k, ropts);
        render.push(t.elapsed().as_secs_f64());
        if !opts.skip_write {
            let t = Instant::now();
            write_frame(&f, opts.depth_scale, &rgb, &depth)?;
            write.push(t.elapsed().as_secs_f64());
        }
    }
    Ok(RenderBenchReport {
        triangles: mesh.triangles.len(),
        width: k.width,
        height: k.height,
        init: BenchStats::from_durations(Phase::Init, vec![init_s]),
        render: BenchStats::from_durations(Phase::Render, render),
        write: BenchStats::from_durations(Phase::Write, write),
        peak_rss_kib: peak_rss_kib(),
    })
}
