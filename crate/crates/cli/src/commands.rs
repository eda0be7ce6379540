use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;

use twinspect::annotations::pose_serde::PoseFile;
use twinspect::annotations::{read_dataset, validate_counts, write_dataset, CameraRecord, SceneDataset, DEFAULT_DEPTH_SCALE};
use twinspect::bench::{
    perturb_pose, run_icp_study, run_render_bench, PerturbationSpec, RenderBenchOptions, StudyOptions,
};
use twinspect::evaluate::evaluate as score;
use twinspect::fixtures::{axial_motor, convex_test_mesh, convex_test_pose, default_camera, motor_waypoints};
use twinspect::frame::{read_color_png, read_depth_png};
use twinspect::mesh_io::{read_mesh, write_obj};
use twinspect::pipeline::{run_pipeline, Inspection, InspectParams, InspectionReport, PipelineParams};
use twinspect::registration::{IcpMethod, IcpModel, IcpParams, IcpTarget};
use twinspect::synth::{synth_scene, DefectKind, SynthSpec};
use twinspect::{write_frame, CameraIntrinsics, Error, Exec, RgbdFrame, RigidTransform, TriangleMesh};

use crate::{
    BenchIcpArgs, BenchRenderArgs, DatasetValidateArgs, EvaluateArgs, FixtureArgs, IcpFlags, InspectArgs,
    RefineArgs, RenderArgs, SynthArgs,
};

/// Bad flags, config or arguments (exit code 1).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for numerical failures inside the library, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_numerical() => 2,
        _ => 1,
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing --{flag} (flag or config key {:?})", flag.replace('-', "_"))))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_pose(path: &Path) -> Result<RigidTransform> {
    Ok(read_json::<PoseFile>(path)?.0)
}

fn read_camera(path: &Path) -> Result<(CameraIntrinsics, f64)> {
    let rec: CameraRecord = read_json(path)?;
    let k = rec
        .intrinsics()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((k, rec.depth_scale))
}

fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    read_mesh(path).map_err(|e| usage(e.to_string()))
}

fn icp_params(flags: &IcpFlags) -> Result<IcpParams> {
    let mut p = IcpParams::default();
    if let Some(m) = &flags.icp_method {
        p.method = match m.replace('-', "_").as_str() {
            "point_to_point" => IcpMethod::PointToPoint,
            "point_to_plane" => IcpMethod::PointToPlane,
            other => return Err(usage(format!("unknown ICP method {other:?}"))),
        };
    }
    if let Some(v) = flags.max_iterations {
        p.max_iterations = v;
    }
    if let Some(v) = flags.max_correspondence_distance {
        p.max_correspondence_distance = v;
    }
    if let Some(v) = flags.convergence_rmse_delta {
        p.convergence_rmse_delta = v;
    }
    if let Some(v) = flags.sample_count {
        p.sample_count = v;
    }
    if let Some(v) = flags.normal_k {
        p.normal_k = v;
    }
    if let Some(v) = flags.icp_seed {
        p.seed = v;
    }
    p.validate().map_err(|e| usage(e.to_string()))?;
    Ok(p)
}

pub fn render(a: RenderArgs) -> Result<()> {
    let mesh = load_mesh(&required(a.mesh, "mesh")?)?;
    let pose = read_pose(&required(a.pose, "pose")?)?;
    let (k, file_scale) = read_camera(&required(a.intrinsics, "intrinsics")?)?;
    let out = required(a.out, "out")?;
    let depth_scale = a.depth_scale.unwrap_or(file_scale);
    create_dir(&out)?;
    let frame = twinspect::render_rgbd(&mesh, &pose, &k);
    let valid = frame.depth.valid_count();
    if valid == 0 {
        warn!("the mesh is not visible at this pose; writing an empty depth image");
    }
    let (rgb, depth) = (out.join("rgb.png"), out.join("depth.png"));
    write_frame(&frame, depth_scale, &rgb, &depth)?;
    println!(
        "{}",
        serde_json::json!({
            "rgb": rgb,
            "depth": depth,
            "depth_scale": depth_scale,
            "valid_pixels": valid,
        })
    );
    Ok(())
}

fn inspect_params(a: &InspectArgs) -> Result<PipelineParams> {
    let mut inspect = InspectParams::default();
    if let Some(v) = a.depth_tau {
        inspect.depth_tau = v;
    }
    if let Some(v) = a.color_tau {
        inspect.color_tau = v;
    }
    if let Some(v) = a.clean_radius {
        inspect.clean_radius = v;
    }
    if let Some(v) = a.min_area {
        inspect.min_area = v;
    }
    inspect.validate().map_err(|e| usage(e.to_string()))?;
    Ok(PipelineParams {
        refine: a.refine.unwrap_or(false),
        inspect,
        icp: icp_params(&a.icp)?,
    })
}

fn write_inspection(ins: &Inspection, report_path: &Path, mask_prefix: &Path) -> Result<()> {
    write_json(&ins.report, report_path)?;
    let prefix = mask_prefix.to_string_lossy();
    ins.depth_mask.write_png(Path::new(&format!("{prefix}depth_mask.png")))?;
    ins.color_mask.write_png(Path::new(&format!("{prefix}color_mask.png")))?;
    Ok(())
}

fn summary_line(r: &InspectionReport) -> String {
    let icp = match &r.icp {
        Some(s) => format!(
            ", icp {} after {} iterations (rmse {:.4} mm)",
            if s.converged { "converged" } else { "did not converge" },
            s.iterations,
            s.rmse
        ),
        None => String::new(),
    };
    format!(
        "{}/{:06}: {} depth region(s), {} color region(s){icp}",
        r.scene,
        r.frame_id,
        r.depth_regions.len(),
        r.color_regions.len()
    )
}

pub fn inspect(a: InspectArgs, exec: Exec) -> Result<()> {
    let params = inspect_params(&a)?;
    let mesh = load_mesh(&required(a.mesh.clone(), "mesh")?)?;
    let out = required(a.out.clone(), "out")?;
    create_dir(&out)?;

    if let Some(root) = &a.dataset {
        let ds = read_dataset(root).map_err(|e| usage(e.to_string()))?;
        let spec = PerturbationSpec {
            count: 1,
            max_rotation_deg: a.perturb_deg.unwrap_or(0.0),
            max_translation_mm: a.perturb_mm.unwrap_or(0.0),
            seed: a.perturb_seed.unwrap_or(0),
        };
        spec.validate().map_err(|e| usage(e.to_string()))?;
        let (reports, masks) = (out.join("reports"), out.join("masks"));
        create_dir(&reports)?;
        create_dir(&masks)?;
        for scene in &ds.scenes {
            for (id, f) in &scene.frames {
                let k = scene.camera[id].intrinsics()?;
                let gt = scene.gt.get(id).and_then(|g| g.first()).ok_or_else(|| {
                    usage(format!("{}/{id:06}: no pose record to start from", scene.name))
                })?;
                let initial = perturb_pose(&gt.pose()?, &spec, *id);
                let frame = RgbdFrame::new(f.color.clone(), f.depth.clone(), k)?;
                let mut ins = run_pipeline(&mesh, &frame, &initial, &params, exec)
                    .with_context(|| format!("frame {}/{id:06}", scene.name))?;
                ins.report.scene = scene.name.clone();
                ins.report.frame_id = *id;
                let stem = format!("{}_{id:06}", scene.name);
                write_inspection(
                    &ins,
                    &reports.join(format!("{stem}.json")),
                    &masks.join(format!("{stem}_")),
                )?;
                println!("{}", summary_line(&ins.report));
            }
        }
        return Ok(());
    }

    let (k, depth_scale) = read_camera(&required(a.intrinsics.clone(), "intrinsics")?)?;
    let rgb_path = required(a.rgb.clone(), "rgb")?;
    let depth_path = required(a.depth.clone(), "depth")?;
    let color = read_color_png(&rgb_path).map_err(|e| usage(e.to_string()))?;
    let depth = read_depth_png(&depth_path, depth_scale).map_err(|e| usage(e.to_string()))?;
    let frame = RgbdFrame::new(color, depth, k).map_err(|e| usage(e.to_string()))?;
    let pose = read_pose(&required(a.pose.clone(), "pose")?)?;
    let mut ins = run_pipeline(&mesh, &frame, &pose, &params, exec)?;
    ins.report.scene = a.scene.clone().unwrap_or_default();
    ins.report.frame_id = a.frame_id.unwrap_or(0);
    write_inspection(&ins, &out.join("report.json"), &out.join(""))?;
    println!("{}", summary_line(&ins.report));
    Ok(())
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let dir = required(a.reports, "reports")?;
    let ds = read_dataset(&required(a.dataset, "dataset")?).map_err(|e| usage(e.to_string()))?;
    let out = required(a.out, "out")?;
    let mut files = Vec::new();
    collect_json(&dir, &mut files)?;
    let reports: Vec<InspectionReport> = files.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
    if reports.is_empty() {
        return Err(usage(format!("no reports found under {}", dir.display())));
    }
    let table = score(&reports, &ds).map_err(|e| usage(e.to_string()))?;
    create_dir(&out)?;
    write_json(&table, &out.join("evaluation.json"))?;
    fs::write(out.join("evaluation.csv"), table.to_csv())?;
    println!("{:<14} {:>8} {:>9}", "category", "images", "mean IoU");
    for c in &table.categories {
        println!("{:<14} {:>8} {:>8.1}%", c.category, c.images, c.mean_iou * 100.0);
    }
    Ok(())
}

pub fn refine(a: RefineArgs, exec: Exec) -> Result<()> {
    let params = icp_params(&a.icp)?;
    let mesh = load_mesh(&required(a.mesh, "mesh")?)?;
    let (k, scale) = read_camera(&required(a.intrinsics, "intrinsics")?)?;
    let depth_path = required(a.depth, "depth")?;
    let depth = read_depth_png(&depth_path, scale).map_err(|e| usage(e.to_string()))?;
    if !depth.same_size(k.width, k.height) {
        return Err(usage(format!(
            "{} is {}x{} but the camera is {}x{}",
            depth_path.display(),
            depth.width,
            depth.height,
            k.width,
            k.height
        )));
    }
    let initial = read_pose(&required(a.pose, "pose")?)?;
    let out = required(a.out, "out")?;
    let model = IcpModel::from_mesh(&mesh, &params)?;
    let target = IcpTarget::from_depth(&depth, &k, params.normal_k, exec)?;
    let res = model.refine(&target, &k, &initial, &params, exec);
    create_dir(&out)?;
    write_json(&PoseFile(res.refined_pose), &out.join("refined_pose.json"))?;
    write_json(&res, &out.join("icp.json"))?;
    println!(
        "{} after {} iterations, rmse {:.4} mm, {} correspondences{}",
        if res.converged { "converged" } else { "did not converge" },
        res.iterations,
        res.rmse,
        res.correspondence_count,
        res.diagnostic.as_deref().map(|d| format!(" ({d})")).unwrap_or_default()
    );
    Ok(())
}

fn pose_or(path: Option<PathBuf>, default: RigidTransform) -> Result<RigidTransform> {
    path.map(|p| read_pose(&p)).transpose().map(|p| p.unwrap_or(default))
}

fn camera_or_default(path: Option<PathBuf>) -> Result<(CameraIntrinsics, f64)> {
    match path {
        Some(p) => read_camera(&p),
        None => Ok((default_camera(), DEFAULT_DEPTH_SCALE)),
    }
}

pub fn bench_render(a: BenchRenderArgs, exec: Exec) -> Result<()> {
    let pose = pose_or(a.pose, convex_test_pose())?;
    let (k, depth_scale) = camera_or_default(a.intrinsics)?;
    let out = required(a.out, "out")?;
    let opts = RenderBenchOptions {
        runs: a.runs.unwrap_or(100),
        warmup: a.warmup.unwrap_or(0),
        skip_write: a.skip_write.unwrap_or(false),
        depth_scale,
        exec,
    };
    let mesh_path = a.mesh;
    let init = move || match &mesh_path {
        Some(p) => read_mesh(p),
        None => Ok(convex_test_mesh()),
    };
    let frames = out.join("frames");
    let report = run_render_bench(init, &pose, &k, &opts, &frames).map_err(|e| match e {
        Error::InvalidInput(m) => usage(m),
        other => other.into(),
    })?;
    write_json(&report, &out.join("bench_render.json"))?;
    let mut w = csv_writer(&out.join("bench_render.csv"))?;
    w.write_record(["phase", "run", "seconds"])?;
    for s in [&report.init, &report.render, &report.write] {
        let phase = serde_json::to_value(s.phase)?;
        for (i, d) in s.durations_s.iter().enumerate() {
            w.write_record([phase.as_str().unwrap_or_default(), &i.to_string(), &d.to_string()])?;
        }
    }
    w.flush()?;
    println!(
        "{} triangles at {}x{}, {} runs",
        report.triangles, report.width, report.height, opts.runs
    );
    for s in [&report.init, &report.render, &report.write] {
        println!(
            "{:<7} mean {:>9.3} ms  std {:>8.3} ms",
            format!("{:?}", s.phase).to_lowercase(),
            s.mean_s * 1e3,
            s.std_s * 1e3
        );
    }
    if let Some(kib) = report.peak_rss_kib {
        println!("peak RSS {:.1} MiB", kib as f64 / 1024.0);
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

pub fn bench_icp(a: BenchIcpArgs, exec: Exec) -> Result<()> {
    let params = icp_params(&a.icp)?;
    let mesh = match &a.mesh {
        Some(p) => load_mesh(p)?,
        None => convex_test_mesh(),
    };
    let gt = pose_or(a.pose, convex_test_pose())?;
    let (k, _) = camera_or_default(a.intrinsics)?;
    let out = required(a.out, "out")?;
    let defaults = PerturbationSpec::default();
    let spec = PerturbationSpec {
        count: a.count.unwrap_or(defaults.count),
        max_rotation_deg: a.max_rotation_deg.unwrap_or(defaults.max_rotation_deg),
        max_translation_mm: a.max_translation_mm.unwrap_or(defaults.max_translation_mm),
        seed: a.seed.unwrap_or(defaults.seed),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let opts = StudyOptions {
        noise_sigma_mm: a.noise_sigma_mm.unwrap_or(0.0),
        noise_seed: a.noise_seed.unwrap_or(0),
        ..Default::default()
    };
    info!("refining {} perturbed poses", spec.count);
    let study = run_icp_study(&mesh, &gt, &k, &spec, &params, &opts, exec)?;
    create_dir(&out)?;
    fs::write(out.join("icp_study.csv"), study.to_csv()?)?;
    write_json(&study.summary, &out.join("icp_summary.json"))?;
    let s = &study.summary;
    println!(
        "{} poses in {:.1} s, {} converged, median ADD {:.3} -> {:.4} mm",
        s.count, s.seconds, s.converged, s.median_add_before_mm, s.median_add_after_mm
    );
    if let (Some(before), Some(after)) = (&s.curve_before, &s.curve_after) {
        println!("{:>10} {:>8} {:>8}", "ADD < mm", "before", "after");
        for (i, t) in after.thresholds.iter().enumerate() {
            println!(
                "{:>10} {:>7.1}% {:>7.1}%",
                t,
                before.success_rates[i] * 100.0,
                after.success_rates[i] * 100.0
            );
        }
    }
    Ok(())
}

pub fn dataset_validate(a: DatasetValidateArgs) -> Result<()> {
    let root = required(a.root, "root")?;
    let ds = read_dataset(&root).map_err(|e| usage(e.to_string()))?;
    if ds.scenes.is_empty() {
        return Err(usage(format!("{}: no scene directories found", root.display())));
    }
    let counts = validate_counts(&ds);
    println!("{}", serde_json::to_string_pretty(&counts)?);
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mesh = match &a.mesh {
        Some(p) => load_mesh(p)?,
        None => axial_motor(),
    };
    let (k, file_scale) = camera_or_default(a.intrinsics.clone())?;
    let out = required(a.out.clone(), "out")?;
    let d = SynthSpec::default();
    let spec = SynthSpec {
        kind: match &a.defect_type {
            Some(s) => s.parse::<DefectKind>().map_err(|e| usage(e.to_string()))?,
            None => d.kind,
        },
        component: a.component.clone(),
        magnitude: a.magnitude.unwrap_or(d.magnitude),
        frames: a.frames.unwrap_or(d.frames),
        noise_sigma_mm: a.noise_sigma_mm.unwrap_or(d.noise_sigma_mm),
        seed: a.seed.unwrap_or(d.seed),
        depth_scale: a.depth_scale.unwrap_or(if a.intrinsics.is_some() { file_scale } else { d.depth_scale }),
        scene: a.scene.clone().unwrap_or(d.scene.clone()),
        bump_radius_mm: a.bump_radius_mm.unwrap_or(d.bump_radius_mm),
        ..d
    };
    let poses: Vec<RigidTransform> = match &a.poses {
        Some(p) => read_json::<Vec<PoseFile>>(p)?.into_iter().map(|p| p.0).collect(),
        None => motor_waypoints(spec.frames),
    };
    if poses.is_empty() {
        return Err(usage("no poses to render"));
    }
    let scene = synth_scene(&mesh, &k, &poses, &spec).map_err(|e| match e {
        Error::InvalidInput(m) => usage(m),
        other => other.into(),
    })?;
    let defects = scene.defects.annotations.len();
    let ds = SceneDataset { scenes: vec![scene] };
    write_dataset(&ds, &out)?;
    write_json(&spec, &out.join("synth_spec.json"))?;
    println!(
        "{} frame(s) of {} defect in {} ({} annotated)",
        poses.len(),
        spec.kind.category(),
        out.join(&spec.scene).display(),
        defects
    );
    Ok(())
}

pub fn fixture(a: FixtureArgs) -> Result<()> {
    let name = a.name.unwrap_or_else(|| "convex".into());
    let out = required(a.out, "out")?;
    let (mesh, pose) = match name.as_str() {
        "convex" => (convex_test_mesh(), convex_test_pose()),
        "motor" => (axial_motor(), motor_waypoints(1)[0]),
        other => return Err(usage(format!("unknown fixture {other:?} (expected convex or motor)"))),
    };
    create_dir(&out)?;
    write_obj(&mesh, &out.join("mesh.obj"))?;
    write_json(&PoseFile(pose), &out.join("pose.json"))?;
    write_json(&CameraRecord::new(&default_camera(), DEFAULT_DEPTH_SCALE), &out.join("camera.json"))?;
    println!("{} triangles written to {}", mesh.triangles.len(), out.display());
    Ok(())
}
