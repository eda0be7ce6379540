//! Acceptance suite. Runs without the libtest harness so the one-line verdict
//! per criterion is always printed; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinspect::annotations::{polygon_to_mask, read_dataset, rle_decode, rle_encode, write_dataset, SceneDataset};
use twinspect::bench::{run_icp_study, run_render_bench, IcpStudy, PerturbationSpec, RenderBenchOptions, StudyOptions};
use twinspect::disparity::rgb_to_lab;
use twinspect::evaluate::evaluate;
use twinspect::fixtures::{axial_motor, convex_test_mesh, convex_test_pose, default_camera, motor_waypoints};
use twinspect::frame::{read_depth_png, write_depth_png};
use twinspect::metrics::{add_metric, rotation_error_deg, success_curve};
use twinspect::pipeline::{inspect, InspectParams};
use twinspect::registration::{IcpModel, IcpParams, IcpTarget, KdTree};
use twinspect::synth::{synth_scene, DefectKind, SynthSpec};
use twinspect::{
    render_depth_only, render_rgbd, BinaryMask, CameraIntrinsics, DepthImage, Exec, PointCloud, RgbdFrame,
    RigidTransform, TriangleMesh,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let g = rand_distr::StandardNormal;
    let q = Quaternion::new(rng.sample(g), rng.sample(g), rng.sample(g), rng.sample(g));
    UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner()
}

fn random_pose(rng: &mut ChaCha8Rng, z: std::ops::Range<f64>) -> RigidTransform {
    let t = Vector3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(z));
    RigidTransform::new(random_rotation(rng), t).unwrap()
}

fn study(noise_sigma_mm: f64) -> IcpStudy {
    let spec = PerturbationSpec { count: 1000, max_rotation_deg: 10.0, max_translation_mm: 10.0, seed: 0 };
    let opts = StudyOptions { noise_sigma_mm, noise_seed: 1, ..Default::default() };
    run_icp_study(
        &convex_test_mesh(),
        &convex_test_pose(),
        &default_camera(),
        &spec,
        &IcpParams::default(),
        &opts,
        Exec::default(),
    )
    .unwrap()
}

fn study_verdict(noise: f64, floor: f64) -> Verdict {
    let s = study(noise);
    let rate = s.success_rate(1.0);
    let after = s.summary.curve_after.as_ref().unwrap();
    verdict(
        rate >= floor && s.summary.median_add_after_mm < s.summary.median_add_before_mm,
        format!(
            "{:.1}% of {} poses below 1 mm ADD (need {:.0}%), median ADD {:.3} -> {:.4} mm, {} converged, \
             success at 0.1/0.25/0.5 mm {:.1}/{:.1}/{:.1}%, {:.1} s",
            rate * 100.0,
            s.summary.count,
            floor * 100.0,
            s.summary.median_add_before_mm,
            s.summary.median_add_after_mm,
            s.summary.converged,
            after.success_rates[0] * 100.0,
            after.success_rates[1] * 100.0,
            after.success_rates[2] * 100.0,
            s.summary.seconds
        ),
    )
}

fn criterion_1() -> Verdict {
    study_verdict(0.0, 0.95)
}

fn criterion_2() -> Verdict {
    let mesh = convex_test_mesh();
    let k = default_camera();
    let gt = convex_test_pose();
    let depth = render_depth_only(&mesh, &gt, &k);
    let target = IcpTarget::from_depth(&depth, &k, IcpParams::default().normal_k, Exec::default()).unwrap();
    let vertices = mesh.vertex_cloud();
    let (mut worst, mut passed, mut converged) = (0.0f64, 0, 0);
    for seed in 0..100 {
        let params = IcpParams { seed, ..Default::default() };
        let model = IcpModel::from_mesh(&mesh, &params).unwrap();
        let r = model.refine(&target, &k, &gt, &params, Exec::default());
        let add = add_metric(&vertices, &r.refined_pose, &gt).unwrap();
        worst = worst.max(add);
        converged += r.converged as usize;
        passed += (r.converged && add < 0.01) as usize;
    }
    verdict(
        passed == 100,
        format!("{passed}/100 trials converged with ADD < 0.01 mm ({converged} converged), worst ADD {worst:.5} mm"),
    )
}

fn criterion_3() -> Verdict {
    study_verdict(0.2, 0.90)
}

/// Mean, minimum and count of the per-frame IoU for one synthetic scene.
fn synthetic_iou(kind: DefectKind, noise_sigma_mm: f64) -> (f64, f64, usize) {
    let mesh = axial_motor();
    let k = default_camera();
    let poses = motor_waypoints(20);
    let spec = SynthSpec { kind, noise_sigma_mm, seed: 7, ..Default::default() };
    let scene = synth_scene(&mesh, &k, &poses, &spec).unwrap();
    let mut reports = Vec::new();
    for (id, f) in &scene.frames {
        let pose = scene.gt[id][0].pose().unwrap();
        let frame = RgbdFrame::new(f.color.clone(), f.depth.clone(), k).unwrap();
        let mut r = inspect(&mesh, &frame, &pose, &InspectParams::default(), Exec::default())
            .unwrap()
            .report;
        r.scene = scene.name.clone();
        r.frame_id = *id;
        reports.push(r);
    }
    let ds = SceneDataset { scenes: vec![scene] };
    let table = evaluate(&reports, &ds).unwrap();
    let c = table.category(kind.category()).unwrap();
    let min = c.per_image.iter().map(|s| s.iou).fold(f64::INFINITY, f64::min);
    (c.mean_iou, min, c.images)
}

fn synthetic_verdict(kind: DefectKind) -> Verdict {
    let (noisy, noisy_min, n1) = synthetic_iou(kind, 0.2);
    let (clean, clean_min, n2) = synthetic_iou(kind, 0.0);
    verdict(
        noisy >= 0.6 && clean >= 0.9 && n1 == 20 && n2 == 20,
        format!(
            "mean IoU {:.1}% with 0.2 mm noise (need 60%, worst frame {:.1}%), {:.1}% noise-free (need 90%, worst frame {:.1}%), {n1} frames",
            noisy * 100.0,
            noisy_min * 100.0,
            clean * 100.0,
            clean_min * 100.0
        ),
    )
}

fn criterion_4() -> Verdict {
    synthetic_verdict(DefectKind::Existence)
}

fn criterion_5() -> Verdict {
    synthetic_verdict(DefectKind::Color)
}

fn triangle(pts: [[f64; 3]; 3]) -> TriangleMesh {
    TriangleMesh::new(pts.iter().map(|p| Point3::from(*p)).collect(), vec![[0, 1, 2]]).unwrap()
}

fn criterion_6() -> Verdict {
    let k = default_camera();

    // slanted plane z = 800 + 0.1 x + 0.05 y; the ray through pixel (u, v)
    // meets it at z = 800 / (1 − 0.1 (u − cx)/fx − 0.05 (v − cy)/fy)
    let plane = |x: f64, y: f64| 800.0 + 0.1 * x + 0.05 * y;
    let pts = [[-400.0, -300.0], [420.0, -280.0], [10.0, 390.0]].map(|[x, y]| [x, y, plane(x, y)]);
    let d = render_depth_only(&triangle(pts), &RigidTransform::identity(), &k);
    let mut plane_err = 0.0f64;
    let mut plane_px = 0;
    for v in 0..k.height {
        for u in 0..k.width {
            let z = d.get(u, v);
            if DepthImage::is_valid_value(z) {
                let a = 0.1 * (u as f64 - k.cx) / k.fx + 0.05 * (v as f64 - k.cy) / k.fy;
                plane_err = plane_err.max((z as f64 - 800.0 / (1.0 - a)).abs());
                plane_px += 1;
            }
        }
    }

    // occlusion: pairs with disjoint depth ranges
    let small = CameraIntrinsics::new(200.0, 200.0, 80.0, 60.0, 160, 120).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0usize;
    let mut shared = 0usize;
    for _ in 0..1000 {
        let tri = |rng: &mut ChaCha8Rng, zlo: f64, zhi: f64| {
            triangle(std::array::from_fn(|_| {
                let z = rng.random_range(zlo..zhi);
                [rng.random_range(-0.3..0.3) * z, rng.random_range(-0.25..0.25) * z, z]
            }))
        };
        let split = rng.random_range(400.0..700.0);
        let near = tri(&mut rng, 200.0, split);
        let far = tri(&mut rng, split, 1200.0);
        let mut both = far.clone();
        both.append(&near);
        let id = RigidTransform::identity();
        let (dn, df, db) = (render_depth_only(&near, &id, &small), render_depth_only(&far, &id, &small), render_depth_only(&both, &id, &small));
        for i in 0..db.data.len() {
            let (n, f, b) = (dn.data[i], df.data[i], db.data[i]);
            let expect = if n > 0.0 { n } else { f };
            if n > 0.0 && f > 0.0 {
                shared += 1;
            }
            if b != expect {
                violations += 1;
            }
        }
    }

    // equivariance: pose applied by the renderer vs baked into the mesh
    let mesh = axial_motor();
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut mismatched = 0usize;
    for _ in 0..50 {
        let pose = random_pose(&mut rng, 350.0..600.0);
        let a = render_rgbd(&mesh, &pose, &k);
        let b = render_rgbd(&mesh.transformed(&pose), &RigidTransform::identity(), &k);
        mismatched += a.depth.data.iter().zip(&b.depth.data).filter(|(x, y)| x != y).count();
        mismatched += a.color.data.iter().zip(&b.color.data).filter(|(x, y)| x != y).count();
    }

    verdict(
        plane_err <= 1e-2 && plane_px > 10_000 && violations == 0 && shared > 0 && mismatched == 0,
        format!(
            "plane max error {plane_err:.2e} mm over {plane_px} px; {violations} occlusion violations over 1000 pairs \
             ({shared} doubly covered px); {mismatched} differing px over 50 poses"
        ),
    )
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut add_err = 0.0f64;
    for _ in 0..1000 {
        let pts = PointCloud::new(
            (0..50)
                .map(|_| Point3::new(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0)))
                .collect(),
        );
        let gt = random_pose(&mut rng, 300.0..700.0);
        let t = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let est = RigidTransform::from_translation(t).compose(&gt);
        add_err = add_err.max((add_metric(&pts, &est, &gt).unwrap() - t.norm()).abs());
    }

    // ‖A − B‖_F = 2√2 sin(θ/2)
    let mut rot_err = 0.0f64;
    for _ in 0..10_000 {
        let (a, b) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let geodesic = rotation_error_deg(&a, &b).unwrap();
        let frob = (a - b).norm();
        let from_frob = (2.0 * (frob / (2.0 * 2f64.sqrt())).min(1.0).asin()).to_degrees();
        rot_err = rot_err.max((geodesic - from_frob).abs());
    }

    let mut curve_failures = 0;
    for _ in 0..2000 {
        let n = rng.random_range(1..200);
        let errors: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..15.0f64).powi(2) / 15.0).collect();
        let mut thresholds: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random_range(0.01..20.0)).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let c = success_curve(&errors, &thresholds).unwrap();
        let monotone = c.success_rates.windows(2).all(|w| w[0] <= w[1]);
        let counted = thresholds.iter().zip(&c.success_rates).all(|(t, r)| {
            *r == errors.iter().filter(|&&e| e < *t).count() as f64 / n as f64
        });
        curve_failures += (!monotone || !counted) as usize;
    }

    verdict(
        add_err <= 1e-9 && rot_err <= 1e-6 && curve_failures == 0,
        format!(
            "ADD translation error {add_err:.1e} mm; Frobenius/geodesic gap {rot_err:.1e} deg over 10000 pairs; \
             {curve_failures} success-curve failures over 2000 fuzzed inputs"
        ),
    )
}

/// Even-odd crossing test at the point (x, y).
fn pnpoly(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let ([xi, yi], [xj, yj]) = (poly[i], poly[j]);
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut rle_failures = 0;
    for _ in 0..500 {
        let (w, h) = (rng.random_range(1..60), rng.random_range(1..60));
        let p = rng.random_range(0.0..1.0);
        let bits = (0..w * h).map(|_| rng.random_bool(p)).collect();
        let m = BinaryMask::from_bits(w, h, bits).unwrap();
        let rle = rle_encode(&m);
        rle_failures += (rle_decode(&rle).unwrap() != m || rle.area() as usize != m.count()) as usize;
    }

    let mut poly_mismatch = 0usize;
    let mut poly_px = 0usize;
    for _ in 0..300 {
        let (w, h) = (rng.random_range(5..70), rng.random_range(5..70));
        let n = rng.random_range(3..10);
        let poly: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-5.0..w as f64 + 5.0), rng.random_range(-5.0..h as f64 + 5.0)])
            .collect();
        let m = polygon_to_mask(&poly, w, h).unwrap();
        for v in 0..h {
            for u in 0..w {
                let expect = pnpoly(&poly, u as f64, v as f64);
                poly_px += expect as usize;
                poly_mismatch += (m.get(u, v) != expect) as usize;
            }
        }
    }

    let k = default_camera();
    let mesh = axial_motor();
    let poses = motor_waypoints(3);
    let logical = synth_scene(&mesh, &k, &poses, &SynthSpec { frames: 3, ..Default::default() }).unwrap();
    let structural = synth_scene(
        &mesh,
        &k,
        &poses,
        &SynthSpec { kind: DefectKind::Deformation, magnitude: 4.0, scene: "000002".into(), seed: 3, ..Default::default() },
    )
    .unwrap();
    let ds = SceneDataset { scenes: vec![logical, structural] };
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    let dataset_identical = back == ds;
    let annotations: usize = ds.scenes.iter().map(|s| s.defects.annotations.len()).sum();

    let mut depth = DepthImage::new(200, 100);
    for z in depth.data.iter_mut() {
        *z = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(1.0..6000.0f32) };
    }
    let path = dir.path().join("depth.png");
    write_depth_png(&depth, 0.1, &path).unwrap();
    let read = read_depth_png(&path, 0.1).unwrap();
    // half a quantum, plus the f32 spacing at the stored depth
    let quant_ok = depth.data.iter().zip(&read.data).all(|(a, b)| {
        (*a == 0.0) == (*b == 0.0) && ((a - b).abs() as f64) <= 0.05 + (*a as f64) * f32::EPSILON as f64
    });
    let quant_max = depth.data.iter().zip(&read.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);

    verdict(
        rle_failures == 0 && poly_mismatch == 0 && poly_px > 0 && dataset_identical && annotations == 6 && quant_ok,
        format!(
            "{rle_failures} RLE round-trip failures of 500; {poly_mismatch} polygon px differ from point-in-polygon \
             ({poly_px} inside); dataset round trip identical: {dataset_identical} ({annotations} annotations); \
             depth PNG max error {quant_max:.4} mm"
        ),
    )
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cloud = |n: usize| -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| Point3::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(300.0..500.0)))
            .collect()
    };
    let points = cloud(10_000);
    let queries = cloud(1_000);
    let tree = KdTree::build(&points);
    let agree = queries
        .iter()
        .filter(|q| {
            let brute = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - *q).norm()))
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            tree.nearest(q).unwrap() == brute
        })
        .count();
    verdict(agree == 1000, format!("{agree}/1000 queries match the exhaustive scan over 10000 points"))
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let opts = RenderBenchOptions::default();
    let r = run_render_bench(|| Ok(convex_test_mesh()), &convex_test_pose(), &default_camera(), &opts, dir.path()).unwrap();
    let ms = |s: f64| s * 1e3;
    verdict(
        r.triangles >= 4500 && r.render.durations_s.len() == 100 && ms(r.render.mean_s) <= 50.0 && ms(r.write.mean_s) <= 100.0,
        format!(
            "{} triangles at {}x{}, 100 runs: init {:.2} ms, render {:.2} ± {:.2} ms (limit 50), write {:.2} ± {:.2} ms (limit 100)",
            r.triangles,
            r.width,
            r.height,
            ms(r.init.mean_s),
            ms(r.render.mean_s),
            ms(r.render.std_s),
            ms(r.write.mean_s),
            ms(r.write.std_s)
        ),
    )
}

fn criterion_11() -> Verdict {
    // sRGB/D65 reference values
    let cases: [([u8; 3], [f64; 3], f64); 3] = [
        ([0, 0, 0], [0.0, 0.0, 0.0], 1e-9),
        ([255, 255, 255], [100.0, 0.0, 0.0], 0.01),
        ([255, 0, 0], [53.24, 80.09, 67.20], 0.05),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (rgb, want, tol) in cases {
        let got = rgb_to_lab(rgb);
        let err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
        pass &= err <= tol;
        detail.push(format!("{rgb:?} -> ({:.3}, {:.3}, {:.3}) err {err:.1e} (tol {tol})", got[0], got[1], got[2]));
    }
    verdict(pass, detail.join("; "))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("ICP study, noise-free", criterion_1),
        ("ICP zero-noise fixed point", criterion_2),
        ("ICP study, 0.2 mm depth noise", criterion_3),
        ("synthetic existence defect", criterion_4),
        ("synthetic color defect", criterion_5),
        ("renderer oracles", criterion_6),
        ("metric identities", criterion_7),
        ("codec round trips", criterion_8),
        ("nearest-neighbour exactness", criterion_9),
        ("render/write timing", criterion_10),
        ("LAB reference values", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as usize;
        println!(
            "criterion {:>2} {} {name}: {} [{:.1} s]",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
