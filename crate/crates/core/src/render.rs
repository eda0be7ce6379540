//! Z-buffer rasteriser for the digital-twin reference frame.
//!
//! Triangles are moved into the camera frame, clipped against the near plane,
//! projected with the pinhole model and scan-converted at pixel centres. Depth
//! is camera-space `z` interpolated perspective-correctly (`1/z` is affine in
//! screen space); vertex colours are interpolated the same way. No lighting.
//!
//! The image is split into horizontal bands that are rasterised
//! independently, each walking the triangle list in mesh order, so the
//! sequential and parallel paths give bit-identical buffers.

use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::Result;
use crate::exec::Exec;
use crate::frame::{write_color_png, write_depth_png, ColorImage, DepthImage, RgbdFrame};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mesh::TriangleMesh;

/// Triangles are clipped to `z >= NEAR_PLANE_MM`.
pub const NEAR_PLANE_MM: f64 = 1.0;

/// Colour used for meshes without vertex colours.
pub const DEFAULT_GREY: [u8; 3] = [128, 128, 128];

const BAND_ROWS: usize = 16;

/// Sentinel in the triangle-id buffer for uncovered pixels.
pub const NO_TRIANGLE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderOptions {
    pub cull_back_faces: bool,
    pub exec: Exec,
}

/// Raw render output; depth is `0.0` where nothing was drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBuffers {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f32>,
    pub color: Option<Vec<[u8; 3]>>,
    /// Index of the mesh triangle that won the depth test at each pixel.
    pub triangle: Option<Vec<u32>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BufferRequest {
    pub color: bool,
    pub triangle_ids: bool,
}

#[derive(Clone, Copy, Debug)]
struct ScreenTriangle {
    xy: [[f64; 2]; 3],
    inv_z: [f64; 3],
    /// vertex colour divided by z, for perspective-correct interpolation
    color_over_z: [[f64; 3]; 3],
    u_min: usize,
    u_max: usize,
    v_min: usize,
    v_max: usize,
    source: u32,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    p: Point3<f64>,
    c: [f64; 3],
}

fn lerp(a: &ClipVertex, b: &ClipVertex) -> ClipVertex {
    let t = (NEAR_PLANE_MM - a.p.z) / (b.p.z - a.p.z);
    ClipVertex {
        p: a.p + (b.p - a.p) * t,
        c: std::array::from_fn(|i| a.c[i] + (b.c[i] - a.c[i]) * t),
    }
}

/// Sutherland–Hodgman against `z >= near`; returns 0, 3 or 4 vertices.
fn clip_near(tri: [ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = &tri[i];
        let b = &tri[(i + 1) % 3];
        let a_in = a.p.z >= NEAR_PLANE_MM;
        let b_in = b.p.z >= NEAR_PLANE_MM;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            out.push(lerp(a, b));
        }
    }
    out
}

/// Edge function with the endpoints put in a canonical order, so that the two
/// triangles sharing an edge evaluate it to exactly opposite values.
#[inline]
fn edge(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> f64 {
    #[inline]
    fn raw(a: &[f64; 2], b: &[f64; 2], p: &[f64; 2]) -> f64 {
        (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    }
    if (a[0], a[1]) <= (b[0], b[1]) {
        raw(a, b, p)
    } else {
        -raw(b, a, p)
    }
}

/// Top-left ownership for an edge `a → b` of a positively oriented triangle
/// (image `y` pointing down).
#[inline]
fn is_top_left(a: &[f64; 2], b: &[f64; 2]) -> bool {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn setup_triangles(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    cull_back_faces: bool,
) -> Vec<ScreenTriangle> {
    let (w, h) = (k.width as usize, k.height as usize);
    if w == 0 || h == 0 {
        return Vec::new();
    }
    let cam: Vec<Point3<f64>> = mesh.vertices.iter().map(|p| pose.apply(p)).collect();
    let grey = DEFAULT_GREY.map(|c| c as f64 / 255.0);
    let mut out = Vec::with_capacity(mesh.triangles.len());

    for (ti, t) in mesh.triangles.iter().enumerate() {
        let vtx = t.map(|i| ClipVertex {
            p: cam[i as usize],
            c: mesh
                .vertex_colors
                .as_ref()
                .map_or(grey, |c| c[i as usize]),
        });
        if vtx.iter().all(|v| v.p.z < NEAR_PLANE_MM) {
            continue;
        }
        if cull_back_faces {
            let n: Vector3<f64> = (vtx[1].p - vtx[0].p).cross(&(vtx[2].p - vtx[0].p));
            if n.dot(&vtx[0].p.coords) >= 0.0 {
                continue;
            }
        }
        let poly = if vtx.iter().all(|v| v.p.z >= NEAR_PLANE_MM) {
            vtx.to_vec()
        } else {
            clip_near(vtx)
        };
        for j in 1..poly.len().saturating_sub(1) {
            let corners = [poly[0], poly[j], poly[j + 1]];
            let mut xy = corners.map(|c| {
                [
                    k.fx * c.p.x / c.p.z + k.cx,
                    k.fy * c.p.y / c.p.z + k.cy,
                ]
            });
            let mut inv_z = corners.map(|c| 1.0 / c.p.z);
            let mut color_over_z = corners.map(|c| c.c.map(|ch| ch / c.p.z));
            let area = edge(&xy[0], &xy[1], &xy[2]);
            if !area.is_finite() || area.abs() < 1e-12 {
                continue;
            }
            if area < 0.0 {
                xy.swap(1, 2);
                inv_z.swap(1, 2);
                color_over_z.swap(1, 2);
            }
            let min_x = xy.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let max_x = xy.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let min_y = xy.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let max_y = xy.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            if max_x < 0.0 || max_y < 0.0 || min_x > (w - 1) as f64 || min_y > (h - 1) as f64 {
                continue;
            }
            let u_min = min_x.ceil().max(0.0) as usize;
            let v_min = min_y.ceil().max(0.0) as usize;
            let u_max = (max_x.floor() as usize).min(w - 1);
            let v_max = (max_y.floor() as usize).min(h - 1);
            if u_min > u_max || v_min > v_max {
                continue;
            }
            out.push(ScreenTriangle {
                xy,
                inv_z,
                color_over_z,
                u_min,
                u_max,
                v_min,
                v_max,
                source: ti as u32,
            });
        }
    }
    out
}

struct BandOut<'a> {
    row0: usize,
    depth: &'a mut [f64],
    color: Option<&'a mut [[u8; 3]]>,
    triangle: Option<&'a mut [u32]>,
}

fn raster_band(tris: &[ScreenTriangle], width: usize, band: &mut BandOut<'_>) {
    let row0 = band.row0;
    let depth = &mut *band.depth;
    let mut color = band.color.as_deref_mut();
    let mut triangle = band.triangle.as_deref_mut();
    let rows = depth.len() / width;
    let row1 = row0 + rows;
    for t in tris {
        if t.v_max < row0 || t.v_min >= row1 {
            continue;
        }
        let [a, b, c] = &t.xy;
        let tl = [is_top_left(b, c), is_top_left(c, a), is_top_left(a, b)];
        for v in t.v_min.max(row0)..=t.v_max.min(row1 - 1) {
            let py = v as f64;
            let row = (v - row0) * width;
            for u in t.u_min..=t.u_max {
                let p = [u as f64, py];
                let w0 = edge(b, c, &p);
                let w1 = edge(c, a, &p);
                let w2 = edge(a, b, &p);
                let inside = (w0 > 0.0 || (w0 == 0.0 && tl[0]))
                    && (w1 > 0.0 || (w1 == 0.0 && tl[1]))
                    && (w2 > 0.0 || (w2 == 0.0 && tl[2]));
                if !inside {
                    continue;
                }
                let sum = w0 + w1 + w2;
                let bary = [w0 / sum, w1 / sum, w2 / sum];
                let inv = bary[0] * t.inv_z[0] + bary[1] * t.inv_z[1] + bary[2] * t.inv_z[2];
                let z = 1.0 / inv;
                let idx = row + u;
                if !(z < depth[idx]) {
                    continue;
                }
                depth[idx] = z;
                if let Some(col) = color.as_deref_mut() {
                    col[idx] = std::array::from_fn(|ch| {
                        let num = bary[0] * t.color_over_z[0][ch]
                            + bary[1] * t.color_over_z[1][ch]
                            + bary[2] * t.color_over_z[2][ch];
                        ((num * z).clamp(0.0, 1.0) * 255.0).round() as u8
                    });
                }
                if let Some(ids) = triangle.as_deref_mut() {
                    ids[idx] = t.source;
                }
            }
        }
    }
}

/// Rasterises `mesh` at `pose` and returns the requested buffers.
pub fn render_buffers(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    opts: RenderOptions,
    request: BufferRequest,
) -> RenderBuffers {
    let (w, h) = (k.width as usize, k.height as usize);
    let tris = setup_triangles(mesh, pose, k, opts.cull_back_faces);

    let mut depth = vec![f64::INFINITY; w * h];
    let mut color = request.color.then(|| vec![[0u8; 3]; w * h]);
    let mut triangle = request.triangle_ids.then(|| vec![NO_TRIANGLE; w * h]);

    if w > 0 && !tris.is_empty() {
        let chunk = BAND_ROWS * w;
        // Zip the three optional buffers into per-band work items.
        let mut depth_bands: Vec<&mut [f64]> = depth.chunks_mut(chunk).collect();
        let mut color_bands: Vec<Option<&mut [[u8; 3]]>> = match color.as_mut() {
            Some(c) => c.chunks_mut(chunk).map(Some).collect(),
            None => (0..depth_bands.len()).map(|_| None).collect(),
        };
        let mut tri_bands: Vec<Option<&mut [u32]>> = match triangle.as_mut() {
            Some(c) => c.chunks_mut(chunk).map(Some).collect(),
            None => (0..depth_bands.len()).map(|_| None).collect(),
        };
        let mut bands: Vec<BandOut<'_>> = depth_bands
            .drain(..)
            .zip(color_bands.drain(..))
            .zip(tri_bands.drain(..))
            .enumerate()
            .map(|(i, ((depth, color), triangle))| BandOut {
                row0: i * BAND_ROWS,
                depth,
                color,
                triangle,
            })
            .collect();
        let tris = &tris;
        opts.exec
            .for_each_chunk_mut(&mut bands, 1, |_, slot| raster_band(tris, w, &mut slot[0]));
    }

    RenderBuffers {
        width: k.width,
        height: k.height,
        depth: depth
            .into_iter()
            .map(|z| if z.is_finite() { z as f32 } else { 0.0 })
            .collect(),
        color,
        triangle,
    }
}

/// Colour + Z-buffer depth of `mesh` seen from `k` at `pose` (model → camera).
pub fn render_rgbd(mesh: &TriangleMesh, pose: &RigidTransform, k: &CameraIntrinsics) -> RgbdFrame {
    render_rgbd_with(mesh, pose, k, RenderOptions::default())
}

pub fn render_rgbd_with(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    opts: RenderOptions,
) -> RgbdFrame {
    let buf = render_buffers(
        mesh,
        pose,
        k,
        opts,
        BufferRequest {
            color: true,
            triangle_ids: false,
        },
    );
    RgbdFrame {
        color: ColorImage {
            width: k.width,
            height: k.height,
            data: buf.color.expect("colour requested"),
        },
        depth: DepthImage {
            width: k.width,
            height: k.height,
            data: buf.depth,
        },
        intrinsics: *k,
    }
}

pub fn render_depth_only(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
) -> DepthImage {
    render_depth_only_with(mesh, pose, k, RenderOptions::default())
}

pub fn render_depth_only_with(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    k: &CameraIntrinsics,
    opts: RenderOptions,
) -> DepthImage {
    let buf = render_buffers(mesh, pose, k, opts, BufferRequest::default());
    DepthImage {
        width: k.width,
        height: k.height,
        data: buf.depth,
    }
}

/// Colour as 8-bit RGB PNG, depth as 16-bit PNG of `round(mm / depth_scale)`.
pub fn write_frame(
    frame: &RgbdFrame,
    depth_scale: f64,
    color_path: &Path,
    depth_path: &Path,
) -> Result<()> {
    // quantise first so a range error leaves no half-written frame behind
    crate::frame::quantize_depth(&frame.depth, depth_scale)?;
    write_color_png(&frame.color, color_path)?;
    write_depth_png(&frame.depth, depth_scale, depth_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::read_depth_png;
    use crate::geometry::unproject;

    fn k_small() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 40.0, 30.0, 80, 60).unwrap()
    }

    fn tri_mesh(pts: [[f64; 3]; 3]) -> TriangleMesh {
        TriangleMesh::new(pts.iter().map(|p| Point3::from(*p)).collect(), vec![[0, 1, 2]]).unwrap()
    }

    /// Oracle: same-side test against the projected vertices, strict inside.
    fn strictly_inside(px: [f64; 2], tri: &[[f64; 2]; 3]) -> bool {
        let s = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (px[1] - a[1]) - (b[1] - a[1]) * (px[0] - a[0]);
        let d = [s(tri[0], tri[1]), s(tri[1], tri[2]), s(tri[2], tri[0])];
        d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0)
    }

    #[test]
    fn empty_mesh_renders_background() {
        let f = render_rgbd(&TriangleMesh::default(), &RigidTransform::identity(), &k_small());
        assert!(f.depth.data.iter().all(|&z| z == 0.0));
        assert!(f.color.data.iter().all(|&c| c == [0, 0, 0]));
    }

    #[test]
    fn fronto_parallel_triangle_matches_analytic_coverage() {
        let k = k_small();
        // vertices chosen so that no pixel centre lies on an edge
        let pts = [[-103.3, -91.7, 1000.0], [157.1, -40.2, 1000.0], [-20.9, 201.3, 1000.0]];
        let f = render_rgbd(&tri_mesh(pts), &RigidTransform::identity(), &k);
        let proj: [[f64; 2]; 3] =
            pts.map(|p| [k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy]);
        let mut covered = 0;
        for v in 0..k.height {
            for u in 0..k.width {
                let expect = strictly_inside([u as f64, v as f64], &proj);
                let z = f.depth.get(u, v);
                assert_eq!(expect, z > 0.0, "pixel ({u},{v})");
                if expect {
                    covered += 1;
                    assert!((z - 1000.0).abs() < 1e-3);
                    assert_eq!(f.color.get(u, v), DEFAULT_GREY);
                }
            }
        }
        assert!(covered > 100);
    }

    #[test]
    fn nearer_triangle_wins() {
        let k = k_small();
        let far = [[-200.0, -200.0, 1000.0], [200.0, -200.0, 1000.0], [0.0, 300.0, 1000.0]];
        let near = far.map(|p| [p[0] * 0.5, p[1] * 0.5, 500.0]);
        let mut mesh = tri_mesh(far);
        mesh.append(&tri_mesh(near));
        let d = render_depth_only(&mesh, &RigidTransform::identity(), &k);
        let mut shared = 0;
        for &z in &d.data {
            if z > 0.0 {
                assert_eq!(z, 500.0);
                shared += 1;
            }
        }
        assert!(shared > 0);
        // reversing draw order gives the same image
        let mut rev = tri_mesh(near);
        rev.append(&tri_mesh(far));
        assert_eq!(render_depth_only(&rev, &RigidTransform::identity(), &k), d);
    }

    #[test]
    fn slanted_plane_depth() {
        // plane z = 800 + 0.1 x
        let k = k_small();
        let z = |x: f64| 800.0 + 0.1 * x;
        let pts = [[-300.0, -250.0], [350.0, -200.0], [0.0, 320.0]].map(|[x, y]| [x, y, z(x)]);
        let d = render_depth_only(&tri_mesh(pts), &RigidTransform::identity(), &k);
        let mut n = 0;
        for v in 0..k.height {
            for u in 0..k.width {
                let got = d.get(u, v);
                if got > 0.0 {
                    // ray (u,v) meets the plane where z = 800 + 0.1 (u - cx) z / fx
                    let a = 0.1 * (u as f64 - k.cx) / k.fx;
                    let analytic = 800.0 / (1.0 - a);
                    assert!((got as f64 - analytic).abs() < 1e-2, "{got} vs {analytic}");
                    let p = unproject(u as f64, v as f64, got as f64, &k);
                    assert!((p.z - z(p.x)).abs() < 1e-2);
                    n += 1;
                }
            }
        }
        assert!(n > 500);
    }

    #[test]
    fn behind_camera_is_invalid_and_near_clipping_keeps_front_part() {
        let k = k_small();
        let back = tri_mesh([[-10.0, -10.0, -5.0], [10.0, -10.0, -5.0], [0.0, 10.0, -1.0]]);
        assert_eq!(
            render_depth_only(&back, &RigidTransform::identity(), &k).valid_count(),
            0
        );
        let crossing = tri_mesh([[-50.0, -50.0, -100.0], [50.0, -50.0, 300.0], [0.0, 60.0, 300.0]]);
        let d = render_depth_only(&crossing, &RigidTransform::identity(), &k);
        assert!(d.valid_count() > 0);
        assert!(d.data.iter().all(|&z| z == 0.0 || z >= NEAR_PLANE_MM as f32));
    }

    #[test]
    fn shared_edges_are_watertight() {
        // a fan of triangles around an interior vertex: every pixel inside the
        // hull is covered exactly once
        let k = k_small();
        let centre = [3.3, -7.1, 600.0];
        let ring: Vec<[f64; 3]> = (0..7)
            .map(|i| {
                let a = i as f64 / 7.0 * std::f64::consts::TAU;
                [150.0 * a.cos(), 120.0 * a.sin(), 600.0]
            })
            .collect();
        let mut vertices = vec![Point3::from(centre)];
        vertices.extend(ring.iter().map(|p| Point3::from(*p)));
        let triangles: Vec<[u32; 3]> = (0..7u32).map(|i| [0, 1 + i, 1 + (i + 1) % 7]).collect();
        let mesh = TriangleMesh::new(vertices, triangles).unwrap();
        let buf = render_buffers(
            &mesh,
            &RigidTransform::identity(),
            &k,
            RenderOptions::default(),
            BufferRequest {
                color: false,
                triangle_ids: true,
            },
        );
        // count coverage per pixel by rendering each triangle alone
        let mut hits = vec![0u32; k.pixel_count()];
        for t in 0..7 {
            let single = TriangleMesh::new(mesh.vertices.clone(), vec![mesh.triangles[t]]).unwrap();
            let d = render_depth_only(&single, &RigidTransform::identity(), &k);
            for (h, z) in hits.iter_mut().zip(&d.data) {
                *h += (*z > 0.0) as u32;
            }
        }
        assert!(hits.iter().all(|&h| h <= 1));
        let covered = buf.depth.iter().filter(|&&z| z > 0.0).count();
        assert_eq!(covered, hits.iter().filter(|&&h| h == 1).count());
    }

    #[test]
    fn culling_drops_back_faces() {
        let k = k_small();
        // normal (b-a)x(c-a) towards +z, i.e. facing away from the camera
        let away = tri_mesh([[-100.0, -100.0, 500.0], [100.0, -100.0, 500.0], [0.0, 100.0, 500.0]]);
        let opts = RenderOptions {
            cull_back_faces: true,
            ..Default::default()
        };
        assert_eq!(render_depth_only_with(&away, &RigidTransform::identity(), &k, opts).valid_count(), 0);
        let toward = tri_mesh([[-100.0, -100.0, 500.0], [0.0, 100.0, 500.0], [100.0, -100.0, 500.0]]);
        assert!(render_depth_only_with(&toward, &RigidTransform::identity(), &k, opts).valid_count() > 0);
    }

    #[test]
    fn vertex_colours_interpolate() {
        let k = k_small();
        let mut m = tri_mesh([[-300.0, -300.0, 700.0], [300.0, -300.0, 700.0], [0.0, 300.0, 700.0]]);
        m.set_uniform_color([1.0, 0.5, 0.0]);
        let f = render_rgbd(&m, &RigidTransform::identity(), &k);
        assert_eq!(f.color.get(40, 30), [255, 128, 0]);
    }

    #[test]
    fn write_frame_quantises_and_checks_range() {
        let k = k_small();
        let dir = tempfile::tempdir().unwrap();
        let m = tri_mesh([[-300.0, -300.0, 700.0], [300.0, -300.0, 700.0], [0.0, 300.0, 700.0]]);
        let f = render_rgbd(&m, &RigidTransform::identity(), &k);
        let (c, d) = (dir.path().join("c.png"), dir.path().join("d.png"));
        write_frame(&f, 0.1, &c, &d).unwrap();
        let back = read_depth_png(&d, 0.1).unwrap();
        for (a, b) in f.depth.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.05 + 1e-4);
            assert_eq!(*a == 0.0, *b == 0.0);
        }
        let far = render_rgbd(&m.transformed(&RigidTransform::from_translation(Vector3::new(0.0, 0.0, 69_300.0))), &RigidTransform::identity(), &k);
        assert!(write_frame(&far, 0.1, &c, &d).is_err());
    }
}
