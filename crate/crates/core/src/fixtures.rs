//! Built-in test objects: a triaxial ellipsoid (convex, ~5k triangles) and
//! a small axial-flux motor stator (base plate plus twelve named coils).

use nalgebra::{Point3, Vector3};

use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mesh::{MeshComponent, TriangleMesh};

pub const COIL_COUNT: usize = 12;
pub const PLATE_COLOR: [f64; 3] = [0.25, 0.30, 0.38];
pub const COIL_COLOR: [f64; 3] = [0.72, 0.45, 0.20];

/// 640×480, fx = fy = 600, principal point at the image centre.
pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 600.0,
        fy: 600.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

/// UV ellipsoid with outward winding: `stacks - 1` rings of `slices`
/// vertices plus two poles, `2 · slices · (stacks - 1)` triangles.
pub fn ellipsoid(a: f64, b: f64, c: f64, stacks: usize, slices: usize) -> TriangleMesh {
    assert!(stacks >= 2 && slices >= 3);
    let mut vertices = vec![Point3::new(0.0, 0.0, c)];
    for i in 1..stacks {
        let theta = std::f64::consts::PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let phi = std::f64::consts::TAU * j as f64 / slices as f64;
            vertices.push(Point3::new(
                a * theta.sin() * phi.cos(),
                b * theta.sin() * phi.sin(),
                c * theta.cos(),
            ));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(Point3::new(0.0, 0.0, -c));

    let ring = |i: usize, j: usize| (1 + i * slices + j % slices) as u32;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(0, j), ring(0, j + 1)]);
    }
    for i in 0..stacks - 2 {
        for j in 0..slices {
            triangles.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            triangles.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
        }
    }
    for j in 0..slices {
        triangles.push([ring(stacks - 2, j), south, ring(stacks - 2, j + 1)]);
    }
    TriangleMesh {
        vertices,
        triangles,
        ..Default::default()
    }
}

/// The convex registration test object: semi-axes 60 × 40 × 25 mm,
/// 4998 triangles.
pub fn convex_test_mesh() -> TriangleMesh {
    let mut m = ellipsoid(60.0, 40.0, 25.0, 50, 51);
    m.set_uniform_color([0.55, 0.6, 0.65]);
    m
}

/// Ground-truth pose of the convex object, about half a metre away.
pub fn convex_test_pose() -> RigidTransform {
    RigidTransform::rot_x(25.0)
        .compose(&RigidTransform::rot_y(-35.0))
        .compose(&RigidTransform::rot_z(10.0))
        .with_translation(Vector3::new(5.0, -8.0, 500.0))
}

struct Builder {
    mesh: TriangleMesh,
    colors: Vec<[f64; 3]>,
}

impl Builder {
    fn vertex(&mut self, p: Point3<f64>, color: [f64; 3]) -> u32 {
        self.mesh.vertices.push(p);
        self.colors.push(color);
        (self.mesh.vertices.len() - 1) as u32
    }

    /// Quad `a b c d`, wound so that its normal points along `outward`.
    fn quad(&mut self, q: [Point3<f64>; 4], outward: Vector3<f64>, color: [f64; 3]) {
        let n = (q[1] - q[0]).cross(&(q[2] - q[0]));
        let q = if n.dot(&outward) < 0.0 { [q[0], q[3], q[2], q[1]] } else { q };
        let ids = q.map(|p| self.vertex(p, color));
        self.mesh.triangles.push([ids[0], ids[1], ids[2]]);
        self.mesh.triangles.push([ids[0], ids[2], ids[3]]);
    }

    fn begin(&self) -> usize {
        self.mesh.triangles.len()
    }

    fn end(&mut self, name: &str, start: usize) {
        let end = self.mesh.triangles.len();
        self.mesh.components.push(MeshComponent {
            name: name.into(),
            triangles: start..end,
        });
    }
}

pub fn coil_name(i: usize) -> String {
    format!("coil_{i:02}")
}

/// Stator of an axial-flux motor in model coordinates (z up): a disc of
/// radius 70 mm and thickness 8 mm whose top face is finely tessellated,
/// carrying twelve open-bottom coil blocks (18 × 16 × 14 mm) at radius 42 mm.
/// Components: `plate`, `coil_00` … `coil_11`.
pub fn axial_motor() -> TriangleMesh {
    const R: f64 = 70.0;
    const H: f64 = 8.0;
    const RINGS: usize = 14;
    const SECTORS: usize = 96;
    let mut b = Builder {
        mesh: TriangleMesh::default(),
        colors: Vec::new(),
    };

    let start = b.begin();
    let at = |r: f64, s: usize, z: f64| {
        let a = std::f64::consts::TAU * s as f64 / SECTORS as f64;
        Point3::new(r * a.cos(), r * a.sin(), z)
    };
    // top face: polar grid, counter-clockwise seen from +z
    let centre = b.vertex(Point3::new(0.0, 0.0, H), PLATE_COLOR);
    let mut rings = Vec::new();
    for k in 1..=RINGS {
        let r = R * k as f64 / RINGS as f64;
        let ids: Vec<u32> = (0..SECTORS).map(|s| b.vertex(at(r, s, H), PLATE_COLOR)).collect();
        rings.push(ids);
    }
    for s in 0..SECTORS {
        let t = (s + 1) % SECTORS;
        b.mesh.triangles.push([centre, rings[0][s], rings[0][t]]);
        for k in 0..RINGS - 1 {
            let (inner, outer) = (&rings[k], &rings[k + 1]);
            b.mesh.triangles.push([inner[s], outer[s], outer[t]]);
            b.mesh.triangles.push([inner[s], outer[t], inner[t]]);
        }
    }
    // bottom face and rim
    let bottom = b.vertex(Point3::new(0.0, 0.0, 0.0), PLATE_COLOR);
    let rim: Vec<u32> = (0..SECTORS).map(|s| b.vertex(at(R, s, 0.0), PLATE_COLOR)).collect();
    for s in 0..SECTORS {
        b.mesh.triangles.push([bottom, rim[(s + 1) % SECTORS], rim[s]]);
    }
    for s in 0..SECTORS {
        let t = (s + 1) % SECTORS;
        let mid = at(R, s, 0.0).coords + at(R, t, 0.0).coords;
        b.quad([at(R, s, 0.0), at(R, t, 0.0), at(R, t, H), at(R, s, H)], Vector3::new(mid.x, mid.y, 0.0), PLATE_COLOR);
    }
    b.end("plate", start);

    for i in 0..COIL_COUNT {
        let start = b.begin();
        let angle = std::f64::consts::TAU * i as f64 / COIL_COUNT as f64;
        let rot = RigidTransform::rot_z(angle.to_degrees());
        let (x0, x1, y0, y1, z0, z1) = (33.0, 51.0, -8.0, 8.0, H, H + 14.0);
        let c = |x: f64, y: f64, z: f64| rot.apply(&Point3::new(x, y, z));
        let out = |v: Vector3<f64>| rot.rotate(&v);
        b.quad([c(x0, y0, z1), c(x1, y0, z1), c(x1, y1, z1), c(x0, y1, z1)], out(Vector3::z()), COIL_COLOR);
        b.quad([c(x0, y0, z0), c(x1, y0, z0), c(x1, y0, z1), c(x0, y0, z1)], out(-Vector3::y()), COIL_COLOR);
        b.quad([c(x0, y1, z0), c(x1, y1, z0), c(x1, y1, z1), c(x0, y1, z1)], out(Vector3::y()), COIL_COLOR);
        b.quad([c(x0, y0, z0), c(x0, y1, z0), c(x0, y1, z1), c(x0, y0, z1)], out(-Vector3::x()), COIL_COLOR);
        b.quad([c(x1, y0, z0), c(x1, y1, z0), c(x1, y1, z1), c(x1, y0, z1)], out(Vector3::x()), COIL_COLOR);
        b.end(&coil_name(i), start);
    }
    let mut mesh = b.mesh;
    mesh.vertex_colors = Some(b.colors);
    mesh
}

/// Camera poses looking down onto the motor's top face from about 420 mm,
/// sweeping tilt and yaw over `count` frames.
pub fn motor_waypoints(count: usize) -> Vec<RigidTransform> {
    (0..count)
        .map(|i| {
            let s = std::f64::consts::TAU * i as f64 / count.max(1) as f64;
            RigidTransform::rot_x(180.0 + 20.0 * s.sin())
                .compose(&RigidTransform::rot_y(15.0 * s.cos()))
                .compose(&RigidTransform::rot_z(9.0 * i as f64))
                .with_translation(Vector3::new(10.0 * s.sin(), 6.0 * s.cos(), 420.0))
        })
        .collect()
}
