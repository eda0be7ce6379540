use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::mesh::TriangleMesh;

/// `n` points spread uniformly by area over the mesh surface, each carrying
/// the unit normal of its face. Deterministic for a fixed `seed`.
pub fn sample_mesh_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if mesh.is_empty() {
        return Err(Error::Empty("mesh to sample"));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for i in 0..mesh.triangles.len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::InvalidInput("mesh has zero surface area".into()));
    }
    let normals: Vec<Vector3<f64>> = (0..mesh.triangles.len())
        .map(|i| mesh.face_cross(i).try_normalize(0.0).unwrap_or_else(Vector3::z))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut point_normals = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.random::<f64>() * total;
        let tri = cumulative
            .partition_point(|&c| c <= r)
            .min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle_vertices(tri);
        // uniform barycentric sample via the square-root warp
        let s = rng.random::<f64>().sqrt();
        let t = rng.random::<f64>();
        let p = a.coords * (1.0 - s) + b.coords * (s * (1.0 - t)) + c.coords * (s * t);
        points.push(Point3::from(p));
        point_normals.push(normals[tri]);
    }
    Ok(PointCloud {
        points,
        normals: Some(point_normals),
        colors: None,
    })
}
