use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::PointCloud;

use super::kdtree::KdTree;

/// Per-point normals from the smallest-eigenvalue eigenvector of the
/// covariance of each point's `k` nearest neighbours (the point included),
/// flipped to face the camera at the origin.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    let tree = KdTree::build(&cloud.points);
    estimate_normals_with(cloud, k, &tree, Exec::default())
}

/// As [`estimate_normals`], reusing a tree already built over `cloud.points`.
pub fn estimate_normals_with(
    cloud: &PointCloud,
    k: usize,
    tree: &KdTree,
    exec: Exec,
) -> Result<PointCloud> {
    if k < 2 || cloud.len() < k + 1 {
        return Err(Error::TooFewPoints {
            needed: k.max(2) + 1,
            have: cloud.len(),
        });
    }
    let normals = exec.map_slice(&cloud.points, |p| {
        let nbrs = tree.k_nearest(p, k);
        let mean = nbrs
            .iter()
            .fold(Vector3::zeros(), |acc, &(i, _)| acc + tree.point(i).coords)
            / nbrs.len() as f64;
        let cov = nbrs.iter().fold(Matrix3::zeros(), |acc, &(i, _)| {
            let d = tree.point(i).coords - mean;
            acc + d * d.transpose()
        });
        let eig = SymmetricEigen::new(cov);
        let min = eig.eigenvalues.imin();
        let mut n: Vector3<f64> = eig.eigenvectors.column(min).into_owned();
        n = n.try_normalize(0.0).unwrap_or_else(Vector3::z);
        if n.dot(&(-p.coords)) < 0.0 {
            n = -n;
        }
        n
    });
    Ok(PointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
        colors: cloud.colors.clone(),
    })
}
