//! Triangle meshes with optional per-vertex colour/normals and named
//! component groups (e.g. one group per coil of an assembly).

use std::ops::Range;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};

/// A named, contiguous run of triangles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshComponent {
    pub name: String,
    pub triangles: Range<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    /// Vertex positions in mm.
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// sRGB in `[0, 1]`.
    pub vertex_colors: Option<Vec<[f64; 3]>>,
    pub vertex_normals: Option<Vec<Vector3<f64>>>,
    pub components: Vec<MeshComponent>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            ..Default::default()
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= n) {
                return Err(Error::InvalidInput(format!(
                    "triangle {i} references a vertex >= {n}"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::InvalidInput(format!("triangle {i} repeats a vertex")));
            }
        }
        if let Some(c) = &self.vertex_colors {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!("{} colours for {n} vertices", c.len())));
            }
        }
        if let Some(normals) = &self.vertex_normals {
            if normals.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} normals for {n} vertices",
                    normals.len()
                )));
            }
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-4) {
                return Err(Error::InvalidInput(format!("vertex normal {i} is not unit length")));
            }
        }
        for c in &self.components {
            if c.triangles.end > self.triangles.len() {
                return Err(Error::InvalidInput(format!(
                    "component {:?} exceeds the triangle list",
                    c.name
                )));
            }
        }
        Ok(())
    }

    pub fn triangle_vertices(&self, i: usize) -> [Point3<f64>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Unnormalised normal `(b − a) × (c − a)`; its norm is twice the area.
    pub fn face_cross(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle_vertices(i);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        0.5 * self.face_cross(i).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    /// Area-weighted vertex normals; isolated vertices get `+Z`.
    pub fn compute_vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for (i, t) in self.triangles.iter().enumerate() {
            let n = self.face_cross(i);
            for &v in t {
                acc[v as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize(1e-15).unwrap_or_else(Vector3::z))
            .collect()
    }

    pub fn component(&self, name: &str) -> Option<&MeshComponent> {
        self.components.iter().find(|c| c.name == name)
    }

    /// Component owning triangle `i`, if any.
    pub fn component_of(&self, tri: usize) -> Option<&MeshComponent> {
        self.components.iter().find(|c| c.triangles.contains(&tri))
    }

    /// Vertex set used by the triangles of component `name`.
    pub fn component_vertices(&self, name: &str) -> Result<Vec<u32>> {
        let comp = self
            .component(name)
            .ok_or_else(|| Error::InvalidInput(format!("mesh has no component named {name:?}")))?;
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles[comp.triangles.clone()] {
            t.iter().for_each(|&v| used[v as usize] = true);
        }
        Ok((0..self.vertices.len() as u32).filter(|&v| used[v as usize]).collect())
    }

    /// Copy with component `name` removed. Vertices are kept so indices stay stable.
    pub fn without_component(&self, name: &str) -> Result<TriangleMesh> {
        let comp = self
            .component(name)
            .ok_or_else(|| Error::InvalidInput(format!("mesh has no component named {name:?}")))?
            .clone();
        let removed = comp.triangles.len();
        let mut out = self.clone();
        out.triangles.drain(comp.triangles.clone());
        out.components = self
            .components
            .iter()
            .filter(|c| c.name != name)
            .map(|c| {
                let shift = |i: usize| if i >= comp.triangles.end { i - removed } else { i };
                MeshComponent {
                    name: c.name.clone(),
                    triangles: shift(c.triangles.start)..shift(c.triangles.end),
                }
            })
            .collect();
        Ok(out)
    }

    /// Appends `other`, keeping its components (and colours when both or
    /// either side has them; missing colours default to mid-grey).
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len() as u32;
        let tri_base = self.triangles.len();
        let grey = [128.0 / 255.0; 3];
        if self.vertex_colors.is_some() || other.vertex_colors.is_some() {
            let mut colors = self
                .vertex_colors
                .take()
                .unwrap_or_else(|| vec![grey; self.vertices.len()]);
            match &other.vertex_colors {
                Some(c) => colors.extend_from_slice(c),
                None => colors.extend(std::iter::repeat_n(grey, other.vertices.len())),
            }
            self.vertex_colors = Some(colors);
        }
        self.vertex_normals = None;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|v| v + base)));
        self.components.extend(other.components.iter().map(|c| MeshComponent {
            name: c.name.clone(),
            triangles: c.triangles.start + tri_base..c.triangles.end + tri_base,
        }));
    }

    /// Rigidly moves the vertices (and rotates normals).
    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        let mut out = self.clone();
        out.vertices.iter_mut().for_each(|p| *p = t.apply(p));
        if let Some(ns) = &mut out.vertex_normals {
            ns.iter_mut().for_each(|n| *n = t.rotate(n));
        }
        out
    }

    pub fn set_uniform_color(&mut self, rgb: [f64; 3]) {
        self.vertex_colors = Some(vec![rgb; self.vertices.len()]);
    }

    /// Vertices as a point cloud (the default model points for ADD).
    pub fn vertex_cloud(&self) -> PointCloud {
        PointCloud::new(self.vertices.clone())
    }

    /// Largest vertex distance from the model origin.
    pub fn radius(&self) -> f64 {
        self.vertices
            .iter()
            .map(|p| p.coords.norm())
            .fold(0.0, f64::max)
    }
}
