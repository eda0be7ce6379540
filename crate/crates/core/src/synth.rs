//! Synthetic defect datasets: the "real" frames are renders of a defected
//! copy of the mesh (component removed, surface bump, or recoloured
//! component), with optional Gaussian depth noise, and the ground truth is
//! the exact pixel footprint of the change.

use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::annotations::{CameraRecord, DefectAnnotation, FramePoseRecord, Scene, SceneFrame, DEFAULT_DEPTH_SCALE};
use crate::bench::add_depth_noise;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::{dequantize_depth, quantize_depth, DepthImage};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mask::BinaryMask;
use crate::mesh::TriangleMesh;
use crate::render::{render_rgbd_with, RenderOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Existence,
    Deformation,
    Color,
}

impl DefectKind {
    /// Name of the matching built-in annotation category.
    pub fn category(self) -> &'static str {
        match self {
            DefectKind::Existence => "existence",
            DefectKind::Deformation => "deformation",
            DefectKind::Color => "color",
        }
    }
}

impl FromStr for DefectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "existence" => Ok(DefectKind::Existence),
            "deformation" => Ok(DefectKind::Deformation),
            "color" => Ok(DefectKind::Color),
            other => Err(Error::InvalidInput(format!(
                "unknown defect type {other:?} (expected existence, deformation or color)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub kind: DefectKind,
    /// Target component; by default the last one for existence/color and the
    /// one with the most triangles for deformation.
    pub component: Option<String>,
    /// Existence: any positive value removes the component. Deformation: bump
    /// height in mm. Color: blend weight towards `color` in `(0, 1]`.
    /// Zero leaves the mesh untouched.
    pub magnitude: f64,
    pub frames: usize,
    pub noise_sigma_mm: f64,
    pub seed: u64,
    pub depth_scale: f64,
    pub scene: String,
    pub bump_radius_mm: f64,
    /// Bump centre in model coordinates; defaults to the component centroid.
    pub bump_center: Option<[f64; 3]>,
    pub color: [f64; 3],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            kind: DefectKind::Existence,
            component: None,
            magnitude: 1.0,
            frames: 20,
            noise_sigma_mm: 0.2,
            seed: 0,
            depth_scale: DEFAULT_DEPTH_SCALE,
            scene: "000001".into(),
            bump_radius_mm: 12.0,
            bump_center: None,
            color: [0.15, 0.6, 0.3],
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::InvalidInput(format!("magnitude {} must be >= 0", self.magnitude)));
        }
        if self.kind == DefectKind::Color && self.magnitude > 1.0 {
            return Err(Error::InvalidInput("color magnitude is a blend weight in [0, 1]".into()));
        }
        if !(self.noise_sigma_mm >= 0.0) || !(self.depth_scale > 0.0) || !(self.bump_radius_mm > 0.0) {
            return Err(Error::InvalidInput("noise, depth_scale and bump radius must be positive".into()));
        }
        Ok(())
    }

    fn component_name(&self, mesh: &TriangleMesh) -> Result<String> {
        if let Some(name) = &self.component {
            return match mesh.component(name) {
                Some(_) => Ok(name.clone()),
                None => Err(Error::InvalidInput(format!("mesh has no component named {name:?}"))),
            };
        }
        let pick = match self.kind {
            DefectKind::Deformation => mesh.components.iter().max_by_key(|c| c.triangles.len()),
            _ => mesh.components.last(),
        };
        pick.map(|c| c.name.clone())
            .ok_or_else(|| Error::InvalidInput("mesh has no named components".into()))
    }
}

/// The defected copy of `mesh` described by `spec`.
pub fn apply_defect(mesh: &TriangleMesh, spec: &SynthSpec) -> Result<TriangleMesh> {
    spec.validate()?;
    let name = spec.component_name(mesh)?;
    if spec.magnitude == 0.0 {
        return Ok(mesh.clone());
    }
    match spec.kind {
        DefectKind::Existence => mesh.without_component(&name),
        DefectKind::Color => {
            let mut out = mesh.clone();
            let grey = [128.0 / 255.0; 3];
            let colors = out.vertex_colors.get_or_insert_with(|| vec![grey; mesh.vertices.len()]);
            let w = spec.magnitude;
            for v in mesh.component_vertices(&name)? {
                let c = &mut colors[v as usize];
                *c = std::array::from_fn(|i| (1.0 - w) * c[i] + w * spec.color[i]);
            }
            Ok(out)
        }
        DefectKind::Deformation => {
            let verts = mesh.component_vertices(&name)?;
            let centre = match spec.bump_center {
                Some(c) => Point3::from(c),
                None => {
                    let sum = verts.iter().fold(nalgebra::Vector3::zeros(), |a, &v| a + mesh.vertices[v as usize].coords);
                    Point3::from(sum / verts.len() as f64)
                }
            };
            let normals = mesh.compute_vertex_normals();
            let mut out = mesh.clone();
            let r = spec.bump_radius_mm;
            for v in verts {
                let p = mesh.vertices[v as usize];
                let d = (p - centre).norm();
                if d < r {
                    let weight = 0.5 * (1.0 + (std::f64::consts::PI * d / r).cos());
                    out.vertices[v as usize] = p + normals[v as usize] * (spec.magnitude * weight);
                }
            }
            out.vertex_normals = None;
            Ok(out)
        }
    }
}

fn quantized(depth: &DepthImage, scale: f64) -> Result<DepthImage> {
    let q = quantize_depth(depth, scale)?;
    Ok(DepthImage {
        width: depth.width,
        height: depth.height,
        data: q.into_iter().map(|v| dequantize_depth(v, scale)).collect(),
    })
}

/// One scene with a frame per pose. Frame `i` uses noise seed
/// `(spec.seed, i)`, so the output is reproducible bit for bit.
pub fn synth_scene(
    mesh: &TriangleMesh,
    k: &CameraIntrinsics,
    poses: &[RigidTransform],
    spec: &SynthSpec,
) -> Result<Scene> {
    spec.validate()?;
    k.validate()?;
    let defected = apply_defect(mesh, spec)?;
    let mut scene = Scene::new(spec.scene.clone());
    let category = scene
        .defects
        .category_by_name(spec.kind.category())
        .expect("built-in category")
        .clone();
    let opts = RenderOptions {
        exec: Exec::default(),
        ..Default::default()
    };
    for (i, pose) in poses.iter().enumerate() {
        let id = i as u64;
        let reference = render_rgbd_with(mesh, pose, k, opts);
        let real = render_rgbd_with(&defected, pose, k, opts);
        let bits: Vec<bool> = match spec.kind {
            DefectKind::Existence | DefectKind::Deformation => reference
                .depth
                .data
                .iter()
                .zip(&real.depth.data)
                .map(|(a, b)| a != b)
                .collect(),
            DefectKind::Color => reference
                .color
                .data
                .iter()
                .zip(&real.color.data)
                .map(|(a, b)| a != b)
                .collect(),
        };
        let gt = BinaryMask::from_bits(k.width, k.height, bits)?;

        let mut depth = real.depth;
        let stream = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id;
        add_depth_noise(&mut depth, spec.noise_sigma_mm, stream)?;
        let depth = quantized(&depth, spec.depth_scale)?;
        scene.push_frame(
            id,
            SceneFrame {
                color: real.color,
                depth,
            },
            CameraRecord::new(k, spec.depth_scale),
        );
        scene.gt.insert(id, vec![FramePoseRecord::new(1, pose)]);
        if !gt.is_empty() {
            let ann_id = scene.next_annotation_id();
            let ann = match category.supercategory {
                crate::annotations::Supercategory::Logical => DefectAnnotation::polygon_from_mask(ann_id, id, category.id, &gt),
                crate::annotations::Supercategory::Structural => DefectAnnotation::from_mask(ann_id, id, category.id, &gt),
            };
            scene.defects.annotations.push(ann);
        }
    }
    scene.validate()?;
    Ok(scene)
}
