//! On-disk layout, one directory per scene:
//!
//! ```text
//! <root>/<scene>/rgb/NNNNNN.png      8-bit RGB
//! <root>/<scene>/depth/NNNNNN.png    16-bit, value × depth_scale = mm
//! <root>/<scene>/scene_gt.json       frame id → [{obj_id, cam_R_m2c, cam_t_m2c}]
//! <root>/<scene>/scene_camera.json   frame id → {cam_K, depth_scale, width, height}
//! <root>/<scene>/defects.json        {images, categories, annotations}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::polygon::{polygons_to_mask, shoelace_area};
use super::rle::{rle_decode, rle_encode, Rle};
use crate::error::{Error, Result};
use crate::frame::{read_color_png, read_depth_png, write_color_png, write_depth_png, ColorImage, DepthImage};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mask::BinaryMask;

/// mm per stored depth unit.
pub const DEFAULT_DEPTH_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Supercategory {
    Logical,
    Structural,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectCategory {
    pub id: u32,
    pub name: String,
    pub supercategory: Supercategory,
}

/// existence, position, type, color (logical); deformation, crack (structural).
pub fn builtin_categories() -> Vec<DefectCategory> {
    use Supercategory::*;
    [
        (1, "existence", Logical),
        (2, "position", Logical),
        (3, "type", Logical),
        (4, "color", Logical),
        (5, "deformation", Structural),
        (6, "crack", Structural),
    ]
    .into_iter()
    .map(|(id, name, supercategory)| DefectCategory {
        id,
        name: name.into(),
        supercategory,
    })
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    /// Rings as flat `[x0, y0, x1, y1, ...]` lists in pixels.
    Polygon(Vec<Vec<f64>>),
    Rle(Rle),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub segmentation: Segmentation,
    /// Pixel count of the rasterised segmentation.
    pub area: u64,
    /// `(x, y, w, h)` in pixels.
    pub bbox: [u32; 4],
}

impl DefectAnnotation {
    /// Structural label stored as RLE.
    pub fn from_mask(id: u64, image_id: u64, category_id: u32, mask: &BinaryMask) -> Self {
        Self {
            id,
            image_id,
            category_id,
            segmentation: Segmentation::Rle(rle_encode(mask)),
            area: mask.count() as u64,
            bbox: mask.bbox().unwrap_or([0; 4]),
        }
    }

    /// Logical label stored as the traced outline of `mask`.
    pub fn polygon_from_mask(id: u64, image_id: u64, category_id: u32, mask: &BinaryMask) -> Self {
        let rings = super::polygon::mask_to_polygons(mask)
            .into_iter()
            .map(|r| r.into_iter().flatten().collect())
            .collect();
        Self {
            id,
            image_id,
            category_id,
            segmentation: Segmentation::Polygon(rings),
            area: mask.count() as u64,
            bbox: mask.bbox().unwrap_or([0; 4]),
        }
    }

    pub fn mask(&self, width: u32, height: u32) -> Result<BinaryMask> {
        match &self.segmentation {
            Segmentation::Polygon(flat) => {
                let rings = flat_rings(flat)?;
                polygons_to_mask(&rings, width, height)
            }
            Segmentation::Rle(rle) => {
                if rle.size != [height, width] {
                    return Err(Error::DimensionMismatch(format!(
                        "RLE size {:?} for a {width}x{height} image",
                        rle.size
                    )));
                }
                rle_decode(rle)
            }
        }
    }
}

fn flat_rings(flat: &[Vec<f64>]) -> Result<Vec<Vec<[f64; 2]>>> {
    flat.iter()
        .map(|r| {
            if r.len() % 2 != 0 || r.len() < 6 {
                return Err(Error::Validation(format!(
                    "polygon ring of {} coordinates needs an even count of at least 6",
                    r.len()
                )));
            }
            Ok(r.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

/// The COCO-style `defects.json` triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectSet {
    pub images: Vec<ImageRecord>,
    pub categories: Vec<DefectCategory>,
    pub annotations: Vec<DefectAnnotation>,
}

impl Default for DefectSet {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            categories: builtin_categories(),
            annotations: Vec::new(),
        }
    }
}

impl DefectSet {
    pub fn category(&self, id: u32) -> Option<&DefectCategory> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn category_by_name(&self, name: &str) -> Option<&DefectCategory> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn annotations_for(&self, image_id: u64) -> impl Iterator<Item = &DefectAnnotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePoseRecord {
    pub obj_id: u32,
    pub cam_R_m2c: [f64; 9],
    pub cam_t_m2c: [f64; 3],
}

impl FramePoseRecord {
    pub fn new(obj_id: u32, pose: &RigidTransform) -> Self {
        Self {
            obj_id,
            cam_R_m2c: pose.rotation_row_major(),
            cam_t_m2c: pose.translation.into(),
        }
    }

    pub fn pose(&self) -> Result<RigidTransform> {
        RigidTransform::from_row_major(&self.cam_R_m2c, &self.cam_t_m2c)
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub cam_K: [f64; 9],
    pub depth_scale: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraRecord {
    pub fn new(k: &CameraIntrinsics, depth_scale: f64) -> Self {
        Self {
            cam_K: k.k_row_major(),
            depth_scale,
            width: k.width,
            height: k.height,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let k = &self.cam_K;
        if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
            return Err(Error::Validation("cam_K must be [fx 0 cx; 0 fy cy; 0 0 1]".into()));
        }
        CameraIntrinsics::from_k_row_major(k, self.width, self.height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneFrame {
    pub color: ColorImage,
    /// mm, 0 = invalid.
    pub depth: DepthImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub name: String,
    pub frames: BTreeMap<u64, SceneFrame>,
    pub gt: BTreeMap<u64, Vec<FramePoseRecord>>,
    pub camera: BTreeMap<u64, CameraRecord>,
    pub defects: DefectSet,
}

impl Scene {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            frames: BTreeMap::new(),
            gt: BTreeMap::new(),
            camera: BTreeMap::new(),
            defects: DefectSet::default(),
        }
    }

    /// Adds a frame with its camera record and image entry.
    pub fn push_frame(&mut self, id: u64, frame: SceneFrame, camera: CameraRecord) {
        self.defects.images.retain(|i| i.id != id);
        self.defects.images.push(ImageRecord {
            id,
            file_name: frame_file("rgb", id),
            width: frame.color.width,
            height: frame.color.height,
        });
        self.frames.insert(id, frame);
        self.camera.insert(id, camera);
    }

    pub fn next_annotation_id(&self) -> u64 {
        self.defects.annotations.iter().map(|a| a.id + 1).max().unwrap_or(1)
    }

    /// Structural checks; messages name the scene and frame involved.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("scene {}: {msg}", self.name)));
        let mut cat_ids = BTreeSet::new();
        for c in &self.defects.categories {
            if !cat_ids.insert(c.id) {
                return fail(format!("duplicate category id {}", c.id));
            }
        }
        for b in builtin_categories() {
            if !self.defects.categories.contains(&b) {
                return fail(format!("built-in category {} (id {}) missing", b.name, b.id));
            }
        }
        for (id, f) in &self.frames {
            let Some(cam) = self.camera.get(id) else {
                return fail(format!("frame {id}: no scene_camera record"));
            };
            if let Err(e) = cam.intrinsics() {
                return fail(format!("frame {id}: {e}"));
            }
            if !(cam.depth_scale > 0.0) {
                return fail(format!("frame {id}: depth_scale must be > 0"));
            }
            let (w, h) = (cam.width, cam.height);
            if (f.color.width, f.color.height) != (w, h) || (f.depth.width, f.depth.height) != (w, h) {
                return fail(format!("frame {id}: image size differs from camera {w}x{h}"));
            }
        }
        for id in self.camera.keys() {
            if !self.frames.contains_key(id) {
                return fail(format!("frame {id}: camera record without images"));
            }
        }
        for (id, poses) in &self.gt {
            for p in poses {
                if let Err(e) = p.pose() {
                    return fail(format!("frame {id}: obj {}: {e}", p.obj_id));
                }
            }
        }
        let mut image_ids = BTreeSet::new();
        for img in &self.defects.images {
            if !image_ids.insert(img.id) {
                return fail(format!("duplicate image id {}", img.id));
            }
            let Some(f) = self.frames.get(&img.id) else {
                return fail(format!("image id {} has no frame", img.id));
            };
            if (img.width, img.height) != (f.color.width, f.color.height) {
                return fail(format!("frame {}: image record size mismatch", img.id));
            }
        }
        let mut ann_ids = BTreeSet::new();
        for a in &self.defects.annotations {
            if !ann_ids.insert(a.id) {
                return fail(format!("duplicate annotation id {}", a.id));
            }
            let Some(img) = self.defects.images.iter().find(|i| i.id == a.image_id) else {
                return fail(format!("annotation {} references absent image_id {}", a.id, a.image_id));
            };
            let frame = a.image_id;
            let Some(cat) = self.defects.category(a.category_id) else {
                return fail(format!("frame {frame}: annotation {} has unknown category_id {}", a.id, a.category_id));
            };
            match (&a.segmentation, cat.supercategory) {
                (Segmentation::Polygon(flat), Supercategory::Logical) => {
                    let rings = match flat_rings(flat) {
                        Ok(r) => r,
                        Err(e) => return fail(format!("frame {frame}: annotation {}: {e}", a.id)),
                    };
                    if rings.is_empty() {
                        return fail(format!("frame {frame}: annotation {} has no polygon", a.id));
                    }
                    let (w, h) = (img.width as f64, img.height as f64);
                    for r in &rings {
                        if r.len() < 3 || shoelace_area(r) == 0.0 {
                            return fail(format!("frame {frame}: annotation {}: degenerate polygon", a.id));
                        }
                        if r.iter().any(|p| !(p[0] >= -0.5 && p[0] <= w - 0.5 && p[1] >= -0.5 && p[1] <= h - 0.5)) {
                            return fail(format!("frame {frame}: annotation {}: polygon vertex outside the image", a.id));
                        }
                    }
                }
                (Segmentation::Rle(rle), Supercategory::Structural) => {
                    if rle.size != [img.height, img.width] {
                        return fail(format!("frame {frame}: annotation {}: RLE size {:?} mismatches image", a.id, rle.size));
                    }
                    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
                    if total != img.width as u64 * img.height as u64 {
                        return fail(format!("frame {frame}: annotation {}: RLE runs sum to {total}", a.id));
                    }
                }
                (seg, sc) => {
                    let kind = if matches!(seg, Segmentation::Polygon(_)) { "polygon" } else { "RLE mask" };
                    return fail(format!(
                        "frame {frame}: annotation {}: {sc:?} category {} carries a {kind}; logical labels need a polygon, structural labels an RLE mask",
                        a.id, cat.name
                    ));
                }
            }
            if !self.gt.get(&frame).is_some_and(|p| !p.is_empty()) {
                return fail(format!("frame {frame}: has defects but no pose record"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneDataset {
    pub scenes: Vec<Scene>,
}

fn frame_file(dir: &str, id: u64) -> String {
    format!("{dir}/{id:06}.png")
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Validates every scene, then writes it under `root`.
pub fn write_dataset(ds: &SceneDataset, root: &Path) -> Result<()> {
    for scene in &ds.scenes {
        scene.validate()?;
    }
    for scene in &ds.scenes {
        let dir = root.join(&scene.name);
        for sub in ["rgb", "depth"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for (id, f) in &scene.frames {
            let scale = scene.camera[id].depth_scale;
            write_depth_png(&f.depth, scale, &dir.join(frame_file("depth", *id)))?;
            write_color_png(&f.color, &dir.join(frame_file("rgb", *id)))?;
        }
        write_json(&scene.gt, &dir.join("scene_gt.json"))?;
        write_json(&scene.camera, &dir.join("scene_camera.json"))?;
        write_json(&scene.defects, &dir.join("defects.json"))?;
    }
    Ok(())
}

/// Reads every scene directory under `root` (sorted by name) and validates it.
pub fn read_dataset(root: &Path) -> Result<SceneDataset> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("scene_camera.json").is_file())
        .collect();
    dirs.sort();
    let scenes = dirs.iter().map(|d| read_scene(d)).collect::<Result<_>>()?;
    Ok(SceneDataset { scenes })
}

pub fn read_scene(dir: &Path) -> Result<Scene> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let camera: BTreeMap<u64, CameraRecord> = read_json(&dir.join("scene_camera.json"))?;
    let gt: BTreeMap<u64, Vec<FramePoseRecord>> = read_json(&dir.join("scene_gt.json"))?;
    let defects: DefectSet = read_json(&dir.join("defects.json"))?;
    let mut frames = BTreeMap::new();
    for (id, cam) in &camera {
        let color = read_color_png(&dir.join(frame_file("rgb", *id)))?;
        let depth = read_depth_png(&dir.join(frame_file("depth", *id)), cam.depth_scale)?;
        frames.insert(*id, SceneFrame { color, depth });
    }
    let scene = Scene {
        name,
        frames,
        gt,
        camera,
        defects,
    };
    scene.validate().map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", dir.display())),
        other => other,
    })?;
    Ok(scene)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSummary {
    pub images: usize,
    pub structural_images: usize,
    pub logical_images: usize,
    pub structural_annotations: usize,
    pub logical_annotations: usize,
    /// `scene/frame` of images with more than one logical annotation.
    pub multi_logical_images: Vec<String>,
}

pub fn validate_counts(ds: &SceneDataset) -> CountSummary {
    let mut s = CountSummary::default();
    for scene in &ds.scenes {
        s.images += scene.defects.images.len();
        let mut per_image: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
        for a in &scene.defects.annotations {
            let Some(cat) = scene.defects.category(a.category_id) else {
                continue;
            };
            let e = per_image.entry(a.image_id).or_default();
            match cat.supercategory {
                Supercategory::Logical => {
                    e.0 += 1;
                    s.logical_annotations += 1;
                }
                Supercategory::Structural => {
                    e.1 += 1;
                    s.structural_annotations += 1;
                }
            }
        }
        for (id, (logical, structural)) in per_image {
            s.logical_images += (logical > 0) as usize;
            s.structural_images += (structural > 0) as usize;
            if logical > 1 {
                s.multi_logical_images.push(format!("{}/{id}", scene.name));
            }
        }
    }
    s
}
