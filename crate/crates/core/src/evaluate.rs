//! Scoring inspection reports against dataset annotations with IoU.
//!
//! For every image and every category annotated in it, the ground truth is
//! the union of that category's annotation masks and the prediction is the
//! union of the report's regions in the category's channel (colour for the
//! `color` category, depth for everything else). Per-image IoUs are then
//! averaged per category. Images where a category is not annotated are not
//! scored for it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotations::{SceneDataset, Supercategory};
use crate::detect::iou;
use crate::disparity::Channel;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::pipeline::InspectionReport;

pub fn channel_for_category(name: &str) -> Channel {
    if name == "color" {
        Channel::Color
    } else {
        Channel::Depth
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub scene: String,
    pub frame_id: u64,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub supercategory: Supercategory,
    pub channel: Channel,
    pub images: usize,
    pub mean_iou: f64,
    pub per_image: Vec<ImageScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub averaging: String,
    pub categories: Vec<CategoryScore>,
}

impl EvaluationTable {
    pub fn category(&self, name: &str) -> Option<&CategoryScore> {
        self.categories.iter().find(|c| c.category == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,supercategory,channel,images,mean_iou\n");
        for c in &self.categories {
            let sc = match c.supercategory {
                Supercategory::Logical => "logical",
                Supercategory::Structural => "structural",
            };
            s.push_str(&format!("{},{sc},{},{},{}\n", c.category, c.channel.as_str(), c.images, c.mean_iou));
        }
        s
    }
}

pub fn evaluate(reports: &[InspectionReport], ds: &SceneDataset) -> Result<EvaluationTable> {
    let mut scores: BTreeMap<u32, CategoryScore> = BTreeMap::new();
    for report in reports {
        let scene = if report.scene.is_empty() && ds.scenes.len() == 1 {
            &ds.scenes[0]
        } else {
            ds.scenes
                .iter()
                .find(|s| s.name == report.scene)
                .ok_or_else(|| Error::Validation(format!("report for unknown scene {:?}", report.scene)))?
        };
        let Some(img) = scene.defects.images.iter().find(|i| i.id == report.frame_id) else {
            return Err(Error::Validation(format!(
                "scene {}: no ground truth for reported frame {}",
                scene.name, report.frame_id
            )));
        };
        let (w, h) = (img.width, img.height);
        let mut gt: BTreeMap<u32, BinaryMask> = BTreeMap::new();
        for a in scene.defects.annotations_for(img.id) {
            let m = a.mask(w, h)?;
            let entry = gt.entry(a.category_id).or_insert_with(|| BinaryMask::new(w, h));
            entry.bits.iter_mut().zip(m.bits).for_each(|(x, y)| *x |= y);
        }
        for (cat_id, truth) in gt {
            let cat = scene.defects.category(cat_id).expect("validated category");
            let channel = channel_for_category(&cat.name);
            let pred = report.channel_mask(channel, w, h)?;
            let score = scores.entry(cat_id).or_insert_with(|| CategoryScore {
                category: cat.name.clone(),
                supercategory: cat.supercategory,
                channel,
                images: 0,
                mean_iou: 0.0,
                per_image: Vec::new(),
            });
            score.per_image.push(ImageScore {
                scene: scene.name.clone(),
                frame_id: img.id,
                iou: iou(&pred, &truth)?,
            });
        }
    }
    let categories = scores
        .into_values()
        .map(|mut c| {
            c.images = c.per_image.len();
            c.mean_iou = c.per_image.iter().map(|s| s.iou).sum::<f64>() / c.images.max(1) as f64;
            c
        })
        .collect();
    Ok(EvaluationTable {
        averaging: "per-image IoU, mean per category".into(),
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{CameraRecord, DefectAnnotation, FramePoseRecord, Scene, SceneFrame};
    use crate::detect::connected_components;
    use crate::disparity::{DisparityMap, DisparityStats};
    use crate::frame::{ColorImage, DepthImage};
    use crate::geometry::{CameraIntrinsics, RigidTransform};
    use crate::pipeline::{InspectParams, ReportStats};

    fn blob(w: u32, h: u32, x0: u32, y0: u32, s: u32) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for y in y0..y0 + s {
            for x in x0..x0 + s {
                m.set(x, y, true);
            }
        }
        m
    }

    fn scene_with(ann: Vec<DefectAnnotation>) -> SceneDataset {
        let mut s = Scene::new("s");
        let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 12.0, 32, 24).unwrap();
        s.push_frame(0, SceneFrame { color: ColorImage::new(32, 24), depth: DepthImage::new(32, 24) }, CameraRecord::new(&k, 0.1));
        s.gt.insert(0, vec![FramePoseRecord::new(1, &RigidTransform::identity())]);
        s.defects.annotations = ann;
        SceneDataset { scenes: vec![s] }
    }

    fn report(depth: &BinaryMask, color: &BinaryMask) -> InspectionReport {
        let regions = |m: &BinaryMask, channel| {
            let map = DisparityMap { width: m.width, height: m.height, values: vec![5.0; m.bits.len()], valid: vec![true; m.bits.len()], channel };
            connected_components(m, &map, 1).unwrap()
        };
        let empty = DisparityStats { valid_pixels: 0, mean: 0.0, p50: 0.0, p90: 0.0, p99: 0.0, max: 0.0 };
        InspectionReport {
            scene: "s".into(),
            frame_id: 0,
            pose_used: RigidTransform::identity(),
            icp: None,
            params: InspectParams::default(),
            depth_regions: regions(depth, Channel::Depth),
            color_regions: regions(color, Channel::Color),
            stats: ReportStats { depth: empty.clone(), color: empty },
        }
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let existence = blob(32, 24, 2, 2, 6);
        let color = blob(32, 24, 15, 10, 5);
        let ds = scene_with(vec![
            DefectAnnotation::polygon_from_mask(1, 0, 1, &existence),
            DefectAnnotation::polygon_from_mask(2, 0, 4, &color),
        ]);
        let t = evaluate(&[report(&existence, &color)], &ds).unwrap();
        assert_eq!(t.category("existence").unwrap().mean_iou, 1.0);
        assert_eq!(t.category("color").unwrap().mean_iou, 1.0);
        assert_eq!(t.category("color").unwrap().channel, Channel::Color);

        let none = BinaryMask::new(32, 24);
        let t = evaluate(&[report(&none, &none)], &ds).unwrap();
        assert_eq!(t.category("existence").unwrap().mean_iou, 0.0);
        assert!(t.to_csv().contains("existence,logical,depth,1,0"));
    }

    #[test]
    fn unknown_frame_is_an_error() {
        let ds = scene_with(Vec::new());
        let mut r = report(&BinaryMask::new(32, 24), &BinaryMask::new(32, 24));
        r.frame_id = 9;
        assert!(evaluate(&[r], &ds).unwrap_err().to_string().contains("frame 9"));
    }
}
