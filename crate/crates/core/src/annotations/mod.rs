//! Scene dataset format: BOP-style pose and camera records plus COCO-style
//! defect labels split into logical (polygon) and structural (RLE mask)
//! supercategories.

pub mod dataset;
pub mod polygon;
pub mod rle;

pub use dataset::{
    builtin_categories, read_dataset, validate_counts, write_dataset, CameraRecord, CountSummary,
    DefectAnnotation, DefectCategory, DefectSet, FramePoseRecord, ImageRecord, Scene, SceneDataset,
    SceneFrame, Segmentation, Supercategory, DEFAULT_DEPTH_SCALE,
};
pub use polygon::{mask_to_polygons, polygon_to_mask, polygons_to_mask};
pub use rle::{rle_decode, rle_encode, Rle};

/// Serde adapter writing a [`RigidTransform`](crate::RigidTransform) as
/// `{"cam_R_m2c": [9 reals, row-major], "cam_t_m2c": [3 reals, mm]}`.
pub mod pose_serde {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use crate::geometry::RigidTransform;

    #[allow(non_snake_case)]
    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Raw {
        cam_R_m2c: [f64; 9],
        cam_t_m2c: [f64; 3],
    }

    pub fn serialize<S: Serializer>(t: &RigidTransform, s: S) -> Result<S::Ok, S::Error> {
        Raw {
            cam_R_m2c: t.rotation_row_major(),
            cam_t_m2c: t.translation.into(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RigidTransform, D::Error> {
        let raw = Raw::deserialize(d)?;
        RigidTransform::from_row_major(&raw.cam_R_m2c, &raw.cam_t_m2c)
            .map_err(|e| D::Error::custom(format!("cam_R_m2c: {e}")))
    }

    /// Newtype for reading and writing a pose on its own.
    #[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
    pub struct PoseFile(#[serde(with = "self")] pub RigidTransform);
}
