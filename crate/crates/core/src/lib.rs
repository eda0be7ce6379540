//! Zero-shot visual quality inspection against a rendered digital twin.
//!
//! A CAD mesh placed at an estimated 6D pose is rasterised into an RGB-D
//! reference ([`render`]), the pose is optionally tightened with ICP against
//! the captured depth ([`registration`]), and per-pixel depth and CIELAB
//! disparities ([`disparity`]) are thresholded into defect regions
//! ([`detect`]). [`annotations`] reads and writes the scene dataset layout
//! (BOP-style pose records plus COCO-style logical/structural defect labels)
//! and [`evaluate`] scores detections against it with IoU.
//!
//! All lengths are millimetres; the camera looks down +Z with the image
//! origin top-left.

pub mod annotations;
pub mod bench;
pub mod detect;
pub mod disparity;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod fixtures;
pub mod frame;
pub mod geometry;
pub mod mask;
pub mod mesh;
pub mod mesh_io;
pub mod metrics;
pub mod pipeline;
pub mod registration;
pub mod render;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use frame::{ColorImage, DepthImage, RgbdFrame};
pub use geometry::{backproject, project, transform_points, CameraIntrinsics, PointCloud, RigidTransform};
pub use mask::BinaryMask;
pub use mesh::{MeshComponent, TriangleMesh};
pub use render::{render_depth_only, render_rgbd, write_frame};
