//! The online inspection pass: render the twin at the (optionally refined)
//! pose, compare depth and colour, and extract defect regions.

use serde::{Deserialize, Serialize};

use crate::detect::{detect_regions, DefectRegion, DEFAULT_CLEAN_RADIUS, DEFAULT_COLOR_TAU, DEFAULT_DEPTH_TAU, DEFAULT_MIN_AREA};
use crate::disparity::{color_disparity_with, depth_disparity_with, DisparityMap, DisparityStats};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::frame::RgbdFrame;
use crate::geometry::RigidTransform;
use crate::mask::BinaryMask;
use crate::mesh::TriangleMesh;
use crate::registration::{IcpMethod, IcpModel, IcpParams, IcpResult, IcpTarget};
use crate::render::{render_rgbd_with, RenderOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectParams {
    /// mm.
    pub depth_tau: f64,
    /// ΔE76.
    pub color_tau: f64,
    pub clean_radius: u32,
    pub min_area: usize,
}

impl Default for InspectParams {
    fn default() -> Self {
        Self {
            depth_tau: DEFAULT_DEPTH_TAU,
            color_tau: DEFAULT_COLOR_TAU,
            clean_radius: DEFAULT_CLEAN_RADIUS,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

impl InspectParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_tau > 0.0 && self.color_tau > 0.0) || self.min_area == 0 {
            return Err(Error::InvalidInput(format!("invalid inspection parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub refine: bool,
    pub inspect: InspectParams,
    pub icp: IcpParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpSummary {
    #[serde(with = "crate::annotations::pose_serde")]
    pub initial_pose: RigidTransform,
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub correspondence_count: usize,
    pub method: IcpMethod,
    pub diagnostic: Option<String>,
}

impl IcpSummary {
    fn new(initial_pose: RigidTransform, r: &IcpResult) -> Self {
        Self {
            initial_pose,
            rmse: r.rmse,
            iterations: r.iterations,
            converged: r.converged,
            correspondence_count: r.correspondence_count,
            method: r.method,
            diagnostic: r.diagnostic.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub depth: DisparityStats,
    pub color: DisparityStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    #[serde(default)]
    pub scene: String,
    pub frame_id: u64,
    #[serde(with = "crate::annotations::pose_serde")]
    pub pose_used: RigidTransform,
    pub icp: Option<IcpSummary>,
    pub params: InspectParams,
    pub depth_regions: Vec<DefectRegion>,
    pub color_regions: Vec<DefectRegion>,
    pub stats: ReportStats,
}

impl InspectionReport {
    /// Union of the region masks of one channel.
    pub fn channel_mask(&self, channel: crate::disparity::Channel, width: u32, height: u32) -> Result<BinaryMask> {
        let regions = match channel {
            crate::disparity::Channel::Depth => &self.depth_regions,
            crate::disparity::Channel::Color => &self.color_regions,
        };
        let mut m = BinaryMask::new(width, height);
        for r in regions {
            let rm = r.mask()?;
            if (rm.width, rm.height) != (width, height) {
                return Err(Error::DimensionMismatch(format!(
                    "region mask {}x{} for a {width}x{height} frame",
                    rm.width, rm.height
                )));
            }
            m.bits.iter_mut().zip(rm.bits).for_each(|(a, b)| *a |= b);
        }
        Ok(m)
    }
}

/// Report plus the rasters behind it.
#[derive(Clone, Debug)]
pub struct Inspection {
    pub report: InspectionReport,
    pub depth_map: DisparityMap,
    pub color_map: DisparityMap,
    pub depth_mask: BinaryMask,
    pub color_mask: BinaryMask,
}

/// Compares `frame` against the twin rendered at `pose`.
pub fn inspect(
    mesh: &TriangleMesh,
    frame: &RgbdFrame,
    pose: &RigidTransform,
    params: &InspectParams,
    exec: Exec,
) -> Result<Inspection> {
    params.validate()?;
    pose.validate()?;
    let k = &frame.intrinsics;
    let twin = render_rgbd_with(mesh, pose, k, RenderOptions { exec, ..Default::default() });
    let depth_map = depth_disparity_with(&twin.depth, &frame.depth, exec)?;
    let footprint = twin.depth.validity();
    let color_map = color_disparity_with(&twin.color, &frame.color, &footprint, exec)?;
    let (depth_mask, depth_regions) = detect_regions(&depth_map, params.depth_tau, params.clean_radius, params.min_area)?;
    let (color_mask, color_regions) = detect_regions(&color_map, params.color_tau, params.clean_radius, params.min_area)?;
    let report = InspectionReport {
        scene: String::new(),
        frame_id: 0,
        pose_used: *pose,
        icp: None,
        params: params.clone(),
        depth_regions,
        color_regions,
        stats: ReportStats {
            depth: depth_map.stats(),
            color: color_map.stats(),
        },
    };
    Ok(Inspection {
        report,
        depth_map,
        color_map,
        depth_mask,
        color_mask,
    })
}

/// Optional ICP refinement of `initial` against the frame's depth, followed
/// by [`inspect`]. A non-converged refinement is not an error; it is recorded
/// in the report and its pose is still used.
pub fn run_pipeline(
    mesh: &TriangleMesh,
    frame: &RgbdFrame,
    initial: &RigidTransform,
    params: &PipelineParams,
    exec: Exec,
) -> Result<Inspection> {
    let (pose, icp) = if params.refine {
        let model = IcpModel::from_mesh(mesh, &params.icp)?;
        let target = IcpTarget::from_depth(&frame.depth, &frame.intrinsics, params.icp.normal_k, exec)?;
        let res = model.refine(&target, &frame.intrinsics, initial, &params.icp, exec);
        (res.refined_pose, Some(IcpSummary::new(*initial, &res)))
    } else {
        (*initial, None)
    };
    let mut out = inspect(mesh, frame, &pose, &params.inspect, exec)?;
    out.report.icp = icp;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disparity::Channel;
    use crate::fixtures::{axial_motor, default_camera, motor_waypoints};
    use crate::render::render_rgbd;
    use crate::detect::iou;
    use crate::synth::{apply_defect, DefectKind, SynthSpec};

    #[test]
    fn self_comparison_finds_nothing() {
        let mesh = axial_motor();
        let pose = motor_waypoints(4)[1];
        let frame = render_rgbd(&mesh, &pose, &default_camera());
        for tau in [0.01, 2.0] {
            let params = InspectParams { depth_tau: tau, color_tau: tau, ..Default::default() };
            let r = inspect(&mesh, &frame, &pose, &params, Exec::default()).unwrap().report;
            assert!(r.depth_regions.is_empty() && r.color_regions.is_empty());
        }
    }

    fn footprint_iou(kind: DefectKind, channel: Channel) -> (f64, usize) {
        let mesh = axial_motor();
        let k = default_camera();
        let pose = motor_waypoints(4)[0];
        let spec = SynthSpec { kind, component: Some("coil_02".into()), ..Default::default() };
        let defected = apply_defect(&mesh, &spec).unwrap();
        let a = render_rgbd(&mesh, &pose, &k);
        let real = render_rgbd(&defected, &pose, &k);
        let truth: Vec<bool> = match channel {
            Channel::Depth => a.depth.data.iter().zip(&real.depth.data).map(|(x, y)| x != y).collect(),
            Channel::Color => a.color.data.iter().zip(&real.color.data).map(|(x, y)| x != y).collect(),
        };
        let truth = BinaryMask::from_bits(k.width, k.height, truth).unwrap();
        let r = inspect(&mesh, &real, &pose, &InspectParams::default(), Exec::default()).unwrap().report;
        let regions = match channel {
            Channel::Depth => r.depth_regions.len(),
            Channel::Color => r.color_regions.len(),
        };
        (iou(&r.channel_mask(channel, k.width, k.height).unwrap(), &truth).unwrap(), regions)
    }

    #[test]
    fn missing_coil_is_one_depth_region() {
        let (score, regions) = footprint_iou(DefectKind::Existence, Channel::Depth);
        assert_eq!(regions, 1);
        assert!(score >= 0.9, "{score}");
    }

    #[test]
    fn recoloured_coil_is_one_color_region() {
        let (score, regions) = footprint_iou(DefectKind::Color, Channel::Color);
        assert_eq!(regions, 1);
        assert!(score >= 0.9, "{score}");
    }

    #[test]
    fn report_json_round_trip() {
        let mesh = axial_motor();
        let pose = motor_waypoints(4)[2];
        let frame = render_rgbd(&apply_defect(&mesh, &SynthSpec::default()).unwrap(), &pose, &default_camera());
        let r = run_pipeline(&mesh, &frame, &pose, &PipelineParams::default(), Exec::default()).unwrap().report;
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("cam_R_m2c") && text.contains("depth_regions"));
        let back: InspectionReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
