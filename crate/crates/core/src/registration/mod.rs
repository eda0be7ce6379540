//! ICP pose refinement: surface sampling, normal estimation, exact
//! nearest-neighbour search and the point-to-point / point-to-plane solvers.

pub mod icp;
pub mod kdtree;
pub mod normals;
pub mod sampling;

pub use icp::{icp_clouds, icp_refine, kabsch, IcpMethod, IcpModel, IcpParams, IcpResult, IcpTarget, Visibility};
pub use kdtree::KdTree;
pub use normals::{estimate_normals, estimate_normals_with};
pub use sampling::sample_mesh_surface;
