//! Monocular food portion estimation from a single image: checkerboard PnP,
//! mask-based object pose, silhouette rendering of a reference mesh, and
//! volume/energy scaling from the area ratio.

pub mod dataset;
pub mod estimate;
pub mod geometry;
pub mod io;
pub mod mask;
pub mod mesh;
pub mod objectpose;
pub mod render;
pub mod synth;

pub use geometry::{CalibratedCamera, CameraIntrinsics, Correspondence, GeometryError, RigidTransform};
pub use mask::Silhouette;
pub use mesh::{MeshDb, MeshError, TriangleMesh};
pub use objectpose::{AblationFlags, ObjectPose, PoseError};
