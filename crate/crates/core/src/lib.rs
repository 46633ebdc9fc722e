//! Occlusion-aware box layout toolkit: renders translucent, face-colored 3D
//! box layouts into condition images, generates occlusion-heavy synthetic
//! scenes, builds token-binding attention masks and scores layout adherence.

pub mod artifacts;
pub mod binding;
pub mod error;
pub mod geom;
pub mod image;
pub mod metrics;
pub mod procgen;
pub mod render;
pub mod scene;
pub mod scores;

pub use error::{Error, Result};
pub use geom::Vec3;
pub use render::{
    render_layer_map, render_layout_depth, render_oscr, visibility_ratio, RenderOptions,
    RenderOutput,
};
pub use scene::{
    box_corners, camera_pose, project, validate_layout, CameraPose, CameraSpec, FaceColorMap,
    FaceKey, NounSpan, OrientedBox, Projection, SceneLayout,
};
