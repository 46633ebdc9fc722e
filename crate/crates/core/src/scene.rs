//! Layout and camera types, box geometry, pinhole projection and layout
//! validation.
//!
//! World frame: Z up, the floor is the plane z = 0, and a box with yaw 0 has
//! its front face pointing at +Y. The camera sits on the upper hemisphere
//! around the origin and always looks at the origin.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Points closer than this to the camera plane are not rendered.
pub const NEAR_PLANE: f64 = 1e-3;

pub const DEFAULT_FOV_DEG: f64 = 50.0;
pub const DEFAULT_IMAGE_SIZE: u32 = 512;

/// Maps any finite angle into `[0, 2π)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    let y = yaw.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Half-open token range `[start, end)` of a box's noun phrase in the
/// whitespace-tokenized prompt. Serialized as `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct NounSpan {
    pub start: usize,
    pub end: usize,
}

impl NounSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &NounSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, token: usize) -> bool {
        self.start <= token && token < self.end
    }
}

impl From<[usize; 2]> for NounSpan {
    fn from(a: [usize; 2]) -> Self {
        NounSpan::new(a[0], a[1])
    }
}

impl From<NounSpan> for [usize; 2] {
    fn from(s: NounSpan) -> Self {
        [s.start, s.end]
    }
}

/// One object's 3D bounding box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientedBox {
    pub id: u32,
    pub label: String,
    /// Box center in world coordinates, meters.
    pub center: Vec3,
    /// Extent along the box's local x (width), y (depth) and z (height).
    pub dims: Vec3,
    /// Rotation about +Z in radians.
    pub yaw: f64,
    pub noun_span: NounSpan,
    /// Lets the box float below/above the floor without a violation.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub levitating: bool,
}

impl OrientedBox {
    pub fn new(
        id: u32,
        label: impl Into<String>,
        center: Vec3,
        dims: Vec3,
        yaw: f64,
        noun_span: NounSpan,
    ) -> Self {
        Self {
            id,
            label: label.into(),
            center,
            dims,
            yaw: normalize_yaw(yaw),
            noun_span,
            levitating: false,
        }
    }

    /// Rotates a box-local offset into the world frame (yaw about +Z).
    pub fn local_to_world_dir(&self, v: Vec3) -> Vec3 {
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    /// The eight corners. Corner `i` takes the `+` half extent along local
    /// x, y, z when bit 0, 1, 2 of `i` is set respectively, so corner 0 is
    /// `(-,-,-)` and corner 7 is `(+,+,+)`.
    pub fn corners(&self) -> [Vec3; 8] {
        box_corners(self)
    }
}

pub fn box_corners(b: &OrientedBox) -> [Vec3; 8] {
    let h = b.dims * 0.5;
    std::array::from_fn(|i| {
        let sx = if i & 1 != 0 { 1.0 } else { -1.0 };
        let sy = if i & 2 != 0 { 1.0 } else { -1.0 };
        let sz = if i & 4 != 0 { 1.0 } else { -1.0 };
        b.center + b.local_to_world_dir(Vec3::new(sx * h.x, sy * h.y, sz * h.z))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    /// Distance from the world origin, meters.
    pub radius: f64,
    pub azimuth: f64,
    /// Radians above the floor, in `[0, π/2]`.
    pub elevation: f64,
    /// Horizontal field of view in degrees.
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default = "default_size")]
    pub width: u32,
    #[serde(default = "default_size")]
    pub height: u32,
}

fn default_fov() -> f64 {
    DEFAULT_FOV_DEG
}

fn default_size() -> u32 {
    DEFAULT_IMAGE_SIZE
}

impl CameraSpec {
    pub fn new(radius: f64, azimuth: f64, elevation: f64) -> Self {
        Self {
            radius,
            azimuth,
            elevation,
            fov_deg: DEFAULT_FOV_DEG,
            width: DEFAULT_IMAGE_SIZE,
            height: DEFAULT_IMAGE_SIZE,
        }
    }

    pub fn with_image(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn with_fov(mut self, fov_deg: f64) -> Self {
        self.fov_deg = fov_deg;
        self
    }

    pub fn position(&self) -> Vec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vec3::new(ce * ca, ce * sa, se) * self.radius
    }
}

/// World-to-camera rigid transform plus pinhole intrinsics.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub forward: Vec3,
    pub focal_px: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    Pixel { x: f64, y: f64, depth: f64 },
    /// The point lies on or behind the near plane.
    Behind,
}

impl CameraPose {
    /// Camera-frame coordinates: x right, y up, z along the view direction.
    pub fn to_camera(&self, p: Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    pub fn dir_to_camera(&self, d: Vec3) -> Vec3 {
        Vec3::new(d.dot(self.right), d.dot(self.up), d.dot(self.forward))
    }

    /// Projects a camera-frame point. Image y grows downwards.
    pub fn project_camera(&self, c: Vec3) -> Projection {
        if c.z <= NEAR_PLANE {
            return Projection::Behind;
        }
        Projection::Pixel {
            x: self.cx + self.focal_px * c.x / c.z,
            y: self.cy - self.focal_px * c.y / c.z,
            depth: c.z,
        }
    }

    pub fn project(&self, p: Vec3) -> Projection {
        self.project_camera(self.to_camera(p))
    }
}

pub fn camera_pose(cam: &CameraSpec) -> Result<CameraPose> {
    let position = cam.position();
    let forward = (-position).normalized();
    let side = forward.cross(Vec3::Z);
    if cam.elevation == FRAC_PI_2 || side.norm() < 1e-12 {
        return Err(Error::DegeneratePose {
            elevation: cam.elevation,
        });
    }
    let right = side.normalized();
    let up = right.cross(forward);
    let half_fov = cam.fov_deg.to_radians() * 0.5;
    Ok(CameraPose {
        position,
        right,
        up,
        forward,
        focal_px: (cam.width as f64 * 0.5) / half_fov.tan(),
        cx: cam.width as f64 * 0.5,
        cy: cam.height as f64 * 0.5,
        width: cam.width,
        height: cam.height,
    })
}

pub fn project(point: Vec3, pose: &CameraPose) -> Projection {
    pose.project(point)
}

/// Local face normals of a box. The declaration order is the tie-break
/// order used by the compositor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaceKey {
    #[serde(rename = "+X")]
    PosX,
    #[serde(rename = "-X")]
    NegX,
    #[serde(rename = "+Y")]
    PosY,
    #[serde(rename = "-Y")]
    NegY,
    #[serde(rename = "+Z")]
    PosZ,
    #[serde(rename = "-Z")]
    NegZ,
}

impl FaceKey {
    pub const ALL: [FaceKey; 6] = [
        FaceKey::PosX,
        FaceKey::NegX,
        FaceKey::PosY,
        FaceKey::NegY,
        FaceKey::PosZ,
        FaceKey::NegZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn local_normal(self) -> Vec3 {
        match self {
            FaceKey::PosX => Vec3::new(1.0, 0.0, 0.0),
            FaceKey::NegX => Vec3::new(-1.0, 0.0, 0.0),
            FaceKey::PosY => Vec3::new(0.0, 1.0, 0.0),
            FaceKey::NegY => Vec3::new(0.0, -1.0, 0.0),
            FaceKey::PosZ => Vec3::new(0.0, 0.0, 1.0),
            FaceKey::NegZ => Vec3::new(0.0, 0.0, -1.0),
        }
    }

    /// Corner indices (see [`box_corners`]) of this face, in cyclic order.
    pub fn corner_indices(self) -> [usize; 4] {
        match self {
            FaceKey::PosX => [1, 3, 7, 5],
            FaceKey::NegX => [0, 4, 6, 2],
            FaceKey::PosY => [2, 6, 7, 3],
            FaceKey::NegY => [0, 1, 5, 4],
            FaceKey::PosZ => [4, 5, 7, 6],
            FaceKey::NegZ => [0, 2, 3, 1],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaceKey::PosX => "+X",
            FaceKey::NegX => "-X",
            FaceKey::PosY => "+Y",
            FaceKey::NegY => "-Y",
            FaceKey::PosZ => "+Z",
            FaceKey::NegZ => "-Z",
        }
    }
}

pub type Rgb = [f64; 3];

/// One color per local face normal; fixed for a whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceColorMap {
    #[serde(rename = "+X")]
    pub pos_x: Rgb,
    #[serde(rename = "-X")]
    pub neg_x: Rgb,
    #[serde(rename = "+Y")]
    pub pos_y: Rgb,
    #[serde(rename = "-Y")]
    pub neg_y: Rgb,
    #[serde(rename = "+Z")]
    pub pos_z: Rgb,
    #[serde(rename = "-Z")]
    pub neg_z: Rgb,
}

impl Default for FaceColorMap {
    /// Front (+Y) red, back cyan, sides green/magenta, top blue, bottom yellow.
    fn default() -> Self {
        Self {
            pos_x: [0.0, 1.0, 0.0],
            neg_x: [1.0, 0.0, 1.0],
            pos_y: [1.0, 0.0, 0.0],
            neg_y: [0.0, 1.0, 1.0],
            pos_z: [0.0, 0.0, 1.0],
            neg_z: [1.0, 1.0, 0.0],
        }
    }
}

impl FaceColorMap {
    pub fn get(&self, face: FaceKey) -> Rgb {
        match face {
            FaceKey::PosX => self.pos_x,
            FaceKey::NegX => self.neg_x,
            FaceKey::PosY => self.pos_y,
            FaceKey::NegY => self.neg_y,
            FaceKey::PosZ => self.pos_z,
            FaceKey::NegZ => self.neg_z,
        }
    }

    /// Checks value range and pairwise distinctness.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let colors: Vec<Rgb> = FaceKey::ALL.iter().map(|&f| self.get(f)).collect();
        for (f, c) in FaceKey::ALL.iter().zip(&colors) {
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(format!("color of face {} outside [0,1]", f.as_str()));
            }
        }
        for i in 0..6 {
            for j in i + 1..6 {
                if colors[i] == colors[j] {
                    return Err(format!(
                        "faces {} and {} share a color",
                        FaceKey::ALL[i].as_str(),
                        FaceKey::ALL[j].as_str()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The full user-specified scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneLayout {
    pub prompt: String,
    pub camera: CameraSpec,
    pub boxes: Vec<OrientedBox>,
}

impl SceneLayout {
    /// Number of prompt tokens; the prompt is tokenized on whitespace.
    pub fn prompt_token_count(&self) -> usize {
        self.prompt.split_whitespace().count()
    }

    pub fn noun_spans(&self) -> Vec<NounSpan> {
        self.boxes.iter().map(|b| b.noun_span).collect()
    }

    pub fn box_by_id(&self, id: u32) -> Option<&OrientedBox> {
        self.boxes.iter().find(|b| b.id == id)
    }

    /// Parses layout JSON. Unknown fields are rejected and yaws are
    /// normalized into `[0, 2π)`; no other validation happens here.
    pub fn from_json(text: &str) -> Result<Self> {
        let layout: SceneLayout = serde_json::from_str(text)?;
        Ok(layout.normalized())
    }

    /// Maps every yaw into `[0, 2π)`. Applied on every load path.
    pub fn normalized(mut self) -> Self {
        for b in &mut self.boxes {
            b.yaw = normalize_yaw(b.yaw);
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serialization is infallible")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate_layout(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidLayout(v))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NoBoxes,
    CameraRadius,
    CameraElevation,
    CameraFov,
    ImageSize,
    DegeneratePose,
    DuplicateId,
    NonFinite,
    NonPositiveDims,
    BelowGround,
    EmptySpan,
    SpanOutOfRange,
    SpanOverlap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub box_id: Option<u32>,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.box_id {
            Some(id) => write!(f, "box {id}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks every layout invariant. Scene-level violations come first, then
/// per-box violations ordered by box id (stable within a box).
pub fn validate_layout(layout: &SceneLayout) -> Vec<Violation> {
    let mut out = Vec::new();
    let scene = |kind, message: String| Violation {
        box_id: None,
        kind,
        message,
    };

    if layout.boxes.is_empty() {
        out.push(scene(ViolationKind::NoBoxes, "no boxes".into()));
    }

    let cam = &layout.camera;
    if !(cam.radius.is_finite() && cam.radius > 0.0) {
        out.push(scene(
            ViolationKind::CameraRadius,
            format!("camera radius must be positive, got {}", cam.radius),
        ));
    }
    if !cam.azimuth.is_finite() {
        out.push(scene(ViolationKind::NonFinite, "camera azimuth is not finite".into()));
    }
    if !(0.0..=FRAC_PI_2).contains(&cam.elevation) {
        out.push(scene(
            ViolationKind::CameraElevation,
            format!("camera elevation {} outside [0, pi/2]", cam.elevation),
        ));
    } else if cam.radius > 0.0 && camera_pose(cam).is_err() {
        out.push(scene(
            ViolationKind::DegeneratePose,
            "DegeneratePose: camera looks straight down, up vector undefined".into(),
        ));
    }
    if !(cam.fov_deg > 10.0 && cam.fov_deg < 120.0) {
        out.push(scene(
            ViolationKind::CameraFov,
            format!("fov_deg {} outside (10, 120)", cam.fov_deg),
        ));
    }
    if cam.width == 0 || cam.height == 0 {
        out.push(scene(
            ViolationKind::ImageSize,
            format!("image size {}x{} must be positive", cam.width, cam.height),
        ));
    }

    let n_tokens = layout.prompt_token_count();
    let mut per_box: BTreeMap<u32, Vec<Violation>> = BTreeMap::new();
    let mut seen = HashSet::new();
    for (i, b) in layout.boxes.iter().enumerate() {
        let mut push = |kind, message: String| {
            per_box.entry(b.id).or_default().push(Violation {
                box_id: Some(b.id),
                kind,
                message,
            })
        };
        if !seen.insert(b.id) {
            push(ViolationKind::DuplicateId, format!("duplicate id {}", b.id));
        }
        if !(b.center.is_finite() && b.dims.is_finite() && b.yaw.is_finite()) {
            push(ViolationKind::NonFinite, "non-finite center, dims or yaw".into());
        }
        if !(b.dims.x > 0.0 && b.dims.y > 0.0 && b.dims.z > 0.0) {
            push(
                ViolationKind::NonPositiveDims,
                format!("dims must be positive, got {:?}", b.dims.to_array()),
            );
        }
        if b.center.z < 0.0 && !b.levitating {
            push(
                ViolationKind::BelowGround,
                format!("center z {} below the floor", b.center.z),
            );
        }
        if b.noun_span.is_empty() {
            push(ViolationKind::EmptySpan, "noun span is empty".into());
        } else if b.noun_span.end > n_tokens {
            push(
                ViolationKind::SpanOutOfRange,
                format!(
                    "noun span [{}, {}) exceeds {} prompt tokens",
                    b.noun_span.start, b.noun_span.end, n_tokens
                ),
            );
        }
        for other in &layout.boxes[..i] {
            if !b.noun_span.is_empty() && b.noun_span.overlaps(&other.noun_span) {
                push(
                    ViolationKind::SpanOverlap,
                    format!("noun span overlaps box {}", other.id),
                );
            }
        }
    }
    out.extend(per_box.into_values().flatten());
    out
}
