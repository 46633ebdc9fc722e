//! Software rasterizer for translucent, face-colored boxes.
//!
//! Every camera-facing box face is clipped against the near plane, projected
//! and scan-converted into per-pixel fragments (pixel centers, top-left fill
//! rule, no antialiasing). Fragments are then sorted per pixel by camera
//! depth and alpha-composited back to front over the background. The sort key
//! is `(depth, box id, face)` so the result does not depend on the order of
//! boxes in the layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::image::{DepthImage, Mask, RgbImage};
use crate::scene::{
    box_corners, camera_pose, CameraPose, CameraSpec, FaceColorMap, FaceKey, Rgb, SceneLayout,
    NEAR_PLANE,
};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const WHITE: Rgb = [1.0, 1.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    pub alpha: f64,
    pub background: Rgb,
    /// Render only faces turned towards the camera.
    pub cull_backfaces: bool,
    pub colors: FaceColorMap,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            background: WHITE,
            cull_backfaces: true,
            colors: FaceColorMap::default(),
        }
    }
}

impl RenderOptions {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Settings a render was produced with; written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderMeta {
    pub colors: FaceColorMap,
    pub alpha: f64,
    pub background: Rgb,
    pub cull_backfaces: bool,
    pub camera: CameraSpec,
    pub focal_px: f64,
    pub near_plane: f64,
    /// Ids of the rendered boxes, ascending; mask vectors follow this order.
    pub box_ids: Vec<u32>,
    /// Set when no box projects into the frame.
    pub empty: bool,
}

/// A surface sample of one box face at one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub pixel: u32,
    pub depth: f64,
    /// Index into the id-sorted box list.
    pub box_index: u16,
    pub face: FaceKey,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub oscr: RgbImage,
    /// Full projected silhouette of each box, ignoring other boxes.
    pub amodal_masks: Vec<Mask>,
    /// Pixels where the box owns the nearest fragment.
    pub visible_masks: Vec<Mask>,
    pub depth: DepthImage,
    pub meta: RenderMeta,
}

impl RenderOutput {
    pub fn box_ids(&self) -> &[u32] {
        &self.meta.box_ids
    }

    pub fn index_of(&self, box_id: u32) -> Option<usize> {
        self.meta.box_ids.binary_search(&box_id).ok()
    }

    pub fn amodal(&self, box_id: u32) -> Option<&Mask> {
        self.index_of(box_id).map(|i| &self.amodal_masks[i])
    }

    pub fn visible(&self, box_id: u32) -> Option<&Mask> {
        self.index_of(box_id).map(|i| &self.visible_masks[i])
    }

    pub fn is_empty(&self) -> bool {
        self.meta.empty
    }

    /// Pairwise amodal intersections with a nonzero pixel count.
    pub fn amodal_overlaps(&self) -> Vec<Overlap> {
        let ids = &self.meta.box_ids;
        let mut out = Vec::new();
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                let pixels = self.amodal_masks[i].intersection_area(&self.amodal_masks[j]);
                if pixels > 0 {
                    out.push(Overlap {
                        a: ids[i],
                        b: ids[j],
                        pixels,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub a: u32,
    pub b: u32,
    pub pixels: usize,
}

/// Fragments of a whole scene, bucketed by pixel and sorted front to back
/// within each pixel.
struct FragmentBuffer {
    width: u32,
    height: u32,
    /// `offsets[p]..offsets[p + 1]` indexes `frags` for pixel `p`.
    offsets: Vec<usize>,
    frags: Vec<Fragment>,
}

impl FragmentBuffer {
    fn pixel(&self, p: usize) -> &[Fragment] {
        &self.frags[self.offsets[p]..self.offsets[p + 1]]
    }

    fn is_empty(&self) -> bool {
        self.frags.is_empty()
    }
}

fn front_to_back(a: &Fragment, b: &Fragment) -> std::cmp::Ordering {
    a.depth
        .total_cmp(&b.depth)
        .then(a.box_index.cmp(&b.box_index))
        .then(a.face.cmp(&b.face))
}

/// Boxes sorted by id, so box indices are independent of layout order.
fn sorted_boxes(layout: &SceneLayout) -> Vec<&crate::scene::OrientedBox> {
    let mut boxes: Vec<_> = layout.boxes.iter().collect();
    boxes.sort_by_key(|b| b.id);
    boxes
}

fn rasterize_scene(layout: &SceneLayout, pose: &CameraPose, cull: bool) -> FragmentBuffer {
    let (w, h) = (pose.width, pose.height);
    let mut frags = Vec::new();
    for (index, b) in sorted_boxes(layout).into_iter().enumerate() {
        let corners = box_corners(b).map(|c| pose.to_camera(c));
        for face in FaceKey::ALL {
            let normal = pose.dir_to_camera(b.local_to_world_dir(face.local_normal()));
            let idx = face.corner_indices();
            // Plane: normal . X = offset, camera at the origin.
            let offset = normal.dot(corners[idx[0]]);
            if cull && offset >= 0.0 {
                continue;
            }
            let quad = idx.map(|i| corners[i]);
            rasterize_face(pose, &quad, normal, offset, |pixel, depth| {
                frags.push(Fragment {
                    pixel,
                    depth,
                    box_index: index as u16,
                    face,
                })
            });
        }
    }

    // Counting sort by pixel, then sort each bucket front to back.
    let n = w as usize * h as usize;
    let mut offsets = vec![0usize; n + 1];
    for f in &frags {
        offsets[f.pixel as usize + 1] += 1;
    }
    for p in 0..n {
        offsets[p + 1] += offsets[p];
    }
    let mut cursor = offsets.clone();
    let mut sorted = vec![
        Fragment {
            pixel: 0,
            depth: 0.0,
            box_index: 0,
            face: FaceKey::PosX,
        };
        frags.len()
    ];
    for f in frags {
        let c = &mut cursor[f.pixel as usize];
        sorted[*c] = f;
        *c += 1;
    }
    for p in 0..n {
        sorted[offsets[p]..offsets[p + 1]].sort_unstable_by(front_to_back);
    }
    FragmentBuffer {
        width: w,
        height: h,
        offsets,
        frags: sorted,
    }
}

/// Clips a planar convex polygon (camera frame) to `z >= NEAR_PLANE`.
fn clip_near(poly: &[Vec3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out.push(p);
        }
    }
    out
}

/// Edge function of the directed edge `a -> b` at `p`, evaluated along a
/// canonical direction so that `edge(a, b, p) == -edge(b, a, p)` exactly.
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    if (a.0, a.1) <= (b.0, b.1) {
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
    } else {
        -((a.0 - b.0) * (p.1 - b.1) - (a.1 - b.1) * (p.0 - b.0))
    }
}

/// Top-left rule for a polygon wound so that its interior has positive
/// edge values (image y pointing down).
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Start, end, and whether the edge owns its boundary pixels.
type Edge = ((f64, f64), (f64, f64), bool);

fn rasterize_face(
    pose: &CameraPose,
    quad: &[Vec3; 4],
    normal: Vec3,
    offset: f64,
    mut emit: impl FnMut(u32, f64),
) {
    let clipped = clip_near(quad);
    if clipped.len() < 3 {
        return;
    }
    let f = pose.focal_px;
    let mut pts: Vec<(f64, f64)> = clipped
        .iter()
        .map(|c| (pose.cx + f * c.x / c.z, pose.cy - f * c.y / c.z))
        .collect();
    let mut area2 = 0.0;
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
        area2 += a.0 * b.1 - b.0 * a.1;
    }
    if area2.abs() < 1e-12 {
        return;
    }
    if area2 < 0.0 {
        pts.reverse();
    }
    let edges: Vec<Edge> = (0..pts.len())
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            (a, b, is_top_left(a, b))
        })
        .collect();

    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    // Pixel (i, j) is sampled at (i + 0.5, j + 0.5).
    let px0 = (x0 - 0.5).ceil().max(0.0) as i64;
    let py0 = (y0 - 0.5).ceil().max(0.0) as i64;
    let px1 = ((x1 - 0.5).floor() as i64).min(pose.width as i64 - 1);
    let py1 = ((y1 - 0.5).floor() as i64).min(pose.height as i64 - 1);

    for py in py0..=py1 {
        let sy = py as f64 + 0.5;
        for px in px0..=px1 {
            let sx = px as f64 + 0.5;
            let inside = edges.iter().all(|&(a, b, tl)| {
                let e = edge(a, b, (sx, sy));
                e > 0.0 || (e == 0.0 && tl)
            });
            if !inside {
                continue;
            }
            let ray = Vec3::new((sx - pose.cx) / f, -(sy - pose.cy) / f, 1.0);
            let denom = normal.dot(ray);
            if denom.abs() < 1e-15 {
                continue;
            }
            let depth = offset / denom;
            if depth > NEAR_PLANE {
                emit(py as u32 * pose.width + px as u32, depth);
            }
        }
    }
}

fn prepare(layout: &SceneLayout) -> Result<CameraPose> {
    layout.validate()?;
    camera_pose(&layout.camera)
}

/// Renders the OSCR condition image plus per-box amodal/visible masks and
/// the nearest-surface depth map.
pub fn render_oscr(layout: &SceneLayout, opts: &RenderOptions) -> Result<RenderOutput> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidAlpha(opts.alpha));
    }
    let pose = prepare(layout)?;
    let buf = rasterize_scene(layout, &pose, opts.cull_backfaces);
    let boxes = sorted_boxes(layout);
    let (w, h) = (buf.width, buf.height);
    let n = w as usize * h as usize;

    let alpha = opts.alpha;
    let face_colors: [Rgb; 6] = FaceKey::ALL.map(|f| opts.colors.get(f));
    let mut oscr = RgbImage::filled(w, h, opts.background);
    let mut amodal = vec![Mask::new(w, h); boxes.len()];
    let mut visible = vec![Mask::new(w, h); boxes.len()];
    let mut depth = vec![f64::INFINITY; n];

    for (p, d) in depth.iter_mut().enumerate() {
        let frags = buf.pixel(p);
        let Some(nearest) = frags.first() else {
            continue;
        };
        visible[nearest.box_index as usize].bits[p] = true;
        *d = nearest.depth;
        let mut c = opts.background;
        for frag in frags.iter().rev() {
            amodal[frag.box_index as usize].bits[p] = true;
            let fc = face_colors[frag.face.index()];
            for k in 0..3 {
                c[k] = alpha * fc[k] + (1.0 - alpha) * c[k];
            }
        }
        oscr.data[p] = c;
    }

    Ok(RenderOutput {
        oscr,
        amodal_masks: amodal,
        visible_masks: visible,
        depth: DepthImage {
            width: w,
            height: h,
            data: depth,
        },
        meta: RenderMeta {
            colors: opts.colors.clone(),
            alpha,
            background: opts.background,
            cull_backfaces: opts.cull_backfaces,
            camera: layout.camera.clone(),
            focal_px: pose.focal_px,
            near_plane: NEAR_PLANE,
            box_ids: boxes.iter().map(|b| b.id).collect(),
            empty: buf.is_empty(),
        },
    })
}

/// Opaque-box depth map, min-max normalized over covered pixels. Uncovered
/// pixels are 1. Boxes hidden behind others leave no trace.
#[derive(Clone, Debug, PartialEq)]
pub struct LayoutDepth {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
    pub empty: bool,
}

impl LayoutDepth {
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[(y * self.width + x) as usize]
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let data: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        crate::image::encode_png(self.width, self.height, png::ColorType::Grayscale, &data)
    }
}

pub fn render_layout_depth(layout: &SceneLayout) -> Result<LayoutDepth> {
    let pose = prepare(layout)?;
    let buf = rasterize_scene(layout, &pose, true);
    let n = buf.width as usize * buf.height as usize;
    let raw: Vec<f64> = (0..n)
        .map(|p| buf.pixel(p).first().map_or(f64::INFINITY, |f| f.depth))
        .collect();
    let finite = raw.iter().copied().filter(|d| d.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    });
    let span = hi - lo;
    let data = raw
        .iter()
        .map(|&d| {
            if !d.is_finite() {
                1.0
            } else if span > 0.0 {
                (d - lo) / span
            } else {
                0.0
            }
        })
        .collect();
    Ok(LayoutDepth {
        width: buf.width,
        height: buf.height,
        data,
        empty: buf.is_empty(),
    })
}

/// One 2D layer of the layer-stack representation.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub box_id: u32,
    /// Euclidean distance from the camera to the box center.
    pub distance: f64,
    pub mask: Mask,
}

/// Per-box amodal masks ordered nearest first by center distance; equal
/// distances fall back to ascending box id.
pub fn render_layer_map(layout: &SceneLayout) -> Result<Vec<Layer>> {
    let out = render_oscr(layout, &RenderOptions::default())?;
    let cam = layout.camera.position();
    let mut layers: Vec<Layer> = out
        .meta
        .box_ids
        .iter()
        .zip(out.amodal_masks)
        .map(|(&id, mask)| {
            let b = layout.box_by_id(id).expect("rendered box exists");
            Layer {
                box_id: id,
                distance: (b.center - cam).norm(),
                mask,
            }
        })
        .collect();
    layers.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.box_id.cmp(&b.box_id)));
    Ok(layers)
}

/// Visible over amodal pixel area of one box.
pub fn visibility_ratio(output: &RenderOutput, box_id: u32) -> Result<f64> {
    let i = output.index_of(box_id).ok_or(Error::UnknownBox(box_id))?;
    let total = output.amodal_masks[i].area();
    if total == 0 {
        return Err(Error::OffscreenBox(box_id));
    }
    Ok(output.visible_masks[i].area() as f64 / total as f64)
}
