//! Procedural generation of occlusion-heavy training scenes.
//!
//! Candidates are sampled uniformly (objects on the floor inside a disc of
//! radius `placement_radius`, camera on a hemisphere looking at the origin),
//! rendered, and kept only when they pass the collision, size and
//! visibility filters in [`accept`].

mod accept;
mod collision;
pub mod dataset;
pub mod stats;

use std::f64::consts::TAU;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scene::{CameraSpec, NounSpan, OrientedBox, SceneLayout};

pub use accept::{accept_scene, classify, evaluate_candidate, AcceptReport, BoxCheck, RejectReason, Verdict};
pub use collision::{check_collision, colliding_pairs};
pub use dataset::{
    filter_augmentations, generate_dataset, AugmentationFilter, AugmentationRejection, GenStats,
    Manifest, ManifestBox, ManifestScene, RunStatus,
};
pub use stats::{dataset_stats, DatasetStats, Histogram, HISTOGRAM_BINS};

const BUILTIN_TEMPLATES: &str = include_str!("../../assets/templates.json");

/// A nominal object size; sampled dims are jittered by `±jitter` relative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetTemplate {
    pub label: String,
    /// Width (x), depth (y), height (z) in meters.
    pub dims: [f64; 3],
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.15
}

/// The built-in asset catalog.
pub fn builtin_templates() -> Vec<AssetTemplate> {
    serde_json::from_str(BUILTIN_TEMPLATES).expect("built-in templates parse")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_scenes: usize,
    /// Inclusive range of objects per scene, within `[1, 4]`.
    pub objects_per_scene: [usize; 2],
    /// Object centers are drawn uniformly from a floor disc of this radius.
    pub placement_radius: f64,
    pub camera_radius: [f64; 2],
    /// Radians.
    pub camera_elevation: [f64; 2],
    pub fov_deg: f64,
    pub image_size: u32,
    pub asset_templates: Vec<AssetTemplate>,
    pub visibility_low: f64,
    pub visibility_high: f64,
    pub bbox_side_min_frac: f64,
    pub bbox_side_max_frac: f64,
    pub score_threshold: f64,
    /// Consecutive rejected candidates tolerated before giving up.
    pub max_rejections_per_scene: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scenes: 100,
            objects_per_scene: [2, 4],
            placement_radius: 2.5,
            camera_radius: [7.0, 10.0],
            camera_elevation: [0.05, 0.75],
            fov_deg: crate::scene::DEFAULT_FOV_DEG,
            image_size: crate::scene::DEFAULT_IMAGE_SIZE,
            asset_templates: builtin_templates(),
            visibility_low: 0.3,
            visibility_high: 0.7,
            bbox_side_min_frac: 0.125,
            bbox_side_max_frac: 0.750,
            score_threshold: 0.25,
            max_rejections_per_scene: 500,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let [lo, hi] = self.objects_per_scene;
        if !(1 <= lo && lo <= hi && hi <= 4) {
            return bad(format!("objects_per_scene {lo}..={hi} must lie within 1..=4"));
        }
        if !(0.0 < self.visibility_low
            && self.visibility_low < self.visibility_high
            && self.visibility_high < 1.0)
        {
            return bad("need 0 < visibility_low < visibility_high < 1".into());
        }
        if !(0.0 < self.bbox_side_min_frac
            && self.bbox_side_min_frac < self.bbox_side_max_frac
            && self.bbox_side_max_frac < 1.0)
        {
            return bad("need 0 < bbox_side_min_frac < bbox_side_max_frac < 1".into());
        }
        if self.placement_radius.is_nan() || self.placement_radius <= 0.0 {
            return bad("placement_radius must be positive".into());
        }
        let [r0, r1] = self.camera_radius;
        if !(0.0 < r0 && r0 <= r1) {
            return bad("camera_radius must be a positive, ordered range".into());
        }
        let [e0, e1] = self.camera_elevation;
        if !(0.0 <= e0 && e0 <= e1 && e1 < std::f64::consts::FRAC_PI_2) {
            return bad("camera_elevation must be an ordered range within [0, pi/2)".into());
        }
        if !(self.fov_deg > 10.0 && self.fov_deg < 120.0) {
            return bad("fov_deg must lie in (10, 120)".into());
        }
        if self.image_size == 0 {
            return bad("image_size must be positive".into());
        }
        if self.asset_templates.len() < hi {
            return bad(format!(
                "{} asset templates cannot fill {hi} distinct objects",
                self.asset_templates.len()
            ));
        }
        for t in &self.asset_templates {
            if t.dims.iter().any(|&d| d.is_nan() || d <= 0.0) || !(0.0..1.0).contains(&t.jitter) {
                return bad(format!("template `{}` has invalid dims or jitter", t.label));
            }
        }
        Ok(())
    }
}

/// Independent deterministic stream for candidate `index` of run `seed`.
pub fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws one unfiltered candidate layout.
pub fn sample_scene(cfg: &GenConfig, rng: &mut impl Rng) -> SceneLayout {
    let [lo, hi] = cfg.objects_per_scene;
    let n = rng.random_range(lo..=hi);
    let picks = sample(rng, cfg.asset_templates.len(), n);

    let mut words: Vec<String> = ["a", "photo", "of"].map(String::from).to_vec();
    let mut boxes = Vec::with_capacity(n);
    for (k, ti) in picks.into_iter().enumerate() {
        let t = &cfg.asset_templates[ti];
        if k > 0 {
            words.push("and".into());
        }
        words.push("a".into());
        let start = words.len();
        words.extend(t.label.split_whitespace().map(String::from));
        let span = NounSpan::new(start, words.len());

        let dims = t.dims.map(|d| d * (1.0 + t.jitter * (2.0 * rng.random::<f64>() - 1.0)));
        let r = cfg.placement_radius * rng.random::<f64>().sqrt();
        let theta = TAU * rng.random::<f64>();
        let yaw = TAU * rng.random::<f64>();
        boxes.push(OrientedBox::new(
            k as u32,
            t.label.clone(),
            Vec3::new(r * theta.cos(), r * theta.sin(), dims[2] / 2.0),
            Vec3::from(dims),
            yaw,
            span,
        ));
    }

    let azimuth = TAU * rng.random::<f64>();
    let elevation = uniform(rng, cfg.camera_elevation);
    let radius = uniform(rng, cfg.camera_radius);
    SceneLayout {
        prompt: words.join(" "),
        camera: CameraSpec::new(radius, azimuth, elevation)
            .with_fov(cfg.fov_deg)
            .with_image(cfg.image_size, cfg.image_size),
        boxes,
    }
}
