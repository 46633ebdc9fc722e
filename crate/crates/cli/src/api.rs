//! Operations exposed on both surfaces. The CLI writes the encoded bytes to
//! files, the service embeds the very same bytes as base64.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use oscr_core::artifacts::RenderArtifacts;
use oscr_core::procgen::{
    builtin_templates, evaluate_candidate, sample_scene, scene_rng, AcceptReport, AssetTemplate,
    GenConfig,
};
use oscr_core::render::{render_layer_map, render_layout_depth, render_oscr, Overlap, RenderOptions};
use oscr_core::scene::SceneLayout;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::CliError;

pub const API_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// Translucent face-colored boxes, masks and depth.
    #[default]
    Oscr,
    /// Normalized depth of opaque boxes.
    Depth,
    /// One silhouette per box, nearest first.
    Layers,
}

/// Parses JSON input, naming the byte offset on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, file: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::json(file, text, &e))
}

pub fn parse_layout(text: &str, file: &str) -> Result<SceneLayout, CliError> {
    parse_json::<SceneLayout>(text, file).map(SceneLayout::normalized)
}

pub fn check_version(v: u32) -> Result<(), CliError> {
    if v == API_VERSION {
        Ok(())
    } else {
        Err(CliError::input("unsupported_version", format!("schema version {v} is not supported (expected {API_VERSION})")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerPng {
    pub rank: usize,
    pub box_id: u32,
    pub distance: f64,
    pub png: Vec<u8>,
}

impl LayerPng {
    pub fn file_name(&self) -> String {
        format!("layer_{:02}_box{}.png", self.rank, self.box_id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rendered {
    Oscr(RenderArtifacts),
    Depth(Vec<u8>),
    Layers(Vec<LayerPng>),
}

pub const DEPTH_PNG: &str = "depth.png";
pub const LAYERS_JSON: &str = "layers.json";

pub fn render(layout: &SceneLayout, opts: &RenderOptions, mode: RenderMode) -> Result<Rendered, CliError> {
    Ok(match mode {
        RenderMode::Oscr => Rendered::Oscr(RenderArtifacts::encode(&render_oscr(layout, opts)?)?),
        RenderMode::Depth => Rendered::Depth(render_layout_depth(layout)?.to_png()?),
        RenderMode::Layers => Rendered::Layers(
            render_layer_map(layout)?
                .into_iter()
                .enumerate()
                .map(|(rank, l)| {
                    Ok(LayerPng {
                        rank,
                        box_id: l.box_id,
                        distance: l.distance,
                        png: l.mask.to_png()?,
                    })
                })
                .collect::<oscr_core::Result<_>>()?,
        ),
    })
}

pub fn layers_index(layers: &[LayerPng]) -> Value {
    Value::Array(
        layers
            .iter()
            .map(|l| json!({ "rank": l.rank, "box_id": l.box_id, "distance": l.distance, "file": l.file_name() }))
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    pub v: u32,
    pub layout: SceneLayout,
    #[serde(default)]
    pub options: RenderOptions,
    #[serde(default)]
    pub mode: RenderMode,
}

#[derive(Debug, Serialize)]
pub struct MaskEntry {
    pub box_id: u32,
    pub amodal: String,
    pub visible: String,
    pub amodal_area: usize,
    pub visible_area: usize,
    pub visibility: Option<f64>,
}

/// JSON body of a successful render.
pub fn render_response(r: &Rendered) -> Result<Value, CliError> {
    Ok(match r {
        Rendered::Oscr(a) => {
            let masks: Vec<MaskEntry> = a
                .masks
                .iter()
                .map(|m| MaskEntry {
                    box_id: m.box_id,
                    amodal: B64.encode(&m.amodal_png),
                    visible: B64.encode(&m.visible_png),
                    amodal_area: m.amodal_area,
                    visible_area: m.visible_area,
                    visibility: (m.amodal_area > 0).then(|| m.visible_area as f64 / m.amodal_area as f64),
                })
                .collect();
            let meta: Value = serde_json::from_str(&a.meta_json).map_err(|e| CliError::runtime("json", e.to_string()))?;
            let overlaps: &[Overlap] = &a.overlaps;
            json!({
                "v": API_VERSION,
                "mode": RenderMode::Oscr,
                "oscr": B64.encode(&a.oscr_png),
                "depth_pfm": B64.encode(&a.depth_pfm),
                "masks": masks,
                "overlaps": overlaps,
                "meta": meta,
            })
        }
        Rendered::Depth(png) => json!({ "v": API_VERSION, "mode": RenderMode::Depth, "depth": B64.encode(png) }),
        Rendered::Layers(layers) => json!({
            "v": API_VERSION,
            "mode": RenderMode::Layers,
            "layers": layers.iter().map(|l| json!({
                "rank": l.rank, "box_id": l.box_id, "distance": l.distance, "mask": B64.encode(&l.png),
            })).collect::<Vec<_>>(),
        }),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcgenRequest {
    pub v: u32,
    pub seed: u64,
    #[serde(default)]
    pub index: u64,
    #[serde(default)]
    pub config: Option<GenConfig>,
}

#[derive(Debug, Serialize)]
pub struct ProcgenResponse {
    pub v: u32,
    pub seed: u64,
    pub index: u64,
    pub candidate: SceneLayout,
    pub report: AcceptReport,
}

/// One sample-and-filter round, as the editor's "suggest" button uses it.
pub fn procgen_round(req: ProcgenRequest) -> Result<ProcgenResponse, CliError> {
    check_version(req.v)?;
    let cfg = GenConfig {
        seed: req.seed,
        ..req.config.unwrap_or_default()
    };
    cfg.validate()?;
    let candidate = sample_scene(&cfg, &mut scene_rng(req.seed, req.index));
    let (report, _) = evaluate_candidate(&cfg, &candidate)?;
    Ok(ProcgenResponse {
        v: API_VERSION,
        seed: req.seed,
        index: req.index,
        candidate,
        report,
    })
}

#[derive(Debug, Serialize)]
pub struct TemplatesResponse {
    pub v: u32,
    pub templates: Vec<AssetTemplate>,
}

pub fn templates() -> TemplatesResponse {
    TemplatesResponse {
        v: API_VERSION,
        templates: builtin_templates(),
    }
}
