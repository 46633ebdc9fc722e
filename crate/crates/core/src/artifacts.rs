//! Encoded render outputs. The CLI writes these bytes to disk and the HTTP
//! service base64-embeds the same bytes, so both surfaces agree exactly.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::write_file;
use crate::render::{Overlap, RenderMeta, RenderOutput};

pub const OSCR_FILE: &str = "oscr.png";
pub const DEPTH_FILE: &str = "depth.pfm";
pub const META_FILE: &str = "meta.json";

#[derive(Clone, Debug, PartialEq)]
pub struct MaskFiles {
    pub box_id: u32,
    pub amodal_png: Vec<u8>,
    pub visible_png: Vec<u8>,
    pub amodal_area: usize,
    pub visible_area: usize,
}

/// Sidecar written as `meta.json`.
#[derive(Clone, Debug, Serialize)]
pub struct MetaFile<'a> {
    pub v: u32,
    #[serde(flatten)]
    pub meta: &'a RenderMeta,
    /// Pixel format of `depth.pfm`: camera depth in meters, 0 where empty.
    pub depth_encoding: &'static str,
    pub overlaps: Vec<Overlap>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderArtifacts {
    pub oscr_png: Vec<u8>,
    pub masks: Vec<MaskFiles>,
    pub depth_pfm: Vec<u8>,
    pub meta_json: String,
    pub overlaps: Vec<Overlap>,
}

pub fn amodal_file(id: u32) -> String {
    format!("amodal_{id}.png")
}

pub fn visible_file(id: u32) -> String {
    format!("visible_{id}.png")
}

impl RenderArtifacts {
    pub fn encode(out: &RenderOutput) -> Result<Self> {
        let masks = out
            .box_ids()
            .iter()
            .enumerate()
            .map(|(i, &box_id)| {
                Ok(MaskFiles {
                    box_id,
                    amodal_png: out.amodal_masks[i].to_png()?,
                    visible_png: out.visible_masks[i].to_png()?,
                    amodal_area: out.amodal_masks[i].area(),
                    visible_area: out.visible_masks[i].area(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let overlaps = out.amodal_overlaps();
        let meta_json = serde_json::to_string_pretty(&MetaFile {
            v: 1,
            meta: &out.meta,
            depth_encoding: "pfm_f32_le_meters_zero_empty",
            overlaps: overlaps.clone(),
        })?;
        Ok(Self {
            oscr_png: out.oscr.to_png()?,
            masks,
            depth_pfm: out.depth.to_pfm(),
            meta_json,
            overlaps,
        })
    }

    /// Writes every artifact into `dir` (created if needed) and returns the
    /// written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![(dir.join(OSCR_FILE), self.oscr_png.as_slice())];
        for m in &self.masks {
            files.push((dir.join(amodal_file(m.box_id)), &m.amodal_png));
            files.push((dir.join(visible_file(m.box_id)), &m.visible_png));
        }
        files.push((dir.join(DEPTH_FILE), &self.depth_pfm));
        files.push((dir.join(META_FILE), self.meta_json.as_bytes()));
        for (path, bytes) in &files {
            write_file(path, bytes)?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}
