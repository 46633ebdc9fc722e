//! Dataset statistics: fixed 20-bin histograms over a manifest.
//!
//! | histogram              | unit      | range     | counted per |
//! |------------------------|-----------|-----------|-------------|
//! | `min_visibility`       | ratio     | [0, 1]    | scene       |
//! | `yaw_deg`              | degrees   | [0, 360)  | box         |
//! | `bbox_side_frac`       | ratio     | [0, 1]    | box         |
//! | `camera_elevation_deg` | degrees   | [0, 90]   | scene       |
//!
//! Bins are half-open `[lo + k·w, lo + (k+1)·w)` except that a value equal to
//! the upper limit lands in the last bin.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::Manifest;
use crate::artifacts::write_json;
use crate::error::{Error, Result};
use crate::image::{encode_png, write_file};

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// `HISTOGRAM_BINS + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        let w = (hi - lo) / HISTOGRAM_BINS as f64;
        Self {
            name: name.to_string(),
            lo,
            hi,
            edges: (0..=HISTOGRAM_BINS).map(|k| lo + k as f64 * w).collect(),
            counts: vec![0; HISTOGRAM_BINS],
        }
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let t = (x - self.lo) / (self.hi - self.lo) * HISTOGRAM_BINS as f64;
        (t.floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
    }

    pub fn add(&mut self, x: f64) {
        let k = self.bin_of(x);
        self.counts[k] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Count in bins lying entirely below `x`.
    pub fn mass_below(&self, x: f64) -> u64 {
        self.edges.windows(2).zip(&self.counts).filter(|(e, _)| e[1] <= x).map(|(_, &c)| c).sum()
    }

    /// Count in bins lying entirely at or above `x`.
    pub fn mass_above(&self, x: f64) -> u64 {
        self.edges.windows(2).zip(&self.counts).filter(|(e, _)| e[0] >= x).map(|(_, &c)| c).sum()
    }

    /// Bar chart, one column per bin, scaled to the tallest bin.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        const BAR: u32 = 16;
        const GAP: u32 = 4;
        const H: u32 = 160;
        const PAD: u32 = 8;
        let w = PAD * 2 + HISTOGRAM_BINS as u32 * (BAR + GAP) - GAP;
        let h = H + PAD * 2;
        let mut px = vec![255u8; (w * h) as usize];
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        for (k, &c) in self.counts.iter().enumerate() {
            let bar_h = ((c as f64 / max as f64) * H as f64).round() as u32;
            let x0 = PAD + k as u32 * (BAR + GAP);
            for y in (PAD + H - bar_h)..(PAD + H) {
                for x in x0..x0 + BAR {
                    px[(y * w + x) as usize] = 70;
                }
            }
        }
        // Baseline.
        for x in PAD / 2..w - PAD / 2 {
            px[((PAD + H) * w + x) as usize] = 0;
        }
        encode_png(w, h, png::ColorType::Grayscale, &px)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_scenes: usize,
    pub n_boxes: usize,
    pub min_visibility: Histogram,
    pub yaw_deg: Histogram,
    pub bbox_side_frac: Histogram,
    pub camera_elevation_deg: Histogram,
}

impl DatasetStats {
    pub fn histograms(&self) -> [&Histogram; 4] {
        [&self.min_visibility, &self.yaw_deg, &self.bbox_side_frac, &self.camera_elevation_deg]
    }

    /// Writes `stats.json` and one `<name>.png` per histogram.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = vec![dir.join("stats.json")];
        write_json(&out[0], self)?;
        for h in self.histograms() {
            let p = dir.join(format!("{}.png", h.name));
            write_file(&p, &h.to_png()?)?;
            out.push(p);
        }
        Ok(out)
    }
}

pub fn dataset_stats(manifest: &Manifest) -> Result<DatasetStats> {
    if manifest.scenes.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let mut s = DatasetStats {
        n_scenes: manifest.scenes.len(),
        n_boxes: 0,
        min_visibility: Histogram::new("min_visibility", 0.0, 1.0),
        yaw_deg: Histogram::new("yaw_deg", 0.0, 360.0),
        bbox_side_frac: Histogram::new("bbox_side_frac", 0.0, 1.0),
        camera_elevation_deg: Histogram::new("camera_elevation_deg", 0.0, 90.0),
    };
    for scene in &manifest.scenes {
        s.min_visibility.add(scene.min_visibility);
        s.camera_elevation_deg.add(scene.camera_elevation.to_degrees());
        for b in &scene.boxes {
            s.n_boxes += 1;
            s.yaw_deg.add(b.yaw.to_degrees());
            s.bbox_side_frac.add(b.bbox_side_frac);
        }
    }
    Ok(s)
}
