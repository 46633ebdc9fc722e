//! Dataset emission: the sample, render, filter loop and its manifest.
//!
//! Output layout:
//!
//! ```text
//! out/manifest.json
//! out/scenes/000000/{layout.json, report.json, oscr.png, amodal_<id>.png,
//!                    visible_<id>.png, depth.pfm, meta.json}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::accept::{evaluate_candidate, AcceptReport, RejectReason};
use super::{sample_scene, scene_rng, GenConfig};
use crate::artifacts::{write_json, RenderArtifacts};
use crate::error::{Error, Result};
use crate::metrics::{GroundTruthObject, GroundTruthScene};
use crate::render::RenderOptions;
use crate::scene::{camera_pose, SceneLayout};
use crate::scores::ScoresFile;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    BudgetExhausted,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub candidates: u64,
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestBox {
    pub id: u32,
    pub label: String,
    pub yaw: f64,
    /// Camera-frame depth of the box center.
    pub center_depth: f64,
    pub visibility: f64,
    pub bbox_side_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestScene {
    pub id: u64,
    pub candidate_index: u64,
    /// Relative to the manifest's directory.
    pub dir: String,
    pub camera_elevation: f64,
    pub min_visibility: f64,
    pub boxes: Vec<ManifestBox>,
    pub layout: SceneLayout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationRejection {
    BelowThreshold,
    MissingScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectedAugmentation {
    pub scene: u64,
    pub reason: AugmentationRejection,
    /// First box (by id) that failed.
    pub box_id: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationFilter {
    pub threshold: f64,
    pub kept: Vec<u64>,
    pub rejected: Vec<RejectedAugmentation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub v: u32,
    pub status: RunStatus,
    pub config: GenConfig,
    pub render: RenderOptions,
    pub stats: GenStats,
    pub scenes: Vec<ManifestScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation_filter: Option<AugmentationFilter>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Ground truth in the form the metrics module consumes.
    pub fn ground_truth(&self) -> Vec<GroundTruthScene> {
        self.scenes
            .iter()
            .map(|s| GroundTruthScene {
                id: s.id,
                objects: s
                    .boxes
                    .iter()
                    .map(|b| GroundTruthObject {
                        box_id: b.id,
                        depth: b.center_depth,
                        yaw: b.yaw,
                    })
                    .collect(),
            })
            .collect()
    }
}

fn manifest_scene(id: u64, candidate_index: u64, layout: SceneLayout, report: &AcceptReport) -> Result<ManifestScene> {
    let pose = camera_pose(&layout.camera)?;
    let mut sorted: Vec<_> = layout.boxes.iter().collect();
    sorted.sort_by_key(|b| b.id);
    let boxes = sorted
        .into_iter()
        .zip(&report.boxes)
        .map(|(b, check)| ManifestBox {
            id: b.id,
            label: b.label.clone(),
            yaw: b.yaw,
            center_depth: pose.to_camera(b.center).z,
            visibility: check.visibility.unwrap_or(0.0),
            bbox_side_frac: check.bbox_side_frac,
        })
        .collect();
    Ok(ManifestScene {
        id,
        candidate_index,
        dir: format!("scenes/{id:06}"),
        camera_elevation: layout.camera.elevation,
        min_visibility: report.min_visibility().unwrap_or(0.0),
        boxes,
        layout,
    })
}

/// Runs the generation loop and writes the dataset under `out_dir`.
///
/// When `max_rejections_per_scene` consecutive candidates are rejected the
/// manifest is still written (status `budget_exhausted`) before the error is
/// returned.
pub fn generate_dataset(cfg: &GenConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut stats = GenStats::default();
    let mut scenes = Vec::with_capacity(cfg.n_scenes);
    let mut consecutive = 0usize;
    let mut candidate = 0u64;
    let mut status = RunStatus::Complete;

    while scenes.len() < cfg.n_scenes {
        if consecutive >= cfg.max_rejections_per_scene {
            status = RunStatus::BudgetExhausted;
            break;
        }
        let layout = sample_scene(cfg, &mut scene_rng(cfg.seed, candidate));
        let (report, render) = evaluate_candidate(cfg, &layout)?;
        stats.candidates += 1;
        match (report.reason, render) {
            (None, Some(render)) => {
                let id = scenes.len() as u64;
                let scene = manifest_scene(id, candidate, layout, &report)?;
                let dir = out_dir.join(&scene.dir);
                RenderArtifacts::encode(&render)?.write(&dir)?;
                write_json(&dir.join("layout.json"), &scene.layout)?;
                write_json(&dir.join("report.json"), &report)?;
                log::debug!("scene {id} from candidate {candidate} after {consecutive} rejections");
                scenes.push(scene);
                consecutive = 0;
            }
            (reason, _) => {
                let key = reason.unwrap_or(RejectReason::Offscreen).as_str().to_string();
                *stats.rejected.entry(key).or_default() += 1;
                consecutive += 1;
            }
        }
        candidate += 1;
    }

    stats.accepted = scenes.len() as u64;
    stats.acceptance_rate = if stats.candidates > 0 {
        stats.accepted as f64 / stats.candidates as f64
    } else {
        0.0
    };
    let manifest = Manifest {
        v: 1,
        status,
        config: cfg.clone(),
        render: RenderOptions::default(),
        stats,
        scenes,
        augmentation_filter: None,
    };
    let path = out_dir.join(MANIFEST_FILE);
    crate::image::write_file(&path, manifest.to_json()?.as_bytes())?;

    if status == RunStatus::BudgetExhausted {
        return Err(Error::BudgetExhausted {
            accepted: manifest.scenes.len(),
            consecutive,
        });
    }
    Ok(manifest)
}

/// Keeps a scene's augmentation iff every one of its boxes has a score at or
/// above `threshold`. The returned manifest lists only the kept scenes.
pub fn filter_augmentations(manifest: &Manifest, scores: &ScoresFile, threshold: f64) -> Manifest {
    let mut kept_scenes = Vec::new();
    let mut filter = AugmentationFilter {
        threshold,
        kept: Vec::new(),
        rejected: Vec::new(),
    };
    for scene in &manifest.scenes {
        let failure = scene.boxes.iter().find_map(|b| match scores.get(scene.id, b.id) {
            None => Some((AugmentationRejection::MissingScore, b.id, None)),
            Some(s) if s < threshold => Some((AugmentationRejection::BelowThreshold, b.id, Some(s))),
            Some(_) => None,
        });
        match failure {
            None => {
                filter.kept.push(scene.id);
                kept_scenes.push(scene.clone());
            }
            Some((reason, box_id, score)) => filter.rejected.push(RejectedAugmentation {
                scene: scene.id,
                reason,
                box_id,
                score,
            }),
        }
    }
    Manifest {
        scenes: kept_scenes,
        augmentation_filter: Some(filter),
        ..manifest.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> GenConfig {
        GenConfig {
            n_scenes: 3,
            image_size: 128,
            ..Default::default()
        }
    }

    #[test]
    fn writes_all_scene_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&tiny_cfg(), dir.path()).unwrap();
        assert_eq!(m.scenes.len(), 3);
        assert_eq!(m.status, RunStatus::Complete);
        for s in &m.scenes {
            let d = dir.path().join(&s.dir);
            for f in ["layout.json", "report.json", "oscr.png", "depth.pfm", "meta.json"] {
                assert!(d.join(f).is_file(), "{f}");
            }
            for b in &s.boxes {
                assert!(d.join(format!("amodal_{}.png", b.id)).is_file());
                assert!(d.join(format!("visible_{}.png", b.id)).is_file());
            }
        }
        let back = Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn impossible_visibility_band_exhausts_budget() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig {
            visibility_low: 0.69,
            visibility_high: 0.7,
            max_rejections_per_scene: 40,
            ..tiny_cfg()
        };
        let err = generate_dataset(&cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { consecutive: 40, .. }), "{err}");
        let m = Manifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.status, RunStatus::BudgetExhausted);
    }

    fn scored(scores: &[(u64, u32, f64)]) -> ScoresFile {
        let mut s = ScoresFile::default();
        for &(scene, b, v) in scores {
            s.insert(scene, b, v);
        }
        s
    }

    fn two_box_manifest() -> Manifest {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig {
            n_scenes: 1,
            objects_per_scene: [2, 2],
            image_size: 96,
            ..Default::default()
        };
        generate_dataset(&cfg, dir.path()).unwrap()
    }

    #[test]
    fn augmentation_filter_cases() {
        let m = two_box_manifest();
        let kept = filter_augmentations(&m, &scored(&[(0, 0, 0.31), (0, 1, 0.28)]), 0.25);
        assert_eq!(kept.scenes.len(), 1);

        let low = filter_augmentations(&m, &scored(&[(0, 0, 0.31), (0, 1, 0.19)]), 0.25);
        assert!(low.scenes.is_empty());
        let f = low.augmentation_filter.unwrap();
        assert_eq!(f.rejected[0].reason, AugmentationRejection::BelowThreshold);
        assert_eq!(f.rejected[0].box_id, 1);

        let missing = filter_augmentations(&m, &scored(&[(0, 0, 0.9)]), 0.25);
        let f = missing.augmentation_filter.unwrap();
        assert_eq!(f.rejected[0].reason, AugmentationRejection::MissingScore);
    }
}
