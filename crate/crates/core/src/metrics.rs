//! Layout-adherence metrics: pairwise depth ordering, strict and
//! flip-tolerant angular error, and objectness aggregation.
//!
//! Depth, orientation and objectness estimates come from external models;
//! this module only consumes their outputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::ScoresFile;

/// Depth differences below this count as ties.
pub const DEPTH_TIE_TOL: f64 = 1e-6;

/// Default objectness threshold for filtering evaluated objects.
pub const DEFAULT_OBJECTNESS_THRESHOLD: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub box_id: u32,
    /// Camera depth of the box center.
    pub depth: f64,
    /// World yaw, radians.
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScene {
    pub id: u64,
    pub objects: Vec<GroundTruthObject>,
}

/// Everything known about one object at evaluation time.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectEval {
    pub box_id: u32,
    pub gt_depth: f64,
    pub gt_yaw: f64,
    pub est_depth: Option<f64>,
    pub est_yaw: Option<f64>,
    pub objectness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalInput {
    pub scene_id: u64,
    pub objects: Vec<ObjectEval>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Objects scoring below this (or without a score) are excluded from
    /// the depth and angle metrics. `None` disables the filter.
    pub objectness_threshold: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            objectness_threshold: Some(DEFAULT_OBJECTNESS_THRESHOLD),
        }
    }
}

impl ObjectEval {
    fn passes_objectness(&self, cfg: &EvalConfig) -> bool {
        match cfg.objectness_threshold {
            None => true,
            Some(t) => self.objectness.is_some_and(|s| s >= t),
        }
    }
}

fn tol_sign(d: f64) -> i8 {
    if d.abs() < DEPTH_TIE_TOL {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthOrderScore {
    /// Correct pairs over evaluated pairs.
    pub pair_accuracy: f64,
    /// Correct pairs averaged over all input images.
    pub correct_pairs_per_image: f64,
    pub correct_pairs: usize,
    pub evaluated_pairs: usize,
}

/// Scores every unordered pair of retained objects per scene: 1 when the
/// estimated order matches ground truth, 0 otherwise. An estimated tie only
/// scores when ground truth is tied too.
pub fn depth_order_score(inputs: &[EvalInput], cfg: &EvalConfig) -> Result<DepthOrderScore> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for scene in inputs {
        let kept: Vec<(f64, f64)> = scene
            .objects
            .iter()
            .filter(|o| o.passes_objectness(cfg))
            .filter_map(|o| o.est_depth.map(|e| (o.gt_depth, e)))
            .collect();
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                total += 1;
                let gt = tol_sign(kept[i].0 - kept[j].0);
                let est = tol_sign(kept[i].1 - kept[j].1);
                if gt == est {
                    correct += 1;
                }
            }
        }
    }
    if total == 0 {
        return Err(Error::NoPairs);
    }
    Ok(DepthOrderScore {
        pair_accuracy: correct as f64 / total as f64,
        correct_pairs_per_image: correct as f64 / inputs.len() as f64,
        correct_pairs: correct,
        evaluated_pairs: total,
    })
}

/// Absolute circular difference in degrees, in `[0, 180]`; with `relaxed`
/// a 180° flip is forgiven and the result lies in `[0, 90]`.
pub fn angular_error_deg(gt: f64, est: f64, relaxed: bool) -> f64 {
    let strict = |d: f64| {
        let m = d.abs() % 360.0;
        m.min(360.0 - m)
    };
    let d = est - gt;
    if relaxed {
        strict(d).min(strict(d + 180.0))
    } else {
        strict(d)
    }
}

/// Radian inputs, degree output.
pub fn angular_error(gt_rad: f64, est_rad: f64, relaxed: bool) -> f64 {
    angular_error_deg(gt_rad.to_degrees(), est_rad.to_degrees(), relaxed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectnessAggregate {
    /// Mean over every scored box; `None` when nothing was scored.
    pub mean: Option<f64>,
    /// `(scene, box)` pairs scoring at least the threshold.
    pub retained: BTreeSet<(u64, u32)>,
    /// Boxes without a score; they count as filtered.
    pub missing: Vec<(u64, u32)>,
}

pub fn objectness_aggregate(
    scores: &ScoresFile,
    scenes: &[GroundTruthScene],
    threshold: f64,
) -> ObjectnessAggregate {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut retained = BTreeSet::new();
    let mut missing = Vec::new();
    for s in scenes {
        for o in &s.objects {
            match scores.get(s.id, o.box_id) {
                Some(score) => {
                    sum += score;
                    n += 1;
                    if score >= threshold {
                        retained.insert((s.id, o.box_id));
                    }
                }
                None => missing.push((s.id, o.box_id)),
            }
        }
    }
    ObjectnessAggregate {
        mean: (n > 0).then(|| sum / n as f64),
        retained,
        missing,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEstimate {
    pub id: u32,
    pub depth: Option<f64>,
    pub yaw: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEstimates {
    pub id: u64,
    pub boxes: Vec<BoxEstimate>,
}

/// `{"scenes": [{"id": 0, "boxes": [{"id": 0, "depth": 4.2, "yaw": 1.0}]}]}`
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<u32>,
    pub scenes: Vec<SceneEstimates>,
}

impl EstimatesFile {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::schema(file, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Estimates copied from ground truth.
    pub fn from_ground_truth(scenes: &[GroundTruthScene]) -> Self {
        Self {
            v: None,
            scenes: scenes
                .iter()
                .map(|s| SceneEstimates {
                    id: s.id,
                    boxes: s
                        .objects
                        .iter()
                        .map(|o| BoxEstimate {
                            id: o.box_id,
                            depth: Some(o.depth),
                            yaw: Some(o.yaw),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub v: u32,
    pub n_scenes: usize,
    pub n_objects: usize,
    /// Objects excluded by the objectness filter or missing estimates.
    pub n_filtered: usize,
    pub all_filtered: bool,
    pub depth_pair_accuracy: Option<f64>,
    pub correct_pairs_per_image: Option<f64>,
    pub evaluated_pairs: usize,
    pub angular_error_deg: Option<f64>,
    pub relaxed_angular_error_deg: Option<f64>,
    pub objectness_mean: Option<f64>,
    pub objectness_threshold: Option<f64>,
    pub missing_scores: usize,
}

impl MetricReport {
    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let rows = [
            ("depth ord. (pair accuracy)", f(self.depth_pair_accuracy)),
            ("depth ord. (correct pairs / image)", f(self.correct_pairs_per_image)),
            ("evaluated pairs", self.evaluated_pairs.to_string()),
            ("obj. score (mean)", f(self.objectness_mean)),
            ("angular err. (deg)", f(self.angular_error_deg)),
            ("180 flip ang. err. (deg)", f(self.relaxed_angular_error_deg)),
            ("scenes", self.n_scenes.to_string()),
            ("objects", self.n_objects.to_string()),
            ("filtered objects", self.n_filtered.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<36} {v:>10}");
        }
        if self.all_filtered {
            s.push_str("all objects were filtered\n");
        }
        s
    }
}

/// Joins ground truth with estimates and scores. Estimates for unknown
/// scenes or boxes are schema errors.
pub fn join_inputs(
    gt: &[GroundTruthScene],
    estimates: &EstimatesFile,
    scores: Option<&ScoresFile>,
) -> Result<Vec<EvalInput>> {
    let mut by_scene: BTreeMap<u64, BTreeMap<u32, &BoxEstimate>> = BTreeMap::new();
    let known: BTreeMap<u64, &GroundTruthScene> = gt.iter().map(|s| (s.id, s)).collect();
    for (i, s) in estimates.scenes.iter().enumerate() {
        let scene = known.get(&s.id).ok_or_else(|| {
            Error::schema("estimates", format!("scenes[{i}]: unknown scene id {}", s.id))
        })?;
        let entry = by_scene.entry(s.id).or_default();
        for (j, b) in s.boxes.iter().enumerate() {
            if !scene.objects.iter().any(|o| o.box_id == b.id) {
                return Err(Error::schema(
                    "estimates",
                    format!("scenes[{i}].boxes[{j}]: scene {} has no box {}", s.id, b.id),
                ));
            }
            if entry.insert(b.id, b).is_some() {
                return Err(Error::schema(
                    "estimates",
                    format!("scenes[{i}].boxes[{j}]: duplicate box id {}", b.id),
                ));
            }
        }
    }
    Ok(gt
        .iter()
        .map(|s| EvalInput {
            scene_id: s.id,
            objects: s
                .objects
                .iter()
                .map(|o| {
                    let est = by_scene.get(&s.id).and_then(|m| m.get(&o.box_id));
                    ObjectEval {
                        box_id: o.box_id,
                        gt_depth: o.depth,
                        gt_yaw: o.yaw,
                        est_depth: est.and_then(|e| e.depth),
                        est_yaw: est.and_then(|e| e.yaw),
                        objectness: scores.and_then(|sc| sc.get(s.id, o.box_id)),
                    }
                })
                .collect(),
        })
        .collect())
}

/// Computes the full report. Angular errors are averaged per object.
pub fn evaluate(
    gt: &[GroundTruthScene],
    estimates: &EstimatesFile,
    scores: Option<&ScoresFile>,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    let cfg = if scores.is_none() {
        EvalConfig {
            objectness_threshold: None,
        }
    } else {
        *cfg
    };
    let inputs = join_inputs(gt, estimates, scores)?;
    let n_objects: usize = inputs.iter().map(|s| s.objects.len()).sum();

    let mut n_filtered = 0;
    let (mut strict, mut relaxed, mut n_yaw) = (0.0, 0.0, 0usize);
    for o in inputs.iter().flat_map(|s| &s.objects) {
        let kept = o.passes_objectness(&cfg) && (o.est_depth.is_some() || o.est_yaw.is_some());
        if !kept {
            n_filtered += 1;
            continue;
        }
        if let Some(y) = o.est_yaw {
            strict += angular_error(o.gt_yaw, y, false);
            relaxed += angular_error(o.gt_yaw, y, true);
            n_yaw += 1;
        }
    }

    let depth = match depth_order_score(&inputs, &cfg) {
        Ok(d) => Some(d),
        Err(Error::NoPairs) => None,
        Err(e) => return Err(e),
    };
    let objectness = scores.map(|s| {
        objectness_aggregate(s, gt, cfg.objectness_threshold.unwrap_or(f64::NEG_INFINITY))
    });

    Ok(MetricReport {
        v: 1,
        n_scenes: gt.len(),
        n_objects,
        n_filtered,
        all_filtered: n_filtered == n_objects,
        depth_pair_accuracy: depth.map(|d| d.pair_accuracy),
        correct_pairs_per_image: depth.map(|d| d.correct_pairs_per_image),
        evaluated_pairs: depth.map_or(0, |d| d.evaluated_pairs),
        angular_error_deg: (n_yaw > 0).then(|| strict / n_yaw as f64),
        relaxed_angular_error_deg: (n_yaw > 0).then(|| relaxed / n_yaw as f64),
        objectness_mean: objectness.as_ref().and_then(|o| o.mean),
        objectness_threshold: cfg.objectness_threshold,
        missing_scores: objectness.map_or(0, |o| o.missing.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: u32, gt: f64, est: Option<f64>) -> ObjectEval {
        ObjectEval {
            box_id: id,
            gt_depth: gt,
            gt_yaw: 0.0,
            est_depth: est,
            est_yaw: None,
            objectness: Some(1.0),
        }
    }

    fn scene(objects: Vec<ObjectEval>) -> EvalInput {
        EvalInput {
            scene_id: 0,
            objects,
        }
    }

    #[test]
    fn perfect_ordering() {
        let s = scene(vec![obj(0, 2.0, Some(2.0)), obj(1, 5.0, Some(5.0)), obj(2, 9.0, Some(9.0))]);
        let d = depth_order_score(&[s], &EvalConfig::default()).unwrap();
        assert_eq!(d.pair_accuracy, 1.0);
        assert_eq!(d.correct_pairs_per_image, 3.0);
    }

    #[test]
    fn one_swapped_pair() {
        let s = scene(vec![obj(0, 2.0, Some(5.0)), obj(1, 5.0, Some(2.0)), obj(2, 9.0, Some(9.0))]);
        let d = depth_order_score(&[s], &EvalConfig::default()).unwrap();
        assert!((d.pair_accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.correct_pairs, 2);
    }

    #[test]
    fn ties_only_score_when_both_tied() {
        let cfg = EvalConfig::default();
        let est_tie = scene(vec![obj(0, 2.0, Some(3.0)), obj(1, 5.0, Some(3.0 + 1e-9))]);
        assert_eq!(depth_order_score(&[est_tie], &cfg).unwrap().pair_accuracy, 0.0);
        let both_tie = scene(vec![obj(0, 2.0, Some(3.0)), obj(1, 2.0, Some(3.0))]);
        assert_eq!(depth_order_score(&[both_tie], &cfg).unwrap().pair_accuracy, 1.0);
    }

    #[test]
    fn filtering_and_no_pairs() {
        let mut a = obj(0, 2.0, Some(2.0));
        a.objectness = Some(0.1);
        let s = scene(vec![a, obj(1, 5.0, Some(5.0)), obj(2, 9.0, None)]);
        assert!(matches!(
            depth_order_score(std::slice::from_ref(&s), &EvalConfig::default()),
            Err(Error::NoPairs)
        ));
        let open = EvalConfig {
            objectness_threshold: None,
        };
        assert_eq!(depth_order_score(&[s], &open).unwrap().evaluated_pairs, 1);
    }

    #[test]
    fn angular_examples() {
        assert_eq!(angular_error_deg(30.0, 210.0, false), 180.0);
        assert_eq!(angular_error_deg(30.0, 210.0, true), 0.0);
        assert!((angular_error_deg(350.0, 10.0, false) - 20.0).abs() < 1e-9);
        assert!((angular_error_deg(350.0, 10.0, true) - 20.0).abs() < 1e-9);
        assert_eq!(angular_error_deg(77.0, 77.0, false), 0.0);
        assert_eq!(angular_error_deg(77.0, 77.0, true), 0.0);
        assert!((angular_error(0.0, std::f64::consts::PI, false) - 180.0).abs() < 1e-9);
    }

    #[test]
    fn objectness_examples() {
        let gt = vec![GroundTruthScene {
            id: 0,
            objects: (0..3)
                .map(|i| GroundTruthObject {
                    box_id: i,
                    depth: 1.0,
                    yaw: 0.0,
                })
                .collect(),
        }];
        let mut s = ScoresFile::default();
        s.insert(0, 0, 0.3);
        s.insert(0, 1, 0.2);
        s.insert(0, 2, 0.25);
        let agg = objectness_aggregate(&s, &gt, 0.25);
        assert!((agg.mean.unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(agg.retained, BTreeSet::from([(0, 0), (0, 2)]));
        assert_eq!(objectness_aggregate(&s, &gt, 0.0).retained.len(), 3);

        let none = objectness_aggregate(&ScoresFile::default(), &gt, 0.25);
        assert_eq!(none.mean, None);
        assert!(none.retained.is_empty());
        assert_eq!(none.missing.len(), 3);
    }

    #[test]
    fn estimates_schema_errors() {
        let gt = vec![GroundTruthScene {
            id: 1,
            objects: vec![GroundTruthObject {
                box_id: 0,
                depth: 1.0,
                yaw: 0.0,
            }],
        }];
        let e = EstimatesFile::parse(r#"{"scenes":[{"id":2,"boxes":[]}]}"#, "e").unwrap();
        let msg = evaluate(&gt, &e, None, &EvalConfig::default()).unwrap_err().to_string();
        assert!(msg.contains("scenes[0]: unknown scene id 2"), "{msg}");
        let e = EstimatesFile::parse(r#"{"scenes":[{"id":1,"boxes":[{"id":4,"depth":1,"yaw":null}]}]}"#, "e").unwrap();
        let msg = evaluate(&gt, &e, None, &EvalConfig::default()).unwrap_err().to_string();
        assert!(msg.contains("scenes[0].boxes[0]"), "{msg}");
        let msg = EstimatesFile::parse(r#"{"scenes":[{"id":1,"boxes":[{"id":0,"depht":1}]}]}"#, "e")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("unknown field `depht`"), "{msg}");
    }
}
