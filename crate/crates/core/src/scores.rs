//! Per-object similarity scores produced by an external scorer, keyed by
//! `(scene id, box id)`.
//!
//! File format: `{"scenes": [{"id": 3, "box_scores": {"0": 0.31, "1": 0.28}}]}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoresFile {
    pub scenes: BTreeMap<u64, BTreeMap<u32, f64>>,
}

impl ScoresFile {
    pub fn get(&self, scene: u64, box_id: u32) -> Option<f64> {
        self.scenes.get(&scene).and_then(|s| s.get(&box_id)).copied()
    }

    pub fn insert(&mut self, scene: u64, box_id: u32, score: f64) {
        self.scenes.entry(scene).or_default().insert(box_id, score);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates; errors name the offending entry.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let err = |m: String| Error::schema(file, m);
        let root: Value = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| err("top level must be an object".into()))?;
        if let Some(k) = obj.keys().find(|k| *k != "scenes" && *k != "v") {
            return Err(err(format!("unknown field `{k}`")));
        }
        let scenes = obj
            .get("scenes")
            .and_then(Value::as_array)
            .ok_or_else(|| err("missing `scenes` array".into()))?;
        let mut out = ScoresFile::default();
        for (i, s) in scenes.iter().enumerate() {
            let at = format!("scenes[{i}]");
            let s = s
                .as_object()
                .ok_or_else(|| err(format!("{at}: expected an object")))?;
            if let Some(k) = s.keys().find(|k| *k != "id" && *k != "box_scores") {
                return Err(err(format!("{at}: unknown field `{k}`")));
            }
            let id = s
                .get("id")
                .and_then(Value::as_u64)
                .ok_or_else(|| err(format!("{at}.id: expected a non-negative integer")))?;
            if out.scenes.contains_key(&id) {
                return Err(err(format!("{at}.id: duplicate scene id {id}")));
            }
            let scores = s
                .get("box_scores")
                .and_then(Value::as_object)
                .ok_or_else(|| err(format!("{at}.box_scores: expected an object")))?;
            let mut boxes = BTreeMap::new();
            for (key, v) in scores {
                let entry = format!("{at}.box_scores[\"{key}\"]");
                let box_id: u32 = key
                    .parse()
                    .map_err(|_| err(format!("{entry}: box id is not an integer")))?;
                let score = v
                    .as_f64()
                    .filter(|x| (-1.0..=1.0).contains(x))
                    .ok_or_else(|| err(format!("{entry}: expected a number in [-1, 1], got {v}")))?;
                boxes.insert(box_id, score);
            }
            out.scenes.insert(id, boxes);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let scenes: Vec<Value> = self
            .scenes
            .iter()
            .map(|(id, boxes)| {
                let scores: serde_json::Map<String, Value> = boxes
                    .iter()
                    .map(|(b, s)| (b.to_string(), Value::from(*s)))
                    .collect();
                serde_json::json!({"id": id, "box_scores": scores})
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "scenes": scenes }))
            .expect("scores serialize")
    }
}
