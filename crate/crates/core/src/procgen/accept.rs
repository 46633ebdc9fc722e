//! Occlusion and size filtering of candidate scenes.
//!
//! Checks run in a fixed order so the reported reason is stable:
//! collision, offscreen, size, too_hidden, all_visible.

use serde::{Deserialize, Serialize};

use super::collision::colliding_pairs;
use super::GenConfig;
use crate::error::Result;
use crate::render::{render_oscr, RenderOptions, RenderOutput};
use crate::scene::SceneLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Collision,
    AllVisible,
    TooHidden,
    TooSmall,
    TooLarge,
    Offscreen,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Collision => "collision",
            Self::AllVisible => "all_visible",
            Self::TooHidden => "too_hidden",
            Self::TooSmall => "too_small",
            Self::TooLarge => "too_large",
            Self::Offscreen => "offscreen",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

/// Per-box measurements behind a verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCheck {
    pub id: u32,
    pub amodal_area: usize,
    pub visible_area: usize,
    /// `None` when the box has no pixels.
    pub visibility: Option<f64>,
    /// Largest amodal bbox side over image width.
    pub bbox_side_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptReport {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<RejectReason>,
    /// Empty when the candidate was rejected for collision before rendering.
    pub boxes: Vec<BoxCheck>,
    pub colliding_pairs: Vec<(u32, u32)>,
}

impl AcceptReport {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    pub fn min_visibility(&self) -> Option<f64> {
        self.boxes.iter().filter_map(|b| b.visibility).reduce(f64::min)
    }

    fn collision(pairs: Vec<(u32, u32)>) -> Self {
        Self {
            verdict: Verdict::Rejected,
            reason: Some(RejectReason::Collision),
            boxes: Vec::new(),
            colliding_pairs: pairs,
        }
    }
}

/// The filter decision on already measured boxes.
pub fn classify(collides: bool, boxes: &[BoxCheck], cfg: &GenConfig) -> Option<RejectReason> {
    if collides {
        return Some(RejectReason::Collision);
    }
    if boxes.iter().any(|b| b.amodal_area == 0) {
        return Some(RejectReason::Offscreen);
    }
    for b in boxes {
        if b.bbox_side_frac < cfg.bbox_side_min_frac {
            return Some(RejectReason::TooSmall);
        }
        if b.bbox_side_frac > cfg.bbox_side_max_frac {
            return Some(RejectReason::TooLarge);
        }
    }
    let vis = || boxes.iter().map(|b| b.visibility.unwrap_or(0.0));
    if vis().any(|x| x < cfg.visibility_low) {
        return Some(RejectReason::TooHidden);
    }
    if vis().fold(f64::INFINITY, f64::min) > cfg.visibility_high {
        return Some(RejectReason::AllVisible);
    }
    None
}

/// Measures `render` (which must come from `candidate`) and applies the filters.
pub fn accept_scene(candidate: &SceneLayout, render: &RenderOutput, cfg: &GenConfig) -> AcceptReport {
    let pairs = colliding_pairs(&candidate.boxes);
    let width = render.oscr.width as f64;
    let boxes: Vec<BoxCheck> = render
        .box_ids()
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let amodal = &render.amodal_masks[i];
            let amodal_area = amodal.area();
            let visible_area = render.visible_masks[i].area();
            BoxCheck {
                id,
                amodal_area,
                visible_area,
                visibility: (amodal_area > 0).then(|| visible_area as f64 / amodal_area as f64),
                bbox_side_frac: amodal.bbox_largest_side() as f64 / width,
            }
        })
        .collect();
    let reason = classify(!pairs.is_empty(), &boxes, cfg);
    AcceptReport {
        verdict: if reason.is_some() { Verdict::Rejected } else { Verdict::Accepted },
        reason,
        boxes,
        colliding_pairs: pairs,
    }
}

/// Collision check, then render and filter. The render is skipped (and
/// `None` returned) for colliding candidates.
pub fn evaluate_candidate(
    cfg: &GenConfig,
    layout: &SceneLayout,
) -> Result<(AcceptReport, Option<RenderOutput>)> {
    let pairs = colliding_pairs(&layout.boxes);
    if !pairs.is_empty() {
        return Ok((AcceptReport::collision(pairs), None));
    }
    let render = render_oscr(layout, &RenderOptions::default())?;
    let report = accept_scene(layout, &render, cfg);
    Ok((report, Some(render)))
}
