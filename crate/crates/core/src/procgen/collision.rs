//! Yaw-only box intersection: vertical interval overlap plus a 2D separating
//! axis test on the floor footprints.

use crate::scene::OrientedBox;

fn footprint(b: &OrientedBox) -> [(f64, f64); 4] {
    let (s, c) = b.yaw.sin_cos();
    let (hw, hd) = (b.dims.x / 2.0, b.dims.y / 2.0);
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(sx, sy)| {
        let (lx, ly) = (sx * hw, sy * hd);
        (b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly)
    })
}

fn project(corners: &[(f64, f64); 4], ax: f64, ay: f64) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
        let d = x * ax + y * ay;
        (lo.min(d), hi.max(d))
    })
}

/// True iff the two boxes share interior volume. Touching faces, edges or
/// corners do not count.
pub fn check_collision(a: &OrientedBox, b: &OrientedBox) -> bool {
    let (a_lo, a_hi) = (a.center.z - a.dims.z / 2.0, a.center.z + a.dims.z / 2.0);
    let (b_lo, b_hi) = (b.center.z - b.dims.z / 2.0, b.center.z + b.dims.z / 2.0);
    if a_hi <= b_lo || b_hi <= a_lo {
        return false;
    }
    let (fa, fb) = (footprint(a), footprint(b));
    // Each rectangle contributes its two edge normals.
    for yaw in [a.yaw, b.yaw] {
        let (s, c) = yaw.sin_cos();
        for (ax, ay) in [(c, s), (-s, c)] {
            let (min_a, max_a) = project(&fa, ax, ay);
            let (min_b, max_b) = project(&fb, ax, ay);
            if max_a <= min_b || max_b <= min_a {
                return false;
            }
        }
    }
    true
}

/// Colliding id pairs `(lower, higher)` in id order.
pub fn colliding_pairs(boxes: &[OrientedBox]) -> Vec<(u32, u32)> {
    let mut sorted: Vec<&OrientedBox> = boxes.iter().collect();
    sorted.sort_by_key(|b| b.id);
    let mut out = Vec::new();
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if check_collision(sorted[i], sorted[j]) {
                out.push((sorted[i].id, sorted[j].id));
            }
        }
    }
    out
}
