//! Brute-force reference implementations used to check the library.
//! Each is written from the definition, without sharing code with the
//! library beyond its plain data types.

#![allow(dead_code)]

use std::collections::VecDeque;

use smod_core::detectors::BinaryMask;
use smod_core::evaluation::GroundTruth;
use smod_core::motion_cube::PixelRect;
use smod_core::{BBox, Detection};

pub fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let aa = (a.x_max - a.x_min) * (a.y_max - a.y_min);
    let ab = (b.x_max - b.x_min) * (b.y_max - b.y_min);
    let union = aa + ab - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Minimum of `perm[i] -> cost[i][perm[i]]` over every permutation.
pub fn min_permutation_cost(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                rec(cost, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
    best
}

/// Greedy NMS characterised as a fixed point: the kept set is the unique
/// subset `S` such that a detection belongs to `S` exactly when no member
/// of `S` ranked ahead of it with the same class overlaps it at
/// `iou >= thr`. Found by enumerating all subsets.
pub fn nms_by_subsets(dets: &[Detection], thr: f64) -> Vec<usize> {
    let n = dets.len();
    assert!(n <= 16, "subset enumeration is exponential");
    let ahead = |a: usize, b: usize| -> bool {
        let (da, db) = (&dets[a], &dets[b]);
        if da.score != db.score {
            return da.score > db.score;
        }
        if da.frame_index != db.frame_index {
            return da.frame_index < db.frame_index;
        }
        let ka = da.bbox.to_array();
        let kb = db.bbox.to_array();
        for k in 0..4 {
            if ka[k] != kb[k] {
                return ka[k] < kb[k];
            }
        }
        if da.class_id != db.class_id {
            return da.class_id < db.class_id;
        }
        a < b
    };
    let mut found: Option<u32> = None;
    for mask in 0u32..(1 << n) {
        let ok = (0..n).all(|i| {
            let blocked = (0..n).any(|j| {
                mask & (1 << j) != 0
                    && j != i
                    && ahead(j, i)
                    && dets[j].class_id == dets[i].class_id
                    && oracle_iou(&dets[j].bbox, &dets[i].bbox) >= thr
            });
            (mask & (1 << i) != 0) == !blocked
        });
        if ok {
            assert!(found.is_none(), "fixed point is not unique");
            found = Some(mask);
        }
    }
    let mask = found.expect("a fixed point exists");
    let mut kept: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
    kept.sort_by(|&a, &b| if ahead(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    kept
}

/// Enclosing rectangle from the sorted coordinate lists.
pub fn enclosing_by_sorting(boxes: &[BBox]) -> BBox {
    let mut xs_min: Vec<f64> = boxes.iter().map(|b| b.x_min).collect();
    let mut ys_min: Vec<f64> = boxes.iter().map(|b| b.y_min).collect();
    let mut xs_max: Vec<f64> = boxes.iter().map(|b| b.x_max).collect();
    let mut ys_max: Vec<f64> = boxes.iter().map(|b| b.y_max).collect();
    for v in [&mut xs_min, &mut ys_min, &mut xs_max, &mut ys_max] {
        v.sort_by(f64::total_cmp);
    }
    BBox::new(xs_min[0], ys_min[0], *xs_max.last().unwrap(), *ys_max.last().unwrap())
}

/// 8-connected components by breadth-first flood fill, in raster order of
/// their first pixel.
pub fn flood_fill_components(mask: &BinaryMask) -> Vec<PixelRect> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut seen = vec![false; mask.data.len()];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !mask.data[i] || seen[i] {
                continue;
            }
            seen[i] = true;
            let mut q = VecDeque::from([(x, y)]);
            let (mut x0, mut y0, mut x1, mut y1) = (x, y, x, y);
            while let Some((cx, cy)) = q.pop_front() {
                x0 = x0.min(cx);
                y0 = y0.min(cy);
                x1 = x1.max(cx);
                y1 = y1.max(cy);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (cx + dx, cy + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let j = (ny * w + nx) as usize;
                        if mask.data[j] && !seen[j] {
                            seen[j] = true;
                            q.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push(PixelRect::new(x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1));
        }
    }
    out
}

/// Greedy matching re-implemented: returns a TP flag per detection and the
/// number of unmatched ground-truth boxes. Assumes distinct scores.
pub fn greedy_match(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> (Vec<bool>, usize) {
    let mut claimed = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    for i in order {
        let d = &dets[i];
        let mut best_j = None;
        let mut best_v = -1.0;
        for (j, g) in gts.iter().enumerate() {
            if claimed[j] || g.frame_index != d.frame_index || g.class_id != d.class_id {
                continue;
            }
            let v = oracle_iou(&d.bbox, &g.bbox);
            if v >= thr && v > best_v {
                best_v = v;
                best_j = Some(j);
            }
        }
        if let Some(j) = best_j {
            claimed[j] = true;
            tp[i] = true;
        }
    }
    (tp, claimed.iter().filter(|c| !**c).count())
}

/// All-points AP by enumerating every score cut-off: for each recall level
/// reached, the best precision at any cut-off with at least that recall,
/// weighted by the recall gained.
pub fn ap_by_enumeration(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> f64 {
    let (tp, _) = greedy_match(dets, gts, thr);
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());
    let mut points: Vec<(f64, f64)> = Vec::new();
    for k in 1..=order.len() {
        let hits = order[..k].iter().filter(|&&i| tp[i]).count() as f64;
        points.push((hits / gts.len() as f64, hits / k as f64));
    }
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let best = points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
        ap += (r - prev) * best;
        prev = r;
    }
    ap
}
