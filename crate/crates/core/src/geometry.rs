//! Axis-aligned box arithmetic.
//!
//! Coordinates are continuous pixels with `(x_min, y_min)` the top-left
//! corner, x growing right and y growing down. Boxes only become integer
//! rectangles when a crop is cut out of a frame.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    /// Finite corners in the right order.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        self.x_min <= x && x <= self.x_max && self.y_min <= y && y <= self.y_max
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x_min.min(other.x_min),
            self.y_min.min(other.y_min),
            self.x_max.max(other.x_max),
            self.y_max.max(other.y_max),
        )
    }

    /// Clip to `[0, w] x [0, h]`.
    pub fn clip(&self, w: f64, h: f64) -> BBox {
        let x_min = self.x_min.clamp(0.0, w);
        let y_min = self.y_min.clamp(0.0, h);
        BBox::new(
            x_min,
            y_min,
            self.x_max.clamp(x_min, w),
            self.y_max.clamp(y_min, h),
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }

    /// Lexicographic order on `(x_min, y_min, x_max, y_max)`.
    pub fn lex_cmp(&self, other: &BBox) -> Ordering {
        self.to_array()
            .iter()
            .zip(other.to_array().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// A scored, classified box on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
    /// 1-based frame number.
    pub frame_index: u32,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: u32, score: f64, frame_index: u32) -> Self {
        Self {
            bbox,
            class_id,
            score,
            frame_index,
        }
    }

    /// Score descending, then frame ascending, then box, then class.
    pub(crate) fn rank_cmp(&self, other: &Detection) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.frame_index.cmp(&other.frame_index))
            .then_with(|| self.bbox.lex_cmp(&other.bbox))
            .then(self.class_id.cmp(&other.class_id))
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Minimum circumscribed rectangle of a non-empty set of boxes.
pub fn min_enclosing_rect(boxes: &[BBox]) -> Result<BBox> {
    let (first, rest) = boxes.split_first().ok_or(Error::NoBoxes)?;
    Ok(rest.iter().fold(*first, |acc, b| acc.union(b)))
}

/// Indices into `dets` that survive greedy per-class suppression, in rank
/// order.
pub fn nms_indices(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].rank_cmp(&dets[b]));

    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for i in order {
        let d = &dets[i];
        let suppressed = kept.iter().any(|&k| {
            dets[k].class_id == d.class_id && iou(&dets[k].bbox, &d.bbox) >= iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Greedy per-class non-maximum suppression. Survivors are returned
/// score-descending.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_indices(dets, iou_threshold)
        .into_iter()
        .map(|i| dets[i])
        .collect()
}
