//! Precision, recall and average precision over per-frame detections.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_index: u32,
    pub class_id: u32,
    pub bbox: BBox,
}

impl GroundTruth {
    pub fn new(frame_index: u32, class_id: u32, bbox: BBox) -> Self {
        Self {
            frame_index,
            class_id,
            bbox,
        }
    }
}

/// Outcome of matching, with indices into the detection slice.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    pub false_negatives: usize,
}

fn gt_cmp(a: &GroundTruth, b: &GroundTruth) -> Ordering {
    a.frame_index
        .cmp(&b.frame_index)
        .then(a.class_id.cmp(&b.class_id))
        .then_with(|| a.bbox.lex_cmp(&b.bbox))
}

/// Per-detection TP flags plus the unmatched ground-truth count.
fn match_flags(dets: &[Detection], gts: &[GroundTruth], iou_min: f64) -> (Vec<bool>, usize) {
    let mut gts_by_key: BTreeMap<(u32, u32), Vec<GroundTruth>> = BTreeMap::new();
    for g in gts {
        gts_by_key.entry((g.frame_index, g.class_id)).or_default().push(*g);
    }
    for v in gts_by_key.values_mut() {
        v.sort_by(gt_cmp);
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].rank_cmp(&dets[b]));

    let mut claimed: BTreeMap<(u32, u32), Vec<bool>> = gts_by_key
        .iter()
        .map(|(k, v)| (*k, vec![false; v.len()]))
        .collect();
    let mut tp = vec![false; dets.len()];
    for i in order {
        let d = &dets[i];
        let key = (d.frame_index, d.class_id);
        let Some(cands) = gts_by_key.get(&key) else {
            continue;
        };
        let taken = claimed.get_mut(&key).unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in cands.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&d.bbox, &g.bbox);
            if v >= iou_min && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            tp[i] = true;
        }
    }
    let matched = tp.iter().filter(|&&t| t).count();
    (tp, gts.len() - matched)
}

/// Greedy matching per frame and class: detections in descending score
/// order each claim the unclaimed ground truth with the highest IoU, if that
/// IoU reaches `iou_min`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_min: f64) -> MatchResult {
    let (tp, fn_count) = match_flags(dets, gts, iou_min);
    let (t, f): (Vec<usize>, Vec<usize>) = (0..dets.len()).partition(|&i| tp[i]);
    MatchResult {
        true_positives: t,
        false_positives: f,
        false_negatives: fn_count,
    }
}

/// Precision and recall of the detections scoring at least `score_min`.
/// Precision is 1 with no detections; recall is 1 with no ground truth.
pub fn precision_recall(dets: &[Detection], gts: &[GroundTruth], score_min: f64, iou_min: f64) -> (f64, f64) {
    let kept: Vec<Detection> = dets.iter().filter(|d| d.score >= score_min).copied().collect();
    let m = match_detections(&kept, gts, iou_min);
    let tp = m.true_positives.len() as f64;
    let prec = if kept.is_empty() { 1.0 } else { tp / kept.len() as f64 };
    let rec = if gts.is_empty() { 1.0 } else { tp / gts.len() as f64 };
    (prec, rec)
}

/// Area under the all-points precision envelope.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], iou_min: f64) -> Result<f64> {
    if gts.is_empty() {
        return Err(Error::UndefinedAp);
    }
    let (tp, _) = match_flags(dets, gts, iou_min);
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].rank_cmp(&dets[b]));

    let total = gts.len() as f64;
    let mut hits = 0usize;
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        if tp[i] {
            hits += 1;
        }
        recall.push(hits as f64 / total);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    Ok(ap)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn ap_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Mean AP over [`ap_thresholds`].
pub fn ap_range(dets: &[Detection], gts: &[GroundTruth]) -> Result<f64> {
    let mut sum = 0.0;
    for t in ap_thresholds() {
        sum += average_precision(dets, gts, t)?;
    }
    Ok(sum / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub prec50: f64,
    pub rec50: f64,
    pub ap50: f64,
    pub prec75: f64,
    pub rec75: f64,
    pub ap75: f64,
    pub ap: f64,
    pub counts50: Counts,
    pub counts75: Counts,
    /// Score threshold used for the precision and recall columns.
    pub score_thresh: f64,
    pub detections: usize,
    pub ground_truth: usize,
}

impl EvalReport {
    pub const HEADER: [&'static str; 7] = ["Prec50", "Rec50", "AP50", "Prec75", "Rec75", "AP75", "AP"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.prec50,
            self.rec50,
            self.ap50,
            self.prec75,
            self.rec75,
            self.ap75,
            self.ap,
        ]
    }

    /// Two aligned lines: column names, then values.
    pub fn table(&self, label: &str) -> String {
        let width = label.len().max(6);
        let mut head = format!("{:<width$}", "Method");
        let mut row = format!("{label:<width$}");
        for (h, v) in Self::HEADER.iter().zip(self.values()) {
            head.push_str(&format!(" {h:>7}"));
            row.push_str(&format!(" {v:>7.4}"));
        }
        format!("{head}\n{row}\n")
    }
}

fn counts(dets: &[Detection], gts: &[GroundTruth], score_min: f64, iou_min: f64) -> Counts {
    let kept: Vec<Detection> = dets.iter().filter(|d| d.score >= score_min).copied().collect();
    let m = match_detections(&kept, gts, iou_min);
    Counts {
        tp: m.true_positives.len(),
        fp: m.false_positives.len(),
        fn_: m.false_negatives,
    }
}

/// Full metrics row. Precision and recall use detections scoring at least
/// `score_thresh`; the AP columns use every detection.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], score_thresh: f64) -> Result<EvalReport> {
    let (prec50, rec50) = precision_recall(dets, gts, score_thresh, 0.5);
    let (prec75, rec75) = precision_recall(dets, gts, score_thresh, 0.75);
    Ok(EvalReport {
        prec50,
        rec50,
        ap50: average_precision(dets, gts, 0.5)?,
        prec75,
        rec75,
        ap75: average_precision(dets, gts, 0.75)?,
        ap: ap_range(dets, gts)?,
        counts50: counts(dets, gts, score_thresh, 0.5),
        counts75: counts(dets, gts, score_thresh, 0.75),
        score_thresh,
        detections: dets.len(),
        ground_truth: gts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(frame: u32, b: [f64; 4], score: f64) -> Detection {
        Detection::new(BBox::from_array(b), 0, score, frame)
    }

    fn gt(frame: u32, b: [f64; 4]) -> GroundTruth {
        GroundTruth::new(frame, 0, BBox::from_array(b))
    }

    #[test]
    fn match_examples() {
        let g = [gt(1, [0., 0., 10., 10.])];
        let m = match_detections(&[det(1, [0., 0., 10., 10.], 0.9)], &g, 0.5);
        assert_eq!(m.true_positives, vec![0]);
        assert!(m.false_positives.is_empty());
        assert_eq!(m.false_negatives, 0);

        let m = match_detections(&[det(1, [0., 0., 10., 10.], 0.3), det(1, [1., 0., 10., 10.], 0.8)], &g, 0.5);
        assert_eq!(m.true_positives, vec![1]);
        assert_eq!(m.false_positives, vec![0]);

        // wrong frame or class never matches
        let m = match_detections(&[det(2, [0., 0., 10., 10.], 0.9)], &g, 0.5);
        assert_eq!((m.false_positives.len(), m.false_negatives), (1, 1));
        let other = Detection::new(BBox::new(0., 0., 10., 10.), 1, 0.9, 1);
        assert_eq!(match_detections(&[other], &g, 0.5).false_negatives, 1);
    }

    #[test]
    fn precision_recall_examples() {
        let gts: Vec<GroundTruth> = (0..5).map(|k| gt(1, [20. * k as f64, 0., 20. * k as f64 + 10., 10.])).collect();
        let perfect: Vec<Detection> = gts.iter().map(|g| Detection::new(g.bbox, 0, 0.9, 1)).collect();
        assert_eq!(precision_recall(&perfect, &gts, 0.5, 0.5), (1.0, 1.0));
        assert_eq!(precision_recall(&[], &gts, 0.5, 0.5), (1.0, 0.0));

        let mut mixed: Vec<Detection> = perfect[..3].to_vec();
        mixed.push(det(1, [500., 500., 510., 510.], 0.9));
        assert_eq!(precision_recall(&mixed, &gts, 0.5, 0.5), (0.75, 0.6));
        assert_eq!(precision_recall(&mixed, &[], 0.5, 0.5).1, 1.0);
    }

    #[test]
    fn ap_examples() {
        let g = [gt(1, [0., 0., 10., 10.])];
        assert_eq!(average_precision(&[det(1, [0., 0., 10., 10.], 0.9)], &g, 0.5).unwrap(), 1.0);
        let d = [det(1, [0., 0., 10., 10.], 0.9), det(1, [50., 50., 60., 60.], 0.8)];
        assert_eq!(average_precision(&d, &g, 0.5).unwrap(), 1.0);
        // the false alarm ranked first halves the precision at recall 1
        let d = [det(1, [0., 0., 10., 10.], 0.7), det(1, [50., 50., 60., 60.], 0.8)];
        assert_eq!(average_precision(&d, &g, 0.5).unwrap(), 0.5);
        assert!(matches!(average_precision(&d, &[], 0.5), Err(Error::UndefinedAp)));
        assert_eq!(average_precision(&[], &g, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn ap_range_examples() {
        let g = [gt(1, [0., 0., 10., 10.]), gt(2, [0., 0., 10., 10.])];
        let perfect = [det(1, [0., 0., 10., 10.], 0.9), det(2, [0., 0., 10., 10.], 0.8)];
        assert_eq!(ap_range(&perfect, &g).unwrap(), 1.0);

        // IoU exactly 0.6: counts at thresholds 0.50, 0.55 and 0.60
        let shifted = [det(1, [0., 0., 10., 6.], 0.9), det(2, [0., 0., 6., 10.], 0.8)];
        assert!((iou(&shifted[0].bbox, &g[0].bbox) - 0.6).abs() < 1e-15);
        let r = ap_range(&shifted, &g).unwrap();
        assert!((r - 0.3).abs() < 1e-12, "{r}");
        let mean: f64 = ap_thresholds()
            .iter()
            .map(|&t| average_precision(&shifted, &g, t).unwrap())
            .sum::<f64>()
            / 10.0;
        assert_eq!(r, mean);
    }

    #[test]
    fn report_table_has_seven_columns() {
        let g = [gt(1, [0., 0., 10., 10.])];
        let rep = evaluate(&[det(1, [0., 0., 10., 10.], 0.9)], &g, 0.5).unwrap();
        assert_eq!(rep.values(), [1.0; 7]);
        let t = rep.table("ours");
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split_whitespace().count(), 8);
        assert!(lines[1].contains("1.0000"));
    }

    fn instance() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>)> {
        let b = (0.0..40.0f64, 0.0..40.0f64, 1.0..15.0f64, 1.0..15.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h));
        let d = proptest::collection::vec((b.clone(), 0.0..1.0f64, 1u32..3), 0..12)
            .prop_map(|v| v.into_iter().map(|(b, s, f)| Detection::new(b, 0, s, f)).collect());
        let g = proptest::collection::vec((b, 1u32..3), 1..8)
            .prop_map(|v| v.into_iter().map(|(b, f)| GroundTruth::new(f, 0, b)).collect());
        (d, g)
    }

    proptest! {
        #[test]
        fn metrics_ignore_input_order((dets, gts) in instance(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut d2 = dets.clone();
            let mut g2 = gts.clone();
            d2.shuffle(&mut rng);
            g2.shuffle(&mut rng);
            let a = evaluate(&dets, &gts, 0.5).unwrap();
            let b = evaluate(&d2, &g2, 0.5).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ap_monotone_in_iou((dets, gts) in instance()) {
            let mut prev = f64::INFINITY;
            for t in ap_thresholds() {
                let ap = average_precision(&dets, &gts, t).unwrap();
                prop_assert!((0.0..=1.0).contains(&ap));
                prop_assert!(ap <= prev + 1e-12);
                prev = ap;
            }
        }

        #[test]
        fn recall_monotone_in_score((dets, gts) in instance(), s in 0.0..1.0f64) {
            let (_, r0) = precision_recall(&dets, &gts, 0.0, 0.5);
            let (_, r1) = precision_recall(&dets, &gts, s, 0.5);
            prop_assert!(r0 >= r1);
        }
    }
}
