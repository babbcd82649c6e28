//! SORT multi-object tracking.
//!
//! Each track carries a constant-velocity Kalman filter over
//! `(cx, cy, s, r, v_cx, v_cy, v_s)`: box centre, area, aspect ratio `w/h`
//! and the velocities of the first three. Detections are associated to
//! predicted boxes by a minimum-cost assignment on `1 - IoU`. Appearance is
//! not used.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Detection};

type Vec7 = SVector<f64, 7>;
type Vec4 = SVector<f64, 4>;
type Mat7 = SMatrix<f64, 7, 7>;
type Mat4 = SMatrix<f64, 4, 4>;
type Mat4x7 = SMatrix<f64, 4, 7>;

// Noise constants of the reference SORT implementation.
const MEASUREMENT_VAR: [f64; 4] = [1.0, 1.0, 10.0, 10.0];
const INITIAL_VAR: [f64; 7] = [10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4];
const PROCESS_VAR: [f64; 7] = [1.0, 1.0, 1.0, 1.0, 1e-2, 1e-2, 1e-4];

const MIN_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vec7,
    pub covariance: Mat7,
}

impl KalmanState {
    /// Box described by the current mean.
    pub fn bbox(&self) -> BBox {
        state_to_bbox(&self.mean)
    }
}

fn transition() -> Mat7 {
    let mut f = Mat7::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> Mat4x7 {
    let mut h = Mat4x7::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn bbox_to_measurement(b: &BBox) -> Result<Vec4> {
    let (w, h) = (b.width(), b.height());
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::DegenerateMeasurement);
    }
    let (cx, cy) = b.center();
    Ok(Vec4::new(cx, cy, w * h, w / h))
}

fn state_to_bbox(x: &Vec7) -> BBox {
    let s = x[2].max(0.0);
    let r = x[3].max(0.0);
    let w = (s * r).sqrt();
    let h = if w > 0.0 { s / w } else { 0.0 };
    BBox::from_center(x[0], x[1], w, h)
}

fn symmetrize(p: &mut Mat7) {
    *p = (*p + p.transpose()) * 0.5;
}

pub fn kalman_init(b: &BBox) -> Result<KalmanState> {
    let z = bbox_to_measurement(b)?;
    let mut mean = Vec7::zeros();
    mean.fixed_rows_mut::<4>(0).copy_from(&z);
    Ok(KalmanState {
        mean,
        covariance: Mat7::from_diagonal(&Vec7::from(INITIAL_VAR)),
    })
}

/// Advance one frame. Returns the propagated state and its box.
pub fn kalman_predict(st: &KalmanState) -> (KalmanState, BBox) {
    let mut mean = st.mean;
    // the area must not go non-positive
    if mean[2] + mean[6] <= 0.0 {
        mean[6] = 0.0;
    }
    let f = transition();
    let mean = f * mean;
    let mut covariance =
        f * st.covariance * f.transpose() + Mat7::from_diagonal(&Vec7::from(PROCESS_VAR));
    symmetrize(&mut covariance);
    let next = KalmanState { mean, covariance };
    let bbox = next.bbox();
    (next, bbox)
}

pub fn kalman_update(st: &KalmanState, b: &BBox) -> Result<KalmanState> {
    let z = bbox_to_measurement(b)?;
    let h = observation();
    let r = Mat4::from_diagonal(&Vec4::from(MEASUREMENT_VAR));

    let innovation = z - h * st.mean;
    let s = h * st.covariance * h.transpose() + r;
    // s is SPD: covariance is PSD and r is positive definite
    let s_inv = s
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| s.try_inverse())
        .ok_or(Error::DegenerateMeasurement)?;
    let gain = st.covariance * h.transpose() * s_inv;

    let mut mean = st.mean + gain * innovation;
    mean[2] = mean[2].max(MIN_SCALE);
    mean[3] = mean[3].max(MIN_SCALE);

    // Joseph form keeps the posterior PSD
    let i_kh = Mat7::identity() - gain * h;
    let mut covariance = i_kh * st.covariance * i_kh.transpose() + gain * r * gain.transpose();
    symmetrize(&mut covariance);

    Ok(KalmanState { mean, covariance })
}

/// Minimum-cost assignment for `rows <= cols` (potentials / shortest
/// augmenting path). Returns the column of each row and the total cost.
fn solve_square_or_wide(cost: &DMatrix<f64>) -> (Vec<usize>, f64) {
    let (n, m) = cost.shape();
    debug_assert!(n <= m);
    // 1-based arrays with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    let total = row_to_col
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[(r, c)])
        .sum();
    (row_to_col, total)
}

/// Optimal assignment restricted to the given rows and columns; pairs are
/// reported in original indices.
fn solve_sub(cost: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> (Vec<(usize, usize)>, f64) {
    if rows.is_empty() || cols.is_empty() {
        return (Vec::new(), 0.0);
    }
    if rows.len() <= cols.len() {
        let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, c| cost[(rows[r], cols[c])]);
        let (assign, total) = solve_square_or_wide(&sub);
        let pairs = assign
            .into_iter()
            .enumerate()
            .map(|(r, c)| (rows[r], cols[c]))
            .collect();
        (pairs, total)
    } else {
        let sub = DMatrix::from_fn(cols.len(), rows.len(), |c, r| cost[(rows[r], cols[c])]);
        let (assign, total) = solve_square_or_wide(&sub);
        let mut pairs: Vec<(usize, usize)> = assign
            .into_iter()
            .enumerate()
            .map(|(c, r)| (rows[r], cols[c]))
            .collect();
        pairs.sort_unstable();
        (pairs, total)
    }
}

/// Minimum total cost assignment of `min(m, k)` pairs.
///
/// Among equal-cost optima the lexicographically smallest row-sorted pair
/// list is returned, so the result does not depend on solver internals.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let (m, k) = cost.shape();
    if m == 0 || k == 0 {
        return Vec::new();
    }
    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..k).collect();
    let (mut current, optimum) = solve_sub(cost, &all_rows, &all_cols);
    let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-9 * scale * m.min(k) as f64;

    // Walk the rows in order, fixing each one to the smallest column that
    // still admits an optimal completion. `current` is always optimal and
    // consistent with the decisions made so far.
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut fixed_cost = 0.0;
    let mut free_cols = all_cols;
    for r in 0..m {
        let rest_rows: Vec<usize> = (r + 1..m).collect();
        let assigned = current.iter().find(|p| p.0 == r).map(|p| p.1);
        let limit = assigned.unwrap_or(usize::MAX);
        let mut choice = assigned;
        for &c in free_cols.iter().take_while(|&&c| c < limit) {
            let rest_cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            let need = m.min(k) - fixed.len() - 1;
            if rest_rows.len().min(rest_cols.len()) != need {
                continue;
            }
            let (pairs, rest) = solve_sub(cost, &rest_rows, &rest_cols);
            if (fixed_cost + cost[(r, c)] + rest - optimum).abs() <= tol {
                choice = Some(c);
                current = fixed.iter().copied().chain([(r, c)]).chain(pairs).collect();
                break;
            }
        }
        if let Some(c) = choice {
            fixed.push((r, c));
            fixed_cost += cost[(r, c)];
            free_cols.retain(|&x| x != c);
        }
        if fixed.len() == m.min(k) {
            break;
        }
    }
    fixed
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Assigned pairs below this IoU are rejected.
    pub match_iou_min: f64,
    /// Frames a track may go unmatched before it is deleted.
    pub max_age: u32,
    /// Matches required before a track is reported.
    pub min_hits: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            match_iou_min: 0.3,
            max_age: 3,
            min_hits: 1,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.match_iou_min > 0.0 && self.match_iou_min < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "match_iou_min must lie in (0, 1), got {}",
                self.match_iou_min
            )));
        }
        if self.max_age < 1 || self.min_hits < 1 {
            return Err(Error::InvalidConfig(
                "max_age and min_hits must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    /// Matched updates, including the creating detection.
    pub hits: u32,
    /// Frames since creation.
    pub age: u32,
    pub time_since_update: u32,
    /// `(frame_index, box)` for every frame the track has existed: the
    /// posterior box when matched, the prediction otherwise.
    pub history: Vec<(u32, BBox)>,
}

impl Track {
    pub fn current_box(&self) -> BBox {
        self.history.last().map(|h| h.1).unwrap_or_else(|| self.state.bbox())
    }
}

/// The `n` most recent history entries, oldest first.
pub fn last_n_positions(track: &Track, n: usize) -> Result<Vec<(u32, BBox)>> {
    let have = track.history.len();
    if have < n {
        return Err(Error::TrackTooYoung { have, need: n });
    }
    Ok(track.history[have - n..].to_vec())
}

#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracks in creation order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn is_reportable(&self, t: &Track) -> bool {
        t.hits >= self.cfg.min_hits
    }

    /// Advance by one frame. Returns `(track_id, box)` for every reportable
    /// track that is still alive after the step.
    pub fn step(&mut self, dets: &[Detection], frame_index: u32) -> Result<Vec<(u64, BBox)>> {
        if let Some(last) = self.last_frame {
            if frame_index != last + 1 {
                return Err(Error::FrameOrder {
                    expected: last + 1,
                    got: frame_index,
                });
            }
        }
        self.last_frame = Some(frame_index);

        let predicted: Vec<BBox> = self
            .tracks
            .iter_mut()
            .map(|t| {
                let (st, bbox) = kalman_predict(&t.state);
                t.state = st;
                t.age += 1;
                t.time_since_update += 1;
                bbox
            })
            .collect();

        let dets: Vec<&Detection> = dets.iter().filter(|d| d.bbox.area() > 0.0).collect();
        let cost = DMatrix::from_fn(predicted.len(), dets.len(), |t, d| {
            1.0 - iou(&predicted[t], &dets[d].bbox)
        });

        let mut det_used = vec![false; dets.len()];
        let mut track_matched = vec![false; self.tracks.len()];
        for (t, d) in hungarian(&cost) {
            if 1.0 - cost[(t, d)] < self.cfg.match_iou_min {
                continue;
            }
            let track = &mut self.tracks[t];
            track.state = kalman_update(&track.state, &dets[d].bbox)?;
            track.hits += 1;
            track.time_since_update = 0;
            track_matched[t] = true;
            det_used[d] = true;
        }

        for (t, track) in self.tracks.iter_mut().enumerate() {
            let bbox = if track_matched[t] {
                track.state.bbox()
            } else {
                predicted[t]
            };
            track.history.push((frame_index, bbox));
        }
        let max_age = self.cfg.max_age;
        self.tracks.retain(|t| t.time_since_update <= max_age);

        for (d, det) in dets.iter().enumerate() {
            if det_used[d] {
                continue;
            }
            let state = kalman_init(&det.bbox)?;
            self.tracks.push(Track {
                id: self.next_id,
                state,
                hits: 1,
                age: 0,
                time_since_update: 0,
                history: vec![(frame_index, det.bbox)],
            });
            self.next_id += 1;
        }

        Ok(self
            .tracks
            .iter()
            .filter(|t| self.is_reportable(t))
            .map(|t| (t.id, t.current_box()))
            .collect())
    }
}
