//! Streaming orchestration: windowed coarse detection, tracking, cube
//! construction and fine re-detection.
//!
//! Frames are pushed one at a time. Once `n` frames are buffered, every new
//! frame `t` completes the window `[t - n + 1, t]` whose middle frame
//! `t - (n - 1) / 2` receives that window's detections; later frames never
//! revise them.

use std::collections::VecDeque;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::detectors::{CoarseDetector, CubeContext, FineDetector};
use crate::error::{Error, Result};
use crate::geometry::{nms_indices, BBox, Detection};
use crate::motion_cube::{
    compute_motion_range, extract_cube, map_to_image, map_to_tensor, rasterize_rect, stack_channels, AStCube,
    CubeTensor, MotionRange,
};
use crate::tracking::{last_n_positions, Tracker, TrackerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// 1-based.
    pub index: u32,
    pub image: RgbImage,
}

impl FrameRecord {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalDetection {
    pub frame_index: u32,
    pub track_id: u64,
    pub class_id: u32,
    pub score: f64,
    pub bbox: BBox,
}

impl FinalDetection {
    pub fn to_detection(&self) -> Detection {
        Detection::new(self.bbox, self.class_id, self.score, self.frame_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Window length, odd and at least 3.
    pub n: usize,
    /// Motion-amount floor for cube sizing; 1 disables the expansion.
    pub gamma: f64,
    pub coarse_score_min: f64,
    pub fine_score_min: f64,
    /// IoU at which overlapping final boxes from different cubes are merged.
    pub nms_iou: f64,
    pub coarse_width: usize,
    pub coarse_height: usize,
    pub fine_width: usize,
    pub fine_height: usize,
    pub tracker: TrackerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n: 5,
            gamma: 4.0,
            coarse_score_min: 0.1,
            fine_score_min: 0.5,
            nms_iou: 0.45,
            coarse_width: 640,
            coarse_height: 384,
            fine_width: 160,
            fine_height: 160,
            tracker: TrackerConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || self.n % 2 == 0 {
            return Err(Error::EvenWindow(self.n));
        }
        if !(self.gamma >= 1.0) {
            return Err(Error::InvalidGamma(self.gamma));
        }
        if !(0.0 <= self.coarse_score_min
            && self.coarse_score_min <= self.fine_score_min
            && self.fine_score_min <= 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "score thresholds must satisfy 0 <= coarse ({}) <= fine ({}) <= 1",
                self.coarse_score_min, self.fine_score_min
            )));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::InvalidConfig(format!("nms_iou {} outside (0, 1]", self.nms_iou)));
        }
        if self.coarse_width == 0 || self.coarse_height == 0 || self.fine_width == 0 || self.fine_height == 0 {
            return Err(Error::InvalidConfig("input sizes must be non-zero".into()));
        }
        self.tracker.validate()
    }

    pub fn middle_offset(&self) -> usize {
        (self.n - 1) / 2
    }
}

/// Intermediate products of one window, for inspection and debugging.
#[derive(Debug, Clone)]
pub struct CubeTrace {
    pub motion_range: MotionRange,
    pub cube: AStCube,
    pub tensor: CubeTensor,
}

#[derive(Debug, Clone, Default)]
pub struct WindowTrace {
    /// Middle frame of the window.
    pub frame_index: u32,
    /// Coarse detections that passed `coarse_score_min`.
    pub coarse: Vec<Detection>,
    pub cubes: Vec<CubeTrace>,
    pub detections: Vec<FinalDetection>,
}

pub struct Pipeline<C, F> {
    cfg: PipelineConfig,
    coarse: C,
    fine: F,
    tracker: Tracker,
    buffer: VecDeque<FrameRecord>,
    dims: Option<(u32, u32)>,
}

impl<C: CoarseDetector, F: FineDetector> Pipeline<C, F> {
    pub fn new(cfg: PipelineConfig, coarse: C, fine: F) -> Result<Self> {
        cfg.validate()?;
        let tracker = Tracker::new(cfg.tracker)?;
        Ok(Self {
            cfg,
            coarse,
            fine,
            tracker,
            buffer: VecDeque::new(),
            dims: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Push the next frame. Returns the final detections of the middle frame
    /// of the window this frame completes (empty during warm-up).
    pub fn push_frame(&mut self, frame: FrameRecord) -> Result<Vec<FinalDetection>> {
        Ok(self.push_frame_traced(frame)?.map(|t| t.detections).unwrap_or_default())
    }

    /// Like [`Pipeline::push_frame`], also returning every intermediate
    /// product. `None` while the first window is still filling.
    pub fn push_frame_traced(&mut self, frame: FrameRecord) -> Result<Option<WindowTrace>> {
        if let Some(last) = self.buffer.back() {
            if frame.index != last.index + 1 {
                return Err(Error::FrameOrder {
                    expected: last.index + 1,
                    got: frame.index,
                });
            }
        }
        let dims = frame.image.dimensions();
        match self.dims {
            None => self.dims = Some(dims),
            Some((w, h)) if (w, h) != dims => {
                return Err(Error::DimensionMismatch {
                    expected_w: w,
                    expected_h: h,
                    got_w: dims.0,
                    got_h: dims.1,
                })
            }
            Some(_) => {}
        }

        self.buffer.push_back(frame);
        if self.buffer.len() > self.cfg.n {
            self.buffer.pop_front();
        }
        if self.buffer.len() < self.cfg.n {
            return Ok(None);
        }
        self.process_window().map(Some)
    }

    fn process_window(&mut self) -> Result<WindowTrace> {
        let n = self.cfg.n;
        let window = self.buffer.make_contiguous();
        let mid = window[self.cfg.middle_offset()].index;
        let (fw, fh) = window[0].image.dimensions();

        let coarse: Vec<Detection> = self
            .coarse
            .detect(window)?
            .into_iter()
            .filter(|d| d.score >= self.cfg.coarse_score_min)
            .map(|d| Detection { frame_index: mid, ..d })
            .collect();
        let tracked = self.tracker.step(&coarse, mid)?;

        let images: Vec<&RgbImage> = window.iter().map(|f| &f.image).collect();
        let mut cubes = Vec::new();
        let mut candidates: Vec<FinalDetection> = Vec::new();
        let mut ids: Vec<u64> = tracked.iter().map(|t| t.0).collect();
        ids.sort_unstable();
        for id in ids {
            let track = self.tracker.track(id).expect("reported track is alive");
            let Ok(positions) = last_n_positions(track, n) else {
                continue;
            };
            let track_box = positions[(n - 1) / 2].1;
            let mr = match compute_motion_range(id, &positions, self.cfg.gamma, fw, fh) {
                Ok(mr) => mr,
                Err(Error::DegenerateObject) => continue,
                Err(e) => return Err(e),
            };
            let arect = match rasterize_rect(&mr.adapted_rect, fw, fh) {
                Ok(r) => r,
                Err(Error::EmptyCrop) => continue,
                Err(e) => return Err(e),
            };
            let cube = extract_cube(&images, arect, id)?;
            let tensor = stack_channels(&cube, self.cfg.fine_width, self.cfg.fine_height);
            let ctx = CubeContext {
                cube_id: CubeContext::cube_id_for(mid, id),
                track_id: id,
                frame_index: mid,
                track_box: map_to_tensor(&track_box, &tensor),
            };
            for fb in self.fine.detect(&tensor, &ctx)? {
                if fb.score < self.cfg.fine_score_min {
                    continue;
                }
                let bbox = map_to_image(&fb.bbox, &tensor).clip(fw as f64, fh as f64);
                if bbox.area() <= 0.0 {
                    continue;
                }
                candidates.push(FinalDetection {
                    frame_index: mid,
                    track_id: id,
                    class_id: fb.class_id,
                    score: fb.score,
                    bbox,
                });
            }
            cubes.push(CubeTrace {
                motion_range: mr,
                cube,
                tensor,
            });
        }

        let as_dets: Vec<Detection> = candidates.iter().map(FinalDetection::to_detection).collect();
        let mut keep = nms_indices(&as_dets, self.cfg.nms_iou);
        keep.sort_by(|&a, &b| {
            candidates[a]
                .track_id
                .cmp(&candidates[b].track_id)
                .then_with(|| as_dets[a].rank_cmp(&as_dets[b]))
        });
        let detections = keep.into_iter().map(|i| candidates[i]).collect();

        Ok(WindowTrace {
            frame_index: mid,
            coarse,
            cubes,
            detections,
        })
    }
}

/// Push every frame through a fresh pipeline and collect all detections,
/// grouped by frame in order.
pub fn run_sequence<C, F, I>(frames: I, cfg: &PipelineConfig, coarse: C, fine: F) -> Result<Vec<FinalDetection>>
where
    C: CoarseDetector,
    F: FineDetector,
    I: IntoIterator<Item = Result<FrameRecord>>,
{
    let mut p = Pipeline::new(cfg.clone(), coarse, fine)?;
    let mut out = Vec::new();
    let mut count = 0usize;
    for f in frames {
        out.extend(p.push_frame(f?)?);
        count += 1;
    }
    if count < cfg.n {
        return Err(Error::SequenceTooShort {
            frames: count,
            window: cfg.n,
        });
    }
    Ok(out)
}
