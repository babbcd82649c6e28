//! Coarse and fine detector interfaces.
//!
//! The coarse detector looks at a window of `n` frames and reports suspicious
//! objects on the window's middle frame; it is run with a low score threshold
//! so it errs on the side of false alarms. The fine detector looks at one
//! stacked cube at a time and either confirms objects inside it or returns
//! nothing.
//!
//! The reference implementations here are classical image processing, not
//! learned models. Detections produced elsewhere (for instance by a neural
//! network) can be fed in through [`ExternalCoarse`] and [`ExternalFine`]
//! from a JSON Lines file.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};
use crate::io::read_detections;
use crate::motion_cube::{CubeTensor, PixelRect};
use crate::pipeline::FrameRecord;
use crate::raster::{Plane, LUMA};

/// Consumes a window of `n` frames and predicts objects on its middle frame,
/// in original image coordinates.
pub trait CoarseDetector {
    fn detect(&mut self, window: &[FrameRecord]) -> Result<Vec<Detection>>;
}

/// A box found inside a cube tensor, in tensor coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineBox {
    pub class_id: u32,
    pub score: f64,
    pub bbox: BBox,
}

/// What the pipeline knows about the cube being examined.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeContext {
    /// `"{frame}:{track}"`, the key used by external fine detections.
    pub cube_id: String,
    pub track_id: u64,
    /// Middle frame of the cube.
    pub frame_index: u32,
    /// The track's middle-frame box, in tensor coordinates.
    pub track_box: BBox,
}

impl CubeContext {
    pub fn cube_id_for(frame_index: u32, track_id: u64) -> String {
        format!("{frame_index}:{track_id}")
    }
}

/// Confirms and localises objects inside one cube. May return nothing.
pub trait FineDetector {
    fn detect(&self, tensor: &CubeTensor, ctx: &CubeContext) -> Result<Vec<FineBox>>;
}

impl<T: CoarseDetector + ?Sized> CoarseDetector for Box<T> {
    fn detect(&mut self, window: &[FrameRecord]) -> Result<Vec<Detection>> {
        (**self).detect(window)
    }
}

impl<T: FineDetector + ?Sized> FineDetector for Box<T> {
    fn detect(&self, tensor: &CubeTensor, ctx: &CubeContext) -> Result<Vec<FineBox>> {
        (**self).detect(tensor, ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    /// Square dilation with a `(2r + 1)`-pixel structuring element.
    pub fn dilate(&self, r: usize) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let mut rows = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if self.get(x, y) {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        rows.set(xx, y, true);
                    }
                }
            }
        }
        let mut out = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if rows.get(x, y) {
                    for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                        out.set(x, yy, true);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Component {
    pub rect: PixelRect,
    pub area: usize,
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        parent[i as usize] = parent[parent[i as usize] as usize];
        i = parent[i as usize];
    }
    i
}

/// Two-pass 8-connected labelling. Returns a label per pixel (0 for
/// background, components numbered from 1 in raster order of their first
/// pixel) and the components.
pub(crate) fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut count = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[count] = l;
                    count += 1;
                }
            };
            if x > 0 {
                push(labels[y * w + x - 1]);
            }
            if y > 0 {
                let row = (y - 1) * w;
                if x > 0 {
                    push(labels[row + x - 1]);
                }
                push(labels[row + x]);
                if x + 1 < w {
                    push(labels[row + x + 1]);
                }
            }
            let l = if count == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let root = neighbours[..count]
                    .iter()
                    .map(|&n| find(&mut parent, n))
                    .min()
                    .unwrap();
                for &n in &neighbours[..count] {
                    let r = find(&mut parent, n);
                    parent[r as usize] = root;
                }
                root
            };
            labels[y * w + x] = l;
        }
    }

    // relabel roots in raster order of first appearance
    let mut remap = vec![0u32; parent.len()];
    let mut comps: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l) as usize;
            if remap[root] == 0 {
                comps.push(Component {
                    rect: PixelRect::new(x as u32, y as u32, x as u32 + 1, y as u32 + 1),
                    area: 0,
                });
                remap[root] = comps.len() as u32;
            }
            let id = remap[root];
            labels[y * w + x] = id;
            let c = &mut comps[id as usize - 1];
            c.area += 1;
            c.rect.x0 = c.rect.x0.min(x as u32);
            c.rect.x1 = c.rect.x1.max(x as u32 + 1);
            c.rect.y1 = c.rect.y1.max(y as u32 + 1);
        }
    }
    (labels, comps)
}

/// Components of `mask` whose pixels lie within `r` pixels (Chebyshev) of
/// each other are grouped together. Labels and stats cover only the pixels
/// of `mask` itself.
pub(crate) fn grouped_components(mask: &BinaryMask, r: usize) -> (Vec<u32>, Vec<Component>) {
    if r == 0 {
        return label_components(mask);
    }
    let (grouped, _) = label_components(&mask.dilate(r));
    let mut remap: Vec<u32> = vec![0; grouped.iter().copied().max().unwrap_or(0) as usize + 1];
    let mut comps: Vec<Component> = Vec::new();
    let mut labels = vec![0u32; grouped.len()];
    for (i, &g) in grouped.iter().enumerate() {
        if !mask.data[i] {
            continue;
        }
        let (x, y) = ((i % mask.width) as u32, (i / mask.width) as u32);
        if remap[g as usize] == 0 {
            comps.push(Component {
                rect: PixelRect::new(x, y, x + 1, y + 1),
                area: 0,
            });
            remap[g as usize] = comps.len() as u32;
        }
        let id = remap[g as usize];
        labels[i] = id;
        let c = &mut comps[id as usize - 1];
        c.area += 1;
        c.rect.x0 = c.rect.x0.min(x);
        c.rect.x1 = c.rect.x1.max(x + 1);
        c.rect.y1 = c.rect.y1.max(y + 1);
    }
    (labels, comps)
}

/// Bounding boxes of the 8-connected components of `mask`, in raster order
/// of each component's first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<PixelRect> {
    label_components(mask).1.into_iter().map(|c| c.rect).collect()
}

/// Per-component mean of `values`.
fn component_means(labels: &[u32], comps: &[Component], values: &[f32]) -> Vec<f32> {
    let mut sums = vec![0.0f64; comps.len()];
    for (&l, &v) in labels.iter().zip(values) {
        if l != 0 {
            sums[l as usize - 1] += v as f64;
        }
    }
    sums.iter()
        .zip(comps)
        .map(|(s, c)| (s / c.area as f64) as f32)
        .collect()
}

fn median_in_place(values: &mut [f32]) -> f32 {
    let n = values.len();
    let mid = n / 2;
    let (_, hi, _) = values.select_nth_unstable_by(mid, f32::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = values[..mid].iter().copied().fold(f32::NEG_INFINITY, f32::max);
        (lo + hi) / 2.0
    }
}

fn check_window(n: usize) -> Result<()> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::EvenWindow(n));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoarseConfig {
    /// Working resolution; frames are resized to this before differencing.
    pub input_width: usize,
    pub input_height: usize,
    /// Weight of each frame folded into the running background.
    pub alpha: f32,
    /// Foreground threshold in grey levels (25 = 25/255).
    pub threshold: f32,
    /// Foreground fragments closer than this many working-resolution pixels
    /// are reported as one object.
    pub merge_radius: usize,
    /// Component area bounds, in working-resolution pixels.
    pub min_area: usize,
    pub max_area: usize,
    /// Mean foreground level that maps to score 1.
    pub score_ref: f32,
    pub class_id: u32,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            input_width: 640,
            input_height: 384,
            alpha: 0.05,
            threshold: 25.0,
            merge_radius: 1,
            min_area: 2,
            max_area: 4096,
            score_ref: 64.0,
            class_id: 0,
        }
    }
}

/// Recursive background estimate at working resolution, plus the grey
/// planes of the frames still inside the current window.
#[derive(Debug, Clone, Default)]
pub struct AccumulatorState {
    /// Running background, grey levels (empty until the first window).
    pub accum: Vec<f32>,
    pub width: usize,
    pub height: usize,
    /// Index of the last frame folded into `accum`.
    pub last_folded: Option<u32>,
    planes: VecDeque<(u32, Plane)>,
}

impl AccumulatorState {
    pub fn new() -> Self {
        Self::default()
    }

    fn plane_for(&mut self, f: &FrameRecord, cfg: &CoarseConfig) -> Plane {
        if let Some((_, p)) = self.planes.iter().find(|(i, _)| *i == f.index) {
            return p.clone();
        }
        let p = Plane::luma(&f.image).resize(cfg.input_width, cfg.input_height);
        self.planes.push_back((f.index, p.clone()));
        p
    }
}

/// Classical stand-in for the windowed coarse detector.
///
/// The background is a recursive blend `accum <- alpha * x + (1 - alpha) *
/// accum` of every frame that has left the window, seeded with the per-pixel
/// median of the first window. The middle frame's absolute difference from
/// it is thresholded, and each connected component becomes a candidate
/// scored by its mean difference.
pub fn reference_coarse_detect(
    window: &[FrameRecord],
    state: &mut AccumulatorState,
    cfg: &CoarseConfig,
) -> Result<Vec<Detection>> {
    check_window(window.len())?;
    let (fw, fh) = window[0].image.dimensions();
    let (w, h) = (cfg.input_width, cfg.input_height);
    if state.width != w || state.height != h {
        *state = AccumulatorState::new();
        state.width = w;
        state.height = h;
    }

    let planes: Vec<Plane> = window.iter().map(|f| state.plane_for(f, cfg)).collect();
    let start = window[0].index;

    if state.accum.is_empty() {
        let mut column = vec![0.0f32; planes.len()];
        state.accum = (0..w * h)
            .map(|i| {
                for (c, p) in column.iter_mut().zip(&planes) {
                    *c = p.data[i];
                }
                median_in_place(&mut column)
            })
            .collect();
        state.last_folded = window.last().map(|f| f.index);
    }

    // fold frames that have left the window, oldest first
    let alpha = cfg.alpha;
    while let Some((idx, _)) = state.planes.front() {
        if *idx >= start {
            break;
        }
        let (idx, p) = state.planes.pop_front().unwrap();
        if state.last_folded.map_or(true, |l| idx > l) {
            for (a, x) in state.accum.iter_mut().zip(&p.data) {
                *a += alpha * (x - *a);
            }
            state.last_folded = Some(idx);
        }
    }

    let mid = &window[(window.len() - 1) / 2];
    let mid_plane = &planes[(window.len() - 1) / 2];
    let fg: Vec<f32> = mid_plane
        .data
        .iter()
        .zip(&state.accum)
        .map(|(x, b)| (x - b).abs())
        .collect();
    let mask = BinaryMask {
        width: w,
        height: h,
        data: fg.iter().map(|&v| v >= cfg.threshold).collect(),
    };
    let (labels, comps) = grouped_components(&mask, cfg.merge_radius);
    let means = component_means(&labels, &comps, &fg);

    let sx = fw as f64 / w as f64;
    let sy = fh as f64 / h as f64;
    Ok(comps
        .iter()
        .zip(means)
        .filter(|(c, _)| c.area >= cfg.min_area && c.area <= cfg.max_area)
        .map(|(c, mean)| {
            let r = c.rect;
            let bbox = BBox::new(
                r.x0 as f64 * sx,
                r.y0 as f64 * sy,
                r.x1 as f64 * sx,
                r.y1 as f64 * sy,
            );
            let score = (mean / cfg.score_ref).clamp(0.0, 1.0) as f64;
            Detection::new(bbox, cfg.class_id, score, mid.index)
        })
        .collect())
}

/// Stateful wrapper around [`reference_coarse_detect`] for one stream.
#[derive(Debug, Clone, Default)]
pub struct ReferenceCoarse {
    pub cfg: CoarseConfig,
    state: AccumulatorState,
}

impl ReferenceCoarse {
    pub fn new(cfg: CoarseConfig) -> Self {
        Self {
            cfg,
            state: AccumulatorState::new(),
        }
    }

    pub fn state(&self) -> &AccumulatorState {
        &self.state
    }
}

impl CoarseDetector for ReferenceCoarse {
    fn detect(&mut self, window: &[FrameRecord]) -> Result<Vec<Detection>> {
        reference_coarse_detect(window, &mut self.state, &self.cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineConfig {
    /// Width of the context band, as a fraction of each tensor side, whose
    /// median sets the middle frame's background level.
    pub border_frac: f32,
    /// Segmentation threshold relative to the strongest response.
    pub peak_frac: f32,
    /// Absolute floor of the segmentation threshold, grey levels.
    pub min_contrast: f32,
    /// Smallest accepted component, tensor pixels.
    pub min_area: usize,
    /// Components smaller than this fraction of the largest one are dropped.
    pub min_area_frac: f32,
    /// Mean contrast that saturates the contrast term of the score.
    pub contrast_ref: f32,
    /// Quantile of the temporal standard deviation, taken around each
    /// component, that measures its motion.
    pub motion_quantile: f32,
    /// Motion level that saturates the motion term of the score.
    pub motion_ref: f32,
    pub class_id: u32,
}

impl Default for FineConfig {
    fn default() -> Self {
        Self {
            border_frac: 0.2,
            peak_frac: 0.5,
            min_contrast: 20.0,
            min_area: 12,
            min_area_frac: 0.2,
            contrast_ref: 48.0,
            motion_quantile: 0.95,
            motion_ref: 12.0,
            class_id: 0,
        }
    }
}

fn quantile_in_place(values: &mut [f32], q: f32) -> f32 {
    let k = ((values.len() - 1) as f32 * q.clamp(0.0, 1.0)).round() as usize;
    *values.select_nth_unstable_by(k, f32::total_cmp).1
}

/// Classical stand-in for the fine detector.
///
/// The middle frame's luma is compared with the median level of the
/// tensor's outer band, and pixels that stand out are segmented. Each
/// component is scored by its mean contrast times a motion term: a high
/// quantile of the per-pixel temporal standard deviation over all `n` frames,
/// taken in a margin around the component. Static structure scores low.
pub fn reference_fine_detect(tensor: &CubeTensor, cfg: &FineConfig) -> Result<Vec<FineBox>> {
    let n = tensor.channels.saturating_sub(2);
    let len = tensor.width * tensor.height;
    if n < 3 || n % 2 == 0 || tensor.data.len() != tensor.channels * len || tensor.middle_channel != (n - 1) / 2 {
        return Err(Error::ChannelCount {
            expected: if n % 2 == 1 && n >= 3 { n + 2 } else { (n | 1).max(3) + 2 },
            got: tensor.channels,
        });
    }
    let mid = tensor.middle_channel;

    // one luma plane per frame; the middle one rebuilt from its colours
    let mid_luma: Vec<f32> = (0..len)
        .map(|i| {
            LUMA[0] * tensor.channel(mid)[i]
                + LUMA[1] * tensor.channel(mid + 1)[i]
                + LUMA[2] * tensor.channel(mid + 2)[i]
        })
        .collect();
    let others: Vec<&[f32]> = (0..n)
        .filter(|&k| k != mid)
        .map(|k| tensor.channel(if k < mid { k } else { k + 2 }))
        .collect();

    let temporal_std: Vec<f32> = (0..len)
        .map(|i| {
            let m = mid_luma[i];
            let mean = (others.iter().map(|o| o[i]).sum::<f32>() + m) / n as f32;
            let var = (others.iter().map(|o| (o[i] - mean) * (o[i] - mean)).sum::<f32>()
                + (m - mean) * (m - mean))
                / n as f32;
            var.sqrt()
        })
        .collect();

    let (w, h) = (tensor.width, tensor.height);
    let bw = ((w as f32 * cfg.border_frac).ceil() as usize).clamp(1, w.div_ceil(2));
    let bh = ((h as f32 * cfg.border_frac).ceil() as usize).clamp(1, h.div_ceil(2));
    let mut band: Vec<f32> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x < bw || x >= w - bw || y < bh || y >= h - bh {
                band.push(mid_luma[y * w + x]);
            }
        }
    }
    let level = median_in_place(&mut band);

    let fg: Vec<f32> = mid_luma.iter().map(|m| (m - level).abs()).collect();
    let peak = fg.iter().copied().fold(0.0f32, f32::max);
    let threshold = cfg.min_contrast.max(cfg.peak_frac * peak);
    let mask = BinaryMask {
        width: w,
        height: h,
        data: fg.iter().map(|&v| v >= threshold).collect(),
    };
    let (labels, comps) = label_components(&mask);
    let contrast = component_means(&labels, &comps, &fg);
    let largest = comps.iter().map(|c| c.area).max().unwrap_or(0);
    let min_area = cfg.min_area.max((largest as f32 * cfg.min_area_frac).ceil() as usize);

    let mut out: Vec<FineBox> = comps
        .iter()
        .zip(&contrast)
        .filter(|(c, _)| c.area >= min_area)
        .map(|(c, &ct)| {
            let r = c.rect;
            let (mx, my) = (r.width().div_ceil(4).max(1), r.height().div_ceil(4).max(1));
            let (x0, y0) = (r.x0.saturating_sub(mx) as usize, r.y0.saturating_sub(my) as usize);
            let (x1, y1) = (((r.x1 + mx) as usize).min(w), ((r.y1 + my) as usize).min(h));
            let mut around: Vec<f32> = (y0..y1)
                .flat_map(|y| temporal_std[y * w + x0..y * w + x1].iter().copied())
                .collect();
            let mo = quantile_in_place(&mut around, cfg.motion_quantile);
            let ct = (ct / cfg.contrast_ref).clamp(0.0, 1.0);
            let mo = (mo / cfg.motion_ref).clamp(0.0, 1.0);
            FineBox {
                class_id: cfg.class_id,
                score: (ct * mo) as f64,
                bbox: r.to_bbox(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.bbox.lex_cmp(&b.bbox)));
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceFine {
    pub cfg: FineConfig,
}

impl ReferenceFine {
    pub fn new(cfg: FineConfig) -> Self {
        Self { cfg }
    }
}

impl FineDetector for ReferenceFine {
    fn detect(&self, tensor: &CubeTensor, _ctx: &CubeContext) -> Result<Vec<FineBox>> {
        reference_fine_detect(tensor, &self.cfg)
    }
}

/// Accepts every cube and returns the track's own box with score 1. Turns
/// the pipeline into a coarse-plus-tracking baseline for ablations.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughFine;

impl FineDetector for PassThroughFine {
    fn detect(&self, tensor: &CubeTensor, ctx: &CubeContext) -> Result<Vec<FineBox>> {
        let e = tensor.extent();
        Ok(vec![FineBox {
            class_id: 0,
            score: 1.0,
            bbox: ctx.track_box.clip(e.x_max, e.y_max),
        }])
    }
}

/// Lookup key into an external detections file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExternalKey {
    Frame(u32),
    Cube(String),
}

/// Detections loaded from a JSON Lines file. Records carrying a `cube_id`
/// are fine-stage boxes in tensor coordinates; the rest are frame-level.
#[derive(Debug, Clone, Default)]
pub struct ExternalDetections {
    by_frame: BTreeMap<u32, Vec<Detection>>,
    by_cube: BTreeMap<String, Vec<Detection>>,
}

impl ExternalDetections {
    pub fn load(path: &Path) -> Result<Self> {
        let mut out = Self::default();
        for rec in read_detections(path)? {
            let det = rec.to_detection();
            match rec.cube_id {
                Some(id) => out.by_cube.entry(id).or_default().push(det),
                None => out.by_frame.entry(rec.frame).or_default().push(det),
            }
        }
        Ok(out)
    }

    pub fn get(&self, key: &ExternalKey) -> Vec<Detection> {
        match key {
            ExternalKey::Frame(f) => self.by_frame.get(f),
            ExternalKey::Cube(id) => self.by_cube.get(id),
        }
        .cloned()
        .unwrap_or_default()
    }
}

pub fn external_detections_load(path: &Path, key: &ExternalKey) -> Result<Vec<Detection>> {
    Ok(ExternalDetections::load(path)?.get(key))
}

/// Coarse detections read from a file, keyed by the window's middle frame.
#[derive(Debug, Clone)]
pub struct ExternalCoarse(pub ExternalDetections);

impl CoarseDetector for ExternalCoarse {
    fn detect(&mut self, window: &[FrameRecord]) -> Result<Vec<Detection>> {
        check_window(window.len())?;
        let mid = window[(window.len() - 1) / 2].index;
        Ok(self.0.get(&ExternalKey::Frame(mid)))
    }
}

/// Fine detections read from a file, keyed by cube id.
#[derive(Debug, Clone)]
pub struct ExternalFine(pub ExternalDetections);

impl FineDetector for ExternalFine {
    fn detect(&self, _tensor: &CubeTensor, ctx: &CubeContext) -> Result<Vec<FineBox>> {
        Ok(self
            .0
            .get(&ExternalKey::Cube(ctx.cube_id.clone()))
            .into_iter()
            .map(|d| FineBox {
                class_id: d.class_id,
                score: d.score,
                bbox: d.bbox,
            })
            .collect())
    }
}
