//! Motion range, motion amount and adaptive spatio-temporal cubes.
//!
//! A track's boxes over `n` consecutive frames are enclosed by one rectangle,
//! the motion range. Its area relative to the object's own box is the motion
//! amount `sigma_mov`, which is at least 1. When `sigma_mov` falls below the
//! hyperparameter `gamma` the range is grown about its centre until its area
//! is `gamma` times the object area, so slow objects keep some surrounding
//! context. All `n` frames are then cut at that one rectangle and stacked
//! into an `(n + 2)`-channel tensor: grey for every frame except the middle
//! one, which keeps its three colour planes.

use image::{imageops, GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_enclosing_rect, BBox};
use crate::raster::Plane;

/// Integer pixel rectangle, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn to_bbox(self) -> BBox {
        BBox::new(self.x0 as f64, self.y0 as f64, self.x1 as f64, self.y1 as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionRange {
    pub track_id: u64,
    pub window_frames: Vec<u32>,
    /// Enclosing rectangle of the track's boxes.
    pub raw_rect: BBox,
    /// Area of the middle-frame box, standing in for the object area.
    pub obj_area: f64,
    pub sigma_mov: f64,
    /// Range after the motion-amount adjustment, inside the frame.
    pub adapted_rect: BBox,
}

pub fn motion_range(track_boxes: &[BBox]) -> Result<BBox> {
    min_enclosing_rect(track_boxes)
}

/// `area(raw_rect) / area(obj_box)`.
pub fn motion_amount(raw_rect: &BBox, obj_box: &BBox) -> Result<f64> {
    let obj = obj_box.area();
    if !(obj > 0.0) {
        return Err(Error::DegenerateObject);
    }
    Ok(raw_rect.area() / obj)
}

/// Grow `raw_rect` so that its area reaches `gamma * area(obj_box)`.
///
/// The rectangle is returned as-is when its motion amount already reaches
/// `gamma`. Otherwise it is scaled about its centre with its aspect ratio
/// kept, then shifted (not shrunk) into `[0, frame_w] x [0, frame_h]`. An
/// axis longer than the frame is cut to the frame and the other axis takes
/// up the remaining area where it can.
pub fn adapt_mr(raw_rect: &BBox, obj_box: &BBox, gamma: f64, frame_w: u32, frame_h: u32) -> Result<BBox> {
    if !(gamma >= 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    let sigma = motion_amount(raw_rect, obj_box)?;
    if sigma >= gamma {
        return Ok(*raw_rect);
    }

    let target = gamma * obj_box.area();
    let (cx, cy) = raw_rect.center();
    let (mut w, mut h) = if raw_rect.area() > 0.0 {
        let k = (target / raw_rect.area()).sqrt();
        (raw_rect.width() * k, raw_rect.height() * k)
    } else {
        let k = (target / obj_box.area()).sqrt();
        (obj_box.width() * k, obj_box.height() * k)
    };

    let (fw, fh) = (frame_w as f64, frame_h as f64);
    if w > fw && h > fh {
        w = fw;
        h = fh;
    } else if w > fw {
        w = fw;
        h = (target / fw).min(fh);
    } else if h > fh {
        h = fh;
        w = (target / fh).min(fw);
    }

    let x0 = (cx - w / 2.0).clamp(0.0, fw - w);
    let y0 = (cy - h / 2.0).clamp(0.0, fh - h);
    Ok(BBox::new(x0, y0, x0 + w, y0 + h))
}

/// Motion range and its adjustment for one track window.
///
/// `positions` are the track's boxes on `n` consecutive frames, oldest
/// first; the middle entry supplies the object area.
pub fn compute_motion_range(
    track_id: u64,
    positions: &[(u32, BBox)],
    gamma: f64,
    frame_w: u32,
    frame_h: u32,
) -> Result<MotionRange> {
    let boxes: Vec<BBox> = positions.iter().map(|p| p.1).collect();
    let raw_rect = motion_range(&boxes)?;
    let obj = boxes[(boxes.len() - 1) / 2];
    let sigma_mov = motion_amount(&raw_rect, &obj)?;
    let clipped = raw_rect.clip(frame_w as f64, frame_h as f64);
    let adapted_rect = adapt_mr(&clipped, &obj, gamma, frame_w, frame_h)?;
    Ok(MotionRange {
        track_id,
        window_frames: positions.iter().map(|p| p.0).collect(),
        raw_rect,
        obj_area: obj.area(),
        sigma_mov,
        adapted_rect,
    })
}

/// Floor the minima, ceil the maxima, clamp to the frame. The result is at
/// least one pixel wide and high.
pub fn rasterize_rect(r: &BBox, frame_w: u32, frame_h: u32) -> Result<PixelRect> {
    let (fw, fh) = (frame_w as f64, frame_h as f64);
    let inside = r.x_max > 0.0 && r.y_max > 0.0 && r.x_min < fw && r.y_min < fh;
    if frame_w == 0 || frame_h == 0 || !r.is_valid() || !inside {
        return Err(Error::EmptyCrop);
    }
    let x0 = r.x_min.floor().max(0.0) as u32;
    let y0 = r.y_min.floor().max(0.0) as u32;
    let x1 = (r.x_max.ceil().min(fw) as u32).max(x0 + 1);
    let y1 = (r.y_max.ceil().min(fh) as u32).max(y0 + 1);
    Ok(PixelRect::new(x0, y0, x1, y1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AStCube {
    pub track_id: u64,
    pub arect: PixelRect,
    pub patches: Vec<RgbImage>,
    /// 1-based position of the middle patch, `(n + 1) / 2`.
    pub middle_index: usize,
}

impl AStCube {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn middle_patch(&self) -> &RgbImage {
        &self.patches[self.middle_index - 1]
    }
}

/// Cut every frame at `arect`.
pub fn extract_cube(frames: &[&RgbImage], arect: PixelRect, track_id: u64) -> Result<AStCube> {
    let first = frames.first().ok_or(Error::NoFrames(Default::default()))?;
    let (w, h) = first.dimensions();
    for f in frames {
        if f.dimensions() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected_w: w,
                expected_h: h,
                got_w: f.width(),
                got_h: f.height(),
            });
        }
    }
    if arect.x1 > w || arect.y1 > h || arect.width() == 0 || arect.height() == 0 {
        return Err(Error::EmptyCrop);
    }
    let patches = frames
        .iter()
        .map(|f| imageops::crop_imm(*f, arect.x0, arect.y0, arect.width(), arect.height()).to_image())
        .collect();
    Ok(AStCube {
        track_id,
        arect,
        patches,
        middle_index: (frames.len() + 1) / 2,
    })
}

/// BT.601 luma, rounded to the nearest level.
pub fn grayscale(patch: &RgbImage) -> GrayImage {
    GrayImage::from_fn(patch.width(), patch.height(), |x, y| {
        let p = patch.get_pixel(x, y);
        let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
        Luma([y.round().clamp(0.0, 255.0) as u8])
    })
}

/// Channel-major stack of resized cube patches.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeTensor {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `channels * height * width` values in `[0, 255]`.
    pub data: Vec<f32>,
    /// Source pixels per tensor pixel.
    pub scale_x: f64,
    pub scale_y: f64,
    /// Top-left corner of the cube rectangle in the frame.
    pub origin_x: f64,
    pub origin_y: f64,
    /// Channel offset of the middle frame's red plane.
    pub middle_channel: usize,
}

impl CubeTensor {
    pub fn frames(&self) -> usize {
        self.channels - 2
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let len = self.width * self.height;
        &self.data[c * len..(c + 1) * len]
    }

    /// Tensor extent as a box.
    pub fn extent(&self) -> BBox {
        BBox::new(0.0, 0.0, self.width as f64, self.height as f64)
    }
}

/// Resize every patch to `target_w x target_h` and stack them in frame
/// order: grey planes, then the middle frame as R, G, B, then grey planes.
pub fn stack_channels(cube: &AStCube, target_w: usize, target_h: usize) -> CubeTensor {
    let mid = cube.middle_index - 1;
    let mut data = Vec::with_capacity((cube.len() + 2) * target_w * target_h);
    for (k, patch) in cube.patches.iter().enumerate() {
        let (pw, ph) = (patch.width() as usize, patch.height() as usize);
        if k == mid {
            for c in 0..3 {
                data.extend(Plane::channel(patch, c).resize(target_w, target_h).data);
            }
        } else {
            let gray: Vec<f32> = grayscale(patch).into_raw().into_iter().map(f32::from).collect();
            data.extend(Plane::new(pw, ph, gray).resize(target_w, target_h).data);
        }
    }
    CubeTensor {
        width: target_w,
        height: target_h,
        channels: cube.len() + 2,
        data,
        scale_x: cube.arect.width() as f64 / target_w as f64,
        scale_y: cube.arect.height() as f64 / target_h as f64,
        origin_x: cube.arect.x0 as f64,
        origin_y: cube.arect.y0 as f64,
        middle_channel: mid,
    }
}

/// Tensor coordinates to frame coordinates.
pub fn map_to_image(cube_box: &BBox, tensor: &CubeTensor) -> BBox {
    BBox::new(
        cube_box.x_min * tensor.scale_x + tensor.origin_x,
        cube_box.y_min * tensor.scale_y + tensor.origin_y,
        cube_box.x_max * tensor.scale_x + tensor.origin_x,
        cube_box.y_max * tensor.scale_y + tensor.origin_y,
    )
}

/// Frame coordinates to tensor coordinates; inverse of [`map_to_image`].
pub fn map_to_tensor(image_box: &BBox, tensor: &CubeTensor) -> BBox {
    BBox::new(
        (image_box.x_min - tensor.origin_x) / tensor.scale_x,
        (image_box.y_min - tensor.origin_y) / tensor.scale_y,
        (image_box.x_max - tensor.origin_x) / tensor.scale_x,
        (image_box.y_max - tensor.origin_y) / tensor.scale_y,
    )
}
