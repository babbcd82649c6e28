//! Frame directories and JSON Lines detection files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection};
use crate::motion_cube::{AStCube, CubeTensor, MotionRange};
use crate::pipeline::{FinalDetection, FrameRecord};

/// One line of a detection or ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cube_id: Option<String>,
    pub class: u32,
    pub score: f64,
    pub bbox: [f64; 4],
}

impl DetectionRecord {
    pub fn to_detection(&self) -> Detection {
        Detection::new(BBox::from_array(self.bbox), self.class, self.score, self.frame)
    }

    pub fn from_detection(d: &Detection, track: Option<u64>) -> Self {
        Self {
            frame: d.frame_index,
            track,
            cube_id: None,
            class: d.class_id,
            score: d.score,
            bbox: d.bbox.to_array(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let [x1, y1, x2, y2] = self.bbox;
        if !self.bbox.iter().all(|v| v.is_finite()) {
            return Err("bbox has a non-finite coordinate".into());
        }
        if x1 > x2 || y1 > y2 {
            return Err(format!("bbox is not ordered: [{x1}, {y1}, {x2}, {y2}]"));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.frame == 0 {
            return Err("frame indices start at 1".into());
        }
        Ok(())
    }
}

impl From<&FinalDetection> for DetectionRecord {
    fn from(d: &FinalDetection) -> Self {
        Self {
            frame: d.frame_index,
            track: Some(d.track_id),
            cube_id: None,
            class: d.class_id,
            score: d.score,
            bbox: d.bbox.to_array(),
        }
    }
}

/// Read a JSON Lines detection file. Blank lines are skipped; any other
/// malformed line fails with its 1-based line number.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| Error::Record { line: i + 1, message })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_detections(records: &[DetectionRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_final_detections(dets: &[FinalDetection], path: &Path) -> Result<()> {
    let records: Vec<DetectionRecord> = dets.iter().map(DetectionRecord::from).collect();
    write_detections(&records, path)
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("ppm" | "png")
    )
}

/// A directory of numbered frames (`000001.ppm`, `000002.ppm`, ...).
/// Binary PPM is the primary format; PNG is also accepted.
#[derive(Debug, Clone)]
pub struct FrameSource {
    dir: PathBuf,
    files: Vec<PathBuf>,
    dims: Option<(u32, u32)>,
}

impl FrameSource {
    /// List the frames in `dir`. Numbering must start at 1 with no gaps.
    pub fn open(dir: &Path) -> Result<Self> {
        let mut numbered: Vec<(u32, PathBuf)> = Vec::new();
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if !p.is_file() || !is_frame_file(&p) {
                continue;
            }
            let Some(stem) = p.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            if let Ok(i) = stem.parse::<u32>() {
                numbered.push((i, p));
            }
        }
        if numbered.is_empty() {
            return Err(Error::NoFrames(dir.to_path_buf()));
        }
        numbered.sort();
        for (k, (i, _)) in numbered.iter().enumerate() {
            let expected = k as u32 + 1;
            if *i != expected {
                return Err(Error::MissingFrame(expected));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            files: numbered.into_iter().map(|(_, p)| p).collect(),
            dims: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Decode frame `index` (1-based). Every frame must match the
    /// dimensions of the first one decoded.
    pub fn load(&mut self, index: u32) -> Result<FrameRecord> {
        let path = self
            .files
            .get((index as usize).wrapping_sub(1))
            .ok_or(Error::MissingFrame(index))?;
        let image = image::open(path)?.into_rgb8();
        match self.dims {
            None => self.dims = Some(image.dimensions()),
            Some((w, h)) if (w, h) != image.dimensions() => {
                return Err(Error::DimensionMismatch {
                    expected_w: w,
                    expected_h: h,
                    got_w: image.width(),
                    got_h: image.height(),
                })
            }
            Some(_) => {}
        }
        Ok(FrameRecord { index, image })
    }

    /// Frames in index order.
    pub fn iter(&mut self) -> impl Iterator<Item = Result<FrameRecord>> + '_ {
        (1..=self.files.len() as u32).map(move |i| self.load(i))
    }
}

/// Load every frame in `dir`, in index order.
pub fn load_frames(dir: &Path) -> Result<Vec<FrameRecord>> {
    FrameSource::open(dir)?.iter().collect()
}

pub fn frame_file_name(index: u32) -> String {
    format!("{index:06}.ppm")
}

/// Write a binary (P6) pixmap.
pub fn write_ppm(img: &RgbImage, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    PnmEncoder::new(&mut w)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)?;
    w.flush()?;
    Ok(())
}

/// Outline `b` on `img` with a `thickness`-pixel frame, clipped to the image.
pub fn draw_box(img: &mut RgbImage, b: &BBox, color: [u8; 3], thickness: u32) {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return;
    }
    let c = b.clip(w as f64, h as f64);
    if c.width() <= 0.0 && c.height() <= 0.0 {
        return;
    }
    let x0 = c.x_min.floor() as i64;
    let y0 = c.y_min.floor() as i64;
    let x1 = (c.x_max.ceil() as i64 - 1).max(x0);
    let y1 = (c.y_max.ceil() as i64 - 1).max(y0);
    let t = thickness.max(1) as i64;
    let mut put = |x: i64, y: i64| {
        if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    };
    for k in 0..t {
        for x in x0..=x1 {
            put(x, y0 + k);
            put(x, y1 - k);
        }
        for y in y0..=y1 {
            put(x0 + k, y);
            put(x1 - k, y);
        }
    }
}

#[derive(Serialize)]
struct CubeMeta<'a> {
    frame: u32,
    track: u64,
    arect: [u32; 4],
    motion_range: &'a MotionRange,
    tensor_width: usize,
    tensor_height: usize,
    channels: usize,
    middle_channel: usize,
}

/// Dump one cube for inspection: its patches as PNGs, every tensor channel
/// as a grey PNG and a `meta.json` describing the motion range.
pub fn write_cube(
    dir: &Path,
    frame: u32,
    cube: &AStCube,
    tensor: &CubeTensor,
    mr: &MotionRange,
) -> Result<PathBuf> {
    let out = dir.join(format!("f{frame:06}_t{}", cube.track_id));
    fs::create_dir_all(&out)?;
    for (k, p) in cube.patches.iter().enumerate() {
        p.save(out.join(format!("patch_{}.png", k + 1)))?;
    }
    for c in 0..tensor.channels {
        let data: Vec<u8> = tensor
            .channel(c)
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::GrayImage::from_raw(tensor.width as u32, tensor.height as u32, data)
            .expect("channel length matches tensor size")
            .save(out.join(format!("channel_{c}.png")))?;
    }
    let a = cube.arect;
    let meta = CubeMeta {
        frame,
        track: cube.track_id,
        arect: [a.x0, a.y0, a.x1, a.y1],
        motion_range: mr,
        tensor_width: tensor.width,
        tensor_height: tensor.height,
        channels: tensor.channels,
        middle_channel: tensor.middle_channel,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(std::io::Error::from)?;
    fs::write(out.join("meta.json"), json + "\n")?;
    Ok(out)
}
