//! Seeded synthetic scenes: small, possibly slow and motion-blurred movers
//! over a textured, noisy background, with exact per-frame boxes.
//!
//! Movers are anti-aliased ellipses darker than the background. They follow
//! a straight course perturbed by a bounded random walk on heading and speed
//! and bounce off the frame edges, so every mover is visible in every frame.
//! With blur enabled each frame averages five copies of the mover spread
//! along the half-frame of motion that precedes it, leaving a short trail;
//! the truth box covers the trail.

use std::fs;
use std::path::Path;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::GroundTruth;
use crate::geometry::BBox;
use crate::io::{frame_file_name, write_detections, write_ppm, DetectionRecord};
use crate::pipeline::FrameRecord;

/// Sub-positions averaged per blurred frame.
pub const BLUR_STEPS: usize = 5;
/// Fraction of the inter-frame displacement covered by the exposure.
const EXPOSURE: f64 = 0.5;
/// Supersampling grid per pixel edge for anti-aliasing.
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MoverProfile {
    pub count: usize,
    /// Object width and height bounds, pixels.
    pub size_min: f64,
    pub size_max: f64,
    /// Speed bounds, pixels per frame.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Cap speed at this multiple of the object's smaller side, so that
    /// consecutive boxes of one object keep overlapping.
    pub speed_per_size_max: Option<f64>,
    pub blur: bool,
    /// How much darker than the background the object is, grey levels.
    pub contrast: f64,
}

impl Default for MoverProfile {
    fn default() -> Self {
        Self {
            count: 3,
            size_min: 8.0,
            size_max: 20.0,
            speed_min: 2.0,
            speed_max: 6.0,
            speed_per_size_max: Some(0.35),
            blur: true,
            contrast: 90.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    /// Mean grey level.
    pub level: f64,
    /// Peak deviation of the static value-noise texture.
    pub texture_amplitude: f64,
    /// Texture lattice spacing, pixels.
    pub texture_scale: f64,
    /// Per-frame, per-pixel Gaussian noise.
    pub noise_sigma: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            level: 150.0,
            texture_amplitude: 12.0,
            texture_scale: 64.0,
            noise_sigma: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Easy,
    Slow,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Preset::Easy),
            "slow" => Ok(Preset::Slow),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset {other:?} (expected easy or slow)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub seed: u64,
    pub profiles: Vec<MoverProfile>,
    /// Static blobs that look like movers but never move.
    pub distractors: usize,
    pub background: BackgroundConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::preset(Preset::Easy, 0)
    }
}

impl SynthConfig {
    /// `easy`: high-contrast movers of 8 to 20 px at 2 to 6 px per frame.
    /// `slow`: movers of the same size at 0.2 to 0.8 px per frame, with
    /// lower contrast.
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let profile = match preset {
            Preset::Easy => MoverProfile::default(),
            Preset::Slow => MoverProfile {
                speed_min: 0.2,
                speed_max: 0.8,
                speed_per_size_max: None,
                contrast: 50.0,
                ..MoverProfile::default()
            },
        };
        Self {
            width: 1280,
            height: 720,
            frame_count: 200,
            seed,
            profiles: vec![profile],
            distractors: 2,
            background: BackgroundConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width < 16 || self.height < 16 {
            return bad(format!("frame size {}x{} is below 16x16", self.width, self.height));
        }
        if self.frame_count < 3 {
            return bad(format!("frame_count {} is below 3", self.frame_count));
        }
        let limit = self.width.min(self.height) as f64 / 2.0;
        for (i, p) in self.profiles.iter().enumerate() {
            if !(p.size_min >= 2.0 && p.size_min <= p.size_max && p.size_max < limit) {
                return bad(format!(
                    "profile {i}: sizes must satisfy 2 <= size_min <= size_max < {limit}"
                ));
            }
            if !(p.speed_min >= 0.0 && p.speed_min <= p.speed_max && p.speed_max.is_finite()) {
                return bad(format!("profile {i}: speeds must satisfy 0 <= speed_min <= speed_max"));
            }
            if !(p.contrast > 0.0 && p.contrast <= 255.0) {
                return bad(format!("profile {i}: contrast must lie in (0, 255]"));
            }
            if matches!(p.speed_per_size_max, Some(k) if !(k > 0.0)) {
                return bad(format!("profile {i}: speed_per_size_max must be positive"));
            }
        }
        let bg = &self.background;
        if !(bg.noise_sigma >= 0.0 && bg.texture_amplitude >= 0.0 && bg.texture_scale >= 1.0) {
            return bad("background noise, amplitude and scale must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ellipse {
    cx: f64,
    cy: f64,
    /// Semi-axes.
    a: f64,
    b: f64,
}

impl Ellipse {
    fn bbox(&self) -> BBox {
        BBox::new(self.cx - self.a, self.cy - self.b, self.cx + self.a, self.cy + self.b)
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.a;
        let dy = (y - self.cy) / self.b;
        dx * dx + dy * dy <= 1.0
    }
}

/// One object on one frame: the copies averaged into its footprint.
#[derive(Debug, Clone, PartialEq)]
struct Footprint {
    copies: Vec<Ellipse>,
    level: f64,
}

impl Footprint {
    fn bbox(&self) -> BBox {
        self.copies
            .iter()
            .map(Ellipse::bbox)
            .reduce(|a, b| a.union(&b))
            .expect("footprint has at least one copy")
    }
}

/// Truth for one mover on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoverTruth {
    pub track_id: u64,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub width: u32,
    pub height: u32,
    pub frames: Vec<FrameRecord>,
    /// Frame-major, then by mover id.
    pub truth: Vec<MoverTruth>,
}

impl SynthScene {
    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        self.truth.iter().map(|t| t.truth).collect()
    }
}

/// Renders a scene frame by frame without holding every frame in memory.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    cfg: SynthConfig,
    texture: Vec<f32>,
    /// `movers[frame - 1]`.
    movers: Vec<Vec<(u64, Footprint)>>,
    distractors: Vec<Footprint>,
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(w: u32, h: u32, scale: f64, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let gw = (w as f64 / scale).ceil() as usize + 2;
    let gh = (h as f64 / scale).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let fy = y as f64 / scale;
        let (iy, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
        for x in 0..w {
            let fx = x as f64 / scale;
            let (ix, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * tx;
            let bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * tx;
            out.push((amplitude * (top + (bot - top) * ty)) as f32);
        }
    }
    out
}

/// Mirror `c` into `[lo, hi]`; returns the new value and whether it bounced.
fn reflect(c: f64, lo: f64, hi: f64) -> (f64, bool) {
    if hi <= lo {
        return ((lo + hi) / 2.0, false);
    }
    if c < lo {
        ((2.0 * lo - c).min(hi), true)
    } else if c > hi {
        ((2.0 * hi - c).max(lo), true)
    } else {
        (c, false)
    }
}

impl SceneRenderer {
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (fw, fh) = (cfg.width as f64, cfg.height as f64);
        let bg = &cfg.background;
        let texture = value_noise(cfg.width, cfg.height, bg.texture_scale, bg.texture_amplitude, &mut rng);

        let frames = cfg.frame_count as usize;
        let mut movers: Vec<Vec<(u64, Footprint)>> = vec![Vec::new(); frames];
        let mut next_id = 1u64;
        for p in &cfg.profiles {
            for _ in 0..p.count {
                let id = next_id;
                next_id += 1;
                let w = rng.gen_range(p.size_min..=p.size_max);
                let h = (w * rng.gen_range(0.7..=1.3)).clamp(p.size_min, p.size_max);
                let (a, b) = (w / 2.0, h / 2.0);
                let vmax = match p.speed_per_size_max {
                    Some(k) => p.speed_max.min(k * w.min(h)).max(p.speed_min),
                    None => p.speed_max,
                };
                let mut speed = rng.gen_range(p.speed_min..=vmax);
                let mut heading = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut cx = rng.gen_range(a + 0.1 * fw..fw * 0.9 - a);
                let mut cy = rng.gen_range(b + 0.1 * fh..fh * 0.9 - b);
                let level = (bg.level - p.contrast).max(0.0);
                let walk = (vmax - p.speed_min) * 0.05;

                for slot in movers.iter_mut() {
                    let (vx, vy) = (speed * heading.cos(), speed * heading.sin());
                    let copies = if p.blur {
                        (0..BLUR_STEPS)
                            .map(|k| {
                                let back = EXPOSURE * k as f64 / (BLUR_STEPS - 1) as f64;
                                Ellipse {
                                    cx: cx - vx * back,
                                    cy: cy - vy * back,
                                    a,
                                    b,
                                }
                            })
                            .collect()
                    } else {
                        vec![Ellipse { cx, cy, a, b }]
                    };
                    slot.push((id, Footprint { copies, level }));

                    heading += rng.gen_range(-0.05..=0.05);
                    if walk > 0.0 {
                        speed = (speed + rng.gen_range(-walk..=walk)).clamp(p.speed_min, vmax);
                    }
                    let (vx, vy) = (speed * heading.cos(), speed * heading.sin());
                    // keep the whole trail inside the frame
                    let mx = a + EXPOSURE * vmax + 1.0;
                    let my = b + EXPOSURE * vmax + 1.0;
                    let (nx, bx) = reflect(cx + vx, mx, fw - mx);
                    let (ny, by) = reflect(cy + vy, my, fh - my);
                    let (mut hx, mut hy) = (heading.cos(), heading.sin());
                    if bx {
                        hx = -hx;
                    }
                    if by {
                        hy = -hy;
                    }
                    heading = hy.atan2(hx);
                    cx = nx;
                    cy = ny;
                }
            }
        }

        let mut distractors = Vec::new();
        for _ in 0..cfg.distractors {
            let size = rng.gen_range(8.0..=20.0f64).min(fw.min(fh) / 4.0);
            let (a, b) = (size / 2.0, size * rng.gen_range(0.35..=0.65));
            distractors.push(Footprint {
                copies: vec![Ellipse {
                    cx: rng.gen_range(a..fw - a),
                    cy: rng.gen_range(b..fh - b),
                    a,
                    b,
                }],
                level: (bg.level - 80.0).max(0.0),
            });
        }

        Ok(Self {
            cfg: cfg.clone(),
            texture,
            movers,
            distractors,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    pub fn frame_count(&self) -> u32 {
        self.cfg.frame_count
    }

    /// Truth boxes on frame `index` (1-based), by mover id.
    pub fn truth(&self, index: u32) -> Vec<MoverTruth> {
        let (fw, fh) = (self.cfg.width as f64, self.cfg.height as f64);
        self.movers[index as usize - 1]
            .iter()
            .map(|(id, f)| MoverTruth {
                track_id: *id,
                truth: GroundTruth::new(index, 0, f.bbox().clip(fw, fh)),
            })
            .collect()
    }

    pub fn all_truth(&self) -> Vec<MoverTruth> {
        (1..=self.cfg.frame_count).flat_map(|i| self.truth(i)).collect()
    }

    fn grey(&self, index: u32, with_movers: bool, with_noise: bool) -> Vec<f32> {
        let (w, h) = (self.cfg.width as usize, self.cfg.height as usize);
        let base = self.cfg.background.level as f32;
        let mut grey: Vec<f32> = self.texture.iter().map(|t| base + t).collect();

        let mut paint = |f: &Footprint| {
            let bb = f.bbox().clip(w as f64, h as f64);
            let x0 = bb.x_min.floor() as usize;
            let y0 = bb.y_min.floor() as usize;
            let x1 = (bb.x_max.ceil() as usize).min(w);
            let y1 = (bb.y_max.ceil() as usize).min(h);
            let step = 1.0 / SUPERSAMPLE as f64;
            let samples = (SUPERSAMPLE * SUPERSAMPLE * f.copies.len()) as f32;
            for y in y0..y1 {
                for x in x0..x1 {
                    let mut hits = 0u32;
                    for sy in 0..SUPERSAMPLE {
                        let py = y as f64 + (sy as f64 + 0.5) * step;
                        for sx in 0..SUPERSAMPLE {
                            let px = x as f64 + (sx as f64 + 0.5) * step;
                            hits += f.copies.iter().filter(|e| e.inside(px, py)).count() as u32;
                        }
                    }
                    if hits > 0 {
                        let alpha = hits as f32 / samples;
                        let g = &mut grey[y * w + x];
                        *g += alpha * (f.level as f32 - *g);
                    }
                }
            }
        };
        for d in &self.distractors {
            paint(d);
        }
        if with_movers {
            for (_, f) in &self.movers[index as usize - 1] {
                paint(f);
            }
        }

        let sigma = self.cfg.background.noise_sigma;
        if with_noise && sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(index as u64);
            let normal = Normal::new(0.0f32, sigma as f32).expect("sigma is finite and non-negative");
            for g in grey.iter_mut() {
                *g += normal.sample(&mut rng);
            }
        }
        grey
    }

    fn to_rgb(&self, grey: &[f32]) -> RgbImage {
        let (w, h) = (self.cfg.width, self.cfg.height);
        let q = |v: f32| v.round().clamp(0.0, 255.0) as u8;
        let data = grey
            .iter()
            .flat_map(|&g| [q(g * 0.92), q(g * 0.98), q(g * 1.06)])
            .collect();
        RgbImage::from_raw(w, h, data).expect("buffer matches frame size")
    }

    /// Frame `index` (1-based).
    pub fn render(&self, index: u32) -> RgbImage {
        self.to_rgb(&self.grey(index, true, true))
    }

    /// Frame `index` without movers, with or without sensor noise.
    pub fn render_background(&self, index: u32, noise: bool) -> RgbImage {
        self.to_rgb(&self.grey(index, false, noise))
    }

    /// Frame `index` with movers but no sensor noise.
    pub fn render_clean(&self, index: u32) -> RgbImage {
        self.to_rgb(&self.grey(index, true, false))
    }

    pub fn frame(&self, index: u32) -> FrameRecord {
        FrameRecord {
            index,
            image: self.render(index),
        }
    }
}

/// Render a whole scene into memory.
pub fn generate(cfg: &SynthConfig) -> Result<SynthScene> {
    let r = SceneRenderer::new(cfg)?;
    Ok(SynthScene {
        width: cfg.width,
        height: cfg.height,
        frames: (1..=cfg.frame_count).map(|i| r.frame(i)).collect(),
        truth: r.all_truth(),
    })
}

fn truth_records(truth: &[MoverTruth]) -> Vec<DetectionRecord> {
    truth
        .iter()
        .map(|t| DetectionRecord {
            frame: t.truth.frame_index,
            track: Some(t.track_id),
            cube_id: None,
            class: t.truth.class_id,
            score: 1.0,
            bbox: t.truth.bbox.to_array(),
        })
        .collect()
}

/// Write `000001.ppm`, `000002.ppm`, ... and `truth.jsonl` into `dir`.
pub fn export_scene(scene: &SynthScene, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for f in &scene.frames {
        write_ppm(&f.image, &dir.join(frame_file_name(f.index)))?;
    }
    write_detections(&truth_records(&scene.truth), &dir.join("truth.jsonl"))
}

/// Same files as [`export_scene`], rendered one frame at a time.
pub fn export_streaming(cfg: &SynthConfig, dir: &Path) -> Result<()> {
    let r = SceneRenderer::new(cfg)?;
    fs::create_dir_all(dir)?;
    for i in 1..=cfg.frame_count {
        write_ppm(&r.render(i), &dir.join(frame_file_name(i)))?;
    }
    write_detections(&truth_records(&r.all_truth()), &dir.join("truth.jsonl"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion_cube::{motion_amount, motion_range};

    fn small(preset: Preset, seed: u64, frames: u32) -> SynthConfig {
        SynthConfig {
            width: 320,
            height: 240,
            frame_count: frames,
            ..SynthConfig::preset(preset, seed)
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = small(Preset::Easy, 7, 6);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.truth, b.truth);
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.image, y.image);
        }
        let c = generate(&small(Preset::Easy, 8, 6)).unwrap();
        assert_ne!(a.truth, c.truth);
    }

    #[test]
    fn truth_is_one_box_per_mover_per_frame() {
        let cfg = small(Preset::Easy, 1, 20);
        let r = SceneRenderer::new(&cfg).unwrap();
        let t = r.all_truth();
        assert_eq!(t.len(), 3 * 20);
        for mt in &t {
            let b = mt.truth.bbox;
            assert!(b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= 320.0 && b.y_max <= 240.0);
            assert!(b.area() > 0.0);
        }
    }

    #[test]
    fn truth_bounds_rendered_mover() {
        for preset in [Preset::Easy, Preset::Slow] {
            let mut cfg = small(preset, 3, 12);
            cfg.background.noise_sigma = 0.0;
            let r = SceneRenderer::new(&cfg).unwrap();
            for i in 1..=cfg.frame_count {
                let img = r.render(i);
                let bg = r.render_background(i, false);
                let mut changed: Vec<(u32, u32)> = Vec::new();
                for (x, y, p) in img.enumerate_pixels() {
                    if p != bg.get_pixel(x, y) {
                        changed.push((x, y));
                    }
                }
                let truth = r.truth(i);
                // every changed pixel lies inside some truth box grown by 1 px
                for &(x, y) in &changed {
                    assert!(truth.iter().any(|t| {
                        let b = t.truth.bbox;
                        x as f64 + 1.0 >= b.x_min - 1.0 && (x as f64) <= b.x_max + 1.0
                            && y as f64 + 1.0 >= b.y_min - 1.0 && (y as f64) <= b.y_max + 1.0
                    }));
                }
                // and each box is reached by the changed pixels within 1 px per side
                for t in &truth {
                    let b = t.truth.bbox;
                    let inside: Vec<&(u32, u32)> =
                        changed.iter().filter(|&&(x, y)| b.contains_point(x as f64 + 0.5, y as f64 + 0.5)).collect();
                    let x0 = inside.iter().map(|p| p.0).min().unwrap() as f64;
                    let x1 = inside.iter().map(|p| p.0).max().unwrap() as f64 + 1.0;
                    let y0 = inside.iter().map(|p| p.1).min().unwrap() as f64;
                    let y1 = inside.iter().map(|p| p.1).max().unwrap() as f64 + 1.0;
                    assert!((x0 - b.x_min).abs() <= 1.0 && (x1 - b.x_max).abs() <= 1.0, "{b:?} vs {x0} {x1}");
                    assert!((y0 - b.y_min).abs() <= 1.0 && (y1 - b.y_max).abs() <= 1.0, "{b:?} vs {y0} {y1}");
                }
            }
        }
    }

    #[test]
    fn slow_preset_stays_below_gamma() {
        let r = SceneRenderer::new(&SynthConfig::preset(Preset::Slow, 11)).unwrap();
        let per_frame: Vec<Vec<MoverTruth>> = (1..=r.frame_count()).map(|i| r.truth(i)).collect();
        for start in 0..per_frame.len() - 4 {
            for m in 0..3 {
                let boxes: Vec<BBox> = (0..5).map(|k| per_frame[start + k][m].truth.bbox).collect();
                let sigma = motion_amount(&motion_range(&boxes).unwrap(), &boxes[2]).unwrap();
                assert!(sigma < 4.0, "sigma {sigma}");
            }
        }
    }

    #[test]
    fn easy_preset_speeds_and_sizes() {
        let r = SceneRenderer::new(&SynthConfig::preset(Preset::Easy, 5)).unwrap();
        let t = r.all_truth();
        let small_boxes = t
            .iter()
            .filter(|m| m.truth.bbox.width() < 40.0 && m.truth.bbox.height() < 40.0)
            .count();
        assert!(small_boxes * 2 > t.len());
        for m in 1..=3u64 {
            let c: Vec<(f64, f64)> = t.iter().filter(|x| x.track_id == m).map(|x| x.truth.bbox.center()).collect();
            for w in c.windows(2) {
                let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
                assert!(d <= 6.0 + 1e-9, "step {d}");
            }
        }
    }

    #[test]
    fn constant_velocity_range_kinematics() {
        // a 10 px mover at 4 px/frame without blur spans 10 + 4 * 4 px over five frames
        let mut cfg = small(Preset::Easy, 2, 5);
        cfg.profiles = vec![MoverProfile {
            count: 1,
            size_min: 10.0,
            size_max: 10.0,
            speed_min: 4.0,
            speed_max: 4.0,
            speed_per_size_max: None,
            blur: false,
            contrast: 90.0,
        }];
        let r = SceneRenderer::new(&cfg).unwrap();
        let boxes: Vec<BBox> = (1..=5).map(|i| r.truth(i)[0].truth.bbox).collect();
        let raw = motion_range(&boxes).unwrap();
        let path: f64 = boxes
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0].center(), w[1].center());
                ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt()
            })
            .sum();
        assert!((path - 16.0).abs() < 1e-9);
        let (dx, dy) = (
            boxes[4].center().0 - boxes[0].center().0,
            boxes[4].center().1 - boxes[0].center().1,
        );
        assert!((raw.width() - (10.0 + dx.abs())).abs() < 1e-9);
        assert!(raw.height() >= boxes[0].height() + dy.abs() - 1e-9);
    }

    #[test]
    fn export_round_trip() {
        let cfg = small(Preset::Easy, 4, 4);
        let scene = generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_scene(&scene, dir.path()).unwrap();
        let names: Vec<String> = (1..=4).map(frame_file_name).collect();
        assert_eq!(names[0], "000001.ppm");
        let frames = crate::io::load_frames(dir.path()).unwrap();
        for (a, b) in frames.iter().zip(&scene.frames) {
            assert_eq!(a.index, b.index);
            assert_eq!(a.image, b.image);
        }
        let truth = crate::io::read_detections(&dir.path().join("truth.jsonl")).unwrap();
        assert_eq!(truth.len(), scene.truth.len());

        let dir2 = tempfile::tempdir().unwrap();
        export_streaming(&cfg, dir2.path()).unwrap();
        for n in names.iter().chain(std::iter::once(&"truth.jsonl".to_string())) {
            assert_eq!(fs::read(dir.path().join(n)).unwrap(), fs::read(dir2.path().join(n)).unwrap());
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.profiles[0].size_min = 1.0;
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
        assert!("fast".parse::<Preset>().is_err());
    }
}
