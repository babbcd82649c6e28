//! Float image planes and bilinear resampling shared by the detectors and the
//! cube stacker.

use image::RgbImage;

/// BT.601 luma weights.
pub(crate) const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    /// Unrounded luma of an RGB image.
    pub fn luma(img: &RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| LUMA[0] * p[0] as f32 + LUMA[1] * p[1] as f32 + LUMA[2] * p[2] as f32)
            .collect();
        Self::new(img.width() as usize, img.height() as usize, data)
    }

    pub fn channel(img: &RgbImage, c: usize) -> Self {
        let data = img.pixels().map(|p| p[c] as f32).collect();
        Self::new(img.width() as usize, img.height() as usize, data)
    }

    pub fn resize(&self, width: usize, height: usize) -> Self {
        Self::new(
            width,
            height,
            resize_bilinear(&self.data, self.width, self.height, width, height),
        )
    }
}

/// Bilinear resampling with pixel centres at half-integers. Same-size
/// resampling is the identity.
pub(crate) fn resize_bilinear(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    let taps = |dst: usize, src_len: usize| -> Vec<(usize, usize, f32)> {
        let scale = src_len as f64 / dst as f64;
        (0..dst)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(dw, sw);
    let ys = taps(dh, sh);
    let mut out = Vec::with_capacity(dw * dh);
    for &(y0, y1, fy) in &ys {
        let r0 = &src[y0 * sw..(y0 + 1) * sw];
        let r1 = &src[y1 * sw..(y1 + 1) * sw];
        for &(x0, x1, fx) in &xs {
            let top = if fx == 0.0 { r0[x0] } else { r0[x0] + (r0[x1] - r0[x0]) * fx };
            let bot = if fx == 0.0 { r1[x0] } else { r1[x0] + (r1[x1] - r1[x0]) * fx };
            out.push(if fy == 0.0 { top } else { top + (bot - top) * fy });
        }
    }
    out
}
