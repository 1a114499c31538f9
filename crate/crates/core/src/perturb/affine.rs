//! Affine augmentation with matching warps for images and probability maps.
//!
//! Pixel coordinates are `(y, x)` with the origin at the top-left pixel
//! centre. Scaling, rotation and flipping act about the image centre.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams {
    pub scale: f64,
    /// Counter-clockwise, radians.
    pub rotation: f64,
    pub flip_h: bool,
    pub translate_y: f64,
    pub translate_x: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            flip_h: false,
            translate_y: 0.0,
            translate_x: 0.0,
        }
    }

    pub fn flip() -> Self {
        Self {
            flip_h: true,
            ..Self::identity()
        }
    }

    /// Forward map (source pixel to destination pixel) for an `h x w` image:
    /// flip, then scale, then rotate about the centre, then translate.
    pub fn to_map(&self, h: usize, w: usize) -> Result<AffineMap> {
        if self.scale <= 0.0 || !self.scale.is_finite() {
            return Err(Error::invalid(format!(
                "degenerate affine scale {}",
                self.scale
            )));
        }
        let (s, c) = self.rotation.sin_cos();
        let f = if self.flip_h { -1.0 } else { 1.0 };
        // rows act on (y, x)
        let a = [
            [self.scale * c, -self.scale * s * f],
            [self.scale * s, self.scale * c * f],
        ];
        let centre = [(h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0];
        let ac = [
            a[0][0] * centre[0] + a[0][1] * centre[1],
            a[1][0] * centre[0] + a[1][1] * centre[1],
        ];
        let t = [
            centre[0] - ac[0] + self.translate_y,
            centre[1] - ac[1] + self.translate_x,
        ];
        Ok(AffineMap { a, t })
    }
}

/// Ranges sampled by [`sample_affine`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineRanges {
    pub scale: (f64, f64),
    /// Rotation drawn uniformly from `[-max_rotation, max_rotation]`.
    pub max_rotation: f64,
    pub flip_probability: f64,
    /// Translation drawn uniformly from `[-max_translate, max_translate]` pixels.
    pub max_translate: f64,
}

impl Default for AffineRanges {
    fn default() -> Self {
        Self {
            scale: (0.9, 1.1),
            max_rotation: 15f64.to_radians(),
            flip_probability: 0.5,
            max_translate: 4.0,
        }
    }
}

pub fn sample_affine(ranges: &AffineRanges, rng: &mut SeedStream) -> AffineParams {
    let uniform = |rng: &mut SeedStream, lo: f64, hi: f64| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    AffineParams {
        scale: uniform(rng, ranges.scale.0, ranges.scale.1),
        rotation: uniform(rng, -ranges.max_rotation, ranges.max_rotation),
        flip_h: rng.random_bool(ranges.flip_probability.clamp(0.0, 1.0)),
        translate_y: uniform(rng, -ranges.max_translate, ranges.max_translate),
        translate_x: uniform(rng, -ranges.max_translate, ranges.max_translate),
    }
}

/// `dst = a * src + t` on `(y, x)` pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub a: [[f64; 2]; 2],
    pub t: [f64; 2],
}

impl AffineMap {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * p[0] + self.a[0][1] * p[1] + self.t[0],
            self.a[1][0] * p[0] + self.a[1][1] * p[1] + self.t[1],
        ]
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let [[a, b], [c, d]] = self.a;
        let det = a * d - b * c;
        if det.abs() < 1e-12 || !det.is_finite() {
            return Err(Error::invalid("singular affine map"));
        }
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let t = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]),
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]),
        ];
        Ok(AffineMap { a: inv, t })
    }
}

/// How warped values are post-processed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarpKind {
    Image,
    /// Per-pixel class distributions along the channel axis: clamped at 0
    /// and renormalized to sum to 1 on valid pixels.
    ProbMap,
}

/// Warps `[C, H, W]` or `[N, C, H, W]` by `p`. See [`warp_map`].
pub fn warp(t: &Tensor, p: &AffineParams, kind: WarpKind) -> Result<(Tensor, Tensor)> {
    let (h, w) = spatial(t)?;
    warp_map(t, &p.to_map(h, w)?, kind)
}

fn spatial(t: &Tensor) -> Result<(usize, usize)> {
    match t.ndim() {
        3 | 4 => Ok((t.shape()[t.ndim() - 2], t.shape()[t.ndim() - 1])),
        _ => Err(Error::shape(format!(
            "warp expects [C, H, W] or [N, C, H, W], got {:?}",
            t.shape()
        ))),
    }
}

/// Bilinear warp under the forward map `map`. Returns the warped tensor and
/// an `[H, W]` mask that is 0 where the source location falls outside the
/// input (those output pixels are 0) and 1 elsewhere.
pub fn warp_map(t: &Tensor, map: &AffineMap, kind: WarpKind) -> Result<(Tensor, Tensor)> {
    let (h, w) = spatial(t)?;
    let inv = map.inverse()?;
    let planes = t.len() / (h * w);
    let channels = t.shape()[t.ndim() - 3];
    let mut out = vec![0.0; t.len()];
    let mut valid = vec![0.0; h * w];
    const SLACK: f64 = 1e-9;
    for i in 0..h {
        for j in 0..w {
            let [sy, sx] = inv.apply([i as f64, j as f64]);
            if sy < -SLACK
                || sx < -SLACK
                || sy > (h - 1) as f64 + SLACK
                || sx > (w - 1) as f64 + SLACK
            {
                continue;
            }
            valid[i * w + j] = 1.0;
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for p in 0..planes {
                let src = &t.data()[p * h * w..(p + 1) * h * w];
                let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
                let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
                out[p * h * w + i * w + j] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    if kind == WarpKind::ProbMap {
        let items = planes / channels;
        for n in 0..items {
            for px in 0..h * w {
                if valid[px] == 0.0 {
                    continue;
                }
                let at = |c: usize| (n * channels + c) * h * w + px;
                let mut s = 0.0;
                for c in 0..channels {
                    let v = out[at(c)].max(0.0);
                    out[at(c)] = v;
                    s += v;
                }
                if s > 0.0 {
                    for c in 0..channels {
                        out[at(c)] /= s;
                    }
                } else {
                    for c in 0..channels {
                        out[at(c)] = 1.0 / channels as f64;
                    }
                }
            }
        }
    }
    Ok((Tensor::new(t.shape(), out)?, Tensor::new(&[h, w], valid)?))
}
