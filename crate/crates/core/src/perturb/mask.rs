//! Rectangular CutOut / CutMix masks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// Which value the rectangle's pixels take when materialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// CutOut: ones everywhere, zeros inside the rectangle.
    ZeroInside,
    /// CutMix: zeros everywhere, ones inside the rectangle.
    OneInside,
}

/// One axis-aligned rectangle lying entirely inside an `h x w` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RectMask {
    pub h: usize,
    pub w: usize,
    pub y0: usize,
    pub x0: usize,
    pub rh: usize,
    pub rw: usize,
    pub polarity: Polarity,
}

/// CutOut area fractions are drawn uniformly from this range.
pub const CUTOUT_AREA: (f64, f64) = (0.05, 0.4);
/// CutOut aspect ratio (`rh / rw`) is log-uniform over this range.
pub const CUTOUT_ASPECT: (f64, f64) = (1.0 / 3.0, 3.0);
/// CutMix aspect ratio (`rh / rw`) is log-uniform over this range.
pub const CUTMIX_ASPECT: (f64, f64) = (0.5, 2.0);

const MIN_EXTENT: usize = 4;

impl RectMask {
    pub fn new(
        h: usize,
        w: usize,
        y0: usize,
        x0: usize,
        rh: usize,
        rw: usize,
        polarity: Polarity,
    ) -> Result<Self> {
        if y0 + rh > h || x0 + rw > w {
            return Err(Error::invalid(format!(
                "rectangle {rh}x{rw} at ({y0}, {x0}) leaves the {h}x{w} image"
            )));
        }
        Ok(Self {
            h,
            w,
            y0,
            x0,
            rh,
            rw,
            polarity,
        })
    }

    pub fn area(&self) -> usize {
        self.rh * self.rw
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y0 + self.rh).contains(&y) && (self.x0..self.x0 + self.rw).contains(&x)
    }

    /// Materializes the mask as an `[h, w]` tensor of exact zeros and ones.
    pub fn to_tensor(&self) -> Tensor {
        let (inside, outside) = match self.polarity {
            Polarity::ZeroInside => (0.0, 1.0),
            Polarity::OneInside => (1.0, 0.0),
        };
        Tensor::from_fn(&[self.h, self.w], |i| {
            if self.contains(i / self.w, i % self.w) {
                inside
            } else {
                outside
            }
        })
    }

    /// 8-bit rendering (255 where the mask is 1).
    pub fn to_gray_u8(&self) -> Vec<u8> {
        self.to_tensor()
            .data()
            .iter()
            .map(|&v| if v > 0.5 { 255 } else { 0 })
            .collect()
    }
}

fn check_extent(h: usize, w: usize) -> Result<()> {
    if h < MIN_EXTENT || w < MIN_EXTENT {
        return Err(Error::invalid(format!(
            "image {h}x{w} is too small for a mask rectangle (minimum {MIN_EXTENT}x{MIN_EXTENT})"
        )));
    }
    Ok(())
}

fn log_uniform(rng: &mut SeedStream, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Rectangle side lengths for a target `area` and aspect ratio `rh / rw`,
/// rounded to whole pixels. When a side would exceed the image it is clipped
/// and the other side is recomputed from the area.
pub fn rect_dims(h: usize, w: usize, area: f64, aspect: f64) -> (usize, usize) {
    let rh0 = (area * aspect).sqrt();
    let rw0 = (area / aspect).sqrt();
    let (rh, rw) = if rh0 > h as f64 {
        (h, (area / h as f64).round() as usize)
    } else if rw0 > w as f64 {
        ((area / w as f64).round() as usize, w)
    } else {
        (rh0.round() as usize, rw0.round() as usize)
    };
    (rh.clamp(1, h), rw.clamp(1, w))
}

fn place(
    rng: &mut SeedStream,
    h: usize,
    w: usize,
    (rh, rw): (usize, usize),
    polarity: Polarity,
) -> RectMask {
    let y0 = rng.random_range(0..=h - rh);
    let x0 = rng.random_range(0..=w - rw);
    RectMask {
        h,
        w,
        y0,
        x0,
        rh,
        rw,
        polarity,
    }
}

/// CutOut mask: random size and aspect ratio, placed uniformly so it lies
/// entirely inside the image.
pub fn gen_cutout_mask(h: usize, w: usize, rng: &mut SeedStream) -> Result<RectMask> {
    check_extent(h, w)?;
    let frac = rng.random_range(CUTOUT_AREA.0..=CUTOUT_AREA.1);
    let aspect = log_uniform(rng, CUTOUT_ASPECT);
    let dims = rect_dims(h, w, frac * (h * w) as f64, aspect);
    Ok(place(rng, h, w, dims, Polarity::ZeroInside))
}

/// CutMix mask: area fixed at half the image, aspect ratio and position vary.
pub fn gen_cutmix_mask(h: usize, w: usize, rng: &mut SeedStream) -> Result<RectMask> {
    check_extent(h, w)?;
    let aspect = log_uniform(rng, CUTMIX_ASPECT);
    let dims = cutmix_dims(h, w, aspect);
    Ok(place(rng, h, w, dims, Polarity::OneInside))
}

/// Half-area rectangle sides for a given aspect ratio.
pub fn cutmix_dims(h: usize, w: usize, aspect: f64) -> (usize, usize) {
    rect_dims(h, w, (h * w) as f64 / 2.0, aspect)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutout_has_exact_zero_count() {
        let mut rng = SeedStream::new(0);
        for _ in 0..200 {
            let m = gen_cutout_mask(20, 31, &mut rng).unwrap();
            let t = m.to_tensor();
            let zeros = t.data().iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, m.area());
            assert!(t.data().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn cutout_mean_zero_fraction() {
        let mut rng = SeedStream::new(1);
        let n = 10_000;
        let mut fracs = Vec::with_capacity(n);
        for _ in 0..n {
            let m = gen_cutout_mask(64, 64, &mut rng).unwrap();
            assert!(m.y0 + m.rh <= 64 && m.x0 + m.rw <= 64);
            fracs.push(m.area() as f64 / 4096.0);
        }
        let mean = fracs.iter().sum::<f64>() / n as f64;
        // U[0.05, 0.4] has mean 0.225 and sd 0.35 / sqrt(12)
        let sigma = 0.35 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 0.225).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn cutmix_area_is_half() {
        let mut rng = SeedStream::new(2);
        let mut total = 0.0;
        for _ in 0..10_000 {
            let m = gen_cutmix_mask(64, 64, &mut rng).unwrap();
            assert!((m.area() as f64 - 2048.0).abs() <= 64.0);
            total += m.to_tensor().mean();
        }
        let mean = total / 10_000.0;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }

    #[test]
    fn square_unit_aspect() {
        let (rh, rw) = cutmix_dims(64, 64, 1.0);
        let side = (64.0f64 * 64.0 / 2.0).sqrt().round() as usize;
        assert_eq!((rh, rw), (side, side));
    }

    #[test]
    fn cutmix_area_bound_over_sizes() {
        let mut rng = SeedStream::new(3);
        for h in (8..=256).step_by(31) {
            for w in (8..=256).step_by(29) {
                for _ in 0..20 {
                    let m = gen_cutmix_mask(h, w, &mut rng).unwrap();
                    let err = (m.area() as f64 - (h * w) as f64 / 2.0).abs();
                    assert!(err <= h.max(w) as f64, "{h}x{w}: {m:?}");
                }
            }
        }
    }

    #[test]
    fn too_small_is_an_error() {
        let mut rng = SeedStream::new(4);
        assert!(gen_cutout_mask(3, 10, &mut rng).is_err());
        assert!(gen_cutmix_mask(10, 2, &mut rng).is_err());
        assert!(RectMask::new(4, 4, 2, 0, 3, 1, Polarity::OneInside).is_err());
    }

    #[test]
    fn same_seed_same_rectangles() {
        let mut a = SeedStream::new(5);
        let mut b = SeedStream::new(5);
        for _ in 0..1000 {
            assert_eq!(
                gen_cutmix_mask(32, 48, &mut a).unwrap(),
                gen_cutmix_mask(32, 48, &mut b).unwrap()
            );
        }
    }
}
