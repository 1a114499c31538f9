//! Two-class rasters on `[-1, 1]^2` and their signed distance maps.
//!
//! Pixel `(i, j)` of an `n x n` raster covers the cell centred at
//! `x = -1 + (j + 0.5) * pitch`, `y = 1 - (i + 0.5) * pitch`, with
//! `pitch = 2 / n`. Row 0 is the top of the domain.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::read_pgm;
use crate::tensor::Tensor;

pub const DEFAULT_RESOLUTION: usize = 512;

/// Source of the true class boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundarySpec {
    /// Class 1 above the curve `y = amplitude * sin(frequency * pi * x)`.
    Sine { amplitude: f64, frequency: f64 },
    /// Class 1 where `normal . (x, y) > offset`.
    HalfPlane { normal: [f64; 2], offset: f64 },
    /// Explicit square raster.
    Raster(Raster),
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec::Sine {
            amplitude: 0.3,
            frequency: 2.2,
        }
    }
}

impl BoundarySpec {
    /// Loads a square PGM; pixels above mid-gray are class 1.
    pub fn from_pgm(path: &Path) -> Result<Self> {
        let img = read_pgm(path)?;
        let (w, h) = img.dimensions();
        if w != h {
            return Err(Error::invalid(format!(
                "boundary raster must be square, got {w}x{h}"
            )));
        }
        let labels = img.as_raw().iter().map(|&v| (v > 127) as u8).collect();
        Ok(BoundarySpec::Raster(Raster::new(w as usize, labels)?))
    }

    pub fn rasterize(&self, n: usize) -> Result<Raster> {
        let from_fn = |f: &dyn Fn(f64, f64) -> bool| {
            let pitch = 2.0 / n as f64;
            let labels = (0..n * n)
                .map(|k| {
                    let (i, j) = (k / n, k % n);
                    let x = -1.0 + (j as f64 + 0.5) * pitch;
                    let y = 1.0 - (i as f64 + 0.5) * pitch;
                    f(x, y) as u8
                })
                .collect();
            Raster::new(n, labels)
        };
        match self {
            BoundarySpec::Sine {
                amplitude,
                frequency,
            } => from_fn(&|x, y| y > amplitude * (frequency * std::f64::consts::PI * x).sin()),
            BoundarySpec::HalfPlane { normal, offset } => {
                from_fn(&|x, y| normal[0] * x + normal[1] * y > *offset)
            }
            BoundarySpec::Raster(r) => Ok(r.clone()),
        }
    }
}

/// Square binary class raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub size: usize,
    /// Row-major labels in {0, 1}.
    pub labels: Vec<u8>,
}

impl Raster {
    pub fn new(size: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != size * size {
            return Err(Error::shape(format!(
                "{} labels for a {size}x{size} raster",
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("raster labels must be 0 or 1"));
        }
        Ok(Self { size, labels })
    }

    fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }
}

const FAR: f64 = 1e20;

/// Exact 1D squared distance transform of a sampled function (lower
/// envelope of parabolas).
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let meet = |p: usize| (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
        let mut s = meet(v[k]);
        // z[0] is -inf, so this stops at k = 0
        while s <= z[k] {
            k -= 1;
            s = meet(v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared Euclidean distance (in pixels) from every pixel to the nearest
/// pixel where `feature` is set. Columns first, then rows.
pub fn squared_edt(feature: &[bool], h: usize, w: usize) -> Vec<f64> {
    let n = h.max(w);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut col = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    let mut grid: Vec<f64> = feature.iter().map(|&f| if f { 0.0 } else { FAR }).collect();
    for j in 0..w {
        for i in 0..h {
            col[i] = grid[i * w + j];
        }
        dt1d(&col, &mut tmp, &mut v, &mut z);
        for i in 0..h {
            grid[i * w + j] = tmp[i].min(FAR);
        }
    }
    let mut row = vec![0.0; w];
    for i in 0..h {
        dt1d(&grid[i * w..(i + 1) * w], &mut row, &mut v, &mut z);
        grid[i * w..(i + 1) * w].copy_from_slice(&row);
    }
    grid
}

/// Signed distance to the class boundary in domain units.
///
/// For a pixel of class `c` with nearest other-class pixel at `d` pixels,
/// `m = (d - 1/2) * pitch`, negated on class 0. The half-pixel offset
/// places the zero level on the edge between the two pixels, so a straight
/// boundary produces an exactly linear map.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub grid: Tensor,
    pub pitch: f64,
}

pub fn signed_distance_map(raster: &Raster) -> Result<DistanceMap> {
    if !raster.has_both_classes() {
        return Err(Error::invalid("boundary raster holds a single class"));
    }
    let n = raster.size;
    let pitch = 2.0 / n as f64;
    let class0: Vec<bool> = raster.labels.iter().map(|&l| l == 0).collect();
    let class1: Vec<bool> = raster.labels.iter().map(|&l| l == 1).collect();
    let to0 = squared_edt(&class0, n, n);
    let to1 = squared_edt(&class1, n, n);
    let data = raster
        .labels
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if l == 1 {
                (to0[k].sqrt() - 0.5) * pitch
            } else {
                -(to1[k].sqrt() - 0.5) * pitch
            }
        })
        .collect();
    Ok(DistanceMap {
        grid: Tensor::new(&[n, n], data)?,
        pitch,
    })
}

impl DistanceMap {
    pub fn size(&self) -> usize {
        self.grid.shape()[0]
    }

    /// Bilinear interpolation of `m` at a domain point; coordinates beyond
    /// the outermost pixel centres are clamped.
    pub fn sample(&self, p: [f64; 2]) -> f64 {
        let n = self.size();
        let last = (n - 1) as f64;
        let fj = ((p[0] + 1.0) / self.pitch - 0.5).clamp(0.0, last);
        let fi = ((1.0 - p[1]) / self.pitch - 0.5).clamp(0.0, last);
        let (i0, j0) = (fi.floor() as usize, fj.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(n - 1), (j0 + 1).min(n - 1));
        let (ty, tx) = (fi - i0 as f64, fj - j0 as f64);
        let g = self.grid.data();
        let top = g[i0 * n + j0] * (1.0 - tx) + g[i0 * n + j1] * tx;
        let bottom = g[i1 * n + j0] * (1.0 - tx) + g[i1 * n + j1] * tx;
        top * (1.0 - ty) + bottom * ty
    }

    /// Class implied by the sign of the interpolated map.
    pub fn class_at(&self, p: [f64; 2]) -> usize {
        (self.sample(p) > 0.0) as usize
    }

    /// Fraction of the domain with `|m| < band`, counted over pixels.
    pub fn band_fraction(&self, band: f64) -> f64 {
        let inside = self.grid.data().iter().filter(|m| m.abs() < band).count();
        inside as f64 / self.grid.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use rand::Rng;

    fn brute_force(raster: &Raster) -> Vec<f64> {
        let n = raster.size;
        let pitch = 2.0 / n as f64;
        (0..n * n)
            .map(|k| {
                let (i, j) = ((k / n) as f64, (k % n) as f64);
                let l = raster.labels[k];
                let mut best = f64::INFINITY;
                for (q, &lq) in raster.labels.iter().enumerate() {
                    if lq != l {
                        let (qi, qj) = ((q / n) as f64, (q % n) as f64);
                        best = best.min((i - qi) * (i - qi) + (j - qj) * (j - qj));
                    }
                }
                let m = (best.sqrt() - 0.5) * pitch;
                if l == 1 {
                    m
                } else {
                    -m
                }
            })
            .collect()
    }

    pub(crate) fn random_blobs(n: usize, rng: &mut SeedStream) -> Raster {
        let blobs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..5))
            .map(|_| {
                (
                    rng.random_range(0.0..n as f64),
                    rng.random_range(0.0..n as f64),
                    rng.random_range(3.0..n as f64 / 3.0),
                )
            })
            .collect();
        let labels = (0..n * n)
            .map(|k| {
                let (i, j) = ((k / n) as f64, (k % n) as f64);
                blobs
                    .iter()
                    .any(|&(ci, cj, r)| (i - ci).powi(2) + (j - cj).powi(2) < r * r)
                    as u8
            })
            .collect();
        Raster::new(n, labels).unwrap()
    }

    #[test]
    fn matches_brute_force_on_blobs() {
        let mut rng = SeedStream::new(0);
        for _ in 0..5 {
            let r = random_blobs(64, &mut rng);
            if !r.has_both_classes() {
                continue;
            }
            let fast = signed_distance_map(&r).unwrap();
            let slow = brute_force(&r);
            for (k, (&a, &b)) in fast.grid.data().iter().zip(&slow).enumerate() {
                assert!((a - b).abs() / fast.pitch <= 1e-9, "pixel {k}: {a} vs {b}");
                assert_eq!(a < 0.0, r.labels[k] == 0);
            }
        }
    }

    #[test]
    fn squared_edt_on_lines() {
        let f: Vec<bool> = (0..7).map(|j| j == 2).collect();
        assert_eq!(squared_edt(&f, 1, 7), vec![4., 1., 0., 1., 4., 9., 16.]);
        let mut g = vec![false; 25];
        g[0] = true;
        g[24] = true;
        let d = squared_edt(&g, 5, 5);
        assert_eq!(d[12], 8.0);
        assert_eq!(d[4], 16.0);
    }

    #[test]
    fn eikonal_on_random_boundaries() {
        let mut rng = SeedStream::new(2);
        let n = 96;
        let mut checked = 0;
        for b in 0..10 {
            let raster = if b % 2 == 0 {
                random_blobs(n, &mut rng)
            } else {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let spec = BoundarySpec::HalfPlane {
                    normal: [a.cos(), a.sin()],
                    offset: rng.random_range(-0.5..0.5),
                };
                spec.rasterize(n).unwrap()
            };
            if !raster.has_both_classes() {
                continue;
            }
            let dm = signed_distance_map(&raster).unwrap();
            let g = dm.grid.data();
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let gx = (g[i * n + j + 1] - g[i * n + j - 1]) / (2.0 * dm.pitch);
                    let gy = (g[(i + 1) * n + j] - g[(i - 1) * n + j]) / (2.0 * dm.pitch);
                    let norm = (gx * gx + gy * gy).sqrt();
                    assert!(
                        norm <= 1.1,
                        "boundary {b}, pixel ({i}, {j}): |grad m| = {norm}"
                    );
                }
            }
            checked += 1;
        }
        assert!(checked >= 8);
    }

    #[test]
    fn half_plane_is_linear() {
        let spec = BoundarySpec::HalfPlane {
            normal: [1.0, 0.0],
            offset: 0.0,
        };
        let dm = signed_distance_map(&spec.rasterize(128).unwrap()).unwrap();
        let mut rng = SeedStream::new(1);
        for _ in 0..1000 {
            let p = [rng.random_range(-0.98..0.98), rng.random_range(-0.98..0.98)];
            assert!((dm.sample(p) - p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_pixels_are_within_a_pitch() {
        let r = BoundarySpec::default().rasterize(128).unwrap();
        let dm = signed_distance_map(&r).unwrap();
        let n = 128;
        for i in 0..n {
            for j in 0..n - 1 {
                if r.labels[i * n + j] != r.labels[i * n + j + 1] {
                    assert!(dm.grid.data()[i * n + j].abs() <= dm.pitch);
                    assert!(dm.grid.data()[i * n + j + 1].abs() <= dm.pitch);
                }
            }
        }
    }

    #[test]
    fn neighbouring_pixels_differ_by_at_most_a_pitch() {
        let mut rng = SeedStream::new(2);
        for _ in 0..10 {
            let r = random_blobs(64, &mut rng);
            if !r.has_both_classes() {
                continue;
            }
            let dm = signed_distance_map(&r).unwrap();
            let g = dm.grid.data();
            for i in 0..64 {
                for j in 0..64 {
                    if j + 1 < 64 {
                        assert!(
                            (g[i * 64 + j + 1] - g[i * 64 + j]).abs() <= dm.pitch * (1.0 + 1e-12)
                        );
                    }
                    if i + 1 < 64 {
                        assert!(
                            (g[(i + 1) * 64 + j] - g[i * 64 + j]).abs() <= dm.pitch * (1.0 + 1e-12)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let r = Raster::new(4, vec![1; 16]).unwrap();
        assert!(signed_distance_map(&r).is_err());
    }
}
