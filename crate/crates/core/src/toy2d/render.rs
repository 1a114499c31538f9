//! PPM renders of probability fields and distance maps.

use std::path::Path;

use super::data::ToyDataset;
use super::distance::DistanceMap;
use crate::error::{Error, Result};
use crate::io::write_ppm;
use crate::tensor::Tensor;

const CLASS0: [f64; 3] = [60.0, 110.0, 230.0];
const CLASS1: [f64; 3] = [230.0, 70.0, 60.0];

fn to_pixel(p: [f64; 2], size: usize) -> (isize, isize) {
    let s = size as f64 / 2.0;
    (
        ((1.0 - p[1]) * s).floor() as isize,
        ((p[0] + 1.0) * s).floor() as isize,
    )
}

fn put(buf: &mut [u8], size: usize, i: isize, j: isize, rgb: [u8; 3]) {
    if (0..size as isize).contains(&i) && (0..size as isize).contains(&j) {
        let at = 3 * (i as usize * size + j as usize);
        buf[at..at + 3].copy_from_slice(&rgb);
    }
}

fn disc(buf: &mut [u8], size: usize, p: [f64; 2], radius: isize, fill: [u8; 3]) {
    let (ci, cj) = to_pixel(p, size);
    for di in -radius - 1..=radius + 1 {
        for dj in -radius - 1..=radius + 1 {
            let r2 = di * di + dj * dj;
            if r2 <= radius * radius {
                put(buf, size, ci + di, cj + dj, fill);
            } else if r2 <= (radius + 1) * (radius + 1) {
                put(buf, size, ci + di, cj + dj, [0, 0, 0]);
            }
        }
    }
}

/// Colours each grid cell by the class-1 probability in `field` (`[g, g]`),
/// draws the true boundary in black, unlabeled points as gray dots and
/// labeled points as class-coloured discs.
pub fn render_field(
    path: &Path,
    field: &Tensor,
    dmap: &DistanceMap,
    data: &ToyDataset,
) -> Result<()> {
    if field.ndim() != 2 || field.shape()[0] != field.shape()[1] {
        return Err(Error::shape("probability field must be square"));
    }
    let g = field.shape()[0];
    let mut buf = vec![0u8; 3 * g * g];
    let points = super::grid_points(g);
    let class: Vec<usize> = points.iter().map(|&p| dmap.class_at(p)).collect();
    for (k, &p1) in field.data().iter().enumerate() {
        // fade towards white where the prediction is uncertain
        let strength = (2.0 * p1 - 1.0).abs();
        let base = if p1 > 0.5 { CLASS1 } else { CLASS0 };
        for c in 0..3 {
            buf[3 * k + c] = (255.0 + (base[c] - 255.0) * strength).round() as u8;
        }
        let (i, j) = (k / g, k % g);
        let edge =
            (j + 1 < g && class[k] != class[k + 1]) || (i + 1 < g && class[k] != class[k + g]);
        if edge {
            buf[3 * k..3 * k + 3].copy_from_slice(&[0, 0, 0]);
        }
    }
    for &p in &data.unsup {
        let (i, j) = to_pixel(p, g);
        put(&mut buf, g, i, j, [120, 120, 120]);
    }
    for &(p, c) in &data.sup {
        let fill = if c == 1 { CLASS1 } else { CLASS0 };
        disc(
            &mut buf,
            g,
            p,
            (g / 128).max(2) as isize,
            fill.map(|v| v as u8),
        );
    }
    write_ppm(path, g, g, &buf)
}

/// Distance map coloured by class and magnitude with contour lines every
/// `spacing` domain units.
pub fn render_distance_map(path: &Path, dmap: &DistanceMap, spacing: f64) -> Result<()> {
    if !(spacing > 0.0) {
        return Err(Error::invalid("contour spacing must be > 0"));
    }
    let n = dmap.size();
    let g = dmap.grid.data();
    let max = g.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let level = |v: f64| (v / spacing).floor() as i64;
    let mut buf = vec![0u8; 3 * n * n];
    for k in 0..n * n {
        let (i, j) = (k / n, k % n);
        let m = g[k];
        let base = if m > 0.0 { CLASS1 } else { CLASS0 };
        let t = 0.25 + 0.75 * (m.abs() / max);
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            rgb[c] = (255.0 + (base[c] - 255.0) * (1.0 - t)).round() as u8;
        }
        let contour = (j + 1 < n && level(g[k + 1]) != level(m))
            || (i + 1 < n && level(g[k + n]) != level(m));
        if contour {
            rgb = [30, 30, 30];
        }
        buf[3 * k..3 * k + 3].copy_from_slice(&rgb);
    }
    write_ppm(path, n, n, &buf)
}
