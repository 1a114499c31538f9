//! Patch-distance analysis of labeled images.
//!
//! The L2 distance between a patch and the patch one pixel to the right is
//! the square root of a box-filtered squared horizontal gradient, so dense
//! neighbour-distance maps cost a few integral images.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{Error, Result};
use crate::io::{read_pgm, read_ppm, write_pgm, write_ppm};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// Image `[C, H, W]` with values in `[0, 1]` and one class per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledImage {
    pub fn new(image: Tensor, labels: Vec<usize>) -> Result<Self> {
        if image.ndim() != 3 {
            return Err(Error::shape(format!(
                "expected [C, H, W], got {:?}",
                image.shape()
            )));
        }
        if labels.len() != image.shape()[1] * image.shape()[2] {
            return Err(Error::shape(format!(
                "{} labels for a {}x{} image",
                labels.len(),
                image.shape()[1],
                image.shape()[2]
            )));
        }
        Ok(Self { image, labels })
    }

    pub fn channels(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    pub fn label(&self, i: usize, j: usize) -> usize {
        self.labels[i * self.width() + j]
    }

    /// Writes `<stem>.ppm` (RGB, or gray replicated) and `<stem>.pgm` labels.
    pub fn save_pair(&self, stem: &Path) -> Result<()> {
        let (c, h, w) = (self.channels(), self.height(), self.width());
        if c != 1 && c != 3 {
            return Err(Error::invalid(format!(
                "cannot write a {c}-channel image as PPM"
            )));
        }
        let mut rgb = vec![0u8; 3 * h * w];
        for px in 0..h * w {
            for k in 0..3 {
                let v = self.image.data()[(k % c) * h * w + px];
                rgb[3 * px + k] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        write_ppm(&stem.with_extension("ppm"), w, h, &rgb)?;
        let labels = self
            .labels
            .iter()
            .map(|&l| u8::try_from(l).map_err(|_| Error::invalid(format!("label {l} exceeds 255"))))
            .collect::<Result<Vec<_>>>()?;
        write_pgm(&stem.with_extension("pgm"), w, h, &labels)
    }

    /// Reads the pair written by [`LabeledImage::save_pair`].
    pub fn load_pair(stem: &Path) -> Result<Self> {
        let img = read_ppm(&stem.with_extension("ppm"))?;
        let lab = read_pgm(&stem.with_extension("pgm"))?;
        if img.dimensions() != lab.dimensions() {
            return Err(Error::shape(format!(
                "{}: image {:?} and labels {:?} differ in size",
                stem.display(),
                img.dimensions(),
                lab.dimensions()
            )));
        }
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw = img.as_raw();
        let image = Tensor::from_fn(&[3, h, w], |k| {
            let (c, px) = (k / (h * w), k % (h * w));
            raw[3 * px + c] as f64 / 255.0
        });
        Self::new(image, lab.as_raw().iter().map(|&l| l as usize).collect())
    }
}

/// Loads every `<stem>.ppm` in `dir` that has a matching `<stem>.pgm`,
/// sorted by file name.
pub fn load_corpus(dir: &Path) -> Result<Vec<LabeledImage>> {
    let mut stems: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ppm") && p.with_extension("pgm").exists())
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    stems.iter().map(|s| LabeledImage::load_pair(s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbourhood {
    Four,
    Eight,
}

fn as_chw(img: &Tensor) -> Result<(usize, usize, usize)> {
    match img.shape() {
        &[h, w] => Ok((1, h, w)),
        &[c, h, w] => Ok((c, h, w)),
        s => Err(Error::shape(format!(
            "expected [H, W] or [C, H, W], got {s:?}"
        ))),
    }
}

/// Squared differences `x[q + delta] - x[q]` summed over channels, on the
/// region where both pixels exist. `delta` is `(dy, dx)` with `dy >= 0`.
fn sq_gradient(img: &Tensor, dy: usize, dx: isize) -> Result<Tensor> {
    let (c, h, w) = as_chw(img)?;
    let (gh, gw) = (h - dy, w - dx.unsigned_abs());
    let x = img.data();
    let data = (0..gh * gw)
        .map(|k| {
            let (i, j) = (k / gw, k % gw);
            // for dx < 0 the pair is (i, j + 1) -> (i + dy, j)
            let (qj, pj) = if dx >= 0 {
                (j, j + dx as usize)
            } else {
                (j + 1, j)
            };
            (0..c)
                .map(|ch| {
                    let plane = &x[ch * h * w..(ch + 1) * h * w];
                    let d = plane[(i + dy) * w + pj] - plane[i * w + qj];
                    d * d
                })
                .sum()
        })
        .collect();
    Tensor::new(&[gh, gw], data)
}

/// Average L2 distance between the `patch_h x patch_w` patch around each
/// pixel and the patches around its 4 (or 8) neighbours.
///
/// Output `[H - patch_h - 1, W - patch_w - 1]`; element `(oi, oj)` belongs to
/// the patch with top-left corner `(oi + 1, oj + 1)`, i.e. centre
/// `(oi + 1 + patch_h / 2, oj + 1 + patch_w / 2)`.
pub fn neighbor_distance_map(
    img: &Tensor,
    patch_h: usize,
    patch_w: usize,
    neighbours: Neighbourhood,
) -> Result<Tensor> {
    let (_, h, w) = as_chw(img)?;
    if patch_h == 0 || patch_w == 0 || patch_h + 2 > h || patch_w + 2 > w {
        return Err(Error::invalid(format!(
            "{patch_h}x{patch_w} patches with their neighbours do not fit a {h}x{w} image"
        )));
    }
    let (oh, ow) = (h - patch_h - 1, w - patch_w - 1);
    let bx = sq_gradient(img, 0, 1)?.box_filter(patch_h, patch_w)?;
    let by = sq_gradient(img, 1, 0)?.box_filter(patch_h, patch_w)?;
    let diag = match neighbours {
        Neighbourhood::Four => None,
        Neighbourhood::Eight => Some((
            sq_gradient(img, 1, 1)?.box_filter(patch_h, patch_w)?,
            sq_gradient(img, 1, -1)?.box_filter(patch_h, patch_w)?,
        )),
    };
    let at = |t: &Tensor, i: usize, j: usize| t.data()[i * t.shape()[1] + j].max(0.0).sqrt();
    let data = (0..oh * ow)
        .map(|k| {
            let (oi, oj) = (k / ow, k % ow);
            let mut sum = at(&bx, oi + 1, oj + 1) // right
                + at(&bx, oi + 1, oj) // left
                + at(&by, oi + 1, oj + 1) // down
                + at(&by, oi, oj + 1); // up
            let mut count = 4.0;
            if let Some((bd, ba)) = &diag {
                sum += at(bd, oi + 1, oj + 1) // down-right
                    + at(bd, oi, oj) // up-left
                    + at(ba, oi + 1, oj) // down-left
                    + at(ba, oi, oj + 1); // up-right
                count = 8.0;
            }
            sum / count
        })
        .collect();
    Tensor::new(&[oh, ow], data)
}

/// Renders a distance map to 8-bit gray scaled by its maximum; with
/// `overlay`, pixels whose label differs from a 4-neighbour are drawn
/// white. `labels` must be the full-image label map and `patch_h/w` the
/// patch size that produced `map`.
pub fn render_distance_pgm(
    path: &Path,
    map: &Tensor,
    overlay: Option<(&[usize], usize, usize, usize)>,
) -> Result<()> {
    let (oh, ow) = (map.shape()[0], map.shape()[1]);
    let max = map.data().iter().fold(0.0f64, |a, &v| a.max(v));
    let mut pixels = crate::io::to_gray_u8(map, 0.0, if max > 0.0 { max } else { 1.0 });
    if let Some((labels, w, ph, pw)) = overlay {
        let (ci, cj) = (1 + ph / 2, 1 + pw / 2);
        for oi in 0..oh {
            for oj in 0..ow {
                let (i, j) = (oi + ci, oj + cj);
                let l = labels[i * w + j];
                if labels[i * w + j + 1] != l || labels[(i + 1) * w + j] != l {
                    pixels[oi * ow + oj] = 255;
                }
            }
        }
    }
    write_pgm(path, ow, oh, &pixels)
}

/// Squared L2 distance between the patches with top-left corners `a` in
/// `x` and `b` in `y`.
fn patch_sq_dist(
    x: &LabeledImage,
    a: (usize, usize),
    y: &LabeledImage,
    b: (usize, usize),
    p: usize,
) -> f64 {
    let (c, hx, wx) = (x.channels(), x.height(), x.width());
    let (hy, wy) = (y.height(), y.width());
    let (xd, yd) = (x.image.data(), y.image.data());
    let mut s = 0.0;
    for ch in 0..c {
        for di in 0..p {
            let rx = ch * hx * wx + (a.0 + di) * wx + a.1;
            let ry = ch * hy * wy + (b.0 + di) * wy + b.1;
            for dj in 0..p {
                let d = xd[rx + dj] - yd[ry + dj];
                s += d * d;
            }
        }
    }
    s
}

/// Options for [`triplet_ratio_analysis`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletOptions {
    /// Images larger than this (either side) are searched on a stride-2
    /// candidate grid.
    pub exhaustive_max: usize,
    pub bins: usize,
    /// Histogram upper edge; larger ratios land in the last bin.
    pub hist_max: f64,
}

impl Default for TripletOptions {
    fn default() -> Self {
        Self {
            exhaustive_max: 128,
            bins: 30,
            hist_max: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub image: usize,
    /// Patch centres.
    pub anchor: (usize, usize),
    pub negative: (usize, usize),
    pub positive_image: usize,
    pub positive: (usize, usize),
    pub d_inter: f64,
    pub d_intra: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletReport {
    pub triplets: Vec<Triplet>,
    /// `d_inter / d_intra` for triplets with `d_intra > 0`.
    pub ratios: Vec<f64>,
    /// Triplets dropped because an identical positive patch exists.
    pub excluded: usize,
    /// `(lower edge, upper edge, count)`.
    pub histogram: Vec<(f64, f64, usize)>,
    pub median: f64,
    /// Candidate stride used per corpus image.
    pub strides: Vec<usize>,
}

/// For `n` random anchors with a 4-neighbour of a different class, compares
/// the squared distance to that neighbour's patch (`d_inter`) with the
/// smallest squared distance to a same-class patch in any other image
/// (`d_intra`).
pub fn triplet_ratio_analysis(
    corpus: &[LabeledImage],
    patch: usize,
    n: usize,
    opts: &TripletOptions,
    rng: &mut SeedStream,
) -> Result<TripletReport> {
    if corpus.len() < 2 {
        return Err(Error::invalid("triplet analysis needs at least two images"));
    }
    if patch == 0 || opts.bins == 0 || !(opts.hist_max > 0.0) {
        return Err(Error::invalid(
            "patch size, bin count and histogram range must be positive",
        ));
    }
    let c = corpus[0].channels();
    if corpus.iter().any(|im| im.channels() != c) {
        return Err(Error::shape("corpus images differ in channel count"));
    }
    let r = patch / 2;
    // all (image, anchor centre, negative centre) with both patches inside
    let mut pairs = Vec::new();
    for (k, im) in corpus.iter().enumerate() {
        let (h, w) = (im.height(), im.width());
        if h < patch || w < patch {
            continue;
        }
        let inside =
            |i: usize, j: usize| i >= r && j >= r && i - r + patch <= h && j - r + patch <= w;
        for i in r..h {
            for j in r..w {
                if !inside(i, j) {
                    continue;
                }
                let nb = [(i + 1, j), (i, j + 1)];
                for &(ni, nj) in &nb {
                    if ni < h && nj < w && inside(ni, nj) && im.label(ni, nj) != im.label(i, j) {
                        pairs.push((k, (i, j), (ni, nj)));
                        pairs.push((k, (ni, nj), (i, j)));
                    }
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::invalid(
            "no cross-class neighbouring patches in the corpus",
        ));
    }
    let strides: Vec<usize> = corpus
        .iter()
        .map(|im| {
            if im.height().max(im.width()) > opts.exhaustive_max {
                2
            } else {
                1
            }
        })
        .collect();

    let mut triplets = Vec::with_capacity(n);
    let mut ratios = Vec::with_capacity(n);
    let mut excluded = 0;
    for _ in 0..n {
        let (k, a, neg) = pairs[rng.random_range(0..pairs.len())];
        let im = &corpus[k];
        let tl = |p: (usize, usize)| (p.0 - r, p.1 - r);
        let d_inter = patch_sq_dist(im, tl(a), im, tl(neg), patch);
        let class = im.label(a.0, a.1);
        let mut best: Option<(f64, usize, (usize, usize))> = None;
        for (q, other) in corpus.iter().enumerate() {
            if q == k || other.height() < patch || other.width() < patch {
                continue;
            }
            let s = strides[q];
            for ti in (0..=other.height() - patch).step_by(s) {
                for tj in (0..=other.width() - patch).step_by(s) {
                    if other.label(ti + r, tj + r) != class {
                        continue;
                    }
                    let d = patch_sq_dist(im, tl(a), other, (ti, tj), patch);
                    if best.is_none_or(|b| d < b.0) {
                        best = Some((d, q, (ti + r, tj + r)));
                    }
                }
            }
        }
        let Some((d_intra, pq, pos)) = best else {
            excluded += 1;
            continue;
        };
        if d_intra == 0.0 {
            excluded += 1;
        } else {
            ratios.push(d_inter / d_intra);
        }
        triplets.push(Triplet {
            image: k,
            anchor: a,
            negative: neg,
            positive_image: pq,
            positive: pos,
            d_inter,
            d_intra,
        });
    }
    let histogram = histogram(&ratios, opts.bins, opts.hist_max);
    let median = median(&ratios);
    Ok(TripletReport {
        triplets,
        ratios,
        excluded,
        histogram,
        median,
        strides,
    })
}

/// Equal-width bins on `[0, max)`; values at or above `max` go to the last
/// bin.
pub fn histogram(values: &[f64], bins: usize, max: f64) -> Vec<(f64, f64, usize)> {
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 * width, (b + 1) as f64 * width, c))
        .collect()
}

/// Median; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Smooth-texture corpus in which a random label boundary cuts through a
/// continuous texture, so that patches across the boundary look alike while
/// different images look different.
pub fn texture_spanning_corpus(
    n_images: usize,
    size: usize,
    rng: &mut SeedStream,
) -> Result<Vec<LabeledImage>> {
    (0..n_images)
        .map(|_| {
            let (fy, fx) = (rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
            let (py, px) = (rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
            let offset: f64 = rng.random_range(0.2..0.8);
            let cut = rng.random_range(size / 4..3 * size / 4);
            let s = size as f64;
            let image = Tensor::from_fn(&[1, size, size], |k| {
                let (i, j) = ((k / size) as f64 / s, (k % size) as f64 / s);
                let v = offset + 0.15 * (6.3 * fy * i + py).sin() * (6.3 * fx * j + px).cos();
                v.clamp(0.0, 1.0)
            });
            let labels = (0..size * size)
                .map(|k| ((k % size) >= cut) as usize)
                .collect();
            LabeledImage::new(image, labels)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(c: usize, h: usize, w: usize, rng: &mut SeedStream) -> Tensor {
        Tensor::from_fn(&[c, h, w], |_| rng.random_range(0.0..1.0))
    }

    fn patch(img: &Tensor, top: isize, left: isize, ph: usize, pw: usize) -> Vec<f64> {
        let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
        let mut out = Vec::new();
        for ch in 0..c {
            for i in 0..ph {
                for j in 0..pw {
                    let (y, x) = ((top + i as isize) as usize, (left + j as isize) as usize);
                    assert!(y < h && x < w);
                    out.push(img.data()[ch * h * w + y * w + x]);
                }
            }
        }
        out
    }

    fn l2(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn box_identity_is_exact_at_16() {
        let mut rng = SeedStream::new(0);
        for p in [3, 5, 7] {
            let img = random_image(1, 16, 16, &mut rng);
            let b = sq_gradient(&img, 0, 1).unwrap().box_filter(p, p).unwrap();
            for a0 in 0..=16 - p {
                for b0 in 0..16 - p {
                    let direct = l2(
                        &patch(&img, a0 as isize, b0 as isize + 1, p, p),
                        &patch(&img, a0 as isize, b0 as isize, p, p),
                    );
                    let fast = b.data()[a0 * b.shape()[1] + b0].sqrt();
                    assert!(
                        (fast - direct).abs() <= 1e-9 * direct.max(1e-300),
                        "{p} {a0} {b0}"
                    );
                }
            }
        }
    }

    fn naive_map(img: &Tensor, ph: usize, pw: usize, eight: bool) -> Tensor {
        let (h, w) = (img.shape()[1], img.shape()[2]);
        let (oh, ow) = (h - ph - 1, w - pw - 1);
        let mut deltas = vec![(0, 1), (0, -1), (1, 0), (-1, 0)];
        if eight {
            deltas.extend([(1, 1), (-1, -1), (1, -1), (-1, 1)]);
        }
        Tensor::from_fn(&[oh, ow], |k| {
            let (t, l) = ((k / ow + 1) as isize, (k % ow + 1) as isize);
            let centre = patch(img, t, l, ph, pw);
            deltas
                .iter()
                .map(|&(dy, dx)| l2(&patch(img, t + dy, l + dx, ph, pw), &centre))
                .sum::<f64>()
                / deltas.len() as f64
        })
    }

    #[test]
    fn distance_map_matches_patch_oracle() {
        let mut rng = SeedStream::new(1);
        let img = random_image(3, 32, 32, &mut rng);
        for (eight, nb) in [(false, Neighbourhood::Four), (true, Neighbourhood::Eight)] {
            let fast = neighbor_distance_map(&img, 7, 7, nb).unwrap();
            let slow = naive_map(&img, 7, 7, eight);
            assert_eq!(fast.shape(), &[24, 24]);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} {b}");
            }
        }
        let rect = random_image(1, 20, 30, &mut rng);
        let fast = neighbor_distance_map(&rect, 5, 9, Neighbourhood::Four).unwrap();
        let slow = naive_map(&rect, 5, 9, false);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12);
    }

    #[test]
    fn constants_vanish_and_shift_is_invisible() {
        let mut rng = SeedStream::new(2);
        let flat = Tensor::full(&[2, 20, 20], 0.3);
        let m = neighbor_distance_map(&flat, 5, 5, Neighbourhood::Eight).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
        let img = random_image(1, 20, 20, &mut rng);
        let a = neighbor_distance_map(&img, 3, 3, Neighbourhood::Four).unwrap();
        let b = neighbor_distance_map(&img.map(|v| v + 5.0), 3, 3, Neighbourhood::Four).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        assert!(a.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn probe_scales_are_supported() {
        let mut rng = SeedStream::new(3);
        let img = random_image(1, 230, 232, &mut rng);
        assert_eq!(
            neighbor_distance_map(&img, 15, 15, Neighbourhood::Four)
                .unwrap()
                .shape(),
            &[214, 216]
        );
        assert_eq!(
            neighbor_distance_map(&img, 225, 225, Neighbourhood::Four)
                .unwrap()
                .shape(),
            &[4, 6]
        );
        assert!(neighbor_distance_map(&img, 229, 3, Neighbourhood::Four).is_err());
    }

    #[test]
    fn duplicates_are_excluded_and_counted() {
        let mut rng = SeedStream::new(4);
        let im = LabeledImage::new(
            random_image(1, 12, 12, &mut rng),
            (0..144).map(|k| (k % 12 >= 6) as usize).collect(),
        )
        .unwrap();
        let corpus = vec![im.clone(), im];
        let r =
            triplet_ratio_analysis(&corpus, 3, 50, &TripletOptions::default(), &mut rng).unwrap();
        assert_eq!(r.excluded, 50);
        assert!(r.ratios.is_empty());
    }

    #[test]
    fn spanning_texture_gives_small_ratios() {
        let mut rng = SeedStream::new(5);
        let corpus = texture_spanning_corpus(6, 32, &mut rng).unwrap();
        let r =
            triplet_ratio_analysis(&corpus, 5, 200, &TripletOptions::default(), &mut rng).unwrap();
        assert!(r.median < 1.0, "median {}", r.median);
        assert_eq!(
            r.histogram.iter().map(|b| b.2).sum::<usize>(),
            r.ratios.len()
        );
        assert!(r.strides.iter().all(|&s| s == 1));
    }

    #[test]
    fn intra_distance_is_the_exhaustive_minimum() {
        let mut rng = SeedStream::new(6);
        let corpus = texture_spanning_corpus(3, 16, &mut rng).unwrap();
        let r =
            triplet_ratio_analysis(&corpus, 3, 20, &TripletOptions::default(), &mut rng).unwrap();
        for t in &r.triplets {
            let a = &corpus[t.image];
            let mut best = f64::INFINITY;
            for (q, o) in corpus.iter().enumerate() {
                if q == t.image {
                    continue;
                }
                for i in 1..15 {
                    for j in 1..15 {
                        if o.label(i, j) == a.label(t.anchor.0, t.anchor.1) {
                            best = best.min(patch_sq_dist(
                                a,
                                (t.anchor.0 - 1, t.anchor.1 - 1),
                                o,
                                (i - 1, j - 1),
                                3,
                            ));
                        }
                    }
                }
            }
            assert_eq!(t.d_intra, best);
        }
    }

    #[test]
    fn pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = SeedStream::new(7);
        let img = random_image(3, 5, 7, &mut rng).map(|v| (v * 255.0).round() / 255.0);
        let im = LabeledImage::new(img, (0..35).map(|k| k % 4).collect()).unwrap();
        im.save_pair(&dir.path().join("a")).unwrap();
        im.save_pair(&dir.path().join("b")).unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].labels, im.labels);
        assert!(corpus[0].image.max_abs_diff(&im.image).unwrap() < 1e-12);
    }

    #[test]
    fn errors() {
        let mut rng = SeedStream::new(8);
        let im = LabeledImage::new(random_image(1, 8, 8, &mut rng), vec![0; 64]).unwrap();
        assert!(triplet_ratio_analysis(
            std::slice::from_ref(&im),
            3,
            1,
            &TripletOptions::default(),
            &mut rng
        )
        .is_err());
        assert!(triplet_ratio_analysis(
            &[im.clone(), im],
            3,
            1,
            &TripletOptions::default(),
            &mut rng
        )
        .is_err());
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
