//! Procedural segmentation benchmark: textured shapes on a textured
//! background, an encoder-decoder trained with each consistency method and
//! scored by mean IoU on held-out scenes.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::consistency::{train_step, Method, StepReport, SupBatch, TrainConfig, TrainerState};
use crate::density::LabeledImage;
use crate::error::{Error, Result};
use crate::io::csv_row;
use crate::jobs::parallel_map;
use crate::nn::Network;
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// Oriented sinusoidal stripes over a base colour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Texture {
    pub colour: [f64; 3],
    /// Relative stripe amplitude.
    pub amplitude: f64,
    /// Stripe cycles per image width.
    pub frequency: f64,
    /// Stripe direction in radians.
    pub orientation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub size: usize,
    /// Background plus the shape classes; `textures[k]` belongs to class `k`.
    pub n_classes: usize,
    pub textures: Vec<Texture>,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Shape radius range as a fraction of the image side.
    pub radius: (f64, f64),
    /// Per-image uniform jitter added to every base colour channel.
    pub colour_jitter: f64,
    /// Per-pixel uniform noise amplitude.
    pub noise: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let t = |colour, amplitude, frequency, orientation| Texture {
            colour,
            amplitude,
            frequency,
            orientation,
        };
        Self {
            size: 64,
            n_classes: 4,
            textures: vec![
                t([0.45, 0.45, 0.45], 0.25, 3.0, 0.3),
                t([0.65, 0.40, 0.35], 0.45, 12.0, 0.0),
                t([0.40, 0.60, 0.40], 0.45, 12.0, PI / 2.0),
                t([0.40, 0.45, 0.65], 0.45, 9.0, PI / 4.0),
            ],
            min_shapes: 1,
            max_shapes: 4,
            radius: (0.1, 0.25),
            colour_jitter: 0.15,
            noise: 0.05,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.textures.len() != self.n_classes {
            return Err(Error::config(
                "n_classes",
                "need at least 2 classes and one texture per class",
            ));
        }
        if self.size < 8 {
            return Err(Error::config("size", "scene size must be at least 8"));
        }
        if self.min_shapes == 0 || self.max_shapes < self.min_shapes {
            return Err(Error::config(
                "shapes",
                "need 1 <= min_shapes <= max_shapes",
            ));
        }
        if !(self.radius.0 > 0.0 && self.radius.1 >= self.radius.0 && self.radius.1 < 0.5) {
            return Err(Error::config(
                "radius",
                "need 0 < min radius <= max radius < 0.5",
            ));
        }
        Ok(())
    }

    fn shade(&self, class: usize, p: [f64; 2], phase: f64, jitter: f64) -> [f64; 3] {
        let t = &self.textures[class];
        let u = p[1] * t.orientation.cos() + p[0] * t.orientation.sin();
        let s = 1.0 + t.amplitude * (2.0 * PI * t.frequency * u + phase).sin();
        t.colour.map(|c| (c + jitter) * s)
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Circle {
        c: [f64; 2],
        r: f64,
    },
    /// Rotated rectangle with half extents.
    Rect {
        c: [f64; 2],
        half: [f64; 2],
        angle: f64,
    },
    Triangle {
        v: [[f64; 2]; 3],
    },
}

impl Shape {
    fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Shape::Circle { c, r } => (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) <= r * r,
            Shape::Rect { c, half, angle } => {
                let (s, co) = angle.sin_cos();
                let (dy, dx) = (p[0] - c[0], p[1] - c[1]);
                (co * dy + s * dx).abs() <= half[0] && (-s * dy + co * dx).abs() <= half[1]
            }
            Shape::Triangle { v } => {
                let cross = |a: [f64; 2], b: [f64; 2]| {
                    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
                };
                let d = [cross(v[0], v[1]), cross(v[1], v[2]), cross(v[2], v[0])];
                d.iter().all(|&x| x >= 0.0) || d.iter().all(|&x| x <= 0.0)
            }
        }
    }

    fn random(spec: &SceneSpec, rng: &mut SeedStream) -> Shape {
        let r = rng.random_range(spec.radius.0..=spec.radius.1);
        let c = [rng.random_range(r..1.0 - r), rng.random_range(r..1.0 - r)];
        match rng.random_range(0..3) {
            0 => Shape::Circle { c, r },
            1 => {
                let aspect: f64 = rng.random_range(0.5..1.0);
                Shape::Rect {
                    c,
                    half: [r * aspect, r],
                    angle: rng.random_range(0.0..PI),
                }
            }
            _ => {
                let base: f64 = rng.random_range(0.0..2.0 * PI);
                let v = [0, 1, 2].map(|i| {
                    let a = base + 2.0 * PI * i as f64 / 3.0 + rng.random_range(-0.3..0.3);
                    [c[0] + r * a.sin(), c[1] + r * a.cos()]
                });
                Shape::Triangle { v }
            }
        }
    }
}

const SUPERSAMPLE: usize = 4;

/// Renders one scene. Shapes are drawn back to front with anti-aliased
/// edges; a pixel takes the class covering most of its subsamples. The
/// topmost shape always owns its centre pixel, so every scene has a
/// non-background class.
pub fn gen_scene(spec: &SceneSpec, seed: u64) -> Result<LabeledImage> {
    spec.validate()?;
    let mut rng = SeedStream::new(seed);
    let n = spec.size;
    let jitter: f64 = rng.random_range(-spec.colour_jitter..=spec.colour_jitter);
    let bg_phase = rng.random_range(0.0..2.0 * PI);
    let n_shapes = rng.random_range(spec.min_shapes..=spec.max_shapes);
    let shapes: Vec<(Shape, usize, f64)> = (0..n_shapes)
        .map(|_| {
            let class = rng.random_range(1..spec.n_classes);
            (
                Shape::random(spec, &mut rng),
                class,
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();

    let mut image = vec![0.0; 3 * n * n];
    let mut labels = vec![0usize; n * n];
    let s = SUPERSAMPLE as f64;
    for i in 0..n {
        for j in 0..n {
            let mut rgb = [0.0; 3];
            // coverage of each shape after occlusion, background last
            let mut cover = vec![0usize; shapes.len() + 1];
            for si in 0..SUPERSAMPLE {
                for sj in 0..SUPERSAMPLE {
                    let p = [
                        (i as f64 + (si as f64 + 0.5) / s) / n as f64,
                        (j as f64 + (sj as f64 + 0.5) / s) / n as f64,
                    ];
                    let top = shapes.iter().rposition(|(sh, _, _)| sh.contains(p));
                    let c = match top {
                        Some(k) => {
                            cover[k] += 1;
                            spec.shade(shapes[k].1, p, shapes[k].2, jitter)
                        }
                        None => {
                            cover[shapes.len()] += 1;
                            spec.shade(0, p, bg_phase, jitter)
                        }
                    };
                    for k in 0..3 {
                        rgb[k] += c[k] / (s * s);
                    }
                }
            }
            let mut by_class = vec![0usize; spec.n_classes];
            by_class[0] = cover[shapes.len()];
            for (k, &(_, class, _)) in shapes.iter().enumerate() {
                by_class[class] += cover[k];
            }
            // ties go to the lowest class
            labels[i * n + j] = (0..spec.n_classes)
                .rev()
                .max_by_key(|&k| by_class[k])
                .expect("classes");
            for k in 0..3 {
                let noise = rng.random_range(-spec.noise..=spec.noise);
                image[k * n * n + i * n + j] = (rgb[k] + noise).clamp(0.0, 1.0);
            }
        }
    }
    LabeledImage::new(Tensor::new(&[3, n, n], image)?, labels)
}

/// Dataset-level confusion matrix, `counts[gt * k + pred]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Confusion {
    pub k: usize,
    pub counts: Vec<u64>,
}

impl Confusion {
    pub fn new(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("need at least one class"));
        }
        Ok(Self {
            k,
            counts: vec![0; k * k],
        })
    }

    pub fn add(&mut self, pred: &[usize], gt: &[usize], ignore_label: usize) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} labels",
                pred.len(),
                gt.len()
            )));
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if g == ignore_label {
                continue;
            }
            if p >= self.k || g >= self.k {
                return Err(Error::invalid(format!(
                    "label {} outside {} classes",
                    p.max(g),
                    self.k
                )));
            }
            self.counts[g * self.k + p] += 1;
        }
        Ok(())
    }

    /// Per-class IoU; `None` for classes absent from both prediction and
    /// ground truth.
    pub fn iou(&self) -> Vec<Option<f64>> {
        let k = self.k;
        (0..k)
            .map(|c| {
                let tp = self.counts[c * k + c];
                let gt: u64 = self.counts[c * k..(c + 1) * k].iter().sum();
                let pred: u64 = (0..k).map(|g| self.counts[g * k + c]).sum();
                let union = gt + pred - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn miou(&self) -> Result<f64> {
        let present: Vec<f64> = self.iou().into_iter().flatten().collect();
        if present.is_empty() {
            return Err(Error::invalid("no scored pixels"));
        }
        Ok(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Mean IoU over the classes present in `gt` or `pred`.
pub fn miou(pred: &[usize], gt: &[usize], k: usize, ignore_label: usize) -> Result<f64> {
    let mut c = Confusion::new(k)?;
    c.add(pred, gt, ignore_label)?;
    c.miou()
}

/// Writes `n` scenes as `scene_0000.ppm` / `scene_0000.pgm` pairs; scene
/// `i` uses seed `seed + i`.
pub fn dump_scenes(dir: &Path, spec: &SceneSpec, seed: u64, n: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for i in 0..n {
        gen_scene(spec, seed.wrapping_add(i as u64))?
            .save_pair(&dir.join(format!("scene_{i:04}")))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_val: usize,
    pub seeds: Vec<u64>,
    /// Steps, batch sizes, learning rate, EMA and threshold; `method`,
    /// `seed` and `cons_weight` are set per cell.
    pub train: TrainConfig,
    /// Replaces every method's default consistency weight.
    pub cons_weight: Option<f64>,
    pub scene: SceneSpec,
    /// Seed of the scene pool, shared by all cells.
    pub scene_seed: u64,
    pub widths: [usize; 3],
    /// Adds a baseline cell trained with every pool scene labeled.
    pub full_supervision: bool,
    pub jobs: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Baseline, Method::Cutout, Method::Cutmix],
            n_labeled: 10,
            n_unlabeled: 490,
            n_val: 100,
            seeds: (0..5).collect(),
            train: TrainConfig {
                steps: 2000,
                batch_sup: 4,
                batch_unsup: 4,
                ..TrainConfig::default()
            },
            cons_weight: None,
            scene: SceneSpec {
                size: 32,
                ..SceneSpec::default()
            },
            scene_seed: 1000,
            widths: [8, 16, 32],
            full_supervision: false,
            jobs: 1,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.methods.is_empty() && !self.full_supervision {
            return Err(Error::config("methods", "no methods to run"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.n_labeled == 0 || self.n_val == 0 {
            return Err(Error::config(
                "n_labeled",
                "need labeled and validation scenes",
            ));
        }
        if self.n_unlabeled == 0 && self.methods.iter().any(|&m| m != Method::Baseline) {
            return Err(Error::config(
                "n_unlabeled",
                "consistency methods need unlabeled scenes",
            ));
        }
        if !self.scene.size.is_multiple_of(4) {
            return Err(Error::config("size", "scene size must be divisible by 4"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs", "need at least one job"));
        }
        self.train.validate()
    }

    fn cell_config(&self, method: Method, seed: u64) -> TrainConfig {
        let mut t = TrainConfig {
            method,
            seed,
            cons_weight: self.cons_weight.unwrap_or(method.default_weight()),
            ..self.train.clone()
        };
        if method == Method::Baseline {
            t.cons_weight = 0.0;
        }
        t
    }
}

/// One (method, seed) training run.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    /// Method name, or `full` for the fully supervised reference.
    pub method: String,
    pub seed: u64,
    pub n_labeled: usize,
    /// Teacher mIoU on the validation scenes; NaN if the run failed.
    pub miou: f64,
    pub student_miou: f64,
    pub steps: usize,
    pub runtime_s: f64,
    pub error: Option<String>,
    pub final_step: Option<StepReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub mean: f64,
    pub std: f64,
    /// Successful runs.
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub cells: Vec<CellResult>,
    pub summary: Vec<MethodSummary>,
    pub labeled_fraction: f64,
    pub runtime_s: f64,
}

impl BenchmarkReport {
    pub const CSV_HEADER: &'static str = "method,seed,n_labeled,miou,steps,runtime_s";

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            let row = csv_row([
                c.method.clone(),
                c.seed.to_string(),
                c.n_labeled.to_string(),
                c.miou.to_string(),
                c.steps.to_string(),
                format!("{:.3}", c.runtime_s),
            ]);
            write!(out, "{row}")?;
        }
        Ok(())
    }

    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

struct Split {
    x: Vec<Tensor>,
    labels: Vec<Vec<usize>>,
}

impl Split {
    fn new(scenes: Vec<LabeledImage>) -> Self {
        let (x, labels) = scenes.into_iter().map(|s| (s.image, s.labels)).unzip();
        Self { x, labels }
    }
}

fn hflip(x: &Tensor) -> Tensor {
    let (w, rows) = (
        *x.shape().last().expect("image"),
        x.len() / x.shape().last().expect("image"),
    );
    let mut out = x.clone();
    for r in 0..rows {
        out.data_mut()[r * w..(r + 1) * w].reverse();
    }
    out
}

fn hflip_labels(l: &[usize], w: usize) -> Vec<usize> {
    l.chunks(w).flat_map(|r| r.iter().rev().copied()).collect()
}

fn argmax_labels(pred: &Tensor) -> Vec<usize> {
    let (n, k, px) = (
        pred.shape()[0],
        pred.shape()[1],
        pred.len() / (pred.shape()[0] * pred.shape()[1]),
    );
    let d = pred.data();
    let mut out = Vec::with_capacity(n * px);
    for b in 0..n {
        for p in 0..px {
            let mut best = 0;
            for c in 1..k {
                if d[(b * k + c) * px + p] > d[(b * k + best) * px + p] {
                    best = c;
                }
            }
            out.push(best);
        }
    }
    out
}

/// Teacher-style evaluation: argmax predictions scored against the split.
pub fn evaluate_miou(net: &Network, x: &[Tensor], labels: &[Vec<usize>], k: usize) -> Result<f64> {
    let mut conf = Confusion::new(k)?;
    for (xs, ls) in x.chunks(16).zip(labels.chunks(16)) {
        let pred = net.predict(&Tensor::stack(xs)?)?;
        conf.add(&argmax_labels(&pred), &ls.concat(), usize::MAX)?;
    }
    conf.miou()
}

struct Prepared {
    pool: Split,
    val: Split,
}

fn prepare(cfg: &BenchmarkConfig) -> Result<Prepared> {
    let root = SeedStream::new(cfg.scene_seed);
    let mut pool_rng = root.fork("pool");
    let mut val_rng = root.fork("val");
    let pool = (0..cfg.n_labeled + cfg.n_unlabeled)
        .map(|_| gen_scene(&cfg.scene, pool_rng.next_seed()))
        .collect::<Result<Vec<_>>>()?;
    let val = (0..cfg.n_val)
        .map(|_| gen_scene(&cfg.scene, val_rng.next_seed()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        pool: Split::new(pool),
        val: Split::new(val),
    })
}

/// Indices of the labeled subset: a seed-determined shuffle of the pool,
/// first `n_labeled`. The remainder is the unlabeled set.
pub fn labeled_split(n_total: usize, n_labeled: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_total).collect();
    idx.shuffle(&mut SeedStream::new(seed).fork("data").fork("split"));
    let rest = idx.split_off(n_labeled.min(n_total));
    (idx, rest)
}

fn run_cell(
    data: &Prepared,
    cfg: &BenchmarkConfig,
    method: Option<Method>,
    seed: u64,
) -> CellResult {
    let start = Instant::now();
    let n_total = data.pool.x.len();
    let n_labeled = if method.is_none() {
        n_total
    } else {
        cfg.n_labeled
    };
    let train = cfg.cell_config(method.unwrap_or(Method::Baseline), seed);
    let mut result = CellResult {
        method: method.map_or("full".to_string(), |m| m.name().to_string()),
        seed,
        n_labeled,
        miou: f64::NAN,
        student_miou: f64::NAN,
        steps: 0,
        runtime_s: 0.0,
        error: None,
        final_step: None,
    };
    let outcome = (|| -> Result<()> {
        let (lab, unl) = labeled_split(n_total, n_labeled, seed);
        let (c, s) = (3, cfg.scene.size);
        let root = SeedStream::new(seed);
        let net = Network::encoder_decoder(
            c,
            cfg.scene.n_classes,
            cfg.widths,
            root.fork("init").next_seed(),
        )?;
        let mut state = TrainerState::new(net, &train)?;
        let mut rng = root.fork("data").fork("batches");
        for _ in 0..train.steps {
            let mut xs = Vec::with_capacity(train.batch_sup);
            let mut ls = Vec::with_capacity(train.batch_sup * s * s);
            for _ in 0..train.batch_sup {
                let i = lab[rng.random_range(0..lab.len())];
                if rng.random_bool(0.5) {
                    xs.push(hflip(&data.pool.x[i]));
                    ls.extend(hflip_labels(&data.pool.labels[i], s));
                } else {
                    xs.push(data.pool.x[i].clone());
                    ls.extend_from_slice(&data.pool.labels[i]);
                }
            }
            // drawn for every method so equal seeds see equal batches
            let unsup = if unl.is_empty() {
                None
            } else {
                let u: Vec<Tensor> = (0..train.batch_unsup)
                    .map(|_| data.pool.x[unl[rng.random_range(0..unl.len())]].clone())
                    .collect();
                Some(Tensor::stack(&u)?)
            };
            let sup = SupBatch {
                x: Tensor::stack(&xs)?,
                labels: ls,
            };
            let unsup = if train.method == Method::Baseline {
                None
            } else {
                unsup
            };
            let report = train_step(&mut state, &sup, unsup.as_ref(), &train);
            result.steps = state.step;
            result.final_step = Some(report?);
        }
        let k = cfg.scene.n_classes;
        result.miou = evaluate_miou(&state.teacher, &data.val.x, &data.val.labels, k)?;
        result.student_miou = evaluate_miou(&state.student, &data.val.x, &data.val.labels, k)?;
        Ok(())
    })();
    if let Err(e) = outcome {
        result.error = Some(e.to_string());
        result.miou = f64::NAN;
        result.student_miou = f64::NAN;
    }
    result.runtime_s = start.elapsed().as_secs_f64();
    result
}

fn summarize(cells: &[CellResult]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = Vec::new();
    for c in cells {
        if !names.contains(&c.method.as_str()) {
            names.push(&c.method);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let v: Vec<f64> = cells
                .iter()
                .filter(|c| c.method == name && c.error.is_none())
                .map(|c| c.miou)
                .collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var =
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len().max(2) - 1) as f64;
            MethodSummary {
                method: name.to_string(),
                mean,
                std: var.sqrt(),
                runs: v.len(),
            }
        })
        .collect()
}

/// Runs every (method, seed) cell, with up to `jobs` cells in parallel.
/// Cells are reported in method-major order regardless of scheduling.
/// `progress` is called as each cell finishes.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    progress: &(dyn Fn(&CellResult) + Sync),
) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let start = Instant::now();
    let data = prepare(cfg)?;
    let mut jobs: Vec<(Option<Method>, u64)> = Vec::new();
    for &m in &cfg.methods {
        jobs.extend(cfg.seeds.iter().map(|&s| (Some(m), s)));
    }
    if cfg.full_supervision {
        jobs.extend(cfg.seeds.iter().map(|&s| (None, s)));
    }
    let cells = parallel_map(cfg.jobs, &jobs, |&(m, s)| {
        let r = run_cell(&data, cfg, m, s);
        progress(&r);
        r
    });
    Ok(BenchmarkReport {
        summary: summarize(&cells),
        labeled_fraction: cfg.n_labeled as f64 / (cfg.n_labeled + cfg.n_unlabeled) as f64,
        runtime_s: start.elapsed().as_secs_f64(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_nontrivial() {
        let spec = SceneSpec::default();
        let a = gen_scene(&spec, 3).unwrap();
        assert_eq!(a, gen_scene(&spec, 3).unwrap());
        assert_ne!(a, gen_scene(&spec, 4).unwrap());
        assert_eq!(a.image.shape(), &[3, 64, 64]);
        assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.labels.contains(&0));
        assert!(a.labels.iter().any(|&l| l > 0));
    }

    #[test]
    fn every_class_is_common() {
        let spec = SceneSpec {
            size: 16,
            ..SceneSpec::default()
        };
        let mut seen = vec![0usize; spec.n_classes];
        for seed in 0..1000 {
            let s = gen_scene(&spec, seed).unwrap();
            assert!(s.labels.iter().any(|&l| l > 0), "seed {seed}");
            for (k, n) in seen.iter_mut().enumerate() {
                *n += s.labels.contains(&k) as usize;
            }
        }
        assert!(seen.iter().all(|&n| n >= 50), "{seen:?}");
    }

    #[test]
    fn labels_follow_the_shapes() {
        let spec = SceneSpec {
            textures: vec![
                Texture {
                    colour: [0.0; 3],
                    amplitude: 0.0,
                    frequency: 1.0,
                    orientation: 0.0,
                },
                Texture {
                    colour: [1.0; 3],
                    amplitude: 0.0,
                    frequency: 1.0,
                    orientation: 0.0,
                },
            ],
            n_classes: 2,
            colour_jitter: 0.0,
            noise: 0.0,
            ..SceneSpec::default()
        };
        for seed in 0..20 {
            let s = gen_scene(&spec, seed).unwrap();
            // black background, white shapes: the label is the rounded coverage
            for (k, &l) in s.labels.iter().enumerate() {
                let v = s.image.data()[k];
                if v > 0.5 {
                    assert_eq!(l, 1);
                } else if v < 0.5 {
                    assert_eq!(l, 0);
                }
            }
        }
    }

    #[test]
    fn miou_cases() {
        assert_eq!(miou(&[0, 1, 2, 1], &[0, 1, 2, 1], 3, 255).unwrap(), 1.0);
        assert_eq!(miou(&[1, 1], &[0, 0], 2, 255).unwrap(), 0.0);
        let m = miou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2, 255).unwrap();
        assert!((m - 7.0 / 12.0).abs() < 1e-15);
        // ignored pixels and absent classes do not count
        assert_eq!(miou(&[0, 3, 0], &[0, 255, 0], 5, 255).unwrap(), 1.0);
        assert!(miou(&[0], &[0], 0, 255).is_err());
        assert!(miou(&[0, 1], &[0], 2, 255).is_err());
    }

    #[test]
    fn miou_is_relabeling_invariant() {
        let mut rng = SeedStream::new(0);
        let perm = [2, 0, 3, 1];
        for _ in 0..50 {
            let gt: Vec<usize> = (0..64).map(|_| rng.random_range(0..4)).collect();
            let pred: Vec<usize> = (0..64).map(|_| rng.random_range(0..4)).collect();
            let a = miou(&pred, &gt, 4, 255).unwrap();
            let p2: Vec<usize> = pred.iter().map(|&l| perm[l]).collect();
            let g2: Vec<usize> = gt.iter().map(|&l| perm[l]).collect();
            assert!((a - miou(&p2, &g2, 4, 255).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn flips_are_consistent() {
        let x = Tensor::from_fn(&[2, 3, 4], |k| k as f64);
        let f = hflip(&x);
        assert_eq!(f.at(&[1, 2, 0]), x.at(&[1, 2, 3]));
        assert_eq!(hflip(&f), x);
        assert_eq!(hflip_labels(&[0, 1, 2, 3, 4, 5], 3), vec![2, 1, 0, 5, 4, 3]);
    }

    #[test]
    fn split_depends_only_on_seed_and_size() {
        let (a, ra) = labeled_split(50, 10, 3);
        assert_eq!((a.clone(), ra.clone()), labeled_split(50, 10, 3));
        assert_ne!(a, labeled_split(50, 10, 4).0);
        let mut all = [a, ra].concat();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    fn tiny() -> BenchmarkConfig {
        BenchmarkConfig {
            methods: vec![Method::Baseline, Method::Cutmix],
            n_labeled: 2,
            n_unlabeled: 4,
            n_val: 2,
            seeds: vec![0, 1],
            train: TrainConfig {
                steps: 3,
                batch_sup: 2,
                batch_unsup: 2,
                ..TrainConfig::default()
            },
            scene: SceneSpec {
                size: 16,
                ..SceneSpec::default()
            },
            widths: [2, 3, 4],
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn zero_weight_cutmix_matches_baseline() {
        let cfg = BenchmarkConfig {
            cons_weight: Some(0.0),
            ..tiny()
        };
        let r = run_benchmark(&cfg, &|_| ()).unwrap();
        assert_eq!(r.cells.len(), 4);
        for seed in 0..2 {
            let b = &r.cells[seed];
            let c = &r.cells[2 + seed];
            assert_eq!(
                (b.method.as_str(), c.method.as_str()),
                ("baseline", "cutmix")
            );
            assert_eq!(b.miou.to_bits(), c.miou.to_bits());
            assert_eq!(b.final_step.unwrap().l_sup, c.final_step.unwrap().l_sup);
        }
    }

    #[test]
    fn reports_are_reproducible_and_bounded() {
        let cfg = BenchmarkConfig {
            full_supervision: true,
            jobs: 2,
            ..tiny()
        };
        let a = run_benchmark(&cfg, &|_| ()).unwrap();
        let b = run_benchmark(
            &BenchmarkConfig {
                jobs: 1,
                ..cfg.clone()
            },
            &|_| (),
        )
        .unwrap();
        assert_eq!(a.cells.len(), 6);
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.miou.to_bits(), y.miou.to_bits());
            assert!((0.0..=1.0).contains(&x.miou));
        }
        let full = a.cells.iter().find(|c| c.method == "full").unwrap();
        assert_eq!(full.n_labeled, 6);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with(BenchmarkReport::CSV_HEADER));
        assert_eq!(a.summary_for("cutmix").unwrap().runs, 2);
    }

    #[test]
    fn divergence_is_flagged_per_cell() {
        let cfg = BenchmarkConfig {
            methods: vec![Method::Baseline],
            seeds: vec![0],
            train: TrainConfig {
                lr: 1e300,
                ..tiny().train
            },
            ..tiny()
        };
        let r = run_benchmark(&cfg, &|_| ()).unwrap();
        assert!(r.cells[0].error.is_some());
        assert!(r.cells[0].miou.is_nan());
        assert_eq!(r.summary[0].runs, 0);
    }
}
