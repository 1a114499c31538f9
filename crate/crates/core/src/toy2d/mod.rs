//! Two-dimensional cluster-assumption experiments: a binary boundary on
//! `[-1, 1]^2`, a few labeled points, many unlabeled ones, and a mean-teacher
//! MLP trained with isotropic or distance-constrained perturbations.

mod data;
mod distance;
mod render;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

pub use data::{
    constrained_perturb, isotropic_perturb, sample_toy_dataset, DataMode, ToyDataset, SUP_MARGIN,
};
pub use distance::{
    signed_distance_map, squared_edt, BoundarySpec, DistanceMap, Raster, DEFAULT_RESOLUTION,
};
pub use render::{render_distance_map, render_field};

use crate::consistency::{
    bce_cons_grad, confidence, cross_entropy_grad, StepReport, TrainConfig, TrainerState,
};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::SeedStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyVariant {
    Supervised,
    Isotropic,
    Constrained,
}

impl ToyVariant {
    pub const ALL: [ToyVariant; 3] = [
        ToyVariant::Supervised,
        ToyVariant::Isotropic,
        ToyVariant::Constrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyVariant::Supervised => "supervised",
            ToyVariant::Isotropic => "isotropic",
            ToyVariant::Constrained => "constrained",
        }
    }
}

impl fmt::Display for ToyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config("variant", format!("unknown toy variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyConfig {
    /// Uses `cons_weight`, `conf_threshold`, `ema_alpha`, `steps`,
    /// `batch_unsup`, `lr` and `seed`. All supervised points form every
    /// supervised batch.
    pub train: TrainConfig,
    pub hidden: Vec<usize>,
    pub sigma: f64,
    pub tol: f64,
    /// Evaluation grid side.
    pub grid: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                cons_weight: 10.0,
                steps: 5000,
                batch_unsup: 256,
                ..TrainConfig::default()
            },
            hidden: vec![512, 512, 512],
            sigma: 0.117,
            tol: 0.016,
            grid: 256,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyReport {
    pub variant: ToyVariant,
    pub grid_accuracy: f64,
    /// Teacher probability of class 1 on the evaluation grid, row 0 at the
    /// top of the domain.
    pub field: Tensor,
    /// Fraction of perturbations accepted (1 for isotropic runs).
    pub accepted: f64,
    /// Per-step losses; `conf_factor` is the fraction of the unsupervised
    /// batch that entered the consistency loss.
    pub steps: Vec<StepReport>,
}

/// Centres of a `g x g` grid over the domain, row-major from the top.
pub fn grid_points(g: usize) -> Vec<[f64; 2]> {
    let pitch = 2.0 / g as f64;
    (0..g * g)
        .map(|k| {
            let (i, j) = (k / g, k % g);
            [
                -1.0 + (j as f64 + 0.5) * pitch,
                1.0 - (i as f64 + 0.5) * pitch,
            ]
        })
        .collect()
}

fn points_tensor(points: &[[f64; 2]]) -> Result<Tensor> {
    Tensor::new(
        &[points.len(), 2],
        points.iter().flatten().copied().collect(),
    )
}

/// Probability of class 1 at each point, evaluated in chunks.
pub fn predict_field(net: &Network, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(4096) {
        let y = net.predict(&points_tensor(chunk)?)?;
        out.extend(y.data().chunks(2).map(|p| p[1]));
    }
    Ok(out)
}

/// Fraction of grid points where the network's argmax agrees with the sign
/// of the distance map.
pub fn grid_accuracy(field: &[f64], points: &[[f64; 2]], dmap: &DistanceMap) -> f64 {
    let hits = field
        .iter()
        .zip(points)
        .filter(|(&p1, &pt)| ((p1 > 0.5) as usize) == dmap.class_at(pt))
        .count();
    hits as f64 / points.len() as f64
}

/// Trains a fresh MLP on `data` and evaluates the teacher on the grid.
pub fn run_toy_experiment(
    variant: ToyVariant,
    data: &ToyDataset,
    dmap: &DistanceMap,
    cfg: &ToyConfig,
) -> Result<ToyReport> {
    if data.sup.is_empty() {
        return Err(Error::invalid("toy dataset has no supervised points"));
    }
    let semi = variant != ToyVariant::Supervised;
    if semi && data.unsup.is_empty() {
        return Err(Error::invalid(
            "semi-supervised toy runs need unsupervised points",
        ));
    }
    let mut widths = vec![2];
    widths.extend(&cfg.hidden);
    widths.push(2);
    let root = SeedStream::new(cfg.train.seed);
    let net = Network::mlp(&widths, true, root.fork("init").next_seed())?;
    let mut state = TrainerState::new(net, &cfg.train)?;
    let mut data_rng = root.fork("data");

    let sup_x = points_tensor(&data.sup.iter().map(|s| s.0).collect::<Vec<_>>())?;
    let sup_y: Vec<usize> = data.sup.iter().map(|s| s.1).collect();
    let (mut accepted, mut proposed) = (0usize, 0usize);
    let mut steps = Vec::with_capacity(cfg.train.steps);

    for _ in 0..cfg.train.steps {
        let (y, tape) = state.student.forward(&sup_x, true)?;
        let (l_sup, dy) = cross_entropy_grad(&y, &sup_y, usize::MAX)?;
        let mut grads = state.student.backward(&tape.expect("cached"), &dy)?.params;
        let (mut l_cons, mut conf_factor) = (0.0, 0.0);
        if semi {
            let b = cfg.train.batch_unsup;
            let mut clean = Vec::with_capacity(b);
            let mut moved = Vec::with_capacity(b);
            for _ in 0..b {
                let p = data.unsup[data_rng.random_range(0..data.unsup.len())];
                let q = match variant {
                    ToyVariant::Isotropic => Some(isotropic_perturb(p, cfg.sigma, &mut state.rng)),
                    _ => constrained_perturb(p, dmap, cfg.sigma, cfg.tol, &mut state.rng),
                };
                proposed += 1;
                if let Some(q) = q {
                    accepted += 1;
                    clean.push(p);
                    moved.push(q);
                }
            }
            // rejected and unconfident points add nothing but count in the
            // mean, so only the rest reach the networks and the result is
            // rescaled by kept / b
            if !clean.is_empty() {
                let target = state.teacher.predict(&points_tensor(&clean)?)?;
                let conf = confidence(&target)?;
                let thr = cfg.train.conf_threshold;
                let kept: Vec<usize> = (0..clean.len()).filter(|&i| conf.data()[i] > thr).collect();
                conf_factor = kept.len() as f64 / b as f64;
                if !kept.is_empty() {
                    let xs: Vec<[f64; 2]> = kept.iter().map(|&i| moved[i]).collect();
                    let ts: Vec<f64> = kept
                        .iter()
                        .flat_map(|&i| [target.data()[2 * i], target.data()[2 * i + 1]])
                        .collect();
                    let (ys, tape) = state.student.forward(&points_tensor(&xs)?, true)?;
                    let (l, dys) = bce_cons_grad(&ys, &Tensor::new(&[kept.len(), 2], ts)?, None)?;
                    l_cons = l * conf_factor;
                    let g = state.student.backward(&tape.expect("cached"), &dys)?.params;
                    grads.axpy(cfg.train.cons_weight * conf_factor, &g)?;
                }
            }
        }
        let total = l_sup + cfg.train.cons_weight * l_cons;
        if !total.is_finite() {
            return Err(Error::Divergence {
                step: state.step,
                what: format!("toy total loss {total}"),
            });
        }
        state.apply(&grads)?;
        steps.push(StepReport {
            step: state.step,
            l_sup,
            l_cons,
            conf_factor,
            total,
            skipped: 0,
        });
    }

    let points = grid_points(cfg.grid);
    let field = predict_field(&state.teacher, &points)?;
    let grid_accuracy = grid_accuracy(&field, &points, dmap);
    Ok(ToyReport {
        variant,
        grid_accuracy,
        field: Tensor::new(&[cfg.grid, cfg.grid], field)?,
        accepted: if proposed == 0 {
            1.0
        } else {
            accepted as f64 / proposed as f64
        },
        steps,
    })
}

/// Several seeds and data modes, each with its own list of variants.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySuiteConfig {
    pub seeds: Vec<u64>,
    pub plan: Vec<(DataMode, Vec<ToyVariant>)>,
    pub n_sup: usize,
    pub n_unsup: usize,
    pub gap_width: f64,
    /// `train.seed` is replaced by each suite seed.
    pub toy: ToyConfig,
    pub jobs: usize,
}

impl Default for ToySuiteConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            plan: vec![
                (DataMode::Gap, ToyVariant::ALL.to_vec()),
                (DataMode::NoGap, ToyVariant::ALL.to_vec()),
            ],
            n_sup: 2,
            n_unsup: 2000,
            gap_width: 0.3,
            toy: ToyConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyRun {
    pub seed: u64,
    pub mode: DataMode,
    pub report: ToyReport,
    pub runtime_s: f64,
}

pub const TOY_CSV_HEADER: &str = "seed,mode,variant,grid_accuracy,accepted,steps,runtime_s";

/// Dataset of one suite seed. Supervised points depend only on the seed,
/// so both modes share them.
pub fn toy_dataset_for_seed(
    dmap: &DistanceMap,
    mode: DataMode,
    seed: u64,
    cfg: &ToySuiteConfig,
) -> Result<ToyDataset> {
    let mut rng = SeedStream::new(seed).fork("data").fork("dataset");
    sample_toy_dataset(dmap, mode, cfg.n_sup, cfg.n_unsup, cfg.gap_width, &mut rng)
}

/// Runs every (seed, mode, variant) of the plan, seed-major, with up to
/// `jobs` runs in parallel. `progress` is called as each run finishes.
pub fn run_toy_suite(
    dmap: &DistanceMap,
    cfg: &ToySuiteConfig,
    progress: &(dyn Fn(&ToyRun) + Sync),
) -> Result<Vec<ToyRun>> {
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for (mode, variants) in &cfg.plan {
            jobs.extend(variants.iter().map(|&v| (seed, *mode, v)));
        }
    }
    let runs = crate::jobs::parallel_map(cfg.jobs, &jobs, |&(seed, mode, variant)| {
        let start = std::time::Instant::now();
        let data = toy_dataset_for_seed(dmap, mode, seed, cfg)?;
        let mut toy = cfg.toy.clone();
        toy.train.seed = seed;
        let report = run_toy_experiment(variant, &data, dmap, &toy)?;
        let run = ToyRun {
            seed,
            mode,
            report,
            runtime_s: start.elapsed().as_secs_f64(),
        };
        progress(&run);
        Ok(run)
    });
    runs.into_iter().collect()
}

pub fn write_toy_csv(out: &mut impl std::io::Write, runs: &[ToyRun]) -> Result<()> {
    writeln!(out, "{TOY_CSV_HEADER}")?;
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3}",
            r.seed,
            r.mode,
            r.report.variant,
            r.report.grid_accuracy,
            r.report.accepted,
            r.report.steps.len(),
            r.runtime_s
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(steps: usize) -> ToyConfig {
        ToyConfig {
            train: TrainConfig {
                cons_weight: 10.0,
                steps,
                batch_unsup: 16,
                ..TrainConfig::default()
            },
            hidden: vec![16, 16],
            grid: 32,
            ..ToyConfig::default()
        }
    }

    fn setup() -> (DistanceMap, ToyDataset) {
        let dm = signed_distance_map(&BoundarySpec::default().rasterize(128).unwrap()).unwrap();
        let mut rng = SeedStream::new(0);
        let d = sample_toy_dataset(&dm, DataMode::Gap, 2, 200, 0.3, &mut rng).unwrap();
        (dm, d)
    }

    #[test]
    fn supervised_run_beats_chance() {
        let (dm, d) = setup();
        let r = run_toy_experiment(ToyVariant::Supervised, &d, &dm, &small_cfg(200)).unwrap();
        assert!(r.grid_accuracy > 0.5, "{}", r.grid_accuracy);
        assert_eq!(r.steps.len(), 200);
        assert!(r.steps.iter().all(|s| s.l_cons == 0.0));
    }

    #[test]
    fn runs_are_reproducible() {
        let (dm, d) = setup();
        let a = run_toy_experiment(ToyVariant::Constrained, &d, &dm, &small_cfg(20)).unwrap();
        let b = run_toy_experiment(ToyVariant::Constrained, &d, &dm, &small_cfg(20)).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.field, b.field);
        assert!(a.accepted > 0.0 && a.accepted < 1.0);
    }

    #[test]
    fn rejected_points_contribute_nothing() {
        let mut rng = SeedStream::new(5);
        let s =
            crate::nn::softmax_axis1(&Tensor::from_fn(&[6, 2], |_| rng.random_range(-2.0..2.0)))
                .unwrap();
        let t =
            crate::nn::softmax_axis1(&Tensor::from_fn(&[6, 2], |_| rng.random_range(-2.0..2.0)))
                .unwrap();
        let mask = Tensor::new(&[6], vec![1., 0., 1., 1., 0., 1.]).unwrap();
        let (full, _) = bce_cons_grad(&s, &t, Some(&mask)).unwrap();
        // scrambling the student at rejected points changes nothing
        let mut s2 = s.clone();
        for row in [1, 4] {
            s2.data_mut()[row * 2] = 0.9;
            s2.data_mut()[row * 2 + 1] = 0.1;
        }
        assert_eq!(bce_cons_grad(&s2, &t, Some(&mask)).unwrap().0, full);
    }

    #[test]
    fn kept_subset_matches_masked_mean() {
        let mut rng = SeedStream::new(6);
        let s =
            crate::nn::softmax_axis1(&Tensor::from_fn(&[8, 2], |_| rng.random_range(-2.0..2.0)))
                .unwrap();
        let t =
            crate::nn::softmax_axis1(&Tensor::from_fn(&[8, 2], |_| rng.random_range(-2.0..2.0)))
                .unwrap();
        let keep = [0usize, 3, 4, 7];
        let mask = Tensor::from_fn(&[8], |i| keep.contains(&i) as u8 as f64);
        let (full, gfull) = bce_cons_grad(&s, &t, Some(&mask)).unwrap();
        let pick = |x: &Tensor| {
            Tensor::new(
                &[4, 2],
                keep.iter()
                    .flat_map(|&i| [x.data()[2 * i], x.data()[2 * i + 1]])
                    .collect(),
            )
            .unwrap()
        };
        let (sub, gsub) = bce_cons_grad(&pick(&s), &pick(&t), None).unwrap();
        assert!((sub * 0.5 - full).abs() < 1e-15);
        for (j, &i) in keep.iter().enumerate() {
            for c in 0..2 {
                assert!((gsub.data()[2 * j + c] * 0.5 - gfull.data()[2 * i + c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn grid_points_cover_the_domain() {
        let p = grid_points(4);
        assert_eq!(p[0], [-0.75, 0.75]);
        assert_eq!(p[15], [0.75, -0.75]);
    }

    #[test]
    fn suite_shares_supervised_points_and_orders_runs() {
        let dm = signed_distance_map(&BoundarySpec::default().rasterize(64).unwrap()).unwrap();
        let cfg = ToySuiteConfig {
            seeds: vec![3, 4],
            plan: vec![
                (DataMode::Gap, vec![ToyVariant::Supervised]),
                (
                    DataMode::NoGap,
                    vec![ToyVariant::Supervised, ToyVariant::Isotropic],
                ),
            ],
            n_unsup: 50,
            toy: small_cfg(5),
            jobs: 2,
            ..ToySuiteConfig::default()
        };
        let runs = run_toy_suite(&dm, &cfg, &|_| ()).unwrap();
        assert_eq!(runs.len(), 6);
        assert_eq!((runs[3].seed, runs[3].mode), (4, DataMode::Gap));
        // supervised runs never see the unlabeled points
        assert_eq!(runs[0].report.field, runs[1].report.field);
        let gap = toy_dataset_for_seed(&dm, DataMode::Gap, 3, &cfg).unwrap();
        let no_gap = toy_dataset_for_seed(&dm, DataMode::NoGap, 3, &cfg).unwrap();
        assert_eq!(gap.sup, no_gap.sup);
        let mut csv = Vec::new();
        write_toy_csv(&mut csv, &runs).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
    }
}
