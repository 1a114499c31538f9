//! Command-line front end: `maskcons <subcommand> [flags]`.
//!
//! Parameters resolve as flag, then config file entry, then default. The
//! resolved set is written to `manifest.txt` in the output directory before
//! any work starts, in the same `key = value` format, so a manifest can be
//! passed back through `--config` to repeat a run.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::consistency::{write_step_csv, Method};
use crate::density::{
    load_corpus, neighbor_distance_map, render_distance_pgm, triplet_ratio_analysis, LabeledImage,
    Neighbourhood, TripletOptions,
};
use crate::error::Error;
use crate::io::write_pgm;
use crate::nn::gradcheck_suite;
use crate::perturb::{gen_cutmix_mask, gen_cutout_mask};
use crate::rng::SeedStream;
use crate::synthseg::{dump_scenes, gen_scene, run_benchmark, BenchmarkConfig, SceneSpec};
use crate::toy2d::{
    render_distance_map, render_field, run_toy_suite, signed_distance_map, toy_dataset_for_seed,
    write_toy_csv, BoundarySpec, DataMode, ToySuiteConfig, ToyVariant,
};

/// Environment variable overriding the output root.
pub const OUT_ENV: &str = "MASKCONS_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config files or parameter values: exit code 1.
    Config(String),
    /// Failures while running: exit code 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Config(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "maskcons",
    version,
    about = "Mask-based consistency regularization experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key = value config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $MASKCONS_OUT/<subcommand>, else runs/<subcommand>]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel jobs over seeds and methods
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-dimensional cluster-assumption experiments
    Toy2d(Toy2dArgs),
    /// Neighbour-patch distance maps and triplet ratio analysis
    Density(DensityArgs),
    /// Synthetic segmentation benchmark
    Benchmark(BenchmarkArgs),
    /// Finite-difference check of every layer kind and both networks
    Gradcheck(GradcheckArgs),
    /// Writes CutOut or CutMix masks as PGM files
    Maskviz(MaskvizArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Toy2d(_) => "toy2d",
            Command::Density(_) => "density",
            Command::Benchmark(_) => "benchmark",
            Command::Gradcheck(_) => "gradcheck",
            Command::Maskviz(_) => "maskviz",
        }
    }
}

#[derive(Args, Debug)]
struct Toy2dArgs {
    /// First seed [0]
    #[arg(long)]
    seed: Option<String>,
    /// Number of consecutive seeds [1]
    #[arg(long)]
    seeds: Option<String>,
    /// Data modes [gap,no-gap]
    #[arg(long)]
    modes: Option<String>,
    /// Variants run for every mode [supervised,isotropic,constrained]
    #[arg(long)]
    variants: Option<String>,
    /// Training steps [5000]
    #[arg(long)]
    steps: Option<String>,
    /// Unlabeled points per step [256]
    #[arg(long)]
    batch_unsup: Option<String>,
    /// Labeled points per class [2]
    #[arg(long)]
    n_sup: Option<String>,
    /// Unlabeled points [2000]
    #[arg(long)]
    n_unsup: Option<String>,
    /// Width of the empty band in gap mode [0.3]
    #[arg(long)]
    gap_width: Option<String>,
    /// Perturbation standard deviation [0.117]
    #[arg(long)]
    sigma: Option<String>,
    /// Distance tolerance of constrained perturbations [0.016]
    #[arg(long)]
    tol: Option<String>,
    /// Consistency weight [10]
    #[arg(long)]
    cons_weight: Option<String>,
    /// Teacher confidence threshold [0.97]
    #[arg(long)]
    conf_threshold: Option<String>,
    /// Teacher EMA factor [0.99]
    #[arg(long)]
    ema_alpha: Option<String>,
    /// Adam learning rate [0.001]
    #[arg(long)]
    lr: Option<String>,
    /// Hidden layer widths [512,512,512]
    #[arg(long)]
    hidden: Option<String>,
    /// Evaluation grid side [256]
    #[arg(long)]
    grid: Option<String>,
    /// Distance map resolution [512]
    #[arg(long)]
    resolution: Option<String>,
    /// sine, half-plane, or a binary PGM path [sine]
    #[arg(long)]
    boundary: Option<String>,
    /// Sine amplitude [0.3]
    #[arg(long)]
    amplitude: Option<String>,
    /// Sine frequency [2.2]
    #[arg(long)]
    frequency: Option<String>,
    /// Write probability-field renders [true]
    #[arg(long)]
    render: Option<String>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// Directory of <stem>.ppm / <stem>.pgm pairs; empty generates scenes [""]
    #[arg(long)]
    input: Option<String>,
    /// Synthetic scenes when no input is given [20]
    #[arg(long)]
    scenes: Option<String>,
    /// Seed of the first synthetic scene [0]
    #[arg(long)]
    scene_seed: Option<String>,
    /// Synthetic scene side [64]
    #[arg(long)]
    scene_size: Option<String>,
    /// Patch side for both analyses [7]
    #[arg(long)]
    patch: Option<String>,
    /// 4 or 8 neighbours [4]
    #[arg(long)]
    neighbours: Option<String>,
    /// Triplets to sample [1000]
    #[arg(long)]
    triplets: Option<String>,
    /// Triplet sampling seed [0]
    #[arg(long)]
    seed: Option<String>,
    /// Distance maps to render [4]
    #[arg(long)]
    renders: Option<String>,
    /// Draw label boundaries on the renders [true]
    #[arg(long)]
    overlay: Option<String>,
    /// Histogram bins [30]
    #[arg(long)]
    bins: Option<String>,
    /// Histogram upper edge [3]
    #[arg(long)]
    hist_max: Option<String>,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Methods [baseline,cutout,cutmix]
    #[arg(long)]
    methods: Option<String>,
    /// First seed [0]
    #[arg(long)]
    seed: Option<String>,
    /// Number of consecutive seeds [5]
    #[arg(long)]
    seeds: Option<String>,
    /// Labeled scenes [10]
    #[arg(long)]
    n_labeled: Option<String>,
    /// Unlabeled scenes [490]
    #[arg(long)]
    n_unlabeled: Option<String>,
    /// Validation scenes [100]
    #[arg(long)]
    n_val: Option<String>,
    /// Training steps per cell [2000]
    #[arg(long)]
    steps: Option<String>,
    /// Labeled scenes per step
    #[arg(long)]
    batch_sup: Option<String>,
    /// Unlabeled scenes per step
    #[arg(long)]
    batch_unsup: Option<String>,
    /// Adam learning rate [0.001]
    #[arg(long)]
    lr: Option<String>,
    /// Teacher EMA factor [0.99]
    #[arg(long)]
    ema_alpha: Option<String>,
    /// Teacher confidence threshold [0.97]
    #[arg(long)]
    conf_threshold: Option<String>,
    /// Consistency weight for every method, or "default" for per-method weights
    #[arg(long)]
    cons_weight: Option<String>,
    /// Confidence modulation: all, mask-only or off [all]
    #[arg(long)]
    modulation: Option<String>,
    /// Scene side [32]
    #[arg(long)]
    size: Option<String>,
    /// Seed of the scene pool [1000]
    #[arg(long)]
    scene_seed: Option<String>,
    /// Encoder-decoder widths
    #[arg(long)]
    widths: Option<String>,
    /// Add fully supervised reference cells [false]
    #[arg(long)]
    full: Option<String>,
    /// Validation scenes to dump as PPM/PGM pairs [0]
    #[arg(long)]
    dump_scenes: Option<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Floating point precision; only f64 is supported [f64]
    #[arg(long)]
    precision: Option<String>,
    /// Seed of the random networks and inputs [0]
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args, Debug)]
struct MaskvizArgs {
    /// cutmix or cutout [cutmix]
    #[arg(long)]
    kind: Option<String>,
    /// Number of masks [16]
    #[arg(long)]
    n: Option<String>,
    /// Mask seed [7]
    #[arg(long)]
    seed: Option<String>,
    /// Mask height [64]
    #[arg(long)]
    height: Option<String>,
    /// Mask width [64]
    #[arg(long)]
    width: Option<String>,
}

/// Parses a `key = value` config text; `#` starts a comment.
pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let key = k.trim().to_string();
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key {key}", n + 1));
        }
    }
    Ok(map)
}

/// Resolved parameters in resolution order.
struct Params {
    file: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: Vec<(String, String)>,
}

impl Params {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                parse_config(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            used: BTreeSet::new(),
            resolved: Vec::new(),
        })
    }

    fn raw(&mut self, key: &str, flag: &Option<String>, default: &str) -> String {
        self.used.insert(key.to_string());
        let v = flag
            .clone()
            .or_else(|| self.file.get(key).cloned())
            .unwrap_or_else(|| default.to_string());
        self.resolved.push((key.to_string(), v.clone()));
        v
    }

    fn get<T: FromStr>(&mut self, key: &str, flag: &Option<String>, default: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = self.raw(key, flag, default);
        v.parse()
            .map_err(|e| CliError::Config(format!("{key}: cannot parse {v:?}: {e}")))
    }

    fn list<T: FromStr>(
        &mut self,
        key: &str,
        flag: &Option<String>,
        default: &str,
    ) -> CliResult<Vec<T>>
    where
        T::Err: Display,
    {
        let v = self.raw(key, flag, default);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|e| CliError::Config(format!("{key}: cannot parse {s:?}: {e}")))
            })
            .collect()
    }

    /// Rejects config entries no parameter asked for.
    fn finish(&self) -> CliResult<()> {
        match self.file.keys().find(|k| !self.used.contains(*k)) {
            Some(k) => Err(CliError::Config(format!("{k}: unknown config key"))),
            None => Ok(()),
        }
    }
}

fn range_check(ok: bool, key: &str, msg: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{key}: {msg}")))
    }
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub params: Vec<(String, String)>,
    pub build: String,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl RunManifest {
    /// Build identifier: crate version plus `MASKCONS_BUILD_ID` if set at
    /// compile time.
    pub fn build_id() -> String {
        match option_env!("MASKCONS_BUILD_ID") {
            Some(id) => format!("{} {}", env!("CARGO_PKG_VERSION"), id),
            None => env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# maskcons run manifest\n");
        s += &format!("# command = {}\n", self.command);
        let config = self
            .config
            .as_ref()
            .map_or("-".into(), |p| p.display().to_string());
        s += &format!("# config = {config}\n");
        s += &format!("# build = {}\n", self.build);
        s += &format!("# out = {}\n", self.out_dir.display());
        s += &format!("# jobs = {}\n", self.jobs);
        for (k, v) in &self.params {
            s += &format!("{k} = {v}\n");
        }
        s
    }

    pub fn write(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join(MANIFEST_NAME), self.to_text())?;
        Ok(())
    }
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    if let Some(o) = &common.out {
        return o.clone();
    }
    let root =
        std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
    root.join(command)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// A resolved subcommand, ready to run once the manifest is on disk.
type Job = Box<dyn FnOnce(&Path, usize) -> CliResult<()>>;

fn plan_toy2d(a: &Toy2dArgs, p: &mut Params) -> CliResult<Job> {
    let seed: u64 = p.get("seed", &a.seed, "0")?;
    let seeds: u64 = p.get("seeds", &a.seeds, "1")?;
    let modes: Vec<DataMode> = p.list("modes", &a.modes, "gap,no-gap")?;
    let variants: Vec<ToyVariant> =
        p.list("variants", &a.variants, "supervised,isotropic,constrained")?;
    let mut cfg = ToySuiteConfig {
        seeds: (seed..seed + seeds).collect(),
        plan: modes.into_iter().map(|m| (m, variants.clone())).collect(),
        ..ToySuiteConfig::default()
    };
    let t = &mut cfg.toy;
    t.train.steps = p.get("steps", &a.steps, "5000")?;
    t.train.batch_unsup = p.get("batch_unsup", &a.batch_unsup, "256")?;
    cfg.n_sup = p.get("n_sup", &a.n_sup, "2")?;
    cfg.n_unsup = p.get("n_unsup", &a.n_unsup, "2000")?;
    cfg.gap_width = p.get("gap_width", &a.gap_width, "0.3")?;
    t.sigma = p.get("sigma", &a.sigma, "0.117")?;
    t.tol = p.get("tol", &a.tol, "0.016")?;
    t.train.cons_weight = p.get("cons_weight", &a.cons_weight, "10")?;
    t.train.conf_threshold = p.get("conf_threshold", &a.conf_threshold, "0.97")?;
    t.train.ema_alpha = p.get("ema_alpha", &a.ema_alpha, "0.99")?;
    t.train.lr = p.get("lr", &a.lr, "0.001")?;
    t.hidden = p.list("hidden", &a.hidden, "512,512,512")?;
    t.grid = p.get("grid", &a.grid, "256")?;
    let resolution: usize = p.get("resolution", &a.resolution, "512")?;
    let boundary: String = p.get("boundary", &a.boundary, "sine")?;
    let amplitude: f64 = p.get("amplitude", &a.amplitude, "0.3")?;
    let frequency: f64 = p.get("frequency", &a.frequency, "2.2")?;
    let render: bool = p.get("render", &a.render, "true")?;

    range_check(!cfg.seeds.is_empty(), "seeds", "must be >= 1")?;
    range_check(
        !cfg.plan.is_empty() && !variants.is_empty(),
        "variants",
        "nothing to run",
    )?;
    range_check(cfg.n_sup >= 1, "n_sup", "must be >= 1")?;
    range_check(cfg.n_unsup >= 1, "n_unsup", "must be >= 1")?;
    range_check(cfg.gap_width >= 0.0, "gap_width", "must be >= 0")?;
    range_check(
        t.sigma >= 0.0 && t.sigma.is_finite(),
        "sigma",
        "must be finite and >= 0",
    )?;
    range_check(t.tol >= 0.0, "tol", "must be >= 0")?;
    range_check(t.grid >= 1, "grid", "must be >= 1")?;
    range_check(resolution >= 2, "resolution", "must be >= 2")?;
    range_check(t.train.steps >= 1, "steps", "must be >= 1")?;
    range_check(t.train.batch_unsup >= 1, "batch_unsup", "must be >= 1")?;
    t.train.validate()?;
    let spec = match boundary.as_str() {
        "sine" => BoundarySpec::Sine {
            amplitude,
            frequency,
        },
        "half-plane" => BoundarySpec::HalfPlane {
            normal: [1.0, 0.0],
            offset: 0.0,
        },
        path => BoundarySpec::from_pgm(Path::new(path))
            .map_err(|e| CliError::Config(format!("boundary: {e}")))?,
    };

    Ok(Box::new(move |out: &Path, jobs: usize| {
        cfg.jobs = jobs;
        let dmap = signed_distance_map(&spec.rasterize(resolution)?)?;
        render_distance_map(&out.join("distance_map.ppm"), &dmap, 0.1)?;
        let runs = run_toy_suite(&dmap, &cfg, &|r| {
            println!(
                "seed {} {} {}: grid accuracy {:.4}, accepted {:.3}, {:.1}s",
                r.seed,
                r.mode,
                r.report.variant,
                r.report.grid_accuracy,
                r.report.accepted,
                r.runtime_s
            );
        })?;
        let mut csv = create(&out.join("toy2d.csv"))?;
        write_toy_csv(&mut csv, &runs)?;
        csv.flush()?;
        std::fs::create_dir_all(out.join("steps"))?;
        for r in &runs {
            let stem = format!("{}_{}_s{}", r.mode, r.report.variant, r.seed);
            let mut f = create(&out.join("steps").join(format!("{stem}.csv")))?;
            write_step_csv(&mut f, &r.report.steps)?;
            f.flush()?;
            if render {
                let data = toy_dataset_for_seed(&dmap, r.mode, r.seed, &cfg)?;
                render_field(
                    &out.join(format!("field_{stem}.ppm")),
                    &r.report.field,
                    &dmap,
                    &data,
                )?;
            }
        }
        Ok(())
    }))
}

fn plan_density(a: &DensityArgs, p: &mut Params) -> CliResult<Job> {
    let input: String = p.get("input", &a.input, "")?;
    let scenes: usize = p.get("scenes", &a.scenes, "20")?;
    let scene_seed: u64 = p.get("scene_seed", &a.scene_seed, "0")?;
    let scene_size: usize = p.get("scene_size", &a.scene_size, "64")?;
    let patch: usize = p.get("patch", &a.patch, "7")?;
    let neighbours: usize = p.get("neighbours", &a.neighbours, "4")?;
    let triplets: usize = p.get("triplets", &a.triplets, "1000")?;
    let seed: u64 = p.get("seed", &a.seed, "0")?;
    let renders: usize = p.get("renders", &a.renders, "4")?;
    let overlay: bool = p.get("overlay", &a.overlay, "true")?;
    let bins: usize = p.get("bins", &a.bins, "30")?;
    let hist_max: f64 = p.get("hist_max", &a.hist_max, "3")?;

    let neighbours = match neighbours {
        4 => Neighbourhood::Four,
        8 => Neighbourhood::Eight,
        _ => return Err(CliError::Config("neighbours: must be 4 or 8".into())),
    };
    range_check(patch >= 1, "patch", "must be >= 1")?;
    range_check(bins >= 1, "bins", "must be >= 1")?;
    range_check(hist_max > 0.0, "hist_max", "must be > 0")?;
    range_check(
        !input.is_empty() || scenes >= 2,
        "scenes",
        "need at least two scenes",
    )?;
    let spec = SceneSpec {
        size: scene_size,
        ..SceneSpec::default()
    };
    if input.is_empty() {
        spec.validate()?;
    }
    let opts = TripletOptions {
        bins,
        hist_max,
        ..TripletOptions::default()
    };

    Ok(Box::new(move |out: &Path, _jobs: usize| {
        let corpus: Vec<LabeledImage> = if input.is_empty() {
            (0..scenes)
                .map(|i| gen_scene(&spec, scene_seed + i as u64))
                .collect::<crate::Result<_>>()?
        } else {
            load_corpus(Path::new(&input))?
        };
        println!("corpus: {} images", corpus.len());
        for (i, im) in corpus.iter().take(renders).enumerate() {
            let map = neighbor_distance_map(&im.image, patch, patch, neighbours)?;
            let ov = overlay.then(|| (im.labels.as_slice(), im.width(), patch, patch));
            render_distance_pgm(&out.join(format!("distance_{i:03}.pgm")), &map, ov)?;
        }
        let mut rng = SeedStream::new(seed).fork("data");
        let r = triplet_ratio_analysis(&corpus, patch, triplets, &opts, &mut rng)?;
        let mut f = create(&out.join("ratios.csv"))?;
        writeln!(
            f,
            "image,anchor_y,anchor_x,negative_y,negative_x,positive_image,positive_y,positive_x,d_inter,d_intra,ratio"
        )?;
        for t in &r.triplets {
            let ratio = if t.d_intra > 0.0 {
                t.d_inter / t.d_intra
            } else {
                f64::NAN
            };
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.image,
                t.anchor.0,
                t.anchor.1,
                t.negative.0,
                t.negative.1,
                t.positive_image,
                t.positive.0,
                t.positive.1,
                t.d_inter,
                t.d_intra,
                ratio
            )?;
        }
        f.flush()?;
        let mut h = create(&out.join("histogram.csv"))?;
        writeln!(h, "lower,upper,count")?;
        for (lo, hi, c) in &r.histogram {
            writeln!(h, "{lo},{hi},{c}")?;
        }
        h.flush()?;
        let strides: Vec<String> = r.strides.iter().map(usize::to_string).collect();
        let mut s = create(&out.join("summary.csv"))?;
        writeln!(s, "triplets,used,excluded,median,strides")?;
        writeln!(
            s,
            "{},{},{},{},{}",
            r.triplets.len(),
            r.ratios.len(),
            r.excluded,
            r.median,
            strides.join(" ")
        )?;
        s.flush()?;
        println!(
            "median ratio {:.4} over {} triplets ({} excluded)",
            r.median,
            r.ratios.len(),
            r.excluded
        );
        Ok(())
    }))
}

fn plan_benchmark(a: &BenchmarkArgs, p: &mut Params) -> CliResult<Job> {
    let defaults = BenchmarkConfig::default();
    let d = |v: &dyn Display| v.to_string();
    let methods: Vec<Method> = p.list("methods", &a.methods, "baseline,cutout,cutmix")?;
    let seed: u64 = p.get("seed", &a.seed, "0")?;
    let seeds: u64 = p.get("seeds", &a.seeds, "5")?;
    let mut cfg = BenchmarkConfig {
        methods,
        seeds: (seed..seed + seeds).collect(),
        ..defaults.clone()
    };
    cfg.n_labeled = p.get("n_labeled", &a.n_labeled, &d(&defaults.n_labeled))?;
    cfg.n_unlabeled = p.get("n_unlabeled", &a.n_unlabeled, &d(&defaults.n_unlabeled))?;
    cfg.n_val = p.get("n_val", &a.n_val, &d(&defaults.n_val))?;
    let t = &mut cfg.train;
    t.steps = p.get("steps", &a.steps, &d(&defaults.train.steps))?;
    t.batch_sup = p.get("batch_sup", &a.batch_sup, &d(&defaults.train.batch_sup))?;
    t.batch_unsup = p.get(
        "batch_unsup",
        &a.batch_unsup,
        &d(&defaults.train.batch_unsup),
    )?;
    t.lr = p.get("lr", &a.lr, &d(&defaults.train.lr))?;
    t.ema_alpha = p.get("ema_alpha", &a.ema_alpha, &d(&defaults.train.ema_alpha))?;
    t.conf_threshold = p.get(
        "conf_threshold",
        &a.conf_threshold,
        &d(&defaults.train.conf_threshold),
    )?;
    t.modulation = p.get("modulation", &a.modulation, &d(&defaults.train.modulation))?;
    let weight: String = p.get("cons_weight", &a.cons_weight, "default")?;
    cfg.cons_weight = match weight.as_str() {
        "default" => None,
        w => Some(
            w.parse()
                .map_err(|e| CliError::Config(format!("cons_weight: cannot parse {w:?}: {e}")))?,
        ),
    };
    cfg.scene.size = p.get("size", &a.size, &d(&defaults.scene.size))?;
    cfg.scene_seed = p.get("scene_seed", &a.scene_seed, &d(&defaults.scene_seed))?;
    let w = defaults.widths;
    let widths: Vec<usize> = p.list("widths", &a.widths, &format!("{},{},{}", w[0], w[1], w[2]))?;
    cfg.widths = widths
        .try_into()
        .map_err(|_| CliError::Config("widths: need exactly three widths".into()))?;
    cfg.full_supervision = p.get("full", &a.full, "false")?;
    let dump: usize = p.get("dump_scenes", &a.dump_scenes, "0")?;
    if let Some(w) = cfg.cons_weight {
        range_check(
            w >= 0.0 && w.is_finite(),
            "cons_weight",
            "must be finite and >= 0",
        )?;
    }
    range_check(
        cfg.widths.iter().all(|&w| w > 0),
        "widths",
        "must be positive",
    )?;
    range_check(cfg.train.steps >= 1, "steps", "must be >= 1")?;
    cfg.validate()?;

    Ok(Box::new(move |out: &Path, jobs: usize| {
        cfg.jobs = jobs;
        if dump > 0 {
            let root = SeedStream::new(cfg.scene_seed).fork("dump");
            dump_scenes(&out.join("scenes"), &cfg.scene, root.key(), dump)?;
        }
        let report = run_benchmark(&cfg, &|c| match &c.error {
            None => println!(
                "{} seed {}: mIoU {:.4} (student {:.4}), {:.1}s",
                c.method, c.seed, c.miou, c.student_miou, c.runtime_s
            ),
            Some(e) => println!(
                "{} seed {}: failed at step {}: {e}",
                c.method, c.seed, c.steps
            ),
        })?;
        let mut f = create(&out.join("benchmark.csv"))?;
        report.write_csv(&mut f)?;
        f.flush()?;
        let mut s = create(&out.join("summary.csv"))?;
        writeln!(s, "method,mean_miou,std_miou,runs,labeled_fraction")?;
        for m in &report.summary {
            writeln!(
                s,
                "{},{},{},{},{}",
                m.method, m.mean, m.std, m.runs, report.labeled_fraction
            )?;
            println!(
                "{}: {:.4} +- {:.4} over {} runs",
                m.method, m.mean, m.std, m.runs
            );
        }
        s.flush()?;
        let mut e = create(&out.join("cells.csv"))?;
        writeln!(e, "method,seed,miou,student_miou,final_total,error")?;
        for c in &report.cells {
            let total = c.final_step.map_or(f64::NAN, |r| r.total);
            let err = c.error.as_deref().unwrap_or("").replace(',', ";");
            writeln!(
                e,
                "{},{},{},{},{},{}",
                c.method, c.seed, c.miou, c.student_miou, total, err
            )?;
        }
        e.flush()?;
        if report.cells.iter().any(|c| c.error.is_some()) {
            return Err(CliError::Runtime(
                "some benchmark cells failed; see cells.csv".into(),
            ));
        }
        Ok(())
    }))
}

/// Largest relative error accepted by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn plan_gradcheck(a: &GradcheckArgs, p: &mut Params) -> CliResult<Job> {
    let precision: String = p.get("precision", &a.precision, "f64")?;
    let seed: u64 = p.get("seed", &a.seed, "0")?;
    range_check(precision == "f64", "precision", "only f64 is supported")?;
    Ok(Box::new(move |out: &Path, _jobs: usize| {
        let results = gradcheck_suite(seed)?;
        let mut f = create(&out.join("gradcheck.csv"))?;
        writeln!(f, "check,max_rel_err,pass")?;
        let mut failed = Vec::new();
        for r in &results {
            let pass = r.max_rel_err < GRADCHECK_TOLERANCE;
            writeln!(f, "{},{:e},{}", r.name, r.max_rel_err, pass)?;
            println!(
                "{:<16} {:.3e} {}",
                r.name,
                r.max_rel_err,
                if pass { "ok" } else { "FAILED" }
            );
            if !pass {
                failed.push(r.name);
            }
        }
        f.flush()?;
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Runtime(format!(
                "gradient check failed: {}",
                failed.join(", ")
            )))
        }
    }))
}

fn plan_maskviz(a: &MaskvizArgs, p: &mut Params) -> CliResult<Job> {
    let kind: String = p.get("kind", &a.kind, "cutmix")?;
    let n: usize = p.get("n", &a.n, "16")?;
    let seed: u64 = p.get("seed", &a.seed, "7")?;
    let h: usize = p.get("height", &a.height, "64")?;
    let w: usize = p.get("width", &a.width, "64")?;
    range_check(
        kind == "cutmix" || kind == "cutout",
        "kind",
        "must be cutmix or cutout",
    )?;
    range_check(h >= 4 && w >= 4, "height", "masks need at least 4x4 pixels")?;
    Ok(Box::new(move |out: &Path, _jobs: usize| {
        let mut rng = SeedStream::new(seed).fork("mask");
        let mut f = create(&out.join("masks.csv"))?;
        writeln!(f, "index,y0,x0,height,width")?;
        for i in 0..n {
            let m = if kind == "cutmix" {
                gen_cutmix_mask(h, w, &mut rng)?
            } else {
                gen_cutout_mask(h, w, &mut rng)?
            };
            write_pgm(&out.join(format!("mask_{i:03}.pgm")), w, h, &m.to_gray_u8())?;
            writeln!(f, "{i},{},{},{},{}", m.y0, m.x0, m.rh, m.rw)?;
        }
        f.flush()?;
        println!("wrote {n} {kind} masks");
        Ok(())
    }))
}

fn execute(cli: Cli) -> CliResult<()> {
    let mut params = Params::load(cli.common.config.as_deref())?;
    let job = match &cli.command {
        Command::Toy2d(a) => plan_toy2d(a, &mut params)?,
        Command::Density(a) => plan_density(a, &mut params)?,
        Command::Benchmark(a) => plan_benchmark(a, &mut params)?,
        Command::Gradcheck(a) => plan_gradcheck(a, &mut params)?,
        Command::Maskviz(a) => plan_maskviz(a, &mut params)?,
    };
    params.finish()?;
    let jobs = cli.common.jobs.unwrap_or(1);
    range_check(jobs >= 1, "jobs", "must be >= 1")?;
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: cli.common.config.clone(),
        params: params.resolved,
        build: RunManifest::build_id(),
        out_dir: out_dir(&cli.common, cli.command.name()),
        jobs,
    };
    manifest.write()?;
    job(&manifest.out_dir, jobs)
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 1 on configuration errors,
/// 2 on runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let m = parse_config("# c\nsteps = 10 # inline\n\n lr=0.5\n").unwrap();
        assert_eq!(m["steps"], "10");
        assert_eq!(m["lr"], "0.5");
        assert!(parse_config("steps 10").is_err());
        assert!(parse_config("a = 1\na = 2").is_err());
        assert!(parse_config("= 2").is_err());
    }

    #[test]
    fn flags_override_file_and_defaults() {
        let mut p = Params {
            file: parse_config("steps = 10\nlr = 0.5").unwrap(),
            used: BTreeSet::new(),
            resolved: Vec::new(),
        };
        let steps: usize = p.get("steps", &Some("20".into()), "1").unwrap();
        let lr: f64 = p.get("lr", &None, "0.1").unwrap();
        let seed: u64 = p.get("seed", &None, "3").unwrap();
        assert_eq!((steps, lr, seed), (20, 0.5, 3));
        assert!(p.finish().is_ok());
        p.file.insert("stpes".into(), "1".into());
        assert!(matches!(p.finish(), Err(CliError::Config(m)) if m.contains("stpes")));
        assert!(
            matches!(p.get::<usize>("n", &Some("x".into()), "1"), Err(CliError::Config(m)) if m.starts_with("n:"))
        );
    }

    #[test]
    fn manifest_round_trips_as_config() {
        let m = RunManifest {
            command: "maskviz".into(),
            config: None,
            params: vec![("kind".into(), "cutout".into()), ("n".into(), "3".into())],
            build: RunManifest::build_id(),
            out_dir: PathBuf::from("x"),
            jobs: 1,
        };
        let parsed = parse_config(&m.to_text()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed["kind"], "cutout");
    }
}
