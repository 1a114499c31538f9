//! Semi-supervised segmentation benchmark on generated scenes: baseline,
//! CutOut and CutMix cells over several seeds, written as CSV.
//!
//! cargo run --release --example benchmark -- [steps] [seeds] [jobs] [out.csv]

use std::fs::File;
use std::io::BufWriter;

use maskcons::synthseg::{run_benchmark, BenchmarkConfig};

fn main() -> maskcons::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: usize| {
        args.get(i)
            .map_or(default, |s| s.parse().expect("integer argument"))
    };
    let mut cfg = BenchmarkConfig {
        seeds: (0..arg(1, 2) as u64).collect(),
        jobs: arg(2, 1),
        ..BenchmarkConfig::default()
    };
    cfg.train.steps = arg(0, 200);

    let report = run_benchmark(&cfg, &|c| {
        println!(
            "{:<8} seed {} mIoU {:.4} ({:.1}s)",
            c.method, c.seed, c.miou, c.runtime_s
        );
    })?;
    for s in &report.summary {
        println!(
            "{:<8} mean {:.4} std {:.4} over {} runs",
            s.method, s.mean, s.std, s.runs
        );
    }
    if let Some(path) = args.get(3) {
        report.write_csv(&mut BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}
