//! Cluster-assumption toy: trains supervised, isotropic and constrained
//! mean-teacher MLPs on gap and no-gap data and writes PPM renders.
//!
//! cargo run --release --example toy2d -- [steps] [batch_unsup] [seeds] [out_dir] [plan]
//!
//! `plan` lists variants per mode, e.g. `gap:supervised,isotropic;no-gap:constrained`.

use std::path::PathBuf;

use maskcons::toy2d::{
    render_distance_map, render_field, run_toy_suite, signed_distance_map, toy_dataset_for_seed,
    BoundarySpec, DataMode, ToySuiteConfig, ToyVariant, DEFAULT_RESOLUTION,
};

fn parse_plan(s: &str) -> maskcons::Result<Vec<(DataMode, Vec<ToyVariant>)>> {
    s.split(';')
        .map(|part| {
            let (mode, variants) = part
                .split_once(':')
                .unwrap_or((part, "supervised,isotropic,constrained"));
            Ok((
                mode.parse()?,
                variants
                    .split(',')
                    .map(str::parse)
                    .collect::<maskcons::Result<_>>()?,
            ))
        })
        .collect()
}

fn main() -> maskcons::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: usize| {
        args.get(i)
            .map_or(default, |s| s.parse().expect("integer argument"))
    };
    let out = PathBuf::from(args.get(3).map_or("toy2d_out", String::as_str));
    std::fs::create_dir_all(&out)?;

    let mut cfg = ToySuiteConfig {
        seeds: (0..arg(2, 1) as u64).collect(),
        ..ToySuiteConfig::default()
    };
    cfg.toy.train.steps = arg(0, 1500);
    cfg.toy.train.batch_unsup = arg(1, 64);
    if let Some(plan) = args.get(4) {
        cfg.plan = parse_plan(plan)?;
    }

    let dmap = signed_distance_map(&BoundarySpec::default().rasterize(DEFAULT_RESOLUTION)?)?;
    render_distance_map(&out.join("distance.ppm"), &dmap, 0.1)?;

    let runs = run_toy_suite(&dmap, &cfg, &|r| {
        println!(
            "seed {} {:>6} {:<11} accuracy {:.4} accepted {:.3} ({:.1}s)",
            r.seed,
            r.mode,
            r.report.variant,
            r.report.grid_accuracy,
            r.report.accepted,
            r.runtime_s
        );
    })?;
    for r in &runs {
        let data = toy_dataset_for_seed(&dmap, r.mode, r.seed, &cfg)?;
        let name = format!("{}_{}_{}.ppm", r.mode, r.report.variant, r.seed);
        render_field(&out.join(name), &r.report.field, &dmap, &data)?;
    }
    Ok(())
}
