//! Signed distance maps for the toy boundaries and the acceptance rate of
//! contour-constrained perturbations.
//!
//! cargo run --release --example distance_map -- [out_dir] [resolution]

use std::path::PathBuf;

use maskcons::rng::SeedStream;
use maskcons::toy2d::{
    constrained_perturb, render_distance_map, signed_distance_map, BoundarySpec,
};
use rand::Rng;

fn main() -> maskcons::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("distance_out", String::as_str));
    let res = args
        .get(1)
        .map_or(256, |s| s.parse().expect("integer resolution"));
    std::fs::create_dir_all(&out)?;

    let boundaries = [
        ("sine", BoundarySpec::default()),
        (
            "half_plane",
            BoundarySpec::HalfPlane {
                normal: [0.6, 0.8],
                offset: 0.1,
            },
        ),
    ];
    for (name, spec) in boundaries {
        let dmap = signed_distance_map(&spec.rasterize(res)?)?;
        render_distance_map(&out.join(format!("{name}.ppm")), &dmap, 0.1)?;
        let (lo, hi) = dmap
            .grid
            .data()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));

        let mut rng = SeedStream::new(0).fork(name);
        let draws = 20_000;
        let accepted = (0..draws)
            .filter(|_| {
                let p = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                constrained_perturb(p, &dmap, 0.117, 0.016, &mut rng).is_some()
            })
            .count();
        println!(
            "{name:<10} m in [{lo:.3}, {hi:.3}], band |m| < 0.05 covers {:.3}, constrained acceptance {:.3}",
            dmap.band_fraction(0.05),
            accepted as f64 / draws as f64
        );
    }
    Ok(())
}
