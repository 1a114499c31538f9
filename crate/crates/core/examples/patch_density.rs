//! Neighbour-patch distance maps and the inter/intra-class triplet ratio on
//! a set of generated scenes.
//!
//! cargo run --release --example patch_density -- [out_dir] [patch] [triplets]

use std::path::PathBuf;

use maskcons::density::{
    neighbor_distance_map, render_distance_pgm, texture_spanning_corpus, triplet_ratio_analysis,
    Neighbourhood, TripletOptions,
};
use maskcons::rng::SeedStream;
use maskcons::synthseg::{gen_scene, SceneSpec};

fn main() -> maskcons::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("density_out", String::as_str));
    let patch = args
        .get(1)
        .map_or(5, |s| s.parse().expect("integer patch size"));
    let n = args
        .get(2)
        .map_or(500, |s| s.parse().expect("integer triplet count"));
    std::fs::create_dir_all(&out)?;

    let spec = SceneSpec::default();
    let corpus = (0..20)
        .map(|i| gen_scene(&spec, 500 + i))
        .collect::<maskcons::Result<Vec<_>>>()?;
    for (i, scene) in corpus.iter().take(3).enumerate() {
        let map = neighbor_distance_map(&scene.image, patch, patch, Neighbourhood::Four)?;
        let overlay = (scene.labels.as_slice(), scene.width(), patch, patch);
        render_distance_pgm(
            &out.join(format!("distance_{i:03}.pgm")),
            &map,
            Some(overlay),
        )?;
        let max = map.data().iter().fold(0.0f64, |a, &v| a.max(v));
        println!(
            "scene {i}: mean neighbour distance {:.4}, max {max:.4}",
            map.mean()
        );
    }

    let opts = TripletOptions::default();
    let mut rng = SeedStream::new(0).fork("triplets");
    let report = triplet_ratio_analysis(&corpus, patch, n, &opts, &mut rng)?;
    println!(
        "scenes: {} triplets, {} excluded, median d_inter / d_intra {:.3}",
        report.ratios.len(),
        report.excluded,
        report.median
    );
    for (lo, hi, count) in report.histogram.iter().filter(|b| b.2 > 0) {
        println!(
            "  [{lo:.2}, {hi:.2})  {}",
            "#".repeat((count * 60).div_ceil(report.ratios.len().max(1)))
        );
    }

    // a few images whose texture runs unbroken across the class border
    let spanning = texture_spanning_corpus(6, 32, &mut rng)?;
    let report = triplet_ratio_analysis(&spanning, patch, n, &opts, &mut rng)?;
    println!("texture-spanning corpus: median ratio {:.3}", report.median);
    Ok(())
}
