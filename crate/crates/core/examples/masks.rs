//! CutOut and CutMix masks: draws a few of each, applies them to two scenes
//! and prints the area statistics over many draws.
//!
//! cargo run --release --example masks -- [out_dir] [seed]

use std::path::PathBuf;

use maskcons::io::{to_gray_u8, write_pgm, write_ppm};
use maskcons::perturb::{apply_mask, gen_cutmix_mask, gen_cutout_mask, mix};
use maskcons::rng::SeedStream;
use maskcons::synthseg::{gen_scene, SceneSpec};
use maskcons::tensor::Tensor;

fn rgb_bytes(img: &Tensor) -> Vec<u8> {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let plane = to_gray_u8(img, 0.0, 1.0);
    (0..h * w)
        .flat_map(|p| (0..3).map(move |c| (c, p)))
        .map(|(c, p)| plane[c * h * w + p])
        .collect()
}

fn main() -> maskcons::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("masks_out", String::as_str));
    let seed = args.get(1).map_or(0, |s| s.parse().expect("integer seed"));
    std::fs::create_dir_all(&out)?;

    let spec = SceneSpec::default();
    let n = spec.size;
    let a = gen_scene(&spec, seed)?.image;
    let b = gen_scene(&spec, seed + 1)?.image;
    let mut rng = SeedStream::new(seed).fork("mask");
    for i in 0..4 {
        let cut = gen_cutout_mask(n, n, &mut rng)?;
        let mixm = gen_cutmix_mask(n, n, &mut rng)?;
        write_pgm(
            &out.join(format!("cutout_{i}.pgm")),
            n,
            n,
            &cut.to_gray_u8(),
        )?;
        write_pgm(
            &out.join(format!("cutmix_{i}.pgm")),
            n,
            n,
            &mixm.to_gray_u8(),
        )?;
        let masked = apply_mask(&a, &cut.to_tensor())?;
        let mixed = mix(&a, &b, &mixm.to_tensor())?;
        write_ppm(
            &out.join(format!("cutout_{i}.ppm")),
            n,
            n,
            &rgb_bytes(&masked),
        )?;
        write_ppm(
            &out.join(format!("cutmix_{i}.ppm")),
            n,
            n,
            &rgb_bytes(&mixed),
        )?;
        println!(
            "draw {i}: cutout {}x{} at ({}, {}), cutmix {}x{} at ({}, {})",
            cut.rh, cut.rw, cut.y0, cut.x0, mixm.rh, mixm.rw, mixm.y0, mixm.x0
        );
    }

    let draws = 10_000;
    let (mut cut_frac, mut mix_frac) = (0.0, 0.0);
    for _ in 0..draws {
        cut_frac += gen_cutout_mask(n, n, &mut rng)?.area() as f64;
        mix_frac += gen_cutmix_mask(n, n, &mut rng)?.area() as f64;
    }
    let px = (draws * n * n) as f64;
    println!(
        "mean cut fraction {:.4}, mean cutmix fraction {:.4} over {draws} draws",
        cut_frac / px,
        mix_frac / px
    );
    Ok(())
}
