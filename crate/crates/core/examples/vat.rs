//! Virtual adversarial perturbations for segmentation: the image-adaptive
//! radius, the adversarial direction and the resulting consistency loss.
//!
//! cargo run --release --example vat

use maskcons::consistency::cons_vat;
use maskcons::nn::Network;
use maskcons::perturb::{image_gradient_magnitude, vat_direction, EpsMode, VatConfig};
use maskcons::rng::SeedStream;
use maskcons::synthseg::{gen_scene, SceneSpec};
use maskcons::tensor::Tensor;
use rand_distr::{Distribution, StandardNormal};

/// Gaussian direction with the same norm as `r`.
fn random_like(r: &Tensor, rng: &mut SeedStream) -> Tensor {
    let g = Tensor::from_fn(r.shape(), |_| StandardNormal.sample(rng));
    g.scale(r.norm() / g.norm())
}

fn main() -> maskcons::Result<()> {
    let spec = SceneSpec {
        size: 16,
        ..SceneSpec::default()
    };
    let x = Tensor::stack(&[gen_scene(&spec, 1)?.image, gen_scene(&spec, 2)?.image])?;
    let net = Network::encoder_decoder(3, spec.n_classes, [4, 8, 8], 3)?;
    let cfg = VatConfig::default();
    let n = spec.size;
    for i in 0..2 {
        let img = &x.data()[i * 3 * n * n..(i + 1) * 3 * n * n];
        for mode in [EpsMode::GradientMean, EpsMode::GradientMax] {
            println!(
                "item {i} {mode:?}: gradient magnitude {:.4}",
                image_gradient_magnitude(img, 3, n, n, mode)
            );
        }
    }

    let mut rng = SeedStream::new(0).fork("vat");
    let r = vat_direction(&net, &x, &cfg, &mut rng)?;
    let clean = net.predict(&x)?;
    let adv = net.predict(&x.add(&r)?)?.sub(&clean)?.sq_norm();
    let rand = net
        .predict(&x.add(&random_like(&r, &mut rng))?)?
        .sub(&clean)?
        .sq_norm();
    println!(
        "|r_adv| {:.4}: prediction change {adv:.3e} (random direction, same norm: {rand:.3e})",
        r.norm()
    );

    let (loss, skipped) = cons_vat(&net, &x, &cfg, &mut rng)?;
    println!("cons_vat {loss:.3e}, {skipped} items skipped");
    Ok(())
}
