//! One mean-teacher training loop per consistency method on tiny scenes,
//! printing the loss terms and the confidence factor.
//!
//! cargo run --release --example mean_teacher -- [steps]

use maskcons::consistency::{train_step, Method, SupBatch, TrainConfig, TrainerState};
use maskcons::nn::Network;
use maskcons::synthseg::{gen_scene, SceneSpec};
use maskcons::tensor::Tensor;

fn main() -> maskcons::Result<()> {
    let steps = std::env::args()
        .nth(1)
        .map_or(20, |s| s.parse().expect("integer steps"));
    let spec = SceneSpec {
        size: 16,
        ..SceneSpec::default()
    };
    let scenes = (0..8)
        .map(|i| gen_scene(&spec, i))
        .collect::<maskcons::Result<Vec<_>>>()?;
    let sup = SupBatch {
        x: Tensor::stack(
            &scenes[..2]
                .iter()
                .map(|s| s.image.clone())
                .collect::<Vec<_>>(),
        )?,
        labels: scenes[..2]
            .iter()
            .flat_map(|s| s.labels.iter().copied())
            .collect(),
    };
    let unsup = Tensor::stack(
        &scenes[2..6]
            .iter()
            .map(|s| s.image.clone())
            .collect::<Vec<_>>(),
    )?;

    for method in Method::ALL {
        let cfg = TrainConfig {
            steps,
            // a low threshold so the untrained teacher already passes some pixels
            conf_threshold: 0.3,
            ..TrainConfig::for_method(method)
        };
        let net = Network::encoder_decoder(3, spec.n_classes, [4, 8, 8], 7)?;
        let mut state = TrainerState::new(net, &cfg)?;
        let mut last = None;
        for _ in 0..cfg.steps {
            last = Some(train_step(&mut state, &sup, Some(&unsup), &cfg)?);
        }
        let r = last.expect("at least one step");
        println!(
            "{:<8} weight {:<5} step {:>3}: sup {:.4} cons {:.6} conf {:.3} total {:.4}",
            method.name(),
            cfg.cons_weight,
            r.step,
            r.l_sup,
            r.l_cons,
            r.conf_factor,
            r.total
        );
    }
    Ok(())
}
