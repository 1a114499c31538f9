//! Central-difference verification of [`Network::backward`].

use rand::seq::index::sample;

use rand::Rng;

use super::{LayerSpec, Network};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// Scalar losses of a network output used by the gradient checker.
#[derive(Clone, Debug)]
pub enum ScalarLoss {
    /// Sum of all outputs.
    Sum,
    /// `sum(w * y)` for a fixed weight tensor shaped like the output.
    Weighted(Tensor),
    /// Mean over positions of `-ln p[label]`; labels index axis 1, one per
    /// `(batch, spatial position)` in row-major order.
    CrossEntropy(Vec<usize>),
    /// `sum((y - target)^2)`.
    SquaredError(Tensor),
}

impl ScalarLoss {
    pub fn value_and_grad(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        match self {
            ScalarLoss::Sum => Ok((y.sum(), Tensor::full(y.shape(), 1.0))),
            ScalarLoss::Weighted(w) => Ok((y.mul(w)?.sum(), w.clone())),
            ScalarLoss::SquaredError(t) => {
                let d = y.sub(t)?;
                Ok((d.sq_norm(), d.scale(2.0)))
            }
            ScalarLoss::CrossEntropy(labels) => {
                if y.ndim() < 2 {
                    return Err(Error::shape("cross-entropy needs [N, K, ...] outputs"));
                }
                let (n, k) = (y.shape()[0], y.shape()[1]);
                let inner: usize = y.shape()[2..].iter().product();
                if labels.len() != n * inner {
                    return Err(Error::shape(format!(
                        "{} labels for {} positions",
                        labels.len(),
                        n * inner
                    )));
                }
                let count = labels.len() as f64;
                let mut g = Tensor::zeros(y.shape());
                let mut loss = 0.0;
                for (pos, &c) in labels.iter().enumerate() {
                    if c >= k {
                        return Err(Error::invalid(format!("label {c} >= {k} classes")));
                    }
                    let (b, i) = (pos / inner, pos % inner);
                    let at = (b * k + c) * inner + i;
                    let p = y.data()[at];
                    loss -= p.ln();
                    g.data_mut()[at] = -1.0 / (p * count);
                }
                Ok((loss / count, g))
            }
        }
    }
}

fn loss_at(net: &Network, x: &Tensor, loss: &ScalarLoss) -> Result<f64> {
    let v = loss.value_and_grad(&net.predict(x)?)?.0;
    if !v.is_finite() {
        return Err(Error::NonFinite("loss in finite-difference check".into()));
    }
    Ok(v)
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Worst relative error between backprop and central differences over a
/// random subset of `n_params` parameters (all, if fewer) and every input
/// element. The relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check(
    net: &Network,
    x: &Tensor,
    loss: &ScalarLoss,
    h: f64,
    n_params: usize,
    rng: &mut SeedStream,
) -> Result<f64> {
    let (y, tape) = net.forward(x, true)?;
    let (l0, dy) = loss.value_and_grad(&y)?;
    if !l0.is_finite() {
        return Err(Error::NonFinite("loss in finite-difference check".into()));
    }
    let grads = net.backward(&tape.expect("cached"), &dy)?;
    let total = net.param_count();
    let picks = sample(rng, total, n_params.min(total));
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in picks.iter() {
        let orig = net.params().data()[i];
        probe.params_mut().data_mut()[i] = orig + h;
        let up = loss_at(&probe, x, loss)?;
        probe.params_mut().data_mut()[i] = orig - h;
        let down = loss_at(&probe, x, loss)?;
        probe.params_mut().data_mut()[i] = orig;
        worst = worst.max(rel_err(grads.params.data()[i], (up - down) / (2.0 * h)));
    }
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + h;
        let up = loss_at(net, &xp, loss)?;
        xp.data_mut()[i] = orig - h;
        let down = loss_at(net, &xp, loss)?;
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err(grads.input.data()[i], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

/// Jacobian of the outputs with respect to the inputs for a single example
/// (`x` shaped `[1, ...]`), assembled row by row from backward passes with
/// unit output covectors. Returned as `[outputs, inputs]`.
pub fn input_jacobian(net: &Network, x: &Tensor) -> Result<Tensor> {
    if x.shape().first() != Some(&1) {
        return Err(Error::shape("input_jacobian expects a batch of one"));
    }
    let (y, tape) = net.forward(x, true)?;
    let tape = tape.expect("cached");
    let (n_out, n_in) = (y.len(), x.len());
    let mut j = Vec::with_capacity(n_out * n_in);
    for o in 0..n_out {
        let mut e = Tensor::zeros(y.shape());
        e.data_mut()[o] = 1.0;
        j.extend_from_slice(net.backward(&tape, &e)?.input.data());
    }
    Tensor::new(&[n_out, n_in], j)
}

/// Outcome of one gradient check in [`gradcheck_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_err: f64,
}

/// Gradient checks for every layer kind in isolation, the toy MLP
/// (`2 -> 512 x 3 -> 2`) and the segmentation encoder-decoder, each on
/// random inputs with a random weighted-sum or cross-entropy loss.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<CheckResult>> {
    use LayerSpec::*;
    let root = SeedStream::new(seed);
    let mut rng = root.fork("gradcheck");
    let random = |shape: &[usize], rng: &mut SeedStream| {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    };
    let dense = Dense {
        inputs: 4,
        outputs: 3,
    };
    let conv = Conv3x3 {
        in_channels: 2,
        out_channels: 3,
    };
    let cases: Vec<(&'static str, Vec<LayerSpec>, Vec<usize>, bool)> = vec![
        ("dense", vec![dense], vec![3, 4], false),
        (
            "relu",
            vec![
                Dense {
                    inputs: 4,
                    outputs: 6,
                },
                Relu,
                Dense {
                    inputs: 6,
                    outputs: 3,
                },
            ],
            vec![3, 4],
            false,
        ),
        ("softmax_head", vec![dense, SoftmaxHead], vec![3, 4], true),
        ("conv3x3", vec![conv], vec![2, 2, 6, 6], false),
        ("maxpool2", vec![conv, MaxPool2], vec![2, 2, 6, 6], false),
        ("upsample2", vec![conv, Upsample2], vec![2, 2, 4, 4], false),
        (
            "concat_skip",
            vec![
                conv,
                Relu,
                Conv3x3 {
                    in_channels: 3,
                    out_channels: 4,
                },
                ConcatSkip { source: 1 },
                Conv3x3 {
                    in_channels: 7,
                    out_channels: 2,
                },
            ],
            vec![2, 2, 6, 6],
            false,
        ),
    ];
    let mut out = Vec::new();
    for (name, layers, x_shape, ce) in cases {
        let net = Network::new(layers, rng.next_seed())?;
        let x = random(&x_shape, &mut rng);
        let y = net.predict(&x)?;
        let loss = if ce {
            let k = y.shape()[1];
            ScalarLoss::CrossEntropy((0..y.len() / k).map(|_| rng.random_range(0..k)).collect())
        } else {
            ScalarLoss::Weighted(random(y.shape(), &mut rng))
        };
        let max_rel_err = finite_diff_check(&net, &x, &loss, 1e-5, 256, &mut rng)?;
        out.push(CheckResult { name, max_rel_err });
    }
    let mlp = Network::mlp(&[2, 512, 512, 512, 2], true, rng.next_seed())?;
    let x = random(&[4, 2], &mut rng);
    let loss = ScalarLoss::CrossEntropy(vec![0, 1, 1, 0]);
    out.push(CheckResult {
        name: "toy_mlp",
        max_rel_err: finite_diff_check(&mlp, &x, &loss, 1e-5, 256, &mut rng)?,
    });
    let ed = Network::encoder_decoder(3, 4, [4, 6, 8], rng.next_seed())?;
    let x = random(&[2, 3, 8, 8], &mut rng);
    let loss = ScalarLoss::CrossEntropy((0..2 * 64).map(|_| rng.random_range(0..4)).collect());
    out.push(CheckResult {
        name: "encoder_decoder",
        max_rel_err: finite_diff_check(&ed, &x, &loss, 1e-5, 256, &mut rng)?,
    });
    Ok(out)
}
