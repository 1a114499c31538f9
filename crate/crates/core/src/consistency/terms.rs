//! The five consistency terms. Each public `cons_*` returns the loss value;
//! the crate-internal `*_term` variants also return the student parameter
//! gradient and accept precomputed teacher predictions.
//!
//! Teacher outputs are always constants: gradients flow only through the
//! student.

use rand::Rng;

use super::loss::{pixel_shape, sq_err_cons_grad};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::perturb::{
    apply_mask, gen_cutmix_mask, gen_cutout_mask, ict_blend, mix, sample_affine, vat_direction,
    warp, AffineRanges, VatConfig, WarpKind,
};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// Loss value, optional student parameter gradient, and the number of
/// batch items skipped (VAT only).
pub(crate) struct Term {
    pub loss: f64,
    pub grad: Option<Tensor>,
    pub skipped: usize,
}

/// Student output at `input` compared to a constant target.
fn fit(
    student: &Network,
    input: &Tensor,
    target: &Tensor,
    mask: Option<&Tensor>,
    want_grad: bool,
) -> Result<Term> {
    let (y, tape) = student.forward(input, want_grad)?;
    let (loss, dy) = sq_err_cons_grad(&y, target, mask)?;
    let grad = match tape {
        Some(tape) => Some(student.backward(&tape, &dy)?.params),
        None => None,
    };
    Ok(Term {
        loss,
        grad,
        skipped: 0,
    })
}

fn image_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    if x.ndim() != 4 {
        return Err(Error::shape(format!(
            "image perturbations need [N, C, H, W] batches, got {:?}",
            x.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[2], x.shape()[3]))
}

/// One CutOut or CutMix mask per batch item, stacked to `[N, H, W]`.
pub(crate) fn batch_masks(
    n: usize,
    h: usize,
    w: usize,
    cutmix: bool,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    let masks = (0..n)
        .map(|_| {
            let m = if cutmix {
                gen_cutmix_mask(h, w, rng)?
            } else {
                gen_cutout_mask(h, w, rng)?
            };
            Ok(m.to_tensor())
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&masks)
}

pub(crate) fn cutout_term(
    student: &Network,
    t_clean: &Tensor,
    x: &Tensor,
    rng: &mut SeedStream,
    want_grad: bool,
) -> Result<Term> {
    let (n, h, w) = image_dims(x)?;
    let m = batch_masks(n, h, w, false, rng)?;
    fit(student, &apply_mask(x, &m)?, t_clean, Some(&m), want_grad)
}

/// CutOut: the student sees `M * x`, the teacher the original `x`; pixels
/// inside the cut rectangle are excluded from the loss.
pub fn cons_cutout(
    student: &Network,
    teacher: &Network,
    x: &Tensor,
    rng: &mut SeedStream,
) -> Result<f64> {
    let t = teacher.predict(x)?;
    Ok(cutout_term(student, &t, x, rng, false)?.loss)
}

pub(crate) fn cutmix_term(
    student: &Network,
    t_a: &Tensor,
    t_b: &Tensor,
    x_a: &Tensor,
    x_b: &Tensor,
    rng: &mut SeedStream,
    want_grad: bool,
) -> Result<Term> {
    x_a.expect_same_shape(x_b)?;
    let (n, h, w) = image_dims(x_a)?;
    let m = batch_masks(n, h, w, true, rng)?;
    let target = mix(t_a, t_b, &m)?;
    fit(student, &mix(x_a, x_b, &m)?, &target, None, want_grad)
}

/// CutMix: the teacher runs on both unmixed images and its predictions are
/// mixed with the same mask as the student's input.
pub fn cons_cutmix(
    student: &Network,
    teacher: &Network,
    x_a: &Tensor,
    x_b: &Tensor,
    rng: &mut SeedStream,
) -> Result<f64> {
    x_a.expect_same_shape(x_b)?;
    let (t_a, t_b) = (teacher.predict(x_a)?, teacher.predict(x_b)?);
    Ok(cutmix_term(student, &t_a, &t_b, x_a, x_b, rng, false)?.loss)
}

pub(crate) fn stdaug_term(
    student: &Network,
    t_clean: &Tensor,
    x: &Tensor,
    ranges: &AffineRanges,
    rng: &mut SeedStream,
    want_grad: bool,
) -> Result<Term> {
    let (n, _, _) = image_dims(x)?;
    let (mut xs, mut ts, mut valid) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let p = sample_affine(ranges, rng);
        let (xi, v) = warp(&x.slice_outer(i)?, &p, WarpKind::Image)?;
        let (ti, _) = warp(&t_clean.slice_outer(i)?, &p, WarpKind::ProbMap)?;
        xs.push(xi);
        ts.push(ti);
        valid.push(v);
    }
    let valid = Tensor::stack(&valid)?;
    if valid.sum() == 0.0 {
        return Err(Error::invalid("affine warp left no valid pixels"));
    }
    let target = Tensor::stack(&ts)?;
    fit(
        student,
        &Tensor::stack(&xs)?,
        &target,
        Some(&valid),
        want_grad,
    )
}

/// Standard augmentation: the teacher's prediction on `x` is warped by the
/// same affine map as the student's input; pixels sampled from outside the
/// source are excluded.
pub fn cons_stdaug(
    student: &Network,
    teacher: &Network,
    x: &Tensor,
    ranges: &AffineRanges,
    rng: &mut SeedStream,
) -> Result<f64> {
    let t = teacher.predict(x)?;
    Ok(stdaug_term(student, &t, x, ranges, rng, false)?.loss)
}

/// Draws the ICT blend factor.
pub(crate) fn sample_lambda(range: (f64, f64), rng: &mut SeedStream) -> f64 {
    if range.1 > range.0 {
        rng.random_range(range.0..=range.1)
    } else {
        range.0
    }
}

pub(crate) fn ict_term(
    student: &Network,
    t_a: &Tensor,
    t_b: &Tensor,
    x_a: &Tensor,
    x_b: &Tensor,
    lambda: f64,
    want_grad: bool,
) -> Result<Term> {
    let target = ict_blend(t_a, t_b, lambda)?;
    fit(
        student,
        &ict_blend(x_a, x_b, lambda)?,
        &target,
        None,
        want_grad,
    )
}

/// ICT with one blend factor for the whole batch pair.
pub fn cons_ict(
    student: &Network,
    teacher: &Network,
    x_a: &Tensor,
    x_b: &Tensor,
    lambda: f64,
) -> Result<f64> {
    x_a.expect_same_shape(x_b)?;
    let (t_a, t_b) = (teacher.predict(x_a)?, teacher.predict(x_b)?);
    Ok(ict_term(student, &t_a, &t_b, x_a, x_b, lambda, false)?.loss)
}

pub(crate) fn vat_term(
    student: &Network,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut SeedStream,
    want_grad: bool,
) -> Result<Term> {
    let clean = student.predict(x)?;
    let n = x.shape()[0];
    let (r, keep) = match vat_direction(student, x, cfg, rng) {
        Ok(r) => (r, vec![1.0; n]),
        Err(Error::ZeroGradient(_)) => per_item_directions(student, x, cfg, rng)?,
        Err(e) => return Err(e),
    };
    let skipped = keep.iter().filter(|&&k| k == 0.0).count();
    if skipped == n {
        return Ok(Term {
            loss: 0.0,
            grad: want_grad.then(|| Tensor::zeros(student.params().shape())),
            skipped,
        });
    }
    let inner: usize = pixel_shape(&clean)[1..].iter().product();
    let mask = Tensor::from_fn(&pixel_shape(&clean), |i| keep[i / inner]);
    let mut term = fit(student, &x.add(&r)?, &clean, Some(&mask), want_grad)?;
    term.skipped = skipped;
    Ok(term)
}

/// Retries item by item, zeroing the direction of items whose probe
/// gradient vanished.
fn per_item_directions(
    student: &Network,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut SeedStream,
) -> Result<(Tensor, Vec<f64>)> {
    let n = x.shape()[0];
    let mut item_shape = x.shape().to_vec();
    item_shape[0] = 1;
    let mut parts = Vec::with_capacity(n);
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.slice_outer(i)?.reshape(&item_shape)?;
        match vat_direction(student, &xi, cfg, rng) {
            Ok(r) => {
                parts.push(r.slice_outer(0)?);
                keep.push(1.0);
            }
            Err(Error::ZeroGradient(_)) => {
                parts.push(Tensor::zeros(&item_shape[1..]));
                keep.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((Tensor::stack(&parts)?, keep))
}

/// VAT: the student's own clean prediction is the target for its
/// prediction at `x + r_adv`. Items with a vanishing probe gradient are
/// skipped; the second value counts them.
pub fn cons_vat(
    student: &Network,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut SeedStream,
) -> Result<(f64, usize)> {
    let t = vat_term(student, x, cfg, rng, false)?;
    Ok((t.loss, t.skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::sq_err_cons;
    use crate::perturb::{AffineParams, RectMask};

    fn random(shape: &[usize], rng: &mut SeedStream) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(0.0..1.0))
    }

    fn nets(seed: u64) -> (Network, Network) {
        let s = Network::encoder_decoder(2, 3, [3, 4, 4], seed).unwrap();
        let t = Network::encoder_decoder(2, 3, [3, 4, 4], seed + 1000).unwrap();
        (s, t)
    }

    #[test]
    fn identical_nets_identity_perturbations_are_zero() {
        let mut rng = SeedStream::new(0);
        let (s, _) = nets(1);
        let x = random(&[2, 2, 8, 8], &mut rng);
        // CutOut with M = 1 is the plain distance between equal nets.
        let t = s.predict(&x).unwrap();
        let ones = Tensor::full(&[2, 8, 8], 1.0);
        assert_eq!(
            fit(&s, &apply_mask(&x, &ones).unwrap(), &t, Some(&ones), false)
                .unwrap()
                .loss,
            0.0
        );
        assert_eq!(cons_cutmix(&s, &s, &x, &x, &mut rng).unwrap(), 0.0);
        assert!(cons_ict(&s, &s, &x, &x, 0.3).unwrap() < 1e-28);
        assert_eq!(
            cons_ict(&s, &s, &x, &random(&[2, 2, 8, 8], &mut rng), 1.0).unwrap(),
            0.0
        );
        let fixed = AffineRanges {
            scale: (1.0, 1.0),
            max_rotation: 0.0,
            flip_probability: 0.0,
            max_translate: 0.0,
        };
        assert!(cons_stdaug(&s, &s, &x, &fixed, &mut rng).unwrap() < 1e-20);
        let vat = VatConfig {
            eps_scale: 0.0,
            ..VatConfig::default()
        };
        assert_eq!(cons_vat(&s, &x, &vat, &mut rng).unwrap().0, 0.0);
    }

    #[test]
    fn cutout_ignores_teacher_inside_the_cut() {
        let mut rng = SeedStream::new(2);
        let (s, t) = nets(2);
        let x = random(&[1, 2, 8, 8], &mut rng);
        let before = rng.clone();
        let t_clean = t.predict(&x).unwrap();
        let base = cutout_term(&s, &t_clean, &x, &mut rng, false).unwrap().loss;
        let mut replay = before.clone();
        let m = batch_masks(1, 8, 8, false, &mut replay).unwrap();
        let mut poked = t_clean.clone();
        for c in 0..3 {
            for px in 0..64 {
                if m.data()[px] == 0.0 {
                    poked.data_mut()[c * 64 + px] += 7.0;
                }
            }
        }
        let mut again = before;
        let other = cutout_term(&s, &poked, &x, &mut again, false).unwrap().loss;
        assert_eq!(base, other);
    }

    #[test]
    fn cutmix_zero_mask_is_plain_distance() {
        let mut rng = SeedStream::new(3);
        let (s, t) = nets(3);
        let x_a = random(&[2, 2, 8, 8], &mut rng);
        let x_b = random(&[2, 2, 8, 8], &mut rng);
        let zero = Tensor::zeros(&[2, 8, 8]);
        let (t_a, t_b) = (t.predict(&x_a).unwrap(), t.predict(&x_b).unwrap());
        let mixed_in = mix(&x_a, &x_b, &zero).unwrap();
        let target = mix(&t_a, &t_b, &zero).unwrap();
        let via_mix = fit(&s, &mixed_in, &target, None, false).unwrap().loss;
        let direct = sq_err_cons(&s.predict(&x_a).unwrap(), &t_a, None).unwrap();
        assert_eq!(via_mix, direct);
    }

    #[test]
    fn ict_zero_lambda_is_distance_on_second() {
        let mut rng = SeedStream::new(4);
        let (s, t) = nets(4);
        let x_a = random(&[2, 2, 8, 8], &mut rng);
        let x_b = random(&[2, 2, 8, 8], &mut rng);
        let v = cons_ict(&s, &t, &x_a, &x_b, 0.0).unwrap();
        let d = sq_err_cons(&s.predict(&x_b).unwrap(), &t.predict(&x_b).unwrap(), None).unwrap();
        assert!((v - d).abs() < 1e-15);
    }

    #[test]
    fn flip_alignment_matches_manual_flip() {
        let mut rng = SeedStream::new(5);
        let (s, t) = nets(5);
        let x = random(&[1, 2, 8, 8], &mut rng);
        let flip_only = AffineRanges {
            scale: (1.0, 1.0),
            max_rotation: 0.0,
            flip_probability: 1.0,
            max_translate: 0.0,
        };
        let v = cons_stdaug(&s, &t, &x, &flip_only, &mut rng).unwrap();
        let flip = |a: &Tensor| {
            let w = a.shape()[3];
            let mut out = a.clone();
            let (n, c, h) = (a.shape()[0], a.shape()[1], a.shape()[2]);
            for i in 0..n * c * h {
                for j in 0..w {
                    out.data_mut()[i * w + j] = a.data()[i * w + w - 1 - j];
                }
            }
            out
        };
        let manual = sq_err_cons(
            &s.predict(&flip(&x)).unwrap(),
            &flip(&t.predict(&x).unwrap()),
            None,
        )
        .unwrap();
        assert!((v - manual).abs() < 1e-12, "{v} vs {manual}");
    }

    #[test]
    fn out_of_bounds_pixels_carry_no_weight() {
        let mut rng = SeedStream::new(6);
        let (s, t) = nets(6);
        let x = random(&[1, 2, 8, 8], &mut rng);
        // a pure translation by 3 px leaves the leftmost 3 columns invalid
        let p = AffineParams {
            translate_x: 3.0,
            ..AffineParams::identity()
        };
        let (xw, valid) = warp(&x.slice_outer(0).unwrap(), &p, WarpKind::Image).unwrap();
        let (tw, _) = warp(
            &t.predict(&x).unwrap().slice_outer(0).unwrap(),
            &p,
            WarpKind::ProbMap,
        )
        .unwrap();
        let xw = Tensor::stack(&[xw]).unwrap();
        let tw = Tensor::stack(&[tw]).unwrap();
        let valid = Tensor::stack(&[valid]).unwrap();
        assert_eq!(valid.sum(), 40.0);
        let base = fit(&s, &xw, &tw, Some(&valid), false).unwrap().loss;
        let mut poked = tw.clone();
        for c in 0..3 {
            for i in 0..8 {
                for j in 0..3 {
                    poked.data_mut()[c * 64 + i * 8 + j] = 0.5;
                }
            }
        }
        assert_eq!(
            fit(&s, &xw, &poked, Some(&valid), false).unwrap().loss,
            base
        );
    }

    #[test]
    fn vat_loss_is_positive_on_random_nets() {
        let mut rng = SeedStream::new(7);
        for seed in 0..100 {
            let s = Network::encoder_decoder(1, 2, [4, 6, 6], 300 + seed).unwrap();
            let x = random(&[1, 1, 8, 8], &mut rng);
            let (v, skipped) = cons_vat(&s, &x, &VatConfig::default(), &mut rng).unwrap();
            assert_eq!(skipped, 0);
            assert!(v > 0.0, "seed {seed}");
        }
    }

    #[test]
    fn vat_constant_network_is_skipped() {
        let mut s = Network::encoder_decoder(1, 2, [2, 2, 2], 0).unwrap();
        s.set_params(Tensor::zeros(s.params().shape())).unwrap();
        let mut rng = SeedStream::new(8);
        let x = random(&[3, 1, 4, 4], &mut rng);
        assert_eq!(
            cons_vat(&s, &x, &VatConfig::default(), &mut rng).unwrap(),
            (0.0, 3)
        );
    }

    #[test]
    fn rect_mask_matches_batch_mask() {
        let mut a = SeedStream::new(9);
        let mut b = a.clone();
        let m = batch_masks(1, 8, 8, true, &mut a).unwrap();
        let r: RectMask = gen_cutmix_mask(8, 8, &mut b).unwrap();
        assert_eq!(m.data(), r.to_tensor().data());
    }
}
