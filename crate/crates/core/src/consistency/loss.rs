//! Supervised and consistency losses over `[N, K, ...]` probability maps.
//!
//! Axis 1 is the class axis; every other position is a "pixel". Pixel masks
//! and label maps are laid out like the prediction with axis 1 removed.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const CLAMP: f64 = 1e-12;

/// `(n, k, inner)` for a `[N, K, ...]` tensor.
pub(crate) fn layout(t: &Tensor) -> Result<(usize, usize, usize)> {
    if t.ndim() < 2 {
        return Err(Error::shape(format!(
            "expected [N, K, ...] predictions, got {:?}",
            t.shape()
        )));
    }
    let (n, k) = (t.shape()[0], t.shape()[1]);
    Ok((n, k, t.shape()[2..].iter().product()))
}

/// Shape of a per-pixel mask for predictions shaped like `t`.
pub fn pixel_shape(t: &Tensor) -> Vec<usize> {
    let mut s = vec![t.shape()[0]];
    s.extend_from_slice(&t.shape()[2..]);
    s
}

fn check_mask(pred: &Tensor, mask: Option<&Tensor>) -> Result<()> {
    if let Some(m) = mask {
        if m.shape() != pixel_shape(pred).as_slice() {
            return Err(Error::shape(format!(
                "pixel mask {:?} does not match predictions {:?}",
                m.shape(),
                pred.shape()
            )));
        }
    }
    Ok(())
}

/// Mean over non-ignored pixels of `-ln p[target]`, probabilities clamped
/// at 1e-12.
pub fn cross_entropy(pred: &Tensor, target: &[usize], ignore_label: usize) -> Result<f64> {
    cross_entropy_grad(pred, target, ignore_label).map(|(v, _)| v)
}

/// [`cross_entropy`] and its gradient with respect to `pred`.
pub fn cross_entropy_grad(
    pred: &Tensor,
    target: &[usize],
    ignore_label: usize,
) -> Result<(f64, Tensor)> {
    let (n, k, inner) = layout(pred)?;
    if target.len() != n * inner {
        return Err(Error::shape(format!(
            "{} labels for {} pixels",
            target.len(),
            n * inner
        )));
    }
    let count = target.iter().filter(|&&c| c != ignore_label).count();
    if count == 0 {
        return Err(Error::invalid("every pixel carries the ignore label"));
    }
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for (pos, &c) in target.iter().enumerate() {
        if c == ignore_label {
            continue;
        }
        if c >= k {
            return Err(Error::invalid(format!("label {c} >= {k} classes")));
        }
        let at = ((pos / inner) * k + c) * inner + pos % inner;
        let p = pred.data()[at];
        loss -= p.max(CLAMP).ln();
        if p > CLAMP {
            grad.data_mut()[at] = -1.0 / (p * count as f64);
        }
    }
    Ok((loss / count as f64, grad))
}

/// Squared error summed over classes, then averaged over the pixels where
/// `pixel_mask` is nonzero (all pixels when absent). Mask values act as
/// weights.
pub fn sq_err_cons(a: &Tensor, b: &Tensor, pixel_mask: Option<&Tensor>) -> Result<f64> {
    sq_err_cons_grad(a, b, pixel_mask).map(|(v, _)| v)
}

/// [`sq_err_cons`] and its gradient with respect to `a`.
pub fn sq_err_cons_grad(
    a: &Tensor,
    b: &Tensor,
    pixel_mask: Option<&Tensor>,
) -> Result<(f64, Tensor)> {
    a.expect_same_shape(b)?;
    check_mask(a, pixel_mask)?;
    let (_, k, inner) = layout(a)?;
    let weight = |pos: usize| pixel_mask.map_or(1.0, |m| m.data()[pos]);
    let pixels = a.len() / k;
    let total: f64 = (0..pixels).map(weight).sum();
    if !(total > 0.0) {
        return Err(Error::invalid("consistency mask selects no pixels"));
    }
    let mut grad = Tensor::zeros(a.shape());
    let mut loss = 0.0;
    for pos in 0..pixels {
        let m = weight(pos);
        if m == 0.0 {
            continue;
        }
        let base = (pos / inner) * k * inner + pos % inner;
        for c in 0..k {
            let at = base + c * inner;
            let d = a.data()[at] - b.data()[at];
            loss += m * d * d;
            grad.data_mut()[at] = 2.0 * m * d / total;
        }
    }
    Ok((loss / total, grad))
}

/// Binary cross-entropy of `student` against the soft `target`, summed over
/// classes and averaged over all `N` positions; positions with mask 0
/// contribute nothing but still count in the denominator.
pub fn bce_cons_grad(
    student: &Tensor,
    target: &Tensor,
    pixel_mask: Option<&Tensor>,
) -> Result<(f64, Tensor)> {
    student.expect_same_shape(target)?;
    check_mask(student, pixel_mask)?;
    let (_, k, inner) = layout(student)?;
    let pixels = student.len() / k;
    let mut grad = Tensor::zeros(student.shape());
    let mut loss = 0.0;
    for pos in 0..pixels {
        let m = pixel_mask.map_or(1.0, |t| t.data()[pos]);
        if m == 0.0 {
            continue;
        }
        let base = (pos / inner) * k * inner + pos % inner;
        for c in 0..k {
            let at = base + c * inner;
            let p = student.data()[at].clamp(CLAMP, 1.0 - CLAMP);
            let t = target.data()[at];
            loss -= m * (t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            let s = student.data()[at];
            if s > CLAMP && s < 1.0 - CLAMP {
                grad.data_mut()[at] = m * (p - t) / (p * (1.0 - p)) / pixels as f64;
            }
        }
    }
    Ok((loss / pixels as f64, grad))
}

/// Per-pixel maximum class probability, laid out like a pixel mask.
pub fn confidence(pred: &Tensor) -> Result<Tensor> {
    let (n, k, inner) = layout(pred)?;
    if n * inner == 0 || k == 0 {
        return Err(Error::EmptyAxis);
    }
    let data = (0..n * inner)
        .map(|pos| {
            let base = (pos / inner) * k * inner + pos % inner;
            (0..k)
                .map(|c| pred.data()[base + c * inner])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Tensor::new(&pixel_shape(pred), data)
}

/// Fraction of pixels whose confidence exceeds `threshold`.
pub fn confidence_factor(teacher_pred: &Tensor, threshold: f64) -> Result<f64> {
    let conf = confidence(teacher_pred)?;
    let above = conf.data().iter().filter(|&&c| c > threshold).count();
    Ok(above as f64 / conf.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax_axis1;
    use crate::rng::SeedStream;
    use rand::Rng;

    fn probmap(shape: &[usize], rng: &mut SeedStream) -> Tensor {
        softmax_axis1(&Tensor::from_fn(shape, |_| rng.random_range(-3.0..3.0))).unwrap()
    }

    #[test]
    fn cross_entropy_cases() {
        let one_hot = Tensor::new(&[1, 2, 2], vec![1., 0., 0., 1.]).unwrap();
        assert!(cross_entropy(&one_hot, &[0, 1], 255).unwrap() < 1e-11);
        let uniform = Tensor::full(&[2, 3, 2, 2], 1.0 / 3.0);
        let ce = cross_entropy(&uniform, &[0, 1, 2, 0, 1, 1, 2, 0], 255).unwrap();
        assert!((ce - 3f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&one_hot, &[255, 255], 255).is_err());
        assert!(cross_entropy(&one_hot, &[2, 0], 255).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_sum() {
        let mut rng = SeedStream::new(0);
        let p = probmap(&[2, 4, 3, 5], &mut rng);
        let labels: Vec<usize> = (0..30)
            .map(|i| {
                if i % 7 == 3 {
                    255
                } else {
                    rng.random_range(0..4)
                }
            })
            .collect();
        let mut sum = 0.0;
        let mut count = 0;
        for b in 0..2 {
            for y in 0..3 {
                for x in 0..5 {
                    let c = labels[b * 15 + y * 5 + x];
                    if c != 255 {
                        sum -= p.at(&[b, c, y, x]).ln();
                        count += 1;
                    }
                }
            }
        }
        let ce = cross_entropy(&p, &labels, 255).unwrap();
        assert!((ce - sum / count as f64).abs() < 1e-10);
    }

    #[test]
    fn sq_err_cases() {
        let mut rng = SeedStream::new(1);
        let a = probmap(&[2, 3, 4, 4], &mut rng);
        assert_eq!(sq_err_cons(&a, &a, None).unwrap(), 0.0);
        let a = Tensor::new(&[1, 2], vec![1., 0.]).unwrap();
        let b = Tensor::new(&[1, 2], vec![0., 1.]).unwrap();
        assert_eq!(sq_err_cons(&a, &b, None).unwrap(), 2.0);
        assert!(sq_err_cons(&a, &b, Some(&Tensor::zeros(&[1]))).is_err());
    }

    #[test]
    fn sq_err_matches_naive_oracle() {
        let mut rng = SeedStream::new(2);
        for k in [2, 3, 7] {
            let a = probmap(&[3, k, 5, 4], &mut rng);
            let b = probmap(&[3, k, 5, 4], &mut rng);
            let m = Tensor::from_fn(&[3, 5, 4], |_| rng.random_range(0..2) as f64);
            let (mut num, mut den) = (0.0, 0.0);
            for n in 0..3 {
                for y in 0..5 {
                    for x in 0..4 {
                        let w = m.at(&[n, y, x]);
                        let d: f64 = (0..k)
                            .map(|c| (a.at(&[n, c, y, x]) - b.at(&[n, c, y, x])).powi(2))
                            .sum();
                        num += w * d;
                        den += w;
                    }
                }
            }
            let v = sq_err_cons(&a, &b, Some(&m)).unwrap();
            assert!((v - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SeedStream::new(3);
        let a = probmap(&[2, 3, 2, 2], &mut rng);
        let b = probmap(&[2, 3, 2, 2], &mut rng);
        let m = Tensor::from_fn(&[2, 2, 2], |i| (i % 3 != 0) as u8 as f64);
        let labels = vec![0, 1, 2, 1, 255, 0, 2, 2];
        let losses: [&dyn Fn(&Tensor) -> (f64, Tensor); 3] = [
            &|x| sq_err_cons_grad(x, &b, Some(&m)).unwrap(),
            &|x| bce_cons_grad(x, &b, Some(&m)).unwrap(),
            &|x| cross_entropy_grad(x, &labels, 255).unwrap(),
        ];
        for f in losses {
            let (_, g) = f(&a);
            for i in 0..a.len() {
                let mut hi = a.clone();
                hi.data_mut()[i] += 1e-6;
                let mut lo = a.clone();
                lo.data_mut()[i] -= 1e-6;
                let num = (f(&hi).0 - f(&lo).0) / 2e-6;
                assert!((num - g.data()[i]).abs() < 1e-6 * num.abs().max(1.0), "{i}");
            }
        }
    }

    #[test]
    fn bce_is_minimized_at_the_target() {
        let mut rng = SeedStream::new(4);
        let t = probmap(&[16, 2], &mut rng);
        let (at_target, _) = bce_cons_grad(&t, &t, None).unwrap();
        let entropy: f64 = t
            .data()
            .iter()
            .map(|&p| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
            .sum::<f64>()
            / 16.0;
        assert!((at_target - entropy).abs() < 1e-12);
        for _ in 0..20 {
            let s = probmap(&[16, 2], &mut rng);
            assert!(bce_cons_grad(&s, &t, None).unwrap().0 >= at_target);
        }
    }

    #[test]
    fn confidence_factor_cases() {
        assert_eq!(
            confidence_factor(&Tensor::new(&[2, 2], vec![1., 0., 0., 1.]).unwrap(), 0.97).unwrap(),
            1.0
        );
        let p = Tensor::new(&[2, 2], vec![0.99, 0.01, 0.5, 0.5]).unwrap();
        assert_eq!(confidence_factor(&p, 0.97).unwrap(), 0.5);
        let mut rng = SeedStream::new(5);
        let q = probmap(&[3, 4, 5, 5], &mut rng);
        assert_eq!(confidence_factor(&q, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn confidence_factor_is_monotone() {
        let mut rng = SeedStream::new(6);
        let p = probmap(&[1, 2, 8, 8], &mut rng);
        let base = confidence_factor(&p, 0.7).unwrap();
        for px in 0..64 {
            let mut q = p.clone();
            // sharpen one pixel towards its argmax class
            let (hi, lo) = if q.data()[px] >= q.data()[64 + px] {
                (px, 64 + px)
            } else {
                (64 + px, px)
            };
            let shift = q.data()[lo] * 0.5;
            q.data_mut()[hi] += shift;
            q.data_mut()[lo] -= shift;
            assert!(confidence_factor(&q, 0.7).unwrap() >= base);
        }
    }
}
