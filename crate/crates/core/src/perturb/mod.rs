//! Perturbation generators: rectangle masks and mixing, affine augmentation,
//! interpolation blending and virtual adversarial directions.

mod affine;
mod mask;
mod vat;

pub use affine::{sample_affine, warp, warp_map, AffineMap, AffineParams, AffineRanges, WarpKind};
pub use mask::{
    cutmix_dims, gen_cutmix_mask, gen_cutout_mask, rect_dims, Polarity, RectMask, CUTMIX_ASPECT,
    CUTOUT_AREA, CUTOUT_ASPECT,
};
pub use vat::{image_gradient_magnitude, vat_direction, EpsMode, VatConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Expands `mask` to `shape`. Accepted mask shapes: equal to `shape`;
/// `[N, H, W]` against `[N, C, H, W]` (broadcast over channels); or equal
/// to its trailing dimensions. A 3D mask against a 4D shape is always read
/// as `[N, H, W]`, also when `N == C`.
pub fn broadcast_mask(mask: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let ms = mask.shape();
    if ms == shape {
        return Ok(mask.clone());
    }
    let total: usize = shape.iter().product();
    if shape.len() == 4 && ms.len() == 3 && ms[0] == shape[0] && ms[1..] == shape[2..] {
        let (c, plane) = (shape[1], shape[2] * shape[3]);
        return Tensor::new(
            shape,
            (0..total)
                .map(|i| {
                    let n = i / (c * plane);
                    mask.data()[n * plane + i % plane]
                })
                .collect(),
        );
    }
    if ms.len() <= shape.len() && ms == &shape[shape.len() - ms.len()..] {
        let m = mask.len();
        return Tensor::new(shape, (0..total).map(|i| mask.data()[i % m]).collect());
    }
    Err(Error::shape(format!(
        "mask {ms:?} does not broadcast to {shape:?}"
    )))
}

/// `(1 - m) * a + m * b`: takes `b` where the mask is 1.
pub fn mix(a: &Tensor, b: &Tensor, m: &Tensor) -> Result<Tensor> {
    a.expect_same_shape(b)?;
    let m = broadcast_mask(m, a.shape())?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(m.data())
        .map(|((&x, &y), &k)| (1.0 - k) * x + k * y)
        .collect();
    Tensor::new(a.shape(), data)
}

/// Convex blend `lambda * a + (1 - lambda) * b`.
pub fn ict_blend(a: &Tensor, b: &Tensor, lambda: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "blend factor {lambda} outside [0, 1]"
        )));
    }
    a.zip_map(b, |x, y| lambda * x + (1.0 - lambda) * y)
}

/// Elementwise product with a broadcast mask.
pub fn apply_mask(x: &Tensor, m: &Tensor) -> Result<Tensor> {
    x.mul(&broadcast_mask(m, x.shape())?)
}

/// Reversed-order pairing within a batch: item `i` pairs with `B - 1 - i`.
pub fn reverse_pairs(x: &Tensor) -> Result<Tensor> {
    let n = *x
        .shape()
        .first()
        .ok_or_else(|| Error::shape("pairing needs a batch axis"))?;
    let items = (0..n)
        .rev()
        .map(|i| x.slice_outer(i))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(shape: &[usize], rng: &mut SeedStream) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn mix_identities() {
        let mut rng = SeedStream::new(0);
        let a = random(&[2, 3, 4, 5], &mut rng);
        let b = random(&[2, 3, 4, 5], &mut rng);
        assert_eq!(mix(&a, &b, &Tensor::zeros(&[4, 5])).unwrap(), a);
        assert_eq!(mix(&a, &b, &Tensor::full(&[4, 5], 1.0)).unwrap(), b);
        let m = gen_cutmix_mask(4, 5, &mut rng).unwrap().to_tensor();
        assert_eq!(mix(&a, &a, &m).unwrap(), a);
    }

    #[test]
    fn mix_selects_by_mask() {
        let a = Tensor::zeros(&[1, 2, 2]);
        let b = Tensor::full(&[1, 2, 2], 1.0);
        let m = Tensor::new(&[2, 2], vec![1., 0., 0., 1.]).unwrap();
        assert_eq!(mix(&a, &b, &m).unwrap().data(), &[1., 0., 0., 1.]);
    }

    #[test]
    fn per_sample_masks_broadcast_over_channels() {
        let x = Tensor::full(&[2, 3, 2, 2], 1.0);
        let m = Tensor::new(&[2, 2, 2], vec![1., 0., 0., 0., 0., 0., 0., 1.]).unwrap();
        let y = apply_mask(&x, &m).unwrap();
        assert_eq!(y.sum(), 6.0);
        assert_eq!(y.at(&[0, 2, 0, 0]), 1.0);
        assert_eq!(y.at(&[1, 1, 1, 1]), 1.0);
        assert!(broadcast_mask(&Tensor::zeros(&[3, 3]), &[1, 2, 2]).is_err());
    }

    #[test]
    fn per_sample_masks_win_when_batch_equals_channels() {
        let x = Tensor::full(&[2, 2, 1, 2], 1.0);
        let m = Tensor::new(&[2, 1, 2], vec![1., 0., 0., 1.]).unwrap();
        let y = apply_mask(&x, &m).unwrap();
        assert_eq!(y.data(), &[1., 0., 1., 0., 0., 1., 0., 1.]);
    }

    #[test]
    fn blend_cases() {
        let mut rng = SeedStream::new(1);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[3, 4], &mut rng);
        assert_eq!(ict_blend(&a, &b, 1.0).unwrap(), a);
        let h = ict_blend(&Tensor::zeros(&[2]), &Tensor::full(&[2], 1.0), 0.5).unwrap();
        assert_eq!(h.data(), &[0.5, 0.5]);
        assert!(ict_blend(&a, &b, 1.5).is_err());
        assert!(ict_blend(&a, &Tensor::zeros(&[4, 3]), 0.5).is_err());
    }

    #[test]
    fn blend_of_probmaps_is_a_probmap() {
        let mut rng = SeedStream::new(2);
        let p = crate::nn::softmax_axis1(&random(&[2, 3, 4, 4], &mut rng)).unwrap();
        let q = crate::nn::softmax_axis1(&random(&[2, 3, 4, 4], &mut rng)).unwrap();
        let r = ict_blend(&p, &q, 0.3).unwrap();
        let s = r.reduce(1, crate::tensor::Reduce::Sum).unwrap();
        assert!(s.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reverse_pairing() {
        let x = Tensor::new(&[3, 1], vec![1., 2., 3.]).unwrap();
        assert_eq!(reverse_pairs(&x).unwrap().data(), &[3., 2., 1.]);
    }

    proptest! {
        #[test]
        fn mix_swap_sums(seed in any::<u64>()) {
            let mut rng = SeedStream::new(seed);
            let a = random(&[2, 8, 8], &mut rng);
            let b = random(&[2, 8, 8], &mut rng);
            let m = gen_cutmix_mask(8, 8, &mut rng).unwrap().to_tensor();
            let lhs = mix(&a, &b, &m).unwrap().add(&mix(&b, &a, &m).unwrap()).unwrap();
            prop_assert_eq!(lhs, a.add(&b).unwrap());
        }
    }
}
