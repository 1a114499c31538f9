//! Virtual adversarial perturbation directions for dense prediction.

use rand_distr::{Distribution, Normal};

use crate::consistency::sq_err_cons_grad;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::SeedStream;
use crate::tensor::Tensor;

/// How the adversarial radius is derived for each image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpsMode {
    /// `eps_scale` times the mean over pixels of the spatial gradient
    /// magnitude, averaged over channels.
    GradientMean,
    /// Same, with the maximum over pixels.
    GradientMax,
    /// Same, with the L2 norm of the whole gradient field.
    GradientNorm,
    /// `eps_scale` itself.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VatConfig {
    /// Probe radius relative to the per-image standard deviation of `x`.
    pub xi: f64,
    pub eps_scale: f64,
    pub eps_mode: EpsMode,
}

impl Default for VatConfig {
    fn default() -> Self {
        Self {
            xi: 1e-3,
            eps_scale: 1.0,
            eps_mode: EpsMode::GradientMean,
        }
    }
}

impl VatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0) {
            return Err(Error::invalid(format!(
                "VAT xi must be > 0, got {}",
                self.xi
            )));
        }
        if !(self.eps_scale >= 0.0) {
            return Err(Error::invalid("VAT eps_scale must be >= 0"));
        }
        Ok(())
    }
}

/// Spatial gradient magnitude of a `[C, H, W]` image using forward
/// differences over the region where both are defined.
pub fn image_gradient_magnitude(img: &[f64], c: usize, h: usize, w: usize, mode: EpsMode) -> f64 {
    if h < 2 || w < 2 {
        return 0.0;
    }
    let mut per_channel = Vec::with_capacity(c);
    for ch in 0..c {
        let p = &img[ch * h * w..(ch + 1) * h * w];
        let (mut sum, mut max, mut sq) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..h - 1 {
            for j in 0..w - 1 {
                let dx = p[i * w + j + 1] - p[i * w + j];
                let dy = p[(i + 1) * w + j] - p[i * w + j];
                let g2 = dx * dx + dy * dy;
                let g = g2.sqrt();
                sum += g;
                max = max.max(g);
                sq += g2;
            }
        }
        per_channel.push(match mode {
            EpsMode::GradientMean => sum / ((h - 1) * (w - 1)) as f64,
            EpsMode::GradientMax => max,
            EpsMode::GradientNorm => sq.sqrt(),
            EpsMode::Fixed => 1.0,
        });
    }
    per_channel.iter().sum::<f64>() / c as f64
}

/// Per-item adversarial radii for a batch.
pub(crate) fn radii(x: &Tensor, cfg: &VatConfig) -> Vec<f64> {
    let n = x.shape()[0];
    let item = x.len() / n;
    (0..n)
        .map(|i| {
            let data = &x.data()[i * item..(i + 1) * item];
            let g = match (cfg.eps_mode, x.ndim()) {
                (EpsMode::Fixed, _) => 1.0,
                (mode, 4) => {
                    let s = x.shape();
                    image_gradient_magnitude(data, s[1], s[2], s[3], mode)
                }
                _ => 1.0,
            };
            cfg.eps_scale * g
        })
        .collect()
}

/// Adversarial perturbation `r_adv = eps * g / |g|` per batch item, where
/// `g` is the gradient of the squared-error prediction change at a small
/// random probe `r`. The network is treated as frozen.
pub fn vat_direction(
    net: &Network,
    x: &Tensor,
    cfg: &VatConfig,
    rng: &mut SeedStream,
) -> Result<Tensor> {
    cfg.validate()?;
    let n = *x
        .shape()
        .first()
        .ok_or_else(|| Error::shape("VAT needs a batch axis"))?;
    let item = x.len() / n.max(1);
    let clean = net.predict(x)?;
    let mut probe = x.clone();
    for i in 0..n {
        let data = &x.data()[i * item..(i + 1) * item];
        let mean = data.iter().sum::<f64>() / item as f64;
        let std = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / item as f64).sqrt();
        let xi = if std > 0.0 { cfg.xi * std } else { cfg.xi };
        let normal = Normal::new(0.0, xi / (item as f64).sqrt()).expect("finite std");
        for v in &mut probe.data_mut()[i * item..(i + 1) * item] {
            *v += normal.sample(rng);
        }
    }
    let (y, tape) = net.forward(&probe, true)?;
    let (_, dy) = sq_err_cons_grad(&y, &clean, None)?;
    let g = net.backward(&tape.expect("cached"), &dy)?.input;
    let eps = radii(x, cfg);
    let mut r = g;
    for (i, &e) in eps.iter().enumerate() {
        let chunk = &mut r.data_mut()[i * item..(i + 1) * item];
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroGradient(format!(
                "VAT probe gradient for item {i}"
            )));
        }
        for v in chunk.iter_mut() {
            *v *= e / norm;
        }
    }
    Ok(r)
}
