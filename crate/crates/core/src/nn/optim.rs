use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments for parameters shaped like `params`, default betas.
    pub fn new(params: &Tensor, lr: f64) -> Self {
        Self {
            m: Tensor::zeros(params.shape()),
            v: Tensor::zeros(params.shape()),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut Tensor, grads: &Tensor) -> Result<()> {
        params.expect_same_shape(grads)?;
        self.m.expect_same_shape(grads)?;
        grads.check_finite("adam gradient")?;
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1, self.beta2);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for (((p, &g), m), v) in params
            .data_mut()
            .iter_mut()
            .zip(grads.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Mean-teacher weight averaging factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmaConfig {
    alpha: f64,
}

impl EmaConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::invalid(format!(
                "EMA alpha must lie in [0, 1), got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { alpha: 0.99 }
    }
}

/// `teacher <- alpha * teacher + (1 - alpha) * student`, elementwise.
pub fn ema_update(teacher: &Tensor, student: &Tensor, cfg: EmaConfig) -> Result<Tensor> {
    let a = cfg.alpha;
    teacher.zip_map(student, |t, s| a * t + (1.0 - a) * s)
}

/// [`ema_update`] writing into `teacher`.
pub fn ema_update_in_place(teacher: &mut Tensor, student: &Tensor, cfg: EmaConfig) -> Result<()> {
    teacher.expect_same_shape(student)?;
    let a = cfg.alpha;
    for (t, &s) in teacher.data_mut().iter_mut().zip(student.data()) {
        *t = a * *t + (1.0 - a) * s;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_place_ema_matches() {
        let t = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let s = Tensor::new(&[3], vec![0.3, 4.0, -1.5]).unwrap();
        let cfg = EmaConfig::new(0.9).unwrap();
        let mut u = t.clone();
        ema_update_in_place(&mut u, &s, cfg).unwrap();
        assert_eq!(u, ema_update(&t, &s, cfg).unwrap());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::scalar(0.0).reshape(&[1]).unwrap();
        let mut adam = AdamState::new(&p, 0.1);
        adam.step(&mut p, &Tensor::full(&[1], 1.0)).unwrap();
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let mut w = Tensor::full(&[1], 1.0);
        let mut adam = AdamState::new(&w, 0.05);
        let mut last = 1.0;
        for _ in 0..10 {
            let g = w.scale(2.0);
            adam.step(&mut w, &g).unwrap();
            let f = w.data()[0].powi(2);
            assert!(f < last);
            last = f;
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut w = Tensor::full(&[1], 1.0);
        let mut adam = AdamState::new(&w, 0.05);
        assert!(adam
            .step(&mut w, &Tensor::full(&[1], f64::INFINITY))
            .is_err());
    }

    #[test]
    fn ema_formula() {
        let cfg = EmaConfig::new(0.99).unwrap();
        let t = ema_update(&Tensor::zeros(&[1]), &Tensor::full(&[1], 1.0), cfg).unwrap();
        assert!((t.data()[0] - 0.01).abs() < 1e-15);
        let copy = ema_update(
            &Tensor::zeros(&[2]),
            &Tensor::full(&[2], 3.0),
            EmaConfig::new(0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(copy.data(), &[3.0, 3.0]);
    }

    #[test]
    fn ema_closed_form() {
        let cfg = EmaConfig::new(0.99).unwrap();
        let s = Tensor::new(&[3], vec![1.0, -0.5, 2.0]).unwrap();
        let t0 = Tensor::new(&[3], vec![0.0, 4.0, -1.0]).unwrap();
        let mut t = t0.clone();
        let k = 50;
        for _ in 0..k {
            t = ema_update(&t, &s, cfg).unwrap();
        }
        for i in 0..3 {
            let closed = s.data()[i] + 0.99f64.powi(k) * (t0.data()[i] - s.data()[i]);
            assert!((t.data()[i] - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_alpha_range() {
        assert!(EmaConfig::new(1.0).is_err());
        assert!(EmaConfig::new(-0.1).is_err());
        assert!(ema_update(
            &Tensor::zeros(&[1]),
            &Tensor::zeros(&[2]),
            EmaConfig::default()
        )
        .is_err());
    }
}
