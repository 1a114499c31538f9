//! Mean-teacher training with a supervised cross-entropy term and one of
//! several consistency terms.

mod loss;
mod terms;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub use loss::{
    bce_cons_grad, confidence, confidence_factor, cross_entropy, cross_entropy_grad, pixel_shape,
    sq_err_cons, sq_err_cons_grad,
};
pub use terms::{cons_cutmix, cons_cutout, cons_ict, cons_stdaug, cons_vat};

use crate::error::{Error, Result};
use crate::nn::{ema_update_in_place, AdamState, EmaConfig, Network};
use crate::perturb::{reverse_pairs, AffineRanges, VatConfig};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline,
    Cutout,
    Cutmix,
    Stdaug,
    Ict,
    Vat,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Baseline,
        Method::Cutout,
        Method::Cutmix,
        Method::Stdaug,
        Method::Ict,
        Method::Vat,
    ];

    /// Default consistency weight for each method.
    pub fn default_weight(self) -> f64 {
        match self {
            Method::Baseline => 0.0,
            Method::Cutout | Method::Cutmix => 1.0,
            Method::Stdaug => 0.003,
            Method::Ict => 0.01,
            Method::Vat => 0.1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Cutout => "cutout",
            Method::Cutmix => "cutmix",
            Method::Stdaug => "stdaug",
            Method::Ict => "ict",
            Method::Vat => "vat",
        }
    }

    fn is_mask_based(self) -> bool {
        matches!(self, Method::Cutout | Method::Cutmix)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method {s:?}")))
    }
}

/// Which consistency terms are scaled by the teacher confidence factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modulation {
    All,
    MaskOnly,
    Off,
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Modulation::All),
            "mask-only" => Ok(Modulation::MaskOnly),
            "off" => Ok(Modulation::Off),
            _ => Err(Error::config(
                "modulation",
                format!("expected all, mask-only or off, got {s:?}"),
            )),
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::All => "all",
            Modulation::MaskOnly => "mask-only",
            Modulation::Off => "off",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub cons_weight: f64,
    pub conf_threshold: f64,
    pub ema_alpha: f64,
    pub steps: usize,
    pub batch_sup: usize,
    pub batch_unsup: usize,
    /// Adam learning rate. Full-scale training with a pretrained backbone
    /// used 3e-5; small nets from random init need larger steps.
    pub lr: f64,
    pub seed: u64,
    pub modulation: Modulation,
    pub ignore_label: usize,
    pub ict_lambda: (f64, f64),
    pub affine: AffineRanges,
    pub vat: VatConfig,
}

impl TrainConfig {
    /// Defaults with the method's own consistency weight.
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            cons_weight: method.default_weight(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cons_weight >= 0.0) || !self.cons_weight.is_finite() {
            return Err(Error::config("cons_weight", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(Error::config("conf_threshold", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.ema_alpha) {
            return Err(Error::config("ema_alpha", "must lie in [0, 1)"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", "must be finite and > 0"));
        }
        if self.batch_sup == 0 {
            return Err(Error::config("batch_sup", "must be >= 1"));
        }
        if self.method != Method::Baseline && self.batch_unsup == 0 {
            return Err(Error::config(
                "batch_unsup",
                "must be >= 1 for consistency methods",
            ));
        }
        let (lo, hi) = self.ict_lambda;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::config("ict_lambda", "needs 0 <= lo <= hi <= 1"));
        }
        self.vat
            .validate()
            .map_err(|e| Error::config("vat_xi", e.to_string()))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Baseline,
            cons_weight: 0.0,
            conf_threshold: 0.97,
            ema_alpha: 0.99,
            steps: 1000,
            batch_sup: 4,
            batch_unsup: 4,
            lr: 1e-3,
            seed: 0,
            modulation: Modulation::All,
            ignore_label: 255,
            ict_lambda: (0.0, 1.0),
            affine: AffineRanges::default(),
            vat: VatConfig::default(),
        }
    }
}

/// Student, EMA teacher and optimizer state.
#[derive(Clone, Debug)]
pub struct TrainerState {
    pub student: Network,
    pub teacher: Network,
    pub adam: AdamState,
    pub step: usize,
    /// Perturbation stream (masks, affine draws, blend factors).
    pub rng: SeedStream,
    pub vat_rng: SeedStream,
    ema: EmaConfig,
}

impl TrainerState {
    /// The teacher starts as a copy of the student.
    pub fn new(student: Network, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let root = SeedStream::new(cfg.seed);
        Ok(Self {
            teacher: student.clone(),
            adam: AdamState::new(student.params(), cfg.lr),
            student,
            step: 0,
            rng: root.fork("mask"),
            vat_rng: root.fork("vat"),
            ema: EmaConfig::new(cfg.ema_alpha)?,
        })
    }

    /// One Adam step on the student followed by the teacher EMA update.
    pub fn apply(&mut self, grads: &Tensor) -> Result<()> {
        self.adam.step(self.student.params_mut(), grads)?;
        ema_update_in_place(self.teacher.params_mut(), self.student.params(), self.ema)?;
        self.step += 1;
        Ok(())
    }
}

/// A supervised batch: inputs and one label per output position.
#[derive(Clone, Debug)]
pub struct SupBatch {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub l_sup: f64,
    pub l_cons: f64,
    pub conf_factor: f64,
    pub total: f64,
    /// Batch items whose VAT term was skipped.
    pub skipped: usize,
}

impl StepReport {
    pub const CSV_HEADER: &'static str = "step,l_sup,l_cons,conf_factor,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.l_sup, self.l_cons, self.conf_factor, self.total
        )
    }
}

pub fn write_step_csv(out: &mut impl Write, reports: &[StepReport]) -> Result<()> {
    writeln!(out, "{}", StepReport::CSV_HEADER)?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// `cross_entropy + cons_weight * conf_factor * L_cons`, one Adam step on
/// the student, then the EMA update of the teacher.
pub fn train_step(
    state: &mut TrainerState,
    sup: &SupBatch,
    unsup: Option<&Tensor>,
    cfg: &TrainConfig,
) -> Result<StepReport> {
    let (y, tape) = state.student.forward(&sup.x, true)?;
    let (l_sup, dy) = cross_entropy_grad(&y, &sup.labels, cfg.ignore_label)?;
    let mut grads = state.student.backward(&tape.expect("cached"), &dy)?.params;

    let (mut l_cons, mut conf_factor, mut skipped) = (0.0, 1.0, 0);
    let mut total = l_sup;
    if cfg.method != Method::Baseline {
        let x = unsup
            .ok_or_else(|| Error::invalid("consistency methods need an unsupervised batch"))?;
        let t_clean = state.teacher.predict(x)?;
        let modulate = match cfg.modulation {
            Modulation::All => true,
            Modulation::MaskOnly => cfg.method.is_mask_based(),
            Modulation::Off => false,
        };
        if modulate {
            conf_factor = confidence_factor(&t_clean, cfg.conf_threshold)?;
        }
        let student = &state.student;
        let rng = &mut state.rng;
        let term = match cfg.method {
            Method::Baseline => unreachable!(),
            Method::Cutout => terms::cutout_term(student, &t_clean, x, rng, true)?,
            Method::Cutmix => {
                let (x_b, t_b) = (reverse_pairs(x)?, reverse_pairs(&t_clean)?);
                terms::cutmix_term(student, &t_clean, &t_b, x, &x_b, rng, true)?
            }
            Method::Stdaug => terms::stdaug_term(student, &t_clean, x, &cfg.affine, rng, true)?,
            Method::Ict => {
                let lambda = terms::sample_lambda(cfg.ict_lambda, rng);
                let (x_b, t_b) = (reverse_pairs(x)?, reverse_pairs(&t_clean)?);
                terms::ict_term(student, &t_clean, &t_b, x, &x_b, lambda, true)?
            }
            Method::Vat => terms::vat_term(student, x, &cfg.vat, &mut state.vat_rng, true)?,
        };
        l_cons = term.loss;
        skipped = term.skipped;
        let scale = cfg.cons_weight * conf_factor;
        total += scale * l_cons;
        if scale != 0.0 {
            grads.axpy(scale, &term.grad.expect("gradient requested"))?;
        }
    }
    if !total.is_finite() {
        return Err(Error::Divergence {
            step: state.step,
            what: format!("total loss {total}"),
        });
    }
    if let Err(e) = state.apply(&grads) {
        return Err(match e {
            Error::NonFinite(what) => Error::Divergence {
                step: state.step,
                what,
            },
            e => e,
        });
    }
    Ok(StepReport {
        step: state.step,
        l_sup,
        l_cons,
        conf_factor,
        total,
        skipped,
    })
}
