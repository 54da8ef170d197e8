//! Composite multi-task objective: weighted extraction loss (MSE +
//! STFT magnitude + negative SI-SDR) plus cross-entropy terms for
//! subject identification and attention decoding.

use crate::error::{Error, Result};
use crate::metrics::SI_SDR_EPS;
use crate::tape::{Tape, Var};
use crate::tensor::{lit, Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// STFT settings of the frequency-domain loss term (the shared
/// desk-scale analysis defaults).
pub const STFT_LOSS_WIN: usize = 256;
pub const STFT_LOSS_HOP: usize = 128;
/// Magnitude floor: keeps sqrt differentiable at silent bins and makes
/// the loss exactly zero for identical signals.
pub const STFT_MAG_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w1: 1.0,
            w2: 0.5,
            w3: 1.0,
            alpha: 0.1,
            beta: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.w3, self.alpha, self.beta];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("loss weights must be finite and nonnegative".to_string()));
        }
        if self.w1 == 0.0 && self.w2 == 0.0 && self.w3 == 0.0 {
            return Err(Error::config("at least one extraction weight must be positive".to_string()));
        }
        Ok(())
    }
}

/// Loss value and its components, all as the training-precision values
/// widened to f64.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub stft_mag: f64,
    pub si_sdr_loss: f64,
    pub sid_ce: f64,
    pub aad_ce: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.total, self.mse, self.stft_mag, self.si_sdr_loss, self.sid_ce, self.aad_ce]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Name of the first non-finite component, for the training guard.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("mse", self.mse),
            ("stft_mag", self.stft_mag),
            ("si_sdr_loss", self.si_sdr_loss),
            ("sid_ce", self.sid_ce),
            ("aad_ce", self.aad_ce),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// The exact combination order used by the graph. Tests recombine the
/// breakdown through this same function, so equality is bit-exact in
/// the scalar type the model ran in.
pub fn recombine_total<T: Scalar>(
    mse: T,
    stft_mag: T,
    si_sdr_loss: T,
    sid_ce: T,
    aad_ce: T,
    w: &LossWeights,
) -> T {
    let mut acc = lit::<T>(w.w1) * mse;
    acc = acc + lit::<T>(w.w2) * stft_mag;
    acc = acc + lit::<T>(w.w3) * si_sdr_loss;
    acc = acc + lit::<T>(w.alpha) * sid_ce;
    acc = acc + lit::<T>(w.beta) * aad_ce;
    acc
}

pub struct TseLossVars {
    pub value: Var,
    pub mse: Var,
    pub stft_mag: Var,
    pub si_sdr_loss: Var,
}

/// Differentiable mean SI-SDR over the batch; `reference` is constant.
fn si_sdr_graph<T: Scalar>(tape: &mut Tape<T>, est: Var, reference: Var) -> Var {
    let eps: T = lit(SI_SDR_EPS);
    let prod = tape.mul(est, reference);
    let dot = tape.sum_last(prod);
    let ref_sq = tape.mul(reference, reference);
    let ref_energy = tape.sum_last(ref_sq);
    let scale = tape.div(dot, ref_energy);
    let target = tape.scale_rows(reference, scale);
    let err = tape.sub(est, target);
    let t_sq = tape.square(target);
    let t_energy = tape.sum_last(t_sq);
    let num = tape.add_scalar(t_energy, eps);
    let e_sq = tape.square(err);
    let e_energy = tape.sum_last(e_sq);
    let den = tape.add_scalar(e_energy, eps);
    let ratio = tape.div(num, den);
    let ln_ratio = tape.ln(ratio);
    let db = tape.mul_scalar(ln_ratio, lit(10.0 / std::f64::consts::LN_10));
    tape.mean_all(db)
}

/// Extraction loss: `w1*mse + w2*stft_mag_l1 + w3*(-si_sdr)`.
/// `est: [B, S]` on the tape, `reference` as raw data.
pub fn tse_loss<T: Scalar>(
    tape: &mut Tape<T>,
    est: Var,
    reference: &Tensor<T>,
    w: &LossWeights,
) -> Result<TseLossVars> {
    w.validate()?;
    if tape.shape(est) != reference.shape() {
        return Err(Error::shape(format!(
            "estimate {:?} vs reference {:?}",
            tape.shape(est),
            reference.shape()
        )));
    }
    if reference.data().iter().all(|&v| v == T::zero()) {
        return Err(Error::domain("reference signal is identically zero".to_string()));
    }
    let refc = tape.constant(reference.clone());

    let diff = tape.sub(est, refc);
    let sq = tape.square(diff);
    let mse = tape.mean_all(sq);

    let mag_eps: T = lit(STFT_MAG_EPS);
    let mag_est = tape.stft_mag(est, STFT_LOSS_WIN, STFT_LOSS_HOP, mag_eps);
    let mag_ref = tape.stft_mag(refc, STFT_LOSS_WIN, STFT_LOSS_HOP, mag_eps);
    let mag_diff = tape.sub(mag_est, mag_ref);
    let mag_abs = tape.abs(mag_diff);
    let stft_mag = tape.mean_all(mag_abs);

    let si = si_sdr_graph(tape, est, refc);
    let si_sdr_loss = tape.neg(si);

    let t1 = tape.mul_scalar(mse, lit(w.w1));
    let t2 = tape.mul_scalar(stft_mag, lit(w.w2));
    let mut value = tape.add(t1, t2);
    let t3 = tape.mul_scalar(si_sdr_loss, lit(w.w3));
    value = tape.add(value, t3);

    Ok(TseLossVars {
        value,
        mse,
        stft_mag,
        si_sdr_loss,
    })
}

/// Mean cross-entropy with label validation.
pub fn ce_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::shape(format!(
            "logits {:?} vs {} labels",
            shape,
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= shape[1]) {
        return Err(Error::domain(format!(
            "label {bad} out of range for {} classes",
            shape[1]
        )));
    }
    Ok(tape.cross_entropy_mean(logits, labels))
}

pub struct TotalLossVars {
    pub total: Var,
    pub mse: Var,
    pub stft_mag: Var,
    pub si_sdr_loss: Var,
    pub sid_ce: Var,
    pub aad_ce: Var,
}

/// Total multi-task objective. The combination order matches
/// [`recombine_total`] term for term.
#[allow(clippy::too_many_arguments)]
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    est: Var,
    reference: &Tensor<T>,
    sid_logits: Var,
    sid_labels: &[usize],
    aad_logits: Var,
    aad_labels: &[usize],
    w: &LossWeights,
) -> Result<TotalLossVars> {
    let tse = tse_loss(tape, est, reference, w)?;
    let sid_ce = ce_loss(tape, sid_logits, sid_labels)?;
    let aad_ce = ce_loss(tape, aad_logits, aad_labels)?;

    let t1 = tape.mul_scalar(tse.mse, lit(w.w1));
    let t2 = tape.mul_scalar(tse.stft_mag, lit(w.w2));
    let mut total = tape.add(t1, t2);
    let t3 = tape.mul_scalar(tse.si_sdr_loss, lit(w.w3));
    total = tape.add(total, t3);
    let t4 = tape.mul_scalar(sid_ce, lit(w.alpha));
    total = tape.add(total, t4);
    let t5 = tape.mul_scalar(aad_ce, lit(w.beta));
    total = tape.add(total, t5);

    Ok(TotalLossVars {
        total,
        mse: tse.mse,
        stft_mag: tse.stft_mag,
        si_sdr_loss: tse.si_sdr_loss,
        sid_ce,
        aad_ce,
    })
}

/// Extract the scalar values of a [`TotalLossVars`] into a breakdown.
pub fn breakdown<T: Scalar>(tape: &Tape<T>, vars: &TotalLossVars) -> LossBreakdown {
    let v = |var: Var| tape.value(var).item().to_f64().unwrap();
    LossBreakdown {
        total: v(vars.total),
        mse: v(vars.mse),
        stft_mag: v(vars.stft_mag),
        si_sdr_loss: v(vars.si_sdr_loss),
        sid_ce: v(vars.sid_ce),
        aad_ce: v(vars.aad_ce),
    }
}
