//! Optimization protocol: Adam on the multi-task loss, per-epoch
//! learning-rate decay, best-checkpoint selection on validation
//! SI-SDRi, evaluation, and the finite-difference gradient oracle.

use crate::checkpoint::{Checkpoint, RngState};
use crate::eeg::EegBatch;
use crate::error::{Error, Result};
use crate::losses::{breakdown, total_loss, LossBreakdown, LossWeights};
use crate::metrics;
use crate::model::{AblationFlags, Model, ModelConfig};
use crate::nn::{Binding, Fwd, Params};
use crate::synth::{DatasetSplit, TrialExample};
use crate::tape::{Gradients, Tape};
use crate::tensor::{lit, Scalar, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub ablation: AblationFlags,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            lr_decay: 0.9,
            batch_size: 8,
            epochs: 20,
            seed: 0,
            weights: LossWeights::default(),
            ablation: AblationFlags::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1".to_string()));
        }
        self.weights.validate()?;
        self.ablation.validate()
    }

    /// Learning rate of epoch `k` (0-based): `lr * decay^k`, exactly.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }

    /// Loss weights after the SID-loss ablation flag.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.ablation.no_sid_loss {
            w.alpha = 0.0;
        }
        w
    }
}

/// One optimizer-step record; serializes to the training-log CSV.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub mse: f64,
    pub stft: f64,
    pub sisdr: f64,
    pub sid: f64,
    pub aad: f64,
}

pub const LOG_HEADER: &str = "step,epoch,lr,total,mse,stft,sisdr,sid,aad";

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step, self.epoch, self.lr, self.total, self.mse, self.stft, self.sisdr,
            self.sid, self.aad
        )
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
    pub best_epoch: usize,
    pub best_val_si_sdri: f64,
    pub final_loss: f64,
}

/// Adam with the standard constants (beta1 0.9, beta2 0.999, eps 1e-8).
pub struct Adam<T: Scalar> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(params: &Params<T>) -> Self {
        Adam {
            m: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            v: params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect(),
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut Params<T>,
        grads: &mut Gradients<T>,
        binding: &Binding,
        lr: f64,
    ) {
        self.t += 1;
        let b1: T = lit(Self::BETA1);
        let b2: T = lit(Self::BETA2);
        let eps: T = lit(Self::EPS);
        let corr1: T = lit(1.0 - Self::BETA1.powi(self.t));
        let corr2: T = lit(1.0 - Self::BETA2.powi(self.t));
        let lr_t: T = lit(lr);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let Some(g) = grads.take(binding.var(id)) else {
                continue;
            };
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let p = params.get_mut(id);
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + (T::one() - b1) * gi;
                let vi = b2 * v.data()[i] + (T::one() - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / corr1;
                let v_hat = vi / corr2;
                p.data_mut()[i] = p.data()[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Dense batch of trials for one forward pass.
pub struct Batch<T: Scalar> {
    pub mixture: Tensor<T>,
    pub target: Tensor<T>,
    pub eeg: EegBatch,
    pub sid_labels: Vec<usize>,
    pub aad_labels: Vec<usize>,
    pub sample_rate_hz: u32,
}

pub fn make_batch<T: Scalar>(trials: &[&TrialExample]) -> Result<Batch<T>> {
    let first = trials.first().ok_or_else(|| Error::config("empty batch".to_string()))?;
    let samples = first.mixture.len();
    let mut mixture = Vec::with_capacity(trials.len() * samples);
    let mut target = Vec::with_capacity(trials.len() * samples);
    for t in trials {
        if t.mixture.len() != samples {
            return Err(Error::shape("mixed trial lengths in one batch".to_string()));
        }
        mixture.extend(t.mixture.samples().iter().map(|&v| lit::<T>(v)));
        target.extend(t.target.samples().iter().map(|&v| lit::<T>(v)));
    }
    let eegs: Vec<&EegBatch> = trials.iter().map(|t| &t.eeg).collect();
    Ok(Batch {
        mixture: Tensor::from_vec(&[trials.len(), samples], mixture),
        target: Tensor::from_vec(&[trials.len(), samples], target),
        eeg: EegBatch::from_trials(&eegs)?,
        sid_labels: trials.iter().map(|t| t.subject_id).collect(),
        aad_labels: trials.iter().map(|t| t.attended_side).collect(),
        sample_rate_hz: first.mixture.sample_rate_hz(),
    })
}

struct StepResult<T: Scalar> {
    tape: Tape<T>,
    binding: Binding,
    loss_var: crate::tape::Var,
    breakdown: LossBreakdown,
}

fn forward_loss<T: Scalar>(
    model: &Model<T>,
    batch: &Batch<T>,
    weights: &LossWeights,
) -> Result<StepResult<T>> {
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape);
    let mut f = Fwd::new(&mut tape, &binding);
    let out = model.forward(&mut f, &batch.mixture, &batch.eeg)?;
    let loss = total_loss(
        &mut tape,
        out.est,
        &batch.target,
        out.sid_logits,
        &batch.sid_labels,
        out.aad_logits,
        &batch.aad_labels,
        weights,
    )?;
    let bd = breakdown(&tape, &loss);
    Ok(StepResult {
        tape,
        binding,
        loss_var: loss.total,
        breakdown: bd,
    })
}

/// Train on the split's training partition, tracking the best epoch by
/// validation SI-SDRi. Aborts on the first non-finite loss component.
pub fn train(model_cfg: &ModelConfig, config: &TrainConfig, data: &DatasetSplit) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::config("training needs non-empty train and val partitions".to_string()));
    }
    let arch = model_cfg.with_ablation(&config.ablation)?;
    let weights = config.effective_weights();
    let mut model = Model::<f32>::init(&arch, config.seed)?;
    let mut adam = Adam::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut log = Vec::new();
    let mut step = 0usize;
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    let mut final_loss = f64::NAN;

    for epoch in 0..config.epochs {
        let lr = config.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.batch_size) {
            let trials: Vec<&TrialExample> = chunk.iter().map(|&i| &data.train[i]).collect();
            let batch = make_batch::<f32>(&trials)?;
            let step_out = forward_loss(&model, &batch, &weights)?;
            if let Some(component) = step_out.breakdown.first_non_finite() {
                return Err(Error::NonFinite {
                    component: component.to_string(),
                    detail: format!("step {step}, epoch {epoch}"),
                });
            }
            let mut grads = step_out.tape.backward(step_out.loss_var);
            adam.step(&mut model.params, &mut grads, &step_out.binding, lr);
            final_loss = step_out.breakdown.total;
            log.push(LogRow {
                step,
                epoch,
                lr,
                total: step_out.breakdown.total,
                mse: step_out.breakdown.mse,
                stft: step_out.breakdown.stft_mag,
                sisdr: step_out.breakdown.si_sdr_loss,
                sid: step_out.breakdown.sid_ce,
                aad: step_out.breakdown.aad_ce,
            });
            step += 1;
        }

        let val_si_sdri = mean_val_si_sdri(&model, &data.val, config.batch_size)?;
        if best.as_ref().map(|(_, b, _)| val_si_sdri > *b).unwrap_or(true) {
            let rng_state = RngState {
                seed: config.seed,
                word_pos: rng.get_word_pos(),
            };
            let ckpt = Checkpoint::from_model(&model, config, epoch, val_si_sdri, rng_state);
            best = Some((epoch, val_si_sdri, ckpt));
        }
    }

    let (best_epoch, best_val_si_sdri, checkpoint) = best.unwrap();
    Ok(TrainOutcome {
        checkpoint,
        log,
        best_epoch,
        best_val_si_sdri,
        final_loss,
    })
}

/// Mean validation SI-SDRi of the model's estimates.
fn mean_val_si_sdri<T: Scalar>(
    model: &Model<T>,
    val: &[TrialExample],
    batch_size: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in val.chunks(batch_size) {
        let trials: Vec<&TrialExample> = chunk.iter().collect();
        let batch = make_batch::<T>(&trials)?;
        let estimates = run_estimates(model, &batch)?;
        for (i, t) in chunk.iter().enumerate() {
            total += metrics::si_sdri(&estimates[i], &t.target, &t.mixture)?;
        }
    }
    Ok(total / val.len() as f64)
}

/// Forward pass without gradients; estimates as waveforms.
fn run_estimates<T: Scalar>(
    model: &Model<T>,
    batch: &Batch<T>,
) -> Result<Vec<crate::dsp::Waveform>> {
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape);
    let mut f = Fwd::new(&mut tape, &binding);
    let out = model.forward(&mut f, &batch.mixture, &batch.eeg)?;
    let est = tape.value(out.est);
    let samples = est.dim(1);
    (0..est.dim(0))
        .map(|b| {
            let row: Vec<f64> = est.data()[b * samples..(b + 1) * samples]
                .iter()
                .map(|v| v.to_f64().unwrap())
                .collect();
            crate::dsp::Waveform::new(row, batch.sample_rate_hz)
        })
        .collect()
}

fn run_logits<T: Scalar>(
    model: &Model<T>,
    batch: &Batch<T>,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut tape = Tape::new();
    let binding = model.bind(&mut tape);
    let mut f = Fwd::new(&mut tape, &binding);
    let out = model.forward(&mut f, &batch.mixture, &batch.eeg)?;
    let argmax = |t: &Tensor<T>| {
        let classes = t.dim(1);
        (0..t.dim(0))
            .map(|b| {
                let row = &t.data()[b * classes..(b + 1) * classes];
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            })
            .collect::<Vec<usize>>()
    };
    Ok((argmax(tape.value(out.sid_logits)), argmax(tape.value(out.aad_logits))))
}

/// Full evaluation report: the four audio metrics averaged over the
/// examples, plus SID and AAD accuracies.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub si_sdr_db: f64,
    pub si_sdri_db: f64,
    pub stoi: f64,
    pub estoi: f64,
    pub sid_acc: f64,
    pub aad_acc: f64,
}

/// Evaluate a model over a trial list. With `mixture_passthrough`, the
/// estimate is the unprocessed mixture (the untrained-baseline
/// control); classification heads still run.
pub fn evaluate_model<T: Scalar>(
    model: &Model<T>,
    data: &[TrialExample],
    batch_size: usize,
    mixture_passthrough: bool,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::config("evaluation set is empty".to_string()));
    }
    let mut si_sdr_sum = 0.0;
    let mut si_sdri_sum = 0.0;
    let mut stoi_sum = 0.0;
    let mut estoi_sum = 0.0;
    let mut sid_hits = 0usize;
    let mut aad_hits = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let trials: Vec<&TrialExample> = chunk.iter().collect();
        let batch = make_batch::<T>(&trials)?;
        let estimates = if mixture_passthrough {
            chunk.iter().map(|t| t.mixture.clone()).collect()
        } else {
            run_estimates(model, &batch)?
        };
        let (sid_pred, aad_pred) = run_logits(model, &batch)?;
        for (i, t) in chunk.iter().enumerate() {
            si_sdr_sum += metrics::si_sdr(&estimates[i], &t.target)?;
            si_sdri_sum += metrics::si_sdri(&estimates[i], &t.target, &t.mixture)?;
            stoi_sum += metrics::stoi(&estimates[i], &t.target)?;
            estoi_sum += metrics::estoi(&estimates[i], &t.target)?;
            if sid_pred[i] == t.subject_id {
                sid_hits += 1;
            }
            if aad_pred[i] == t.attended_side {
                aad_hits += 1;
            }
        }
    }
    let n = data.len() as f64;
    Ok(EvalReport {
        si_sdr_db: si_sdr_sum / n,
        si_sdri_db: si_sdri_sum / n,
        stoi: stoi_sum / n,
        estoi: estoi_sum / n,
        sid_acc: sid_hits as f64 / n,
        aad_acc: aad_hits as f64 / n,
    })
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub worst_param: String,
}

/// Scalar sanity probe: analytic d/dx of sum(x^2) against central
/// differences; the trivial case the full oracle builds on.
pub fn quadratic_probe() -> f64 {
    let xs: [f64; 4] = [0.7, -1.3, 2.1, 0.01];
    let mut worst = 0.0f64;
    for &x in &xs {
        let h = 1e-5;
        let analytic = 2.0 * x;
        let numeric = ((x + h) * (x + h) - (x - h) * (x - h)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(1e-9);
        worst = worst.max(rel);
    }
    worst
}

/// A batch whose statistics resemble the synthetic task, sized for the
/// tiny configuration (512 audio samples, 4 EEG channels, 32 steps).
fn tiny_batch(cfg: &ModelConfig, seed: u64) -> Result<Batch<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = 512;
    let rate = 8000.0;
    let tone = |f0: f64, m: f64, phase: f64, rng: &mut ChaCha8Rng| {
        let p: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        (0..samples)
            .map(|i| {
                let t = i as f64 / rate;
                let env = 0.6 + 0.4 * (std::f64::consts::TAU * m * t + phase).sin();
                0.2 * env * (std::f64::consts::TAU * f0 * t + p).sin()
            })
            .collect::<Vec<f64>>()
    };
    let a = tone(150.0, 3.0, 0.3, &mut rng);
    let b = tone(900.0, 6.0, 1.1, &mut rng);
    let mixture: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();

    let c = cfg.encoder.channels;
    let t_len = cfg.encoder.time_steps;
    let eeg_raw: Vec<f64> = (0..c * t_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let eeg = EegBatch::standardized(eeg_raw, 1, c, t_len, 128)?;
    Ok(Batch {
        mixture: Tensor::from_vec(&[1, samples], mixture),
        target: Tensor::from_vec(&[1, samples], a),
        eeg,
        sid_labels: vec![rng.random_range(0..cfg.brainprint.n_subjects)],
        aad_labels: vec![rng.random_range(0..2)],
        sample_rate_hz: 8000,
    })
}

/// Finite-difference oracle over at least `min_coords` coordinates
/// sampled from every parameter tensor, at 64-bit precision with a
/// 1e-5 central step.
pub fn grad_check(
    model_cfg: &ModelConfig,
    weights: &LossWeights,
    min_coords: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let model = Model::<f64>::init(model_cfg, seed)?;
    let batch = tiny_batch(model_cfg, seed ^ 0x5EED)?;

    let step_out = forward_loss(&model, &batch, weights)?;
    let grads = step_out.tape.backward(step_out.loss_var);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    let per_tensor = min_coords.div_ceil(model.params.count());
    let mut worst = 0.0f64;
    let mut worst_param = String::new();
    let mut checked = 0usize;

    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let len = model.params.get(id).len();
        let analytic = grads
            .get(step_out.binding.var(id))
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(model.params.get(id).shape()));
        let mut coords: Vec<usize> = (0..per_tensor.min(len))
            .map(|_| rng.random_range(0..len))
            .collect();
        coords.sort_unstable();
        coords.dedup();
        for ci in coords {
            let h = 1e-5;
            let mut plus = model.convert::<f64>()?;
            plus.params.get_mut(id).data_mut()[ci] += h;
            let f_plus = forward_loss(&plus, &batch, weights)?.breakdown.total;
            let mut minus = model.convert::<f64>()?;
            minus.params.get_mut(id).data_mut()[ci] -= h;
            let f_minus = forward_loss(&minus, &batch, weights)?.breakdown.total;
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let a = analytic.data()[ci];
            // the 1e-3 floor keeps central-difference roundoff from
            // dominating structurally-zero gradients (loss scale ~1e1,
            // step 1e-5 -> noise ~1e-10 absolute)
            let rel = (numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-3);
            checked += 1;
            if rel > worst {
                worst = rel;
                worst_param = format!("{}[{}]", model.params.name(id), ci);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_err: worst,
        checked,
        worst_param,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_split, SynthConfig};

    fn tiny_split() -> DatasetSplit {
        let cfg = SynthConfig {
            n_subjects: 2,
            trials_per_subject: 8,
            duration_secs: 0.5,
            ..SynthConfig::default()
        };
        make_split(&cfg).unwrap()
    }

    fn tiny_train_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    fn tiny_model_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::tiny(2);
        cfg.encoder.channels = 16;
        cfg.encoder.time_steps = 64;
        cfg.encoder.gn_groups = 2;
        cfg
    }

    #[test]
    fn lr_schedule_is_exact() {
        let cfg = TrainConfig::default();
        for k in 0..10 {
            assert_eq!(cfg.lr_at_epoch(k), 1e-4 * 0.9f64.powi(k as i32));
        }
    }

    #[test]
    fn one_epoch_one_batch_is_one_step() {
        let mut split = tiny_split();
        split.train.truncate(4);
        let outcome = train(&tiny_model_cfg(), &tiny_train_config(1), &split).unwrap();
        assert_eq!(outcome.log.len(), 1);
        assert_eq!(outcome.log[0].step, 0);
        assert_eq!(outcome.log[0].epoch, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let split = tiny_split();
        let a = train(&tiny_model_cfg(), &tiny_train_config(2), &split).unwrap();
        let b = train(&tiny_model_cfg(), &tiny_train_config(2), &split).unwrap();
        assert!((a.final_loss - b.final_loss).abs() < 1e-10);
        assert_eq!(a.best_val_si_sdri, b.best_val_si_sdri);
    }

    #[test]
    fn logged_lr_follows_the_schedule() {
        let split = tiny_split();
        let cfg = tiny_train_config(3);
        let outcome = train(&tiny_model_cfg(), &cfg, &split).unwrap();
        for row in &outcome.log {
            assert_eq!(row.lr, cfg.lr_at_epoch(row.epoch));
        }
    }

    #[test]
    fn best_checkpoint_tracks_the_max_val_si_sdri() {
        let split = tiny_split();
        let outcome = train(&tiny_model_cfg(), &tiny_train_config(3), &split).unwrap();
        assert!(outcome.checkpoint.val_si_sdri == outcome.best_val_si_sdri);
        assert!(outcome.checkpoint.epoch == outcome.best_epoch);
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_outputs() {
        let split = tiny_split();
        let outcome = train(&tiny_model_cfg(), &tiny_train_config(1), &split).unwrap();
        let dir = std::env::temp_dir().join("bmtse_train_ckpt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("best.bmtse");
        outcome.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();

        let model_a = outcome.checkpoint.to_model::<f32>().unwrap();
        let model_b = loaded.to_model::<f32>().unwrap();
        let trials: Vec<&TrialExample> = split.val.iter().take(2).collect();
        let batch = make_batch::<f32>(&trials).unwrap();
        let a = run_estimates(&model_a, &batch).unwrap();
        let b = run_estimates(&model_b, &batch).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.samples(), y.samples(), "forward output changed after reload");
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn non_finite_guard_names_the_component() {
        let split = tiny_split();
        // an absurd learning rate reliably explodes the parameters
        let cfg = TrainConfig {
            lr: 1e18,
            epochs: 4,
            batch_size: 4,
            ..TrainConfig::default()
        };
        match train(&tiny_model_cfg(), &cfg, &split) {
            Err(Error::NonFinite { component, .. }) => {
                assert!(!component.is_empty());
            }
            Ok(_) => panic!("expected the non-finite guard to fire"),
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn passthrough_evaluation_sits_at_zero_improvement() {
        let split = tiny_split();
        let model = Model::<f32>::init(&tiny_model_cfg(), 0).unwrap();
        let report = evaluate_model(&model, &split.val, 4, true).unwrap();
        assert!(report.si_sdri_db.abs() < 1e-9, "passthrough si_sdri {}", report.si_sdri_db);
        assert!(report.si_sdr_db.is_finite());
    }

    #[test]
    fn quadratic_probe_is_tight() {
        assert!(quadratic_probe() < 1e-9, "probe error {}", quadratic_probe());
    }

    #[test]
    fn grad_check_tiny_model_meets_the_bound() {
        let report = grad_check(&ModelConfig::tiny(3), &LossWeights::default(), 60, 1).unwrap();
        assert!(report.checked >= 60);
        assert!(
            report.max_rel_err < 1e-4,
            "gradient mismatch {:.3e} at {}",
            report.max_rel_err,
            report.worst_param
        );
    }

    #[test]
    fn grad_check_survives_the_asg_ablation() {
        let cfg = ModelConfig::tiny(3)
            .with_ablation(&AblationFlags { no_asg: true, ..Default::default() })
            .unwrap();
        let report = grad_check(&cfg, &LossWeights::default(), 40, 2).unwrap();
        assert!(
            report.max_rel_err < 1e-4,
            "gradient mismatch {:.3e} at {}",
            report.max_rel_err,
            report.worst_param
        );
    }
}
