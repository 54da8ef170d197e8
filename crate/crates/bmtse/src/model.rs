//! Full model assembly: EEG encoder -> audio encoder -> fusion ->
//! sandglasset separation -> brainprint modulation -> rebuilder, plus
//! the ablation wiring used by the comparison harness.

use crate::brainprint::{BrainprintConfig, BrainprintParams};
use crate::eeg::EegBatch;
use crate::encoder::{encode, EncoderConfig, EncoderParams, FusedEmbedding};
use crate::error::{Error, Result};
use crate::nn::{bind, Binding, Fwd, Params};
use crate::separator::{SeparatorConfig, SeparatorParams};
use crate::tape::{Tape, Var};
use crate::tensor::{Scalar, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Switches for the component-removal comparison runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub no_ls_tconv: bool,
    pub no_sconv: bool,
    pub no_asg: bool,
    pub no_sid_loss: bool,
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if self.no_ls_tconv && self.no_sconv {
            return Err(Error::config(
                "cannot drop both encoder branches at once".to_string(),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match (self.no_ls_tconv, self.no_sconv, self.no_asg, self.no_sid_loss) {
            (false, false, false, false) => "full",
            (true, false, false, false) => "no_ls_tconv",
            (false, true, false, false) => "no_sconv",
            (false, false, true, false) => "no_asg",
            (false, false, false, true) => "no_sid_loss",
            _ => "combined",
        }
    }

    /// The five comparison rows: the full model and the four removals.
    pub fn standard_set() -> Vec<AblationFlags> {
        vec![
            AblationFlags::default(),
            AblationFlags { no_ls_tconv: true, ..Default::default() },
            AblationFlags { no_sconv: true, ..Default::default() },
            AblationFlags { no_asg: true, ..Default::default() },
            AblationFlags { no_sid_loss: true, ..Default::default() },
        ]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub separator: SeparatorConfig,
    pub brainprint: BrainprintConfig,
}

impl ModelConfig {
    /// Desk-scale defaults.
    pub fn desk(n_subjects: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            separator: SeparatorConfig::default(),
            brainprint: BrainprintConfig {
                n_subjects,
                ..BrainprintConfig::default()
            },
        }
    }

    /// Narrower separator for quick end-to-end training runs.
    pub fn compact(n_subjects: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            separator: SeparatorConfig {
                n_filters: 32,
                fusion_width: 16,
                n_sep: 16,
                heads: 2,
                ff_hidden: 32,
                ..SeparatorConfig::default()
            },
            brainprint: BrainprintConfig {
                d_b: 16,
                n_subjects,
                ..BrainprintConfig::default()
            },
        }
    }

    /// Gradient-oracle scale: every module present, every dim small.
    pub fn tiny(n_subjects: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                channels: 4,
                time_steps: 32,
                d_temp: 8,
                temporal_stride: 4,
                k_short: 3,
                k_long: 7,
                d_spat: 4,
                k_spat: 3,
                d_model: 8,
                heads: 2,
                gn_groups: 2,
                pool_window: 3,
                ..EncoderConfig::default()
            },
            separator: SeparatorConfig {
                n_filters: 8,
                fusion_width: 4,
                n_sep: 8,
                segment_len: 16,
                heads: 2,
                ff_hidden: 8,
                ..SeparatorConfig::default()
            },
            brainprint: BrainprintConfig {
                d_b: 4,
                kernel: 3,
                res_blocks: 2,
                n_subjects,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.separator.validate()?;
        self.brainprint.validate()
    }

    /// Apply architectural ablation flags. The SID-loss flag does not
    /// touch the architecture; the trainer zeroes the SID weight.
    pub fn with_ablation(&self, flags: &AblationFlags) -> Result<ModelConfig> {
        flags.validate()?;
        let mut cfg = self.clone();
        if flags.no_ls_tconv {
            cfg.encoder.use_ls_tconv = false;
        }
        if flags.no_sconv {
            cfg.encoder.use_sconv = false;
        }
        if flags.no_asg {
            cfg.encoder.use_asg = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct ModelOutput {
    pub est: Var,
    pub sid_logits: Var,
    pub aad_logits: Var,
    pub brainmap: Var,
    pub embedding: FusedEmbedding,
}

pub struct Model<T: Scalar> {
    pub cfg: ModelConfig,
    pub params: Params<T>,
    pub encoder: EncoderParams,
    pub separator: SeparatorParams,
    pub brainprint: BrainprintParams,
    pub init_seed: u64,
}

impl<T: Scalar> Model<T> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(&mut params, &mut rng, &cfg.encoder)?;
        let separator =
            SeparatorParams::init(&mut params, &mut rng, &cfg.separator, cfg.encoder.d_model)?;
        let brainprint = BrainprintParams::init(
            &mut params,
            &mut rng,
            &cfg.brainprint,
            cfg.encoder.d_model,
            cfg.separator.n_sep,
        )?;
        Ok(Model {
            cfg: cfg.clone(),
            params,
            encoder,
            separator,
            brainprint,
            init_seed: seed,
        })
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Binding {
        bind(tape, &self.params)
    }

    /// Full forward pass for one batch: mixture `[B, S]` plus the
    /// matching EEG batch. Returns the estimate and both logit heads.
    pub fn forward(
        &self,
        f: &mut Fwd<T>,
        mixture: &Tensor<T>,
        eeg: &EegBatch,
    ) -> Result<ModelOutput> {
        let shape = mixture.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("mixture batch must be [B, S]".to_string()));
        }
        if shape[0] != eeg.batch() {
            return Err(Error::shape(format!(
                "audio batch {} vs EEG batch {}",
                shape[0],
                eeg.batch()
            )));
        }
        let out_len = shape[1];

        let embedding = encode(f, eeg, &self.encoder)?;
        let mix = f.tape.constant(mixture.clone());
        let enc = self.separator.encode_audio(f, mix)?;
        let fused = self.separator.fuse_audio_eeg(f, enc, &embedding);
        let separated = self.separator.separate(f, fused)?;
        let brainmap = self.brainprint.compute_brainmap(f, &embedding);
        let sid_logits = self.brainprint.classify_sid(f, brainmap);
        let aad_logits = self.brainprint.classify_aad(f, brainmap);
        let refined = self.brainprint.modulate(f, separated, &embedding, brainmap)?;
        let est = self.separator.rebuild(f, refined, enc, out_len)?;
        Ok(ModelOutput {
            est,
            sid_logits,
            aad_logits,
            brainmap,
            embedding,
        })
    }

    /// Same parameters in another precision (used by the f64 gradient
    /// oracle). Layer handles are index-based, so they carry over.
    pub fn convert<U: Scalar>(&self) -> Result<Model<U>> {
        let mut other = Model::<U>::init(&self.cfg, self.init_seed)?;
        other.params = self.params.convert::<U>();
        Ok(other)
    }

    pub fn param_count(&self) -> usize {
        self.params.total_values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_subjects, synth_trial, SynthConfig};

    fn toy_batch(cfg: &SynthConfig, n: usize) -> (Tensor<f64>, EegBatch) {
        let subjects = make_subjects(cfg).unwrap();
        let trials: Vec<_> = (0..n)
            .map(|i| synth_trial(cfg, &subjects[i % subjects.len()], i % 2, 40 + i as u64).unwrap())
            .collect();
        let samples = trials[0].mixture.len();
        let mut mix = Vec::with_capacity(n * samples);
        for t in &trials {
            mix.extend_from_slice(t.mixture.samples());
        }
        let eegs: Vec<&EegBatch> = trials.iter().map(|t| &t.eeg).collect();
        (
            Tensor::from_vec(&[n, samples], mix),
            EegBatch::from_trials(&eegs).unwrap(),
        )
    }

    #[test]
    fn forward_shapes_on_the_compact_model() {
        let synth_cfg = SynthConfig::default();
        let model = Model::<f64>::init(&ModelConfig::compact(4), 7).unwrap();
        let (mix, eeg) = toy_batch(&synth_cfg, 2);
        let mut tape = Tape::new();
        let binding = model.bind(&mut tape);
        let mut f = Fwd::new(&mut tape, &binding);
        let out = model.forward(&mut f, &mix, &eeg).unwrap();
        assert_eq!(f.tape.shape(out.est), &[2, 16000]);
        assert_eq!(f.tape.shape(out.sid_logits), &[2, 4]);
        assert_eq!(f.tape.shape(out.aad_logits), &[2, 2]);
        assert!(f.tape.value(out.est).all_finite());
    }

    #[test]
    fn ablations_change_the_parameter_census() {
        let base = ModelConfig::tiny(4);
        let full = Model::<f64>::init(&base, 1).unwrap().param_count();
        for flags in [
            AblationFlags { no_ls_tconv: true, ..Default::default() },
            AblationFlags { no_sconv: true, ..Default::default() },
            AblationFlags { no_asg: true, ..Default::default() },
        ] {
            let cfg = base.with_ablation(&flags).unwrap();
            let count = Model::<f64>::init(&cfg, 1).unwrap().param_count();
            assert_ne!(count, full, "{} did not change the census", flags.label());
        }
        // dropping the SID loss keeps the architecture (the head stays;
        // only its weight in the objective goes to zero)
        let cfg = base
            .with_ablation(&AblationFlags { no_sid_loss: true, ..Default::default() })
            .unwrap();
        assert_eq!(Model::<f64>::init(&cfg, 1).unwrap().param_count(), full);
    }

    #[test]
    fn dropping_both_branches_is_rejected() {
        let base = ModelConfig::tiny(4);
        let flags = AblationFlags { no_ls_tconv: true, no_sconv: true, ..Default::default() };
        assert!(base.with_ablation(&flags).is_err());
    }

    #[test]
    fn ablated_models_still_run_forward() {
        let synth_cfg = SynthConfig::default();
        let (mix, eeg) = toy_batch(&synth_cfg, 1);
        for flags in AblationFlags::standard_set() {
            let cfg = ModelConfig::compact(4).with_ablation(&flags).unwrap();
            let model = Model::<f64>::init(&cfg, 3).unwrap();
            let mut tape = Tape::new();
            let binding = model.bind(&mut tape);
            let mut f = Fwd::new(&mut tape, &binding);
            let out = model.forward(&mut f, &mix, &eeg).unwrap();
            assert!(
                f.tape.value(out.est).all_finite(),
                "{} produced non-finite output",
                flags.label()
            );
        }
    }

    #[test]
    fn f32_and_f64_models_share_initialization() {
        let cfg = ModelConfig::tiny(4);
        let m64 = Model::<f64>::init(&cfg, 11).unwrap();
        let m32 = m64.convert::<f32>().unwrap();
        assert_eq!(m32.param_count(), m64.param_count());
        for ((na, a), (nb, b)) in m64.params.iter().zip(m32.params.iter()) {
            assert_eq!(na, nb);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*y, *x as f32);
            }
        }
    }
}
