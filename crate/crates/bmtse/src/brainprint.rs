//! Personalized brainprint module: residual convolutional blocks over
//! the temporal tokens produce the brainmap embedding, which feeds the
//! subject-identification and attention-decoding heads and, together
//! with the EEG tokens, multiplicatively refines the separated audio.

use crate::encoder::FusedEmbedding;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, Fwd, Linear, Params};
use crate::tape::Var;
use crate::tensor::Scalar;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct BrainprintConfig {
    pub d_b: usize,
    pub kernel: usize,
    pub res_blocks: usize,
    pub n_subjects: usize,
}

impl Default for BrainprintConfig {
    fn default() -> Self {
        BrainprintConfig {
            d_b: 32,
            kernel: 5,
            res_blocks: 2,
            n_subjects: 4,
        }
    }
}

impl BrainprintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects < 2 {
            return Err(Error::config(format!(
                "need at least 2 subjects, got {}",
                self.n_subjects
            )));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::config("brainprint kernel must be odd".to_string()));
        }
        Ok(())
    }
}

pub struct BrainprintParams {
    pub cfg: BrainprintConfig,
    input_proj: Conv1d,
    res_blocks: Vec<(Conv1d, Conv1d)>,
    sid_head: Linear,
    aad_head: Linear,
    /// T(.) of the modulation: EEG tokens -> separator width.
    t_proj: Linear,
    /// P(.) of the modulation: brainmap -> separator width.
    p_proj: Conv1d,
}

impl BrainprintParams {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        cfg: &BrainprintConfig,
        d_model: usize,
        n_sep: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let input_proj = Conv1d::init(params, rng, "brainprint.input_proj", d_model, cfg.d_b, 1, 1, 0, true);
        let res_blocks = (0..cfg.res_blocks)
            .map(|i| {
                let pad = cfg.kernel / 2;
                let a = Conv1d::init(
                    params, rng, &format!("brainprint.res{i}.conv_a"), cfg.d_b, cfg.d_b,
                    cfg.kernel, 1, pad, true,
                );
                let b = Conv1d::init(
                    params, rng, &format!("brainprint.res{i}.conv_b"), cfg.d_b, cfg.d_b,
                    cfg.kernel, 1, pad, true,
                );
                (a, b)
            })
            .collect();
        let sid_head = Linear::init(params, rng, "brainprint.sid_head", cfg.d_b, cfg.n_subjects, true);
        let aad_head = Linear::init(params, rng, "brainprint.aad_head", cfg.d_b, 2, true);
        let t_proj = Linear::init(params, rng, "brainprint.t_proj", d_model, n_sep, true);
        let p_proj = Conv1d::init(params, rng, "brainprint.p_proj", cfg.d_b, n_sep, 1, 1, 0, true);
        Ok(BrainprintParams {
            cfg: cfg.clone(),
            input_proj,
            res_blocks,
            sid_head,
            aad_head,
            t_proj,
            p_proj,
        })
    }

    /// Temporal-token slice of the embedding, feature-major
    /// `[B, d_model, T_b]`. Falls back to the full token set when the
    /// temporal branch is ablated away.
    fn temporal_slice<T: Scalar>(&self, f: &mut Fwd<T>, e: &FusedEmbedding) -> Var {
        let tokens = if e.temporal_tokens > 0 {
            f.tape.slice_axis(e.tokens, 1, 0, e.temporal_tokens)
        } else {
            e.tokens
        };
        f.tape.permute(tokens, &[0, 2, 1])
    }

    /// Brainmap embedding `[B, d_b, T_b]` from the temporal tokens.
    pub fn compute_brainmap<T: Scalar>(&self, f: &mut Fwd<T>, e: &FusedEmbedding) -> Var {
        let x = self.temporal_slice(f, e);
        let mut h = self.input_proj.forward(f, x);
        for (conv_a, conv_b) in &self.res_blocks {
            let u = conv_a.forward(f, h);
            let u = f.tape.gelu(u);
            let u = conv_b.forward(f, u);
            h = f.tape.add(h, u);
        }
        h
    }

    /// Subject-identification logits `[B, n_subjects]`.
    pub fn classify_sid<T: Scalar>(&self, f: &mut Fwd<T>, brainmap: Var) -> Var {
        let pooled = f.tape.mean_last(brainmap);
        self.sid_head.forward(f, pooled)
    }

    /// Attention-decoding logits `[B, 2]` (attend-left = 0, right = 1).
    pub fn classify_aad<T: Scalar>(&self, f: &mut Fwd<T>, brainmap: Var) -> Var {
        let pooled = f.tape.mean_last(brainmap);
        self.aad_head.forward(f, pooled)
    }

    /// Gain field `T(E) + P(brainmap)`, upsampled to the frame axis.
    pub fn gain_field<T: Scalar>(
        &self,
        f: &mut Fwd<T>,
        e: &FusedEmbedding,
        brainmap: Var,
        frames: usize,
    ) -> Var {
        let tokens = if e.temporal_tokens > 0 {
            f.tape.slice_axis(e.tokens, 1, 0, e.temporal_tokens)
        } else {
            e.tokens
        };
        let te = self.t_proj.forward(f, tokens);
        let te = f.tape.permute(te, &[0, 2, 1]);
        let te = f.tape.linear_interp_last(te, frames);
        let pb = self.p_proj.forward(f, brainmap);
        let pb = f.tape.linear_interp_last(pb, frames);
        f.tape.add(te, pb)
    }

    /// `A_refined = (T(E) + P(brainmap)) ⊙ A`.
    pub fn modulate<T: Scalar>(
        &self,
        f: &mut Fwd<T>,
        separated: Var,
        e: &FusedEmbedding,
        brainmap: Var,
    ) -> Result<Var> {
        let shape = f.tape.shape(separated).to_vec();
        let frames = shape[2];
        let gain = self.gain_field(f, e, brainmap, frames);
        if f.tape.shape(gain) != shape.as_slice() {
            return Err(Error::shape(format!(
                "gain field {:?} does not match separated features {:?}",
                f.tape.shape(gain),
                shape
            )));
        }
        Ok(f.tape.mul(gain, separated))
    }
}
