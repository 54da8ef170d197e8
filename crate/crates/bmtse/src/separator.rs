//! Audio path: learned waveform encoder, EEG-audio fusion, two
//! sandglass-shaped separation blocks with a mirrored skip, and the
//! mask-based waveform rebuilder.

use crate::encoder::FusedEmbedding;
use crate::error::{Error, Result};
use crate::nn::{Conv1d, ConvTranspose1d, Fwd, Linear, Mhsa, Params};
use crate::tape::Var;
use crate::tensor::Scalar;
use rand_chacha::ChaCha8Rng;

/// Separator geometry. The waveform encoder uses 16-sample frames with
/// stride 8 at 8 kHz; granularity factors give each block its segment-
/// axis resolution.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SeparatorConfig {
    pub n_filters: usize,
    pub frame_len: usize,
    pub frame_stride: usize,
    pub fusion_width: usize,
    pub n_sep: usize,
    pub segment_len: usize,
    pub granularity: Vec<usize>,
    pub heads: usize,
    pub ff_hidden: usize,
}

impl Default for SeparatorConfig {
    fn default() -> Self {
        SeparatorConfig {
            n_filters: 64,
            frame_len: 16,
            frame_stride: 8,
            fusion_width: 32,
            n_sep: 64,
            segment_len: 64,
            granularity: vec![1, 2],
            heads: 4,
            ff_hidden: 128,
        }
    }
}

impl SeparatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.granularity.len() != 2 {
            return Err(Error::config(format!(
                "expected 2 sandglasset blocks, got {} granularity factors",
                self.granularity.len()
            )));
        }
        if self.granularity.iter().any(|g| !g.is_power_of_two()) {
            return Err(Error::config("granularity factors must be powers of two".to_string()));
        }
        if self.segment_len % 2 != 0 {
            return Err(Error::config("segment_len must be even (50% overlap)".to_string()));
        }
        if self.frame_stride == 0 || self.frame_stride > self.frame_len {
            return Err(Error::config("frame stride must be in (0, frame_len]".to_string()));
        }
        if self.n_sep % self.heads != 0 {
            return Err(Error::config("heads must divide n_sep".to_string()));
        }
        Ok(())
    }

    pub fn frames_for(&self, samples: usize) -> Result<usize> {
        if samples < self.frame_len {
            return Err(Error::length(format!(
                "waveform of {samples} samples shorter than one frame ({})",
                self.frame_len
            )));
        }
        Ok((samples - self.frame_len) / self.frame_stride + 1)
    }
}

/// One sandglasset block: segment-local feedforward, granularity-pooled
/// self-attention across segments, nearest-neighbour upsampling, and a
/// mean overlap-add back to the frame axis.
pub struct SandglassetBlock {
    ff_ln: crate::nn::LayerNorm,
    ff1: Linear,
    ff2: Linear,
    attn: Mhsa,
    granularity: usize,
}

impl SandglassetBlock {
    fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &SeparatorConfig,
        granularity: usize,
    ) -> Self {
        let ff_ln = crate::nn::LayerNorm::init(params, &format!("{name}.ff_ln"), cfg.n_sep);
        let ff1 = Linear::init(params, rng, &format!("{name}.ff1"), cfg.n_sep, cfg.ff_hidden, true);
        let ff2 = Linear::init(params, rng, &format!("{name}.ff2"), cfg.ff_hidden, cfg.n_sep, true);
        let attn = Mhsa::init(params, rng, &format!("{name}.attn"), cfg.n_sep, cfg.heads, false);
        SandglassetBlock {
            ff_ln,
            ff1,
            ff2,
            attn,
            granularity,
        }
    }

    /// `x: [B, F, L]`; returns the block output (same shape) and the
    /// emitted sandglass state (pre-attention segment features).
    pub fn forward<T: Scalar>(
        &self,
        f: &mut Fwd<T>,
        x: Var,
        cfg: &SeparatorConfig,
        skip_in: Option<Var>,
    ) -> (Var, Var) {
        let shape = f.tape.shape(x).to_vec();
        let (_bsz, _feats, l) = (shape[0], shape[1], shape[2]);
        let hop = cfg.segment_len / 2;
        let x_seg = f.tape.segment(x, cfg.segment_len, hop);
        let segs = f.tape.shape(x_seg)[2];
        let p = cfg.segment_len;

        // segment-local transform, pointwise over frame positions
        let tokens = f.tape.permute(x_seg, &[0, 2, 3, 1]);
        let normed = self.ff_ln.forward(f, tokens);
        let hidden = self.ff1.forward(f, normed);
        let hidden = f.tape.gelu(hidden);
        let update = self.ff2.forward(f, hidden);
        let update = f.tape.permute(update, &[0, 3, 1, 2]);
        let mut h = f.tape.add(x_seg, update);
        if let Some(skip) = skip_in {
            h = f.tape.add(h, skip);
        }
        let state = h;

        // one token per segment (its mean frame) at reduced
        // granularity; attention runs across the segment axis
        let pooled = f.tape.segment_pool(h, self.granularity);
        let s_red = f.tape.shape(pooled)[2];
        let seg_tokens = f.tape.mean_last(pooled); // [B, F, S']
        let a_tokens = f.tape.permute(seg_tokens, &[0, 2, 1]); // [B, S', F]
        let attn_out = self.attn.forward(f, a_tokens);
        // attention context (before residual/norm) is the update we
        // propagate back to full resolution
        let u = self.attn.wo.forward(f, attn_out.ctx);
        let u = f.tape.permute(u, &[0, 2, 1]); // [B, F, S']
        let u = f.tape.broadcast_last(u, p); // [B, F, S', P]
        let u = f.tape.segment_upsample(u, self.granularity, segs);
        let h2 = f.tape.add(h, u);

        let out = f.tape.overlap_add_mean(h2, hop, l);
        (out, state)
    }
}

pub struct SeparatorParams {
    pub cfg: SeparatorConfig,
    audio_enc: Conv1d,
    eeg_proj: Linear,
    fuse_conv: Conv1d,
    blocks: Vec<SandglassetBlock>,
    mask_conv: Conv1d,
    decoder: ConvTranspose1d,
}

impl SeparatorParams {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        cfg: &SeparatorConfig,
        d_model: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        // no bias on the audio basis: silence must encode to zero
        let audio_enc = Conv1d::init(
            params, rng, "separator.audio_enc", 1, cfg.n_filters, cfg.frame_len,
            cfg.frame_stride, 0, false,
        );
        let eeg_proj = Linear::init(
            params, rng, "separator.eeg_proj", d_model, cfg.fusion_width, true,
        );
        let fuse_conv = Conv1d::init(
            params, rng, "separator.fuse_conv", cfg.n_filters + cfg.fusion_width, cfg.n_sep,
            1, 1, 0, true,
        );
        let blocks = cfg
            .granularity
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                SandglassetBlock::init(params, rng, &format!("separator.block{i}"), cfg, g)
            })
            .collect();
        let mask_conv = Conv1d::init(
            params, rng, "separator.mask_conv", cfg.n_sep, cfg.n_filters, 1, 1, 0, true,
        );
        let decoder = ConvTranspose1d::init(
            params, rng, "separator.decoder", cfg.n_filters, 1, cfg.frame_len, cfg.frame_stride,
        );
        Ok(SeparatorParams {
            cfg: cfg.clone(),
            audio_enc,
            eeg_proj,
            fuse_conv,
            blocks,
            mask_conv,
            decoder,
        })
    }

    /// TasNet-style encoder: framed learned basis + ReLU.
    /// `[B, samples] -> [B, N, L]`; features are nonnegative.
    pub fn encode_audio<T: Scalar>(&self, f: &mut Fwd<T>, wave: Var) -> Result<Var> {
        let shape = f.tape.shape(wave).to_vec();
        assert_eq!(shape.len(), 2, "audio input must be [B, samples]");
        self.cfg.frames_for(shape[1])?;
        let x = f.tape.reshape(wave, &[shape[0], 1, shape[1]]);
        let enc = self.audio_enc.forward(f, x);
        Ok(f.tape.relu(enc))
    }

    /// Project EEG tokens, align them to the frame axis by linear
    /// interpolation, concatenate with the audio features, and mix down
    /// to the separator width.
    pub fn fuse_audio_eeg<T: Scalar>(
        &self,
        f: &mut Fwd<T>,
        audio: Var,
        eeg: &FusedEmbedding,
    ) -> Var {
        let l = f.tape.shape(audio)[2];
        let proj = self.eeg_proj.forward(f, eeg.tokens);
        let proj = f.tape.permute(proj, &[0, 2, 1]);
        let aligned = f.tape.linear_interp_last(proj, l);
        let cat = f.tape.concat(&[audio, aligned], 1);
        self.fuse_conv.forward(f, cat)
    }

    /// Two sandglasset blocks with the mirrored skip wired between them.
    pub fn separate<T: Scalar>(&self, f: &mut Fwd<T>, fused: Var) -> Result<Var> {
        let l = f.tape.shape(fused)[2];
        if l < self.cfg.segment_len {
            return Err(Error::config(format!(
                "segment_len {} exceeds frame axis {l}",
                self.cfg.segment_len
            )));
        }
        let (h1, state) = self.blocks[0].forward(f, fused, &self.cfg, None);
        let (h2, _) = self.blocks[1].forward(f, h1, &self.cfg, Some(state));
        Ok(h2)
    }

    /// Variant without the sandglass skip, for wiring checks.
    pub fn separate_without_skip<T: Scalar>(&self, f: &mut Fwd<T>, fused: Var) -> Result<Var> {
        let (h1, _) = self.blocks[0].forward(f, fused, &self.cfg, None);
        let (h2, _) = self.blocks[1].forward(f, h1, &self.cfg, None);
        Ok(h2)
    }

    /// Sigmoid mask on the encoder features, then transposed-conv
    /// overlap-add back to a waveform of exactly `out_len` samples.
    pub fn rebuild<T: Scalar>(
        &self,
        f: &mut Fwd<T>,
        refined: Var,
        enc: Var,
        out_len: usize,
    ) -> Result<Var> {
        let mask_logits = self.mask_conv.forward(f, refined);
        let mask = f.tape.sigmoid(mask_logits);
        let masked = f.tape.mul(mask, enc);
        let wave = self.decoder.forward(f, masked);
        let shape = f.tape.shape(wave).to_vec();
        let (bsz, synth_len) = (shape[0], shape[2]);
        if synth_len.abs_diff(out_len) > self.cfg.frame_stride {
            return Err(Error::shape(format!(
                "synthesis length {synth_len} more than one stride from requested {out_len}"
            )));
        }
        let wave = f.tape.reshape(wave, &[bsz, synth_len]);
        let fitted = if synth_len == out_len {
            wave
        } else if synth_len > out_len {
            f.tape.slice_axis(wave, 1, 0, out_len)
        } else {
            let pad = f
                .tape
                .constant(crate::tensor::Tensor::zeros(&[bsz, out_len - synth_len]));
            f.tape.concat(&[wave, pad], 1)
        };
        Ok(fitted)
    }

    /// Mask probabilities for diagnostics: `sigmoid(mask_conv(refined))`.
    pub fn mask_of<T: Scalar>(&self, f: &mut Fwd<T>, refined: Var) -> Var {
        let logits = self.mask_conv.forward(f, refined);
        f.tape.sigmoid(logits)
    }
}
