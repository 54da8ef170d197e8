//! Robust EEG encoder: parallel long-short temporal and spatial
//! convolution branches, adaptive spectral gain enhancement, and
//! positional-embedding self-attention fusion into one token sequence.

use crate::eeg::EegBatch;
use crate::error::{Error, Result};
use crate::nn::{uniform_fanin, Conv1d, Fwd, Linear, Mhsa, ParamId, Params};
use crate::tape::Var;
use crate::tensor::{lit, Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

/// Encoder geometry. Desk-scale defaults: 16 channels, 256 samples
/// (2 s at 128 Hz), 32 temporal features at stride 4, 16 spatial
/// features, 64-dim tokens with 4 attention heads.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub channels: usize,
    pub time_steps: usize,
    /// Total temporal feature width D (split between the two kernels).
    pub d_temp: usize,
    pub temporal_stride: usize,
    pub k_short: usize,
    pub k_long: usize,
    /// Spatial feature width D' (pooled time bins per electrode).
    pub d_spat: usize,
    pub k_spat: usize,
    pub d_model: usize,
    pub heads: usize,
    pub gn_groups: usize,
    pub pool_window: usize,
    pub asg_eps: f64,
    pub use_ls_tconv: bool,
    pub use_sconv: bool,
    pub use_asg: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: 16,
            time_steps: 256,
            d_temp: 32,
            temporal_stride: 4,
            k_short: 15,
            k_long: 65,
            d_spat: 16,
            k_spat: 15,
            d_model: 64,
            heads: 4,
            gn_groups: 4,
            pool_window: 9,
            asg_eps: 1e-6,
            use_ls_tconv: true,
            use_sconv: true,
            use_asg: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.use_ls_tconv && !self.use_sconv {
            return Err(Error::config(
                "encoder needs at least one of the temporal and spatial branches".to_string(),
            ));
        }
        if self.time_steps % self.temporal_stride != 0 {
            return Err(Error::config(format!(
                "temporal stride {} must divide T={}",
                self.temporal_stride, self.time_steps
            )));
        }
        if self.d_temp % 2 != 0 {
            return Err(Error::config("d_temp must be even (two kernel branches)".to_string()));
        }
        if self.d_spat > self.time_steps {
            return Err(Error::config(format!(
                "d_spat {} exceeds time axis {}",
                self.d_spat, self.time_steps
            )));
        }
        if self.d_temp % self.gn_groups != 0 || self.d_spat % self.gn_groups != 0 {
            return Err(Error::config(format!(
                "gn_groups {} must divide both d_temp {} and d_spat {}",
                self.gn_groups, self.d_temp, self.d_spat
            )));
        }
        if self.pool_window % 2 == 0 {
            return Err(Error::config("pool_window must be odd".to_string()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::config("heads must divide d_model".to_string()));
        }
        if self.k_short % 2 == 0 || self.k_long % 2 == 0 || self.k_spat % 2 == 0 {
            return Err(Error::config("conv kernels must be odd for same-length output".to_string()));
        }
        Ok(())
    }

    pub fn temporal_tokens(&self) -> usize {
        if self.use_ls_tconv {
            self.time_steps / self.temporal_stride
        } else {
            0
        }
    }

    pub fn spatial_tokens(&self) -> usize {
        if self.use_sconv {
            self.channels
        } else {
            0
        }
    }

    /// Feature width of each branch after (optional) ASG enhancement.
    fn temp_token_width(&self) -> usize {
        if self.use_asg {
            2 * self.d_temp
        } else {
            self.d_temp
        }
    }

    fn spat_token_width(&self) -> usize {
        if self.use_asg {
            2 * self.d_spat
        } else {
            self.d_spat
        }
    }
}

/// Axis the log-power pooling runs along. The temporal branch pools
/// over its time positions; the spatial branch pools over its pooled
/// time bins (the feature axis), which keeps every electrode token a
/// function of its own channel only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolAxis {
    Positions,
    Features,
}

/// Adaptive spectral gain parameters: a per-feature gate on group-
/// normalized features plus a log-power branch, concatenated.
#[derive(Clone, Copy, Debug)]
pub struct AsgParams {
    pub gate_scale: ParamId,
    pub gate_shift: ParamId,
    pub gn_groups: usize,
    pub eps: f64,
    pub pool_window: usize,
    pub pool_axis: PoolAxis,
}

impl AsgParams {
    fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        features: usize,
        gn_groups: usize,
        eps: f64,
        pool_window: usize,
        pool_axis: PoolAxis,
    ) -> Self {
        let gate_scale = params.alloc(
            format!("{name}.gate_scale"),
            uniform_fanin(rng, &[features], features),
        );
        // zero shift: the gate starts at sigmoid(W_s * GN(x))
        let gate_shift = params.alloc(format!("{name}.gate_shift"), Tensor::zeros(&[features]));
        AsgParams {
            gate_scale,
            gate_shift,
            gn_groups,
            eps,
            pool_window,
            pool_axis,
        }
    }
}

/// All encoder parameters plus the geometry they were built for.
pub struct EncoderParams {
    pub cfg: EncoderConfig,
    tconv_short: Option<Conv1d>,
    tconv_long: Option<Conv1d>,
    sconv: Option<Conv1d>,
    pub asg_temp: Option<AsgParams>,
    pub asg_spat: Option<AsgParams>,
    proj_temp: Option<Linear>,
    proj_spat: Option<Linear>,
    pos_temp: Option<ParamId>,
    pos_spat: Option<ParamId>,
    pub mhsa: Mhsa,
}

impl EncoderParams {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        cfg: &EncoderConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let half = cfg.d_temp / 2;
        let tconv_short = cfg.use_ls_tconv.then(|| {
            Conv1d::init(
                params, rng, "encoder.tconv_short", 1, half, cfg.k_short, 1,
                cfg.k_short / 2, true,
            )
        });
        let tconv_long = cfg.use_ls_tconv.then(|| {
            Conv1d::init(
                params, rng, "encoder.tconv_long", 1, half, cfg.k_long, 1,
                cfg.k_long / 2, true,
            )
        });
        let sconv = cfg.use_sconv.then(|| {
            Conv1d::init(params, rng, "encoder.sconv", 1, 1, cfg.k_spat, 1, cfg.k_spat / 2, true)
        });
        let asg_temp = (cfg.use_ls_tconv && cfg.use_asg).then(|| {
            AsgParams::init(
                params, rng, "encoder.asg_temp", cfg.d_temp, cfg.gn_groups, cfg.asg_eps,
                cfg.pool_window, PoolAxis::Positions,
            )
        });
        let asg_spat = (cfg.use_sconv && cfg.use_asg).then(|| {
            AsgParams::init(
                params, rng, "encoder.asg_spat", cfg.d_spat, cfg.gn_groups, cfg.asg_eps,
                cfg.pool_window, PoolAxis::Features,
            )
        });
        let proj_temp = cfg.use_ls_tconv.then(|| {
            Linear::init(
                params, rng, "encoder.proj_temp", cfg.temp_token_width(), cfg.d_model, true,
            )
        });
        let proj_spat = cfg.use_sconv.then(|| {
            Linear::init(
                params, rng, "encoder.proj_spat", cfg.spat_token_width(), cfg.d_model, true,
            )
        });
        // learnable positional embeddings start at zero
        let pos_temp = cfg.use_ls_tconv.then(|| {
            params.alloc(
                "encoder.pos_temp",
                Tensor::zeros(&[cfg.temporal_tokens(), cfg.d_model]),
            )
        });
        let pos_spat = cfg.use_sconv.then(|| {
            params.alloc(
                "encoder.pos_spat",
                Tensor::zeros(&[cfg.channels, cfg.d_model]),
            )
        });
        let mhsa = Mhsa::init(params, rng, "encoder.mhsa", cfg.d_model, cfg.heads, false);
        Ok(EncoderParams {
            cfg: cfg.clone(),
            tconv_short,
            tconv_long,
            sconv,
            asg_temp,
            asg_spat,
            proj_temp,
            proj_spat,
            pos_temp,
            pos_spat,
            mhsa,
        })
    }
}

/// Encoder output: one token sequence `[B, T' + C, d_model]` with the
/// temporal-token count recorded for downstream slicing.
pub struct FusedEmbedding {
    pub tokens: Var,
    pub temporal_tokens: usize,
    pub spatial_tokens: usize,
    pub d_model: usize,
    /// Attention probabilities of the fusion layer, for diagnostics.
    pub attn: Var,
}

/// Put an EEG batch on the tape as a constant `[B, C, T]` tensor.
pub fn eeg_to_tape<T: Scalar>(f: &mut Fwd<T>, x: &EegBatch) -> Var {
    let t = Tensor::<T>::from_f64(&Tensor::from_vec(
        &[x.batch(), x.channels(), x.samples()],
        x.data().to_vec(),
    ));
    f.tape.constant(t)
}

/// Long-short temporal convolution branch: channel mean, two parallel
/// kernels shared across channels, GELU, strided average pooling.
/// `[B, C, T] -> [B, D, T']`.
pub fn ls_tconv<T: Scalar>(f: &mut Fwd<T>, x: Var, p: &EncoderParams) -> Var {
    let cfg = &p.cfg;
    let shape = f.tape.shape(x).to_vec();
    let (bsz, _c, t) = (shape[0], shape[1], shape[2]);
    let xt = f.tape.permute(x, &[0, 2, 1]);
    let mean = f.tape.mean_last(xt);
    let mono = f.tape.reshape(mean, &[bsz, 1, t]);
    let short = p.tconv_short.as_ref().unwrap().forward(f, mono);
    let long = p.tconv_long.as_ref().unwrap().forward(f, mono);
    let cat = f.tape.concat(&[short, long], 1);
    let act = f.tape.gelu(cat);
    f.tape.avg_pool1d(act, cfg.temporal_stride, cfg.temporal_stride)
}

/// Spatial convolution branch: one temporal kernel shared across
/// electrodes, GELU, adaptive pooling of the time axis.
/// `[B, C, T] -> [B, C, D']`.
pub fn sconv<T: Scalar>(f: &mut Fwd<T>, x: Var, p: &EncoderParams) -> Var {
    let cfg = &p.cfg;
    let shape = f.tape.shape(x).to_vec();
    let (bsz, c, t) = (shape[0], shape[1], shape[2]);
    let per_channel = f.tape.reshape(x, &[bsz * c, 1, t]);
    let conv = p.sconv.as_ref().unwrap().forward(f, per_channel);
    let act = f.tape.gelu(conv);
    let pooled = f.tape.adaptive_avg_pool1d(act, cfg.d_spat);
    f.tape.reshape(pooled, &[bsz, c, cfg.d_spat])
}

/// Adaptive spectral gain: gated group-normalized branch concatenated
/// with a log-power branch. `[B, F, P] -> [B, 2F, P]`.
pub fn asg<T: Scalar>(f: &mut Fwd<T>, e_in: Var, p: &AsgParams) -> Var {
    let gn = f.tape.group_norm(e_in, p.gn_groups, lit(p.eps));
    let scaled = {
        let s = f.p(p.gate_scale);
        f.tape.mul_feature(gn, s)
    };
    let shifted = {
        let b = f.p(p.gate_shift);
        f.tape.add_feature(scaled, b)
    };
    let gate = f.tape.sigmoid(shifted);
    let gated = f.tape.mul(e_in, gate);

    let sq = f.tape.square(e_in);
    let sq_eps = f.tape.add_scalar(sq, lit(p.eps));
    let pooled = match p.pool_axis {
        PoolAxis::Positions => f.tape.avg_pool1d_same(sq_eps, p.pool_window),
        PoolAxis::Features => {
            let t = f.tape.permute(sq_eps, &[0, 2, 1]);
            let t = f.tape.avg_pool1d_same(t, p.pool_window);
            f.tape.permute(t, &[0, 2, 1])
        }
    };
    let log_power = f.tape.ln(pooled);

    f.tape.concat(&[gated, log_power], 1)
}

/// Project enhanced branch features to `d_model` tokens, add positional
/// embeddings, and concatenate along the token axis (pre-attention).
pub fn build_tokens<T: Scalar>(
    f: &mut Fwd<T>,
    temporal: Option<Var>,
    spatial: Option<Var>,
    p: &EncoderParams,
) -> Var {
    let mut token_sets = Vec::new();
    if let Some(t) = temporal {
        let tokens = f.tape.permute(t, &[0, 2, 1]);
        let proj = p.proj_temp.as_ref().unwrap().forward(f, tokens);
        let pos = f.p(p.pos_temp.unwrap());
        token_sets.push(f.tape.add_broadcast_batch(proj, pos));
    }
    if let Some(s) = spatial {
        let tokens = f.tape.permute(s, &[0, 2, 1]);
        let proj = p.proj_spat.as_ref().unwrap().forward(f, tokens);
        let pos = f.p(p.pos_spat.unwrap());
        token_sets.push(f.tape.add_broadcast_batch(proj, pos));
    }
    assert!(!token_sets.is_empty(), "encoder produced no tokens");
    if token_sets.len() == 1 {
        token_sets[0]
    } else {
        f.tape.concat(&token_sets, 1)
    }
}

/// Cross-domain fusion: token projection, positional embeddings, one
/// multi-head self-attention layer with residual and layer norm.
///
/// `temporal` is the ASG-enhanced temporal branch `[B, *, T']`;
/// `spatial` is the ASG-enhanced spatial branch `[B, *, C]`.
pub fn fuse_cross_domain<T: Scalar>(
    f: &mut Fwd<T>,
    temporal: Option<Var>,
    spatial: Option<Var>,
    p: &EncoderParams,
) -> FusedEmbedding {
    let tokens = build_tokens(f, temporal, spatial, p);
    let out = p.mhsa.forward(f, tokens);
    FusedEmbedding {
        tokens: out.out,
        temporal_tokens: p.cfg.temporal_tokens(),
        spatial_tokens: p.cfg.spatial_tokens(),
        d_model: p.cfg.d_model,
        attn: out.attn,
    }
}

/// Full encoder: branches, ASG enhancement, cross-domain fusion.
pub fn encode<T: Scalar>(f: &mut Fwd<T>, x: &EegBatch, p: &EncoderParams) -> Result<FusedEmbedding> {
    let cfg = &p.cfg;
    if x.channels() != cfg.channels || x.samples() != cfg.time_steps {
        return Err(Error::shape(format!(
            "EEG batch is {}x{}, encoder expects {}x{}",
            x.channels(),
            x.samples(),
            cfg.channels,
            cfg.time_steps
        )));
    }
    let xv = eeg_to_tape(f, x);
    let temporal = cfg.use_ls_tconv.then(|| {
        let t = ls_tconv(f, xv, p);
        match &p.asg_temp {
            Some(a) => asg(f, t, a),
            None => t,
        }
    });
    let spatial = cfg.use_sconv.then(|| {
        let s = sconv(f, xv, p);
        // ASG treats D' as the feature axis, electrodes as positions
        let s = f.tape.permute(s, &[0, 2, 1]);
        let s = match &p.asg_spat {
            Some(a) => asg(f, s, a),
            None => s,
        };
        // back to [B, width, C] feature-major layout for token building
        s
    });
    Ok(fuse_cross_domain(f, temporal, spatial, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::bind;
    use crate::tape::Tape;
    use rand::Rng;
    use rand::SeedableRng;

    fn toy_eeg(seed: u64, batch: usize, cfg: &EncoderConfig) -> EegBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..batch * cfg.channels * cfg.time_steps)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        EegBatch::standardized(raw, batch, cfg.channels, cfg.time_steps, 128).unwrap()
    }

    fn setup(cfg: &EncoderConfig, seed: u64) -> (Params<f64>, EncoderParams) {
        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = EncoderParams::init(&mut params, &mut rng, cfg).unwrap();
        (params, enc)
    }

    #[test]
    fn ls_tconv_shape() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 0);
        let x = toy_eeg(1, 2, &cfg);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params);
        let mut f = Fwd::new(&mut tape, &binding);
        let xv = eeg_to_tape(&mut f, &x);
        let y = ls_tconv(&mut f, xv, &enc);
        assert_eq!(tape.shape(y), &[2, 32, 64]);
    }

    #[test]
    fn ls_tconv_zero_input_zero_bias_gives_zero() {
        let cfg = EncoderConfig::default();
        let (mut params, enc) = setup(&cfg, 0);
        for name in ["encoder.tconv_short.b", "encoder.tconv_long.b"] {
            let id = params.find(name).unwrap();
            *params.get_mut(id) = Tensor::zeros(params.get(id).shape());
        }
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params);
        let mut f = Fwd::new(&mut tape, &binding);
        let xv = f.tape.constant(Tensor::zeros(&[1, 16, 256]));
        let y = ls_tconv(&mut f, xv, &enc);
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ls_tconv_impulse_matches_direct_convolution() {
        // stride 1 so pooling is the identity; compare against a direct
        // evaluation of the two kernels on the channel mean
        let cfg = EncoderConfig {
            channels: 4,
            time_steps: 32,
            d_temp: 4,
            temporal_stride: 1,
            k_short: 3,
            k_long: 5,
            d_spat: 4,
            gn_groups: 2,
            d_model: 8,
            heads: 2,
            ..EncoderConfig::default()
        };
        let (mut params, enc) = setup(&cfg, 3);
        for name in ["encoder.tconv_short.b", "encoder.tconv_long.b"] {
            let id = params.find(name).unwrap();
            *params.get_mut(id) = Tensor::zeros(params.get(id).shape());
        }
        // impulse on channel 0 at t=10; channel mean spreads it by 1/C
        let mut raw = vec![0.0; 4 * 32];
        raw[10] = 1.0;
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params);
        let mut f = Fwd::new(&mut tape, &binding);
        let xv = f.tape.constant(Tensor::from_vec(&[1, 4, 32], raw.clone()));
        let y = ls_tconv(&mut f, xv, &enc);

        let gelu = crate::tape::gelu_scalar::<f64>;
        let w_short = params.get(params.find("encoder.tconv_short.w").unwrap());
        for feat in 0..2 {
            for t in 0..32 {
                // direct cross-correlation of the impulse train
                let mut acc = 0.0;
                for k in 0..3 {
                    let pos = t + k;
                    if pos >= 1 && pos - 1 < 32 && pos - 1 == 10 {
                        acc += w_short.data()[feat * 3 + k] * (1.0 / 4.0);
                    }
                }
                let expect = gelu(acc);
                let got = tape.value(y).data()[feat * 32 + t];
                assert!(
                    (got - expect).abs() < 1e-12,
                    "feat {feat} t {t}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn sconv_shape_and_constant_rows() {
        let cfg = EncoderConfig::default();
        let (mut params, enc) = setup(&cfg, 5);
        let mut tape = Tape::new();
        // identity kernel (delta at center), zero bias
        let wid = params.find("encoder.sconv.w").unwrap();
        let mut w = Tensor::zeros(&[1, 1, 15]);
        w.data_mut()[7] = 1.0;
        *params.get_mut(wid) = w;
        let bid = params.find("encoder.sconv.b").unwrap();
        *params.get_mut(bid) = Tensor::zeros(&[1]);

        let mut raw = vec![0.0; 16 * 256];
        for c in 0..16 {
            for t in 0..256 {
                raw[c * 256 + t] = 0.1 * c as f64;
            }
        }
        let binding = bind(&mut tape, &params);
        let mut f = Fwd::new(&mut tape, &binding);
        let xv = f.tape.constant(Tensor::from_vec(&[1, 16, 256], raw));
        let y = sconv(&mut f, xv, &enc);
        assert_eq!(tape.shape(y), &[1, 16, 16]);
        let gelu = crate::tape::gelu_scalar::<f64>;
        for c in 0..16 {
            let expect = gelu(0.1 * c as f64);
            // interior bins see only the constant (edges see zero pad)
            for d in 1..15 {
                let got = tape.value(y).data()[c * 16 + d];
                assert!((got - expect).abs() < 1e-12, "c={c} d={d}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn sconv_commutes_with_channel_permutation() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 6);
        let x = toy_eeg(7, 1, &cfg);

        let run = |data: Vec<f64>| {
            let mut tape = Tape::new();
            let binding = bind(&mut tape, &params);
            let mut f = Fwd::new(&mut tape, &binding);
            let xv = f.tape.constant(Tensor::from_vec(&[1, 16, 256], data));
            let y = sconv(&mut f, xv, &enc);
            tape.value(y).clone()
        };
        let base = run(x.data().to_vec());
        // rotate channels by 3
        let mut rotated = vec![0.0; 16 * 256];
        for c in 0..16 {
            let src = (c + 3) % 16;
            rotated[c * 256..(c + 1) * 256].copy_from_slice(x.channel(0, src));
        }
        let rot = run(rotated);
        for c in 0..16 {
            let src = (c + 3) % 16;
            for d in 0..16 {
                assert_eq!(rot.data()[c * 16 + d], base.data()[src * 16 + d]);
            }
        }
    }

    #[test]
    fn asg_zero_gate_params_halve_the_input() {
        let cfg = EncoderConfig::default();
        let (mut params, enc) = setup(&cfg, 8);
        let a = enc.asg_temp.unwrap();
        *params.get_mut(a.gate_scale) = Tensor::zeros(&[32]);
        *params.get_mut(a.gate_shift) = Tensor::zeros(&[32]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let e_in = uniform_fanin::<f64>(&mut rng, &[2, 32, 64], 1);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params);
        let mut f = Fwd::new(&mut tape, &binding);
        let ev = f.tape.constant(e_in.clone());
        let out = asg(&mut f, ev, &a);
        assert_eq!(tape.shape(out), &[2, 64, 64]);
        for (i, &x) in e_in.data().iter().enumerate() {
            let b = i / (32 * 64);
            let rest = i % (32 * 64);
            let got = tape.value(out).data()[b * 64 * 64 + rest];
            assert!((got - 0.5 * x).abs() < 1e-12, "gated branch is not x/2 at {i}");
        }
    }

    #[test]
    fn asg_log_power_hand_values() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 10);
        let a = enc.asg_temp.unwrap();
        let eval = |fill: f64| {
            let mut tape = Tape::new();
            let binding = bind(&mut tape, &params);
            let mut f = Fwd::new(&mut tape, &binding);
            let ev = f.tape.constant(Tensor::filled(&[1, 32, 64], fill));
            let out = asg(&mut f, ev, &a);
            // log branch occupies features 32..64
            tape.value(out).data()[32 * 64..64 * 64].to_vec()
        };
        let zeros = eval(0.0);
        for &v in &zeros {
            assert!((v - 1e-6f64.ln()).abs() < 1e-9, "log(eps) expected, got {v}");
        }
        let ones = eval(1.0);
        for &v in &ones {
            assert!((v - (1.0 + 1e-6f64).ln()).abs() < 1e-12, "log(1+eps) expected, got {v}");
        }
    }

    #[test]
    fn asg_gate_is_bounded_and_log_branch_sign_blind() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 11);
        let a = enc.asg_temp.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e = uniform_fanin::<f64>(&mut rng, &[1, 32, 64], 1);
        let run = |input: Tensor<f64>| {
            let mut tape = Tape::new();
            let binding = bind(&mut tape, &params);
            let mut f = Fwd::new(&mut tape, &binding);
            let ev = f.tape.constant(input);
            let out = asg(&mut f, ev, &a);
            tape.value(out).clone()
        };
        let pos = run(e.clone());
        let neg = run(e.map(|x| -x));
        let block = 32 * 64;
        for i in 0..block {
            // gated branch bounded by |input|
            assert!(pos.data()[i].abs() <= e.data()[i].abs() + 1e-15);
            // log branch depends on the square only
            assert_eq!(pos.data()[block + i], neg.data()[block + i]);
        }
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 13);
        let x = toy_eeg(14, 2, &cfg);
        let run = || {
            let mut tape = Tape::new();
            let binding = bind(&mut tape, &params);
            let mut f = Fwd::new(&mut tape, &binding);
            let e = encode(&mut f, &x, &enc).unwrap();
            (tape.shape(e.tokens).to_vec(), tape.value(e.tokens).clone())
        };
        let (shape, a) = run();
        assert_eq!(shape, vec![2, 80, 64]);
        let (_, b) = run();
        assert_eq!(a, b, "encode is not deterministic");
    }

    #[test]
    fn encode_distinguishes_different_inputs() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 15);
        let run = |x: &EegBatch| {
            let mut tape = Tape::new();
            let binding = bind(&mut tape, &params);
            let mut f = Fwd::new(&mut tape, &binding);
            let e = encode(&mut f, x, &enc).unwrap();
            tape.value(e.tokens).clone()
        };
        let a = run(&toy_eeg(16, 1, &cfg));
        let b = run(&toy_eeg(17, 1, &cfg));
        let dist: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(dist > 1e-3, "embeddings collapsed: distance {dist}");
    }

    #[test]
    fn channel_permutation_permutes_spatial_tokens_only() {
        let cfg = EncoderConfig::default();
        let (params, enc) = setup(&cfg, 18);
        let x = toy_eeg(19, 1, &cfg);
        let tokens_of = |data: Vec<f64>| {
            let mut tape = Tape::new();
            let binding = bind(&mut tape, &params);
            let mut f = Fwd::new(&mut tape, &binding);
            let xv = f.tape.constant(Tensor::from_vec(&[1, 16, 256], data));
            let t = ls_tconv(&mut f, xv, &enc);
            let t = asg(&mut f, t, &enc.asg_temp.unwrap());
            let s = sconv(&mut f, xv, &enc);
            let s = f.tape.permute(s, &[0, 2, 1]);
            let s = asg(&mut f, s, &enc.asg_spat.unwrap());
            let pre_attn = build_tokens(&mut f, Some(t), Some(s), &enc);
            tape.value(pre_attn).clone()
        };
        let base = tokens_of(x.data().to_vec());
        let mut rotated = vec![0.0; 16 * 256];
        for c in 0..16 {
            let src = (c + 5) % 16;
            rotated[c * 256..(c + 1) * 256].copy_from_slice(x.channel(0, src));
        }
        let rot = tokens_of(rotated);
        let dm = 64;
        // temporal tokens (first 64) unchanged: channel mean is invariant
        for i in 0..64 * dm {
            assert!((base.data()[i] - rot.data()[i]).abs() < 1e-9, "temporal token moved at {i}");
        }
        // spatial tokens permute with the channels, up to their
        // positional embeddings (zero at init, so rows match exactly)
        for c in 0..16 {
            let src = (c + 5) % 16;
            for d in 0..dm {
                let got = rot.data()[(64 + c) * dm + d];
                let expect = base.data()[(64 + src) * dm + d];
                assert!((got - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ablation_configs_change_token_counts() {
        let base = EncoderConfig::default();
        let no_temp = EncoderConfig { use_ls_tconv: false, ..base.clone() };
        let no_spat = EncoderConfig { use_sconv: false, ..base.clone() };
        let (params_a, enc_a) = setup(&no_temp, 20);
        let (params_b, enc_b) = setup(&no_spat, 21);
        let x = toy_eeg(22, 1, &base);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params_a);
        let mut f = Fwd::new(&mut tape, &binding);
        let e = encode(&mut f, &x, &enc_a).unwrap();
        assert_eq!(tape.shape(e.tokens), &[1, 16, 64]);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params_b);
        let mut f = Fwd::new(&mut tape, &binding);
        let e = encode(&mut f, &x, &enc_b).unwrap();
        assert_eq!(tape.shape(e.tokens), &[1, 64, 64]);

        let both_off = EncoderConfig {
            use_ls_tconv: false,
            use_sconv: false,
            ..base
        };
        assert!(both_off.validate().is_err());
    }

    #[test]
    fn no_asg_reverts_projection_widths() {
        let cfg = EncoderConfig { use_asg: false, ..EncoderConfig::default() };
        let (params, enc) = setup(&cfg, 23);
        // projection takes un-doubled widths
        let w = params.get(params.find("encoder.proj_temp.w").unwrap());
        assert_eq!(w.shape(), &[32, 64]);
        let w = params.get(params.find("encoder.proj_spat.w").unwrap());
        assert_eq!(w.shape(), &[16, 64]);
        let x = toy_eeg(24, 1, &cfg);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &params);
        let mut f = Fwd::new(&mut tape, &binding);
        let e = encode(&mut f, &x, &enc).unwrap();
        assert_eq!(tape.shape(e.tokens), &[1, 80, 64]);
    }
}
