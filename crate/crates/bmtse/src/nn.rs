//! Parameter registry and the small set of layers the model is built
//! from. Parameters live in a [`Params`] store; each forward pass binds
//! them onto a fresh tape and layers look their vars up through [`Fwd`].

use crate::tape::{Tape, Var};
use crate::tensor::{lit, Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle into a [`Params`] store.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Named parameter tensors in allocation order. Names are unique and
/// stable; checkpoints and the optimizer address parameters by them.
pub struct Params<T: Scalar> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params { entries: Vec::new() }
    }

    pub fn alloc(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            self.entries.iter().all(|(n, _)| n != &name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, tensor));
        ParamId(self.entries.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].1
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].1
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].0
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|(n, _)| n == name).map(ParamId)
    }

    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn convert<U: Scalar>(&self) -> Params<U> {
        Params {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::<U>::from_f64(&t.to_f64())))
                .collect(),
        }
    }
}

/// Tape vars for every parameter, in `ParamId` order.
pub struct Binding {
    vars: Vec<Var>,
}

pub fn bind<T: Scalar>(tape: &mut Tape<T>, params: &Params<T>) -> Binding {
    Binding {
        vars: params.iter().map(|(_, t)| tape.leaf(t.clone())).collect(),
    }
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Forward-pass context: the tape being built plus the parameter binding.
pub struct Fwd<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub binding: &'a Binding,
}

impl<'a, T: Scalar> Fwd<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, binding: &'a Binding) -> Self {
        Fwd { tape, binding }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.binding.var(id)
    }
}

/// Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
/// Draws are made in f64 so f32 and f64 models see identical values.
pub fn uniform_fanin<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| lit(rng.random_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data)
}

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
    ) -> Self {
        let w = params.alloc(format!("{name}.w"), uniform_fanin(rng, &[d_in, d_out], d_in));
        let b = bias.then(|| params.alloc(format!("{name}.b"), uniform_fanin(rng, &[d_out], d_in)));
        Linear { w, b }
    }

    /// Zero weights and bias; used where a residual path must start as
    /// the identity.
    pub fn init_zero<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
    ) -> Self {
        let w = params.alloc(format!("{name}.w"), Tensor::zeros(&[d_in, d_out]));
        let b = bias.then(|| params.alloc(format!("{name}.b"), Tensor::zeros(&[d_out])));
        Linear { w, b }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Var {
        let w = f.p(self.w);
        let b = self.b.map(|b| f.p(b));
        f.tape.linear(x, w, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let fan_in = c_in * kernel;
        let w = params.alloc(
            format!("{name}.w"),
            uniform_fanin(rng, &[c_out, c_in, kernel], fan_in),
        );
        let b = bias.then(|| params.alloc(format!("{name}.b"), uniform_fanin(rng, &[c_out], fan_in)));
        Conv1d { w, b, stride, pad }
    }

    pub fn init_zero<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Self {
        let w = params.alloc(format!("{name}.w"), Tensor::zeros(&[c_out, c_in, kernel]));
        let b = bias.then(|| params.alloc(format!("{name}.b"), Tensor::zeros(&[c_out])));
        Conv1d { w, b, stride, pad }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Var {
        let w = f.p(self.w);
        let b = self.b.map(|b| f.p(b));
        f.tape.conv1d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvTranspose1d {
    pub w: ParamId,
    pub stride: usize,
}

impl ConvTranspose1d {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let w = params.alloc(
            format!("{name}.w"),
            uniform_fanin(rng, &[c_in, c_out, kernel], c_in * kernel),
        );
        ConvTranspose1d { w, stride }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Var {
        let w = f.p(self.w);
        f.tape.conv1d_transpose(x, w, self.stride)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init<T: Scalar>(params: &mut Params<T>, name: &str, dim: usize) -> Self {
        let gamma = params.alloc(format!("{name}.gamma"), Tensor::filled(&[dim], T::one()));
        let beta = params.alloc(format!("{name}.beta"), Tensor::zeros(&[dim]));
        LayerNorm { gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> Var {
        let gamma = f.p(self.gamma);
        let beta = f.p(self.beta);
        f.tape.layer_norm(x, gamma, beta, lit(1e-6))
    }
}

/// Multi-head self-attention with residual connection and layer norm.
#[derive(Clone, Copy, Debug)]
pub struct Mhsa {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub ln: LayerNorm,
    pub heads: usize,
}

pub struct MhsaOut {
    /// Post-residual, post-norm tokens `[B, N, D]`.
    pub out: Var,
    /// Attention probabilities `[B*H, N, N]`; rows sum to one.
    pub attn: Var,
    /// Attention context before the output projection `[B, N, D]`.
    pub ctx: Var,
}

impl Mhsa {
    pub fn init<T: Scalar>(
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_model: usize,
        heads: usize,
        zero_out_proj: bool,
    ) -> Self {
        assert!(d_model % heads == 0, "heads must divide d_model");
        let wq = Linear::init(params, rng, &format!("{name}.wq"), d_model, d_model, true);
        let wk = Linear::init(params, rng, &format!("{name}.wk"), d_model, d_model, true);
        let wv = Linear::init(params, rng, &format!("{name}.wv"), d_model, d_model, true);
        let wo = if zero_out_proj {
            Linear::init_zero(params, &format!("{name}.wo"), d_model, d_model, true)
        } else {
            Linear::init(params, rng, &format!("{name}.wo"), d_model, d_model, true)
        };
        let ln = LayerNorm::init(params, &format!("{name}.ln"), d_model);
        Mhsa { wq, wk, wv, wo, ln, heads }
    }

    pub fn forward<T: Scalar>(&self, f: &mut Fwd<T>, x: Var) -> MhsaOut {
        let shape = f.tape.shape(x).to_vec();
        assert_eq!(shape.len(), 3, "attention input must be [B, N, D]");
        let (bsz, n, d) = (shape[0], shape[1], shape[2]);
        let h = self.heads;
        let dh = d / h;

        let q = self.wq.forward(f, x);
        let k = self.wk.forward(f, x);
        let v = self.wv.forward(f, x);

        let split = |f: &mut Fwd<T>, t: Var| {
            let t = f.tape.reshape(t, &[bsz, n, h, dh]);
            let t = f.tape.permute(t, &[0, 2, 1, 3]);
            f.tape.reshape(t, &[bsz * h, n, dh])
        };
        let q = split(f, q);
        let k = split(f, k);
        let v = split(f, v);

        let scores = f.tape.bmm(q, k, false, true);
        let scaled = f.tape.mul_scalar(scores, T::one() / lit((dh as f64).sqrt()));
        let attn = f.tape.softmax_last(scaled);
        let ctx = f.tape.bmm(attn, v, false, false);
        let ctx = f.tape.reshape(ctx, &[bsz, h, n, dh]);
        let ctx = f.tape.permute(ctx, &[0, 2, 1, 3]);
        let ctx = f.tape.reshape(ctx, &[bsz, n, d]);

        let proj = self.wo.forward(f, ctx);
        let res = f.tape.add(x, proj);
        let out = self.ln.forward(f, res);
        MhsaOut { out, attn, ctx }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn params_are_named_and_unique() {
        let mut p = Params::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lin = Linear::init(&mut p, &mut rng, "head", 4, 2, true);
        assert_eq!(p.name(lin.w), "head.w");
        assert!(p.find("head.b").is_some());
        assert_eq!(p.count(), 2);
        assert_eq!(p.total_values(), 4 * 2 + 2);
    }

    #[test]
    fn init_is_deterministic_across_scalar_types() {
        let mut p32 = Params::<f32>::new();
        let mut p64 = Params::<f64>::new();
        let mut rng_a = ChaCha8Rng::seed_from_u64(42);
        let mut rng_b = ChaCha8Rng::seed_from_u64(42);
        Linear::init(&mut p32, &mut rng_a, "l", 8, 8, true);
        Linear::init(&mut p64, &mut rng_b, "l", 8, 8, true);
        for ((_, a), (_, b)) in p32.iter().zip(p64.iter()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, *y as f32, "same draws up to f32 rounding");
            }
        }
    }

    #[test]
    fn mhsa_attention_rows_sum_to_one() {
        let mut p = Params::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mhsa = Mhsa::init(&mut p, &mut rng, "attn", 8, 2, false);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &p);
        let x = tape.constant(uniform_fanin::<f64>(&mut rng, &[2, 5, 8], 8));
        let mut f = Fwd::new(&mut tape, &binding);
        let out = mhsa.forward(&mut f, x);
        assert_eq!(tape.shape(out.out), &[2, 5, 8]);
        let attn = tape.value(out.attn);
        assert_eq!(attn.shape(), &[4, 5, 5]);
        for row in attn.data().chunks(5) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "attention row sums to {s}");
        }
    }

    #[test]
    fn mhsa_uniform_attention_averages_value_tokens() {
        // Wq = Wk = 0 makes attention uniform; Wv = identity makes the
        // context the mean of the tokens. Closed-form 3-token check.
        let d = 4;
        let mut p = Params::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mhsa = Mhsa::init(&mut p, &mut rng, "attn", d, 1, false);
        // zero q/k, identity v
        *p.get_mut(mhsa.wq.w) = Tensor::zeros(&[d, d]);
        *p.get_mut(mhsa.wq.b.unwrap()) = Tensor::zeros(&[d]);
        *p.get_mut(mhsa.wk.w) = Tensor::zeros(&[d, d]);
        *p.get_mut(mhsa.wk.b.unwrap()) = Tensor::zeros(&[d]);
        let mut eye = Tensor::zeros(&[d, d]);
        for i in 0..d {
            eye.data_mut()[i * d + i] = 1.0;
        }
        *p.get_mut(mhsa.wv.w) = eye;
        *p.get_mut(mhsa.wv.b.unwrap()) = Tensor::zeros(&[d]);

        let tokens = Tensor::from_vec(
            &[1, 3, d],
            vec![
                1.0, 2.0, 3.0, 4.0, //
                5.0, 6.0, 7.0, 8.0, //
                9.0, 10.0, 11.0, 12.0,
            ],
        );
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &p);
        let x = tape.constant(tokens);
        let mut f = Fwd::new(&mut tape, &binding);
        let out = mhsa.forward(&mut f, x);
        let ctx = tape.value(out.ctx);
        let mean = [5.0, 6.0, 7.0, 8.0];
        for tok in 0..3 {
            for i in 0..d {
                assert!(
                    (ctx.data()[tok * d + i] - mean[i]).abs() < 1e-12,
                    "token {tok} dim {i}: {} vs {}",
                    ctx.data()[tok * d + i],
                    mean[i]
                );
            }
        }
    }

    #[test]
    fn mhsa_gradients_flow_to_all_parameters() {
        let mut p = Params::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mhsa = Mhsa::init(&mut p, &mut rng, "attn", 6, 3, false);
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &p);
        let x = tape.constant(uniform_fanin::<f64>(&mut rng, &[1, 4, 6], 6));
        let mut f = Fwd::new(&mut tape, &binding);
        let out = mhsa.forward(&mut f, x);
        let sq = tape.square(out.out);
        let loss = tape.sum_all(sq);
        let grads = tape.backward(loss);
        for id in p.ids() {
            let g = grads.get(binding.var(id));
            assert!(g.is_some(), "no grad for {}", p.name(id));
            assert!(g.unwrap().all_finite());
        }
    }
}
