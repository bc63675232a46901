//! Neural building blocks: linear layer, linear autoencoder, LSTM cell,
//! and the skip-connected readout block.
//!
//! Parameters live outside the computation graph as plain tensors. Each
//! forward pass binds them onto a fresh [`Tape`] as trainable leaves; the
//! `*Nodes` structs hold the resulting node ids and implement the actual
//! graph construction. [`ParamBindings`] remembers which path got which
//! node so gradients can be routed back to named parameters.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::{GradMap, NodeId, Tape, Tensor};

// ---- parameter plumbing ---------------------------------------------------

/// Visit every trainable tensor with its dotted path.
pub trait ParamVisit {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Records `(parameter path, tape node)` pairs made during binding.
#[derive(Default)]
pub struct ParamBindings {
    entries: Vec<(String, NodeId)>,
}

impl ParamBindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, tape: &mut Tape, path: String, value: &Tensor) -> NodeId {
        let id = tape.param(value.clone());
        self.entries.push((path, id));
        id
    }

    /// Route a backward pass's gradients to parameter paths.
    pub fn grads(&self, map: &GradMap) -> Vec<(String, Tensor)> {
        self.entries
            .iter()
            .map(|(path, id)| {
                let g = map
                    .get(*id)
                    .expect("every bound param is registered on the tape")
                    .clone();
                (path.clone(), g)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

// ---- initialization -------------------------------------------------------

/// Zero-mean normal with variance 1/fan_in; pairs with SELU's
/// self-normalizing regime.
pub fn init_weight(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (1.0 / in_dim as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    let data: Vec<f64> = (0..out_dim * in_dim).map(|_| normal.sample(rng)).collect();
    Tensor::matrix(out_dim, in_dim, data).expect("extents cover buffer")
}

pub fn init_bias(dim: usize) -> Tensor {
    Tensor::zeros(&[dim])
}

// ---- linear layer -----------------------------------------------------------

/// Affine map `y = W x + b`, `W: [out, in]`, `b: [out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub w: Tensor,
    pub b: Tensor,
}

impl LinearLayer {
    pub fn new(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        LinearLayer {
            w: init_weight(out_dim, in_dim, rng),
            b: init_bias(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape, path: &str, binds: &mut ParamBindings) -> LinearNodes {
        LinearNodes {
            w: binds.bind(tape, join(path, "w"), &self.w),
            b: binds.bind(tape, join(path, "b"), &self.b),
        }
    }
}

impl ParamVisit for LinearLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "w"), &self.w);
        f(&join(prefix, "b"), &self.b);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}

#[derive(Clone, Copy)]
pub struct LinearNodes {
    pub w: NodeId,
    pub b: NodeId,
}

impl LinearNodes {
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let wx = tape.matmul(self.w, x)?;
        tape.add(wx, self.b)
    }
}

// ---- autoencoder ------------------------------------------------------------

/// Linear encoder/decoder pair; the decoder restores the encoder's input
/// extent. Encoding is affine with no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoEncoder {
    pub encoder: LinearLayer,
    pub decoder: LinearLayer,
}

impl AutoEncoder {
    pub fn new(input_dim: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        AutoEncoder {
            encoder: LinearLayer::new(latent_dim, input_dim, rng),
            decoder: LinearLayer::new(input_dim, latent_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn bind(&self, tape: &mut Tape, path: &str, binds: &mut ParamBindings) -> AutoEncoderNodes {
        AutoEncoderNodes {
            enc: self.encoder.bind(tape, &join(path, "enc"), binds),
            dec: self.decoder.bind(tape, &join(path, "dec"), binds),
        }
    }
}

impl ParamVisit for AutoEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.encoder.visit(&join(prefix, "enc"), f);
        self.decoder.visit(&join(prefix, "dec"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.encoder.visit_mut(&join(prefix, "enc"), f);
        self.decoder.visit_mut(&join(prefix, "dec"), f);
    }
}

#[derive(Clone, Copy)]
pub struct AutoEncoderNodes {
    pub enc: LinearNodes,
    pub dec: LinearNodes,
}

impl AutoEncoderNodes {
    pub fn encode(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        self.enc.apply(tape, x)
    }

    pub fn decode(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        self.dec.apply(tape, z)
    }

    /// Sum over the batch of squared reconstruction distance.
    pub fn reconstruction_loss(&self, tape: &mut Tape, batch: &[NodeId]) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::Contract("reconstruction loss over empty batch".into()));
        }
        let mut total: Option<NodeId> = None;
        for &x in batch {
            let z = self.encode(tape, x)?;
            let y = self.decode(tape, z)?;
            let d = tape.sub(x, y)?;
            let sq = tape.mul_elem(d, d)?;
            let s = tape.reduce_sum(sq, None)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, s)?,
                None => s,
            });
        }
        Ok(total.expect("batch is non-empty"))
    }
}

// ---- LSTM cell ----------------------------------------------------------------

/// Standard LSTM cell. Gate inputs are the concatenation `[h_prev, x]`,
/// in that order; each gate weight is `[hidden, hidden + in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LSTMCell {
    pub w_f: Tensor,
    pub b_f: Tensor,
    pub w_i: Tensor,
    pub b_i: Tensor,
    pub w_c: Tensor,
    pub b_c: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
}

impl LSTMCell {
    pub fn new(hidden: usize, input: usize, rng: &mut ChaCha8Rng) -> Self {
        let cat = hidden + input;
        LSTMCell {
            w_f: init_weight(hidden, cat, rng),
            b_f: init_bias(hidden),
            w_i: init_weight(hidden, cat, rng),
            b_i: init_bias(hidden),
            w_c: init_weight(hidden, cat, rng),
            b_c: init_bias(hidden),
            w_o: init_weight(hidden, cat, rng),
            b_o: init_bias(hidden),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_f.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.shape()[1] - self.w_f.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape, path: &str, binds: &mut ParamBindings) -> LstmNodes {
        LstmNodes {
            w_f: binds.bind(tape, join(path, "w_f"), &self.w_f),
            b_f: binds.bind(tape, join(path, "b_f"), &self.b_f),
            w_i: binds.bind(tape, join(path, "w_i"), &self.w_i),
            b_i: binds.bind(tape, join(path, "b_i"), &self.b_i),
            w_c: binds.bind(tape, join(path, "w_c"), &self.w_c),
            b_c: binds.bind(tape, join(path, "b_c"), &self.b_c),
            w_o: binds.bind(tape, join(path, "w_o"), &self.w_o),
            b_o: binds.bind(tape, join(path, "b_o"), &self.b_o),
        }
    }
}

impl ParamVisit for LSTMCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "w_f"), &self.w_f);
        f(&join(prefix, "b_f"), &self.b_f);
        f(&join(prefix, "w_i"), &self.w_i);
        f(&join(prefix, "b_i"), &self.b_i);
        f(&join(prefix, "w_c"), &self.w_c);
        f(&join(prefix, "b_c"), &self.b_c);
        f(&join(prefix, "w_o"), &self.w_o);
        f(&join(prefix, "b_o"), &self.b_o);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "w_f"), &mut self.w_f);
        f(&join(prefix, "b_f"), &mut self.b_f);
        f(&join(prefix, "w_i"), &mut self.w_i);
        f(&join(prefix, "b_i"), &mut self.b_i);
        f(&join(prefix, "w_c"), &mut self.w_c);
        f(&join(prefix, "b_c"), &mut self.b_c);
        f(&join(prefix, "w_o"), &mut self.w_o);
        f(&join(prefix, "b_o"), &mut self.b_o);
    }
}

#[derive(Clone, Copy)]
pub struct LstmNodes {
    pub w_f: NodeId,
    pub b_f: NodeId,
    pub w_i: NodeId,
    pub b_i: NodeId,
    pub w_c: NodeId,
    pub b_c: NodeId,
    pub w_o: NodeId,
    pub b_o: NodeId,
}

impl LstmNodes {
    /// One step: returns `(h, c)`.
    pub fn step(
        &self,
        tape: &mut Tape,
        h_prev: NodeId,
        c_prev: NodeId,
        x: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let hx = tape.concat(&[h_prev, x], 0)?;
        let gate = |tape: &mut Tape, w: NodeId, b: NodeId| -> Result<NodeId> {
            let wx = tape.matmul(w, hx)?;
            tape.add(wx, b)
        };
        let f_pre = gate(tape, self.w_f, self.b_f)?;
        let f = tape.sigmoid(f_pre)?;
        let i_pre = gate(tape, self.w_i, self.b_i)?;
        let i = tape.sigmoid(i_pre)?;
        let c_pre = gate(tape, self.w_c, self.b_c)?;
        let c_cand = tape.tanh(c_pre)?;
        let o_pre = gate(tape, self.w_o, self.b_o)?;
        let o = tape.sigmoid(o_pre)?;

        let keep = tape.mul_elem(f, c_prev)?;
        let write = tape.mul_elem(i, c_cand)?;
        let c = tape.add(keep, write)?;
        let c_tanh = tape.tanh(c)?;
        let h = tape.mul_elem(o, c_tanh)?;
        Ok((h, c))
    }
}

// ---- skip-connected readout ---------------------------------------------------

/// MLP whose hidden layers are square so each can carry a residual:
/// `u <- SELU(W u + b) + u`. The scalar head has no residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipMLP {
    pub hidden_layers: Vec<LinearLayer>,
    pub head: LinearLayer,
}

impl SkipMLP {
    pub fn new(width: usize, depth: usize, rng: &mut ChaCha8Rng) -> Self {
        SkipMLP {
            hidden_layers: (0..depth).map(|_| LinearLayer::new(width, width, rng)).collect(),
            head: LinearLayer::new(1, width, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.head.in_dim()
    }

    pub fn depth(&self) -> usize {
        self.hidden_layers.len()
    }

    pub fn bind(&self, tape: &mut Tape, path: &str, binds: &mut ParamBindings) -> SkipNodes {
        SkipNodes {
            hidden: self
                .hidden_layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.bind(tape, &join(path, &format!("hidden{i}")), binds))
                .collect(),
            head: self.head.bind(tape, &join(path, "head"), binds),
        }
    }
}

impl ParamVisit for SkipMLP {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, l) in self.hidden_layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("hidden{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, l) in self.hidden_layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("hidden{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

pub struct SkipNodes {
    pub hidden: Vec<LinearNodes>,
    pub head: LinearNodes,
}

impl SkipNodes {
    /// Scalar readout of `x`.
    pub fn apply(&self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        Ok(self.apply_traced(tape, x)?.0)
    }

    /// Like [`SkipNodes::apply`] but also returns the representation
    /// after each residual block.
    pub fn apply_traced(&self, tape: &mut Tape, x: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        let mut u = x;
        let mut trace = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let a = layer.apply(tape, u)?;
            let s = tape.selu(a)?;
            u = tape.add(s, u)?;
            trace.push(u);
        }
        let out = self.head.apply(tape, u)?;
        Ok((out, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::seed::stream_rng;

    fn zero_linear(out_dim: usize, in_dim: usize) -> LinearLayer {
        LinearLayer {
            w: Tensor::zeros(&[out_dim, in_dim]),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    fn identity_ae(n: usize) -> AutoEncoder {
        AutoEncoder {
            encoder: LinearLayer { w: Tensor::identity(n), b: Tensor::zeros(&[n]) },
            decoder: LinearLayer { w: Tensor::identity(n), b: Tensor::zeros(&[n]) },
        }
    }

    #[test]
    fn ae_encode_identity_and_hand_arithmetic() {
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let ae = identity_ae(2);
        let nodes = ae.bind(&mut tape, "ae", &mut binds);
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let z = nodes.encode(&mut tape, x).unwrap();
        assert_eq!(tape.value(z).data(), &[1.0, 2.0]);

        let ae2 = AutoEncoder {
            encoder: LinearLayer {
                w: Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(),
                b: Tensor::vector(vec![0.5]),
            },
            decoder: zero_linear(2, 1),
        };
        let nodes2 = ae2.bind(&mut tape, "ae2", &mut binds);
        let z2 = nodes2.encode(&mut tape, x).unwrap();
        assert_eq!(tape.value(z2).data(), &[3.5]);
    }

    #[test]
    fn ae_decode_restores_extent() {
        let mut rng = stream_rng(3, "init");
        let ae = AutoEncoder::new(7, 3, &mut rng);
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let nodes = ae.bind(&mut tape, "ae", &mut binds);
        let x = tape.leaf(Tensor::vector(vec![0.5; 7]));
        let z = nodes.encode(&mut tape, x).unwrap();
        assert_eq!(tape.value(z).shape(), &[3]);
        let y = nodes.decode(&mut tape, z).unwrap();
        assert_eq!(tape.value(y).shape(), &[7]);

        // encode-then-decode through identity weights is the identity
        let ae_id = identity_ae(2);
        let nid = ae_id.bind(&mut tape, "id", &mut binds);
        let x2 = tape.leaf(Tensor::vector(vec![1.25, -0.5]));
        let z2 = nid.encode(&mut tape, x2).unwrap();
        let y2 = nid.decode(&mut tape, z2).unwrap();
        assert_eq!(tape.value(y2).data(), &[1.25, -0.5]);
    }

    #[test]
    fn ae_grad_matches_finite_differences() {
        let mut rng = stream_rng(11, "init");
        let ae = AutoEncoder::new(3, 2, &mut rng);
        let x = Tensor::vector(vec![0.4, -0.9, 1.3]);
        let params = [ae.encoder.w.clone(), ae.encoder.b.clone(), ae.decoder.w.clone(), ae.decoder.b.clone()];
        let err = grad_check(
            |tape, ids| {
                let x_node = tape.leaf(x.clone());
                let enc = LinearNodes { w: ids[0], b: ids[1] };
                let dec = LinearNodes { w: ids[2], b: ids[3] };
                let nodes = AutoEncoderNodes { enc, dec };
                nodes.reconstruction_loss(tape, &[x_node])
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "autoencoder gradient error {err}");
    }

    #[test]
    fn ae_loss_examples() {
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let perfect = identity_ae(2);
        let nodes = perfect.bind(&mut tape, "ae", &mut binds);
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let loss = nodes.reconstruction_loss(&mut tape, &[x]).unwrap();
        assert_eq!(tape.value(loss).item().unwrap(), 0.0);

        // x = [1, 0] reconstructed as [0, 0]: squared distance 1
        let zero_ae = AutoEncoder { encoder: zero_linear(2, 2), decoder: zero_linear(2, 2) };
        let zn = zero_ae.bind(&mut tape, "zero", &mut binds);
        let x2 = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        let loss2 = zn.reconstruction_loss(&mut tape, &[x2]).unwrap();
        assert_eq!(tape.value(loss2).item().unwrap(), 1.0);

        assert!(zn.reconstruction_loss(&mut tape, &[]).is_err());
    }

    fn zero_lstm(hidden: usize, input: usize) -> LSTMCell {
        let cat = hidden + input;
        LSTMCell {
            w_f: Tensor::zeros(&[hidden, cat]),
            b_f: Tensor::zeros(&[hidden]),
            w_i: Tensor::zeros(&[hidden, cat]),
            b_i: Tensor::zeros(&[hidden]),
            w_c: Tensor::zeros(&[hidden, cat]),
            b_c: Tensor::zeros(&[hidden]),
            w_o: Tensor::zeros(&[hidden, cat]),
            b_o: Tensor::zeros(&[hidden]),
        }
    }

    #[test]
    fn lstm_zero_params_closed_form() {
        let cell = zero_lstm(1, 1);
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let nodes = cell.bind(&mut tape, "lstm", &mut binds);
        let h0 = tape.leaf(Tensor::vector(vec![0.0]));
        let c0 = tape.leaf(Tensor::vector(vec![1.0]));
        let x = tape.leaf(Tensor::vector(vec![42.0]));
        let (h, c) = nodes.step(&mut tape, h0, c0, x).unwrap();
        assert_eq!(tape.value(c).data(), &[0.5]);
        let expect_h = 0.5 * 0.5f64.tanh();
        assert!((tape.value(h).data()[0] - expect_h).abs() < 1e-15);

        // zero cell state stays zero
        let c0z = tape.leaf(Tensor::vector(vec![0.0]));
        let (hz, cz) = nodes.step(&mut tape, h0, c0z, x).unwrap();
        assert_eq!(tape.value(hz).data(), &[0.0]);
        assert_eq!(tape.value(cz).data(), &[0.0]);
    }

    #[test]
    fn lstm_zero_params_closed_form_elementwise() {
        // c = 0.5 * c0 and h = 0.5 * tanh(0.5 * c0), for any input x
        let cell = zero_lstm(3, 2);
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let nodes = cell.bind(&mut tape, "lstm", &mut binds);
        let c0_vals = [0.3, -1.7, 2.5];
        let h0 = tape.leaf(Tensor::zeros(&[3]));
        let c0 = tape.leaf(Tensor::vector(c0_vals.to_vec()));
        let x = tape.leaf(Tensor::vector(vec![5.0, -9.0]));
        let (h, c) = nodes.step(&mut tape, h0, c0, x).unwrap();
        for (j, &c0v) in c0_vals.iter().enumerate() {
            assert_eq!(tape.value(c).data()[j], 0.5 * c0v);
            assert_eq!(tape.value(h).data()[j], 0.5 * (0.5 * c0v).tanh());
        }
    }

    #[test]
    fn lstm_grad_matches_finite_differences() {
        let mut rng = stream_rng(5, "init");
        let cell = LSTMCell::new(2, 2, &mut rng);
        let params = [
            cell.w_f.clone(), cell.b_f.clone(), cell.w_i.clone(), cell.b_i.clone(),
            cell.w_c.clone(), cell.b_c.clone(), cell.w_o.clone(), cell.b_o.clone(),
        ];
        let err = grad_check(
            |tape, ids| {
                let nodes = LstmNodes {
                    w_f: ids[0], b_f: ids[1], w_i: ids[2], b_i: ids[3],
                    w_c: ids[4], b_c: ids[5], w_o: ids[6], b_o: ids[7],
                };
                let h0 = tape.leaf(Tensor::vector(vec![0.3, -0.2]));
                let c0 = tape.leaf(Tensor::vector(vec![0.1, 0.5]));
                let x = tape.leaf(Tensor::vector(vec![-0.7, 0.9]));
                let (h, c) = nodes.step(tape, h0, c0, x)?;
                let hc = tape.concat(&[h, c], 0)?;
                t_sum(tape, hc)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "lstm gradient error {err}");
    }

    fn t_sum(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        tape.reduce_sum(x, None)
    }

    #[test]
    fn skip_zero_hidden_params_is_identity_per_block() {
        let width = 4;
        let block = SkipMLP {
            hidden_layers: vec![zero_linear(width, width), zero_linear(width, width)],
            head: LinearLayer {
                w: Tensor::matrix(1, width, vec![1.0; width]).unwrap(),
                b: Tensor::zeros(&[1]),
            },
        };
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let nodes = block.bind(&mut tape, "skip", &mut binds);
        let x_vals = vec![0.5, -1.5, 2.0, 0.25];
        let x = tape.leaf(Tensor::vector(x_vals.clone()));
        let (out, trace) = nodes.apply_traced(&mut tape, x).unwrap();
        for stage in &trace {
            assert_eq!(tape.value(*stage).data(), x_vals.as_slice());
        }
        // head is a plain sum here
        let expect: f64 = x_vals.iter().sum();
        assert_eq!(tape.value(out).data(), &[expect]);
    }

    #[test]
    fn skip_zero_depth_is_head_only() {
        let mut rng = stream_rng(9, "init");
        let block = SkipMLP::new(3, 0, &mut rng);
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let nodes = block.bind(&mut tape, "skip", &mut binds);
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let out = nodes.apply(&mut tape, x).unwrap();

        let head = block.head.bind(&mut tape, "head", &mut binds);
        let direct = head.apply(&mut tape, x).unwrap();
        assert_eq!(tape.value(out).data(), tape.value(direct).data());
    }

    #[test]
    fn skip_grad_matches_finite_differences() {
        let mut rng = stream_rng(13, "init");
        let block = SkipMLP::new(3, 2, &mut rng);
        let mut params = Vec::new();
        block.visit("", &mut |_, t| params.push(t.clone()));
        let err = grad_check(
            |tape, ids| {
                let hidden = vec![
                    LinearNodes { w: ids[0], b: ids[1] },
                    LinearNodes { w: ids[2], b: ids[3] },
                ];
                let head = LinearNodes { w: ids[4], b: ids[5] };
                let nodes = SkipNodes { hidden, head };
                let x = tape.leaf(Tensor::vector(vec![0.4, -1.1, 0.8]));
                nodes.apply(tape, x)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "skip block gradient error {err}");
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = init_weight(4, 6, &mut stream_rng(21, "init"));
        let b = init_weight(4, 6, &mut stream_rng(21, "init"));
        assert_eq!(a, b);
        assert_eq!(init_bias(5).data(), &[0.0; 5]);
    }

    #[test]
    fn init_variance_tracks_fan_in() {
        let fan_in = 50;
        let w = init_weight(200, fan_in, &mut stream_rng(2, "init"));
        let n = w.numel() as f64;
        let mean: f64 = w.data().iter().sum::<f64>() / n;
        let var: f64 = w.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let target = 1.0 / fan_in as f64;
        assert!(
            (var - target).abs() < 0.2 * target,
            "sample variance {var} vs target {target}"
        );
    }

    #[test]
    fn visit_paths_are_stable() {
        let mut rng = stream_rng(1, "init");
        let cell = LSTMCell::new(2, 1, &mut rng);
        let mut paths = Vec::new();
        cell.visit("msg_f", &mut |p, _| paths.push(p.to_string()));
        assert_eq!(
            paths,
            vec![
                "msg_f.w_f", "msg_f.b_f", "msg_f.w_i", "msg_f.b_i",
                "msg_f.w_c", "msg_f.b_c", "msg_f.w_o", "msg_f.b_o",
            ]
        );
    }
}
