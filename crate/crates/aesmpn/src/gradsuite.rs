//! Named gradient-check suites over ops, layers, and the full model.
//!
//! Each entry compares reverse-mode gradients against central finite
//! differences on seeded random inputs and reports its worst error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ModelFlow, ModelSample};
use crate::error::Result;
use crate::model::{model_grad_check, ModelConfig, ModelParams};
use crate::nn::{AutoEncoderNodes, LSTMCell, LinearNodes, LstmNodes, SkipNodes};
use crate::numerics::{grad_check, Tensor};
use crate::seed::stream_rng;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_err: f64,
    pub tol: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_err < self.tol
    }
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("extents cover buffer")
}

/// Like [`rand_tensor`] but keeps values away from 0, where kinked ops
/// (selu, abs) are nondifferentiable.
fn rand_tensor_offzero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    rand_tensor(shape, rng).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v })
}

/// Run every check; `tol` applies to ops and layers, `tol_e2e` to the
/// full-model check.
pub fn run_suite(eps: f64, tol: f64, tol_e2e: f64, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = stream_rng(seed, "gradcheck");
    let mut results = Vec::new();
    let mut push = |name: &str, err: f64, t: f64| {
        results.push(CheckResult { name: name.to_string(), max_err: err, tol: t });
    };

    // ---- ops ----
    let a = rand_tensor(&[3, 3], &mut rng);
    let b = rand_tensor(&[3, 3], &mut rng);
    let err = grad_check(
        |t, ids| {
            let c = t.matmul(ids[0], ids[1])?;
            t.reduce_sum(c, None)
        },
        &[a, b],
        eps,
    )?;
    push("matmul", err, tol);

    let a = rand_tensor(&[4], &mut rng);
    let b = rand_tensor(&[4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let s = t.add(ids[0], ids[1])?;
            let sq = t.mul_elem(s, s)?;
            t.reduce_sum(sq, None)
        },
        &[a, b],
        eps,
    )?;
    push("add", err, tol);

    let m = rand_tensor(&[3, 2], &mut rng);
    let bias = rand_tensor(&[2], &mut rng);
    let err = grad_check(
        |t, ids| {
            let s = t.add(ids[0], ids[1])?;
            let sq = t.mul_elem(s, s)?;
            t.reduce_sum(sq, None)
        },
        &[m, bias],
        eps,
    )?;
    push("add_bias_broadcast", err, tol);

    let a = rand_tensor(&[4], &mut rng);
    let b = rand_tensor(&[4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let s = t.sub(ids[0], ids[1])?;
            let sq = t.mul_elem(s, s)?;
            t.reduce_sum(sq, None)
        },
        &[a, b],
        eps,
    )?;
    push("sub", err, tol);

    let a = rand_tensor(&[4], &mut rng);
    let b = rand_tensor(&[4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let p = t.mul_elem(ids[0], ids[1])?;
            t.reduce_sum(p, None)
        },
        &[a, b],
        eps,
    )?;
    push("mul_elem", err, tol);

    for (name, f) in [
        ("sigmoid", 0usize),
        ("tanh", 1),
        ("selu", 2),
        ("abs", 3),
    ] {
        let x = if name == "selu" || name == "abs" {
            rand_tensor_offzero(&[5], &mut rng)
        } else {
            rand_tensor(&[5], &mut rng)
        };
        let err = grad_check(
            |t, ids| {
                let y = match f {
                    0 => t.sigmoid(ids[0])?,
                    1 => t.tanh(ids[0])?,
                    2 => t.selu(ids[0])?,
                    _ => t.abs(ids[0])?,
                };
                t.reduce_sum(y, None)
            },
            &[x],
            eps,
        )?;
        push(name, err, tol);
    }

    let a = rand_tensor(&[2], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    let err = grad_check(
        |t, ids| {
            let c = t.concat(&[ids[0], ids[1]], 0)?;
            let sq = t.mul_elem(c, c)?;
            t.reduce_sum(sq, None)
        },
        &[a, b],
        eps,
    )?;
    push("concat", err, tol);

    let x = rand_tensor(&[3, 4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let s = t.reduce_sum(ids[0], Some(1))?;
            let sq = t.mul_elem(s, s)?;
            t.reduce_sum(sq, None)
        },
        &[x],
        eps,
    )?;
    push("reduce_sum", err, tol);

    let x = rand_tensor(&[3, 4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let m = t.reduce_mean(ids[0], Some(0))?;
            let sq = t.mul_elem(m, m)?;
            t.reduce_sum(sq, None)
        },
        &[x],
        eps,
    )?;
    push("reduce_mean", err, tol);

    let x = rand_tensor(&[4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let s = t.scale(ids[0], 2.5)?;
            let sq = t.mul_elem(s, s)?;
            t.reduce_mean(sq, None)
        },
        &[x],
        eps,
    )?;
    push("scale", err, tol);

    // ---- layers ----
    let w = rand_tensor(&[3, 4], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    let x_in = rand_tensor(&[4], &mut rng);
    let err = grad_check(
        |t, ids| {
            let x = t.leaf(x_in.clone());
            let layer = LinearNodes { w: ids[0], b: ids[1] };
            let y = layer.apply(t, x)?;
            let sq = t.mul_elem(y, y)?;
            t.reduce_sum(sq, None)
        },
        &[w, b],
        eps,
    )?;
    push("linear_layer", err, tol);

    let enc_w = rand_tensor(&[2, 4], &mut rng);
    let enc_b = rand_tensor(&[2], &mut rng);
    let dec_w = rand_tensor(&[4, 2], &mut rng);
    let dec_b = rand_tensor(&[4], &mut rng);
    let batch: Vec<Tensor> = (0..3).map(|_| rand_tensor(&[4], &mut rng)).collect();
    let err = grad_check(
        |t, ids| {
            let nodes = AutoEncoderNodes {
                enc: LinearNodes { w: ids[0], b: ids[1] },
                dec: LinearNodes { w: ids[2], b: ids[3] },
            };
            let xs: Vec<_> = batch.iter().map(|x| t.leaf(x.clone())).collect();
            nodes.reconstruction_loss(t, &xs)
        },
        &[enc_w, enc_b, dec_w, dec_b],
        eps,
    )?;
    push("autoencoder_loss", err, tol);

    let cell = LSTMCell::new(3, 2, &mut rng);
    let cell_params = [
        cell.w_f.clone(), cell.b_f.clone(), cell.w_i.clone(), cell.b_i.clone(),
        cell.w_c.clone(), cell.b_c.clone(), cell.w_o.clone(), cell.b_o.clone(),
    ];
    let h0 = rand_tensor(&[3], &mut rng);
    let c0 = rand_tensor(&[3], &mut rng);
    let x0 = rand_tensor(&[2], &mut rng);
    let err = grad_check(
        |t, ids| {
            let nodes = LstmNodes {
                w_f: ids[0], b_f: ids[1], w_i: ids[2], b_i: ids[3],
                w_c: ids[4], b_c: ids[5], w_o: ids[6], b_o: ids[7],
            };
            let h = t.leaf(h0.clone());
            let c = t.leaf(c0.clone());
            let x = t.leaf(x0.clone());
            let (h1, c1) = nodes.step(t, h, c, x)?;
            let hc = t.concat(&[h1, c1], 0)?;
            let sq = t.mul_elem(hc, hc)?;
            t.reduce_sum(sq, None)
        },
        &cell_params,
        eps,
    )?;
    push("lstm_step", err, tol);

    let w0 = rand_tensor(&[3, 3], &mut rng);
    let b0 = rand_tensor(&[3], &mut rng);
    let w1 = rand_tensor(&[3, 3], &mut rng);
    let b1 = rand_tensor(&[3], &mut rng);
    let hw = rand_tensor(&[1, 3], &mut rng);
    let hb = rand_tensor(&[1], &mut rng);
    let skip_x = rand_tensor(&[3], &mut rng);
    let err = grad_check(
        |t, ids| {
            let nodes = SkipNodes {
                hidden: vec![
                    LinearNodes { w: ids[0], b: ids[1] },
                    LinearNodes { w: ids[2], b: ids[3] },
                ],
                head: LinearNodes { w: ids[4], b: ids[5] },
            };
            let x = t.leaf(skip_x.clone());
            nodes.apply(t, x)
        },
        &[w0, b0, w1, b1, hw, hb],
        eps,
    )?;
    push("skip_mlp", err, tol);

    // ---- full model ----
    let cfg = ModelConfig { k: 2, hidden: 6, latent: 6, readout_depth: 2 };
    let params = ModelParams::init(&cfg, &mut rng)?;
    let sample = ModelSample {
        l2: vec![vec![0.2], vec![0.9]],
        l3: vec![vec![0.4], vec![0.6]],
        flows: vec![
            ModelFlow { features: vec![0.3, 0.5, 0.2, 0.0], path: vec![(0, 0), (1, 1)], target: 1.0 },
            ModelFlow { features: vec![0.8, 0.1, 0.6, 1.0], path: vec![(1, 1)], target: 2.0 },
        ],
    };
    // one order of magnitude coarser eps: the full chain is long and the
    // loss surface is curvier
    let err = model_grad_check(&params, &cfg, &sample, eps * 10.0)?;
    push("full_model", err, tol_e2e);

    Ok(results)
}
