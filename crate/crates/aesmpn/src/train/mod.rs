//! Training loop (Adam on MAPE), evaluation, and CSV emission.
//!
//! Updates are per-sample: each training sample gets its own forward
//! graph, a MAPE loss over its flows, one backward pass, global-norm
//! gradient clipping, and one Adam step. Validation MAPE is recorded per
//! epoch and the best-validation parameters are kept as the checkpoint
//! candidate. Everything is seed-deterministic: parameter init, epoch
//! shuffles, and pretraining batches each draw from named RNG streams.

mod adam;
mod checkpoint;
mod metrics;

pub use adam::{clip_global_norm, AdamHyper, AdamState};
pub use checkpoint::{
    write_atomic,
    load_checkpoint, save_checkpoint, Checkpoint, SplitSpec, CHECKPOINT_VERSION,
};
pub use metrics::{mae, mape, mse, msle, MetricsReport};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{ModelSample, NormalizationSpec};
use crate::error::{Error, Result};
use crate::model::{bind_model, forward, forward_on_tape, ModelConfig, ModelParams};
use crate::nn::ParamBindings;
use crate::numerics::{NodeId, Tape, Tensor};
use crate::par;
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Reconstruction pretraining steps for the three autoencoders;
    /// 0 trains everything end-to-end from scratch.
    pub ae_pretrain_steps: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            ae_pretrain_steps: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("eps and clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mape: f64,
    pub val_mape: f64,
}

pub struct TrainOutcome {
    /// Parameters after the final epoch.
    pub params: ModelParams,
    /// Parameters at the best validation MAPE.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Train AE-SMPN end to end; see the module docs for the loop shape.
pub fn train(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &[ModelSample],
    val_set: &[ModelSample],
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Contract("validation split is empty".into()));
    }

    let mut init_rng = stream_rng(cfg.seed, "init");
    let mut params = ModelParams::init(model_cfg, &mut init_rng)?;

    if cfg.ae_pretrain_steps > 0 {
        pretrain_autoencoders(&mut params, cfg, train_set)?;
    }

    let hyper = cfg.hyper();
    let mut adam = AdamState::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ModelParams, usize)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = stream_rng(cfg.seed, "shuffle");
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for &idx in &order {
            let loss = train_step(&mut params, &mut adam, &hyper, cfg.clip_norm, model_cfg, &train_set[idx])
                .map_err(|e| numeric_context(e, epoch, idx))?;
            if !loss.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    sample: idx,
                    message: format!("training loss became {loss}"),
                });
            }
            loss_sum += loss;
        }
        let train_mape = loss_sum / train_set.len() as f64;
        let val_mape = split_mape(&params, model_cfg, val_set)?;

        if best.as_ref().map_or(true, |(b, _, _)| val_mape < *b) {
            best = Some((val_mape, params.clone(), epoch));
        }
        history.push(EpochRecord { epoch, train_mape, val_mape });
    }

    let (_, best_params, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { params, best_params, best_epoch, history })
}

fn numeric_context(e: Error, epoch: usize, sample: usize) -> Error {
    match e {
        Error::NonFinite { op } => Error::Numeric {
            epoch,
            sample,
            message: format!("non-finite value produced by {op}"),
        },
        other => other,
    }
}

/// One gradient step on one sample; returns the sample's MAPE loss.
fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    hyper: &AdamHyper,
    clip_norm: f64,
    model_cfg: &ModelConfig,
    sample: &ModelSample,
) -> Result<f64> {
    let mut tape = Tape::new();
    let mut binds = ParamBindings::new();
    let nodes = bind_model(&mut tape, params, &mut binds);
    let preds = forward_on_tape(&mut tape, &nodes, model_cfg, sample)?;
    let loss = mape_loss(&mut tape, &preds, sample)?;
    let value = tape.value(loss).item()?;

    let grad_map = tape.backward(loss)?;
    let mut grads = binds.grads(&grad_map);
    clip_global_norm(&mut grads, clip_norm);
    adam.step(params, &grads, hyper)?;
    Ok(value)
}

/// MAPE over the sample's flows as a graph node (normalized space).
fn mape_loss(tape: &mut Tape, preds: &[NodeId], sample: &ModelSample) -> Result<NodeId> {
    let mut acc: Option<NodeId> = None;
    for (pred, flow) in preds.iter().zip(&sample.flows) {
        if flow.target == 0.0 {
            return Err(Error::Contract("MAPE undefined for zero target".into()));
        }
        let target = tape.leaf(Tensor::vector(vec![flow.target]));
        let diff = tape.sub(*pred, target)?;
        let abs = tape.abs(diff)?;
        let rel = tape.scale(abs, 1.0 / flow.target.abs())?;
        acc = Some(match acc {
            Some(a) => tape.add(a, rel)?,
            None => rel,
        });
    }
    let total = acc.ok_or_else(|| Error::Contract("sample has no flows".into()))?;
    let scaled = tape.scale(total, 100.0 / sample.flows.len() as f64)?;
    tape.reduce_sum(scaled, None)
}

/// Reconstruction pretraining of the three autoencoders on the feature
/// vectors present in the training split.
fn pretrain_autoencoders(
    params: &mut ModelParams,
    cfg: &TrainConfig,
    train_set: &[ModelSample],
) -> Result<()> {
    let mut flow_feats = Vec::new();
    let mut l2_feats = Vec::new();
    let mut l3_feats = Vec::new();
    for s in train_set {
        flow_feats.extend(s.flows.iter().map(|f| f.features.clone()));
        l2_feats.extend(s.l2.iter().cloned());
        l3_feats.extend(s.l3.iter().cloned());
    }

    let mut adam = AdamState::new();
    let hyper = cfg.hyper();
    let mut rng = stream_rng(cfg.seed, "ae-pretrain");
    const BATCH: usize = 32;

    for _ in 0..cfg.ae_pretrain_steps {
        let mut tape = Tape::new();
        let mut binds = ParamBindings::new();
        let ae_f = params.ae_f.bind(&mut tape, "ae_f", &mut binds);
        let ae_l2 = params.ae_l2.bind(&mut tape, "ae_l2", &mut binds);
        let ae_l3 = params.ae_l3.bind(&mut tape, "ae_l3", &mut binds);

        let mut losses = Vec::with_capacity(3);
        for (feats, nodes) in [(&flow_feats, &ae_f), (&l2_feats, &ae_l2), (&l3_feats, &ae_l3)] {
            let batch: Vec<NodeId> = (0..BATCH.min(feats.len()))
                .map(|_| {
                    let pick = rng.gen_range(0..feats.len());
                    tape.leaf(Tensor::vector(feats[pick].clone()))
                })
                .collect();
            losses.push(nodes.reconstruction_loss(&mut tape, &batch)?);
        }
        let mut total = losses[0];
        for &l in &losses[1..] {
            total = tape.add(total, l)?;
        }
        let grad_map = tape.backward(total)?;
        let mut grads = binds.grads(&grad_map);
        clip_global_norm(&mut grads, cfg.clip_norm);
        adam.step(params, &grads, &hyper)?;
    }
    Ok(())
}

// ---- evaluation ------------------------------------------------------------

/// Per-sample prediction vectors (normalized space), evaluated in
/// parallel with order preserved.
pub fn predictions(
    params: &ModelParams,
    cfg: &ModelConfig,
    samples: &[ModelSample],
) -> Result<Vec<Vec<f64>>> {
    par::map_collect(samples, |s| forward(params, cfg, s))
        .into_iter()
        .collect()
}

/// Sequential twin of [`predictions`], for benchmarking.
pub fn predictions_seq(
    params: &ModelParams,
    cfg: &ModelConfig,
    samples: &[ModelSample],
) -> Result<Vec<Vec<f64>>> {
    par::map_collect_seq(samples, |s| forward(params, cfg, s))
        .into_iter()
        .collect()
}

/// MAPE over a split in normalized space (equal to the denormalized
/// value: MAPE is scale-invariant).
fn split_mape(params: &ModelParams, cfg: &ModelConfig, samples: &[ModelSample]) -> Result<f64> {
    let preds = predictions(params, cfg, samples)?;
    let mut t = Vec::new();
    let mut p = Vec::new();
    for (sample, pv) in samples.iter().zip(&preds) {
        for (flow, &pred) in sample.flows.iter().zip(pv) {
            t.push(flow.target);
            p.push(pred);
        }
    }
    mape(&t, &p)
}

/// All four metrics over the concatenated per-flow predictions of a
/// split, denormalized to seconds.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    samples: &[ModelSample],
    norm: &NormalizationSpec,
    split: &str,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Contract(format!("split {split} is empty")));
    }
    let preds = predictions(params, cfg, samples)?;
    let mut t = Vec::new();
    let mut p = Vec::new();
    for (sample, pv) in samples.iter().zip(&preds) {
        for (flow, &pred) in sample.flows.iter().zip(pv) {
            t.push(flow.target * norm.delay_scale);
            p.push(pred * norm.delay_scale);
        }
    }
    MetricsReport::compute(split, &t, &p)
}

// ---- CSV emission -------------------------------------------------------------

/// One row of the metrics table: MAPE on all three splits plus
/// MAE/MSE/MSLE on the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: String,
    pub train_mape: f64,
    pub val_mape: f64,
    pub test_mape: f64,
    pub mae: f64,
    pub mse: f64,
    pub msle: f64,
}

pub const LOSS_CSV_HEADER: &str = "epoch,train_mape,val_mape";
pub const METRICS_CSV_HEADER: &str = "model,train_mape,val_mape,test_mape,mae,mse,msle";

pub fn loss_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_mape, r.val_mape));
    }
    out
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.model, r.train_mape, r.val_mape, r.test_mape, r.mae, r.mse, r.msle
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, normalize, GeneratorConfig};
    use crate::nn::ParamVisit;

    fn tiny_dataset(samples: usize, seed: u64) -> Vec<ModelSample> {
        let cfg = GeneratorConfig { samples, seed, ..Default::default() };
        let norm = NormalizationSpec::default();
        generate_synthetic(&cfg)
            .unwrap()
            .iter()
            .map(|s| normalize(s, &norm, true).unwrap())
            .collect()
    }

    fn tiny_model_cfg() -> ModelConfig {
        ModelConfig { k: 2, hidden: 6, latent: 6, readout_depth: 2 }
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn history_matches_epochs_and_is_seed_deterministic() {
        let data = tiny_dataset(12, 3);
        let (train_set, val_set) = data.split_at(9);
        let cfg = TrainConfig { epochs: 3, seed: 5, ..Default::default() };
        let mcfg = tiny_model_cfg();
        let a = train(&mcfg, &cfg, train_set, val_set).unwrap();
        let b = train(&mcfg, &cfg, train_set, val_set).unwrap();
        assert_eq!(a.history.len(), 3);
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert!(ra.train_mape.is_finite() && ra.val_mape.is_finite());
            assert_eq!(ra.train_mape.to_bits(), rb.train_mape.to_bits());
            assert_eq!(ra.val_mape.to_bits(), rb.val_mape.to_bits());
        }
        let bits = |p: &ModelParams| {
            let mut v = Vec::new();
            p.visit("", &mut |_, t| v.extend(t.bits_key()));
            v
        };
        assert_eq!(bits(&a.params), bits(&b.params));
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn ae_pretraining_runs_and_changes_only_autoencoders() {
        let data = tiny_dataset(8, 11);
        let (train_set, val_set) = data.split_at(6);
        let base = TrainConfig { epochs: 1, seed: 9, ..Default::default() };
        let with_pre = TrainConfig { ae_pretrain_steps: 10, ..base.clone() };
        let mcfg = tiny_model_cfg();
        let a = train(&mcfg, &base, train_set, val_set).unwrap();
        let b = train(&mcfg, &with_pre, train_set, val_set).unwrap();
        // pretraining shifts the outcome but stays finite
        assert!(b.history[0].train_mape.is_finite());
        assert_ne!(
            a.history[0].train_mape.to_bits(),
            b.history[0].train_mape.to_bits()
        );
    }

    #[test]
    fn evaluate_is_read_only() {
        let data = tiny_dataset(6, 17);
        let mcfg = tiny_model_cfg();
        let mut rng = stream_rng(1, "init");
        let params = ModelParams::init(&mcfg, &mut rng).unwrap();
        let norm = NormalizationSpec::default();
        let mut before = Vec::new();
        params.visit("", &mut |_, t| before.extend(t.bits_key()));
        let _ = evaluate(&params, &mcfg, &data, &norm, "all").unwrap();
        let mut after = Vec::new();
        params.visit("", &mut |_, t| after.extend(t.bits_key()));
        assert_eq!(before, after);
    }

    #[test]
    fn evaluate_matches_parallel_and_sequential() {
        let data = tiny_dataset(6, 23);
        let mcfg = tiny_model_cfg();
        let mut rng = stream_rng(2, "init");
        let params = ModelParams::init(&mcfg, &mut rng).unwrap();
        let a = predictions(&params, &mcfg, &data).unwrap();
        let b = predictions_seq(&params, &mcfg, &data).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_formats() {
        let history = vec![
            EpochRecord { epoch: 1, train_mape: 50.0, val_mape: 60.5 },
            EpochRecord { epoch: 2, train_mape: 40.25, val_mape: 55.0 },
        ];
        let csv = loss_csv(&history);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,train_mape,val_mape"));
        assert_eq!(lines.next(), Some("1,50,60.5"));
        assert_eq!(lines.next(), Some("2,40.25,55"));

        let rows = vec![MetricsRow {
            model: "ae-smpn2".into(),
            train_mape: 1.0,
            val_mape: 2.0,
            test_mape: 3.0,
            mae: 4.0,
            mse: 5.0,
            msle: 6.0,
        }];
        let csv = metrics_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("model,train_mape,val_mape,test_mape,mae,mse,msle"));
        assert_eq!(lines.next(), Some("ae-smpn2,1,2,3,4,5,6"));
    }
}
