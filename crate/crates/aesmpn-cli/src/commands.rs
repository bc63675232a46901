//! Implementations of the five subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Deserialize;

use aesmpn::data::{
    generate_synthetic, load_dataset, normalize, save_dataset, split_dataset, EdgeCountMode,
    GeneratorConfig, ModelSample, NetworkSample, NormalizationSpec, Strictness,
};
use aesmpn::gradsuite;
use aesmpn::model::{ModelConfig, ModelParams, ModelVariant};
use aesmpn::train::{
    evaluate, load_checkpoint, loss_csv, metrics_csv, predictions, save_checkpoint, train,
    write_atomic, Checkpoint, MetricsRow, SplitSpec, TrainConfig,
};
use aesmpn::{Error, Result};

use crate::manifest::RunManifest;

// ---- gen -------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of samples to generate
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 5)]
    pub nodes_min: usize,
    #[arg(long, default_value_t = 8)]
    pub nodes_max: usize,
    #[arg(long, default_value_t = 3)]
    pub flows_min: usize,
    #[arg(long, default_value_t = 6)]
    pub flows_max: usize,
    /// Utilization cap; links keep lambda < rho_max * mu
    #[arg(long, default_value_t = 0.9)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = GeneratorConfig {
        samples: args.samples,
        nodes: (args.nodes_min, args.nodes_max),
        flows: (args.flows_min, args.flows_max),
        rho_max: args.rho_max,
        seed: args.seed,
        ..Default::default()
    };
    cfg.validate()?;

    std::fs::create_dir_all(&args.out)?;
    let dataset_path = args.out.join("dataset.jsonl");
    let manifest_path = args.out.join("manifest.json");

    let mut manifest = RunManifest::new(
        "gen",
        args.seed,
        serde_json::json!({
            "samples": args.samples,
            "nodes": [args.nodes_min, args.nodes_max],
            "flows": [args.flows_min, args.flows_max],
            "rho_max": args.rho_max,
        }),
    );
    manifest.add_output(&dataset_path);
    manifest.write(&manifest_path)?;

    let samples = generate_synthetic(&cfg)?;
    save_dataset(&dataset_path, &samples)?;
    if samples.is_empty() {
        eprintln!("warning: generated an empty dataset ({} samples requested)", args.samples);
    }
    println!("wrote {} samples to {}", samples.len(), dataset_path.display());

    manifest.add_input(&dataset_path)?;
    manifest.duration_secs = Some(started.elapsed().as_secs_f64());
    manifest.write(&manifest_path)
}

// ---- train -----------------------------------------------------------------

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset file (line-delimited JSON)
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON config file; flags override it, it overrides defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ae-mpnn | ae-smpn2 | ae-smpn3 | ae-smpn4 | all
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Message-passing iterations
    #[arg(long)]
    pub k: Option<usize>,
    /// State width / embedding size
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Autoencoder reconstruction pretraining steps (0 = off)
    #[arg(long)]
    pub ae_pretrain_steps: Option<usize>,
    /// Train/val/test fractions, e.g. 0.8,0.1,0.1
    #[arg(long)]
    pub split: Option<String>,
    /// Normalization spec file (JSON); defaults to the embedded ranges
    #[arg(long)]
    pub norm: Option<PathBuf>,
    /// Enforce the documented data regime on load and normalization
    #[arg(long, default_value_t = false)]
    pub strict: bool,
}

/// Optional file-backed settings; any field a flag does not override.
#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    model: Option<String>,
    epochs: Option<usize>,
    lr: Option<f64>,
    k: Option<usize>,
    hidden: Option<usize>,
    seed: Option<u64>,
    ae_pretrain_steps: Option<usize>,
    split: Option<String>,
}

struct ResolvedTrain {
    model: String,
    epochs: usize,
    lr: f64,
    k: usize,
    hidden: usize,
    seed: u64,
    ae_pretrain_steps: usize,
    fractions: (f64, f64, f64),
}

fn resolve_train(args: &TrainArgs) -> Result<ResolvedTrain> {
    let file: TrainFileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?
        }
        None => TrainFileConfig::default(),
    };
    let split_text = args
        .split
        .clone()
        .or(file.split)
        .unwrap_or_else(|| "0.8,0.1,0.1".to_string());
    Ok(ResolvedTrain {
        model: args.model.clone().or(file.model).unwrap_or_else(|| "ae-smpn2".to_string()),
        epochs: args.epochs.or(file.epochs).unwrap_or(50),
        lr: args.lr.or(file.lr).unwrap_or(1e-3),
        k: args.k.or(file.k).unwrap_or(8),
        hidden: args.hidden.or(file.hidden).unwrap_or(64),
        seed: args.seed.or(file.seed).unwrap_or(0),
        ae_pretrain_steps: args.ae_pretrain_steps.or(file.ae_pretrain_steps).unwrap_or(0),
        fractions: parse_fractions(&split_text)?,
    })
}

fn parse_fractions(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("invalid split fractions {text:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "split must have 3 comma-separated fractions, got {text:?}"
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn selected_variants(name: &str) -> Result<Vec<ModelVariant>> {
    if name == "all" {
        return Ok(ModelVariant::ALL.to_vec());
    }
    ModelVariant::from_name(name)
        .map(|v| vec![v])
        .ok_or_else(|| Error::Config(format!("unknown model {name:?} (expected ae-mpnn, ae-smpn2, ae-smpn3, ae-smpn4, or all)")))
}

fn load_norm_spec(path: Option<&Path>) -> Result<NormalizationSpec> {
    match path {
        Some(p) => NormalizationSpec::from_json(&std::fs::read_to_string(p)?),
        None => Ok(NormalizationSpec::default()),
    }
}

fn strictness(strict: bool) -> Strictness {
    if strict {
        Strictness::Strict(EdgeCountMode::Directed)
    } else {
        Strictness::Structural
    }
}

fn load_and_split(
    data: &Path,
    strict: bool,
    norm: &NormalizationSpec,
    split: &SplitSpec,
) -> Result<(Vec<ModelSample>, Vec<ModelSample>, Vec<ModelSample>)> {
    let loaded = load_dataset(data, strictness(strict))?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let (train_raw, val_raw, test_raw) =
        split_dataset(&loaded.samples, split.fractions, split.seed)?;
    let featurize = |set: &[NetworkSample]| -> Result<Vec<ModelSample>> {
        set.iter().map(|s| normalize(s, norm, strict)).collect()
    };
    Ok((featurize(&train_raw)?, featurize(&val_raw)?, featurize(&test_raw)?))
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let started = Instant::now();
    let resolved = resolve_train(args)?;
    let variants = selected_variants(&resolved.model)?;
    let norm = load_norm_spec(args.norm.as_deref())?;
    norm.validate()?;

    std::fs::create_dir_all(&args.out)?;
    let manifest_path = args.out.join("manifest.json");
    let metrics_path = args.out.join("metrics.csv");

    let mut manifest = RunManifest::new(
        "train",
        resolved.seed,
        serde_json::json!({
            "model": resolved.model,
            "epochs": resolved.epochs,
            "learning_rate": resolved.lr,
            "mpnn_iterations": resolved.k,
            "embedding_size": resolved.hidden,
            "ae_pretrain_steps": resolved.ae_pretrain_steps,
            "split": [resolved.fractions.0, resolved.fractions.1, resolved.fractions.2],
            "loss": "MAPE",
            "optimizer": "Adam",
            "activation": "SELU",
        }),
    );
    manifest.add_input(&args.data)?;
    manifest.add_output(&metrics_path);
    for v in &variants {
        manifest.add_output(&args.out.join(format!("ckpt_{}.json", v.name())));
        manifest.add_output(&args.out.join(format!("loss_{}.csv", v.name())));
    }
    manifest.write(&manifest_path)?;

    let split = SplitSpec { seed: resolved.seed, fractions: resolved.fractions };
    let (train_set, val_set, test_set) = load_and_split(&args.data, args.strict, &norm, &split)?;
    eprintln!(
        "loaded {} train / {} val / {} test samples",
        train_set.len(),
        val_set.len(),
        test_set.len()
    );

    let train_cfg = TrainConfig {
        epochs: resolved.epochs,
        learning_rate: resolved.lr,
        seed: resolved.seed,
        ae_pretrain_steps: resolved.ae_pretrain_steps,
        ..Default::default()
    };

    let mut rows = Vec::with_capacity(variants.len());
    for variant in variants {
        let model_cfg = ModelConfig::for_variant(variant, resolved.hidden, resolved.k);
        eprintln!("training {} (depth {})", variant.name(), model_cfg.readout_depth);
        let outcome = train(&model_cfg, &train_cfg, &train_set, &val_set)?;

        let loss_path = args.out.join(format!("loss_{}.csv", variant.name()));
        write_atomic(&loss_path, loss_csv(&outcome.history).as_bytes())?;

        let ckpt = Checkpoint {
            variant,
            config: model_cfg,
            normalization: norm.clone(),
            split,
            params: outcome.best_params.clone(),
        };
        let ckpt_path = args.out.join(format!("ckpt_{}.json", variant.name()));
        save_checkpoint(&ckpt_path, &ckpt)?;

        let row = metrics_row(variant, &ckpt.params, &model_cfg, &train_set, &val_set, &test_set, &norm)?;
        eprintln!(
            "{}: best epoch {} | train {:.3}% val {:.3}% test {:.3}%",
            variant.name(),
            outcome.best_epoch,
            row.train_mape,
            row.val_mape,
            row.test_mape
        );
        rows.push(row);
    }

    write_atomic(&metrics_path, metrics_csv(&rows).as_bytes())?;
    println!("wrote {}", metrics_path.display());

    manifest.duration_secs = Some(started.elapsed().as_secs_f64());
    manifest.write(&manifest_path)
}

fn metrics_row(
    variant: ModelVariant,
    params: &ModelParams,
    cfg: &ModelConfig,
    train_set: &[ModelSample],
    val_set: &[ModelSample],
    test_set: &[ModelSample],
    norm: &NormalizationSpec,
) -> Result<MetricsRow> {
    let train_report = evaluate(params, cfg, train_set, norm, "train")?;
    let val_report = evaluate(params, cfg, val_set, norm, "val")?;
    let test_report = evaluate(params, cfg, test_set, norm, "test")?;
    Ok(MetricsRow {
        model: variant.name().to_string(),
        train_mape: train_report.mape_pct,
        val_mape: val_report.mape_pct,
        test_mape: test_report.mape_pct,
        mae: test_report.mae,
        mse: test_report.mse,
        msle: test_report.msle,
    })
}

// ---- eval ------------------------------------------------------------------

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint file written by `train`
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset file the checkpoint was trained on
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = false)]
    pub strict: bool,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt = load_checkpoint(&args.ckpt)?;
    let (train_set, val_set, test_set) =
        load_and_split(&args.data, args.strict, &ckpt.normalization, &ckpt.split)?;

    let row = metrics_row(
        ckpt.variant,
        &ckpt.params,
        &ckpt.config,
        &train_set,
        &val_set,
        &test_set,
        &ckpt.normalization,
    )?;

    std::fs::create_dir_all(&args.out)?;
    let metrics_path = args.out.join("metrics.csv");
    let manifest_path = args.out.join("manifest.json");
    let mut manifest = RunManifest::new(
        "eval",
        ckpt.split.seed,
        serde_json::json!({ "checkpoint": args.ckpt.display().to_string() }),
    );
    manifest.add_input(&args.ckpt)?;
    manifest.add_input(&args.data)?;
    manifest.add_output(&metrics_path);
    manifest.write(&manifest_path)?;

    write_atomic(&metrics_path, metrics_csv(std::slice::from_ref(&row)).as_bytes())?;
    println!(
        "{}: train {} val {} test {} (MAPE %)",
        row.model, row.train_mape, row.val_mape, row.test_mape
    );

    manifest.duration_secs = Some(started.elapsed().as_secs_f64());
    manifest.write(&manifest_path)
}

// ---- predict ---------------------------------------------------------------

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = false)]
    pub strict: bool,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let started = Instant::now();
    let ckpt = load_checkpoint(&args.ckpt)?;
    let loaded = load_dataset(&args.data, strictness(args.strict))?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let samples: Vec<ModelSample> = loaded
        .samples
        .iter()
        .map(|s| normalize(s, &ckpt.normalization, args.strict))
        .collect::<Result<_>>()?;

    // predict everything before any output file is opened
    let preds = predictions(&ckpt.params, &ckpt.config, &samples)?;
    let mut csv = String::from("sample,flow,delay_seconds\n");
    for (si, per_flow) in preds.iter().enumerate() {
        for (fi, &p) in per_flow.iter().enumerate() {
            csv.push_str(&format!("{},{},{}\n", si, fi, p * ckpt.normalization.delay_scale));
        }
    }

    std::fs::create_dir_all(&args.out)?;
    let pred_path = args.out.join("predictions.csv");
    let manifest_path = args.out.join("manifest.json");
    let mut manifest = RunManifest::new(
        "predict",
        ckpt.split.seed,
        serde_json::json!({ "checkpoint": args.ckpt.display().to_string() }),
    );
    manifest.add_input(&args.ckpt)?;
    manifest.add_input(&args.data)?;
    manifest.add_output(&pred_path);
    manifest.write(&manifest_path)?;

    write_atomic(&pred_path, csv.as_bytes())?;
    println!("wrote {}", pred_path.display());

    manifest.duration_secs = Some(started.elapsed().as_secs_f64());
    manifest.write(&manifest_path)
}

// ---- gradcheck ---------------------------------------------------------------

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Tolerance for ops and layers
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Tolerance for the full-model check
    #[arg(long, default_value_t = 1e-3)]
    pub e2e_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let results = gradsuite::run_suite(args.eps, args.tol, args.e2e_tol, args.seed)?;
    let mut failures = 0;
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!("{:<22} max_rel_err {:.3e}  tol {:.0e}  {}", r.name, r.max_err, r.tol, status);
        if !r.passed() {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::Numeric {
            epoch: 0,
            sample: 0,
            message: format!("{failures} gradient check(s) exceeded tolerance"),
        });
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
