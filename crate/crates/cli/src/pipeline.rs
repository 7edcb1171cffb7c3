//! The experiment runner: a single pipeline run (ingest, clean, split,
//! train, predict, evaluate, manifest) plus the ablation grid over dev
//! fractions and the optimizer comparison.

use std::path::{Path, PathBuf};

use pcl_core::corpus::{self, ColumnMap, ParagraphRecord};
use pcl_core::error::{Error, Result};
use pcl_core::metrics::{self, MetricsReport};
use pcl_core::predictor;
use pcl_core::sha256_hex;
use pcl_core::splitter::{self, SplitSpec};
use pcl_core::textprep;
use pcl_core::tokenizer::build_vocab;
use pcl_core::trainer::{self, OptimizerKind, TrainOutcome};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::manifest::{ArtifactWriter, RunManifest};

/// Stage names used in error reports; a failing run always names the
/// stage that aborted it.
const STAGES: [&str; 8] = [
    "ingest", "clean", "split", "vocab", "train", "predict", "evaluate", "manifest",
];

fn stage_err(stage: &str, err: Error) -> Error {
    let tag = format!("stage {stage}: ");
    match err {
        Error::Training(msg) => Error::Training(format!("{tag}{msg}")),
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{tag}{message}"),
        },
        Error::Invalid(msg) => Error::Invalid(format!("{tag}{msg}")),
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{tag}{msg}")),
        Error::Io(msg) => Error::Io(format!("{tag}{msg}")),
    }
}

fn at_stage<T>(stage: &str, result: Result<T>) -> Result<T> {
    debug_assert!(STAGES.contains(&stage));
    result.map_err(|e| stage_err(stage, e))
}

/// Everything a single run produces, with the paths it wrote.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub fraction: f64,
    pub optimizer: String,
    pub metrics: MetricsReport,
    pub out_of_class_rate: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub run_dir: PathBuf,
}

/// Notes recorded in every manifest and grid report: values the source
/// experiments leave unpinned, fixed here by documented defaults.
fn default_notes() -> Vec<String> {
    vec![
        "warmup_steps defaults to total_steps / 10 when the schedule is auto-derived".to_string(),
        "weight_decay default 0.01 applies to adamw only".to_string(),
    ]
}

fn read_corpus(cfg: &ExperimentConfig) -> Result<(Vec<ParagraphRecord>, String, String)> {
    let columns = ColumnMap {
        skip_header: cfg.skip_header,
        ..ColumnMap::default()
    };
    match &cfg.train_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let records = corpus::parse_corpus(&text, &columns, true)?;
            Ok((
                records,
                path.display().to_string(),
                sha256_hex(text.as_bytes()),
            ))
        }
        None => {
            let records = corpus::generate_synthetic(cfg.synth_n, cfg.synth_pos_rate, cfg.seed)?;
            let serialized = corpus::serialize_corpus(&records)?;
            Ok((
                records,
                "synthetic".to_string(),
                sha256_hex(serialized.as_bytes()),
            ))
        }
    }
}

fn clean_records(records: &[ParagraphRecord]) -> (Vec<ParagraphRecord>, String) {
    let mut cleaned = Vec::with_capacity(records.len());
    let mut report_lines = String::new();
    for rec in records {
        let (text, report) = textprep::clean(&rec.text);
        report_lines.push_str(
            &serde_json::json!({
                "par_id": rec.par_id,
                "emails_removed": report.emails_removed,
                "urls_removed": report.urls_removed,
                "ips_removed": report.ips_removed,
                "chars_dropped": report.chars_dropped,
            })
            .to_string(),
        );
        report_lines.push('\n');
        cleaned.push(ParagraphRecord {
            text,
            ..rec.clone()
        });
    }
    (cleaned, report_lines)
}

/// Run the whole pipeline once at a fixed dev fraction and optimizer,
/// writing every artifact plus a digest manifest under `out_dir`.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    fraction: f64,
    optimizer: OptimizerKind,
    out_dir: &Path,
) -> Result<RunSummary> {
    let mut writer = ArtifactWriter::new(out_dir)?;

    // ingest
    let (records, input_source, input_sha256) = at_stage("ingest", read_corpus(cfg))?;
    if records.is_empty() {
        return Err(stage_err(
            "ingest",
            Error::Invalid("empty corpus".to_string()),
        ));
    }

    // clean
    let (cleaned, cleaning_report) = clean_records(&records);
    at_stage(
        "clean",
        corpus::serialize_corpus(&cleaned)
            .and_then(|tsv| writer.write("cleaned.tsv", tsv.as_bytes())),
    )?;
    at_stage(
        "clean",
        writer.write("cleaning_report.jsonl", cleaning_report.as_bytes()),
    )?;

    // split (after cleaning; the manifest records this)
    let spec = SplitSpec {
        dev_fraction: fraction,
        seed: cfg.seed,
        holdout_ids: cfg.holdout_ids.clone(),
        stratified: false,
    };
    let (train_set, dev_set) = at_stage("split", splitter::split(&cleaned, &spec))?;
    at_stage(
        "split",
        corpus::serialize_corpus(&train_set)
            .and_then(|tsv| writer.write("split_train.tsv", tsv.as_bytes())),
    )?;
    at_stage(
        "split",
        corpus::serialize_corpus(&dev_set)
            .and_then(|tsv| writer.write("split_dev.tsv", tsv.as_bytes())),
    )?;
    let split_manifest = serde_json::json!({
        "seed": cfg.seed,
        "dev_fraction": fraction,
        "n_train": train_set.len(),
        "n_dev": dev_set.len(),
        "holdout_ids": cfg.holdout_ids,
        "input_sha256": input_sha256,
        "stage": "after-cleaning",
    });
    at_stage(
        "split",
        writer.write(
            "split_manifest.json",
            serde_json::to_string_pretty(&split_manifest)
                .expect("json")
                .as_bytes(),
        ),
    )?;

    // vocab (train split only, so dev words never leak in)
    let train_texts: Vec<&str> = train_set.iter().map(|r| r.text.as_str()).collect();
    let vocab = at_stage("vocab", build_vocab(&train_texts, cfg.max_vocab))?;
    at_stage(
        "vocab",
        writer.write("vocab.txt", vocab.serialize().as_bytes()),
    )?;

    // train
    let model_cfg = cfg.model.to_config(vocab.size(), cfg.seed);
    let train_cfg = trainer::TrainConfig {
        optimizer,
        ..cfg.train.clone()
    };
    let outcome: TrainOutcome = at_stage(
        "train",
        trainer::train(&model_cfg, &train_cfg, &train_set, &dev_set, &vocab),
    )?;
    at_stage(
        "train",
        writer.write("checkpoint.bin", &outcome.checkpoint.to_bytes()),
    )?;
    at_stage(
        "train",
        writer.write(
            "train_history.json",
            serde_json::to_string_pretty(&outcome.history)
                .expect("json")
                .as_bytes(),
        ),
    )?;

    // predict on dev (plus the optional unlabeled test file)
    let dev_preds = at_stage(
        "predict",
        predictor::predict_file(&outcome.checkpoint, &vocab, &dev_set, cfg.fallback_class),
    )?;
    at_stage(
        "predict",
        writer.write(
            "dev_predictions.txt",
            predictor::format_label_lines(&dev_preds).as_bytes(),
        ),
    )?;
    at_stage(
        "predict",
        writer.write(
            "dev_audit.jsonl",
            predictor::format_audit_jsonl(&dev_preds).as_bytes(),
        ),
    )?;
    if let Some(test_path) = &cfg.test_file {
        let columns = ColumnMap {
            skip_header: cfg.skip_header,
            ..ColumnMap::default()
        };
        let text = at_stage(
            "predict",
            std::fs::read_to_string(test_path)
                .map_err(|e| Error::Io(format!("{}: {e}", test_path.display()))),
        )?;
        let test_records = at_stage("predict", corpus::parse_corpus(&text, &columns, false))?;
        let (test_cleaned, _) = clean_records(&test_records);
        let test_preds = at_stage(
            "predict",
            predictor::predict_file(
                &outcome.checkpoint,
                &vocab,
                &test_cleaned,
                cfg.fallback_class,
            ),
        )?;
        at_stage(
            "predict",
            writer.write(
                "test_predictions.txt",
                predictor::format_label_lines(&test_preds).as_bytes(),
            ),
        )?;
        at_stage(
            "predict",
            writer.write(
                "test_audit.jsonl",
                predictor::format_audit_jsonl(&test_preds).as_bytes(),
            ),
        )?;
    }

    // evaluate against the dev golds
    let golds: Vec<u8> = dev_set
        .iter()
        .map(|r| r.binary_label.expect("labeled by split stage"))
        .collect();
    let labels: Vec<u8> = dev_preds.iter().map(|p| p.label).collect();
    let cm = at_stage("evaluate", metrics::confusion(&labels, &golds))?;
    let report = metrics::macro_report(&cm);
    at_stage(
        "evaluate",
        writer.write(
            "metrics.json",
            serde_json::to_string_pretty(&report)
                .expect("json")
                .as_bytes(),
        ),
    )?;
    at_stage(
        "evaluate",
        writer.write("metrics.txt", report.render_text().as_bytes()),
    )?;
    at_stage(
        "evaluate",
        writer.write("confusion.svg", report.render_svg().as_bytes()),
    )?;
    let table = at_stage(
        "evaluate",
        metrics::error_table(&dev_preds, &dev_set, &golds),
    )?;
    at_stage(
        "evaluate",
        writer.write("error_table.txt", table.render_text(false).as_bytes()),
    )?;
    at_stage(
        "evaluate",
        writer.write(
            "error_table.json",
            serde_json::to_string_pretty(&table)
                .expect("json")
                .as_bytes(),
        ),
    )?;

    // manifest
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        dev_fraction: fraction,
        optimizer: optimizer.to_string(),
        input_source,
        input_sha256,
        split_stage: "after-cleaning".to_string(),
        artifacts: writer.entries().to_vec(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        notes: default_notes(),
    };
    at_stage(
        "manifest",
        std::fs::write(out_dir.join("manifest.json"), manifest.to_json())
            .map_err(|e| Error::Io(e.to_string())),
    )?;

    Ok(RunSummary {
        fraction,
        optimizer: optimizer.to_string(),
        metrics: report,
        out_of_class_rate: predictor::out_of_class_rate(&dev_preds),
        val_loss: outcome.checkpoint.val_loss,
        best_epoch: outcome.checkpoint.epoch,
        run_dir: out_dir.to_path_buf(),
    })
}

/// One grid row; failed rows carry the error and leave the rest running.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub fraction: f64,
    pub optimizer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    /// True when every row shared every hyperparameter except the grid
    /// axis; verified from the per-row resolved configs, not assumed.
    pub hyperparameters_constant: bool,
    pub notes: Vec<String>,
}

impl GridReport {
    /// Aligned text table in grid order: P, R, F1 (macro), out-of-class
    /// rate per row.
    pub fn render_text(&self) -> String {
        let mut out = String::from("fraction  optimizer         P         R        F1      oocr\n");
        for row in &self.rows {
            match (&row.summary, &row.error) {
                (Some(s), _) => out.push_str(&format!(
                    "{:>8}  {:<9}{:>9}{:>10}{:>10}{:>10}\n",
                    row.fraction,
                    row.optimizer,
                    metrics::round4(s.metrics.macro_precision),
                    metrics::round4(s.metrics.macro_recall),
                    metrics::round4(s.metrics.macro_f1),
                    metrics::round4(s.out_of_class_rate),
                )),
                (None, Some(err)) => out.push_str(&format!(
                    "{:>8}  {:<9}failed: {err}\n",
                    row.fraction, row.optimizer
                )),
                (None, None) => unreachable!("row has neither summary nor error"),
            }
        }
        out.push_str(&format!(
            "hyperparameters constant across rows: {}\n",
            self.hyperparameters_constant
        ));
        for note in &self.notes {
            out.push_str(&format!("note: {note}\n"));
        }
        out
    }
}

/// Canonical JSON of everything that must NOT vary across grid rows
/// (the grid axes themselves excluded).
fn constancy_key(cfg: &ExperimentConfig) -> String {
    serde_json::json!({
        "model": cfg.model,
        "train": {
            "peak_lr": cfg.train.peak_lr,
            "warmup_steps": cfg.train.warmup_steps,
            "total_steps": cfg.train.total_steps,
            "batch_size": cfg.train.batch_size,
            "epochs": cfg.train.epochs,
            "beta1": cfg.train.beta1,
            "beta2": cfg.train.beta2,
            "epsilon": cfg.train.epsilon,
            "weight_decay": cfg.train.weight_decay,
        },
        "seed": cfg.seed,
        "max_vocab": cfg.max_vocab,
        "fallback_class": cfg.fallback_class,
        "holdout_ids": cfg.holdout_ids,
        "train_file": cfg.train_file,
        "synth_n": cfg.synth_n,
        "synth_pos_rate": cfg.synth_pos_rate,
    })
    .to_string()
}

fn run_grid(
    cfg: &ExperimentConfig,
    cells: &[(f64, OptimizerKind)],
    out_root: &Path,
) -> Result<GridReport> {
    let mut rows = Vec::with_capacity(cells.len());
    let mut keys = Vec::with_capacity(cells.len());
    for &(fraction, optimizer) in cells {
        let run_dir = out_root.join(format!("frac{fraction}_{optimizer}"));
        keys.push(constancy_key(cfg));
        match run_pipeline(cfg, fraction, optimizer, &run_dir) {
            Ok(summary) => rows.push(GridRow {
                fraction,
                optimizer: optimizer.to_string(),
                summary: Some(summary),
                error: None,
            }),
            Err(err) => rows.push(GridRow {
                fraction,
                optimizer: optimizer.to_string(),
                summary: None,
                error: Some(err.to_string()),
            }),
        }
    }
    let constant = keys.windows(2).all(|w| w[0] == w[1]);
    let report = GridReport {
        rows,
        hyperparameters_constant: constant,
        notes: default_notes(),
    };
    std::fs::create_dir_all(out_root).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(
        out_root.join("grid_report.json"),
        serde_json::to_string_pretty(&report).expect("json"),
    )
    .map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out_root.join("grid_report.txt"), report.render_text())
        .map_err(|e| Error::Io(e.to_string()))?;
    Ok(report)
}

/// One row per dev fraction (times each configured optimizer), each model
/// retrained from scratch with identical hyperparameters.
pub fn run_ablation(cfg: &ExperimentConfig, out_root: &Path) -> Result<GridReport> {
    let mut cells = Vec::new();
    for &optimizer in &cfg.optimizers {
        for &fraction in &cfg.fractions {
            cells.push((fraction, optimizer));
        }
    }
    run_grid(cfg, &cells, out_root)
}

/// Side-by-side optimizer rows at a single dev fraction, sharing the
/// split seed and every other hyperparameter.
pub fn compare_optimizers(cfg: &ExperimentConfig, out_root: &Path) -> Result<GridReport> {
    let fraction = cfg.fractions[0];
    let cells: Vec<(f64, OptimizerKind)> =
        cfg.optimizers.iter().map(|&opt| (fraction, opt)).collect();
    run_grid(cfg, &cells, out_root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Overrides;

    fn fast_config(seed: u64) -> ExperimentConfig {
        let flags = Overrides {
            seed: Some(seed),
            synth_n: Some(32),
            synth_pos_rate: Some(0.5),
            epochs: Some(2),
            peak_lr: Some(3e-3),
            ..Overrides::default()
        };
        let mut cfg = ExperimentConfig::load(None, &flags).unwrap();
        cfg.model.d_model = 16;
        cfg.model.d_ff = 32;
        cfg.model.n_heads = 2;
        cfg.model.n_layers_enc = 1;
        cfg.model.n_layers_dec = 1;
        cfg
    }

    #[test]
    fn pipeline_smoke_run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_config(3);
        let summary =
            run_pipeline(&cfg, 0.25, OptimizerKind::Adam, &dir.path().join("run")).unwrap();
        assert!(summary.metrics.macro_f1.is_finite());
        for name in [
            "cleaned.tsv",
            "cleaning_report.jsonl",
            "split_train.tsv",
            "split_dev.tsv",
            "split_manifest.json",
            "vocab.txt",
            "checkpoint.bin",
            "train_history.json",
            "dev_predictions.txt",
            "dev_audit.jsonl",
            "metrics.json",
            "metrics.txt",
            "confusion.svg",
            "error_table.txt",
            "error_table.json",
            "manifest.json",
        ] {
            assert!(
                dir.path().join("run").join(name).exists(),
                "missing artifact {name}"
            );
        }
        let manifest: RunManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap(),
        )
        .unwrap();
        // Every artifact is listed with its digest (the manifest itself
        // is written after the listing).
        assert_eq!(manifest.artifacts.len(), 15);
        for entry in &manifest.artifacts {
            let bytes = std::fs::read(dir.path().join("run").join(&entry.name)).unwrap();
            assert_eq!(
                sha256_hex(&bytes),
                entry.sha256,
                "stale digest for {}",
                entry.name
            );
        }
    }

    #[test]
    fn pipeline_reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_config(9);
        run_pipeline(&cfg, 0.25, OptimizerKind::Adam, &dir.path().join("a")).unwrap();
        run_pipeline(&cfg, 0.25, OptimizerKind::Adam, &dir.path().join("b")).unwrap();
        for name in ["metrics.json", "dev_predictions.txt", "checkpoint.bin"] {
            let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn rerun_from_manifest_reproduces_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fast_config(12);
        run_pipeline(&cfg, 0.25, OptimizerKind::Adam, &dir.path().join("a")).unwrap();
        let manifest: RunManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap(),
        )
        .unwrap();
        let recovered: ExperimentConfig = serde_json::from_value(manifest.config).unwrap();
        let optimizer: OptimizerKind = manifest.optimizer.parse().unwrap();
        run_pipeline(
            &recovered,
            manifest.dev_fraction,
            optimizer,
            &dir.path().join("b"),
        )
        .unwrap();
        for name in ["metrics.json", "dev_predictions.txt"] {
            let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
            assert_eq!(a, b, "{name} differs when rerun from the manifest");
        }
    }

    #[test]
    fn failed_row_is_recorded_and_other_rows_continue() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fast_config(7);
        // floor(0.02 * 32) = 0: an empty dev set fails that row's train
        // stage while the 0.25 row still runs.
        cfg.fractions = vec![0.02, 0.25];
        let report = run_ablation(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        let failed = &report.rows[0];
        assert!(failed.summary.is_none());
        let message = failed.error.as_deref().unwrap();
        assert!(message.contains("stage train"), "{message}");
        assert!(report.rows[1].summary.is_some());
        assert!(report.render_text().contains("failed:"));
    }

    #[test]
    fn test_file_predictions_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let unlabeled = pcl_core::corpus::generate_synthetic(6, 0.5, 50)
            .unwrap()
            .into_iter()
            .map(|mut rec| {
                rec.par_id = format!("test-{}", rec.par_id);
                rec.orig_label = None;
                rec.binary_label = None;
                rec
            })
            .collect::<Vec<_>>();
        let test_path = dir.path().join("test.tsv");
        std::fs::write(&test_path, corpus::serialize_corpus(&unlabeled).unwrap()).unwrap();

        let mut cfg = fast_config(8);
        cfg.test_file = Some(test_path);
        let run_dir = dir.path().join("run");
        run_pipeline(&cfg, 0.25, OptimizerKind::Adam, &run_dir).unwrap();
        let preds = std::fs::read_to_string(run_dir.join("test_predictions.txt")).unwrap();
        assert_eq!(preds.lines().count(), 6);
        assert!(preds.lines().all(|l| l == "0" || l == "1"));
        let audit = std::fs::read_to_string(run_dir.join("test_audit.jsonl")).unwrap();
        assert!(audit.lines().next().unwrap().contains("test-"));
    }

    #[test]
    fn missing_train_file_names_the_stage_and_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fast_config(1);
        cfg.train_file = Some(PathBuf::from("/nonexistent/corpus.tsv"));
        let err = run_pipeline(&cfg, 0.2, OptimizerKind::Adam, dir.path())
            .unwrap_err()
            .to_string();
        assert!(err.contains("stage ingest"), "{err}");
        assert!(err.contains("/nonexistent/corpus.tsv"), "{err}");
    }

    #[test]
    fn ablation_produces_one_row_per_fraction() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fast_config(5);
        cfg.fractions = vec![0.2, 0.25];
        let report = run_ablation(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.hyperparameters_constant);
        assert!(report.rows.iter().all(|r| r.summary.is_some()));
        assert!(dir.path().join("grid_report.json").exists());
    }

    #[test]
    fn compare_runs_each_optimizer_once() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = fast_config(6);
        cfg.optimizers = vec![OptimizerKind::Adam, OptimizerKind::AdamW];
        let report = compare_optimizers(&cfg, dir.path()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].optimizer, "adam");
        assert_eq!(report.rows[1].optimizer, "adamw");
        let text = report.render_text();
        assert!(text.contains("adamw"));
    }
}
