//! `pcl` command-line front-end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pcl_cli::config::{ExperimentConfig, Overrides};
use pcl_cli::manifest::ArtifactWriter;
use pcl_cli::pipeline;
use pcl_core::corpus::{self, ColumnMap};
use pcl_core::error::{Error, Result};
use pcl_core::metrics;
use pcl_core::predictor;
use pcl_core::splitter::{self, SplitSpec, ABLATION_FRACTIONS};
use pcl_core::textprep;
use pcl_core::tokenizer::{build_vocab, Vocabulary};
use pcl_core::trainer::{self, Checkpoint, OptimizerKind};

#[derive(Parser)]
#[command(
    name = "pcl",
    version,
    about = "Desk-scale lab for binary condescension detection: corpus prep, a tiny text-to-text classifier, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus TSV
    Synth {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0.25)]
        pos_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output TSV path
        #[arg(long)]
        output: PathBuf,
    },
    /// Parse a corpus TSV and report per-class counts
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Input has no label column
        #[arg(long)]
        no_labels: bool,
        #[arg(long)]
        skip_header: bool,
        /// Emit counts as JSON
        #[arg(long)]
        json: bool,
    },
    /// Apply the cleaning rules to every record
    Clean {
        #[arg(long)]
        input: PathBuf,
        /// Cleaned TSV output
        #[arg(long)]
        output: PathBuf,
        /// JSON-lines cleaning report sidecar
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        no_labels: bool,
        #[arg(long)]
        skip_header: bool,
    },
    /// Seeded shuffled train/dev split with optional holdout injection
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated par_ids forced into the dev set
        #[arg(long, value_delimiter = ',')]
        holdout: Vec<String>,
        /// Split each class separately
        #[arg(long)]
        stratified: bool,
        #[arg(long)]
        skip_header: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train on a train/dev TSV pair and save the best checkpoint
    Train {
        /// Labeled train TSV (cleaned)
        #[arg(long)]
        train: PathBuf,
        /// Labeled dev TSV (cleaned)
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        flags: ExperimentFlags,
    },
    /// Predict labels for a TSV with a trained checkpoint
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        no_labels: bool,
        #[arg(long)]
        skip_header: bool,
        /// Label-per-line output file
        #[arg(long)]
        output: PathBuf,
        /// JSON-lines audit file (par_id, raw decode, in_class)
        #[arg(long)]
        audit: Option<PathBuf>,
        #[arg(long, default_value_t = predictor::DEFAULT_FALLBACK)]
        fallback_class: u8,
    },
    /// Score a predictions file against gold labels
    Evaluate {
        /// Labeled gold TSV, aligned with the predictions
        #[arg(long)]
        gold: PathBuf,
        /// Label-per-line predictions file
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        skip_header: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Retrain afresh at each dev fraction and tabulate metrics
    Ablate {
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated dev fractions (default 0.05,0.1,0.15,0.2)
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
        /// Comma-separated optimizers to cross with the fractions
        #[arg(long, value_delimiter = ',')]
        optimizers: Vec<String>,
        #[command(flatten)]
        flags: ExperimentFlags,
    },
    /// Train adam and adamw side by side on one split (dev fraction 0.1
    /// unless --dev-fraction overrides it)
    CompareOptimizers {
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated optimizers (default adam,adamw)
        #[arg(long, value_delimiter = ',')]
        optimizers: Vec<String>,
        #[command(flatten)]
        flags: ExperimentFlags,
    },
}

/// Flags shared by the experiment-running subcommands. Flags override the
/// config file, which overrides the defaults.
#[derive(Args, Default)]
struct ExperimentFlags {
    /// TOML experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Labeled corpus TSV (omit to use a synthetic corpus)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Unlabeled TSV to predict on after training
    #[arg(long)]
    test_file: Option<PathBuf>,
    /// Global seed (split shuffle, init, training order)
    #[arg(long)]
    seed: Option<u64>,
    /// Single dev fraction override
    #[arg(long)]
    dev_fraction: Option<f64>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    fallback_class: Option<u8>,
    /// Comma-separated par_ids forced into dev before training
    #[arg(long, value_delimiter = ',')]
    holdout: Vec<String>,
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_pos_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    skip_header: bool,
}

impl ExperimentFlags {
    fn to_overrides(&self) -> Result<Overrides> {
        Ok(Overrides {
            train_file: self.input.clone(),
            test_file: self.test_file.clone(),
            dev_fraction: self.dev_fraction,
            fractions: None,
            optimizer: self.optimizer.as_deref().map(str::parse).transpose()?,
            holdout_ids: if self.holdout.is_empty() {
                None
            } else {
                Some(self.holdout.clone())
            },
            fallback_class: self.fallback_class,
            seed: self.seed,
            synth_n: self.synth_n,
            synth_pos_rate: self.synth_pos_rate,
            max_vocab: self.max_vocab,
            skip_header: if self.skip_header { Some(true) } else { None },
            epochs: self.epochs,
            batch_size: self.batch_size,
            peak_lr: self.peak_lr,
        })
    }

    fn load_config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.to_overrides()?)
    }
}

fn parse_optimizers(names: &[String]) -> Result<Vec<OptimizerKind>> {
    names.iter().map(|n| n.parse()).collect()
}

fn columns(skip_header: bool) -> ColumnMap {
    ColumnMap {
        skip_header,
        ..ColumnMap::default()
    }
}

fn read_records(
    path: &Path,
    has_labels: bool,
    skip_header: bool,
) -> Result<Vec<corpus::ParagraphRecord>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    corpus::parse_corpus(&text, &columns(skip_header), has_labels)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            n,
            pos_rate,
            seed,
            output,
        } => {
            let records = corpus::generate_synthetic(n, pos_rate, seed)?;
            let stats = corpus::corpus_stats(&records)?;
            std::fs::write(&output, corpus::serialize_corpus(&records)?)
                .map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
            println!(
                "wrote {} records ({} neg, {} pos) to {}",
                stats.total,
                stats.neg,
                stats.pos,
                output.display()
            );
            Ok(())
        }
        Command::Ingest {
            input,
            no_labels,
            skip_header,
            json,
        } => {
            let records = read_records(&input, !no_labels, skip_header)?;
            if no_labels {
                if json {
                    println!("{}", serde_json::json!({ "total": records.len() }));
                } else {
                    println!("total {} (unlabeled)", records.len());
                }
                return Ok(());
            }
            let stats = corpus::corpus_stats(&records)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "total": stats.total,
                        "neg": stats.neg,
                        "pos": stats.pos,
                    })
                );
            } else {
                println!(
                    "total {}  neg {}  pos {}",
                    stats.total, stats.neg, stats.pos
                );
            }
            Ok(())
        }
        Command::Clean {
            input,
            output,
            report,
            no_labels,
            skip_header,
        } => {
            let records = read_records(&input, !no_labels, skip_header)?;
            let mut cleaned = Vec::with_capacity(records.len());
            let mut report_lines = String::new();
            for rec in &records {
                let (text, rep) = textprep::clean(&rec.text);
                report_lines.push_str(
                    &serde_json::json!({
                        "par_id": rec.par_id,
                        "emails_removed": rep.emails_removed,
                        "urls_removed": rep.urls_removed,
                        "ips_removed": rep.ips_removed,
                        "chars_dropped": rep.chars_dropped,
                    })
                    .to_string(),
                );
                report_lines.push('\n');
                cleaned.push(corpus::ParagraphRecord {
                    text,
                    ..rec.clone()
                });
            }
            std::fs::write(&output, corpus::serialize_corpus(&cleaned)?)
                .map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
            if let Some(report_path) = report {
                std::fs::write(&report_path, report_lines)
                    .map_err(|e| Error::Io(format!("{}: {e}", report_path.display())))?;
            }
            println!(
                "cleaned {} records into {}",
                cleaned.len(),
                output.display()
            );
            Ok(())
        }
        Command::Split {
            input,
            dev_fraction,
            seed,
            holdout,
            stratified,
            skip_header,
            out_dir,
        } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| Error::Io(format!("{}: {e}", input.display())))?;
            let records = corpus::parse_corpus(&text, &columns(skip_header), true)?;
            let spec = SplitSpec {
                dev_fraction,
                seed,
                holdout_ids: holdout.clone(),
                stratified,
            };
            let (train_set, dev_set) = splitter::split(&records, &spec)?;
            let mut writer = ArtifactWriter::new(&out_dir)?;
            writer.write(
                "train.tsv",
                corpus::serialize_corpus(&train_set)?.as_bytes(),
            )?;
            writer.write("dev.tsv", corpus::serialize_corpus(&dev_set)?.as_bytes())?;
            let manifest = serde_json::json!({
                "seed": seed,
                "dev_fraction": dev_fraction,
                "n_train": train_set.len(),
                "n_dev": dev_set.len(),
                "holdout_ids": holdout,
                "stratified": stratified,
                "input_sha256": pcl_core::sha256_hex(text.as_bytes()),
                "stage": "as-provided",
            });
            writer.write(
                "split_manifest.json",
                serde_json::to_string_pretty(&manifest)
                    .expect("json")
                    .as_bytes(),
            )?;
            println!(
                "split {} records into {} train / {} dev under {}",
                records.len(),
                train_set.len(),
                dev_set.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Train {
            train,
            dev,
            out_dir,
            flags,
        } => {
            let cfg = flags.load_config()?;
            let train_set = read_records(&train, true, cfg.skip_header)?;
            let dev_set = read_records(&dev, true, cfg.skip_header)?;
            let texts: Vec<&str> = train_set.iter().map(|r| r.text.as_str()).collect();
            let vocab = build_vocab(&texts, cfg.max_vocab)?;
            let model_cfg = cfg.model.to_config(vocab.size(), cfg.seed);
            let train_cfg = trainer::TrainConfig {
                optimizer: cfg.optimizers[0],
                ..cfg.train.clone()
            };
            let outcome = trainer::train(&model_cfg, &train_cfg, &train_set, &dev_set, &vocab)?;
            let mut writer = ArtifactWriter::new(&out_dir)?;
            writer.write("vocab.txt", vocab.serialize().as_bytes())?;
            writer.write("checkpoint.bin", &outcome.checkpoint.to_bytes())?;
            writer.write(
                "train_history.json",
                serde_json::to_string_pretty(&outcome.history)
                    .expect("json")
                    .as_bytes(),
            )?;
            for stats in &outcome.history {
                println!(
                    "epoch {}: train loss {:.4}, dev loss {:.4}, out-of-class {:.4}",
                    stats.epoch, stats.train_loss, stats.dev_loss, stats.dev_out_of_class_rate
                );
            }
            println!(
                "saved epoch-{} checkpoint (dev loss {:.4}) under {}",
                outcome.checkpoint.epoch,
                outcome.checkpoint.val_loss,
                out_dir.display()
            );
            Ok(())
        }
        Command::Predict {
            checkpoint,
            vocab,
            input,
            no_labels,
            skip_header,
            output,
            audit,
            fallback_class,
        } => {
            if fallback_class > 1 {
                return Err(Error::Invalid(format!(
                    "fallback class {fallback_class} outside {{0, 1}}"
                )));
            }
            let ckpt = Checkpoint::load(&checkpoint)?;
            let vocab_text = std::fs::read_to_string(&vocab)
                .map_err(|e| Error::Io(format!("{}: {e}", vocab.display())))?;
            let vocab = Vocabulary::parse(&vocab_text)?;
            let records = read_records(&input, !no_labels, skip_header)?;
            // Cleaning is idempotent, so this is safe on pre-cleaned input.
            let cleaned: Vec<corpus::ParagraphRecord> = records
                .iter()
                .map(|rec| corpus::ParagraphRecord {
                    text: textprep::clean(&rec.text).0,
                    ..rec.clone()
                })
                .collect();
            let preds = predictor::predict_file(&ckpt, &vocab, &cleaned, fallback_class)?;
            std::fs::write(&output, predictor::format_label_lines(&preds))
                .map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
            if let Some(audit_path) = audit {
                std::fs::write(&audit_path, predictor::format_audit_jsonl(&preds))
                    .map_err(|e| Error::Io(format!("{}: {e}", audit_path.display())))?;
            }
            println!(
                "wrote {} predictions to {} (out-of-class rate {:.4})",
                preds.len(),
                output.display(),
                predictor::out_of_class_rate(&preds)
            );
            Ok(())
        }
        Command::Evaluate {
            gold,
            predictions,
            skip_header,
            out_dir,
        } => {
            let gold_records = read_records(&gold, true, skip_header)?;
            let golds: Vec<u8> = gold_records
                .iter()
                .map(|r| r.binary_label.expect("parsed with labels"))
                .collect();
            let pred_text = std::fs::read_to_string(&predictions)
                .map_err(|e| Error::Io(format!("{}: {e}", predictions.display())))?;
            let preds: Vec<u8> = pred_text
                .lines()
                .enumerate()
                .map(|(i, line)| {
                    line.trim().parse::<u8>().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("prediction {line:?} is not an integer label"),
                    })
                })
                .collect::<Result<_>>()?;
            let cm = metrics::confusion(&preds, &golds)?;
            let report = metrics::macro_report(&cm);
            let mut writer = ArtifactWriter::new(&out_dir)?;
            writer.write(
                "metrics.json",
                serde_json::to_string_pretty(&report)
                    .expect("json")
                    .as_bytes(),
            )?;
            writer.write("metrics.txt", report.render_text().as_bytes())?;
            writer.write("confusion.svg", report.render_svg().as_bytes())?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::Ablate {
            out_dir,
            fractions,
            optimizers,
            flags,
        } => {
            let mut overrides = flags.to_overrides()?;
            if !fractions.is_empty() {
                overrides.fractions = Some(fractions);
            } else if overrides.dev_fraction.is_none() {
                overrides.fractions = Some(ABLATION_FRACTIONS.to_vec());
            }
            let mut cfg = ExperimentConfig::load(flags.config.as_deref(), &overrides)?;
            if !optimizers.is_empty() {
                cfg.optimizers = parse_optimizers(&optimizers)?;
            }
            let report = pipeline::run_ablation(&cfg, &out_dir)?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::CompareOptimizers {
            out_dir,
            optimizers,
            flags,
        } => {
            let mut overrides = flags.to_overrides()?;
            overrides.dev_fraction = Some(flags.dev_fraction.unwrap_or(0.1));
            let mut cfg = ExperimentConfig::load(flags.config.as_deref(), &overrides)?;
            cfg.optimizers = if optimizers.is_empty() {
                vec![OptimizerKind::Adam, OptimizerKind::AdamW]
            } else {
                parse_optimizers(&optimizers)?
            };
            let report = pipeline::compare_optimizers(&cfg, &out_dir)?;
            print!("{}", report.render_text());
            Ok(())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits; everything else is a
            // usage error.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(pcl_cli::exit_code(&err));
    }
}
