use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ctmt_core::corpus_io;
use ctmt_core::miner::SamplerConfig;
use ctmt_core::pipeline::files::{self, ModelOutputs};
use ctmt_core::pipeline::{self, Corpus, Mode, PipelineConfig, PipelineError};

/// Template-based constrained translation toolkit.
#[derive(Debug, Parser)]
#[command(name = "ctmt", version)]
struct Cli {
    #[arg(long, global = true, default_value = "lexical")]
    mode: Mode,
    /// JSON file describing reserved tokens and registered tags.
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    shards: usize,
    /// Shell command run as the external translator.
    #[arg(long, global = true)]
    translator: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long)]
    tgt: Option<PathBuf>,
    /// Constraints JSONL, one line per sentence.
    #[arg(long)]
    constraints: Option<PathBuf>,
    /// Spans JSONL matching the constraints file.
    #[arg(long)]
    spans: Option<PathBuf>,
    /// Use a generated corpus of this many sentences instead of files.
    #[arg(long, conflicts_with_all = ["src", "tgt", "constraints", "spans"])]
    synthetic: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serialize a training bitext into train.xprime / train.yprime.
    Prepare {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Build encoder inputs and decoder prefixes for test sentences.
    Encode {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        constraints: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Reconstruct translations from model outputs.
    Decode {
        /// Directory written by `encode`.
        #[arg(long, default_value = ".")]
        work: PathBuf,
        /// Model outputs, one per line. Required unless --translator is given.
        #[arg(long)]
        outputs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Draw simulated constraints from word-aligned data.
    Sample {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        tgt: PathBuf,
        /// Pharaoh alignments.
        #[arg(long)]
        align: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_constraints: usize,
        #[arg(long, default_value_t = 1)]
        min_len: usize,
        #[arg(long, default_value_t = 3)]
        max_len: usize,
    },
    /// Score hypotheses against references.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-sentence scores as TSV.
        #[arg(long)]
        per_sentence: Option<PathBuf>,
    },
    /// Prepare, echo gold outputs, decode and check every metric is perfect.
    Roundtrip {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Measure serialization and reconstruction throughput.
    Bench {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = pipeline::DEFAULT_BASELINE_TPS)]
        baseline_tps: f64,
    },
}

fn config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let vocab = match &cli.vocab {
        Some(path) => corpus_io::read_vocab(path)?,
        None => Default::default(),
    };
    let cfg = PipelineConfig {
        mode: cli.mode,
        vocab,
        sampler: SamplerConfig {
            rng_seed: cli.seed,
            ..Default::default()
        },
        shards: cli.shards,
        translator: cli.translator.clone(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load(cfg: &PipelineConfig, args: &CorpusArgs) -> Result<Corpus, PipelineError> {
    if let Some(n) = args.synthetic {
        return Ok(pipeline::synthetic_corpus(cfg, n));
    }
    let (Some(src), Some(tgt)) = (&args.src, &args.tgt) else {
        return Err(PipelineError::Usage("--src and --tgt are required unless --synthetic is given".into()));
    };
    let (constraints, spans) = match cfg.mode {
        Mode::Lexical => (args.constraints.as_deref(), args.spans.as_deref()),
        Mode::Structural => (None, None),
    };
    files::load_corpus(src, tgt, constraints, spans)
}

fn print(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    std::fs::write(path, text).map_err(|source| {
        corpus_io::CorpusError::Io {
            path: path.to_owned(),
            source,
        }
        .into()
    })
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = config(&cli)?;
    match cli.command {
        Command::Prepare { corpus, out } => {
            let corpus = load(&cfg, &corpus)?;
            let prepared = files::run_prepare(&cfg, &corpus, &out)?;
            print(&json!({
                "prepared": prepared.lines.len(),
                "skipped": prepared.skipped.len(),
                "skipped_lines": prepared.skipped,
            }));
        }
        Command::Encode { src, constraints, out } => {
            let lines = files::run_encode(&cfg, &src, constraints.as_deref(), &out)?;
            let dropped = lines.iter().filter(|l| l.meta.note.is_some()).count();
            print(&json!({ "encoded": lines.len(), "noted": dropped }));
        }
        Command::Decode { work, outputs, out, audit } => {
            let source = match (outputs, &cfg.translator) {
                (Some(path), _) => ModelOutputs::File(path),
                (None, Some(cmd)) => ModelOutputs::Translator(cmd.clone()),
                (None, None) => return Err(PipelineError::Usage("decode needs --outputs or --translator".into())),
            };
            let out = out.unwrap_or_else(|| work.join("test.hyp"));
            let audit = audit.unwrap_or_else(|| work.join(files::AUDIT));
            let decoded = files::run_decode(&cfg, &work, &source, &out, &audit)?;
            print(&json!({
                "lines": decoded.translations.len(),
                "template_accuracy": decoded.template_accuracy(),
                "fallbacks": decoded.audit.iter().filter(|a| a.fallback).count(),
                "omitted_y": decoded.audit.iter().map(|a| a.omitted_y).sum::<usize>(),
            }));
        }
        Command::Sample {
            src,
            tgt,
            align,
            out,
            max_constraints,
            min_len,
            max_len,
        } => {
            cfg.sampler = SamplerConfig {
                max_constraints,
                min_len,
                max_len,
                rng_seed: cli.seed,
            };
            cfg.validate()?;
            let n = files::run_sample(&cfg, &src, &tgt, &align, &out)?;
            print(&json!({ "constraints": n }));
        }
        Command::Evaluate {
            hyp,
            reference,
            constraints,
            out,
            per_sentence,
        } => {
            let records = files::load_records(&hyp, &reference, constraints.as_deref())?;
            let report = files::run_evaluate(&cfg, &records, per_sentence.as_deref())?;
            match out {
                Some(path) => write_json(&path, &report)?,
                None => print(&report),
            }
        }
        Command::Roundtrip { corpus } => {
            let corpus = load(&cfg, &corpus)?;
            let report = pipeline::roundtrip(&cfg, &corpus)?;
            print(&report);
            if !report.passed() {
                return Err(PipelineError::Invariant(report.breaches));
            }
        }
        Command::Bench { corpus, baseline_tps } => {
            let corpus = load(&cfg, &corpus)?;
            let report = pipeline::bench(&cfg, &corpus, baseline_tps)?;
            print(&report);
            if !report.within_budget {
                return Err(PipelineError::Invariant(vec![format!(
                    "reconstruction costs {:.4} of the baseline per-token time",
                    report.reconstruct_cost_ratio
                )]));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CTMT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
