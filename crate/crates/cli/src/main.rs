use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fuzzy_zsl::checkpoint::Checkpoint;
use fuzzy_zsl::data::{generate_synthetic, load_dataset, load_hierarchy, save_dataset, Dataset, SyntheticSpec};
use fuzzy_zsl::fol::{builtin_axioms, format_axiom, parse_axioms, validate_all, Axiom, Signature};
use fuzzy_zsl::gradsuite::{gradient_suite, STEP, TOLERANCE};
use fuzzy_zsl::infer::{evaluate, gamma_sweep, SweepRow};
use fuzzy_zsl::trainer::{evaluate_sat, train, TrainConfig};
use fuzzy_zsl::Error;
use log::{info, warn};

const MANIFEST: &str = "dataset.json";
const DEFAULT_SWEEP: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Parser)]
#[command(
    name = "fuzzy-zsl",
    version,
    about = "Fuzzy-logic knowledge bases for zero-shot classification"
)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset plus a matching training config.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        seen: usize,
        #[arg(long, default_value_t = 4)]
        unseen: usize,
        #[arg(long, default_value_t = 16)]
        attr_dim: usize,
        #[arg(long, default_value_t = 32)]
        feat_dim: usize,
        #[arg(long, default_value_t = 25)]
        per_class: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of macroclasses (`class % q`); 0 omits the hierarchy.
        #[arg(long, default_value_t = 3)]
        macros: usize,
    },
    /// Train on a config file; writes the checkpoint and history.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the epoch count in the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint; writes report.json next to it.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: PathBuf,
        /// Calibration for seen classes; chosen by the sweep when absent.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Where to write the report (default: CHECKPOINT/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the truth of every axiom on the training split.
    Sat {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Axiom file; the built-in knowledge base when absent.
        #[arg(long)]
        axioms: Option<PathBuf>,
    },
    /// Run the finite-difference gradient suite.
    CheckGrad {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Validate and pretty-print a knowledge base.
    Parse {
        #[arg(long)]
        axioms: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            let validation = err
                .chain()
                .any(|e| e.downcast_ref::<Error>().is_some_and(Error::is_validation));
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::GenData {
            out,
            seen,
            unseen,
            attr_dim,
            feat_dim,
            per_class,
            noise,
            seed,
            macros,
        } => {
            let spec = SyntheticSpec {
                c_seen: seen,
                c_unseen: unseen,
                m: attr_dim,
                b_in: feat_dim,
                n_per_class: per_class,
                noise_std: noise,
                seed,
                macros: (macros > 0).then_some(macros),
                ..SyntheticSpec::default()
            };
            let ds = generate_synthetic(&spec)?;
            save_dataset(&ds, &out.join(MANIFEST))?;
            let mut config = TrainConfig::synthetic();
            config.dataset = Some(MANIFEST.into());
            config.seed = seed;
            config.k_mask = config.k_mask.min(attr_dim);
            config.axiom_flags.phi2 = ds.hierarchy.is_some();
            write_json(&out.join("train.json"), &config)?;
            println!(
                "wrote {} samples ({} seen, {} unseen classes) to {}",
                ds.len(),
                seen,
                unseen,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            config,
            out,
            seed,
            epochs,
        } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = TrainConfig::from_json(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(epochs) = epochs {
                cfg.epochs = epochs;
            }
            let base = config.parent().unwrap_or(Path::new("."));
            let Some(manifest) = &cfg.dataset else {
                return Err(Error::Config("training config names no `dataset`".into()).into());
            };
            let mut ds = load_dataset(&base.join(manifest))?;
            if let Some(h) = &cfg.hierarchy {
                ds.hierarchy = Some(load_hierarchy(&base.join(h), &ds)?);
            }
            let axioms = match &cfg.axioms {
                Some(file) => read_axioms(&base.join(file))?,
                None => builtin_axioms(),
            };
            let (checkpoint, history) = train(&ds, &axioms, &cfg)?;
            checkpoint.save(&out)?;
            write_json(&out.join("history.json"), &history)?;
            if let Some(last) = history.last() {
                println!("epoch {}: loss {:.4}, sat {:.4}", last.epoch, last.loss, last.sat);
            }
            println!("checkpoint written to {}", out.display());
            if let Some(reason) = &history.aborted {
                eprintln!("training stopped early: {reason}");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            checkpoint,
            data,
            gamma,
            sweep,
            report,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ds = open_dataset(&data)?;
            let gammas = sweep.unwrap_or_else(|| DEFAULT_SWEEP.to_vec());
            if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
                return Err(Error::Parameter(format!("sweep value {g} is not a non-negative number")).into());
            }
            let rows = gamma_sweep(&ck.model, &ds, &gammas)?;
            let gamma = match gamma {
                Some(g) => g,
                None => {
                    let g = rows.iter().find(|r| r.best).expect("sweep flags a row").gamma;
                    info!("using sweep-selected gamma {g}");
                    g
                }
            };
            let result = evaluate(&ck.model, &ds, gamma)?;
            print_sweep(&rows);
            println!();
            println!(
                "gamma {gamma}: T1 {:.4}  U {:.4}  S {:.4}  H {:.4}",
                result.t1, result.u, result.s, result.h
            );
            for row in &result.per_class {
                if row.samples == 0 {
                    warn!("class {} has no test samples", row.class);
                }
            }
            let path = report.unwrap_or_else(|| checkpoint.join("report.json"));
            let doc = serde_json::json!({ "report": result, "sweep": rows });
            write_json(&path, &doc)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sat {
            checkpoint,
            data,
            axioms,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ds = open_dataset(&data)?;
            let axioms = match axioms {
                Some(path) => read_axioms(&path)?,
                None => builtin_axioms(),
            };
            let report = evaluate_sat(&ck.model, &ds, &ds.splits.train, &axioms, &ck.config, &ck.fuzzy)?;
            for (name, truth) in &report.axioms {
                println!("{name:<12} {truth:.6}");
            }
            for name in &report.omitted {
                println!("{name:<12} (vacuous, omitted)");
            }
            println!("{:<12} {:.6}", "sat", report.sat);
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckGrad { seed } => {
            let entries = gradient_suite(seed)?;
            let mut worst = 0.0f64;
            for e in &entries {
                worst = worst.max(e.max_rel_error);
                let mark = if e.passed() { "ok" } else { "FAIL" };
                println!(
                    "{:<18} {:>5} coords  {:.3e}  {mark}",
                    e.name, e.coordinates, e.max_rel_error
                );
            }
            println!("max relative error {worst:.3e} (step {STEP:e}, tolerance {TOLERANCE:e})");
            if entries.iter().all(|e| e.passed()) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Parse { axioms } => {
            for ax in read_axioms(&axioms)? {
                println!("{}", format_axiom(&ax));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// The error chain joined by `: `, skipping causes a parent already quotes.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Accepts a dataset directory (holding `dataset.json`) or a manifest.
fn open_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let manifest = if path.is_dir() {
        path.join(MANIFEST)
    } else {
        path.to_path_buf()
    };
    if !manifest.exists() {
        bail!("no dataset manifest at {}", manifest.display());
    }
    Ok(load_dataset(&manifest)?)
}

fn read_axioms(path: &Path) -> anyhow::Result<Vec<Axiom>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let axioms = parse_axioms(&text).with_context(|| path.display().to_string())?;
    validate_all(&axioms, &Signature::standard()).with_context(|| path.display().to_string())?;
    Ok(axioms)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_sweep(rows: &[SweepRow]) {
    println!("{:>6}  {:>6}  {:>6}  {:>6}", "gamma", "U", "S", "H");
    for r in rows {
        let mark = if r.best { "  *" } else { "" };
        println!("{:>6.2}  {:>6.4}  {:>6.4}  {:>6.4}{mark}", r.gamma, r.u, r.s, r.h);
    }
}
