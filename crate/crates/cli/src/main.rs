use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use log::info;
use rebalance::bench::{emit_report, run_benchmark, stability_report, validate_dataset, Method, RunConfig};
use rebalance::nn::gradient_self_test;
use rebalance::Error;

#[derive(Debug, Parser)]
#[command(name = "rebalance", version, about = "Benchmark minority over-samplers on imbalanced binary data")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the cross-validated benchmark grid and write results.csv, summary.json and summary.md.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k_folds: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated subset, e.g. smote,deep_smote.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Re-run the protocol under several over-sampling seeds and report dispersion.
    Stability {
        #[arg(long)]
        config: PathBuf,
        /// Dataset name from the config; defaults to the first one.
        #[arg(long)]
        dataset: Option<String>,
        /// Comma-separated over-sampling seeds.
        #[arg(long, value_delimiter = ',', conflicts_with = "runs")]
        seeds: Option<Vec<u64>>,
        /// Use seeds 1..=RUNS.
        #[arg(long, default_value_t = 10)]
        runs: u64,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load every configured dataset and check it against the registry row.
    ValidateData {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check backprop against finite differences; exits 0 iff every case passes.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 3)]
        inputs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Path) -> RunConfig {
    if !path.is_file() {
        Cli::command()
            .error(ErrorKind::ValueValidation, format!("config file {} does not exist", path.display()))
            .exit();
    }
    match RunConfig::load(path) {
        Ok(cfg) => cfg,
        Err(e) => Cli::command()
            .error(ErrorKind::ValueValidation, format!("invalid config {}: {e}", path.display()))
            .exit(),
    }
}

fn bench(cfg: RunConfig, out: PathBuf) -> anyhow::Result<()> {
    info!(
        "{} datasets × {} methods × {} repeats × {} folds",
        cfg.datasets.len(),
        cfg.methods.len(),
        cfg.repeats,
        cfg.k_folds
    );
    let report = run_benchmark(&cfg)?;
    let files = emit_report(&report, &out)?;
    print!("{}", report.summary_markdown());
    eprintln!(
        "wrote {}, {}, {}",
        files.results_csv.display(),
        files.summary_json.display(),
        files.summary_md.display()
    );
    Ok(())
}

fn stability(cfg: RunConfig, dataset: Option<String>, seeds: Vec<u64>, out: PathBuf) -> anyhow::Result<()> {
    let refs = &cfg.datasets;
    let target = match &dataset {
        None => refs[0].clone(),
        Some(name) => {
            let mut found = None;
            for r in refs {
                if r.load()?.data.name.eq_ignore_ascii_case(name) {
                    found = Some(r.clone());
                    break;
                }
            }
            found.with_context(|| format!("no dataset named {name:?} in the config"))?
        }
    };
    let report = stability_report(&cfg, &target, &seeds)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let md = report.markdown();
    std::fs::write(out.join("stability.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(out.join("stability.md"), &md)?;
    print!("{md}");
    Ok(())
}

/// Returns whether every dataset loaded and matched its registry row.
fn validate(cfg: &RunConfig) -> bool {
    let mut clean = true;
    for d in &cfg.datasets {
        match validate_dataset(d) {
            Ok((loaded, Some(report))) => {
                let ds = &loaded.data;
                println!(
                    "{}: {} rows, {} features, {} positive, {} negative (registry {})",
                    ds.name,
                    ds.len(),
                    ds.n_features(),
                    ds.positives(),
                    ds.negatives(),
                    report.registry
                );
                for w in &report.warnings {
                    println!("  mismatch: {w}");
                }
                clean &= report.is_clean();
            }
            Ok((loaded, None)) => {
                let ds = &loaded.data;
                println!(
                    "{}: {} rows, {} features, {} positive, {} negative (no registry row)",
                    ds.name,
                    ds.len(),
                    ds.n_features(),
                    ds.positives(),
                    ds.negatives()
                );
            }
            Err(e) => {
                println!("error: {e}");
                clean = false;
            }
        }
    }
    clean
}

/// Structured record for a failed job, printed as one JSON line on stderr.
fn error_record(e: &anyhow::Error) -> serde_json::Value {
    match e.downcast_ref::<Error>() {
        Some(Error::Job {
            dataset,
            method,
            repeat,
            fold,
            source,
        }) => serde_json::json!({
            "error": source.to_string(),
            "dataset": dataset,
            "method": method,
            "repeat": repeat,
            "fold": fold,
        }),
        _ => serde_json::json!({ "error": format!("{e:#}") }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Bench {
            config,
            seed,
            k_folds,
            repeats,
            methods,
            out,
            threads,
        } => {
            let mut cfg = load_config(&config);
            if let Some(s) = seed {
                cfg.global_seed = s;
            }
            if let Some(k) = k_folds {
                cfg.k_folds = k;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            if let Err(e) = cfg.validate() {
                Cli::command().error(ErrorKind::ValueValidation, e.to_string()).exit();
            }
            bench(cfg, out)
        }
        Command::Stability {
            config,
            dataset,
            seeds,
            runs,
            methods,
            out,
        } => {
            let mut cfg = load_config(&config);
            if let Some(m) = methods {
                cfg.methods = m;
            }
            let seeds = seeds.unwrap_or_else(|| (1..=runs).collect());
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            stability(cfg, dataset, seeds, out)
        }
        Command::ValidateData { config } => {
            let cfg = load_config(&config);
            return if validate(&cfg) { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
        Command::Gradcheck { cases, inputs, seed } => match gradient_self_test(cases, inputs, seed) {
            Ok(r) => {
                println!(
                    "{} cases, {} parameters, max relative error {:.3e} (tolerance {:.0e}): {}",
                    r.cases,
                    r.parameters_checked,
                    r.max_relative_error,
                    r.tolerance,
                    if r.passed() { "pass" } else { "FAIL" }
                );
                return if r.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
            }
            Err(e) => Err(e.into()),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
