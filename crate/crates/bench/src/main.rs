use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use auxlsm_bench::{cmd_ingest, cmd_query, cmd_repair, cmd_verify, BenchConfig, BenchError, MetricsReport};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "auxlsm-bench", version, about = "Ingestion, query and repair benchmarks for auxlsm")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key=value configuration file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// eager | validation | mutable-bitmap
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// none | merge | standalone | merge-bloom
    #[arg(long, global = true)]
    repair: Option<String>,
    /// lock | sidefile
    #[arg(long, global = true)]
    cc: Option<String>,
    #[arg(long, global = true)]
    records: Option<String>,
    #[arg(long, global = true)]
    update_ratio: Option<String>,
    /// uniform | zipf | seq
    #[arg(long, global = true)]
    dist: Option<String>,
    /// Comma-separated fractions, e.g. 0.0001,0.01,0.2
    #[arg(long, global = true)]
    selectivities: Option<String>,
    #[arg(long, global = true)]
    batch_bytes: Option<String>,
    /// Comma-separated subset of batch,scursor,bbf,pid (or all, none)
    #[arg(long, global = true)]
    opt: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    threads: Option<String>,
    /// CSV output path (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<String>,
    /// Data directory (temporary when omitted)
    #[arg(long, global = true)]
    dir: Option<String>,
    /// Any other configuration key, as key=value; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ingest the workload and report every tenth of it
    Ingest,
    /// Load the workload, then run the selectivity sweep
    Query,
    /// Ingest with periodic full repairs
    Repair,
    /// Replay into the engine and an oracle and diff every query path
    Verify,
}

fn build_config(cli: &Cli) -> Result<BenchConfig, BenchError> {
    let mut cfg = BenchConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let flags = [
        ("strategy", &cli.strategy),
        ("repair", &cli.repair),
        ("cc", &cli.cc),
        ("records", &cli.records),
        ("update_ratio", &cli.update_ratio),
        ("dist", &cli.dist),
        ("selectivities", &cli.selectivities),
        ("batch_bytes", &cli.batch_bytes),
        ("opt", &cli.opt),
        ("seed", &cli.seed),
        ("threads", &cli.threads),
        ("out", &cli.out),
        ("dir", &cli.dir),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in &cli.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| auxlsm_bench::ConfigError {
            field: kv.clone(),
            reason: "--set expects key=value".into(),
        })?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_report(cfg: &BenchConfig, report: &MetricsReport) -> Result<(), BenchError> {
    match &cfg.out {
        Some(path) => report.write_csv(BufWriter::new(File::create(path)?))?,
        None => report.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, BenchError> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Ingest => write_report(&cfg, &cmd_ingest(&cfg)?)?,
        Command::Query => write_report(&cfg, &cmd_query(&cfg)?)?,
        Command::Repair => write_report(&cfg, &cmd_repair(&cfg)?)?,
        Command::Verify => {
            let outcome = cmd_verify(&cfg)?;
            write_report(&cfg, &outcome.report)?;
            let mut err = io::stderr().lock();
            match outcome.mismatches.first() {
                None => writeln!(err, "PASS verify: engine matches the oracle")?,
                Some(first) => {
                    writeln!(err, "FAIL verify: {} mismatches; first: {first}", outcome.mismatches.len())?;
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("auxlsm-bench: {e}");
            ExitCode::from(2)
        }
    }
}
