use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mimo_jscc::formats;
use mimo_jscc::pipeline::{summarize_records, Figure, MetricsRecord};
use mimo_jscc::{ExperimentConfig, Workspace};

#[derive(Parser)]
#[command(name = "mimo-jscc", about = "Adaptive CSI feedback experiments for MIMO deep JSCC")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seeds overriding the config's sweep seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory for artifacts and CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit Lloyd-Max codebooks for every configured bit depth.
    FitQuantizer,
    /// Train the codec for the configured array, plus any sweep arrays with --all.
    TrainCodec {
        #[arg(long)]
        all: bool,
    },
    /// Label the test set (and the training set with --train).
    Label {
        #[arg(long)]
        train: bool,
    },
    /// Train the quality evaluator on training labels.
    TrainEvaluator,
    /// Build the bit-depth penalty table on the validation set.
    Calibrate,
    /// Run one figure sweep and write its CSV.
    Sweep {
        #[arg(long, value_parser = clap::value_parser!(u8).range(4..=6))]
        figure: u8,
    },
    /// Print seed-averaged summaries of sweep CSV files.
    Report {
        files: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if !cli.seeds.is_empty() {
        config.sweep.seeds = cli.seeds.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<bool> {
    if let Command::Report { files } = &cli.command {
        return report(files, &cli.out);
    }
    let config = load_config(&cli)?;
    let ws = Workspace::new(config, Some(&cli.out))?.with_logging(true);
    match &cli.command {
        Command::FitQuantizer => {
            let books = ws.codebooks()?;
            println!("codebooks for bits {:?}", books.bits().collect::<Vec<_>>());
        }
        Command::TrainCodec { all } => {
            ws.main_codec()?;
            if *all {
                for &[nt, nr] in &ws.config.sweep.antennas {
                    ws.codec(nt, nr)?;
                }
            }
        }
        Command::Label { train } => {
            let codec = ws.main_codec()?;
            let set = ws.label(&codec, &ws.datasets.test, "test")?;
            println!("labeled {} test images", set.items.len());
            if *train {
                let set = ws.label(&codec, &ws.datasets.train, "train")?;
                println!("labeled {} training images", set.items.len());
            }
        }
        Command::TrainEvaluator => {
            let codec = ws.main_codec()?;
            let labels = ws.label(&codec, &ws.datasets.train, "train")?;
            ws.evaluator(&labels)?;
        }
        Command::Calibrate => {
            let codec = ws.main_codec()?;
            let table = ws.degradation(&codec, &ws.codebooks()?)?;
            for (b, p) in table.entries() {
                println!("{b} bits: {p:.4} dB");
            }
        }
        Command::Sweep { figure } => {
            let figure = Figure::from_number(*figure)?;
            let seeds = ws.config.sweep.seeds.clone();
            let out = ws.run_figure_sweep(figure, &seeds)?;
            let path = cli.out.join(format!("fig{}_{}.csv", figure.number(), ws.hash));
            formats::write_csv(&path, &out.records)?;
            println!("wrote {} rows to {}", out.records.len(), path.display());
            for v in &out.violations {
                eprintln!("invariant violated: {v}");
            }
            return Ok(out.passed());
        }
        Command::Report { .. } => unreachable!(),
    }
    Ok(true)
}

fn report(files: &[PathBuf], out: &std::path::Path) -> Result<bool> {
    let files = if files.is_empty() {
        let mut found: Vec<PathBuf> = std::fs::read_dir(out)
            .with_context(|| format!("reading {}", out.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        found.sort();
        found
    } else {
        files.to_vec()
    };
    if files.is_empty() {
        bail!("no sweep CSV files found");
    }
    let mut records: Vec<MetricsRecord> = Vec::new();
    for f in &files {
        records.extend(formats::read_csv::<MetricsRecord>(f)?);
    }
    let rows = summarize_records(&records);
    print!("{}", formats::csv_string(&rows)?);
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
