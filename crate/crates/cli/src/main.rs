//! `csi-sense`: generate, validate, featurize, train, evaluate and report.

mod config;
mod data;
mod error;
mod report;
mod run;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use csi_sensing::features::{
    extract_chart_feature, extract_pos_feature, extract_rffi_feature, write_feature_csv, write_feature_file,
    FeatureKind,
};
use csi_sensing::ingest::{DatasetReader, DatasetWriter, Flags};
use csi_sensing::model::DatasetValidator;
use csi_sensing::synthgen::Preset;

use config::{resolve, ExperimentConfig, Overrides, Pipeline};
use data::{preset_file_names, scenarios, Source};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "csi-sense", version, about = "CSI positioning, channel charting and device classification")]
struct Cli {
    /// Experiment config (TOML); defaults apply to every key it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long, global = true)]
    pipeline: Option<Pipeline>,
    /// Output directory (file for `report`). Defaults to a name under the output root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, global = true, env = "CSI_SENSE_OUT", default_value = "runs")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic datasets for the preset.
    Gen,
    /// Extract one feature type from the configured data.
    Features {
        #[arg(long, value_enum, default_value = "pos")]
        kind: Kind,
        #[arg(long, value_enum, default_value = "binary")]
        format: FeatureFormat,
    },
    /// Extract, split, train and evaluate the configured pipeline.
    Run,
    /// Compare finished runs.
    Report {
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: ReportFormat,
    },
    /// Check dataset files (or the configured datasets) against every invariant.
    Validate { files: Vec<PathBuf> },
    /// Print the fully resolved config.
    ShowConfig,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Pos,
    Chart,
    Rffi,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureFormat {
    Binary,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Markdown,
    Csv,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    Preset::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
        format!("unknown preset `{s}`, expected one of {}", names.join(", "))
    })
}

impl Cli {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        resolve(
            self.config.as_deref(),
            &Overrides {
                seed: self.seed,
                preset: self.preset,
                pipeline: self.pipeline,
            },
        )
    }

    fn out_dir(&self, default_name: String) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.out_root.join(default_name))
    }
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn cmd_gen(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    let dir = cli.out_dir(format!("{}-seed{}", cfg.preset.name(), cfg.seed));
    make_dir(&dir)?;
    let scen = scenarios(&cfg)?;
    let names = preset_file_names(cfg.preset, scen.len());
    for (s, name) in scen.iter().zip(names) {
        let path = dir.join(&name);
        let flags = Flags {
            positions: s.label_positions,
            device_ids: s.label_devices,
            orientation: false,
        };
        let mut w = DatasetWriter::new(create(&path)?, &s.meta, flags, s.num_samples() as u64)?;
        let mut power = Vec::with_capacity(s.num_samples());
        for sample in s.stream()? {
            let sample = sample?;
            let energy: f64 = sample.csi.as_slice().iter().map(|c| c.norm_sqr()).sum();
            power.push(10.0 * (energy / sample.csi.as_slice().len() as f64).log10());
            w.write_sample(&sample)?;
        }
        let bytes = w.finish()?;
        let (lo, hi) = power.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        let mean = power.iter().sum::<f64>() / power.len().max(1) as f64;
        println!(
            "{}: {} samples, {bytes} bytes, snr {} dB, mean csi power {mean:.1} dB (min {lo:.1}, max {hi:.1})",
            path.display(),
            power.len(),
            s.snr_db,
        );
    }
    Ok(())
}

fn cmd_features(cli: &Cli, kind: Kind, format: FeatureFormat) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    let source = Source::for_config(&cfg)?;
    let mut rows = Vec::new();
    let mut shape = Vec::new();
    for sample in source.samples()? {
        let sample = sample?;
        let (row, s) = match kind {
            Kind::Pos => {
                let f = extract_pos_feature(&sample)?;
                let n = f.0.len();
                (f.0, vec![n])
            }
            Kind::Chart => {
                let f = extract_chart_feature(&sample, cfg.taps)?;
                let n = f.0.len();
                (f.0, vec![n])
            }
            Kind::Rffi => {
                let f = extract_rffi_feature(&sample)?;
                (csi_sensing::classify::rffi_input(&f), f.shape().to_vec())
            }
        };
        shape = s;
        rows.push(row);
    }
    let dir = cli.out_dir(format!("features-{}-seed{}", cfg.preset.name(), cfg.seed));
    make_dir(&dir)?;
    let (name, fk) = match kind {
        Kind::Pos => ("pos", FeatureKind::Position),
        Kind::Chart => ("chart", FeatureKind::Chart),
        Kind::Rffi => ("rffi", FeatureKind::Rffi),
    };
    let path = match format {
        FeatureFormat::Binary => dir.join(format!("{name}.csif")),
        FeatureFormat::Csv => dir.join(format!("{name}.csv")),
    };
    let mut w = create(&path)?;
    match format {
        FeatureFormat::Binary => write_feature_file(&mut w, fk, &shape, &rows)?,
        FeatureFormat::Csv => write_feature_csv(&mut w, &rows)?,
    }
    w.flush().map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    println!("{}: {} rows of shape {shape:?}", path.display(), rows.len());
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    let dir = cli.out_dir(format!("{}-{}-seed{}", cfg.pipeline.name(), cfg.preset.name(), cfg.seed));
    let metrics = run::run(&cfg, &dir)?;
    println!("{}", serde_json::to_string_pretty(&metrics).expect("json values serialize"));
    println!("run directory: {}", dir.display());
    Ok(())
}

fn cmd_report(cli: &Cli, runs: &[PathBuf], format: ReportFormat) -> Result<(), CliError> {
    let rows = report::load_rows(runs)?;
    let text = match format {
        ReportFormat::Markdown => report::markdown(&rows),
        ReportFormat::Csv => report::csv(&rows),
    };
    match &cli.out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(format!("writing {}", p.display()), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(cli: &Cli, files: &[PathBuf]) -> Result<(), CliError> {
    let files = if files.is_empty() {
        cli.resolve()?.datasets
    } else {
        files.to_vec()
    };
    if files.is_empty() {
        return Err(CliError::Config("no datasets to validate".into()));
    }
    let mut failed = 0;
    for path in &files {
        let f = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
        let reader = DatasetReader::open(BufReader::new(f))?;
        let mut v = DatasetValidator::new(reader.meta());
        let n = reader.len();
        for s in reader {
            v.push(&s?);
        }
        let report = v.finish();
        println!("{}: {n} samples, {report}", path.display());
        if !report.is_pass() {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} of {} datasets failed validation", files.len())));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen => cmd_gen(cli),
        Command::Features { kind, format } => cmd_features(cli, *kind, *format),
        Command::Run => cmd_run(cli),
        Command::Report { runs, format } => cmd_report(cli, runs, *format),
        Command::Validate { files } => cmd_validate(cli, files),
        Command::ShowConfig => {
            print!("{}", cli.resolve()?.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csi-sense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
