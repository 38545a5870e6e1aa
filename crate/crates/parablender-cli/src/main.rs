use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use parablender::scenarios::{run_pipeline, Pipeline, PipelineReport, ScenarioConfig};
use parablender::Error;

#[derive(Parser)]
#[command(
    name = "parablender",
    version,
    about = "Certified blender and parablender pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plain and jet fiber covering, Lebesgue number, delta bound.
    Covering(Opts),
    /// Random horizontal discs against the affine blender.
    Blender(Opts),
    /// Tangency with a folding manifold through the Grassmannian blender.
    Tangency(Opts),
    /// Jet witnesses for robust cycle unfolding.
    CycleUnfolding(Opts),
    /// Jet-Grassmannian witnesses for unfolding tangencies.
    Paratangency(Opts),
    /// Derivative bounds for the folding disc.
    AppendixVerify(Opts),
    /// Perturbation ladder over every pipeline.
    Sweep(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct Opts {
    /// TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the report, the config record and the table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

impl Command {
    fn split(&self) -> (Pipeline, &Opts) {
        match self {
            Command::Covering(o) => (Pipeline::Covering, o),
            Command::Blender(o) => (Pipeline::Blender, o),
            Command::Tangency(o) => (Pipeline::Tangency, o),
            Command::CycleUnfolding(o) => (Pipeline::CycleUnfolding, o),
            Command::Paratangency(o) => (Pipeline::Paratangency, o),
            Command::AppendixVerify(o) => (Pipeline::AppendixVerify, o),
            Command::Sweep(o) => (Pipeline::Sweep, o),
        }
    }
}

fn load(opts: &Opts) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &opts.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_toml(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn render(report: &PipelineReport, format: Format) -> String {
    match format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
    }
}

fn write_out(
    dir: &PathBuf,
    p: Pipeline,
    cfg: &ScenarioConfig,
    report: &PipelineReport,
    format: Format,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = p.name();
    fs::write(dir.join(format!("{name}.json")), report.to_json())?;
    fs::write(dir.join(format!("{name}.config.toml")), cfg.to_toml())?;
    let ext = match format {
        Format::Text => "txt",
        Format::Csv => "csv",
    };
    fs::write(dir.join(format!("{name}.{ext}")), render(report, format))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (pipeline, opts) = cli.command.split();
    let cfg = match load(opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let report = match run_pipeline(pipeline, &cfg) {
        Ok(r) => r,
        Err(Error::Config(msg)) => {
            eprintln!("config rejected: {msg}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    print!("{}", render(&report, opts.format));
    if let Some(dir) = &opts.out {
        if let Err(e) = write_out(dir, pipeline, &cfg, &report, opts.format) {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
