//! Configuration-driven experiments over `resonat-core`: each command reads a
//! TOML scenario, runs one pipeline, and writes CSV/JSON artifacts plus a
//! `manifest.json`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<resonat_core::Error> for CliError {
    fn from(e: resonat_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o failure: {e}"))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "resonat", version, about = "Resonance expansion and far-field imaging experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues (and optionally modes) of the volume operator.
    Spectrum(Common),
    /// α/β expansion coefficients and the truncation curve.
    Expand(Common),
    /// Im G profiles in the high-contrast and homogeneous media.
    Psf(Common),
    /// Far-field data synthesis and reconstruction.
    Image(Common),
    /// Helmholtz-Kirchhoff residual over a sweep of surface radii.
    HkCheck(Common),
    /// Two-source L1 recovery over a sweep of separations.
    SweepSeparation(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Expand(_) => "expand",
            Command::Psf(_) => "psf",
            Command::Image(_) => "image",
            Command::HkCheck(_) => "hk-check",
            Command::SweepSeparation(_) => "sweep-separation",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Spectrum(c)
            | Command::Expand(c)
            | Command::Psf(c)
            | Command::Image(c)
            | Command::HkCheck(c)
            | Command::SweepSeparation(c) => c,
        }
    }
}

/// Caps the rayon pool at `RESONAT_THREADS` and pins faer to sequential
/// kernels so results do not depend on the thread count.
pub fn configure_threads() -> Result<(), CliError> {
    faer::set_global_parallelism(faer::Par::Seq);
    let Ok(v) = std::env::var("RESONAT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("RESONAT_THREADS must be a positive integer, got `{v}`")))?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (program name first) and runs the command in-process.
pub fn run_from<I, T>(args: I) -> Result<PathBuf, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run(cli)
}

pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    configure_threads()?;
    let common = cli.command.common();
    let scenario = config::parse(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| scenario.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut writer = output::OutputDir::create(&out, cli.command.name(), &scenario)?;
    match cli.command {
        Command::Spectrum(_) => commands::spectrum(&scenario, &mut writer)?,
        Command::Expand(_) => commands::expand(&scenario, &mut writer)?,
        Command::Psf(_) => commands::psf(&scenario, &mut writer)?,
        Command::Image(_) => commands::image(&scenario, &mut writer)?,
        Command::HkCheck(_) => commands::hk_check(&scenario, &mut writer)?,
        Command::SweepSeparation(_) => commands::sweep_separation(&scenario, &mut writer)?,
    }
    writer.finish()?;
    Ok(out)
}
