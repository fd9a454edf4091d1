use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use kicktop_cli::{presets, CliError, ExperimentConfig, Outputs, Overrides, Runner};

/// Classical and quantum chaos experiments on the kicked top.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// TOML configuration; defaults (or the preset) apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Kick strengths, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    gamma: Option<Vec<f64>>,
    #[arg(long, global = true)]
    j: Option<u32>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Orbits from random initial points.
    Poincare,
    /// Lyapunov exponents on the grid, the cut and the classification.
    LyapunovMap,
    /// KS entropy against the kick strength.
    KsScan,
    /// Quasienergies at `j`, optionally with eigenvectors.
    Spectrum,
    /// Rescaled mean spacing ratio against the kick strength.
    RstatScan,
    /// Husimi functions of selected eigenstates at `j`.
    Husimi,
    /// Overlap indices of every eigenstate at `j`.
    Overlap,
    /// Histograms of the overlap index per ensemble.
    PmHist,
    /// Mixed-state fractions and their power-law fits.
    Fmix,
    /// Decay exponent of sliding overlap windows.
    ZetaScan,
    /// Print the effective configuration as TOML.
    ShowConfig,
    #[command(name = "reproduce-fig1")]
    ReproduceFig1,
    #[command(name = "reproduce-fig2")]
    ReproduceFig2,
    #[command(name = "reproduce-fig3")]
    ReproduceFig3,
    #[command(name = "reproduce-fig4")]
    ReproduceFig4,
    #[command(name = "reproduce-fig5")]
    ReproduceFig5,
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    if let Some(path) = &cli.config {
        return ExperimentConfig::load(path);
    }
    Ok(match cli.command {
        Command::ReproduceFig1 => presets::fig1(),
        Command::ReproduceFig2 => presets::fig2(),
        Command::ReproduceFig3 => presets::fig3(),
        Command::ReproduceFig4 => presets::fig4(),
        Command::ReproduceFig5 => presets::fig5(),
        _ => ExperimentConfig::default(),
    })
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = base_config(cli)?;
    Overrides {
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
        workers: cli.workers,
        gammas: cli.gamma.clone(),
        j: cli.j,
        alpha: cli.alpha,
    }
    .apply(&mut cfg);
    cfg.validate()?;
    if cli.command == Command::ShowConfig {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut r = Runner::new(cfg)?;
    let result = stages(&mut r, cli.command);
    // the manifest lists whatever was written, even after a failure
    r.finish()?;
    result
}

fn stages(r: &mut Runner, command: Command) -> Result<(), CliError> {
    let only = |f: fn(&mut Outputs)| {
        let mut o = Outputs::NONE;
        f(&mut o);
        o
    };
    match command {
        Command::Poincare => r.run_poincare(),
        Command::LyapunovMap => r.run_lyapunov(),
        Command::KsScan => r.run_ks_scan().map(drop),
        Command::Spectrum => r.run_spectrum(),
        Command::RstatScan => r.run_rstat_scan().map(drop),
        Command::Husimi => r.run_husimi(),
        Command::Overlap => r.run_overlap(),
        Command::PmHist => r.run_overlap_pipeline(only(|o| o.pm_hist = true)).map(drop),
        Command::Fmix => r.run_overlap_pipeline(only(|o| o.fmix = true)).map(drop),
        Command::ZetaScan => r.run_overlap_pipeline(only(|o| o.zeta_scan = true)).map(drop),
        Command::ShowConfig => Ok(()),
        Command::ReproduceFig1 => {
            r.run_poincare()?;
            r.run_lyapunov()
        }
        Command::ReproduceFig2 => {
            r.run_ks_scan()?;
            r.run_rstat_scan().map(drop)
        }
        Command::ReproduceFig3 => {
            r.run_poincare()?;
            r.run_overlap_pipeline(Outputs::ALL).map(drop)
        }
        Command::ReproduceFig4 => r.run_overlap_pipeline(only(|o| o.fmix = true)).map(drop),
        Command::ReproduceFig5 => r.run_overlap_pipeline(only(|o| o.zeta_scan = true)).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli).with_context(|| format!("{:?} failed", cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<CliError>().map_or(2, CliError::exit_code);
            log::error!("{e:#}");
            ExitCode::from(code)
        }
    }
}
