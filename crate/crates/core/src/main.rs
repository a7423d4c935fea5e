use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ftle_verify::experiment::{
    cmd_attractors, cmd_certify, cmd_ftle, cmd_metrics, cmd_render, cmd_sweep, cmd_train, ExperimentConfig,
};
use ftle_verify::io::Colormap;
use ftle_verify::Error;

const EXIT_USAGE: u8 = 1;

/// FTLE fields, attractor maps, safety metrics and stability certificates
/// for deterministic control policies.
#[derive(Parser)]
#[command(name = "ftle-verify", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// FTLE field CSV, heatmap and summary.
    Ftle(Common),
    /// Final-state histogram, heatmap and peak list.
    Attractors(Common),
    /// MBR, ASAS and TASAS report.
    Metrics(Common),
    /// (δ, ε) certificate, from a field over a region or directly from σ_max.
    Certify {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sigma_max: Option<f64>,
        #[arg(long = "t-int")]
        t_int: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Tabular Q-learning with checkpoint export.
    Train(Common),
    /// Metrics table across checkpoint files.
    Sweep(Common),
    /// Heatmap from a field or histogram CSV.
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "ramp")]
        colormap: Colormap,
        #[arg(long, default_value_t = 8)]
        upscale: usize,
    },
}

fn load(c: &Common) -> ftle_verify::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cmd: Command) -> ftle_verify::Result<Vec<PathBuf>> {
    match cmd {
        Command::Ftle(c) => cmd_ftle(&load(&c)?),
        Command::Attractors(c) => cmd_attractors(&load(&c)?),
        Command::Metrics(c) => cmd_metrics(&load(&c)?),
        Command::Train(c) => cmd_train(&load(&c)?),
        Command::Sweep(c) => cmd_sweep(&load(&c)?),
        Command::Certify { config, out, sigma_max, t_int, epsilon } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig { output_dir: PathBuf::from("."), ..Default::default() },
            };
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.sigma_max = sigma_max.or(cfg.sigma_max);
            cfg.t_int = t_int.unwrap_or(cfg.t_int);
            cfg.epsilon = epsilon.or(cfg.epsilon);
            cfg.validate()?;
            cmd_certify(&cfg)
        }
        Command::Render { input, output, colormap, upscale } => Ok(vec![cmd_render(&input, &output, colormap, upscale)?]),
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FTLE_VERIFY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FTLE_VERIFY_THREADS=`{v}` is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) | Error::Asymmetric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
