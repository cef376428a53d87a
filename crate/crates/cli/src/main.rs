//! Command-line front-end. Every command writes CSV files with a JSON
//! metadata line into the output directory, plus the effective config as
//! `config.toml`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use config::{Command, Grid, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] counterlase::io::IoError),
    #[error("i/o: {0}")]
    File(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] counterlase::model::ModelError),
    #[error(transparent)]
    Integrate(#[from] counterlase::integrate::IntegrateError),
    #[error(transparent)]
    LocalBif(#[from] counterlase::localbif::BifError),
    #[error(transparent)]
    Kneading(#[from] counterlase::kneading::KneadingError),
    #[error(transparent)]
    Bvp(#[from] counterlase::bvpcont::BvpError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) | CliError::File(_) => "io",
            CliError::Model(_) => "model",
            CliError::Integrate(_) => "integrate",
            CliError::LocalBif(_) => "localbif",
            CliError::Kneading(_) => "kneading",
            CliError::Bvp(_) => "bvpcont",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "counterlase",
    version,
    about = "Lasing, counter-lasing and chaos in the unbalanced Dicke model"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run config (parameters and per-command options).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda_plus: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lambda_minus: Option<f64>,
    /// Parameter grid `lo:hi:step` of the swept command.
    #[arg(long, global = true)]
    grid: Option<Grid>,
    /// Relative integration tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run the command named in the config file.
    Run,
    /// Integrate one trajectory of the reduced or the full system.
    Simulate {
        /// Integrate the full cavity plus spin equations.
        #[arg(long)]
        dicke: bool,
        /// Initial spin state `b_x,b_y,gamma`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Phase labels on a `(lambda_-, lambda_+)` grid and the local bifurcation curves.
    PhaseDiagram,
    /// Closed-form counter-lasing orbit geometry along `lambda_+`.
    PoGeometry,
    /// Kneading sequences of the unstable manifold and their plateaus.
    KneadingSweep,
    /// Equilibrium and periodic-orbit branches with their bifurcations.
    BifDiagram,
    /// Homoclinic orbit of the normal saddle by Lin's method.
    FindHomoclinic {
        /// Loop symbols before the return, e.g. `01`.
        #[arg(long)]
        symbols: Option<String>,
    },
    /// Connection from the normal saddle to the saddle periodic orbit.
    FindEtop {
        #[arg(long)]
        prefix: Option<String>,
        #[arg(long)]
        wraps: Option<usize>,
    },
    /// Paired reduced and full trajectories from one spin state.
    CompareDicke {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Largest Lyapunov exponent, optionally over a `lambda_+` grid.
    Lyapunov {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
    },
}

fn state3(v: &[f64]) -> Result<[f64; 3], CliError> {
    <[f64; 3]>::try_from(v)
        .map_err(|_| CliError::Config(format!("expected 3 components, got {}", v.len())))
}

/// Merges the config file and the flags into the effective config.
fn resolve(cli: &Cli) -> Result<(Command, RunConfig), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let command = match &cli.command {
        Cmd::Run => cfg
            .command
            .ok_or_else(|| CliError::Config("`run` needs a config with a `command` key".into()))?,
        Cmd::Simulate {
            dicke,
            initial,
            t_end,
        } => {
            cfg.simulate.dicke |= *dicke;
            if let Some(v) = initial {
                cfg.simulate.initial = state3(v)?;
            }
            if let Some(t) = t_end {
                cfg.simulate.t_end = *t;
            }
            Command::Simulate
        }
        Cmd::PhaseDiagram => Command::PhaseDiagram,
        Cmd::PoGeometry => Command::PoGeometry,
        Cmd::KneadingSweep => Command::KneadingSweep,
        Cmd::BifDiagram => Command::BifDiagram,
        Cmd::FindHomoclinic { symbols } => {
            if let Some(s) = symbols {
                cfg.find_homoclinic.symbols = s.clone();
            }
            Command::FindHomoclinic
        }
        Cmd::FindEtop { prefix, wraps } => {
            if let Some(s) = prefix {
                cfg.find_etop.prefix = s.clone();
            }
            if let Some(w) = wraps {
                cfg.find_etop.wraps = *w;
            }
            Command::FindEtop
        }
        Cmd::CompareDicke { initial, t_end } => {
            if let Some(v) = initial {
                cfg.compare_dicke.initial = state3(v)?;
            }
            if let Some(t) = t_end {
                cfg.compare_dicke.t_end = *t;
            }
            Command::CompareDicke
        }
        Cmd::Lyapunov { initial } => {
            if let Some(v) = initial {
                cfg.lyapunov.initial = state3(v)?;
            }
            Command::Lyapunov
        }
    };
    cfg.command = Some(command);
    let mut params = cfg.params.unwrap_or_else(|| command.default_params());
    if let Some(lp) = cli.lambda_plus {
        params.lambda_plus = lp;
    }
    if let Some(lm) = cli.lambda_minus {
        params.lambda_minus = lm;
    }
    params.validate()?;
    cfg.params = Some(params);
    if let Some(t) = cli.tol {
        if !(t > 0.0) {
            return Err(CliError::Config(format!("--tol must be positive, got {t}")));
        }
        cfg.rtol = Some(t);
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if let Some(g) = cli.grid {
        apply_grid(command, &mut cfg, g)?;
    }
    Ok((command, cfg))
}

fn apply_grid(command: Command, cfg: &mut RunConfig, g: Grid) -> Result<(), CliError> {
    let window_points = |g: Grid| (g.points().len()).max(2);
    match command {
        Command::PhaseDiagram => cfg.phase_diagram.lambda_plus = g,
        Command::PoGeometry => cfg.po_geometry.lambda_plus = g,
        Command::KneadingSweep => cfg.kneading_sweep.lambda_plus = g,
        Command::Lyapunov => cfg.lyapunov.lambda_plus = Some(g),
        Command::FindHomoclinic => {
            cfg.find_homoclinic.window = [g.lo, g.hi];
            cfg.find_homoclinic.grid_points = window_points(g);
        }
        Command::FindEtop => {
            cfg.find_etop.window = [g.lo, g.hi];
            cfg.find_etop.grid_points = window_points(g);
        }
        Command::Simulate | Command::BifDiagram | Command::CompareDicke => {
            return Err(CliError::Config(format!(
                "--grid is not used by {}",
                command.name()
            )))
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Cmd::Run => "run",
        Cmd::Simulate { .. } => "simulate",
        Cmd::PhaseDiagram => "phase-diagram",
        Cmd::PoGeometry => "po-geometry",
        Cmd::KneadingSweep => "kneading-sweep",
        Cmd::BifDiagram => "bif-diagram",
        Cmd::FindHomoclinic { .. } => "find-homoclinic",
        Cmd::FindEtop { .. } => "find-etop",
        Cmd::CompareDicke { .. } => "compare-dicke",
        Cmd::Lyapunov { .. } => "lyapunov",
    };
    let result = resolve(&cli).and_then(|(command, cfg)| {
        if let Some(n) = cfg.workers {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
        }
        std::fs::create_dir_all(&cli.out)?;
        std::fs::write(cli.out.join("config.toml"), cfg.to_toml())?;
        let failures = commands::run(command, &cfg, &cli.out)?;
        Ok((command, failures))
    });
    match result {
        Ok((_, failures)) if failures.is_empty() => ExitCode::SUCCESS,
        Ok((command, failures)) => {
            let report = json!({
                "status": "partial",
                "command": command.name(),
                "failures": failures,
            });
            eprintln!("{report}");
            ExitCode::from(2)
        }
        Err(e) => {
            let report = json!({
                "status": "error",
                "command": name,
                "kind": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}
