use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;
mod sweep;

/// Exit status 2: the configuration or command line is invalid.
const EXIT_CONFIG: u8 = 2;
/// Exit status 1: a solver failed or a check did not pass.
const EXIT_FAILURE: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("output directory {0} is not empty; pass --force to replace an earlier run")]
    Collision(PathBuf),
    #[error(transparent)]
    Core(#[from] nematicon::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use nematicon::Error as E;
        match self {
            CliError::Config(_) | CliError::Collision(_) => EXIT_CONFIG,
            CliError::Core(E::InvalidParameter(_) | E::SigmaOutOfRange(_) | E::InvalidGrid(_) | E::BracketError(_)) => {
                EXIT_CONFIG
            }
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Parser)]
#[command(name = "nematicon", version, about = "Ground states, spectra and propagation of nematicons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Flat JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $NEMATICON_OUTPUT_ROOT/<command>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an earlier run in the output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Clone)]
pub struct GridFlags {
    /// Radial domain length.
    #[arg(long)]
    pub r_max: Option<f64>,
    /// Radial node count.
    #[arg(long)]
    pub n: Option<usize>,
    /// Elastic constant λ.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Restoring constant q.
    #[arg(long)]
    pub q: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the angle equation for a given beam.
    Angle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Peak of the Gaussian beam.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Width w of the beam A·exp(-r²/(2w²)).
        #[arg(long)]
        width: Option<f64>,
        /// Field file holding the beam.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Sup-norm residual tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Minimize the energy at fixed charge.
    Ground {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Charge ‖u‖².
        #[arg(long)]
        a: Option<f64>,
    },
    /// Minimize the action on the Nehari manifold at fixed frequency.
    Nehari {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Frequency σ in (0, 1).
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Linearized spectrum and coercivity of a ground state.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Charge ‖u‖² of the ground state.
        #[arg(long)]
        a: Option<f64>,
        /// Directory of an earlier ground or nehari run.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Highest angular sector.
        #[arg(long)]
        max_k: Option<u32>,
    },
    /// Propagate a beam in the plane.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Charge ‖u‖² of the ground state.
        #[arg(long)]
        a: Option<f64>,
        /// Directory of an earlier ground or nehari run.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Propagation step.
        #[arg(long)]
        dz: Option<f64>,
        /// Propagation distance.
        #[arg(long)]
        z_end: Option<f64>,
        /// Plane nodes per side (power of two).
        #[arg(long)]
        plane_n: Option<usize>,
        /// Plane box side length.
        #[arg(long)]
        box_size: Option<f64>,
    },
    /// Run a parameter sweep of ground-state solves.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Record failed points and exit 0.
        #[arg(long)]
        keep_going: bool,
        /// Points solved concurrently.
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Exponential decay fits and tail diagnostics of a ground state.
    Decay {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridFlags,
        /// Charge ‖u‖² of the ground state.
        #[arg(long)]
        a: Option<f64>,
        /// Directory of an earlier ground or nehari run.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the verification suite.
    Verify {
        /// Reduced resolution and short propagations.
        #[arg(long)]
        quick: bool,
        /// Output directory [default: $NEMATICON_OUTPUT_ROOT/verify].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an earlier run in the output directory.
        #[arg(long)]
        force: bool,
    },
}

/// Default parent of run directories.
pub fn output_root() -> PathBuf {
    std::env::var_os("NEMATICON_OUTPUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Create `dir`, refusing a nonempty directory unless `force` is set and the
/// directory holds an earlier run.
pub fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    let occupied = dir.exists() && std::fs::read_dir(dir).map_err(nematicon::Error::from)?.next().is_some();
    if occupied {
        if !force {
            return Err(CliError::Collision(dir.to_path_buf()));
        }
        if !dir.join(nematicon::io::MANIFEST_NAME).exists() {
            return Err(CliError::Config(format!(
                "{} is not empty and holds no run manifest; refusing to replace it",
                dir.display()
            )));
        }
        std::fs::remove_dir_all(dir).map_err(nematicon::Error::from)?;
    }
    std::fs::create_dir_all(dir).map_err(nematicon::Error::from)?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    use config::*;
    let grid_overrides = |g: &GridFlags| overrides!("r_max" => g.r_max, "n" => g.n, "lambda" => g.lambda, "q" => g.q);
    match cmd {
        Command::Angle { common, grid, amplitude, width, input, tol } => {
            let mut o = grid_overrides(&grid);
            o.extend(overrides!("amplitude" => amplitude, "width" => width, "input" => input, "tol" => tol));
            let cfg: AngleConfig = resolve(common.config.as_deref(), o)?;
            commands::angle(&cfg, &common.out_dir("angle"), common.force)
        }
        Command::Ground { common, grid, a } => {
            let mut o = grid_overrides(&grid);
            o.extend(overrides!("a" => a));
            let cfg: GroundConfig = resolve(common.config.as_deref(), o)?;
            commands::ground(&cfg, &common.out_dir("ground"), common.force)
        }
        Command::Nehari { common, grid, sigma } => {
            let mut o = grid_overrides(&grid);
            o.extend(overrides!("sigma" => sigma));
            let cfg: NehariConfig = resolve(common.config.as_deref(), o)?;
            commands::nehari(&cfg, &common.out_dir("nehari"), common.force)
        }
        Command::Spectrum { common, grid, a, input, max_k } => {
            let mut o = grid_overrides(&grid);
            o.extend(overrides!("a" => a, "input" => input, "max_k" => max_k));
            let cfg: SpectrumConfig = resolve(common.config.as_deref(), o)?;
            commands::spectrum(&cfg, &common.out_dir("spectrum"), common.force)
        }
        Command::Evolve { common, grid, a, input, dz, z_end, plane_n, box_size } => {
            let mut o = grid_overrides(&grid);
            o.extend(overrides!(
                "a" => a, "input" => input, "dz" => dz, "z_end" => z_end,
                "plane_n" => plane_n, "box_size" => box_size,
            ));
            let cfg: EvolveConfig = resolve(common.config.as_deref(), o)?;
            commands::evolve(&cfg, &common.out_dir("evolve"), common.force)
        }
        Command::Sweep { common, keep_going, parallelism } => {
            if common.config.is_none() {
                return Err(CliError::Config("sweep needs --config with `kind` and `values`".into()));
            }
            let cfg: SweepConfig = resolve(common.config.as_deref(), overrides!("parallelism" => parallelism))?;
            let out = common.out_dir("sweep");
            prepare_out(&out, common.force)?;
            let manifest = sweep::orchestrate(&cfg, &out)?;
            let failed = manifest.tasks.iter().filter(|t| t.state == nematicon::io::TaskState::Failed).count();
            eprintln!("sweep: {} points, {failed} failed; manifest in {}", manifest.tasks.len(), out.display());
            if failed > 0 && !keep_going {
                return Err(CliError::Failed(format!("{failed} sweep points failed (use --keep-going to accept)")));
            }
            Ok(())
        }
        Command::Decay { common, grid, a, input } => {
            let mut o = grid_overrides(&grid);
            o.extend(overrides!("a" => a, "input" => input));
            let cfg: DecayConfig = resolve(common.config.as_deref(), o)?;
            commands::decay(&cfg, &common.out_dir("decay"), common.force)
        }
        Command::Verify { quick, out, force } => {
            let out = out.unwrap_or_else(|| output_root().join("verify"));
            commands::verify(quick, &out, force)
        }
    }
}

impl Common {
    fn out_dir(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| output_root().join(command))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
