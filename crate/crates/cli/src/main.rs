//! `youngflow`: batch front end for the youngflow library.
//!
//! Exit codes: 0 success, 2 usage, 3 parse error, 4 range violation,
//! 5 module failure, 6 invariant failure, 7 i/o error. On any nonzero exit
//! no output file is written.

mod commands;
mod error;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(name = "youngflow", version, about = "Young-integral calculus, YDE flows and their decompositions")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Limit for the command's residual checks (overrides the defaults).
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Random seed for generators.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Primary output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Write the JSON summary here instead of stdout.
    #[arg(long, global = true)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a driver path (CSV plus JSON sidecar).
    PathGen(PathGenArgs),
    /// Running Young integral of an integrand against a driver.
    Integrate(IntegrateArgs),
    /// Euler solution of a YDE, optionally projected onto a manifold.
    Solve(SolveArgs),
    /// Block decomposition of a linear flow, per node.
    DecomposeLinear(DecomposeLinearArgs),
    /// First time the block decomposition of a linear flow breaks down.
    DetectExplosion(ExplosionArgs),
    /// Orthogonal change of basis with an explosion-free splitting.
    SchurFoliation(SchurArgs),
    /// Parallel transport of a tangent vector along a path on the unit sphere.
    Transport(TransportArgs),
    /// Roll a planar path onto the unit sphere.
    Develop(DevelopArgs),
    /// Unroll a path on the unit sphere into the plane.
    Antidevelop(AntidevelopArgs),
    /// Factor a rotation flow into horizontal and isotropy parts.
    DecomposeHomogeneous(HomogeneousArgs),
    /// Closed-form decomposition on the trivial SO(3)×SO(2) bundle.
    TrivialBundle(TrivialArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PathKind {
    Fbm,
    Weierstrass,
    Linear,
    Sine,
    Polynomial,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FbmMethodArg {
    Circulant,
    Cholesky,
}

#[derive(Debug, Args)]
pub struct PathGenArgs {
    #[arg(long, value_enum)]
    pub kind: PathKind,
    /// Number of nodes (a power of two plus one for fbm).
    #[arg(long)]
    pub n: usize,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Independent fbm components.
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = FbmMethodArg::Circulant)]
    pub method: FbmMethodArg,
    /// Weierstrass amplitude ratio.
    #[arg(long)]
    pub a: Option<f64>,
    /// Weierstrass frequency ratio.
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub amp: Option<f64>,
    #[arg(long)]
    pub freq: Option<f64>,
    /// Polynomial coefficients `c0,c1,...`.
    #[arg(long)]
    pub coeffs: Option<String>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[arg(long)]
    pub driver: PathBuf,
    /// Integrand spec, JSON file or inline JSON.
    #[arg(long)]
    pub integrand: String,
    /// Declared exponent of the driver (default: sidecar, then estimate).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also report terminal values on the two coarser dyadic grids.
    #[arg(long)]
    pub refinements: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub driver: PathBuf,
    /// `builtin:linear` (needs --A) or `builtin:zero`.
    #[arg(long)]
    pub field: String,
    /// Matrix, or list of matrices for a multi-dimensional driver.
    #[arg(long = "A")]
    pub a: Option<String>,
    #[arg(long)]
    pub x0: String,
    /// Manifold spec, e.g. `{"manifold":"sphere","radius":1}`.
    #[arg(long)]
    pub manifold: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecomposeMethod {
    Blocks,
    Yde,
}

#[derive(Debug, Args)]
pub struct DecomposeLinearArgs {
    #[arg(long = "A")]
    pub a: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub driver: PathBuf,
    #[arg(long, value_enum, default_value_t = DecomposeMethod::Blocks)]
    pub method: DecomposeMethod,
    /// Relative singularity threshold for the lower-right block.
    #[arg(long, default_value_t = youngflow::linear_flows::DEFAULT_SINGULARITY)]
    pub threshold: f64,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExplosionArgs {
    #[arg(long = "A")]
    pub a: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub driver: PathBuf,
    #[arg(long, default_value_t = youngflow::linear_flows::DEFAULT_SINGULARITY)]
    pub threshold: f64,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SchurArgs {
    #[arg(long = "A")]
    pub a: String,
    /// Optional driver on which the transformed system is checked for explosions.
    #[arg(long)]
    pub driver: Option<PathBuf>,
    #[arg(long, default_value_t = youngflow::linear_flows::DEFAULT_SINGULARITY)]
    pub threshold: f64,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    /// Path on the unit sphere, CSV with three value columns.
    #[arg(long)]
    pub path: PathBuf,
    /// Tangent vector at the first point.
    #[arg(long)]
    pub v: String,
    /// Initial frame (`e1,e2` or `a,b,c;d,e,f`); only affects the reported lift.
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DevelopArgs {
    /// Planar path, CSV with two value columns.
    #[arg(long)]
    pub plane: PathBuf,
    #[arg(long)]
    pub p0: String,
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AntidevelopArgs {
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub frame: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HomogeneousArgs {
    /// Skew 3×3 generator: `axis:z`, `axis:a,b,c` or a JSON matrix.
    #[arg(long = "A")]
    pub a: String,
    #[arg(long)]
    pub driver: PathBuf,
    /// Base point in SO(3): `identity` or a JSON matrix.
    #[arg(long, default_value = "identity")]
    pub x: String,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrivialArgs {
    #[arg(long = "A")]
    pub a: String,
    /// Rate `β` of `B = [[0, −β], [β, 0]]`, or a 2×2 JSON matrix.
    #[arg(long = "B")]
    pub b: String,
    #[arg(long)]
    pub driver: PathBuf,
    #[arg(long, default_value = "identity")]
    pub x: String,
    /// Fibre point in SO(2): `identity` or an angle in radians.
    #[arg(long, default_value = "identity")]
    pub y: String,
    #[arg(long)]
    pub alpha: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if let Some(tol) = g.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Range(format!("--tol must be positive, got {tol}")));
        }
    }
    let out = g
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let art = match &cli.command {
        Command::PathGen(a) => commands::path_gen(a, g, &out)?,
        Command::Integrate(a) => commands::integrate(a, &out)?,
        Command::Solve(a) => commands::solve(a, g, &out)?,
        Command::DecomposeLinear(a) => commands::decompose_linear(a, g, &out)?,
        Command::DetectExplosion(a) => commands::detect_explosion(a, &out)?,
        Command::SchurFoliation(a) => commands::schur_foliation(a, g, &out)?,
        Command::Transport(a) => commands::transport(a, g, &out)?,
        Command::Develop(a) => commands::develop(a, g, &out)?,
        Command::Antidevelop(a) => commands::antidevelop(a, g, &out)?,
        Command::DecomposeHomogeneous(a) => commands::decompose_homogeneous(a, g, &out)?,
        Command::TrivialBundle(a) => commands::trivial_bundle(a, g, &out)?,
    };
    output::commit(art, g.summary.as_deref(), g.seed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("youngflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flags_are_rejected() {
        let r = Cli::try_parse_from(["youngflow", "path-gen", "--kind", "fbm", "--n", "9", "--bogus", "1"]);
        assert!(r.is_err());
    }
}
