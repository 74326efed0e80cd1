//! Command-line definitions and the config-file overlay.
//!
//! Every subcommand's arguments double as its config section: a TOML file
//! passed with `--config` may hold a table named after the subcommand (and
//! top-level `out` / `plot`), and flags given on the command line win.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "patternforge",
    version,
    about = "Steady-state synthesis and staircase control for bistable reaction-diffusion"
)]
pub struct Cli {
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: `$PATTERNFORGE_OUT/<subcommand>`, or
    /// `patternforge-out/<subcommand>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG figures next to the data.
    #[arg(long, global = true)]
    pub plot: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one steady-state orbit with constant coefficient.
    Phase(PhaseArgs),
    /// Divergence-form synthesis of a target in S*.
    #[command(name = "synthesize-div")]
    SynthesizeDiv(SynthDivArgs),
    /// Multiplicative synthesis of a piecewise-constant or sampled target.
    #[command(name = "synthesize-mult")]
    SynthesizeMult(SynthMultArgs),
    /// Path of steady states between two states (or down to zero).
    Path(PathArgs),
    /// Run the parabolic solver under a control schedule.
    Simulate(SimulateArgs),
    /// Track a path archive with the staircase method.
    Staircase(StaircaseArgs),
    /// Smallest Dirichlet eigenvalue of the linearization at zero or at a state.
    Eigen(EigenArgs),
    /// Residual check for a state file and/or checksum check for a bundle.
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phase(_) => "phase",
            Command::SynthesizeDiv(_) => "synthesize-div",
            Command::SynthesizeMult(_) => "synthesize-mult",
            Command::Path(_) => "path",
            Command::Simulate(_) => "simulate",
            Command::Staircase(_) => "staircase",
            Command::Eigen(_) => "eigen",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Div,
    Mult,
}

impl From<KindArg> for patternforge::Kind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Div => patternforge::Kind::Divergence,
            KindArg::Mult => patternforge::Kind::Multiplicative,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct PhaseArgs {
    /// Coefficient: μ for `div`, ξ for `mult` [default: 1].
    #[arg(long)]
    pub mu: Option<f64>,
    /// [default: div]
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Initial value m(0) [default: 0.5].
    #[arg(long)]
    pub m: Option<f64>,
    /// Initial slope m_x(0) [default: 0].
    #[arg(long)]
    pub mx: Option<f64>,
    /// Integration length [default: 10].
    #[arg(long)]
    pub length: Option<f64>,
    /// Integrator tolerance [default: 1e-10].
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct SynthDivArgs {
    /// JSON target `{"levels": [...], "breakpoints": [...]}`.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// L² tolerance [default: 0.1].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Grid points on [0, 1] [default: 1025].
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct SynthMultArgs {
    /// JSON step function `{"breakpoints", "values"}`, or a CSV with `x,m`
    /// columns (quantized first).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// L² tolerance [default: 0.1].
    #[arg(long)]
    pub eps: Option<f64>,
    /// Grid points on [0, 1] for JSON targets [default: 1025].
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct PathArgs {
    /// Start state CSV.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// End state CSV; omitted means the zero state.
    #[arg(long)]
    pub to: Option<PathBuf>,
    /// Steps M per leg [default: 40].
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    /// Initial data CSV (`x,m`); omitted means random smooth data from `--seed`.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Seed for random initial data [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points for random initial data [default: 257].
    #[arg(long)]
    pub grid: Option<usize>,
    /// Control schedule JSON.
    #[arg(long, conflicts_with = "hold")]
    pub schedule: Option<PathBuf>,
    /// Hold the controls of this state instead of a schedule.
    #[arg(long)]
    pub hold: Option<PathBuf>,
    /// Duration for `--hold` [default: 1].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Maximal time step [default: 1e-3].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Snapshot cadence; 0 keeps first and last only [default: 0.05].
    #[arg(long)]
    pub snapshots: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct StaircaseArgs {
    /// Path archive directory (as written by `path`).
    #[arg(long)]
    pub path: Option<PathBuf>,
    /// Initial data CSV; omitted means the first path member.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// `adaptive` or a fixed dwell time [default: adaptive].
    #[arg(long)]
    pub dwell: Option<String>,
    /// Hold member controls without boundary feedback.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "is_false")]
    pub no_feedback: bool,
    /// Maximal time step [default: 1e-3].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Snapshot cadence [default: 0.5].
    #[arg(long)]
    pub snapshots: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct EigenArgs {
    /// Constant μ; linearization at zero.
    #[arg(long, conflicts_with = "state")]
    pub mu: Option<f64>,
    /// Linearize at this state instead.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Grid points for `--mu` [default: 4096].
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[command(allow_negative_numbers = true)]
pub struct VerifyArgs {
    /// State CSV to check against the discrete steady-state equation.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Bundle directory whose checksums are checked.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Residual tolerance [default: 1e-3].
    #[arg(long)]
    pub tol: Option<f64>,
}

/// Global settings after the config overlay.
#[derive(Debug, Clone)]
pub struct Globals {
    pub out: Option<PathBuf>,
    pub plot: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlobalSection {
    out: Option<PathBuf>,
    #[serde(default)]
    plot: bool,
}

/// Loaded `--config` file, split into globals and per-subcommand tables.
#[derive(Debug, Default)]
pub struct Config {
    globals: GlobalSection,
    sections: toml::Table,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display()), Some("config")))?;
        let mut table: toml::Table =
            text.parse().map_err(|e| CliError::usage(format!("config {}: {e}", path.display()), Some("config")))?;
        let mut sections = toml::Table::new();
        let mut globals = toml::Table::new();
        for (k, v) in std::mem::take(&mut table) {
            if v.is_table() {
                sections.insert(k, v);
            } else {
                globals.insert(k, v);
            }
        }
        let globals = GlobalSection::deserialize(toml::Value::Table(globals))
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display()), Some("config")))?;
        Ok(Config { globals, sections })
    }

    pub fn globals(&self, cli: &Cli) -> Globals {
        Globals { out: cli.out.clone().or_else(|| self.globals.out.clone()), plot: cli.plot || self.globals.plot }
    }

    /// Config section for `name` overlaid with the flags that were given.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, name: &str, flags: &T) -> Result<T, CliError> {
        let bad = |e: String| CliError::usage(format!("config section [{name}]: {e}"), Some("config"));
        let mut merged = match self.sections.get(name) {
            Some(section) => serde_json::to_value(section).map_err(|e| bad(e.to_string()))?,
            None => serde_json::Value::Object(Default::default()),
        };
        let given = serde_json::to_value(flags).map_err(|e| bad(e.to_string()))?;
        if let (Some(dst), Some(src)) = (merged.as_object_mut(), given.as_object()) {
            for (k, v) in src {
                if !v.is_null() {
                    dst.insert(k.clone(), v.clone());
                }
            }
        }
        serde_json::from_value(merged).map_err(|e| bad(e.to_string()))
    }
}
