use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use thinnet_core::{RegimeTag, VertexCondition};

use crate::error::CliError;

pub const MIN_TOL: f64 = 1e-14;
pub const MAX_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Limit,
    Bands,
    Gaps,
    ManifoldConverge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    #[default]
    Kirchhoff,
    Borderline,
}

/// Spectra of quantum graphs, periodic band structures and thin-manifold
/// convergence studies.
#[derive(Debug, Clone, Parser)]
#[command(name = "thinnet", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Graph description (TOML).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Abelian group, e.g. "Z x Z_3".
    #[arg(long)]
    pub group: Option<String>,
    /// kirchhoff | delta:<k> | dirichlet | borderline
    #[arg(long)]
    pub cond: Option<String>,
    /// fast | slow | borderline | nondecay
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub max_lambda: Option<f64>,
    /// Number of eigenvalues tracked by manifold-converge.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Band model for bands and gaps.
    #[arg(long, value_enum, default_value_t)]
    pub model: ModelArg,
    /// Vertex volume of the borderline band model.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Coarse mesh spacing of manifold-converge.
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    /// Cross-check bands against this many samples per free generator.
    #[arg(long)]
    pub theta_samples: Option<usize>,
    /// Record wall time in the document.
    #[arg(long)]
    pub timing: bool,
}

/// Validated configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub graph: Option<PathBuf>,
    pub group: Option<String>,
    pub cond: Option<VertexCondition>,
    pub regime: Option<RegimeTag>,
    pub alpha: Option<f64>,
    pub eps: Vec<f64>,
    pub max_lambda: f64,
    pub k: usize,
    pub tol: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub workers: Option<usize>,
    pub model: ModelArg,
    pub c: f64,
    pub h: f64,
    pub theta_samples: Option<usize>,
    pub timing: bool,
}

pub fn default_alpha(tag: RegimeTag) -> f64 {
    match tag {
        RegimeTag::Fast => 1.0,
        RegimeTag::Slow => 0.25,
        RegimeTag::Borderline => 0.5,
        RegimeTag::Nondecay => 0.0,
    }
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<RunConfig, CliError> {
        let command = cli.command;
        let needs_graph = matches!(command, Command::Spectrum | Command::Limit | Command::ManifoldConverge);
        if needs_graph && cli.graph.is_none() {
            return Err(usage("--graph is required"));
        }
        if matches!(command, Command::Bands | Command::Gaps) && cli.group.is_none() {
            return Err(usage("--group is required"));
        }
        let cond = cli.cond.as_deref().map(str::parse).transpose().map_err(|e| usage(format!("{e}")))?;
        let regime: Option<RegimeTag> =
            cli.regime.as_deref().map(str::parse).transpose().map_err(|e| usage(format!("{e}")))?;
        if matches!(command, Command::Limit | Command::ManifoldConverge) && regime.is_none() {
            return Err(usage("--regime is required"));
        }
        let alpha = cli.alpha.or(regime.map(default_alpha));

        let eps = cli.eps.unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(usage("--eps values must lie in (0, 1)"));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(usage("--eps must be strictly decreasing"));
        }

        let max_lambda = cli.max_lambda.unwrap_or(100.0);
        if !(max_lambda > 0.0 && max_lambda.is_finite()) {
            return Err(usage(format!("--max-lambda must be positive, got {max_lambda}")));
        }
        let k = cli.k.unwrap_or(4);
        if k == 0 {
            return Err(usage("--k must be at least 1"));
        }
        let tol = cli.tol.unwrap_or(if command == Command::ManifoldConverge { 1e-9 } else { 1e-12 });
        if !(MIN_TOL..=MAX_TOL).contains(&tol) {
            return Err(usage(format!("--tol must lie in [{MIN_TOL:e}, {MAX_TOL:e}], got {tol:e}")));
        }
        if cli.format == Format::Svg && !matches!(command, Command::Bands | Command::Gaps) {
            return Err(usage("svg output is only available for bands and gaps"));
        }
        if cli.workers == Some(0) {
            return Err(usage("--workers must be at least 1"));
        }
        if !(cli.c >= 0.0 && cli.c.is_finite()) {
            return Err(usage("--c must be finite and non-negative"));
        }
        if !(cli.h > 0.0 && cli.h.is_finite()) {
            return Err(usage("--h must be positive"));
        }
        Ok(RunConfig {
            command,
            graph: cli.graph,
            group: cli.group,
            cond,
            regime,
            alpha,
            eps,
            max_lambda,
            k,
            tol,
            format: cli.format,
            out: cli.out,
            seed: cli.seed,
            workers: cli.workers,
            model: cli.model,
            c: cli.c,
            h: cli.h,
            theta_samples: cli.theta_samples,
            timing: cli.timing,
        })
    }

    pub fn parse_from<I, T>(args: I) -> Result<RunConfig, CliError>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        let cli = Cli::try_parse_from(args).map_err(|e| usage(e.to_string().trim_end()))?;
        RunConfig::from_cli(cli)
    }
}
