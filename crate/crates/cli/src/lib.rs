//! Command-line front end: configuration, dispatch to the solvers and output
//! in CSV, JSON or SVG.

pub mod config;
pub mod csv;
pub mod document;
pub mod error;
pub mod svg;

use std::path::Path;
use std::time::Instant;

use thinnet_core::floquet::theta_sampled_bands;
use thinnet_core::{
    band_structure_borderline, band_structure_kirchhoff, convergence_study, eigenvalues_borderline,
    eigenvalues_secular, find_gaps, limit_spectrum, BandModel, BandStructure, GraphSpec, GroupSpec, HPolicy,
    MetricGraph, ScalingRegime, SecularSystem, StudyOptions, VertexCondition,
};

pub use config::{Cli, Command, Format, ModelArg, RunConfig};
pub use document::{ConfigEcho, Payload, ResultDocument, ThetaCheck};
pub use error::{code, CliError};
pub use svg::{render_band_svg, SvgStyle};

/// Tolerance in `omega` for sampled points to count as lying on a band.
pub const THETA_CHECK_TOL: f64 = 1e-8;

/// A finished run. `failure` carries a certification problem; the document is
/// still complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub document: ResultDocument,
    pub failure: Option<CliError>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(code::OK, CliError::exit_code)
    }
}

pub fn load_graph(path: &Path) -> Result<MetricGraph, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(GraphSpec::from_toml_str(&text)?.build()?)
}

/// Runs `cfg`, on a dedicated pool when a worker count is given.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let (payload, failure) = match cfg.command {
        Command::Spectrum => (Payload::Spectrum(spectrum(cfg)?), None),
        Command::Limit => (Payload::Spectrum(limit(cfg)?), None),
        Command::Bands => bands(cfg)?,
        Command::Gaps => {
            let b = band_structure(cfg)?;
            let report = find_gaps(&b);
            (Payload::Gaps { group: b.group, model: b.model, cutoff: b.cutoff, report }, None)
        }
        Command::ManifoldConverge => manifold(cfg)?,
    };
    let mut document = ResultDocument::new(cfg, payload);
    if cfg.timing {
        document.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(Outcome { document, failure })
}

fn graph(cfg: &RunConfig) -> Result<MetricGraph, CliError> {
    load_graph(cfg.graph.as_deref().expect("validated"))
}

fn spectrum(cfg: &RunConfig) -> Result<thinnet_core::Spectrum, CliError> {
    let g = graph(cfg)?;
    let cond = cfg.cond.unwrap_or(g.default_condition);
    let sys = SecularSystem::new(&g, cond)?;
    Ok(match cond {
        VertexCondition::Borderline => eigenvalues_borderline(&sys, cfg.max_lambda, cfg.tol)?,
        _ => eigenvalues_secular(&sys, cfg.max_lambda, cfg.tol)?,
    })
}

fn regime(cfg: &RunConfig) -> Result<ScalingRegime, CliError> {
    let tag = cfg.regime.expect("validated");
    ScalingRegime::new(tag, cfg.alpha.expect("set with the regime"), cfg.eps[0])
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn limit(cfg: &RunConfig) -> Result<thinnet_core::Spectrum, CliError> {
    let g = graph(cfg)?;
    let r = regime(cfg)?;
    Ok(limit_spectrum(&g, &r, None, cfg.max_lambda)?)
}

fn group(cfg: &RunConfig) -> Result<GroupSpec, CliError> {
    Ok(cfg.group.as_deref().expect("validated").parse::<GroupSpec>()?)
}

fn model(cfg: &RunConfig) -> BandModel {
    match cfg.model {
        ModelArg::Kirchhoff => BandModel::Kirchhoff,
        ModelArg::Borderline => BandModel::Borderline { c: cfg.c },
    }
}

fn band_structure(cfg: &RunConfig) -> Result<BandStructure, CliError> {
    let g = group(cfg)?;
    Ok(match model(cfg) {
        BandModel::Kirchhoff => band_structure_kirchhoff(&g, cfg.max_lambda),
        BandModel::Borderline { c } => band_structure_borderline(&g, c, cfg.max_lambda)?,
    })
}

fn bands(cfg: &RunConfig) -> Result<(Payload, Option<CliError>), CliError> {
    let structure = band_structure(cfg)?;
    let Some(samples) = cfg.theta_samples else {
        return Ok((Payload::Bands { structure, theta_check: None }, None));
    };
    let sampled = theta_sampled_bands(&group(cfg)?, model(cfg), samples, cfg.max_lambda)?;
    let mut outside = Vec::new();
    let mut points = 0;
    for s in &sampled {
        for v in s.spectrum.expanded() {
            points += 1;
            if !structure.contains(v, THETA_CHECK_TOL) {
                outside.push(v);
            }
        }
    }
    let failure = (!outside.is_empty())
        .then(|| CliError::Certification(format!("{} sampled eigenvalues lie outside the bands", outside.len())));
    let check = ThetaCheck { samples, characters: sampled.len(), points, outside };
    Ok((Payload::Bands { structure, theta_check: Some(check) }, failure))
}

fn manifold(cfg: &RunConfig) -> Result<(Payload, Option<CliError>), CliError> {
    let g = graph(cfg)?;
    let tag = cfg.regime.expect("validated");
    let alpha = cfg.alpha.expect("set with the regime");
    let opts = StudyOptions { tol: cfg.tol, seed: cfg.seed, ..Default::default() };
    let report = convergence_study(&g, tag, alpha, &cfg.eps, cfg.k, HPolicy { h: cfg.h }, &opts)?;
    let uncertified: Vec<String> = report
        .rows
        .iter()
        .flat_map(|r| {
            r.certified.iter().enumerate().filter(|(_, c)| !**c).map(move |(i, _)| format!("eps={} index={}", r.eps, i + 1))
        })
        .collect();
    let failure = (!uncertified.is_empty())
        .then(|| CliError::Certification(format!("mesh-uncertified eigenvalues: {}", uncertified.join(", "))));
    Ok((Payload::Convergence(report), failure))
}

/// Renders the document in the configured format.
pub fn render(doc: &ResultDocument, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => Ok(doc.to_json()),
        Format::Csv => Ok(csv::to_csv(doc)),
        Format::Svg => match &doc.payload {
            Payload::Bands { structure, .. } => Ok(render_band_svg(structure, &SvgStyle::default())),
            Payload::Gaps { .. } => {
                let cfg_group = doc.config.group.as_deref().unwrap_or_default();
                let g: GroupSpec = cfg_group.parse()?;
                let b = match doc.config.model {
                    ModelArg::Kirchhoff => band_structure_kirchhoff(&g, doc.config.max_lambda),
                    ModelArg::Borderline => band_structure_borderline(&g, doc.config.c, doc.config.max_lambda)?,
                };
                Ok(render_band_svg(&b, &SvgStyle::default()))
            }
            _ => Err(CliError::Usage("svg output is only available for bands and gaps".into())),
        },
    }
}

/// Full command-line entry point. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return code::OK;
        }
        Err(e) => return report(&CliError::Usage(e.to_string().trim_end().to_string())),
    };
    let result = RunConfig::from_cli(cli).and_then(|cfg| {
        let outcome = run(&cfg)?;
        let text = render(&outcome.document, cfg.format)?;
        match &cfg.out {
            Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
            None => {
                use std::io::Write;
                std::io::stdout().write_all(text.as_bytes())?;
            }
        }
        Ok(outcome)
    });
    match result {
        Ok(o) => match &o.failure {
            Some(f) => report(f),
            None => code::OK,
        },
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("{}", e.diagnostic());
    e.exit_code()
}
