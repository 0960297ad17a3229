use serde::{Deserialize, Serialize};
use thinnet_core::{BandModel, BandStructure, ConvergenceReport, GapReport, RegimeTag, Spectrum};

use crate::config::{Command, Format, ModelArg, RunConfig};

pub const SCHEMA: &str = "thinnet/1";
pub const TOOL: &str = "thinnet";

/// Configuration as echoed into the document. Worker count, output path and
/// timing are left out so documents do not depend on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub eps: Vec<f64>,
    pub max_lambda: f64,
    pub k: usize,
    pub tol: f64,
    pub format: Format,
    pub seed: u64,
    pub model: ModelArg,
    pub c: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_samples: Option<usize>,
}

impl ConfigEcho {
    pub fn new(cfg: &RunConfig) -> Self {
        ConfigEcho {
            graph: cfg.graph.as_ref().map(|p| p.display().to_string()),
            group: cfg.group.clone(),
            cond: cfg.cond.map(|c| c.to_string()),
            regime: cfg.regime,
            alpha: cfg.alpha,
            eps: cfg.eps.clone(),
            max_lambda: cfg.max_lambda,
            k: cfg.k,
            tol: cfg.tol,
            format: cfg.format,
            seed: cfg.seed,
            model: cfg.model,
            c: cfg.c,
            h: cfg.h,
            theta_samples: cfg.theta_samples,
        }
    }
}

/// Outcome of sampling the dual group against computed bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCheck {
    pub samples: usize,
    pub characters: usize,
    pub points: usize,
    /// Sampled eigenvalues found outside every band and flat band.
    pub outside: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Spectrum(Spectrum),
    Bands {
        structure: BandStructure,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta_check: Option<ThetaCheck>,
    },
    Gaps {
        group: String,
        model: BandModel,
        cutoff: f64,
        report: GapReport,
    },
    Convergence(ConvergenceReport),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Spectrum(_) => "spectrum",
            Payload::Bands { .. } => "bands",
            Payload::Gaps { .. } => "gaps",
            Payload::Convergence(_) => "convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ConfigEcho,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub payload: Payload,
}

impl ResultDocument {
    pub fn new(cfg: &RunConfig, payload: Payload) -> Self {
        ResultDocument {
            schema: SCHEMA.to_string(),
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: cfg.command,
            config: ConfigEcho::new(cfg),
            wall_time_s: None,
            payload,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("documents hold finite numbers");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}
