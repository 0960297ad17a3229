//! Vertex-volume scaling regimes of the thin manifold.
//!
//! The vertex neighbourhoods shrink like `eps^alpha` while the edge
//! neighbourhoods shrink like `eps`. The dimension `d` of the manifold enters
//! the regime boundaries through `(d-1)/d`; the artifact fixes `d = 2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// Manifold dimension used throughout.
pub const DIM: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    Fast,
    Slow,
    Borderline,
    Nondecay,
}

impl FromStr for RegimeTag {
    type Err = GraphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fast" => Ok(RegimeTag::Fast),
            "slow" => Ok(RegimeTag::Slow),
            "borderline" => Ok(RegimeTag::Borderline),
            "nondecay" | "non-decay" | "nondecaying" => Ok(RegimeTag::Nondecay),
            other => Err(GraphError::Regime(format!("unknown regime `{other}`"))),
        }
    }
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegimeTag::Fast => "fast",
            RegimeTag::Slow => "slow",
            RegimeTag::Borderline => "borderline",
            RegimeTag::Nondecay => "nondecay",
        };
        f.write_str(s)
    }
}

/// Threshold `(d-1)/d` separating slow from fast decay.
pub fn critical_alpha(d: u32) -> f64 {
    (d as f64 - 1.0) / d as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRegime {
    pub tag: RegimeTag,
    pub alpha: f64,
    /// Companion exponent of the slow regime.
    pub alpha_prime: f64,
    pub eps: f64,
    /// Fibre radius at the edge side of a bottleneck.
    pub r_minus: f64,
    /// Fibre radius at the vertex side of a bottleneck.
    pub r_plus: f64,
}

impl ScalingRegime {
    /// Regime with `alpha_prime = alpha` and unit bottleneck radii.
    pub fn new(tag: RegimeTag, alpha: f64, eps: f64) -> Result<Self, GraphError> {
        Self::with_params(tag, alpha, alpha, eps, 1.0, 1.0)
    }

    pub fn with_params(
        tag: RegimeTag,
        alpha: f64,
        alpha_prime: f64,
        eps: f64,
        r_minus: f64,
        r_plus: f64,
    ) -> Result<Self, GraphError> {
        let r = ScalingRegime { tag, alpha, alpha_prime, eps, r_minus, r_plus };
        r.validate(DIM)?;
        Ok(r)
    }

    /// Checks the regime inequalities for a manifold of dimension `d`.
    pub fn validate(&self, d: u32) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Regime(m));
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps = {} must lie in (0, 1]", self.eps));
        }
        if !(self.r_minus > 0.0) || !(self.r_plus >= self.r_minus) {
            return bad(format!("need 0 < r- <= r+, got r- = {}, r+ = {}", self.r_minus, self.r_plus));
        }
        let crit = critical_alpha(d);
        let a = self.alpha;
        match self.tag {
            RegimeTag::Fast => {
                if !(a > crit && a <= 1.0) {
                    return bad(format!("fast decay needs {crit} < alpha <= 1, got {a}"));
                }
            }
            RegimeTag::Slow => {
                if !(a > 0.0 && a < crit) {
                    return bad(format!("slow decay needs 0 < alpha < {crit}, got {a}"));
                }
                let lo = d as f64 * a / (d as f64 + 2.0);
                if !(self.alpha_prime > lo && self.alpha_prime <= a) {
                    return bad(format!(
                        "slow decay needs {lo} < alpha' <= alpha, got alpha' = {}",
                        self.alpha_prime
                    ));
                }
            }
            RegimeTag::Borderline => {
                if (a - crit).abs() > 1e-12 {
                    return bad(format!("borderline decay needs alpha = {crit}, got {a}"));
                }
            }
            RegimeTag::Nondecay => {
                if !(a >= 0.0 && a <= 1.0) {
                    return bad(format!("alpha = {a} must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Fibre dimension `m = d - 1`.
    pub fn fibre_dim(&self) -> u32 {
        DIM - 1
    }

    /// Vertex scale `eps^alpha`.
    pub fn vertex_scale(&self) -> f64 {
        self.eps.powf(self.alpha)
    }

    /// `delta_0 = eps^alpha`.
    pub fn delta0(&self) -> f64 {
        self.eps.powf(self.alpha)
    }

    /// `delta_+ = eps^((1 - alpha) m)`, the bottleneck length.
    pub fn delta_plus(&self) -> f64 {
        self.eps.powf((1.0 - self.alpha) * self.fibre_dim() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_boundaries_in_two_dimensions() {
        assert!(ScalingRegime::new(RegimeTag::Fast, 1.0, 0.1).is_ok());
        assert!(ScalingRegime::new(RegimeTag::Fast, 0.5, 0.1).is_err());
        assert!(ScalingRegime::new(RegimeTag::Slow, 0.25, 0.1).is_ok());
        assert!(ScalingRegime::new(RegimeTag::Slow, 0.5, 0.1).is_err());
        assert!(ScalingRegime::new(RegimeTag::Borderline, 0.5, 0.1).is_ok());
        assert!(ScalingRegime::new(RegimeTag::Borderline, 0.4, 0.1).is_err());
        assert!(ScalingRegime::new(RegimeTag::Fast, 1.0, 0.0).is_err());
        // alpha' must exceed d alpha / (d + 2) = alpha / 2
        assert!(ScalingRegime::with_params(RegimeTag::Slow, 0.25, 0.1, 0.1, 1.0, 1.0).is_err());
        assert!(ScalingRegime::with_params(RegimeTag::Slow, 0.25, 0.2, 0.1, 1.0, 1.0).is_ok());
    }

    #[test]
    fn bottleneck_scales() {
        let r = ScalingRegime::new(RegimeTag::Slow, 0.25, 0.05).unwrap();
        assert!((r.delta0() - 0.05f64.powf(0.25)).abs() < 1e-15);
        assert!((r.delta_plus() - 0.05f64.powf(0.75)).abs() < 1e-15);
        assert_eq!("Borderline".parse::<RegimeTag>().unwrap(), RegimeTag::Borderline);
    }
}
