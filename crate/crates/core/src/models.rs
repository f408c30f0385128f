//! Index-of-difficulty formulations and movement-time prediction.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AngularCondition;

/// An index-of-difficulty formulation.
///
/// Angular forms take α and ω in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum IdModel {
    /// `log2(2A / W)`
    Fitts1954,
    /// `log2(A / W + 1)`
    Shannon,
    /// `log2(α / ω + 1)`
    Ang,
    /// `log2(α / ω^k + 1)`
    AngPow { k: f64 },
    /// `[log2(α / ω^k + 1)]²`
    Dp { k: f64 },
}

impl IdModel {
    pub const ANG_POW3: IdModel = IdModel::AngPow { k: 3.0 };
    pub const DP3: IdModel = IdModel::Dp { k: 3.0 };

    pub fn is_angular(&self) -> bool {
        !matches!(self, IdModel::Fitts1954 | IdModel::Shannon)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            IdModel::AngPow { k } | IdModel::Dp { k } if !(k.is_finite() && k > 0.0) => Err(
                Error::Usage(format!("exponent k must be positive, got {k}")),
            ),
            _ => Ok(()),
        }
    }

    /// ID for an angular condition. Linear models are rejected.
    pub fn angular(&self, condition: &AngularCondition) -> Result<f64> {
        self.validate()?;
        let (a, w) = (condition.alpha_deg(), condition.omega_deg());
        match *self {
            IdModel::Ang => Ok(ang_pow(a, w, 1.0)),
            IdModel::AngPow { k } => Ok(ang_pow(a, w, k)),
            IdModel::Dp { k } => Ok(ang_pow(a, w, k).powi(2)),
            IdModel::Fitts1954 | IdModel::Shannon => Err(Error::Usage(format!(
                "{self} takes a linear amplitude/width condition"
            ))),
        }
    }

    /// ID for a linear condition. Angular models are rejected.
    pub fn linear(&self, condition: &LinearCondition) -> Result<f64> {
        let ratio = condition.amplitude_m / condition.width_m;
        match self {
            IdModel::Fitts1954 => Ok((2.0 * ratio).log2()),
            IdModel::Shannon => Ok(ratio.ln_1p() / LN_2),
            _ => Err(Error::Usage(format!(
                "{self} takes an angular alpha/omega condition"
            ))),
        }
    }
}

fn ang_pow(alpha: f64, omega: f64, k: f64) -> f64 {
    (alpha / omega.powf(k)).ln_1p() / LN_2
}

impl fmt::Display for IdModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IdModel::Fitts1954 => write!(f, "fitts"),
            IdModel::Shannon => write!(f, "shannon"),
            IdModel::Ang => write!(f, "ang"),
            IdModel::AngPow { k } => write!(f, "angpow{k}"),
            IdModel::Dp { k } => write!(f, "dp{k}"),
        }
    }
}

impl FromStr for IdModel {
    type Err = Error;

    /// Accepts `fitts`, `shannon`, `ang`, `angpow[K]`, `dp[K]` (K defaults to 3).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let exponent = |rest: &str| -> Result<f64> {
            if rest.is_empty() {
                return Ok(3.0);
            }
            rest.trim_start_matches(['(', '='])
                .trim_end_matches(')')
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad exponent in model name {s:?}")))
        };
        let model = match s.as_str() {
            "fitts" | "fitts1954" => IdModel::Fitts1954,
            "shannon" => IdModel::Shannon,
            "ang" => IdModel::Ang,
            _ => {
                if let Some(rest) = s.strip_prefix("angpow") {
                    IdModel::AngPow { k: exponent(rest)? }
                } else if let Some(rest) = s.strip_prefix("dp") {
                    IdModel::Dp { k: exponent(rest)? }
                } else {
                    return Err(Error::Usage(format!("unknown ID model {s:?}")));
                }
            }
        };
        model.validate()?;
        Ok(model)
    }
}

/// Linear amplitude and width in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCondition {
    pub amplitude_m: f64,
    pub width_m: f64,
}

impl LinearCondition {
    pub fn new(amplitude_m: f64, width_m: f64) -> Result<Self> {
        if !(amplitude_m > 0.0 && width_m > 0.0) {
            return Err(Error::InfeasibleGeometry(format!(
                "amplitude and width must be positive, got {amplitude_m}, {width_m}"
            )));
        }
        Ok(Self {
            amplitude_m,
            width_m,
        })
    }
}

/// Either kind of task condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    Angular(AngularCondition),
    Linear(LinearCondition),
}

impl From<AngularCondition> for Condition {
    fn from(c: AngularCondition) -> Self {
        Condition::Angular(c)
    }
}

impl From<LinearCondition> for Condition {
    fn from(c: LinearCondition) -> Self {
        Condition::Linear(c)
    }
}

/// An ID value tagged with the formulation that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdValue {
    pub model: IdModel,
    pub value: f64,
}

/// Computes the index of difficulty; the condition kind must match the model family.
pub fn compute_id(model: IdModel, condition: impl Into<Condition>) -> Result<IdValue> {
    let value = match condition.into() {
        Condition::Angular(c) => model.angular(&c)?,
        Condition::Linear(c) => model.linear(&c)?,
    };
    Ok(IdValue { model, value })
}

/// `MT = a + b · ID` line with its goodness of fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Intercept in seconds.
    pub a: f64,
    /// Slope in seconds per ID unit.
    pub b: f64,
    pub r2: f64,
    pub n: usize,
}

/// `a + b · id_value`. Negative predictions are returned as is.
pub fn predict_mt(fit: &RegressionFit, id_value: f64) -> f64 {
    fit.a + fit.b * id_value
}
