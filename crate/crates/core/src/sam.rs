//! Sharpness-aware perturbation of the evaluation point.
//!
//! The perturbation is the first-order worst case inside an L2 ball of radius
//! `rho`: `ε* = rho · g / |g|`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::vector::norm;

/// Gradients with norm at or below this produce no perturbation.
pub const NORM_FLOOR: f64 = 1e-12;

/// Default search grid for `rho`.
pub const RHO_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];

/// Where the perturbed point is used inside a second-order step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamMode {
    /// Only the right-hand-side gradient is taken at `y + ε*`.
    GradientOnly,
    /// Both the gradient and the curvature operator are taken at `y + ε*`.
    #[default]
    GradientAndCurvature,
}

impl FromStr for SamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient-only" => Ok(SamMode::GradientOnly),
            "gradient-and-curvature" => Ok(SamMode::GradientAndCurvature),
            other => Err(Error::Config(format!(
                "unknown sam mode '{other}' (expected gradient-only or gradient-and-curvature)"
            ))),
        }
    }
}

impl fmt::Display for SamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamMode::GradientOnly => "gradient-only",
            SamMode::GradientAndCurvature => "gradient-and-curvature",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub epsilon: Vec<f64>,
    pub rho: f64,
    /// Norm of the generating gradient.
    pub grad_norm: f64,
}

impl Perturbation {
    /// True when the perturbation is identically zero (`rho = 0` or a
    /// vanishing gradient).
    pub fn is_zero(&self) -> bool {
        self.rho == 0.0 || self.grad_norm <= NORM_FLOOR
    }
}

pub fn sam_perturbation(g: &[f64], rho: f64) -> Perturbation {
    let grad_norm = norm(g);
    let epsilon = if rho > 0.0 && grad_norm > NORM_FLOOR {
        let scale = rho / grad_norm;
        g.iter().map(|x| scale * x).collect()
    } else {
        vec![0.0; g.len()]
    };
    Perturbation {
        epsilon,
        rho,
        grad_norm,
    }
}

/// `params + ε`, leaving `params` untouched.
pub fn perturbed_point(params: &ParamVector, pert: &Perturbation) -> Result<ParamVector> {
    params.check_len(&pert.epsilon)?;
    if pert.is_zero() {
        return Ok(params.clone());
    }
    let values = params
        .values()
        .iter()
        .zip(&pert.epsilon)
        .map(|(y, e)| y + e)
        .collect();
    params.with_values(values)
}
