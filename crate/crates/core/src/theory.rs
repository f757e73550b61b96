//! Closed-form constants and conditions from user-supplied bounds.
//!
//! With `|sigma| <= C_sigma`, `|y| <= C_z`, and `C_1` bounding the gradient of
//! sigma in the parameters:
//!
//! ```text
//! C_osc = (4 / beta) (C_sigma^2 + C_z C_sigma)
//! alpha = (lambda / beta) exp(-C_osc)                      (LSI constant of mu*)
//! C_PL  = (2 C_sigma^2 + beta) / (alpha beta^2 - 8 C_sigma^2 C_1^2)
//!         valid only when alpha beta^2 > 8 C_sigma^2 C_1^2
//! Q*    = (beta d / lambda) exp(C_osc)                     (second moment of mu*)
//! lambda_dc = 2 (C_sigma + C_z) |sigma_thetatheta|_op      (displacement convexity)
//! ```
//!
//! The LSI constant of the learner's own flow has no closed form, so the
//! matching condition on it is reported as not machine-checkable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{second_moment, WeightedMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub c_sigma: f64,
    pub c_z: f64,
    pub c_1: f64,
    pub lambda: f64,
    pub beta: f64,
    pub d: usize,
    /// Uniform operator-norm bound on the parameter Hessian of sigma, if known.
    pub hessian_norm: Option<f64>,
}

impl BoundSpec {
    pub fn new(c_sigma: f64, c_z: f64, c_1: f64, lambda: f64, beta: f64, d: usize) -> Result<Self> {
        let spec = BoundSpec { c_sigma, c_z, c_1, lambda, beta, d, hessian_norm: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_hessian_norm(self, norm: f64) -> Result<Self> {
        let spec = BoundSpec { hessian_norm: Some(norm), ..self };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.c_sigma, self.c_z, self.c_1, self.lambda, self.beta];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::input("bounds, lambda and beta must be positive and finite"));
        }
        if self.d == 0 {
            return Err(Error::input("parameter dimension must be at least 1"));
        }
        if matches!(self.hessian_norm, Some(h) if !(h >= 0.0 && h.is_finite())) {
            return Err(Error::input("Hessian norm bound must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub c_osc: f64,
    pub alpha: f64,
    pub pl_condition_holds: bool,
    pub c_pl: Option<f64>,
    pub q_star: f64,
    pub lambda_dc: Option<f64>,
    /// `lambda >= lambda_dc`, when the Hessian bound is supplied.
    pub displacement_convex: Option<bool>,
}

pub fn compute_constants(spec: &BoundSpec) -> Result<TheoryConstants> {
    spec.validate()?;
    let BoundSpec { c_sigma, c_z, c_1, lambda, beta, d, hessian_norm } = *spec;
    let c_osc = 4.0 / beta * (c_sigma * c_sigma + c_z * c_sigma);
    let alpha = lambda / beta * (-c_osc).exp();
    let margin = alpha * beta * beta - 8.0 * c_sigma * c_sigma * c_1 * c_1;
    let pl_condition_holds = margin > 0.0;
    let c_pl = pl_condition_holds.then(|| (2.0 * c_sigma * c_sigma + beta) / margin);
    let q_star = beta * d as f64 / lambda * c_osc.exp();
    let lambda_dc = hessian_norm.map(|h| 2.0 * (c_sigma + c_z) * h);
    Ok(TheoryConstants {
        c_osc,
        alpha,
        pl_condition_holds,
        c_pl,
        q_star,
        lambda_dc,
        displacement_convex: lambda_dc.map(|l| lambda >= l),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentAudit {
    pub measured: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Second moment of an equilibrium estimate against `Q*`. A failed audit is
/// reported, not raised.
pub fn check_empirical_moment_bound(mu_hat: &WeightedMeasure, spec: &BoundSpec) -> Result<MomentAudit> {
    let bound = compute_constants(spec)?.q_star;
    let measured = second_moment(mu_hat);
    Ok(MomentAudit { measured, bound, holds: measured <= bound })
}
