//! Conjugate gradient for the damped Newton system.
//!
//! Only operator applications are needed, so the curvature matrix is never
//! formed. Standard recurrences:
//!
//! ```text
//! r0 = b - A x0, d0 = r0
//! alpha = <r,r> / <d,Ad>
//! x += alpha d,  r -= alpha Ad
//! beta = <r',r'> / <r,r>,  d = r' + beta d
//! ```
//!
//! With `x0 = 0` the first direction is `b = -g`, and every iterate is a
//! descent direction for the objective whose gradient is `g`.

use crate::curvature::HvpOperator;
use crate::error::{Error, Result};
use crate::vector::{axpy, dot};

/// A symmetric linear map applied without materializing its matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = A x`. Both slices have length `dim()`.
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// Adapts a closure `(x, y) -> ()` that writes `A x` into `y`.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgConfig {
    pub max_iters: usize,
    /// Target `|r| / |b|`.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iters: 250,
            rel_tol: 1e-4,
            abs_tol: 1e-12,
        }
    }
}

impl CgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "invalid CG config {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub delta: Vec<f64>,
    pub iters: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// Set when a direction with `<d, A d> <= 0` was met.
    pub curvature_breakdown: bool,
}

/// Solve `A x = b` from `x0`.
///
/// Stops when `|r| <= max(rel_tol |b|, abs_tol)`, after `max_iters`
/// iterations, or on nonpositive curvature (returning the last iterate
/// before the offending direction).
pub fn cg_solve<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &CgConfig,
) -> Result<CgResult> {
    cfg.validate()?;
    let n = op.dim();
    for len in [b.len(), x0.map_or(n, <[f64]>::len)] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalDivergence { iteration: 0 });
    }

    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgResult {
            delta: vec![0.0; n],
            iters: 0,
            final_residual_norm: 0.0,
            converged: true,
            curvature_breakdown: false,
        });
    }
    let threshold = (cfg.rel_tol * b_norm).max(cfg.abs_tol);

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    let mut ad = vec![0.0; n];
    if x0.is_some_and(|x0| x0.iter().any(|&v| v != 0.0)) {
        op.apply_into(&x, &mut ad);
        axpy(-1.0, &ad, &mut r);
    }
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    if !rr.is_finite() {
        return Err(Error::NumericalDivergence { iteration: 0 });
    }

    let mut iters = 0;
    let mut curvature_breakdown = false;
    while rr.sqrt() > threshold && iters < cfg.max_iters {
        op.apply_into(&d, &mut ad);
        let dad = dot(&d, &ad);
        if !dad.is_finite() {
            return Err(Error::NumericalDivergence { iteration: iters });
        }
        if dad <= 0.0 {
            curvature_breakdown = true;
            break;
        }
        let alpha = rr / dad;
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &ad, &mut r);
        iters += 1;
        let rr_next = dot(&r, &r);
        if !rr_next.is_finite() || !alpha.is_finite() {
            return Err(Error::NumericalDivergence { iteration: iters });
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
    }

    let final_residual_norm = rr.sqrt();
    Ok(CgResult {
        delta: x,
        iters,
        final_residual_norm,
        converged: final_residual_norm <= threshold,
        curvature_breakdown,
    })
}

/// Solve `(J^T J + λ D + γ I) Δ = -g` by CG.
///
/// `x0 = None` starts from zero, which makes the first direction `-g`.
pub fn solve_newton_step(
    op: &HvpOperator<'_>,
    g: &[f64],
    x0: Option<&[f64]>,
    cfg: &CgConfig,
) -> Result<CgResult> {
    op.params().check_len(g)?;
    let b: Vec<f64> = g.iter().map(|v| -v).collect();
    cg_solve(op, &b, x0, cfg)
}
