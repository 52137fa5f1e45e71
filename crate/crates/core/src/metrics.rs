//! Solution quality: subspace distance, the stationarity pair and the
//! per-iteration record written to run logs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::manifold::{StiefelPoint, SwarmState};
use crate::problems::{global_riemannian_grad, LocalObjective};

/// `d_s(x, y) = min_{Q in O(r)} ||x Q - y||_F` for orthonormal `x`, `y`.
///
/// With `x^T y = P S Q^T` the minimizer is `P Q^T`. The residual is evaluated
/// directly rather than as `sqrt(2r - 2 tr S)`, which loses half the digits
/// near zero.
pub fn subspace_distance(x: &StiefelPoint, y: &StiefelPoint) -> Result<f64> {
    if x.dims() != y.dims() {
        return Err(Error::dims(
            "subspace_distance",
            format!("{:?}", x.dims()),
            format!("{:?}", y.dims()),
        ));
    }
    let cross = x.as_matrix().tr_mul(y.as_matrix());
    let svd = SVD::new(cross, true, true);
    let rotation = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    Ok((x.as_matrix() * rotation - y.as_matrix()).norm())
}

/// [`subspace_distance`] between the column spaces of arbitrary full-rank
/// matrices; both are orthonormalized by thin QR first.
pub fn subspace_distance_general(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    subspace_distance(&StiefelPoint::orthonormalize(a)?, &StiefelPoint::orthonormalize(b)?)
}

/// The two quantities of epsilon-stationarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stationarity {
    /// `(1/n) sum_i ||x_i - xbar||^2`.
    pub consensus_err_sq: f64,
    /// `||grad f(xbar)||^2`.
    pub grad_norm_sq: f64,
}

impl Stationarity {
    pub fn is_stationary(&self, eps: f64) -> bool {
        self.consensus_err_sq <= eps && self.grad_norm_sq <= eps
    }
}

pub fn stationarity_measure<O: LocalObjective>(s: &SwarmState, locals: &[O]) -> Result<Stationarity> {
    let snap = s.consensus_snapshot()?;
    let g = global_riemannian_grad(locals, &snap.mean)?;
    Ok(Stationarity {
        consensus_err_sq: snap.consensus_err_sq,
        grad_norm_sq: g.norm_squared(),
    })
}

/// Column order of run logs.
pub const CSV_HEADER: &str = "k,consensus_err_sq,linf_err,grad_norm_sq,f_bar,ds_oracle,beta_k,elapsed_ms";

/// One row of a run log. `k` counts iterations for deterministic methods and
/// epochs for stochastic ones.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub consensus_err_sq: f64,
    pub linf_err: f64,
    pub grad_norm_sq: f64,
    pub f_bar: f64,
    pub ds_oracle: Option<f64>,
    pub beta_k: f64,
    pub elapsed_ms: Option<f64>,
}

impl IterationRecord {
    /// Values in [`CSV_HEADER`] order; floats in shortest round-trip form,
    /// absent values as empty fields.
    pub fn csv_row(&self) -> String {
        let mut out = String::new();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.k,
            fmt_float(self.consensus_err_sq),
            fmt_float(self.linf_err),
            fmt_float(self.grad_norm_sq),
            fmt_float(self.f_bar),
            self.ds_oracle.map(fmt_float).unwrap_or_default(),
            fmt_float(self.beta_k),
            self.elapsed_ms.map(fmt_float).unwrap_or_default(),
        );
        out
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}
