use crate::error::{Error, Result};
use crate::problems::SmoothnessConstants;

/// Gradient stepsize sequence `beta_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepsizeSchedule {
    /// `beta_k = beta0 / sqrt(k + 1)`.
    Diminishing { beta0: f64 },
    /// `beta_k = beta`.
    Constant { beta: f64 },
    /// A practical stepsize `beta_hat` rescaled to `beta` by the harness.
    User { beta_hat: f64, beta: f64 },
}

impl StepsizeSchedule {
    pub fn beta(&self, k: usize) -> f64 {
        match *self {
            StepsizeSchedule::Diminishing { beta0 } => beta0 / ((k + 1) as f64).sqrt(),
            StepsizeSchedule::Constant { beta } | StepsizeSchedule::User { beta, .. } => beta,
        }
    }

    pub fn is_diminishing(&self) -> bool {
        matches!(self, StepsizeSchedule::Diminishing { .. })
    }

    /// Zero stepsizes are allowed (they turn every method into DRCS);
    /// negative or non-finite ones are not.
    pub fn validate(&self) -> Result<()> {
        let b = self.beta(0);
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::param("beta", format!("{b} is not a valid stepsize")));
        }
        Ok(())
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} must be positive")))
    }
}

fn check_rho(rho_t: f64) -> Result<()> {
    if rho_t > 0.0 && rho_t < 1.0 {
        Ok(())
    } else {
        Err(Error::param("rho_t", format!("{rho_t} outside (0, 1)")))
    }
}

/// `beta_k = (1/sqrt(k+1)) min{1/(5 L_g), alpha delta1 / (5 D), (1 - rho_t) delta1 / D}`.
pub fn drsgd_diminishing_schedule(
    c: &SmoothnessConstants,
    rho_t: f64,
    alpha: f64,
    delta1: f64,
) -> Result<StepsizeSchedule> {
    positive("L_g", c.l_g)?;
    positive("D", c.d)?;
    positive("alpha", alpha)?;
    positive("delta1", delta1)?;
    check_rho(rho_t)?;
    let beta0 = (1.0 / (5.0 * c.l_g))
        .min(alpha * delta1 / (5.0 * c.d))
        .min((1.0 - rho_t) * delta1 / c.d);
    Ok(StepsizeSchedule::Diminishing { beta0 })
}

/// `beta = 1 / (2 L_G + Xi sqrt((K+1)/n))`. Needs an estimated `Xi`.
pub fn drsgd_constant_schedule(k: usize, n: usize, c: &SmoothnessConstants) -> Result<StepsizeSchedule> {
    positive("L_G", c.l_big_g)?;
    if n == 0 {
        return Err(Error::param("n", "no agents"));
    }
    let xi = c.xi.ok_or_else(|| Error::param("xi", "constant schedule needs an estimate of Xi"))?;
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::param("xi", format!("{xi} must be nonnegative")));
    }
    let beta = 1.0 / (2.0 * c.l_big_g + xi * ((k + 1) as f64 / n as f64).sqrt());
    Ok(StepsizeSchedule::Constant { beta })
}

/// Lower bound on `K + 1` from the computable half of the constant-stepsize
/// requirement, `(n / Xi^2) max{3 L_G, 5D/(alpha delta1), D delta1/(1-rho_t)}^2`.
/// The other half involves constants known only up to order, so the bound is
/// necessary, not sufficient.
pub fn drsgd_constant_min_iterations(
    n: usize,
    c: &SmoothnessConstants,
    rho_t: f64,
    alpha: f64,
    delta1: f64,
) -> Result<f64> {
    let xi = c.xi.ok_or_else(|| Error::param("xi", "constant schedule needs an estimate of Xi"))?;
    positive("xi", xi)?;
    positive("alpha", alpha)?;
    positive("delta1", delta1)?;
    check_rho(rho_t)?;
    let m = (3.0 * c.l_big_g)
        .max(5.0 * c.d / (alpha * delta1))
        .max(c.d * delta1 / (1.0 - rho_t));
    Ok(n as f64 / (xi * xi) * m * m)
}

/// `beta_bar = min{(1 - rho_t) delta1 / (L_G + 2D), alpha delta1 / (5 (L_G + 2D))}`.
pub fn drgta_max_stepsize(c: &SmoothnessConstants, rho_t: f64, alpha: f64, delta1: f64) -> Result<f64> {
    positive("L_G", c.l_big_g)?;
    positive("alpha", alpha)?;
    positive("delta1", delta1)?;
    check_rho(rho_t)?;
    let denom = c.l_big_g + 2.0 * c.d;
    Ok(((1.0 - rho_t) * delta1 / denom).min(alpha * delta1 / (5.0 * denom)))
}

/// The full theoretical DRGTA stepsize bound. Heuristic: the tracking bound
/// only fixes `C1` up to order, and `C1 = 2 / (1 - rho_t)^2` is substituted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrgtaStepsizeDiagnostic {
    pub beta_bar: f64,
    pub c1: f64,
    pub c0_tilde: f64,
    pub c2_tilde: f64,
    pub g0: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    /// `min{beta_bar, 1/(8 L_G), 1/(4 L_G (2 G3 + (8 C0~ + C2~/2) alpha delta1))}`.
    pub beta: f64,
}

pub fn drgta_theoretical_stepsize(
    c: &SmoothnessConstants,
    rho_t: f64,
    sigma2_t: f64,
    alpha: f64,
    delta1: f64,
    r: usize,
) -> Result<DrgtaStepsizeDiagnostic> {
    let beta_bar = drgta_max_stepsize(c, rho_t, alpha, delta1)?;
    if !(0.0..1.0).contains(&sigma2_t) {
        return Err(Error::param("sigma2_t", format!("{sigma2_t} outside [0, 1)")));
    }
    const M: f64 = crate::network::POLAR_M;
    let (lg, d) = (c.l_big_g, c.d);
    let c1 = 2.0 / (1.0 - rho_t).powi(2);
    let c0_tilde = 2.0 / (1.0 - rho_t).powi(2);
    let c2_tilde = 2.0 / (1.0 - sigma2_t).powi(2);
    let g0 = 4.0 * r as f64 * (lg + 2.0 * d).powi(2) * c1 / (lg * lg);
    let g1 = 1.0 + g0 + (2.0 * d * alpha + 8.0 * M * d * alpha * alpha) / lg + 13.0 * c1 * delta1 * delta1 * alpha.powi(4);
    let g2 = 2.0 * M * d / lg + delta1 * delta1 / 2.0 + 5.0;
    let g3 = g1 * c0_tilde + g0 * c0_tilde + g2;
    let third = 1.0 / (4.0 * lg * (2.0 * g3 + (8.0 * c0_tilde + 0.5 * c2_tilde) * alpha * delta1));
    Ok(DrgtaStepsizeDiagnostic {
        beta_bar,
        c1,
        c0_tilde,
        c2_tilde,
        g0,
        g1,
        g2,
        g3,
        beta: beta_bar.min(1.0 / (8.0 * lg)).min(third),
    })
}
