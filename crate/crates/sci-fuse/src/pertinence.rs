//! Cost functions over the SCI family and the decision layer: is there any
//! SCI filter strictly better than keeping `(x̂_A, P_A)`?
//!
//! For the trace and the determinant the answer is closed-form:
//! a trace-improving filter exists iff `σ_B² < r_A σ_A²`, and a
//! determinant-improving one iff `σ_B² < σ_A²/n`. Neither condition
//! involves the measurement noise: if the helper is not precise enough in
//! the measurement direction, even a perfect range cannot help. A custom
//! increasing objective is handled by verifying convexity of
//! `f(ω) = J(P_SCI(ω))` numerically and testing the one-sided derivative
//! at zero, falling back to grid minimization when convexity cannot be
//! certified.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fusion::{directional_stats, sci_covariance, sci_denominator, DirectionalStats};
use crate::psd::SymMatrix;

/// An increasing cost over covariance matrices. `Custom` evaluators must be
/// strictly increasing in the Loewner order (asserted by the caller, spot
/// checked by the test harness) and safe to call concurrently.
#[derive(Clone)]
pub enum CostObjective {
    Trace,
    Determinant,
    Custom(Arc<dyn Fn(&SymMatrix) -> f64 + Send + Sync>),
}

impl fmt::Debug for CostObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostObjective::Trace => write!(f, "Trace"),
            CostObjective::Determinant => write!(f, "Determinant"),
            CostObjective::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl CostObjective {
    pub fn evaluate(&self, m: &SymMatrix) -> f64 {
        match self {
            CostObjective::Trace => m.trace(),
            CostObjective::Determinant => m.determinant(),
            CostObjective::Custom(f) => f(m),
        }
    }
}

/// The scalar arguments of the closed-form cost functions.
#[derive(Debug, Clone, Copy)]
pub struct CostParams {
    pub stats: DirectionalStats,
    pub sigma_m2: f64,
}

impl CostParams {
    pub fn new(stats: DirectionalStats, sigma_m2: f64) -> Result<Self> {
        if !sigma_m2.is_finite() || sigma_m2 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "measurement variance {sigma_m2} must be nonnegative"
            )));
        }
        Ok(Self { stats, sigma_m2 })
    }

    pub(crate) fn denominator(&self, omega: f64) -> f64 {
        sci_denominator(self.stats.sigma_a2, self.stats.sigma_b2, self.sigma_m2, omega)
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::InvalidParameter(format!("omega {omega} outside [0, 1)")));
    }
    Ok(())
}

/// Trace of the SCI covariance as a scalar formula:
/// `g(ω) = trace(P_A)/(1-ω) · [1 - ω r_A σ_A² / D(ω)]`, with `g(0)` defined
/// as `trace(P_A)` exactly. When `r_A = 1` the `1/(1-ω)` pole cancels
/// algebraically and the equivalent form
/// `trace(P_A)·(σ_B² + ω σ_m²)/D(ω)` is used, which stays well conditioned
/// as `ω → 1`.
pub fn cost_trace(omega: f64, p: &CostParams) -> Result<f64> {
    check_omega(omega)?;
    if omega == 0.0 {
        return Ok(p.stats.trace_pa);
    }
    let d = p.denominator(omega);
    if d <= 0.0 {
        return Err(Error::DegenerateInformation(format!("SCI denominator D({omega}) = {d}")));
    }
    if p.stats.r_a == 1.0 {
        return Ok(p.stats.trace_pa * (p.stats.sigma_b2 + omega * p.sigma_m2) / d);
    }
    Ok(p.stats.trace_pa / (1.0 - omega) * (1.0 - omega * p.stats.r_a * p.stats.sigma_a2 / d))
}

/// Determinant of the SCI covariance as a scalar formula:
/// `h(ω) = |P_A|/(1-ω)^{n-1} · (σ_B² + ω σ_m²)/D(ω)`, with `h(0) = |P_A|`.
pub fn cost_det(omega: f64, p: &CostParams) -> Result<f64> {
    check_omega(omega)?;
    if omega == 0.0 {
        return Ok(p.stats.det_pa);
    }
    let d = p.denominator(omega);
    if d <= 0.0 {
        return Err(Error::DegenerateInformation(format!("SCI denominator D({omega}) = {d}")));
    }
    let n = p.stats.dim as i32;
    Ok(p.stats.det_pa / (1.0 - omega).powi(n - 1) * (p.stats.sigma_b2 + omega * p.sigma_m2) / d)
}

/// Everything needed to evaluate `J(P_SCI(ω))` for an arbitrary objective:
/// the closed-form parameters plus the matrix context for custom costs.
#[derive(Debug, Clone)]
pub struct CostContext {
    params: CostParams,
    pa: SymMatrix,
    u: DVector<f64>,
}

impl CostContext {
    pub fn new(pa: &SymMatrix, pb: &SymMatrix, u: &DVector<f64>, sigma_m2: f64) -> Result<Self> {
        let stats = directional_stats(pa, pb, u)?;
        Ok(Self {
            params: CostParams::new(stats, sigma_m2)?,
            pa: pa.clone(),
            u: u.clone(),
        })
    }

    /// Build from A's covariance and the helper's directional variance only
    /// (the helper never needs to transmit its full covariance).
    pub fn from_directional(pa: &SymMatrix, sigma_b2: f64, u: &DVector<f64>, sigma_m2: f64) -> Result<Self> {
        if !sigma_b2.is_finite() || sigma_b2 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "directional variance {sigma_b2} must be nonnegative"
            )));
        }
        let mut stats = directional_stats(pa, &SymMatrix::zeros(pa.dim()), u)?;
        stats.sigma_b2 = sigma_b2;
        Ok(Self {
            params: CostParams::new(stats, sigma_m2)?,
            pa: pa.clone(),
            u: u.clone(),
        })
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn stats(&self) -> &DirectionalStats {
        &self.params.stats
    }

    pub fn pa(&self) -> &SymMatrix {
        &self.pa
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn sci_covariance_at(&self, omega: f64) -> Result<SymMatrix> {
        sci_covariance(&self.pa, self.params.stats.sigma_b2, self.params.sigma_m2, &self.u, omega)
    }

    /// `J(P_SCI(ω))`. Trace and determinant go through the scalar formulas;
    /// custom objectives evaluate the covariance matrix.
    pub fn cost(&self, objective: &CostObjective, omega: f64) -> Result<f64> {
        match objective {
            CostObjective::Trace => cost_trace(omega, &self.params),
            CostObjective::Determinant => cost_det(omega, &self.params),
            CostObjective::Custom(f) => Ok(f(&self.sci_covariance_at(omega)?)),
        }
    }
}

/// Is fusing strictly necessary-condition-feasible at all: `σ_A² > σ_B²`.
/// When false, no SCI filter can help for any increasing objective.
pub fn necessary_condition(stats: &DirectionalStats) -> bool {
    stats.sigma_a2 > stats.sigma_b2
}

/// Trace pertinence: `σ_B² < r_A σ_A²` (strict; the boundary yields ω* = 0).
pub fn trace_pertinent(stats: &DirectionalStats) -> bool {
    stats.sigma_b2 < stats.r_a * stats.sigma_a2
}

/// Determinant pertinence: `σ_B² < σ_A² / n` (strict).
pub fn det_pertinent(stats: &DirectionalStats) -> bool {
    stats.sigma_b2 < stats.sigma_a2 / stats.dim as f64
}

/// One-sided derivative of `f(ω) = J(P_SCI(ω))` at `ω = 0`.
///
/// Closed forms for trace and determinant:
/// `g'(0) = trace(P_A)(1 - r_A σ_A²/σ_B²)` and
/// `h'(0) = |P_A|(n - σ_A²/σ_B²)`. A perfect helper along `u`
/// (`σ_B² = 0`) always helps when `σ_A² > 0`, so the limit is reported as
/// `-∞`. Custom objectives use a second-order one-sided finite difference
/// with step `1e-6`.
pub fn derivative_at_zero(objective: &CostObjective, ctx: &CostContext) -> Result<f64> {
    let stats = ctx.stats();
    match objective {
        CostObjective::Trace => {
            if stats.sigma_b2 == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(stats.trace_pa * (1.0 - stats.r_a * stats.sigma_a2 / stats.sigma_b2))
        }
        CostObjective::Determinant => {
            if stats.sigma_b2 == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(stats.det_pa * (stats.dim as f64 - stats.sigma_a2 / stats.sigma_b2))
        }
        CostObjective::Custom(_) => {
            let h = 1e-6;
            let f0 = ctx.cost(objective, 0.0)?;
            let f1 = ctx.cost(objective, h)?;
            let f2 = ctx.cost(objective, 2.0 * h)?;
            Ok((-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
        }
    }
}

/// Outcome of the generic pertinence decision.
#[derive(Debug, Clone)]
pub struct PertinenceReport {
    pub pertinent: bool,
    /// Whether convexity of the cost was established (closed-form objectives)
    /// or verified numerically (custom objectives).
    pub convexity_verified: bool,
    pub derivative_at_zero: Option<f64>,
    pub diagnostics: Vec<String>,
}

const CONVEXITY_GRID: usize = 256;
const GRID_OMEGA_MAX: f64 = 1.0 - 1e-6;

/// Decide pertinence for an arbitrary increasing objective.
///
/// Trace and determinant use their closed-form predicates (their costs are
/// provably convex). Custom objectives first check convexity of
/// `f(ω) = J(P_SCI(ω))` via second differences on a 256-point grid; if
/// convex, pertinence is `f'(0) < 0`, otherwise a grid minimization decides
/// and the report is flagged `convexity unverified`.
pub fn pertinent_generic(objective: &CostObjective, ctx: &CostContext) -> Result<PertinenceReport> {
    let stats = ctx.stats();
    match objective {
        CostObjective::Trace => {
            let d = derivative_at_zero(objective, ctx)?;
            Ok(PertinenceReport {
                pertinent: trace_pertinent(stats),
                convexity_verified: true,
                derivative_at_zero: Some(d),
                diagnostics: vec!["trace cost is convex; closed-form predicate".into()],
            })
        }
        CostObjective::Determinant => {
            let d = derivative_at_zero(objective, ctx)?;
            Ok(PertinenceReport {
                pertinent: det_pertinent(stats),
                convexity_verified: true,
                derivative_at_zero: Some(d),
                diagnostics: vec!["determinant cost is convex; closed-form predicate".into()],
            })
        }
        CostObjective::Custom(_) => {
            let mut values = Vec::with_capacity(CONVEXITY_GRID);
            for i in 0..CONVEXITY_GRID {
                let omega = GRID_OMEGA_MAX * i as f64 / (CONVEXITY_GRID - 1) as f64;
                values.push(ctx.cost(objective, omega)?);
            }
            // second differences against a stencil-local scale, so the
            // blow-up near ω = 1 cannot mask curvature violations near 0
            let convex = values.windows(3).all(|w| {
                let scale = w.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                w[2] - 2.0 * w[1] + w[0] >= -1e-8 * scale
            });
            let f0 = values[0];
            if convex {
                let d = derivative_at_zero(objective, ctx)?;
                Ok(PertinenceReport {
                    pertinent: d < 0.0,
                    convexity_verified: true,
                    derivative_at_zero: Some(d),
                    diagnostics: vec!["convexity verified on grid; derivative test".into()],
                })
            } else {
                let sol = crate::omega::solve_omega_numeric(|omega| ctx.cost(objective, omega))?;
                let scale = f0.abs().max(1.0);
                Ok(PertinenceReport {
                    pertinent: sol.objective_value < f0 - 1e-12 * scale,
                    convexity_verified: false,
                    derivative_at_zero: None,
                    diagnostics: vec!["convexity unverified; grid minimization fallback".into()],
                })
            }
        }
    }
}
