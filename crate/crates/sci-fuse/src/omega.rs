//! Choosing the SCI mixing weight: `ω* = argmin J(P_SCI(ω))` over `[0, 1)`.
//!
//! For the trace and the determinant the cost is a rational function whose
//! partial-fraction structure reduces the stationarity condition to a
//! quartic (trace) or cubic (determinant) polynomial, solved in closed
//! form. A noise-free measurement collapses the quadratics in that
//! structure to affine factors, so that boundary delegates to the numeric
//! path: a coarse grid followed by golden-section refinement, which also
//! serves arbitrary (possibly non-convex) custom objectives.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{
    apply_linear_filter, innovation, sci_gain, DistanceMeasurement, Estimate, FilterGain,
};
use crate::pertinence::{
    cost_det, cost_trace, det_pertinent, pertinent_generic, trace_pertinent, CostContext, CostObjective,
    CostParams,
};
use crate::poly;
use crate::psd::SymMatrix;

/// Margin representing the open right end of `[0, 1)`.
pub const EPS_OMEGA: f64 = 1e-9;
/// Largest mixing weight the numeric search will visit.
pub const OMEGA_MAX: f64 = 1.0 - EPS_OMEGA;
/// Relative improvement below which fusing is not worth claiming.
const IMPROVEMENT_RTOL: f64 = 1e-12;

/// How the winning `ω*` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Closed-form stationary points of the rational cost.
    Analytic,
    /// Coarse grid plus golden-section refinement.
    Numeric,
    /// The pertinence gate said no; `ω* = 0` without solving.
    BoundaryZero,
}

/// An `(ω*, J(P_SCI(ω*)))` pair with its provenance.
#[derive(Debug, Clone, Copy)]
pub struct OmegaSolution {
    pub omega: f64,
    pub objective_value: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionKind {
    Trace,
    Determinant,
}

/// Partial-fraction form of a rational SCI cost.
///
/// Trace: roots `[a, b, c, d]` with `a <= b <= 0 < 1 <= c < d` and
/// coefficients `[A, B, C]` of
/// `trace(P_A)·(A/(ω-1) + B/(ω-b) + C/(ω-d))`. For `σ_B² > 0` the
/// interlacing is strict with signs `A < 0, B > 0, C < 0`; `c = 1` exactly
/// in the fully-concentrated `r_A = 1` case, and a perfect helper
/// (`σ_B² = 0`) collapses `a = b = 0` with `B = 0`.
///
/// Determinant: roots `[a, b]` with `-σ_B²/σ_m² <= a <= 0 < 1 < b` and
/// coefficients `[A, B]` (`A >= 0, B < 0`) of
/// `|P_A|·(A/(ω-a) + B/(ω-b))/(1-ω)^{n-1}`.
#[derive(Debug, Clone)]
pub struct RationalDecomposition {
    pub kind: DecompositionKind,
    pub roots: Vec<f64>,
    pub coeffs: Vec<f64>,
    scale: f64,
    dim: usize,
}

impl RationalDecomposition {
    /// Reconstruct the cost from the partial fractions.
    pub fn evaluate(&self, omega: f64) -> f64 {
        match self.kind {
            DecompositionKind::Trace => {
                let (b, d) = (self.roots[1], self.roots[3]);
                let (ca, cb, cc) = (self.coeffs[0], self.coeffs[1], self.coeffs[2]);
                self.scale * (ca / (omega - 1.0) + cb / (omega - b) + cc / (omega - d))
            }
            DecompositionKind::Determinant => {
                let (a, b) = (self.roots[0], self.roots[1]);
                let (ca, cb) = (self.coeffs[0], self.coeffs[1]);
                self.scale * (ca / (omega - a) + cb / (omega - b))
                    / (1.0 - omega).powi(self.dim as i32 - 1)
            }
        }
    }

    /// Polynomial whose real roots in `(0, 1)` are the stationary points of
    /// the cost (coefficients highest degree first; quartic for the trace,
    /// cubic for the determinant).
    pub fn stationarity_polynomial(&self) -> Vec<f64> {
        match self.kind {
            DecompositionKind::Trace => {
                let (b, d) = (self.roots[1], self.roots[3]);
                let (ca, cb, cc) = (self.coeffs[0], self.coeffs[1], self.coeffs[2]);
                let sq = |p: f64, q: f64| {
                    let lin = poly::from_root_pair(p, q);
                    poly::convolve(&lin, &lin)
                };
                let mut out = vec![0.0; 5];
                for (c, factor) in [(ca, sq(b, d)), (cb, sq(1.0, d)), (cc, sq(1.0, b))] {
                    for (o, f) in out.iter_mut().zip(factor) {
                        *o += c * f;
                    }
                }
                out
            }
            DecompositionKind::Determinant => {
                let (a, b) = (self.roots[0], self.roots[1]);
                let (ca, cb) = (self.coeffs[0], self.coeffs[1]);
                let n = self.dim as f64;
                // derivative of (ω-x)^{-1}(1-ω)^{-(n-1)} cleared of its
                // denominator: (ω-y)² · [nω - (1 + (n-1)x)]
                let term = |x: f64, y: f64| {
                    poly::convolve(&[1.0, -2.0 * y, y * y], &[n, -(1.0 + (n - 1.0) * x)])
                };
                let mut out = vec![0.0; 4];
                for (c, factor) in [(ca, term(a, b)), (cb, term(b, a))] {
                    for (o, f) in out.iter_mut().zip(factor) {
                        *o += c * f;
                    }
                }
                out
            }
        }
    }
}

fn require_noisy_measurement(p: &CostParams) -> Result<()> {
    if p.sigma_m2 <= 0.0 {
        return Err(Error::DegenerateDecomposition(
            "rational decomposition needs sigma_m2 > 0; use the numeric path".into(),
        ));
    }
    Ok(())
}

/// Partial-fraction decomposition of the trace cost. Requires `σ_m² > 0`.
pub fn decompose_trace_rational(p: &CostParams) -> Result<RationalDecomposition> {
    require_noisy_measurement(p)?;
    let s = p.stats;
    // denominator quadratic P(ω) and numerator quadratic Q(ω) = P(ω) - r_A σ_A² ω
    let p_coeffs = [-p.sigma_m2, s.sigma_a2 - s.sigma_b2 + p.sigma_m2, s.sigma_b2];
    let q_coeffs = [
        -p.sigma_m2,
        (1.0 - s.r_a) * s.sigma_a2 - s.sigma_b2 + p.sigma_m2,
        s.sigma_b2,
    ];
    let pr = poly::real_roots(&p_coeffs);
    let qr = poly::real_roots(&q_coeffs);
    if pr.len() != 2 || qr.len() != 2 {
        return Err(Error::Internal(format!(
            "trace decomposition expected two roots per quadratic, got {pr:?} and {qr:?}"
        )));
    }
    let (b, d) = (pr[0], pr[1]);
    let (a, c) = (qr[0], qr[1]);
    let coeff_a = -(1.0 - a) * (1.0 - c) / ((1.0 - b) * (1.0 - d));
    let coeff_b = -(b - a) * (b - c) / ((b - 1.0) * (b - d));
    let coeff_c = -(d - a) * (d - c) / ((d - 1.0) * (d - b));
    Ok(RationalDecomposition {
        kind: DecompositionKind::Trace,
        roots: vec![a, b, c, d],
        coeffs: vec![coeff_a, coeff_b, coeff_c],
        scale: s.trace_pa,
        dim: s.dim,
    })
}

/// Partial-fraction decomposition of the determinant cost. Requires `σ_m² > 0`.
pub fn decompose_det_rational(p: &CostParams) -> Result<RationalDecomposition> {
    require_noisy_measurement(p)?;
    let s = p.stats;
    let p_coeffs = [-p.sigma_m2, s.sigma_a2 - s.sigma_b2 + p.sigma_m2, s.sigma_b2];
    let pr = poly::real_roots(&p_coeffs);
    if pr.len() != 2 {
        return Err(Error::Internal(format!(
            "determinant decomposition expected two roots, got {pr:?}"
        )));
    }
    let (a, b) = (pr[0], pr[1]);
    let ratio = s.sigma_b2 / p.sigma_m2;
    let coeff_a = -(a + ratio) / (a - b);
    let coeff_b = -(b + ratio) / (b - a);
    Ok(RationalDecomposition {
        kind: DecompositionKind::Determinant,
        roots: vec![a, b],
        coeffs: vec![coeff_a, coeff_b],
        scale: s.det_pa,
        dim: s.dim,
    })
}

fn golden_section<F>(f: &F, mut lo: f64, mut hi: f64, width: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = (lo, f(lo)?);
    let v_hi = f(hi)?;
    if v_hi < best.1 {
        best = (hi, v_hi);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > width {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        let (x, v) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Minimize an arbitrary objective over `[0, 1 - 1e-9]`: a 64-point coarse
/// grid locates the basin (surviving non-convex objectives), golden-section
/// search refines it to a bracket of width `1e-10`, and `ω*` is clamped to
/// zero unless the best value strictly improves on `f(0)` by more than
/// `1e-12` relative.
pub fn solve_omega_numeric<F>(f: F) -> Result<OmegaSolution>
where
    F: Fn(f64) -> Result<f64>,
{
    const GRID: usize = 64;
    let f0 = f(0.0)?;
    let xs: Vec<f64> = (0..GRID)
        .map(|i| OMEGA_MAX * i as f64 / (GRID - 1) as f64)
        .collect();
    let mut best_i = 0;
    let mut best_v = f0;
    for (i, &x) in xs.iter().enumerate() {
        let v = f(x)?;
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let lo = xs[best_i.saturating_sub(1)];
    let hi = xs[(best_i + 1).min(GRID - 1)];
    let (x, v) = golden_section(&f, lo, hi, 1e-10)?;
    if v >= f0 - IMPROVEMENT_RTOL * f0.abs() {
        return Ok(OmegaSolution { omega: 0.0, objective_value: f0, method: SolveMethod::Numeric });
    }
    Ok(OmegaSolution { omega: x, objective_value: v, method: SolveMethod::Numeric })
}

/// Trace cost in the `ω → 1` limit; finite only when `r_A = 1`.
fn trace_cost_at_one(p: &CostParams) -> f64 {
    p.stats.trace_pa * (p.stats.sigma_b2 + p.sigma_m2) / p.stats.sigma_a2
}

/// Determinant cost at `ω = 1` in one dimension.
fn det_cost_at_one(p: &CostParams) -> f64 {
    p.stats.det_pa * (p.stats.sigma_b2 + p.sigma_m2) / p.stats.sigma_a2
}

fn pick_candidate(candidates: &[(f64, f64)], value_at_zero: f64) -> OmegaSolution {
    let mut best = (0.0, value_at_zero);
    for &(omega, value) in candidates {
        if value < best.1 || (value == best.1 && omega < best.0) {
            best = (omega, value);
        }
    }
    // prefer not fusing when the improvement is indistinguishable from noise
    if best.1 >= value_at_zero - IMPROVEMENT_RTOL * value_at_zero.abs() {
        return OmegaSolution { omega: 0.0, objective_value: value_at_zero, method: SolveMethod::Analytic };
    }
    OmegaSolution { omega: best.0, objective_value: best.1, method: SolveMethod::Analytic }
}

/// Optimal `ω` for the trace objective.
///
/// Gated by the trace pertinence predicate (`ω* = 0` without solving when it
/// fails). With `σ_m² = 0` the decomposition degenerates and the numeric
/// path answers; otherwise the quartic stationarity polynomial is solved in
/// closed form and the best of its interior roots and the admissible
/// boundary points wins. `ω* = 1` is reachable only in one dimension, where
/// the cost extends continuously.
pub fn solve_omega_trace(p: &CostParams) -> Result<OmegaSolution> {
    let g0 = p.stats.trace_pa;
    if !trace_pertinent(&p.stats) {
        return Ok(OmegaSolution { omega: 0.0, objective_value: g0, method: SolveMethod::BoundaryZero });
    }
    if p.sigma_m2 <= 0.0 {
        return solve_omega_numeric(|omega| cost_trace(omega, p));
    }
    let decomposition = decompose_trace_rational(p)?;
    let quartic = decomposition.stationarity_polynomial();
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for root in poly::real_roots(&quartic) {
        if root > 0.0 && root <= OMEGA_MAX {
            candidates.push((root, cost_trace(root, p)?));
        }
    }
    candidates.push((OMEGA_MAX, cost_trace(OMEGA_MAX, p)?));
    if p.stats.dim == 1 {
        candidates.push((1.0, trace_cost_at_one(p)));
    }
    Ok(pick_candidate(&candidates, g0))
}

/// Optimal `ω` for the determinant objective; cubic analogue of
/// [`solve_omega_trace`], gated by the determinant predicate.
pub fn solve_omega_det(p: &CostParams) -> Result<OmegaSolution> {
    let h0 = p.stats.det_pa;
    if !det_pertinent(&p.stats) {
        return Ok(OmegaSolution { omega: 0.0, objective_value: h0, method: SolveMethod::BoundaryZero });
    }
    if p.sigma_m2 <= 0.0 {
        return solve_omega_numeric(|omega| cost_det(omega, p));
    }
    let decomposition = decompose_det_rational(p)?;
    let cubic = decomposition.stationarity_polynomial();
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for root in poly::real_roots(&cubic) {
        if root > 0.0 && root <= OMEGA_MAX {
            candidates.push((root, cost_det(root, p)?));
        }
    }
    candidates.push((OMEGA_MAX, cost_det(OMEGA_MAX, p)?));
    if p.stats.dim == 1 {
        candidates.push((1.0, det_cost_at_one(p)));
    }
    Ok(pick_candidate(&candidates, h0))
}

/// The complete output of one fusion decision.
#[derive(Debug, Clone)]
pub struct SciSolution {
    /// Winning mixing weight in `[0, 1]`; 1 is possible only in dimension 1.
    pub omega_star: f64,
    pub gain: FilterGain,
    pub fused_mean: DVector<f64>,
    pub fused_cov: SymMatrix,
    /// `J(fused_cov)`.
    pub objective_value: f64,
    /// True iff `ω* > 0` and the objective strictly improved.
    pub pertinent: bool,
    pub method: SolveMethod,
    pub diagnostics: Vec<String>,
}

/// Run the full pipeline: directional statistics, pertinence gate, `ω*`
/// solve, then gain/covariance/mean assembly. When no SCI filter helps, the
/// original estimate comes back unchanged with `pertinent = false`
/// (ignoring the measurement is always admissible).
pub fn optimal_sci_filter(
    est_a: &Estimate,
    est_b: &Estimate,
    meas: &DistanceMeasurement,
    objective: &CostObjective,
) -> Result<SciSolution> {
    let u = meas.direction();
    let ctx = CostContext::new(est_a.cov(), est_b.cov(), u, meas.noise_var())?;
    let mut diagnostics = vec![format!("innovation: {:.6e}", innovation(est_a, est_b, meas))];

    let solution = match objective {
        CostObjective::Trace => solve_omega_trace(ctx.params())?,
        CostObjective::Determinant => solve_omega_det(ctx.params())?,
        CostObjective::Custom(_) => {
            let report = pertinent_generic(objective, &ctx)?;
            diagnostics.extend(report.diagnostics.iter().cloned());
            if !report.pertinent {
                OmegaSolution {
                    omega: 0.0,
                    objective_value: objective.evaluate(est_a.cov()),
                    method: SolveMethod::BoundaryZero,
                }
            } else {
                solve_omega_numeric(|omega| ctx.cost(objective, omega))?
            }
        }
    };

    let value_at_zero = objective.evaluate(est_a.cov());
    if solution.omega == 0.0 {
        return Ok(SciSolution {
            omega_star: 0.0,
            gain: FilterGain::zero(est_a.dim()),
            fused_mean: est_a.mean().clone(),
            fused_cov: est_a.cov().clone(),
            objective_value: value_at_zero,
            pertinent: false,
            method: solution.method,
            diagnostics,
        });
    }

    let stats = ctx.stats();
    let (gain, fused_cov) = if solution.omega >= 1.0 {
        // one-dimensional boundary: the helper estimate replaces A's
        let gain = FilterGain::new(est_a.cov().matrix() * u / stats.sigma_a2);
        let cov = SymMatrix::scalar(stats.sigma_b2 + meas.noise_var());
        (gain, cov)
    } else {
        (
            sci_gain(est_a.cov(), stats, meas.noise_var(), u, solution.omega)?,
            ctx.sci_covariance_at(solution.omega)?,
        )
    };
    let fused_mean = apply_linear_filter(est_a, est_b, meas, &gain)?;
    let objective_value = objective.evaluate(&fused_cov);
    let pertinent = solution.omega > 0.0 && objective_value < value_at_zero;
    Ok(SciSolution {
        omega_star: solution.omega,
        gain,
        fused_mean,
        fused_cov,
        objective_value,
        pertinent,
        method: solution.method,
        diagnostics,
    })
}
