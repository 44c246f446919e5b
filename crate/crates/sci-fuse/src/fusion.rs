//! Split Covariance Intersection for a single inter-agent distance
//! measurement.
//!
//! Agent A holds a consistent estimate `(x̂_A, P_A)`, agent B holds
//! `(x̂_B, P_B)`, and a scalar range between them is observed with
//! independent noise variance `σ_m²`. The cross-covariance of the two
//! estimation errors is unknown, so A fuses the measurement through the
//! one-parameter SCI family: for every mixing weight `ω ∈ [0,1)` the pair
//! `(covariance(ω), gain(ω))` is a consistent linear update, whatever the
//! true correlation. Picking `ω` is the job of the solver module; the
//! functions here evaluate the family itself, the error covariance a
//! hypothesized correlation would actually produce, and the clairvoyant
//! (known-correlation) optimum used as a benchmark.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::psd::{SymMatrix, DEFAULT_PSD_TOL};

/// Minimum mean separation for the range linearization to be accepted.
/// Far below any physical inter-agent distance, far above rounding noise.
pub const EPS_SEP: f64 = 1e-6;

/// A mean vector plus a consistent covariance for one agent's state.
#[derive(Debug, Clone)]
pub struct Estimate {
    mean: DVector<f64>,
    cov: SymMatrix,
}

impl Estimate {
    pub fn new(mean: DVector<f64>, cov: SymMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} entries but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if !cov.is_psd(DEFAULT_PSD_TOL) {
            return Err(Error::NotPsd(format!(
                "estimate covariance has min eigenvalue {:.3e}",
                cov.min_eigenvalue()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A scalar range observation: value, noise variance, and the unit
/// direction from B toward A along which it was linearized.
#[derive(Debug, Clone)]
pub struct DistanceMeasurement {
    value: f64,
    noise_var: f64,
    direction: DVector<f64>,
}

impl DistanceMeasurement {
    pub fn new(value: f64, noise_var: f64, direction: DVector<f64>) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidParameter(format!("measurement value {value} must be nonnegative")));
        }
        if !noise_var.is_finite() || noise_var < 0.0 {
            return Err(Error::InvalidParameter(format!("noise variance {noise_var} must be nonnegative")));
        }
        if (direction.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "direction norm {} is not 1 within 1e-12",
                direction.norm()
            )));
        }
        Ok(Self { value, noise_var, direction })
    }

    /// Build a measurement with the direction linearized from the two means.
    pub fn from_means(value: f64, noise_var: f64, xhat_a: &DVector<f64>, xhat_b: &DVector<f64>) -> Result<Self> {
        let direction = linearize_direction(xhat_a, xhat_b)?;
        Self::new(value, noise_var, direction)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }
}

/// The scalar projections driving every pertinence decision:
/// `σ_A² = u^T P_A u`, `σ_B² = u^T P_B u`, the concentration ratio
/// `r_A = (‖P_A u‖²/σ_A²)/trace(P_A)`, plus the invariants of `P_A`.
#[derive(Debug, Clone, Copy)]
pub struct DirectionalStats {
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    /// In (0, 1]; equals 1 exactly in the one-dimensional case.
    pub r_a: f64,
    pub trace_pa: f64,
    pub det_pa: f64,
    pub dim: usize,
}

/// A hypothesized true joint error covariance: blocks `P̃_A`, `P̃_B` and the
/// cross term `P̃_AB`. Construction checks the 2n x 2n block matrix is PSD;
/// membership in the admissible set additionally requires `P̃_A ⪯ P_A` and
/// `P̃_B ⪯ P_B` against a declared pair, see [`JointCorrelation::is_admissible_for`].
#[derive(Debug, Clone)]
pub struct JointCorrelation {
    pa_tilde: SymMatrix,
    pb_tilde: SymMatrix,
    cross: DMatrix<f64>,
}

impl JointCorrelation {
    pub fn new(pa_tilde: SymMatrix, pb_tilde: SymMatrix, cross: DMatrix<f64>) -> Result<Self> {
        let n = pa_tilde.dim();
        if pb_tilde.dim() != n || cross.nrows() != n || cross.ncols() != n {
            return Err(Error::DimensionMismatch("joint correlation blocks must share one dimension".into()));
        }
        let joint = Self { pa_tilde, pb_tilde, cross };
        if !joint.joint_matrix().is_psd(DEFAULT_PSD_TOL) {
            return Err(Error::NotPsd(format!(
                "joint block matrix has min eigenvalue {:.3e}",
                joint.joint_matrix().min_eigenvalue()
            )));
        }
        Ok(joint)
    }

    pub fn dim(&self) -> usize {
        self.pa_tilde.dim()
    }

    pub fn pa_tilde(&self) -> &SymMatrix {
        &self.pa_tilde
    }

    pub fn pb_tilde(&self) -> &SymMatrix {
        &self.pb_tilde
    }

    pub fn cross(&self) -> &DMatrix<f64> {
        &self.cross
    }

    /// The stacked `[[P̃_A, P̃_AB], [P̃_AB^T, P̃_B]]` matrix.
    pub fn joint_matrix(&self) -> SymMatrix {
        let n = self.dim();
        let m = DMatrix::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => self.pa_tilde.matrix()[(i, j)],
            (true, false) => self.cross[(i, j - n)],
            (false, true) => self.cross[(j, i - n)],
            (false, false) => self.pb_tilde.matrix()[(i - n, j - n)],
        });
        SymMatrix::new(m).expect("block matrix is square by construction")
    }

    /// Membership in the admissible set for a declared `(P_A, P_B)` pair.
    pub fn is_admissible_for(&self, pa: &SymMatrix, pb: &SymMatrix, tol: f64) -> Result<bool> {
        Ok(self.pa_tilde.loewner_leq(pa, tol)?
            && self.pb_tilde.loewner_leq(pb, tol)?
            && self.joint_matrix().is_psd(tol))
    }

    /// Directional projections `(σ̃_A², σ̃_B², γ̃)` along `u`.
    pub fn projections(&self, u: &DVector<f64>) -> (f64, f64, f64) {
        let sa2 = self.pa_tilde.quadratic_form(u);
        let sb2 = self.pb_tilde.quadratic_form(u);
        let gamma = (u.transpose() * &self.cross * u)[(0, 0)];
        (sa2, sb2, gamma)
    }
}

/// The free gain vector of an unbiased linear filter. The matrix gains
/// `K = I - w u^T` and `L = w u^T` are definitional and never stored.
#[derive(Debug, Clone)]
pub struct FilterGain {
    w: DVector<f64>,
}

impl FilterGain {
    pub fn new(w: DVector<f64>) -> Self {
        Self { w }
    }

    pub fn zero(n: usize) -> Self {
        Self { w: DVector::zeros(n) }
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// Unit vector from B's mean toward A's mean. Errors when the means are
/// closer than [`EPS_SEP`], where the linearization is invalid.
pub fn linearize_direction(xhat_a: &DVector<f64>, xhat_b: &DVector<f64>) -> Result<DVector<f64>> {
    if xhat_a.len() != xhat_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "means have lengths {} and {}",
            xhat_a.len(),
            xhat_b.len()
        )));
    }
    let diff = xhat_a - xhat_b;
    let norm = diff.norm();
    if norm <= EPS_SEP {
        return Err(Error::DegenerateGeometry(format!(
            "mean separation {norm:.3e} is below {EPS_SEP:.1e}; range linearization invalid"
        )));
    }
    Ok(diff / norm)
}

/// Project both covariances onto the measurement direction.
/// Errors when `u` lies in the null space of `P_A` (the ratio `r_A` is
/// undefined there).
pub fn directional_stats(pa: &SymMatrix, pb: &SymMatrix, u: &DVector<f64>) -> Result<DirectionalStats> {
    let n = pa.dim();
    if pb.dim() != n || u.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "directional_stats: P_A is {}x{}, P_B is {}x{}, u has {}",
            n,
            n,
            pb.dim(),
            pb.dim(),
            u.len()
        )));
    }
    let sigma_a2 = pa.quadratic_form(u);
    let sigma_b2 = pb.quadratic_form(u);
    if sigma_a2 <= 0.0 {
        return Err(Error::DegenerateInformation(
            "direction lies in the null space of P_A; directional ratio undefined".into(),
        ));
    }
    let pa_u = pa.matrix() * u;
    let trace_pa = pa.trace();
    // r_A <= 1 holds analytically (with equality in one dimension); clamp
    // the rounding in both directions.
    let r_a = if n == 1 {
        1.0
    } else {
        ((pa_u.norm_squared() / sigma_a2) / trace_pa).min(1.0)
    };
    Ok(DirectionalStats {
        sigma_a2,
        sigma_b2,
        r_a,
        trace_pa,
        det_pa: pa.determinant(),
        dim: n,
    })
}

/// The SCI denominator `D(ω) = ω σ_A² + (1-ω)(σ_B² + ω σ_m²)`.
#[inline]
pub(crate) fn sci_denominator(sigma_a2: f64, sigma_b2: f64, sigma_m2: f64, omega: f64) -> f64 {
    omega * sigma_a2 + (1.0 - omega) * (sigma_b2 + omega * sigma_m2)
}

fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::InvalidParameter(format!("omega {omega} outside [0, 1)")));
    }
    Ok(())
}

/// SCI covariance at mixing weight `ω`, in the inverse-free rank-one form
/// `P_A/(1-ω) - ω (P_A u)(P_A u)^T / ((1-ω) D(ω))`. At `ω = 0` this is
/// `P_A` exactly.
pub fn sci_covariance(
    pa: &SymMatrix,
    sigma_b2: f64,
    sigma_m2: f64,
    u: &DVector<f64>,
    omega: f64,
) -> Result<SymMatrix> {
    check_omega(omega)?;
    if u.len() != pa.dim() {
        return Err(Error::DimensionMismatch("sci_covariance: u does not match P_A".into()));
    }
    if omega == 0.0 {
        return Ok(pa.clone());
    }
    let sigma_a2 = pa.quadratic_form(u);
    let d = sci_denominator(sigma_a2, sigma_b2, sigma_m2, omega);
    if d <= 0.0 {
        return Err(Error::DegenerateInformation(format!("SCI denominator D({omega}) = {d}")));
    }
    let pa_u = pa.matrix() * u;
    let m = (pa.matrix() - (omega / d) * &pa_u * pa_u.transpose()) / (1.0 - omega);
    SymMatrix::new(m)
}

/// SCI gain `w(ω) = ω/D(ω) · P_A u`; the zero vector at `ω = 0`.
pub fn sci_gain(
    pa: &SymMatrix,
    stats: &DirectionalStats,
    sigma_m2: f64,
    u: &DVector<f64>,
    omega: f64,
) -> Result<FilterGain> {
    check_omega(omega)?;
    if u.len() != pa.dim() {
        return Err(Error::DimensionMismatch("sci_gain: u does not match P_A".into()));
    }
    if omega == 0.0 {
        return Ok(FilterGain::zero(pa.dim()));
    }
    let d = sci_denominator(stats.sigma_a2, stats.sigma_b2, sigma_m2, omega);
    if d <= 0.0 {
        return Err(Error::DegenerateInformation(format!("SCI denominator D({omega}) = {d}")));
    }
    Ok(FilterGain::new(pa.matrix() * u * (omega / d)))
}

/// Apply an unbiased linear filter in correction form:
/// `x̂_F = x̂_A + w ⋅ (z - u^T(x̂_A - x̂_B))`.
///
/// The caller must pass the same direction used to build the gain.
pub fn apply_linear_filter(
    est_a: &Estimate,
    est_b: &Estimate,
    meas: &DistanceMeasurement,
    gain: &FilterGain,
) -> Result<DVector<f64>> {
    let n = est_a.dim();
    if est_b.dim() != n || meas.direction.len() != n || gain.dim() != n {
        return Err(Error::DimensionMismatch("apply_linear_filter: inputs disagree on dimension".into()));
    }
    let innovation = meas.value - meas.direction.dot(&(est_a.mean() - est_b.mean()));
    Ok(est_a.mean() + gain.w() * innovation)
}

/// Innovation `z - u^T(x̂_A - x̂_B)`, surfaced as a diagnostic.
pub fn innovation(est_a: &Estimate, est_b: &Estimate, meas: &DistanceMeasurement) -> f64 {
    meas.value - meas.direction.dot(&(est_a.mean() - est_b.mean()))
}

/// Error covariance an unbiased linear filter with gain `w` would actually
/// have under a hypothesized joint correlation:
/// `P̃_F = P̃_A + (σ̃_A² + σ̃_B² - 2γ̃ + σ_m²) w w^T - v w^T - w v^T` with
/// `v = (P̃_A - P̃_AB) u`. The result is symmetrized to suppress rounding
/// asymmetry.
pub fn mse_under_correlation(
    joint: &JointCorrelation,
    gain: &FilterGain,
    u: &DVector<f64>,
    sigma_m2: f64,
) -> Result<SymMatrix> {
    let n = joint.dim();
    if gain.dim() != n || u.len() != n {
        return Err(Error::DimensionMismatch("mse_under_correlation: inputs disagree on dimension".into()));
    }
    let (sa2, sb2, gamma) = joint.projections(u);
    let s = sa2 + sb2 - 2.0 * gamma + sigma_m2;
    let v = (joint.pa_tilde.matrix() - &joint.cross) * u;
    let w = gain.w();
    let m = joint.pa_tilde.matrix() + s * w * w.transpose() - &v * w.transpose() - w * v.transpose();
    SymMatrix::new(m)
}

/// Optimal linear filter when the true joint covariance is known: the
/// classical Kalman-style update. Returns the fused mean and MSE.
///
/// When the innovation variance is zero the measurement carries no new
/// information; the estimate passes through unchanged (the correction
/// direction is then necessarily zero as well).
pub fn clairvoyant_fusion(
    joint: &JointCorrelation,
    est_a: &Estimate,
    est_b: &Estimate,
    meas: &DistanceMeasurement,
) -> Result<(DVector<f64>, SymMatrix)> {
    let n = est_a.dim();
    if joint.dim() != n || est_b.dim() != n || meas.direction.len() != n {
        return Err(Error::DimensionMismatch("clairvoyant_fusion: inputs disagree on dimension".into()));
    }
    let u = &meas.direction;
    let (sa2, sb2, gamma) = joint.projections(u);
    let denom = sa2 + sb2 - 2.0 * gamma + meas.noise_var;
    let v = (joint.pa_tilde.matrix() - &joint.cross) * u;
    if denom <= 0.0 {
        let v_scale = 1.0 + joint.pa_tilde.max_abs();
        if v.norm() <= 1e-12 * v_scale {
            return Ok((est_a.mean().clone(), joint.pa_tilde.clone()));
        }
        return Err(Error::DegenerateInformation(format!(
            "clairvoyant innovation variance {denom:.3e} is not positive"
        )));
    }
    let innov = innovation(est_a, est_b, meas);
    let mean = est_a.mean() + &v * (innov / denom);
    let cov = SymMatrix::new(joint.pa_tilde.matrix() - &v * v.transpose() / denom)?;
    Ok((mean, cov))
}
