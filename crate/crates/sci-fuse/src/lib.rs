//! Covariance-consistent fusion of a single inter-agent distance
//! measurement via Split Covariance Intersection (SCI).
//!
//! Two agents hold estimates of their own states with known covariances
//! but an unknown cross-correlation between their errors. A scalar range
//! measurement between them, with independent noise, can be folded into
//! one agent's estimate through a one-parameter family of linear filters
//! that stays covariance-consistent for every admissible correlation.
//! This crate evaluates that family, decides whether fusing helps at all
//! (the *pertinence* question — a range between two agents can only ever
//! help the less certain one, and sometimes helps neither), finds the
//! optimal mixing weight analytically for the trace and determinant
//! objectives, and certifies the resulting covariance bound by randomized
//! search over the admissible correlation set.
//!
//! ```
//! use nalgebra::DVector;
//! use sci_fuse::{CostObjective, DistanceMeasurement, Estimate, SymMatrix};
//!
//! let pa = SymMatrix::from_rows(&[vec![16.0, 8.0], vec![8.0, 9.0]]).unwrap();
//! let pb = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 4.0]]).unwrap();
//! let a = Estimate::new(DVector::from_vec(vec![0.0, 0.0]), pa).unwrap();
//! let b = Estimate::new(DVector::from_vec(vec![20.0, 0.0]), pb).unwrap();
//! let z = DistanceMeasurement::from_means(19.6, 1.0, a.mean(), b.mean()).unwrap();
//!
//! let fused = sci_fuse::optimal_sci_filter(&a, &b, &z, &CostObjective::Trace).unwrap();
//! assert!(fused.pertinent);
//! assert!(fused.fused_cov.trace() < a.cov().trace());
//! ```

pub mod error;
pub mod fusion;
pub mod omega;
pub mod oracle;
pub mod pertinence;
pub mod poly;
pub mod psd;
pub mod scenario;

pub use error::{Error, Result};
pub use fusion::{
    apply_linear_filter, clairvoyant_fusion, directional_stats, innovation, linearize_direction,
    mse_under_correlation, sci_covariance, sci_gain, DirectionalStats, DistanceMeasurement, Estimate,
    FilterGain, JointCorrelation, EPS_SEP,
};
pub use omega::{
    decompose_det_rational, decompose_trace_rational, optimal_sci_filter, solve_omega_det,
    solve_omega_numeric, solve_omega_trace, OmegaSolution, RationalDecomposition, SciSolution,
    SolveMethod, EPS_OMEGA, OMEGA_MAX,
};
pub use oracle::{
    check_consistency, empirical_mse, sample_admissible_joint, worst_case_search,
    worst_case_search_with_bound, ConsistencyReport, ConsistencySummary, SeededRng, CONSISTENCY_TOL,
    RNG_ALGORITHM,
};
pub use pertinence::{
    cost_det, cost_trace, derivative_at_zero, det_pertinent, necessary_condition, pertinent_generic,
    trace_pertinent, CostContext, CostObjective, CostParams, PertinenceReport,
};
pub use psd::{ellipse_boundary, EllipsePolyline, SymMatrix, DEFAULT_PSD_TOL};
pub use scenario::{
    load_scenario, load_scenario_str, run_fusion, synthesize_measurement, FusionRecord, ObjectiveKind,
    Scenario,
};
