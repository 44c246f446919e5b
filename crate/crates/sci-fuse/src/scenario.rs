//! Scenario files and single-shot fusion experiments: load a two-agent
//! configuration, optionally synthesize a noisy range measurement from
//! ground truth, run the pertinence gate and SCI fusion, and emit a
//! machine-readable record.
//!
//! Scenario format (UTF-8 JSON, unknown keys rejected):
//!
//! ```json
//! {
//!   "name": "fig1",
//!   "dim": 2,
//!   "truth_a": [0.0, 0.0],
//!   "truth_b": [20.0, 0.0],
//!   "est_a": { "mean": [0.0, 0.0], "cov": [[16.0, 8.0], [8.0, 9.0]] },
//!   "est_b": { "mean": [20.0, 0.0], "cov": [[1.0, 1.0], [1.0, 4.0]] },
//!   "sigma_m2": 1.0,
//!   "objective": "trace",
//!   "seed": 7
//! }
//! ```
//!
//! `sigma_m2` is the measurement noise variance (not a standard
//! deviation). `truth_a`/`truth_b` and `measurement` are optional, but when
//! `measurement` is absent both truths must be present so one can be
//! synthesized. Covariances are row-major with a symmetry tolerance of
//! 1e-9.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{directional_stats, innovation, linearize_direction, DistanceMeasurement, Estimate};
use crate::omega::{optimal_sci_filter, SolveMethod, OMEGA_MAX};
use crate::oracle::{check_consistency, ConsistencySummary, SeededRng};
use crate::pertinence::{det_pertinent, necessary_condition, trace_pertinent, CostObjective};
use crate::psd::SymMatrix;

/// Which closed-form objective a scenario optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Trace,
    Det,
}

impl ObjectiveKind {
    pub fn cost_objective(&self) -> CostObjective {
        match self {
            ObjectiveKind::Trace => CostObjective::Trace,
            ObjectiveKind::Det => CostObjective::Determinant,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateFile {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    dim: usize,
    #[serde(default)]
    truth_a: Option<Vec<f64>>,
    #[serde(default)]
    truth_b: Option<Vec<f64>>,
    est_a: EstimateFile,
    est_b: EstimateFile,
    sigma_m2: f64,
    #[serde(default)]
    measurement: Option<f64>,
    objective: ObjectiveKind,
    seed: u64,
}

/// A validated two-agent fusion configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub truth_a: Option<DVector<f64>>,
    pub truth_b: Option<DVector<f64>>,
    pub est_a: Estimate,
    pub est_b: Estimate,
    pub sigma_m2: f64,
    pub measurement: Option<f64>,
    pub objective: ObjectiveKind,
    pub seed: u64,
}

const SYMMETRY_TOL: f64 = 1e-9;

fn estimate_from_file(field: &str, dim: usize, file: EstimateFile) -> Result<Estimate> {
    if file.mean.len() != dim {
        return Err(Error::InvalidScenario(format!(
            "{field}.mean has {} entries, expected dim = {dim}",
            file.mean.len()
        )));
    }
    if file.cov.len() != dim || file.cov.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidScenario(format!("{field}.cov is not {dim}x{dim}")));
    }
    let scale = file
        .cov
        .iter()
        .flatten()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..dim {
        for j in (i + 1)..dim {
            if (file.cov[i][j] - file.cov[j][i]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidScenario(format!(
                    "{field}.cov entries ({i},{j}) and ({j},{i}) differ beyond the 1e-9 symmetry band"
                )));
            }
        }
    }
    let cov = SymMatrix::from_rows(&file.cov)?;
    Estimate::new(DVector::from_vec(file.mean), cov)
        .map_err(|e| Error::InvalidScenario(format!("{field}: {e}")))
}

fn truth_from_file(field: &str, dim: usize, v: Option<Vec<f64>>) -> Result<Option<DVector<f64>>> {
    match v {
        None => Ok(None),
        Some(v) if v.len() == dim => Ok(Some(DVector::from_vec(v))),
        Some(v) => Err(Error::InvalidScenario(format!(
            "{field} has {} entries, expected dim = {dim}",
            v.len()
        ))),
    }
}

/// Parse and validate a scenario from JSON text.
pub fn load_scenario_str(json: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    if file.dim == 0 {
        return Err(Error::InvalidScenario("dim must be at least 1".into()));
    }
    if !file.sigma_m2.is_finite() || file.sigma_m2 < 0.0 {
        return Err(Error::InvalidScenario(format!("sigma_m2 = {} must be nonnegative", file.sigma_m2)));
    }
    if let Some(z) = file.measurement {
        if !z.is_finite() || z < 0.0 {
            return Err(Error::InvalidScenario(format!("measurement = {z} must be nonnegative")));
        }
    }
    let scenario = Scenario {
        est_a: estimate_from_file("est_a", file.dim, file.est_a)?,
        est_b: estimate_from_file("est_b", file.dim, file.est_b)?,
        truth_a: truth_from_file("truth_a", file.dim, file.truth_a)?,
        truth_b: truth_from_file("truth_b", file.dim, file.truth_b)?,
        name: file.name,
        dim: file.dim,
        sigma_m2: file.sigma_m2,
        measurement: file.measurement,
        objective: file.objective,
        seed: file.seed,
    };
    if scenario.measurement.is_none() && (scenario.truth_a.is_none() || scenario.truth_b.is_none()) {
        return Err(Error::InvalidScenario(
            "measurement is absent, so both truth_a and truth_b are required".into(),
        ));
    }
    Ok(scenario)
}

/// Load a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    load_scenario_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

impl Scenario {
    /// Direction linearized from the estimate means (the filter and its
    /// consistency analysis are built on that linearization point, never on
    /// the truths).
    pub fn direction(&self) -> Result<DVector<f64>> {
        linearize_direction(self.est_a.mean(), self.est_b.mean())
    }

    /// The stored measurement, or one synthesized from the ground truths.
    pub fn resolve_measurement(&self, rng: &mut SeededRng) -> Result<DistanceMeasurement> {
        let z = match self.measurement {
            Some(z) => z,
            None => synthesize_measurement(self, rng)?,
        };
        DistanceMeasurement::new(z, self.sigma_m2, self.direction()?)
    }
}

/// Draw `z = ‖truth_a - truth_b‖ + Gaussian(0, σ_m²)`.
pub fn synthesize_measurement(scn: &Scenario, rng: &mut SeededRng) -> Result<f64> {
    match (&scn.truth_a, &scn.truth_b) {
        (Some(a), Some(b)) => Ok((a - b).norm() + scn.sigma_m2.sqrt() * rng.normal()),
        _ => Err(Error::InvalidScenario(
            "cannot synthesize a measurement without truth_a and truth_b".into(),
        )),
    }
}

/// Everything a single fusion run produced, in stable key order.
#[derive(Debug, Clone, Serialize)]
pub struct FusionRecord {
    pub scenario: String,
    pub dim: usize,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub direction: Vec<f64>,
    pub sigma_a2: f64,
    pub sigma_b2: f64,
    pub r_a: f64,
    pub necessary_condition: bool,
    pub trace_pertinent: bool,
    pub det_pertinent: bool,
    pub measurement: f64,
    pub innovation: f64,
    pub omega_star: f64,
    pub method: SolveMethod,
    pub pertinent: bool,
    pub objective_before: f64,
    pub objective_after: f64,
    pub fused_mean: Vec<f64>,
    pub fused_cov: Vec<Vec<f64>>,
    pub consistency: ConsistencySummary,
    pub diagnostics: Vec<String>,
}

pub(crate) fn matrix_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.dim())
        .map(|i| (0..m.dim()).map(|j| m.matrix()[(i, j)]).collect())
        .collect()
}

/// Run the full pipeline on a scenario: direction from the estimate means,
/// measurement resolution, pertinence gate, optimal SCI fusion, and a
/// 1000-sample consistency certification. Deterministic for a given seed.
pub fn run_fusion(scn: &Scenario) -> Result<FusionRecord> {
    let rng = SeededRng::new(scn.seed);
    let mut measurement_rng = rng.clone();
    let meas = scn.resolve_measurement(&mut measurement_rng)?;
    let objective = scn.objective.cost_objective();
    let stats = directional_stats(scn.est_a.cov(), scn.est_b.cov(), meas.direction())?;
    let solution = optimal_sci_filter(&scn.est_a, &scn.est_b, &meas, &objective)?;
    let check_omega = solution.omega_star.min(OMEGA_MAX);
    let consistency = check_consistency(&scn.est_a, &scn.est_b, &meas, check_omega, &rng, 1000, 1)?;
    let objective_before = objective.evaluate(scn.est_a.cov());
    Ok(FusionRecord {
        scenario: scn.name.clone(),
        dim: scn.dim,
        objective: scn.objective,
        seed: scn.seed,
        direction: meas.direction().iter().copied().collect(),
        sigma_a2: stats.sigma_a2,
        sigma_b2: stats.sigma_b2,
        r_a: stats.r_a,
        necessary_condition: necessary_condition(&stats),
        trace_pertinent: trace_pertinent(&stats),
        det_pertinent: det_pertinent(&stats),
        measurement: meas.value(),
        innovation: innovation(&scn.est_a, &scn.est_b, &meas),
        omega_star: solution.omega_star,
        method: solution.method,
        pertinent: solution.pertinent,
        objective_before,
        objective_after: solution.objective_value,
        fused_mean: solution.fused_mean.iter().copied().collect(),
        fused_cov: matrix_rows(&solution.fused_cov),
        consistency: consistency.summary(),
        diagnostics: solution.diagnostics,
    })
}
