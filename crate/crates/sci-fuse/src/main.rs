//! Command-line surface: fuse a scenario, query pertinence, sweep the cost
//! functions over ω, certify consistency, and export ellipse polylines for
//! external plotting.
//!
//! Exit codes: 0 success, 1 computational error, 2 input/validation error.
//! Errors are emitted as JSON on stderr.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sci_fuse::{
    check_consistency, cost_det, cost_trace, directional_stats, ellipse_boundary, load_scenario,
    mse_under_correlation, optimal_sci_filter, run_fusion, sample_admissible_joint, sci_gain,
    solve_omega_det, solve_omega_trace, CostParams, Error, ObjectiveKind, Result, Scenario, SeededRng,
    SymMatrix, OMEGA_MAX,
};

#[derive(Parser)]
#[command(name = "sci-fuse", version, about = "SCI fusion of inter-agent distance measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Trace,
    Det,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(value: ObjectiveArg) -> Self {
        match value {
            ObjectiveArg::Trace => ObjectiveKind::Trace,
            ObjectiveArg::Det => ObjectiveKind::Det,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Write the output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override; falls back to SCI_FUSE_SEED, then the scenario seed
    #[arg(long, env = "SCI_FUSE_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse a scenario and print the resulting record as JSON
    Fuse {
        scenario: PathBuf,
        /// Override the scenario's objective
        #[arg(long)]
        objective: Option<ObjectiveArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Report the pertinence predicates and directional statistics
    Pertinence {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// CSV sweep of the trace and determinant costs over omega
    Sweep {
        scenario: PathBuf,
        /// Number of uniformly spaced omega values in [0, 1-1e-6]
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Certify the Loewner consistency bound at a given omega
    Verify {
        scenario: PathBuf,
        /// Number of sampled admissible joints
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// A value in [0, 1), or "star" for the scenario's optimum
        #[arg(long, default_value = "star")]
        omega: String,
        /// Parallel sampling workers, each with its own RNG stream
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Export ellipse boundary polylines (CSV) for external plotting
    Ellipses {
        scenario: PathBuf,
        /// Boundary points per ellipse
        #[arg(long, default_value_t = 128)]
        points: usize,
        /// Number of sampled hypothetical error covariances
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            f.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                f.write_all(b"\n")?;
            }
            Ok(())
        }
        None => {
            println!("{}", text.trim_end_matches('\n'));
            Ok(())
        }
    }
}

fn load_with_seed(path: &Path, common: &Common) -> Result<Scenario> {
    let mut scn = load_scenario(path)?;
    if let Some(seed) = common.seed {
        scn.seed = seed;
    }
    Ok(scn)
}

fn scenario_params(scn: &Scenario) -> Result<CostParams> {
    let u = scn.direction()?;
    let stats = directional_stats(scn.est_a.cov(), scn.est_b.cov(), &u)?;
    CostParams::new(stats, scn.sigma_m2)
}

fn solve_star(scn: &Scenario) -> Result<f64> {
    let params = scenario_params(scn)?;
    let solution = match scn.objective {
        ObjectiveKind::Trace => solve_omega_trace(&params)?,
        ObjectiveKind::Det => solve_omega_det(&params)?,
    };
    Ok(solution.omega)
}

fn cmd_fuse(path: &Path, objective: Option<ObjectiveArg>, common: &Common) -> Result<()> {
    let mut scn = load_with_seed(path, common)?;
    if let Some(obj) = objective {
        scn.objective = obj.into();
    }
    let record = run_fusion(&scn)?;
    emit(common, &serde_json::to_string_pretty(&record).expect("record serializes"))
}

fn cmd_pertinence(path: &Path, common: &Common) -> Result<()> {
    let scn = load_with_seed(path, common)?;
    let u = scn.direction()?;
    let stats = directional_stats(scn.est_a.cov(), scn.est_b.cov(), &u)?;
    let out = json!({
        "necessary": sci_fuse::necessary_condition(&stats),
        "trace": sci_fuse::trace_pertinent(&stats),
        "det": sci_fuse::det_pertinent(&stats),
        "sigma_a2": stats.sigma_a2,
        "sigma_b2": stats.sigma_b2,
        "r_a": stats.r_a,
    });
    emit(common, &serde_json::to_string_pretty(&out).expect("json serializes"))
}

fn cmd_sweep(path: &Path, points: usize, common: &Common) -> Result<()> {
    if points < 2 {
        return Err(Error::InvalidParameter("--points must be at least 2".into()));
    }
    let scn = load_with_seed(path, common)?;
    let params = scenario_params(&scn)?;
    let top = 1.0 - 1e-6;
    let mut out = String::from("omega,trace_cost,det_cost\n");
    for i in 0..points {
        let omega = top * i as f64 / (points - 1) as f64;
        let g = cost_trace(omega, &params)?;
        let h = cost_det(omega, &params)?;
        out.push_str(&format!("{omega},{g},{h}\n"));
    }
    emit(common, &out)
}

fn cmd_verify(path: &Path, samples: usize, omega: &str, jobs: usize, common: &Common) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidParameter("--samples must be positive".into()));
    }
    if jobs == 0 {
        return Err(Error::InvalidParameter("--jobs must be positive".into()));
    }
    let scn = load_with_seed(path, common)?;
    let omega = match omega {
        "star" => solve_star(&scn)?.min(OMEGA_MAX),
        text => {
            let value: f64 = text
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("--omega must be a number or \"star\", got {text:?}")))?;
            if !(0.0..1.0).contains(&value) {
                return Err(Error::InvalidParameter(format!("--omega {value} outside [0, 1)")));
            }
            value
        }
    };
    let rng = SeededRng::new(scn.seed);
    let mut measurement_rng = rng.clone();
    let meas = scn.resolve_measurement(&mut measurement_rng)?;
    let report = check_consistency(&scn.est_a, &scn.est_b, &meas, omega, &rng, samples, jobs)?;
    let violating = report.violating_sample.as_ref().map(|j| {
        json!({
            "pa_tilde": sym_rows(j.pa_tilde()),
            "pb_tilde": sym_rows(j.pb_tilde()),
            "cross": (0..j.dim()).map(|i| (0..j.dim()).map(|c| j.cross()[(i, c)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    });
    let out = json!({
        "samples": report.samples,
        "omega": report.omega,
        "worst_violation": report.worst_violation,
        "scale": report.scale,
        "passed": report.passed,
        "violating_sample": violating,
    });
    emit(common, &serde_json::to_string_pretty(&out).expect("json serializes"))
}

fn sym_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.dim())
        .map(|i| (0..m.dim()).map(|j| m.matrix()[(i, j)]).collect())
        .collect()
}

fn push_polyline(out: &mut String, label: &str, poly: &sci_fuse::EllipsePolyline) {
    for (idx, p) in poly.points.iter().enumerate() {
        out.push_str(&format!("{label},{idx},{},{}\n", p[0], p[1]));
    }
}

fn cmd_ellipses(path: &Path, points: usize, samples: usize, common: &Common) -> Result<()> {
    let scn = load_with_seed(path, common)?;
    if scn.dim != 2 {
        return Err(Error::InvalidParameter(format!(
            "ellipse export requires a 2-D scenario, got dim = {}",
            scn.dim
        )));
    }
    if points == 0 {
        return Err(Error::InvalidParameter("--points must be positive".into()));
    }
    let rng = SeededRng::new(scn.seed);
    let mut measurement_rng = rng.clone();
    let meas = scn.resolve_measurement(&mut measurement_rng)?;
    let objective = scn.objective.cost_objective();
    let solution = optimal_sci_filter(&scn.est_a, &scn.est_b, &meas, &objective)?;

    let mut out = String::from("label,index,x,y\n");
    push_polyline(&mut out, "P_A", &ellipse_boundary(scn.est_a.cov(), scn.est_a.mean(), points)?);
    push_polyline(&mut out, "P_B", &ellipse_boundary(scn.est_b.cov(), scn.est_b.mean(), points)?);
    push_polyline(
        &mut out,
        "P_SCI_star",
        &ellipse_boundary(&solution.fused_cov, &solution.fused_mean, points)?,
    );

    let u = meas.direction();
    let stats = directional_stats(scn.est_a.cov(), scn.est_b.cov(), u)?;
    let omega = solution.omega_star.min(OMEGA_MAX);
    let gain = sci_gain(scn.est_a.cov(), &stats, meas.noise_var(), u, omega)?;
    let mut sample_rng = rng.worker_stream(0);
    for k in 0..samples {
        let joint = sample_admissible_joint(&mut sample_rng, scn.est_a.cov(), scn.est_b.cov())?;
        let mse = mse_under_correlation(&joint, &gain, u, meas.noise_var())?;
        // hypothesized MSEs can be singular (e.g. fully collapsed errors);
        // nudge those off the boundary so the boundary sampler is defined
        let plotted = if mse.eigenvalues()[0] > 1e-9 * mse.max_abs().max(1.0) {
            mse
        } else {
            SymMatrix::new(mse.matrix() + nalgebra::DMatrix::identity(2, 2) * 1e-9 * mse.max_abs().max(1.0))?
        };
        push_polyline(
            &mut out,
            &format!("P_tilde_F_{k}"),
            &ellipse_boundary(&plotted, &solution.fused_mean, points)?,
        );
    }
    emit(common, &out)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fuse { scenario, objective, common } => cmd_fuse(scenario, *objective, common),
        Command::Pertinence { scenario, common } => cmd_pertinence(scenario, common),
        Command::Sweep { scenario, points, common } => cmd_sweep(scenario, *points, common),
        Command::Verify { scenario, samples, omega, jobs, common } => {
            cmd_verify(scenario, *samples, omega, *jobs, common)
        }
        Command::Ellipses { scenario, points, samples, common } => {
            cmd_ellipses(scenario, *points, *samples, common)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = json!({ "kind": err.kind(), "message": err.to_string() });
        eprintln!("{}", payload);
        std::process::exit(err.exit_code());
    }
}
