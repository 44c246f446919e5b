//! Cross-module invariants checked on randomized instances: the Loewner
//! guarantee through the public ordering predicate, convexity of the
//! closed-form costs, partial-fraction reconstruction, gate soundness, and
//! the tightness witness for the trace bound.

use nalgebra::{DMatrix, DVector};
use sci_fuse::{
    cost_det, cost_trace, decompose_det_rational, decompose_trace_rational, directional_stats,
    load_scenario, mse_under_correlation, optimal_sci_filter, sample_admissible_joint, sci_covariance,
    sci_gain, solve_omega_trace, CostObjective, CostParams, DistanceMeasurement, Estimate, SeededRng,
    SymMatrix,
};

fn random_psd(rng: &mut SeededRng, n: usize, scale: f64) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| rng.normal());
    SymMatrix::new((&g * g.transpose() + DMatrix::identity(n, n) * 0.05) * scale).unwrap()
}

fn random_unit(rng: &mut SeededRng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.normal());
        let norm = v.norm();
        if norm > 1e-3 {
            return v / norm;
        }
    }
}

/// The SCI guarantee expressed through the public Loewner predicate: every
/// sampled admissible joint keeps its error covariance below the SCI bound
/// for every omega on a grid.
#[test]
fn sci_bound_dominates_sampled_joints_via_loewner() {
    let mut rng = SeededRng::new(8);
    let omegas = [0.0, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-6];
    for i in 0..20 {
        let n = [1, 2, 3, 5][i % 4];
        let pa = random_psd(&mut rng, n, 2.0);
        let pb = random_psd(&mut rng, n, 0.5);
        let u = random_unit(&mut rng, n);
        let sigma_m2 = rng.uniform() * 2.0;
        let stats = directional_stats(&pa, &pb, &u).unwrap();
        for &omega in &omegas {
            let bound = sci_covariance(&pa, stats.sigma_b2, sigma_m2, &u, omega).unwrap();
            let gain = sci_gain(&pa, &stats, sigma_m2, &u, omega).unwrap();
            for _ in 0..50 {
                let joint = sample_admissible_joint(&mut rng, &pa, &pb).unwrap();
                let mse = mse_under_correlation(&joint, &gain, &u, sigma_m2).unwrap();
                assert!(
                    mse.loewner_leq(&bound, 1e-8).unwrap(),
                    "bound violated at omega {omega} (n = {n})"
                );
            }
        }
    }
}

/// The trace and determinant costs are convex on a 1024-point grid:
/// second differences stay above -1e-7 at the local scale.
#[test]
fn closed_form_costs_are_convex_on_grid() {
    let mut rng = SeededRng::new(16);
    let top = 1.0 - 1e-4;
    for i in 0..200 {
        let n = [1, 2, 3, 5][i % 4];
        let scale_a = 1.0 + 3.0 * rng.uniform();
        let pa = random_psd(&mut rng, n, scale_a);
        let scale_b = 0.05 + rng.uniform();
        let pb = random_psd(&mut rng, n, scale_b);
        let u = random_unit(&mut rng, n);
        let params = CostParams::new(directional_stats(&pa, &pb, &u).unwrap(), 0.01 + 5.0 * rng.uniform()).unwrap();
        let gs: Vec<f64> = (0..1024)
            .map(|k| cost_trace(top * k as f64 / 1023.0, &params).unwrap())
            .collect();
        let hs: Vec<f64> = (0..1024)
            .map(|k| cost_det(top * k as f64 / 1023.0, &params).unwrap())
            .collect();
        for w in gs.windows(3) {
            let scale = w.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-7 * scale, "trace cost not convex");
        }
        for w in hs.windows(3) {
            let scale = w.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-7 * scale, "det cost not convex");
        }
    }
}

/// Partial-fraction reconstruction matches the direct formulas at 16 probe
/// points for random noisy instances.
#[test]
fn decompositions_reconstruct_costs() {
    let mut rng = SeededRng::new(24);
    for i in 0..300 {
        let n = [1, 2, 3, 5][i % 4];
        let scale_a = 1.0 + 3.0 * rng.uniform();
        let pa = random_psd(&mut rng, n, scale_a);
        let scale_b = 0.05 + rng.uniform();
        let pb = random_psd(&mut rng, n, scale_b);
        let u = random_unit(&mut rng, n);
        let params = CostParams::new(directional_stats(&pa, &pb, &u).unwrap(), 0.01 + 5.0 * rng.uniform()).unwrap();
        let trace_dec = decompose_trace_rational(&params).unwrap();
        let det_dec = decompose_det_rational(&params).unwrap();
        for k in 0..16 {
            let omega = 0.99 * k as f64 / 15.0;
            let g = cost_trace(omega, &params).unwrap();
            let h = cost_det(omega, &params).unwrap();
            assert!(
                (trace_dec.evaluate(omega) - g).abs() <= 1e-9 * g.abs().max(1.0),
                "trace reconstruction off at {omega}"
            );
            assert!(
                (det_dec.evaluate(omega) - h).abs() <= 1e-9 * h.abs().max(1.0),
                "det reconstruction off at {omega}"
            );
        }
    }
}

/// Gate soundness on the full pipeline: `pertinent` is true exactly when
/// the objective strictly improved.
#[test]
fn pipeline_pertinence_flag_is_sound() {
    let mut rng = SeededRng::new(40);
    for i in 0..300 {
        let n = [1, 2, 3, 5][i % 4];
        let scale_a = 1.0 + 3.0 * rng.uniform();
        let pa = random_psd(&mut rng, n, scale_a);
        let scale_b = 0.05 + 1.5 * rng.uniform();
        let pb = random_psd(&mut rng, n, scale_b);
        let u = random_unit(&mut rng, n);
        let xa = DVector::zeros(n);
        let xb = -10.0 * &u;
        let a = Estimate::new(xa, pa.clone()).unwrap();
        let b = Estimate::new(xb, pb.clone()).unwrap();
        let meas = DistanceMeasurement::new(10.0 + rng.normal().abs(), rng.uniform() * 3.0, u).unwrap();
        for objective in [CostObjective::Trace, CostObjective::Determinant] {
            let before = objective.evaluate(a.cov());
            let sol = optimal_sci_filter(&a, &b, &meas, &objective).unwrap();
            assert_eq!(
                sol.pertinent,
                sol.omega_star > 0.0 && sol.objective_value < before,
                "pertinence flag inconsistent"
            );
            assert!(sol.objective_value <= before, "objective increased");
            assert!(
                sol.omega_star < 1.0 || n == 1,
                "omega_star = 1 is reachable only in one dimension"
            );
            assert!(
                (sol.objective_value - objective.evaluate(&sol.fused_cov)).abs()
                    <= 1e-9 * sol.objective_value.abs().max(1.0),
                "stored objective value diverges from the returned covariance"
            );
        }
    }
}

/// A custom objective that happens to be the trace agrees with the
/// closed-form trace predicate on 1000 random instances, and both
/// predicates agree with the sign of their closed-form derivatives.
#[test]
fn custom_trace_objective_matches_predicate() {
    use sci_fuse::{
        derivative_at_zero, det_pertinent, pertinent_generic, trace_pertinent, CostContext,
    };
    use std::sync::Arc;
    let mut rng = SeededRng::new(48);
    let wrapped = CostObjective::Custom(Arc::new(|m: &SymMatrix| m.trace()));
    for i in 0..1000 {
        let n = [1, 2, 3, 5][i % 4];
        let scale_a = 1.0 + 3.0 * rng.uniform();
        let pa = random_psd(&mut rng, n, scale_a);
        let scale_b = 0.05 + 1.5 * rng.uniform();
        let pb = random_psd(&mut rng, n, scale_b);
        let u = random_unit(&mut rng, n);
        let sigma_m2 = 0.01 + 3.0 * rng.uniform();
        let ctx = CostContext::new(&pa, &pb, &u, sigma_m2).unwrap();
        let stats = ctx.stats();
        let report = pertinent_generic(&wrapped, &ctx).unwrap();
        assert_eq!(
            report.pertinent,
            trace_pertinent(stats),
            "custom trace and closed-form predicate disagree at instance {i}"
        );
        // sign consistency of the closed-form derivatives
        if stats.sigma_b2 > 0.0 {
            let g0 = derivative_at_zero(&CostObjective::Trace, &ctx).unwrap();
            assert_eq!(trace_pertinent(stats), g0 < 0.0, "trace derivative sign mismatch");
            let h0 = derivative_at_zero(&CostObjective::Determinant, &ctx).unwrap();
            assert_eq!(det_pertinent(stats), h0 < 0.0, "det derivative sign mismatch");
        }
    }
}

/// Assertion floor for the trace-tightness witness on the reference
/// scenario. Direct optimization over the admissible set puts the true
/// supremum of trace(MSE)/trace(bound) near 0.824 there, so the random
/// sampler is expected to reach at least this floor; the achieved ratio is
/// printed for inspection.
const TIGHTNESS_TRACE_RATIO: f64 = 0.75;

#[test]
fn trace_bound_tightness_witness() {
    let scn = load_scenario(
        &std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/fig1.json"),
    )
    .unwrap();
    let u = scn.direction().unwrap();
    let stats = directional_stats(scn.est_a.cov(), scn.est_b.cov(), &u).unwrap();
    let params = CostParams::new(stats, scn.sigma_m2).unwrap();
    let omega = solve_omega_trace(&params).unwrap().omega;
    let bound = sci_covariance(scn.est_a.cov(), stats.sigma_b2, scn.sigma_m2, &u, omega).unwrap();
    let gain = sci_gain(scn.est_a.cov(), &stats, scn.sigma_m2, &u, omega).unwrap();
    let mut rng = SeededRng::new(64);
    let mut best = 0.0f64;
    for _ in 0..5000 {
        let joint = sample_admissible_joint(&mut rng, scn.est_a.cov(), scn.est_b.cov()).unwrap();
        let mse = mse_under_correlation(&joint, &gain, &u, scn.sigma_m2).unwrap();
        best = best.max(mse.trace() / bound.trace());
    }
    println!("trace tightness witness: achieved ratio {best:.4} (floor {TIGHTNESS_TRACE_RATIO})");
    assert!(best >= TIGHTNESS_TRACE_RATIO, "achieved only {best:.4}");
}
