//! End-to-end behaviour across modules: scaling of the measured condition
//! number, scheme selection on forced oscillators and the verification
//! report on the bundled scenario families.

use qode_core::bounds::{kappa_bound_stable, BoundInputs, Target};
use qode_core::discretization::{exact_trajectory, SchemeKind, SolutionNormBounds, TimeGrid};
use qode_core::embedding::{build_embedding, measure_embedding, IdlingPlan};
use qode_core::numerics::{c, identity, operator_norm, sample, ComplexMatrix, ComplexVector};
use qode_core::pipeline::{estimate, fit_scaling, verify, EstimateRequest, SchemeChoice};
use qode_core::scenarios::{damped_oscillators, hamiltonian_case, negative_lognorm_family, OdeSystem};
use qode_core::stability::{lyapunov_profile, LyapunovMode};

fn kappa_slope(system: &OdeSystem, k: usize, steps: &[u64]) -> f64 {
    let pairs: Vec<(f64, f64)> = steps
        .iter()
        .map(|&m| {
            let grid = TimeGrid::new(1.0, m).unwrap();
            let emb = build_embedding(system, &grid, k, &IdlingPlan::history(m as usize)).unwrap();
            (m as f64, measure_embedding(&emb).unwrap().kappa_numeric)
        })
        .collect();
    fit_scaling(&pairs, (1.0, f64::INFINITY)).unwrap().slope
}

#[test]
fn contractive_generator_keeps_kappa_flat_while_bound_grows_like_sqrt_m() {
    let sys = negative_lognorm_family(2, -1.0, 4).unwrap();
    let steps = [25u64, 50, 100, 200, 400];
    let slope = kappa_slope(&sys, 8, &steps);
    assert!(slope.abs() < 0.05, "measured slope {slope}");
    let bounds: Vec<(f64, f64)> = steps
        .iter()
        .map(|&m| (m as f64, kappa_bound_stable(&BoundInputs::stable(1.0, -1.0, 8, m as f64, 1e-10), 0.0)))
        .collect();
    let bound_slope = fit_scaling(&bounds, (1.0, f64::INFINITY)).unwrap().slope;
    assert!((0.45..=0.55).contains(&bound_slope), "bound slope {bound_slope}");
    for &m in &steps {
        let grid = TimeGrid::new(1.0, m).unwrap();
        let emb = build_embedding(&sys, &grid, 8, &IdlingPlan::history(m as usize)).unwrap();
        let measured = measure_embedding(&emb).unwrap().kappa_numeric;
        assert!(measured <= kappa_bound_stable(&BoundInputs::stable(1.0, -1.0, 8, m as f64, 1e-10), 0.0));
    }
}

#[test]
fn measured_kappa_grows_like_m_for_hamiltonian() {
    let h = sample::hermitian(&mut sample::rng(12), 2);
    let h = &h * c(1.0 / operator_norm(&h).unwrap());
    let sys = hamiltonian_case(&h, &sample::unit_vector(&mut sample::rng(13), 2)).unwrap();
    let slope = kappa_slope(&sys, 8, &[25, 50, 100, 200, 400]);
    assert!((0.9..=1.1).contains(&slope), "slope {slope}");
}

fn forced_oscillators(y0_scale: f64) -> OdeSystem {
    let n = 2;
    let w = ComplexMatrix::from_row_slice(n, n, &[c(0.5), c(0.1), c(0.1), c(0.3)]);
    let d = identity(n) * c(-0.2);
    let f = ComplexVector::from_element(n, c(0.05));
    let y0 = ComplexVector::from_element(n, c(y0_scale));
    let osc = damped_oscillators(&w, &d, &f, &y0, &ComplexVector::zeros(n)).unwrap();
    let h = osc.system.recommended_step().unwrap();
    let a = &osc.system.a * c(h);
    let b = &osc.system.b * c(h);
    OdeSystem::new(a, b, osc.system.x0.clone(), "forced oscillators, unit step").unwrap()
}

fn request_for(system: &OdeSystem, steps: u64, epsilon: f64) -> EstimateRequest {
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let profile = lyapunov_profile(&system.a, LyapunovMode::Auto, grid.t).unwrap();
    let exact = exact_trajectory(&system.a, &system.b, &system.x0, &grid).unwrap();
    let samples: Vec<f64> = exact.iter().map(|v| v.norm()).collect();
    let norms = SolutionNormBounds::from_samples(samples, system.b.norm(), epsilon / 8.0).unwrap();
    let mut req = EstimateRequest::new(profile, norms, grid, epsilon);
    req.a_norm = operator_norm(&system.a).unwrap();
    req.dimension = Some(system.n() as u64);
    req
}

#[test]
fn additive_scheme_wins_before_equilibration() {
    let sys = forced_oscillators(1e-8);
    let rep = estimate(&request_for(&sys, 50, 1e-6)).unwrap();
    assert_eq!(rep.records.len(), 2);
    let mult = rep.records.iter().find(|r| r.scheme == SchemeKind::Multiplicative).unwrap();
    let add = rep.records.iter().find(|r| r.scheme == SchemeKind::Additive).unwrap();
    assert!(add.k < mult.k, "k add {} vs mult {}", add.k, mult.k);
    assert!(add.q < mult.q);
    assert_eq!(rep.chosen, SchemeKind::Additive);
    assert_eq!(rep.q, add.q);
}

#[test]
fn explicit_scheme_propagates_missing_inputs() {
    let sys = forced_oscillators(0.5);
    let mut req = request_for(&sys, 20, 1e-6);
    req.norms.x_rms = None;
    req.scheme = SchemeChoice::Additive;
    assert!(estimate(&req).is_err());
    req.scheme = SchemeChoice::Auto;
    let rep = estimate(&req).unwrap();
    assert_eq!(rep.chosen, SchemeKind::Multiplicative);
    assert_eq!(rep.skipped.len(), 1);
}

#[test]
fn verification_on_forced_oscillators() {
    let sys = forced_oscillators(0.5);
    let grid = TimeGrid::new(1.0, 30).unwrap();
    let rep = verify(&sys, &grid, 1e-6, Target::History, SchemeChoice::Auto).unwrap();
    assert!(rep.flags.all(), "{:?}", rep.flags);
    assert!(rep.history_distance < 1e-5);
    assert!(rep.kappa_numeric <= rep.kappa_analytic);
}

#[test]
fn verification_reports_are_reproducible() {
    let sys = negative_lognorm_family(3, -0.2, 8).unwrap();
    let grid = TimeGrid::new(1.0, 25).unwrap();
    let a = verify(&sys, &grid, 1e-5, Target::History, SchemeChoice::Auto).unwrap();
    let b = verify(&sys, &grid, 1e-5, Target::History, SchemeChoice::Auto).unwrap();
    assert_eq!(a, b);
}
