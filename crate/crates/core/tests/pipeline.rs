use std::f64::consts::PI;

use nalgebra::DVector;
use spde_core::config::RunConfig;
use spde_core::kernels::KernelMode;
use spde_core::model::{Drift, Problem};
use spde_core::noise::{NoiseSampler, TimeGrid};
use spde_core::schemes::{quiet_path, reference_solution, simulate_path, Scheme};

fn m_norm(mass: &spde_core::linalg::Tridiagonal, v: &DVector<f64>) -> f64 {
    spde_core::linalg::m_norm_sq(mass, v).sqrt()
}

#[test]
fn reference_matches_closed_form_for_autonomous_linear_problem() {
    let horizon = 0.2;
    let mut problem = Problem::heat(|x| (PI * x).sin() + 0.3 * (3.0 * PI * x).sin(), horizon);
    problem.drift = Drift::constant(0.7);
    let model = problem.discretize(63).unwrap();
    let path = quiet_path(TimeGrid::new(horizon, 4096).unwrap(), 0);
    let reference = reference_solution(&model, &path).unwrap();

    let ctx = model.kernels_at(0.0, KernelMode::Spectral).unwrap();
    let forcing = DVector::from_element(model.dim(), 0.7);
    let exact = ctx.expm_action(horizon, &model.x0).unwrap() + ctx.phi1_action(horizon, &forcing).unwrap() * horizon;
    let err = m_norm(&model.mass, &(reference.final_state() - &exact)) / m_norm(&model.mass, &exact);
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn implicit_converges_to_exponential_reference_in_time() {
    let horizon = 0.2;
    let mut problem = Problem::heat(|x| (PI * x).sin(), horizon);
    problem.drift = Drift::sine(1.0);
    let model = problem.discretize(31).unwrap();
    let reference = reference_solution(&model, &quiet_path(TimeGrid::new(horizon, 4096).unwrap(), 0)).unwrap();
    let errs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&m| {
            let tr = simulate_path(
                &model,
                Scheme::Implicit,
                &quiet_path(TimeGrid::new(horizon, m).unwrap(), 0),
            )
            .unwrap();
            m_norm(&model.mass, &(tr.final_state() - reference.final_state()))
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() < 0.3, "halving ratio {ratio}, errors {errs:?}");
    }
}

#[test]
fn error_decreases_for_every_sample() {
    let mut cfg = RunConfig::default();
    cfg.discretization.n_interior = 63;
    let problem = cfg.to_problem().unwrap();
    let model = problem.discretize(63).unwrap();
    let grid = TimeGrid::new(problem.horizon, 1024).unwrap();
    let sampler = NoiseSampler::new(grid, problem.hurst(), problem.n_modes(), problem.jumps, 31).unwrap();
    for index in 0..10 {
        let fine = sampler.sample(index);
        let reference = reference_solution(&model, &fine).unwrap();
        let errs: Vec<f64> = [256, 16, 1]
            .iter()
            .map(|&factor| {
                let path = fine.coarsen(factor).unwrap();
                let tr = simulate_path(&model, Scheme::Smti, &path).unwrap();
                m_norm(&model.mass, &(tr.final_state() - reference.final_state()))
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "sample {index}: {errs:?}");
    }
}

#[test]
fn reference_is_self_consistent_under_refinement() {
    let cfg = RunConfig::default();
    let problem = cfg.to_problem().unwrap();
    let model = problem.discretize(63).unwrap();
    let grid = TimeGrid::new(problem.horizon, 8192).unwrap();
    let sampler = NoiseSampler::new(grid, problem.hurst(), problem.n_modes(), problem.jumps, 5).unwrap();
    let fine = sampler.sample(0);
    let a = reference_solution(&model, &fine).unwrap();
    let b = reference_solution(&model, &fine.coarsen(2).unwrap()).unwrap();
    let c = reference_solution(&model, &fine.coarsen(64).unwrap()).unwrap();
    let near = m_norm(&model.mass, &(a.final_state() - b.final_state()));
    let far = m_norm(&model.mass, &(a.final_state() - c.final_state()));
    assert!(near < far / 10.0, "4096 vs 8192: {near:e}, 128 vs 8192: {far:e}");
}
