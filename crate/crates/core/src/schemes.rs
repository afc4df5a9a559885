//! The exponential (Magnus-type) integrator and the linear implicit Euler
//! scheme over P1 finite elements.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelContext, KernelMode};
use crate::model::ModelSpec;
use crate::noise::{compensated_increment, NoisePath, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `X' = e^{−ΔtA}(X + σΔB + J) + Δt φ₁(ΔtA) F(t, X)`
    Smti,
    /// `Y' = (I + ΔtA)⁻¹ (Y + Δt F(t, Y) + σΔB + J)`
    Implicit,
}

impl Scheme {
    pub fn kernel_mode(self) -> KernelMode {
        match self {
            Scheme::Smti => KernelMode::Spectral,
            Scheme::Implicit => KernelMode::ResolventOnly,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Smti => "smti",
            Scheme::Implicit => "implicit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories hold at least X_0")
    }
}

/// Which time levels a batch run keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Recording {
    Final,
    All,
    Steps(Vec<usize>),
}

impl Recording {
    fn keeps(&self, m: usize, last: usize) -> bool {
        match self {
            Recording::Final => m == last,
            Recording::All => true,
            Recording::Steps(s) => s.contains(&m),
        }
    }
}

/// One step of either scheme for a batch of states (one per column).
///
/// `noise` holds `σ(t_m)P_hΔB_m + J_m` per column.
pub fn step_batch(
    scheme: Scheme,
    model: &ModelSpec,
    ctx: &KernelContext,
    t: f64,
    x: &DMatrix<f64>,
    dt: f64,
    noise: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    ctx.check_time(t)?;
    if x.nrows() != ctx.dim() {
        return Err(Error::Dimension {
            expected: ctx.dim(),
            got: x.nrows(),
        });
    }
    if dt <= 0.0 {
        return Err(Error::NonPositiveStep(dt));
    }
    let mut lin = match noise {
        Some(w) => x + w,
        None => x.clone(),
    };
    match scheme {
        Scheme::Smti => {
            let ops = ctx.step_operators(dt)?;
            if model.drift.is_zero() {
                Ok(ops.apply_expm(&lin))
            } else {
                let g = model.drift.eval_batch(t, model.nodes(), x);
                Ok(ops.exponential_update(&lin, &g, dt))
            }
        }
        Scheme::Implicit => {
            if !model.drift.is_zero() {
                lin += model.drift.eval_batch(t, model.nodes(), x) * dt;
            }
            ctx.resolvent_apply(dt, &mut lin)?;
            Ok(lin)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn step_single(
    scheme: Scheme,
    model: &ModelSpec,
    ctx: &KernelContext,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    field_inc: &DVector<f64>,
    jump_inc: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = x.len();
    let w = field_inc * (model.amplitude)(t) + jump_inc;
    let out = step_batch(
        scheme,
        model,
        ctx,
        t,
        &DMatrix::from_column_slice(n, 1, x.as_slice()),
        dt,
        Some(&DMatrix::from_column_slice(n, 1, w.as_slice())),
    )?;
    Ok(DVector::from_column_slice(out.as_slice()))
}

/// `X_{m+1} = e^{−ΔtA}X_m + Δt φ₁(ΔtA)F(t_m, X_m) + e^{−ΔtA}σ(t_m)ΔB_m + e^{−ΔtA}J_m`
/// with kernels built at `t_m`. `field_inc` is the projected increment `P_hΔB_m`.
#[allow(clippy::too_many_arguments)]
pub fn smti_step(
    model: &ModelSpec,
    ctx: &KernelContext,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
    field_inc: &DVector<f64>,
    jump_inc: &DVector<f64>,
) -> Result<DVector<f64>> {
    step_single(Scheme::Smti, model, ctx, t, x, dt, field_inc, jump_inc)
}

/// `Y_{m+1} = (M + ΔtK)⁻¹M (Y_m + ΔtF(t_m, Y_m) + σ(t_m)ΔB_m + J_m)`.
#[allow(clippy::too_many_arguments)]
pub fn implicit_step(
    model: &ModelSpec,
    ctx: &KernelContext,
    t: f64,
    y: &DVector<f64>,
    dt: f64,
    field_inc: &DVector<f64>,
    jump_inc: &DVector<f64>,
) -> Result<DVector<f64>> {
    step_single(Scheme::Implicit, model, ctx, t, y, dt, field_inc, jump_inc)
}

/// Noise entering step `m` for every path: `σ(t_m)P_hΔB_m + J_m`.
fn step_noise(model: &ModelSpec, paths: &[NoisePath], m: usize, t: f64, dt: f64) -> Result<Option<DMatrix<f64>>> {
    let n = model.dim();
    let s = paths.len();
    let mut w = None;
    if model.n_modes() > 0 {
        let modes = model.n_modes();
        let mut inc = DMatrix::zeros(modes, s);
        for (j, p) in paths.iter().enumerate() {
            if p.n_modes() != modes {
                return Err(Error::Dimension {
                    expected: modes,
                    got: p.n_modes(),
                });
            }
            inc.column_mut(j).copy_from_slice(p.step_increments(m));
        }
        w = model.field_increments(t, &inc)?;
    }
    if model.jumps.law.intensity > 0.0 {
        let w = w.get_or_insert_with(|| DMatrix::zeros(n, s));
        for (j, p) in paths.iter().enumerate() {
            let jump = compensated_increment(&model.jumps, p.step_events(m), dt);
            let mut col = w.column_mut(j);
            col += jump;
        }
    }
    Ok(w)
}

/// Runs `scheme` over the grid shared by `paths`, one column per path, and
/// hands the recorded levels to `observe(m, states)`.
pub fn run_batch(
    model: &ModelSpec,
    scheme: Scheme,
    paths: &[NoisePath],
    x0: &DMatrix<f64>,
    mut observe: impl FnMut(usize, &DMatrix<f64>),
    record: &Recording,
) -> Result<DMatrix<f64>> {
    let grid = *paths
        .first()
        .ok_or_else(|| Error::param("paths", "need at least one noise path"))?
        .grid();
    if let Some(p) = paths.iter().find(|p| !p.grid().same_as(&grid)) {
        return Err(Error::Grid(format!(
            "paths on {} and {} steps",
            grid.steps(),
            p.grid().steps()
        )));
    }
    if (grid.horizon() - model.horizon).abs() > 1e-12 * model.horizon {
        return Err(Error::Grid(format!(
            "noise horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon
        )));
    }
    if x0.nrows() != model.dim() || x0.ncols() != paths.len() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x0.nrows(),
        });
    }
    let dt = grid.dt();
    let last = grid.steps();
    let mut x = x0.clone();
    if record.keeps(0, last) {
        observe(0, &x);
    }
    for m in 0..last {
        let t = grid.time(m);
        let ctx = model.kernels_at(t, scheme.kernel_mode())?;
        let w = step_noise(model, paths, m, t, dt)?;
        x = step_batch(scheme, model, &ctx, t, &x, dt, w.as_ref())?;
        if record.keeps(m + 1, last) {
            observe(m + 1, &x);
        }
    }
    Ok(x)
}

/// Final states `X_M` for every path, starting from the model's `X_0`.
pub fn final_states(model: &ModelSpec, scheme: Scheme, paths: &[NoisePath]) -> Result<DMatrix<f64>> {
    let x0 = DMatrix::from_fn(model.dim(), paths.len(), |i, _| model.x0[i]);
    run_batch(model, scheme, paths, &x0, |_, _| {}, &Recording::Final)
}

/// Trajectories for a batch of paths, keeping the levels in `record`.
pub fn simulate_batch(
    model: &ModelSpec,
    scheme: Scheme,
    paths: &[NoisePath],
    record: &Recording,
) -> Result<Vec<Trajectory>> {
    let grid = *paths
        .first()
        .ok_or_else(|| Error::param("paths", "need at least one noise path"))?
        .grid();
    let mut out: Vec<Trajectory> = paths
        .iter()
        .map(|_| Trajectory {
            scheme,
            times: vec![],
            states: vec![],
        })
        .collect();
    let x0 = DMatrix::from_fn(model.dim(), paths.len(), |i, _| model.x0[i]);
    run_batch(
        model,
        scheme,
        paths,
        &x0,
        |m, x| {
            for (j, tr) in out.iter_mut().enumerate() {
                tr.times.push(grid.time(m));
                tr.states.push(x.column(j).into_owned());
            }
        },
        record,
    )?;
    Ok(out)
}

/// Every level `X_0, …, X_M` of one realisation.
pub fn simulate_path(model: &ModelSpec, scheme: Scheme, path: &NoisePath) -> Result<Trajectory> {
    Ok(simulate_batch(model, scheme, std::slice::from_ref(path), &Recording::All)?.remove(0))
}

/// Fine-grid exponential-integrator solution used as the stand-in for the
/// exact mild solution.
pub fn reference_solution(model: &ModelSpec, path: &NoisePath) -> Result<Trajectory> {
    simulate_path(model, Scheme::Smti, path)
}

/// Checks that a fine grid of `reference_steps` can be coarsened to each of `steps`.
pub fn check_divisibility(reference_steps: usize, steps: &[usize]) -> Result<()> {
    for &m in steps {
        if m == 0 || !reference_steps.is_multiple_of(m) {
            return Err(Error::Coarsening {
                factor: reference_steps.checked_div(m).unwrap_or(0),
                steps: reference_steps,
            });
        }
        if m >= reference_steps {
            return Err(Error::Grid(format!(
                "resolution {m} is not coarser than the reference {reference_steps}"
            )));
        }
    }
    Ok(())
}

/// Zero-noise path on `grid`.
pub fn quiet_path(grid: TimeGrid, n_modes: usize) -> NoisePath {
    NoisePath::new(grid, DMatrix::zeros(n_modes, grid.steps()), vec![]).expect("empty path is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stiffness, generalized_eigendecomposition};
    use crate::linalg::m_norm_sq;
    use crate::model::{default_operator, Drift, Problem};
    use crate::noise::{FbmSpec, JumpEvent, JumpLaw, MarkLaw, NoiseSampler};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn stochastic_problem() -> Problem {
        let mut p = Problem::heat(|x| (PI * x).sin(), 0.5);
        p.ops = default_operator(0.5);
        p.fbm = Some(FbmSpec::power_law(0.75, 6, 0.5, 1.5).unwrap());
        p.jumps = JumpLaw::new(3.0, MarkLaw::Normal { mean: 0.0, std: 1.0 }).unwrap();
        p.jump_profile = Arc::new(|x| 0.3 * (PI * x).sin());
        p
    }

    #[test]
    fn scalar_smti_is_exact_variation_of_constants() {
        let mut p = Problem::heat(|_| 1.0, 1.0);
        p.drift = Drift::constant(0.7);
        let m = p.discretize(1).unwrap();
        // one interior node on (0,1): M = 1/3, K = 4, so λ = 12
        let lambda = 12.0;
        let x0 = m.x0[0];
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let tr = simulate_path(&m, Scheme::Smti, &quiet_path(grid, 0)).unwrap();
        for (t, x) in tr.times.iter().zip(&tr.states) {
            let exact = x0 * (-lambda * t).exp() + 0.7 * (1.0 - (-lambda * t).exp()) / lambda;
            assert!((x[0] - exact).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn scalar_implicit_is_the_resolvent_recursion() {
        let mut p = Problem::heat(|_| 1.0, 1.0);
        p.drift = Drift::constant(0.7);
        let m = p.discretize(1).unwrap();
        let lambda = 12.0;
        let dt = 1.0 / 16.0;
        let tr = simulate_path(&m, Scheme::Implicit, &quiet_path(TimeGrid::new(1.0, 16).unwrap(), 0)).unwrap();
        let mut y = m.x0[0];
        for state in &tr.states[1..] {
            y = (y + dt * 0.7) / (1.0 + lambda * dt);
            assert!((state[0] - y).abs() < 1e-13);
        }
    }

    #[test]
    fn deterministic_heat_matches_semigroup() {
        let p = Problem::heat(|x| x * (1.0 - x) * (3.0 * x).cos(), 0.3);
        let m = p.discretize(31).unwrap();
        let grid = TimeGrid::new(0.3, 25).unwrap();
        let tr = simulate_path(&m, Scheme::Smti, &quiet_path(grid, 0)).unwrap();
        let ctx = m.kernels_at(0.0, KernelMode::Spectral).unwrap();
        let exact = ctx.expm_action(0.3, &m.x0).unwrap();
        assert!((tr.final_state() - &exact).norm() <= 1e-9 * m.x0.norm());

        let eig = generalized_eigendecomposition(&m.mass, &assemble_stiffness(&m.mesh, &m.ops, 0.0).unwrap()).unwrap();
        let tr = simulate_path(&m, Scheme::Implicit, &quiet_path(grid, 0)).unwrap();
        let resolvent_power = eig.apply_fn(&m.x0, |l| (1.0 + l * 0.3 / 25.0).powi(-25));
        assert!((tr.final_state() - &resolvent_power).norm() <= 1e-10 * m.x0.norm());
    }

    #[test]
    fn single_step_grid() {
        let m = stochastic_problem().discretize(7).unwrap();
        let s = NoiseSampler::new(TimeGrid::new(0.5, 1).unwrap(), Some(0.75), 6, m.jumps.law, 1).unwrap();
        let tr = simulate_path(&m, Scheme::Smti, &s.sample(0)).unwrap();
        assert_eq!(tr.states.len(), 2);
        assert_eq!(tr.states[0], m.x0);
    }

    #[test]
    fn superposition_in_the_noise() {
        let mut p = stochastic_problem();
        p.drift = Drift::constant(0.3);
        let m = p.discretize(15).unwrap();
        let grid = TimeGrid::new(0.5, 32).unwrap();
        let s = NoiseSampler::new(grid, Some(0.75), 6, m.jumps.law, 9).unwrap();
        let (a, b) = (s.sample(0), s.sample(1));
        let mut events: Vec<JumpEvent> = a.events().iter().chain(b.events()).copied().collect();
        events.sort_by(|x, y| x.time.total_cmp(&y.time));
        let sum = NoisePath::new(grid, a.increments() + b.increments(), events).unwrap();
        for scheme in [Scheme::Smti, Scheme::Implicit] {
            let xa = simulate_path(&m, scheme, &a).unwrap();
            let xb = simulate_path(&m, scheme, &b).unwrap();
            let xs = simulate_path(&m, scheme, &sum).unwrap();
            let x0 = simulate_path(&m, scheme, &quiet_path(grid, 6)).unwrap();
            for k in 0..=32 {
                let lhs = &xs.states[k];
                let rhs = &xa.states[k] + &xb.states[k] - &x0.states[k];
                assert!((lhs - &rhs).amax() < 1e-10, "{scheme} level {k}");
            }
        }
    }

    #[test]
    fn doubling_the_amplitude_doubles_the_noise_response() {
        let mut p = stochastic_problem();
        p.jumps = JumpLaw::none();
        let m1 = p.discretize(15).unwrap();
        p.amplitude = Arc::new(|_| 2.0);
        let m2 = p.discretize(15).unwrap();
        let grid = TimeGrid::new(0.5, 16).unwrap();
        let path = NoiseSampler::new(grid, Some(0.75), 6, JumpLaw::none(), 4)
            .unwrap()
            .sample(0);
        let quiet = simulate_path(&m1, Scheme::Smti, &quiet_path(grid, 6)).unwrap();
        let r1 = simulate_path(&m1, Scheme::Smti, &path).unwrap().final_state() - quiet.final_state();
        let r2 = simulate_path(&m2, Scheme::Smti, &path).unwrap().final_state() - quiet.final_state();
        assert!((r2 - r1 * 2.0).amax() < 1e-12);
    }

    #[test]
    fn eigenmodes_do_not_leak() {
        let p = Problem::heat(|_| 0.0, 0.2);
        let mut m = p.discretize(31).unwrap();
        let ctx = m.kernels_at(0.0, KernelMode::Spectral).unwrap();
        let v = ctx.eigenvectors().unwrap().column(3).into_owned();
        m.x0 = v.clone();
        let grid = TimeGrid::new(0.2, 20).unwrap();
        for scheme in [Scheme::Smti, Scheme::Implicit] {
            let x = simulate_path(&m, scheme, &quiet_path(grid, 0)).unwrap();
            let xf = x.final_state();
            let along = v.dot(&m.mass.mul_vec(xf));
            let leak = m_norm_sq(&m.mass, &(xf - &v * along));
            assert!(leak <= 1e-10 * m_norm_sq(&m.mass, &v), "{scheme}: {leak:e}");
        }
    }

    #[test]
    fn local_difference_between_schemes_is_second_order() {
        let mut p = Problem::heat(|x| (PI * x).sin(), 1.0);
        p.drift = Drift::sine(1.0);
        let m = p.discretize(63).unwrap();
        let zero = DVector::zeros(63);
        let diff = |dt: f64| {
            let e = m.kernels_at(0.0, KernelMode::Spectral).unwrap();
            let a = smti_step(&m, &e, 0.0, &m.x0, dt, &zero, &zero).unwrap();
            let b = implicit_step(&m, &e, 0.0, &m.x0, dt, &zero, &zero).unwrap();
            m_norm_sq(&m.mass, &(a - b)).sqrt()
        };
        for dt in [2e-3, 1e-3] {
            let ratio = diff(dt) / diff(dt / 2.0);
            assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}");
        }
    }

    #[test]
    fn kernels_must_match_the_step_time() {
        let m = stochastic_problem().discretize(7).unwrap();
        let ctx = m.kernels_at(0.1, KernelMode::Spectral).unwrap();
        let z = DVector::zeros(7);
        assert!(matches!(
            smti_step(&m, &ctx, 0.2, &m.x0, 0.1, &z, &z),
            Err(Error::KernelTime { .. })
        ));
        assert!(smti_step(&m, &ctx, 0.1, &m.x0, 0.1, &z, &z).is_ok());
    }

    #[test]
    fn noise_free_trajectories_contract() {
        let mut p = stochastic_problem();
        p.fbm = None;
        p.jumps = JumpLaw::none();
        let m = p.discretize(31).unwrap();
        for scheme in [Scheme::Smti, Scheme::Implicit] {
            let tr = simulate_path(&m, scheme, &quiet_path(TimeGrid::new(0.5, 20).unwrap(), 0)).unwrap();
            let norms: Vec<f64> = tr.states.iter().map(|x| m_norm_sq(&m.mass, x)).collect();
            assert!(norms.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let m = stochastic_problem().discretize(15).unwrap();
        let s = NoiseSampler::new(TimeGrid::new(0.5, 64).unwrap(), Some(0.75), 6, m.jumps.law, 77).unwrap();
        let a = simulate_path(&m, Scheme::Smti, &s.sample(5)).unwrap();
        let b = simulate_path(&m, Scheme::Smti, &s.sample(5)).unwrap();
        assert_eq!(a, b);
        // batched and single runs agree exactly
        let paths = [s.sample(4), s.sample(5)];
        let batch = simulate_batch(&m, Scheme::Smti, &paths, &Recording::All).unwrap();
        assert_eq!(batch[1].final_state(), a.final_state());
    }

    #[test]
    fn divisibility() {
        assert!(check_divisibility(4096, &[16, 32, 256]).is_ok());
        assert!(matches!(check_divisibility(4096, &[48]), Err(Error::Coarsening { .. })));
        assert!(check_divisibility(256, &[256]).is_err());
    }
}
