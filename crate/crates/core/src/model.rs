//! Problem definition, independent of the mesh, and its P1 discretisation.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, assemble_stiffness_base, generalized_eigendecomposition, l2_project,
    Coefficient, GeneralizedEigen, Mesh1D, OperatorFamily, SpaceFn,
};
use crate::kernels::{KernelContext, KernelMode};
use crate::linalg::Tridiagonal;
use crate::noise::rng::stream;
use crate::noise::{FbmSpec, FieldProjector, JumpLaw, JumpSpec};

type NodalFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Nonlinearity `F(t, u)` acting node by node: `F(t, u)_j = f(t, x_j, u_j)`.
///
/// Nodal evaluation stands in for the `L²` projection `P_h F`.
#[derive(Clone)]
pub struct Drift {
    f: NodalFn,
    lipschitz: f64,
    zero: bool,
    label: String,
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drift")
            .field("label", &self.label)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Drift {
    /// `f(t, x, u)` with a declared Lipschitz constant in `u`.
    pub fn new(
        label: impl Into<String>,
        lipschitz: f64,
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(f),
            lipschitz,
            zero: false,
            label: label.into(),
        }
    }

    pub fn zero() -> Self {
        Self {
            zero: true,
            ..Self::new("zero", 0.0, |_, _, _| 0.0)
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), 0.0, move |_, _, _| c)
    }

    /// `scale · sin(u)`.
    pub fn sine(scale: f64) -> Self {
        Self::new(format!("sine({scale})"), scale.abs(), move |_, _, u| scale * u.sin())
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, t: f64, nodes: &[f64], u: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(u.len(), nodes.iter().zip(u.iter()).map(|(x, v)| (self.f)(t, *x, *v)))
    }

    /// Column-wise evaluation for a batch of states.
    pub fn eval_batch(&self, t: f64, nodes: &[f64], u: &DMatrix<f64>) -> DMatrix<f64> {
        if self.zero {
            return DMatrix::zeros(u.nrows(), u.ncols());
        }
        let mut out = u.clone();
        for mut col in out.column_iter_mut() {
            for (v, x) in col.iter_mut().zip(nodes) {
                *v = (self.f)(t, *x, *v);
            }
        }
        out
    }

    /// Spot checks: `F(t, 0)` finite on `times`, and the declared Lipschitz
    /// constant holds on random pairs in the node-weighted `ℓ²` norm.
    pub fn validate(&self, nodes: &[f64], times: &[f64], pairs: usize, seed: u64) -> Result<()> {
        let n = nodes.len();
        let zero = DVector::zeros(n);
        for &t in times {
            if self.eval(t, nodes, &zero).iter().any(|v| !v.is_finite()) {
                return Err(Error::param("drift", format!("F({t}, 0) is not finite")));
            }
        }
        let mut rng = stream(seed, 0, u64::MAX >> 44);
        for _ in 0..pairs {
            let t = times[rng.random_range(0..times.len().max(1))];
            let scale = 10f64.powf(rng.random_range(-3.0..2.0));
            let u = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0));
            let v = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0));
            let lhs = (self.eval(t, nodes, &u) - self.eval(t, nodes, &v)).norm();
            let rhs = self.lipschitz * (&u - &v).norm();
            if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::param(
                    "drift",
                    format!(
                        "declared Lipschitz constant {} violated ({lhs:e} > {rhs:e})",
                        self.lipschitz
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Everything that defines the SPDE, independent of any mesh.
#[derive(Clone)]
pub struct Problem {
    pub domain: (f64, f64),
    pub ops: OperatorFamily,
    pub drift: Drift,
    /// `σ(t)` multiplying the field increment
    pub amplitude: SpaceFn,
    pub fbm: Option<FbmSpec>,
    pub jumps: JumpLaw,
    /// `g` in `ψ(z) = z·g`
    pub jump_profile: SpaceFn,
    pub initial: SpaceFn,
    pub horizon: f64,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("domain", &self.domain)
            .field("ops", &self.ops)
            .field("drift", &self.drift)
            .field("fbm", &self.fbm)
            .field("jumps", &self.jumps)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// Heat equation with `q ≡ 1` on `(0, 1)`, no forcing and no noise.
    pub fn heat(initial: impl Fn(f64) -> f64 + Send + Sync + 'static, horizon: f64) -> Self {
        Self {
            domain: (0.0, 1.0),
            ops: OperatorFamily::laplacian(),
            drift: Drift::zero(),
            amplitude: Arc::new(|_| 1.0),
            fbm: None,
            jumps: JumpLaw::none(),
            jump_profile: Arc::new(|_| 0.0),
            initial: Arc::new(initial),
            horizon,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.fbm.as_ref().map_or(0, FbmSpec::n_modes)
    }

    pub fn hurst(&self) -> Option<f64> {
        self.fbm.as_ref().map(|f| f.hurst)
    }

    pub fn is_deterministic(&self) -> bool {
        let field = self.fbm.as_ref().is_some_and(|f| f.trace() > 0.0);
        !field && self.jumps.intensity == 0.0
    }

    pub fn discretize(&self, n_interior: usize) -> Result<ModelSpec> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::param("horizon", "T must be positive"));
        }
        let mesh = Mesh1D::new(self.domain.0, self.domain.1, n_interior)?;
        let mass = Arc::new(assemble_mass(&mesh));
        let projector = match &self.fbm {
            Some(spec) => Some(FieldProjector::new(spec, &mesh, &mass)?),
            None => None,
        };
        let jumps = if self.jumps.intensity > 0.0 {
            let g = l2_project(&mesh, &mass, |x| (self.jump_profile)(x))?;
            JumpSpec::scaled_profile(self.jumps, g, &mass)?
        } else {
            JumpSpec::none(n_interior)
        };
        let x0 = l2_project(&mesh, &mass, |x| (self.initial)(x))?;
        Ok(ModelSpec {
            nodes: mesh.interior_nodes(),
            mesh,
            mass,
            ops: self.ops.clone(),
            drift: self.drift.clone(),
            amplitude: self.amplitude.clone(),
            projector,
            jumps,
            x0,
            horizon: self.horizon,
            shared: OnceLock::new(),
        })
    }
}

/// Shared decomposition of a separable family `K(t) = s(t) K₀`.
#[derive(Debug)]
struct SharedBasis {
    base_stiffness: Tridiagonal,
    eig: Arc<GeneralizedEigen>,
}

/// The problem on a fixed mesh: FE matrices, projected noise and data.
pub struct ModelSpec {
    pub mesh: Mesh1D,
    pub mass: Arc<Tridiagonal>,
    pub ops: OperatorFamily,
    pub drift: Drift,
    pub amplitude: SpaceFn,
    pub projector: Option<FieldProjector>,
    pub jumps: JumpSpec,
    pub x0: DVector<f64>,
    pub horizon: f64,
    nodes: Vec<f64>,
    shared: OnceLock<Option<SharedBasis>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("mesh", &self.mesh)
            .field("drift", &self.drift)
            .field("jumps", &self.jumps)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn dim(&self) -> usize {
        self.mesh.n_interior()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_modes(&self) -> usize {
        self.projector.as_ref().map_or(0, FieldProjector::n_modes)
    }

    fn shared(&self) -> Result<Option<&SharedBasis>> {
        if let Some(s) = self.shared.get() {
            return Ok(s.as_ref());
        }
        let basis = match (self.ops.time_factor(), assemble_stiffness_base(&self.mesh, &self.ops)?) {
            (Some(_), Some(k0)) => Some(SharedBasis {
                eig: Arc::new(generalized_eigendecomposition(&self.mass, &k0)?),
                base_stiffness: k0,
            }),
            _ => None,
        };
        // a concurrent initialisation computes the same value; either wins
        let _ = self.shared.set(basis);
        Ok(self.shared.get().expect("initialised").as_ref())
    }

    /// Kernels of `A_h(t)`. Separable families reuse one eigenbasis for
    /// every time level.
    pub fn kernels_at(&self, t: f64, mode: KernelMode) -> Result<KernelContext> {
        // assembly also enforces the ellipticity floor at this time level
        let stiffness = assemble_stiffness(&self.mesh, &self.ops, t)?;
        if mode == KernelMode::Spectral {
            if let (Some(s), Some(shared)) = (self.ops.time_factor(), self.shared()?) {
                return KernelContext::from_shared(
                    self.mass.clone(),
                    &shared.base_stiffness,
                    shared.eig.clone(),
                    s(t),
                    t,
                );
            }
        }
        KernelContext::new(self.mass.clone(), stiffness, t, mode)
    }

    /// `σ(t) Σ_i √q_i Δβ_i P_h e_i` for a batch: `increments` is
    /// `n_modes × samples`.
    pub fn field_increments(&self, t: f64, increments: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
        match &self.projector {
            Some(p) => Ok(Some(p.project_steps(increments)? * (self.amplitude)(t))),
            None => Ok(None),
        }
    }
}

/// Default non-autonomous family: `q(x,t) = q₀(x)(1 + ½ sin(2πt/T))` with
/// `q₀(x) = 1 + ½ x(1 − x)` on the unit interval, no advection.
pub fn default_operator(horizon: f64) -> OperatorFamily {
    let period = horizon;
    OperatorFamily::new(
        Coefficient::separable(
            |x| 1.0 + 0.5 * x * (1.0 - x),
            move |t| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * t / period).sin(),
        ),
        Coefficient::Zero,
        0.25,
    )
    .expect("positive floor")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_validation() {
        let nodes: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
        let times = [0.0, 0.5, 1.0];
        assert!(Drift::sine(2.0).validate(&nodes, &times, 200, 1).is_ok());
        let liar = Drift::new("cubic", 1.0, |_, _, u| u * u * u);
        assert!(liar.validate(&nodes, &times, 200, 1).is_err());
        let blowup = Drift::new("pole", 0.0, |t, _, _| 1.0 / (t - 0.5));
        assert!(blowup.validate(&nodes, &times, 1, 1).is_err());
    }

    #[test]
    fn separable_kernels_share_the_basis() {
        let mut p = Problem::heat(|x| x * (1.0 - x), 1.0);
        p.ops = default_operator(1.0);
        let m = p.discretize(15).unwrap();
        let a = m.kernels_at(0.1, KernelMode::Spectral).unwrap();
        let b = m.kernels_at(0.6, KernelMode::Spectral).unwrap();
        let direct = KernelContext::new(
            m.mass.clone(),
            assemble_stiffness(&m.mesh, &m.ops, 0.6).unwrap(),
            0.6,
            KernelMode::Spectral,
        )
        .unwrap();
        let la = a.eigenvalues().unwrap();
        let lb = b.eigenvalues().unwrap();
        let ld = direct.eigenvalues().unwrap();
        let s = |t: f64| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * t).sin();
        for k in 0..15 {
            assert!((la[k] / lb[k] - s(0.1) / s(0.6)).abs() < 1e-12);
            assert!((lb[k] - ld[k]).abs() < 1e-9 * ld[k]);
        }
        let v = DVector::from_fn(15, |i, _| (i as f64).sin());
        let e1 = b.expm_action(0.01, &v).unwrap();
        let e2 = direct.expm_action(0.01, &v).unwrap();
        assert!((e1 - e2).norm() < 1e-10 * v.norm());
    }

    #[test]
    fn ellipticity_enforced_per_time_level() {
        let mut p = Problem::heat(|_| 0.0, 1.0);
        p.ops = OperatorFamily::new(Coefficient::separable(|_| 1.0, |t| 1.0 - t), Coefficient::Zero, 0.1).unwrap();
        let m = p.discretize(7).unwrap();
        assert!(m.kernels_at(0.5, KernelMode::Spectral).is_ok());
        assert!(matches!(
            m.kernels_at(0.95, KernelMode::Spectral),
            Err(Error::Ellipticity { .. })
        ));
    }
}
