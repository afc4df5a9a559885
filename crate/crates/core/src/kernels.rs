//! Exponential-integrator kernels `e^{-Δt A_h}`, `φ₁(Δt A_h)` and the
//! resolvent `(I + Δt A_h)⁻¹`, with `A_h = M⁻¹ K(t_m)` frozen at one time level.
//!
//! Self-adjoint operators go through the generalised eigendecomposition of
//! `(M, K)`. Operators with advection fall back to dense scaling and squaring
//! on `M⁻¹ K`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{generalized_eigendecomposition, GeneralizedEigen};
use crate::linalg::{expm_dense, Tridiagonal};

/// Below this argument `φ₁` switches to its Taylor series.
pub const PHI1_TAYLOR_THRESHOLD: f64 = 1e-4;

/// `φ₁(z) = (1 − e^{−z}) / z`, with `φ₁(0) = 1`.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < PHI1_TAYLOR_THRESHOLD {
        // Σ_{k<6} (−z)^k / (k+1)!
        1.0 - z / 2.0 + z * z / 6.0 - z.powi(3) / 24.0 + z.powi(4) / 120.0 - z.powi(5) / 720.0
    } else {
        -(-z).exp_m1() / z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Spectral,
    ResolventOnly,
}

#[derive(Debug, Clone)]
struct SpectralCache {
    eig: Arc<GeneralizedEigen>,
    /// eigenvalues of this level are `scale · eig.values`
    scale: f64,
}

impl SpectralCache {
    fn eigenvalue(&self, k: usize) -> f64 {
        self.scale * self.eig.values[k]
    }
}

/// Kernels of `A_h(t_m)` for one time level.
#[derive(Debug, Clone)]
pub struct KernelContext {
    time: f64,
    mass: Arc<Tridiagonal>,
    stiffness: Tridiagonal,
    mode: KernelMode,
    /// decomposition of `(M, sym K)`
    spectral: Option<SpectralCache>,
    /// `M⁻¹ K` when `K` is not symmetric
    dense_generator: Option<DMatrix<f64>>,
}

impl KernelContext {
    pub fn new(mass: Arc<Tridiagonal>, stiffness: Tridiagonal, time: f64, mode: KernelMode) -> Result<Self> {
        if mass.dim() != stiffness.dim() {
            return Err(Error::Dimension {
                expected: mass.dim(),
                got: stiffness.dim(),
            });
        }
        let (spectral, dense_generator) = match mode {
            KernelMode::ResolventOnly => (None, None),
            KernelMode::Spectral => {
                let symmetric = stiffness.is_symmetric();
                let sym = if symmetric {
                    stiffness.clone()
                } else {
                    stiffness.symmetric_part()
                };
                let eig = generalized_eigendecomposition(&mass, &sym)?;
                let cache = SpectralCache {
                    eig: Arc::new(eig),
                    scale: 1.0,
                };
                let dense = if symmetric {
                    None
                } else {
                    let lu = mass.to_dense().lu();
                    Some(lu.solve(&stiffness.to_dense()).ok_or(Error::Singular)?)
                };
                (Some(cache), dense)
            }
        };
        Ok(Self {
            time,
            mass,
            stiffness,
            mode,
            spectral,
            dense_generator,
        })
    }

    /// Context for `K(t) = scale · K₀` reusing a decomposition of `(M, K₀)`.
    pub fn from_shared(
        mass: Arc<Tridiagonal>,
        base_stiffness: &Tridiagonal,
        base: Arc<GeneralizedEigen>,
        scale: f64,
        time: f64,
    ) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::param("scale", "time factor of the operator must be positive"));
        }
        if base.dim() != mass.dim() {
            return Err(Error::Dimension {
                expected: mass.dim(),
                got: base.dim(),
            });
        }
        Ok(Self {
            time,
            mass,
            stiffness: base_stiffness.scaled(scale),
            mode: KernelMode::Spectral,
            spectral: Some(SpectralCache { eig: base, scale }),
            dense_generator: None,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn mass(&self) -> &Tridiagonal {
        &self.mass
    }

    pub fn stiffness(&self) -> &Tridiagonal {
        &self.stiffness
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.dense_generator.is_none()
    }

    /// Eigenvalues of `(M, sym K)` at this level, ascending.
    pub fn eigenvalues(&self) -> Option<DVector<f64>> {
        self.spectral.as_ref().map(|s| &s.eig.values * s.scale)
    }

    /// `M`-orthonormal eigenvectors of `(M, sym K)`.
    pub fn eigenvectors(&self) -> Option<&DMatrix<f64>> {
        self.spectral.as_ref().map(|s| &s.eig.vectors)
    }

    /// Checks that this context was built at `t`.
    pub fn check_time(&self, t: f64) -> Result<()> {
        let tol = 1e-12 * t.abs().max(1.0);
        if (self.time - t).abs() > tol {
            return Err(Error::KernelTime {
                kernel: self.time,
                step: t,
            });
        }
        Ok(())
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Solves `(M + dt K) x = M v`.
    pub fn resolvent_step(&self, dt: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        let mut x = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.resolvent_apply(dt, &mut x)?;
        Ok(DVector::from_column_slice(x.as_slice()))
    }

    /// Resolvent applied column-wise in place.
    pub fn resolvent_apply(&self, dt: f64, x: &mut DMatrix<f64>) -> Result<()> {
        if dt < 0.0 {
            return Err(Error::NegativeStep(dt));
        }
        if dt == 0.0 {
            return Ok(());
        }
        let system = self.mass.combine(1.0, &self.stiffness, dt);
        let lu = system.factor()?;
        let mut rhs = self.mass.mul_mat(x);
        lu.solve_mat_in_place(&mut rhs);
        *x = rhs;
        Ok(())
    }

    /// `e^{−dt A_h} v`.
    pub fn expm_action(&self, dt: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        if dt < 0.0 {
            return Err(Error::NegativeStep(dt));
        }
        self.check_len(v)?;
        if dt == 0.0 {
            return Ok(v.clone());
        }
        let ops = self.step_operators(dt)?;
        Ok(ops.apply_expm_vec(v))
    }

    /// `φ₁(dt A_h) v = (dt A_h)⁻¹ (I − e^{−dt A_h}) v`.
    pub fn phi1_action(&self, dt: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
        if dt <= 0.0 {
            return Err(Error::NonPositiveStep(dt));
        }
        self.check_len(v)?;
        let ops = self.step_operators(dt)?;
        Ok(ops.apply_phi1_vec(v))
    }

    /// `A_h v = M⁻¹ K v`.
    pub fn generator_action(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        Ok(self.mass.factor()?.solve(&self.stiffness.mul_vec(v)))
    }

    /// Kernels for a fixed step size, ready for repeated application.
    pub fn step_operators(&self, dt: f64) -> Result<StepOperators<'_>> {
        if dt < 0.0 {
            return Err(Error::NegativeStep(dt));
        }
        if let Some(gen) = &self.dense_generator {
            let n = gen.nrows();
            let expm = expm_dense(&(gen * -dt))?;
            // exp([[−dt A, I], [0, 0]]) carries φ₁(dt A) in its upper right block
            let mut block = DMatrix::zeros(2 * n, 2 * n);
            block.view_mut((0, 0), (n, n)).copy_from(&(gen * -dt));
            block.view_mut((0, n), (n, n)).fill_with_identity();
            let phi1 = expm_dense(&block)?.view((0, n), (n, n)).into_owned();
            return Ok(StepOperators::Dense { expm, phi1 });
        }
        let spectral = self.spectral.as_ref().ok_or_else(|| {
            Error::param(
                "mode",
                "exponential kernels need a spectral context, this one is resolvent-only",
            )
        })?;
        let n = self.dim();
        let lambda: Vec<f64> = (0..n).map(|k| spectral.eigenvalue(k)).collect();
        let decay = lambda.iter().map(|l| (-l * dt).exp()).collect();
        let phi = lambda.iter().map(|l| phi1(l * dt)).collect();
        Ok(StepOperators::Spectral {
            eig: &spectral.eig,
            decay,
            phi,
        })
    }
}

/// `e^{−dt A_h}` and `φ₁(dt A_h)` for one `(t_m, dt)`.
#[derive(Debug)]
pub enum StepOperators<'a> {
    Spectral {
        eig: &'a GeneralizedEigen,
        decay: Vec<f64>,
        phi: Vec<f64>,
    },
    Dense {
        expm: DMatrix<f64>,
        phi1: DMatrix<f64>,
    },
}

impl StepOperators<'_> {
    /// `e^{−dt A} X + dt φ₁(dt A) G` for blocks of column vectors.
    pub fn exponential_update(&self, x: &DMatrix<f64>, g: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
        match self {
            StepOperators::Spectral { eig, decay, phi } => {
                let s = x.ncols();
                let mut both = DMatrix::zeros(x.nrows(), 2 * s);
                both.columns_mut(0, s).copy_from(x);
                both.columns_mut(s, s).copy_from(g);
                let c = eig.to_spectral(&both);
                let combined =
                    DMatrix::from_fn(x.nrows(), s, |k, j| decay[k] * c[(k, j)] + dt * phi[k] * c[(k, s + j)]);
                eig.from_spectral(&combined)
            }
            StepOperators::Dense { expm, phi1 } => expm * x + phi1 * g * dt,
        }
    }

    pub fn apply_expm(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StepOperators::Spectral { eig, decay, .. } => {
                let mut c = eig.to_spectral(x);
                scale_rows(&mut c, decay);
                eig.from_spectral(&c)
            }
            StepOperators::Dense { expm, .. } => expm * x,
        }
    }

    pub fn apply_phi1(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            StepOperators::Spectral { eig, phi, .. } => {
                let mut c = eig.to_spectral(x);
                scale_rows(&mut c, phi);
                eig.from_spectral(&c)
            }
            StepOperators::Dense { phi1, .. } => phi1 * x,
        }
    }

    pub fn apply_expm_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.apply_expm(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        DVector::from_column_slice(m.as_slice())
    }

    pub fn apply_phi1_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = self.apply_phi1(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        DVector::from_column_slice(m.as_slice())
    }
}

fn scale_rows(c: &mut DMatrix<f64>, weights: &[f64]) {
    for mut col in c.column_iter_mut() {
        for (v, w) in col.iter_mut().zip(weights) {
            *v *= w;
        }
    }
}
