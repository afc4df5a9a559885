//! Q-cylindrical fBm: mode spectrum and its projection onto the P1 space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fbm::check_hurst;
use crate::error::{Error, Result};
use crate::fem::Mesh1D;
use crate::linalg::Tridiagonal;

/// Eigenbasis of the covariance operator `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `e_i(x) = √(2/L) sin(iπ(x − a)/L)`.
    #[default]
    Sine,
}

impl Basis {
    pub fn eval(&self, mesh: &Mesh1D, mode: usize, x: f64) -> f64 {
        match self {
            Basis::Sine => {
                let len = mesh.length();
                (2.0 / len).sqrt() * (mode as f64 * std::f64::consts::PI * (x - mesh.a()) / len).sin()
            }
        }
    }

    /// Exact load vector `(∫ e_i φ_j)_j`.
    ///
    /// Quadrature would alias modes finer than the mesh into smooth
    /// components, so the integral is evaluated in closed form:
    /// `∫ sin(k(x−a)) φ_j = sin(k(x_j−a)) · 2(1 − cos kh)/(k²h)`.
    pub fn load(&self, mesh: &Mesh1D, mode: usize) -> DVector<f64> {
        match self {
            Basis::Sine => {
                let len = mesh.length();
                let h = mesh.h();
                let k = mode as f64 * std::f64::consts::PI / len;
                let factor = (2.0 / len).sqrt() * 2.0 * (1.0 - (k * h).cos()) / (k * k * h);
                DVector::from_iterator(
                    mesh.n_interior(),
                    mesh.interior_nodes()
                        .into_iter()
                        .map(|x| factor * (k * (x - mesh.a())).sin()),
                )
            }
        }
    }
}

/// Spectrum of `Q`: Hurst parameter and mode variances `q_1, …, q_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmSpec {
    pub hurst: f64,
    pub mode_variances: Vec<f64>,
    pub basis: Basis,
}

impl FbmSpec {
    pub fn new(hurst: f64, mode_variances: Vec<f64>) -> Result<Self> {
        check_hurst(hurst)?;
        if let Some(q) = mode_variances.iter().find(|q| !(**q >= 0.0) || !q.is_finite()) {
            return Err(Error::param(
                "mode_variances",
                format!("need finite q_i ≥ 0, found {q}"),
            ));
        }
        Ok(Self {
            hurst,
            mode_variances,
            basis: Basis::Sine,
        })
    }

    /// `q_i = scale · i^{−decay}` for `i = 1..=n_modes`.
    pub fn power_law(hurst: f64, n_modes: usize, scale: f64, decay: f64) -> Result<Self> {
        Self::new(hurst, (1..=n_modes).map(|i| scale * (i as f64).powf(-decay)).collect())
    }

    pub fn n_modes(&self) -> usize {
        self.mode_variances.len()
    }

    pub fn trace(&self) -> f64 {
        self.mode_variances.iter().sum()
    }
}

/// Cached `P_h e_i` scaled by `√q_i`, one column per mode.
#[derive(Debug, Clone)]
pub struct FieldProjector {
    weighted: DMatrix<f64>,
}

impl FieldProjector {
    pub fn new(spec: &FbmSpec, mesh: &Mesh1D, mass: &Tridiagonal) -> Result<Self> {
        let n = mesh.n_interior();
        let lu = mass.factor()?;
        let mut weighted = DMatrix::zeros(n, spec.n_modes());
        for (i, q) in spec.mode_variances.iter().enumerate() {
            let mut col = spec.basis.load(mesh, i + 1);
            lu.solve_in_place(col.as_mut_slice());
            weighted.column_mut(i).copy_from(&(col * q.sqrt()));
        }
        Ok(Self { weighted })
    }

    pub fn n_modes(&self) -> usize {
        self.weighted.ncols()
    }

    pub fn dim(&self) -> usize {
        self.weighted.nrows()
    }

    /// `√q_i P_h e_i`.
    pub fn column(&self, mode: usize) -> DVector<f64> {
        self.weighted.column(mode).into_owned()
    }

    /// `Σ_i √q_i Δβ_i P_h e_i`.
    pub fn field_increment(&self, mode_increments: &[f64]) -> Result<DVector<f64>> {
        if mode_increments.len() != self.n_modes() {
            return Err(Error::Dimension {
                expected: self.n_modes(),
                got: mode_increments.len(),
            });
        }
        Ok(&self.weighted * DVector::from_column_slice(mode_increments))
    }

    /// Field increments for every step: `increments` is `n_modes × steps`.
    pub fn project_steps(&self, increments: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if increments.nrows() != self.n_modes() {
            return Err(Error::Dimension {
                expected: self.n_modes(),
                got: increments.nrows(),
            });
        }
        Ok(&self.weighted * increments)
    }
}
