//! Banded and small dense linear algebra used by the finite-element layer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is entry `(i + 1, i)`, `upper[i]` is entry `(i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        for band in [&lower, &upper] {
            if band.len() != n - 1 {
                return Err(Error::Dimension {
                    expected: n - 1,
                    got: band.len(),
                });
            }
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n.saturating_sub(1)],
            diag: vec![0.0; n],
            upper: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|d| *d = 1.0);
        t
    }

    /// Constant-band Toeplitz matrix `tri(sub, main, sup)`.
    pub fn toeplitz(n: usize, sub: f64, main: f64, sup: f64) -> Self {
        Self {
            lower: vec![sub; n.saturating_sub(1)],
            diag: vec![main; n],
            upper: vec![sup; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.lower[j]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            0.0
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Tridiagonal, b: f64) -> Tridiagonal {
        let zip = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
        Tridiagonal {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
        }
    }

    pub fn scaled(&self, s: f64) -> Tridiagonal {
        let sc = |x: &[f64]| x.iter().map(|v| s * v).collect();
        Tridiagonal {
            lower: sc(&self.lower),
            diag: sc(&self.diag),
            upper: sc(&self.upper),
        }
    }

    pub fn transpose(&self) -> Tridiagonal {
        Tridiagonal {
            lower: self.upper.clone(),
            diag: self.diag.clone(),
            upper: self.lower.clone(),
        }
    }

    pub fn symmetric_part(&self) -> Tridiagonal {
        self.combine(0.5, &self.transpose(), 0.5)
    }

    pub fn skew_part(&self) -> Tridiagonal {
        self.combine(0.5, &self.transpose(), -0.5)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(0.0_f64, |m, (l, u)| m.max((l - u).abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry() <= 1e-14 * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn mul_slice(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.upper[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.mul_slice(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Column-wise product with a dense block.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), x.ncols());
        for (xc, mut yc) in x.column_iter().zip(y.column_iter_mut()) {
            let xs: Vec<f64> = xc.iter().copied().collect();
            self.mul_slice(&xs, yc.as_mut_slice());
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut ay = vec![0.0; self.dim()];
        self.mul_slice(y, &mut ay);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// LU factorisation without pivoting (Thomas algorithm).
    pub fn factor(&self) -> Result<TridiagonalLu> {
        let n = self.dim();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n.saturating_sub(1));
        let mut p = self.diag[0];
        if p.abs() <= 1e-300 * scale || !p.is_finite() {
            return Err(Error::Singular);
        }
        pivots.push(p);
        for i in 1..n {
            let l = self.lower[i - 1] / p;
            p = self.diag[i] - l * self.upper[i - 1];
            if p.abs() <= 1e-14 * scale || !p.is_finite() {
                return Err(Error::Singular);
            }
            multipliers.push(l);
            pivots.push(p);
        }
        Ok(TridiagonalLu {
            pivots,
            multipliers,
            upper: self.upper.clone(),
        })
    }

    /// Cholesky factor of a symmetric positive definite tridiagonal matrix.
    pub fn cholesky(&self) -> Result<BidiagonalCholesky> {
        if !self.is_symmetric() {
            return Err(Error::NotSymmetric(self.asymmetry()));
        }
        let n = self.dim();
        let mut diag = Vec::with_capacity(n);
        let mut sub = Vec::with_capacity(n.saturating_sub(1));
        let mut d2 = self.diag[0];
        for i in 0..n {
            if i > 0 {
                let l = self.lower[i - 1] / diag[i - 1];
                sub.push(l);
                d2 = self.diag[i] - l * l;
            }
            if d2 <= 0.0 || !d2.is_finite() {
                return Err(Error::Singular);
            }
            diag.push(d2.sqrt());
        }
        Ok(BidiagonalCholesky { diag, sub })
    }
}

#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    pivots: Vec<f64>,
    multipliers: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.pivots.len();
        for i in 1..n {
            b[i] -= self.multipliers[i - 1] * b[i - 1];
        }
        b[n - 1] /= self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            b[i] = (b[i] - self.upper[i] * b[i + 1]) / self.pivots[i];
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_mat_in_place(&self, b: &mut DMatrix<f64>) {
        for mut col in b.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
    }
}

/// Lower bidiagonal `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BidiagonalCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl BidiagonalCholesky {
    /// Dense `L⁻¹` (lower triangular).
    pub fn inverse_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            // forward substitution on e_j
            inv[(j, j)] = 1.0 / self.diag[j];
            for i in j + 1..n {
                inv[(i, j)] = -self.sub[i - 1] * inv[(i - 1, j)] / self.diag[i];
            }
        }
        inv
    }
}

/// `e^{A}` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;

    let n = a.nrows();
    let norm1 = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let squarings = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-squarings);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]);
    let u = &a * (inner_u + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &ident * B[1]);
    let inner_v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]);
    let v = inner_v + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &ident * B[0];

    let lu = (&v - &u).lu();
    let mut r = lu.solve(&(&v + &u)).ok_or(Error::Singular)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// M-inner product `xᵀ M y`.
pub fn m_dot(mass: &Tridiagonal, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    mass.bilinear(x.as_slice(), y.as_slice())
}

/// Squared mass-matrix norm `vᵀ M v`.
pub fn m_norm_sq(mass: &Tridiagonal, v: &DVector<f64>) -> f64 {
    mass.bilinear(v.as_slice(), v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample() -> Tridiagonal {
        Tridiagonal::new(vec![1.0, -0.5, 0.25], vec![4.0, 5.0, 6.0, 3.0], vec![0.5, 1.5, -1.0]).unwrap()
    }

    #[test]
    fn band_lengths_are_checked() {
        assert!(Tridiagonal::new(vec![1.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn thomas_solve_matches_dense() {
        let t = sample();
        let b = DVector::from_vec(vec![1.0, 2.0, -3.0, 0.5]);
        let x = t.factor().unwrap().solve(&b);
        let dense = t.to_dense().lu().solve(&b).unwrap();
        assert_relative_eq!(x, dense, epsilon = 1e-13);
    }

    #[test]
    fn cholesky_inverse_reproduces_matrix() {
        let t = Tridiagonal::toeplitz(5, 1.0, 4.0, 1.0);
        let linv = t.cholesky().unwrap().inverse_dense();
        let l = linv.clone().try_inverse().unwrap();
        assert_relative_eq!(&l * l.transpose(), t.to_dense(), epsilon = 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let t = Tridiagonal::toeplitz(3, 2.0, 1.0, 2.0);
        assert!(matches!(t.cholesky(), Err(Error::Singular)));
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5, -40.0]));
        let e = expm_dense(&d).unwrap();
        for (i, v) in [-1.0_f64, 0.5, -40.0].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], v.exp(), max_relative = 1e-13);
        }
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm_dense(&nil).unwrap();
        assert_relative_eq!(e, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn expm_rotation() {
        let theta = 2.5;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -theta, theta, 0.0]);
        let e = expm_dense(&a).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        assert_relative_eq!(e, expect, epsilon = 1e-13);
    }
}
