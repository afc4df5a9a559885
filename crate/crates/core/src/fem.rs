//! P1 finite elements on a uniform interval mesh with homogeneous Dirichlet
//! boundary conditions.
//!
//! Only interior nodes carry degrees of freedom. The time-dependent operator
//! `A(t) = -∂ₓ(q(x,t) ∂ₓ·) + b(x,t) ∂ₓ·` is realised as the pair `(M, K(t))`
//! with `M (A_h v) = K v`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;

pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Two-point Gauss abscissae on the reference interval [0, 1].
const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
/// Three-point Gauss rule on [0, 1]: (abscissa, weight).
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    a: f64,
    b: f64,
    n_interior: usize,
}

impl Mesh1D {
    pub fn new(a: f64, b: f64, n_interior: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidMesh(format!("need a < b, got [{a}, {b}]")));
        }
        if n_interior == 0 {
            return Err(Error::InvalidMesh("need at least one interior node".into()));
        }
        Ok(Self { a, b, n_interior })
    }

    pub fn unit(n_interior: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n_interior)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_elements(&self) -> usize {
        self.n_interior + 1
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_elements() as f64
    }

    /// Coordinate of node `i`, `0 ≤ i ≤ n_interior + 1`.
    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h()
    }

    /// Coordinates of the interior (unknown) nodes.
    pub fn interior_nodes(&self) -> Vec<f64> {
        (1..=self.n_interior).map(|i| self.node(i)).collect()
    }

    /// Whether every node of `self` is a node of `fine`.
    pub fn is_nested_in(&self, fine: &Mesh1D) -> bool {
        let same_domain =
            (self.a - fine.a).abs() <= 1e-14 * self.length() && (self.b - fine.b).abs() <= 1e-14 * self.length();
        same_domain && fine.n_elements() >= self.n_elements() && fine.n_elements().is_multiple_of(self.n_elements())
    }

    fn gauss2(&self, element: usize) -> [f64; 2] {
        let left = self.node(element);
        let h = self.h();
        [left + GAUSS2[0] * h, left + GAUSS2[1] * h]
    }
}

impl fmt::Display for Mesh1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] with {} interior nodes", self.a, self.b, self.n_interior)
    }
}

/// A coefficient field `c(x, t)`.
#[derive(Clone)]
pub enum Coefficient {
    Zero,
    /// `c(x, t) = space(x) · time(t)`.
    Separable {
        space: SpaceFn,
        time: SpaceFn,
    },
    General(SpaceTimeFn),
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Coefficient::Separable {
            space: Arc::new(move |_| c),
            time: Arc::new(|_| 1.0),
        }
    }

    pub fn separable(
        space: impl Fn(f64) -> f64 + Send + Sync + 'static,
        time: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Coefficient::Separable {
            space: Arc::new(space),
            time: Arc::new(time),
        }
    }

    pub fn general(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::General(Arc::new(f))
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Separable { space, time } => space(x) * time(t),
            Coefficient::General(f) => f(x, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Zero => f.write_str("Zero"),
            Coefficient::Separable { .. } => f.write_str("Separable"),
            Coefficient::General(_) => f.write_str("General"),
        }
    }
}

/// Diffusion `q(x,t)` and advection `b(x,t)` defining `A(t)`.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    pub diffusion: Coefficient,
    pub advection: Coefficient,
    pub ellipticity_floor: f64,
}

impl OperatorFamily {
    pub fn new(diffusion: Coefficient, advection: Coefficient, ellipticity_floor: f64) -> Result<Self> {
        if !(ellipticity_floor > 0.0) {
            return Err(Error::param("ellipticity_floor", "must be positive"));
        }
        Ok(Self {
            diffusion,
            advection,
            ellipticity_floor,
        })
    }

    /// `q ≡ 1`, `b ≡ 0`: the Dirichlet Laplacian.
    pub fn laplacian() -> Self {
        Self {
            diffusion: Coefficient::constant(1.0),
            advection: Coefficient::Zero,
            ellipticity_floor: 1.0,
        }
    }

    /// When `K(t) = s(t)·K₀` (separable diffusion, no advection), returns `s`.
    pub fn time_factor(&self) -> Option<SpaceFn> {
        match (&self.diffusion, &self.advection) {
            (Coefficient::Separable { time, .. }, Coefficient::Zero) => Some(time.clone()),
            _ => None,
        }
    }

    pub fn is_self_adjoint(&self) -> bool {
        self.advection.is_zero()
    }
}

/// Consistent P1 mass matrix on the interior nodes.
pub fn assemble_mass(mesh: &Mesh1D) -> Tridiagonal {
    let h = mesh.h();
    Tridiagonal::toeplitz(mesh.n_interior(), h / 6.0, 2.0 * h / 3.0, h / 6.0)
}

/// Stiffness matrix `K(t)` of the bilinear form
/// `∫ q u′ v′ + ∫ b u′ v` with two-point Gauss quadrature per element.
pub fn assemble_stiffness(mesh: &Mesh1D, ops: &OperatorFamily, t: f64) -> Result<Tridiagonal> {
    assemble_with(
        mesh,
        |x| ops.diffusion.eval(x, t),
        |x| ops.advection.eval(x, t),
        ops.ellipticity_floor,
        t,
    )
}

/// Time-independent factor `K₀` of a separable family, assembled with
/// `q₀(x)` alone. `None` when the family is not separable.
pub fn assemble_stiffness_base(mesh: &Mesh1D, ops: &OperatorFamily) -> Result<Option<Tridiagonal>> {
    match (&ops.diffusion, &ops.advection) {
        (Coefficient::Separable { space, .. }, Coefficient::Zero) => {
            // the floor applies to q(x,t); the spatial factor alone may be scaled arbitrarily
            assemble_with(mesh, |x| space(x), |_| 0.0, f64::NEG_INFINITY, f64::NAN).map(Some)
        }
        _ => Ok(None),
    }
}

fn assemble_with(
    mesh: &Mesh1D,
    diffusion: impl Fn(f64) -> f64,
    advection: impl Fn(f64) -> f64,
    floor: f64,
    t: f64,
) -> Result<Tridiagonal> {
    let n = mesh.n_interior();
    let h = mesh.h();
    let mut k = Tridiagonal::zeros(n);
    for e in 0..mesh.n_elements() {
        let gp = mesh.gauss2(e);
        let mut q_int = 0.0;
        // ∫ b N_left, ∫ b N_right over the element
        let mut b_left = 0.0;
        let mut b_right = 0.0;
        for (g, &x) in gp.iter().enumerate() {
            let q = diffusion(x);
            if q < floor {
                return Err(Error::Ellipticity { x, t, value: q, floor });
            }
            let w = 0.5 * h;
            q_int += w * q;
            let b = advection(x);
            let xi = GAUSS2[g];
            b_left += w * b * (1.0 - xi);
            b_right += w * b * xi;
        }
        // local dofs: element e spans nodes e (left) and e+1 (right);
        // interior index of node j is j-1.
        let d = q_int / (h * h);
        // local[i][j] = d·(±1) + (N_j′)·∫b N_i, N_left′ = -1/h, N_right′ = 1/h
        let local = [[d - b_left / h, -d + b_left / h], [-d - b_right / h, d + b_right / h]];
        let nodes = [e, e + 1];
        for (li, &gi) in nodes.iter().enumerate() {
            if gi == 0 || gi > n {
                continue;
            }
            let i = gi - 1;
            for (lj, &gj) in nodes.iter().enumerate() {
                if gj == 0 || gj > n {
                    continue;
                }
                let j = gj - 1;
                let v = local[li][lj];
                if i == j {
                    k.diag[i] += v;
                } else if j == i + 1 {
                    k.upper[i] += v;
                } else {
                    k.lower[j] += v;
                }
            }
        }
    }
    Ok(k)
}

/// Load vector `(∫ f φ_i)_i` with two-point Gauss quadrature per element.
pub fn load_vector(mesh: &Mesh1D, f: impl Fn(f64) -> f64) -> DVector<f64> {
    let n = mesh.n_interior();
    let h = mesh.h();
    let mut load = DVector::zeros(n);
    for e in 0..mesh.n_elements() {
        for (g, &x) in mesh.gauss2(e).iter().enumerate() {
            let fx = 0.5 * h * f(x);
            let xi = GAUSS2[g];
            if e >= 1 {
                load[e - 1] += fx * (1.0 - xi);
            }
            if e < n {
                load[e] += fx * xi;
            }
        }
    }
    load
}

/// L² projection onto the P1 space in nodal coordinates: solves `M c = load(f)`.
pub fn l2_project(mesh: &Mesh1D, mass: &Tridiagonal, f: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
    let load = load_vector(mesh, f);
    Ok(mass.factor()?.solve(&load))
}

/// Nodal interpolant at the interior nodes.
pub fn interpolate(mesh: &Mesh1D, f: impl Fn(f64) -> f64) -> DVector<f64> {
    DVector::from_iterator(mesh.n_interior(), mesh.interior_nodes().into_iter().map(f))
}

/// Evaluates the P1 function with interior coefficients `c` at `x`.
pub fn evaluate(mesh: &Mesh1D, c: &DVector<f64>, x: f64) -> f64 {
    let h = mesh.h();
    let s = ((x - mesh.a()) / h).clamp(0.0, mesh.n_elements() as f64);
    let e = (s.floor() as usize).min(mesh.n_elements() - 1);
    let xi = s - e as f64;
    let nodal = |j: usize| if j == 0 || j > mesh.n_interior() { 0.0 } else { c[j - 1] };
    (1.0 - xi) * nodal(e) + xi * nodal(e + 1)
}

/// Nodal injection of a coarse P1 function into a nested finer mesh (exact).
pub fn prolongate(coarse: &Mesh1D, fine: &Mesh1D, c: &DVector<f64>) -> Result<DVector<f64>> {
    if !coarse.is_nested_in(fine) {
        return Err(Error::InvalidMesh(format!("{coarse} is not nested in {fine}")));
    }
    if c.len() != coarse.n_interior() {
        return Err(Error::Dimension {
            expected: coarse.n_interior(),
            got: c.len(),
        });
    }
    Ok(DVector::from_iterator(
        fine.n_interior(),
        fine.interior_nodes().into_iter().map(|x| evaluate(coarse, c, x)),
    ))
}

/// `‖u_h − f‖_{L²}` with three-point Gauss quadrature per element.
pub fn l2_error(mesh: &Mesh1D, c: &DVector<f64>, f: impl Fn(f64) -> f64) -> f64 {
    let h = mesh.h();
    let n = mesh.n_interior();
    let nodal = |j: usize| if j == 0 || j > n { 0.0 } else { c[j - 1] };
    let mut acc = 0.0;
    for e in 0..mesh.n_elements() {
        let left = mesh.node(e);
        for &(xi, w) in &GAUSS3 {
            let uh = (1.0 - xi) * nodal(e) + xi * nodal(e + 1);
            let d = uh - f(left + xi * h);
            acc += w * h * d * d;
        }
    }
    acc.sqrt()
}

/// Generalised eigenpairs of `K v = λ M v` for symmetric `K` and SPD `M`.
///
/// Eigenvalues ascend; the columns of `vectors` are `M`-orthonormal.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
    /// `Vᵀ M`, kept dense so coordinates come from a single product
    analysis: DMatrix<f64>,
}

pub fn generalized_eigendecomposition(mass: &Tridiagonal, stiffness: &Tridiagonal) -> Result<GeneralizedEigen> {
    if mass.dim() != stiffness.dim() {
        return Err(Error::Dimension {
            expected: mass.dim(),
            got: stiffness.dim(),
        });
    }
    if !stiffness.is_symmetric() {
        return Err(Error::NotSymmetric(stiffness.asymmetry()));
    }
    let linv = mass.cholesky()?.inverse_dense();
    let k = stiffness.to_dense();
    let reduced = &linv * k * linv.transpose();
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = SymmetricEigen::new(reduced);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let y = DMatrix::from_fn(order.len(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = linv.transpose() * y;
    let analysis = mass.mul_mat(&vectors).transpose();
    Ok(GeneralizedEigen {
        values,
        vectors,
        analysis,
    })
}

impl GeneralizedEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Spectral coordinates `Vᵀ M x` of each column of `x`.
    pub fn to_spectral(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.analysis * x
    }

    pub fn from_spectral(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        &self.vectors * c
    }

    /// `Σ_k g(λ_k) (v_kᵀ M x) v_k`.
    pub fn apply_fn(&self, x: &DVector<f64>, g: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut c = &self.analysis * x;
        for (ck, &lam) in c.iter_mut().zip(self.values.iter()) {
            *ck *= g(lam);
        }
        &self.vectors * c
    }

    /// `A^α v` for `α ∈ [-1, 1]`.
    pub fn fractional_power_apply(&self, alpha: f64, v: &DVector<f64>) -> DVector<f64> {
        if alpha == 0.0 {
            return v.clone();
        }
        self.apply_fn(v, |lam| lam.powf(alpha))
    }

    /// `M V Λ Vᵀ M`, which equals `K` when the decomposition is exact.
    pub fn reconstruct(&self, mass: &Tridiagonal) -> DMatrix<f64> {
        let mv = mass.mul_mat(&self.vectors);
        let scaled = DMatrix::from_fn(mv.nrows(), mv.ncols(), |r, c| mv[(r, c)] * self.values[c]);
        scaled * mv.transpose()
    }
}
