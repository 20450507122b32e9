//! Linear symplectic substrate: conventions, quadratic Hamiltonians, Poisson
//! brackets, linear Liouville fields and symplectic matrices.
//!
//! Coordinates are ordered `(q_1..q_n, p_1..p_n)`, `J0 = [[0, I], [-I, 0]]`
//! and `omega0(u, v) = <J0 u, v>`. A quadratic Hamiltonian is
//! `H(x) = 1/2 <x, A x> - c`, with vector field `X_H = J0 A x`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;

pub fn standard_j0<T: Real>(n: usize) -> DMatrix<T> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = T::one();
        j[(n + i, i)] = -T::one();
    }
    j
}

/// `omega0(u, v) = <J0 u, v> = sum_i (u_{p_i} v_{q_i} - u_{q_i} v_{p_i})`.
pub fn symplectic_form<T: Real>(u: &DVector<T>, v: &DVector<T>) -> T {
    let n = u.len() / 2;
    (0..n).fold(T::zero(), |acc, i| acc + u[n + i] * v[i] - u[i] * v[n + i])
}

/// Applies `J0` without forming the matrix.
pub fn apply_j0<T: Real>(x: &DVector<T>) -> DVector<T> {
    let n = x.len() / 2;
    DVector::from_fn(2 * n, |i, _| if i < n { x[n + i] } else { -x[i - n] })
}

fn half_dim(d: usize) -> Result<usize> {
    if d < 2 || !d.is_multiple_of(2) {
        Err(Error::OddDimension(d))
    } else {
        Ok(d / 2)
    }
}

fn check_square<T: Real>(m: &DMatrix<T>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    half_dim(m.nrows())
}

/// A point of `R^{2n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint<T: Real> {
    coords: DVector<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(coords: DVector<T>) -> Result<Self> {
        half_dim(coords.len())?;
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("phase point"));
        }
        Ok(Self { coords })
    }

    pub fn from_slice(coords: &[T]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn q(&self) -> &[T] {
        &self.coords.as_slice()[..self.n()]
    }

    pub fn p(&self) -> &[T] {
        &self.coords.as_slice()[self.n()..]
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.coords
    }

    pub fn into_vector(self) -> DVector<T> {
        self.coords
    }
}

/// `H(x) = 1/2 <x, A x> - c` with `A` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticHamiltonian<T: Real> {
    a: DMatrix<T>,
    c: T,
}

impl<T: Real> QuadraticHamiltonian<T> {
    /// Validates symmetry to `1e-12` (relative to the largest entry) and stores the symmetric part.
    pub fn new(a: DMatrix<T>, c: T) -> Result<Self> {
        check_square(&a)?;
        if !c.is_finite() {
            return Err(Error::NonFinite("constant c"));
        }
        let tol = T::tol(1e-12) * T::one().max(linalg::max_abs(&a));
        let d = a.nrows();
        let mut bad = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                let diff = (a[(i, j)] - a[(j, i)]).abs();
                if diff > tol {
                    bad.push((i, j, diff.as_f64()));
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::NotSymmetric { entries: bad });
        }
        Ok(Self { a: linalg::symmetric_part(&a), c })
    }

    /// Builds a Hamiltonian from the symmetric part of `a`, without a symmetry check.
    pub fn symmetrized(a: DMatrix<T>, c: T) -> Result<Self> {
        check_square(&a)?;
        Ok(Self { a: linalg::symmetric_part(&a), c })
    }

    /// `1/2 |x|^2` on `R^{2n}`.
    pub fn radial(n: usize) -> Self {
        Self { a: DMatrix::identity(2 * n, 2 * n), c: T::zero() }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.dim() / 2
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn constant(&self) -> T {
        self.c
    }

    pub fn with_constant(&self, c: T) -> Self {
        Self { a: self.a.clone(), c }
    }

    pub fn value(&self, x: &DVector<T>) -> T {
        x.dot(&(&self.a * x)) * T::lit(0.5) - self.c
    }

    pub fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        &self.a * x
    }

    pub fn vector_field(&self, x: &DVector<T>) -> DVector<T> {
        apply_j0(&(&self.a * x))
    }

    /// `dH(x)[v]`.
    pub fn differential(&self, x: &DVector<T>, v: &DVector<T>) -> T {
        (&self.a * x).dot(v)
    }

    /// Non-degeneracy: `sigma_min(A) > 1e-9 * |A|_2`.
    pub fn check_nondegenerate(&self) -> Result<()> {
        let s = linalg::singular_values(&self.a);
        let top = s[0];
        let bottom = *s.last().expect("nonempty");
        let tol = T::tol(1e-9) * top;
        if top == T::zero() || bottom <= tol {
            return Err(Error::Degenerate { sigma_min: bottom.as_f64(), tol: tol.as_f64() });
        }
        Ok(())
    }

    /// `H o S`, i.e. the Hamiltonian in coordinates `x = S y`.
    pub fn conjugate(&self, s: &SymplecticMatrix<T>) -> Result<Self> {
        self.same_dim(s.dim())?;
        let m = s.matrix();
        Self::symmetrized(m.transpose() * &self.a * m, self.c)
    }

    fn same_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            Err(Error::DimensionMismatch { expected: self.dim(), found: d })
        } else {
            Ok(())
        }
    }
}

/// `M = J0 A`, the matrix of `X_H`.
pub fn hamiltonian_matrix<T: Real>(h: &QuadraticHamiltonian<T>) -> DMatrix<T> {
    standard_j0::<T>(h.n()) * h.matrix()
}

/// `{F, G} = omega0(X_F, X_G) = dG(X_F)`, a quadratic form with zero constant.
///
/// As a function `{F, G}(x) = -x^T B_F J0 B_G x`, so `{H, F}` is the
/// derivative of `F` along the flow of `H`.
pub fn poisson_bracket<T: Real>(
    f: &QuadraticHamiltonian<T>,
    g: &QuadraticHamiltonian<T>,
) -> Result<QuadraticHamiltonian<T>> {
    f.same_dim(g.dim())?;
    let j = standard_j0::<T>(f.n());
    let bf = f.matrix();
    let bg = g.matrix();
    let m = bg * &j * bf - bf * &j * bg;
    QuadraticHamiltonian::symmetrized(m, T::zero())
}

/// Linear vector field `X(x) = L x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField<T: Real> {
    l: DMatrix<T>,
}

impl<T: Real> LinearField<T> {
    pub fn new(l: DMatrix<T>) -> Result<Self> {
        check_square(&l)?;
        Ok(Self { l })
    }

    /// The radial field `x/2`.
    pub fn radial(n: usize) -> Self {
        Self { l: DMatrix::identity(2 * n, 2 * n) * T::lit(0.5) }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.l
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.l * x
    }

    /// Entrywise max of `J0 L + L^T J0 - J0`.
    pub fn liouville_residual(&self) -> T {
        let j = standard_j0::<T>(self.dim() / 2);
        let r = &j * &self.l + self.l.transpose() * &j - &j;
        linalg::max_abs(&r)
    }

    /// Pushforward `S L S^{-1}` under `x = S y`.
    pub fn push_forward(&self, s: &SymplecticMatrix<T>) -> Self {
        Self { l: s.matrix() * &self.l * s.inverse() }
    }

    /// `dH(X)(x) = <A x, L x>` as the symmetric matrix of that quadratic form.
    pub fn quadratic_derivative(&self, h: &QuadraticHamiltonian<T>) -> DMatrix<T> {
        linalg::symmetric_part(&(h.matrix() * &self.l))
    }
}

/// `J0 L + L^T J0 = J0` entrywise within `1e-10`.
pub fn is_liouville<T: Real>(x: &LinearField<T>) -> bool {
    x.liouville_residual() <= T::tol(1e-10)
}

pub fn blend_liouville<T: Real>(x1: &LinearField<T>, x2: &LinearField<T>, eps: T) -> Result<LinearField<T>> {
    if x1.dim() != x2.dim() {
        return Err(Error::DimensionMismatch { expected: x1.dim(), found: x2.dim() });
    }
    for x in [x1, x2] {
        if !is_liouville(x) {
            return Err(Error::NotLiouville(x.liouville_residual().as_f64()));
        }
    }
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::Invalid(format!("blend parameter {eps} outside [0, 1]")));
    }
    Ok(LinearField { l: x1.matrix() * (T::one() - eps) + x2.matrix() * eps })
}

/// `X^alpha(q, p) = sum_i (q_i/2 + alpha p_i) d/dq_i + (p_i/2 + alpha q_i) d/dp_i`.
pub fn x_alpha_field<T: Real>(m: usize, alpha: T) -> LinearField<T> {
    let mut l = DMatrix::identity(2 * m, 2 * m) * T::lit(0.5);
    for i in 0..m {
        l[(i, m + i)] = alpha;
        l[(m + i, i)] = alpha;
    }
    LinearField { l }
}

/// A matrix with `S^T J0 S = J0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMatrix<T: Real> {
    s: DMatrix<T>,
}

/// Entrywise max of `S^T J0 S - J0`.
pub fn symplectic_residual<T: Real>(s: &DMatrix<T>) -> T {
    let j = standard_j0::<T>(s.nrows() / 2);
    linalg::max_abs(&(s.transpose() * &j * s - j))
}

impl<T: Real> SymplecticMatrix<T> {
    /// Accepts `S` when `S^T J0 S = J0` within `1e-9` scaled by `max(1, max|S_ij|^2)`.
    pub fn new(s: DMatrix<T>) -> Result<Self> {
        check_square(&s)?;
        let r = symplectic_residual(&s);
        let scale = T::one().max(linalg::max_abs(&s).powi(2));
        if r > T::tol(1e-9) * scale {
            return Err(Error::NotSymplectic(r.as_f64()));
        }
        Ok(Self { s })
    }

    pub fn identity(n: usize) -> Self {
        Self { s: DMatrix::identity(2 * n, 2 * n) }
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.s
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.s
    }

    /// `S^{-1} = -J0 S^T J0`.
    pub fn inverse(&self) -> DMatrix<T> {
        let j = standard_j0::<T>(self.dim() / 2);
        -(&j * self.s.transpose() * &j)
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { s: &self.s * &other.s }
    }
}

/// Uniform symmetric matrix with entries in `[-1, 1]`.
pub fn random_symmetric<T: Real>(d: usize, rng: &mut impl Rng) -> DMatrix<T> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x = T::lit(rng.gen_range(-1.0..=1.0));
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// `exp(scale K)` for a seeded random `K = J0 P` with `P` symmetric.
pub fn random_symplectic<T: Real>(n: usize, seed: u64, scale: T) -> SymplecticMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_symmetric::<T>(2 * n, &mut rng);
    let k = standard_j0::<T>(n) * p * scale;
    SymplecticMatrix { s: k.exp() }
}

/// Seeded random quadratic Hamiltonian on `R^{2n}` with entries in `[-1, 1]`.
pub fn random_quadratic<T: Real>(n: usize, seed: u64) -> QuadraticHamiltonian<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_symmetric::<T>(2 * n, &mut rng);
    let c = T::lit(rng.gen_range(-1.0..=1.0));
    QuadraticHamiltonian { a, c }
}
