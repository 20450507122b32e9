//! Linear Hamiltonian flows, closed characteristics, actions and indices.

pub mod index;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use index::{crossings, rs_index, Crossing, HalfInt, SymplecticPath};

use crate::error::{Error, Result};
use crate::hormander::{classify, BlockKind};
use crate::linalg;
use crate::symplectic::{apply_j0, hamiltonian_matrix, standard_j0, symplectic_form};
use crate::Hamiltonian;

/// `exp(t J0 A)`.
pub fn flow(h: &Hamiltonian, t: f64) -> DMatrix<f64> {
    (hamiltonian_matrix(h) * t).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedCharacteristic {
    /// Orthonormal basis `[x0/|x0|, ...]` of the invariant plane, row-major `2n x 2`.
    pub plane: Vec<Vec<f64>>,
    pub mu: f64,
    pub k: i64,
    pub eta: f64,
    pub x0: Vec<f64>,
    pub action: f64,
    pub cz_transverse: Option<HalfInt>,
    pub length: f64,
}

impl ClosedCharacteristic {
    pub fn start(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }

    /// `v(t) = exp(η t J0 A) x0`.
    pub fn point(&self, h: &Hamiltonian, t: f64) -> DVector<f64> {
        flow(h, self.eta * t) * self.start()
    }

    fn plane_matrix(&self) -> DMatrix<f64> {
        linalg::from_rows(&self.plane).expect("rectangular plane")
    }
}

/// `k = 1, -1, 2, -2, ...`
fn iterates(k_max: u32) -> impl Iterator<Item = i64> {
    (1..=i64::from(k_max)).flat_map(|k| [k, -k])
}

/// Closed characteristics on `H = 0` for every elliptic block with `γ = 1`,
/// iterated `k = ±1..±k_max`.
///
/// Elliptic blocks with `m > 1` carry no points of the level set in their
/// eigenvector plane and are skipped.
pub fn enumerate_closed_characteristics(h: &Hamiltonian, k_max: u32) -> Result<Vec<ClosedCharacteristic>> {
    let c = h.constant();
    if c <= 0.0 {
        return Err(Error::Unsupported(format!("orbit enumeration needs c > 0 (got c = {c})")));
    }
    if k_max == 0 {
        return Err(Error::Invalid("k_max must be positive".into()));
    }
    let decomp = classify(h)?;
    let s = linalg::spectral_norm(h.matrix());
    let elliptic: Vec<_> = decomp.blocks.iter().filter(|b| b.kind() == BlockKind::C).collect();
    for w in elliptic.windows(2) {
        if (w[0].primary() - w[1].primary()).abs() <= 1e-7 * (1.0 + s) {
            let count = elliptic.iter().filter(|b| (b.primary() - w[0].primary()).abs() <= 1e-7 * (1.0 + s)).count();
            return Err(Error::Resonant { mu: w[0].primary(), count });
        }
    }
    let m = hamiltonian_matrix(h);
    let d = h.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let mut out = Vec::new();
    for b in elliptic {
        if b.m != 1 || b.gamma() != Some(1) {
            continue;
        }
        let mu = b.primary();
        let v = smallest_right_vectors(&(&m * &m + &id * (mu * mu)), 2);
        let r = v.transpose() * h.matrix() * &v;
        let (vals, vecs) = linalg::sym_eigen_sorted(&r);
        if vals[0] <= 0.0 {
            continue;
        }
        let mut u = &v * vecs.column(1);
        let first = u.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(1.0);
        if first < 0.0 {
            u = -u;
        }
        let x0 = &u * (2.0 * c / u.dot(&(h.matrix() * &u))).sqrt();
        let plane = linalg::orthonormal_columns(&DMatrix::from_columns(&[x0.clone(), &m * &x0]), 1e-12);
        for k in iterates(k_max) {
            let eta = 2.0 * PI * k as f64 / mu;
            let mut orbit = ClosedCharacteristic {
                plane: linalg::to_rows(&plane),
                mu,
                k,
                eta,
                x0: x0.iter().copied().collect(),
                action: 0.0,
                cz_transverse: None,
                length: 0.0,
            };
            orbit.action = orbit_action(&orbit, h, 512);
            orbit.cz_transverse = if d >= 4 { transverse_cz(&orbit, h).ok() } else { None };
            orbit.length = loop_length(&orbit, h, 512);
            out.push(orbit);
        }
    }
    Ok(out)
}

fn smallest_right_vectors(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    DMatrix::from_columns(&idx[..k].iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>())
}

/// Loop samples `v_j = v(j/N)` with velocities `∂_t v_j = η J0 A v_j`.
fn samples(orbit: &ClosedCharacteristic, h: &Hamiltonian, n: usize) -> Vec<(DVector<f64>, DVector<f64>)> {
    let step = flow(h, orbit.eta / n as f64);
    let mut v = orbit.start();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let dv = h.vector_field(&v) * orbit.eta;
        let next = &step * &v;
        out.push((v, dv));
        v = next;
    }
    out
}

/// `∫ λ0(∂_t v) - η ∫ H(v)` with `λ0 = ι_{x/2} ω0`, trapezoid rule on `n_quad` nodes.
pub fn orbit_action(orbit: &ClosedCharacteristic, h: &Hamiltonian, n_quad: usize) -> f64 {
    let n = n_quad.max(1);
    let sum: f64 =
        samples(orbit, h, n).iter().map(|(v, dv)| 0.5 * symplectic_form(v, dv) - orbit.eta * h.value(v)).sum();
    sum / n as f64
}

fn loop_length(orbit: &ClosedCharacteristic, h: &Hamiltonian, n_quad: usize) -> f64 {
    let n = n_quad.max(1);
    samples(orbit, h, n).iter().map(|(_, dv)| dv.norm()).sum::<f64>() / n as f64
}

/// Length `∫|∂_t v|` and the ratio `length / |action|`.
pub fn length_action_check(orbit: &ClosedCharacteristic, h: &Hamiltonian) -> Result<(f64, f64)> {
    let action = orbit_action(orbit, h, 512);
    if action.abs() < 1e-14 {
        return Err(Error::Invalid("orbit action is zero".into()));
    }
    let length = loop_length(orbit, h, 512);
    Ok((length, length / action.abs()))
}

/// Symplectic basis `B` of the `ω0`-complement of `span(plane)`, with `B^T J0 B = J0`.
pub fn symplectic_complement(plane: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = plane.nrows();
    let j = standard_j0::<f64>(d / 2);
    let constraints = (&j * plane).transpose();
    let mut rest: Vec<DVector<f64>> = columns(&linalg::null_space(&constraints, 1e-10));
    let mut es = Vec::new();
    let mut fs = Vec::new();
    while !rest.is_empty() {
        let e = rest.remove(0);
        let pick = (0..rest.len())
            .max_by(|&a, &b| symplectic_form(&e, &rest[a]).abs().total_cmp(&symplectic_form(&e, &rest[b]).abs()))
            .ok_or_else(|| Error::Numerical("complement has odd dimension".into()))?;
        let f = rest.remove(pick);
        let w = symplectic_form(&f, &e);
        if w.abs() < 1e-10 {
            return Err(Error::Numerical("complement is not symplectic".into()));
        }
        // <J0 e, f> = omega0(e, f) must equal the J0 entry of the (q, p) slot, i.e. e^T J0 f = 1.
        let scale = w.abs().sqrt();
        let (e, mut f) = (e / scale, f / scale);
        if e.dot(&apply_j0(&f)) < 0.0 {
            f = -f;
        }
        let mut next = Vec::new();
        for v in rest {
            let a = f.dot(&apply_j0(&v));
            let b = e.dot(&apply_j0(&v));
            next.push(v + &e * a - &f * b);
        }
        rest = columns(&linalg::orthonormal_columns(&from_columns(d, &next), 1e-9));
        es.push(e);
        fs.push(f);
    }
    es.extend(fs);
    Ok(from_columns(d, &es))
}

fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

fn from_columns(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// Robbin–Salamon index of `exp(η t J0 A)` restricted to the symplectic
/// complement of the orbit's plane.
pub fn transverse_cz(orbit: &ClosedCharacteristic, h: &Hamiltonian) -> Result<HalfInt> {
    if h.dim() < 4 {
        return Err(Error::Invalid("no transverse directions in dimension 2".into()));
    }
    let b = symplectic_complement(&orbit.plane_matrix())?;
    let m = hamiltonian_matrix(h);
    let mb = &m * &b;
    // Invariance of the complement: M B must lie in span(B).
    let proj = &b
        * (b.transpose() * &b).try_inverse().ok_or_else(|| Error::Numerical("singular basis".into()))?
        * b.transpose();
    let leak = linalg::max_abs(&(&mb - &proj * &mb));
    if leak > 1e-8 * (1.0 + linalg::spectral_norm(&m)) * (1.0 + linalg::spectral_norm(&b)) {
        return Err(Error::Unresolved(format!("orbit complement is not invariant (leak {leak:.3e})")));
    }
    let restricted = linalg::symmetric_part(&(b.transpose() * h.matrix() * &b));
    rs_index(&SymplecticPath::autonomous(restricted * orbit.eta)?)
}

/// `μ = μ_σ + μ_CZ + 1/2`.
pub fn grading(mu_sigma: HalfInt, mu_cz: HalfInt) -> HalfInt {
    mu_sigma + mu_cz + HalfInt::HALF
}

/// Signature index of a Morse critical point of index `i` on a `d`-manifold: `d/2 - i`.
pub fn mu_sigma_morse(d: usize, i: usize) -> HalfInt {
    HalfInt::from_halves(d as i64) - HalfInt::from_int(i as i64)
}

/// `μ_CZ(Λ+) - μ_CZ(Λ-) + (dim Λ- + dim Λ+)/2`.
pub fn moduli_dimension(cz_minus: HalfInt, cz_plus: HalfInt, dim_minus: usize, dim_plus: usize) -> HalfInt {
    cz_plus - cz_minus + HalfInt::from_halves((dim_minus + dim_plus) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h_ex() -> Hamiltonian {
        Hamiltonian::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0])), 0.5).unwrap()
    }

    #[test]
    fn oscillator_flow_is_rotation() {
        let osc = Hamiltonian::new(DMatrix::identity(2, 2), 0.0).unwrap();
        let t = 0.7;
        let f = flow(&osc, t);
        let expected = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert_relative_eq!(f, expected, epsilon = 1e-14);
        assert_relative_eq!(flow(&osc, 0.0), DMatrix::identity(2, 2));
        let f = flow(&h_ex(), 2.0 * PI);
        for (i, j) in [(0, 0), (2, 2), (0, 2), (2, 0)] {
            assert!((f[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9);
        }
    }

    #[test]
    fn example_orbits() {
        let h = h_ex();
        let orbits = enumerate_closed_characteristics(&h, 2).unwrap();
        assert_eq!(orbits.iter().map(|o| o.k).collect::<Vec<_>>(), vec![1, -1, 2, -2]);
        for o in &orbits {
            let x = o.start();
            assert!(h.value(&x).abs() < 1e-12);
            assert!((x[0] * x[0] + x[2] * x[2] - 1.0).abs() < 1e-12);
            assert!((o.eta - 2.0 * PI * o.k as f64).abs() < 1e-12);
            assert!((o.point(&h, 1.0) - &x).norm() < 1e-8);
            assert_relative_eq!(o.action, PI * o.k as f64, epsilon = 1e-9);
            assert_eq!(o.cz_transverse, Some(HalfInt::ZERO));
            let (len, ratio) = length_action_check(o, &h).unwrap();
            assert_relative_eq!(len, 2.0 * PI * o.k.abs() as f64, epsilon = 1e-9);
            assert_relative_eq!(ratio, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn ellipsoid_and_hyperbolic_only() {
        let ell = Hamiltonian::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let o = enumerate_closed_characteristics(&ell, 1).unwrap();
        assert_eq!(o.len(), 2);
        assert_relative_eq!(o[0].start().norm(), 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(o[0].cz_transverse, None);
        let (_, r1) = length_action_check(&o[0], &ell).unwrap();
        assert_relative_eq!(r1, 2f64.sqrt(), epsilon = 1e-9);
        let hyp = Hamiltonian::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 0.5).unwrap();
        assert!(enumerate_closed_characteristics(&hyp, 3).unwrap().is_empty());
        assert!(matches!(enumerate_closed_characteristics(&ell.with_constant(-1.0), 1), Err(Error::Unsupported(_))));
        let res = Hamiltonian::new(DMatrix::identity(4, 4), 1.0).unwrap();
        assert!(matches!(enumerate_closed_characteristics(&res, 1), Err(Error::Resonant { count: 2, .. })));
    }

    #[test]
    fn constant_loop_action_is_zero() {
        let h = h_ex();
        let mut o = enumerate_closed_characteristics(&h, 1).unwrap().remove(0);
        o.eta = 0.0;
        assert!(orbit_action(&o, &h, 64).abs() < 1e-15);
    }

    #[test]
    fn two_elliptic_transverse_index() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 1.0, 2.0]));
        let h = Hamiltonian::new(a, 1.0).unwrap();
        let orbits = enumerate_closed_characteristics(&h, 1).unwrap();
        // Frequencies 1 and 2: the slow orbit turns the transverse plane twice, the fast one half a turn.
        let slow = orbits.iter().find(|o| o.k == 1 && (o.mu - 1.0).abs() < 1e-9).unwrap();
        let fast = orbits.iter().find(|o| o.k == 1 && (o.mu - 2.0).abs() < 1e-9).unwrap();
        assert_eq!(slow.cz_transverse, Some(HalfInt::from_int(4)));
        assert_eq!(fast.cz_transverse, Some(HalfInt::from_int(1)));
    }

    #[test]
    fn complement_basis_is_symplectic() {
        let plane = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = symplectic_complement(&plane).unwrap();
        assert_relative_eq!(b.transpose() * standard_j0::<f64>(2) * &b, standard_j0::<f64>(1), epsilon = 1e-12);
    }

    #[test]
    fn grading_formulas() {
        assert_eq!(grading(HalfInt::ZERO, HalfInt::ZERO), HalfInt::HALF);
        assert_eq!(grading(HalfInt::from_halves(-1), HalfInt::from_int(2)), HalfInt::from_int(2));
        assert_eq!(mu_sigma_morse(3, 1), HalfInt::HALF);
        assert_eq!(mu_sigma_morse(4, 0), HalfInt::from_int(2));
        assert_eq!(moduli_dimension(HalfInt::ZERO, HalfInt::from_int(2), 1, 1), HalfInt::from_int(3));
    }
}
