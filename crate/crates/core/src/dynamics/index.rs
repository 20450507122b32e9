//! Robbin–Salamon index of piecewise-autonomous symplectic paths.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symplectic::standard_j0;

/// A half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub fn from_int(n: i64) -> Self {
        HalfInt(2 * n)
    }

    pub fn from_halves(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub fn halves(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn scale(self, k: i64) -> Self {
        HalfInt(self.0 * k)
    }

    /// Exact conversion from an `f64` that is a multiple of 1/2.
    pub fn from_f64(x: f64) -> Option<Self> {
        let t = 2.0 * x;
        (t.is_finite() && t.fract() == 0.0 && t.abs() < 9.0e15).then_some(HalfInt(t as i64))
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 + o.0)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt(self.0 - o.0)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl std::iter::Sum for HalfInt {
    fn sum<I: Iterator<Item = HalfInt>>(iter: I) -> HalfInt {
        iter.fold(HalfInt::ZERO, Add::add)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        HalfInt::from_f64(x).ok_or_else(|| serde::de::Error::custom(format!("{x} is not a half-integer")))
    }
}

/// A path `Ψ: [0, 1] -> Sp(2d)` with `Ψ(0) = I`, made of autonomous segments.
///
/// On segment `i` with symmetric generator `S_i` and local time `τ ∈ [0, 1]`,
/// `Ψ(τ) = exp(τ J0 S_i) Ψ_i`, where `Ψ_i` is the end of the previous segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticPath {
    generators: Vec<DMatrix<f64>>,
}

impl SymplecticPath {
    pub fn autonomous(generator: DMatrix<f64>) -> Result<Self> {
        Self::piecewise(vec![generator])
    }

    pub fn piecewise(generators: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = generators.first().ok_or_else(|| Error::Invalid("empty path".into()))?.nrows();
        if d < 2 || d % 2 != 0 {
            return Err(Error::OddDimension(d));
        }
        for g in &generators {
            if g.nrows() != d || g.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: g.nrows() });
            }
            if linalg::max_abs(&(g - g.transpose())) > 1e-12 * linalg::max_abs(g).max(1.0) {
                return Err(Error::NotSymmetric { entries: Vec::new() });
            }
        }
        Ok(Self { generators: generators.iter().map(linalg::symmetric_part).collect() })
    }

    /// Catenation: `other` starts where `self` ends.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut g = self.generators.clone();
        g.extend(other.generators.iter().cloned());
        Self::piecewise(g)
    }

    pub fn dim(&self) -> usize {
        self.generators[0].nrows()
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    fn hamiltonian_matrices(&self) -> Vec<DMatrix<f64>> {
        let j = standard_j0::<f64>(self.dim() / 2);
        self.generators.iter().map(|g| &j * g).collect()
    }

    /// `Ψ(t)` for global time `t ∈ [0, 1]`, segments occupying equal subintervals.
    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let k = self.generators.len();
        let ms = self.hamiltonian_matrices();
        let pos = (t.clamp(0.0, 1.0) * k as f64).min(k as f64);
        let full = (pos.floor() as usize).min(k - 1);
        let mut psi = DMatrix::identity(self.dim(), self.dim());
        for m in &ms[..full] {
            psi = m.exp() * psi;
        }
        (&ms[full] * (pos - full as f64)).exp() * psi
    }

    /// `n + 1` uniform samples `Ψ(j/n)`.
    pub fn samples(&self, n: usize) -> Vec<DMatrix<f64>> {
        (0..=n).map(|j| self.at(j as f64 / n as f64)).collect()
    }
}

/// One crossing `det(Ψ(t) - I) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Crossing {
    pub segment: usize,
    pub tau: f64,
    pub kernel_dim: usize,
    pub signature: i64,
    pub weight: HalfInt,
}

const NODES: usize = 2048;

fn gap(m: &DMatrix<f64>, start: &DMatrix<f64>, tau: f64) -> f64 {
    let d = m.nrows();
    linalg::sigma_min(&((m * tau).exp() * start - DMatrix::<f64>::identity(d, d)))
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if hi - lo < 1e-15 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let candidates = [(lo, f(lo)), (x1, f1), (x2, f2), (hi, f(hi))];
    candidates.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty")
}

/// Crossings of one segment; endpoint crossings carry half weight.
fn segment_crossings(seg: usize, s: &DMatrix<f64>, m: &DMatrix<f64>, start: &DMatrix<f64>) -> Result<Vec<Crossing>> {
    let d = m.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    let f = |t: f64| gap(m, start, t);
    let mut vals = Vec::with_capacity(NODES + 1);
    for j in 0..=NODES {
        let psi = (m * (j as f64 / NODES as f64)).exp() * start;
        let sv = linalg::singular_values(&(&psi - &id));
        vals.push(*sv.last().expect("nonempty"));
    }
    // Rounding error of Psi(t) - I grows with |Psi(t)| along hyperbolic directions.
    let thresholds = |t: f64| {
        let noise = d as f64 * f64::EPSILON * (1.0 + linalg::spectral_norm(&((m * t).exp() * start)));
        ((1e2 * noise).max(1e-9), (1e3 * noise).max(1e-6), (3e2 * noise).max(1e-7))
    };
    let mut taus: Vec<f64> = Vec::new();
    for j in 0..=NODES {
        let left = if j == 0 { f64::INFINITY } else { vals[j - 1] };
        let right = if j == NODES { f64::INFINITY } else { vals[j + 1] };
        if vals[j] > left || vals[j] > right {
            continue;
        }
        let lo = j.saturating_sub(1) as f64 / NODES as f64;
        let hi = (j + 1).min(NODES) as f64 / NODES as f64;
        let (t, v) = if j == 0 {
            (0.0, vals[0])
        } else if j == NODES {
            (1.0, vals[NODES])
        } else {
            golden_min(f, lo, hi)
        };
        let (hit, miss, _) = thresholds(t);
        let (t, v) = if v > hit && (j == 1 || j + 1 == NODES) {
            // The refined minimum of a neighbour of an endpoint may sit on the endpoint itself.
            let e = if j == 1 { 0.0 } else { 1.0 };
            if f(e) <= v {
                (e, f(e))
            } else {
                (t, v)
            }
        } else {
            (t, v)
        };
        if v <= hit {
            if taus.iter().all(|&u| (u - t).abs() > 1e-9) {
                taus.push(t);
            }
        } else if v < miss {
            return Err(Error::Unresolved(format!(
                "near-crossing at segment {seg}, tau = {t:.12}: sigma_min = {v:.3e} is neither zero nor separated"
            )));
        }
    }
    taus.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for tau in taus {
        let psi = (m * tau).exp() * start;
        let svd = (&psi - &id).svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let (_, _, ker) = thresholds(tau);
        let kernel: Vec<_> = (0..d).filter(|&i| svd.singular_values[i] <= ker).map(|i| vt.row(i).transpose()).collect();
        if kernel.is_empty() {
            return Err(Error::Unresolved(format!("crossing at tau = {tau:.12} has no resolvable kernel")));
        }
        let k = DMatrix::from_columns(&kernel);
        let form = k.transpose() * s * &k;
        let tol = 1e-9 * linalg::spectral_norm(s).max(1e-300);
        let (pos, neg, zero) = linalg::inertia(&form, tol);
        if zero > 0 {
            return Err(Error::Unresolved(format!("degenerate crossing form at segment {seg}, tau = {tau:.12}")));
        }
        let sig = pos as i64 - neg as i64;
        let endpoint = tau == 0.0 || tau == 1.0;
        let weight = if endpoint { HalfInt::from_halves(sig) } else { HalfInt::from_int(sig) };
        out.push(Crossing { segment: seg, tau, kernel_dim: kernel.len(), signature: sig, weight });
    }
    Ok(out)
}

/// All crossings of the path, segment by segment.
pub fn crossings(path: &SymplecticPath) -> Result<Vec<Crossing>> {
    let ms = path.hamiltonian_matrices();
    let d = path.dim();
    let mut start = DMatrix::<f64>::identity(d, d);
    let mut out = Vec::new();
    for (i, (s, m)) in path.generators.iter().zip(&ms).enumerate() {
        out.extend(segment_crossings(i, s, m, &start)?);
        start = m.exp() * start;
    }
    Ok(out)
}

/// Robbin–Salamon index: sum of crossing-form signatures, half weight at endpoints.
pub fn rs_index(path: &SymplecticPath) -> Result<HalfInt> {
    Ok(crossings(path)?.iter().map(|c| c.weight).sum())
}
