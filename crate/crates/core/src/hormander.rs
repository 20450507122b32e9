//! Hörmander normal forms of non-degenerate quadratic Hamiltonians.
//!
//! The spectrum of `M = J0 A` splits into families `{±λ}` (kind A),
//! `{±λ1 ± iλ2}` (kind B) and `{±iμ}` (kind C). Jordan box sizes come from
//! the nullities of powers of the family's real minimal factor.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symplectic::{hamiltonian_matrix, standard_j0, symplectic_residual, SymplecticMatrix};
use crate::Hamiltonian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    A,
    B,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockParams {
    /// Real pair `±λ`.
    Hyperbolic { lambda: f64 },
    /// Quadruple `±λ1 ± iλ2`.
    Loxodromic { lambda1: f64, lambda2: f64 },
    /// Imaginary pair `±iμ`; `gamma` is `None` when it cannot be determined.
    Elliptic { mu: f64, gamma: Option<i8> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockRepr", into = "BlockRepr")]
pub struct HormanderBlock {
    pub m: usize,
    pub params: BlockParams,
}

impl HormanderBlock {
    pub fn hyperbolic(m: usize, lambda: f64) -> Self {
        Self { m, params: BlockParams::Hyperbolic { lambda } }
    }

    pub fn loxodromic(m: usize, lambda1: f64, lambda2: f64) -> Self {
        Self { m, params: BlockParams::Loxodromic { lambda1, lambda2 } }
    }

    pub fn elliptic(m: usize, mu: f64, gamma: Option<i8>) -> Self {
        Self { m, params: BlockParams::Elliptic { mu, gamma } }
    }

    pub fn kind(&self) -> BlockKind {
        match self.params {
            BlockParams::Hyperbolic { .. } => BlockKind::A,
            BlockParams::Loxodromic { .. } => BlockKind::B,
            BlockParams::Elliptic { .. } => BlockKind::C,
        }
    }

    /// Real dimension: `2m` for kinds A and C, `4m` for kind B.
    pub fn dim(&self) -> usize {
        2 * self.dof()
    }

    pub fn dof(&self) -> usize {
        match self.kind() {
            BlockKind::B => 2 * self.m,
            _ => self.m,
        }
    }

    pub fn primary(&self) -> f64 {
        match self.params {
            BlockParams::Hyperbolic { lambda } => lambda,
            BlockParams::Loxodromic { lambda1, .. } => lambda1,
            BlockParams::Elliptic { mu, .. } => mu,
        }
    }

    pub fn gamma(&self) -> Option<i8> {
        match self.params {
            BlockParams::Elliptic { gamma, .. } => gamma,
            _ => None,
        }
    }

    /// Signature of the normal form from the classification table.
    pub fn expected_signature(&self) -> Option<(usize, usize)> {
        let m = self.m;
        match self.params {
            BlockParams::Hyperbolic { .. } => Some((m, m)),
            BlockParams::Loxodromic { .. } => Some((2 * m, 2 * m)),
            BlockParams::Elliptic { gamma, .. } => {
                if m.is_multiple_of(2) {
                    Some((m, m))
                } else {
                    let g = gamma? as isize;
                    Some(((m as isize + g) as usize, (m as isize - g) as usize))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.m >= 1
            && match self.params {
                BlockParams::Hyperbolic { lambda } => lambda > 0.0 && lambda.is_finite(),
                BlockParams::Loxodromic { lambda1, lambda2 } => {
                    lambda1 > 0.0 && lambda2 > 0.0 && lambda1.is_finite() && lambda2.is_finite()
                }
                BlockParams::Elliptic { mu, gamma } => {
                    mu > 0.0 && mu.is_finite() && gamma.is_none_or(|g| g == 1 || g == -1)
                }
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid block {self:?}")))
        }
    }

    fn sort_key(&self) -> (BlockKind, f64, usize, f64) {
        let secondary = match self.params {
            BlockParams::Hyperbolic { .. } => 0.0,
            BlockParams::Loxodromic { lambda2, .. } => lambda2,
            BlockParams::Elliptic { gamma, .. } => gamma.map_or(2.0, f64::from),
        };
        (self.kind(), self.primary(), self.m, secondary)
    }

    /// Canonical order: kind, then primary parameter, then `m`, then `λ2` or `γ`.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        let (k1, p1, m1, s1) = self.sort_key();
        let (k2, p2, m2, s2) = other.sort_key();
        k1.cmp(&k2).then(p1.total_cmp(&p2)).then(m1.cmp(&m2)).then(s1.total_cmp(&s2))
    }
}

#[derive(Serialize, Deserialize)]
struct BlockRepr {
    kind: BlockKind,
    m: usize,
    params: ParamsRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamsRepr {
    Loxodromic { lambda1: f64, lambda2: f64 },
    Hyperbolic { lambda: f64 },
    Elliptic { mu: f64, gamma: Option<i8> },
}

impl From<HormanderBlock> for BlockRepr {
    fn from(b: HormanderBlock) -> Self {
        let params = match b.params {
            BlockParams::Hyperbolic { lambda } => ParamsRepr::Hyperbolic { lambda },
            BlockParams::Loxodromic { lambda1, lambda2 } => ParamsRepr::Loxodromic { lambda1, lambda2 },
            BlockParams::Elliptic { mu, gamma } => ParamsRepr::Elliptic { mu, gamma },
        };
        BlockRepr { kind: b.kind(), m: b.m, params }
    }
}

impl TryFrom<BlockRepr> for HormanderBlock {
    type Error = Error;

    fn try_from(r: BlockRepr) -> Result<Self> {
        let params = match (r.kind, r.params) {
            (BlockKind::A, ParamsRepr::Hyperbolic { lambda }) => BlockParams::Hyperbolic { lambda },
            (BlockKind::B, ParamsRepr::Loxodromic { lambda1, lambda2 }) => BlockParams::Loxodromic { lambda1, lambda2 },
            (BlockKind::C, ParamsRepr::Elliptic { mu, gamma }) => BlockParams::Elliptic { mu, gamma },
            (kind, _) => return Err(Error::Invalid(format!("parameters do not match block kind {kind:?}"))),
        };
        let b = HormanderBlock { m: r.m, params };
        b.validate()?;
        Ok(b)
    }
}

/// Symmetric `G` with `x^T G x` equal to the sum of `coef * x_i * x_j`.
fn gram(dim: usize, terms: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(dim, dim);
    for &(i, j, c) in terms {
        g[(i, j)] += 0.5 * c;
        g[(j, i)] += 0.5 * c;
    }
    g
}

/// Gram matrix of the representative form `Q` in `(q_1..q_d, p_1..p_d)`.
fn normal_form_matrix(block: &HormanderBlock) -> Result<DMatrix<f64>> {
    block.validate()?;
    let m = block.m;
    let d = block.dof();
    let q = |j: usize| j - 1;
    let p = |j: usize| d + j - 1;
    let mut t = Vec::new();
    match block.params {
        BlockParams::Hyperbolic { lambda } => {
            for j in 1..=m {
                t.push((q(j), p(j), 2.0 * lambda));
            }
            for j in 1..m {
                t.push((q(j + 1), p(j), 2.0));
            }
        }
        BlockParams::Loxodromic { lambda1, lambda2 } => {
            for j in 1..=(2 * m).saturating_sub(2) {
                t.push((q(j), p(j + 2), 2.0));
            }
            for j in 1..=2 * m {
                t.push((q(j), p(j), 2.0 * lambda1));
            }
            for j in 1..=m {
                t.push((q(2 * j), p(2 * j - 1), 2.0 * lambda2));
                t.push((q(2 * j - 1), p(2 * j), -2.0 * lambda2));
            }
        }
        BlockParams::Elliptic { mu, gamma } => {
            let g = f64::from(gamma.ok_or_else(|| Error::Unresolved("normal form needs gamma".into()))?);
            for j in 1..=m {
                t.push((q(j), q(m + 1 - j), g * mu));
                t.push((p(j), p(m + 1 - j), g * mu));
            }
            for j in 2..=m {
                t.push((q(j), q(m + 2 - j), -g));
            }
            for j in 1..m {
                t.push((p(j), p(m - j), -g));
            }
        }
    }
    Ok(gram(2 * d, &t))
}

/// Representative Hamiltonian of a block, with `A` the Gram matrix of `Q`
/// (so `H = Q/2` and `J0 A` has the block's eigenvalues).
pub fn normal_form(block: &HormanderBlock) -> Result<Hamiltonian> {
    Hamiltonian::new(normal_form_matrix(block)?, 0.0)
}

/// Direct sum of normal forms, each block on its own `(q, p)` slots.
pub fn block_diagonal_normal_form(blocks: &[HormanderBlock]) -> Result<DMatrix<f64>> {
    let n: usize = blocks.iter().map(HormanderBlock::dof).sum();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    let mut off = 0;
    for b in blocks {
        let g = normal_form_matrix(b)?;
        let d = b.dof();
        let idx: Vec<usize> = (off..off + d).chain(n + off..n + off + d).collect();
        for (a, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                out[(i, j)] = g[(a, c)];
            }
        }
        off += d;
    }
    Ok(out)
}

/// Signature `(k, l)` of `A`.
pub fn signature(h: &Hamiltonian) -> Result<(usize, usize)> {
    h.check_nondegenerate()?;
    let s = linalg::spectral_norm(h.matrix());
    let (pos, neg, _) = linalg::inertia(h.matrix(), 1e-9 * s);
    Ok((pos, neg))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub blocks: Vec<HormanderBlock>,
    /// Maps block coordinates to input coordinates: `x = S y`.
    pub transform: Option<SymplecticMatrix<f64>>,
    pub semisimple: bool,
    pub residual: Option<f64>,
    pub signature: (usize, usize),
    pub warnings: Vec<String>,
}

impl Decomposition {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(HormanderBlock::dim).sum()
    }

    /// Column indices of block `i` in the transform: its `q` slots then its `p` slots.
    pub fn block_columns(&self, i: usize) -> Vec<usize> {
        let n = self.dim() / 2;
        let off: usize = self.blocks[..i].iter().map(HormanderBlock::dof).sum();
        let d = self.blocks[i].dof();
        (off..off + d).chain(n + off..n + off + d).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct DecompositionRepr {
    blocks: Vec<HormanderBlock>,
    semisimple: bool,
    signature: [usize; 2],
    residual: Option<f64>,
    transform: Option<Vec<Vec<f64>>>,
    warnings: Vec<String>,
}

impl Serialize for Decomposition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DecompositionRepr {
            blocks: self.blocks.clone(),
            semisimple: self.semisimple,
            signature: [self.signature.0, self.signature.1],
            residual: self.residual,
            transform: self.transform.as_ref().map(|t| linalg::to_rows(t.matrix())),
            warnings: self.warnings.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Decomposition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = DecompositionRepr::deserialize(d)?;
        let transform = match r.transform {
            Some(rows) => {
                let m = linalg::from_rows(&rows).ok_or_else(|| D::Error::custom("ragged transform"))?;
                Some(SymplecticMatrix::new(m).map_err(D::Error::custom)?)
            }
            None => None,
        };
        Ok(Decomposition {
            blocks: r.blocks,
            transform,
            semisimple: r.semisimple,
            residual: r.residual,
            signature: (r.signature[0], r.signature[1]),
            warnings: r.warnings,
        })
    }
}

/// Radius for a cluster of `k` eigenvalues. A Jordan box of size `k`
/// perturbed at rounding level spreads its eigenvalue by about `eps^{1/k}`.
fn cluster_tol(k: usize, s: f64) -> f64 {
    let jordan = 3.0 * (1.0 + s) * 1e-14_f64.powf(1.0 / k as f64);
    (1e-7 * (1.0 + s)).max(if k > 1 { jordan } else { 0.0 })
}

#[derive(Clone, Debug)]
struct Cluster {
    center: Complex<f64>,
    size: usize,
}

/// Greedy grouping: each seed takes the largest set of nearest neighbours
/// that fits within the radius allowed for that set size.
fn cluster_eigenvalues(eig: &[Complex<f64>], s: f64) -> Vec<Cluster> {
    let mut free: Vec<Complex<f64>> = eig.to_vec();
    free.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out = Vec::new();
    while let Some(&z) = free.first() {
        let mut idx: Vec<usize> = (0..free.len()).collect();
        idx.sort_by(|&a, &b| (free[a] - z).norm().total_cmp(&(free[b] - z).norm()));
        let mut chosen = 1;
        for k in (2..=free.len()).rev() {
            let c = idx[..k].iter().map(|&i| free[i]).sum::<Complex<f64>>() / k as f64;
            if idx[..k].iter().all(|&i| (free[i] - c).norm() <= cluster_tol(k, s)) {
                chosen = k;
                break;
            }
        }
        let mut members: Vec<usize> = idx[..chosen].to_vec();
        let center = members.iter().map(|&i| free[i]).sum::<Complex<f64>>() / chosen as f64;
        members.sort_unstable_by(|a, b| b.cmp(a));
        for i in members {
            free.remove(i);
        }
        out.push(Cluster { center, size: chosen });
    }
    out
}

#[derive(Clone, Copy, Debug)]
enum Family {
    A { lambda: f64, mult: usize },
    B { lambda1: f64, lambda2: f64, mult: usize },
    C { mu: f64, mult: usize },
}

fn assemble_families(clusters: &[Cluster], s: f64) -> Result<Vec<Family>> {
    let thr = 1e-8 * s;
    let mut used = vec![false; clusters.len()];
    let mut out = Vec::new();
    let take = |target: Complex<f64>, size: usize, used: &mut Vec<bool>| -> Result<Complex<f64>> {
        let found = clusters
            .iter()
            .enumerate()
            .filter(|(i, c)| !used[*i] && c.size == size)
            .map(|(i, c)| (i, (c.center - target).norm()))
            .filter(|&(_, d)| d <= cluster_tol(size.max(2), s))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match found {
            Some((i, _)) => {
                used[i] = true;
                Ok(clusters[i].center)
            }
            None => Err(Error::SpectralSymmetry(format!("no partner for eigenvalue {target} (multiplicity {size})"))),
        }
    };
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (clusters[a].center, clusters[b].center);
        za.re.total_cmp(&zb.re).then(za.im.total_cmp(&zb.im)).reverse()
    });
    for &i in &order {
        if used[i] {
            continue;
        }
        let z = clusters[i].center;
        let k = clusters[i].size;
        let is_real = z.im.abs() <= thr;
        let is_imag = z.re.abs() <= thr;
        let primary = if is_imag { z.im > 0.0 } else { z.re > 0.0 && (is_real || z.im > 0.0) };
        if !primary {
            continue;
        }
        used[i] = true;
        if is_imag {
            let w = take(z.conj(), k, &mut used)?;
            out.push(Family::C { mu: 0.5 * (z.im - w.im), mult: k });
        } else if is_real {
            let w = take(-z, k, &mut used)?;
            out.push(Family::A { lambda: 0.5 * (z.re - w.re), mult: k });
        } else {
            let w1 = take(z.conj(), k, &mut used)?;
            let w2 = take(-z, k, &mut used)?;
            let w3 = take(-z.conj(), k, &mut used)?;
            let all = [z, w1, w2, w3];
            let l1 = all.iter().map(|w| w.re.abs()).sum::<f64>() / 4.0;
            let l2 = all.iter().map(|w| w.im.abs()).sum::<f64>() / 4.0;
            out.push(Family::B { lambda1: l1, lambda2: l2, mult: k });
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::SpectralSymmetry(format!("eigenvalue {} has no symmetric family", clusters[i].center)));
    }
    Ok(out)
}

/// Real factor whose kernel powers give the family's generalized eigenspace,
/// and the number of real dimensions per Jordan chain level.
fn family_factor(family: &Family, m: &DMatrix<f64>) -> (DMatrix<f64>, usize, usize) {
    let d = m.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    match *family {
        Family::A { lambda, mult } => (m - &id * lambda, 1, mult),
        Family::B { lambda1, lambda2, mult } => {
            let s = m - &id * lambda1;
            (&s * &s + &id * (lambda2 * lambda2), 2, mult)
        }
        Family::C { mu, mult } => (m * m + &id * (mu * mu), 2, mult),
    }
}

/// Jordan box sizes (with repetition) from the nullities of `P^j`.
fn jordan_boxes(p: &DMatrix<f64>, per_level: usize, mult: usize) -> Result<Vec<usize>> {
    let target = per_level * mult;
    let mut nullities = vec![0usize];
    let mut pow = p.clone();
    for j in 1..=mult {
        if j > 1 {
            pow = &pow * p;
        }
        let sv = linalg::singular_values(&pow);
        let tol = 1e-9 * sv[0].max(1.0);
        let nul = sv.iter().filter(|&&x| x <= tol).count();
        nullities.push(nul);
        if nul >= target {
            break;
        }
    }
    let last = *nullities.last().expect("nonempty");
    if last != target {
        return Err(Error::Numerical(format!("generalized eigenspace has dimension {last}, expected {target}")));
    }
    let mut at_least = Vec::new();
    for w in nullities.windows(2) {
        let diff = w[1].checked_sub(w[0]).filter(|d| d % per_level == 0);
        match diff {
            Some(d) => at_least.push(d / per_level),
            None => return Err(Error::Numerical("inconsistent nullity sequence".into())),
        }
    }
    let mut boxes = Vec::new();
    for (j, &r) in at_least.iter().enumerate() {
        let next = at_least.get(j + 1).copied().unwrap_or(0);
        if next > r {
            return Err(Error::Numerical("Jordan chain counts increase".into()));
        }
        boxes.extend(std::iter::repeat_n(j + 1, r - next));
    }
    Ok(boxes)
}

/// `gamma` for each box of an elliptic family from the signature of `A`
/// on its generalized eigenspace.
fn elliptic_gammas(a: &DMatrix<f64>, p: &DMatrix<f64>, boxes: &[usize], s: f64) -> Result<Vec<Option<i8>>> {
    let top = *boxes.iter().max().expect("nonempty family");
    let dim: usize = 2 * boxes.iter().sum::<usize>();
    let mut pow = p.clone();
    for _ in 1..top {
        pow = &pow * p;
    }
    let g = smallest_singular_vectors(&pow, dim);
    let r = g.transpose() * a * &g;
    let (pos, neg, zero) = linalg::inertia(&r, 1e-9 * s.max(1.0));
    if zero != 0 {
        return Err(Error::Numerical("form degenerate on elliptic eigenspace".into()));
    }
    let excess = pos as isize - neg as isize;
    let odd: Vec<usize> = boxes.iter().copied().filter(|m| m % 2 == 1).collect();
    let o = odd.len() as isize;
    if excess % 2 != 0 || (excess / 2).abs() > o || (o + excess / 2) % 2 != 0 {
        return Err(Error::Numerical(format!("elliptic signature excess {excess} incompatible with {o} odd boxes")));
    }
    let plus = ((o + excess / 2) / 2) as usize;
    let uniform = odd.windows(2).all(|w| w[0] == w[1]) || plus == 0 || plus == odd.len();
    let mut plus_left = plus;
    Ok(boxes
        .iter()
        .map(|&m| {
            if m % 2 == 0 || !uniform {
                None
            } else if plus_left > 0 {
                plus_left -= 1;
                Some(1)
            } else {
                Some(-1)
            }
        })
        .collect())
}

/// Right singular vectors for the `k` smallest singular values, as columns.
fn smallest_singular_vectors(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut out = DMatrix::zeros(m.ncols(), k);
    for (c, &i) in idx.iter().take(k).enumerate() {
        out.set_column(c, &vt.row(i).transpose());
    }
    out
}

struct Piece {
    block: HormanderBlock,
    q: Vec<DVector<f64>>,
    p: Vec<DVector<f64>>,
}

fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Dual isotropic basis: `E_p = W (E_q^T J0 W)^{-1}` so that `E_q^T J0 E_p = I`.
fn dual_basis(eq: &DMatrix<f64>, w: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let pairing = eq.transpose() * j * w;
    let inv =
        pairing.try_inverse().ok_or_else(|| Error::Numerical("isotropic subspaces are not paired by omega".into()))?;
    Ok(w * inv)
}

fn semisimple_pieces(family: &Family, a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<Piece>> {
    let d = m.nrows();
    let j = standard_j0::<f64>(d / 2);
    let id = DMatrix::<f64>::identity(d, d);
    match *family {
        Family::A { lambda, mult } => {
            let u = smallest_singular_vectors(&(m - &id * lambda), mult);
            let w = smallest_singular_vectors(&(m + &id * lambda), mult);
            let ep = dual_basis(&u, &w, &j)?;
            Ok(columns(&u)
                .into_iter()
                .zip(columns(&ep))
                .map(|(q, p)| Piece { block: HormanderBlock::hyperbolic(1, lambda), q: vec![q], p: vec![p] })
                .collect())
        }
        Family::B { lambda1, lambda2, mult } => {
            let sm = m - &id * lambda1;
            let u = smallest_singular_vectors(&(&sm * &sm + &id * (lambda2 * lambda2)), 2 * mult);
            let sp = m + &id * lambda1;
            let w = smallest_singular_vectors(&(&sp * &sp + &id * (lambda2 * lambda2)), 2 * mult);
            let mut span: Vec<DVector<f64>> = Vec::new();
            let mut eq = Vec::new();
            for _ in 0..mult {
                let mut best: Option<DVector<f64>> = None;
                for c in u.column_iter() {
                    let mut v = c.into_owned();
                    for b in &span {
                        let t = b.dot(&v);
                        v -= b * t;
                    }
                    if best.as_ref().is_none_or(|b| v.norm() > b.norm()) {
                        best = Some(v);
                    }
                }
                let u1 = best.expect("nonempty basis").normalize();
                let u2 = (&u1 * lambda1 - m * &u1) / lambda2;
                for v in [&u1, &u2] {
                    let mut o = v.clone();
                    for b in &span {
                        let t = b.dot(&o);
                        o -= b * t;
                    }
                    span.push(o.normalize());
                }
                eq.push(u1);
                eq.push(u2);
            }
            let eqm = DMatrix::from_columns(&eq);
            let ep = columns(&dual_basis(&eqm, &w, &j)?);
            Ok((0..mult)
                .map(|i| Piece {
                    block: HormanderBlock::loxodromic(1, lambda1, lambda2),
                    q: vec![eq[2 * i].clone(), eq[2 * i + 1].clone()],
                    p: vec![ep[2 * i].clone(), ep[2 * i + 1].clone()],
                })
                .collect())
        }
        Family::C { mu, mult } => {
            let mut basis = smallest_singular_vectors(&(m * m + &id * (mu * mu)), 2 * mult);
            let mut out = Vec::new();
            for _ in 0..mult {
                let r = basis.transpose() * a * &basis;
                let (vals, vecs) = linalg::sym_eigen_sorted(&r);
                let top = (0..vals.len()).max_by(|&x, &y| vals[x].abs().total_cmp(&vals[y].abs())).expect("nonempty");
                let u = &basis * vecs.column(top);
                let form = u.dot(&(a * &u));
                let gamma: i8 = if form > 0.0 { 1 } else { -1 };
                let ep = -(m * &u) * (f64::from(gamma) / mu);
                let w = u.dot(&(&j * &ep));
                if w <= 0.0 {
                    return Err(Error::Numerical("elliptic plane has wrong orientation".into()));
                }
                let scale = 1.0 / w.sqrt();
                let (eq, ep) = (u * scale, ep * scale);
                let constraints =
                    DMatrix::from_rows(&[(&j * &eq).transpose() * &basis, (&j * &ep).transpose() * &basis]);
                let rest = basis.ncols() - 2;
                if rest > 0 {
                    let mut padded = DMatrix::zeros(basis.ncols(), basis.ncols());
                    padded.view_mut((0, 0), (2, basis.ncols())).copy_from(&constraints);
                    basis = &basis * smallest_singular_vectors(&padded, rest);
                }
                out.push(Piece { block: HormanderBlock::elliptic(1, mu, Some(gamma)), q: vec![eq], p: vec![ep] });
            }
            Ok(out)
        }
    }
}

/// Symplectic transform from sorted pieces; columns are all `q` slots then all `p` slots.
fn assemble_transform(pieces: &[Piece], d: usize) -> DMatrix<f64> {
    let n = d / 2;
    let mut s = DMatrix::zeros(d, d);
    let mut off = 0;
    for piece in pieces {
        for (k, (q, p)) in piece.q.iter().zip(&piece.p).enumerate() {
            s.set_column(off + k, q);
            s.set_column(n + off + k, p);
        }
        off += piece.q.len();
    }
    s
}

/// Hörmander decomposition of a non-degenerate quadratic Hamiltonian.
pub fn classify(h: &Hamiltonian) -> Result<Decomposition> {
    let sig = signature(h)?;
    let a = h.matrix();
    let d = h.dim();
    let s = linalg::spectral_norm(a);
    let m = hamiltonian_matrix(h);
    let eig: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    let clusters = cluster_eigenvalues(&eig, s);
    let mut warnings = Vec::new();
    for i in 0..clusters.len() {
        for j in (i + 1)..clusters.len() {
            let dist = (clusters[i].center - clusters[j].center).norm();
            if dist < 1e-5 {
                warnings.push(format!(
                    "eigenvalues {:.6e} and {:.6e} are within {dist:.1e}; classification is near-degenerate",
                    clusters[i].center, clusters[j].center
                ));
            }
        }
    }
    let families = assemble_families(&clusters, s)?;

    let mut blocks = Vec::new();
    let mut semisimple = true;
    for fam in &families {
        let (p, per_level, mult) = family_factor(fam, &m);
        let boxes = jordan_boxes(&p, per_level, mult)?;
        if boxes.iter().any(|&b| b > 1) {
            semisimple = false;
        }
        match *fam {
            Family::A { lambda, .. } => blocks.extend(boxes.iter().map(|&b| HormanderBlock::hyperbolic(b, lambda))),
            Family::B { lambda1, lambda2, .. } => {
                blocks.extend(boxes.iter().map(|&b| HormanderBlock::loxodromic(b, lambda1, lambda2)))
            }
            Family::C { mu, .. } => {
                let gammas = elliptic_gammas(a, &p, &boxes, s)?;
                blocks.extend(boxes.iter().zip(gammas).map(|(&b, g)| HormanderBlock::elliptic(b, mu, g)));
            }
        }
    }
    let total: usize = blocks.iter().map(HormanderBlock::dim).sum();
    if total != d {
        return Err(Error::Numerical(format!("blocks span dimension {total}, expected {d}")));
    }
    blocks.sort_by(HormanderBlock::canonical_cmp);

    let mut transform = None;
    let mut residual = None;
    if semisimple {
        match build_transform(&families, a, &m, &blocks) {
            Ok((t, r)) if r < 1e-7 * s.max(1.0) => {
                transform = Some(t);
                residual = Some(r);
            }
            Ok((_, r)) => warnings.push(format!("normal-form transform rejected: residual {r:.3e}")),
            Err(e) => warnings.push(format!("normal-form transform unavailable: {e}")),
        }
    }
    Ok(Decomposition { blocks, transform, semisimple, residual, signature: sig, warnings })
}

fn build_transform(
    families: &[Family],
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
    blocks: &[HormanderBlock],
) -> Result<(SymplecticMatrix<f64>, f64)> {
    let mut pieces = Vec::new();
    for fam in families {
        pieces.extend(semisimple_pieces(fam, a, m)?);
    }
    pieces.sort_by(|x, y| x.block.canonical_cmp(&y.block));
    if pieces.iter().map(|p| p.block.gamma()).ne(blocks.iter().map(HormanderBlock::gamma)) {
        return Err(Error::Numerical("plane orientations disagree with the elliptic signature".into()));
    }
    let smat = assemble_transform(&pieces, a.nrows());
    let sym_res = symplectic_residual(&smat);
    if sym_res > 1e-9 * linalg::max_abs(&smat).powi(2).max(1.0) {
        return Err(Error::NotSymplectic(sym_res));
    }
    let target = block_diagonal_normal_form(blocks)?;
    let r = linalg::max_abs(&(smat.transpose() * a * &smat - target));
    Ok((SymplecticMatrix::new(smat)?, r))
}
