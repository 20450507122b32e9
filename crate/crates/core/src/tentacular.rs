//! Constructive checks of the strongly-tentacular axioms for quadratic
//! Hamiltonians.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hormander::{classify, BlockKind, BlockParams, Decomposition, HormanderBlock};
use crate::linalg;
use crate::symplectic::{hamiltonian_matrix, is_liouville, x_alpha_field, LinearField};
use crate::Hamiltonian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    H1,
    H2,
    H3,
    H4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Verified,
    CriteriaNotMet,
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    StronglyTentacular,
    CriteriaNotMet,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Certificate {
    /// Linear Liouville field `X` with `dH(X)(x) >= c_lower |x|^2`.
    Witness {
        field: Vec<Vec<f64>>,
        alphas: Vec<f64>,
        block_constants: Vec<f64>,
        c_lower: f64,
        samples: usize,
        min_sampled_ratio: f64,
    },
    /// `sup |D^3 H(x)| |x|`.
    ThirdDerivative { sup_norm: f64 },
    /// `F = |x|^2 / 2` with `min eig(Bbar + eps A) = min_eigenvalue > threshold`.
    Coercive { epsilon: f64, min_eigenvalue: f64, threshold: f64, radius_bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomVerdict {
    pub axiom: Axiom,
    pub status: Status,
    pub certificate: Option<Certificate>,
    pub notes: Vec<String>,
}

impl AxiomVerdict {
    fn new(axiom: Axiom, status: Status, certificate: Option<Certificate>, note: impl Into<String>) -> Self {
        Self { axiom, status, certificate, notes: vec![note.into()] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCriterion {
    pub block: HormanderBlock,
    pub ok: bool,
    pub case: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TentacularReport {
    pub decomposition: Decomposition,
    pub block_criteria: Vec<BlockCriterion>,
    pub bbar: Vec<Vec<f64>>,
    pub bbar_spectrum: Vec<f64>,
    pub verdicts: Vec<AxiomVerdict>,
    pub overall: Overall,
}

impl TentacularReport {
    pub fn verdict(&self, axiom: Axiom) -> &AxiomVerdict {
        self.verdicts.iter().find(|v| v.axiom == axiom).expect("all four axioms present")
    }
}

/// Sufficient block conditions: kind A or B with `m = 1`, or `m = 2` and
/// `λ > 1/√2`, or `m > 2` and `λ > 2` (`λ1` for kind B); kind C with
/// `m = 1` and `γ = 1`.
pub fn check_block_criteria(block: &HormanderBlock) -> (bool, String) {
    let m = block.m;
    match block.params {
        BlockParams::Hyperbolic { lambda: l } | BlockParams::Loxodromic { lambda1: l, .. } => {
            let tag = if block.kind() == BlockKind::A { "a" } else { "b" };
            let name = if block.kind() == BlockKind::A { "lambda" } else { "lambda1" };
            match m {
                1 => (true, format!("type ({tag}), m = 1")),
                2 => {
                    let ok = l > std::f64::consts::FRAC_1_SQRT_2;
                    (ok, format!("type ({tag}), m = 2, requires {name} > 1/sqrt(2); {name} = {l}"))
                }
                _ => (l > 2.0, format!("type ({tag}), m = {m} > 2, requires {name} > 2; {name} = {l}")),
            }
        }
        BlockParams::Elliptic { gamma, .. } => {
            let ok = m == 1 && gamma == Some(1);
            let g = gamma.map_or("unresolved".to_string(), |g| g.to_string());
            (ok, format!("type (c), requires m = 1 and gamma = 1; m = {m}, gamma = {g}"))
        }
    }
}

/// `Bbar = A^2 + ((J0 A)^2 + ((J0 A)^2)^T) / 2`, so that `<x, Bbar x> = {H, {H, F}}(x)` for `F = |x|^2/2`.
pub fn bbar(h: &Hamiltonian) -> DMatrix<f64> {
    let m = hamiltonian_matrix(h);
    let m2 = &m * &m;
    let a = h.matrix();
    let out = a * a + (&m2 + m2.transpose()) * 0.5;
    linalg::symmetric_part(&out)
}

/// The `m x m` matrix `B(λ)`: `2λ^2` in the corner, `1 + 2λ^2` on the rest of
/// the diagonal, `2λ` on the first off-diagonals and `1/2` on the second.
pub fn b_matrix(m: usize, lambda: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |l, k| match l.abs_diff(k) {
        0 if l == 0 => 2.0 * lambda * lambda,
        0 => 1.0 + 2.0 * lambda * lambda,
        1 => 2.0 * lambda,
        2 => 0.5,
        _ => 0.0,
    })
}

pub fn bbar_block_spectrum(block: &HormanderBlock) -> Result<Vec<f64>> {
    match block.params {
        BlockParams::Hyperbolic { lambda: l } | BlockParams::Loxodromic { lambda1: l, .. } => {
            Ok(linalg::sym_eigenvalues(&b_matrix(block.m, l)))
        }
        BlockParams::Elliptic { .. } => {
            Err(Error::Unsupported("kind C blocks contribute Bbar = 0 and have no B matrix".into()))
        }
    }
}

/// `(α, c)` with `dH(X^α)(y) >= c |y|^2` on the block's normal form.
fn block_constant(block: &HormanderBlock) -> Option<(f64, f64)> {
    let m = block.m;
    match block.params {
        BlockParams::Hyperbolic { lambda: l } => Some(match m {
            1 => (1.5, l),
            2 => {
                let a = (l + 1.0) / (2.0 * l - 1.0) + 1.0;
                (a, a * (l - 0.5) - 0.5 * (l + 1.0))
            }
            _ => {
                let a = (l + 1.0) / (2.0 * (l - 1.0)) + 1.0;
                (a, a * (l - 1.0) - 0.5 * (l + 1.0))
            }
        }),
        BlockParams::Loxodromic { lambda1: l1, lambda2: l2 } => Some(match m {
            1 => {
                let a = (l1 + l2) / (2.0 * l1) + 1.0;
                (a, a * l1 - 0.5 * (l1 + l2))
            }
            2 => {
                let a = (l1 + l2 + 1.0) / (2.0 * l1 - 1.0) + 1.0;
                (a, a * (l1 - 0.5) - 0.5 * (l1 + l2 + 1.0))
            }
            _ => {
                let a = (l1 + l2 + 1.0) / (2.0 * (l1 - 1.0)) + 1.0;
                (a, a * (l1 - 1.0) - 0.5 * (l1 + l2 + 1.0))
            }
        }),
        BlockParams::Elliptic { mu, gamma } => (m == 1 && gamma == Some(1)).then_some((0.0, 0.5 * mu)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub field: LinearField<f64>,
    pub c_lower: f64,
    pub alphas: Vec<f64>,
    pub block_constants: Vec<f64>,
}

/// Builds `X = S (⊕ X^{α_i}) S^{-1}` and `c_lower = min c_i / |S|_2^2`.
pub fn witness_h1_h3(h: &Hamiltonian, decomp: &Decomposition) -> Result<Witness> {
    if decomp.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: decomp.dim() });
    }
    for b in &decomp.blocks {
        let (ok, case) = check_block_criteria(b);
        if !ok {
            return Err(Error::Precondition(format!("block criterion not met: {case}")));
        }
    }
    let s = match (&decomp.transform, decomp.semisimple) {
        (Some(s), true) => s,
        _ => {
            return Err(Error::Unresolved(
                "no symplectic normal-form transform; the pulled-back field cannot be certified".into(),
            ))
        }
    };
    let d = h.dim();
    let mut l = DMatrix::zeros(d, d);
    let mut alphas = Vec::new();
    let mut constants = Vec::new();
    for (i, b) in decomp.blocks.iter().enumerate() {
        let (alpha, c) = block_constant(b).expect("criteria checked");
        let local = x_alpha_field::<f64>(b.dof(), alpha);
        let cols = decomp.block_columns(i);
        for (r, &gi) in cols.iter().enumerate() {
            for (k, &gk) in cols.iter().enumerate() {
                l[(gi, gk)] = local.matrix()[(r, k)];
            }
        }
        alphas.push(alpha);
        constants.push(c);
    }
    let field = LinearField::new(l)?.push_forward(s);
    let norm = linalg::spectral_norm(s.matrix());
    let c_lower = constants.iter().copied().fold(f64::INFINITY, f64::min) / (norm * norm);
    Ok(Witness { field, c_lower, alphas, block_constants: constants })
}

const WITNESS_SAMPLES: usize = 1000;
const WITNESS_SEED: u64 = 0x5eed;

/// Smallest sampled value of `dH(X)(x) / |x|^2` over seeded points with `|x| <= 1e3`.
fn sampled_ratio(h: &Hamiltonian, field: &LinearField<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
    let d = h.dim();
    let mut worst = f64::INFINITY;
    for _ in 0..WITNESS_SAMPLES {
        let dir = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..=1.0));
        let radius = 10f64.powf(rng.gen_range(-3.0..=3.0));
        let x = dir.normalize() * radius;
        let val = h.differential(&x, &field.apply(&x));
        worst = worst.min(val / x.norm_squared());
    }
    worst
}

fn witness_verdicts(h: &Hamiltonian, decomp: &Decomposition) -> (AxiomVerdict, AxiomVerdict) {
    match witness_h1_h3(h, decomp) {
        Ok(w) => {
            let ratio = sampled_ratio(h, &w.field);
            let cert = Certificate::Witness {
                field: linalg::to_rows(w.field.matrix()),
                alphas: w.alphas.clone(),
                block_constants: w.block_constants.clone(),
                c_lower: w.c_lower,
                samples: WITNESS_SAMPLES,
                min_sampled_ratio: ratio,
            };
            let h1 = AxiomVerdict::new(
                Axiom::H1,
                Status::Verified,
                Some(cert.clone()),
                "dH(X)(x) >= c_lower |x|^2 with c' = 0",
            );
            let h3 = if h.constant() != 0.0 {
                AxiomVerdict::new(
                    Axiom::H3,
                    Status::Verified,
                    Some(cert),
                    "dH(X) > 0 on the level set, which avoids the origin",
                )
            } else {
                AxiomVerdict::new(Axiom::H3, Status::CriteriaNotMet, None, "c = 0: the level set contains the origin")
            };
            (h1, h3)
        }
        Err(e) => {
            let status = if e.is_unresolved() { Status::Unresolved } else { Status::CriteriaNotMet };
            let note = e.to_string();
            (AxiomVerdict::new(Axiom::H1, status, None, note.clone()), AxiomVerdict::new(Axiom::H3, status, None, note))
        }
    }
}

/// Always verified: the third derivative of a quadratic vanishes.
pub fn check_h2(_h: &Hamiltonian) -> AxiomVerdict {
    AxiomVerdict::new(
        Axiom::H2,
        Status::Verified,
        Some(Certificate::ThirdDerivative { sup_norm: 0.0 }),
        "third derivative identically zero",
    )
}

fn h4_threshold(bb: &DMatrix<f64>) -> f64 {
    1e-10 * (1.0 + linalg::spectral_norm(bb))
}

/// Searches `ε` in `(0, 2|A| + 1]` for `Bbar + ε A` positive definite, with
/// `F = |x|^2/2`.
pub fn check_h4(h: &Hamiltonian) -> AxiomVerdict {
    let bb = bbar(h);
    let a = h.matrix();
    let f = |eps: f64| linalg::min_eigenvalue(&(&bb + a * eps));
    let eps_max = 2.0 * linalg::spectral_norm(a) + 1.0;
    let grid: Vec<f64> = (0..=40).map(|j| eps_max * 0.5f64.powi(j)).collect();
    let vals: Vec<f64> = grid.iter().map(|&e| f(e)).collect();
    let best = (0..grid.len()).max_by(|&i, &j| vals[i].total_cmp(&vals[j])).expect("nonempty grid");
    // min-eig of an affine family is concave in eps: golden section on the bracketing cell.
    let mut lo = grid.get(best + 1).copied().unwrap_or(0.0);
    let mut hi = if best == 0 { grid[0] } else { grid[best - 1] };
    let (mut eps, mut val) = (grid[best], vals[best]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..30 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > val && x > 0.0 {
            eps = x;
            val = v;
        }
    }
    let threshold = h4_threshold(&bb);
    if val > threshold {
        let radius_bound = (2.0 * eps * h.constant().max(0.0) / val).sqrt();
        AxiomVerdict::new(
            Axiom::H4,
            Status::Verified,
            Some(Certificate::Coercive { epsilon: eps, min_eigenvalue: val, threshold, radius_bound }),
            "F = |x|^2/2; {H,{H,F}} > 0 on the level set outside radius_bound",
        )
    } else {
        AxiomVerdict::new(
            Axiom::H4,
            Status::CriteriaNotMet,
            None,
            format!("Bbar + eps A is not positive definite for any sampled eps (best min eigenvalue {val:.6e})"),
        )
    }
}

/// Recomputes a verdict's certificate without rerunning any search.
pub fn replay(verdict: &AxiomVerdict, h: &Hamiltonian) -> Result<()> {
    if verdict.status != Status::Verified {
        return Ok(());
    }
    let fail = |msg: String| Err(Error::Invalid(format!("{:?} certificate fails replay: {msg}", verdict.axiom)));
    match &verdict.certificate {
        Some(Certificate::Witness { field, c_lower, .. }) => {
            let l = linalg::from_rows(field).ok_or_else(|| Error::Invalid("ragged field".into()))?;
            let x = LinearField::new(l)?;
            if x.dim() != h.dim() {
                return fail("dimension".into());
            }
            if !is_liouville(&x) {
                return fail(format!("field not Liouville (residual {:e})", x.liouville_residual()));
            }
            if *c_lower <= 0.0 {
                return fail("c_lower not positive".into());
            }
            let e = linalg::min_eigenvalue(&x.quadratic_derivative(h));
            if e < 0.99 * c_lower {
                return fail(format!("min eig of dH(X) form {e:e} < 0.99 c_lower"));
            }
            let r = sampled_ratio(h, &x);
            if r < 0.99 * c_lower {
                return fail(format!("sampled ratio {r:e} < 0.99 c_lower"));
            }
            if verdict.axiom == Axiom::H3 && h.constant() == 0.0 {
                return fail("level set contains the origin".into());
            }
            Ok(())
        }
        Some(Certificate::ThirdDerivative { sup_norm }) => {
            if *sup_norm == 0.0 {
                Ok(())
            } else {
                fail("nonzero third derivative".into())
            }
        }
        Some(Certificate::Coercive { epsilon, threshold, .. }) => {
            let bb = bbar(h);
            let v = linalg::min_eigenvalue(&(&bb + h.matrix() * *epsilon));
            if *epsilon > 0.0 && v > *threshold && *threshold >= h4_threshold(&bb) * (1.0 - 1e-12) {
                Ok(())
            } else {
                fail(format!("min eig {v:e} at eps {epsilon:e}"))
            }
        }
        None => fail("missing certificate".into()),
    }
}

pub fn full_report(h: &Hamiltonian) -> Result<TentacularReport> {
    let decomposition = classify(h)?;
    let block_criteria = decomposition
        .blocks
        .iter()
        .map(|b| {
            let (ok, case) = check_block_criteria(b);
            BlockCriterion { block: *b, ok, case }
        })
        .collect();
    let (h1, h3) = witness_verdicts(h, &decomposition);
    let verdicts = vec![h1, check_h2(h), h3, check_h4(h)];
    let overall = if verdicts.iter().all(|v| v.status == Status::Verified) {
        Overall::StronglyTentacular
    } else if verdicts.iter().any(|v| v.status == Status::Unresolved) {
        Overall::Unresolved
    } else {
        Overall::CriteriaNotMet
    };
    let bb = bbar(h);
    Ok(TentacularReport {
        decomposition,
        block_criteria,
        bbar_spectrum: linalg::sym_eigenvalues(&bb),
        bbar: linalg::to_rows(&bb),
        verdicts,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hormander::block_diagonal_normal_form;
    use crate::symplectic::{poisson_bracket, random_symplectic};
    use approx::assert_relative_eq;

    fn h_ex() -> Hamiltonian {
        Hamiltonian::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0])), 0.5).unwrap()
    }

    #[test]
    fn criteria_table() {
        assert!(check_block_criteria(&HormanderBlock::hyperbolic(1, 0.01)).0);
        assert!(!check_block_criteria(&HormanderBlock::hyperbolic(2, 0.7)).0);
        assert!(check_block_criteria(&HormanderBlock::hyperbolic(2, 0.72)).0);
        assert!(!check_block_criteria(&HormanderBlock::hyperbolic(3, 2.0)).0);
        assert!(check_block_criteria(&HormanderBlock::loxodromic(3, 2.1, 0.3)).0);
        assert!(!check_block_criteria(&HormanderBlock::elliptic(1, 5.0, Some(-1))).0);
        assert!(!check_block_criteria(&HormanderBlock::elliptic(2, 5.0, None)).0);
        assert!(check_block_criteria(&HormanderBlock::elliptic(1, 5.0, Some(1))).0);
    }

    #[test]
    fn bbar_examples() {
        let b = bbar(&h_ex());
        assert_relative_eq!(b, DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0, 0.0, 2.0])), epsilon = 1e-15);
        let osc = Hamiltonian::new(DMatrix::identity(2, 2) * 3.0, 1.0).unwrap();
        assert!(bbar(&osc).norm() < 1e-14);
    }

    #[test]
    fn bbar_is_double_bracket() {
        for seed in 0..5 {
            let h = crate::random_quadratic::<f64>(2, seed);
            let f = Hamiltonian::radial(2);
            let dd = poisson_bracket(&h, &poisson_bracket(&h, &f).unwrap()).unwrap();
            assert_relative_eq!(dd.matrix() * 0.5, bbar(&h), epsilon = 1e-12);
        }
    }

    #[test]
    fn bbar_of_type_a_splits_into_b_copies() {
        for m in 1..=4 {
            let lambda = 1.3;
            let a = block_diagonal_normal_form(&[HormanderBlock::hyperbolic(m, lambda)]).unwrap();
            let bb = bbar(&Hamiltonian::new(a, 0.0).unwrap());
            let perm: Vec<usize> = (0..m).chain((0..m).map(|i| 2 * m - 1 - i)).collect();
            let permuted = DMatrix::from_fn(2 * m, 2 * m, |i, j| bb[(perm[i], perm[j])]);
            let b = b_matrix(m, lambda);
            let mut expected = DMatrix::zeros(2 * m, 2 * m);
            expected.view_mut((0, 0), (m, m)).copy_from(&b);
            expected.view_mut((m, m), (m, m)).copy_from(&b);
            assert_relative_eq!(permuted, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn b_spectrum_closed_form() {
        for lambda in [0.5, std::f64::consts::FRAC_1_SQRT_2, 1.0, 2.0] {
            let ev = bbar_block_spectrum(&HormanderBlock::hyperbolic(2, lambda)).unwrap();
            let disc = (16.0 * lambda * lambda + 1.0).sqrt();
            assert_relative_eq!(ev[0], 0.5 * (1.0 + 4.0 * lambda * lambda - disc), epsilon = 1e-9);
            assert_relative_eq!(ev[1], 0.5 * (1.0 + 4.0 * lambda * lambda + disc), epsilon = 1e-9);
        }
        assert!(bbar_block_spectrum(&HormanderBlock::elliptic(1, 1.0, Some(1))).is_err());
    }

    #[test]
    fn block_constants_bound_the_normal_forms() {
        let mut blocks = vec![HormanderBlock::elliptic(1, 1.7, Some(1))];
        for l in [0.05, 0.72, 1.0, 3.0] {
            blocks.push(HormanderBlock::hyperbolic(1, l));
            blocks.push(HormanderBlock::loxodromic(1, l, 0.7));
            if l > 0.71 {
                blocks.push(HormanderBlock::hyperbolic(2, l));
                blocks.push(HormanderBlock::loxodromic(2, l, 1.4));
            }
        }
        for m in 3..=5 {
            blocks.push(HormanderBlock::hyperbolic(m, 2.01));
            blocks.push(HormanderBlock::loxodromic(m, 3.0, 0.2));
        }
        for b in blocks {
            let (alpha, c) = block_constant(&b).unwrap();
            assert!(c > 0.0, "{b:?}");
            let a = block_diagonal_normal_form(&[b]).unwrap();
            let h = Hamiltonian::new(a, 0.0).unwrap();
            let x = x_alpha_field::<f64>(b.dof(), alpha);
            let e = linalg::min_eigenvalue(&x.quadratic_derivative(&h));
            assert!(e >= c - 1e-12, "{b:?}: min eig {e} < c {c}");
        }
    }

    #[test]
    fn example_report() {
        let h = h_ex();
        let r = full_report(&h).unwrap();
        assert_eq!(r.overall, Overall::StronglyTentacular);
        for v in &r.verdicts {
            replay(v, &h).unwrap();
        }
        match &r.verdict(Axiom::H4).certificate {
            Some(Certificate::Coercive { epsilon, min_eigenvalue, .. }) => {
                let expect = linalg::min_eigenvalue(&(bbar(&h) + h.matrix() * *epsilon));
                assert_relative_eq!(expect, *min_eigenvalue, epsilon = 1e-12);
                assert!(*min_eigenvalue > 0.9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ellipsoid_and_negative_examples() {
        let ell = Hamiltonian::new(DMatrix::identity(4, 4), 1.0).unwrap();
        assert_eq!(full_report(&ell).unwrap().overall, Overall::StronglyTentacular);
        let neg = Hamiltonian::new(DMatrix::identity(2, 2) * -2.0, 0.5).unwrap();
        assert_eq!(check_h4(&neg).status, Status::CriteriaNotMet);
        let r = full_report(&neg).unwrap();
        assert_eq!(r.overall, Overall::CriteriaNotMet);
        let bad = Hamiltonian::new(
            block_diagonal_normal_form(&[
                HormanderBlock::hyperbolic(3, 0.1),
                HormanderBlock::elliptic(1, 1.0, Some(1)),
            ])
            .unwrap(),
            1.0,
        )
        .unwrap();
        assert_ne!(full_report(&bad).unwrap().overall, Overall::StronglyTentacular);
    }

    #[test]
    fn non_semisimple_is_unresolved() {
        let a = block_diagonal_normal_form(&[HormanderBlock::hyperbolic(2, 1.5)]).unwrap();
        let h = Hamiltonian::new(a, 1.0).unwrap();
        let r = full_report(&h).unwrap();
        assert_eq!(r.verdict(Axiom::H1).status, Status::Unresolved);
        assert_eq!(r.overall, Overall::Unresolved);
    }

    #[test]
    fn conjugated_witness_replays() {
        let h = h_ex();
        for seed in 0..4 {
            let s = random_symplectic::<f64>(2, seed, 0.4);
            let hc = h.conjugate(&s).unwrap();
            let r = full_report(&hc).unwrap();
            let v = r.verdict(Axiom::H1);
            assert_eq!(v.status, Status::Verified);
            replay(v, &hc).unwrap();
            replay(r.verdict(Axiom::H4), &hc).unwrap();
        }
    }

    #[test]
    fn report_json_round_trip() {
        let r = full_report(&h_ex()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: TentacularReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
