//! Discretized Rabinowitz action on loop space.
//!
//! A loop is `N` samples `v_j ≈ v(j/N)` together with the period parameter
//! `η`. The discrete action is
//!
//! ```text
//! A(v, η) = Σ_j ½⟨J0 v_j, v_{j+1}⟩ − η·Hq(v),
//! Hq(v)   = (1/N) Σ_j [(1−β) H(v_j) + β H((v_j + v_{j+1})/2)],   β = ½
//! ```
//!
//! with the primitive `λ0 = ι_{x/2} ω0`. Gradients are taken in the metric
//! `(1/N)Σ ξ_j·ξ'_j + σσ'`, so the `v`-part of the gradient is
//! `−(N/2)J0(v_{j+1} − v_{j−1}) − η·(averaged A v)_j`.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, ClosedCharacteristic};
use crate::error::{Error, Result};
use crate::linalg;
use crate::symplectic::{hamiltonian_matrix, standard_j0};
use crate::Hamiltonian;

/// Weight of the midpoint samples in the potential quadrature.
pub const BETA: f64 = 0.5;
/// Largest `N · 2n` for which dense Hessians are assembled.
pub const MAX_HESSIAN_UNKNOWNS: usize = 8192;
pub const BLOWUP: f64 = 1e6;
const MAGIC: &[u8; 4] = b"RFLO";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LoopRepr", into = "LoopRepr")]
pub struct LoopState {
    eta: f64,
    /// Column `j` is `v_j`.
    v: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct LoopRepr {
    #[serde(rename = "N")]
    n: usize,
    eta: f64,
    v: Vec<Vec<f64>>,
}

impl From<LoopState> for LoopRepr {
    fn from(u: LoopState) -> Self {
        LoopRepr { n: u.n(), eta: u.eta, v: u.v.column_iter().map(|c| c.iter().copied().collect()).collect() }
    }
}

impl TryFrom<LoopRepr> for LoopState {
    type Error = Error;
    fn try_from(r: LoopRepr) -> Result<Self> {
        if r.v.len() != r.n {
            return Err(Error::DimensionMismatch { expected: r.n, found: r.v.len() });
        }
        let dim = r.v.first().map_or(0, Vec::len);
        if let Some(bad) = r.v.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        let v = DMatrix::from_fn(dim, r.n, |i, j| r.v[j][i]);
        LoopState::new(r.eta, v)
    }
}

impl LoopState {
    /// `v` holds one sample per column.
    pub fn new(eta: f64, v: DMatrix<f64>) -> Result<Self> {
        let n = v.ncols();
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Invalid(format!("N must be a power of two >= 16, got {n}")));
        }
        if v.nrows() < 2 || !v.nrows().is_multiple_of(2) {
            return Err(Error::OddDimension(v.nrows()));
        }
        if !eta.is_finite() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("loop state"));
        }
        Ok(LoopState { eta, v })
    }

    pub fn from_points(eta: f64, points: &[DVector<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        Self::new(eta, DMatrix::from_fn(dim, points.len(), |i, j| points[j][i]))
    }

    pub fn constant(x: &DVector<f64>, eta: f64, n: usize) -> Result<Self> {
        Self::new(eta, DMatrix::from_fn(x.len(), n, |i, _| x[i]))
    }

    /// Samples `v(j/N)` of a continuous closed characteristic, with its exact `η`.
    pub fn from_orbit(orbit: &ClosedCharacteristic, h: &Hamiltonian, n: usize) -> Result<Self> {
        let step = flow(h, orbit.eta / n as f64);
        let mut x = orbit.start();
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            let next = &step * &x;
            pts.push(x);
            x = next;
        }
        Self::from_points(orbit.eta, &pts)
    }

    /// Exact critical point of the discrete action near a closed characteristic.
    ///
    /// With `θ = 2πk/N` and `h(θ) = 1 − β sin²(θ/2)` the loop
    /// `v_j = exp(jθ M/μ) x0 / √h` with `η = N sin θ / (μ h)` has zero gradient.
    pub fn discrete_circle(orbit: &ClosedCharacteristic, h: &Hamiltonian, n: usize) -> Result<Self> {
        let theta = 2.0 * std::f64::consts::PI * orbit.k as f64 / n as f64;
        let hh = 1.0 - BETA * (theta / 2.0).sin().powi(2);
        let eta = n as f64 * theta.sin() / (orbit.mu * hh);
        let step = (hamiltonian_matrix(h) * (theta / orbit.mu)).exp();
        let mut x = orbit.start() / hh.sqrt();
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            let next = &step * &x;
            pts.push(x);
            x = next;
        }
        Self::from_points(eta, &pts)
    }

    pub fn n(&self) -> usize {
        self.v.ncols()
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn point(&self, j: usize) -> DVector<f64> {
        self.v.column(j % self.n()).into_owned()
    }

    /// `[v_0, ..., v_{N-1}, η]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.v.len() + 1);
        out.rows_mut(0, self.v.len()).copy_from_slice(self.v.as_slice());
        out[self.v.len()] = self.eta;
        out
    }

    pub fn from_flat(dim: usize, n: usize, flat: &DVector<f64>) -> Result<Self> {
        if flat.len() != dim * n + 1 {
            return Err(Error::DimensionMismatch { expected: dim * n + 1, found: flat.len() });
        }
        Self::new(flat[dim * n], DMatrix::from_column_slice(dim, n, &flat.as_slice()[..dim * n]))
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.v).max(self.eta.abs())
    }

    /// Largest sample distance `max_j |v_j − w_j|` together with `|η − η'|`.
    pub fn distance(&self, other: &LoopState) -> f64 {
        let dv = (&self.v - &other.v).column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        dv.max((self.eta - other.eta).abs())
    }

    fn check_dim(&self, h: &Hamiltonian) -> Result<()> {
        if self.dim() != h.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: self.dim() });
        }
        Ok(())
    }
}

/// Tangent vector `(ξ, σ)` at a loop.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent {
    pub dv: DMatrix<f64>,
    pub deta: f64,
}

impl Tangent {
    /// Metric pairing `(1/N)Σ ξ_j·ξ'_j + σσ'`.
    pub fn g_dot(&self, other: &Tangent) -> f64 {
        self.dv.dot(&other.dv) / self.dv.ncols() as f64 + self.deta * other.deta
    }

    pub fn g_norm(&self) -> f64 {
        self.g_dot(self).sqrt()
    }

    pub fn max_dv(&self) -> f64 {
        self.dv.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dv.len() + 1);
        out.rows_mut(0, self.dv.len()).copy_from_slice(self.dv.as_slice());
        out[self.dv.len()] = self.deta;
        out
    }

    pub fn from_flat(dim: usize, n: usize, flat: &DVector<f64>) -> Self {
        Tangent { dv: DMatrix::from_column_slice(dim, n, &flat.as_slice()[..dim * n]), deta: flat[dim * n] }
    }
}

fn prev(j: usize, n: usize) -> usize {
    (j + n - 1) % n
}

fn next(j: usize, n: usize) -> usize {
    (j + 1) % n
}

/// `(1−β) v_j + β (v_{j−1} + 2v_j + v_{j+1})/4`.
fn averaged(v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.ncols();
    DMatrix::from_fn(v.nrows(), n, |i, j| {
        (1.0 - BETA) * v[(i, j)] + BETA * (v[(i, prev(j, n))] + 2.0 * v[(i, j)] + v[(i, next(j, n))]) / 4.0
    })
}

fn potential(v: &DMatrix<f64>, h: &Hamiltonian) -> f64 {
    let n = v.ncols();
    let av = h.matrix() * v;
    let mut sum = 0.0;
    for j in 0..n {
        let k = next(j, n);
        let own = 0.5 * v.column(j).dot(&av.column(j));
        // ½ m^T A m with m the midpoint, expanded through A v.
        let mid = 0.125
            * (v.column(j).dot(&av.column(j)) + 2.0 * v.column(j).dot(&av.column(k)) + v.column(k).dot(&av.column(k)));
        sum += (1.0 - BETA) * own + BETA * mid;
    }
    sum / n as f64 - h.constant()
}

pub fn discrete_action(u: &LoopState, h: &Hamiltonian) -> Result<f64> {
    u.check_dim(h)?;
    let n = u.n();
    let j0 = standard_j0::<f64>(h.n());
    let jv = &j0 * &u.v;
    let lam: f64 = (0..n).map(|j| 0.5 * jv.column(j).dot(&u.v.column(next(j, n)))).sum();
    Ok(lam - u.eta * potential(&u.v, h))
}

/// Gradient of the discrete action in the loop-space metric.
pub fn discrete_gradient(u: &LoopState, h: &Hamiltonian) -> Result<Tangent> {
    u.check_dim(h)?;
    let n = u.n();
    let j0 = standard_j0::<f64>(h.n());
    let jv = &j0 * &u.v;
    let aav = h.matrix() * averaged(&u.v);
    let half_n = n as f64 / 2.0;
    let dv = DMatrix::from_fn(u.dim(), n, |i, j| {
        -half_n * (jv[(i, next(j, n))] - jv[(i, prev(j, n))]) - u.eta * aav[(i, j)]
    });
    Ok(Tangent { dv, deta: -potential(&u.v, h) })
}

fn check_size(u: &LoopState) -> Result<()> {
    let unknowns = u.n() * u.dim();
    if unknowns > MAX_HESSIAN_UNKNOWNS {
        return Err(Error::TooLarge(format!("dense Hessian with N*2n = {unknowns} > {MAX_HESSIAN_UNKNOWNS}")));
    }
    Ok(())
}

/// Second derivative of the discrete action in flat coordinates `[v_0, ..., v_{N−1}, η]`.
pub fn euclidean_hessian(u: &LoopState, h: &Hamiltonian) -> Result<DMatrix<f64>> {
    u.check_dim(h)?;
    check_size(u)?;
    let (d, n) = (u.dim(), u.n());
    let size = d * n + 1;
    let nf = n as f64;
    let j0 = standard_j0::<f64>(d / 2);
    let a = h.matrix();
    let diag = a * (-u.eta * (1.0 - BETA / 2.0) / nf);
    let off = a * (-u.eta * BETA / (4.0 * nf));
    let aav = a * averaged(&u.v);
    let mut m = DMatrix::zeros(size, size);
    for j in 0..n {
        let k = next(j, n);
        // Row block j, column block j+1: −½J0 from the symplectic term.
        let upper = &j0 * -0.5 + &off;
        let mut block = m.view_mut((j * d, j * d), (d, d));
        block += &diag;
        let mut block = m.view_mut((j * d, k * d), (d, d));
        block += &upper;
        let mut block = m.view_mut((k * d, j * d), (d, d));
        block += upper.transpose();
        for i in 0..d {
            let e = -aav[(i, j)] / nf;
            m[(j * d + i, size - 1)] = e;
            m[(size - 1, j * d + i)] = e;
        }
    }
    Ok(m)
}

/// `G^{−1/2}` as a diagonal, `G = diag(I/N, 1)`.
fn metric_root_inv(u: &LoopState) -> DVector<f64> {
    let len = u.dim() * u.n();
    DVector::from_fn(len + 1, |i, _| if i < len { (u.n() as f64).sqrt() } else { 1.0 })
}

/// Hessian as a self-adjoint operator of the loop metric, in orthonormal coordinates:
/// `K = G^{−1/2} H G^{−1/2}`. Its spectrum is that of `G^{−1} H`.
pub fn hessian_matrix(u: &LoopState, h: &Hamiltonian) -> Result<DMatrix<f64>> {
    let mut m = euclidean_hessian(u, h)?;
    let s = metric_root_inv(u);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)] *= s[i] * s[j];
        }
    }
    Ok(linalg::symmetric_part(&m))
}

/// Full Hessian spectrum, ascending.
pub fn hessian_eigenvalues(u: &LoopState, h: &Hamiltonian) -> Result<Vec<f64>> {
    Ok(linalg::sym_eigenvalues(&hessian_matrix(u, h)?))
}

/// The `n_low` Hessian eigenvalues of smallest magnitude, ordered by magnitude.
pub fn discrete_hessian_spectrum(u: &LoopState, h: &Hamiltonian, n_low: usize) -> Result<Vec<f64>> {
    let mut vals = hessian_eigenvalues(u, h)?;
    vals.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    vals.truncate(n_low);
    Ok(vals)
}

/// Number of Hessian eigenvalues with `|κ| < tol`.
pub fn kernel_count(u: &LoopState, h: &Hamiltonian, tol: f64) -> Result<usize> {
    Ok(hessian_eigenvalues(u, h)?.iter().filter(|k| k.abs() < tol).count())
}

/// `Hess(ξ, σ)` as a tangent vector, the derivative of `discrete_gradient` along `(ξ, σ)`.
pub fn hessian_apply(u: &LoopState, h: &Hamiltonian, w: &Tangent) -> Result<Tangent> {
    u.check_dim(h)?;
    let n = u.n();
    let j0 = standard_j0::<f64>(h.n());
    let jw = &j0 * &w.dv;
    let a = h.matrix();
    let aaw = a * averaged(&w.dv);
    let aav = a * averaged(&u.v);
    let half_n = n as f64 / 2.0;
    let dv = DMatrix::from_fn(u.dim(), n, |i, j| {
        -half_n * (jw[(i, next(j, n))] - jw[(i, prev(j, n))]) - u.eta * aaw[(i, j)] - w.deta * aav[(i, j)]
    });
    let deta = -(aav.dot(&w.dv)) / n as f64;
    Ok(Tangent { dv, deta })
}

/// Stability bound `0.5 / ((1 + ‖A‖) N)` for the explicit integrator.
pub fn cfl_bound(h: &Hamiltonian, n: usize) -> f64 {
    0.5 / ((1.0 + linalg::spectral_norm(h.matrix())) * n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOptions {
    pub s_max: f64,
    /// Defaults to the stability bound.
    pub ds: Option<f64>,
    pub snap_every: usize,
    pub grad_tol: f64,
    pub stop_on_convergence: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { s_max: 1.0, ds: None, snap_every: 1, grad_tol: 1e-8, stop_on_convergence: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowDiagnostics {
    pub s_grid: Vec<f64>,
    pub action_series: Vec<f64>,
    pub energy: f64,
    pub grad_norm_series: Vec<f64>,
    pub converged: bool,
    pub escaped: bool,
    pub limit: Option<LoopState>,
}

impl FlowDiagnostics {
    pub fn delta_action(&self) -> f64 {
        match (self.action_series.first(), self.action_series.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Largest decrease between consecutive snapshots (zero if monotone).
    pub fn worst_decrease(&self) -> f64 {
        self.action_series.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
    }
}

/// Positive gradient flow `∂_s u = ∇A(u)` with classical RK4.
pub fn integrate_flow(u0: &LoopState, h: &Hamiltonian, opts: &FlowOptions) -> Result<FlowDiagnostics> {
    integrate_flow_observed(u0, h, opts, |_, _| Ok(()))
}

/// As [`integrate_flow`], calling `observe(s, u)` at every snapshot.
pub fn integrate_flow_observed<F>(
    u0: &LoopState,
    h: &Hamiltonian,
    opts: &FlowOptions,
    mut observe: F,
) -> Result<FlowDiagnostics>
where
    F: FnMut(f64, &LoopState) -> Result<()>,
{
    u0.check_dim(h)?;
    let bound = cfl_bound(h, u0.n());
    let ds = opts.ds.unwrap_or(bound);
    if ds.is_nan() || ds <= 0.0 || ds > bound * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("ds = {ds:e} must lie in (0, {bound:e}]")));
    }
    if !opts.s_max.is_finite() || opts.s_max < 0.0 {
        return Err(Error::Invalid(format!("s_max = {} must be finite and non-negative", opts.s_max)));
    }
    let snap_every = opts.snap_every.max(1);
    let (d, n) = (u0.dim(), u0.n());
    let grad_flat = |x: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let g = discrete_gradient(&LoopState::from_flat(d, n, x)?, h)?;
        let norm2 = g.g_dot(&g);
        Ok((g.to_flat(), norm2))
    };

    let mut x = u0.to_flat();
    let mut s = 0.0;
    let mut energy = 0.0;
    let mut diag = FlowDiagnostics {
        s_grid: vec![0.0],
        action_series: vec![discrete_action(u0, h)?],
        energy: 0.0,
        grad_norm_series: vec![],
        converged: false,
        escaped: false,
        limit: None,
    };
    observe(0.0, u0)?;
    let (mut k1, mut n1) = grad_flat(&x)?;
    diag.grad_norm_series.push(n1.sqrt());
    let steps = (opts.s_max / ds).ceil() as usize;
    for step in 0..steps {
        if n1.sqrt() < opts.grad_tol {
            diag.converged = true;
            if opts.stop_on_convergence {
                break;
            }
        }
        let h_step = ds.min(opts.s_max - s);
        if h_step <= 0.0 {
            break;
        }
        let (k2, n2) = grad_flat(&(&x + &k1 * (h_step / 2.0)))?;
        let (k3, n3) = grad_flat(&(&x + &k2 * (h_step / 2.0)))?;
        let (k4, n4) = grad_flat(&(&x + &k3 * h_step))?;
        x += (&k1 + &k2 * 2.0 + &k3 * 2.0 + &k4) * (h_step / 6.0);
        energy += h_step / 6.0 * (n1 + 2.0 * n2 + 2.0 * n3 + n4);
        s += h_step;
        if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            log::warn!("flow escaped at s = {s:.6}");
            diag.escaped = true;
            diag.energy = energy;
            return Ok(diag);
        }
        (k1, n1) = grad_flat(&x)?;
        let last = step + 1 == steps;
        if (step + 1) % snap_every == 0 || last {
            let u = LoopState::from_flat(d, n, &x)?;
            diag.s_grid.push(s);
            diag.action_series.push(discrete_action(&u, h)?);
            diag.grad_norm_series.push(n1.sqrt());
            observe(s, &u)?;
        }
    }
    diag.energy = energy;
    diag.converged = n1.sqrt() < opts.grad_tol;
    if diag.converged {
        diag.limit = Some(LoopState::from_flat(d, n, &x)?);
    }
    Ok(diag)
}

/// Independent flow runs on `jobs` worker threads; results keep input order.
pub fn integrate_flow_batch(
    inits: &[LoopState],
    h: &Hamiltonian,
    opts: &FlowOptions,
    jobs: usize,
) -> Result<Vec<Result<FlowDiagnostics>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| inits.par_iter().map(|u| integrate_flow(u, h, opts)).collect()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refined {
    pub state: LoopState,
    /// Gradient norm at `state`.
    pub residual: f64,
    pub iterations: usize,
}

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;

/// Newton iteration on the gradient with minimum-norm steps, so the
/// reparametrization degeneracy of critical circles is never inverted.
pub fn newton_refine(u0: &LoopState, h: &Hamiltonian) -> Result<Refined> {
    let mut u = u0.clone();
    let mut g = discrete_gradient(&u, h)?;
    let mut r = g.g_norm();
    if r >= 0.1 {
        return Err(Error::Precondition(format!("gradient norm {r:.3e} >= 0.1 at the Newton start point")));
    }
    let (d, n) = (u.dim(), u.n());
    let root = metric_root_inv(&u);
    for it in 0..NEWTON_MAX_ITER {
        if r < NEWTON_TOL {
            return Ok(Refined { state: u, residual: r, iterations: it });
        }
        let k = hessian_matrix(&u, h)?;
        let eig = k.symmetric_eigen();
        let kmax = eig.eigenvalues.amax();
        let cut = 1e-9 * kmax.max(1.0);
        // Euclidean gradient is G·g; in orthonormal coordinates it is G^{1/2} g.
        let rhs = DVector::from_fn(d * n + 1, |i, _| g.to_flat()[i] / root[i]);
        let coeffs = eig.eigenvectors.transpose() * rhs;
        let y = DVector::from_fn(coeffs.len(), |i, _| {
            let l = eig.eigenvalues[i];
            if l.abs() > cut {
                -coeffs[i] / l
            } else {
                0.0
            }
        });
        let step = (&eig.eigenvectors * y).component_mul(&root);
        let trial = LoopState::from_flat(d, n, &(u.to_flat() + step))?;
        let gt = discrete_gradient(&trial, h)?;
        let rt = gt.g_norm();
        log::debug!("newton iteration {it}: residual {r:.3e} -> {rt:.3e}");
        if rt.is_nan() || rt >= r {
            return Err(Error::NoConvergence { residual: r, iterations: it + 1 });
        }
        u = trial;
        g = gt;
        r = rt;
    }
    if r < NEWTON_TOL {
        Ok(Refined { state: u, residual: r, iterations: NEWTON_MAX_ITER })
    } else {
        Err(Error::NoConvergence { residual: r, iterations: NEWTON_MAX_ITER })
    }
}

/// One binary frame: `"RFLO"`, version, `N`, dim (u32 LE), then `η` and `v` row-major as f64 LE.
pub fn write_snapshot<W: Write>(w: &mut W, u: &LoopState) -> Result<()> {
    w.write_all(MAGIC)?;
    for x in [SNAPSHOT_VERSION, u.n() as u32, u.dim() as u32] {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&u.eta.to_le_bytes())?;
    for j in 0..u.n() {
        for i in 0..u.dim() {
            w.write_all(&u.v[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads every frame of a snapshot stream.
pub fn read_snapshots<R: Read>(r: &mut R) -> Result<Vec<LoopState>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut out = Vec::new();
    let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
        let end = *pos + len;
        let s = bytes.get(*pos..end).ok_or_else(|| Error::Invalid("truncated snapshot".into()))?;
        *pos = end;
        Ok(s)
    };
    while pos < bytes.len() {
        if take(&mut pos, 4)? != MAGIC {
            return Err(Error::Invalid("bad snapshot magic".into()));
        }
        let mut header = [0u32; 3];
        for x in &mut header {
            *x = u32::from_le_bytes(take(&mut pos, 4)?.try_into().expect("4 bytes"));
        }
        let [version, n, dim] = header;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Invalid(format!("unsupported snapshot version {version}")));
        }
        let (n, dim) = (n as usize, dim as usize);
        let mut f = || -> Result<f64> { Ok(f64::from_le_bytes(take(&mut pos, 8)?.try_into().expect("8 bytes"))) };
        let eta = f()?;
        let mut v = DMatrix::zeros(dim, n);
        for j in 0..n {
            for i in 0..dim {
                v[(i, j)] = f()?;
            }
        }
        out.push(LoopState::new(eta, v)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::enumerate_closed_characteristics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn h_ex() -> Hamiltonian {
        Hamiltonian::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, 1.0, 1.0])), 0.5).unwrap()
    }

    fn orbit(k: i64) -> ClosedCharacteristic {
        enumerate_closed_characteristics(&h_ex(), 2).unwrap().into_iter().find(|o| o.k == k).unwrap()
    }

    fn random_state(n: usize, rng: &mut impl Rng) -> LoopState {
        LoopState::new(rng.gen_range(-3.0..3.0), DMatrix::from_fn(4, n, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn random_tangent(n: usize, rng: &mut impl Rng) -> Tangent {
        Tangent { dv: DMatrix::from_fn(4, n, |_, _| rng.gen_range(-1.0..1.0)), deta: rng.gen_range(-1.0..1.0) }
    }

    fn shifted(u: &LoopState, w: &Tangent, t: f64) -> LoopState {
        LoopState::new(u.eta + t * w.deta, &u.v + &w.dv * t).unwrap()
    }

    #[test]
    fn validation() {
        assert!(LoopState::new(1.0, DMatrix::zeros(4, 12)).is_err());
        assert!(LoopState::new(1.0, DMatrix::zeros(4, 24)).is_err());
        assert!(LoopState::new(f64::NAN, DMatrix::zeros(4, 16)).is_err());
        assert!(LoopState::new(1.0, DMatrix::zeros(3, 16)).is_err());
        assert!(LoopState::new(1.0, DMatrix::zeros(4, 16)).is_ok());
    }

    #[test]
    fn action_examples() {
        let h = h_ex();
        let u = LoopState::from_orbit(&orbit(1), &h, 256).unwrap();
        assert!((discrete_action(&u, &h).unwrap() - PI).abs() < 1e-3);
        let on = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert!(discrete_action(&LoopState::constant(&on, 3.7, 16).unwrap(), &h).unwrap().abs() < 1e-12);
        let off = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        let h0 = h.value(&off);
        assert!((discrete_action(&LoopState::constant(&off, 1.0, 16).unwrap(), &h).unwrap() + h0).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let h = h_ex();
        let mut prev_res: Option<(f64, f64)> = None;
        for n in [64, 128, 256] {
            let g = discrete_gradient(&LoopState::from_orbit(&orbit(1), &h, n).unwrap(), &h).unwrap();
            // The midpoint samples see the chord, so δη is second order rather than zero.
            let chord = 0.5 * BETA * (PI / n as f64).sin().powi(2);
            assert!((g.deta - chord).abs() < 1e-12);
            if n == 256 {
                assert!(g.max_dv() < 1e-2);
            }
            if let Some((pv, pe)) = prev_res {
                for ratio in [pv / g.max_dv(), pe / g.deta] {
                    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
                }
            }
            prev_res = Some((g.max_dv(), g.deta));
        }
        let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let g = discrete_gradient(&LoopState::constant(&x0, 0.0, 32).unwrap(), &h).unwrap();
        assert!(g.g_norm() < 1e-15);
    }

    #[test]
    fn discrete_circle_is_critical() {
        let h = h_ex();
        for k in [1, -1, 2] {
            let u = LoopState::discrete_circle(&orbit(k), &h, 64).unwrap();
            assert!(discrete_gradient(&u, &h).unwrap().g_norm() < 1e-12);
            assert!((u.eta() - 2.0 * PI * k as f64).abs() < 0.05 * k.abs() as f64);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = h_ex();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let u = random_state(32, &mut rng);
            let w = random_tangent(32, &mut rng);
            let g = discrete_gradient(&u, &h).unwrap();
            let t = 1e-5;
            let fd = (discrete_action(&shifted(&u, &w, t), &h).unwrap()
                - discrete_action(&shifted(&u, &w, -t), &h).unwrap())
                / (2.0 * t);
            let an = g.g_dot(&w);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "{fd} vs {an}");

            let hw = hessian_apply(&u, &h, &w).unwrap();
            let gp = discrete_gradient(&shifted(&u, &w, t), &h).unwrap().to_flat();
            let gm = discrete_gradient(&shifted(&u, &w, -t), &h).unwrap().to_flat();
            let fd = (gp - gm) / (2.0 * t);
            assert!((&fd - hw.to_flat()).amax() <= 1e-5 * (1.0 + fd.amax()));

            let he = euclidean_hessian(&u, &h).unwrap();
            assert!(linalg::max_abs(&(&he - he.transpose())) < 1e-12);
            let quad = w.to_flat().dot(&(&he * w.to_flat()));
            let a0 = discrete_action(&u, &h).unwrap();
            let t2 = 1e-4;
            let fd2 = (discrete_action(&shifted(&u, &w, t2), &h).unwrap() - 2.0 * a0
                + discrete_action(&shifted(&u, &w, -t2), &h).unwrap())
                / (t2 * t2);
            assert!((fd2 - quad).abs() <= 1e-5 * (1.0 + quad.abs()), "{fd2} vs {quad}");
            assert!((hw.g_dot(&w) - quad).abs() <= 1e-10 * (1.0 + quad.abs()));
        }
    }

    #[test]
    fn kernel_at_circle_and_constant_loop() {
        let h = h_ex();
        let u = LoopState::discrete_circle(&orbit(1), &h, 64).unwrap();
        assert_eq!(kernel_count(&u, &h, 10.0 / 64f64.powi(2)).unwrap(), 1);
        let x0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let c = LoopState::constant(&x0, 0.0, 64).unwrap();
        assert!(kernel_count(&c, &h, 10.0 / 64f64.powi(2)).unwrap() >= 3);
        let low = discrete_hessian_spectrum(&u, &h, 3).unwrap();
        assert!(low[0].abs() <= low[1].abs() && low[1].abs() <= low[2].abs());
        let big = LoopState::new(0.0, DMatrix::zeros(4, 4096)).unwrap();
        assert!(matches!(euclidean_hessian(&big, &h), Err(Error::TooLarge(_))));
    }

    #[test]
    fn flow_fixed_point_and_monotonicity() {
        let h = h_ex();
        let n = 16;
        let u0 = LoopState::discrete_circle(&orbit(1), &h, n).unwrap();
        let opts = FlowOptions { s_max: 1.0, stop_on_convergence: false, ..Default::default() };
        let d = integrate_flow(&u0, &h, &opts).unwrap();
        let a0 = d.action_series[0];
        assert!(d.action_series.iter().all(|a| (a - a0).abs() < 1e-8));
        assert!(d.converged);
        assert!(d.limit.as_ref().unwrap().distance(&u0) < 1e-6);

        let mut v = u0.samples().clone();
        for j in 0..n {
            let t = j as f64 / n as f64;
            v[(1, j)] += 1e-2 * (1.0 + 0.3 * (2.0 * PI * t).cos());
            v[(3, j)] += 1e-2 * (0.5 + 0.2 * (2.0 * PI * t).sin());
        }
        let up = LoopState::new(u0.eta(), v).unwrap();
        let d = integrate_flow(&up, &h, &FlowOptions { s_max: 0.5, ..Default::default() }).unwrap();
        assert!(!d.escaped);
        assert!(d.delta_action() > 0.0);
        assert!(d.worst_decrease() <= 1e-9);
        assert!((d.energy - d.delta_action()).abs() <= 1e-4 * (1.0 + d.delta_action().abs()));
    }

    #[test]
    fn flow_initial_slope_off_level() {
        let h = h_ex();
        let off = DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]);
        let h0 = h.value(&off);
        let u = LoopState::constant(&off, 0.0, 16).unwrap();
        let g = discrete_gradient(&u, &h).unwrap();
        assert!((g.deta + h0).abs() < 1e-14);
        assert!((g.g_dot(&g) - h0 * h0).abs() < 1e-12);
        let ds = 1e-4;
        let d = integrate_flow(&u, &h, &FlowOptions { s_max: ds, ds: Some(ds), ..Default::default() }).unwrap();
        let slope = d.delta_action() / ds;
        assert!((slope - h0 * h0).abs() < 1e-6);
        let too_big = FlowOptions { ds: Some(1.0), ..Default::default() };
        assert!(matches!(integrate_flow(&u, &h, &too_big), Err(Error::Precondition(_))));
    }

    #[test]
    fn newton_examples() {
        let h = h_ex();
        let n = 64;
        let base = LoopState::from_orbit(&orbit(1), &h, n).unwrap();
        let mut v = base.samples().clone();
        for j in 0..n {
            let t = 2.0 * PI * j as f64 / n as f64;
            v[(0, j)] += 1e-3 * t.sin();
            v[(1, j)] += 1e-3 * (1.0 + t.cos());
        }
        let start = LoopState::new(2.0 * PI + 1e-3, v).unwrap();
        let r = newton_refine(&start, &h).unwrap();
        assert!(r.residual < NEWTON_TOL);
        let exact = LoopState::discrete_circle(&orbit(1), &h, n).unwrap();
        let a_exact = discrete_action(&exact, &h).unwrap();
        assert!((discrete_action(&r.state, &h).unwrap() - a_exact).abs() < 1e-9);

        let again = newton_refine(&exact, &h).unwrap();
        assert_eq!(again.iterations, 0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(newton_refine(&random_state(n, &mut rng), &h), Err(Error::Precondition(_))));
    }

    #[test]
    fn batch_preserves_order() {
        let h = h_ex();
        let inits: Vec<_> = (0..4)
            .map(|i| LoopState::constant(&DVector::from_vec(vec![1.0 + i as f64, 0.0, 0.0, 0.0]), 0.0, 16).unwrap())
            .collect();
        let opts = FlowOptions { s_max: 0.01, ..Default::default() };
        let batch = integrate_flow_batch(&inits, &h, &opts, 3).unwrap();
        for (u, d) in inits.iter().zip(batch) {
            assert_eq!(d.unwrap(), integrate_flow(u, &h, &opts).unwrap());
        }
    }

    #[test]
    fn snapshot_and_json_round_trip() {
        let h = h_ex();
        let u = LoopState::discrete_circle(&orbit(1), &h, 16).unwrap();
        let w = LoopState::constant(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]), -0.5, 32).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &u).unwrap();
        write_snapshot(&mut buf, &w).unwrap();
        assert_eq!(&buf[..4], b"RFLO");
        assert_eq!(buf.len(), 2 * 16 + 8 * (1 + 16 * 4) + 8 * (1 + 32 * 4));
        assert_eq!(read_snapshots(&mut buf.as_slice()).unwrap(), vec![u.clone(), w]);
        assert!(read_snapshots(&mut &buf[..20]).is_err());

        let json = serde_json::to_string(&u).unwrap();
        let back: LoopState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, u);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["N"], 16);
        assert_eq!(value["v"][0].as_array().unwrap().len(), 4);
        assert!(serde_json::from_str::<LoopState>(r#"{"N":16,"eta":1.0,"v":[[0,0]]}"#).is_err());
    }
}
