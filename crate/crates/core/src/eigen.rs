//! Smallest Dirichlet eigenpairs by shift-invert block Krylov iteration.
//!
//! The stencil matrix is factored once with an envelope (profile) Cholesky
//! in row-major unknown order. A block Krylov basis of `K⁻¹` is grown with
//! full reorthogonalisation, and Ritz pairs are extracted from `Vᵀ K V` until
//! every requested pair has a small residual. Blocks resolve multiple
//! eigenvalues that a single-vector recurrence could miss.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{LevelSetField, ScalarField};
use crate::pde::{dot, DirichletOperator};

pub const MAX_EIGENPAIRS: usize = 10;
/// Eigenvalues closer than this relative gap form a cluster.
pub const CLUSTER_GAP: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-10;
const BLOCK: usize = 3;
const MAX_BASIS: usize = 240;
const MAX_RESTARTS: usize = 6;
pub const DEFAULT_SEED: u64 = 0x5eed_e16e;

/// Envelope Cholesky factor `K = L Lᵀ`, rows stored from their first nonzero.
pub(crate) struct ProfileCholesky {
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl ProfileCholesky {
    pub(crate) fn factor(op: &DirichletOperator) -> Result<Self> {
        let n = op.size();
        let mut first = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            let nb = op.neighbours(i);
            let lo = [nb[0], nb[2]].iter().filter(|&&m| m != u32::MAX).map(|&m| m as usize).min().unwrap_or(i);
            first.push(lo);
            offset.push(offset[i] + (i - lo + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            let nb = op.neighbours(i);
            let row = offset[i];
            let fi = first[i];
            for m in [nb[0], nb[2]] {
                if m != u32::MAX {
                    data[row + m as usize - fi] = -1.0;
                }
            }
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let (ri, rj) = (row + lo - fi, offset[j] + lo - fj);
                let len = j - lo;
                let s = dot(&data[ri..ri + len], &data[rj..rj + len]);
                let ljj = data[offset[j] + j - fj];
                data[row + j - fi] = (data[row + j - fi] - s) / ljj;
            }
            let len = i - fi;
            let s = dot(&data[row..row + len], &data[row..row + len]);
            let d = op.diagonal(i) - s;
            if !(d > 0.0) {
                return Err(Error::Eigensolver(format!("factorization broke down at unknown {i} (pivot {d})")));
            }
            data[row + len] = d.sqrt();
        }
        Ok(Self { first, offset, data })
    }

    /// Solves `K x = b` in place.
    pub(crate) fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let (fi, row) = (self.first[i], self.offset[i]);
            let len = i - fi;
            let s = dot(&self.data[row..row + len], &x[fi..i]);
            x[i] = (x[i] - s) / self.data[row + len];
        }
        for i in (0..n).rev() {
            let (fi, row) = (self.first[i], self.offset[i]);
            let len = i - fi;
            x[i] /= self.data[row + len];
            let xi = x[i];
            for (xk, l) in x[fi..i].iter_mut().zip(&self.data[row..row + len]) {
                *xk -= l * xi;
            }
        }
    }
}

/// Eigenpairs of `−Δ_h` on a set, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Normalised so that `Σ u² h² = 1`.
    pub vectors: Vec<ScalarField>,
    /// Relative residuals `‖(−Δ_h − λ)u‖ / (λ ‖u‖)`.
    pub residuals: Vec<f64>,
    /// Index ranges of eigenvalues within [`CLUSTER_GAP`] of each other.
    pub clusters: Vec<std::ops::Range<usize>>,
}

impl EigenResult {
    /// Cluster containing eigenvalue `i`.
    pub fn cluster_of(&self, i: usize) -> std::ops::Range<usize> {
        self.clusters.iter().find(|c| c.contains(&i)).cloned().unwrap_or(i..i + 1)
    }
}

fn clusters(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i] - values[i - 1]) > CLUSTER_GAP * values[i - 1].abs() {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Orthogonalises `v` against `basis` twice; returns the remaining norm.
fn orthogonalize(basis: &[Vec<f64>], v: &mut [f64]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
    dot(v, v).sqrt()
}

struct Ritz {
    theta: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

/// `hrows[b][a] = v_a · K v_b` for `a <= b`.
fn rayleigh_ritz(op: &DirichletOperator, basis: &[Vec<f64>], kbasis: &[Vec<f64>], hrows: &[Vec<f64>], keep: usize) -> Ritz {
    let m = basis.len();
    let n = op.size();
    let h = DMatrix::from_fn(m, m, |a, b| if a <= b { hrows[b][a] } else { hrows[a][b] });
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let keep = keep.min(m);
    let mut theta = Vec::with_capacity(keep);
    let mut vectors = Vec::with_capacity(keep);
    let mut residuals = Vec::with_capacity(keep);
    for &c in order.iter().take(keep) {
        let s = eig.eigenvectors.column(c);
        let mut y = vec![0.0; n];
        let mut ky = vec![0.0; n];
        for a in 0..m {
            let w = s[a];
            for i in 0..n {
                y[i] += w * basis[a][i];
                ky[i] += w * kbasis[a][i];
            }
        }
        let t = eig.eigenvalues[c];
        let norm = dot(&y, &y).sqrt();
        let r: f64 = ky.iter().zip(&y).map(|(a, b)| (a - t * b).powi(2)).sum::<f64>().sqrt();
        theta.push(t);
        residuals.push(r / (t.abs() * norm));
        vectors.push(y);
    }
    Ritz { theta, vectors, residuals }
}

/// The `k` smallest eigenpairs of the Dirichlet Laplacian on `{phi > 0}`.
pub fn eigenpairs(set: &LevelSetField, k: usize) -> Result<EigenResult> {
    let op = DirichletOperator::assemble(set)?;
    eigenpairs_of(&op, k)
}

pub fn eigenpairs_of(op: &DirichletOperator, k: usize) -> Result<EigenResult> {
    eigenpairs_seeded(op, k, DEFAULT_SEED)
}

/// As [`eigenpairs_of`] with an explicit seed for the random start block.
pub fn eigenpairs_seeded(op: &DirichletOperator, k: usize, seed: u64) -> Result<EigenResult> {
    if k == 0 || k > MAX_EIGENPAIRS {
        return Err(Error::Precondition(format!("eigenpair count must be in 1..={MAX_EIGENPAIRS}, got {k}")));
    }
    let n = op.size();
    if n < 10 * k {
        return Err(Error::TooFewInteriorNodes { found: n, required: 10 * k });
    }
    let chol = ProfileCholesky::factor(op)?;
    let block = BLOCK.max(k.min(4));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            chol.solve(&mut v);
            chol.solve(&mut v);
            v
        })
        .collect();
    let max_basis = MAX_BASIS.min(n);
    let h2 = op.grid().h.powi(2);
    let mut best: Option<Ritz> = None;

    for restart in 0..=MAX_RESTARTS {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut kbasis: Vec<Vec<f64>> = Vec::new();
        let mut hrows: Vec<Vec<f64>> = Vec::new();
        let mut last: Vec<usize> = Vec::new();
        let push = |v: &mut Vec<f64>, basis: &mut Vec<Vec<f64>>, kbasis: &mut Vec<Vec<f64>>, hrows: &mut Vec<Vec<f64>>| -> bool {
            let before = dot(v, v).sqrt();
            let norm = orthogonalize(basis, v);
            if !(norm > 1e-10 * before) {
                return false;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let mut kv = vec![0.0; v.len()];
            op.apply_stencil(v, &mut kv);
            let mut row: Vec<f64> = basis.iter().map(|b| dot(b, &kv)).collect();
            row.push(dot(v, &kv));
            hrows.push(row);
            basis.push(std::mem::take(v));
            kbasis.push(kv);
            true
        };
        for v in start.iter_mut() {
            if push(v, &mut basis, &mut kbasis, &mut hrows) {
                last.push(basis.len() - 1);
            }
        }
        let mut tail = last;
        loop {
            if basis.len() >= k + block {
                let ritz = rayleigh_ritz(op, &basis, &kbasis, &hrows, k + block);
                let ok = ritz.residuals.iter().take(k).all(|&r| r <= RESIDUAL_TOL);
                best = Some(ritz);
                if ok {
                    return Ok(finish(op, best.unwrap(), k, h2));
                }
            }
            if basis.len() + tail.len() > max_basis || tail.is_empty() {
                break;
            }
            let mut grown = Vec::with_capacity(block);
            for &c in &tail {
                let mut v = basis[c].clone();
                chol.solve(&mut v);
                if push(&mut v, &mut basis, &mut kbasis, &mut hrows) {
                    grown.push(basis.len() - 1);
                }
            }
            tail = grown;
        }
        log::debug!("eigensolver restart {} with basis {}", restart + 1, basis.len());
        let ritz = best.as_ref().expect("basis holds at least k + block vectors");
        start = ritz.vectors.clone();
        for v in start.iter_mut() {
            chol.solve(v);
        }
    }
    let ritz = best.expect("at least one Rayleigh-Ritz step");
    let worst = ritz.residuals.iter().take(k).cloned().fold(0.0, f64::max);
    Err(Error::Eigensolver(format!("no convergence after {MAX_RESTARTS} restarts, worst relative residual {worst:e}")))
}

fn finish(op: &DirichletOperator, ritz: Ritz, k: usize, h2: f64) -> EigenResult {
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for i in 0..k {
        let mut y = ritz.vectors[i].clone();
        let norm = (dot(&y, &y) * h2).sqrt();
        let sum: f64 = y.iter().sum();
        let pivot = if sum.abs() > 1e-8 * norm {
            sum
        } else {
            y.iter().copied().find(|v| v.abs() > 1e-8 * norm).unwrap_or(1.0)
        };
        let scale = pivot.signum() / norm;
        y.iter_mut().for_each(|v| *v *= scale);
        values.push(ritz.theta[i] / h2);
        residuals.push(ritz.residuals[i]);
        vectors.push(op.extend(&y));
    }
    let clusters = clusters(&values);
    EigenResult { values, vectors, residuals, clusters }
}
