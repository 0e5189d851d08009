//! Dirichlet Laplacian on the interior nodes `{phi > 0}` and Poisson solves.
//!
//! The operator is the symmetric 5-point cut-cell stencil: an edge from an
//! interior node to an exterior one crosses the interface at the fraction
//! `θ = φ_i / (φ_i − φ_j)` of its length (linear interpolation of `φ`), and
//! the zero boundary value placed there contributes `1/θ` to the diagonal.
//! Away from the interface this is the plain 5-point stencil. Internally the
//! scaled stencil `K = h² (−Δ_h)` is used.
//! Dot products are accumulated sequentially in index order, so results are
//! bitwise reproducible regardless of the thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LevelSetField, ScalarField};

const NONE: u32 = u32::MAX;
pub const MIN_INTERIOR_NODES: usize = 9;
const PAR_THRESHOLD: usize = 1 << 14;
/// Smallest interface fraction; keeps the diagonal bounded as a node
/// approaches the interface.
pub const THETA_MIN: f64 = 1e-4;
pub const CG_TOLERANCE: f64 = 1e-10;

/// Cut-cell Dirichlet Laplacian restricted to the nodes of a set.
#[derive(Debug, Clone)]
pub struct DirichletOperator {
    grid: GridSpec,
    /// Interior index of every grid node, `NONE` outside.
    index: Vec<u32>,
    /// Grid node of every interior unknown (row-major order).
    nodes: Vec<usize>,
    /// Interior neighbours (left, right, down, up), `NONE` where absent.
    nbrs: Vec<[u32; 4]>,
    /// Weight of each edge of the unknown: `1` towards an interior
    /// neighbour, `1/θ` across the interface.
    weights: Vec<[f64; 4]>,
    diag: Vec<f64>,
}

/// Interface fraction along an edge from `a > 0` to `b ≤ 0`.
pub fn interface_fraction(a: f64, b: f64) -> f64 {
    (a / (a - b)).clamp(THETA_MIN, 1.0)
}

impl DirichletOperator {
    pub fn assemble(set: &LevelSetField) -> Result<Self> {
        let grid = *set.grid();
        let nodes: Vec<usize> = (0..grid.len()).filter(|&k| set.inside(k)).collect();
        if nodes.len() < MIN_INTERIOR_NODES {
            return Err(Error::TooFewInteriorNodes { found: nodes.len(), required: MIN_INTERIOR_NODES });
        }
        let mut index = vec![NONE; grid.len()];
        for (n, &k) in nodes.iter().enumerate() {
            index[k] = n as u32;
        }
        let phi = set.values();
        let mut nbrs = Vec::with_capacity(nodes.len());
        let mut weights = Vec::with_capacity(nodes.len());
        for &k in &nodes {
            let (i, j) = grid.ij(k);
            let cand = [
                (i > 0).then(|| k - 1),
                (i + 1 < grid.nx).then(|| k + 1),
                (j > 0).then(|| k - grid.nx),
                (j + 1 < grid.ny).then(|| k + grid.nx),
            ];
            let mut nb = [NONE; 4];
            let mut w = [1.0; 4];
            for (d, c) in cand.iter().enumerate() {
                match c {
                    Some(q) if index[*q] != NONE => nb[d] = index[*q],
                    Some(q) => w[d] = 1.0 / interface_fraction(phi[k], phi[*q]),
                    None => {}
                }
            }
            nbrs.push(nb);
            weights.push(w);
        }
        let diag = weights.iter().map(|w| w.iter().sum()).collect();
        Ok(Self { grid, index, nodes, nbrs, weights, diag })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Number of unknowns.
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Interior index of grid node `k`.
    pub fn unknown(&self, k: usize) -> Option<usize> {
        let n = self.index[k];
        (n != NONE).then_some(n as usize)
    }

    pub(crate) fn neighbours(&self, n: usize) -> &[u32; 4] {
        &self.nbrs[n]
    }

    /// Edge weights of unknown `n` (left, right, down, up).
    pub(crate) fn edge_weights(&self, n: usize) -> &[f64; 4] {
        &self.weights[n]
    }

    /// Diagonal of the scaled stencil `K` at unknown `n`.
    pub(crate) fn diagonal(&self, n: usize) -> f64 {
        self.diag[n]
    }

    /// Entries of the operator as `(row, col, value)` triplets, scaled by `1/h²`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let s = 1.0 / (self.grid.h * self.grid.h);
        let mut out = Vec::with_capacity(5 * self.size());
        for (n, nb) in self.nbrs.iter().enumerate() {
            out.push((n, n, self.diag[n] * s));
            for &m in nb.iter().filter(|&&m| m != NONE) {
                out.push((n, m as usize, -s));
            }
        }
        out
    }

    /// `y = K x` with the scaled stencil (neighbours −1).
    pub(crate) fn apply_stencil(&self, x: &[f64], y: &mut [f64]) {
        let row = |(n, out): (usize, &mut f64)| {
            let nb = &self.nbrs[n];
            let mut v = self.diag[n] * x[n];
            for &m in nb {
                if m != NONE {
                    v -= x[m as usize];
                }
            }
            *out = v;
        };
        if x.len() >= PAR_THRESHOLD {
            y.par_iter_mut().enumerate().for_each(|(n, out)| row((n, out)));
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    /// Discrete Dirichlet integral `∫ |∇_h x|² = xᵀ K x`, with the
    /// interface edges included.
    pub fn dirichlet_form(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply_stencil(x, &mut y);
        dot(x, &y)
    }

    /// `y = −Δ_h x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_stencil(x, y);
        let s = 1.0 / (self.grid.h * self.grid.h);
        y.iter_mut().for_each(|v| *v *= s);
    }

    /// Values of a full-grid array at the unknowns.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&k| values[k]).collect()
    }

    /// Full-grid field that is `v` on the unknowns and zero elsewhere.
    pub fn extend(&self, v: &[f64]) -> ScalarField {
        let mut out = vec![0.0; self.grid.len()];
        for (&k, &x) in self.nodes.iter().zip(v) {
            out[k] = x;
        }
        ScalarField::new(self.grid, out).expect("finite solution")
    }

    /// Solves `−Δ_h w = f` (values of `f` at the unknowns).
    pub fn solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        let h2 = self.grid.h * self.grid.h;
        let rhs: Vec<f64> = f.iter().map(|v| v * h2).collect();
        let precond = IncompleteCholesky::new(self);
        pcg(self, &precond, &rhs)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Zero-fill incomplete Cholesky of the stencil in `D`-ILU form:
/// `M = (D + L) D⁻¹ (D + Lᵀ)` with `L` the strictly lower stencil part.
pub(crate) struct IncompleteCholesky {
    diag: Vec<f64>,
}

impl IncompleteCholesky {
    pub(crate) fn new(op: &DirichletOperator) -> Self {
        let n = op.size();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let nb = op.neighbours(i);
            let mut d = op.diagonal(i);
            // Left and down neighbours precede `i` in row-major order.
            for m in [nb[0], nb[2]] {
                if m != NONE {
                    d -= 1.0 / diag[m as usize];
                }
            }
            diag[i] = d;
        }
        Self { diag }
    }

    pub(crate) fn apply(&self, op: &DirichletOperator, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let d = &self.diag;
        // (D + L) y = r
        for i in 0..n {
            let nb = op.neighbours(i);
            let mut v = r[i];
            for m in [nb[0], nb[2]] {
                if m != NONE {
                    v += z[m as usize];
                }
            }
            z[i] = v / d[i];
        }
        // (I + D⁻¹ Lᵀ) z = y
        for i in (0..n).rev() {
            let nb = op.neighbours(i);
            let mut v = 0.0;
            for m in [nb[1], nb[3]] {
                if m != NONE {
                    v += z[m as usize];
                }
            }
            z[i] += v / d[i];
        }
    }
}

fn pcg(op: &DirichletOperator, m: &IncompleteCholesky, b: &[f64]) -> Result<Vec<f64>> {
    pcg_with(|x, y| op.apply_stencil(x, y), |r, z| m.apply(op, r, z), b)
}

/// Preconditioned conjugate gradients for a symmetric positive definite `apply`.
pub(crate) fn pcg_with(
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let max_iter = (10.0 * (n as f64).sqrt()).ceil() as usize;
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= CG_TOLERANCE {
            log::trace!("pcg converged in {} iterations", it + 1);
            return Ok(x);
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverStall { iterations: max_iter, residual: rel })
}

/// Solution of `−Δ_h w = f` on `{phi > 0}`, zero elsewhere.
pub fn solve_poisson(set: &LevelSetField, f: &ScalarField) -> Result<ScalarField> {
    if set.grid() != f.grid() {
        return Err(Error::GridMismatch);
    }
    let op = DirichletOperator::assemble(set)?;
    let w = op.solve(&op.restrict(f.values()))?;
    Ok(op.extend(&w))
}

/// Torsion function, the solution for `f ≡ 1`.
pub fn torsion(set: &LevelSetField) -> Result<ScalarField> {
    let op = DirichletOperator::assemble(set)?;
    let w = op.solve(&vec![1.0; op.size()])?;
    Ok(op.extend(&w))
}

/// `−½ Σ f w h²`.
pub fn energy_from_state(f: &ScalarField, w: &ScalarField) -> f64 {
    let h2 = f.grid().h * f.grid().h;
    -0.5 * dot(f.values(), w.values()) * h2
}

/// Dirichlet energy `Ẽ_f(Ω) = −½ ∫ f w_{Ω,f}`.
pub fn dirichlet_energy(set: &LevelSetField, f: &ScalarField) -> Result<f64> {
    let w = solve_poisson(set, f)?;
    Ok(energy_from_state(f, &w))
}
