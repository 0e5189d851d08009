//! Functionals of a deformed set `Φ(Ω)` evaluated on the nodes of `Ω`.
//!
//! With `v = u ∘ Φ`, the Dirichlet problem on `Φ(Ω)` becomes
//! `−div(A ∇v) = (f ∘ Φ) J` on `Ω` with `J = det DΦ` and
//! `A = J DΦ⁻¹ DΦ⁻ᵀ`. The node set stays fixed, so the discrete energy and
//! eigenvalues depend smoothly on the amplitude of `Φ`, and at `Φ = Id` the
//! assembled matrix is exactly the stencil of [`DirichletOperator`].
//!
//! The quadratic form is assembled with edge coefficients for the diagonal
//! entries of `A` and cell-centred gradients for the mixed term.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::deform::Deformation;
use crate::eigen::{eigenpairs_of, MAX_EIGENPAIRS};
use crate::error::{Error, Result};
use crate::functionals::{FunctionalSpec, SourceTerm};
use crate::grid::LevelSetField;
use crate::pde::{dot, pcg_with, DirichletOperator, IncompleteCholesky};

const NONE: u32 = u32::MAX;
const CENTER: usize = 4;
const EIGEN_RESIDUAL: f64 = 1e-9;
const MAX_SUBSPACE_ITERATIONS: usize = 200;

/// Pulled-back stencil `h² (−div A∇)` on the unknowns of `Ω`, with up to
/// nine entries per row (offsets `(di, dj) ∈ {−1, 0, 1}²`, row-major).
pub struct PulledBackOperator {
    base: DirichletOperator,
    cols: Vec<[u32; 9]>,
    coef: Vec<[f64; 9]>,
    /// `J` at the unknowns.
    mass: Vec<f64>,
    /// `Φ(x)` at the unknowns.
    mapped: Vec<[f64; 2]>,
}

/// Edge index (left, right, down, up) of an axis offset.
fn direction(di: isize, dj: isize) -> usize {
    match (di, dj) {
        (-1, 0) => 0,
        (1, 0) => 1,
        (0, -1) => 2,
        _ => 3,
    }
}

fn slot(di: isize, dj: isize) -> usize {
    ((dj + 1) * 3 + (di + 1)) as usize
}

/// `J` and `A = J F⁻¹ F⁻ᵀ` for `F = I + D(tT)`.
fn metric(d: &Deformation, p: [f64; 2]) -> (f64, [[f64; 2]; 2]) {
    let g = d.jacobian_at(p);
    let f = [[1.0 + g[0][0], g[0][1]], [g[1][0], 1.0 + g[1][1]]];
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    let adj = [[f[1][1], -f[0][1]], [-f[1][0], f[0][0]]];
    let mut a = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            a[r][c] = (adj[r][0] * adj[c][0] + adj[r][1] * adj[c][1]) / det;
        }
    }
    (det, a)
}

impl PulledBackOperator {
    pub fn assemble(set: &LevelSetField, d: &Deformation) -> Result<Self> {
        if set.grid() != d.grid() {
            return Err(Error::GridMismatch);
        }
        let base = DirichletOperator::assemble(set)?;
        let g = *set.grid();
        let n = base.size();
        let mut cols = vec![[NONE; 9]; n];
        let mut coef = vec![[0.0; 9]; n];
        for (r, &node) in base.nodes().iter().enumerate() {
            let (i, j) = g.ij(node);
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let (a, b) = (i as isize + di, j as isize + dj);
                    if a >= 0 && b >= 0 && (a as usize) < g.nx && (b as usize) < g.ny {
                        if let Some(c) = base.unknown(g.index(a as usize, b as usize)) {
                            cols[r][slot(di, dj)] = c as u32;
                        }
                    }
                }
            }
        }
        let unknown = |i: usize, j: usize| base.unknown(g.index(i, j));
        let h = g.h;
        // Edge terms a (v_q − v_p)².
        let edge = |p: (usize, usize), q: (usize, usize), a: f64, coef: &mut Vec<[f64; 9]>| {
            let (up, uq) = (unknown(p.0, p.1), unknown(q.0, q.1));
            let (di, dj) = (q.0 as isize - p.0 as isize, q.1 as isize - p.1 as isize);
            // Across the interface the edge keeps the cut-cell weight 1/θ.
            if let Some(rp) = up {
                if uq.is_some() {
                    coef[rp][CENTER] += a;
                    coef[rp][slot(di, dj)] -= a;
                } else {
                    coef[rp][CENTER] += a * base.edge_weights(rp)[direction(di, dj)];
                }
            }
            if let Some(rq) = uq {
                if up.is_some() {
                    coef[rq][CENTER] += a;
                    coef[rq][slot(-di, -dj)] -= a;
                } else {
                    coef[rq][CENTER] += a * base.edge_weights(rq)[direction(-di, -dj)];
                }
            }
        };
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.point(i, j);
                if i + 1 < g.nx && (unknown(i, j).is_some() || unknown(i + 1, j).is_some()) {
                    let (_, a) = metric(d, [x[0] + 0.5 * h, x[1]]);
                    edge((i, j), (i + 1, j), a[0][0], &mut coef);
                }
                if j + 1 < g.ny && (unknown(i, j).is_some() || unknown(i, j + 1).is_some()) {
                    let (_, a) = metric(d, [x[0], x[1] + 0.5 * h]);
                    edge((i, j), (i, j + 1), a[1][1], &mut coef);
                }
            }
        }
        // Mixed term 2 a_xy v_x v_y h² with cell-centred differences.
        let sx = [-1.0, 1.0, -1.0, 1.0];
        let sy = [-1.0, -1.0, 1.0, 1.0];
        for j in 0..g.ny - 1 {
            for i in 0..g.nx - 1 {
                let corners = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)];
                let ids: Vec<Option<usize>> = corners.iter().map(|&(a, b)| unknown(a, b)).collect();
                if ids.iter().all(|u| u.is_none()) {
                    continue;
                }
                let x = g.point(i, j);
                let (_, a) = metric(d, [x[0] + 0.5 * h, x[1] + 0.5 * h]);
                let c = 0.5 * a[0][1];
                if c == 0.0 {
                    continue;
                }
                for k in 0..4 {
                    let Some(rk) = ids[k] else { continue };
                    for l in 0..4 {
                        if ids[l].is_none() {
                            continue;
                        }
                        let di = corners[l].0 as isize - corners[k].0 as isize;
                        let dj = corners[l].1 as isize - corners[k].1 as isize;
                        coef[rk][slot(di, dj)] += 0.5 * c * (sx[k] * sy[l] + sy[k] * sx[l]);
                    }
                }
            }
        }
        let mut mass = Vec::with_capacity(n);
        let mut mapped = Vec::with_capacity(n);
        for &node in base.nodes() {
            let (i, j) = g.ij(node);
            let x = g.point(i, j);
            let (det, _) = metric(d, x);
            if det <= 0.0 {
                return Err(Error::DeformationTooLarge(det));
            }
            mass.push(det);
            let u = d.displacement(x);
            mapped.push([x[0] + u[0], x[1] + u[1]]);
        }
        Ok(Self { base, cols, coef, mass, mapped })
    }

    pub fn size(&self) -> usize {
        self.base.size()
    }

    /// `y = h² (−div A∇) x`.
    pub fn apply_stencil(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut v = 0.0;
            for (c, a) in self.cols[r].iter().zip(&self.coef[r]) {
                if *c != NONE {
                    v += a * x[*c as usize];
                }
            }
            *out = v;
        }
    }

    fn solve_stencil(&self, precond: &IncompleteCholesky, rhs: &[f64]) -> Result<Vec<f64>> {
        pcg_with(|x, y| self.apply_stencil(x, y), |r, z| precond.apply(&self.base, r, z), rhs)
    }

    /// `Ẽ_f(Φ(Ω)) = −½ Σ (f∘Φ) J v h²`.
    pub fn energy(&self, f: &SourceTerm) -> Result<f64> {
        let h2 = self.base.grid().h.powi(2);
        let b: Vec<f64> = self.mapped.iter().zip(&self.mass).map(|(&p, &j)| f.value(p) * j).collect();
        if b.iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let rhs: Vec<f64> = b.iter().map(|v| v * h2).collect();
        let precond = IncompleteCholesky::new(&self.base);
        let v = self.solve_stencil(&precond, &rhs)?;
        Ok(-0.5 * dot(&b, &v) * h2)
    }

    /// First `k` eigenvalues of `−div(A∇) v = λ J v` by subspace iteration
    /// started from the undeformed eigenvectors.
    pub fn eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > MAX_EIGENPAIRS {
            return Err(Error::Precondition(format!("eigenpair count must lie in 1..={MAX_EIGENPAIRS}")));
        }
        let p = (k + 2).min(MAX_EIGENPAIRS);
        let start = eigenpairs_of(&self.base, p)?;
        let h2 = self.base.grid().h.powi(2);
        let mut x: Vec<Vec<f64>> = start.vectors.iter().map(|u| self.base.restrict(u.values())).collect();
        let precond = IncompleteCholesky::new(&self.base);
        let n = self.size();
        let mut kx = vec![0.0; n];
        for _ in 0..MAX_SUBSPACE_ITERATIONS {
            let mut y = Vec::with_capacity(p);
            for v in &x {
                let rhs: Vec<f64> = v.iter().zip(&self.mass).map(|(a, m)| a * m * h2).collect();
                y.push(self.solve_stencil(&precond, &rhs)?);
            }
            let ky: Vec<Vec<f64>> = y
                .iter()
                .map(|v| {
                    let mut out = vec![0.0; n];
                    self.apply_stencil(v, &mut out);
                    out
                })
                .collect();
            let my: Vec<Vec<f64>> =
                y.iter().map(|v| v.iter().zip(&self.mass).map(|(a, m)| a * m * h2).collect()).collect();
            let a = DMatrix::from_fn(p, p, |r, c| dot(&y[r], &ky[c]));
            let b = DMatrix::from_fn(p, p, |r, c| dot(&y[r], &my[c]));
            let a = 0.5 * (&a + a.transpose());
            let b = 0.5 * (&b + b.transpose());
            let chol = b
                .cholesky()
                .ok_or_else(|| Error::Eigensolver("subspace lost linear independence".into()))?;
            let linv = chol.l().try_inverse().ok_or_else(|| Error::Eigensolver("singular Gram matrix".into()))?;
            let c = &linv * a * linv.transpose();
            let eig = SymmetricEigen::new(0.5 * (&c + c.transpose()));
            let mut order: Vec<usize> = (0..p).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let coeffs = linv.transpose() * &eig.eigenvectors;
            let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            x = order
                .iter()
                .map(|&i| {
                    let mut v = vec![0.0; n];
                    for (r, yr) in y.iter().enumerate() {
                        let w = coeffs[(r, i)];
                        for (vi, yi) in v.iter_mut().zip(yr) {
                            *vi += w * yi;
                        }
                    }
                    v
                })
                .collect();
            let mut converged = true;
            for (v, &lam) in x.iter().zip(&values).take(k) {
                self.apply_stencil(v, &mut kx);
                let mv: Vec<f64> = v.iter().zip(&self.mass).map(|(a, m)| a * m * h2).collect();
                let res: f64 = kx.iter().zip(&mv).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
                if res > EIGEN_RESIDUAL * lam * dot(&mv, &mv).sqrt() {
                    converged = false;
                }
            }
            if converged {
                return Ok(values[..k].to_vec());
            }
        }
        Err(Error::Eigensolver("subspace iteration did not converge".into()))
    }
}

/// `G(Φ(Ω))` through the pulled-back problem on the nodes of `Ω`.
pub fn pulled_back_functional(spec: &FunctionalSpec, set: &LevelSetField, d: &Deformation) -> Result<f64> {
    spec.validate()?;
    match spec {
        FunctionalSpec::Energy(f) => {
            if f.is_zero() || set.is_empty_set() {
                return Ok(0.0);
            }
            PulledBackOperator::assemble(set, d)?.energy(f)
        }
        FunctionalSpec::Spectral(c) => {
            let lam = PulledBackOperator::assemble(set, d)?.eigenvalues(c.len())?;
            Ok(c.iter().zip(&lam).map(|(a, b)| a * b).sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::functional_value;
    use crate::grid::GridSpec;
    use crate::shapes::Shape;

    fn setup() -> (GridSpec, LevelSetField) {
        let g = GridSpec::centered([0.0, 0.0], 1.3, 1.0 / 32.0).unwrap();
        (g, Shape::ellipse([0.0, 0.0], 1.0, 0.7).rasterize(&g).unwrap())
    }

    #[test]
    fn identity_reproduces_the_base_stencil() {
        let (g, s) = setup();
        let d = Deformation::radial_bump(g, [0.2, 0.0], 0.8, 0.0).unwrap();
        let op = PulledBackOperator::assemble(&s, &d).unwrap();
        let x: Vec<f64> = (0..op.size()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut a = vec![0.0; x.len()];
        let mut b = vec![0.0; x.len()];
        op.apply_stencil(&x, &mut a);
        op.base.apply_stencil(&x, &mut b);
        // Equal up to the summation order of the diagonal.
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-12 * q.abs().max(1.0), "{p} {q}");
        }
        let torsion = FunctionalSpec::Energy(SourceTerm::constant(1.0));
        let e0 = functional_value(&torsion, &s).unwrap().0;
        let e1 = pulled_back_functional(&torsion, &s, &d).unwrap();
        assert!((e0 - e1).abs() <= 1e-9 * e0.abs());
    }

    #[test]
    fn stencil_is_symmetric() {
        let (g, s) = setup();
        let d = Deformation::radial_bump(g, [0.2, 0.1], 0.8, 0.2).unwrap();
        let op = PulledBackOperator::assemble(&s, &d).unwrap();
        for r in 0..op.size() {
            for (c, a) in op.cols[r].iter().zip(&op.coef[r]) {
                if *c == NONE {
                    continue;
                }
                let back = op.cols[*c as usize].iter().position(|&q| q == r as u32).unwrap();
                assert!((op.coef[*c as usize][back] - a).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dilation_matches_scaling_laws() {
        let g = GridSpec::centered([0.0, 0.0], 1.5, 1.0 / 32.0).unwrap();
        let s = Shape::disk([0.0, 0.0], 0.8).rasterize(&g).unwrap();
        let t = 0.05;
        let d = Deformation::dilation(g, [0.0, 0.0], t).unwrap();
        let spec = FunctionalSpec::Spectral(vec![1.0]);
        let l0 = functional_value(&spec, &s).unwrap().0;
        let l1 = pulled_back_functional(&spec, &s, &d).unwrap();
        // Exact for a linear map: λ(sΩ) = λ(Ω)/s².
        assert!((l1 - l0 / (1.0 + t).powi(2)).abs() <= 1e-7 * l0, "{l1} vs {}", l0 / (1.0 + t).powi(2));
        let torsion = FunctionalSpec::Energy(SourceTerm::constant(1.0));
        let e0 = functional_value(&torsion, &s).unwrap().0;
        let e1 = pulled_back_functional(&torsion, &s, &d).unwrap();
        assert!((e1 - e0 * (1.0 + t).powi(4)).abs() <= 1e-7 * e0.abs());
    }
}
