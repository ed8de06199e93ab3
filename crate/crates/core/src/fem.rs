//! P1 Galerkin discretisation for one coefficient sample.
//!
//! Both the stiffness matrix and the load vector use the three-point
//! edge-midpoint rule on every element (exact for quadratics). Homogeneous
//! Dirichlet conditions are imposed by keeping interior vertices only.

use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Side};

use crate::error::{contract, Error, Result};
use crate::mesh::{Point, SimplexMesh};

/// Sparsity pattern over interior degrees of freedom (rows sorted, symmetric).
#[derive(Debug)]
pub struct CsrPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symbolic: OnceLock<SymbolicLlt<usize>>,
}

impl CsrPattern {
    fn slot(&self, row: usize, col: usize) -> usize {
        let cols = &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]];
        self.row_ptr[row] + cols.binary_search(&col).expect("entry in pattern")
    }

    fn as_faer(&self) -> SymbolicSparseColMatRef<'_, usize> {
        // symmetric, so CSR rows double as CSC columns
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.row_ptr, None, &self.col_idx)
    }

    fn symbolic_llt(&self) -> Result<SymbolicLlt<usize>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s.clone());
        }
        let s = SymbolicLlt::try_new(self.as_faer(), Side::Lower)
            .map_err(|e| contract(format!("symbolic factorisation failed: {e:?}")))?;
        Ok(self.symbolic.get_or_init(|| s).clone())
    }
}

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate().take(p.n) {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.matvec(x, &mut y);
        y
    }

    /// `|A| |x|` row sums, used for the rounding floor of residual checks.
    fn abs_mul(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| (p.row_ptr[i]..p.row_ptr[i + 1]).map(|k| (self.values[k] * x[p.col_idx[k]]).abs()).sum())
            .collect()
    }

    pub fn quad_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let p = &self.pattern;
        let mut s = 0.0;
        for (i, &ui) in u.iter().enumerate().take(p.n) {
            if ui == 0.0 {
                continue;
            }
            let mut r = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                r += self.values[k] * v[p.col_idx[k]];
            }
            s += ui * r;
        }
        s
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let p = &self.pattern;
        let cols = &p.col_idx[p.row_ptr[row]..p.row_ptr[row + 1]];
        cols.binary_search(&col).map_or(0.0, |k| self.values[p.row_ptr[row] + k])
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let p = &self.pattern;
        let mut worst: f64 = 0.0;
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                worst = worst.max((self.values[k] - self.get(p.col_idx[k], i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut d = vec![vec![0.0; n]; n];
        let p = &self.pattern;
        for (i, row) in d.iter_mut().enumerate() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row[p.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

#[derive(Clone, Copy, Debug)]
struct ElementData {
    area: f64,
    grads: [[f64; 2]; 3],
    dofs: [Option<usize>; 3],
    quad: [Point; 3],
}

/// Per-mesh assembly data: geometry, sparsity pattern and the Laplace
/// stiffness matrix that defines `(∇u, ∇v)`.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<SimplexMesh>,
    pattern: Arc<CsrPattern>,
    elements: Vec<ElementData>,
    slots: Vec<[usize; 9]>,
    laplace: CsrMatrix,
}

fn midpoint(p: Point, q: Point) -> Point {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

impl FeSpace {
    pub fn new(mesh: Arc<SimplexMesh>) -> Self {
        let v = mesh.vertices();
        let elements: Vec<ElementData> = mesh
            .triangles()
            .iter()
            .enumerate()
            .map(|(ti, t)| {
                let [p0, p1, p2] = [v[t[0]], v[t[1]], v[t[2]]];
                let area = mesh.area(ti);
                let g = |a: Point, b: Point| [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
                ElementData {
                    area,
                    grads: [g(p1, p2), g(p2, p0), g(p0, p1)],
                    dofs: [mesh.dof(t[0]), mesh.dof(t[1]), mesh.dof(t[2])],
                    // q_k sits on the edge opposite local vertex k
                    quad: [midpoint(p1, p2), midpoint(p2, p0), midpoint(p0, p1)],
                }
            })
            .collect();

        let n = mesh.n_interior();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &elements {
            for a in e.dofs.iter().flatten() {
                for b in e.dofs.iter().flatten() {
                    rows[*a].push(*b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let pattern = Arc::new(CsrPattern { n, row_ptr, col_idx, symbolic: OnceLock::new() });
        let slots = elements
            .iter()
            .map(|e| {
                let mut s = [usize::MAX; 9];
                for i in 0..3 {
                    for j in 0..3 {
                        if let (Some(a), Some(b)) = (e.dofs[i], e.dofs[j]) {
                            s[3 * i + j] = pattern.slot(a, b);
                        }
                    }
                }
                s
            })
            .collect();
        let mut space = FeSpace {
            mesh,
            laplace: CsrMatrix { pattern: pattern.clone(), values: Vec::new() },
            pattern,
            elements,
            slots,
        };
        space.laplace = space.stiffness_with(|_, _| 1.0);
        space
    }

    pub fn mesh(&self) -> &Arc<SimplexMesh> {
        &self.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.pattern.n
    }

    pub fn laplace(&self) -> &CsrMatrix {
        &self.laplace
    }

    /// Stiffness from the mean coefficient value per element.
    fn stiffness_with(&self, mut mean_coef: impl FnMut(usize, &ElementData) -> f64) -> CsrMatrix {
        let mut values = vec![0.0; self.pattern.col_idx.len()];
        for (ti, (e, s)) in self.elements.iter().zip(&self.slots).enumerate() {
            let w = mean_coef(ti, e) * e.area;
            for i in 0..3 {
                for j in 0..3 {
                    let slot = s[3 * i + j];
                    if slot != usize::MAX {
                        let gi = e.grads[i];
                        let gj = e.grads[j];
                        values[slot] += w * (gi[0] * gj[0] + gi[1] * gj[1]);
                    }
                }
            }
        }
        CsrMatrix { pattern: self.pattern.clone(), values }
    }

    /// Stiffness matrix and load vector for `-∇·(a ∇u) = f`, `u = 0` on the boundary.
    pub fn assemble(&self, coef: &dyn Fn(Point) -> f64, forcing: &dyn Fn(Point) -> f64) -> Result<FeSystem> {
        let mut bad = None;
        let matrix = self.stiffness_with(|_, e| {
            let mut s = 0.0;
            for q in e.quad {
                let a = coef(q);
                if (a.is_nan() || a <= 0.0) && bad.is_none() {
                    bad = Some((q, a));
                }
                s += a;
            }
            s / 3.0
        });
        if let Some((q, a)) = bad {
            return Err(Error::Ellipticity { x: q[0], y: q[1], value: a });
        }
        Ok(FeSystem { mesh: self.mesh.clone(), matrix, rhs: self.load(forcing) })
    }

    pub fn load(&self, forcing: &dyn Fn(Point) -> f64) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n_dofs()];
        for e in &self.elements {
            let fq = e.quad.map(forcing);
            for i in 0..3 {
                if let Some(d) = e.dofs[i] {
                    // λ_i is 1/2 at the two midpoints adjacent to vertex i, 0 opposite
                    let s: f64 = (0..3).filter(|&k| k != i).map(|k| fq[k]).sum();
                    rhs[d] += e.area / 6.0 * s;
                }
            }
        }
        rhs
    }

    pub fn x_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.laplace.quad_form(u, v)
    }

    pub fn function(&self, values: Vec<f64>) -> Result<FeFunction> {
        if values.len() != self.n_dofs() {
            return Err(Error::Dimension { expected: self.n_dofs(), found: values.len() });
        }
        Ok(FeFunction { mesh: self.mesh.clone(), values })
    }
}

#[derive(Clone, Debug)]
pub struct FeSystem {
    pub mesh: Arc<SimplexMesh>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// A continuous piecewise-linear function given by its interior nodal values.
#[derive(Clone, Debug)]
pub struct FeFunction {
    pub mesh: Arc<SimplexMesh>,
    pub values: Vec<f64>,
}

/// `(∇u, ∇v)_{L²}` for two functions on the mesh of `space`.
pub fn x_inner(space: &FeSpace, u: &FeFunction, v: &FeFunction) -> Result<f64> {
    if u.mesh.id() != space.mesh.id() || v.mesh.id() != space.mesh.id() {
        return Err(contract("functions live on a different mesh"));
    }
    Ok(space.x_inner(&u.values, &v.values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Sparse Cholesky with iterative refinement.
    #[default]
    Cholesky,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg,
}

pub const SOLVE_RTOL: f64 = 1e-12;

/// Residual acceptance: `‖b - Ax‖ ≤ max(rtol ‖b‖, rounding floor)`.
fn residual_ok(matrix: &CsrMatrix, x: &[f64], b: &[f64], r: &[f64]) -> (bool, f64) {
    let bnorm = norm(b);
    let rnorm = norm(r);
    let floor = 64.0 * f64::EPSILON * norm(&matrix.abs_mul(x));
    (rnorm <= (SOLVE_RTOL * bnorm).max(floor), rnorm / bnorm.max(f64::MIN_POSITIVE))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(matrix: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = matrix.mul(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    r
}

impl FeSystem {
    pub fn solve(&self, solver: LinearSolver) -> Result<FeFunction> {
        self.solve_from(solver, None)
    }

    /// Solve, optionally warm-starting the iterative solver.
    pub fn solve_from(&self, solver: LinearSolver, guess: Option<&[f64]>) -> Result<FeFunction> {
        let n = self.matrix.n();
        if self.rhs.iter().all(|&b| b == 0.0) {
            return Ok(FeFunction { mesh: self.mesh.clone(), values: vec![0.0; n] });
        }
        let values = match solver {
            LinearSolver::Cholesky => self.solve_cholesky()?,
            LinearSolver::Pcg => self.solve_pcg(guess)?,
        };
        Ok(FeFunction { mesh: self.mesh.clone(), values })
    }

    fn solve_cholesky(&self) -> Result<Vec<f64>> {
        let n = self.matrix.n();
        let pattern = &self.matrix.pattern;
        let symbolic = pattern.symbolic_llt()?;
        let mat = SparseColMatRef::new(pattern.as_faer(), &self.matrix.values);
        let llt = Llt::try_new_with_symbolic(symbolic, mat, Side::Lower)
            .map_err(|e| contract(format!("Cholesky factorisation failed: {e:?}")))?;
        let mut x = self.rhs.clone();
        llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, n, 1));
        let mut rel = f64::INFINITY;
        for _ in 0..4 {
            let r = residual(&self.matrix, &x, &self.rhs);
            let (ok, rr) = residual_ok(&self.matrix, &x, &self.rhs, &r);
            rel = rr;
            if ok {
                return Ok(x);
            }
            let mut d = r;
            llt.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut d, n, 1));
            x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
        }
        Err(Error::Solver { iterations: 4, residual: rel })
    }

    fn solve_pcg(&self, guess: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.matrix.n();
        let inv_diag: Vec<f64> = self.matrix.diagonal().iter().map(|d| 1.0 / d).collect();
        let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut r = residual(&self.matrix, &x, &self.rhs);
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; n];
        let max_iter = 20 * n.max(1);
        for it in 0..max_iter {
            if residual_ok(&self.matrix, &x, &self.rhs, &r).0 {
                // recompute to guard against drift of the recursive residual
                let true_r = residual(&self.matrix, &x, &self.rhs);
                if residual_ok(&self.matrix, &x, &self.rhs, &true_r).0 {
                    return Ok(x);
                }
                r = true_r;
                z = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
                p.clone_from(&z);
                rz = dot(&r, &z);
            }
            self.matrix.matvec(&p, &mut q);
            let alpha = rz / dot(&p, &q);
            x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
            r.iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
            z.iter_mut().zip(r.iter().zip(&inv_diag)).for_each(|(zi, (ri, di))| *zi = ri * di);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
            if !alpha.is_finite() {
                return Err(Error::Solver { iterations: it, residual: f64::NAN });
            }
        }
        let r = residual(&self.matrix, &x, &self.rhs);
        Err(Error::Solver { iterations: max_iter, residual: residual_ok(&self.matrix, &x, &self.rhs, &r).1 })
    }

    /// `‖b - Au‖₂ / ‖b‖₂`.
    pub fn relative_residual(&self, u: &[f64]) -> f64 {
        let r = residual(&self.matrix, u, &self.rhs);
        norm(&r) / norm(&self.rhs).max(f64::MIN_POSITIVE)
    }

    /// `b - A u` over every degree of freedom.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        residual(&self.matrix, u, &self.rhs)
    }
}

/// `(f, φ̂_ξ) - (a ∇u, ∇φ̂_ξ)` for the hat function of a new interior vertex
/// `ξ` of the uniform refinement, identified by the edge it bisects.
pub fn residual_against_fine_hat(
    coef: &dyn Fn(Point) -> f64,
    forcing: &dyn Fn(Point) -> f64,
    u: &FeFunction,
    xi: crate::mesh::Edge,
) -> Result<f64> {
    let mesh = &u.mesh;
    let nv = mesh
        .new_interior_vertices()
        .into_iter()
        .find(|v| v.edge == xi || v.edge == (xi.1, xi.0))
        .ok_or_else(|| contract(format!("edge {xi:?} does not carry a new interior vertex")))?;
    let fine = Arc::new(mesh.uniform_refine());
    let space = FeSpace::new(fine.clone());
    let system = space.assemble(coef, forcing)?;
    let pu = mesh.prolongate(&fine, &u.values)?;
    let dof = fine.dof(nv.fine_vertex).expect("new interior vertex is a dof");
    Ok(system.residual(&pu)[dof])
}
