//! Two-level spatial indicators, parametric margin indicators and the
//! hierarchical error estimates built from them.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{contract, Error, Result};
use crate::fem::{FeFunction, FeSpace, FeSystem, LinearSolver};
use crate::index_set::{IndexSet, MultiIndex};
use crate::mesh::{NewVertex, SimplexMesh};
use crate::nodes::NodeFamily;
use crate::problems::ParametricProblem;
use crate::sparse_grid::{expansion_norm_sq, parametric_gram, PointKey, SparseGrid};

/// Finite element samples on one mesh, keyed by collocation point, with a
/// grow-only cache of their pairwise `X` inner products.
#[derive(Debug)]
pub struct SampleBank {
    space: Arc<FeSpace>,
    index: HashMap<PointKey, usize>,
    keys: Vec<PointKey>,
    values: Vec<Vec<f64>>,
    stiff_values: Vec<Vec<f64>>,
    gram: Vec<Vec<f64>>,
}

impl SampleBank {
    pub fn new(space: Arc<FeSpace>) -> Self {
        SampleBank {
            space,
            index: HashMap::new(),
            keys: Vec::new(),
            values: Vec::new(),
            stiff_values: Vec::new(),
            gram: Vec::new(),
        }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &[u16]) -> bool {
        self.index.contains_key(key)
    }

    pub fn ordinal(&self, key: &[u16]) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn get(&self, key: &[u16]) -> Option<&[f64]> {
        self.ordinal(key).map(|i| self.values[i].as_slice())
    }

    pub fn keys(&self) -> &[PointKey] {
        &self.keys
    }

    /// Store a sample; a key can only be stored once.
    pub fn insert(&mut self, key: PointKey, values: Vec<f64>) -> Result<usize> {
        if self.index.contains_key(&key) {
            return Err(contract(format!("sample at {key:?} already stored")));
        }
        if values.len() != self.space.n_dofs() {
            return Err(Error::Dimension { expected: self.space.n_dofs(), found: values.len() });
        }
        let kv = self.space.laplace().mul(&values);
        // orient every product by key so the cache does not depend on insertion order
        let row: Vec<f64> = self
            .keys
            .iter()
            .zip(self.values.iter().zip(&self.stiff_values))
            .map(|(k, (v, kw))| if *k < key { dot(v, &kv) } else { dot(&values, kw) })
            .chain(std::iter::once(dot(&values, &kv)))
            .collect();
        let i = self.keys.len();
        self.index.insert(key.clone(), i);
        self.keys.push(key);
        self.values.push(values);
        self.stiff_values.push(kv);
        self.gram.push(row);
        Ok(i)
    }

    /// `(∇v_i, ∇v_j)` by ordinal.
    pub fn inner(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.gram[i][j]
        } else {
            self.gram[j][i]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug)]
pub struct SpatialIndicators {
    /// New interior vertices of the uniform refinement.
    pub vertices: Vec<NewVertex>,
    /// `local[z][k]` belongs to point `z` and `vertices[k]`.
    pub local: Vec<Vec<f64>>,
    /// `μ_z = (Σ_k local[z][k]²)^{1/2}`.
    pub totals: Vec<f64>,
}

/// `|(f, φ̂_ξ) - (a ∇u, ∇φ̂_ξ)| / ‖φ̂_ξ‖_X` for every new interior vertex,
/// given the fine-mesh system assembled with the same coefficient sample.
pub fn local_indicators(
    fine: &FeSpace,
    fine_system: &FeSystem,
    vertices: &[NewVertex],
    u: &FeFunction,
) -> Result<Vec<f64>> {
    let pu = u.mesh.prolongate(fine.mesh(), &u.values)?;
    let r = fine_system.residual(&pu);
    let lap = fine.laplace();
    Ok(vertices
        .iter()
        .map(|v| {
            let d = fine.mesh().dof(v.fine_vertex).expect("new interior vertex carries a dof");
            r[d].abs() / lap.get(d, d).sqrt()
        })
        .collect())
}

/// Spatial indicators for samples solved on `mesh` at the points of `grid`.
pub fn spatial_indicators(
    mesh: &Arc<SimplexMesh>,
    grid: &SparseGrid,
    samples: &[FeFunction],
    problem: &dyn ParametricProblem,
) -> Result<SpatialIndicators> {
    if samples.len() != grid.len() {
        return Err(Error::Dimension { expected: grid.len(), found: samples.len() });
    }
    let fine = FeSpace::new(Arc::new(mesh.uniform_refine()));
    let vertices = mesh.new_interior_vertices();
    let mut local = Vec::with_capacity(samples.len());
    for (p, u) in samples.iter().enumerate() {
        if u.mesh.id() != mesh.id() {
            return Err(contract("sample does not live on the given mesh"));
        }
        let y = grid.coords(p);
        let sys = fine.assemble(&|x| problem.coefficient(x, &y), &|x| problem.forcing(x))?;
        local.push(local_indicators(&fine, &sys, &vertices, u)?);
    }
    Ok(SpatialIndicators::new(vertices, local))
}

impl SpatialIndicators {
    pub fn new(vertices: Vec<NewVertex>, local: Vec<Vec<f64>>) -> Self {
        let totals = local.iter().map(|l| l.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        SpatialIndicators { vertices, local, totals }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricIndicators {
    /// The reduced margin, lexicographically sorted.
    pub margin: Vec<MultiIndex>,
    pub values: Vec<f64>,
}

impl ParametricIndicators {
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn get(&self, nu: &MultiIndex) -> Option<f64> {
        self.margin.iter().position(|m| m == nu).map(|k| self.values[k])
    }
}

/// Everything computed on the enriched grid `I ∪ R(I)`.
#[derive(Clone, Debug)]
pub struct ParametricAnalysis {
    pub indicators: ParametricIndicators,
    /// Norm of the sum of all margin blocks.
    pub estimate: f64,
}

/// Map enriched-grid positions to bank ordinals.
fn bank_ordinals(grid: &SparseGrid, bank: &SampleBank) -> Result<Vec<usize>> {
    grid.keys()
        .iter()
        .map(|k| bank.ordinal(k).ok_or_else(|| contract(format!("missing sample at grid point {k:?}"))))
        .collect()
}

/// `τ_ν` for every `ν ∈ R(I)` and `τ = ‖Σ_{ν∈R} Δ^ν S_{I∪R} u‖`, using the
/// samples in `bank` at every point of the enriched grid.
pub fn parametric_analysis(index_set: &IndexSet, family: NodeFamily, bank: &SampleBank) -> Result<ParametricAnalysis> {
    let margin = index_set.reduced_margin();
    let enriched = SparseGrid::new(&index_set.with_margin(), family);
    let ord = bank_ordinals(&enriched, bank)?;
    let expansion = enriched.expansion();
    let pairing = |a: usize, b: usize| bank.inner(ord[a], ord[b]);
    let mut values = Vec::with_capacity(margin.len());
    for nu in &margin {
        let block = expansion.restrict_to_indices(std::slice::from_ref(nu))?;
        values.push(expansion_norm_sq(&block, pairing).max(0.0).sqrt());
    }
    let all = expansion.restrict_to_indices(&margin)?;
    let estimate = expansion_norm_sq(&all, pairing).max(0.0).sqrt();
    Ok(ParametricAnalysis { indicators: ParametricIndicators { margin, values }, estimate })
}

pub fn parametric_indicators(
    index_set: &IndexSet,
    family: NodeFamily,
    bank: &SampleBank,
) -> Result<ParametricIndicators> {
    Ok(parametric_analysis(index_set, family, bank)?.indicators)
}

pub fn parametric_estimate(index_set: &IndexSet, family: NodeFamily, bank: &SampleBank) -> Result<f64> {
    Ok(parametric_analysis(index_set, family, bank)?.estimate)
}

/// Margin indicators evaluated with samples on an arbitrary mesh (the
/// current one or its uniform refinement) instead of the initial mesh.
/// Diagnostic only.
pub fn alt_parametric_indicators(
    index_set: &IndexSet,
    family: NodeFamily,
    bank: &SampleBank,
) -> Result<ParametricIndicators> {
    parametric_indicators(index_set, family, bank)
}

/// Pairing matrix `Λ` of the current grid (row-major).
pub fn grid_gram(grid: &SparseGrid) -> Result<Vec<f64>> {
    let e = grid.expansion();
    let mut g = parametric_gram(&e, &e)?;
    // mirror the lower triangle so the result is exactly symmetric
    let n = grid.len();
    for i in 0..n {
        for j in 0..i {
            g[j * n + i] = g[i * n + j];
        }
    }
    Ok(g)
}

/// `μ = (Σ_{zz'} Λ_{zz'} (∇d_z, ∇d_{z'}))^{1/2}` with `d_z = û_z - P u_z`
/// measured on the fine mesh.
pub fn spatial_estimate(
    lambda: &[f64],
    fine: &FeSpace,
    fine_samples: &[Vec<f64>],
    samples: &[FeFunction],
) -> Result<f64> {
    let n = samples.len();
    if fine_samples.len() != n || lambda.len() != n * n {
        return Err(Error::Dimension { expected: n, found: fine_samples.len() });
    }
    let diffs = samples
        .iter()
        .zip(fine_samples)
        .map(|(u, uh)| {
            let pu = u.mesh.prolongate(fine.mesh(), &u.values)?;
            Ok(uh.iter().zip(&pu).map(|(a, b)| a - b).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let k_diffs: Vec<Vec<f64>> = diffs.iter().map(|d| fine.laplace().mul(d)).collect();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let l = lambda[i * n + j];
            if l == 0.0 {
                continue;
            }
            let g = dot(&diffs[i], &k_diffs[j]);
            s += if i == j { l * g } else { 2.0 * l * g };
        }
    }
    Ok(s.max(0.0).sqrt())
}

/// `μ̄ = Σ_z μ_z ‖L_z‖_{L²_π}` and `τ̄ = Σ_ν τ_ν`.
pub fn weighted_sums(
    spatial: &SpatialIndicators,
    parametric: &ParametricIndicators,
    lambda_diag: &[f64],
) -> (f64, f64) {
    let mu_bar = spatial.totals.iter().zip(lambda_diag).map(|(m, l)| m * l.max(0.0).sqrt()).sum();
    (mu_bar, parametric.sum())
}

/// Solve `problem` at every point of `grid` on `space`.
pub fn solve_on_grid(
    space: &FeSpace,
    grid: &SparseGrid,
    problem: &dyn ParametricProblem,
    solver: LinearSolver,
) -> Result<Vec<FeFunction>> {
    (0..grid.len())
        .map(|p| {
            let y = grid.coords(p);
            space.assemble(&|x| problem.coefficient(x, &y), &|x| problem.forcing(x))?.solve(solver)
        })
        .collect()
}
