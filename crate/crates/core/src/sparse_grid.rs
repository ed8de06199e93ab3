//! Sparse collocation grids and the Smolyak operator in hierarchical form.
//!
//! For a downward-closed set `I`, the interpolant is `S_I v = Σ_{ν∈I} Δ^ν v`.
//! With nested nodes each tensor detail operator only reads samples on the
//! tensor grid of `ν`:
//!
//! ```text
//! Δ^ν v(y) = Σ_{j ∈ grid(ν)} v(x_j) Π_m d^{(ν_m)}_{j_m}(y_m)
//! ```
//!
//! where `d^{(k)}_j = l^{(k)}_j - l^{(k-1)}_j` are the 1D detail functions
//! from [`LevelBasis`]. A [`SurplusExpansion`] stores one term per pair
//! `(ν, j)`; every norm then reduces to sums of products of exact 1D
//! integrals (see [`parametric_gram`]).

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::{contract, Error, Result};
use crate::index_set::{IndexSet, MultiIndex};
use crate::nodes::{detail_mass, growth, LevelBasis, NodeFamily};

/// Per-dimension node ordinals of a collocation point.
pub type PointKey = Vec<u16>;

#[derive(Clone, Debug)]
pub struct SparseGrid {
    family: NodeFamily,
    index_set: IndexSet,
    points: Vec<PointKey>,
    lookup: HashMap<PointKey, usize>,
    nodes: Vec<f64>,
}

fn tensor_ordinals(counts: &[usize]) -> Vec<PointKey> {
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut cur = vec![0u16; counts.len()];
    loop {
        out.push(cur.clone());
        let mut m = counts.len();
        loop {
            if m == 0 {
                return out;
            }
            m -= 1;
            cur[m] += 1;
            if (cur[m] as usize) < counts[m] {
                break;
            }
            cur[m] = 0;
        }
    }
}

fn counts_of(family: NodeFamily, nu: &MultiIndex) -> Vec<usize> {
    nu.entries().iter().map(|&l| growth(family, l)).collect()
}

impl SparseGrid {
    pub fn new(index_set: &IndexSet, family: NodeFamily) -> Self {
        let mut set = BTreeSet::new();
        for nu in index_set.iter() {
            set.extend(tensor_ordinals(&counts_of(family, nu)));
        }
        let points: Vec<PointKey> = set.into_iter().collect();
        let lookup = points.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        let max_count = (0..index_set.dim()).map(|m| growth(family, index_set.max_level(m))).max().unwrap_or(1);
        SparseGrid { family, index_set: index_set.clone(), points, lookup, nodes: family.nested_nodes(max_count) }
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn dim(&self) -> usize {
        self.index_set.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn keys(&self) -> &[PointKey] {
        &self.points
    }

    pub fn position(&self, key: &[u16]) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        self.points[p].iter().map(|&j| self.nodes[j as usize]).collect()
    }

    pub fn all_coords(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|p| self.coords(p)).collect()
    }

    /// Hierarchical expansion of `S_I` over every index of the grid's set.
    pub fn expansion(&self) -> SurplusExpansion {
        let mut blocks = Vec::new();
        let mut terms = Vec::new();
        for nu in self.index_set.iter() {
            let b = blocks.len();
            blocks.push(nu.clone());
            for key in tensor_ordinals(&counts_of(self.family, nu)) {
                let point = self.lookup[&key];
                terms.push(SurplusTerm { block: b, point, ordinals: key });
            }
        }
        SurplusExpansion { family: self.family, dim: self.dim(), n_points: self.len(), blocks, terms }
    }
}

/// One `(ν, j)` contribution: value at `point` times `Π_m d^{(ν_m)}_{j_m}`.
#[derive(Clone, Debug)]
pub struct SurplusTerm {
    pub block: usize,
    pub point: usize,
    pub ordinals: PointKey,
}

#[derive(Clone, Debug)]
pub struct SurplusExpansion {
    family: NodeFamily,
    dim: usize,
    n_points: usize,
    blocks: Vec<MultiIndex>,
    terms: Vec<SurplusTerm>,
}

impl SurplusExpansion {
    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of grid points the term point-references range over.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn blocks(&self) -> &[MultiIndex] {
        &self.blocks
    }

    pub fn terms(&self) -> &[SurplusTerm] {
        &self.terms
    }

    /// Multivariate Lagrange basis values `L_z(y)` for every grid point.
    pub fn basis_at(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.dim);
        let mut out = vec![0.0; self.n_points];
        // cache[m][level] holds the detail values of that level at y[m]
        let mut cache: Vec<Vec<Option<Vec<f64>>>> = vec![Vec::new(); self.dim];
        for t in &self.terms {
            let nu = &self.blocks[t.block];
            let mut prod = 1.0;
            for m in 0..self.dim {
                let level = nu[m] as usize;
                let row = &mut cache[m];
                if row.len() <= level {
                    row.resize(level + 1, None);
                }
                let vals = row[level].get_or_insert_with(|| self.family.level_basis(nu[m]).detail_all(y[m]));
                prod *= vals[t.ordinals[m] as usize];
                if prod == 0.0 {
                    break;
                }
            }
            out[t.point] += prod;
        }
        out
    }

    pub fn evaluate(&self, values: &[f64], y: &[f64]) -> f64 {
        assert_eq!(values.len(), self.n_points);
        self.basis_at(y).iter().zip(values).map(|(l, v)| l * v).sum()
    }

    /// Evaluate with vector-valued data (one vector per grid point).
    pub fn evaluate_vector(&self, values: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.n_points);
        let basis = self.basis_at(y);
        let len = values.first().map_or(0, Vec::len);
        let mut out = vec![0.0; len];
        for (l, v) in basis.iter().zip(values) {
            if *l != 0.0 {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += l * x);
            }
        }
        out
    }

    /// Keep only the terms whose originating index lies in `subset`.
    pub fn restrict_to_indices(&self, subset: &[MultiIndex]) -> Result<SurplusExpansion> {
        let mut remap = HashMap::new();
        let mut blocks = Vec::new();
        for nu in subset {
            let Some(b) = self.blocks.iter().position(|x| x == nu) else {
                return Err(contract(format!("{nu:?} is not an index of this expansion")));
            };
            if let std::collections::hash_map::Entry::Vacant(e) = remap.entry(b) {
                e.insert(blocks.len());
                blocks.push(nu.clone());
            }
        }
        let terms = self
            .terms
            .iter()
            .filter_map(|t| remap.get(&t.block).map(|&nb| SurplusTerm { block: nb, ..t.clone() }))
            .collect();
        Ok(SurplusExpansion { family: self.family, dim: self.dim, n_points: self.n_points, blocks, terms })
    }

    fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut ranges = vec![0..0; self.blocks.len()];
        let mut start = 0;
        while start < self.terms.len() {
            let b = self.terms[start].block;
            let mut end = start;
            while end < self.terms.len() && self.terms[end].block == b {
                end += 1;
            }
            ranges[b] = start..end;
            start = end;
        }
        ranges
    }
}

/// Pairing matrix `Λ[z][z'] = ∫ L^a_z L^b_{z'} dπ` (row-major, `n_a × n_b`).
///
/// Each entry is a sum over term pairs of products of exact 1D detail
/// integrals, so no multivariate quadrature is involved.
pub fn parametric_gram(a: &SurplusExpansion, b: &SurplusExpansion) -> Result<Vec<f64>> {
    let nb = b.n_points;
    let mut gram = vec![0.0; a.n_points * nb];
    for_each_term_pair(a, b, |pa, pb, w| gram[pa * nb + pb] += w)?;
    Ok(gram)
}

/// `‖Σ_t v(z_t) ψ_t‖²_{L²_π}` where `pairing(z, z')` is the inner product of
/// the data at two grid points. Avoids forming the dense pairing matrix.
pub fn expansion_norm_sq(e: &SurplusExpansion, pairing: impl Fn(usize, usize) -> f64) -> f64 {
    let mut s = 0.0;
    for_each_term_pair(e, e, |pa, pb, w| s += w * pairing(pa, pb)).expect("self pairing is compatible");
    s
}

/// Calls `visit(point_a, point_b, ∫ ψ_a ψ_b dπ)` for every pair of terms.
fn for_each_term_pair(
    a: &SurplusExpansion,
    b: &SurplusExpansion,
    mut visit: impl FnMut(usize, usize, f64),
) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::Dimension { expected: a.dim, found: b.dim });
    }
    if a.family != b.family {
        return Err(contract("expansions use different node families"));
    }
    let ra = a.block_ranges();
    let rb = b.block_ranges();
    for (ba, nu_a) in a.blocks.iter().enumerate() {
        for (bb, nu_b) in b.blocks.iter().enumerate() {
            // dimensions where either level exceeds 1 carry a nontrivial factor
            let mut factors: Vec<(usize, usize, Arc<Vec<f64>>)> = Vec::new();
            for m in 0..a.dim {
                if nu_a[m] == 1 && nu_b[m] == 1 {
                    continue;
                }
                let mat = detail_mass(a.family, nu_a[m], nu_b[m]);
                factors.push((m, growth(a.family, nu_b[m]), mat));
            }
            for ta in &a.terms[ra[ba].clone()] {
                for tb in &b.terms[rb[bb].clone()] {
                    let mut prod = 1.0;
                    for (m, ncols, mat) in &factors {
                        prod *= mat[ta.ordinals[*m] as usize * ncols + tb.ordinals[*m] as usize];
                        if prod == 0.0 {
                            break;
                        }
                    }
                    if prod != 0.0 {
                        visit(ta.point, tb.point, prod);
                    }
                }
            }
        }
    }
    Ok(())
}

/// `Σ_{zz'} Λ[z][z'] G[z][z']` for square matrices of matching size.
pub fn pair_trace(lambda: &[f64], pairing: &[f64]) -> f64 {
    assert_eq!(lambda.len(), pairing.len());
    lambda.iter().zip(pairing).map(|(l, g)| l * g).sum()
}

/// Diagnostic Lebesgue-constant growth bound for the tensor detail of `ν`.
///
/// Clenshaw–Curtis: `Π ν_m`; Leja: `Π ν_m² max(1, ln ν_m)`.
pub fn lebesgue_bound(nu: &MultiIndex, family: NodeFamily) -> f64 {
    nu.entries()
        .iter()
        .map(|&l| {
            let l = l as f64;
            match family {
                NodeFamily::ClenshawCurtis => l,
                NodeFamily::Leja => l * l * l.ln().max(1.0),
            }
        })
        .product()
}

/// A single tensor detail operator `Δ^ν` applied to sampled data.
#[derive(Clone, Debug)]
pub struct TensorDetail {
    family: NodeFamily,
    nu: MultiIndex,
    samples: Vec<f64>,
    ordinals: Vec<PointKey>,
}

impl TensorDetail {
    pub fn new(nu: &MultiIndex, family: NodeFamily, mut sampler: impl FnMut(&[f64]) -> f64) -> Self {
        let counts = counts_of(family, nu);
        let nodes = family.nested_nodes(counts.iter().copied().max().unwrap_or(1));
        let ordinals = tensor_ordinals(&counts);
        let samples = ordinals
            .iter()
            .map(|j| {
                let y: Vec<f64> = j.iter().map(|&k| nodes[k as usize]).collect();
                sampler(&y)
            })
            .collect();
        TensorDetail { family, nu: nu.clone(), samples, ordinals }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let bases: Vec<Arc<LevelBasis>> = self.nu.entries().iter().map(|&l| self.family.level_basis(l)).collect();
        let vals: Vec<Vec<f64>> = bases.iter().zip(y).map(|(b, &ym)| b.detail_all(ym)).collect();
        self.ordinals
            .iter()
            .zip(&self.samples)
            .map(|(j, s)| s * j.iter().enumerate().map(|(m, &k)| vals[m][k as usize]).product::<f64>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(raw: &[&[u32]]) -> IndexSet {
        IndexSet::from_raw(raw).unwrap()
    }

    #[test]
    fn grid_examples() {
        for f in [NodeFamily::Leja, NodeFamily::ClenshawCurtis] {
            let g = SparseGrid::new(&IndexSet::root(2), f);
            assert_eq!(g.all_coords(), vec![vec![0.0, 0.0]]);
        }
        let g = SparseGrid::new(&set(&[&[1, 1], &[2, 1]]), NodeFamily::ClenshawCurtis);
        let mut c = g.all_coords();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]);
        let g = SparseGrid::new(&set(&[&[1, 1], &[2, 1], &[1, 2]]), NodeFamily::Leja);
        let mut c = g.all_coords();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn root_expansion_is_single_term() {
        let g = SparseGrid::new(&IndexSet::root(3), NodeFamily::Leja);
        let e = g.expansion();
        assert_eq!(e.terms().len(), 1);
        assert_eq!(e.evaluate(&[4.5], &[0.3, -0.2, 0.9]), 4.5);
    }

    #[test]
    fn linear_leja_example() {
        let g = SparseGrid::new(&set(&[&[1, 1], &[2, 1]]), NodeFamily::Leja);
        let e = g.expansion();
        let values: Vec<f64> = (0..g.len()).map(|p| g.coords(p)[0]).collect();
        assert_abs_diff_eq!(e.evaluate(&values, &[0.5, 0.77]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn restriction_edges() {
        let g = SparseGrid::new(&set(&[&[1, 1], &[2, 1], &[1, 2]]), NodeFamily::ClenshawCurtis);
        let e = g.expansion();
        let all: Vec<MultiIndex> = g.index_set().iter().cloned().collect();
        assert_eq!(e.restrict_to_indices(&all).unwrap().terms().len(), e.terms().len());
        let empty = e.restrict_to_indices(&[]).unwrap();
        let vals = vec![1.0; g.len()];
        assert_eq!(empty.evaluate(&vals, &[0.2, 0.3]), 0.0);
        let outside = MultiIndex::new(vec![3, 1]).unwrap();
        assert!(e.restrict_to_indices(&[outside]).is_err());
    }

    #[test]
    fn gram_examples() {
        let g = SparseGrid::new(&IndexSet::root(2), NodeFamily::Leja);
        let e = g.expansion();
        assert_eq!(parametric_gram(&e, &e).unwrap(), vec![1.0]);

        let g = SparseGrid::new(&set(&[&[1], &[2]]), NodeFamily::ClenshawCurtis);
        let e = g.expansion();
        let lam = parametric_gram(&e, &e).unwrap();
        let mid = g.position(&[0]).unwrap();
        assert_abs_diff_eq!(lam[mid * 3 + mid], 8.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lam.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(lam[i * 3 + j], lam[j * 3 + i], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn lebesgue_examples() {
        let mi = |e: &[u32]| MultiIndex::new(e.to_vec()).unwrap();
        assert_eq!(lebesgue_bound(&mi(&[1, 1]), NodeFamily::ClenshawCurtis), 1.0);
        assert_eq!(lebesgue_bound(&mi(&[3, 2]), NodeFamily::ClenshawCurtis), 6.0);
        assert_eq!(lebesgue_bound(&mi(&[2, 1]), NodeFamily::Leja), 4.0);
    }
}
