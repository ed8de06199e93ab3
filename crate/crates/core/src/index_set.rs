//! Downward-closed multi-index sets and their reduced margins.
//!
//! Multi-indices use 1-based levels: the root index is `[1, 1, ..., 1]`.
//! Sets are kept in lexicographic order so every traversal, and every
//! tie-break that depends on traversal order, is reproducible.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// A multi-index `[nu_1, ..., nu_M]` with every entry at least 1.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Result<Self> {
        if entries.is_empty() {
            return Err(contract("multi-index must have at least one entry"));
        }
        if entries.contains(&0) {
            return Err(contract(format!("multi-index entries must be >= 1, got {entries:?}")));
        }
        Ok(MultiIndex(entries))
    }

    pub fn root(dim: usize) -> Self {
        MultiIndex(vec![1; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn norm1(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `self + e_m`.
    pub fn forward(&self, m: usize) -> Self {
        let mut e = self.0.clone();
        e[m] += 1;
        MultiIndex(e)
    }

    /// `self - e_m`, or `None` when that would leave the positive orthant.
    pub fn backward(&self, m: usize) -> Option<Self> {
        if self.0[m] <= 1 {
            return None;
        }
        let mut e = self.0.clone();
        e[m] -= 1;
        Some(MultiIndex(e))
    }

    /// Backward neighbours `self - e_m` for every `m` with `nu_m > 1`.
    pub fn backward_neighbours(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.dim()).filter_map(move |m| self.backward(m))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = u32;
    fn index(&self, m: usize) -> &u32 {
        &self.0[m]
    }
}

fn check_dims<'a>(indices: impl IntoIterator<Item = &'a MultiIndex>) -> Result<Option<usize>> {
    let mut dim = None;
    for nu in indices {
        match dim {
            None => dim = Some(nu.dim()),
            Some(d) if d != nu.dim() => {
                return Err(Error::Dimension { expected: d, found: nu.dim() });
            }
            _ => {}
        }
    }
    Ok(dim)
}

/// True iff the collection is downward closed (and so contains the root when nonempty).
pub fn is_monotone(indices: &[MultiIndex]) -> Result<bool> {
    let Some(dim) = check_dims(indices)? else {
        return Ok(true);
    };
    let set: BTreeSet<&MultiIndex> = indices.iter().collect();
    if !set.contains(&MultiIndex::root(dim)) {
        return Ok(false);
    }
    Ok(indices.iter().all(|nu| nu.backward_neighbours().all(|b| set.contains(&b))))
}

/// A nonempty, downward-closed set of multi-indices of fixed dimension.
#[derive(Clone, PartialEq, Eq, Serialize)]
#[serde(into = "Vec<MultiIndex>")]
pub struct IndexSet {
    dim: usize,
    indices: BTreeSet<MultiIndex>,
}

impl From<IndexSet> for Vec<MultiIndex> {
    fn from(s: IndexSet) -> Self {
        s.indices.into_iter().collect()
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.indices.iter()).finish()
    }
}

impl IndexSet {
    /// The set `{(1, ..., 1)}`.
    pub fn root(dim: usize) -> Self {
        let mut indices = BTreeSet::new();
        indices.insert(MultiIndex::root(dim));
        IndexSet { dim, indices }
    }

    pub fn from_indices(indices: Vec<MultiIndex>) -> Result<Self> {
        let dim = check_dims(&indices)?.ok_or_else(|| contract("index set must be nonempty"))?;
        if !is_monotone(&indices)? {
            return Err(contract("index set is not downward closed"));
        }
        Ok(IndexSet { dim, indices: indices.into_iter().collect() })
    }

    /// Convenience constructor from raw entry vectors.
    pub fn from_raw(raw: &[&[u32]]) -> Result<Self> {
        let indices = raw.iter().map(|r| MultiIndex::new(r.to_vec())).collect::<Result<Vec<_>>>()?;
        Self::from_indices(indices)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, nu: &MultiIndex) -> bool {
        self.indices.contains(nu)
    }

    /// Indices in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.indices.iter()
    }

    /// Largest level reached in dimension `m`.
    pub fn max_level(&self, m: usize) -> u32 {
        self.indices.iter().map(|nu| nu[m]).max().unwrap_or(1)
    }

    /// All `nu` outside the set whose backward neighbours all lie inside it.
    ///
    /// Candidates are the forward neighbours of members, so the scan costs
    /// `O(|I| M^2)` set lookups. Result is sorted lexicographically.
    pub fn reduced_margin(&self) -> Vec<MultiIndex> {
        let mut margin = BTreeSet::new();
        for nu in &self.indices {
            for m in 0..self.dim {
                let cand = nu.forward(m);
                if self.indices.contains(&cand) || margin.contains(&cand) {
                    continue;
                }
                if cand.backward_neighbours().all(|b| self.indices.contains(&b)) {
                    margin.insert(cand);
                }
            }
        }
        margin.into_iter().collect()
    }

    /// `I ∪ added`, where `added` must lie in the reduced margin of `I`.
    pub fn enrich(&self, added: &[MultiIndex]) -> Result<IndexSet> {
        if let Some(d) = check_dims(added)? {
            if d != self.dim {
                return Err(Error::Dimension { expected: self.dim, found: d });
            }
        }
        let margin: BTreeSet<MultiIndex> = self.reduced_margin().into_iter().collect();
        if let Some(bad) = added.iter().find(|nu| !margin.contains(*nu)) {
            return Err(contract(format!("{bad:?} is not in the reduced margin")));
        }
        let mut out = self.clone();
        out.indices.extend(added.iter().cloned());
        Ok(out)
    }

    /// `I ∪ R(I)`.
    pub fn with_margin(&self) -> IndexSet {
        let mut out = self.clone();
        out.indices.extend(self.reduced_margin());
        out
    }
}
