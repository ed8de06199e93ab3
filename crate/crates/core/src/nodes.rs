//! Nested one-dimensional node families on `[-1, 1]`, Lagrange bases and
//! Gauss–Legendre quadrature for the uniform probability measure `dy / 2`.
//!
//! Every family is stored in *nested order*: the first `growth(i)` entries of
//! the ordered list are exactly the level-`i` nodes. Sparse-grid points are
//! identified by these integer ordinals, never by coordinates.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeFamily {
    Leja,
    #[serde(rename = "cc")]
    ClenshawCurtis,
}

impl fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeFamily::Leja => "leja",
            NodeFamily::ClenshawCurtis => "cc",
        })
    }
}

impl FromStr for NodeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "leja" => Ok(NodeFamily::Leja),
            "cc" | "clenshaw-curtis" | "clenshawcurtis" => Ok(NodeFamily::ClenshawCurtis),
            other => Err(Error::Parse(format!("unknown node family '{other}' (expected leja or cc)"))),
        }
    }
}

impl NodeFamily {
    /// Growth function: number of nodes on level `i`.
    pub fn growth(self, level: u32) -> usize {
        growth(self, level)
    }

    /// The first `count` nodes in nested order.
    pub fn nested_nodes(self, count: usize) -> Vec<f64> {
        match self {
            NodeFamily::Leja => leja_nodes(count),
            NodeFamily::ClenshawCurtis => cc_nested(count),
        }
    }

    /// Level-`level` Lagrange basis with its predecessor, cached.
    pub fn level_basis(self, level: u32) -> Arc<LevelBasis> {
        static CACHE: Memo<(NodeFamily, u32), Arc<LevelBasis>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(b) = cache.lock().unwrap().get(&(self, level)) {
            return b.clone();
        }
        let b = Arc::new(LevelBasis::new(self, level));
        cache.lock().unwrap().entry((self, level)).or_insert(b).clone()
    }
}

pub fn growth(kind: NodeFamily, level: u32) -> usize {
    match (kind, level) {
        (_, 0) => 0,
        (_, 1) => 1,
        (NodeFamily::Leja, i) => i as usize,
        (NodeFamily::ClenshawCurtis, i) => (1usize << (i - 1)) + 1,
    }
}

/// `cos(pi j / (n-1))` written as a sine so the centre node is exactly zero.
fn cc_point(j: usize, n: usize) -> f64 {
    let d = (n - 1) as f64;
    (std::f64::consts::PI * (d - 2.0 * j as f64) / (2.0 * d)).sin()
}

fn valid_cc_count(n: usize) -> bool {
    n == 1 || (n >= 3 && (n - 1).is_power_of_two())
}

/// Clenshaw–Curtis nodes for a doubling-rule count, sorted ascending.
pub fn cc_nodes(n: usize) -> Result<Vec<f64>> {
    if !valid_cc_count(n) {
        return Err(contract(format!("{n} is not a Clenshaw-Curtis level size")));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let mut v: Vec<f64> = (0..n).map(|j| cc_point(j, n)).collect();
    v.reverse();
    Ok(v)
}

fn cc_nested(count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(0.0);
    let mut level = 2;
    while out.len() < count {
        let n = growth(NodeFamily::ClenshawCurtis, level);
        let mut fresh: Vec<f64> =
            if level == 2 { vec![-1.0, 1.0] } else { (0..n).filter(|j| j % 2 == 1).map(|j| cc_point(j, n)).collect() };
        fresh.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.extend(fresh);
        level += 1;
    }
    out.truncate(count);
    out
}

fn leja_objective(y: f64, nodes: &[f64]) -> f64 {
    nodes.iter().map(|x| (y - x).abs()).product()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Newton polish on the critical-point equation `sum 1/(y - x_j) = 0`.
fn polish_interior(mut y: f64, nodes: &[f64], lo: f64, hi: f64) -> f64 {
    for _ in 0..8 {
        let g: f64 = nodes.iter().map(|x| 1.0 / (y - x)).sum();
        let h: f64 = nodes.iter().map(|x| -1.0 / ((y - x) * (y - x))).sum();
        let next = y - g / h;
        if !next.is_finite() || next <= lo || next >= hi {
            break;
        }
        if (next - y).abs() < 1e-16 {
            y = next;
            break;
        }
        y = next;
    }
    y
}

fn next_leja(nodes: &[f64]) -> f64 {
    const SCAN: usize = 4096;
    let f = |y: f64| leja_objective(y, nodes);

    let mut best_y = 1.0;
    let mut best_v = f(1.0);
    let mut consider = |y: f64, v: f64| {
        let scale = v.abs().max(best_v.abs()).max(f64::MIN_POSITIVE);
        if v > best_v + 1e-12 * scale || ((v - best_v).abs() <= 1e-12 * scale && y > best_y) {
            best_y = y;
            best_v = v;
        }
    };

    for k in 0..=SCAN {
        let y = -1.0 + 2.0 * k as f64 / SCAN as f64;
        consider(y, f(y));
    }
    let mut breaks: Vec<f64> = nodes.to_vec();
    breaks.push(-1.0);
    breaks.push(1.0);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let y = golden_max(f, lo, hi, 1e-12);
        let y = polish_interior(y, nodes, lo, hi);
        // a maximiser pressed against the interval end is the end itself
        let y = if y - lo < 1e-9 {
            lo
        } else if hi - y < 1e-9 {
            hi
        } else {
            y
        };
        consider(y, f(y));
        consider(lo, f(lo));
        consider(hi, f(hi));
    }
    best_y
}

/// First `n` points of the greedy Leja sequence started at 0 (ties go to the larger point).
pub fn leja_nodes(n: usize) -> Vec<f64> {
    static CACHE: OnceLock<Mutex<Vec<f64>>> = OnceLock::new();
    let mut seq = CACHE.get_or_init(|| Mutex::new(vec![0.0])).lock().unwrap();
    while seq.len() < n {
        let y = next_leja(&seq);
        seq.push(y);
    }
    seq[..n].to_vec()
}

type Memo<K, V> = OnceLock<Mutex<HashMap<K, V>>>;

/// Gauss–Legendre rule normalised to the probability measure `dy / 2` on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: Memo<usize, (Vec<f64>, Vec<f64>)> = OnceLock::new();
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    if n == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 0.5 * wt;
        w[n - 1 - i] = 0.5 * wt;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    cache.lock().unwrap().insert(n, (x.clone(), w.clone()));
    (x, w)
}

/// Lagrange basis in barycentric form. The weights carry a common factor
/// `2^{n-1}` that cancels in evaluation and keeps them finite for large `n`.
#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        for i in 0..nodes.len() {
            for j in 0..i {
                if nodes[i] == nodes[j] {
                    return Err(contract(format!("duplicate Lagrange node {}", nodes[i])));
                }
            }
        }
        let weights = (0..nodes.len())
            .map(|j| {
                1.0 / nodes
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != j)
                    .map(|(_, x)| 2.0 * (nodes[j] - x))
                    .product::<f64>()
            })
            .collect();
        Ok(LagrangeBasis { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values of every basis function at `y`, written into `out`.
    pub fn eval_into(&self, y: f64, out: &mut [f64]) {
        if let Some(k) = self.nodes.iter().position(|&x| x == y) {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[k] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for (j, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let t = w / (y - x);
            out[j] = t;
            denom += t;
        }
        out.iter_mut().for_each(|v| *v /= denom);
    }

    pub fn eval_all(&self, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(y, &mut out);
        out
    }

    pub fn eval(&self, j: usize, y: f64) -> f64 {
        self.eval_all(y)[j]
    }
}

/// `l_j(y)` for the Lagrange basis on `nodes`.
pub fn lagrange_eval(nodes: &[f64], j: usize, y: f64) -> Result<f64> {
    if j >= nodes.len() {
        return Err(contract(format!("basis index {j} out of range for {} nodes", nodes.len())));
    }
    Ok(LagrangeBasis::new(nodes.to_vec())?.eval(j, y))
}

/// `∫ l_i^A(y) l_j^B(y) dπ(y)` computed exactly with Gauss–Legendre.
pub fn lagrange_mass_1d(nodes_a: &[f64], i: usize, nodes_b: &[f64], j: usize) -> Result<f64> {
    let a = LagrangeBasis::new(nodes_a.to_vec())?;
    let b = LagrangeBasis::new(nodes_b.to_vec())?;
    if i >= a.len() || j >= b.len() {
        return Err(contract("basis index out of range"));
    }
    let (x, w) = gauss_legendre((a.len() + b.len()).div_ceil(2));
    Ok(x.iter().zip(&w).map(|(&y, &wt)| wt * a.eval(i, y) * b.eval(j, y)).sum())
}

/// Level-`k` Lagrange basis together with its level `k-1` predecessor.
///
/// The *detail functions* `d_j = l_j^{(k)} - l_j^{(k-1)}` (the second term
/// only for ordinals present on level `k-1`) span the range of the 1D
/// hierarchical surplus operator: `Δ^{(k)} v = Σ_j v(x_j) d_j`.
#[derive(Debug)]
pub struct LevelBasis {
    pub family: NodeFamily,
    pub level: u32,
    pub current: LagrangeBasis,
    pub previous: Option<LagrangeBasis>,
}

impl LevelBasis {
    fn new(family: NodeFamily, level: u32) -> Self {
        assert!(level >= 1);
        let n = growth(family, level);
        let nodes = family.nested_nodes(n);
        let current = LagrangeBasis::new(nodes.clone()).expect("nested nodes are distinct");
        let pn = growth(family, level - 1);
        let previous = (pn > 0).then(|| LagrangeBasis::new(nodes[..pn].to_vec()).unwrap());
        LevelBasis { family, level, current, previous }
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    /// Detail functions `d_j(y)` for every ordinal `j` on this level.
    pub fn detail_into(&self, y: f64, out: &mut [f64]) {
        self.current.eval_into(y, out);
        if let Some(p) = &self.previous {
            let mut tmp = vec![0.0; p.len()];
            p.eval_into(y, &mut tmp);
            for (o, t) in out.iter_mut().zip(tmp) {
                *o -= t;
            }
        }
    }

    pub fn detail_all(&self, y: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.detail_into(y, &mut out);
        out
    }
}

/// Row-major `∫ d_i^{(ka)} d_j^{(kb)} dπ` for detail functions of two levels, cached.
pub fn detail_mass(family: NodeFamily, ka: u32, kb: u32) -> Arc<Vec<f64>> {
    type Key = (NodeFamily, u32, u32);
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.lock().unwrap().get(&(family, ka, kb)) {
        return m.clone();
    }
    let a = family.level_basis(ka);
    let b = family.level_basis(kb);
    let (na, nb) = (a.len(), b.len());
    let (x, w) = gauss_legendre((na + nb).div_ceil(2));
    let mut m = vec![0.0; na * nb];
    let mut da = vec![0.0; na];
    let mut db = vec![0.0; nb];
    for (&y, &wt) in x.iter().zip(&w) {
        a.detail_into(y, &mut da);
        b.detail_into(y, &mut db);
        for i in 0..na {
            let s = wt * da[i];
            for j in 0..nb {
                m[i * nb + j] += s * db[j];
            }
        }
    }
    let m = Arc::new(m);
    cache.lock().unwrap().entry((family, ka, kb)).or_insert(m).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn growth_values() {
        assert_eq!(growth(NodeFamily::Leja, 4), 4);
        assert_eq!(growth(NodeFamily::ClenshawCurtis, 0), 0);
        assert_eq!(growth(NodeFamily::ClenshawCurtis, 1), 1);
        assert_eq!(growth(NodeFamily::ClenshawCurtis, 2), 3);
        assert_eq!(growth(NodeFamily::ClenshawCurtis, 3), 5);
        for f in [NodeFamily::Leja, NodeFamily::ClenshawCurtis] {
            for i in 0..8 {
                assert!(growth(f, i + 1) > growth(f, i));
            }
        }
    }

    #[test]
    fn cc_examples() {
        assert_eq!(cc_nodes(1).unwrap(), vec![0.0]);
        assert_eq!(cc_nodes(3).unwrap(), vec![-1.0, 0.0, 1.0]);
        let five = cc_nodes(5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in five.iter().zip([-1.0, -h, 0.0, h, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert!(cc_nodes(4).is_err());
        assert!(cc_nodes(2).is_err());
    }

    #[test]
    fn cc_nested_order_matches_levels() {
        for level in 1..7 {
            let n = growth(NodeFamily::ClenshawCurtis, level);
            let mut nested = cc_nested(n);
            nested.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let sorted = cc_nodes(n).unwrap();
            for (a, b) in nested.iter().zip(&sorted) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
            }
        }
    }

    /// Independent Leja oracle: brute-force scan on a 10^6-point grid.
    fn brute_leja(n: usize) -> Vec<f64> {
        let mut seq = vec![0.0];
        let grid = 1_000_000;
        let ys: Vec<f64> = (0..=grid).map(|k| -1.0 + 2.0 * k as f64 / grid as f64).collect();
        while seq.len() < n {
            let v: Vec<f64> = ys.iter().map(|y| seq.iter().map(|x: &f64| (y - x).abs()).product()).collect();
            let top = v.iter().cloned().fold(f64::MIN, f64::max);
            // grid local maxima within rounding of the top value are ties; keep the largest y
            let pick = (0..=grid)
                .rev()
                .find(|&k| {
                    let left = if k > 0 { v[k - 1] } else { f64::MIN };
                    let right = if k < grid { v[k + 1] } else { f64::MIN };
                    v[k] >= left && v[k] >= right && v[k] >= top * (1.0 - 1e-9)
                })
                .unwrap();
            seq.push(ys[pick]);
        }
        seq
    }

    #[test]
    fn leja_examples() {
        assert_eq!(leja_nodes(1), vec![0.0]);
        assert_eq!(leja_nodes(3), vec![0.0, 1.0, -1.0]);
        let four = leja_nodes(4);
        assert_abs_diff_eq!(four[3], 1.0 / 3f64.sqrt(), epsilon = 1e-6);
        let brute = brute_leja(6);
        for (a, b) in leja_nodes(6).iter().zip(&brute) {
            assert_abs_diff_eq!(*a, *b, epsilon = 2e-6);
        }
    }

    #[test]
    fn nestedness() {
        for f in [NodeFamily::Leja, NodeFamily::ClenshawCurtis] {
            for level in 1..7 {
                let a = f.nested_nodes(growth(f, level));
                let b = f.nested_nodes(growth(f, level + 1));
                for x in &a {
                    assert!(b.iter().any(|y| (x - y).abs() <= 1e-14));
                }
                assert!(b.iter().all(|y| y.abs() <= 1.0));
            }
        }
    }

    #[test]
    fn gauss_legendre_examples() {
        let (x, w) = gauss_legendre(1);
        assert_eq!((x, w), (vec![0.0], vec![1.0]));
        let (x, w) = gauss_legendre(2);
        assert_abs_diff_eq!(x[0], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..40 {
            let (x, w) = gauss_legendre(n);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
            for k in 0..=(2 * n - 1) {
                let q: f64 = x.iter().zip(&w).map(|(y, wt)| wt * y.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) };
                assert_abs_diff_eq!(q, exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn lagrange_examples() {
        assert_eq!(lagrange_eval(&[0.0], 0, 0.7).unwrap(), 1.0);
        assert_abs_diff_eq!(lagrange_eval(&[-1.0, 0.0, 1.0], 1, 0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(lagrange_eval(&[-1.0, 0.0, 1.0], 0, -1.0).unwrap(), 1.0);
        assert!(lagrange_eval(&[0.0, 0.0], 0, 0.3).is_err());
    }

    #[test]
    fn partition_of_unity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for f in [NodeFamily::Leja, NodeFamily::ClenshawCurtis] {
            let basis = LagrangeBasis::new(f.nested_nodes(growth(f, 5))).unwrap();
            for _ in 0..100 {
                let y: f64 = rng.gen_range(-1.0..1.0);
                assert_abs_diff_eq!(basis.eval_all(y).iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mass_examples() {
        assert_abs_diff_eq!(lagrange_mass_1d(&[0.0], 0, &[0.0], 0).unwrap(), 1.0, epsilon = 1e-15);
        let n3 = [-1.0, 0.0, 1.0];
        assert_abs_diff_eq!(lagrange_mass_1d(&n3, 1, &n3, 1).unwrap(), 8.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lagrange_mass_1d(&[0.0], 0, &n3, 1).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn detail_functions_vanish_on_previous_nodes() {
        for f in [NodeFamily::Leja, NodeFamily::ClenshawCurtis] {
            for level in 2..6 {
                let b = f.level_basis(level);
                let prev = growth(f, level - 1);
                for x in &b.current.nodes()[..prev] {
                    for d in b.detail_all(*x) {
                        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-13);
                    }
                }
            }
        }
    }
}
