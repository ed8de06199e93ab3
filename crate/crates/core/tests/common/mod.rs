#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use scfem::index_set::{IndexSet, MultiIndex};
use scfem::mesh::{Point, SimplexMesh};
use scfem::nodes::{cc_nodes, lagrange_eval, leja_nodes, NodeFamily};

/// Grow a downward-closed set by adding random margin elements.
pub fn random_monotone_set(rng: &mut impl Rng, dim: usize, size: usize) -> IndexSet {
    let mut set = IndexSet::root(dim);
    while set.len() < size {
        let margin = set.reduced_margin();
        let pick = margin[rng.gen_range(0..margin.len())].clone();
        set = set.enrich(&[pick]).unwrap();
    }
    set
}

/// Node count on a level, written out independently of the library.
pub fn count(family: NodeFamily, level: u32) -> usize {
    match (family, level) {
        (_, 0) => 0,
        (NodeFamily::Leja, l) => l as usize,
        (NodeFamily::ClenshawCurtis, 1) => 1,
        (NodeFamily::ClenshawCurtis, l) => (1 << (l - 1)) + 1,
    }
}

pub fn node_set(family: NodeFamily, level: u32) -> Vec<f64> {
    let n = count(family, level);
    match family {
        NodeFamily::Leja => leja_nodes(n),
        NodeFamily::ClenshawCurtis => cc_nodes(n).unwrap(),
    }
}

/// Lookup key for a parameter point, robust to last-bit differences.
pub fn coord_key(y: &[f64]) -> Vec<i64> {
    y.iter().map(|v| (v * 1e10).round() as i64).collect()
}

/// Full tensor Lagrange interpolation `U^κ data` at `y`; zero if any level is 0.
pub fn tensor_interp(
    kappa: &[u32],
    family: NodeFamily,
    data: &HashMap<Vec<i64>, Vec<f64>>,
    len: usize,
    y: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if kappa.contains(&0) {
        return out;
    }
    let sets: Vec<Vec<f64>> = kappa.iter().map(|&k| node_set(family, k)).collect();
    let weights: Vec<Vec<f64>> =
        sets.iter().zip(y).map(|(s, &ym)| (0..s.len()).map(|j| lagrange_eval(s, j, ym).unwrap()).collect()).collect();
    let mut idx = vec![0usize; kappa.len()];
    loop {
        let x: Vec<f64> = idx.iter().zip(&sets).map(|(&j, s)| s[j]).collect();
        let w: f64 = idx.iter().zip(&weights).map(|(&j, w)| w[j]).product();
        let v = data.get(&coord_key(&x)).expect("datum at tensor node");
        out.iter_mut().zip(v).for_each(|(o, vi)| *o += w * vi);
        let mut m = 0;
        loop {
            if m == idx.len() {
                return out;
            }
            idx[m] += 1;
            if idx[m] < sets[m].len() {
                break;
            }
            idx[m] = 0;
            m += 1;
        }
    }
}

/// `Δ^ν data = Σ_{e ∈ {0,1}^M} (-1)^{|e|} U^{ν-e} data`.
pub fn detail_interp(
    nu: &MultiIndex,
    family: NodeFamily,
    data: &HashMap<Vec<i64>, Vec<f64>>,
    len: usize,
    y: &[f64],
) -> Vec<f64> {
    let m = nu.dim();
    let mut out = vec![0.0; len];
    for mask in 0..(1u32 << m) {
        let kappa: Vec<u32> = (0..m).map(|k| nu[k] - ((mask >> k) & 1)).collect();
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        let t = tensor_interp(&kappa, family, data, len, y);
        out.iter_mut().zip(&t).for_each(|(o, v)| *o += sign * v);
    }
    out
}

/// Sparse interpolant in combination form, `Σ_ν c_ν U^ν` with
/// `c_ν = Σ_{e ∈ {0,1}^M, ν+e ∈ I} (-1)^{|e|}`.
pub fn combination_interp(
    set: &IndexSet,
    family: NodeFamily,
    data: &HashMap<Vec<i64>, Vec<f64>>,
    len: usize,
    y: &[f64],
) -> Vec<f64> {
    let m = set.dim();
    let mut out = vec![0.0; len];
    for nu in set.iter() {
        let mut c = 0i32;
        for mask in 0..(1u32 << m) {
            let e: Vec<u32> = (0..m).map(|k| nu[k] + ((mask >> k) & 1)).collect();
            if set.contains(&MultiIndex::new(e).unwrap()) {
                c += if mask.count_ones() % 2 == 0 { 1 } else { -1 };
            }
        }
        if c != 0 {
            let t = tensor_interp(nu.entries(), family, data, len, y);
            out.iter_mut().zip(&t).for_each(|(o, v)| *o += c as f64 * v);
        }
    }
    out
}

/// Degree-5 seven-point rule on triangles, barycentric coordinates and weights.
pub const TRI7: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

/// Gradients of the barycentric coordinates and the area of triangle `t`.
pub fn p1_gradients(mesh: &SimplexMesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let tri = mesh.triangles()[t];
    let p: Vec<Point> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let g = |a: Point, b: Point| [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
    ([g(p[1], p[2]), g(p[2], p[0]), g(p[0], p[1])], 0.5 * det.abs())
}

/// `‖∇(u - u_h)‖_{L²}` with the seven-point rule on every element.
pub fn energy_error(mesh: &SimplexMesh, interior_values: &[f64], grad_u: impl Fn(Point) -> [f64; 2]) -> f64 {
    let full = mesh.to_full(interior_values);
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = p1_gradients(mesh, t);
        let mut gh = [0.0; 2];
        for k in 0..3 {
            gh[0] += full[tri[k]] * g[k][0];
            gh[1] += full[tri[k]] * g[k][1];
        }
        let p: Vec<Point> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
        for (bary, w) in TRI7 {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let ge = grad_u(x);
            s += w * area * ((ge[0] - gh[0]).powi(2) + (ge[1] - gh[1]).powi(2));
        }
    }
    s.sqrt()
}

/// Minimal subset size meeting `Σ_S v ≥ θ Σ v`, by enumerating all subsets.
pub fn brute_force_min_doerfler(values: &[f64], theta: f64) -> usize {
    let total: f64 = values.iter().sum();
    let n = values.len();
    let mut best = usize::MAX;
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| values[k]).sum();
        if s >= theta * total {
            best = best.min(mask.count_ones() as usize);
        }
    }
    best
}
