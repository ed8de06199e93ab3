//! Conforming triangulations refined by newest vertex bisection (NVB).
//!
//! Each triangle is stored as `[a, b, c]` in counter-clockwise order, where
//! `(a, b)` is the reference edge and `c` the newest vertex. Bisecting the
//! reference edge at `m` yields `[c, a, m]` and `[b, c, m]`.
//!
//! Vertices are only ever appended. A vertex created by refinement records
//! the edge it bisects, which gives nodal prolongation between any two
//! meshes of the same refinement chain.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{contract, Error, Result};

pub type Point = [f64; 2];
/// Edge key with the smaller vertex index first.
pub type Edge = (usize, usize);

fn edge(a: usize, b: usize) -> Edge {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn next_id() -> u64 {
    static COUNTER: AtomicU64 = AtomicU64::new(1);
    COUNTER.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Debug)]
pub struct SimplexMesh {
    id: u64,
    root: u64,
    generation: u32,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    parents: Vec<Option<Edge>>,
    dof_of_vertex: Vec<Option<usize>>,
    interior: Vec<usize>,
}

/// A vertex of the uniform refinement that is new and off the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewVertex {
    pub edge: Edge,
    /// Vertex index of this midpoint in [`SimplexMesh::uniform_refine`].
    pub fine_vertex: usize,
    pub point: Point,
}

fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn dist2(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
}

impl SimplexMesh {
    /// Build an initial mesh; orientation is made counter-clockwise and the
    /// reference edge is the longest edge (ties: lowest vertex-index pair).
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut tris = Vec::with_capacity(triangles.len());
        for t in triangles {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(contract(format!("triangle {t:?} references a missing vertex")));
            }
            let mut t = t;
            let area = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if area.abs() <= 1e-300 {
                return Err(contract(format!("degenerate triangle {t:?}")));
            }
            if area < 0.0 {
                t.swap(1, 2);
            }
            let rotations = [[t[0], t[1], t[2]], [t[1], t[2], t[0]], [t[2], t[0], t[1]]];
            let best = rotations
                .iter()
                .max_by(|x, y| {
                    let lx = dist2(vertices[x[0]], vertices[x[1]]);
                    let ly = dist2(vertices[y[0]], vertices[y[1]]);
                    lx.partial_cmp(&ly).unwrap().then_with(|| edge(y[0], y[1]).cmp(&edge(x[0], x[1])))
                })
                .unwrap();
            tris.push(*best);
        }
        let n = vertices.len();
        let boundary = boundary_flags(n, &tris);
        let root = next_id();
        Ok(Self::assemble(root, root, 0, vertices, tris, boundary, vec![None; n]))
    }

    fn assemble(
        id: u64,
        root: u64,
        generation: u32,
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        parents: Vec<Option<Edge>>,
    ) -> Self {
        let mut dof_of_vertex = vec![None; vertices.len()];
        let mut interior = Vec::new();
        for (v, &b) in boundary.iter().enumerate() {
            if !b {
                dof_of_vertex[v] = Some(interior.len());
                interior.push(v);
            }
        }
        SimplexMesh { id, root, generation, vertices, triangles, boundary, parents, dof_of_vertex, interior }
    }

    /// Uniform `n × n` partition of the unit square into `2 n²` right
    /// triangles, diagonals running bottom-left to top-right.
    pub fn unit_square(n: usize) -> Self {
        Self::structured(0.0, 0.0, 1.0 / n as f64, n, n, |_, _| true)
    }

    /// L-shaped domain `(-1,1)² \ (-1,0]²` with `per_unit` squares per unit length.
    pub fn l_shape(per_unit: usize) -> Self {
        let h = 1.0 / per_unit as f64;
        Self::structured(-1.0, -1.0, h, 2 * per_unit, 2 * per_unit, |i, j| !(i < per_unit && j < per_unit))
    }

    fn structured(x0: f64, y0: f64, h: f64, nx: usize, ny: usize, keep: impl Fn(usize, usize) -> bool) -> Self {
        let grid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut used = vec![false; (nx + 1) * (ny + 1)];
        let mut raw = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if !keep(i, j) {
                    continue;
                }
                let (v00, v10, v11, v01) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
                for v in [v00, v10, v11, v01] {
                    used[v] = true;
                }
                raw.push([v00, v10, v11]);
                raw.push([v00, v11, v01]);
            }
        }
        // number the used grid vertices row-major
        let mut id_of = vec![usize::MAX; used.len()];
        let mut vertices = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                if used[grid(i, j)] {
                    id_of[grid(i, j)] = vertices.len();
                    vertices.push([x0 + i as f64 * h, y0 + j as f64 * h]);
                }
            }
        }
        let triangles = raw.into_iter().map(|t| t.map(|v| id_of[v])).collect();
        Self::from_triangles(vertices, triangles).expect("structured mesh is valid")
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Interior vertex indices, ascending; position = degree of freedom.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn dof(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Edge -> number of incident triangles.
    pub fn edge_use(&self) -> HashMap<Edge, u8> {
        let mut uses = HashMap::with_capacity(self.triangles.len() * 2);
        for t in &self.triangles {
            for k in 0..3 {
                *uses.entry(edge(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        uses
    }

    /// All edges, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let set: BTreeSet<Edge> =
            self.triangles.iter().flat_map(|t| (0..3).map(move |k| edge(t[k], t[(k + 1) % 3]))).collect();
        set.into_iter().collect()
    }

    /// Every triangle bisected three times (four children each).
    pub fn uniform_refine(&self) -> SimplexMesh {
        let all: BTreeSet<Edge> = self.edges().into_iter().collect();
        self.bisect_closed(all)
    }

    /// Midpoints of interior edges, i.e. interior vertices of the uniform
    /// refinement that are absent from this mesh.
    pub fn new_interior_vertices(&self) -> Vec<NewVertex> {
        let uses = self.edge_use();
        let n = self.n_vertices();
        self.edges()
            .into_iter()
            .enumerate()
            .filter(|(_, e)| uses[e] == 2)
            .map(|(rank, e)| NewVertex { edge: e, fine_vertex: n + rank, point: self.midpoint(e) })
            .collect()
    }

    fn midpoint(&self, (a, b): Edge) -> Point {
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Coarsest NVB refinement containing the midpoint of every marked edge.
    ///
    /// Each marked vertex is identified by the interior edge it bisects;
    /// edges that are not interior edges of this mesh are rejected.
    pub fn refine_with_marked(&self, marked: &[Edge]) -> Result<SimplexMesh> {
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let uses = self.edge_use();
        let mut set = BTreeSet::new();
        for &(a, b) in marked {
            let e = edge(a, b);
            if uses.get(&e) != Some(&2) {
                return Err(contract(format!("marked vertex on edge {e:?} is not a new interior vertex")));
            }
            set.insert(e);
        }
        Ok(self.bisect_closed(self.closure(set)))
    }

    /// Extend the marked edge set until every triangle with a marked edge
    /// also has its reference edge marked.
    fn closure(&self, mut marked: BTreeSet<Edge>) -> BTreeSet<Edge> {
        let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                by_edge.entry(edge(t[k], t[(k + 1) % 3])).or_default().push(ti);
            }
        }
        let mut queue: Vec<Edge> = marked.iter().copied().collect();
        while let Some(e) = queue.pop() {
            for &ti in &by_edge[&e] {
                let t = self.triangles[ti];
                let r = edge(t[0], t[1]);
                if marked.insert(r) {
                    queue.push(r);
                }
            }
        }
        marked
    }

    fn bisect_closed(&self, marked: BTreeSet<Edge>) -> SimplexMesh {
        let n = self.n_vertices();
        let uses = self.edge_use();
        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut parents = self.parents.clone();
        let mut mid: HashMap<Edge, usize> = HashMap::with_capacity(marked.len());
        for (rank, &e) in marked.iter().enumerate() {
            mid.insert(e, n + rank);
            vertices.push(self.midpoint(e));
            boundary.push(uses[&e] == 1);
            parents.push(Some(e));
        }
        let mut triangles = Vec::with_capacity(self.triangles.len() + 2 * marked.len());
        for &t in &self.triangles {
            bisect(t, &marked, &mid, &mut triangles);
        }
        Self::assemble(next_id(), self.root, self.generation + 1, vertices, triangles, boundary, parents)
    }

    /// True when `fine` descends from `self` by NVB steps.
    pub fn is_ancestor_of(&self, fine: &SimplexMesh) -> bool {
        self.root == fine.root
            && fine.n_vertices() >= self.n_vertices()
            && fine.parents[..self.n_vertices()] == self.parents[..]
            && fine.vertices[..self.n_vertices()] == self.vertices[..]
    }

    /// Nodal interpolation of a coarse piecewise-linear function (interior
    /// values, zero on the boundary) onto a descendant mesh.
    pub fn prolongate(&self, fine: &SimplexMesh, coarse_values: &[f64]) -> Result<Vec<f64>> {
        if !self.is_ancestor_of(fine) {
            return Err(contract("meshes do not belong to the same refinement chain"));
        }
        if coarse_values.len() != self.n_interior() {
            return Err(Error::Dimension { expected: self.n_interior(), found: coarse_values.len() });
        }
        let mut full = self.to_full(coarse_values);
        full.resize(fine.n_vertices(), 0.0);
        for v in self.n_vertices()..fine.n_vertices() {
            let (a, b) = fine.parents[v].expect("refined vertices have parents");
            full[v] = 0.5 * (full[a] + full[b]);
        }
        Ok(fine.interior.iter().map(|&v| full[v]).collect())
    }

    /// Expand interior values to one value per vertex (zeros on the boundary).
    pub fn to_full(&self, interior_values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_vertices()];
        for (&v, &x) in self.interior.iter().zip(interior_values) {
            full[v] = x;
        }
        full
    }

    /// Value of a piecewise-linear function at an arbitrary point (brute-force search).
    pub fn eval_p1(&self, interior_values: &[f64], x: Point) -> Option<f64> {
        let full = self.to_full(interior_values);
        for t in &self.triangles {
            let [p, q, r] = [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]];
            let area = signed_area(p, q, r);
            let l0 = signed_area(x, q, r) / area;
            let l1 = signed_area(p, x, r) / area;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                return Some(l0 * full[t[0]] + l1 * full[t[1]] + l2 * full[t[2]]);
            }
        }
        None
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let o = self.vertices[t[k]];
                let p = self.vertices[t[(k + 1) % 3]];
                let q = self.vertices[t[(k + 2) % 3]];
                let (u, v) = ([p[0] - o[0], p[1] - o[1]], [q[0] - o[0], q[1] - o[1]]);
                let cos = (u[0] * v[0] + u[1] * v[1]) / (dist2(p, o).sqrt() * dist2(q, o).sqrt());
                best = best.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    /// Every interior edge is shared by exactly two triangles, every boundary
    /// edge by one, no vertex lies in the interior of another triangle's edge,
    /// and all areas are positive.
    pub fn is_conforming(&self) -> bool {
        if self.triangles.iter().enumerate().any(|(t, _)| self.area(t) <= 0.0) {
            return false;
        }
        let uses = self.edge_use();
        if uses.values().any(|&u| u > 2) {
            return false;
        }
        // hanging vertices: a refined vertex whose parent edge is still an edge
        if self.parents.iter().flatten().any(|e| uses.contains_key(e)) {
            return false;
        }
        // boundary edges must have both ends flagged as boundary
        uses.iter().filter(|(_, &u)| u == 1).all(|((a, b), _)| self.boundary[*a] && self.boundary[*b])
    }

    /// Hash of vertices, triangles and boundary flags.
    pub fn canonical_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in &self.vertices {
            p[0].to_bits().hash(&mut h);
            p[1].to_bits().hash(&mut h);
        }
        self.triangles.hash(&mut h);
        self.boundary.hash(&mut h);
        h.finish()
    }

    /// Plain-text export: a header line `<n_vertices> <n_triangles>`, then one
    /// `x y boundary_flag` line per vertex, then one `i j k` line per triangle
    /// (0-based, counter-clockwise, `(i, j)` = reference edge).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.n_vertices(), self.n_triangles()).unwrap();
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(s, "{} {} {}", p[0], p[1], u8::from(b)).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Read the format written by [`SimplexMesh::to_text`]. The result starts
    /// a new refinement chain.
    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("mesh file: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty input"))?;
        let mut it = header.split_whitespace();
        let nv: usize = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad header"))?;
        let nt: usize = it.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad header"))?;
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| bad("missing vertex line"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("vertex line needs 3 fields"));
            }
            let x: f64 = f[0].parse().map_err(|_| bad("bad coordinate"))?;
            let y: f64 = f[1].parse().map_err(|_| bad("bad coordinate"))?;
            vertices.push([x, y]);
            boundary.push(f[2] == "1");
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = lines.next().ok_or_else(|| bad("missing triangle line"))?;
            let f: Vec<usize> = line
                .split_whitespace()
                .map(|x| x.parse().map_err(|_| bad("bad vertex index")))
                .collect::<Result<_>>()?;
            if f.len() != 3 || f.iter().any(|&v| v >= nv) {
                return Err(bad("triangle line needs 3 valid indices"));
            }
            triangles.push([f[0], f[1], f[2]]);
        }
        let root = next_id();
        Ok(Self::assemble(root, root, 0, vertices, triangles, boundary, vec![None; nv]))
    }
}

fn boundary_flags(n: usize, tris: &[[usize; 3]]) -> Vec<bool> {
    let mut uses: HashMap<Edge, u8> = HashMap::new();
    for t in tris {
        for k in 0..3 {
            *uses.entry(edge(t[k], t[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    let mut flags = vec![false; n];
    for ((a, b), u) in uses {
        if u == 1 {
            flags[a] = true;
            flags[b] = true;
        }
    }
    flags
}

fn bisect(t: [usize; 3], marked: &BTreeSet<Edge>, mid: &HashMap<Edge, usize>, out: &mut Vec<[usize; 3]>) {
    let [a, b, c] = t;
    let r = edge(a, b);
    if !marked.contains(&r) {
        out.push(t);
        return;
    }
    let m = mid[&r];
    bisect([c, a, m], marked, mid, out);
    bisect([b, c, m], marked, mid, out);
}
