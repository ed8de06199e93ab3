//! The two model problems and checks of their structural hypotheses.

use std::fmt;
use std::sync::Arc;

use crate::error::{contract, Error, Result};
use crate::mesh::{Point, SimplexMesh};

/// `-∇·(a(·, y) ∇u) = f` in `D`, `u = 0` on `∂D`, with `y ∈ [-1, 1]^M`
/// distributed uniformly.
pub trait ParametricProblem: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn coefficient(&self, x: Point, y: &[f64]) -> f64;
    fn forcing(&self, x: Point) -> f64;
    fn initial_mesh(&self) -> SimplexMesh;
    /// Analytic `(a_min, a_max)` over `D × Γ`.
    fn coefficient_bounds(&self) -> (f64, f64);
}

/// `a(x, y) = a_0(x) + Σ_m a_m(x) y_m`.
pub trait AffineExpansion {
    fn dim(&self) -> usize;
    fn mean(&self, x: Point) -> f64;
    fn term(&self, m: usize, x: Point) -> f64;
    /// Bounding box `(lower-left, upper-right)` of the spatial domain.
    fn bounding_box(&self) -> (Point, Point);
    /// Extra points where the infimum may sit (e.g. corners of subdomains).
    fn special_points(&self) -> Vec<Point> {
        Vec::new()
    }
}

/// Half-open box `[lo, hi)` in each coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: Point,
    pub hi: Point,
}

impl Rect {
    pub fn contains(&self, x: Point) -> bool {
        x[0] >= self.lo[0] && x[0] < self.hi[0] && x[1] >= self.lo[1] && x[1] < self.hi[1]
    }

    pub fn corners(&self) -> [Point; 4] {
        [self.lo, [self.hi[0], self.lo[1]], self.hi, [self.lo[0], self.hi[1]]]
    }
}

pub const COOKIE_OMEGA: [f64; 8] = [1.0, 0.8, 0.4, 0.2, 0.1, 0.05, 0.02, 0.01];

/// Piecewise constant "cookie" coefficient on the unit square: eight
/// inclusions `A_1..A_8` around a central source square `F`.
#[derive(Clone, Debug)]
pub struct CookieProblem {
    pub a0: f64,
    pub omega: Vec<f64>,
    pub inclusions: Vec<Rect>,
    pub source: Rect,
    pub source_value: f64,
    pub mesh_n: usize,
}

fn cell(col: usize, row: usize) -> Rect {
    let lo = [0.1, 0.4, 0.7];
    Rect { lo: [lo[col], lo[row]], hi: [lo[col] + 0.2, lo[row] + 0.2] }
}

impl CookieProblem {
    /// The full eight-parameter problem on the `8 × 8` initial mesh.
    pub fn new() -> Self {
        Self::with_dim(8).expect("8 parameters are available")
    }

    /// Keep only the first `m` inclusions random.
    pub fn with_dim(m: usize) -> Result<Self> {
        if m == 0 || m > 8 {
            return Err(contract(format!("cookie problem supports 1..=8 parameters, got {m}")));
        }
        // rows bottom to top: A1 A2 A3 / A4 F A5 / A6 A7 A8
        let all = [cell(0, 0), cell(1, 0), cell(2, 0), cell(0, 1), cell(2, 1), cell(0, 2), cell(1, 2), cell(2, 2)];
        Ok(CookieProblem {
            a0: 1.1,
            omega: COOKIE_OMEGA[..m].to_vec(),
            inclusions: all[..m].to_vec(),
            source: cell(1, 1),
            source_value: 100.0,
            mesh_n: 8,
        })
    }
}

impl Default for CookieProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl ParametricProblem for CookieProblem {
    fn name(&self) -> &str {
        "cookie"
    }

    fn dim(&self) -> usize {
        self.omega.len()
    }

    fn coefficient(&self, x: Point, y: &[f64]) -> f64 {
        let mut a = self.a0;
        for ((w, r), ym) in self.omega.iter().zip(&self.inclusions).zip(y) {
            if r.contains(x) {
                a += w * ym;
            }
        }
        a
    }

    fn forcing(&self, x: Point) -> f64 {
        if self.source.contains(x) {
            self.source_value
        } else {
            0.0
        }
    }

    fn initial_mesh(&self) -> SimplexMesh {
        SimplexMesh::unit_square(self.mesh_n)
    }

    fn coefficient_bounds(&self) -> (f64, f64) {
        let w = self.omega.iter().cloned().fold(0.0, f64::max);
        (self.a0 - w, self.a0 + w)
    }
}

impl AffineExpansion for CookieProblem {
    fn dim(&self) -> usize {
        self.omega.len()
    }

    fn mean(&self, _x: Point) -> f64 {
        self.a0
    }

    fn term(&self, m: usize, x: Point) -> f64 {
        if self.inclusions[m].contains(x) {
            self.omega[m]
        } else {
            0.0
        }
    }

    fn bounding_box(&self) -> (Point, Point) {
        ([0.0, 0.0], [1.0, 1.0])
    }

    fn special_points(&self) -> Vec<Point> {
        self.inclusions.iter().flat_map(Rect::corners).collect()
    }
}

pub const FOURIER_ALPHA_1: f64 = 0.498;
pub const FOURIER_ALPHA_BAR: f64 = 0.547;

/// Largest `k` with `k (k + 1) / 2 ≤ m`.
fn triangular_root(m: usize) -> usize {
    let mut k = 0;
    while (k + 1) * (k + 2) / 2 <= m {
        k += 1;
    }
    k
}

/// Frequencies `(β_1(m), β_2(m))` of the `m`-th Fourier mode (1-based).
pub fn fourier_frequencies(m: usize) -> (usize, usize) {
    let k = triangular_root(m);
    let b1 = m - k * (k + 1) / 2;
    (b1, k - b1)
}

/// Amplitude `α_m` of the `m`-th mode (1-based).
pub fn fourier_amplitude(m: usize) -> f64 {
    if m == 1 {
        FOURIER_ALPHA_1
    } else {
        FOURIER_ALPHA_BAR / m as f64
    }
}

/// `a = exp(h)` with `h(x, y) = 1 + Σ_m α_m cos(2π β_1 x_1) cos(2π β_2 x_2) y_m`
/// on the L-shaped domain, `f = 1`.
#[derive(Clone, Debug)]
pub struct FourierProblem {
    pub h0: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<(usize, usize)>,
    pub per_unit: usize,
}

impl FourierProblem {
    pub fn new(m: usize) -> Result<Self> {
        Self::with_mesh(m, 4)
    }

    pub fn with_mesh(m: usize, per_unit: usize) -> Result<Self> {
        if m == 0 {
            return Err(contract("Fourier problem needs at least one parameter"));
        }
        if per_unit == 0 {
            return Err(contract("L-shape mesh needs at least one square per unit"));
        }
        Ok(FourierProblem {
            h0: 1.0,
            alpha: (1..=m).map(fourier_amplitude).collect(),
            beta: (1..=m).map(fourier_frequencies).collect(),
            per_unit,
        })
    }

    pub fn exponent(&self, x: Point, y: &[f64]) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        let mut h = self.h0;
        for ((a, &(b1, b2)), ym) in self.alpha.iter().zip(&self.beta).zip(y) {
            h += a * (tau * b1 as f64 * x[0]).cos() * (tau * b2 as f64 * x[1]).cos() * ym;
        }
        h
    }
}

impl ParametricProblem for FourierProblem {
    fn name(&self) -> &str {
        "fourier"
    }

    fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn coefficient(&self, x: Point, y: &[f64]) -> f64 {
        self.exponent(x, y).exp()
    }

    fn forcing(&self, _x: Point) -> f64 {
        1.0
    }

    fn initial_mesh(&self) -> SimplexMesh {
        SimplexMesh::l_shape(self.per_unit)
    }

    fn coefficient_bounds(&self) -> (f64, f64) {
        let s: f64 = self.alpha.iter().sum();
        ((self.h0 - s).exp(), (self.h0 + s).exp())
    }
}

/// Build a problem from its CLI name.
pub fn problem_by_name(name: &str, m: Option<usize>) -> Result<Arc<dyn ParametricProblem>> {
    match name {
        "cookie" => Ok(Arc::new(CookieProblem::with_dim(m.unwrap_or(8))?)),
        "fourier" => Ok(Arc::new(FourierProblem::new(m.unwrap_or(4))?)),
        other => Err(Error::Config(vec![format!("unknown problem '{other}' (expected cookie or fourier)")])),
    }
}

/// `r = inf_x (a_0(x) - Σ_m |a_m(x)|)` over a `(n+1) × (n+1)` grid of the
/// bounding box plus the special points. Fails unless `r > 0`.
pub fn check_uniform_ellipticity(p: &dyn AffineExpansion, n: usize) -> Result<f64> {
    let (lo, hi) = p.bounding_box();
    let margin = |x: Point| p.mean(x) - (0..p.dim()).map(|m| p.term(m, x).abs()).sum::<f64>();
    let mut r = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let x = [lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64, lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64];
            r = r.min(margin(x));
        }
    }
    for x in p.special_points() {
        r = r.min(margin(x));
    }
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::Hypothesis(format!("a_0 - Σ|a_m| reaches {r}, not uniformly positive")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBoundReport {
    /// Largest admissible `δ_m = 1 / (2 α_m)`.
    pub delta: Vec<f64>,
    /// Multi-indices `k` checked.
    pub checked: usize,
    /// True when the bound holds for every `k` and every `δ_m > 1`.
    pub passed: bool,
}

/// Check `Π α_m^{k_m} ≤ (2δ)^{-k} k!` for all `0 < |k|_1 ≤ k_max`, where
/// `‖h_m‖_∞ ≤ α_m` and `k! = Π k_m!`.
pub fn check_derivative_bound(alpha: &[f64], k_max: u32) -> DerivativeBoundReport {
    let delta: Vec<f64> = alpha.iter().map(|a| 1.0 / (2.0 * a)).collect();
    let mut checked = 0;
    let mut holds = true;
    let mut k = vec![0u32; alpha.len()];
    // odometer over {0..k_max}^M, skipping |k|_1 outside (0, k_max]
    'outer: loop {
        let norm: u32 = k.iter().sum();
        if norm > 0 && norm <= k_max {
            checked += 1;
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for ((&km, &a), &d) in k.iter().zip(alpha).zip(&delta) {
                lhs += km as f64 * a.ln();
                rhs += -(km as f64) * (2.0 * d).ln() + (1..=km).map(|i| (i as f64).ln()).sum::<f64>();
            }
            if lhs > rhs + 1e-12 {
                holds = false;
            }
        }
        for km in k.iter_mut() {
            *km += 1;
            if *km <= k_max {
                continue 'outer;
            }
            *km = 0;
        }
        break;
    }
    let passed = holds && delta.iter().all(|&d| d > 1.0);
    DerivativeBoundReport { delta, checked, passed }
}

pub fn check_fourier_derivative_bound(p: &FourierProblem, k_max: u32) -> DerivativeBoundReport {
    check_derivative_bound(&p.alpha, k_max)
}
