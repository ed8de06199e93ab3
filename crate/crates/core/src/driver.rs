//! The adaptive loop: solve, estimate, mark, refine.
//!
//! Each iteration either refines the mesh (spatial step) or enlarges the
//! index set (parametric step), never both. Solutions are cached per
//! collocation point: current-mesh and fine-mesh samples live until the mesh
//! changes, initial-mesh samples live for the whole run.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::estimation::{
    grid_gram, local_indicators, parametric_analysis, spatial_estimate, weighted_sums, ParametricAnalysis, SampleBank,
    SpatialIndicators,
};
use crate::fem::{FeFunction, FeSpace, LinearSolver};
use crate::index_set::{IndexSet, MultiIndex};
use crate::mesh::{Edge, SimplexMesh};
use crate::nodes::NodeFamily;
use crate::problems::ParametricProblem;
use crate::sparse_grid::{PointKey, SparseGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinementKind {
    Spatial,
    Parametric,
    /// The tolerance was met; nothing was refined.
    Final,
}

impl fmt::Display for RefinementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RefinementKind::Spatial => "spatial",
            RefinementKind::Parametric => "parametric",
            RefinementKind::Final => "final",
        })
    }
}

impl std::str::FromStr for RefinementKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(RefinementKind::Spatial),
            "parametric" => Ok(RefinementKind::Parametric),
            "final" => Ok(RefinementKind::Final),
            _ => Err(Error::Parse(format!("unknown refinement type '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub family: NodeFamily,
    pub theta_x: f64,
    pub theta_y: f64,
    pub vartheta: f64,
    pub tolerance: f64,
    /// Estimates `μ`, `τ` are computed when `iteration % estimate_period == 0`.
    pub estimate_period: usize,
    pub max_iterations: usize,
    #[serde(skip)]
    pub solver: LinearSolver,
}

impl DriverConfig {
    pub fn new(family: NodeFamily, tolerance: f64) -> Self {
        DriverConfig {
            family,
            theta_x: 0.3,
            theta_y: 0.3,
            vartheta: 1.0,
            tolerance,
            estimate_period: 1,
            max_iterations: 200,
            solver: LinearSolver::Cholesky,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v) in [("theta_x", self.theta_x), ("theta_y", self.theta_y)] {
            if !(v > 0.0 && v <= 1.0) {
                bad.push(format!("{name} must lie in (0, 1], got {v}"));
            }
        }
        if !(self.vartheta > 0.0 && self.vartheta.is_finite()) {
            bad.push(format!("vartheta must be positive, got {}", self.vartheta));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            bad.push(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.estimate_period == 0 {
            bad.push("estimate_period must be at least 1".into());
        }
        if self.max_iterations == 0 {
            bad.push("max_iterations must be at least 1".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

/// One row of the convergence history. `mu`, `tau` and `eta` are NaN on
/// iterations without estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "type")]
    pub kind: RefinementKind,
    /// Collocation points times interior vertices.
    pub dof: usize,
    /// Collocation points times all vertices.
    pub dof_total_vertices: usize,
    pub mu_bar: f64,
    pub tau_bar: f64,
    pub mu: f64,
    pub tau: f64,
    pub eta: f64,
    pub n_colpts: usize,
    pub n_triangles: usize,
    pub wall_ms: f64,
}

/// Indices `k` of a minimal-cardinality set with `Σ_{k∈M} v_k ≥ θ Σ_k v_k`.
///
/// Largest values come first; equal values keep their input order, so the
/// caller's ordering acts as the tie-break.
pub fn doerfler_select(values: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    // summing in the same order as the accumulation makes θ = 1 exact
    let total: f64 = order.iter().map(|&k| values[k]).sum();
    let target = theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for k in order {
        if acc >= target {
            break;
        }
        acc += values[k];
        out.push(k);
    }
    out
}

/// Spatial marking on squared indicators.
pub fn doerfler_spatial(values_sq: &[f64], theta_x: f64) -> Vec<usize> {
    doerfler_select(values_sq, theta_x)
}

/// Parametric marking on plain indicators.
pub fn doerfler_parametric(values: &[f64], theta_y: f64) -> Vec<usize> {
    doerfler_select(values, theta_y)
}

/// Smallest `|ν|_1`, then lexicographically first.
pub fn select_nu_star<'a>(candidates: impl IntoIterator<Item = &'a MultiIndex>) -> Option<MultiIndex> {
    candidates.into_iter().min_by(|a, b| a.norm1().cmp(&b.norm1()).then_with(|| a.cmp(b))).cloned()
}

pub fn choose_refinement(mu_bar: f64, tau_bar: f64, vartheta: f64) -> RefinementKind {
    if mu_bar >= vartheta * tau_bar {
        RefinementKind::Spatial
    } else {
        RefinementKind::Parametric
    }
}

/// Solve counters over a whole run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveAudit {
    pub current: usize,
    pub fine: usize,
    pub coarse: usize,
    #[serde(skip)]
    pub coarse_per_point: HashMap<PointKey, u32>,
}

impl SolveAudit {
    /// Largest number of initial-mesh solves at one point.
    pub fn max_coarse_repeats(&self) -> u32 {
        self.coarse_per_point.values().copied().max().unwrap_or(0)
    }
}

/// Everything the marking step saw, so it can be replayed independently.
#[derive(Clone, Debug)]
pub struct StepDiagnostics {
    pub grid_keys: Vec<PointKey>,
    pub spatial: SpatialIndicators,
    pub lambda_diag: Vec<f64>,
    pub parametric: ParametricAnalysis,
    /// Per point, positions into `spatial.vertices` that were marked.
    pub marked_per_point: Vec<Vec<usize>>,
    pub marked_edges: Vec<Edge>,
    pub marked_indices: Vec<MultiIndex>,
    pub nu_star: Option<MultiIndex>,
    pub estimated: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub record: IterationRecord,
    pub diagnostics: StepDiagnostics,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    Failed,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub error: Option<String>,
}

pub struct AdaptiveState {
    problem: Arc<dyn ParametricProblem>,
    config: DriverConfig,
    iteration: usize,
    mesh: Arc<SimplexMesh>,
    space: Arc<FeSpace>,
    fine_space: Option<Arc<FeSpace>>,
    index_set: IndexSet,
    current: HashMap<PointKey, FeFunction>,
    fine: HashMap<PointKey, Vec<f64>>,
    local: HashMap<PointKey, Vec<f64>>,
    coarse: SampleBank,
    audit: SolveAudit,
}

impl fmt::Debug for AdaptiveState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptiveState")
            .field("problem", &self.problem.name())
            .field("iteration", &self.iteration)
            .field("triangles", &self.mesh.n_triangles())
            .field("index_set", &self.index_set)
            .finish_non_exhaustive()
    }
}

impl AdaptiveState {
    pub fn new(problem: Arc<dyn ParametricProblem>, config: DriverConfig) -> Result<Self> {
        config.validate()?;
        let mesh = Arc::new(problem.initial_mesh());
        let space = Arc::new(FeSpace::new(mesh.clone()));
        let index_set = IndexSet::root(problem.dim());
        Ok(AdaptiveState {
            coarse: SampleBank::new(space.clone()),
            problem,
            config,
            iteration: 0,
            mesh,
            space,
            fine_space: None,
            index_set,
            current: HashMap::new(),
            fine: HashMap::new(),
            local: HashMap::new(),
            audit: SolveAudit::default(),
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn mesh(&self) -> &Arc<SimplexMesh> {
        &self.mesh
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn config(&self) -> &DriverConfig {
        &self.config
    }

    pub fn problem(&self) -> &Arc<dyn ParametricProblem> {
        &self.problem
    }

    pub fn audit(&self) -> &SolveAudit {
        &self.audit
    }

    pub fn grid(&self) -> SparseGrid {
        SparseGrid::new(&self.index_set, self.config.family)
    }

    /// Current-mesh solutions at the points of the current grid.
    pub fn current_solutions(&self) -> Vec<Option<&FeFunction>> {
        self.grid().keys().iter().map(|k| self.current.get(k)).collect()
    }

    fn fine_space(&mut self) -> Arc<FeSpace> {
        self.fine_space.get_or_insert_with(|| Arc::new(FeSpace::new(Arc::new(self.mesh.uniform_refine())))).clone()
    }

    fn sample_coefficient(&self, y: &[f64]) -> impl Fn(crate::mesh::Point) -> f64 + '_ {
        let y = y.to_vec();
        move |x| self.problem.coefficient(x, &y)
    }

    fn solve_current(&mut self, grid: &SparseGrid) -> Result<()> {
        for (p, key) in grid.keys().iter().enumerate() {
            if self.current.contains_key(key) {
                continue;
            }
            let y = grid.coords(p);
            let sys = self.space.assemble(&self.sample_coefficient(&y), &|x| self.problem.forcing(x))?;
            let u = sys.solve(self.config.solver)?;
            self.audit.current += 1;
            self.current.insert(key.clone(), u);
        }
        Ok(())
    }

    fn spatial_pass(&mut self, grid: &SparseGrid, need_fine: bool) -> Result<SpatialIndicators> {
        let fine = self.fine_space();
        let vertices = self.mesh.new_interior_vertices();
        let mut local = Vec::with_capacity(grid.len());
        for (p, key) in grid.keys().iter().enumerate() {
            let have_local = self.local.contains_key(key);
            let have_fine = !need_fine || self.fine.contains_key(key);
            if !(have_local && have_fine) {
                let y = grid.coords(p);
                let sys = fine.assemble(&self.sample_coefficient(&y), &|x| self.problem.forcing(x))?;
                if !have_local {
                    let v = local_indicators(&fine, &sys, &vertices, &self.current[key])?;
                    self.local.insert(key.clone(), v);
                }
                if !have_fine {
                    let uh = sys.solve(self.config.solver)?;
                    self.audit.fine += 1;
                    self.fine.insert(key.clone(), uh.values);
                }
            }
            local.push(self.local[key].clone());
        }
        Ok(SpatialIndicators::new(vertices, local))
    }

    fn solve_coarse(&mut self, enriched: &SparseGrid) -> Result<()> {
        let space = self.coarse.space().clone();
        for (p, key) in enriched.keys().iter().enumerate() {
            if self.coarse.contains(key) {
                continue;
            }
            let y = enriched.coords(p);
            let sys = space.assemble(&self.sample_coefficient(&y), &|x| self.problem.forcing(x))?;
            let u = sys.solve(self.config.solver)?;
            self.audit.coarse += 1;
            *self.audit.coarse_per_point.entry(key.clone()).or_default() += 1;
            self.coarse.insert(key.clone(), u.values)?;
        }
        Ok(())
    }

    /// Margin indicators recomputed from scratch with new initial-mesh solves,
    /// bypassing every cache.
    pub fn fresh_parametric_analysis(&self) -> Result<ParametricAnalysis> {
        let space = Arc::new(FeSpace::new(Arc::new(self.problem.initial_mesh())));
        let mut bank = SampleBank::new(space.clone());
        let enriched = SparseGrid::new(&self.index_set.with_margin(), self.config.family);
        for (p, key) in enriched.keys().iter().enumerate() {
            let y = enriched.coords(p);
            let sys = space.assemble(&self.sample_coefficient(&y), &|x| self.problem.forcing(x))?;
            bank.insert(key.clone(), sys.solve(self.config.solver)?.values)?;
        }
        parametric_analysis(&self.index_set, self.config.family, &bank)
    }

    /// One pass of solve, estimate, mark and refine.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let started = Instant::now();
        let family = self.config.family;
        let estimated = self.iteration.is_multiple_of(self.config.estimate_period);
        let grid = self.grid();

        self.solve_current(&grid)?;
        let spatial = self.spatial_pass(&grid, estimated)?;

        let enriched = SparseGrid::new(&self.index_set.with_margin(), family);
        self.solve_coarse(&enriched)?;
        let parametric = parametric_analysis(&self.index_set, family, &self.coarse)?;

        let lambda = grid_gram(&grid)?;
        let n = grid.len();
        let lambda_diag: Vec<f64> = (0..n).map(|p| lambda[p * n + p]).collect();
        let (mu_bar, tau_bar) = weighted_sums(&spatial, &parametric.indicators, &lambda_diag);

        let (mu, tau) = if estimated {
            let fine = self.fine_space();
            let fine_samples: Vec<Vec<f64>> = grid.keys().iter().map(|k| self.fine[k].clone()).collect();
            let samples: Vec<FeFunction> = grid.keys().iter().map(|k| self.current[k].clone()).collect();
            (spatial_estimate(&lambda, &fine, &fine_samples, &samples)?, parametric.estimate)
        } else {
            (f64::NAN, f64::NAN)
        };
        let eta = mu + tau;

        let mut record = IterationRecord {
            iter: self.iteration,
            kind: RefinementKind::Final,
            dof: n * self.mesh.n_interior(),
            dof_total_vertices: n * self.mesh.n_vertices(),
            mu_bar,
            tau_bar,
            mu,
            tau,
            eta,
            n_colpts: n,
            n_triangles: self.mesh.n_triangles(),
            wall_ms: 0.0,
        };
        let mut diagnostics = StepDiagnostics {
            grid_keys: grid.keys().to_vec(),
            spatial,
            lambda_diag,
            parametric,
            marked_per_point: Vec::new(),
            marked_edges: Vec::new(),
            marked_indices: Vec::new(),
            nu_star: None,
            estimated,
        };

        if estimated && eta < self.config.tolerance {
            record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
            return Ok(StepOutcome { record, diagnostics, converged: true });
        }

        record.kind = choose_refinement(mu_bar, tau_bar, self.config.vartheta);
        match record.kind {
            RefinementKind::Spatial => {
                let mut edges = BTreeSet::new();
                for local in &diagnostics.spatial.local {
                    let sq: Vec<f64> = local.iter().map(|v| v * v).collect();
                    let marked = doerfler_spatial(&sq, self.config.theta_x);
                    edges.extend(marked.iter().map(|&k| diagnostics.spatial.vertices[k].edge));
                    diagnostics.marked_per_point.push(marked);
                }
                if edges.is_empty() {
                    return Err(contract("spatial refinement selected but no vertex was marked"));
                }
                diagnostics.marked_edges = edges.into_iter().collect();
                self.mesh = Arc::new(self.mesh.refine_with_marked(&diagnostics.marked_edges)?);
                self.space = Arc::new(FeSpace::new(self.mesh.clone()));
                self.fine_space = None;
                self.current.clear();
                self.fine.clear();
                self.local.clear();
            }
            RefinementKind::Parametric => {
                let ind = &diagnostics.parametric.indicators;
                let marked = doerfler_parametric(&ind.values, self.config.theta_y);
                let marked_indices: Vec<MultiIndex> = marked.iter().map(|&k| ind.margin[k].clone()).collect();
                if marked_indices.is_empty() {
                    return Err(contract("parametric enrichment selected but no index was marked"));
                }
                let rest: Vec<&MultiIndex> = ind.margin.iter().filter(|nu| !marked_indices.contains(nu)).collect();
                let nu_star = select_nu_star(rest);
                let mut added = marked_indices.clone();
                added.extend(nu_star.iter().cloned());
                added.sort();
                self.index_set = self.index_set.enrich(&added)?;
                diagnostics.marked_indices = marked_indices;
                diagnostics.nu_star = nu_star;
            }
            RefinementKind::Final => unreachable!("choose_refinement never stops"),
        }
        self.iteration += 1;
        record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(StepOutcome { record, diagnostics, converged: false })
    }

    /// Iterate until `μ + τ < tolerance` or the iteration cap.
    pub fn run(&mut self) -> RunOutcome {
        self.run_with(|_, _| {})
    }

    /// As [`run`](Self::run), calling `observe` after every step.
    pub fn run_with(&mut self, mut observe: impl FnMut(&AdaptiveState, &StepOutcome)) -> RunOutcome {
        let mut records = Vec::new();
        loop {
            if records.len() >= self.config.max_iterations {
                return RunOutcome { records, status: RunStatus::MaxIterations, error: None };
            }
            match self.step() {
                Ok(out) => {
                    observe(self, &out);
                    records.push(out.record);
                    if out.converged {
                        return RunOutcome { records, status: RunStatus::Converged, error: None };
                    }
                }
                Err(e) => return RunOutcome { records, status: RunStatus::Failed, error: Some(e.to_string()) },
            }
        }
    }
}

/// Convenience wrapper: build a state and run it.
pub fn run(problem: Arc<dyn ParametricProblem>, config: DriverConfig) -> Result<RunOutcome> {
    Ok(AdaptiveState::new(problem, config)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Point;

    fn mi(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec()).unwrap()
    }

    #[test]
    fn doerfler_examples() {
        assert_eq!(doerfler_spatial(&[0.25, 0.09, 0.04], 0.3), vec![0]);
        assert_eq!(doerfler_spatial(&[0.25, 0.0, 0.09, 0.04], 1.0), vec![0, 2, 3]);
        assert_eq!(doerfler_spatial(&[0.1; 4], 0.5).len(), 2);
        assert_eq!(doerfler_parametric(&[0.5, 0.3, 0.2], 0.3), vec![0]);
        assert_eq!(doerfler_parametric(&[0.5, 0.3, 0.2], 0.9), vec![0, 1, 2]);
        assert!(doerfler_parametric(&[0.0, 0.0], 0.3).is_empty());
        assert!(doerfler_parametric(&[], 0.3).is_empty());
        // ties keep input order
        assert_eq!(doerfler_parametric(&[0.2, 0.5, 0.5], 0.3), vec![1]);
    }

    #[test]
    fn nu_star_examples() {
        let c = [mi(&[3, 1]), mi(&[2, 2]), mi(&[1, 3])];
        assert_eq!(select_nu_star(&c), Some(mi(&[1, 3])));
        let c = [mi(&[2, 1]), mi(&[1, 3])];
        assert_eq!(select_nu_star(&c), Some(mi(&[2, 1])));
        assert_eq!(select_nu_star(&[]), None);
    }

    #[test]
    fn refinement_choice() {
        assert_eq!(choose_refinement(1.0, 0.5, 1.0), RefinementKind::Spatial);
        assert_eq!(choose_refinement(0.4, 0.5, 1.0), RefinementKind::Parametric);
        assert_eq!(choose_refinement(0.5, 0.5, 1.0), RefinementKind::Spatial);
    }

    #[test]
    fn config_validation() {
        let mut c = DriverConfig::new(NodeFamily::Leja, 1e-2);
        assert!(c.validate().is_ok());
        c.theta_x = 1.5;
        c.tolerance = 0.0;
        match c.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[derive(Debug)]
    struct Toy {
        forcing: f64,
        depends_on_y: bool,
    }

    impl ParametricProblem for Toy {
        fn name(&self) -> &str {
            "toy"
        }
        fn dim(&self) -> usize {
            2
        }
        fn coefficient(&self, x: Point, y: &[f64]) -> f64 {
            if self.depends_on_y {
                2.0 + 0.5 * y[0] * x[0] + 0.4 * y[1]
            } else {
                2.0
            }
        }
        fn forcing(&self, _x: Point) -> f64 {
            self.forcing
        }
        fn initial_mesh(&self) -> SimplexMesh {
            SimplexMesh::unit_square(4)
        }
        fn coefficient_bounds(&self) -> (f64, f64) {
            (1.1, 2.9)
        }
    }

    #[test]
    fn zero_forcing_stops_immediately() {
        let mut s = AdaptiveState::new(
            Arc::new(Toy { forcing: 0.0, depends_on_y: true }),
            DriverConfig::new(NodeFamily::Leja, 1e-3),
        )
        .unwrap();
        let out = s.run();
        assert_eq!(out.status, RunStatus::Converged);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].eta, 0.0);
    }

    #[test]
    fn deterministic_coefficient_only_refines_space() {
        let mut cfg = DriverConfig::new(NodeFamily::ClenshawCurtis, 1e-9);
        cfg.max_iterations = 4;
        let mut s = AdaptiveState::new(Arc::new(Toy { forcing: 1.0, depends_on_y: false }), cfg).unwrap();
        let out = s.run();
        assert_eq!(out.status, RunStatus::MaxIterations);
        assert!(out.records.iter().all(|r| r.kind == RefinementKind::Spatial && r.tau_bar < 1e-12));
        assert_eq!(s.audit().max_coarse_repeats(), 1);
    }

    #[test]
    fn huge_tolerance_gives_one_record() {
        let out =
            run(Arc::new(Toy { forcing: 1.0, depends_on_y: true }), DriverConfig::new(NodeFamily::Leja, 1e6)).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].kind, RefinementKind::Final);
    }

    #[test]
    fn parametric_steps_keep_mesh_and_monotonicity() {
        let mut cfg = DriverConfig::new(NodeFamily::Leja, 1e-9);
        cfg.max_iterations = 8;
        cfg.vartheta = 1e6; // push towards parametric steps
        let mut s = AdaptiveState::new(Arc::new(Toy { forcing: 1.0, depends_on_y: true }), cfg).unwrap();
        let mut ok = true;
        let mut prev_tri = s.mesh().n_triangles();
        let out = s.run_with(|st, o| {
            let indices: Vec<MultiIndex> = st.index_set().iter().cloned().collect();
            ok &= crate::index_set::is_monotone(&indices).unwrap();
            if o.record.kind == RefinementKind::Parametric {
                ok &= st.mesh().n_triangles() == prev_tri;
            }
            prev_tri = st.mesh().n_triangles();
        });
        assert!(ok);
        assert!(out.records.iter().any(|r| r.kind == RefinementKind::Parametric));
        assert_eq!(s.audit().max_coarse_repeats(), 1);
    }
}
