//! Partially penalized IFE bilinear form, load vector, Dirichlet elimination and the
//! semilinear residual/Jacobian.
//!
//! The volume term runs over all elements (split quadrature on interface elements). The
//! consistency, adjoint-consistency and penalty terms run only over interior edges that
//! the interface crosses:
//!
//! ```text
//! a_h(v, w) = sum_T (beta grad v, grad w)_T
//!           - sum_e ({beta grad v . n_e}, [w])_e
//!           + eps sum_e ({beta grad w . n_e}, [v])_e
//!           + sum_e sigma0 / |e| ([v], [w])_e
//! ```

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{LevelSet, Point, ScalarFn, Side, Vector, VectorFn};
use crate::ife::FemSpace;
use crate::mesh::ElementClass;
use crate::quadrature::{quad_segment, quad_split, quad_triangle, QuadPoint};
use crate::solver::{solve, SolveStats, SolverOptions};
use crate::sparse::CsrMatrix;

/// Degree of exactness used for every volume integral.
pub const VOLUME_DEGREE: usize = 4;
/// Newton stops once the residual max-norm drops below this.
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITERATIONS: usize = 25;

/// Reaction term `s(u)` and its derivative.
#[derive(Clone)]
pub struct Nonlinearity {
    pub value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Nonlinearity {
    pub fn sine() -> Self {
        Nonlinearity {
            value: Arc::new(f64::sin),
            derivative: Arc::new(f64::cos),
        }
    }

    pub fn zero() -> Self {
        Nonlinearity {
            value: Arc::new(|_| 0.0),
            derivative: Arc::new(|_| 0.0),
        }
    }
}

/// Exact solution given piecewise per side.
#[derive(Clone)]
pub struct ExactSolution {
    pub minus: ScalarFn,
    pub plus: ScalarFn,
    pub grad_minus: VectorFn,
    pub grad_plus: VectorFn,
}

impl ExactSolution {
    pub fn value(&self, side: Side, p: Point) -> f64 {
        match side {
            Side::Minus => (self.minus)(p),
            Side::Plus => (self.plus)(p),
        }
    }

    pub fn grad(&self, side: Side, p: Point) -> Vector {
        match side {
            Side::Minus => (self.grad_minus)(p),
            Side::Plus => (self.grad_plus)(p),
        }
    }
}

/// An elliptic interface problem `-div(beta grad u) + s(u) = f` with Dirichlet data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub level_set: LevelSet,
    pub beta_minus: ScalarFn,
    pub beta_plus: ScalarFn,
    pub source_minus: ScalarFn,
    pub source_plus: ScalarFn,
    /// Flux jump `[beta du/dn]`; only the homogeneous case is supported.
    pub flux_jump: Option<ScalarFn>,
    pub dirichlet: ScalarFn,
    pub nonlinearity: Option<Nonlinearity>,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("nonlinear", &self.nonlinearity.is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    pub fn beta(&self, side: Side, p: Point) -> f64 {
        match side {
            Side::Minus => (self.beta_minus)(p),
            Side::Plus => (self.beta_plus)(p),
        }
    }

    pub fn source(&self, side: Side, p: Point) -> f64 {
        match side {
            Side::Minus => (self.source_minus)(p),
            Side::Plus => (self.source_plus)(p),
        }
    }

    pub fn exact(&self) -> Result<&ExactSolution> {
        self.exact.as_ref().ok_or(Error::MissingExactSolution)
    }

    /// Checks positivity of the coefficients at the mesh vertices and that the flux jump
    /// vanishes at every cut point.
    pub fn validate(&self, space: &FemSpace) -> Result<()> {
        let mesh = space.mesh();
        for p in &mesh.vertices {
            for side in Side::BOTH {
                let b = self.beta(side, *p);
                if !(b > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "beta{side} = {b} is not positive at ({}, {})",
                        p.x, p.y
                    )));
                }
            }
        }
        if let Some(g) = &self.flux_jump {
            let c = mesh.classification()?;
            for s in &c.splits {
                for z in s.cut_points {
                    if g(z) != 0.0 {
                        return Err(Error::NonzeroFluxJump);
                    }
                }
            }
        }
        Ok(())
    }
}

/// The three PPIFE variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// epsilon = -1
    Symmetric,
    /// epsilon = 0
    Incomplete,
    /// epsilon = +1
    Nonsymmetric,
}

impl Method {
    pub fn epsilon(self) -> f64 {
        match self {
            Method::Symmetric => -1.0,
            Method::Incomplete => 0.0,
            Method::Nonsymmetric => 1.0,
        }
    }

    /// sqrt(max beta) for the symmetric and incomplete forms, 1 for the nonsymmetric one.
    pub fn default_sigma0(self, beta_max: f64) -> f64 {
        match self {
            Method::Symmetric | Method::Incomplete => beta_max.sqrt(),
            Method::Nonsymmetric => 1.0,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Method::Symmetric => "sym",
            Method::Incomplete => "inc",
            Method::Nonsymmetric => "nonsym",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" => Ok(Method::Symmetric),
            "inc" => Ok(Method::Incomplete),
            "nonsym" => Ok(Method::Nonsymmetric),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method {s:?} (expected sym, inc or nonsym)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyConfig {
    pub epsilon: f64,
    pub sigma0: f64,
}

impl PenaltyConfig {
    pub fn new(epsilon: f64, sigma0: f64) -> Result<Self> {
        if !(sigma0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "penalty sigma0 must be positive, got {sigma0}"
            )));
        }
        Ok(PenaltyConfig { epsilon, sigma0 })
    }

    pub fn for_method(method: Method, beta_max: f64) -> Self {
        PenaltyConfig {
            epsilon: method.epsilon(),
            sigma0: method.default_sigma0(beta_max),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.epsilon == -1.0
    }
}

/// Geometry of an interface edge, split at its interface crossing.
#[derive(Clone, Debug)]
pub struct InterfaceEdge {
    pub edge: usize,
    /// (T_{e,1}, T_{e,2}) with T_{e,1} the smaller index.
    pub triangles: [usize; 2],
    /// Unit normal pointing from T_{e,1} to T_{e,2}.
    pub normal: Vector,
    pub length: f64,
    /// Sub-segments on either side of the crossing point.
    pub segments: [(Point, Point, Side); 2],
}

impl InterfaceEdge {
    pub fn quadrature(&self) -> impl Iterator<Item = (QuadPoint, Side)> + '_ {
        self.segments
            .iter()
            .flat_map(|&(a, b, side)| quad_segment(a, b).into_iter().map(move |q| (q, side)))
    }
}

pub fn interface_edges(space: &FemSpace) -> Result<Vec<InterfaceEdge>> {
    let mesh = space.mesh();
    let c = mesh.classification()?;
    Ok(mesh
        .interface_edges()
        .into_iter()
        .map(|e| {
            let edge = &mesh.edges[e];
            let [va, vb] = edge.vertices;
            let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
            let d = pb - pa;
            let length = d.norm();
            let mut normal = Vector::new(d.y, -d.x) / length;
            let t1 = edge.triangles[0];
            let opposite = mesh.triangles[t1]
                .iter()
                .copied()
                .find(|&v| v != va && v != vb)
                .expect("triangle has a vertex off the edge");
            if normal.dot(&(mesh.vertices[opposite] - pa)) > 0.0 {
                normal = -normal;
            }
            let z = c.edge_cut[e].expect("interface edge has a crossing");
            let side_of = |v: usize| Side::of_value(c.vertex_sign[v] as f64);
            InterfaceEdge {
                edge: e,
                triangles: edge.triangles,
                normal,
                length,
                segments: [(pa, z, side_of(va)), (z, pb, side_of(vb))],
            }
        })
        .collect())
}

/// Sparse system after strong Dirichlet elimination.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Constrained dofs and their values, in increasing dof order.
    pub dirichlet: Vec<(usize, f64)>,
    pub symmetric: bool,
}

impl AssembledSystem {
    pub fn is_constrained(&self) -> Vec<bool> {
        let mut c = vec![false; self.rhs.len()];
        for &(k, _) in &self.dirichlet {
            c[k] = true;
        }
        c
    }

    /// Vector holding the boundary values on constrained dofs and zero elsewhere.
    pub fn dirichlet_lift(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.rhs.len()];
        for &(k, g) in &self.dirichlet {
            x[k] = g;
        }
        x
    }

    pub fn write_coordinate(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        self.matrix.write_coordinate(out)
    }
}

/// Quadrature points of element `t` tagged with the side whose piece applies.
fn element_quadrature(space: &FemSpace, t: usize) -> Result<Vec<(QuadPoint, Side)>> {
    let mesh = space.mesh();
    Ok(match mesh.split(t) {
        Some(split) => {
            let [qm, qp] = quad_split(split, VOLUME_DEGREE)?;
            qm.into_iter()
                .map(|q| (q, Side::Minus))
                .chain(qp.into_iter().map(|q| (q, Side::Plus)))
                .collect()
        }
        None => {
            let side = space.element_class(t).regular_side().unwrap();
            quad_triangle(&mesh.triangle_points(t), VOLUME_DEGREE)?
                .into_iter()
                .map(|q| (q, side))
                .collect()
        }
    })
}

/// Raw (unconstrained) volume and edge contributions as triplets, plus the load vector.
fn assemble_raw(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
    include_edges: bool,
) -> Result<(Vec<(usize, usize, f64)>, Vec<f64>)> {
    let mesh = space.mesh();
    let n = space.num_dofs();

    let per_element: Vec<([(usize, usize, f64); 9], [(usize, f64); 3])> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| -> Result<_> {
            let dofs = space.dofs(t);
            let mut k = [[0.0; 3]; 3];
            let mut load = [0.0; 3];
            let quad = element_quadrature(space, t)?;
            let mut beta_integral = [0.0; 2];
            for (q, side) in &quad {
                beta_integral[side.index()] += q.weight * spec.beta(*side, q.point);
                let piece = space.piece(t, *side);
                let f = spec.source(*side, q.point);
                for i in 0..3 {
                    load[i] += q.weight * f * piece[i].eval(&q.point);
                }
            }
            for side in Side::BOTH {
                let bi = beta_integral[side.index()];
                if bi == 0.0 {
                    continue;
                }
                let piece = space.piece(t, side);
                for i in 0..3 {
                    for j in 0..3 {
                        k[i][j] += bi * piece[i].grad().dot(&piece[j].grad());
                    }
                }
            }
            let trip = std::array::from_fn(|m| {
                let (i, j) = (m / 3, m % 3);
                (dofs[i], dofs[j], k[i][j])
            });
            Ok((trip, std::array::from_fn(|i| (dofs[i], load[i]))))
        })
        .collect::<Result<_>>()?;

    let mut triplets =
        Vec::with_capacity(9 * per_element.len() + 16 * 8 * mesh.interface_elements().len());
    let mut rhs = vec![0.0; n];
    for (trip, load) in &per_element {
        triplets.extend_from_slice(trip);
        for &(i, v) in load {
            rhs[i] += v;
        }
    }

    if include_edges {
        let edges = interface_edges(space)?;
        let per_edge: Vec<Vec<(usize, usize, f64)>> = edges
            .par_iter()
            .map(|ie| edge_block(space, spec, cfg, ie))
            .collect();
        for block in per_edge {
            triplets.extend(block);
        }
    }
    Ok((triplets, rhs))
}

/// Local dofs touching an interface edge and their traces from both sides.
struct EdgeTrace {
    dofs: Vec<usize>,
}

impl EdgeTrace {
    fn new(space: &FemSpace, ie: &InterfaceEdge) -> Self {
        let mut dofs: Vec<usize> = Vec::with_capacity(4);
        for t in ie.triangles {
            for d in space.dofs(t) {
                if !dofs.contains(&d) {
                    dofs.push(d);
                }
            }
        }
        EdgeTrace { dofs }
    }

    /// (value, gradient) of each local dof restricted to triangle `t`, `side` piece.
    fn traces(&self, space: &FemSpace, t: usize, side: Side, p: &Point) -> Vec<(f64, Vector)> {
        let piece = space.piece(t, side);
        let tdofs = space.dofs(t);
        self.dofs
            .iter()
            .map(|d| match tdofs.iter().position(|x| x == d) {
                Some(i) => (piece[i].eval(p), piece[i].grad()),
                None => (0.0, Vector::zeros()),
            })
            .collect()
    }
}

fn edge_block(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
    ie: &InterfaceEdge,
) -> Vec<(usize, usize, f64)> {
    let trace = EdgeTrace::new(space, ie);
    let m = trace.dofs.len();
    let mut block = vec![0.0; m * m];
    let penalty = cfg.sigma0 / ie.length;
    for (q, side) in ie.quadrature() {
        let beta = spec.beta(side, q.point);
        let t1 = trace.traces(space, ie.triangles[0], side, &q.point);
        let t2 = trace.traces(space, ie.triangles[1], side, &q.point);
        let jump: Vec<f64> = (0..m).map(|k| t1[k].0 - t2[k].0).collect();
        let flux: Vec<f64> = (0..m)
            .map(|k| 0.5 * beta * (t1[k].1 + t2[k].1).dot(&ie.normal))
            .collect();
        for i in 0..m {
            for j in 0..m {
                // row i = test function, column j = trial function
                block[i * m + j] += q.weight
                    * (-flux[j] * jump[i]
                        + cfg.epsilon * flux[i] * jump[j]
                        + penalty * jump[j] * jump[i]);
            }
        }
    }
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push((trace.dofs[i], trace.dofs[j], block[i * m + j]));
        }
    }
    out
}

fn eliminate(
    space: &FemSpace,
    spec: &ProblemSpec,
    raw: CsrMatrix,
    mut rhs: Vec<f64>,
    symmetric: bool,
) -> AssembledSystem {
    let n = raw.nrows();
    let mesh = space.mesh();
    let dirichlet: Vec<(usize, f64)> = space
        .boundary_dofs()
        .iter()
        .map(|&k| (k, (spec.dirichlet)(mesh.vertices[k])))
        .collect();
    let mut constrained = vec![None; n];
    for &(k, g) in &dirichlet {
        constrained[k] = Some(g);
    }
    let mut triplets = Vec::with_capacity(raw.nnz());
    for r in 0..n {
        if let Some(g) = constrained[r] {
            triplets.push((r, r, 1.0));
            rhs[r] = g;
            continue;
        }
        let (cols, vals) = raw.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            match constrained[c] {
                Some(g) => rhs[r] -= v * g,
                None => triplets.push((r, c, v)),
            }
        }
    }
    AssembledSystem {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        rhs,
        dirichlet,
        symmetric,
    }
}

/// Assembles the PPIFE system with Dirichlet rows and columns eliminated.
pub fn assemble(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
) -> Result<AssembledSystem> {
    spec.validate(space)?;
    let (triplets, rhs) = assemble_raw(space, spec, cfg, true)?;
    let n = space.num_dofs();
    let raw = CsrMatrix::from_triplets(n, n, &triplets);
    Ok(eliminate(space, spec, raw, rhs, cfg.is_symmetric()))
}

/// The unconstrained bilinear-form matrix, optionally without interface-edge terms.
pub fn bilinear_matrix(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
    include_edges: bool,
) -> Result<CsrMatrix> {
    let (triplets, _) = assemble_raw(space, spec, cfg, include_edges)?;
    let n = space.num_dofs();
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// Quadrature points with local basis values, reused across Newton iterations.
struct ElementSamples {
    dofs: [usize; 3],
    points: Vec<(f64, [f64; 3])>,
}

/// Semilinear problem `a_h(u, v) + (s(u), v) = (f, v)` with cached linear part.
pub struct SemilinearProblem<'a> {
    space: &'a FemSpace,
    nonlinearity: Nonlinearity,
    linear: AssembledSystem,
    constrained: Vec<bool>,
    samples: Vec<ElementSamples>,
}

impl<'a> SemilinearProblem<'a> {
    pub fn new(space: &'a FemSpace, spec: &ProblemSpec, cfg: &PenaltyConfig) -> Result<Self> {
        let nonlinearity = spec
            .nonlinearity
            .clone()
            .ok_or(Error::MissingNonlinearity)?;
        let linear = assemble(space, spec, cfg)?;
        let constrained = linear.is_constrained();
        let samples = (0..space.mesh().num_triangles())
            .into_par_iter()
            .map(|t| -> Result<ElementSamples> {
                let points = element_quadrature(space, t)?
                    .into_iter()
                    .map(|(q, side)| {
                        let piece = space.piece(t, side);
                        (q.weight, std::array::from_fn(|i| piece[i].eval(&q.point)))
                    })
                    .collect();
                Ok(ElementSamples {
                    dofs: space.dofs(t),
                    points,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SemilinearProblem {
            space,
            nonlinearity,
            linear,
            constrained,
            samples,
        })
    }

    pub fn linear_system(&self) -> &AssembledSystem {
        &self.linear
    }

    /// `A u + M(u) - b`, with `M` zero on constrained rows.
    pub fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = self.linear.matrix.mul_vec(u);
        for (ri, bi) in r.iter_mut().zip(&self.linear.rhs) {
            *ri -= bi;
        }
        let contributions: Vec<[f64; 3]> = self
            .samples
            .par_iter()
            .map(|es| {
                let mut m = [0.0; 3];
                for (w, phi) in &es.points {
                    let uh: f64 = (0..3).map(|j| u[es.dofs[j]] * phi[j]).sum();
                    let s = (self.nonlinearity.value)(uh);
                    for i in 0..3 {
                        m[i] += w * s * phi[i];
                    }
                }
                m
            })
            .collect();
        for (es, m) in self.samples.iter().zip(&contributions) {
            for i in 0..3 {
                if !self.constrained[es.dofs[i]] {
                    r[es.dofs[i]] += m[i];
                }
            }
        }
        r
    }

    /// `A + (s'(u_h) phi_j, phi_i)` on unconstrained rows and columns.
    pub fn jacobian(&self, u: &[f64]) -> CsrMatrix {
        let n = self.space.num_dofs();
        let blocks: Vec<[[f64; 3]; 3]> = self
            .samples
            .par_iter()
            .map(|es| {
                let mut k = [[0.0; 3]; 3];
                for (w, phi) in &es.points {
                    let uh: f64 = (0..3).map(|j| u[es.dofs[j]] * phi[j]).sum();
                    let ds = (self.nonlinearity.derivative)(uh);
                    for i in 0..3 {
                        for j in 0..3 {
                            k[i][j] += w * ds * phi[i] * phi[j];
                        }
                    }
                }
                k
            })
            .collect();
        let mut triplets = Vec::with_capacity(9 * blocks.len());
        for (es, k) in self.samples.iter().zip(&blocks) {
            for i in 0..3 {
                for j in 0..3 {
                    let (r, c) = (es.dofs[i], es.dofs[j]);
                    if !self.constrained[r] && !self.constrained[c] {
                        triplets.push((r, c, k[i][j]));
                    }
                }
            }
        }
        let m = CsrMatrix::from_triplets(n, n, &triplets);
        self.linear.matrix.add(&m)
    }
}

/// Residual and Jacobian of the semilinear problem at `u_current`.
pub fn assemble_semilinear(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
    u_current: &[f64],
) -> Result<(Vec<f64>, CsrMatrix)> {
    let problem = SemilinearProblem::new(space, spec, cfg)?;
    Ok((problem.residual(u_current), problem.jacobian(u_current)))
}

#[derive(Clone, Debug, Default)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual: f64,
    pub linear_iterations: usize,
}

/// Newton's method from the Dirichlet lift; fails if the residual max-norm does not
/// reach [`NEWTON_TOLERANCE`] within [`NEWTON_MAX_ITERATIONS`] steps.
pub fn solve_semilinear(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, NewtonStats)> {
    let problem = SemilinearProblem::new(space, spec, cfg)?;
    let mut u = problem.linear.dirichlet_lift();
    let mut stats = NewtonStats::default();
    for it in 0..=NEWTON_MAX_ITERATIONS {
        let r = problem.residual(&u);
        let rmax = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        stats.residual = rmax;
        stats.iterations = it;
        log::debug!("Newton iteration {it}: residual {rmax:.3e}");
        if rmax < NEWTON_TOLERANCE {
            return Ok((u, stats));
        }
        if it == NEWTON_MAX_ITERATIONS {
            break;
        }
        let j = problem.jacobian(&u);
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut delta = vec![0.0; u.len()];
        let ls = solve(&j, &neg_r, &mut delta, problem.linear.symmetric, opts)?;
        stats.linear_iterations += ls.iterations;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui += di;
        }
    }
    Err(Error::NewtonDiverged {
        iterations: stats.iterations,
        residual: stats.residual,
    })
}

/// Assembles and solves the linear problem.
pub fn solve_linear(
    space: &FemSpace,
    spec: &ProblemSpec,
    cfg: &PenaltyConfig,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats, AssembledSystem)> {
    let system = assemble(space, spec, cfg)?;
    let mut u = system.dirichlet_lift();
    let stats = solve(&system.matrix, &system.rhs, &mut u, system.symmetric, opts)?;
    Ok((u, stats, system))
}

/// Diagnostic: element classes touching each dof.
pub fn dofs_of_interface_elements(space: &FemSpace) -> Vec<bool> {
    let mut touched = vec![false; space.num_dofs()];
    for t in 0..space.mesh().num_triangles() {
        if space.element_class(t) == ElementClass::Interface {
            for d in space.dofs(t) {
                touched[d] = true;
            }
        }
    }
    touched
}
