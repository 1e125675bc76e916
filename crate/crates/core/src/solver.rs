//! Primal-dual active set solver for the discrete von Karman obstacle
//! problem, with Newton's method for the nonlinearity.
//!
//! The multiplier enters the displacement equation as `-P lambda`, so at a
//! contact vertex `lambda(p)` is the residual
//! `a_pw(u, phi_p) + 2 b_pw(u, phi_p, v) - (f, phi_p)` and is nonnegative
//! for a physical contact force.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{assemble_load, assemble_stiffness, bracket_load, coupling_vector};
use crate::morley::{MorleyField, MorleySpace};
use crate::problem::ScalarFn;
use crate::sparse::{norm_inf, norm_l2, CholeskySolver, LuSolver, SparseMatrix, SymmetricSolver, TripletBuilder};

/// Membership test for the active set, with `c = lambda + chi - u` at an
/// interior vertex.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActiveSetConvention {
    /// Active iff `c > 0`: the classical test, compatible with
    /// `lambda >= 0` at contact.
    #[default]
    Complementary,
    /// Active iff `c <= 0`.
    Reversed,
}

impl fmt::Display for ActiveSetConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActiveSetConvention::Complementary => write!(f, "complementary"),
            ActiveSetConvention::Reversed => write!(f, "reversed"),
        }
    }
}

impl FromStr for ActiveSetConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complementary" => Ok(ActiveSetConvention::Complementary),
            "reversed" => Ok(ActiveSetConvention::Reversed),
            _ => Err(Error::InvalidArgument(format!(
                "unknown active-set convention '{s}' (expected complementary or reversed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol_newton: f64,
    pub tol_pdas: f64,
    pub max_pdas: usize,
    pub max_newton: usize,
    pub quad_degree: usize,
    pub convention: ActiveSetConvention,
    /// Start each Newton solve from the previous `beta` instead of zero.
    pub warm_start_beta: bool,
    /// Stop with [`Status::ActiveSetCycle`] when an earlier active set
    /// recurs without the iterate change decreasing.
    pub detect_cycles: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_newton: 1e-7,
            tol_pdas: 1e-7,
            max_pdas: 100,
            max_newton: 50,
            quad_degree: 12,
            convention: ActiveSetConvention::default(),
            warm_start_beta: false,
            detect_cycles: false,
        }
    }
}

/// Everything needed for one solve on one mesh.
#[derive(Clone)]
pub struct ProblemSpec {
    pub space: Arc<MorleySpace>,
    pub obstacle: ScalarFn,
    pub load: ScalarFn,
    pub options: SolverOptions,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n_dofs", &self.space.n_dofs())
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn new(space: Arc<MorleySpace>, obstacle: ScalarFn, load: ScalarFn) -> Self {
        Self {
            space,
            obstacle,
            load,
            options: SolverOptions::default(),
        }
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    fn validate(&self) -> Result<Vec<String>> {
        let o = &self.options;
        for (name, v) in [("tol_newton", o.tol_newton), ("tol_pdas", o.tol_pdas)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if o.max_newton == 0 {
            return Err(Error::InvalidArgument("max_newton must be at least 1".into()));
        }
        let mesh = self.space.mesh();
        let max_boundary = (0..mesh.n_vertices())
            .filter(|&v| mesh.is_boundary_vertex(v))
            .map(|v| (self.obstacle)(mesh.vertices()[v]))
            .fold(f64::NEG_INFINITY, f64::max);
        let mut warnings = Vec::new();
        if max_boundary >= 0.0 {
            warnings.push(format!(
                "obstacle reaches {max_boundary} on the boundary; expected a negative maximum"
            ));
        }
        Ok(warnings)
    }

    /// Obstacle values at the vertex degrees of freedom.
    fn obstacle_at_vertex_dofs(&self) -> Vec<f64> {
        let mesh = self.space.mesh();
        self.space
            .dof_map()
            .dof_vertices()
            .iter()
            .map(|&v| (self.obstacle)(mesh.vertices()[v]))
            .collect()
    }
}

/// Active vertex degrees of freedom, as a mask over all degrees of freedom
/// (edge entries are always `false`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSet {
    mask: Vec<bool>,
}

impl ActiveSet {
    pub fn empty(n_dofs: usize) -> Self {
        Self {
            mask: vec![false; n_dofs],
        }
    }

    pub fn from_dofs(n_dofs: usize, dofs: &[usize]) -> Self {
        let mut s = Self::empty(n_dofs);
        for &d in dofs {
            s.mask[d] = true;
        }
        s
    }

    pub fn is_active(&self, dof: usize) -> bool {
        self.mask[dof]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn active_dofs(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&d| self.mask[d]).collect()
    }

    /// Degrees of freedom that are solved for: inactive vertices and all
    /// edges.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&d| !self.mask[d]).collect()
    }

    /// Mesh vertex indices of the active set.
    pub fn vertices(&self, space: &MorleySpace) -> Vec<usize> {
        let dof_vertices = space.dof_map().dof_vertices();
        self.active_dofs().iter().map(|&d| dof_vertices[d]).collect()
    }
}

fn classify(c: f64, convention: ActiveSetConvention) -> bool {
    match convention {
        ActiveSetConvention::Complementary => c > 0.0,
        ActiveSetConvention::Reversed => c <= 0.0,
    }
}

fn active_sets_from(alpha: &[f64], lambda: &[f64], chi: &[f64], convention: ActiveSetConvention) -> ActiveSet {
    let mut set = ActiveSet::empty(alpha.len());
    for (d, &chi_d) in chi.iter().enumerate() {
        set.mask[d] = classify(lambda[d] + chi_d - alpha[d], convention);
    }
    set
}

/// Active and inactive interior vertices for the next step, from the
/// previous displacement and multiplier.
pub fn pdas_active_sets(
    u_prev: &MorleyField,
    lambda_prev: &MorleyField,
    obstacle: &dyn Fn(crate::mesh::Point) -> f64,
    convention: ActiveSetConvention,
) -> Result<ActiveSet> {
    u_prev.same_space(lambda_prev)?;
    let space = u_prev.space();
    let mesh = space.mesh();
    let chi: Vec<f64> = space
        .dof_map()
        .dof_vertices()
        .iter()
        .map(|&v| obstacle(mesh.vertices()[v]))
        .collect();
    Ok(active_sets_from(
        u_prev.values(),
        lambda_prev.values(),
        &chi,
        convention,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    ActiveSetCycle,
    MaxIterations,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Converged => write!(f, "converged"),
            Status::ActiveSetCycle => write!(f, "active_set_cycle"),
            Status::MaxIterations => write!(f, "max_iterations"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Linear biharmonic obstacle problem used as the starting guess.
    Biharmonic,
    VonKarman,
}

/// One outer active-set step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub phase: Phase,
    pub iteration: usize,
    pub active_count: usize,
    pub newton_iterations: usize,
    pub newton_deltas: Vec<f64>,
    pub newton_converged: bool,
    /// `||alpha^m - alpha^{m-1}||_inf` over all degrees of freedom.
    pub err: f64,
    /// Euclidean norm of the change in `(alpha, beta)`.
    pub change_l2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub u: MorleyField,
    pub v: MorleyField,
    pub lambda: MorleyField,
    /// Active set of the final step.
    pub active_set: ActiveSet,
    pub warm_start: Vec<OuterRecord>,
    pub warm_start_status: Status,
    pub history: Vec<OuterRecord>,
    pub status: Status,
    pub convention: ActiveSetConvention,
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub fn outer_iterations(&self) -> usize {
        self.history.len()
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.history.iter().map(|r| r.newton_iterations).max().unwrap_or(0)
    }

    /// `(alpha, beta)` change of the last outer step.
    pub fn final_change(&self) -> f64 {
        self.history.last().map_or(0.0, |r| r.change_l2)
    }

    /// Mesh vertex indices of the final active set.
    pub fn active_vertices(&self) -> Vec<usize> {
        self.active_set.vertices(self.u.space())
    }

    /// One line per outer step: `m |Ac| newton_iters err`, or JSON lines.
    pub fn write_log<W: Write>(&self, mut out: W, json: bool) -> Result<()> {
        for r in self.warm_start.iter().chain(&self.history) {
            if json {
                let line = serde_json::to_string(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                writeln!(out, "{line}")?;
            } else {
                let tag = match r.phase {
                    Phase::Biharmonic => "biharmonic",
                    Phase::VonKarman => "vonkarman",
                };
                writeln!(
                    out,
                    "{tag} {} {} {} {:.6e}",
                    r.iteration, r.active_count, r.newton_iterations, r.err
                )?;
            }
        }
        Ok(())
    }
}

/// Phase-1 iterate: the solution of the linear biharmonic obstacle problem.
#[derive(Debug, Clone)]
pub struct BiharmonicResult {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub active_set: ActiveSet,
    pub history: Vec<OuterRecord>,
    pub status: Status,
}

struct Assembled {
    stiffness: SparseMatrix,
    load: Vec<f64>,
    chi: Vec<f64>,
}

fn assemble(spec: &ProblemSpec) -> Assembled {
    Assembled {
        stiffness: assemble_stiffness(&spec.space),
        load: assemble_load(&spec.space, |p| (spec.load)(p), spec.options.quad_degree),
        chi: spec.obstacle_at_vertex_dofs(),
    }
}

fn linear_obstacle_step(asm: &Assembled, active: &ActiveSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = asm.load.len();
    let act = active.active_dofs();
    let free = active.free_dofs();
    let mut alpha = vec![0.0; n];
    for &d in &act {
        alpha[d] = asm.chi[d];
    }
    if !free.is_empty() {
        let a_ff = asm.stiffness.submatrix(&free, &free);
        let mut rhs: Vec<f64> = free.iter().map(|&d| asm.load[d]).collect();
        if !act.is_empty() {
            let a_fa = asm.stiffness.submatrix(&free, &act);
            let chi_a: Vec<f64> = act.iter().map(|&d| asm.chi[d]).collect();
            for (r, c) in rhs.iter_mut().zip(a_fa.matvec(&chi_a)) {
                *r -= c;
            }
        }
        let x = CholeskySolver::new(&a_ff)?.solve(&rhs)?;
        for (&d, xv) in free.iter().zip(x) {
            alpha[d] = xv;
        }
    }
    let residual = asm.stiffness.matvec(&alpha);
    let mut lambda = vec![0.0; n];
    for &d in &act {
        lambda[d] = residual[d] - asm.load[d];
    }
    Ok((alpha, lambda))
}

fn run_biharmonic(spec: &ProblemSpec, asm: &Assembled) -> Result<BiharmonicResult> {
    let o = &spec.options;
    let n = spec.space.n_dofs();
    let mut alpha = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    let mut active = active_sets_from(&alpha, &lambda, &asm.chi, o.convention);
    let mut history = Vec::new();
    let mut seen: Vec<(ActiveSet, f64)> = Vec::new();
    let mut status = Status::MaxIterations;
    for m in 1..=o.max_pdas {
        let (new_alpha, new_lambda) = linear_obstacle_step(asm, &active)?;
        let err = max_diff(&new_alpha, &alpha);
        let change_l2 = l2_diff(&new_alpha, &alpha);
        history.push(OuterRecord {
            phase: Phase::Biharmonic,
            iteration: m,
            active_count: active.len(),
            newton_iterations: 0,
            newton_deltas: Vec::new(),
            newton_converged: true,
            err,
            change_l2,
            failure: None,
        });
        alpha = new_alpha;
        lambda = new_lambda;
        let next = active_sets_from(&alpha, &lambda, &asm.chi, o.convention);
        if next == active && err <= o.tol_pdas {
            status = Status::Converged;
            break;
        }
        if o.detect_cycles && is_cycle(&mut seen, &active, err) {
            status = Status::ActiveSetCycle;
            break;
        }
        active = next;
    }
    Ok(BiharmonicResult {
        alpha,
        lambda,
        active_set: active,
        history,
        status,
    })
}

/// Discrete biharmonic obstacle problem, solved by the active set method
/// with linear solves. `v` is zero in the result.
pub fn solve_biharmonic_obstacle(spec: &ProblemSpec) -> Result<SolveResult> {
    let warnings = spec.validate()?;
    let asm = assemble(spec);
    let b = run_biharmonic(spec, &asm)?;
    Ok(SolveResult {
        u: spec.space.field(b.alpha)?,
        v: spec.space.zero_field(),
        lambda: spec.space.field(b.lambda)?,
        active_set: b.active_set,
        warm_start: Vec::new(),
        warm_start_status: b.status,
        history: b.history,
        status: b.status,
        convention: spec.options.convention,
        warnings,
    })
}

fn is_cycle(seen: &mut Vec<(ActiveSet, f64)>, active: &ActiveSet, err: f64) -> bool {
    if let Some((_, prev_err)) = seen.iter().rev().find(|(s, _)| s == active) {
        if err >= *prev_err {
            return true;
        }
    }
    seen.push((active.clone(), err));
    false
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// The reduced nonlinear system for a fixed active set.
///
/// The unknown vector has length `2N`. Slot `j < N` holds `alpha_j` when
/// degree of freedom `j` is free and `lambda_j` when it is an active
/// vertex; slots `N..2N` hold `beta`. Equations are `(R_u, R_v)` in degree
/// of freedom order, with
/// `R_u = A alpha + 2 N(alpha, beta) - F - lambda` and
/// `R_v = A beta - Q(alpha)`.
pub struct NewtonSystem<'a> {
    space: &'a Arc<MorleySpace>,
    stiffness: &'a SparseMatrix,
    load: &'a [f64],
    chi: &'a [f64],
    active: &'a ActiveSet,
}

impl<'a> NewtonSystem<'a> {
    pub fn new(
        space: &'a Arc<MorleySpace>,
        stiffness: &'a SparseMatrix,
        load: &'a [f64],
        chi: &'a [f64],
        active: &'a ActiveSet,
    ) -> Result<Self> {
        let n = space.n_dofs();
        for actual in [stiffness.n_rows(), load.len(), active.mask.len()] {
            if actual != n {
                return Err(Error::DimensionMismatch { expected: n, actual });
            }
        }
        if chi.len() != space.dof_map().n_vertex_dofs() {
            return Err(Error::DimensionMismatch {
                expected: space.dof_map().n_vertex_dofs(),
                actual: chi.len(),
            });
        }
        Ok(Self {
            space,
            stiffness,
            load,
            chi,
            active,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.space.n_dofs()
    }

    pub fn pack(&self, alpha: &[f64], lambda: &[f64], beta: &[f64]) -> Vec<f64> {
        let n = self.space.n_dofs();
        let mut x = Vec::with_capacity(2 * n);
        x.extend((0..n).map(|j| if self.active.mask[j] { lambda[j] } else { alpha[j] }));
        x.extend_from_slice(beta);
        x
    }

    /// `(alpha, lambda, beta)` with `alpha = chi` on active vertices.
    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.space.n_dofs();
        let mut alpha = vec![0.0; n];
        let mut lambda = vec![0.0; n];
        for j in 0..n {
            if self.active.mask[j] {
                alpha[j] = self.chi[j];
                lambda[j] = x[j];
            } else {
                alpha[j] = x[j];
            }
        }
        (alpha, lambda, x[n..].to_vec())
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (alpha, lambda, beta) = self.unpack(x);
        let u = self.space.field(alpha)?;
        let v = self.space.field(beta)?;
        let coupling = coupling_vector(&u, &v)?;
        let q = bracket_load(&u);
        let au = self.stiffness.matvec(u.values());
        let av = self.stiffness.matvec(v.values());
        let n = self.space.n_dofs();
        let mut g = Vec::with_capacity(2 * n);
        g.extend((0..n).map(|i| au[i] + 2.0 * coupling[i] - self.load[i] - lambda[i]));
        g.extend((0..n).map(|i| av[i] - q[i]));
        Ok(g)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<SparseMatrix> {
        let (alpha, _, beta) = self.unpack(x);
        let u = self.space.field(alpha)?;
        let v = self.space.field(beta)?;
        let n = self.space.n_dofs();
        let mask = &self.active.mask;
        let elements = self.space.elements();
        let mut b = TripletBuilder::with_capacity(2 * n, 2 * n, 5 * 36 * elements.len() + n);
        for (t, el) in elements.iter().enumerate() {
            let hu = u.hessian(t);
            let v_mean = v.integral(t);
            for (i, di) in el.dofs.iter().enumerate() {
                let Some(di) = *di else { continue };
                for (j, dj) in el.dofs.iter().enumerate() {
                    let Some(dj) = *dj else { continue };
                    let (hi, hj) = (&el.hessians[i], &el.hessians[j]);
                    let a_ij = el.area * hi.frobenius_dot(hj);
                    // b(phi_i, phi_j, v), b(u, phi_j, phi_i), b(u, phi_i, phi_j)
                    let t3 = -0.5 * hi.bracket(hj) * v_mean;
                    let b_ij = -0.5 * hu.bracket(hj) * el.integrals[i];
                    let b_ji = -0.5 * hu.bracket(hi) * el.integrals[j];
                    if !mask[dj] {
                        b.push(di, dj, a_ij + 2.0 * t3);
                        b.push(n + di, dj, -2.0 * b_ij);
                    }
                    b.push(di, n + dj, 2.0 * b_ji);
                    b.push(n + di, n + dj, a_ij);
                }
            }
        }
        for (j, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            b.push(j, j, -1.0);
        }
        Ok(b.build())
    }

    /// Newton correction `dx` with `J(x) dx = R(x)`.
    ///
    /// The active rows only couple to their own multiplier, so they are
    /// eliminated. Negating the `R_v` rows of what remains gives the
    /// symmetric saddle-point matrix `[[A + 2T, 2B^T], [2B, -A]]`, which is
    /// factored by `LDL^T`. When that solve is inaccurate the full system
    /// goes through LU instead.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.residual(x)?;
        let n = self.space.n_dofs();
        let mask = &self.active.mask;
        let mut pos = vec![usize::MAX; n];
        let mut free = Vec::with_capacity(n);
        for d in (0..n).filter(|&d| !mask[d]) {
            pos[d] = free.len();
            free.push(d);
        }
        let nf = free.len();
        let m = self.reduced_matrix(x, &pos, nf)?;
        let mut rhs: Vec<f64> = free.iter().map(|&d| g[d]).collect();
        rhs.extend(g[n..].iter().map(|r| -r));

        let Some(y) = solve_checked(&m, &rhs) else {
            return LuSolver::new(&self.jacobian(x)?)?.solve(&g);
        };
        let mut dx = vec![0.0; 2 * n];
        for (k, &d) in free.iter().enumerate() {
            dx[d] = y[k];
        }
        dx[n..].copy_from_slice(&y[nf..]);
        if nf < n {
            // active row j: sum_k J_jk dx_k - dlambda_j = g_j
            let (alpha, _, beta) = self.unpack(x);
            let u = self.space.field(alpha)?;
            let v = self.space.field(beta)?;
            let mut d_alpha = dx[..n].to_vec();
            for j in (0..n).filter(|&j| mask[j]) {
                d_alpha[j] = 0.0;
            }
            let du = self.space.field(d_alpha)?;
            let dv = self.space.field(dx[n..].to_vec())?;
            let a_du = self.stiffness.matvec(du.values());
            let c_u = coupling_vector(&du, &v)?;
            let c_v = coupling_vector(&u, &dv)?;
            for j in (0..n).filter(|&j| mask[j]) {
                dx[j] = a_du[j] + 2.0 * (c_u[j] + c_v[j]) - g[j];
            }
        }
        Ok(dx)
    }

    fn reduced_matrix(&self, x: &[f64], pos: &[usize], nf: usize) -> Result<SparseMatrix> {
        let (alpha, _, beta) = self.unpack(x);
        let u = self.space.field(alpha)?;
        let v = self.space.field(beta)?;
        let n = self.space.n_dofs();
        let elements = self.space.elements();
        let mut b = TripletBuilder::with_capacity(nf + n, nf + n, 4 * 36 * elements.len());
        for (t, el) in elements.iter().enumerate() {
            let hu = u.hessian(t);
            let v_mean = v.integral(t);
            for (i, di) in el.dofs.iter().enumerate() {
                let Some(di) = *di else { continue };
                for (j, dj) in el.dofs.iter().enumerate() {
                    let Some(dj) = *dj else { continue };
                    let (hi, hj) = (&el.hessians[i], &el.hessians[j]);
                    let a_ij = el.area * hi.frobenius_dot(hj);
                    let (pi, pj) = (pos[di], pos[dj]);
                    if pi != usize::MAX && pj != usize::MAX {
                        b.push(pi, pj, a_ij - hi.bracket(hj) * v_mean);
                    }
                    if pi != usize::MAX {
                        b.push(pi, nf + dj, -hu.bracket(hi) * el.integrals[j]);
                    }
                    if pj != usize::MAX {
                        b.push(nf + di, pj, -hu.bracket(hj) * el.integrals[i]);
                    }
                    b.push(nf + di, nf + dj, -a_ij);
                }
            }
        }
        Ok(b.build())
    }
}

/// `LDL^T` solve with one step of iterative refinement; `None` when the
/// factorization fails or the final residual is not small.
fn solve_checked(m: &SparseMatrix, rhs: &[f64]) -> Option<Vec<f64>> {
    let solver = SymmetricSolver::new(m).ok()?;
    let mut y = solver.solve(rhs).ok()?;
    let residual = |y: &[f64]| -> Vec<f64> { m.matvec(y).iter().zip(rhs).map(|(my, r)| r - my).collect() };
    let correction = solver.solve(&residual(&y)).ok()?;
    for (yi, ci) in y.iter_mut().zip(correction) {
        *yi += ci;
    }
    let scale = m.max_abs() * norm_inf(&y) + norm_inf(rhs);
    (norm_inf(&residual(&y)) <= 1e-12 * scale).then_some(y)
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub deltas: Vec<f64>,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Newton's method `x <- x - J(x)^{-1} G(x)` until `||dx||_2 <= tol`.
/// Failures (singular Jacobian, non-finite iterates, iteration cap) are
/// reported in the outcome; the last finite iterate is kept.
pub fn newton_solve(system: &NewtonSystem<'_>, start: Vec<f64>, tol: f64, max_iterations: usize) -> NewtonOutcome {
    let mut x = start;
    let mut deltas = Vec::new();
    let mut rho = 1.0;
    let mut failure = None;
    while rho > tol && deltas.len() < max_iterations {
        let dx = match system.step(&x) {
            Ok(dx) => dx,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        rho = norm_l2(&dx);
        if !rho.is_finite() {
            failure = Some(String::from("non-finite Newton step"));
            break;
        }
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi -= di;
        }
        deltas.push(rho);
    }
    let converged = failure.is_none() && rho <= tol;
    if failure.is_none() && !converged {
        failure = Some(format!("no convergence in {max_iterations} Newton iterations"));
    }
    NewtonOutcome {
        x,
        iterations: deltas.len(),
        deltas,
        converged,
        failure,
    }
}

/// Full solve: the biharmonic obstacle problem as a warm start, then the
/// active set loop with a Newton solve per step.
pub fn solve(spec: &ProblemSpec) -> Result<SolveResult> {
    let warnings = spec.validate()?;
    let o = &spec.options;
    let asm = assemble(spec);
    let warm = run_biharmonic(spec, &asm)?;
    let n = spec.space.n_dofs();

    let mut alpha = warm.alpha.clone();
    let mut lambda = warm.lambda.clone();
    let mut beta = vec![0.0; n];
    let mut active = active_sets_from(&alpha, &lambda, &asm.chi, o.convention);
    let mut history = Vec::new();
    let mut seen: Vec<(ActiveSet, f64)> = Vec::new();
    let mut status = Status::MaxIterations;

    for m in 1..=o.max_pdas {
        let system = NewtonSystem::new(&spec.space, &asm.stiffness, &asm.load, &asm.chi, &active)?;
        let start_beta = if o.warm_start_beta { beta.clone() } else { vec![0.0; n] };
        let start = system.pack(&alpha, &lambda, &start_beta);
        let outcome = newton_solve(&system, start, o.tol_newton, o.max_newton);
        let (new_alpha, new_lambda, new_beta) = system.unpack(&outcome.x);
        let err = max_diff(&new_alpha, &alpha);
        let change_l2 = (l2_diff(&new_alpha, &alpha).powi(2) + l2_diff(&new_beta, &beta).powi(2)).sqrt();
        history.push(OuterRecord {
            phase: Phase::VonKarman,
            iteration: m,
            active_count: active.len(),
            newton_iterations: outcome.iterations,
            newton_deltas: outcome.deltas,
            newton_converged: outcome.converged,
            err,
            change_l2,
            failure: outcome.failure,
        });
        alpha = new_alpha;
        lambda = new_lambda;
        beta = new_beta;
        let next = active_sets_from(&alpha, &lambda, &asm.chi, o.convention);
        if next == active && err <= o.tol_pdas && outcome.converged {
            status = Status::Converged;
            break;
        }
        if o.detect_cycles && is_cycle(&mut seen, &active, err) {
            status = Status::ActiveSetCycle;
            break;
        }
        active = next;
    }

    Ok(SolveResult {
        u: spec.space.field(alpha)?,
        v: spec.space.field(beta)?,
        lambda: spec.space.field(lambda)?,
        active_set: active,
        warm_start: warm.history,
        warm_start_status: warm.status,
        history,
        status,
        convention: o.convention,
        warnings,
    })
}

/// Residuals `(||R_u||_inf, ||R_v||_inf)` of a result, with `lambda` as
/// stored.
pub fn residual_norms(spec: &ProblemSpec, result: &SolveResult) -> Result<(f64, f64)> {
    let a = assemble_stiffness(&spec.space);
    let f = assemble_load(&spec.space, |p| (spec.load)(p), spec.options.quad_degree);
    let coupling = coupling_vector(&result.u, &result.v)?;
    let q = bracket_load(&result.u);
    let au = a.matvec(result.u.values());
    let av = a.matvec(result.v.values());
    let r_u: Vec<f64> = (0..au.len())
        .map(|i| au[i] + 2.0 * coupling[i] - f[i] - result.lambda.values()[i])
        .collect();
    let r_v: Vec<f64> = (0..av.len()).map(|i| av[i] - q[i]).collect();
    Ok((norm_inf(&r_u), norm_inf(&r_v)))
}
