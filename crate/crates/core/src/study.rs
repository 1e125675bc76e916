//! Refinement studies, error measures, coincidence sets and the
//! smallness-of-data diagnostics.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::forms::l2_norm;
use crate::mesh::{MeshHierarchy, Point, Triangulation};
use crate::morley::{MorleyField, MorleySpace};
use crate::problem::{Domain, Problem};
use crate::quadrature::QuadratureRule;
use crate::solver::{solve, ProblemSpec, SolveResult, SolverOptions, Status};

fn level_of(field: &MorleyField, hierarchy: &MeshHierarchy) -> Result<usize> {
    let mesh = field.space().mesh();
    let level = mesh.level();
    match hierarchy.level(level) {
        Some(h) if h.n_triangles() == mesh.n_triangles() && h.vertices() == mesh.vertices() => Ok(level),
        _ => Err(Error::NotNested(format!(
            "field mesh at level {level} is not part of the hierarchy"
        ))),
    }
}

/// `||| u_fine - u_coarse |||_pw` with the coarse field read on the fine
/// mesh through triangle ancestry.
pub fn energy_error_cross_level(coarse: &MorleyField, fine: &MorleyField, hierarchy: &MeshHierarchy) -> Result<f64> {
    let lc = level_of(coarse, hierarchy)?;
    let lf = level_of(fine, hierarchy)?;
    let fine_mesh = fine.space().mesh();
    let mut sum = 0.0;
    for t in 0..fine_mesh.n_triangles() {
        let parent = hierarchy.ancestor(lf, t, lc)?;
        let d = fine.hessian(t) - coarse.hessian(parent);
        sum += fine_mesh.area(t) * d.frobenius_norm_sq();
    }
    Ok(sum.sqrt())
}

/// `max_{p in V_coarse} |u_fine(p) - u_coarse(p)|`. Vertex numbering is
/// preserved by refinement, so coarse vertex `p` is fine vertex `p`.
pub fn vertex_max_error(coarse: &MorleyField, fine: &MorleyField) -> Result<f64> {
    let cm = coarse.space().mesh();
    let fm = fine.space().mesh();
    if cm.n_vertices() > fm.n_vertices() || fm.vertices()[..cm.n_vertices()] != *cm.vertices() {
        return Err(Error::NotNested(String::from(
            "coarse vertices are not a prefix of the fine vertices",
        )));
    }
    Ok((0..cm.n_vertices())
        .map(|p| (fine.vertex_value(p) - coarse.vertex_value(p)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EocMode {
    /// `log(e_l / e_{L-1}) / log(2^{L-1-l})` for `l = 1..L-2`.
    Reference,
    /// `log(e_{l-1} / e_l) / log 2` for `l = 2..L-1`.
    Successive,
}

/// Experimental orders of convergence from `errors[i] = e_{i+1}`; the result
/// has one entry fewer than the input.
pub fn eoc(errors: &[f64], mode: EocMode) -> Result<Vec<f64>> {
    if let Some(bad) = errors.iter().find(|&&e| !e.is_finite() || e <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "errors must be positive and finite, got {bad}"
        )));
    }
    let n = errors.len();
    if n < 2 {
        return Ok(Vec::new());
    }
    Ok(match mode {
        EocMode::Reference => {
            let last = errors[n - 1];
            (0..n - 1)
                .map(|i| (errors[i] / last).ln() / (((n - 1 - i) as f64) * std::f64::consts::LN_2))
                .collect()
        }
        EocMode::Successive => (1..n).map(|i| (errors[i - 1] / errors[i]).log2()).collect(),
    })
}

/// Interior vertices `p` with `u(p) - chi(p) <= tol`.
pub fn coincidence_set(u: &MorleyField, obstacle: &dyn Fn(Point) -> f64, tol: f64) -> Vec<usize> {
    let mesh = u.space().mesh();
    (0..mesh.n_vertices())
        .filter(|&p| !mesh.is_boundary_vertex(p))
        .filter(|&p| u.vertex_value(p) - obstacle(mesh.vertices()[p]) <= tol)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub h: f64,
    pub einf_u: Option<f64>,
    pub eoc_inf_u: Option<f64>,
    pub einf_v: Option<f64>,
    pub eoc_inf_v: Option<f64>,
    pub e_u: Option<f64>,
    pub eoc_u: Option<f64>,
    pub e_v: Option<f64>,
    pub eoc_v: Option<f64>,
    pub outer_iters: usize,
    pub max_newton_iters: usize,
    pub final_change: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceRecord {
    pub level: usize,
    pub tolerance: f64,
    pub vertices: Vec<usize>,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub problem: String,
    pub reference_level: usize,
    pub levels: Vec<LevelRecord>,
    pub coincidence: Vec<CoincidenceRecord>,
}

pub const CSV_HEADER: &str =
    "level,h,einf_u,eoc_inf_u,einf_v,eoc_inf_v,e_u,eoc_u,e_v,eoc_v,outer_iters,max_newton_iters,status";

impl StudyReport {
    pub fn all_converged(&self) -> bool {
        self.levels.iter().all(|l| l.status == Status::Converged)
    }

    pub fn level(&self, level: usize) -> Option<&LevelRecord> {
        self.levels.iter().find(|r| r.level == level)
    }

    /// One row per level; undefined entries are empty cells.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.levels {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.level,
                r.h,
                cell(r.einf_u),
                cell(r.eoc_inf_u),
                cell(r.einf_v),
                cell(r.eoc_inf_v),
                cell(r.e_u),
                cell(r.eoc_u),
                cell(r.e_v),
                cell(r.eoc_v),
                r.outer_iters,
                r.max_newton_iters,
                r.status
            )?;
        }
        Ok(())
    }

    /// `level,vertex,x,y` for every coincidence vertex.
    pub fn write_coincidence_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "level,vertex,x,y")?;
        for c in &self.coincidence {
            for (v, p) in c.vertices.iter().zip(&c.points) {
                writeln!(out, "{},{v},{},{}", c.level, p[0], p[1])?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for StudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "problem {} (reference level {})", self.problem, self.reference_level)?;
        writeln!(
            f,
            "{:>3} {:>8} {:>10} {:>7} {:>10} {:>7} {:>10} {:>7} {:>10} {:>7}  status",
            "l", "h", "~e(u)", "EOC", "~e(v)", "EOC", "e(u)", "EOC", "e(v)", "EOC"
        )?;
        let num = |v: Option<f64>| v.map_or_else(|| String::from("-"), |x| format!("{x:.6}"));
        let rate = |v: Option<f64>| v.map_or_else(|| String::from("-"), |x| format!("{x:.4}"));
        for r in &self.levels {
            writeln!(
                f,
                "{:>3} {:>8.4} {:>10} {:>7} {:>10} {:>7} {:>10} {:>7} {:>10} {:>7}  {}",
                r.level,
                r.h,
                num(r.einf_u),
                rate(r.eoc_inf_u),
                num(r.einf_v),
                rate(r.eoc_inf_v),
                num(r.e_u),
                rate(r.eoc_u),
                num(r.e_v),
                rate(r.eoc_v),
                r.status
            )?;
        }
        Ok(())
    }
}

/// A study's report together with the solutions it was computed from.
pub struct StudyRun {
    pub report: StudyReport,
    pub hierarchy: MeshHierarchy,
    pub solutions: Vec<SolveResult>,
}

fn spec_for(problem: &Problem, mesh: &Arc<Triangulation>, options: &SolverOptions) -> Result<ProblemSpec> {
    let space = MorleySpace::new(Arc::clone(mesh))?;
    Ok(ProblemSpec::new(space, problem.obstacle_fn(), problem.load_fn()).with_options(options.clone()))
}

/// Solves levels `1..=reference_level` (independently, possibly in
/// parallel) and tabulates errors against the reference level.
pub fn refinement_study(problem: &Problem, reference_level: usize, options: &SolverOptions) -> Result<StudyRun> {
    if reference_level < 3 {
        return Err(Error::InvalidArgument(format!(
            "reference level must be at least 3, got {reference_level}"
        )));
    }
    let hierarchy = problem.domain.hierarchy(reference_level)?;
    let levels: Vec<usize> = (1..=reference_level).collect();
    let solutions = levels
        .par_iter()
        .map(|&l| {
            let mesh = hierarchy.level(l).expect("level in hierarchy");
            solve(&spec_for(problem, mesh, options)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = solutions.last().expect("at least one level");
    let complete = solutions.iter().all(|s| s.status == Status::Converged);
    let coarse = &solutions[..solutions.len() - 1];
    let measure = |f: &dyn Fn(&SolveResult) -> Result<f64>| -> Result<Vec<f64>> { coarse.iter().map(f).collect() };
    let (einf_u, einf_v, e_u, e_v) = if complete {
        (
            measure(&|s| vertex_max_error(&s.u, &reference.u))?,
            measure(&|s| vertex_max_error(&s.v, &reference.v))?,
            measure(&|s| energy_error_cross_level(&s.u, &reference.u, &hierarchy))?,
            measure(&|s| energy_error_cross_level(&s.v, &reference.v, &hierarchy))?,
        )
    } else {
        Default::default()
    };
    let rates = |e: &[f64]| -> Vec<f64> { eoc(e, EocMode::Reference).unwrap_or_default() };
    let (r_inf_u, r_inf_v, r_u, r_v) = (rates(&einf_u), rates(&einf_v), rates(&e_u), rates(&e_v));

    let obstacle = problem.obstacle_fn();
    let mut records = Vec::new();
    let mut coincidence = Vec::new();
    for (i, (&l, s)) in levels.iter().zip(&solutions).enumerate() {
        let mesh = hierarchy.level(l).expect("level in hierarchy");
        records.push(LevelRecord {
            level: l,
            h: mesh.h_max(),
            einf_u: einf_u.get(i).copied(),
            eoc_inf_u: r_inf_u.get(i).copied(),
            einf_v: einf_v.get(i).copied(),
            eoc_inf_v: r_inf_v.get(i).copied(),
            e_u: e_u.get(i).copied(),
            eoc_u: r_u.get(i).copied(),
            e_v: e_v.get(i).copied(),
            eoc_v: r_v.get(i).copied(),
            outer_iters: s.outer_iterations(),
            max_newton_iters: s.max_newton_iterations(),
            final_change: s.final_change(),
            status: s.status,
        });
        if s.status == Status::Converged {
            let tol = einf_u.get(i).copied().unwrap_or(0.0);
            let vertices = coincidence_set(&s.u, &*obstacle, tol);
            let points = vertices.iter().map(|&v| mesh.vertices()[v]).collect();
            coincidence.push(CoincidenceRecord {
                level: l,
                tolerance: tol,
                vertices,
                points,
            });
        }
    }

    Ok(StudyRun {
        report: StudyReport {
            problem: problem.name.clone(),
            reference_level,
            levels: records,
            coincidence,
        },
        hierarchy,
        solutions,
    })
}

/// `(||w||_L2 / |||w|||, ||w||_Linf / |||w|||)` for a smooth trial function:
/// lower bounds for the Friedrichs and Sobolev constants. The sup norm is
/// sampled on a `grid x grid` lattice over the bounding box of the domain.
pub fn rayleigh_lower_bounds(w: &Expr, domain: Domain, quad_degree: usize, grid: usize) -> Result<(f64, f64)> {
    if grid < 2 {
        return Err(Error::InvalidArgument(String::from("grid needs at least 2 points")));
    }
    let mesh = domain.base_mesh()?;
    let rule = QuadratureRule::triangle(quad_degree);
    let [hxx, hxy, hyy] = w.hessian();
    let (mut l2, mut energy) = (0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let corners = mesh.triangle_points(t);
        let area = mesh.area(t);
        l2 += rule.integrate(&corners, area, |p| w.eval(p).powi(2));
        energy += rule.integrate(&corners, area, |p| {
            hxx.eval(p).powi(2) + 2.0 * hxy.eval(p).powi(2) + hyy.eval(p).powi(2)
        });
    }
    let energy = energy.sqrt();
    if energy.is_nan() || energy <= 0.0 {
        return Err(Error::InvalidArgument(String::from(
            "trial function has zero energy norm",
        )));
    }
    let step = 1.0 / (grid - 1) as f64;
    let mut sup: f64 = 0.0;
    for i in 0..grid {
        for j in 0..grid {
            let p = [-0.5 + i as f64 * step, -0.5 + j as f64 * step];
            if domain.contains(p) {
                sup = sup.max(w.eval(p).abs());
            }
        }
    }
    Ok((l2.sqrt() / energy, sup / energy))
}

/// The trial function `(x+1/2)^2 (y+1/2)^2 (1/2-x)^2 (1/2-y)^2`.
pub fn square_bubble() -> Expr {
    Expr::parse("(x + 0.5)^2 * (y + 0.5)^2 * (0.5 - x)^2 * (0.5 - y)^2").expect("bubble parses")
}

/// `sqrt(3) C_S C_F ||f||_L2`, a lower bound for `C_S M(f, chi)`.
pub fn smallness_bound(
    load: &dyn Fn(Point) -> f64,
    c_s: f64,
    c_f: f64,
    mesh: &Triangulation,
    quad_degree: usize,
) -> Result<f64> {
    if !(c_s > 0.0 && c_f > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "constants must be positive, got C_S = {c_s}, C_F = {c_f}"
        )));
    }
    Ok(3f64.sqrt() * c_s * c_f * l2_norm(load, mesh, quad_degree))
}

/// The uniqueness threshold `sqrt(2) - 1`.
pub const SMALLNESS_THRESHOLD: f64 = std::f64::consts::SQRT_2 - 1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallnessReport {
    pub ratio_l2: f64,
    pub ratio_linf: f64,
    pub load_l2: f64,
    pub bound: f64,
    pub threshold: f64,
}

impl SmallnessReport {
    /// Whether the lower bound already exceeds the threshold.
    pub fn violated(&self) -> bool {
        self.bound >= self.threshold
    }
}

/// Ratios from the bubble trial function on the square, and the resulting
/// bound for `problem`'s load.
pub fn check_smallness(problem: &Problem, grid: usize) -> Result<SmallnessReport> {
    let (ratio_l2, ratio_linf) = rayleigh_lower_bounds(&square_bubble(), Domain::Square, 16, grid)?;
    let mesh = problem.domain.base_mesh()?;
    let degree = problem.l2_quad_degree();
    let load = problem.load_fn();
    let load_l2 = l2_norm(|p| load(p), &mesh, degree);
    let bound = smallness_bound(&*load, ratio_linf, ratio_l2, &mesh, degree)?;
    Ok(SmallnessReport {
        ratio_l2,
        ratio_linf,
        load_l2,
        bound,
        threshold: SMALLNESS_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub scale: f64,
    pub level: usize,
    pub status: Status,
    pub outer_iters: usize,
}

/// Solves with obstacle `scale * chi` for every scale and level.
///
/// Cycle detection is always on here. Past the smallness threshold the
/// inner Newton solves fail and the active sets wander chaotically, so
/// an occasional run can stumble onto a consistent active set after many
/// steps; a recurring active set is the reproducible sign of divergence.
pub fn obstacle_scaling_sweep(
    problem: &Problem,
    scales: &[f64],
    levels: &[usize],
    options: &SolverOptions,
) -> Result<Vec<SweepRecord>> {
    if let Some(&bad) = scales.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be nonnegative, got {bad}")));
    }
    let options = &SolverOptions {
        detect_cycles: true,
        ..options.clone()
    };
    let finest = levels.iter().copied().max().unwrap_or(0);
    let hierarchy = problem.domain.hierarchy(finest)?;
    let jobs: Vec<(f64, usize)> = scales
        .iter()
        .flat_map(|&s| levels.iter().map(move |&l| (s, l)))
        .collect();
    jobs.par_iter()
        .map(|&(scale, level)| {
            let mesh = hierarchy
                .level(level)
                .ok_or_else(|| Error::InvalidArgument(format!("level {level} unavailable")))?;
            let scaled = problem.with_scaled_obstacle(scale);
            let r = solve(&spec_for(&scaled, mesh, options)?)?;
            Ok(SweepRecord {
                scale,
                level,
                status: r.status,
                outer_iters: r.outer_iterations(),
            })
        })
        .collect()
}
