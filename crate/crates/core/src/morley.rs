//! The Morley nonconforming element: degrees of freedom, local quadratic
//! shape functions, interpolation and piecewise norms.
//!
//! Degrees of freedom are vertex values and edge means of the normal
//! derivative along the global edge normal. For quadratics the normal
//! derivative is linear along an edge, so its mean is the midpoint value.

use std::io::{BufRead, Write};
use std::sync::Arc;

use faer::prelude::*;
use faer::Mat;

use crate::error::{Error, Result};
use crate::mesh::{Point, Triangulation};
use crate::quadrature::gauss_legendre;

/// A constant symmetric 2x2 matrix, used for piecewise Hessians.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Hessian {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Hessian {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    /// Frobenius inner product `H : G`.
    pub fn frobenius_dot(&self, other: &Hessian) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.frobenius_dot(self)
    }

    /// The von Karman bracket of two functions with these Hessians.
    pub fn bracket(&self, other: &Hessian) -> f64 {
        self.xx * other.yy + self.yy * other.xx - 2.0 * self.xy * other.xy
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(s * self.xx, s * self.xy, s * self.yy)
    }

    pub fn as_matrix(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

impl std::ops::Add for Hessian {
    type Output = Hessian;
    fn add(self, o: Hessian) -> Hessian {
        Hessian::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl std::ops::Sub for Hessian {
    type Output = Hessian;
    fn sub(self, o: Hessian) -> Hessian {
        Hessian::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

/// A quadratic on one triangle, stored as coefficients of
/// `1, dx, dy, dx^2, dx dy, dy^2` with `dx = x - origin.x`, `dy = y - origin.y`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalQuadratic {
    pub origin: Point,
    pub coeffs: [f64; 6],
}

impl LocalQuadratic {
    pub fn value(&self, p: Point) -> f64 {
        let (dx, dy) = (p[0] - self.origin[0], p[1] - self.origin[1]);
        let c = &self.coeffs;
        c[0] + c[1] * dx + c[2] * dy + c[3] * dx * dx + c[4] * dx * dy + c[5] * dy * dy
    }

    pub fn gradient(&self, p: Point) -> [f64; 2] {
        let (dx, dy) = (p[0] - self.origin[0], p[1] - self.origin[1]);
        let c = &self.coeffs;
        [c[1] + 2.0 * c[3] * dx + c[4] * dy, c[2] + c[4] * dx + 2.0 * c[5] * dy]
    }

    pub fn hessian(&self) -> Hessian {
        let c = &self.coeffs;
        Hessian::new(2.0 * c[3], c[4], 2.0 * c[5])
    }

    /// Same polynomial expanded about another origin.
    pub fn recentered(&self, origin: Point) -> Self {
        let g = self.gradient(origin);
        let c = &self.coeffs;
        Self {
            origin,
            coeffs: [self.value(origin), g[0], g[1], c[3], c[4], c[5]],
        }
    }

    fn axpy(&mut self, a: f64, other: &LocalQuadratic) {
        debug_assert_eq!(self.origin, other.origin);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }
}

/// Which degrees of freedom exist on the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Clamped plate: boundary vertex values and boundary normal-derivative
    /// means vanish, so boundary vertices and edges carry no unknown.
    #[default]
    Clamped,
    /// Every vertex and edge carries a degree of freedom.
    Free,
}

/// Global numbering: vertex degrees of freedom first, then edges, each in
/// increasing mesh index order.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    n_dofs: usize,
    n_vertex_dofs: usize,
    vertex_dof: Vec<Option<usize>>,
    edge_dof: Vec<Option<usize>>,
    boundary: Boundary,
}

impl DofMap {
    pub fn new(mesh: &Triangulation, boundary: Boundary) -> Self {
        let keep_vertex = |v: usize| boundary == Boundary::Free || !mesh.is_boundary_vertex(v);
        let keep_edge = |e: usize| boundary == Boundary::Free || !mesh.is_boundary_edge(e);
        let mut next = 0;
        let vertex_dof: Vec<Option<usize>> = (0..mesh.n_vertices())
            .map(|v| {
                keep_vertex(v).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let n_vertex_dofs = next;
        let edge_dof = (0..mesh.n_edges())
            .map(|e| {
                keep_edge(e).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self {
            n_dofs: next,
            n_vertex_dofs,
            vertex_dof,
            edge_dof,
            boundary,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_vertex_dofs(&self) -> usize {
        self.n_vertex_dofs
    }

    pub fn vertex_dof(&self, v: usize) -> Option<usize> {
        self.vertex_dof[v]
    }

    pub fn edge_dof(&self, e: usize) -> Option<usize> {
        self.edge_dof[e]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Mesh vertex carrying each vertex degree of freedom.
    pub fn dof_vertices(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_vertex_dofs];
        for (v, d) in self.vertex_dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = v;
            }
        }
        out
    }

    pub fn is_vertex_dof(&self, dof: usize) -> bool {
        dof < self.n_vertex_dofs
    }
}

/// Precomputed data of one triangle.
#[derive(Debug, Clone)]
pub struct Element {
    pub area: f64,
    /// Global index of each local degree of freedom: vertices 0..3, then
    /// the edges opposite those vertices.
    pub dofs: [Option<usize>; 6],
    pub basis: [LocalQuadratic; 6],
    pub hessians: [Hessian; 6],
    /// `\int_T phi_i`.
    pub integrals: [f64; 6],
}

/// Shape functions of triangle `t` dual to its six degrees of freedom, the
/// edge ones taken along the global edge normal.
pub fn local_basis(mesh: &Triangulation, t: usize) -> Result<[LocalQuadratic; 6]> {
    let corners = mesh.triangle_points(t);
    let area = mesh.area(t);
    let h = mesh.diameter(t);
    if area < 1e-14 * h * h {
        return Err(Error::DegenerateTriangle(t));
    }
    let origin = [
        (corners[0][0] + corners[1][0] + corners[2][0]) / 3.0,
        (corners[0][1] + corners[1][1] + corners[2][1]) / 3.0,
    ];
    let scaled = |p: Point| [(p[0] - origin[0]) / h, (p[1] - origin[1]) / h];

    // Rows: degrees of freedom applied to the scaled monomials
    // 1, s, r, s^2, s r, r^2 with s = dx / h, r = dy / h.
    let mut dofs = Mat::<f64>::zeros(6, 6);
    for i in 0..3 {
        let [s, r] = scaled(corners[i]);
        for (j, m) in [1.0, s, r, s * s, s * r, r * r].into_iter().enumerate() {
            dofs[(i, j)] = m;
        }
    }
    for e in 0..3 {
        let a = corners[(e + 1) % 3];
        let b = corners[(e + 2) % 3];
        let [s, r] = scaled([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        let mesh_edge = mesh.triangle_edges()[t][e];
        let n = mesh.edge_normal(mesh_edge);
        // d/dn in scaled variables; the physical derivative is this over h
        let grads = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [2.0 * s, 0.0],
            [r, s],
            [0.0, 2.0 * r],
        ];
        for (j, g) in grads.iter().enumerate() {
            dofs[(3 + e, j)] = n[0] * g[0] + n[1] * g[1];
        }
    }
    // Edge functionals in physical units are the scaled ones divided by h,
    // so the dual shape has scaled functional value h.
    let rhs = Mat::<f64>::from_fn(6, 6, |i, j| match (i == j, i >= 3) {
        (true, false) => 1.0,
        (true, true) => h,
        _ => 0.0,
    });
    let coeffs = dofs.partial_piv_lu().solve(&rhs);
    let degree_scale = [1.0, 1.0 / h, 1.0 / h, 1.0 / (h * h), 1.0 / (h * h), 1.0 / (h * h)];
    let mut basis = [LocalQuadratic::default(); 6];
    for (k, shape) in basis.iter_mut().enumerate() {
        shape.origin = origin;
        for j in 0..6 {
            shape.coeffs[j] = coeffs[(j, k)] * degree_scale[j];
        }
    }
    Ok(basis)
}

/// The Morley space on one mesh: degree-of-freedom map plus per-triangle
/// shape functions.
#[derive(Debug)]
pub struct MorleySpace {
    mesh: Arc<Triangulation>,
    dofs: DofMap,
    elements: Vec<Element>,
}

impl MorleySpace {
    pub fn new(mesh: Arc<Triangulation>) -> Result<Arc<Self>> {
        Self::with_boundary(mesh, Boundary::Clamped)
    }

    pub fn with_boundary(mesh: Arc<Triangulation>, boundary: Boundary) -> Result<Arc<Self>> {
        let dofs = DofMap::new(&mesh, boundary);
        let mut elements = Vec::with_capacity(mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let basis = local_basis(&mesh, t)?;
            let tri = mesh.triangles()[t];
            let te = mesh.triangle_edges()[t];
            let mut local = [None; 6];
            for i in 0..3 {
                local[i] = dofs.vertex_dof(tri[i]);
                local[3 + i] = dofs.edge_dof(te[i]);
            }
            let area = mesh.area(t);
            let corners = mesh.triangle_points(t);
            let mids: Vec<Point> = (0..3)
                .map(|i| {
                    let (a, b) = (corners[(i + 1) % 3], corners[(i + 2) % 3]);
                    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
                })
                .collect();
            let integrals = basis.map(|q| area / 3.0 * mids.iter().map(|&m| q.value(m)).sum::<f64>());
            elements.push(Element {
                area,
                dofs: local,
                hessians: basis.map(|q| q.hessian()),
                basis,
                integrals,
            });
        }
        Ok(Arc::new(Self { mesh, dofs, elements }))
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, t: usize) -> &Element {
        &self.elements[t]
    }

    pub fn zero_field(self: &Arc<Self>) -> MorleyField {
        MorleyField {
            space: Arc::clone(self),
            values: vec![0.0; self.n_dofs()],
        }
    }

    pub fn field(self: &Arc<Self>, values: Vec<f64>) -> Result<MorleyField> {
        if values.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                actual: values.len(),
            });
        }
        Ok(MorleyField {
            space: Arc::clone(self),
            values,
        })
    }

    /// Morley interpolation of a smooth `w` with gradient `grad`. Vertex
    /// values are sampled; edge normal-derivative means use three Gauss
    /// points. Degrees of freedom absent from the space are dropped.
    pub fn interpolate<W, G>(self: &Arc<Self>, w: W, grad: G) -> MorleyField
    where
        W: Fn(Point) -> f64,
        G: Fn(Point) -> [f64; 2],
    {
        let (gx, gw) = gauss_legendre(3);
        let mesh = &self.mesh;
        let mut values = vec![0.0; self.n_dofs()];
        for (v, &p) in mesh.vertices().iter().enumerate() {
            if let Some(d) = self.dofs.vertex_dof(v) {
                values[d] = w(p);
            }
        }
        for (e, &[a, b]) in mesh.edges().iter().enumerate() {
            let Some(d) = self.dofs.edge_dof(e) else {
                continue;
            };
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let n = mesh.edge_normal(e);
            values[d] = gx
                .iter()
                .zip(&gw)
                .map(|(&x, &wt)| {
                    let s = 0.5 * (x + 1.0);
                    let p = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    let g = grad(p);
                    0.5 * wt * (g[0] * n[0] + g[1] * n[1])
                })
                .sum();
        }
        MorleyField {
            space: Arc::clone(self),
            values,
        }
    }
}

/// Derivative order requested from [`MorleyField::evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Value(f64),
    Gradient([f64; 2]),
    Hessian(Hessian),
}

/// Coefficients of one discrete function in a [`MorleySpace`].
#[derive(Debug, Clone)]
pub struct MorleyField {
    space: Arc<MorleySpace>,
    values: Vec<f64>,
}

impl PartialEq for MorleyField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) && self.values == other.values
    }
}

impl MorleyField {
    pub fn space(&self) -> &Arc<MorleySpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_space(&self, other: &MorleyField) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }

    pub fn scaled(&self, c: f64) -> MorleyField {
        MorleyField {
            space: Arc::clone(&self.space),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Restriction to triangle `t` as one quadratic.
    pub fn local(&self, t: usize) -> LocalQuadratic {
        let el = &self.space.elements[t];
        let mut q = LocalQuadratic {
            origin: el.basis[0].origin,
            coeffs: [0.0; 6],
        };
        for (k, d) in el.dofs.iter().enumerate() {
            if let Some(d) = d {
                q.axpy(self.values[*d], &el.basis[k]);
            }
        }
        q
    }

    /// The constant Hessian on triangle `t`.
    pub fn hessian(&self, t: usize) -> Hessian {
        let el = &self.space.elements[t];
        el.dofs
            .iter()
            .zip(&el.hessians)
            .filter_map(|(d, h)| d.map(|d| h.scaled(self.values[d])))
            .fold(Hessian::default(), |acc, h| acc + h)
    }

    /// `\int_T u` for the restriction to triangle `t`.
    pub fn integral(&self, t: usize) -> f64 {
        let el = &self.space.elements[t];
        el.dofs
            .iter()
            .zip(&el.integrals)
            .filter_map(|(d, m)| d.map(|d| m * self.values[d]))
            .sum()
    }

    /// Value at mesh vertex `v`; zero where the space has no vertex unknown.
    pub fn vertex_value(&self, v: usize) -> f64 {
        self.space.dofs.vertex_dof(v).map_or(0.0, |d| self.values[d])
    }

    pub fn evaluate(&self, t: usize, p: Point, order: Order) -> Result<Evaluation> {
        let mesh = &self.space.mesh;
        if t >= mesh.n_triangles() {
            return Err(Error::InvalidArgument(format!("no triangle {t}")));
        }
        if mesh.barycentric(t, p).iter().any(|&b| b < -1e-10) {
            return Err(Error::PointOutsideTriangle {
                triangle: t,
                x: p[0],
                y: p[1],
            });
        }
        let q = self.local(t);
        Ok(match order {
            Order::Value => Evaluation::Value(q.value(p)),
            Order::Gradient => Evaluation::Gradient(q.gradient(p)),
            Order::Hessian => Evaluation::Hessian(q.hessian()),
        })
    }

    /// `|||u|||_pw`, the L2 norm of the piecewise Hessian.
    pub fn energy_norm_pw(&self) -> f64 {
        (0..self.space.elements.len())
            .map(|t| self.space.elements[t].area * self.hessian(t).frobenius_norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Writes `vkfem-field 1` followed by `index value` per degree of freedom.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::with_capacity(32 * self.values.len() + 16);
        s.push_str("vkfem-field 1\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i} {v:.16e}\n"));
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(space: &Arc<MorleySpace>, input: R) -> Result<MorleyField> {
        let mut values = Vec::with_capacity(space.n_dofs());
        let mut saw_header = false;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Format { line: n + 1, message };
            if !saw_header {
                if line != "vkfem-field 1" {
                    return Err(err(format!("bad header '{line}'")));
                }
                saw_header = true;
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(i), Some(v), None) = (it.next(), it.next(), it.next()) else {
                return Err(err("expected 'index value'".into()));
            };
            let i: usize = i.parse().map_err(|e| err(format!("bad index: {e}")))?;
            let v: f64 = v.parse().map_err(|e| err(format!("bad value: {e}")))?;
            if i != values.len() {
                return Err(err(format!("expected index {}, found {i}", values.len())));
            }
            values.push(v);
        }
        if !saw_header {
            return Err(Error::Format {
                line: 0,
                message: "empty field file".into(),
            });
        }
        space.field(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{LShapeDiagonal, Triangulation};

    fn square(level: usize) -> Arc<Triangulation> {
        let mut m = Triangulation::square_crisscross(0.5).unwrap();
        for _ in 0..level {
            m = m.red_refine();
        }
        Arc::new(m)
    }

    /// Applies the six degrees of freedom of triangle `t` to `q`.
    fn apply_dofs(mesh: &Triangulation, t: usize, q: &LocalQuadratic) -> [f64; 6] {
        let c = mesh.triangle_points(t);
        let mut out = [0.0; 6];
        for i in 0..3 {
            out[i] = q.value(c[i]);
            let (a, b) = (c[(i + 1) % 3], c[(i + 2) % 3]);
            let n = mesh.edge_normal(mesh.triangle_edges()[t][i]);
            // Simpson along the edge is exact for the linear normal derivative
            let g = |p: Point| {
                let g = q.gradient(p);
                g[0] * n[0] + g[1] * n[1]
            };
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            out[3 + i] = (g(a) + 4.0 * g(m) + g(b)) / 6.0;
        }
        out
    }

    #[test]
    fn dof_counts() {
        let m0 = square(0);
        let d0 = DofMap::new(&m0, Boundary::Clamped);
        assert_eq!(d0.n_dofs(), 5);
        assert_eq!(d0.n_vertex_dofs(), 1);
        let m1 = square(1);
        let d1 = DofMap::new(&m1, Boundary::Clamped);
        assert_eq!(d1.n_dofs(), 25);
        let s = m1.statistics();
        assert_eq!(d1.n_dofs(), s.interior_vertices + s.interior_edges);
        let free = DofMap::new(&m1, Boundary::Free);
        assert_eq!(free.n_dofs(), m1.n_vertices() + m1.n_edges());
    }

    #[test]
    fn duality_on_every_triangle() {
        for mesh in [
            square(2),
            Arc::new(
                Triangulation::lshape(LShapeDiagonal::TowardCorner)
                    .unwrap()
                    .red_refine(),
            ),
        ] {
            for t in 0..mesh.n_triangles() {
                let basis = local_basis(&mesh, t).unwrap();
                for (k, q) in basis.iter().enumerate() {
                    let d = apply_dofs(&mesh, t, q);
                    for (j, v) in d.iter().enumerate() {
                        let expected = if j == k { 1.0 } else { 0.0 };
                        assert!((v - expected).abs() < 1e-10, "t={t} k={k} j={j}: {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn reference_triangle_matches_dense_duality_solve() {
        let mesh = Triangulation::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let basis = local_basis(&mesh, 0).unwrap();
        // Independent route: Gauss-Jordan on the duality conditions in plain
        // monomials x^a y^b about the origin.
        let mono = |p: Point| {
            let (x, y) = (p[0], p[1]);
            [1.0, x, y, x * x, x * y, y * y]
        };
        let mono_grad = |p: Point| {
            let (x, y) = (p[0], p[1]);
            [
                [0.0, 0.0],
                [1.0, 0.0],
                [0.0, 1.0],
                [2.0 * x, 0.0],
                [y, x],
                [0.0, 2.0 * y],
            ]
        };
        let c = mesh.triangle_points(0);
        let mut m = [[0.0; 12]; 6];
        for i in 0..3 {
            m[i][..6].copy_from_slice(&mono(c[i]));
            let (a, b) = (c[(i + 1) % 3], c[(i + 2) % 3]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let n = mesh.edge_normal(mesh.triangle_edges()[0][i]);
            for (j, g) in mono_grad(mid).iter().enumerate() {
                m[3 + i][j] = g[0] * n[0] + g[1] * n[1];
            }
        }
        for i in 0..6 {
            m[i][6 + i] = 1.0;
        }
        for col in 0..6 {
            let piv = (col..6)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            let p = m[col][col];
            for k in 0..12 {
                m[col][k] /= p;
            }
            for r in 0..6 {
                if r != col {
                    let f = m[r][col];
                    for k in 0..12 {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
        for (k, q) in basis.iter().enumerate() {
            let q0 = q.recentered([0.0, 0.0]);
            for j in 0..6 {
                assert!((q0.coeffs[j] - m[j][6 + k]).abs() < 1e-12, "shape {k} coeff {j}");
            }
        }
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        // from_parts refuses flat triangles, so the basis can only see valid ones
        assert!(Triangulation::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn quadratic_reproduction_free_space() {
        let space = MorleySpace::with_boundary(square(2), Boundary::Free).unwrap();
        let q = |p: Point| 0.3 - 1.1 * p[0] + 0.7 * p[1] + 2.0 * p[0] * p[0] - 0.4 * p[0] * p[1] + 1.5 * p[1] * p[1];
        let grad = |p: Point| [-1.1 + 4.0 * p[0] - 0.4 * p[1], 0.7 - 0.4 * p[0] + 3.0 * p[1]];
        let f = space.interpolate(q, grad);
        for t in 0..space.mesh().n_triangles() {
            let local = f.local(t).recentered([0.0, 0.0]);
            let expected = [0.3, -1.1, 0.7, 2.0, -0.4, 1.5];
            for j in 0..6 {
                assert!((local.coeffs[j] - expected[j]).abs() < 1e-12, "t={t} j={j}");
            }
        }
    }

    #[test]
    fn x_squared_hessian_and_norm() {
        let space = MorleySpace::with_boundary(square(1), Boundary::Free).unwrap();
        let f = space.interpolate(|p| p[0] * p[0], |p| [2.0 * p[0], 0.0]);
        for t in 0..space.mesh().n_triangles() {
            let c = space.mesh().triangle_points(t);
            let Evaluation::Hessian(h) = f.evaluate(t, c[0], Order::Hessian).unwrap() else {
                unreachable!()
            };
            assert!((h.xx - 2.0).abs() < 1e-12 && h.xy.abs() < 1e-12 && h.yy.abs() < 1e-12);
        }
        assert!((f.energy_norm_pw() - 2.0).abs() < 1e-12);
        assert!((f.scaled(-3.0).energy_norm_pw() - 6.0).abs() < 1e-11);
    }

    #[test]
    fn zero_field_evaluates_to_zero() {
        let space = MorleySpace::new(square(1)).unwrap();
        let z = space.zero_field();
        let p = space.mesh().triangle_points(3)[1];
        assert_eq!(z.evaluate(3, p, Order::Value).unwrap(), Evaluation::Value(0.0));
        assert_eq!(
            z.evaluate(3, p, Order::Gradient).unwrap(),
            Evaluation::Gradient([0.0, 0.0])
        );
        assert_eq!(z.energy_norm_pw(), 0.0);
    }

    #[test]
    fn evaluate_outside_is_an_error() {
        let space = MorleySpace::new(square(1)).unwrap();
        let z = space.zero_field();
        assert!(matches!(
            z.evaluate(0, [10.0, 10.0], Order::Value),
            Err(Error::PointOutsideTriangle { .. })
        ));
    }

    #[test]
    fn continuity_at_interior_vertices() {
        let space = MorleySpace::new(square(2)).unwrap();
        let values: Vec<f64> = (0..space.n_dofs())
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0)
            .collect();
        let f = space.field(values).unwrap();
        let mesh = space.mesh();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &v in tri {
                let p = mesh.vertices()[v];
                let Evaluation::Value(x) = f.evaluate(t, p, Order::Value).unwrap() else {
                    unreachable!()
                };
                assert!((x - f.vertex_value(v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_mean_property_on_cubic() {
        // D^2_pw I_M w equals the triangle mean of D^2 w; for w = x^3 the
        // mean of w_xx = 6x is 6 times the centroid abscissa.
        let space = MorleySpace::with_boundary(square(2), Boundary::Free).unwrap();
        let f = space.interpolate(
            |p| p[0].powi(3) + p[0] * p[1] * p[1],
            |p| [3.0 * p[0] * p[0] + p[1] * p[1], 2.0 * p[0] * p[1]],
        );
        let rule = crate::quadrature::QuadratureRule::triangle(4);
        let mesh = space.mesh();
        for t in 0..mesh.n_triangles() {
            let c = mesh.triangle_points(t);
            let a = mesh.area(t);
            let mean = |g: &dyn Fn(Point) -> f64| rule.integrate(&c, a, g) / a;
            let h = f.hessian(t);
            assert!((h.xx - mean(&|p| 6.0 * p[0])).abs() < 1e-10);
            assert!((h.xy - mean(&|p| 2.0 * p[1])).abs() < 1e-10);
            assert!((h.yy - mean(&|p| 2.0 * p[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn field_text_round_trip() {
        let space = MorleySpace::new(square(1)).unwrap();
        let f = space.field((0..25).map(|i| (i as f64).sin() / 3.0).collect()).unwrap();
        let mut buf = Vec::new();
        f.write_text(&mut buf).unwrap();
        let g = MorleyField::read_text(&space, buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert!(MorleyField::read_text(&space, "vkfem-field 1\n0 1.0\n".as_bytes()).is_err());
    }
}
