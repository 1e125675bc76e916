//! Triangulations of polygonal domains and uniform red refinement.
//!
//! Vertex indices are stable under refinement: level `l + 1` keeps every
//! vertex of level `l` at its old index and appends one midpoint per edge,
//! so a vertex index means the same point on every finer level.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Diagonal used to split the three squares of the L-shaped domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LShapeDiagonal {
    /// All diagonals parallel to `y = -x`.
    #[default]
    Falling,
    /// All diagonals parallel to `y = x`.
    Rising,
    /// Every diagonal ends at the re-entrant corner (0, 0).
    TowardCorner,
    AwayFromCorner,
}

impl FromStr for LShapeDiagonal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward_corner" => Ok(Self::TowardCorner),
            "away_from_corner" => Ok(Self::AwayFromCorner),
            "rising" => Ok(Self::Rising),
            "falling" => Ok(Self::Falling),
            other => Err(Error::InvalidArgument(format!(
                "unknown lshape_diagonal '{other}' (expected toward_corner | away_from_corner | rising | falling)"
            ))),
        }
    }
}

impl std::fmt::Display for LShapeDiagonal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TowardCorner => "toward_corner",
            Self::AwayFromCorner => "away_from_corner",
            Self::Rising => "rising",
            Self::Falling => "falling",
        })
    }
}

/// A conforming triangulation with edge connectivity.
///
/// Local edge `i` of a triangle is the edge opposite its local vertex `i`.
/// Global edges run from the lower to the higher vertex index; the global
/// edge normal is the tangent rotated by +90 degrees. `edge_signs[t][i]` is
/// `+1` when that global normal points out of triangle `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    edge_signs: Vec<[f64; 3]>,
    boundary_vertex: Vec<bool>,
    boundary_edge: Vec<bool>,
    level: usize,
    parent_triangle: Option<Vec<usize>>,
    label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStatistics {
    pub h_max: f64,
    pub min_angle: f64,
    pub n_vertices: usize,
    pub n_triangles: usize,
    pub n_edges: usize,
    pub interior_vertices: usize,
    pub boundary_vertices: usize,
    pub interior_edges: usize,
    pub boundary_edges: usize,
    pub area: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn distance(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

impl Triangulation {
    /// Builds a level-0 triangulation from vertex coordinates and
    /// counterclockwise vertex triples.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::build(vertices, triangles, 0, None, String::from("custom"))
    }

    fn build(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        level: usize,
        parent_triangle: Option<Vec<usize>>,
        label: String,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let h = distance(a, b).max(distance(b, c)).max(distance(c, a));
            if signed_area(a, b, c) <= 1e-14 * h * h {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate or clockwise")));
            }
        }

        // (lo, hi, triangle, local edge), sorted so the edge numbering is
        // independent of hashing.
        let mut half_edges: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                half_edges.push((a.min(b), a.max(b), t, i));
            }
        }
        half_edges.sort_unstable();

        let mut edges = Vec::new();
        let mut boundary_edge = Vec::new();
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut edge_signs = vec![[0.0; 3]; triangles.len()];
        let mut k = 0;
        while k < half_edges.len() {
            let (lo, hi, _, _) = half_edges[k];
            let mut j = k;
            while j < half_edges.len() && half_edges[j].0 == lo && half_edges[j].1 == hi {
                j += 1;
            }
            let count = j - k;
            if count > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({lo}, {hi}) is shared by {count} triangles"
                )));
            }
            let e = edges.len();
            edges.push([lo, hi]);
            boundary_edge.push(count == 1);
            for &(_, _, t, i) in &half_edges[k..j] {
                triangle_edges[t][i] = e;
                // Counterclockwise traversal goes from local vertex i+1 to
                // i+2 and has the outward normal on its right. The global
                // normal is on the left of lo -> hi, so it is outward exactly
                // when the traversal runs hi -> lo.
                let from = triangles[t][(i + 1) % 3];
                edge_signs[t][i] = if from == lo { -1.0 } else { 1.0 };
            }
            k = j;
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, &[a, b]) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[a] = true;
                boundary_vertex[b] = true;
            }
        }
        let mut used = vec![false; vertices.len()];
        for tri in &triangles {
            for &v in tri {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no triangle")));
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            triangle_edges,
            edge_signs,
            boundary_vertex,
            boundary_edge,
            level,
            parent_triangle,
            label,
        })
    }

    /// The square `(-half_width, half_width)^2` split by both diagonals.
    pub fn square_crisscross(half_width: f64) -> Result<Self> {
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "half_width must be positive, got {half_width}"
            )));
        }
        let w = half_width;
        let vertices = vec![[-w, -w], [w, -w], [w, w], [-w, w], [0.0, 0.0]];
        let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        Self::build(vertices, triangles, 0, None, String::from("square"))
    }

    /// `(-0.5, 0.5)^2 \ [0, 0.5]^2` as three squares, each cut by one diagonal.
    pub fn lshape(diagonal: LShapeDiagonal) -> Result<Self> {
        let vertices = vec![
            [-0.5, -0.5], // 0
            [0.0, -0.5],  // 1
            [0.5, -0.5],  // 2
            [-0.5, 0.0],  // 3
            [0.0, 0.0],   // 4 re-entrant corner
            [0.5, 0.0],   // 5
            [-0.5, 0.5],  // 6
            [0.0, 0.5],   // 7
        ];
        let triangles = match diagonal {
            LShapeDiagonal::TowardCorner => vec![[0, 1, 4], [0, 4, 3], [1, 2, 4], [2, 5, 4], [3, 4, 6], [4, 7, 6]],
            LShapeDiagonal::AwayFromCorner => vec![[0, 1, 3], [1, 4, 3], [1, 2, 5], [1, 5, 4], [3, 4, 7], [3, 7, 6]],
            LShapeDiagonal::Rising => vec![[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4], [3, 4, 7], [3, 7, 6]],
            LShapeDiagonal::Falling => vec![[0, 1, 3], [1, 4, 3], [1, 2, 4], [2, 5, 4], [3, 4, 6], [4, 7, 6]],
        };
        Self::build(vertices, triangles, 0, None, format!("lshape/{diagonal}"))
    }

    /// Uniform red refinement: every triangle splits into four similar
    /// children through its edge midpoints. Children of triangle `t` are
    /// `4t .. 4t + 4`, the last one being the interior child.
    pub fn red_refine(&self) -> Self {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(
            self.edges
                .iter()
                .map(|&[a, b]| midpoint(self.vertices[a], self.vertices[b])),
        );
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut parent = Vec::with_capacity(4 * self.triangles.len());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = self.triangle_edges[t];
            let (m0, m1, m2) = (nv + e0, nv + e1, nv + e2);
            triangles.push([a, m2, m1]);
            triangles.push([m2, b, m0]);
            triangles.push([m1, m0, c]);
            triangles.push([m0, m1, m2]);
            parent.extend([t; 4]);
        }
        Self::build(vertices, triangles, self.level + 1, Some(parent), self.label.clone())
            .expect("red refinement of a valid mesh is valid")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn edge_signs(&self) -> &[[f64; 3]] {
        &self.edge_signs
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_edge[e]
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn parent_triangle(&self) -> Option<&[usize]> {
        self.parent_triangle.as_deref()
    }

    /// Domain tag, e.g. `square` or `lshape/toward_corner`.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        distance(a, b).max(distance(b, c)).max(distance(c, a))
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        midpoint(self.vertices[a], self.vertices[b])
    }

    /// Unit normal of global edge `e` (tangent rotated by +90 degrees).
    pub fn edge_normal(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = distance(pa, pb);
        [-(pb[1] - pa[1]) / len, (pb[0] - pa[0]) / len]
    }

    pub fn h_max(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn statistics(&self) -> MeshStatistics {
        let mut min_angle = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cross = u[0] * v[1] - u[1] * v[0];
                let dot = u[0] * v[0] + u[1] * v[1];
                min_angle = min_angle.min(cross.abs().atan2(dot));
            }
        }
        let boundary_vertices = self.boundary_vertex.iter().filter(|&&b| b).count();
        let boundary_edges = self.boundary_edge.iter().filter(|&&b| b).count();
        MeshStatistics {
            h_max: self.h_max(),
            min_angle,
            n_vertices: self.vertices.len(),
            n_triangles: self.triangles.len(),
            n_edges: self.edges.len(),
            interior_vertices: self.vertices.len() - boundary_vertices,
            boundary_vertices,
            interior_edges: self.edges.len() - boundary_edges,
            boundary_edges,
            area: self.total_area(),
        }
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let area = signed_area(a, b, c);
        [
            signed_area(p, b, c) / area,
            signed_area(a, p, c) / area,
            signed_area(a, b, p) / area,
        ]
    }

    /// Writes the plain-text `vkfem-mesh 1` format.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "vkfem-mesh 1").unwrap();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for p in &self.vertices {
            writeln!(s, "{:.16e} {:.16e}", p[0], p[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    /// Reads the `vkfem-mesh 1` format. The result is a level-0 mesh.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::Format {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let fmt_err = |line: usize, message: String| Error::Format { line, message };

        let (n, header) = next("header")?;
        if header.trim() != "vkfem-mesh 1" {
            return Err(fmt_err(n, format!("bad header '{}'", header.trim())));
        }
        let count = |n: usize, line: &str, key: &str| -> Result<usize> {
            let mut it = line.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(k), Some(Ok(c)), None) if k == key => Ok(c),
                _ => Err(fmt_err(n, format!("expected '{key} <count>'"))),
            }
        };
        let (n, line) = next("vertex count")?;
        let nv = count(n, &line, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, line) = next("vertex")?;
            let xs: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(n, format!("bad coordinate: {e}")))?;
            if xs.len() != 2 {
                return Err(fmt_err(n, "expected 'x y'".into()));
            }
            vertices.push([xs[0], xs[1]]);
        }
        let (n, line) = next("triangle count")?;
        let nt = count(n, &line, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (n, line) = next("triangle")?;
            let ix: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(n, format!("bad vertex index: {e}")))?;
            if ix.len() != 3 {
                return Err(fmt_err(n, "expected 'i j k'".into()));
            }
            triangles.push([ix[0], ix[1], ix[2]]);
        }
        Self::from_parts(vertices, triangles)
    }
}

/// A chain of successively red-refined triangulations.
#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    levels: Vec<Arc<Triangulation>>,
}

impl MeshHierarchy {
    /// Refines `base` until the finest level equals `finest_level`.
    pub fn new(base: Triangulation, finest_level: usize) -> Result<Self> {
        if base.level > finest_level {
            return Err(Error::InvalidArgument(format!(
                "base level {} exceeds requested finest level {finest_level}",
                base.level
            )));
        }
        let mut levels = vec![Arc::new(base)];
        while levels.last().unwrap().level < finest_level {
            let next = levels.last().unwrap().red_refine();
            levels.push(Arc::new(next));
        }
        Ok(Self { levels })
    }

    pub fn base_level(&self) -> usize {
        self.levels[0].level
    }

    pub fn finest_level(&self) -> usize {
        self.levels.last().unwrap().level
    }

    pub fn level(&self, level: usize) -> Option<&Arc<Triangulation>> {
        level.checked_sub(self.base_level()).and_then(|i| self.levels.get(i))
    }

    /// Index of the level-`coarse` ancestor of triangle `t` of level `fine`.
    pub fn ancestor(&self, fine: usize, t: usize, coarse: usize) -> Result<usize> {
        if coarse > fine {
            return Err(Error::NotNested(format!("level {coarse} is finer than {fine}")));
        }
        let mut t = t;
        for l in (coarse + 1..=fine).rev() {
            let mesh = self
                .level(l)
                .ok_or_else(|| Error::NotNested(format!("level {l} missing")))?;
            let parents = mesh
                .parent_triangle()
                .ok_or_else(|| Error::NotNested(format!("level {l} has no parent links")))?;
            t = parents[t];
        }
        Ok(t)
    }
}
