//! Quadrature on triangles and intervals.

use crate::mesh::Point;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "at least one Gauss point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp;
        loop {
            // P_n(z) and P_{n-1}(z) by the three-term recurrence
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / dp;
            z -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// A rule on the reference triangle in barycentric coordinates. Weights
/// sum to one; multiply by the triangle area when applying.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Collapsed-square product rule exact for polynomials of total degree
    /// `degree`. The Duffy map adds one degree in the collapsed direction.
    pub fn triangle(degree: usize) -> Self {
        let n = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            let s = 0.5 * (x[i] + 1.0);
            for j in 0..n {
                let r = 0.5 * (x[j] + 1.0);
                let t = r * (1.0 - s);
                points.push([1.0 - s - t, s, t]);
                // 1/4 from the two interval maps, 2 to normalise the area 1/2
                weights.push(0.5 * w[i] * w[j] * (1.0 - s));
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    /// The three edge midpoints, exact for quadratics.
    pub fn edge_midpoints() -> Self {
        Self {
            points: vec![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical points of the rule on the triangle `corners`.
    pub fn map(&self, corners: &[Point; 3]) -> impl Iterator<Item = (Point, f64)> + '_ {
        let corners = *corners;
        self.points.iter().zip(&self.weights).map(move |(b, &w)| {
            let x = b[0] * corners[0][0] + b[1] * corners[1][0] + b[2] * corners[2][0];
            let y = b[0] * corners[0][1] + b[1] * corners[1][1] + b[2] * corners[2][1];
            ([x, y], w)
        })
    }

    /// Integral of `f` over the triangle `corners` with the given area.
    pub fn integrate<F: Fn(Point) -> f64>(&self, corners: &[Point; 3], area: f64, f: F) -> f64 {
        area * self.map(corners).map(|(p, w)| w * f(p)).sum::<f64>()
    }
}
