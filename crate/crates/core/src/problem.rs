//! Problem definitions: domain, obstacle and load.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::mesh::{LShapeDiagonal, MeshHierarchy, Point, Triangulation};

/// A scalar function of position, shareable across threads.
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// `0.5 (-1, 1)^2` with the criss-cross base mesh.
    Square,
    /// `(-0.5, 0.5)^2 \ [0, 0.5]^2`.
    LShape(LShapeDiagonal),
}

impl Domain {
    pub fn base_mesh(self) -> Result<Triangulation> {
        match self {
            Domain::Square => Triangulation::square_crisscross(0.5),
            Domain::LShape(d) => Triangulation::lshape(d),
        }
    }

    /// Closure membership test.
    pub fn contains(self, p: Point) -> bool {
        let in_square = p[0].abs() <= 0.5 && p[1].abs() <= 0.5;
        match self {
            Domain::Square => in_square,
            Domain::LShape(_) => in_square && !(p[0] > 0.0 && p[1] > 0.0),
        }
    }

    pub fn hierarchy(self, finest_level: usize) -> Result<MeshHierarchy> {
        MeshHierarchy::new(self.base_mesh()?, finest_level)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Square => write!(f, "square"),
            Domain::LShape(_) => write!(f, "lshape"),
        }
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Domain::Square),
            "lshape" | "l-shape" => Ok(Domain::LShape(LShapeDiagonal::default())),
            _ => Err(Error::InvalidArgument(format!(
                "unknown domain '{s}' (expected square or lshape)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1,
    Example2,
    Example3,
    LShape,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Example1, Preset::Example2, Preset::Example3, Preset::LShape];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example1 => "example1",
            Preset::Example2 => "example2",
            Preset::Example3 => "example3",
            Preset::LShape => "lshape",
        }
    }

    pub fn obstacle_source(self) -> &'static str {
        match self {
            Preset::Example1 | Preset::Example3 => "1 - 5*(x^2 + y^2) + (x^2 + y^2)^2",
            Preset::Example2 => "1 - 5*(x^2 + y^2) - (x^2 + y^2)^2",
            Preset::LShape => "1 - (x + 0.25)^2 / 0.2^2 - y^2 / 0.35^2",
        }
    }

    pub fn load_source(self) -> &'static str {
        match self {
            Preset::Example3 => "(x + 3)^2 * (x - 3)^2 * (y + 3)^2 * (y - 3)^2",
            _ => "0",
        }
    }

    /// Finest level used as the reference solution in refinement studies.
    pub fn reference_level(self) -> usize {
        match self {
            Preset::LShape => 6,
            _ => 7,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown problem '{s}' (expected example1, example2, example3 or lshape)"
            ))
        })
    }
}

/// Domain, obstacle and load of one obstacle problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub domain: Domain,
    pub obstacle: Expr,
    pub load: Expr,
}

impl Problem {
    pub fn preset(preset: Preset) -> Self {
        Self::preset_with_diagonal(preset, LShapeDiagonal::default())
    }

    pub fn preset_with_diagonal(preset: Preset, diagonal: LShapeDiagonal) -> Self {
        let domain = match preset {
            Preset::LShape => Domain::LShape(diagonal),
            _ => Domain::Square,
        };
        Self {
            name: preset.name().to_string(),
            domain,
            obstacle: Expr::parse(preset.obstacle_source()).expect("preset obstacle parses"),
            load: Expr::parse(preset.load_source()).expect("preset load parses"),
        }
    }

    pub fn custom(domain: Domain, obstacle: &str, load: &str) -> Result<Self> {
        Ok(Self {
            name: String::from("custom"),
            domain,
            obstacle: Expr::parse(obstacle)?,
            load: Expr::parse(load)?,
        })
    }

    /// The same problem with obstacle `scale * chi`.
    pub fn with_scaled_obstacle(&self, scale: f64) -> Self {
        Self {
            name: format!("{}*{scale}", self.name),
            domain: self.domain,
            obstacle: Expr::Mul(Box::new(Expr::Num(scale)), Box::new(self.obstacle.clone())),
            load: self.load.clone(),
        }
    }

    pub fn obstacle_fn(&self) -> ScalarFn {
        let e = self.obstacle.clone();
        Arc::new(move |p| e.eval(p))
    }

    pub fn load_fn(&self) -> ScalarFn {
        let e = self.load.clone();
        Arc::new(move |p| e.eval(p))
    }

    /// Quadrature degree for the load vector: exact for polynomial loads,
    /// never below 12.
    pub fn load_quad_degree(&self) -> usize {
        self.load.polynomial_degree().map_or(12, |d| (d + 2).max(12))
    }

    /// Quadrature degree for `||f||_{L2}`.
    pub fn l2_quad_degree(&self) -> usize {
        self.load.polynomial_degree().map_or(12, |d| (2 * d).max(12))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn presets_match_closed_forms() {
        let closed: [(Preset, fn(f64, f64) -> f64, fn(f64, f64) -> f64); 4] = [
            (
                Preset::Example1,
                |x, y| 1.0 - 5.0 * (x * x + y * y) + (x * x + y * y).powi(2),
                |_, _| 0.0,
            ),
            (
                Preset::Example2,
                |x, y| 1.0 - 5.0 * (x * x + y * y) - (x * x + y * y).powi(2),
                |_, _| 0.0,
            ),
            (
                Preset::Example3,
                |x, y| 1.0 - 5.0 * (x * x + y * y) + (x * x + y * y).powi(2),
                |x, y| (x + 3.0).powi(2) * (x - 3.0).powi(2) * (y + 3.0).powi(2) * (y - 3.0).powi(2),
            ),
            (
                Preset::LShape,
                |x, y| 1.0 - (x + 0.25).powi(2) / 0.04 - y * y / 0.1225,
                |_, _| 0.0,
            ),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (preset, chi, f) in closed {
            let prob = Problem::preset(preset);
            let (pc, pf) = (prob.obstacle_fn(), prob.load_fn());
            for _ in 0..100 {
                let p = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
                let (a, b) = (pc(p), chi(p[0], p[1]));
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{preset} chi at {p:?}");
                let (a, b) = (pf(p), f(p[0], p[1]));
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{preset} f at {p:?}");
            }
        }
    }

    #[test]
    fn preset_metadata() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("example4".parse::<Preset>().is_err());
        assert_eq!(Preset::LShape.reference_level(), 6);
        assert_eq!(Preset::Example1.reference_level(), 7);
        let ex3 = Problem::preset(Preset::Example3);
        assert_eq!(ex3.load_quad_degree(), 12);
        assert_eq!(ex3.l2_quad_degree(), 16);
        assert_eq!(
            Problem::preset(Preset::LShape).domain,
            Domain::LShape(LShapeDiagonal::Falling)
        );
    }

    #[test]
    fn obstacle_center_values_and_boundary_sign() {
        for p in Preset::ALL {
            let prob = Problem::preset(p);
            let chi = prob.obstacle_fn();
            let mesh = prob.domain.base_mesh().unwrap().red_refine().red_refine();
            let max_boundary = (0..mesh.n_vertices())
                .filter(|&v| mesh.is_boundary_vertex(v))
                .map(|v| chi(mesh.vertices()[v]))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max_boundary < 0.0, "{p}: {max_boundary}");
        }
        assert_eq!(Problem::preset(Preset::Example1).obstacle_fn()([0.0, 0.0]), 1.0);
    }

    #[test]
    fn scaled_obstacle() {
        let prob = Problem::preset(Preset::Example1).with_scaled_obstacle(4.0);
        assert_eq!(prob.obstacle_fn()([0.0, 0.0]), 4.0);
        let custom = Problem::custom(Domain::Square, "-1", "x*y").unwrap();
        assert_eq!(custom.obstacle_fn()([0.3, 0.1]), -1.0);
        assert!(Problem::custom(Domain::Square, "x +", "0").is_err());
    }
}
