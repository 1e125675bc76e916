//! Piecewise bilinear and trilinear forms on the Morley space.
//!
//! `a_pw(u, w) = \int D^2_pw u : D^2_pw w` and
//! `b_pw(u, w, z) = -1/2 \int [u, w]_pw z`. Hessians of Morley functions are
//! constant per triangle, so the bracket is piecewise constant and
//! `\int_T z` is taken exactly from the edge-midpoint rule.

use crate::error::Result;
use crate::mesh::{Point, Triangulation};
use crate::morley::{Hessian, MorleyField, MorleySpace};
use crate::quadrature::QuadratureRule;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// `[H1, H2] = h1_xx h2_yy + h1_yy h2_xx - 2 h1_xy h2_xy`.
pub fn vk_bracket(h1: &Hessian, h2: &Hessian) -> f64 {
    h1.bracket(h2)
}

/// Stiffness matrix of `a_pw`.
pub fn assemble_stiffness(space: &MorleySpace) -> SparseMatrix {
    let n = space.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, 36 * space.elements().len());
    for el in space.elements() {
        for (i, di) in el.dofs.iter().enumerate() {
            let Some(di) = *di else { continue };
            for (j, dj) in el.dofs.iter().enumerate() {
                let Some(dj) = *dj else { continue };
                b.push(di, dj, el.area * el.hessians[i].frobenius_dot(&el.hessians[j]));
            }
        }
    }
    b.build()
}

/// Load vector `F_i = \int f phi_i` with a rule of the given degree.
pub fn assemble_load<F>(space: &MorleySpace, f: F, quad_degree: usize) -> Vec<f64>
where
    F: Fn(Point) -> f64,
{
    let rule = QuadratureRule::triangle(quad_degree);
    let mesh = space.mesh();
    let mut load = vec![0.0; space.n_dofs()];
    for (t, el) in space.elements().iter().enumerate() {
        let corners = mesh.triangle_points(t);
        let mut local = [0.0; 6];
        for (p, w) in rule.map(&corners) {
            let fw = w * f(p);
            if fw == 0.0 {
                continue;
            }
            for (k, q) in el.basis.iter().enumerate() {
                local[k] += fw * q.value(p);
            }
        }
        for (k, d) in el.dofs.iter().enumerate() {
            if let Some(d) = d {
                load[*d] += el.area * local[k];
            }
        }
    }
    load
}

/// `b_pw(eta, w, phi)`.
pub fn trilinear(eta: &MorleyField, w: &MorleyField, phi: &MorleyField) -> Result<f64> {
    eta.same_space(w)?;
    eta.same_space(phi)?;
    let n = eta.space().elements().len();
    Ok((0..n)
        .map(|t| -0.5 * eta.hessian(t).bracket(&w.hessian(t)) * phi.integral(t))
        .sum())
}

/// Which argument of `b_pw` is frozen in [`trilinear_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrilinearSlot {
    /// `M_ij = b_pw(frozen, phi_j, phi_i)`.
    First,
    /// `M_ij = b_pw(phi_i, phi_j, frozen)`; symmetric.
    Third,
}

pub fn trilinear_matrix(frozen: &MorleyField, slot: TrilinearSlot) -> SparseMatrix {
    let space = frozen.space();
    let n = space.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, 36 * space.elements().len());
    for (t, el) in space.elements().iter().enumerate() {
        match slot {
            TrilinearSlot::First => {
                let hf = frozen.hessian(t);
                for (i, di) in el.dofs.iter().enumerate() {
                    let Some(di) = *di else { continue };
                    for (j, dj) in el.dofs.iter().enumerate() {
                        let Some(dj) = *dj else { continue };
                        b.push(di, dj, -0.5 * hf.bracket(&el.hessians[j]) * el.integrals[i]);
                    }
                }
            }
            TrilinearSlot::Third => {
                let mean = frozen.integral(t);
                for (i, di) in el.dofs.iter().enumerate() {
                    let Some(di) = *di else { continue };
                    for (j, dj) in el.dofs.iter().enumerate() {
                        let Some(dj) = *dj else { continue };
                        b.push(di, dj, -0.5 * el.hessians[i].bracket(&el.hessians[j]) * mean);
                    }
                }
            }
        }
    }
    b.build()
}

/// `N_i = b_pw(u, phi_i, v)`.
pub fn coupling_vector(u: &MorleyField, v: &MorleyField) -> Result<Vec<f64>> {
    u.same_space(v)?;
    let space = u.space();
    let mut out = vec![0.0; space.n_dofs()];
    for (t, el) in space.elements().iter().enumerate() {
        let hu = u.hessian(t);
        let mean = v.integral(t);
        for (i, d) in el.dofs.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += -0.5 * hu.bracket(&el.hessians[i]) * mean;
            }
        }
    }
    Ok(out)
}

/// `Q_i = b_pw(u, u, phi_i)`.
pub fn bracket_load(u: &MorleyField) -> Vec<f64> {
    let space = u.space();
    let mut out = vec![0.0; space.n_dofs()];
    for (t, el) in space.elements().iter().enumerate() {
        let hu = u.hessian(t);
        let c = -0.5 * hu.bracket(&hu);
        for (i, d) in el.dofs.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += c * el.integrals[i];
            }
        }
    }
    out
}

/// `||f||_{L2}` over the mesh with a rule of the given degree.
pub fn l2_norm<F>(f: F, mesh: &Triangulation, quad_degree: usize) -> f64
where
    F: Fn(Point) -> f64,
{
    let rule = QuadratureRule::triangle(quad_degree);
    (0..mesh.n_triangles())
        .map(|t| rule.integrate(&mesh.triangle_points(t), mesh.area(t), |p| f(p).powi(2)))
        .sum::<f64>()
        .sqrt()
}
