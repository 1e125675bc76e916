//! Minimal SVG output: mesh wireframe and vertex markers.

use std::io::Write;

use crate::error::Result;
use crate::mesh::Triangulation;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 10.0;

/// Draws every edge of `mesh` and one `<circle class="marker">` per vertex
/// in `marked`.
pub fn write_svg<W: Write>(mesh: &Triangulation, marked: &[usize], mut out: W) -> Result<()> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.vertices() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = (SIZE - 2.0 * MARGIN) / extent;
    // flip y so the picture has the usual orientation
    let map = |p: [f64; 2]| (MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale);
    let radius = (0.25 * mesh.h_max() * scale).clamp(0.5, 4.0);

    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )?;
    write!(out, r##"<path fill="none" stroke="#888" stroke-width="0.5" d=""##)?;
    for &[a, b] in mesh.edges() {
        let (x0, y0) = map(mesh.vertices()[a]);
        let (x1, y1) = map(mesh.vertices()[b]);
        write!(out, "M{x0:.3} {y0:.3}L{x1:.3} {y1:.3}")?;
    }
    writeln!(out, r#""/>"#)?;
    for &v in marked {
        let (x, y) = map(mesh.vertices()[v]);
        writeln!(
            out,
            r#"<circle class="marker" cx="{x:.3}" cy="{y:.3}" r="{radius:.3}" fill="red"/>"#
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_marker_per_vertex() {
        let mesh = Triangulation::square_crisscross(0.5).unwrap().red_refine();
        let mut out = Vec::new();
        write_svg(&mesh, &[4, 5, 6], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert_eq!(text.matches("<circle").count(), 3);
        assert_eq!(text.matches('M').count(), mesh.n_edges());
    }
}
