//! Warp & blend interpolation nodes on the reference triangle.
//!
//! Starting from the equidistant barycentric lattice on an equilateral
//! triangle, a one-dimensional warp toward Gauss–Lobatto spacing is applied
//! along each edge direction and blended into the interior.  The blend is
//! amplified by a degree-dependent tabulated parameter chosen to minimise
//! the interpolation Lebesgue constant.  The resulting node set is
//! symmetric, unisolvent, and its trace on each facet is exactly the
//! Gauss–Lobatto point set of that facet.

use nalgebra::DMatrix;

use super::jacobi::jacobi_eval;
use super::quadrature::gauss_lobatto_rule;
use super::{dim_poly_space, RefElemError};

/// Optimised blend parameters for degrees 1..=8.
const BLEND_ALPHA: [f64; 8] = [0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832];

/// Warp & blend nodes of degree `p` on the reference triangle, `1 <= p <= 8`.
///
/// Nodes are returned in lattice order (rows of increasing first barycentric
/// coordinate); the three vertices are always members of the set.
pub fn warp_blend_nodes(p: usize) -> Result<Vec<[f64; 2]>, RefElemError> {
    if p == 0 || p > BLEND_ALPHA.len() {
        return Err(RefElemError::UnsupportedOrder {
            what: "warp & blend degree",
            got: p,
            min: 1,
            max: BLEND_ALPHA.len(),
        });
    }
    let alpha = BLEND_ALPHA[p - 1];
    let np = dim_poly_space(p);

    // Equidistant barycentric lattice.
    let mut l1 = Vec::with_capacity(np);
    let mut l3 = Vec::with_capacity(np);
    for n in 0..=p {
        for m in 0..=(p - n) {
            l1.push(n as f64 / p as f64);
            l3.push(m as f64 / p as f64);
        }
    }
    let l2: Vec<f64> = l1.iter().zip(&l3).map(|(&a, &c)| 1.0 - a - c).collect();

    // Equilateral-triangle coordinates of the lattice.
    let mut x: Vec<f64> = l2.iter().zip(&l3).map(|(&b, &c)| -b + c).collect();
    let mut y: Vec<f64> = l1
        .iter()
        .zip(l2.iter().zip(&l3))
        .map(|(&a, (&b, &c))| (2.0 * a - b - c) / 3f64.sqrt())
        .collect();

    // One warp per edge direction, blended into the interior.
    let warp_dirs = [
        (&l2, &l3, &l1), // edge opposite vertex 1
        (&l3, &l1, &l2), // edge opposite vertex 2
        (&l1, &l2, &l3), // edge opposite vertex 3
    ];
    for (edge, (la, lb, lopp)) in warp_dirs.into_iter().enumerate() {
        let diff: Vec<f64> = lb.iter().zip(la.iter()).map(|(&b, &a)| b - a).collect();
        let warp = warp_factor(p, &diff)?;
        let angle = 2.0 * std::f64::consts::PI * edge as f64 / 3.0;
        for i in 0..np {
            let blend = 4.0 * la[i] * lb[i];
            let amp = 1.0 + (alpha * lopp[i]).powi(2);
            let w = blend * warp[i] * amp;
            x[i] += angle.cos() * w;
            y[i] += angle.sin() * w;
        }
    }

    // Back to the reference triangle.
    let mut nodes = Vec::with_capacity(np);
    for i in 0..np {
        let b1 = (3f64.sqrt() * y[i] + 1.0) / 3.0;
        let b2 = (-3.0 * x[i] - 3f64.sqrt() * y[i] + 2.0) / 6.0;
        let b3 = (3.0 * x[i] - 3f64.sqrt() * y[i] + 2.0) / 6.0;
        nodes.push([-b2 + b3 - b1, -b2 - b3 + b1]);
    }
    Ok(nodes)
}

/// One-dimensional warp from equidistant to Gauss–Lobatto spacing,
/// evaluated at the points `rout` and scaled by the edge cutoff function.
fn warp_factor(p: usize, rout: &[f64]) -> Result<Vec<f64>, RefElemError> {
    let n1 = p + 1;
    let lgl = gauss_lobatto_rule(n1)?.nodes;
    let req: Vec<f64> = (0..n1).map(|i| -1.0 + 2.0 * i as f64 / p as f64).collect();

    // Lagrange interpolation from the equidistant nodes, through a Legendre
    // Vandermonde matrix: solve Veq^T L = P(rout).
    let veq_t = DMatrix::from_fn(n1, n1, |j, i| jacobi_eval(j, 0.0, 0.0, req[i]));
    let pmat = DMatrix::from_fn(n1, rout.len(), |j, k| jacobi_eval(j, 0.0, 0.0, rout[k]));
    let lmat = veq_t
        .lu()
        .solve(&pmat)
        .ok_or(RefElemError::UnsupportedOrder {
            what: "warp factor (singular equidistant Vandermonde)",
            got: p,
            min: 1,
            max: BLEND_ALPHA.len(),
        })?;

    let mut warp = vec![0.0; rout.len()];
    for k in 0..rout.len() {
        for i in 0..n1 {
            warp[k] += lmat[(i, k)] * (lgl[i] - req[i]);
        }
        // The cutoff keeps the warp zero on the boundary of the edge
        // parameter range and removes the (1 - r^2) factor in the interior.
        let interior = rout[k].abs() < 1.0 - 1e-10;
        if interior {
            warp[k] /= 1.0 - rout[k] * rout[k];
        } else {
            warp[k] = 0.0;
        }
    }
    Ok(warp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refelem::{gauss_lobatto_rule, modal_vandermonde, ReferenceTriangle};

    #[test]
    fn node_counts_and_vertices() {
        for p in 1..=8 {
            let nodes = warp_blend_nodes(p).unwrap();
            assert_eq!(nodes.len(), dim_poly_space(p));
            for vert in ReferenceTriangle::VERTICES {
                assert!(
                    nodes
                        .iter()
                        .any(|n| (n[0] - vert[0]).abs() < 1e-12 && (n[1] - vert[1]).abs() < 1e-12),
                    "p={p}: vertex {vert:?} missing"
                );
            }
            for &n in &nodes {
                assert!(ReferenceTriangle::contains(n, 1e-12), "p={p}: node {n:?} outside");
            }
        }
        assert!(warp_blend_nodes(0).is_err());
        assert!(warp_blend_nodes(9).is_err());
    }

    #[test]
    fn facet_traces_are_gauss_lobatto_points() {
        for p in 1..=8 {
            let nodes = warp_blend_nodes(p).unwrap();
            let lgl = gauss_lobatto_rule(p + 1).unwrap().nodes;
            for facet in 0..3 {
                for &t in &lgl {
                    let target = ReferenceTriangle::facet_point(facet, t);
                    let hit = nodes.iter().any(|n| {
                        ((n[0] - target[0]).powi(2) + (n[1] - target[1]).powi(2)).sqrt() < 1e-10
                    });
                    assert!(hit, "p={p}, facet {facet}: no node at parameter {t}");
                }
            }
        }
    }

    #[test]
    fn nodes_are_unisolvent() {
        // The modal Vandermonde matrix at the nodes must be far from
        // singular; its condition number stays moderate for all supported p.
        for p in 1..=8 {
            let nodes = warp_blend_nodes(p).unwrap();
            let v = modal_vandermonde(p, &nodes);
            let svd = v.svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            assert!(smin > 0.0 && smax / smin < 1e4, "p={p}: cond = {}", smax / smin);
        }
    }

    #[test]
    fn node_set_is_symmetric_under_vertex_permutation() {
        // Swapping the two lower vertices maps the node set onto itself.
        for p in 1..=6 {
            let nodes = warp_blend_nodes(p).unwrap();
            for &n in &nodes {
                let mirrored = [n[1], n[0]]; // reflection across x1 = x2 swaps vertices 1 and 3
                assert!(
                    nodes
                        .iter()
                        .any(|m| (m[0] - mirrored[0]).abs() < 1e-10
                            && (m[1] - mirrored[1]).abs() < 1e-10),
                    "p={p}: mirror image of {n:?} missing"
                );
            }
        }
    }
}
