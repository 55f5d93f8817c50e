//! The reference triangle and its polynomial machinery.
//!
//! Everything downstream (operators, meshes, solvers) is phrased on a single
//! reference element: the biunit right triangle with vertices `(-1,-1)`,
//! `(1,-1)` and `(-1,1)`, area 2.  This module provides
//!
//! - Jacobi polynomial evaluation ([`jacobi_eval`], [`jacobi_deriv`]),
//! - one-dimensional Gauss rules and a positive-weight volume rule on the
//!   triangle built by a collapsed-coordinate product
//!   ([`gauss_legendre_rule`], [`gauss_lobatto_rule`], [`triangle_volume_rule`]),
//! - the orthonormal modal basis of total degree `p` and nodal (Lagrange)
//!   bases derived from it ([`Basis`], [`vandermonde`], [`grad_vandermonde`]),
//! - the warp & blend interpolation nodes ([`warp_blend_nodes`]).

mod basis;
mod jacobi;
mod nodes;
mod quadrature;

pub use basis::{
    modal_grad_vandermonde, modal_vandermonde, multi_index_set, pkd_eval, pkd_grad, Basis,
};
pub use jacobi::{jacobi_deriv, jacobi_eval};
pub use nodes::warp_blend_nodes;
pub use quadrature::{
    gauss_jacobi_rule, gauss_legendre_rule, gauss_lobatto_rule, load_rule_file,
    triangle_monomial_moment, triangle_volume_rule,
};

use thiserror::Error;

/// Errors raised while constructing reference-element ingredients.
#[derive(Debug, Error)]
pub enum RefElemError {
    /// A polynomial degree or node count outside the supported range.
    #[error("unsupported {what}: got {got}, supported range is {min}..={max}")]
    UnsupportedOrder {
        what: &'static str,
        got: usize,
        min: usize,
        max: usize,
    },
    /// Newton iteration for a quadrature node failed to reach the residual
    /// target within the iteration budget.
    #[error("quadrature Newton iteration failed to converge for node {index} (residual {residual:.3e})")]
    NewtonDivergence { index: usize, residual: f64 },
    /// A quadrature file could not be parsed.
    #[error("quadrature file {path}: {message} (line {line})")]
    RuleFileParse {
        path: String,
        message: String,
        line: usize,
    },
    /// A quadrature file parsed but fails validation.
    #[error("quadrature file {path}: {message}")]
    RuleFileInvalid { path: String, message: String },
}

/// Number of basis polynomials of total degree at most `p` in two variables.
pub const fn dim_poly_space(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// A one-dimensional quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule1d {
    /// Nodes in ascending order.
    pub nodes: Vec<f64>,
    /// Weights, positive for all rules constructed here.
    pub weights: Vec<f64>,
    /// Largest polynomial degree integrated exactly.
    pub degree: usize,
}

impl Rule1d {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the rule has no nodes (never the case for constructed rules).
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// A quadrature rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Node coordinates `(x1, x2)` inside the reference triangle.
    pub points: Vec<[f64; 2]>,
    /// Positive weights summing to the reference area 2.
    pub weights: Vec<f64>,
    /// Largest total polynomial degree integrated exactly.
    pub degree: usize,
}

impl TriangleRule {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when the rule has no nodes.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The biunit reference triangle with vertices `(-1,-1)`, `(1,-1)`, `(-1,1)`.
///
/// Facets are numbered counterclockwise and each carries a fixed
/// parametrisation `t ∈ [-1,1]` from its start vertex to its end vertex:
/// facet 0 runs along the bottom edge from vertex 0 to vertex 1, facet 1
/// along the hypotenuse from vertex 1 to vertex 2, and facet 2 up the left
/// edge from vertex 2 back to vertex 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceTriangle;

impl ReferenceTriangle {
    /// Area of the reference triangle.
    pub const AREA: f64 = 2.0;

    /// Number of facets.
    pub const N_FACETS: usize = 3;

    /// Vertex coordinates in counterclockwise order.
    pub const VERTICES: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];

    /// Start/end vertex indices of each facet.
    pub const FACET_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

    /// Outward unit normal of facet `facet`.
    pub fn facet_normal(facet: usize) -> [f64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        [[0.0, -1.0], [h, h], [-1.0, 0.0]][facet]
    }

    /// Arc length of facet `facet`.
    pub fn facet_length(facet: usize) -> f64 {
        [2.0, 2.0 * std::f64::consts::SQRT_2, 2.0][facet]
    }

    /// Map the facet parameter `t ∈ [-1,1]` to a point on facet `facet`.
    pub fn facet_point(facet: usize, t: f64) -> [f64; 2] {
        let [a, b] = Self::FACET_VERTICES[facet];
        let va = Self::VERTICES[a];
        let vb = Self::VERTICES[b];
        [
            0.5 * ((1.0 - t) * va[0] + (1.0 + t) * vb[0]),
            0.5 * ((1.0 - t) * va[1] + (1.0 + t) * vb[1]),
        ]
    }

    /// True when `x` lies inside the triangle up to the tolerance `tol`.
    pub fn contains(x: [f64; 2], tol: f64) -> bool {
        x[0] >= -1.0 - tol && x[1] >= -1.0 - tol && x[0] + x[1] <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn facet_normals_are_unit_and_outward() {
        for facet in 0..3 {
            let n = ReferenceTriangle::facet_normal(facet);
            let norm = (n[0] * n[0] + n[1] * n[1]).sqrt();
            assert!((norm - 1.0).abs() < 1e-15);
            // Midpoint displaced along the normal must leave the triangle.
            let mid = ReferenceTriangle::facet_point(facet, 0.0);
            let out = [mid[0] + 1e-6 * n[0], mid[1] + 1e-6 * n[1]];
            assert!(!ReferenceTriangle::contains(out, 1e-12));
        }
    }

    #[test]
    fn facet_lengths_close_the_boundary() {
        // The scaled normals of a closed polygon sum to zero.
        let mut sum = [0.0, 0.0];
        for facet in 0..3 {
            let n = ReferenceTriangle::facet_normal(facet);
            let len = ReferenceTriangle::facet_length(facet);
            sum[0] += len * n[0];
            sum[1] += len * n[1];
        }
        assert!(sum[0].abs() < 1e-14 && sum[1].abs() < 1e-14);
    }

    #[test]
    fn facet_parametrisation_hits_vertices() {
        for facet in 0..3 {
            let [a, b] = ReferenceTriangle::FACET_VERTICES[facet];
            let start = ReferenceTriangle::facet_point(facet, -1.0);
            let end = ReferenceTriangle::facet_point(facet, 1.0);
            assert_eq!(start, ReferenceTriangle::VERTICES[a]);
            assert_eq!(end, ReferenceTriangle::VERTICES[b]);
        }
    }

    #[test]
    fn poly_space_dimension() {
        assert_eq!(dim_poly_space(0), 1);
        assert_eq!(dim_poly_space(2), 6);
        assert_eq!(dim_poly_space(4), 15);
    }
}
