//! Polynomial bases on the reference triangle.
//!
//! The workhorse is the orthonormal modal basis of total degree `p`,
//! constructed from Jacobi polynomials on the collapsed (square)
//! coordinates.  For the multi-index `α = (α1, α2)` the unnormalised member
//! is
//!
//! ```text
//! P_{α1}^{(0,0)}(a) · ((1-x2)/2)^{α1} · P_{α2}^{(2α1+1,0)}(x2),
//! a = 2(1+x1)/(1-x2) - 1,
//! ```
//!
//! scaled by `sqrt((2α1+1)(α1+α2+1)/2)` so that the family is orthonormal in
//! `L^2` on the reference triangle; the constant mode is `1/sqrt(2)`.  The
//! collapsed coordinate `a` is singular along `x2 = 1`, which the triangle
//! touches only at the top vertex; values and gradients there are obtained
//! from the analytically simplified limit (set `a = -1`, and note that every
//! singular factor is paired with a vanishing power of `(1-x2)/2`).
//!
//! Nodal (Lagrange) bases on a unisolvent point set are represented through
//! the generalized Vandermonde matrix `Ṽ` of the modal basis at those
//! points: the `j`-th nodal basis function has modal coefficients given by
//! the `j`-th column of `Ṽ^{-1}`.

use nalgebra::DMatrix;

use super::jacobi::{jacobi_deriv, jacobi_eval};
use super::{dim_poly_space, RefElemError};

/// Points closer than this to the singular line `x2 = 1` are evaluated with
/// the limit expression.  On the triangle such points are within `1e-10` of
/// the top vertex, where the limit and the direct formula agree to roundoff.
const COLLAPSE_TOL: f64 = 1e-10;

/// The multi-indices `(α1, α2)` with `α1 + α2 <= p` in graded order:
/// ascending total degree, and ascending `α2` within a degree.  The constant
/// mode is first and the `p+1` indices of exact degree `p` come last.
pub fn multi_index_set(p: usize) -> Vec<(usize, usize)> {
    let mut set = Vec::with_capacity(dim_poly_space(p));
    for degree in 0..=p {
        for a2 in 0..=degree {
            set.push((degree - a2, a2));
        }
    }
    set
}

/// Collapsed coordinates `(a, b)` of a point on the triangle.
fn collapsed(x: [f64; 2]) -> (f64, f64) {
    let b = x[1];
    let a = if (1.0 - b).abs() < COLLAPSE_TOL {
        -1.0
    } else {
        2.0 * (1.0 + x[0]) / (1.0 - b) - 1.0
    };
    (a, b)
}

fn norm_const(alpha: (usize, usize)) -> f64 {
    let (a1, a2) = (alpha.0 as f64, alpha.1 as f64);
    ((2.0 * a1 + 1.0) * (a1 + a2 + 1.0) / 2.0).sqrt()
}

/// Evaluate the orthonormal modal basis member with multi-index `alpha`.
pub fn pkd_eval(alpha: (usize, usize), x: [f64; 2]) -> f64 {
    let (a, b) = collapsed(x);
    let (i, j) = alpha;
    let fa = jacobi_eval(i, 0.0, 0.0, a);
    let gb = jacobi_eval(j, 2.0 * i as f64 + 1.0, 0.0, b);
    norm_const(alpha) * fa * gb * (0.5 * (1.0 - b)).powi(i as i32)
}

/// Evaluate the gradient of the orthonormal modal basis member `alpha`.
pub fn pkd_grad(alpha: (usize, usize), x: [f64; 2]) -> [f64; 2] {
    let (a, b) = collapsed(x);
    let (i, j) = alpha;
    let ai = 2.0 * i as f64 + 1.0;
    let fa = jacobi_eval(i, 0.0, 0.0, a);
    let dfa = jacobi_deriv(i, 0.0, 0.0, a);
    let gb = jacobi_eval(j, ai, 0.0, b);
    let dgb = jacobi_deriv(j, ai, 0.0, b);
    let half = 0.5 * (1.0 - b);
    let pow_i = half.powi(i as i32);
    // (1-b)/2 to the power i-1; the terms it multiplies all carry a factor
    // that vanishes for i = 0, so the value used there is immaterial.
    let pow_im1 = if i >= 1 { half.powi(i as i32 - 1) } else { 0.0 };
    let n = norm_const(alpha);
    let d1 = n * dfa * gb * pow_im1;
    let d2 = n * (dfa * gb * 0.5 * (1.0 + a) * pow_im1
        + fa * (dgb * pow_i - 0.5 * i as f64 * gb * pow_im1));
    [d1, d2]
}

/// Generalized Vandermonde matrix of the modal basis of degree `p` at the
/// given points: entry `(i, j)` is mode `j` evaluated at point `i`.
pub fn modal_vandermonde(p: usize, points: &[[f64; 2]]) -> DMatrix<f64> {
    let modes = multi_index_set(p);
    DMatrix::from_fn(points.len(), modes.len(), |i, j| pkd_eval(modes[j], points[i]))
}

/// Directional generalized Vandermonde matrices of the modal basis
/// gradients: entry `(i, j)` of component `m` is `∂φ_j/∂x_{m+1}` at point `i`.
pub fn modal_grad_vandermonde(p: usize, points: &[[f64; 2]]) -> [DMatrix<f64>; 2] {
    let modes = multi_index_set(p);
    let mut d1 = DMatrix::zeros(points.len(), modes.len());
    let mut d2 = DMatrix::zeros(points.len(), modes.len());
    for (i, &pt) in points.iter().enumerate() {
        for (j, &alpha) in modes.iter().enumerate() {
            let g = pkd_grad(alpha, pt);
            d1[(i, j)] = g[0];
            d2[(i, j)] = g[1];
        }
    }
    [d1, d2]
}

/// A polynomial basis of total degree `p` on the reference triangle.
///
/// Either the orthonormal modal basis itself, or a nodal Lagrange basis on a
/// unisolvent point set, stored through the inverse of the generalized
/// Vandermonde matrix at those points.
#[derive(Debug, Clone)]
pub struct Basis {
    p: usize,
    /// `None` for the modal basis; for a nodal basis, the inverse `Ṽ^{-1}`
    /// of the modal Vandermonde matrix at the defining nodes.
    vinv: Option<DMatrix<f64>>,
    /// Defining nodes of a nodal basis (empty for the modal basis).
    nodes: Vec<[f64; 2]>,
}

impl Basis {
    /// The orthonormal modal basis of degree `p`.
    pub fn modal(p: usize) -> Self {
        Basis {
            p,
            vinv: None,
            nodes: Vec::new(),
        }
    }

    /// The nodal Lagrange basis of degree `p` on the given unisolvent nodes.
    ///
    /// Fails if the number of nodes does not match the dimension of the
    /// polynomial space or the Vandermonde matrix is numerically singular.
    pub fn nodal(p: usize, nodes: &[[f64; 2]]) -> Result<Self, RefElemError> {
        let np = dim_poly_space(p);
        if nodes.len() != np {
            return Err(RefElemError::UnsupportedOrder {
                what: "nodal basis point count",
                got: nodes.len(),
                min: np,
                max: np,
            });
        }
        let v = modal_vandermonde(p, nodes);
        let vinv = v.try_inverse().ok_or(RefElemError::UnsupportedOrder {
            what: "nodal basis (singular Vandermonde matrix)",
            got: np,
            min: np,
            max: np,
        })?;
        Ok(Basis {
            p,
            vinv: Some(vinv),
            nodes: nodes.to_vec(),
        })
    }

    /// Polynomial degree of the spanned space.
    pub fn degree(&self) -> usize {
        self.p
    }

    /// Dimension of the spanned space.
    pub fn len(&self) -> usize {
        dim_poly_space(self.p)
    }

    /// True for the zero-dimensional edge case (never constructed here).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when this is a nodal (Lagrange) basis.
    pub fn is_nodal(&self) -> bool {
        self.vinv.is_some()
    }

    /// Defining nodes of a nodal basis; empty for the modal basis.
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    /// Total degree of each basis member, in basis order.
    ///
    /// For the modal basis these are the multi-index degrees; a nodal basis
    /// has no meaningful per-member degree and every entry is `p`.
    pub fn member_degrees(&self) -> Vec<usize> {
        if self.is_nodal() {
            vec![self.p; self.len()]
        } else {
            multi_index_set(self.p).iter().map(|&(a, b)| a + b).collect()
        }
    }

    /// Modal coefficient matrix of this basis: column `j` holds the
    /// orthonormal-modal expansion coefficients of basis member `j`.
    ///
    /// For the modal basis this is the identity; for a nodal basis it is
    /// `Ṽ^{-1}`.
    pub fn modal_coefficients(&self) -> DMatrix<f64> {
        match &self.vinv {
            Some(vinv) => vinv.clone(),
            None => DMatrix::identity(self.len(), self.len()),
        }
    }

    /// Vandermonde matrix of this basis at the given points.
    pub fn vandermonde(&self, points: &[[f64; 2]]) -> DMatrix<f64> {
        let vm = modal_vandermonde(self.p, points);
        match &self.vinv {
            Some(vinv) => vm * vinv,
            None => vm,
        }
    }

    /// Directional gradient Vandermonde matrices of this basis.
    pub fn grad_vandermonde(&self, points: &[[f64; 2]]) -> [DMatrix<f64>; 2] {
        let [g1, g2] = modal_grad_vandermonde(self.p, points);
        match &self.vinv {
            Some(vinv) => [g1 * vinv, g2 * vinv],
            None => [g1, g2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refelem::{triangle_volume_rule, warp_blend_nodes, ReferenceTriangle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_interior_points(n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let x = rng.gen_range(-1.0..1.0);
            let y = rng.gen_range(-1.0..1.0);
            if x + y < -0.05 && x > -0.95 && y > -0.95 {
                pts.push([x, y]);
            }
        }
        pts
    }

    #[test]
    fn multi_index_set_is_graded() {
        let set = multi_index_set(3);
        assert_eq!(set.len(), 10);
        assert_eq!(set[0], (0, 0));
        let degrees: Vec<usize> = set.iter().map(|&(a, b)| a + b).collect();
        let mut sorted = degrees.clone();
        sorted.sort_unstable();
        assert_eq!(degrees, sorted);
        assert_eq!(&set[6..], &[(3, 0), (2, 1), (1, 2), (0, 3)]);
    }

    #[test]
    fn constant_mode_is_inverse_sqrt_two() {
        for &pt in &[[-0.3, -0.2], [-1.0, -1.0], [-1.0, 1.0], [0.2, -0.7]] {
            let v = pkd_eval((0, 0), pt);
            assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn modal_basis_is_orthonormal_under_volume_rule() {
        for p in 1..=5 {
            let rule = triangle_volume_rule(2 * p).unwrap();
            let v = modal_vandermonde(p, &rule.points);
            let np = dim_poly_space(p);
            for i in 0..np {
                for j in 0..np {
                    let acc: f64 = (0..rule.len())
                        .map(|q| rule.weights[q] * v[(q, i)] * v[(q, j)])
                        .sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (acc - expect).abs() < 1e-12,
                        "p={p}: <phi_{i}, phi_{j}> = {acc}"
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        for p in 1..=4 {
            for &alpha in &multi_index_set(p) {
                for &pt in &random_interior_points(8, 42 + p as u64) {
                    let g = pkd_grad(alpha, pt);
                    let fd1 = (pkd_eval(alpha, [pt[0] + h, pt[1]])
                        - pkd_eval(alpha, [pt[0] - h, pt[1]]))
                        / (2.0 * h);
                    let fd2 = (pkd_eval(alpha, [pt[0], pt[1] + h])
                        - pkd_eval(alpha, [pt[0], pt[1] - h]))
                        / (2.0 * h);
                    assert!(
                        (g[0] - fd1).abs() < 1e-6 * (1.0 + g[0].abs()),
                        "alpha {alpha:?} at {pt:?}: d1 {} vs fd {fd1}",
                        g[0]
                    );
                    assert!(
                        (g[1] - fd2).abs() < 1e-6 * (1.0 + g[1].abs()),
                        "alpha {alpha:?} at {pt:?}: d2 {} vs fd {fd2}",
                        g[1]
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_at_the_singular_vertex_match_polynomial_limits() {
        // Each gradient component of a degree-p mode is itself a polynomial
        // of degree p-1.  Project it onto the modal basis by quadrature
        // (exact, by orthonormality) and evaluate the projection at the top
        // vertex, where only basis *values* are needed; this pins the limit
        // expression used by `pkd_grad` on the singular line.
        let top = [-1.0, 1.0];
        for p in 1..=4usize {
            let rule = triangle_volume_rule(2 * p).unwrap();
            let v = modal_vandermonde(p, &rule.points);
            let v_top = modal_vandermonde(p, &[top]);
            for &alpha in &multi_index_set(p) {
                let at_vertex = pkd_grad(alpha, top);
                for (m, &expected) in at_vertex.iter().enumerate() {
                    let mut limit = 0.0;
                    for k in 0..dim_poly_space(p) {
                        let coeff: f64 = (0..rule.len())
                            .map(|q| rule.weights[q] * v[(q, k)] * pkd_grad(alpha, rule.points[q])[m])
                            .sum();
                        limit += coeff * v_top[(0, k)];
                    }
                    assert!(
                        (expected - limit).abs() < 1e-10 * (1.0 + limit.abs()),
                        "alpha {alpha:?}, component {m}: vertex {expected} vs projected limit {limit}"
                    );
                }
            }
        }
    }

    #[test]
    fn nodal_basis_is_cardinal_on_its_nodes() {
        for p in 1..=4 {
            let nodes = warp_blend_nodes(p).unwrap();
            let basis = Basis::nodal(p, &nodes).unwrap();
            let v = basis.vandermonde(&nodes);
            for i in 0..nodes.len() {
                for j in 0..nodes.len() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (v[(i, j)] - expect).abs() < 1e-10,
                        "p={p}: l_{j}(x_{i}) = {}",
                        v[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn nodal_basis_forms_partition_of_unity() {
        let p = 3;
        let nodes = warp_blend_nodes(p).unwrap();
        let basis = Basis::nodal(p, &nodes).unwrap();
        let pts = random_interior_points(20, 7);
        let v = basis.vandermonde(&pts);
        for i in 0..pts.len() {
            let row_sum: f64 = (0..basis.len()).map(|j| v[(i, j)]).sum();
            assert!((row_sum - 1.0).abs() < 1e-12, "sum at {:?} = {row_sum}", pts[i]);
        }
    }

    #[test]
    fn vandermonde_interpolates_monomials_exactly() {
        // A degree-p polynomial expanded through the modal basis and
        // re-evaluated anywhere must reproduce its exact values.
        let p = 4;
        let rule = triangle_volume_rule(2 * p).unwrap();
        let v = modal_vandermonde(p, &rule.points);
        let poly = |x: [f64; 2]| 0.7 - 1.3 * x[0] + x[1] * x[0] - 0.25 * x[1].powi(3) * x[0];
        // Least-squares fit of modal coefficients via the quadrature Gram.
        let np = dim_poly_space(p);
        let mut coeffs = nalgebra::DVector::zeros(np);
        for j in 0..np {
            let mut acc = 0.0;
            for q in 0..rule.len() {
                acc += rule.weights[q] * v[(q, j)] * poly(rule.points[q]);
            }
            coeffs[j] = acc; // orthonormality makes the Gram the identity
        }
        let check_pts = random_interior_points(25, 11);
        let vc = modal_vandermonde(p, &check_pts);
        let vals = vc * &coeffs;
        for (i, &pt) in check_pts.iter().enumerate() {
            assert!(
                (vals[i] - poly(pt)).abs() < 1e-12,
                "at {pt:?}: {} vs {}",
                vals[i],
                poly(pt)
            );
        }
        // Vertices included: the expansion is exact on the closed triangle,
        // in particular at the singular top vertex.
        let vv = modal_vandermonde(p, &ReferenceTriangle::VERTICES);
        let vertex_vals = vv * &coeffs;
        for (i, &pt) in ReferenceTriangle::VERTICES.iter().enumerate() {
            assert!((vertex_vals[i] - poly(pt)).abs() < 1e-12);
        }
    }
}
