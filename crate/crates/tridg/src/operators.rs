//! Discrete operators on the reference element.
//!
//! A scheme is determined by a *discrete inner product*: a volume weight
//! matrix `W` on a set of volume points and one facet weight matrix `W^γ`
//! per facet, together with the evaluation (Vandermonde) matrices `V`, `V^γ`
//! of the element basis at those points.  Three variants are provided:
//!
//! - [`InnerProductVariant::QuadratureI`]: orthonormal modal basis, volume
//!   rule of degree `2p`, facet rules Gauss–Legendre with `p+1` nodes
//!   (degree `2p+1`).  The summation-by-parts (SBP) property holds.
//! - [`InnerProductVariant::QuadratureII`]: as above but with `p+1`-node
//!   Gauss–Lobatto facet rules (degree `2p-1`), one degree short of what SBP
//!   requires — deliberately non-compliant.
//! - [`InnerProductVariant::Collocation`]: nodal basis on warp & blend
//!   points (`V = I`), Gauss–Lobatto facet points, with `W` and `W^γ` the
//!   *exact* Gram matrices of the nodal and facet-trace bases.  SBP holds by
//!   construction.
//!
//! From the inner product the element operators follow: mass matrix
//! `M = VᵀWV`, projection `P = M⁻¹VᵀW`, exact differentiation matrices
//! `D⁽ᵐ⁾`, the symmetric positive semi-definite correction matrix `K`
//! parametrised by a scalar `c`, lifting matrices `Lᵞ = (M+K)⁻¹(Vᵞ)ᵀWᵞ`,
//! and the filter `F = (I + M⁻¹K)⁻¹` that maps between
//! discontinuous-Galerkin and flux-reconstruction solutions.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::refelem::{
    gauss_legendre_rule, gauss_lobatto_rule, triangle_volume_rule, Basis, RefElemError,
    ReferenceTriangle, Rule1d, TriangleRule,
};

/// Errors raised while building reference operators.
#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    RefElem(#[from] RefElemError),
    /// A matrix that must be invertible (mass, `M+K`, filter) was singular.
    #[error("singular {what} matrix for {variant} at p = {p}")]
    Singular {
        what: &'static str,
        variant: InnerProductVariant,
        p: usize,
    },
    /// The stabilising correction parameter must be non-negative.
    #[error("correction parameter c = {c} is negative; only c >= 0 is supported")]
    NegativeC { c: f64 },
    /// A tabulated correction level is only available for certain degrees.
    #[error("no tabulated c_+ value for p = {p}; available for p in 2..=4")]
    NoCPlus { p: usize },
    /// An externally loaded volume rule does not reach the required degree.
    #[error("volume rule of degree {got} is too weak for p = {p} (needs degree >= {need})")]
    RuleTooWeak { got: usize, p: usize, need: usize },
    /// I/O failure while dumping operators.
    #[error("failed to write operator dump: {0}")]
    Dump(#[from] std::io::Error),
}

/// The three discrete inner-product constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InnerProductVariant {
    QuadratureI,
    QuadratureII,
    Collocation,
}

impl InnerProductVariant {
    /// All variants in canonical (reporting) order.
    pub const ALL: [InnerProductVariant; 3] = [
        InnerProductVariant::QuadratureI,
        InnerProductVariant::QuadratureII,
        InnerProductVariant::Collocation,
    ];

    /// Stable lowercase name used in configuration files and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            InnerProductVariant::QuadratureI => "quadrature-i",
            InnerProductVariant::QuadratureII => "quadrature-ii",
            InnerProductVariant::Collocation => "collocation",
        }
    }

    /// Parse a configuration-file name.
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "quadrature-i" => Some(InnerProductVariant::QuadratureI),
            "quadrature-ii" => Some(InnerProductVariant::QuadratureII),
            "collocation" => Some(InnerProductVariant::Collocation),
            _ => None,
        }
    }

    /// Whether the variant satisfies the SBP property (and hence the
    /// equivalence and stability theory).
    pub fn is_sbp(self) -> bool {
        !matches!(self, InnerProductVariant::QuadratureII)
    }
}

impl fmt::Display for InnerProductVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Tabulated near-maximal stable correction levels `c_+` by degree.
pub fn c_plus(p: usize) -> Result<f64, OperatorError> {
    match p {
        2 => Ok(4.3e-2),
        3 => Ok(6.0e-4),
        4 => Ok(5.6e-6),
        _ => Err(OperatorError::NoCPlus { p }),
    }
}

/// The discrete inner product: weighted point sets for volume and facets,
/// together with the element basis they are paired with.
#[derive(Debug, Clone)]
pub struct InnerProduct {
    pub variant: InnerProductVariant,
    pub p: usize,
    pub basis: Basis,
    /// Volume evaluation points (`N` of them).
    pub volume_points: Vec<[f64; 2]>,
    /// Volume weight matrix, `N x N`; diagonal for the quadrature variants,
    /// dense symmetric positive definite for collocation.
    pub w: DMatrix<f64>,
    /// Facet evaluation points, `N_γ` per facet.
    pub facet_points: [Vec<[f64; 2]>; 3],
    /// Facet weight matrices, `N_γ x N_γ`.
    pub w_facet: [DMatrix<f64>; 3],
}

/// Build the discrete inner product of a variant at degree `p`.
///
/// `volume_rule` optionally replaces the computed degree-`2p` volume rule
/// for the quadrature variants (it must reach degree `2p`); collocation
/// ignores it for point placement but still uses a computed rule to
/// assemble its exact Gram matrices.
pub fn build_inner_product(
    variant: InnerProductVariant,
    p: usize,
    volume_rule: Option<&TriangleRule>,
) -> Result<InnerProduct, OperatorError> {
    let owned;
    let rule = match volume_rule {
        Some(r) => {
            if r.degree < 2 * p {
                return Err(OperatorError::RuleTooWeak {
                    got: r.degree,
                    p,
                    need: 2 * p,
                });
            }
            r
        }
        None => {
            owned = triangle_volume_rule(2 * p)?;
            &owned
        }
    };
    match variant {
        InnerProductVariant::QuadratureI | InnerProductVariant::QuadratureII => {
            let facet_rule = match variant {
                InnerProductVariant::QuadratureI => gauss_legendre_rule(p + 1)?,
                _ => gauss_lobatto_rule(p + 1)?,
            };
            let (facet_points, w_facet) = facet_quadrature(&facet_rule);
            Ok(InnerProduct {
                variant,
                p,
                basis: Basis::modal(p),
                volume_points: rule.points.clone(),
                w: DMatrix::from_diagonal(&DVector::from_vec(rule.weights.clone())),
                facet_points,
                w_facet,
            })
        }
        InnerProductVariant::Collocation => {
            let nodes = crate::refelem::warp_blend_nodes(p)?;
            let basis = Basis::nodal(p, &nodes)?;
            // Exact volume Gram of the nodal basis via the degree-2p rule.
            let phi = basis.vandermonde(&rule.points);
            let mut w = DMatrix::zeros(nodes.len(), nodes.len());
            for q in 0..rule.len() {
                let wq = rule.weights[q];
                for i in 0..nodes.len() {
                    let pi = phi[(q, i)];
                    if pi == 0.0 {
                        continue;
                    }
                    for j in 0..nodes.len() {
                        w[(i, j)] += wq * pi * phi[(q, j)];
                    }
                }
            }
            // Facet points are Gauss-Lobatto; facet weights are the exact
            // Gram matrices of the facet-trace Lagrange bases.
            let lgl = gauss_lobatto_rule(p + 1)?;
            let gauss = gauss_legendre_rule(p + 1)?;
            let n_f = lgl.len();
            // 1D Lagrange basis on the LGL points evaluated at Gauss points.
            let v_lgl =
                DMatrix::from_fn(n_f, n_f, |i, j| crate::refelem::jacobi_eval(j, 0.0, 0.0, lgl.nodes[i]));
            let v_gauss = DMatrix::from_fn(gauss.len(), n_f, |i, j| {
                crate::refelem::jacobi_eval(j, 0.0, 0.0, gauss.nodes[i])
            });
            let lagrange = v_gauss
                * v_lgl
                    .try_inverse()
                    .ok_or(OperatorError::Singular {
                        what: "facet Vandermonde",
                        variant,
                        p,
                    })?;
            let mut facet_points: [Vec<[f64; 2]>; 3] = Default::default();
            let mut w_facet: [DMatrix<f64>; 3] = [
                DMatrix::zeros(n_f, n_f),
                DMatrix::zeros(n_f, n_f),
                DMatrix::zeros(n_f, n_f),
            ];
            for facet in 0..3 {
                facet_points[facet] = lgl
                    .nodes
                    .iter()
                    .map(|&t| ReferenceTriangle::facet_point(facet, t))
                    .collect();
                let scale = 0.5 * ReferenceTriangle::facet_length(facet);
                for q in 0..gauss.len() {
                    let wq = scale * gauss.weights[q];
                    for i in 0..n_f {
                        for j in 0..n_f {
                            w_facet[facet][(i, j)] += wq * lagrange[(q, i)] * lagrange[(q, j)];
                        }
                    }
                }
            }
            Ok(InnerProduct {
                variant,
                p,
                basis,
                volume_points: nodes,
                w,
                facet_points,
                w_facet,
            })
        }
    }
}

/// Map a 1D facet rule onto all three facets, scaling weights by the facet
/// arc length.
fn facet_quadrature(rule: &Rule1d) -> ([Vec<[f64; 2]>; 3], [DMatrix<f64>; 3]) {
    let mut points: [Vec<[f64; 2]>; 3] = Default::default();
    let mut weights: [DMatrix<f64>; 3] = [
        DMatrix::zeros(rule.len(), rule.len()),
        DMatrix::zeros(rule.len(), rule.len()),
        DMatrix::zeros(rule.len(), rule.len()),
    ];
    for facet in 0..3 {
        points[facet] = rule
            .nodes
            .iter()
            .map(|&t| ReferenceTriangle::facet_point(facet, t))
            .collect();
        let scale = 0.5 * ReferenceTriangle::facet_length(facet);
        for (i, &w) in rule.weights.iter().enumerate() {
            weights[facet][(i, i)] = scale * w;
        }
    }
    (points, weights)
}

/// Mass matrix `M = VᵀWV`.
pub fn mass_matrix(v: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    v.transpose() * w * v
}

/// Projection matrix `P = M⁻¹VᵀW`; rows are the coefficients of the
/// discrete least-squares projection of point values onto the basis.
pub fn projection_matrix(
    m_inv: &DMatrix<f64>,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> DMatrix<f64> {
    m_inv * v.transpose() * w
}

/// Exact differentiation matrices of the basis: `D⁽ᵐ⁾` maps the coefficient
/// vector of `u` to the coefficient vector of `∂u/∂x_m`.
///
/// Built in the orthonormal modal core, where entries are the inner products
/// `<φ_i, ∂φ_j/∂x_m>` evaluated with a degree-`2p` rule (exact, since the
/// integrand has degree at most `2p-1`), then transformed to the element
/// basis by similarity with the modal coefficient matrix.
pub fn modal_diff_matrices(basis: &Basis) -> Result<[DMatrix<f64>; 2], OperatorError> {
    let p = basis.degree();
    let rule = triangle_volume_rule(2 * p)?;
    let v = crate::refelem::modal_vandermonde(p, &rule.points);
    let [g1, g2] = crate::refelem::modal_grad_vandermonde(p, &rule.points);
    let w = DMatrix::from_diagonal(&DVector::from_vec(rule.weights.clone()));
    let vt_w = v.transpose() * &w;
    let d_modal = [&vt_w * g1, &vt_w * g2];
    if !basis.is_nodal() {
        return Ok(d_modal);
    }
    // Nodal basis: similarity transform with the coefficient matrix.
    let c = basis.modal_coefficients(); // Ṽ^{-1}
    let c_inv = c.clone().try_inverse().ok_or(OperatorError::Singular {
        what: "modal coefficient",
        variant: InnerProductVariant::Collocation,
        p,
    })?;
    Ok([
        c_inv.clone() * &d_modal[0] * &c,
        c_inv * &d_modal[1] * &c,
    ])
}

/// The correction matrix
/// `K = (c/|Ω̂|) Σ_{q=0}^{p} binom(p,q) (D^{(p-q,q)})ᵀ M D^{(p-q,q)}`,
/// where `D^{(α)} = (D⁽¹⁾)^{α₁}(D⁽²⁾)^{α₂}`.
///
/// `c = 0` recovers the discontinuous Galerkin scheme (`K = 0`); positive
/// `c` yields the symmetric positive semi-definite correction of rank `p+1`
/// whose kernel is the polynomial space of degree `p-1`.
pub fn vcjh_k_matrix(
    p: usize,
    c: f64,
    m: &DMatrix<f64>,
    d: &[DMatrix<f64>; 2],
) -> Result<DMatrix<f64>, OperatorError> {
    if c < 0.0 {
        return Err(OperatorError::NegativeC { c });
    }
    let n = m.nrows();
    let mut k = DMatrix::zeros(n, n);
    if c == 0.0 {
        return Ok(k);
    }
    // Powers of the differentiation matrices up to p.
    let powers = |dm: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
        let mut v = vec![DMatrix::identity(n, n)];
        for _ in 0..p {
            let next = dm * v.last().unwrap();
            v.push(next);
        }
        v
    };
    let d1 = powers(&d[0]);
    let d2 = powers(&d[1]);
    for q in 0..=p {
        let d_alpha = &d1[p - q] * &d2[q];
        let coeff = c * binomial(p, q) / ReferenceTriangle::AREA;
        k += coeff * d_alpha.transpose() * m * d_alpha;
    }
    // The sum of congruences is symmetric in exact arithmetic; enforce it.
    let kt = k.transpose();
    Ok(0.5 * (k + kt))
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..k {
        v *= (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Lifting matrices `Lᵞ = (M+K)⁻¹ (Vᵞ)ᵀ Wᵞ`: column `j` holds the basis
/// coefficients of the correction field raised by a unit impulse at facet
/// point `j` of facet `γ`.
pub fn lifting_matrices(
    mk_inv: &DMatrix<f64>,
    v_facet: &[DMatrix<f64>; 3],
    w_facet: &[DMatrix<f64>; 3],
) -> [DMatrix<f64>; 3] {
    [
        mk_inv * v_facet[0].transpose() * &w_facet[0],
        mk_inv * v_facet[1].transpose() * &w_facet[1],
        mk_inv * v_facet[2].transpose() * &w_facet[2],
    ]
}

/// Filter matrix `F = (I + M⁻¹K)⁻¹` mapping DG coefficients to the
/// corresponding filtered (FR) coefficients.
pub fn filter_matrix(
    m_inv: &DMatrix<f64>,
    k: &DMatrix<f64>,
    variant: InnerProductVariant,
    p: usize,
) -> Result<DMatrix<f64>, OperatorError> {
    let n = k.nrows();
    let a = DMatrix::identity(n, n) + m_inv * k;
    a.try_inverse().ok_or(OperatorError::Singular {
        what: "filter",
        variant,
        p,
    })
}

/// The complete operator set of one scheme on the reference element.
#[derive(Debug, Clone)]
pub struct ReferenceOperators {
    pub variant: InnerProductVariant,
    pub p: usize,
    /// Correction level used for `K`, `L^γ` and `F`.
    pub c: f64,
    pub basis: Basis,
    /// Volume evaluation points.
    pub volume_points: Vec<[f64; 2]>,
    /// Volume weight matrix.
    pub w: DMatrix<f64>,
    /// Facet evaluation points per facet.
    pub facet_points: [Vec<[f64; 2]>; 3],
    /// Facet weight matrices per facet.
    pub w_facet: [DMatrix<f64>; 3],
    /// Basis Vandermonde matrix at the volume points (`N x N_p`).
    pub v: DMatrix<f64>,
    /// Basis Vandermonde matrices at the facet points (`N_γ x N_p`).
    pub v_facet: [DMatrix<f64>; 3],
    /// Mass matrix `M = VᵀWV` and its inverse.
    pub m: DMatrix<f64>,
    pub m_inv: DMatrix<f64>,
    /// Projection matrix `P = M⁻¹VᵀW`.
    pub proj: DMatrix<f64>,
    /// Differentiation matrices in the element basis.
    pub d: [DMatrix<f64>; 2],
    /// Correction matrix `K` at level `c`.
    pub k: DMatrix<f64>,
    /// `M + K` and its inverse.
    pub m_plus_k: DMatrix<f64>,
    pub mk_inv: DMatrix<f64>,
    /// Lifting matrices `L^γ`.
    pub lift: [DMatrix<f64>; 3],
    /// Filter matrix `F`.
    pub filter: DMatrix<f64>,
}

impl ReferenceOperators {
    /// Build all operators of `variant` at degree `p` and correction level
    /// `c >= 0`, optionally with an externally supplied volume rule.
    pub fn build(
        variant: InnerProductVariant,
        p: usize,
        c: f64,
        volume_rule: Option<&TriangleRule>,
    ) -> Result<Self, OperatorError> {
        if c < 0.0 {
            return Err(OperatorError::NegativeC { c });
        }
        let ip = build_inner_product(variant, p, volume_rule)?;
        let InnerProduct {
            variant,
            p,
            basis,
            volume_points,
            w,
            facet_points,
            w_facet,
        } = ip;
        let np = basis.len();
        let v = if matches!(variant, InnerProductVariant::Collocation) {
            // The nodal basis is cardinal at its own points by definition.
            DMatrix::identity(np, np)
        } else {
            basis.vandermonde(&volume_points)
        };
        let v_facet = [
            basis.vandermonde(&facet_points[0]),
            basis.vandermonde(&facet_points[1]),
            basis.vandermonde(&facet_points[2]),
        ];
        let m = mass_matrix(&v, &w);
        let m_inv = m
            .clone()
            .cholesky()
            .ok_or(OperatorError::Singular {
                what: "mass",
                variant,
                p,
            })?
            .inverse();
        let proj = projection_matrix(&m_inv, &v, &w);
        let d = modal_diff_matrices(&basis)?;
        let k = vcjh_k_matrix(p, c, &m, &d)?;
        let m_plus_k = &m + &k;
        let mk_inv = m_plus_k
            .clone()
            .cholesky()
            .ok_or(OperatorError::Singular {
                what: "M+K",
                variant,
                p,
            })?
            .inverse();
        let lift = lifting_matrices(&mk_inv, &v_facet, &w_facet);
        let filter = filter_matrix(&m_inv, &k, variant, p)?;
        Ok(ReferenceOperators {
            variant,
            p,
            c,
            basis,
            volume_points,
            w,
            facet_points,
            w_facet,
            v,
            v_facet,
            m,
            m_inv,
            proj,
            d,
            k,
            m_plus_k,
            mk_inv,
            lift,
            filter,
        })
    }

    /// Number of volume points.
    pub fn n_volume(&self) -> usize {
        self.volume_points.len()
    }

    /// Number of facet points on facet `facet`.
    pub fn n_facet(&self, facet: usize) -> usize {
        self.facet_points[facet].len()
    }

    /// Dimension of the element polynomial space.
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    /// Write every operator as a CSV file into `dir` (one file per matrix,
    /// row-major, 17 significant digits).
    pub fn dump(&self, dir: &Path) -> Result<(), OperatorError> {
        std::fs::create_dir_all(dir)?;
        let write = |name: &str, m: &DMatrix<f64>| -> std::io::Result<()> {
            let mut text = String::new();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    if j > 0 {
                        text.push(',');
                    }
                    text.push_str(&format!("{:.16e}", m[(i, j)]));
                }
                text.push('\n');
            }
            std::fs::write(dir.join(format!("{name}.csv")), text)
        };
        write("V", &self.v)?;
        write("W", &self.w)?;
        write("M", &self.m)?;
        write("P", &self.proj)?;
        write("D1", &self.d[0])?;
        write("D2", &self.d[1])?;
        write("K", &self.k)?;
        write("F", &self.filter)?;
        for facet in 0..3 {
            write(&format!("Vf{}", facet + 1), &self.v_facet[facet])?;
            write(&format!("Wf{}", facet + 1), &self.w_facet[facet])?;
            write(&format!("L{}", facet + 1), &self.lift[facet])?;
        }
        Ok(())
    }
}

/// Relative Frobenius residual of the SBP identity
/// `M D⁽ᵐ⁾ + (D⁽ᵐ⁾)ᵀ M = Σ_γ n̂ᵐᵞ (Vᵞ)ᵀ Wᵞ Vᵞ`, per direction.
pub fn check_sbp(ops: &ReferenceOperators) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (m_dir, res) in out.iter_mut().enumerate() {
        let lhs = &ops.m * &ops.d[m_dir] + ops.d[m_dir].transpose() * &ops.m;
        let mut rhs = DMatrix::zeros(ops.n_modes(), ops.n_modes());
        for facet in 0..3 {
            let n = ReferenceTriangle::facet_normal(facet)[m_dir];
            rhs += n * ops.v_facet[facet].transpose() * &ops.w_facet[facet] * &ops.v_facet[facet];
        }
        *res = (lhs - rhs).norm() / ops.m.norm();
    }
    out
}

/// Residual of the discrete divergence theorem applied to the constant
/// function: `(P1)ᵀ M D⁽ᵐ⁾` versus `Σ_γ n̂ᵐᵞ (P1)ᵀ (Vᵞ)ᵀ Wᵞ Vᵞ`, per
/// direction, as the 2-norm of the difference row vector.
pub fn check_divergence_theorem(ops: &ReferenceOperators) -> [f64; 2] {
    let ones = DVector::from_element(ops.n_volume(), 1.0);
    let p1 = &ops.proj * ones;
    let mut out = [0.0; 2];
    for (m_dir, res) in out.iter_mut().enumerate() {
        let lhs = (&ops.m * &ops.d[m_dir]).transpose() * &p1;
        let mut rhs = DVector::zeros(ops.n_modes());
        for facet in 0..3 {
            let n = ReferenceTriangle::facet_normal(facet)[m_dir];
            rhs += n
                * (ops.v_facet[facet].transpose() * &ops.w_facet[facet] * &ops.v_facet[facet])
                    .transpose()
                * &p1;
        }
        *res = (lhs - rhs).norm();
    }
    out
}

/// Scaled Frobenius norm of `K D⁽ᵐ⁾`, maximised over the direction; the
/// correction matrix annihilates the range of differentiation.
pub fn check_k_annihilation(ops: &ReferenceOperators) -> f64 {
    let scale = 1.0 + ops.k.norm() * ops.d[0].norm().max(ops.d[1].norm());
    let r0 = (&ops.k * &ops.d[0]).norm();
    let r1 = (&ops.k * &ops.d[1]).norm();
    r0.max(r1) / scale
}

/// Largest magnitude of `F - I` outside the rows and columns of the `p+1`
/// highest-degree modes, measured in the orthonormal modal basis.
pub fn filter_modal_offblock(ops: &ReferenceOperators) -> f64 {
    let f_modal = if ops.basis.is_nodal() {
        // Transform the operator to the modal coefficient representation.
        let c = ops.basis.modal_coefficients(); // coefficients = Ṽ^{-1}
        let c_inv = c.clone().try_inverse().expect("modal coefficient matrix invertible");
        &c * &ops.filter * c_inv
    } else {
        ops.filter.clone()
    };
    let n = f_modal.nrows();
    let low = n - (ops.p + 1); // first degree-p mode in graded order
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i >= low && j >= low {
                continue;
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((f_modal[(i, j)] - expect).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of a symmetric matrix relative to its spectral
/// radius; positive values certify positive definiteness with margin.
pub fn spd_margin(mat: &DMatrix<f64>) -> f64 {
    let eig = mat.clone().symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.min();
    if max_abs == 0.0 {
        0.0
    } else {
        min / max_abs
    }
}

/// Number of singular values of `mat` exceeding `threshold` times the
/// largest one.
pub fn numeric_rank(mat: &DMatrix<f64>, threshold: f64) -> usize {
    let svd = mat.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > threshold * smax).count()
}
