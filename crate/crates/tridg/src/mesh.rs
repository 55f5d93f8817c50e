//! Periodic triangular meshes of the square, with optional smooth warping.
//!
//! The generator splits `(0,L)²` into `M × M` squares and each square into
//! two triangles along its lower-left to upper-right diagonal, giving
//! `K = 2M²` elements with counterclockwise vertices.  Every element carries
//! a degree-`p_map` polynomial mapping from the reference triangle, stored
//! as modal coefficients of the mapping interpolated at warp & blend nodes;
//! `p_map = 1` keeps the mesh affine.
//!
//! [`Mesh::warped`] composes the mapping with a fixed smooth deformation
//! that is the identity on the domain boundary, so the mesh stays watertight
//! and periodic while interior elements become curved (or, at `p_map = 1`,
//! stay affine with displaced vertices).
//!
//! Geometric factors follow from the mapping Jacobian `𝒥`: the volume
//! scaling `J = det 𝒥`, the metric entries `J𝒥⁻¹ = adj 𝒥`, and on facets
//! the scaling `J^{(κ,γ)} = ‖(adj 𝒥)ᵀ n̂ᵞ‖` and unit normal from Nanson's
//! relation.  Periodic facet connectivity matches physical facet points
//! across interfaces (directly, or translated by one period) and stores the
//! alignment permutation of each interface.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::refelem::{
    modal_grad_vandermonde, modal_vandermonde, warp_blend_nodes, Basis, RefElemError,
    ReferenceTriangle,
};

/// Errors raised during mesh construction and interrogation.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error(transparent)]
    RefElem(#[from] RefElemError),
    /// Mapping Jacobian not positive at an evaluation point.
    #[error("non-positive mapping Jacobian {value:.3e} in element {elem}")]
    NonPositiveJacobian { elem: usize, value: f64 },
    /// A facet found no periodic partner.
    #[error("facet {facet} of element {elem} has no periodic partner")]
    UnmatchedFacet { elem: usize, facet: usize },
    /// A facet matched a partner but the point sets failed to align.
    #[error("facet {facet} of element {elem} matched a partner but point {point} has no image")]
    MisalignedFacet {
        elem: usize,
        facet: usize,
        point: usize,
    },
    /// Invalid generator parameters.
    #[error("invalid mesh parameters: {0}")]
    Invalid(String),
    /// I/O failure while dumping the mesh.
    #[error("failed to write mesh dump: {0}")]
    Dump(#[from] std::io::Error),
}

/// The fixed smooth warping of the square `(0,L)²`; identity on the
/// boundary.
pub fn warp_point(x: [f64; 2], len: f64) -> [f64; 2] {
    let s1 = (std::f64::consts::PI * x[0] / len).sin();
    let s2 = (std::f64::consts::PI * x[1] / len).sin();
    [
        x[0] + 0.2 * len * s1 * s2,
        x[1] + 0.2 * len * (1.0 - x[1] / len).exp() * s1 * s2,
    ]
}

/// A periodic triangular mesh of `(0,L)²`.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Number of squares per side.
    pub n_side: usize,
    /// Side length `L`.
    pub len: f64,
    /// Polynomial degree of the element mappings.
    pub p_map: usize,
    /// Modal mapping coefficients per element (`N_map x 2` each).
    map_coeffs: Vec<DMatrix<f64>>,
}

impl Mesh {
    /// Build the unwarped split-Cartesian mesh: `M x M` squares on `(0,L)²`,
    /// each split along its lower-left to upper-right diagonal.
    pub fn split_cartesian(m: usize, len: f64, p_map: usize) -> Result<Self, MeshError> {
        if m == 0 || len <= 0.0 {
            return Err(MeshError::Invalid(format!(
                "need at least one square per side and a positive length, got M = {m}, L = {len}"
            )));
        }
        let map_nodes = warp_blend_nodes(p_map)?;
        let basis = Basis::nodal(p_map, &map_nodes)?;
        let to_modal = basis.modal_coefficients(); // Ṽ^{-1}
        let h = len / m as f64;
        let mut map_coeffs = Vec::with_capacity(2 * m * m);
        for row in 0..m {
            for col in 0..m {
                let x0 = col as f64 * h;
                let y0 = row as f64 * h;
                let corners = [
                    [x0, y0],
                    [x0 + h, y0],
                    [x0 + h, y0 + h],
                    [x0, y0 + h],
                ];
                // Lower-right and upper-left triangle of the square, both
                // counterclockwise, sharing the lower-left/upper-right
                // diagonal.
                let split: [[usize; 3]; 2] = if (row + col) % 2 == 0 {
                    [[0, 1, 2], [0, 2, 3]]
                } else {
                    [[0, 1, 3], [1, 2, 3]]
                };
                for tri in split {
                    let verts = [corners[tri[0]], corners[tri[1]], corners[tri[2]]];
                    let mut nodes = DMatrix::zeros(map_nodes.len(), 2);
                    for (i, &xr) in map_nodes.iter().enumerate() {
                        let b1 = -0.5 * (xr[0] + xr[1]);
                        let b2 = 0.5 * (1.0 + xr[0]);
                        let b3 = 0.5 * (1.0 + xr[1]);
                        for d in 0..2 {
                            nodes[(i, d)] =
                                b1 * verts[0][d] + b2 * verts[1][d] + b3 * verts[2][d];
                        }
                    }
                    map_coeffs.push(&to_modal * nodes);
                }
            }
        }
        Ok(Mesh {
            n_side: m,
            len,
            p_map,
            map_coeffs,
        })
    }

    /// The same mesh with the smooth warping applied to every mapping node.
    pub fn warped(&self) -> Result<Self, MeshError> {
        let map_nodes = warp_blend_nodes(self.p_map)?;
        let basis = Basis::nodal(self.p_map, &map_nodes)?;
        let to_modal = basis.modal_coefficients();
        let vm = modal_vandermonde(self.p_map, &map_nodes);
        let map_coeffs = self
            .map_coeffs
            .iter()
            .map(|c| {
                let nodes = &vm * c; // physical node positions
                let mut warped = DMatrix::zeros(nodes.nrows(), 2);
                for i in 0..nodes.nrows() {
                    let w = warp_point([nodes[(i, 0)], nodes[(i, 1)]], self.len);
                    warped[(i, 0)] = w[0];
                    warped[(i, 1)] = w[1];
                }
                &to_modal * warped
            })
            .collect();
        Ok(Mesh {
            map_coeffs,
            ..self.clone()
        })
    }

    /// Number of elements, `2M²`.
    pub fn n_elements(&self) -> usize {
        self.map_coeffs.len()
    }

    /// True when every element mapping is affine.
    pub fn is_affine(&self) -> bool {
        self.p_map == 1
    }

    /// Physical positions of the images of `ref_points` under the mapping of
    /// element `elem`, as an `n x 2` matrix.
    pub fn map_points(&self, elem: usize, ref_points: &[[f64; 2]]) -> DMatrix<f64> {
        modal_vandermonde(self.p_map, ref_points) * &self.map_coeffs[elem]
    }

    /// Mapping Jacobians `𝒥 = ∂x/∂x̂` of element `elem` at `ref_points`,
    /// one `2x2` row-major matrix per point.
    pub fn map_jacobians(&self, elem: usize, ref_points: &[[f64; 2]]) -> Vec<[[f64; 2]; 2]> {
        let [g1, g2] = modal_grad_vandermonde(self.p_map, ref_points);
        let dx1 = &g1 * &self.map_coeffs[elem];
        let dx2 = &g2 * &self.map_coeffs[elem];
        (0..ref_points.len())
            .map(|i| {
                [
                    [dx1[(i, 0)], dx2[(i, 0)]],
                    [dx1[(i, 1)], dx2[(i, 1)]],
                ]
            })
            .collect()
    }

    /// Physical vertex positions of element `elem`.
    pub fn element_vertices(&self, elem: usize) -> [[f64; 2]; 3] {
        let pts = self.map_points(elem, &ReferenceTriangle::VERTICES);
        [
            [pts[(0, 0)], pts[(0, 1)]],
            [pts[(1, 0)], pts[(1, 1)]],
            [pts[(2, 0)], pts[(2, 1)]],
        ]
    }

    /// Write the element table and interface table as CSV files into `dir`.
    pub fn dump(&self, conn: &Connectivity, dir: &std::path::Path) -> Result<(), MeshError> {
        std::fs::create_dir_all(dir)?;
        let mut elems = String::from("elem,v1x,v1y,v2x,v2y,v3x,v3y\n");
        for k in 0..self.n_elements() {
            let v = self.element_vertices(k);
            elems.push_str(&format!(
                "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1]
            ));
        }
        std::fs::write(dir.join("elements.csv"), elems)?;
        let mut faces = String::from("elem,facet,neighbor_elem,neighbor_facet,permutation\n");
        for k in 0..self.n_elements() {
            for facet in 0..3 {
                let link = &conn.links[k][facet];
                let perm: Vec<String> = link.perm.iter().map(|i| i.to_string()).collect();
                faces.push_str(&format!(
                    "{k},{facet},{},{},{}\n",
                    link.elem,
                    link.facet,
                    perm.join(" ")
                ));
            }
        }
        std::fs::write(dir.join("interfaces.csv"), faces)?;
        Ok(())
    }
}

/// One side of an interface: the partner facet and the permutation aligning
/// the partner's facet points with this side's facet points.
///
/// Facet point `i` of the owning facet coincides (up to one periodic
/// translation) with facet point `perm[i]` of facet `facet` of element
/// `elem`.
#[derive(Debug, Clone)]
pub struct FacetLink {
    pub elem: usize,
    pub facet: usize,
    pub perm: Vec<usize>,
}

/// Periodic interface connectivity of a mesh for a fixed facet point layout.
#[derive(Debug, Clone)]
pub struct Connectivity {
    /// `links[k][γ]` describes the partner of facet `γ` of element `k`.
    pub links: Vec<[FacetLink; 3]>,
}

/// Match all facets of the periodic mesh using the physical images of the
/// given reference facet points.
///
/// Points are compared with absolute tolerance `1e-10 · L / M`; every facet
/// must find exactly one partner, either coincident or translated by one
/// period in `x` or `y`.
pub fn periodic_connectivity(
    mesh: &Mesh,
    facet_points: &[Vec<[f64; 2]>; 3],
) -> Result<Connectivity, MeshError> {
    let k_elems = mesh.n_elements();
    let tol = 1e-10 * mesh.len / mesh.n_side as f64;
    // Physical facet points and centroids of every facet.
    let mut points: Vec<[Vec<[f64; 2]>; 3]> = Vec::with_capacity(k_elems);
    let mut centroids: Vec<[[f64; 2]; 3]> = Vec::with_capacity(k_elems);
    for k in 0..k_elems {
        let mut elem_pts: [Vec<[f64; 2]>; 3] = Default::default();
        let mut elem_cent = [[0.0; 2]; 3];
        for facet in 0..3 {
            let mapped = mesh.map_points(k, &facet_points[facet]);
            let n = mapped.nrows();
            let mut pts = Vec::with_capacity(n);
            let mut cent = [0.0; 2];
            for i in 0..n {
                let pt = [mapped[(i, 0)], mapped[(i, 1)]];
                cent[0] += pt[0] / n as f64;
                cent[1] += pt[1] / n as f64;
                pts.push(pt);
            }
            elem_pts[facet] = pts;
            elem_cent[facet] = cent;
        }
        points.push(elem_pts);
        centroids.push(elem_cent);
    }
    let shifts = [
        [0.0, 0.0],
        [mesh.len, 0.0],
        [-mesh.len, 0.0],
        [0.0, mesh.len],
        [0.0, -mesh.len],
    ];
    let mut links: Vec<[Option<FacetLink>; 3]> = vec![[None, None, None]; k_elems];
    for k in 0..k_elems {
        for facet in 0..3 {
            if links[k][facet].is_some() {
                continue;
            }
            let cent = centroids[k][facet];
            let mut found: Option<(usize, usize, [f64; 2])> = None;
            'search: for &shift in &shifts {
                let target = [cent[0] + shift[0], cent[1] + shift[1]];
                for (k2, facet_cents) in centroids.iter().enumerate() {
                    for (f2, c2) in facet_cents.iter().enumerate() {
                        if k2 == k && f2 == facet {
                            continue;
                        }
                        if (c2[0] - target[0]).abs() < tol && (c2[1] - target[1]).abs() < tol {
                            found = Some((k2, f2, shift));
                            break 'search;
                        }
                    }
                }
            }
            let (k2, f2, shift) =
                found.ok_or(MeshError::UnmatchedFacet { elem: k, facet })?;
            // Align the point sets in both directions.
            let perm_fwd = align(&points[k][facet], &points[k2][f2], shift, tol)
                .map_err(|point| MeshError::MisalignedFacet {
                    elem: k,
                    facet,
                    point,
                })?;
            let perm_bwd = align(
                &points[k2][f2],
                &points[k][facet],
                [-shift[0], -shift[1]],
                tol,
            )
            .map_err(|point| MeshError::MisalignedFacet {
                elem: k2,
                facet: f2,
                point,
            })?;
            links[k][facet] = Some(FacetLink {
                elem: k2,
                facet: f2,
                perm: perm_fwd,
            });
            links[k2][f2] = Some(FacetLink {
                elem: k,
                facet,
                perm: perm_bwd,
            });
        }
    }
    let links = links
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            let [a, b, c] = row;
            Ok([
                a.ok_or(MeshError::UnmatchedFacet { elem: k, facet: 0 })?,
                b.ok_or(MeshError::UnmatchedFacet { elem: k, facet: 1 })?,
                c.ok_or(MeshError::UnmatchedFacet { elem: k, facet: 2 })?,
            ])
        })
        .collect::<Result<Vec<_>, MeshError>>()?;
    Ok(Connectivity { links })
}

/// For each point of `own`, find the index of the coincident point of
/// `other` after translating `own` by `shift`.
fn align(
    own: &[[f64; 2]],
    other: &[[f64; 2]],
    shift: [f64; 2],
    tol: f64,
) -> Result<Vec<usize>, usize> {
    let mut perm = Vec::with_capacity(own.len());
    for (i, pt) in own.iter().enumerate() {
        let target = [pt[0] + shift[0], pt[1] + shift[1]];
        let hit = other.iter().position(|q| {
            (q[0] - target[0]).abs() < tol && (q[1] - target[1]).abs() < tol
        });
        perm.push(hit.ok_or(i)?);
    }
    Ok(perm)
}

/// Geometric factors of a mesh evaluated at the point layout of a scheme,
/// stored element-per-column.
#[derive(Debug, Clone)]
pub struct GeometricFactors {
    /// Volume Jacobian determinant `J` (`N x K`).
    pub j_vol: DMatrix<f64>,
    /// Metric entries `adj(𝒥)_{mn} = J [𝒥⁻¹]_{mn}` at volume points.
    pub metric: [[DMatrix<f64>; 2]; 2],
    /// Physical coordinates of the volume points.
    pub xy_vol: [DMatrix<f64>; 2],
    /// Facet area scaling `J^{(κ,γ)}` (`N_γ x K` per facet).
    pub j_fac: [DMatrix<f64>; 3],
    /// Unit outward normals at the facet points.
    pub normal: [[DMatrix<f64>; 2]; 3],
    /// Physical coordinates of the facet points.
    pub xy_fac: [[DMatrix<f64>; 2]; 3],
}

/// Evaluate all geometric factors at the volume and facet points of a
/// scheme.  Fails if any volume or facet Jacobian determinant is
/// non-positive.
pub fn geometric_factors(
    mesh: &Mesh,
    volume_points: &[[f64; 2]],
    facet_points: &[Vec<[f64; 2]>; 3],
) -> Result<GeometricFactors, MeshError> {
    let k_elems = mesh.n_elements();
    let n = volume_points.len();
    let mut j_vol = DMatrix::zeros(n, k_elems);
    let mut metric = [
        [DMatrix::zeros(n, k_elems), DMatrix::zeros(n, k_elems)],
        [DMatrix::zeros(n, k_elems), DMatrix::zeros(n, k_elems)],
    ];
    let mut xy_vol = [DMatrix::zeros(n, k_elems), DMatrix::zeros(n, k_elems)];
    for k in 0..k_elems {
        let xy = mesh.map_points(k, volume_points);
        let jacs = mesh.map_jacobians(k, volume_points);
        for (i, jac) in jacs.iter().enumerate() {
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det <= 0.0 {
                return Err(MeshError::NonPositiveJacobian {
                    elem: k,
                    value: det,
                });
            }
            j_vol[(i, k)] = det;
            // adj(𝒥) = [[𝒥22, -𝒥12], [-𝒥21, 𝒥11]]
            metric[0][0][(i, k)] = jac[1][1];
            metric[0][1][(i, k)] = -jac[0][1];
            metric[1][0][(i, k)] = -jac[1][0];
            metric[1][1][(i, k)] = jac[0][0];
            xy_vol[0][(i, k)] = xy[(i, 0)];
            xy_vol[1][(i, k)] = xy[(i, 1)];
        }
    }
    let empty = || DMatrix::zeros(0, 0);
    let mut j_fac = [empty(), empty(), empty()];
    let mut normal = [[empty(), empty()], [empty(), empty()], [empty(), empty()]];
    let mut xy_fac = [[empty(), empty()], [empty(), empty()], [empty(), empty()]];
    for facet in 0..3 {
        let nf = facet_points[facet].len();
        let nhat = ReferenceTriangle::facet_normal(facet);
        let mut jf = DMatrix::zeros(nf, k_elems);
        let mut nx = DMatrix::zeros(nf, k_elems);
        let mut ny = DMatrix::zeros(nf, k_elems);
        let mut fx = DMatrix::zeros(nf, k_elems);
        let mut fy = DMatrix::zeros(nf, k_elems);
        for k in 0..k_elems {
            let xy = mesh.map_points(k, &facet_points[facet]);
            let jacs = mesh.map_jacobians(k, &facet_points[facet]);
            for (i, jac) in jacs.iter().enumerate() {
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                if det <= 0.0 {
                    return Err(MeshError::NonPositiveJacobian {
                        elem: k,
                        value: det,
                    });
                }
                // Nanson: scaled outward normal (adj 𝒥)ᵀ n̂.
                let sx = jac[1][1] * nhat[0] - jac[1][0] * nhat[1];
                let sy = -jac[0][1] * nhat[0] + jac[0][0] * nhat[1];
                let scale = (sx * sx + sy * sy).sqrt();
                jf[(i, k)] = scale;
                nx[(i, k)] = sx / scale;
                ny[(i, k)] = sy / scale;
                fx[(i, k)] = xy[(i, 0)];
                fy[(i, k)] = xy[(i, 1)];
            }
        }
        j_fac[facet] = jf;
        normal[facet] = [nx, ny];
        xy_fac[facet] = [fx, fy];
    }
    Ok(GeometricFactors {
        j_vol,
        metric,
        xy_vol,
        j_fac,
        normal,
        xy_fac,
    })
}

/// Largest interface mismatch of the weighted facet inner products:
/// `Tᵀ (Wᵞ diag Jᵏᵞ) T` against `Wᶯ diag Jᵛᶯ` over all interfaces, measured
/// in the Frobenius norm relative to the local scale.
///
/// A watertight periodic mesh paired with any of the inner-product variants
/// satisfies this identity to roundoff; it is the discrete compatibility
/// that makes interface coupling conservative.
pub fn check_interface_weights(
    w_facet: &[DMatrix<f64>; 3],
    geom: &GeometricFactors,
    conn: &Connectivity,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, row) in conn.links.iter().enumerate() {
        for (facet, link) in row.iter().enumerate() {
            let n = w_facet[facet].nrows();
            let mut own = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    own[(i, j)] = w_facet[facet][(i, j)] * geom.j_fac[facet][(j, k)];
                }
            }
            let nn = w_facet[link.facet].nrows();
            let mut theirs = DMatrix::zeros(nn, nn);
            for i in 0..nn {
                for j in 0..nn {
                    theirs[(i, j)] =
                        w_facet[link.facet][(i, j)] * geom.j_fac[link.facet][(j, link.elem)];
                }
            }
            // (Tᵀ A T)_{ij} = A_{perm[i], perm[j]}
            let mut permuted = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    permuted[(i, j)] = theirs[(link.perm[i], link.perm[j])];
                }
            }
            let scale = own.norm().max(1e-300);
            worst = worst.max((own - permuted).norm() / scale);
        }
    }
    worst
}
