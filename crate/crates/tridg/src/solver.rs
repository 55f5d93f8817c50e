//! Semi-discrete residual assembly and explicit time integration.
//!
//! A [`Discretization`] couples one set of [`ReferenceOperators`] with a
//! [`Mesh`], a conservation [`Law`], and the advective upwinding parameter;
//! it owns the periodic connectivity, the geometric factors, and the
//! per-element inverses of the metric-weighted mass matrices.  A [`Scheme`]
//! then selects one of five residual forms:
//!
//! * `strong_dg` / `weak_dg`: the discontinuous Galerkin scheme with the
//!   divergence applied to the projected flux, respectively its
//!   integrated-by-parts twin. Both require an uncorrected (`c = 0`)
//!   operator set.
//! * `strong_fr`: flux reconstruction with correction-field lifting.
//! * `weak_filtered`: the weak scheme premultiplied by the filter that maps
//!   it onto the flux-reconstruction solution.
//! * `weak_zwanenburg`: the filtered-facet weak form, which touches the
//!   interface terms only.
//!
//! All five reduce to `du/dt = (M^κ)⁻¹ (Σ_m VOL_m f^h_m + Σ_γ FAC_γ f*_γ)`
//! with form-specific left factors folded into the volume and facet
//! matrices, so a single assembly pipeline serves every form and the
//! equivalence theory can be checked by swapping matrices only.  The
//! assembly order is fixed — volume terms, facet trace gather, facet terms —
//! so repeated runs are bitwise reproducible.
//!
//! For the linear advection law on affine meshes the whole right-hand side
//! is a sparse block-linear map built from a handful of reference matrices
//! and per-element affine factors; [`Scheme::run`] detects this case and
//! compiles a fused per-class kernel that advances the solution roughly an
//! order of magnitude faster than the general pipeline, against which it
//! is cross-validated in the tests.

use std::io;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mesh::{
    geometric_factors, periodic_connectivity, Connectivity, GeometricFactors, Mesh, MeshError,
};
use crate::operators::{OperatorError, ReferenceOperators};
use crate::physics::{EulerLaw, Law, PhysicsError};
use crate::refelem::ReferenceTriangle;

/// Upper bound on the number of conserved quantities of any supported law.
const MAX_EQUATIONS: usize = EulerLaw::N_EQUATIONS;

/// `y += alpha * x` over equally shaped matrices.
fn axpy_mat(y: &mut DMatrix<f64>, alpha: f64, x: &DMatrix<f64>) {
    y.zip_apply(x, |yv, xv| *yv += alpha * xv);
}

/// Right-hand-side evaluator consumed by [`rk4_advance`]: reads coefficient
/// matrices (one per equation) and fills equally shaped time derivatives.
pub type RhsFn<'r> =
    dyn FnMut(&[DMatrix<f64>], &mut [DMatrix<f64>]) -> Result<(), SolverError> + 'r;

/// Per-step observer: receives the step index and the state after that step.
pub type StepFn<'h> = dyn FnMut(usize, &SolutionState) -> io::Result<()> + 'h;

/// One matrix per reference coordinate direction.
type DirPair = [DMatrix<f64>; 2];
/// One matrix per reference facet.
type FacetTriple = [DMatrix<f64>; 3];

/// Blow-up guard scale: a run is declared unstable once the largest
/// coefficient magnitude exceeds `GUARD_FACTOR * (initial magnitude + 1)`.
pub const GUARD_FACTOR: f64 = 1e6;

/// Errors raised while assembling or advancing a semi-discrete scheme.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    /// A physics evaluation failed; `elem` locates the offending element.
    #[error("element {elem}: {source}")]
    Physics {
        elem: usize,
        #[source]
        source: PhysicsError,
    },
    /// `strong_dg` and `weak_dg` discretize the divergence directly and are
    /// only defined for an uncorrected operator set.
    #[error("residual form {form} requires c = 0, but the operators carry c = {c:e}")]
    FormRequiresUncorrected { form: ResidualForm, c: f64 },
    /// The metric-weighted mass matrix of a curved element could not be
    /// inverted.
    #[error("element {elem} has a singular metric-weighted mass matrix")]
    SingularMass { elem: usize },
    /// The requested operation only applies under a stated restriction.
    #[error("operation requires {0}")]
    Requires(&'static str),
    /// A per-step observer callback failed.
    #[error("step callback failed: {0}")]
    Callback(#[from] io::Error),
}

/// The five residual forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResidualForm {
    StrongDg,
    WeakDg,
    StrongFr,
    WeakFiltered,
    WeakZwanenburg,
}

impl ResidualForm {
    pub const ALL: [ResidualForm; 5] = [
        ResidualForm::StrongDg,
        ResidualForm::WeakDg,
        ResidualForm::StrongFr,
        ResidualForm::WeakFiltered,
        ResidualForm::WeakZwanenburg,
    ];

    /// Stable identifier used in configuration files and result tables.
    pub fn name(self) -> &'static str {
        match self {
            ResidualForm::StrongDg => "strong_dg",
            ResidualForm::WeakDg => "weak_dg",
            ResidualForm::StrongFr => "strong_fr",
            ResidualForm::WeakFiltered => "weak_filtered",
            ResidualForm::WeakZwanenburg => "weak_zwanenburg",
        }
    }

    /// Inverse of [`ResidualForm::name`].
    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Whether the form is only defined for `c = 0` operators.  The
    /// remaining forms absorb the correction field through lifting or
    /// filtering and accept any admissible `c`.
    pub fn requires_uncorrected(self) -> bool {
        matches!(self, ResidualForm::StrongDg | ResidualForm::WeakDg)
    }
}

impl std::fmt::Display for ResidualForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Modal coefficients of a time-dependent discrete solution.
#[derive(Debug, Clone)]
pub struct SolutionState {
    /// Current simulation time.
    pub t: f64,
    /// One `N_p × K` coefficient matrix per conserved quantity; column `k`
    /// holds the modal expansion on element `k`.
    pub coeffs: Vec<DMatrix<f64>>,
}

impl SolutionState {
    /// Largest coefficient magnitude over all equations and elements.
    /// Returns NaN-propagating `f64::max`-free scanning so that a single
    /// non-finite entry is reported as non-finite.
    pub fn max_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.coeffs {
            for &v in c.iter() {
                if !v.is_finite() {
                    return f64::NAN;
                }
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

/// Per-element application of the inverse leading matrix `(M^κ)⁻¹`.
enum Leading {
    /// Affine meshes: `M^κ = J^κ M`, so every element shares the reference
    /// inverse scaled by the reciprocal Jacobian.
    Affine { inv_j: Vec<f64> },
    /// Curved meshes: explicit per-element inverses of `VᵀW J^κ V`.  The
    /// product is not symmetric when `W` is dense, so the inverses come
    /// from an LU factorization.
    Curved { m_inv: Vec<DMatrix<f64>> },
}

/// A conservation law discretized on one mesh with one operator family.
pub struct Discretization {
    pub ops: ReferenceOperators,
    pub mesh: Mesh,
    pub law: Law,
    /// Upwinding parameter forwarded to the advective interface flux
    /// (ignored by the Euler law, whose interface flux is the Roe flux).
    pub lambda: f64,
    pub conn: Connectivity,
    pub geom: GeometricFactors,
    /// `VᵀW`, shared by the projection and the weak-form assembly.
    vt_w: DMatrix<f64>,
    leading: Leading,
}

impl Discretization {
    pub fn new(
        ops: ReferenceOperators,
        mesh: Mesh,
        law: Law,
        lambda: f64,
    ) -> Result<Self, SolverError> {
        let conn = periodic_connectivity(&mesh, &ops.facet_points)?;
        let geom = geometric_factors(&mesh, &ops.volume_points, &ops.facet_points)?;
        let vt_w = ops.v.transpose() * &ops.w;
        let k_total = mesh.n_elements();
        let leading = if mesh.is_affine() {
            let inv_j = (0..k_total).map(|k| 1.0 / geom.j_vol[(0, k)]).collect();
            Leading::Affine { inv_j }
        } else {
            let mut m_inv = Vec::with_capacity(k_total);
            for k in 0..k_total {
                let mut wv = &ops.w * &ops.v;
                // Insert diag(J^κ) between W and V by scaling the nodal rows
                // of V before the product would be cheaper, but W may be
                // dense; scale V's rows first instead: W (J ∘ V).
                let mut jv = ops.v.clone();
                for i in 0..ops.n_volume() {
                    let j = geom.j_vol[(i, k)];
                    for q in 0..ops.n_modes() {
                        jv[(i, q)] *= j;
                    }
                }
                wv.gemm(1.0, &ops.w, &jv, 0.0);
                let mk = ops.v.transpose() * wv;
                let inv = mk
                    .lu()
                    .try_inverse()
                    .ok_or(SolverError::SingularMass { elem: k })?;
                m_inv.push(inv);
            }
            Leading::Curved { m_inv }
        };
        Ok(Self {
            ops,
            mesh,
            law,
            lambda,
            conn,
            geom,
            vt_w,
            leading,
        })
    }

    pub fn n_equations(&self) -> usize {
        self.law.n_equations()
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    /// `out[e] = (M^κ)⁻¹ scratch[e]`, element by element.
    fn apply_leading(&self, scratch: &[DMatrix<f64>], out: &mut [DMatrix<f64>]) {
        match &self.leading {
            Leading::Affine { inv_j } => {
                for (s, o) in scratch.iter().zip(out.iter_mut()) {
                    o.gemm(1.0, &self.ops.m_inv, s, 0.0);
                    for (k, &scale) in inv_j.iter().enumerate() {
                        o.column_mut(k).scale_mut(scale);
                    }
                }
            }
            Leading::Curved { m_inv } => {
                for (s, o) in scratch.iter().zip(out.iter_mut()) {
                    for (k, inv) in m_inv.iter().enumerate() {
                        o.column_mut(k).gemv(1.0, inv, &s.column(k), 0.0);
                    }
                }
            }
        }
    }
}

/// Project an initial condition onto the discrete space with the
/// volume-weighted projection `(M^κ)⁻¹ VᵀW J^κ` (which reduces to the
/// reference projection on affine elements).  The callback receives physical
/// coordinates and fills one value per conserved quantity.  For the Euler
/// law the projected state is audited for admissibility at every volume and
/// facet node.
pub fn init_projection<F>(disc: &Discretization, ic: F) -> Result<SolutionState, SolverError>
where
    F: Fn([f64; 2], &mut [f64]) -> Result<(), PhysicsError>,
{
    let n_eq = disc.n_equations();
    let n_vol = disc.ops.n_volume();
    let k_total = disc.n_elements();
    let mut vals = vec![DMatrix::zeros(n_vol, k_total); n_eq];
    let mut point = [0.0_f64; MAX_EQUATIONS];
    for k in 0..k_total {
        for i in 0..n_vol {
            let x = [disc.geom.xy_vol[0][(i, k)], disc.geom.xy_vol[1][(i, k)]];
            ic(x, &mut point[..n_eq]).map_err(|source| SolverError::Physics { elem: k, source })?;
            for (e, vmat) in vals.iter_mut().enumerate() {
                vmat[(i, k)] = point[e];
            }
        }
    }
    let coeffs: Vec<DMatrix<f64>> = match &disc.leading {
        Leading::Affine { .. } => vals.iter().map(|v| &disc.ops.proj * v).collect(),
        Leading::Curved { m_inv } => vals
            .iter()
            .map(|v| {
                let mut jv = v.clone();
                jv.component_mul_assign(&disc.geom.j_vol);
                let rhs = &disc.vt_w * jv;
                let mut c = DMatrix::zeros(disc.ops.n_modes(), k_total);
                for (k, inv) in m_inv.iter().enumerate() {
                    c.column_mut(k).gemv(1.0, inv, &rhs.column(k), 0.0);
                }
                c
            })
            .collect(),
    };
    let state = SolutionState { t: 0.0, coeffs };
    if let Law::Euler(euler) = &disc.law {
        let audit = |nodal: &[DMatrix<f64>]| -> Result<(), SolverError> {
            let mut u = [0.0_f64; MAX_EQUATIONS];
            for k in 0..k_total {
                for i in 0..nodal[0].nrows() {
                    for (e, mat) in nodal.iter().enumerate() {
                        u[e] = mat[(i, k)];
                    }
                    euler
                        .check_admissible(&u[..n_eq])
                        .map_err(|source| SolverError::Physics { elem: k, source })?;
                }
            }
            Ok(())
        };
        let volume: Vec<DMatrix<f64>> = state.coeffs.iter().map(|c| &disc.ops.v * c).collect();
        audit(&volume)?;
        for gamma in 0..ReferenceTriangle::N_FACETS {
            let traces: Vec<DMatrix<f64>> = state
                .coeffs
                .iter()
                .map(|c| &disc.ops.v_facet[gamma] * c)
                .collect();
            audit(&traces)?;
        }
    }
    Ok(state)
}

/// Scratch buffers reused across residual evaluations.
pub struct Workspace {
    /// Nodal solution values at volume points, one `N × K` matrix per
    /// equation.
    u_vol: Vec<DMatrix<f64>>,
    /// Transformed flux values at volume points, per equation and reference
    /// direction.
    f_vol: Vec<[DMatrix<f64>; 2]>,
    /// Interior facet traces, per facet and equation.
    tr: [Vec<DMatrix<f64>>; 3],
    /// Scaled interface flux values, per facet and equation.
    fstar: [Vec<DMatrix<f64>>; 3],
    /// Assembled right-hand side before the leading inverse.
    scratch: Vec<DMatrix<f64>>,
    /// Per-class gather/scale/result buffers for the fused linear kernel.
    class_u: [DMatrix<f64>; 2],
    class_g: [DMatrix<f64>; 2],
    class_s: [DMatrix<f64>; 2],
    class_r: [DMatrix<f64>; 2],
}

/// One residual form bound to a discretization, with all form-specific
/// matrix products precomputed.
pub struct Scheme<'a> {
    pub disc: &'a Discretization,
    pub form: ResidualForm,
    /// Volume matrices per reference direction (`N_p × N`), applied to the
    /// transformed-flux nodal values; facet correction terms that act on
    /// projected volume fluxes are folded in.
    vol: [DMatrix<f64>; 2],
    /// Facet matrices (`N_p × N_γ`), applied to the scaled interface flux.
    fac: [DMatrix<f64>; 3],
    kernel: Option<LinearKernel>,
}

impl<'a> Scheme<'a> {
    pub fn new(disc: &'a Discretization, form: ResidualForm) -> Result<Self, SolverError> {
        let ops = &disc.ops;
        if form.requires_uncorrected() && ops.c != 0.0 {
            return Err(SolverError::FormRequiresUncorrected { form, c: ops.c });
        }
        let n_p = ops.n_modes();
        let vt_w = ops.v.transpose() * &ops.w;
        // (V^γ)ᵀ W^γ and V^γ P, the building blocks of every facet term.
        let fvw: [DMatrix<f64>; 3] =
            std::array::from_fn(|g| ops.v_facet[g].transpose() * &ops.w_facet[g]);
        let vf_p: [DMatrix<f64>; 3] = std::array::from_fn(|g| &ops.v_facet[g] * &ops.proj);

        let weak_vol = || std::array::from_fn(|m| ops.d[m].transpose() * &vt_w);
        let strong_vol = || std::array::from_fn(|m| -(&ops.m * &ops.d[m] * &ops.proj));

        let (mut vol, fac, cor): (DirPair, FacetTriple, Option<FacetTriple>) = match form {
                ResidualForm::WeakDg => (weak_vol(), std::array::from_fn(|g| -&fvw[g]), None),
                ResidualForm::StrongDg => (
                    strong_vol(),
                    std::array::from_fn(|g| -&fvw[g]),
                    Some(std::array::from_fn(|g| &fvw[g] * &vf_p[g])),
                ),
                ResidualForm::StrongFr => {
                    let ml: [DMatrix<f64>; 3] = std::array::from_fn(|g| &ops.m * &ops.lift[g]);
                    (
                        strong_vol(),
                        std::array::from_fn(|g| -&ml[g]),
                        Some(std::array::from_fn(|g| &ml[g] * &vf_p[g])),
                    )
                }
                ResidualForm::WeakFiltered => {
                    // The full-solution filter acts as M (M + K)⁻¹ once the
                    // metric-weighted leading inverse is factored out.
                    let q = &ops.m * &ops.mk_inv;
                    (
                        std::array::from_fn(|m| &q * (ops.d[m].transpose() * &vt_w)),
                        std::array::from_fn(|g| -(&q * &fvw[g])),
                        None,
                    )
                }
                ResidualForm::WeakZwanenburg => {
                    let ft = ops.filter.transpose();
                    let eye = DMatrix::<f64>::identity(n_p, n_p);
                    let one_minus_ft = &eye - &ft;
                    (
                        weak_vol(),
                        std::array::from_fn(|g| -(&ft * &fvw[g])),
                        Some(std::array::from_fn(|g| {
                            -(&one_minus_ft * (&fvw[g] * &vf_p[g]))
                        })),
                    )
                }
            };
        // Fold the facet corrections, which multiply projected volume
        // fluxes, into the volume matrices: they enter with the reference
        // facet-normal component of the corresponding direction.
        if let Some(cor) = cor {
            for (m, vol_m) in vol.iter_mut().enumerate() {
                for (g, cor_g) in cor.iter().enumerate() {
                    let n_ref = ReferenceTriangle::facet_normal(g);
                    if n_ref[m] != 0.0 {
                        *vol_m += n_ref[m] * cor_g;
                    }
                }
            }
        }
        let kernel = LinearKernel::compile(disc, &vol, &fac);
        Ok(Self {
            disc,
            form,
            vol,
            fac,
            kernel,
        })
    }

    /// Whether the fused linear kernel is active for [`Scheme::run`].
    pub fn has_fused_kernel(&self) -> bool {
        self.kernel.is_some()
    }

    /// Allocate scratch buffers matching this scheme's shapes.
    pub fn workspace(&self) -> Workspace {
        let ops = &self.disc.ops;
        let n_eq = self.disc.n_equations();
        let n_vol = ops.n_volume();
        let k_total = self.disc.n_elements();
        let n_p = ops.n_modes();
        let class_dims = |c: usize| match &self.kernel {
            Some(k) => (n_p, k.members[c].len()),
            None => (0, 0),
        };
        Workspace {
            u_vol: vec![DMatrix::zeros(n_vol, k_total); n_eq],
            f_vol: vec![
                std::array::from_fn(|_| DMatrix::zeros(n_vol, k_total));
                n_eq
            ],
            tr: std::array::from_fn(|g| vec![DMatrix::zeros(ops.n_facet(g), k_total); n_eq]),
            fstar: std::array::from_fn(|g| vec![DMatrix::zeros(ops.n_facet(g), k_total); n_eq]),
            scratch: vec![DMatrix::zeros(n_p, k_total); n_eq],
            class_u: std::array::from_fn(|c| {
                let (r, cc) = class_dims(c);
                DMatrix::zeros(r, cc)
            }),
            class_g: std::array::from_fn(|c| {
                let (r, cc) = class_dims(c);
                DMatrix::zeros(r, cc)
            }),
            class_s: std::array::from_fn(|c| {
                let (r, cc) = class_dims(c);
                DMatrix::zeros(r, cc)
            }),
            class_r: std::array::from_fn(|c| {
                let (r, cc) = class_dims(c);
                DMatrix::zeros(r, cc)
            }),
        }
    }

    /// Evaluate the semi-discrete right-hand side `du/dt` through the
    /// general assembly pipeline.  `coeffs` and `out` hold one `N_p × K`
    /// matrix per equation.
    pub fn residual_into(
        &self,
        coeffs: &[DMatrix<f64>],
        out: &mut [DMatrix<f64>],
        ws: &mut Workspace,
    ) -> Result<(), SolverError> {
        let disc = self.disc;
        let ops = &disc.ops;
        let geom = &disc.geom;
        let n_eq = disc.n_equations();
        let n_vol = ops.n_volume();
        let k_total = disc.n_elements();

        // Volume terms: nodal values, transformed flux, volume matrices.
        for (uv, c) in ws.u_vol.iter_mut().zip(coeffs) {
            uv.gemm(1.0, &ops.v, c, 0.0);
        }
        let mut u = [0.0_f64; MAX_EQUATIONS];
        let mut f = [[0.0_f64; 2]; MAX_EQUATIONS];
        for k in 0..k_total {
            for i in 0..n_vol {
                for (e, uv) in ws.u_vol.iter().enumerate() {
                    u[e] = uv[(i, k)];
                }
                disc.law
                    .flux(&u[..n_eq], &mut f[..n_eq])
                    .map_err(|source| SolverError::Physics { elem: k, source })?;
                let a00 = geom.metric[0][0][(i, k)];
                let a01 = geom.metric[0][1][(i, k)];
                let a10 = geom.metric[1][0][(i, k)];
                let a11 = geom.metric[1][1][(i, k)];
                for (e, fv) in ws.f_vol.iter_mut().enumerate() {
                    fv[0][(i, k)] = a00 * f[e][0] + a01 * f[e][1];
                    fv[1][(i, k)] = a10 * f[e][0] + a11 * f[e][1];
                }
            }
        }
        for e in 0..n_eq {
            ws.scratch[e].gemm(1.0, &self.vol[0], &ws.f_vol[e][0], 0.0);
            ws.scratch[e].gemm(1.0, &self.vol[1], &ws.f_vol[e][1], 1.0);
        }

        // Facet trace gather.
        for g in 0..ReferenceTriangle::N_FACETS {
            for (te, c) in ws.tr[g].iter_mut().zip(coeffs) {
                te.gemm(1.0, &ops.v_facet[g], c, 0.0);
            }
        }

        // Facet terms: interface flux scaled by the facet Jacobian.
        let mut um = [0.0_f64; MAX_EQUATIONS];
        let mut up = [0.0_f64; MAX_EQUATIONS];
        let mut fs = [0.0_f64; MAX_EQUATIONS];
        for k in 0..k_total {
            for g in 0..ReferenceTriangle::N_FACETS {
                let link = &disc.conn.links[k][g];
                let n_fac = ops.n_facet(g);
                for i in 0..n_fac {
                    for e in 0..n_eq {
                        um[e] = ws.tr[g][e][(i, k)];
                        up[e] = ws.tr[link.facet][e][(link.perm[i], link.elem)];
                    }
                    let n = [geom.normal[g][0][(i, k)], geom.normal[g][1][(i, k)]];
                    disc.law
                        .numerical_flux(&um[..n_eq], &up[..n_eq], n, disc.lambda, &mut fs[..n_eq])
                        .map_err(|source| SolverError::Physics { elem: k, source })?;
                    let jf = geom.j_fac[g][(i, k)];
                    for (e, fstar) in ws.fstar[g].iter_mut().enumerate() {
                        fstar[(i, k)] = jf * fs[e];
                    }
                }
            }
        }
        for g in 0..ReferenceTriangle::N_FACETS {
            for e in 0..n_eq {
                ws.scratch[e].gemm(1.0, &self.fac[g], &ws.fstar[g][e], 1.0);
            }
        }

        disc.apply_leading(&ws.scratch, out);
        Ok(())
    }

    /// Convenience wrapper allocating fresh buffers and output.
    pub fn residual(&self, state: &SolutionState) -> Result<Vec<DMatrix<f64>>, SolverError> {
        let mut ws = self.workspace();
        let mut out: Vec<DMatrix<f64>> = state
            .coeffs
            .iter()
            .map(|c| DMatrix::zeros(c.nrows(), c.ncols()))
            .collect();
        self.residual_into(&state.coeffs, &mut out, &mut ws)?;
        Ok(out)
    }

    /// Advance `steps` RK4 steps of size `dt`, using the fused linear
    /// kernel when one was compiled and the general pipeline otherwise.
    /// The observer runs once for the initial state (step 0) and once after
    /// every completed step; it is skipped when the guard trips.
    pub fn run(
        &self,
        state: &mut SolutionState,
        dt: f64,
        steps: usize,
        on_step: Option<&mut StepFn<'_>>,
    ) -> Result<RunOutcome, SolverError> {
        let mut ws = self.workspace();
        let mut rhs = |coeffs: &[DMatrix<f64>],
                       out: &mut [DMatrix<f64>]|
         -> Result<(), SolverError> {
            match &self.kernel {
                Some(kernel) => {
                    kernel.apply(coeffs, out, &mut ws);
                    Ok(())
                }
                None => self.residual_into(coeffs, out, &mut ws),
            }
        };
        rk4_advance(state, dt, steps, &mut rhs, on_step)
    }
}

/// Outcome of a time integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunOutcome {
    /// All requested steps completed with finite, bounded coefficients.
    Completed,
    /// The blow-up guard tripped after the given step.
    Unstable { step: usize, t: f64 },
}

impl RunOutcome {
    pub fn is_stable(&self) -> bool {
        matches!(self, RunOutcome::Completed)
    }
}

/// Classical fourth-order Runge-Kutta loop over coefficient matrices.
///
/// The right-hand side must be autonomous.  After every step the largest
/// coefficient magnitude is compared against
/// `GUARD_FACTOR * (initial magnitude + 1)`; exceeding it, or producing a
/// non-finite value, ends the run with [`RunOutcome::Unstable`].
pub fn rk4_advance(
    state: &mut SolutionState,
    dt: f64,
    steps: usize,
    rhs: &mut RhsFn<'_>,
    mut on_step: Option<&mut StepFn<'_>>,
) -> Result<RunOutcome, SolverError> {
    let n_eq = state.coeffs.len();
    let zeros: Vec<DMatrix<f64>> = state
        .coeffs
        .iter()
        .map(|c| DMatrix::zeros(c.nrows(), c.ncols()))
        .collect();
    let mut k1 = zeros.clone();
    let mut k2 = zeros.clone();
    let mut k3 = zeros.clone();
    let mut k4 = zeros.clone();
    let mut stage = zeros;
    let t0 = state.t;
    let threshold = GUARD_FACTOR * (state.max_abs() + 1.0);
    if let Some(hook) = on_step.as_mut() {
        hook(0, state)?;
    }
    for step in 1..=steps {
        rhs(&state.coeffs, &mut k1)?;
        for e in 0..n_eq {
            stage[e].copy_from(&state.coeffs[e]);
            axpy_mat(&mut stage[e], 0.5 * dt, &k1[e]);
        }
        rhs(&stage, &mut k2)?;
        for e in 0..n_eq {
            stage[e].copy_from(&state.coeffs[e]);
            axpy_mat(&mut stage[e], 0.5 * dt, &k2[e]);
        }
        rhs(&stage, &mut k3)?;
        for e in 0..n_eq {
            stage[e].copy_from(&state.coeffs[e]);
            axpy_mat(&mut stage[e], dt, &k3[e]);
        }
        rhs(&stage, &mut k4)?;
        for e in 0..n_eq {
            let c = &mut state.coeffs[e];
            axpy_mat(c, dt / 6.0, &k1[e]);
            axpy_mat(c, dt / 3.0, &k2[e]);
            axpy_mat(c, dt / 3.0, &k3[e]);
            axpy_mat(c, dt / 6.0, &k4[e]);
        }
        state.t = t0 + step as f64 * dt;
        let magnitude = state.max_abs();
        if !magnitude.is_finite() || magnitude > threshold {
            return Ok(RunOutcome::Unstable { step, t: state.t });
        }
        if let Some(hook) = on_step.as_mut() {
            hook(step, state)?;
        }
    }
    Ok(RunOutcome::Completed)
}

/// Step size and count for a target final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeStep {
    /// Actual step size `t_final / steps`.
    pub dt: f64,
    pub steps: usize,
    /// CFL target the actual step size never exceeds.
    pub target: f64,
}

/// CFL-scaled time step: the target is `β/(2p+1) · h/a`, and the step count
/// is the smallest integer whose uniform step size stays at or below the
/// target while landing exactly on `t_final`.
pub fn time_step_size(t_final: f64, h: f64, speed: f64, p: usize, beta: f64) -> TimeStep {
    let target = beta / (2 * p + 1) as f64 * h / speed;
    let steps = (t_final / target).ceil().max(1.0) as usize;
    TimeStep {
        dt: t_final / steps as f64,
        steps,
        target,
    }
}

/// Evaluate the discrete energy rate two independent ways for the advection
/// law on an affine mesh: through the residual and the norm-defining matrix
/// `J^κ (M + K)` on the left, and through the interface dissipation sum on
/// the right.  For an inner product with the summation-by-parts property
/// the two agree to rounding; their common value is strictly negative under
/// upwinding and zero for a central flux.
pub fn energy_rate_sides(
    scheme: &Scheme,
    state: &SolutionState,
) -> Result<(f64, f64), SolverError> {
    let disc = scheme.disc;
    let advection = match &disc.law {
        Law::Advection(a) => a,
        _ => return Err(SolverError::Requires("the linear advection law")),
    };
    if !disc.mesh.is_affine() {
        return Err(SolverError::Requires("an affine mesh"));
    }
    let ops = &disc.ops;
    let r = scheme.residual(state)?;
    let u = &state.coeffs[0];
    let k_total = disc.n_elements();

    let mpk_r = &ops.m_plus_k * &r[0];
    let mut lhs = 0.0;
    for k in 0..k_total {
        let j = disc.geom.j_vol[(0, k)];
        lhs += 2.0 * j * u.column(k).dot(&mpk_r.column(k));
    }

    let traces: [DMatrix<f64>; 3] = std::array::from_fn(|g| &ops.v_facet[g] * u);
    let a = advection.velocity;
    let mut rhs = 0.0;
    let mut d = vec![0.0_f64; ops.n_facet(0)];
    for k in 0..k_total {
        for g in 0..ReferenceTriangle::N_FACETS {
            let link = &disc.conn.links[k][g];
            let n_fac = ops.n_facet(g);
            for (i, di) in d.iter_mut().enumerate().take(n_fac) {
                *di = traces[g][(i, k)] - traces[link.facet][(link.perm[i], link.elem)];
            }
            let an =
                a[0] * disc.geom.normal[g][0][(0, k)] + a[1] * disc.geom.normal[g][1][(0, k)];
            let mut quad = 0.0;
            for i in 0..n_fac {
                for j in 0..n_fac {
                    quad += d[i] * ops.w_facet[g][(i, j)] * disc.geom.j_fac[g][(j, k)] * d[j];
                }
            }
            rhs -= 0.5 * disc.lambda * an.abs() * quad;
        }
    }
    Ok((lhs, rhs))
}

/// Fused residual for the linear advection law on affine meshes.  The
/// right-hand side is linear in the coefficients, and on an affine element
/// every geometric factor is a per-element constant, so each contribution
/// is a fixed reference matrix (leading `M⁻¹` folded in) times the
/// coefficients with a per-element diagonal scaling.  Elements are grouped
/// into two classes (lower and upper triangles of the split-Cartesian
/// family) so the reference matrices apply as one matrix–matrix product
/// per class; compilation fails (returning `None`) unless the interface
/// layout is uniform within each class.
struct LinearKernel {
    members: [Vec<usize>; 2],
    /// `M⁻¹` times a volume matrix times `V`, per reference direction.
    vol_mat: [DMatrix<f64>; 2],
    /// `M⁻¹` times a facet matrix times the interior trace `V^(γ)`.
    self_mat: [DMatrix<f64>; 3],
    /// `M⁻¹` times a facet matrix times the permuted neighbor trace,
    /// per class.
    nbr_mat: [[DMatrix<f64>; 3]; 2],
    /// Neighbor element index per class member and facet.
    nbr_of: [[Vec<usize>; 3]; 2],
    /// Per-member metric factor of each volume direction, `1/J` folded in.
    vol_diag: [[Vec<f64>; 2]; 2],
    /// Per-member inflow/outflow facet factors, `1/J` folded in.
    self_diag: [[Vec<f64>; 3]; 2],
    nbr_diag: [[Vec<f64>; 3]; 2],
}

impl LinearKernel {
    fn compile(
        disc: &Discretization,
        vol: &[DMatrix<f64>; 2],
        fac: &[DMatrix<f64>; 3],
    ) -> Option<Self> {
        let advection = match &disc.law {
            Law::Advection(a) => a,
            _ => return None,
        };
        if !disc.mesh.is_affine() {
            return None;
        }
        let ops = &disc.ops;
        let geom = &disc.geom;
        let k_total = disc.n_elements();
        if k_total < 2 {
            return None;
        }
        let n_p = ops.n_modes();
        let a = advection.velocity;
        let lambda = disc.lambda;

        let members: [Vec<usize>; 2] = [
            (0..k_total).step_by(2).collect(),
            (1..k_total).step_by(2).collect(),
        ];
        let vol_mat: [DMatrix<f64>; 2] =
            std::array::from_fn(|m| &ops.m_inv * (&vol[m] * &ops.v));
        let self_mat: [DMatrix<f64>; 3] =
            std::array::from_fn(|g| &ops.m_inv * (&fac[g] * &ops.v_facet[g]));

        let mut nbr_mat: Vec<[DMatrix<f64>; 3]> = Vec::with_capacity(2);
        let mut nbr_of: Vec<[Vec<usize>; 3]> = Vec::with_capacity(2);
        let mut vol_diag: Vec<[Vec<f64>; 2]> = Vec::with_capacity(2);
        let mut self_diag: Vec<[Vec<f64>; 3]> = Vec::with_capacity(2);
        let mut nbr_diag: Vec<[Vec<f64>; 3]> = Vec::with_capacity(2);
        for class_members in &members {
            let k0 = class_members[0];
            for &k in class_members {
                for g in 0..ReferenceTriangle::N_FACETS {
                    let link = &disc.conn.links[k][g];
                    let link0 = &disc.conn.links[k0][g];
                    if link.facet != link0.facet || link.perm != link0.perm {
                        return None;
                    }
                }
            }
            // Affine elements have constant geometric factors, so the
            // leading point of each factor table represents the element.
            vol_diag.push(std::array::from_fn(|m| {
                class_members
                    .iter()
                    .map(|&k| {
                        (geom.metric[m][0][(0, k)] * a[0] + geom.metric[m][1][(0, k)] * a[1])
                            / geom.j_vol[(0, k)]
                    })
                    .collect()
            }));
            self_diag.push(std::array::from_fn(|g| {
                class_members
                    .iter()
                    .map(|&k| {
                        let an = a[0] * geom.normal[g][0][(0, k)]
                            + a[1] * geom.normal[g][1][(0, k)];
                        geom.j_fac[g][(0, k)] * 0.5 * (an + lambda * an.abs())
                            / geom.j_vol[(0, k)]
                    })
                    .collect()
            }));
            nbr_diag.push(std::array::from_fn(|g| {
                class_members
                    .iter()
                    .map(|&k| {
                        let an = a[0] * geom.normal[g][0][(0, k)]
                            + a[1] * geom.normal[g][1][(0, k)];
                        geom.j_fac[g][(0, k)] * 0.5 * (an - lambda * an.abs())
                            / geom.j_vol[(0, k)]
                    })
                    .collect()
            }));
            let mut class_nbr: Vec<DMatrix<f64>> = Vec::with_capacity(3);
            let mut class_nbr_of: Vec<Vec<usize>> = Vec::with_capacity(3);
            for (g, fac_g) in fac.iter().enumerate() {
                let link = &disc.conn.links[k0][g];
                let vn = &ops.v_facet[link.facet];
                let mut tv = DMatrix::<f64>::zeros(ops.n_facet(g), n_p);
                for (i, &pi) in link.perm.iter().enumerate() {
                    tv.row_mut(i).copy_from(&vn.row(pi));
                }
                class_nbr.push(&ops.m_inv * (fac_g * &tv));
                class_nbr_of.push(
                    class_members
                        .iter()
                        .map(|&k| disc.conn.links[k][g].elem)
                        .collect(),
                );
            }
            nbr_mat.push(class_nbr.try_into().unwrap());
            nbr_of.push(class_nbr_of.try_into().unwrap());
        }
        Some(Self {
            members,
            vol_mat,
            self_mat,
            nbr_mat: nbr_mat.try_into().unwrap(),
            nbr_of: nbr_of.try_into().unwrap(),
            vol_diag: vol_diag.try_into().unwrap(),
            self_diag: self_diag.try_into().unwrap(),
            nbr_diag: nbr_diag.try_into().unwrap(),
        })
    }

    fn apply(&self, coeffs: &[DMatrix<f64>], out: &mut [DMatrix<f64>], ws: &mut Workspace) {
        let u = &coeffs[0];
        for (members, cu) in self.members.iter().zip(ws.class_u.iter_mut()) {
            for (i, &k) in members.iter().enumerate() {
                cu.column_mut(i).copy_from(&u.column(k));
            }
        }
        for class in 0..2 {
            let members = &self.members[class];
            let mut first = true;
            for (m, vol_m) in self.vol_mat.iter().enumerate() {
                ws.class_s[class].copy_from(&ws.class_u[class]);
                scale_columns(&mut ws.class_s[class], &self.vol_diag[class][m]);
                let beta = if first { 0.0 } else { 1.0 };
                ws.class_r[class].gemm(1.0, vol_m, &ws.class_s[class], beta);
                first = false;
            }
            for (g, self_g) in self.self_mat.iter().enumerate() {
                ws.class_s[class].copy_from(&ws.class_u[class]);
                scale_columns(&mut ws.class_s[class], &self.self_diag[class][g]);
                ws.class_r[class].gemm(1.0, self_g, &ws.class_s[class], 1.0);
            }
            for g in 0..ReferenceTriangle::N_FACETS {
                for (i, &nk) in self.nbr_of[class][g].iter().enumerate() {
                    ws.class_g[class].column_mut(i).copy_from(&u.column(nk));
                }
                scale_columns(&mut ws.class_g[class], &self.nbr_diag[class][g]);
                ws.class_r[class].gemm(1.0, &self.nbr_mat[class][g], &ws.class_g[class], 1.0);
            }
            for (i, &k) in members.iter().enumerate() {
                out[0].column_mut(k).copy_from(&ws.class_r[class].column(i));
            }
        }
    }
}

fn scale_columns(mat: &mut DMatrix<f64>, factors: &[f64]) {
    for (mut col, &s) in mat.column_iter_mut().zip(factors) {
        col *= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{c_plus, InnerProductVariant};
    use crate::physics::{vortex_initial_condition, AdvectionLaw, VortexParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn advection_law() -> Law {
        Law::Advection(AdvectionLaw {
            velocity: [1.0, 1.0],
        })
    }

    fn random_state(disc: &Discretization, rng: &mut ChaCha8Rng, amplitude: f64) -> SolutionState {
        let n_p = disc.ops.n_modes();
        let k_total = disc.n_elements();
        let coeffs = (0..disc.n_equations())
            .map(|_| {
                DMatrix::from_fn(n_p, k_total, |_, _| rng.gen_range(-amplitude..amplitude))
            })
            .collect();
        SolutionState { t: 0.0, coeffs }
    }

    /// Vortex projection plus a small modal perturbation, kept admissible.
    fn perturbed_euler_state(disc: &Discretization, rng: &mut ChaCha8Rng) -> SolutionState {
        let law = match &disc.law {
            Law::Euler(e) => *e,
            _ => unreachable!(),
        };
        let params = VortexParams::subsonic(disc.mesh.len);
        let mut state = init_projection(disc, |x, out| {
            out.copy_from_slice(&vortex_initial_condition(&law, &params, x)?);
            Ok(())
        })
        .expect("vortex projection");
        for c in &mut state.coeffs {
            for v in c.iter_mut() {
                *v += rng.gen_range(-0.01..0.01);
            }
        }
        state
    }

    fn scale_of(r: &[DMatrix<f64>]) -> f64 {
        r.iter().fold(1.0_f64, |acc, m| acc.max(m.amax()))
    }

    fn max_diff(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max)
    }

    #[test]
    fn residual_form_names_round_trip() {
        for form in ResidualForm::ALL {
            assert_eq!(ResidualForm::parse(form.name()), Some(form));
            assert_eq!(format!("{form}"), form.name());
        }
        assert_eq!(ResidualForm::parse("galerkin"), None);
        assert!(ResidualForm::StrongDg.requires_uncorrected());
        assert!(ResidualForm::WeakDg.requires_uncorrected());
        assert!(!ResidualForm::StrongFr.requires_uncorrected());
        assert!(!ResidualForm::WeakFiltered.requires_uncorrected());
        assert!(!ResidualForm::WeakZwanenburg.requires_uncorrected());
    }

    #[test]
    fn dg_forms_reject_corrected_operators() {
        let p = 2;
        let ops = ReferenceOperators::build(
            InnerProductVariant::QuadratureI,
            p,
            c_plus(p).unwrap(),
            None,
        )
        .unwrap();
        let mesh = Mesh::split_cartesian(2, 1.0, 1).unwrap();
        let disc = Discretization::new(ops, mesh, advection_law(), 1.0).unwrap();
        for form in [ResidualForm::StrongDg, ResidualForm::WeakDg] {
            let err = Scheme::new(&disc, form).err().expect("must reject");
            assert!(matches!(
                err,
                SolverError::FormRequiresUncorrected { .. }
            ));
        }
        for form in [
            ResidualForm::StrongFr,
            ResidualForm::WeakFiltered,
            ResidualForm::WeakZwanenburg,
        ] {
            assert!(Scheme::new(&disc, form).is_ok());
        }
    }

    #[test]
    fn time_step_counts_match_hand_calculations() {
        // h = 1/8, |a| = √2, p = 2, β = 2.5e-3: the target step is
        // 2.5e-3/5 · (1/8)/√2 = 4.4194e-5 and 22628 steps cover T = 1.
        let ts = time_step_size(1.0, 0.125, f64::sqrt(2.0), 2, 2.5e-3);
        assert_eq!(ts.steps, 22628);
        assert!((ts.target - 4.419417382415922e-5).abs() < 1e-18);
        assert!(ts.dt <= ts.target);
        assert!((ts.dt * ts.steps as f64 - 1.0).abs() < 1e-15);

        // When the final time is an exact multiple of the target the step
        // size equals the target.
        let ts = time_step_size(1.0, 1.0, 2.0, 2, 2.5);
        assert_eq!(ts.steps, 4);
        assert_eq!(ts.dt, 0.25);
        assert_eq!(ts.dt, ts.target);
    }

    #[test]
    fn rk4_matches_the_stability_polynomial_and_guards_growth() {
        // One step of du/dt = -u from u = 1 must produce the degree-four
        // stability polynomial evaluated at -dt.
        let dt = 0.1;
        let mut state = SolutionState {
            t: 0.0,
            coeffs: vec![DMatrix::from_element(1, 1, 1.0)],
        };
        let mut rhs = |c: &[DMatrix<f64>], out: &mut [DMatrix<f64>]| {
            out[0][(0, 0)] = -c[0][(0, 0)];
            Ok(())
        };
        let mut seen = Vec::new();
        let mut hook = |step: usize, s: &SolutionState| {
            seen.push((step, s.t));
            Ok(())
        };
        let outcome = rk4_advance(&mut state, dt, 1, &mut rhs, Some(&mut hook)).unwrap();
        assert_eq!(outcome, RunOutcome::Completed);
        let expected = 1.0 - dt + dt * dt / 2.0 - dt * dt * dt / 6.0 + dt * dt * dt * dt / 24.0;
        assert!((state.coeffs[0][(0, 0)] - expected).abs() < 1e-15);
        assert_eq!(seen, vec![(0, 0.0), (1, dt)]);

        // Exponential growth must trip the guard long before 200 steps.
        let mut state = SolutionState {
            t: 0.0,
            coeffs: vec![DMatrix::from_element(1, 1, 1.0)],
        };
        let mut rhs = |c: &[DMatrix<f64>], out: &mut [DMatrix<f64>]| {
            out[0][(0, 0)] = 25.0 * c[0][(0, 0)];
            Ok(())
        };
        match rk4_advance(&mut state, 1.0, 200, &mut rhs, None).unwrap() {
            RunOutcome::Unstable { step, .. } => assert!(step < 10, "step {step}"),
            RunOutcome::Completed => panic!("growth must trip the guard"),
        }
    }

    #[test]
    fn constant_states_are_steady_for_every_variant_and_form() {
        // A spatially constant solution has a constant flux, so every form
        // of the residual must vanish to rounding: the volume divergence is
        // exactly zero and the interface flux matches the interior trace.
        let p = 2;
        let mesh = Mesh::split_cartesian(3, 1.0, 1).unwrap();
        for variant in InnerProductVariant::ALL {
            for law in [
                advection_law(),
                Law::Euler(EulerLaw { gamma: 1.4 }),
            ] {
                for c in [0.0, c_plus(p).unwrap()] {
                    let ops = ReferenceOperators::build(variant, p, c, None).unwrap();
                    let disc =
                        Discretization::new(ops, mesh.clone(), law, 1.0).unwrap();
                    let state = init_projection(&disc, |_x, out| {
                        match out.len() {
                            1 => out[0] = 3.7,
                            _ => out.copy_from_slice(&[1.0, 0.3, -0.2, 2.5]),
                        }
                        Ok(())
                    })
                    .unwrap();
                    for form in ResidualForm::ALL {
                        if form.requires_uncorrected() && c != 0.0 {
                            continue;
                        }
                        let scheme = Scheme::new(&disc, form).unwrap();
                        let r = scheme.residual(&state).unwrap();
                        let worst = r.iter().map(|m| m.amax()).fold(0.0, f64::max);
                        assert!(
                            worst < 1e-12,
                            "{variant} {form} c={c}: residual {worst:e}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn strong_and_weak_dg_agree_tightly() {
        let p = 2;
        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureI, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(3, 1.0, 1).unwrap();
        let disc = Discretization::new(ops, mesh, advection_law(), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = random_state(&disc, &mut rng, 1.0);
        let strong = Scheme::new(&disc, ResidualForm::StrongDg)
            .unwrap()
            .residual(&state)
            .unwrap();
        let weak = Scheme::new(&disc, ResidualForm::WeakDg)
            .unwrap()
            .residual(&state)
            .unwrap();
        let diff = max_diff(&strong, &weak) / scale_of(&strong);
        assert!(diff < 1e-12, "strong/weak mismatch {diff:e}");
    }

    #[test]
    fn all_five_forms_agree_for_sbp_inner_products() {
        // With the summation-by-parts property in hand all five forms are
        // algebraically identical maps: the DG pair at c = 0 against the
        // lifted/filtered trio, and the trio among themselves at c = c₊.
        // Curved elements and both laws are covered.
        let cases: [(InnerProductVariant, usize, bool); 2] = [
            (InnerProductVariant::QuadratureI, 2, false),
            (InnerProductVariant::Collocation, 3, true),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (variant, p, euler) in cases {
            let (law, mesh, lambda) = if euler {
                let mesh = Mesh::split_cartesian(2, 10.0, p).unwrap().warped().unwrap();
                (Law::Euler(EulerLaw { gamma: 1.4 }), mesh, 0.0)
            } else {
                (advection_law(), Mesh::split_cartesian(3, 1.0, 1).unwrap(), 1.0)
            };
            for c in [0.0, c_plus(p).unwrap()] {
                let ops = ReferenceOperators::build(variant, p, c, None).unwrap();
                let disc = Discretization::new(ops, mesh.clone(), law, lambda).unwrap();
                let state = if euler {
                    perturbed_euler_state(&disc, &mut rng)
                } else {
                    random_state(&disc, &mut rng, 1.0)
                };
                let forms: Vec<ResidualForm> = ResidualForm::ALL
                    .into_iter()
                    .filter(|f| !(f.requires_uncorrected() && c != 0.0))
                    .collect();
                let residuals: Vec<Vec<DMatrix<f64>>> = forms
                    .iter()
                    .map(|&f| Scheme::new(&disc, f).unwrap().residual(&state).unwrap())
                    .collect();
                let scale = scale_of(&residuals[0]);
                for i in 0..forms.len() {
                    for j in i + 1..forms.len() {
                        let diff = max_diff(&residuals[i], &residuals[j]) / scale;
                        assert!(
                            diff < 1e-11,
                            "{variant} p={p} c={c} {} vs {}: {diff:e}",
                            forms[i],
                            forms[j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn free_stream_is_preserved_on_curved_meshes() {
        // A constant state on a warped mesh with an isoparametric mapping:
        // the metric terms satisfy a discrete divergence identity degree by
        // degree, so the residual vanishes even though the Jacobian varies.
        for (variant, p) in [
            (InnerProductVariant::QuadratureI, 2),
            (InnerProductVariant::QuadratureI, 4),
            (InnerProductVariant::Collocation, 3),
        ] {
            let mesh = Mesh::split_cartesian(4, 1.0, p).unwrap().warped().unwrap();
            for law in [
                advection_law(),
                Law::Euler(EulerLaw { gamma: 1.4 }),
            ] {
                for c in [0.0, c_plus(p).unwrap()] {
                    let ops = ReferenceOperators::build(variant, p, c, None).unwrap();
                    let disc =
                        Discretization::new(ops, mesh.clone(), law, 1.0).unwrap();
                    let state = init_projection(&disc, |_x, out| {
                        match out.len() {
                            1 => out[0] = 1.0,
                            _ => out.copy_from_slice(&[1.0, 0.28, 0.28, 2.6]),
                        }
                        Ok(())
                    })
                    .unwrap();
                    for form in ResidualForm::ALL {
                        if form.requires_uncorrected() && c != 0.0 {
                            continue;
                        }
                        let scheme = Scheme::new(&disc, form).unwrap();
                        let r = scheme.residual(&state).unwrap();
                        let worst = r.iter().map(|m| m.amax()).fold(0.0, f64::max);
                        assert!(
                            worst < 1e-11,
                            "{variant} p={p} {form} c={c}: free-stream residual {worst:e}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn strong_forms_preserve_free_stream_without_sbp() {
        // The strong forms cancel the facet terms pointwise, so they keep a
        // free stream even when the facet rules break summation by parts.
        let p = 3;
        let mesh = Mesh::split_cartesian(4, 1.0, p).unwrap().warped().unwrap();
        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureII, p, 0.0, None).unwrap();
        let disc = Discretization::new(ops, mesh, advection_law(), 1.0).unwrap();
        let state = init_projection(&disc, |_x, out| {
            out[0] = 1.0;
            Ok(())
        })
        .unwrap();
        for form in [ResidualForm::StrongDg, ResidualForm::StrongFr] {
            let r = Scheme::new(&disc, form).unwrap().residual(&state).unwrap();
            let worst = r.iter().map(|m| m.amax()).fold(0.0, f64::max);
            assert!(worst < 1e-11, "{form}: {worst:e}");
        }
    }

    #[test]
    fn filter_identity_holds_on_curved_elements() {
        // (M + K)(P J^κ V) = M^κ (F^κ)⁻¹ with F^κ the conjugated filter,
        // and P J^κ V = M⁻¹ M^κ; verified on warped isoparametric elements.
        let p = 3;
        let variant = InnerProductVariant::QuadratureI;
        let ops = ReferenceOperators::build(variant, p, c_plus(p).unwrap(), None).unwrap();
        let mesh = Mesh::split_cartesian(4, 1.0, p).unwrap().warped().unwrap();
        let geom = geometric_factors(&mesh, &ops.volume_points, &ops.facet_points).unwrap();
        let n_p = ops.n_modes();
        for k in [0, 7, 19] {
            let mut jv = ops.v.clone();
            for i in 0..ops.n_volume() {
                let j = geom.j_vol[(i, k)];
                for q in 0..n_p {
                    jv[(i, q)] *= j;
                }
            }
            let pjv = &ops.proj * &jv;
            let m_kappa = ops.v.transpose() * (&ops.w * &jv);
            let alt = &ops.m_inv * &m_kappa;
            assert!((&pjv - &alt).norm() / pjv.norm() < 1e-12);

            let pjv_inv = pjv.clone().lu().try_inverse().expect("invertible");
            let f_kappa_inv =
                &pjv_inv * ((DMatrix::identity(n_p, n_p) + &ops.m_inv * &ops.k) * &pjv);
            let left = &ops.m_plus_k * &pjv;
            let right = &m_kappa * &f_kappa_inv;
            let diff = (&left - &right).norm() / left.norm();
            assert!(diff < 1e-11, "element {k}: {diff:e}");
        }
    }

    #[test]
    fn curved_collocation_mass_reduces_to_weighted_gram() {
        // With the identity Vandermonde the metric-weighted mass matrix is
        // the (dense, asymmetric) product W J^κ, which the LU-based leading
        // inverse must handle.
        let p = 2;
        let ops =
            ReferenceOperators::build(InnerProductVariant::Collocation, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(4, 1.0, 2).unwrap().warped().unwrap();
        let geom = geometric_factors(&mesh, &ops.volume_points, &ops.facet_points).unwrap();
        let k = 5;
        let n = ops.n_volume();
        let mut wj = ops.w.clone();
        for j in 0..n {
            let scale = geom.j_vol[(j, k)];
            for i in 0..n {
                wj[(i, j)] *= scale;
            }
        }
        let mut jv = ops.v.clone();
        for i in 0..n {
            let j = geom.j_vol[(i, k)];
            for q in 0..ops.n_modes() {
                jv[(i, q)] *= j;
            }
        }
        let m_kappa = ops.v.transpose() * (&ops.w * &jv);
        assert!((&m_kappa - &wj).norm() / wj.norm() < 1e-13);
        let asym = (&m_kappa - m_kappa.transpose()).norm() / m_kappa.norm();
        assert!(asym > 1e-6, "expected a visibly asymmetric product, got {asym:e}");
        let disc = Discretization::new(
            ReferenceOperators::build(InnerProductVariant::Collocation, p, 0.0, None).unwrap(),
            mesh,
            advection_law(),
            1.0,
        )
        .unwrap();
        // The projection of a constant through the asymmetric mass matrix
        // must still recover the constant exactly.
        let state = init_projection(&disc, |_x, out| {
            out[0] = 2.0;
            Ok(())
        })
        .unwrap();
        let nodal = &disc.ops.v * &state.coeffs[0];
        let worst = nodal.iter().map(|v| (v - 2.0).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "constant projection error {worst:e}");
    }

    #[test]
    fn projection_reproduces_polynomials_and_audits_admissibility() {
        let p = 2;
        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureI, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(3, 1.0, 1).unwrap();
        let disc = Discretization::new(ops, mesh, advection_law(), 1.0).unwrap();
        let state = init_projection(&disc, |x, out| {
            out[0] = 3.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
            Ok(())
        })
        .unwrap();
        let nodal = &disc.ops.v * &state.coeffs[0];
        for k in 0..disc.n_elements() {
            for i in 0..disc.ops.n_volume() {
                let x = [disc.geom.xy_vol[0][(i, k)], disc.geom.xy_vol[1][(i, k)]];
                let exact = 3.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
                assert!((nodal[(i, k)] - exact).abs() < 1e-12);
            }
        }

        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureI, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(3, 1.0, 1).unwrap();
        let disc =
            Discretization::new(ops, mesh, Law::Euler(EulerLaw { gamma: 1.4 }), 0.0).unwrap();
        let err = init_projection(&disc, |x, out| {
            // Density dips negative near the domain center: the projected
            // state is inadmissible and must be rejected.
            let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
            out.copy_from_slice(&[0.05 - (-8.0 * r2).exp().min(1.0) * 0.04 - r2, 0.0, 0.0, 1.0]);
            Ok(())
        });
        assert!(matches!(err, Err(SolverError::Physics { .. })));
    }

    #[test]
    fn energy_rate_matches_interface_dissipation() {
        // d/dt Σ_κ J^κ uᵀ(M+K)u computed through the residual must equal
        // the interface dissipation sum: zero for the central flux, and a
        // strictly negative jump functional under upwinding.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for (variant, p, c, form) in [
            (InnerProductVariant::QuadratureI, 2, 0.0, ResidualForm::WeakDg),
            (
                InnerProductVariant::QuadratureI,
                3,
                c_plus(3).unwrap(),
                ResidualForm::StrongFr,
            ),
            (
                InnerProductVariant::Collocation,
                2,
                c_plus(2).unwrap(),
                ResidualForm::WeakFiltered,
            ),
        ] {
            for lambda in [0.0, 1.0] {
                let ops = ReferenceOperators::build(variant, p, c, None).unwrap();
                let mesh = Mesh::split_cartesian(4, 1.0, 1).unwrap();
                let disc = Discretization::new(ops, mesh, advection_law(), lambda).unwrap();
                let scheme = Scheme::new(&disc, form).unwrap();
                let state = random_state(&disc, &mut rng, 1.0);
                let (lhs, rhs) = energy_rate_sides(&scheme, &state).unwrap();
                let tol = 1e-10 * (1.0 + lhs.abs());
                assert!(
                    (lhs - rhs).abs() < tol,
                    "{variant} p={p} {form} λ={lambda}: {lhs:e} vs {rhs:e}"
                );
                if lambda == 0.0 {
                    assert!(lhs.abs() < 1e-10, "central flux must conserve: {lhs:e}");
                } else {
                    assert!(lhs < 0.0, "upwinding must dissipate: {lhs:e}");
                }
            }
        }
    }

    #[test]
    fn fused_kernel_matches_the_general_residual() {
        let p = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for (c, form, lambda) in [
            (0.0, ResidualForm::StrongDg, 0.0),
            (c_plus(p).unwrap(), ResidualForm::WeakFiltered, 1.0),
        ] {
            // A vertex-displaced (degree-1 warped) mesh is still affine but
            // has genuinely element-dependent geometry, exercising the
            // per-element factors of the kernel.
            for warp in [false, true] {
                let ops = ReferenceOperators::build(InnerProductVariant::QuadratureI, p, c, None)
                    .unwrap();
                let mesh = Mesh::split_cartesian(8, 1.0, 1).unwrap();
                let mesh = if warp { mesh.warped().unwrap() } else { mesh };
                let disc = Discretization::new(ops, mesh, advection_law(), lambda).unwrap();
                let scheme = Scheme::new(&disc, form).unwrap();
                assert!(scheme.has_fused_kernel(), "kernel must compile here");
                let state = random_state(&disc, &mut rng, 1.0);
                let general = scheme.residual(&state).unwrap();
                let mut fused: Vec<DMatrix<f64>> = general
                    .iter()
                    .map(|m| DMatrix::zeros(m.nrows(), m.ncols()))
                    .collect();
                let mut ws = scheme.workspace();
                scheme
                    .kernel
                    .as_ref()
                    .unwrap()
                    .apply(&state.coeffs, &mut fused, &mut ws);
                let diff = max_diff(&general, &fused) / scale_of(&general);
                assert!(
                    diff < 1e-13,
                    "{form} λ={lambda} warp={warp}: fused vs general {diff:e}"
                );
            }
        }

        // Curved meshes and the Euler law must fall back to the general
        // pipeline.
        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureI, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(2, 1.0, 2).unwrap().warped().unwrap();
        let disc = Discretization::new(ops, mesh, advection_law(), 1.0).unwrap();
        assert!(!Scheme::new(&disc, ResidualForm::WeakDg)
            .unwrap()
            .has_fused_kernel());
        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureI, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(2, 10.0, 1).unwrap();
        let disc =
            Discretization::new(ops, mesh, Law::Euler(EulerLaw { gamma: 1.4 }), 0.0).unwrap();
        assert!(!Scheme::new(&disc, ResidualForm::WeakDg)
            .unwrap()
            .has_fused_kernel());
    }

    #[test]
    fn run_reproduces_the_general_pipeline_and_is_deterministic() {
        // A short advection run through the fused kernel against the same
        // run forced through the general pipeline.
        let p = 2;
        let ops =
            ReferenceOperators::build(InnerProductVariant::QuadratureI, p, 0.0, None).unwrap();
        let mesh = Mesh::split_cartesian(4, 1.0, 1).unwrap();
        let disc = Discretization::new(ops, mesh, advection_law(), 1.0).unwrap();
        let scheme = Scheme::new(&disc, ResidualForm::WeakDg).unwrap();
        let ic = |x: [f64; 2], out: &mut [f64]| {
            out[0] = (2.0 * std::f64::consts::PI * x[0]).sin()
                * (2.0 * std::f64::consts::PI * x[1]).sin();
            Ok(())
        };
        let state0 = init_projection(&disc, ic).unwrap();
        let dt = 1e-3;
        let steps = 50;

        let mut fused = state0.clone();
        assert!(scheme.run(&mut fused, dt, steps, None).unwrap().is_stable());

        let mut general = state0.clone();
        let mut ws = scheme.workspace();
        let mut rhs = |c: &[DMatrix<f64>], out: &mut [DMatrix<f64>]| {
            scheme.residual_into(c, out, &mut ws)
        };
        assert!(rk4_advance(&mut general, dt, steps, &mut rhs, None)
            .unwrap()
            .is_stable());
        let diff = max_diff(&fused.coeffs, &general.coeffs);
        assert!(diff < 1e-11, "fused vs general after {steps} steps: {diff:e}");

        // Bitwise determinism of the fused path.
        let mut again = state0.clone();
        scheme.run(&mut again, dt, steps, None).unwrap();
        assert_eq!(fused.coeffs[0], again.coeffs[0]);
        assert_eq!(fused.t, again.t);
    }

    #[test]
    fn facet_lobatto_rules_destabilize_the_central_flux() {
        // Spectra of the assembled global advection operator: with the
        // summation-by-parts property and a central flux the spectrum lies
        // on the imaginary axis (to rounding) and upwinding pushes it into
        // the left half plane, while the deficient facet rules produce
        // eigenvalues with strictly positive real part.
        let p = 2;
        let mesh = Mesh::split_cartesian(3, 1.0, 1).unwrap();
        let global = |variant: InnerProductVariant, lambda: f64| -> DMatrix<f64> {
            let ops = ReferenceOperators::build(variant, p, 0.0, None).unwrap();
            let disc = Discretization::new(ops, mesh.clone(), advection_law(), lambda).unwrap();
            let scheme = Scheme::new(&disc, ResidualForm::WeakDg).unwrap();
            let n_p = disc.ops.n_modes();
            let k_total = disc.n_elements();
            let dim = n_p * k_total;
            let mut op = DMatrix::zeros(dim, dim);
            let mut ws = scheme.workspace();
            let mut basis = vec![DMatrix::zeros(n_p, k_total)];
            let mut out = vec![DMatrix::zeros(n_p, k_total)];
            for col in 0..dim {
                basis[0].fill(0.0);
                basis[0][(col % n_p, col / n_p)] = 1.0;
                scheme.residual_into(&basis, &mut out, &mut ws).unwrap();
                for k in 0..k_total {
                    for i in 0..n_p {
                        op[(k * n_p + i, col)] = out[0][(i, k)];
                    }
                }
            }
            op
        };
        let spectral_abscissa = |op: DMatrix<f64>| -> f64 {
            op.complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max)
        };

        let sbp_central = spectral_abscissa(global(InnerProductVariant::QuadratureI, 0.0));
        assert!(
            sbp_central.abs() < 1e-8,
            "central SBP spectrum must hug the imaginary axis, abscissa {sbp_central:e}"
        );
        let sbp_upwind = spectral_abscissa(global(InnerProductVariant::QuadratureI, 1.0));
        assert!(sbp_upwind < 1e-8, "upwinding must not destabilize: {sbp_upwind:e}");
        let lobatto_central = spectral_abscissa(global(InnerProductVariant::QuadratureII, 0.0));
        assert!(
            lobatto_central > 0.1,
            "deficient facet rules must yield growing modes, abscissa {lobatto_central:e}"
        );
    }
}
