//! Discontinuous Galerkin (DG) and flux reconstruction (FR) methods on
//! unstructured triangular meshes, built around discrete operators that
//! satisfy a summation-by-parts (SBP) property.
//!
//! The crate is organised bottom-up:
//!
//! - [`refelem`]: the reference triangle — orthonormal modal basis,
//!   quadrature rules, nodal point sets, Vandermonde matrices.
//! - [`operators`]: discrete inner products, mass/projection/differentiation
//!   matrices, VCJH correction operators, lifting and filter matrices, and
//!   the SBP/divergence-theorem verifications.
//! - [`mesh`]: periodic split-Cartesian triangular meshes of the unit-square
//!   family, smooth coordinate warping, curvilinear geometric factors and
//!   facet connectivity.
//! - [`physics`]: conservation laws (linear advection, compressible Euler),
//!   numerical fluxes (upwind/central blend, Roe) and initial conditions.
//! - [`solver`]: semi-discrete residuals in five algebraically related
//!   formulations, initial projection and explicit RK4 time marching.
//! - [`diagnostics`]: strong/weak equivalence measures, conservation and
//!   energy functionals, and CSV table emission.
//! - [`config`] / [`runner`]: plain-text run configuration and the
//!   experiment driver used by the `tridg` binary.

pub mod acceptance;
pub mod config;
pub mod diagnostics;
pub mod mesh;
pub mod operators;
pub mod physics;
pub mod refelem;
pub mod runner;
pub mod solver;
