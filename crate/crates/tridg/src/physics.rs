//! Conservation laws: linear advection and the 2D compressible Euler
//! equations.
//!
//! Both laws expose their analytic flux components and an interface
//! (numerical) flux.  Advection uses the blended central/upwind flux with
//! parameter `λ ∈ [0, 1]`; Euler uses Roe's approximate Riemann solver with
//! standard Roe averages of velocity and total enthalpy, dissipation built
//! from the acoustic and contact wave strengths in the facet-normal frame,
//! and no entropy fix (the flows of interest here are smooth and subsonic).
//!
//! Euler states are the conserved variables `(ρ, ρv₁, ρv₂, e)` with ideal
//! gas pressure `p = (r − 1)(e − ½ρ‖v‖²)` for specific heat ratio `r`.
//! Admissibility (`ρ > 0` and `p > 0`) is checked wherever a state is
//! consumed, never enforced by limiting.

use thiserror::Error;

/// Errors raised by flux evaluation and initial conditions.
#[derive(Debug, Error)]
pub enum PhysicsError {
    /// A state with non-positive density or pressure was encountered.
    #[error("inadmissible state: {quantity} = {value:.6e}")]
    Inadmissible { quantity: &'static str, value: f64 },
    /// Vortex parameters drive the temperature non-positive somewhere.
    #[error("vortex too strong: minimum temperature {min_temp:.6e} is not positive")]
    VortexTooStrong { min_temp: f64 },
}

/// Linear advection `∂u/∂t + ∇·(a u) = 0` with constant velocity `a`.
#[derive(Debug, Clone, Copy)]
pub struct AdvectionLaw {
    pub velocity: [f64; 2],
}

impl AdvectionLaw {
    /// Flux components `f⁽ᵐ⁾ = a_m u`.
    pub fn flux(&self, u: f64) -> [f64; 2] {
        [self.velocity[0] * u, self.velocity[1] * u]
    }
}

/// Blended central/upwind interface flux for linear advection:
///
/// `f* = ½ (a·n)(u⁻ + u⁺) − (λ/2) |a·n| (u⁺ − u⁻)`,
///
/// central for `λ = 0`, fully upwind for `λ = 1`.
pub fn advection_numerical_flux(
    velocity: [f64; 2],
    u_minus: f64,
    u_plus: f64,
    n: [f64; 2],
    lambda: f64,
) -> f64 {
    let an = velocity[0] * n[0] + velocity[1] * n[1];
    0.5 * an * (u_minus + u_plus) - 0.5 * lambda * an.abs() * (u_plus - u_minus)
}

/// 2D compressible Euler equations for an ideal gas with specific heat
/// ratio `gamma`.  Conserved state: `(ρ, ρv₁, ρv₂, e)`.
#[derive(Debug, Clone, Copy)]
pub struct EulerLaw {
    pub gamma: f64,
}

impl EulerLaw {
    pub const N_EQUATIONS: usize = 4;

    /// Table labels of the conserved quantities, in state-vector order.
    pub const EQUATION_LABELS: [&'static str; 4] = ["rho", "rho_v1", "rho_v2", "energy"];

    /// Pressure `p = (r − 1)(e − ½ ρ ‖v‖²)`; does not check admissibility.
    pub fn pressure(&self, u: &[f64]) -> f64 {
        let kinetic = 0.5 * (u[1] * u[1] + u[2] * u[2]) / u[0];
        (self.gamma - 1.0) * (u[3] - kinetic)
    }

    /// Check `ρ > 0` and `p > 0`.
    pub fn check_admissible(&self, u: &[f64]) -> Result<(), PhysicsError> {
        if u[0] <= 0.0 || !u[0].is_finite() {
            return Err(PhysicsError::Inadmissible {
                quantity: "density",
                value: u[0],
            });
        }
        let p = self.pressure(u);
        if p <= 0.0 || !p.is_finite() {
            return Err(PhysicsError::Inadmissible {
                quantity: "pressure",
                value: p,
            });
        }
        Ok(())
    }

    /// Both flux components at an admissible state; `f[e][m]` is the `m`-th
    /// component of the flux of equation `e`.
    pub fn flux(&self, u: &[f64]) -> Result<[[f64; 2]; 4], PhysicsError> {
        self.check_admissible(u)?;
        let v1 = u[1] / u[0];
        let v2 = u[2] / u[0];
        let p = self.pressure(u);
        Ok([
            [u[1], u[2]],
            [u[1] * v1 + p, u[1] * v2],
            [u[2] * v1, u[2] * v2 + p],
            [v1 * (u[3] + p), v2 * (u[3] + p)],
        ])
    }
}

/// Roe's approximate Riemann solver for the Euler equations.
///
/// Works in the frame aligned with the unit normal `n`: states are rotated
/// to normal/tangential momentum, the central normal flux is corrected by
/// `½ Σᵢ |λᵢ| αᵢ rᵢ` over the four characteristic fields of the Roe-averaged
/// state, and the momentum components are rotated back.  No entropy fix is
/// applied.
pub fn roe_flux(
    law: &EulerLaw,
    u_minus: &[f64],
    u_plus: &[f64],
    n: [f64; 2],
) -> Result<[f64; 4], PhysicsError> {
    law.check_admissible(u_minus)?;
    law.check_admissible(u_plus)?;
    let gamma = law.gamma;
    let t = [-n[1], n[0]];
    // Rotated states (ρ, ρ v_n, ρ v_t, e) and their primitive quantities.
    let rot = |u: &[f64]| {
        [
            u[0],
            u[1] * n[0] + u[2] * n[1],
            u[1] * t[0] + u[2] * t[1],
            u[3],
        ]
    };
    let ul = rot(u_minus);
    let ur = rot(u_plus);
    let primitives = |u: &[f64; 4]| {
        let vn = u[1] / u[0];
        let vt = u[2] / u[0];
        let p = (gamma - 1.0) * (u[3] - 0.5 * (u[1] * u[1] + u[2] * u[2]) / u[0]);
        let h = (u[3] + p) / u[0];
        (vn, vt, p, h)
    };
    let (vnl, vtl, pl, hl) = primitives(&ul);
    let (vnr, vtr, pr, hr) = primitives(&ur);
    // Normal flux in the rotated frame.
    let normal_flux = |u: &[f64; 4], vn: f64, p: f64| {
        [
            u[1],
            u[1] * vn + p,
            u[2] * vn,
            vn * (u[3] + p),
        ]
    };
    let fl = normal_flux(&ul, vnl, pl);
    let fr = normal_flux(&ur, vnr, pr);
    // Roe averages.
    let ratio = (ur[0] / ul[0]).sqrt();
    let rho_avg = (ul[0] * ur[0]).sqrt();
    let vn_avg = (vnl + ratio * vnr) / (1.0 + ratio);
    let vt_avg = (vtl + ratio * vtr) / (1.0 + ratio);
    let h_avg = (hl + ratio * hr) / (1.0 + ratio);
    let a2 = (gamma - 1.0) * (h_avg - 0.5 * (vn_avg * vn_avg + vt_avg * vt_avg));
    if a2 <= 0.0 || !a2.is_finite() {
        return Err(PhysicsError::Inadmissible {
            quantity: "Roe sound speed squared",
            value: a2,
        });
    }
    let a = a2.sqrt();
    // Wave strengths.
    let d_rho = ur[0] - ul[0];
    let d_p = pr - pl;
    let d_vn = vnr - vnl;
    let d_vt = vtr - vtl;
    let alpha = [
        (d_p - rho_avg * a * d_vn) / (2.0 * a2),
        d_rho - d_p / a2,
        (d_p + rho_avg * a * d_vn) / (2.0 * a2),
        rho_avg * d_vt,
    ];
    let lambda = [vn_avg - a, vn_avg, vn_avg + a, vn_avg];
    // Right eigenvectors in the rotated conservative variables.
    let half_q2 = 0.5 * (vn_avg * vn_avg + vt_avg * vt_avg);
    let r_vec = [
        [1.0, vn_avg - a, vt_avg, h_avg - vn_avg * a],
        [1.0, vn_avg, vt_avg, half_q2],
        [1.0, vn_avg + a, vt_avg, h_avg + vn_avg * a],
        [0.0, 0.0, 1.0, vt_avg],
    ];
    let mut f_rot = [0.0; 4];
    for e in 0..4 {
        let mut dissipation = 0.0;
        for w in 0..4 {
            dissipation += lambda[w].abs() * alpha[w] * r_vec[w][e];
        }
        f_rot[e] = 0.5 * (fl[e] + fr[e]) - 0.5 * dissipation;
    }
    // Rotate the momentum components back.
    Ok([
        f_rot[0],
        f_rot[1] * n[0] + f_rot[2] * t[0],
        f_rot[1] * n[1] + f_rot[2] * t[1],
        f_rot[3],
    ])
}

/// Parameters of the isentropic vortex initial condition on a periodic
/// square of side `length`.
#[derive(Debug, Clone, Copy)]
pub struct VortexParams {
    /// Background Mach number `Ma_∞`.
    pub mach: f64,
    /// Background flow direction `θ`.
    pub theta: f64,
    /// Vortex strength `ε`.
    pub epsilon: f64,
    /// Vortex centre `x⁰`.
    pub center: [f64; 2],
    /// Domain side length `L`.
    pub length: f64,
}

impl VortexParams {
    /// The subsonic configuration used throughout: `Ma_∞ = 0.4`, diagonal
    /// background flow, `ε = 5√2 e^{1/2} / (4π)`, vortex centred in the
    /// square.
    pub fn subsonic(length: f64) -> Self {
        VortexParams {
            mach: 0.4,
            theta: std::f64::consts::FRAC_PI_4,
            epsilon: 5.0 * 2f64.sqrt() * 0.5f64.exp() / (4.0 * std::f64::consts::PI),
            center: [0.5 * length, 0.5 * length],
            length,
        }
    }

    /// Background velocity magnitude, the characteristic speed for time
    /// step selection.
    pub fn background_speed(&self) -> f64 {
        self.mach
    }
}

/// Isentropic vortex initial state at `x`:
///
/// velocity `v⁰ = Ma_∞ ([cos θ, sin θ] + ε exp(1 − ‖x−x⁰‖²) [−(x₂−x₂⁰), x₁−x₁⁰])`,
/// temperature `π⁰ = 1 − ½ (r−1) ε² Ma_∞² exp(1 − ‖x−x⁰‖²)`, density
/// `ρ = (π⁰)^{1/(r−1)}`, and energy from the isentropic pressure
/// `p = (π⁰)^{r/(r−1)}`.
pub fn vortex_initial_condition(
    law: &EulerLaw,
    params: &VortexParams,
    x: [f64; 2],
) -> Result<[f64; 4], PhysicsError> {
    let gamma = law.gamma;
    let dx = [x[0] - params.center[0], x[1] - params.center[1]];
    let g = (1.0 - dx[0] * dx[0] - dx[1] * dx[1]).exp();
    let v = [
        params.mach * (params.theta.cos() - params.epsilon * g * dx[1]),
        params.mach * (params.theta.sin() + params.epsilon * g * dx[0]),
    ];
    let temp = 1.0
        - 0.5 * (gamma - 1.0) * params.epsilon * params.epsilon * params.mach * params.mach * g;
    if temp <= 0.0 {
        return Err(PhysicsError::VortexTooStrong { min_temp: temp });
    }
    let rho = temp.powf(1.0 / (gamma - 1.0));
    let pressure = temp.powf(gamma / (gamma - 1.0));
    let energy = pressure / (gamma - 1.0) + 0.5 * rho * (v[0] * v[0] + v[1] * v[1]);
    Ok([rho, rho * v[0], rho * v[1], energy])
}

/// A conservation law together with everything the solver needs to
/// dispatch on it: equation count, analytic flux, and interface flux.
#[derive(Debug, Clone, Copy)]
pub enum Law {
    Advection(AdvectionLaw),
    Euler(EulerLaw),
}

impl Law {
    pub fn n_equations(&self) -> usize {
        match self {
            Law::Advection(_) => 1,
            Law::Euler(_) => EulerLaw::N_EQUATIONS,
        }
    }

    /// Analytic flux components; `u` and `f` have `n_equations` entries.
    pub fn flux(&self, u: &[f64], f: &mut [[f64; 2]]) -> Result<(), PhysicsError> {
        match self {
            Law::Advection(law) => {
                f[0] = law.flux(u[0]);
                Ok(())
            }
            Law::Euler(law) => {
                f.copy_from_slice(&law.flux(u)?);
                Ok(())
            }
        }
    }

    /// Interface flux between the interior trace `u⁻` and exterior trace
    /// `u⁺` across unit normal `n`; `lambda` is the advective upwinding
    /// parameter and is ignored by the Euler law.
    pub fn numerical_flux(
        &self,
        u_minus: &[f64],
        u_plus: &[f64],
        n: [f64; 2],
        lambda: f64,
        out: &mut [f64],
    ) -> Result<(), PhysicsError> {
        match self {
            Law::Advection(law) => {
                out[0] = advection_numerical_flux(law.velocity, u_minus[0], u_plus[0], n, lambda);
                Ok(())
            }
            Law::Euler(law) => {
                out.copy_from_slice(&roe_flux(law, u_minus, u_plus, n)?);
                Ok(())
            }
        }
    }
}
