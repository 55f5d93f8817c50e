//! Scratch probe: growth of the facet-Lobatto (QuadratureII) central-flux
//! advection runs in the weak residual forms, which are not algebraically
//! equivalent to the strong forms for this inner product.

use tridg::mesh::Mesh;
use tridg::operators::{c_plus, InnerProductVariant, ReferenceOperators};
use tridg::physics::{AdvectionLaw, Law};
use tridg::solver::{
    init_projection, time_step_size, Discretization, ResidualForm, RunOutcome, Scheme,
    SolutionState,
};

fn max_abs(state: &SolutionState) -> f64 {
    state
        .coeffs
        .iter()
        .flat_map(|m| m.iter())
        .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

fn main() {
    let m = 8_usize;
    let length = 1.0;
    let beta = 2.5e-3;
    for &p in &[2_usize, 3, 4] {
        for &(c, form) in &[
            (0.0, ResidualForm::WeakDg),
            (c_plus(p).unwrap(), ResidualForm::WeakZwanenburg),
            (c_plus(p).unwrap(), ResidualForm::WeakFiltered),
        ] {
            let ops =
                ReferenceOperators::build(InnerProductVariant::QuadratureII, p, c, None).unwrap();
            let mesh = Mesh::split_cartesian(m, length, 1).unwrap();
            let law = Law::Advection(AdvectionLaw { velocity: [1.0, 1.0] });
            let disc = Discretization::new(ops, mesh, law, 0.0).unwrap();
            let state0 = init_projection(&disc, |x, out| {
                let arg = 2.0 * std::f64::consts::PI / length;
                out[0] = (arg * x[0]).sin() * (arg * x[1]).sin();
                Ok(())
            })
            .unwrap();
            let step = time_step_size(1.0, length / m as f64, 2.0_f64.sqrt(), p, beta);
            let scheme = Scheme::new(&disc, form).unwrap();
            let mut state = state0.clone();
            print!("p={p} c={c:.1e} {form}: init={:.3e}", max_abs(&state0));
            let mut prev = max_abs(&state0);
            let mut tripped = false;
            for period in 1..=5 {
                match scheme.run(&mut state, step.dt, step.steps, None).unwrap() {
                    RunOutcome::Completed => {
                        let now = max_abs(&state);
                        print!(
                            " [T={period} max={now:.2e} g={:.2}]",
                            (now / prev).ln()
                        );
                        prev = now;
                    }
                    RunOutcome::Unstable { step: s, t } => {
                        println!(
                            " TRIPPED in period {period} at step {s}, local t={t:.4} (max={:.2e})",
                            max_abs(&state)
                        );
                        tripped = true;
                        break;
                    }
                }
            }
            if !tripped {
                println!(" no trip in 5 periods");
            }
        }
    }
}
