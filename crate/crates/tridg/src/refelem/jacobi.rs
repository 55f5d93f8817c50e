//! Jacobi polynomials `P_n^{(α,β)}` via the three-term recurrence.
//!
//! The classical normalisation is used throughout: `P_n^{(α,β)}(1) =
//! binomial(n+α, n)`.  Orthonormal variants are produced where needed by
//! explicit scaling in the basis construction.

/// Evaluate the Jacobi polynomial `P_n^{(α,β)}` at `x`.
///
/// `alpha` and `beta` must be > -1; this crate only uses small non-negative
/// integer-valued parameters, for which the recurrence is well conditioned.
pub fn jacobi_eval(n: usize, alpha: f64, beta: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut pm1 = 1.0;
    let mut p = 0.5 * (alpha + beta + 2.0) * x + 0.5 * (alpha - beta);
    for k in 2..=n {
        let k = k as f64;
        let a2b2 = (alpha + beta) * (alpha - beta);
        let c = 2.0 * k + alpha + beta;
        // 2k(k+α+β)(c-2) P_k = (c-1)[c(c-2)x + α²-β²] P_{k-1}
        //                      - 2(k+α-1)(k+β-1)c P_{k-2}
        let num1 = (c - 1.0) * (c * (c - 2.0) * x + a2b2);
        let num2 = 2.0 * (k + alpha - 1.0) * (k + beta - 1.0) * c;
        let den = 2.0 * k * (k + alpha + beta) * (c - 2.0);
        let next = (num1 * p - num2 * pm1) / den;
        pm1 = p;
        p = next;
    }
    p
}

/// Evaluate the derivative of `P_n^{(α,β)}` at `x`.
///
/// Uses the identity `d/dx P_n^{(α,β)} = (n+α+β+1)/2 · P_{n-1}^{(α+1,β+1)}`.
pub fn jacobi_deriv(n: usize, alpha: f64, beta: f64, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    0.5 * (n as f64 + alpha + beta + 1.0) * jacobi_eval(n - 1, alpha + 1.0, beta + 1.0, x)
}
