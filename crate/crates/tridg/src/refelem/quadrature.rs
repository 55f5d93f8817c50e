//! Quadrature rules on the interval and the reference triangle.
//!
//! Interval rules are computed at run time: Gauss–Legendre and
//! Gauss–Lobatto nodes by Newton iteration from Chebyshev initial guesses
//! (100-iteration budget, residual target 1e-15), Gauss–Jacobi nodes by the
//! Golub–Welsch symmetric-tridiagonal eigenvalue problem.  The triangle
//! volume rule is a collapsed-coordinate (Duffy) tensor product of a
//! Gauss–Legendre rule with a Gauss–Jacobi(1,0) rule, which yields strictly
//! positive weights and exactness to the requested total degree.

use std::path::Path;

use nalgebra::DMatrix;

use super::jacobi::{jacobi_deriv, jacobi_eval};
use super::{RefElemError, ReferenceTriangle, Rule1d, TriangleRule};

const NEWTON_MAX_ITERS: usize = 100;
const NEWTON_TOL: f64 = 1e-15;

/// The `n`-node Gauss–Legendre rule on `[-1,1]`, exact to degree `2n-1`.
pub fn gauss_legendre_rule(n: usize) -> Result<Rule1d, RefElemError> {
    if n == 0 {
        return Err(RefElemError::UnsupportedOrder {
            what: "Gauss-Legendre node count",
            got: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess for the i-th root in descending order.
        let mut x = (std::f64::consts::PI * (4.0 * i as f64 + 3.0) / (4.0 * n as f64 + 2.0)).cos();
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITERS {
            let f = jacobi_eval(n, 0.0, 0.0, x);
            let df = jacobi_deriv(n, 0.0, 0.0, x);
            let dx = f / df;
            x -= dx;
            residual = dx.abs();
            if residual <= NEWTON_TOL {
                break;
            }
        }
        if residual > NEWTON_TOL {
            return Err(RefElemError::NewtonDivergence { index: i, residual });
        }
        let dp = jacobi_deriv(n, 0.0, 0.0, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    sort_rule(&mut nodes, &mut weights);
    Ok(Rule1d {
        nodes,
        weights,
        degree: 2 * n - 1,
    })
}

/// The `n`-node Gauss–Lobatto rule on `[-1,1]` (`n >= 2`), exact to degree
/// `2n-3`, with nodes at both endpoints.
pub fn gauss_lobatto_rule(n: usize) -> Result<Rule1d, RefElemError> {
    if n < 2 {
        return Err(RefElemError::UnsupportedOrder {
            what: "Gauss-Lobatto node count",
            got: n,
            min: 2,
            max: usize::MAX,
        });
    }
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    // Interior nodes are the roots of P'_{n-1}, i.e. of P_{n-2}^{(1,1)}.
    for (i, node) in nodes.iter_mut().enumerate().take(n - 1).skip(1) {
        let mut x = (std::f64::consts::PI * (n - 1 - i) as f64 / (n - 1) as f64).cos();
        let mut residual = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITERS {
            let f = jacobi_eval(n - 2, 1.0, 1.0, x);
            let df = jacobi_deriv(n - 2, 1.0, 1.0, x);
            let dx = f / df;
            x -= dx;
            residual = dx.abs();
            if residual <= NEWTON_TOL {
                break;
            }
        }
        if residual > NEWTON_TOL {
            return Err(RefElemError::NewtonDivergence { index: i, residual });
        }
        *node = x;
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nn = n as f64;
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let p = jacobi_eval(n - 1, 0.0, 0.0, x);
            2.0 / (nn * (nn - 1.0) * p * p)
        })
        .collect();
    Ok(Rule1d {
        nodes,
        weights,
        degree: 2 * n - 3,
    })
}

/// The `n`-node Gauss–Jacobi rule for the weight `(1-x)^α (1+x)^β` on
/// `[-1,1]`, exact to degree `2n-1` against that weight.
///
/// Built by the Golub–Welsch procedure: nodes are the eigenvalues of the
/// symmetric tridiagonal recurrence matrix, weights come from the first
/// components of its eigenvectors.
pub fn gauss_jacobi_rule(n: usize, alpha: f64, beta: f64) -> Result<Rule1d, RefElemError> {
    if n == 0 {
        return Err(RefElemError::UnsupportedOrder {
            what: "Gauss-Jacobi node count",
            got: 0,
            min: 1,
            max: usize::MAX,
        });
    }
    // Total mass of the weight: 2^{α+β+1} B(α+1, β+1).
    let mu0 = 2f64.powf(alpha + beta + 1.0) * beta_fn(alpha + 1.0, beta + 1.0);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let denom = (2.0 * kf + alpha + beta) * (2.0 * kf + alpha + beta + 2.0);
        let a_k = if k == 0 {
            (beta - alpha) / (alpha + beta + 2.0)
        } else {
            (beta * beta - alpha * alpha) / denom
        };
        jac[(k, k)] = a_k;
        if k + 1 < n {
            let kf = kf + 1.0;
            let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + alpha + beta);
            let den = (2.0 * kf + alpha + beta).powi(2)
                * (2.0 * kf + alpha + beta + 1.0)
                * (2.0 * kf + alpha + beta - 1.0);
            let b_k = (num / den).sqrt();
            jac[(k, k + 1)] = b_k;
            jac[(k + 1, k)] = b_k;
        }
    }
    let eig = jac.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(Rule1d {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
        degree: 2 * n - 1,
    })
}

/// A volume rule on the reference triangle exact for total degree `degree`.
///
/// The rule collapses the triangle onto the square via
/// `x1 = (1+a)(1-b)/2 - 1`, `x2 = b` and tensorises a Gauss–Legendre rule in
/// `a` with a Gauss–Jacobi(1,0) rule in `b`; the latter absorbs the Jacobian
/// factor `(1-b)/2` of the collapse.  All weights are positive and sum to
/// the reference area 2.
pub fn triangle_volume_rule(degree: usize) -> Result<TriangleRule, RefElemError> {
    let n = degree / 2 + 1; // smallest n with 2n-1 >= degree
    let rule_a = gauss_legendre_rule(n)?;
    let rule_b = gauss_jacobi_rule(n, 1.0, 0.0)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (ib, &b) in rule_b.nodes.iter().enumerate() {
        for (ia, &a) in rule_a.nodes.iter().enumerate() {
            let x1 = 0.5 * (1.0 + a) * (1.0 - b) - 1.0;
            points.push([x1, b]);
            weights.push(0.5 * rule_a.weights[ia] * rule_b.weights[ib]);
        }
    }
    Ok(TriangleRule {
        points,
        weights,
        degree,
    })
}

/// Load a triangle rule from a plain-text file.
///
/// The format is one header line `degree <d>` followed by one `x y w` triple
/// per line; blank lines and lines starting with `#` are skipped.  The rule
/// is validated on load: weights must sum to the reference area 2 within
/// 1e-12, and all monomials up to the declared degree must be integrated
/// exactly within 1e-10.
pub fn load_rule_file(path: &Path) -> Result<TriangleRule, RefElemError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| RefElemError::RuleFileParse {
        path: display.clone(),
        message: e.to_string(),
        line: 0,
    })?;
    let mut degree: Option<usize> = None;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| RefElemError::RuleFileParse {
            path: display.clone(),
            message,
            line: idx + 1,
        };
        if degree.is_none() {
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some("degree"), Some(d), None) => {
                    degree = Some(
                        d.parse::<usize>()
                            .map_err(|e| parse_err(format!("bad degree value: {e}")))?,
                    );
                }
                _ => return Err(parse_err("expected header line `degree <d>`".into())),
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected `x y w` triple, found {} fields",
                fields.len()
            )));
        }
        let vals: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let vals = vals.map_err(|e| parse_err(format!("bad number: {e}")))?;
        points.push([vals[0], vals[1]]);
        weights.push(vals[2]);
    }
    let degree = degree.ok_or_else(|| RefElemError::RuleFileParse {
        path: display.clone(),
        message: "missing header line `degree <d>`".into(),
        line: 0,
    })?;
    let rule = TriangleRule {
        points,
        weights,
        degree,
    };
    validate_triangle_rule(&rule).map_err(|message| RefElemError::RuleFileInvalid {
        path: display,
        message,
    })?;
    Ok(rule)
}

/// Check weight sum and monomial exactness of a triangle rule.
fn validate_triangle_rule(rule: &TriangleRule) -> Result<(), String> {
    if rule.points.is_empty() {
        return Err("rule has no nodes".into());
    }
    let wsum: f64 = rule.weights.iter().sum();
    if (wsum - ReferenceTriangle::AREA).abs() > 1e-12 {
        return Err(format!(
            "weights sum to {wsum:.17e}, expected the reference area 2"
        ));
    }
    for total in 0..=rule.degree {
        for i in 0..=total {
            let j = total - i;
            let mut acc = 0.0;
            for (pt, &w) in rule.points.iter().zip(&rule.weights) {
                acc += w * pt[0].powi(i as i32) * pt[1].powi(j as i32);
            }
            let exact = triangle_monomial_moment(i, j);
            if (acc - exact).abs() > 1e-10 {
                return Err(format!(
                    "monomial x1^{i} x2^{j} integrates to {acc:.17e}, exact value {exact:.17e}"
                ));
            }
        }
    }
    Ok(())
}

/// Exact integral of `x1^i x2^j` over the reference triangle.
///
/// Integrating out `x1` first gives
/// `((-1)^{i+1}/(i+1)) [σ(i+j+1) - σ(j)]` with `σ(k) = 2/(k+1)` for even `k`
/// and 0 for odd `k`.
pub fn triangle_monomial_moment(i: usize, j: usize) -> f64 {
    let sigma = |k: usize| if k.is_multiple_of(2) { 2.0 / (k as f64 + 1.0) } else { 0.0 };
    let sign = if (i + 1).is_multiple_of(2) { 1.0 } else { -1.0 };
    sign / (i as f64 + 1.0) * (sigma(i + j + 1) - sigma(j))
}

fn sort_rule(nodes: &mut [f64], weights: &mut [f64]) {
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&a, &b| nodes[a].partial_cmp(&nodes[b]).unwrap());
    let n: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    nodes.copy_from_slice(&n);
    weights.copy_from_slice(&w);
}

/// Euler beta function for the small positive arguments used here.
fn beta_fn(a: f64, b: f64) -> f64 {
    gamma_fn(a) * gamma_fn(b) / gamma_fn(a + b)
}

/// Gamma function for positive arguments via the Lanczos approximation.
fn gamma_fn(x: f64) -> f64 {
    // Lanczos coefficients (g = 7, n = 9).
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula; not exercised by this crate's integer-offset
        // arguments but kept for completeness.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, &c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}
