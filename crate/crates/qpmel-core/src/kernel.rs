//! Fidelity kernels over Cartesian coordinates.
//!
//! For one qubit pair with unit triples p = (x, y, z) and p' = (x', y', z'),
//! the complex inner product of the encoded states has real and imaginary
//! parts
//!
//! ```text
//! lambda_r = x x' + y y' + z z'      lambda_c = x y' - y x'
//! ```
//!
//! and the single-qubit fidelity is `ckf = lambda_r^2 + lambda_c^2`. The
//! multi-qubit fidelity is the product of per-qubit values ([`pmef`]); the
//! additive variant ([`pmef_train`]) replaces the product with a sum, which
//! keeps per-qubit gradient magnitudes independent of the qubit count.
//!
//! All gradients are closed-form chain rules through the polar-to-Cartesian
//! map; no autodiff. Accumulation is in ascending qubit order in every
//! reduction, so results are bitwise reproducible.

use crate::error::{Error, Result};
use crate::geometry::{to_cartesian, AngularEncoding, CartesianEncoding};

/// Real and imaginary parts of a single-qubit complex inner product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPair {
    pub lambda_r: f64,
    pub lambda_c: f64,
}

/// The permuted dot products of two unit triples.
pub fn lambdas(p: &[f64; 3], q: &[f64; 3]) -> LambdaPair {
    LambdaPair {
        lambda_r: p[0] * q[0] + p[1] * q[1] + p[2] * q[2],
        lambda_c: p[0] * q[1] - p[1] * q[0],
    }
}

/// Single-qubit fidelity from Cartesian triples.
pub fn ckf(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let l = lambdas(p, q);
    l.lambda_r * l.lambda_r + l.lambda_c * l.lambda_c
}

/// Gradient of [`ckf`] with respect to both triples.
///
/// Used where similarity is differentiated through points that are not a
/// direct image of angles, e.g. renormalized prototype means.
pub fn ckf_cartesian_gradient(p: &[f64; 3], q: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let l = lambdas(p, q);
    let (lr2, lc2) = (2.0 * l.lambda_r, 2.0 * l.lambda_c);
    let dp = [
        lr2 * q[0] + lc2 * q[1],
        lr2 * q[1] - lc2 * q[0],
        lr2 * q[2],
    ];
    let dq = [
        lr2 * p[0] - lc2 * p[1],
        lr2 * p[1] + lc2 * p[0],
        lr2 * p[2],
    ];
    (dp, dq)
}

fn check_dims(a: &AngularEncoding, b: &AngularEncoding) -> Result<usize> {
    if a.num_qubits() != b.num_qubits() {
        return Err(Error::DimensionMismatch {
            context: "encodings",
            expected: a.num_qubits(),
            found: b.num_qubits(),
        });
    }
    Ok(a.num_qubits())
}

fn check_cart_dims(a: &CartesianEncoding, b: &CartesianEncoding) -> Result<usize> {
    if a.num_qubits() != b.num_qubits() {
        return Err(Error::DimensionMismatch {
            context: "cartesian encodings",
            expected: a.num_qubits(),
            found: b.num_qubits(),
        });
    }
    Ok(a.num_qubits())
}

/// Multi-qubit fidelity: the product of per-qubit [`ckf`] values.
pub fn pmef(a: &AngularEncoding, b: &AngularEncoding) -> Result<f64> {
    check_dims(a, b)?;
    pmef_cartesian(&to_cartesian(a), &to_cartesian(b))
}

/// [`pmef`] over already-converted Cartesian encodings.
pub fn pmef_cartesian(a: &CartesianEncoding, b: &CartesianEncoding) -> Result<f64> {
    check_cart_dims(a, b)?;
    let mut prod = 1.0;
    for (p, q) in a.points().iter().zip(b.points()) {
        prod *= ckf(p, q);
    }
    Ok(prod)
}

/// Additive training surrogate: the sum of per-qubit [`ckf`] values.
pub fn pmef_train(a: &AngularEncoding, b: &AngularEncoding) -> Result<f64> {
    check_dims(a, b)?;
    pmef_train_cartesian(&to_cartesian(a), &to_cartesian(b))
}

/// [`pmef_train`] over already-converted Cartesian encodings.
pub fn pmef_train_cartesian(a: &CartesianEncoding, b: &CartesianEncoding) -> Result<f64> {
    check_cart_dims(a, b)?;
    let mut sum = 0.0;
    for (p, q) in a.points().iter().zip(b.points()) {
        sum += ckf(p, q);
    }
    Ok(sum)
}

/// Partial derivatives of a similarity with respect to every angular
/// coordinate of both encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGradient {
    pub d_theta_a: Vec<f64>,
    pub d_gamma_a: Vec<f64>,
    pub d_theta_b: Vec<f64>,
    pub d_gamma_b: Vec<f64>,
}

/// Per-qubit partials of ckf with respect to the four angles of the pair.
struct QubitCkfGradient {
    value: f64,
    d_theta_a: f64,
    d_gamma_a: f64,
    d_theta_b: f64,
    d_gamma_b: f64,
}

/// Chain of [`ckf_cartesian_gradient`] through the polar-to-Cartesian map of
/// both qubits.
fn qubit_ckf_gradient(ta: f64, ga: f64, tb: f64, gb: f64) -> QubitCkfGradient {
    let p = [ta.sin() * ga.cos(), ta.sin() * ga.sin(), ta.cos()];
    let q = [tb.sin() * gb.cos(), tb.sin() * gb.sin(), tb.cos()];
    let value = ckf(&p, &q);
    let (dp, dq) = ckf_cartesian_gradient(&p, &q);
    // d(x,y,z)/dt = (cos t cos g, cos t sin g, -sin t); d/dg = (-y, x, 0).
    let d_theta_a = dp[0] * ta.cos() * ga.cos() + dp[1] * ta.cos() * ga.sin() - dp[2] * ta.sin();
    let d_gamma_a = -dp[0] * p[1] + dp[1] * p[0];
    let d_theta_b = dq[0] * tb.cos() * gb.cos() + dq[1] * tb.cos() * gb.sin() - dq[2] * tb.sin();
    let d_gamma_b = -dq[0] * q[1] + dq[1] * q[0];
    QubitCkfGradient {
        value,
        d_theta_a,
        d_gamma_a,
        d_theta_b,
        d_gamma_b,
    }
}

/// Analytic gradient of [`pmef_train`]. Each qubit contributes
/// independently, so the partials are exactly the per-qubit ckf partials.
pub fn pmef_train_gradient(a: &AngularEncoding, b: &AngularEncoding) -> Result<SimilarityGradient> {
    let n = check_dims(a, b)?;
    let mut g = SimilarityGradient {
        d_theta_a: Vec::with_capacity(n),
        d_gamma_a: Vec::with_capacity(n),
        d_theta_b: Vec::with_capacity(n),
        d_gamma_b: Vec::with_capacity(n),
    };
    for q in 0..n {
        let qg = qubit_ckf_gradient(a.thetas()[q], a.gammas()[q], b.thetas()[q], b.gammas()[q]);
        g.d_theta_a.push(qg.d_theta_a);
        g.d_gamma_a.push(qg.d_gamma_a);
        g.d_theta_b.push(qg.d_theta_b);
        g.d_gamma_b.push(qg.d_gamma_b);
    }
    Ok(g)
}

/// Analytic gradient of the multiplicative [`pmef`].
///
/// The partial for qubit q carries the product of every other qubit's ckf,
/// computed by prefix/suffix products so zero factors need no division.
/// Provided to demonstrate the vanishing-gradient behaviour of the product
/// form; training uses [`pmef_train_gradient`].
pub fn pmef_gradient(a: &AngularEncoding, b: &AngularEncoding) -> Result<SimilarityGradient> {
    let n = check_dims(a, b)?;
    let per_qubit: Vec<QubitCkfGradient> = (0..n)
        .map(|q| qubit_ckf_gradient(a.thetas()[q], a.gammas()[q], b.thetas()[q], b.gammas()[q]))
        .collect();

    // prefix[q] = product of values before q; suffix[q] = product after q.
    let mut prefix = vec![1.0; n];
    for q in 1..n {
        prefix[q] = prefix[q - 1] * per_qubit[q - 1].value;
    }
    let mut suffix = vec![1.0; n];
    for q in (0..n.saturating_sub(1)).rev() {
        suffix[q] = suffix[q + 1] * per_qubit[q + 1].value;
    }

    let mut g = SimilarityGradient {
        d_theta_a: Vec::with_capacity(n),
        d_gamma_a: Vec::with_capacity(n),
        d_theta_b: Vec::with_capacity(n),
        d_gamma_b: Vec::with_capacity(n),
    };
    for q in 0..n {
        let others = prefix[q] * suffix[q];
        g.d_theta_a.push(others * per_qubit[q].d_theta_a);
        g.d_gamma_a.push(others * per_qubit[q].d_gamma_a);
        g.d_theta_b.push(others * per_qubit[q].d_theta_b);
        g.d_gamma_b.push(others * per_qubit[q].d_gamma_b);
    }
    Ok(g)
}
