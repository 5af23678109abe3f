//! On-demand verification suites: kernel-vs-oracle equivalence, the
//! factorized-fidelity identity, gradient checks, and periodicity.
//!
//! These back the CLI `verify` command. Each suite reports pass/fail with a
//! short detail string. [`KernelFault`] is a mutation hook: injecting a
//! fault must flip the kernel-vs-oracle suite red, which demonstrates the
//! suites actually constrain the implementation.

use std::f64::consts::PI;

use crate::geometry::{clamp_to_ranges, to_cartesian, AngularEncoding};
use crate::kernel;
use crate::oracle;
use crate::rng::{derive_stream, Xoshiro256StarStar};

/// Deliberate kernel perturbations for mutation testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelFault {
    #[default]
    None,
    /// Flip the sign of the lambda_c^2 term, i.e. evaluate
    /// lambda_r^2 - lambda_c^2 instead of the correct sum.
    FlipLambdaCSign,
}

/// Outcome of one verification suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_encoding(rng: &mut Xoshiro256StarStar, q: usize) -> AngularEncoding {
    let thetas: Vec<f64> = (0..q).map(|_| rng.uniform(0.0, PI)).collect();
    let gammas: Vec<f64> = (0..q).map(|_| rng.uniform(-PI, PI)).collect();
    AngularEncoding::new(thetas, gammas).expect("sampled in range")
}

/// The kernel under test, optionally mutated.
fn eval_pmef(a: &AngularEncoding, b: &AngularEncoding, fault: KernelFault) -> f64 {
    match fault {
        KernelFault::None => kernel::pmef(a, b).expect("equal dims"),
        KernelFault::FlipLambdaCSign => {
            let (ca, cb) = (to_cartesian(a), to_cartesian(b));
            ca.points()
                .iter()
                .zip(cb.points())
                .map(|(p, q)| {
                    let l = kernel::lambdas(p, q);
                    l.lambda_r * l.lambda_r - l.lambda_c * l.lambda_c
                })
                .product()
        }
    }
}

/// |pmef - oracle fidelity| <= 1e-10 over random pairs at several widths.
pub fn kernel_vs_oracle(fault: KernelFault) -> SuiteReport {
    let mut rng = derive_stream(0x5EED, "verify.kernel_vs_oracle");
    let mut worst = 0.0f64;
    for &q in &[1usize, 2, 4, 8, 12] {
        for _ in 0..1000 {
            let a = random_encoding(&mut rng, q);
            let b = random_encoding(&mut rng, q);
            let k = eval_pmef(&a, &b, fault);
            let f = oracle::fidelity(&a, &b).expect("equal dims");
            worst = worst.max((k - f).abs());
        }
    }
    SuiteReport {
        name: "kernel-vs-oracle",
        passed: worst <= 1e-10,
        detail: format!("max |pmef - fidelity| = {worst:.3e} over 5000 pairs, Q in {{1,2,4,8,12}}"),
    }
}

/// Full-statevector fidelity equals the product of per-qubit fidelities.
pub fn factorization() -> SuiteReport {
    let mut rng = derive_stream(0x5EED, "verify.factorization");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = 1 + rng.below(10);
        let a = random_encoding(&mut rng, q);
        let b = random_encoding(&mut rng, q);
        let full = oracle::fidelity(&a, &b).expect("equal dims");
        let product: f64 = (0..q)
            .map(|i| {
                oracle::single_qubit_fidelity(
                    a.thetas()[i],
                    a.gammas()[i],
                    b.thetas()[i],
                    b.gammas()[i],
                )
            })
            .product();
        worst = worst.max((full - product).abs());
    }
    SuiteReport {
        name: "factorized-fidelity",
        passed: worst <= 1e-10,
        detail: format!("max |full - per-qubit product| = {worst:.3e} over 1000 pairs, Q <= 10"),
    }
}

/// Analytic kernel gradients against central finite differences.
pub fn gradient_check() -> SuiteReport {
    fn pmef_value(a: &AngularEncoding, b: &AngularEncoding) -> f64 {
        kernel::pmef(a, b).expect("equal dims")
    }
    fn pmef_train_value(a: &AngularEncoding, b: &AngularEncoding) -> f64 {
        kernel::pmef_train(a, b).expect("equal dims")
    }

    let mut rng = derive_stream(0x5EED, "verify.gradients");
    let mut worst_rel = 0.0f64;
    let eps = 1e-6;
    for &q in &[1usize, 3, 8] {
        for _ in 0..100 {
            let a = interior_encoding(&mut rng, q);
            let b = interior_encoding(&mut rng, q);
            type Value = fn(&AngularEncoding, &AngularEncoding) -> f64;
            let cases: [(Value, kernel::SimilarityGradient); 2] = [
                (pmef_value, kernel::pmef_gradient(&a, &b).unwrap()),
                (pmef_train_value, kernel::pmef_train_gradient(&a, &b).unwrap()),
            ];
            for (value, grad) in &cases {
                for i in 0..q {
                    for (which, analytic) in [
                        (0usize, grad.d_theta_a[i]),
                        (1, grad.d_gamma_a[i]),
                        (2, grad.d_theta_b[i]),
                        (3, grad.d_gamma_b[i]),
                    ] {
                        let numeric = central_diff(&value, &a, &b, which, i, eps);
                        let err = (analytic - numeric).abs();
                        let scale = numeric.abs().max(analytic.abs());
                        if err > 1e-7 + 1e-4 * scale {
                            return SuiteReport {
                                name: "gradient-check",
                                passed: false,
                                detail: format!(
                                    "partial mismatch at Q={q}: analytic {analytic} vs fd {numeric}"
                                ),
                            };
                        }
                        if scale > 1e-8 {
                            worst_rel = worst_rel.max(err / scale);
                        }
                    }
                }
            }
        }
    }
    SuiteReport {
        name: "gradient-check",
        passed: true,
        detail: format!("max relative error {worst_rel:.3e} over Q in {{1,3,8}}, 100 pairs each"),
    }
}

/// Kernel invariance under 2-pi gamma shifts and the angle-space cosine
/// counterexample.
pub fn periodicity() -> SuiteReport {
    let mut rng = derive_stream(0x5EED, "verify.periodicity");
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let q = 1 + rng.below(6);
        let a = random_encoding(&mut rng, q);
        let b = random_encoding(&mut rng, q);
        let base = kernel::pmef(&a, &b).expect("equal dims");
        let k = rng.below(q);
        let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
        let mut gs = a.gammas().to_vec();
        gs[k] += sign * 2.0 * PI;
        let shifted = clamp_to_ranges(a.thetas(), &gs).expect("finite");
        worst = worst.max((kernel::pmef(&shifted, &b).unwrap() - base).abs());
    }

    let a = AngularEncoding::single(PI / 2.0, PI).unwrap();
    let b = AngularEncoding::single(PI / 2.0, -PI).unwrap();
    let cosine = crate::geometry::classical_cosine_similarity(&a, &b).unwrap();
    let fidelity = kernel::pmef(&a, &b).unwrap();
    let counterexample_ok = (cosine + 0.6).abs() <= 1e-12 && (fidelity - 1.0).abs() <= 1e-12;

    SuiteReport {
        name: "periodicity",
        passed: worst <= 1e-10 && counterexample_ok,
        detail: format!(
            "max shift deviation {worst:.3e}; cosine counterexample {cosine:.12} with fidelity {fidelity:.12}"
        ),
    }
}

fn interior_encoding(rng: &mut Xoshiro256StarStar, q: usize) -> AngularEncoding {
    let thetas: Vec<f64> = (0..q).map(|_| rng.uniform(0.05, PI - 0.05)).collect();
    let gammas: Vec<f64> = (0..q).map(|_| rng.uniform(-PI + 0.05, PI - 0.05)).collect();
    AngularEncoding::new(thetas, gammas).expect("sampled in range")
}

fn central_diff(
    f: &dyn Fn(&AngularEncoding, &AngularEncoding) -> f64,
    a: &AngularEncoding,
    b: &AngularEncoding,
    which: usize,
    qubit: usize,
    eps: f64,
) -> f64 {
    let perturb = |delta: f64| -> f64 {
        let mut ta = a.thetas().to_vec();
        let mut ga = a.gammas().to_vec();
        let mut tb = b.thetas().to_vec();
        let mut gb = b.gammas().to_vec();
        match which {
            0 => ta[qubit] += delta,
            1 => ga[qubit] += delta,
            2 => tb[qubit] += delta,
            _ => gb[qubit] += delta,
        }
        let pa = AngularEncoding::new(ta, ga).expect("interior point stays in range");
        let pb = AngularEncoding::new(tb, gb).expect("interior point stays in range");
        f(&pa, &pb)
    };
    (perturb(eps) - perturb(-eps)) / (2.0 * eps)
}

/// Runs every suite. The fault, when set, perturbs only the kernel path of
/// the kernel-vs-oracle suite.
pub fn run_all(fault: KernelFault) -> Vec<SuiteReport> {
    vec![
        kernel_vs_oracle(fault),
        factorization(),
        gradient_check(),
        periodicity(),
    ]
}
