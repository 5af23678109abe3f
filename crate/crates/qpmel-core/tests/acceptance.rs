//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured margin (visible with `--nocapture`).
//!
//! Run with: cargo test -p qpmel-core --test acceptance

mod common;

use common::{interior_encoding, overlap_sq, random_encoding, replay_circuit};
use qpmel_core::circuit::to_circuit;
use qpmel_core::data::{
    filter_classes, parse_idx_files, preprocess, standardize_with, synth_blobs, LabeledDataset,
    PreprocessMode,
};
use qpmel_core::encoder::EncoderModel;
use qpmel_core::geometry::{classical_cosine_similarity, AngularEncoding};
use qpmel_core::kernel::{
    pmef, pmef_gradient, pmef_train, pmef_train_gradient, SimilarityGradient,
};
use qpmel_core::oracle;
use qpmel_core::rng::{derive_stream, Xoshiro256StarStar};
use qpmel_core::trainer::{
    evaluate, make_prototype, proto_loss, train, EncodedEpisode, EvalConfig, EvalMode, Prototype,
    SimilarityMode, TrainConfig,
};
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

/// Criterion 1: kernel fidelity equals oracle fidelity to 1e-10 at every
/// tested width, for 1000 random pairs each, in at most 10 seconds.
#[test]
fn criterion_1_kernel_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = derive_stream(1001, "acceptance.kernel_oracle");
    let mut worst = 0.0f64;
    for &q in &[1usize, 2, 4, 8, 12] {
        for _ in 0..1000 {
            let a = random_encoding(&mut rng, q);
            let b = random_encoding(&mut rng, q);
            let k = pmef(&a, &b).unwrap();
            let f = oracle::fidelity(&a, &b).unwrap();
            worst = worst.max((k - f).abs());
        }
    }
    let elapsed = start.elapsed();
    assert!(worst <= 1e-10, "max |pmef - fidelity| = {worst:.3e}");
    assert!(elapsed.as_secs_f64() <= 10.0, "took {elapsed:?}");
    println!(
        "[acceptance] criterion 1 (kernel-oracle equivalence): PASS, max dev {worst:.3e} in {elapsed:?}"
    );
}

/// Criterion 2: full-statevector fidelity factorizes into the per-qubit
/// product to 1e-10 for 1000 random pairs, Q <= 10.
#[test]
fn criterion_2_factorized_fidelity() {
    let mut rng = derive_stream(1002, "acceptance.factorization");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q = 1 + rng.below(10);
        let a = random_encoding(&mut rng, q);
        let b = random_encoding(&mut rng, q);
        let full = oracle::fidelity(&a, &b).unwrap();
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
    assert!(worst <= 1e-10, "max deviation {worst:.3e}");
    println!("[acceptance] criterion 2 (factorized fidelity): PASS, max dev {worst:.3e}");
}

/// Criterion 3: the periodic pair (pi/2, pi) vs (pi/2, -pi) has cosine
/// similarity exactly -3/5 in angle space yet kernel fidelity 1.
#[test]
fn criterion_3_periodicity_counterexample() {
    let a = AngularEncoding::single(PI / 2.0, PI).unwrap();
    let b = AngularEncoding::single(PI / 2.0, -PI).unwrap();
    let cosine = classical_cosine_similarity(&a, &b).unwrap();
    let fidelity = pmef(&a, &b).unwrap();
    assert!((cosine - (-0.6)).abs() <= 1e-12, "cosine {cosine}");
    assert!((fidelity - 1.0).abs() <= 1e-12, "fidelity {fidelity}");
    println!(
        "[acceptance] criterion 3 (periodicity counterexample): PASS, cosine {cosine:.15}, fidelity {fidelity:.15}"
    );
}

fn fd_similarity(
    value: &dyn Fn(&AngularEncoding, &AngularEncoding) -> f64,
    a: &AngularEncoding,
    b: &AngularEncoding,
    which: usize,
    qubit: usize,
) -> f64 {
    let eps = 1e-6;
    let perturb = |delta: f64| {
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
        value(
            &AngularEncoding::new(ta, ga).unwrap(),
            &AngularEncoding::new(tb, gb).unwrap(),
        )
    };
    (perturb(eps) - perturb(-eps)) / (2.0 * eps)
}

fn check_similarity_grad(
    value: &dyn Fn(&AngularEncoding, &AngularEncoding) -> f64,
    grad: &SimilarityGradient,
    a: &AngularEncoding,
    b: &AngularEncoding,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.num_qubits() {
        for (which, analytic) in [
            (0usize, grad.d_theta_a[i]),
            (1, grad.d_gamma_a[i]),
            (2, grad.d_theta_b[i]),
            (3, grad.d_gamma_b[i]),
        ] {
            let numeric = fd_similarity(value, a, b, which, i);
            let err = (analytic - numeric).abs();
            let scale = numeric.abs().max(analytic.abs());
            let tolerance = 1e-7 + 1e-4 * scale;
            assert!(err <= tolerance, "analytic {analytic} vs fd {numeric}");
            worst = worst.max(err / tolerance);
        }
    }
    worst
}

/// Criterion 4: every analytic partial of pmef, pmef_train, proto_loss and
/// the encoder backward matches central finite differences within relative
/// 1e-4 (absolute floor 1e-7), 100 random instances each.
#[test]
fn criterion_4_gradient_correctness() {
    let mut rng = derive_stream(1004, "acceptance.gradients");
    let mut worst = 0.0f64;

    // pmef and pmef_train over random widths.
    for _ in 0..100 {
        let q = 1 + rng.below(6);
        let a = interior_encoding(&mut rng, q);
        let b = interior_encoding(&mut rng, q);
        worst = worst.max(check_similarity_grad(
            &|x, y| pmef(x, y).unwrap(),
            &pmef_gradient(&a, &b).unwrap(),
            &a,
            &b,
        ));
        worst = worst.max(check_similarity_grad(
            &|x, y| pmef_train(x, y).unwrap(),
            &pmef_train_gradient(&a, &b).unwrap(),
            &a,
            &b,
        ));
    }

    // proto_loss over every angular coordinate of supports and queries.
    for instance in 0..100 {
        let q = 1 + rng.below(3);
        let n_way = 2 + rng.below(2);
        let k_shot = 1 + rng.below(2);
        let mode = if instance % 2 == 0 {
            SimilarityMode::Additive
        } else {
            SimilarityMode::Multiplicative
        };
        let mk = |rng: &mut Xoshiro256StarStar| {
            let ts: Vec<f64> = (0..q).map(|_| rng.uniform(0.2, PI - 0.2)).collect();
            let gs: Vec<f64> = (0..q).map(|_| rng.uniform(-PI + 0.2, PI - 0.2)).collect();
            AngularEncoding::new(ts, gs).unwrap()
        };
        let support: Vec<Vec<AngularEncoding>> = (0..n_way)
            .map(|_| (0..k_shot).map(|_| mk(&mut rng)).collect())
            .collect();
        let query: Vec<(AngularEncoding, usize)> =
            (0..n_way).map(|j| (mk(&mut rng), j)).collect();
        let encoded = EncodedEpisode { support, query };
        let eval_loss = |enc: &EncodedEpisode| {
            let protos: Vec<Prototype> = enc
                .support
                .iter()
                .enumerate()
                .map(|(c, shots)| make_prototype(c, shots).unwrap())
                .collect();
            proto_loss(enc, &protos, 0.7, mode).unwrap().loss
        };
        let protos: Vec<Prototype> = encoded
            .support
            .iter()
            .enumerate()
            .map(|(c, shots)| make_prototype(c, shots).unwrap())
            .collect();
        let out = proto_loss(&encoded, &protos, 0.7, mode).unwrap();
        let eps = 1e-6;
        let mut check = |analytic: f64, perturbed: &dyn Fn(f64) -> EncodedEpisode| {
            let numeric = (eval_loss(&perturbed(eps)) - eval_loss(&perturbed(-eps))) / (2.0 * eps);
            let err = (analytic - numeric).abs();
            let scale = numeric.abs().max(analytic.abs());
            let tolerance = 1e-7 + 1e-4 * scale;
            assert!(err <= tolerance, "proto_loss: analytic {analytic} vs fd {numeric}");
            worst = worst.max(err / tolerance);
        };
        for c in 0..encoded.support.len() {
            for s in 0..encoded.support[c].len() {
                for i in 0..q {
                    for is_theta in [true, false] {
                        let analytic = if is_theta {
                            out.d_support[c][s].d_theta[i]
                        } else {
                            out.d_support[c][s].d_gamma[i]
                        };
                        check(analytic, &|delta| {
                            let mut enc = encoded.clone();
                            let mut ts = enc.support[c][s].thetas().to_vec();
                            let mut gs = enc.support[c][s].gammas().to_vec();
                            if is_theta {
                                ts[i] += delta;
                            } else {
                                gs[i] += delta;
                            }
                            enc.support[c][s] = AngularEncoding::new(ts, gs).unwrap();
                            enc
                        });
                    }
                }
            }
        }
        for j in 0..encoded.query.len() {
            for i in 0..q {
                for is_theta in [true, false] {
                    let analytic = if is_theta {
                        out.d_query[j].d_theta[i]
                    } else {
                        out.d_query[j].d_gamma[i]
                    };
                    check(analytic, &|delta| {
                        let mut enc = encoded.clone();
                        let mut ts = enc.query[j].0.thetas().to_vec();
                        let mut gs = enc.query[j].0.gammas().to_vec();
                        if is_theta {
                            ts[i] += delta;
                        } else {
                            gs[i] += delta;
                        }
                        enc.query[j].0 = AngularEncoding::new(ts, gs).unwrap();
                        enc
                    });
                }
            }
        }
    }

    // Encoder backward through a pmef_train loss against a constant target.
    for instance in 0..100 {
        let reference = interior_encoding(&mut rng, 3);
        let x: Vec<f64> = (0..8).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut model = EncoderModel::init(&[8, 16, 8], 3, 5000 + instance).unwrap();
        let loss = |m: &EncoderModel| {
            let (enc, _) = m.forward(&x).unwrap();
            pmef_train(&enc, &reference).unwrap()
        };
        let (enc, trace) = model.forward(&x).unwrap();
        let sim_grad = pmef_train_gradient(&enc, &reference).unwrap();
        let analytic = model
            .backward(&trace, &sim_grad.d_theta_a, &sim_grad.d_gamma_a)
            .unwrap()
            .flatten();
        let eps = 1e-6;
        #[allow(clippy::needless_range_loop)]
        for i in 0..analytic.len() {
            let mut idx = 0;
            model.for_each_param_mut(|p| {
                if idx == i {
                    *p += eps;
                }
                idx += 1;
            });
            let up = loss(&model);
            idx = 0;
            model.for_each_param_mut(|p| {
                if idx == i {
                    *p -= 2.0 * eps;
                }
                idx += 1;
            });
            let down = loss(&model);
            idx = 0;
            model.for_each_param_mut(|p| {
                if idx == i {
                    *p += eps;
                }
                idx += 1;
            });
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic[i] - numeric).abs();
            let scale = numeric.abs().max(analytic[i].abs());
            let tolerance = 1e-7 + 1e-4 * scale;
            assert!(
                err <= tolerance,
                "encoder param {i}: analytic {} vs fd {numeric}",
                analytic[i]
            );
            worst = worst.max(err / tolerance);
        }
    }

    println!(
        "[acceptance] criterion 4 (gradient correctness): PASS, worst partial used {:.1}% of tolerance",
        100.0 * worst
    );
}

/// Criterion 5: at Q=12 the mean |d/d theta| of the product kernel is at
/// most 0.2x its Q=2 value over 500 random pairs, while the additive kernel
/// keeps at least 0.8x.
#[test]
fn criterion_5_gradient_trick_contrast() {
    let mut rng = derive_stream(1005, "acceptance.trick");
    let mut mean_abs = |q: usize, multiplicative: bool| -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for _ in 0..500 {
            let a = random_encoding(&mut rng, q);
            let b = random_encoding(&mut rng, q);
            let g = if multiplicative {
                pmef_gradient(&a, &b).unwrap()
            } else {
                pmef_train_gradient(&a, &b).unwrap()
            };
            total += g
                .d_theta_a
                .iter()
                .chain(&g.d_theta_b)
                .map(|d| d.abs())
                .sum::<f64>();
            count += 2 * q;
        }
        total / count as f64
    };
    let prod_ratio = mean_abs(12, true) / mean_abs(2, true);
    let train_ratio = mean_abs(12, false) / mean_abs(2, false);
    assert!(prod_ratio <= 0.2, "product kernel ratio {prod_ratio:.4}");
    assert!(train_ratio >= 0.8, "additive kernel ratio {train_ratio:.4}");
    println!(
        "[acceptance] criterion 5 (gradient trick): PASS, product ratio {prod_ratio:.4}, additive ratio {train_ratio:.4}"
    );
}

/// Criterion 6: inversion-test RMS error over 50 seeds stays within
/// 1.5/sqrt(shots) at 1e3, 1e4 and 1e5 shots.
#[test]
fn criterion_6_inversion_test_convergence() {
    let mut rng = derive_stream(1006, "acceptance.shots");
    for pair in 0..3 {
        let a = random_encoding(&mut rng, 3);
        let b = random_encoding(&mut rng, 3);
        let f = oracle::fidelity(&a, &b).unwrap();
        for &shots in &[1_000u64, 10_000, 100_000] {
            let mut sq = 0.0;
            for seed in 0..50u64 {
                let est = oracle::inversion_test(&a, &b, shots, 0xC0FFEE + 1000 * pair + seed)
                    .unwrap();
                sq += (est.estimate - f).powi(2);
            }
            let rms = (sq / 50.0).sqrt();
            let bound = 1.5 / (shots as f64).sqrt();
            assert!(rms <= bound, "pair {pair}, shots {shots}: rms {rms:.3e} > {bound:.3e}");
        }
    }
    println!("[acceptance] criterion 6 (inversion-test convergence): PASS at 1e3/1e4/1e5 shots");
}

/// Criterion 7: replaying the emitted RY/RZ circuit through an independent
/// gate interpreter reproduces the oracle state up to global phase for 100
/// random encodings, Q <= 8.
#[test]
fn criterion_7_circuit_fidelity() {
    let mut rng = derive_stream(1007, "acceptance.circuit");
    let mut worst = 1.0f64;
    for _ in 0..100 {
        let q = 1 + rng.below(8);
        let a = random_encoding(&mut rng, q);
        let simulated = replay_circuit(&to_circuit(&a));
        let reference = oracle::build_state(&a).unwrap();
        let overlap = overlap_sq(&simulated, reference.amplitudes());
        worst = worst.min(overlap);
    }
    assert!((worst - 1.0).abs() <= 1e-10, "min overlap {worst}");
    println!("[acceptance] criterion 7 (circuit fidelity): PASS, min |overlap|^2 = {worst:.15}");
}

/// The synthetic blob task shared by criterion 8 and the trainer suites:
/// 4 well-separated classes, standardized then scaled so the untrained
/// encoder already spreads encodings over the spheres.
pub fn scaled_blob_task(seed: u64) -> LabeledDataset {
    let ds = synth_blobs(4, 8, 200, 6.0, 1.0, seed).unwrap();
    let (ds, _) = preprocess(&ds, &PreprocessMode::Standardize).unwrap();
    let mut feats = Vec::with_capacity(ds.num_samples() * ds.feature_dim());
    for i in 0..ds.num_samples() {
        feats.extend(ds.sample(i).iter().map(|x| x * 4.0));
    }
    LabeledDataset::new(feats, ds.feature_dim(), ds.labels().to_vec()).unwrap()
}

/// Criterion 8: 4-way-5-shot on separable blobs reaches >= 0.98 accuracy
/// over 150 evaluation episodes within 2 minutes, and classical vs
/// 1e5-shot quantum evaluation agree within 2 points.
#[test]
fn criterion_8_synthetic_end_to_end() {
    let start = Instant::now();
    let train_ds = scaled_blob_task(41);
    let eval_ds = scaled_blob_task(42);
    let model = EncoderModel::init(&[8, 32, 16], 4, 7).unwrap();
    let mut cfg = TrainConfig::new(4, 5, 5, 500, 11);
    cfg.temperature = 3.0;
    let (trained, _) = train(model, &train_ds, &cfg).unwrap();

    let ecfg = EvalConfig {
        n_way: 4,
        k_shot: 5,
        q_queries: 5,
        episodes: 150,
        seed: 99,
        mode: EvalMode::Classical,
    };
    let classical = evaluate(&trained, &eval_ds, &ecfg).unwrap();
    let quantum = evaluate(
        &trained,
        &eval_ds,
        &EvalConfig {
            mode: EvalMode::Quantum { shots: 100_000 },
            ..ecfg
        },
    )
    .unwrap();
    let elapsed = start.elapsed();

    assert!(
        classical.mean_accuracy >= 0.98,
        "classical accuracy {:.4}",
        classical.mean_accuracy
    );
    assert!(
        (classical.mean_accuracy - quantum.mean_accuracy).abs() <= 0.02,
        "classical {:.4} vs quantum {:.4}",
        classical.mean_accuracy,
        quantum.mean_accuracy
    );
    assert!(elapsed.as_secs_f64() <= 120.0, "took {elapsed:?}");
    println!(
        "[acceptance] criterion 8 (synthetic end-to-end): PASS, classical {:.4} +- {:.4}, quantum {:.4} +- {:.4}, {elapsed:?}",
        classical.mean_accuracy, classical.ci95, quantum.mean_accuracy, quantum.ci95
    );
}

fn mnist_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("QPMEL_MNIST_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn mnist_task(classes: &[usize]) -> (LabeledDataset, LabeledDataset) {
    let dir = mnist_dir();
    let train = parse_idx_files(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )
    .expect("MNIST train split under data/mnist (see data/mnist/README.md)");
    let test = parse_idx_files(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    )
    .expect("MNIST test split under data/mnist");
    let (train_small, _) =
        preprocess(&filter_classes(&train, classes).unwrap(), &PreprocessMode::Downsample(2))
            .unwrap();
    let (train_ready, stats) = preprocess(&train_small, &PreprocessMode::Standardize).unwrap();
    let stats = stats.unwrap();
    let (test_small, _) =
        preprocess(&filter_classes(&test, classes).unwrap(), &PreprocessMode::Downsample(2))
            .unwrap();
    let test_ready = standardize_with(&test_small, &stats).unwrap();
    (train_ready, test_ready)
}

fn mnist_run(classes: &[usize], threshold: f64) -> (f64, f64) {
    let start = Instant::now();
    let (train_ds, test_ds) = mnist_task(classes);
    let n_way = classes.len();
    let model = EncoderModel::init(&[196, 128, 64], 5, 7).unwrap();
    let cfg = TrainConfig::new(n_way, 5, 15, 2000, 11);
    let (trained, _) = train(model, &train_ds, &cfg).unwrap();
    let ecfg = EvalConfig {
        n_way,
        k_shot: 5,
        q_queries: 15,
        episodes: 150,
        seed: 99,
        mode: EvalMode::Classical,
    };
    let result = evaluate(&trained, &test_ds, &ecfg).unwrap();
    let elapsed = start.elapsed();
    assert!(
        result.mean_accuracy >= threshold,
        "classes {classes:?}: accuracy {:.4} below {threshold}",
        result.mean_accuracy
    );
    assert!(elapsed.as_secs_f64() <= 1200.0, "took {elapsed:?}");
    (result.mean_accuracy, result.ci95)
}

/// Criterion 9a: MNIST (0,1) 2-way-5-shot reaches >= 0.97 over 150 test
/// episodes.
#[test]
fn criterion_9a_mnist_binary_easy_pair() {
    let (acc, ci) = mnist_run(&[0, 1], 0.97);
    println!("[acceptance] criterion 9a (MNIST 0/1): PASS, accuracy {acc:.4} +- {ci:.4}");
}

/// Criterion 9b: the hard pair (3,5) reaches >= 0.90.
#[test]
fn criterion_9b_mnist_binary_hard_pair() {
    let (acc, ci) = mnist_run(&[3, 5], 0.90);
    println!("[acceptance] criterion 9b (MNIST 3/5): PASS, accuracy {acc:.4} +- {ci:.4}");
}

/// Criterion 9c: the 3-class task (0,1,2) reaches >= 0.93.
#[test]
fn criterion_9c_mnist_three_class() {
    let (acc, ci) = mnist_run(&[0, 1, 2], 0.93);
    println!("[acceptance] criterion 9c (MNIST 0/1/2): PASS, accuracy {acc:.4} +- {ci:.4}");
}
