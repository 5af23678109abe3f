//! Helpers shared by the integration suites: random encodings and a minimal
//! gate interpreter kept independent of the library's statevector builder.

use num_complex::Complex64;
use qpmel_core::circuit::{EncodingCircuit, GateKind};
use qpmel_core::geometry::AngularEncoding;
use qpmel_core::rng::Xoshiro256StarStar;
use std::f64::consts::PI;

pub fn random_encoding(rng: &mut Xoshiro256StarStar, q: usize) -> AngularEncoding {
    let thetas: Vec<f64> = (0..q).map(|_| rng.uniform(0.0, PI)).collect();
    let gammas: Vec<f64> = (0..q).map(|_| rng.uniform(-PI, PI)).collect();
    AngularEncoding::new(thetas, gammas).expect("sampled in range")
}

pub fn interior_encoding(rng: &mut Xoshiro256StarStar, q: usize) -> AngularEncoding {
    let thetas: Vec<f64> = (0..q).map(|_| rng.uniform(0.05, PI - 0.05)).collect();
    let gammas: Vec<f64> = (0..q).map(|_| rng.uniform(-PI + 0.05, PI - 0.05)).collect();
    AngularEncoding::new(thetas, gammas).expect("sampled in range")
}

/// Applies a single-qubit gate matrix to the statevector. Qubit 0 is the
/// most significant amplitude-index bit.
fn apply_gate(state: &mut [Complex64], num_qubits: usize, qubit: usize, m: [[Complex64; 2]; 2]) {
    let bit = 1usize << (num_qubits - 1 - qubit);
    for i in 0..state.len() {
        if i & bit == 0 {
            let j = i | bit;
            let (a0, a1) = (state[i], state[j]);
            state[i] = m[0][0] * a0 + m[0][1] * a1;
            state[j] = m[1][0] * a0 + m[1][1] * a1;
        }
    }
}

/// Replays an encoding circuit on |0...0> with the textbook RY/RZ matrices.
pub fn replay_circuit(c: &EncodingCircuit) -> Vec<Complex64> {
    let n = c.num_qubits();
    let mut state = vec![Complex64::new(0.0, 0.0); 1 << n];
    state[0] = Complex64::new(1.0, 0.0);
    for gate in c.gates() {
        let half = gate.angle / 2.0;
        let m = match gate.kind {
            GateKind::Ry => [
                [
                    Complex64::new(half.cos(), 0.0),
                    Complex64::new(-half.sin(), 0.0),
                ],
                [
                    Complex64::new(half.sin(), 0.0),
                    Complex64::new(half.cos(), 0.0),
                ],
            ],
            GateKind::Rz => [
                [Complex64::from_polar(1.0, -half), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, half)],
            ],
        };
        apply_gate(&mut state, n, gate.qubit, m);
    }
    state
}

/// |<a|b>|^2 between two raw amplitude vectors.
pub fn overlap_sq(a: &[Complex64], b: &[Complex64]) -> f64 {
    let inner: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    inner.norm_sqr()
}
