//! Depth-2 encoding circuit and its OpenQASM 2.0 form.
//!
//! Each qubit gets exactly two gates, RY(2 theta_q) then RZ(gamma_q). The
//! doubled RY angle makes the prepared amplitudes cos(theta)/sin(theta)
//! rather than the half-angle convention; the RZ phase denominator is a
//! global phase and is dropped.
//!
//! Angles are printed with Rust's shortest round-trip float formatting, so
//! parsing the emitted text recovers every gate argument bit-exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::AngularEncoding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateKind {
    Ry,
    Rz,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub angle: f64,
    pub qubit: usize,
}

/// The per-qubit [(RY, 2t), (RZ, g)] gate list.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingCircuit {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl EncodingCircuit {
    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }
}

/// Builds the encoding circuit for an angular encoding. Zero-angle gates are
/// emitted like any other so the circuit shape is uniform.
pub fn to_circuit(a: &AngularEncoding) -> EncodingCircuit {
    let mut gates = Vec::with_capacity(2 * a.num_qubits());
    for (q, (&t, &g)) in a.thetas().iter().zip(a.gammas()).enumerate() {
        gates.push(Gate {
            kind: GateKind::Ry,
            angle: 2.0 * t,
            qubit: q,
        });
        gates.push(Gate {
            kind: GateKind::Rz,
            angle: g,
            qubit: q,
        });
    }
    EncodingCircuit {
        num_qubits: a.num_qubits(),
        gates,
    }
}

/// Emits OpenQASM 2.0 text for the circuit.
pub fn emit_qasm(c: &EncodingCircuit) -> String {
    let mut out = String::new();
    out.push_str("OPENQASM 2.0;\n");
    out.push_str("include \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", c.num_qubits);
    for gate in &c.gates {
        let name = match gate.kind {
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
        };
        let _ = writeln!(out, "{name}({}) q[{}];", gate.angle, gate.qubit);
    }
    out
}

/// Parses text produced by [`emit_qasm`] back into a circuit.
///
/// This reader covers exactly the subset this module emits: the two header
/// lines, one `qreg`, and `ry`/`rz` gate lines.
pub fn parse_qasm(text: &str) -> Result<EncodingCircuit> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let expect = |found: Option<&str>, expected: &str| -> Result<()> {
        match found {
            Some(l) if l == expected => Ok(()),
            other => Err(Error::Format {
                expected: expected.into(),
                found: other.unwrap_or("<eof>").into(),
            }),
        }
    };
    expect(lines.next(), "OPENQASM 2.0;")?;
    expect(lines.next(), "include \"qelib1.inc\";")?;

    let qreg = lines.next().ok_or_else(|| Error::Format {
        expected: "qreg q[N];".into(),
        found: "<eof>".into(),
    })?;
    let num_qubits: usize = qreg
        .strip_prefix("qreg q[")
        .and_then(|s| s.strip_suffix("];"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format {
            expected: "qreg q[N];".into(),
            found: qreg.into(),
        })?;

    let mut gates = Vec::new();
    for line in lines {
        let (kind, rest) = if let Some(rest) = line.strip_prefix("ry(") {
            (GateKind::Ry, rest)
        } else if let Some(rest) = line.strip_prefix("rz(") {
            (GateKind::Rz, rest)
        } else {
            return Err(Error::Format {
                expected: "ry(...) or rz(...) gate line".into(),
                found: line.into(),
            });
        };
        let (angle_str, rest) = rest.split_once(") q[").ok_or_else(|| Error::Format {
            expected: "<angle>) q[<i>];".into(),
            found: line.into(),
        })?;
        let angle: f64 = angle_str.parse().map_err(|_| Error::Format {
            expected: "decimal angle literal".into(),
            found: angle_str.into(),
        })?;
        let qubit: usize = rest
            .strip_suffix("];")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format {
                expected: "q[<i>];".into(),
                found: line.into(),
            })?;
        if qubit >= num_qubits {
            return Err(Error::Inconsistent(format!(
                "gate on qubit {qubit} but register has {num_qubits}"
            )));
        }
        gates.push(Gate { kind, angle, qubit });
    }

    // Enforce the encoding-circuit shape: per qubit ascending, one RY in
    // [0, 2pi] followed by one RZ in [-pi, pi].
    if gates.len() != 2 * num_qubits {
        return Err(Error::Inconsistent(format!(
            "expected {} gates for {num_qubits} qubits, found {}",
            2 * num_qubits,
            gates.len()
        )));
    }
    for q in 0..num_qubits {
        let ry = &gates[2 * q];
        let rz = &gates[2 * q + 1];
        let shape_ok = ry.kind == GateKind::Ry
            && rz.kind == GateKind::Rz
            && ry.qubit == q
            && rz.qubit == q
            && (0.0..=2.0 * std::f64::consts::PI).contains(&ry.angle)
            && (-std::f64::consts::PI..=std::f64::consts::PI).contains(&rz.angle);
        if !shape_ok {
            return Err(Error::Inconsistent(format!(
                "qubit {q} does not carry an in-range RY/RZ pair"
            )));
        }
    }
    Ok(EncodingCircuit { num_qubits, gates })
}
