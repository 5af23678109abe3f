//! Angular and Cartesian coordinate types and the conversions between them.
//!
//! An [`AngularEncoding`] carries one (theta, gamma) pair per qubit, with
//! theta in [0, pi] and gamma in [-pi, pi]. [`to_cartesian`] maps each pair
//! onto the unit sphere as
//!
//! ```text
//! (x, y, z) = (sin t * cos g, sin t * sin g, cos t)
//! ```
//!
//! which collapses the coordinate periodicity of the angles: gamma = pi and
//! gamma = -pi are distinct angular vectors but the same spherical point.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Per-qubit polar/azimuthal angle pairs produced by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularEncoding {
    thetas: Vec<f64>,
    gammas: Vec<f64>,
}

impl AngularEncoding {
    /// Validates and wraps angle vectors: equal non-zero length, all finite,
    /// theta in [0, pi], gamma in [-pi, pi].
    pub fn new(thetas: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        if thetas.len() != gammas.len() {
            return Err(Error::DimensionMismatch {
                context: "theta/gamma vectors",
                expected: thetas.len(),
                found: gammas.len(),
            });
        }
        if thetas.is_empty() {
            return Err(Error::InvalidEncoding("zero qubits".into()));
        }
        for (q, (&t, &g)) in thetas.iter().zip(&gammas).enumerate() {
            if !t.is_finite() || !g.is_finite() {
                return Err(Error::InvalidEncoding(format!(
                    "non-finite angle at qubit {q}: theta={t}, gamma={g}"
                )));
            }
            if !(0.0..=PI).contains(&t) {
                return Err(Error::InvalidEncoding(format!(
                    "theta out of [0, pi] at qubit {q}: {t}"
                )));
            }
            if !(-PI..=PI).contains(&g) {
                return Err(Error::InvalidEncoding(format!(
                    "gamma out of [-pi, pi] at qubit {q}: {g}"
                )));
            }
        }
        Ok(Self { thetas, gammas })
    }

    /// Convenience constructor for a single qubit.
    pub fn single(theta: f64, gamma: f64) -> Result<Self> {
        Self::new(vec![theta], vec![gamma])
    }

    pub fn num_qubits(&self) -> usize {
        self.thetas.len()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }
}

/// Per-qubit unit-sphere points (x, y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianEncoding {
    points: Vec<[f64; 3]>,
}

/// Absolute tolerance on the unit-norm invariant of Cartesian triples.
pub const UNIT_NORM_TOL: f64 = 1e-12;

impl CartesianEncoding {
    /// Validates that every triple lies on the unit sphere within
    /// [`UNIT_NORM_TOL`].
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidEncoding("zero qubits".into()));
        }
        for (q, p) in points.iter().enumerate() {
            let norm_sq = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            if !norm_sq.is_finite() || (norm_sq - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidEncoding(format!(
                    "triple at qubit {q} is not unit norm: |p|^2 = {norm_sq}"
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn num_qubits(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }
}

/// Polar-to-Cartesian conversion of every qubit's angle pair.
pub fn to_cartesian(a: &AngularEncoding) -> CartesianEncoding {
    let points = a
        .thetas()
        .iter()
        .zip(a.gammas())
        .map(|(&t, &g)| [t.sin() * g.cos(), t.sin() * g.sin(), t.cos()])
        .collect();
    // sin^2 + cos^2 keeps the norm within ~1 ulp of 1, far inside the
    // invariant tolerance.
    CartesianEncoding { points }
}

/// Inverse conversion: theta = acos(z), gamma = atan2(y, x).
///
/// Used where a spherical point (e.g. a prototype) must be re-expressed as
/// angles, such as preparing a prototype state on a circuit.
pub fn to_angular(c: &CartesianEncoding) -> AngularEncoding {
    let mut thetas = Vec::with_capacity(c.num_qubits());
    let mut gammas = Vec::with_capacity(c.num_qubits());
    for p in c.points() {
        thetas.push(p[2].clamp(-1.0, 1.0).acos());
        gammas.push(p[1].atan2(p[0]));
    }
    AngularEncoding { thetas, gammas }
}

/// Brings raw head outputs into the legal angle ranges: theta is clamped to
/// [0, pi]; gamma is wrapped into [-pi, pi] by modular reduction
/// `((g + pi) mod 2pi) - pi`.
///
/// Values already inside [-pi, pi] pass through untouched, so +pi stays +pi
/// rather than wrapping to -pi; the two representations of the same
/// spherical point both remain expressible.
pub fn clamp_to_ranges(thetas_raw: &[f64], gammas_raw: &[f64]) -> Result<AngularEncoding> {
    if thetas_raw.len() != gammas_raw.len() {
        return Err(Error::DimensionMismatch {
            context: "theta/gamma vectors",
            expected: thetas_raw.len(),
            found: gammas_raw.len(),
        });
    }
    for (&t, &g) in thetas_raw.iter().zip(gammas_raw) {
        if !t.is_finite() || !g.is_finite() {
            return Err(Error::InvalidEncoding(format!(
                "non-finite raw angle: theta={t}, gamma={g}"
            )));
        }
    }
    let thetas: Vec<f64> = thetas_raw.iter().map(|&t| t.clamp(0.0, PI)).collect();
    let gammas: Vec<f64> = gammas_raw
        .iter()
        .map(|&g| {
            if (-PI..=PI).contains(&g) {
                g
            } else {
                (g + PI).rem_euclid(2.0 * PI) - PI
            }
        })
        .collect();
    AngularEncoding::new(thetas, gammas)
}

/// Cosine similarity over the flattened 2Q-vectors (t_1..t_Q, g_1..g_Q).
///
/// This is the naive angle-space similarity that misreads periodic
/// duplicates as dissimilar; it exists as the negative baseline for the
/// kernel and is not used anywhere in training.
pub fn classical_cosine_similarity(a: &AngularEncoding, b: &AngularEncoding) -> Result<f64> {
    if a.num_qubits() != b.num_qubits() {
        return Err(Error::DimensionMismatch {
            context: "encodings",
            expected: a.num_qubits(),
            found: b.num_qubits(),
        });
    }
    let flat = |e: &AngularEncoding| -> Vec<f64> {
        e.thetas().iter().chain(e.gammas()).copied().collect()
    };
    let fa = flat(a);
    let fb = flat(b);
    let dot: f64 = fa.iter().zip(&fb).map(|(x, y)| x * y).sum();
    let na: f64 = fa.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = fb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(dot / (na * nb))
}
