//! Python bindings: angular encodings, the fidelity kernels, the
//! statevector oracle, the encoder, and QASM export.
//!
//! Build the extension with `cargo build -p qpmel-py --release`; the
//! resulting `libqpmel.so` imports as the module `qpmel` (see
//! `python/smoke_test.py` for a loader that handles the renaming).

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qpmel_core::circuit;
use qpmel_core::encoder;
use qpmel_core::geometry;
use qpmel_core::kernel;
use qpmel_core::oracle;

fn to_py_err(e: qpmel_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Per-qubit (theta, gamma) angle pairs.
#[pyclass(frozen, skip_from_py_object)]
struct AngularEncoding {
    inner: geometry::AngularEncoding,
}

#[pymethods]
impl AngularEncoding {
    #[new]
    fn new(thetas: Vec<f64>, gammas: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::AngularEncoding::new(thetas, gammas).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn thetas(&self) -> Vec<f64> {
        self.inner.thetas().to_vec()
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.inner.gammas().to_vec()
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    /// Unit-sphere (x, y, z) triples, one per qubit.
    fn to_cartesian(&self) -> Vec<(f64, f64, f64)> {
        geometry::to_cartesian(&self.inner)
            .points()
            .iter()
            .map(|p| (p[0], p[1], p[2]))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "AngularEncoding(thetas={:?}, gammas={:?})",
            self.inner.thetas(),
            self.inner.gammas()
        )
    }
}

/// Clamps theta into [0, pi] and wraps gamma into [-pi, pi].
#[pyfunction]
fn clamp_to_ranges(thetas: Vec<f64>, gammas: Vec<f64>) -> PyResult<AngularEncoding> {
    Ok(AngularEncoding {
        inner: geometry::clamp_to_ranges(&thetas, &gammas).map_err(to_py_err)?,
    })
}

/// Cosine similarity over the flattened angle vectors (the misleading
/// angle-space baseline).
#[pyfunction]
fn classical_cosine_similarity(a: &AngularEncoding, b: &AngularEncoding) -> PyResult<f64> {
    geometry::classical_cosine_similarity(&a.inner, &b.inner).map_err(to_py_err)
}

/// Multi-qubit fidelity as the product of per-qubit kernel values.
#[pyfunction]
fn pmef(a: &AngularEncoding, b: &AngularEncoding) -> PyResult<f64> {
    kernel::pmef(&a.inner, &b.inner).map_err(to_py_err)
}

/// Additive training surrogate: the sum of per-qubit kernel values.
#[pyfunction]
fn pmef_train(a: &AngularEncoding, b: &AngularEncoding) -> PyResult<f64> {
    kernel::pmef_train(&a.inner, &b.inner).map_err(to_py_err)
}

/// Four gradient lists: with respect to a's thetas and gammas, then b's.
type GradientLists = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Analytic gradient of `pmef_train` as
/// (d_theta_a, d_gamma_a, d_theta_b, d_gamma_b).
#[pyfunction]
fn pmef_train_gradient(a: &AngularEncoding, b: &AngularEncoding) -> PyResult<GradientLists> {
    let g = kernel::pmef_train_gradient(&a.inner, &b.inner).map_err(to_py_err)?;
    Ok((g.d_theta_a, g.d_gamma_a, g.d_theta_b, g.d_gamma_b))
}

/// Exact statevector fidelity |<a|b>|^2 from the oracle simulator.
#[pyfunction]
fn fidelity(a: &AngularEncoding, b: &AngularEncoding) -> PyResult<f64> {
    oracle::fidelity(&a.inner, &b.inner).map_err(to_py_err)
}

/// The explicit 2^Q-amplitude statevector of an encoding.
#[pyfunction]
fn statevector(a: &AngularEncoding) -> PyResult<Vec<Complex64>> {
    Ok(oracle::build_state(&a.inner)
        .map_err(to_py_err)?
        .amplitudes()
        .to_vec())
}

/// Finite-shot inversion-test estimate of fidelity(a, b); deterministic for
/// a fixed seed.
#[pyfunction]
fn inversion_test(a: &AngularEncoding, b: &AngularEncoding, shots: u64, seed: u64) -> PyResult<f64> {
    Ok(oracle::inversion_test(&a.inner, &b.inner, shots, seed)
        .map_err(to_py_err)?
        .estimate)
}

/// OpenQASM 2.0 text of the depth-2 encoding circuit, RY(2 theta) then
/// RZ(gamma) per qubit.
#[pyfunction]
fn encoding_qasm(a: &AngularEncoding) -> String {
    circuit::emit_qasm(&circuit::to_circuit(&a.inner))
}

/// The classical encoder: dense trunk plus angle-projection heads.
#[pyclass]
struct Encoder {
    inner: encoder::EncoderModel,
}

#[pymethods]
impl Encoder {
    #[new]
    fn new(layer_dims: Vec<usize>, qubits: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: encoder::EncoderModel::init(&layer_dims, qubits, seed).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.inner.layer_dims().to_vec()
    }

    /// Encodes one feature vector into angles.
    fn forward(&self, features: Vec<f64>) -> PyResult<AngularEncoding> {
        let (enc, _) = self.inner.forward(&features).map_err(to_py_err)?;
        Ok(AngularEncoding { inner: enc })
    }

    /// Writes the binary checkpoint (magic "QPMEL1").
    fn save(&self, path: &str) -> PyResult<()> {
        self.inner
            .save_to(path)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Reads a checkpoint written by `save`.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: encoder::EncoderModel::load_from(path).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Encoder(layer_dims={:?}, qubits={})",
            self.inner.layer_dims(),
            self.inner.num_qubits()
        )
    }
}

#[pymodule]
fn qpmel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<AngularEncoding>()?;
    m.add_class::<Encoder>()?;
    m.add_function(wrap_pyfunction!(clamp_to_ranges, m)?)?;
    m.add_function(wrap_pyfunction!(classical_cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(pmef, m)?)?;
    m.add_function(wrap_pyfunction!(pmef_train, m)?)?;
    m.add_function(wrap_pyfunction!(pmef_train_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(statevector, m)?)?;
    m.add_function(wrap_pyfunction!(inversion_test, m)?)?;
    m.add_function(wrap_pyfunction!(encoding_qasm, m)?)?;
    Ok(())
}
