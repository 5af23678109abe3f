//! The classical encoder: a dense trunk with two parallel projection heads
//! that emit range-scaled angle vectors.
//!
//! Forward pass, for trunk layers i = 1..L and heads:
//!
//! ```text
//! a_0 = x
//! z_i = W_i a_{i-1} + b_i        a_i = relu(z_i)
//! u   = W_t a_L + b_t            theta = pi * sigmoid(u)
//! v   = W_g a_L + b_g            gamma = pi * (2 * sigmoid(v) - 1)
//! ```
//!
//! The sigmoid scalings keep theta in (0, pi) and gamma in (-pi, pi) for
//! every finite input, so forward outputs satisfy the angular-encoding
//! invariants with no clamping. The backward pass is the exact reverse-mode
//! chain rule, written out by hand and checked against finite differences.
//!
//! Weight initialization draws from U(-1/sqrt(fan_in), +1/sqrt(fan_in))
//! (variance 1/(3 fan_in)); biases start at zero. All draws come from the
//! stream `derive_stream(seed, "encoder.init")` in a fixed order (trunk
//! layers ascending, then the theta head, then the gamma head; weights
//! row-major, one row per output unit), so initialization is reproducible
//! bit-for-bit.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::AngularEncoding;
use crate::rng::derive_stream;

/// Checkpoint magic: format "QPMEL1".
const CHECKPOINT_MAGIC: &[u8; 6] = b"QPMEL1";
const CHECKPOINT_VERSION: u32 = 1;

/// One affine layer, weights row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.out_dim {
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            let mut acc = self.biases[row];
            for (wi, xi) in w.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

/// Hidden-layer activation. Only ReLU is constructed today; the enum is the
/// extension point for alternatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Dense trunk plus theta/gamma projection heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    layer_dims: Vec<usize>,
    activations: Vec<Activation>,
    trunk: Vec<DenseLayer>,
    theta_head: DenseLayer,
    gamma_head: DenseLayer,
    num_qubits: usize,
}

/// Intermediate values retained by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Vec<f64>,
    pre_acts: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    theta_sig: Vec<f64>,
    gamma_sig: Vec<f64>,
}

/// Gradients shaped like the model parameters, in canonical order.
#[derive(Debug, Clone)]
pub struct ParamGradients {
    trunk: Vec<(Vec<f64>, Vec<f64>)>,
    theta_head: (Vec<f64>, Vec<f64>),
    gamma_head: (Vec<f64>, Vec<f64>),
}

impl ParamGradients {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        Self {
            trunk: model
                .trunk
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
            theta_head: (
                vec![0.0; model.theta_head.weights.len()],
                vec![0.0; model.theta_head.biases.len()],
            ),
            gamma_head: (
                vec![0.0; model.gamma_head.weights.len()],
                vec![0.0; model.gamma_head.biases.len()],
            ),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGradients) {
        let add = |dst: &mut [f64], src: &[f64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        };
        for (dst, src) in self.trunk.iter_mut().zip(&other.trunk) {
            add(&mut dst.0, &src.0);
            add(&mut dst.1, &src.1);
        }
        add(&mut self.theta_head.0, &other.theta_head.0);
        add(&mut self.theta_head.1, &other.theta_head.1);
        add(&mut self.gamma_head.0, &other.gamma_head.0);
        add(&mut self.gamma_head.1, &other.gamma_head.1);
    }

    /// Flattens into the canonical parameter order (matching
    /// [`EncoderModel::for_each_param_mut`] and the checkpoint layout).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.trunk {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.theta_head.0);
        out.extend_from_slice(&self.theta_head.1);
        out.extend_from_slice(&self.gamma_head.0);
        out.extend_from_slice(&self.gamma_head.1);
        out
    }

    pub fn l2_norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl EncoderModel {
    /// Builds a model with fan-in-scaled uniform weights and zero biases.
    ///
    /// `layer_dims` lists the input dimension, hidden widths, and trunk
    /// output width; both heads map the trunk output to `num_qubits`.
    pub fn init(layer_dims: &[usize], num_qubits: usize, seed: u64) -> Result<Self> {
        if layer_dims.is_empty() {
            return Err(Error::InvalidArgument("layer_dims is empty".into()));
        }
        if layer_dims.contains(&0) || num_qubits == 0 {
            return Err(Error::InvalidArgument(
                "layer dimensions and qubit count must be positive".into(),
            ));
        }
        let mut rng = derive_stream(seed, "encoder.init");
        let mut make_layer = |in_dim: usize, out_dim: usize| -> DenseLayer {
            let bound = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            DenseLayer {
                in_dim,
                out_dim,
                weights,
                biases: vec![0.0; out_dim],
            }
        };
        let trunk: Vec<DenseLayer> = layer_dims
            .windows(2)
            .map(|w| make_layer(w[0], w[1]))
            .collect();
        let trunk_out = *layer_dims.last().expect("non-empty");
        let theta_head = make_layer(trunk_out, num_qubits);
        let gamma_head = make_layer(trunk_out, num_qubits);
        Ok(Self {
            activations: vec![Activation::Relu; trunk.len()],
            layer_dims: layer_dims.to_vec(),
            trunk,
            theta_head,
            gamma_head,
            num_qubits,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_parameters(&self) -> usize {
        self.trunk
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum::<usize>()
            + self.theta_head.weights.len()
            + self.theta_head.biases.len()
            + self.gamma_head.weights.len()
            + self.gamma_head.biases.len()
    }

    /// Visits every parameter mutably in canonical order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.trunk {
            layer.weights.iter_mut().for_each(&mut f);
            layer.biases.iter_mut().for_each(&mut f);
        }
        for head in [&mut self.theta_head, &mut self.gamma_head] {
            head.weights.iter_mut().for_each(&mut f);
            head.biases.iter_mut().for_each(&mut f);
        }
    }

    pub fn trunk(&self) -> &[DenseLayer] {
        &self.trunk
    }

    /// Runs the forward pass, returning the angular encoding and the trace
    /// needed by [`Self::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(AngularEncoding, ForwardTrace)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "encoder input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.trunk.len());
        let mut pre_acts: Vec<Vec<f64>> = Vec::with_capacity(self.trunk.len());
        let mut current: Vec<f64> = x.to_vec();
        for (layer, act) in self.trunk.iter().zip(&self.activations) {
            let mut z = Vec::new();
            layer.apply(&current, &mut z);
            let a: Vec<f64> = z.iter().map(|&zi| act.apply(zi)).collect();
            pre_acts.push(z);
            acts.push(a.clone());
            current = a;
        }
        let mut theta_pre = Vec::new();
        self.theta_head.apply(&current, &mut theta_pre);
        let mut gamma_pre = Vec::new();
        self.gamma_head.apply(&current, &mut gamma_pre);

        let theta_sig: Vec<f64> = theta_pre.iter().map(|&z| sigmoid(z)).collect();
        let gamma_sig: Vec<f64> = gamma_pre.iter().map(|&z| sigmoid(z)).collect();
        let thetas: Vec<f64> = theta_sig.iter().map(|&s| PI * s).collect();
        let gammas: Vec<f64> = gamma_sig.iter().map(|&s| PI * (2.0 * s - 1.0)).collect();

        let encoding = AngularEncoding::new(thetas, gammas)
            .expect("sigmoid-scaled outputs are always in range");
        Ok((
            encoding,
            ForwardTrace {
                input: x.to_vec(),
                pre_acts,
                acts,
                theta_sig,
                gamma_sig,
            },
        ))
    }

    /// Reverse-mode gradients of every parameter given upstream gradients
    /// with respect to the output angles.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        d_theta: &[f64],
        d_gamma: &[f64],
    ) -> Result<ParamGradients> {
        if d_theta.len() != self.num_qubits || d_gamma.len() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                context: "upstream angle gradients",
                expected: self.num_qubits,
                found: d_theta.len().max(d_gamma.len()),
            });
        }
        let mut grads = ParamGradients::zeros_like(self);

        // Through the range scalings: d theta / d u = pi s (1 - s);
        // d gamma / d v = 2 pi s (1 - s).
        let du: Vec<f64> = d_theta
            .iter()
            .zip(&trace.theta_sig)
            .map(|(&d, &s)| d * PI * s * (1.0 - s))
            .collect();
        let dv: Vec<f64> = d_gamma
            .iter()
            .zip(&trace.gamma_sig)
            .map(|(&d, &s)| d * 2.0 * PI * s * (1.0 - s))
            .collect();

        let trunk_out: &[f64] = trace
            .acts
            .last()
            .map(Vec::as_slice)
            .unwrap_or(&trace.input);

        // Head parameter gradients and the trunk-output gradient.
        let mut d_trunk_out = vec![0.0; trunk_out.len()];
        for (head, delta, grad) in [
            (&self.theta_head, &du, &mut grads.theta_head),
            (&self.gamma_head, &dv, &mut grads.gamma_head),
        ] {
            for (row, &dz) in delta.iter().enumerate() {
                grad.1[row] += dz;
                let wrow = &head.weights[row * head.in_dim..(row + 1) * head.in_dim];
                for (col, (&a, w)) in trunk_out.iter().zip(wrow).enumerate() {
                    grad.0[row * head.in_dim + col] += dz * a;
                    d_trunk_out[col] += dz * w;
                }
            }
        }

        // Back through the trunk, last layer first.
        let mut d_act = d_trunk_out;
        for i in (0..self.trunk.len()).rev() {
            let layer = &self.trunk[i];
            let act = self.activations[i];
            let dz: Vec<f64> = d_act
                .iter()
                .zip(&trace.pre_acts[i])
                .map(|(&da, &z)| da * act.derivative(z))
                .collect();
            let prev: &[f64] = if i == 0 {
                &trace.input
            } else {
                &trace.acts[i - 1]
            };
            let (gw, gb) = &mut grads.trunk[i];
            let mut d_prev = vec![0.0; layer.in_dim];
            for (row, &dzi) in dz.iter().enumerate() {
                gb[row] += dzi;
                let wrow = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (col, (&p, w)) in prev.iter().zip(wrow).enumerate() {
                    gw[row * layer.in_dim + col] += dzi * p;
                    d_prev[col] += dzi * w;
                }
            }
            d_act = d_prev;
        }
        Ok(grads)
    }

    /// Writes the "QPMEL1" checkpoint: magic, version, Q, layer_dims, then
    /// all parameters as little-endian f64 in canonical order.
    pub fn save(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.num_qubits as u32).to_le_bytes())?;
        w.write_all(&(self.layer_dims.len() as u32).to_le_bytes())?;
        for &d in &self.layer_dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let write_layer = |w: &mut dyn Write, layer: &DenseLayer| -> std::io::Result<()> {
            for &p in layer.weights.iter().chain(&layer.biases) {
                w.write_all(&p.to_le_bytes())?;
            }
            Ok(())
        };
        for layer in &self.trunk {
            write_layer(w, layer)?;
        }
        write_layer(w, &self.theta_head)?;
        write_layer(w, &self.gamma_head)?;
        Ok(())
    }

    /// Reads a "QPMEL1" checkpoint.
    pub fn load(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 6];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                found: String::from_utf8_lossy(&magic).into_owned(),
            });
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                expected: format!("version {CHECKPOINT_VERSION}"),
                found: format!("version {version}"),
            });
        }
        let num_qubits = read_u32(r)? as usize;
        let n_dims = read_u32(r)? as usize;
        if num_qubits == 0 || n_dims == 0 {
            return Err(Error::Inconsistent("empty model shape".into()));
        }
        let mut layer_dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            layer_dims.push(read_u32(r)? as usize);
        }
        if layer_dims.contains(&0) {
            return Err(Error::Inconsistent("zero layer dimension".into()));
        }
        let read_layer = |r: &mut dyn Read, in_dim: usize, out_dim: usize| -> Result<DenseLayer> {
            let mut weights = Vec::with_capacity(in_dim * out_dim);
            for _ in 0..in_dim * out_dim {
                weights.push(read_f64(r)?);
            }
            let mut biases = Vec::with_capacity(out_dim);
            for _ in 0..out_dim {
                biases.push(read_f64(r)?);
            }
            Ok(DenseLayer {
                in_dim,
                out_dim,
                weights,
                biases,
            })
        };
        let mut trunk = Vec::with_capacity(n_dims.saturating_sub(1));
        for w in layer_dims.windows(2) {
            trunk.push(read_layer(r, w[0], w[1])?);
        }
        let trunk_out = *layer_dims.last().expect("non-empty");
        let theta_head = read_layer(r, trunk_out, num_qubits)?;
        let gamma_head = read_layer(r, trunk_out, num_qubits)?;
        Ok(Self {
            activations: vec![Activation::Relu; trunk.len()],
            layer_dims,
            trunk,
            theta_head,
            gamma_head,
            num_qubits,
        })
    }

    pub fn save_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut file)
    }

    pub fn load_from(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut file)
    }
}

fn read_exact(r: &mut (impl Read + ?Sized), buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Truncated {
        needed: buf.len(),
        found: 0,
    })
}

fn read_u32(r: &mut (impl Read + ?Sized)) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut (impl Read + ?Sized)) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
