//! Episodic few-shot training with a prototypical loss over kernel
//! similarities.
//!
//! Each episode samples `n_way` classes, `k_shot` supports and `q_queries`
//! queries per class. Supports are encoded and collapsed into one prototype
//! per class: the per-qubit Euclidean mean of the support triples,
//! renormalized onto the sphere. Averaging in Cartesian space (not angle
//! space) is what makes periodic duplicates of the same point reinforce
//! instead of cancel.
//!
//! Query logits are kernel similarities to the prototypes divided by a
//! temperature, and the loss is softmax cross-entropy. Gradients flow
//! through the logits, the prototypes (including the renormalization
//! Jacobian), and the polar-to-Cartesian map, back to the angular
//! coordinates of every query *and* support, then through the encoder to
//! its parameters.
//!
//! Training uses the additive similarity by default; the multiplicative
//! form is available to reproduce its vanishing-gradient behaviour.
//!
//! Every random choice is drawn from streams derived from one seed, and all
//! accumulation runs in ascending sample order, so a (seed, config) pair
//! reproduces checkpoints bit-for-bit.

use std::io::Write as _;
use std::path::PathBuf;

use crate::encoder::{EncoderModel, ForwardTrace, ParamGradients};
use crate::error::{Error, Result};
use crate::geometry::{to_angular, to_cartesian, AngularEncoding, CartesianEncoding};
use crate::kernel::{ckf, ckf_cartesian_gradient, pmef_train_cartesian};
use crate::oracle;
use crate::rng::{derive_seed, derive_stream, Xoshiro256StarStar};
use crate::data::LabeledDataset;

/// Norm below which a prototype mean is considered degenerate.
const DEGENERATE_NORM: f64 = 1e-9;

/// One N-way-K-shot task instance.
#[derive(Debug, Clone)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    /// The sampled class indices, in sampling order; positions in this list
    /// are the episode-local class positions used by logits.
    pub classes: Vec<usize>,
    /// (features, dataset class index), grouped by class in `classes` order.
    pub support: Vec<(Vec<f64>, usize)>,
    pub query: Vec<(Vec<f64>, usize)>,
}

/// Per-class representative on the per-qubit spheres.
#[derive(Debug, Clone)]
pub struct Prototype {
    pub class_index: usize,
    pub cartesian: CartesianEncoding,
    /// Norm of the pre-normalization mean per qubit; needed by the
    /// renormalization Jacobian.
    pub mean_norms: Vec<f64>,
    /// Qubits whose mean collapsed below [`DEGENERATE_NORM`] and fell back
    /// to the first support's triple.
    pub degenerate_qubits: Vec<usize>,
}

/// Renormalized per-qubit Euclidean mean of the supports' triples.
///
/// A degenerate mean (norm < 1e-9) falls back deterministically to the
/// first support's triple for that qubit and is flagged in
/// `degenerate_qubits` for episode diagnostics.
pub fn make_prototype(class_index: usize, supports: &[AngularEncoding]) -> Result<Prototype> {
    if supports.is_empty() {
        return Err(Error::InvalidArgument("prototype needs at least one support".into()));
    }
    let q = supports[0].num_qubits();
    for s in supports {
        if s.num_qubits() != q {
            return Err(Error::DimensionMismatch {
                context: "prototype supports",
                expected: q,
                found: s.num_qubits(),
            });
        }
    }
    let carts: Vec<CartesianEncoding> = supports.iter().map(to_cartesian).collect();
    let k = supports.len() as f64;
    let mut points = Vec::with_capacity(q);
    let mut mean_norms = Vec::with_capacity(q);
    let mut degenerate_qubits = Vec::new();
    for qu in 0..q {
        let mut mean = [0.0f64; 3];
        for c in &carts {
            for (m, &x) in mean.iter_mut().zip(&c.points()[qu]) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= k;
        }
        let norm = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
        mean_norms.push(norm);
        if norm < DEGENERATE_NORM {
            degenerate_qubits.push(qu);
            points.push(carts[0].points()[qu]);
        } else {
            points.push([mean[0] / norm, mean[1] / norm, mean[2] / norm]);
        }
    }
    Ok(Prototype {
        class_index,
        cartesian: CartesianEncoding::new(points)?,
        mean_norms,
        degenerate_qubits,
    })
}

/// Similarity logits of a query against each prototype: the additive kernel
/// similarity divided by the temperature.
pub fn similarity_logits(
    query: &AngularEncoding,
    protos: &[Prototype],
    temperature: f64,
) -> Result<Vec<f64>> {
    if protos.is_empty() {
        return Err(Error::InvalidArgument("no prototypes".into()));
    }
    if temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let qc = to_cartesian(query);
    protos
        .iter()
        .map(|p| Ok(pmef_train_cartesian(&qc, &p.cartesian)? / temperature))
        .collect()
}

/// Which per-qubit reduction the loss uses as its similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    /// Sum of per-qubit fidelities; the training default.
    Additive,
    /// Product of per-qubit fidelities; exhibits vanishing gradients as the
    /// qubit count grows.
    Multiplicative,
}

/// Angular encodings of one episode, grouped like the episode itself.
#[derive(Debug, Clone)]
pub struct EncodedEpisode {
    /// support[c][k]: encoding of shot k of class position c.
    pub support: Vec<Vec<AngularEncoding>>,
    /// (encoding, class position in 0..n_way).
    pub query: Vec<(AngularEncoding, usize)>,
}

/// Gradient with respect to one sample's angular coordinates.
#[derive(Debug, Clone)]
pub struct AngleGradient {
    pub d_theta: Vec<f64>,
    pub d_gamma: Vec<f64>,
}

/// Loss value and gradients for one episode.
#[derive(Debug, Clone)]
pub struct ProtoLossOutput {
    pub loss: f64,
    /// Per-query logits (before softmax), for accuracy reporting.
    pub logits: Vec<Vec<f64>>,
    /// Queries answered correctly by argmax.
    pub correct: usize,
    /// d loss / d angles, shaped like `EncodedEpisode::support`.
    pub d_support: Vec<Vec<AngleGradient>>,
    /// d loss / d angles per query.
    pub d_query: Vec<AngleGradient>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Mean softmax cross-entropy over the episode's queries, with gradients
/// back to every query and support angle.
///
/// `protos[c]` must be the output of [`make_prototype`] over
/// `encodings.support[c]`; the stored mean norms drive the renormalization
/// Jacobian.
pub fn proto_loss(
    encodings: &EncodedEpisode,
    protos: &[Prototype],
    temperature: f64,
    mode: SimilarityMode,
) -> Result<ProtoLossOutput> {
    let n_way = protos.len();
    if n_way == 0 || encodings.support.len() != n_way {
        return Err(Error::InvalidArgument(format!(
            "{} prototype(s) for {} support class(es)",
            n_way,
            encodings.support.len()
        )));
    }
    if temperature <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if encodings.query.is_empty() {
        return Err(Error::InvalidArgument("episode has no queries".into()));
    }
    let q = protos[0].cartesian.num_qubits();
    for p in protos {
        if p.cartesian.num_qubits() != q {
            return Err(Error::DimensionMismatch {
                context: "prototype qubits",
                expected: q,
                found: p.cartesian.num_qubits(),
            });
        }
    }

    let query_carts: Vec<CartesianEncoding> =
        encodings.query.iter().map(|(e, _)| to_cartesian(e)).collect();

    let n_queries = encodings.query.len();
    let inv_j = 1.0 / n_queries as f64;

    // Per-qubit ckf values for every (query, class) pair, reused by the
    // backward pass.
    let mut ckf_table: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_queries);
    let mut logits: Vec<Vec<f64>> = Vec::with_capacity(n_queries);
    for qc in &query_carts {
        let mut per_class_ckf = Vec::with_capacity(n_way);
        let mut per_class_logit = Vec::with_capacity(n_way);
        for p in protos {
            let ks: Vec<f64> = qc
                .points()
                .iter()
                .zip(p.cartesian.points())
                .map(|(a, b)| ckf(a, b))
                .collect();
            let sim = match mode {
                SimilarityMode::Additive => ks.iter().sum::<f64>(),
                SimilarityMode::Multiplicative => ks.iter().product::<f64>(),
            };
            per_class_ckf.push(ks);
            per_class_logit.push(sim / temperature);
        }
        ckf_table.push(per_class_ckf);
        logits.push(per_class_logit);
    }

    let mut loss = 0.0;
    let mut correct = 0;
    // d loss / d (query cartesian triple), and accumulated gradient on each
    // prototype's unit triples.
    let mut d_query_cart: Vec<Vec<[f64; 3]>> = vec![vec![[0.0; 3]; q]; n_queries];
    let mut d_proto_unit: Vec<Vec<[f64; 3]>> = vec![vec![[0.0; 3]; q]; n_way];

    for (j, (qc, (_, class_pos))) in query_carts.iter().zip(&encodings.query).enumerate() {
        if *class_pos >= n_way {
            return Err(Error::InvalidArgument(format!(
                "query class position {class_pos} out of 0..{n_way}"
            )));
        }
        let probs = softmax(&logits[j]);
        loss -= inv_j * probs[*class_pos].max(f64::MIN_POSITIVE).ln();
        if argmax(&logits[j]) == *class_pos {
            correct += 1;
        }
        for c in 0..n_way {
            let d_logit = inv_j * (probs[c] - if c == *class_pos { 1.0 } else { 0.0 });
            if d_logit == 0.0 {
                continue;
            }
            let ks = &ckf_table[j][c];
            // d logit / d ckf_q: 1/tau for the sum, (prod of others)/tau
            // for the product (prefix/suffix so zero factors are exact).
            let d_ckf: Vec<f64> = match mode {
                SimilarityMode::Additive => vec![1.0 / temperature; q],
                SimilarityMode::Multiplicative => {
                    let mut prefix = vec![1.0; q];
                    for i in 1..q {
                        prefix[i] = prefix[i - 1] * ks[i - 1];
                    }
                    let mut suffix = vec![1.0; q];
                    for i in (0..q.saturating_sub(1)).rev() {
                        suffix[i] = suffix[i + 1] * ks[i + 1];
                    }
                    (0..q).map(|i| prefix[i] * suffix[i] / temperature).collect()
                }
            };
            for i in 0..q {
                let (dq, dp) =
                    ckf_cartesian_gradient(&qc.points()[i], &protos[c].cartesian.points()[i]);
                let w = d_logit * d_ckf[i];
                for axis in 0..3 {
                    d_query_cart[j][i][axis] += w * dq[axis];
                    d_proto_unit[c][i][axis] += w * dp[axis];
                }
            }
        }
    }

    // Prototype backward: through renormalization to the mean, then evenly
    // to each support triple. Degenerate qubits route their whole gradient
    // to the first support's triple, which the fallback copied verbatim.
    let mut d_support_cart: Vec<Vec<Vec<[f64; 3]>>> = encodings
        .support
        .iter()
        .map(|shots| vec![vec![[0.0; 3]; q]; shots.len()])
        .collect();
    for c in 0..n_way {
        let k = encodings.support[c].len();
        if k == 0 {
            return Err(Error::InvalidArgument(format!(
                "class position {c} has no supports"
            )));
        }
        let inv_k = 1.0 / k as f64;
        for i in 0..q {
            let du = d_proto_unit[c][i];
            if protos[c].degenerate_qubits.contains(&i) {
                for axis in 0..3 {
                    d_support_cart[c][0][i][axis] += du[axis];
                }
                continue;
            }
            let u = protos[c].cartesian.points()[i];
            let norm = protos[c].mean_norms[i];
            let dot = u[0] * du[0] + u[1] * du[1] + u[2] * du[2];
            let dm = [
                (du[0] - u[0] * dot) / norm,
                (du[1] - u[1] * dot) / norm,
                (du[2] - u[2] * dot) / norm,
            ];
            for shot_grads in &mut d_support_cart[c] {
                for axis in 0..3 {
                    shot_grads[i][axis] += dm[axis] * inv_k;
                }
            }
        }
    }

    // Cartesian-to-angular chain for every sample.
    let to_angle_grad = |enc: &AngularEncoding, d_cart: &[[f64; 3]]| -> AngleGradient {
        let mut d_theta = Vec::with_capacity(enc.num_qubits());
        let mut d_gamma = Vec::with_capacity(enc.num_qubits());
        for (i, (&t, &g)) in enc.thetas().iter().zip(enc.gammas()).enumerate() {
            let d = d_cart[i];
            let (x, y) = (t.sin() * g.cos(), t.sin() * g.sin());
            d_theta.push(d[0] * t.cos() * g.cos() + d[1] * t.cos() * g.sin() - d[2] * t.sin());
            d_gamma.push(-d[0] * y + d[1] * x);
        }
        AngleGradient { d_theta, d_gamma }
    };

    let d_support = encodings
        .support
        .iter()
        .zip(&d_support_cart)
        .map(|(shots, grads)| {
            shots
                .iter()
                .zip(grads)
                .map(|(enc, g)| to_angle_grad(enc, g))
                .collect()
        })
        .collect();
    let d_query = encodings
        .query
        .iter()
        .zip(&d_query_cart)
        .map(|((enc, _), g)| to_angle_grad(enc, g))
        .collect();

    Ok(ProtoLossOutput {
        loss,
        logits,
        correct,
        d_support,
        d_query,
    })
}

/// Adam with bias correction. Moments are laid out in the model's canonical
/// parameter order.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the flattened gradient vector.
    pub fn apply(&mut self, model: &mut EncoderModel, grads: &[f64]) {
        assert_eq!(grads.len(), self.m.len(), "gradient/moment shape mismatch");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut i = 0;
        model.for_each_param_mut(|p| {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            i += 1;
        });
    }
}

/// Episode sampling and optimization schedule.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub episodes: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub seed: u64,
    pub similarity: SimilarityMode,
    /// When set, per-episode metrics are written here as line-delimited
    /// records: episode index, loss, episode accuracy, gradient norm.
    pub metrics_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn new(n_way: usize, k_shot: usize, q_queries: usize, episodes: usize, seed: u64) -> Self {
        Self {
            n_way,
            k_shot,
            q_queries,
            episodes,
            learning_rate: 1e-3,
            temperature: 1.0,
            seed,
            similarity: SimilarityMode::Additive,
            metrics_path: None,
        }
    }
}

/// One row of the training metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub grad_norm: f64,
}

fn check_episode_feasible(
    ds: &LabeledDataset,
    n_way: usize,
    k_shot: usize,
    q_queries: usize,
) -> Result<()> {
    if n_way < 2 {
        return Err(Error::Config("n_way must be at least 2".into()));
    }
    if k_shot < 1 || q_queries < 1 {
        return Err(Error::Config("k_shot and q_queries must be at least 1".into()));
    }
    let classes = ds.classes();
    if classes.len() < n_way {
        return Err(Error::Config(format!(
            "dataset has {} classes but n_way is {n_way}",
            classes.len()
        )));
    }
    for &c in &classes {
        let n = ds.class_samples(c).map_or(0, <[usize]>::len);
        if n < k_shot + q_queries {
            return Err(Error::Config(format!(
                "class {c} has {n} samples, need {k_shot}+{q_queries}"
            )));
        }
    }
    Ok(())
}

/// Draws one episode: `n_way` classes without replacement, then
/// `k_shot + q_queries` distinct samples per class.
pub fn sample_episode(
    ds: &LabeledDataset,
    n_way: usize,
    k_shot: usize,
    q_queries: usize,
    rng: &mut Xoshiro256StarStar,
) -> Result<Episode> {
    check_episode_feasible(ds, n_way, k_shot, q_queries)?;
    let all_classes = ds.classes();
    let picked = rng.choose_distinct(all_classes.len(), n_way);
    let classes: Vec<usize> = picked.iter().map(|&i| all_classes[i]).collect();
    let mut support = Vec::with_capacity(n_way * k_shot);
    let mut query = Vec::with_capacity(n_way * q_queries);
    for &c in &classes {
        let pool = ds.class_samples(c).expect("validated above");
        let chosen = rng.choose_distinct(pool.len(), k_shot + q_queries);
        for (j, &pi) in chosen.iter().enumerate() {
            let sample = (ds.sample(pool[pi]).to_vec(), c);
            if j < k_shot {
                support.push(sample);
            } else {
                query.push(sample);
            }
        }
    }
    Ok(Episode {
        n_way,
        k_shot,
        q_queries,
        classes,
        support,
        query,
    })
}

/// Encodes an episode through the model, keeping traces for backward.
fn encode_episode(
    model: &EncoderModel,
    episode: &Episode,
) -> Result<(EncodedEpisode, Vec<Vec<ForwardTrace>>, Vec<ForwardTrace>)> {
    let mut support = Vec::with_capacity(episode.n_way);
    let mut support_traces = Vec::with_capacity(episode.n_way);
    for c in 0..episode.n_way {
        let mut encs = Vec::with_capacity(episode.k_shot);
        let mut traces = Vec::with_capacity(episode.k_shot);
        for s in 0..episode.k_shot {
            let (x, _) = &episode.support[c * episode.k_shot + s];
            let (enc, trace) = model.forward(x)?;
            encs.push(enc);
            traces.push(trace);
        }
        support.push(encs);
        support_traces.push(traces);
    }
    let mut query = Vec::with_capacity(episode.query.len());
    let mut query_traces = Vec::with_capacity(episode.query.len());
    for (x, c) in &episode.query {
        let pos = episode
            .classes
            .iter()
            .position(|cls| cls == c)
            .expect("query class among supports");
        let (enc, trace) = model.forward(x)?;
        query.push((enc, pos));
        query_traces.push(trace);
    }
    Ok((EncodedEpisode { support, query }, support_traces, query_traces))
}

/// Runs the episodic loop: sample, encode, loss, backward, Adam step.
/// Returns the trained model and the per-episode metrics series.
pub fn train(
    mut model: EncoderModel,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(EncoderModel, Vec<EpisodeMetrics>)> {
    check_episode_feasible(ds, cfg.n_way, cfg.k_shot, cfg.q_queries)?;
    if ds.feature_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset features vs encoder input",
            expected: model.input_dim(),
            found: ds.feature_dim(),
        });
    }
    let mut episode_rng = derive_stream(cfg.seed, "train.episodes");
    let mut adam = AdamState::new(model.num_parameters(), cfg.learning_rate);
    let mut metrics = Vec::with_capacity(cfg.episodes);

    for e in 0..cfg.episodes {
        let episode = sample_episode(ds, cfg.n_way, cfg.k_shot, cfg.q_queries, &mut episode_rng)?;
        let (encoded, support_traces, query_traces) = encode_episode(&model, &episode)?;
        let protos: Vec<Prototype> = encoded
            .support
            .iter()
            .enumerate()
            .map(|(c, shots)| make_prototype(episode.classes[c], shots))
            .collect::<Result<_>>()?;
        let out = proto_loss(&encoded, &protos, cfg.temperature, cfg.similarity)?;

        // Accumulate parameter gradients in ascending sample order:
        // supports class-major, then queries.
        let mut grads = ParamGradients::zeros_like(&model);
        for (c, traces) in support_traces.iter().enumerate() {
            for (s, trace) in traces.iter().enumerate() {
                let g = &out.d_support[c][s];
                grads.add_assign(&model.backward(trace, &g.d_theta, &g.d_gamma)?);
            }
        }
        for (j, trace) in query_traces.iter().enumerate() {
            let g = &out.d_query[j];
            grads.add_assign(&model.backward(trace, &g.d_theta, &g.d_gamma)?);
        }

        let flat = grads.flatten();
        let grad_norm = flat.iter().map(|g| g * g).sum::<f64>().sqrt();
        adam.apply(&mut model, &flat);

        metrics.push(EpisodeMetrics {
            episode: e,
            loss: out.loss,
            accuracy: out.correct as f64 / episode.query.len() as f64,
            grad_norm,
        });
    }

    if let Some(path) = &cfg.metrics_path {
        write_metrics(path, &metrics)?;
    }
    Ok((model, metrics))
}

fn write_metrics(path: &PathBuf, metrics: &[EpisodeMetrics]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "episode,loss,accuracy,grad_norm")?;
    for m in metrics {
        writeln!(out, "{},{},{},{}", m.episode, m.loss, m.accuracy, m.grad_norm)?;
    }
    Ok(())
}

/// How evaluation scores query-prototype similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    /// Kernel similarities, exact.
    Classical,
    /// Per-qubit inversion-test estimates at the given shot budget, summed
    /// over qubits. Shot seeds derive from the evaluation seed.
    Quantum { shots: u64 },
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub episodes: usize,
    pub seed: u64,
    pub mode: EvalMode,
}

/// Mean episode accuracy with a 95% confidence interval
/// (1.96 * sd / sqrt(episodes)).
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub mean_accuracy: f64,
    pub ci95: f64,
    pub episode_accuracies: Vec<f64>,
}

/// Scores `episodes` fresh episodes with a frozen model.
pub fn evaluate(model: &EncoderModel, ds: &LabeledDataset, cfg: &EvalConfig) -> Result<EvalResult> {
    if cfg.episodes < 2 {
        return Err(Error::Config("evaluation needs at least 2 episodes".into()));
    }
    check_episode_feasible(ds, cfg.n_way, cfg.k_shot, cfg.q_queries)?;
    if ds.feature_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset features vs encoder input",
            expected: model.input_dim(),
            found: ds.feature_dim(),
        });
    }
    let mut episode_rng = derive_stream(cfg.seed, "eval.episodes");
    let mut accuracies = Vec::with_capacity(cfg.episodes);
    for e in 0..cfg.episodes {
        let episode = sample_episode(ds, cfg.n_way, cfg.k_shot, cfg.q_queries, &mut episode_rng)?;
        let (encoded, _, _) = encode_episode(model, &episode)?;
        let protos: Vec<Prototype> = encoded
            .support
            .iter()
            .enumerate()
            .map(|(c, shots)| make_prototype(episode.classes[c], shots))
            .collect::<Result<_>>()?;
        let mut correct = 0usize;
        for (j, (query_enc, class_pos)) in encoded.query.iter().enumerate() {
            let sims: Vec<f64> = match cfg.mode {
                EvalMode::Classical => similarity_logits(query_enc, &protos, 1.0)?,
                EvalMode::Quantum { shots } => {
                    quantum_similarities(query_enc, &protos, shots, cfg.seed, e, j)?
                }
            };
            if argmax(&sims) == *class_pos {
                correct += 1;
            }
        }
        accuracies.push(correct as f64 / encoded.query.len() as f64);
    }
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
    Ok(EvalResult {
        mean_accuracy: mean,
        ci95: 1.96 * var.sqrt() / n.sqrt(),
        episode_accuracies: accuracies,
    })
}

/// Sum over qubits of single-qubit inversion-test estimates between the
/// query and each prototype, mirroring the additive similarity.
fn quantum_similarities(
    query: &AngularEncoding,
    protos: &[Prototype],
    shots: u64,
    seed: u64,
    episode: usize,
    query_idx: usize,
) -> Result<Vec<f64>> {
    let mut sims = Vec::with_capacity(protos.len());
    for (c, proto) in protos.iter().enumerate() {
        let proto_angles = to_angular(&proto.cartesian);
        let mut sim = 0.0;
        for qb in 0..query.num_qubits() {
            let qa = AngularEncoding::single(query.thetas()[qb], query.gammas()[qb])?;
            let pa = AngularEncoding::single(proto_angles.thetas()[qb], proto_angles.gammas()[qb])?;
            let shot_seed = derive_seed(seed, &format!("eval.quantum.{episode}.{query_idx}.{c}.{qb}"));
            sim += oracle::inversion_test(&qa, &pa, shots, shot_seed)?.estimate;
        }
        sims.push(sim);
    }
    Ok(sims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::geometry::clamp_to_ranges;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn single_support_prototype_is_its_conversion() {
        let s = AngularEncoding::new(vec![0.7, 2.0], vec![-0.4, 1.1]).unwrap();
        let p = make_prototype(3, std::slice::from_ref(&s)).unwrap();
        assert_eq!(p.class_index, 3);
        assert_eq!(p.cartesian, to_cartesian(&s));
        assert!(p.degenerate_qubits.is_empty());
    }

    #[test]
    fn periodic_duplicates_reinforce() {
        // gamma = pi and gamma = -pi are the same spherical point; their
        // mean must stay that point, not cancel.
        let a = AngularEncoding::single(PI / 2.0, PI).unwrap();
        let b = AngularEncoding::single(PI / 2.0, -PI).unwrap();
        let p = make_prototype(0, &[a, b]).unwrap();
        assert!(p.degenerate_qubits.is_empty());
        let pt = p.cartesian.points()[0];
        assert_close(pt[0], -1.0, 1e-12);
        assert_close(pt[1], 0.0, 1e-12);
        assert_close(pt[2], 0.0, 1e-12);
    }

    #[test]
    fn spherical_mean_of_orthogonal_points() {
        let a = AngularEncoding::single(PI / 2.0, 0.0).unwrap(); // (1,0,0)
        let b = AngularEncoding::single(PI / 2.0, PI / 2.0).unwrap(); // (0,1,0)
        let p = make_prototype(0, &[a, b]).unwrap();
        let pt = p.cartesian.points()[0];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(pt[0], s, 1e-12);
        assert_close(pt[1], s, 1e-12);
        assert_close(pt[2], 0.0, 1e-12);
    }

    #[test]
    fn antipodal_supports_fall_back_to_first() {
        let a = AngularEncoding::single(PI / 2.0, 0.0).unwrap(); // (1,0,0)
        let b = AngularEncoding::single(PI / 2.0, PI).unwrap(); // (-1,0,0)
        let p = make_prototype(0, &[a.clone(), b]).unwrap();
        assert_eq!(p.degenerate_qubits, vec![0]);
        let pt = p.cartesian.points()[0];
        let expected = to_cartesian(&a).points()[0];
        for k in 0..3 {
            assert_close(pt[k], expected[k], 1e-12);
        }
    }

    #[test]
    fn prototype_invariant_under_pre_wrap_gamma_shift() {
        let mut rng = derive_stream(60, "trainer.protoperiod");
        for _ in 0..100 {
            let q = 1 + rng.below(4);
            let mk = |rng: &mut Xoshiro256StarStar| {
                let ts: Vec<f64> = (0..q).map(|_| rng.uniform(0.0, PI)).collect();
                let gs: Vec<f64> = (0..q).map(|_| rng.uniform(-PI, PI)).collect();
                AngularEncoding::new(ts, gs).unwrap()
            };
            let s1 = mk(&mut rng);
            let s2 = mk(&mut rng);
            let base = make_prototype(0, &[s1.clone(), s2.clone()]).unwrap();
            let mut shifted_gammas = s2.gammas().to_vec();
            let k = rng.below(q);
            shifted_gammas[k] += 2.0 * PI;
            let s2_shifted = clamp_to_ranges(s2.thetas(), &shifted_gammas).unwrap();
            let shifted = make_prototype(0, &[s1, s2_shifted]).unwrap();
            for (a, b) in base.cartesian.points().iter().zip(shifted.cartesian.points()) {
                for axis in 0..3 {
                    assert_close(a[axis], b[axis], 1e-10);
                }
            }
        }
    }

    #[test]
    fn logits_for_matched_and_orthogonal_prototypes() {
        // Query equals prototype 0 on all 4 qubits; prototype 1 is
        // per-qubit orthogonal, so logits are [4, 0] at temperature 1.
        let query = AngularEncoding::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        let p0 = make_prototype(0, std::slice::from_ref(&query)).unwrap();
        let orth = AngularEncoding::new(vec![PI / 2.0; 4], vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        let p1 = make_prototype(1, &[orth]).unwrap();
        let logits = similarity_logits(&query, &[p0.clone(), p1.clone()], 1.0).unwrap();
        assert_close(logits[0], 4.0, 1e-10);
        assert_close(logits[1], 0.0, 1e-12);

        let halved = similarity_logits(&query, &[p0, p1], 2.0).unwrap();
        assert_close(halved[0], logits[0] / 2.0, 1e-12);
        assert_close(halved[1], logits[1] / 2.0, 1e-12);
    }

    #[test]
    fn logits_reject_bad_arguments() {
        let q = AngularEncoding::single(0.3, 0.2).unwrap();
        assert!(similarity_logits(&q, &[], 1.0).is_err());
        let p = make_prototype(0, std::slice::from_ref(&q)).unwrap();
        assert!(similarity_logits(&q, &[p], 0.0).is_err());
    }

    #[test]
    fn temperature_preserves_argmax() {
        let mut rng = derive_stream(61, "trainer.tau");
        for _ in 0..100 {
            let q = 2 + rng.below(3);
            let mk = |rng: &mut Xoshiro256StarStar| {
                let ts: Vec<f64> = (0..q).map(|_| rng.uniform(0.0, PI)).collect();
                let gs: Vec<f64> = (0..q).map(|_| rng.uniform(-PI, PI)).collect();
                AngularEncoding::new(ts, gs).unwrap()
            };
            let query = mk(&mut rng);
            let protos: Vec<Prototype> = (0..3)
                .map(|c| make_prototype(c, &[mk(&mut rng)]).unwrap())
                .collect();
            let l1 = similarity_logits(&query, &protos, 1.0).unwrap();
            let l2 = similarity_logits(&query, &protos, 3.7).unwrap();
            assert_eq!(argmax(&l1), argmax(&l2));
        }
    }

    #[test]
    fn argmax_matches_oracle_reranking() {
        // The additive logit ranking must agree with summed per-qubit
        // oracle fidelities.
        let mut rng = derive_stream(62, "trainer.rerank");
        for _ in 0..50 {
            let q = 3;
            let mk = |rng: &mut Xoshiro256StarStar| {
                let ts: Vec<f64> = (0..q).map(|_| rng.uniform(0.0, PI)).collect();
                let gs: Vec<f64> = (0..q).map(|_| rng.uniform(-PI, PI)).collect();
                AngularEncoding::new(ts, gs).unwrap()
            };
            let query = mk(&mut rng);
            let protos: Vec<Prototype> = (0..4)
                .map(|c| make_prototype(c, &[mk(&mut rng)]).unwrap())
                .collect();
            let logits = similarity_logits(&query, &protos, 1.0).unwrap();
            let oracle_sims: Vec<f64> = protos
                .iter()
                .map(|p| {
                    let pa = to_angular(&p.cartesian);
                    (0..q)
                        .map(|i| {
                            oracle::single_qubit_fidelity(
                                query.thetas()[i],
                                query.gammas()[i],
                                pa.thetas()[i],
                                pa.gammas()[i],
                            )
                        })
                        .sum()
                })
                .collect();
            assert_eq!(argmax(&logits), argmax(&oracle_sims));
        }
    }

    #[test]
    fn proto_loss_two_way_reference_value() {
        // Logits [1, 0] for a true class 0: loss = -ln(e/(e+1)).
        let query = AngularEncoding::single(0.0, 0.0).unwrap();
        let p0 = make_prototype(0, std::slice::from_ref(&query)).unwrap();
        let p1 = make_prototype(1, &[AngularEncoding::single(PI / 2.0, 0.0).unwrap()]).unwrap();
        let encoded = EncodedEpisode {
            support: vec![
                vec![AngularEncoding::single(0.0, 0.0).unwrap()],
                vec![AngularEncoding::single(PI / 2.0, 0.0).unwrap()],
            ],
            query: vec![(query, 0)],
        };
        let out = proto_loss(&encoded, &[p0, p1], 1.0, SimilarityMode::Additive).unwrap();
        assert_close(out.logits[0][0], 1.0, 1e-12);
        assert_close(out.logits[0][1], 0.0, 1e-12);
        assert_close(out.loss, 0.31326168751822286, 1e-10);
        assert_eq!(out.correct, 1);
    }

    #[test]
    fn separable_episode_loss_vanishes_at_low_temperature() {
        let query = AngularEncoding::single(0.0, 0.0).unwrap();
        let p0 = make_prototype(0, std::slice::from_ref(&query)).unwrap();
        let p1 = make_prototype(1, &[AngularEncoding::single(PI / 2.0, 0.0).unwrap()]).unwrap();
        let encoded = EncodedEpisode {
            support: vec![
                vec![AngularEncoding::single(0.0, 0.0).unwrap()],
                vec![AngularEncoding::single(PI / 2.0, 0.0).unwrap()],
            ],
            query: vec![(query, 0)],
        };
        let mut last = f64::INFINITY;
        for tau in [1.0, 0.3, 0.1, 0.03] {
            let out = proto_loss(&encoded, &[p0.clone(), p1.clone()], tau, SimilarityMode::Additive)
                .unwrap();
            assert!(out.loss < last);
            last = out.loss;
        }
        assert!(last < 1e-10, "loss {last} did not vanish");
    }

    /// Finite-difference check of proto_loss over every angular coordinate
    /// of supports and queries.
    fn proto_loss_fd_check(mode: SimilarityMode, seed: u64) {
        let mut rng = derive_stream(seed, "trainer.fd");
        for _ in 0..20 {
            let q = 1 + rng.below(3);
            let n_way = 2 + rng.below(2);
            let k_shot = 1 + rng.below(2);
            let mk = |rng: &mut Xoshiro256StarStar| {
                let ts: Vec<f64> = (0..q).map(|_| rng.uniform(0.2, PI - 0.2)).collect();
                let gs: Vec<f64> = (0..q).map(|_| rng.uniform(-PI + 0.2, PI - 0.2)).collect();
                AngularEncoding::new(ts, gs).unwrap()
            };
            let support: Vec<Vec<AngularEncoding>> = (0..n_way)
                .map(|_| (0..k_shot).map(|_| mk(&mut rng)).collect())
                .collect();
            let query: Vec<(AngularEncoding, usize)> = (0..2 * n_way)
                .map(|j| (mk(&mut rng), j % n_way))
                .collect();
            let encoded = EncodedEpisode { support, query };

            let eval = |enc: &EncodedEpisode| -> f64 {
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

            let check = |analytic: f64, perturbed: &dyn Fn(f64) -> EncodedEpisode| {
                let up = eval(&perturbed(eps));
                let down = eval(&perturbed(-eps));
                let numeric = (up - down) / (2.0 * eps);
                let err = (analytic - numeric).abs();
                let scale = numeric.abs().max(analytic.abs());
                assert!(
                    err <= 1e-7 + 1e-4 * scale,
                    "analytic {analytic} vs fd {numeric}"
                );
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
    }

    #[test]
    fn proto_loss_gradients_match_finite_differences_additive() {
        proto_loss_fd_check(SimilarityMode::Additive, 63);
    }

    #[test]
    fn proto_loss_gradients_match_finite_differences_multiplicative() {
        proto_loss_fd_check(SimilarityMode::Multiplicative, 64);
    }

    #[test]
    fn zero_episodes_leave_model_untouched() {
        let ds = synth_blobs(4, 8, 20, 6.0, 1.0, 5).unwrap();
        let model = EncoderModel::init(&[8, 16, 8], 4, 7).unwrap();
        let cfg = TrainConfig::new(4, 5, 5, 0, 11);
        let (trained, metrics) = train(model.clone(), &ds, &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(metrics.is_empty());
    }

    #[test]
    fn train_rejects_insufficient_classes() {
        let ds = synth_blobs(2, 4, 20, 6.0, 1.0, 5).unwrap();
        let model = EncoderModel::init(&[4, 8, 4], 2, 7).unwrap();
        let cfg = TrainConfig::new(4, 5, 5, 10, 11);
        assert!(matches!(train(model, &ds, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = synth_blobs(4, 8, 30, 6.0, 1.0, 5).unwrap();
        let run = || {
            let model = EncoderModel::init(&[8, 16, 8], 4, 7).unwrap();
            let cfg = TrainConfig::new(4, 3, 3, 20, 11);
            train(model, &ds, &cfg).unwrap()
        };
        let (m1, log1) = run();
        let (m2, log2) = run();
        assert_eq!(m1, m2);
        assert_eq!(log1, log2);
        let mut b1 = Vec::new();
        m1.save(&mut b1).unwrap();
        let mut b2 = Vec::new();
        m2.save(&mut b2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn evaluate_perfect_on_orthogonal_deterministic_dataset() {
        // Every query equals a support of its class and the two classes map
        // to orthogonal encodings; accuracy must be exactly 1, CI 0.
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..12 {
            let class = i % 2;
            features.push(if class == 0 { 0.0 } else { 10.0 });
            labels.push(class);
        }
        let ds = LabeledDataset::new(features, 1, labels).unwrap();
        // Hand-built 1-qubit model: feature 0 lands near theta=0 (the |0>
        // state) and feature 10 lands at theta=pi/2 (the |1> state), which
        // are the orthogonal pair on this sphere.
        let mut model = EncoderModel::init(&[1, 1], 1, 3).unwrap();
        // trunk w, trunk b, theta w, theta b, gamma w, gamma b
        let vals = [8.0, 0.0, 0.1, -8.0, 0.0, 0.0];
        let mut i = 0;
        model.for_each_param_mut(|p| {
            *p = vals[i];
            i += 1;
        });
        let cfg = EvalConfig {
            n_way: 2,
            k_shot: 2,
            q_queries: 2,
            episodes: 10,
            seed: 19,
            mode: EvalMode::Classical,
        };
        let res = evaluate(&model, &ds, &cfg).unwrap();
        assert_eq!(res.mean_accuracy, 1.0);
        assert_eq!(res.ci95, 0.0);
    }

    #[test]
    fn evaluate_needs_two_episodes() {
        let ds = synth_blobs(2, 2, 10, 4.0, 1.0, 5).unwrap();
        let model = EncoderModel::init(&[2, 4], 2, 7).unwrap();
        let cfg = EvalConfig {
            n_way: 2,
            k_shot: 1,
            q_queries: 1,
            episodes: 1,
            seed: 1,
            mode: EvalMode::Classical,
        };
        assert!(evaluate(&model, &ds, &cfg).is_err());
    }

    #[test]
    fn quantum_eval_is_seed_deterministic() {
        let ds = synth_blobs(2, 4, 12, 6.0, 1.0, 5).unwrap();
        let model = EncoderModel::init(&[4, 8], 2, 7).unwrap();
        let cfg = EvalConfig {
            n_way: 2,
            k_shot: 2,
            q_queries: 2,
            episodes: 4,
            seed: 23,
            mode: EvalMode::Quantum { shots: 200 },
        };
        let a = evaluate(&model, &ds, &cfg).unwrap();
        let b = evaluate(&model, &ds, &cfg).unwrap();
        assert_eq!(a.episode_accuracies, b.episode_accuracies);
    }
}
