//! Batch CLI: `train`, `eval`, `verify`, `export` and the optional `fetch`
//! helper, all driven by a TOML run config.

mod config;
mod fetch;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{prepare_data, EvalModeChoice, RunConfig};
use qpmel_core::circuit::{emit_qasm, to_circuit};
use qpmel_core::encoder::EncoderModel;
use qpmel_core::trainer::{evaluate, train, EvalConfig, EvalMode, TrainConfig};
use qpmel_core::verify::{run_all, KernelFault};
use qpmel_core::{Error, Result};

#[derive(Parser)]
#[command(name = "qpmel", about = "Quantum projective metric learning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder per the config; writes checkpoint and metrics log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override training.episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override master_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on the config's evaluation split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Override evaluation.episodes.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run the oracle-equivalence, factorization, gradient and periodicity
    /// suites; nonzero exit if any fail.
    Verify {
        /// Mutation hook: evaluate the kernel with the lambda_c^2 term
        /// negated; the suites must then fail.
        #[arg(long, hide = true)]
        inject_lambda_c_flip: bool,
    },
    /// Forward one sample through a checkpoint and write its encoding
    /// circuit as OpenQASM 2.0.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma- or space-separated feature values.
        #[arg(long, conflicts_with = "input")]
        features: Option<String>,
        /// File of whitespace-separated feature values.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output path; defaults to the config's output.qasm.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Run config supplying the default output path.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Download a file and verify its SHA-256 before keeping it.
    Fetch {
        #[arg(long)]
        url: String,
        #[arg(long)]
        sha256: String,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            episodes,
            seed,
        } => cmd_train(&config, episodes, seed),
        Command::Eval {
            config,
            checkpoint,
            episodes,
        } => cmd_eval(&config, &checkpoint, episodes),
        Command::Verify { inject_lambda_c_flip } => cmd_verify(inject_lambda_c_flip),
        Command::Export {
            checkpoint,
            features,
            input,
            output,
            config,
        } => cmd_export(
            &checkpoint,
            features.as_deref(),
            input.as_deref(),
            output.as_deref(),
            config.as_deref(),
        ),
        Command::Fetch { url, sha256, output } => fetch::fetch(&url, &sha256, &output),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_train(config: &Path, episodes: Option<usize>, seed: Option<u64>) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(e) = episodes {
        cfg.training.episodes = e;
    }
    let data = prepare_data(&cfg)?;
    let model = EncoderModel::init(&cfg.encoder.layer_dims, cfg.encoder.qubits, cfg.encoder_seed())?;

    let train_cfg = TrainConfig {
        n_way: cfg.training.n_way,
        k_shot: cfg.training.k_shot,
        q_queries: cfg.training.q_queries,
        episodes: cfg.training.episodes,
        learning_rate: cfg.training.learning_rate,
        temperature: cfg.training.temperature,
        seed: cfg.train_seed(),
        similarity: cfg.training.similarity.into(),
        metrics_path: cfg.output.metrics.clone(),
    };
    let (trained, metrics) = train(model, &data.train, &train_cfg)?;

    if let Some(parent) = cfg.output.checkpoint.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    trained.save_to(&cfg.output.checkpoint)?;
    println!("checkpoint: {}", cfg.output.checkpoint.display());
    if let Some(m) = &cfg.output.metrics {
        println!("metrics: {}", m.display());
    }
    if metrics.is_empty() {
        println!("final training accuracy: n/a (0 episodes)");
    } else {
        let tail = metrics.len().min(100);
        let acc: f64 =
            metrics[metrics.len() - tail..].iter().map(|m| m.accuracy).sum::<f64>() / tail as f64;
        println!("final training accuracy: {acc:.4} (mean of last {tail} episodes)");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(config: &Path, checkpoint: &Path, episodes: Option<usize>) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(e) = episodes {
        cfg.evaluation.episodes = e;
    }
    let model = EncoderModel::load_from(checkpoint)?;
    if model.num_qubits() != cfg.encoder.qubits {
        return Err(Error::Config(format!(
            "checkpoint has {} qubits but config says {}",
            model.num_qubits(),
            cfg.encoder.qubits
        )));
    }
    if model.layer_dims() != cfg.encoder.layer_dims {
        return Err(Error::Config(format!(
            "checkpoint layer dims {:?} differ from config {:?}",
            model.layer_dims(),
            cfg.encoder.layer_dims
        )));
    }
    let data = prepare_data(&cfg)?;
    let base = EvalConfig {
        n_way: cfg.evaluation.n_way.unwrap_or(cfg.training.n_way),
        k_shot: cfg.evaluation.k_shot.unwrap_or(cfg.training.k_shot),
        q_queries: cfg.evaluation.q_queries.unwrap_or(cfg.training.q_queries),
        episodes: cfg.evaluation.episodes,
        seed: cfg.eval_seed(),
        mode: EvalMode::Classical,
    };
    let classical = evaluate(&model, &data.test, &base)?;
    println!(
        "classical: {:.4} ± {:.4} ({} episodes)",
        classical.mean_accuracy, classical.ci95, base.episodes
    );
    if cfg.evaluation.mode == EvalModeChoice::Quantum {
        let quantum = evaluate(
            &model,
            &data.test,
            &EvalConfig {
                mode: EvalMode::Quantum {
                    shots: cfg.evaluation.shots,
                },
                ..base
            },
        )?;
        println!(
            "quantum ({} shots): {:.4} ± {:.4} ({} episodes)",
            cfg.evaluation.shots, quantum.mean_accuracy, quantum.ci95, base.episodes
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(inject: bool) -> Result<ExitCode> {
    let fault = if inject {
        KernelFault::FlipLambdaCSign
    } else {
        KernelFault::None
    };
    let reports = run_all(fault);
    let mut all_passed = true;
    for r in &reports {
        println!(
            "suite {}: {} — {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        all_passed &= r.passed;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_export(
    checkpoint: &Path,
    features: Option<&str>,
    input: Option<&std::path::Path>,
    output: Option<&std::path::Path>,
    config: Option<&std::path::Path>,
) -> Result<ExitCode> {
    let output: PathBuf = match (output, config) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(c)) => RunConfig::load(c)?.output.qasm.ok_or_else(|| {
            Error::Config("config has no output.qasm path for export".into())
        })?,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "provide --output or --config with an output.qasm path".into(),
            ))
        }
    };
    let model = EncoderModel::load_from(checkpoint)?;
    let raw: String = match (features, input) {
        (Some(f), None) => f.to_string(),
        (None, Some(path)) => std::fs::read_to_string(path)?,
        _ => {
            return Err(Error::InvalidArgument(
                "provide exactly one of --features or --input".into(),
            ))
        }
    };
    let values: Vec<f64> = raw
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad feature value {s:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "export sample",
            expected: model.input_dim(),
            found: values.len(),
        });
    }
    let (encoding, _) = model.forward(&values)?;
    let qasm = emit_qasm(&to_circuit(&encoding));
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&output, qasm)?;
    println!("qasm: {}", output.display());
    Ok(ExitCode::SUCCESS)
}
