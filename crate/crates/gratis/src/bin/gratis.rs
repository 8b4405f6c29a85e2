//! Command-line driver: dataset generation, training, evaluation, batch
//! enhancement, and gradient checking, all bound to a `key = value`
//! configuration file. Exit codes: 0 success, 1 validation failure, 2 I/O
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gratis::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use gratis::config::{ConfigError, RunConfig, TaskFamily, KEYS};
use gratis::dataset_io::{read_dataset, write_dataset, DatasetIoError};
use gratis::gradcheck::grad_check;
use gratis::graph::TaskLabels;
use gratis::params::Params;
use gratis::pipeline::{
    enhance, evaluate, forward, train_full, train_nongraph_two_phase, EpochLog, InputKind,
    Mode,
};
use gratis::train::{cross_entropy, AdamW};
use gratis::Error;

#[derive(Parser)]
#[command(name = "gratis", about = "Task-specific graph representation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// configuration file (`key = value` lines); defaults apply when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// override the configured random seed
    #[arg(long)]
    seed: Option<u64>,
    /// override the configured output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// checkpoint path; defaults to `<out>/model.grts`
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train and eval dataset files for the configured task
    Gen(Common),
    /// Train the configured pipeline and write a checkpoint
    Train(Common),
    /// Evaluate a checkpoint and report metrics
    Eval(Common),
    /// Write the task-specific graph representation of a dataset
    Enhance {
        #[command(flatten)]
        common: Common,
        /// dataset to enhance; defaults to the configured eval data
        data: Option<PathBuf>,
    },
    /// Check analytic gradients of the full pipeline on a small sample
    Gradcheck(Common),
    /// List every configuration key with its default and meaning
    Keys,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.cmd {
        Cmd::Gen(c) => cmd_gen(c).map(|_| true),
        Cmd::Train(c) => cmd_train(c).map(|_| true),
        Cmd::Eval(c) => cmd_eval(c).map(|_| true),
        Cmd::Enhance { common, data } => cmd_enhance(common, data.as_deref()).map(|_| true),
        Cmd::Gradcheck(c) => cmd_gradcheck(c),
        Cmd::Keys => {
            for (key, default, doc) in KEYS {
                println!("{key:24} {default:18} {doc}");
            }
            return ExitCode::SUCCESS;
        }
    };
    match run {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for I/O failures (missing files, unreadable paths), 1 otherwise.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DatasetIo(DatasetIoError::Io { .. })
        | Error::Checkpoint(CheckpointError::Io { .. })
        | Error::Config(ConfigError::Io { .. }) => 2,
        _ => 1,
    }
}

fn load_config(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::parse_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out = out.display().to_string();
    }
    Ok(cfg)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    DatasetIoError::Io {
        path: path.display().to_string(),
        source,
    }
    .into()
}

fn train_path(cfg: &RunConfig) -> PathBuf {
    if cfg.train_data.is_empty() {
        Path::new(&cfg.out).join("train.jsonl")
    } else {
        PathBuf::from(&cfg.train_data)
    }
}

fn eval_path(cfg: &RunConfig) -> PathBuf {
    if cfg.eval_data.is_empty() {
        Path::new(&cfg.out).join("eval.jsonl")
    } else {
        PathBuf::from(&cfg.eval_data)
    }
}

fn checkpoint_path(c: &Common, cfg: &RunConfig) -> PathBuf {
    c.checkpoint
        .clone()
        .unwrap_or_else(|| Path::new(&cfg.out).join("model.grts"))
}

fn print_logs(logs: &[EpochLog]) {
    for l in logs {
        println!("{}, {}, {}, {}", l.epoch, l.split, l.metric, l.value);
    }
}

fn cmd_gen(c: &Common) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let out = Path::new(&cfg.out);
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let train = cfg.generate(cfg.seed, cfg.data_n_samples);
    let eval = cfg.generate(cfg.seed.wrapping_add(1), (cfg.data_n_samples / 4).max(1));
    let tp = train_path(&cfg);
    let ep = eval_path(&cfg);
    write_dataset(&train, &tp)?;
    write_dataset(&eval, &ep)?;
    println!("wrote {} samples to {}", train.len(), tp.display());
    println!("wrote {} samples to {}", eval.len(), ep.display());
    Ok(())
}

fn cmd_train(c: &Common) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let data = read_dataset(&train_path(&cfg))?;
    let pcfg = cfg.pipeline_config();
    let tcfg = cfg.train_config();
    let mut params = pcfg.init_params(cfg.seed);
    let mut opt = AdamW::new(tcfg.lr, tcfg.weight_decay);
    let logs = match pcfg.input_kind {
        InputKind::Graph => train_full(&pcfg, &tcfg, &data, &mut params, &mut opt)?,
        InputKind::VectorSet => {
            train_nongraph_two_phase(&pcfg, &tcfg, &data, &mut params, &mut opt)?
        }
    };
    print_logs(&logs);
    let out = Path::new(&cfg.out);
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let log_path = out.join("metrics.log");
    let mut text = String::new();
    for l in &logs {
        text.push_str(&format!("{}, {}, {}, {}\n", l.epoch, l.split, l.metric, l.value));
    }
    std::fs::write(&log_path, text).map_err(|e| io_err(&log_path, e))?;
    let ckpt = checkpoint_path(c, &cfg);
    save_checkpoint(&ckpt, &params, Some(&opt))?;
    println!("checkpoint written to {}", ckpt.display());
    Ok(())
}

fn load_trained(c: &Common, cfg: &RunConfig) -> Result<Params, Error> {
    let pcfg = cfg.pipeline_config();
    let mut params = pcfg.init_params(cfg.seed);
    load_checkpoint(checkpoint_path(c, cfg), &mut params, None)?;
    Ok(params)
}

fn cmd_eval(c: &Common) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let data = read_dataset(&eval_path(&cfg))?;
    let pcfg = cfg.pipeline_config();
    let params = load_trained(c, &cfg)?;
    let outcome = evaluate(&pcfg, &params, &data, cfg.hits_k)?;
    let epoch = cfg.epochs.saturating_sub(1);
    println!("{epoch}, eval, loss, {}", outcome.loss);
    println!("{epoch}, eval, accuracy, {}", outcome.report.accuracy);
    println!("{epoch}, eval, macro_f1, {}", outcome.report.macro_f1);
    println!("{epoch}, eval, uar, {}", outcome.report.uar);
    if let Some(h) = outcome.report.hits_at_k {
        println!("{epoch}, eval, hits@{}, {h}", cfg.hits_k);
    }
    Ok(())
}

fn cmd_enhance(c: &Common, data: Option<&Path>) -> Result<(), Error> {
    let cfg = load_config(c)?;
    let src = data.map(PathBuf::from).unwrap_or_else(|| eval_path(&cfg));
    let samples = read_dataset(&src)?;
    let pcfg = cfg.pipeline_config();
    let params = load_trained(c, &cfg)?;
    let enhanced = samples
        .iter()
        .map(|s| enhance(&params, &pcfg, s))
        .collect::<Result<Vec<_>, _>>()?;
    let out = Path::new(&cfg.out);
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let dst = out.join("enhanced.jsonl");
    write_dataset(&enhanced, &dst)?;
    println!("wrote {} enhanced samples to {}", enhanced.len(), dst.display());
    Ok(())
}

fn cmd_gradcheck(c: &Common) -> Result<bool, Error> {
    let mut cfg = load_config(c)?;
    // Canonical instance: the link family routes every parameter group
    // (backbone, topology, edge features, predictor, head) directly into
    // the loss, so no gradient element sits below the finite-difference
    // noise floor. Vertex/graph tasks leave the attention parameters with
    // gradients ~1e-11, where central differences at this step size measure
    // only rounding noise. The seed keeps the instance away from the
    // topology-threshold boundary.
    cfg.task = TaskFamily::BinaryLinks;
    cfg.data_n_vertices = 6;
    if c.seed.is_none() {
        cfg.seed = 1;
    }
    let sample = cfg.generate(cfg.seed, 1).remove(0);
    let labels = match &sample.labels {
        TaskLabels::GraphClass(l) => vec![*l],
        TaskLabels::VertexClass(v) => v.clone(),
        TaskLabels::LinkClass(m) => m.values().copied().collect(),
    };
    let pcfg = cfg.pipeline_config();
    let mut params = pcfg.init_params(cfg.seed);
    let report = grad_check(
        |tape, bound, p| {
            let (logits, _) = forward(tape, bound, p, &pcfg, &sample, Mode::Train)?;
            cross_entropy(tape, logits, &labels, None)
        },
        &mut params,
        1e-5,
    )?;
    for (name, err) in &report.per_param {
        println!("{name}: {err:.3e}");
    }
    println!("max relative error: {:.3e}", report.max_rel_error());
    if !report.nan_elements.is_empty() {
        eprintln!("NaN gradients at {:?}", report.nan_elements);
    }
    let pass = report.max_rel_error() <= 1e-4 && report.nan_elements.is_empty();
    println!("gradcheck: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}
