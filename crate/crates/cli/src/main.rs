//! `mmncl`: generate data, pretrain, evaluate and run the ablations.
//!
//! Every subcommand prints one JSON summary line on stdout. Failures print
//! one JSON line `{"error": {...}}` on stderr and exit nonzero.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use mmncl_core::corpus::{generate_synthetic, Dataset};
use mmncl_core::evaluation::Task;
use mmncl_core::harness::{
    ablate_note_types, ablate_reduced_labels, ablate_window, evaluate, pretrain, Checkpoint, EvalMode, EpochLog,
    HarnessError, RunConfig, RunRecord, RunRegistry,
};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "mmncl", version, about = "Multi-modal neighborhood contrastive learning on vitals and notes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run config; keys it leaves out take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (for `generate`, the data seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Start from the full-size defaults instead of the desk-scale ones.
    #[arg(long)]
    full_scale: bool,
    /// Worker threads; 1 gives single-threaded execution.
    #[arg(long)]
    threads: Option<usize>,
    /// Dataset directory, overriding `data.path`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic dataset described by the config.
    Generate(Common),
    /// Contrastive pretraining; writes a checkpoint.
    Pretrain(Common),
    /// Test-split metrics of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated subset of `probe,zero_shot`.
        #[arg(long, value_delimiter = ',', default_value = "probe,zero_shot")]
        modes: Vec<EvalMode>,
    },
    /// Zero-shot metrics for several window sizes.
    AblateWindow(Common),
    /// Zero-shot, probe and supervised AuPRC with reduced training labels.
    AblateLabels {
        #[command(flatten)]
        common: Common,
        /// Frozen checkpoint to probe; pretrains one first when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Greedy removal of note categories.
    AblateNotes {
        #[command(flatten)]
        common: Common,
        /// Task whose validation AuPRC drives the selection.
        #[arg(long)]
        task: Option<Task>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Pretrain(_) => "pretrain",
            Command::Evaluate { .. } => "evaluate",
            Command::AblateWindow(_) => "ablate-window",
            Command::AblateLabels { .. } => "ablate-labels",
            Command::AblateNotes { .. } => "ablate-notes",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate(c) | Command::Pretrain(c) | Command::AblateWindow(c) => c,
            Command::Evaluate { common, .. } | Command::AblateLabels { common, .. } | Command::AblateNotes { common, .. } => common,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let line = json!({"error": {"kind": "usage", "message": e.to_string().trim_end()}});
            eprintln!("{line}");
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let mut err = json!({"kind": e.kind(), "command": cli.command.name(), "message": e.to_string()});
            if let HarnessError::NonFiniteLoss { indices, .. } = &e {
                err["batch_indices"] = json!(indices);
            }
            eprintln!("{}", json!({ "error": err }));
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: &Command) -> Result<Value, HarnessError> {
    let common = cmd.common();
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&common.out).map_err(|e| HarnessError::io(&common.out, e))?;
    match cmd {
        Command::Generate(c) => generate(c),
        Command::Pretrain(c) => run_pretrain(c),
        Command::Evaluate { common, checkpoint, modes } => run_evaluate(common, checkpoint, modes),
        Command::AblateWindow(c) => run_ablate_window(c),
        Command::AblateLabels { common, checkpoint } => run_ablate_labels(common, checkpoint.as_deref()),
        Command::AblateNotes { common, task } => run_ablate_notes(common, *task),
    }
}

fn load_config(c: &Common) -> Result<RunConfig, HarnessError> {
    let base = if c.full_scale {
        RunConfig::full_scale()
    } else {
        RunConfig::default()
    };
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load_over(&base, path)?,
        None => base,
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &c.data {
        cfg.data.path = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_data(cfg: &RunConfig) -> Result<Dataset, HarnessError> {
    mmncl_core::harness::load_dataset(cfg)
}

fn register(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    epochs: Vec<EpochLog>,
    selected_epoch: Option<usize>,
    checkpoint_paths: Vec<PathBuf>,
    output_paths: Vec<PathBuf>,
    started: Instant,
) -> Result<String, HarnessError> {
    let registry = RunRegistry::in_dir(out);
    let run_id = registry.next_id(command)?;
    registry.append(&RunRecord {
        run_id: run_id.clone(),
        command: command.into(),
        seed: cfg.seed,
        config: cfg.clone(),
        epochs,
        selected_epoch,
        checkpoint_paths,
        output_paths,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })?;
    Ok(run_id)
}

fn generate(c: &Common) -> Result<Value, HarnessError> {
    let mut cfg = load_config(c)?;
    if let Some(seed) = c.seed {
        cfg.data.synth_seed = seed;
    }
    let data = generate_synthetic(&cfg.data.synth, cfg.data.synth_seed)?.into_dataset();
    data.write(&c.out)?;
    info!("wrote synthetic dataset to {}", c.out.display());
    Ok(json!({"dataset": c.out, "manifest_hash": data.manifest().content_hash()}))
}

fn pretrain_and_save(cfg: &RunConfig, data: &Dataset, out: &Path) -> Result<(Checkpoint, PathBuf, Vec<EpochLog>, usize), HarnessError> {
    let pre = pretrain(cfg, data)?;
    let epochs = pre.epochs.clone();
    let selected = pre.selected_epoch;
    let ckpt = Checkpoint {
        config: cfg.clone(),
        scaler: pre.scaler,
        model: pre.model,
        manifest_hash: data.manifest().content_hash(),
    };
    let path = out.join("checkpoint.mmncl");
    ckpt.save(&path)?;
    info!("saved checkpoint to {}", path.display());
    Ok((ckpt, path, epochs, selected))
}

fn run_pretrain(c: &Common) -> Result<Value, HarnessError> {
    let started = Instant::now();
    let cfg = load_config(c)?;
    let data = open_data(&cfg)?;
    let (ckpt, path, epochs, selected) = pretrain_and_save(&cfg, &data, &c.out)?;
    let final_loss = epochs.last().map(|e| e.train_loss);
    let run_id = register(&c.out, "pretrain", &cfg, epochs, Some(selected), vec![path.clone()], Vec::new(), started)?;
    Ok(json!({
        "run_id": run_id,
        "checkpoint": path,
        "checkpoint_hash": ckpt.content_hash(),
        "final_train_loss": final_loss,
        "selected_epoch": selected,
    }))
}

fn run_evaluate(c: &Common, checkpoint: &Path, modes: &[EvalMode]) -> Result<Value, HarnessError> {
    let started = Instant::now();
    let mut ckpt = Checkpoint::load(checkpoint)?;
    let hash = ckpt.content_hash();
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load_over(&ckpt.config, path)?,
        None => ckpt.config.clone(),
    };
    if cfg.encoder != ckpt.config.encoder {
        return Err(HarnessError::Config("the encoder section cannot differ from the checkpoint's".into()));
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &c.data {
        cfg.data.path = Some(dir.clone());
    }
    ckpt.config = cfg.clone();
    let data = open_data(&cfg)?;
    if data.manifest().content_hash() != ckpt.manifest_hash {
        log::warn!("dataset manifest differs from the one the checkpoint was trained on");
    }
    let metrics = evaluate(&ckpt, &data, modes, &hash)?;
    let path = c.out.join("metrics.json");
    metrics.write(&path)?;
    let run_id = register(&c.out, "evaluate", &cfg, Vec::new(), None, vec![checkpoint.to_path_buf()], vec![path.clone()], started)?;
    Ok(json!({"run_id": run_id, "metrics": path, "records": metrics.records}))
}

fn run_ablate_window(c: &Common) -> Result<Value, HarnessError> {
    let started = Instant::now();
    let cfg = load_config(c)?;
    let data = open_data(&cfg)?;
    let table = ablate_window(&cfg, &data, &cfg.ablation.window_sizes, cfg.ablation.n_seeds)?;
    let outputs = table.write(&c.out)?;
    let run_id = register(&c.out, "ablate-window", &cfg, Vec::new(), None, Vec::new(), outputs.clone(), started)?;
    Ok(json!({"run_id": run_id, "outputs": outputs}))
}

fn run_ablate_labels(c: &Common, checkpoint: Option<&Path>) -> Result<Value, HarnessError> {
    let started = Instant::now();
    let cfg = load_config(c)?;
    let data = open_data(&cfg)?;
    let (ckpt, ckpt_path, epochs) = match checkpoint {
        Some(p) => (Checkpoint::load(p)?, p.to_path_buf(), Vec::new()),
        None => {
            let (ck, p, epochs, _) = pretrain_and_save(&cfg, &data, &c.out)?;
            (ck, p, epochs)
        }
    };
    let a = &cfg.ablation;
    let curve = ablate_reduced_labels(&ckpt, &data, a.label_task, &a.label_fractions, a.n_seeds, &a.supervised)?;
    let outputs = curve.write(&c.out)?;
    let run_id = register(&c.out, "ablate-labels", &cfg, epochs, None, vec![ckpt_path], outputs.clone(), started)?;
    Ok(json!({
        "run_id": run_id,
        "zero_shot_auprc": curve.zero_shot_auprc,
        "crossover": curve.crossover,
        "outputs": outputs,
    }))
}

fn run_ablate_notes(c: &Common, task: Option<Task>) -> Result<Value, HarnessError> {
    let started = Instant::now();
    let cfg = load_config(c)?;
    let data = open_data(&cfg)?;
    let target = task.unwrap_or(cfg.ablation.note_task);
    let result = ablate_note_types(&cfg, &data, target)?;
    let outputs = result.write(&c.out)?;
    let run_id = register(&c.out, "ablate-notes", &cfg, Vec::new(), None, Vec::new(), outputs.clone(), started)?;
    let order: Vec<&str> = result.removal_order().iter().map(|c| c.as_str()).collect();
    Ok(json!({"run_id": run_id, "removal_order": order, "evaluated": result.evaluated, "outputs": outputs}))
}
