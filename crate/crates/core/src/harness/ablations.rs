use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{write_atomic, Checkpoint};
use super::config::{ModelSelection, RunConfig};
use super::evaluate::{evaluate, EvalMode, MetricsFile};
use super::plots::{bar_chart_svg, line_chart_svg, write_csv, write_svg, Series};
use super::supervised::{supervised_scores, train_supervised, SupervisedConfig};
use super::train::{prepare_split, pretrain, Pretrained};
use super::HarnessError;
use crate::corpus::{Category, Dataset, Split};
use crate::evaluation::{
    auprc, embed_instances, fit_linear_probe, instance_labels, label_split, prompt_prototypes, zero_shot_scores, ProbeModel,
    PromptEnsemble, Task,
};
use crate::rng::{derive_seed, rng_for};
use crate::sampling::SamplingError;

const STREAM_LABELS: u64 = 21;
const STREAM_SUPERVISED: u64 = 22;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    write_atomic(path, serde_json::to_string_pretty(value).expect("serialisable").as_bytes())
}

pub(crate) fn checkpoint_of(cfg: &RunConfig, pre: Pretrained, data: &Dataset) -> Checkpoint {
    Checkpoint {
        config: cfg.clone(),
        scaler: pre.scaler,
        model: pre.model,
        manifest_hash: data.manifest().content_hash(),
    }
}

fn zero_shot_metrics(ckpt: &Checkpoint, data: &Dataset) -> Result<MetricsFile, HarnessError> {
    evaluate(ckpt, data, &[EvalMode::ZeroShot], &ckpt.content_hash())
}

// ---------------------------------------------------------------- window

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRun {
    pub window: usize,
    pub seed: u64,
    pub task: Task,
    pub auprc: f64,
    pub auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub auprc: MeanStd,
    pub auroc: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window: usize,
    pub n_runs: usize,
    pub tasks: BTreeMap<Task, TaskSummary>,
}

/// Test zero-shot metrics per window size, aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTable {
    pub rows: Vec<WindowRow>,
    pub runs: Vec<WindowRun>,
}

impl WindowTable {
    pub fn from_runs(sizes: &[usize], runs: Vec<WindowRun>) -> Self {
        let rows = sizes
            .iter()
            .map(|&w| {
                let mine: Vec<&WindowRun> = runs.iter().filter(|r| r.window == w).collect();
                let tasks: BTreeSet<Task> = mine.iter().map(|r| r.task).collect();
                let tasks = tasks
                    .into_iter()
                    .filter_map(|t| {
                        let pr: Vec<f64> = mine.iter().filter(|r| r.task == t).map(|r| r.auprc).collect();
                        let roc: Vec<f64> = mine.iter().filter(|r| r.task == t).map(|r| r.auroc).collect();
                        Some((
                            t,
                            TaskSummary {
                                auprc: MeanStd::of(&pr)?,
                                auroc: MeanStd::of(&roc)?,
                            },
                        ))
                    })
                    .collect();
                let seeds: BTreeSet<u64> = mine.iter().map(|r| r.seed).collect();
                WindowRow {
                    window: w,
                    n_runs: seeds.len(),
                    tasks,
                }
            })
            .collect();
        Self { rows, runs }
    }

    /// Markdown table, values in percent as `mean ± std`.
    pub fn to_markdown(&self) -> String {
        let tasks: BTreeSet<Task> = self.rows.iter().flat_map(|r| r.tasks.keys().copied()).collect();
        let mut out = String::from("| Window size (hours) |");
        for t in &tasks {
            out.push_str(&format!(" {t} AuPRC | {t} AuROC |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|---|".repeat(tasks.len()));
        out.push('\n');
        let pct = |m: &MeanStd| format!("{:.1} ± {:.1}", 100.0 * m.mean, 100.0 * m.std);
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.window));
            for t in &tasks {
                match row.tasks.get(t) {
                    Some(s) => out.push_str(&format!(" {} | {} |", pct(&s.auprc), pct(&s.auroc))),
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `window.json`, `window.md` and `window.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let json = dir.join("window.json");
        let md = dir.join("window.md");
        let csv = dir.join("window.csv");
        write_json(&json, self)?;
        write_atomic(&md, self.to_markdown().as_bytes())?;
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|r| vec![r.window.to_string(), r.seed.to_string(), r.task.to_string(), r.auprc.to_string(), r.auroc.to_string()])
            .collect();
        write_csv(&csv, &["window", "seed", "task", "auprc", "auroc"], &rows)?;
        Ok(vec![json, md, csv])
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        read_json(path)
    }
}

/// Pretrains one model per (window size, seed) with everything else fixed
/// and scores each on the test split. Seeds are `cfg.seed + 0..n_seeds`.
pub fn ablate_window(cfg: &RunConfig, data: &Dataset, sizes: &[usize], n_seeds: usize) -> Result<WindowTable, HarnessError> {
    if sizes.is_empty() || n_seeds == 0 {
        return Err(HarnessError::Config("window ablation needs at least one size and one seed".into()));
    }
    let mut runs = Vec::new();
    for &w in sizes {
        for s in 0..n_seeds as u64 {
            let mut run_cfg = cfg.clone();
            run_cfg.sampling.window = w;
            run_cfg.seed = cfg.seed + s;
            info!("window ablation: w={w}, seed={}", run_cfg.seed);
            let ckpt = checkpoint_of(&run_cfg, pretrain(&run_cfg, data)?, data);
            let metrics = zero_shot_metrics(&ckpt, data)?;
            for &task in &run_cfg.evaluation.tasks {
                let get = |m: &str| {
                    metrics
                        .get(task, EvalMode::ZeroShot, m)
                        .ok_or_else(|| HarnessError::Config(format!("missing {m} for {task}")))
                };
                runs.push(WindowRun {
                    window: w,
                    seed: run_cfg.seed,
                    task,
                    auprc: get("auprc")?,
                    auroc: get("auroc")?,
                });
            }
        }
    }
    Ok(WindowTable::from_runs(sizes, runs))
}

// ---------------------------------------------------------- reduced labels

/// Keeps `round(fraction * n_c)` randomly chosen instances of each class `c`.
/// Returns sorted indices, or `None` if either class would vanish.
pub fn stratified_subsample<R: Rng + ?Sized>(labels: &[bool], fraction: f64, rng: &mut R) -> Option<Vec<usize>> {
    let mut chosen = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let k = ((fraction * idx.len() as f64).round() as usize).min(idx.len());
        if k == 0 {
            return None;
        }
        let (picked, _) = idx.partial_shuffle(rng, k);
        chosen.extend_from_slice(picked);
    }
    chosen.sort_unstable();
    Some(chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRun {
    pub fraction: f64,
    pub seed: u64,
    /// Labelled training instances used; zero when the fraction was skipped.
    pub n_train: usize,
    pub probe_auprc: Option<f64>,
    pub supervised_auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub fraction: f64,
    pub probe: Option<MeanStd>,
    pub supervised: Option<MeanStd>,
}

/// Test AuPRC against the fraction of training labels used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCurve {
    pub task: Task,
    /// Needs no labels, so it is the same at every fraction.
    pub zero_shot_auprc: f64,
    pub rows: Vec<LabelRow>,
    pub runs: Vec<LabelRun>,
    /// Smallest fraction at which mean supervised AuPRC exceeds zero-shot.
    pub crossover: Option<f64>,
}

impl LabelCurve {
    pub fn row(&self, fraction: f64) -> Option<&LabelRow> {
        self.rows.iter().find(|r| r.fraction == fraction)
    }

    /// Writes `labels.json`, `labels.csv` and `labels.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let json = dir.join("labels.json");
        let csv = dir.join("labels.csv");
        let svg = dir.join("labels.svg");
        write_json(&json, self)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.fraction.to_string(),
                    self.zero_shot_auprc.to_string(),
                    opt(r.probe.map(|m| m.mean)),
                    opt(r.probe.map(|m| m.std)),
                    opt(r.supervised.map(|m| m.mean)),
                    opt(r.supervised.map(|m| m.std)),
                ]
            })
            .collect();
        write_csv(
            &csv,
            &["fraction", "zero_shot_auprc", "probe_mean", "probe_std", "supervised_mean", "supervised_std"],
            &rows,
        )?;
        let pct = |f: f64| 100.0 * f;
        let series = |name: &str, pick: &dyn Fn(&LabelRow) -> Option<f64>| Series {
            name: name.into(),
            points: self.rows.iter().filter_map(|r| Some((pct(r.fraction), pick(r)?))).collect(),
        };
        let lines = vec![
            series("supervised", &|r| r.supervised.map(|m| m.mean)),
            series("linear probe", &|r| r.probe.map(|m| m.mean)),
            series("zero-shot", &|_| Some(self.zero_shot_auprc)),
        ];
        let chart = line_chart_svg(
            &format!("{} AuPRC with reduced labels", self.task),
            "labels used (%)",
            "AuPRC",
            &lines,
            true,
            self.crossover.map(pct),
        );
        write_svg(&svg, &chart)?;
        Ok(vec![json, csv, svg])
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        read_json(path)
    }
}

/// Compares zero-shot, linear probes on a frozen checkpoint and supervised
/// models trained from scratch, as the labelled training set shrinks. All
/// fitting finishes before the test split is read.
pub fn ablate_reduced_labels(
    ckpt: &Checkpoint,
    data: &Dataset,
    task: Task,
    fractions: &[f64],
    n_seeds: usize,
    supervised: &SupervisedConfig,
) -> Result<LabelCurve, HarnessError> {
    if fractions.is_empty() || n_seeds == 0 {
        return Err(HarnessError::Config("label ablation needs at least one fraction and one seed".into()));
    }
    if let Some(f) = fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
        return Err(HarnessError::Config(format!("label fraction {f} outside (0, 1]")));
    }
    supervised.validate()?;
    let cfg = &ckpt.config;
    let window = cfg.sampling.window;
    let val = prepare_split(data, Split::Val, &ckpt.scaler)?;
    let val_inst = label_split(task, &val, window, &cfg.evaluation.labels);
    let train = prepare_split(data, Split::Train, &ckpt.scaler)?;
    let train_inst = label_split(task, &train, window, &cfg.evaluation.labels);
    let train_labels = instance_labels(&train_inst);
    let train_features = embed_instances(&ckpt.model, &train, &train_inst)?.features;

    struct Fitted {
        fraction: f64,
        seed: u64,
        n_train: usize,
        models: Option<(ProbeModel, super::supervised::SupervisedModel)>,
    }
    let mut fitted = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        for s in 0..n_seeds as u64 {
            let mut rng = rng_for(cfg.seed, &[STREAM_LABELS, fi as u64, s]);
            let Some(subset) = stratified_subsample(&train_labels, fraction, &mut rng) else {
                warn!("fraction {fraction}: a class has no instances left, skipping");
                fitted.push(Fitted {
                    fraction,
                    seed: s,
                    n_train: 0,
                    models: None,
                });
                continue;
            };
            let labels: Vec<bool> = subset.iter().map(|&i| train_labels[i]).collect();
            let probe = fit_linear_probe(train_features.select(Axis(0), &subset).view(), &labels, &cfg.evaluation.probe)?;
            let inst: Vec<_> = subset.iter().map(|&i| train_inst[i].clone()).collect();
            let sup_seed = derive_seed(cfg.seed, &[STREAM_SUPERVISED, fi as u64, s]);
            let run = train_supervised((&train, &inst), (&val, &val_inst), &cfg.encoder, &cfg.optimizer, supervised, sup_seed)?;
            info!(
                "fraction {fraction}, seed {s}: {} instances, supervised kept step {} of {}",
                subset.len(),
                run.best_step,
                run.steps
            );
            let model = run.model;
            fitted.push(Fitted {
                fraction,
                seed: s,
                n_train: subset.len(),
                models: Some((probe, model)),
            });
        }
    }

    let test = prepare_split(data, Split::Test, &ckpt.scaler)?;
    let test_inst = label_split(task, &test, window, &cfg.evaluation.labels);
    let test_labels = instance_labels(&test_inst);
    let test_emb = embed_instances(&ckpt.model, &test, &test_inst)?;
    let protos = prompt_prototypes(&ckpt.model, &cfg.encoder.provider(), &PromptEnsemble::default_for(task))?;
    let zero_shot_auprc = auprc(
        &zero_shot_scores(test_emb.h_s.view(), &protos, cfg.evaluation.zero_shot_temperature),
        &test_labels,
    )?;

    let mut runs = Vec::with_capacity(fitted.len());
    for f in fitted {
        let (probe_auprc, supervised_auprc) = match &f.models {
            Some((probe, model)) => (
                Some(auprc(&probe.predict(test_emb.features.view()), &test_labels)?),
                Some(auprc(&supervised_scores(model, &test, &test_inst)?, &test_labels)?),
            ),
            None => (None, None),
        };
        runs.push(LabelRun {
            fraction: f.fraction,
            seed: f.seed,
            n_train: f.n_train,
            probe_auprc,
            supervised_auprc,
        });
    }
    let rows: Vec<LabelRow> = fractions
        .iter()
        .map(|&fraction| {
            let mine = runs.iter().filter(|r| r.fraction == fraction);
            let probe: Vec<f64> = mine.clone().filter_map(|r| r.probe_auprc).collect();
            let sup: Vec<f64> = mine.filter_map(|r| r.supervised_auprc).collect();
            LabelRow {
                fraction,
                probe: MeanStd::of(&probe),
                supervised: MeanStd::of(&sup),
            }
        })
        .collect();
    let mut ascending: Vec<&LabelRow> = rows.iter().collect();
    ascending.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    let crossover = ascending
        .iter()
        .find(|r| r.supervised.is_some_and(|m| m.mean > zero_shot_auprc))
        .map(|r| r.fraction);
    Ok(LabelCurve {
        task,
        zero_shot_auprc,
        rows,
        runs,
        crossover,
    })
}

// ------------------------------------------------------------ note types

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteCandidate {
    pub removed: Category,
    /// Best validation zero-shot AuPRC on the target task; `None` when no
    /// pretraining data remained.
    pub val_auprc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteStep {
    /// Category removed to reach this step; `None` for the full set.
    pub removed: Option<Category>,
    pub categories: Vec<Category>,
    pub val_auprc: f64,
    /// Test zero-shot AuPRC per task for this category set.
    pub test_auprc: BTreeMap<Task, f64>,
    /// Every removal tried from the previous step.
    pub candidates: Vec<NoteCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteAblation {
    pub target: Task,
    pub steps: Vec<NoteStep>,
    /// Number of pretraining runs, including the full set.
    pub evaluated: usize,
}

impl NoteAblation {
    /// Categories in the order they were removed.
    pub fn removal_order(&self) -> Vec<Category> {
        self.steps.iter().filter_map(|s| s.removed).collect()
    }

    /// Writes `notes.json`, `notes.csv` and `notes.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let json = dir.join("notes.json");
        let csv = dir.join("notes.csv");
        let svg = dir.join("notes.svg");
        write_json(&json, self)?;
        let label = |s: &NoteStep| match s.removed {
            None => "all".to_string(),
            Some(c) => format!("-{c}"),
        };
        let tasks: BTreeSet<Task> = self.steps.iter().flat_map(|s| s.test_auprc.keys().copied()).collect();
        let rows: Vec<Vec<String>> = self
            .steps
            .iter()
            .flat_map(|s| {
                s.test_auprc.iter().map(move |(t, v)| {
                    let cats: Vec<&str> = s.categories.iter().map(|c| c.as_str()).collect();
                    vec![label(s), cats.join(";"), s.val_auprc.to_string(), t.to_string(), v.to_string()]
                })
            })
            .collect();
        write_csv(&csv, &["step", "categories", "val_auprc", "task", "test_auprc"], &rows)?;
        let groups: Vec<String> = self.steps.iter().map(label).collect();
        let series: Vec<(String, Vec<Option<f64>>)> = tasks
            .iter()
            .map(|t| (t.to_string(), self.steps.iter().map(|s| s.test_auprc.get(t).copied()).collect()))
            .collect();
        let chart = bar_chart_svg(
            &format!("Zero-shot AuPRC, note types removed greedily by {} AuPRC", self.target),
            "AuPRC",
            &groups,
            &series,
        );
        write_svg(&svg, &chart)?;
        Ok(vec![json, csv, svg])
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        read_json(path)
    }
}

/// Categories with at least one training note, restricted to `cfg`'s
/// allowed set.
pub fn present_categories(cfg: &RunConfig, data: &Dataset) -> Result<Vec<Category>, HarnessError> {
    let allowed = cfg.allowed_categories();
    let present: BTreeSet<Category> = data
        .split(Split::Train)?
        .iter()
        .flat_map(|s| s.notes.iter().map(|n| n.category))
        .filter(|c| allowed.contains(c))
        .collect();
    Ok(present.into_iter().collect())
}

/// Pretrains on `cats` with validation early stopping on `target`. Returns
/// `None` when the categories leave nothing to train on.
fn pretrain_on(cfg: &RunConfig, data: &Dataset, cats: &[Category], target: Task) -> Result<Option<(f64, Checkpoint)>, HarnessError> {
    let mut run_cfg = cfg.clone();
    run_cfg.categories = Some(cats.to_vec());
    run_cfg.validate_each_epoch = true;
    run_cfg.model_selection = ModelSelection::BestValidation {
        tasks: vec![target],
        patience: cfg.ablation.note_patience,
    };
    let pre = match pretrain(&run_cfg, data) {
        Ok(p) => p,
        Err(HarnessError::Sampling(SamplingError::NoAllowedNotes | SamplingError::TooFewNotes(_))) => return Ok(None),
        Err(e) => return Err(e),
    };
    let val = pre.epochs[pre.selected_epoch - 1]
        .val_auprc
        .get(&target)
        .copied()
        .unwrap_or(f64::NEG_INFINITY);
    Ok(Some((val, checkpoint_of(&run_cfg, pre, data))))
}

fn test_auprc(ckpt: &Checkpoint, data: &Dataset) -> Result<BTreeMap<Task, f64>, HarnessError> {
    let metrics = zero_shot_metrics(ckpt, data)?;
    Ok(metrics
        .records
        .iter()
        .filter(|r| r.metric == "auprc")
        .map(|r| (r.task, r.value))
        .collect())
}

/// Greedy backward elimination of note categories. Each round tries dropping
/// every remaining category, keeps the drop with the best validation
/// zero-shot AuPRC on `target`, and stops at one category or when no
/// pretraining data would remain.
pub fn ablate_note_types(cfg: &RunConfig, data: &Dataset, target: Task) -> Result<NoteAblation, HarnessError> {
    let mut current = present_categories(cfg, data)?;
    if current.len() < 2 {
        return Err(HarnessError::Config(format!(
            "note-type ablation needs at least 2 categories with training notes, found {}",
            current.len()
        )));
    }
    let Some((val, ckpt)) = pretrain_on(cfg, data, &current, target)? else {
        return Err(HarnessError::Config("no pretraining data for the full category set".into()));
    };
    let mut steps = vec![NoteStep {
        removed: None,
        categories: current.clone(),
        val_auprc: val,
        test_auprc: test_auprc(&ckpt, data)?,
        candidates: Vec::new(),
    }];
    let mut evaluated = 1;
    while current.len() > 1 {
        let mut candidates = Vec::new();
        let mut best: Option<(f64, Category, Checkpoint)> = None;
        for &c in &current {
            let rest: Vec<Category> = current.iter().copied().filter(|&x| x != c).collect();
            info!("note ablation: trying without {c}");
            let outcome = pretrain_on(cfg, data, &rest, target)?;
            evaluated += 1;
            candidates.push(NoteCandidate {
                removed: c,
                val_auprc: outcome.as_ref().map(|(v, _)| *v),
            });
            if let Some((v, ck)) = outcome {
                if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                    best = Some((v, c, ck));
                }
            }
        }
        let Some((val, removed, ckpt)) = best else {
            info!("note ablation: no candidate has pretraining data left");
            break;
        };
        current.retain(|&x| x != removed);
        steps.push(NoteStep {
            removed: Some(removed),
            categories: current.clone(),
            val_auprc: val,
            test_auprc: test_auprc(&ckpt, data)?,
            candidates,
        });
    }
    Ok(NoteAblation {
        target,
        steps,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_uses_population_convention() {
        let m = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn stratified_subsample_keeps_class_shares() {
        let labels: Vec<bool> = (0..200).map(|i| i % 10 == 0).collect();
        let mut rng = rng_for(0, &[]);
        let s = stratified_subsample(&labels, 0.5, &mut rng).unwrap();
        assert_eq!(s.iter().filter(|&&i| labels[i]).count(), 10);
        assert_eq!(s.len(), 100);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(stratified_subsample(&labels, 1.0, &mut rng).unwrap(), (0..200).collect::<Vec<_>>());
        assert!(stratified_subsample(&labels, 0.01, &mut rng).is_none());
    }

    #[test]
    fn window_table_aggregates_and_round_trips() {
        let run = |w, seed, auprc| WindowRun {
            window: w,
            seed,
            task: Task::Mortality,
            auprc,
            auroc: 0.5,
        };
        let t = WindowTable::from_runs(&[8], vec![run(8, 0, 0.2), run(8, 1, 0.4)]);
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].n_runs, 2);
        let s = &t.rows[0].tasks[&Task::Mortality];
        assert!((s.auprc.mean - 0.3).abs() < 1e-15 && (s.auprc.std - 0.1).abs() < 1e-15);
        assert!(t.to_markdown().contains("30.0 ± 10.0"));
        let dir = tempfile::tempdir().unwrap();
        t.write(dir.path()).unwrap();
        assert_eq!(WindowTable::read(&dir.path().join("window.json")).unwrap(), t);
    }
}
