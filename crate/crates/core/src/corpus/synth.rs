//! Synthetic paired vitals/notes generator.
//!
//! Every stay follows a latent severity walk `s_t` in `[0, 1]`. Informative
//! vital signs respond affinely to `s_t`; the remaining variables are
//! stay-specific AR(1) processes unrelated to outcome. Death happens once
//! severity stays above a threshold for a sustained run. Notes are sparse
//! events whose vocabulary tilts towards a "deteriorating" pool as severity
//! rises, weighted per category by `note_signal`.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Category, ClinicalNote, CorpusError, Dataset, Manifest, PatientStay, Split, StayId, VitalsSeries, DATASET_FORMAT};
use crate::rng::derive_seed;

const BENCHMARK_VARIABLES: [&str; 17] = [
    "capillary_refill_rate",
    "diastolic_blood_pressure",
    "fraction_inspired_oxygen",
    "glasgow_coma_scale_eye",
    "glasgow_coma_scale_motor",
    "glasgow_coma_scale_total",
    "glasgow_coma_scale_verbal",
    "glucose",
    "heart_rate",
    "height",
    "mean_blood_pressure",
    "oxygen_saturation",
    "respiratory_rate",
    "systolic_blood_pressure",
    "temperature",
    "weight",
    "ph",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeverityDynamics {
    pub initial_low: f64,
    pub initial_high: f64,
    /// Fraction of stays whose severity drifts upwards.
    pub deteriorating_fraction: f64,
    /// Mean hourly drift of deteriorating stays.
    pub deteriorating_drift: f64,
    /// Mean hourly drift of all other stays (usually negative).
    pub recovering_drift: f64,
    pub drift_sd: f64,
    pub volatility: f64,
    pub death_threshold: f64,
    /// Consecutive hours above threshold before death.
    pub death_run: usize,
}

impl Default for SeverityDynamics {
    fn default() -> Self {
        Self {
            initial_low: 0.1,
            initial_high: 0.6,
            deteriorating_fraction: 0.3,
            deteriorating_drift: 0.012,
            recovering_drift: -0.006,
            drift_sd: 0.004,
            volatility: 0.03,
            death_threshold: 0.85,
            death_run: 4,
        }
    }
}

/// Word pools for note text. Entries may be multi-word phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextVocabulary {
    pub deteriorating: Vec<String>,
    pub stable: Vec<String>,
    pub filler: Vec<String>,
}

fn strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for TextVocabulary {
    fn default() -> Self {
        Self {
            deteriorating: strings(&[
                "unstable",
                "hypotensive",
                "dnr",
                "expired",
                "deceased",
                "died",
                "withdrawn",
                "critical",
                "worsening",
                "pressors",
                "passed away",
                "comfort measures",
            ]),
            stable: strings(&[
                "stable",
                "discharged",
                "survived",
                "improving",
                "ambulating",
                "extubated",
                "tolerating diet",
                "alert",
                "recovering",
                "afebrile",
            ]),
            filler: strings(&[
                "patient", "condition", "noted", "plan", "continue", "monitor", "today", "overnight", "family",
                "care", "team", "reviewed",
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub d_v: usize,
    /// Number of leading variables that respond to severity.
    pub n_informative: usize,
    pub min_stay_hours: usize,
    pub max_stay_hours: usize,
    pub missing_rate: f64,
    /// Observation noise of informative variables, in units of their gain.
    pub vitals_noise: f64,
    /// Expected notes per 24 hours, per category. Absent categories never occur.
    pub note_rates: BTreeMap<Category, f64>,
    /// How strongly a category's vocabulary tracks severity, in `[0, 1]`.
    /// Categories not listed default to 1.
    pub note_signal: BTreeMap<Category, f64>,
    pub signal_words: usize,
    pub filler_words: usize,
    /// Slope of the logistic map from severity to P(deteriorating word).
    pub text_sharpness: f64,
    pub severity: SeverityDynamics,
    pub vocabulary: TextVocabulary,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let note_rates = [
            (Category::DischargeSummary, 0.05),
            (Category::Ecg, 0.2),
            (Category::Echo, 0.1),
            (Category::General, 0.1),
            (Category::Nursing, 0.5),
            (Category::NursingOther, 1.2),
            (Category::Nutrition, 0.1),
            (Category::Physician, 0.5),
            (Category::Radiology, 1.2),
            (Category::Respiratory, 0.3),
        ]
        .into_iter()
        .collect();
        Self {
            n_train: 500,
            n_val: 100,
            n_test: 100,
            d_v: 17,
            n_informative: 8,
            min_stay_hours: 24,
            max_stay_hours: 144,
            missing_rate: 0.3,
            vitals_noise: 2.0,
            note_rates,
            note_signal: BTreeMap::new(),
            signal_words: 4,
            filler_words: 3,
            text_sharpness: 8.0,
            severity: SeverityDynamics::default(),
            vocabulary: TextVocabulary::default(),
        }
    }
}

impl SynthConfig {
    /// Two-category corpus: `signal` notes track severity, `noise` notes draw
    /// the same vocabulary independently of it.
    pub fn signal_noise_pair(signal: Category, noise: Category, rate_per_day: f64) -> Self {
        Self {
            note_rates: [(signal, rate_per_day), (noise, rate_per_day)].into_iter().collect(),
            note_signal: [(signal, 1.0), (noise, 0.0)].into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Config(m));
        if self.d_v < 1 {
            return bad("d_v must be at least 1".into());
        }
        if self.n_informative > self.d_v {
            return bad(format!("n_informative {} exceeds d_v {}", self.n_informative, self.d_v));
        }
        if self.min_stay_hours < 1 || self.max_stay_hours < self.min_stay_hours {
            return bad("need 1 <= min_stay_hours <= max_stay_hours".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate {} outside [0, 1)", self.missing_rate));
        }
        if !(self.vitals_noise >= 0.0) {
            return bad("vitals_noise must be non-negative".into());
        }
        for (c, &r) in &self.note_rates {
            if !(r >= 0.0) || !r.is_finite() {
                return bad(format!("note rate for {c} must be a non-negative number"));
            }
        }
        for (c, &s) in &self.note_signal {
            if !(0.0..=1.0).contains(&s) {
                return bad(format!("note_signal for {c} outside [0, 1]"));
            }
        }
        let sev = &self.severity;
        if !(0.0..=1.0).contains(&sev.initial_low) || !(sev.initial_low..=1.0).contains(&sev.initial_high) {
            return bad("need 0 <= initial_low <= initial_high <= 1".into());
        }
        if !(0.0..=1.0).contains(&sev.deteriorating_fraction) {
            return bad("deteriorating_fraction outside [0, 1]".into());
        }
        if sev.drift_sd < 0.0 || sev.volatility < 0.0 {
            return bad("drift_sd and volatility must be non-negative".into());
        }
        if sev.death_run < 1 {
            return bad("death_run must be at least 1".into());
        }
        let v = &self.vocabulary;
        if v.deteriorating.is_empty() || v.stable.is_empty() {
            return bad("vocabulary pools must be non-empty".into());
        }
        Ok(())
    }

    pub fn variable_names(&self) -> Vec<String> {
        (0..self.d_v)
            .map(|k| match BENCHMARK_VARIABLES.get(k) {
                Some(name) => name.to_string(),
                None => format!("var_{}", k + 1),
            })
            .collect()
    }

    fn total_rate_per_hour(&self) -> f64 {
        self.note_rates.values().sum::<f64>() / 24.0
    }

    /// Nominal notes per stay: total note rate times the midpoint stay length.
    pub fn target_notes_per_stay(&self) -> f64 {
        self.total_rate_per_hour() * (self.min_stay_hours + self.max_stay_hours) as f64 / 2.0
    }

    fn n_stays(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: Manifest,
    pub splits: BTreeMap<Split, Vec<PatientStay>>,
}

impl SyntheticDataset {
    pub fn into_dataset(self) -> Dataset {
        Dataset::in_memory(self.manifest, self.splits)
    }
}

struct VariableSpec {
    base: f64,
    scale: f64,
    /// Response to unit severity, in units of `scale`.
    gain: f64,
}

fn variable_specs(cfg: &SynthConfig, seed: u64) -> Vec<VariableSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x7661_7273]));
    (0..cfg.d_v)
        .map(|k| {
            let base = rng.random_range(20.0..150.0);
            let scale = rng.random_range(2.0..15.0);
            let gain = if k < cfg.n_informative {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * rng.random_range(2.5..4.5)
            } else {
                0.0
            };
            VariableSpec { base, scale, gain }
        })
        .collect()
}

/// Generates train/val/test splits. Output depends only on `(cfg, seed)`;
/// each stay has its own sub-seed so the result is independent of threading.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SyntheticDataset, CorpusError> {
    cfg.validate()?;
    let specs = variable_specs(cfg, seed);
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let stays: Vec<PatientStay> = (0..cfg.n_stays(split))
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[split as u64 + 1, i as u64]));
                let id = StayId(format!("{}-{:05}", split.as_str(), i));
                generate_stay(cfg, &specs, id, &mut rng)
            })
            .collect::<Result<_, _>>()?;
        splits.insert(split, stays);
    }
    let manifest = Manifest {
        format: DATASET_FORMAT.to_string(),
        splits: Split::ALL.to_vec(),
        d_v: cfg.d_v,
        variable_names: cfg.variable_names(),
        seed: Some(seed),
        generator: Some(cfg.clone()),
    };
    Ok(SyntheticDataset { manifest, splits })
}

fn generate_stay(
    cfg: &SynthConfig,
    specs: &[VariableSpec],
    stay_id: StayId,
    rng: &mut ChaCha8Rng,
) -> Result<PatientStay, CorpusError> {
    let sev = &cfg.severity;
    let max_len = rng.random_range(cfg.min_stay_hours..=cfg.max_stay_hours);

    // The whole walk is drawn before death is decided, so lowering the
    // threshold can only bring death forward.
    let deteriorating = rng.random::<f64>() < sev.deteriorating_fraction;
    let drift_mean = if deteriorating {
        sev.deteriorating_drift
    } else {
        sev.recovering_drift
    };
    let drift = drift_mean + sev.drift_sd * rng.sample::<f64, _>(StandardNormal);
    let mut walk = Vec::with_capacity(max_len);
    let mut s = rng.random_range(sev.initial_low..=sev.initial_high);
    for _ in 0..max_len {
        walk.push(s);
        s = (s + drift + sev.volatility * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0);
    }

    let mut run = 0usize;
    let mut death_hour = None;
    for (t, &s) in walk.iter().enumerate() {
        run = if s >= sev.death_threshold { run + 1 } else { 0 };
        if run >= sev.death_run {
            death_hour = Some(t);
            break;
        }
    }
    let (stay_length, death_time) = match death_hour {
        Some(t) => (t + 1, Some(t as f64 + rng.random::<f64>())),
        None => (max_len, None),
    };
    walk.truncate(stay_length);

    let mut values = Array2::<f64>::zeros((stay_length, cfg.d_v));
    let mut present = Array2::<bool>::from_elem((stay_length, cfg.d_v), false);
    let ar_coef: f64 = 0.9;
    let ar_innov = (1.0 - ar_coef * ar_coef).sqrt();
    for (k, spec) in specs.iter().enumerate() {
        let offset = 0.5 * rng.sample::<f64, _>(StandardNormal);
        let mut ar: f64 = rng.sample(StandardNormal);
        for t in 0..stay_length {
            let eps: f64 = rng.sample(StandardNormal);
            let v = if spec.gain != 0.0 {
                spec.base + spec.scale * (spec.gain * walk[t] + cfg.vitals_noise * spec.gain.abs() * eps)
            } else {
                ar = ar_coef * ar + ar_innov * eps;
                spec.base + spec.scale * (offset + ar)
            };
            if rng.random::<f64>() >= cfg.missing_rate {
                values[[t, k]] = v;
                present[[t, k]] = true;
            }
        }
    }
    let vitals = VitalsSeries::new(values, present)?;

    let categories: Vec<(Category, f64)> = cfg
        .note_rates
        .iter()
        .filter(|(_, &r)| r > 0.0)
        .map(|(&c, &r)| (c, r))
        .collect();
    let rate = cfg.total_rate_per_hour() * stay_length as f64;
    let n_notes = if rate > 0.0 {
        Poisson::new(rate)
            .map_err(|e| CorpusError::Config(e.to_string()))?
            .sample(rng) as usize
    } else {
        0
    };
    let mut notes = Vec::with_capacity(n_notes);
    for _ in 0..n_notes {
        let chart_time = rng.random::<f64>() * stay_length as f64;
        let category = categories
            .choose_weighted(rng, |(_, r)| *r)
            .map(|(c, _)| *c)
            .map_err(|e| CorpusError::Config(e.to_string()))?;
        let severity = walk[(chart_time.floor() as usize).min(stay_length - 1)];
        let signal = cfg.note_signal.get(&category).copied().unwrap_or(1.0);
        let text = note_text(cfg, category, severity, signal, rng);
        notes.push(ClinicalNote {
            stay_id: stay_id.clone(),
            note_index: 0,
            chart_time,
            category,
            text,
        });
    }

    PatientStay::new(stay_id, vitals, notes, death_time.is_some(), death_time, stay_length)
}

fn category_header(c: Category) -> &'static str {
    match c {
        Category::DischargeSummary => "Discharge summary: admission diagnosis",
        Category::Ecg => "ECG: sinus rhythm",
        Category::Echo => "Echo: ventricular function",
        Category::General => "General note",
        Category::Nursing => "Nursing assessment",
        Category::NursingOther => "Nursing/other progress note",
        Category::Nutrition => "Nutrition: intake assessment",
        Category::Physician => "Physician progress note",
        Category::Radiology => "Radiology: portable chest film",
        Category::Respiratory => "Respiratory: ventilator settings",
    }
}

fn note_text(cfg: &SynthConfig, category: Category, severity: f64, signal: f64, rng: &mut ChaCha8Rng) -> String {
    let tracked = 1.0 / (1.0 + (-cfg.text_sharpness * (severity - 0.5)).exp());
    let p_det = signal * tracked + (1.0 - signal) * 0.5;
    let vocab = &cfg.vocabulary;
    let mut findings = Vec::with_capacity(cfg.signal_words);
    for _ in 0..cfg.signal_words {
        let pool = if rng.random::<f64>() < p_det {
            &vocab.deteriorating
        } else {
            &vocab.stable
        };
        findings.push(pool.choose(rng).expect("validated non-empty").as_str());
    }
    let filler: Vec<&str> = (0..cfg.filler_words)
        .filter_map(|_| vocab.filler.choose(rng).map(String::as_str))
        .collect();
    format!("{}.\n{}.\n{}.", category_header(category), findings.join(", "), filler.join(" "))
}
