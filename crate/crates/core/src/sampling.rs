//! Contrastive batch construction: target times drawn around notes, causal
//! time-series windows ending at those target times, and `(i, j, tau)`
//! index tuples.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array2, Array3, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Category, ClinicalNote, PatientStay, VitalsSeries};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("window size must be at least 1 (got {0})")]
    WindowSize(usize),
    #[error("no note of an allowed category in the dataset")]
    NoAllowedNotes,
    #[error("only {0} note(s) available; a contrastive batch needs at least 2")]
    TooFewNotes(usize),
    #[error("invalid target-time config: {0}")]
    Config(String),
}

/// Hours before (`a`) and after (`b`) a note between which its target time
/// is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetTimeConfig {
    pub b: f64,
    pub a_default: f64,
    pub a_by_category: BTreeMap<Category, f64>,
}

impl Default for TargetTimeConfig {
    fn default() -> Self {
        Self {
            b: 3.0,
            a_default: 3.0,
            a_by_category: [(Category::DischargeSummary, 10.0), (Category::Radiology, 30.0)]
                .into_iter()
                .collect(),
        }
    }
}

impl TargetTimeConfig {
    pub fn a(&self, category: Category) -> f64 {
        self.a_by_category.get(&category).copied().unwrap_or(self.a_default)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.b) || !ok(self.a_default) || !self.a_by_category.values().all(|&a| ok(a)) {
            return Err(SamplingError::Config("a and b must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    /// Window length `w` in hourly steps.
    pub window: usize,
    /// Stays drawn per batch.
    pub batch_stays: usize,
    /// Maximum consecutive notes taken from each drawn stay.
    pub notes_per_stay: usize,
    pub target: TargetTimeConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            window: 16,
            batch_stays: 32,
            notes_per_stay: 4,
            target: TargetTimeConfig::default(),
        }
    }
}

/// `(i, j, tau)`: stay index within the split, note index within the stay,
/// and the target time in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchIndex {
    pub stay_index: usize,
    pub note_index: usize,
    pub target_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// `K x w x d_v`.
    pub windows: Array3<f64>,
    pub note_texts: Vec<String>,
    pub indices: Vec<BatchIndex>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Uniform on `[time - a, time + b]`, clamped to `[0, stay_length]`.
pub fn draw_target_time<R: Rng + ?Sized>(note: &ClinicalNote, stay_length: usize, cfg: &TargetTimeConfig, rng: &mut R) -> f64 {
    let lo = note.chart_time - cfg.a(note.category);
    let hi = note.chart_time + cfg.b;
    let tau = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    tau.clamp(0.0, stay_length as f64)
}

/// Rows `ceil(tau) - w .. ceil(tau) - 1`; rows before admission are zero.
pub fn cut_window(vitals: &VitalsSeries, tau: f64, w: usize) -> Result<Array2<f64>, SamplingError> {
    let mut out = Array2::zeros((w, vitals.n_vars()));
    write_window(vitals, tau, w, out.view_mut())?;
    Ok(out)
}

fn write_window(vitals: &VitalsSeries, tau: f64, w: usize, mut out: ArrayViewMut2<f64>) -> Result<(), SamplingError> {
    if w < 1 {
        return Err(SamplingError::WindowSize(w));
    }
    let end = (tau.ceil().max(0.0) as usize).min(vitals.len());
    let start = end as isize - w as isize;
    let first = start.max(0) as usize;
    let pad = (first as isize - start) as usize;
    out.fill(0.0);
    out.slice_mut(s![pad.., ..]).assign(&vitals.values().slice(s![first..end, ..]));
    Ok(())
}

/// Pointer to one note: `(stay index, note index)`.
pub type NoteRef = (usize, usize);

fn allowed_notes(stay: &PatientStay, allowed: &BTreeSet<Category>) -> Vec<usize> {
    stay.notes
        .iter()
        .filter(|n| allowed.contains(&n.category))
        .map(|n| n.note_index)
        .collect()
}

/// Draws one batch of up to `k` notes: stays in random order, from each a
/// random run of up to `notes_per_stay` consecutive allowed notes. Returns
/// fewer than `k` notes only when the dataset runs out.
pub fn sample_note_refs<R: Rng + ?Sized>(
    stays: &[PatientStay],
    k: usize,
    notes_per_stay: usize,
    allowed: &BTreeSet<Category>,
    rng: &mut R,
) -> Result<Vec<NoteRef>, SamplingError> {
    let mut order: Vec<usize> = (0..stays.len()).collect();
    order.shuffle(rng);
    let mut refs = Vec::with_capacity(k);
    for i in order {
        if refs.len() >= k {
            break;
        }
        let notes = allowed_notes(&stays[i], allowed);
        if notes.is_empty() {
            continue;
        }
        let take = notes_per_stay.max(1).min(k - refs.len()).min(notes.len());
        let start = rng.random_range(0..=notes.len() - take);
        refs.extend(notes[start..start + take].iter().map(|&j| (i, j)));
    }
    match refs.len() {
        0 => Err(SamplingError::NoAllowedNotes),
        1 => Err(SamplingError::TooFewNotes(1)),
        _ => Ok(refs),
    }
}

/// Partitions every allowed note into batches for one epoch. Each stay's
/// notes are cut into consecutive chunks of `notes_per_stay` (random phase),
/// chunks are shuffled and grouped `batch_stays` at a time. A trailing
/// single-note batch is merged into its predecessor.
pub fn plan_epoch<R: Rng + ?Sized>(
    stays: &[PatientStay],
    batch_stays: usize,
    notes_per_stay: usize,
    allowed: &BTreeSet<Category>,
    rng: &mut R,
) -> Result<Vec<Vec<NoteRef>>, SamplingError> {
    let per = notes_per_stay.max(1);
    let mut chunks: Vec<Vec<NoteRef>> = Vec::new();
    for (i, stay) in stays.iter().enumerate() {
        let notes = allowed_notes(stay, allowed);
        if notes.is_empty() {
            continue;
        }
        let phase = rng.random_range(0..per);
        let mut start = 0;
        let mut end = if phase == 0 { per } else { phase };
        while start < notes.len() {
            end = end.min(notes.len());
            chunks.push(notes[start..end].iter().map(|&j| (i, j)).collect());
            start = end;
            end += per;
        }
    }
    let total: usize = chunks.iter().map(Vec::len).sum();
    match total {
        0 => return Err(SamplingError::NoAllowedNotes),
        1 => return Err(SamplingError::TooFewNotes(1)),
        _ => {}
    }
    chunks.shuffle(rng);
    let mut batches: Vec<Vec<NoteRef>> = chunks
        .chunks(batch_stays.max(1))
        .map(|group| group.iter().flatten().copied().collect())
        .collect();
    if batches.len() > 1 && batches.last().map(Vec::len) == Some(1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    Ok(batches)
}

/// Draws a fresh target time per note and cuts the matching windows.
pub fn materialize_batch<R: Rng + ?Sized>(
    stays: &[PatientStay],
    refs: &[NoteRef],
    w: usize,
    cfg: &TargetTimeConfig,
    rng: &mut R,
) -> Result<WindowBatch, SamplingError> {
    if w < 1 {
        return Err(SamplingError::WindowSize(w));
    }
    let d_v = stays.first().map(|s| s.n_vars()).unwrap_or(0);
    let mut windows = Array3::zeros((refs.len(), w, d_v));
    let mut note_texts = Vec::with_capacity(refs.len());
    let mut indices = Vec::with_capacity(refs.len());
    for (row, &(i, j)) in refs.iter().enumerate() {
        let stay = &stays[i];
        let note = &stay.notes[j];
        let tau = draw_target_time(note, stay.stay_length, cfg, rng);
        write_window(&stay.vitals, tau, w, windows.index_axis_mut(Axis(0), row))?;
        note_texts.push(note.text.clone());
        indices.push(BatchIndex {
            stay_index: i,
            note_index: j,
            target_time: tau,
        });
    }
    Ok(WindowBatch {
        windows,
        note_texts,
        indices,
    })
}

/// Samples and materialises one batch of `k` notes.
pub fn assemble_batch<R: Rng + ?Sized>(
    stays: &[PatientStay],
    k: usize,
    cfg: &SamplingConfig,
    allowed: &BTreeSet<Category>,
    rng: &mut R,
) -> Result<WindowBatch, SamplingError> {
    cfg.target.validate()?;
    if cfg.window < 1 {
        return Err(SamplingError::WindowSize(cfg.window));
    }
    let refs = sample_note_refs(stays, k, cfg.notes_per_stay, allowed, rng)?;
    materialize_batch(stays, &refs, cfg.window, &cfg.target, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{StayId, VitalsSeries};
    use crate::rng::rng_for;

    fn ramp_vitals(t_len: usize, d: usize) -> VitalsSeries {
        let values = Array2::from_shape_fn((t_len, d), |(t, k)| (t * 10 + k) as f64 + 1.0);
        VitalsSeries::new(values, Array2::from_elem((t_len, d), true)).unwrap()
    }

    fn note(time: f64, category: Category) -> ClinicalNote {
        ClinicalNote {
            stay_id: StayId::from("s"),
            note_index: 0,
            chart_time: time,
            category,
            text: format!("{category} at {time}"),
        }
    }

    fn stay(id: &str, t_len: usize, notes: Vec<ClinicalNote>) -> PatientStay {
        PatientStay::new(StayId::from(id), ramp_vitals(t_len, 2), notes, false, None, t_len).unwrap()
    }

    #[test]
    fn radiology_interval() {
        let cfg = TargetTimeConfig::default();
        let n = note(40.0, Category::Radiology);
        let mut rng = rng_for(0, &[]);
        for _ in 0..2000 {
            let tau = draw_target_time(&n, 100, &cfg, &mut rng);
            assert!((10.0..=43.0).contains(&tau));
        }
    }

    #[test]
    fn zero_width_interval_returns_note_time() {
        let cfg = TargetTimeConfig {
            b: 0.0,
            a_default: 0.0,
            a_by_category: BTreeMap::new(),
        };
        let n = note(12.25, Category::Nursing);
        assert_eq!(draw_target_time(&n, 48, &cfg, &mut rng_for(1, &[])), 12.25);
    }

    #[test]
    fn early_note_is_clamped_at_admission() {
        let cfg = TargetTimeConfig::default();
        let n = note(1.0, Category::DischargeSummary);
        let mut rng = rng_for(2, &[]);
        let taus: Vec<f64> = (0..500).map(|_| draw_target_time(&n, 48, &cfg, &mut rng)).collect();
        assert!(taus.iter().all(|&t| t >= 0.0));
        assert!(taus.iter().any(|&t| t == 0.0));
    }

    #[test]
    fn window_slice_semantics() {
        let v = ramp_vitals(48, 2);
        let w = cut_window(&v, 16.0, 16).unwrap();
        assert_eq!(w, v.values().slice(s![0..16, ..]));
        let w = cut_window(&v, 48.0, 8).unwrap();
        assert_eq!(w, v.values().slice(s![40..48, ..]));
        // fractional tau rounds up to the next grid point
        let w = cut_window(&v, 15.2, 16).unwrap();
        assert_eq!(w, v.values().slice(s![0..16, ..]));
    }

    #[test]
    fn window_left_pads_with_zero_rows() {
        let v = ramp_vitals(48, 2);
        let w = cut_window(&v, 4.0, 16).unwrap();
        assert!(w.slice(s![0..12, ..]).iter().all(|&x| x == 0.0));
        assert_eq!(w.slice(s![12.., ..]), v.values().slice(s![0..4, ..]));
    }

    #[test]
    fn zero_window_rejected() {
        assert_eq!(cut_window(&ramp_vitals(4, 1), 2.0, 0), Err(SamplingError::WindowSize(0)));
    }

    #[test]
    fn single_stay_batch_shares_stay_index() {
        let stays = vec![stay(
            "a",
            48,
            (0..4).map(|j| note(5.0 + 8.0 * j as f64, Category::Nursing)).collect(),
        )];
        let allowed: BTreeSet<_> = Category::ALL.into_iter().collect();
        let b = assemble_batch(&stays, 4, &SamplingConfig::default(), &allowed, &mut rng_for(3, &[])).unwrap();
        assert_eq!(b.len(), 4);
        assert!(b.indices.iter().all(|ix| ix.stay_index == 0));
        let js: BTreeSet<_> = b.indices.iter().map(|ix| ix.note_index).collect();
        assert_eq!(js, (0..4).collect());
        assert_eq!(b.windows.dim(), (4, 16, 2));
    }

    #[test]
    fn category_filter_is_respected() {
        let stays: Vec<_> = (0..6)
            .map(|i| {
                stay(
                    &format!("s{i}"),
                    60,
                    vec![
                        note(3.0, Category::Radiology),
                        note(9.0, Category::Nursing),
                        note(20.0, Category::Radiology),
                        note(30.0, Category::Physician),
                    ],
                )
            })
            .collect();
        let allowed: BTreeSet<_> = [Category::Radiology].into_iter().collect();
        let b = assemble_batch(&stays, 8, &SamplingConfig::default(), &allowed, &mut rng_for(4, &[])).unwrap();
        for ix in &b.indices {
            assert_eq!(stays[ix.stay_index].notes[ix.note_index].category, Category::Radiology);
        }
    }

    #[test]
    fn identical_rng_gives_identical_batches() {
        let stays: Vec<_> = (0..5)
            .map(|i| stay(&format!("s{i}"), 30, (0..3).map(|j| note(2.0 + 9.0 * j as f64, Category::General)).collect()))
            .collect();
        let allowed: BTreeSet<_> = Category::ALL.into_iter().collect();
        let cfg = SamplingConfig::default();
        let a = assemble_batch(&stays, 6, &cfg, &allowed, &mut rng_for(9, &[])).unwrap();
        let b = assemble_batch(&stays, 6, &cfg, &allowed, &mut rng_for(9, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partial_and_degenerate_batches() {
        let allowed: BTreeSet<_> = Category::ALL.into_iter().collect();
        let cfg = SamplingConfig::default();
        let two = vec![stay("a", 20, vec![note(1.0, Category::Echo), note(2.0, Category::Echo)])];
        let b = assemble_batch(&two, 10, &cfg, &allowed, &mut rng_for(0, &[])).unwrap();
        assert_eq!(b.len(), 2);
        let one = vec![stay("a", 20, vec![note(1.0, Category::Echo)])];
        assert_eq!(
            assemble_batch(&one, 10, &cfg, &allowed, &mut rng_for(0, &[])).unwrap_err(),
            SamplingError::TooFewNotes(1)
        );
        let none = vec![stay("a", 20, vec![])];
        assert_eq!(
            assemble_batch(&none, 10, &cfg, &allowed, &mut rng_for(0, &[])).unwrap_err(),
            SamplingError::NoAllowedNotes
        );
    }

    #[test]
    fn epoch_plan_covers_every_allowed_note_once() {
        let stays: Vec<_> = (0..7)
            .map(|i| {
                stay(
                    &format!("s{i}"),
                    50,
                    (0..(i + 2)).map(|j| note(j as f64 * 3.0, Category::ALL[j % 10])).collect(),
                )
            })
            .collect();
        let allowed: BTreeSet<_> = Category::ALL.into_iter().collect();
        let plan = plan_epoch(&stays, 3, 4, &allowed, &mut rng_for(5, &[])).unwrap();
        let mut seen: Vec<NoteRef> = plan.iter().flatten().copied().collect();
        seen.sort();
        let mut expected: Vec<NoteRef> = stays
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.notes.len()).map(move |j| (i, j)))
            .collect();
        expected.sort();
        assert_eq!(seen, expected);
        assert!(plan.iter().all(|b| b.len() >= 2));
    }
}
