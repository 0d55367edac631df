//! On-disk dataset layout.
//!
//! ```text
//! <root>/manifest.toml
//! <root>/<split>/labels.csv        stay_id,died_in_hospital,death_time,stay_length
//! <root>/<split>/notes.jsonl       one JSON object per line: stay_id, chart_time, category, text
//! <root>/<split>/vitals/<id>.csv   Hours,<var_1>,...,<var_d>   (empty cell = missing)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Category, ClinicalNote, CorpusError, Manifest, PatientStay, Split, StayId, VitalsSeries};

pub const MANIFEST_FILE: &str = "manifest.toml";
const LABELS_FILE: &str = "labels.csv";
const NOTES_FILE: &str = "notes.jsonl";
const VITALS_DIR: &str = "vitals";

#[derive(Debug, Serialize, Deserialize)]
struct NoteRecord {
    stay_id: String,
    chart_time: f64,
    category: String,
    text: String,
}

struct LabelRow {
    stay_id: StayId,
    died: bool,
    death_time: Option<f64>,
    stay_length: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn split_dir(root: &Path, split: Split) -> PathBuf {
    root.join(split.as_str())
}

pub fn read_manifest(root: &Path) -> Result<Manifest, CorpusError> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    toml::from_str(&text).map_err(|e| CorpusError::Parse {
        file: path.display().to_string(),
        row: e.span().map(|s| line_of(&text, s.start)).unwrap_or(0),
        reason: e.message().to_string(),
    })
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].lines().count().max(1)
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<(), CorpusError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let text = toml::to_string_pretty(manifest).map_err(|e| CorpusError::Validation(e.to_string()))?;
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(io_err(&path))
}

/// Reads every stay of one split. Stays come back in labels-file order.
pub fn ingest_stays(root: &Path, split: Split) -> Result<Vec<PatientStay>, CorpusError> {
    let dir = split_dir(root, split);
    let labels = read_labels(&dir.join(LABELS_FILE))?;
    let mut notes = read_notes(&dir.join(NOTES_FILE))?;

    let known: BTreeMap<&StayId, ()> = labels.iter().map(|l| (&l.stay_id, ())).collect();
    if let Some(orphan) = notes.keys().find(|id| !known.contains_key(id)) {
        return Err(CorpusError::Validation(format!(
            "notes reference stay {orphan} which has no labels row in split {}",
            split.as_str()
        )));
    }

    let vitals: Vec<VitalsSeries> = labels
        .par_iter()
        .map(|l| read_vitals(&dir.join(VITALS_DIR).join(format!("{}.csv", l.stay_id)), &l.stay_id))
        .collect::<Result<_, _>>()?;

    labels
        .into_iter()
        .zip(vitals)
        .map(|(l, v)| {
            let stay_notes = notes.remove(&l.stay_id).unwrap_or_default();
            PatientStay::new(l.stay_id, v, stay_notes, l.died, l.death_time, l.stay_length)
        })
        .collect()
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>, CorpusError> {
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::Parse {
        file: file.clone(),
        row: 0,
        reason: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let parse = |reason: String| CorpusError::Parse {
            file: file.clone(),
            row,
            reason,
        };
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        if rec.len() != 4 {
            return Err(parse(format!("expected 4 fields, found {}", rec.len())));
        }
        let died = match &rec[1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse(format!("bad died_in_hospital {other:?}"))),
        };
        let death_time = if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse::<f64>().map_err(|e| parse(format!("bad death_time: {e}")))?)
        };
        let stay_length = rec[3]
            .parse::<usize>()
            .map_err(|e| parse(format!("bad stay_length: {e}")))?;
        rows.push(LabelRow {
            stay_id: StayId(rec[0].to_string()),
            died,
            death_time,
            stay_length,
        });
    }
    Ok(rows)
}

fn read_notes(path: &Path) -> Result<BTreeMap<StayId, Vec<ClinicalNote>>, CorpusError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out: BTreeMap<StayId, Vec<ClinicalNote>> = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: NoteRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            file: path.display().to_string(),
            row: i + 1,
            reason: e.to_string(),
        })?;
        let category: Category = rec.category.parse()?;
        let stay_id = StayId(rec.stay_id);
        out.entry(stay_id.clone()).or_default().push(ClinicalNote {
            stay_id,
            note_index: 0,
            chart_time: rec.chart_time,
            category,
            text: rec.text,
        });
    }
    Ok(out)
}

fn read_vitals(path: &Path, stay: &StayId) -> Result<VitalsSeries, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::Ingest {
            stay: stay.to_string(),
            reason: format!("missing vitals file {}", path.display()),
        });
    }
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| CorpusError::Parse {
        file: file.clone(),
        row: 0,
        reason: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse {
            file: file.clone(),
            row: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.get(0) != Some("Hours") || headers.len() < 2 {
        return Err(CorpusError::Parse {
            file,
            row: 1,
            reason: "first column must be `Hours` followed by at least one variable".into(),
        });
    }
    let n_vars = headers.len() - 1;
    let mut values = Vec::new();
    let mut present = Vec::new();
    let mut n_rows = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let parse = |reason: String| CorpusError::Parse {
            file: file.clone(),
            row,
            reason,
        };
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        let hour: usize = rec[0].parse().map_err(|e| parse(format!("bad Hours value: {e}")))?;
        if hour != n_rows {
            return Err(parse(format!("expected hour {n_rows}, found {hour}")));
        }
        for cell in rec.iter().skip(1) {
            if cell.is_empty() {
                values.push(0.0);
                present.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|e| parse(format!("bad value {cell:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(parse(format!("non-finite value {cell:?}")));
                }
                values.push(v);
                present.push(true);
            }
        }
        n_rows += 1;
    }
    let values = Array2::from_shape_vec((n_rows, n_vars), values).map_err(|e| CorpusError::Ingest {
        stay: stay.to_string(),
        reason: e.to_string(),
    })?;
    let present = Array2::from_shape_vec((n_rows, n_vars), present).expect("same shape as values");
    VitalsSeries::new(values, present).map_err(|e| CorpusError::Ingest {
        stay: stay.to_string(),
        reason: e.to_string(),
    })
}

/// Writes one split in the layout read by [`ingest_stays`].
pub fn write_split(
    root: &Path,
    split: Split,
    stays: &[PatientStay],
    variable_names: &[String],
) -> Result<(), CorpusError> {
    let dir = split_dir(root, split);
    let vitals_dir = dir.join(VITALS_DIR);
    fs::create_dir_all(&vitals_dir).map_err(io_err(&vitals_dir))?;

    let csv_err = |e: csv::Error| CorpusError::Validation(e.to_string());
    let labels_path = dir.join(LABELS_FILE);
    let mut labels = csv::Writer::from_path(&labels_path).map_err(csv_err)?;
    labels
        .write_record(["stay_id", "died_in_hospital", "death_time", "stay_length"])
        .map_err(csv_err)?;
    for s in stays {
        labels
            .write_record([
                s.stay_id.0.clone(),
                if s.died_in_hospital { "1" } else { "0" }.to_string(),
                s.death_time.map(|t| t.to_string()).unwrap_or_default(),
                s.stay_length.to_string(),
            ])
            .map_err(csv_err)?;
    }
    labels.flush().map_err(io_err(&labels_path))?;

    let notes_path = dir.join(NOTES_FILE);
    let f = fs::File::create(&notes_path).map_err(io_err(&notes_path))?;
    let mut w = BufWriter::new(f);
    for s in stays {
        for n in &s.notes {
            let rec = NoteRecord {
                stay_id: n.stay_id.0.clone(),
                chart_time: n.chart_time,
                category: n.category.as_str().to_string(),
                text: n.text.clone(),
            };
            let line = serde_json::to_string(&rec).map_err(|e| CorpusError::Validation(e.to_string()))?;
            writeln!(w, "{line}").map_err(io_err(&notes_path))?;
        }
    }
    w.flush().map_err(io_err(&notes_path))?;

    stays
        .par_iter()
        .try_for_each(|s| write_vitals(&vitals_dir.join(format!("{}.csv", s.stay_id)), &s.vitals, variable_names))
}

fn write_vitals(path: &Path, vitals: &VitalsSeries, names: &[String]) -> Result<(), CorpusError> {
    let csv_err = |e: csv::Error| CorpusError::Validation(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["Hours".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let (values, present) = (vitals.values(), vitals.present());
    for t in 0..vitals.len() {
        let mut row = vec![t.to_string()];
        for k in 0..vitals.n_vars() {
            row.push(if present[[t, k]] { values[[t, k]].to_string() } else { String::new() });
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}
