use std::collections::BTreeSet;

use mmncl_core::corpus::{generate_synthetic, Category, ClinicalNote, Split, StayId, SynthConfig};
use mmncl_core::rng::rng_for;
use mmncl_core::sampling::{draw_target_time, materialize_batch, plan_epoch, TargetTimeConfig};

/// Kolmogorov-Smirnov distance between a sample and `U(lo, hi)`.
fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn target_offsets_are_uniform_away_from_the_stay_edges() {
    let cfg = TargetTimeConfig::default();
    // Critical value of the one-sample KS test at significance 0.01.
    let n = 10_000;
    let critical = 1.628 / (n as f64).sqrt();
    for category in [Category::Physician, Category::Radiology, Category::DischargeSummary] {
        let note = ClinicalNote {
            stay_id: StayId::from("s"),
            note_index: 0,
            chart_time: 100.25,
            category,
            text: String::new(),
        };
        let mut rng = rng_for(17, &[category as u64]);
        let offsets: Vec<f64> = (0..n)
            .map(|_| draw_target_time(&note, 400, &cfg, &mut rng) - note.chart_time)
            .collect();
        let d = ks_uniform(offsets, -cfg.a(category), cfg.b);
        assert!(d < critical, "{category}: KS distance {d} >= {critical}");
    }
}

#[test]
fn batches_reference_existing_allowed_notes() {
    let cfg = SynthConfig {
        n_train: 60,
        n_val: 1,
        n_test: 1,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&cfg, 4).unwrap();
    let stays = &ds.splits[&Split::Train];
    let allowed: BTreeSet<Category> = [Category::Nursing, Category::Radiology, Category::Physician].into();
    let mut rng = rng_for(1, &[]);
    let plan = plan_epoch(stays, 8, 3, &allowed, &mut rng).unwrap();
    for refs in &plan {
        let batch = materialize_batch(stays, refs, 16, &TargetTimeConfig::default(), &mut rng).unwrap();
        for (row, idx) in batch.indices.iter().enumerate() {
            let stay = &stays[idx.stay_index];
            let note = &stay.notes[idx.note_index];
            assert!(allowed.contains(&note.category));
            assert_eq!(batch.note_texts[row], note.text);
            // Rows before admission are exactly zero.
            let end = idx.target_time.ceil() as i64;
            for r in 0..16 {
                if end - 16 + (r as i64) < 0 {
                    assert!(batch.windows.slice(ndarray::s![row, r, ..]).iter().all(|&v| v == 0.0));
                }
            }
        }
    }
}
