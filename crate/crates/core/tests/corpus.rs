use mmncl_core::corpus::{
    generate_synthetic, preprocess, Dataset, PatientStay, Scaler, Split, StayId, SynthConfig, VitalsSeries,
};
use ndarray::Array2;
use proptest::prelude::*;

fn small(n: usize) -> SynthConfig {
    SynthConfig {
        n_train: n,
        n_val: n / 2,
        n_test: n / 2,
        ..SynthConfig::default()
    }
}

#[test]
fn write_then_ingest_is_lossless() {
    let ds = generate_synthetic(&small(30), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let original = ds.clone().into_dataset();
    original.write(dir.path()).unwrap();
    let back = Dataset::open(dir.path()).unwrap();
    assert_eq!(back.manifest(), original.manifest());
    for split in Split::ALL {
        assert_eq!(back.split(split).unwrap(), &ds.splits[&split][..], "{split:?}");
    }
}

#[test]
fn splits_are_read_lazily_and_logged() {
    let ds = generate_synthetic(&small(10), 1).unwrap().into_dataset();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let back = Dataset::open(dir.path()).unwrap();
    assert!(back.access_log().events().is_empty());
    back.split(Split::Val).unwrap();
    assert_eq!(back.access_log().events(), vec![Split::Val]);
}

#[test]
fn median_note_count_tracks_the_configured_rate() {
    let cfg = small(500);
    let ds = generate_synthetic(&cfg, 2).unwrap();
    let stays = &ds.splits[&Split::Train];
    let mut counts: Vec<usize> = stays.iter().map(|s| s.notes.len()).collect();
    counts.sort_unstable();
    let median = counts[counts.len() / 2] as f64;
    let target = cfg.target_notes_per_stay();
    assert!((median - target).abs() <= 0.5 * target, "median {median}, target {target}");
}

#[test]
fn lower_death_threshold_never_lowers_the_death_rate() {
    let mut last = -1.0;
    for threshold in [0.98, 0.9, 0.85, 0.8, 0.7] {
        let mut cfg = small(300);
        cfg.severity.death_threshold = threshold;
        let ds = generate_synthetic(&cfg, 3).unwrap();
        let stays = &ds.splits[&Split::Train];
        let rate = stays.iter().filter(|s| s.died_in_hospital).count() as f64 / stays.len() as f64;
        assert!(rate >= last, "threshold {threshold}: rate {rate} below {last}");
        last = rate;
    }
    assert!(last > 0.0);
}

fn stay_from(values: Vec<f64>, mask: Vec<bool>, t_len: usize, d: usize) -> PatientStay {
    let vitals = VitalsSeries::new(
        Array2::from_shape_vec((t_len, d), values).unwrap(),
        Array2::from_shape_vec((t_len, d), mask).unwrap(),
    )
    .unwrap();
    PatientStay::new(StayId::from("p"), vitals, Vec::new(), false, None, t_len).unwrap()
}

fn arb_stay() -> impl Strategy<Value = PatientStay> {
    (1usize..12, 1usize..5).prop_flat_map(|(t, d)| {
        (
            prop::collection::vec(-1e3f64..1e3, t * d),
            prop::collection::vec(any::<bool>(), t * d),
        )
            .prop_map(move |(v, m)| stay_from(v, m, t, d))
    })
}

proptest! {
    #[test]
    fn preprocess_is_idempotent_under_the_identity_scaler(stay in arb_stay()) {
        let id = Scaler::identity(stay.n_vars());
        let once = preprocess(&stay, &id);
        let twice = preprocess(&once, &id);
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.vitals.values().iter().all(|v| v.is_finite()));
        for (k, col) in stay.vitals.present().columns().into_iter().enumerate() {
            if !col.iter().any(|&p| p) {
                prop_assert!(once.vitals.values().column(k).iter().all(|&v| v == 0.0));
            }
        }
    }
}
