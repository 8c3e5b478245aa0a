use std::fs;

use tempfile::tempdir;
use umm::session_io::{
    read_manifest, read_session, session_from_records, session_trials, write_session, EpochSelection,
    MANIFEST_FILE, PAYLOAD_FILE,
};
use umm::Error;
use umm_core::synth::{generate_session, SynthConfig};
use umm_core::trial::SymbolSet;

fn synthetic(seed: u64, trials: usize) -> (umm::session_io::SessionManifest, umm::session_io::EpochData) {
    let mut cfg = SynthConfig::sequential(seed);
    cfg.n_trials = trials;
    cfg.channels = 4;
    cfg.samples = 6;
    let records = generate_session(&cfg).unwrap();
    let symbols = SymbolSet::alphabetic(cfg.n_symbols).unwrap();
    session_from_records(&records, &symbols, None, 256.0, "test").unwrap()
}

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempdir().unwrap();
    let (manifest, data) = synthetic(1, 3);
    write_session(dir.path(), &manifest, &data).unwrap();
    let (m2, d2) = read_session(dir.path()).unwrap();
    assert_eq!(m2, manifest);
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&d2.values), bits(&data.values));
    // the payload on disk is exactly the little-endian values
    let raw = fs::read(dir.path().join(PAYLOAD_FILE)).unwrap();
    assert_eq!(raw.len(), data.values.len() * 4);
    assert_eq!(&raw[..4], &data.values[0].to_le_bytes());
}

#[test]
fn reader_builds_time_major_features() {
    let dir = tempdir().unwrap();
    let (manifest, data) = synthetic(2, 1);
    write_session(dir.path(), &manifest, &data).unwrap();
    let (m, d) = read_session(dir.path()).unwrap();
    let records = session_trials(&m, &d).unwrap();
    let (c, t) = (m.channels(), m.samples_per_epoch);
    let first = &records[0].trial.epochs()[0];
    for ch in 0..c {
        for s in 0..t {
            // stored channel-major, features time-major
            assert_eq!(first.as_slice()[s * c + ch], d.values[ch * t + s] as f64);
        }
    }
}

#[test]
fn truncated_payload_is_corrupt() {
    let dir = tempdir().unwrap();
    let (manifest, data) = synthetic(3, 2);
    write_session(dir.path(), &manifest, &data).unwrap();
    let path = dir.path().join(PAYLOAD_FILE);
    let raw = fs::read(&path).unwrap();
    fs::write(&path, &raw[..raw.len() - 4]).unwrap();
    match read_session(dir.path()) {
        Err(Error::CorruptPayload { expected, found }) => assert_eq!(expected, found + 4),
        other => panic!("expected CorruptPayload, got {other:?}"),
    }
}

#[test]
fn epoch_index_past_the_end_is_a_shape_mismatch() {
    let dir = tempdir().unwrap();
    let (mut manifest, data) = synthetic(4, 2);
    write_session(dir.path(), &manifest, &data).unwrap();
    let n = manifest.trials[1].epochs.indices().len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx[n - 1] = manifest.epoch_count;
    manifest.trials[1].epochs = EpochSelection::Indices(idx);
    fs::write(
        dir.path().join(MANIFEST_FILE),
        serde_json::to_vec(&manifest).unwrap(),
    )
    .unwrap();
    assert!(matches!(read_session(dir.path()), Err(Error::ShapeMismatch(_))));
}

#[test]
fn unknown_format_version_is_rejected() {
    let dir = tempdir().unwrap();
    let (manifest, data) = synthetic(5, 1);
    write_session(dir.path(), &manifest, &data).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
    fs::write(&path, text).unwrap();
    assert!(matches!(
        read_manifest(dir.path()),
        Err(Error::FormatVersionUnsupported { found: 2, supported: 1 })
    ));
}

#[test]
fn misaligned_events_are_rejected_on_write() {
    let dir = tempdir().unwrap();
    let (mut manifest, data) = synthetic(6, 1);
    manifest.trials[0].events.pop();
    assert!(matches!(
        write_session(dir.path(), &manifest, &data),
        Err(Error::ShapeMismatch(_))
    ));
    assert!(!dir.path().join(MANIFEST_FILE).exists());
}

#[test]
fn explicit_index_lists_round_trip() {
    let dir = tempdir().unwrap();
    let (mut manifest, data) = synthetic(7, 2);
    // second trial listed in reverse order
    let idx: Vec<usize> = manifest.trials[1].epochs.indices().into_iter().rev().collect();
    manifest.trials[1].events.reverse();
    manifest.trials[1].epochs = EpochSelection::Indices(idx);
    write_session(dir.path(), &manifest, &data).unwrap();
    let (m2, _) = read_session(dir.path()).unwrap();
    assert_eq!(m2.trials[1], manifest.trials[1]);
}
