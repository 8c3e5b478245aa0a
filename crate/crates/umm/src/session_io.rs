//! On-disk session format.
//!
//! A session is a directory holding `manifest.json` and `epochs.f32le`. The
//! payload is a flat run of little-endian `f32`, epoch after epoch; inside an
//! epoch the values are channel-major (`C x T`, time index fastest). The
//! reader converts each epoch to the decoder's time-major layout. See
//! `docs/session-format.md` for the full description.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umm_core::trial::{EpochFeatures, StimulusEvent, SymbolSet, Trial, TrialRecord};

use crate::error::{io_at, Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "epochs.f32le";

/// Epochs of one trial, as a half-open range or as explicit indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpochSelection {
    Range { start: usize, end: usize },
    Indices(Vec<usize>),
}

impl EpochSelection {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            EpochSelection::Range { start, end } => (*start..*end).collect(),
            EpochSelection::Indices(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub epochs: EpochSelection,
    /// Highlighted symbol indices, one list per epoch of the trial.
    pub events: Vec<Vec<usize>>,
    #[serde(default)]
    pub true_symbol: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub format_version: u32,
    pub channel_names: Vec<String>,
    /// Informational only.
    pub sampling_rate: f64,
    pub samples_per_epoch: usize,
    pub symbols: Vec<String>,
    pub epoch_count: usize,
    pub trials: Vec<TrialEntry>,
    #[serde(default)]
    pub provenance: String,
}

impl SessionManifest {
    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn epoch_len(&self) -> usize {
        self.channels() * self.samples_per_epoch
    }

    pub fn payload_bytes(&self) -> u64 {
        self.epoch_count as u64 * self.epoch_len() as u64 * 4
    }

    /// Structural checks shared by reader and writer.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersionUnsupported {
                found: self.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let shape = |msg: String| Err(Error::ShapeMismatch(msg));
        if self.channel_names.is_empty() || self.samples_per_epoch == 0 {
            return shape("channel_names and samples_per_epoch must be non-empty".into());
        }
        SymbolSet::new(self.symbols.clone())?;
        for (t, trial) in self.trials.iter().enumerate() {
            let indices = trial.epochs.indices();
            if indices.is_empty() {
                return shape(format!("trial {t} has no epochs"));
            }
            if let Some(&k) = indices.iter().find(|&&k| k >= self.epoch_count) {
                return shape(format!(
                    "trial {t} references epoch {k} but epoch_count is {}",
                    self.epoch_count
                ));
            }
            if trial.events.len() != indices.len() {
                return shape(format!(
                    "trial {t} has {} epochs but {} event lists",
                    indices.len(),
                    trial.events.len()
                ));
            }
            for ev in &trial.events {
                if let Some(&s) = ev.iter().find(|&&s| s >= self.symbols.len()) {
                    return shape(format!(
                        "trial {t} highlights symbol {s} of {}",
                        self.symbols.len()
                    ));
                }
                if ev.is_empty() {
                    return shape(format!("trial {t} has an event highlighting nothing"));
                }
            }
            if let Some(s) = trial.true_symbol {
                if s >= self.symbols.len() {
                    return shape(format!("trial {t} true symbol {s} of {}", self.symbols.len()));
                }
            }
        }
        Ok(())
    }
}

/// Raw payload: `epoch_count` epochs of `channels x samples` `f32`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochData {
    pub channels: usize,
    pub samples: usize,
    pub values: Vec<f32>,
}

impl EpochData {
    pub fn epoch_count(&self) -> usize {
        self.values.len() / (self.channels * self.samples).max(1)
    }

    pub fn epoch(&self, k: usize) -> &[f32] {
        let n = self.channels * self.samples;
        &self.values[k * n..(k + 1) * n]
    }

    pub fn features(&self, k: usize) -> Result<EpochFeatures> {
        let wide: Vec<f64> = self.epoch(k).iter().map(|&v| v as f64).collect();
        Ok(EpochFeatures::from_channel_major(self.channels, self.samples, &wide)?)
    }
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(io_at(&tmp))?;
    f.write_all(bytes).map_err(io_at(&tmp))?;
    f.sync_all().map_err(io_at(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_at(path))
}

pub fn write_session(dir: &Path, manifest: &SessionManifest, epochs: &EpochData) -> Result<()> {
    manifest.validate()?;
    if epochs.channels != manifest.channels() || epochs.samples != manifest.samples_per_epoch {
        return Err(Error::ShapeMismatch(format!(
            "payload is {}x{} per epoch, manifest says {}x{}",
            epochs.channels,
            epochs.samples,
            manifest.channels(),
            manifest.samples_per_epoch
        )));
    }
    if epochs.values.len() as u64 * 4 != manifest.payload_bytes() {
        return Err(Error::ShapeMismatch(format!(
            "payload holds {} values, manifest expects {} epochs of {}",
            epochs.values.len(),
            manifest.epoch_count,
            manifest.epoch_len()
        )));
    }
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut bytes = Vec::with_capacity(epochs.values.len() * 4);
    for v in &epochs.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(&dir.join(PAYLOAD_FILE), &bytes)?;
    let mut json = serde_json::to_vec_pretty(manifest).map_err(|source| Error::Json {
        path: dir.join(MANIFEST_FILE),
        source,
    })?;
    json.push(b'\n');
    atomic_write(&dir.join(MANIFEST_FILE), &json)
}

pub fn read_manifest(dir: &Path) -> Result<SessionManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(io_at(&path))?;
    // check the version before the rest of the structure
    #[derive(Deserialize)]
    struct Version {
        format_version: u32,
    }
    let version: Version =
        serde_json::from_slice(&text).map_err(|source| Error::Json { path: path.clone(), source })?;
    if version.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersionUnsupported {
            found: version.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: SessionManifest =
        serde_json::from_slice(&text).map_err(|source| Error::Json { path, source })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_session(dir: &Path) -> Result<(SessionManifest, EpochData)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(PAYLOAD_FILE);
    let bytes = fs::read(&path).map_err(io_at(&path))?;
    if bytes.len() as u64 != manifest.payload_bytes() {
        return Err(Error::CorruptPayload {
            expected: manifest.payload_bytes(),
            found: bytes.len() as u64,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let data = EpochData {
        channels: manifest.channels(),
        samples: manifest.samples_per_epoch,
        values,
    };
    Ok((manifest, data))
}

/// Decoder-ready trials. Labels are carried on the records but never on the
/// [`Trial`] itself.
pub fn session_trials(manifest: &SessionManifest, data: &EpochData) -> Result<Vec<TrialRecord>> {
    let n_symbols = manifest.symbols.len();
    manifest
        .trials
        .iter()
        .map(|entry| {
            let epochs = entry
                .epochs
                .indices()
                .into_iter()
                .map(|k| data.features(k))
                .collect::<Result<Vec<_>>>()?;
            let events = entry
                .events
                .iter()
                .map(|ev| StimulusEvent::new(ev.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(TrialRecord {
                trial: Trial::new(n_symbols, epochs, events)?,
                true_symbol: entry.true_symbol,
            })
        })
        .collect()
}

/// Packs in-memory trials into a manifest and an `f32` payload, one
/// contiguous epoch range per trial.
pub fn session_from_records(
    records: &[TrialRecord],
    symbols: &SymbolSet,
    channel_names: Option<Vec<String>>,
    sampling_rate: f64,
    provenance: &str,
) -> Result<(SessionManifest, EpochData)> {
    let first = records
        .first()
        .ok_or_else(|| Error::ShapeMismatch("session has no trials".into()))?;
    let (c, t) = (first.trial.channels(), first.trial.samples());
    let channel_names = channel_names.unwrap_or_else(|| (0..c).map(|i| format!("ch{i}")).collect());
    if channel_names.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "{} channel names for {c} channels",
            channel_names.len()
        )));
    }
    let mut values = Vec::new();
    let mut trials = Vec::with_capacity(records.len());
    let mut next = 0;
    for r in records {
        if r.trial.channels() != c || r.trial.samples() != t {
            return Err(Error::ShapeMismatch("trials differ in epoch shape".into()));
        }
        if r.trial.n_symbols() != symbols.len() {
            return Err(Error::ShapeMismatch(format!(
                "trial uses {} symbols, symbol set has {}",
                r.trial.n_symbols(),
                symbols.len()
            )));
        }
        for e in r.trial.epochs() {
            values.extend(e.to_channel_major().into_iter().map(|v| v as f32));
        }
        let n = r.trial.n_epochs();
        trials.push(TrialEntry {
            epochs: EpochSelection::Range {
                start: next,
                end: next + n,
            },
            events: r
                .trial
                .events()
                .iter()
                .map(|e| e.highlighted().to_vec())
                .collect(),
            true_symbol: r.true_symbol,
        });
        next += n;
    }
    let manifest = SessionManifest {
        format_version: FORMAT_VERSION,
        channel_names,
        sampling_rate,
        samples_per_epoch: t,
        symbols: symbols.names().to_vec(),
        epoch_count: next,
        trials,
        provenance: provenance.to_string(),
    };
    Ok((
        manifest,
        EpochData {
            channels: c,
            samples: t,
            values,
        },
    ))
}

/// Session id used in decision logs: the directory's final component.
pub fn session_id(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(dir).display().to_string())
}
