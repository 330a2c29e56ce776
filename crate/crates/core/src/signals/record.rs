use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffcore::Array;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 200_000.0;

/// One vibration recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalRecord {
    pub samples: Array,
    /// Hz.
    pub sample_rate: f64,
    pub class_label: usize,
    pub condition: String,
}

impl SignalRecord {
    pub fn new(samples: Vec<f64>, sample_rate: f64, class_label: usize, condition: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::contract("signal needs at least one sample"));
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::contract(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(SignalRecord {
            samples: Array::from_vec(samples),
            sample_rate,
            class_label,
            condition: condition.into(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    sample_rate: f64,
    class_label: usize,
    condition: String,
}

/// `<signal>.json` next to the sample file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn write_sidecar(path: &Path, r: &SignalRecord) -> Result<()> {
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&Sidecar {
        sample_rate: r.sample_rate,
        class_label: r.class_label,
        condition: r.condition.clone(),
    })?;
    fs::write(&side, json).map_err(|e| Error::io(side, e))
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Err(Error::MissingArtifact(side));
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(side, e.to_string()))
}

/// Little-endian f32 samples plus a JSON sidecar. Samples are narrowed to
/// f32.
pub fn write_signal_raw(path: &Path, record: &SignalRecord) -> Result<()> {
    let mut buf = Vec::with_capacity(4 * record.samples.len());
    for &v in record.samples.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    write_sidecar(path, record)
}

pub fn read_signal_raw(path: &Path) -> Result<SignalRecord> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "length is not a multiple of 4 bytes"));
    }
    let samples = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let side = read_sidecar(path)?;
    SignalRecord::new(samples, side.sample_rate, side.class_label, side.condition)
}

/// One sample per line; blank lines are skipped. Metadata comes from the
/// same JSON sidecar as the raw format.
pub fn read_signal_csv(path: &Path) -> Result<SignalRecord> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let samples = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("line {}: not a number", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let side = read_sidecar(path)?;
    SignalRecord::new(samples, side.sample_rate, side.class_label, side.condition)
}

pub fn write_signal_csv(path: &Path, record: &SignalRecord) -> Result<()> {
    let mut s = String::with_capacity(12 * record.samples.len());
    for v in record.samples.data() {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))?;
    write_sidecar(path, record)
}
