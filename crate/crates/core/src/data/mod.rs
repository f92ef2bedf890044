//! On-disk dataset convention: a manifest CSV
//! (`id,audio,coeffs,ref_frame,attitude,split`) pointing at WAV files and
//! coefficient CSVs (one frame per row, angle | translation | expression
//! columns), plus deterministic synthetic clip generation.

pub mod synthetic;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::audio::{self, FrontendConfig};
use crate::error::{Error, Result};
use crate::model::{CoeffDims, CoeffFrame, CoeffSequence};
use crate::train::TrainClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attitude {
    Positive,
    Natural,
    Negative,
}

impl Attitude {
    pub fn parse(s: &str) -> Option<Attitude> {
        match s {
            "positive" => Some(Attitude::Positive),
            "natural" => Some(Attitude::Natural),
            "negative" => Some(Attitude::Negative),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Attitude::Positive => "positive",
            Attitude::Natural => "natural",
            Attitude::Negative => "negative",
        }
    }
}

impl fmt::Display for Attitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Ood,
}

impl Split {
    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "ood" => Some(Split::Ood),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Ood => "ood",
        }
    }
}

/// One manifest row with paths resolved against the manifest directory.
#[derive(Debug, Clone)]
pub struct ClipRecord {
    pub id: String,
    pub audio: PathBuf,
    pub coeffs: PathBuf,
    pub ref_frame: usize,
    pub attitude: Attitude,
    pub split: Split,
}

pub const MANIFEST_HEADER: &str = "id,audio,coeffs,ref_frame,attitude,split";

/// Parse the manifest CSV. Validates the attitude/split vocabularies,
/// checks referenced files exist, and rejects duplicate clip ids.
pub fn load_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("manifest: cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(Error::data(format!(
                "manifest: bad header {header:?}, expected {MANIFEST_HEADER:?}"
            )))
        }
        None => return Err(Error::data("manifest: empty file".to_string())),
    }

    let mut records = Vec::new();
    let mut seen_ids: Vec<String> = Vec::new();
    for (lineno, line) in lines {
        let row = lineno + 1; // 1-based, header is row 1
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::data(format!(
                "manifest row {row}: expected 6 columns, got {}",
                fields.len()
            )));
        }
        let id = fields[0].to_string();
        if seen_ids.contains(&id) {
            return Err(Error::data(format!(
                "manifest row {row}: duplicate clip id {id:?}"
            )));
        }
        let resolve = |p: &str| -> PathBuf {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        let audio = resolve(fields[1]);
        let coeffs = resolve(fields[2]);
        for (kind, file) in [("audio", &audio), ("coeffs", &coeffs)] {
            if !file.exists() {
                return Err(Error::data(format!(
                    "manifest row {row}: {kind} file {} does not exist",
                    file.display()
                )));
            }
        }
        let ref_frame: usize = fields[3].parse().map_err(|_| {
            Error::data(format!(
                "manifest row {row}: ref_frame {:?} is not a non-negative integer",
                fields[3]
            ))
        })?;
        let attitude = Attitude::parse(fields[4]).ok_or_else(|| {
            Error::data(format!(
                "manifest row {row}: unknown attitude token {:?} (expected positive|natural|negative)",
                fields[4]
            ))
        })?;
        let split = Split::parse(fields[5]).ok_or_else(|| {
            Error::data(format!(
                "manifest row {row}: unknown split token {:?} (expected train|test|ood)",
                fields[5]
            ))
        })?;
        seen_ids.push(id.clone());
        records.push(ClipRecord {
            id,
            audio,
            coeffs,
            ref_frame,
            attitude,
            split,
        });
    }
    Ok(records)
}

/// Parse a coefficient CSV: no header, `angle + translation + expression`
/// columns per row.
pub fn load_coeffs(path: &Path, dims: &CoeffDims) -> Result<CoeffSequence> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("coeffs: cannot read {}: {e}", path.display())))?;
    let width = dims.width();
    let mut frames = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::data(format!(
                "coeffs {} row {}: expected {width} columns, got {}",
                path.display(),
                lineno + 1,
                cells.len()
            )));
        }
        let values: Vec<f64> = cells
            .iter()
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| {
                    Error::data(format!(
                        "coeffs {} row {}: non-numeric cell {c:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        frames.push(CoeffFrame::from_flat(dims, &values)?);
    }
    CoeffSequence::new(*dims, frames)
}

/// Write a coefficient CSV with 9-significant-digit cells.
pub fn save_coeffs(seq: &CoeffSequence, path: &Path) -> Result<()> {
    let mut out = String::new();
    for frame in seq.frames() {
        let cells: Vec<String> = frame.to_flat().iter().map(|v| audio::fmt_sig9(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)
        .map_err(|e| Error::data(format!("coeffs: cannot write {}: {e}", path.display())))
}

/// A record loaded to memory: extracted features, aligned coefficients,
/// and the resolved reference frame.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub record: ClipRecord,
    pub clip: TrainClip,
}

/// Load one clip: decode audio, extract features, read coefficients,
/// reconcile frame counts (tolerating +/-1 by truncation), and pick the
/// reference coefficient frame.
pub fn load_clip(
    record: &ClipRecord,
    frontend: &FrontendConfig,
    dims: &CoeffDims,
) -> Result<LoadedClip> {
    let waveform = audio::load_wav(&record.audio)?;
    let features = audio::extract_features(&waveform, frontend)?;
    let mut coeffs = load_coeffs(&record.coeffs, dims)?;

    let feature_frames = features.len();
    let coeff_frames = coeffs.len();
    let diff = feature_frames.abs_diff(coeff_frames);
    if diff > 1 {
        return Err(Error::data(format!(
            "clip {}: {} coefficient frames vs {} feature frames (difference > 1)",
            record.id, coeff_frames, feature_frames
        )));
    }
    let usable = feature_frames.min(coeff_frames);
    if usable == 0 {
        return Err(Error::data(format!("clip {}: no usable frames", record.id)));
    }
    coeffs.truncate(usable);

    if record.ref_frame >= coeffs.len() {
        return Err(Error::data(format!(
            "clip {}: ref_frame {} out of range ({} frames)",
            record.id,
            record.ref_frame,
            coeffs.len()
        )));
    }
    let ref_frame = coeffs.frame(record.ref_frame).clone();

    let mut features_tensor = features.to_tensor();
    if usable < feature_frames {
        // Trim the tensor's time axis to the reconciled length.
        let full = features_tensor.data();
        let mut trimmed = Vec::with_capacity(audio::FEATURE_DIM * usable);
        for c in 0..audio::FEATURE_DIM {
            trimmed.extend_from_slice(&full[c * feature_frames..c * feature_frames + usable]);
        }
        features_tensor = crate::tensor::Tensor::from_raw(vec![audio::FEATURE_DIM, usable], trimmed);
    }

    Ok(LoadedClip {
        record: record.clone(),
        clip: TrainClip {
            id: record.id.clone(),
            features: features_tensor,
            coeffs,
            ref_frame,
        },
    })
}

/// Load every manifest record, optionally filtered by split.
pub fn load_clips(
    manifest_path: &Path,
    frontend: &FrontendConfig,
    dims: &CoeffDims,
    split: Option<Split>,
) -> Result<Vec<LoadedClip>> {
    let records = load_manifest(manifest_path)?;
    records
        .iter()
        .filter(|r| split.map(|s| r.split == s).unwrap_or(true))
        .map(|r| load_clip(r, frontend, dims))
        .collect()
}
