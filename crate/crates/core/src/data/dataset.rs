//! In-memory splits and their on-disk layout.
//!
//! A split directory holds two files:
//!
//! - `manifest.jsonl`: a header line (`split`, `dim`, `text_len_max`,
//!   `audio_len_max`, `dtype`, `records`) followed by one line per record
//!   with keys `id`, `label`, `text_off`, `text_len`, `audio_off`,
//!   `audio_len`. Offsets and lengths are byte positions in `features.bin`.
//! - `features.bin`: the text and audio tensors of every record, in
//!   manifest order, each in the XMF1 tensor format.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EmotionLabel;
use crate::error::{Error, Result};
use crate::tensor::{read_tensor, tensor_to_bytes, Scalar, Tensor};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FEATURES_FILE: &str = "features.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown split {s:?}")))
    }
}

/// One utterance: gold label plus per-modality feature sequences
/// `text: [T_t'×d]`, `audio: [T_a'×d]` before padding.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord<T: Scalar = f32> {
    pub id: String,
    pub label: EmotionLabel,
    pub text: Tensor<T>,
    pub audio: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<T: Scalar = f32> {
    pub split: Split,
    pub dim: usize,
    pub text_len_max: usize,
    pub audio_len_max: usize,
    pub records: Vec<UtteranceRecord<T>>,
}

impl<T: Scalar> SplitDataset<T> {
    pub fn new(split: Split, dim: usize, text_len_max: usize, audio_len_max: usize) -> Self {
        Self {
            split,
            dim,
            text_len_max,
            audio_len_max,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn check_record(&self, r: &UtteranceRecord<T>) -> Result<()> {
        for (name, t, max) in [("text", &r.text, self.text_len_max), ("audio", &r.audio, self.audio_len_max)] {
            let (len, d) = t.dims2()?;
            if d != self.dim {
                return Err(Error::Shape {
                    op: if name == "text" { "text features" } else { "audio features" },
                    lhs: t.shape().to_vec(),
                    rhs: vec![max, self.dim],
                });
            }
            if len > max {
                return Err(Error::LengthOverflow { len, target: max });
            }
        }
        Ok(())
    }

    pub fn push(&mut self, r: UtteranceRecord<T>) -> Result<()> {
        self.check_record(&r)?;
        self.records.push(r);
        Ok(())
    }

    /// Dimensions, lengths and id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            self.check_record(r)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate id {:?} in {} split", r.id, self.split)));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<EmotionLabel> {
        self.records.iter().map(|r| r.label).collect()
    }
}

/// Exact label histogram in canonical order.
pub fn class_counts<T: Scalar>(ds: &SplitDataset<T>) -> [u64; EmotionLabel::COUNT] {
    let mut counts = [0u64; EmotionLabel::COUNT];
    for r in &ds.records {
        counts[r.label.index()] += 1;
    }
    counts
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    split: Split,
    dim: usize,
    text_len_max: usize,
    audio_len_max: usize,
    dtype: String,
    records: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    id: String,
    label: String,
    text_off: u64,
    text_len: u64,
    audio_off: u64,
    audio_len: u64,
}

pub fn write_dataset<T: Scalar>(ds: &SplitDataset<T>, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = Header {
        split: ds.split,
        dim: ds.dim,
        text_len_max: ds.text_len_max,
        audio_len_max: ds.audio_len_max,
        dtype: T::DTYPE.name().to_string(),
        records: ds.records.len(),
    };
    let mut manifest = serde_json::to_string(&header).map_err(|e| Error::json("manifest header", e))?;
    manifest.push('\n');
    let mut blob = Vec::new();
    for r in &ds.records {
        let text = tensor_to_bytes(&r.text);
        let audio = tensor_to_bytes(&r.audio);
        let entry = Entry {
            id: r.id.clone(),
            label: r.label.as_str().to_string(),
            text_off: blob.len() as u64,
            text_len: text.len() as u64,
            audio_off: (blob.len() + text.len()) as u64,
            audio_len: audio.len() as u64,
        };
        blob.extend_from_slice(&text);
        blob.extend_from_slice(&audio);
        manifest.push_str(&serde_json::to_string(&entry).map_err(|e| Error::json("manifest entry", e))?);
        manifest.push('\n');
    }
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let fpath = dir.join(FEATURES_FILE);
    fs::write(&fpath, blob).map_err(|e| Error::io(&fpath, e))
}

/// Streaming access to a split directory: the manifest is parsed up front,
/// feature tensors are read on demand.
pub struct DatasetReader {
    header: Header,
    entries: Vec<(String, EmotionLabel, [u64; 4])>,
    features: File,
    features_path: PathBuf,
}

impl DatasetReader {
    pub fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let file = File::open(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut lines = BufReader::new(file).lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Corrupt(format!("{}: empty manifest", mpath.display())))?
            .map_err(|e| Error::io(&mpath, e))?;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| Error::json(format!("{} header", mpath.display()), e))?;

        let mut entries = Vec::with_capacity(header.records);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(&mpath, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry = serde_json::from_str(&line)
                .map_err(|err| Error::json(format!("{} line {}", mpath.display(), n + 2), err))?;
            let label = e.label.parse::<EmotionLabel>()?;
            entries.push((e.id, label, [e.text_off, e.text_len, e.audio_off, e.audio_len]));
        }
        if entries.len() != header.records {
            return Err(Error::Corrupt(format!(
                "{}: header declares {} records, found {}",
                mpath.display(),
                header.records,
                entries.len()
            )));
        }

        let fpath = dir.join(FEATURES_FILE);
        let features = File::open(&fpath).map_err(|e| Error::io(&fpath, e))?;
        let size = features.metadata().map_err(|e| Error::io(&fpath, e))?.len();
        for (id, _, [to, tl, ao, al]) in &entries {
            for (off, len) in [(*to, *tl), (*ao, *al)] {
                if off.checked_add(len).is_none_or(|end| end > size) {
                    return Err(Error::Corrupt(format!(
                        "record {id}: bytes {off}..{} lie beyond the {size}-byte {FEATURES_FILE}",
                        off.saturating_add(len)
                    )));
                }
            }
        }
        Ok(Self {
            header,
            entries,
            features,
            features_path: fpath,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn split(&self) -> Split {
        self.header.split
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    fn read_at<T: Scalar>(&mut self, id: &str, off: u64, len: u64) -> Result<Tensor<T>> {
        self.features
            .seek(SeekFrom::Start(off))
            .map_err(|e| Error::io(&self.features_path, e))?;
        let mut buf = vec![0u8; len as usize];
        self.features
            .read_exact(&mut buf)
            .map_err(|e| Error::Corrupt(format!("record {id}: reading {len} bytes at offset {off}: {e}")))?;
        let mut cursor = buf.as_slice();
        let t = read_tensor::<T, _>(&mut cursor).map_err(|e| match e {
            Error::Corrupt(m) => Error::Corrupt(format!("record {id} at offset {off}: {m}")),
            other => other,
        })?;
        if !cursor.is_empty() {
            return Err(Error::Corrupt(format!(
                "record {id} at offset {off}: {} stray bytes after tensor",
                cursor.len()
            )));
        }
        Ok(t)
    }

    pub fn read_record<T: Scalar>(&mut self, i: usize) -> Result<UtteranceRecord<T>> {
        let (id, label, [to, tl, ao, al]) = self.entries[i].clone();
        let text = self.read_at(&id, to, tl)?;
        let audio = self.read_at(&id, ao, al)?;
        for t in [&text, &audio] {
            if t.rank() != 2 || t.shape()[1] != self.header.dim {
                return Err(Error::Corrupt(format!(
                    "record {id}: feature shape {:?} does not match manifest dim {}",
                    t.shape(),
                    self.header.dim
                )));
            }
        }
        Ok(UtteranceRecord { id, label, text, audio })
    }
}

pub fn read_dataset<T: Scalar>(dir: &Path) -> Result<SplitDataset<T>> {
    let mut reader = DatasetReader::open(dir)?;
    if reader.header.dtype != T::DTYPE.name() {
        return Err(Error::Dtype {
            expected: T::DTYPE.name(),
            found: if reader.header.dtype == "f64" { "f64" } else { "f32" },
        });
    }
    let mut ds = SplitDataset::new(
        reader.header.split,
        reader.header.dim,
        reader.header.text_len_max,
        reader.header.audio_len_max,
    );
    for i in 0..reader.len() {
        let r = reader.read_record(i)?;
        ds.push(r)?;
    }
    ds.validate()?;
    Ok(ds)
}
