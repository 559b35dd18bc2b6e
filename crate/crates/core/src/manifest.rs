//! Train/validation manifests over corrected sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Datasets whose calibration is too poor to use; never part of a manifest.
pub const EXCLUDED_DATASETS: [u32; 2] = [4, 5];

pub const MANIFEST_CSV_HEADER: &str = "split,sequence,frame_name";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("sequence {0} is assigned to both train and validation")]
    OverlappingSplits(SequenceId),

    #[error("sequence {0} belongs to an excluded dataset")]
    ExcludedDataset(SequenceId),

    #[error("sequence {0} has frames but no split assignment")]
    UnassignedSequence(SequenceId),

    #[error("invalid sequence id {0:?}, expected <dataset>_<keyframe>")]
    InvalidSequenceId(String),

    #[error("manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("split file: {0}")]
    SplitFile(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A keyframe-anchored sequence, rendered as `<dataset>_<keyframe>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SequenceId {
    pub dataset: u32,
    pub keyframe: u32,
}

impl SequenceId {
    pub const fn new(dataset: u32, keyframe: u32) -> Self {
        Self { dataset, keyframe }
    }

    pub fn is_excluded(&self) -> bool {
        EXCLUDED_DATASETS.contains(&self.dataset)
    }
}

impl fmt::Display for SequenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.dataset, self.keyframe)
    }
}

impl FromStr for SequenceId {
    type Err = ManifestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ManifestError::InvalidSequenceId(s.to_string());
        let (d, k) = s.trim().split_once('_').ok_or_else(bad)?;
        Ok(Self {
            dataset: d.parse().map_err(|_| bad())?,
            keyframe: k.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for SequenceId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SequenceId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// Which sequences go to which split. Also the JSON layout of a split file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<SequenceId>,
    pub validation: Vec<SequenceId>,
}

impl SplitAssignment {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn split_of(&self, id: SequenceId) -> Option<Split> {
        if self.train.contains(&id) {
            Some(Split::Train)
        } else if self.validation.contains(&id) {
            Some(Split::Validation)
        } else {
            None
        }
    }

    fn check(&self) -> Result<(), ManifestError> {
        let train: BTreeSet<_> = self.train.iter().collect();
        for id in self.train.iter().chain(&self.validation) {
            if id.is_excluded() {
                return Err(ManifestError::ExcludedDataset(*id));
            }
        }
        if let Some(id) = self.validation.iter().find(|id| train.contains(id)) {
            return Err(ManifestError::OverlappingSplits(*id));
        }
        Ok(())
    }
}

/// The default split: 12 training and 13 validation sequences.
pub fn default_split() -> SplitAssignment {
    let ids = |pairs: &[(u32, u32)]| pairs.iter().map(|&(d, k)| SequenceId::new(d, k)).collect();
    SplitAssignment {
        train: ids(&[
            (1, 1),
            (1, 3),
            (2, 2),
            (2, 4),
            (3, 1),
            (3, 2),
            (3, 3),
            (6, 1),
            (6, 2),
            (6, 3),
            (7, 1),
            (7, 4),
        ]),
        validation: ids(&[
            (1, 2),
            (1, 4),
            (1, 5),
            (2, 1),
            (2, 3),
            (2, 5),
            (3, 4),
            (3, 5),
            (6, 4),
            (6, 5),
            (7, 2),
            (7, 3),
            (7, 5),
        ]),
    }
}

/// Corrected output of one sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceFrames {
    pub frames: Vec<String>,
    /// Keyframe image name; never listed as a frame.
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sequence: SequenceId,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitManifest {
    pub train: Vec<ManifestEntry>,
    pub validation: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub train: BTreeMap<SequenceId, usize>,
    pub validation: BTreeMap<SequenceId, usize>,
    pub train_total: usize,
    pub validation_total: usize,
    pub grand_total: usize,
}

impl SplitManifest {
    pub fn entries(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
        }
    }

    pub fn total(&self, split: Split) -> usize {
        self.entries(split).iter().map(|e| e.frames.len()).sum()
    }

    pub fn grand_total(&self) -> usize {
        self.total(Split::Train) + self.total(Split::Validation)
    }

    pub fn summary(&self) -> ManifestSummary {
        let counts = |split| {
            self.entries(split)
                .iter()
                .map(|e| (e.sequence, e.frames.len()))
                .collect()
        };
        ManifestSummary {
            train: counts(Split::Train),
            validation: counts(Split::Validation),
            train_total: self.total(Split::Train),
            validation_total: self.total(Split::Validation),
            grand_total: self.grand_total(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MANIFEST_CSV_HEADER}")?;
        for split in [Split::Train, Split::Validation] {
            for entry in self.entries(split) {
                for frame in &entry.frames {
                    writeln!(out, "{},{},{}", split.name(), entry.sequence, frame)?;
                }
            }
        }
        out.flush()
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, ManifestError> {
        let mut manifest = SplitManifest::default();
        let mut lines = reader.lines().enumerate();
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == MANIFEST_CSV_HEADER => {}
            Some((_, Err(e))) => return Err(e.into()),
            _ => {
                return Err(ManifestError::Malformed {
                    line: 1,
                    reason: format!("expected header {MANIFEST_CSV_HEADER:?}"),
                })
            }
        }
        for (idx, line) in lines {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let (Some(split), Some(seq), Some(frame)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(ManifestError::Malformed {
                    line: lineno,
                    reason: "expected 3 fields".into(),
                });
            };
            let list = match split {
                "train" => &mut manifest.train,
                "validation" => &mut manifest.validation,
                other => {
                    return Err(ManifestError::Malformed {
                        line: lineno,
                        reason: format!("unknown split {other:?}"),
                    })
                }
            };
            let sequence: SequenceId = seq.parse()?;
            match list.last_mut() {
                Some(e) if e.sequence == sequence => e.frames.push(frame.to_string()),
                _ => list.push(ManifestEntry {
                    sequence,
                    frames: vec![frame.to_string()],
                }),
            }
        }
        Ok(manifest)
    }
}

/// Groups corrected sequences into the assigned splits.
///
/// Entries follow the assignment order; frames are sorted by name, the anchor is
/// removed, and sequences with no frames are omitted.
pub fn build_manifest(
    outputs: &BTreeMap<SequenceId, SequenceFrames>,
    assignment: &SplitAssignment,
) -> Result<SplitManifest, ManifestError> {
    assignment.check()?;
    for id in outputs.keys() {
        if id.is_excluded() {
            return Err(ManifestError::ExcludedDataset(*id));
        }
        if assignment.split_of(*id).is_none() {
            return Err(ManifestError::UnassignedSequence(*id));
        }
    }
    let collect = |ids: &[SequenceId]| -> Vec<ManifestEntry> {
        ids.iter()
            .filter_map(|id| {
                let out = outputs.get(id)?;
                let mut frames: Vec<String> = out
                    .frames
                    .iter()
                    .filter(|f| out.anchor.as_deref() != Some(f.as_str()))
                    .cloned()
                    .collect();
                frames.sort();
                frames.dedup();
                (!frames.is_empty()).then_some(ManifestEntry {
                    sequence: *id,
                    frames,
                })
            })
            .collect()
    };
    Ok(SplitManifest {
        train: collect(&assignment.train),
        validation: collect(&assignment.validation),
    })
}
