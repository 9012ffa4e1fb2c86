use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::LabelVolume;
use crate::error::{Error, Result};

const THORACIC_MAP: &str = include_str!("../../data/label_map.toml");

/// Reporting group of a target label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelGroup {
    Surgical,
    Btcv,
}

impl LabelGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelGroup::Surgical => "surgical",
            LabelGroup::Btcv => "btcv",
        }
    }
}

impl fmt::Display for LabelGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "surgical" | "surgery" => Ok(LabelGroup::Surgical),
            "btcv" => Ok(LabelGroup::Btcv),
            other => Err(Error::format(format!("unknown label group {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub id: u16,
    pub name: String,
    pub group: LabelGroup,
}

/// Source-label to target-label mapping plus the target list.
///
/// Target IDs are contiguous from 1. Source IDs that are not listed map to
/// background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    merges: BTreeMap<u16, u16>,
    targets: Vec<Target>,
    lookup: Vec<u16>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    #[serde(default)]
    merges: BTreeMap<String, u16>,
    targets: BTreeMap<String, RawTarget>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    name: String,
    group: LabelGroup,
}

fn parse_id(key: &str, what: &str) -> Result<u16> {
    key.trim()
        .parse()
        .map_err(|_| Error::format(format!("{what} key {key:?} is not a label ID")))
}

impl LabelMap {
    pub fn new(merges: BTreeMap<u16, u16>, mut targets: Vec<Target>) -> Result<Self> {
        targets.sort_by_key(|t| t.id);
        for (i, t) in targets.iter().enumerate() {
            if usize::from(t.id) != i + 1 {
                return Err(Error::format(format!(
                    "target IDs must be contiguous from 1; found {} at position {}",
                    t.id,
                    i + 1
                )));
            }
        }
        for (&src, &dst) in &merges {
            if usize::from(dst) > targets.len() {
                return Err(Error::format(format!("source {src} maps to undeclared target {dst}")));
            }
            if src == 0 && dst != 0 {
                return Err(Error::format("background source 0 must map to 0"));
            }
        }
        let max_src = merges.keys().next_back().copied().unwrap_or(0);
        let mut lookup = vec![0u16; usize::from(max_src) + 1];
        for (&src, &dst) in &merges {
            lookup[usize::from(src)] = dst;
        }
        Ok(Self {
            merges,
            targets,
            lookup,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawMap = toml::from_str(text).map_err(|e| Error::format(format!("label map: {e}")))?;
        let merges = raw
            .merges
            .iter()
            .map(|(k, &v)| Ok((parse_id(k, "merge")?, v)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let targets = raw
            .targets
            .into_iter()
            .map(|(k, t)| {
                Ok(Target {
                    id: parse_id(&k, "target")?,
                    name: t.name,
                    group: t.group,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(merges, targets)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled 25-label thoracic/BTCV scheme over TotalSegmentator source IDs.
    pub fn thoracic_default() -> Self {
        Self::parse(THORACIC_MAP).expect("bundled label map is valid")
    }

    /// Identity map over the given targets (every target ID maps to itself).
    pub fn identity(targets: Vec<Target>) -> Result<Self> {
        let merges = targets.iter().map(|t| (t.id, t.id)).collect();
        Self::new(merges, targets)
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn merges(&self) -> &BTreeMap<u16, u16> {
        &self.merges
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn target(&self, id: u16) -> Option<&Target> {
        id.checked_sub(1).and_then(|i| self.targets.get(usize::from(i)))
    }

    pub fn group_of(&self, id: u16) -> Option<LabelGroup> {
        self.target(id).map(|t| t.group)
    }

    /// Number of targets per group: (surgical, btcv).
    pub fn group_sizes(&self) -> (usize, usize) {
        let surgical = self.targets.iter().filter(|t| t.group == LabelGroup::Surgical).count();
        (surgical, self.targets.len() - surgical)
    }

    #[inline]
    pub fn map_id(&self, source: u16) -> u16 {
        self.lookup.get(usize::from(source)).copied().unwrap_or(0)
    }
}

/// Apply the merges voxel-wise; unlisted source IDs become background.
pub fn remap_labels(vol: &LabelVolume, map: &LabelMap) -> LabelVolume {
    vol.map(|&v| map.map_id(v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::format(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseEntry {
    pub id: String,
    pub split: Split,
    pub labels: BTreeSet<u16>,
}

/// Per-case label presence and split assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseInventory {
    pub cases: Vec<CaseEntry>,
}

#[derive(Deserialize)]
struct InventoryRow {
    case_id: String,
    split: String,
    #[serde(default)]
    labels_present: String,
}

impl CaseInventory {
    /// Reads `case_id,split,labels_present` rows; labels are `;`-separated.
    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut cases = Vec::new();
        for row in rdr.deserialize::<InventoryRow>() {
            let row = row.map_err(|e| Error::format(format!("inventory: {e}")))?;
            let labels = row
                .labels_present
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_id(s, "inventory label"))
                .collect::<Result<BTreeSet<_>>>()?;
            cases.push(CaseEntry {
                id: row.case_id,
                split: row.split.parse()?,
                labels,
            });
        }
        Ok(Self { cases })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(f)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("case_id,split,labels_present\n");
        for c in &self.cases {
            let labels: Vec<String> = c.labels.iter().map(u16::to_string).collect();
            out.push_str(&format!("{},{},{}\n", c.id, c.split, labels.join(";")));
        }
        out
    }

    pub fn count(&self, split: Split) -> usize {
        self.cases.iter().filter(|c| c.split == split).count()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &CaseEntry> {
        self.cases.iter().filter(move |c| c.split == split)
    }

    /// Assign splits in input order: the first `train` cases, then `val`, then `test`.
    /// Default sizes are 440/26/30.
    pub fn assign_splits(entries: Vec<(String, BTreeSet<u16>)>, sizes: (usize, usize, usize)) -> Result<Self> {
        let (train, val, test) = sizes;
        if entries.len() != train + val + test {
            return Err(Error::argument(format!(
                "{} cases cannot fill splits {train}/{val}/{test}",
                entries.len()
            )));
        }
        let cases = entries
            .into_iter()
            .enumerate()
            .map(|(i, (id, labels))| CaseEntry {
                id,
                labels,
                split: if i < train {
                    Split::Train
                } else if i < train + val {
                    Split::Val
                } else {
                    Split::Test
                },
            })
            .collect();
        Ok(Self { cases })
    }
}

pub const DEFAULT_SPLIT_SIZES: (usize, usize, usize) = (440, 26, 30);

/// Foreground target IDs present in a (remapped) label volume.
pub fn labels_present(vol: &LabelVolume) -> BTreeSet<u16> {
    let mut seen = vec![false; 1 << 16];
    for &v in vol.voxels() {
        seen[usize::from(v)] = true;
    }
    (1..=u16::MAX).filter(|&i| seen[usize::from(i)]).collect()
}

/// Case IDs with at least `min_labels` target labels present, in input order.
/// Cases need more than 22 of the 25 targets: `min_labels = 23`.
pub fn filter_cases(inv: &CaseInventory, min_labels: usize) -> Vec<String> {
    inv.cases
        .iter()
        .filter(|c| c.labels.len() >= min_labels)
        .map(|c| c.id.clone())
        .collect()
}

pub const DEFAULT_MIN_LABELS: usize = 23;
