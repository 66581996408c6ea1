//! Manifests, stratified group-aware splitting, statistics, and the
//! per-epoch sample stream.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::augment::{augment, AugmentPolicy};
use crate::error::{Error, Result};
use crate::geometry::{ProbeKind, ViewingWindow};
use crate::raster::{load_image, GrayImage};
use crate::rng::ItemRng;

/// Default train/validation/test fractions.
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.72, 0.14, 0.14];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Positive, Label::Negative];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Label::Positive)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Label::Positive),
            "negative" => Ok(Label::Negative),
            other => Err(format!(
                "unknown label {other:?} (allowed: positive, negative)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub path: String,
    pub probe: ProbeKind,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 8]>,
}

impl ManifestRecord {
    pub fn viewing_window(&self) -> Result<Option<ViewingWindow>> {
        self.window
            .map(|a| ViewingWindow::from_annotation(a, self.probe))
            .transpose()
    }

    /// Splitting unit: the video when known, otherwise the record itself.
    pub fn group_key(&self) -> String {
        match &self.video_id {
            Some(v) => format!("video:{v}"),
            None => format!("item:{}", self.id),
        }
    }
}

const KNOWN_FIELDS: [&str; 6] = ["id", "path", "probe", "label", "video_id", "window"];

/// Reads a JSON-lines manifest. Blank lines are skipped.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn parse_manifest(text: &str, source: &str) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(line).map_err(|message| Error::Manifest {
            path: source.to_string(),
            line: i + 1,
            message,
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(records)
}

fn parse_record(line: &str) -> std::result::Result<ManifestRecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("expected a JSON object")?;
    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            log::warn!("ignoring unknown manifest field {key:?}");
        }
    }
    let string = |key: &str| -> std::result::Result<String, String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(format!("field {key:?} must be a string, got {other}")),
            None => Err(format!("missing field {key:?}")),
        }
    };
    let id = string("id")?;
    let path = string("path")?;
    let probe: ProbeKind = string("probe")?.parse()?;
    let label: Label = string("label")?.parse()?;
    let video_id = match obj.get("video_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => return Err(format!("field \"video_id\" must be a string, got {other}")),
    };
    let window = match obj.get("window") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) if items.len() == 8 => {
            let mut a = [0.0; 8];
            for (slot, v) in a.iter_mut().zip(items) {
                *slot = v
                    .as_f64()
                    .ok_or_else(|| format!("malformed window annotation: {v} is not a number"))?;
            }
            ViewingWindow::from_annotation(a, probe)
                .map_err(|e| format!("malformed window annotation: {e}"))?;
            Some(a)
        }
        Some(other) => {
            return Err(format!(
                "malformed window annotation: expected 8 numbers, got {other}"
            ))
        }
    };
    Ok(ManifestRecord {
        id,
        path,
        probe,
        label,
        video_id,
        window,
    })
}

pub fn write_manifest(records: &[ManifestRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("manifest record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
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
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!(
                "unknown split {other:?} (allowed: train, val, test)"
            )),
        }
    }
}

/// Record id → split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitAssignment(BTreeMap<String, Split>);

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.0.get(id).copied()
    }

    pub fn insert(&mut self, id: impl Into<String>, split: Split) {
        self.0.insert(id.into(), split);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.iter()
            .filter(|(_, s)| *s == split)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn sizes(&self) -> BTreeMap<Split, usize> {
        let mut sizes: BTreeMap<Split, usize> = Split::ALL.iter().map(|&s| (s, 0)).collect();
        for (_, s) in self.iter() {
            *sizes.entry(s).or_default() += 1;
        }
        sizes
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("assignment serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub assignment: SplitAssignment,
    pub warnings: Vec<String>,
}

fn validate_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidFractions(format!(
            "{f:?} must be non-negative"
        )));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidFractions(format!(
            "{f:?} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` items to `fractions`; ties go to
/// the earlier split.
fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Unit that [`split_by`] keeps together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    /// Records sharing a `video_id` stay together.
    #[default]
    Video,
    /// Every record is its own group; video ids are ignored.
    Item,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "video" => Ok(GroupBy::Video),
            "item" => Ok(GroupBy::Item),
            other => Err(format!("unknown grouping {other:?} (allowed: video, item)")),
        }
    }
}

/// Splits records so that every video lands in exactly one split and each
/// (label, probe) stratum approximates `fractions` at group granularity.
pub fn split(records: &[ManifestRecord], fractions: [f64; 3], seed: u64) -> Result<SplitReport> {
    split_by(records, fractions, seed, GroupBy::Video)
}

/// [`split`] with an explicit grouping unit.
pub fn split_by(
    records: &[ManifestRecord],
    fractions: [f64; 3],
    seed: u64,
    group_by: GroupBy,
) -> Result<SplitReport> {
    validate_fractions(fractions)?;
    let mut warnings = Vec::new();

    let mut groups: BTreeMap<String, Vec<&ManifestRecord>> = BTreeMap::new();
    for r in records {
        let key = match group_by {
            GroupBy::Video => r.group_key(),
            GroupBy::Item => format!("item:{}", r.id),
        };
        groups.entry(key).or_default().push(r);
    }

    let mut strata: BTreeMap<(Label, ProbeKind), Vec<&str>> = BTreeMap::new();
    for (key, members) in &groups {
        let first = members[0];
        if members
            .iter()
            .any(|r| r.label != first.label || r.probe != first.probe)
        {
            warnings.push(format!(
                "group {key} mixes labels or probe kinds; stratified as {}/{}",
                first.label, first.probe
            ));
        }
        strata
            .entry((first.label, first.probe))
            .or_default()
            .push(key);
    }

    let mut ordered: Vec<_> = strata.into_iter().collect();
    // largest stratum first
    ordered.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));

    let mut assignment = SplitAssignment::default();
    for ((label, probe), mut keys) in ordered {
        let counts = if keys.len() < 3 {
            warnings.push(format!(
                "stratum {label}/{probe} has {} group(s), fewer than 3; assigned to train",
                keys.len()
            ));
            [keys.len(), 0, 0]
        } else {
            apportion(keys.len(), fractions)
        };
        ItemRng::derive(seed, &format!("split/{label}/{probe}"), 0).shuffle(&mut keys);
        let mut cursor = 0;
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for key in &keys[cursor..cursor + count] {
                for r in &groups[*key] {
                    assignment.insert(r.id.clone(), split);
                }
            }
            cursor += count;
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SplitReport {
        assignment,
        warnings,
    })
}

/// Video ids whose records were assigned to more than one split.
pub fn leaked_videos(records: &[ManifestRecord], assignment: &SplitAssignment) -> Vec<String> {
    let mut seen: BTreeMap<&str, BTreeSet<Split>> = BTreeMap::new();
    for r in records {
        if let (Some(v), Some(s)) = (&r.video_id, assignment.get(&r.id)) {
            seen.entry(v).or_default().insert(s);
        }
    }
    seen.into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(v, _)| v.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellCount {
    pub probe: ProbeKind,
    pub label: Label,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    pub by_probe: BTreeMap<ProbeKind, usize>,
    pub by_label: BTreeMap<Label, usize>,
    pub cells: Vec<CellCount>,
    pub windows_annotated: usize,
}

pub fn stats(records: &[ManifestRecord]) -> DatasetStats {
    let count = |f: &dyn Fn(&ManifestRecord) -> bool| records.iter().filter(|r| f(r)).count();
    DatasetStats {
        total: records.len(),
        by_probe: ProbeKind::ALL
            .iter()
            .map(|&p| (p, count(&|r| r.probe == p)))
            .collect(),
        by_label: Label::ALL
            .iter()
            .map(|&l| (l, count(&|r| r.label == l)))
            .collect(),
        cells: ProbeKind::ALL
            .iter()
            .flat_map(|&probe| {
                Label::ALL.iter().map(move |&label| CellCount {
                    probe,
                    label,
                    count: count(&|r| r.probe == probe && r.label == label),
                })
            })
            .collect(),
        windows_annotated: count(&|r| r.window.is_some()),
    }
}

impl DatasetStats {
    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:<9} {:>8}", "probe", "label", "count");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<8} {:<9} {:>8}",
                c.probe.as_str(),
                c.label.as_str(),
                c.count
            );
        }
        for (p, n) in &self.by_probe {
            let _ = writeln!(out, "{:<8} {:<9} {:>8}", p.as_str(), "*", n);
        }
        for (l, n) in &self.by_label {
            let _ = writeln!(out, "{:<8} {:<9} {:>8}", "*", l.as_str(), n);
        }
        let _ = writeln!(out, "{:<8} {:<9} {:>8}", "*", "*", self.total);
        let _ = writeln!(
            out,
            "windows annotated: {}/{}",
            self.windows_annotated, self.total
        );
        out
    }
}

/// Where stream images come from.
pub trait ImageSource: Sync {
    fn load(&self, record: &ManifestRecord) -> Result<GrayImage>;
}

impl<F> ImageSource for F
where
    F: Fn(&ManifestRecord) -> Result<GrayImage> + Sync,
{
    fn load(&self, record: &ManifestRecord) -> Result<GrayImage> {
        self(record)
    }
}

/// Loads record paths from disk, resolving relative paths against `root`
/// (normally the manifest's directory).
#[derive(Debug, Clone)]
pub struct DiskSource {
    root: PathBuf,
}

impl DiskSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DiskSource { root: root.into() }
    }

    pub fn for_manifest(manifest: impl AsRef<Path>) -> Self {
        DiskSource::new(manifest.as_ref().parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, record: &ManifestRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }
}

impl ImageSource for DiskSource {
    fn load(&self, record: &ManifestRecord) -> Result<GrayImage> {
        load_image(self.resolve(record))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub id: String,
    pub label: Label,
    pub image: GrayImage,
    pub window: ViewingWindow,
}

/// Records decoded and augmented per parallel batch.
const STREAM_CHUNK: usize = 64;

/// One epoch of one split, in seeded-shuffled order.
///
/// Only the train split is augmented. Items are produced in parallel chunks on
/// the ambient rayon pool; each item's randomness is derived from
/// `(seed, id, epoch)`, so the output is the same for any pool size.
pub struct EpochStream<'a, S: ImageSource> {
    queue: Vec<(&'a ManifestRecord, ViewingWindow)>,
    cursor: usize,
    buffer: VecDeque<Result<StreamItem>>,
    source: &'a S,
    policy: AugmentPolicy,
    augmenting: bool,
    seed: u64,
    epoch: u64,
    augment_calls: AtomicUsize,
}

pub fn stream<'a, S: ImageSource>(
    records: &'a [ManifestRecord],
    assignment: &SplitAssignment,
    split: Split,
    policy: &AugmentPolicy,
    seed: u64,
    epoch: u64,
    source: &'a S,
) -> Result<EpochStream<'a, S>> {
    policy.validate()?;
    let mut queue = Vec::new();
    for r in records {
        let assigned = assignment
            .get(&r.id)
            .ok_or_else(|| Error::Unassigned(r.id.clone()))?;
        if assigned != split {
            continue;
        }
        let window = r
            .viewing_window()?
            .ok_or_else(|| Error::MissingWindow(r.id.clone()))?;
        queue.push((r, window));
    }
    queue.sort_by(|a, b| a.0.id.cmp(&b.0.id));
    ItemRng::derive(seed, &format!("stream/{split}"), epoch).shuffle(&mut queue);
    Ok(EpochStream {
        queue,
        cursor: 0,
        buffer: VecDeque::new(),
        source,
        policy: policy.clone(),
        augmenting: split == Split::Train,
        seed,
        epoch,
        augment_calls: AtomicUsize::new(0),
    })
}

impl<S: ImageSource> EpochStream<'_, S> {
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Ids in delivery order.
    pub fn order(&self) -> Vec<&str> {
        self.queue.iter().map(|(r, _)| r.id.as_str()).collect()
    }

    /// Number of times the augmenter has been invoked so far.
    pub fn augment_calls(&self) -> usize {
        self.augment_calls.load(Ordering::Relaxed)
    }

    fn produce(&self, record: &ManifestRecord, window: &ViewingWindow) -> Result<StreamItem> {
        let image = self.source.load(record)?;
        let (image, window) = if self.augmenting {
            self.augment_calls.fetch_add(1, Ordering::Relaxed);
            let mut rng = ItemRng::derive(self.seed, &record.id, self.epoch);
            augment(&image, window, &self.policy, &mut rng)?
        } else {
            (image, *window)
        };
        Ok(StreamItem {
            id: record.id.clone(),
            label: record.label,
            image,
            window,
        })
    }

    /// Drains the rest of the epoch, stopping at the first error.
    pub fn collect_all(self) -> Result<Vec<StreamItem>> {
        self.collect()
    }
}

impl<S: ImageSource> Iterator for EpochStream<'_, S> {
    type Item = Result<StreamItem>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.buffer.is_empty() && self.cursor < self.queue.len() {
            let end = (self.cursor + STREAM_CHUNK).min(self.queue.len());
            let chunk = &self.queue[self.cursor..end];
            let produced: Vec<_> = chunk.par_iter().map(|(r, w)| self.produce(r, w)).collect();
            self.buffer.extend(produced);
            self.cursor = end;
        }
        self.buffer.pop_front()
    }
}
