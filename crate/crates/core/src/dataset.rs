//! Candidate-pair datasets, the textual pair format, seed sampling and the
//! label store that backs the labeling oracle.
//!
//! Datasets are CSV files whose header names one column per record attribute,
//! prefixed with the side: `left_title,right_title,left_price,...`. Two
//! optional columns are recognised: `label` (0/1 ground truth) and `id`
//! (explicit pair id; defaults to the zero-based data row index). A `split`
//! column with values `train`, `valid` or `test` pins the split of each row.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary match label: 1 = match, 0 = non-match.
pub type Label = u8;

pub(crate) fn check_label(value: i64) -> Result<Label> {
    match value {
        0 | 1 => Ok(value as Label),
        other => Err(Error::InvalidLabel(other)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub record_id: String,
    /// Attribute name/value pairs in source order. Names are unique.
    pub attributes: Vec<(String, String)>,
}

impl Record {
    pub fn new(record_id: impl Into<String>, attributes: Vec<(String, String)>) -> Self {
        Self {
            record_id: record_id.into(),
            attributes,
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub pair_id: String,
    pub left: Record,
    pub right: Record,
    pub ground_truth: Option<Label>,
}

/// `[COL] <name> [VAL] <value>` for every attribute, space separated. An empty
/// value contributes no token, so `[VAL]` is directly followed by the next
/// `[COL]`.
pub fn serialize_record(record: &Record) -> String {
    let mut tokens: Vec<&str> = Vec::with_capacity(record.attributes.len() * 4);
    for (name, value) in &record.attributes {
        tokens.push("[COL]");
        tokens.push(name);
        tokens.push("[VAL]");
        if !value.is_empty() {
            tokens.push(value);
        }
    }
    tokens.join(" ")
}

pub fn serialize_pair(pair: &CandidatePair) -> String {
    format!(
        "[CLS] {} [SEP] {}",
        serialize_record(&pair.left),
        serialize_record(&pair.right)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

impl SplitTag {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Some(Self::Train),
            "valid" | "validation" | "val" => Some(Self::Valid),
            "test" => Some(Self::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    /// The active-learning universe D: seed and pool are both drawn from here.
    pub train_pool: Vec<CandidatePair>,
    pub validation: Vec<CandidatePair>,
    pub test: Vec<CandidatePair>,
}

impl DatasetSplit {
    /// Split by explicit tags where present, otherwise shuffle the labeled pairs
    /// 3:1:1 into pool/validation/test. Unlabeled pairs always stay in the pool.
    pub fn from_pairs(pairs: Vec<CandidatePair>, tags: Option<Vec<SplitTag>>, seed: u64) -> Result<Self> {
        let mut split = DatasetSplit::default();
        match tags {
            Some(tags) => {
                for (pair, tag) in pairs.into_iter().zip(tags) {
                    match tag {
                        SplitTag::Train => split.train_pool.push(pair),
                        SplitTag::Valid => split.validation.push(pair),
                        SplitTag::Test => split.test.push(pair),
                    }
                }
            }
            None => {
                let (mut labeled, unlabeled): (Vec<_>, Vec<_>) = pairs
                    .into_iter()
                    .enumerate()
                    .partition(|(_, p)| p.ground_truth.is_some());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                labeled.shuffle(&mut rng);
                let n = labeled.len();
                let n_valid = n / 5;
                let n_test = n / 5;
                let mut pool = labeled.split_off(n_valid + n_test);
                let mut test = labeled.split_off(n_valid);
                let mut validation = labeled;
                pool.extend(unlabeled);
                // Source order within each part keeps index tie-breaks aligned with the file.
                for part in [&mut pool, &mut validation, &mut test] {
                    part.sort_by_key(|(i, _)| *i);
                }
                let strip = |v: Vec<(usize, CandidatePair)>| v.into_iter().map(|(_, p)| p).collect();
                split.train_pool = strip(pool);
                split.validation = strip(validation);
                split.test = strip(test);
            }
        }
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for pair in self.train_pool.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(pair.pair_id.as_str()) {
                return Err(Error::DuplicatePairId(pair.pair_id.clone()));
            }
        }
        for pair in self.validation.iter().chain(&self.test) {
            if pair.ground_truth.is_none() {
                return Err(Error::MissingGroundTruth(pair.pair_id.clone()));
            }
        }
        Ok(())
    }
}

struct LoadedRows {
    pairs: Vec<CandidatePair>,
    tags: Option<Vec<SplitTag>>,
}

enum Column {
    Id,
    Label,
    Split,
    Left(usize),
    Right(usize),
}

fn read_csv(path: &Path) -> Result<LoadedRows> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut left_names = Vec::new();
    let mut right_names = Vec::new();
    let mut columns = Vec::with_capacity(headers.len());
    for name in headers.iter() {
        let name = name.trim();
        let column = if name == "id" {
            Column::Id
        } else if name == "label" {
            Column::Label
        } else if name == "split" {
            Column::Split
        } else if let Some(attr) = name.strip_prefix("left_") {
            left_names.push(attr.to_string());
            Column::Left(left_names.len() - 1)
        } else if let Some(attr) = name.strip_prefix("right_") {
            right_names.push(attr.to_string());
            Column::Right(right_names.len() - 1)
        } else {
            return Err(parse_err(
                1,
                format!(
                    "unrecognised column `{name}`; expected `id`, `label`, `split`, `left_<attribute>` or `right_<attribute>`"
                ),
            ));
        };
        columns.push(column);
    }
    for names in [&left_names, &right_names] {
        let mut unique = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !unique.insert(n.as_str())) {
            return Err(parse_err(1, format!("attribute `{dup}` appears twice on one side")));
        }
    }
    let has_split = columns.iter().any(|c| matches!(c, Column::Split));

    let mut pairs = Vec::new();
    let mut tags = Vec::new();
    let mut ids = HashSet::new();
    for (row_index, row) in reader.records().enumerate() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(row_index as u64 + 2);
        if row.len() != headers.len() {
            return Err(parse_err(
                line,
                format!(
                    "row {} has {} fields but the header has {}",
                    row_index + 1,
                    row.len(),
                    headers.len()
                ),
            ));
        }
        let mut pair_id = row_index.to_string();
        let mut label = None;
        let mut tag = SplitTag::Train;
        let mut left = vec![String::new(); left_names.len()];
        let mut right = vec![String::new(); right_names.len()];
        for (column, value) in columns.iter().zip(row.iter()) {
            match column {
                Column::Id => pair_id = value.trim().to_string(),
                Column::Label => {
                    let value = value.trim();
                    if !value.is_empty() {
                        let parsed = value
                            .parse::<f64>()
                            .ok()
                            .filter(|v| *v == 0.0 || *v == 1.0)
                            .ok_or_else(|| parse_err(line, format!("label `{value}` is not 0 or 1")))?;
                        label = Some(parsed as Label);
                    }
                }
                Column::Split => {
                    tag = SplitTag::parse(value)
                        .ok_or_else(|| parse_err(line, format!("split `{value}` is not train/valid/test")))?;
                }
                Column::Left(i) => left[*i] = value.to_string(),
                Column::Right(i) => right[*i] = value.to_string(),
            }
        }
        if !ids.insert(pair_id.clone()) {
            return Err(Error::DuplicatePairId(pair_id));
        }
        pairs.push(CandidatePair {
            left: Record::new(
                format!("{pair_id}:left"),
                left_names.iter().cloned().zip(left).collect(),
            ),
            right: Record::new(
                format!("{pair_id}:right"),
                right_names.iter().cloned().zip(right).collect(),
            ),
            pair_id,
            ground_truth: label,
        });
        tags.push(tag);
    }
    Ok(LoadedRows {
        pairs,
        tags: has_split.then_some(tags),
    })
}

pub fn load_candidate_pairs(path: impl AsRef<Path>) -> Result<Vec<CandidatePair>> {
    Ok(read_csv(path.as_ref())?.pairs)
}

/// Load a dataset and split it into pool/validation/test (see [`DatasetSplit::from_pairs`]).
pub fn load_dataset(path: impl AsRef<Path>, seed: u64) -> Result<DatasetSplit> {
    let rows = read_csv(path.as_ref())?;
    DatasetSplit::from_pairs(rows.pairs, rows.tags, seed)
}

/// Write pairs in the loader's CSV layout. Attribute columns come from the first pair.
pub fn write_candidate_pairs(path: impl AsRef<Path>, pairs: &[CandidatePair], split: Option<&[SplitTag]>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let Some(first) = pairs.first() else {
        writer.write_record(["id", "label"])?;
        writer.flush()?;
        return Ok(());
    };
    let mut header = vec!["id".to_string(), "label".to_string()];
    if split.is_some() {
        header.push("split".into());
    }
    header.extend(first.left.attributes.iter().map(|(n, _)| format!("left_{n}")));
    header.extend(first.right.attributes.iter().map(|(n, _)| format!("right_{n}")));
    writer.write_record(&header)?;
    for (i, pair) in pairs.iter().enumerate() {
        let mut row = vec![
            pair.pair_id.clone(),
            pair.ground_truth.map(|l| l.to_string()).unwrap_or_default(),
        ];
        if let Some(tags) = split {
            row.push(
                match tags[i] {
                    SplitTag::Train => "train",
                    SplitTag::Valid => "valid",
                    SplitTag::Test => "test",
                }
                .into(),
            );
        }
        row.extend(pair.left.attributes.iter().map(|(_, v)| v.clone()));
        row.extend(pair.right.attributes.iter().map(|(_, v)| v.clone()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Draw a class-balanced labeled seed, uniformly without replacement within each class.
pub fn draw_seed(pool: &[CandidatePair], n_pos: usize, n_neg: usize, seed: u64) -> Result<Vec<String>> {
    let positives: Vec<&CandidatePair> = pool.iter().filter(|p| p.ground_truth == Some(1)).collect();
    let negatives: Vec<&CandidatePair> = pool.iter().filter(|p| p.ground_truth == Some(0)).collect();
    if positives.len() < n_pos || negatives.len() < n_neg {
        return Err(Error::InsufficientSeed {
            need_pos: n_pos,
            need_neg: n_neg,
            have_pos: positives.len(),
            have_neg: negatives.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<String> = positives
        .choose_multiple(&mut rng, n_pos)
        .map(|p| p.pair_id.clone())
        .collect();
    ids.extend(negatives.choose_multiple(&mut rng, n_neg).map(|p| p.pair_id.clone()));
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub pair_id: String,
    pub label: Label,
    pub provenance: Provenance,
    /// Seconds since the Unix epoch.
    pub timestamp: f64,
}

/// Labels recorded so far. A pair's label never changes once recorded; an
/// optional JSON Lines journal receives every new entry as it is recorded.
#[derive(Debug, Default)]
pub struct LabelStore {
    entries: HashMap<String, LabelEntry>,
    order: Vec<String>,
    known_ids: Option<HashSet<String>>,
    journal: Option<(PathBuf, File)>,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restrict recorded ids to the members of `pool` (the dataset D).
    pub fn for_pool(pool: &[CandidatePair]) -> Self {
        Self {
            known_ids: Some(pool.iter().map(|p| p.pair_id.clone()).collect()),
            ..Self::default()
        }
    }

    /// Replay an existing journal (if any) and append new entries to it.
    pub fn attach_journal(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: LabelEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?;
                self.insert_entry(entry)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        self.journal = Some((path, file));
        Ok(())
    }

    pub fn get(&self, pair_id: &str) -> Option<Label> {
        self.entries.get(pair_id).map(|e| e.label)
    }

    pub fn entry(&self, pair_id: &str) -> Option<&LabelEntry> {
        self.entries.get(pair_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in the order they were recorded.
    pub fn entries(&self) -> impl Iterator<Item = &LabelEntry> {
        self.order.iter().map(|id| &self.entries[id])
    }

    /// Record a label. Returns `Ok(false)` if the identical label was already
    /// present, and an error if it conflicts with the recorded one.
    pub fn record(&mut self, pair_id: &str, label: Label, provenance: Provenance) -> Result<bool> {
        let label = check_label(label as i64)?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let entry = LabelEntry {
            pair_id: pair_id.to_string(),
            label,
            provenance,
            timestamp,
        };
        let inserted = self.insert_entry(entry)?;
        if inserted {
            if let Some((_, file)) = self.journal.as_mut() {
                let line = serde_json::to_string(&self.entries[pair_id])?;
                writeln!(file, "{line}")?;
                file.flush()?;
            }
        }
        Ok(inserted)
    }

    fn insert_entry(&mut self, entry: LabelEntry) -> Result<bool> {
        check_label(entry.label as i64)?;
        if let Some(known) = &self.known_ids {
            if !known.contains(&entry.pair_id) {
                return Err(Error::UnknownPairId(entry.pair_id));
            }
        }
        if let Some(existing) = self.entries.get(&entry.pair_id) {
            if existing.label != entry.label {
                return Err(Error::LabelConflict {
                    pair_id: entry.pair_id,
                    recorded: existing.label,
                    submitted: entry.label,
                });
            }
            return Ok(false);
        }
        self.order.push(entry.pair_id.clone());
        self.entries.insert(entry.pair_id.clone(), entry);
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    GroundTruth,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleAnswer {
    Label(Label),
    /// Human mode: no label has been submitted for the pair yet.
    Pending,
}

/// Ask the oracle for a pair's label. Ground-truth mode reveals and records the
/// dataset label; human mode only returns labels already submitted to the store.
pub fn oracle_label(pair: &CandidatePair, mode: OracleMode, store: &mut LabelStore) -> Result<OracleAnswer> {
    if let Some(label) = store.get(&pair.pair_id) {
        return Ok(OracleAnswer::Label(label));
    }
    match mode {
        OracleMode::GroundTruth => {
            let label = pair
                .ground_truth
                .ok_or_else(|| Error::MissingGroundTruth(pair.pair_id.clone()))?;
            store.record(&pair.pair_id, label, Provenance::Oracle)?;
            Ok(OracleAnswer::Label(label))
        }
        OracleMode::Human => Ok(OracleAnswer::Pending),
    }
}
