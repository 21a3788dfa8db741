//! Labeled corpus loading and seeded, stratified train/test splitting.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset file not found: {0}")]
    MissingFile(String),
    #[error("header has no column named {0:?}")]
    MissingColumn(String),
    #[error("row {row}: label {value:?} does not map to a class")]
    UnmappedLabel { row: usize, value: String },
    #[error("row {row}: text is empty")]
    EmptyText { row: usize },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("split would leave {train} train / {test} test records")]
    DegenerateSplit { train: usize, test: usize },
    #[error("class {0} has no records")]
    MissingClass(Label),
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(String),
}

/// The two news classes. `Real` is class index 0, `Fake` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Fake];

    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "Real",
            Label::Fake => "Fake",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub text: String,
    pub label: Label,
}

impl Record {
    /// `None` when the text is blank after trimming.
    pub fn new(text: impl Into<String>, label: Label) -> Option<Self> {
        let text = text.into();
        (!text.trim().is_empty()).then_some(Self { text, label })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub source: String,
}

impl Dataset {
    pub fn new(records: Vec<Record>, source: impl Into<String>) -> Self {
        Self {
            records,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn subset(&self, indices: &[usize], source: impl Into<String>) -> Dataset {
        Dataset::new(indices.iter().map(|&i| self.records[i].clone()).collect(), source)
    }
}

/// Raw label strings accepted for each class. Matching trims whitespace and
/// ignores case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    entries: Vec<(String, Label)>,
}

impl Default for LabelMap {
    fn default() -> Self {
        Self::new([("real", Label::Real), ("fake", Label::Fake)])
    }
}

impl LabelMap {
    pub fn new<S: AsRef<str>>(pairs: impl IntoIterator<Item = (S, Label)>) -> Self {
        Self {
            entries: pairs
                .into_iter()
                .map(|(s, l)| (normalize_label(s.as_ref()), l))
                .collect(),
        }
    }

    pub fn resolve(&self, raw: &str) -> Option<Label> {
        let key = normalize_label(raw);
        self.entries.iter().find(|(k, _)| *k == key).map(|&(_, l)| l)
    }

    pub fn names_for(&self, label: Label) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(k, _)| k.as_str())
            .collect()
    }
}

fn normalize_label(raw: &str) -> String {
    raw.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub text_column: String,
    pub label_column: String,
    pub label_map: LabelMap,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            text_column: "text".into(),
            label_column: "type".into(),
            label_map: LabelMap::default(),
        }
    }
}

/// Reads a headed CSV file. Column names are matched exactly after trimming.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset, IngestError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(IngestError::MissingFile(path.display().to_string()));
    }
    let file = std::fs::File::open(path)?;
    read_csv(file, path.display().to_string(), schema)
}

pub fn read_csv<R: Read>(reader: R, source: impl Into<String>, schema: &CsvSchema) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let text_col = column(&schema.text_column)?;
    let label_col = column(&schema.label_column)?;

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(csv_error)?;
        let raw_label = row.get(label_col).unwrap_or("");
        let label = schema
            .label_map
            .resolve(raw_label)
            .ok_or_else(|| IngestError::UnmappedLabel {
                row: row_no,
                value: raw_label.to_string(),
            })?;
        let text = row.get(text_col).unwrap_or("");
        let record = Record::new(text, label).ok_or(IngestError::EmptyText { row: row_no })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    Ok(Dataset::new(records, source))
}

fn csv_error(e: csv::Error) -> IngestError {
    IngestError::Csv(e.to_string())
}

/// Writes `records` with a `text_column,label_column` header; labels are
/// written as `Real` / `Fake`.
pub fn write_csv<W: Write>(
    writer: W,
    dataset: &Dataset,
    text_column: &str,
    label_column: &str,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([text_column, label_column]).map_err(csv_error)?;
    for r in &dataset.records {
        w.write_record([r.text.as_str(), &r.label.to_string()])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn class_counts(dataset: &Dataset) -> BTreeMap<Label, usize> {
    let mut counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|&l| (l, 0)).collect();
    for r in &dataset.records {
        *counts.entry(r.label).or_default() += 1;
    }
    counts
}

/// Exact train fraction in (0, 1). Serialized as `p/q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TrainFraction(Ratio<u64>);

impl TryFrom<String> for TrainFraction {
    type Error = IngestError;

    fn try_from(s: String) -> Result<Self, IngestError> {
        s.parse()
    }
}

impl From<TrainFraction> for String {
    fn from(f: TrainFraction) -> String {
        f.to_string()
    }
}

impl TrainFraction {
    pub fn new(numer: u64, denom: u64) -> Result<Self, IngestError> {
        if denom == 0 || numer == 0 || numer >= denom {
            return Err(IngestError::InvalidFraction(format!("{numer}/{denom}")));
        }
        Ok(Self(Ratio::new(numer, denom)))
    }

    pub fn ratio(self) -> Ratio<u64> {
        self.0
    }

    /// `floor(n · fraction)`.
    pub fn floor_of(self, n: usize) -> usize {
        (n as u64 * self.0.numer() / self.0.denom()) as usize
    }

    /// `n · fraction` rounded half up.
    pub fn round_of(self, n: usize) -> usize {
        let (p, q) = (*self.0.numer(), *self.0.denom());
        ((2 * n as u64 * p + q) / (2 * q)) as usize
    }
}

impl Default for TrainFraction {
    fn default() -> Self {
        Self(Ratio::new(7, 10))
    }
}

impl fmt::Display for TrainFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

/// Accepts `p/q` or a plain decimal such as `0.7`.
impl FromStr for TrainFraction {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, IngestError> {
        let bad = || IngestError::InvalidFraction(s.to_string());
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p = p.trim().parse().map_err(|_| bad())?;
            let q = q.trim().parse().map_err(|_| bad())?;
            return TrainFraction::new(p, q).map_err(|_| bad());
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_v: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        TrainFraction::new(int * denom + frac_v, denom).map_err(|_| bad())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: TrainFraction,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: TrainFraction::default(),
            seed: 0,
            stratified: true,
        }
    }
}

/// Train/test partition plus the source indices of each side, in ascending
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Seeded partition of `dataset`.
///
/// Stratified: each class (in `Label::ALL` order) is shuffled with one shared
/// SplitMix64 stream and contributes `floor(fraction · n_class)` records to
/// train; the remaining `round(fraction · N) − Σ floor` records go to train
/// one per class, in class order. Unstratified: one shuffle of all indices
/// and the first `round(fraction · N)` go to train.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, IngestError> {
    let n = dataset.len();
    let fraction = spec.train_fraction;
    let n_train = fraction.round_of(n);
    if n_train == 0 || n_train == n {
        return Err(IngestError::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }
    let counts = class_counts(dataset);
    if let Some((&label, _)) = counts.iter().find(|(_, &c)| c == 0) {
        return Err(IngestError::MissingClass(label));
    }

    let mut rng = SplitMix64::new(spec.seed);
    let mut train_indices = Vec::with_capacity(n_train);
    if spec.stratified {
        let mut per_class: Vec<Vec<usize>> = Label::ALL
            .iter()
            .map(|&l| (0..n).filter(|&i| dataset.records[i].label == l).collect())
            .collect();
        for members in &mut per_class {
            rng.shuffle(members);
        }
        let mut quota: Vec<usize> = per_class.iter().map(|m| fraction.floor_of(m.len())).collect();
        let mut leftover = n_train - quota.iter().sum::<usize>();
        while leftover > 0 {
            let before = leftover;
            for (q, members) in quota.iter_mut().zip(&per_class) {
                if leftover > 0 && *q < members.len() {
                    *q += 1;
                    leftover -= 1;
                }
            }
            if before == leftover {
                break;
            }
        }
        for (members, q) in per_class.iter().zip(quota) {
            train_indices.extend_from_slice(&members[..q]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut all);
        train_indices.extend_from_slice(&all[..n_train]);
    }
    train_indices.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train_indices {
        in_train[i] = true;
    }
    let test_indices: Vec<usize> = (0..n).filter(|&i| !in_train[i]).collect();
    if test_indices.is_empty() {
        return Err(IngestError::DegenerateSplit {
            train: train_indices.len(),
            test: 0,
        });
    }
    Ok(Split {
        train: dataset.subset(&train_indices, format!("{}#train", dataset.source)),
        test: dataset.subset(&test_indices, format!("{}#test", dataset.source)),
        train_indices,
        test_indices,
    })
}

/// Audit sidecar: header line, then `index<TAB>train|test` per source record.
pub fn write_split_manifest<W: Write>(mut w: W, split: &Split, spec: &SplitSpec) -> std::io::Result<()> {
    writeln!(
        w,
        "#split v1 seed={} fraction={} stratified={}",
        spec.seed, spec.train_fraction, spec.stratified
    )?;
    let mut rows: Vec<(usize, &str)> = split
        .train_indices
        .iter()
        .map(|&i| (i, "train"))
        .chain(split.test_indices.iter().map(|&i| (i, "test")))
        .collect();
    rows.sort_unstable();
    for (i, side) in rows {
        writeln!(w, "{i}\t{side}")?;
    }
    Ok(())
}

/// Parses a sidecar written by [`write_split_manifest`] into
/// `(train_indices, test_indices)`.
pub fn read_split_manifest(text: &str) -> Result<(Vec<usize>, Vec<usize>), IngestError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let (idx, side) = line
            .split_once('\t')
            .ok_or_else(|| IngestError::Csv(format!("bad split line {line:?}")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| IngestError::Csv(format!("bad index {idx:?}")))?;
        match side {
            "train" => train.push(idx),
            "test" => test.push(idx),
            other => return Err(IngestError::Csv(format!("unknown split side {other:?}"))),
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(labels: &[Label]) -> Dataset {
        Dataset::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Record::new(format!("doc {i}"), l).unwrap())
                .collect(),
            "test",
        )
    }

    const TABLE1: &str = "text,type\n\
\"Trump says healthcare reform push may need additional money WASHINGTON (Reuters) - President Donald Trump on Tuesday said that the Republican push to repeal Obamacare may require additional money for healthcare, but he did not specify how much more funding would be needed or how it might be used.\",Real\n\
\"China's Xi, Trump discuss 'global hot-spot issues': Xinhua BEIJING (Reuters) - Chinese President Xi Jinping and U.S. President Donald Trump on Saturday discussed \"\"global hot-spot issues\"\" on the sidelines of the G20 summit.\",Real\n\
\"Trump has talked to top lawmakers about immigration reform: White House\nWASHINGTON (Reuters) - U.S. President Donald Trump has spoken to congressional leaders about immigration reform.\",Real\n";

    #[test]
    fn loads_quoted_rows_with_commas_and_newlines() {
        let d = read_csv(TABLE1.as_bytes(), "t1", &CsvSchema::default()).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|r| r.label == Label::Real));
        assert!(d.records[0].text.starts_with("Trump says healthcare reform push"));
        assert!(d.records[1].text.contains("\"global hot-spot issues\""));
        assert!(d.records[2].text.contains('\n'));
        let counts = class_counts(&d);
        assert_eq!(counts[&Label::Real], 3);
        assert_eq!(counts[&Label::Fake], 0);
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let err = read_csv("text,type\n".as_bytes(), "x", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::EmptyDataset));
    }

    #[test]
    fn labels_match_trimmed_and_case_insensitive() {
        let csv = "text,type\nsomething happened,\"REAL \"\nother thing, fake\n";
        let d = read_csv(csv.as_bytes(), "x", &CsvSchema::default()).unwrap();
        assert_eq!(d.records[0].label, Label::Real);
        assert_eq!(d.records[1].label, Label::Fake);
    }

    #[test]
    fn crlf_rows() {
        let csv = "text,type\r\nalpha,Real\r\nbeta,Fake\r\n";
        let d = read_csv(csv.as_bytes(), "x", &CsvSchema::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.records[1].text, "beta");
    }

    #[test]
    fn row_errors_carry_row_numbers() {
        let schema = CsvSchema::default();
        let err = read_csv("text,type\nfine,Real\nbad,satire\n".as_bytes(), "x", &schema).unwrap_err();
        assert!(matches!(err, IngestError::UnmappedLabel { row: 2, ref value } if value == "satire"));
        let err = read_csv("text,type\n  ,Real\n".as_bytes(), "x", &schema).unwrap_err();
        assert!(matches!(err, IngestError::EmptyText { row: 1 }));
        let err = read_csv("body,type\nx,Real\n".as_bytes(), "x", &schema).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(ref c) if c == "text"));
    }

    #[test]
    fn missing_file() {
        let err = load_csv("/nonexistent/news.csv", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingFile(ref p) if p.contains("news.csv")));
    }

    #[test]
    fn class_counts_by_hand() {
        use Label::*;
        let counts = class_counts(&ds(&[Real, Fake, Real, Fake, Real]));
        assert_eq!((counts[&Real], counts[&Fake]), (3, 2));
        let empty = class_counts(&Dataset::new(vec![], "e"));
        assert_eq!((empty[&Real], empty[&Fake]), (0, 0));
    }

    #[test]
    fn full_sized_split() {
        let labels: Vec<Label> = (0..5000).map(|i| Label::ALL[i % 2]).collect();
        let s = split(&ds(&labels), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (3500, 1500));
    }

    #[test]
    fn ten_records_per_class_rounding() {
        use Label::*;
        let d = ds(&[Real, Real, Real, Real, Real, Fake, Fake, Fake, Fake, Fake]);
        let s = split(&d, &SplitSpec::default()).unwrap();
        let tr = class_counts(&s.train);
        let te = class_counts(&s.test);
        assert_eq!((tr[&Real], tr[&Fake]), (4, 3));
        assert_eq!((te[&Real], te[&Fake]), (1, 2));
    }

    #[test]
    fn single_record_is_degenerate() {
        let err = split(&ds(&[Label::Real]), &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, IngestError::DegenerateSplit { .. }));
    }

    #[test]
    fn one_class_only_is_missing_class() {
        let err = split(&ds(&[Label::Fake; 10]), &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingClass(Label::Real)));
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("7/10".parse::<TrainFraction>().unwrap(), TrainFraction::default());
        assert_eq!("0.7".parse::<TrainFraction>().unwrap(), TrainFraction::default());
        assert_eq!("0.70".parse::<TrainFraction>().unwrap(), TrainFraction::default());
        assert!("1".parse::<TrainFraction>().is_err());
        assert!("0".parse::<TrainFraction>().is_err());
        assert!("3/2".parse::<TrainFraction>().is_err());
        assert_eq!(TrainFraction::default().round_of(5), 4);
        assert_eq!(TrainFraction::default().floor_of(5), 3);
    }

    #[test]
    fn manifest_roundtrip() {
        use Label::*;
        let d = ds(&[Real, Fake, Real, Fake, Real, Fake]);
        let spec = SplitSpec::default();
        let s = split(&d, &spec).unwrap();
        let mut buf = Vec::new();
        write_split_manifest(&mut buf, &s, &spec).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("#split v1 seed=0 fraction=7/10 stratified=true\n"));
        assert_eq!(read_split_manifest(&text).unwrap(), (s.train_indices, s.test_indices));
    }
}
