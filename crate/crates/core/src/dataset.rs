//! Flow-record ingestion: schema inference, encoding to fixed-width vectors,
//! initial/stream splitting and the on-disk formats for encoded data.
//!
//! Continuous columns are min-max scaled with statistics frozen at schema
//! inference time; categorical columns are one-hot encoded against a sorted
//! vocabulary. Columns that hold a single numeric value across the whole
//! corpus are dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_FORMAT: &str = "ondetect-schema/1";
pub const ENCODED_FORMAT: &str = "ondetect-encoded/1";

/// Binary traffic label. Attacks are the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Attack => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Normal => Label::Attack,
            Label::Attack => Label::Normal,
        }
    }

    pub fn is_attack(self) -> bool {
        self == Label::Attack
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.as_u8()
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Attack),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

/// Where a training label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    True,
    Pseudo,
}

/// One raw CSV row, already split into feature cells and label fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub values: Vec<String>,
    pub label_text: String,
    pub category_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub category_vocab: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl ColumnSchema {
    /// Number of encoded components this column produces.
    pub fn width(&self) -> usize {
        match self.kind {
            ColumnKind::Continuous => 1,
            ColumnKind::Categorical => self.category_vocab.len(),
            ColumnKind::Constant => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format: String,
    pub columns: Vec<ColumnSchema>,
    pub encoded_dim: usize,
    /// Label text that maps to [`Label::Normal`]; everything else is an attack.
    pub normal_label: String,
    /// Attack type strings present in the corpus the schema was built from.
    /// Used to split test-time attacks into seen and unseen.
    #[serde(default)]
    pub training_attack_types: BTreeSet<String>,
}

impl FeatureSchema {
    pub fn label_of(&self, label_text: &str) -> Label {
        if label_text == self.normal_label {
            Label::Normal
        } else {
            Label::Attack
        }
    }

    /// Start offset of each column's block in the encoded vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.columns
            .iter()
            .map(|c| {
                let at = acc;
                acc += c.width();
                at
            })
            .collect()
    }

    pub fn retained_columns(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.kind != ColumnKind::Constant)
            .count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: FeatureSchema = serde_json::from_reader(BufReader::new(file))?;
        schema.check_format()?;
        Ok(schema)
    }

    pub fn check_format(&self) -> Result<()> {
        if self.format != SCHEMA_FORMAT {
            return Err(Error::Format {
                expected: SCHEMA_FORMAT.into(),
                found: self.format.clone(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: Label,
    pub provenance: Provenance,
    /// Raw label text (the attack type for NSL-KDD style files).
    pub attack: Option<String>,
    /// Attack family, when the descriptor provides one.
    pub category: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub schema: Arc<FeatureSchema>,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, schema: Arc<FeatureSchema>) -> Self {
        Self { examples, schema }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.schema.encoded_dim
    }

    pub fn n_normal(&self) -> usize {
        self.examples.iter().filter(|e| e.y == Label::Normal).count()
    }

    pub fn n_attack(&self) -> usize {
        self.len() - self.n_normal()
    }
}

/// Growable training matrix {X, Y} with per-row label provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
    provenance: Vec<Provenance>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: Vec::new(),
            provenance: Vec::new(),
        }
    }

    /// Copies every example with its true label.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let mut set = Self::new(dataset.dim());
        for e in &dataset.examples {
            set.push(&e.x, e.y, Provenance::True)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, x: &[f64], y: Label, provenance: Provenance) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        self.features.extend_from_slice(x);
        self.labels.push(y);
        self.provenance.push(provenance);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn count_provenance(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub initial_fraction: f64,
    pub chunk_size: NonZeroUsize,
    pub order_seed: u64,
}

/// Column naming and label handling for one CSV corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Required when the file has no header row.
    #[serde(default)]
    pub column_names: Option<Vec<String>>,
    pub label_column: String,
    pub normal_label: String,
    #[serde(default)]
    pub category_column: Option<String>,
    /// Maps a label text (attack type) to its family, for files without a
    /// family column.
    #[serde(default)]
    pub category_map: BTreeMap<String, String>,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    #[serde(default)]
    pub declared_kinds: BTreeMap<String, ColumnKind>,
}

fn default_true() -> bool {
    true
}

impl DatasetDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Raw records read from a CSV file together with the feature column names.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub records: Vec<RawRecord>,
}

/// Reads a CSV file under the descriptor's column layout.
pub fn read_raw_csv(path: &Path, desc: &DatasetDescriptor) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw(BufReader::new(file), desc)
}

pub fn read_raw<R: std::io::Read>(reader: R, desc: &DatasetDescriptor) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(desc.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let names: Vec<String> = if desc.has_header {
        rdr.headers()?.iter().map(str::to_owned).collect()
    } else {
        desc.column_names.clone().ok_or_else(|| {
            Error::Config(format!(
                "descriptor {:?} has no header row and no column_names",
                desc.name
            ))
        })?
    };

    let find = |col: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == col)
            .ok_or_else(|| Error::Config(format!("column {col:?} not found")))
    };
    let label_idx = find(&desc.label_column)?;
    let category_idx = desc.category_column.as_deref().map(find).transpose()?;
    let mut skip: BTreeSet<usize> = desc
        .drop_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;
    skip.insert(label_idx);
    if let Some(c) = category_idx {
        skip.insert(c);
    }

    let feature_cols: Vec<usize> = (0..names.len()).filter(|i| !skip.contains(i)).collect();
    let feature_names = feature_cols.iter().map(|&i| names[i].clone()).collect();

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Schema {
                row,
                message: format!("expected {} cells, found {}", names.len(), rec.len()),
            });
        }
        let label_text = rec[label_idx].to_owned();
        let category_text = match category_idx {
            Some(c) => Some(rec[c].to_owned()).filter(|s| !s.is_empty()),
            None => desc.category_map.get(&label_text).cloned(),
        };
        records.push(RawRecord {
            values: feature_cols.iter().map(|&i| rec[i].to_owned()).collect(),
            label_text,
            category_text,
        });
    }
    Ok(RawTable {
        feature_names,
        records,
    })
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Column names, kind overrides and the normal label token for inference.
#[derive(Debug, Clone, Default)]
pub struct SchemaHints {
    pub column_names: Vec<String>,
    pub declared_kinds: BTreeMap<String, ColumnKind>,
    pub normal_label: String,
}

/// Infers column kinds, vocabularies and normalization ranges.
///
/// A column whose cells all parse as numbers is continuous, or constant when
/// it holds a single value. Any non-numeric cell makes the column
/// categorical; a categorical column with one category still keeps its
/// one-entry vocabulary.
pub fn infer_schema(records: &[RawRecord], hints: &SchemaHints) -> Result<FeatureSchema> {
    if records.is_empty() {
        return Err(Error::Empty("no records to infer a schema from"));
    }
    let width = hints.column_names.len();
    for (row, r) in records.iter().enumerate() {
        if r.values.len() != width {
            return Err(Error::Schema {
                row,
                message: format!("expected {width} cells, found {}", r.values.len()),
            });
        }
    }

    let mut columns = Vec::with_capacity(width);
    for (col, name) in hints.column_names.iter().enumerate() {
        let declared = hints.declared_kinds.get(name).copied();
        let cells = records.iter().map(|r| r.values[col].as_str());
        let column = match declared {
            Some(ColumnKind::Categorical) => categorical(name, cells),
            Some(ColumnKind::Constant) => ColumnSchema {
                name: name.clone(),
                kind: ColumnKind::Constant,
                category_vocab: Vec::new(),
                min: None,
                max: None,
            },
            Some(ColumnKind::Continuous) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (row, cell) in cells.enumerate() {
                    let v = parse_finite(cell).ok_or_else(|| Error::Schema {
                        row,
                        message: format!("column {name:?} declared continuous but holds {cell:?}"),
                    })?;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                continuous(name, lo, hi)
            }
            None => infer_column(name, cells),
        };
        columns.push(column);
    }

    let encoded_dim = columns.iter().map(ColumnSchema::width).sum();
    let training_attack_types = records
        .iter()
        .filter(|r| r.label_text != hints.normal_label)
        .map(|r| r.label_text.clone())
        .collect();
    Ok(FeatureSchema {
        format: SCHEMA_FORMAT.into(),
        columns,
        encoded_dim,
        normal_label: hints.normal_label.clone(),
        training_attack_types,
    })
}

fn continuous(name: &str, lo: f64, hi: f64) -> ColumnSchema {
    ColumnSchema {
        name: name.to_owned(),
        kind: ColumnKind::Continuous,
        category_vocab: Vec::new(),
        min: Some(lo),
        max: Some(hi),
    }
}

fn categorical<'a>(name: &str, cells: impl Iterator<Item = &'a str>) -> ColumnSchema {
    let vocab: BTreeSet<&str> = cells.collect();
    ColumnSchema {
        name: name.to_owned(),
        kind: ColumnKind::Categorical,
        category_vocab: vocab.into_iter().map(str::to_owned).collect(),
        min: None,
        max: None,
    }
}

fn infer_column<'a>(name: &str, cells: impl Iterator<Item = &'a str> + Clone) -> ColumnSchema {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for cell in cells.clone() {
        match parse_finite(cell) {
            Some(v) => {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            None => return categorical(name, cells),
        }
    }
    if lo == hi {
        ColumnSchema {
            name: name.to_owned(),
            kind: ColumnKind::Constant,
            category_vocab: Vec::new(),
            min: None,
            max: None,
        }
    } else {
        continuous(name, lo, hi)
    }
}

/// Encodes one record. `row` is only used to give errors context.
pub fn encode(record: &RawRecord, schema: &FeatureSchema, row: usize) -> Result<LabeledExample> {
    if record.values.len() != schema.columns.len() {
        return Err(Error::Schema {
            row,
            message: format!(
                "expected {} cells, found {}",
                schema.columns.len(),
                record.values.len()
            ),
        });
    }
    let mut x = Vec::with_capacity(schema.encoded_dim);
    for (column, (col, cell)) in schema.columns.iter().zip(&record.values).enumerate() {
        match col.kind {
            ColumnKind::Constant => {}
            ColumnKind::Continuous => {
                let v = parse_finite(cell).ok_or_else(|| Error::Encode {
                    row,
                    column,
                    name: col.name.clone(),
                    message: format!("non-numeric cell {cell:?}"),
                })?;
                let (lo, hi) = (col.min.unwrap_or(0.0), col.max.unwrap_or(0.0));
                let scaled = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                x.push(scaled.clamp(0.0, 1.0));
            }
            ColumnKind::Categorical => {
                let start = x.len();
                x.resize(start + col.category_vocab.len(), 0.0);
                if let Some(pos) = col.category_vocab.iter().position(|c| c == cell) {
                    x[start + pos] = 1.0;
                }
            }
        }
    }
    debug_assert_eq!(x.len(), schema.encoded_dim);
    let y = schema.label_of(&record.label_text);
    Ok(LabeledExample {
        x,
        y,
        provenance: Provenance::True,
        attack: (y == Label::Attack).then(|| record.label_text.clone()),
        category: record.category_text.clone(),
    })
}

pub fn encode_all(records: &[RawRecord], schema: Arc<FeatureSchema>) -> Result<Dataset> {
    let examples = records
        .iter()
        .enumerate()
        .map(|(row, r)| encode(r, &schema, row))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(examples, schema))
}

/// Splits off a uniformly random initial subset; the rest, in shuffled
/// order, becomes the stream.
pub fn split_initial(dataset: &Dataset, plan: &StreamPlan) -> Result<(Dataset, Vec<LabeledExample>)> {
    if !(plan.initial_fraction > 0.0 && plan.initial_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "initial_fraction must lie in (0, 1], got {}",
            plan.initial_fraction
        )));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.order_seed);
    order.shuffle(&mut rng);

    let n_initial = ((n as f64 * plan.initial_fraction).round() as usize).clamp(1.min(n), n);
    let initial: Vec<LabeledExample> = order[..n_initial]
        .iter()
        .map(|&i| dataset.examples[i].clone())
        .collect();
    if !initial.iter().any(|e| e.y == Label::Normal) {
        return Err(Error::Precondition(
            "initial split holds no normal examples".into(),
        ));
    }
    let stream = order[n_initial..]
        .iter()
        .map(|&i| dataset.examples[i].clone())
        .collect();
    Ok((Dataset::new(initial, dataset.schema.clone()), stream))
}

/// Consecutive chunks of `m` items; the last one holds the remainder.
pub fn chunks<T>(stream: &[T], m: NonZeroUsize) -> std::slice::Chunks<'_, T> {
    stream.chunks(m.get())
}

const META_COLUMNS: [&str; 4] = ["label", "provenance", "attack", "category"];

/// Writes an encoded dataset as CSV. The first header cell carries the
/// format tag so readers can reject foreign files.
pub fn write_encoded_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header: Vec<String> = vec![ENCODED_FORMAT.to_owned()];
    header.extend(META_COLUMNS.iter().map(|s| s.to_string()));
    header.extend((0..dataset.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (i, e) in dataset.examples.iter().enumerate() {
        row.clear();
        row.push(i.to_string());
        row.push(e.y.as_u8().to_string());
        row.push(match e.provenance {
            Provenance::True => "true".into(),
            Provenance::Pseudo => "pseudo".into(),
        });
        row.push(e.attack.clone().unwrap_or_default());
        row.push(e.category.clone().unwrap_or_default());
        row.extend(e.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_encoded_csv(path: &Path, schema: Arc<FeatureSchema>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let header = rdr.headers()?.clone();
    let tag = header.get(0).unwrap_or_default();
    if tag != ENCODED_FORMAT {
        return Err(Error::Format {
            expected: ENCODED_FORMAT.into(),
            found: tag.into(),
        });
    }
    let expected = 1 + META_COLUMNS.len() + schema.encoded_dim;
    if header.len() != expected {
        return Err(Error::Dimension {
            expected,
            actual: header.len(),
        });
    }
    let mut examples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |column: usize, message: String| Error::Encode {
            row,
            column,
            name: header.get(column).unwrap_or_default().to_owned(),
            message,
        };
        let y = match &rec[1] {
            "0" => Label::Normal,
            "1" => Label::Attack,
            other => return Err(bad(1, format!("bad label {other:?}"))),
        };
        let provenance = match &rec[2] {
            "true" => Provenance::True,
            "pseudo" => Provenance::Pseudo,
            other => return Err(bad(2, format!("bad provenance {other:?}"))),
        };
        let opt = |s: &str| Some(s.to_owned()).filter(|s| !s.is_empty());
        let x = (5..rec.len())
            .map(|c| {
                parse_finite(&rec[c]).ok_or_else(|| bad(c, format!("non-numeric cell {:?}", &rec[c])))
            })
            .collect::<Result<Vec<_>>>()?;
        examples.push(LabeledExample {
            x,
            y,
            provenance,
            attack: opt(&rec[3]),
            category: opt(&rec[4]),
        });
    }
    Ok(Dataset::new(examples, schema))
}
