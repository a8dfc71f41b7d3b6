//! Discrete tabular datasets: schemas, CSV ingestion, and the
//! quasi-identifier / secret-attribute split.
//!
//! All attributes are categorical and encoded as small integer category
//! indices. The schema is canonicalized so that the (binary) secret
//! attribute is always the last column.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Encoded category value. Cardinalities beyond `u16::MAX` are rejected at
/// schema construction.
pub type Category = u16;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row}, column `{column}`: unknown label `{label}`")]
    UnknownLabel {
        row: usize,
        column: String,
        label: String,
    },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("cannot sample {requested} rows from a dataset of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("cell ({row}, {column}) = {value} exceeds cardinality {cardinality}")]
    CellOutOfRange {
        row: usize,
        column: usize,
        value: Category,
        cardinality: usize,
    },
    #[error("dataset must contain at least one row")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One categorical attribute: a name plus an ordered list of labels. The
/// position of a label in the list is its category index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDomain {
    pub name: String,
    pub labels: Vec<String>,
}

impl AttributeDomain {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Result<Self, DataError> {
        let name = name.into();
        if labels.is_empty() {
            return Err(DataError::InvalidSchema(format!(
                "attribute `{name}` has no labels"
            )));
        }
        if labels.len() > Category::MAX as usize {
            return Err(DataError::InvalidSchema(format!(
                "attribute `{name}` has {} labels (max {})",
                labels.len(),
                Category::MAX
            )));
        }
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if seen.insert(l.clone(), i).is_some() {
                return Err(DataError::InvalidSchema(format!(
                    "attribute `{name}` has duplicate label `{l}`"
                )));
            }
        }
        Ok(Self { name, labels })
    }

    pub fn cardinality(&self) -> usize {
        self.labels.len()
    }
}

/// Ordered attribute list with the secret attribute canonicalized to the
/// last position. The secret must be binary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSchema {
    attributes: Vec<AttributeDomain>,
}

/// On-disk schema document: `{"attributes":[{"name":..,"labels":[..]},..],"secret":..}`.
#[derive(Serialize, Deserialize)]
struct SchemaFile {
    attributes: Vec<AttributeDomain>,
    secret: String,
}

impl DomainSchema {
    /// Builds a canonical schema from an attribute list and the name of the
    /// secret attribute. The secret is moved to the last position; all other
    /// attributes keep their relative order.
    pub fn new(attributes: Vec<AttributeDomain>, secret: &str) -> Result<Self, DataError> {
        if attributes.len() < 2 {
            return Err(DataError::InvalidSchema(
                "schema needs at least two attributes".into(),
            ));
        }
        let mut names = HashMap::new();
        for a in &attributes {
            if names.insert(a.name.clone(), ()).is_some() {
                return Err(DataError::InvalidSchema(format!(
                    "duplicate attribute name `{}`",
                    a.name
                )));
            }
        }
        let secret_pos = attributes
            .iter()
            .position(|a| a.name == secret)
            .ok_or_else(|| {
                DataError::InvalidSchema(format!("secret attribute `{secret}` not in schema"))
            })?;
        if attributes[secret_pos].cardinality() != 2 {
            return Err(DataError::InvalidSchema(format!(
                "secret attribute `{secret}` must be binary, has cardinality {}",
                attributes[secret_pos].cardinality()
            )));
        }
        let mut attributes = attributes;
        let secret_attr = attributes.remove(secret_pos);
        attributes.push(secret_attr);
        Ok(Self { attributes })
    }

    pub fn from_json_reader(r: impl Read) -> Result<Self, DataError> {
        let file: SchemaFile = serde_json::from_reader(r)?;
        Self::new(file.attributes, &file.secret)
    }

    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let f = std::fs::File::open(path)?;
        Self::from_json_reader(std::io::BufReader::new(f))
    }

    pub fn to_json_string(&self) -> String {
        let file = SchemaFile {
            attributes: self.attributes.clone(),
            secret: self.secret().name.clone(),
        };
        serde_json::to_string_pretty(&file).expect("schema serializes")
    }

    pub fn attributes(&self) -> &[AttributeDomain] {
        &self.attributes
    }

    /// Number of attributes, secret included.
    pub fn width(&self) -> usize {
        self.attributes.len()
    }

    pub fn secret_index(&self) -> usize {
        self.attributes.len() - 1
    }

    pub fn secret(&self) -> &AttributeDomain {
        self.attributes.last().expect("schema is non-empty")
    }

    pub fn cardinality(&self, attr: usize) -> usize {
        self.attributes[attr].cardinality()
    }

    /// Number of quasi-identifier attributes (all but the secret).
    pub fn qi_width(&self) -> usize {
        self.attributes.len() - 1
    }
}

/// A multiset of records stored row-major as category indices. Immutable
/// after construction; shared across threads via `Arc<DomainSchema>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<DomainSchema>,
    cells: Vec<Category>,
    n_rows: usize,
}

impl Dataset {
    pub fn new(schema: Arc<DomainSchema>, cells: Vec<Category>, n_rows: usize) -> Result<Self, DataError> {
        let d = schema.width();
        if n_rows == 0 {
            return Err(DataError::Empty);
        }
        if cells.len() != n_rows * d {
            return Err(DataError::InvalidSchema(format!(
                "cell buffer has {} entries, expected {}",
                cells.len(),
                n_rows * d
            )));
        }
        for (i, row) in cells.chunks_exact(d).enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if (v as usize) >= schema.cardinality(j) {
                    return Err(DataError::CellOutOfRange {
                        row: i,
                        column: j,
                        value: v,
                        cardinality: schema.cardinality(j),
                    });
                }
            }
        }
        Ok(Self {
            schema,
            cells,
            n_rows,
        })
    }

    pub fn from_rows(schema: Arc<DomainSchema>, rows: &[Vec<Category>]) -> Result<Self, DataError> {
        let d = schema.width();
        let mut cells = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(DataError::RaggedRow {
                    row: i,
                    expected: d,
                    found: r.len(),
                });
            }
            cells.extend_from_slice(r);
        }
        Self::new(schema, cells, rows.len())
    }

    /// Rebuilds a dataset from a quasi-identifier table and a secret column.
    /// Inverse of [`split_secret`].
    pub fn from_parts(x: &QuasiIdentifierTable, secret: &[u8]) -> Result<Self, DataError> {
        if secret.len() != x.n_rows() {
            return Err(DataError::InvalidSchema(format!(
                "secret column has {} entries for {} rows",
                secret.len(),
                x.n_rows()
            )));
        }
        let d = x.schema().width();
        let mut cells = Vec::with_capacity(x.n_rows() * d);
        for (i, row) in x.iter_rows().enumerate() {
            cells.extend_from_slice(row);
            cells.push(secret[i] as Category);
        }
        Self::new(x.schema_arc(), cells, secret.len())
    }

    pub fn schema(&self) -> &DomainSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<DomainSchema> {
        Arc::clone(&self.schema)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn row(&self, i: usize) -> &[Category] {
        let d = self.schema.width();
        &self.cells[i * d..(i + 1) * d]
    }

    pub fn get(&self, row: usize, col: usize) -> Category {
        self.cells[row * self.schema.width() + col]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[Category]> {
        self.cells.chunks_exact(self.schema.width())
    }

    /// Writes the dataset as a labelled CSV in schema column order.
    pub fn write_csv(&self, w: impl Write) -> Result<(), DataError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.schema.attributes().iter().map(|a| a.name.as_str()))?;
        for row in self.iter_rows() {
            out.write_record(
                row.iter()
                    .zip(self.schema.attributes())
                    .map(|(&v, a)| a.labels[v as usize].as_str()),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The quasi-identifier columns of a dataset, in the same row order as the
/// dataset they were split from.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiIdentifierTable {
    schema: Arc<DomainSchema>,
    cells: Vec<Category>,
    n_rows: usize,
}

impl QuasiIdentifierTable {
    pub fn schema(&self) -> &DomainSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<DomainSchema> {
        Arc::clone(&self.schema)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of quasi-identifier columns (`d - 1`).
    pub fn width(&self) -> usize {
        self.schema.qi_width()
    }

    pub fn row(&self, i: usize) -> &[Category] {
        let w = self.width();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[Category]> {
        self.cells.chunks_exact(self.width())
    }
}

/// Splits a dataset into its quasi-identifier table and its secret column.
pub fn split_secret(d: &Dataset) -> (QuasiIdentifierTable, Vec<u8>) {
    let w = d.schema().qi_width();
    let mut cells = Vec::with_capacity(d.n_rows() * w);
    let mut secret = Vec::with_capacity(d.n_rows());
    for row in d.iter_rows() {
        cells.extend_from_slice(&row[..w]);
        secret.push(row[w] as u8);
    }
    (
        QuasiIdentifierTable {
            schema: d.schema_arc(),
            cells,
            n_rows: d.n_rows(),
        },
        secret,
    )
}

/// Indices of rows whose quasi-identifiers appear exactly once in the table,
/// in ascending order.
pub fn unique_qi_indices(x: &QuasiIdentifierTable) -> Vec<usize> {
    let mut counts: HashMap<&[Category], u32> = HashMap::with_capacity(x.n_rows());
    for row in x.iter_rows() {
        *counts.entry(row).or_insert(0) += 1;
    }
    (0..x.n_rows())
        .filter(|&i| counts[x.row(i)] == 1)
        .collect()
}

/// Uniform sample of `n` rows without replacement. Deterministic for a given
/// random source.
pub fn subsample(d: &Dataset, n: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Dataset, DataError> {
    if n > d.n_rows() {
        return Err(DataError::SampleTooLarge {
            requested: n,
            available: d.n_rows(),
        });
    }
    let idx = rand::seq::index::sample(rng, d.n_rows(), n);
    let w = d.width();
    let mut cells = Vec::with_capacity(n * w);
    for i in idx.iter() {
        cells.extend_from_slice(d.row(i));
    }
    Dataset::new(d.schema_arc(), cells, n)
}

/// Loads a labelled CSV against a schema JSON document. Columns may appear in
/// any order; the result is reordered to canonical schema order with labels
/// encoded to category indices.
pub fn load_csv(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let schema = Arc::new(DomainSchema::from_json_path(schema_path)?);
    let f = std::fs::File::open(path)?;
    load_csv_reader(std::io::BufReader::new(f), schema)
}

pub fn load_csv_reader(r: impl Read, schema: Arc<DomainSchema>) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let d = schema.width();

    // Map CSV column position -> schema column position.
    let headers = reader.headers()?.clone();
    let mut positions: Vec<Option<usize>> = vec![None; d];
    for (csv_pos, name) in headers.iter().enumerate() {
        let schema_pos = schema
            .attributes()
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))?;
        if positions[schema_pos].is_some() {
            return Err(DataError::UnknownColumn(format!("{name} (duplicated)")));
        }
        positions[schema_pos] = Some(csv_pos);
    }
    for (schema_pos, p) in positions.iter().enumerate() {
        if p.is_none() {
            return Err(DataError::InvalidSchema(format!(
                "csv is missing column `{}`",
                schema.attributes()[schema_pos].name
            )));
        }
    }
    let positions: Vec<usize> = positions.into_iter().map(|p| p.unwrap()).collect();

    // Per-column label -> index lookup.
    let encoders: Vec<HashMap<&str, Category>> = schema
        .attributes()
        .iter()
        .map(|a| {
            a.labels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.as_str(), i as Category))
                .collect()
        })
        .collect();

    let mut cells: Vec<Category> = Vec::new();
    let mut n_rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != d {
            return Err(DataError::RaggedRow {
                row: row_idx,
                expected: d,
                found: record.len(),
            });
        }
        for (schema_pos, &csv_pos) in positions.iter().enumerate() {
            let label = &record[csv_pos];
            let code = encoders[schema_pos].get(label).ok_or_else(|| {
                DataError::UnknownLabel {
                    row: row_idx,
                    column: schema.attributes()[schema_pos].name.clone(),
                    label: label.to_string(),
                }
            })?;
            cells.push(*code);
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(DataError::Empty);
    }
    Ok(Dataset {
        schema,
        cells,
        n_rows,
    })
}
