//! Raw files to encoded train and test sets under one schema.

use std::path::Path;
use std::sync::Arc;

use crate::dataset::{
    encode_all, infer_schema, read_encoded_csv, read_raw_csv, write_encoded_csv, Dataset,
    DatasetDescriptor, FeatureSchema, SchemaHints,
};
use crate::error::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.json";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: Arc<FeatureSchema>,
    pub train: Dataset,
    pub test: Dataset,
}

/// Infers the schema from the training file alone and encodes both files
/// with it.
pub fn prepare(desc: &DatasetDescriptor, train_path: &Path, test_path: &Path) -> Result<Prepared> {
    let train_raw = read_raw_csv(train_path, desc)?;
    let test_raw = read_raw_csv(test_path, desc)?;
    if train_raw.feature_names != test_raw.feature_names {
        return Err(Error::Config(
            "train and test files have different feature columns".into(),
        ));
    }
    let hints = SchemaHints {
        column_names: train_raw.feature_names.clone(),
        declared_kinds: desc.declared_kinds.clone(),
        normal_label: desc.normal_label.clone(),
    };
    let schema = Arc::new(infer_schema(&train_raw.records, &hints)?);
    tracing::info!(encoded_dim = schema.encoded_dim, train_rows = train_raw.records.len(), "schema inferred");
    Ok(Prepared {
        train: encode_all(&train_raw.records, schema.clone())?,
        test: encode_all(&test_raw.records, schema.clone())?,
        schema,
    })
}

impl Prepared {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.schema.save(&dir.join(SCHEMA_FILE))?;
        write_encoded_csv(&dir.join(TRAIN_FILE), &self.train)?;
        write_encoded_csv(&dir.join(TEST_FILE), &self.test)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let schema = Arc::new(FeatureSchema::load(&dir.join(SCHEMA_FILE))?);
        Ok(Self {
            train: read_encoded_csv(&dir.join(TRAIN_FILE), schema.clone())?,
            test: read_encoded_csv(&dir.join(TEST_FILE), schema.clone())?,
            schema,
        })
    }
}
