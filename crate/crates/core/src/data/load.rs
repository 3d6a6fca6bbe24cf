use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AltAttributes, AttributeMap, DataError, Dataset};

/// Column roles for a delimited dataset file, stored as a JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub choice_column: String,
    /// Feature columns in model order; defaults to every non-choice column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    pub alternatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attributes: Vec<AttributeRole>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeRole {
    pub alternative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub time: Vec<String>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let schema: Schema = serde_json::from_str(&text)?;
        if schema.alternatives.len() < 2 {
            return Err(DataError::InvalidSchema(
                "at least two alternatives are required".into(),
            ));
        }
        Ok(schema)
    }

    /// Schema describing an in-memory dataset, with `choice` as the choice column.
    pub fn for_dataset(data: &Dataset) -> Self {
        let attributes = data
            .attribute_map()
            .map(|map| {
                map.by_alt
                    .iter()
                    .map(|(&alt, attrs)| AttributeRole {
                        alternative: data.alt_names()[alt].clone(),
                        cost: attrs.cost.map(|j| data.feature_names()[j].clone()),
                        time: attrs.time.iter().map(|&j| data.feature_names()[j].clone()).collect(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            choice_column: "choice".into(),
            feature_columns: Some(data.feature_names().to_vec()),
            alternatives: data.alt_names().to_vec(),
            attributes,
        }
    }

    /// Resolves named roles into an [`AttributeMap`] against `feature_names`.
    pub fn attribute_map(&self, feature_names: &[String]) -> Result<Option<AttributeMap>, DataError> {
        if self.attributes.is_empty() {
            return Ok(None);
        }
        let feature = |name: &str| {
            feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
        };
        let mut map = AttributeMap::default();
        for role in &self.attributes {
            let alt = self
                .alternatives
                .iter()
                .position(|a| a == &role.alternative)
                .ok_or_else(|| DataError::InvalidSchema(format!("unknown alternative {:?}", role.alternative)))?;
            let cost = role.cost.as_deref().map(feature).transpose()?;
            let time = role.time.iter().map(|t| feature(t)).collect::<Result<Vec<_>, _>>()?;
            map.by_alt.insert(alt, AltAttributes { cost, time });
        }
        Ok(Some(map))
    }
}

/// Reads a comma-separated file with a header row.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let choice_col = column(&schema.choice_column)?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .filter(|h| **h != schema.choice_column)
            .cloned()
            .collect(),
    };
    if feature_names.is_empty() {
        return Err(DataError::InvalidSchema("no feature columns".into()));
    }
    let feature_cols = feature_names.iter().map(|f| column(f)).collect::<Result<Vec<_>, _>>()?;
    let n_alts = schema.alternatives.len();

    let mut values = Vec::new();
    let mut choices = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw = record.get(choice_col).unwrap_or("");
        let choice = match raw.parse::<i64>() {
            Ok(c) if c >= 0 && (c as usize) < n_alts => c as usize,
            Ok(_) => {
                return Err(DataError::ChoiceOutOfRange {
                    row,
                    value: raw.to_string(),
                    n_alts,
                })
            }
            Err(_) => {
                return Err(DataError::NonNumeric {
                    row,
                    column: schema.choice_column.clone(),
                    value: raw.to_string(),
                })
            }
        };
        choices.push(choice);
        for (&col, name) in feature_cols.iter().zip(&feature_names) {
            let cell = record.get(col).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                row,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row,
                    column: name.clone(),
                });
            }
            values.push(v);
        }
    }
    let features = Array2::from_shape_vec((choices.len(), feature_names.len()), values)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    let attribute_map = schema.attribute_map(&feature_names)?;
    Dataset::new(
        features,
        choices,
        feature_names,
        schema.alternatives.clone(),
        attribute_map,
    )
}

/// Writes features followed by a `choice` column. Floats use the shortest
/// representation that round-trips, so output is byte-stable.
pub fn write_dataset(data: &Dataset, path: &Path) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let mut header = data.feature_names().join(",");
    header.push_str(",choice\n");
    out.write_all(header.as_bytes()).map_err(io_err)?;
    let mut line = String::new();
    for i in 0..data.n_obs() {
        line.clear();
        for v in data.row(i) {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&data.choices()[i].to_string());
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
