//! Final-layer feature extraction and its CSV interchange format.
//!
//! Each row of a [`FeatureTable`] is the pre-softmax output of the fully
//! connected layer for one image, so its argmax is the network's decision.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::CnnModel;
use crate::tensor::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    cnn_predictions: Vec<usize>,
    source_model_id: String,
}

impl FeatureTable {
    pub fn new(
        features: Vec<f64>,
        feature_dim: usize,
        labels: Vec<usize>,
        cnn_predictions: Vec<usize>,
        source_model_id: impl Into<String>,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::Shape { context: "feature table", detail: "feature_dim must be >= 1".into() });
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::Shape {
                context: "feature table",
                detail: format!("{} values for {} rows of {feature_dim}", features.len(), labels.len()),
            });
        }
        if labels.len() != cnn_predictions.len() {
            return Err(Error::LengthMismatch { left: labels.len(), right: cnn_predictions.len() });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature table"));
        }
        if let Some(&bad) = labels.iter().chain(&cnn_predictions).find(|&&c| c >= feature_dim) {
            return Err(Error::ClassOutOfRange { index: bad, num_classes: feature_dim });
        }
        Ok(Self { features, feature_dim, labels, cnn_predictions, source_model_id: source_model_id.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.feature_dim)
    }

    /// Row-major `[len, feature_dim]` values.
    pub fn values(&self) -> &[f64] {
        &self.features
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cnn_predictions(&self) -> &[usize] {
        &self.cnn_predictions
    }

    pub fn source_model_id(&self) -> &str {
        &self.source_model_id
    }

    /// Class count implied by the table: one class per feature column.
    pub fn num_classes(&self) -> usize {
        self.feature_dim
    }
}

/// Hex SHA-256 prefix over the model's parameter values.
pub fn model_id(model: &CnnModel) -> String {
    let mut hasher = Sha256::new();
    for t in model.params().tensors() {
        for v in t.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn extract_features(model: &CnnModel, data: &ImageDataset) -> Result<FeatureTable> {
    extract_features_with(model, data, Execution::default())
}

/// One row of logits per sample, in dataset order.
pub fn extract_features_with(model: &CnnModel, data: &ImageDataset, exec: Execution) -> Result<FeatureTable> {
    model.check_dataset(data)?;
    let rows = exec
        .map_range(data.len(), |i| model.forward(&data.image_tensor(i)).map(|p| p.logits))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let predictions = rows.iter().map(|r| argmax(r)).collect();
    FeatureTable::new(rows.concat(), model.num_classes(), data.labels().to_vec(), predictions, model_id(model))
}

/// Header `label,pred,f0,..,f{N-1}`; floats in 17-significant-digit
/// scientific notation, which round-trips every `f64` exactly.
pub fn write_feature_csv(table: &FeatureTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<String> = ["label".to_string(), "pred".to_string()]
        .into_iter()
        .chain((0..table.feature_dim).map(|j| format!("f{j}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, row) in table.rows().enumerate() {
        write!(out, "{},{}", table.labels[i], table.cnn_predictions[i]).map_err(io)?;
        for v in row {
            write!(out, ",{v:.16e}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a table written by [`write_feature_csv`]. The model id is not
/// stored in the file and comes back empty.
pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse { path: path.into(), line: 1, detail: e.to_string() })?;
    let header = reader.headers().map_err(|e| Error::Parse { path: path.into(), line: 1, detail: e.to_string() })?;
    let width = header.len();
    let expected: Vec<String> = ["label".to_string(), "pred".to_string()]
        .into_iter()
        .chain((0..width.saturating_sub(2)).map(|j| format!("f{j}")))
        .collect();
    if width < 3 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse { path: path.into(), line: 1, detail: format!("unexpected header {header:?}") });
    }
    let dim = width - 2;

    let (mut features, mut labels, mut preds) = (Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.into(),
            line: e.position().map_or(0, |p| p.line()),
            detail: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |detail: String| Error::Parse { path: path.into(), line, detail };
        if record.len() != width {
            return Err(err(format!("expected {width} columns, found {}", record.len())));
        }
        let class = |s: &str| s.trim().parse::<usize>().map_err(|e| err(format!("bad class index {s:?}: {e}")));
        let label = class(&record[0])?;
        let pred = class(&record[1])?;
        if label >= dim || pred >= dim {
            return Err(err(format!("class index exceeds feature dimension {dim}")));
        }
        labels.push(label);
        preds.push(pred);
        for field in record.iter().skip(2) {
            features.push(field.trim().parse::<f64>().map_err(|e| err(format!("bad value {field:?}: {e}")))?);
        }
    }
    FeatureTable::new(features, dim, labels, preds, String::new())
}
