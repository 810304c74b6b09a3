//! File formats: dataset CSV, truth/model/result JSON, ROC CSV, metrics JSON.
//!
//! Readers accept untrusted bytes and must fail with a typed error rather
//! than panic; the fuzz targets exercise them directly.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Metrics, RocTable};
use crate::pc::SelectionResult;
use crate::sim::Dataset;
use crate::sim::ModelSpec;

/// Ground-truth record written next to a simulated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRecord {
    pub p: usize,
    pub peff: usize,
    pub beta: Vec<f64>,
    /// 1-based indices of the nonzero coefficients.
    pub support: Vec<usize>,
    pub sigma_kind: String,
    pub rho: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub seed: u64,
}

/// JSON form of a population model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpecJson {
    pub p: usize,
    pub mu_x: Vec<f64>,
    pub sigma_x: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub delta: f64,
    pub sigma2: f64,
}

impl ModelSpecJson {
    pub fn from_model(model: &ModelSpec) -> Self {
        let p = model.p();
        ModelSpecJson {
            p,
            mu_x: model.mu_x.iter().copied().collect(),
            sigma_x: (0..p)
                .map(|i| (0..p).map(|j| model.sigma_x[(i, j)]).collect())
                .collect(),
            beta: model.beta.iter().copied().collect(),
            delta: model.delta,
            sigma2: model.sigma2,
        }
    }

    pub fn into_model(self) -> Result<ModelSpec> {
        let p = self.p;
        if self.mu_x.len() != p || self.beta.len() != p || self.sigma_x.len() != p {
            return Err(Error::Model("field lengths do not match p".into()));
        }
        if self.sigma_x.iter().any(|row| row.len() != p) {
            return Err(Error::Model("sigma_x is not square".into()));
        }
        let flat: Vec<f64> = self.sigma_x.iter().flatten().copied().collect();
        if flat.iter().any(|v| !v.is_finite())
            || self.mu_x.iter().any(|v| !v.is_finite())
            || self.beta.iter().any(|v| !v.is_finite())
            || !self.delta.is_finite()
            || !self.sigma2.is_finite()
        {
            return Err(Error::Model("non-finite entry in model".into()));
        }
        ModelSpec::new(
            DVector::from_vec(self.mu_x),
            DMatrix::from_row_slice(p, p, &flat),
            DVector::from_vec(self.beta),
            self.delta,
            self.sigma2,
        )
    }
}

pub fn read_model_json(bytes: &[u8]) -> Result<ModelSpec> {
    let parsed: ModelSpecJson = serde_json::from_slice(bytes)?;
    parsed.into_model()
}

pub fn read_truth_json(bytes: &[u8]) -> Result<TruthRecord> {
    let t: TruthRecord = serde_json::from_slice(bytes)?;
    if t.beta.len() != t.p {
        return Err(Error::Data("truth beta length does not match p".into()));
    }
    if t.support.iter().any(|&j| j < 1 || j > t.p) {
        return Err(Error::Data("truth support index outside 1..=p".into()));
    }
    Ok(t)
}

/// Dataset CSV: header row of covariate names plus the response column,
/// comma-separated, '.' decimal, UTF-8. Written values carry 17 significant
/// digits so a read-back is bit-exact.
pub fn write_dataset_csv<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    let mut header: Vec<&str> = data.names.iter().map(String::as_str).collect();
    header.push("y");
    writeln!(w, "{}", header.join(","))?;
    for i in 0..data.x.nrows() {
        let mut fields: Vec<String> = (0..data.x.ncols())
            .map(|j| format!("{:.16e}", data.x[(i, j)]))
            .collect();
        fields.push(format!("{:.16e}", data.y[i]));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Parse a dataset CSV. The response column is picked by name; every other
/// column is a covariate, in file order.
pub fn read_dataset_csv<R: Read>(reader: R, response: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read CSV header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::Data("empty CSV header".into()));
    }
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Data(format!("response column '{response}' not found")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != y_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Data("no covariate columns".into()));
    }
    {
        let mut sorted = names.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("duplicate column names".into()));
        }
    }
    let p = names.len();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("row {}: {e}", row_idx + 2)))?;
        if record.len() != p + 1 {
            return Err(Error::Data(format!(
                "row {}: expected {} fields, got {}",
                row_idx + 2,
                p + 1,
                record.len()
            )));
        }
        for (col_idx, field) in record.iter().enumerate() {
            let col_name = &headers[col_idx];
            if field.is_empty() {
                return Err(Error::Data(format!(
                    "missing value at row {}, column '{col_name}'",
                    row_idx + 2
                )));
            }
            let v: f64 = field.parse().map_err(|_| {
                Error::Data(format!(
                    "row {}, column '{col_name}': cannot parse '{field}'",
                    row_idx + 2
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {}, column '{col_name}'",
                    row_idx + 2
                )));
            }
            if col_idx == y_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    let x = DMatrix::from_row_slice(n, p, &xs);
    Ok(Dataset {
        x,
        y: DVector::from_vec(ys),
        names,
    })
}

/// Selection result JSON document.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionJson<'a> {
    pub selected: &'a [usize],
    pub selected_names: Vec<String>,
    pub m_reach: usize,
    pub stage_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub p: usize,
}

pub fn selection_json(result: &SelectionResult, names: &[String]) -> String {
    let doc = SelectionJson {
        selected: result.selected.members(),
        selected_names: result
            .selected
            .members()
            .iter()
            .map(|&j| {
                names
                    .get(j - 1)
                    .cloned()
                    .unwrap_or_else(|| format!("x{j}"))
            })
            .collect(),
        m_reach: result.m_reach,
        stage_sizes: result.stages.iter().map(|s| s.len()).collect(),
        alpha: result.alpha,
        n: result.n,
        p: result.p,
    };
    serde_json::to_string_pretty(&doc).expect("selection result serializes")
}

/// Minimal parse of a selection-result document (for the eval command).
#[derive(Debug, Clone, Deserialize)]
pub struct SelectionDoc {
    pub selected: Vec<usize>,
    pub m_reach: usize,
    pub p: usize,
}

pub fn read_selection_json(bytes: &[u8]) -> Result<SelectionDoc> {
    let doc: SelectionDoc = serde_json::from_slice(bytes)?;
    if doc.selected.iter().any(|&j| j < 1 || j > doc.p) {
        return Err(Error::Data("selected index outside 1..=p".into()));
    }
    Ok(doc)
}

/// ROC table CSV: alpha,mean_tpr,mean_fpr,sd_tpr,sd_fpr,replicates.
pub fn write_roc_csv<W: Write>(table: &RocTable, mut w: W) -> Result<()> {
    writeln!(w, "alpha,mean_tpr,mean_fpr,sd_tpr,sd_fpr,replicates")?;
    for row in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.alpha, row.mean_tpr, row.mean_fpr, row.sd_tpr, row.sd_fpr, row.replicates
        )?;
    }
    Ok(())
}

pub fn metrics_json(metrics: &Metrics) -> String {
    serde_json::to_string_pretty(metrics).expect("metrics serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{fixture, seeded_rng, simulate_dataset, FixtureId};

    #[test]
    fn dataset_csv_round_trip_bit_exact() {
        let model = fixture(FixtureId::Example3, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 7, &mut seeded_rng(5)).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice(), "y").unwrap();
        assert_eq!(back.x, data.x);
        assert_eq!(back.y, data.y);
        assert_eq!(back.names, data.names);
    }

    #[test]
    fn csv_rejects_missing_and_malformed() {
        let no_response = "a,b\n1,2\n";
        assert!(read_dataset_csv(no_response.as_bytes(), "y").is_err());

        let missing = "x1,y\n1.0,\n";
        let err = read_dataset_csv(missing.as_bytes(), "y").unwrap_err();
        assert!(err.to_string().contains("missing value"), "got {err}");

        let garbage = "x1,y\nfoo,1.0\n";
        let err = read_dataset_csv(garbage.as_bytes(), "y").unwrap_err();
        assert!(err.to_string().contains("x1"), "got {err}");

        let ragged = "x1,y\n1.0\n";
        assert!(read_dataset_csv(ragged.as_bytes(), "y").is_err());

        let empty = "x1,y\n";
        assert!(read_dataset_csv(empty.as_bytes(), "y").is_err());

        let nonfinite = "x1,y\nNaN,1.0\n";
        assert!(read_dataset_csv(nonfinite.as_bytes(), "y").is_err());

        let dup = "x1,x1,y\n1,2,3\n";
        assert!(read_dataset_csv(dup.as_bytes(), "y").is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let model = fixture(FixtureId::Example2, &mut seeded_rng(0));
        let json = serde_json::to_string(&ModelSpecJson::from_model(&model)).unwrap();
        let back = read_model_json(json.as_bytes()).unwrap();
        assert_eq!(back.sigma_x, model.sigma_x);
        assert_eq!(back.beta, model.beta);
    }

    #[test]
    fn model_json_rejects_bad_documents() {
        assert!(read_model_json(b"not json").is_err());
        assert!(read_model_json(b"{}").is_err());
        let mismatched = r#"{"p":2,"mu_x":[0],"sigma_x":[[1,0],[0,1]],"beta":[1,0],"delta":0,"sigma2":1}"#;
        assert!(read_model_json(mismatched.as_bytes()).is_err());
        let not_pd = r#"{"p":2,"mu_x":[0,0],"sigma_x":[[1,2],[2,1]],"beta":[1,0],"delta":0,"sigma2":1}"#;
        assert!(read_model_json(not_pd.as_bytes()).is_err());
    }

    #[test]
    fn truth_json_validation() {
        let good = r#"{"p":3,"peff":1,"beta":[0.0,1.0,0.0],"support":[2],
                       "sigma_kind":"toeplitz","rho":0.0,"sigma2":1.0,"delta":0.0,"seed":1}"#;
        let t = read_truth_json(good.as_bytes()).unwrap();
        assert_eq!(t.support, vec![2]);
        let bad = r#"{"p":3,"peff":1,"beta":[0.0,1.0],"support":[2],
                      "sigma_kind":"toeplitz","rho":0.0,"sigma2":1.0,"delta":0.0,"seed":1}"#;
        assert!(read_truth_json(bad.as_bytes()).is_err());
    }
}
