//! Paired true/measured datasets → [`ParameterSet`].
//!
//! Input CSV columns (header required, any order):
//! `y_true, x_true, y_meas, x_meas, stratum` with stratum 1 (respondent) or
//! 2 (non-respondent).

use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ErrorModel, ParameterSet, Stratum};
use crate::popgen::Moments;

pub const COLUMNS: [&str; 5] = ["y_true", "x_true", "y_meas", "x_meas", "stratum"];

/// `k` used when the caller does not supply one.
pub const DEFAULT_K: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedRow {
    pub y_true: f64,
    pub x_true: f64,
    pub y_meas: f64,
    pub x_meas: f64,
    pub stratum: Stratum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    rows: Vec<PairedRow>,
}

impl PairedDataset {
    pub fn new(rows: Vec<PairedRow>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::InvalidDataset(format!("need at least 3 rows, got {}", rows.len())));
        }
        Ok(PairedDataset { rows })
    }

    pub fn rows(&self) -> &[PairedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn stratum_rows(&self, s: Stratum) -> Vec<PairedRow> {
        self.rows.iter().filter(|r| r.stratum == s).copied().collect()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<PairedDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_owned(), source })?;
    read_dataset(file)
}

pub fn read_dataset<R: Read>(reader: R) -> Result<PairedDataset> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut positions = [0usize; 5];
    for (slot, name) in positions.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(Error::MissingColumn(name))?;
    }
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize| record.get(positions[col]).unwrap_or("");
        let num = |col: usize| -> Result<f64> {
            let text = cell(col);
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell { row, column: COLUMNS[col], value: text.to_string() })
        };
        let stratum = cell(4)
            .parse::<u8>()
            .ok()
            .and_then(Stratum::from_label)
            .ok_or_else(|| Error::BadCell { row, column: "stratum", value: cell(4).to_string() })?;
        rows.push(PairedRow { y_true: num(0)?, x_true: num(1)?, y_meas: num(2)?, x_meas: num(3)?, stratum });
    }
    PairedDataset::new(rows)
}

/// Writes a dataset in the input format.
pub fn write_dataset<W: std::io::Write>(data: &PairedDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for r in data.rows() {
        w.write_record([
            r.y_true.to_string(),
            r.x_true.to_string(),
            r.y_meas.to_string(),
            r.x_meas.to_string(),
            r.stratum.label().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Cross-check of the true-column variances against the measured-column
/// variances corrected by the estimated error variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndirectVariances {
    pub var_x_direct: f64,
    pub var_x_indirect: f64,
    pub var_y_direct: f64,
    pub var_y_indirect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimated {
    pub params: ParameterSet,
    pub indirect: IndirectVariances,
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// Estimates design parameters from `data`.
///
/// Means, SDs and correlations come from the true columns; error variances are
/// the sample variances of `meas − true` within each stratum. `n` is the row
/// count and `W2` the stratum-2 fraction unless overridden.
pub fn estimate_parameters(data: &PairedDataset, k: f64, w2_override: Option<f64>) -> Result<Estimated> {
    let resp = data.stratum_rows(Stratum::Respondent);
    let nonresp = data.stratum_rows(Stratum::NonRespondent);
    if resp.len() < 2 {
        return Err(Error::InvalidDataset(format!("stratum 1 has {} rows; at least 2 are needed", resp.len())));
    }
    let w2 = w2_override.unwrap_or(nonresp.len() as f64 / data.len() as f64);
    if w2 > 0.0 && nonresp.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "W2 = {w2} but stratum 2 has {} rows; at least 2 are needed",
            nonresp.len()
        )));
    }

    let columns = |rows: &[PairedRow]| -> (Vec<f64>, Vec<f64>) { rows.iter().map(|r| (r.x_true, r.y_true)).unzip() };
    let (x, y) = columns(data.rows());
    let overall = Moments::of(&x, &y);
    let (x2, y2) = columns(&nonresp);
    let stratum2 = Moments::of(&x2, &y2);

    let err_u = |rows: &[PairedRow]| variance(rows.iter().map(|r| r.y_meas - r.y_true));
    let err_v = |rows: &[PairedRow]| variance(rows.iter().map(|r| r.x_meas - r.x_true));
    let errors = ErrorModel {
        sigma_u_sq: err_u(&resp),
        sigma_v_sq: err_v(&resp),
        sigma_u2_sq: err_u(&nonresp),
        sigma_v2_sq: err_v(&nonresp),
    };

    let all = data.rows();
    let indirect = IndirectVariances {
        var_x_direct: overall.sd_x * overall.sd_x,
        var_x_indirect: variance(all.iter().map(|r| r.x_meas)) - err_v(all),
        var_y_direct: overall.sd_y * overall.sd_y,
        var_y_indirect: variance(all.iter().map(|r| r.y_meas)) - err_u(all),
    };
    if indirect.var_x_indirect.is_nan() || indirect.var_x_indirect <= 0.0 {
        return Err(Error::ErrorVarianceExceedsObserved { variable: "x", estimate: indirect.var_x_indirect });
    }
    if indirect.var_y_indirect.is_nan() || indirect.var_y_indirect <= 0.0 {
        return Err(Error::ErrorVarianceExceedsObserved { variable: "y", estimate: indirect.var_y_indirect });
    }

    let has2 = !nonresp.is_empty();
    let params = ParameterSet {
        n: data.len(),
        population_size: None,
        w2,
        k,
        mu_y: overall.mean_y,
        mu_x: overall.mean_x,
        s_y: overall.sd_y,
        s_x: overall.sd_x,
        rho: overall.rho.unwrap_or(0.0),
        s_y2: stratum2.sd_y,
        s_x2: stratum2.sd_x,
        rho2: stratum2.rho.unwrap_or(0.0),
        mu_y2: has2.then_some(stratum2.mean_y),
        mu_x2: has2.then_some(stratum2.mean_x),
        errors,
    };
    params.clone().validate()?;
    Ok(Estimated { params, indirect })
}
