//! Return panels, lagged-return features and rolling train/valid/test folds.
//!
//! A panel CSV has a header `date,<asset_1>,...` and one row per date.
//! Dates are opaque labels: they must be strictly increasing, compared
//! numerically when both parse as integers and lexicographically otherwise
//! (ISO dates sort correctly either way). Empty or unparseable cells are
//! missing values, stored as NaN.

use std::cmp::Ordering;
use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::{fmt_f64, write_csv, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<String>,
    pub assets: Vec<String>,
    /// `dates × assets` log returns, NaN where missing.
    pub values: DenseMatrix,
}

fn date_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<String>,
        assets: Vec<String>,
        values: DenseMatrix,
    ) -> Result<ReturnPanel> {
        if values.shape() != (dates.len(), assets.len()) {
            return Err(Error::dims("panel values do not match dates x assets"));
        }
        for (i, w) in dates.windows(2).enumerate() {
            if date_order(&w[0], &w[1]) != Ordering::Less {
                return Err(Error::Format {
                    row: i + 3,
                    message: format!("date {:?} does not follow {:?}", w[1], w[0]),
                });
            }
        }
        Ok(ReturnPanel {
            dates,
            assets,
            values,
        })
    }

    pub fn is_missing(&self, t: usize, a: usize) -> bool {
        self.values[(t, a)].is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

/// Row numbers in errors are 1-based file lines (the header is line 1).
pub fn parse_panel_csv(text: &str) -> Result<ReturnPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.get(0) != Some("date") || header.len() < 2 {
        return Err(Error::Format {
            row: 1,
            message: "header must be date,<asset_1>,...".into(),
        });
    }
    let assets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Format {
            row,
            message: e.to_string(),
        })?;
        if record.len() != assets.len() + 1 {
            return Err(Error::Format {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    assets.len() + 1,
                    record.len()
                ),
            });
        }
        dates.push(record[0].to_string());
        cells.extend(
            record
                .iter()
                .skip(1)
                .map(|c| c.parse::<f64>().unwrap_or(f64::NAN)),
        );
    }
    let values = DenseMatrix::from_row_slice(dates.len(), assets.len(), &cells);
    ReturnPanel::new(dates, assets, values)
}

pub fn load_panel_csv(path: &Path) -> Result<ReturnPanel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_panel_csv(&text)
}

pub fn panel_to_csv_string(panel: &ReturnPanel) -> String {
    let mut out = String::from("date");
    for a in &panel.assets {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for (t, date) in panel.dates.iter().enumerate() {
        out.push_str(date);
        for a in 0..panel.assets.len() {
            out.push(',');
            let v = panel.values[(t, a)];
            if !v.is_nan() {
                out.push_str(&fmt_f64(v));
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_panel_csv(panel: &ReturnPanel, path: &Path) -> Result<()> {
    fs::write(path, panel_to_csv_string(panel)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Columns are lookback-major: all assets for the first lookback, then
    /// all assets for the second, and so on.
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    /// Panel row of every feature row.
    pub date_index: Vec<usize>,
    pub dates: Vec<String>,
}

/// Features at date `t` are the past-`k` cumulative log returns
/// `r_{t−k+1} + … + r_t` for every `k` in `lookbacks`; the response is the
/// next-`horizon` cumulative return `r_{t+1} + … + r_{t+horizon}`. Rows that
/// touch a missing value are dropped.
pub fn make_features(
    panel: &ReturnPanel,
    lookbacks: &[usize],
    horizon: usize,
) -> Result<FeatureSet> {
    if lookbacks.is_empty() || lookbacks.contains(&0) || horizon == 0 {
        return Err(Error::arg("lookbacks and horizon must be positive"));
    }
    let max_k = *lookbacks.iter().max().expect("non-empty");
    let t_len = panel.dates.len();
    if t_len <= max_k + horizon {
        return Err(Error::arg(format!(
            "need more than {} dates for lookback {max_k} and horizon {horizon}, got {t_len}",
            max_k + horizon
        )));
    }
    let assets = panel.assets.len();
    let v = &panel.values;
    let window = |a: usize, from: usize, to: usize| -> f64 { (from..to).map(|s| v[(s, a)]).sum() };

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut date_index = Vec::new();
    for t in (max_k - 1)..(t_len - horizon) {
        let mut row = Vec::with_capacity(assets * lookbacks.len());
        for &k in lookbacks {
            for a in 0..assets {
                row.push(window(a, t + 1 - k, t + 1));
            }
        }
        let target: Vec<f64> = (0..assets)
            .map(|a| window(a, t + 1, t + 1 + horizon))
            .collect();
        if row.iter().chain(&target).any(|x| x.is_nan()) {
            continue;
        }
        xs.extend(row);
        ys.extend(target);
        date_index.push(t);
    }
    let n = date_index.len();
    Ok(FeatureSet {
        x: DenseMatrix::from_row_slice(n, assets * lookbacks.len(), &xs),
        y: DenseMatrix::from_row_slice(n, assets, &ys),
        dates: date_index.iter().map(|&t| panel.dates[t].clone()).collect(),
        date_index,
    })
}

/// Writes `x.csv`, `y.csv` and the `date_index.csv` sidecar.
pub fn write_features(features: &FeatureSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("x.csv"), &features.x)?;
    write_csv(&dir.join("y.csv"), &features.y)?;
    let mut body = String::from("row,panel_index,date\n");
    for (i, (t, d)) in features.date_index.iter().zip(&features.dates).enumerate() {
        body.push_str(&format!("{i},{t},{d}\n"));
    }
    let path = dir.join("date_index.csv");
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RollingSplit {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
    /// Buffers between train/valid and valid/test.
    pub gaps: [Range<usize>; 2],
}

/// Folds over `0..n_periods`. Each fold is train, gap, valid, gap, test;
/// the next fold starts `test_len` periods later. Only complete folds are
/// returned.
pub fn rolling_splits(
    n_periods: usize,
    train_len: usize,
    valid_len: usize,
    test_len: usize,
    gap_len: usize,
) -> Result<Vec<RollingSplit>> {
    if train_len == 0 || valid_len == 0 || test_len == 0 {
        return Err(Error::arg("segment lengths must be positive"));
    }
    let span = train_len + valid_len + test_len + 2 * gap_len;
    if span > n_periods {
        return Err(Error::arg(format!(
            "a fold needs {span} periods but only {n_periods} are available"
        )));
    }
    let mut folds = Vec::new();
    let mut start = 0;
    while start + span <= n_periods {
        let train = start..start + train_len;
        let valid = train.end + gap_len..train.end + gap_len + valid_len;
        let test = valid.end + gap_len..valid.end + gap_len + test_len;
        folds.push(RollingSplit {
            gaps: [train.end..valid.start, valid.end..test.start],
            train,
            valid,
            test,
        });
        start += test_len;
    }
    Ok(folds)
}
