//! Feature engineering: great-circle distance, log transforms, the model
//! feature matrix, and descriptive statistics.

use std::io::{self, Write};

use thiserror::Error;

use crate::ingest::{AugmentedRecord, Centroid};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.7613;

pub const N_FEATURES: usize = 11;

/// Model feature order. Zone columns hold the dense lexicographic zone index;
/// populations stay raw, the business attributes are natural-log transformed.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "origin_zone_index",
    "destination_zone_index",
    "GCD",
    "orig_pop",
    "dest_pop",
    "log_orig_est",
    "log_dest_est",
    "log_orig_emp",
    "log_dest_emp",
    "log_orig_ap",
    "log_dest_ap",
];

pub const GCD_FEATURE: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    Coordinate { lat: f64, lon: f64 },
    #[error("log of non-positive value {0}")]
    NonPositive(f64),
    #[error("row {row}, column `{column}`: {reason}")]
    Cell {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error("descriptive statistics of an empty column")]
    EmptyColumn,
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Identifies the OD pair behind a matrix row.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowKey {
    pub origin: String,
    pub destination: String,
}

/// Dense row-major feature table plus the regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    values: Vec<f64>,
    target: Vec<f64>,
    row_keys: Vec<RowKey>,
}

impl FeatureMatrix {
    /// Checks shape and finiteness. `row_keys` may be empty, in which case
    /// keys `r<i>` are generated.
    pub fn new(
        feature_names: Vec<String>,
        values: Vec<f64>,
        target: Vec<f64>,
        mut row_keys: Vec<RowKey>,
    ) -> Result<Self> {
        let m = feature_names.len();
        if m == 0 {
            return Err(FeatureError::Shape("no features".into()));
        }
        let n = target.len();
        if values.len() != n * m {
            return Err(FeatureError::Shape(format!(
                "{} values for {n} rows x {m} features",
                values.len()
            )));
        }
        if row_keys.is_empty() {
            row_keys = (0..n)
                .map(|i| RowKey {
                    origin: format!("r{i}"),
                    destination: format!("r{i}"),
                })
                .collect();
        } else if row_keys.len() != n {
            return Err(FeatureError::Shape(format!("{} row keys for {n} rows", row_keys.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::Cell {
                row: pos / m,
                column: feature_names[pos % m].clone(),
                reason: format!("non-finite value {}", values[pos]),
            });
        }
        if let Some(row) = target.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::Cell {
                row,
                column: "target".into(),
                reason: format!("non-finite value {}", target[row]),
            });
        }
        Ok(FeatureMatrix {
            feature_names,
            values,
            target,
            row_keys,
        })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(feature_names: &[&str], rows: &[Vec<f64>], target: Vec<f64>) -> Result<Self> {
        let m = feature_names.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != m) {
            return Err(FeatureError::Shape(format!("row {bad} has {} values, expected {m}", rows[bad].len())));
        }
        FeatureMatrix::new(
            feature_names.iter().map(|s| s.to_string()).collect(),
            rows.concat(),
            target,
            Vec::new(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features())
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.rows().map(|r| r[feature]).collect()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let m = self.n_features();
        let mut values = Vec::with_capacity(rows.len() * m);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            values,
            target: rows.iter().map(|&i| self.target[i]).collect(),
            row_keys: rows.iter().map(|&i| self.row_keys[i].clone()).collect(),
        }
    }
}

/// Haversine distance in miles on a sphere of radius [`EARTH_RADIUS_MILES`].
pub fn great_circle_distance(a: Centroid, b: Centroid) -> Result<f64> {
    for c in [a, b] {
        let ok = c.lat.is_finite() && c.lon.is_finite() && c.lat.abs() <= 90.0 && c.lon.abs() <= 180.0;
        if !ok {
            return Err(FeatureError::Coordinate { lat: c.lat, lon: c.lon });
        }
    }
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin())
}

pub fn log_transform(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(FeatureError::NonPositive(x))
    }
}

/// Assembles the 11-column model matrix with `ln(trips)` as target.
pub fn build_feature_matrix(records: &[AugmentedRecord]) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(records.len() * N_FEATURES);
    let mut target = Vec::with_capacity(records.len());
    let mut keys = Vec::with_capacity(records.len());
    for (row, r) in records.iter().enumerate() {
        let cell = |column: &str, x: u64| -> Result<f64> {
            log_transform(x as f64).map_err(|_| FeatureError::Cell {
                row,
                column: column.to_string(),
                reason: format!("non-positive value {x}"),
            })
        };
        let positive = |column: &str, x: u64| -> Result<f64> { cell(column, x).map(|_| x as f64) };
        let (o, d) = (&r.origin, &r.destination);
        let gcd = great_circle_distance(
            Centroid { lat: o.lat, lon: o.lon },
            Centroid { lat: d.lat, lon: d.lon },
        )
        .map_err(|e| FeatureError::Cell {
            row,
            column: "GCD".into(),
            reason: e.to_string(),
        })?;
        values.extend_from_slice(&[
            r.origin_index as f64,
            r.destination_index as f64,
            gcd,
            positive("orig_pop", o.population)?,
            positive("dest_pop", d.population)?,
            cell("orig_est", o.establishments)?,
            cell("dest_est", d.establishments)?,
            cell("orig_emp", o.employees)?,
            cell("dest_emp", d.employees)?,
            cell("orig_ap", o.annual_payroll)?,
            cell("dest_ap", d.annual_payroll)?,
        ]);
        target.push(cell("annual_total_trips", r.annual_total_trips)?);
        keys.push(RowKey {
            origin: r.origin_zone.clone(),
            destination: r.destination_zone.clone(),
        });
    }
    FeatureMatrix::new(
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        values,
        target,
        keys,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, median (midpoint of the two middle values for even `n`), min, max.
pub fn descriptive_stats(values: &[f64]) -> Result<StatsSummary> {
    if values.is_empty() {
        return Err(FeatureError::EmptyColumn);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(StatsSummary {
        mean: values.iter().sum::<f64>() / n as f64,
        median,
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Descriptive statistics for the dataset variables, target first, raw and
/// log columns interleaved.
pub fn dataset_stats(records: &[AugmentedRecord]) -> Result<Vec<(String, StatsSummary)>> {
    if records.is_empty() {
        return Err(FeatureError::EmptyColumn);
    }
    let col = |f: &dyn Fn(&AugmentedRecord) -> u64| -> Vec<f64> { records.iter().map(|r| f(r) as f64).collect() };
    let logged = |v: &[f64]| -> Result<Vec<f64>> { v.iter().map(|&x| log_transform(x)).collect() };
    let matrix = build_feature_matrix(records)?;

    let trips = col(&|r| r.annual_total_trips);
    let mut out = vec![
        ("annual_total_trips".to_string(), descriptive_stats(&trips)?),
        ("log_truck_trips".to_string(), descriptive_stats(matrix.target())?),
        ("GCD".to_string(), descriptive_stats(&matrix.column(GCD_FEATURE))?),
        ("orig_pop".to_string(), descriptive_stats(&col(&|r| r.origin.population))?),
        ("dest_pop".to_string(), descriptive_stats(&col(&|r| r.destination.population))?),
    ];
    let raw: [(&str, &dyn Fn(&AugmentedRecord) -> u64); 6] = [
        ("orig_est", &|r| r.origin.establishments),
        ("dest_est", &|r| r.destination.establishments),
        ("orig_emp", &|r| r.origin.employees),
        ("dest_emp", &|r| r.destination.employees),
        ("orig_ap", &|r| r.origin.annual_payroll),
        ("dest_ap", &|r| r.destination.annual_payroll),
    ];
    for (name, f) in raw {
        let v = col(f);
        out.push((name.to_string(), descriptive_stats(&v)?));
        out.push((format!("log_{name}"), descriptive_stats(&logged(&v)?)?));
    }
    Ok(out)
}

pub fn write_stats_csv<W: Write>(mut w: W, stats: &[(String, StatsSummary)]) -> io::Result<()> {
    writeln!(w, "variable,mean,median,min,max")?;
    for (name, s) in stats {
        writeln!(w, "{name},{},{},{},{}", s.mean, s.median, s.min, s.max)?;
    }
    w.flush()
}
