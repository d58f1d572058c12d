//! CSV ingestion, data replay and table rendering.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvpe::run_bvpe;
use crate::engine::{slice_source, EngineError, StoppingRecord};
use crate::eta::EtaValue;
use crate::montecarlo::{GenericSummary, Procedure, SimSummary};
use crate::mrpe::run_mrpe;
use crate::stats::RunningStats;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: cannot parse {value:?} in column {column} as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: value {value} is not finite")]
    NonFinite { row: usize, value: f64 },
    #[error("column {0} not found")]
    MissingColumn(String),
    #[error("series is empty")]
    EmptySeries,
    #[error("nothing to emit")]
    EmptyTable,
    #[error("unknown output format {0:?} (expected markdown, csv or json)")]
    UnknownFormat(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Ordered, nonempty, finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSeries {
    values: Vec<f64>,
    pub label: String,
}

impl DataSeries {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self, CliError> {
        if values.is_empty() {
            return Err(CliError::EmptySeries);
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(CliError::NonFinite {
                row: i + 1,
                value: v,
            });
        }
        Ok(Self {
            values,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    /// Zero-based.
    Index(usize),
}

impl FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

impl std::fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSelector::Name(n) => write!(f, "{n:?}"),
            ColumnSelector::Index(i) => write!(f, "#{i}"),
        }
    }
}

pub fn load_csv_series(
    path: &Path,
    column: &ColumnSelector,
    has_header: bool,
) -> Result<DataSeries, CliError> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let label = match column {
        ColumnSelector::Name(n) => n.clone(),
        ColumnSelector::Index(_) => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    read_csv_series(file, column, has_header, label)
}

/// Reader form of [`load_csv_series`]; rows are numbered from 1 after any header.
pub fn read_csv_series<R: Read>(
    reader: R,
    column: &ColumnSelector,
    has_header: bool,
    label: impl Into<String>,
) -> Result<DataSeries, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let index = match column {
        ColumnSelector::Index(i) => *i,
        ColumnSelector::Name(name) => {
            if !has_header {
                return Err(CliError::MissingColumn(column.to_string()));
            }
            rdr.headers()?
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::MissingColumn(column.to_string()))?
        }
    };
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let cell = rec
            .get(index)
            .ok_or_else(|| CliError::MissingColumn(column.to_string()))?;
        let v: f64 = cell.parse().map_err(|_| CliError::Parse {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        })?;
        if !v.is_finite() {
            return Err(CliError::NonFinite { row, value: v });
        }
        values.push(v);
    }
    DataSeries::new(values, label)
}

/// Count, mean, standard deviation, minimum and maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

pub fn describe(series: &DataSeries) -> Descriptive {
    let stats: RunningStats = series.values().iter().copied().collect();
    Descriptive {
        n: stats.count(),
        mean: stats.mean(),
        sd: stats.std_dev().unwrap_or(0.0),
        min: stats.min(),
        max: series
            .values()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Seeded uniform shuffle (Fisher–Yates).
pub fn permute(values: &[f64], seed: u64) -> Vec<f64> {
    let mut out = values.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Shuffles the series and runs the procedure on it; the pilot is the first
/// `m` shuffled rows.
pub fn replay_run(
    series: &DataSeries,
    procedure: &Procedure,
    permutation_seed: u64,
) -> Result<StoppingRecord, EngineError> {
    let shuffled = permute(series.values(), permutation_seed);
    let mut source = slice_source(&shuffled);
    match procedure {
        Procedure::Mrpe(cfg) => run_mrpe(cfg, &mut source),
        Procedure::Bvpe(cfg) => run_bvpe(cfg, &mut source),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(CliError::UnknownFormat(s.to_string())),
        }
    }
}

/// Anything [`emit_table`] can render.
#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Eta(Vec<EtaValue>),
    Simulation(Vec<SimSummary>),
    Records(Vec<StoppingRecord>),
    Generic(Vec<GenericSummary>),
}

impl Table {
    fn len(&self) -> usize {
        match self {
            Table::Eta(v) => v.len(),
            Table::Simulation(v) => v.len(),
            Table::Records(v) => v.len(),
            Table::Generic(v) => v.len(),
        }
    }

    fn to_json(&self) -> Result<String, serde_json::Error> {
        match self {
            Table::Eta(v) => serde_json::to_string_pretty(v),
            Table::Simulation(v) => serde_json::to_string_pretty(v),
            Table::Records(v) => serde_json::to_string_pretty(v),
            Table::Generic(v) => serde_json::to_string_pretty(v),
        }
    }

    fn grid(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let f4 = |x: f64| format!("{x:.4}");
        let f5 = |x: f64| format!("{x:.5}");
        let opt5 = |x: Option<f64>| x.map(f5).unwrap_or_default();
        match self {
            Table::Eta(v) => (
                vec!["k", "eta(k)", "eta(k)/k"],
                v.iter()
                    .map(|e| vec![e.k.to_string(), f4(e.value), f4(e.value / e.k as f64)])
                    .collect(),
            ),
            Table::Simulation(v) => {
                let risk = v.iter().any(|s| s.xi_hat.is_some());
                let var = v.iter().any(|s| s.estimator_variance.is_some());
                let mut head = vec![
                    "procedure",
                    "n*",
                    "n_bar",
                    "s(n_bar)",
                    "n_bar-n*",
                    "eta(k)/rho",
                ];
                if risk {
                    head.extend(["xi_hat", "omega_hat/c", "1/(2rho)"]);
                }
                if var {
                    head.push("var(estimate)");
                }
                head.extend(["phi_bar", "E(phi)"]);
                let rows = v
                    .iter()
                    .map(|s| {
                        let mut r = vec![
                            s.label.clone(),
                            format!("{}", s.n_star),
                            f5(s.n_bar),
                            f5(s.se_n_bar),
                            f5(s.n_bar_minus_n_star),
                            f5(s.second_order_ref),
                        ];
                        if risk {
                            r.extend([
                                opt5(s.xi_hat),
                                opt5(s.omega_hat_over_c),
                                opt5(s.half_inv_rho),
                            ]);
                        }
                        if var {
                            r.push(
                                s.estimator_variance
                                    .map(|x| format!("{x:.5e}"))
                                    .unwrap_or_default(),
                            );
                        }
                        r.extend([f5(s.phi_bar), f5(s.expected_phi)]);
                        r
                    })
                    .collect();
                (head, rows)
            }
            Table::Records(v) => (
                vec!["n", "T", "prelim_n", "phi", "estimate"],
                v.iter()
                    .map(|r| {
                        vec![
                            r.final_n.to_string(),
                            r.stages.to_string(),
                            r.prelim_n.to_string(),
                            r.ops.to_string(),
                            format!("{:.4}", r.estimate),
                        ]
                    })
                    .collect(),
            ),
            Table::Generic(v) => (
                vec![
                    "n*",
                    "rho",
                    "k",
                    "m0",
                    "k*t1-rho*n*",
                    "se",
                    "t2-n*",
                    "se",
                    "eta(k)",
                    "phi_bar",
                ],
                v.iter()
                    .map(|g| {
                        vec![
                            format!("{}", g.n_star),
                            format!("{}", g.rho),
                            g.k.to_string(),
                            g.m0.to_string(),
                            f5(g.kt1_minus_rho_n_star),
                            f5(g.se_kt1),
                            f5(g.t2_minus_n_star),
                            f5(g.se_t2),
                            f4(g.eta_ref),
                            f5(g.phi_bar),
                        ]
                    })
                    .collect(),
            ),
        }
    }
}

pub fn emit_table(table: &Table, format: OutputFormat) -> Result<String, CliError> {
    if table.len() == 0 {
        return Err(CliError::EmptyTable);
    }
    match format {
        OutputFormat::Json => {
            let mut s = table.to_json()?;
            s.push('\n');
            Ok(s)
        }
        OutputFormat::Csv => {
            let (head, rows) = table.grid();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&head)?;
            for r in rows {
                w.write_record(&r)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| CliError::Csv(e.into_error().into()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        OutputFormat::Markdown => {
            let (head, rows) = table.grid();
            let mut s = String::new();
            let _ = writeln!(s, "| {} |", head.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(head.len()));
            for r in rows {
                let _ = writeln!(s, "| {} |", r.join(" | "));
            }
            Ok(s)
        }
    }
}
