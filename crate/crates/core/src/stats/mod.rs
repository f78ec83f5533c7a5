//! Statistical analysis of exposure change against infection outcomes:
//! correlations, one-way ANOVA with Tukey post-hoc, log-OLS regression
//! with interactions and VIF screening, the incubation-lag join, and
//! the counterfactual case arithmetic.

pub mod anova;
pub mod dist;
pub mod linalg;
pub mod ols;

pub use anova::{anova_oneway, tukey_hsd, AnovaResult, TukeyPair, TukeyResult};
pub use ols::{
    build_design, ols_fit, vif, Design, DesignSpec, ModelFrame, RegressionResult, Term,
    TermEstimate,
};

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{Days, NaiveDate};

use crate::change::ExposureChange;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("{0} has zero variance")]
    ZeroVariance(String),
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFewObservations { need: usize, got: usize },
    #[error("degenerate group: {0}")]
    DegenerateGroup(String),
    #[error("design matrix is rank deficient at column `{column}`")]
    RankDeficient { column: String },
    #[error("too few rows for the design: n={n}, p={p}")]
    InsufficientRows { n: usize, p: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate term `{0}`")]
    DuplicateTerm(String),
    #[error("bad term `{0}`")]
    BadTerm(String),
    #[error("model spec line {line}: {message}")]
    BadModelSpec { line: usize, message: String },
    #[error("no zones joined the infection-rate series")]
    NoOverlap,
    #[error("{file}: line {line}: {message}")]
    BadRow {
        file: String,
        line: usize,
        message: String,
    },
    #[error("io failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for StatsError {
    fn from(e: std::io::Error) -> Self {
        StatsError::Io(e.to_string())
    }
}

/// Pearson product-moment correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewObservations {
            need: 3,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("x".into()));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("y".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Counterfactual avoided-case arithmetic: total cases times the
/// percent effect per point of exposure-density change times the
/// assumed change in points.
pub fn counterfactual_cases(total_cases: f64, pct_per_point: f64, delta_points: f64) -> f64 {
    total_cases * (pct_per_point / 100.0) * delta_points
}

/// One zone-date row of the infection-rate table.
#[derive(Debug, Clone, PartialEq)]
pub struct RatesRow {
    pub zone: String,
    pub date: NaiveDate,
    pub case_rate: f64,
    pub death_rate: f64,
    pub positivity_rate: f64,
    pub deaths_per_case: f64,
}

/// Reads `zone,date,case_rate,death_rate,positivity_rate,deaths_per_case`.
pub fn rates_from_csv<R: Read>(r: R, name: &str) -> Result<Vec<RatesRow>, StatsError> {
    let header = "zone,date,case_rate,death_rate,positivity_rate,deaths_per_case";
    let mut rows = Vec::new();
    let mut lines = BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == header => {}
        _ => {
            return Err(StatsError::BadRow {
                file: name.into(),
                line: 1,
                message: format!("expected header {header}"),
            })
        }
    }
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| StatsError::BadRow {
            file: name.into(),
            line: i + 2,
            message,
        };
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", parts.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64, StatsError> {
            let v: f64 = s.parse().map_err(|_| bad(format!("bad {what} `{s}`")))?;
            if v < 0.0 || !v.is_finite() {
                return Err(bad(format!("{what} must be finite and >= 0, got {v}")));
            }
            Ok(v)
        };
        let row = RatesRow {
            zone: parts[0].to_string(),
            date: parts[1]
                .parse()
                .map_err(|_| bad(format!("bad date `{}`", parts[1])))?,
            case_rate: num(parts[2], "case_rate")?,
            death_rate: num(parts[3], "death_rate")?,
            positivity_rate: num(parts[4], "positivity_rate")?,
            deaths_per_case: num(parts[5], "deaths_per_case")?,
        };
        if row.positivity_rate > 1.0 {
            return Err(bad(format!(
                "positivity_rate must be a fraction <= 1, got {}",
                row.positivity_rate
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn rates_to_csv<W: Write>(rows: &[RatesRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "zone,date,case_rate,death_rate,positivity_rate,deaths_per_case")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.zone, r.date, r.case_rate, r.death_rate, r.positivity_rate, r.deaths_per_case
        )?;
    }
    Ok(())
}

/// Per-zone covariates keyed by column name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

/// Covariate columns that are population or area shares and must lie in
/// [0, 1].
pub const SHARE_COLUMNS: &[&str] = &[
    "white",
    "black",
    "hispanic",
    "asian",
    "age_25_34",
    "age_over_65",
    "household_with_children",
    "educational_attainment",
    "no_health_insurance",
    "public_health_insurance",
    "unemployment_rate",
    "owner_occupied",
    "one_two_family",
    "public_housing",
    "residential_area",
    "office_area",
    "commercial_area",
    "works_from_home",
];

/// Reads a covariate CSV: header `zone,<name>,...`, one row per zone.
pub fn covariates_from_csv<R: Read>(r: R, name: &str) -> Result<CovariateTable, StatsError> {
    let mut lines = BufReader::new(r).lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        _ => {
            return Err(StatsError::BadRow {
                file: name.into(),
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let cols: Vec<String> = header.trim().split(',').map(|s| s.trim().to_string()).collect();
    if cols.first().map(String::as_str) != Some("zone") || cols.len() < 2 {
        return Err(StatsError::BadRow {
            file: name.into(),
            line: 1,
            message: "expected header zone,<covariate>,...".into(),
        });
    }
    let names: Vec<String> = cols[1..].to_vec();
    let mut rows = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| StatsError::BadRow {
            file: name.into(),
            line: i + 2,
            message,
        };
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != cols.len() {
            return Err(bad(format!(
                "expected {} fields, got {}",
                cols.len(),
                parts.len()
            )));
        }
        let mut values = Vec::with_capacity(names.len());
        for (colname, field) in names.iter().zip(&parts[1..]) {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(format!("bad number `{field}` in column {colname}")))?;
            if SHARE_COLUMNS.contains(&colname.as_str()) && !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("share column {colname} out of [0,1]: {v}")));
            }
            values.push(v);
        }
        if rows.insert(parts[0].to_string(), values).is_some() {
            return Err(bad(format!("duplicate zone {}", parts[0])));
        }
    }
    Ok(CovariateTable { names, rows })
}

/// One row of the lag join: a zone's exposure change next to its
/// infection rates read `lag_days` after the impact window.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedRow {
    pub zone: String,
    pub exposure_change: f64,
    pub case_rate: f64,
    pub death_rate: f64,
    pub positivity_rate: f64,
    pub deaths_per_case: f64,
}

/// Pairs each zone's exposure change with its rates at
/// `impact_end + lag_days`. Zones missing either side (or with an
/// undefined change) are dropped and reported by name.
pub fn lag_join(
    changes: &[ExposureChange],
    rates: &[RatesRow],
    impact_end: NaiveDate,
    lag_days: u32,
) -> Result<(Vec<JoinedRow>, Vec<String>), StatsError> {
    let read_date = impact_end
        .checked_add_days(Days::new(lag_days as u64))
        .expect("date arithmetic in range");
    let mut by_zone: BTreeMap<&str, &RatesRow> = BTreeMap::new();
    for row in rates {
        if row.date == read_date {
            by_zone.insert(row.zone.as_str(), row);
        }
    }
    let mut joined = Vec::new();
    let mut dropped = Vec::new();
    for change in changes {
        let Some(value) = change.value else {
            dropped.push(format!("{} (undefined exposure change)", change.zone));
            continue;
        };
        match by_zone.get(change.zone.as_str()) {
            Some(r) => joined.push(JoinedRow {
                zone: change.zone.clone(),
                exposure_change: value,
                case_rate: r.case_rate,
                death_rate: r.death_rate,
                positivity_rate: r.positivity_rate,
                deaths_per_case: r.deaths_per_case,
            }),
            None => dropped.push(format!("{} (no rates at {read_date})", change.zone)),
        }
    }
    if joined.is_empty() {
        return Err(StatsError::NoOverlap);
    }
    Ok((joined, dropped))
}

/// Builds the regression frame from joined rows, cluster labels, and
/// covariates. Rows missing a cluster label or covariates are dropped
/// and reported.
pub fn model_frame(
    joined: &[JoinedRow],
    clusters: Option<&BTreeMap<String, usize>>,
    covariates: Option<&CovariateTable>,
) -> (ModelFrame, Vec<String>) {
    let mut frame = ModelFrame::default();
    let mut dropped = Vec::new();
    let outcome_names = [
        "case_rate",
        "death_rate",
        "positivity_rate",
        "deaths_per_case",
        "exposure_change",
    ];
    for n in outcome_names {
        frame.columns.insert(n.to_string(), Vec::new());
    }
    if let Some(table) = covariates {
        for n in &table.names {
            frame.columns.insert(n.clone(), Vec::new());
        }
    }
    let mut labels = Vec::new();
    for row in joined {
        if let Some(clusters) = clusters {
            match clusters.get(&row.zone) {
                Some(&label) => labels.push(label),
                None => {
                    dropped.push(format!("{} (no cluster label)", row.zone));
                    continue;
                }
            }
        }
        let cov_values = match covariates {
            Some(table) => match table.rows.get(&row.zone) {
                Some(v) => Some(v),
                None => {
                    if clusters.is_some() {
                        labels.pop();
                    }
                    dropped.push(format!("{} (no covariates)", row.zone));
                    continue;
                }
            },
            None => None,
        };
        frame.zones.push(row.zone.clone());
        frame.columns.get_mut("case_rate").unwrap().push(row.case_rate);
        frame.columns.get_mut("death_rate").unwrap().push(row.death_rate);
        frame
            .columns
            .get_mut("positivity_rate")
            .unwrap()
            .push(row.positivity_rate);
        frame
            .columns
            .get_mut("deaths_per_case")
            .unwrap()
            .push(row.deaths_per_case);
        frame
            .columns
            .get_mut("exposure_change")
            .unwrap()
            .push(row.exposure_change);
        if let (Some(values), Some(table)) = (cov_values, covariates) {
            for (name, v) in table.names.iter().zip(values) {
                frame.columns.get_mut(name).unwrap().push(*v);
            }
        }
    }
    if clusters.is_some() {
        frame.cluster = Some(labels);
    }
    (frame, dropped)
}
