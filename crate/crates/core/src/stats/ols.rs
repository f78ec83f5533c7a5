//! Log-OLS regression with cluster dummies, interaction terms, and VIF
//! screening.
//!
//! Least squares goes through the QR path in [`super::linalg`]; the
//! normal-equations route exists only in the test oracle. Standard
//! errors are classical homoskedastic by default with an optional HC1
//! robust sandwich.

use std::collections::BTreeMap;

use super::dist::{f_sf, student_t_two_sided_p};
use super::linalg::{qr_least_squares, LinalgError, Mat};
use super::StatsError;

/// One model term. Cluster dummies expand against the reference
/// cluster; an interaction side may itself be the dummy expansion, in
/// which case one product column is emitted per dummy.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Covariate(String),
    ClusterDummies,
    ClusterDummy(usize),
    Interaction(Box<Term>, Box<Term>),
}

impl Term {
    /// Parses `a*b`, `cluster`, `cluster<id>`, or a covariate name.
    pub fn parse(text: &str) -> Result<Term, StatsError> {
        let t = text.trim();
        if t.is_empty() {
            return Err(StatsError::BadTerm(text.to_string()));
        }
        if let Some((l, r)) = t.split_once('*') {
            let left = Term::parse(l)?;
            let right = Term::parse(r)?;
            if matches!(left, Term::Interaction(..)) || matches!(right, Term::Interaction(..)) {
                return Err(StatsError::BadTerm(format!(
                    "nested interactions are not supported: {t}"
                )));
            }
            return Ok(Term::Interaction(Box::new(left), Box::new(right)));
        }
        if t == "cluster" {
            return Ok(Term::ClusterDummies);
        }
        if let Some(rest) = t.strip_prefix("cluster") {
            if let Ok(id) = rest.parse::<usize>() {
                return Ok(Term::ClusterDummy(id));
            }
        }
        Ok(Term::Covariate(t.to_string()))
    }
}

/// A regression design: response, optional log transform, terms, and
/// the reference cluster excluded from dummy expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub response: String,
    pub log_response: bool,
    pub terms: Vec<Term>,
    pub reference: Option<usize>,
    pub robust_se: bool,
}

impl DesignSpec {
    /// Bivariate convenience: log(response) ~ exposure_change.
    pub fn bivariate(response: &str) -> Self {
        DesignSpec {
            response: response.to_string(),
            log_response: true,
            terms: vec![Term::Covariate("exposure_change".into())],
            reference: None,
            robust_se: false,
        }
    }

    /// Parses the model-spec text format: `key = value` lines with keys
    /// `response` (value `<name>` or `<name> log`), `reference`,
    /// `robust_se`, and one `term` line per term. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, StatsError> {
        let mut response: Option<(String, bool)> = None;
        let mut terms = Vec::new();
        let mut reference = None;
        let mut robust_se = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| StatsError::BadModelSpec {
                line: lineno + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let value = value.trim();
            match key.trim() {
                "response" => {
                    let mut parts = value.split_whitespace();
                    let name = parts
                        .next()
                        .ok_or_else(|| bad("empty response".into()))?
                        .to_string();
                    let log = match parts.next() {
                        None => false,
                        Some("log") => true,
                        Some(other) => return Err(bad(format!("unknown modifier `{other}`"))),
                    };
                    response = Some((name, log));
                }
                "reference" => {
                    reference =
                        Some(value.parse().map_err(|_| bad(format!("bad reference `{value}`")))?);
                }
                "robust_se" => {
                    robust_se = value
                        .parse()
                        .map_err(|_| bad(format!("bad robust_se `{value}`")))?;
                }
                "term" => terms.push(Term::parse(value)?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        let (response, log_response) = response.ok_or(StatsError::BadModelSpec {
            line: 0,
            message: "missing `response = ...` line".into(),
        })?;
        if terms.is_empty() {
            return Err(StatsError::BadModelSpec {
                line: 0,
                message: "model needs at least one `term = ...` line".into(),
            });
        }
        Ok(DesignSpec {
            response,
            log_response,
            terms,
            reference,
            robust_se,
        })
    }
}

/// Joined per-zone data the regression stage consumes: numeric columns
/// keyed by name, plus an optional cluster label per row.
#[derive(Debug, Clone, Default)]
pub struct ModelFrame {
    pub zones: Vec<String>,
    pub columns: BTreeMap<String, Vec<f64>>,
    pub cluster: Option<Vec<usize>>,
}

impl ModelFrame {
    pub fn n_rows(&self) -> usize {
        self.zones.len()
    }

    fn column(&self, name: &str) -> Result<&Vec<f64>, StatsError> {
        self.columns
            .get(name)
            .ok_or_else(|| StatsError::UnknownColumn(name.to_string()))
    }

    fn cluster_ids(&self) -> Result<(&Vec<usize>, Vec<usize>), StatsError> {
        let labels = self
            .cluster
            .as_ref()
            .ok_or_else(|| StatsError::UnknownColumn("cluster".into()))?;
        let mut ids: Vec<usize> = labels.clone();
        ids.sort_unstable();
        ids.dedup();
        Ok((labels, ids))
    }
}

/// Built design: column names (intercept first) and the matrix.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: Mat,
    pub response: Vec<f64>,
    pub kept_zones: Vec<String>,
    pub dropped_nonpositive: usize,
}

fn expand_term(
    term: &Term,
    frame: &ModelFrame,
    reference: Option<usize>,
) -> Result<Vec<(String, Vec<f64>)>, StatsError> {
    match term {
        Term::Covariate(name) => Ok(vec![(name.clone(), frame.column(name)?.clone())]),
        Term::ClusterDummy(id) => {
            let (labels, _) = frame.cluster_ids()?;
            let col = labels.iter().map(|&l| f64::from(u8::from(l == *id))).collect();
            Ok(vec![(format!("cluster{id}"), col)])
        }
        Term::ClusterDummies => {
            let (labels, ids) = frame.cluster_ids()?;
            Ok(ids
                .into_iter()
                .filter(|id| Some(*id) != reference)
                .map(|id| {
                    let col = labels.iter().map(|&l| f64::from(u8::from(l == id))).collect();
                    (format!("cluster{id}"), col)
                })
                .collect())
        }
        Term::Interaction(left, right) => {
            let l = expand_term(left, frame, reference)?;
            let r = expand_term(right, frame, reference)?;
            let mut out = Vec::with_capacity(l.len() * r.len());
            for (ln, lc) in &l {
                for (rn, rc) in &r {
                    let col = lc.iter().zip(rc).map(|(a, b)| a * b).collect();
                    out.push((format!("{ln}*{rn}"), col));
                }
            }
            Ok(out)
        }
    }
}

/// Expands terms into named columns, applies the response transform,
/// and drops rows with non-positive outcomes under a log response.
pub fn build_design(spec: &DesignSpec, frame: &ModelFrame) -> Result<Design, StatsError> {
    let response_raw = frame.column(&spec.response)?;
    let mut names = vec!["intercept".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; frame.n_rows()]];
    for term in &spec.terms {
        for (name, col) in expand_term(term, frame, spec.reference)? {
            if names.contains(&name) {
                return Err(StatsError::DuplicateTerm(name));
            }
            names.push(name);
            columns.push(col);
        }
    }

    let keep: Vec<bool> = response_raw
        .iter()
        .map(|&y| !spec.log_response || y > 0.0)
        .collect();
    let dropped_nonpositive = keep.iter().filter(|k| !**k).count();

    let filter = |col: &Vec<f64>| -> Vec<f64> {
        col.iter()
            .zip(&keep)
            .filter_map(|(v, k)| k.then_some(*v))
            .collect()
    };
    let response: Vec<f64> = response_raw
        .iter()
        .zip(&keep)
        .filter_map(|(v, k)| k.then_some(if spec.log_response { v.ln() } else { *v }))
        .collect();
    let kept_zones: Vec<String> = frame
        .zones
        .iter()
        .zip(&keep)
        .filter_map(|(z, k)| k.then(|| z.clone()))
        .collect();
    let filtered: Vec<Vec<f64>> = columns.iter().map(filter).collect();
    Ok(Design {
        names,
        matrix: Mat::from_columns(&filtered),
        response,
        kept_zones,
        dropped_nonpositive,
    })
}

/// One fitted term.
#[derive(Debug, Clone)]
pub struct TermEstimate {
    pub name: String,
    pub coef: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    /// None for the intercept.
    pub vif: Option<f64>,
}

/// Coefficients, errors, and fit statistics of one model.
#[derive(Debug, Clone)]
pub struct RegressionResult {
    pub response: String,
    pub log_response: bool,
    pub terms: Vec<TermEstimate>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_stat: f64,
    pub f_p: f64,
    pub n: usize,
    pub n_params: usize,
    pub dropped_nonpositive: usize,
    pub robust_se: bool,
}

impl RegressionResult {
    /// Percent effect of a `delta`-unit move in a term of a log model:
    /// 100 * (exp(beta * delta) - 1).
    pub fn percent_effect(&self, term: &str, delta: f64) -> Option<f64> {
        let est = self.terms.iter().find(|t| t.name == term)?;
        Some(100.0 * ((est.coef * delta).exp() - 1.0))
    }

    /// Writes the coefficient table: `term,coefficient,std_error,t,p,vif`.
    pub fn coefficients_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "term,coefficient,std_error,t,p,vif")?;
        for t in &self.terms {
            write!(w, "{},{},{},{},{}", t.name, t.coef, t.se, t.t, t.p)?;
            match t.vif {
                Some(v) => writeln!(w, ",{v}")?,
                None => writeln!(w, ",")?,
            }
        }
        Ok(())
    }

    /// Writes the diagnostics block as `key=value` lines.
    pub fn diagnostics_kv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "response={}", self.response)?;
        writeln!(w, "log_response={}", self.log_response)?;
        writeln!(w, "n={}", self.n)?;
        writeln!(w, "n_params={}", self.n_params)?;
        writeln!(w, "r_squared={}", self.r_squared)?;
        writeln!(w, "adj_r_squared={}", self.adj_r_squared)?;
        writeln!(w, "f_stat={}", self.f_stat)?;
        writeln!(w, "f_p={}", self.f_p)?;
        writeln!(w, "dropped_nonpositive={}", self.dropped_nonpositive)?;
        writeln!(w, "robust_se={}", self.robust_se)?;
        Ok(())
    }
}

fn rank_error(err: LinalgError, names: &[String]) -> StatsError {
    match err {
        LinalgError::RankDeficient { column } => StatsError::RankDeficient {
            column: names.get(column).cloned().unwrap_or_else(|| column.to_string()),
        },
        LinalgError::Underdetermined { rows, cols } => StatsError::InsufficientRows {
            n: rows,
            p: cols,
        },
    }
}

/// Fits the design by QR least squares with classical (or HC1 robust)
/// standard errors, and computes per-term VIFs.
pub fn ols_fit(spec: &DesignSpec, frame: &ModelFrame) -> Result<RegressionResult, StatsError> {
    let design = build_design(spec, frame)?;
    fit_design(&design, spec)
}

/// Fits an already-built design (used by the fit path and by callers
/// that assemble matrices directly).
pub fn fit_design(design: &Design, spec: &DesignSpec) -> Result<RegressionResult, StatsError> {
    let x = &design.matrix;
    let y = &design.response;
    let n = x.rows;
    let p = x.cols;
    if n <= p {
        return Err(StatsError::InsufficientRows { n, p });
    }
    let ls = qr_least_squares(x, y).map_err(|e| rank_error(e, &design.names))?;

    let fitted = x.mul_vec(&ls.coef);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let mean_y: f64 = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if tss == 0.0 {
        return Err(StatsError::ZeroVariance("response".into()));
    }

    let df_resid = (n - p) as f64;
    let sigma2 = rss / df_resid;
    let ses: Vec<f64> = if spec.robust_se {
        // HC1 sandwich: (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-p)
        let scale = n as f64 / df_resid;
        (0..p)
            .map(|j| {
                let mut var = 0.0;
                // (X'X)^-1 row j dotted with x_i, squared against e_i^2
                for (i, e) in residuals.iter().enumerate() {
                    let mut xij = 0.0;
                    for c in 0..p {
                        xij += ls.xtx_inv.at(j, c) * x.at(i, c);
                    }
                    var += xij * xij * e * e;
                }
                (var * scale).sqrt()
            })
            .collect()
    } else {
        ls.xtx_inv_diag.iter().map(|d| (sigma2 * d).sqrt()).collect()
    };

    let r_squared = 1.0 - rss / tss;
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / df_resid;
    let (f_stat, f_p) = if p > 1 {
        let f = ((tss - rss) / (p as f64 - 1.0)) / (rss / df_resid);
        let f = if rss == 0.0 { f64::INFINITY } else { f };
        (f, f_sf(f, p as f64 - 1.0, df_resid))
    } else {
        (f64::NAN, f64::NAN)
    };

    let vifs = vif(x).map_err(|e| rank_error(e, &design.names))?;

    let terms = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let coef = ls.coef[j];
            let se = ses[j];
            let t = if se > 0.0 {
                coef / se
            } else if coef == 0.0 {
                0.0
            } else {
                f64::INFINITY * coef.signum()
            };
            let p_val = if se > 0.0 {
                student_t_two_sided_p(t, df_resid)
            } else if coef == 0.0 {
                1.0
            } else {
                0.0
            };
            TermEstimate {
                name: name.clone(),
                coef,
                se,
                t,
                p: p_val,
                vif: vifs[j],
            }
        })
        .collect();

    Ok(RegressionResult {
        response: spec.response.clone(),
        log_response: spec.log_response,
        terms,
        r_squared,
        adj_r_squared,
        f_stat,
        f_p,
        n,
        n_params: p,
        dropped_nonpositive: design.dropped_nonpositive,
        robust_se: spec.robust_se,
    })
}

/// Per-column VIFs of a design whose first column is the intercept:
/// VIF_j = 1/(1 - R2_j) from regressing column j on the others. The
/// intercept reports None.
pub fn vif(x: &Mat) -> Result<Vec<Option<f64>>, LinalgError> {
    let p = x.cols;
    let mut out = vec![None; p];
    if p < 3 {
        // intercept plus one regressor: VIF is 1 by definition
        for slot in out.iter_mut().skip(1) {
            *slot = Some(1.0);
        }
        return Ok(out);
    }
    for j in 1..p {
        let yj = x.column(j);
        let others = x.drop_column(j);
        let ls = qr_least_squares(&others, &yj).map_err(|e| match e {
            // a rank failure while dropping j implicates the full matrix
            LinalgError::RankDeficient { column } => LinalgError::RankDeficient {
                column: if column >= j { column + 1 } else { column },
            },
            other => other,
        })?;
        let fitted = others.mul_vec(&ls.coef);
        let rss: f64 = yj.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
        let mean: f64 = yj.iter().sum::<f64>() / yj.len() as f64;
        let tss: f64 = yj.iter().map(|v| (v - mean).powi(2)).sum();
        let r2 = if tss == 0.0 { 0.0 } else { 1.0 - rss / tss };
        out[j] = Some(if r2 >= 1.0 { f64::INFINITY } else { 1.0 / (1.0 - r2) });
    }
    Ok(out)
}
