//! Ward agglomerative clustering of zone change vectors.
//!
//! The implementation keeps a merge-cost matrix updated with the
//! Lance-Williams recurrence; the test oracle re-evaluates the merging
//! cost definition directly from point sets, so the two routes share no
//! code. Features enter unstandardized by default: the six change
//! ratios share a dimensionless scale. A z-score option exists for
//! sensitivity runs.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::change::ZoneChanges;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("need at least 2 rows to cluster, got {0}")]
    DegenerateInput(usize),
    #[error("bad cluster count {k} for {n} rows")]
    BadK { k: usize, n: usize },
    #[error("feature matrix contains a non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("column {0} has zero variance, cannot standardize")]
    ZeroVarianceColumn(usize),
}

/// Row-major feature matrix with one row per zone. Row order is fixed
/// and recorded via the zone list.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub zones: Vec<String>,
    pub cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(zones: Vec<String>, cols: usize, data: Vec<f64>) -> Result<Self, ClusterError> {
        assert_eq!(zones.len() * cols, data.len(), "shape mismatch");
        for (i, chunk) in data.chunks(cols).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(ClusterError::NonFinite { row: i });
            }
        }
        Ok(FeatureMatrix { zones, cols, data })
    }

    /// Builds the n x 6 matrix from change rows, skipping degenerate
    /// zones. Returns the matrix and the skipped zone names.
    pub fn from_changes(rows: &[ZoneChanges]) -> Result<(Self, Vec<String>), ClusterError> {
        let mut zones = Vec::new();
        let mut data = Vec::new();
        let mut skipped = Vec::new();
        for row in rows {
            if row.vector.degenerate() {
                skipped.push(row.vector.zone.clone());
                continue;
            }
            zones.push(row.vector.zone.clone());
            data.extend(row.vector.components().iter().map(|c| c.unwrap()));
        }
        Ok((FeatureMatrix::new(zones, 6, data)?, skipped))
    }

    pub fn n_rows(&self) -> usize {
        self.zones.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Z-scores every column in place.
    pub fn standardize(&mut self) -> Result<(), ClusterError> {
        let n = self.n_rows();
        if n < 2 {
            return Err(ClusterError::DegenerateInput(n));
        }
        for c in 0..self.cols {
            let mean = (0..n).map(|r| self.data[r * self.cols + c]).sum::<f64>() / n as f64;
            let var = (0..n)
                .map(|r| (self.data[r * self.cols + c] - mean).powi(2))
                .sum::<f64>()
                / (n - 1) as f64;
            if var == 0.0 {
                return Err(ClusterError::ZeroVarianceColumn(c));
            }
            let sd = var.sqrt();
            for r in 0..n {
                let v = &mut self.data[r * self.cols + c];
                *v = (*v - mean) / sd;
            }
        }
        Ok(())
    }
}

/// One agglomeration step. Node ids follow the usual convention:
/// leaves are 0..n-1 and the cluster created by merge `i` gets id n+i.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub cost: f64,
    pub size: usize,
}

/// A stepwise Ward dendrogram: exactly n-1 merges, each recording the
/// merging cost as its height.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

/// Partition of the leaves into k labeled clusters. Labels are assigned
/// by ascending smallest-member row index, so label 0 always contains
/// row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

/// Ward merging cost of combining two disjoint point sets: the increase
/// in total within-cluster sum of squares, computed in the closed
/// centroid form |A||B|/(|A|+|B|) * ||m_A - m_B||^2.
pub fn merge_cost(a: &[&[f64]], b: &[&[f64]]) -> Result<f64, ClusterError> {
    if a.is_empty() || b.is_empty() {
        return Err(ClusterError::EmptyCluster);
    }
    let dims = a[0].len();
    let centroid = |points: &[&[f64]]| -> Vec<f64> {
        let mut m = vec![0.0; dims];
        for p in points {
            for (mi, v) in m.iter_mut().zip(*p) {
                *mi += v;
            }
        }
        for mi in m.iter_mut() {
            *mi /= points.len() as f64;
        }
        m
    };
    let ma = centroid(a);
    let mb = centroid(b);
    let d2: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(na * nb / (na + nb) * d2)
}

/// Agglomerates rows under Ward linkage. At each step the pair with
/// minimal merging cost merges; ties break toward the smallest
/// (left id, right id) pair. Merge costs are the dendrogram heights.
pub fn ward_linkage(m: &FeatureMatrix) -> Result<Dendrogram, ClusterError> {
    let n = m.n_rows();
    if n < 2 {
        return Err(ClusterError::DegenerateInput(n));
    }

    // Active cluster ids with sizes; merge costs keyed by (min, max) id.
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes: BTreeMap<usize, f64> = (0..n).map(|i| (i, 1.0)).collect();
    let mut cost: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = m
                .row(i)
                .iter()
                .zip(m.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            cost.insert((i, j), 0.5 * d2);
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // Find the minimal-cost active pair; ties resolve to the
        // lexicographically smallest id pair because iteration is in
        // key order and comparison is strict.
        let mut best: Option<((usize, usize), f64)> = None;
        for (i, &a) in active.iter().enumerate() {
            for &b in &active[i + 1..] {
                let key = (a.min(b), a.max(b));
                let c = cost[&key];
                if best.map_or(true, |(_, bc)| c < bc) {
                    best = Some((key, c));
                }
            }
        }
        let ((a, b), c) = best.expect("at least one active pair");
        let new_id = n + step;
        let (sa, sb) = (sizes[&a], sizes[&b]);
        merges.push(Merge {
            left: a,
            right: b,
            cost: c,
            size: (sa + sb) as usize,
        });

        // Lance-Williams update of the merge cost from the new cluster
        // to every other active cluster.
        for &x in &active {
            if x == a || x == b {
                continue;
            }
            let sx = sizes[&x];
            let dax = cost[&(a.min(x), a.max(x))];
            let dbx = cost[&(b.min(x), b.max(x))];
            let total = sa + sb + sx;
            let updated = ((sa + sx) * dax + (sb + sx) * dbx - sx * c) / total;
            cost.insert((x.min(new_id), x.max(new_id)), updated);
        }
        active.retain(|&x| x != a && x != b);
        active.push(new_id);
        sizes.insert(new_id, sa + sb);
    }
    Ok(Dendrogram {
        n_leaves: n,
        merges,
    })
}

impl Dendrogram {
    /// Leaf sets of every node, indexed by node id.
    fn leaf_sets(&self) -> Vec<Vec<usize>> {
        let n = self.n_leaves;
        let mut sets: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for merge in &self.merges {
            let mut merged = sets[merge.left].clone();
            merged.extend_from_slice(&sets[merge.right]);
            merged.sort_unstable();
            sets.push(merged);
        }
        sets
    }

    /// JSON export of the merge list.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dendrogram serializes")
    }

    /// Newick text with branch lengths derived from merge costs.
    pub fn to_newick(&self, labels: &[String]) -> String {
        fn node(d: &Dendrogram, labels: &[String], id: usize, out: &mut String) -> f64 {
            if id < d.n_leaves {
                out.push_str(&labels[id]);
                return 0.0;
            }
            let merge = d.merges[id - d.n_leaves];
            out.push('(');
            let mut left = String::new();
            let lh = node(d, labels, merge.left, &mut left);
            let mut right = String::new();
            let rh = node(d, labels, merge.right, &mut right);
            out.push_str(&left);
            out.push_str(&format!(":{}", merge.cost - lh));
            out.push(',');
            out.push_str(&right);
            out.push_str(&format!(":{}", merge.cost - rh));
            out.push(')');
            merge.cost
        }
        let mut out = String::new();
        if self.n_leaves == 1 {
            out.push_str(&labels[0]);
        } else {
            node(self, labels, self.n_leaves + self.merges.len() - 1, &mut out);
        }
        out.push(';');
        out
    }
}

/// Cuts the dendrogram into k clusters by undoing the last k-1 merges.
pub fn cut(d: &Dendrogram, k: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = d.n_leaves;
    if k < 1 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let sets = d.leaf_sets();
    let mut consumed = vec![false; n + d.merges.len()];
    for merge in &d.merges[..n - k] {
        consumed[merge.left] = true;
        consumed[merge.right] = true;
    }
    // Alive nodes: leaves and the first n-k merge products not consumed
    // by a later applied merge.
    let mut clusters: Vec<&Vec<usize>> = (0..n + (n - k))
        .filter(|&id| !consumed[id])
        .map(|id| &sets[id])
        .collect();
    clusters.sort_by_key(|set| set[0]);
    let mut labels = vec![0usize; n];
    for (label, set) in clusters.iter().enumerate() {
        for &leaf in *set {
            labels[leaf] = label;
        }
    }
    Ok(ClusterAssignment { labels, k })
}

/// Picks k in [k_min, k_max] maximizing the gap between successive
/// merge costs; ties break toward smaller k. The gap is only defined
/// for 2 <= k <= n-1, so the range is clamped there; an empty range
/// falls back to the clamped lower bound.
pub fn suggest_k(d: &Dendrogram, k_min: usize, k_max: usize) -> usize {
    let n = d.n_leaves;
    let k_lo = k_min.max(2);
    let k_hi = k_max.min(n.saturating_sub(1));
    if k_lo > k_hi {
        return k_lo.min(n);
    }
    let mut best_k = k_lo;
    let mut best_gap = f64::NEG_INFINITY;
    for k in k_lo..=k_hi {
        // Cutting to k clusters sits between merge n-k-1 (last applied)
        // and merge n-k (first undone).
        let gap = d.merges[n - k].cost - d.merges[n - k - 1].cost;
        if gap > best_gap {
            best_gap = gap;
            best_k = k;
        }
    }
    best_k
}

/// Chance-corrected agreement between two labelings of the same rows.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same rows");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let choose2 = |m: u64| (m * m.saturating_sub(1)) as f64 / 2.0;
    let sum_table: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_rows: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_cols: f64 = cols.values().map(|&v| choose2(v)).sum();
    let total = choose2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0;
    }
    (sum_table - expected) / (max_index - expected)
}

/// Writes `zone,cluster` CSV in row order.
pub fn assignment_to_csv<W: Write>(
    zones: &[String],
    assignment: &ClusterAssignment,
    w: &mut W,
) -> io::Result<()> {
    writeln!(w, "zone,cluster")?;
    for (zone, label) in zones.iter().zip(&assignment.labels) {
        writeln!(w, "{zone},{label}")?;
    }
    Ok(())
}

/// Reads `zone,cluster` CSV.
pub fn assignment_from_csv<R: std::io::Read>(
    r: R,
    name: &str,
) -> Result<Vec<(String, usize)>, crate::change::ChangeError> {
    use std::io::BufRead;
    let bad_row = |line: usize, message: String| crate::change::ChangeError::BadRow {
        file: name.into(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut lines = std::io::BufReader::new(r).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "zone,cluster" => {}
        _ => return Err(bad_row(1, "expected header zone,cluster".into())),
    }
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| bad_row(i + 2, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (zone, label) = line
            .trim()
            .split_once(',')
            .ok_or_else(|| bad_row(i + 2, "expected 2 fields".into()))?;
        let label: usize = label
            .parse()
            .map_err(|_| bad_row(i + 2, format!("bad cluster label `{label}`")))?;
        out.push((zone.to_string(), label));
    }
    Ok(out)
}
