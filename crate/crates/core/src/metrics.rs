//! Clustering validity indices: accuracy under optimal label matching, and
//! the internal Ball-Hall, Davies-Bouldin and average silhouette width.
//!
//! Cluster labels are `0..K`; every label below the largest one must occur.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Cross-tabulation of true (rows) against predicted (columns) labels,
/// zero-padded to a square matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    /// Original label of each row.
    pub true_labels: Vec<usize>,
    /// Original label of each column.
    pub pred_labels: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.is_empty() {
            return Err(Error::InsufficientData("no labels to compare".into()));
        }
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: pred.len(),
            });
        }
        let index = |labels: &[usize]| -> BTreeMap<usize, usize> {
            let distinct: BTreeSet<usize> = labels.iter().copied().collect();
            distinct.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
        };
        let rows = index(truth);
        let cols = index(pred);
        let r = rows.len().max(cols.len());
        let mut counts = vec![vec![0; r]; r];
        for (p, t) in pred.iter().zip(truth) {
            counts[rows[t]][cols[p]] += 1;
        }
        Ok(Self {
            counts,
            true_labels: rows.into_keys().collect(),
            pred_labels: cols.into_keys().collect(),
        })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Largest achievable diagonal sum over column permutations.
    pub fn best_diagonal(&self) -> usize {
        let assignment = max_assignment(&self.counts);
        assignment.iter().enumerate().map(|(i, &j)| self.counts[i][j]).sum()
    }
}

/// Fraction of labels that agree after the best one-to-one relabeling.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let cm = ConfusionMatrix::new(pred, truth)?;
    Ok(cm.best_diagonal() as f64 / cm.total() as f64)
}

/// Column assigned to each row so that the sum of the chosen entries is
/// maximal (Hungarian method, O(r³)).
pub fn max_assignment(weights: &[Vec<usize>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let max = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    // minimise max − w, 1-based with a dummy row/column 0
    let cost = |i: usize, j: usize| max - weights[i - 1][j - 1] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

/// Sizes, barycenters and dispersions (mean squared distance to the
/// barycenter) of each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary {
    pub sizes: Vec<usize>,
    pub barycenters: Vec<Vec<f64>>,
    pub dispersions: Vec<f64>,
}

impl ClusterSummary {
    pub fn new<S: AsRef<[f64]>>(signals: &[S], labels: &[usize]) -> Result<Self> {
        let k = cluster_count(signals, labels)?;
        let p = signals[0].as_ref().len();
        let mut sizes = vec![0; k];
        let mut barycenters = vec![vec![0.0; p]; k];
        for (x, &l) in signals.iter().zip(labels) {
            sizes[l] += 1;
            for (c, v) in barycenters[l].iter_mut().zip(x.as_ref()) {
                *c += v;
            }
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyCluster(empty));
        }
        for (c, &size) in barycenters.iter_mut().zip(&sizes) {
            c.iter_mut().for_each(|v| *v /= size as f64);
        }
        let mut dispersions = vec![0.0; k];
        for (x, &l) in signals.iter().zip(labels) {
            dispersions[l] += sq_dist(x.as_ref(), &barycenters[l]);
        }
        for (d, &size) in dispersions.iter_mut().zip(&sizes) {
            *d /= size as f64;
        }
        Ok(Self {
            sizes,
            barycenters,
            dispersions,
        })
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }
}

fn cluster_count<S: AsRef<[f64]>>(signals: &[S], labels: &[usize]) -> Result<usize> {
    if signals.is_empty() {
        return Err(Error::InsufficientData("no signals".into()));
    }
    if signals.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: signals.len(),
            found: labels.len(),
        });
    }
    let p = signals[0].as_ref().len();
    if let Some(x) = signals.iter().find(|x| x.as_ref().len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x.as_ref().len(),
        });
    }
    Ok(labels.iter().max().map_or(0, |m| m + 1))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Mean of the cluster dispersions.
pub fn ball_hall<S: AsRef<[f64]>>(signals: &[S], labels: &[usize]) -> Result<f64> {
    let summary = ClusterSummary::new(signals, labels)?;
    Ok(summary.dispersions.iter().sum::<f64>() / summary.k() as f64)
}

pub fn davies_bouldin<S: AsRef<[f64]>>(signals: &[S], labels: &[usize]) -> Result<f64> {
    let summary = ClusterSummary::new(signals, labels)?;
    let k = summary.k();
    if k < 2 {
        return Err(Error::InvalidParameter("Davies-Bouldin needs at least 2 clusters".into()));
    }
    let mut total = 0.0;
    for a in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for b in (0..k).filter(|&b| b != a) {
            let sep = dist(&summary.barycenters[a], &summary.barycenters[b]);
            if sep == 0.0 {
                return Err(Error::CoincidentBarycenters(a.min(b), a.max(b)));
            }
            worst = worst.max((summary.dispersions[a] + summary.dispersions[b]) / sep);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    /// Mean over clusters of the within-cluster mean silhouette.
    pub asw: f64,
    pub per_point: Vec<f64>,
}

pub fn silhouette<S: AsRef<[f64]>>(signals: &[S], labels: &[usize]) -> Result<Silhouette> {
    let k = cluster_count(signals, labels)?;
    if k < 2 {
        return Err(Error::InvalidParameter("silhouette needs at least 2 clusters".into()));
    }
    let n = signals.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(empty));
    }

    let mut per_point = vec![0.0; n];
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(signals[i].as_ref(), signals[j].as_ref());
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        per_point[i] = if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }

    let mut cluster_sums = vec![0.0; k];
    for (s, &l) in per_point.iter().zip(labels) {
        cluster_sums[l] += s;
    }
    let asw = cluster_sums
        .iter()
        .zip(&sizes)
        .map(|(s, &size)| s / size as f64)
        .sum::<f64>()
        / k as f64;
    Ok(Silhouette { asw, per_point })
}

/// All four indices for one clustering. Accuracy needs true labels; DB and
/// ASW need at least two clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub ball_hall: f64,
    pub davies_bouldin: Option<f64>,
    pub asw: Option<f64>,
}

impl MetricsReport {
    pub fn compute<S: AsRef<[f64]>>(signals: &[S], labels: &[usize], truth: Option<&[usize]>) -> Result<Self> {
        let multi = labels.iter().max().is_some_and(|&m| m >= 1);
        Ok(Self {
            accuracy: truth.map(|t| accuracy(labels, t)).transpose()?,
            ball_hall: ball_hall(signals, labels)?,
            davies_bouldin: if multi { Some(davies_bouldin(signals, labels)?) } else { None },
            asw: if multi { Some(silhouette(signals, labels)?.asw) } else { None },
        })
    }

    /// Tab-separated `index\tvalue` table; unavailable indices print `NA`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("index\tvalue\n");
        let rows = [
            ("accuracy", self.accuracy),
            ("ball_hall", Some(self.ball_hall)),
            ("davies_bouldin", self.davies_bouldin),
            ("asw", self.asw),
        ];
        for (name, value) in rows {
            match value {
                Some(v) => writeln!(out, "{name}\t{v}").unwrap(),
                None => writeln!(out, "{name}\tNA").unwrap(),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn accuracy_examples() {
        let truth = [0, 0, 1, 1, 2, 2];
        assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        assert_eq!(accuracy(&[2, 2, 0, 0, 1, 1], &truth).unwrap(), 1.0);

        // rows true, columns predicted: [[5, 1], [2, 4]]
        let mut t = vec![0; 6];
        t.extend([1; 6]);
        let p = [0, 0, 0, 0, 0, 1, 0, 0, 1, 1, 1, 1];
        assert_eq!(accuracy(&p, &t).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn confusion_matrix_pads_to_square() {
        let cm = ConfusionMatrix::new(&[0, 1, 2, 2], &[5, 5, 7, 7]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1, 0], vec![0, 0, 2], vec![0, 0, 0]]);
        assert_eq!(cm.true_labels, vec![5, 7]);
        assert_eq!(cm.best_diagonal(), 3);
    }

    #[test]
    fn ball_hall_examples() {
        assert_eq!(ball_hall(&pts(&[1.0, 4.0]), &[0, 1]).unwrap(), 0.0);
        assert_eq!(ball_hall(&pts(&[0.0, 2.0]), &[0, 0]).unwrap(), 1.0);
        assert!(matches!(ball_hall(&pts(&[0.0, 2.0]), &[0, 2]), Err(Error::EmptyCluster(1))));
    }

    #[test]
    fn davies_bouldin_examples() {
        assert_eq!(davies_bouldin(&pts(&[0.0, 3.0]), &[0, 1]).unwrap(), 0.0);
        let x = pts(&[-1.0, 1.0, 9.0, 11.0]);
        assert!((davies_bouldin(&x, &[0, 0, 1, 1]).unwrap() - 0.2).abs() < 1e-15);
        let same = pts(&[-1.0, 1.0, -2.0, 2.0]);
        assert!(matches!(davies_bouldin(&same, &[0, 0, 1, 1]), Err(Error::CoincidentBarycenters(0, 1))));
    }

    #[test]
    fn silhouette_examples() {
        let s = silhouette(&pts(&[0.0, 1.0, 10.0]), &[0, 0, 1]).unwrap();
        assert!((s.per_point[0] - 0.9).abs() < 1e-15);
        assert!((s.per_point[1] - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(s.per_point[2], 0.0);
        assert!((s.asw - 0.5 * (0.9 + 8.0 / 9.0) / 2.0).abs() < 1e-15);

        let flat = silhouette(&pts(&[3.0; 4]), &[0, 1, 0, 1]).unwrap();
        assert_eq!(flat.asw, 0.0);

        let far = silhouette(&pts(&[0.0, 0.1, 100.0, 100.1]), &[0, 0, 1, 1]).unwrap();
        assert!(far.asw > 0.9);
        assert!(silhouette(&pts(&[0.0, 1.0]), &[0, 0]).is_err());
    }

    #[test]
    fn report_table() {
        let x = pts(&[-1.0, 1.0, 9.0, 11.0]);
        let r = MetricsReport::compute(&x, &[0, 0, 1, 1], Some(&[1, 1, 0, 0])).unwrap();
        assert_eq!(r.accuracy, Some(1.0));
        let table = r.to_table();
        assert!(table.starts_with("index\tvalue\naccuracy\t1\n"));
        let single = MetricsReport::compute(&x, &[0; 4], None).unwrap();
        assert!(single.to_table().contains("asw\tNA"));
    }
}
