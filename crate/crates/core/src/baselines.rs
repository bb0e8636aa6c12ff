//! PCA feature extraction followed by k-means, the comparator method.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `q` orthonormal rows of length `p`.
    pub components: Vec<Vec<f64>>,
    /// `n` rows of length `q`.
    pub scores: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    /// Projects a new observation onto the components.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    /// Maps scores back to the observation space.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(scores) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += s * v;
            }
        }
        out
    }

    /// Fraction of total variance carried by each retained component.
    pub fn explained_ratio(&self, total_variance: f64) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / total_variance).collect()
    }
}

/// Top-`q` principal components of the rows of `data`.
///
/// Each component is signed so that its largest-magnitude entry is positive.
pub fn pca<S: AsRef<[f64]>>(data: &[S], q: usize) -> Result<PcaProjection> {
    decompose(data, q, false)
}

/// As [`pca`], keeping only as many components as the data rank allows.
pub fn pca_at_most<S: AsRef<[f64]>>(data: &[S], q: usize) -> Result<PcaProjection> {
    decompose(data, q, true)
}

fn decompose<S: AsRef<[f64]>>(data: &[S], q: usize, clamp: bool) -> Result<PcaProjection> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData("PCA needs at least 2 observations".into()));
    }
    let p = data[0].as_ref().len();
    if let Some(x) = data.iter().find(|x| x.as_ref().len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x.as_ref().len(),
        });
    }
    if q == 0 || q > n.min(p) {
        return Err(Error::InvalidParameter(format!("q = {q} must lie in 1..={}", n.min(p))));
    }

    let mut mean = vec![0.0; p];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, p, |i, j| data[i].as_ref()[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let rank = eig.eigenvalues.iter().filter(|&&v| v > 1e-12 * scale).count();
    if rank == 0 {
        return Err(Error::DegenerateTarget("all observations are identical".into()));
    }
    let q = if clamp { q.min(rank) } else { q };
    if q > rank {
        return Err(Error::InvalidParameter(format!("q = {q} exceeds the data rank {rank}")));
    }

    let mut components = Vec::with_capacity(q);
    let mut explained_variance = Vec::with_capacity(q);
    for &idx in &order[..q] {
        let mut c: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = c.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if lead < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(c);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }

    let scores = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().zip(centered.row(i).iter()).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();

    Ok(PcaProjection {
        mean,
        components,
        scores,
        explained_variance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub within_ss: f64,
    /// Within-cluster sum of squares after each Lloyd iteration of the
    /// winning start.
    pub history: Vec<f64>,
}

const MAX_LLOYD_ITER: usize = 300;

/// Lloyd's algorithm with k-means++ seeding, keeping the best of `n_starts`.
pub fn kmeans<S: AsRef<[f64]>>(data: &[S], k: usize, n_starts: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.len();
    if k == 0 || n_starts == 0 {
        return Err(Error::InvalidParameter("K and n_starts must be positive".into()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} points cannot support {k} clusters")));
    }
    let q = data[0].as_ref().len();
    if let Some(x) = data.iter().find(|x| x.as_ref().len() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: x.as_ref().len(),
        });
    }

    let mut best: Option<KMeansResult> = None;
    for start in 0..n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(start as u64);
        let result = lloyd(data, plus_plus(data, k, &mut rng), k);
        if best.as_ref().is_none_or(|b| result.within_ss < b.within_ss) {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one start"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus<S: AsRef<[f64]>>(data: &[S], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut centroids = vec![data[rng.random_range(0..n)].as_ref().to_vec()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = data[next].as_ref().to_vec();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd<S: AsRef<[f64]>>(data: &[S], mut centroids: Vec<Vec<f64>>, k: usize) -> KMeansResult {
    let n = data.len();
    let q = centroids[0].len();
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITER {
        let mut changed = false;
        for (i, x) in data.iter().enumerate() {
            let (c, _) = nearest(x.as_ref(), &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }

        // an empty cluster takes over the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let far = (0..n)
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| {
                    let da = sq_dist(data[a].as_ref(), &centroids[labels[a]]);
                    let db = sq_dist(data[b].as_ref(), &centroids[labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .expect("n > K leaves a cluster with two points");
            sizes[labels[far]] -= 1;
            labels[far] = empty;
            sizes[empty] = 1;
            changed = true;
        }

        centroids = vec![vec![0.0; q]; k];
        for (x, &l) in data.iter().zip(&labels) {
            for (c, v) in centroids[l].iter_mut().zip(x.as_ref()) {
                *c += v;
            }
        }
        for (c, &s) in centroids.iter_mut().zip(&sizes) {
            c.iter_mut().for_each(|v| *v /= s as f64);
        }
        history.push(within(data, &labels, &centroids));
        if !changed {
            break;
        }
    }
    KMeansResult {
        within_ss: *history.last().expect("at least one iteration"),
        labels,
        centroids,
        history,
    }
}

fn within<S: AsRef<[f64]>>(data: &[S], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    data.iter().zip(labels).map(|(x, &l)| sq_dist(x.as_ref(), &centroids[l])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn rank_one_data() {
        let dir = [0.6, -0.8, 0.0];
        let data: Vec<Vec<f64>> = (0..10).map(|i| dir.iter().map(|d| d * i as f64 + 1.0).collect()).collect();
        let proj = pca(&data, 1).unwrap();
        let total: f64 = {
            let full = DMatrix::from_fn(10, 3, |i, j| data[i][j] - proj.mean[j]);
            (full.transpose() * full).trace() / 9.0
        };
        assert!((proj.explained_ratio(total)[0] - 1.0).abs() < 1e-10);
        assert!(pca(&data, 2).is_err());
        for (x, s) in data.iter().zip(&proj.scores) {
            let back = proj.reconstruct(s);
            assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-8));
        }
        // largest entry of the component is positive
        assert!(proj.components[0][1] > 0.0);
    }

    #[test]
    fn isotropic_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<Vec<f64>> = (0..4000).map(|_| vec![normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
        let proj = pca(&data, 2).unwrap();
        let ratio = proj.explained_variance[0] / proj.explained_variance[1];
        assert!(ratio > 0.8 && ratio < 1.25, "{ratio}");
    }

    #[test]
    fn kmeans_examples() {
        let data: Vec<Vec<f64>> = [0.0, 1.0, 5.0, 7.0].iter().map(|&v| vec![v]).collect();
        assert_eq!(kmeans(&data, 4, 3, 1).unwrap().within_ss, 0.0);
        assert!(kmeans(&data, 5, 3, 1).is_err());

        let blobs: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { i as f64 * 0.01 } else { 50.0 + i as f64 * 0.01 }]).collect();
        let r = kmeans(&blobs, 2, 5, 7).unwrap();
        assert!(r.labels[..10].iter().all(|&l| l == r.labels[0]));
        assert!(r.labels[10..].iter().all(|&l| l == r.labels[10]));
        assert_ne!(r.labels[0], r.labels[10]);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
