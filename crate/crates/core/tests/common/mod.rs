//! Straightforward reference implementations used as test oracles.

#![allow(dead_code)]

use std::f64::consts::TAU;

/// Best diagonal sum over every column permutation.
pub fn brute_force_best_diagonal(counts: &[Vec<usize>]) -> usize {
    let r = counts.len();
    let mut perm: Vec<usize> = (0..r).collect();
    let mut best = 0;
    permute(&mut perm, 0, &mut |p| {
        best = best.max((0..r).map(|i| counts[i][p[i]]).sum());
    });
    best
}

/// Calls `f` on every permutation of `items[start..]` (Heap-free recursion).
pub fn permute(items: &mut Vec<usize>, start: usize, f: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        f(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, f);
        items.swap(start, i);
    }
}

fn members(labels: &[usize], k: usize) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] == k).collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn centroid(points: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let p = points[0].len();
    (0..p).map(|j| idx.iter().map(|&i| points[i][j]).sum::<f64>() / idx.len() as f64).collect()
}

fn dispersion(points: &[Vec<f64>], idx: &[usize]) -> f64 {
    let c = centroid(points, idx);
    idx.iter().map(|&i| euclid(&points[i], &c).powi(2)).sum::<f64>() / idx.len() as f64
}

pub fn naive_ball_hall(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    (0..k).map(|c| dispersion(points, &members(labels, c))).sum::<f64>() / k as f64
}

pub fn naive_davies_bouldin(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let groups: Vec<Vec<usize>> = (0..k).map(|c| members(labels, c)).collect();
    let cents: Vec<Vec<f64>> = groups.iter().map(|g| centroid(points, g)).collect();
    let disp: Vec<f64> = groups.iter().map(|g| dispersion(points, g)).collect();
    let mut total = 0.0;
    for a in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for b in 0..k {
            if a != b {
                worst = worst.max((disp[a] + disp[b]) / euclid(&cents[a], &cents[b]));
            }
        }
        total += worst;
    }
    total / k as f64
}

/// Per-point silhouettes and their cluster-averaged mean, by direct O(n²)
/// evaluation of the definition.
pub fn naive_silhouette(points: &[Vec<f64>], labels: &[usize], k: usize) -> (f64, Vec<f64>) {
    let n = points.len();
    let mut s = vec![0.0; n];
    for i in 0..n {
        let own = members(labels, labels[i]);
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| euclid(&points[i], &points[j])).sum::<f64>()
            / (own.len() - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(|c| {
                let other = members(labels, c);
                other.iter().map(|&j| euclid(&points[i], &points[j])).sum::<f64>() / other.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        s[i] = if denom == 0.0 { 0.0 } else { (b - a) / denom };
    }
    let asw = (0..k)
        .map(|c| {
            let idx = members(labels, c);
            idx.iter().map(|&i| s[i]).sum::<f64>() / idx.len() as f64
        })
        .sum::<f64>()
        / k as f64;
    (asw, s)
}

/// Responsibilities by direct evaluation of the Gaussian densities, without
/// any log-domain arithmetic.
pub fn naive_posterior(data: &[Vec<f64>], means: &[Vec<f64>], sigmas: &[f64], gammas: &[f64]) -> Vec<Vec<f64>> {
    data.iter()
        .map(|x| {
            let weighted: Vec<f64> = means
                .iter()
                .zip(sigmas)
                .zip(gammas)
                .map(|((mu, &s), &g)| {
                    let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b).powi(2)).sum();
                    let norm = (TAU * s * s).powf(x.len() as f64 / 2.0);
                    g * (-sq / (2.0 * s * s)).exp() / norm
                })
                .collect();
            let total: f64 = weighted.iter().sum();
            weighted.iter().map(|w| w / total).collect()
        })
        .collect()
}
