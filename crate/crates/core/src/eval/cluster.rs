use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

const MAX_ITERS: usize = 300;

fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<u64>>, Vec<u64>, Vec<u64>) {
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    (table, rows, cols)
}

fn entropy_of_counts(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn check_lengths(a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "clusterings must be nonempty and equal length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Normalized mutual information with arithmetic-mean normalization. Two
/// single-cluster partitions count as identical (1.0).
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let n = a.len() as f64;
    let (table, rows, cols) = contingency(a, b);
    let (ha, hb) = (entropy_of_counts(&rows, n), entropy_of_counts(&cols, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

fn comb2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index. When the expected and maximum index coincide
/// (both partitions trivial in the same way) the partitions agree fully
/// and the index is 1.0.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    check_lengths(a, b)?;
    let (table, rows, cols) = contingency(a, b);
    let index: f64 = table.iter().flatten().map(|&x| comb2(x)).sum();
    let sum_a: f64 = rows.iter().map(|&x| comb2(x)).sum();
    let sum_b: f64 = cols.iter().map(|&x| comb2(x)).sum();
    let total = comb2(a.len() as u64);
    let expected = if total > 0.0 {
        sum_a * sum_b / total
    } else {
        0.0
    };
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centers: &Tensor) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(x, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp<R: Rng>(data: &Tensor, k: usize, rng: &mut R) -> Tensor {
    let n = data.rows();
    let mut centers = Tensor::zeros(k, data.cols());
    centers
        .row_mut(0)
        .copy_from_slice(data.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), centers.row(c)));
        }
    }
    centers
}

/// Lloyd's algorithm from k-means++ seeding. Returns one cluster id per row.
/// Distance ties go to the lowest cluster id; an emptied cluster keeps its
/// previous center.
pub fn kmeans<R: Rng>(data: &Tensor, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} for {n} points")));
    }
    let mut centers = kmeans_pp(data, k, rng);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let (c, _) = nearest(data.row(i), &centers);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Tensor::zeros(k, data.cols());
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums.row_mut(c).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    Ok(assign)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub nmi: f64,
    pub ari: f64,
    pub nmi_runs: Vec<f64>,
    pub ari_runs: Vec<f64>,
}

/// K-means on `reps` repeated `repeats` times (seeds `seed..seed+repeats`),
/// scored against `labels` and averaged.
pub fn kmeans_cluster_eval(
    reps: &Tensor,
    labels: &[usize],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<ClusterReport> {
    if reps.rows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} representations for {} labels",
            reps.rows(),
            labels.len()
        )));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be positive".into()));
    }
    let mut nmi_runs = Vec::with_capacity(repeats);
    let mut ari_runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let assign = kmeans(reps, k, &mut rng)?;
        nmi_runs.push(nmi(&assign, labels)?);
        ari_runs.push(ari(&assign, labels)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(ClusterReport {
        k,
        repeats,
        seed,
        nmi: mean(&nmi_runs),
        ari: mean(&ari_runs),
        nmi_runs,
        ari_runs,
    })
}
