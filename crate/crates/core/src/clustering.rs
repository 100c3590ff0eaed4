//! K-Means initialization and the self-supervised clustering head.

use crate::error::{Error, Result};
use crate::tensor::{ops, Backend, Matrix, Rng};

pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_MAX_ITERS: usize = 300;

/// Centers, soft assignment and target of the clustering head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub centers: Matrix,
    pub q: Matrix,
    pub p: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center (lowest index on ties) and its squared distance.
fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.row_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_seed(x: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = x.row_iter().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.below(n)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    let mut centers = Matrix::zeros(k, x.cols());
    for (j, &i) in chosen.iter().enumerate() {
        centers.row_mut(j).copy_from_slice(x.row(i));
    }
    centers
}

fn lloyd(x: &Matrix, mut centers: Matrix, max_iters: usize) -> KMeansResult {
    let (n, d) = x.shape();
    let k = centers.rows();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (j, dist) = nearest(x.row(i), &centers);
            dists[i] = dist;
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed an empty cluster at the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n > 0");
                let old = labels[far];
                counts[old] -= 1;
                for (s, v) in sums.row_mut(old).iter_mut().zip(x.row(far)) {
                    *s -= v;
                }
                labels[far] = j;
                dists[far] = 0.0;
                counts[j] = 1;
                sums.row_mut(j).copy_from_slice(x.row(far));
                changed = true;
            }
        }
        for j in 0..k {
            let c = counts[j] as f64;
            for (dst, s) in centers.row_mut(j).iter_mut().zip(sums.row(j)) {
                *dst = s / c;
            }
        }
        if !changed {
            break;
        }
    }
    for i in 0..n {
        labels[i] = nearest(x.row(i), &centers).0;
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centers.row(labels[i]))).sum();
    KMeansResult {
        centers,
        labels,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding, [`KMEANS_RESTARTS`] restarts
/// and [`KMEANS_MAX_ITERS`] iterations each; the lowest-inertia restart wins
/// (earliest on ties). Restart `r` seeds from `rng.child("restart-r")`, so
/// the result does not depend on how restarts are scheduled.
pub fn kmeans(x: &Matrix, k: usize, rng: &Rng) -> Result<KMeansResult> {
    kmeans_with(x, k, rng, KMEANS_RESTARTS, KMEANS_MAX_ITERS)
}

pub fn kmeans_with(x: &Matrix, k: usize, rng: &Rng, restarts: usize, max_iters: usize) -> Result<KMeansResult> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("kmeans needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if !x.all_finite() {
        return Err(Error::Validation("kmeans input has non-finite values".into()));
    }
    let run = |r: usize| {
        let mut rr = rng.child(&format!("restart-{r}"));
        lloyd(x, plus_plus_seed(x, k, &mut rr), max_iters)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<KMeansResult> = {
        use rayon::prelude::*;
        (0..restarts.max(1)).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<KMeansResult> = (0..restarts.max(1)).map(run).collect();
    Ok(results
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart"))
}

/// Student-t soft assignment `q_ij ∝ (1 + ‖z_i − μ_j‖²)⁻¹`.
pub fn soft_assign(z: &Matrix, centers: &Matrix) -> Result<Matrix> {
    ops::soft_assign(z, centers)
}

/// Sharpened target `p_ij ∝ q_ij² / Σ_i q_ij`, rows summing to one.
pub fn target_distribution(q: &Matrix) -> Matrix {
    let (n, k) = q.shape();
    let mut freq = vec![0.0; k];
    for i in 0..n {
        for (f, v) in freq.iter_mut().zip(q.row(i)) {
            *f += v;
        }
    }
    let mut p = Matrix::zeros(n, k);
    let mut w = vec![0.0; k];
    for i in 0..n {
        for j in 0..k {
            w[j] = if freq[j] > 0.0 { q.get(i, j) * q.get(i, j) / freq[j] } else { 0.0 };
        }
        // p_ij = 1 / Σ_l (w_l / w_j): equal weights give exactly 1/k.
        let row = p.row_mut(i);
        for j in 0..k {
            if w[j] > 0.0 {
                row[j] = 1.0 / w.iter().map(|&wl| wl / w[j]).sum::<f64>();
            }
        }
    }
    p
}

/// Categorical cross-entropy of `q` against the fixed target `p`.
pub fn clustering_loss<B: Backend>(b: &mut B, q: &B::Value, p: &Matrix) -> Result<B::Value> {
    b.categorical_ce(q, p)
}

/// `(1/N)·‖Â − A_s‖ + β·CE(P, Q)`; `A_s` and `P` enter as constants.
pub fn total_loss<B: Backend>(
    b: &mut B,
    a_hat: &B::Value,
    a_s: &Matrix,
    q: &B::Value,
    p: &Matrix,
    beta: f64,
) -> Result<B::Value> {
    let n = a_s.rows().max(1) as f64;
    let target = b.constant(a_s.clone());
    let diff = b.sub(a_hat, &target)?;
    let rec = b.frobenius(&diff);
    let rec = b.scale(&rec, 1.0 / n);
    if beta == 0.0 {
        return Ok(rec);
    }
    let ce = clustering_loss(b, q, p)?;
    let ce = b.scale(&ce, beta);
    b.add(&rec, &ce)
}

/// Row-wise argmax, lowest index on ties.
pub fn hard_labels(q: &Matrix) -> Vec<usize> {
    q.row_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
