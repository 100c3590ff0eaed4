//! External clustering metrics: Hungarian accuracy, NMI, ARI and macro-F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Co-occurrence counts with rows indexed by true class and columns by
/// predicted cluster, both relabeled to `0..k` in ascending label order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Validation(format!(
                "label length mismatch: {} true vs {} predicted",
                y_true.len(),
                y_pred.len()
            )));
        }
        let t = compress(y_true);
        let p = compress(y_pred);
        let kt = t.iter().max().map_or(0, |m| m + 1);
        let kp = p.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; kp]; kt];
        for (&a, &b) in t.iter().zip(&p) {
            counts[a][b] += 1;
        }
        Ok(Self { counts, n: y_true.len() as u64 })
    }

    pub fn true_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn pred_clusters(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        let mut s = vec![0; self.pred_clusters()];
        for r in &self.counts {
            for (a, b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        s
    }

    /// Mapping from predicted cluster to true class maximizing the matched
    /// count, padded to a square table. Among count-optimal mappings the one
    /// with the largest macro-F1 is taken, so both the accuracy and the F1
    /// read from it are invariant under relabeling. Entries
    /// `>= true_classes()` map to padding.
    pub fn best_mapping(&self) -> Vec<usize> {
        let (kt, kp) = (self.true_classes(), self.pred_clusters());
        let m = kt.max(kp);
        let rows = self.row_sums();
        let cols = self.col_sums();
        // Per-pair F1 terms sum to at most m < m + 1, so they only break
        // ties between mappings with equal matched counts.
        let scale = (m + 1) as f64;
        let cost: Vec<Vec<f64>> = (0..m)
            .map(|p| {
                (0..m)
                    .map(|t| {
                        if t < kt && p < kp {
                            let c = self.counts[t][p];
                            let f1 = 2.0 * c as f64 / (rows[t] + cols[p]) as f64;
                            -(c as f64 * scale + f1)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        min_cost_assignment(&cost)
    }
}

/// Per-class F1 of true class `t` matched with cluster `p`.
fn pair_f1(ct: &ContingencyTable, rows: &[u64], cols: &[u64], t: usize, p: usize) -> f64 {
    2.0 * ct.counts[t][p] as f64 / (rows[t] + cols[p]) as f64
}

fn compress(labels: &[usize]) -> Vec<usize> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect()
}

/// Minimum-cost assignment on a square matrix (shortest augmenting paths).
/// Returns the column assigned to each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row matched to column j (1-based, 0 = none)
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Fraction of nodes matched under the best cluster-to-class mapping.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let ct = ContingencyTable::new(y_true, y_pred)?;
    if ct.n == 0 {
        return Ok(1.0);
    }
    let map = ct.best_mapping();
    let hits: u64 = (0..ct.pred_clusters())
        .filter(|&p| map[p] < ct.true_classes())
        .map(|p| ct.counts[map[p]][p])
        .sum();
    Ok(hits as f64 / ct.n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies.
pub fn nmi(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let ct = ContingencyTable::new(y_true, y_pred)?;
    let n = ct.n as f64;
    let rows = ct.row_sums();
    let cols = ct.col_sums();
    let (hu, hv) = (entropy(&rows, n), entropy(&cols, n));
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (t, row) in ct.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[t] as f64 * cols[p] as f64)).ln();
            }
        }
    }
    Ok((mi / (hu * hv).sqrt()).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index; 1 when the chance-corrected denominator vanishes.
pub fn ari(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let ct = ContingencyTable::new(y_true, y_pred)?;
    let index: f64 = ct.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = ct.row_sums().into_iter().map(pairs).sum();
    let b: f64 = ct.col_sums().into_iter().map(pairs).sum();
    let total = pairs(ct.n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = (a + b) / 2.0;
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Mean per-class F1 over true classes, with clusters aligned by the same
/// mapping as [`accuracy`]. Classes left unmatched score 0.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let ct = ContingencyTable::new(y_true, y_pred)?;
    let kt = ct.true_classes();
    if kt == 0 {
        return Ok(1.0);
    }
    let map = ct.best_mapping();
    let rows = ct.row_sums();
    let cols = ct.col_sums();
    let mut total = 0.0;
    for p in 0..ct.pred_clusters() {
        if map[p] < kt {
            total += pair_f1(&ct, &rows, &cols, map[p], p);
        }
    }
    Ok(total / kt as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

pub fn evaluate(y_true: &[usize], y_pred: &[usize]) -> Result<Scores> {
    Ok(Scores {
        acc: accuracy(y_true, y_pred)?,
        nmi: nmi(y_true, y_pred)?,
        ari: ari(y_true, y_pred)?,
        f1: macro_f1(y_true, y_pred)?,
    })
}
