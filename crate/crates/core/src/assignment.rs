//! Rectangular maximum-score bipartite assignment.
//!
//! The solver returns a matching of size `min(rows, cols)` with maximal total
//! score. Among optimal matchings it returns the one whose pair list, sorted
//! by row, is lexicographically smallest. Optimality is decided with a
//! relative tolerance of `1e-9` so that equal totals reached through
//! different summation orders still count as ties.
//!
//! Tie resolution fixes pairs one at a time, re-solving the residual problem
//! with the shortest-augmenting-path Hungarian method each time. That costs
//! `O(rows · cols · n³)` in the worst case, which is fine for the track and
//! object counts this crate deals with.

use crate::error::{Error, Result};

const TIE_RTOL: f64 = 1e-9;

/// Dense row-major matrix of finite match scores; higher is better.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} scores for a {rows}x{cols} matrix",
                scores.len()
            )));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(Self { rows, cols, scores })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let scores = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, scores)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged score matrix".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.scores[r * self.cols + c]
    }

    fn scale(&self) -> f64 {
        let max = self.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        max * self.rows.min(self.cols) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Matched `(row, col)` pairs in ascending row order.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Assignment {
    fn from_pairs(s: &ScoreMatrix, pairs: Vec<(usize, usize)>) -> Self {
        let total = pairs.iter().map(|&(r, c)| s.get(r, c)).sum();
        Self { pairs, total }
    }
}

struct Solution {
    /// Column of each row.
    assign: Vec<usize>,
    total: f64,
    /// Dual potentials with `cost[i][j] - u[i] - v[j] >= 0`, zero on `assign`.
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Minimum-cost assignment of every row of an `n×m` cost matrix (`n ≤ m`).
fn hungarian_min(cost: &[f64], n: usize, m: usize) -> Solution {
    debug_assert!(n <= m);
    if n == 0 {
        return Solution {
            assign: Vec::new(),
            total: 0.0,
            u: Vec::new(),
            v: vec![0.0; m],
        };
    }
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut owner = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i * m + j]).sum();
    Solution {
        assign,
        total,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
    }
}

/// Best achievable total over the given row/column subsets.
fn best_total(s: &ScoreMatrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let (n, m, cost): (usize, usize, Vec<f64>) = if rows.len() <= cols.len() {
        let cost = rows
            .iter()
            .flat_map(|&r| cols.iter().map(move |&c| -s.get(r, c)))
            .collect();
        (rows.len(), cols.len(), cost)
    } else {
        let cost = cols
            .iter()
            .flat_map(|&c| rows.iter().map(move |&r| -s.get(r, c)))
            .collect();
        (cols.len(), rows.len(), cost)
    };
    -hungarian_min(&cost, n, m).total
}

/// Maximum-score matching of size `min(rows, cols)` with deterministic tie-breaking.
pub fn max_assignment(s: &ScoreMatrix) -> Assignment {
    let target = s.rows.min(s.cols);
    if target == 0 {
        return Assignment {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    // Square padding: a row on a padding column is unmatched and scores 0.
    let n = s.rows.max(s.cols);
    let cost: Vec<f64> = (0..n)
        .flat_map(|r| (0..n).map(move |c| if r < s.rows && c < s.cols { -s.get(r, c) } else { 0.0 }))
        .collect();
    let primal = hungarian_min(&cost, n, n);
    let optimum = -primal.total;
    let tol = TIE_RTOL * s.scale().max(1.0);
    // Reduced costs are nonnegative and sum to the gap from the optimum over any
    // padded matching, so a pair with reduced cost above `tol` never appears in
    // an accepted completion. The margin absorbs rounding in the potentials.
    let slack = |r: usize, c: usize| cost[r * n + c] - primal.u[r] - primal.v[c];
    let prune = 2.0 * tol + 1e-12 * s.scale().max(1.0);

    let mut pairs = Vec::with_capacity(target);
    let mut free_cols: Vec<usize> = (0..s.cols).collect();
    let mut fixed = 0.0f64;
    let mut next_row = 0usize;
    // Whether every decision so far agrees with the primal solution.
    let mut follows_primal = true;
    while pairs.len() < target {
        let need_after = target - pairs.len() - 1;
        let mut chosen = None;
        'rows: for r in next_row..s.rows {
            let rest_rows: Vec<usize> = (r + 1..s.rows).collect();
            if rest_rows.len() < need_after {
                break;
            }
            let skipped_like_primal = follows_primal && (next_row..r).all(|rr| primal.assign[rr] >= s.cols);
            for (k, &c) in free_cols.iter().enumerate() {
                if slack(r, c) > prune {
                    continue;
                }
                if skipped_like_primal && primal.assign[r] == c {
                    chosen = Some((r, k, true));
                    break 'rows;
                }
                let rest_cols: Vec<usize> = free_cols
                    .iter()
                    .enumerate()
                    .filter(|&(kk, _)| kk != k)
                    .map(|(_, &cc)| cc)
                    .collect();
                if rest_cols.len() < need_after {
                    continue;
                }
                let total = fixed + s.get(r, c) + best_total(s, &rest_rows, &rest_cols);
                if total >= optimum - tol {
                    chosen = Some((r, k, false));
                    break 'rows;
                }
            }
        }
        let (r, k, primal_pair) = chosen.expect("an optimal completion always exists");
        follows_primal &= primal_pair;
        let c = free_cols.remove(k);
        fixed += s.get(r, c);
        pairs.push((r, c));
        next_row = r + 1;
    }
    Assignment::from_pairs(s, pairs)
}

/// [`max_assignment`], keeping only pairs whose score is at least `floor`.
pub fn threshold_match(s: &ScoreMatrix, floor: f64) -> Result<Assignment> {
    if floor.is_nan() || floor == f64::INFINITY {
        return Err(Error::InvalidInput(format!("invalid score floor {floor}")));
    }
    let full = max_assignment(s);
    let pairs = full.pairs.into_iter().filter(|&(r, c)| s.get(r, c) >= floor).collect();
    Ok(Assignment::from_pairs(s, pairs))
}
