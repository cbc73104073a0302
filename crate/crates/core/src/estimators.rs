//! Likelihood statistics and community estimators.
//!
//! The maximum likelihood estimate of the community is
//!
//! ```text
//! C_ML = argmax_{|C| = K} e(C, C),   e(S, T) = sum_{i<j, (i,j) in S x T or T x S} L_ij
//! ```
//!
//! Computing it is NP hard in general; [`mle_exhaustive`] enumerates all
//! size-K subsets for desk-scale `n`, [`mle_local_search`] is a swap-based
//! surrogate and [`degree_threshold`] is the linear-time baseline.
//!
//! Ties are always broken toward the lexicographically smallest index set.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{random_subset, LlrMatrix};

/// Default cap on the number of subsets visited by [`mle_exhaustive`].
pub const DEFAULT_BUDGET: u64 = 10_000_000;
const RESYNC_EVERY: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exhaustive,
    Local,
    Degree,
    Cleanup,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Exhaustive => "exhaustive",
            Method::Local => "local",
            Method::Degree => "degree",
            Method::Cleanup => "cleanup",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Sorted, 0-based.
    pub community: Vec<usize>,
    /// `e(C, C)` recomputed from scratch.
    pub score: f64,
    pub method: Method,
    /// Swaps applied (local search) or subsets visited (exhaustive).
    pub iterations: u64,
}

impl Estimate {
    pub(crate) fn new(lmat: &LlrMatrix, mut community: Vec<usize>, method: Method, iterations: u64) -> Self {
        community.sort_unstable();
        let score = e_stat(lmat, &community, &community);
        Self {
            community,
            score,
            method,
            iterations,
        }
    }
}

/// `e(S, T)`: sum of `L_ij` over unordered pairs `i != j` with one endpoint in
/// `S` and the other in `T`, plus `L_ii` for `i` in `S ∩ T` when the diagonal
/// is informative. Duplicate indices are ignored.
pub fn e_stat(lmat: &LlrMatrix, s: &[usize], t: &[usize]) -> f64 {
    let n = lmat.n();
    let mut in_s = vec![false; n];
    let mut in_t = vec![false; n];
    for &i in s {
        in_s[i] = true;
    }
    for &i in t {
        in_t[i] = true;
    }
    let union: Vec<usize> = (0..n).filter(|&i| in_s[i] || in_t[i]).collect();
    let mut total = 0.0;
    for (pos, &a) in union.iter().enumerate() {
        let row = lmat.l.row(a);
        for &b in &union[pos + 1..] {
            if (in_s[a] && in_t[b]) || (in_t[a] && in_s[b]) {
                total += row[b];
            }
        }
    }
    for &i in &union {
        if in_s[i] && in_t[i] {
            total += lmat.diag(i);
        }
    }
    total
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Revolving-door enumeration of the `k`-subsets of `0..n`: consecutive
/// subsets differ by exchanging one element.
#[derive(Debug, Clone)]
pub struct RevolvingDoor {
    // c[1..=t] ascending, c[t+1] = n sentinel
    c: Vec<usize>,
    t: usize,
    done: bool,
}

impl RevolvingDoor {
    pub fn new(n: usize, t: usize) -> Self {
        assert!(t <= n, "subset size exceeds ground set");
        let mut c = vec![0; t + 2];
        for j in 1..=t {
            c[j] = j - 1;
        }
        c[t + 1] = n;
        Self { c, t, done: false }
    }

    pub fn current(&self) -> &[usize] {
        &self.c[1..=self.t]
    }

    /// Step to the next subset; `false` once the enumeration is exhausted.
    pub fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        let t = self.t;
        let c = &mut self.c;
        if t == 0 || t == c[t + 1] {
            self.done = true;
            return false;
        }
        let mut j;
        let mut try_decrease;
        if t % 2 == 1 {
            if c[1] + 1 < c[2] {
                c[1] += 1;
                return true;
            }
            j = 2;
            try_decrease = true;
        } else {
            if c[1] > 0 {
                c[1] -= 1;
                return true;
            }
            j = 2;
            try_decrease = false;
        }
        loop {
            if j > t {
                self.done = true;
                return false;
            }
            if try_decrease {
                if c[j] >= j {
                    c[j] = c[j - 1];
                    c[j - 1] = j - 2;
                    return true;
                }
                j += 1;
                try_decrease = false;
            } else {
                if c[j] + 1 < c[j + 1] {
                    c[j - 1] = c[j];
                    c[j] += 1;
                    return true;
                }
                j += 1;
                try_decrease = true;
            }
        }
    }
}

/// The single exchange between two sorted sets of equal size: `(left, entered)`.
fn exchange(old: &[usize], new: &[usize]) -> Option<(usize, usize)> {
    let (mut i, mut j) = (0, 0);
    let (mut out, mut inn) = (None, None);
    while i < old.len() || j < new.len() {
        match (old.get(i), new.get(j)) {
            (Some(a), Some(b)) if a == b => {
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => {
                out = Some(*a);
                i += 1;
            }
            (Some(_), Some(b)) => {
                inn = Some(*b);
                j += 1;
            }
            (Some(a), None) => {
                out = Some(*a);
                i += 1;
            }
            (None, Some(b)) => {
                inn = Some(*b);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out.zip(inn)
}

/// Better under (score desc, lexicographic asc).
fn better(score: f64, set: &[usize], best_score: f64, best: &[usize]) -> bool {
    match score.partial_cmp(&best_score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => set < best,
        _ => false,
    }
}

/// Exact MLE by enumerating every size-`k` subset.
///
/// Scores are updated in `O(k)` per step along the revolving-door order and
/// periodically recomputed to bound rounding drift; candidates within a
/// small tolerance of the incumbent are re-scored exactly before comparison.
pub fn mle_exhaustive(lmat: &LlrMatrix, k: usize, budget: u64) -> Result<Estimate> {
    let n = lmat.n();
    if k > n {
        return Err(Error::Domain(format!("K={k} exceeds n={n}")));
    }
    let needed = binomial(n, k);
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let mut door = RevolvingDoor::new(n, k);
    let mut member = vec![false; n];
    for &i in door.current() {
        member[i] = true;
    }
    let mut prev: Vec<usize> = door.current().to_vec();
    let mut running = e_stat(lmat, &prev, &prev);
    let mut best_set = prev.clone();
    let mut best_score = running;
    let mut visited: u64 = 1;

    while door.advance() {
        visited += 1;
        let cur = door.current();
        let (out, inn) = exchange(&prev, cur).expect("revolving door exchanges one element");
        member[out] = false;
        let row_out = lmat.l.row(out);
        let row_in = lmat.l.row(inn);
        let mut delta = lmat.diag(inn) - lmat.diag(out);
        for &j in cur {
            if j != inn {
                delta += row_in[j] - row_out[j];
            }
        }
        member[inn] = true;
        running += delta;
        if visited % RESYNC_EVERY == 0 {
            running = e_stat(lmat, cur, cur);
        }

        let tol = 1e-9 * (1.0 + best_score.abs());
        if running > best_score + tol {
            best_score = e_stat(lmat, cur, cur);
            best_set.clear();
            best_set.extend_from_slice(cur);
        } else if running >= best_score - tol {
            let exact = e_stat(lmat, cur, cur);
            if better(exact, cur, best_score, &best_set) {
                best_score = exact;
                best_set.clear();
                best_set.extend_from_slice(cur);
            }
        }
        prev.clear();
        prev.extend_from_slice(cur);
    }
    Ok(Estimate::new(lmat, best_set, Method::Exhaustive, visited))
}

/// Linear-time baseline: the `k` indices with the largest row sums `sum_j L_ij`.
pub fn degree_threshold(lmat: &LlrMatrix, k: usize) -> Result<Estimate> {
    let n = lmat.n();
    if k > n {
        return Err(Error::Domain(format!("K={k} exceeds n={n}")));
    }
    let sums: Vec<f64> = (0..n)
        .map(|i| {
            let row = lmat.l.row(i);
            row.iter().sum::<f64>() - row[i] + lmat.diag(i)
        })
        .collect();
    let chosen = top_k(&sums, k);
    Ok(Estimate::new(lmat, chosen, Method::Degree, 0))
}

/// Indices of the `k` largest scores, ties toward the smaller index.
pub(crate) fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

#[derive(Debug, Clone)]
pub struct LocalSearchRun {
    pub estimate: Estimate,
    /// Score after each applied swap, starting with the initial score.
    pub trajectory: Vec<f64>,
}

/// Best-improvement swap search started from `init`.
///
/// Each round scans every `(i in C, j not in C)` exchange and applies the one
/// with the largest strictly positive gain (ties toward the smallest
/// `(i, j)`), until no exchange improves or `max_iters` swaps were applied.
pub fn mle_local_search(lmat: &LlrMatrix, k: usize, init: &[usize], max_iters: u64) -> Result<LocalSearchRun> {
    let n = lmat.n();
    let mut set: Vec<usize> = init.to_vec();
    set.sort_unstable();
    set.dedup();
    if set.len() != k || set.iter().any(|&i| i >= n) {
        return Err(Error::Contract(format!(
            "initial set must hold {k} distinct indices below {n}"
        )));
    }
    let mut member = vec![false; n];
    for &i in &set {
        member[i] = true;
    }
    // support[x] = sum over c in C, c != x, of L_xc
    let mut support: Vec<f64> = (0..n)
        .map(|x| {
            let row = lmat.l.row(x);
            set.iter().filter(|&&c| c != x).map(|&c| row[c]).sum()
        })
        .collect();
    let mut score = e_stat(lmat, &set, &set);
    let mut trajectory = vec![score];
    let mut swaps = 0;

    while swaps < max_iters {
        let tol = 1e-12 * (1.0 + score.abs());
        let mut best: Option<(f64, usize, usize)> = None;
        for &i in &set {
            let row_i = lmat.l.row(i);
            let base = support[i] + lmat.diag(i);
            for j in (0..n).filter(|&j| !member[j]) {
                let gain = support[j] - row_i[j] + lmat.diag(j) - base;
                if gain > tol && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((gain, out, inn)) = best else { break };
        member[out] = false;
        member[inn] = true;
        let (row_out, row_in) = (lmat.l.row(out), lmat.l.row(inn));
        for (x, s) in support.iter_mut().enumerate() {
            if x != out {
                *s -= row_out[x];
            }
            if x != inn {
                *s += row_in[x];
            }
        }
        let pos = set.iter().position(|&c| c == out).expect("member");
        set[pos] = inn;
        set.sort_unstable();
        score += gain;
        trajectory.push(score);
        swaps += 1;
    }
    Ok(LocalSearchRun {
        estimate: Estimate::new(lmat, set, Method::Local, swaps),
        trajectory,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub restarts: usize,
    pub max_iters: u64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 10_000,
        }
    }
}

/// Local search with restarts: the first from [`degree_threshold`], the rest
/// from uniformly random size-`k` sets. Returns the best run.
pub fn mle_local_restarts<R: Rng + ?Sized>(
    lmat: &LlrMatrix,
    k: usize,
    opts: LocalOptions,
    rng: &mut R,
) -> Result<Estimate> {
    let start = degree_threshold(lmat, k)?;
    let mut best = mle_local_search(lmat, k, &start.community, opts.max_iters)?.estimate;
    let mut total_iters = best.iterations;
    for _ in 1..opts.restarts.max(1) {
        let init = random_subset(lmat.n(), k, rng);
        let run = mle_local_search(lmat, k, &init, opts.max_iters)?.estimate;
        total_iters += run.iterations;
        if better(run.score, &run.community, best.score, &best.community) {
            best = run;
        }
    }
    best.iterations = total_iters;
    Ok(best)
}
