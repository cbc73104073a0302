//! Weak recovery followed by voting cleanup with successive withholding.
//!
//! The index set is split at random into about `1/delta` blocks. For each
//! block `S_k` a weak estimator runs on the reduced matrix indexed by
//! `[n] \ S_k`, producing `C_k` of size `ceil(K (1 - delta))`. Every withheld
//! index then receives the vote
//!
//! ```text
//! r_i = sum_{j in C_k} L_ij,   i in S_k
//! ```
//!
//! which is independent of the entries among the withheld indices. The
//! output is the `K` indices with the largest votes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{degree_threshold, mle_exhaustive, mle_local_restarts, top_k, Estimate, LocalOptions, Method};
use crate::model::{Instance, LlrMatrix};
use crate::seed::rng_from;

pub const DEFAULT_DELTA: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanupConfig {
    pub delta: f64,
    /// One of `exhaustive`, `local`, `degree`.
    pub weak_method: Method,
    pub partition_seed: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub local: LocalOptions,
}

fn default_budget() -> u64 {
    crate::estimators::DEFAULT_BUDGET
}

impl CleanupConfig {
    pub fn new(delta: f64, weak_method: Method, partition_seed: u64) -> Self {
        Self {
            delta,
            weak_method,
            partition_seed,
            budget: default_budget(),
            local: LocalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Disjoint sorted blocks covering `0..n`.
    pub blocks: Vec<Vec<usize>>,
    /// Set when `1/delta` or `n delta` is not an integer.
    pub rounded: bool,
}

fn is_integral(x: f64) -> bool {
    (x - x.round()).abs() <= 1e-9 * x.abs().max(1.0)
}

/// Uniformly random partition of `0..n` into `round(1/delta)` blocks whose
/// sizes differ by at most one.
pub fn partition(n: usize, delta: f64, seed: u64) -> Result<Partition> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    let count = (1.0 / delta).round().max(1.0) as usize;
    let rounded = !is_integral(1.0 / delta) || !is_integral(n as f64 * delta);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let (base, extra) = (n / count, n % count);
    let mut blocks = Vec::with_capacity(count);
    let mut start = 0;
    for b in 0..count {
        let len = base + usize::from(b < extra);
        let mut block = order[start..start + len].to_vec();
        block.sort_unstable();
        blocks.push(block);
        start += len;
    }
    Ok(Partition { blocks, rounded })
}

/// `r_i = sum_{j in chat} L_ij` for each `i` in `withheld`.
pub fn vote_scores(lmat: &LlrMatrix, chat: &[usize], withheld: &[usize]) -> Result<BTreeMap<usize, f64>> {
    let mut in_chat = vec![false; lmat.n()];
    for &j in chat {
        in_chat[j] = true;
    }
    if let Some(&i) = withheld.iter().find(|&&i| in_chat[i]) {
        return Err(Error::Contract(format!(
            "index {i} is both withheld and in the reduced-set estimate"
        )));
    }
    Ok(withheld
        .iter()
        .map(|&i| {
            let row = lmat.l.row(i);
            (i, chat.iter().map(|&j| row[j]).sum())
        })
        .collect())
}

/// Voting threshold `K (1 - delta) gamma` with `gamma = log(n/K) / K`.
///
/// Reported for diagnostics only; the top-`K` rule makes it unnecessary at
/// run time.
pub fn vote_threshold(n: usize, k: usize, delta: f64) -> f64 {
    (1.0 - delta) * (n as f64 / k as f64).ln()
}

/// Size handed to the weak estimator on each reduced set.
pub fn weak_target(k: usize, delta: f64) -> usize {
    // guard against 6 * (1 - 1/3) landing a hair above 4
    let raw = k as f64 * (1.0 - delta);
    (raw - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub withheld: Vec<usize>,
    /// Weak estimate on the reduced set, in original indices.
    pub weak_estimate: Vec<usize>,
    /// `|C_k △ (C* \ S_k)|` when the truth is known.
    pub symdiff: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanupOutcome {
    pub estimate: Estimate,
    pub blocks: Vec<BlockReport>,
    pub rounded: bool,
    pub weak_target: usize,
    pub vote_threshold: f64,
    pub delta: f64,
}

/// Run `method` on `lmat` for a size-`k` estimate.
pub fn run_weak(lmat: &LlrMatrix, k: usize, method: Method, budget: u64, local: LocalOptions, seed: u64) -> Result<Estimate> {
    match method {
        Method::Exhaustive => mle_exhaustive(lmat, k, budget),
        Method::Local => mle_local_restarts(lmat, k, local, &mut rng_from(seed)),
        Method::Degree => degree_threshold(lmat, k),
        Method::Cleanup => Err(Error::Config("the weak step cannot itself be cleanup".into())),
    }
}

/// Weak recovery plus cleanup on an LLR matrix.
pub fn clean_up(lmat: &LlrMatrix, k: usize, config: &CleanupConfig) -> Result<CleanupOutcome> {
    clean_up_inner(lmat, k, config, None)
}

/// [`clean_up`] on an instance, with per-block diagnostics against its truth.
pub fn clean_up_instance(inst: &Instance, k: usize, config: &CleanupConfig) -> Result<CleanupOutcome> {
    let lmat = crate::model::llr_matrix(inst)?;
    clean_up_inner(&lmat, k, config, Some(&inst.community))
}

fn clean_up_inner(lmat: &LlrMatrix, k: usize, config: &CleanupConfig, truth: Option<&[usize]>) -> Result<CleanupOutcome> {
    let n = lmat.n();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("need 1 <= K <= n, got K={k}, n={n}")));
    }
    if config.weak_method == Method::Cleanup {
        return Err(Error::Config("the weak step cannot itself be cleanup".into()));
    }
    let part = partition(n, config.delta, config.partition_seed)?;
    let target = weak_target(k, config.delta);
    let mut withheld_flag = vec![usize::MAX; n];
    for (b, block) in part.blocks.iter().enumerate() {
        for &i in block {
            withheld_flag[i] = b;
        }
    }
    for (b, block) in part.blocks.iter().enumerate() {
        let reduced = n - block.len();
        if reduced < target || target == 0 {
            return Err(Error::Config(format!(
                "block {b} leaves {reduced} indices, too few for a weak estimate of size {target}"
            )));
        }
    }

    let per_block: Vec<Result<(BlockReport, BTreeMap<usize, f64>, u64)>> = part
        .blocks
        .par_iter()
        .enumerate()
        .map(|(b, block)| {
            let rest: Vec<usize> = (0..n).filter(|&i| withheld_flag[i] != b).collect();
            let sub = lmat.principal(&rest);
            let seed = crate::seed::derive(config.partition_seed, b as u64 + 1);
            let est = run_weak(&sub, target, config.weak_method, config.budget, config.local, seed)?;
            let chat: Vec<usize> = est.community.iter().map(|&i| rest[i]).collect();
            let votes = vote_scores(lmat, &chat, block)?;
            let symdiff = truth.map(|t| {
                let truth_here: Vec<usize> = t.iter().copied().filter(|&i| withheld_flag[i] != b).collect();
                symdiff_sorted(&chat, &truth_here)
            });
            Ok((
                BlockReport {
                    withheld: block.clone(),
                    weak_estimate: chat,
                    symdiff,
                },
                votes,
                est.iterations,
            ))
        })
        .collect();

    let mut votes = vec![0.0; n];
    let mut blocks = Vec::with_capacity(per_block.len());
    let mut iterations = 0;
    for res in per_block {
        let (report, block_votes, iters) = res?;
        for (i, r) in block_votes {
            votes[i] = r;
        }
        iterations += iters;
        blocks.push(report);
    }
    let chosen = top_k(&votes, k);
    Ok(CleanupOutcome {
        estimate: Estimate::new(lmat, chosen, Method::Cleanup, iterations),
        blocks,
        rounded: part.rounded,
        weak_target: target,
        vote_threshold: vote_threshold(n, k, config.delta),
        delta: config.delta,
    })
}

/// `|A △ B|` for sorted, duplicate-free slices.
pub fn symdiff_sorted(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}
