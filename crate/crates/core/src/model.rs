//! Hidden community instances and their LLR matrices.
//!
//! A community `C*` of size `K` is drawn uniformly from the subsets of
//! `[n]`. For `i < j`, `A_ij ~ P` when both endpoints lie in `C*` and
//! `A_ij ~ Q` otherwise; `A` is symmetric. The diagonal is either zero or,
//! in the informative variant, `A_ii ~ P` for `i in C*` and `Q` otherwise.
//!
//! Indices are 0-based in memory and 1-based in files.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dists::{DistPair, Measure};
use crate::error::{domain, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DiagMode {
    #[default]
    Zero,
    Informative,
}

/// Dense symmetric `n x n` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Build from row-major values, rejecting asymmetric input.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Format(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::Format(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn principal(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in idx {
            let row = self.row(i);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        Self { n: m, data }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| ((i + 1)..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n: usize,
    pub k: usize,
    pub pair: DistPair,
    pub a: SymMatrix,
    /// Ground truth, sorted, 0-based.
    pub community: Vec<usize>,
    pub diag_mode: DiagMode,
    pub seed: Option<u64>,
}

impl Instance {
    pub fn membership(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.community {
            m[i] = true;
        }
        m
    }
}

/// Uniform size-`k` subset of `0..n` by a partial Fisher-Yates shuffle, sorted.
pub fn random_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        perm.swap(i, j);
    }
    let mut out = perm[..k].to_vec();
    out.sort_unstable();
    out
}

/// Draw an instance. `K = n` is accepted (the community is then forced).
pub fn sample_instance<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    pair: &DistPair,
    rng: &mut R,
    diag_mode: DiagMode,
) -> Result<Instance> {
    if k < 2 || k > n {
        return Err(domain(format!("need 2 <= K <= n, got n={n}, K={k}")));
    }
    let community = random_subset(n, k, rng);
    let mut member = vec![false; n];
    for &i in &community {
        member[i] = true;
    }
    let mut a = SymMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let m = if member[i] && member[j] {
                Measure::UnderP
            } else {
                Measure::UnderQ
            };
            a.set_sym(i, j, pair.sample(m, rng));
        }
    }
    if diag_mode == DiagMode::Informative {
        for (i, &inside) in member.iter().enumerate() {
            let m = if inside { Measure::UnderP } else { Measure::UnderQ };
            a.set_sym(i, i, pair.sample(m, rng));
        }
    }
    Ok(Instance {
        n,
        k,
        pair: pair.clone(),
        a,
        community,
        diag_mode,
        seed: None,
    })
}

/// Draw an instance from a fresh generator seeded with `seed`, recording the seed.
pub fn sample_instance_seeded(
    n: usize,
    k: usize,
    pair: &DistPair,
    seed: u64,
    diag_mode: DiagMode,
) -> Result<Instance> {
    let mut rng = seed::rng_from(seed);
    let mut inst = sample_instance(n, k, pair, &mut rng, diag_mode)?;
    inst.seed = Some(seed);
    Ok(inst)
}

/// Symmetric matrix of log-likelihood ratios `L_ij = log dP/dQ (A_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrMatrix {
    pub l: SymMatrix,
    pub diag_mode: DiagMode,
}

impl LlrMatrix {
    pub fn from_instance(inst: &Instance, pair: &DistPair) -> Result<Self> {
        let n = inst.n;
        let mut l = SymMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                l.set_sym(i, j, pair.llr(inst.a.get(i, j))?);
            }
        }
        if inst.diag_mode == DiagMode::Informative {
            for i in 0..n {
                l.set_sym(i, i, pair.llr(inst.a.get(i, i))?);
            }
        }
        Ok(Self {
            l,
            diag_mode: inst.diag_mode,
        })
    }

    /// Wrap raw values; the diagonal is zeroed in `Zero` mode.
    pub fn from_matrix(mut l: SymMatrix, diag_mode: DiagMode) -> Self {
        if diag_mode == DiagMode::Zero {
            for i in 0..l.n() {
                l.set_sym(i, i, 0.0);
            }
        }
        Self { l, diag_mode }
    }

    pub fn n(&self) -> usize {
        self.l.n()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l.get(i, j)
    }

    /// Diagonal entry, zero unless the diagonal is informative.
    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        match self.diag_mode {
            DiagMode::Zero => 0.0,
            DiagMode::Informative => self.l.get(i, i),
        }
    }

    pub fn principal(&self, idx: &[usize]) -> Self {
        Self {
            l: self.l.principal(idx),
            diag_mode: self.diag_mode,
        }
    }
}

/// Convenience: `LlrMatrix::from_instance(inst, &inst.pair)`.
pub fn llr_matrix(inst: &Instance) -> Result<LlrMatrix> {
    LlrMatrix::from_instance(inst, &inst.pair)
}

pub const INSTANCE_FORMAT: &str = "hcm-instance/1";

/// JSON header line of an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceHeader {
    pub format: String,
    pub build: String,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub pair: DistPair,
    pub diag_mode: DiagMode,
    pub seed: Option<u64>,
    /// 1-based ground-truth indices.
    pub community: Vec<usize>,
}

/// Write `# {header}` followed by `n` CSV rows of the matrix.
///
/// Values use the shortest representation that parses back to the same `f64`.
pub fn write_instance<W: Write>(inst: &Instance, mut w: W) -> Result<()> {
    let header = InstanceHeader {
        format: INSTANCE_FORMAT.into(),
        build: crate::BUILD_TAG.into(),
        n: inst.n,
        k: inst.k,
        pair: inst.pair.clone(),
        diag_mode: inst.diag_mode,
        seed: inst.seed,
        community: inst.community.iter().map(|i| i + 1).collect(),
    };
    writeln!(w, "# {}", serde_json::to_string(&header)?)?;
    let mut line = String::new();
    for i in 0..inst.n {
        line.clear();
        for (j, v) in inst.a.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_instance<R: BufRead>(r: R) -> Result<Instance> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Format("empty instance file".into()))??;
    let json = first
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("instance file must start with a '#' JSON header".into()))?;
    let header: InstanceHeader = serde_json::from_str(json.trim())?;
    if header.format != INSTANCE_FORMAT {
        return Err(Error::Format(format!("unsupported format {:?}", header.format)));
    }
    let n = header.n;
    let mut data = Vec::with_capacity(n * n);
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad value {tok:?}", row + 1)))?;
            data.push(v);
        }
        if data.len() - before != n {
            return Err(Error::Format(format!("row {} has {} values, expected {n}", row + 1, data.len() - before)));
        }
    }
    let a = SymMatrix::from_rows(n, data)?;
    let mut community: Vec<usize> = Vec::with_capacity(header.community.len());
    for &c in &header.community {
        if c == 0 || c > n {
            return Err(Error::Format(format!("community index {c} outside 1..={n}")));
        }
        community.push(c - 1);
    }
    community.sort_unstable();
    community.dedup();
    if community.len() != header.k {
        return Err(Error::Format(format!(
            "community lists {} distinct indices, header says K={}",
            community.len(),
            header.k
        )));
    }
    if header.diag_mode == DiagMode::Zero && (0..n).any(|i| a.get(i, i) != 0.0) {
        return Err(Error::Format("nonzero diagonal in a zero-diagonal instance".into()));
    }
    Ok(Instance {
        n,
        k: header.k,
        pair: header.pair,
        a,
        community,
        diag_mode: header.diag_mode,
        seed: header.seed,
    })
}

/// Bernoulli instances as 1-based `i,j` edge lines (`i <= j`, diagonal only when informative).
pub fn write_edge_list<W: Write>(inst: &Instance, mut w: W) -> Result<()> {
    if !matches!(inst.pair.kind(), crate::dists::PairKind::Bernoulli { .. }) {
        return Err(domain("edge lists are only defined for bernoulli instances"));
    }
    let start = |i: usize| match inst.diag_mode {
        DiagMode::Zero => i + 1,
        DiagMode::Informative => i,
    };
    for i in 0..inst.n {
        for j in start(i)..inst.n {
            if inst.a.get(i, j) == 1.0 {
                writeln!(w, "{},{}", i + 1, j + 1)?;
            }
        }
    }
    Ok(())
}
