//! Sparse multi-index sets `{ α : Π η_m^{α_m} > ε }` indexing the chaos basis.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use crate::error::{Error, Result};

/// Finitely supported multi-index, stored as `(dimension, exponent)` pairs
/// with strictly increasing dimensions (1-based) and exponents `>= 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex {
    entries: Vec<(u32, u32)>,
}

impl MultiIndex {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds an index from `(dimension, exponent)` pairs. Zero exponents are
    /// dropped; dimensions must be `>= 1` and strictly increasing.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(pairs.len());
        let mut last = 0u32;
        for &(dim, exp) in pairs {
            if dim == 0 {
                return Err(Error::InvalidArgument("multi-index dimensions start at 1"));
            }
            if dim <= last {
                return Err(Error::InvalidArgument(
                    "multi-index dimensions must be strictly increasing",
                ));
            }
            last = dim;
            if exp > 0 {
                entries.push((dim, exp));
            }
        }
        Ok(Self { entries })
    }

    /// `dense[i]` is the exponent of dimension `i + 1`.
    pub fn from_dense(dense: &[u32]) -> Self {
        let entries = dense
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| (i as u32 + 1, e))
            .collect();
        Self { entries }
    }

    pub fn unit(dim: usize) -> Self {
        debug_assert!(dim >= 1);
        Self { entries: alloc::vec![(dim as u32, 1)] }
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exponent in dimension `dim` (1-based).
    pub fn get(&self, dim: usize) -> u32 {
        match self.entries.binary_search_by_key(&(dim as u32), |&(d, _)| d) {
            Ok(k) => self.entries[k].1,
            Err(_) => 0,
        }
    }

    /// Total degree `|α| = Σ α_m`.
    pub fn degree(&self) -> u32 {
        self.entries.iter().map(|&(_, e)| e).sum()
    }

    /// Largest active dimension, 0 for the zero index.
    pub fn max_dimension(&self) -> usize {
        self.entries.last().map_or(0, |&(d, _)| d as usize)
    }

    pub fn max_exponent(&self) -> u32 {
        self.entries.iter().map(|&(_, e)| e).max().unwrap_or(0)
    }

    /// `α + e_dim`.
    pub fn incremented(&self, dim: usize) -> Self {
        let d = dim as u32;
        let mut entries = self.entries.clone();
        match entries.binary_search_by_key(&d, |&(k, _)| k) {
            Ok(k) => entries[k].1 += 1,
            Err(k) => entries.insert(k, (d, 1)),
        }
        Self { entries }
    }

    /// `α - e_dim`, or `None` when `α_dim = 0`.
    pub fn decremented(&self, dim: usize) -> Option<Self> {
        let d = dim as u32;
        let k = self.entries.binary_search_by_key(&d, |&(k, _)| k).ok()?;
        let mut entries = self.entries.clone();
        if entries[k].1 == 1 {
            entries.remove(k);
        } else {
            entries[k].1 -= 1;
        }
        Some(Self { entries })
    }

    /// `Π_m η_m^{α_m}` with `eta(m)` giving `η_m`.
    pub fn weight(&self, mut eta: impl FnMut(usize) -> f64) -> f64 {
        self.entries
            .iter()
            .fold(1.0, |w, &(d, e)| w * libm::pow(eta(d as usize), e as f64))
    }

    /// Graded lexicographic comparison: lower total degree first, then the
    /// index with the larger exponent in the first differing dimension.
    pub fn grlex_cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let (a, b) = (&self.entries, &other.entries);
            let (mut i, mut j) = (0, 0);
            loop {
                match (a.get(i), b.get(j)) {
                    (None, None) => return Ordering::Equal,
                    (Some(_), None) => return Ordering::Less,
                    (None, Some(_)) => return Ordering::Greater,
                    (Some(&(da, ea)), Some(&(db, eb))) => {
                        if da != db {
                            // the one with an entry in the earlier dimension
                            // has the larger exponent there
                            return if da < db { Ordering::Less } else { Ordering::Greater };
                        }
                        if ea != eb {
                            return eb.cmp(&ea);
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        })
    }
}

/// The weight sequence `η_1 >= η_2 >= ...` in `(0, 1)` defining `A_ε`.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSequence {
    /// `η_m = (τ_m + sqrt(1 + τ_m²))^{-1}`, `τ_m = (m+1)^{ς-1}`.
    Decay { varsigma: f64 },
    /// `η_m = r^m`.
    Geometric { ratio: f64 },
    /// Explicit finite list; dimensions beyond its end never activate.
    Explicit(Vec<f64>),
}

impl WeightSequence {
    pub fn eta(&self, m: usize) -> f64 {
        debug_assert!(m >= 1);
        match self {
            WeightSequence::Decay { varsigma } => decay_weight(*varsigma, m),
            WeightSequence::Geometric { ratio } => libm::pow(*ratio, m as f64),
            WeightSequence::Explicit(w) => w.get(m - 1).copied().unwrap_or(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            WeightSequence::Decay { varsigma } if !(*varsigma > 1.0) => {
                Err(Error::InvalidArgument("decay exponent must exceed 1"))
            }
            WeightSequence::Geometric { ratio } if !(*ratio > 0.0 && *ratio < 1.0) => {
                Err(Error::InvalidArgument("geometric ratio must lie in (0, 1)"))
            }
            WeightSequence::Explicit(w) => {
                if w.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                    return Err(Error::InvalidArgument("weights must lie in (0, 1)"));
                }
                if w.windows(2).any(|p| p[1] > p[0]) {
                    return Err(Error::InvalidArgument("weights must be non-increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn decay_weight(varsigma: f64, m: usize) -> f64 {
    let tau = libm::pow((m + 1) as f64, varsigma - 1.0);
    1.0 / (tau + libm::sqrt(1.0 + tau * tau))
}

/// `η_m` for `m = 1..=count` from the decay rule with exponent `varsigma`.
pub fn weight_sequence(varsigma: f64, count: usize) -> Result<Vec<f64>> {
    if !(varsigma > 1.0) {
        return Err(Error::InvalidArgument("decay exponent must exceed 1"));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("weight count must be positive"));
    }
    Ok((1..=count).map(|m| decay_weight(varsigma, m)).collect())
}

/// A finite, downward closed multi-index set in canonical order: decreasing
/// weight, ties broken by [`MultiIndex::grlex_cmp`]. The zero index is
/// always at position 0.
#[derive(Clone, Debug)]
pub struct MultiIndexSet {
    indices: Vec<MultiIndex>,
    positions: BTreeMap<MultiIndex, usize>,
    eps: Option<f64>,
    weights: Option<WeightSequence>,
    max_dim: usize,
}

impl PartialEq for MultiIndexSet {
    fn eq(&self, other: &Self) -> bool {
        self.indices == other.indices
    }
}

struct Candidate {
    weight: f64,
    index: MultiIndex,
}

fn canonical_cmp(wa: f64, a: &MultiIndex, wb: f64, b: &MultiIndex) -> Ordering {
    wb.total_cmp(&wa).then_with(|| a.grlex_cmp(b))
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // max-heap: the canonically first candidate is the greatest
    fn cmp(&self, other: &Self) -> Ordering {
        canonical_cmp(other.weight, &other.index, self.weight, &self.index)
    }
}

impl MultiIndexSet {
    /// Generates `A_ε = { α : Π η_m^{α_m} > ε }`.
    pub fn generate(weights: WeightSequence, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive (eps = 0 gives an infinite set)"));
        }
        if !(eps < 1.0) {
            return Err(Error::InvalidArgument("eps must be below 1 (the zero index has weight 1)"));
        }
        weights.validate()?;

        // lazily extended cache of η_1, η_2, ... up to the first η_m <= eps
        let mut etas: Vec<f64> = Vec::new();
        let mut exhausted = false;
        let eta_at = |m: usize, etas: &mut Vec<f64>, exhausted: &mut bool| -> Option<f64> {
            while etas.len() < m && !*exhausted {
                let next = weights.eta(etas.len() + 1);
                if let Some(&prev) = etas.last() {
                    debug_assert!(next <= prev, "weights must be non-increasing");
                }
                if next <= eps {
                    *exhausted = true;
                } else {
                    etas.push(next);
                }
            }
            etas.get(m - 1).copied()
        };

        let mut seen: BTreeSet<MultiIndex> = BTreeSet::new();
        let mut frontier = BinaryHeap::new();
        let mut accepted: Vec<(f64, MultiIndex)> = Vec::new();
        seen.insert(MultiIndex::zero());
        frontier.push(Candidate { weight: 1.0, index: MultiIndex::zero() });

        while let Some(Candidate { weight, index }) = frontier.pop() {
            let mut m = 1;
            while eta_at(m, &mut etas, &mut exhausted).is_some() {
                let child = index.incremented(m);
                let w = child.weight(|d| etas[d - 1]);
                if w <= eps {
                    // η is non-increasing, no later dimension can pass either
                    break;
                }
                if seen.insert(child.clone()) {
                    frontier.push(Candidate { weight: w, index: child });
                }
                m += 1;
            }
            accepted.push((weight, index));
        }

        accepted.sort_by(|(wa, a), (wb, b)| canonical_cmp(*wa, a, *wb, b));
        let indices = accepted.into_iter().map(|(_, a)| a).collect();
        Ok(Self::assemble(indices, Some(eps), Some(weights)))
    }

    /// Largest threshold set with exactly `target` indices. Fails when ties in
    /// the weights make no threshold set of that size exist.
    pub fn with_cardinality(weights: WeightSequence, target: usize) -> Result<Self> {
        if target == 0 {
            return Err(Error::InvalidArgument("target cardinality must be positive"));
        }
        weights.validate()?;
        if target == 1 {
            let first = weights.eta(1);
            let eps = if first > 0.0 { 0.5 * (1.0 + first) } else { 0.5 };
            return Self::generate(weights, eps);
        }
        let mut eps = 0.5;
        let mut set = Self::generate(weights.clone(), eps)?;
        let mut rounds = 0;
        while set.len() <= target {
            eps *= 0.5;
            rounds += 1;
            if rounds > 200 {
                return Err(Error::InvalidArgument("weight sequence cannot reach target cardinality"));
            }
            set = Self::generate(weights.clone(), eps)?;
        }
        let eta = |m: usize| weights.eta(m);
        let inside = set.indices[target - 1].weight(eta);
        let outside = set.indices[target].weight(eta);
        if !(inside > outside) {
            return Err(Error::InvalidArgument("tied weights at the requested cardinality"));
        }
        let eps = libm::sqrt(inside * outside);
        let exact = Self::generate(weights, eps)?;
        debug_assert_eq!(exact.len(), target);
        Ok(exact)
    }

    /// Wraps an explicit list of indices. The list must start with the zero
    /// index, contain no duplicates and be downward closed.
    pub fn from_indices(indices: Vec<MultiIndex>) -> Result<Self> {
        if indices.first().map_or(true, |a| !a.is_zero()) {
            return Err(Error::InvalidArgument("index list must start with the zero index"));
        }
        let set = Self::assemble(indices, None, None);
        if set.positions.len() != set.indices.len() {
            return Err(Error::InvalidArgument("duplicate multi-index"));
        }
        if !set.is_downward_closed() {
            return Err(Error::InvalidArgument("index set is not downward closed"));
        }
        Ok(set)
    }

    fn assemble(
        indices: Vec<MultiIndex>,
        eps: Option<f64>,
        weights: Option<WeightSequence>,
    ) -> Self {
        let positions = indices.iter().enumerate().map(|(k, a)| (a.clone(), k)).collect();
        let max_dim = indices.iter().map(MultiIndex::max_dimension).max().unwrap_or(0);
        Self { indices, positions, eps, weights, max_dim }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.indices[k]
    }

    pub fn iter(&self) -> core::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn position_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.positions.get(alpha).copied()
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.positions.contains_key(alpha)
    }

    /// `M(A)`: the largest dimension active in some index of the set.
    pub fn active_dimensions(&self) -> usize {
        self.max_dim
    }

    pub fn max_degree(&self) -> u32 {
        self.indices.iter().map(MultiIndex::max_exponent).max().unwrap_or(0)
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    pub fn weights(&self) -> Option<&WeightSequence> {
        self.weights.as_ref()
    }

    pub fn is_downward_closed(&self) -> bool {
        self.indices.iter().all(|a| {
            a.entries()
                .iter()
                .all(|&(d, _)| a.decremented(d as usize).is_some_and(|b| self.contains(&b)))
        })
    }

    /// Plain-text form: a header line `# eps=<ε> varsigma=<ς> count=<P>`
    /// followed by one line per index with space separated `dim:exp` pairs
    /// (the zero index is an empty line).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push('#');
        if let Some(eps) = self.eps {
            let _ = write!(out, " eps={eps:e}");
        }
        match &self.weights {
            Some(WeightSequence::Decay { varsigma }) => {
                let _ = write!(out, " varsigma={varsigma}");
            }
            Some(WeightSequence::Geometric { ratio }) => {
                let _ = write!(out, " geometric={ratio}");
            }
            Some(WeightSequence::Explicit(w)) => {
                out.push_str(" explicit=");
                for (k, x) in w.iter().enumerate() {
                    if k > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{x:e}");
                }
            }
            None => {}
        }
        let _ = writeln!(out, " count={}", self.len());
        for a in &self.indices {
            for (k, (d, e)) in a.entries().iter().enumerate() {
                if k > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{d}:{e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, message: "missing header" })?;
        let header = header
            .strip_prefix('#')
            .ok_or(Error::Parse { line: 1, message: "header must start with '#'" })?;
        let bad = |message| Error::Parse { line: 1, message };
        let (mut eps, mut weights, mut count) = (None, None, None);
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or(bad("malformed header field"))?;
            match key {
                "eps" => eps = Some(value.parse::<f64>().map_err(|_| bad("bad eps"))?),
                "varsigma" => {
                    let varsigma = value.parse::<f64>().map_err(|_| bad("bad varsigma"))?;
                    weights = Some(WeightSequence::Decay { varsigma });
                }
                "geometric" => {
                    let ratio = value.parse::<f64>().map_err(|_| bad("bad ratio"))?;
                    weights = Some(WeightSequence::Geometric { ratio });
                }
                "explicit" => {
                    let w = value
                        .split(',')
                        .map(|x| x.parse::<f64>())
                        .collect::<core::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("bad explicit weights"))?;
                    weights = Some(WeightSequence::Explicit(w));
                }
                "count" => count = Some(value.parse::<usize>().map_err(|_| bad("bad count"))?),
                _ => return Err(bad("unknown header field")),
            }
        }
        let count = count.ok_or(bad("header lacks count"))?;
        let mut indices = Vec::with_capacity(count);
        for (k, line) in lines.enumerate() {
            if indices.len() == count {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::Parse { line: k + 2, message: "more indices than count" });
            }
            let mut pairs = Vec::new();
            for tok in line.split_whitespace() {
                let err = Error::Parse { line: k + 2, message: "expected dim:exp" };
                let (d, e) = tok.split_once(':').ok_or(err.clone())?;
                let d = d.parse::<u32>().map_err(|_| err.clone())?;
                let e = e.parse::<u32>().map_err(|_| err)?;
                pairs.push((d, e));
            }
            indices.push(MultiIndex::from_pairs(&pairs)?);
        }
        if indices.len() != count {
            return Err(Error::Parse { line: 0, message: "fewer indices than count" });
        }
        let mut set = Self::from_indices(indices)?;
        set.eps = eps;
        set.weights = weights;
        Ok(set)
    }
}
