//! Normalized Legendre chaos on `[-1, 1]` with the uniform probability
//! measure, and the moment matrices `G^(m)`, `G^(α)` over a multi-index set.
//!
//! `L̃_p = sqrt(2p + 1) L_p`, so that `E[L̃_p L̃_q] = δ_pq` for `y ~ U(-1, 1)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::multiindex::{MultiIndex, MultiIndexSet};

/// Gauss-Legendre rule with `n` points on `[-1, 1]`; weights sum to 2.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pi = core::f64::consts::PI;
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(pi * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `L̃_p(x)`.
pub fn eval_univariate(p: usize, x: f64) -> f64 {
    debug_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x), "point outside [-1, 1]");
    let (mut p0, mut p1) = (1.0, x);
    if p == 0 {
        return 1.0;
    }
    for k in 1..p {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    libm::sqrt((2 * p + 1) as f64) * p1
}

/// `[L̃_0(x), ..., L̃_max(x)]`.
pub fn eval_all(max: usize, x: f64) -> Vec<f64> {
    let mut raw = Vec::with_capacity(max + 1);
    raw.push(1.0);
    if max >= 1 {
        raw.push(x);
    }
    for k in 1..max {
        let next = ((2 * k + 1) as f64 * x * raw[k] - k as f64 * raw[k - 1]) / (k + 1) as f64;
        raw.push(next);
    }
    raw.iter()
        .enumerate()
        .map(|(p, v)| libm::sqrt((2 * p + 1) as f64) * v)
        .collect()
}

fn triple_is_structurally_zero(a: usize, b: usize, c: usize) -> bool {
    (a + b + c) % 2 == 1 || a > b + c || b > a + c || c > a + b
}

/// `E[L̃_a L̃_b L̃_c]` by Gauss quadrature exact for the integrand degree.
pub fn univariate_triple(a: usize, b: usize, c: usize) -> f64 {
    if triple_is_structurally_zero(a, b, c) {
        return 0.0;
    }
    if a == 0 || b == 0 || c == 0 {
        // orthonormality, exactly
        return 1.0;
    }
    let n = (a + b + c).div_ceil(2) + 1;
    let (x, w) = gauss_legendre(n);
    x.iter()
        .zip(&w)
        .map(|(&x, &w)| 0.5 * w * eval_univariate(a, x) * eval_univariate(b, x) * eval_univariate(c, x))
        .sum()
}

/// `E[y L̃_p L̃_{p+1}] = (p + 1) / sqrt((2p + 1)(2p + 3))`.
pub fn univariate_raise(p: usize) -> f64 {
    let p = p as f64;
    (p + 1.0) / libm::sqrt((2.0 * p + 1.0) * (2.0 * p + 3.0))
}

/// Table of `E[L̃_a L̃_b L̃_c]` for `a, b, c <= max`.
#[derive(Clone, Debug)]
pub struct TripleTable {
    max: usize,
    values: Vec<f64>,
}

impl TripleTable {
    pub fn new(max: usize) -> Self {
        let d = max + 1;
        let mut values = vec![0.0; d * d * d];
        // one quadrature rule exact for every integrand in the table
        let (x, w) = gauss_legendre((3 * max).div_ceil(2) + 1);
        let basis: Vec<Vec<f64>> = x.iter().map(|&xi| eval_all(max, xi)).collect();
        for a in 0..d {
            for b in a..d {
                for c in b..d {
                    if triple_is_structurally_zero(a, b, c) {
                        continue;
                    }
                    let v: f64 = if a == 0 {
                        1.0
                    } else {
                        basis.iter().zip(&w).map(|(l, &w)| 0.5 * w * l[a] * l[b] * l[c]).sum()
                    };
                    for (i, j, k) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                        values[(i * d + j) * d + k] = v;
                    }
                }
            }
        }
        Self { max, values }
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        let d = self.max + 1;
        self.values[(a * d + b) * d + c]
    }
}

/// `c_{αβγ} = Π_m E[L̃_{α_m} L̃_{β_m} L̃_{γ_m}]` (zero when any factor is).
fn multivariate_triple(table: &TripleTable, a: &MultiIndex, b: &MultiIndex, c: &MultiIndex) -> f64 {
    let (ea, eb, ec) = (a.entries(), b.entries(), c.entries());
    let (mut i, mut j, mut k) = (0, 0, 0);
    let mut value = 1.0;
    loop {
        let da = ea.get(i).map_or(u32::MAX, |e| e.0);
        let db = eb.get(j).map_or(u32::MAX, |e| e.0);
        let dc = ec.get(k).map_or(u32::MAX, |e| e.0);
        let d = da.min(db).min(dc);
        if d == u32::MAX {
            return value;
        }
        let pa = if da == d { i += 1; ea[i - 1].1 } else { 0 } as usize;
        let pb = if db == d { j += 1; eb[j - 1].1 } else { 0 } as usize;
        let pc = if dc == d { k += 1; ec[k - 1].1 } else { 0 } as usize;
        if triple_is_structurally_zero(pa, pb, pc) {
            return 0.0;
        }
        value *= table.get(pa, pb, pc);
    }
}

/// Basis values `Λ_α(y)` for every `α` in the set, in set order.
pub fn basis_values(set: &MultiIndexSet, y: &[f64]) -> Result<Vec<f64>> {
    let dims = set.active_dimensions();
    if y.len() < dims {
        return Err(Error::DimensionMismatch { expected: dims, found: y.len() });
    }
    let max = set.max_degree() as usize;
    let per_dim: Vec<Vec<f64>> = y[..dims].iter().map(|&ym| eval_all(max, ym)).collect();
    Ok(set
        .iter()
        .map(|a| {
            a.entries()
                .iter()
                .map(|&(d, e)| per_dim[d as usize - 1][e as usize])
                .product()
        })
        .collect())
}

/// `Σ_α s_α Λ_α(y)`.
pub fn evaluate_scalar(coeffs: &[f64], set: &MultiIndexSet, y: &[f64]) -> Result<f64> {
    if coeffs.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), found: coeffs.len() });
    }
    let basis = basis_values(set, y)?;
    Ok(coeffs.iter().zip(&basis).map(|(c, l)| c * l).sum())
}

/// Mean and variance of a scalar chaos expansion from its coefficients.
pub fn expansion_moments(coeffs: &[f64]) -> (f64, f64) {
    let mean = coeffs.first().copied().unwrap_or(0.0);
    let var = coeffs.iter().skip(1).map(|c| c * c).sum();
    (mean, var)
}

/// The matrices `G^(m)`, `[G^(m)]_{αβ} = E[y_m Λ_α Λ_β]`, `m = 1..=M(A)`,
/// and `G^(0) = I`. Each `G^(m)` is stored as its upper pairs
/// `(α, α + e_m, value)`.
#[derive(Clone, Debug)]
pub struct MomentMatrices {
    size: usize,
    pairs: Vec<Vec<(usize, usize, f64)>>,
}

impl MomentMatrices {
    pub fn build(set: &MultiIndexSet) -> Self {
        let dims = set.active_dimensions();
        let mut pairs = vec![Vec::new(); dims];
        for (row, alpha) in set.iter().enumerate() {
            for (m, list) in pairs.iter_mut().enumerate() {
                let dim = m + 1;
                let up = alpha.incremented(dim);
                if let Some(col) = set.position_of(&up) {
                    list.push((row, col, univariate_raise(alpha.get(dim) as usize)));
                }
            }
        }
        Self { size: set.len(), pairs }
    }

    /// `P`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `M(A)`: number of stochastic terms besides `m = 0`.
    pub fn terms(&self) -> usize {
        self.pairs.len()
    }

    /// Upper pairs of `G^(m)` for `m >= 1`.
    pub fn pairs(&self, m: usize) -> &[(usize, usize, f64)] {
        assert!(m >= 1, "G^(0) is the identity");
        &self.pairs[m - 1]
    }

    pub fn to_dense(&self, m: usize) -> DenseMatrix {
        if m == 0 {
            return DenseMatrix::identity(self.size);
        }
        let mut g = DenseMatrix::zeros(self.size, self.size);
        for &(i, j, v) in self.pairs(m) {
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        g
    }

    /// Coordinate dump `row col value` of `G^(m)`, both triangles.
    pub fn to_coordinate_text(&self, m: usize) -> String {
        coordinate_text(self.to_dense(m).data(), self.size)
    }
}

fn coordinate_text(dense: &[f64], n: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        for j in 0..n {
            let v = dense[i * n + j];
            if v != 0.0 {
                let _ = writeln!(out, "{i} {j} {v:e}");
            }
        }
    }
    out
}

/// `G^(α)` for every `α ∈ A`: `[G^(α)]_{βγ} = E[Λ_α Λ_β Λ_γ]`. Each
/// `G^(α)` is stored as its full list of structural nonzeros `(β, γ, c)`.
#[derive(Clone, Debug)]
pub struct TripleProductTensor {
    size: usize,
    slices: Vec<Vec<(u32, u32, f64)>>,
}

impl TripleProductTensor {
    pub fn build(set: &MultiIndexSet) -> Self {
        let p = set.len();
        let table = TripleTable::new(set.max_degree() as usize);
        let idx = set.indices();
        let mut slices: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); p];
        for a in 0..p {
            for b in a..p {
                for c in b..p {
                    let v = multivariate_triple(&table, &idx[a], &idx[b], &idx[c]);
                    if v == 0.0 {
                        continue;
                    }
                    let (a, b, c) = (a as u32, b as u32, c as u32);
                    let mut perms = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)];
                    perms.sort_unstable();
                    let mut last = None;
                    for t in perms {
                        if last == Some(t) {
                            continue;
                        }
                        last = Some(t);
                        slices[t.0 as usize].push((t.1, t.2, v));
                    }
                }
            }
        }
        for s in &mut slices {
            s.sort_unstable_by_key(|&(b, c, _)| (b, c));
        }
        Self { size: p, slices }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Structural nonzeros `(β, γ, c_{αβγ})` of `G^(α)`.
    pub fn slice(&self, alpha: usize) -> &[(u32, u32, f64)] {
        &self.slices[alpha]
    }

    pub fn get(&self, alpha: usize, beta: usize, gamma: usize) -> f64 {
        let s = &self.slices[alpha];
        s.binary_search_by_key(&(beta as u32, gamma as u32), |&(b, c, _)| (b, c))
            .map_or(0.0, |k| s[k].2)
    }

    pub fn nnz(&self) -> usize {
        self.slices.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self, alpha: usize) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.size, self.size);
        for &(b, c, v) in &self.slices[alpha] {
            g[(b as usize, c as usize)] = v;
        }
        g
    }

    /// `Δ(ŝ) = Σ_α s_α G^(α)`.
    pub fn contract(&self, s: &[f64]) -> DenseMatrix {
        assert_eq!(s.len(), self.size);
        let mut d = DenseMatrix::zeros(self.size, self.size);
        for (alpha, &sa) in s.iter().enumerate() {
            if sa == 0.0 {
                continue;
            }
            for &(b, c, v) in &self.slices[alpha] {
                d[(b as usize, c as usize)] += sa * v;
            }
        }
        d
    }

    /// `{ Σ_{βγ} [G^(α)]_{βγ} h_{βγ} }_α` for a `P×P` matrix `h`.
    pub fn contract_pairs(&self, h: &DenseMatrix) -> Vec<f64> {
        self.slices
            .iter()
            .map(|s| s.iter().map(|&(b, c, v)| v * h[(b as usize, c as usize)]).sum())
            .collect()
    }

    /// `F^s_α(ŝ, t̂) = ŝ · G^(α) t̂`: coefficients of `P_A(s t)`.
    pub fn product(&self, s: &[f64], t: &[f64]) -> Vec<f64> {
        self.slices
            .iter()
            .map(|sl| sl.iter().map(|&(b, c, v)| v * s[b as usize] * t[c as usize]).sum())
            .collect()
    }

    pub fn to_coordinate_text(&self, alpha: usize) -> String {
        coordinate_text(self.to_dense(alpha).data(), self.size)
    }
}
