//! Kronecker-structured linear algebra on `R^P ⊗ R^N`: the Galerkin
//! operator `K̂ = Σ_m G^(m) ⊗ K^(m)`, mean-preconditioned conjugate
//! gradients, the stochastic product matrices `Δ(ŝ)` and the Newton solve
//! for the Galerkin normalization `P_A(s²) = P_A(‖v‖²_M)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{dot, DenseMatrix, Lu};
use crate::error::{Error, Result};
use crate::legendre::{basis_values, MomentMatrices, TripleProductTensor};
use crate::multiindex::MultiIndexSet;
use crate::sparse::{BandCholesky, CsrMatrix};

/// Chaos coefficients `{v_{αi}}` of a vector-valued expansion: `P` blocks
/// of length `N`, block `α` holding `v_α`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralVector {
    p: usize,
    n: usize,
    data: Vec<f64>,
}

impl SpectralVector {
    pub fn zeros(p: usize, n: usize) -> Self {
        Self { p, n, data: vec![0.0; p * n] }
    }

    pub fn from_data(p: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != p * n {
            return Err(Error::DimensionMismatch { expected: p * n, found: data.len() });
        }
        Ok(Self { p, n, data })
    }

    /// Deterministic vector `v0` placed in the mean block.
    pub fn from_mean(p: usize, v0: &[f64]) -> Self {
        let mut v = Self::zeros(p, v0.len());
        v.block_mut(0).copy_from_slice(v0);
        v
    }

    pub fn stochastic_dim(&self) -> usize {
        self.p
    }

    pub fn spatial_dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, alpha: usize) -> &[f64] {
        &self.data[alpha * self.n..(alpha + 1) * self.n]
    }

    pub fn block_mut(&mut self, alpha: usize) -> &mut [f64] {
        &mut self.data[alpha * self.n..(alpha + 1) * self.n]
    }

    pub fn blocks(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.n)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.p != other.p || self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.p * self.n,
                found: other.p * other.n,
            });
        }
        Ok(())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert!(self.check_shape(x).is_ok());
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    /// Euclidean inner product on `R^{PN}`.
    pub fn dot(&self, other: &Self) -> f64 {
        dot(&self.data, &other.data)
    }

    /// `Σ_α v_αᵀ M w_α`, the `R^P ⊗ R^N_M` inner product.
    pub fn mass_inner(&self, other: &Self, mass: &CsrMatrix) -> f64 {
        self.blocks().zip(other.blocks()).map(|(a, b)| mass.inner(a, b)).sum()
    }

    /// `‖v̂‖_{R^P ⊗ R^N_M}`.
    pub fn mass_norm(&self, mass: &CsrMatrix) -> f64 {
        libm::sqrt(self.mass_inner(self, mass).max(0.0))
    }

    /// `‖v̂ - ŵ‖_{R^P ⊗ R^N_M}`.
    pub fn mass_distance(&self, other: &Self, mass: &CsrMatrix) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d.mass_norm(mass)
    }

    /// Per-block M-norms `‖v_α‖_M`.
    pub fn block_norms(&self, mass: &CsrMatrix) -> Vec<f64> {
        self.blocks().map(|b| libm::sqrt(mass.inner(b, b).max(0.0))).collect()
    }

    /// `Σ_α v_α Λ_α(y)`.
    pub fn evaluate(&self, set: &MultiIndexSet, y: &[f64]) -> Result<Vec<f64>> {
        if set.len() != self.p {
            return Err(Error::DimensionMismatch { expected: set.len(), found: self.p });
        }
        let basis = basis_values(set, y)?;
        Ok(self.combine(&basis))
    }

    /// `Σ_α c_α v_α` for given weights `c`.
    pub fn combine(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (block, &c) in self.blocks().zip(weights) {
            if c != 0.0 {
                for (o, b) in out.iter_mut().zip(block) {
                    *o += c * b;
                }
            }
        }
        out
    }

    /// Blockwise `M v_α`.
    pub fn apply_mass(&self, mass: &CsrMatrix) -> Self {
        let mut out = Self::zeros(self.p, self.n);
        for (src, dst) in self.blocks().zip(out.data.chunks_exact_mut(self.n)) {
            mass.matvec_into(src, dst);
        }
        out
    }

    /// `T(f̂) û = (Δ(f̂) ⊗ I_N) û` for an explicit `P×P` matrix `Δ(f̂)`.
    pub fn apply_stochastic(&self, delta: &DenseMatrix) -> Self {
        let mut out = Self::zeros(self.p, self.n);
        for a in 0..self.p {
            let dst = &mut out.data[a * self.n..(a + 1) * self.n];
            for (b, src) in self.blocks().enumerate() {
                let c = delta[(a, b)];
                if c != 0.0 {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
        }
        out
    }
}

/// A multi-index set together with its moment matrices `G^(m)` and the
/// triple-product tensor `G^(α)`; built once and shared by every solve.
#[derive(Clone, Debug)]
pub struct GalerkinSpace {
    set: MultiIndexSet,
    moments: MomentMatrices,
    tensor: TripleProductTensor,
}

impl GalerkinSpace {
    pub fn new(set: MultiIndexSet) -> Self {
        let moments = MomentMatrices::build(&set);
        let tensor = TripleProductTensor::build(&set);
        Self { set, moments, tensor }
    }

    pub fn set(&self) -> &MultiIndexSet {
        &self.set
    }

    pub fn moments(&self) -> &MomentMatrices {
        &self.moments
    }

    pub fn tensor(&self) -> &TripleProductTensor {
        &self.tensor
    }

    /// `P = #A`.
    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Matrix-free `K̂ = Σ_{m=0}^{M(A)} G^(m) ⊗ K^(m)`, optionally shifted to
/// `K̂ - λ (I_P ⊗ M)`.
#[derive(Clone, Debug)]
pub struct KroneckerOperator<'a> {
    moments: &'a MomentMatrices,
    stiffness: &'a [CsrMatrix],
    mass: &'a CsrMatrix,
    shift: Option<f64>,
    base: CsrMatrix,
}

impl<'a> KroneckerOperator<'a> {
    pub fn new(
        moments: &'a MomentMatrices,
        stiffness: &'a [CsrMatrix],
        mass: &'a CsrMatrix,
    ) -> Result<Self> {
        if stiffness.len() <= moments.terms() {
            return Err(Error::DimensionMismatch {
                expected: moments.terms() + 1,
                found: stiffness.len(),
            });
        }
        Ok(Self { moments, stiffness, mass, shift: None, base: stiffness[0].clone() })
    }

    /// Replaces the mean term by `K^(0) - λ M`.
    pub fn with_shift(mut self, shift: f64) -> Self {
        let mut base = self.stiffness[0].clone();
        base.axpy(-shift, self.mass);
        self.base = base;
        self.shift = Some(shift);
        self
    }

    pub fn shift(&self) -> Option<f64> {
        self.shift
    }

    pub fn stochastic_dim(&self) -> usize {
        self.moments.size()
    }

    pub fn spatial_dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn mass(&self) -> &CsrMatrix {
        self.mass
    }

    /// The (possibly shifted) mean term.
    pub fn mean_term(&self) -> &CsrMatrix {
        &self.base
    }

    pub fn apply(&self, v: &SpectralVector) -> SpectralVector {
        let (p, n) = (self.stochastic_dim(), self.spatial_dim());
        debug_assert_eq!((v.p, v.n), (p, n));
        let mut out = SpectralVector::zeros(p, n);
        for (src, dst) in v.blocks().zip(out.data.chunks_exact_mut(n)) {
            self.base.matvec_into(src, dst);
        }
        let mut cache: Vec<Option<Vec<f64>>> = vec![None; p];
        for m in 1..=self.moments.terms() {
            let k = &self.stiffness[m];
            let pairs = self.moments.pairs(m);
            for slot in cache.iter_mut() {
                *slot = None;
            }
            for &(a, b, _) in pairs {
                for idx in [a, b] {
                    if cache[idx].is_none() {
                        cache[idx] = Some(k.matvec(v.block(idx)));
                    }
                }
            }
            for &(a, b, g) in pairs {
                let kb = cache[b].as_ref().expect("cached");
                for (o, x) in out.block_mut(a).iter_mut().zip(kb) {
                    *o += g * x;
                }
                let ka = cache[a].as_ref().expect("cached");
                for (o, x) in out.block_mut(b).iter_mut().zip(ka) {
                    *o += g * x;
                }
            }
        }
        out
    }

    /// Materializes the `PN × PN` matrix (tests and tiny problems only).
    pub fn to_dense(&self) -> DenseMatrix {
        let (p, n) = (self.stochastic_dim(), self.spatial_dim());
        let mut d = DenseMatrix::zeros(p * n, p * n);
        for m in 0..=self.moments.terms() {
            let g = self.moments.to_dense(m);
            let k = if m == 0 { &self.base } else { &self.stiffness[m] };
            for a in 0..p {
                for b in 0..p {
                    let gab = g[(a, b)];
                    if gab == 0.0 {
                        continue;
                    }
                    for (i, j, v) in k.triplets() {
                        d[(a * n + i, b * n + j)] += gab * v;
                    }
                }
            }
        }
        d
    }
}

/// `(I_P ⊗ K̄)^{-1}` with `K̄` the mean term of the operator.
#[derive(Clone, Debug)]
pub struct MeanPreconditioner {
    factor: BandCholesky,
}

impl MeanPreconditioner {
    pub fn new(op: &KroneckerOperator<'_>) -> Result<Self> {
        Ok(Self { factor: BandCholesky::factor(op.mean_term())? })
    }

    pub fn from_matrix(mean: &CsrMatrix) -> Result<Self> {
        Ok(Self { factor: BandCholesky::factor(mean)? })
    }

    pub fn apply(&self, r: &SpectralVector) -> SpectralVector {
        let mut z = r.clone();
        for block in z.data.chunks_exact_mut(r.n) {
            self.factor.solve_in_place(block);
        }
        z
    }

    pub fn factor(&self) -> &BandCholesky {
        &self.factor
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PcgInfo {
    pub iterations: usize,
    /// Final `sqrt(rᵀ P r) / sqrt(bᵀ P b)`.
    pub relative_residual: f64,
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients for `K̂ x = b`, warm-started from
/// `guess` when given.
pub fn pcg_solve(
    op: &KroneckerOperator<'_>,
    precond: &MeanPreconditioner,
    rhs: &SpectralVector,
    guess: Option<&SpectralVector>,
    tol: f64,
    max_iterations: usize,
) -> Result<(SpectralVector, PcgInfo)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("cg tolerance must be positive"));
    }
    let mut x = match guess {
        Some(g) => {
            g.check_shape(rhs)?;
            g.clone()
        }
        None => SpectralVector::zeros(rhs.p, rhs.n),
    };
    let zb = precond.apply(rhs);
    let rhs_norm = libm::sqrt(rhs.dot(&zb).max(0.0));
    let mut info = PcgInfo::default();
    if rhs_norm == 0.0 {
        return Ok((SpectralVector::zeros(rhs.p, rhs.n), info));
    }
    let mut r = rhs.clone();
    if guess.is_some() {
        r.axpy(-1.0, &op.apply(&x));
    }
    let mut z = precond.apply(&r);
    let mut rz = r.dot(&z);
    let mut rel = libm::sqrt(rz.max(0.0)) / rhs_norm;
    info.history.push(rel);
    let mut p = z.clone();
    let mut k = 0;
    while rel > tol {
        if k == max_iterations {
            return Err(Error::NotConverged { iterations: k, residual: rel });
        }
        let ap = op.apply(&p);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            return Err(Error::NegativeCurvature { iteration: k, curvature });
        }
        let alpha = rz / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        z = precond.apply(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.data.iter_mut().zip(&z.data) {
            *pi = zi + beta * *pi;
        }
        k += 1;
        rel = libm::sqrt(rz.max(0.0)) / rhs_norm;
        info.history.push(rel);
    }
    info.iterations = k;
    info.relative_residual = rel;
    Ok((x, info))
}

/// `H_{βγ} = v_βᵀ M w_γ`.
pub fn block_gram(v: &SpectralVector, w: &SpectralVector, mass: &CsrMatrix) -> DenseMatrix {
    let mw = w.apply_mass(mass);
    let mut h = DenseMatrix::zeros(v.p, w.p);
    for (b, vb) in v.blocks().enumerate() {
        for (g, mwg) in mw.blocks().enumerate() {
            h[(b, g)] = dot(vb, mwg);
        }
    }
    h
}

/// `F^v_α(v̂, ŵ) = v̂ · (G^(α) ⊗ M) ŵ`: the coefficients of
/// `P_A(⟨v, w⟩_M)`.
pub fn weighted_gram(
    v: &SpectralVector,
    w: &SpectralVector,
    tensor: &TripleProductTensor,
    mass: &CsrMatrix,
) -> Vec<f64> {
    tensor.contract_pairs(&block_gram(v, w, mass))
}

/// Factorized `Δ(ŝ) = Σ_α s_α G^(α)`.
#[derive(Clone, Debug)]
pub struct DeltaFactor {
    matrix: DenseMatrix,
    lu: Lu,
    condition: f64,
}

/// Condition number above which `Δ(ŝ)` is treated as singular.
pub const DELTA_CONDITION_LIMIT: f64 = 1e12;

impl DeltaFactor {
    pub fn new(tensor: &TripleProductTensor, s: &[f64]) -> Result<Self> {
        Self::with_limit(tensor, s, DELTA_CONDITION_LIMIT)
    }

    pub fn with_limit(tensor: &TripleProductTensor, s: &[f64], limit: f64) -> Result<Self> {
        if s.len() != tensor.size() {
            return Err(Error::DimensionMismatch { expected: tensor.size(), found: s.len() });
        }
        let matrix = tensor.contract(s);
        let lu = Lu::factor(matrix.clone())?;
        let condition = matrix.norm_one() * lu.inverse().norm_one();
        if !(condition < limit) {
            return Err(Error::Singular { condition });
        }
        Ok(Self { matrix, lu, condition })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    /// `‖Δ‖₁ ‖Δ^{-1}‖₁`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.lu.solve(rhs)
    }

    /// Solves `T(ŝ) û = v̂`, i.e. `Δ(ŝ) U = V` for all `N` columns at once.
    pub fn solve_block(&self, v: &SpectralVector) -> SpectralVector {
        let (p, n) = (v.p, v.n);
        let mut out = v.clone();
        let mut col = vec![0.0; p];
        for i in 0..n {
            for (a, c) in col.iter_mut().enumerate() {
                *c = v.data[a * n + i];
            }
            self.lu.solve_in_place(&mut col);
            for (a, c) in col.iter().enumerate() {
                out.data[a * n + i] = *c;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Stop when `‖F(ŝ, v̂)‖ <= tol ‖v̂‖²`.
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iterations: 50, max_halvings: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonResult {
    pub s: Vec<f64>,
    pub iterations: usize,
    /// `‖F(ŝ_k, v̂)‖` for every iterate, starting with the initial guess.
    pub residuals: Vec<f64>,
}

/// Solves `F_α(ŝ) = ŝ·G^(α)ŝ - h_α = 0` for given right-hand side
/// `h = F^v(v̂, v̂)` by damped Newton from `ŝ = sqrt(h_0) ê_1`. The Jacobian
/// is `2Δ(ŝ)`.
pub fn newton_solve(
    tensor: &TripleProductTensor,
    h: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let p = tensor.size();
    if h.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: h.len() });
    }
    let norm_sq = h[0];
    if !(norm_sq > 0.0) {
        return Err(Error::InvalidArgument("cannot normalize a zero vector"));
    }
    let residual = |s: &[f64]| -> (Vec<f64>, f64) {
        let mut f = tensor.product(s, s);
        for (fa, ha) in f.iter_mut().zip(h) {
            *fa -= ha;
        }
        let r = libm::sqrt(f.iter().map(|x| x * x).sum::<f64>());
        (f, r)
    };
    let mut s = vec![0.0; p];
    s[0] = libm::sqrt(norm_sq);
    let (mut f, mut r) = residual(&s);
    let mut residuals = vec![r];
    let target = opts.tol * norm_sq;
    let mut k = 0;
    while r > target {
        if k == opts.max_iterations {
            return Err(Error::NewtonFailure { iterations: k, residual: r });
        }
        let delta = DeltaFactor::new(tensor, &s).map_err(|_| Error::NewtonFailure {
            iterations: k,
            residual: r,
        })?;
        let step = delta.solve(&f);
        let mut t = 0.5;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = s.iter().zip(&step).map(|(si, di)| si - t * di).collect();
            let (ft, rt) = residual(&trial);
            if rt < r {
                accepted = Some((trial, ft, rt));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft, rt)) = accepted else {
            // no decrease possible: accept if already at rounding level
            if r <= 1e3 * f64::EPSILON * norm_sq * p as f64 {
                break;
            }
            return Err(Error::NewtonFailure { iterations: k, residual: r });
        };
        s = trial;
        f = ft;
        r = rt;
        residuals.push(r);
        k += 1;
    }
    Ok(NewtonResult { s, iterations: k, residuals })
}

/// Newton normalization of `v̂`: returns `ŝ` with `P_A(s²) = P_A(‖v‖²_M)`.
pub fn newton_normalize(
    v: &SpectralVector,
    tensor: &TripleProductTensor,
    mass: &CsrMatrix,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let h = weighted_gram(v, v, tensor, mass);
    newton_solve(tensor, &h, opts)
}
