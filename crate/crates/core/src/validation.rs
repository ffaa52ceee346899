//! Pointwise reference solutions and error measures: a deterministic
//! generalized eigensolver at fixed parameter values, sampling statistics,
//! subspace angles and coefficient decay fits.

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{dot, generalized_symmetric_eigen, DenseMatrix};
use crate::error::{Error, Result};
use crate::fem::{Mesh, ParametricOperator};
use crate::galerkin::SpectralVector;
use crate::legendre::{basis_values, evaluate_scalar};
use crate::multiindex::MultiIndexSet;
use crate::sparse::{BandCholesky, CsrMatrix};

/// `Q` smallest eigenpairs of `(K(y), M)`, eigenvalues ascending, vectors
/// M-orthonormal with their largest-magnitude entry positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseEigenSolution {
    pub y: Vec<f64>,
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenOptions {
    /// Stop when `‖K v - μ M v‖ <= tol · μ ‖M v‖` for every wanted pair.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Guard vectors carried beyond the wanted `Q`.
    pub guard: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_sweeps: 1000, guard: 4 }
    }
}

/// Small deterministic generator (SplitMix64) for start vectors and tests.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Rayleigh-Ritz on the columns of `basis`: returns Ritz values and
/// M-orthonormal Ritz vectors.
fn rayleigh_ritz(
    k: &CsrMatrix,
    m: &CsrMatrix,
    basis: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let b = basis.len();
    let kb: Vec<Vec<f64>> = basis.iter().map(|v| k.matvec(v)).collect();
    let mb: Vec<Vec<f64>> = basis.iter().map(|v| m.matvec(v)).collect();
    let mut kr = DenseMatrix::zeros(b, b);
    let mut mr = DenseMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..=i {
            let kij = 0.5 * (dot(&basis[i], &kb[j]) + dot(&basis[j], &kb[i]));
            let mij = 0.5 * (dot(&basis[i], &mb[j]) + dot(&basis[j], &mb[i]));
            kr[(i, j)] = kij;
            kr[(j, i)] = kij;
            mr[(i, j)] = mij;
            mr[(j, i)] = mij;
        }
    }
    let (values, x) = generalized_symmetric_eigen(&kr, &mr)?;
    let n = basis[0].len();
    let vectors = (0..b)
        .map(|c| {
            let mut v = vec![0.0; n];
            for (r, bv) in basis.iter().enumerate() {
                let coef = x[(r, c)];
                for (vi, bi) in v.iter_mut().zip(bv) {
                    *vi += coef * bi;
                }
            }
            v
        })
        .collect();
    Ok((values, vectors))
}

/// `Q` smallest eigenpairs of the pencil `(K, M)` by inverse subspace
/// iteration with Rayleigh-Ritz, using a banded Cholesky factor of `K`.
pub fn generalized_eigensolve(
    k: &CsrMatrix,
    m: &CsrMatrix,
    q: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let n = k.dim();
    if q == 0 || q > n {
        return Err(Error::InvalidArgument("number of eigenpairs must lie in 1..=N"));
    }
    let b = (q + opts.guard.max(q)).min(n);
    if n <= 2 * b || n <= 48 {
        let (values, x) = generalized_symmetric_eigen(&k.to_dense(), &m.to_dense())?;
        let vectors = (0..q)
            .map(|c| {
                let mut v: Vec<f64> = (0..n).map(|r| x[(r, c)]).collect();
                fix_sign(&mut v);
                v
            })
            .collect();
        return Ok((values[..q].to_vec(), vectors, 0));
    }
    let factor = BandCholesky::factor(k)?;
    let mut rng = SplitMix64::new(0x5EED_0F_E16E);
    let mut basis: Vec<Vec<f64>> = (0..b)
        .map(|_| (0..n).map(|_| rng.next_symmetric()).collect())
        .collect();
    let mut sweeps = 0;
    loop {
        for v in basis.iter_mut() {
            let mut w = m.matvec(v);
            factor.solve_in_place(&mut w);
            *v = w;
        }
        sweeps += 1;
        let (values, vectors) = rayleigh_ritz(k, m, &basis)?;
        let mut converged = true;
        for c in 0..q {
            let kv = k.matvec(&vectors[c]);
            let mv = m.matvec(&vectors[c]);
            let r: f64 = kv.iter().zip(&mv).map(|(a, b)| (a - values[c] * b) * (a - values[c] * b)).sum();
            let scale: f64 = values[c].abs() * libm::sqrt(dot(&mv, &mv));
            if libm::sqrt(r) > opts.tol * scale {
                converged = false;
                break;
            }
        }
        basis = vectors;
        if converged {
            let mut out: Vec<Vec<f64>> = basis.into_iter().take(q).collect();
            out.iter_mut().for_each(|v| fix_sign(v));
            return Ok((values[..q].to_vec(), out, sweeps));
        }
        if sweeps == opts.max_sweeps {
            return Err(Error::NotConverged { iterations: sweeps, residual: f64::NAN });
        }
    }
}

/// Smallest `q` eigenpairs of `(K(y), M)`.
pub fn deterministic_eigensolve(
    op: &ParametricOperator,
    y: &[f64],
    q: usize,
) -> Result<PointwiseEigenSolution> {
    deterministic_eigensolve_with(op, y, q, &EigenOptions::default())
}

pub fn deterministic_eigensolve_with(
    op: &ParametricOperator,
    y: &[f64],
    q: usize,
    opts: &EigenOptions,
) -> Result<PointwiseEigenSolution> {
    let k = op.pointwise(y);
    let (values, vectors, sweeps) = generalized_eigensolve(&k, op.mass(), q, opts)?;
    Ok(PointwiseEigenSolution { y: y.to_vec(), values, vectors, sweeps })
}

/// Eigenvalue and eigenvector errors of a chaos solution at `y` against
/// a reference pair, after aligning the reference sign.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointwiseError {
    pub eigenvalue: f64,
    pub eigenvector: f64,
}

/// Compares `(û, μ̂)` evaluated at `y` with the smallest eigenpair of the
/// pointwise problem.
pub fn pointwise_error(
    u: &SpectralVector,
    mu: &[f64],
    set: &MultiIndexSet,
    op: &ParametricOperator,
    y: &[f64],
) -> Result<PointwiseError> {
    let oracle = deterministic_eigensolve(op, y, 1)?;
    pointwise_error_against(u, mu, set, op.mass(), &oracle)
}

pub fn pointwise_error_against(
    u: &SpectralVector,
    mu: &[f64],
    set: &MultiIndexSet,
    mass: &CsrMatrix,
    oracle: &PointwiseEigenSolution,
) -> Result<PointwiseError> {
    let uy = u.evaluate(set, &oracle.y)?;
    let muy = evaluate_scalar(mu, set, &oracle.y)?;
    let reference = &oracle.vectors[0];
    let sign = if mass.inner(&uy, reference) < 0.0 { -1.0 } else { 1.0 };
    let diff: Vec<f64> = uy.iter().zip(reference).map(|(a, b)| a - sign * b).collect();
    Ok(PointwiseError {
        eigenvalue: (muy - oracle.values[0]).abs(),
        eigenvector: libm::sqrt(mass.inner(&diff, &diff).max(0.0)),
    })
}

/// Streaming mean/variance (Welford) with standard errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SampleStatistics {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub mean_error: f64,
    /// Standard error of the variance estimate (from the fourth moment).
    pub variance_error: f64,
}

pub fn sample_statistics(samples: impl IntoIterator<Item = f64>) -> Result<SampleStatistics> {
    let xs: Vec<f64> = samples.into_iter().collect();
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two samples"));
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let nf = n as f64;
    let variance = m2 / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - mean) * (x - mean) * (x - mean) * (x - mean)).sum::<f64>() / nf;
    let pop_var = m2 / nf;
    let var_of_var = ((m4 - pop_var * pop_var) / nf).max(0.0);
    Ok(SampleStatistics {
        count: n,
        mean,
        variance,
        mean_error: libm::sqrt(variance / nf),
        variance_error: libm::sqrt(var_of_var),
    })
}

/// `θ(y) = |det Θ|`, `Θ_ij = ⟨u_i(y), v_j(y)⟩_M`, for a chaos basis and
/// pointwise reference vectors.
pub fn subspace_angle(
    basis: &[SpectralVector],
    set: &MultiIndexSet,
    mass: &CsrMatrix,
    oracle: &PointwiseEigenSolution,
) -> Result<f64> {
    let q = basis.len();
    if oracle.vectors.len() != q {
        return Err(Error::DimensionMismatch { expected: q, found: oracle.vectors.len() });
    }
    let lambda = basis_values(set, &oracle.y)?;
    let evaluated: Vec<Vec<f64>> = basis.iter().map(|u| u.combine(&lambda)).collect();
    Ok(subspace_cosine(&evaluated, &oracle.vectors, mass))
}

/// `|det(Uᵀ M V)|` for two families of vectors.
pub fn subspace_cosine(u: &[Vec<f64>], v: &[Vec<f64>], mass: &CsrMatrix) -> f64 {
    let q = u.len();
    let mut theta = DenseMatrix::zeros(q, q);
    for (j, vj) in v.iter().enumerate() {
        let mv = mass.matvec(vj);
        for (i, ui) in u.iter().enumerate() {
            theta[(i, j)] = dot(ui, &mv);
        }
    }
    theta.determinant().abs()
}

/// Least-squares line `y = slope · x + intercept` with the standard error
/// of the slope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_error: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two points for a fit"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("degenerate abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_error = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a) * (b - intercept - slope * a)).sum();
        libm::sqrt(rss / (nf - 2.0) / sxx)
    } else {
        0.0
    };
    Ok(LinearFit { slope, intercept, slope_error })
}

/// Fit of `log y` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|&v| libm::log(v)).collect();
    let ly: Vec<f64> = y.iter().map(|&v| libm::log(v)).collect();
    linear_fit(&lx, &ly)
}

/// Per-coefficient norms of a chaos solution, in canonical and in sorted
/// order, with log-log tail slopes against the 1-based position.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub eigenvector_norms: Vec<f64>,
    pub eigenvalue_abs: Vec<f64>,
    pub eigenvector_sorted: Vec<f64>,
    pub eigenvalue_sorted: Vec<f64>,
    pub eigenvector_slope: f64,
    pub eigenvector_sorted_slope: f64,
    pub eigenvalue_slope: f64,
    pub eigenvalue_sorted_slope: f64,
}

fn tail_slope(values: &[f64], from: usize) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = values
        .iter()
        .enumerate()
        .skip(from.saturating_sub(1))
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, &v)| ((k + 1) as f64, v))
        .unzip();
    loglog_fit(&xs, &ys).map_or(f64::NAN, |f| f.slope)
}

/// Builds the decay tables; slopes are fitted over positions `>= tail_from`
/// (1-based).
pub fn coefficient_decay_report(
    u: &SpectralVector,
    mu: &[f64],
    mass: &CsrMatrix,
    tail_from: usize,
) -> DecayReport {
    let eigenvector_norms = u.block_norms(mass);
    let eigenvalue_abs: Vec<f64> = mu.iter().map(|x| x.abs()).collect();
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    };
    let eigenvector_sorted = sorted(&eigenvector_norms);
    let eigenvalue_sorted = sorted(&eigenvalue_abs);
    DecayReport {
        eigenvector_slope: tail_slope(&eigenvector_norms, tail_from),
        eigenvector_sorted_slope: tail_slope(&eigenvector_sorted, tail_from),
        eigenvalue_slope: tail_slope(&eigenvalue_abs, tail_from),
        eigenvalue_sorted_slope: tail_slope(&eigenvalue_sorted, tail_from),
        eigenvector_norms,
        eigenvalue_abs,
        eigenvector_sorted,
        eigenvalue_sorted,
    }
}

/// Prolongates every block of a chaos solution from a coarse mesh to a
/// nested finer one.
pub fn prolongate_spectral(u: &SpectralVector, coarse: &Mesh, fine: &Mesh) -> SpectralVector {
    let p = u.stochastic_dim();
    let mut data = Vec::with_capacity(p * fine.dofs());
    for block in u.blocks() {
        data.extend(coarse.prolongate(block, fine));
    }
    SpectralVector::from_data(p, fine.dofs(), data).expect("block sizes match")
}

fn nth_prime(k: usize) -> u64 {
    let mut count = 0;
    let mut candidate = 1u64;
    loop {
        candidate += 1;
        if (2..candidate).take_while(|d| d * d <= candidate).all(|d| candidate % d != 0) {
            if count == k {
                return candidate;
            }
            count += 1;
        }
    }
}

/// Point `index` (starting at 1) of the Halton sequence in `dims`
/// dimensions, mapped to `[-1, 1]^dims`.
pub fn halton_point(index: u64, dims: usize) -> Vec<f64> {
    (0..dims)
        .map(|d| {
            let base = nth_prime(d);
            let (mut f, mut r, mut i) = (1.0, 0.0, index);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            2.0 * r - 1.0
        })
        .collect()
}

/// `count` Halton points, skipping the first `skip` ones.
pub fn halton_points(count: usize, dims: usize, skip: u64) -> Vec<Vec<f64>> {
    (0..count as u64).map(|k| halton_point(k + 1 + skip, dims)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Mesh;
    use core::f64::consts::PI;

    #[test]
    fn oracle_matches_dense_solver() {
        let mesh = Mesh::new(5, 1).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, 3).unwrap();
        let y = [0.4, -0.8, 0.2];
        let k = op.pointwise(&y);
        let (dense, _) = generalized_symmetric_eigen(&k.to_dense(), &op.mass().to_dense()).unwrap();
        let opts = EigenOptions { guard: 4, ..Default::default() };
        // N = 16 goes through the dense path; force the iterative path via a
        // larger mesh below
        let (vals, _, _) = generalized_eigensolve(&k, op.mass(), 3, &opts).unwrap();
        for i in 0..3 {
            assert!((vals[i] - dense[i]).abs() < 1e-10 * dense[i]);
        }
        let mesh = Mesh::new(10, 1).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, 3).unwrap();
        let k = op.pointwise(&y);
        let (dense, _) = generalized_symmetric_eigen(&k.to_dense(), &op.mass().to_dense()).unwrap();
        let sol = deterministic_eigensolve(&op, &y, 4).unwrap();
        assert!(sol.sweeps > 0);
        for i in 0..4 {
            assert!((sol.values[i] - dense[i]).abs() < 1e-10 * dense[i]);
        }
    }

    #[test]
    fn oracle_vectors_are_orthonormal_and_sign_fixed() {
        let mesh = Mesh::new(8, 2).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, 4).unwrap();
        let sol = deterministic_eigensolve(&op, &[0.0; 4], 4).unwrap();
        let m = op.mass();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m.inner(&sol.vectors[i], &sol.vectors[j]) - e).abs() < 1e-12);
            }
            let big = sol.vectors[i].iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
        // Laplace spectrum 2π², 5π², 5π², 8π²
        assert!((sol.values[0] / (PI * PI) - 2.0).abs() < 1e-3);
        assert!((sol.values[1] / (PI * PI) - 5.0).abs() < 1e-2);
        assert!((sol.values[2] - sol.values[1]).abs() < 1e-8 * sol.values[1]);
        assert!((sol.values[3] / (PI * PI) - 8.0).abs() < 2e-2);
    }

    #[test]
    fn statistics_of_known_samples() {
        let s = sample_statistics([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(sample_statistics([1.0]).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_error < 1e-14);
        let yy: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.4)).collect();
        assert!((loglog_fit(&x, &yy).unwrap().slope + 2.4).abs() < 1e-13);
    }

    #[test]
    fn halton_first_points() {
        let p = halton_point(1, 2);
        assert!((p[0] - 0.0).abs() < 1e-15); // 1/2 -> 0
        assert!((p[1] - (2.0 / 3.0 - 1.0)).abs() < 1e-15);
        assert_eq!(nth_prime(0), 2);
        assert_eq!(nth_prime(9), 29);
    }
}
