//! Chaos tensors against exact polynomial integration.

use proptest::prelude::*;
use sgevp_core::galerkin::DeltaFactor;
use sgevp_core::legendre::{basis_values, evaluate_scalar, univariate_triple};
use sgevp_core::multiindex::{MultiIndex, MultiIndexSet, WeightSequence};
use sgevp_core::{MomentMatrices, TripleProductTensor};

/// Monomial coefficients of the normalized Legendre polynomials up to `max`.
fn legendre_monomials(max: usize) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
    for n in 1..max {
        // (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
        let mut next = vec![0.0; n + 2];
        for (k, c) in p[n].iter().enumerate() {
            next[k + 1] += (2 * n + 1) as f64 * c;
        }
        for (k, c) in p[n - 1].iter().enumerate() {
            next[k] -= n as f64 * c;
        }
        for c in next.iter_mut() {
            *c /= (n + 1) as f64;
        }
        p.push(next);
    }
    p.truncate(max + 1);
    p.iter()
        .enumerate()
        .map(|(n, c)| c.iter().map(|x| x * ((2 * n + 1) as f64).sqrt()).collect())
        .collect()
}

/// `(1/2) ∫_{-1}^{1} Π polys dx`, exact on monomials.
fn mean_of_product(polys: &[&[f64]]) -> f64 {
    let mut prod = vec![1.0];
    for p in polys {
        let mut next = vec![0.0; prod.len() + p.len() - 1];
        for (i, a) in prod.iter().enumerate() {
            for (j, b) in p.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        prod = next;
    }
    prod.iter().enumerate().filter(|(k, _)| k % 2 == 0).map(|(k, c)| c / (k + 1) as f64).sum()
}

fn triple_oracle(leg: &[Vec<f64>], a: &MultiIndex, b: &MultiIndex, c: &MultiIndex, dims: usize) -> f64 {
    (1..=dims)
        .map(|d| {
            let (i, j, k) = (a.get(d) as usize, b.get(d) as usize, c.get(d) as usize);
            mean_of_product(&[&leg[i], &leg[j], &leg[k]])
        })
        .product()
}

fn moment_oracle(leg: &[Vec<f64>], m: usize, b: &MultiIndex, c: &MultiIndex, dims: usize) -> f64 {
    let x = [0.0, 1.0];
    (1..=dims)
        .map(|d| {
            let (j, k) = (b.get(d) as usize, c.get(d) as usize);
            if d == m {
                mean_of_product(&[&x, &leg[j], &leg[k]])
            } else {
                mean_of_product(&[&leg[j], &leg[k]])
            }
        })
        .product()
}

fn check_against_oracle(set: &MultiIndexSet) -> Result<(), TestCaseError> {
    let dims = set.active_dimensions().max(1);
    let leg = legendre_monomials(3 * set.max_degree() as usize + 1);
    let tensor = TripleProductTensor::build(set);
    let moments = MomentMatrices::build(set);
    let p = set.len();
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                let want = triple_oracle(&leg, set.get(a), set.get(b), set.get(c), dims);
                let got = tensor.get(a, b, c);
                prop_assert!((got - want).abs() <= 1e-12, "G[{a}][{b},{c}] = {got}, oracle {want}");
            }
        }
    }
    for m in 1..=moments.terms() {
        let g = moments.to_dense(m);
        for b in 0..p {
            for c in 0..p {
                let want = moment_oracle(&leg, m, set.get(b), set.get(c), dims);
                prop_assert!((g[(b, c)] - want).abs() <= 1e-12);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tensors_match_exact_integration(varsigma in 1.5f64..4.0, target in 2usize..=12) {
        let set = MultiIndexSet::with_cardinality(WeightSequence::Decay { varsigma }, target).unwrap();
        check_against_oracle(&set)?;
    }

    #[test]
    fn geometric_sets_match_exact_integration(r in 0.2f64..0.7, eps in 0.02f64..0.3) {
        let set = MultiIndexSet::generate(WeightSequence::Geometric { ratio: r }, eps).unwrap();
        prop_assume!(set.len() <= 12);
        check_against_oracle(&set)?;
    }
}

#[test]
fn oracle_reproduces_closed_forms() {
    let leg = legendre_monomials(4);
    assert!((mean_of_product(&[&leg[1], &leg[1], &leg[2]]) - 2.0 / 5f64.sqrt()).abs() < 1e-14);
    assert!((univariate_triple(1, 1, 2) - 2.0 / 5f64.sqrt()).abs() < 1e-14);
    let x = [0.0, 1.0];
    assert!((mean_of_product(&[&x, &leg[0], &leg[1]]) - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    assert!((mean_of_product(&[&x, &leg[1], &leg[2]]) - 2.0 / 15f64.sqrt()).abs() < 1e-14);
}

#[test]
fn linear_expansion_evaluates_to_its_argument() {
    let set = MultiIndexSet::from_indices(vec![MultiIndex::zero(), MultiIndex::unit(1)]).unwrap();
    let coeffs = [0.0, 1.0 / 3f64.sqrt()];
    let v = evaluate_scalar(&coeffs, &set, &[0.3]).unwrap();
    assert!((v - 0.3).abs() < 1e-15);
}

#[test]
fn delta_spectrum_lies_in_range_of_expansion() {
    let set = MultiIndexSet::with_cardinality(WeightSequence::Decay { varsigma: 3.2 }, 6).unwrap();
    let dims = set.active_dimensions();
    let tensor = TripleProductTensor::build(&set);
    let s: Vec<f64> = (0..set.len()).map(|k| if k == 0 { 2.0 } else { 0.3 / (k as f64 + 1.0) }).collect();
    let delta = DeltaFactor::new(&tensor, &s).unwrap();
    let (values, _) = sgevp_core::dense::symmetric_eigen(delta.matrix());

    // tensor grid over the active dimensions
    let steps = 11usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let total = steps.pow(dims as u32);
    for idx in 0..total {
        let mut rest = idx;
        let y: Vec<f64> = (0..dims)
            .map(|_| {
                let i = rest % steps;
                rest /= steps;
                -1.0 + 2.0 * i as f64 / (steps - 1) as f64
            })
            .collect();
        let lambda = basis_values(&set, &y).unwrap();
        let v: f64 = lambda.iter().zip(&s).map(|(a, b)| a * b).sum();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    for v in values {
        assert!(v >= lo - 1e-6 && v <= hi + 1e-6, "{v} outside [{lo}, {hi}]");
    }
}
