//! Seeded synthetic instances for tests, verification and benches.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::problem::ProblemInstance;

/// Deterministic RNG for a given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random instance with standard normal entries; r = 1 yields a c-case
/// instance, r > 1 an L-case one.
pub fn random_instance(seed: u64, m: usize, p: usize, r: usize, lambda: f64) -> ProblemInstance {
    let mut rng = rng(seed);
    let a = randn_matrix(&mut rng, m, p);
    if r == 1 {
        let c = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        ProblemInstance::c_case(a, c, lambda).expect("random instance is valid")
    } else {
        let k = randn_matrix(&mut rng, m, r);
        ProblemInstance::l_case(a, k, lambda).expect("random instance is valid")
    }
}

/// Random instance with unit-norm columns and unit-norm target, the setup
/// used for the large synthetic runs.
pub fn random_normalized_instance(seed: u64, m: usize, p: usize, lambda: f64) -> ProblemInstance {
    let mut rng = rng(seed);
    let mut a = randn_matrix(&mut rng, m, p);
    for i in 0..p {
        let n = a.column(i).norm();
        if n > 0.0 {
            let mut col = a.column_mut(i);
            col /= n;
        }
    }
    let mut c = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = c.norm();
    if n > 0.0 {
        c /= n;
    }
    ProblemInstance::c_case(a, c, lambda).expect("random instance is valid")
}

/// Random pathological c-case instance with `A^T c = 0`: the target is the
/// component of a random vector orthogonal to the column span (needs p < m).
pub fn random_pathological_instance(seed: u64, m: usize, p: usize, lambda: f64) -> ProblemInstance {
    assert!(p < m, "orthogonal target needs p < m");
    let mut rng = rng(seed);
    let a = randn_matrix(&mut rng, m, p);
    // Project a random vector onto the orthogonal complement of span(A).
    let mut c = DVector::<f64>::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.clone().qr();
    let q = qr.q();
    for j in 0..q.ncols() {
        let qj = q.column(j).clone_owned();
        let proj = qj.dot(&c);
        c -= proj * qj;
    }
    // One more pass for numerical orthogonality.
    for j in 0..q.ncols() {
        let qj = q.column(j).clone_owned();
        let proj = qj.dot(&c);
        c -= proj * qj;
    }
    let n = c.norm();
    assert!(n > 1e-8, "random vector degenerate against column span");
    c /= n;
    ProblemInstance::c_case(a, c, lambda).expect("pathological instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pathological_instance_has_zero_correlations() {
        let inst = random_pathological_instance(7, 5, 3, 0.5);
        let corr = inst.a().tr_mul(inst.target());
        assert!(corr.amax() < 1e-12);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = random_instance(42, 3, 5, 1, 0.5);
        let b = random_instance(42, 3, 5, 1, 0.5);
        assert_eq!(a.a(), b.a());
        assert_eq!(a.target(), b.target());
    }
}
