//! Construction of trace-criterion design instances from a random-field
//! interpolation model.
//!
//! The prediction error of a centered Gaussian field observed at candidate
//! points is approximated through a truncated eigenexpansion: the kernel
//! matrix on the candidate set is scaled by the uniform weights 1/p,
//! diagonalized, and the top-m eigenpairs define a Bayesian linear model
//! with heteroscedastic noise `sigma_i^2`. Its L-optimal design instance has
//! columns `a_i = Lambda^{1/2} phi_i / sigma_i`, target `K = Lambda^{1/2}`
//! and regularizer `1/n`.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use qdesign_core::{Design, ProblemInstance};

use crate::io::read_matrix_csv;
use crate::CliError;

/// Stationary covariance kernels; all equal one at distance zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Matern12,
    Matern32,
    Matern52,
    SqExp,
}

impl Kernel {
    /// gamma(s1, s2) as a function of theta * ||s1 - s2||.
    pub fn eval(self, theta: f64, dist: f64) -> f64 {
        let h = theta * dist;
        match self {
            Kernel::Matern12 => (-h).exp(),
            Kernel::Matern32 => (1.0 + h) * (-h).exp(),
            Kernel::Matern52 => (1.0 + h + h * h / 3.0) * (-h).exp(),
            Kernel::SqExp => (-0.5 * h * h).exp(),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "matern12" => Ok(Kernel::Matern12),
            "matern32" => Ok(Kernel::Matern32),
            "matern52" => Ok(Kernel::Matern52),
            "sqexp" => Ok(Kernel::SqExp),
            other => Err(format!("unknown kernel '{other}'")),
        }
    }
}

/// Where the candidate points come from.
#[derive(Debug, Clone)]
pub enum PointSource {
    /// Regular grid with this many points per axis on [0, 1]^d.
    Grid(usize),
    /// First `count` points of the built-in Halton low-discrepancy sequence.
    LowDisc(usize),
    /// Externally generated points, one row per point.
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ImseSpec {
    pub dim: usize,
    pub points: PointSource,
    pub theta: f64,
    pub kernel: Kernel,
    /// Spectral truncation level (the m of the design instance).
    pub m_trunc: usize,
    /// Observation budget; the regularizer is 1/n.
    pub n_budget: u64,
}

/// Generated instance plus the spectral metadata.
#[derive(Debug, Clone)]
pub struct ImseInstance {
    pub instance: ProblemInstance,
    /// Candidate points, p × d.
    pub points: DMatrix<f64>,
    /// Top-m eigenvalues in decreasing order.
    pub eigenvalues: DVector<f64>,
    /// Per-candidate residual noise variances.
    pub sigma2: DVector<f64>,
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut cand = 2u64;
    while primes.len() < n {
        if primes.iter().all(|&p| cand % p != 0) {
            primes.push(cand);
        }
        cand += 1;
    }
    primes
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut fraction = 1.0 / base as f64;
    while index > 0 {
        result += (index % base) as f64 * fraction;
        index /= base;
        fraction /= base as f64;
    }
    result
}

/// First `count` points of the Halton sequence in [0, 1]^dim.
pub fn halton_points(count: usize, dim: usize) -> DMatrix<f64> {
    let bases = first_primes(dim);
    DMatrix::from_fn(count, dim, |i, j| radical_inverse(i as u64 + 1, bases[j]))
}

fn grid_points(per_axis: usize, dim: usize) -> DMatrix<f64> {
    let coords: Vec<f64> = if per_axis == 1 {
        vec![0.5]
    } else {
        (0..per_axis).map(|i| i as f64 / (per_axis - 1) as f64).collect()
    };
    let p = per_axis.pow(dim as u32);
    DMatrix::from_fn(p, dim, |i, j| {
        let stride = per_axis.pow((dim - 1 - j) as u32);
        coords[(i / stride) % per_axis]
    })
}

fn candidate_points(spec: &ImseSpec) -> Result<DMatrix<f64>, CliError> {
    match &spec.points {
        PointSource::Grid(n) => {
            if *n == 0 {
                return Err(CliError::Usage("grid size must be positive".into()));
            }
            Ok(grid_points(*n, spec.dim))
        }
        PointSource::LowDisc(count) => {
            if *count == 0 {
                return Err(CliError::Usage("point count must be positive".into()));
            }
            Ok(halton_points(*count, spec.dim))
        }
        PointSource::File(path) => {
            let pts = read_matrix_csv(path)?;
            if pts.ncols() != spec.dim {
                return Err(CliError::Usage(format!(
                    "points file has {} columns, expected dim = {}",
                    pts.ncols(),
                    spec.dim
                )));
            }
            Ok(pts)
        }
    }
}

/// Builds the design instance approximating the integrated prediction error
/// on the candidate set.
pub fn gen_imse(spec: &ImseSpec) -> Result<ImseInstance, CliError> {
    if !(spec.theta > 0.0) {
        return Err(CliError::Usage(format!("theta must be positive, got {}", spec.theta)));
    }
    let points = candidate_points(spec)?;
    let p = points.nrows();
    if spec.m_trunc == 0 || spec.m_trunc >= p {
        return Err(CliError::Usage(format!(
            "truncation level m = {} must satisfy 0 < m < p = {p}",
            spec.m_trunc
        )));
    }
    let m = spec.m_trunc;

    // Kernel matrix and its uniform-measure scaling Gamma / p.
    let mut gamma = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let dist = (points.row(i) - points.row(j)).norm();
            let v = spec.kernel.eval(spec.theta, dist);
            gamma[(i, j)] = v;
            gamma[(j, i)] = v;
        }
    }
    let scaled = &gamma / p as f64;
    let eig = SymmetricEigen::new(scaled);

    // Top-m eigenpairs, decreasing.
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("finite"));
    let top = &order[..m];
    let lam_max = eig.eigenvalues[top[0]];
    if !(lam_max > 0.0) || eig.eigenvalues[top[m - 1]] <= 1e-14 * lam_max {
        return Err(CliError::Usage(format!(
            "kernel spectrum is numerically rank-deficient at truncation m = {m}"
        )));
    }
    let eigenvalues = DVector::from_iterator(m, top.iter().map(|&i| eig.eigenvalues[i]));

    // Phi rows: phi_i = sqrt(p) * U[i, top] (the D^{-1/2} scaling for the
    // uniform measure 1/p).
    let sqrt_p = (p as f64).sqrt();
    let phi = DMatrix::from_fn(p, m, |i, j| sqrt_p * eig.eigenvectors[(i, top[j])]);

    // Residual noise variances sigma_i^2 = gamma(s_i, s_i) - phi_i' Lam phi_i.
    let mut sigma2 = DVector::zeros(p);
    let mut degenerate = Vec::new();
    for i in 0..p {
        let mut explained = 0.0;
        for j in 0..m {
            explained += eigenvalues[j] * phi[(i, j)] * phi[(i, j)];
        }
        let s2 = gamma[(i, i)] - explained;
        if s2 <= 1e-12 {
            degenerate.push(i);
        }
        sigma2[i] = s2;
    }
    if !degenerate.is_empty() {
        return Err(CliError::TruncationDegenerate { indices: degenerate });
    }

    // a_i = Lambda^{1/2} phi_i / sigma_i; K = Lambda^{1/2}; lambda = 1/n.
    let sqrt_lam: Vec<f64> = eigenvalues.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(m, p, |j, i| sqrt_lam[j] * phi[(i, j)] / sigma2[i].sqrt());
    let k = DMatrix::from_diagonal(&DVector::from_column_slice(&sqrt_lam));
    let lambda = 1.0 / spec.n_budget as f64;
    let instance = ProblemInstance::l_case(a, k, lambda)?;

    Ok(ImseInstance { instance, points, eigenvalues, sigma2 })
}

/// `n * IMSE-hat(J)` for a uniform design on a size-n subset, evaluated
/// directly from the truncated model; equals `tr(C M(w)^{-1})` on the
/// generated instance.
pub fn imse_hat_times_n(imse: &ImseInstance, subset: &[usize], n_budget: u64) -> f64 {
    let m = imse.eigenvalues.len();
    let inst = &imse.instance;
    let mut info = DMatrix::zeros(m, m);
    for j in 0..m {
        info[(j, j)] = 1.0 / imse.eigenvalues[j];
    }
    for &i in subset {
        // phi_i / sigma_i recovered from the instance column a_i.
        let col = inst.a().column(i);
        for r in 0..m {
            for c in 0..m {
                info[(r, c)] += col[r] * col[c] / (imse.eigenvalues[r] * imse.eigenvalues[c]).sqrt();
            }
        }
    }
    n_budget as f64 * info.try_inverse().expect("positive definite").trace()
}
