//! Standardized problem instances, designs, the information matrix and the
//! design criterion `phi`.
//!
//! An instance holds the m×p feature matrix `A` (columns `a_i`), a target
//! (a vector `c` for the scalar criterion, an m×r matrix `K` for the trace
//! criterion) and the positive regularizer `lambda`. After the prior
//! reduction of [`prior_transform`] the information matrix of a design `w`
//! is `M(w) = A diag(w) A^T + lambda I`, and the criterion is
//! `phi(w) = c^T M^{-1} c` respectively `tr(K^T M^{-1} K)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance below which a design weight vector is renormalized instead of
/// rejected.
pub const DESIGN_RENORM_TOL: f64 = 1e-6;
/// Tolerance within which a design must sum to one.
pub const DESIGN_SUM_TOL: f64 = 1e-12;

/// Target of the design criterion: a vector for the scalar (c-) case, a
/// matrix for the trace (L-) case.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    C(DVector<f64>),
    K(DMatrix<f64>),
}

/// A standardized design/lasso problem: features, target and regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    /// Target stored as an m×r matrix; r = 1 in the c-case.
    target: DMatrix<f64>,
    c_case: bool,
    lambda: f64,
    /// Cached squared column norms of `a`.
    col_sq_norms: Vec<f64>,
}

impl ProblemInstance {
    /// Builds an instance from a feature matrix and a target.
    pub fn new(a: DMatrix<f64>, target: Target, lambda: f64) -> Result<Self> {
        let (target, c_case) = match target {
            Target::C(c) => {
                let m = c.len();
                (DMatrix::from_column_slice(m, 1, c.as_slice()), true)
            }
            Target::K(k) => (k, false),
        };
        Self::from_parts(a, target, c_case, lambda)
    }

    /// Builds a c-case instance (r = 1).
    pub fn c_case(a: DMatrix<f64>, c: DVector<f64>, lambda: f64) -> Result<Self> {
        Self::new(a, Target::C(c), lambda)
    }

    /// Builds an L-case instance with an m×r target matrix.
    pub fn l_case(a: DMatrix<f64>, k: DMatrix<f64>, lambda: f64) -> Result<Self> {
        Self::new(a, Target::K(k), lambda)
    }

    fn from_parts(a: DMatrix<f64>, target: DMatrix<f64>, c_case: bool, lambda: f64) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "feature matrix must have m >= 1 rows and p >= 1 columns".into(),
            ));
        }
        if target.ncols() == 0 {
            return Err(Error::DimensionMismatch("target must have r >= 1 columns".into()));
        }
        if target.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "target has {} rows, features have m = {}",
                target.nrows(),
                a.nrows()
            )));
        }
        if c_case && target.ncols() != 1 {
            return Err(Error::DimensionMismatch("c-case target must be a single column".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        if a.iter().any(|x| !x.is_finite()) || target.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry in instance data".into()));
        }
        let col_sq_norms = (0..a.ncols()).map(|i| a.column(i).norm_squared()).collect();
        Ok(Self { a, target, c_case, lambda, col_sq_norms })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn r(&self) -> usize {
        self.target.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Target as an m×r matrix (single column in the c-case).
    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    /// Target vector, for c-case instances.
    pub fn c(&self) -> Option<DVector<f64>> {
        (self.r() == 1).then(|| DVector::from_column_slice(self.target.as_slice()))
    }

    pub fn is_c_case(&self) -> bool {
        self.c_case
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Squared Euclidean norm of column `i`.
    pub fn col_sq_norm(&self, i: usize) -> f64 {
        self.col_sq_norms[i]
    }

    /// Restriction of the instance to the given candidate columns.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::DimensionMismatch("cannot restrict to an empty candidate set".into()));
        }
        let m = self.m();
        let mut a = DMatrix::zeros(m, keep.len());
        for (new_i, &old_i) in keep.iter().enumerate() {
            a.set_column(new_i, &self.a.column(old_i));
        }
        Self::from_parts(a, self.target.clone(), self.c_case, self.lambda)
    }

    /// `A^T Y` correlations collapsed to one value per candidate:
    /// `|a_i^T y|` in the c-case, `||Y^T a_i||` in the L-case.
    pub fn correlations(&self, y: &DMatrix<f64>) -> DVector<f64> {
        let g = self.a.tr_mul(y); // p×r
        DVector::from_iterator(self.p(), (0..self.p()).map(|i| row_norm(&g, i)))
    }
}

/// Euclidean norm of row `i` of a p×r matrix, specialised to `abs` for a
/// single column so the c-case and the r = 1 L-case agree bitwise.
pub(crate) fn row_norm(x: &DMatrix<f64>, i: usize) -> f64 {
    if x.ncols() == 1 {
        x[(i, 0)].abs()
    } else {
        x.row(i).norm()
    }
}

/// Sum of all row norms (the l1 norm for a single column).
pub(crate) fn sum_row_norms(x: &DMatrix<f64>) -> f64 {
    (0..x.nrows()).map(|i| row_norm(x, i)).sum()
}

/// Raw (pre-standardization) problem: Gaussian prior, noise variance and
/// observation budget.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub sigma: DMatrix<f64>,
    pub sigma2: f64,
    pub n: u64,
    pub a: DMatrix<f64>,
    pub target: Target,
}

impl PriorSpec {
    pub fn new(sigma: DMatrix<f64>, sigma2: f64, n: u64, a: DMatrix<f64>, target: Target) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "prior covariance is {}x{}, features have m = {}",
                sigma.nrows(),
                sigma.ncols(),
                a.nrows()
            )));
        }
        let asym = (&sigma - sigma.transpose()).norm();
        if asym > 1e-10 * (1.0 + sigma.norm()) {
            return Err(Error::InvalidParameter("prior covariance is not symmetric".into()));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("budget n must be at least 1".into()));
        }
        Ok(Self { sigma, sigma2, n, a, target })
    }
}

/// Standardizes a raw problem: features and target are premultiplied by the
/// symmetric square root of the prior covariance and the regularizer becomes
/// `sigma^2 / n`, after which the prior can be taken as the identity.
pub fn prior_transform(prior: &PriorSpec) -> Result<ProblemInstance> {
    let eig = SymmetricEigen::new(prior.sigma.clone());
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if !(max_eig > 0.0) || min_eig <= 1e-10 * max_eig {
        return Err(Error::PriorNotPd { min_eig, max_eig });
    }
    // Clamp tiny eigenvalues before the square root to guard roundoff.
    let floor = 1e-14 * max_eig;
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(floor).sqrt());
    let sqrt_sigma = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();

    let a = &sqrt_sigma * &prior.a;
    let lambda = prior.sigma2 / prior.n as f64;
    let target = match &prior.target {
        Target::C(c) => Target::C(&sqrt_sigma * c),
        Target::K(k) => Target::K(&sqrt_sigma * k),
    };
    ProblemInstance::new(a, target, lambda)
}

/// A weight vector on the probability simplex over candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    w: DVector<f64>,
}

impl Design {
    /// Validates and, if the sum is within `1e-6` of one, renormalizes.
    pub fn new(mut w: DVector<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidDesign("empty weight vector".into()));
        }
        for x in w.iter_mut() {
            if !x.is_finite() {
                return Err(Error::InvalidDesign("non-finite weight".into()));
            }
            if *x < 0.0 {
                if *x < -1e-12 {
                    return Err(Error::InvalidDesign(format!("negative weight {x}")));
                }
                *x = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > DESIGN_RENORM_TOL {
            return Err(Error::InvalidDesign(format!("weights sum to {sum}, expected 1")));
        }
        if (sum - 1.0).abs() > DESIGN_SUM_TOL {
            w /= sum;
        }
        Ok(Self { w })
    }

    /// Uniform design `w_i = 1/p`.
    pub fn uniform(p: usize) -> Self {
        Self { w: DVector::from_element(p, 1.0 / p as f64) }
    }

    /// Vertex design `e_i`.
    pub fn vertex(p: usize, i: usize) -> Self {
        let mut w = DVector::zeros(p);
        w[i] = 1.0;
        Self { w }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Indices with strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i).collect()
    }

    /// Embeds a design on a subset of candidates back into the full index
    /// space, with zeros elsewhere. `index_map[i]` is the original index of
    /// local candidate `i`.
    pub fn embed(&self, p_full: usize, index_map: &[usize]) -> Design {
        let mut w = DVector::zeros(p_full);
        for (local, &orig) in index_map.iter().enumerate() {
            w[orig] = self.w[local];
        }
        Design { w }
    }
}

/// Information matrix `M(w) = A diag(w) A^T + lambda I`.
pub fn information_matrix(inst: &ProblemInstance, design: &Design) -> Result<DMatrix<f64>> {
    if design.len() != inst.p() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} weights, instance has p = {}",
            design.len(),
            inst.p()
        )));
    }
    let m = inst.m();
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for (i, &wi) in design.weights().iter().enumerate() {
        if wi != 0.0 {
            let col = inst.a().column(i);
            mat.ger(wi, &col, &col, 1.0);
        }
    }
    for d in 0..m {
        mat[(d, d)] += inst.lambda();
    }
    Ok(mat)
}

/// Cholesky factor of an information matrix, reused for repeated solves.
pub struct InfoFactor {
    chol: Cholesky<f64, Dyn>,
}

impl InfoFactor {
    pub fn new(inst: &ProblemInstance, design: &Design) -> Result<Self> {
        let mat = information_matrix(inst, design)?;
        Self::from_matrix(mat)
    }

    pub fn from_matrix(mat: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(mat)
            .ok_or_else(|| Error::SolveFailure("information matrix is not positive definite".into()))?;
        Ok(Self { chol })
    }

    /// `M^{-1} B` for an m×k right-hand side.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vector(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }
}

/// Design criterion: `c^T M^{-1}(w) c` in the c-case,
/// `tr(K^T M^{-1}(w) K)` in the L-case. For r = 1 both coincide.
pub fn phi(inst: &ProblemInstance, design: &Design) -> Result<f64> {
    let factor = InfoFactor::new(inst, design)?;
    let z = factor.solve_matrix(inst.target());
    Ok(inst.target().dot(&z))
}
