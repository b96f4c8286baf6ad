//! Safe elimination tests.
//!
//! Every rule reduces to the base test: given a dual point `y` whose
//! suboptimality is certified by `eps`, a candidate with
//! `D0(a_i) = ||A^T y||_inf - |a_i^T y| - sqrt(eps (||a_i||^2 + lambda)) > 0`
//! carries zero weight in every optimal design and can be dropped. `D1`
//! plugs in the certificate built from a primal point, `D2` the one built
//! from a design, and `B` is the same design-side test expressed directly
//! in terms of the information matrix.

use nalgebra::{DMatrix, DVector};

use crate::duality::{
    dual_certificate_from_design, dual_certificate_from_primal, hat_w, DualCertificate,
    PrimalPoint,
};
use crate::error::{Error, Result};
use crate::problem::{Design, InfoFactor, ProblemInstance};

/// Relative tolerance under which a candidate counts as tied with the
/// maximal correlation and is never eliminated.
const TIE_REL_TOL: f64 = 1e-12;

/// Which elimination test produced a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    D0,
    D1,
    D2,
    B,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Rule::D0 => "d0",
            Rule::D1 => "d1",
            Rule::D2 => "d2",
            Rule::B => "b",
        };
        f.write_str(s)
    }
}

/// Outcome of one elimination test over the current candidate set.
#[derive(Debug, Clone)]
pub struct ScreeningMask {
    /// `eliminated[i]` refers to candidate `i` of the tested instance.
    pub eliminated: Vec<bool>,
    pub rule: Rule,
    /// Suboptimality bound used by the test.
    pub eps_used: f64,
    /// Original indices of the surviving candidates (identity numbering for
    /// a mask produced on a full instance).
    pub index_map: Vec<usize>,
    /// Per-candidate test values; candidate i is eliminated iff positive
    /// (up to the tie guard at the maximal correlation).
    pub values: Vec<f64>,
}

impl ScreeningMask {
    fn from_tests(rule: Rule, eps: f64, values: Vec<f64>, tied: &[bool]) -> Self {
        let eliminated: Vec<bool> =
            values.iter().zip(tied).map(|(&v, &t)| v > 0.0 && !t).collect();
        let index_map = eliminated
            .iter()
            .enumerate()
            .filter(|(_, &e)| !e)
            .map(|(i, _)| i)
            .collect();
        Self { eliminated, rule, eps_used: eps, index_map, values }
    }

    pub fn eliminated_count(&self) -> usize {
        self.eliminated.iter().filter(|&&e| e).count()
    }

    /// Rewrites the index map through the numbering of a parent instance,
    /// so reports stay in original indices across screening rounds.
    pub fn with_parent_indices(mut self, parent: &[usize]) -> Self {
        self.index_map = self.index_map.iter().map(|&i| parent[i]).collect();
        self
    }
}

/// Base rule: eliminate every candidate with `D0(a_i; y, eps) > 0`.
pub fn screen_d0(inst: &ProblemInstance, cert: &DualCertificate) -> Result<ScreeningMask> {
    screen_with_certificate(inst, cert, Rule::D0)
}

fn screen_with_certificate(
    inst: &ProblemInstance,
    cert: &DualCertificate,
    rule: Rule,
) -> Result<ScreeningMask> {
    if cert.eps < 0.0 {
        return Err(Error::InvalidCertificate(cert.eps));
    }
    if cert.y.nrows() != inst.m() || cert.y.ncols() != inst.r() {
        return Err(Error::DimensionMismatch(format!(
            "certificate is {}x{}, instance needs {}x{}",
            cert.y.nrows(),
            cert.y.ncols(),
            inst.m(),
            inst.r()
        )));
    }
    let eps = cert.eps.max(0.0);
    let corr = inst.correlations(&cert.y);
    let vmax = corr.max();
    let lambda = inst.lambda();
    let p = inst.p();
    let mut values = Vec::with_capacity(p);
    let mut tied = Vec::with_capacity(p);
    for i in 0..p {
        values.push(vmax - corr[i] - (eps * (inst.col_sq_norm(i) + lambda)).sqrt());
        tied.push(corr[i] >= vmax * (1.0 - TIE_REL_TOL));
    }
    Ok(ScreeningMask::from_tests(rule, eps, values, &tied))
}

/// Primal-point rule: `D0` fed with the certificate `y = c - Ax`,
/// `eps = L(x) - D(y)`. One `A^T (c - Ax)` product dominates the cost.
pub fn screen_d1(inst: &ProblemInstance, x: &PrimalPoint) -> Result<ScreeningMask> {
    let cert = dual_certificate_from_primal(inst, x)?;
    screen_with_certificate(inst, &cert, Rule::D1)
}

/// Design-path rule evaluated at `hat_w(x)`: `D0` fed with
/// `y = lambda M^{-1}(hat_w(x)) c` and the design-side gap bound.
pub fn screen_d2(inst: &ProblemInstance, x: &PrimalPoint) -> Result<ScreeningMask> {
    let w = hat_w(x)?; // ZeroPrimalPoint for x = 0
    screen_d2_design(inst, &w)
}

/// Design form of the `D2` rule.
pub fn screen_d2_design(inst: &ProblemInstance, design: &Design) -> Result<ScreeningMask> {
    let cert = dual_certificate_from_design(inst, design)?;
    screen_with_certificate(inst, &cert, Rule::D2)
}

/// Per-candidate bound `B(M(w), H_i)` together with its mask
/// (`lambda * B_i` equals the design form of `D2` exactly). All quantities
/// come from a single factorization of `M(w)`.
pub fn bound_b(inst: &ProblemInstance, design: &Design) -> Result<(DVector<f64>, ScreeningMask)> {
    let factor = InfoFactor::new(inst, design)?;
    let z = factor.solve_matrix(inst.target()); // M^{-1} K
    let z2 = factor.solve_matrix(&z); // M^{-2} K
    let phi = inst.target().dot(&z);
    if !(phi > 0.0) {
        return Err(Error::SolveFailure(format!("criterion value {phi} is not positive")));
    }
    let lambda = inst.lambda();
    let trace_m2 = inst.target().dot(&z2); // tr(K^T M^{-2} K)
    let g = inst.a().tr_mul(&z); // p×r, row i = a_i^T M^{-1} K
    let p = inst.p();

    let corr: Vec<f64> = (0..p).map(|i| crate::problem::row_norm(&g, i)).collect();
    let corr_max = corr.iter().cloned().fold(0.0, f64::max);
    let lam_zz = lambda * z.norm_squared();
    let delta = ((0..p)
        .map(|i| corr[i] * corr[i] + lam_zz)
        .fold(0.0, f64::max)
        / phi
        - 1.0)
        .max(0.0);

    let head = ((1.0 + delta) * phi - lambda * trace_m2).max(0.0).sqrt();
    let mut values = Vec::with_capacity(p);
    let mut tied = Vec::with_capacity(p);
    for i in 0..p {
        let mid = (delta * phi * (1.0 + inst.col_sq_norm(i) / lambda)).max(0.0).sqrt();
        values.push(head - mid - corr[i]);
        tied.push(corr[i] >= corr_max * (1.0 - TIE_REL_TOL));
    }
    let eps = lambda * delta * phi; // design-side gap bound, for the record
    let b_values = DVector::from_column_slice(&values);
    Ok((b_values, ScreeningMask::from_tests(Rule::B, eps, values, &tied)))
}

/// Largest correlation `||Z^T a||` over the Frobenius ball of radius `R`
/// around `Y`, together with the matrix attaining it:
/// `sup = ||Y^T a|| + R ||a||`, reached at
/// `Z* = Y + R a a^T Y / (||a|| ||Y^T a||)`.
pub fn sup_ball_correlation(
    y: &DMatrix<f64>,
    a: &DVector<f64>,
    radius: f64,
) -> Result<(f64, DMatrix<f64>)> {
    if a.len() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, matrix has {} rows",
            a.len(),
            y.nrows()
        )));
    }
    if !(radius >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be nonnegative, got {radius}")));
    }
    let a_norm = a.norm();
    if a_norm == 0.0 {
        return Ok((0.0, y.clone()));
    }
    let yta = y.tr_mul(a); // r×1
    let yta_norm = yta.norm();
    let value = yta_norm + radius * a_norm;
    if radius == 0.0 {
        return Ok((value, y.clone()));
    }
    let maximizer = if yta_norm > 0.0 {
        let mut z = y.clone();
        // Z* = Y + R a (Y^T a)^T / (||a|| ||Y^T a||)
        z.ger(radius / (a_norm * yta_norm), a, &yta, 1.0);
        z
    } else {
        // Any unit direction works when Y^T a = 0; take e_1.
        let mut u = DVector::zeros(y.ncols());
        u[0] = 1.0;
        let mut z = y.clone();
        z.ger(radius / a_norm, a, &u, 1.0);
        z
    };
    Ok((value, maximizer))
}
