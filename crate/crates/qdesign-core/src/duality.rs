//! Lasso points, primal/dual objectives, the mappings between designs and
//! lasso variables, optimality certificates and residuals.
//!
//! The primal objective is the quadratic lasso
//! `L(x) = ||Ax - c||^2 + lambda ||x||_1^2` (Frobenius norm and squared
//! l_{1,2} row-norm sum in the L-case); its dual is
//! `D(y) = ||c||^2 - ||y - c||^2 - ||A^T y||_inf^2 / lambda`
//! (with `max_i ||Y^T a_i||` replacing the sup-norm for matrices). There is
//! no duality gap, and any feasible pair yields a certified suboptimality
//! bound used by the screening rules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{row_norm, sum_row_norms, Design, InfoFactor, ProblemInstance};

/// Lasso variable: a vector of length p in the c-case, stored as a p×r
/// matrix so that both cases share one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    x: DMatrix<f64>,
}

impl PrimalPoint {
    pub fn from_vector(x: DVector<f64>) -> Self {
        let p = x.len();
        Self { x: DMatrix::from_column_slice(p, 1, x.as_slice()) }
    }

    pub fn from_matrix(x: DMatrix<f64>) -> Self {
        Self { x }
    }

    pub fn zeros(p: usize, r: usize) -> Self {
        Self { x: DMatrix::zeros(p, r) }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// The point as a vector, for r = 1.
    pub fn as_vector(&self) -> Option<DVector<f64>> {
        (self.x.ncols() == 1).then(|| DVector::from_column_slice(self.x.as_slice()))
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    /// Norm of row i (absolute value for r = 1).
    pub fn row_norm(&self, i: usize) -> f64 {
        row_norm(&self.x, i)
    }

    /// l1 norm of the vector, or sum of row norms of the matrix.
    pub fn l1_norm(&self) -> f64 {
        sum_row_norms(&self.x)
    }

    pub fn is_zero(&self) -> bool {
        self.x.iter().all(|&v| v == 0.0)
    }

    /// Indices of nonzero rows.
    pub fn support(&self) -> Vec<usize> {
        (0..self.p()).filter(|&i| self.row_norm(i) > 0.0).collect()
    }

    /// Embeds a point on a candidate subset back into the full index space.
    pub fn embed(&self, p_full: usize, index_map: &[usize]) -> PrimalPoint {
        let mut x = DMatrix::zeros(p_full, self.r());
        for (local, &orig) in index_map.iter().enumerate() {
            x.set_row(orig, &self.x.row(local));
        }
        PrimalPoint { x }
    }
}

/// Where a dual certificate was constructed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertSource {
    FromPrimal,
    FromDesign,
}

/// A dual point together with a certified bound on its suboptimality.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    /// m×r dual point (single column in the c-case).
    pub y: DMatrix<f64>,
    /// Certified bound on `D(y*) - D(y)`; nonnegative.
    pub eps: f64,
    pub source: CertSource,
}

/// Aggregated optimality diagnostics for a primal point.
#[derive(Debug, Clone)]
pub struct OptimalityReport {
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub kkt_residual: f64,
    pub delta: f64,
}

impl OptimalityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.gap <= tol && self.kkt_residual <= tol && self.delta <= tol
    }
}

fn check_shapes(inst: &ProblemInstance, x: &PrimalPoint) -> Result<()> {
    if x.p() != inst.p() || x.r() != inst.r() {
        return Err(Error::DimensionMismatch(format!(
            "primal point is {}x{}, instance needs {}x{}",
            x.p(),
            x.r(),
            inst.p(),
            inst.r()
        )));
    }
    Ok(())
}

/// Quadratic (group) lasso objective `||Ax - c||^2 + lambda ||x||_1^2`.
pub fn primal_objective(inst: &ProblemInstance, x: &PrimalPoint) -> Result<f64> {
    check_shapes(inst, x)?;
    let residual = inst.target() - inst.a() * x.as_matrix();
    let l1 = x.l1_norm();
    Ok(residual.norm_squared() + inst.lambda() * l1 * l1)
}

/// Dual objective `||c||^2 - ||y - c||^2 - max_i ||Y^T a_i||^2 / lambda`.
pub fn dual_objective(inst: &ProblemInstance, y: &DMatrix<f64>) -> Result<f64> {
    if y.nrows() != inst.m() || y.ncols() != inst.r() {
        return Err(Error::DimensionMismatch(format!(
            "dual point is {}x{}, instance needs {}x{}",
            y.nrows(),
            y.ncols(),
            inst.m(),
            inst.r()
        )));
    }
    let corr = inst.correlations(y);
    let vmax = corr.max();
    Ok(inst.target().norm_squared() - (y - inst.target()).norm_squared() - vmax * vmax / inst.lambda())
}

/// Design induced by a lasso point: `w_i = |x_i| / ||x||_1`
/// (row norms in the L-case). Undefined at x = 0.
pub fn hat_w(x: &PrimalPoint) -> Result<Design> {
    let total = x.l1_norm();
    if total <= 0.0 {
        return Err(Error::ZeroPrimalPoint);
    }
    let w = DVector::from_iterator(x.p(), (0..x.p()).map(|i| x.row_norm(i) / total));
    Design::new(w)
}

/// Lasso point induced by a design: `x_i = w_i a_i^T M^{-1}(w) c`
/// (rows `w_i a_i^T M^{-1}(w) K` in the L-case). Zero wherever `w_i = 0`.
pub fn hat_x(inst: &ProblemInstance, design: &Design) -> Result<PrimalPoint> {
    let factor = InfoFactor::new(inst, design)?;
    let z = factor.solve_matrix(inst.target()); // m×r
    let mut g = inst.a().tr_mul(&z); // p×r
    for (i, &wi) in design.weights().iter().enumerate() {
        let mut row = g.row_mut(i);
        row *= wi;
    }
    Ok(PrimalPoint::from_matrix(g))
}

/// Certificate from a primal point: `y = c - Ax`,
/// `eps = L(x) - D(y)` (an upper bound on the duality gap at x).
pub fn dual_certificate_from_primal(inst: &ProblemInstance, x: &PrimalPoint) -> Result<DualCertificate> {
    check_shapes(inst, x)?;
    let y = inst.target() - inst.a() * x.as_matrix();
    let eps = primal_objective(inst, x)? - dual_objective(inst, &y)?;
    Ok(DualCertificate { y, eps: eps.max(0.0), source: CertSource::FromPrimal })
}

/// Certificate from a design: `y = lambda M^{-1}(w) c`,
/// `eps = lambda phi(w) - D(y)`.
pub fn dual_certificate_from_design(inst: &ProblemInstance, design: &Design) -> Result<DualCertificate> {
    let factor = InfoFactor::new(inst, design)?;
    let z = factor.solve_matrix(inst.target());
    let phi = inst.target().dot(&z);
    let y = inst.lambda() * z;
    let eps = inst.lambda() * phi - dual_objective(inst, &y)?;
    Ok(DualCertificate { y, eps: eps.max(0.0), source: CertSource::FromDesign })
}

/// Residual of the primal-dual optimality system at `x` (with `y = c - Ax`):
/// zero exactly at quadratic-lasso optima.
pub fn kkt_residual(inst: &ProblemInstance, x: &PrimalPoint) -> Result<f64> {
    check_shapes(inst, x)?;
    let y = inst.target() - inst.a() * x.as_matrix();
    let g = inst.a().tr_mul(&y); // p×r, row i = a_i^T Y
    let t = x.l1_norm();
    let lam_t = inst.lambda() * t;

    let mut vmax = 0.0_f64;
    for i in 0..inst.p() {
        vmax = vmax.max(row_norm(&g, i));
    }
    let mut res = (vmax - lam_t).abs();
    for i in 0..inst.p() {
        let ni = x.row_norm(i);
        if ni > 0.0 {
            // active rows: a_i^T Y must align with lambda t * X_i / ||X_i||
            let diff = g.row(i) - (lam_t / ni) * x.as_matrix().row(i);
            let d = if inst.r() == 1 { diff[(0, 0)].abs() } else { diff.norm() };
            res = res.max(d);
        } else {
            res = res.max((row_norm(&g, i) - lam_t).max(0.0));
        }
    }
    Ok(res)
}

/// Design-side suboptimality
/// `delta = max_i c^T M^{-1} H_i M^{-1} c / (c^T M^{-1} c) - 1`
/// (trace form in the L-case); zero exactly at optimal designs.
pub fn design_delta(inst: &ProblemInstance, design: &Design) -> Result<f64> {
    let factor = InfoFactor::new(inst, design)?;
    let z = factor.solve_matrix(inst.target()); // m×r
    let denom = inst.target().dot(&z);
    if !(denom > 0.0) {
        return Err(Error::SolveFailure(format!("criterion value {denom} is not positive")));
    }
    let lam_zz = inst.lambda() * z.norm_squared();
    let g = inst.a().tr_mul(&z); // p×r
    let mut num_max = 0.0_f64;
    for i in 0..inst.p() {
        let ri = row_norm(&g, i);
        num_max = num_max.max(ri * ri + lam_zz);
    }
    Ok((num_max / denom - 1.0).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};
    use crate::problem::phi;

    fn two_axes(c: [f64; 2], lambda: f64) -> ProblemInstance {
        ProblemInstance::c_case(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![c[0], c[1]], lambda).unwrap()
    }

    /// m=2, p=2 orthonormal instance with c = (1, 2), lambda = 1. Hand KKT
    /// algebra gives x* = (0, 1), y* = (1, 1) and optimal value 3.
    fn solved_instance() -> (ProblemInstance, PrimalPoint, f64) {
        let inst = two_axes([1.0, 2.0], 1.0);
        (inst, PrimalPoint::from_vector(dvector![0.0, 1.0]), 3.0)
    }

    #[test]
    fn primal_objective_at_zero_is_target_norm() {
        let inst = two_axes([1.0, 2.0], 0.7);
        let x = PrimalPoint::zeros(2, 1);
        assert_abs_diff_eq!(primal_objective(&inst, &x).unwrap(), 5.0, epsilon = 1e-14);

        let inst_l =
            ProblemInstance::l_case(dmatrix![1.0, 0.0; 0.0, 1.0], dmatrix![1.0, 0.0; 1.0, 2.0], 0.7)
                .unwrap();
        let x0 = PrimalPoint::zeros(2, 2);
        assert_abs_diff_eq!(primal_objective(&inst_l, &x0).unwrap(), 6.0, epsilon = 1e-14);
    }

    #[test]
    fn single_candidate_ridge_value() {
        // p = 1: x = a^T c / (||a||^2 + lambda) attains
        // ||c||^2 - (a^T c)^2 / (||a||^2 + lambda).
        let a = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let c = dvector![0.3, 1.1, -0.4];
        let lambda = 0.6;
        let inst = ProblemInstance::c_case(a.clone(), c.clone(), lambda).unwrap();
        let atc = a.column(0).dot(&c);
        let nsq = a.column(0).norm_squared();
        let xstar = atc / (nsq + lambda);
        let x = PrimalPoint::from_vector(dvector![xstar]);
        let expected = c.norm_squared() - atc * atc / (nsq + lambda);
        assert_abs_diff_eq!(primal_objective(&inst, &x).unwrap(), expected, epsilon = 1e-14);
        // The same point is a quadratic-lasso optimum: both residual and gap vanish.
        assert!(kkt_residual(&inst, &x).unwrap() <= 1e-12);
        let y = inst.target() - inst.a() * x.as_matrix();
        assert_abs_diff_eq!(
            dual_objective(&inst, &y).unwrap(),
            primal_objective(&inst, &x).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dual_objective_substitutions() {
        let inst = two_axes([1.0, 2.0], 0.5);
        let zero = DMatrix::zeros(2, 1);
        assert_abs_diff_eq!(dual_objective(&inst, &zero).unwrap(), 0.0, epsilon = 1e-14);
        let c = inst.target().clone();
        // D(c) = ||c||^2 - ||A^T c||_inf^2 / lambda.
        assert_abs_diff_eq!(dual_objective(&inst, &c).unwrap(), 5.0 - 4.0 / 0.5, epsilon = 1e-14);
    }

    #[test]
    fn hat_w_examples() {
        let w = hat_w(&PrimalPoint::from_vector(dvector![2.0, -1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(w.weights(), &dvector![2.0 / 3.0, 1.0 / 3.0, 0.0], epsilon = 1e-15);

        let e2 = hat_w(&PrimalPoint::from_vector(dvector![0.0, 1.0, 0.0])).unwrap();
        assert_eq!(e2.weights(), &dvector![0.0, 1.0, 0.0]);

        let rows = PrimalPoint::from_matrix(dmatrix![3.0, 4.0; 0.0, 0.0]);
        let wl = hat_w(&rows).unwrap();
        assert_abs_diff_eq!(wl.weights(), &dvector![1.0, 0.0], epsilon = 1e-15);

        assert!(matches!(hat_w(&PrimalPoint::zeros(2, 1)), Err(Error::ZeroPrimalPoint)));
    }

    #[test]
    fn hat_x_vanishes_off_support_and_matches_ridge() {
        let a = dmatrix![1.0, 0.4; -2.0, 0.2; 0.5, -0.9];
        let c = dvector![0.3, 1.1, -0.4];
        let inst = ProblemInstance::c_case(a.clone(), c.clone(), 0.6).unwrap();
        let w = Design::vertex(2, 0);
        let x = hat_x(&inst, &w).unwrap();
        assert_eq!(x.as_matrix()[(1, 0)], 0.0);
        // Sherman-Morrison closed form on (a a^T + lambda I)^{-1}.
        let a0 = a.column(0);
        let expected = a0.dot(&c) / (a0.norm_squared() + 0.6);
        assert_abs_diff_eq!(x.as_matrix()[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn certificate_from_zero_point() {
        let inst = two_axes([1.0, 2.0], 0.5);
        let cert = dual_certificate_from_primal(&inst, &PrimalPoint::zeros(2, 1)).unwrap();
        assert_abs_diff_eq!(cert.y, inst.target().clone(), epsilon = 1e-15);
        assert_abs_diff_eq!(cert.eps, 4.0 / 0.5, epsilon = 1e-12);
    }

    #[test]
    fn design_and_primal_certificates_share_the_dual_point() {
        // y2(w) = y1(hat_x(w)) for any design.
        let a = dmatrix![
            0.3, -1.2, 0.4, 2.0;
            1.7, 0.2, -0.6, -0.3;
            -0.5, 0.9, 1.1, 0.8
        ];
        let inst = ProblemInstance::c_case(a, dvector![1.0, -1.0, 0.5], 0.8).unwrap();
        let w = Design::new(dvector![0.35, 0.15, 0.3, 0.2]).unwrap();
        let from_design = dual_certificate_from_design(&inst, &w).unwrap();
        let from_primal = dual_certificate_from_primal(&inst, &hat_x(&inst, &w).unwrap()).unwrap();
        assert_abs_diff_eq!(from_design.y, from_primal.y, epsilon = 1e-12);
    }

    #[test]
    fn certificates_vanish_at_the_optimum() {
        let (inst, xstar, value) = solved_instance();
        assert_abs_diff_eq!(primal_objective(&inst, &xstar).unwrap(), value, epsilon = 1e-14);
        let cp = dual_certificate_from_primal(&inst, &xstar).unwrap();
        assert!(cp.eps <= 1e-10);
        let cd = dual_certificate_from_design(&inst, &hat_w(&xstar).unwrap()).unwrap();
        assert!(cd.eps <= 1e-10);
        assert!(kkt_residual(&inst, &xstar).unwrap() <= 1e-12);
    }

    #[test]
    fn kkt_residual_at_zero() {
        let inst = two_axes([1.0, 2.0], 0.5);
        let res = kkt_residual(&inst, &PrimalPoint::zeros(2, 1)).unwrap();
        assert_abs_diff_eq!(res, 2.0, epsilon = 1e-15); // ||A^T c||_inf

        // Pathological A^T c = 0: x = 0 is optimal and the residual vanishes.
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let inst0 = ProblemInstance::c_case(a, dvector![0.0, 1.0], 0.5).unwrap();
        assert_eq!(kkt_residual(&inst0, &PrimalPoint::zeros(1, 1)).unwrap(), 0.0);
    }

    #[test]
    fn delta_zero_at_symmetric_optimum_positive_at_vertex() {
        let inst = two_axes([1.0, 1.0], 1.0);
        let uniform = Design::uniform(2);
        assert!(design_delta(&inst, &uniform).unwrap() <= 1e-14);
        let vertex = Design::vertex(2, 0);
        assert!(design_delta(&inst, &vertex).unwrap() > 0.1);
    }

    #[test]
    fn sandwich_inequality_holds() {
        // lambda phi(hat_w(x)) <= L(x) on a handful of points.
        let a = dmatrix![
            0.3, -1.2, 0.4;
            1.7, 0.2, -0.6
        ];
        let inst = ProblemInstance::c_case(a, dvector![1.0, -1.0], 0.7).unwrap();
        for xs in [
            dvector![1.0, 0.0, 0.0],
            dvector![0.2, -0.4, 0.6],
            dvector![-1.5, 2.5, 0.1],
        ] {
            let x = PrimalPoint::from_vector(xs);
            let lhs = inst.lambda() * phi(&inst, &hat_w(&x).unwrap()).unwrap();
            let rhs = primal_objective(&inst, &x).unwrap();
            assert!(lhs <= rhs + 1e-12, "sandwich violated: {lhs} > {rhs}");
        }
    }
}
