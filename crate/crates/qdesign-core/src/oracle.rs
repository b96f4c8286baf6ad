//! Brute-force solvers and checkers used to validate the other modules at
//! desk scale.
//!
//! `oracle_qlasso_signs` enumerates all sign patterns of the c-case lasso
//! solution and solves the stationarity system of each pattern directly;
//! `oracle_group_supports` does the analogous support enumeration for the
//! group case with a per-support Newton solve; `oracle_design_grid`
//! exhaustively scans the design simplex. All three are independent of the
//! iterative solvers they are used to test.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::duality::{
    design_delta, dual_certificate_from_design, dual_certificate_from_primal, dual_objective,
    hat_w, hat_x, kkt_residual, primal_objective, DualCertificate, OptimalityReport, PrimalPoint,
};
use crate::error::{Error, Result};
use crate::problem::{phi, Design, ProblemInstance};
use crate::synth;

/// How an oracle solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    SignEnum,
    GridSearch,
}

/// Certified brute-force solution.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: PrimalPoint,
    pub w: Design,
    /// Optimal quadratic-lasso value (= lambda * phi at the optimal design).
    pub value: f64,
    pub certificate: DualCertificate,
    pub method: OracleMethod,
    /// Set when `A^T c = 0`, in which case x = 0 and every design is optimal.
    pub pathological: bool,
}

const MAX_ENUM_P: usize = 12;

/// Exact c-case solution by enumeration of sign patterns.
///
/// For each pattern `sigma` with support S the stationarity system
/// `(A_S^T A_S + lambda sigma_S sigma_S^T) x_S = A_S^T c` is solved and the
/// candidate is kept if the signs are consistent and the off-support
/// inequalities hold.
pub fn oracle_qlasso_signs(inst: &ProblemInstance) -> Result<OracleSolution> {
    if inst.r() != 1 {
        return Err(Error::CCaseOnly(inst.r()));
    }
    let p = inst.p();
    if p > MAX_ENUM_P {
        return Err(Error::TooLargeForOracle(format!("p = {p} exceeds {MAX_ENUM_P} (3^p patterns)")));
    }
    let lambda = inst.lambda();
    let c = inst.c().expect("c-case");
    let gram = inst.a().tr_mul(inst.a()); // p×p
    let atc = inst.a().tr_mul(&c); // p×1
    let atc_max = atc.amax();

    if atc_max <= 1e-14 * (1.0 + c.norm()) {
        let x = PrimalPoint::zeros(p, 1);
        let certificate = dual_certificate_from_primal(inst, &x)?;
        return Ok(OracleSolution {
            x,
            w: Design::uniform(p),
            value: c.norm_squared(),
            certificate,
            method: OracleMethod::SignEnum,
            pathological: true,
        });
    }

    let kkt_tol = 1e-9 * (1.0 + atc_max);
    let mut best: Option<(f64, Vec<usize>, DVector<f64>)> = None;

    let total = 3usize.pow(p as u32);
    let mut signs = vec![0i8; p];
    for pattern in 1..total {
        let mut n = pattern;
        for s in signs.iter_mut() {
            *s = match n % 3 {
                0 => 0,
                1 => 1,
                _ => -1,
            };
            n /= 3;
        }
        let support: Vec<usize> = (0..p).filter(|&i| signs[i] != 0).collect();
        let s = support.len();

        let mut sys = DMatrix::<f64>::zeros(s, s);
        let mut rhs = DVector::<f64>::zeros(s);
        for (bi, &i) in support.iter().enumerate() {
            rhs[bi] = atc[i];
            for (bj, &j) in support.iter().enumerate() {
                sys[(bi, bj)] = gram[(i, j)] + lambda * f64::from(signs[i]) * f64::from(signs[j]);
            }
        }
        let Some(chol) = Cholesky::new(sys) else { continue };
        // Skip near-singular pattern systems; the optimum is found through
        // another pattern.
        let diag: Vec<f64> = (0..s).map(|i| chol.l_dirty()[(i, i)]).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if dmin <= 0.0 || (dmax / dmin) * (dmax / dmin) > 1e12 {
            continue;
        }
        let xs = chol.solve(&rhs);

        if support.iter().enumerate().any(|(bi, &i)| xs[bi] * f64::from(signs[i]) <= 0.0) {
            continue;
        }
        let l1: f64 = xs.iter().map(|v| v.abs()).sum();
        // Off-support inequalities |a_j^T y| <= lambda ||x||_1.
        let mut y = c.clone();
        for (bi, &i) in support.iter().enumerate() {
            y.axpy(-xs[bi], &inst.a().column(i).clone_owned(), 1.0);
        }
        let mut feasible = true;
        for j in 0..p {
            if signs[j] == 0 {
                let corr = inst.a().column(j).dot(&y).abs();
                if corr > lambda * l1 + kkt_tol {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let value = y.norm_squared() + lambda * l1 * l1;
        if best.as_ref().map_or(true, |(bv, _, _)| value < *bv) {
            best = Some((value, support, xs));
        }
    }

    let (value, support, xs) =
        best.ok_or_else(|| Error::SolveFailure("no consistent sign pattern found".into()))?;
    let mut x = DVector::zeros(p);
    for (bi, &i) in support.iter().enumerate() {
        x[i] = xs[bi];
    }
    let x = PrimalPoint::from_vector(x);
    let certificate = dual_certificate_from_primal(inst, &x)?;
    let w = hat_w(&x)?;
    Ok(OracleSolution { x, w, value, certificate, method: OracleMethod::SignEnum, pathological: false })
}

/// Exact group-case solution by support enumeration with a per-support
/// Newton solve on the smooth restriction, verified through the full KKT
/// system. Handles r = 1 as well, where it reduces to sign enumeration.
pub fn oracle_group_supports(inst: &ProblemInstance) -> Result<OracleSolution> {
    let p = inst.p();
    if p > MAX_ENUM_P {
        return Err(Error::TooLargeForOracle(format!("p = {p} exceeds {MAX_ENUM_P} (2^p supports)")));
    }
    let r = inst.r();
    let lambda = inst.lambda();
    let k = inst.target();
    let gram = inst.a().tr_mul(inst.a());
    let atk = inst.a().tr_mul(k); // p×r
    let corr_max = (0..p).map(|i| atk.row(i).norm()).fold(0.0, f64::max);

    if corr_max <= 1e-14 * (1.0 + k.norm()) {
        let x = PrimalPoint::zeros(p, r);
        let certificate = dual_certificate_from_primal(inst, &x)?;
        return Ok(OracleSolution {
            x,
            w: Design::uniform(p),
            value: k.norm_squared(),
            certificate,
            method: OracleMethod::SignEnum,
            pathological: true,
        });
    }

    let kkt_tol = 1e-8 * (1.0 + corr_max);
    let mut best: Option<(f64, Vec<usize>, DMatrix<f64>)> = None;

    for mask in 1u32..(1u32 << p) {
        let support: Vec<usize> = (0..p).filter(|&i| mask & (1 << i) != 0).collect();
        let s = support.len();
        let mut g_ss = DMatrix::<f64>::zeros(s, s);
        let mut h_s = DMatrix::<f64>::zeros(s, r);
        for (bi, &i) in support.iter().enumerate() {
            h_s.set_row(bi, &atk.row(i));
            for (bj, &j) in support.iter().enumerate() {
                g_ss[(bi, bj)] = gram[(i, j)];
            }
        }
        let Some(xs) = solve_support_newton(&g_ss, &h_s, lambda) else { continue };

        let row_norms: Vec<f64> = (0..s).map(|i| xs.row(i).norm()).collect();
        let t: f64 = row_norms.iter().sum();
        let min_norm = row_norms.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_norm <= 1e-10 * (1.0 + t) {
            continue; // a vanishing row belongs to a smaller support
        }
        // Off-support inequalities ||Y^T a_j|| <= lambda ||X||_{1,2}.
        let mut y = k.clone();
        for (bi, &i) in support.iter().enumerate() {
            let col = inst.a().column(i).clone_owned();
            let row = xs.row(bi).clone_owned();
            y.ger(-1.0, &col, &row.transpose(), 1.0);
        }
        let mut feasible = true;
        for j in 0..p {
            if mask & (1 << j) == 0 {
                let corr = y.tr_mul(&inst.a().column(j).clone_owned()).norm();
                if corr > lambda * t + kkt_tol {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let value = y.norm_squared() + lambda * t * t;
        if best.as_ref().map_or(true, |(bv, _, _)| value < *bv) {
            best = Some((value, support, xs));
        }
    }

    let (value, support, xs) =
        best.ok_or_else(|| Error::SolveFailure("no consistent support found".into()))?;
    let mut x = DMatrix::zeros(p, r);
    for (bi, &i) in support.iter().enumerate() {
        x.set_row(i, &xs.row(bi));
    }
    let x = PrimalPoint::from_matrix(x);
    let certificate = dual_certificate_from_primal(inst, &x)?;
    let w = hat_w(&x)?;
    Ok(OracleSolution { x, w, value, certificate, method: OracleMethod::SignEnum, pathological: false })
}

/// Minimizes `||A_S X - K||_F^2 + lambda (sum_i ||X_i||)^2` over the support,
/// assuming all rows stay nonzero: IRLS warm-up, then Newton with
/// backtracking on the stationarity system. Returns None when the iteration
/// collapses a row or fails to converge.
fn solve_support_newton(g_ss: &DMatrix<f64>, h_s: &DMatrix<f64>, lambda: f64) -> Option<DMatrix<f64>> {
    let s = g_ss.nrows();
    let r = h_s.ncols();
    let scale = 1.0 + h_s.norm();

    // Ridge warm start.
    let mut reg = g_ss.clone();
    for i in 0..s {
        reg[(i, i)] += lambda;
    }
    let mut x = Cholesky::new(reg)?.solve(h_s);

    // IRLS: majorize the squared row-norm sum at the current point.
    for _ in 0..100 {
        let norms: Vec<f64> = (0..s).map(|i| x.row(i).norm()).collect();
        let t: f64 = norms.iter().sum();
        if norms.iter().any(|&n| n <= 1e-300) {
            return None;
        }
        let mut sys = g_ss.clone();
        for i in 0..s {
            sys[(i, i)] += lambda * t / norms[i];
        }
        let x_new = Cholesky::new(sys)?.solve(h_s);
        let diff = (&x_new - &x).norm();
        x = x_new;
        if diff <= 1e-12 * scale {
            break;
        }
    }

    let objective = |x: &DMatrix<f64>| -> f64 {
        let t: f64 = (0..s).map(|i| x.row(i).norm()).sum();
        (x.tr_mul(&(g_ss * x))).trace() - 2.0 * x.dot(h_s) + lambda * t * t
    };
    let gradient = |x: &DMatrix<f64>| -> Option<DMatrix<f64>> {
        let t: f64 = (0..s).map(|i| x.row(i).norm()).sum();
        let mut grad = g_ss * x - h_s;
        for i in 0..s {
            let n = x.row(i).norm();
            if n <= 1e-300 {
                return None;
            }
            let mut row = grad.row_mut(i);
            row += (lambda * t / n) * x.row(i);
        }
        Some(grad)
    };

    // Newton polish on vec(X).
    for _ in 0..60 {
        let grad = gradient(&x)?;
        if grad.norm() <= 1e-13 * scale {
            return Some(x);
        }
        let norms: Vec<f64> = (0..s).map(|i| x.row(i).norm()).collect();
        let t: f64 = norms.iter().sum();
        let n_var = s * r;
        let mut jac = DMatrix::<f64>::zeros(n_var, n_var);
        // J[(i,a),(j,b)] = G[i,j] d_ab + lambda [u_i[a] u_j[b]
        //                  + d_ij (t/n_i)(d_ab - u_i[a] u_i[b])]
        for i in 0..s {
            for j in 0..s {
                for a in 0..r {
                    for b in 0..r {
                        let mut v = 0.0;
                        if a == b {
                            v += g_ss[(i, j)];
                        }
                        let uia = x[(i, a)] / norms[i];
                        let ujb = x[(j, b)] / norms[j];
                        v += lambda * uia * ujb;
                        if i == j {
                            let uib = x[(i, b)] / norms[i];
                            let delta = if a == b { 1.0 } else { 0.0 };
                            v += lambda * (t / norms[i]) * (delta - uia * uib);
                        }
                        jac[(i * r + a, j * r + b)] = v;
                    }
                }
            }
        }
        let grad_vec = DVector::from_iterator(n_var, (0..s).flat_map(|i| (0..r).map(move |a| (i, a))).map(|(i, a)| grad[(i, a)]));
        let step_vec = match Cholesky::new(jac) {
            Some(ch) => ch.solve(&grad_vec),
            None => return None,
        };
        let mut step = DMatrix::<f64>::zeros(s, r);
        for i in 0..s {
            for a in 0..r {
                step[(i, a)] = step_vec[i * r + a];
            }
        }
        // Backtracking line search on the objective.
        let f0 = objective(&x);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &x - alpha * &step;
            if (0..s).all(|i| cand.row(i).norm() > 1e-300) && objective(&cand) <= f0 + 1e-12 * scale {
                x = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return None;
        }
    }
    let grad = gradient(&x)?;
    (grad.norm() <= 1e-10 * scale).then_some(x)
}

/// Exhaustive scan of the design simplex on a grid of spacing
/// `1/resolution`, followed by 200 rounds of projected coordinate search
/// with shrinking step.
pub fn oracle_design_grid(inst: &ProblemInstance, resolution: usize) -> Result<OracleSolution> {
    let p = inst.p();
    if p > 4 {
        return Err(Error::TooLargeForOracle(format!("p = {p} exceeds 4 (simplex grid)")));
    }
    if resolution == 0 {
        return Err(Error::InvalidParameter("grid resolution must be positive".into()));
    }

    let mut best_w: Option<(f64, Vec<f64>)> = None;
    let mut counts = vec![0usize; p];
    enumerate_compositions(resolution, p, 0, &mut counts, &mut |counts| {
        let w = DVector::from_iterator(p, counts.iter().map(|&k| k as f64 / resolution as f64));
        if let Ok(design) = Design::new(w) {
            if let Ok(val) = phi(inst, &design) {
                if best_w.as_ref().map_or(true, |(bv, _)| val < *bv) {
                    best_w = Some((val, design.weights().iter().cloned().collect()));
                }
            }
        }
    });
    let (mut best_phi, mut w) =
        best_w.ok_or_else(|| Error::SolveFailure("empty simplex grid".into()))?;

    // Local refinement: move mass h between coordinate pairs, halving h when
    // no move improves.
    let mut h = 1.0 / resolution as f64;
    for _ in 0..200 {
        let mut improved = false;
        for i in 0..p {
            for j in 0..p {
                if i == j || w[i] < h {
                    continue;
                }
                let mut cand = w.clone();
                cand[i] -= h;
                cand[j] += h;
                let design = Design::new(DVector::from_column_slice(&cand))?;
                let val = phi(inst, &design)?;
                if val < best_phi - 1e-15 * (1.0 + best_phi.abs()) {
                    best_phi = val;
                    w = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }

    let design = Design::new(DVector::from_column_slice(&w))?;
    let x = hat_x(inst, &design)?;
    let certificate = dual_certificate_from_design(inst, &design)?;
    Ok(OracleSolution {
        x,
        w: design,
        value: inst.lambda() * best_phi,
        certificate,
        method: OracleMethod::GridSearch,
        pathological: false,
    })
}

fn enumerate_compositions(
    remaining: usize,
    parts: usize,
    idx: usize,
    counts: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if idx == parts - 1 {
        counts[idx] = remaining;
        f(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        enumerate_compositions(remaining - k, parts, idx + 1, counts, f);
    }
}

/// Aggregates duality gap, KKT residual and design suboptimality of a
/// candidate point; all three must be below `tol` for an optimum.
pub fn verify_optimal_pair(inst: &ProblemInstance, x: &PrimalPoint, _tol: f64) -> Result<OptimalityReport> {
    let primal_value = primal_objective(inst, x)?;
    let y = inst.target() - inst.a() * x.as_matrix();
    let dual_value = dual_objective(inst, &y)?;
    let gap = (primal_value - dual_value).max(0.0);
    let kkt = kkt_residual(inst, x)?;
    let delta = match hat_w(x) {
        Ok(w) => design_delta(inst, &w)?,
        Err(Error::ZeroPrimalPoint) => {
            let corr = inst.correlations(inst.target()).max();
            if corr <= 1e-12 * (1.0 + inst.target().norm()) {
                0.0 // pathological case: every design is optimal
            } else {
                f64::INFINITY
            }
        }
        Err(e) => return Err(e),
    };
    Ok(OptimalityReport { primal_value, dual_value, gap, kkt_residual: kkt, delta })
}

/// Outcome of the equivalence-theorem checks.
#[derive(Debug, Clone)]
pub struct MappingReport {
    /// max |lambda phi(hat_w(x*)) - L(x*)| relative error.
    pub value_chain_err: f64,
    /// |L(hat_x(w*)) - L(x*)| relative error.
    pub hat_x_err: f64,
    /// max over random designs of ||y1(hat_x(w)) - y2(w)||.
    pub lemma_err: f64,
    /// ||(c - A x*) - lambda M^{-1}(hat_w(x*)) c||.
    pub dual_formula_err: f64,
    pub pathological: bool,
    pub pass: bool,
}

/// Checks the equivalence between the lasso and design formulations on one
/// instance: value chain, optimality of `hat_x(w*)`, the identity
/// `y1(hat_x(w)) = y2(w)` on random designs, and the closed form of the
/// dual optimum.
pub fn verify_mappings(inst: &ProblemInstance, tol: f64) -> Result<MappingReport> {
    let mut rng = synth::rng(0x51_6d_61_70);
    let scale_y = 1.0 + inst.target().norm();

    // (c) Lemma: y1(hat_x(w)) = y2(w) for random designs.
    let mut lemma_err = 0.0_f64;
    for _ in 0..20 {
        let raw: Vec<f64> = (0..inst.p()).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let total: f64 = raw.iter().sum();
        let w = Design::new(DVector::from_iterator(inst.p(), raw.iter().map(|v| v / total)))?;
        let y2 = dual_certificate_from_design(inst, &w)?.y;
        let y1 = inst.target() - inst.a() * hat_x(inst, &w)?.as_matrix();
        lemma_err = lemma_err.max((y1 - y2).norm());
    }

    let corr = inst.correlations(inst.target()).max();
    if corr <= 1e-12 * scale_y {
        // Pathological branch: x* = 0 and every design is optimal; both sides
        // of the value chain equal ||c||^2.
        let norm2 = inst.target().norm_squared();
        let w = Design::uniform(inst.p());
        let value_chain_err = (inst.lambda() * phi(inst, &w)? - norm2).abs() / (1.0 + norm2);
        let hat_x_err = (primal_objective(inst, &hat_x(inst, &w)?)? - norm2).abs() / (1.0 + norm2);
        let y2 = dual_certificate_from_design(inst, &w)?.y;
        let dual_formula_err = (inst.target() - y2).norm();
        let pass = value_chain_err <= tol && hat_x_err <= tol && lemma_err <= tol * scale_y
            && dual_formula_err <= tol * scale_y;
        return Ok(MappingReport {
            value_chain_err,
            hat_x_err,
            lemma_err,
            dual_formula_err,
            pathological: true,
            pass,
        });
    }

    let oracle = if inst.r() == 1 { oracle_qlasso_signs(inst)? } else { oracle_group_supports(inst)? };
    let lstar = oracle.value;
    let scale = 1.0 + lstar.abs();
    let wstar = hat_w(&oracle.x)?;

    // (a) lambda phi(hat_w(x*)) = L(x*).
    let value_chain_err = (inst.lambda() * phi(inst, &wstar)? - lstar).abs() / scale;
    // (b) L(hat_x(w*)) = L(x*).
    let hat_x_err = (primal_objective(inst, &hat_x(inst, &wstar)?)? - lstar).abs() / scale;
    // (d) y* = lambda M^{-1}(hat_w(x*)) c.
    let y_star = inst.target() - inst.a() * oracle.x.as_matrix();
    let y2 = dual_certificate_from_design(inst, &wstar)?.y;
    let dual_formula_err = (y_star - y2).norm();

    let pass = value_chain_err <= tol
        && hat_x_err <= tol
        && lemma_err <= tol * scale_y
        && dual_formula_err <= tol * scale_y;
    Ok(MappingReport { value_chain_err, hat_x_err, lemma_err, dual_formula_err, pathological: false, pass })
}
