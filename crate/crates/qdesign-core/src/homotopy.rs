//! Exact piecewise-linear regularization path of the standard lasso and its
//! reparametrization solving the quadratic lasso (and hence the c-optimal
//! design problem) in a finite number of steps.
//!
//! The path tracks the active set `J` and signs of the standard-lasso
//! solution while the penalty `alpha` decreases from `||A^T c||_inf` to
//! zero; between breakpoints `x*(alpha)` is affine. Each breakpoint maps to
//! `lambda_k = alpha_k / ||x_k||_1`, which decreases along the path, and for
//! any `lambda` in a segment the quadratic-lasso solution is an explicit
//! convex combination of the two bracketing breakpoints — exact up to
//! linear-algebra roundoff.

use std::collections::HashSet;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::duality::{hat_w, PrimalPoint};
use crate::error::{Error, Result};
use crate::problem::{Design, ProblemInstance};

/// One breakpoint of the path. `active_set` and `signs` describe the
/// segment below `alpha` (down to the next breakpoint).
#[derive(Debug, Clone)]
pub struct Breakpoint {
    pub alpha: f64,
    pub x: DVector<f64>,
    /// `alpha / ||x||_1`, infinite at the first breakpoint.
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub signs: Vec<i8>,
}

/// Why path construction stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The target lambda fell inside the last computed segment.
    ReachedLambda,
    /// alpha reached zero: the full path was computed.
    ReachedZero,
    /// Anti-cycling or conditioning guard fired.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct HomotopyPath {
    pub breakpoints: Vec<Breakpoint>,
    pub termination: Termination,
}

impl HomotopyPath {
    /// Index `k` such that `lambda` lies in `[lambda_{k+1}, lambda_k)`.
    fn segment_for(&self, lambda: f64) -> Option<usize> {
        let n = self.breakpoints.len();
        for k in 0..n.saturating_sub(1) {
            let hi = self.breakpoints[k].lambda;
            let lo = self.breakpoints[k + 1].lambda;
            if lambda < hi && lambda >= lo {
                return Some(k);
            }
        }
        None
    }
}

/// Result of [`solve_homotopy`]: an exact quadratic-lasso solution and the
/// matching design.
#[derive(Debug, Clone)]
pub struct HomotopySolution {
    pub x: PrimalPoint,
    pub w: Design,
    /// Set when `A^T c = 0`: x = 0 and every design is optimal.
    pub pathological: bool,
}

/// Inverse of the active Gram matrix, maintained by rank-one updates with
/// periodic refactorization.
struct GramInverse<'a> {
    a: &'a DMatrix<f64>,
    inv: DMatrix<f64>,
    updates_since_refactor: usize,
}

impl<'a> GramInverse<'a> {
    fn new(a: &'a DMatrix<f64>, j0: usize) -> Result<Self> {
        let nsq = a.column(j0).norm_squared();
        if nsq <= 0.0 {
            return Err(Error::SolveFailure("active column has zero norm".into()));
        }
        Ok(Self { a, inv: DMatrix::from_element(1, 1, 1.0 / nsq), updates_since_refactor: 0 })
    }

    /// Appends column `j` (new last position of the active set).
    /// Returns false when the extended Gram matrix is numerically singular.
    fn push(&mut self, active: &[usize], j: usize) -> Result<bool> {
        let s = active.len();
        let aj = self.a.column(j);
        let mut b = DVector::zeros(s);
        for (bi, &i) in active.iter().enumerate() {
            b[bi] = self.a.column(i).dot(&aj);
        }
        let beta = aj.norm_squared();
        let gb = &self.inv * &b;
        let schur = beta - b.dot(&gb);
        if schur <= 1e-10 * beta {
            return Ok(false);
        }
        let mut next = DMatrix::zeros(s + 1, s + 1);
        next.view_mut((0, 0), (s, s)).copy_from(&self.inv);
        next.view_mut((0, 0), (s, s)).ger(1.0 / schur, &gb, &gb, 1.0);
        for i in 0..s {
            next[(i, s)] = -gb[i] / schur;
            next[(s, i)] = -gb[i] / schur;
        }
        next[(s, s)] = 1.0 / schur;
        self.inv = next;
        self.bump(active, Some(j))?;
        Ok(true)
    }

    /// Removes the entry at `pos` in the active set.
    fn remove(&mut self, active: &[usize], pos: usize) -> Result<()> {
        let s = self.inv.nrows();
        let g = self.inv[(pos, pos)];
        let mut next = DMatrix::zeros(s - 1, s - 1);
        let map = |i: usize| if i < pos { i } else { i + 1 };
        for i in 0..s - 1 {
            for j in 0..s - 1 {
                let (oi, oj) = (map(i), map(j));
                next[(i, j)] = self.inv[(oi, oj)] - self.inv[(oi, pos)] * self.inv[(pos, oj)] / g;
            }
        }
        self.inv = next;
        self.bump(active, None)?;
        Ok(())
    }

    fn bump(&mut self, active: &[usize], pending: Option<usize>) -> Result<()> {
        self.updates_since_refactor += 1;
        if self.updates_since_refactor >= 50 {
            let mut members: Vec<usize> = active.to_vec();
            if let Some(j) = pending {
                members.push(j);
            }
            self.refactor(&members)?;
        }
        Ok(())
    }

    /// Rebuilds the inverse from scratch and checks conditioning.
    fn refactor(&mut self, active: &[usize]) -> Result<()> {
        let s = active.len();
        let mut gram = DMatrix::zeros(s, s);
        for (bi, &i) in active.iter().enumerate() {
            for (bj, &j) in active.iter().enumerate() {
                gram[(bi, bj)] = self.a.column(i).dot(&self.a.column(j));
            }
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::SolveFailure("active Gram matrix lost positive definiteness".into()))?;
        let diag: Vec<f64> = (0..s).map(|i| chol.l_dirty()[(i, i)]).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if dmin <= 0.0 || (dmax / dmin).powi(2) > 1e12 {
            return Err(Error::SolveFailure("active Gram matrix condition estimate exceeded 1e12".into()));
        }
        self.inv = chol.inverse();
        self.updates_since_refactor = 0;
        Ok(())
    }
}

enum Event {
    Entry { j: usize, sign: i8 },
    Exit { pos: usize },
}

/// Computes the standard-lasso path from `alpha_1 = ||A^T c||_inf` down to
/// the breakpoint below `lambda_target` (use 0 for the full path).
pub fn lasso_path(inst: &ProblemInstance, lambda_target: f64) -> Result<HomotopyPath> {
    if inst.r() != 1 {
        return Err(Error::CCaseOnly(inst.r()));
    }
    if !(lambda_target >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda target must be nonnegative, got {lambda_target}")));
    }
    let p = inst.p();
    let a = inst.a();
    let c = inst.c().expect("c-case");
    let atc = a.tr_mul(&c);
    let alpha1 = atc.amax();
    if alpha1 <= 1e-14 * (1.0 + c.norm()) {
        return Err(Error::PathologicalInstance);
    }

    // Smallest index attaining the maximal correlation.
    let j0 = (0..p)
        .find(|&j| atc[j].abs() >= alpha1 * (1.0 - 1e-12))
        .expect("a maximizer exists");
    let mut active: Vec<usize> = vec![j0];
    let mut signs: Vec<i8> = vec![if atc[j0] >= 0.0 { 1 } else { -1 }];
    let mut gram_inv = GramInverse::new(a, j0)?;

    let mut breakpoints = vec![Breakpoint {
        alpha: alpha1,
        x: DVector::zeros(p),
        lambda: f64::INFINITY,
        active_set: active.clone(),
        signs: signs.clone(),
    }];
    let mut visited: HashSet<Vec<(usize, i8)>> = HashSet::new();
    visited.insert(face_key(&active, &signs));
    let mut zero_progress = 0usize;
    let alpha_guard = 1e-15 * alpha1;

    loop {
        let prev = breakpoints.last().expect("at least one breakpoint");
        let alpha_k = prev.alpha;
        let s = active.len();

        // xi_J(alpha) = u - alpha d on the active set.
        let mut atc_j = DVector::zeros(s);
        let mut eps_j = DVector::zeros(s);
        for (bi, &i) in active.iter().enumerate() {
            atc_j[bi] = atc[i];
            eps_j[bi] = f64::from(signs[bi]);
        }
        let u = &gram_inv.inv * &atc_j;
        let d = &gram_inv.inv * &eps_j;

        // Residual pieces: c - A_J u and A_J d.
        let mut r_fix = c.clone();
        let mut r_dir = DVector::zeros(inst.m());
        for (bi, &i) in active.iter().enumerate() {
            r_fix.axpy(-u[bi], &a.column(i).clone_owned(), 1.0);
            r_dir.axpy(d[bi], &a.column(i).clone_owned(), 1.0);
        }
        let q = a.tr_mul(&r_fix); // q_j + alpha s_j = a_j^T residual(alpha)
        let sv = a.tr_mul(&r_dir);

        // Candidate events strictly inside (0, alpha_k): the lower guard
        // discards roundoff solutions of near-degenerate equations, the
        // upper one re-detections of the current event. On an interpolating
        // face (c - A_J u = 0, e.g. once the active columns span the whole
        // space) the off-support correlations are exactly proportional to
        // alpha, so entry events cannot occur at all.
        let upper = alpha_k - alpha_guard;
        let interpolating = r_fix.norm() <= 1e-12 * (1.0 + c.norm());
        let mut candidates: Vec<(f64, Event)> = Vec::new();
        if !interpolating {
            for j in 0..p {
                if active.contains(&j) {
                    continue;
                }
                // |a_j^T (c - A_J xi_J(alpha))| = alpha, one linear equation per sign.
                let denom_pos = 1.0 - sv[j];
                if denom_pos.abs() > 1e-14 {
                    let cand = q[j] / denom_pos;
                    if cand > alpha_guard && cand < upper {
                        candidates.push((cand, Event::Entry { j, sign: 1 }));
                    }
                }
                let denom_neg = 1.0 + sv[j];
                if denom_neg.abs() > 1e-14 {
                    let cand = -q[j] / denom_neg;
                    if cand > alpha_guard && cand < upper {
                        candidates.push((cand, Event::Entry { j, sign: -1 }));
                    }
                }
            }
        }
        for pos in 0..s {
            if d[pos].abs() > 1e-300 {
                let cand = u[pos] / d[pos];
                if cand > alpha_guard && cand < upper {
                    candidates.push((cand, Event::Exit { pos }));
                }
            }
        }

        if candidates.is_empty() {
            // No event left: the face stays optimal down to alpha = 0.
            let mut x_new = DVector::zeros(p);
            for (bi, &i) in active.iter().enumerate() {
                x_new[i] = u[bi];
            }
            let l1: f64 = x_new.iter().map(|v| v.abs()).sum();
            breakpoints.push(Breakpoint {
                alpha: 0.0,
                x: x_new,
                lambda: if l1 > 0.0 { 0.0 } else { f64::INFINITY },
                active_set: active.clone(),
                signs: signs.clone(),
            });
            return Ok(HomotopyPath { breakpoints, termination: Termination::ReachedZero });
        }

        // Walk candidates from the largest alpha down, breaking ties (within
        // 1e-12 relative) towards the smallest index. Candidates leading to
        // an already-visited face or to a singular active Gram matrix are
        // roundoff re-detections of past events and are skipped: the
        // anti-cycling rule.
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).expect("finite event values").then_with(|| {
                let idx = |e: &Event| match e {
                    Event::Entry { j, .. } => *j,
                    Event::Exit { pos } => active[*pos],
                };
                idx(&a.1).cmp(&idx(&b.1))
            })
        });
        // Regroup exact ties by index inside each 1e-12 window.
        let mut ordered: Vec<(f64, Event)> = Vec::with_capacity(candidates.len());
        {
            let mut rest = candidates;
            while !rest.is_empty() {
                let head = rest[0].0;
                let tol = 1e-12 * head.max(alpha_guard);
                let split = rest.iter().position(|(a, _)| *a < head - tol).unwrap_or(rest.len());
                let mut group: Vec<(f64, Event)> = rest.drain(..split).collect();
                group.sort_by_key(|(_, e)| match e {
                    Event::Entry { j, .. } => *j,
                    Event::Exit { pos } => active[*pos],
                });
                ordered.extend(group);
            }
        }

        let mut applied = None;
        // Skips above this level are roundoff re-detections of the event
        // that produced the current breakpoint (their face is the previous,
        // already-visited one); skips below it indicate genuine degeneracy.
        let redetect_level = alpha_k * (1.0 - 1e-7);
        let mut skipped_genuine = false;
        for (alpha_cand, event) in ordered {
            let (mut new_active, mut new_signs) = (active.clone(), signs.clone());
            match &event {
                Event::Entry { j, sign } => {
                    new_active.push(*j);
                    new_signs.push(*sign);
                }
                Event::Exit { pos } => {
                    new_active.remove(*pos);
                    new_signs.remove(*pos);
                }
            }
            let key = face_key(&new_active, &new_signs);
            if visited.contains(&key) {
                skipped_genuine |= alpha_cand < redetect_level;
                continue;
            }
            if let Event::Entry { j, .. } = &event {
                if !gram_inv.push(&active, *j)? {
                    skipped_genuine |= alpha_cand < redetect_level;
                    continue; // numerically dependent column
                }
            } else if let Event::Exit { pos } = &event {
                gram_inv.remove(&active, *pos)?;
            }
            visited.insert(key);
            applied = Some((alpha_cand, new_active, new_signs));
            break;
        }
        let Some((alpha_new, new_active, new_signs)) = applied else {
            if skipped_genuine {
                return Ok(HomotopyPath { breakpoints, termination: Termination::Degenerate });
            }
            // Only re-detections remained: the face is optimal down to 0.
            let mut x_new = DVector::zeros(p);
            for (bi, &i) in active.iter().enumerate() {
                x_new[i] = u[bi];
            }
            let l1: f64 = x_new.iter().map(|v| v.abs()).sum();
            breakpoints.push(Breakpoint {
                alpha: 0.0,
                x: x_new,
                lambda: if l1 > 0.0 { 0.0 } else { f64::INFINITY },
                active_set: active.clone(),
                signs: signs.clone(),
            });
            return Ok(HomotopyPath { breakpoints, termination: Termination::ReachedZero });
        };

        // x at the event, still expressed through the segment's active set.
        // A coordinate leaving the active set is exactly zero there; snap it
        // so the stored breakpoint carries no roundoff remnant.
        let mut x_new = DVector::zeros(p);
        for (bi, &i) in active.iter().enumerate() {
            x_new[i] = u[bi] - alpha_new * d[bi];
        }
        for &i in &active {
            if !new_active.contains(&i) {
                x_new[i] = 0.0;
            }
        }
        let l1: f64 = x_new.iter().map(|v| v.abs()).sum();
        let lambda_new = if l1 > 0.0 { alpha_new / l1 } else { f64::INFINITY };
        active = new_active;
        signs = new_signs;

        if alpha_k - alpha_new < alpha_guard {
            zero_progress += 1;
            if zero_progress > 3 * p {
                return Ok(HomotopyPath { breakpoints, termination: Termination::Degenerate });
            }
        } else {
            zero_progress = 0;
        }

        breakpoints.push(Breakpoint {
            alpha: alpha_new,
            x: x_new,
            lambda: lambda_new,
            active_set: active.clone(),
            signs: signs.clone(),
        });

        if lambda_new <= lambda_target {
            return Ok(HomotopyPath { breakpoints, termination: Termination::ReachedLambda });
        }
        if alpha_new <= 0.0 {
            return Ok(HomotopyPath { breakpoints, termination: Termination::ReachedZero });
        }
        if breakpoints.len() > 100_000 {
            return Ok(HomotopyPath { breakpoints, termination: Termination::Degenerate });
        }
    }
}

fn face_key(active: &[usize], signs: &[i8]) -> Vec<(usize, i8)> {
    let mut key: Vec<(usize, i8)> = active.iter().cloned().zip(signs.iter().cloned()).collect();
    key.sort_unstable();
    key
}

/// Interpolates the quadratic-lasso solution at `lambda` inside the segment
/// `[lambda_{k+1}, lambda_k)` of a computed path.
fn interpolate_segment(path: &HomotopyPath, lambda: f64) -> Result<(usize, DVector<f64>)> {
    let Some(k) = path.segment_for(lambda) else {
        let last = path.breakpoints.last().map_or(f64::INFINITY, |b| b.lambda);
        return Err(Error::PathTooShort(lambda, last));
    };
    let bk = &path.breakpoints[k];
    let bk1 = &path.breakpoints[k + 1];
    let l1_k: f64 = bk.x.iter().map(|v| v.abs()).sum();
    let l1_k1: f64 = bk1.x.iter().map(|v| v.abs()).sum();
    let coef_next = bk.alpha - lambda * l1_k;
    let coef_prev = lambda * l1_k1 - bk1.alpha;
    let denom = bk.alpha - bk1.alpha + lambda * (l1_k1 - l1_k);
    let x = (coef_next * &bk1.x + coef_prev * &bk.x) / denom;
    Ok((k, x))
}

/// Exact quadratic-lasso solution (and c-optimal design) at `lambda`,
/// obtained from the lasso path by the reparametrization formula.
pub fn solve_homotopy(inst: &ProblemInstance, lambda: f64) -> Result<HomotopySolution> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let path = match lasso_path(inst, lambda) {
        Ok(path) => path,
        Err(Error::PathologicalInstance) => {
            return Ok(HomotopySolution {
                x: PrimalPoint::zeros(inst.p(), 1),
                w: Design::uniform(inst.p()),
                pathological: true,
            });
        }
        Err(e) => return Err(e),
    };
    let (_, x) = interpolate_segment(&path, lambda)?;
    let x = PrimalPoint::from_vector(x);
    let w = hat_w(&x)?;
    Ok(HomotopySolution { x, w, pathological: false })
}

/// Optimal design at `lambda` directly from the breakpoint data, without
/// forming x first; valid because no coordinate changes sign inside a
/// segment.
pub fn segment_weights(path: &HomotopyPath, lambda: f64) -> Result<Design> {
    let Some(k) = path.segment_for(lambda) else {
        let last = path.breakpoints.last().map_or(f64::INFINITY, |b| b.lambda);
        return Err(Error::PathTooShort(lambda, last));
    };
    let bk = &path.breakpoints[k];
    let bk1 = &path.breakpoints[k + 1];
    let l1_k: f64 = bk.x.iter().map(|v| v.abs()).sum();
    let l1_k1: f64 = bk1.x.iter().map(|v| v.abs()).sum();
    let coef_next = bk.alpha - lambda * l1_k;
    let coef_prev = lambda * l1_k1 - bk1.alpha;
    let denom = bk.alpha * l1_k1 - bk1.alpha * l1_k;
    let p = bk.x.len();
    let w = DVector::from_fn(p, |i, _| {
        (coef_next * bk1.x[i].abs() + coef_prev * bk.x[i].abs()) / denom
    });
    Design::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{kkt_residual, primal_objective};
    use crate::oracle::oracle_qlasso_signs;
    use crate::problem::phi;
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix};

    /// Standard-lasso KKT system at a breakpoint.
    fn lasso_kkt_residual(inst: &ProblemInstance, bp: &Breakpoint) -> f64 {
        let c = inst.c().unwrap();
        let y = &c - inst.a() * &bp.x;
        let corr = inst.a().tr_mul(&y);
        let mut res = 0.0_f64;
        for j in 0..inst.p() {
            if let Some(pos) = bp.active_set.iter().position(|&i| i == j) {
                res = res.max((corr[j] - bp.alpha * f64::from(bp.signs[pos])).abs());
            } else {
                res = res.max((corr[j].abs() - bp.alpha).max(0.0));
            }
        }
        res
    }

    #[test]
    fn initialization_matches_the_maximal_correlation() {
        let inst = synth::random_instance(3, 4, 6, 1, 0.5);
        let path = lasso_path(&inst, 0.0).unwrap();
        let first = &path.breakpoints[0];
        let atc = inst.a().tr_mul(&inst.c().unwrap());
        assert_abs_diff_eq!(first.alpha, atc.amax(), epsilon = 1e-14);
        assert!(first.x.iter().all(|&v| v == 0.0));
        let j0 = first.active_set[0];
        assert_abs_diff_eq!(atc[j0].abs(), atc.amax(), epsilon = 1e-12);
    }

    #[test]
    fn single_candidate_path_has_two_breakpoints() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let c = dvector![0.3, 1.1, -0.4];
        let inst = ProblemInstance::c_case(a.clone(), c.clone(), 1.0).unwrap();
        let path = lasso_path(&inst, 0.0).unwrap();
        assert_eq!(path.breakpoints.len(), 2);
        assert_eq!(path.termination, Termination::ReachedZero);
        let last = &path.breakpoints[1];
        assert_eq!(last.alpha, 0.0);
        let expected = a.column(0).dot(&c) / a.column(0).norm_squared();
        assert_abs_diff_eq!(last.x[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn orthonormal_columns_enter_by_sorted_correlation() {
        let a = DMatrix::identity(3, 3);
        let c = dvector![0.5, -2.0, 1.25];
        let inst = ProblemInstance::c_case(a, c, 1.0).unwrap();
        let path = lasso_path(&inst, 0.0).unwrap();
        // Breakpoints at the sorted magnitudes 2.0 > 1.25 > 0.5, then 0.
        let alphas: Vec<f64> = path.breakpoints.iter().map(|b| b.alpha).collect();
        assert_eq!(alphas.len(), 4);
        assert_abs_diff_eq!(alphas[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(alphas[1], 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(alphas[2], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(alphas[3], 0.0, epsilon = 1e-12);
        let order: Vec<usize> = path.breakpoints[2].active_set.clone();
        assert_eq!(order, vec![1, 2, 0]);
    }

    #[test]
    fn pathological_instance_is_flagged() {
        let inst = synth::random_pathological_instance(5, 5, 2, 0.5);
        assert!(matches!(lasso_path(&inst, 0.0), Err(Error::PathologicalInstance)));
        let sol = solve_homotopy(&inst, 0.5).unwrap();
        assert!(sol.pathological);
        assert!(sol.x.is_zero());
        assert_abs_diff_eq!(sol.w.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn breakpoints_satisfy_the_standard_lasso_kkt_system() {
        for seed in 0..6u64 {
            let inst = synth::random_instance(900 + seed, 5, 8, 1, 0.1);
            let path = lasso_path(&inst, 0.0).unwrap();
            let alpha1 = path.breakpoints[0].alpha;
            for bp in &path.breakpoints {
                assert!(
                    lasso_kkt_residual(&inst, bp) <= 1e-9 * (1.0 + alpha1),
                    "seed {seed}, alpha {}",
                    bp.alpha
                );
            }
        }
    }

    #[test]
    fn path_is_strictly_monotone() {
        let inst = synth::random_instance(11, 5, 10, 1, 0.3);
        let path = lasso_path(&inst, 0.0).unwrap();
        for pair in path.breakpoints.windows(2) {
            assert!(pair[1].alpha < pair[0].alpha);
            assert!(pair[1].lambda < pair[0].lambda);
            let l1_prev: f64 = pair[0].x.iter().map(|v| v.abs()).sum();
            let l1_next: f64 = pair[1].x.iter().map(|v| v.abs()).sum();
            assert!(l1_next >= l1_prev - 1e-12);
            // Sign stability inside a segment.
            for i in 0..inst.p() {
                assert!(pair[0].x[i] * pair[1].x[i] >= -1e-12);
            }
        }
    }

    #[test]
    fn single_candidate_interpolation_reproduces_the_ridge_solution() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let c = dvector![0.3, 1.1, -0.4];
        let inst = ProblemInstance::c_case(a.clone(), c.clone(), 1.0).unwrap();
        for lambda in [0.05, 0.5, 5.0, 500.0] {
            let mut local = inst.clone();
            if lambda != local.lambda() {
                local = ProblemInstance::c_case(a.clone(), c.clone(), lambda).unwrap();
            }
            let sol = solve_homotopy(&local, lambda).unwrap();
            let expected = a.column(0).dot(&c) / (a.column(0).norm_squared() + lambda);
            assert_abs_diff_eq!(sol.x.as_matrix()[(0, 0)], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn large_lambda_solution_shrinks_to_zero() {
        let inst = synth::random_instance(13, 4, 6, 1, 1.0);
        let mut norms = Vec::new();
        for lambda in [1.0, 100.0, 10_000.0] {
            let inst_l = ProblemInstance::c_case(inst.a().clone(), inst.c().unwrap(), lambda).unwrap();
            let sol = solve_homotopy(&inst_l, lambda).unwrap();
            norms.push(sol.x.l1_norm());
        }
        assert!(norms[1] < norms[0] && norms[2] < norms[1]);
        assert!(norms[2] < 1e-3);
    }

    #[test]
    fn homotopy_matches_the_sign_oracle() {
        for seed in 0..8u64 {
            let lambda = [0.1, 1.0, 10.0][(seed % 3) as usize];
            let inst = synth::random_instance(950 + seed, 4, 7, 1, lambda);
            let oracle = oracle_qlasso_signs(&inst).unwrap();
            let sol = solve_homotopy(&inst, lambda).unwrap();
            let val = primal_objective(&inst, &sol.x).unwrap();
            assert_abs_diff_eq!(val, oracle.value, epsilon = 1e-9 * (1.0 + oracle.value));
            assert!(kkt_residual(&inst, &sol.x).unwrap() <= 1e-9 * (1.0 + oracle.value));
            // Value chain through the design side.
            let chained = inst.lambda() * phi(&inst, &sol.w).unwrap();
            assert_abs_diff_eq!(chained, val, epsilon = 1e-9 * (1.0 + val));
        }
    }

    #[test]
    fn breakpoints_solve_the_quadratic_lasso_at_their_lambda() {
        let inst = synth::random_instance(17, 4, 6, 1, 1.0);
        let path = lasso_path(&inst, 0.0).unwrap();
        for bp in &path.breakpoints {
            if bp.lambda.is_finite() && bp.lambda > 0.0 {
                let inst_k =
                    ProblemInstance::c_case(inst.a().clone(), inst.c().unwrap(), bp.lambda).unwrap();
                let res = kkt_residual(&inst_k, &PrimalPoint::from_vector(bp.x.clone())).unwrap();
                assert!(res <= 1e-9 * (1.0 + bp.alpha), "residual {res} at lambda {}", bp.lambda);
            }
        }
    }

    #[test]
    fn segment_weights_agree_with_hat_w_of_the_solution() {
        let inst = synth::random_instance(19, 4, 8, 1, 0.5);
        let path = lasso_path(&inst, 0.0).unwrap();
        // Interior lambdas of a few segments plus both endpoints.
        for k in 0..path.breakpoints.len() - 1 {
            let hi = path.breakpoints[k].lambda;
            let lo = path.breakpoints[k + 1].lambda;
            if !(lo.is_finite() && lo > 0.0) {
                continue;
            }
            let mid = if hi.is_finite() { 0.5 * (hi + lo) } else { lo * 2.0 };
            for lambda in [lo, mid] {
                let w_direct = segment_weights(&path, lambda).unwrap();
                let inst_l =
                    ProblemInstance::c_case(inst.a().clone(), inst.c().unwrap(), lambda).unwrap();
                let sol = solve_homotopy(&inst_l, lambda).unwrap();
                for i in 0..inst.p() {
                    assert_abs_diff_eq!(
                        w_direct.weights()[i],
                        sol.w.weights()[i],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn lambda_outside_the_computed_path_is_reported() {
        let inst = synth::random_instance(23, 4, 6, 1, 1.0);
        // Path computed only down to lambda = 1: far smaller lambdas are out.
        let path = lasso_path(&inst, 1.0).unwrap();
        let last = path.breakpoints.last().unwrap().lambda;
        if last > 0.0 {
            assert!(matches!(
                segment_weights(&path, last * 1e-6),
                Err(Error::PathTooShort(_, _))
            ));
        }
    }
}
