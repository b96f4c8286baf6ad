//! Iterative solvers and the periodic-screening driver.
//!
//! Coordinate descent and FISTA iterate on the lasso variable and stop on
//! the duality gap; multiplicative weight updates and Frank-Wolfe iterate
//! on design weights and stop on the design suboptimality `delta`. All four
//! run inside one driver that can apply a screening rule every `tau`
//! iterations, permanently dropping eliminated candidates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::duality::{design_delta, dual_objective, hat_w, hat_x, PrimalPoint};
use crate::error::{Error, Result};
use crate::problem::{row_norm, Design, InfoFactor, ProblemInstance};
use crate::screening::{bound_b, screen_d1, screen_d2_design, ScreeningMask};

/// Solver selector for the screening driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Cd,
    Mwu,
    Fista,
    Fw,
}

impl Algo {
    pub fn is_primal(self) -> bool {
        matches!(self, Algo::Cd | Algo::Fista)
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algo::Cd => "cd",
            Algo::Mwu => "mwu",
            Algo::Fista => "fista",
            Algo::Fw => "fw",
        };
        f.write_str(s)
    }
}

/// Screening rule applied by the driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScreenRule {
    #[default]
    None,
    D0,
    D1,
    D2,
    B,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stop when the duality gap (primal algorithms) or delta (design
    /// algorithms) falls below this value.
    pub tol: f64,
    pub max_iters: usize,
    pub screen_rule: ScreenRule,
    /// Apply the rule every `screen_period` iterations.
    pub screen_period: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100_000, screen_rule: ScreenRule::None, screen_period: 10, seed: 0 }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.screen_period == 0 {
            return Err(Error::InvalidParameter("screen period must be at least 1".into()));
        }
        Ok(())
    }
}

/// One trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Objective value: the lasso objective for primal algorithms,
    /// `lambda * phi(w)` for design algorithms.
    pub value: f64,
    /// Duality gap or delta, whichever the algorithm stops on.
    pub gap_or_delta: f64,
    pub surviving: usize,
    pub elapsed_s: f64,
}

/// Consumer of trace rows, fed one record per iteration.
pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord);
}

impl<F: FnMut(&TraceRecord)> TraceSink for F {
    fn record(&mut self, rec: &TraceRecord) {
        self(rec)
    }
}

/// Full run history.
#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Candidate count of the full instance, for elimination fractions.
    pub p_total: usize,
}

impl SolverTrace {
    /// Eliminated fraction at record `i`.
    pub fn rho(&self, i: usize) -> f64 {
        1.0 - self.records[i].surviving as f64 / self.p_total as f64
    }

    /// Pseudo-iteration counter `sum_k (1 - rho(k))`, which weights each
    /// iteration by the surviving fraction it had to process.
    pub fn pseudo_iterations(&self) -> f64 {
        self.records.iter().map(|r| r.surviving as f64 / self.p_total as f64).sum()
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_value(&self) -> Option<f64> {
        self.records.last().map(|r| r.value)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| r.gap_or_delta)
    }
}

/// Result of a run: a lasso point for primal algorithms, a design for
/// design-side ones (both in the full candidate numbering).
#[derive(Debug, Clone)]
pub enum Solution {
    Primal(PrimalPoint),
    DesignPoint(Design),
}

impl Solution {
    pub fn as_primal(&self) -> Option<&PrimalPoint> {
        match self {
            Solution::Primal(x) => Some(x),
            Solution::DesignPoint(_) => None,
        }
    }

    pub fn as_design(&self) -> Option<&Design> {
        match self {
            Solution::DesignPoint(w) => Some(w),
            Solution::Primal(_) => None,
        }
    }

    /// The induced design: identity for design solutions, `hat_w` for
    /// primal ones.
    pub fn design(&self) -> Result<Design> {
        match self {
            Solution::DesignPoint(w) => Ok(w.clone()),
            Solution::Primal(x) => hat_w(x),
        }
    }
}

/// Row-wise proximal map of `t ||.||_1^2`: `argmin_z 1/2 ||z - v||^2 +
/// t ||z||_1^2` for a vector.
///
/// The minimizer soft-thresholds at the level `mu` solving
/// `mu = 2 t sum_i max(0, |v_i| - mu)`, found exactly over the sorted
/// magnitudes in O(p log p).
pub fn prox_sq_l1(v: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let z = prox_sq_l1_rows(&m, t)?;
    Ok(DVector::from_column_slice(z.as_slice()))
}

/// Matrix version: rows play the role of coordinates and are shrunk in
/// Euclidean norm.
pub fn prox_sq_l1_rows(v: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("prox scale must be positive, got {t}")));
    }
    let p = v.nrows();
    let norms: Vec<f64> = (0..p).map(|i| row_norm(v, i)).collect();
    let mu = sq_l1_threshold(&norms, t);
    let mut z = v.clone();
    if v.ncols() == 1 {
        for i in 0..p {
            let vi = v[(i, 0)];
            z[(i, 0)] = vi.signum() * (vi.abs() - mu).max(0.0);
        }
    } else {
        for i in 0..p {
            let scale = if norms[i] > 0.0 { (1.0 - mu / norms[i]).max(0.0) } else { 0.0 };
            let mut row = z.row_mut(i);
            row *= scale;
        }
    }
    Ok(z)
}

/// Threshold of the squared-l1 prox: the unique `mu >= 0` with
/// `mu = 2 t sum_i max(0, n_i - mu)`.
fn sq_l1_threshold(norms: &[f64], t: f64) -> f64 {
    let mut sorted: Vec<f64> = norms.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite norms"));
    let p = sorted.len();
    let mut prefix = 0.0;
    for k in 1..=p {
        prefix += sorted[k - 1];
        let mu = 2.0 * t * prefix / (1.0 + 2.0 * t * k as f64);
        if k == p || mu >= sorted[k] {
            return mu;
        }
    }
    0.0
}

// ---------------------------------------------------------------------------
// Solver states
// ---------------------------------------------------------------------------

struct CdState {
    inst: ProblemInstance,
    x: DMatrix<f64>,
    /// c - A x, maintained incrementally.
    residual: DMatrix<f64>,
    l1: f64,
    sweeps_since_refresh: usize,
}

impl CdState {
    fn new(inst: ProblemInstance) -> Self {
        let residual = inst.target().clone();
        let x = DMatrix::zeros(inst.p(), inst.r());
        Self { inst, x, residual, l1: 0.0, sweeps_since_refresh: 0 }
    }

    fn refresh(&mut self) {
        self.residual = self.inst.target() - self.inst.a() * &self.x;
        self.l1 = crate::problem::sum_row_norms(&self.x);
        self.sweeps_since_refresh = 0;
    }

    /// One full cyclic sweep of exact row minimizations.
    fn step(&mut self) {
        let lambda = self.inst.lambda();
        let r = self.inst.r();
        for i in 0..self.inst.p() {
            let col = self.inst.a().column(i);
            let nsq = self.inst.col_sq_norm(i);
            let old_norm = row_norm(&self.x, i);
            let s = (self.l1 - old_norm).max(0.0);
            // v = a_i^T (residual + a_i x_i): correlation with row i removed.
            let mut v = self.residual.tr_mul(&col); // r×1
            for j in 0..r {
                v[j] += nsq * self.x[(i, j)];
            }
            let threshold = lambda * s;
            let denom = nsq + lambda;
            let vnorm = if r == 1 { v[0].abs() } else { v.norm() };
            let mut new_row = DVector::zeros(r);
            if vnorm > threshold {
                if r == 1 {
                    new_row[0] = v[0].signum() * (vnorm - threshold) / denom;
                } else {
                    let scale = (1.0 - threshold / vnorm) / denom;
                    new_row = &v * scale;
                }
            }
            // residual -= a_i (new - old)^T
            let mut diff = new_row.clone();
            for j in 0..r {
                diff[j] -= self.x[(i, j)];
                self.x[(i, j)] = new_row[j];
            }
            self.residual.ger(-1.0, &col, &diff, 1.0);
            self.l1 = s + row_norm(&self.x, i);
        }
        self.sweeps_since_refresh += 1;
        if self.sweeps_since_refresh >= 50 {
            self.refresh();
        }
    }

    fn value_and_crit(&self) -> Result<(f64, f64)> {
        let value = self.residual.norm_squared() + self.inst.lambda() * self.l1 * self.l1;
        let dual = dual_objective(&self.inst, &self.residual)?;
        Ok((value, (value - dual).max(0.0)))
    }

    fn shrink(&mut self, keep: &[bool]) -> Result<()> {
        let kept: Vec<usize> = (0..self.inst.p()).filter(|&i| keep[i]).collect();
        self.inst = self.inst.restrict(&kept)?;
        let mut x = DMatrix::zeros(kept.len(), self.x.ncols());
        for (new_i, &old_i) in kept.iter().enumerate() {
            x.set_row(new_i, &self.x.row(old_i));
        }
        self.x = x;
        self.refresh();
        Ok(())
    }
}

struct FistaState {
    inst: ProblemInstance,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    t: f64,
    lipschitz: f64,
    iters_since_restart: usize,
}

/// Top squared singular value by power iteration on the smaller Gram side.
fn top_singular_value_sq(a: &DMatrix<f64>) -> f64 {
    let (m, p) = (a.nrows(), a.ncols());
    let dim = m.min(p);
    let mut v = DVector::from_fn(dim, |i, _| 1.0 + 1e-3 * i as f64);
    v /= v.norm();
    let mut value = 0.0;
    for _ in 0..10_000 {
        let w = if m <= p {
            a * a.tr_mul(&v) // A A^T v
        } else {
            a.tr_mul(&(a * &v)) // A^T A v
        };
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let new_value = v.dot(&w);
        v = w / norm;
        if (new_value - value).abs() <= 1e-10 * new_value.abs() {
            return new_value;
        }
        value = new_value;
    }
    value
}

impl FistaState {
    fn new(inst: ProblemInstance) -> Self {
        let lipschitz = 2.0 * top_singular_value_sq(inst.a());
        let x = DMatrix::zeros(inst.p(), inst.r());
        let y = x.clone();
        Self { inst, x, y, t: 1.0, lipschitz, iters_since_restart: 0 }
    }

    fn step(&mut self) -> Result<()> {
        let step = 1.0 / self.lipschitz;
        // grad f(y) = 2 A^T (A y - c)
        let residual = self.inst.a() * &self.y - self.inst.target();
        let grad = 2.0 * self.inst.a().tr_mul(&residual);
        let z = &self.y - step * grad;
        let x_new = prox_sq_l1_rows(&z, self.inst.lambda() * step)?;
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * self.t * self.t).sqrt());
        let beta = (self.t - 1.0) / t_new;
        self.y = &x_new + beta * (&x_new - &self.x);
        self.x = x_new;
        self.t = t_new;
        self.iters_since_restart += 1;
        // Periodic momentum restart guards oscillation on hard instances.
        if self.iters_since_restart >= 200 {
            self.t = 1.0;
            self.y = self.x.clone();
            self.iters_since_restart = 0;
        }
        Ok(())
    }

    fn value_and_crit(&self) -> Result<(f64, f64)> {
        let residual = self.inst.target() - self.inst.a() * &self.x;
        let l1 = crate::problem::sum_row_norms(&self.x);
        let value = residual.norm_squared() + self.inst.lambda() * l1 * l1;
        let dual = dual_objective(&self.inst, &residual)?;
        Ok((value, (value - dual).max(0.0)))
    }

    fn shrink(&mut self, keep: &[bool]) -> Result<()> {
        let kept: Vec<usize> = (0..self.inst.p()).filter(|&i| keep[i]).collect();
        self.inst = self.inst.restrict(&kept)?;
        let mut x = DMatrix::zeros(kept.len(), self.x.ncols());
        for (new_i, &old_i) in kept.iter().enumerate() {
            x.set_row(new_i, &self.x.row(old_i));
        }
        self.x = x;
        self.y = self.x.clone();
        self.t = 1.0;
        self.iters_since_restart = 0;
        self.lipschitz = 2.0 * top_singular_value_sq(self.inst.a());
        Ok(())
    }
}

struct MwuState {
    inst: ProblemInstance,
    w: DVector<f64>,
}

impl MwuState {
    fn new(inst: ProblemInstance) -> Self {
        let w = DVector::from_element(inst.p(), 1.0 / inst.p() as f64);
        Self { inst, w }
    }

    /// One alternating-minimization update `w <- hat_w(hat_x(w))`, the
    /// multiplicative rule `w_i propto w_i |a_i^T M^{-1}(w) c|`
    /// (row norms against K in the L-case).
    fn step(&mut self) -> Result<()> {
        let design = Design::new(self.w.clone())?;
        let factor = InfoFactor::new(&self.inst, &design)?;
        let z = factor.solve_matrix(self.inst.target());
        let g = self.inst.a().tr_mul(&z); // p×r
        let mut new_w = DVector::zeros(self.inst.p());
        let mut total = 0.0;
        for i in 0..self.inst.p() {
            let v = self.w[i] * row_norm(&g, i);
            new_w[i] = v;
            total += v;
        }
        if total <= 1e-300 {
            // A^T c = 0: every design is optimal, keep the current weights.
            return Ok(());
        }
        self.w = new_w / total;
        Ok(())
    }

    fn value_and_crit(&self) -> Result<(f64, f64)> {
        let design = Design::new(self.w.clone())?;
        let factor = InfoFactor::new(&self.inst, &design)?;
        let z = factor.solve_matrix(self.inst.target());
        let phi = self.inst.target().dot(&z);
        let lam_zz = self.inst.lambda() * z.norm_squared();
        let g = self.inst.a().tr_mul(&z);
        let mut num_max = 0.0_f64;
        for i in 0..self.inst.p() {
            let ri = row_norm(&g, i);
            num_max = num_max.max(ri * ri + lam_zz);
        }
        let delta = (num_max / phi - 1.0).max(0.0);
        Ok((self.inst.lambda() * phi, delta))
    }

    fn shrink(&mut self, keep: &[bool]) -> Result<()> {
        let kept: Vec<usize> = (0..self.inst.p()).filter(|&i| keep[i]).collect();
        let mass: f64 = kept.iter().map(|&i| self.w[i]).sum();
        if mass < 1e-300 {
            return Err(Error::NumericalUnderflow(mass));
        }
        self.inst = self.inst.restrict(&kept)?;
        self.w = DVector::from_iterator(kept.len(), kept.iter().map(|&i| self.w[i] / mass));
        Ok(())
    }
}

struct FwState {
    inst: ProblemInstance,
    w: DVector<f64>,
    iters_since_renorm: usize,
}

impl FwState {
    fn new(inst: ProblemInstance) -> Self {
        let w = DVector::from_element(inst.p(), 1.0 / inst.p() as f64);
        Self { inst, w, iters_since_renorm: 0 }
    }

    /// Vertex step: move towards the candidate with the steepest descent
    /// direction, with an exact line search on the segment.
    fn step(&mut self) -> Result<()> {
        let design = Design::new(self.w.clone())?;
        let m_base = crate::problem::information_matrix(&self.inst, &design)?;
        let factor = InfoFactor::from_matrix(m_base.clone())?;
        let z = factor.solve_matrix(self.inst.target());
        let g = self.inst.a().tr_mul(&z);
        // Most negative gradient component = largest ||a_i^T M^{-1} K||.
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..self.inst.p() {
            let v = row_norm(&g, i);
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        let gamma = self.line_search(&m_base, best)?;
        self.w *= 1.0 - gamma;
        self.w[best] += gamma;
        self.iters_since_renorm += 1;
        if self.iters_since_renorm >= 100 {
            let total: f64 = self.w.iter().sum();
            self.w /= total;
            self.iters_since_renorm = 0;
        }
        Ok(())
    }

    /// Exact minimization of `phi((1-gamma) w + gamma e_i)` over [0, 1] by
    /// safeguarded Newton with a bisection fallback.
    fn line_search(&self, m_base: &DMatrix<f64>, i: usize) -> Result<f64> {
        let target = self.inst.target();
        let lambda = self.inst.lambda();
        let a_i = self.inst.a().column(i).clone_owned();

        // M_gamma = M + gamma (H_i - M); derivative data at gamma.
        let eval = |gamma: f64| -> Result<(f64, f64)> {
            let mut m_gamma = m_base * (1.0 - gamma);
            m_gamma.ger(gamma, &a_i, &a_i, 1.0);
            for d in 0..m_gamma.nrows() {
                m_gamma[(d, d)] += gamma * lambda;
            }
            let factor = InfoFactor::from_matrix(m_gamma)?;
            let z = factor.solve_matrix(target);
            // delta_z = (H_i - M) z
            let aiz = a_i.tr_mul(&z); // 1×r
            let mut delta_z = &z * lambda;
            delta_z.ger(1.0, &a_i, &aiz.transpose(), 1.0);
            delta_z -= m_base * &z;
            let g1 = -z.dot(&delta_z);
            let solved = factor.solve_matrix(&delta_z);
            let g2 = 2.0 * delta_z.dot(&solved);
            Ok((g1, g2))
        };

        let (g0, _) = eval(0.0)?;
        if g0 >= 0.0 {
            return Ok(0.0);
        }
        let (g1, _) = eval(1.0)?;
        if g1 <= 0.0 {
            return Ok(1.0);
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        let mut gamma = 0.5;
        for _ in 0..200 {
            let (d1, d2) = eval(gamma)?;
            if d1 < 0.0 {
                lo = gamma;
            } else {
                hi = gamma;
            }
            if hi - lo <= 1e-12 {
                break;
            }
            let newton = gamma - d1 / d2;
            gamma = if d2 > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        Ok(0.5 * (lo + hi))
    }

    fn value_and_crit(&self) -> Result<(f64, f64)> {
        let design = Design::new(self.w.clone())?;
        let factor = InfoFactor::new(&self.inst, &design)?;
        let z = factor.solve_matrix(self.inst.target());
        let phi = self.inst.target().dot(&z);
        let lam_zz = self.inst.lambda() * z.norm_squared();
        let g = self.inst.a().tr_mul(&z);
        let mut num_max = 0.0_f64;
        for i in 0..self.inst.p() {
            let ri = row_norm(&g, i);
            num_max = num_max.max(ri * ri + lam_zz);
        }
        let delta = (num_max / phi - 1.0).max(0.0);
        Ok((self.inst.lambda() * phi, delta))
    }

    fn shrink(&mut self, keep: &[bool]) -> Result<()> {
        let kept: Vec<usize> = (0..self.inst.p()).filter(|&i| keep[i]).collect();
        let mass: f64 = kept.iter().map(|&i| self.w[i]).sum();
        if mass < 1e-300 {
            return Err(Error::NumericalUnderflow(mass));
        }
        self.inst = self.inst.restrict(&kept)?;
        self.w = DVector::from_iterator(kept.len(), kept.iter().map(|&i| self.w[i] / mass));
        Ok(())
    }
}

enum State {
    Cd(CdState),
    Mwu(MwuState),
    Fista(FistaState),
    Fw(FwState),
}

impl State {
    fn new(inst: ProblemInstance, algo: Algo) -> Self {
        match algo {
            Algo::Cd => State::Cd(CdState::new(inst)),
            Algo::Mwu => State::Mwu(MwuState::new(inst)),
            Algo::Fista => State::Fista(FistaState::new(inst)),
            Algo::Fw => State::Fw(FwState::new(inst)),
        }
    }

    fn step(&mut self) -> Result<()> {
        match self {
            State::Cd(s) => {
                s.step();
                Ok(())
            }
            State::Mwu(s) => s.step(),
            State::Fista(s) => s.step(),
            State::Fw(s) => s.step(),
        }
    }

    fn value_and_crit(&self) -> Result<(f64, f64)> {
        match self {
            State::Cd(s) => s.value_and_crit(),
            State::Mwu(s) => s.value_and_crit(),
            State::Fista(s) => s.value_and_crit(),
            State::Fw(s) => s.value_and_crit(),
        }
    }

    fn shrink(&mut self, keep: &[bool]) -> Result<()> {
        match self {
            State::Cd(s) => s.shrink(keep),
            State::Mwu(s) => s.shrink(keep),
            State::Fista(s) => s.shrink(keep),
            State::Fw(s) => s.shrink(keep),
        }
    }

    fn instance(&self) -> &ProblemInstance {
        match self {
            State::Cd(s) => &s.inst,
            State::Mwu(s) => &s.inst,
            State::Fista(s) => &s.inst,
            State::Fw(s) => &s.inst,
        }
    }

    /// Screening mask of the requested rule at the current iterate, in the
    /// numbering of the current sub-instance. `None` when the iterate does
    /// not support the rule yet (x = 0 for the design-side bounds).
    fn screen(&self, rule: ScreenRule) -> Result<Option<ScreeningMask>> {
        let inst = self.instance();
        match self {
            State::Cd(s) => screen_primal(inst, &s.x, rule),
            State::Fista(s) => screen_primal(inst, &s.x, rule),
            State::Mwu(s) => screen_design(inst, &s.w, rule),
            State::Fw(s) => screen_design(inst, &s.w, rule),
        }
    }

    fn current_primal(&self) -> Option<PrimalPoint> {
        match self {
            State::Cd(s) => Some(PrimalPoint::from_matrix(s.x.clone())),
            State::Fista(s) => Some(PrimalPoint::from_matrix(s.x.clone())),
            _ => None,
        }
    }

    fn current_design(&self) -> Result<Option<Design>> {
        match self {
            State::Mwu(s) => Ok(Some(Design::new(s.w.clone())?)),
            State::Fw(s) => Ok(Some(Design::new(s.w.clone())?)),
            _ => Ok(None),
        }
    }
}

fn screen_primal(inst: &ProblemInstance, x: &DMatrix<f64>, rule: ScreenRule) -> Result<Option<ScreeningMask>> {
    let point = PrimalPoint::from_matrix(x.clone());
    match rule {
        ScreenRule::None => Ok(None),
        ScreenRule::D0 | ScreenRule::D1 => Ok(Some(screen_d1(inst, &point)?)),
        ScreenRule::D2 => match hat_w(&point) {
            Ok(w) => Ok(Some(screen_d2_design(inst, &w)?)),
            Err(Error::ZeroPrimalPoint) => Ok(None),
            Err(e) => Err(e),
        },
        ScreenRule::B => match hat_w(&point) {
            Ok(w) => Ok(Some(bound_b(inst, &w)?.1)),
            Err(Error::ZeroPrimalPoint) => Ok(None),
            Err(e) => Err(e),
        },
    }
}

fn screen_design(inst: &ProblemInstance, w: &DVector<f64>, rule: ScreenRule) -> Result<Option<ScreeningMask>> {
    let design = Design::new(w.clone())?;
    match rule {
        ScreenRule::None => Ok(None),
        ScreenRule::D0 | ScreenRule::D2 => Ok(Some(screen_d2_design(inst, &design)?)),
        ScreenRule::D1 => {
            let x = hat_x(inst, &design)?;
            if x.is_zero() {
                return Ok(None);
            }
            Ok(Some(screen_d1(inst, &x)?))
        }
        ScreenRule::B => Ok(Some(bound_b(inst, &design)?.1)),
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Runs `algo` with the options' screening rule applied every
/// `screen_period` iterations. Eliminated candidates are dropped
/// permanently (design weights renormalized, lasso rows removed) and the
/// final solution is re-embedded into the original numbering.
pub fn run_with_screening(
    inst: &ProblemInstance,
    algo: Algo,
    opts: &SolverOptions,
) -> Result<(Solution, ScreeningMask, SolverTrace)> {
    run_with_screening_sink(inst, algo, opts, &mut |_: &TraceRecord| {})
}

/// Same as [`run_with_screening`] but forwarding each trace row to `sink`.
pub fn run_with_screening_sink(
    inst: &ProblemInstance,
    algo: Algo,
    opts: &SolverOptions,
    sink: &mut dyn TraceSink,
) -> Result<(Solution, ScreeningMask, SolverTrace)> {
    opts.validate()?;
    let p_total = inst.p();
    let start = Instant::now();
    let mut state = State::new(inst.clone(), algo);
    let mut index_map: Vec<usize> = (0..p_total).collect();
    let mut cumulative_eliminated = vec![false; p_total];
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut converged = false;
    let mut last_eps = 0.0;
    // Sub-instance criterion level that triggers a full-instance check.
    let mut check_level = opts.tol;

    let push_record = |records: &mut Vec<TraceRecord>,
                           sink: &mut dyn TraceSink,
                           iter: usize,
                           value: f64,
                           crit: f64,
                           surviving: usize| {
        let rec = TraceRecord { iter, value, gap_or_delta: crit, surviving, elapsed_s: start.elapsed().as_secs_f64() };
        sink.record(&rec);
        records.push(rec);
    };

    let (v0, c0) = state.value_and_crit()?;
    push_record(&mut records, sink, 0, v0, c0, index_map.len());
    if c0 <= opts.tol {
        converged = true;
    }

    let mut iter = 0;
    while !converged && iter < opts.max_iters {
        iter += 1;
        state.step()?;
        let (value, crit) = state.value_and_crit()?;
        push_record(&mut records, sink, iter, value, crit, index_map.len());

        if crit <= check_level {
            // The sub-instance criterion can understate the full one until
            // the slack candidates are strictly inactive; confirm on the
            // full instance before stopping.
            if index_map.len() == p_total {
                converged = crit <= opts.tol;
            } else {
                let full_crit = full_instance_criterion(inst, &state, &index_map)?;
                if full_crit <= opts.tol {
                    converged = true;
                } else {
                    check_level = crit * 0.25;
                }
            }
            if converged {
                break;
            }
        }

        if opts.screen_rule != ScreenRule::None && iter % opts.screen_period == 0 {
            if let Some(mask) = state.screen(opts.screen_rule)? {
                last_eps = mask.eps_used;
                if mask.eliminated_count() > 0 {
                    debug_assert!(mask.eliminated_count() < mask.eliminated.len());
                    if mask.eliminated_count() >= mask.eliminated.len() {
                        return Err(Error::SolveFailure("screening eliminated every candidate".into()));
                    }
                    for (local, &elim) in mask.eliminated.iter().enumerate() {
                        if elim {
                            cumulative_eliminated[index_map[local]] = true;
                        }
                    }
                    let keep: Vec<bool> = mask.eliminated.iter().map(|&e| !e).collect();
                    index_map =
                        index_map.iter().zip(&keep).filter(|(_, &k)| k).map(|(&orig, _)| orig).collect();
                    state.shrink(&keep)?;
                }
            }
        }
    }

    let solution = match (state.current_primal(), state.current_design()?) {
        (Some(x), _) => Solution::Primal(x.embed(p_total, &index_map)),
        (None, Some(w)) => Solution::DesignPoint(w.embed(p_total, &index_map)),
        _ => unreachable!("state is either primal or design"),
    };
    let rule_tag = match opts.screen_rule {
        ScreenRule::D1 => crate::screening::Rule::D1,
        ScreenRule::D2 => crate::screening::Rule::D2,
        ScreenRule::B => crate::screening::Rule::B,
        _ => crate::screening::Rule::D0,
    };
    let mask = ScreeningMask {
        eliminated: cumulative_eliminated,
        rule: rule_tag,
        eps_used: last_eps,
        index_map,
        values: Vec::new(),
    };
    let trace = SolverTrace { records, converged, p_total };
    Ok((solution, mask, trace))
}

/// Stopping criterion of the embedded solution on the full instance.
fn full_instance_criterion(inst: &ProblemInstance, state: &State, index_map: &[usize]) -> Result<f64> {
    if let Some(x) = state.current_primal() {
        let x_full = x.embed(inst.p(), index_map);
        let value = crate::duality::primal_objective(inst, &x_full)?;
        let residual = inst.target() - inst.a() * x_full.as_matrix();
        let dual = dual_objective(inst, &residual)?;
        Ok((value - dual).max(0.0))
    } else if let Some(w) = state.current_design()? {
        let w_full = w.embed(inst.p(), index_map);
        design_delta(inst, &w_full)
    } else {
        unreachable!("state is either primal or design")
    }
}

/// Cyclic block coordinate descent on the quadratic (group) lasso.
pub fn solve_cd(inst: &ProblemInstance, opts: &SolverOptions) -> Result<(PrimalPoint, SolverTrace)> {
    let (sol, _, trace) = run_with_screening(inst, Algo::Cd, opts)?;
    match sol {
        Solution::Primal(x) => Ok((x, trace)),
        Solution::DesignPoint(_) => unreachable!(),
    }
}

/// Accelerated proximal gradient with the squared-l1 prox.
pub fn solve_fista(inst: &ProblemInstance, opts: &SolverOptions) -> Result<(PrimalPoint, SolverTrace)> {
    let (sol, _, trace) = run_with_screening(inst, Algo::Fista, opts)?;
    match sol {
        Solution::Primal(x) => Ok((x, trace)),
        Solution::DesignPoint(_) => unreachable!(),
    }
}

/// Multiplicative weight updates on the design simplex, started from the
/// uniform design.
pub fn solve_mwu(inst: &ProblemInstance, opts: &SolverOptions) -> Result<(Design, SolverTrace)> {
    let (sol, _, trace) = run_with_screening(inst, Algo::Mwu, opts)?;
    match sol {
        Solution::DesignPoint(w) => Ok((w, trace)),
        Solution::Primal(_) => unreachable!(),
    }
}

/// Frank-Wolfe vertex-direction method with exact line search.
pub fn solve_fw(inst: &ProblemInstance, opts: &SolverOptions) -> Result<(Design, SolverTrace)> {
    let (sol, _, trace) = run_with_screening(inst, Algo::Fw, opts)?;
    match sol {
        Solution::DesignPoint(w) => Ok((w, trace)),
        Solution::Primal(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{oracle_design_grid, oracle_qlasso_signs};
    use crate::problem::phi;
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn tight(tol: f64) -> SolverOptions {
        SolverOptions { tol, max_iters: 200_000, ..Default::default() }
    }

    #[test]
    fn prox_basics() {
        // v = 0 maps to 0.
        let z = prox_sq_l1(&dvector![0.0, 0.0], 0.3).unwrap();
        assert_eq!(z, dvector![0.0, 0.0]);
        // p = 1 closed form: z = v / (1 + 2t).
        let z = prox_sq_l1(&dvector![-1.4], 0.25).unwrap();
        assert_abs_diff_eq!(z[0], -1.4 / 1.5, epsilon = 1e-15);
    }

    /// Golden-section search on the threshold, the stated independent
    /// oracle for the prox: the stationarity residual
    /// |mu - 2 t sum_i max(0, n_i - mu)| is V-shaped with its kink at the
    /// exact threshold, so the search localizes it to machine precision.
    pub(crate) fn prox_threshold_golden(norms: &[f64], t: f64) -> f64 {
        let nmax = norms.iter().cloned().fold(0.0, f64::max);
        let residual = |mu: f64| -> f64 {
            let l1: f64 = norms.iter().map(|&n| (n - mu).max(0.0)).sum();
            (mu - 2.0 * t * l1).abs()
        };
        let (mut lo, mut hi) = (0.0, nmax + 1.0);
        let inv_phi = 0.618_033_988_749_894_9;
        for _ in 0..300 {
            let m1 = hi - (hi - lo) * inv_phi;
            let m2 = lo + (hi - lo) * inv_phi;
            if residual(m1) < residual(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn prox_matches_golden_section_oracle() {
        let mut rng = synth::rng(99);
        use rand::Rng;
        for _ in 0..50 {
            let p = rng.gen_range(1..=8);
            let v = DVector::from_fn(p, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
            let t = 10f64.powf(rng.gen::<f64>() * 3.0 - 2.0);
            let norms: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            let mu_direct = super::sq_l1_threshold(&norms, t);
            let mu_golden = prox_threshold_golden(&norms, t);
            assert_abs_diff_eq!(mu_direct, mu_golden, epsilon = 1e-9);
        }
    }

    #[test]
    fn cd_first_update_hits_single_candidate_optimum() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let c = dvector![0.3, 1.1, -0.4];
        let inst = ProblemInstance::c_case(a.clone(), c.clone(), 0.6).unwrap();
        let (x, trace) = solve_cd(&inst, &tight(1e-12)).unwrap();
        let expected = a.column(0).dot(&c) / (a.column(0).norm_squared() + 0.6);
        assert_abs_diff_eq!(x.as_matrix()[(0, 0)], expected, epsilon = 1e-12);
        assert!(trace.converged);
        assert!(trace.iterations() <= 2);
    }

    #[test]
    fn cd_objective_is_nonincreasing() {
        let inst = synth::random_instance(5, 4, 6, 1, 0.5);
        let (_, trace) = solve_cd(&inst, &tight(1e-10)).unwrap();
        for pair in trace.records.windows(2) {
            assert!(pair[1].value <= pair[0].value + 1e-12);
        }
    }

    #[test]
    fn cd_matches_oracle_on_small_instances() {
        for seed in 0..8u64 {
            let lambda = [0.1, 1.0, 10.0][(seed % 3) as usize];
            let inst = synth::random_instance(600 + seed, 4, 6, 1, lambda);
            let oracle = oracle_qlasso_signs(&inst).unwrap();
            let (x, trace) = solve_cd(&inst, &tight(1e-9)).unwrap();
            assert!(trace.converged, "seed {seed}");
            let val = crate::duality::primal_objective(&inst, &x).unwrap();
            assert_abs_diff_eq!(val, oracle.value, epsilon = 1e-7 * (1.0 + oracle.value));
        }
    }

    #[test]
    fn block_cd_solves_group_instances() {
        for seed in 0..4u64 {
            let inst = synth::random_instance(700 + seed, 4, 5, 3, 1.0);
            let (x, trace) = solve_cd(&inst, &tight(1e-10)).unwrap();
            assert!(trace.converged);
            assert!(crate::duality::kkt_residual(&inst, &x).unwrap() <= 1e-4);
        }
    }

    #[test]
    fn fista_first_step_is_the_prox_of_a_gradient_step() {
        let inst = synth::random_instance(8, 3, 5, 1, 0.8);
        let lipschitz = 2.0 * super::top_singular_value_sq(inst.a());
        let opts = SolverOptions { tol: 1e-30, max_iters: 1, ..Default::default() };
        let (x, _) = solve_fista(&inst, &opts).unwrap();
        let c = inst.c().unwrap();
        let step = 1.0 / lipschitz;
        let z = 2.0 * step * inst.a().tr_mul(&c);
        let expected = prox_sq_l1(
            &DVector::from_column_slice(z.as_slice()),
            inst.lambda() * step,
        )
        .unwrap();
        assert_abs_diff_eq!(x.as_vector().unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn fista_matches_oracle_on_small_instances() {
        for seed in 0..6u64 {
            let lambda = [0.1, 1.0, 10.0][(seed % 3) as usize];
            let inst = synth::random_instance(800 + seed, 4, 6, 1, lambda);
            let oracle = oracle_qlasso_signs(&inst).unwrap();
            let (x, trace) = solve_fista(&inst, &tight(1e-8)).unwrap();
            assert!(trace.converged, "seed {seed}");
            let val = crate::duality::primal_objective(&inst, &x).unwrap();
            assert_abs_diff_eq!(val, oracle.value, epsilon = 1e-6 * (1.0 + oracle.value));
        }
    }

    #[test]
    fn mwu_uniform_is_fixed_point_of_symmetric_instance() {
        let inst =
            ProblemInstance::c_case(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![1.0, 1.0], 1.0).unwrap();
        let (w, trace) = solve_mwu(&inst, &tight(1e-10)).unwrap();
        assert!(trace.converged);
        assert_abs_diff_eq!(w.weights(), &dvector![0.5, 0.5], epsilon = 1e-9);
        // Converges immediately: uniform start is already optimal.
        assert_eq!(trace.iterations(), 0);
    }

    #[test]
    fn mwu_is_monotone_and_matches_grid_oracle() {
        let inst = synth::random_instance(31, 3, 3, 1, 1.0);
        let (w, trace) = solve_mwu(&inst, &tight(1e-9)).unwrap();
        assert!(trace.converged);
        for pair in trace.records.windows(2) {
            assert!(pair[1].value <= pair[0].value + 1e-12, "not monotone: {pair:?}");
        }
        let grid = oracle_design_grid(&inst, 60).unwrap();
        let val = inst.lambda() * phi(&inst, &w).unwrap();
        assert!((val - grid.value).abs() <= 2e-3 * (1.0 + grid.value));
    }

    #[test]
    fn fw_symmetric_uniform_start_stops_immediately() {
        let inst =
            ProblemInstance::c_case(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![1.0, 1.0], 1.0).unwrap();
        let (w, trace) = solve_fw(&inst, &tight(1e-10)).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.iterations(), 0);
        assert_abs_diff_eq!(w.weights(), &dvector![0.5, 0.5], epsilon = 1e-12);
    }

    #[test]
    fn fw_first_direction_from_vertex_is_the_other_axis() {
        let inst =
            ProblemInstance::c_case(dmatrix![1.0, 0.0; 0.0, 1.0], dvector![1.0, 1.0], 1.0).unwrap();
        // From e_1 the gradient is steepest along e_2.
        let mut state = FwState::new(inst.clone());
        state.w = dvector![1.0, 0.0];
        state.step().unwrap();
        assert!(state.w[1] > 0.0, "second candidate must receive mass, got {:?}", state.w);
    }

    #[test]
    fn fw_matches_oracle_value() {
        let inst = synth::random_instance(37, 3, 3, 1, 1.0);
        let opts = SolverOptions { tol: 1e-8, max_iters: 500_000, ..Default::default() };
        let (w, trace) = solve_fw(&inst, &opts).unwrap();
        assert!(trace.converged);
        let oracle = oracle_qlasso_signs(&inst).unwrap();
        let val = inst.lambda() * phi(&inst, &w).unwrap();
        assert!((val - oracle.value).abs() <= 1e-5 * (1.0 + oracle.value), "val {val} vs {}", oracle.value);
    }

    #[test]
    fn screening_none_reproduces_bare_solver() {
        let inst = synth::random_instance(41, 4, 8, 1, 0.4);
        let opts = tight(1e-8);
        let (x1, t1) = solve_cd(&inst, &opts).unwrap();
        let (sol, mask, t2) = run_with_screening(&inst, Algo::Cd, &opts).unwrap();
        assert_eq!(mask.eliminated_count(), 0);
        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert_eq!(a.value, b.value);
            assert_eq!(a.gap_or_delta, b.gap_or_delta);
            assert_eq!(a.surviving, b.surviving);
        }
        assert_eq!(sol.as_primal().unwrap().as_matrix(), x1.as_matrix());
    }

    #[test]
    fn long_period_never_screens() {
        let inst = synth::random_instance(43, 4, 8, 1, 0.4);
        let opts = SolverOptions {
            tol: 1e-8,
            max_iters: 50,
            screen_rule: ScreenRule::D1,
            screen_period: 10_000,
            ..Default::default()
        };
        let (_, mask, trace) = run_with_screening(&inst, Algo::Cd, &opts).unwrap();
        assert_eq!(mask.eliminated_count(), 0);
        assert!(trace.records.iter().all(|r| r.surviving == 8));
    }

    #[test]
    fn screened_run_is_neutral_and_safe() {
        let inst = synth::random_instance(47, 6, 40, 1, 0.4);
        let opts_plain = tight(1e-9);
        let opts_screen = SolverOptions {
            tol: 1e-9,
            max_iters: 200_000,
            screen_rule: ScreenRule::D1,
            screen_period: 10,
            ..Default::default()
        };
        let (x_plain, t_plain) = solve_cd(&inst, &opts_plain).unwrap();
        let (sol, mask, t_screen) = run_with_screening(&inst, Algo::Cd, &opts_screen).unwrap();
        assert!(t_plain.converged && t_screen.converged);
        let v_plain = crate::duality::primal_objective(&inst, &x_plain).unwrap();
        let v_screen = crate::duality::primal_objective(&inst, sol.as_primal().unwrap()).unwrap();
        assert!((v_plain - v_screen).abs() <= 1e-8 * (1.0 + v_plain.abs()));
        // Survivors cover the support of the embedded solution.
        for i in sol.as_primal().unwrap().support() {
            assert!(!mask.eliminated[i]);
        }
        // Surviving counts never increase.
        for pair in t_screen.records.windows(2) {
            assert!(pair[1].surviving <= pair[0].surviving);
        }
    }

    #[test]
    fn mwu_with_screening_matches_unscreened_design() {
        let inst = synth::random_instance(53, 4, 12, 1, 0.8);
        let opts_screen = SolverOptions {
            tol: 1e-8,
            max_iters: 100_000,
            screen_rule: ScreenRule::D2,
            screen_period: 5,
            ..Default::default()
        };
        let (w_plain, t1) = solve_mwu(&inst, &tight(1e-8)).unwrap();
        let (sol, _, t2) = run_with_screening(&inst, Algo::Mwu, &opts_screen).unwrap();
        assert!(t1.converged && t2.converged);
        let v1 = inst.lambda() * phi(&inst, &w_plain).unwrap();
        let v2 = inst.lambda() * phi(&inst, sol.as_design().unwrap()).unwrap();
        assert!((v1 - v2).abs() <= 1e-7 * (1.0 + v1));
        // Final design still sums to one after re-embedding.
        let total: f64 = sol.as_design().unwrap().weights().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pathological_instance_stops_at_the_start() {
        let inst = synth::random_pathological_instance(61, 5, 2, 0.5);
        let (x, trace) = solve_cd(&inst, &tight(1e-10)).unwrap();
        assert!(trace.converged);
        assert!(x.is_zero());
        let (w, trace_w) = solve_mwu(&inst, &tight(1e-10)).unwrap();
        assert!(trace_w.converged);
        assert_eq!(trace_w.iterations(), 0);
        assert_abs_diff_eq!(w.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
