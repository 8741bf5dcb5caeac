//! Dense convex QP
//!
//! ```text
//! minimise   ½ zᵀPz + qᵀz
//! subject to G z ≤ h,   lb ≤ z ≤ ub
//! ```
//!
//! solved with the Goldfarb–Idnani dual active-set method. Box bounds are
//! kept as implicit unit rows so they cost O(1) per evaluation. Variables
//! that touch no row of `G` and no other variable are solved in closed form
//! up front. A singular `P` is handled by proximal-point iterations around
//! the strictly convex solver.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Problem with no constraints at all.
    pub fn unconstrained(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            p,
            q,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_rows(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.h.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let dims = [
            ("P rows", self.p.nrows(), n),
            ("P cols", self.p.ncols(), n),
            ("G cols", self.g.ncols(), n),
            ("G rows", self.g.nrows(), self.m()),
            ("lb", self.lb.len(), n),
            ("ub", self.ub.len(), n),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(Error::Dimension { what, expected, got });
            }
        }
        if self.p.iter().chain(self.q.iter()).chain(self.g.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("QP data"));
        }
        if self.h.iter().any(|x| x.is_nan()) || self.lb.iter().chain(self.ub.iter()).any(|x| x.is_nan()) {
            return Err(Error::NonFinite("QP bounds"));
        }
        let scale = 1.0 + self.p.amax();
        for i in 0..n {
            for j in 0..i {
                if (self.p[(i, j)] - self.p[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::invalid("P is not symmetric"));
                }
            }
        }
        Ok(())
    }

    /// Dump as text: one header line per block followed by row-major CSV.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut block = |name: &str, rows: usize, cols: usize, at: &dyn Fn(usize, usize) -> f64| {
            let _ = writeln!(s, "# {name} {rows} {cols}");
            for i in 0..rows {
                for j in 0..cols {
                    if j > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{:e}", at(i, j));
                }
                s.push('\n');
            }
        };
        let n = self.n();
        block("P", n, n, &|i, j| self.p[(i, j)]);
        block("q", 1, n, &|_, j| self.q[j]);
        block("G", self.m(), n, &|i, j| self.g[(i, j)]);
        block("h", 1, self.m(), &|_, j| self.h[j]);
        block("lb", 1, n, &|_, j| self.lb[j]);
        block("ub", 1, n, &|_, j| self.ub[j]);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// A constraint of the problem: a row of `G`, or a lower/upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintRef {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintRef,
    pub amount: f64,
}

/// Non-negative multipliers of the rows, lower bounds and upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub rows: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Multipliers {
    fn zeros(n: usize, m: usize) -> Self {
        Self {
            rows: DVector::zeros(m),
            lower: DVector::zeros(n),
            upper: DVector::zeros(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub multipliers: Multipliers,
    /// Most violated constraint at `z` when the problem is infeasible.
    pub violation: Option<Violation>,
}

impl QpSolution {
    pub fn diagnostic(&self) -> String {
        match self.violation {
            Some(v) => format!(
                "{:?} after {} iterations, kkt {:e}; most violated {:?} by {:e}",
                self.status, self.iterations, self.kkt_residual, v.constraint, v.amount
            ),
            None => format!(
                "{:?} after {} iterations, kkt {:e}",
                self.status, self.iterations, self.kkt_residual
            ),
        }
    }
}

/// Most violated constraint of `p` at `z`, if any is violated at all.
pub fn max_violation(p: &QpProblem, z: &DVector<f64>) -> Option<Violation> {
    let mut best: Option<Violation> = None;
    let mut consider = |constraint, amount: f64| {
        if amount > 0.0 && best.is_none_or(|b| amount > b.amount) {
            best = Some(Violation { constraint, amount });
        }
    };
    for i in 0..p.m() {
        consider(ConstraintRef::Row(i), p.g.row(i).dot(&z.transpose()) - p.h[i]);
    }
    for j in 0..p.n() {
        consider(ConstraintRef::Lower(j), p.lb[j] - z[j]);
        consider(ConstraintRef::Upper(j), z[j] - p.ub[j]);
    }
    best
}

/// KKT residual at `z` for given multipliers: the largest of the primal
/// violation, the dual infeasibility, the complementarity `min(μ, slack)`
/// and the stationarity error. Stationarity is measured relative to the
/// largest term entering it, because with large penalty weights the
/// gradient terms cancel at magnitudes far above one.
pub fn kkt_residual_with(p: &QpProblem, z: &DVector<f64>, mult: &Multipliers) -> f64 {
    let n = p.n();
    let mut res: f64 = 0.0;
    let grad = &p.p * z + &p.q;
    let mut stat = grad.clone();
    let mut size = vec![0.0f64; n];
    for j in 0..n {
        size[j] = grad[j].abs().max(p.q[j].abs());
    }
    for i in 0..p.m() {
        let row = p.g.row(i);
        let slack = p.h[i] - row.dot(&z.transpose());
        let mu = mult.rows[i];
        res = res.max(-slack).max(-mu).max(mu.min(slack.abs()));
        if mu != 0.0 {
            for j in 0..n {
                let t = mu * row[j];
                stat[j] += t;
                size[j] = size[j].max(t.abs());
            }
        }
    }
    for j in 0..n {
        let (lo, hi) = (mult.lower[j], mult.upper[j]);
        let sl = z[j] - p.lb[j];
        let su = p.ub[j] - z[j];
        res = res.max(-sl).max(-su).max(-lo).max(-hi);
        if p.lb[j].is_finite() {
            res = res.max(lo.min(sl.abs()));
        } else {
            res = res.max(lo);
        }
        if p.ub[j].is_finite() {
            res = res.max(hi.min(su.abs()));
        } else {
            res = res.max(hi);
        }
        stat[j] += hi - lo;
        size[j] = size[j].max(lo.abs()).max(hi.abs());
    }
    for j in 0..n {
        res = res.max(stat[j].abs() / (1.0 + size[j]));
    }
    res
}

/// KKT residual at `z` using the multipliers that best explain the
/// gradient: a non-negative least-squares fit over the constraints that
/// are active at `z` to within `1e-7` relative.
pub fn kkt_residual(p: &QpProblem, z: &DVector<f64>) -> f64 {
    if z.len() != p.n() {
        return f64::INFINITY;
    }
    kkt_residual_with(p, z, &fit_multipliers(p, z))
}

fn fit_multipliers(p: &QpProblem, z: &DVector<f64>) -> Multipliers {
    let n = p.n();
    let mut cols: Vec<(ConstraintRef, DVector<f64>)> = Vec::new();
    let near = |slack: f64, rhs: f64| slack.abs() <= 1e-7 * (1.0 + rhs.abs());
    for i in 0..p.m() {
        let slack = p.h[i] - p.g.row(i).dot(&z.transpose());
        if near(slack, p.h[i]) {
            cols.push((ConstraintRef::Row(i), p.g.row(i).transpose()));
        }
    }
    for j in 0..n {
        if p.lb[j].is_finite() && near(z[j] - p.lb[j], p.lb[j]) {
            let mut e = DVector::zeros(n);
            e[j] = -1.0;
            cols.push((ConstraintRef::Lower(j), e));
        }
        if p.ub[j].is_finite() && near(p.ub[j] - z[j], p.ub[j]) {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            cols.push((ConstraintRef::Upper(j), e));
        }
    }
    let mut mult = Multipliers::zeros(n, p.m());
    if !cols.is_empty() {
        let e = DMatrix::from_columns(&cols.iter().map(|c| c.1.clone()).collect::<Vec<_>>());
        let target = -(&p.p * z + &p.q);
        let mu = nnls(&e, &target);
        for (k, (c, _)) in cols.iter().enumerate() {
            match *c {
                ConstraintRef::Row(i) => mult.rows[i] = mu[k],
                ConstraintRef::Lower(j) => mult.lower[j] = mu[k],
                ConstraintRef::Upper(j) => mult.upper[j] = mu[k],
            }
        }
    }
    mult
}

/// Lawson–Hanson non-negative least squares: `min ‖E x − f‖, x ≥ 0`.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    let k = e.ncols();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-12 * (1.0 + e.amax() * f.amax());
    let ls = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
        let mut out = DVector::zeros(k);
        if idx.is_empty() {
            return out;
        }
        let sub = e.select_columns(&idx);
        let sol = sub
            .clone()
            .svd(true, true)
            .solve(f, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        for (a, &i) in idx.iter().enumerate() {
            out[i] = sol[a];
        }
        out
    };
    for _ in 0..(3 * k + 10) {
        let w = e.transpose() * (f - e * &x);
        let cand = (0..k)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let s = ls(&passive);
            if (0..k).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..k {
                if passive[i] && s[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - s[i]));
                }
            }
            x += (s - &x) * alpha;
            for i in 0..k {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// Solve with the default tolerance and iteration cap.
pub fn solve_default(p: &QpProblem) -> Result<QpSolution> {
    solve(p, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn solve(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let n = p.n();
    let m = p.m();
    let mut z = DVector::zeros(n);
    let mut mult = Multipliers::zeros(n, m);

    for j in 0..n {
        if p.lb[j] > p.ub[j] {
            return Ok(finish(p, z, mult, 0, QpStatus::Infeasible, tol));
        }
    }

    // Split off variables that interact with nothing else.
    let mut coupled = vec![false; n];
    for j in 0..n {
        coupled[j] = (0..m).any(|i| p.g[(i, j)] != 0.0) || (0..n).any(|k| k != j && p.p[(j, k)] != 0.0);
    }
    for j in (0..n).filter(|&j| !coupled[j]) {
        let (pjj, qj, lo, hi) = (p.p[(j, j)], p.q[j], p.lb[j], p.ub[j]);
        let v = if pjj > 0.0 {
            (-qj / pjj).clamp(lo, hi)
        } else if pjj < -1e-8 * (1.0 + p.p.amax()) {
            return Err(Error::NotConvex(pjj));
        } else if qj > 0.0 {
            if lo.is_finite() { lo } else { return Err(Error::Unbounded(j)) }
        } else if qj < 0.0 {
            if hi.is_finite() { hi } else { return Err(Error::Unbounded(j)) }
        } else {
            0.0f64.clamp(lo, hi)
        };
        z[j] = v;
        let g = pjj * v + qj;
        if g > 0.0 {
            mult.lower[j] = g;
        } else if g < 0.0 {
            mult.upper[j] = -g;
        }
    }

    let idx: Vec<usize> = (0..n).filter(|&j| coupled[j]).collect();
    let rows: Vec<usize> = (0..m).filter(|&i| p.h[i] != f64::INFINITY).collect();
    if idx.is_empty() {
        // Only constant rows remain: 0 ≤ h.
        let status = if rows.iter().any(|&i| p.h[i] < 0.0) {
            QpStatus::Infeasible
        } else {
            QpStatus::Optimal
        };
        return Ok(finish(p, z, mult, 0, status, tol));
    }

    let sub = Reduced::new(p, &idx, &rows);
    let out = sub.solve(tol, max_iter)?;
    // The dual method meets active bounds only up to round-off; snap back so
    // pinned variables come out exact.
    for (a, &j) in idx.iter().enumerate() {
        z[j] = out.x[a].clamp(p.lb[j], p.ub[j]);
    }
    for (a, c) in sub.cons.iter().enumerate() {
        let u = out.u[a];
        match *c {
            Con::Row(r) => mult.rows[rows[r]] = u,
            Con::Lo(k) => mult.lower[idx[k]] = u,
            Con::Up(k) => mult.upper[idx[k]] = u,
        }
    }
    Ok(finish(p, z, mult, out.iterations, out.status, tol))
}

fn finish(p: &QpProblem, z: DVector<f64>, mult: Multipliers, iterations: usize, status: QpStatus, tol: f64) -> QpSolution {
    let kkt = kkt_residual_with(p, &z, &mult);
    if kkt > tol && status == QpStatus::Optimal {
        if let Some((zp, mp)) = polish(p, &z, &mult) {
            let k = kkt_residual_with(p, &zp, &mp);
            if k < kkt {
                return finish_with(p, zp, mp, k, iterations, status, tol);
            }
        }
    }
    finish_with(p, z, mult, kkt, iterations, status, tol)
}

/// Re-solve the equality-constrained problem on the active set of `mult`,
/// with variables at active bounds held fixed, plus a few rounds of
/// iterative refinement. Bound multipliers follow from stationarity.
fn polish(p: &QpProblem, z: &DVector<f64>, mult: &Multipliers) -> Option<(DVector<f64>, Multipliers)> {
    let n = p.n();
    let mut zf = z.clone();
    let mut fixed = vec![false; n];
    for j in 0..n {
        if mult.lower[j] > 0.0 {
            zf[j] = p.lb[j];
            fixed[j] = true;
        } else if mult.upper[j] > 0.0 {
            zf[j] = p.ub[j];
            fixed[j] = true;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| !fixed[j]).collect();
    let rows: Vec<usize> = (0..p.m()).filter(|&i| mult.rows[i] > 0.0).collect();
    let (nf, k) = (free.len(), rows.len());
    let mut kkt = DMatrix::zeros(nf + k, nf + k);
    let mut rhs = DVector::zeros(nf + k);
    for (a, &j) in free.iter().enumerate() {
        for (b, &l) in free.iter().enumerate() {
            kkt[(a, b)] = p.p[(j, l)];
        }
        let mut r = -p.q[j];
        for l in (0..n).filter(|&l| fixed[l]) {
            r -= p.p[(j, l)] * zf[l];
        }
        rhs[a] = r;
    }
    for (r, &i) in rows.iter().enumerate() {
        let mut b = p.h[i];
        for l in (0..n).filter(|&l| fixed[l]) {
            b -= p.g[(i, l)] * zf[l];
        }
        for (a, &j) in free.iter().enumerate() {
            kkt[(nf + r, a)] = p.g[(i, j)];
            kkt[(a, nf + r)] = p.g[(i, j)];
        }
        rhs[nf + r] = b;
    }
    let lu = kkt.clone().lu();
    let mut sol = DVector::zeros(nf + k);
    for (a, &j) in free.iter().enumerate() {
        sol[a] = z[j];
    }
    for (r, &i) in rows.iter().enumerate() {
        sol[nf + r] = mult.rows[i];
    }
    for _ in 0..3 {
        let resid = &rhs - &kkt * &sol;
        sol += lu.solve(&resid)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = Multipliers::zeros(n, p.m());
    for (a, &j) in free.iter().enumerate() {
        zf[j] = sol[a];
    }
    for (r, &i) in rows.iter().enumerate() {
        out.rows[i] = sol[nf + r].max(0.0);
    }
    let mut grad = &p.p * &zf + &p.q;
    for &i in &rows {
        grad += p.g.row(i).transpose() * out.rows[i];
    }
    for j in 0..n {
        if mult.lower[j] > 0.0 {
            out.lower[j] = grad[j].max(0.0);
        } else if mult.upper[j] > 0.0 {
            out.upper[j] = (-grad[j]).max(0.0);
        }
    }
    Some((zf, out))
}

fn finish_with(p: &QpProblem, z: DVector<f64>, mult: Multipliers, kkt: f64, iterations: usize, status: QpStatus, tol: f64) -> QpSolution {
    let violation = max_violation(p, &z);
    let status = match status {
        QpStatus::Optimal if kkt > tol => {
            // The active-set solve converged but round-off left a residual
            // above the requested tolerance: report it honestly.
            if violation.is_some_and(|v| v.amount > tol) {
                QpStatus::Infeasible
            } else {
                QpStatus::MaxIter
            }
        }
        s => s,
    };
    QpSolution {
        objective: p.objective(&z),
        z,
        kkt_residual: kkt,
        iterations,
        status,
        multipliers: mult,
        violation: if status == QpStatus::Infeasible { violation } else { None },
    }
}

/// A constraint of the reduced problem in `nᵀx ≤ b` form.
#[derive(Debug, Clone, Copy)]
enum Con {
    Row(usize),
    Lo(usize),
    Up(usize),
}

struct Reduced {
    n: usize,
    p: DMatrix<f64>,
    q: DVector<f64>,
    /// Rows of G restricted to coupled variables, row-major.
    g: Vec<f64>,
    g_norm: Vec<f64>,
    h: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cons: Vec<Con>,
}

struct CoreOut {
    x: DVector<f64>,
    u: Vec<f64>,
    iterations: usize,
    status: QpStatus,
}

impl Reduced {
    fn new(p: &QpProblem, idx: &[usize], rows: &[usize]) -> Self {
        let n = idx.len();
        let pr = p.p.select_rows(idx).select_columns(idx);
        let q = DVector::from_iterator(n, idx.iter().map(|&j| p.q[j]));
        let mut g = Vec::with_capacity(rows.len() * n);
        let mut g_norm = Vec::with_capacity(rows.len());
        for &i in rows {
            let start = g.len();
            g.extend(idx.iter().map(|&j| p.g[(i, j)]));
            g_norm.push(libm::sqrt(g[start..].iter().map(|x| x * x).sum::<f64>()));
        }
        let h: Vec<f64> = rows.iter().map(|&i| p.h[i]).collect();
        let lb: Vec<f64> = idx.iter().map(|&j| p.lb[j]).collect();
        let ub: Vec<f64> = idx.iter().map(|&j| p.ub[j]).collect();
        let mut cons: Vec<Con> = (0..rows.len()).map(Con::Row).collect();
        for k in 0..n {
            if lb[k].is_finite() {
                cons.push(Con::Lo(k));
            }
            if ub[k].is_finite() {
                cons.push(Con::Up(k));
            }
        }
        Self { n, p: pr, q, g, g_norm, h, lb, ub, cons }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.g[r * self.n..(r + 1) * self.n]
    }

    /// `b - nᵀx` for constraint `c`.
    fn slack(&self, c: Con, x: &[f64]) -> f64 {
        match c {
            Con::Row(r) => self.h[r] - dot(self.row(r), x),
            Con::Lo(k) => x[k] - self.lb[k],
            Con::Up(k) => self.ub[k] - x[k],
        }
    }

    fn norm(&self, c: Con) -> f64 {
        match c {
            Con::Row(r) => self.g_norm[r],
            _ => 1.0,
        }
    }

    fn rhs(&self, c: Con) -> f64 {
        match c {
            Con::Row(r) => self.h[r],
            Con::Lo(k) => self.lb[k],
            Con::Up(k) => self.ub[k],
        }
    }

    fn solve(&self, tol: f64, max_iter: usize) -> Result<CoreOut> {
        let n = self.n;
        let diag_max = (0..n).map(|i| self.p[(i, i)].abs()).fold(0.0, f64::max);
        let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || self.p[(i, j)] == 0.0));
        if diagonal && (0..n).all(|i| self.p[(i, i)] > 1e-10 * diag_max.max(1e-300)) {
            let gi = GoldfarbIdnani::diagonal(self);
            return Ok(gi.run(self, &self.q, tol, max_iter));
        }
        if let Some(ch) = self.p.clone().cholesky() {
            let l = ch.l();
            let min_piv = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if min_piv > 1e-10 * diag_max.max(1e-300) {
                let gi = GoldfarbIdnani::new(self, &l);
                return Ok(gi.run(self, &self.q, tol, max_iter));
            }
        }
        // Singular or nearly so: clamp the spectrum and add a proximal term.
        let eig = self.p.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(1.0);
        if min_eig < -1e-8 * scale {
            return Err(Error::NotConvex(min_eig));
        }
        let mut vals = eig.eigenvalues.clone();
        vals.iter_mut().for_each(|v| *v = v.max(0.0));
        let p_psd = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        let rho = 1e-6 * scale;
        let p_prox = &p_psd + DMatrix::identity(n, n) * rho;
        let l = p_prox
            .clone()
            .cholesky()
            .ok_or(Error::Singular("regularised quadratic term"))?
            .l();
        let gi = GoldfarbIdnani::new(self, &l);
        let mut x = DVector::zeros(n);
        let mut total = 0;
        let mut last = None;
        for _ in 0..10_000 {
            let q = &self.q - &x * rho;
            let out = gi.run(self, &q, tol, max_iter.saturating_sub(total).max(1));
            total += out.iterations;
            if out.status != QpStatus::Optimal {
                return Ok(CoreOut { iterations: total, ..out });
            }
            let step = (&out.x - &x).amax();
            x = out.x.clone();
            last = Some(out);
            if rho * step <= 1e-2 * tol || total >= max_iter {
                break;
            }
        }
        let out = last.expect("at least one proximal iteration");
        let status = if total >= max_iter { QpStatus::MaxIter } else { QpStatus::Optimal };
        Ok(CoreOut { iterations: total, status, ..out })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = libm::hypot(a, b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

/// Factor data shared by repeated solves with the same quadratic term.
struct GoldfarbIdnani {
    /// `L⁻ᵀ`, column-major.
    j0: Vec<f64>,
}

impl GoldfarbIdnani {
    /// `L⁻ᵀ = diag(1/√pᵢᵢ)` for a diagonal quadratic term.
    fn diagonal(prob: &Reduced) -> Self {
        let n = prob.n;
        let mut j0 = vec![0.0; n * n];
        for k in 0..n {
            j0[k * n + k] = 1.0 / libm::sqrt(prob.p[(k, k)]);
        }
        Self { j0 }
    }

    fn new(prob: &Reduced, l: &DMatrix<f64>) -> Self {
        let n = prob.n;
        let linv = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        // Column k of L⁻ᵀ is row k of L⁻¹.
        let mut j0 = vec![0.0; n * n];
        for k in 0..n {
            for i in 0..n {
                j0[k * n + i] = linv[(k, i)];
            }
        }
        Self { j0 }
    }

    fn run(&self, prob: &Reduced, q: &DVector<f64>, tol: f64, max_iter: usize) -> CoreOut {
        let n = prob.n;
        let mut jm = self.j0.clone();
        // Unconstrained minimiser x = -J Jᵀ q.
        let mut x = vec![0.0; n];
        {
            let jtq: Vec<f64> = (0..n).map(|k| dot(&jm[k * n..(k + 1) * n], q.as_slice())).collect();
            for k in 0..n {
                let col = &jm[k * n..(k + 1) * n];
                for i in 0..n {
                    x[i] -= col[i] * jtq[k];
                }
            }
        }
        let ncons = prob.cons.len();
        let mut active: Vec<usize> = Vec::new();
        let mut is_active = vec![false; ncons];
        let mut u: Vec<f64> = Vec::new();
        // R is upper triangular, column-major with stride n.
        let mut r = vec![0.0; n * n];
        let mut d = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut rv = vec![0.0; n];
        let mut iterations = 0;

        let feas_tol = |c: Con| 1e-2 * tol * (1.0 + prob.rhs(c).abs()).max(prob.norm(c));

        loop {
            // Pick the most violated constraint, scaled by its normal.
            let mut pick: Option<(usize, f64)> = None;
            for (ci, &c) in prob.cons.iter().enumerate() {
                if is_active[ci] {
                    continue;
                }
                let s = prob.slack(c, &x);
                if s < -feas_tol(c) {
                    let score = s / prob.norm(c);
                    if pick.is_none_or(|(_, b)| score < b) {
                        pick = Some((ci, score));
                    }
                }
            }
            let Some((pi, _)) = pick else {
                let mut uu = vec![0.0; ncons];
                for (a, &ci) in active.iter().enumerate() {
                    uu[ci] = u[a];
                }
                return CoreOut { x: DVector::from_vec(x), u: uu, iterations, status: QpStatus::Optimal };
            };
            let pc = prob.cons[pi];
            let mut u_plus = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    let mut uu = vec![0.0; ncons];
                    for (a, &ci) in active.iter().enumerate() {
                        uu[ci] = u[a];
                    }
                    return CoreOut { x: DVector::from_vec(x), u: uu, iterations, status: QpStatus::MaxIter };
                }
                let nq = active.len();
                // d = Jᵀ n⁺ with n⁺ = -n, the normal in ≥ form.
                match pc {
                    Con::Row(rw) => {
                        let row = prob.row(rw);
                        for k in 0..n {
                            d[k] = -dot(&jm[k * n..(k + 1) * n], row);
                        }
                    }
                    Con::Lo(j) => {
                        for k in 0..n {
                            d[k] = jm[k * n + j];
                        }
                    }
                    Con::Up(j) => {
                        for k in 0..n {
                            d[k] = -jm[k * n + j];
                        }
                    }
                }
                // Primal direction z = J₂ d₂.
                z.iter_mut().for_each(|v| *v = 0.0);
                let mut d2sq = 0.0;
                for k in nq..n {
                    let dk = d[k];
                    d2sq += dk * dk;
                    if dk != 0.0 {
                        let col = &jm[k * n..(k + 1) * n];
                        for i in 0..n {
                            z[i] += dk * col[i];
                        }
                    }
                }
                let dsq: f64 = d.iter().map(|v| v * v).sum();
                // Dual direction r = R⁻¹ d₁.
                for i in (0..nq).rev() {
                    let mut s = d[i];
                    for k in i + 1..nq {
                        s -= r[k * n + i] * rv[k];
                    }
                    rv[i] = s / r[i * n + i];
                }
                let rmax = rv[..nq].iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for k in 0..nq {
                    if rv[k] > 1e-13 * (1.0 + rmax) {
                        let t = u[k] / rv[k];
                        if t < t1 {
                            t1 = t;
                            drop = Some(k);
                        }
                    }
                }
                let t2 = if d2sq <= 1e-24 * dsq {
                    f64::INFINITY
                } else {
                    -prob.slack(pc, &x) / d2sq
                };
                if t1.is_infinite() && t2.is_infinite() {
                    let mut uu = vec![0.0; ncons];
                    for (a, &ci) in active.iter().enumerate() {
                        uu[ci] = u[a];
                    }
                    return CoreOut { x: DVector::from_vec(x), u: uu, iterations, status: QpStatus::Infeasible };
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    for i in 0..n {
                        x[i] += t * z[i];
                    }
                }
                for k in 0..nq {
                    u[k] -= t * rv[k];
                }
                u_plus += t;
                if t2 <= t1 {
                    // Full step: add the constraint, rotating d₂ onto its
                    // first entry.
                    for i in (nq + 1..n).rev() {
                        if d[i] == 0.0 {
                            continue;
                        }
                        let (c, s, hyp) = givens(d[i - 1], d[i]);
                        d[i - 1] = hyp;
                        d[i] = 0.0;
                        let (lo, hi) = jm.split_at_mut(i * n);
                        let a = &mut lo[(i - 1) * n..];
                        let b = &mut hi[..n];
                        for e in 0..n {
                            let (xa, xb) = (a[e], b[e]);
                            a[e] = c * xa + s * xb;
                            b[e] = -s * xa + c * xb;
                        }
                    }
                    for i in 0..=nq {
                        r[nq * n + i] = d[i];
                    }
                    active.push(pi);
                    is_active[pi] = true;
                    u.push(u_plus);
                    break;
                }
                // Partial step: drop the blocking constraint.
                let k = drop.expect("finite t1 has a blocking constraint");
                is_active[active[k]] = false;
                active.remove(k);
                u.remove(k);
                for col in k..nq - 1 {
                    for i in 0..=col + 1 {
                        r[col * n + i] = r[(col + 1) * n + i];
                    }
                }
                for i in 0..n {
                    r[(nq - 1) * n + i] = 0.0;
                }
                for i in k..nq - 1 {
                    let (c, s, hyp) = givens(r[i * n + i], r[i * n + i + 1]);
                    r[i * n + i] = hyp;
                    r[i * n + i + 1] = 0.0;
                    for col in i + 1..nq - 1 {
                        let (xa, xb) = (r[col * n + i], r[col * n + i + 1]);
                        r[col * n + i] = c * xa + s * xb;
                        r[col * n + i + 1] = -s * xa + c * xb;
                    }
                    let (lo, hi) = jm.split_at_mut((i + 1) * n);
                    let a = &mut lo[i * n..];
                    let b = &mut hi[..n];
                    for e in 0..n {
                        let (xa, xb) = (a[e], b[e]);
                        a[e] = c * xa + s * xb;
                        b[e] = -s * xa + c * xb;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn bound_active() {
        let p = QpProblem::unconstrained(dm(1, 1, &[2.0]), DVector::zeros(1))
            .with_rows(dm(1, 1, &[-1.0]), DVector::from_vec(vec![-1.0]));
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(kkt_residual(&p, &s.z) <= 1e-9);
        let moved = &s.z + DVector::from_element(1, 0.1);
        assert!(kkt_residual(&p, &moved) >= 0.05);
    }

    #[test]
    fn halfplane_projection() {
        // (x-2)² + (y-2)² = x² + y² - 4x - 4y + 8
        let p = QpProblem::unconstrained(dm(2, 2, &[2.0, 0.0, 0.0, 2.0]), DVector::from_vec(vec![-4.0, -4.0]))
            .with_rows(dm(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![2.0]));
        let s = solve_default(&p).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-12 && (s.z[1] - 1.0).abs() < 1e-12);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn unconstrained_origin() {
        let p = QpProblem::unconstrained(DMatrix::identity(4, 4) * 2.0, DVector::zeros(4));
        let s = solve_default(&p).unwrap();
        assert_eq!(s.z, DVector::zeros(4));
    }

    #[test]
    fn coupled_box_and_rows() {
        let p = QpProblem::unconstrained(dm(2, 2, &[2.0, 1.0, 1.0, 2.0]), DVector::from_vec(vec![-10.0, -10.0]))
            .with_rows(dm(1, 2, &[1.0, -1.0]), DVector::from_vec(vec![0.5]))
            .with_bounds(DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![2.0, 1.0]));
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.5).abs() < 1e-10 && (s.z[1] - 1.0).abs() < 1e-10, "{}", s.z);
        assert!(kkt_residual(&p, &s.z) < 1e-9);
    }

    #[test]
    fn infeasible_reports_violation() {
        let p = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_rows(dm(2, 2, &[1.0, 1.0, -1.0, -1.0]), DVector::from_vec(vec![1.0, -3.0]));
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert!(s.violation.is_some_and(|v| v.amount > 0.5));
        let p = QpProblem::unconstrained(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_bounds(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0]));
        assert_eq!(solve_default(&p).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn singular_p_uses_proximal_path() {
        // min (x + y - 2)² + x  s.t. 0 ≤ x, y ≤ 5  →  x = 0, y = 2 is optimal
        let p = QpProblem::unconstrained(dm(2, 2, &[2.0, 2.0, 2.0, 2.0]), DVector::from_vec(vec![-3.0, -4.0]))
            .with_bounds(DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![5.0, 5.0]));
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "{}", s.diagnostic());
        assert!((s.objective - p.objective(&DVector::from_vec(vec![0.0, 2.0]))).abs() < 1e-6);
        assert!(s.kkt_residual <= 1e-8);
    }

    #[test]
    fn linear_program_in_box() {
        let p = QpProblem::unconstrained(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, -1.0]))
            .with_rows(dm(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_bounds(DVector::from_vec(vec![-1.0, -1.0]), DVector::from_vec(vec![1.0, 1.0]));
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal, "{}", s.diagnostic());
        assert!((s.objective + 2.0).abs() < 1e-6, "{}", s.z);
    }

    #[test]
    fn rejects_indefinite_and_bad_dims() {
        let p = QpProblem::unconstrained(dm(2, 2, &[1.0, 0.0, 0.0, -1.0]), DVector::zeros(2))
            .with_rows(dm(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]));
        assert!(matches!(solve_default(&p), Err(Error::NotConvex(_))));
        let p = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(solve_default(&p), Err(Error::Dimension { .. })));
    }

    #[test]
    fn unbounded_linear_direction() {
        let p = QpProblem::unconstrained(DMatrix::zeros(1, 1), DVector::from_vec(vec![1.0]));
        assert!(matches!(solve_default(&p), Err(Error::Unbounded(0))));
    }

    #[test]
    fn text_dump_has_all_blocks() {
        let p = QpProblem::unconstrained(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_rows(dm(1, 2, &[1.0, 2.0]), DVector::from_vec(vec![3.0]));
        let t = p.to_text();
        for h in ["# P 2 2", "# q 1 2", "# G 1 2", "# h 1 1", "# lb 1 2", "# ub 1 2"] {
            assert!(t.contains(h), "{t}");
        }
        assert!(t.contains("1e0,2e0"));
    }
}
