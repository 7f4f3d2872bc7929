use nalgebra::{DMatrix, DVector};

use super::{primal_residual, row_scales, LpProblem, SolveResult, SolveStatus};
use crate::error::Result;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const PHASE_ONE_TOL: f64 = 1e-8;
const ZERO_ROW_TOL: f64 = 1e-14;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 30;

/// How an original variable is expressed through non-negative columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = lower + x'`
    Shift { col: usize, lower: f64 },
    /// `x = upper - x'`
    Flip { col: usize, upper: f64 },
    /// `x = x⁺ - x⁻`
    Split { pos: usize, neg: usize },
}

impl VarMap {
    fn offset(&self) -> f64 {
        match *self {
            VarMap::Shift { lower, .. } => lower,
            VarMap::Flip { upper, .. } => upper,
            VarMap::Split { .. } => 0.0,
        }
    }

    fn terms(&self) -> [(usize, f64); 2] {
        match *self {
            VarMap::Shift { col, .. } => [(col, 1.0), (usize::MAX, 0.0)],
            VarMap::Flip { col, .. } => [(col, -1.0), (usize::MAX, 0.0)],
            VarMap::Split { pos, neg } => [(pos, 1.0), (neg, -1.0)],
        }
    }
}

/// Dense tableau with an objective row stored last.
struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let piv = self.data[r * w + c];
        for k in 0..w {
            self.data[r * w + k] /= piv;
        }
        self.data[r * w + c] = 1.0;
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for k in 0..w {
                    row[k] -= f * prow[k];
                }
                row[c] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        self.basis[r] = c;
    }

    /// Minimises the objective row over columns allowed by `enter_ok`.
    fn run(&mut self, enter_ok: &dyn Fn(usize) -> bool, max_iter: usize, iters: &mut usize) -> SimplexOutcome {
        let m = self.rows;
        let obj = m;
        let ncols = self.width - 1;
        let cost_scale = (0..ncols).fold(0.0_f64, |s, j| s.max(self.at(obj, j).abs())).max(1.0);
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if *iters >= max_iter {
                return SimplexOutcome::IterationLimit;
            }
            let mut enter = None;
            let mut best = -COST_TOL * cost_scale;
            for j in 0..ncols {
                if !enter_ok(j) {
                    continue;
                }
                let d = self.at(obj, j);
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(col) = enter else {
                return SimplexOutcome::Optimal;
            };

            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..m {
                let a = self.at(r, col);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                match leave {
                    None => leave = Some((r, ratio, a)),
                    Some((lr, lratio, la)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        let better = if tie {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > la
                            }
                        } else {
                            ratio < lratio
                        };
                        if better {
                            leave = Some((r, ratio, a));
                        }
                    }
                }
            }
            let Some((row, ratio, _)) = leave else {
                return SimplexOutcome::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
            self.pivot(row, col);
            *iters += 1;
        }
    }
}

enum SimplexOutcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

/// Two-phase dense simplex.
///
/// The returned point is a basic solution; its basic variables are
/// recomputed from the unpivoted constraint data so accumulated tableau
/// round-off does not leak into the reported values.
pub fn solve_lp(p: &LpProblem) -> Result<SolveResult> {
    p.validate()?;
    let n = p.num_vars();
    let m_orig_in = p.a_in.nrows();
    let m_eq = p.a_eq.nrows();

    let mut maps = Vec::with_capacity(n);
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    let mut n_struct = 0usize;
    for j in 0..n {
        let lo = p.lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[j]);
        let hi = p.upper.as_ref().map_or(f64::INFINITY, |u| u[j]);
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: n_struct, lower: lo });
            if hi.is_finite() {
                bound_rows.push((n_struct, hi - lo));
            }
            n_struct += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Flip { col: n_struct, upper: hi });
            n_struct += 1;
        } else {
            maps.push(VarMap::Split { pos: n_struct, neg: n_struct + 1 });
            n_struct += 2;
        }
    }
    let offset = DVector::from_iterator(n, maps.iter().map(VarMap::offset));

    let m_in = m_orig_in + bound_rows.len();
    let m = m_in + m_eq;

    // Constraint rows in the non-negative column space.
    let mut rows = DMatrix::<f64>::zeros(m, n_struct);
    let mut rhs = DVector::<f64>::zeros(m);
    let transform = |a: &DMatrix<f64>, b: &DVector<f64>, i: usize, rows: &mut DMatrix<f64>, rhs: &mut DVector<f64>, r: usize| {
        for (j, map) in maps.iter().enumerate() {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for (col, t) in map.terms() {
                if col != usize::MAX {
                    rows[(r, col)] += aij * t;
                }
            }
        }
        rhs[r] = b[i] - a.row(i).dot(&offset.transpose());
    };
    for i in 0..m_orig_in {
        transform(&p.a_in, &p.b_in, i, &mut rows, &mut rhs, i);
    }
    for (k, &(col, bound)) in bound_rows.iter().enumerate() {
        rows[(m_orig_in + k, col)] = 1.0;
        rhs[m_orig_in + k] = bound;
    }
    for i in 0..m_eq {
        transform(&p.a_eq, &p.b_eq, i, &mut rows, &mut rhs, m_in + i);
    }

    // Rows that are numerically zero next to the rest of the matrix would be
    // blown up by scaling; treat them as exact zero rows instead.
    let global = rows.amax();
    for r in 0..m {
        if rows.row(r).amax() <= ZERO_ROW_TOL * global {
            rows.row_mut(r).fill(0.0);
        }
    }
    let scales = row_scales(&rows);
    let mut signs = vec![1.0; m];
    for r in 0..m {
        let s = scales[r];
        let sign = if rhs[r] * s < 0.0 { -1.0 } else { 1.0 };
        signs[r] = sign;
        for c in 0..n_struct {
            rows[(r, c)] *= s * sign;
        }
        rhs[r] *= s * sign;
    }

    // Column layout: structural | slacks (one per inequality) | artificials.
    let slack0 = n_struct;
    let art0 = slack0 + m_in;
    let mut art_of_row = vec![usize::MAX; m];
    let mut n_art = 0;
    for r in 0..m {
        if r >= m_in || signs[r] < 0.0 {
            art_of_row[r] = art0 + n_art;
            n_art += 1;
        }
    }
    let ncols = art0 + n_art;
    let width = ncols + 1;

    // Unpivoted standard-form matrix, kept for the final basic re-solve.
    let mut a0 = DMatrix::<f64>::zeros(m, ncols);
    for r in 0..m {
        for c in 0..n_struct {
            a0[(r, c)] = rows[(r, c)];
        }
        if r < m_in {
            a0[(r, slack0 + r)] = signs[r];
        }
        if art_of_row[r] != usize::MAX {
            a0[(r, art_of_row[r])] = 1.0;
        }
    }

    let mut tab = Tableau {
        rows: m,
        width,
        data: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
    };
    for r in 0..m {
        for c in 0..ncols {
            tab.data[r * width + c] = a0[(r, c)];
        }
        tab.data[r * width + ncols] = rhs[r];
        tab.basis[r] = if art_of_row[r] != usize::MAX { art_of_row[r] } else { slack0 + r };
    }

    let max_iter = 200 * (m + ncols) + 1000;
    let mut iters = 0usize;
    let is_art = |j: usize| j >= art0;

    // Phase one: minimise the sum of artificials.
    if n_art > 0 {
        let obj = m * width;
        for c in 0..width {
            tab.data[obj + c] = 0.0;
        }
        for c in art0..ncols {
            tab.data[obj + c] = 1.0;
        }
        for r in 0..m {
            if is_art(tab.basis[r]) {
                for c in 0..width {
                    tab.data[obj + c] -= tab.data[r * width + c];
                }
            }
        }
        match tab.run(&|j| !is_art(j), max_iter, &mut iters) {
            SimplexOutcome::Optimal => {}
            SimplexOutcome::Unbounded | SimplexOutcome::IterationLimit => {
                return Ok(SolveResult::failed(SolveStatus::NumericalFailure, n, m_orig_in, m_eq, iters));
            }
        }
        let infeasibility: f64 = (0..m)
            .filter(|&r| is_art(tab.basis[r]))
            .map(|r| tab.rhs(r).max(0.0))
            .sum();
        let bscale = 1.0 + rhs.amax();
        if infeasibility > PHASE_ONE_TOL * bscale {
            return Ok(SolveResult::failed(SolveStatus::Infeasible, n, m_orig_in, m_eq, iters));
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if !is_art(tab.basis[r]) {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for c in 0..art0 {
                let v = tab.at(r, c).abs();
                if v > PIVOT_TOL && best.is_none_or(|(_, b)| v > b) {
                    best = Some((c, v));
                }
            }
            if let Some((c, _)) = best {
                tab.pivot(r, c);
            }
        }
    }

    // Phase two: minimise -c'ᵀx'.
    let mut cost = vec![0.0; ncols];
    for (j, map) in maps.iter().enumerate() {
        for (col, t) in map.terms() {
            if col != usize::MAX {
                cost[col] -= p.objective[j] * t;
            }
        }
    }
    {
        let obj = m * width;
        tab.data[obj..obj + ncols].copy_from_slice(&cost[..ncols]);
        tab.data[obj + ncols] = 0.0;
        for r in 0..m {
            let cb = cost[tab.basis[r]];
            if cb != 0.0 {
                for c in 0..width {
                    tab.data[obj + c] -= cb * tab.data[r * width + c];
                }
            }
        }
    }
    match tab.run(&|j| !is_art(j), max_iter, &mut iters) {
        SimplexOutcome::Optimal => {}
        SimplexOutcome::Unbounded => {
            return Ok(SolveResult::failed(SolveStatus::Unbounded, n, m_orig_in, m_eq, iters));
        }
        SimplexOutcome::IterationLimit => {
            return Ok(SolveResult::failed(SolveStatus::NumericalFailure, n, m_orig_in, m_eq, iters));
        }
    }

    // Recover basic values and duals from the original data.
    let mut xs = DVector::<f64>::zeros(ncols);
    let mut y = DVector::<f64>::zeros(m);
    if m > 0 {
        let mut basis_mat = DMatrix::<f64>::zeros(m, m);
        for (k, &b) in tab.basis.iter().enumerate() {
            basis_mat.set_column(k, &a0.column(b));
        }
        let lu = basis_mat.clone().lu();
        let tableau_values = DVector::from_iterator(m, (0..m).map(|r| tab.rhs(r)));
        let xb = lu.solve(&rhs).unwrap_or(tableau_values);
        for (k, &b) in tab.basis.iter().enumerate() {
            xs[b] = xb[k].max(0.0);
        }
        let cb = DVector::from_iterator(m, tab.basis.iter().map(|&b| cost[b]));
        if let Some(sol) = basis_mat.transpose().lu().solve(&cb) {
            y = sol;
        }
    }

    let mut x = offset.clone();
    for (j, map) in maps.iter().enumerate() {
        for (col, t) in map.terms() {
            if col != usize::MAX {
                x[j] += t * xs[col];
            }
        }
    }

    // λ for minimising -cᵀx; row r of the standard form is sign·scale·(original row).
    let lam_in = DVector::from_iterator(m_orig_in, (0..m_orig_in).map(|r| -y[r] * signs[r] * scales[r]));
    let lam_eq = DVector::from_iterator(m_eq, (0..m_eq).map(|i| {
        let r = m_in + i;
        -y[r] * signs[r] * scales[r]
    }));

    let primal = primal_residual(&p.a_in, &p.b_in, &p.a_eq, &p.b_eq, &x);
    let data_scale = 1.0 + p.b_in.amax().max(p.b_eq.amax()) + p.a_in.amax().max(p.a_eq.amax()) * x.amax();
    if !(primal <= 1e-7 * data_scale) {
        return Ok(SolveResult::failed(SolveStatus::NumericalFailure, n, m_orig_in, m_eq, iters));
    }
    let kkt = lp_kkt_residual(p, &x, &lam_in, &lam_eq, primal);
    let objective = p.objective.dot(&x);
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        x,
        objective,
        kkt_residual: kkt,
        primal_residual: primal,
        multipliers_in: lam_in,
        multipliers_eq: lam_eq,
        iterations: iters,
    })
}

fn lp_kkt_residual(p: &LpProblem, x: &DVector<f64>, lam_in: &DVector<f64>, lam_eq: &DVector<f64>, primal: f64) -> f64 {
    let n = p.num_vars();
    let cscale = 1.0 + p.objective.amax();
    let bscale = 1.0 + p.b_in.amax().max(p.b_eq.amax());
    let r = -&p.objective + p.a_in.transpose() * lam_in + p.a_eq.transpose() * lam_eq;
    let mut stationarity = 0.0_f64;
    for j in 0..n {
        let lo = p.lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[j]);
        let hi = p.upper.as_ref().map_or(f64::INFINITY, |u| u[j]);
        let at_lo = lo.is_finite() && x[j] - lo <= 1e-9 * (1.0 + lo.abs());
        let at_hi = hi.is_finite() && hi - x[j] <= 1e-9 * (1.0 + hi.abs());
        let res = match (at_lo, at_hi) {
            (true, true) => 0.0,
            (true, false) => (-r[j]).max(0.0),
            (false, true) => r[j].max(0.0),
            (false, false) => r[j].abs(),
        };
        stationarity = stationarity.max(res);
    }
    let dual_infeas = lam_in.iter().fold(0.0_f64, |m, l| m.max(-l));
    let slack = &p.b_in - &p.a_in * x;
    let compl = lam_in
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |m, (l, s)| m.max((l * s).abs()));
    (stationarity / cscale)
        .max(dual_infeas / cscale)
        .max(compl / (cscale * bscale))
        .max(primal / bscale)
}
