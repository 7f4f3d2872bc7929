use nalgebra::{DMatrix, DVector};

use super::{primal_residual, solve_lp, LpProblem, QpProblem, SolveResult, SolveStatus};
use crate::error::Result;

const ACTIVE_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;
/// Consecutive zero-length steps tolerated before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 20;

/// Primal active-set method for convex QPs.
///
/// A feasible start is found with the simplex solver. Each iteration
/// minimises over the null space of the working set; directions of zero
/// curvature along which the objective decreases are followed until a
/// constraint blocks them (or reported as unbounded).
pub fn solve_qp(p: &QpProblem) -> Result<SolveResult> {
    p.validate()?;
    let n = p.num_vars();
    let m_in = p.a_in.nrows();
    let m_eq = p.a_eq.nrows();

    // Unit-norm rows; zero rows are checked once and skipped.
    let in_norms: Vec<f64> = (0..m_in).map(|i| p.a_in.row(i).norm()).collect();
    let eq_norms: Vec<f64> = (0..m_eq).map(|i| p.a_eq.row(i).norm()).collect();
    let bscale = 1.0 + p.b_in.amax().max(p.b_eq.amax());
    for i in 0..m_in {
        if in_norms[i] == 0.0 && p.b_in[i] < -1e-9 * bscale {
            return Ok(SolveResult::failed(SolveStatus::Infeasible, n, m_in, m_eq, 0));
        }
    }
    for i in 0..m_eq {
        if eq_norms[i] == 0.0 && p.b_eq[i].abs() > 1e-9 * bscale {
            return Ok(SolveResult::failed(SolveStatus::Infeasible, n, m_in, m_eq, 0));
        }
    }
    let ineq: Vec<usize> = (0..m_in).filter(|&i| in_norms[i] > 0.0).collect();
    let eqs: Vec<usize> = (0..m_eq).filter(|&i| eq_norms[i] > 0.0).collect();
    let a_row = |i: usize| p.a_in.row(i).transpose() / in_norms[i];
    let b_row = |i: usize| p.b_in[i] / in_norms[i];

    // Feasible starting point.
    let phase_one = solve_lp(
        &LpProblem::new(DVector::zeros(n))
            .with_inequalities(p.a_in.clone(), p.b_in.clone())
            .with_equalities(p.a_eq.clone(), p.b_eq.clone()),
    )?;
    match phase_one.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Ok(SolveResult::failed(SolveStatus::Infeasible, n, m_in, m_eq, phase_one.iterations));
        }
        _ => {
            return Ok(SolveResult::failed(SolveStatus::NumericalFailure, n, m_in, m_eq, phase_one.iterations));
        }
    }
    let mut x = phase_one.x;
    let mut iters = phase_one.iterations;

    let eq_rows: Vec<DVector<f64>> = eqs.iter().map(|&i| p.a_eq.row(i).transpose() / eq_norms[i]).collect();

    let build = |working: &[usize]| -> DMatrix<f64> {
        let k = eq_rows.len() + working.len();
        let mut a = DMatrix::<f64>::zeros(k, n);
        for (r, row) in eq_rows.iter().enumerate() {
            a.set_row(r, &row.transpose());
        }
        for (r, &i) in working.iter().enumerate() {
            a.set_row(eq_rows.len() + r, &a_row(i).transpose());
        }
        a
    };

    // Initial working set: independent active inequalities.
    let mut working: Vec<usize> = Vec::new();
    let mut rank = numerical_rank(&build(&working));
    for &i in &ineq {
        if b_row(i) - a_row(i).dot(&x) <= ACTIVE_TOL * (1.0 + b_row(i).abs()) {
            working.push(i);
            let r = numerical_rank(&build(&working));
            if r > rank {
                rank = r;
            } else {
                working.pop();
            }
        }
    }

    let qscale = p.hessian.amax().max(1.0);
    let max_iter = iters + 50 * (n + m_in + m_eq) + 200;
    let mut degenerate = 0usize;
    let mut bland = false;
    let mut newton_done = false;
    loop {
        if iters >= max_iter {
            return Ok(SolveResult::failed(SolveStatus::NumericalFailure, n, m_in, m_eq, iters));
        }
        iters += 1;
        let a_w = build(&working);
        let z = null_space(&a_w, n);
        let g = &p.hessian * &x + &p.linear;
        let gscale = 1.0 + p.linear.amax() + qscale * x.amax();

        let mut direction: Option<(DVector<f64>, bool)> = None;
        if z.ncols() > 0 && !newton_done {
            let hz = z.transpose() * &p.hessian * &z;
            let hz = 0.5 * (&hz + hz.transpose());
            let gz = z.transpose() * &g;
            let eig = hz.symmetric_eigen();
            let curv_tol = 1e-10 * qscale;
            let mut pz = DVector::<f64>::zeros(z.ncols());
            for k in 0..z.ncols() {
                let v = eig.eigenvectors.column(k);
                let proj = v.dot(&gz);
                if eig.eigenvalues[k] <= curv_tol {
                    if proj.abs() > 1e-9 * gscale && direction.is_none() {
                        let d = -(&z * v) * proj.signum();
                        direction = Some((d, true));
                    }
                } else {
                    pz -= v * (proj / eig.eigenvalues[k]);
                }
            }
            if direction.is_none() {
                let d = &z * pz;
                if d.amax() > 1e-12 * (1.0 + x.amax()) {
                    direction = Some((d, false));
                }
            }
        }

        match direction {
            Some((d, is_ray)) => {
                let mut step = if is_ray { f64::INFINITY } else { 1.0 };
                let mut blocking = None;
                for &i in &ineq {
                    if working.contains(&i) {
                        continue;
                    }
                    let a = a_row(i);
                    let ad = a.dot(&d);
                    if ad > 1e-12 * d.amax() {
                        let alpha = (b_row(i) - a.dot(&x)).max(0.0) / ad;
                        // Ties go to the lowest index, which keeps Bland's
                        // rule consistent once it is switched on.
                        if alpha < step && !(bland && blocking.is_some() && alpha >= step * (1.0 - 1e-12)) {
                            step = alpha;
                            blocking = Some(i);
                        }
                    }
                }
                if !step.is_finite() {
                    return Ok(SolveResult::failed(SolveStatus::Unbounded, n, m_in, m_eq, iters));
                }
                if blocking.is_some() && step * d.amax() <= 1e-14 * (1.0 + x.amax()) {
                    degenerate += 1;
                    if degenerate > DEGENERATE_LIMIT {
                        bland = true;
                    }
                } else {
                    degenerate = 0;
                }
                x += d * step;
                match blocking {
                    Some(i) => working.push(i),
                    // A full Newton step minimises over the working set, up
                    // to round-off that would otherwise keep producing tiny
                    // steps.
                    None => newton_done = !is_ray,
                }
            }
            None => {
                // Stationary on the working set: check multiplier signs.
                let mu = least_squares(&a_w.transpose(), &(-&g));
                let ne = eq_rows.len();
                let mut worst: Option<(usize, f64)> = None;
                for (k, &i) in working.iter().enumerate() {
                    let v = mu[ne + k];
                    if v >= -1e-10 * gscale {
                        continue;
                    }
                    let better = match worst {
                        None => true,
                        Some((wk, w)) => {
                            if bland {
                                i < working[wk]
                            } else {
                                v < w
                            }
                        }
                    };
                    if better {
                        worst = Some((k, v));
                    }
                }
                match worst {
                    Some((k, _)) => {
                        newton_done = false;
                        working.remove(k);
                    }
                    None => {
                        let mut lam_in = DVector::zeros(m_in);
                        for (k, &i) in working.iter().enumerate() {
                            lam_in[i] = mu[ne + k] / in_norms[i];
                        }
                        let mut lam_eq = DVector::zeros(m_eq);
                        for (k, &i) in eqs.iter().enumerate() {
                            lam_eq[i] = mu[k] / eq_norms[i];
                        }
                        return Ok(finish(p, x, lam_in, lam_eq, iters));
                    }
                }
            }
        }
    }
}

fn finish(p: &QpProblem, x: DVector<f64>, lam_in: DVector<f64>, lam_eq: DVector<f64>, iters: usize) -> SolveResult {
    let primal = primal_residual(&p.a_in, &p.b_in, &p.a_eq, &p.b_eq, &x);
    let g = &p.hessian * &x + &p.linear;
    let gscale = 1.0 + p.linear.amax() + p.hessian.amax() * x.amax();
    let bscale = 1.0 + p.b_in.amax().max(p.b_eq.amax());
    let stat = (&g + p.a_in.transpose() * &lam_in + p.a_eq.transpose() * &lam_eq).amax();
    let dual = lam_in.iter().fold(0.0_f64, |m, l| m.max(-l));
    let slack = &p.b_in - &p.a_in * &x;
    let compl = lam_in
        .iter()
        .zip(slack.iter())
        .fold(0.0_f64, |m, (l, s)| m.max((l * s).abs()));
    let kkt = (stat / gscale)
        .max(dual / gscale)
        .max(compl / (gscale * bscale))
        .max(primal / bscale);
    let objective = p.objective_at(&x);
    SolveResult {
        status: SolveStatus::Optimal,
        x,
        objective,
        kkt_residual: kkt,
        primal_residual: primal,
        multipliers_in: lam_in,
        multipliers_eq: lam_eq,
        iterations: iters,
    }
}

fn padded_svd(a: &DMatrix<f64>, n: usize) -> nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let k = a.nrows().max(n);
    let mut sq = DMatrix::<f64>::zeros(k, n);
    sq.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    sq.svd(false, true)
}

fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let smax = s.max();
    s.iter().filter(|v| **v > RANK_TOL * smax.max(1.0)).count()
}

/// Orthonormal basis of `{d : A d = 0}`.
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = padded_svd(a, n);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max().max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| svd.singular_values[k] <= RANK_TOL * smax)
        .map(|k| vt.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max().max(1.0);
    svd.solve(b, RANK_TOL * smax).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}
