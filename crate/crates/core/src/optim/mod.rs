//! Dense linear and convex quadratic programming.
//!
//! Both solvers work on small dense problems (tens of variables, up to a few
//! thousand rows). [`solve_lp`] is a two-phase tableau simplex that returns a
//! basic (vertex) solution; [`solve_qp`] is a primal active-set method that
//! accepts positive semidefinite Hessians.

mod lp;
mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use lp::solve_lp;
pub use qp::solve_qp;

/// `maximize cᵀx` subject to `A_in x <= b_in`, `A_eq x = b_eq` and optional
/// per-variable bounds (infinite entries mean "no bound").
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lower: Option<DVector<f64>>,
    pub upper: Option<DVector<f64>>,
}

impl LpProblem {
    /// Problem with `n` free variables and no constraints.
    pub fn new(objective: DVector<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lower: None,
            upper: None,
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        check_pair("inequality", &self.a_in, &self.b_in, n)?;
        check_pair("equality", &self.a_eq, &self.b_eq, n)?;
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("objective entries must be finite".into()));
        }
        for (name, bound) in [("lower", &self.lower), ("upper", &self.upper)] {
            if let Some(b) = bound {
                if b.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "{name} bound has {} entries, expected {n}",
                        b.len()
                    )));
                }
                if b.iter().any(|v| v.is_nan()) {
                    return Err(Error::InvalidInput(format!("{name} bound contains NaN")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (&self.lower, &self.upper) {
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return Err(Error::InvalidInput("lower bound exceeds upper bound".into()));
            }
        }
        Ok(())
    }
}

/// `minimize ½ xᵀQx + qᵀx` subject to `A_in x <= b_in`, `A_eq x = b_eq`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QpProblem {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.hessian * x)[(0, 0)] + self.linear.dot(x)
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "Hessian is {}x{}, expected {n}x{n}",
                self.hessian.nrows(),
                self.hessian.ncols()
            )));
        }
        check_pair("inequality", &self.a_in, &self.b_in, n)?;
        check_pair("equality", &self.a_eq, &self.b_eq, n)?;
        if self.hessian.iter().chain(self.linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("objective entries must be finite".into()));
        }
        let scale = self.hessian.amax().max(1.0);
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::InvalidInput(format!("Hessian is not symmetric (asymmetry {asym:.3e})")));
        }
        if n > 0 {
            let sym = 0.5 * (&self.hessian + self.hessian.transpose());
            let min_eig = sym.symmetric_eigenvalues().min();
            if min_eig < -1e-9 * scale {
                return Err(Error::InvalidInput(format!(
                    "Hessian is indefinite (smallest eigenvalue {min_eig:.3e})"
                )));
            }
        }
        Ok(())
    }
}

fn check_pair(name: &str, a: &DMatrix<f64>, b: &DVector<f64>, n: usize) -> Result<()> {
    if a.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "{name} matrix has {} columns, expected {n}",
            a.ncols()
        )));
    }
    if a.nrows() != b.len() {
        return Err(Error::InvalidInput(format!(
            "{name} matrix has {} rows but right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} constraints must be finite")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Outcome of a solve. `x`, `objective` and the multipliers are only
/// meaningful when `status` is [`SolveStatus::Optimal`].
///
/// Multipliers follow the convention that `λ_in >= 0` and
/// `∇f + A_inᵀλ_in + A_eqᵀλ_eq = 0` for minimisation (the LP reports them for
/// `minimize -cᵀx`).
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub primal_residual: f64,
    pub multipliers_in: DVector<f64>,
    pub multipliers_eq: DVector<f64>,
    pub iterations: usize,
}

impl SolveResult {
    fn failed(status: SolveStatus, n: usize, m_in: usize, m_eq: usize, iterations: usize) -> Self {
        Self {
            status,
            x: DVector::from_element(n, f64::NAN),
            objective: f64::NAN,
            kkt_residual: f64::INFINITY,
            primal_residual: f64::INFINITY,
            multipliers_in: DVector::zeros(m_in),
            multipliers_eq: DVector::zeros(m_eq),
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Largest violation of `A_in x <= b_in` and `A_eq x = b_eq`.
pub fn primal_residual(
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    x: &DVector<f64>,
) -> f64 {
    let ineq = (a_in * x - b_in).iter().fold(0.0_f64, |m, v| m.max(*v));
    let eq = (a_eq * x - b_eq).amax();
    ineq.max(eq)
}

/// Scale applied to each row so that its largest coefficient is one.
fn row_scales(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let m = a.row(i).amax();
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect()
}
