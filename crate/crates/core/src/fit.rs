//! Nonlinear least squares on top of the `levenberg-marquardt` crate, driven
//! by plain closures with a finite-difference Jacobian.

use std::cell::RefCell;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LsqOptions {
    /// Forward-difference step relative to |p| + 1.
    pub rel_step: f64,
    pub tol: f64,
    pub patience: usize,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self { rel_step: 1e-7, tol: 1e-12, patience: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct LsqOutcome {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    pub jacobian: DMatrix<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

impl LsqOutcome {
    /// Parameter covariance s²(JᵀJ)⁻¹ with s² = SSR/(m − n); `None` if JᵀJ
    /// is singular.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        let (m, n) = self.jacobian.shape();
        let dof = if m > n { (m - n) as f64 } else { 1.0 };
        let jtj = self.jacobian.transpose() * &self.jacobian;
        jtj.try_inverse().map(|inv| inv * (self.ssr / dof))
    }

    pub fn rms(&self) -> f64 {
        (self.ssr / self.residuals.len().max(1) as f64).sqrt()
    }
}

struct Problem<'a, F> {
    f: &'a F,
    p: DVector<f64>,
    r: Option<DVector<f64>>,
    rel_step: f64,
    evals: RefCell<usize>,
    failure: RefCell<Option<Error>>,
}

impl<F> Problem<'_, F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn eval(&self, p: &[f64]) -> Option<DVector<f64>> {
        *self.evals.borrow_mut() += 1;
        match (self.f)(p) {
            Ok(v) if v.iter().all(|x| x.is_finite()) => Some(DVector::from_vec(v)),
            Ok(_) => None,
            Err(e) => {
                self.failure.borrow_mut().get_or_insert(e);
                None
            }
        }
    }
}

impl<F> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
        self.r = self.eval(self.p.as_slice());
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.r.clone()
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let r0 = self.r.as_ref()?;
        let n = self.p.len();
        let mut jac = DMatrix::zeros(r0.len(), n);
        let mut p = self.p.clone();
        for j in 0..n {
            let h = self.rel_step * (p[j].abs() + 1.0);
            let orig = p[j];
            p[j] = orig + h;
            let r1 = self.eval(p.as_slice())?;
            p[j] = orig;
            jac.set_column(j, &((r1 - r0) / h));
        }
        Some(jac)
    }
}

/// Minimizes Σ r_i(p)² from `p0`.
pub fn least_squares<F>(f: F, p0: &[f64], opts: LsqOptions) -> Result<LsqOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if p0.is_empty() {
        return Err(Error::invalid("no parameters to fit"));
    }
    let mut problem = Problem {
        f: &f,
        p: DVector::from_column_slice(p0),
        r: None,
        rel_step: opts.rel_step,
        evals: RefCell::new(0),
        failure: RefCell::new(None),
    };
    problem.r = problem.eval(p0);
    if problem.r.is_none() {
        return Err(problem
            .failure
            .into_inner()
            .unwrap_or_else(|| Error::Fit("residuals not finite at the starting point".into())));
    }
    let (problem, report) = LevenbergMarquardt::new()
        .with_tol(opts.tol)
        .with_patience(opts.patience)
        .minimize(problem);
    if let Some(e) = problem.failure.borrow_mut().take() {
        if problem.r.is_none() {
            return Err(e);
        }
    }
    let r = problem.r.clone().ok_or_else(|| Error::Fit(format!("{:?}", report.termination)))?;
    let jacobian = problem
        .jacobian()
        .ok_or_else(|| Error::Fit("jacobian unavailable at the solution".into()))?;
    let evaluations = *problem.evals.borrow();
    Ok(LsqOutcome {
        params: problem.p.as_slice().to_vec(),
        ssr: r.norm_squared(),
        residuals: r.as_slice().to_vec(),
        jacobian,
        evaluations,
        converged: report.termination.was_successful(),
    })
}
