//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.
//!
//! Minimizes ½‖r(p)‖² with Marquardt diagonal scaling and a multiplicatively
//! adapted damping factor. Termination: relative parameter step below
//! `xtol`, relative cost decrease below `ftol` on an accepted step, or the
//! damping saturating at a point no step can improve. Hitting `max_iter`
//! without any of these is reported as divergence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Writes r(p) into `out`. Non-finite entries mark the point as infeasible.
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Jacobian ∂r/∂p. Defaults to central differences.
    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let m = self.n_residuals();
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        let mut q = p.to_vec();
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1e-3);
            q[j] = p[j] + h;
            self.residuals(&q, &mut plus);
            q[j] = p[j] - h;
            self.residuals(&q, &mut minus);
            q[j] = p[j];
            for i in 0..m {
                jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iter: usize,
    pub xtol: f64,
    pub ftol: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            xtol: 1e-10,
            ftol: 1e-15,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ParameterStep,
    CostStall,
    DampingSaturated,
    ZeroResidual,
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Σ r²
    pub cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmSolution {
    pub fn dof(&self) -> usize {
        self.residuals.len().saturating_sub(self.params.len())
    }

    pub fn reduced_chi2(&self) -> f64 {
        match self.dof() {
            0 => f64::NAN,
            d => self.cost / d as f64,
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|x| x.is_finite())
}

pub fn minimize<P: Problem + ?Sized>(problem: &P, p0: &[f64], cfg: &LmConfig) -> Result<LmSolution> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    assert_eq!(p0.len(), n, "parameter vector length");
    let mut p = p0.to_vec();
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    if !all_finite(&r) {
        return Err(Error::Diverged("non-finite residuals at the starting point".into()));
    }
    let mut cost = sum_sq(&r);
    let mut jac = DMatrix::zeros(m, n);
    let mut damping = cfg.initial_damping;
    let mut trial = vec![0.0; m];
    let mut p_new = vec![0.0; n];

    for iter in 1..=cfg.max_iter {
        if cost == 0.0 {
            return Ok(LmSolution { params: p, residuals: r, cost, iterations: iter - 1, termination: Termination::ZeroResidual });
        }
        problem.jacobian(&p, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        let a = jac.tr_mul(&jac);
        let dmax = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].max(1e-30 * dmax).max(1e-300)).collect();

        let accepted = loop {
            if damping > 1e20 {
                break None;
            }
            let mut lhs = a.clone();
            for i in 0..n {
                lhs[(i, i)] += damping * diag[i];
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            for i in 0..n {
                p_new[i] = p[i] + step[i];
            }
            problem.residuals(&p_new, &mut trial);
            let new_cost = sum_sq(&trial);
            if all_finite(&trial) && new_cost.is_finite() && new_cost <= cost {
                break Some((step.norm(), new_cost));
            }
            damping *= 10.0;
        };

        let Some((step_norm, new_cost)) = accepted else {
            return Ok(LmSolution { params: p, residuals: r, cost, iterations: iter, termination: Termination::DampingSaturated });
        };
        let p_norm: f64 = p_new.iter().map(|x| x * x).sum::<f64>().sqrt();
        let decrease = cost - new_cost;
        std::mem::swap(&mut p, &mut p_new);
        std::mem::swap(&mut r, &mut trial);
        cost = new_cost;
        damping = (damping / 10.0).max(1e-15);

        if step_norm <= cfg.xtol * (p_norm + cfg.xtol) {
            return Ok(LmSolution { params: p, residuals: r, cost, iterations: iter, termination: Termination::ParameterStep });
        }
        if decrease <= cfg.ftol * cost {
            return Ok(LmSolution { params: p, residuals: r, cost, iterations: iter, termination: Termination::CostStall });
        }
    }
    Err(Error::Diverged(format!("no convergence after {} iterations", cfg.max_iter)))
}

/// Parameter covariance (JᵀJ)⁻¹·`scale` at `p`.
///
/// Directions the data do not constrain (relative eigenvalue below 1e-14
/// after diagonal equilibration) get infinite variance on every parameter
/// that loads on them.
pub fn covariance<P: Problem + ?Sized>(problem: &P, p: &[f64], scale: f64) -> DMatrix<f64> {
    let n = problem.n_params();
    let mut jac = DMatrix::zeros(problem.n_residuals(), n);
    problem.jacobian(p, &mut jac);
    covariance_from_jacobian(&jac, scale)
}

pub fn covariance_from_jacobian(jac: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let n = jac.ncols();
    let a = jac.tr_mul(jac);
    let s: Vec<f64> = (0..n)
        .map(|i| if a[(i, i)] > 0.0 { 1.0 / a[(i, i)].sqrt() } else { 0.0 })
        .collect();
    let mut b = a.clone();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= s[i] * s[j];
        }
    }
    let eig = b.symmetric_eigen();
    let emax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let mut pinv = DMatrix::zeros(n, n);
    let mut unconstrained = vec![false; n];
    for k in 0..n {
        let e = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        if e > 1e-14 * emax && e > 0.0 {
            pinv += (v * v.transpose()) / e;
        } else {
            for i in 0..n {
                if v[i].abs() > 1e-6 {
                    unconstrained[i] = true;
                }
            }
        }
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] = pinv[(i, j)] * s[i] * s[j] * scale;
        }
        if s[i] == 0.0 {
            unconstrained[i] = true;
        }
    }
    for i in 0..n {
        if unconstrained[i] {
            for j in 0..n {
                cov[(i, j)] = f64::INFINITY;
                cov[(j, i)] = f64::INFINITY;
            }
        }
    }
    cov
}

/// Correlation matrix from a covariance; NaN where a variance is not finite.
pub fn correlation(cov: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = cov.nrows();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = (cov[(i, i)] * cov[(j, j)]).sqrt();
                    if d.is_finite() && d > 0.0 {
                        cov[(i, j)] / d
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        })
        .collect()
}

/// Minimum of a unimodal function on [a, b] by golden-section search.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
