//! Levenberg-Marquardt minimization of weighted least-squares objectives.
//!
//! Jacobians come from central finite differences; no fit in this crate
//! supplies analytic derivatives. Box bounds are enforced by clamping
//! candidate steps. The damping parameter multiplies the identity, so the
//! normal equations stay solvable even when the Jacobian is rank deficient —
//! steps then simply do not move along flat directions.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub struct LmConfig {
    pub max_iter: usize,
    pub lambda_init: f64,
    pub rel_tol: f64,
    /// Per-parameter (lower, upper) box constraints.
    pub bounds: Vec<(f64, f64)>,
}

impl LmConfig {
    pub fn unbounded(n_params: usize) -> Self {
        Self {
            max_iter: 500,
            lambda_init: 1e-3,
            rel_tol: 1e-10,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n_params],
        }
    }

    pub fn bounded(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            max_iter: 500,
            lambda_init: 1e-3,
            rel_tol: 1e-10,
            bounds,
        }
    }
}

pub struct LmFit {
    pub params: Vec<f64>,
    /// Objective (sum of squared residuals) after the start and after each
    /// accepted step; strictly decreasing by construction.
    pub objective_trace: Vec<f64>,
    /// Pseudo-inverse of JᵀJ restricted to the identifiable subspace.
    pub covariance: DMatrix<f64>,
    /// Per-parameter norm of the projection onto the null space of J; near 1
    /// means the parameter is locally unidentifiable.
    pub null_component: Vec<f64>,
    pub residual_norm_squared: f64,
    pub n_residuals: usize,
    pub converged: bool,
}

const RANK_CUTOFF: f64 = 1e-8;
const FD_STEP_FLOOR: f64 = 1e-6;

fn clamp_to(bounds: &[(f64, f64)], x: &mut [f64]) {
    for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

fn jacobian<F>(residuals: &F, x: &[f64], m: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        let h = FD_STEP_FLOOR.max(FD_STEP_FLOOR * x[j].abs());
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let rp = residuals(&xp)?;
        let rm = residuals(&xm)?;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    Ok(jac)
}

/// Pseudo-inverse covariance and null-space components from the final Jacobian.
pub fn covariance_from_jacobian(jac: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = jac.ncols();
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd with v requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut cov = DMatrix::zeros(n, n);
    let mut null_component = vec![0.0; n];
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let row = v_t.row(k);
        if smax > 0.0 && s > RANK_CUTOFF * smax {
            let inv_s2 = 1.0 / (s * s);
            for i in 0..n {
                for j in 0..n {
                    cov[(i, j)] += row[i] * row[j] * inv_s2;
                }
            }
        } else {
            for i in 0..n {
                null_component[i] += row[i] * row[i];
            }
        }
    }
    // directions beyond the residual count never appear in a thin SVD; count
    // them as null as well
    if svd.singular_values.len() < n {
        let mut seen = vec![0.0f64; n];
        for k in 0..svd.singular_values.len() {
            let row = v_t.row(k);
            for (i, s) in seen.iter_mut().enumerate() {
                *s += row[i] * row[i];
            }
        }
        for (nc, s) in null_component.iter_mut().zip(&seen) {
            *nc += (1.0 - s).max(0.0);
        }
    }
    (cov, null_component.iter().map(|v| v.sqrt()).collect())
}

/// Minimize the sum of squared residuals from `start`.
pub fn minimize<F>(residuals: F, start: &[f64], cfg: &LmConfig) -> Result<LmFit>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = start.len();
    if cfg.bounds.len() != n {
        return Err(Error::Domain("bounds length must match parameter count".into()));
    }
    let mut x = start.to_vec();
    clamp_to(&cfg.bounds, &mut x);

    let r0 = residuals(&x)?;
    let m = r0.len();
    if m < n {
        return Err(Error::Underdetermined { needed: n, got: m });
    }
    let mut r = DVector::from_vec(r0);
    let mut obj = r.norm_squared();
    let mut trace = vec![obj];
    let mut lambda = cfg.lambda_init;
    let mut converged = false;
    let mut jac = jacobian(&residuals, &x, m)?;

    for _ in 0..cfg.max_iter {
        if obj == 0.0 {
            converged = true;
            break;
        }
        let jt = jac.transpose();
        let gradient = &jt * &r;
        let jtj = &jt * &jac;
        let mut accepted = false;
        // inner loop raises damping until a step is accepted or damping is hopeless
        while lambda < 1e14 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda;
            }
            let step = match a.lu().solve(&(-&gradient)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut x_new: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp_to(&cfg.bounds, &mut x_new);
            let r_new = DVector::from_vec(residuals(&x_new)?);
            let obj_new = r_new.norm_squared();
            if obj_new < obj {
                let rel_change = (obj - obj_new) / obj.max(f64::MIN_POSITIVE);
                x = x_new;
                r = r_new;
                obj = obj_new;
                trace.push(obj);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel_change < cfg.rel_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping: treat as converged
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = jacobian(&residuals, &x, m)?;
    }

    let jac_final = jacobian(&residuals, &x, m)?;
    let (covariance, null_component) = covariance_from_jacobian(&jac_final);
    Ok(LmFit {
        params: x,
        objective_trace: trace,
        covariance,
        null_component,
        residual_norm_squared: obj,
        n_residuals: m,
        converged,
    })
}
