//! Parameter recovery: polynomial rate fits, steady-state charge fits,
//! Poisson-mixture histogram fits, exponential decays, the joint
//! spin-to-charge conversion fit, and rate extraction from transition counts.
//!
//! All nonlinear fits run the same Levenberg-Marquardt engine with
//! finite-difference Jacobians (damping start 1e-3, ×/÷10 adaptation,
//! relative-objective tolerance 1e-10, 500 iterations). Confidence intervals
//! are Gaussian: 65% two-sided uses z = 0.935, 95% uses z = 1.96. Parameters
//! that the data cannot constrain (null directions of the Jacobian) are
//! reported with unbounded intervals and a warning rather than a misleading
//! finite width.

pub mod em;
pub mod lm;
mod wls;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::photon::poisson_pmf;
use crate::scc::{self, SccParams, SpinLabel};
use crate::{Error, Result};

const Z65: f64 = 0.935;
const Z95: f64 = 1.96;

/// Threshold on a parameter's null-space component above which its interval
/// is reported as unbounded.
const UNIDENTIFIABLE_CUTOFF: f64 = 0.1;

/// One named, dimensioned fit parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

/// Fit output: point estimates, covariance, confidence half-widths, and the
/// coefficient of determination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub covariance: Vec<Vec<f64>>,
    /// 65% two-sided half-widths per parameter; infinite when unidentifiable.
    pub ci65: Vec<f64>,
    /// 95% two-sided half-widths per parameter.
    pub ci95: Vec<f64>,
    pub r_squared: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn ci65_of(&self, name: &str) -> Option<f64> {
        let idx = self.parameters.iter().position(|p| p.name == name)?;
        Some(self.ci65[idx])
    }

    pub fn ci95_of(&self, name: &str) -> Option<f64> {
        let idx = self.parameters.iter().position(|p| p.name == name)?;
        Some(self.ci95[idx])
    }

    pub fn sigma_of(&self, name: &str) -> Option<f64> {
        let idx = self.parameters.iter().position(|p| p.name == name)?;
        Some(self.covariance[idx][idx].sqrt())
    }
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn intervals(
    cov: &DMatrix<f64>,
    null_component: &[f64],
    names: &[&str],
    warnings: &mut Vec<String>,
) -> (Vec<f64>, Vec<f64>) {
    let mut ci65 = Vec::with_capacity(names.len());
    let mut ci95 = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let flat = null_component.get(i).copied().unwrap_or(0.0) > UNIDENTIFIABLE_CUTOFF;
        if flat {
            warnings.push(format!(
                "parameter {name} lies along an unidentifiable direction; its confidence interval is unbounded"
            ));
            ci65.push(f64::INFINITY);
            ci95.push(f64::INFINITY);
        } else {
            let sigma = cov[(i, i)].max(0.0).sqrt();
            ci65.push(Z65 * sigma);
            ci95.push(Z95 * sigma);
        }
    }
    (ci65, ci95)
}

/// Weighted least-squares fit of the NIR-only rate polynomial
/// a·R³ + b·R² + c to (power mW, rate kHz, error kHz) data.
///
/// With `include_quadratic` false, b is fixed to zero and only (a, c) are
/// fitted, the shape used for the ionization channel.
pub fn fit_rate_polynomial(data: &[(f64, f64, f64)], include_quadratic: bool) -> Result<FitResult> {
    let n_params = if include_quadratic { 3 } else { 2 };
    if data.len() < n_params {
        return Err(Error::Underdetermined { needed: n_params, got: data.len() });
    }
    for &(r, _, err) in data {
        if r < 0.0 {
            return Err(Error::Domain(format!("power must be >= 0 mW, got {r}")));
        }
        if !(err > 0.0) {
            return Err(Error::Domain(format!("errors must be > 0 kHz, got {err}")));
        }
    }
    let m = data.len();
    let design = DMatrix::from_fn(m, n_params, |i, j| {
        let r = data[i].0;
        if include_quadratic {
            match j {
                0 => r * r * r,
                1 => r * r,
                _ => 1.0,
            }
        } else if j == 0 {
            r * r * r
        } else {
            1.0
        }
    });
    let y = DVector::from_fn(m, |i, _| data[i].1);
    let w = DVector::from_fn(m, |i, _| 1.0 / (data[i].2 * data[i].2));
    let fit = wls::solve(&design, &y, &w)?;

    let (names, units): (Vec<&str>, Vec<&str>) = if include_quadratic {
        (vec!["a", "b", "c"], vec!["kHz/mW^3", "kHz/mW^2", "kHz"])
    } else {
        (vec!["a", "c"], vec!["kHz/mW^3", "kHz"])
    };
    let mut warnings = Vec::new();
    if !include_quadratic {
        warnings.push("quadratic coefficient b fixed to zero".into());
    }
    let null = vec![0.0; n_params];
    let (ci65, ci95) = intervals(&fit.covariance, &null, &names, &mut warnings);
    Ok(FitResult {
        parameters: names
            .iter()
            .zip(&units)
            .zip(&fit.params)
            .map(|((name, unit), &value)| FitParameter {
                name: (*name).into(),
                value,
                unit: (*unit).into(),
            })
            .collect(),
        covariance: matrix_to_rows(&fit.covariance),
        ci65,
        ci95,
        r_squared: fit.r_squared,
        warnings,
    })
}

fn weighted_r_squared(data_y: &[f64], fitted: &[f64], weights: &[f64]) -> f64 {
    let w_total: f64 = weights.iter().sum();
    let mean = data_y.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / w_total;
    let ss_res: f64 = data_y
        .iter()
        .zip(fitted)
        .zip(weights)
        .map(|((y, f), w)| w * (y - f) * (y - f))
        .sum();
    let ss_tot: f64 = data_y
        .iter()
        .zip(weights)
        .map(|(y, w)| w * (y - mean) * (y - mean))
        .sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    }
}

/// Nonlinear weighted fit of p₋(R) = γ(1+αR)/(1+δR+βR²) to
/// (NIR power mW, p₋, error) data. Requires at least 5 points.
pub fn fit_steady_state(data: &[(f64, f64, f64)]) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(Error::Underdetermined { needed: 5, got: data.len() });
    }
    for &(r, _, err) in data {
        if r < 0.0 || !(err > 0.0) {
            return Err(Error::Domain(
                "powers must be >= 0 and errors > 0 in steady-state data".into(),
            ));
        }
    }
    let model = |p: &[f64], r: f64| -> f64 {
        let (alpha, beta, gamma, delta) = (p[0].max(0.0), p[1].max(0.0), p[2].clamp(0.0, 1.0), p[3].max(0.0));
        gamma * (1.0 + alpha * r) / (1.0 + delta * r + beta * r * r)
    };
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(data.iter().map(|&(r, y, err)| (model(p, r) - y) / err).collect())
    };

    // data-driven start: γ from the lowest-power point, length scales from the
    // middle of the sweep
    let lowest = data
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty");
    let r_scale = {
        let mut rs: Vec<f64> = data.iter().map(|d| d.0).filter(|&r| r > 0.0).collect();
        rs.sort_by(f64::total_cmp);
        rs.get(rs.len() / 2).copied().unwrap_or(1.0)
    };
    let start = [
        2.0 / r_scale,
        0.1 / (r_scale * r_scale),
        lowest.1.clamp(0.01, 0.99),
        1.0 / r_scale,
    ];
    let cfg = lm::LmConfig::bounded(vec![
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
        (0.0, 1.0),
        (0.0, f64::INFINITY),
    ]);
    let fit = lm::minimize(residuals, &start, &cfg)?;

    let names = ["alpha", "beta", "gamma", "delta"];
    let units = ["1/mW", "1/mW^2", "1", "1/mW"];
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push("iteration limit reached before convergence".into());
    }
    let (ci65, ci95) = intervals(&fit.covariance, &fit.null_component, &names, &mut warnings);
    let fitted: Vec<f64> = data.iter().map(|&(r, _, _)| model(&fit.params, r)).collect();
    let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
    let ws: Vec<f64> = data.iter().map(|d| 1.0 / (d.2 * d.2)).collect();
    Ok(FitResult {
        parameters: names
            .iter()
            .zip(&units)
            .zip(&fit.params)
            .map(|((name, unit), &value)| FitParameter {
                name: (*name).into(),
                value,
                unit: (*unit).into(),
            })
            .collect(),
        covariance: matrix_to_rows(&fit.covariance),
        ci65,
        ci95,
        r_squared: weighted_r_squared(&ys, &fitted, &ws),
        warnings,
    })
}

/// Symmetric pseudo-inverse with a relative singular-value cutoff.
fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(n, n);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if smax > 0.0 && s > 1e-10 * smax {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += v_t[(k, i)] * u[(j, k)] / s;
                }
            }
        }
    }
    out
}

/// Maximum-likelihood fit of a two-component Poisson mixture to a
/// (photon count, occurrences) histogram via expectation-maximization.
///
/// Occurrences should be shot counts; the reported uncertainties come from
/// the observed information (numeric Hessian of the log-likelihood) and scale
/// with the total number of shots.
pub fn fit_poisson_mixture(histogram: &[(u32, f64)]) -> Result<FitResult> {
    let em_fit = em::fit_mixture_em(histogram, 2000)?;
    let names = ["eta_zero", "eta_minus", "weight_minus"];
    let units = ["counts", "counts", "1"];
    let values = [em_fit.eta_zero, em_fit.eta_minus, em_fit.weight_minus];
    let mut warnings = Vec::new();

    let (cov, ci65, ci95) = if em_fit.degenerate {
        warnings.push(
            "histogram supports a single component; eta_zero and weight_minus are unidentifiable"
                .into(),
        );
        (
            DMatrix::zeros(3, 3),
            vec![f64::INFINITY, f64::INFINITY, f64::INFINITY],
            vec![f64::INFINITY, f64::INFINITY, f64::INFINITY],
        )
    } else {
        // observed information: numeric Hessian of the negative log-likelihood
        let nll = |p: &[f64]| -> f64 {
            -histogram
                .iter()
                .map(|&(n, occ)| {
                    let pm = p[2].clamp(0.0, 1.0) * poisson_pmf(n, p[1].max(1e-12))
                        + (1.0 - p[2].clamp(0.0, 1.0)) * poisson_pmf(n, p[0].max(0.0));
                    occ * pm.max(1e-300).ln()
                })
                .sum::<f64>()
        };
        let mut hess = DMatrix::zeros(3, 3);
        let h: Vec<f64> = values.iter().map(|v| 1e-4f64.max(1e-4 * v.abs())).collect();
        let f0 = nll(&values);
        for i in 0..3 {
            for j in i..3 {
                let val = if i == j {
                    let mut xp = values;
                    let mut xm = values;
                    xp[i] += h[i];
                    xm[i] -= h[i];
                    (nll(&xp) - 2.0 * f0 + nll(&xm)) / (h[i] * h[i])
                } else {
                    let mut xpp = values;
                    let mut xpm = values;
                    let mut xmp = values;
                    let mut xmm = values;
                    xpp[i] += h[i];
                    xpp[j] += h[j];
                    xpm[i] += h[i];
                    xpm[j] -= h[j];
                    xmp[i] -= h[i];
                    xmp[j] += h[j];
                    xmm[i] -= h[i];
                    xmm[j] -= h[j];
                    (nll(&xpp) - nll(&xpm) - nll(&xmp) + nll(&xmm)) / (4.0 * h[i] * h[j])
                };
                hess[(i, j)] = val;
                hess[(j, i)] = val;
            }
        }
        let cov = pseudo_inverse(&hess);
        let ci65 = (0..3).map(|i| Z65 * cov[(i, i)].max(0.0).sqrt()).collect();
        let ci95 = (0..3).map(|i| Z95 * cov[(i, i)].max(0.0).sqrt()).collect();
        (cov, ci65, ci95)
    };

    // descriptive goodness: model pmf against the empirical distribution
    let total: f64 = histogram.iter().map(|&(_, occ)| occ).sum();
    let emp: Vec<f64> = histogram.iter().map(|&(_, occ)| occ / total).collect();
    let modeled: Vec<f64> = histogram
        .iter()
        .map(|&(n, _)| {
            em_fit.weight_minus * poisson_pmf(n, em_fit.eta_minus)
                + (1.0 - em_fit.weight_minus) * poisson_pmf(n, em_fit.eta_zero)
        })
        .collect();
    let ones = vec![1.0; emp.len()];
    Ok(FitResult {
        parameters: names
            .iter()
            .zip(&units)
            .zip(&values)
            .map(|((name, unit), &value)| FitParameter {
                name: (*name).into(),
                value,
                unit: (*unit).into(),
            })
            .collect(),
        covariance: matrix_to_rows(&cov),
        ci65,
        ci95,
        r_squared: weighted_r_squared(&emp, &modeled, &ones),
        warnings,
    })
}

/// Unweighted fit of amplitude·exp(−t/lifetime) + offset to (delay ns, value)
/// data.
pub fn fit_exponential(data: &[(f64, f64)]) -> Result<FitResult> {
    if data.len() < 3 {
        return Err(Error::Underdetermined { needed: 3, got: data.len() });
    }
    let model = |p: &[f64], t: f64| p[0] * (-t / p[1].max(1e-9)).exp() + p[2];
    let residuals =
        |p: &[f64]| -> Result<Vec<f64>> { Ok(data.iter().map(|&(t, y)| model(p, t) - y).collect()) };

    let first = data.iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
    let last = data.iter().max_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
    let span = (last.0 - first.0).max(1e-6);
    let start = [first.1 - last.1, span / 3.0, last.1];
    let cfg = lm::LmConfig::bounded(vec![
        (f64::NEG_INFINITY, f64::INFINITY),
        (1e-9, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ]);
    let fit = lm::minimize(residuals, &start, &cfg)?;

    // unweighted data: scale the covariance by the residual variance
    let dof = (fit.n_residuals as f64 - 3.0).max(1.0);
    let s2 = fit.residual_norm_squared / dof;
    let cov = &fit.covariance * s2;

    let names = ["amplitude", "lifetime", "offset"];
    let units = ["1", "ns", "1"];
    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push("iteration limit reached before convergence".into());
    }
    let y_scale = data.iter().map(|d| d.1.abs()).fold(0.0, f64::max).max(1e-12);
    let mut null = fit.null_component.clone();
    if fit.params[0].abs() < 1e-6 * y_scale {
        warnings.push("amplitude is consistent with zero; the lifetime is unidentifiable".into());
        null[1] = 1.0;
    }
    let (ci65, ci95) = intervals(&cov, &null, &names, &mut warnings);
    let fitted: Vec<f64> = data.iter().map(|&(t, _)| model(&fit.params, t)).collect();
    let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
    let ones = vec![1.0; ys.len()];
    Ok(FitResult {
        parameters: names
            .iter()
            .zip(&units)
            .zip(&fit.params)
            .map(|((name, unit), &value)| FitParameter {
                name: (*name).into(),
                value,
                unit: (*unit).into(),
            })
            .collect(),
        covariance: matrix_to_rows(&cov),
        ci65,
        ci95,
        r_squared: weighted_r_squared(&ys, &fitted, &ones),
        warnings,
    })
}

/// Options for the joint conversion-model fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccJointFitOptions {
    /// Triplet ionization probability per excitation, held fixed.
    pub p_ion: f64,
    /// Start point (charge_init_nv0, k35, k45, p_sing, k51_over_k52, spin_init).
    pub start: [f64; 6],
}

impl Default for SccJointFitOptions {
    fn default() -> Self {
        Self {
            p_ion: 0.005,
            start: [0.05, 0.05, 0.2, 0.3, 2.0, 0.9],
        }
    }
}

const SCC_PARAM_NAMES: [&str; 6] = [
    "charge_init_nv0",
    "k35",
    "k45",
    "p_sing",
    "k51_over_k52",
    "spin_init",
];

fn scc_model_curves(theta: &[f64], p_ion: f64, max_n: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    let params = SccParams::new(
        p_ion,
        theta[1].clamp(0.0, 1.0),
        theta[2].clamp(0.0, 1.0),
        theta[3].clamp(0.0, 1.0),
        theta[4].max(0.0),
        theta[5].clamp(0.0, 1.0),
        theta[0].clamp(0.0, 1.0),
    )?;
    let cycle = scc::cycle_matrix(&params)?;
    let mut curves = (Vec::with_capacity(max_n as usize + 1), Vec::with_capacity(max_n as usize + 1));
    for (spin, out) in [(SpinLabel::Ms0, &mut curves.0), (SpinLabel::Ms1, &mut curves.1)] {
        let mut p = scc::initial_state(&params, spin)?.populations();
        out.push(p[0] + p[1]);
        for _ in 0..max_n {
            let mut next = [0.0; 6];
            for i in 0..6 {
                for j in 0..6 {
                    next[i] += cycle[i][j] * p[j];
                }
            }
            p = next;
            out.push(p[0] + p[1]);
        }
    }
    Ok(curves)
}

/// Joint fit of the six-level conversion model to the two spin-initialization
/// datasets (cycle count, NV⁻ population, error), with the triplet ionization
/// probability held fixed at 0.5%.
///
/// Either dataset may be empty, which degrades to a single-preparation fit;
/// the two β(n) curves together expose only five independent observables, so
/// one direction (dominated by the singlet return ratio) is structurally
/// unidentifiable and is reported with an unbounded interval.
pub fn fit_scc_joint(ms0: &[(u32, f64, f64)], ms1: &[(u32, f64, f64)]) -> Result<FitResult> {
    fit_scc_joint_with_options(ms0, ms1, &SccJointFitOptions::default())
}

pub fn fit_scc_joint_with_options(
    ms0: &[(u32, f64, f64)],
    ms1: &[(u32, f64, f64)],
    options: &SccJointFitOptions,
) -> Result<FitResult> {
    let got = ms0.len() + ms1.len();
    if got < 6 {
        return Err(Error::Underdetermined { needed: 6, got });
    }
    for &(_, _, err) in ms0.iter().chain(ms1.iter()) {
        if !(err > 0.0) {
            return Err(Error::Domain(format!("errors must be > 0, got {err}")));
        }
    }
    let max_n = ms0
        .iter()
        .chain(ms1.iter())
        .map(|d| d.0)
        .max()
        .expect("nonempty data");
    let p_ion = options.p_ion;
    let residuals = |theta: &[f64]| -> Result<Vec<f64>> {
        let (c0, c1) = scc_model_curves(theta, p_ion, max_n)?;
        let mut out = Vec::with_capacity(ms0.len() + ms1.len());
        for &(n, y, err) in ms0 {
            out.push((c0[n as usize] - y) / err);
        }
        for &(n, y, err) in ms1 {
            out.push((c1[n as usize] - y) / err);
        }
        Ok(out)
    };
    let cfg = lm::LmConfig::bounded(vec![
        (0.0, 1.0),
        (0.0, 1.0),
        (0.0, 1.0),
        (0.0, 1.0),
        (0.0, 100.0),
        (0.0, 1.0),
    ]);
    let fit = lm::minimize(residuals, &options.start, &cfg)?;

    let mut warnings = Vec::new();
    if !fit.converged {
        warnings.push("iteration limit reached before convergence".into());
    }
    let (ci65, ci95) = intervals(&fit.covariance, &fit.null_component, &SCC_PARAM_NAMES, &mut warnings);
    let (c0, c1) = scc_model_curves(&fit.params, p_ion, max_n)?;
    let mut ys = Vec::new();
    let mut fitted = Vec::new();
    let mut ws = Vec::new();
    for &(n, y, err) in ms0 {
        ys.push(y);
        fitted.push(c0[n as usize]);
        ws.push(1.0 / (err * err));
    }
    for &(n, y, err) in ms1 {
        ys.push(y);
        fitted.push(c1[n as usize]);
        ws.push(1.0 / (err * err));
    }
    Ok(FitResult {
        parameters: SCC_PARAM_NAMES
            .iter()
            .zip(&fit.params)
            .map(|(name, &value)| FitParameter {
                name: (*name).into(),
                value,
                unit: "1".into(),
            })
            .collect(),
        covariance: matrix_to_rows(&fit.covariance),
        ci65,
        ci95,
        r_squared: weighted_r_squared(&ys, &fitted, &ws),
        warnings,
    })
}

/// Rate estimate from transition counting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate_khz: f64,
    pub error_khz: f64,
    /// Set when no transitions were observed; `error_khz` is then a one-sided
    /// 95% upper bound rather than a standard deviation.
    pub is_upper_bound: bool,
}

/// Transition-probability rate estimator: rate = (k/n)/τ with a binomial
/// standard error. Zero counts yield a one-sided upper bound.
pub fn rate_from_transitions(
    n_transitions: u64,
    n_trials: u64,
    pulse_duration_ms: f64,
) -> Result<RateEstimate> {
    if n_trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    if n_transitions > n_trials {
        return Err(Error::Domain(format!(
            "{n_transitions} transitions exceed {n_trials} trials"
        )));
    }
    if !(pulse_duration_ms > 0.0) {
        return Err(Error::Domain(format!(
            "pulse duration must be > 0 ms, got {pulse_duration_ms}"
        )));
    }
    let n = n_trials as f64;
    let p = n_transitions as f64 / n;
    if n_transitions == 0 {
        // one-sided 95% bound: p_up = 1 − 0.05^(1/n)
        let p_up = 1.0 - 0.05f64.powf(1.0 / n);
        return Ok(RateEstimate {
            rate_khz: 0.0,
            error_khz: p_up / pulse_duration_ms,
            is_upper_bound: true,
        });
    }
    let sigma_p = (p * (1.0 - p) / n).sqrt();
    Ok(RateEstimate {
        rate_khz: p / pulse_duration_ms,
        error_khz: sigma_p / pulse_duration_ms,
        is_upper_bound: false,
    })
}

/// Saturation-corrected variant rate = −ln(1−p)/τ, honest when p is not
/// small; errors propagate through the logarithm.
pub fn rate_from_transitions_corrected(
    n_transitions: u64,
    n_trials: u64,
    pulse_duration_ms: f64,
) -> Result<RateEstimate> {
    let naive = rate_from_transitions(n_transitions, n_trials, pulse_duration_ms)?;
    if naive.is_upper_bound {
        return Ok(naive);
    }
    let p = n_transitions as f64 / n_trials as f64;
    if p >= 1.0 {
        return Err(Error::Degenerate(
            "every trial transitioned; the rate is unresolved by this pulse".into(),
        ));
    }
    let sigma_p = naive.error_khz * pulse_duration_ms;
    Ok(RateEstimate {
        rate_khz: -(1.0 - p).ln() / pulse_duration_ms,
        error_khz: sigma_p / ((1.0 - p) * pulse_duration_ms),
        is_upper_bound: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn table1_ion_data(rng: &mut StdRng, rel_noise: f64) -> Vec<(f64, f64, f64)> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        (1..=12)
            .map(|i| {
                let r = i as f64 * 8.0;
                let truth = 4.7e-7 * r * r * r + 0.039;
                let sigma = (rel_noise * truth).max(1e-6);
                (r, truth + sigma * normal.sample(rng), sigma)
            })
            .collect()
    }

    #[test]
    fn rate_polynomial_recovers_ionization_truth_within_two_sigma() {
        let mut rng = StdRng::seed_from_u64(21);
        let data = table1_ion_data(&mut rng, 0.05);
        let fit = fit_rate_polynomial(&data, false).unwrap();
        let a = fit.value("a").unwrap();
        let c = fit.value("c").unwrap();
        assert!((a - 4.7e-7).abs() <= 2.0 * fit.sigma_of("a").unwrap(), "a = {a}");
        assert!((c - 0.039).abs() <= 2.0 * fit.sigma_of("c").unwrap(), "c = {c}");
    }

    #[test]
    fn rate_polynomial_exact_data_is_exact() {
        let data: Vec<(f64, f64, f64)> = (1..=10)
            .map(|i| {
                let r = i as f64 * 10.0;
                (r, 5.1e-7 * r * r * r + 8.4e-5 * r * r + 1e-7, 1e-4)
            })
            .collect();
        let fit = fit_rate_polynomial(&data, true).unwrap();
        assert!((fit.value("a").unwrap() - 5.1e-7).abs() < 1e-12);
        assert!((fit.value("b").unwrap() - 8.4e-5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn recombination_needs_its_quadratic_term() {
        // data generated from the cubic+quadratic recombination shape: forcing
        // b = 0 visibly degrades the fit
        let mut rng = StdRng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let data: Vec<(f64, f64, f64)> = (1..=12)
            .map(|i| {
                let r = i as f64 * 8.0;
                let truth = 5.1e-7 * r * r * r + 8.4e-5 * r * r + 1e-7;
                let sigma = (0.05 * truth).max(1e-7);
                (r, truth + sigma * normal.sample(&mut rng), sigma)
            })
            .collect();
        let with_b = fit_rate_polynomial(&data, true).unwrap();
        let without_b = fit_rate_polynomial(&data, false).unwrap();
        assert!(
            with_b.r_squared > without_b.r_squared,
            "R² {} vs {}",
            with_b.r_squared,
            without_b.r_squared
        );
        assert!(without_b.r_squared < 0.97, "b = 0 fit should be materially worse");
    }

    #[test]
    fn rate_polynomial_underdetermined() {
        let data = vec![(1.0, 1.0, 0.1), (2.0, 2.0, 0.1)];
        assert!(matches!(
            fit_rate_polynomial(&data, true),
            Err(Error::Underdetermined { needed: 3, got: 2 })
        ));
    }

    fn steady_state_data(
        params: &crate::charge::SteadyStateParams,
        shots: f64,
        rng: &mut StdRng,
    ) -> Vec<(f64, f64, f64)> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        (0..15)
            .map(|i| {
                let r = i as f64 * 7.0;
                let p = crate::charge::steady_state_parametric(params, r).unwrap();
                let sigma = (p * (1.0 - p) / shots).sqrt().max(1e-3);
                (r, (p + sigma * normal.sample(rng)).clamp(0.0, 1.0), sigma)
            })
            .collect()
    }

    #[test]
    fn steady_state_noiseless_recovery_is_exact() {
        let truth = crate::charge::SteadyStateParams::new(0.465, 0.002685, 0.78, 0.4168).unwrap();
        let data: Vec<(f64, f64, f64)> = (0..15)
            .map(|i| {
                let r = i as f64 * 7.0;
                (r, crate::charge::steady_state_parametric(&truth, r).unwrap(), 1e-3)
            })
            .collect();
        let fit = fit_steady_state(&data).unwrap();
        assert!((fit.value("gamma").unwrap() - 0.78).abs() < 1e-6);
        assert!((fit.value("alpha").unwrap() - 0.465).abs() < 1e-4);
        assert!((fit.value("delta").unwrap() - 0.4168).abs() < 1e-4);
        assert!((fit.value("beta").unwrap() - 0.002685).abs() < 1e-5);
    }

    #[test]
    fn steady_state_binomial_noise_recovery_within_ci() {
        let truth = crate::charge::SteadyStateParams::new(0.465, 0.002685, 0.78, 0.4168).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let data = steady_state_data(&truth, 400.0, &mut rng);
        let fit = fit_steady_state(&data).unwrap();
        for (name, want) in [
            ("alpha", truth.alpha),
            ("beta", truth.beta),
            ("gamma", truth.gamma),
            ("delta", truth.delta),
        ] {
            let got = fit.value(name).unwrap();
            let ci = fit.ci95_of(name).unwrap();
            assert!(
                (got - want).abs() <= ci,
                "{name}: {got} vs {want} outside ±{ci}"
            );
        }
    }

    #[test]
    fn steady_state_two_green_powers_scale_inversely() {
        // fits at G and 2G: alpha, beta, delta halve; consistency is checked
        // against the combined fit uncertainties
        let model = crate::charge::MultiphotonRateModel::new(2263.0, 2.242, 0.111, 8025.0, 15.0).unwrap();
        let mut rng = StdRng::seed_from_u64(17);
        let mut fits = Vec::new();
        for g in [0.009, 0.018] {
            let truth = crate::charge::derive_params(&model, g).unwrap();
            let data = steady_state_data(&truth, 4000.0, &mut rng);
            fits.push(fit_steady_state(&data).unwrap());
        }
        for name in ["alpha", "beta", "delta"] {
            let v1 = fits[0].value(name).unwrap();
            let v2 = fits[1].value(name).unwrap();
            let s1 = fits[0].sigma_of(name).unwrap();
            let s2 = fits[1].sigma_of(name).unwrap();
            let combined = (s1 * s1 + 4.0 * s2 * s2).sqrt();
            assert!(
                (v1 - 2.0 * v2).abs() <= Z95 * combined.max(1e-12),
                "{name}: {v1} vs 2×{v2}"
            );
        }
    }

    #[test]
    fn steady_state_too_few_points() {
        let data = vec![(0.0, 0.7, 0.01); 4];
        assert!(matches!(
            fit_steady_state(&data),
            Err(Error::Underdetermined { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn mixture_fit_recovers_synthetic_histogram() {
        // 5000 draws from (0.45, 10, 0.7)
        let mut rng = StdRng::seed_from_u64(10);
        let mut occurrences = std::collections::BTreeMap::new();
        for _ in 0..5000 {
            let mean = if rng.gen::<f64>() < 0.7 { 10.0 } else { 0.45 };
            let n = rand_distr::Poisson::new(mean).unwrap().sample(&mut rng) as u32;
            *occurrences.entry(n).or_insert(0.0) += 1.0;
        }
        let hist: Vec<(u32, f64)> = occurrences.into_iter().collect();
        let fit = fit_poisson_mixture(&hist).unwrap();
        for (name, want) in [("eta_zero", 0.45), ("eta_minus", 10.0), ("weight_minus", 0.7)] {
            let got = fit.value(name).unwrap();
            let sigma = fit.sigma_of(name).unwrap();
            assert!(
                (got - want).abs() <= 2.0 * sigma,
                "{name}: {got} vs {want} (sigma {sigma})"
            );
        }
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn mixture_fit_single_component_is_flagged() {
        let hist: Vec<(u32, f64)> = (0..=25)
            .map(|n| (n, poisson_pmf(n, 9.0) * 4000.0))
            .collect();
        let fit = fit_poisson_mixture(&hist).unwrap();
        assert!(!fit.warnings.is_empty());
        assert!(fit.ci95[0].is_infinite());
        let w = fit.value("weight_minus").unwrap();
        let em = fit.value("eta_minus").unwrap();
        let e0 = fit.value("eta_zero").unwrap();
        assert!((w * em + (1.0 - w) * e0 - 9.0).abs() < 0.1);
    }

    #[test]
    fn exponential_fit_recovers_singlet_lifetime() {
        let mut rng = StdRng::seed_from_u64(4);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let data: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let t = i as f64 * 25.0;
                (t, 0.93 + 0.07 * (-t / 182.0).exp() + normal.sample(&mut rng))
            })
            .collect();
        let fit = fit_exponential(&data).unwrap();
        let tau = fit.value("lifetime").unwrap();
        let sigma = fit.sigma_of("lifetime").unwrap();
        assert!((tau - 182.0).abs() <= 2.0 * sigma, "tau {tau} sigma {sigma}");
    }

    #[test]
    fn exponential_fit_noiseless_is_exact() {
        let data: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let t = i as f64 * 30.0;
                (t, 0.5 * (-t / 120.0).exp() + 0.2)
            })
            .collect();
        let fit = fit_exponential(&data).unwrap();
        assert!((fit.value("amplitude").unwrap() - 0.5).abs() < 1e-6);
        assert!((fit.value("lifetime").unwrap() - 120.0).abs() < 1e-3);
        assert!((fit.value("offset").unwrap() - 0.2).abs() < 1e-7);
    }

    #[test]
    fn exponential_fit_offset_only_flags_lifetime() {
        let data: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 10.0, 0.93)).collect();
        let fit = fit_exponential(&data).unwrap();
        assert!(fit.value("amplitude").unwrap().abs() < 1e-6);
        assert!(fit.ci95_of("lifetime").unwrap().is_infinite());
        assert!(fit.warnings.iter().any(|w| w.contains("unidentifiable")));
    }

    fn scc_synthetic(
        truth: &SccParams,
        ns: &[u32],
        shots: f64,
        rng: &mut StdRng,
    ) -> (Vec<(u32, f64, f64)>, Vec<(u32, f64, f64)>) {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut out0 = Vec::new();
        let mut out1 = Vec::new();
        for &n in ns {
            let eff = scc::scc_efficiencies(truth, n).unwrap();
            for (beta, out) in [(eff.beta0, &mut out0), (eff.beta1, &mut out1)] {
                let sigma = (beta * (1.0 - beta) / shots).sqrt().max(1e-4);
                out.push((n, (beta + sigma * normal.sample(rng)).clamp(0.0, 1.0), sigma));
            }
        }
        (out0, out1)
    }

    #[test]
    fn scc_joint_noiseless_residual_vanishes() {
        let truth = SccParams::paper();
        let ns: Vec<u32> = (0..=30).step_by(2).collect();
        let mut d0 = Vec::new();
        let mut d1 = Vec::new();
        for &n in &ns {
            let eff = scc::scc_efficiencies(&truth, n).unwrap();
            d0.push((n, eff.beta0, 0.01));
            d1.push((n, eff.beta1, 0.01));
        }
        let opts = SccJointFitOptions {
            p_ion: 0.005,
            start: [0.05, 0.04, 0.22, 0.28, 2.1, 0.88],
        };
        let fit = fit_scc_joint_with_options(&d0, &d1, &opts).unwrap();
        let (c0, c1) = scc_model_curves(
            &[
                fit.value("charge_init_nv0").unwrap(),
                fit.value("k35").unwrap(),
                fit.value("k45").unwrap(),
                fit.value("p_sing").unwrap(),
                fit.value("k51_over_k52").unwrap(),
                fit.value("spin_init").unwrap(),
            ],
            0.005,
            30,
        )
        .unwrap();
        let mut ss = 0.0;
        for &(n, y, _) in &d0 {
            ss += (c0[n as usize] - y).powi(2);
        }
        for &(n, y, _) in &d1 {
            ss += (c1[n as usize] - y).powi(2);
        }
        assert!(ss < 1e-8, "residual {ss}");
    }

    #[test]
    fn scc_joint_recovery_within_confidence() {
        let truth = SccParams::paper();
        let ns: Vec<u32> = (0..=30).step_by(2).collect();
        let mut rng = StdRng::seed_from_u64(12);
        let (d0, d1) = scc_synthetic(&truth, &ns, 3000.0, &mut rng);
        let fit = fit_scc_joint(&d0, &d1).unwrap();
        for (name, want) in [
            ("charge_init_nv0", 0.04),
            ("k35", 0.033),
            ("k45", 0.25),
            ("p_sing", 0.32),
            ("k51_over_k52", 2.26),
            ("spin_init", 0.85),
        ] {
            let got = fit.value(name).unwrap();
            let ci = fit.ci95_of(name).unwrap();
            assert!(
                (got - want).abs() <= ci,
                "{name}: {got} vs {want} outside ±{ci}"
            );
        }
    }

    #[test]
    fn scc_ms0_only_leaves_k45_weakly_constrained() {
        let truth = SccParams::paper();
        let ns: Vec<u32> = (0..=30).step_by(2).collect();
        let mut rng = StdRng::seed_from_u64(13);
        let (d0, d1) = scc_synthetic(&truth, &ns, 3000.0, &mut rng);
        let joint = fit_scc_joint(&d0, &d1).unwrap();
        let solo = fit_scc_joint(&d0, &[]).unwrap();
        let joint_sigma = joint.sigma_of("k45").unwrap();
        let solo_sigma = solo.sigma_of("k45").unwrap();
        assert!(
            solo_sigma >= 3.0 * joint_sigma,
            "ms0-only sigma {solo_sigma} vs joint {joint_sigma}"
        );
    }

    #[test]
    fn rate_from_transitions_values() {
        let zero = rate_from_transitions(0, 1000, 1.0).unwrap();
        assert_eq!(zero.rate_khz, 0.0);
        assert!(zero.is_upper_bound);
        assert!(zero.error_khz > 0.0 && zero.error_khz < 0.01);

        let est = rate_from_transitions(50, 1000, 0.5).unwrap();
        assert!((est.rate_khz - 0.1).abs() < 1e-12);
        assert!(!est.is_upper_bound);
        let sigma_p = (0.05f64 * 0.95 / 1000.0).sqrt();
        assert!((est.error_khz - sigma_p / 0.5).abs() < 1e-12);
    }

    #[test]
    fn corrected_rate_exceeds_naive_for_large_p() {
        let naive = rate_from_transitions(400, 1000, 1.0).unwrap();
        let corrected = rate_from_transitions_corrected(400, 1000, 1.0).unwrap();
        assert!(corrected.rate_khz > naive.rate_khz);
        assert!((corrected.rate_khz - (-(0.6f64).ln())).abs() < 1e-12);
        assert!(rate_from_transitions_corrected(10, 10, 1.0).is_err());
    }

    #[test]
    fn rate_from_transitions_rejects_bad_input() {
        assert!(rate_from_transitions(1, 0, 1.0).is_err());
        assert!(rate_from_transitions(5, 3, 1.0).is_err());
        assert!(rate_from_transitions(1, 10, 0.0).is_err());
    }

    #[test]
    fn consistency_noise_to_zero_recovers_truth() {
        // shrinking noise tightens polynomial recovery toward Table-like truth
        let mut errs = Vec::new();
        for (seed, rel) in [(101u64, 0.05), (101, 0.01), (101, 0.002)] {
            let mut rng = StdRng::seed_from_u64(seed);
            let data = table1_ion_data(&mut rng, rel);
            let fit = fit_rate_polynomial(&data, false).unwrap();
            errs.push((fit.value("a").unwrap() - 4.7e-7).abs());
        }
        assert!(errs[2] < errs[0], "recovery did not tighten: {errs:?}");
    }

    #[test]
    fn sixty_five_percent_intervals_have_sane_coverage() {
        // 200 seeded replications; the 65% interval must cover truth in at
        // least 55% of them
        let mut covered = 0;
        for seed in 0..200u64 {
            let mut rng = StdRng::seed_from_u64(1000 + seed);
            let data = table1_ion_data(&mut rng, 0.05);
            let fit = fit_rate_polynomial(&data, false).unwrap();
            let a = fit.value("a").unwrap();
            let ci = fit.ci65_of("a").unwrap();
            if (a - 4.7e-7).abs() <= ci {
                covered += 1;
            }
        }
        assert!(covered >= 110, "coverage {covered}/200");
    }
}
