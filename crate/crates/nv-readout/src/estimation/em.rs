//! Expectation-maximization for a two-component Poisson mixture on a
//! photon-count histogram.

use crate::photon::poisson_pmf;
use crate::{Error, Result};

pub struct EmFit {
    pub eta_zero: f64,
    pub eta_minus: f64,
    pub weight_minus: f64,
    /// Log-likelihood after initialization and after each iteration;
    /// nondecreasing by the EM guarantee.
    pub log_likelihood_trace: Vec<f64>,
    /// Set when the data supports only one component.
    pub degenerate: bool,
}

fn log_likelihood(hist: &[(u32, f64)], eta0: f64, etam: f64, w: f64) -> f64 {
    hist.iter()
        .map(|&(n, occ)| {
            let p = w * poisson_pmf(n, etam) + (1.0 - w) * poisson_pmf(n, eta0);
            occ * p.max(1e-300).ln()
        })
        .sum()
}

/// Run EM to convergence (relative log-likelihood change below 1e-12).
///
/// Initialization splits the histogram at its overall mean: the sub-threshold
/// mass seeds η₀, the super-threshold mass seeds η₋ and the weight.
pub fn fit_mixture_em(hist: &[(u32, f64)], max_iter: usize) -> Result<EmFit> {
    if hist.is_empty() {
        return Err(Error::Domain("histogram is empty".into()));
    }
    let total: f64 = hist.iter().map(|&(_, occ)| occ).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("histogram has no occurrences".into()));
    }
    for &(_, occ) in hist {
        if occ < 0.0 || !occ.is_finite() {
            return Err(Error::Domain(format!("occurrences must be >= 0, got {occ}")));
        }
    }
    let mean = hist.iter().map(|&(n, occ)| n as f64 * occ).sum::<f64>() / total;

    let mut low_mass = 0.0;
    let mut low_sum = 0.0;
    let mut high_mass = 0.0;
    let mut high_sum = 0.0;
    for &(n, occ) in hist {
        if (n as f64) <= mean {
            low_mass += occ;
            low_sum += n as f64 * occ;
        } else {
            high_mass += occ;
            high_sum += n as f64 * occ;
        }
    }
    if low_mass == 0.0 || high_mass == 0.0 {
        // everything sits on one side of the mean: single-component data
        return Ok(EmFit {
            eta_zero: 0.0,
            eta_minus: mean,
            weight_minus: 1.0,
            log_likelihood_trace: vec![log_likelihood(hist, 0.0, mean, 1.0)],
            degenerate: true,
        });
    }

    let mut eta0 = low_sum / low_mass;
    let mut etam = (high_sum / high_mass).max(eta0 + 1e-6);
    let mut w = high_mass / total;
    let mut trace = vec![log_likelihood(hist, eta0, etam, w)];

    for _ in 0..max_iter {
        // E-step
        let mut resp_mass = 0.0;
        let mut resp_sum = 0.0;
        let mut anti_mass = 0.0;
        let mut anti_sum = 0.0;
        for &(n, occ) in hist {
            let pb = w * poisson_pmf(n, etam);
            let pd = (1.0 - w) * poisson_pmf(n, eta0);
            let denom = pb + pd;
            let r = if denom > 0.0 { pb / denom } else { 0.5 };
            resp_mass += occ * r;
            resp_sum += occ * r * n as f64;
            anti_mass += occ * (1.0 - r);
            anti_sum += occ * (1.0 - r) * n as f64;
        }
        // M-step
        w = resp_mass / total;
        if resp_mass > 0.0 {
            etam = resp_sum / resp_mass;
        }
        if anti_mass > 0.0 {
            eta0 = anti_sum / anti_mass;
        }
        let ll = log_likelihood(hist, eta0, etam, w);
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev).abs() <= 1e-12 * prev.abs().max(1.0) {
            break;
        }
    }

    // keep the bright component in eta_minus
    if etam < eta0 {
        std::mem::swap(&mut eta0, &mut etam);
        w = 1.0 - w;
    }
    let degenerate = w > 1.0 - 1e-6 || w < 1e-6 || (etam - eta0).abs() < 0.05 * etam.max(1.0);
    Ok(EmFit {
        eta_zero: eta0,
        eta_minus: etam,
        weight_minus: w,
        log_likelihood_trace: trace,
        degenerate,
    })
}
