//! Two-component Poisson photon statistics for threshold charge readout.
//!
//! A readout window yields Poisson-distributed counts with mean η₋ (NV⁻,
//! bright) or η₀ (NV⁰, dark); the observed histogram is their mixture. A
//! count above the threshold is classified as NV⁻. Histogram fitting lives in
//! [`crate::estimation`]; this module defines the model and its figures of
//! merit.

use serde::{Deserialize, Serialize};

use crate::charge::ChargePopulation;
use crate::{Error, Result};

/// Two-component Poisson photon-count model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonMixture {
    /// Mean counts from NV⁰ per readout window.
    pub eta_zero: f64,
    /// Mean counts from NV⁻ per readout window.
    pub eta_minus: f64,
    /// Probability mass of the NV⁻ component.
    pub weight_minus: f64,
}

impl PoissonMixture {
    pub fn new(eta_zero: f64, eta_minus: f64, weight_minus: f64) -> Result<Self> {
        if !eta_zero.is_finite() || eta_zero < 0.0 || !eta_minus.is_finite() || eta_minus < 0.0 {
            return Err(Error::Domain(format!(
                "mean counts must be >= 0, got ({eta_zero}, {eta_minus})"
            )));
        }
        if !(0.0..=1.0).contains(&weight_minus) {
            return Err(Error::Domain(format!(
                "weight_minus must lie in [0,1], got {weight_minus}"
            )));
        }
        Ok(Self { eta_zero, eta_minus, weight_minus })
    }

    fn require_contrast(&self) -> Result<()> {
        if self.eta_minus <= self.eta_zero {
            return Err(Error::Domain(format!(
                "classification requires eta_minus > eta_zero, got ({}, {})",
                self.eta_zero, self.eta_minus
            )));
        }
        Ok(())
    }
}

/// Charge-state label assigned by threshold classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChargeLabel {
    NvMinus,
    NvZero,
}

/// Threshold comparison convention.
///
/// `Above` (n > threshold) is the default; `AtOrAbove` (n ≥ threshold) shifts
/// the charge fidelity by well under a percent for typical contrast but is
/// exposed for completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdConvention {
    #[default]
    Above,
    AtOrAbove,
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos approximation, relative error ~1e-13).
fn ln_gamma(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Poisson pmf P(N = n | mean), evaluated in log space.
pub fn poisson_pmf(n: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (nf * mean.ln() - mean - ln_gamma(nf + 1.0)).exp()
}

/// Poisson cdf P(N ≤ n | mean).
pub fn poisson_cdf(n: u32, mean: f64) -> f64 {
    (0..=n).map(|k| poisson_pmf(k, mean)).sum::<f64>().min(1.0)
}

/// Upper index beyond which the Poisson tail mass is below 1e-12.
fn tail_cap(mean: f64) -> u32 {
    (mean + 12.0 * mean.sqrt() + 20.0).ceil() as u32
}

/// Poisson survival P(N > n | mean), summed over the truncated tail.
pub fn poisson_survival(n: u32, mean: f64) -> f64 {
    let cap = tail_cap(mean);
    if n >= cap {
        return 0.0;
    }
    ((n + 1)..=cap).map(|k| poisson_pmf(k, mean)).sum::<f64>().min(1.0)
}

/// Mixture pmf: weight·P(n; η₋) + (1−weight)·P(n; η₀).
pub fn mixture_pmf(m: &PoissonMixture, n: u32) -> f64 {
    m.weight_minus * poisson_pmf(n, m.eta_minus) + (1.0 - m.weight_minus) * poisson_pmf(n, m.eta_zero)
}

/// Classify a photon count against a threshold: NV⁻ iff n > threshold.
pub fn classify(n: u32, threshold: u32) -> ChargeLabel {
    classify_with(n, threshold, ThresholdConvention::Above)
}

pub fn classify_with(n: u32, threshold: u32, convention: ThresholdConvention) -> ChargeLabel {
    let bright = match convention {
        ThresholdConvention::Above => n > threshold,
        ThresholdConvention::AtOrAbove => n >= threshold,
    };
    if bright {
        ChargeLabel::NvMinus
    } else {
        ChargeLabel::NvZero
    }
}

/// Misclassification probabilities and fidelity of one threshold readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeReadoutReport {
    pub threshold: u32,
    /// P(classified NV⁻ | state NV⁰).
    pub eps_zero: f64,
    /// P(classified NV⁰ | state NV⁻).
    pub eps_minus: f64,
    /// 1 − (ε₀ + ε₋)/2.
    pub fidelity: f64,
}

/// Charge readout fidelity of a threshold classifier on the mixture.
pub fn charge_fidelity(m: &PoissonMixture, threshold: u32) -> Result<ChargeReadoutReport> {
    charge_fidelity_with(m, threshold, ThresholdConvention::Above)
}

pub fn charge_fidelity_with(
    m: &PoissonMixture,
    threshold: u32,
    convention: ThresholdConvention,
) -> Result<ChargeReadoutReport> {
    m.require_contrast()?;
    let (eps_zero, eps_minus) = match convention {
        ThresholdConvention::Above => (
            poisson_survival(threshold, m.eta_zero),
            poisson_cdf(threshold, m.eta_minus),
        ),
        ThresholdConvention::AtOrAbove => {
            // bright iff n >= threshold
            if threshold == 0 {
                (1.0, 0.0)
            } else {
                (
                    poisson_survival(threshold - 1, m.eta_zero),
                    poisson_cdf(threshold - 1, m.eta_minus),
                )
            }
        }
    };
    Ok(ChargeReadoutReport {
        threshold,
        eps_zero,
        eps_minus,
        fidelity: 1.0 - 0.5 * (eps_zero + eps_minus),
    })
}

/// Smallest integer threshold maximizing the charge fidelity, scanned over
/// [0, ceil(3·η₋)].
pub fn optimal_threshold(m: &PoissonMixture) -> Result<u32> {
    m.require_contrast()?;
    let hi = (3.0 * m.eta_minus).ceil() as u32;
    let mut best = 0u32;
    let mut best_f = f64::MIN;
    for thr in 0..=hi {
        let f = charge_fidelity(m, thr)?.fidelity;
        if f > best_f {
            best_f = f;
            best = thr;
        }
    }
    Ok(best)
}

/// Purity of post-selection on ≥ 1 photon during a short verification window.
///
/// The mixture means are scaled linearly from `readout_window_ref_ms` to
/// `verify_window_ms`; the Bayes posterior P(NV⁻ | n ≥ 1) is then degraded by
/// the supplied probability of ionization during the verification itself. A
/// zero-length window carries no information and returns the prior untouched.
pub fn post_selection_purity(
    m: &PoissonMixture,
    verify_window_ms: f64,
    readout_window_ref_ms: f64,
    ionization_prob_during_verify: f64,
    prior: ChargePopulation,
) -> Result<f64> {
    if !verify_window_ms.is_finite() || verify_window_ms < 0.0 {
        return Err(Error::Domain(format!(
            "verify window must be >= 0 ms, got {verify_window_ms}"
        )));
    }
    if !(readout_window_ref_ms > 0.0) {
        return Err(Error::Domain(format!(
            "reference readout window must be > 0 ms, got {readout_window_ref_ms}"
        )));
    }
    if !(0.0..=1.0).contains(&ionization_prob_during_verify) {
        return Err(Error::Domain(format!(
            "ionization probability must lie in [0,1], got {ionization_prob_during_verify}"
        )));
    }
    if verify_window_ms == 0.0 {
        return Ok(prior.p_minus());
    }
    let scale = verify_window_ms / readout_window_ref_ms;
    let p_click_minus = 1.0 - (-m.eta_minus * scale).exp();
    let p_click_zero = 1.0 - (-m.eta_zero * scale).exp();
    let num = prior.p_minus() * p_click_minus;
    let denom = num + prior.p_zero() * p_click_zero;
    if denom == 0.0 {
        // a click is impossible; conditioning is vacuous
        return Ok(prior.p_minus());
    }
    Ok((num / denom) * (1.0 - ionization_prob_during_verify))
}
