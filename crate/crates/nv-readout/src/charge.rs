//! Two-state charge dynamics of the NV center under multiphoton
//! ionization/recombination.
//!
//! The charge state is a probability pair (p₋, p₀) over NV⁻/NV⁰. Ionization
//! and recombination rates are polynomial in the visible power `g` and NIR
//! power `r` (both mW, rates kHz):
//!
//! ```text
//! γ_ion = c20·g² + c11·g·r + c12·g·r²
//! γ_rec = d20·g² + d11·g·r
//! ```
//!
//! Evolution under constant rates is solved in closed form; a Runge-Kutta
//! oracle exists only in tests. The steady state admits the rational
//! parameterization p₋ = γ(1+αr)/(1+δr+βr²), and `derive_params` maps a rate
//! model onto those four parameters.
//!
//! NIR-only illumination is much slower and never reaches steady state inside
//! one measurement cycle; `nir_equilibrium` instead returns the fixed point of
//! interaction followed by a destructive readout.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probability pair over the NV charge states. Always sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargePopulation {
    p_minus: f64,
    p_zero: f64,
}

const POPULATION_SUM_TOL: f64 = 1e-12;

impl ChargePopulation {
    pub fn new(p_minus: f64, p_zero: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_minus) || !(0.0..=1.0).contains(&p_zero) {
            return Err(Error::Domain(format!(
                "charge populations must lie in [0,1], got ({p_minus}, {p_zero})"
            )));
        }
        if (p_minus + p_zero - 1.0).abs() > POPULATION_SUM_TOL {
            return Err(Error::Domain(format!(
                "charge populations must sum to 1, got {}",
                p_minus + p_zero
            )));
        }
        Ok(Self { p_minus, p_zero })
    }

    /// Build from the NV⁻ probability alone.
    pub fn from_p_minus(p_minus: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_minus) {
            return Err(Error::Domain(format!(
                "p_minus must lie in [0,1], got {p_minus}"
            )));
        }
        Ok(Self {
            p_minus,
            p_zero: 1.0 - p_minus,
        })
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_zero(&self) -> f64 {
        self.p_zero
    }
}

/// Coefficients of the multiphoton ionization/recombination rate model.
///
/// `cmn`/`dmn` multiplies gᵐ·rⁿ; units are kHz/mWᵐ⁺ⁿ. Visible-only
/// recombination (`d20`) is nonzero even at 592 nm due to anti-Stokes
/// absorption of NV⁰.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiphotonRateModel {
    pub c20: f64,
    pub c11: f64,
    pub c12: f64,
    pub d20: f64,
    pub d11: f64,
}

impl MultiphotonRateModel {
    pub fn new(c20: f64, c11: f64, c12: f64, d20: f64, d11: f64) -> Result<Self> {
        for (name, v) in [("c20", c20), ("c11", c11), ("c12", c12), ("d20", d20), ("d11", d11)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "rate coefficient {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self { c20, c11, c12, d20, d11 })
    }
}

fn check_powers(g_mw: f64, r_mw: f64) -> Result<()> {
    if !g_mw.is_finite() || g_mw < 0.0 {
        return Err(Error::Domain(format!("visible power must be >= 0 mW, got {g_mw}")));
    }
    if !r_mw.is_finite() || r_mw < 0.0 {
        return Err(Error::Domain(format!("NIR power must be >= 0 mW, got {r_mw}")));
    }
    Ok(())
}

/// Ionization rate c20·g² + c11·g·r + c12·g·r² in kHz.
pub fn ionization_rate(model: &MultiphotonRateModel, g_mw: f64, r_mw: f64) -> Result<f64> {
    check_powers(g_mw, r_mw)?;
    Ok(model.c20 * g_mw * g_mw + model.c11 * g_mw * r_mw + model.c12 * g_mw * r_mw * r_mw)
}

/// Recombination rate d20·g² + d11·g·r in kHz.
pub fn recombination_rate(model: &MultiphotonRateModel, g_mw: f64, r_mw: f64) -> Result<f64> {
    check_powers(g_mw, r_mw)?;
    Ok(model.d20 * g_mw * g_mw + model.d11 * g_mw * r_mw)
}

/// Closed-form evolution of the two-state master equation for a time `t_ms`.
///
/// p₋(t) = p_ss + (p₋(0) − p_ss)·exp(−(γ_ion+γ_rec)t) with
/// p_ss = γ_rec/(γ_ion+γ_rec). Both rates zero leaves the state unchanged.
pub fn evolve(
    p0: ChargePopulation,
    gamma_ion_khz: f64,
    gamma_rec_khz: f64,
    t_ms: f64,
) -> Result<ChargePopulation> {
    if gamma_ion_khz < 0.0 || gamma_rec_khz < 0.0 {
        return Err(Error::Domain(format!(
            "rates must be >= 0 kHz, got ({gamma_ion_khz}, {gamma_rec_khz})"
        )));
    }
    if !t_ms.is_finite() || t_ms < 0.0 {
        return Err(Error::Domain(format!("time must be >= 0 ms, got {t_ms}")));
    }
    let total = gamma_ion_khz + gamma_rec_khz;
    if total == 0.0 {
        return Ok(p0);
    }
    let p_ss = gamma_rec_khz / total;
    let p = p_ss + (p0.p_minus() - p_ss) * (-total * t_ms).exp();
    // clamp defends only against last-ulp rounding; p is a convex combination
    let p = p.clamp(0.0, 1.0);
    ChargePopulation::from_p_minus(p)
}

/// Steady state p₋ = γ_rec/(γ_ion+γ_rec) of the rate model at (g, r).
pub fn steady_state(model: &MultiphotonRateModel, g_mw: f64, r_mw: f64) -> Result<ChargePopulation> {
    let ion = ionization_rate(model, g_mw, r_mw)?;
    let rec = recombination_rate(model, g_mw, r_mw)?;
    let total = ion + rec;
    if total == 0.0 {
        return Err(Error::Degenerate(
            "steady state undefined: both rates are zero".into(),
        ));
    }
    ChargePopulation::from_p_minus(rec / total)
}

/// The four parameters of the rational steady-state form
/// p₋ = γ(1+αr)/(1+δr+βr²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateParams {
    /// 1/mW
    pub alpha: f64,
    /// 1/mW²
    pub beta: f64,
    /// dimensionless, the visible-only steady state
    pub gamma: f64,
    /// 1/mW
    pub delta: f64,
}

impl SteadyStateParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("delta", delta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma must lie in [0,1], got {gamma}")));
        }
        Ok(Self { alpha, beta, gamma, delta })
    }
}

/// Evaluate the rational steady-state form at NIR power `r_mw`.
pub fn steady_state_parametric(params: &SteadyStateParams, r_mw: f64) -> Result<f64> {
    if !r_mw.is_finite() || r_mw < 0.0 {
        return Err(Error::Domain(format!("NIR power must be >= 0 mW, got {r_mw}")));
    }
    let denom = 1.0 + params.delta * r_mw + params.beta * r_mw * r_mw;
    if denom <= 0.0 {
        return Err(Error::Domain(format!(
            "steady-state denominator must be positive, got {denom}"
        )));
    }
    Ok(params.gamma * (1.0 + params.alpha * r_mw) / denom)
}

/// Map a rate model at fixed visible power onto (α, β, γ, δ).
///
/// α, β and δ scale as 1/g; γ is power independent.
pub fn derive_params(model: &MultiphotonRateModel, g_mw: f64) -> Result<SteadyStateParams> {
    if !g_mw.is_finite() || g_mw <= 0.0 {
        return Err(Error::Domain(format!(
            "visible power must be > 0 mW to derive parameters, got {g_mw}"
        )));
    }
    if model.d20 == 0.0 && model.d11 > 0.0 {
        return Err(Error::Domain(
            "alpha is undefined for d20 = 0 with d11 > 0".into(),
        ));
    }
    let sum20 = model.c20 + model.d20;
    if sum20 == 0.0 {
        return Err(Error::Domain(
            "c20 + d20 must be > 0 to derive parameters".into(),
        ));
    }
    let alpha = if model.d11 == 0.0 { 0.0 } else { model.d11 / (model.d20 * g_mw) };
    SteadyStateParams::new(
        alpha,
        model.c12 / (sum20 * g_mw),
        model.d20 / sum20,
        (model.c11 + model.d11) / (sum20 * g_mw),
    )
}

/// Rate-coefficient ratios recovered from fitted steady-state parameters.
///
/// Unbounded ratios (vanishing denominators) are reported as `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioDiagnostics {
    /// NIR-assisted recombination vs ionization, d11/c11.
    pub d11_over_c11: f64,
    /// Singlet two-NIR-photon ionization vs NIR-assisted recombination, c12/d11.
    pub c12_over_d11: f64,
    /// Visible-only recombination vs ionization, d20/c20 = γ/(1−γ).
    ///
    /// Reported alongside the NIR ratios because the visible-only steady state
    /// γ fixes it directly; a γ of 0.78 gives d20/c20 ≈ 3.5.
    pub d20_over_c20: f64,
}

/// Invert (α, β, γ, δ) into the underlying coefficient ratios.
///
/// Uses α/δ = [d11/(d11+c11)]·(1/γ) and β/α = (c12/d11)·γ.
pub fn ratio_diagnostics(params: &SteadyStateParams) -> Result<RatioDiagnostics> {
    if params.gamma <= 0.0 {
        return Err(Error::Domain("gamma must be > 0 for diagnostics".into()));
    }
    if params.delta <= 0.0 || params.alpha <= 0.0 {
        return Err(Error::Domain(
            "alpha and delta must be > 0 for diagnostics".into(),
        ));
    }
    // q = d11/(d11+c11)
    let q = params.alpha * params.gamma / params.delta;
    let d11_over_c11 = if q >= 1.0 { f64::INFINITY } else { q / (1.0 - q) };
    let c12_over_d11 = (params.beta / params.alpha) / params.gamma;
    let d20_over_c20 = if params.gamma >= 1.0 {
        f64::INFINITY
    } else {
        params.gamma / (1.0 - params.gamma)
    };
    Ok(RatioDiagnostics {
        d11_over_c11,
        c12_over_d11,
        d20_over_c20,
    })
}

/// Cubic-plus-quadratic NIR-only rate polynomial a·r³ + b·r² + c.
///
/// `a` in kHz/mW³, `b` in kHz/mW², `c` in kHz. The offset `c` absorbs the
/// residual destructivity of the charge readout used in the rate measurement.
/// The fitted model is valid on r ∈ [0, 100] mW; evaluation outside that range
/// is an extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NirRatePolynomial {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NirRatePolynomial {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let poly = Self { a, b, c };
        // nonnegativity over the validity range, checked at the vertex too
        for r in [0.0, 50.0, 100.0] {
            if poly.eval_unchecked(r) < 0.0 {
                return Err(Error::Domain(format!(
                    "NIR rate polynomial is negative at {r} mW"
                )));
            }
        }
        Ok(poly)
    }

    fn eval_unchecked(&self, r_mw: f64) -> f64 {
        (self.a * r_mw + self.b) * r_mw * r_mw + self.c
    }
}

/// Evaluate a NIR-only rate polynomial at `r_mw`, in kHz.
pub fn nir_only_rate(poly: &NirRatePolynomial, r_mw: f64) -> Result<f64> {
    if !r_mw.is_finite() || r_mw < 0.0 {
        return Err(Error::Domain(format!("NIR power must be >= 0 mW, got {r_mw}")));
    }
    Ok(poly.eval_unchecked(r_mw))
}

/// Column-stochastic backaction of one destructive charge readout:
/// entry (i, j) is P(final charge i | initial charge j), index 0 = NV⁻.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DestructivityMatrix {
    m: [[f64; 2]; 2],
}

impl DestructivityMatrix {
    /// Build from rows [[m00, m01], [m10, m11]]; columns must sum to 1.
    pub fn new(rows: [[f64; 2]; 2]) -> Result<Self> {
        for col in 0..2 {
            let mut sum = 0.0;
            for row in rows {
                let v = row[col];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Domain(format!(
                        "destructivity entries must lie in [0,1], got {v}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > POPULATION_SUM_TOL {
                return Err(Error::Domain(format!(
                    "destructivity column {col} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { m: rows })
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    /// Apply the readout backaction to a charge population.
    pub fn apply(&self, p: ChargePopulation) -> ChargePopulation {
        let pm = self.m[0][0] * p.p_minus() + self.m[0][1] * p.p_zero();
        ChargePopulation::from_p_minus(pm.clamp(0.0, 1.0)).expect("stochastic map preserves [0,1]")
    }
}

/// Propagator of the two-state master equation over `t_ms`, as a 2×2
/// column-stochastic matrix in the (p₋, p₀) basis.
pub fn transition_matrix(gamma_ion_khz: f64, gamma_rec_khz: f64, t_ms: f64) -> [[f64; 2]; 2] {
    let total = gamma_ion_khz + gamma_rec_khz;
    if total == 0.0 {
        return [[1.0, 0.0], [0.0, 1.0]];
    }
    let p_ss = gamma_rec_khz / total;
    let e = (-total * t_ms).exp();
    [
        [p_ss + (1.0 - p_ss) * e, p_ss * (1.0 - e)],
        [(1.0 - p_ss) * (1.0 - e), (1.0 - p_ss) + p_ss * e],
    ]
}

/// Equilibrium charge population of the NIR-only measurement cycle.
///
/// One cycle evolves the state for `t_interact_ms` under the NIR-only rates
/// at power `r_mw` (matrix M) and then applies the destructive readout D. The
/// returned population is the normalized eigenvector of M·D at eigenvalue 1,
/// obtained from the 2×2 null space of M·D − I.
pub fn nir_equilibrium(
    poly_ion: &NirRatePolynomial,
    poly_rec: &NirRatePolynomial,
    r_mw: f64,
    d: &DestructivityMatrix,
    t_interact_ms: f64,
) -> Result<ChargePopulation> {
    if !(t_interact_ms > 0.0) {
        return Err(Error::Domain(format!(
            "interaction time must be > 0 ms, got {t_interact_ms}"
        )));
    }
    let ion = nir_only_rate(poly_ion, r_mw)?;
    let rec = nir_only_rate(poly_rec, r_mw)?;
    let m = transition_matrix(ion, rec, t_interact_ms);
    // a = (M·D)[0][0], b = (M·D)[0][1]; the fixed point solves
    // (a-1)p + b(1-p) = 0, i.e. p = b / (b + 1 - a).
    let a = m[0][0] * d.entry(0, 0) + m[0][1] * d.entry(1, 0);
    let b = m[0][0] * d.entry(0, 1) + m[0][1] * d.entry(1, 1);
    let leak = 1.0 - a;
    if b + leak <= POPULATION_SUM_TOL {
        return Err(Error::Degenerate(
            "M·D is the identity; every population is a fixed point".into(),
        ));
    }
    ChargePopulation::from_p_minus((b / (b + leak)).clamp(0.0, 1.0))
}
