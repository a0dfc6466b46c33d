//! Six-level transfer-matrix model of repeated shelve-and-ionize
//! spin-to-charge conversion.
//!
//! Levels: 1 ms=0 ground, 2 ms=±1 ground, 3 ms=0 excited, 4 ms=±1 excited,
//! 5 metastable singlet, 6 NV⁰. One conversion cycle applies three
//! column-stochastic maps in order:
//!
//! 1. excitation — ground triplet promoted with probability `p_exc = 1−p_ion`,
//!    ionized to NV⁰ with `p_ion`;
//! 2. decay — the excited triplet relaxes, branching into the singlet with
//!    `k35` (ms=0) or `k45` (ms=±1);
//! 3. singlet ionization — the NIR train ionizes the singlet with `p_sing`,
//!    the remainder returns to the ground state split `k51:k52`.
//!
//! The ±1 sublevels share one level and NV⁰ is absorbing. Intermediate
//! singlet-excited and NV⁰-excited dynamics are compressed into the step
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Population vector over the six levels. Sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SixLevelState {
    p: [f64; 6],
}

impl SixLevelState {
    pub fn new(p: [f64; 6]) -> Result<Self> {
        for v in p {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "level populations must lie in [0,1], got {v}"
                )));
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "level populations must sum to 1, got {sum}"
            )));
        }
        Ok(Self { p })
    }

    pub fn populations(&self) -> [f64; 6] {
        self.p
    }

    /// Total NV⁻ ground-state population p1 + p2.
    pub fn nv_minus_population(&self) -> f64 {
        self.p[0] + self.p[1]
    }

    pub fn nv_zero_population(&self) -> f64 {
        self.p[5]
    }
}

/// Branching and ionization parameters of the conversion cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccParams {
    /// Triplet ionization probability per excitation step.
    pub p_ion: f64,
    /// ISC branching probability for ms=0.
    pub k35: f64,
    /// ISC branching probability for ms=±1.
    pub k45: f64,
    /// Singlet ionization probability per NIR pulse train.
    pub p_sing: f64,
    /// Singlet ground-state return ratio k51/k52.
    pub k51_over_k52: f64,
    /// Spin initialization purity of the prepared sublevel.
    pub spin_init: f64,
    /// NV⁰ population after charge initialization.
    pub charge_init_nv0: f64,
}

impl SccParams {
    pub fn new(
        p_ion: f64,
        k35: f64,
        k45: f64,
        p_sing: f64,
        k51_over_k52: f64,
        spin_init: f64,
        charge_init_nv0: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("p_ion", p_ion),
            ("k35", k35),
            ("k45", k45),
            ("p_sing", p_sing),
            ("spin_init", spin_init),
            ("charge_init_nv0", charge_init_nv0),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if !k51_over_k52.is_finite() || k51_over_k52 < 0.0 {
            return Err(Error::Domain(format!(
                "k51_over_k52 must be >= 0, got {k51_over_k52}"
            )));
        }
        Ok(Self { p_ion, k35, k45, p_sing, k51_over_k52, spin_init, charge_init_nv0 })
    }

    /// Best-fit parameters of the multi-SCC measurement.
    pub fn paper() -> Self {
        Self {
            p_ion: 0.005,
            k35: 0.033,
            k45: 0.25,
            p_sing: 0.32,
            k51_over_k52: 2.26,
            spin_init: 0.85,
            charge_init_nv0: 0.04,
        }
    }

    /// Excitation probability, fixed by column conservation to 1 − p_ion.
    pub fn p_exc(&self) -> f64 {
        1.0 - self.p_ion
    }

    /// Singlet-to-ms=±1 return probability; k51 + k52 + p_sing = 1.
    pub fn k52(&self) -> f64 {
        (1.0 - self.p_sing) / (1.0 + self.k51_over_k52)
    }

    /// Singlet-to-ms=0 return probability.
    pub fn k51(&self) -> f64 {
        self.k51_over_k52 * self.k52()
    }
}

/// The three column-stochastic maps of one conversion cycle.
///
/// Levels that are necessarily empty when a step applies (the excited and
/// singlet levels ahead of their feeding step) keep their population in place,
/// so every matrix is column-stochastic on the full six-dimensional space and
/// the cycle product acts identically on all physically reachable states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrices {
    pub excitation: [[f64; 6]; 6],
    pub decay: [[f64; 6]; 6],
    pub singlet_ionization: [[f64; 6]; 6],
}

fn column_sums_are_unit(m: &[[f64; 6]; 6]) -> bool {
    (0..6).all(|j| {
        let s: f64 = (0..6).map(|i| m[i][j]).sum();
        (s - 1.0).abs() <= 1e-12
    })
}

/// Construct the three cycle matrices from the parameters.
pub fn build_matrices(params: &SccParams) -> Result<TransferMatrices> {
    let p_exc = params.p_exc();
    let p_ion = params.p_ion;
    let (k35, k45) = (params.k35, params.k45);
    let (k51, k52) = (params.k51(), params.k52());
    let p_sing = params.p_sing;

    let mut excitation = [[0.0; 6]; 6];
    excitation[2][0] = p_exc;
    excitation[5][0] = p_ion;
    excitation[3][1] = p_exc;
    excitation[5][1] = p_ion;
    excitation[2][2] = 1.0;
    excitation[3][3] = 1.0;
    excitation[4][4] = 1.0;
    excitation[5][5] = 1.0;

    let mut decay = [[0.0; 6]; 6];
    decay[0][0] = 1.0;
    decay[1][1] = 1.0;
    decay[0][2] = 1.0 - k35;
    decay[4][2] = k35;
    decay[1][3] = 1.0 - k45;
    decay[4][3] = k45;
    decay[4][4] = 1.0;
    decay[5][5] = 1.0;

    let mut singlet_ionization = [[0.0; 6]; 6];
    singlet_ionization[0][0] = 1.0;
    singlet_ionization[1][1] = 1.0;
    singlet_ionization[2][2] = 1.0;
    singlet_ionization[3][3] = 1.0;
    singlet_ionization[0][4] = k51;
    singlet_ionization[1][4] = k52;
    singlet_ionization[5][4] = p_sing;
    singlet_ionization[5][5] = 1.0;

    let matrices = TransferMatrices { excitation, decay, singlet_ionization };
    for (name, m) in [
        ("excitation", &matrices.excitation),
        ("decay", &matrices.decay),
        ("singlet_ionization", &matrices.singlet_ionization),
    ] {
        if !column_sums_are_unit(m) {
            return Err(Error::Domain(format!(
                "{name} matrix is not column-stochastic for these parameters"
            )));
        }
    }
    Ok(matrices)
}

fn mat_mul(a: &[[f64; 6]; 6], b: &[[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for k in 0..6 {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..6 {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

fn mat_vec(m: &[[f64; 6]; 6], v: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for i in 0..6 {
        for j in 0..6 {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

/// One full cycle: singlet_ionization · decay · excitation.
pub fn cycle_matrix(params: &SccParams) -> Result<[[f64; 6]; 6]> {
    let m = build_matrices(params)?;
    Ok(mat_mul(&m.singlet_ionization, &mat_mul(&m.decay, &m.excitation)))
}

/// Prepared spin sublevel; ms=+1 and ms=−1 share one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinLabel {
    Ms0,
    Ms1,
}

/// Initial state after charge and spin initialization.
///
/// NV⁰ carries `charge_init_nv0`; the rest splits `spin_init` into the
/// prepared sublevel and the remainder into the other.
pub fn initial_state(params: &SccParams, spin: SpinLabel) -> Result<SixLevelState> {
    let nv_minus = 1.0 - params.charge_init_nv0;
    let (prepared, other) = (nv_minus * params.spin_init, nv_minus * (1.0 - params.spin_init));
    let mut p = [0.0; 6];
    match spin {
        SpinLabel::Ms0 => {
            p[0] = prepared;
            p[1] = other;
        }
        SpinLabel::Ms1 => {
            p[1] = prepared;
            p[0] = other;
        }
    }
    p[5] = params.charge_init_nv0;
    SixLevelState::new(p)
}

/// Apply `n` full conversion cycles to a state.
pub fn apply_cycles(p0: SixLevelState, params: &SccParams, n: u32) -> Result<SixLevelState> {
    let cycle = cycle_matrix(params)?;
    if n == 0 {
        return Ok(p0);
    }
    let mut p = p0.populations();
    for _ in 0..n {
        p = mat_vec(&cycle, &p);
    }
    // renormalize away accumulated rounding before revalidating
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v = (*v / sum).clamp(0.0, 1.0);
    }
    SixLevelState::new(p)
}

/// Spin-conditioned NV⁻ detection probabilities after the conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccEfficiency {
    /// P(NV⁻ | prepared ms=0).
    pub beta0: f64,
    /// P(NV⁻ | prepared ms=±1).
    pub beta1: f64,
}

impl SccEfficiency {
    pub fn new(beta0: f64, beta1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta0) || !(0.0..=1.0).contains(&beta1) {
            return Err(Error::Domain(format!(
                "efficiencies must lie in [0,1], got ({beta0}, {beta1})"
            )));
        }
        Ok(Self { beta0, beta1 })
    }
}

/// β₀ and β₁ after `n` cycles from the corresponding initial states.
pub fn scc_efficiencies(params: &SccParams, n: u32) -> Result<SccEfficiency> {
    let b0 = apply_cycles(initial_state(params, SpinLabel::Ms0)?, params, n)?;
    let b1 = apply_cycles(initial_state(params, SpinLabel::Ms1)?, params, n)?;
    SccEfficiency::new(b0.nv_minus_population(), b1.nv_minus_population())
}

/// NV⁻ survival probability when the ionizing NIR train arrives `delay_ns`
/// after shelving: 1 − shelved_fraction·p_sing·exp(−delay/lifetime).
pub fn shelf_delay_survival(
    p_sing: f64,
    singlet_lifetime_ns: f64,
    delay_ns: f64,
    shelved_fraction: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_sing) || !(0.0..=1.0).contains(&shelved_fraction) {
        return Err(Error::Domain(
            "p_sing and shelved_fraction must lie in [0,1]".into(),
        ));
    }
    if !(singlet_lifetime_ns > 0.0) {
        return Err(Error::Domain(format!(
            "singlet lifetime must be > 0 ns, got {singlet_lifetime_ns}"
        )));
    }
    if !delay_ns.is_finite() || delay_ns < 0.0 {
        return Err(Error::Domain(format!("delay must be >= 0 ns, got {delay_ns}")));
    }
    Ok(1.0 - shelved_fraction * p_sing * (-delay_ns / singlet_lifetime_ns).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_are_column_stochastic_for_paper_parameters() {
        let m = build_matrices(&SccParams::paper()).unwrap();
        for mat in [&m.excitation, &m.decay, &m.singlet_ionization] {
            assert!(column_sums_are_unit(mat));
        }
        let cycle = cycle_matrix(&SccParams::paper()).unwrap();
        assert!(column_sums_are_unit(&cycle));
    }

    #[test]
    fn k51_k52_recovered_from_ratio_and_conservation() {
        let p = SccParams::paper();
        assert!((p.k51() / p.k52() - 2.26).abs() < 1e-12);
        assert!((p.k51() + p.k52() + p.p_sing - 1.0).abs() < 1e-12);
        assert!((p.p_exc() - 0.995).abs() < 1e-15);
    }

    #[test]
    fn lossless_cycle_is_identity_on_ground_states() {
        let p = SccParams::new(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let cycle = cycle_matrix(&p).unwrap();
        for j in 0..2 {
            for i in 0..6 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((cycle[i][j] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn full_singlet_ionization_drains_shelved_population() {
        // p_sing = 1 sends everything that shelved to NV⁰
        let p = SccParams::new(0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.0).unwrap();
        let s = apply_cycles(initial_state(&p, SpinLabel::Ms0).unwrap(), &p, 1).unwrap();
        assert!((s.nv_zero_population() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_paper_numbers() {
        let s = initial_state(&SccParams::paper(), SpinLabel::Ms0).unwrap();
        let p = s.populations();
        assert!((p[0] - 0.816).abs() < 1e-12);
        assert!((p[1] - 0.144).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[3], 0.0);
        assert_eq!(p[4], 0.0);
        assert!((p[5] - 0.04).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_state_pure_preparation() {
        let params = SccParams::new(0.005, 0.03, 0.25, 0.3, 2.0, 1.0, 0.0).unwrap();
        let s = initial_state(&params, SpinLabel::Ms1).unwrap();
        assert_eq!(s.populations()[1], 1.0);
    }

    #[test]
    fn zero_cycles_is_identity() {
        let params = SccParams::paper();
        let s0 = initial_state(&params, SpinLabel::Ms0).unwrap();
        assert_eq!(apply_cycles(s0, &params, 0).unwrap(), s0);
    }

    #[test]
    fn intermediate_states_stay_valid_and_transients_drain() {
        let params = SccParams::paper();
        let mut s = initial_state(&params, SpinLabel::Ms1).unwrap();
        for _ in 0..25 {
            s = apply_cycles(s, &params, 1).unwrap();
            let p = s.populations();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            // excited and singlet levels are empty after every full cycle
            assert!(p[2].abs() < 1e-12 && p[3].abs() < 1e-12 && p[4].abs() < 1e-12);
        }
    }

    #[test]
    fn nv_zero_population_is_monotone_in_cycles() {
        let params = SccParams::paper();
        for spin in [SpinLabel::Ms0, SpinLabel::Ms1] {
            let mut prev = 0.0;
            for n in 0..40 {
                let s = apply_cycles(initial_state(&params, spin).unwrap(), &params, n).unwrap();
                let p6 = s.nv_zero_population();
                assert!(p6 + 1e-12 >= prev, "NV0 decreased at n={n}");
                prev = p6;
            }
        }
    }

    #[test]
    fn ten_cycles_reproduce_measured_efficiencies() {
        let eff = scc_efficiencies(&SccParams::paper(), 10).unwrap();
        // transfer-matrix values: 0.7711 and 0.5899, inside the measured
        // 0.80 ± 0.03 / 0.60 ± 0.03 windows
        assert!((eff.beta0 - 0.7711051756).abs() < 1e-9, "beta0 {}", eff.beta0);
        assert!((eff.beta1 - 0.5898898369).abs() < 1e-9, "beta1 {}", eff.beta1);
        assert!((eff.beta0 - 0.80).abs() < 0.03);
        assert!((eff.beta1 - 0.60).abs() < 0.03);
    }

    #[test]
    fn no_ionization_channels_leave_charge_untouched() {
        let p = SccParams::new(0.0, 0.2, 0.6, 0.0, 1.5, 0.85, 0.04).unwrap();
        let eff = scc_efficiencies(&p, 17).unwrap();
        assert!((eff.beta0 - 0.96).abs() < 1e-12);
        assert!((eff.beta1 - 0.96).abs() < 1e-12);
    }

    #[test]
    fn beta_is_nonincreasing_in_cycle_count() {
        let params = SccParams::paper();
        let mut prev = f64::MAX;
        for n in 0..=40 {
            let eff = scc_efficiencies(&params, n).unwrap();
            assert!(eff.beta1 <= prev + 1e-12);
            assert!(eff.beta0 >= eff.beta1, "contrast inverted at n={n}");
            prev = eff.beta1;
        }
    }

    #[test]
    fn shelf_delay_survival_limits() {
        assert!((shelf_delay_survival(0.35, 182.0, 1e9, 0.2).unwrap() - 1.0).abs() < 1e-12);
        // shelved_fraction·p_sing = 0.07 at zero delay gives the ~7% contrast
        let s = shelf_delay_survival(0.35, 182.0, 0.0, 0.2).unwrap();
        assert!((s - 0.93).abs() < 1e-12);
    }

    #[test]
    fn shelf_delay_survival_rejects_bad_inputs() {
        assert!(shelf_delay_survival(1.5, 182.0, 0.0, 0.2).is_err());
        assert!(shelf_delay_survival(0.3, 0.0, 0.0, 0.2).is_err());
        assert!(shelf_delay_survival(0.3, 182.0, -1.0, 0.2).is_err());
    }

    #[test]
    fn products_of_column_stochastic_matrices_stay_column_stochastic() {
        let params = SccParams::new(0.02, 0.1, 0.4, 0.5, 3.0, 0.9, 0.05).unwrap();
        let mut m = cycle_matrix(&params).unwrap();
        for _ in 0..20 {
            m = mat_mul(&m, &cycle_matrix(&params).unwrap());
            assert!(column_sums_are_unit(&m));
        }
    }
}
