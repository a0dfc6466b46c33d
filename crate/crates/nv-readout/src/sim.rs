//! Stochastic oracle: continuous-time two-state charge trajectories with
//! state-dependent Poisson photon emission, and per-shot simulation of the
//! pulse-sequence experiments.
//!
//! Determinism: every shot draws from its own ChaCha8 substream whose seed is
//! a SplitMix64 hash of (experiment seed, shot index). Identical inputs give
//! bit-identical outputs regardless of how many threads participate; shots
//! are merged back in index order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charge::ChargePopulation;
use crate::photon::ChargeLabel;
use crate::scc::{self, SccParams, SpinLabel};
use crate::{Error, Result};

/// One stretch of a pulse sequence with constant rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub duration_ms: f64,
    pub gamma_ion_khz: f64,
    pub gamma_rec_khz: f64,
    pub emit_rate_minus_kcps: f64,
    pub emit_rate_zero_kcps: f64,
    /// Count photons emitted during this segment into the shot record.
    pub record_photons: bool,
}

impl PulseSegment {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("duration_ms", self.duration_ms),
            ("gamma_ion_khz", self.gamma_ion_khz),
            ("gamma_rec_khz", self.gamma_rec_khz),
            ("emit_rate_minus_kcps", self.emit_rate_minus_kcps),
            ("emit_rate_zero_kcps", self.emit_rate_zero_kcps),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Seed and shot count of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub shots: u64,
}

impl TrajectoryConfig {
    pub fn new(seed: u64, shots: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::Simulation("at least one shot is required".into()));
        }
        Ok(Self { seed, shots })
    }
}

/// Outcome of one shot: final charge and the photon counts of each recorded
/// segment, in sequence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub final_charge: ChargeLabel,
    pub photons: Vec<u32>,
}

const GILLESPIE_EVENT_CAP: u64 = 1_000_000;

fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
}

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent per-shot generator derived from (seed, shot index).
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut s = seed;
    splitmix64(&mut s);
    let a = splitmix64_mix(s ^ shot);
    splitmix64(&mut s);
    let b = splitmix64_mix(s ^ shot.rotate_left(32));
    ChaCha8Rng::seed_from_u64(a ^ b.rotate_left(17))
}

fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

/// Gillespie walk through one segment; returns photons counted and the charge
/// at the segment's end.
fn run_segment(seg: &PulseSegment, mut charge: ChargeLabel, rng: &mut ChaCha8Rng) -> Result<(u32, ChargeLabel)> {
    let mut t = 0.0;
    let mut photons = 0u32;
    let mut events = 0u64;
    while t < seg.duration_ms {
        let remaining = seg.duration_ms - t;
        let (rate, emit) = match charge {
            ChargeLabel::NvMinus => (seg.gamma_ion_khz, seg.emit_rate_minus_kcps),
            ChargeLabel::NvZero => (seg.gamma_rec_khz, seg.emit_rate_zero_kcps),
        };
        let dwell = if rate > 0.0 {
            Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };
        let interval = dwell.min(remaining);
        if seg.record_photons {
            photons = photons.saturating_add(sample_poisson(rng, emit * interval));
        }
        if dwell >= remaining {
            break;
        }
        t += dwell;
        charge = match charge {
            ChargeLabel::NvMinus => ChargeLabel::NvZero,
            ChargeLabel::NvZero => ChargeLabel::NvMinus,
        };
        events += 1;
        if events > GILLESPIE_EVENT_CAP {
            return Err(Error::Simulation(format!(
                "more than {GILLESPIE_EVENT_CAP} charge transitions in one segment; rates are pathological"
            )));
        }
    }
    Ok((photons, charge))
}

fn one_shot(
    segments: &[PulseSegment],
    initial_p_minus: f64,
    seed: u64,
    shot: u64,
) -> Result<ShotRecord> {
    let mut rng = shot_rng(seed, shot);
    let mut charge = if rng.gen::<f64>() < initial_p_minus {
        ChargeLabel::NvMinus
    } else {
        ChargeLabel::NvZero
    };
    let mut photons = Vec::new();
    for seg in segments {
        let (count, next) = run_segment(seg, charge, &mut rng)?;
        if seg.record_photons {
            photons.push(count);
        }
        charge = next;
    }
    Ok(ShotRecord { final_charge: charge, photons })
}

/// Simulate a pulse sequence shot by shot.
///
/// Within each segment the charge performs a continuous-time two-state walk
/// (exponential waiting times for the active transition); photons are drawn
/// Poisson with mean rate×dwell per constant-charge interval.
pub fn run_sequence(
    segments: &[PulseSegment],
    initial: ChargePopulation,
    config: TrajectoryConfig,
) -> Result<Vec<ShotRecord>> {
    if segments.is_empty() {
        return Err(Error::Simulation("pulse sequence has no segments".into()));
    }
    for seg in segments {
        seg.validate()?;
    }
    TrajectoryConfig::new(config.seed, config.shots)?;
    (0..config.shots)
        .into_par_iter()
        .map(|shot| one_shot(segments, initial.p_minus(), config.seed, shot))
        .collect()
}

/// Photon-count histogram with occurrence counts per photon number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// occurrences[n] shots produced exactly n photons.
    pub occurrences: Vec<u64>,
    pub shots: u64,
}

impl Histogram {
    pub fn probabilities(&self) -> Vec<f64> {
        self.occurrences
            .iter()
            .map(|&c| c as f64 / self.shots as f64)
            .collect()
    }

    /// Total-variation distance against a pmf: ½Σ|p̂ − p|, including model
    /// mass beyond the histogram's support.
    pub fn tv_distance(&self, pmf: impl Fn(u32) -> f64) -> f64 {
        let probs = self.probabilities();
        let support = probs.len().max(512);
        let mut acc = 0.0;
        for n in 0..support {
            let emp = probs.get(n).copied().unwrap_or(0.0);
            acc += (emp - pmf(n as u32)).abs();
        }
        0.5 * acc
    }

    pub fn mean(&self) -> f64 {
        let total: u64 = self.occurrences.iter().enumerate().map(|(n, &c)| n as u64 * c).sum();
        total as f64 / self.shots as f64
    }
}

/// Histogram of a single recorded readout segment.
///
/// `emit_minus_kcps`/`emit_zero_kcps` set the two Poisson components; the
/// switching rates let readout backaction mix them.
pub fn simulate_charge_histogram(
    emit_minus_kcps: f64,
    emit_zero_kcps: f64,
    tau_read_ms: f64,
    gamma_ion_khz: f64,
    gamma_rec_khz: f64,
    initial: ChargePopulation,
    config: TrajectoryConfig,
) -> Result<Histogram> {
    let segment = PulseSegment {
        duration_ms: tau_read_ms,
        gamma_ion_khz,
        gamma_rec_khz,
        emit_rate_minus_kcps: emit_minus_kcps,
        emit_rate_zero_kcps: emit_zero_kcps,
        record_photons: true,
    };
    let records = run_sequence(&[segment], initial, config)?;
    let mut occurrences = Vec::new();
    for rec in &records {
        let n = rec.photons[0] as usize;
        if n >= occurrences.len() {
            occurrences.resize(n + 1, 0);
        }
        occurrences[n] += 1;
    }
    Ok(Histogram { occurrences, shots: config.shots })
}

/// Transition counts of a rate measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentOutcome {
    /// NV⁻-prepared trials that ended in NV⁰.
    pub ionization_transitions: u64,
    /// NV⁰-prepared trials that ended in NV⁻.
    pub recombination_transitions: u64,
    pub trials_per_state: u64,
}

/// Prepare each charge state `trials` times, apply one pulse, classify the
/// final state exactly. Only the seed of `config` is used; the trial count is
/// explicit.
///
/// `verify_flip_prob` models an imperfect (destructive) verification that
/// flips the prepared state with that probability; the apparent rate then
/// floors at flip/τ. Zero restores the ideal-verify measurement.
pub fn simulate_rate_experiment(
    true_ion_khz: f64,
    true_rec_khz: f64,
    pulse_ms: f64,
    trials: u64,
    verify_flip_prob: f64,
    config: TrajectoryConfig,
) -> Result<RateExperimentOutcome> {
    if trials == 0 {
        return Err(Error::Simulation("at least one trial is required".into()));
    }
    if !(0.0..=1.0).contains(&verify_flip_prob) {
        return Err(Error::Domain(format!(
            "verify flip probability must lie in [0,1], got {verify_flip_prob}"
        )));
    }
    let segment = PulseSegment {
        duration_ms: pulse_ms,
        gamma_ion_khz: true_ion_khz,
        gamma_rec_khz: true_rec_khz,
        emit_rate_minus_kcps: 0.0,
        emit_rate_zero_kcps: 0.0,
        record_photons: false,
    };
    segment.validate()?;

    let count_flips = |prepared: ChargeLabel, stream_offset: u64| -> Result<u64> {
        (0..trials)
            .into_par_iter()
            .map(|shot| {
                let mut rng = shot_rng(config.seed, stream_offset + shot);
                let mut charge = prepared;
                if verify_flip_prob > 0.0 && rng.gen::<f64>() < verify_flip_prob {
                    charge = match charge {
                        ChargeLabel::NvMinus => ChargeLabel::NvZero,
                        ChargeLabel::NvZero => ChargeLabel::NvMinus,
                    };
                }
                let (_, after) = run_segment(&segment, charge, &mut rng)?;
                Ok(u64::from(after != prepared))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))
    };
    Ok(RateExperimentOutcome {
        ionization_transitions: count_flips(ChargeLabel::NvMinus, 0)?,
        recombination_transitions: count_flips(ChargeLabel::NvZero, trials)?,
        trials_per_state: trials,
    })
}

/// Per-shot estimates of the conversion efficiencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SccSimOutcome {
    pub beta0: f64,
    pub beta1: f64,
    /// Binomial standard errors.
    pub beta0_err: f64,
    pub beta1_err: f64,
    pub shots: u64,
}

fn sample_categorical(rng: &mut ChaCha8Rng, column: &[f64; 6]) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in column.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    5
}

/// Stochastic counterpart of [`scc::scc_efficiencies`]: every cycle samples
/// the branch decisions of the three transfer maps per shot.
pub fn simulate_scc(params: &SccParams, n_cycles: u32, config: TrajectoryConfig) -> Result<SccSimOutcome> {
    TrajectoryConfig::new(config.seed, config.shots)?;
    let matrices = scc::build_matrices(params)?;
    let columns_of = |m: &[[f64; 6]; 6]| -> [[f64; 6]; 6] {
        let mut cols = [[0.0; 6]; 6];
        for j in 0..6 {
            for i in 0..6 {
                cols[j][i] = m[i][j];
            }
        }
        cols
    };
    let step_columns = [
        columns_of(&matrices.excitation),
        columns_of(&matrices.decay),
        columns_of(&matrices.singlet_ionization),
    ];

    let run = |spin: SpinLabel, stream_offset: u64| -> Result<u64> {
        let init = scc::initial_state(params, spin)?.populations();
        (0..config.shots)
            .into_par_iter()
            .map(|shot| {
                let mut rng = shot_rng(config.seed, stream_offset + shot);
                let mut level = {
                    let mut u: f64 = rng.gen();
                    let mut lvl = 5;
                    for (i, &p) in init.iter().enumerate() {
                        if u < p {
                            lvl = i;
                            break;
                        }
                        u -= p;
                    }
                    lvl
                };
                for _ in 0..n_cycles {
                    for columns in &step_columns {
                        level = sample_categorical(&mut rng, &columns[level]);
                    }
                }
                Ok(u64::from(level == 0 || level == 1))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))
    };

    let shots_f = config.shots as f64;
    let hits0 = run(SpinLabel::Ms0, 0)? as f64;
    let hits1 = run(SpinLabel::Ms1, config.shots)? as f64;
    let beta0 = hits0 / shots_f;
    let beta1 = hits1 / shots_f;
    Ok(SccSimOutcome {
        beta0,
        beta1,
        beta0_err: (beta0 * (1.0 - beta0) / shots_f).sqrt(),
        beta1_err: (beta1 * (1.0 - beta1) / shots_f).sqrt(),
        shots: config.shots,
    })
}
