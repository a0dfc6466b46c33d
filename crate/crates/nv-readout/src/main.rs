//! Command-line front end: loads device profiles, runs the library's
//! computations and simulations, and emits figure-ready CSV/JSON tables.
//!
//! Output goes to stdout unless `--out` names a file, in which case a run
//! manifest (`<out>.manifest.json`) records the exact argv, seed and version
//! for replay. Floating-point output carries 9 significant digits. Exit
//! codes: 0 ok, 2 input error, 3 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nv_readout::charge::{self, ChargePopulation};
use nv_readout::estimation;
use nv_readout::metrics::{self, TechniqueRecord};
use nv_readout::photon::{self, ChargeLabel, PoissonMixture, ThresholdConvention};
use nv_readout::profile::{DeviceProfile, ExperimentSpec};
use nv_readout::protocol;
use nv_readout::scc::{self, SccEfficiency};
use nv_readout::sim;
use nv_readout::Error;

#[derive(Parser)]
#[command(
    name = "nv-readout",
    version,
    about = "Charge dynamics, photon statistics, spin-to-charge conversion and readout planning for NV centers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady-state NV⁻ population versus NIR power at fixed visible power.
    SteadyState(SteadyStateArgs),
    /// NIR-only equilibrium population under a destructive readout cycle.
    NirEquilibrium(NirEquilibriumArgs),
    /// Photon-count histograms: model pmf or format conversion.
    Histogram(HistogramArgs),
    /// Charge readout fidelity report for a count mixture and threshold.
    Fidelity(FidelityArgs),
    /// Conversion efficiencies (β₀, β₁) versus cycle count.
    Scc(SccArgs),
    /// Cross-technique readout comparison table from a JSON record list.
    Metrics(MetricsArgs),
    /// Optimized readout time, total integration time and speedup sweep.
    Speedup(SpeedupArgs),
    /// Monte Carlo simulation of a pulse-sequence experiment.
    Simulate(SimulateArgs),
    /// Parameter fits on CSV datasets.
    Fit(FitArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Write the artifact here instead of stdout; also writes
    /// <out>.manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SteadyStateArgs {
    /// Device profile JSON.
    #[arg(long)]
    profile: PathBuf,
    /// Visible power in µW.
    #[arg(long)]
    g_uw: f64,
    #[arg(long, default_value_t = 0.0)]
    r_min_mw: f64,
    #[arg(long, default_value_t = 100.0)]
    r_max_mw: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct NirEquilibriumArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    r_min_mw: f64,
    #[arg(long, default_value_t = 100.0)]
    r_max_mw: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Interaction time per measurement cycle in ms.
    #[arg(long, default_value_t = 10.0)]
    t_interact_ms: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct HistogramArgs {
    #[command(subcommand)]
    mode: HistogramMode,
}

#[derive(Subcommand)]
enum HistogramMode {
    /// Emit the mixture pmf as photon_count,probability.
    Pmf(HistogramPmfArgs),
    /// Convert between probability and occurrence histograms.
    Convert(HistogramConvertArgs),
}

#[derive(Args)]
struct HistogramPmfArgs {
    #[arg(long)]
    eta0: f64,
    #[arg(long)]
    eta_minus: f64,
    #[arg(long, default_value_t = 0.5)]
    weight_minus: f64,
    /// Highest photon count to tabulate; defaults to η₋ + 12√η₋ + 20.
    #[arg(long)]
    max_n: Option<u32>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct HistogramConvertArgs {
    /// Input CSV (photon_count,probability or photon_count,occurrences).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    to: HistogramFormat,
    /// Total shots, required when converting to occurrences.
    #[arg(long)]
    shots: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum HistogramFormat {
    Probability,
    Occurrences,
}

#[derive(Args)]
struct FidelityArgs {
    #[arg(long)]
    eta0: f64,
    #[arg(long)]
    eta_minus: f64,
    #[arg(long, default_value_t = 0.5)]
    weight_minus: f64,
    /// Classification threshold; omitted means scan for the optimum.
    #[arg(long)]
    threshold: Option<u32>,
    #[arg(long, value_enum, default_value_t = ConventionFlag::Above)]
    convention: ConventionFlag,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionFlag {
    /// NV⁻ iff count > threshold.
    Above,
    /// NV⁻ iff count ≥ threshold.
    AtOrAbove,
}

#[derive(Args)]
struct SccArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = 20)]
    n_max: u32,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct MetricsArgs {
    /// JSON list of technique records.
    #[arg(long)]
    records: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SpeedupArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Operation-time range with units, e.g. 0.1us:10ms.
    #[arg(long, default_value = "0.1us:10ms")]
    tau_op_range: String,
    #[arg(long, default_value_t = 25)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    tau_init_us: f64,
    /// Conversion cycles defining the demonstrated efficiencies.
    #[arg(long, default_value_t = 10)]
    n_cycles: u32,
    /// Override β₀ instead of deriving it from the profile.
    #[arg(long)]
    beta0: Option<f64>,
    /// Override β₁ instead of deriving it from the profile.
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long, default_value_t = protocol::PL_ALPHA0)]
    pl_alpha0: f64,
    /// Defaults to 0.7·α₀.
    #[arg(long)]
    pl_alpha1: Option<f64>,
    #[arg(long, default_value_t = protocol::PL_TAU_READ_US)]
    pl_tau_read_us: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment definition JSON.
    #[arg(long)]
    experiment: PathBuf,
    /// Override the experiment's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the experiment's shot count.
    #[arg(long)]
    shots: Option<u64>,
    /// Worker threads for the simulation (default: rayon's choice).
    #[arg(long)]
    threads: Option<usize>,
    /// Emit an occurrence histogram of the first recorded segment instead of
    /// per-shot records.
    #[arg(long)]
    histogram: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FitArgs {
    #[command(subcommand)]
    kind: FitKind,
}

#[derive(Subcommand)]
enum FitKind {
    /// Cubic(+quadratic) rate polynomial on power_mw,rate_khz,error_khz data.
    RatePoly(RatePolyFitArgs),
    /// Steady-state charge model on r_mw,p_minus,error data.
    SteadyState(SimpleFitArgs),
    /// Poisson mixture on photon_count,occurrences data.
    Mixture(SimpleFitArgs),
    /// Exponential decay on delay_ns,value data.
    Exponential(SimpleFitArgs),
    /// Joint conversion-model fit on two n_cycles,population,error datasets.
    SccJoint(SccJointFitArgs),
    /// Rate from transition counts.
    Transitions(TransitionsFitArgs),
}

#[derive(Args)]
struct RatePolyFitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Free the quadratic coefficient b (otherwise fixed to zero).
    #[arg(long)]
    include_quadratic: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimpleFitArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SccJointFitArgs {
    /// ms=0 dataset.
    #[arg(long)]
    input: PathBuf,
    /// ms=±1 dataset.
    #[arg(long)]
    input_ms1: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TransitionsFitArgs {
    #[arg(long)]
    transitions: u64,
    #[arg(long)]
    trials: u64,
    #[arg(long)]
    pulse_ms: f64,
    /// Use the −ln(1−p)/τ estimator instead of p/τ.
    #[arg(long)]
    corrected: bool,
    #[command(flatten)]
    output: OutputArgs,
}

/// 9 significant digits, diff-friendly.
fn fmt9(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.8e}")
}

struct RunOutput {
    artifact: String,
    seed: Option<u64>,
    notes: Vec<String>,
}

impl RunOutput {
    fn new(artifact: String) -> Self {
        Self { artifact, seed: None, notes: Vec::new() }
    }
}

fn read_to_string(path: &PathBuf) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))
}

/// Parse a simple numeric CSV with an optional header line.
fn read_csv(path: &PathBuf, columns: usize) -> Result<Vec<Vec<f64>>, Error> {
    let text = read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        match parsed {
            Some(values) if values.len() == columns => rows.push(values),
            Some(values) => {
                return Err(Error::Schema(format!(
                    "{}:{}: expected {columns} columns, got {}",
                    path.display(),
                    lineno + 1,
                    values.len()
                )))
            }
            None if lineno == 0 => continue, // header
            None => {
                return Err(Error::Schema(format!(
                    "{}:{}: non-numeric field",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Schema(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn load_profile(path: &PathBuf) -> Result<DeviceProfile, Error> {
    DeviceProfile::from_json(&read_to_string(path)?)
}

fn power_range_note(r_max_mw: f64, g_uw: Option<f64>, notes: &mut Vec<String>) {
    if r_max_mw > 100.0 {
        notes.push(format!(
            "NIR powers above 100 mW extrapolate beyond the fitted range (max requested {r_max_mw} mW)"
        ));
    }
    if let Some(g) = g_uw {
        if g > 50.0 {
            notes.push(format!(
                "visible powers above 50 uW extrapolate beyond the fitted range (requested {g} uW)"
            ));
        }
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, Error> {
    if points < 2 {
        return Err(Error::Domain(format!("at least 2 points required, got {points}")));
    }
    if !(hi > lo) {
        return Err(Error::Domain(format!("range must be increasing, got [{lo}, {hi}]")));
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

fn logspace(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, Error> {
    if !(lo > 0.0) {
        return Err(Error::Domain(format!("log range needs positive start, got {lo}")));
    }
    Ok(linspace(lo.ln(), hi.ln(), points)?.into_iter().map(f64::exp).collect())
}

/// Parse a duration with an explicit unit suffix into µs.
fn parse_duration_us(text: &str) -> Result<f64, Error> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_ascii_alphabetic())
        .ok_or_else(|| Error::Schema(format!("duration {text:?} is missing a unit (ns/us/ms/s)")))?;
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| Error::Schema(format!("bad duration value {num:?}")))?;
    let factor = match unit {
        "ns" => 1e-3,
        "us" => 1.0,
        "ms" => 1e3,
        "s" => 1e6,
        _ => return Err(Error::Schema(format!("unknown duration unit {unit:?}"))),
    };
    Ok(value * factor)
}

fn run_steady_state(args: &SteadyStateArgs) -> Result<RunOutput, Error> {
    let profile = load_profile(&args.profile)?;
    let model = profile.rate_model.to_model()?;
    let g_mw = args.g_uw * 1e-3;
    let mut csv = String::from("r_mw,p_minus\n");
    for r in linspace(args.r_min_mw, args.r_max_mw, args.points)? {
        let ss = charge::steady_state(&model, g_mw, r)?;
        writeln!(csv, "{},{}", fmt9(r), fmt9(ss.p_minus())).unwrap();
    }
    let mut out = RunOutput::new(csv);
    power_range_note(args.r_max_mw, Some(args.g_uw), &mut out.notes);
    Ok(out)
}

fn run_nir_equilibrium(args: &NirEquilibriumArgs) -> Result<RunOutput, Error> {
    let profile = load_profile(&args.profile)?;
    let ion = profile.nir_ionization.to_polynomial("nir_ionization")?;
    let rec = profile.nir_recombination.to_polynomial("nir_recombination")?;
    let d = profile.destructivity.to_matrix()?;
    let mut csv = String::from("r_mw,p_minus\n");
    for r in linspace(args.r_min_mw, args.r_max_mw, args.points)? {
        let eq = charge::nir_equilibrium(&ion, &rec, r, &d, args.t_interact_ms)?;
        writeln!(csv, "{},{}", fmt9(r), fmt9(eq.p_minus())).unwrap();
    }
    let mut out = RunOutput::new(csv);
    power_range_note(args.r_max_mw, None, &mut out.notes);
    Ok(out)
}

fn run_histogram(args: &HistogramArgs) -> Result<RunOutput, Error> {
    match &args.mode {
        HistogramMode::Pmf(pmf) => {
            let mixture = PoissonMixture::new(pmf.eta0, pmf.eta_minus, pmf.weight_minus)?;
            let max_n = pmf
                .max_n
                .unwrap_or_else(|| (pmf.eta_minus + 12.0 * pmf.eta_minus.sqrt() + 20.0).ceil() as u32);
            let mut csv = String::from("photon_count,probability\n");
            for n in 0..=max_n {
                writeln!(csv, "{n},{}", fmt9(photon::mixture_pmf(&mixture, n))).unwrap();
            }
            Ok(RunOutput::new(csv))
        }
        HistogramMode::Convert(conv) => {
            let rows = read_csv(&conv.input, 2)?;
            let total: f64 = rows.iter().map(|r| r[1]).sum();
            if !(total > 0.0) {
                return Err(Error::Schema("histogram has no mass".into()));
            }
            let mut csv = String::new();
            match conv.to {
                HistogramFormat::Probability => {
                    csv.push_str("photon_count,probability\n");
                    for row in &rows {
                        writeln!(csv, "{},{}", row[0] as u64, fmt9(row[1] / total)).unwrap();
                    }
                }
                HistogramFormat::Occurrences => {
                    let shots = conv.shots.ok_or_else(|| {
                        Error::Schema("--shots is required when converting to occurrences".into())
                    })?;
                    csv.push_str("photon_count,occurrences\n");
                    for row in &rows {
                        let occ = (row[1] / total * shots as f64).round() as u64;
                        writeln!(csv, "{},{occ}", row[0] as u64).unwrap();
                    }
                }
            }
            Ok(RunOutput::new(csv))
        }
    }
}

fn run_fidelity(args: &FidelityArgs) -> Result<RunOutput, Error> {
    let mixture = PoissonMixture::new(args.eta0, args.eta_minus, args.weight_minus)?;
    let convention = match args.convention {
        ConventionFlag::Above => ThresholdConvention::Above,
        ConventionFlag::AtOrAbove => ThresholdConvention::AtOrAbove,
    };
    let threshold = match args.threshold {
        Some(t) => t,
        None => photon::optimal_threshold(&mixture)?,
    };
    let report = photon::charge_fidelity_with(&mixture, threshold, convention)?;
    Ok(RunOutput::new(
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    ))
}

fn run_scc(args: &SccArgs) -> Result<RunOutput, Error> {
    let profile = load_profile(&args.profile)?;
    let mut csv = String::from("n_cycles,beta0,beta1\n");
    for n in 0..=args.n_max {
        let eff = scc::scc_efficiencies(&profile.scc, n)?;
        writeln!(csv, "{n},{},{}", fmt9(eff.beta0), fmt9(eff.beta1)).unwrap();
    }
    Ok(RunOutput::new(csv))
}

fn run_metrics(args: &MetricsArgs) -> Result<RunOutput, Error> {
    let records: Vec<TechniqueRecord> = serde_json::from_str(&read_to_string(&args.records)?)
        .map_err(|e| Error::Schema(format!("records JSON: {e}")))?;
    let table = metrics::comparison_table(&records)?;
    let mut csv = String::from(
        "study,baseline_snr,single_shot_snr,snr_gain,optimal_snr,saturation_kcps,requirements\n",
    );
    for row in &table {
        writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            row.study,
            fmt9(row.baseline_snr),
            fmt9(row.single_shot_snr),
            fmt9(row.snr_gain),
            row.optimal_snr.map(fmt9).unwrap_or_default(),
            row.saturation_kcps.map(fmt9).unwrap_or_default(),
            row.requirements.replace(',', ";")
        )
        .unwrap();
    }
    Ok(RunOutput::new(csv))
}

fn run_speedup(args: &SpeedupArgs) -> Result<RunOutput, Error> {
    let profile = load_profile(&args.profile)?;
    let count_model = profile.count_rate.to_model()?;
    let eff = match (args.beta0, args.beta1) {
        (Some(b0), Some(b1)) => SccEfficiency::new(b0, b1)?,
        (None, None) => scc::scc_efficiencies(&profile.scc, args.n_cycles)?,
        _ => {
            return Err(Error::Schema(
                "--beta0 and --beta1 must be given together".into(),
            ))
        }
    };
    let pl_alpha1 = args.pl_alpha1.unwrap_or(0.7 * args.pl_alpha0);
    let (lo_text, hi_text) = args
        .tau_op_range
        .split_once(':')
        .ok_or_else(|| Error::Schema("tau-op-range must look like 0.1us:10ms".into()))?;
    let range = logspace(parse_duration_us(lo_text)?, parse_duration_us(hi_text)?, args.points)?;

    let mut csv = String::from("tau_op_us,tau_read_opt_us,snr_ss,total_time_s,speedup\n");
    let mut notes = Vec::new();
    for tau_op in range {
        let point = protocol::speedup_point(
            &eff,
            &count_model,
            args.pl_alpha0,
            pl_alpha1,
            args.pl_tau_read_us,
            args.tau_init_us,
            tau_op,
        )?;
        if point.multimodal {
            notes.push(format!("objective multimodal at tau_op = {tau_op} us"));
        }
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt9(tau_op),
            fmt9(point.tau_read_opt_us),
            fmt9(point.snr_single_shot),
            fmt9(point.total_time_s),
            fmt9(point.speedup)
        )
        .unwrap();
    }
    let mut out = RunOutput::new(csv);
    out.notes = notes;
    Ok(out)
}

fn run_simulate(args: &SimulateArgs) -> Result<RunOutput, Error> {
    let mut spec = ExperimentSpec::from_json(&read_to_string(&args.experiment)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(shots) = args.shots {
        spec.shots = shots;
    }
    let segments = spec.segments()?;
    let initial = ChargePopulation::from_p_minus(spec.initial_p_minus)?;
    let config = sim::TrajectoryConfig::new(spec.seed, spec.shots)?;

    let simulate =
        || -> Result<Vec<sim::ShotRecord>, Error> { sim::run_sequence(&segments, initial, config) };
    let records = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?
            .install(simulate),
        None => simulate(),
    }?;

    let mut csv = String::new();
    if args.histogram {
        let mut occurrences: Vec<u64> = Vec::new();
        for rec in &records {
            let n = *rec.photons.first().ok_or_else(|| {
                Error::Schema("experiment records no photons; histogram output is empty".into())
            })? as usize;
            if n >= occurrences.len() {
                occurrences.resize(n + 1, 0);
            }
            occurrences[n] += 1;
        }
        csv.push_str("photon_count,occurrences\n");
        for (n, occ) in occurrences.iter().enumerate() {
            writeln!(csv, "{n},{occ}").unwrap();
        }
    } else {
        let recorded = segments.iter().filter(|s| s.record_photons).count();
        csv.push_str("shot,final_charge");
        for i in 0..recorded {
            write!(csv, ",photons_{i}").unwrap();
        }
        csv.push('\n');
        for (shot, rec) in records.iter().enumerate() {
            let label = match rec.final_charge {
                ChargeLabel::NvMinus => "nv_minus",
                ChargeLabel::NvZero => "nv_zero",
            };
            write!(csv, "{shot},{label}").unwrap();
            for n in &rec.photons {
                write!(csv, ",{n}").unwrap();
            }
            csv.push('\n');
        }
    }
    let mut out = RunOutput::new(csv);
    out.seed = Some(spec.seed);
    Ok(out)
}

fn run_fit(args: &FitArgs) -> Result<RunOutput, Error> {
    let json = match &args.kind {
        FitKind::RatePoly(a) => {
            let rows = read_csv(&a.input, 3)?;
            let data: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
            let fit = estimation::fit_rate_polynomial(&data, a.include_quadratic)?;
            serde_json::to_string_pretty(&fit)
        }
        FitKind::SteadyState(a) => {
            let rows = read_csv(&a.input, 3)?;
            let data: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r[0], r[1], r[2])).collect();
            serde_json::to_string_pretty(&estimation::fit_steady_state(&data)?)
        }
        FitKind::Mixture(a) => {
            let rows = read_csv(&a.input, 2)?;
            let data: Vec<(u32, f64)> = rows.iter().map(|r| (r[0] as u32, r[1])).collect();
            serde_json::to_string_pretty(&estimation::fit_poisson_mixture(&data)?)
        }
        FitKind::Exponential(a) => {
            let rows = read_csv(&a.input, 2)?;
            let data: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
            serde_json::to_string_pretty(&estimation::fit_exponential(&data)?)
        }
        FitKind::SccJoint(a) => {
            let parse = |path: &PathBuf| -> Result<Vec<(u32, f64, f64)>, Error> {
                Ok(read_csv(path, 3)?
                    .iter()
                    .map(|r| (r[0] as u32, r[1], r[2]))
                    .collect())
            };
            let ms0 = parse(&a.input)?;
            let ms1 = parse(&a.input_ms1)?;
            serde_json::to_string_pretty(&estimation::fit_scc_joint(&ms0, &ms1)?)
        }
        FitKind::Transitions(a) => {
            let est = if a.corrected {
                estimation::rate_from_transitions_corrected(a.transitions, a.trials, a.pulse_ms)?
            } else {
                estimation::rate_from_transitions(a.transitions, a.trials, a.pulse_ms)?
            };
            serde_json::to_string_pretty(&est)
        }
    }
    .expect("fit serializes");
    Ok(RunOutput::new(json + "\n"))
}

#[derive(serde::Serialize)]
struct RunManifest<'a> {
    command: String,
    argv: Vec<String>,
    seed: Option<u64>,
    crate_version: &'a str,
    schema_version: u32,
    output: String,
    notes: &'a [String],
}

fn emit(output: RunOutput, target: &Option<PathBuf>, command_name: &str) -> Result<(), Error> {
    for note in &output.notes {
        eprintln!("note: {note}");
    }
    match target {
        None => {
            print!("{}", output.artifact);
            Ok(())
        }
        Some(path) => {
            fs::write(path, &output.artifact)
                .map_err(|e| Error::Schema(format!("cannot write {}: {e}", path.display())))?;
            let manifest = RunManifest {
                command: command_name.to_string(),
                argv: std::env::args().collect(),
                seed: output.seed,
                crate_version: env!("CARGO_PKG_VERSION"),
                schema_version: nv_readout::profile::SCHEMA_VERSION,
                output: path.display().to_string(),
                notes: &output.notes,
            };
            let manifest_path = PathBuf::from(format!("{}.manifest.json", path.display()));
            fs::write(
                &manifest_path,
                serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
            )
            .map_err(|e| Error::Schema(format!("cannot write {}: {e}", manifest_path.display())))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result, out) = match &cli.command {
        Command::SteadyState(a) => ("steady-state", run_steady_state(a), &a.output.out),
        Command::NirEquilibrium(a) => ("nir-equilibrium", run_nir_equilibrium(a), &a.output.out),
        Command::Histogram(a) => (
            "histogram",
            run_histogram(a),
            match &a.mode {
                HistogramMode::Pmf(p) => &p.output.out,
                HistogramMode::Convert(c) => &c.output.out,
            },
        ),
        Command::Fidelity(a) => ("fidelity", run_fidelity(a), &a.output.out),
        Command::Scc(a) => ("scc", run_scc(a), &a.output.out),
        Command::Metrics(a) => ("metrics", run_metrics(a), &a.output.out),
        Command::Speedup(a) => ("speedup", run_speedup(a), &a.output.out),
        Command::Simulate(a) => ("simulate", run_simulate(a), &a.output.out),
        Command::Fit(a) => (
            "fit",
            run_fit(a),
            match &a.kind {
                FitKind::RatePoly(x) => &x.output.out,
                FitKind::SteadyState(x) => &x.output.out,
                FitKind::Mixture(x) => &x.output.out,
                FitKind::Exponential(x) => &x.output.out,
                FitKind::SccJoint(x) => &x.output.out,
                FitKind::Transitions(x) => &x.output.out,
            },
        ),
    };
    let outcome = result.and_then(|output| emit(output, out, name));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (tag, code) = match &err {
                Error::Domain(_) | Error::Schema(_) | Error::Underdetermined { .. } => ("input", 2u8),
                Error::Degenerate(_) | Error::Simulation(_) => ("numeric", 3u8),
            };
            eprintln!("error[{tag}]: {err}");
            ExitCode::from(code)
        }
    }
}
