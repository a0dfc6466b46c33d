//! Threshold charge readout on the two-component Poisson count model:
//! misclassification probabilities, fidelity, the optimal threshold, and
//! post-selected initialization purity.
//!
//! Run with: cargo run --example charge_fidelity

use nv_readout::charge::ChargePopulation;
use nv_readout::photon::{
    charge_fidelity, mixture_pmf, optimal_threshold, post_selection_purity, PoissonMixture,
};

fn main() {
    // calibrated 3 ms readout: 0.45 dark counts vs 10 bright counts
    let mixture = PoissonMixture::new(0.45, 10.0, 0.7).unwrap();

    println!("photon_count,probability");
    for n in 0..=25 {
        println!("{n},{:.6}", mixture_pmf(&mixture, n));
    }

    println!("\nthreshold,eps_zero,eps_minus,fidelity");
    for threshold in 0..=8 {
        let report = charge_fidelity(&mixture, threshold).unwrap();
        println!(
            "{threshold},{:.6},{:.6},{:.6}",
            report.eps_zero, report.eps_minus, report.fidelity
        );
    }

    let best = optimal_threshold(&mixture).unwrap();
    let report = charge_fidelity(&mixture, best).unwrap();
    println!("\noptimal threshold: {best} photons, fidelity {:.4}", report.fidelity);

    // post-select on >= 1 photon in a 0.42 ms verification window; the prior
    // is the green-illumination steady state, degraded by ionization during
    // the verification itself
    let prior = ChargePopulation::from_p_minus(0.78).unwrap();
    let purity = post_selection_purity(&mixture, 0.42, 3.0, 0.01, prior).unwrap();
    println!("post-selected NV⁻ purity: {purity:.4} (prior was 0.78)");
}
