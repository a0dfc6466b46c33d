//! Charge population measured under NIR-only illumination.
//!
//! NIR-only switching rates are so slow that a 10 ms interaction window never
//! reaches the steady state; what an experiment sees is the fixed point of
//! "evolve under M(R), then suffer the destructive readout D". This example
//! sweeps that equilibrium over NIR power.
//!
//! Run with: cargo run --example nir_equilibrium

use nv_readout::charge::{nir_equilibrium, nir_only_rate};
use nv_readout::profile::DeviceProfile;

fn main() {
    let profile = DeviceProfile::paper();
    let ion = profile.nir_ionization.to_polynomial("nir_ionization").unwrap();
    let rec = profile.nir_recombination.to_polynomial("nir_recombination").unwrap();
    let d = profile.destructivity.to_matrix().unwrap();

    println!("# NIR-only rates from the cubic(+quadratic) fits");
    for r in [0.0, 25.0, 50.0, 100.0] {
        println!(
            "r = {r:6.1} mW: ionization {:.5} kHz, recombination {:.5} kHz",
            nir_only_rate(&ion, r).unwrap(),
            nir_only_rate(&rec, r).unwrap()
        );
    }

    println!("\nr_mw,p_minus_equilibrium");
    for i in 0..=25 {
        let r = i as f64 * 4.0;
        let eq = nir_equilibrium(&ion, &rec, r, &d, 10.0).unwrap();
        println!("{r},{:.6}", eq.p_minus());
    }

    println!("\n# with zero rates the cycle reduces to the readout backaction alone:");
    let zero = nv_readout::charge::NirRatePolynomial::new(0.0, 0.0, 0.0).unwrap();
    let fixed = nir_equilibrium(&zero, &zero, 0.0, &d, 10.0).unwrap();
    println!("fixed point of D = {:.4} (0.05/0.40 = 1/8)", fixed.p_minus());
}
