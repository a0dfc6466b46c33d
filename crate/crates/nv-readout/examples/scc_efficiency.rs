//! Spin-to-charge conversion through the six-level transfer-matrix model:
//! spin-conditioned NV⁻ survival versus the number of shelve-and-ionize
//! cycles, and the singlet-lifetime timing of a single cycle.
//!
//! Run with: cargo run --example scc_efficiency

use nv_readout::scc::{scc_efficiencies, shelf_delay_survival, SccParams};

fn main() {
    let params = SccParams::paper();
    println!(
        "# cycle parameters: p_ion {}, k35 {}, k45 {}, p_sing {}, k51/k52 {}",
        params.p_ion, params.k35, params.k45, params.p_sing, params.k51_over_k52
    );
    println!(
        "# initialization: {:.0}% ms=0 purity, {:.0}% NV0 residue",
        params.spin_init * 100.0,
        params.charge_init_nv0 * 100.0
    );

    println!("\nn_cycles,beta0,beta1,contrast");
    for n in 0..=30 {
        let eff = scc_efficiencies(&params, n).unwrap();
        println!("{n},{:.4},{:.4},{:.4}", eff.beta0, eff.beta1, eff.beta0 - eff.beta1);
    }

    let ten = scc_efficiencies(&params, 10).unwrap();
    println!(
        "\nafter 10 repeats: beta0 = {:.3}, beta1 = {:.3}",
        ten.beta0, ten.beta1
    );

    // delaying the ionizing NIR train lets the singlet decay back to the
    // ground state; the charge contrast dies with the singlet lifetime
    println!("\ndelay_ns,nv_minus_survival");
    for i in 0..=20 {
        let delay = i as f64 * 50.0;
        let s = shelf_delay_survival(0.35, 182.0, delay, 0.2).unwrap();
        println!("{delay},{s:.5}");
    }
}
