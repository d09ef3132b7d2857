//! The adiabatic generator K = K1·t + K0 of the gain/loss model, checked
//! against its closed form and against the defining equation.

use evogen::kgen::{pde_residual, solve_adiabatic, Generator};
use evogen::linalg::c64;
use evogen::models::{dh_ep, ep_family, h_ep, k_ep_adiabatic};

fn main() {
    let gamma = 0.5;
    let k = solve_adiabatic(&ep_family(), gamma, &[]).unwrap();
    println!("γ = {gamma}\nK1 ={}K0 ={}", k.k1, k.k0);

    let closed = k_ep_adiabatic(gamma, 2.0, c64(0.0, 0.0), c64(0.0, 0.0)).unwrap();
    println!("|K(2) − closed form| = {:.2e}", (k.at(2.0) - closed).norm());
    println!("residual on t ∈ {{0, 1, 5}}: {:.2e}", pde_residual(&k, &h_ep(gamma), &dh_ep(), &[0.0, 1.0, 5.0], 1e-4));

    // residual gauge: any Σ αₖ Πₖ can be added
    let shifted = solve_adiabatic(&ep_family(), gamma, &[c64(1.0, 0.0), c64(-2.0, 0.5)]).unwrap();
    println!(
        "with α = (1, −2+0.5i): residual {:.2e}",
        pde_residual(&shifted, &h_ep(gamma), &dh_ep(), &[0.0, 1.0, 5.0], 1e-4)
    );

    for g in [0.9, 0.99, 0.999] {
        let k = solve_adiabatic(&ep_family(), g, &[]).unwrap();
        println!("γ = {g:<6} ‖K(1)‖ = {:.3}", k.at(1.0).norm());
    }
    println!("γ = 1      {}", solve_adiabatic(&ep_family(), 1.0, &[]).unwrap_err());
}
