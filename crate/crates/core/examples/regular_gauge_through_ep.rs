//! The generator that vanishes at t = 0 stays finite through γ = ±1, where
//! the adiabatic one blows up.

use evogen::kgen::{pde_residual, regular_dp_k, Gauge, Generator, TimeK};
use evogen::models::{dh_ep, ep_family, h_ep, k_ep_regular};

fn main() {
    println!("{:>8} {:>12} {:>12} {:>12}", "γ", "‖K(1)‖", "vs eigen", "residual");
    for gamma in [0.5, 0.9, 0.99, 0.999, 1.0, 1.001, 1.01, 1.5] {
        let closed = TimeK::new(Gauge::ClosedForm, (0.0, 2.0), move |t| k_ep_regular(gamma, t));
        let eig = match regular_dp_k(&ep_family(), gamma) {
            Ok(k) => format!("{:.2e}", (k.at(1.0) - closed.at(1.0)).norm()),
            Err(_) => "n/a (EP)".to_string(),
        };
        let r = pde_residual(&closed, &h_ep(gamma), &dh_ep(), &[0.0, 0.5, 1.0], 1e-4);
        println!("{gamma:>8} {:>12.6} {eig:>12} {r:>12.2e}", closed.at(1.0).norm());
    }
    println!("\nK(t) at γ = 1, t = 1:{}", k_ep_regular(1.0, 1.0));
}
