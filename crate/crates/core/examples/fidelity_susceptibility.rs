//! Eigenstate fidelity against the variance of K and perturbation theory.

use evogen::models::{ep_family, ssh_block_family};
use evogen::transport::{eigenstate_fidelity, susceptibility_at, susceptibility_oracle};

fn main() {
    for (name, fam, q) in [("ssh-block θ=2", ssh_block_family(2.0), 0.5), ("ep2x2", ep_family(), 0.3)] {
        let chi = susceptibility_oracle(&fam, 0, q).unwrap();
        let from_k = susceptibility_at(&fam, 0, q, 0.0).unwrap();
        println!("{name} at q = {q}: χ = {:.10} (perturbation), {:.10} (from K)", chi.re, from_k.re);
        for eps in [1e-2, 1e-3, 1e-4] {
            let f = eigenstate_fidelity(&fam, 0, q, eps).unwrap();
            println!("  ε = {eps:.0e}: 𝓕 = {:.12}  (1 − 𝓕)/ε² = {:.8}", f.re, (1.0 - f.re) / (eps * eps));
        }
    }
    for g in [0.9, 0.99, 0.999] {
        println!("ep2x2 γ = {g}: χ₀ = {:.3}", susceptibility_oracle(&ep_family(), 0, g).unwrap().re);
    }
}
