//! Classify points of the 2x2 gain/loss model and build the Jordan chain
//! where its eigenvectors coalesce.

use evogen::linalg::{c64, eigendecompose, jordanize_single_block};
use evogen::models::h_ep;

fn main() {
    for gamma in [0.0, 0.5, 0.9, 0.999, 1.0, 1.5] {
        let s = eigendecompose(&h_ep(gamma), 1e-8).expect("finite input");
        println!(
            "γ = {gamma:<6} {:<8} λ = {:.6}, {:.6}   min σ(P) = {:.2e}",
            s.classification.to_string(),
            s.eigenvalues[0],
            s.eigenvalues[1],
            s.min_sv
        );
    }

    let chain = jordanize_single_block(&h_ep(1.0), c64(1.0, 0.0), 1e-6).unwrap();
    let q_inv = chain.q.clone().try_inverse().unwrap();
    println!("\nJordan chain Q at γ = 1:{}", chain.q);
    println!("Q⁻¹ H Q ={}", q_inv * h_ep(1.0) * &chain.q);
}
