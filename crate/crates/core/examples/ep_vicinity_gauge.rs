//! Generator built from the bidiagonal form H = Q J̃ Q⁻¹, evaluated on both
//! sides of an exceptional point and exactly at it.

use evogen::epgauge::{EpGaugeOptions, EpVicinityGauge};
use evogen::kgen::Generator;
use evogen::linalg::CMatrix;
use evogen::models::{ep_family, k_ep_regular};

fn main() {
    let gauge = EpVicinityGauge::new(ep_family(), 1.0, EpGaugeOptions::default()).unwrap();
    println!("anchor row {}, Q_EP ={}", gauge.anchor, gauge.q_ep_matrix);

    let z = CMatrix::zeros(2, 2);
    let at_ep = gauge.generator(1.0, &z, (0.0, 3.0)).unwrap();
    for d in [1e-1, 1e-2, 1e-3, 1e-4, -1e-4, -1e-2] {
        let q = 1.0 + d;
        let b = gauge.basis(q).unwrap();
        let k = gauge.generator(q, &z, (0.0, 3.0)).unwrap();
        println!(
            "q = {q:<8} ‖Q − Q_EP‖ = {:.2e}   ‖K(1) − K_EP(1)‖ = {:.2e}   vs closed form {:.1e}",
            (&b.qmat - &gauge.q_ep_matrix).norm(),
            (k.at(1.0) - at_ep.at(1.0)).norm(),
            (k.at(1.0) - k_ep_regular(q, 1.0)).norm()
        );
    }
}
