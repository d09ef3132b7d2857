//! Transport eigenstates and the metric along γ in the adiabatic gauge.

use evogen::linalg::{eigendecompose, identity};
use evogen::models::{ep_family, h_ep};
use evogen::transport::{evolve_metric_q, transport_state_q, AdiabaticAlongQ, MetricState, TransportOptions};

fn main() {
    let fam = ep_family();
    let t = 0.5;
    let k = AdiabaticAlongQ::new(&fam, t);
    let qs: Vec<f64> = (0..=9).map(|i| 0.1 * i as f64).collect();
    let opts = TransportOptions::default();
    let spec = eigendecompose(&h_ep(0.0), 1e-8).unwrap();
    let psi = transport_state_q(&k, &spec.p.column(0).into_owned(), &qs, &opts).unwrap();
    let metric = evolve_metric_q(&k, &MetricState::new(identity(2), 0.0, t).unwrap(), &qs, &opts).unwrap();
    for ((q, p), m) in qs.iter().zip(&psi).zip(&metric) {
        let hp = h_ep(*q) * p;
        let lam = p.dotc(&hp) / p.dotc(p);
        println!(
            "γ = {q:.1}  ‖Hψ − λψ‖ = {:.1e}  ⟪ψ|ψ⟫ = {:.10}  ‖G − 1‖ = {:.4}",
            (hp - p * lam).norm(),
            m.inner(p, p).re,
            (&m.g - identity(2)).norm()
        );
    }
}
