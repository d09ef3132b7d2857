//! Sweep the adiabatic generator towards an exceptional point and fit the
//! divergence of ‖K‖.

use evogen::scan::{fit_divergence, scan, FitQuantity, ScanConfig, ScanGauge};

fn main() {
    let cfg = ScanConfig::new("ep2x2", ScanGauge::Adiabatic).with_sweep("gamma:0.9:1:0.001".parse().unwrap());
    let records = scan(&cfg).unwrap();
    let flagged: Vec<_> = records.iter().filter(|r| !r.flags.is_empty()).collect();
    for r in &flagged {
        println!("γ = {} flagged {:?}", r.q, r.flags);
    }
    for quantity in [FitQuantity::Knorm, FitQuantity::Chi] {
        let fit = fit_divergence(&records, 1.0, (0.9, 0.999), quantity).unwrap();
        println!("{quantity:?}: exponent {:.4}, prefactor {:.4}, r² {:.6}, n = {}", fit.exponent, fit.prefactor, fit.r2, fit.n);
    }
}
