//! Integrate R = exp(iHt) and F = ∫R ∂H R⁻¹ directly and compare with the
//! eigenbasis construction on a random non-Hermitian 3x3 family.

use evogen::kgen::{brute_force_k, solve_adiabatic, Generator, HamiltonianFamily};
use evogen::linalg::{c64, CMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut z = |s: f64| c64(rng.gen_range(-s..s), rng.gen_range(-s..s));
    let a = CMatrix::from_fn(3, 3, |i, j| if i == j { c64(i as f64 - 1.0, 0.0) } else { z(0.4) });
    let b = CMatrix::from_fn(3, 3, |_, _| z(1.0));
    let bb = b.clone();
    let fam = HamiltonianFamily::new(3, move |q| &a + &bb * c64(q, 0.0), move |_| b.clone());

    let grid: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let k = solve_adiabatic(&fam, 0.2, &[]).unwrap();
    let oracle = brute_force_k(&fam, 0.2, &grid, &k.at(0.0)).unwrap();
    for &t in &grid {
        println!("t = {t:<4} ‖K_adiabatic − K_oracle‖ = {:.2e}", (k.at(t) - oracle.at(t)).norm());
    }
}
