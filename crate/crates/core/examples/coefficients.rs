//! Laguerre closed form of Ω_n^m(β) against brute-force displacement matrix elements.

use dicke::coefficients::{omega_coeff, omega_table};
use dicke::hilbert::FockDisplacer;

fn main() {
    let betas = [0.5, 1.0, 3f64.sqrt(), 5f64.sqrt()];
    for row in omega_table(0..=4, 0..=2, &[1.0]) {
        println!("Omega_{}^{}({}) = {:+.10}", row.n, row.m, row.beta, row.value);
    }

    // Ω_n^m(β) √((n+m)!/n!) = ⟨n|D(β)|n+m⟩ up to the sign (−1)^m
    let displacer = FockDisplacer::new(140);
    let mut worst = 0.0f64;
    for &beta in &betas {
        let d = displacer.displacement(beta);
        for n in 0..=50usize {
            for m in 0..=10usize {
                let ratio: f64 = (n + 1..=n + m).map(|i| (i as f64).sqrt()).product();
                let brute = d[(n, n + m)].re * if m % 2 == 1 { -1.0 } else { 1.0 };
                worst = worst.max((omega_coeff(n, m, beta) * ratio - brute).abs());
            }
        }
    }
    println!("max |closed form - matrix element| over n <= 50, m <= 10: {worst:.2e}");
}
