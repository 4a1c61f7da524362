//! P_min and oscillation frequency across the k = 1 resonance against the
//! closed forms, for J = 1 and J = 2 at ω₀ = 0.01.
//!
//! The closed forms come from the two-level reduction of the J = 1 chain. The
//! J = 2 column shows how far they carry over to a five-state chain.

use dicke::analysis::{scan_resonance, ScanSettings};
use dicke::HalfInteger;

fn main() -> dicke::Result<()> {
    let g_values = [0.98, 1.0, 1.02, 1.05, 1.1];
    for j in [1, 2] {
        let settings = ScanSettings::new(HalfInteger::from_int(j), 0.01);
        let scan = scan_resonance(&settings, 1, &g_values)?;
        println!("J = {j}");
        println!("  {:>6} {:>10} {:>10} {:>10} {:>10}", "g", "Pmin num", "Pmin ana", "f num", "f ana");
        for i in 0..g_values.len() {
            println!(
                "  {:>6.3} {:>10.5} {:>10.5} {:>10.6} {:>10.6}",
                scan.g_values[i], scan.p_min_numeric[i], scan.p_min_analytic[i], scan.freq_numeric[i], scan.freq_analytic[i]
            );
        }
    }
    Ok(())
}
