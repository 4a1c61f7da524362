//! Critical coupling of the Dicke phase transition and the perturbative bounds
//! of the weak-coupling regime for N = 100 atoms.

use dicke::analysis::{g_crit, validity_bounds, BoundReading};
use dicke::HalfInteger;

fn main() {
    let n_atoms = 100;
    let j = HalfInteger::from_atoms(n_atoms);
    println!("g_crit(omega0 = 1e-6, N = {n_atoms}) = {:e}", g_crit(1.0, 1e-6, n_atoms));
    for reading in [BoundReading::AtomNumber, BoundReading::SpinLength] {
        let b = validity_bounds(j, 1.0, 1e-6, 1e-4, reading);
        println!(
            "{reading:?}: omega0 <= {:.3e}, g <= {:.3e}, inside = {}",
            b.omega0_bound, b.g_bound, b.ok
        );
    }
}
