//! The same lab-frame trajectory from four pipelines: lab Hamiltonian,
//! displaced Hamiltonian, and the two interaction pictures re-dressed with
//! their frame rotations.

use dicke::hamiltonians::{build_dicke, build_displaced, build_h2, build_h3, Frame, ModelConfig};
use dicke::hilbert::basis_state;
use dicke::propagate::{compose_lab_frame, evolve_static, evolve_timedep, FrameDressing, StepControl, TimeGrid};
use dicke::HalfInteger;

fn main() -> dicke::Result<()> {
    let cfg = ModelConfig::new(HalfInteger::from_int(2), 1.0, 0.3, 40);
    let grid = TimeGrid::from_cycles(1.0, 0.0, 10.0, 8)?;
    let h = build_dicke(&cfg)?;
    let psi0 = basis_state(h.basis(), HalfInteger::from_int(1), 0)?;
    let lab = evolve_static(&h, &psi0, &grid)?;

    for frame in [Frame::Displaced, Frame::InteractionH2, Frame::InteractionH3] {
        let inner_cfg = cfg.with_frame(frame);
        let start = FrameDressing::new(&inner_cfg)?.to_inner(&psi0)?;
        let inner = match frame {
            Frame::Displaced => evolve_static(&build_displaced(&inner_cfg)?, &start, &grid)?,
            Frame::InteractionH2 => evolve_timedep(&build_h2(&inner_cfg)?, &start, &grid, &StepControl::for_mode(1.0))?,
            _ => evolve_timedep(&build_h3(&inner_cfg)?, &start, &grid, &StepControl::for_mode(1.0))?,
        };
        let composed = compose_lab_frame(&inner.in_frame(frame), &inner_cfg)?;
        let worst = lab
            .states
            .iter()
            .zip(&composed.states)
            .map(|(a, b)| 1.0 - a.fidelity(b).unwrap())
            .fold(0.0, f64::max);
        println!("{frame:>10}: 1 - fidelity <= {worst:.2e} ({})", composed.diagnostics.method);
    }

    let lab_levels = h.entries().clone().symmetric_eigen().eigenvalues;
    let displaced_levels = build_displaced(&cfg.with_frame(Frame::Displaced))?.entries().clone().symmetric_eigen().eigenvalues;
    let (mut a, mut b): (Vec<f64>, Vec<f64>) = (lab_levels.iter().copied().collect(), displaced_levels.iter().copied().collect());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    // the lowest tenth stays clear of the Fock cutoff
    let interior = a.len() / 10;
    let worst = a[..interior].iter().zip(&b[..interior]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("lowest {interior} eigenvalues of H and H': max difference {worst:.2e}");
    Ok(())
}
