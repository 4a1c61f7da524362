//! Complete depopulation of |Jx=0, n=0> on resonance, exact against the chain model.
//!
//! Runs the `fig2a` preset (J = 1, g² = 5, ω₀ = 0.1) and `fig2c` (J = 4, g = 1,
//! ω₀ = 0.01, 800 cycles). The second one takes a few seconds in release mode.

use std::f64::consts::PI;

use dicke::analysis::principal_minima;
use dicke::cli::config::preset;
use dicke::cli::run::compare;
use dicke::propagate::{TimeGrid, TimeSeries};

fn minima(times: &[f64], p: &[f64]) -> dicke::Result<Vec<(f64, f64)>> {
    let grid = TimeGrid::new(times[0], *times.last().unwrap(), times.len())?;
    let series = TimeSeries::new(grid, p.to_vec())?;
    Ok(principal_minima(&series, 2.0 * PI, 0.5, 0.2))
}

fn main() -> dicke::Result<()> {
    for name in ["fig2a", "fig2c"] {
        let out = compare(&preset(name)?.config()?)?;
        let exact = out.column("P_exact").unwrap();
        let effective = out.column("P_effective").unwrap();
        println!("{name}: n_max = {}, model {}", out.model.n_max, out.effective.unwrap().name());
        let lowest = |p: &[f64]| p.iter().copied().fold(1.0, f64::min);
        println!("  min P exact {:.5}, effective {:.5}", lowest(exact), lowest(effective));
        println!("  max |P_exact - P_effective| = {:.4}", out.column("max_diff").unwrap().last().unwrap());
        let (a, b) = (minima(&out.times, exact)?, minima(&out.times, effective)?);
        let cycles = |ts: &[(f64, f64)]| ts.iter().take(5).map(|(t, _)| format!("{:.1}", t / (2.0 * PI))).collect::<Vec<_>>().join(", ");
        println!("  {} principal minima exact, first at cycles [{}]", a.len(), cycles(&a));
        println!("  {} principal minima effective, first at cycles [{}]", b.len(), cycles(&b));
    }
    Ok(())
}
