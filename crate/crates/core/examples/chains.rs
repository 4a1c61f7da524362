//! Dispersive chains for J = 3/2 and J = 2, on and off resonance.

use dicke::chains::{build_chain_graph, full_chain_graph, resonance_table, Coupling};
use dicke::HalfInteger;

fn show(label: &str, j: HalfInteger, coupling: Coupling, n_max: usize) -> dicke::Result<()> {
    let graph = full_chain_graph(j, coupling, n_max)?;
    let singles = graph.components.iter().filter(|c| c.len() == 1).count();
    println!("{label}: {} states, {} edges, {singles} decoupled", graph.nodes.len(), graph.edges.len());
    for chain in graph.components.iter().filter(|c| c.len() > 1).take(4) {
        let nodes: Vec<String> = chain.iter().map(|n| format!("|{}, {}>", n.m, n.n)).collect();
        println!("  {}", nodes.join(" - "));
    }
    Ok(())
}

fn main() -> dicke::Result<()> {
    let three_halves: HalfInteger = "3/2".parse()?;
    let two = HalfInteger::from_int(2);

    for row in resonance_table(three_halves, 1)?.rows {
        println!("Jx = {:>4}: photon shift {:+}", row.m, row.rate);
    }
    show("J = 3/2, g = omega", three_halves, Coupling::Resonant(1), 6)?;
    show("J = 3/2, off resonance", three_halves, Coupling::OffResonant, 6)?;
    show("J = 2, g = omega", two, Coupling::Resonant(1), 8)?;

    let chain = build_chain_graph(two, 1, 0, 8)?;
    println!("\nchain through |0, 0> for J = 2 as DOT:\n{}", chain.to_dot());
    Ok(())
}
