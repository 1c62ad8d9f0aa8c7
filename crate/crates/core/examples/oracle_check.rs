//! Minimal library usage: generate a seeded game, run the single-integrator
//! loop, and compare the limit against the full-information oracle.

use gne_core::{analysis, scenarios, simulate_single, Result};

fn main() -> Result<()> {
    let sc = scenarios::random_quadratic_game(4, 2, 2, 1.0, 7)?;
    let traj = simulate_single(&sc.game, &sc.graph, &sc.params, &sc.initial_single()?)?;
    let oracle = analysis::oracle_vgne(&sc.game, 1e-10, 500_000)?;
    let x = traj.final_position(&sc.game)?;
    println!("distance to oracle: {:.3e}", (&x - &oracle.x_star).amax());
    Ok(())
}
