//! Quadrature weights of the uniform sphere grid: ring profile and totals.

use hybss::spatial::{quadrature_weights, GridDims};

fn main() -> hybss::Result<()> {
    let grid = GridDims::default();
    let w = quadrature_weights(grid, &grid.directions())?;
    println!("ring  inclination_deg  weight");
    for ii in 0..grid.n_inclination {
        println!(
            "{ii:>4}  {:>15.1}  {:.6e}",
            grid.inclination(ii).to_degrees(),
            w.w[grid.index(0, ii)]
        );
    }
    for (na, ni) in [(8, 8), (60, 30), (512, 512)] {
        let g = GridDims::new(na, ni)?;
        println!("{na}x{ni} total {:.8}", quadrature_weights(g, &g.directions())?.total());
    }
    Ok(())
}
