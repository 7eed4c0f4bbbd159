//! Tower tail exponent for the intermittent map. Return times to the right
//! half decay polynomially with exponent -1/alpha; a log-log fit over the
//! well-populated part of the tail recovers it, certifying how many moments
//! of the return time exist.
//!
//! ```sh
//! cargo run --example tower_tail
//! ```

use reclab::diagnostics::tower_tail;
use reclab::systems::BaseSystem;

fn main() -> reclab::Result<()> {
    for alpha in [0.5, 0.33] {
        let system = BaseSystem::lsv(alpha)?;
        let grid = [1, 2, 3, 5, 7, 10, 14, 20, 28, 40, 57, 80];
        let report = tower_tail(&system, &grid, 400_000, 20_000, 59)?;
        println!(
            "lsv({alpha}): fitted exponent {:.3} (theory {:.3}) from {} grid points, {} gaps",
            report.exponent,
            -1.0 / alpha,
            report.fit_points,
            report.gaps
        );
        for i in [0, 4, 7, grid.len() - 1] {
            println!(
                "  P(return > {:>3}) = {:.2e} +- {:.1e}",
                report.n_grid[i], report.tail[i], report.ci[i]
            );
        }
    }
    Ok(())
}
