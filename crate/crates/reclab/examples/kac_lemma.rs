//! Return-time mass identity: the mean return time to a set, started inside
//! the set from the invariant measure, is the reciprocal of the set's mass.
//! The product (mean return) x (measure) should therefore sit at 1.
//!
//! ```sh
//! cargo run --example kac_lemma
//! ```

use reclab::hitting::kac_check;
use reclab::systems::{BaseBall, BaseSystem, Point};

fn main() -> reclab::Result<()> {
    let cases = [
        (BaseSystem::doubling(), 0.5, 0.1),
        (BaseSystem::lsv(0.5)?, 0.5, 0.1),
        (BaseSystem::lorenz1d_default(), 0.45, 0.08),
    ];
    println!("{:<22} {:>9} {:>12} {:>14}", "system", "measure", "mean return", "product");
    for (system, center, radius) in cases {
        let ball = BaseBall::new(Point::One(center), radius)?;
        let report = kac_check(&system, &ball, 23, 20_000, 400_000)?;
        println!(
            "{:<22} {:>9.5} {:>12.4} {:>9.4} +- {:.4}",
            system.name(),
            report.ball_measure,
            report.mean_return,
            report.product,
            report.product_ci
        );
    }
    Ok(())
}
