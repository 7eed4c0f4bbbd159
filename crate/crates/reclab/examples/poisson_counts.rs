//! Poisson law for hit counts: count how many times the flow enters a small
//! box during a window of fixed normalized length, and compare the count
//! frequencies with the Poisson probability mass function.
//!
//! ```sh
//! cargo run --example poisson_counts
//! ```

use reclab::hitting::poisson_counts;
use reclab::suspension::{build_suspension, FlowBall, RoofFunction};
use reclab::systems::{BaseSystem, Point};

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    let flow = build_suspension(system, RoofFunction::constant(1.0)?, 13)?;

    let rho = 0.01;
    let ball = FlowBall::new(Point::One(0.5772156649015329), 0.5, rho)?;
    let base_measure = 2.0 * rho;

    // Windows of normalized length 2: the hit count should be Poisson(2).
    let report = poisson_counts(&flow, &ball, base_measure, 13, 4_000, 2.0, 8)?;
    println!(
        "{} windows at intensity {}, total-variation gap {:.4}",
        report.n_starts, report.intensity, report.tv_distance
    );
    println!("hits  empirical  poisson");
    for m in 0..report.histogram.len() {
        let (emp, pred) = report.pmf_point(m);
        let label = if m + 1 == report.histogram.len() {
            format!("{m}+")
        } else {
            format!("{m} ")
        };
        println!("  {label:<3} {emp:>9.4} {pred:>8.4}");
    }
    Ok(())
}
