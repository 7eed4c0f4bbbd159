//! Exponential law for first hitting times: start the flow from invariant
//! samples, record when each trajectory first enters a small flow box, and
//! compare the normalized survival function against exp(-y).
//!
//! ```sh
//! cargo run --example hit_survival
//! ```

use reclab::hitting::normalized_survival_flow;
use reclab::suspension::{build_suspension, FlowBall, RoofFunction};
use reclab::systems::{BaseSystem, Point};

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    let flow = build_suspension(system, RoofFunction::constant(1.0)?, 5)?;

    // A small ball around a generic base point, mid-fiber. Doubling keeps
    // Lebesgue invariant, so the base ball mass is exactly 2 * rho.
    let rho = 0.01;
    let ball = FlowBall::new(Point::One(0.6180339887498949), 0.5, rho)?;
    let base_measure = 2.0 * rho;

    let curve = normalized_survival_flow(&flow, &ball, base_measure, 5, 4_000, 6.0)?;
    println!(
        "{} trajectories, hitting rate normalizer {:.5}",
        curve.normalized.len(),
        curve.normalizer
    );
    println!("KS distance to exp(-y): {:.4}", curve.ks_exponential);
    println!("normalized-time survival vs the exponential law:");
    for y in [0.5, 1.0, 2.0, 3.0, 4.5] {
        let (emp, pred) = curve.survival_point(y);
        println!("  y = {y:>3.1}: empirical {emp:.4}, predicted {pred:.4}");
    }
    Ok(())
}
