//! Flow hitting times decompose over the base: the k-th hit of a flow box
//! equals a sum of roof values along the base orbit plus a height offset.
//! This checks the identity trajectory by trajectory; residuals sit at
//! floating-point roundoff, far below any statistical scale.
//!
//! ```sh
//! cargo run --example flow_reconstruction
//! ```

use reclab::hitting::flow_base_consistency;
use reclab::suspension::{build_suspension, FlowBall, RoofFunction};
use reclab::systems::{BaseSystem, Point};

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    for (a, b) in [(1.0, 0.0), (0.7, 0.9), (1.3, 0.2)] {
        let flow = build_suspension(system, RoofFunction::affine(a, b)?, 67)?;
        let ball = FlowBall::new(Point::One(0.37), 0.4, 0.02)?;
        let worst = flow_base_consistency(&flow, &ball, 67, 200, 3)?;
        println!(
            "roof {:.1} + {:.1} x: worst reconstruction residual over 200 starts x 3 hits = {:.2e}",
            a, b, worst
        );
    }
    Ok(())
}
