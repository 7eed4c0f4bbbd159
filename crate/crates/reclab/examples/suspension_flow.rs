//! Build a suspension semi-flow over the doubling map with an affine roof,
//! advance a flow point through several roof crossings, and check the
//! product-form measure of a clean flow box.
//!
//! ```sh
//! cargo run --example suspension_flow
//! ```

use reclab::suspension::{build_suspension, FlowBall, RoofFunction, Strictness};
use reclab::systems::{BaseSystem, Point};

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    let roof = RoofFunction::affine(0.8, 0.6)?;
    let flow = build_suspension(system, roof, 11)?;
    println!(
        "suspension over {} with roof {}: mean roof {:.6} +- {:.1e}",
        flow.system().name(),
        flow.roof().name(),
        flow.mean_roof(),
        flow.mean_roof_ci()
    );

    // Advance a point far enough to cross the roof a few times. Time moves
    // straight up at unit speed; the base map fires at each crossing.
    let mut p = flow.flow_point(Point::One(0.3), 0.2)?;
    for t in [0.5, 1.0, 2.5] {
        p = flow.advance(p, t)?;
        println!("after +{t:.1}: base {:.5}, height {:.5}", p.base.x(), p.height);
    }

    // A flow box is clean when it sits strictly between floor and roof; its
    // invariant mass then factorizes as base mass x height / mean roof.
    let ball = FlowBall::new(Point::One(0.3), 0.4, 0.01)?;
    let clearance = flow.check_clean(&ball)?;
    let mass = flow.flow_ball_measure(&ball, 0.02, &[], Strictness::Strict)?;
    println!(
        "clean flow box at height 0.4, rho 0.01: clearance {:.3}, product-form mass {:.6}",
        clearance, mass
    );
    Ok(())
}
