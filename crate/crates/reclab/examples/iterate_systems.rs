//! Tour of the base maps: iterate each one, sample its invariant measure,
//! and estimate the mass of a small metric ball.
//!
//! ```sh
//! cargo run --example iterate_systems
//! ```

use reclab::systems::{ball_measure, sample_invariant, BaseSystem, Orbit, Point};

fn main() -> reclab::Result<()> {
    let systems = [
        BaseSystem::doubling(),
        BaseSystem::lsv(0.5)?,
        BaseSystem::lorenz1d_default(),
        BaseSystem::lorenz2d_default(),
    ];

    for system in &systems {
        // A short orbit from a generic start. Orbit refreshes low-order bits
        // as it goes, so expanding maps do not collapse onto dyadic points.
        let start = match system.dim() {
            1 => Point::One(0.137),
            _ => Point::Two(0.137, 0.41),
        };
        let mut orbit = Orbit::from_point(system, start, 7)?;
        print!("{:<22} orbit: {:.4?}", system.name(), orbit.point().coords());
        for _ in 0..3 {
            orbit.step()?;
            print!(" -> {:.4?}", orbit.point().coords());
        }
        println!();

        // Invariant-measure samples and a small ball mass around the orbit's
        // current location.
        let points = sample_invariant(system, 17, 100_000)?;
        let center = points[points.len() / 2];
        let (mass, ci) = ball_measure(system, center, 0.05, &points)?;
        println!(
            "{:<22} ball(r=0.05) around {:.4?}: measure {:.5} +- {:.5}",
            "", center.coords(), mass, ci
        );
    }
    Ok(())
}
