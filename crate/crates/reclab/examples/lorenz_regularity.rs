//! Geometry of the planar attractor chart: ball-mass scaling (local
//! dimension), thin-annulus mass, and the regularity ratio that controls
//! whether small-ball hitting statistics are clean on a fractal target.
//!
//! ```sh
//! cargo run --example lorenz_regularity
//! ```

use reclab::systems::{
    annulus_measure, ball_measure, local_dimension, sample_invariant, BaseSystem,
};

fn main() -> reclab::Result<()> {
    let system = BaseSystem::lorenz2d_default();
    let points = sample_invariant(&system, 61, 400_000)?;
    let center = points[points.len() / 3];
    println!("center {:?}", center.coords());

    let radii = [0.0125, 0.025, 0.05, 0.1, 0.2];
    let dim = local_dimension(&system, center, &radii, &points)?;
    println!(
        "local dimension: slope {:.3} (chord bracket [{:.3}, {:.3}])",
        dim.slope, dim.lower, dim.upper
    );

    // The regularity ratio mass(annulus r < d <= r + eps) / sqrt(r * eps)
    // with eps = r^1.5 should stay bounded as r shrinks.
    println!("radius     ball mass   annulus     ratio");
    for r in radii.into_iter().rev() {
        let eps = r.powf(1.5);
        let (ball, _) = ball_measure(&system, center, r, &points)?;
        let (annulus, _) = annulus_measure(&system, center, r, eps, &points)?;
        let ratio = annulus / (r * eps).sqrt();
        println!("{r:<9.4} {ball:>10.5} {annulus:>10.5} {ratio:>9.4}");
    }
    Ok(())
}
