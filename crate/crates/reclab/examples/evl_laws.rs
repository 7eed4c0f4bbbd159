//! The three extreme value laws. Watching a distance-like observable along a
//! trajectory and normalizing the running maximum by the ball-mass profile
//! around the center produces Gumbel, Frechet, or Weibull limits depending on
//! how the observable warps distance.
//!
//! ```sh
//! cargo run --example evl_laws
//! ```

use reclab::extremes::{evl_empirical_map, ObservableForm, ObservableKind, ObservableSpec};
use reclab::systems::{log_radii, BaseSystem, MeasureProfile, Point};

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    let center = Point::One(0.6180339887498949);
    // Doubling preserves Lebesgue, so the ball-mass profile is exactly 2r.
    let radii = log_radii(1e-8, 0.25, 400)?;
    let values: Vec<f64> = radii.iter().map(|r| 2.0 * r).collect();
    let profile = MeasureProfile::new(center, radii, values, 0)?;

    let cases = [
        (ObservableKind::GumbelLog, grid(-2.0, 4.0, 13)),
        (ObservableKind::FrechetPower { beta: 2.0 }, grid(0.3, 5.3, 13)),
        (ObservableKind::WeibullPower { gamma: 2.0, top: 5.0 }, grid(-2.5, -0.05, 13)),
    ];

    for (kind, ys) in cases {
        let spec = ObservableSpec::new(kind, ObservableForm::Map, profile.clone())?;
        let curve = evl_empirical_map(&system, &spec, 37, 4_000, 10_000, &ys)?;
        println!(
            "{:<22} sup |empirical - limit| = {:.4} over {} levels (t = {})",
            kind.name(),
            curve.sup_gap,
            ys.len(),
            curve.time
        );
        for pick in [2, ys.len() / 2, ys.len() - 2] {
            println!(
                "  y = {:>6.2}: empirical {:.4}, limit {:.4}",
                curve.ys[pick], curve.empirical[pick], curve.predicted[pick]
            );
        }
    }
    Ok(())
}
