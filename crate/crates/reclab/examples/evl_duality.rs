//! Duality between extremes and hitting times: the probability that the
//! running maximum stays below a level equals the probability that the flow
//! avoids the matching shrinking ball. Both routes are estimated on
//! independent trajectories and must agree within sampling error.
//!
//! ```sh
//! cargo run --example evl_duality
//! ```

use reclab::extremes::{evl_hitting_duality, ObservableForm, ObservableKind, ObservableSpec};
use reclab::suspension::{build_suspension, RoofFunction};
use reclab::systems::{log_radii, BaseSystem, MeasureProfile, Point};

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    let flow = build_suspension(system, RoofFunction::affine(0.9, 0.4)?, 19)?;
    let center = Point::One(0.2928932188134524);
    let radii = log_radii(1e-8, 0.25, 400)?;
    let values: Vec<f64> = radii.iter().map(|r| 2.0 * r).collect();
    let profile = MeasureProfile::new(center, radii, values, 0)?;
    let spec = ObservableSpec::new(
        ObservableKind::GumbelLog,
        ObservableForm::Flow { mean_roof: flow.mean_roof() },
        profile,
    )?;

    let ys: Vec<f64> = (0..13).map(|i| -2.0 + 6.0 * i as f64 / 12.0).collect();
    let report = evl_hitting_duality(&flow, &spec, 0.5, 19, 3_000, 2_000.0, &ys)?;
    println!(
        "sup |maxima route - hitting route| = {:.4}, per-point CI {:.4}",
        report.sup_gap, report.max_ci
    );
    println!("level   maxima  hitting");
    for i in (0..ys.len()).step_by(3) {
        println!(
            "{:>5.2} {:>8.4} {:>8.4}",
            report.ys[i], report.maxima_route[i], report.hitting_route[i]
        );
    }
    Ok(())
}
