//! Short-return sets: the set of points that come back within distance r of
//! themselves after j steps. For the doubling map at j = 1 this set has mass
//! exactly 6r, and the union over 1 <= j <= k shrinks with r, which is the
//! geometric input behind clean hitting statistics.
//!
//! ```sh
//! cargo run --example short_returns
//! ```

use reclab::diagnostics::{short_return_measure, vr_measure};
use reclab::systems::BaseSystem;

fn main() -> reclab::Result<()> {
    let system = BaseSystem::doubling();
    println!("radius     mass(j=1)   6r          union(j<=8)");
    for r in [1e-2, 1e-3, 1e-4] {
        let single = short_return_measure(&system, r, 1, 400_000, 47)?;
        let union = vr_measure(&system, r, 8, 400_000, 47)?;
        println!(
            "{r:<8.0e} {:>10.6} {:>10.6} {:>12.6}",
            single.estimate,
            6.0 * r,
            union.estimate
        );
    }

    // The same quantities for the intermittent map, where no closed form is
    // available but the union mass must still shrink.
    let lsv = BaseSystem::lsv(0.5)?;
    println!("\nlsv(0.5):");
    for r in [1e-2, 1e-3, 1e-4] {
        let union = vr_measure(&lsv, r, 8, 400_000, 53)?;
        println!("  union(j<=8) at r = {r:.0e}: {:.6} +- {:.1e}", union.estimate, union.ci);
    }
    Ok(())
}
