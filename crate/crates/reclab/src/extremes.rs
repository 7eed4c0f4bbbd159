//! Extreme-value statistics of distance observables.
//!
//! An observable `phi(x) = g(v(d(x, center)))` is a decreasing function of
//! the distance to a center, where `v` is the measure of the ball of that
//! radius (for a flow, the box measure divided by its height `2d`, which
//! cancels to the base-ball measure over the mean roof). The running maximum
//! of `phi` over a trajectory is therefore a monotone transform of the
//! trajectory's minimal distance to the center, so maxima reduce to minimal
//! distances, and level exceedances reduce to threshold crossings of an
//! interpolated measure profile. Exceedance levels are chosen so the limit
//! laws are the three classical extreme-value families.

use crate::error::{Error, Result};
use crate::hitting::{hitting_times, invariant_start, scan_with_restarts, SEPARATION_FACTOR};
use crate::seeds;
use crate::stats::ReferenceLaw;
use crate::suspension::{flow_start, FlowBall, FlowStart, Suspension};
use crate::systems::{BaseSystem, MeasureProfile, Orbit, Point};

/// The three shapes of the observable's decay at the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObservableKind {
    /// `g(z) = -ln z`; maxima follow the Gumbel law.
    GumbelLog,
    /// `g(z) = z^(-1/beta)`; maxima follow the Frechet law of shape `beta`.
    FrechetPower { beta: f64 },
    /// `g(z) = top - z^(1/gamma)`; maxima follow the Weibull law of shape
    /// `gamma`, capped at the finite supremum `top`.
    WeibullPower { gamma: f64, top: f64 },
}

impl ObservableKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            ObservableKind::GumbelLog => Ok(()),
            ObservableKind::FrechetPower { beta } if *beta > 0.0 && beta.is_finite() => Ok(()),
            ObservableKind::WeibullPower { gamma, top }
                if *gamma > 0.0 && gamma.is_finite() && top.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::Domain(format!("invalid observable shape {self:?}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ObservableKind::GumbelLog => "gumbel-log".into(),
            ObservableKind::FrechetPower { beta } => format!("frechet-power({beta})"),
            ObservableKind::WeibullPower { gamma, top } => format!("weibull-power({gamma},{top})"),
        }
    }

    /// The decreasing profile `g` applied to a measure value `z > 0`.
    pub fn g(&self, z: f64) -> f64 {
        match self {
            ObservableKind::GumbelLog => -z.ln(),
            ObservableKind::FrechetPower { beta } => z.powf(-1.0 / beta),
            ObservableKind::WeibullPower { gamma, top } => top - z.powf(1.0 / gamma),
        }
    }

    /// Tail weight `tau(y)` pairing levels with the limit law `exp(-tau)`.
    /// Infinite below the law's support, zero above it.
    pub fn tail(&self, y: f64) -> f64 {
        match self {
            ObservableKind::GumbelLog => (-y).exp(),
            ObservableKind::FrechetPower { beta } => {
                if y <= 0.0 {
                    f64::INFINITY
                } else {
                    y.powf(-beta)
                }
            }
            ObservableKind::WeibullPower { gamma, .. } => {
                if y >= 0.0 {
                    0.0
                } else {
                    (-y).powf(*gamma)
                }
            }
        }
    }

    /// The matching limit law.
    pub fn law(&self) -> ReferenceLaw {
        match self {
            ObservableKind::GumbelLog => ReferenceLaw::Gumbel,
            ObservableKind::FrechetPower { beta } => ReferenceLaw::Frechet { beta: *beta },
            ObservableKind::WeibullPower { gamma, .. } => ReferenceLaw::Weibull { gamma: *gamma },
        }
    }

    /// Exceedance level `u_t(y) = g(tau(y) / t)`.
    pub fn level(&self, y: f64, t: f64) -> f64 {
        self.g(self.tail(y) / t)
    }
}

/// Whether the observable reads the base-ball measure directly or the flow
/// box measure per unit height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObservableForm {
    Map,
    /// Carries the mean roof, so `v(d) = profile(d) / mean_roof`.
    Flow { mean_roof: f64 },
}

/// A distance observable: shape, form, and the measure profile around its
/// center.
#[derive(Clone, Debug)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    pub form: ObservableForm,
    pub profile: MeasureProfile,
}

impl ObservableSpec {
    pub fn new(kind: ObservableKind, form: ObservableForm, profile: MeasureProfile) -> Result<Self> {
        kind.validate()?;
        if let ObservableForm::Flow { mean_roof } = form {
            if !(mean_roof > 0.0) || !mean_roof.is_finite() {
                return Err(Error::Domain(format!("flow form needs a positive mean roof, got {mean_roof}")));
            }
        }
        Ok(ObservableSpec { kind, form, profile })
    }

    pub fn center(&self) -> Point {
        self.profile.center()
    }

    fn scale(&self) -> f64 {
        match self.form {
            ObservableForm::Map => 1.0,
            ObservableForm::Flow { mean_roof } => mean_roof,
        }
    }

    /// Observable value at distance `d` from the center.
    pub fn value_at_distance(&self, d: f64) -> Result<f64> {
        let v = self.profile.value_at(d)? / self.scale();
        Ok(self.kind.g(v))
    }

    /// Distance whose measure value matches the level `u_t(y)`: the running
    /// maximum stays below the level exactly when the minimal distance stays
    /// above this threshold. Infinite below the law's support (the maximum
    /// is never that small), zero above it.
    pub fn distance_threshold(&self, y: f64, t: f64) -> Result<f64> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time horizon must be positive and finite, got {t}")));
        }
        let tau = self.kind.tail(y);
        if tau.is_infinite() {
            return Ok(f64::INFINITY);
        }
        self.profile.inverse_at(tau / t * self.scale())
    }

    /// Running maximum implied by a minimal distance, clamping distances
    /// beyond the profile to its edge (they only lower the maximum further).
    pub fn max_from_min_distance(&self, d_min: f64) -> f64 {
        let d = d_min.min(self.profile.max_radius());
        let v = self.profile.value_at(d).expect("clamped distance is within the profile")
            / self.scale();
        if v > 0.0 {
            self.kind.g(v)
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Minimal distance from the orbit's first `n` points to the center.
pub fn min_distance_map(
    system: &BaseSystem,
    center: Point,
    orbit: &mut Orbit,
    n: u64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut d_min = system.distance(center, orbit.point());
    for _ in 1..n {
        orbit.step()?;
        d_min = d_min.min(system.distance(center, orbit.point()));
    }
    Ok(d_min)
}

/// Minimal chart distance from the flow segment of length `t` to the center
/// `(center, center_height)`.
///
/// Along one fiber the base is fixed, so the closest approach is the base
/// distance when the height interval covers the center height, and otherwise
/// picks up the gap to the nearer interval end.
pub fn min_distance_flow(
    suspension: &Suspension,
    center: Point,
    center_height: f64,
    start: &mut FlowStart,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time horizon must be positive and finite, got {t}")));
    }
    let system = suspension.system();
    let mut remaining = t;
    let mut h_lo = start.height;
    let mut d_min = f64::INFINITY;
    loop {
        let base = start.orbit.point();
        let roof = suspension.roof_value(base);
        let h_hi = roof.min(h_lo + remaining);
        let d_base = system.distance(center, base);
        let gap = if (h_lo..=h_hi).contains(&center_height) {
            0.0
        } else {
            (h_lo - center_height).abs().min((h_hi - center_height).abs())
        };
        d_min = d_min.min(d_base.max(gap));
        remaining -= h_hi - h_lo;
        if remaining <= 0.0 {
            return Ok(d_min);
        }
        start.orbit.step()?;
        h_lo = 0.0;
    }
}

/// Empirical law of running maxima against the limit law over a level grid.
#[derive(Clone, Debug)]
pub struct EvlCurve {
    pub ys: Vec<f64>,
    /// Fraction of trajectories whose maximum stayed below the level of `y`.
    pub empirical: Vec<f64>,
    /// Limit-law CDF at `y`.
    pub predicted: Vec<f64>,
    /// Largest gap between the two over the grid.
    pub sup_gap: f64,
    /// Raw maxima, one per trajectory.
    pub maxima: Vec<f64>,
    pub time: f64,
}

fn curve_from_minima(
    spec: &ObservableSpec,
    ys: &[f64],
    thresholds: &[f64],
    minima: Vec<f64>,
    time: f64,
) -> EvlCurve {
    let n = minima.len() as f64;
    let law = spec.kind.law();
    let mut empirical = Vec::with_capacity(ys.len());
    let mut predicted = Vec::with_capacity(ys.len());
    let mut sup_gap: f64 = 0.0;
    for (y, d_y) in ys.iter().zip(thresholds) {
        let emp = if d_y.is_infinite() {
            0.0
        } else {
            minima.iter().filter(|d| **d > *d_y).count() as f64 / n
        };
        let pred = law.cdf(*y);
        sup_gap = sup_gap.max((emp - pred).abs());
        empirical.push(emp);
        predicted.push(pred);
    }
    let maxima = minima.iter().map(|d| spec.max_from_min_distance(*d)).collect();
    EvlCurve { ys: ys.to_vec(), empirical, predicted, sup_gap, maxima, time }
}

fn validate_grid(ys: &[f64]) -> Result<()> {
    if ys.is_empty() {
        return Err(Error::Domain("level grid is empty".into()));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("level grid contains a non-finite value".into()));
    }
    Ok(())
}

/// Empirical maxima law of a map observable over `n_traj` invariant starts
/// and `steps` iterates each.
pub fn evl_empirical_map(
    system: &BaseSystem,
    spec: &ObservableSpec,
    master_seed: u64,
    n_traj: usize,
    steps: u64,
    ys: &[f64],
) -> Result<EvlCurve> {
    validate_grid(ys)?;
    if spec.form != ObservableForm::Map {
        return Err(Error::Domain("map maxima need a map-form observable".into()));
    }
    if n_traj == 0 {
        return Err(Error::EmptySample);
    }
    let t = steps as f64;
    let thresholds: Vec<f64> =
        ys.iter().map(|y| spec.distance_threshold(*y, t)).collect::<Result<_>>()?;
    let center = spec.center();
    let mut minima = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let d = scan_with_restarts(i as u64, |index| {
            let mut orbit = invariant_start(system, master_seed, index)?;
            min_distance_map(system, center, &mut orbit, steps)
        })?;
        minima.push(d);
    }
    Ok(curve_from_minima(spec, ys, &thresholds, minima, t))
}

/// Empirical maxima law of a flow observable over `n_traj` flow-invariant
/// starts and flow time `t` each.
///
/// The chart metric must be the true suspension metric out to the largest
/// queried radius, which requires clearance around the center height: twice
/// the radius below it, and twice the radius above it under the roof.
pub fn evl_empirical_flow(
    suspension: &Suspension,
    spec: &ObservableSpec,
    center_height: f64,
    master_seed: u64,
    n_traj: usize,
    t: f64,
    ys: &[f64],
) -> Result<EvlCurve> {
    validate_grid(ys)?;
    if !matches!(spec.form, ObservableForm::Flow { .. }) {
        return Err(Error::Domain("flow maxima need a flow-form observable".into()));
    }
    if n_traj == 0 {
        return Err(Error::EmptySample);
    }
    let thresholds: Vec<f64> =
        ys.iter().map(|y| spec.distance_threshold(*y, t)).collect::<Result<_>>()?;
    let d_max = thresholds.iter().cloned().filter(|d| d.is_finite()).fold(0.0, f64::max);
    check_chart_clearance(suspension, spec.center(), center_height, d_max)?;
    let center = spec.center();
    let mut minima = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let d = scan_with_restarts(i as u64, |index| {
            let mut start = flow_start(suspension, master_seed, index)?;
            min_distance_flow(suspension, center, center_height, &mut start, t)
        })?;
        minima.push(d);
    }
    Ok(curve_from_minima(spec, ys, &thresholds, minima, t))
}

/// Requires the chart metric to be exact out to radius `d_max` around
/// `(center, height)`: any path through the roof or the floor must be longer
/// than the direct one.
fn check_chart_clearance(
    suspension: &Suspension,
    center: Point,
    height: f64,
    d_max: f64,
) -> Result<()> {
    if d_max == 0.0 {
        return Ok(());
    }
    let ball = crate::systems::BaseBall::new(center, d_max)?;
    let inf = suspension.roof().inf_over_ball(suspension.system(), &ball);
    if height < 2.0 * d_max || inf < height + 2.0 * d_max {
        return Err(Error::DirtyFlowBox {
            reason: format!(
                "center height {height} lacks 2 x {d_max} clearance (roof infimum {inf})"
            ),
        });
    }
    Ok(())
}

/// The maxima route and the hitting route for the same levels.
#[derive(Clone, Debug)]
pub struct DualityReport {
    pub ys: Vec<f64>,
    /// P(maximum below the level), from the maxima scan.
    pub maxima_route: Vec<f64>,
    /// P(first hit of the matching box after `t`), from the hitting scan.
    pub hitting_route: Vec<f64>,
    /// Largest gap between the two routes over the grid.
    pub sup_gap: f64,
    /// Largest binomial 95% half-width of either route.
    pub max_ci: f64,
    pub time: f64,
}

/// Compares `P(M_t < u_t(y))` with `P(tau > t)` for the box of matching
/// radius, estimating each side on its own independently seeded trajectories.
///
/// The two events are the same set up to the measure-zero level boundary and
/// starts inside the box (whose first hit is a re-entry), so the curves agree
/// to sampling accuracy; running them through entirely separate code paths is
/// the point of the check.
pub fn evl_hitting_duality(
    suspension: &Suspension,
    spec: &ObservableSpec,
    center_height: f64,
    master_seed: u64,
    n_per_route: usize,
    t: f64,
    ys: &[f64],
) -> Result<DualityReport> {
    validate_grid(ys)?;
    if n_per_route == 0 {
        return Err(Error::EmptySample);
    }
    let maxima_curve = evl_empirical_flow(
        suspension,
        spec,
        center_height,
        seeds::mix(master_seed, 0xe1),
        n_per_route,
        t,
        ys,
    )?;

    let thresholds: Vec<f64> =
        ys.iter().map(|y| spec.distance_threshold(*y, t)).collect::<Result<_>>()?;
    let center = spec.center();
    let hit_seed = seeds::mix(master_seed, 0x17);
    let mut survived = vec![0u64; ys.len()];
    for (j, d_y) in thresholds.iter().enumerate() {
        if d_y.is_infinite() {
            continue;
        }
        if *d_y == 0.0 {
            survived[j] = n_per_route as u64;
            continue;
        }
        let ball = FlowBall::new(center, center_height, *d_y)?;
        if !(suspension.roof().inf_over_ball(suspension.system(), &ball.base)
            > SEPARATION_FACTOR * d_y)
        {
            return Err(Error::DirtyFlowBox {
                reason: format!("duality box of radius {d_y} is not separated"),
            });
        }
        for i in 0..n_per_route {
            let record = scan_with_restarts(i as u64, |index| {
                let mut start = flow_start(suspension, hit_seed, index)?;
                hitting_times(suspension, &ball, &mut start, 1, t)
            })?;
            if record.times.is_empty() {
                survived[j] += 1;
            }
        }
    }

    let n = n_per_route as f64;
    let hitting_route: Vec<f64> = survived.iter().map(|s| *s as f64 / n).collect();
    let mut sup_gap: f64 = 0.0;
    let mut max_ci: f64 = 0.0;
    for (a, b) in maxima_curve.empirical.iter().zip(&hitting_route) {
        sup_gap = sup_gap.max((a - b).abs());
        let var = (a * (1.0 - a)).max(b * (1.0 - b));
        max_ci = max_ci.max(1.96 * (var / n).sqrt());
    }
    Ok(DualityReport {
        ys: ys.to_vec(),
        maxima_route: maxima_curve.empirical,
        hitting_route,
        sup_gap,
        max_ci,
        time: t,
    })
}
