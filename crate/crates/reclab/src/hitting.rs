//! Hitting and return statistics of flow boxes and base balls.
//!
//! A trajectory "hits" a set when it enters it after first having left it:
//! the first hitting time of a point already inside the set is the first
//! re-entry after the exit, and later hitting times are successive re-entry
//! events. For a clean flow box every visit enters through the bottom face
//! and lasts for the full height window, so hitting times of the flow reduce
//! to an exact sum of roof values along the base orbit; that reduction is
//! what makes statistically long flow experiments affordable.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::seeds;
use crate::stats::{ks_distance, EmpiricalCdf, ReferenceLaw};
use crate::suspension::{flow_start, FlowBall, FlowPoint, FlowStart, Suspension};
use crate::systems::{BaseBall, BaseSystem, Orbit, SamplerConfig, SINGULAR_TOL};

/// Required roof clearance over the ball, in units of the box radius. With
/// the roof above `4 rho` every fiber crossing is a disjoint visit of length
/// exactly `2 rho`, separated from the next by more than the visit length,
/// so re-entry events are unambiguous.
pub const SEPARATION_FACTOR: f64 = 4.0;

/// Base-orbit steps allowed in a single hitting scan.
const MAX_SCAN_STEPS: u64 = 200_000_000;

/// Redraws of a start whose scan ran into the singular set.
const START_ATTEMPTS: u64 = 16;

/// Checks cleanliness plus the separation condition `inf roof > 4 rho` and
/// returns the roof infimum over the ball.
pub fn check_separated(suspension: &Suspension, ball: &FlowBall) -> Result<f64> {
    let inf = suspension.check_clean(ball)?;
    if !(inf > SEPARATION_FACTOR * ball.rho) {
        return Err(Error::DirtyFlowBox {
            reason: format!(
                "roof infimum {inf} over the ball does not clear {} times the radius {}",
                SEPARATION_FACTOR, ball.rho
            ),
        });
    }
    Ok(inf)
}

/// Time to leave the box flowing forward: zero outside, height left to the
/// top face inside. Requires a clean box, where the exit is always upward.
pub fn exit_time(suspension: &Suspension, ball: &FlowBall, p: FlowPoint) -> Result<f64> {
    suspension.check_clean(ball)?;
    if !suspension.box_contains(ball, p) {
        return Ok(0.0);
    }
    Ok(ball.center_height + ball.rho - p.height)
}

/// Hitting times of one trajectory, in increasing order.
#[derive(Clone, Debug)]
pub struct HittingRecord {
    /// Entry times of successive visits.
    pub times: Vec<f64>,
    /// Scan horizon; the trajectory had no further visit before it.
    pub horizon: f64,
    /// Whether the start point lay inside the box.
    pub start_inside: bool,
}

impl HittingRecord {
    /// First `m` hitting times, or `TruncatedRecord` when the horizon cut
    /// the record short.
    pub fn require(&self, m: usize) -> Result<&[f64]> {
        if self.times.len() < m {
            return Err(Error::TruncatedRecord { requested: m, recorded: self.times.len() });
        }
        Ok(&self.times[..m])
    }
}

/// Hitting times of the flow box along the flow from `start`, scanned until
/// `m_max` hits are found or entry times pass `t_max`.
///
/// The box must satisfy [`check_separated`]. The scan advances the base
/// orbit in place and accumulates roof values: the fiber over the k-th base
/// point spans flow times `[S_k - t0, S_k - t0 + r_k)`, and when that base
/// point lies in the ball the box is entered at height `s - rho`, hence at
/// time `S_k - t0 + s - rho`. A start already inside the box (or below it on
/// an in-ball fiber, which still enters through the bottom face) follows the
/// re-entry convention above.
pub fn hitting_times(
    suspension: &Suspension,
    ball: &FlowBall,
    start: &mut FlowStart,
    m_max: usize,
    t_max: f64,
) -> Result<HittingRecord> {
    check_separated(suspension, ball)?;
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Domain(format!("scan horizon must be positive and finite, got {t_max}")));
    }
    let s_lo = ball.center_height - ball.rho;
    let s_hi = ball.center_height + ball.rho;
    let t0 = start.height;
    let base0 = start.orbit.point();
    let in_ball0 = ball.base.contains(suspension.system(), base0);
    let start_inside = in_ball0 && (s_lo..=s_hi).contains(&t0);

    let mut times = Vec::new();
    if in_ball0 && t0 < s_lo && s_lo - t0 <= t_max {
        times.push(s_lo - t0);
    }
    // Cumulative flow time at the foot of the next fiber.
    let mut cum = suspension.roof_value(base0) - t0;
    let mut steps = 0u64;
    while times.len() < m_max && cum + s_lo <= t_max {
        start.orbit.step()?;
        steps += 1;
        if steps >= MAX_SCAN_STEPS {
            return Err(Error::HorizonExceeded { horizon: t_max });
        }
        let base = start.orbit.point();
        if ball.base.contains(suspension.system(), base) {
            times.push(cum + s_lo);
        }
        cum += suspension.roof_value(base);
    }
    Ok(HittingRecord { horizon: t_max, times, start_inside })
}

/// Entry indices of the base orbit into the ball, in `[1, n_max]`.
///
/// The state machine mirrors the flow convention: an entry is a step with
/// the orbit inside the ball whose predecessor was outside, so a start
/// inside the ball records its first re-entry, not index zero.
pub fn discrete_hitting_times(
    system: &BaseSystem,
    ball: &BaseBall,
    orbit: &mut Orbit,
    n_max: u64,
    m_max: usize,
) -> Result<Vec<u64>> {
    let mut inside = ball.contains(system, orbit.point());
    let mut hits = Vec::new();
    for k in 1..=n_max {
        orbit.step()?;
        let now = ball.contains(system, orbit.point());
        if now && !inside {
            hits.push(k);
            if hits.len() == m_max {
                break;
            }
        }
        inside = now;
    }
    Ok(hits)
}

/// Literal first return index `min{k >= 1 : T^k x in ball}`, or `None` past
/// the horizon. This is the quantity whose mean against the conditioned
/// measure inverts the ball measure exactly.
pub fn first_return_index(
    system: &BaseSystem,
    ball: &BaseBall,
    orbit: &mut Orbit,
    horizon: u64,
) -> Result<Option<u64>> {
    for k in 1..=horizon {
        orbit.step()?;
        if ball.contains(system, orbit.point()) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Empirical law of normalized first hitting times.
#[derive(Clone, Debug)]
pub struct SurvivalCurve {
    /// Normalized hitting times; runs outlasting the horizon are censored.
    pub normalized: EmpiricalCdf,
    /// Sup distance to the standard exponential.
    pub ks_exponential: f64,
    /// Factor that scaled raw times into normalized ones.
    pub normalizer: f64,
}

impl SurvivalCurve {
    fn from_times(times: Vec<f64>, censored: usize, normalizer: f64) -> Result<SurvivalCurve> {
        let normalized = EmpiricalCdf::with_censored(times, censored)?;
        let ks_exponential = ks_distance(&normalized, ReferenceLaw::Exponential)?;
        Ok(SurvivalCurve { normalized, ks_exponential, normalizer })
    }

    /// Empirical and predicted survival at `y`.
    pub fn survival_point(&self, y: f64) -> (f64, f64) {
        (self.normalized.survival(y), (-y).exp())
    }
}

/// Normalized first-hit law of a flow box over flow-invariant starts.
///
/// Raw times are scaled by `mu(base ball) / mean roof`, which is the flow
/// measure of the box divided by its height `2 rho`; in that clock the limit
/// law is standard exponential. `base_measure` is the caller's estimate of
/// the base-ball measure and `y_max` the normalized censoring horizon.
pub fn normalized_survival_flow(
    suspension: &Suspension,
    ball: &FlowBall,
    base_measure: f64,
    master_seed: u64,
    n_starts: usize,
    y_max: f64,
) -> Result<SurvivalCurve> {
    check_separated(suspension, ball)?;
    if !(base_measure > 0.0) {
        return Err(Error::ZeroBallMeasure { radius: ball.base.radius });
    }
    let normalizer = base_measure / suspension.mean_roof();
    let t_max = y_max / normalizer;
    let mut times = Vec::with_capacity(n_starts);
    let mut censored = 0usize;
    for i in 0..n_starts {
        let record = scan_with_restarts(i as u64, |index| {
            let mut start = flow_start(suspension, master_seed, index)?;
            hitting_times(suspension, ball, &mut start, 1, t_max)
        })?;
        match record.times.first() {
            Some(t) => times.push(t * normalizer),
            None => censored += 1,
        }
    }
    SurvivalCurve::from_times(times, censored, normalizer)
}

/// Normalized first-hit law of a base ball over invariant-measure starts.
///
/// Hit indices are scaled by the ball measure; the limit law is standard
/// exponential.
pub fn normalized_survival_map(
    system: &BaseSystem,
    ball: &BaseBall,
    base_measure: f64,
    master_seed: u64,
    n_starts: usize,
    y_max: f64,
) -> Result<SurvivalCurve> {
    if !(base_measure > 0.0) {
        return Err(Error::ZeroBallMeasure { radius: ball.radius });
    }
    let horizon = (y_max / base_measure).ceil() as u64;
    let mut times = Vec::with_capacity(n_starts);
    let mut censored = 0usize;
    for i in 0..n_starts {
        let first = scan_with_restarts(i as u64, |index| {
            let mut orbit = invariant_start(system, master_seed, index)?;
            first_return_index(system, ball, &mut orbit, horizon)
        })?;
        match first {
            Some(k) => times.push(k as f64 * base_measure),
            None => censored += 1,
        }
    }
    SurvivalCurve::from_times(times, censored, base_measure)
}

/// One start drawn from the invariant measure: a fresh random orbit run
/// through the default burn-in.
pub(crate) fn invariant_start(system: &BaseSystem, master_seed: u64, index: u64) -> Result<Orbit> {
    let cfg = SamplerConfig::default();
    for retry in 0..START_ATTEMPTS {
        let mut rng = seeds::stream(master_seed, seeds::STARTS, index | (retry << 48));
        let mut orbit = Orbit::random(system, &mut rng);
        match orbit.advance(cfg.burn_in) {
            Ok(()) => return Ok(orbit),
            Err(Error::SingularOrbit { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SingularOrbit { distance: 0.0, tol: SINGULAR_TOL })
}

/// Runs `scan` with a salted start index, redrawing when the scan lands on
/// the singular set.
pub(crate) fn scan_with_restarts<T>(
    index: u64,
    mut scan: impl FnMut(u64) -> Result<T>,
) -> Result<T> {
    for attempt in 0..START_ATTEMPTS {
        match scan(index | (attempt << 32)) {
            Err(Error::SingularOrbit { .. }) => continue,
            other => return other,
        }
    }
    Err(Error::SingularOrbit { distance: 0.0, tol: SINGULAR_TOL })
}

/// Distribution of visit counts against the Poisson law.
#[derive(Clone, Debug)]
pub struct PoissonReport {
    /// Expected count of the matched Poisson law.
    pub intensity: f64,
    /// `histogram[m]` = trajectories with `m` hits; the last bucket absorbs
    /// overflow.
    pub histogram: Vec<u64>,
    /// Total variation distance to the Poisson law, overflow mass included.
    pub tv_distance: f64,
    pub n_starts: usize,
}

impl PoissonReport {
    /// Empirical and predicted probability of `m` hits.
    pub fn pmf_point(&self, m: usize) -> (f64, f64) {
        let emp = self.histogram.get(m).map_or(0.0, |c| *c as f64 / self.n_starts as f64);
        (emp, poisson_pmf(self.intensity, m as u64))
    }
}

fn poisson_pmf(lambda: f64, m: u64) -> f64 {
    // Log form keeps large m finite.
    let mut log_p = -lambda + m as f64 * lambda.ln();
    for i in 1..=m {
        log_p -= (i as f64).ln();
    }
    log_p.exp()
}

/// Counts flow-box hits in a window of expected count `intensity` over
/// flow-invariant starts and compares the histogram with the Poisson law.
pub fn poisson_counts(
    suspension: &Suspension,
    ball: &FlowBall,
    base_measure: f64,
    master_seed: u64,
    n_starts: usize,
    intensity: f64,
    buckets: usize,
) -> Result<PoissonReport> {
    check_separated(suspension, ball)?;
    if !(base_measure > 0.0) {
        return Err(Error::ZeroBallMeasure { radius: ball.base.radius });
    }
    if !(intensity > 0.0) || buckets < 2 {
        return Err(Error::Domain(format!(
            "poisson window needs intensity > 0 and at least 2 buckets, got {intensity}, {buckets}"
        )));
    }
    let normalizer = base_measure / suspension.mean_roof();
    let t_window = intensity / normalizer;
    let mut histogram = vec![0u64; buckets];
    // Reaching `buckets` hits already lands in the overflow bucket.
    let m_cap = buckets;
    for i in 0..n_starts {
        let record = scan_with_restarts(i as u64, |index| {
            let mut start = flow_start(suspension, master_seed, index)?;
            hitting_times(suspension, ball, &mut start, m_cap, t_window)
        })?;
        let m = record.times.len().min(buckets - 1);
        histogram[m] += 1;
    }
    let tv_distance = poisson_tv(&histogram, n_starts, intensity);
    Ok(PoissonReport { intensity, histogram, tv_distance, n_starts })
}

fn poisson_tv(histogram: &[u64], n: usize, lambda: f64) -> f64 {
    let last = histogram.len() - 1;
    let mut tv = 0.0;
    let mut tail = 1.0;
    for (m, count) in histogram.iter().enumerate() {
        let emp = *count as f64 / n as f64;
        if m < last {
            let p = poisson_pmf(lambda, m as u64);
            tail -= p;
            tv += (emp - p).abs();
        } else {
            // Overflow bucket against the law's upper tail.
            tv += (emp - tail.max(0.0)).abs();
        }
    }
    tv / 2.0
}

/// Product of the mean first return index and the ball measure, which the
/// return-time identity pins at one.
#[derive(Clone, Debug)]
pub struct KacReport {
    pub product: f64,
    /// Delta-method 95% half-width of the product.
    pub product_ci: f64,
    pub mean_return: f64,
    pub ball_measure: f64,
    /// Returns that outlasted the horizon and entered at the horizon value.
    pub censored: usize,
}

/// Estimates the return-time product over starts conditioned to the ball.
///
/// The ball measure comes from one invariant sample and the starts from an
/// independently seeded one; estimating both from the same orbit would make
/// the product one by construction instead of by the dynamics.
pub fn kac_check(
    system: &BaseSystem,
    ball: &BaseBall,
    master_seed: u64,
    n_starts: usize,
    measure_samples: usize,
) -> Result<KacReport> {
    if n_starts == 0 || measure_samples == 0 {
        return Err(Error::EmptySample);
    }
    let measure_pts =
        crate::systems::sample_invariant(system, seeds::mix(master_seed, 0x6d), measure_samples)?;
    let (mu, mu_ci) = crate::systems::ball_measure(system, ball.center, ball.radius, &measure_pts)?;
    if mu == 0.0 {
        return Err(Error::ZeroBallMeasure { radius: ball.radius });
    }
    let horizon = ((64.0 / mu).ceil() as u64).max(1_000);

    let mut returns = Vec::with_capacity(n_starts);
    let mut censored = 0usize;
    let mut round = 0u64;
    while returns.len() < n_starts {
        let pool = crate::systems::sample_invariant(
            system,
            seeds::mix(master_seed, 0x4b00 + round),
            measure_samples,
        )?;
        let mut progressed = false;
        for p in pool {
            if returns.len() >= n_starts {
                break;
            }
            if !ball.contains(system, p) {
                continue;
            }
            progressed = true;
            let idx = returns.len() as u64;
            let k = scan_with_restarts(idx, |index| {
                let mut rng = seeds::stream(master_seed, seeds::RETURN_GAPS, index);
                let mut orbit = Orbit::from_point(system, p, rng.next_u64())?;
                first_return_index(system, ball, &mut orbit, horizon)
            })?;
            match k {
                Some(k) => returns.push(k as f64),
                None => {
                    censored += 1;
                    returns.push(horizon as f64);
                }
            }
        }
        round += 1;
        if !progressed && round > 8 {
            return Err(Error::ZeroBallMeasure { radius: ball.radius });
        }
        if round > 512 {
            return Err(Error::EmptySample);
        }
    }

    let (mean_return, ret_ci) = crate::stats::mean_with_ci(&returns)?;
    let product = mean_return * mu;
    let rel = (ret_ci / mean_return).hypot(mu_ci / mu);
    Ok(KacReport { product, product_ci: product * rel, mean_return, ball_measure: mu, censored })
}

/// Largest discrepancy between hitting times computed by the orbit
/// reconstruction and by an independent scan of the same trajectories.
///
/// The witness route walks fiber by fiber with explicit height bookkeeping,
/// detects box entries by sampling membership at a quarter of the radius,
/// and refines each entry by bisection. It shares the base orbit (cloned, so
/// both routes see identical base points) but none of the time algebra.
pub fn flow_base_consistency(
    suspension: &Suspension,
    ball: &FlowBall,
    master_seed: u64,
    n_starts: usize,
    hits_per_start: usize,
) -> Result<f64> {
    check_separated(suspension, ball)?;
    let mut worst: f64 = 0.0;
    for i in 0..n_starts {
        let diff = scan_with_restarts(i as u64, |index| {
            let mut start = flow_start(suspension, master_seed, index)?;
            let mut witness_orbit = start.orbit.clone();
            let witness =
                witness_hits(suspension, ball, &mut witness_orbit, start.height, hits_per_start)?;
            let record = hitting_times(suspension, ball, &mut start, hits_per_start, f64::MAX)?;
            let fast = record.require(hits_per_start)?;
            let mut d: f64 = 0.0;
            for (a, b) in fast.iter().zip(&witness) {
                d = d.max((a - b).abs());
            }
            Ok(d)
        })?;
        worst = worst.max(diff);
    }
    Ok(worst)
}

fn witness_hits(
    suspension: &Suspension,
    ball: &FlowBall,
    orbit: &mut Orbit,
    start_height: f64,
    m: usize,
) -> Result<Vec<f64>> {
    let step = ball.rho / 4.0;
    let mut hits = Vec::new();
    let mut fiber_start = -start_height;
    let mut inside = suspension
        .box_contains(ball, FlowPoint { base: orbit.point(), height: start_height });
    let mut steps = 0u64;
    while hits.len() < m {
        let base = orbit.point();
        let roof = suspension.roof_value(base);
        let fiber_end = fiber_start + roof;
        // March through this fiber; heights below 0 belong to the previous
        // fiber of the start point and are skipped.
        let mut t = fiber_start.max(0.0);
        let mut prev_t = t;
        while t < fiber_end {
            let h = t - fiber_start;
            let now = suspension.box_contains(ball, FlowPoint { base, height: h });
            if now && !inside {
                hits.push(bisect_entry(suspension, ball, base, fiber_start, prev_t, t));
                if hits.len() == m {
                    return Ok(hits);
                }
            }
            inside = now;
            prev_t = t;
            t += step;
        }
        // Crossing the roof resets the height to zero, which lies in the box
        // only if the bottom face sits at zero while the top touches the
        // roof; together those force inf = 2 rho, ruled out by separation.
        inside = false;
        orbit.step()?;
        fiber_start = fiber_end;
        steps += 1;
        if steps >= MAX_SCAN_STEPS {
            return Err(Error::HorizonExceeded { horizon: fiber_end });
        }
    }
    Ok(hits)
}

fn bisect_entry(
    suspension: &Suspension,
    ball: &FlowBall,
    base: crate::systems::Point,
    fiber_start: f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if suspension.box_contains(ball, FlowPoint { base, height: mid - fiber_start }) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suspension::{build_suspension, RoofFunction};
    use crate::systems::Point;
    use approx::assert_abs_diff_eq;

    fn unit_doubling() -> Suspension {
        build_suspension(BaseSystem::doubling(), RoofFunction::constant(1.0).unwrap(), 1).unwrap()
    }

    #[test]
    fn separation_is_enforced() {
        let s = unit_doubling();
        // 4 * 0.3 exceeds the roof height 1.
        let wide = FlowBall::new(Point::One(0.5), 0.5, 0.3).unwrap();
        assert!(matches!(check_separated(&s, &wide), Err(Error::DirtyFlowBox { .. })));
        let ok = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        assert_abs_diff_eq!(check_separated(&s, &ok).unwrap(), 1.0);
    }

    #[test]
    fn exit_time_inside_and_outside() {
        let s = unit_doubling();
        let ball = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        let inside = s.flow_point(Point::One(0.45), 0.4).unwrap();
        assert_abs_diff_eq!(exit_time(&s, &ball, inside).unwrap(), 0.25, epsilon = 1e-12);
        let outside = s.flow_point(Point::One(0.1), 0.4).unwrap();
        assert_eq!(exit_time(&s, &ball, outside).unwrap(), 0.0);
    }

    #[test]
    fn hitting_times_follow_the_orbit_exactly() {
        // Unit roof over the doubling map from (0.3, 0.2): orbit 0.3, 0.6,
        // 0.2, 0.4, 0.8, 0.6, ... and ball [0.35, 0.65], so hits sit on the
        // odd fibers at time k - t0 + (s - rho).
        let s = unit_doubling();
        let ball = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        let orbit = Orbit::from_point(&BaseSystem::doubling(), Point::One(0.3), 9).unwrap();
        let mut start = FlowStart { orbit, height: 0.2 };
        let record = hitting_times(&s, &ball, &mut start, 4, 100.0).unwrap();
        assert!(!record.start_inside);
        let got = record.require(4).unwrap();
        for (g, k) in got.iter().zip([1.0f64, 3.0, 5.0, 7.0]) {
            assert_abs_diff_eq!(*g, k - 0.2 + 0.35, epsilon = 1e-9);
        }
    }

    #[test]
    fn start_below_the_box_hits_on_its_own_fiber() {
        let s = unit_doubling();
        let ball = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        let orbit = Orbit::from_point(&BaseSystem::doubling(), Point::One(0.45), 9).unwrap();
        // Height 0.2 is below the bottom face 0.35 over an in-ball base.
        let mut start = FlowStart { orbit, height: 0.2 };
        let record = hitting_times(&s, &ball, &mut start, 2, 100.0).unwrap();
        assert!(!record.start_inside);
        assert_abs_diff_eq!(record.times[0], 0.15, epsilon = 1e-12);
        // Orbit of 0.45: 0.9, 0.8, 0.6 at k = 3.
        assert_abs_diff_eq!(record.times[1], 3.0 - 0.2 + 0.35, epsilon = 1e-9);
    }

    #[test]
    fn start_inside_waits_for_reentry() {
        let s = unit_doubling();
        let ball = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        let orbit = Orbit::from_point(&BaseSystem::doubling(), Point::One(0.45), 9).unwrap();
        let mut start = FlowStart { orbit, height: 0.5 };
        let record = hitting_times(&s, &ball, &mut start, 1, 100.0).unwrap();
        assert!(record.start_inside);
        // First re-entry on the fiber of 0.6 at k = 3.
        assert_abs_diff_eq!(record.times[0], 3.0 - 0.5 + 0.35, epsilon = 1e-9);
    }

    #[test]
    fn start_above_the_box_misses_its_fiber() {
        let s = unit_doubling();
        let ball = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        let orbit = Orbit::from_point(&BaseSystem::doubling(), Point::One(0.45), 9).unwrap();
        let mut start = FlowStart { orbit, height: 0.7 };
        let record = hitting_times(&s, &ball, &mut start, 1, 100.0).unwrap();
        assert!(!record.start_inside);
        assert_abs_diff_eq!(record.times[0], 3.0 - 0.7 + 0.35, epsilon = 1e-9);
    }

    #[test]
    fn horizon_censors_the_record() {
        let s = unit_doubling();
        let ball = FlowBall::new(Point::One(0.5), 0.5, 0.15).unwrap();
        let orbit = Orbit::from_point(&BaseSystem::doubling(), Point::One(0.3), 9).unwrap();
        let mut start = FlowStart { orbit, height: 0.2 };
        let record = hitting_times(&s, &ball, &mut start, 10, 4.0).unwrap();
        assert_eq!(record.times.len(), 2);
        assert!(matches!(
            record.require(3),
            Err(Error::TruncatedRecord { requested: 3, recorded: 2 })
        ));
    }

    #[test]
    fn affine_roof_accumulates_roof_values() {
        // Roof 1 + x over the doubling map: entry times are partial sums of
        // the roof along the orbit.
        let sys = BaseSystem::doubling();
        let s = build_suspension(sys, RoofFunction::affine(1.0, 1.0).unwrap(), 1).unwrap();
        let ball = FlowBall::new(Point::One(0.5), 0.6, 0.1).unwrap();
        let orbit = Orbit::from_point(&sys, Point::One(0.3), 9).unwrap();
        let mut probe = orbit.clone();
        let mut start = FlowStart { orbit, height: 0.0 };
        let record = hitting_times(&s, &ball, &mut start, 2, 100.0).unwrap();
        // Recompute the expected sums from the probe orbit.
        let mut sums = Vec::new();
        let mut cum = s.roof_value(probe.point());
        for _ in 0..6 {
            probe.step().unwrap();
            let p = probe.point();
            if ball.base.contains(&sys, p) {
                sums.push(cum + 0.5);
            }
            cum += s.roof_value(p);
        }
        assert_abs_diff_eq!(record.times[0], sums[0], epsilon = 1e-9);
        assert_abs_diff_eq!(record.times[1], sums[1], epsilon = 1e-9);
    }

    #[test]
    fn discrete_hits_are_entry_events() {
        let sys = BaseSystem::doubling();
        let ball = BaseBall::new(Point::One(0.5), 0.15).unwrap();
        // Orbit of 0.45 starts inside: 0.9, 0.8, 0.6, 0.2, 0.4, 0.8, 0.6 ...
        let mut orbit = Orbit::from_point(&sys, Point::One(0.45), 9).unwrap();
        let hits = discrete_hitting_times(&sys, &ball, &mut orbit, 40, 3).unwrap();
        assert_eq!(hits[0], 3);
        // 0.2 leaves at k=4, 0.4 re-enters at k=5, 0.8 leaves, 0.6 re-enters.
        assert_eq!(hits[1], 5);
        assert_eq!(hits[2], 7);
    }

    #[test]
    fn first_return_is_literal() {
        let sys = BaseSystem::doubling();
        let ball = BaseBall::new(Point::One(0.5), 0.15).unwrap();
        // Orbit of 0.6: 0.2 (out), 0.4 (in): literal first return at k = 2.
        let mut orbit = Orbit::from_point(&sys, Point::One(0.6), 9).unwrap();
        let k = first_return_index(&sys, &ball, &mut orbit, 100).unwrap();
        assert_eq!(k, Some(2));
    }

    #[test]
    fn flow_survival_is_exponential_for_doubling() {
        let sys = BaseSystem::doubling();
        let s = build_suspension(sys, RoofFunction::affine(1.0, 1.0).unwrap(), 1).unwrap();
        let ball = FlowBall::new(Point::One(0.537), 0.6, 0.02).unwrap();
        // Lebesgue base ball measure is exactly 2 rho.
        let curve = normalized_survival_flow(&s, &ball, 0.04, 77, 1_500, 8.0).unwrap();
        assert!(curve.ks_exponential < 0.05, "KS {}", curve.ks_exponential);
        assert!(curve.normalized.censored() < 30);
        let (emp, pred) = curve.survival_point(1.0);
        assert!((emp - pred).abs() < 0.05);
    }

    #[test]
    fn map_survival_is_exponential_for_doubling() {
        let sys = BaseSystem::doubling();
        let ball = BaseBall::new(Point::One(0.537), 0.02).unwrap();
        let curve = normalized_survival_map(&sys, &ball, 0.04, 78, 1_500, 8.0).unwrap();
        assert!(curve.ks_exponential < 0.05, "KS {}", curve.ks_exponential);
    }

    #[test]
    fn poisson_counts_match_the_law() {
        let sys = BaseSystem::doubling();
        let s = build_suspension(sys, RoofFunction::affine(1.0, 1.0).unwrap(), 1).unwrap();
        // The radius must be small: a wider ball excludes its own short-lag
        // preimages, which underdisperses the counts measurably.
        let ball = FlowBall::new(Point::One(0.537), 0.6, 0.005).unwrap();
        let report = poisson_counts(&s, &ball, 0.01, 79, 1_200, 1.0, 8).unwrap();
        assert!(report.tv_distance < 0.06, "TV {}", report.tv_distance);
        let (emp0, pred0) = report.pmf_point(0);
        assert!((emp0 - pred0).abs() < 0.05, "P(0): {emp0} vs {pred0}");
        assert_eq!(report.histogram.iter().sum::<u64>(), 1_200);
    }

    #[test]
    fn kac_product_is_one_for_doubling() {
        let sys = BaseSystem::doubling();
        let ball = BaseBall::new(Point::One(0.537), 0.05).unwrap();
        let report = kac_check(&sys, &ball, 41, 2_000, 100_000).unwrap();
        assert!(
            (report.product - 1.0).abs() < report.product_ci.max(0.08),
            "product {} ci {}",
            report.product,
            report.product_ci
        );
        assert_eq!(report.censored, 0);
    }

    #[test]
    fn kac_product_is_one_for_the_intermittent_map() {
        let sys = BaseSystem::lsv(0.5).unwrap();
        let ball = BaseBall::new(Point::One(0.3), 0.05).unwrap();
        let report = kac_check(&sys, &ball, 43, 1_500, 100_000).unwrap();
        assert!(
            (report.product - 1.0).abs() < 2.0 * report.product_ci.max(0.05),
            "product {} ci {}",
            report.product,
            report.product_ci
        );
    }

    #[test]
    fn reconstruction_agrees_with_the_witness_scan() {
        let sys = BaseSystem::lsv(0.5).unwrap();
        let s = build_suspension(sys, RoofFunction::affine(0.8, 0.4).unwrap(), 3).unwrap();
        let ball = FlowBall::new(Point::One(0.3), 0.45, 0.05).unwrap();
        let worst = flow_base_consistency(&s, &ball, 51, 20, 3).unwrap();
        assert!(worst < 1e-9, "max discrepancy {worst}");
    }

    #[test]
    fn reconstruction_agrees_for_the_log_roof() {
        let sys = BaseSystem::lorenz1d_default();
        let s = build_suspension(sys, RoofFunction::log_lorenz(), 3).unwrap();
        // Roof inf over the ball: -ln(0.65) ~ 0.43 > 4 * 0.05.
        let ball = FlowBall::new(Point::One(0.6), 0.2, 0.05).unwrap();
        let worst = flow_base_consistency(&s, &ball, 53, 20, 3).unwrap();
        assert!(worst < 1e-9, "max discrepancy {worst}");
    }
}
