//! Suspension of a base map under a roof function.
//!
//! The phase space is `{(x, h) : 0 <= h < r(x)}` with the identification
//! `(x, r(x)) ~ (R(x), 0)`; the flow moves at unit speed in the height
//! coordinate. Its invariant probability measure is the product of the base
//! invariant measure with Lebesgue in the height, normalized by the mean
//! roof.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds;
use crate::stats::mean_with_ci;
use crate::systems::{self, BaseBall, BaseSystem, Orbit, Point, Sampler, SamplerConfig};

/// Relative half-vs-full mean drift above which the roof is rejected as
/// non-integrable. A heuristic proxy: a genuinely divergent integral keeps
/// growing with the sample, a convergent one settles.
const INTEGRABILITY_DRIFT: f64 = 0.1;

/// Samples used to estimate the mean roof and bound at build time.
const BUILD_SAMPLES: usize = 200_000;

/// Crossing budget of a single flow advance.
const MAX_CROSSINGS: u64 = 100_000_000;

/// Roof function of a suspension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RoofFunction {
    /// `r(x) = c`.
    Constant { c: f64 },
    /// `r(x) = a + b x`, for one-dimensional bases.
    Affine { a: f64, b: f64 },
    /// `r(x) = -ln|x|`, for the Lorenz-type bases; unbounded at the singular
    /// set, zero exactly on the boundary `|x| = 1` (a null set).
    LogLorenz,
}

impl RoofFunction {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonPositiveRoof { value: c });
        }
        Ok(RoofFunction::Constant { c })
    }

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("affine roof coefficients must be finite".into()));
        }
        Ok(RoofFunction::Affine { a, b })
    }

    pub fn log_lorenz() -> Self {
        RoofFunction::LogLorenz
    }

    pub fn name(&self) -> String {
        match self {
            RoofFunction::Constant { c } => format!("constant({c})"),
            RoofFunction::Affine { a, b } => format!("affine({a},{b})"),
            RoofFunction::LogLorenz => "loglorenz".into(),
        }
    }

    pub fn value(&self, p: Point) -> f64 {
        match self {
            RoofFunction::Constant { c } => *c,
            RoofFunction::Affine { a, b } => a + b * p.x(),
            RoofFunction::LogLorenz => -p.x().abs().ln(),
        }
    }

    /// Infimum of the roof over the closed ball, exact for each roof shape.
    /// For a wrapped circle arc the limit value at the wrap point is used,
    /// which can only lower the result, keeping cleanliness checks safe.
    pub fn inf_over_ball(&self, system: &BaseSystem, ball: &BaseBall) -> f64 {
        match self {
            RoofFunction::Constant { c } => *c,
            RoofFunction::Affine { a, b } => {
                let c = ball.center.x();
                let rho = ball.radius;
                match system {
                    BaseSystem::Doubling => {
                        if 2.0 * rho >= 1.0 {
                            return a.min(a + b);
                        }
                        let lo = (c - rho).rem_euclid(1.0);
                        let hi = (c + rho).rem_euclid(1.0);
                        let mut inf = (a + b * lo).min(a + b * hi);
                        if lo > hi {
                            // Arc wraps through 0: include both limit values.
                            inf = inf.min(*a).min(a + b);
                        }
                        inf
                    }
                    BaseSystem::Lsv { .. } => {
                        let lo = (c - rho).max(0.0);
                        let hi = (c + rho).min(1.0);
                        (a + b * lo).min(a + b * hi)
                    }
                    BaseSystem::Lorenz1d { .. } => {
                        let lo = (c - rho).max(-1.0);
                        let hi = (c + rho).min(1.0);
                        (a + b * lo).min(a + b * hi)
                    }
                    BaseSystem::Lorenz2d { .. } => f64::NAN,
                }
            }
            RoofFunction::LogLorenz => {
                let c = ball.center.x();
                let rho = ball.radius;
                let lo = (c - rho).max(-1.0);
                let hi = (c + rho).min(1.0);
                -lo.abs().max(hi.abs()).ln()
            }
        }
    }

    fn compatible_with(&self, system: &BaseSystem) -> Result<()> {
        let ok = match self {
            RoofFunction::Constant { .. } => true,
            RoofFunction::Affine { .. } => system.dim() == 1,
            RoofFunction::LogLorenz => {
                matches!(system, BaseSystem::Lorenz1d { .. } | BaseSystem::Lorenz2d { .. })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "roof {} is not defined for system {}",
                self.name(),
                system.name()
            )))
        }
    }
}

/// A point of the suspension space: a base point and a height in `[0, r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPoint {
    pub base: Point,
    pub height: f64,
}

/// A flow box: the ball `B_rho(base center)` in the base, thickened to the
/// height window `[center_height - rho, center_height + rho]`.
#[derive(Clone, Copy, Debug)]
pub struct FlowBall {
    pub base: BaseBall,
    pub center_height: f64,
    pub rho: f64,
}

impl FlowBall {
    /// A metric ball of radius `rho` around `(center, height)` in the chart
    /// metric; the base ball and the height window share the same radius.
    pub fn new(center: Point, height: f64, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() || !height.is_finite() || height < 0.0 {
            return Err(Error::Domain(format!(
                "flow ball needs rho > 0 and height >= 0, got rho={rho}, height={height}"
            )));
        }
        Ok(FlowBall { base: BaseBall::new(center, rho)?, center_height: height, rho })
    }
}

/// How measure queries treat a box that fails the cleanliness check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strictness {
    /// Error with `DirtyFlowBox`.
    Strict,
    /// Fall back to counting flow samples in the truncated cylinder
    /// `{(y,h) : y in ball, |h - s| <= rho, h < r(y)}`.
    Lenient,
}

/// A validated suspension: base system, roof, and calibration constants
/// estimated once at build time.
#[derive(Clone, Debug)]
pub struct Suspension {
    system: BaseSystem,
    roof: RoofFunction,
    mean_roof: f64,
    mean_roof_ci: f64,
    roof_bound: f64,
}

/// Validates roof/system compatibility, positivity, and integrability, and
/// calibrates the mean roof and an upper roof bound from `BUILD_SAMPLES`
/// invariant samples keyed by `master_seed`.
pub fn build_suspension(
    system: BaseSystem,
    roof: RoofFunction,
    master_seed: u64,
) -> Result<Suspension> {
    roof.compatible_with(&system)?;

    if let RoofFunction::Constant { c } = roof {
        return Ok(Suspension {
            system,
            roof,
            mean_roof: c,
            mean_roof_ci: 0.0,
            roof_bound: c,
        });
    }

    let sampler = match system {
        BaseSystem::Doubling => Sampler::StratifiedLebesgue,
        _ => Sampler::Orbit,
    };
    let points = systems::sample_points(
        &system,
        sampler,
        &SamplerConfig::default(),
        seeds::mix(master_seed, seeds::MEAN_ROOF),
        BUILD_SAMPLES,
    )?;
    let mut values = Vec::with_capacity(points.len());
    for p in &points {
        let v = roof.value(*p);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NonPositiveRoof { value: v });
        }
        values.push(v);
    }

    let (full, ci) = mean_with_ci(&values)?;
    if sampler == Sampler::Orbit {
        // Half-vs-full drift of the running mean. Only meaningful for orbit
        // samples, which arrive in exchangeable blocks; stratified samples
        // sweep the domain in order, and the roofs they admit are bounded.
        let half = values.len() / 2;
        let partial = values[..half].iter().sum::<f64>() / half as f64;
        if (partial - full).abs() > INTEGRABILITY_DRIFT * full.abs() {
            return Err(Error::NonIntegrableRoof { partial, full });
        }
    }

    let roof_bound = match roof {
        RoofFunction::Affine { a, b } => {
            // Exact supremum over the (closure of the) interval domain.
            let (lo, hi) = match system {
                BaseSystem::Lorenz1d { .. } => (-1.0, 1.0),
                _ => (0.0, 1.0),
            };
            (a + b * lo).max(a + b * hi)
        }
        // Unbounded roof: an empirical bound with headroom. The acceptance
        // step of the flow sampler clamps ratios above one, which underweights
        // only the far tail beyond the bound.
        _ => values.iter().cloned().fold(f64::MIN, f64::max) * 1.1,
    };

    Ok(Suspension { system, roof, mean_roof: full, mean_roof_ci: ci, roof_bound })
}

impl Suspension {
    pub fn system(&self) -> &BaseSystem {
        &self.system
    }

    pub fn roof(&self) -> &RoofFunction {
        &self.roof
    }

    /// Estimated mean roof over the base invariant measure; exact for a
    /// constant roof.
    pub fn mean_roof(&self) -> f64 {
        self.mean_roof
    }

    pub fn mean_roof_ci(&self) -> f64 {
        self.mean_roof_ci
    }

    /// Upper bound of the roof used by rejection sampling.
    pub fn roof_bound(&self) -> f64 {
        self.roof_bound
    }

    pub fn roof_value(&self, p: Point) -> f64 {
        self.roof.value(p)
    }

    /// Validated flow point with `0 <= height < r(base)`.
    pub fn flow_point(&self, base: Point, height: f64) -> Result<FlowPoint> {
        if !self.system.in_domain(base) {
            return Err(Error::Domain(format!(
                "base point outside the domain of {}",
                self.system.name()
            )));
        }
        let r = self.roof.value(base);
        if !(0.0..r).contains(&height) {
            return Err(Error::Domain(format!(
                "height {height} outside [0, {r}) over this base point"
            )));
        }
        Ok(FlowPoint { base, height })
    }

    /// Distance in a single chart: max of base distance and height gap.
    /// Valid for pairs well below the quotient scale, which is how all
    /// queries in this crate use it.
    pub fn chart_distance(&self, a: FlowPoint, b: FlowPoint) -> f64 {
        self.system.distance(a.base, b.base).max((a.height - b.height).abs())
    }

    /// Flows forward by `t >= 0`, resolving roof crossings one at a time.
    ///
    /// Base steps use plain floating-point arithmetic, so for the doubling
    /// map this is only meaningful over bounded horizons (about 50 base
    /// crossings); statistically long runs go through [`Orbit`]-driven
    /// scans instead.
    pub fn advance(&self, p: FlowPoint, t: f64) -> Result<FlowPoint> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("flow time must be finite and >= 0, got {t}")));
        }
        let mut base = p.base;
        let mut height = p.height + t;
        let mut crossings = 0u64;
        loop {
            let r = self.roof.value(base);
            if height < r {
                return Ok(FlowPoint { base, height });
            }
            height -= r;
            base = self.system.step(base)?;
            crossings += 1;
            if crossings >= MAX_CROSSINGS {
                return Err(Error::HorizonExceeded { horizon: MAX_CROSSINGS as f64 });
            }
        }
    }

    /// Checks the flow-box cleanliness conditions: the height window must not
    /// dip below the base (`s - rho >= 0`) and must stay below the roof over
    /// the whole base ball (`s + rho <= inf r`). Returns the roof infimum.
    pub fn check_clean(&self, ball: &FlowBall) -> Result<f64> {
        let s = ball.center_height;
        let rho = ball.rho;
        if s - rho < 0.0 {
            return Err(Error::DirtyFlowBox {
                reason: format!("height window [{}, {}] dips below the base", s - rho, s + rho),
            });
        }
        let inf = self.roof.inf_over_ball(&self.system, &ball.base);
        if !(s + rho <= inf) {
            return Err(Error::DirtyFlowBox {
                reason: format!(
                    "height window reaches {} but the roof dips to {inf} over the ball",
                    s + rho
                ),
            });
        }
        Ok(inf)
    }

    /// True when the flow point lies in the box, read in the chart:
    /// base in the ball and height within `rho` of the center height.
    pub fn box_contains(&self, ball: &FlowBall, p: FlowPoint) -> bool {
        ball.base.contains(&self.system, p.base)
            && (p.height - ball.center_height).abs() <= ball.rho
    }

    /// Measure of a clean flow box: `mu(base ball) * 2 rho / mean roof`.
    ///
    /// `base_measure` is the base-ball measure, estimated by the caller.
    /// Under `Lenient` a dirty box falls back to counting `flow_samples`
    /// inside the truncated cylinder.
    pub fn flow_ball_measure(
        &self,
        ball: &FlowBall,
        base_measure: f64,
        flow_samples: &[FlowPoint],
        strictness: Strictness,
    ) -> Result<f64> {
        match self.check_clean(ball) {
            Ok(_) => Ok(base_measure * 2.0 * ball.rho / self.mean_roof),
            Err(e) => match strictness {
                Strictness::Strict => Err(e),
                Strictness::Lenient => {
                    if flow_samples.is_empty() {
                        return Err(Error::EmptySample);
                    }
                    let hits =
                        flow_samples.iter().filter(|p| self.box_contains(ball, **p)).count();
                    Ok(hits as f64 / flow_samples.len() as f64)
                }
            },
        }
    }
}

/// `count` samples of the flow invariant measure.
///
/// Base points come from the invariant sampler; each is accepted with
/// probability `r(y) / roof bound` (clamped to one), which tilts the base
/// marginal by the roof, and the height is then uniform in `[0, r(y))`.
pub fn sample_flow_invariant(
    suspension: &Suspension,
    master_seed: u64,
    count: usize,
) -> Result<Vec<FlowPoint>> {
    if count == 0 {
        return Err(Error::EmptySample);
    }
    let system = *suspension.system();
    // Orbit blocks are exchangeable, so truncating the accepted list to
    // `count` is unbiased. A stratified sweep would not be: it visits the
    // domain in order, and cutting it short drops one end of the domain.
    let sampler = Sampler::Orbit;
    let accept_rate = (suspension.mean_roof() / suspension.roof_bound()).min(1.0);
    let mut out: Vec<FlowPoint> = Vec::with_capacity(count);
    for round in 0..64u64 {
        let missing = count - out.len();
        let draw = ((missing as f64 / accept_rate) * 1.25).ceil() as usize + 64;
        let blocks = systems::scan_samples(
            &system,
            sampler,
            &SamplerConfig::default(),
            seeds::mix(master_seed, seeds::FLOW_SAMPLE.wrapping_add(round)),
            draw,
            |bi| (seeds::stream(master_seed, seeds::FLOW_SAMPLE, (round << 32) | bi), Vec::new()),
            |(rng, acc): &mut (ChaCha8Rng, Vec<FlowPoint>), p| {
                let r = suspension.roof_value(p);
                let u: f64 = rng.gen();
                if u * suspension.roof_bound() < r {
                    let height = (rng.gen::<f64>() * r).min(r * (1.0 - f64::EPSILON));
                    acc.push(FlowPoint { base: p, height });
                } else {
                    // Keep the height draw aligned so acceptance does not
                    // shift the stream consumed by later samples.
                    let _ = rng.next_u64();
                }
            },
        )?;
        for (_, mut block) in blocks {
            let room = count - out.len();
            block.truncate(room);
            out.append(&mut block);
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(Error::EmptySample)
}

/// A flow trajectory start drawn from the flow invariant measure, exposed as
/// an [`Orbit`] plus a starting height so long-horizon scans stay accurate
/// for every base system.
pub struct FlowStart {
    pub orbit: Orbit,
    pub height: f64,
}

/// Draws one flow-invariant start, keyed by `(master_seed, index)`.
pub fn flow_start(suspension: &Suspension, master_seed: u64, index: u64) -> Result<FlowStart> {
    let system = suspension.system();
    for retry in 0..256u64 {
        let mut rng = seeds::stream(master_seed, seeds::STARTS, index | (retry << 48));
        let mut orbit = Orbit::random(system, &mut rng);
        // Decorrelate from the seed grid, restarting on singular contact.
        match orbit.advance(64) {
            Ok(()) => {}
            Err(Error::SingularOrbit { .. }) => continue,
            Err(e) => return Err(e),
        }
        let r = suspension.roof_value(orbit.point());
        let u: f64 = rng.gen();
        if u * suspension.roof_bound() < r {
            let height = (rng.gen::<f64>() * r).min(r * (1.0 - f64::EPSILON));
            return Ok(FlowStart { orbit, height });
        }
    }
    Err(Error::EmptySample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_roof_is_exact() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::constant(2.0).unwrap(), 1)
            .unwrap();
        assert_eq!(s.mean_roof(), 2.0);
        assert_eq!(s.mean_roof_ci(), 0.0);
        assert_eq!(s.roof_bound(), 2.0);
    }

    #[test]
    fn constant_roof_rejects_nonpositive() {
        assert!(RoofFunction::constant(0.0).is_err());
        assert!(RoofFunction::constant(-1.0).is_err());
    }

    #[test]
    fn incompatible_roofs_rejected() {
        assert!(build_suspension(BaseSystem::doubling(), RoofFunction::log_lorenz(), 1).is_err());
        assert!(build_suspension(
            BaseSystem::lorenz2d_default(),
            RoofFunction::affine(1.0, 0.5).unwrap(),
            1
        )
        .is_err());
    }

    #[test]
    fn negative_affine_roof_rejected() {
        // 1 - 3x goes negative on [0,1].
        let r = RoofFunction::affine(1.0, -3.0).unwrap();
        assert!(matches!(
            build_suspension(BaseSystem::doubling(), r, 1),
            Err(Error::NonPositiveRoof { .. })
        ));
    }

    #[test]
    fn affine_mean_roof_matches_lebesgue_integral() {
        // Lebesgue mean of 1 + x on [0,1] is 3/2.
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::affine(1.0, 1.0).unwrap(), 3)
            .unwrap();
        assert!((s.mean_roof() - 1.5).abs() < 1e-3, "mean {}", s.mean_roof());
        assert_abs_diff_eq!(s.roof_bound(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn log_roof_builds_on_lorenz() {
        let s = build_suspension(BaseSystem::lorenz1d_default(), RoofFunction::log_lorenz(), 5)
            .unwrap();
        assert!(s.mean_roof() > 0.0 && s.mean_roof().is_finite());
        assert!(s.roof_bound() > s.mean_roof());
    }

    #[test]
    fn advance_crosses_the_roof_correctly() {
        // Constant roof 1 over the doubling map: time t from (x, 0) lands at
        // (2^floor(t) x, frac(t)).
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::constant(1.0).unwrap(), 1)
            .unwrap();
        let p = s.flow_point(Point::One(0.3), 0.0).unwrap();
        let q = s.advance(p, 2.25).unwrap();
        assert_abs_diff_eq!(q.base.x(), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(q.height, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn advance_is_a_semigroup_on_plain_orbits() {
        let s = build_suspension(
            BaseSystem::lsv(0.5).unwrap(),
            RoofFunction::affine(0.5, 1.0).unwrap(),
            1,
        )
        .unwrap();
        let p = s.flow_point(Point::One(0.37), 0.1).unwrap();
        let ab = s.advance(s.advance(p, 1.3).unwrap(), 2.9).unwrap();
        let once = s.advance(p, 4.2).unwrap();
        assert_abs_diff_eq!(ab.base.x(), once.base.x(), epsilon = 1e-9);
        assert_abs_diff_eq!(ab.height, once.height, epsilon = 1e-9);
    }

    #[test]
    fn flow_point_validation() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::constant(1.0).unwrap(), 1)
            .unwrap();
        assert!(s.flow_point(Point::One(0.3), 0.5).is_ok());
        assert!(s.flow_point(Point::One(0.3), 1.0).is_err());
        assert!(s.flow_point(Point::One(0.3), -0.1).is_err());
        assert!(s.flow_point(Point::One(1.5), 0.1).is_err());
    }

    #[test]
    fn chart_distance_is_the_max_metric() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::constant(2.0).unwrap(), 1)
            .unwrap();
        let a = s.flow_point(Point::One(0.1), 0.5).unwrap();
        let b = s.flow_point(Point::One(0.9), 0.8).unwrap();
        assert_abs_diff_eq!(s.chart_distance(a, b), 0.3, epsilon = 1e-12);
        let c = s.flow_point(Point::One(0.85), 0.5).unwrap();
        assert_abs_diff_eq!(s.chart_distance(a, c), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn cleanliness_checks_both_conditions() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::affine(1.0, 1.0).unwrap(), 1)
            .unwrap();
        // Roof over B_0.05(0.5) dips to 1.45.
        let ok = FlowBall::new(Point::One(0.5), 0.7, 0.05).unwrap();
        let inf = s.check_clean(&ok).unwrap();
        assert_abs_diff_eq!(inf, 1.45, epsilon = 1e-12);
        let low = FlowBall::new(Point::One(0.5), 0.03, 0.05).unwrap();
        assert!(matches!(s.check_clean(&low), Err(Error::DirtyFlowBox { .. })));
        let high = FlowBall::new(Point::One(0.5), 1.42, 0.05).unwrap();
        assert!(matches!(s.check_clean(&high), Err(Error::DirtyFlowBox { .. })));
    }

    #[test]
    fn roof_inf_handles_the_wrap_point() {
        let r = RoofFunction::affine(1.0, 1.0).unwrap();
        let sys = BaseSystem::doubling();
        // Ball around 0.02 wraps; the inf picks up values near x = 0.
        let ball = BaseBall::new(Point::One(0.02), 0.05).unwrap();
        assert_abs_diff_eq!(r.inf_over_ball(&sys, &ball), 1.0, epsilon = 1e-12);
        let plain = BaseBall::new(Point::One(0.5), 0.05).unwrap();
        assert_abs_diff_eq!(r.inf_over_ball(&sys, &plain), 1.45, epsilon = 1e-12);
    }

    #[test]
    fn log_roof_inf_over_ball() {
        let r = RoofFunction::log_lorenz();
        let sys = BaseSystem::lorenz1d_default();
        let ball = BaseBall::new(Point::One(0.5), 0.1).unwrap();
        assert_abs_diff_eq!(r.inf_over_ball(&sys, &ball), -(0.6f64.ln()), epsilon = 1e-12);
        let edge = BaseBall::new(Point::One(0.95), 0.1).unwrap();
        assert_abs_diff_eq!(r.inf_over_ball(&sys, &edge), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn clean_box_measure_is_the_product() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::affine(1.0, 1.0).unwrap(), 1)
            .unwrap();
        let ball = FlowBall::new(Point::One(0.5), 0.7, 0.05).unwrap();
        let m = s.flow_ball_measure(&ball, 0.1, &[], Strictness::Strict).unwrap();
        assert!((m - 0.1 * 0.1 / 1.5).abs() < 1e-5, "measure {m}");
        let dirty = FlowBall::new(Point::One(0.5), 0.03, 0.05).unwrap();
        assert!(s.flow_ball_measure(&dirty, 0.1, &[], Strictness::Strict).is_err());
    }

    #[test]
    fn flow_samples_have_the_right_height_marginal() {
        // Under the affine roof 1 + x on the doubling base, the invariant
        // flow measure puts mass 1/3 above height 1:
        // integral of (r(x) - 1) dx over E(r) = (1/2) / (3/2).
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::affine(1.0, 1.0).unwrap(), 7)
            .unwrap();
        let pts = sample_flow_invariant(&s, 11, 120_000).unwrap();
        for p in &pts {
            assert!(p.height >= 0.0 && p.height < s.roof_value(p.base));
        }
        let above = pts.iter().filter(|p| p.height > 1.0).count() as f64 / pts.len() as f64;
        assert!((above - 1.0 / 3.0).abs() < 0.01, "mass above 1: {above}");
    }

    #[test]
    fn flow_samples_cover_dirty_boxes() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::affine(1.0, 1.0).unwrap(), 7)
            .unwrap();
        let pts = sample_flow_invariant(&s, 13, 120_000).unwrap();
        // Box poking above the roof inf: lenient MC against the truncated
        // cylinder mass, integral over the ball of min(s+rho, r) - (s-rho).
        let ball = FlowBall::new(Point::One(0.5), 1.44, 0.05).unwrap();
        assert!(s.check_clean(&ball).is_err());
        let m = s.flow_ball_measure(&ball, 0.1, &pts, Strictness::Lenient).unwrap();
        // Exact cylinder mass: for x in [0.45, 0.55], min(1.49, 1+x) - 1.39.
        let mut quad = 0.0;
        let n = 10_000;
        for i in 0..n {
            let x = 0.45 + 0.1 * (i as f64 + 0.5) / n as f64;
            quad += (1.0 + x).min(1.49) - 1.39;
        }
        quad = quad * 0.1 / n as f64 / 1.5;
        assert!((m - quad).abs() < 0.002, "mc {m} vs quadrature {quad}");
    }

    #[test]
    fn flow_sampling_is_deterministic() {
        let s = build_suspension(BaseSystem::lorenz1d_default(), RoofFunction::log_lorenz(), 3)
            .unwrap();
        let a = sample_flow_invariant(&s, 21, 5_000).unwrap();
        let b = sample_flow_invariant(&s, 21, 5_000).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.base, q.base);
            assert_eq!(p.height, q.height);
        }
    }

    #[test]
    fn flow_starts_are_valid_and_distinct() {
        let s = build_suspension(BaseSystem::doubling(), RoofFunction::affine(1.0, 1.0).unwrap(), 9)
            .unwrap();
        let a = flow_start(&s, 31, 0).unwrap();
        let b = flow_start(&s, 31, 1).unwrap();
        assert!(a.height >= 0.0 && a.height < s.roof_value(a.orbit.point()));
        assert_ne!(a.orbit.point(), b.orbit.point());
    }
}
