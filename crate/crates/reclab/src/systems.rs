//! Built-in base maps, their metrics, and invariant-measure sampling.
//!
//! Four systems are provided: the doubling map on the circle, the
//! intermittent family `x(1 + (2x)^alpha)` / `2x - 1` on the unit interval,
//! and one- and two-dimensional Lorenz-type expanding maps on `[-1,1]` and
//! `[-1,1]^2`. Invariant measures are realized by long-orbit sampling with
//! burn-in and stride; a jittered stratified sampler is available for the
//! doubling map, whose invariant measure is Lebesgue.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds;

/// Distance below which a point counts as lying on the singular set.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Orbit steps discarded before sampling starts.
pub const DEFAULT_BURN_IN: u64 = 1_000;

/// Orbit steps between retained samples.
pub const DEFAULT_STRIDE: u64 = 10;

/// Samples per parallel work block. Fixed so that results are independent of
/// the worker count.
pub(crate) const SAMPLE_BLOCK: usize = 8_192;

const SINGULAR_RETRIES: u64 = 32;

/// A point of a base system's domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    One(f64),
    Two(f64, f64),
}

impl Point {
    pub fn dim(self) -> usize {
        match self {
            Point::One(_) => 1,
            Point::Two(..) => 2,
        }
    }

    /// First coordinate.
    pub fn x(self) -> f64 {
        match self {
            Point::One(x) | Point::Two(x, _) => x,
        }
    }

    pub fn y(self) -> Option<f64> {
        match self {
            Point::One(_) => None,
            Point::Two(_, y) => Some(y),
        }
    }

    pub fn coords(self) -> Vec<f64> {
        match self {
            Point::One(x) => vec![x],
            Point::Two(x, y) => vec![x, y],
        }
    }

    pub fn is_finite(self) -> bool {
        match self {
            Point::One(x) => x.is_finite(),
            Point::Two(x, y) => x.is_finite() && y.is_finite(),
        }
    }
}

/// A closed metric ball in a base system's domain.
#[derive(Clone, Copy, Debug)]
pub struct BaseBall {
    pub center: Point,
    pub radius: f64,
}

impl BaseBall {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() || !center.is_finite() {
            return Err(Error::Domain(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(BaseBall { center, radius })
    }

    pub fn contains(&self, system: &BaseSystem, p: Point) -> bool {
        system.distance(self.center, p) <= self.radius
    }
}

/// One of the built-in base maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseSystem {
    /// `x -> 2x mod 1` on the circle `[0,1)` with the circle metric.
    Doubling,
    /// `x -> x(1 + (2x)^alpha)` on `[0,1/2)`, `2x - 1` on `[1/2,1]`, with a
    /// neutral fixed point at 0. `0 < alpha < 1` keeps the invariant density
    /// `~ x^{-alpha}` integrable.
    Lsv { alpha: f64 },
    /// `x -> sign(x)(b|x|^alpha - 1)` on `[-1,1]` minus the singular point 0.
    Lorenz1d { alpha: f64, b: f64 },
    /// Expanding-times-contracting skew product on `[-1,1]^2`:
    /// `(x,y) -> (sign(x)(b|x|^alpha - 1), lambda y + c sign(x))`.
    Lorenz2d { alpha: f64, b: f64, lambda: f64, c: f64 },
}

impl BaseSystem {
    pub fn doubling() -> Self {
        BaseSystem::Doubling
    }

    pub fn lsv(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!(
                "lsv exponent must lie in (0,1), got {alpha}"
            )));
        }
        Ok(BaseSystem::Lsv { alpha })
    }

    pub fn lorenz1d(alpha: f64, b: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) || !(b > 1.0 && b <= 2.0) {
            return Err(Error::Domain(format!(
                "lorenz1d needs alpha in (0,1) and b in (1,2], got alpha={alpha}, b={b}"
            )));
        }
        Ok(BaseSystem::Lorenz1d { alpha, b })
    }

    /// The interval Lorenz map with the default parameters alpha=0.7, b=1.8.
    pub fn lorenz1d_default() -> Self {
        BaseSystem::Lorenz1d { alpha: 0.7, b: 1.8 }
    }

    pub fn lorenz2d(alpha: f64, b: f64, lambda: f64, c: f64) -> Result<Self> {
        BaseSystem::lorenz1d(alpha, b)?;
        // Images of the two halves must land in the square and stay disjoint.
        if !(lambda > 0.0 && lambda < c && c + lambda <= 1.0) {
            return Err(Error::Domain(format!(
                "lorenz2d needs 0 < lambda < c and c + lambda <= 1, got lambda={lambda}, c={c}"
            )));
        }
        Ok(BaseSystem::Lorenz2d { alpha, b, lambda, c })
    }

    /// The planar Lorenz map with the default parameters
    /// alpha=0.7, b=1.8, lambda=0.3, c=0.6.
    pub fn lorenz2d_default() -> Self {
        BaseSystem::Lorenz2d { alpha: 0.7, b: 1.8, lambda: 0.3, c: 0.6 }
    }

    pub fn name(&self) -> String {
        match self {
            BaseSystem::Doubling => "doubling".into(),
            BaseSystem::Lsv { alpha } => format!("lsv({alpha})"),
            BaseSystem::Lorenz1d { alpha, b } => format!("lorenz1d({alpha},{b})"),
            BaseSystem::Lorenz2d { alpha, b, lambda, c } => {
                format!("lorenz2d({alpha},{b},{lambda},{c})")
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BaseSystem::Lorenz2d { .. } => 2,
            _ => 1,
        }
    }

    pub fn in_domain(&self, p: Point) -> bool {
        match (self, p) {
            (BaseSystem::Doubling, Point::One(x)) => (0.0..1.0).contains(&x),
            (BaseSystem::Lsv { .. }, Point::One(x)) => (0.0..=1.0).contains(&x),
            (BaseSystem::Lorenz1d { .. }, Point::One(x)) => (-1.0..=1.0).contains(&x),
            (BaseSystem::Lorenz2d { .. }, Point::Two(x, y)) => {
                (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y)
            }
            _ => false,
        }
    }

    /// Distance to the singular set; infinite for systems without one.
    pub fn singular_distance(&self, p: Point) -> f64 {
        match self {
            BaseSystem::Lorenz1d { .. } | BaseSystem::Lorenz2d { .. } => p.x().abs(),
            _ => f64::INFINITY,
        }
    }

    /// The metric of the system: circle distance for the doubling map,
    /// absolute difference on intervals, max of coordinate differences on
    /// the square.
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        match (self, a, b) {
            (BaseSystem::Doubling, Point::One(p), Point::One(q)) => {
                let d = (p - q).abs();
                d.min(1.0 - d)
            }
            (BaseSystem::Lsv { .. } | BaseSystem::Lorenz1d { .. }, Point::One(p), Point::One(q)) => {
                (p - q).abs()
            }
            (BaseSystem::Lorenz2d { .. }, Point::Two(px, py), Point::Two(qx, qy)) => {
                (px - qx).abs().max((py - qy).abs())
            }
            _ => f64::NAN,
        }
    }

    /// One application of the map. Errors with `SingularOrbit` when the
    /// argument lies within `SINGULAR_TOL` of the singular set.
    pub fn step(&self, p: Point) -> Result<Point> {
        let sd = self.singular_distance(p);
        if sd <= SINGULAR_TOL {
            return Err(Error::SingularOrbit { distance: sd, tol: SINGULAR_TOL });
        }
        match (self, p) {
            (BaseSystem::Doubling, Point::One(x)) => {
                let y = 2.0 * x;
                Ok(Point::One(if y >= 1.0 { y - 1.0 } else { y }))
            }
            (BaseSystem::Lsv { alpha }, Point::One(x)) => {
                if x < 0.5 {
                    // Exact sqrt rewrites for the two common exponents: sqrt is
                    // correctly rounded and several times cheaper than powf on
                    // the neutral-fixed-point climb, the hot loop of every
                    // return-time statistic.
                    let z = 2.0 * x;
                    let pow = if *alpha == 0.5 {
                        z.sqrt()
                    } else if *alpha == 0.25 {
                        z.sqrt().sqrt()
                    } else {
                        z.powf(*alpha)
                    };
                    Ok(Point::One(x * (1.0 + pow)))
                } else {
                    Ok(Point::One(2.0 * x - 1.0))
                }
            }
            (BaseSystem::Lorenz1d { alpha, b }, Point::One(x)) => {
                Ok(Point::One(lorenz_branch(x, *alpha, *b)))
            }
            (BaseSystem::Lorenz2d { alpha, b, lambda, c }, Point::Two(x, y)) => {
                let sx = if x >= 0.0 { 1.0 } else { -1.0 };
                Ok(Point::Two(lorenz_branch(x, *alpha, *b), lambda * y + c * sx))
            }
            _ => Err(Error::Domain(format!(
                "point dimension {} does not match system {}",
                p.dim(),
                self.name()
            ))),
        }
    }

    /// The lowest-variance admissible sampler for the invariant measure:
    /// stratified Lebesgue where the invariant measure is Lebesgue, long-orbit
    /// sampling everywhere else.
    pub fn natural_sampler(&self) -> Sampler {
        match self {
            BaseSystem::Doubling => Sampler::StratifiedLebesgue,
            _ => Sampler::Orbit,
        }
    }

    /// Uniform reference start in the domain (not the invariant measure).
    pub fn random_start(&self, rng: &mut ChaCha8Rng) -> Point {
        match self {
            BaseSystem::Doubling | BaseSystem::Lsv { .. } => Point::One(rng.gen::<f64>()),
            BaseSystem::Lorenz1d { .. } => loop {
                let x = 2.0 * rng.gen::<f64>() - 1.0;
                if x.abs() > 2.0 * SINGULAR_TOL {
                    break Point::One(x);
                }
            },
            BaseSystem::Lorenz2d { .. } => loop {
                let x = 2.0 * rng.gen::<f64>() - 1.0;
                let y = 2.0 * rng.gen::<f64>() - 1.0;
                if x.abs() > 2.0 * SINGULAR_TOL {
                    break Point::Two(x, y);
                }
            },
        }
    }
}

fn lorenz_branch(x: f64, alpha: f64, b: f64) -> f64 {
    let s = if x >= 0.0 { 1.0 } else { -1.0 };
    s * (b * x.abs().powf(alpha) - 1.0)
}

/// Applies the map `n` times with plain floating-point arithmetic.
///
/// For the doubling map this is exact binary arithmetic, which also means the
/// orbit of any f64 input reaches the fixed point 0 within about 53 steps;
/// statistically long doubling orbits must go through [`Orbit`], which
/// refreshes the lost low bits from a seeded stream.
pub fn iterate(system: &BaseSystem, x: Point, n: u64) -> Result<Point> {
    if !system.in_domain(x) {
        return Err(Error::Domain(format!(
            "point outside the domain of {}",
            system.name()
        )));
    }
    let mut p = x;
    for _ in 0..n {
        p = system.step(p)?;
    }
    Ok(p)
}

#[derive(Clone, Debug)]
enum OrbitState {
    /// Doubling-map state: a 128-bit binary expansion of the point.
    Bits(u128),
    Real(Point),
}

/// A forward trajectory usable for statistically long runs.
///
/// Multiplication by two is exact in binary, so a bare f64 orbit of the
/// doubling map shifts its mantissa out and reaches the fixed point 0 within
/// about 53 steps. The orbit therefore keeps the doubling state as a 128-bit
/// fixed-point fraction and refreshes the vacated low bits from a seeded
/// ChaCha stream. This reproduces the orbit of a Lebesgue-random point with
/// an infinite binary expansion, deterministically in the seed; the visible
/// position is the top 53 bits. Other systems keep a plain f64 state.
#[derive(Clone, Debug)]
pub struct Orbit {
    system: BaseSystem,
    state: OrbitState,
    tail: ChaCha8Rng,
    reservoir: u64,
    bits_left: u8,
}

impl Orbit {
    /// Starts at `p`; `tail_seed` keys the doubling-map bit refresh.
    pub fn from_point(system: &BaseSystem, p: Point, tail_seed: u64) -> Result<Orbit> {
        if !system.in_domain(p) {
            return Err(Error::Domain(format!(
                "point outside the domain of {}",
                system.name()
            )));
        }
        let mut tail = seeds::stream(tail_seed, seeds::ORBIT_TAIL, 0);
        let state = match system {
            BaseSystem::Doubling => {
                // Continue the 53-bit float as a random point sharing its
                // leading bits; zero fill would parade a block of zeros
                // through the visible window around steps 12 to 127.
                let hi = (p.x() * 2f64.powi(64)) as u64;
                OrbitState::Bits(((hi as u128) << 64) | tail.next_u64() as u128)
            }
            _ => OrbitState::Real(p),
        };
        Ok(Orbit { system: *system, state, tail, reservoir: 0, bits_left: 0 })
    }

    /// Starts at a uniform random point of the domain, drawing the start and
    /// the tail key from `rng`.
    pub fn random(system: &BaseSystem, rng: &mut ChaCha8Rng) -> Orbit {
        let state = match system {
            BaseSystem::Doubling => {
                OrbitState::Bits(((rng.next_u64() as u128) << 64) | rng.next_u64() as u128)
            }
            _ => OrbitState::Real(system.random_start(rng)),
        };
        Orbit {
            system: *system,
            state,
            tail: seeds::stream(rng.next_u64(), seeds::ORBIT_TAIL, 0),
            reservoir: 0,
            bits_left: 0,
        }
    }

    pub fn system(&self) -> &BaseSystem {
        &self.system
    }

    /// Current position. For the doubling map this is the top 53 bits of the
    /// expansion, an exact dyadic in `[0, 1)`.
    pub fn point(&self) -> Point {
        match &self.state {
            OrbitState::Bits(frac) => Point::One(((frac >> 75) as f64) * 2f64.powi(-53)),
            OrbitState::Real(p) => *p,
        }
    }

    pub fn step(&mut self) -> Result<()> {
        match &mut self.state {
            OrbitState::Bits(frac) => {
                if self.bits_left == 0 {
                    self.reservoir = self.tail.next_u64();
                    self.bits_left = 64;
                }
                let bit = (self.reservoir >> 63) as u128;
                self.reservoir <<= 1;
                self.bits_left -= 1;
                *frac = (*frac << 1) | bit;
                Ok(())
            }
            OrbitState::Real(p) => {
                let next = self.system.step(*p)?;
                // Exact landings on the boundary fixed points of the
                // intermittent map (0 via 2x-1 at x=1/2, 1 via x=1) would trap
                // the sampler on a measure-zero orbit; treat them like
                // singular-set contact so the block restarts.
                if let (BaseSystem::Lsv { .. }, Point::One(v)) = (&self.system, next) {
                    if v == 0.0 || v == 1.0 {
                        return Err(Error::SingularOrbit { distance: 0.0, tol: SINGULAR_TOL });
                    }
                }
                *p = next;
                Ok(())
            }
        }
    }

    pub fn advance(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }
}

/// Burn-in and stride of the long-orbit sampler.
#[derive(Clone, Copy, Debug)]
pub struct SamplerConfig {
    pub burn_in: u64,
    pub stride: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { burn_in: DEFAULT_BURN_IN, stride: DEFAULT_STRIDE }
    }
}

/// How invariant-measure samples are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// Long-orbit sampling with burn-in and stride; works for every system.
    Orbit,
    /// Jittered stratified sampling `x_i = (i + u_i)/n` of Lebesgue measure.
    /// Exact, and far lower variance for integral estimates, but valid only
    /// for the doubling map, whose invariant measure is Lebesgue.
    StratifiedLebesgue,
}

/// Runs `visit` over `count` invariant-measure samples in fixed-size blocks
/// and returns the per-block accumulators in block order. `make` receives the
/// block index so accumulators can carry block-keyed state.
pub(crate) fn scan_samples<A, M, V>(
    system: &BaseSystem,
    sampler: Sampler,
    cfg: &SamplerConfig,
    master_seed: u64,
    count: usize,
    make: M,
    visit: V,
) -> Result<Vec<A>>
where
    A: Send,
    M: Fn(u64) -> A + Sync,
    V: Fn(&mut A, Point) + Sync,
{
    if count == 0 {
        return Err(Error::EmptySample);
    }
    if sampler == Sampler::StratifiedLebesgue && *system != BaseSystem::Doubling {
        return Err(Error::Domain(format!(
            "stratified Lebesgue sampling is only valid for the doubling map, not {}",
            system.name()
        )));
    }
    let blocks = count.div_ceil(SAMPLE_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|bi| {
            let len = SAMPLE_BLOCK.min(count - bi * SAMPLE_BLOCK);
            let mut acc = make(bi as u64);
            match sampler {
                Sampler::Orbit => {
                    orbit_block(system, cfg, master_seed, bi as u64, len, |p| visit(&mut acc, p))?
                }
                Sampler::StratifiedLebesgue => {
                    let mut rng = seeds::stream(master_seed, seeds::STRATIFIED, bi as u64);
                    let n = count as f64;
                    for k in 0..len {
                        let i = (bi * SAMPLE_BLOCK + k) as f64;
                        visit(&mut acc, Point::One((i + rng.gen::<f64>()) / n));
                    }
                }
            }
            Ok(acc)
        })
        .collect()
}

fn orbit_block(
    system: &BaseSystem,
    cfg: &SamplerConfig,
    master: u64,
    block: u64,
    len: usize,
    mut visit: impl FnMut(Point),
) -> Result<()> {
    let mut produced = 0usize;
    for retry in 0..SINGULAR_RETRIES {
        let mut rng = seeds::stream(master, seeds::INVARIANT, block | (retry << 48));
        let mut orbit = Orbit::random(system, &mut rng);
        let run = (|| -> Result<()> {
            orbit.advance(cfg.burn_in)?;
            while produced < len {
                visit(orbit.point());
                produced += 1;
                if produced < len {
                    orbit.advance(cfg.stride)?;
                }
            }
            Ok(())
        })();
        match run {
            Ok(()) => return Ok(()),
            Err(Error::SingularOrbit { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SingularOrbit { distance: 0.0, tol: SINGULAR_TOL })
}

/// `count` samples of the invariant measure via long-orbit sampling with the
/// default burn-in and stride.
pub fn sample_invariant(system: &BaseSystem, master_seed: u64, count: usize) -> Result<Vec<Point>> {
    sample_points(system, Sampler::Orbit, &SamplerConfig::default(), master_seed, count)
}

pub fn sample_points(
    system: &BaseSystem,
    sampler: Sampler,
    cfg: &SamplerConfig,
    master_seed: u64,
    count: usize,
) -> Result<Vec<Point>> {
    let blocks = scan_samples(
        system,
        sampler,
        cfg,
        master_seed,
        count,
        |_| Vec::new(),
        |acc: &mut Vec<Point>, p| acc.push(p),
    )?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Empirical measure of the closed ball, with a 95% CI half-width.
pub fn ball_measure(
    system: &BaseSystem,
    center: Point,
    radius: f64,
    samples: &[Point],
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let ball = BaseBall::new(center, radius)?;
    let hits = samples.iter().filter(|p| ball.contains(system, **p)).count();
    Ok(binomial_estimate(hits as u64, samples.len() as u64))
}

pub(crate) fn binomial_estimate(hits: u64, n: u64) -> (f64, f64) {
    let p = hits as f64 / n as f64;
    (p, 1.96 * (p * (1.0 - p) / n as f64).sqrt())
}

/// Cumulative measure of closed balls around a fixed center on a radius grid.
#[derive(Clone, Debug)]
pub struct MeasureProfile {
    center: Point,
    radii: Vec<f64>,
    values: Vec<f64>,
    sample_count: usize,
}

impl MeasureProfile {
    /// Validates that radii are strictly increasing and positive and that
    /// values are nondecreasing in `[0, 1]`.
    pub fn new(center: Point, radii: Vec<f64>, values: Vec<f64>, sample_count: usize) -> Result<Self> {
        if radii.is_empty() || radii.len() != values.len() {
            return Err(Error::Domain("profile needs matching nonempty radii and values".into()));
        }
        for i in 0..radii.len() {
            if !(radii[i] > 0.0) || !radii[i].is_finite() {
                return Err(Error::Domain(format!("profile radius {} not positive", radii[i])));
            }
            if i > 0 && radii[i] <= radii[i - 1] {
                return Err(Error::Domain("profile radii must be strictly increasing".into()));
            }
            if !(0.0..=1.0).contains(&values[i]) || (i > 0 && values[i] < values[i - 1]) {
                return Err(Error::Domain("profile values must be nondecreasing in [0,1]".into()));
            }
        }
        Ok(MeasureProfile { center, radii, values, sample_count })
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Smallest grid radius whose value reaches `y`; `None` when `y` exceeds
    /// the largest recorded value.
    pub fn grid_inverse(&self, y: f64) -> Option<f64> {
        let i = self.values.partition_point(|v| *v < y);
        self.radii.get(i).copied()
    }

    /// Piecewise-linear profile value at any distance `0 <= d <= max radius`,
    /// interpolating from the origin below the first grid radius.
    pub fn value_at(&self, d: f64) -> Result<f64> {
        if d < 0.0 || !d.is_finite() {
            return Err(Error::Domain(format!("profile queried at invalid distance {d}")));
        }
        if d > self.max_radius() {
            return Err(Error::ProfileRangeExceeded { query: d, max: self.max_radius() });
        }
        let i = self.radii.partition_point(|r| *r < d);
        let (r0, v0) = if i == 0 { (0.0, 0.0) } else { (self.radii[i - 1], self.values[i - 1]) };
        if i == self.radii.len() {
            return Ok(self.max_value());
        }
        let (r1, v1) = (self.radii[i], self.values[i]);
        Ok(v0 + (v1 - v0) * ((d - r0) / (r1 - r0)))
    }

    /// Generalized inverse of [`MeasureProfile::value_at`]: the smallest
    /// distance whose interpolated value reaches `y`.
    pub fn inverse_at(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::Domain(format!("profile inverse queried at invalid value {y}")));
        }
        if y > self.max_value() {
            return Err(Error::ProfileRangeExceeded { query: y, max: self.max_value() });
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        let i = self.values.partition_point(|v| *v < y);
        let (r0, v0) = if i == 0 { (0.0, 0.0) } else { (self.radii[i - 1], self.values[i - 1]) };
        let (r1, v1) = (self.radii[i], self.values[i]);
        // i is minimal with values[i] >= y > 0, so v1 > v0 on this segment.
        Ok(r0 + (r1 - r0) * ((y - v0) / (v1 - v0)))
    }
}

/// Builds a measure profile from a sample slice.
pub fn measure_profile(
    system: &BaseSystem,
    center: Point,
    radii: &[f64],
    samples: &[Point],
) -> Result<MeasureProfile> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut counts = vec![0u64; radii.len()];
    for p in samples {
        profile_visit(system, center, radii, &mut counts, *p);
    }
    profile_from_counts(center, radii, counts, samples.len())
}

/// Builds a measure profile by streaming `count` fresh samples, without
/// materializing them.
pub fn measure_profile_sampled(
    system: &BaseSystem,
    sampler: Sampler,
    cfg: &SamplerConfig,
    master_seed: u64,
    count: usize,
    center: Point,
    radii: &[f64],
) -> Result<MeasureProfile> {
    let blocks = scan_samples(
        system,
        sampler,
        cfg,
        master_seed,
        count,
        |_| vec![0u64; radii.len()],
        |acc, p| profile_visit(system, center, radii, acc, p),
    )?;
    let mut counts = vec![0u64; radii.len()];
    for b in blocks {
        for (c, v) in counts.iter_mut().zip(b) {
            *c += v;
        }
    }
    profile_from_counts(center, radii, counts, count)
}

fn profile_visit(system: &BaseSystem, center: Point, radii: &[f64], counts: &mut [u64], p: Point) {
    let d = system.distance(center, p);
    let i = radii.partition_point(|r| *r < d);
    if i < counts.len() {
        counts[i] += 1;
    }
}

fn profile_from_counts(
    center: Point,
    radii: &[f64],
    counts: Vec<u64>,
    n: usize,
) -> Result<MeasureProfile> {
    let mut cum = 0u64;
    let values = counts
        .into_iter()
        .map(|c| {
            cum += c;
            cum as f64 / n as f64
        })
        .collect();
    MeasureProfile::new(center, radii.to_vec(), values, n)
}

/// Log-spaced radius grid, inclusive of both endpoints.
pub fn log_radii(r_min: f64, r_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_max > r_min) || points < 2 {
        return Err(Error::Domain(format!(
            "log grid needs 0 < r_min < r_max and at least 2 points, got [{r_min}, {r_max}] x {points}"
        )));
    }
    let (a, b) = (r_min.ln(), r_max.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Measure of the closed annulus between radii `r` and `r + eps`, with CI.
pub fn annulus_measure(
    system: &BaseSystem,
    center: Point,
    r: f64,
    eps: f64,
    samples: &[Point],
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(r > 0.0 && eps > 0.0) {
        return Err(Error::Domain(format!("annulus needs r > 0 and eps > 0, got r={r}, eps={eps}")));
    }
    let hits = samples
        .iter()
        .filter(|p| {
            let d = system.distance(center, **p);
            d > r && d <= r + eps
        })
        .count();
    Ok(binomial_estimate(hits as u64, samples.len() as u64))
}

/// Ratio of the annulus measure at width `r^delta` to the ball measure,
/// with a delta-method CI.
pub fn annulus_ratio(
    system: &BaseSystem,
    center: Point,
    r: f64,
    delta: f64,
    samples: &[Point],
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(delta > 1.0) {
        return Err(Error::Domain(format!("annulus exponent must exceed 1, got {delta}")));
    }
    let eps = r.powf(delta);
    let mut in_ball = 0u64;
    let mut in_annulus = 0u64;
    for p in samples {
        let d = system.distance(center, *p);
        if d <= r {
            in_ball += 1;
        } else if d <= r + eps {
            in_annulus += 1;
        }
    }
    if in_ball == 0 {
        return Err(Error::ZeroBallMeasure { radius: r });
    }
    let ratio = in_annulus as f64 / in_ball as f64;
    let ci = if in_annulus == 0 {
        // Rule-of-three upper bound when the annulus is empty.
        3.0 / in_ball as f64
    } else {
        1.96 * ratio * (1.0 / in_annulus as f64 + 1.0 / in_ball as f64).sqrt()
    };
    Ok((ratio, ci))
}

/// Least-squares local dimension of the measure at `center`, with the min and
/// max two-point slopes of `log mu(B_r)` against `log r` as bracket.
#[derive(Clone, Copy, Debug)]
pub struct LocalDimension {
    pub slope: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn local_dimension(
    system: &BaseSystem,
    center: Point,
    radii: &[f64],
    samples: &[Point],
) -> Result<LocalDimension> {
    if radii.len() < 3 {
        return Err(Error::Domain("local dimension needs at least 3 radii".into()));
    }
    let profile = measure_profile(system, center, radii, samples)?;
    local_dimension_of_profile(&profile)
}

pub fn local_dimension_of_profile(profile: &MeasureProfile) -> Result<LocalDimension> {
    let radii = profile.radii();
    let values = profile.values();
    if radii.len() < 3 {
        return Err(Error::Domain("local dimension needs at least 3 radii".into()));
    }
    for (r, v) in radii.iter().zip(values) {
        if *v == 0.0 {
            return Err(Error::ZeroBallMeasure { radius: *r });
        }
    }
    let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let slope = least_squares_slope(&xs, &ys);
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 1..xs.len() {
        let s = (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        lower = lower.min(s);
        upper = upper.max(s);
    }
    Ok(LocalDimension { slope, lower, upper })
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    sxy / sxx
}
