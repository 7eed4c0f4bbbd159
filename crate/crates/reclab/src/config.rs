//! Experiment configuration: strict TOML with unknown-key rejection,
//! cross-field validation, and explicit default resolution.
//!
//! A config names one experiment and fully determines one run. Parsing is
//! two-stage: the keys shared by every experiment (system, seed, output) are
//! extracted first, and the remainder must deserialize exactly into that
//! experiment's payload struct, so an unknown or misspelled key is an error
//! naming the key, not a silently ignored field. After validation every
//! optional field holds its resolved value; serializing the config back out
//! is the "resolved config" echo that run summaries embed.

use crate::error::{Error, Result};
use crate::seeds;
use crate::suspension::RoofFunction;
use crate::systems::{sample_invariant, BaseSystem, Point};
use serde::{Deserialize, Serialize};
use std::path::Path;
use toml::Value;

/// Salt for deriving an orbit-sampled center from the run seed.
const CENTER_SALT: u64 = 0x23;

/// Fields shared by every experiment.
#[derive(Clone, Debug, Serialize)]
pub struct Common {
    pub experiment: String,
    /// Output file stem; defaults to the experiment name.
    pub name: String,
    pub system: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub out_dir: String,
    #[serde(skip)]
    pub base: BaseSystem,
}

/// A center: explicit coordinates, or "orbit" for a burned-in orbit point
/// derived deterministically from the seed. Resolution replaces "orbit" with
/// the concrete point, so echoes always carry numbers.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum CenterSpec {
    Named(String),
    One(f64),
    Two([f64; 2]),
}

impl CenterSpec {
    fn resolve(&mut self, system: &BaseSystem, seed: u64) -> Result<Point> {
        if let CenterSpec::Named(s) = self {
            if s != "orbit" {
                return Err(Error::Config(format!(
                    "center must be a number, a pair, or \"orbit\", got \"{s}\""
                )));
            }
            let p = sample_invariant(system, seeds::mix(seed, CENTER_SALT), 1)?[0];
            *self = match p {
                Point::One(x) => CenterSpec::One(x),
                Point::Two(x, y) => CenterSpec::Two([x, y]),
            };
        }
        let p = match *self {
            CenterSpec::One(x) => Point::One(x),
            CenterSpec::Two([x, y]) => Point::Two(x, y),
            CenterSpec::Named(_) => unreachable!(),
        };
        if !system.in_domain(p) {
            return Err(Error::Config(format!(
                "center {p:?} is outside the domain of {}",
                system.name()
            )));
        }
        Ok(p)
    }

    pub fn point(&self) -> Point {
        match *self {
            CenterSpec::One(x) => Point::One(x),
            CenterSpec::Two([x, y]) => Point::Two(x, y),
            CenterSpec::Named(_) => panic!("center queried before resolution"),
        }
    }
}

// serde cannot combine deny_unknown_fields with flatten, so the roof keys are
// spelled out in each flow experiment and resolved by this shared helper.
fn build_roof(
    roof: &mut Option<String>,
    roof_height: &mut Option<f64>,
    roof_a: &mut Option<f64>,
    roof_b: &mut Option<f64>,
) -> Result<RoofFunction> {
    let kind = roof.get_or_insert_with(|| "constant".into()).clone();
    let reject = |cond: bool, key: &str| {
        if cond {
            Err(Error::Config(format!("key `{key}` does not apply to roof \"{kind}\"")))
        } else {
            Ok(())
        }
    };
    match kind.as_str() {
        "constant" => {
            reject(roof_a.is_some(), "roof_a")?;
            reject(roof_b.is_some(), "roof_b")?;
            RoofFunction::constant(*roof_height.get_or_insert(1.0)).map_err(config_err)
        }
        "affine" => {
            reject(roof_height.is_some(), "roof_height")?;
            RoofFunction::affine(*roof_a.get_or_insert(1.0), *roof_b.get_or_insert(1.0))
                .map_err(config_err)
        }
        "log_lorenz" => {
            reject(roof_height.is_some(), "roof_height")?;
            reject(roof_a.is_some(), "roof_a")?;
            reject(roof_b.is_some(), "roof_b")?;
            Ok(RoofFunction::log_lorenz())
        }
        other => Err(Error::Config(format!(
            "unknown roof \"{other}\"; expected constant, affine, or log_lorenz"
        ))),
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HitSurvival {
    pub center: CenterSpec,
    pub center_height: Option<f64>,
    pub radius: f64,
    pub trajectories: usize,
    pub roof: Option<String>,
    pub roof_height: Option<f64>,
    pub roof_a: Option<f64>,
    pub roof_b: Option<f64>,
    pub y_max: Option<f64>,
    pub plot_points: Option<usize>,
    pub measure_samples: Option<usize>,
    pub tolerance: Option<f64>,
    pub reference: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Poisson {
    pub center: CenterSpec,
    pub center_height: Option<f64>,
    pub radius: f64,
    pub trajectories: usize,
    pub roof: Option<String>,
    pub roof_height: Option<f64>,
    pub roof_a: Option<f64>,
    pub roof_b: Option<f64>,
    pub t_norm: Option<f64>,
    pub buckets: Option<usize>,
    pub measure_samples: Option<usize>,
    pub tolerance: Option<f64>,
    pub reference: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Kac {
    pub center: CenterSpec,
    pub radius: f64,
    pub samples: usize,
    pub measure_samples: Option<usize>,
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Evl {
    /// gumbel | frechet | weibull.
    pub kind: String,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub top: Option<f64>,
    /// map | flow.
    pub form: String,
    pub center: CenterSpec,
    pub center_height: Option<f64>,
    pub roof: Option<String>,
    pub roof_height: Option<f64>,
    pub roof_a: Option<f64>,
    pub roof_b: Option<f64>,
    pub time: f64,
    pub trajectories: usize,
    pub ys: Option<Vec<f64>>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub y_points: Option<usize>,
    pub profile_samples: Option<usize>,
    pub profile_points: Option<usize>,
    pub profile_r_min: Option<f64>,
    pub profile_r_max: Option<f64>,
    pub tolerance: Option<f64>,
    pub reference: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Duality {
    pub kind: String,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub top: Option<f64>,
    pub center: CenterSpec,
    pub center_height: Option<f64>,
    pub roof: Option<String>,
    pub roof_height: Option<f64>,
    pub roof_a: Option<f64>,
    pub roof_b: Option<f64>,
    pub time: f64,
    pub trajectories: usize,
    pub ys: Option<Vec<f64>>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub y_points: Option<usize>,
    pub profile_samples: Option<usize>,
    pub profile_points: Option<usize>,
    pub profile_r_min: Option<f64>,
    pub profile_r_max: Option<f64>,
    /// Agreement budget in combined CI half-widths.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Correlation {
    /// Only "coordinate" is built in.
    pub phi: Option<String>,
    pub psi_lo: Option<f64>,
    pub psi_hi: Option<f64>,
    pub psi_center: Option<CenterSpec>,
    pub psi_radius: Option<f64>,
    pub lags: Option<Vec<u64>>,
    pub samples: usize,
    /// Relative deviation budget against the closed form, where one exists.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ShortReturns {
    pub radius_grid: Vec<f64>,
    pub j: Option<u64>,
    pub j_max: Option<u64>,
    pub samples: usize,
    /// Relative deviation budget against the closed form, where one exists.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TowerTail {
    pub n_grid: Option<Vec<u64>>,
    pub samples: usize,
    pub horizon: Option<u64>,
    /// Deviation budget for the fitted exponent against -1/alpha.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Assumptions {
    pub center: CenterSpec,
    pub radius_grid: Vec<f64>,
    pub delta: Option<f64>,
    pub samples: usize,
    /// Annulus-ratio agreement budget in CI half-widths.
    pub ci_multiples: Option<f64>,
    /// Allowed local-dimension slope deviation from 1 (1-d systems).
    pub dim_tolerance: Option<f64>,
    /// Allowed max/min spread of the regularity ratio (lorenz2d).
    pub bound_ratio: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum Experiment {
    HitSurvival(HitSurvival),
    Poisson(Poisson),
    Kac(Kac),
    Evl(Evl),
    Duality(Duality),
    Correlation(Correlation),
    ShortReturns(ShortReturns),
    TowerTail(TowerTail),
    Assumptions(Assumptions),
}

#[derive(Clone, Debug)]
pub struct Config {
    pub common: Common,
    pub experiment: Experiment,
    /// The roof function, for flow experiments.
    pub roof_fn: Option<RoofFunction>,
}

pub const EXPERIMENTS: [&str; 9] = [
    "hit-survival",
    "poisson",
    "kac",
    "evl",
    "duality",
    "correlation",
    "short-returns",
    "tower-tail",
    "assumptions",
];

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut table: toml::Table = toml::from_str(text).map_err(config_err)?;

    let experiment = take_string(&mut table, "experiment")?
        .ok_or_else(|| Error::Config("missing key `experiment`".into()))?;
    if !EXPERIMENTS.contains(&experiment.as_str()) {
        return Err(Error::Config(format!(
            "unknown experiment \"{experiment}\"; expected one of {}",
            EXPERIMENTS.join(", ")
        )));
    }
    let name = take_string(&mut table, "name")?.unwrap_or_else(|| experiment.clone());
    let system = take_string(&mut table, "system")?
        .ok_or_else(|| Error::Config("missing key `system`".into()))?;
    let alpha = take_f64(&mut table, "alpha")?;
    let b = take_f64(&mut table, "b")?;
    let lambda = take_f64(&mut table, "lambda")?;
    let c = take_f64(&mut table, "c")?;
    let seed = take_u64(&mut table, "seed")?
        .ok_or_else(|| Error::Config("missing key `seed`".into()))?;
    let workers = take_u64(&mut table, "workers")?.unwrap_or(0) as usize;
    let out_dir = take_string(&mut table, "out_dir")?.unwrap_or_else(|| ".".into());

    let base = build_system(&system, alpha, b, lambda, c)?;
    let mut common =
        Common { experiment, name, system, alpha, b, lambda, c, seed, workers, out_dir, base };
    // Echo the parameters the system actually runs with.
    match base {
        BaseSystem::Doubling => {}
        BaseSystem::Lsv { alpha } => common.alpha = Some(alpha),
        BaseSystem::Lorenz1d { alpha, b } => {
            common.alpha = Some(alpha);
            common.b = Some(b);
        }
        BaseSystem::Lorenz2d { alpha, b, lambda, c } => {
            common.alpha = Some(alpha);
            common.b = Some(b);
            common.lambda = Some(lambda);
            common.c = Some(c);
        }
    }

    let payload = Value::Table(table);
    let experiment = match common.experiment.as_str() {
        "hit-survival" => Experiment::HitSurvival(payload.try_into().map_err(config_err)?),
        "poisson" => Experiment::Poisson(payload.try_into().map_err(config_err)?),
        "kac" => Experiment::Kac(payload.try_into().map_err(config_err)?),
        "evl" => Experiment::Evl(payload.try_into().map_err(config_err)?),
        "duality" => Experiment::Duality(payload.try_into().map_err(config_err)?),
        "correlation" => Experiment::Correlation(payload.try_into().map_err(config_err)?),
        "short-returns" => Experiment::ShortReturns(payload.try_into().map_err(config_err)?),
        "tower-tail" => Experiment::TowerTail(payload.try_into().map_err(config_err)?),
        "assumptions" => Experiment::Assumptions(payload.try_into().map_err(config_err)?),
        _ => unreachable!(),
    };
    let mut config = Config { common, experiment, roof_fn: None };
    validate(&mut config)?;
    Ok(config)
}

fn build_system(
    name: &str,
    alpha: Option<f64>,
    b: Option<f64>,
    lambda: Option<f64>,
    c: Option<f64>,
) -> Result<BaseSystem> {
    let no_param = |key: &str, v: Option<f64>| {
        if v.is_some() {
            Err(Error::Config(format!("key `{key}` does not apply to system \"{name}\"")))
        } else {
            Ok(())
        }
    };
    match name {
        "doubling" => {
            no_param("alpha", alpha)?;
            no_param("b", b)?;
            no_param("lambda", lambda)?;
            no_param("c", c)?;
            Ok(BaseSystem::doubling())
        }
        "lsv" => {
            no_param("b", b)?;
            no_param("lambda", lambda)?;
            no_param("c", c)?;
            let alpha =
                alpha.ok_or_else(|| Error::Config("system \"lsv\" needs key `alpha`".into()))?;
            BaseSystem::lsv(alpha).map_err(config_err)
        }
        "lorenz1d" => {
            no_param("lambda", lambda)?;
            no_param("c", c)?;
            match (alpha, b) {
                (None, None) => Ok(BaseSystem::lorenz1d_default()),
                _ => BaseSystem::lorenz1d(alpha.unwrap_or(0.7), b.unwrap_or(1.8))
                    .map_err(config_err),
            }
        }
        "lorenz2d" => match (alpha, b, lambda, c) {
            (None, None, None, None) => Ok(BaseSystem::lorenz2d_default()),
            _ => BaseSystem::lorenz2d(
                alpha.unwrap_or(0.7),
                b.unwrap_or(1.8),
                lambda.unwrap_or(0.3),
                c.unwrap_or(0.6),
            )
            .map_err(config_err),
        },
        other => Err(Error::Config(format!(
            "unknown system \"{other}\"; expected doubling, lsv, lorenz1d, or lorenz2d"
        ))),
    }
}

fn positive_count(value: usize, key: &str) -> Result<()> {
    if value == 0 {
        return Err(Error::Config(format!("key `{key}` must be positive")));
    }
    Ok(())
}

fn radius_in_scale(system: &BaseSystem, r: f64, key: &str) -> Result<()> {
    let scale = match system {
        BaseSystem::Lorenz1d { .. } | BaseSystem::Lorenz2d { .. } => 1.0,
        _ => 0.5,
    };
    if !(r > 0.0) || !r.is_finite() || r >= scale {
        return Err(Error::Config(format!(
            "key `{key}` must lie in (0, {scale}) for {}, got {r}",
            system.name()
        )));
    }
    Ok(())
}

fn validate_kind(
    kind: &str,
    beta: &mut Option<f64>,
    gamma: &mut Option<f64>,
    top: &mut Option<f64>,
) -> Result<()> {
    let reject = |cond: bool, key: &str| {
        if cond {
            Err(Error::Config(format!("key `{key}` does not apply to kind \"{kind}\"")))
        } else {
            Ok(())
        }
    };
    match kind {
        "gumbel" => {
            reject(beta.is_some(), "beta")?;
            reject(gamma.is_some(), "gamma")?;
            reject(top.is_some(), "top")?;
        }
        "frechet" => {
            reject(gamma.is_some(), "gamma")?;
            reject(top.is_some(), "top")?;
            beta.get_or_insert(2.0);
        }
        "weibull" => {
            reject(beta.is_some(), "beta")?;
            gamma.get_or_insert(2.0);
            top.get_or_insert(5.0);
        }
        other => {
            return Err(Error::Config(format!(
                "unknown kind \"{other}\"; expected gumbel, frechet, or weibull"
            )))
        }
    }
    Ok(())
}

fn validate_level_grid(
    kind: &str,
    ys: &mut Option<Vec<f64>>,
    y_min: &mut Option<f64>,
    y_max: &mut Option<f64>,
    y_points: &mut Option<usize>,
) -> Result<()> {
    if let Some(list) = ys {
        if y_min.is_some() || y_max.is_some() || y_points.is_some() {
            return Err(Error::Config(
                "give either `ys` or the `y_min`/`y_max`/`y_points` trio, not both".into(),
            ));
        }
        if list.is_empty() || list.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("`ys` must be nonempty and finite".into()));
        }
        return Ok(());
    }
    // Default grids sit inside each law's support.
    let (lo, hi) = match kind {
        "gumbel" => (-2.0, 4.0),
        "frechet" => (0.3, 5.3),
        _ => (-2.5, -0.05),
    };
    y_min.get_or_insert(lo);
    y_max.get_or_insert(hi);
    let points = *y_points.get_or_insert(21);
    if points < 2 || !(y_min.unwrap() < y_max.unwrap()) {
        return Err(Error::Config(
            "level grid needs y_min < y_max and at least 2 points".into(),
        ));
    }
    Ok(())
}

fn validate_profile(
    system: &BaseSystem,
    samples: &mut Option<usize>,
    points: &mut Option<usize>,
    r_min: &mut Option<f64>,
    r_max: &mut Option<f64>,
) -> Result<()> {
    samples.get_or_insert(2_000_000);
    points.get_or_insert(400);
    r_min.get_or_insert(1e-7);
    let scale = match system {
        BaseSystem::Lorenz1d { .. } | BaseSystem::Lorenz2d { .. } => 0.5,
        _ => 0.25,
    };
    r_max.get_or_insert(scale);
    positive_count(samples.unwrap(), "profile_samples")?;
    if !(r_min.unwrap() > 0.0 && r_min.unwrap() < r_max.unwrap()) || points.unwrap() < 2 {
        return Err(Error::Config(
            "profile grid needs 0 < profile_r_min < profile_r_max and at least 2 points".into(),
        ));
    }
    Ok(())
}

fn validate(config: &mut Config) -> Result<()> {
    let seed = config.common.seed;
    let system = config.common.base;
    match &mut config.experiment {
        Experiment::HitSurvival(x) => {
            x.center.resolve(&system, seed)?;
            radius_in_scale(&system, x.radius, "radius")?;
            positive_count(x.trajectories, "trajectories")?;
            x.center_height.get_or_insert(0.5);
            x.y_max.get_or_insert(6.0);
            x.plot_points.get_or_insert(121);
            positive_count(*x.measure_samples.get_or_insert(200_000), "measure_samples")?;
            x.tolerance.get_or_insert(0.02);
            let reference = x.reference.get_or_insert_with(|| "exponential".into());
            if reference != "exponential" {
                return Err(Error::UnknownReference(reference.clone()));
            }
            config.roof_fn = Some(build_roof(&mut x.roof, &mut x.roof_height, &mut x.roof_a, &mut x.roof_b)?);
        }
        Experiment::Poisson(x) => {
            x.center.resolve(&system, seed)?;
            radius_in_scale(&system, x.radius, "radius")?;
            positive_count(x.trajectories, "trajectories")?;
            x.center_height.get_or_insert(0.5);
            let t_norm = *x.t_norm.get_or_insert(1.0);
            if !(t_norm > 0.0) || !t_norm.is_finite() {
                return Err(Error::Config(format!("key `t_norm` must be positive, got {t_norm}")));
            }
            if *x.buckets.get_or_insert(8) < 2 {
                return Err(Error::Config("key `buckets` must be at least 2".into()));
            }
            positive_count(*x.measure_samples.get_or_insert(200_000), "measure_samples")?;
            x.tolerance.get_or_insert(0.02);
            let reference = x.reference.get_or_insert_with(|| "poisson".into());
            if reference != "poisson" {
                return Err(Error::UnknownReference(reference.clone()));
            }
            config.roof_fn = Some(build_roof(&mut x.roof, &mut x.roof_height, &mut x.roof_a, &mut x.roof_b)?);
        }
        Experiment::Kac(x) => {
            x.center.resolve(&system, seed)?;
            radius_in_scale(&system, x.radius, "radius")?;
            positive_count(x.samples, "samples")?;
            positive_count(*x.measure_samples.get_or_insert(200_000), "measure_samples")?;
            x.tolerance.get_or_insert(0.02);
        }
        Experiment::Evl(x) => {
            x.center.resolve(&system, seed)?;
            validate_kind(&x.kind, &mut x.beta, &mut x.gamma, &mut x.top)?;
            validate_level_grid(&x.kind, &mut x.ys, &mut x.y_min, &mut x.y_max, &mut x.y_points)?;
            validate_profile(
                &system,
                &mut x.profile_samples,
                &mut x.profile_points,
                &mut x.profile_r_min,
                &mut x.profile_r_max,
            )?;
            positive_count(x.trajectories, "trajectories")?;
            if !(x.time > 0.0) || !x.time.is_finite() {
                return Err(Error::Config(format!("key `time` must be positive, got {}", x.time)));
            }
            x.tolerance.get_or_insert(0.03);
            match x.form.as_str() {
                "map" => {
                    if x.roof.is_some()
                        || x.roof_height.is_some()
                        || x.roof_a.is_some()
                        || x.roof_b.is_some()
                        || x.center_height.is_some()
                    {
                        return Err(Error::Config(
                            "roof and center_height keys do not apply to form \"map\"".into(),
                        ));
                    }
                }
                "flow" => {
                    x.center_height.get_or_insert(0.5);
                    config.roof_fn = Some(build_roof(&mut x.roof, &mut x.roof_height, &mut x.roof_a, &mut x.roof_b)?);
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown form \"{other}\"; expected map or flow"
                    )))
                }
            }
            let reference = x.reference.get_or_insert_with(|| x.kind.clone());
            if reference != &x.kind {
                return Err(Error::Config(format!(
                    "reference \"{reference}\" contradicts kind \"{}\"",
                    x.kind
                )));
            }
        }
        Experiment::Duality(x) => {
            x.center.resolve(&system, seed)?;
            validate_kind(&x.kind, &mut x.beta, &mut x.gamma, &mut x.top)?;
            validate_level_grid(&x.kind, &mut x.ys, &mut x.y_min, &mut x.y_max, &mut x.y_points)?;
            validate_profile(
                &system,
                &mut x.profile_samples,
                &mut x.profile_points,
                &mut x.profile_r_min,
                &mut x.profile_r_max,
            )?;
            positive_count(x.trajectories, "trajectories")?;
            if !(x.time > 0.0) || !x.time.is_finite() {
                return Err(Error::Config(format!("key `time` must be positive, got {}", x.time)));
            }
            x.center_height.get_or_insert(0.5);
            x.tolerance.get_or_insert(3.0);
            config.roof_fn = Some(build_roof(&mut x.roof, &mut x.roof_height, &mut x.roof_a, &mut x.roof_b)?);
        }
        Experiment::Correlation(x) => {
            let phi = x.phi.get_or_insert_with(|| "coordinate".into());
            if phi != "coordinate" {
                return Err(Error::Config(format!(
                    "unknown phi \"{phi}\"; only \"coordinate\" is built in"
                )));
            }
            let interval = x.psi_lo.is_some() || x.psi_hi.is_some();
            let ball = x.psi_center.is_some() || x.psi_radius.is_some();
            match (interval, ball) {
                (true, true) | (false, false) => {
                    return Err(Error::Config(
                        "give exactly one of `psi_lo`/`psi_hi` or `psi_center`/`psi_radius`"
                            .into(),
                    ))
                }
                (true, false) => {
                    let (Some(lo), Some(hi)) = (x.psi_lo, x.psi_hi) else {
                        return Err(Error::Config("`psi_lo` and `psi_hi` come together".into()));
                    };
                    if !(lo < hi) {
                        return Err(Error::Config(format!(
                            "psi interval needs psi_lo < psi_hi, got [{lo}, {hi}]"
                        )));
                    }
                }
                (false, true) => {
                    let (Some(center), Some(radius)) = (x.psi_center.as_mut(), x.psi_radius)
                    else {
                        return Err(Error::Config(
                            "`psi_center` and `psi_radius` come together".into(),
                        ));
                    };
                    center.resolve(&system, seed)?;
                    radius_in_scale(&system, radius, "psi_radius")?;
                }
            }
            if x.lags.get_or_insert_with(|| (0..=6).collect()).is_empty() {
                return Err(Error::Config("`lags` must be nonempty".into()));
            }
            positive_count(x.samples, "samples")?;
            x.tolerance.get_or_insert(0.05);
        }
        Experiment::ShortReturns(x) => {
            if x.radius_grid.is_empty() {
                return Err(Error::Config("`radius_grid` must be nonempty".into()));
            }
            for r in &x.radius_grid {
                radius_in_scale(&system, *r, "radius_grid")?;
            }
            let j = *x.j.get_or_insert(1);
            let j_max = *x.j_max.get_or_insert(8);
            if j == 0 || j_max == 0 {
                return Err(Error::Config("`j` and `j_max` must be at least 1".into()));
            }
            positive_count(x.samples, "samples")?;
            x.tolerance.get_or_insert(0.10);
        }
        Experiment::TowerTail(x) => {
            let BaseSystem::Lsv { .. } = system else {
                return Err(Error::Config(format!(
                    "experiment \"tower-tail\" needs system \"lsv\", got \"{}\"",
                    system.name()
                )));
            };
            let grid = x.n_grid.get_or_insert_with(|| {
                vec![1, 2, 3, 5, 7, 10, 14, 20, 28, 40, 57, 80, 113, 160, 226, 320]
            });
            if grid.is_empty() || !grid.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::Config(
                    "`n_grid` must be nonempty and strictly increasing".into(),
                ));
            }
            positive_count(x.samples, "samples")?;
            let horizon = *x.horizon.get_or_insert(100_000);
            if horizon <= *grid.last().unwrap() {
                return Err(Error::Config(
                    "`horizon` must exceed the deepest `n_grid` point".into(),
                ));
            }
            x.tolerance.get_or_insert(0.2);
        }
        Experiment::Assumptions(x) => {
            x.center.resolve(&system, seed)?;
            if x.radius_grid.len() < 3 {
                return Err(Error::Config("`radius_grid` needs at least 3 radii".into()));
            }
            for r in &x.radius_grid {
                radius_in_scale(&system, *r, "radius_grid")?;
            }
            let delta = *x.delta.get_or_insert(1.5);
            if !(delta > 1.0) {
                return Err(Error::Config(format!(
                    "key `delta` must exceed 1, got {delta}"
                )));
            }
            positive_count(x.samples, "samples")?;
            x.ci_multiples.get_or_insert(3.0);
            x.dim_tolerance.get_or_insert(0.05);
            x.bound_ratio.get_or_insert(5.0);
        }
    }
    Ok(())
}

impl Config {
    /// The full resolved config as one flat JSON object, defaults filled in.
    pub fn resolved_json(&self, effective_workers: usize) -> serde_json::Value {
        let mut obj = match serde_json::to_value(&self.common) {
            Ok(serde_json::Value::Object(m)) => m,
            _ => serde_json::Map::new(),
        };
        obj.insert("workers".into(), serde_json::Value::from(effective_workers as u64));
        let payload = match &self.experiment {
            Experiment::HitSurvival(x) => serde_json::to_value(x),
            Experiment::Poisson(x) => serde_json::to_value(x),
            Experiment::Kac(x) => serde_json::to_value(x),
            Experiment::Evl(x) => serde_json::to_value(x),
            Experiment::Duality(x) => serde_json::to_value(x),
            Experiment::Correlation(x) => serde_json::to_value(x),
            Experiment::ShortReturns(x) => serde_json::to_value(x),
            Experiment::TowerTail(x) => serde_json::to_value(x),
            Experiment::Assumptions(x) => serde_json::to_value(x),
        };
        if let Ok(serde_json::Value::Object(m)) = payload {
            for (k, v) in m {
                obj.insert(k, v);
            }
        }
        serde_json::Value::Object(obj)
    }
}

fn take_string(table: &mut toml::Table, key: &str) -> Result<Option<String>> {
    match table.remove(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(v) => Err(Error::Config(format!("key `{key}` must be a string, got {v}"))),
    }
}

fn take_f64(table: &mut toml::Table, key: &str) -> Result<Option<f64>> {
    match table.remove(key) {
        None => Ok(None),
        Some(Value::Float(x)) => Ok(Some(x)),
        Some(Value::Integer(i)) => Ok(Some(i as f64)),
        Some(v) => Err(Error::Config(format!("key `{key}` must be a number, got {v}"))),
    }
}

fn take_u64(table: &mut toml::Table, key: &str) -> Result<Option<u64>> {
    match table.remove(key) {
        None => Ok(None),
        Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
        Some(v) => {
            Err(Error::Config(format!("key `{key}` must be a nonnegative integer, got {v}")))
        }
    }
}
