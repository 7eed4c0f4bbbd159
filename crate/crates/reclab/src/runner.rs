//! Config-driven experiment runner: dispatches one experiment, compares the
//! outcome against its reference law, and emits three files per run:
//! `<name>.data.csv` (raw per-sample results), `<name>.plot.csv` (columns
//! exactly `x, empirical, predicted, ci`), and `<name>.summary.json` (the
//! headline statistic, pass/fail as data, and the full resolved config).
//!
//! Floats are written with 17 significant digits, and every estimator below
//! derives its randomness from the config seed through fixed-purpose streams,
//! so outputs are byte-identical across runs and worker counts. Pass/fail is
//! data: a completed run exits 0 either way.

use crate::config::{Config, Correlation, Duality, Evl, Experiment, HitSurvival, Kac, Poisson,
    ShortReturns, TowerTail};
use crate::diagnostics::{
    self, short_return_measure, tower_tail, vr_measure, LipschitzObservable, PsiSet,
};
use crate::error::{Error, Result};
use crate::extremes::{
    evl_empirical_flow, evl_empirical_map, evl_hitting_duality, EvlCurve, ObservableForm,
    ObservableKind, ObservableSpec,
};
use crate::hitting::{kac_check, normalized_survival_flow, poisson_counts};
use crate::seeds;
use crate::stats::isotonic_decreasing_residual;
use crate::suspension::{build_suspension, FlowBall, Suspension};
use crate::systems::{
    annulus_measure, annulus_ratio, local_dimension, log_radii, measure_profile_sampled,
    sample_points, BaseBall, BaseSystem, MeasureProfile, Point, SamplerConfig,
};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Stream salts for estimates the runner makes on its own (measures and
/// profiles), separating them from the trajectory streams.
const MEASURE_SALT: u64 = 0x21;
const PROFILE_SALT: u64 = 0x22;

/// One row of the plot CSV.
struct PlotRow {
    x: f64,
    empirical: f64,
    predicted: f64,
    ci: f64,
}

/// Everything one experiment produces before file assembly.
struct Report {
    data_header: &'static str,
    data_rows: Vec<String>,
    plot: Vec<PlotRow>,
    /// Headline distance statistic (a KS where one exists).
    ks: Option<f64>,
    /// Its sampling-accuracy counterpart.
    ci: Option<f64>,
    /// Pass/fail against the configured tolerance; absent when the setup has
    /// no reference to compare against.
    passed: Option<bool>,
    tolerance: Option<f64>,
    stats: Value,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub passed: Option<bool>,
    pub summary: Value,
    pub files: [PathBuf; 3],
}

/// 17 significant digits, enough to reproduce every f64 bit pattern.
fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

fn effective_workers(config_workers: usize, cli_override: Option<usize>) -> usize {
    let w = cli_override.unwrap_or(config_workers);
    if w == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        w
    }
}

/// Runs the configured experiment and writes its three output files.
pub fn run(
    config: &Config,
    cli_workers: Option<usize>,
    cli_out: Option<&Path>,
) -> Result<RunOutcome> {
    let workers = effective_workers(config.common.workers, cli_workers);
    let out_dir = cli_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.common.out_dir));
    std::fs::create_dir_all(&out_dir)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a {workers}-worker pool: {e}")))?;
    let report = pool.install(|| dispatch(config))?;

    let mut summary = serde_json::Map::new();
    summary.insert("experiment".into(), json!(config.common.experiment));
    summary.insert("name".into(), json!(config.common.name));
    summary.insert("ks".into(), report.ks.map_or(Value::Null, |v| json!(v)));
    summary.insert("ci".into(), report.ci.map_or(Value::Null, |v| json!(v)));
    summary.insert("tolerance".into(), report.tolerance.map_or(Value::Null, |v| json!(v)));
    summary.insert("passed".into(), report.passed.map_or(Value::Null, |v| json!(v)));
    summary.insert("stats".into(), report.stats.clone());
    summary.insert("config".into(), config.resolved_json(workers));
    let summary = Value::Object(summary);

    let files = write_outputs(&out_dir, &config.common.name, &report, &summary)?;
    Ok(RunOutcome { passed: report.passed, summary, files })
}

fn write_outputs(
    dir: &Path,
    name: &str,
    report: &Report,
    summary: &Value,
) -> Result<[PathBuf; 3]> {
    let data_path = dir.join(format!("{name}.data.csv"));
    let plot_path = dir.join(format!("{name}.plot.csv"));
    let summary_path = dir.join(format!("{name}.summary.json"));

    let mut data = String::with_capacity(32 * (report.data_rows.len() + 1));
    data.push_str(report.data_header);
    data.push('\n');
    for row in &report.data_rows {
        data.push_str(row);
        data.push('\n');
    }

    let mut plot = String::with_capacity(96 * (report.plot.len() + 1));
    plot.push_str("x,empirical,predicted,ci\n");
    for r in &report.plot {
        plot.push_str(&format!(
            "{},{},{},{}\n",
            fmt17(r.x),
            fmt17(r.empirical),
            fmt17(r.predicted),
            fmt17(r.ci)
        ));
    }

    let summary_text = format!("{:#}\n", summary);

    let paths = [data_path, plot_path, summary_path];
    let contents = [data, plot, summary_text];
    for (path, text) in paths.iter().zip(&contents) {
        if let Err(e) = std::fs::write(path, text) {
            // A partial run must not leave a misleading subset of outputs.
            for p in &paths {
                let _ = std::fs::remove_file(p);
            }
            return Err(e.into());
        }
    }
    Ok(paths)
}

fn dispatch(config: &Config) -> Result<Report> {
    match &config.experiment {
        Experiment::HitSurvival(x) => run_hit_survival(config, x),
        Experiment::Poisson(x) => run_poisson(config, x),
        Experiment::Kac(x) => run_kac(config, x),
        Experiment::Evl(x) => run_evl(config, x),
        Experiment::Duality(x) => run_duality(config, x),
        Experiment::Correlation(x) => run_correlation(config, x),
        Experiment::ShortReturns(x) => run_short_returns(config, x),
        Experiment::TowerTail(x) => run_tower_tail(config, x),
        Experiment::Assumptions(x) => run_assumptions(config, x),
    }
}

/// The base-ball mass used as the hitting normalizer: exact for the doubling
/// map (its invariant measure is Lebesgue), estimated from invariant samples
/// otherwise.
fn base_ball_measure(
    system: &BaseSystem,
    center: Point,
    radius: f64,
    measure_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if let BaseSystem::Doubling = system {
        return Ok(((2.0 * radius).min(1.0), 0.0));
    }
    let pts = sample_points(
        system,
        system.natural_sampler(),
        &SamplerConfig::default(),
        seeds::mix(seed, MEASURE_SALT),
        measure_samples,
    )?;
    crate::systems::ball_measure(system, center, radius, &pts)
}

fn build_flow(config: &Config) -> Result<Suspension> {
    let roof = config.roof_fn.ok_or_else(|| {
        Error::Config("flow experiment without a roof; this is a bug in validation".into())
    })?;
    build_suspension(config.common.base, roof, config.common.seed)
}

fn run_hit_survival(config: &Config, x: &HitSurvival) -> Result<Report> {
    let seed = config.common.seed;
    let system = config.common.base;
    let suspension = build_flow(config)?;
    let center = x.center.point();
    let height = x.center_height.unwrap();
    let ball = FlowBall::new(center, height, x.radius)?;
    let (mu, mu_ci) =
        base_ball_measure(&system, center, x.radius, x.measure_samples.unwrap(), seed)?;
    let curve = normalized_survival_flow(&suspension, &ball, mu, seed, x.trajectories, x.y_max.unwrap())?;

    let observed = curve.normalized.observed();
    let data_rows = observed
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{},{}", i + 1, fmt17(*t)))
        .collect();

    let n = x.trajectories as f64;
    let plot = linspace(0.0, x.y_max.unwrap(), x.plot_points.unwrap())
        .into_iter()
        .map(|y| {
            let (emp, pred) = curve.survival_point(y);
            PlotRow {
                x: y,
                empirical: emp,
                predicted: pred,
                ci: 1.96 * (emp * (1.0 - emp) / n).sqrt(),
            }
        })
        .collect();

    let ks = curve.ks_exponential;
    // Standard 95% KS acceptance band for the observed sample size.
    let ci = 1.36 / (observed.len() as f64).sqrt();
    let tolerance = x.tolerance.unwrap();
    Ok(Report {
        data_header: "rank,normalized_time",
        data_rows,
        plot,
        ks: Some(ks),
        ci: Some(ci),
        passed: Some(ks <= tolerance),
        tolerance: Some(tolerance),
        stats: json!({
            "normalizer": curve.normalizer,
            "base_measure": mu,
            "base_measure_ci": mu_ci,
            "mean_roof": suspension.mean_roof(),
            "observed": observed.len(),
            "censored": curve.normalized.censored(),
        }),
    })
}

fn run_poisson(config: &Config, x: &Poisson) -> Result<Report> {
    let seed = config.common.seed;
    let system = config.common.base;
    let suspension = build_flow(config)?;
    let center = x.center.point();
    let ball = FlowBall::new(center, x.center_height.unwrap(), x.radius)?;
    let (mu, mu_ci) =
        base_ball_measure(&system, center, x.radius, x.measure_samples.unwrap(), seed)?;
    let report = poisson_counts(
        &suspension,
        &ball,
        mu,
        seed,
        x.trajectories,
        x.t_norm.unwrap(),
        x.buckets.unwrap(),
    )?;

    let n = x.trajectories as f64;
    let last = report.histogram.len() - 1;
    let mut data_rows = Vec::with_capacity(report.histogram.len());
    let mut plot = Vec::with_capacity(report.histogram.len());
    let mut pmf_head = 0.0;
    for (m, count) in report.histogram.iter().enumerate() {
        let (emp, mut pred) = report.pmf_point(m);
        if m < last {
            pmf_head += pred;
        } else {
            // Overflow bucket absorbs the law's upper tail.
            pred = (1.0 - pmf_head).max(0.0);
        }
        data_rows.push(format!("{m},{count},{},{}", fmt17(emp), fmt17(pred)));
        plot.push(PlotRow {
            x: m as f64,
            empirical: emp,
            predicted: pred,
            ci: 1.96 * (emp * (1.0 - emp) / n).sqrt(),
        });
    }

    // The law comparison that matters at small intensity: the first three
    // count frequencies.
    let mut deviation: f64 = 0.0;
    let mut dev_ci: f64 = 0.0;
    for m in 0..=2usize.min(last - 1) {
        let (emp, pred) = report.pmf_point(m);
        deviation = deviation.max((emp - pred).abs());
        dev_ci = dev_ci.max(1.96 * (emp * (1.0 - emp) / n).sqrt());
    }
    let tolerance = x.tolerance.unwrap();
    Ok(Report {
        data_header: "m,count,empirical,predicted",
        data_rows,
        plot,
        ks: Some(deviation),
        ci: Some(dev_ci),
        passed: Some(deviation <= tolerance),
        tolerance: Some(tolerance),
        stats: json!({
            "intensity": report.intensity,
            "tv_distance": report.tv_distance,
            "max_pmf_deviation": deviation,
            "base_measure": mu,
            "base_measure_ci": mu_ci,
            "mean_roof": suspension.mean_roof(),
        }),
    })
}

fn run_kac(config: &Config, x: &Kac) -> Result<Report> {
    let system = config.common.base;
    let ball = BaseBall::new(x.center.point(), x.radius)?;
    let report = kac_check(&system, &ball, config.common.seed, x.samples, x.measure_samples.unwrap())?;

    let data_rows = vec![format!(
        "{},{},{},{},{}",
        fmt17(report.product),
        fmt17(report.product_ci),
        fmt17(report.mean_return),
        fmt17(report.ball_measure),
        report.censored
    )];
    let plot = vec![PlotRow {
        x: 0.0,
        empirical: report.product,
        predicted: 1.0,
        ci: report.product_ci,
    }];
    let gap = (report.product - 1.0).abs();
    let tolerance = x.tolerance.unwrap();
    Ok(Report {
        data_header: "product,product_ci,mean_return,ball_measure,censored",
        data_rows,
        plot,
        ks: Some(gap),
        ci: Some(report.product_ci),
        passed: Some(gap <= tolerance),
        tolerance: Some(tolerance),
        stats: json!({
            "product": report.product,
            "product_ci": report.product_ci,
            "mean_return": report.mean_return,
            "ball_measure": report.ball_measure,
            "censored": report.censored,
        }),
    })
}

fn observable_kind(kind: &str, beta: Option<f64>, gamma: Option<f64>, top: Option<f64>) -> ObservableKind {
    match kind {
        "frechet" => ObservableKind::FrechetPower { beta: beta.unwrap() },
        "weibull" => ObservableKind::WeibullPower { gamma: gamma.unwrap(), top: top.unwrap() },
        _ => ObservableKind::GumbelLog,
    }
}

/// The ball-mass profile around the observable's center: exact where the
/// invariant measure is Lebesgue, estimated by streaming samples otherwise.
fn center_profile(
    system: &BaseSystem,
    center: Point,
    samples: usize,
    points: usize,
    r_min: f64,
    r_max: f64,
    seed: u64,
) -> Result<MeasureProfile> {
    let radii = log_radii(r_min, r_max, points)?;
    if let BaseSystem::Doubling = system {
        let values = radii.iter().map(|r| (2.0 * r).min(1.0)).collect();
        return MeasureProfile::new(center, radii, values, 0);
    }
    measure_profile_sampled(
        system,
        system.natural_sampler(),
        &SamplerConfig::default(),
        seeds::mix(seed, PROFILE_SALT),
        samples,
        center,
        &radii,
    )
}

fn level_grid(ys: &Option<Vec<f64>>, y_min: Option<f64>, y_max: Option<f64>, y_points: Option<usize>) -> Vec<f64> {
    match ys {
        Some(list) => list.clone(),
        None => linspace(y_min.unwrap(), y_max.unwrap(), y_points.unwrap()),
    }
}

fn evl_report(curve: &EvlCurve, tolerance: f64, extra: Value) -> Report {
    let n = curve.maxima.len() as f64;
    let data_rows = curve
        .maxima
        .iter()
        .enumerate()
        .map(|(i, m)| format!("{},{}", i + 1, fmt17(*m)))
        .collect();
    let mut max_ci: f64 = 0.0;
    let plot = curve
        .ys
        .iter()
        .zip(curve.empirical.iter().zip(&curve.predicted))
        .map(|(y, (emp, pred))| {
            let ci = 1.96 * (emp * (1.0 - emp) / n).sqrt();
            max_ci = max_ci.max(ci);
            PlotRow { x: *y, empirical: *emp, predicted: *pred, ci }
        })
        .collect();
    Report {
        data_header: "trajectory,maximum",
        data_rows,
        plot,
        ks: Some(curve.sup_gap),
        ci: Some(max_ci),
        passed: Some(curve.sup_gap <= tolerance),
        tolerance: Some(tolerance),
        stats: extra,
    }
}

fn run_evl(config: &Config, x: &Evl) -> Result<Report> {
    let seed = config.common.seed;
    let system = config.common.base;
    let center = x.center.point();
    let ys = level_grid(&x.ys, x.y_min, x.y_max, x.y_points);
    let kind = observable_kind(&x.kind, x.beta, x.gamma, x.top);
    let profile = center_profile(
        &system,
        center,
        x.profile_samples.unwrap(),
        x.profile_points.unwrap(),
        x.profile_r_min.unwrap(),
        x.profile_r_max.unwrap(),
        seed,
    )?;

    let (curve, form_stats) = if x.form == "map" {
        let spec = ObservableSpec::new(kind, ObservableForm::Map, profile)?;
        let steps = x.time as u64;
        let curve = evl_empirical_map(&system, &spec, seed, x.trajectories, steps, &ys)?;
        (curve, json!({"form": "map", "steps": steps}))
    } else {
        let suspension = build_flow(config)?;
        let spec = ObservableSpec::new(
            kind,
            ObservableForm::Flow { mean_roof: suspension.mean_roof() },
            profile,
        )?;
        let curve = evl_empirical_flow(
            &suspension,
            &spec,
            x.center_height.unwrap(),
            seed,
            x.trajectories,
            x.time,
            &ys,
        )?;
        (curve, json!({"form": "flow", "mean_roof": suspension.mean_roof()}))
    };

    let mut stats = json!({
        "sup_gap": curve.sup_gap,
        "law": x.kind,
        "time": curve.time,
        "trajectories": curve.maxima.len(),
    });
    if let (Value::Object(m), Value::Object(extra)) = (&mut stats, form_stats) {
        m.extend(extra);
    }
    Ok(evl_report(&curve, x.tolerance.unwrap(), stats))
}

fn run_duality(config: &Config, x: &Duality) -> Result<Report> {
    let seed = config.common.seed;
    let system = config.common.base;
    let center = x.center.point();
    let ys = level_grid(&x.ys, x.y_min, x.y_max, x.y_points);
    let kind = observable_kind(&x.kind, x.beta, x.gamma, x.top);
    let profile = center_profile(
        &system,
        center,
        x.profile_samples.unwrap(),
        x.profile_points.unwrap(),
        x.profile_r_min.unwrap(),
        x.profile_r_max.unwrap(),
        seed,
    )?;
    let suspension = build_flow(config)?;
    let spec = ObservableSpec::new(
        kind,
        ObservableForm::Flow { mean_roof: suspension.mean_roof() },
        profile,
    )?;
    let report = evl_hitting_duality(
        &suspension,
        &spec,
        x.center_height.unwrap(),
        seed,
        x.trajectories,
        x.time,
        &ys,
    )?;

    let data_rows = report
        .ys
        .iter()
        .zip(report.maxima_route.iter().zip(&report.hitting_route))
        .map(|(y, (a, b))| format!("{},{},{}", fmt17(*y), fmt17(*a), fmt17(*b)))
        .collect();
    let plot = report
        .ys
        .iter()
        .zip(report.maxima_route.iter().zip(&report.hitting_route))
        .map(|(y, (a, b))| PlotRow { x: *y, empirical: *a, predicted: *b, ci: report.max_ci })
        .collect();

    // The two routes must agree within the configured number of combined CI
    // half-widths.
    let tolerance = x.tolerance.unwrap();
    let budget = tolerance * report.max_ci.max(f64::MIN_POSITIVE);
    Ok(Report {
        data_header: "y,maxima_route,hitting_route",
        data_rows,
        plot,
        ks: Some(report.sup_gap),
        ci: Some(report.max_ci),
        passed: Some(report.sup_gap <= budget),
        tolerance: Some(tolerance),
        stats: json!({
            "sup_gap": report.sup_gap,
            "max_ci": report.max_ci,
            "law": x.kind,
            "time": report.time,
            "trajectories_per_route": x.trajectories,
        }),
    })
}

fn run_correlation(config: &Config, x: &Correlation) -> Result<Report> {
    let system = config.common.base;
    let phi = LipschitzObservable::coordinate();
    let psi = match (x.psi_lo, x.psi_hi) {
        (Some(lo), Some(hi)) => PsiSet::Interval { lo, hi },
        _ => PsiSet::Ball {
            center: x.psi_center.as_ref().unwrap().point(),
            radius: x.psi_radius.unwrap(),
        },
    };
    // Closed form only for the doubling map against the left-half indicator.
    let closed_form = |lag: u64| -> Option<f64> {
        match (&system, &psi) {
            (BaseSystem::Doubling, PsiSet::Interval { lo, hi })
                if *lo == 0.0 && *hi == 0.5 =>
            {
                Some(-(2f64.powi(-(lag as i32 + 3))))
            }
            _ => None,
        }
    };

    let lags = x.lags.as_ref().unwrap();
    let mut data_rows = Vec::with_capacity(lags.len());
    let mut plot = Vec::with_capacity(lags.len());
    let mut max_rel: Option<f64> = None;
    let mut max_ci: f64 = 0.0;
    let mut skipped = 0u64;
    for &lag in lags {
        let est = diagnostics::correlation(&system, &phi, &psi, lag, x.samples, config.common.seed)?;
        skipped += est.skipped;
        max_ci = max_ci.max(est.ci);
        let pred = closed_form(lag);
        if let Some(p) = pred {
            let rel = (est.estimate - p).abs() / p.abs();
            max_rel = Some(max_rel.map_or(rel, |m: f64| m.max(rel)));
        }
        data_rows.push(format!("{lag},{},{}", fmt17(est.estimate), fmt17(est.ci)));
        plot.push(PlotRow {
            x: lag as f64,
            empirical: est.estimate,
            predicted: pred.unwrap_or(f64::NAN),
            ci: est.ci,
        });
    }

    let tolerance = x.tolerance.unwrap();
    Ok(Report {
        data_header: "lag,estimate,ci",
        data_rows,
        plot,
        ks: max_rel,
        ci: Some(max_ci),
        passed: max_rel.map(|m| m <= tolerance),
        tolerance: Some(tolerance),
        stats: json!({
            "max_relative_deviation": max_rel,
            "samples_per_lag": x.samples,
            "skipped": skipped,
        }),
    })
}

fn run_short_returns(config: &Config, x: &ShortReturns) -> Result<Report> {
    let system = config.common.base;
    let seed = config.common.seed;
    let j = x.j.unwrap();
    let j_max = x.j_max.unwrap();
    let mut data_rows = Vec::with_capacity(x.radius_grid.len());
    let mut plot = Vec::with_capacity(x.radius_grid.len());
    let mut max_rel: Option<f64> = None;
    let mut max_ci: f64 = 0.0;
    let mut vr_values = Vec::with_capacity(x.radius_grid.len());
    for &r in &x.radius_grid {
        let short = short_return_measure(&system, r, j, x.samples, seed)?;
        let vr = vr_measure(&system, r, j_max, x.samples, seed)?;
        vr_values.push(vr.estimate);
        max_ci = max_ci.max(short.ci);
        // Closed form: lag-1 return-set mass of the doubling map is 6r.
        let pred = match (&system, j) {
            (BaseSystem::Doubling, 1) => Some(6.0 * r),
            _ => None,
        };
        if let Some(p) = pred {
            let rel = (short.estimate - p).abs() / p;
            max_rel = Some(max_rel.map_or(rel, |m: f64| m.max(rel)));
        }
        data_rows.push(format!(
            "{},{j},{},{},{j_max},{},{}",
            fmt17(r),
            fmt17(short.estimate),
            fmt17(short.ci),
            fmt17(vr.estimate),
            fmt17(vr.ci)
        ));
        plot.push(PlotRow {
            x: r,
            empirical: short.estimate,
            predicted: pred.unwrap_or(f64::NAN),
            ci: short.ci,
        });
    }

    // The union mass must shrink along the configured grid when it moves
    // from larger radii to smaller ones.
    let ordered: Vec<usize> = {
        let mut idx: Vec<usize> = (0..x.radius_grid.len()).collect();
        idx.sort_by(|a, b| x.radius_grid[*b].total_cmp(&x.radius_grid[*a]));
        idx
    };
    let vr_decreasing = ordered.windows(2).all(|w| vr_values[w[0]] > vr_values[w[1]])
        || x.radius_grid.len() < 2;

    let tolerance = x.tolerance.unwrap();
    let passed = match max_rel {
        Some(m) => Some(m <= tolerance && vr_decreasing),
        None => (x.radius_grid.len() >= 2).then_some(vr_decreasing),
    };
    Ok(Report {
        data_header: "radius,j,short_estimate,short_ci,j_max,vr_estimate,vr_ci",
        data_rows,
        plot,
        ks: max_rel,
        ci: Some(max_ci),
        passed,
        tolerance: Some(tolerance),
        stats: json!({
            "max_relative_deviation": max_rel,
            "vr_decreasing": vr_decreasing,
            "vr_values": vr_values,
            "samples_per_radius": x.samples,
        }),
    })
}

fn run_tower_tail(config: &Config, x: &TowerTail) -> Result<Report> {
    let system = config.common.base;
    let BaseSystem::Lsv { alpha } = system else {
        return Err(Error::Config("tower-tail needs the lsv system".into()));
    };
    let grid = x.n_grid.as_ref().unwrap();
    let report = tower_tail(&system, grid, x.samples, x.horizon.unwrap(), config.common.seed)?;

    let expected = -1.0 / alpha;
    // Anchor the reference slope at the first fit-eligible grid point.
    let anchor = (0..grid.len()).find(|&i| {
        grid[i] >= 10 && report.tail[i] * report.gaps as f64 >= 31.5
    });
    let mut data_rows = Vec::with_capacity(grid.len());
    let mut plot = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let n = grid[i];
        let pred = match anchor {
            Some(a) if i >= a && grid[a] > 0 => {
                report.tail[a] * (n as f64 / grid[a] as f64).powf(expected)
            }
            _ => f64::NAN,
        };
        data_rows.push(format!("{n},{},{}", fmt17(report.tail[i]), fmt17(report.ci[i])));
        plot.push(PlotRow {
            x: n as f64,
            empirical: report.tail[i],
            predicted: pred,
            ci: report.ci[i],
        });
    }

    let gap = (report.exponent - expected).abs();
    let tolerance = x.tolerance.unwrap();
    Ok(Report {
        data_header: "n,tail,ci",
        data_rows,
        plot,
        ks: Some(gap),
        ci: None,
        passed: Some(gap <= tolerance),
        tolerance: Some(tolerance),
        stats: json!({
            "exponent": report.exponent,
            "expected_exponent": expected,
            "fit_points": report.fit_points,
            "gaps": report.gaps,
            "censored": report.censored,
            "certifies_p_gt_8": report.exponent < -8.0,
            "certifies_p_gt_16": report.exponent < -16.0,
        }),
    })
}

fn run_assumptions(config: &Config, x: &crate::config::Assumptions) -> Result<Report> {
    let system = config.common.base;
    let center = x.center.point();
    let delta = x.delta.unwrap();
    let pts = sample_points(
        &system,
        system.natural_sampler(),
        &SamplerConfig::default(),
        seeds::mix(config.common.seed, MEASURE_SALT),
        x.samples,
    )?;

    let lebesgue = matches!(system, BaseSystem::Doubling);
    let planar = matches!(system, BaseSystem::Lorenz2d { .. });
    let mut data_rows = Vec::with_capacity(x.radius_grid.len());
    let mut plot = Vec::with_capacity(x.radius_grid.len());
    let mut annulus_ok = true;
    let mut max_ci_multiples: f64 = 0.0;
    let mut regularity = Vec::new();
    let mut regularity_ci = Vec::new();
    for &r in &x.radius_grid {
        let (ball, ball_ci) = crate::systems::ball_measure(&system, center, r, &pts)?;
        let (ratio, ratio_ci) = annulus_ratio(&system, center, r, delta, &pts)?;
        let predicted = if lebesgue { r.powf(delta - 1.0) } else { f64::NAN };
        if lebesgue {
            let gap = (ratio - predicted).abs();
            let multiples = gap / ratio_ci.max(f64::MIN_POSITIVE);
            max_ci_multiples = max_ci_multiples.max(multiples);
            if multiples > x.ci_multiples.unwrap() {
                annulus_ok = false;
            }
        }
        let (reg, reg_ci) = if planar {
            let eps = r.powf(delta);
            let (mass, mass_ci) = annulus_measure(&system, center, r, eps, &pts)?;
            let scale = (r * eps).sqrt();
            (mass / scale, mass_ci / scale)
        } else {
            (f64::NAN, f64::NAN)
        };
        regularity.push(reg);
        regularity_ci.push(reg_ci);
        data_rows.push(format!(
            "{},{},{},{},{},{},{}",
            fmt17(r),
            fmt17(ball),
            fmt17(ball_ci),
            fmt17(ratio),
            fmt17(ratio_ci),
            fmt17(reg),
            fmt17(reg_ci)
        ));
        plot.push(PlotRow { x: r, empirical: ratio, predicted, ci: ratio_ci });
    }

    let dim = local_dimension(&system, center, &x.radius_grid, &pts)?;
    let dim_ok = if planar {
        // No closed-form dimension for the planar attractor; reported, not
        // gated.
        true
    } else {
        (dim.slope - 1.0).abs() <= x.dim_tolerance.unwrap()
    };

    let (reg_ok, reg_spread, reg_residual) = if planar {
        let finite: Vec<f64> = regularity.iter().cloned().filter(|v| v.is_finite()).collect();
        let max = finite.iter().cloned().fold(f64::MIN, f64::max);
        let min = finite.iter().cloned().fold(f64::MAX, f64::min);
        let spread = max / min.max(f64::MIN_POSITIVE);
        let residual = isotonic_decreasing_residual(&regularity);
        let noise = 2.0 * regularity_ci.iter().cloned().fold(0.0f64, f64::max);
        (spread <= x.bound_ratio.unwrap() && residual <= noise, spread, residual)
    } else {
        (true, f64::NAN, f64::NAN)
    };

    let passed = annulus_ok && dim_ok && reg_ok;
    Ok(Report {
        data_header: "radius,ball,ball_ci,annulus_ratio,ratio_ci,regularity,regularity_ci",
        data_rows,
        plot,
        ks: if lebesgue { Some(max_ci_multiples) } else { None },
        ci: None,
        passed: Some(passed),
        tolerance: if lebesgue { x.ci_multiples } else { None },
        stats: json!({
            "dimension_slope": dim.slope,
            "dimension_bracket": [dim.lower, dim.upper],
            "annulus_within_ci_multiples": annulus_ok,
            "max_ci_multiples": if lebesgue { Some(max_ci_multiples) } else { None },
            "regularity": regularity,
            "regularity_spread": if planar { Some(reg_spread) } else { None },
            "regularity_isotonic_residual": if planar { Some(reg_residual) } else { None },
            "delta": delta,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("reclab-runner-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn hit_survival_outputs_are_complete_and_worker_independent() {
        let dir = temp_dir("hit");
        let text = "experiment = \"hit-survival\"\nname = \"hit\"\nsystem = \"doubling\"\nseed = 11\ncenter = 0.537\nradius = 0.05\ntrajectories = 400\ny_max = 3.0\nplot_points = 31\n";
        let config = parse_config(text).unwrap();
        let one = run(&config, Some(1), Some(&dir.join("w1"))).unwrap();
        let two = run(&config, Some(3), Some(&dir.join("w3"))).unwrap();

        for f in &one.files {
            assert!(f.exists(), "missing {f:?}");
        }
        let d1 = std::fs::read(&one.files[0]).unwrap();
        let d3 = std::fs::read(&two.files[0]).unwrap();
        assert_eq!(d1, d3, "data CSV must be byte-identical across worker counts");
        let p1 = std::fs::read(&one.files[1]).unwrap();
        let p3 = std::fs::read(&two.files[1]).unwrap();
        assert_eq!(p1, p3, "plot CSV must be byte-identical across worker counts");

        let plot_text = String::from_utf8(p1).unwrap();
        assert!(plot_text.starts_with("x,empirical,predicted,ci\n"));
        // Echo carries resolved defaults and the effective worker count.
        assert_eq!(one.summary["config"]["y_max"], 3.0);
        assert_eq!(one.summary["config"]["workers"], 1);
        assert_eq!(two.summary["config"]["workers"], 3);
        assert_eq!(one.summary["config"]["tolerance"], 0.02);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn kac_summary_reports_the_product_gap() {
        let dir = temp_dir("kac");
        let text = "experiment = \"kac\"\nsystem = \"doubling\"\nseed = 3\ncenter = 0.5\nradius = 0.1\nsamples = 4000\nmeasure_samples = 100000\n";
        let config = parse_config(text).unwrap();
        let outcome = run(&config, Some(1), Some(&dir)).unwrap();
        let ks = outcome.summary["ks"].as_f64().unwrap();
        assert!(ks < 0.05, "kac gap {ks} unexpectedly large");
        assert_eq!(outcome.summary["passed"], true);
        let data = std::fs::read_to_string(&outcome.files[0]).unwrap();
        assert!(data.starts_with("product,product_ci,mean_return,ball_measure,censored\n"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn correlation_without_reference_reports_null_verdict() {
        let dir = temp_dir("corr");
        // Interval [0.1, 0.4] has no closed form here, so pass/fail is null.
        let text = "experiment = \"correlation\"\nsystem = \"doubling\"\nseed = 5\npsi_lo = 0.1\npsi_hi = 0.4\nlags = [0, 2]\nsamples = 30000\n";
        let config = parse_config(text).unwrap();
        let outcome = run(&config, Some(1), Some(&dir)).unwrap();
        assert_eq!(outcome.summary["passed"], Value::Null);
        assert_eq!(outcome.summary["ks"], Value::Null);
        let plot = std::fs::read_to_string(&outcome.files[1]).unwrap();
        // Missing predictions are spelled nan.
        assert!(plot.lines().nth(1).unwrap().contains(",nan,"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn simulation_failure_cleans_partial_outputs() {
        let dir = temp_dir("fail");
        // A flow box at height 0.02 cannot be separated under a unit roof.
        let text = "experiment = \"hit-survival\"\nname = \"dirty\"\nsystem = \"doubling\"\nseed = 7\ncenter = 0.3\ncenter_height = 0.02\nradius = 0.05\ntrajectories = 10\n";
        let config = parse_config(text).unwrap();
        let err = run(&config, Some(1), Some(&dir)).unwrap_err();
        assert!(matches!(err, Error::DirtyFlowBox { .. }), "got {err}");
        assert!(
            std::fs::read_dir(&dir).unwrap().next().is_none(),
            "failed run left files behind"
        );
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn short_returns_match_their_closed_form_end_to_end() {
        let dir = temp_dir("short");
        let text = "experiment = \"short-returns\"\nsystem = \"doubling\"\nseed = 9\nradius_grid = [1e-2, 1e-3]\nsamples = 200000\nj_max = 4\n";
        let config = parse_config(text).unwrap();
        let outcome = run(&config, Some(1), Some(&dir)).unwrap();
        assert_eq!(outcome.summary["passed"], true);
        assert_eq!(outcome.summary["stats"]["vr_decreasing"], true);
        let _ = std::fs::remove_dir_all(&dir);
    }
}
