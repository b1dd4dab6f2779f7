use std::path::{Path, PathBuf};

use acdkit::diagnostics::{self, DiagnosticOptions};
use acdkit::duration::{
    aggregate_series, apply_filter, build_for_days, compute_trade_durations, describe, thin_by_price, thin_by_volume,
    DurationKind, DurationSeries, FilterPolicy, ThinningConfig,
};
use acdkit::estimation::{fit_mle, normalize, render_table, FitOptions, FitResult, TableColumn};
use acdkit::gof::{
    cached_critical_values, fit_null, gof_test, within_day_share, BootstrapProtocol, CacheStatus, GofReport,
    McOptions, NullDistribution, NullFamily, STAT_NAMES,
};
use acdkit::ingest::{write_durations, write_ticks};
use acdkit::model::simulate;
use acdkit::seasonality::{deseasonalize, estimate_fourier_profile, estimate_spline_profile, DiurnalProfile};
use serde::Serialize;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::io::*;
use crate::model::build_spec;

pub fn ingest(args: &IngestArgs) -> CliResult<()> {
    let input = require(args.input.clone(), "ingest.input")?;
    let out = require(args.output.clone(), "ingest.output")?;
    let (days, report) = read_tick_file(&input)?;
    create_dir(&out)?;
    write_json(&out.join("ingest_report.json"), &report)?;
    check_quality(&report)?;
    write_with(&out.join(STORE_TICKS), |w| write_ticks(w, &days))?;
    println!(
        "{} rows read, {} accepted, {} rejected, {} days",
        report.rows_read,
        report.rows_accepted,
        report.rejects.len(),
        report.days_found
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulationManifest<'a> {
    spec: &'a acdkit::model::AcdSpec,
    seed: u64,
    n_days: usize,
    n_per_day: usize,
    n_ticks: usize,
    profile: Option<&'a DiurnalProfile>,
}

pub const SIM_DEFAULT_N_DAYS: usize = 5;
pub const SIM_DEFAULT_N_PER_DAY: usize = 2340;

pub fn simulate_cmd(args: &SimulateArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = require(seed, "seed")?;
    let out = require(args.output.clone(), "simulate.output")?;
    let mut model = args.model.clone();
    // mean duration of ten seconds unless overridden
    if model.omega.is_none() && model.alpha.is_none() && model.beta.is_none() {
        model.omega = Some(1.0);
        model.alpha = Some(vec![0.1]);
        model.beta = Some(vec![0.8]);
    }
    let spec = build_spec(&model, "exponential")?;
    if !spec.is_stationary() {
        return Err(CliError::model(format!("{} with persistence {} is not stationary", spec.name(), spec.persistence())));
    }
    let profile = match &args.profile {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            Some(DiurnalProfile::from_json(&text).map_err(|e| CliError::input(format!("invalid profile: {e}")))?)
        }
        None => None,
    };
    let n_days = args.n_days.unwrap_or(SIM_DEFAULT_N_DAYS);
    let n_per_day = args.n_per_day.unwrap_or(SIM_DEFAULT_N_PER_DAY);
    let sim = simulate(&spec, n_per_day, n_days, seed, profile.as_ref())
        .map_err(|e| CliError::from_model_error("simulate", e))?;
    create_dir(&out)?;
    write_with(&out.join("ticks.csv"), |w| write_ticks(w, &sim.ticks))?;
    let n_ticks = sim.ticks.iter().map(|d| d.len()).sum();
    write_json(
        &out.join("manifest.json"),
        &SimulationManifest { spec: &spec, seed, n_days, n_per_day, n_ticks, profile: profile.as_ref() },
    )?;
    println!("{n_ticks} ticks over {n_days} days from {}", spec.name());
    Ok(())
}

fn policy(drop_zero: Option<bool>, cap: Option<f64>) -> CliResult<FilterPolicy> {
    FilterPolicy::new(drop_zero.unwrap_or(false), cap).map_err(CliError::input)
}

fn write_series(out: &Path, s: &DurationSeries) -> CliResult<()> {
    write_with(out, |w| write_durations(w, s))
}

pub fn durations(cmd: &DurationsCommand, cfg: &DurationsConfig) -> CliResult<()> {
    match cmd {
        DurationsCommand::Aggregate(a) => {
            let mut a = a.clone();
            a.merge(&cfg.aggregate);
            let days = load_ticks(&require(a.input, "durations.aggregate.input")?)?;
            let out = require(a.output, "durations.aggregate.output")?;
            let t = a.t.unwrap_or(2);
            let trade = build_for_days(&days, DurationKind::Trade, |d| Ok(compute_trade_durations(d)))
                .map_err(|e| CliError::stage("durations", e))?;
            let filtered = apply_filter(&trade, &policy(a.drop_zero, a.cap)?).map_err(|e| CliError::stage("filter", e))?;
            let agg = aggregate_series(&filtered, t).map_err(CliError::input)?;
            write_series(&out, &agg)?;
            println!("{} durations (T = {t})", agg.len());
        }
        DurationsCommand::Thin(a) => {
            let mut a = a.clone();
            a.merge(&cfg.thin);
            let days = load_ticks(&require(a.input, "durations.thin.input")?)?;
            let out = require(a.output, "durations.thin.output")?;
            let series = match (a.price, a.volume) {
                (Some(c), None) => {
                    ThinningConfig::new(c, 1.0).map_err(CliError::input)?;
                    build_for_days(&days, DurationKind::Price { threshold: c }, |d| thin_by_price(d, c))
                }
                (None, Some(v)) => {
                    ThinningConfig::new(1.0, v).map_err(CliError::input)?;
                    build_for_days(&days, DurationKind::Volume { threshold: v }, |d| thin_by_volume(d, v))
                }
                _ => return Err(CliError::input("give exactly one of --price or --volume")),
            }
            .map_err(|e| CliError::stage("thin", e))?;
            write_series(&out, &series)?;
            println!("{} durations", series.len());
        }
        DurationsCommand::Filter(a) => {
            let mut a = a.clone();
            a.merge(&cfg.filter);
            let series = load_durations(&require(a.input, "durations.filter.input")?)?;
            let out = require(a.output, "durations.filter.output")?;
            let filtered = apply_filter(&series, &policy(a.drop_zero, a.cap)?).map_err(|e| CliError::stage("filter", e))?;
            write_series(&out, &filtered)?;
            println!("{} of {} durations kept", filtered.len(), series.len());
        }
        DurationsCommand::Describe(a) => {
            let mut a = a.clone();
            a.merge(&cfg.describe);
            let series = load_durations(&require(a.input, "durations.describe.input")?)?;
            let summary = describe(&series, a.lb_lags.unwrap_or(20)).map_err(CliError::input)?;
            match a.output {
                Some(p) => write_json(&p, &summary)?,
                None => println!("{}", serde_json::to_string_pretty(&summary).map_err(CliError::input)?),
            }
        }
    }
    Ok(())
}

pub fn deseason(args: &DeseasonArgs) -> CliResult<()> {
    let series = load_durations(&require(args.input.clone(), "deseason.input")?)?;
    let out = require(args.output.clone(), "deseason.output")?;
    let profile = match (&args.profile, args.fourier) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("cannot read {}: {e}", p.display())))?;
            DiurnalProfile::from_json(&text).map_err(|e| CliError::input(format!("invalid profile: {e}")))?
        }
        (None, Some(q)) => estimate_fourier_profile(&series, q).map_err(|e| CliError::stage("seasonality", e))?,
        (None, None) => estimate_spline_profile(&series, args.bin_minutes.unwrap_or(15.0))
            .map_err(|e| CliError::stage("seasonality", e))?,
    };
    let adjusted = deseasonalize(&series, &profile).map_err(|e| CliError::stage("deseasonalize", e))?;
    create_dir(&out)?;
    write_text(&out.join("profile.json"), &(profile.to_json().map_err(CliError::input)? + "\n"))?;
    write_with(&out.join("profile_grid.csv"), |w| profile.write_grid_csv(w))?;
    write_series(&out.join("deseasonalized.csv"), &adjusted)?;
    println!("{} durations adjusted", adjusted.len());
    Ok(())
}

/// Ljung-Box statistic of the standardized residuals, when defined.
pub fn residual_lb(fit: &FitResult, series: &DurationSeries, lags: usize) -> Option<f64> {
    let r = diagnostics::residuals(&fit.spec, series).ok()?.values();
    diagnostics::ljung_box(&r, lags).ok().map(|lb| lb.q)
}

pub fn fit_cmd(args: &FitArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = require(seed, "seed")?;
    let series = load_durations(&require(args.input.clone(), "fit.input")?)?;
    let out = require(args.output.clone(), "fit.output")?;
    let template = build_spec(&args.model, "exponential")?;
    let opts = FitOptions { n_starts: args.starts.unwrap_or(5), seed, ..Default::default() };
    let (data, scale) = if args.normalize.unwrap_or(true) {
        normalize(&series).map_err(|e| CliError::from_model_error("normalize", e))?
    } else {
        (series, 1.0)
    };
    let mut fit = fit_mle(&data, &template, &opts).map_err(|e| CliError::from_model_error("fit", e))?;
    fit.normalization_constant = scale;
    let lb = residual_lb(&fit, &data, 20);
    create_dir(&out)?;
    write_text(&out.join("fit.json"), &(fit.to_json().map_err(CliError::input)? + "\n"))?;
    let cols = [TableColumn { fit, lb }];
    write_text(&out.join("table.txt"), &render_table("", &cols))?;
    write_json(&out.join("table.json"), &cols)?;
    let fit = &cols[0].fit;
    println!("{}: LL {:.3}, BIC {:.3}, {:?}", fit.model, fit.loglik, fit.bic, fit.convergence);
    Ok(())
}

/// Writes `bin,lower,upper,count` rows of a PIT histogram.
fn pit_histogram(q: &[f64], bins: usize) -> String {
    let mut counts = vec![0usize; bins];
    for &v in q {
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let mut s = String::from("bin,lower,upper,count\n");
    for (i, c) in counts.iter().enumerate() {
        s += &format!("{},{},{},{}\n", i, i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c);
    }
    s
}

pub fn diagnose_cmd(args: &DiagnoseArgs) -> CliResult<()> {
    let series = load_durations(&require(args.input.clone(), "diagnose.input")?)?;
    let fit_path = require(args.fit.clone(), "diagnose.fit")?;
    let out = require(args.output.clone(), "diagnose.output")?;
    let text = std::fs::read_to_string(&fit_path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", fit_path.display())))?;
    let fit: FitResult = serde_json::from_str(&text).map_err(|e| CliError::input(format!("invalid fit file: {e}")))?;
    let c = fit.normalization_constant;
    let data = series.map_durations(|e| e.duration / c);
    let d = DiagnosticOptions::default();
    let opts = DiagnosticOptions {
        lb_lags: args.lb_lags.unwrap_or(d.lb_lags),
        pit_bins: args.pit_bins.unwrap_or(d.pit_bins),
        acf_lags: args.acf_lags.unwrap_or(d.acf_lags),
    };
    let report = diagnostics::diagnose(&fit.spec, &data, &opts).map_err(|e| CliError::stage("diagnostics", e))?;
    let q = diagnostics::pit(&data, &fit.spec).map_err(|e| CliError::stage("diagnostics", e))?;
    create_dir(&out)?;
    write_json(&out.join("diagnostics.json"), &report)?;
    let acf: Vec<(usize, f64)> = report.acf.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
    write_with(&out.join("correlogram.csv"), |w| diagnostics::write_correlogram_csv(w, &acf))?;
    write_text(&out.join("pit_histogram.csv"), &pit_histogram(&q, opts.pit_bins))?;
    println!(
        "{}: LB({}) = {:.2} (p = {:.4}), PIT chi2 = {:.2} (p = {:.4})",
        report.model, report.lb.lags, report.lb.q, report.lb.p_value, report.pit_chisq.chi2, report.pit_chisq.p_value
    );
    Ok(())
}

fn parse_protocol(s: &str) -> CliResult<BootstrapProtocol> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "re_estimate" | "reestimate" => Ok(BootstrapProtocol::ReEstimate),
        "fixed_parameters" | "fixed" => Ok(BootstrapProtocol::FixedParameters),
        other => Err(CliError::input(format!("unknown bootstrap protocol '{other}'"))),
    }
}

/// Up to `points` evenly spaced order statistics with empirical and fitted CDF.
fn ecdf_overlay(sample: &[f64], fitted: &NullDistribution, points: usize) -> String {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let step = n.div_ceil(points).max(1);
    let mut s = String::from("x,ecdf,fitted\n");
    let mut idx: Vec<usize> = (0..n).step_by(step).collect();
    if idx.last() != Some(&(n - 1)) {
        idx.push(n - 1);
    }
    for i in idx {
        s += &format!("{},{},{}\n", x[i], (i + 1) as f64 / n as f64, fitted.cdf(x[i]));
    }
    s
}

fn summary_table(reports: &[GofReport]) -> String {
    let mut s = String::from("family");
    for name in STAT_NAMES {
        s += &format!("\t{name}");
    }
    s += "\n";
    for r in reports {
        s += r.family.name();
        for d in &r.decisions {
            s += &format!("\t{:.4}{}", d.value, if d.reject { "*" } else { "" });
        }
        s += "\n";
    }
    s
}

pub fn default_cache_dir() -> PathBuf {
    std::env::temp_dir().join("acdkit-cache")
}

pub fn gof_cmd(args: &GofArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = require(seed, "seed")?;
    let series = load_durations(&require(args.input.clone(), "gof.input")?)?;
    let out = require(args.output.clone(), "gof.output")?;
    let level = args.level.unwrap_or(0.05);
    let opts = McOptions {
        m: args.replicates.unwrap_or(10_000),
        seed,
        protocol: parse_protocol(args.protocol.as_deref().unwrap_or("re_estimate"))?,
        scaled: args.scaled.unwrap_or(true),
    };
    let series = if args.normalize.unwrap_or(true) {
        normalize(&series).map_err(|e| CliError::from_model_error("normalize", e))?.0
    } else {
        series
    };
    let sample = series.values();
    let cache = args.cache_dir.clone().unwrap_or_else(default_cache_dir);
    let families = args.family.clone().unwrap_or_else(|| vec!["exponential".into(), "weibull".into(), "gamma".into()]);
    create_dir(&out)?;
    let mut reports = Vec::new();
    for name in &families {
        let family = NullFamily::parse(name).map_err(CliError::input)?;
        let stage = format!("gof {}", family.name());
        let fitted = fit_null(&sample, family).map_err(|e| CliError::stage(&stage, e))?;
        let (table, status, path) = cached_critical_values(&cache, &fitted, sample.len(), &[level], &opts)
            .map_err(|e| CliError::stage(&stage, e))?;
        match status {
            CacheStatus::Regenerated => eprintln!(
                "warning: cached critical values at {} did not match this run; regenerated",
                path.display()
            ),
            CacheStatus::Hit => eprintln!("using cached critical values {}", path.display()),
            CacheStatus::Miss => {}
        }
        let report = gof_test(&sample, family, &table, level).map_err(|e| CliError::stage(&stage, e))?;
        let stem = family.name();
        write_json(&out.join(format!("gof_{stem}.json")), &report)?;
        write_text(&out.join(format!("ecdf_{stem}.csv")), &ecdf_overlay(&sample, &report.fitted, 500))?;
        if args.within_day.unwrap_or(false) {
            let share = within_day_share(&series, family, level, &opts).map_err(|e| CliError::stage(&stage, e))?;
            write_json(&out.join(format!("within_day_{stem}.json")), &share)?;
            println!("{stem}: within-day share {:.3} ({} of {} days)", share.share, share.n0, share.n_days);
        }
        reports.push(report);
    }
    let summary = summary_table(&reports);
    write_text(&out.join("gof_summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
