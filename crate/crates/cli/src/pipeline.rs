use std::path::Path;

use acdkit::diagnostics::{self, DiagnosticOptions, DiagnosticReport};
use acdkit::duration::{aggregate_series, apply_filter, build_for_days, compute_trade_durations, DurationKind, FilterPolicy};
use acdkit::estimation::{fit_mle, normalize, render_table, FitOptions, TableColumn};
use acdkit::model::{AcdSpec, InitRule, InnovationFamily, MeanForm};
use acdkit::rng::derive_seed;
use acdkit::seasonality::{deseasonalize, estimate_spline_profile};
use serde::Serialize;

use crate::args::{require, PipelineArgs};
use crate::error::{CliError, CliResult};
use crate::io::*;
use crate::model::{default_coefficients, parse_init};

#[derive(Debug, Clone, Serialize)]
struct RunSettings {
    seed: u64,
    t_list: Vec<usize>,
    drop_zero: bool,
    max_duration_cap: Option<f64>,
    bin_minutes: f64,
    starts: usize,
    init_rule: InitRule,
    lb_lags: usize,
    acf_lags: usize,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    settings: &'a RunSettings,
    n_days: usize,
    n_ticks: usize,
    n_trade_durations: usize,
    n_filtered: usize,
    levels: Vec<LevelSummary>,
}

#[derive(Serialize)]
struct LevelSummary {
    t: usize,
    n: usize,
    normalization_constant: f64,
    best_bic: String,
    bic: Vec<(String, f64)>,
}

/// The six specifications of the estimation tables.
pub fn templates(init: InitRule) -> Vec<AcdSpec> {
    let families = [
        InnovationFamily::Exponential,
        InnovationFamily::Weibull { k: 1.0 },
        InnovationFamily::Gamma { d: 1.0 },
    ];
    let mut out = Vec::new();
    for (m, q) in [(1, 1), (2, 1)] {
        for fam in families {
            let (omega, alpha, beta) = default_coefficients(MeanForm::Linear, m, q);
            out.push(
                AcdSpec::new(MeanForm::Linear, omega, alpha, beta, fam, init).expect("default template is valid"),
            );
        }
    }
    out
}

fn level_title(t: usize) -> String {
    if t == 2 {
        "tick-by-tick".to_string()
    } else {
        format!("T-{t}")
    }
}

pub fn pipeline(args: &PipelineArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = require(seed, "seed")?;
    let input = require(args.input.clone(), "pipeline.input")?;
    let out = require(args.output.clone(), "pipeline.output")?;
    let d = DiagnosticOptions::default();
    let settings = RunSettings {
        seed,
        t_list: args.t_list.clone().unwrap_or_else(|| vec![13, 67, 134, 400]),
        drop_zero: args.drop_zero.unwrap_or(true),
        max_duration_cap: args.cap,
        bin_minutes: args.bin_minutes.unwrap_or(15.0),
        starts: args.starts.unwrap_or(3),
        init_rule: args.init.as_deref().map(parse_init).transpose()?.unwrap_or_default(),
        lb_lags: args.lb_lags.unwrap_or(d.lb_lags),
        acf_lags: args.acf_lags.unwrap_or(d.acf_lags),
    };
    if settings.t_list.is_empty() || settings.t_list.iter().any(|&t| t < 2) {
        return Err(CliError::input("every aggregation level T must be at least 2"));
    }
    if settings.t_list.contains(&2) && !settings.drop_zero {
        return Err(CliError::stage(
            "filter",
            "T = 2 requires drop_zero: zero durations violate modeling preconditions",
        ));
    }

    let days = load_ticks(&input)?;
    let n_ticks = days.iter().map(|d| d.len()).sum();
    let trade = build_for_days(&days, DurationKind::Trade, |d| Ok(compute_trade_durations(d)))
        .map_err(|e| CliError::stage("durations", e))?;
    let policy =
        FilterPolicy::new(settings.drop_zero, settings.max_duration_cap).map_err(|e| CliError::stage("filter", e))?;
    let filtered = apply_filter(&trade, &policy).map_err(|e| CliError::stage("filter", e))?.without_empty_days();
    if filtered.is_empty() {
        return Err(CliError::stage("filter", "no durations left after filtering"));
    }
    let profile =
        estimate_spline_profile(&filtered, settings.bin_minutes).map_err(|e| CliError::stage("seasonality", e))?;
    let adjusted = deseasonalize(&filtered, &profile).map_err(|e| CliError::stage("deseasonalize", e))?;

    create_dir(&out)?;
    write_text(&out.join("profile.json"), &(profile.to_json().map_err(CliError::input)? + "\n"))?;
    write_with(&out.join("profile_grid.csv"), |w| profile.write_grid_csv(w))?;

    let diag_opts =
        DiagnosticOptions { lb_lags: settings.lb_lags, pit_bins: d.pit_bins, acf_lags: settings.acf_lags };
    let specs = templates(settings.init_rule);
    let mut levels = Vec::new();
    for (ti, &t) in settings.t_list.iter().enumerate() {
        let stage = |what: &str| format!("{what} T={t}");
        let agg = aggregate_series(&adjusted, t).map_err(|e| CliError::stage(&stage("aggregate"), e))?;
        let (data, scale) = normalize(&agg).map_err(|e| CliError::stage(&stage("normalize"), e))?;
        let dir = out.join(format!("T{t}"));
        create_dir(&dir)?;

        let raw_acf = diagnostics::correlogram(&data.values(), settings.acf_lags.min(data.len().saturating_sub(1)))
            .map_err(|e| CliError::stage(&stage("diagnostics"), e))?;
        write_with(&dir.join("correlogram_durations.csv"), |w| diagnostics::write_correlogram_csv(w, &raw_acf))?;

        let mut cols = Vec::new();
        let mut reports: Vec<DiagnosticReport> = Vec::new();
        for (mi, template) in specs.iter().enumerate() {
            let opts = FitOptions {
                n_starts: settings.starts,
                seed: derive_seed(seed, (ti * specs.len() + mi) as u64 + 1),
                ..Default::default()
            };
            let what = format!("fit {}", template.name());
            let mut fit = fit_mle(&data, template, &opts).map_err(|e| CliError::stage(&stage(&what), e))?;
            fit.normalization_constant = scale;
            let report =
                diagnostics::diagnose(&fit.spec, &data, &diag_opts).map_err(|e| CliError::stage(&stage("diagnostics"), e))?;
            let acf: Vec<(usize, f64)> = report.acf.iter().enumerate().map(|(i, v)| (i + 1, *v)).collect();
            write_with(&dir.join(format!("correlogram_{}.csv", file_stem(&fit.model))), |w| {
                diagnostics::write_correlogram_csv(w, &acf)
            })?;
            cols.push(TableColumn { lb: Some(report.lb.q), fit });
            reports.push(report);
        }
        write_text(&dir.join("table.txt"), &render_table(&level_title(t), &cols))?;
        write_json(&dir.join("table.json"), &cols)?;
        write_json(&dir.join("diagnostics.json"), &reports)?;

        let best = cols
            .iter()
            .min_by(|a, b| a.fit.bic.total_cmp(&b.fit.bic))
            .map(|c| c.fit.model.clone())
            .unwrap_or_default();
        levels.push(LevelSummary {
            t,
            n: data.len(),
            normalization_constant: scale,
            best_bic: best,
            bic: cols.iter().map(|c| (c.fit.model.clone(), c.fit.bic)).collect(),
        });
    }

    let manifest = RunManifest {
        settings: &settings,
        n_days: days.len(),
        n_ticks,
        n_trade_durations: trade.len(),
        n_filtered: filtered.len(),
        levels,
    };
    write_json(&out.join("run.json"), &manifest)?;
    report_levels(&out, &manifest.levels);
    Ok(())
}

fn report_levels(out: &Path, levels: &[LevelSummary]) {
    for l in levels {
        println!("{}: n = {}, best BIC {}", level_title(l.t), l.n, l.best_bic);
    }
    println!("report written to {}", out.display());
}
