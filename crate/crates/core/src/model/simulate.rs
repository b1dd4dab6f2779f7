use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::filter::{recursion_step, unconditional_level};
use super::spec::{AcdSpec, MeanForm};
use crate::duration::{DaySegment, DurationEntry, DurationKind, DurationSeries, SeasonalState, TickDay, TickRecord};
use crate::duration::{SESSION_CLOSE_MS, SESSION_OPEN, SESSION_OPEN_MS};
use crate::error::{AcdError, Result};
use crate::rng::sub_rng;
use crate::seasonality::DiurnalProfile;

/// Standard deviation of the per-tick log-price increment.
pub const TICK_LOG_VOL: f64 = 1e-4;
pub const START_PRICE: f64 = 100.0;
pub const TICK_VOLUME: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Raw durations (seasonal factor applied when a profile is given).
    pub series: DurationSeries,
    /// Ticks on the millisecond grid, clipped to the session.
    pub ticks: Vec<TickDay>,
    /// Innovation draws in series order.
    pub innovations: Vec<f64>,
    /// Conditional means in series order.
    pub psi: Vec<f64>,
}

struct SimDay {
    segment: DaySegment,
    ticks: TickDay,
    eps: Vec<f64>,
    psi: Vec<f64>,
}

/// Draws `n_days` days of `n_per_day` durations.
///
/// Every day starts from the unconditional level with pre-sample lags set to
/// it, so filtering the output with `InitRule::UnconditionalMean` replays the
/// generating ψ path.
pub fn simulate(
    spec: &AcdSpec,
    n_per_day: usize,
    n_days: usize,
    seed: u64,
    profile: Option<&DiurnalProfile>,
) -> Result<Simulation> {
    spec.validate()?;
    if !spec.is_stationary() {
        return Err(AcdError::NonStationary(format!("refusing to simulate non-stationary {}", spec.name())));
    }
    if seed == 0 {
        return Err(AcdError::Parameter("seed must be positive".into()));
    }
    let init = unconditional_level(spec)?;
    let days: Vec<SimDay> = (0..n_days)
        .into_par_iter()
        .map(|d| simulate_day(spec, init, n_per_day, d as u32, seed, profile))
        .collect::<Result<_>>()?;

    let mut segments = Vec::with_capacity(n_days);
    let mut ticks = Vec::with_capacity(n_days);
    let mut innovations = Vec::with_capacity(n_days * n_per_day);
    let mut psi = Vec::with_capacity(n_days * n_per_day);
    for d in days {
        segments.push(d.segment);
        ticks.push(d.ticks);
        innovations.extend(d.eps);
        psi.extend(d.psi);
    }
    Ok(Simulation {
        series: DurationSeries {
            kind: DurationKind::Trade,
            seasonal_state: SeasonalState::Raw,
            contiguous: true,
            days: segments,
        },
        ticks,
        innovations,
        psi,
    })
}

fn simulate_day(
    spec: &AcdSpec,
    init: f64,
    n: usize,
    day: u32,
    seed: u64,
    profile: Option<&DiurnalProfile>,
) -> Result<SimDay> {
    let mut rng = sub_rng(seed, day as u64);
    let form = spec.mean_form;
    let s0 = if form == MeanForm::Linear { init } else { init.ln() };
    let u0 = match form {
        MeanForm::Linear => init,
        MeanForm::LogType1 => init.ln(),
        MeanForm::LogType2 => 1.0,
    };
    let mut s = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut eps = Vec::with_capacity(n);
    let mut psis = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    let mut t = SESSION_OPEN;
    for k in 0..n {
        let sk = if k == 0 { s0 } else { recursion_step(spec, k, &u, &s, u0, s0) };
        let psi = if form == MeanForm::Linear { sk } else { sk.exp() };
        if !(psi > 0.0 && psi.is_finite()) {
            return Err(AcdError::Positivity { index: k, value: psi });
        }
        let e = spec.innovation.sample(&mut rng);
        let w = psi * e;
        s[k] = sk;
        u[k] = match form {
            MeanForm::Linear => w,
            MeanForm::LogType1 => w.ln(),
            MeanForm::LogType2 => w / psi,
        };
        let raw = match profile {
            Some(p) => w * p.eval(t),
            None => w,
        };
        entries.push(DurationEntry { start: t, end: t + raw, duration: raw });
        t += raw;
        eps.push(e);
        psis.push(psi);
    }

    // Tick synthesis: first tick at the open, later ticks at the cumulative
    // event times rounded to the millisecond, dropped after the close.
    let mut log_p = START_PRICE.ln();
    let mut records = Vec::with_capacity(n + 1);
    records.push(TickRecord::from_millis(day, SESSION_OPEN_MS, START_PRICE, TICK_VOLUME)?);
    let mut last_ms = SESSION_OPEN_MS;
    for e in &entries {
        let z: f64 = StandardNormal.sample(&mut rng);
        log_p += TICK_LOG_VOL * z;
        let ms = ((e.end * 1000.0).round() as i64).max(last_ms);
        if ms > SESSION_CLOSE_MS {
            break;
        }
        last_ms = ms;
        let price = ((log_p.exp() * 100.0).round() / 100.0).max(0.01);
        records.push(TickRecord::from_millis(day, ms, price, TICK_VOLUME)?);
    }
    Ok(SimDay {
        segment: DaySegment { day_index: day, entries },
        ticks: TickDay::new(day, records)?,
        eps,
        psi: psis,
    })
}
