use acdkit::model::{AcdSpec, InitRule, InnovationFamily, MeanForm};

use crate::args::ModelArgs;
use crate::error::{CliError, CliResult};

pub fn parse_mean_form(s: &str) -> CliResult<MeanForm> {
    match s.to_ascii_lowercase().as_str() {
        "linear" => Ok(MeanForm::Linear),
        "log1" | "log_type1" => Ok(MeanForm::LogType1),
        "log2" | "log_type2" => Ok(MeanForm::LogType2),
        other => Err(CliError::model(format!("unknown mean form '{other}' (linear, log1, log2)"))),
    }
}

pub fn parse_family(s: &str, shape: Option<&[f64]>) -> CliResult<InnovationFamily> {
    let get = |i: usize| shape.and_then(|v| v.get(i).copied()).unwrap_or(1.0);
    let fam = match s.to_ascii_lowercase().as_str() {
        "exponential" | "exp" | "e" => InnovationFamily::Exponential,
        "weibull" | "w" => InnovationFamily::Weibull { k: get(0) },
        "gamma" | "g" => InnovationFamily::Gamma { d: get(0) },
        "gg" | "generalized_gamma" => InnovationFamily::GeneralizedGamma { d: get(0), m: get(1) },
        other => return Err(CliError::model(format!("unknown innovation family '{other}'"))),
    };
    fam.validate().map_err(CliError::model)?;
    Ok(fam)
}

pub fn parse_init(s: &str) -> CliResult<InitRule> {
    let s = s.to_ascii_lowercase();
    match s.as_str() {
        "unconditional" | "unconditional_mean" => Ok(InitRule::UnconditionalMean),
        "sample" | "sample_mean" => Ok(InitRule::SampleMean),
        "window" => Ok(InitRule::default()),
        _ => match s.strip_prefix("window:").map(str::parse::<f64>) {
            Some(Ok(minutes)) if minutes > 0.0 => Ok(InitRule::FirstWindowMean { minutes }),
            _ => Err(CliError::model(format!("unknown init rule '{s}' (unconditional, sample, window:<minutes>)"))),
        },
    }
}

/// Starting values for a given form and lag orders, roughly unit mean.
pub fn default_coefficients(form: MeanForm, m: usize, q: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let alpha = vec![0.1 / m as f64; m];
    let beta = vec![0.8 / q as f64; q];
    let sum_a: f64 = alpha.iter().sum();
    let omega = match form {
        MeanForm::Linear => 1.0 - sum_a - beta.iter().sum::<f64>(),
        MeanForm::LogType1 => 0.0,
        MeanForm::LogType2 => -sum_a,
    };
    (omega, alpha, beta)
}

/// Builds a specification from flags; missing coefficients take defaults
/// for the requested orders.
pub fn build_spec(args: &ModelArgs, default_family: &str) -> CliResult<AcdSpec> {
    let form = parse_mean_form(args.mean_form.as_deref().unwrap_or("linear"))?;
    let family = parse_family(args.family.as_deref().unwrap_or(default_family), args.shape.as_deref())?;
    let (m, q) = match args.orders.as_deref() {
        None => (args.alpha.as_ref().map_or(1, Vec::len), args.beta.as_ref().map_or(1, Vec::len)),
        Some([m, q]) => (*m, *q),
        Some(other) => return Err(CliError::model(format!("orders must be 'm,q', got {other:?}"))),
    };
    let (omega0, alpha0, beta0) = default_coefficients(form, m, q);
    let init = args.init.as_deref().map(parse_init).transpose()?.unwrap_or_default();
    AcdSpec::new(
        form,
        args.omega.unwrap_or(omega0),
        args.alpha.clone().unwrap_or(alpha0),
        args.beta.clone().unwrap_or(beta0),
        family,
        init,
    )
    .map_err(CliError::model)
}
