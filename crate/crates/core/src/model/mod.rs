//! ACD specifications, recursions, likelihoods, moments and simulation.

pub mod closed_form;
mod filter;
pub mod innovation;
mod moments;
mod simulate;
mod spec;

pub use filter::{filter_psi, filter_with_loglik, loglik, loglik_gradient, LogLik, LogLikGrad, PsiDay, PsiPath};
pub use innovation::{InnovationFamily, Kernel, KernelEval};
pub use moments::{
    acf1, arma_coefficients, conditional_intensity, unconditional_mean, unconditional_variance, ArmaRepresentation,
};
pub use simulate::{simulate, Simulation, START_PRICE, TICK_LOG_VOL, TICK_VOLUME};
pub use spec::{AcdSpec, InitRule, MeanForm};
