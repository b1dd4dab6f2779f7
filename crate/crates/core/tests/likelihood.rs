use acdkit::diagnostics::residuals;
use acdkit::duration::DurationSeries;
use acdkit::model::closed_form;
use acdkit::model::{filter_psi, loglik, loglik_gradient, simulate, AcdSpec, InitRule, InnovationFamily, MeanForm};
use acdkit::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn random_series(seed: u64, n: usize) -> DurationSeries {
    let mut rng = rng_from_seed(seed);
    let v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln() * rng.random_range(0.2..3.0)).collect();
    DurationSeries::from_durations(&v)
}

fn spec(o: f64, a: f64, b: f64, fam: InnovationFamily) -> AcdSpec {
    AcdSpec::linear11(o, a, b, fam).unwrap().with_init(InitRule::SampleMean)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn nested_families_give_identical_loglik_on_100_series() {
    for seed in 1..=100u64 {
        let s = random_series(seed, 300);
        let e = loglik(&spec(0.1, 0.15, 0.7, InnovationFamily::Exponential), &s).unwrap().total;
        let w1 = loglik(&spec(0.1, 0.15, 0.7, InnovationFamily::Weibull { k: 1.0 }), &s).unwrap().total;
        let gg11 = loglik(&spec(0.1, 0.15, 0.7, InnovationFamily::GeneralizedGamma { d: 1.0, m: 1.0 }), &s).unwrap().total;
        assert!(close(e, w1, 1e-10), "seed {seed}: {e} vs {w1}");
        assert!(close(e, gg11, 1e-10), "seed {seed}: {e} vs {gg11}");
        let k = 0.5 + (seed as f64) / 50.0;
        let wk = loglik(&spec(0.1, 0.15, 0.7, InnovationFamily::Weibull { k }), &s).unwrap().total;
        let ggk = loglik(&spec(0.1, 0.15, 0.7, InnovationFamily::GeneralizedGamma { d: k, m: k }), &s).unwrap().total;
        assert!(close(wk, ggk, 1e-10), "seed {seed}, k {k}: {wk} vs {ggk}");
    }
}

#[test]
fn filter_likelihood_matches_closed_forms() {
    for seed in 1..=20u64 {
        let s = random_series(seed + 500, 200);
        let w = s.values();
        let base = spec(0.2, 0.1, 0.6, InnovationFamily::Exponential);
        let psi = filter_psi(&base, &s).unwrap().values();
        let e = loglik(&base, &s).unwrap().total;
        assert!(close(e, closed_form::eacd(&w, &psi), 1e-10));
        let k = 0.7;
        let wk = loglik(&spec(0.2, 0.1, 0.6, InnovationFamily::Weibull { k }), &s).unwrap().total;
        assert!(close(wk, closed_form::wacd(&w, &psi, k), 1e-10));
        let (d, m) = (1.7, 0.8);
        let g = loglik(&spec(0.2, 0.1, 0.6, InnovationFamily::GeneralizedGamma { d, m }), &s).unwrap().total;
        assert!(close(g, closed_form::ggacd(&w, &psi, d, m), 1e-10));
    }
}

fn fd_gradient(spec: &AcdSpec, s: &DurationSeries) -> Vec<f64> {
    let p = spec.params();
    (0..p.len())
        .map(|i| {
            let h = 1e-6 * p[i].abs().max(1e-2);
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = loglik(&spec.with_params(&up), s).unwrap().total;
            let fd = loglik(&spec.with_params(&dn), s).unwrap().total;
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

fn check_gradient(spec: &AcdSpec, s: &DurationSeries) -> Result<(), TestCaseError> {
    let g = loglik_gradient(spec, s, false).unwrap().gradient;
    let fd = fd_gradient(spec, s);
    let scale = g.iter().chain(&fd).fold(1.0f64, |m, v| m.max(v.abs()));
    for (a, b) in g.iter().zip(&fd) {
        prop_assert!((a - b).abs() <= 1e-5 * scale, "analytic {:?} vs numeric {:?}", g, fd);
    }
    Ok(())
}

fn family(idx: usize, s1: f64, s2: f64) -> InnovationFamily {
    match idx {
        0 => InnovationFamily::Exponential,
        1 => InnovationFamily::Weibull { k: s1 },
        2 => InnovationFamily::Gamma { d: s1 },
        _ => InnovationFamily::GeneralizedGamma { d: s1, m: s2 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_gradient_matches_finite_differences(
        seed in 1u64..10_000,
        o in 0.05f64..0.5,
        a in 0.02f64..0.3,
        b in 0.1f64..0.65,
        fam in 0usize..4,
        s1 in 0.6f64..2.5,
        s2 in 0.6f64..2.0,
        init in 0usize..3,
    ) {
        let rule = [InitRule::SampleMean, InitRule::UnconditionalMean, InitRule::FirstWindowMean { minutes: 1.0 }][init];
        let sp = AcdSpec::new(MeanForm::Linear, o, vec![a, 0.05], vec![b], family(fam, s1, s2), rule).unwrap();
        check_gradient(&sp, &random_series(seed, 150))?;
    }

    #[test]
    fn log_form_gradients_match_finite_differences(
        seed in 1u64..10_000,
        o in -0.2f64..0.2,
        a in -0.1f64..0.15,
        b in 0.1f64..0.7,
        fam in 0usize..4,
        s1 in 0.6f64..2.5,
        s2 in 0.6f64..2.0,
        form2 in proptest::bool::ANY,
    ) {
        let form = if form2 { MeanForm::LogType2 } else { MeanForm::LogType1 };
        let sp = AcdSpec::new(form, o, vec![a], vec![b, 0.05], family(fam, s1, s2), InitRule::SampleMean).unwrap();
        let s = random_series(seed, 150);
        prop_assume!(loglik(&sp, &s).is_ok());
        check_gradient(&sp, &s)?;
    }

    #[test]
    fn scale_equivariance_of_linear_form(seed in 1u64..10_000, c in 0.01f64..100.0) {
        let s = random_series(seed, 200);
        let sp = spec(0.2, 0.1, 0.6, InnovationFamily::Gamma { d: 1.4 });
        let scaled = s.map_durations(|e| e.duration * c);
        let mut sp_c = sp.clone();
        sp_c.omega *= c;
        let l = loglik(&sp, &s).unwrap();
        let lc = loglik(&sp_c, &scaled).unwrap();
        // the Jacobian of w -> c w shifts each contribution by -ln c
        let expected = l.total - l.n_obs() as f64 * c.ln();
        prop_assert!((lc.total - expected).abs() < 1e-8 * expected.abs().max(1.0));
    }
}

#[test]
fn generating_model_residuals_are_its_innovations() {
    for (fam, seed) in [
        (InnovationFamily::Exponential, 3u64),
        (InnovationFamily::Weibull { k: 0.8 }, 4),
        (InnovationFamily::GeneralizedGamma { d: 1.5, m: 0.9 }, 5),
    ] {
        let truth = spec(0.1, 0.2, 0.7, fam).with_init(InitRule::UnconditionalMean);
        let sim = simulate(&truth, 500, 3, seed, None).unwrap();
        let r = residuals(&truth, &sim.series).unwrap().values();
        assert_eq!(r.len(), sim.innovations.len());
        for (a, b) in r.iter().zip(&sim.innovations) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }
}
