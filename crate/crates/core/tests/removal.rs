mod common;

use eqeffort::effort::{
    aed_discrete, DetectOptions, EffortProfile, GammaSpec, OutcomeCurve, RegressionBackend,
};
use eqeffort::removal::{
    fit_fair, gamma_bar, model_aed, regenerate, utility_loss, verify_repair, FairModelPair,
    FitDiagnostics,
};
use eqeffort::{synth, Backend, Dataset, OutcomeModel, Record, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn planted_gamma() -> GammaSpec {
    GammaSpec::Discrete {
        values: synth::PLANTED_GAMMA.to_vec(),
    }
}

fn pair(plus: OutcomeModel, minus: OutcomeModel, gamma: GammaSpec) -> FairModelPair {
    FairModelPair {
        model_plus: plus,
        model_minus: minus,
        lambda: 0.0,
        gamma_bar: gamma_bar(&gamma),
        gamma,
        diagnostics: FitDiagnostics {
            objective: 0.0,
            aed: 0.0,
            iterations: 0,
            restarts: 0,
            converged: true,
            trace: Vec::new(),
        },
    }
}

fn constant_model(d: &Dataset, value: f64) -> OutcomeModel {
    let k = d.schema().covariates.len();
    let mut v = vec![0.0; 2 + 2 * k];
    v[0] = value;
    OutcomeModel::from_vec(&d.schema().treatment_attr, &d.schema().covariate_names(), &v)
}

#[test]
fn heavy_penalty_removes_the_model_gap() {
    let d = synth::planted_gap(20_000, 3);
    let free = fit_fair(&d, 0.0, &planted_gamma()).unwrap();
    let heavy = fit_fair(&d, 1e6, &planted_gamma()).unwrap();
    assert!(free.diagnostics.aed.abs() > 0.5);
    assert!(heavy.diagnostics.aed.abs() < 1e-3);
    assert!(heavy.diagnostics.aed.abs() < 0.01 * free.diagnostics.aed.abs());
    for p in [&free, &heavy] {
        assert!(p.diagnostics.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!((model_aed(p, &d).unwrap() - p.diagnostics.aed).abs() < 1e-6);
    }
}

#[test]
fn model_aed_closed_form_cases() {
    let d = common::random_dataset(1, 200, 1, 4);
    let base = fit_fair(&d, 0.0, &GammaSpec::default()).unwrap();
    let same = pair(base.model_plus.clone(), base.model_plus.clone(), GammaSpec::default());
    // identical models still see each group's own covariate mean
    let means_equal = {
        let mean = |s: Side| {
            let v = d.view().filter(|r| r.s == s);
            v.iter().map(|r| f64::from(r.x[0])).sum::<f64>() / v.len() as f64
        };
        (mean(Side::Plus) - mean(Side::Minus)).abs() < 1e-12
    };
    if means_equal {
        assert!(model_aed(&same, &d).unwrap().abs() < 1e-12);
    }
    // a covariate-free model shifted by c·slope needs c fewer levels
    let d0 = common::random_dataset(2, 100, 0, 4);
    let (slope, c) = (0.1, 1.5);
    let minus = OutcomeModel::from_vec("t", &[], &[0.1, slope]);
    let plus = OutcomeModel::from_vec("t", &[], &[0.1 + c * slope, slope]);
    let p = pair(plus, minus, GammaSpec::default());
    assert!((model_aed(&p, &d0).unwrap() + c).abs() < 1e-12);
}

#[test]
fn model_aed_matches_grid_aed_on_affine_curves() {
    let d = common::random_dataset(9, 50, 2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid: Vec<f64> = (0..1000).map(|i| 0.1 + 0.8 * f64::from(i) / 999.0).collect();
    let gamma = GammaSpec::Discrete { values: grid.clone() };
    let names = d.schema().covariate_names();
    let mut checked = 0;
    while checked < 10 {
        let random = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-0.3..0.3)).collect();
            OutcomeModel::from_vec("t", &names, &v)
        };
        let p = pair(random(&mut rng), random(&mut rng), gamma.clone());
        let line = |s: Side| p.model(s).subgroup_line(&d.view().filter(|r| r.s == s)).unwrap();
        let (lp, lm) = (line(Side::Plus), line(Side::Minus));
        if lp.slope < 0.05 || lm.slope < 0.05 {
            continue;
        }
        let levels = d.schema().treatment_levels.clone();
        let profile = EffortProfile::build(
            &OutcomeCurve::affine(Backend::Regression, "+".into(), levels.clone(), lp),
            &OutcomeCurve::affine(Backend::Regression, "-".into(), levels, lm),
            &grid,
        );
        let want = aed_discrete(&profile).value.unwrap();
        assert!((model_aed(&p, &d).unwrap() - want).abs() < 1e-3);
        checked += 1;
    }
}

#[test]
fn degenerate_means_give_degenerate_outcomes() {
    let d = synth::planted_gap(2000, 1);
    for (mu, y) in [(1.0, 1), (0.0, 0), (1.7, 1), (-0.4, 0)] {
        let p = pair(constant_model(&d, mu), constant_model(&d, mu), GammaSpec::default());
        for seed in [0, 1, 99] {
            let r = regenerate(&d, &p, seed).unwrap();
            assert!(r.records().iter().all(|r| r.y == y));
        }
    }
}

#[test]
fn regenerated_outcomes_concentrate() {
    let d = synth::symmetric(50_000, 2);
    let p = pair(constant_model(&d, 0.3), constant_model(&d, 0.3), GammaSpec::default());
    let r = regenerate(&d, &p, 12).unwrap();
    let mean = r.records().iter().map(|r| f64::from(r.y)).sum::<f64>() / r.len() as f64;
    assert!((mean - 0.3).abs() < 0.01, "{mean}");
    let other = regenerate(&d, &p, 13).unwrap();
    assert_ne!(r.records(), other.records());
}

#[test]
fn utility_loss_properties() {
    let d = common::random_dataset(3, 500, 2, 4);
    let p = fit_fair(&d, 0.0, &GammaSpec::default()).unwrap();
    let r = regenerate(&d, &p, 1).unwrap();
    let loss = utility_loss(&d, &r).unwrap();
    assert!(loss > 0.0);
    assert_eq!(utility_loss(&d, &d).unwrap(), 0.0);
    let mut shuffled: Vec<Record> = r.records().to_vec();
    shuffled.reverse();
    shuffled.swap(3, 100);
    let shuffled = Dataset::new(r.schema().clone(), shuffled).unwrap();
    assert!((utility_loss(&d, &shuffled).unwrap() - loss).abs() < 1e-9);
    let mut other = d.records().to_vec();
    other.rotate_left(17);
    let other = Dataset::new(d.schema().clone(), other).unwrap();
    assert!((utility_loss(&other, &r).unwrap() - loss).abs() < 1e-9);
    let smaller = common::random_dataset(3, 400, 2, 4);
    assert!(utility_loss(&d, &smaller).is_err());
}

#[test]
fn repair_round_trip_on_synthetic_data() {
    let opts = DetectOptions {
        gamma: planted_gamma(),
        ..DetectOptions::default()
    };
    let biased = synth::planted_gap(20_000, 10);
    let none = fit_fair(&biased, 0.0, &planted_gamma()).unwrap();
    let kept = regenerate(&biased, &none, 1).unwrap();
    assert!(verify_repair(&kept, &RegressionBackend::default(), &opts).unwrap().verdict);

    let fixed = fit_fair(&biased, 5.0, &planted_gamma()).unwrap();
    let repaired = regenerate(&biased, &fixed, 1).unwrap();
    let audit = verify_repair(&repaired, &RegressionBackend::default(), &opts).unwrap();
    assert!(!audit.verdict, "{:?}", audit.aed);

    let fair = synth::symmetric(20_000, 10);
    let p = fit_fair(&fair, 5.0, &planted_gamma()).unwrap();
    let r = regenerate(&fair, &p, 1).unwrap();
    assert!(!verify_repair(&r, &RegressionBackend::default(), &opts).unwrap().verdict);
}

#[test]
fn invalid_lambda_is_rejected() {
    let d = synth::symmetric(500, 1);
    assert!(fit_fair(&d, -1.0, &GammaSpec::default()).is_err());
    assert!(fit_fair(&d, f64::NAN, &GammaSpec::default()).is_err());
}
