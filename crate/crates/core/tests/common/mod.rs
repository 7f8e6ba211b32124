//! Shared fixtures and the property checks run both by `properties.rs` and
//! by the acceptance suite.
#![allow(dead_code)]

use eqeffort::dataset::Covariate;
use eqeffort::effort::{
    aed_continuous, aed_discrete, detect, min_effort, DetectOptions, EffortProfile, FnCurve,
    GammaSpec, OutcomeCurve, Psi, RegressionBackend, WeightingBackend,
};
use eqeffort::removal::{fit_fair, regenerate};
use eqeffort::regress::fit_ols;
use eqeffort::scm::ScmModel;
use eqeffort::synth::random_scm;
use eqeffort::{Backend, Dataset, EffortBackend, Record, Schema, Side};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn schema(k: usize, levels: u32) -> Schema {
    Schema {
        protected_attr: "sex".into(),
        protected_pos: "M".into(),
        protected_neg: "F".into(),
        treatment_attr: "t".into(),
        treatment_levels: (0..levels).collect(),
        outcome_attr: "y".into(),
        outcome_pos: "1".into(),
        outcome_neg: "0".into(),
        covariates: (0..k)
            .map(|i| Covariate {
                name: format!("x{i}"),
                cardinality: 2,
            })
            .collect(),
        match_attrs: (0..k).map(|i| format!("x{i}")).collect(),
    }
}

/// Random records with an outcome probability increasing in t and a
/// group-dependent shift; every (side, level) cell gets at least two rows.
pub fn random_dataset(seed: u64, n: usize, k: usize, levels: u32) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: f64 = rng.random_range(-0.2..0.2);
    let mut records = Vec::with_capacity(n);
    let push = |rng: &mut ChaCha8Rng, records: &mut Vec<Record>, s: Side, t: u32| {
        let id = records.len() as u64;
        let x: Vec<u32> = (0..k).map(|_| u32::from(rng.random_bool(0.5))).collect();
        let p = (0.15 + 0.6 * f64::from(t) / f64::from(levels.max(2) - 1)
            + if s == Side::Plus { shift } else { 0.0 }
            + 0.05 * x.iter().sum::<u32>() as f64)
            .clamp(0.02, 0.98);
        records.push(Record {
            id,
            s,
            t,
            x,
            y: u8::from(rng.random_bool(p)),
        });
    };
    for s in [Side::Plus, Side::Minus] {
        for t in 0..levels {
            for _ in 0..2 {
                push(&mut rng, &mut records, s, t);
            }
        }
    }
    while records.len() < n {
        let s = if rng.random_bool(0.5) { Side::Plus } else { Side::Minus };
        let t = rng.random_range(0..levels);
        push(&mut rng, &mut records, s, t);
    }
    Dataset::new(schema(k, levels), records).unwrap()
}

/// Same records with the protected groups swapped.
pub fn relabel(d: &Dataset) -> Dataset {
    let mut schema = d.schema().clone();
    std::mem::swap(&mut schema.protected_pos, &mut schema.protected_neg);
    let records = d
        .records()
        .iter()
        .map(|r| Record { s: r.s.other(), ..r.clone() })
        .collect();
    Dataset::new(schema, records).unwrap()
}

pub fn tabulated(values: &[f64]) -> OutcomeCurve {
    OutcomeCurve::tabulated(
        Backend::Scm,
        "curve".into(),
        (0..values.len() as u32).collect(),
        values.iter().map(|&v| Some(v)).collect(),
    )
}

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn curve_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, n),
        )
    })
}

fn profile(a: &[f64], b: &[f64], gammas: &[f64]) -> EffortProfile {
    EffortProfile::build(&tabulated(a), &tabulated(b), gammas)
}

/// Swapping the groups negates every δ(γ) and the AED exactly.
pub fn delta_antisymmetry() -> Result<(), String> {
    check(
        256,
        (curve_pair(), prop::collection::vec(0.0..1.0f64, 1..12)),
        |((a, b), gammas)| {
            let ab = profile(&a, &b, &gammas);
            let ba = profile(&b, &a, &gammas);
            for (p, q) in ab.points.iter().zip(&ba.points) {
                prop_assert_eq!(p.delta, q.delta.map(|d| -d));
            }
            prop_assert_eq!(aed_discrete(&ab).value, aed_discrete(&ba).value.map(|d| -d));
            Ok(())
        },
    )?;
    check(12, (0u64..1_000, 1usize..3), |(seed, k)| {
        let d = random_dataset(seed, 300, k, 4);
        let swapped = relabel(&d);
        let opts = DetectOptions {
            gamma: GammaSpec::Discrete {
                values: vec![0.3, 0.5, 0.7],
            },
            ..DetectOptions::default()
        };
        let backends: [&dyn EffortBackend; 2] = [&RegressionBackend::default(), &WeightingBackend::default()];
        for b in backends {
            let r = detect(&d, b, &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let s = detect(&swapped, b, &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for (p, q) in r.profile.points.iter().zip(&s.profile.points) {
                prop_assert_eq!(p.delta, q.delta.map(|d| -d));
            }
            prop_assert_eq!(r.aed, s.aed.map(|a| -a));
            prop_assert_eq!(r.verdict, s.verdict);
        }
        Ok(())
    })
}

/// Achievability is downward-closed in γ and Ψ never decreases.
pub fn psi_monotone() -> Result<(), String> {
    let ordered = |psi_lo: Psi, psi_hi: Psi| -> Result<(), TestCaseError> {
        if let Some(hi) = psi_hi.value() {
            let lo = psi_lo.value();
            prop_assert!(lo.is_some(), "higher γ reachable but lower γ not");
            prop_assert!(lo.unwrap() <= hi);
        }
        Ok(())
    };
    check(
        256,
        (prop::collection::vec(0.0..1.0f64, 1..8), 0.0..1.0f64, 0.0..1.0f64),
        |(values, g1, g2)| {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let c = tabulated(&values);
            ordered(min_effort(&c, lo), min_effort(&c, hi))
        },
    )?;
    check(
        256,
        (-1.0..1.0f64, 0.01..1.0f64, 0.0..1.0f64, 0.0..1.0f64),
        |(intercept, slope, g1, g2)| {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let line = eqeffort::regress::SubgroupLine { intercept, slope };
            let c = OutcomeCurve::affine(Backend::Regression, "line".into(), vec![0, 1, 2, 3, 4], line);
            ordered(min_effort(&c, lo), min_effort(&c, hi))
        },
    )
}

/// A single γ gives AED = δ(γ).
pub fn aed_singleton() -> Result<(), String> {
    check(256, (curve_pair(), 0.0..1.0f64), |((a, b), g)| {
        let p = profile(&a, &b, &[g]);
        prop_assert_eq!(aed_discrete(&p).value, p.points[0].delta);
        Ok(())
    })
}

fn cubic(c: [f64; 4]) -> impl Fn(f64) -> f64 {
    move |t: f64| c[0] + t * (c[1] + t * (c[2] + t * c[3]))
}

/// Plain bisection for an increasing function on [0, 1].
fn invert(f: &impl Fn(f64) -> f64, gamma: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn increasing_cubic() -> impl Strategy<Value = [f64; 4]> {
    (-0.5..0.5f64, 0.1..2.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b, c, d)| [a, b, c, d])
}

/// The inverse-integral form agrees with trapezoid quadrature of f⁻¹.
pub fn laisant_vs_quadrature() -> Result<(), String> {
    check(
        48,
        (increasing_cubic(), increasing_cubic(), 0.0..0.45f64, 0.55..1.0f64),
        |(cp, cm, u1, u2)| {
            let (fp, fm) = (cubic(cp), cubic(cm));
            let lo = fp(0.0).max(fm(0.0));
            let hi = fp(1.0).min(fm(1.0));
            prop_assume!(hi - lo > 0.05);
            let (g1, g2) = (lo + (hi - lo) * u1, lo + (hi - lo) * u2);
            let got = aed_continuous(
                &FnCurve { f: &fp, lo: 0.0, hi: 1.0 },
                &FnCurve { f: &fm, lo: 0.0, hi: 1.0 },
                g1,
                g2,
            )
            .map_err(|e| TestCaseError::fail(e.to_string()))?
            .value;
            let n = 10_000;
            let h = (g2 - g1) / n as f64;
            let diff = |g: f64| invert(&fp, g) - invert(&fm, g);
            let mut sum = 0.5 * (diff(g1) + diff(g2));
            for i in 1..n {
                sum += diff(g1 + h * i as f64);
            }
            let want = sum * h / (g2 - g1);
            prop_assert!((got - want).abs() <= 1e-4, "{} vs {}", got, want);
            Ok(())
        },
    )
}

/// Brute-force truncated factorization over every joint assignment.
pub fn enumerate_intervention(
    m: &ScmModel,
    treatment: usize,
    t: usize,
    target: usize,
    value: usize,
    evidence: &[(usize, usize)],
) -> f64 {
    let n = m.cards.len();
    let total: usize = m.cards.iter().product();
    let mut joint_do = 0.0;
    let mut p_evidence = 0.0;
    for code in 0..total {
        let mut a = vec![0; n];
        let mut rest = code;
        for v in 0..n {
            a[v] = rest % m.cards[v];
            rest /= m.cards[v];
        }
        if evidence.iter().any(|&(v, val)| a[v] != val) {
            continue;
        }
        let factor = |v: usize| m.cpts[v].prob(a[v], &a);
        p_evidence += (0..n).map(factor).product::<f64>();
        if a[treatment] == t && a[target] == value {
            joint_do += (0..n).filter(|&v| v != treatment).map(factor).product::<f64>();
        }
    }
    joint_do / p_evidence
}

fn reachable_from(m: &ScmModel, v: usize) -> Vec<bool> {
    let mut seen = vec![false; m.cards.len()];
    let mut stack = vec![v];
    while let Some(u) = stack.pop() {
        for &c in m.graph.children(u) {
            if !seen[c] {
                seen[c] = true;
                stack.push(c);
            }
        }
    }
    seen
}

/// Interventional queries on random 4-node binary DAGs match enumeration.
pub fn scm_enumeration() -> Result<(), String> {
    check(128, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_scm(&mut rng, 4, 2, 0.5);
        let treatment = rng.random_range(0..4);
        let target = (treatment + rng.random_range(1..4)) % 4;
        let desc = reachable_from(&m, treatment);
        let mut evidence = Vec::new();
        for v in 0..4 {
            if v != treatment && v != target && !desc[v] && rng.random_bool(0.5) {
                evidence.push((v, rng.random_range(0..2)));
            }
        }
        for t in 0..2 {
            for value in 0..2 {
                let got = m
                    .intervene(treatment, t, target, value, &evidence)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                let want = enumerate_intervention(&m, treatment, t, target, value, &evidence);
                prop_assert!((got - want).abs() <= 1e-12, "{} vs {}", got, want);
            }
        }
        Ok(())
    })
}

/// Without covariates the weighted curve is the plain per-level mean.
pub fn weighting_no_confounder() -> Result<(), String> {
    check(48, (any::<u64>(), 40usize..300, 2u32..5), |(seed, n, levels)| {
        let d = random_dataset(seed, n, 0, levels);
        let opts = DetectOptions::default();
        let r = detect(&d, &WeightingBackend::default(), &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (side, values) in [(Side::Plus, &r.curves.plus), (Side::Minus, &r.curves.minus)] {
            for (&t, v) in r.curves.levels.iter().zip(values) {
                let ys: Vec<f64> = d
                    .records()
                    .iter()
                    .filter(|x| x.s == side && x.t == t)
                    .map(|x| f64::from(x.y))
                    .collect();
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                prop_assert!((v.unwrap() - mean).abs() <= 1e-12, "{:?} vs {}", v, mean);
            }
        }
        Ok(())
    })
}

/// λ = 0 returns the two per-group least-squares fits.
pub fn lambda_zero_is_ols() -> Result<(), String> {
    check(32, (any::<u64>(), 1usize..3), |(seed, k)| {
        let d = random_dataset(seed, 200, k, 4);
        let p = fit_fair(&d, 0.0, &GammaSpec::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (side, model) in [(Side::Plus, &p.model_plus), (Side::Minus, &p.model_minus)] {
            let ols = fit_ols(&d.view().filter(|r| r.s == side)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for (a, b) in model.to_vec().iter().zip(ols.to_vec()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
        Ok(())
    })
}

/// Same seed, same outcomes; every other column untouched.
pub fn regenerate_determinism() -> Result<(), String> {
    check(32, (any::<u64>(), any::<u64>()), |(data_seed, seed)| {
        let d = random_dataset(data_seed, 200, 2, 4);
        let p = fit_fair(&d, 0.0, &GammaSpec::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let a = regenerate(&d, &p, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = regenerate(&d, &p, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(a.records(), b.records());
        for (orig, new) in d.records().iter().zip(a.records()) {
            prop_assert_eq!((orig.id, orig.s, orig.t, &orig.x), (new.id, new.s, new.t, &new.x));
        }
        Ok(())
    })
}

pub const PROPERTIES: [(&str, fn() -> Result<(), String>); 8] = [
    ("delta antisymmetry", delta_antisymmetry),
    ("psi monotone in gamma", psi_monotone),
    ("AED singleton identity", aed_singleton),
    ("inverse-integral AED vs quadrature", laisant_vs_quadrature),
    ("SCM vs enumeration", scm_enumeration),
    ("weighting without confounders", weighting_no_confounder),
    ("lambda = 0 repair is OLS", lambda_zero_is_ols),
    ("regeneration determinism", regenerate_determinism),
];
