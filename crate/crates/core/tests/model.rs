mod common;

use std::f64::consts::E;

use bmapinf::{BatchSizeDistribution, ModelFile, QueueSelector};
use common::{corpus, oracle, strategies};
use proptest::prelude::*;

#[test]
fn finite_log_moment_matches_brute_force_on_wide_support() {
    let n = 10_000;
    let w: Vec<f64> = (1..=n).map(|k| 1.0 / (k as f64).powf(1.5)).collect();
    let s: f64 = w.iter().sum();
    let pmf: Vec<f64> = w.iter().map(|x| x / s).collect();
    let direct: f64 = pmf.iter().enumerate().map(|(i, p)| p * (i as f64 + 1.0 + E).ln()).sum();
    let b = BatchSizeDistribution::finite(pmf).unwrap();
    assert!((b.log_moment() - direct).abs() < 1e-12);
}

#[test]
fn infinite_families_match_oracle() {
    let laws = [
        BatchSizeDistribution::geometric(0.5).unwrap(),
        BatchSizeDistribution::geometric(0.05).unwrap(),
        BatchSizeDistribution::zeta(2.5).unwrap(),
        BatchSizeDistribution::zeta(2.05).unwrap(),
        BatchSizeDistribution::log_heavy(3.0).unwrap(),
        BatchSizeDistribution::log_heavy(2.3).unwrap(),
    ];
    for b in &laws {
        let lm = oracle::expectation(b, |u| oracle::ln_exp_plus(u, E));
        assert!(
            (b.log_moment() - lm).abs() < 1e-9 * lm,
            "{b:?}: {} vs {lm}",
            b.log_moment()
        );
        let c = 37.0;
        let shift = oracle::expectation(b, |u| oracle::ln_exp_plus(u, c) - c.ln());
        let got = b.log_shift_moment(c).unwrap().value;
        assert!((got - shift).abs() < 1e-9 * shift, "{b:?}: {got} vs {shift}");
    }
    let z = BatchSizeDistribution::zeta(2.5).unwrap();
    if let BatchSizeDistribution::Zeta(law) = &z {
        assert!((law.normalizer() - oracle::normalizer(&z)).abs() < 1e-11);
    }
    let l = BatchSizeDistribution::log_heavy(3.0).unwrap();
    if let BatchSizeDistribution::LogHeavy(law) = &l {
        assert!((law.normalizer() - oracle::normalizer(&l)).abs() < 1e-11);
    }
}

#[test]
fn log_heavy_domain() {
    for beta in [0.5, 1.0] {
        assert_eq!(BatchSizeDistribution::log_heavy(beta).unwrap_err().code(), "BadPmf");
    }
    for (beta, finite) in [(1.2, false), (2.0, false), (2.01, true), (3.0, true)] {
        let b = BatchSizeDistribution::log_heavy(beta).unwrap();
        assert_eq!(b.has_finite_log_moment(), finite, "beta {beta}");
        assert_eq!(b.log_moment().is_finite(), finite, "beta {beta}");
    }
}

#[test]
fn corpus_verdicts_and_errors() {
    let g = corpus::load("mx_geometric").stability_verdict();
    assert!(g.stable);
    let lm = BatchSizeDistribution::geometric(0.5).unwrap().log_moment();
    assert!((lm - 1.516).abs() < 5e-4);
    for name in ["mx_logheavy15", "mx_logheavy20"] {
        let v = corpus::load(name).stability_verdict();
        assert!(!v.stable);
        assert!(v.bound.is_none());
        assert_eq!(v.divergent_streams, vec!["main".to_string()]);
    }
    assert_eq!(corpus::try_load("bad_rowsum").unwrap_err().code(), "NonGenerator");
}

#[test]
fn model_file_round_trip() {
    for name in ["two_class", "mx_zeta25", "mx_logheavy30", "poisson2"] {
        let file = corpus::file(name);
        let model = file.to_model().unwrap();
        let again = ModelFile::from_json(&ModelFile::from_model(&model).to_json_pretty()).unwrap();
        assert_eq!(again.to_model().unwrap(), model, "{name}");
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let text = r#"{"d":1,"d0":[[-1]],"streams":[],"extra":1}"#;
    assert_eq!(ModelFile::from_json(text).unwrap_err().code(), "BadInput");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn finite_log_moment_is_exact(p in strategies::pmf(40)) {
        let direct: f64 = p.iter().enumerate().map(|(i, w)| w * (i as f64 + 1.0 + E).ln()).sum();
        let b = BatchSizeDistribution::finite(p).unwrap();
        prop_assert!((b.log_moment() - direct).abs() < 1e-13);
    }

    /// Moving mass from `k` to `k + shift` can only raise the log moment.
    #[test]
    fn log_moment_monotone_under_dominance(p in strategies::pmf(20), from in 0usize..20, shift in 1usize..10, frac in 0.0f64..1.0) {
        let from = from % p.len();
        let mut q = p.clone();
        q.resize(p.len().max(from + shift + 1), 0.0);
        let moved = p[from] * frac;
        q[from] -= moved;
        q[from + shift] += moved;
        let a = BatchSizeDistribution::finite(p).unwrap().log_moment();
        let b = BatchSizeDistribution::finite(q).unwrap().log_moment();
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn background_law_is_stationary(m in strategies::model(4, vec![1.0, 2.0], strategies::batch())) {
        let theta = m.background_stationary().unwrap();
        prop_assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(theta.iter().all(|&t| t > 0.0));
        for x in m.generator().left_mul(&theta) {
            prop_assert!(x.abs() < 1e-12);
        }
    }

    /// All three views share the arrival structure, so they share the verdict.
    #[test]
    fn verdict_consistent_across_views(m in strategies::model(3, vec![1.0, 3.0], strategies::batch())) {
        let base = m.stability_verdict();
        for q in [QueueSelector::Original, QueueSelector::Queue1, QueueSelector::Queue2] {
            let v = m.view(q).stability_verdict();
            prop_assert_eq!(v.stable, base.stable);
            for (a, b) in v.log_moment_vector.iter().zip(&base.log_moment_vector) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pmf_and_survival_agree(b in strategies::batch(), k in 1u64..200) {
        let head: f64 = (1..=k).map(|j| b.pmf(j)).sum();
        prop_assert!((1.0 - head - b.survival(k)).abs() < 1e-10);
    }

    #[test]
    fn quantile_inverts_survival(b in strategies::batch(), u in 0.0f64..1.0) {
        let k = b.quantile(u, 1 << 53);
        // smallest k with P(B > k) <= 1 - u, up to rounding
        let t = 1.0 - u;
        prop_assert!(b.survival(k) <= t + 1e-12);
        prop_assert!(k == 1 || b.survival(k - 1) > t - 1e-12);
    }
}
