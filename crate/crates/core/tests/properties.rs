//! Randomized checks of the library's cross-cutting invariants, using
//! the public API only.

use proptest::collection::vec;
use proptest::prelude::*;

use distaudit::data::{gen_synthetic_mixture, sample_membership_plan};
use distaudit::lira::{fit_gaussian_pair, log_lr, mean_gap_filter, GaussianPair, ScoreRecord};
use distaudit::metrics::{chow_test, per_example_accuracy, roc_curve, sign_test, tpr_at_fpr};
use distaudit::nn::softmax_temperature;
use distaudit::seed::derive_seed;
use distaudit::shadow::AttackFamily;

/// Scored records over a handful of examples, each example seen from
/// both sides of the membership split.
fn record_sets() -> impl Strategy<Value = Vec<ScoreRecord>> {
    (2usize..6, 2usize..8, any::<u32>()).prop_map(|(n_examples, n_models, salt)| {
        let mut records = Vec::new();
        for id in 0..n_examples {
            for m in 0..n_models {
                // Quantized deterministic pseudo-scores; coarse enough
                // to produce ties regularly.
                let h = (id as u64 * 7919 + m as u64 * 104729 + salt as u64) % 13;
                let score = h as f64 - 6.0;
                records.push(ScoreRecord {
                    id,
                    score,
                    is_in: Some((h * 31 + id as u64) % 2 == 0),
                    family: AttackFamily::Baseline,
                });
                records.push(ScoreRecord {
                    id,
                    score: -score,
                    is_in: Some((h * 31 + id as u64) % 2 == 1),
                    family: AttackFamily::Baseline,
                });
            }
        }
        records
    })
}

/// The all-pairs probability that a positive outscores a negative,
/// counting ties as half.
fn all_pairs_auc(records: &[ScoreRecord]) -> f64 {
    let pos: Vec<f64> =
        records.iter().filter(|r| r.is_in == Some(true)).map(|r| r.score).collect();
    let neg: Vec<f64> =
        records.iter().filter(|r| r.is_in == Some(false)).map(|r| r.score).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

proptest! {
    #[test]
    fn roc_auc_equals_all_pairs_probability(records in record_sets()) {
        let curve = roc_curve(&records).unwrap();
        let expected = all_pairs_auc(&records);
        prop_assert!((curve.auc - expected).abs() < 1e-12,
            "auc {} vs all-pairs {expected}", curve.auc);
    }

    #[test]
    fn roc_curve_is_monotone_from_origin_to_one_one(records in record_sets()) {
        let curve = roc_curve(&records).unwrap();
        let mut prev = (0.0f64, 0.0f64);
        prop_assert_eq!(curve.points.first().copied().unwrap(), (0.0, 0.0));
        for &(fpr, tpr) in &curve.points {
            prop_assert!(fpr >= prev.0 && tpr >= prev.1, "not monotone at ({fpr}, {tpr})");
            prop_assert!((0.0..=1.0).contains(&fpr) && (0.0..=1.0).contains(&tpr));
            prev = (fpr, tpr);
        }
        prop_assert_eq!(prev, (1.0, 1.0));
    }

    #[test]
    fn tpr_at_fpr_is_monotone_in_the_budget(
        records in record_sets(),
        budgets in vec(0.0f64..1.0, 2..6),
    ) {
        let curve = roc_curve(&records).unwrap();
        let mut sorted = budgets;
        sorted.sort_by(f64::total_cmp);
        let tprs: Vec<f64> = sorted.iter().map(|&b| tpr_at_fpr(&curve, b)).collect();
        for w in tprs.windows(2) {
            prop_assert!(w[0] <= w[1], "tighter budget beat looser one: {tprs:?}");
        }
    }

    #[test]
    fn per_example_accuracy_depends_only_on_score_signs(
        records in record_sets(),
        scale in 1e-6f64..1e6,
    ) {
        let rescaled: Vec<ScoreRecord> = records
            .iter()
            .map(|r| ScoreRecord { score: r.score * scale, ..*r })
            .collect();
        let a = per_example_accuracy(&records).unwrap();
        let b = per_example_accuracy(&rescaled).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gaussian_fit_ignores_sample_order(
        ins in vec(-100.0f64..100.0, 2..12),
        outs in vec(-100.0f64..100.0, 2..12),
    ) {
        let fitted = fit_gaussian_pair(&ins, &outs).unwrap();
        let mut ins_rev = ins;
        let mut outs_rev = outs;
        ins_rev.reverse();
        outs_rev.reverse();
        let refitted = fit_gaussian_pair(&ins_rev, &outs_rev).unwrap();
        prop_assert!((fitted.mu_in - refitted.mu_in).abs() < 1e-9);
        prop_assert!((fitted.sigma_in - refitted.sigma_in).abs() < 1e-9);
        prop_assert!((fitted.mu_out - refitted.mu_out).abs() < 1e-9);
        prop_assert!((fitted.sigma_out - refitted.sigma_out).abs() < 1e-9);
    }

    #[test]
    fn log_lr_negates_when_the_hypotheses_swap(
        mu_in in -10.0f64..10.0,
        mu_out in -10.0f64..10.0,
        sigma_in in 0.1f64..5.0,
        sigma_out in 0.1f64..5.0,
        obs in -20.0f64..20.0,
    ) {
        let g = GaussianPair { mu_in, sigma_in, mu_out, sigma_out, n_in: 2, n_out: 2 };
        let swapped = GaussianPair {
            mu_in: mu_out,
            sigma_in: sigma_out,
            mu_out: mu_in,
            sigma_out: sigma_in,
            n_in: 2,
            n_out: 2,
        };
        let forward = log_lr(&g, obs);
        let backward = log_lr(&swapped, obs);
        prop_assert!((forward + backward).abs() < 1e-9, "{forward} vs {backward}");
    }

    #[test]
    fn mean_gap_filter_selects_a_maximal_prefix(
        gaps in vec(-50.0f64..50.0, 1..20),
        k in 1usize..25,
    ) {
        let pairs: Vec<GaussianPair> = gaps
            .iter()
            .map(|&g| GaussianPair {
                mu_in: g,
                sigma_in: 1.0,
                mu_out: 0.0,
                sigma_out: 1.0,
                n_in: 2,
                n_out: 2,
            })
            .collect();
        let picked = mean_gap_filter(&pairs, k);
        prop_assert_eq!(picked.len(), k.min(pairs.len()));
        // Ascending, in range, no repeats.
        for w in picked.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        // Every selected gap at least matches every unselected gap.
        let selected: std::collections::BTreeSet<usize> = picked.iter().copied().collect();
        let min_in = picked.iter().map(|&i| gaps[i].abs()).fold(f64::INFINITY, f64::min);
        for (i, g) in gaps.iter().enumerate() {
            if !selected.contains(&i) {
                prop_assert!(g.abs() <= min_in + 1e-12);
            }
        }
    }

    #[test]
    fn softmax_lands_on_the_simplex_and_respects_scaling(
        logits in vec(-30.0f64..30.0, 2..8),
        h in 0.05f64..8.0,
    ) {
        let p = softmax_temperature(&logits, h).unwrap();
        prop_assert_eq!(p.len(), logits.len());
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0 + 1e-12));
        // Scaling logits by H and dividing by H must cancel exactly.
        let scaled: Vec<f64> = logits.iter().map(|&z| z * h).collect();
        let q = softmax_temperature(&scaled, h).unwrap();
        let base = softmax_temperature(&logits, 1.0).unwrap();
        for (a, b) in q.iter().zip(&base) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn membership_plans_balance_every_example(
        pool_size in 2usize..40,
        half in 1usize..8,
        seed in any::<u64>(),
    ) {
        let n_models = half * 2;
        let pool: Vec<usize> = (100..100 + pool_size).collect();
        let plan = sample_membership_plan(&pool, n_models, seed).unwrap();
        for pos in 0..pool_size {
            let ins = (0..n_models).filter(|&m| plan.is_in(m, pos)).count();
            prop_assert_eq!(ins, half, "example at {} is IN {} of {}", pos, ins, n_models);
        }
        // Deterministic under the seed.
        let again = sample_membership_plan(&pool, n_models, seed).unwrap();
        for m in 0..n_models {
            prop_assert_eq!(plan.members_of(m), again.members_of(m));
        }
    }

    #[test]
    fn chow_test_statistics_stay_in_range(
        a in vec((-10.0f64..10.0, -10.0f64..10.0), 3..20),
        b in vec((-10.0f64..10.0, -10.0f64..10.0), 3..20),
    ) {
        // Degenerate x-columns are rejected; everything else must give
        // F >= 0 and p in [0, 1].
        match chow_test(&a, &b) {
            Ok((f, p)) => {
                prop_assert!(f >= 0.0);
                prop_assert!((0.0..=1.0).contains(&p), "p {p}");
            }
            Err(_) => {
                // Acceptable only when an x-column is (nearly) constant.
                let degenerate = |pts: &[(f64, f64)]| {
                    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
                    pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() < 1e-9
                };
                prop_assert!(degenerate(&a) || degenerate(&b));
            }
        }
    }

    #[test]
    fn sign_test_p_shrinks_as_positives_accumulate(
        n in 2usize..30,
    ) {
        let mut prev = sign_test(0, n);
        prop_assert!((prev - 1.0).abs() < 1e-12, "no positives must give p = 1");
        for n_pos in 1..=n {
            let p = sign_test(n_pos, n - n_pos);
            prop_assert!(p <= prev + 1e-12, "p rose from {prev} to {p} at {n_pos}");
            prop_assert!(p > 0.0 && p <= 1.0);
            prev = p;
        }
    }

    #[test]
    fn derived_seeds_never_collide_across_streams(
        master in any::<u64>(),
        s1 in 0u64..1 << 32,
        s2 in 0u64..1 << 32,
    ) {
        prop_assume!(s1 != s2);
        prop_assert_ne!(derive_seed(master, s1), derive_seed(master, s2));
        prop_assert_eq!(derive_seed(master, s1), derive_seed(master, s1));
    }

    #[test]
    fn synthetic_mixture_is_deterministic_and_well_labeled(
        classes in 2usize..5,
        dims in 1usize..6,
        per_class in 1usize..8,
        seed in any::<u64>(),
    ) {
        let d = gen_synthetic_mixture(classes, dims, per_class, 0.5, seed).unwrap();
        prop_assert_eq!(d.len(), classes * per_class);
        prop_assert_eq!(d.dim(), dims);
        prop_assert!(d.labels.iter().all(|&l| l < classes));
        let again = gen_synthetic_mixture(classes, dims, per_class, 0.5, seed).unwrap();
        prop_assert_eq!(d.features.data(), again.features.data());
        prop_assert_eq!(d.labels, again.labels);
    }
}
