mod common;

use common::*;
use defectcal::dataset::{apply_filters, load_csv, Column, Dataset, FilterRule, Predicate, Role, Row, Transform, Value, VariableSpec};
use defectcal::evaluation::{kfold_plan, pred_at, train_size};
use defectcal::numerics::dist::{f_cdf, normal_cdf, studentized_range_cdf, t_cdf};
use defectcal::numerics::{solve_least_squares, Matrix};
use defectcal::recalibration::{firing_strengths, nfa_eval, recalibrated_predict, Nfa};
use defectcal::regression::catreg::pava;
use defectcal::regression::{model_predict, Quantification, QuantificationSet};
use defectcal::screening::{anova_oneway, merge_dataset_categories, spearman, tukey_hsd, Grouping};
use defectcal::LinearModel;
use proptest::prelude::*;

fn some(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|&x| Some(x)).collect()
}

fn small_dataset(rows: &[(Option<f64>, usize, Option<f64>)]) -> Dataset {
    Dataset::new(
        vec![
            VariableSpec::numeric("defects", Role::Response),
            VariableSpec::categorical("rating", Role::Excluded, &["A", "B", "C", "D"]),
            VariableSpec::numeric("fp", Role::Predictor),
        ],
        vec![
            Column::Numeric(rows.iter().map(|r| r.0).collect()),
            Column::Categorical(rows.iter().map(|r| Some(r.1)).collect()),
            Column::Numeric(rows.iter().map(|r| r.2).collect()),
        ],
    )
    .unwrap()
}

fn cell() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![1 => Just(None), 4 => (-1e6f64..1e6).prop_map(Some)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filters_are_idempotent_and_compose(rows in prop::collection::vec((cell(), 0usize..4, cell()), 0..30), lo in -1e6f64..0.0) {
        let ds = small_dataset(&rows);
        let r1 = vec![FilterRule::new("rating", Predicate::InSet(vec!["A".into(), "B".into()]))];
        let r2 = vec![
            FilterRule::new("defects", Predicate::NonMissing),
            FilterRule::new("fp", Predicate::Range { lo, hi: 1e6 }),
        ];
        let once = apply_filters(&ds, &r1).unwrap();
        prop_assert_eq!(&apply_filters(&once, &r1).unwrap(), &once);
        let both: Vec<FilterRule> = r1.iter().chain(&r2).cloned().collect();
        prop_assert_eq!(apply_filters(&ds, &both).unwrap(), apply_filters(&once, &r2).unwrap());
        prop_assert_eq!(apply_filters(&ds, &[]).unwrap(), ds);
    }

    #[test]
    fn csv_round_trips(rows in prop::collection::vec((cell(), 0usize..4, cell()), 0..30)) {
        let ds = small_dataset(&rows);
        let bytes = ds.to_csv().unwrap();
        let back = load_csv(bytes.as_slice(), ds.schema()).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn cdfs_are_monotone_and_bounded(a in -50f64..50.0, b in -50f64..50.0, df in 1u64..200, k in 2usize..8) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let pairs = [
            (normal_cdf(lo), normal_cdf(hi)),
            (t_cdf(lo, df).unwrap(), t_cdf(hi, df).unwrap()),
            (f_cdf(lo.abs(), 3, df).unwrap(), f_cdf(hi.abs().max(lo.abs()), 3, df).unwrap()),
            (
                studentized_range_cdf(lo.abs() / 5.0, k, df).unwrap(),
                studentized_range_cdf(hi.abs().max(lo.abs()) / 5.0, k, df).unwrap(),
            ),
        ];
        for (p, q) in pairs {
            prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
            prop_assert!(p <= q + 1e-12, "{} > {}", p, q);
        }
    }

    #[test]
    fn least_squares_residuals_are_orthogonal(
        cols in prop::collection::vec(prop::collection::vec(-10f64..10.0, 12), 1..4),
        y in prop::collection::vec(-100f64..100.0, 12),
    ) {
        let mut all = vec![vec![1.0; 12]];
        all.extend(cols);
        let m = Matrix::from_columns(&all);
        if let Ok(sol) = solve_least_squares(&m, &y) {
            let fitted = m.mul_vec(&sol.coefficients);
            let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            let scale = y.iter().fold(1.0f64, |s, v| s.max(v.abs())) * 10.0 * 12.0;
            for g in m.tr_mul_vec(&r) {
                prop_assert!(g.abs() <= 1e-8 * scale, "{}", g);
            }
        }
    }

    #[test]
    fn spearman_is_rank_invariant_and_symmetric(v in prop::collection::vec((-5f64..5.0, -5f64..5.0), 3..40)) {
        let x: Vec<f64> = v.iter().map(|p| p.0).collect();
        let y: Vec<f64> = v.iter().map(|p| p.1).collect();
        let Ok(base) = spearman(&some(&x), &some(&y)) else { return Ok(()); };
        let ex: Vec<f64> = x.iter().map(|a| a.exp()).collect();
        let moved = spearman(&some(&ex), &some(&y)).unwrap();
        let swapped = spearman(&some(&y), &some(&x)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&base.rho));
        prop_assert!((moved.rho - base.rho).abs() < 1e-12);
        prop_assert!((swapped.rho - base.rho).abs() < 1e-12);
    }

    #[test]
    fn anova_ignores_shift_and_scale(
        v in prop::collection::vec((-5f64..5.0, 0usize..3), 6..40),
        shift in -100f64..100.0,
        scale in 0.01f64..100.0,
    ) {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let codes: Vec<Option<usize>> = v.iter().map(|p| Some(p.1)).collect();
        let y: Vec<Option<f64>> = v.iter().map(|p| Some(p.0)).collect();
        let g = Grouping { labels: &labels, codes: &codes };
        let Ok(a) = anova_oneway(&y, g) else { return Ok(()); };
        if !a.f_value.is_finite() || a.f_value < 1e-6 { return Ok(()); }
        let moved: Vec<Option<f64>> = v.iter().map(|p| Some(p.0 * scale + shift)).collect();
        let b = anova_oneway(&moved, g).unwrap();
        prop_assert!((a.f_value - b.f_value).abs() <= 1e-6 * a.f_value.max(1.0));
    }

    #[test]
    fn tukey_adjustment_is_conservative(v in prop::collection::vec((-3f64..3.0, 0usize..4), 16..50)) {
        let labels: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let codes: Vec<Option<usize>> = v.iter().map(|p| Some(p.1)).collect();
        let y: Vec<Option<f64>> = v.iter().map(|p| Some(p.0 + p.1 as f64 * 0.5)).collect();
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 4];
        for p in &v { groups[p.1].push(p.0 + p.1 as f64 * 0.5); }
        if groups.iter().filter(|g| !g.is_empty()).count() < 3 || groups.iter().any(|g| g.len() == 1) { return Ok(()); }
        let Ok(pairs) = tukey_hsd(&y, Grouping { labels: &labels, codes: &codes }, 0.05) else { return Ok(()); };
        // unadjusted pooled t-test p with the same pooled variance
        let present: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
        let n: usize = present.iter().map(|g| g.len()).sum();
        let df = (n - present.len()) as u64;
        let ssw: f64 = present.iter().map(|g| { let m = g.iter().sum::<f64>() / g.len() as f64; g.iter().map(|x| (x - m).powi(2)).sum::<f64>() }).sum();
        let mse = ssw / df as f64;
        for p in pairs {
            let gi = &groups[labels.iter().position(|l| *l == p.group_i).unwrap()];
            let gj = &groups[labels.iter().position(|l| *l == p.group_j).unwrap()];
            let se = (mse * (1.0 / gi.len() as f64 + 1.0 / gj.len() as f64)).sqrt();
            let t = p.mean_difference / se;
            let raw = 2.0 * (1.0 - t_cdf(t.abs(), df).unwrap());
            prop_assert!(p.p_adjusted >= raw - 1e-9, "{} < {}", p.p_adjusted, raw);
        }
    }

    #[test]
    fn merging_keeps_rows_and_other_labels(codes in prop::collection::vec(0usize..4, 1..40)) {
        let ds = Dataset::new(
            vec![
                VariableSpec::numeric("y", Role::Response),
                VariableSpec::categorical("c", Role::Predictor, &["A", "B", "C", "D"]),
            ],
            vec![
                Column::Numeric(codes.iter().map(|&c| Some(c as f64)).collect()),
                Column::Categorical(codes.iter().map(|&c| Some(c)).collect()),
            ],
        ).unwrap();
        let merged = merge_dataset_categories(&ds, "c", &[("B".into(), "C".into())]).unwrap();
        prop_assert_eq!(merged.row_count(), ds.row_count());
        for i in 0..ds.row_count() {
            let (Value::Category(before), Value::Category(after)) = (&ds.row(i)["c"], &merged.row(i)["c"]) else { unreachable!() };
            if before == "B" || before == "C" { prop_assert_eq!(after.as_str(), "B+C"); } else { prop_assert_eq!(after, before); }
        }
    }

    #[test]
    fn firing_strengths_partition_unity(anchors in prop::collection::vec(-10f64..10.0, 1..9), x in -1e3f64..1e3) {
        let nfa = Nfa::from_values("v", &anchors).unwrap();
        let w = firing_strengths(&nfa, x);
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let out = nfa_eval(&nfa, x);
        let (lo, hi) = nfa.consequents.iter().fold((f64::MAX, f64::MIN), |(a, b), &c| (a.min(c), b.max(c)));
        prop_assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
    }

    #[test]
    fn untrained_recalibration_matches_regression(b in -5f64..5.0, c in -3f64..3.0, x in -10f64..10.0, g in 0usize..3) {
        let labels: Vec<String> = ["p", "q", "r"].iter().map(|s| s.to_string()).collect();
        let codings: QuantificationSet = [Quantification::index_coding("g", &labels)].into_iter().collect();
        let model = LinearModel::from_coefficients("y", Transform::Ln, 0.5, &[("g", b), ("x", c)], codings.clone());
        let nfa = defectcal::recalibration::init_nfa(codings.get("g").unwrap()).unwrap();
        let row: Row = [("g".to_string(), Value::Category(labels[g].clone())), ("x".to_string(), Value::Number(x))].into_iter().collect();
        let a = recalibrated_predict(&model, &[nfa], &row, false).unwrap();
        let m = model_predict(&model, None, &row, false).unwrap();
        prop_assert!((a - m).abs() <= 1e-10 * (1.0 + m.abs()));
        prop_assert_eq!(model_predict(&model, None, &row, true).unwrap(), m.exp());
    }

    #[test]
    fn pred_is_monotone_in_level(
        v in prop::collection::vec((1f64..1e4, 1f64..1e4), 1..30),
        m1 in 0f64..3.0,
        m2 in 0f64..3.0,
    ) {
        let a: Vec<f64> = v.iter().map(|p| p.0).collect();
        let p: Vec<f64> = v.iter().map(|p| p.1).collect();
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(pred_at(&a, &p, lo).unwrap() <= pred_at(&a, &p, hi).unwrap());
        prop_assert_eq!(pred_at(&a, &p, 1e300).unwrap(), 1.0);
    }

    #[test]
    fn folds_partition_rows(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let plan = kfold_plan(n, k, seed).unwrap();
        prop_assert_eq!(plan.assignment.len(), n);
        let sizes = plan.fold_sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        for f in 0..k {
            let test = plan.test_rows(f);
            let train = plan.train_rows(f);
            prop_assert_eq!(test.len() + train.len(), n);
            prop_assert!(test.iter().all(|r| !train.contains(r)));
        }
        prop_assert_eq!(kfold_plan(n, k, seed).unwrap(), plan);
    }

    #[test]
    fn train_size_rounds_half_up(n in 2usize..500, f in 0.01f64..0.99) {
        let t = train_size(n, f);
        prop_assert!((t as f64 - n as f64 * f).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn pava_is_monotone_and_mean_preserving(v in prop::collection::vec((-10f64..10.0, 0.1f64..5.0), 1..20)) {
        let values: Vec<f64> = v.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = v.iter().map(|p| p.1).collect();
        let fit = pava(&values, &weights);
        prop_assert!(fit.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let wm = |xs: &[f64]| xs.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
        prop_assert!((wm(&fit) - wm(&values)).abs() <= 1e-9 * (1.0 + wm(&values).abs()));
    }

    #[test]
    fn rank_sums_are_triangular(v in prop::collection::vec(-3i32..3, 1..50)) {
        let vals: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let r = defectcal::transform::rank_average(&vals).unwrap();
        let n = vals.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        prop_assert_eq!(r, brute_ranks(&vals));
    }
}
