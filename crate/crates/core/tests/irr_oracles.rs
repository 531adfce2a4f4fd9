use ami_core::irr::{
    criterion_average, icc_3_1, mean_absolute_difference, weighted_kappa, weighted_kappa_pair, IrrError,
    KappaWeights, RatingMatrix,
};
use proptest::prelude::*;
use ami_testkit::irr as oracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn w(scheme: KappaWeights) -> oracle::Weights {
    match scheme {
        KappaWeights::Linear => oracle::Weights::Linear,
        KappaWeights::Quadratic => oracle::Weights::Quadratic,
    }
}

#[test]
fn statistics_match_brute_force_oracles() {
    let mut rng = ami_testkit::rng(0x1ee7);
    for case in 0..1000 {
        let rows = oracle::random_rows(&mut rng, 6, 15, 5);
        let m = RatingMatrix::from_rows(rows.clone(), 5).unwrap();
        for scheme in [KappaWeights::Linear, KappaWeights::Quadratic] {
            let got = weighted_kappa(&m, scheme).unwrap().value;
            let want = oracle::kappa(&rows, w(scheme)).unwrap();
            assert!((got - want).abs() <= 1e-12, "case {case} {scheme}: {got} vs {want}");
        }
        match (icc_3_1(&m), oracle::icc_3_1(&rows)) {
            (Ok(got), Some(want)) => assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}"),
            (Err(IrrError::Undefined(_)), None) => {}
            (got, want) => panic!("case {case}: {got:?} vs {want:?}"),
        }
        let (got, want) = (mean_absolute_difference(&m), oracle::mad(&rows));
        assert!((got - want).abs() <= 1e-12, "case {case}: {got} vs {want}");
    }
}

#[test]
fn reversed_pair_matches_formula() {
    let a = [1, 2, 3, 4, 5];
    let b = [5, 4, 3, 2, 1];
    for scheme in [KappaWeights::Linear, KappaWeights::Quadratic] {
        let got = weighted_kappa_pair(&a, &b, scheme, 5).unwrap();
        assert!((got - oracle::kappa_pair(&a, &b, w(scheme)).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn constant_matrices_follow_the_degenerate_rules() {
    for v in 1..=5u8 {
        let m = RatingMatrix::from_rows(vec![vec![v; 15]; 6], 5).unwrap();
        for scheme in [KappaWeights::Linear, KappaWeights::Quadratic] {
            assert_eq!(weighted_kappa(&m, scheme).unwrap().value, 1.0);
        }
        assert!(matches!(icc_3_1(&m), Err(IrrError::Undefined(_))));
        assert_eq!(mean_absolute_difference(&m), 0.0);
        assert_eq!(criterion_average(&m), v as f64);
    }
    // one constant rater against a varied one: a defined pair, not degenerate
    let mixed = RatingMatrix::from_rows(vec![vec![5; 4], vec![1, 2, 3, 4]], 5).unwrap();
    assert_eq!(weighted_kappa(&mixed, KappaWeights::Quadratic).unwrap().value, 0.0);
}

#[test]
fn synthetic_matrix_with_mean_4_78() {
    // 90 cells summing to 430: 70 fives and 20 fours
    let mut cells = vec![5u8; 70];
    cells.extend([4u8; 20]);
    let rows: Vec<Vec<u8>> = cells.chunks(15).map(<[u8]>::to_vec).collect();
    let avg = criterion_average(&RatingMatrix::from_rows(rows, 5).unwrap());
    assert_eq!(format!("{avg:.2}"), "4.78");
}

fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (2usize..7, 2usize..16).prop_flat_map(|(r, n)| prop::collection::vec(prop::collection::vec(1u8..=5, n), r))
}

fn permuted(rows: &[Vec<u8>], rater_perm: &[usize], item_perm: &[usize]) -> Vec<Vec<u8>> {
    rater_perm
        .iter()
        .map(|&i| item_perm.iter().map(|&j| rows[i][j]).collect())
        .collect()
}

proptest! {
    #[test]
    fn invariant_under_relabeling(rows in matrix_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rp: Vec<usize> = (0..rows.len()).collect();
        let mut ip: Vec<usize> = (0..rows[0].len()).collect();
        rp.shuffle(&mut rng);
        ip.shuffle(&mut rng);
        let a = RatingMatrix::from_rows(rows.clone(), 5).unwrap();
        let b = RatingMatrix::from_rows(permuted(&rows, &rp, &ip), 5).unwrap();
        prop_assert!((criterion_average(&a) - criterion_average(&b)).abs() < 1e-12);
        prop_assert!((mean_absolute_difference(&a) - mean_absolute_difference(&b)).abs() < 1e-12);
        for scheme in [KappaWeights::Linear, KappaWeights::Quadratic] {
            let ka = weighted_kappa(&a, scheme).map(|k| k.value).ok();
            let kb = weighted_kappa(&b, scheme).map(|k| k.value).ok();
            match (ka, kb) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
        match (icc_3_1(&a), icc_3_1(&b)) {
            (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-9),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn statistics_stay_in_bounds(rows in matrix_strategy()) {
        let m = RatingMatrix::from_rows(rows, 5).unwrap();
        let avg = criterion_average(&m);
        prop_assert!((1.0..=5.0).contains(&avg));
        let mad = mean_absolute_difference(&m);
        prop_assert!((0.0..=4.0).contains(&mad));
        for scheme in [KappaWeights::Linear, KappaWeights::Quadratic] {
            if let Ok(k) = weighted_kappa(&m, scheme) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k.value), "{}", k.value);
            }
        }
        if let Ok(icc) = icc_3_1(&m) {
            prop_assert!(icc <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn identical_raters_agree(row in prop::collection::vec(1u8..=5, 2..16), r in 2usize..7) {
        prop_assume!(row.iter().any(|&v| v != row[0]));
        let m = RatingMatrix::from_rows(vec![row; r], 5).unwrap();
        prop_assert_eq!(mean_absolute_difference(&m), 0.0);
        for scheme in [KappaWeights::Linear, KappaWeights::Quadratic] {
            prop_assert!((weighted_kappa(&m, scheme).unwrap().value - 1.0).abs() < 1e-12);
        }
    }
}
