use mimo_jscc_core::codec::power_normalize;
use mimo_jscc_core::evaluator::QualityPrediction;
use mimo_jscc_core::feedback::{group_split_allocation, min_bits_search, success_ratio, DegradationTable, OutageSpec};
use mimo_jscc_core::image::psnr_from_mse;
use mimo_jscc_core::linalg::{svd, CMatrix, C64};
use mimo_jscc_core::quantizer::fit_lloyd_max;
use mimo_jscc_core::quantizer::LloydMaxOptions;
use proptest::prelude::*;

fn predictions(values: &[f64]) -> Vec<QualityPrediction> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| QualityPrediction::new(i as u64 * 3 + 1, v))
        .collect()
}

fn matrix() -> impl Strategy<Value = CMatrix> {
    (1usize..6, 1usize..6).prop_flat_map(|(m, n)| {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), m * n).prop_map(move |v| {
            let data: Vec<C64> = v.into_iter().map(|(re, im)| C64::new(re, im)).collect();
            CMatrix::from_row_major(m, n, data).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn success_ratio_non_increasing_in_threshold(
        psnrs in prop::collection::vec(0.0f64..60.0, 1..50),
        a in -10.0f64..70.0,
        b in -10.0f64..70.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let r_lo = success_ratio(&psnrs, &OutageSpec::new(lo).unwrap()).unwrap();
        let r_hi = success_ratio(&psnrs, &OutageSpec::new(hi).unwrap()).unwrap();
        prop_assert!(r_hi <= r_lo);
        prop_assert!((0.0..=1.0).contains(&r_lo));
    }

    #[test]
    fn group_split_even_average(values in prop::collection::vec(0.0f64..50.0, 1..40), high in 2u8..9) {
        let mut values = values;
        if values.len() % 2 == 1 {
            values.pop();
        }
        prop_assume!(!values.is_empty());
        let plan = group_split_allocation(&predictions(&values), high, high - 1).unwrap();
        prop_assert_eq!(plan.average_bits(), (2.0 * high as f64 - 1.0) / 2.0);
        prop_assert!(plan.assignment().values().all(|b| *b == high || *b == high - 1));
    }

    #[test]
    fn min_bits_total_bounded(
        values in prop::collection::vec(0.0f64..50.0, 1..40),
        th in 0.0f64..50.0,
        p7 in 0.0f64..1.0,
        p6 in 0.0f64..2.0,
        p5 in 0.0f64..4.0,
    ) {
        let table = DegradationTable::new([(7, p7), (6, p6), (5, p5)]).unwrap();
        let spec = OutageSpec::new(th).unwrap();
        let preds = predictions(&values);
        let all = min_bits_search(&preds, &[7, 6, 5], 0.5, &table, &spec).unwrap().plan;
        let cap = 7 * values.len() as u64;
        prop_assert!(all.total_bits() <= cap);
        let has_slack = values.iter().any(|v| v - p6 >= th || v - p5 >= th);
        prop_assert_eq!(all.total_bits() == cap, !has_slack);
        prop_assert!(all.assignment().values().all(|b| [5, 6, 7].contains(b)));
    }

    #[test]
    fn svd_reconstructs(a in matrix()) {
        let s = svd(&a);
        let scale = a.frobenius_norm().max(1e-300);
        prop_assert!(a.sub(&s.reconstruct()).frobenius_norm() / scale < 1e-12);
        prop_assert!(s.u.orthonormality_error() < 1e-12);
        prop_assert!(s.v.orthonormality_error() < 1e-12);
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn power_normalization_unit_average(raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let z: Vec<C64> = raw.into_iter().map(|(a, b)| C64::new(a, b)).collect();
        prop_assume!(z.iter().any(|c| c.norm() > 1e-6));
        let out = power_normalize(&z).unwrap();
        let power: f64 = out.iter().map(|c| c.norm_sqr()).sum::<f64>() / out.len() as f64;
        prop_assert!((power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_monotone_in_mse(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
        prop_assume!(a < b);
        prop_assert!(psnr_from_mse(a) >= psnr_from_mse(b));
    }

    #[test]
    fn lloyd_max_codebook_is_ordered_and_no_worse(
        samples in prop::collection::vec(-3.0f64..3.0, 64..256),
        bits in 1u8..4,
    ) {
        let mut distinct = samples.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assume!(distinct.len() >= 1 << bits);
        let fit = fit_lloyd_max(&samples, bits, LloydMaxOptions::default()).unwrap();
        let book = &fit.codebook;
        prop_assert!(book.levels().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(book.thresholds().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(fit.final_mse() <= fit.initial_mse() + 1e-12);
        for x in &samples {
            let q = book.quantize(*x);
            let nearest = book.levels().iter().map(|l| (l - x).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(((q - x).abs() - nearest).abs() < 1e-12);
        }
    }
}
