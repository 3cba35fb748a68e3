use coredn::coreset::{build_uniform_coreset, SamplingMethod, WeightedCoreset};
use coredn::depnet::{gibbs_step, DependencyNetwork, GibbsState};
use coredn::glm::{fit_gaussian, poisson_nll, Family};
use coredn::harness::relative_error;
use coredn::leverage::{
    leverage_scores, sampling_probabilities, size_param_for_expected, SamplingOperator,
};
use coredn::matrix::{solve_weighted_least_squares, thin_svd, DataMatrix, DEFAULT_RANK_TOL};
use coredn::structure::{frobenius_difference, top_positive_edges, AdjacencyMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> impl Strategy<Value = DataMatrix> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c)
            .prop_map(move |v| DataMatrix::from_row_slice(r, c, &v).unwrap())
    })
}

fn tall_matrix() -> impl Strategy<Value = DataMatrix> {
    (2usize..6).prop_flat_map(|c| {
        (c + 2..c + 30).prop_flat_map(move |r| {
            prop::collection::vec(-5.0f64..5.0, r * c)
                .prop_map(move |v| DataMatrix::from_row_slice(r, c, &v).unwrap())
        })
    })
}

fn square(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wls_residual_is_weighted_orthogonal(
        a in tall_matrix(),
        seed in any::<u64>(),
        deficient in any::<bool>(),
    ) {
        let n = a.nrows();
        let mut m = a.as_matrix().clone();
        if deficient {
            let c0 = m.column(0).clone_owned();
            m.set_column(1, &(c0 * 3.0));
        }
        let a = DataMatrix::from_matrix(m).unwrap();
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let b: Vec<f64> = (0..n).map(|_| 10.0 * next() - 5.0).collect();
        let w: Vec<f64> = (0..n).map(|_| 0.1 + 3.0 * next()).collect();
        let g = solve_weighted_least_squares(&a, &b, &w).unwrap();
        let am = a.as_matrix();
        let r = DVector::from_column_slice(&b) - am * DVector::from_column_slice(&g);
        let wr = r.component_mul(&DVector::from_column_slice(&w));
        let normal = am.transpose() * wr;
        let scale = am.norm() * am.norm() * 4.0 * (DVector::from_column_slice(&b).norm() + 1.0);
        prop_assert!(normal.amax() <= 1e-10 * scale, "normal equations residual {}", normal.amax());
    }

    #[test]
    fn leverage_invariant_under_invertible_transforms(x in tall_matrix(), t in square(5)) {
        let d = x.ncols();
        let t = t.view((0, 0), (d, d)).into_owned() + DMatrix::identity(d, d) * 3.0;
        let sv = t.singular_values();
        prop_assume!(sv.min() > 1e-3 * sv.max());
        let svd = thin_svd(&x, DEFAULT_RANK_TOL).unwrap();
        prop_assume!(svd.rank() == d);
        let xt = DataMatrix::from_matrix(x.as_matrix() * &t).unwrap();
        let l = leverage_scores(&svd).unwrap();
        let lt = leverage_scores(&thin_svd(&xt, DEFAULT_RANK_TOL).unwrap()).unwrap();
        for (a, b) in l.iter().zip(&lt) {
            prop_assert!((a - b).abs() <= 1e-7);
        }
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn sampling_probabilities_are_bounded(x in tall_matrix(), k in 1.0f64..500.0) {
        let l = leverage_scores(&thin_svd(&x, DEFAULT_RANK_TOL).unwrap()).unwrap();
        let q = sampling_probabilities(&l, k);
        prop_assert!(q.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!(q.iter().sum::<f64>() <= k + 1e-9);
        let q2 = sampling_probabilities(&l, k * 1.5);
        prop_assert!(q.iter().zip(&q2).all(|(a, b)| a <= b));
    }

    #[test]
    fn size_parameter_hits_target(x in tall_matrix(), frac in 0.05f64..1.0) {
        let l = leverage_scores(&thin_svd(&x, DEFAULT_RANK_TOL).unwrap()).unwrap();
        let target = (frac * x.nrows() as f64).ceil().max(1.0);
        let k = size_param_for_expected(&l, target).unwrap();
        let expected: f64 = sampling_probabilities(&l, k.max(1.0)).iter().sum();
        prop_assert!((expected - target).abs() <= 1e-6 * target, "{expected} vs {target}");
    }

    #[test]
    fn frobenius_difference_is_a_metric(a in square(4), b in square(4), c in square(4)) {
        let (a, b, c) = (AdjacencyMatrix(a), AdjacencyMatrix(b), AdjacencyMatrix(c));
        let ab = frobenius_difference(&a, &b).unwrap();
        prop_assert_eq!(frobenius_difference(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab, frobenius_difference(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        let ac = frobenius_difference(&a, &c).unwrap();
        let cb = frobenius_difference(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn top_edges_are_sorted_positive_and_capped(a in square(6), count in 0usize..40) {
        let edges = top_positive_edges(&AdjacencyMatrix(a), count);
        prop_assert!(edges.len() <= count);
        prop_assert!(edges.iter().all(|e| e.weight > 0.0 && e.from != e.to));
        prop_assert!(edges.windows(2).all(|w| w[0].weight >= w[1].weight));
    }

    #[test]
    fn integer_weights_equal_row_replication(x in matrix(4..12, 2..4), reps in prop::collection::vec(1usize..4, 12)) {
        let n = x.nrows();
        let p = x.ncols() - 1;
        let a = DataMatrix::from_matrix(x.as_matrix().columns(0, p).into_owned()).unwrap();
        let y = x.column(p);
        let w: Vec<f64> = reps[..n].iter().map(|&r| r as f64).collect();
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            for _ in 0..reps[i] {
                rows.push(a.row(i));
                ys.push(y[i]);
            }
        }
        let big = DataMatrix::from_rows(&rows).unwrap();
        let weighted = fit_gaussian(&a, &y, &w).unwrap();
        let replicated = fit_gaussian(&big, &ys, &vec![1.0; ys.len()]).unwrap();
        for (u, v) in weighted.coefficients.iter().zip(&replicated.coefficients) {
            prop_assert!((u - v).abs() <= 1e-8 * (1.0 + v.abs()));
        }
        prop_assert!((weighted.final_nll - replicated.final_nll).abs() <= 1e-8 * (1.0 + replicated.final_nll));

        let counts: Vec<f64> = y.iter().map(|v| v.abs().floor()).collect();
        let count_reps: Vec<f64> = (0..n).flat_map(|i| std::iter::repeat_n(counts[i], reps[i])).collect();
        let g = vec![0.1; p];
        let lhs = poisson_nll(&g, &a, &counts, &w).unwrap().value;
        let rhs = poisson_nll(&g, &big, &count_reps, &vec![1.0; count_reps.len()]).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn relative_error_matches_formula(t in -1e3f64..1e3, s in 1e-3f64..1e3) {
        let r = relative_error(t, s).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert!((r - (t - s).abs() / s).abs() <= 1e-15 * (1.0 + r));
    }

    #[test]
    fn identity_operator_preserves_norms(x in matrix(1..20, 1..5), g in prop::collection::vec(-3.0f64..3.0, 5)) {
        let g = &g[..x.ncols()];
        let exact: f64 = (0..x.nrows())
            .map(|i| x.row(i).iter().zip(g).map(|(a, b)| a * b).sum::<f64>().powi(2))
            .sum();
        let sketched = SamplingOperator::identity(x.nrows()).sketched_sq_norm(&x, g);
        prop_assert!((exact - sketched).abs() <= 1e-12 * (1.0 + exact));
    }

    #[test]
    fn coreset_csv_round_trips(x in matrix(2..30, 1..5), seed in any::<u64>(), frac in 0.1f64..1.0) {
        let m = ((frac * x.nrows() as f64).ceil() as usize).clamp(1, x.nrows());
        let c = build_uniform_coreset(&x, m, seed).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, None).unwrap();
        let back = WeightedCoreset::read_csv(buf.as_slice(), SamplingMethod::Uniform, seed).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn network_json_round_trips_exactly(coefs in prop::collection::vec(-1e6f64..1e6, 12), intercept in any::<bool>()) {
        let mut dn = DependencyNetwork::zeros(Family::Poisson, 4, intercept);
        let width = if intercept { 4 } else { 3 };
        for (i, c) in dn.coefficients.iter_mut().enumerate() {
            *c = (0..width).map(|j| coefs[(i * 3 + j) % 12] / 7.0).collect();
        }
        let back = DependencyNetwork::from_json(&dn.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, dn);
    }

    #[test]
    fn gibbs_step_is_a_function_of_the_state(seed in any::<u64>(), step in 0u64..1000, start in prop::collection::vec(0u32..5, 3)) {
        let mut dn = DependencyNetwork::zeros(Family::Poisson, 3, true);
        dn.coefficients[0] = vec![0.2, 0.1, -0.1];
        let state = GibbsState {
            current: start.iter().map(|&v| v as f64).collect(),
            step,
            seed,
        };
        let a = gibbs_step(&dn, &state).unwrap();
        let b = gibbs_step(&dn, &state).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.step, step + 1);
        prop_assert!(a.current.iter().all(|v| *v >= 0.0 && v.fract() == 0.0));
    }
}
