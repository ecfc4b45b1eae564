use cdqaoa::agp::{alpha_numeric, AlphaSource, NumericAlpha};
use cdqaoa::matching::AngleSet;
use cdqaoa::model::{random_regular_graph, ProblemInstance};
use cdqaoa::pauli::{commutator, multiply, trace_product, PauliSum, PauliTerm, C64};
use proptest::prelude::*;

const N: usize = 3;

fn term() -> impl Strategy<Value = PauliTerm> {
    (0u64..1 << N, 0u64..1 << N).prop_map(|(x, z)| PauliTerm::new(N, x, z).unwrap())
}

fn sum() -> impl Strategy<Value = PauliSum> {
    prop::collection::vec((term(), -1.0..1.0f64, -1.0..1.0f64), 1..6)
        .prop_map(|v| PauliSum::from_terms(N, v.into_iter().map(|(t, re, im)| (t, C64::new(re, im)))).unwrap())
}

fn close(a: &PauliSum, b: &PauliSum) -> bool {
    (a.to_matrix().unwrap() - b.to_matrix().unwrap()).norm() < 1e-10
}

proptest! {
    #[test]
    fn products_match_dense(a in term(), b in term()) {
        let (t, phase) = multiply(&a, &b).unwrap();
        let lhs = PauliSum::from_term(a, C64::new(1.0, 0.0)).to_matrix().unwrap()
            * PauliSum::from_term(b, C64::new(1.0, 0.0)).to_matrix().unwrap();
        let rhs = PauliSum::from_term(t, phase).to_matrix().unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn normalized_trace_matches_dense(a in sum(), b in sum()) {
        let dense = (a.to_matrix().unwrap() * b.to_matrix().unwrap()).trace() / (1 << N) as f64;
        let sym = trace_product(&a, &b).unwrap();
        prop_assert!((dense - sym).norm() < 1e-12);
    }

    #[test]
    fn commutator_matches_dense(a in sum(), b in sum()) {
        let (ma, mb) = (a.to_matrix().unwrap(), b.to_matrix().unwrap());
        let dense = &ma * &mb - &mb * &ma;
        prop_assert!((commutator(&a, &b).unwrap().to_matrix().unwrap() - dense).norm() < 1e-10);
    }

    #[test]
    fn jacobi_identity(a in sum(), b in sum(), c in sum()) {
        let t1 = commutator(&a, &commutator(&b, &c).unwrap()).unwrap();
        let t2 = commutator(&b, &commutator(&c, &a).unwrap()).unwrap();
        let t3 = commutator(&c, &commutator(&a, &b).unwrap()).unwrap();
        let total = t1.try_add(&t2).unwrap().try_add(&t3).unwrap();
        prop_assert!(close(&total, &PauliSum::zero(N)));
    }

    #[test]
    fn adjoint_reverses_products(a in sum(), b in sum()) {
        let lhs = a.try_mul(&b).unwrap().adjoint();
        let rhs = b.adjoint().try_mul(&a.adjoint()).unwrap();
        prop_assert!(close(&lhs, &rhs));
    }

    #[test]
    fn flat_angles_roundtrip(v in prop::collection::vec(0.01..1.0f64, 1..10)) {
        let a = AngleSet::from_angles(v.clone(), v.iter().rev().copied().collect()).unwrap();
        prop_assert_eq!(AngleSet::from_flat(&a.flat()).unwrap(), a.clone());
        prop_assert!(a.check().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn alpha_nonpositive_on_cubic_graphs(seed in any::<u64>()) {
        let inst = ProblemInstance::maxcut(&random_regular_graph(8, 3, seed).unwrap()).unwrap();
        let fast = NumericAlpha::new(&inst).unwrap();
        for k in 0..=10 {
            let l = k as f64 / 10.0;
            let a = alpha_numeric(&inst, l).unwrap();
            prop_assert!(a <= 0.0, "alpha({l}) = {a}");
            prop_assert!((fast.alpha(l) - a).abs() < 1e-10);
        }
    }
}
