use otclean::ci_project::project_to_ci;
use otclean::cost::{build_cost_matrix, CostSpec};
use otclean::dist::{cmi, CiConstraint, Distribution, Schema};
use otclean::ot::{exact_ot_lp, transport_cost, TransportPlan};
use otclean::repair::cleaner_from_plan;
use otclean::unsaturated::{lift_product, SplitSchema};
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter("needs mass", |w| w.iter().sum::<f64>() > 1e-3)
}

fn xyz() -> Schema {
    Schema::binary(&["X", "Y", "Z"])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_satisfies_the_constraint(w in weights(8)) {
        let p = Distribution::from_weights(xyz(), w).unwrap();
        let sigma = CiConstraint::new(["X"], ["Y"], ["Z"]).unwrap();
        let q = project_to_ci(&p, &sigma).unwrap();
        prop_assert!(cmi(&q, &sigma).unwrap() <= 1e-10);
        let zp = p.marginalize(&["Z"]).unwrap();
        let zq = q.marginalize(&["Z"]).unwrap();
        prop_assert!(zp.max_abs_diff(&zq).unwrap() <= 1e-9);
    }

    #[test]
    fn exact_ot_beats_the_product_plan(a in weights(8), b in weights(8)) {
        let p = Distribution::from_weights(xyz(), a).unwrap();
        let q = Distribution::from_weights(xyz(), b).unwrap();
        let c = build_cost_matrix(&xyz(), &CostSpec::hamming()).unwrap();
        let (cost, plan) = exact_ot_lp(&p, &q, &c).unwrap();
        let (back, _) = exact_ot_lp(&q, &p, &c).unwrap();
        prop_assert!(cost <= transport_cost(&TransportPlan::product(&p, &q), &c).unwrap() + 1e-12);
        prop_assert!((cost - back).abs() <= 1e-9);
        prop_assert!((cost - transport_cost(&plan, &c).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn cleaner_rows_are_distributions(a in weights(8), b in weights(8)) {
        let p = Distribution::from_weights(xyz(), a).unwrap();
        let q = Distribution::from_weights(xyz(), b).unwrap();
        let cleaner = cleaner_from_plan(&TransportPlan::product(&p, &q)).unwrap();
        for (_, row) in cleaner.rows() {
            let total: f64 = row.iter().map(|e| e.1).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn product_lift_keeps_the_remainder(w in weights(8)) {
        let s = Schema::binary(&["X", "Y", "W"]);
        let p = Distribution::from_weights(s.clone(), w).unwrap();
        let sigma = CiConstraint::new(["X"], ["Y"], Vec::<&str>::new()).unwrap();
        let split = SplitSchema::new(&s, &sigma).unwrap();
        let pu = p.marginalize(&["X", "Y"]).unwrap();
        let plan = lift_product(&p, &TransportPlan::identity(&pu), &split).unwrap();
        for (i, j, _) in plan.nonzero() {
            prop_assert_eq!(split.w_of(i), split.w_of(j));
        }
        prop_assert!(plan.source().unwrap().max_abs_diff(&p).unwrap() <= 1e-12);
    }

    #[test]
    fn encode_decode_round_trip(i in 0usize..8) {
        let s = xyz();
        prop_assert_eq!(s.encode(&s.decode(i)).unwrap(), i);
    }
}
