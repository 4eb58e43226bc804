use proptest::prelude::*;
use tailopt::collision::{default_layout, CollisionModel};
use tailopt::model::{build_uniform_model, build_variable_model, PhysicalParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobian_matches_finite_differences(q in prop::collection::vec(-1.0f64..1.0, 9), dl in -0.1f64..0.1) {
        let m = build_variable_model(&[0.4, 0.5, 0.6], &PhysicalParams::default()).unwrap();
        let c = CollisionModel::new(&m, default_layout(&m)).unwrap();
        let l = [0.4 + dl, 0.5, 0.6 - dl];
        let (jq, jl) = c.jacobian(&q, Some(&l)).unwrap();
        let h = 1e-6;
        for j in 0..9 {
            let (mut a, mut b) = (q.clone(), q.clone());
            a[j] += h;
            b[j] -= h;
            let ga = c.values(&a, Some(&l)).unwrap();
            let gb = c.values(&b, Some(&l)).unwrap();
            for k in 0..ga.len() {
                prop_assert!(((ga[k] - gb[k]) / (2.0 * h) - jq[(k, j)]).abs() < 1e-7);
            }
        }
        for j in 0..3 {
            let (mut a, mut b) = (l, l);
            a[j] += h;
            b[j] -= h;
            let ga = c.values(&q, Some(&a)).unwrap();
            let gb = c.values(&q, Some(&b)).unwrap();
            for k in 0..ga.len() {
                prop_assert!(((ga[k] - gb[k]) / (2.0 * h) - jl[(k, j)]).abs() < 1e-7);
            }
        }
    }

    /// Torso columns of the Jacobian vanish.
    #[test]
    fn torso_columns_are_zero(q in prop::collection::vec(-1.0f64..1.0, 7)) {
        let m = build_uniform_model(2, &PhysicalParams::default()).unwrap();
        let c = CollisionModel::new(&m, default_layout(&m)).unwrap();
        let (jq, _) = c.jacobian(&q, None).unwrap();
        for k in 0..c.n_g() {
            for j in 0..3 {
                prop_assert_eq!(jq[(k, j)], 0.0);
            }
        }
    }
}
