use proptest::prelude::*;

use lagrflow::expr::parse;
use lagrflow::rotations::{attitude_rhs, norm, rotation_matrix};
use lagrflow::verify::identities::plucker_max_relative;
use lagrflow::verify::{minor_lemma, plucker_residuals};

fn unit() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("nonzero", |a| norm(a) > 1e-3)
        .prop_map(|a| a.map(|x| x / norm(&a)))
}

proptest! {
    #[test]
    fn rotation_is_orthogonal(a in unit()) {
        let r = rotation_matrix(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let delta = f64::from(u8::from(i == j));
                prop_assert!((dot - delta).abs() < 1e-12);
            }
        }
        prop_assert_eq!(r, rotation_matrix(&a.map(|x| -x)).unwrap());
    }

    #[test]
    fn attitude_rate_is_tangent(a in unit(), w in prop::array::uniform3(-5.0f64..5.0)) {
        let d = attitude_rhs(&a, &w);
        prop_assert!((0..4).map(|i| a[i] * d[i]).sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn integer_minors_satisfy_every_relation(rows in prop::array::uniform3(prop::collection::vec(-50i128..50, 6))) {
        prop_assert!(plucker_residuals(&rows).iter().all(|r| r.residual == 0));
        let l = minor_lemma(&rows);
        prop_assert_eq!((l.three_term, l.four_term, l.columns, l.cubic), (Some(0), Some(0), Some([0; 3]), Some(0)));
    }

    #[test]
    fn float_minors_satisfy_relations(rows in prop::array::uniform3(prop::collection::vec(-3.0f64..3.0, 5..=6))) {
        prop_assume!(rows.iter().all(|r| r.len() == rows[0].len()));
        prop_assert!(plucker_max_relative(&rows) <= 1e-12);
        prop_assert!(minor_lemma(&rows).max_relative(&rows) <= 1e-12);
    }

    #[test]
    fn printed_expressions_reparse(a in -9.0f64..9.0, b in 0.1f64..4.0) {
        let e = parse(&format!("{a}*sin(z1)^2 - exp(z2/{b}) + z3")).unwrap();
        let again = parse(&e.to_string()).unwrap();
        let env = [("z1", 0.3), ("z2", -0.7), ("z3", 0.2)];
        prop_assert_eq!(e.eval(&env).unwrap(), again.eval(&env).unwrap());
    }
}
