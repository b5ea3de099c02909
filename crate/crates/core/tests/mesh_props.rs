use proptest::prelude::*;
use saa_core::linalg;
use saa_core::mesh::{
    assemble_1d, assemble_2d, friedrichs_constant, trace_constant, trace_operator, Grid1D, Mesh2D, SpaceKind,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_adjoint_identity(y in prop::collection::vec(-3.0f64..3.0, 25), w in prop::collection::vec(-3.0f64..3.0, 16)) {
        let mesh = Mesh2D::unit_square(4).unwrap();
        let h1 = assemble_2d(mesh.clone(), SpaceKind::H1).unwrap();
        let bd = assemble_2d(mesh, SpaceKind::L2Boundary).unwrap();
        let t = trace_operator(&h1, &bd).unwrap();
        let ty = t.matvec(&y);
        let tw = t.transpose_matvec(&bd.mass().matvec(&w));
        let lhs = bd.inner(&ty, &w);
        let rhs = linalg::dot(&y, &tw);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert!(bd.norm(&ty) <= trace_constant(&h1, &bd).unwrap() * h1.norm(&y) * (1.0 + 1e-10));
    }

    #[test]
    fn norms_are_consistent(v in prop::collection::vec(-3.0f64..3.0, 25)) {
        let mesh = Mesh2D::unit_square(4).unwrap();
        let h1 = assemble_2d(mesh, SpaceKind::H1).unwrap();
        let n2 = h1.norm(&v).powi(2);
        prop_assert!((n2 - h1.inner(&v, &v)).abs() <= 1e-12 * (1.0 + n2));
        prop_assert!((n2 - h1.l2_norm(&v).powi(2) - h1.h01_seminorm(&v).powi(2)).abs() <= 1e-12 * (1.0 + n2));
        let r = h1.gram().matvec(&v);
        prop_assert!((h1.dual_norm(&r) - h1.norm(&v)).abs() <= 1e-10 * (1.0 + h1.norm(&v)));
    }

    #[test]
    fn friedrichs_inequality_holds(v in prop::collection::vec(-3.0f64..3.0, 15)) {
        let s = assemble_1d(Grid1D::new(15).unwrap(), SpaceKind::H01).unwrap();
        let c = friedrichs_constant(&s).unwrap();
        prop_assert!(s.l2_norm(&v) <= c * s.h01_seminorm(&v) * (1.0 + 1e-12));
    }

    #[test]
    fn positive_part_of_positive_field_is_full_integral(v in prop::collection::vec(0.01f64..3.0, 16)) {
        let s = assemble_2d(Mesh2D::unit_square(3).unwrap(), SpaceKind::H1).unwrap();
        let (val, grad) = s.geometry().positive_part_integrals(&v);
        let mv = s.mass().matvec(&v);
        prop_assert!((val - linalg::dot(&v, &mv)).abs() <= 1e-13 * val);
        for (a, b) in grad.iter().zip(&mv) {
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let (zero, g0) = s.geometry().positive_part_integrals(&neg);
        prop_assert_eq!(zero, 0.0);
        prop_assert!(g0.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn friedrichs_constant_refines_toward_one_over_pi() {
    let c: Vec<f64> = [15, 63, 255]
        .iter()
        .map(|&n| friedrichs_constant(&assemble_1d(Grid1D::new(n).unwrap(), SpaceKind::H01).unwrap()).unwrap())
        .collect();
    assert!(c.windows(2).all(|w| w[1] > w[0]));
    assert!(c.iter().all(|&v| v < std::f64::consts::FRAC_1_PI));
    let h = 1.0 / 16.0;
    let pi = std::f64::consts::PI;
    let closed = (6.0 / (h * h) * (1.0 - (pi * h).cos()) / (2.0 + (pi * h).cos())).sqrt().recip();
    assert!((c[0] - closed).abs() < 1e-12);
}
