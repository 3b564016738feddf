use std::sync::Arc;

use algest_core::runtime::nearest_point;
use algest_core::signal::{minimal_equation, OdeTerm};
use algest_core::{
    module_reduce, AnnihilatorModule, DiffOp, Grid, ModuleElement, OpExpr, ParamScalar, RatFunc, SPoly, SampledSignal,
    TimeOde,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn poly(max_deg: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-9i64..=9, 1..=max_deg + 1)
}

fn nonzero_poly(max_deg: usize) -> impl Strategy<Value = Vec<i64>> {
    poly(max_deg).prop_filter("nonzero", |p| p.iter().any(|&c| c != 0))
}

fn ratfunc() -> impl Strategy<Value = RatFunc> {
    (poly(3), nonzero_poly(2)).prop_map(|(n, d)| RatFunc::from_ints(&n, &d))
}

/// Operator coefficients: polynomials up to degree 6, or quotients by a
/// linear denominator (composition squares denominators quickly).
fn coefficient() -> impl Strategy<Value = RatFunc> {
    prop_oneof![
        poly(6).prop_map(|n| RatFunc::from_ints(&n, &[1])),
        (poly(2), nonzero_poly(1)).prop_map(|(n, d)| RatFunc::from_ints(&n, &d)),
    ]
}

fn diffop() -> impl Strategy<Value = DiffOp> {
    prop::collection::vec(coefficient(), 1..=3).prop_map(DiffOp::new)
}

fn scalar() -> impl Strategy<Value = ParamScalar> {
    (-20i64..=20, 1i64..=9).prop_map(|(n, d)| ParamScalar::from_rational(algest_core::scalar::rat(n, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_is_associative(a in diffop(), b in diffop(), c in diffop()) {
        prop_assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
    }

    #[test]
    fn action_is_compatible_with_composition(a in diffop(), b in diffop(), f in ratfunc()) {
        prop_assert_eq!(a.compose(&b).apply(&f), a.apply(&b.apply(&f)));
    }

    #[test]
    fn commutator_is_identity_on_functions(f in ratfunc()) {
        let c = &DiffOp::d().compose(&DiffOp::s()) - &DiffOp::s().compose(&DiffOp::d());
        prop_assert_eq!(c.apply(&f), f);
    }

    #[test]
    fn reduced_forms_are_canonical(n in nonzero_poly(3), d in nonzero_poly(2), g in nonzero_poly(2)) {
        let direct = RatFunc::from_ints(&n, &d);
        let gp = SPoly::from_ints(&g);
        let routed = RatFunc::new(&SPoly::from_ints(&n) * &gp, &SPoly::from_ints(&d) * &gp);
        prop_assert_eq!(&direct, &routed);
        let back = &(&direct * &RatFunc::from_poly(gp.clone())) / &RatFunc::from_poly(gp);
        prop_assert_eq!(direct, back);
    }

    #[test]
    fn module_reduce_is_linear(u in diffop(), v in diffop(), fu in ratfunc(), fv in ratfunc(), alpha in scalar(), beta in scalar()) {
        let q = [RatFunc::from_ints(&[5, 1, 1], &[1]), RatFunc::from_ints(&[0, 2], &[1])];
        let module = Arc::new(AnnihilatorModule::from_equation(&q, &RatFunc::from_ints(&[1, -3], &[1])).unwrap());
        let eu = OpExpr::new(u, fu);
        let ev = OpExpr::new(v, fv);
        let combo = &eu.scale(&alpha) + &ev.scale(&beta);
        let lhs = module_reduce(&combo, &module);
        let rhs = module_reduce(&eu, &module)
            .scale(&RatFunc::constant(alpha))
            .add(&module_reduce(&ev, &module).scale(&RatFunc::constant(beta)));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn reduction_is_idempotent(k in 0usize..5) {
        let q = [RatFunc::zero(), RatFunc::from_ints(&[4, 0, 1], &[1])];
        let module = Arc::new(AnnihilatorModule::from_equation(&q, &RatFunc::from_ints(&[-2], &[1])).unwrap());
        let e = module_reduce(&OpExpr::signal_term(RatFunc::one(), k + 2), &module);
        prop_assert_eq!(module_reduce(&e.to_expr(), &module), e);
    }

    #[test]
    fn transform_is_linear(
        c1 in prop::collection::vec((-5i64..=5, 0u32..=2, 0u32..=1), 1..4),
        c2 in prop::collection::vec((-5i64..=5, 0u32..=2, 0u32..=1), 1..4),
        alpha in scalar(),
        beta in scalar(),
    ) {
        let ic = vec![ParamScalar::symbol("z0"), ParamScalar::symbol("z1")];
        // a second-order term keeps both ODEs at order two
        let build = |cs: &[(i64, u32, u32)], k: &ParamScalar| {
            let mut terms: Vec<OdeTerm> = cs.iter().map(|&(c, m, nu)| OdeTerm::new(&ParamScalar::from_int(c) * k, m, nu)).collect();
            terms.push(OdeTerm::new(k.clone(), 0, 2));
            terms
        };
        let one = ParamScalar::one();
        let o1 = TimeOde::new(build(&c1, &one), ic.clone()).unwrap().to_operational();
        let o2 = TimeOde::new(build(&c2, &one), ic.clone()).unwrap().to_operational();
        let mut both = build(&c1, &alpha);
        both.extend(build(&c2, &beta));
        let o = TimeOde::new(both, ic).unwrap().to_operational();
        prop_assert_eq!(o.lhs, &o1.lhs.scale(&alpha) + &o2.lhs.scale(&beta));
        prop_assert_eq!(o.rhs, &o1.rhs.scale(&alpha) + &o2.rhs.scale(&beta));
    }

    #[test]
    fn minimal_equation_ignores_common_factors(n in nonzero_poly(2), d in nonzero_poly(3), g in nonzero_poly(2)) {
        prop_assume!(d.len() > n.len());
        let xhat = RatFunc::from_ints(&n, &d);
        let gp = SPoly::from_ints(&g);
        let inflated = RatFunc::new(&SPoly::from_ints(&n) * &gp, &SPoly::from_ints(&d) * &gp);
        let a = minimal_equation(&xhat).unwrap();
        let b = minimal_equation(&inflated).unwrap();
        prop_assert_eq!(a.q(), b.q());
        prop_assert_eq!(a.p(), b.p());
        let g = a.q()[0].gcd(a.p());
        prop_assert!(g.is_constant());
    }

    #[test]
    fn csv_round_trip_is_lossless(values in prop::collection::vec(-1e300f64..1e300, 2..50)) {
        let g = Grid::new(0.01, values.len()).unwrap();
        let x = SampledSignal::new(g, values).unwrap();
        let mut buf = Vec::new();
        x.write_csv(&mut buf, &[]).unwrap();
        let back = SampledSignal::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), x.values());
    }

    #[test]
    fn nearest_point_prefers_lower_index_on_ties(x in -3.0f64..3.0) {
        let pts = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
        let (i, _) = nearest_point(Complex64::new(x, 0.0), &pts);
        prop_assert_eq!(i, usize::from(x > 0.0));
        let (i, low) = nearest_point(Complex64::new(0.0, x), &pts);
        prop_assert_eq!(i, 0);
        prop_assert!(low);
    }
}

#[test]
fn module_signal_starts_reduced() {
    let module = minimal_equation(&RatFunc::from_ints(&[2, 3], &[5, 1, 1]))
        .unwrap()
        .module();
    let x = ModuleElement::signal(&module);
    assert_eq!(x.coords()[0], RatFunc::from_ints(&[2, 3], &[5, 1, 1]));
}
