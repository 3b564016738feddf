use algest_core::identifiability::{build_m, is_projectively_identifiable, ratfunc_det, ratfunc_rank, DEFAULT_SEED};
use algest_core::scalar::{int, rat};
use algest_core::signal::minimal_equation;
use algest_core::{Assignment, BuiltinModel, CoefficientForm, DiffOp, Error, ModuleElement, RatFunc, SPoly};

fn xhat() -> RatFunc {
    RatFunc::from_ints(&[2, 3], &[5, 1, 1])
}

#[test]
fn rational_example_has_full_projective_rank() {
    let me = minimal_equation(&xhat()).unwrap();
    let cf = CoefficientForm::from_minimal(&me);
    let m = build_m(&cf, &me.module()).unwrap();
    let entries = m.as_ratfunc_matrix().unwrap();
    assert!(ratfunc_det(&entries).is_zero());
    assert_eq!(ratfunc_rank(&entries), cf.n() + cf.m());

    let report = is_projectively_identifiable(&cf, &me.module(), DEFAULT_SEED).unwrap();
    assert!(report.identifiable);
    assert_eq!(report.rank, 4);
    assert!(report.probabilistic);
}

#[test]
fn matrix_entries_match_symbolic_oracle() {
    let me = minimal_equation(&xhat()).unwrap();
    let cf = CoefficientForm::from_minimal(&me);
    let m = build_m(&cf, &me.module()).unwrap().as_ratfunc_matrix().unwrap();
    // columns run s²x̂, s·x̂, x̂, s, 1
    let powers: Vec<usize> = cf.signal_terms().iter().map(|t| t.s_power).collect();
    assert_eq!(powers, [2, 1, 0]);
    // d²/ds² x̂
    assert_eq!(
        m[2][2],
        RatFunc::from_ints(&[-46, -78, 12, 6], &[125, 75, 90, 31, 18, 3, 1])
    );
    // d³/ds³ (s x̂)
    assert_eq!(
        m[3][1],
        RatFunc::from_ints(&[-690, -1560, 360, 360, 6], &[625, 500, 650, 320, 211, 64, 26, 4, 1])
    );
}

#[test]
fn recovered_coefficients_are_proportional_to_truth() {
    let me = minimal_equation(&xhat()).unwrap();
    let cf = CoefficientForm::from_minimal(&me);
    let m = build_m(&cf, &me.module()).unwrap();
    let idx = cf.size() - 1;
    let v1 = m.recover_coefficients(&Assignment::new(), idx, 11).unwrap();
    let v2 = m.recover_coefficients(&Assignment::new(), idx, 12_345).unwrap();
    assert_eq!(v1, v2);
    // (a, -b) = (1, 1, 5, -3, -2) up to scale
    let want = [rat(-1, 2), rat(-1, 2), rat(-5, 2), rat(3, 2), int(1)];
    assert_eq!(v1, want);
}

#[test]
fn non_minimal_relation_loses_rank() {
    let model = BuiltinModel::Rational {
        num: vec![2, 3],
        den: vec![5, 1, 1],
        multiplier: Some(vec![1, 1]),
    };
    let (cf, module) = model.coefficient_form().unwrap();
    assert_eq!((cf.n(), cf.m()), (3, 3));
    let report = is_projectively_identifiable(&cf, &module, DEFAULT_SEED).unwrap();
    assert!(!report.identifiable);
    assert_eq!(report.rank, 5);
    assert!(matches!(
        model.system(None, DEFAULT_SEED),
        Err(Error::NotIdentifiable(_))
    ));
}

#[test]
fn minimal_rational_model_is_identifiable() {
    let model = BuiltinModel::Rational {
        num: vec![2, 3],
        den: vec![5, 1, 1],
        multiplier: None,
    };
    let (cf, module) = model.coefficient_form().unwrap();
    assert!(
        is_projectively_identifiable(&cf, &module, DEFAULT_SEED)
            .unwrap()
            .identifiable
    );
    let sys = model.system(None, DEFAULT_SEED).unwrap();
    assert!(sys.certified);
    assert_eq!(sys.arity(), 4);
}

#[test]
fn oscillator_models_are_identifiable() {
    for model in [
        BuiltinModel::Amplitude { omega: 2.0 },
        BuiltinModel::Frequency,
        BuiltinModel::Phase { omega: 3.0 },
    ] {
        let (cf, module) = model.coefficient_form().unwrap();
        let r = is_projectively_identifiable(&cf, &module, DEFAULT_SEED).unwrap();
        assert!(r.identifiable, "{model:?}: {r:?}");
        assert_eq!(r.ranks.len(), 3);
    }
}

#[test]
fn rank_report_is_seed_reproducible() {
    let (cf, module) = BuiltinModel::Frequency.coefficient_form().unwrap();
    let a = is_projectively_identifiable(&cf, &module, 99).unwrap();
    let b = is_projectively_identifiable(&cf, &module, 99).unwrap();
    assert_eq!(a, b);
}

#[test]
fn noiseless_template_vanishes() {
    // 𝔠 = Σ θ_q a_q(ŵ) - b(ŵ) is zero when ŵ = 0, and the system holds on x̂
    let model = BuiltinModel::Rational {
        num: vec![2, 3],
        den: vec![5, 1, 1],
        multiplier: None,
    };
    let sys = model.system(None, DEFAULT_SEED).unwrap();
    let theta: Vec<_> = model
        .rational_truth()
        .unwrap()
        .into_iter()
        .map(algest_core::ParamScalar::from_rational)
        .collect();
    for r in sys.residual(&xhat(), &theta) {
        assert!(r.is_zero());
    }
    for row in &sys.c_template {
        let c = row
            .a
            .iter()
            .zip(&theta)
            .fold(DiffOp::zero(), |acc, (op, t)| &acc + &op.scale(t));
        let c = &c - &row.b;
        assert!(c.apply(&RatFunc::zero()).is_zero());
    }
}

#[test]
fn module_reduction_of_second_derivative() {
    // (s² + 4) x̂' = -2, so x̂'' = 4s / (s² + 4)²
    let q = [RatFunc::zero(), RatFunc::from_poly(SPoly::from_ints(&[4, 0, 1]))];
    let p = RatFunc::from_poly(SPoly::from_ints(&[-2]));
    let module = std::sync::Arc::new(algest_core::AnnihilatorModule::from_equation(&q, &p).unwrap());
    let x2 = ModuleElement::signal(&module).derivative().derivative();
    assert_eq!(x2.coords()[0], RatFunc::from_ints(&[0, 4], &[16, 0, 8, 0, 1]));
    assert!(x2.coords()[1].is_zero());
}
