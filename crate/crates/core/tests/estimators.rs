use algest_core::compiler::AtomSource;
use algest_core::runtime::{functional_value, quadrature_weights, EvalOptions, PlanEvaluator, QuadratureRule};
use algest_core::scalar::rational_to_f64;
use algest_core::{evaluate_plan, quadrature, BuiltinModel, EstimatorPlan, Grid, IntegralAtom, SampledSignal};

fn models() -> Vec<BuiltinModel> {
    vec![
        BuiltinModel::Amplitude { omega: 2.0 },
        BuiltinModel::Frequency,
        BuiltinModel::Phase { omega: 3.0 },
        BuiltinModel::Rational {
            num: vec![2, 3],
            den: vec![5, 1, 1],
            multiplier: None,
        },
    ]
}

fn max_rel_err(est: &[f64], truth: &[f64]) -> f64 {
    est.iter()
        .zip(truth)
        .map(|(e, t)| ((e - t) / t).abs())
        .fold(0.0, f64::max)
}

#[test]
fn noiseless_estimates_are_exact() {
    let g = Grid::window(1.0, 10_000).unwrap();
    for m in models() {
        let (plan, _) = m.plan(1).unwrap();
        let truth = m.default_truth();
        let x = m.carrier(&truth, 1.3, 0.4).unwrap().sample(&g).unwrap();
        let est = evaluate_plan(&plan, &x, 1.0).unwrap().into_estimates().unwrap();
        assert!(max_rel_err(&est, &truth) < 1e-6, "{m:?}: {est:?}");
    }
}

#[test]
fn weighted_error_is_small_across_the_window() {
    let g = Grid::window(1.0, 4000).unwrap();
    for m in models() {
        let (plan, _) = m.plan(1).unwrap();
        let truth = m.default_truth();
        let x = m.carrier(&truth, 0.7, -1.1).unwrap().sample(&g).unwrap();
        for t in [0.25, 0.5, 0.75, 1.0] {
            let r = evaluate_plan(&plan, &x, t).unwrap();
            let Some(est) = r.estimates.clone() else { continue };
            for (e, th) in est.iter().zip(&truth) {
                assert!((r.divisor * (e - th)).abs() < 1e-8, "{m:?} at {t}: {r:?}");
            }
        }
    }
}

#[test]
fn error_drops_sixteen_fold_per_halving() {
    for m in models() {
        let (plan, _) = m.plan(1).unwrap();
        let truth = m.default_truth();
        let car = m.carrier(&truth, 1.0, 0.3).unwrap();
        let errs: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|&n| {
                let x = car.sample(&Grid::window(1.0, n).unwrap()).unwrap();
                let est = evaluate_plan(&plan, &x, 1.0).unwrap().into_estimates().unwrap();
                max_rel_err(&est, &truth)
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 16.0).abs() <= 0.3 * 16.0, "{m:?}: {errs:?}");
        }
    }
}

fn binomial(n: u32, r: u32) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Composite Simpson bound `t·h⁴/180·max|g⁗|` for the integrand
/// `(t-τ)^(k-1)/(k-1)!·(-τ)^j·τ^n`, with `max|g⁗|` bounded termwise.
fn simpson_bound(k: u32, j: u32, n: u32, t: f64, h: f64) -> f64 {
    let fact: f64 = (1..k).map(f64::from).product();
    let d4: f64 = (0..k)
        .map(|i| {
            // (t-τ)^(k-1) = Σ C(k-1,i) t^(k-1-i) (-τ)^i
            let e = i + j + n;
            let falling: f64 = (0..4).map(|r| f64::from(e.saturating_sub(r))).product();
            binomial(k - 1, i) * t.powi((k - 1 - i) as i32) * falling * t.powi(e as i32 - 4)
        })
        .sum::<f64>()
        / fact;
    t * h.powi(4) / 180.0 * d4
}

#[test]
fn atoms_match_closed_form_on_monomials() {
    let g = Grid::window(1.0, 400).unwrap();
    for n in 0..=6u32 {
        let x = SampledSignal::from_fn(g, |t| t.powi(n as i32)).unwrap();
        for k in 1..=4u32 {
            for j in 0..=4u32 {
                let atom = IntegralAtom::new(algest_core::scalar::int(1), k, j, AtomSource::Measured);
                let (c, p) = atom.monomial_response(n);
                let t: f64 = 0.8;
                let exact = rational_to_f64(&c) * t.powi(p as i32);
                let got = quadrature(&atom, &x, t).unwrap();
                let tol = simpson_bound(k, j, n, t, g.dt()) + 1e-15;
                assert!(
                    (got - exact).abs() <= tol,
                    "n={n} k={k} j={j}: {got} vs {exact}, bound {tol}"
                );
            }
        }
    }
}

#[test]
fn functionals_are_linear_in_the_signal() {
    let g = Grid::window(1.0, 500).unwrap();
    let x = SampledSignal::from_fn(g, |t| (3.0 * t).sin()).unwrap();
    let y = SampledSignal::from_fn(g, |t| t * t - 0.5).unwrap();
    let (alpha, beta) = (1.7, -0.4);
    let z = x.scale(alpha).add(&y.scale(beta)).unwrap();
    let (plan, _) = BuiltinModel::Frequency.plan(1).unwrap();
    for f in plan.b.iter().chain(plan.a.iter().flatten()) {
        let measured = f.with_source(AtomSource::Measured);
        let val = |s: &SampledSignal| functional_value(&measured, s.values(), 500, g.dt(), QuadratureRule::Simpson);
        let lhs = val(&z);
        let rhs = alpha * val(&x) + beta * val(&y);
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
    // the amplitude estimate itself is linear: 𝔄 carries no signal
    let (plan, _) = BuiltinModel::Amplitude { omega: 3.0 }.plan(1).unwrap();
    let est = |s: &SampledSignal| evaluate_plan(&plan, s, 1.0).unwrap().into_estimates().unwrap()[0];
    assert!((est(&z) - (alpha * est(&x) + beta * est(&y))).abs() < 1e-12);
}

#[test]
fn scale_equivariance() {
    let g = Grid::window(1.0, 2000).unwrap();
    let lambda = -2.5;
    let x = BuiltinModel::Frequency
        .carrier(&[9.0], 1.0, 0.2)
        .unwrap()
        .sample(&g)
        .unwrap();
    let xs = x.scale(lambda);
    let atom = IntegralAtom::new(algest_core::scalar::int(3), 2, 1, AtomSource::Measured);
    let a = quadrature(&atom, &x, 1.0).unwrap();
    let b = quadrature(&atom, &xs, 1.0).unwrap();
    assert!((b - lambda * a).abs() < 1e-12 * a.abs());

    let (freq, _) = BuiltinModel::Frequency.plan(1).unwrap();
    let w2 = evaluate_plan(&freq, &x, 1.0).unwrap().into_estimates().unwrap()[0];
    let w2s = evaluate_plan(&freq, &xs, 1.0).unwrap().into_estimates().unwrap()[0];
    assert!((w2 - w2s).abs() < 1e-9 * w2);

    let phase = BuiltinModel::Phase { omega: 3.0 };
    let (plan, _) = phase.plan(1).unwrap();
    let x = phase.carrier(&[0.8, -0.6], 1.0, 0.0).unwrap().sample(&g).unwrap();
    let e = evaluate_plan(&plan, &x, 1.0).unwrap().into_estimates().unwrap();
    let es = evaluate_plan(&plan, &x.scale(lambda), 1.0)
        .unwrap()
        .into_estimates()
        .unwrap();
    for (u, v) in e.iter().zip(&es) {
        assert!((v - lambda * u).abs() < 1e-9);
    }
}

#[test]
fn divisor_vanishes_at_the_origin() {
    for m in models() {
        let (plan, _) = m.plan(1).unwrap();
        let truth = m.default_truth();
        let car = m.carrier(&truth, 1.0, 0.5).unwrap();
        let divisors: Vec<f64> = [1.0, 1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&t| {
                let x = car.sample(&Grid::window(t, 200).unwrap()).unwrap();
                evaluate_plan(&plan, &x, t).unwrap().divisor.abs()
            })
            .collect();
        for w in divisors.windows(2) {
            assert!(w[1] < w[0], "{m:?}: {divisors:?}");
        }
        assert!(divisors[3] < 1e-4 * divisors[0], "{m:?}: {divisors:?}");
    }
}

#[test]
fn guard_blocks_tiny_divisors() {
    let (plan, _) = BuiltinModel::Amplitude { omega: 2.0 }.plan(1).unwrap();
    let g = Grid::window(1.0, 100_000).unwrap();
    let x = SampledSignal::from_fn(g, |t| (2.0 * t).sin()).unwrap();
    let opts = EvalOptions {
        eps_div: 1e-4,
        ..EvalOptions::default()
    };
    // δ = t² is 1e-10 of its window maximum at t = 1e-5
    let ev = PlanEvaluator::new(&plan, &g, 1e-5, opts).unwrap();
    let r = ev.evaluate(&x).unwrap();
    assert!(r.estimates.is_none());
    assert!(r.into_estimates().is_err());
}

#[test]
fn plans_round_trip_through_json() {
    for m in models() {
        let (plan, _) = m.plan(1).unwrap();
        let back = EstimatorPlan::from_json(&plan.to_json().unwrap()).unwrap();
        assert_eq!(plan, back);
    }
}

#[test]
fn signals_round_trip_through_csv() {
    let g = Grid::window(1.0, 37).unwrap();
    let x = SampledSignal::from_fn(g, |t| (1.0 / 3.0 + t).exp().sin() * 1e-7).unwrap();
    let mut buf = Vec::new();
    x.write_csv(&mut buf, &["seed 7".to_string()]).unwrap();
    let back = SampledSignal::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.values(), x.values());
    assert_eq!(back.grid().count(), x.grid().count());
}

#[test]
fn odd_segment_counts_fall_back_to_trapezoid_on_the_tail() {
    let w = quadrature_weights(3, 0.5, QuadratureRule::Simpson);
    let total: f64 = w.iter().sum();
    assert!((total - 1.5).abs() < 1e-15);
}
