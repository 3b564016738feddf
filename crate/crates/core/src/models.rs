//! Built-in estimation models.
//!
//! | model       | carrier                        | estimated           |
//! |-------------|--------------------------------|---------------------|
//! | amplitude   | `θ·sin(ω t)`, ω known          | `θ`                 |
//! | frequency   | `A·sin(√θ t + φ)`, A, φ free    | `θ = ω²`            |
//! | phase       | `a·sin(ω t) + b·cos(ω t)`      | `a`, `b`            |
//! | rational    | inverse transform of `p/q`     | coefficients of `p`, `q` |

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compiler::{compile, normalize_strictly_proper, perturbation_image, EstimatorPlan, PerturbationImage};
use crate::diffop::DiffOp;
use crate::error::{Error, Result};
use crate::identifiability::{build_estimator_system_at, CoefficientForm, LinearSystemSpec};
use crate::module::AnnihilatorModule;
use crate::poly::SPoly;
use crate::ratfunc::RatFunc;
use crate::scalar::{rational_from_f64, Assignment, ParamScalar, Rational, Symbol};
use crate::signal::{minimal_equation, CarrierSpec, MinimalEquation, OdeTerm, OperationalRelation, Param, TimeOde};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Amplitude,
    Frequency,
    Phase,
    Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BuiltinModel {
    Amplitude {
        omega: f64,
    },
    Frequency,
    Phase {
        omega: f64,
    },
    /// `x̂ = num/den`, optionally written through a common polynomial factor
    /// `multiplier` (which makes the relation non-minimal).
    Rational {
        num: Vec<i64>,
        den: Vec<i64>,
        #[serde(default)]
        multiplier: Option<Vec<i64>>,
    },
}

fn exact(v: f64, what: &str) -> Result<Rational> {
    rational_from_f64(v).ok_or_else(|| Error::InvalidConfig(format!("{what} is not finite")))
}

fn harmonic(w2: ParamScalar, ic: [ParamScalar; 2]) -> TimeOde {
    TimeOde::new(
        vec![OdeTerm::new(ParamScalar::one(), 0, 2), OdeTerm::new(w2, 0, 0)],
        ic.to_vec(),
    )
    .expect("second-order ODE with two initial conditions")
}

impl BuiltinModel {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            BuiltinModel::Amplitude { .. } => EstimatorKind::Amplitude,
            BuiltinModel::Frequency => EstimatorKind::Frequency,
            BuiltinModel::Phase { .. } => EstimatorKind::Phase,
            BuiltinModel::Rational { .. } => EstimatorKind::Rational,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BuiltinModel::Amplitude { omega } | BuiltinModel::Phase { omega } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    return Err(Error::InvalidConfig(format!("omega must be positive, got {omega}")));
                }
            }
            BuiltinModel::Rational { num, den, multiplier } => {
                if den.iter().all(|&c| c == 0) || num.iter().all(|&c| c == 0) {
                    return Err(Error::InvalidConfig("rational model needs nonzero num and den".into()));
                }
                if multiplier.as_ref().is_some_and(|m| m.iter().all(|&c| c == 0)) {
                    return Err(Error::InvalidConfig("zero multiplier".into()));
                }
            }
            BuiltinModel::Frequency => {}
        }
        Ok(())
    }

    fn rational_polys(&self) -> Option<(SPoly, SPoly)> {
        match self {
            BuiltinModel::Rational { num, den, multiplier } => {
                let f = multiplier.as_deref().map_or_else(SPoly::one, SPoly::from_ints);
                Some((&SPoly::from_ints(den) * &f, &SPoly::from_ints(num) * &f))
            }
            _ => None,
        }
    }

    /// Default parameter symbols.
    pub fn params(&self) -> Vec<Symbol> {
        match self {
            BuiltinModel::Amplitude { .. } | BuiltinModel::Frequency => vec![Symbol::new("theta")],
            BuiltinModel::Phase { .. } => vec![Symbol::new("a"), Symbol::new("b")],
            BuiltinModel::Rational { .. } => {
                let (q, p) = self.rational_polys().expect("rational");
                let dq = q.degree().unwrap_or(0);
                (0..dq)
                    .map(|i| Symbol::new(&format!("q{i}")))
                    .chain((0..=p.degree().unwrap_or(0)).map(|i| Symbol::new(&format!("p{i}"))))
                    .collect()
            }
        }
    }

    /// Values of the non-estimated symbols.
    pub fn known(&self) -> Result<Assignment> {
        let mut at = Assignment::new();
        match self {
            BuiltinModel::Amplitude { omega } | BuiltinModel::Phase { omega } => {
                at.insert(Symbol::new("w"), exact(*omega, "omega")?);
            }
            BuiltinModel::Frequency | BuiltinModel::Rational { .. } => {}
        }
        Ok(at)
    }

    /// Time-domain ODE of the carrier with the estimated parameters symbolic.
    ///
    /// Not defined for the rational model, whose relation is built directly.
    pub fn time_ode(&self) -> Option<TimeOde> {
        let w = ParamScalar::symbol("w");
        let zero = ParamScalar::zero();
        match self {
            // x = θ sin ωt: z(0) = 0, z'(0) = θω
            BuiltinModel::Amplitude { .. } => Some(harmonic(w.pow(2), [zero, &ParamScalar::symbol("theta") * &w])),
            BuiltinModel::Frequency => Some(harmonic(
                ParamScalar::symbol("theta"),
                [ParamScalar::symbol("x0"), ParamScalar::symbol("x1")],
            )),
            // x = a sin ωt + b cos ωt: z(0) = b, z'(0) = aω
            BuiltinModel::Phase { .. } => Some(harmonic(
                w.pow(2),
                [ParamScalar::symbol("b"), &ParamScalar::symbol("a") * &w],
            )),
            BuiltinModel::Rational { .. } => None,
        }
    }

    /// Operational relation, with `Θ` and known constants still symbolic.
    pub fn relation(&self) -> Result<OperationalRelation> {
        self.validate()?;
        if let Some(ode) = self.time_ode() {
            return Ok(ode.to_operational());
        }
        // (s^d + Σ q_i s^i) x̂ = Σ p_i s^i
        let (q, p) = self.rational_polys().expect("rational");
        let d = q.degree().unwrap_or(0);
        let mut qs: Vec<ParamScalar> = (0..d).map(|i| ParamScalar::symbol(&format!("q{i}"))).collect();
        qs.push(ParamScalar::one());
        let ps = (0..=p.degree().unwrap_or(0))
            .map(|i| ParamScalar::symbol(&format!("p{i}")))
            .collect();
        Ok(OperationalRelation::new(
            DiffOp::mul_by(RatFunc::from_poly(SPoly::new(qs))),
            SPoly::new(ps),
        ))
    }

    /// Exact truth of the rational model's symbols (monic denominator).
    pub fn rational_truth(&self) -> Option<Vec<Rational>> {
        let (q, p) = self.rational_polys()?;
        let lc = q.leading().recip();
        let q = q.scale(&lc);
        let p = p.scale(&lc);
        let d = q.degree().unwrap_or(0);
        let get = |c: ParamScalar| c.as_rational().cloned().expect("integer model");
        Some(
            (0..d)
                .map(|i| get(q.coeff(i)))
                .chain((0..=p.degree().unwrap_or(0)).map(|i| get(p.coeff(i))))
                .collect(),
        )
    }

    /// The model's transform as a rational function, if it is one.
    pub fn spectrum(&self) -> Option<RatFunc> {
        let (q, p) = self.rational_polys()?;
        Some(RatFunc::new(p, q))
    }

    /// Coefficient form of the relation as written (not renormalized) and the
    /// module of the underlying signal, for the identifiability test.
    ///
    /// Symbols of the oscillator models are left symbolic.
    pub fn coefficient_form(&self) -> Result<(CoefficientForm, Arc<AnnihilatorModule>)> {
        self.validate()?;
        if let Some((q, p)) = self.rational_polys() {
            let me = minimal_equation(&RatFunc::new(p.clone(), q.clone()))?;
            return Ok((CoefficientForm::from_polys(&[q], &p), me.module()));
        }
        let rel = self.relation()?;
        let me = MinimalEquation::from_relation(&rel.lhs, &RatFunc::from_poly(rel.rhs.clone()))
            .ok_or(Error::DegenerateCoefficientForm)?;
        Ok((CoefficientForm::from_minimal(&me), me.module()))
    }

    /// Estimator system for `theta` (the default parameters when `None`).
    pub fn system(&self, theta: Option<&[Symbol]>, seed: u64) -> Result<LinearSystemSpec> {
        let rel = self.relation()?;
        let default = self.params();
        let theta = theta.unwrap_or(&default);
        let mut known = self.known()?;
        let mut witness = Assignment::new();
        if let Some(truth) = self.rational_truth() {
            // symbols outside Θ take their true values; identifiability is a
            // property of this particular signal, so certify on it
            for (s, v) in default.iter().zip(truth) {
                if theta.contains(s) {
                    witness.insert(s.clone(), v);
                } else {
                    known.insert(s.clone(), v);
                }
            }
        }
        build_estimator_system_at(&rel, theta, &known, &witness, seed)
    }

    /// Compiled plan together with its perturbation image.
    pub fn plan(&self, seed: u64) -> Result<(EstimatorPlan, PerturbationImage)> {
        let sys = normalize_strictly_proper(&self.system(None, seed)?)?;
        let plan = compile(&sys)?;
        let image = perturbation_image(&sys, &plan)?;
        Ok((plan, image))
    }

    /// Carrier whose true parameters are `truth`; `amplitude`/`phase` only
    /// matter for the frequency model.
    pub fn carrier(&self, truth: &[f64], amplitude: f64, phase: f64) -> Result<CarrierSpec> {
        let want = self.params().len();
        if truth.len() != want {
            return Err(Error::ArityMismatch {
                expected: want,
                got: truth.len(),
            });
        }
        match self {
            BuiltinModel::Amplitude { omega } => Ok(CarrierSpec::tone(truth[0], *omega, 0.0)),
            BuiltinModel::Frequency => {
                if truth[0] <= 0.0 {
                    return Err(Error::InvalidConfig("frequency model needs θ = ω² > 0".into()));
                }
                Ok(CarrierSpec::tone(amplitude, truth[0].sqrt(), phase))
            }
            BuiltinModel::Phase { omega } => {
                let (a, b) = (truth[0], truth[1]);
                Ok(CarrierSpec::tone(a.hypot(b), *omega, b.atan2(a)))
            }
            BuiltinModel::Rational { .. } => {
                let (q, p) = self.rational_polys().expect("rational");
                let to = |s: &SPoly| -> Vec<Param> {
                    s.coeffs()
                        .iter()
                        .map(|c| Param::Known(c.to_f64().unwrap_or(0.0)))
                        .collect()
                };
                Ok(CarrierSpec::RationalSpectrum {
                    num: to(&p),
                    den: to(&q),
                })
            }
        }
    }

    /// Truth values used when none are configured.
    pub fn default_truth(&self) -> Vec<f64> {
        match self {
            BuiltinModel::Amplitude { .. } => vec![1.5],
            BuiltinModel::Frequency => vec![9.0],
            BuiltinModel::Phase { .. } => vec![0.8, -0.6],
            BuiltinModel::Rational { .. } => self
                .rational_truth()
                .expect("rational")
                .iter()
                .map(crate::scalar::rational_to_f64)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{AtomSource, IntegralAtom, TimeFunctional};
    use crate::scalar::int;

    #[test]
    fn amplitude_plan_matches_hand_derivation() {
        let (plan, image) = BuiltinModel::Amplitude { omega: 2.0 }.plan(1).unwrap();
        // [∫x + ω²∫(t-τ)²/2·x] = θ·[ω t²/2]
        assert_eq!(
            plan.a[0][0],
            TimeFunctional::new([IntegralAtom::new(int(2), 3, 0, AtomSource::Unit)])
        );
        assert_eq!(
            plan.b[0],
            TimeFunctional::new([
                IntegralAtom::new(int(1), 1, 0, AtomSource::Measured),
                IntegralAtom::new(int(4), 3, 0, AtomSource::Measured),
            ])
        );
        assert_eq!(image.b[0], plan.b[0].with_source(AtomSource::Perturbation));
        assert!(image.a[0][0].is_zero());
    }

    #[test]
    fn frequency_plan_has_four_measured_atoms() {
        let (plan, _) = BuiltinModel::Frequency.plan(1).unwrap();
        assert_eq!(plan.measured_atom_count(), 4);
        assert!(!plan.divisor_is_analytic());
    }

    #[test]
    fn phase_system_uses_consecutive_multipliers() {
        let sys = BuiltinModel::Phase { omega: 3.0 }.system(None, 1).unwrap();
        assert_eq!(sys.multipliers, vec![3, 4]);
        assert!(sys.certified);
    }
}
