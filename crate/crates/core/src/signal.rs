//! Carrier models, the time-to-operational transform and minimal equations.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffop::{DiffOp, OpExpr};
use crate::error::{Error, Result};
use crate::module::AnnihilatorModule;
use crate::poly::SPoly;
use crate::ratfunc::RatFunc;
use crate::runtime::{Grid, SampledSignal};
use crate::scalar::{rational_from_f64, ParamScalar, Symbol};

/// One term `c·t^m·z^(ν)` of a linear ODE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OdeTerm {
    pub t_power: u32,
    pub order: u32,
    pub coeff: ParamScalar,
}

impl OdeTerm {
    pub fn new(coeff: ParamScalar, t_power: u32, order: u32) -> Self {
        OdeTerm { t_power, order, coeff }
    }
}

/// `Σ c·t^m·z^(ν)(t) = 0` together with `z^(i)(0)` for `i < max ν`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeOde {
    terms: Vec<OdeTerm>,
    initial: Vec<ParamScalar>,
}

impl TimeOde {
    pub fn new(terms: Vec<OdeTerm>, initial: Vec<ParamScalar>) -> Result<Self> {
        let terms: Vec<OdeTerm> = terms.into_iter().filter(|t| !t.coeff.is_zero()).collect();
        let order = terms
            .iter()
            .map(|t| t.order)
            .max()
            .ok_or_else(|| Error::InvalidOde("no nonzero terms".into()))?;
        if initial.len() != order as usize {
            return Err(Error::InvalidOde(format!(
                "order {order} needs {order} initial conditions, got {}",
                initial.len()
            )));
        }
        Ok(TimeOde { terms, initial })
    }

    pub fn terms(&self) -> &[OdeTerm] {
        &self.terms
    }

    pub fn initial(&self) -> &[ParamScalar] {
        &self.initial
    }

    pub fn order(&self) -> u32 {
        self.terms.iter().map(|t| t.order).max().unwrap_or(0)
    }

    /// Unilateral Laplace transform of the ODE.
    ///
    /// `t^m z^(ν)` becomes `(-d/ds)^m (s^ν x̂ - Σ_{i<ν} s^{ν-1-i} z^(i)(0))`; the
    /// initial-condition part moves to the right-hand side.
    pub fn to_operational(&self) -> OperationalRelation {
        let mut lhs = DiffOp::zero();
        let mut rhs = SPoly::zero();
        for term in &self.terms {
            let m = term.t_power as usize;
            let nu = term.order as usize;
            let sign = if m.is_multiple_of(2) {
                ParamScalar::one()
            } else {
                ParamScalar::from_int(-1)
            };
            let c = &term.coeff * &sign;
            let op = DiffOp::d_pow(m)
                .compose(&DiffOp::mul_by(RatFunc::s_pow(nu as i64)))
                .scale(&c);
            lhs = &lhs + &op;
            let ic = SPoly::new((0..nu).map(|p| self.initial[nu - 1 - p].clone()).collect());
            let mut forced = ic;
            for _ in 0..m {
                forced = forced.derivative();
            }
            rhs = &rhs + &forced.scale(&c);
        }
        let mut params: BTreeSet<Symbol> = lhs.symbols();
        params.extend(rhs.symbols());
        OperationalRelation {
            lhs,
            rhs,
            params: params.into_iter().collect(),
        }
    }
}

/// `lhs(x̂) = rhs(s)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationalRelation {
    pub lhs: DiffOp,
    pub rhs: SPoly,
    /// Every symbol occurring in the relation.
    pub params: Vec<Symbol>,
}

impl OperationalRelation {
    pub fn new(lhs: DiffOp, rhs: SPoly) -> Self {
        let mut params: BTreeSet<Symbol> = lhs.symbols();
        params.extend(rhs.symbols());
        OperationalRelation {
            lhs,
            rhs,
            params: params.into_iter().collect(),
        }
    }

    /// `(d/ds)^{deg I + 1} ∘ lhs`, which kills the forcing polynomial.
    pub fn homogenize(&self) -> DiffOp {
        match self.rhs.degree() {
            None => self.lhs.clone(),
            Some(d) => DiffOp::d_pow(d + 1).compose(&self.lhs),
        }
    }

    /// The relation as an expression equal to zero: `lhs(x̂) - rhs·1`.
    pub fn as_expr(&self) -> OpExpr {
        OpExpr::new(self.lhs.clone(), -&RatFunc::from_poly(self.rhs.clone()))
    }

    /// Applies the relation to a candidate transform; zero iff it is satisfied.
    pub fn residual(&self, xhat: &RatFunc) -> RatFunc {
        self.as_expr().eval_on(xhat)
    }
}

/// `Σ_{i=0}^{n} q_i x̂^(i) = p`, normalized so that `gcd(p, q_0, …, q_n) = 1`
/// and the leading coefficient of `q_n` is one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MinimalEquation {
    q: Vec<SPoly>,
    p: SPoly,
}

fn lcm(a: &SPoly, b: &SPoly) -> SPoly {
    let g = a.gcd(b);
    (a * b).div_rem(&g).0
}

impl MinimalEquation {
    /// Normalizes an arbitrary polynomial relation; `None` if `q_n` would be zero.
    pub fn new(mut q: Vec<SPoly>, p: SPoly) -> Option<Self> {
        while q.last().is_some_and(SPoly::is_zero) {
            q.pop();
        }
        let top = q.last()?.clone();
        let g = q.iter().chain(std::iter::once(&p)).fold(SPoly::zero(), |g, c| g.gcd(c));
        let lc = top.div_rem(&g).0.leading().recip();
        let fix = |c: &SPoly| c.div_rem(&g).0.scale(&lc);
        Some(MinimalEquation {
            q: q.iter().map(fix).collect(),
            p: fix(&p),
        })
    }

    /// Clears the rational denominators of an operational relation.
    pub fn from_relation(lhs: &DiffOp, rhs: &RatFunc) -> Option<Self> {
        let den = lhs
            .terms()
            .iter()
            .chain(std::iter::once(rhs))
            .fold(SPoly::one(), |acc, r| lcm(&acc, r.denom()));
        let clear = |r: &RatFunc| (r.numer() * &den).div_rem(r.denom()).0;
        MinimalEquation::new(lhs.terms().iter().map(clear).collect(), clear(rhs))
    }

    pub fn order(&self) -> usize {
        self.q.len() - 1
    }

    pub fn q(&self) -> &[SPoly] {
        &self.q
    }

    pub fn p(&self) -> &SPoly {
        &self.p
    }

    pub fn module(&self) -> Arc<AnnihilatorModule> {
        let q: Vec<RatFunc> = self.q.iter().cloned().map(RatFunc::from_poly).collect();
        Arc::new(
            AnnihilatorModule::from_equation(&q, &RatFunc::from_poly(self.p.clone()))
                .expect("normalized equation has a nonzero top coefficient"),
        )
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut s = self.p.symbols();
        for q in &self.q {
            s.extend(q.symbols());
        }
        s
    }
}

/// Minimal equation of a rational transform: order zero, `q_0 = den`, `p = num`.
pub fn minimal_equation(xhat: &RatFunc) -> Result<MinimalEquation> {
    if xhat.is_zero() {
        return Err(Error::ZeroSignal);
    }
    Ok(MinimalEquation::new(vec![xhat.denom().clone()], xhat.numer().clone()).expect("nonzero denominator"))
}

/// A carrier parameter: a number or a symbol name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Known(f64),
    Symbolic(String),
}

impl Param {
    pub fn value(&self) -> Result<f64> {
        match self {
            Param::Known(v) => Ok(*v),
            Param::Symbolic(s) => Err(Error::NonNumericParameter(s.clone())),
        }
    }

    pub fn to_scalar(&self) -> Result<ParamScalar> {
        match self {
            Param::Known(v) => rational_from_f64(*v)
                .map(ParamScalar::from_rational)
                .ok_or_else(|| Error::InvalidCarrier(format!("non-finite parameter {v}"))),
            Param::Symbolic(s) => Ok(ParamScalar::symbol(s)),
        }
    }
}

impl From<f64> for Param {
    fn from(v: f64) -> Self {
        Param::Known(v)
    }
}

impl From<&str> for Param {
    fn from(s: &str) -> Self {
        Param::Symbolic(s.to_string())
    }
}

/// `A·sin(ω t + φ)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tone {
    pub amplitude: Param,
    pub omega: Param,
    #[serde(default = "zero_phase")]
    pub phase: Param,
}

fn zero_phase() -> Param {
    Param::Known(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CarrierSpec {
    /// `Σ A_i sin(ω_i t + φ_i)`
    TrigSum { tones: Vec<Tone> },
    /// `sin(ω t)/t`
    Sinc { omega: Param },
    /// `cos(ω t)/(1 + t²)`
    RaisedCosine { omega: Param },
    /// Inverse transform of a strictly proper `num/den`; coefficients by ascending power of `s`.
    RationalSpectrum { num: Vec<Param>, den: Vec<Param> },
}

impl CarrierSpec {
    pub fn tone(amplitude: f64, omega: f64, phase: f64) -> Self {
        CarrierSpec::TrigSum {
            tones: vec![Tone {
                amplitude: amplitude.into(),
                omega: omega.into(),
                phase: phase.into(),
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |p: &Param, what: &str| match p {
            Param::Known(v) if !(v.is_finite() && *v > 0.0) => {
                Err(Error::InvalidCarrier(format!("{what} must be positive, got {v}")))
            }
            _ => Ok(()),
        };
        match self {
            CarrierSpec::TrigSum { tones } => {
                if tones.is_empty() {
                    return Err(Error::InvalidCarrier("trig-sum needs at least one tone".into()));
                }
                tones.iter().try_for_each(|t| positive(&t.omega, "frequency"))
            }
            CarrierSpec::Sinc { omega } | CarrierSpec::RaisedCosine { omega } => positive(omega, "frequency"),
            CarrierSpec::RationalSpectrum { num, den } => {
                let r = self.spectrum_ratfunc(num, den)?;
                let dn = r.numer().degree().unwrap_or(0);
                let dd = r.denom().degree().unwrap_or(0);
                if r.is_zero() || dn >= dd {
                    return Err(Error::InvalidCarrier(
                        "spectrum must be nonzero and strictly proper".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn spectrum_ratfunc(&self, num: &[Param], den: &[Param]) -> Result<RatFunc> {
        let to_poly =
            |ps: &[Param]| -> Result<SPoly> { Ok(SPoly::new(ps.iter().map(Param::to_scalar).collect::<Result<_>>()?)) };
        let d = to_poly(den)?;
        if d.is_zero() {
            return Err(Error::InvalidCarrier("zero denominator".into()));
        }
        Ok(RatFunc::new(to_poly(num)?, d))
    }

    /// Operational form of a rational-spectrum carrier.
    pub fn spectrum(&self) -> Option<Result<RatFunc>> {
        match self {
            CarrierSpec::RationalSpectrum { num, den } => Some(self.spectrum_ratfunc(num, den)),
            _ => None,
        }
    }

    /// Pointwise samples; removable singularities at `t = 0` use their limits.
    pub fn sample(&self, grid: &Grid) -> Result<SampledSignal> {
        self.validate()?;
        let values = match self {
            CarrierSpec::TrigSum { tones } => {
                let tones: Vec<(f64, f64, f64)> = tones
                    .iter()
                    .map(|t| Ok((t.amplitude.value()?, t.omega.value()?, t.phase.value()?)))
                    .collect::<Result<_>>()?;
                grid.times()
                    .map(|t| tones.iter().map(|&(a, w, p)| a * (w * t + p).sin()).sum())
                    .collect()
            }
            CarrierSpec::Sinc { omega } => {
                let w = omega.value()?;
                grid.times()
                    .map(|t| if t == 0.0 { w } else { (w * t).sin() / t })
                    .collect()
            }
            CarrierSpec::RaisedCosine { omega } => {
                let w = omega.value()?;
                grid.times().map(|t| (w * t).cos() / (1.0 + t * t)).collect()
            }
            CarrierSpec::RationalSpectrum { num, den } => {
                let num: Vec<f64> = num.iter().map(Param::value).collect::<Result<_>>()?;
                let den: Vec<f64> = den.iter().map(Param::value).collect::<Result<_>>()?;
                let c = taylor_coefficients(&num, &den, 400);
                grid.times().map(|t| taylor_eval(&c, t)).collect()
            }
        };
        SampledSignal::new(*grid, values)
    }

    /// Linear ODE with polynomial coefficients satisfied by the carrier.
    ///
    /// Trig sums get symbolic initial conditions `z0, z1, …`, which the
    /// homogenization step eliminates.
    pub fn time_ode(&self) -> Result<TimeOde> {
        self.validate()?;
        let one = ParamScalar::one();
        match self {
            CarrierSpec::TrigSum { tones } => {
                // Π (D² + ω_i²) as a polynomial in D
                let mut op = SPoly::one();
                for tone in tones {
                    let w2 = tone.omega.to_scalar()?.pow(2);
                    op = &op * &SPoly::new(vec![w2, ParamScalar::zero(), one.clone()]);
                }
                let terms = op
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(nu, c)| OdeTerm::new(c.clone(), 0, nu as u32))
                    .collect();
                let n = op.degree().unwrap_or(0);
                let ic = (0..n).map(|i| ParamScalar::symbol(&format!("z{i}"))).collect();
                TimeOde::new(terms, ic)
            }
            CarrierSpec::Sinc { omega } => {
                let w = omega.to_scalar()?;
                TimeOde::new(
                    vec![
                        OdeTerm::new(one.clone(), 1, 2),
                        OdeTerm::new(ParamScalar::from_int(2), 0, 1),
                        OdeTerm::new(w.pow(2), 1, 0),
                    ],
                    vec![w, ParamScalar::zero()],
                )
            }
            CarrierSpec::RaisedCosine { omega } => {
                // (1+t²) z = cos ωt  ⇒  (1+t²)z'' + 4t z' + (2 + ω² + ω²t²) z = 0
                let w2 = omega.to_scalar()?.pow(2);
                TimeOde::new(
                    vec![
                        OdeTerm::new(one.clone(), 0, 2),
                        OdeTerm::new(one.clone(), 2, 2),
                        OdeTerm::new(ParamScalar::from_int(4), 1, 1),
                        OdeTerm::new(&ParamScalar::from_int(2) + &w2, 0, 0),
                        OdeTerm::new(w2, 2, 0),
                    ],
                    vec![one, ParamScalar::zero()],
                )
            }
            CarrierSpec::RationalSpectrum { num, den } => {
                let r = self.spectrum_ratfunc(num, den)?;
                let q = r.denom();
                let d = q.degree().unwrap_or(0);
                let terms = q
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(nu, c)| OdeTerm::new(c.clone(), 0, nu as u32))
                    .collect();
                // z^(k)(0) is the coefficient of s^{-k-1} in the expansion at infinity
                let p = r.numer();
                let mut c: Vec<ParamScalar> = Vec::with_capacity(d);
                for k in 0..d {
                    let mut ck = p.coeff(d - 1 - k);
                    for i in 0..d {
                        if k + i >= d {
                            ck = &ck - &(&q.coeff(i) * &c[k + i - d]);
                        }
                    }
                    c.push(ck);
                }
                TimeOde::new(terms, c)
            }
        }
    }
}

/// Coefficients `c_k` of `x(t) = Σ c_k t^k / k!` for the inverse transform of
/// `num/den` (ascending powers, strictly proper).
fn taylor_coefficients(num: &[f64], den: &[f64], count: usize) -> Vec<f64> {
    let d = den.iter().rposition(|&c| c != 0.0).unwrap_or(0);
    let lead = den[d];
    let q: Vec<f64> = den[..d].iter().map(|c| c / lead).collect();
    let p: Vec<f64> = num.iter().map(|c| c / lead).collect();
    let mut c = Vec::with_capacity(count);
    for k in 0..count {
        let mut ck = if k < d {
            p.get(d - 1 - k).copied().unwrap_or(0.0)
        } else {
            0.0
        };
        for (i, qi) in q.iter().enumerate() {
            if k + i >= d {
                ck -= qi * c[k + i - d];
            }
        }
        c.push(ck);
    }
    c
}

fn taylor_eval(c: &[f64], t: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for (k, ck) in c.iter().enumerate() {
        if k > 0 {
            term *= t / k as f64;
        }
        sum += ck * term;
        if k > 8 && term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Samples per period of the fastest tone, useful for sizing grids.
pub fn period_samples(omega: f64, dt: f64) -> f64 {
    2.0 * PI / (omega * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Assignment;

    fn harmonic() -> TimeOde {
        let w = ParamScalar::symbol("w");
        TimeOde::new(
            vec![OdeTerm::new(ParamScalar::one(), 0, 2), OdeTerm::new(w.pow(2), 0, 0)],
            vec![ParamScalar::symbol("x0"), ParamScalar::symbol("x1")],
        )
        .unwrap()
    }

    #[test]
    fn harmonic_oscillator_transform() {
        let rel = harmonic().to_operational();
        let w2 = ParamScalar::symbol("w").pow(2);
        let q = SPoly::new(vec![w2, ParamScalar::zero(), ParamScalar::one()]);
        assert_eq!(rel.lhs, DiffOp::mul_by(RatFunc::from_poly(q)));
        assert_eq!(
            rel.rhs,
            SPoly::new(vec![ParamScalar::symbol("x1"), ParamScalar::symbol("x0")])
        );
    }

    #[test]
    fn sinc_transform() {
        let rel = CarrierSpec::Sinc { omega: "w".into() }
            .time_ode()
            .unwrap()
            .to_operational();
        // -(s² + w²) x̂' = w, i.e. (s² + w²) x̂' = -w
        let w = ParamScalar::symbol("w");
        let q = SPoly::new(vec![w.pow(2), ParamScalar::zero(), ParamScalar::one()]);
        assert_eq!(rel.lhs, DiffOp::term(-&RatFunc::from_poly(q), 1));
        assert_eq!(rel.rhs, SPoly::constant(w));
    }

    #[test]
    fn homogenized_oscillator() {
        let op = harmonic().to_operational().homogenize();
        let w2 = ParamScalar::symbol("w").pow(2);
        let expect = DiffOp::new(vec![
            RatFunc::constant(ParamScalar::from_int(2)),
            RatFunc::from_ints(&[0, 4], &[1]),
            RatFunc::from_poly(SPoly::new(vec![w2, ParamScalar::zero(), ParamScalar::one()])),
        ]);
        assert_eq!(op, expect);
    }

    #[test]
    fn homogenize_without_forcing_is_identity() {
        let rel = OperationalRelation::new(DiffOp::s(), SPoly::zero());
        assert_eq!(rel.homogenize(), DiffOp::s());
    }

    #[test]
    fn rational_minimal_equation() {
        let m = minimal_equation(&RatFunc::from_ints(&[-1, 0, 1], &[-4, 4, -1, 1])).unwrap();
        // (s² - 1)/((s - 1)(s² + 4))
        assert_eq!(m.q(), &[SPoly::from_ints(&[4, 0, 1])]);
        assert_eq!(m.p(), &SPoly::from_ints(&[1, 1]));
        assert!(matches!(minimal_equation(&RatFunc::zero()), Err(Error::ZeroSignal)));
    }

    #[test]
    fn normalization_removes_polynomial_multiplier() {
        let a = MinimalEquation::new(vec![SPoly::from_ints(&[5, 1, 1])], SPoly::from_ints(&[2, 3])).unwrap();
        let f = SPoly::from_ints(&[7, -2, 3]);
        let b = MinimalEquation::new(
            vec![&SPoly::from_ints(&[5, 1, 1]) * &f],
            &SPoly::from_ints(&[2, 3]) * &f,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rational_spectrum_relation_is_satisfied() {
        let spec = CarrierSpec::RationalSpectrum {
            num: vec![2.0.into(), 3.0.into()],
            den: vec![5.0.into(), 1.0.into(), 1.0.into()],
        };
        let rel = spec.time_ode().unwrap().to_operational();
        let xhat = RatFunc::from_ints(&[2, 3], &[5, 1, 1]);
        assert!(rel.residual(&xhat).is_zero());
    }

    #[test]
    fn sampled_carriers() {
        let grid = Grid::new(PI / 4.0, 3).unwrap();
        let s = CarrierSpec::tone(1.0, 2.0, 0.0).sample(&grid).unwrap();
        assert_eq!(s.values()[0], 0.0);
        assert!((s.values()[1] - 1.0).abs() < 1e-15);
        assert!(s.values()[2].abs() < 1e-15);

        let g = Grid::new(1.0, 2).unwrap();
        let sinc = CarrierSpec::Sinc { omega: 3.0.into() }.sample(&g).unwrap();
        assert_eq!(sinc.values()[0], 3.0);
        let rc = CarrierSpec::RaisedCosine { omega: 2.0.into() }.sample(&g).unwrap();
        assert_eq!(rc.values()[0], 1.0);
        assert!((rc.values()[1] - 2f64.cos() / 2.0).abs() < 1e-15);

        let sym = CarrierSpec::Sinc { omega: "w".into() };
        assert!(matches!(sym.sample(&g), Err(Error::NonNumericParameter(_))));
    }

    #[test]
    fn rational_spectrum_samples_match_closed_form() {
        // 1/(s² + 1) ↔ sin t
        let spec = CarrierSpec::RationalSpectrum {
            num: vec![1.0.into()],
            den: vec![1.0.into(), 0.0.into(), 1.0.into()],
        };
        let g = Grid::new(0.25, 17).unwrap();
        let x = spec.sample(&g).unwrap();
        for (t, v) in g.times().zip(x.values()) {
            assert!((v - t.sin()).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn symbolic_initial_conditions_on_trig_sums() {
        let ode = CarrierSpec::tone(1.0, 2.0, 0.3).time_ode().unwrap();
        assert_eq!(ode.order(), 2);
        let rel = ode.to_operational();
        let at: Assignment = Assignment::new();
        assert!(rel.rhs.coeffs().iter().all(|c| c.eval(&at).is_none()));
        assert!(rel.homogenize().symbols().is_empty());
    }
}
