//! Compilation of operational linear systems into time-domain estimator plans.
//!
//! Once every entry is a polynomial in `1/s` without constant term, each term
//! maps to an iterated integral through the correspondences
//!
//! | operational            | time domain                                    |
//! |------------------------|------------------------------------------------|
//! | `(d/ds)^j x̂`           | `(-t)^j x(t)`                                  |
//! | `s^{-k} Y`             | `∫₀ᵗ (t-τ)^{k-1}/(k-1)! y(τ) dτ`               |
//! | `s^{-m}·1`             | `t^{m-1}/(m-1)!`                               |
//!
//! Coefficients stay exact rationals until a plan is evaluated numerically.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::diffop::{DiffOp, OpExpr};
use crate::error::{Error, Result};
use crate::identifiability::{LinearSystemSpec, PerturbationRow};
use crate::ratfunc::RatFunc;
use crate::scalar::{rational_to_f64, ParamScalar, Rational};

pub(crate) mod rational_serde {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        text.trim()
            .parse::<Rational>()
            .map_err(|e| serde::de::Error::custom(format!("bad rational `{text}`: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomSource {
    /// Integral of the measured signal.
    Measured,
    /// Closed-form polynomial in the window width.
    Unit,
    /// Integral of the additive perturbation.
    Perturbation,
}

/// `c·∫₀ᵗ (t-τ)^{k-1}/(k-1)! · (-τ)^j · y(τ) dτ` for signal sources,
/// `c·t^{k-1}/(k-1)!` for [`AtomSource::Unit`] (where `j == 0`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralAtom {
    #[serde(with = "rational_serde")]
    pub coeff: Rational,
    pub k: u32,
    pub j: u32,
    pub source: AtomSource,
}

impl IntegralAtom {
    pub fn new(coeff: Rational, k: u32, j: u32, source: AtomSource) -> Self {
        assert!(k >= 1, "integral atoms are strictly proper (k >= 1)");
        assert!(source != AtomSource::Unit || j == 0, "unit atoms carry no τ-power");
        IntegralAtom { coeff, k, j, source }
    }

    pub fn coeff_f64(&self) -> f64 {
        rational_to_f64(&self.coeff)
    }

    /// Integrand kernel `c·(t-τ)^{k-1}/(k-1)!·(-τ)^j` (unit atoms: the closed form, τ ignored).
    pub fn kernel(&self, t: f64, tau: f64) -> f64 {
        let c = self.coeff_f64();
        let fact = factorial(self.k - 1);
        match self.source {
            AtomSource::Unit => c * t.powi(self.k as i32 - 1) / fact,
            _ => c * (t - tau).powi(self.k as i32 - 1) / fact * (-tau).powi(self.j as i32),
        }
    }

    /// Value of a unit atom at window width `t`.
    pub fn unit_value(&self, t: f64) -> f64 {
        debug_assert_eq!(self.source, AtomSource::Unit);
        self.coeff_f64() * t.powi(self.k as i32 - 1) / factorial(self.k - 1)
    }

    /// Exact response to the signal `τ^n`, as `(coefficient, power of t)`.
    ///
    /// `∫₀ᵗ (t-τ)^{k-1}/(k-1)! (-τ)^j τ^n dτ = (-1)^j (j+n)!/(k+j+n)! t^{k+j+n}`.
    pub fn monomial_response(&self, n: u32) -> (Rational, u32) {
        match self.source {
            AtomSource::Unit => (
                &self.coeff / Rational::from_integer(factorial_big(self.k - 1)),
                self.k - 1,
            ),
            _ => {
                let sign = if self.j.is_multiple_of(2) { 1 } else { -1 };
                let num = factorial_big(self.j + n);
                let den = factorial_big(self.k + self.j + n);
                (&self.coeff * Rational::new(num * sign, den), self.k + self.j + n)
            }
        }
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn factorial_big(n: u32) -> num_bigint::BigInt {
    (1..=n).map(num_bigint::BigInt::from).product()
}

impl fmt::Display for IntegralAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.coeff;
        match self.source {
            AtomSource::Unit => write!(f, "{c}·t^{}/{}!", self.k - 1, self.k - 1),
            src => {
                let y = if src == AtomSource::Measured { "x" } else { "w" };
                let tau = match self.j {
                    0 => String::new(),
                    1 => "(-τ)·".to_string(),
                    j => format!("(-τ)^{j}·"),
                };
                write!(f, "{c}·∫(t-τ)^{}/{}!·{tau}{y}(τ)dτ", self.k - 1, self.k - 1)
            }
        }
    }
}

/// Sum of integral atoms; atoms sharing `(k, j, source)` are merged.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeFunctional {
    atoms: Vec<IntegralAtom>,
}

impl TimeFunctional {
    pub fn new(atoms: impl IntoIterator<Item = IntegralAtom>) -> Self {
        let mut merged: BTreeMap<(AtomSource, u32, u32), Rational> = BTreeMap::new();
        for a in atoms {
            *merged.entry((a.source, a.k, a.j)).or_insert_with(Rational::zero) += a.coeff;
        }
        TimeFunctional {
            atoms: merged
                .into_iter()
                .filter(|(_, c)| !c.is_zero())
                .map(|((source, k, j), coeff)| IntegralAtom { coeff, k, j, source })
                .collect(),
        }
    }

    pub fn zero() -> Self {
        TimeFunctional::default()
    }

    pub fn atoms(&self) -> &[IntegralAtom] {
        &self.atoms
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn has_signal_atoms(&self) -> bool {
        self.atoms.iter().any(|a| a.source != AtomSource::Unit)
    }

    /// Same atoms with every signal source replaced by `source`.
    pub fn with_source(&self, source: AtomSource) -> TimeFunctional {
        TimeFunctional::new(
            self.atoms
                .iter()
                .filter(|a| a.source != AtomSource::Unit)
                .map(|a| IntegralAtom { source, ..a.clone() }),
        )
    }

    pub fn scale(&self, c: &Rational) -> TimeFunctional {
        TimeFunctional::new(self.atoms.iter().map(|a| IntegralAtom {
            coeff: &a.coeff * c,
            ..a.clone()
        }))
    }

    pub fn add(&self, other: &TimeFunctional) -> TimeFunctional {
        TimeFunctional::new(self.atoms.iter().chain(&other.atoms).cloned())
    }

    /// Value at window width `t` of the unit atoms only.
    pub fn unit_value(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.source == AtomSource::Unit)
            .map(|a| a.unit_value(t))
            .sum()
    }

    /// Exact polynomial in `t` produced when the signal is the polynomial
    /// `Σ signal[n]·τ^n`. Returned as dense coefficients.
    pub fn polynomial_response(&self, signal: &[Rational]) -> Vec<Rational> {
        let mut out: Vec<Rational> = Vec::new();
        let mut add = |c: Rational, p: u32| {
            let p = p as usize;
            if out.len() <= p {
                out.resize(p + 1, Rational::zero());
            }
            out[p] += c;
        };
        for a in &self.atoms {
            if a.source == AtomSource::Unit {
                let (c, p) = a.monomial_response(0);
                add(c, p);
            } else {
                for (n, x) in signal.iter().enumerate() {
                    if x.is_zero() {
                        continue;
                    }
                    let (c, p) = a.monomial_response(n as u32);
                    add(c * x, p);
                }
            }
        }
        while out.last().is_some_and(Zero::is_zero) {
            out.pop();
        }
        out
    }
}

impl fmt::Display for TimeFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return f.write_str("0");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Executable estimator: `A(t)·θ = B(t)` with divisor `δ(t) = det A(t)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorPlan {
    pub params: Vec<String>,
    pub a: Vec<Vec<TimeFunctional>>,
    pub b: Vec<TimeFunctional>,
}

impl EstimatorPlan {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// True when `δ(t)` does not depend on the measurements.
    pub fn divisor_is_analytic(&self) -> bool {
        self.a.iter().flatten().all(|f| !f.has_signal_atoms())
    }

    pub fn measured_atom_count(&self) -> usize {
        self.a
            .iter()
            .flatten()
            .chain(&self.b)
            .flat_map(TimeFunctional::atoms)
            .filter(|a| a.source == AtomSource::Measured)
            .count()
    }

    /// Checks shapes and atom invariants (used after loading from JSON).
    pub fn validate(&self) -> Result<()> {
        let n = self.params.len();
        if n == 0 {
            return Err(Error::EmptyParameterSet);
        }
        if self.a.len() != n || self.b.len() != n || self.a.iter().any(|r| r.len() != n) {
            return Err(Error::ArityMismatch {
                expected: n,
                got: self.a.len(),
            });
        }
        for atom in self.a.iter().flatten().chain(&self.b).flat_map(TimeFunctional::atoms) {
            if atom.k == 0 {
                return Err(Error::NotStrictlyProper { power: 0 });
            }
            if atom.source == AtomSource::Unit && atom.j != 0 {
                return Err(Error::InvalidConfig("unit atom with a τ-power".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: EstimatorPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }
}

impl fmt::Display for EstimatorPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, row) in self.a.iter().enumerate() {
            let lhs: Vec<String> = row
                .iter()
                .zip(&self.params)
                .map(|(e, p)| format!("[{e}]·{p}"))
                .collect();
            writeln!(f, "row {r}: {} = {}", lhs.join(" + "), self.b[r])?;
        }
        write!(f, "divisor: det A(t)")
    }
}

fn laurent(r: &RatFunc) -> Result<BTreeMap<i64, ParamScalar>> {
    r.as_laurent().ok_or_else(|| Error::NotLaurent(r.to_string()))
}

fn max_power(expr: &OpExpr) -> Result<Option<i64>> {
    let mut best: Option<i64> = None;
    for r in expr.signal.terms().iter().chain(std::iter::once(&expr.unit)) {
        if r.is_zero() {
            continue;
        }
        let top = laurent(r)?.keys().next_back().copied();
        best = best.max(top);
    }
    Ok(best)
}

/// Multiplier exponent `K` making a row strictly proper: largest nonnegative
/// power of `s` plus one, or zero when the row already is.
pub fn properness_shift<'a>(row: impl IntoIterator<Item = &'a OpExpr>) -> Result<i64> {
    let mut top: Option<i64> = None;
    for e in row {
        top = top.max(max_power(e)?);
    }
    Ok(match top {
        Some(p) if p >= 0 => p + 1,
        _ => 0,
    })
}

/// Multiplies every row by `s^{-K_row}` so only negative powers of `s` remain.
pub fn normalize_strictly_proper(sys: &LinearSystemSpec) -> Result<LinearSystemSpec> {
    let mut out = sys.clone();
    for r in 0..sys.b.len() {
        let k = properness_shift(sys.a[r].iter().chain(std::iter::once(&sys.b[r])))?;
        if k == 0 {
            continue;
        }
        let m = RatFunc::s_pow(-k);
        out.a[r] = sys.a[r].iter().map(|e| e.left_mul(&m)).collect();
        out.b[r] = sys.b[r].left_mul(&m);
        out.c_template[r] = sys.c_template[r].left_mul(&m);
        out.multipliers[r] += k;
    }
    Ok(out)
}

fn exact_coeff(c: &ParamScalar) -> Result<Rational> {
    c.as_rational()
        .cloned()
        .ok_or_else(|| Error::SymbolicCoefficient(c.to_string()))
}

fn signal_atoms(op: &DiffOp, source: AtomSource) -> Result<Vec<IntegralAtom>> {
    let mut atoms = Vec::new();
    for (j, r) in op.iter() {
        for (p, c) in laurent(r)? {
            if p >= 0 {
                return Err(Error::NotStrictlyProper { power: p });
            }
            atoms.push(IntegralAtom::new(exact_coeff(&c)?, (-p) as u32, j as u32, source));
        }
    }
    Ok(atoms)
}

/// Time-domain functional of one strictly proper operational expression.
pub fn compile_expr(expr: &OpExpr) -> Result<TimeFunctional> {
    let mut atoms = signal_atoms(&expr.signal, AtomSource::Measured)?;
    if !expr.unit.is_zero() {
        for (p, c) in laurent(&expr.unit)? {
            if p >= 0 {
                return Err(Error::NotStrictlyProper { power: p });
            }
            atoms.push(IntegralAtom::new(exact_coeff(&c)?, (-p) as u32, 0, AtomSource::Unit));
        }
    }
    Ok(TimeFunctional::new(atoms))
}

/// Compiles a strictly proper system into an executable plan.
pub fn compile(sys: &LinearSystemSpec) -> Result<EstimatorPlan> {
    let a = sys
        .a
        .iter()
        .map(|row| row.iter().map(compile_expr).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let b = sys.b.iter().map(compile_expr).collect::<Result<Vec<_>>>()?;
    Ok(EstimatorPlan {
        params: sys.params.iter().map(|p| p.name().to_string()).collect(),
        a,
        b,
    })
}

/// The perturbation column in the time domain: `𝔠 = Σ_q θ_q·a[q] - b` per row,
/// where `a`, `b` are the signal parts of the plan applied to the perturbation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationImage {
    pub a: Vec<Vec<TimeFunctional>>,
    pub b: Vec<TimeFunctional>,
}

impl PerturbationImage {
    /// Combined functional of each row for the given parameter values.
    pub fn column(&self, theta: &[Rational]) -> Vec<TimeFunctional> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| {
                row.iter()
                    .zip(theta)
                    .fold(b.scale(&-Rational::one()), |acc, (f, th)| acc.add(&f.scale(th)))
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().flatten().chain(&self.b).all(TimeFunctional::is_zero)
    }
}

/// Atoms of the system's perturbation template, with source = perturbation.
///
/// The plan must be the compilation of `sys`.
pub fn perturbation_image(sys: &LinearSystemSpec, plan: &EstimatorPlan) -> Result<PerturbationImage> {
    if plan.arity() != sys.params.len() {
        return Err(Error::ArityMismatch {
            expected: sys.params.len(),
            got: plan.arity(),
        });
    }
    let row_image = |row: &PerturbationRow| -> Result<(Vec<TimeFunctional>, TimeFunctional)> {
        let a = row
            .a
            .iter()
            .map(|op| signal_atoms(op, AtomSource::Perturbation).map(TimeFunctional::new))
            .collect::<Result<Vec<_>>>()?;
        let b = TimeFunctional::new(signal_atoms(&row.b, AtomSource::Perturbation)?);
        Ok((a, b))
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for row in &sys.c_template {
        let (ra, rb) = row_image(row)?;
        a.push(ra);
        b.push(rb);
    }
    Ok(PerturbationImage { a, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    #[test]
    fn atoms_merge() {
        let f = TimeFunctional::new([
            IntegralAtom::new(int(1), 2, 0, AtomSource::Measured),
            IntegralAtom::new(int(3), 2, 0, AtomSource::Measured),
            IntegralAtom::new(int(-1), 1, 0, AtomSource::Unit),
            IntegralAtom::new(int(1), 1, 0, AtomSource::Unit),
        ]);
        assert_eq!(f.atoms().len(), 1);
        assert_eq!(f.atoms()[0].coeff, int(4));
    }

    #[test]
    fn unit_atom_closed_form() {
        // s^-3·1 ↔ t²/2
        let f = compile_expr(&OpExpr::unit_term(RatFunc::s_pow(-3))).unwrap();
        assert_eq!(f.atoms(), &[IntegralAtom::new(int(1), 3, 0, AtomSource::Unit)]);
        assert_eq!(f.unit_value(1.0), 0.5);
    }

    #[test]
    fn measured_atom_from_derivative() {
        // s^-1 x̂'' ↔ ∫ τ² x
        let f = compile_expr(&OpExpr::signal_term(RatFunc::s_pow(-1), 2)).unwrap();
        assert_eq!(f.atoms(), &[IntegralAtom::new(int(1), 1, 2, AtomSource::Measured)]);
    }

    #[test]
    fn positive_powers_rejected() {
        let e = OpExpr::signal_term(RatFunc::s_pow(1), 0);
        assert!(matches!(compile_expr(&e), Err(Error::NotStrictlyProper { power: 1 })));
        let e = OpExpr::unit_term(RatFunc::from_ints(&[1], &[1, 1]));
        assert!(matches!(compile_expr(&e), Err(Error::NotLaurent(_))));
    }

    #[test]
    fn monomial_response_matches_beta_integral() {
        // k=2, j=1 on τ: ∫(t-τ)(-τ)τ = -t⁴/12
        let a = IntegralAtom::new(int(1), 2, 1, AtomSource::Measured);
        assert_eq!(a.monomial_response(1), (rat(-1, 12), 4));
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = EstimatorPlan {
            params: vec!["theta".into()],
            a: vec![vec![TimeFunctional::new([IntegralAtom::new(
                rat(3, 2),
                3,
                0,
                AtomSource::Unit,
            )])]],
            b: vec![TimeFunctional::new([IntegralAtom::new(
                int(4),
                3,
                0,
                AtomSource::Measured,
            )])],
        };
        let text = plan.to_json().unwrap();
        assert_eq!(EstimatorPlan::from_json(&text).unwrap(), plan);
    }
}
