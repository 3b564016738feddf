//! Linear differential operators in `d/ds` with rational-function coefficients.
//!
//! Operators are kept in the normal form `Σ r_j (d/ds)^j` with derivatives on
//! the right. Composition uses the Leibniz rule
//! `(d/ds)^i ∘ r = Σ_l C(i,l) r^(l) (d/ds)^(i-l)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::poly::SPoly;
use crate::ratfunc::RatFunc;
use crate::scalar::{ParamScalar, Symbol};

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct DiffOp {
    /// `terms[j]` multiplies `(d/ds)^j`; no trailing zeros.
    terms: Vec<RatFunc>,
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i as i64 + 1))
}

impl DiffOp {
    pub fn new(mut terms: Vec<RatFunc>) -> Self {
        while terms.last().is_some_and(RatFunc::is_zero) {
            terms.pop();
        }
        DiffOp { terms }
    }

    pub fn zero() -> Self {
        DiffOp::default()
    }

    pub fn identity() -> Self {
        DiffOp::mul_by(RatFunc::one())
    }

    /// `d/ds`
    pub fn d() -> Self {
        DiffOp::term(RatFunc::one(), 1)
    }

    /// `(d/ds)^j`
    pub fn d_pow(j: usize) -> Self {
        DiffOp::term(RatFunc::one(), j)
    }

    /// Multiplication by `r`.
    pub fn mul_by(r: RatFunc) -> Self {
        DiffOp::new(vec![r])
    }

    /// `r·(d/ds)^j`
    pub fn term(r: RatFunc, j: usize) -> Self {
        let mut v = vec![RatFunc::zero(); j + 1];
        v[j] = r;
        DiffOp::new(v)
    }

    pub fn s() -> Self {
        DiffOp::mul_by(RatFunc::from_poly(SPoly::s()))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `None` for the zero operator.
    pub fn order(&self) -> Option<usize> {
        self.terms.len().checked_sub(1)
    }

    pub fn coeff(&self, j: usize) -> RatFunc {
        self.terms.get(j).cloned().unwrap_or_else(RatFunc::zero)
    }

    pub fn terms(&self) -> &[RatFunc] {
        &self.terms
    }

    /// Nonzero `(r_j, j)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &RatFunc)> {
        self.terms.iter().enumerate().filter(|(_, r)| !r.is_zero())
    }

    /// `Σ_j r_j · d^j f / ds^j`
    pub fn apply(&self, f: &RatFunc) -> RatFunc {
        let mut acc = RatFunc::zero();
        let mut deriv = f.clone();
        for (j, r) in self.terms.iter().enumerate() {
            if j > 0 {
                deriv = deriv.derivative();
            }
            if !r.is_zero() {
                acc = &acc + &(r * &deriv);
            }
        }
        acc
    }

    /// Left multiplication by a rational function: `r ∘ self`.
    pub fn left_mul(&self, r: &RatFunc) -> DiffOp {
        DiffOp::new(self.terms.iter().map(|t| r * t).collect())
    }

    pub fn scale(&self, c: &ParamScalar) -> DiffOp {
        DiffOp::new(self.terms.iter().map(|t| t.scale(c)).collect())
    }

    /// Composition `self ∘ rhs`.
    pub fn compose(&self, rhs: &DiffOp) -> DiffOp {
        if self.is_zero() || rhs.is_zero() {
            return DiffOp::zero();
        }
        let mut out = vec![RatFunc::zero(); self.terms.len() + rhs.terms.len() - 1];
        for (j, b) in rhs.iter() {
            // derivatives of b up to the order of self
            let mut derivs = Vec::with_capacity(self.terms.len());
            derivs.push(b.clone());
            for l in 1..self.terms.len() {
                let next = derivs[l - 1].derivative();
                derivs.push(next);
            }
            for (i, a) in self.iter() {
                for (l, bl) in derivs.iter().enumerate().take(i + 1) {
                    if bl.is_zero() {
                        continue;
                    }
                    let c = ParamScalar::from_int(binomial(i, l));
                    let idx = i - l + j;
                    out[idx] = &out[idx] + &(a * bl).scale(&c);
                }
            }
        }
        DiffOp::new(out)
    }

    pub fn pow(&self, k: usize) -> DiffOp {
        (0..k).fold(DiffOp::identity(), |acc, _| acc.compose(self))
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<Symbol> {
        self.terms.iter().flat_map(|t| t.symbols()).collect()
    }

    pub fn substitute(&self, at: &crate::scalar::Assignment) -> DiffOp {
        DiffOp::new(self.terms.iter().map(|t| t.substitute(at)).collect())
    }
}

impl Add for &DiffOp {
    type Output = DiffOp;
    fn add(self, rhs: &DiffOp) -> DiffOp {
        let n = self.terms.len().max(rhs.terms.len());
        DiffOp::new((0..n).map(|j| &self.coeff(j) + &rhs.coeff(j)).collect())
    }
}

impl Sub for &DiffOp {
    type Output = DiffOp;
    fn sub(self, rhs: &DiffOp) -> DiffOp {
        let n = self.terms.len().max(rhs.terms.len());
        DiffOp::new((0..n).map(|j| &self.coeff(j) - &rhs.coeff(j)).collect())
    }
}

impl Mul for &DiffOp {
    type Output = DiffOp;
    fn mul(self, rhs: &DiffOp) -> DiffOp {
        self.compose(rhs)
    }
}

impl Neg for &DiffOp {
    type Output = DiffOp;
    fn neg(self) -> DiffOp {
        DiffOp::new(self.terms.iter().map(|t| -t).collect())
    }
}

impl fmt::Display for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (j, r) in self.iter().collect::<Vec<_>>().into_iter().rev() {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            match j {
                0 => write!(f, "({r})")?,
                1 => write!(f, "({r})·D")?,
                _ => write!(f, "({r})·D^{j}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Diff operator pair for derivative-based functions applied to a fixed signal `x̂` and to `1`:
/// represents `signal(x̂) + unit`.
#[derive(Clone, PartialEq, Eq, Hash, Default, Debug)]
pub struct OpExpr {
    pub signal: DiffOp,
    pub unit: RatFunc,
}

impl OpExpr {
    pub fn new(signal: DiffOp, unit: RatFunc) -> Self {
        OpExpr { signal, unit }
    }

    pub fn zero() -> Self {
        OpExpr::default()
    }

    pub fn is_zero(&self) -> bool {
        self.signal.is_zero() && self.unit.is_zero()
    }

    /// `r·x̂^(k)`
    pub fn signal_term(r: RatFunc, k: usize) -> Self {
        OpExpr::new(DiffOp::term(r, k), RatFunc::zero())
    }

    /// `r·1`
    pub fn unit_term(r: RatFunc) -> Self {
        OpExpr::new(DiffOp::zero(), r)
    }

    pub fn left_mul(&self, r: &RatFunc) -> OpExpr {
        OpExpr::new(self.signal.left_mul(r), r * &self.unit)
    }

    pub fn scale(&self, c: &ParamScalar) -> OpExpr {
        OpExpr::new(self.signal.scale(c), self.unit.scale(c))
    }

    /// `op ∘ self`: the operator applied to both the signal part and the unit part.
    pub fn apply_op(&self, op: &DiffOp) -> OpExpr {
        OpExpr::new(op.compose(&self.signal), op.apply(&self.unit))
    }

    /// Value when `x̂` is a known rational function.
    pub fn eval_on(&self, xhat: &RatFunc) -> RatFunc {
        &self.signal.apply(xhat) + &self.unit
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<Symbol> {
        let mut s = self.signal.symbols();
        s.extend(self.unit.symbols());
        s
    }
}

impl Add for &OpExpr {
    type Output = OpExpr;
    fn add(self, rhs: &OpExpr) -> OpExpr {
        OpExpr::new(&self.signal + &rhs.signal, &self.unit + &rhs.unit)
    }
}

impl Neg for &OpExpr {
    type Output = OpExpr;
    fn neg(self) -> OpExpr {
        OpExpr::new(-&self.signal, -&self.unit)
    }
}

impl fmt::Display for OpExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.signal.is_zero(), self.unit.is_zero()) {
            (true, true) => f.write_str("0"),
            (false, true) => write!(f, "[{}]x̂", self.signal),
            (true, false) => write!(f, "{}", self.unit),
            (false, false) => write!(f, "[{}]x̂ + {}", self.signal, self.unit),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_commutator() {
        let lhs = &(&DiffOp::d() * &DiffOp::s()) - &(&DiffOp::s() * &DiffOp::d());
        assert_eq!(lhs, DiffOp::identity());
    }

    #[test]
    fn unit_is_neutral() {
        let b = DiffOp::new(vec![RatFunc::from_ints(&[1, 2], &[3, 0, 1]), RatFunc::s_pow(2)]);
        assert_eq!(&DiffOp::identity() * &b, b);
        assert_eq!(&b * &DiffOp::identity(), b);
    }

    #[test]
    fn leibniz_expansion() {
        // D ∘ s²D = s²D² + 2sD
        let b = DiffOp::term(RatFunc::s_pow(2), 1);
        let expect = DiffOp::new(vec![
            RatFunc::zero(),
            RatFunc::from_ints(&[0, 2], &[1]),
            RatFunc::s_pow(2),
        ]);
        assert_eq!(&DiffOp::d() * &b, expect);
    }

    #[test]
    fn apply_basics() {
        let c = RatFunc::constant(ParamScalar::from_int(7));
        assert!(DiffOp::d().apply(&c).is_zero());
        assert_eq!(
            DiffOp::d().apply(&RatFunc::s_pow(-1)),
            RatFunc::laurent_monomial(ParamScalar::from_int(-1), -2)
        );
    }
}
