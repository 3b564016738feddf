//! Rational functions of `s` over the parameter field.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::poly::SPoly;
use crate::scalar::{Assignment, ParamScalar, Rational, Symbol};

/// Reduced `num/den` with a monic denominator. Zero is `0/1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatFunc {
    num: SPoly,
    den: SPoly,
}

impl RatFunc {
    /// Panics if `den` is zero.
    pub fn new(num: SPoly, den: SPoly) -> Self {
        assert!(!den.is_zero(), "rational function with zero denominator");
        if num.is_zero() {
            return RatFunc::zero();
        }
        let (num, den) = if den.is_constant() {
            (num, den)
        } else {
            let g = num.gcd(&den);
            if g.is_constant() {
                (num, den)
            } else {
                (num.div_rem(&g).0, den.div_rem(&g).0)
            }
        };
        let lc = den.leading().recip();
        RatFunc {
            num: num.scale(&lc),
            den: den.scale(&lc),
        }
    }

    pub fn zero() -> Self {
        RatFunc {
            num: SPoly::zero(),
            den: SPoly::one(),
        }
    }

    pub fn one() -> Self {
        RatFunc::constant(ParamScalar::one())
    }

    pub fn constant(c: ParamScalar) -> Self {
        RatFunc {
            num: SPoly::constant(c),
            den: SPoly::one(),
        }
    }

    pub fn from_poly(p: SPoly) -> Self {
        RatFunc {
            num: p,
            den: SPoly::one(),
        }
    }

    pub fn from_ints(num: &[i64], den: &[i64]) -> Self {
        RatFunc::new(SPoly::from_ints(num), SPoly::from_ints(den))
    }

    /// `c·s^k` for any integer `k`.
    pub fn laurent_monomial(c: ParamScalar, k: i64) -> Self {
        if k >= 0 {
            RatFunc::from_poly(SPoly::monomial(c, k as usize))
        } else {
            RatFunc::new(SPoly::constant(c), SPoly::monomial(ParamScalar::one(), (-k) as usize))
        }
    }

    /// `s^k`
    pub fn s_pow(k: i64) -> Self {
        RatFunc::laurent_monomial(ParamScalar::one(), k)
    }

    pub fn numer(&self) -> &SPoly {
        &self.num
    }

    pub fn denom(&self) -> &SPoly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_constant()
    }

    pub fn derivative(&self) -> RatFunc {
        if self.is_polynomial() {
            return RatFunc::from_poly(self.num.derivative());
        }
        let top = &(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative());
        RatFunc::new(top, &self.den * &self.den)
    }

    /// `k`-th derivative.
    pub fn nth_derivative(&self, k: usize) -> RatFunc {
        (0..k).fold(self.clone(), |f, _| f.derivative())
    }

    pub fn recip(&self) -> RatFunc {
        RatFunc::new(self.den.clone(), self.num.clone())
    }

    pub fn scale(&self, c: &ParamScalar) -> RatFunc {
        if c.is_zero() {
            return RatFunc::zero();
        }
        RatFunc {
            num: self.num.scale(c),
            den: self.den.clone(),
        }
    }

    /// Value at `s` and a full parameter assignment; `None` at a pole.
    pub fn eval(&self, at: &Assignment, s: &Rational) -> Option<Rational> {
        let d = self.den.eval(at, s)?;
        if num_traits::Zero::is_zero(&d) {
            return None;
        }
        Some(self.num.eval(at, s)? / d)
    }

    pub fn substitute(&self, at: &Assignment) -> RatFunc {
        RatFunc::new(self.num.substitute(at), self.den.substitute(at))
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<Symbol> {
        let mut s = self.num.symbols();
        s.extend(self.den.symbols());
        s
    }

    /// Coefficients by exponent when the denominator is a pure power of `s`.
    pub fn as_laurent(&self) -> Option<BTreeMap<i64, ParamScalar>> {
        if !self.den.is_monomial() {
            return None;
        }
        let shift = self.den.degree().unwrap_or(0) as i64;
        Some(
            self.num
                .coeffs()
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, c)| (i as i64 - shift, c.clone()))
                .collect(),
        )
    }
}

impl Default for RatFunc {
    fn default() -> Self {
        RatFunc::zero()
    }
}

impl From<SPoly> for RatFunc {
    fn from(p: SPoly) -> Self {
        RatFunc::from_poly(p)
    }
}

impl Add for &RatFunc {
    type Output = RatFunc;
    fn add(self, rhs: &RatFunc) -> RatFunc {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        if self.den == rhs.den {
            return RatFunc::new(&self.num + &rhs.num, self.den.clone());
        }
        if self.den.is_constant() || rhs.den.is_constant() {
            return RatFunc::new(&(&self.num * &rhs.den) + &(&rhs.num * &self.den), &self.den * &rhs.den);
        }
        // over the lcm of the denominators
        let g = self.den.gcd(&rhs.den);
        let ls = rhs.den.div_rem(&g).0;
        let rs = self.den.div_rem(&g).0;
        RatFunc::new(&(&self.num * &ls) + &(&rhs.num * &rs), &self.den * &ls)
    }
}

impl Sub for &RatFunc {
    type Output = RatFunc;
    fn sub(self, rhs: &RatFunc) -> RatFunc {
        self + &(-rhs)
    }
}

impl Mul for &RatFunc {
    type Output = RatFunc;
    fn mul(self, rhs: &RatFunc) -> RatFunc {
        if self.is_zero() || rhs.is_zero() {
            return RatFunc::zero();
        }
        if self.is_polynomial() && rhs.is_polynomial() {
            let c = &self.den.leading() * &rhs.den.leading();
            return RatFunc::from_poly((&self.num * &rhs.num).scale(&c.recip()));
        }
        RatFunc::new(&self.num * &rhs.num, &self.den * &rhs.den)
    }
}

impl Div for &RatFunc {
    type Output = RatFunc;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: &RatFunc) -> RatFunc {
        self * &rhs.recip()
    }
}

impl Neg for &RatFunc {
    type Output = RatFunc;
    fn neg(self) -> RatFunc {
        RatFunc {
            num: -&self.num,
            den: self.den.clone(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for RatFunc {
            type Output = RatFunc;
            fn $m(self, rhs: RatFunc) -> RatFunc {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl fmt::Display for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_polynomial() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "({})/({})", self.num, self.den)
        }
    }
}

impl fmt::Debug for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn reduces_and_normalizes() {
        // (2s^2 - 2)/(2(s - 1)(s^2 + 4)) -> (s + 1)/(s^2 + 4)
        let num = SPoly::from_ints(&[-2, 0, 2]);
        let den = &SPoly::from_ints(&[-2, 2]) * &SPoly::from_ints(&[4, 0, 1]);
        let f = RatFunc::new(num, den);
        assert_eq!(f.numer(), &SPoly::from_ints(&[1, 1]));
        assert_eq!(f.denom(), &SPoly::from_ints(&[4, 0, 1]));
    }

    #[test]
    fn different_routes_compare_equal() {
        let a = RatFunc::from_ints(&[1], &[0, 1]);
        let b = RatFunc::from_ints(&[1], &[1, 1]);
        let lhs = &(&a - &b) * &RatFunc::from_ints(&[0, 1, 1], &[1]);
        assert_eq!(lhs, RatFunc::one());
    }

    #[test]
    fn derivative_of_reciprocal() {
        let f = RatFunc::s_pow(-1);
        assert_eq!(f.derivative(), RatFunc::laurent_monomial(ParamScalar::from_int(-1), -2));
    }

    #[test]
    fn laurent_view() {
        let f = &RatFunc::s_pow(-1) + &RatFunc::laurent_monomial(ParamScalar::from_int(4), -3);
        let l = f.as_laurent().unwrap();
        assert_eq!(l[&-1], ParamScalar::one());
        assert_eq!(l[&-3], ParamScalar::from_int(4));
        assert!(RatFunc::from_ints(&[1], &[1, 1]).as_laurent().is_none());
    }

    #[test]
    fn evaluation_at_pole() {
        let f = RatFunc::from_ints(&[1], &[-2, 1]);
        assert_eq!(f.eval(&Assignment::new(), &rat(2, 1)), None);
        assert_eq!(f.eval(&Assignment::new(), &rat(3, 1)), Some(rat(1, 1)));
    }
}
