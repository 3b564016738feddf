//! Exact scalars of the parameter field.
//!
//! A [`ParamScalar`] is a reduced quotient of two multivariate polynomials
//! with rational coefficients in a finite set of named parameter symbols.
//! Pure rationals take a fast path that never touches the polynomial code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub type Rational = BigRational;

/// Values assigned to parameter symbols.
pub type Assignment = BTreeMap<Symbol, Rational>;

/// A named parameter (unknown, initial condition or symbolic constant).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Symbol {
    fn from(s: &str) -> Self {
        Symbol::new(s)
    }
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact binary value of a finite `f64`.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn rational_to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // numerator/denominator overflow f64 individually; scale down first
        let n = x.numer().bits() as i64;
        let d = x.denom().bits() as i64;
        let shift = (n.max(d) - 1000).max(0) as u64;
        let nn = (x.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let dd = (x.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        nn / dd
    })
}

/// Product of variables with positive exponents, sorted by symbol.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
struct Monomial(Vec<(Symbol, u32)>);

impl Monomial {
    fn one() -> Self {
        Monomial(Vec::new())
    }

    fn var(v: &Symbol, e: u32) -> Self {
        if e == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(v.clone(), e)])
        }
    }

    fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    fn degree_in(&self, v: &Symbol) -> u32 {
        self.0.iter().find(|(s, _)| s == v).map_or(0, |(_, e)| *e)
    }

    fn without(&self, v: &Symbol) -> Monomial {
        Monomial(self.0.iter().filter(|(s, _)| s != v).cloned().collect())
    }

    fn total_degree_in(&self, vars: &[Symbol]) -> u32 {
        self.0.iter().filter(|(s, _)| vars.contains(s)).map(|(_, e)| *e).sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: Vec<(Symbol, u32)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    fn eval(&self, at: &Assignment) -> Option<Rational> {
        let mut acc = Rational::one();
        for (s, e) in &self.0 {
            let v = at.get(s)?;
            acc *= num_traits::pow(v.clone(), *e as usize);
        }
        Some(acc)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (s, e)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse multivariate polynomial over the rationals.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct MPoly {
    terms: BTreeMap<Monomial, Rational>,
}

impl MPoly {
    pub fn zero() -> Self {
        MPoly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = MPoly::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn one() -> Self {
        MPoly::constant(Rational::one())
    }

    pub fn var(v: &Symbol) -> Self {
        let mut p = MPoly::zero();
        p.terms.insert(Monomial::var(v, 1), Rational::one());
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self
                .terms
                .iter()
                .next()
                .filter(|(m, _)| m.is_one())
                .map(|(_, c)| c.clone()),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.terms
            .keys()
            .flat_map(|m| m.0.iter().map(|(s, _)| s.clone()))
            .collect()
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> MPoly {
        if c.is_zero() {
            return MPoly::zero();
        }
        MPoly {
            terms: self.terms.iter().map(|(m, x)| (m.clone(), x * c)).collect(),
        }
    }

    fn mul_monomial(&self, m: &Monomial) -> MPoly {
        MPoly {
            terms: self.terms.iter().map(|(k, c)| (k.mul(m), c.clone())).collect(),
        }
    }

    pub fn degree_in(&self, v: &Symbol) -> u32 {
        self.terms.keys().map(|m| m.degree_in(v)).max().unwrap_or(0)
    }

    /// Coefficients with respect to `v`, as polynomials in the other symbols.
    fn coeffs_in(&self, v: &Symbol) -> BTreeMap<u32, MPoly> {
        let mut out: BTreeMap<u32, MPoly> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.degree_in(v)).or_default().add_term(m.without(v), c.clone());
        }
        out
    }

    fn coeff_of_degree(&self, v: &Symbol, d: u32) -> MPoly {
        let mut out = MPoly::zero();
        for (m, c) in &self.terms {
            if m.degree_in(v) == d {
                out.add_term(m.without(v), c.clone());
            }
        }
        out
    }

    fn leading_coefficient(&self) -> Option<&Rational> {
        self.terms.values().next_back()
    }

    /// Scales so the largest monomial has coefficient one.
    fn normalized(&self) -> MPoly {
        match self.leading_coefficient() {
            None => MPoly::zero(),
            Some(lc) => self.scale(&lc.recip()),
        }
    }

    pub fn eval(&self, at: &Assignment) -> Option<Rational> {
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            acc += c * m.eval(at)?;
        }
        Some(acc)
    }

    /// Replaces the assigned symbols, leaving the others symbolic.
    pub fn substitute(&self, at: &Assignment) -> MPoly {
        let mut out = MPoly::zero();
        for (m, c) in &self.terms {
            let mut coeff = c.clone();
            let mut rest = Vec::new();
            for (s, e) in &m.0 {
                match at.get(s) {
                    Some(v) => coeff *= num_traits::pow(v.clone(), *e as usize),
                    None => rest.push((s.clone(), *e)),
                }
            }
            out.add_term(Monomial(rest), coeff);
        }
        out
    }

    /// Exact quotient, `None` when `d` does not divide `self`.
    pub fn div_exact(&self, d: &MPoly) -> Option<MPoly> {
        assert!(!d.is_zero(), "division by zero polynomial");
        if self.is_zero() {
            return Some(MPoly::zero());
        }
        if let Some(c) = d.as_constant() {
            return Some(self.scale(&c.recip()));
        }
        let v = d.symbols().into_iter().next_back()?;
        let dd = d.degree_in(&v);
        let lc_d = d.coeff_of_degree(&v, dd);
        let mut r = self.clone();
        let mut q = MPoly::zero();
        while !r.is_zero() {
            let dr = r.degree_in(&v);
            if dr < dd {
                return None;
            }
            let lc_r = r.coeff_of_degree(&v, dr);
            let qc = lc_r.div_exact(&lc_d)?;
            let term = qc.mul_monomial(&Monomial::var(&v, dr - dd));
            r = &r - &(&term * d);
            q = &q + &term;
        }
        Some(q)
    }

    /// Pseudo-remainder of `self` by `g` with respect to `v`.
    fn prem(&self, g: &MPoly, v: &Symbol) -> MPoly {
        let dg = g.degree_in(v);
        let lc_g = g.coeff_of_degree(v, dg);
        let mut r = self.clone();
        while !r.is_zero() && r.degree_in(v) >= dg {
            let dr = r.degree_in(v);
            let lc_r = r.coeff_of_degree(v, dr);
            let shifted = &lc_r.mul_monomial(&Monomial::var(v, dr - dg)) * g;
            r = &(&r * &lc_g) - &shifted;
        }
        r
    }

    fn content_in(&self, v: &Symbol) -> MPoly {
        self.coeffs_in(v)
            .into_values()
            .fold(MPoly::zero(), |acc, c| acc.gcd(&c))
    }

    /// Greatest common divisor, normalized so its largest monomial has coefficient one.
    ///
    /// Recursive primitive remainder sequence in the largest symbol present.
    pub fn gcd(&self, other: &MPoly) -> MPoly {
        if self.is_zero() {
            return other.normalized();
        }
        if other.is_zero() {
            return self.normalized();
        }
        if self.is_constant() || other.is_constant() {
            return MPoly::one();
        }
        let mut vars = self.symbols();
        vars.extend(other.symbols());
        let v = vars.into_iter().next_back().expect("non-constant polynomial");
        let (da, db) = (self.degree_in(&v), other.degree_in(&v));
        if da == 0 {
            return self.gcd(&other.content_in(&v));
        }
        if db == 0 {
            return other.gcd(&self.content_in(&v));
        }
        let (ca, cb) = (self.content_in(&v), other.content_in(&v));
        let c = ca.gcd(&cb);
        let pa = self.div_exact(&ca).expect("content divides");
        let pb = other.div_exact(&cb).expect("content divides");
        let (mut f, mut g) = if da >= db { (pa, pb) } else { (pb, pa) };
        loop {
            let r = f.prem(&g, &v);
            if r.is_zero() {
                break;
            }
            if r.degree_in(&v) == 0 {
                return c.normalized();
            }
            let cr = r.content_in(&v);
            f = g;
            g = r.div_exact(&cr).expect("content divides");
        }
        let cg = g.content_in(&v);
        let pg = g.div_exact(&cg).expect("content divides");
        (&c * &pg).normalized()
    }

    /// Splits into the part free of `vars` and the coefficient of each var,
    /// or `None` when some monomial has total degree > 1 in `vars`.
    fn affine_parts(&self, vars: &[Symbol]) -> Option<(MPoly, Vec<MPoly>)> {
        let mut constant = MPoly::zero();
        let mut linear = vec![MPoly::zero(); vars.len()];
        for (m, c) in &self.terms {
            match m.total_degree_in(vars) {
                0 => constant.add_term(m.clone(), c.clone()),
                1 => {
                    let i = vars.iter().position(|v| m.degree_in(v) == 1)?;
                    linear[i].add_term(m.without(&vars[i]), c.clone());
                }
                _ => return None,
            }
        }
        Some((constant, linear))
    }
}

impl Add for &MPoly {
    type Output = MPoly;
    fn add(self, rhs: &MPoly) -> MPoly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl Sub for &MPoly {
    type Output = MPoly;
    fn sub(self, rhs: &MPoly) -> MPoly {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &MPoly {
    type Output = MPoly;
    fn mul(self, rhs: &MPoly) -> MPoly {
        let mut out = MPoly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &MPoly {
    type Output = MPoly;
    fn neg(self) -> MPoly {
        self.scale(&-Rational::one())
    }
}

fn fmt_rational(c: &Rational, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

impl fmt::Display for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            if i > 0 {
                f.write_str(if neg { " - " } else { " + " })?;
            } else if neg {
                f.write_str("-")?;
            }
            let a = c.abs();
            if m.is_one() {
                fmt_rational(&a, f)?;
            } else if a.is_one() {
                write!(f, "{m}")?;
            } else {
                fmt_rational(&a, f)?;
                write!(f, "*{m}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum Repr {
    Rational(Rational),
    /// Invariant: not both constant, coprime, `den` normalized.
    Fraction {
        num: MPoly,
        den: MPoly,
    },
}

/// Element of the parameter field: a reduced ratio of polynomials in the symbols.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ParamScalar(Repr);

impl ParamScalar {
    pub fn zero() -> Self {
        ParamScalar(Repr::Rational(Rational::zero()))
    }

    pub fn one() -> Self {
        ParamScalar(Repr::Rational(Rational::one()))
    }

    pub fn from_rational(r: Rational) -> Self {
        ParamScalar(Repr::Rational(r))
    }

    pub fn from_int(n: i64) -> Self {
        ParamScalar::from_rational(int(n))
    }

    pub fn symbol(name: &str) -> Self {
        ParamScalar::from_poly(MPoly::var(&Symbol::new(name)))
    }

    pub fn from_symbol(s: &Symbol) -> Self {
        ParamScalar::from_poly(MPoly::var(s))
    }

    pub fn from_poly(p: MPoly) -> Self {
        ParamScalar::from_fraction(p, MPoly::one())
    }

    /// Reduces `num/den` to canonical form.
    ///
    /// Panics if `den` is the zero polynomial.
    pub fn from_fraction(num: MPoly, den: MPoly) -> Self {
        assert!(!den.is_zero(), "zero denominator in parameter scalar");
        if num.is_zero() {
            return ParamScalar::zero();
        }
        if let (Some(n), Some(d)) = (num.as_constant(), den.as_constant()) {
            return ParamScalar(Repr::Rational(n / d));
        }
        let (num, den) = if den.is_constant() {
            (num, den)
        } else {
            let g = num.gcd(&den);
            (
                num.div_exact(&g).expect("gcd divides numerator"),
                den.div_exact(&g).expect("gcd divides denominator"),
            )
        };
        let lc = den.leading_coefficient().expect("nonzero").recip();
        let (num, den) = (num.scale(&lc), den.scale(&lc));
        if let Some(n) = num.as_constant() {
            if den.is_constant() {
                return ParamScalar(Repr::Rational(n));
            }
        }
        ParamScalar(Repr::Fraction { num, den })
    }

    pub fn numer(&self) -> MPoly {
        match &self.0 {
            Repr::Rational(r) => MPoly::constant(r.clone()),
            Repr::Fraction { num, .. } => num.clone(),
        }
    }

    pub fn denom(&self) -> MPoly {
        match &self.0 {
            Repr::Rational(_) => MPoly::one(),
            Repr::Fraction { den, .. } => den.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.0, Repr::Rational(r) if r.is_zero())
    }

    pub fn is_one(&self) -> bool {
        matches!(&self.0, Repr::Rational(r) if r.is_one())
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        match &self.0 {
            Repr::Rational(r) => Some(r),
            Repr::Fraction { .. } => None,
        }
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        match &self.0 {
            Repr::Rational(_) => BTreeSet::new(),
            Repr::Fraction { num, den } => {
                let mut s = num.symbols();
                s.extend(den.symbols());
                s
            }
        }
    }

    pub fn recip(&self) -> ParamScalar {
        match &self.0 {
            Repr::Rational(r) => {
                assert!(!r.is_zero(), "reciprocal of zero");
                ParamScalar(Repr::Rational(r.recip()))
            }
            Repr::Fraction { num, den } => ParamScalar::from_fraction(den.clone(), num.clone()),
        }
    }

    pub fn pow(&self, e: u32) -> ParamScalar {
        let mut acc = ParamScalar::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Value at a full assignment; `None` on unassigned symbols or a vanishing denominator.
    pub fn eval(&self, at: &Assignment) -> Option<Rational> {
        match &self.0 {
            Repr::Rational(r) => Some(r.clone()),
            Repr::Fraction { num, den } => {
                let d = den.eval(at)?;
                if d.is_zero() {
                    return None;
                }
                Some(num.eval(at)? / d)
            }
        }
    }

    /// Substitutes assigned symbols. Panics if the denominator vanishes.
    pub fn substitute(&self, at: &Assignment) -> ParamScalar {
        match &self.0 {
            Repr::Rational(_) => self.clone(),
            Repr::Fraction { num, den } => ParamScalar::from_fraction(num.substitute(at), den.substitute(at)),
        }
    }

    /// Decomposes `self = c₀ + Σ vᵢ·cᵢ` with every `cᵢ` free of `vars`.
    pub fn affine_in(&self, vars: &[Symbol]) -> Option<(ParamScalar, Vec<ParamScalar>)> {
        match &self.0 {
            Repr::Rational(_) => Some((self.clone(), vec![ParamScalar::zero(); vars.len()])),
            Repr::Fraction { num, den } => {
                if den.symbols().iter().any(|s| vars.contains(s)) {
                    return None;
                }
                let (c0, lin) = num.affine_parts(vars)?;
                Some((
                    ParamScalar::from_fraction(c0, den.clone()),
                    lin.into_iter()
                        .map(|c| ParamScalar::from_fraction(c, den.clone()))
                        .collect(),
                ))
            }
        }
    }

    /// Approximate value for plain rationals.
    pub fn to_f64(&self) -> Option<f64> {
        self.as_rational().map(rational_to_f64)
    }
}

impl fmt::Display for ParamScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Rational(r) => fmt_rational(r, f),
            Repr::Fraction { num, den } => {
                if den.as_constant().is_some_and(|c| c.is_one()) {
                    write!(f, "{num}")
                } else {
                    write!(f, "({num})/({den})")
                }
            }
        }
    }
}

impl fmt::Debug for ParamScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl From<Rational> for ParamScalar {
    fn from(r: Rational) -> Self {
        ParamScalar::from_rational(r)
    }
}

impl From<i64> for ParamScalar {
    fn from(n: i64) -> Self {
        ParamScalar::from_int(n)
    }
}

impl Add for &ParamScalar {
    type Output = ParamScalar;
    fn add(self, rhs: &ParamScalar) -> ParamScalar {
        match (&self.0, &rhs.0) {
            (Repr::Rational(a), Repr::Rational(b)) => ParamScalar(Repr::Rational(a + b)),
            _ => {
                let (an, ad, bn, bd) = (self.numer(), self.denom(), rhs.numer(), rhs.denom());
                if ad == bd {
                    ParamScalar::from_fraction(&an + &bn, ad)
                } else {
                    ParamScalar::from_fraction(&(&an * &bd) + &(&bn * &ad), &ad * &bd)
                }
            }
        }
    }
}

impl Sub for &ParamScalar {
    type Output = ParamScalar;
    fn sub(self, rhs: &ParamScalar) -> ParamScalar {
        self + &(-rhs)
    }
}

impl Mul for &ParamScalar {
    type Output = ParamScalar;
    fn mul(self, rhs: &ParamScalar) -> ParamScalar {
        match (&self.0, &rhs.0) {
            (Repr::Rational(a), Repr::Rational(b)) => ParamScalar(Repr::Rational(a * b)),
            (Repr::Rational(a), Repr::Fraction { num, den }) | (Repr::Fraction { num, den }, Repr::Rational(a)) => {
                if a.is_zero() {
                    ParamScalar::zero()
                } else {
                    ParamScalar(Repr::Fraction {
                        num: num.scale(a),
                        den: den.clone(),
                    })
                }
            }
            _ => ParamScalar::from_fraction(&self.numer() * &rhs.numer(), &self.denom() * &rhs.denom()),
        }
    }
}

impl Div for &ParamScalar {
    type Output = ParamScalar;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: &ParamScalar) -> ParamScalar {
        self * &rhs.recip()
    }
}

impl Neg for &ParamScalar {
    type Output = ParamScalar;
    fn neg(self) -> ParamScalar {
        match &self.0 {
            Repr::Rational(r) => ParamScalar(Repr::Rational(-r)),
            Repr::Fraction { num, den } => ParamScalar(Repr::Fraction {
                num: -num,
                den: den.clone(),
            }),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for ParamScalar {
            type Output = ParamScalar;
            fn $m(self, rhs: ParamScalar) -> ParamScalar {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);
forward_owned!(Div, div);

impl Neg for ParamScalar {
    type Output = ParamScalar;
    fn neg(self) -> ParamScalar {
        -&self
    }
}
