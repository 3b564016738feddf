//! Dense univariate polynomials in `s` over the parameter field.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::scalar::{Assignment, ParamScalar, Rational};

/// `coeffs[i]` is the coefficient of `s^i`; no trailing zeros.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct SPoly {
    coeffs: Vec<ParamScalar>,
}

impl SPoly {
    pub fn new(mut coeffs: Vec<ParamScalar>) -> Self {
        while coeffs.last().is_some_and(ParamScalar::is_zero) {
            coeffs.pop();
        }
        SPoly { coeffs }
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        SPoly::new(coeffs.iter().map(|&c| ParamScalar::from_int(c)).collect())
    }

    pub fn zero() -> Self {
        SPoly::default()
    }

    pub fn one() -> Self {
        SPoly::constant(ParamScalar::one())
    }

    pub fn constant(c: ParamScalar) -> Self {
        SPoly::new(vec![c])
    }

    /// `c·s^k`
    pub fn monomial(c: ParamScalar, k: usize) -> Self {
        let mut v = vec![ParamScalar::zero(); k + 1];
        v[k] = c;
        SPoly::new(v)
    }

    /// The indeterminate `s`.
    pub fn s() -> Self {
        SPoly::monomial(ParamScalar::one(), 1)
    }

    pub fn coeffs(&self) -> &[ParamScalar] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> ParamScalar {
        self.coeffs.get(i).cloned().unwrap_or_else(ParamScalar::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> ParamScalar {
        self.coeffs.last().cloned().unwrap_or_else(ParamScalar::zero)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    /// True when the polynomial is `c·s^k` for a single `k`.
    pub fn is_monomial(&self) -> bool {
        self.coeffs.iter().filter(|c| !c.is_zero()).count() == 1
    }

    /// Lowest power with a nonzero coefficient.
    pub fn valuation(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    pub fn scale(&self, c: &ParamScalar) -> SPoly {
        SPoly::new(self.coeffs.iter().map(|x| x * c).collect())
    }

    pub fn shift(&self, k: usize) -> SPoly {
        if self.is_zero() {
            return SPoly::zero();
        }
        let mut v = vec![ParamScalar::zero(); k];
        v.extend(self.coeffs.iter().cloned());
        SPoly { coeffs: v }
    }

    pub fn derivative(&self) -> SPoly {
        SPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * &ParamScalar::from_int(i as i64))
                .collect(),
        )
    }

    pub fn monic(&self) -> SPoly {
        if self.is_zero() {
            return SPoly::zero();
        }
        self.scale(&self.leading().recip())
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn div_rem(&self, d: &SPoly) -> (SPoly, SPoly) {
        let dd = d.degree().expect("division by zero polynomial");
        if let (Some((a, da)), Some((b, db))) = (self.integer_image(), d.integer_image()) {
            if a.len() < b.len() {
                return (SPoly::zero(), self.clone());
            }
            // lc^e·A = Q·B + R, so A/da = (Q·db/(da·lc^e))·(B/db) + R/(da·lc^e)
            let (q, r, e) = pseudo_div(a, &b);
            let scale = &da * num_traits::pow(b.last().expect("nonzero").clone(), e);
            let qs = Rational::new(db, scale.clone());
            let to_poly = |v: Vec<BigInt>, f: &Rational| {
                SPoly::new(
                    v.into_iter()
                        .map(|c| ParamScalar::from_rational(Rational::from_integer(c) * f))
                        .collect(),
                )
            };
            return (to_poly(q, &qs), to_poly(r, &Rational::new(BigInt::one(), scale)));
        }
        let inv = d.leading().recip();
        let mut r = self.coeffs.clone();
        let mut q = vec![ParamScalar::zero(); self.coeffs.len().saturating_sub(dd)];
        while r.len() > dd {
            let k = r.len() - 1 - dd;
            let c = r.last().expect("nonempty") * &inv;
            if !c.is_zero() {
                for (i, dc) in d.coeffs.iter().enumerate() {
                    r[k + i] = &r[k + i] - &(&c * dc);
                }
            }
            q[k] = c;
            r.pop();
            while r.last().is_some_and(ParamScalar::is_zero) {
                r.pop();
            }
        }
        (SPoly::new(q), SPoly::new(r))
    }

    /// Integer numerators over a common denominator, when every coefficient
    /// is a plain number.
    fn integer_image(&self) -> Option<(Vec<BigInt>, BigInt)> {
        let mut den = BigInt::one();
        for c in &self.coeffs {
            den = den.lcm(c.as_rational()?.denom());
        }
        let nums = self
            .coeffs
            .iter()
            .map(|c| {
                let q = c.as_rational().expect("checked");
                q.numer() * (&den / q.denom())
            })
            .collect();
        Some((nums, den))
    }

    /// Monic greatest common divisor (zero only if both are zero).
    pub fn gcd(&self, other: &SPoly) -> SPoly {
        if self.is_zero() || other.is_zero() {
            return if self.is_zero() { other.monic() } else { self.monic() };
        }
        if coprime_mod_p(self, other) {
            return SPoly::one();
        }
        if let (Some((a, _)), Some((b, _))) = (self.integer_image(), other.integer_image()) {
            return int_gcd(a, b);
        }
        let (mut a, mut b) = (self.clone(), other.clone());
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.monic();
        }
        a.monic()
    }

    pub fn eval(&self, at: &Assignment, s: &Rational) -> Option<Rational> {
        let mut acc = Rational::from_integer(0.into());
        for c in self.coeffs.iter().rev() {
            acc = acc * s + c.eval(at)?;
        }
        Some(acc)
    }

    pub fn substitute(&self, at: &Assignment) -> SPoly {
        SPoly::new(self.coeffs.iter().map(|c| c.substitute(at)).collect())
    }

    pub fn symbols(&self) -> std::collections::BTreeSet<crate::scalar::Symbol> {
        self.coeffs.iter().flat_map(|c| c.symbols()).collect()
    }
}

/// `lc(b)^e·a = q·b + r` over the integers.
fn pseudo_div(mut r: Vec<BigInt>, b: &[BigInt]) -> (Vec<BigInt>, Vec<BigInt>, usize) {
    let lc = b.last().expect("nonzero divisor");
    let mut q = vec![BigInt::zero(); (r.len() + 1).saturating_sub(b.len())];
    let mut e = 0;
    while r.len() >= b.len() {
        let c = r.pop().expect("nonempty");
        let k = r.len() + 1 - b.len();
        if !lc.is_one() {
            r.iter_mut().chain(q.iter_mut()).for_each(|x| *x *= lc);
        }
        q[k] += &c;
        for (i, bc) in b[..b.len() - 1].iter().enumerate() {
            r[k + i] -= &c * bc;
        }
        while r.last().is_some_and(Zero::is_zero) {
            r.pop();
        }
        e += 1;
    }
    (q, r, e)
}

fn primitive(mut v: Vec<BigInt>) -> Vec<BigInt> {
    use num_traits::Signed;
    let content = v.iter().fold(BigInt::zero(), |g, c| g.gcd(c));
    if !content.is_one() && !content.is_zero() {
        v.iter_mut().for_each(|c| *c /= &content);
    }
    if v.last().is_some_and(Signed::is_negative) {
        v.iter_mut().for_each(|c| *c = -&*c);
    }
    v
}

/// Monic gcd by the primitive remainder sequence.
fn int_gcd(a: Vec<BigInt>, b: Vec<BigInt>) -> SPoly {
    let (mut a, mut b) = (primitive(a), primitive(b));
    if a.len() < b.len() {
        std::mem::swap(&mut a, &mut b);
    }
    while !b.is_empty() {
        let (_, r, _) = pseudo_div(a, &b);
        a = b;
        b = primitive(r);
    }
    let lc = a.last().expect("nonzero").clone();
    SPoly::new(
        a.into_iter()
            .map(|c| ParamScalar::from_rational(Rational::new(c, lc.clone())))
            .collect(),
    )
}

const PRIME: u64 = 0xFFFF_FFFF_FFFF_FFC5;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(PRIME)) as u64
}

fn inv_mod(a: u64) -> u64 {
    let (mut base, mut e, mut acc) = (a, PRIME - 2, 1u64);
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        e >>= 1;
    }
    acc
}

fn reduce_mod(c: &ParamScalar) -> Option<u64> {
    use num_traits::{Signed, ToPrimitive};
    let q = c.as_rational()?;
    let p = num_bigint::BigInt::from(PRIME);
    let n = (q.numer() % &p + &p) % &p;
    let d = (q.denom().abs() % &p).to_u64()?;
    if d == 0 {
        return None;
    }
    Some(mul_mod(n.to_u64()?, inv_mod(d)))
}

fn image_mod(f: &SPoly) -> Option<Vec<u64>> {
    let v: Vec<u64> = f.coeffs.iter().map(reduce_mod).collect::<Option<_>>()?;
    // a leading coefficient divisible by the prime would make the image unreliable
    (*v.last()? != 0).then_some(v)
}

/// Sufficient test for coprimality over the rationals: the images modulo a
/// large prime are coprime. `false` means "unknown".
fn coprime_mod_p(a: &SPoly, b: &SPoly) -> bool {
    let (Some(mut x), Some(mut y)) = (image_mod(a), image_mod(b)) else {
        return false;
    };
    while !y.is_empty() {
        let inv = inv_mod(*y.last().expect("nonempty"));
        while x.len() >= y.len() {
            let c = mul_mod(*x.last().expect("nonempty"), inv);
            let k = x.len() - y.len();
            for (i, &yc) in y.iter().enumerate() {
                let t = mul_mod(c, yc);
                x[k + i] = if x[k + i] >= t {
                    x[k + i] - t
                } else {
                    x[k + i] + (PRIME - t)
                };
            }
            while x.last() == Some(&0) {
                x.pop();
            }
        }
        std::mem::swap(&mut x, &mut y);
    }
    x.len() == 1
}

impl Add for &SPoly {
    type Output = SPoly;
    fn add(self, rhs: &SPoly) -> SPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        SPoly::new((0..n).map(|i| &self.coeff(i) + &rhs.coeff(i)).collect())
    }
}

impl Sub for &SPoly {
    type Output = SPoly;
    fn sub(self, rhs: &SPoly) -> SPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        SPoly::new((0..n).map(|i| &self.coeff(i) - &rhs.coeff(i)).collect())
    }
}

impl Mul for &SPoly {
    type Output = SPoly;
    fn mul(self, rhs: &SPoly) -> SPoly {
        if self.is_zero() || rhs.is_zero() {
            return SPoly::zero();
        }
        if let (Some((a, da)), Some((b, db))) = (self.integer_image(), rhs.integer_image()) {
            let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                if x.is_zero() {
                    continue;
                }
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            let den = da * db;
            return SPoly::new(
                out.into_iter()
                    .map(|n| ParamScalar::from_rational(Rational::new(n, den.clone())))
                    .collect(),
            );
        }
        let mut out = vec![ParamScalar::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    out[i + j] = &out[i + j] + &(a * b);
                }
            }
        }
        SPoly::new(out)
    }
}

impl Neg for &SPoly {
    type Output = SPoly;
    fn neg(self) -> SPoly {
        SPoly::new(self.coeffs.iter().map(|c| -c).collect())
    }
}

impl fmt::Display for SPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            let cs = c.to_string();
            let needs_parens = c.as_rational().is_none() && (cs.contains(' ') || cs.contains('/'));
            match (i, c.is_one()) {
                (0, _) => write!(f, "{cs}")?,
                (_, true) => {}
                _ if needs_parens => write!(f, "({cs})*")?,
                _ => write!(f, "{cs}*")?,
            }
            match i {
                0 => {}
                1 => f.write_str("s")?,
                _ => write!(f, "s^{i}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for SPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}
