//! Coefficient forms, the matrix 𝔐, randomized rank, and the construction of
//! linear estimator systems `𝔄·θ = 𝔅`.

use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::{compile, properness_shift};
use crate::diffop::{DiffOp, OpExpr};
use crate::error::{Error, Result};
use crate::linalg;
use crate::module::{module_reduce, AnnihilatorModule, ModuleElement};
use crate::poly::SPoly;
use crate::ratfunc::RatFunc;
use crate::scalar::{Assignment, ParamScalar, Rational, Symbol};
use crate::signal::{MinimalEquation, OperationalRelation};

/// Default master seed for randomized checks.
pub const DEFAULT_SEED: u64 = 0x5eed_0fa1_9eb5;

/// `a·s^μ·x̂^(ν)`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalTerm {
    pub coeff: ParamScalar,
    pub s_power: usize,
    pub order: usize,
}

/// `b·s^κ`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForcingTerm {
    pub coeff: ParamScalar,
    pub s_power: usize,
}

/// `Σ a_{μν} s^μ x̂^(ν) = Σ b_κ s^κ`, expanded to monomials.
///
/// Columns are ordered by derivative order ascending, then `s`-power descending,
/// followed by forcing terms by descending power.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientForm {
    signal: Vec<SignalTerm>,
    forcing: Vec<ForcingTerm>,
}

impl CoefficientForm {
    pub fn new(signal: Vec<SignalTerm>, forcing: Vec<ForcingTerm>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &signal {
            if !seen.insert((t.order, t.s_power)) {
                return Err(Error::InvalidOde(format!(
                    "duplicate term s^{} x̂^({})",
                    t.s_power, t.order
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for t in &forcing {
            if !seen.insert(t.s_power) {
                return Err(Error::InvalidOde(format!("duplicate forcing term s^{}", t.s_power)));
            }
        }
        Ok(CoefficientForm { signal, forcing })
    }

    /// Expands `Σ q_i x̂^(i) = p` without renormalizing.
    pub fn from_polys(q: &[SPoly], p: &SPoly) -> Self {
        let mut signal = Vec::new();
        for (nu, qi) in q.iter().enumerate() {
            for (mu, c) in qi.coeffs().iter().enumerate().rev() {
                if !c.is_zero() {
                    signal.push(SignalTerm {
                        coeff: c.clone(),
                        s_power: mu,
                        order: nu,
                    });
                }
            }
        }
        let forcing = p
            .coeffs()
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| ForcingTerm {
                coeff: c.clone(),
                s_power: k,
            })
            .collect();
        CoefficientForm { signal, forcing }
    }

    pub fn from_minimal(me: &MinimalEquation) -> Self {
        CoefficientForm::from_polys(me.q(), me.p())
    }

    pub fn signal_terms(&self) -> &[SignalTerm] {
        &self.signal
    }

    pub fn forcing_terms(&self) -> &[ForcingTerm] {
        &self.forcing
    }

    /// `N`, with `N + 1` signal terms.
    pub fn n(&self) -> usize {
        self.signal.len().saturating_sub(1)
    }

    /// `M`, the number of forcing terms.
    pub fn m(&self) -> usize {
        self.forcing.len()
    }

    pub fn size(&self) -> usize {
        self.signal.len() + self.forcing.len()
    }

    pub fn max_order(&self) -> usize {
        self.signal.iter().map(|t| t.order).max().unwrap_or(0)
    }

    pub fn is_degenerate(&self) -> bool {
        self.signal.iter().all(|t| t.coeff.is_zero())
    }

    /// Column functions `s^μ x̂^(ν)` and `s^κ·1` in column order.
    pub fn columns(&self) -> Vec<OpExpr> {
        self.signal
            .iter()
            .map(|t| OpExpr::signal_term(RatFunc::s_pow(t.s_power as i64), t.order))
            .chain(
                self.forcing
                    .iter()
                    .map(|f| OpExpr::unit_term(RatFunc::s_pow(f.s_power as i64))),
            )
            .collect()
    }

    /// `(a…, -b…)`, the null vector that the relation supplies to 𝔐.
    pub fn coefficient_vector(&self) -> Vec<ParamScalar> {
        self.signal
            .iter()
            .map(|t| t.coeff.clone())
            .chain(self.forcing.iter().map(|f| -&f.coeff))
            .collect()
    }

    /// Column whose coefficient is certified nonzero, preferring plain numbers.
    pub fn normalization_index(&self) -> Option<usize> {
        let v = self.coefficient_vector();
        v.iter()
            .position(|c| c.as_rational().is_some_and(|r| !r.is_zero()))
            .or_else(|| v.iter().position(|c| !c.is_zero()))
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.coefficient_vector()
            .iter()
            .flat_map(ParamScalar::symbols)
            .collect()
    }
}

/// Square matrix whose row `ξ` holds the `ξ`-th `s`-derivatives of the columns.
#[derive(Clone, Debug)]
pub struct MMatrix {
    rows: Vec<Vec<ModuleElement>>,
    module: Arc<AnnihilatorModule>,
}

/// Builds 𝔐 for a coefficient form over the module of the signal.
pub fn build_m(cf: &CoefficientForm, module: &Arc<AnnihilatorModule>) -> Result<MMatrix> {
    if cf.size() == 0 {
        return Err(Error::DegenerateCoefficientForm);
    }
    if cf.max_order() < module.order() {
        return Err(Error::IncompatibleModule {
            module: module.order(),
            reason: format!("coefficient form only reaches derivative order {}", cf.max_order()),
        });
    }
    let cols = cf.columns();
    let mut rows = Vec::with_capacity(cols.len());
    let mut current = cols;
    for xi in 0..cf.size() {
        if xi > 0 {
            current = current.iter().map(|e| e.apply_op(&DiffOp::d())).collect();
        }
        rows.push(current.iter().map(|e| module_reduce(e, module)).collect());
    }
    Ok(MMatrix {
        rows,
        module: Arc::clone(module),
    })
}

/// Rank verdict of a randomized specialization test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    /// Rank observed at each specialization, in order.
    pub ranks: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Always true: ranks come from random specializations.
    pub probabilistic: bool,
}

const MAX_POLE_RETRIES: usize = 32;
const SAMPLE_BOUND: i64 = 1_000_000;

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    let n = rng.random_range(-SAMPLE_BOUND..=SAMPLE_BOUND);
    let d = rng.random_range(1..=SAMPLE_BOUND);
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Random point for the symbols, `s`, and the module basis values.
pub(crate) struct Specialization {
    pub at: Assignment,
    pub s: Rational,
    pub basis: Vec<Rational>,
}

impl Specialization {
    pub(crate) fn draw(rng: &mut ChaCha8Rng, symbols: &BTreeSet<Symbol>, fixed: &Assignment, basis: usize) -> Self {
        let mut at = fixed.clone();
        for s in symbols {
            if !at.contains_key(s) {
                at.insert(s.clone(), random_rational(rng));
            }
        }
        Specialization {
            at,
            s: random_rational(rng),
            basis: (0..basis).map(|_| random_rational(rng)).collect(),
        }
    }
}

impl MMatrix {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<ModuleElement>] {
        &self.rows
    }

    pub fn entry(&self, row: usize, col: usize) -> &ModuleElement {
        &self.rows[row][col]
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.rows
            .iter()
            .flatten()
            .flat_map(|e| e.coords().iter().flat_map(RatFunc::symbols).collect::<Vec<_>>())
            .collect()
    }

    /// Numeric matrix at a specialization; `None` at a pole.
    pub(crate) fn specialize(&self, sp: &Specialization) -> Option<Vec<Vec<Rational>>> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|e| e.eval(&sp.at, &sp.s, &sp.basis)).collect())
            .collect()
    }

    fn specialized_with_retries(&self, seed: u64, fixed: &Assignment) -> Result<Vec<Vec<Rational>>> {
        let symbols = self.symbols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_POLE_RETRIES {
            let sp = Specialization::draw(&mut rng, &symbols, fixed, self.module.order());
            if let Some(m) = self.specialize(&sp) {
                return Ok(m);
            }
        }
        Err(Error::RankFailure {
            attempts: MAX_POLE_RETRIES,
        })
    }

    /// Rank over the function field by majority over random specializations.
    ///
    /// Three specializations are drawn; if they disagree three more are added.
    /// Ties go to the larger rank, since specialization can only lower it.
    pub fn rank(&self, seed: u64) -> Result<RankReport> {
        if self.rows.is_empty() {
            return Ok(RankReport {
                rank: 0,
                ranks: vec![],
                seeds: vec![],
                probabilistic: true,
            });
        }
        let mut seeds = Vec::new();
        let mut ranks = Vec::new();
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut round = |count: usize, seeds: &mut Vec<u64>, ranks: &mut Vec<usize>| -> Result<()> {
            for _ in 0..count {
                let s: u64 = master.random();
                let m = self.specialized_with_retries(s, &Assignment::new())?;
                seeds.push(s);
                ranks.push(linalg::rank(&m));
            }
            Ok(())
        };
        round(3, &mut seeds, &mut ranks)?;
        if ranks.iter().any(|&r| r != ranks[0]) {
            round(3, &mut seeds, &mut ranks)?;
        }
        let mut best = (0usize, 0usize);
        for &r in &ranks {
            let count = ranks.iter().filter(|&&x| x == r).count();
            if (count, r) > best {
                best = (count, r);
            }
        }
        Ok(RankReport {
            rank: best.1,
            ranks,
            seeds,
            probabilistic: true,
        })
    }

    /// Exact matrix over `k(s)`; only available when the module has order zero.
    pub fn as_ratfunc_matrix(&self) -> Option<Vec<Vec<RatFunc>>> {
        if self.module.order() != 0 {
            return None;
        }
        Some(
            self.rows
                .iter()
                .map(|row| row.iter().map(|e| e.coords()[0].clone()).collect())
                .collect(),
        )
    }

    /// `𝔐·v`, computed exactly in the module.
    pub fn apply(&self, v: &[ParamScalar]) -> Vec<ModuleElement> {
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(v)
                    .fold(ModuleElement::zero(&self.module), |acc, (e, c)| {
                        acc.add(&e.scale(&RatFunc::constant(c.clone())))
                    })
            })
            .collect()
    }

    /// Null vector of one specialization, scaled so entry `idx` is one.
    ///
    /// Parameter symbols are fixed by `params` when given; `s` and the module
    /// basis are drawn from `seed`.
    pub fn recover_coefficients(&self, params: &Assignment, idx: usize, seed: u64) -> Result<Vec<Rational>> {
        let m = self.specialized_with_retries(seed, params)?;
        let ns = linalg::null_space(&m);
        if ns.len() != 1 {
            return Err(Error::NotIdentifiable(format!("kernel has dimension {}", ns.len())));
        }
        linalg::normalize_at(&ns[0], idx)
            .ok_or_else(|| Error::NotIdentifiable(format!("normalization column {idx} vanishes in the kernel")))
    }
}

/// Exact rank of a matrix of rational functions by Gaussian elimination.
#[allow(clippy::needless_range_loop)]
pub fn ratfunc_rank(m: &[Vec<RatFunc>]) -> usize {
    let mut a = m.to_vec();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for i in r + 1..rows {
            if a[i][c].is_zero() {
                continue;
            }
            let f = &a[i][c] * &inv;
            for j in c..cols {
                let delta = &f * &a[r][j];
                a[i][j] = &a[i][j] - &delta;
            }
        }
        r += 1;
    }
    r
}

/// Exact determinant of a square matrix of rational functions.
#[allow(clippy::needless_range_loop)]
pub fn ratfunc_det(m: &[Vec<RatFunc>]) -> RatFunc {
    let n = m.len();
    if ratfunc_rank(m) < n {
        return RatFunc::zero();
    }
    let mut a = m.to_vec();
    let mut det = RatFunc::one();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero()).expect("full rank");
        if p != c {
            a.swap(p, c);
            det = -&det;
        }
        det = &det * &a[c][c];
        let inv = a[c][c].recip();
        for i in c + 1..n {
            if a[i][c].is_zero() {
                continue;
            }
            let f = &a[i][c] * &inv;
            for j in c..n {
                let delta = &f * &a[c][j];
                a[i][j] = &a[i][j] - &delta;
            }
        }
    }
    det
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifiabilityReport {
    pub identifiable: bool,
    pub rank: usize,
    /// `N`, with `N + 1` signal terms.
    pub n: usize,
    pub m: usize,
    pub normalization_index: Option<usize>,
    pub ranks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub probabilistic: bool,
}

/// Projective identifiability of the coefficients: `rank 𝔐 = N + M`.
pub fn is_projectively_identifiable(
    cf: &CoefficientForm,
    module: &Arc<AnnihilatorModule>,
    seed: u64,
) -> Result<IdentifiabilityReport> {
    if cf.is_degenerate() {
        return Err(Error::DegenerateCoefficientForm);
    }
    let m = build_m(cf, module)?;
    let rank = m.rank(seed)?;
    let target = cf.n() + cf.m();
    Ok(IdentifiabilityReport {
        identifiable: rank.rank == target,
        rank: rank.rank,
        n: cf.n(),
        m: cf.m(),
        normalization_index: cf.normalization_index(),
        ranks: rank.ranks,
        seeds: rank.seeds,
        probabilistic: true,
    })
}

/// Operators that a row of the system applies to the perturbation `w`:
/// the row's `𝔠` entry is `Σ_q θ_q·a[q](ŵ) - b(ŵ)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbationRow {
    pub a: Vec<DiffOp>,
    pub b: DiffOp,
}

impl PerturbationRow {
    pub fn left_mul(&self, r: &RatFunc) -> PerturbationRow {
        PerturbationRow {
            a: self.a.iter().map(|op| op.left_mul(r)).collect(),
            b: self.b.left_mul(r),
        }
    }
}

/// `𝔄·θ = 𝔅` over expressions in `(1, x̂)`, with the matching perturbation template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearSystemSpec {
    pub params: Vec<Symbol>,
    pub a: Vec<Vec<OpExpr>>,
    pub b: Vec<OpExpr>,
    pub c_template: Vec<PerturbationRow>,
    /// Exponent `m` of the `s^{-m}` multiplier applied to each row.
    pub multipliers: Vec<i64>,
    /// `det 𝔄` was found nonzero at a random specialization.
    pub certified: bool,
}

impl LinearSystemSpec {
    /// Wraps explicit rows; the perturbation template is read off the signal parts.
    pub fn from_rows(params: Vec<Symbol>, a: Vec<Vec<OpExpr>>, b: Vec<OpExpr>) -> Result<Self> {
        let n = params.len();
        if n == 0 {
            return Err(Error::EmptyParameterSet);
        }
        if a.len() != n || b.len() != n || a.iter().any(|r| r.len() != n) {
            return Err(Error::ArityMismatch {
                expected: n,
                got: a.len(),
            });
        }
        let c_template = a
            .iter()
            .zip(&b)
            .map(|(row, bb)| PerturbationRow {
                a: row.iter().map(|e| e.signal.clone()).collect(),
                b: bb.signal.clone(),
            })
            .collect();
        Ok(LinearSystemSpec {
            params,
            a,
            b,
            c_template,
            multipliers: vec![0; n],
            certified: false,
        })
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// Residual `𝔄·θ - 𝔅` when `x̂` is a known rational function.
    pub fn residual(&self, xhat: &RatFunc, theta: &[ParamScalar]) -> Vec<RatFunc> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, b)| {
                row.iter()
                    .zip(theta)
                    .fold(-&b.eval_on(xhat), |acc, (e, th)| &acc + &e.eval_on(xhat).scale(th))
            })
            .collect()
    }

    /// Certifies `det A(t) ≢ 0` for the compiled system on generic signals.
    ///
    /// Rows built from one relation by `s^{-m}` multipliers are proportional
    /// over the operational field, so the operational determinant vanishes
    /// identically for `ϱ > 1`. What the estimator divides by is the pointwise
    /// determinant of the time-domain matrix on the measured signal. It is
    /// tested here on a truncated Taylor series `Σ signal[n]·t^n` of a
    /// solution: the low-order coefficients of `det 𝔄(t)` are exact, and the
    /// system is certified when one of them is nonzero.
    pub fn certify(&mut self, signal: &[Rational]) -> Result<bool> {
        let plan = compile(self)?;
        // truncation perturbs measured atoms from order len+1 on
        let precision = signal.len() + 1;
        let a: Vec<Vec<Vec<Rational>>> = plan
            .a
            .iter()
            .map(|row| {
                row.iter()
                    .map(|f| {
                        let mut c = f.polynomial_response(signal);
                        c.resize(precision, Rational::zero());
                        c
                    })
                    .collect()
            })
            .collect();
        self.certified = series_det_nonzero(a, precision);
        Ok(self.certified)
    }
}

fn valuation(x: &[Rational]) -> Option<usize> {
    x.iter().position(|c| !c.is_zero())
}

/// Whether the determinant of a matrix of power series, known modulo
/// `t^precision`, is nonzero modulo `t^precision`.
///
/// Elimination with the pivot of least valuation over the whole remaining
/// block: quotients lose `v` orders but are multiplied back by entries of
/// valuation at least `v`, so the working precision never drops.
#[allow(clippy::needless_range_loop)]
fn series_det_nonzero(mut a: Vec<Vec<Vec<Rational>>>, precision: usize) -> bool {
    let n = a.len();
    let mut total = 0;
    for k in 0..n {
        let mut best: Option<(usize, usize, usize)> = None;
        for (i, row) in a.iter().enumerate().skip(k) {
            for (j, x) in row.iter().enumerate().skip(k) {
                if let Some(v) = valuation(x) {
                    if best.is_none_or(|b| v < b.0) {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        let Some((v, pi, pj)) = best else {
            return false;
        };
        total += v;
        if total >= precision {
            return false;
        }
        a.swap(k, pi);
        for row in a.iter_mut() {
            row.swap(k, pj);
        }
        // pivot with t^v divided out, inverted modulo t^(precision - v)
        let len = precision - v;
        let p = a[k][k][v..].to_vec();
        let mut inv = vec![Rational::zero(); len];
        inv[0] = p[0].recip();
        for m in 1..len {
            let mut acc = Rational::zero();
            for i in 1..=m {
                if !p[i].is_zero() {
                    acc += &p[i] * &inv[m - i];
                }
            }
            inv[m] = -acc * &inv[0];
        }
        for i in k + 1..n {
            if valuation(&a[i][k]).is_none() {
                continue;
            }
            // f = a[i][k] / a[k][k], a series modulo t^len
            let mut f = vec![Rational::zero(); len];
            {
                let num = &a[i][k][v..];
                for (m, fm) in f.iter_mut().enumerate() {
                    for l in 0..=m {
                        if !num[l].is_zero() && !inv[m - l].is_zero() {
                            *fm += &num[l] * &inv[m - l];
                        }
                    }
                }
            }
            for j in k..n {
                let mut upd = vec![Rational::zero(); precision];
                for (l, fl) in f.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
                    for (m, x) in a[k][j].iter().enumerate().take(precision - l) {
                        if !x.is_zero() {
                            upd[l + m] += fl * x;
                        }
                    }
                }
                for (x, u) in a[i][j].iter_mut().zip(upd) {
                    *x -= u;
                }
            }
        }
    }
    true
}

/// Draws for series certification, where coefficient growth is the cost.
fn small_rational(rng: &mut ChaCha8Rng) -> Rational {
    let n = rng.random_range(-1000i64..=1000);
    let d = rng.random_range(1i64..=1000);
    Rational::new(BigInt::from(n), BigInt::from(d))
}

const SERIES_TERMS: usize = 24;

/// Taylor coefficients `x(t) = Σ a_n t^n`, `n < len`, of a solution of the
/// numeric relation `lhs(x̂) = rhs`.
///
/// `x̂ = Σ c_n s^{-n-1}` is matched power by power from `s^∞` down; where the
/// leading factor of a power vanishes the coefficient is free and drawn from
/// `rng`. `None` when `lhs` has non-polynomial or symbolic coefficients, or the
/// relation has no power-series solution.
pub fn series_solution(lhs: &DiffOp, rhs: &SPoly, len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Rational>> {
    // r[j][i]: coefficient of s^i D^j
    let mut r: Vec<Vec<Rational>> = Vec::new();
    for (_, c) in lhs.iter() {
        if !c.denom().is_constant() {
            return None;
        }
        let den = c.denom().coeff(0).as_rational()?.clone();
        let row = c
            .numer()
            .coeffs()
            .iter()
            .map(|x| x.as_rational().map(|v| v / &den))
            .collect::<Option<Vec<_>>>()?;
        r.push(row);
    }
    let rhs: Vec<Rational> = rhs
        .coeffs()
        .iter()
        .map(|c| c.as_rational().cloned())
        .collect::<Option<_>>()?;
    let shifts = r.iter().enumerate().flat_map(|(j, row)| {
        row.iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(move |(i, _)| i as i64 - j as i64)
    });
    let h = shifts.max()?;
    let rising = |n: usize, j: usize| -> Rational {
        (1..=j).fold(Rational::from_integer(1.into()), |acc, k| {
            acc * Rational::from_integer(BigInt::from(n + k))
        })
    };
    let mut c: Vec<Rational> = Vec::with_capacity(len);
    for n in 0..len {
        let e = h - 1 - n as i64;
        let target = if e >= 0 {
            rhs.get(e as usize).cloned().unwrap_or_else(Rational::zero)
        } else {
            Rational::zero()
        };
        let mut lead = Rational::zero();
        let mut rest = Rational::zero();
        for (j, row) in r.iter().enumerate() {
            let sign = if j % 2 == 0 {
                Rational::from_integer(1.into())
            } else {
                Rational::from_integer((-1).into())
            };
            for (i, v) in row.iter().enumerate() {
                if v.is_zero() {
                    continue;
                }
                let back = h - (i as i64 - j as i64);
                if back > n as i64 {
                    continue;
                }
                let m = n - back as usize;
                let f = v * &sign * rising(m, j);
                if back == 0 {
                    lead += f;
                } else {
                    rest += f * &c[m];
                }
            }
        }
        if lead.is_zero() {
            if rest != target {
                return None;
            }
            c.push(small_rational(rng));
        } else {
            c.push((target - rest) / lead);
        }
    }
    // x(t) = Σ c_n t^n / n!
    let mut fact = Rational::from_integer(1.into());
    Some(
        c.into_iter()
            .enumerate()
            .map(|(n, cn)| {
                if n > 0 {
                    fact *= Rational::from_integer(BigInt::from(n));
                }
                cn / &fact
            })
            .collect(),
    )
}

fn split_ratfunc(r: &RatFunc, theta: &[Symbol]) -> Result<(RatFunc, Vec<RatFunc>)> {
    if r.denom().symbols().iter().any(|s| theta.contains(s)) {
        return Err(Error::NotAffine);
    }
    let mut c0 = Vec::new();
    let mut ci = vec![Vec::new(); theta.len()];
    for c in r.numer().coeffs() {
        let (a0, lin) = c.affine_in(theta).ok_or(Error::NotAffine)?;
        c0.push(a0);
        for (v, l) in ci.iter_mut().zip(lin) {
            v.push(l);
        }
    }
    let den = r.denom().clone();
    Ok((
        RatFunc::new(SPoly::new(c0), den.clone()),
        ci.into_iter()
            .map(|v| RatFunc::new(SPoly::new(v), den.clone()))
            .collect(),
    ))
}

/// `expr = P_0 + Σ θ_i·P_i` with every `P` free of `θ`.
pub fn affine_split(expr: &OpExpr, theta: &[Symbol]) -> Result<(OpExpr, Vec<OpExpr>)> {
    let n = theta.len();
    let mut p0_sig = Vec::new();
    let mut pi_sig = vec![Vec::new(); n];
    for r in expr.signal.terms() {
        let (a, b) = split_ratfunc(r, theta)?;
        p0_sig.push(a);
        for (v, x) in pi_sig.iter_mut().zip(b) {
            v.push(x);
        }
    }
    let (u0, ui) = split_ratfunc(&expr.unit, theta)?;
    let p0 = OpExpr::new(DiffOp::new(p0_sig), u0);
    let pi = pi_sig
        .into_iter()
        .zip(ui)
        .map(|(sig, u)| OpExpr::new(DiffOp::new(sig), u))
        .collect();
    Ok((p0, pi))
}

/// Turns one operational relation into a `ϱ × ϱ` system for `theta`.
///
/// `known` fixes the remaining symbols. Symbols of the forcing polynomial that
/// are not estimated (typically initial conditions) are eliminated by
/// homogenization. The relation, written as `I·1 - lhs(x̂) = Σθ_i P_i + P_0 = 0`,
/// is multiplied by `s^{-m}` for `m = K, …, K+ϱ-1`, where `K` makes the first
/// row strictly proper.
///
/// `det 𝔄` is certified on solutions of the relation at random parameter
/// values; see [`build_estimator_system_at`] to pin them.
pub fn build_estimator_system(
    rel: &OperationalRelation,
    theta: &[Symbol],
    known: &Assignment,
    seed: u64,
) -> Result<LinearSystemSpec> {
    build_estimator_system_at(rel, theta, known, &Assignment::new(), seed)
}

/// As [`build_estimator_system`], certifying on the signal whose symbols take
/// the values in `witness` (symbols missing there are drawn at random).
pub fn build_estimator_system_at(
    rel: &OperationalRelation,
    theta: &[Symbol],
    known: &Assignment,
    witness: &Assignment,
    seed: u64,
) -> Result<LinearSystemSpec> {
    if theta.is_empty() {
        return Err(Error::EmptyParameterSet);
    }
    let lhs = rel.lhs.substitute(known);
    let rhs = rel.rhs.substitute(known);
    let nuisance = rhs.symbols().iter().any(|s| !theta.contains(s));
    let full = OperationalRelation::new(lhs, rhs);
    let (lhs, rhs) = if nuisance {
        (full.homogenize(), SPoly::zero())
    } else {
        (full.lhs.clone(), full.rhs.clone())
    };
    let expr = OpExpr::new(-&lhs, RatFunc::from_poly(rhs));
    let symbols = expr.symbols();
    if let Some(s) = symbols.iter().find(|s| !theta.contains(s)) {
        return Err(Error::UnresolvedSymbol(s.clone()));
    }
    if let Some(s) = theta.iter().find(|s| !symbols.contains(s)) {
        return Err(Error::UnknownParameter(s.clone()));
    }
    let (p0, pi) = affine_split(&expr, theta)?;
    let rho = theta.len();
    let k = properness_shift(pi.iter().chain(std::iter::once(&p0)))?;
    let neg_p0 = -&p0;
    let mut a = Vec::with_capacity(rho);
    let mut b = Vec::with_capacity(rho);
    for i in 0..rho {
        let m = RatFunc::s_pow(-(k + i as i64));
        a.push(pi.iter().map(|e| e.left_mul(&m)).collect());
        b.push(neg_p0.left_mul(&m));
    }
    let mut sys = LinearSystemSpec::from_rows(theta.to_vec(), a, b)?;
    sys.multipliers = (0..rho).map(|i| k + i as i64).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let free: BTreeSet<Symbol> = full.lhs.symbols().into_iter().chain(full.rhs.symbols()).collect();
    for _ in 0..3 {
        let mut at = witness.clone();
        for s in &free {
            if !at.contains_key(s) {
                at.insert(s.clone(), small_rational(&mut rng));
            }
        }
        let signal = series_solution(
            &full.lhs.substitute(&at),
            &full.rhs.substitute(&at),
            SERIES_TERMS,
            &mut rng,
        )
        // relations outside the recurrence's reach: any polynomial signal
        .unwrap_or_else(|| (0..8).map(|_| small_rational(&mut rng)).collect());
        if sys.certify(&signal)? {
            return Ok(sys);
        }
    }
    Err(Error::NotIdentifiable(
        "det 𝔄 vanishes identically on the signal class".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::minimal_equation;

    #[test]
    fn coefficient_form_counts() {
        let w = ParamScalar::symbol("w");
        let q0 = SPoly::new(vec![w.pow(2), ParamScalar::zero(), ParamScalar::one()]);
        let cf = CoefficientForm::from_polys(&[q0], &SPoly::constant(w.clone()));
        assert_eq!(cf.signal_terms().len(), 2);
        assert_eq!((cf.signal_terms()[0].s_power, cf.signal_terms()[0].order), (2, 0));
        assert_eq!(cf.signal_terms()[1].coeff, w.pow(2));
        assert_eq!(cf.m(), 1);

        let me = minimal_equation(&RatFunc::from_ints(&[2, 3], &[5, 1, 1])).unwrap();
        let cf = CoefficientForm::from_minimal(&me);
        assert_eq!((cf.n() + 1, cf.m()), (3, 2));
    }

    #[test]
    fn first_row_is_underived() {
        let me = minimal_equation(&RatFunc::from_ints(&[2, 3], &[5, 1, 1])).unwrap();
        let cf = CoefficientForm::from_minimal(&me);
        let m = build_m(&cf, &me.module()).unwrap();
        let xhat = RatFunc::from_ints(&[2, 3], &[5, 1, 1]);
        for (col, e) in cf.columns().iter().zip(&m.rows()[0]) {
            assert_eq!(e.coords()[0], col.eval_on(&xhat));
        }
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let module = minimal_equation(&RatFunc::s_pow(-1)).unwrap().module();
        let z = ModuleElement::zero(&module);
        let m = MMatrix {
            rows: vec![vec![z.clone(), z.clone()], vec![z.clone(), z]],
            module,
        };
        assert_eq!(m.rank(1).unwrap().rank, 0);
    }

    #[test]
    fn empty_parameter_set_rejected() {
        let rel = OperationalRelation::new(DiffOp::s(), SPoly::one());
        assert!(matches!(
            build_estimator_system(&rel, &[], &Assignment::new(), 0),
            Err(Error::EmptyParameterSet)
        ));
    }

    #[test]
    fn degenerate_form_rejected() {
        let cf = CoefficientForm::new(
            vec![SignalTerm {
                coeff: ParamScalar::zero(),
                s_power: 0,
                order: 0,
            }],
            vec![],
        )
        .unwrap();
        let module = minimal_equation(&RatFunc::s_pow(-1)).unwrap().module();
        assert!(matches!(
            is_projectively_identifiable(&cf, &module, 0),
            Err(Error::DegenerateCoefficientForm)
        ));
    }
}
