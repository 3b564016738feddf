//! Finite-dimensional representation of a signal and its `s`-derivatives.
//!
//! A minimal equation `Σ q_i x̂^(i) = p` of order `n` lets every expression
//! `Σ r_k x̂^(k) + r·1` be rewritten uniquely over the basis
//! `(1, x̂, x̂', …, x̂^(n-1))`.

use std::sync::Arc;

use crate::diffop::{DiffOp, OpExpr};
use crate::ratfunc::RatFunc;
use crate::scalar::{Assignment, Rational};

/// Reduction rule `x̂^(n) = rule[0]·1 + Σ_{i<n} rule[i+1]·x̂^(i)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AnnihilatorModule {
    order: usize,
    rule: Vec<RatFunc>,
}

impl AnnihilatorModule {
    /// Builds the module from `Σ_{i=0}^{n} q[i]·x̂^(i) = p`.
    ///
    /// Returns `None` when the top coefficient `q[n]` is zero.
    pub fn from_equation(q: &[RatFunc], p: &RatFunc) -> Option<Self> {
        let top = q.last()?;
        if top.is_zero() {
            return None;
        }
        let n = q.len() - 1;
        let inv = top.recip();
        let mut rule = Vec::with_capacity(n + 1);
        rule.push(p * &inv);
        for qi in &q[..n] {
            rule.push(-&(qi * &inv));
        }
        Some(AnnihilatorModule { order: n, rule })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Dimension of the representation space, `n + 1`.
    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn rule(&self) -> &[RatFunc] {
        &self.rule
    }
}

/// Coordinates over `(1, x̂, …, x̂^(n-1))`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ModuleElement {
    coords: Vec<RatFunc>,
    module: Arc<AnnihilatorModule>,
}

impl ModuleElement {
    pub fn zero(module: &Arc<AnnihilatorModule>) -> Self {
        ModuleElement {
            coords: vec![RatFunc::zero(); module.dim()],
            module: Arc::clone(module),
        }
    }

    /// The constant `r·1`.
    pub fn unit(module: &Arc<AnnihilatorModule>, r: RatFunc) -> Self {
        let mut e = ModuleElement::zero(module);
        e.coords[0] = r;
        e
    }

    /// The signal `x̂` itself.
    pub fn signal(module: &Arc<AnnihilatorModule>) -> Self {
        if module.order == 0 {
            ModuleElement::unit(module, module.rule[0].clone())
        } else {
            let mut e = ModuleElement::zero(module);
            e.coords[1] = RatFunc::one();
            e
        }
    }

    pub fn coords(&self) -> &[RatFunc] {
        &self.coords
    }

    pub fn module(&self) -> &Arc<AnnihilatorModule> {
        &self.module
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(RatFunc::is_zero)
    }

    pub fn scale(&self, r: &RatFunc) -> ModuleElement {
        ModuleElement {
            coords: self.coords.iter().map(|c| r * c).collect(),
            module: Arc::clone(&self.module),
        }
    }

    pub fn add(&self, other: &ModuleElement) -> ModuleElement {
        ModuleElement {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
            module: Arc::clone(&self.module),
        }
    }

    /// `d/ds` of the represented function, reduced back onto the basis.
    pub fn derivative(&self) -> ModuleElement {
        let n = self.module.order;
        let mut out: Vec<RatFunc> = self.coords.iter().map(RatFunc::derivative).collect();
        for i in 0..n {
            let v = &self.coords[i + 1];
            if v.is_zero() {
                continue;
            }
            if i + 1 < n {
                out[i + 2] = &out[i + 2] + v;
            } else {
                for (o, r) in out.iter_mut().zip(&self.module.rule) {
                    *o = &*o + &(v * r);
                }
            }
        }
        ModuleElement {
            coords: out,
            module: Arc::clone(&self.module),
        }
    }

    /// Back to a formal expression `Σ c_{i+1} x̂^(i) + c_0·1`.
    pub fn to_expr(&self) -> OpExpr {
        OpExpr::new(DiffOp::new(self.coords[1..].to_vec()), self.coords[0].clone())
    }

    /// Value at a specialization of the parameters, of `s`, and of the basis
    /// functions `x̂^(i)` (`basis.len() == n`). `None` at a pole.
    pub fn eval(&self, at: &Assignment, s: &Rational, basis: &[Rational]) -> Option<Rational> {
        let mut acc = self.coords[0].eval(at, s)?;
        for (c, b) in self.coords[1..].iter().zip(basis) {
            if !c.is_zero() {
                acc += c.eval(at, s)? * b;
            }
        }
        Some(acc)
    }
}

/// Rewrites `expr` over the basis of `m`.
pub fn module_reduce(expr: &OpExpr, m: &Arc<AnnihilatorModule>) -> ModuleElement {
    let mut acc = ModuleElement::unit(m, expr.unit.clone());
    let mut deriv = ModuleElement::signal(m);
    for (k, r) in expr.signal.terms().iter().enumerate() {
        if k > 0 {
            deriv = deriv.derivative();
        }
        if !r.is_zero() {
            acc = acc.add(&deriv.scale(r));
        }
    }
    acc
}
