//! Sampled signals, quadrature, plan evaluation and symbol demodulation.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{AtomSource, EstimatorPlan, IntegralAtom, PerturbationImage, TimeFunctional};
use crate::error::{Error, Result};
use crate::linalg;

/// Uniform grid `{0, dt, …, (count-1)·dt}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dt: f64,
    count: usize,
}

impl Grid {
    pub fn new(dt: f64, count: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {dt}")));
        }
        if count < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {count}")));
        }
        Ok(Grid { dt, count })
    }

    /// `nbar` segments over `[0, width]`.
    pub fn window(width: f64, nbar: usize) -> Result<Self> {
        if nbar == 0 {
            return Err(Error::InvalidGrid("zero segments".into()));
        }
        Grid::new(width / nbar as f64, nbar + 1)
    }

    /// `{0, 1/N̄, …, 1}`
    pub fn unit(nbar: usize) -> Result<Self> {
        Grid::window(1.0, nbar)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn segments(&self) -> usize {
        self.count - 1
    }

    pub fn t_end(&self) -> f64 {
        self.segments() as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.time(i))
    }

    /// Index of the node at `t`; `t` must be a grid node up to rounding.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let r = t / self.dt;
        let i = r.round();
        if !t.is_finite() || i < 0.0 || (r - i).abs() > 1e-6 || i as usize >= self.count {
            return Err(Error::OffGrid { t });
        }
        Ok(i as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    grid: Grid,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count {
            return Err(Error::InvalidGrid(format!(
                "{} samples for a grid of {}",
                values.len(),
                grid.count
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite sample at index {i}")));
        }
        Ok(SampledSignal { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        SampledSignal::new(grid, grid.times().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        SampledSignal {
            grid,
            values: vec![0.0; grid.count],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale(&self, c: f64) -> SampledSignal {
        SampledSignal {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &SampledSignal) -> Result<SampledSignal> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("signals live on different grids".into()));
        }
        Ok(SampledSignal {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    /// Writes `t,value` rows with 17 significant digits, after `# ` comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            for line in c.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "value"])?;
        for (t, v) in self.grid.times().zip(&self.values) {
            out.write_record([format!("{t:.16e}"), format!("{v:.16e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format of [`SampledSignal::write_csv`]. The grid step is
    /// taken from the first two time stamps and every row is checked against it.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::InvalidGrid(format!("expected 2 columns, got {}", rec.len())));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidGrid(format!("bad number `{s}`: {e}")))
            };
            ts.push(parse(&rec[0])?);
            vs.push(parse(&rec[1])?);
        }
        if ts.len() < 2 {
            return Err(Error::InvalidGrid("fewer than 2 samples".into()));
        }
        if ts[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("grid must start at 0, got {}", ts[0])));
        }
        let grid = Grid::new(ts[1], ts.len())?;
        for (i, t) in ts.iter().enumerate() {
            if (t - grid.time(i)).abs() > 1e-9 * grid.dt().max(t.abs()) {
                return Err(Error::InvalidGrid(format!("non-uniform time stamp {t} at row {i}")));
            }
        }
        SampledSignal::new(grid, vs)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Composite Simpson; a trapezoid closes an odd segment count.
    #[default]
    Simpson,
    Trapezoid,
}

/// Weights of nodes `0..=segments` for integrating over `[0, segments·dt]`.
pub fn quadrature_weights(segments: usize, dt: f64, rule: QuadratureRule) -> Vec<f64> {
    let mut w = vec![0.0; segments + 1];
    if segments == 0 {
        return w;
    }
    let simpson_segments = match rule {
        QuadratureRule::Trapezoid => 0,
        QuadratureRule::Simpson if segments.is_multiple_of(2) => segments,
        QuadratureRule::Simpson => segments - 1,
    };
    let h3 = dt / 3.0;
    for pair in 0..simpson_segments / 2 {
        let i = 2 * pair;
        w[i] += h3;
        w[i + 1] += 4.0 * h3;
        w[i + 2] += h3;
    }
    for i in simpson_segments..segments {
        w[i] += 0.5 * dt;
        w[i + 1] += 0.5 * dt;
    }
    w
}

/// Quadrature weights already multiplied by the summed kernel of the signal atoms.
fn kernel_weights<'a>(
    atoms: impl Iterator<Item = &'a IntegralAtom>,
    segments: usize,
    dt: f64,
    rule: QuadratureRule,
) -> Option<Vec<f64>> {
    let atoms: Vec<(f64, i32, i32, f64)> = atoms
        .map(|a| {
            (
                a.coeff_f64(),
                a.k as i32 - 1,
                a.j as i32,
                crate::compiler::factorial(a.k - 1),
            )
        })
        .collect();
    if atoms.is_empty() {
        return None;
    }
    let t = segments as f64 * dt;
    let q = quadrature_weights(segments, dt, rule);
    Some(
        q.iter()
            .enumerate()
            .map(|(i, qi)| {
                let tau = i as f64 * dt;
                let k: f64 = atoms
                    .iter()
                    .map(|&(c, km1, j, fact)| c * (t - tau).powi(km1) / fact * (-tau).powi(j))
                    .sum();
                qi * k
            })
            .collect(),
    )
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// One atom integrated against `x` over `[0, t]`.
pub fn quadrature(atom: &IntegralAtom, x: &SampledSignal, t: f64) -> Result<f64> {
    quadrature_with(atom, x, t, QuadratureRule::Simpson)
}

pub fn quadrature_with(atom: &IntegralAtom, x: &SampledSignal, t: f64, rule: QuadratureRule) -> Result<f64> {
    let m = x.grid.index_of(t)?;
    if m == 0 {
        return Err(Error::EmptyWindow);
    }
    let t = x.grid.time(m);
    if atom.source == AtomSource::Unit {
        return Ok(atom.unit_value(t));
    }
    let w = kernel_weights(std::iter::once(atom), m, x.grid.dt, rule).expect("one atom");
    Ok(dot(&w, &x.values[..=m]))
}

/// Value of a functional on `x` with window `[0, m·dt]`, signal atoms of any source.
pub fn functional_value(f: &TimeFunctional, x: &[f64], m: usize, dt: f64, rule: QuadratureRule) -> f64 {
    let t = m as f64 * dt;
    let signal = kernel_weights(f.atoms().iter().filter(|a| a.source != AtomSource::Unit), m, dt, rule)
        .map_or(0.0, |w| dot(&w, &x[..=m]));
    signal + f.unit_value(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Relative divisor guard `ε_div`.
    pub eps_div: f64,
    pub rule: QuadratureRule,
    /// Windows besides `t` sampled to estimate `max |δ|`.
    pub checkpoints: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            eps_div: 1e-8,
            rule: QuadratureRule::Simpson,
            checkpoints: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardVerdict {
    Passed,
    DivisorTooSmall,
    Singular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub params: Vec<String>,
    /// Present only when the guard passed.
    pub estimates: Option<Vec<f64>>,
    pub divisor: f64,
    /// Largest `|δ|` seen over the guard checkpoints.
    pub divisor_max: f64,
    pub guard: GuardVerdict,
    pub window: f64,
}

impl EstimateResult {
    pub fn into_estimates(self) -> Result<Vec<f64>> {
        match (self.guard, self.estimates) {
            (GuardVerdict::Passed, Some(e)) => Ok(e),
            (GuardVerdict::Singular, _) => Err(Error::NumericalSingularity { t: self.window }),
            _ => Err(Error::DivisorTooSmall {
                t: self.window,
                divisor: self.divisor,
            }),
        }
    }
}

struct Entry {
    weights: Option<Vec<f64>>,
    unit: f64,
    functional: TimeFunctional,
}

impl Entry {
    fn new(f: &TimeFunctional, m: usize, dt: f64, rule: QuadratureRule) -> Result<Self> {
        if f.atoms().iter().any(|a| a.source == AtomSource::Perturbation) {
            return Err(Error::InvalidConfig("plans cannot contain perturbation atoms".into()));
        }
        Ok(Entry {
            weights: kernel_weights(
                f.atoms().iter().filter(|a| a.source == AtomSource::Measured),
                m,
                dt,
                rule,
            ),
            unit: f.unit_value(m as f64 * dt),
            functional: f.clone(),
        })
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.weights.as_ref().map_or(0.0, |w| dot(w, x)) + self.unit
    }
}

/// A plan bound to a grid and a window, with kernel weights precomputed.
///
/// Reusable across signals on the same grid (Monte-Carlo trials, symbol windows).
pub struct PlanEvaluator {
    plan: EstimatorPlan,
    grid: Grid,
    m: usize,
    opts: EvalOptions,
    a: Vec<Vec<Entry>>,
    b: Vec<Entry>,
    checkpoints: Vec<usize>,
    analytic_divisor_max: Option<f64>,
}

impl PlanEvaluator {
    pub fn new(plan: &EstimatorPlan, grid: &Grid, t: f64, opts: EvalOptions) -> Result<Self> {
        plan.validate()?;
        let m = grid.index_of(t)?;
        let dt = grid.dt();
        let a = plan
            .a
            .iter()
            .map(|row| {
                row.iter()
                    .map(|f| Entry::new(f, m, dt, opts.rule))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let b = plan
            .b
            .iter()
            .map(|f| Entry::new(f, m, dt, opts.rule))
            .collect::<Result<Vec<_>>>()?;
        let n = grid.segments();
        let mut checkpoints: Vec<usize> = (1..=opts.checkpoints)
            .map(|i| (i * n + opts.checkpoints / 2) / opts.checkpoints.max(1))
            .collect();
        checkpoints.push(m);
        checkpoints.sort_unstable();
        checkpoints.dedup();
        let mut ev = PlanEvaluator {
            plan: plan.clone(),
            grid: *grid,
            m,
            opts,
            a,
            b,
            checkpoints,
            analytic_divisor_max: None,
        };
        if plan.divisor_is_analytic() {
            let dmax = ev
                .checkpoints
                .iter()
                .map(|&c| ev.divisor_at(&[], c).abs())
                .fold(0.0, f64::max);
            ev.analytic_divisor_max = Some(dmax);
        }
        Ok(ev)
    }

    pub fn plan(&self) -> &EstimatorPlan {
        &self.plan
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn window(&self) -> f64 {
        self.grid.time(self.m)
    }

    fn a_matrix(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.a
            .iter()
            .map(|row| row.iter().map(|e| e.value(x)).collect())
            .collect()
    }

    fn divisor_at(&self, x: &[f64], c: usize) -> f64 {
        let dt = self.grid.dt();
        let a: Vec<Vec<f64>> = self
            .a
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| functional_value(&e.functional, x, c, dt, self.opts.rule))
                    .collect()
            })
            .collect();
        linalg::det_f64(&a)
    }

    fn divisor_max(&self, x: &[f64], own: f64) -> f64 {
        let rest = match self.analytic_divisor_max {
            Some(d) => d,
            None => self
                .checkpoints
                .iter()
                .filter(|&&c| c != self.m)
                .map(|&c| self.divisor_at(x, c).abs())
                .fold(0.0, f64::max),
        };
        rest.max(own.abs())
    }

    /// Evaluates on raw samples laid out on this evaluator's grid.
    pub fn evaluate_values(&self, x: &[f64]) -> Result<EstimateResult> {
        if x.len() != self.grid.count() {
            return Err(Error::InvalidGrid(format!(
                "{} samples for a grid of {}",
                x.len(),
                self.grid.count()
            )));
        }
        let a = self.a_matrix(x);
        let b: Vec<f64> = self.b.iter().map(|e| e.value(x)).collect();
        let solved = linalg::solve_f64(&a, &b);
        let divisor = solved.as_ref().map_or(0.0, |(_, d)| *d);
        let divisor_max = self.divisor_max(x, divisor);
        let mut result = EstimateResult {
            params: self.plan.params.clone(),
            estimates: None,
            divisor,
            divisor_max,
            guard: GuardVerdict::DivisorTooSmall,
            window: self.window(),
        };
        if divisor == 0.0 || divisor.abs() < self.opts.eps_div * divisor_max {
            return Ok(result);
        }
        match solved {
            Some((theta, _)) if theta.iter().all(|v| v.is_finite()) => {
                result.estimates = Some(theta);
                result.guard = GuardVerdict::Passed;
            }
            _ => result.guard = GuardVerdict::Singular,
        }
        Ok(result)
    }

    pub fn evaluate(&self, x: &SampledSignal) -> Result<EstimateResult> {
        if x.grid != self.grid {
            return Err(Error::InvalidGrid("signal grid differs from the evaluator grid".into()));
        }
        self.evaluate_values(&x.values)
    }

    /// First-order error functionals: `θ_e - θ ≈ Σ_i g_p[i]·w_i` for each parameter `p`.
    ///
    /// `clean` is the noiseless carrier and `theta` the true parameters.
    pub fn error_weights(
        &self,
        image: &PerturbationImage,
        clean: &SampledSignal,
        theta: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.plan.arity();
        if theta.len() != n || image.b.len() != n {
            return Err(Error::ArityMismatch {
                expected: n,
                got: theta.len(),
            });
        }
        let a0 = self.a_matrix(&clean.values);
        let inv = linalg::inverse_f64(&a0).ok_or(Error::NumericalSingularity { t: self.window() })?;
        let dt = self.grid.dt();
        let len = self.grid.count();
        let weights = |f: &TimeFunctional| {
            kernel_weights(f.atoms().iter(), self.m, dt, self.opts.rule).map(|mut w| {
                w.resize(len, 0.0);
                w
            })
        };
        // c_r = Σ_q θ_q·W(a_rq) - W(b_r)
        let mut rows = Vec::with_capacity(n);
        for r in 0..n {
            let mut c = vec![0.0; len];
            if let Some(w) = weights(&image.b[r]) {
                c.iter_mut().zip(w).for_each(|(ci, wi)| *ci -= wi);
            }
            for (q, th) in theta.iter().enumerate() {
                if let Some(w) = weights(&image.a[r][q]) {
                    c.iter_mut().zip(w).for_each(|(ci, wi)| *ci += th * wi);
                }
            }
            rows.push(c);
        }
        Ok((0..n)
            .map(|p| {
                (0..len)
                    .map(|i| -(0..n).map(|r| inv[p][r] * rows[r][i]).sum::<f64>())
                    .collect()
            })
            .collect())
    }
}

/// Evaluates a plan on `x` with window `[0, t]` and default options.
pub fn evaluate_plan(plan: &EstimatorPlan, x: &SampledSignal, t: f64) -> Result<EstimateResult> {
    evaluate_plan_with(plan, x, t, EvalOptions::default())
}

pub fn evaluate_plan_with(
    plan: &EstimatorPlan,
    x: &SampledSignal,
    t: f64,
    opts: EvalOptions,
) -> Result<EstimateResult> {
    PlanEvaluator::new(plan, x.grid(), t, opts)?.evaluate(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolOutcome {
    pub estimate: Option<Vec<f64>>,
    pub decision: Option<usize>,
    pub divisor: f64,
    /// The two nearest constellation points are (numerically) equidistant.
    pub low_confidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemodReport {
    pub symbols: Vec<SymbolOutcome>,
    pub decisions: usize,
    pub erasures: usize,
}

impl DemodReport {
    pub fn decided(&self) -> impl Iterator<Item = Option<usize>> + '_ {
        self.symbols.iter().map(|s| s.decision)
    }

    /// Symbols whose decision differs from `truth`; erasures are not errors.
    pub fn errors(&self, truth: &[usize]) -> usize {
        self.symbols
            .iter()
            .zip(truth)
            .filter(|(s, t)| s.decision.is_some_and(|d| d != **t))
            .count()
    }
}

/// Nearest point with ties resolved toward the smaller index, plus a
/// low-confidence flag when the runner-up is equally close.
pub fn nearest_point(p: Complex64, constellation: &[Complex64]) -> (usize, bool) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    let mut second_d = f64::INFINITY;
    for (i, c) in constellation.iter().enumerate() {
        let d = (p - c).norm();
        if d < best_d {
            second_d = best_d;
            best_d = d;
            best = i;
        } else if d < second_d {
            second_d = d;
        }
    }
    let spacing = min_spacing(constellation);
    let low = second_d.is_finite() && second_d - best_d <= 1e-9 * spacing;
    (best, low)
}

fn min_spacing(c: &[Complex64]) -> f64 {
    let mut m = f64::INFINITY;
    for (i, a) in c.iter().enumerate() {
        for b in &c[i + 1..] {
            m = m.min((a - b).norm());
        }
    }
    if m.is_finite() && m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Splits `stream` into consecutive symbol windows of `symbol_period` and
/// decides each one from the plan evaluated at the window end.
///
/// The first one or two parameters are read as the real and imaginary part
/// of the received point.
pub fn sliding_demodulate(
    plan: &EstimatorPlan,
    stream: &SampledSignal,
    symbol_period: f64,
    constellation: &[Complex64],
    opts: EvalOptions,
) -> Result<DemodReport> {
    if constellation.is_empty() {
        return Err(Error::InvalidStream("empty constellation".into()));
    }
    let dt = stream.grid.dt();
    let steps = symbol_period / dt;
    let per = steps.round();
    if per < 1.0 || (steps - per).abs() > 1e-6 {
        return Err(Error::InvalidStream(format!(
            "symbol period {symbol_period} is not a multiple of the step {dt}"
        )));
    }
    let len = per as usize + 1;
    if !stream.len().is_multiple_of(len) {
        return Err(Error::InvalidStream(format!(
            "{} samples is not a multiple of {len} samples per symbol",
            stream.len()
        )));
    }
    let local = Grid::new(dt, len)?;
    let ev = PlanEvaluator::new(plan, &local, local.t_end(), opts)?;
    let symbols: Vec<SymbolOutcome> = stream
        .values
        .par_chunks(len)
        .map(|block| {
            let r = ev.evaluate_values(block)?;
            let divisor = r.divisor;
            Ok(match r.estimates {
                Some(e) => {
                    let p = Complex64::new(e[0], e.get(1).copied().unwrap_or(0.0));
                    let (d, low) = nearest_point(p, constellation);
                    SymbolOutcome {
                        estimate: Some(e),
                        decision: Some(d),
                        divisor,
                        low_confidence: low,
                    }
                }
                None => SymbolOutcome {
                    estimate: None,
                    decision: None,
                    divisor,
                    low_confidence: false,
                },
            })
        })
        .collect::<Result<_>>()?;
    let decisions = symbols.iter().filter(|s| s.decision.is_some()).count();
    Ok(DemodReport {
        erasures: symbols.len() - decisions,
        decisions,
        symbols,
    })
}
