//! Perturbation generators and Monte-Carlo experiments.
//!
//! Randomness is counter-based: every `(seed, cell, trial)` triple owns an
//! independent ChaCha stream, so results do not depend on how trials are
//! scheduled across threads. Aggregation is a sequential fold in trial order.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::compiler::{EstimatorPlan, PerturbationImage};
use crate::error::{Error, Result};
use crate::models::BuiltinModel;
use crate::runtime::{sliding_demodulate, EvalOptions, Grid, PlanEvaluator, SampledSignal};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    Rademacher,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTone {
    pub amplitude: f64,
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// `Σ A_i sin(Ω_i t + φ_i)`
    SinusoidSum { tones: Vec<NoiseTone> },
    /// `A·n(ι)` with independent unit-variance `n(ι)` per grid point.
    White {
        amplitude: f64,
        #[serde(default)]
        dist: NoiseDistribution,
    },
    /// AR(1) with unit marginal variance, scaled by `A`.
    Correlated {
        amplitude: f64,
        rho: f64,
        #[serde(default)]
        dist: NoiseDistribution,
    },
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::White {
            amplitude: 0.0,
            dist: NoiseDistribution::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::SinusoidSum { tones } => {
                for t in tones {
                    if !(t.omega.is_finite() && t.omega > 0.0 && t.amplitude.is_finite()) {
                        return Err(Error::InvalidConfig(format!("bad noise tone {t:?}")));
                    }
                }
            }
            NoiseSpec::White { amplitude, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "noise amplitude must be ≥ 0, got {amplitude}"
                    )));
                }
            }
            NoiseSpec::Correlated { amplitude, rho, .. } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "noise amplitude must be ≥ 0, got {amplitude}"
                    )));
                }
                if !rho.is_finite() || rho.abs() >= 1.0 {
                    return Err(Error::InvalidConfig(format!(
                        "AR coefficient must lie in (-1, 1), got {rho}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Independent stream for one `(seed, cell, trial)`.
pub fn trial_rng(seed: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ trial);
    rng
}

fn unit_draw(rng: &mut ChaCha8Rng, dist: NoiseDistribution) -> f64 {
    match dist {
        NoiseDistribution::Gaussian => StandardNormal.sample(rng),
        NoiseDistribution::Rademacher => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        // U(-1/2, 1/2) has variance 1/12
        NoiseDistribution::Uniform => (rng.random::<f64>() - 0.5) * 12f64.sqrt(),
    }
}

fn fill_noise(spec: &NoiseSpec, grid: &Grid, rng: &mut ChaCha8Rng, out: &mut [f64]) {
    match spec {
        NoiseSpec::SinusoidSum { tones } => {
            for (i, v) in out.iter_mut().enumerate() {
                let t = grid.time(i);
                *v = tones.iter().map(|n| n.amplitude * (n.omega * t + n.phase).sin()).sum();
            }
        }
        NoiseSpec::White { amplitude, dist } => {
            if *amplitude == 0.0 {
                out.fill(0.0);
                return;
            }
            for v in out.iter_mut() {
                *v = amplitude * unit_draw(rng, *dist);
            }
        }
        NoiseSpec::Correlated { amplitude, rho, dist } => {
            let innovation = (1.0 - rho * rho).sqrt();
            let mut prev = unit_draw(rng, *dist);
            for (i, v) in out.iter_mut().enumerate() {
                if i > 0 {
                    prev = rho * prev + innovation * unit_draw(rng, *dist);
                }
                *v = amplitude * prev;
            }
        }
    }
}

/// Noise samples on `grid`. Sinusoid sums ignore the seed.
pub fn gen_noise(spec: &NoiseSpec, grid: &Grid, seed: u64) -> Result<SampledSignal> {
    gen_noise_trial(spec, grid, seed, 0, 0)
}

pub fn gen_noise_trial(spec: &NoiseSpec, grid: &Grid, seed: u64, cell: u64, trial: u64) -> Result<SampledSignal> {
    spec.validate()?;
    let mut out = vec![0.0; grid.count()];
    fill_noise(spec, grid, &mut trial_rng(seed, cell, trial), &mut out);
    SampledSignal::new(*grid, out)
}

/// `10·log₁₀(P_signal / P_noise)`; `+∞` for silent noise, `-∞` for a silent signal.
pub fn snr_db(signal: &SampledSignal, noise: &SampledSignal) -> Result<f64> {
    if signal.grid() != noise.grid() {
        return Err(Error::InvalidGrid("signal and noise grids differ".into()));
    }
    Ok(snr_from_powers(signal.mean_square(), noise.mean_square()))
}

fn snr_from_powers(ps: f64, pn: f64) -> f64 {
    match (ps == 0.0, pn == 0.0) {
        (_, true) => f64::INFINITY,
        (true, false) => f64::NEG_INFINITY,
        _ => 10.0 * (ps / pn).log10(),
    }
}

/// How the noise amplitude follows the swept variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AmplitudeRule {
    Fixed {
        value: f64,
    },
    SqrtOmega {
        scale: f64,
    },
    Omega {
        scale: f64,
    },
    SqrtNbar {
        scale: f64,
    },
    /// `scale · x^alpha` for the swept `x`.
    Power {
        scale: f64,
        alpha: f64,
    },
}

impl AmplitudeRule {
    pub fn amplitude(&self, omega: Option<f64>, nbar: usize, swept: f64) -> f64 {
        match *self {
            AmplitudeRule::Fixed { value } => value,
            AmplitudeRule::SqrtOmega { scale } => scale * omega.unwrap_or(swept).sqrt(),
            AmplitudeRule::Omega { scale } => scale * omega.unwrap_or(swept),
            AmplitudeRule::SqrtNbar { scale } => scale * (nbar as f64).sqrt(),
            AmplitudeRule::Power { scale, alpha } => scale * swept.powf(alpha),
        }
    }
}

/// Swept axis of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SweepAxis {
    /// Single noise tone of frequency `Ω` with a random phase per trial.
    NoiseFrequency {
        omegas: Vec<f64>,
        amplitude: AmplitudeRule,
        #[serde(default = "default_spp")]
        samples_per_period: f64,
        #[serde(default = "default_min_nbar")]
        min_nbar: usize,
    },
    /// White or AR(1) noise on grids of `N̄` segments per window.
    GridDensity {
        nbars: Vec<usize>,
        amplitude: AmplitudeRule,
        #[serde(default)]
        dist: NoiseDistribution,
        #[serde(default)]
        rho: f64,
    },
    /// White or AR(1) noise of amplitude `A` on a fixed grid.
    NoiseAmplitude {
        amplitudes: Vec<f64>,
        nbar: usize,
        #[serde(default)]
        dist: NoiseDistribution,
        #[serde(default)]
        rho: f64,
    },
}

fn default_spp() -> f64 {
    16.0
}

fn default_min_nbar() -> usize {
    10_000
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMetric {
    /// Root-mean-square error.
    #[default]
    Rms,
    /// Standard deviation of the signed error.
    Std,
    MeanAbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: BuiltinModel,
    /// True parameter values (model defaults when absent).
    #[serde(default)]
    pub truth: Option<Vec<f64>>,
    /// Carrier amplitude and phase for the frequency model.
    #[serde(default = "one")]
    pub carrier_amplitude: f64,
    #[serde(default)]
    pub carrier_phase: f64,
    /// Parameter whose error is recorded.
    #[serde(default)]
    pub param_index: usize,
    #[serde(default = "one")]
    pub window: f64,
    pub sweep: SweepAxis,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub fit: FitMetric,
    #[serde(default)]
    pub eval: Option<EvalOptions>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub swept: f64,
    pub amplitude: f64,
    pub nbar: usize,
    pub omega: Option<f64>,
    pub mean_err: f64,
    pub std_err: f64,
    pub rms_err: f64,
    pub mean_abs_err: f64,
    pub snr_db: f64,
    pub erasures: usize,
    pub trials: usize,
    /// First-order analytic standard deviation for random noise cells.
    pub predicted_std: Option<f64>,
}

impl SweepRow {
    pub fn metric(&self, m: FitMetric) -> f64 {
        match m {
            FitMetric::Rms => self.rms_err,
            FitMetric::Std => self.std_err,
            FitMetric::MeanAbs => self.mean_abs_err,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval of the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

/// Least-squares line through `(ln x, ln y)` with a Student-t interval.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let tq = StudentsT::new(0.0, 1.0, nf - 2.0).ok()?.inverse_cdf(0.975);
    Some(SlopeFit {
        slope,
        intercept,
        ci_low: slope - tq * se,
        ci_high: slope + tq * se,
        points: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fit: Option<SlopeFit>,
    pub metric: FitMetric,
    pub seed: u64,
    pub warnings: Vec<String>,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            for line in c.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "swept",
            "amplitude",
            "nbar",
            "omega",
            "mean_err",
            "std_err",
            "rms_err",
            "mean_abs_err",
            "snr_db",
            "erasures",
            "trials",
            "predicted_std",
        ])?;
        for r in &self.rows {
            out.write_record([
                fmt17(r.swept),
                fmt17(r.amplitude),
                r.nbar.to_string(),
                r.omega.map(fmt17).unwrap_or_default(),
                fmt17(r.mean_err),
                fmt17(r.std_err),
                fmt17(r.rms_err),
                fmt17(r.mean_abs_err),
                fmt17(r.snr_db),
                r.erasures.to_string(),
                r.trials.to_string(),
                r.predicted_std.map(fmt17).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Cell {
    swept: f64,
    grid: Grid,
    amplitude: f64,
    omega: Option<f64>,
    /// Noise for one trial; sinusoid phases are drawn from the trial stream.
    kind: CellNoise,
}

#[derive(Clone, Copy)]
enum CellNoise {
    Tone { omega: f64 },
    Random { dist: NoiseDistribution, rho: f64 },
}

impl Cell {
    fn noise(&self, seed: u64, cell: u64, trial: u64) -> Vec<f64> {
        let mut rng = trial_rng(seed, cell, trial);
        let spec = match self.kind {
            CellNoise::Tone { omega } => NoiseSpec::SinusoidSum {
                tones: vec![NoiseTone {
                    amplitude: self.amplitude,
                    omega,
                    phase: rng.random::<f64>() * 2.0 * PI,
                }],
            },
            CellNoise::Random { dist, rho: 0.0 } => NoiseSpec::White {
                amplitude: self.amplitude,
                dist,
            },
            CellNoise::Random { dist, rho } => NoiseSpec::Correlated {
                amplitude: self.amplitude,
                rho,
                dist,
            },
        };
        let mut out = vec![0.0; self.grid.count()];
        fill_noise(&spec, &self.grid, &mut rng, &mut out);
        out
    }
}

fn even_ceil(x: f64) -> usize {
    let n = x.ceil() as usize;
    n + n % 2
}

fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let w = cfg.window;
    let mut out = Vec::new();
    match &cfg.sweep {
        SweepAxis::NoiseFrequency {
            omegas,
            amplitude,
            samples_per_period,
            min_nbar,
        } => {
            for &om in omegas {
                let nbar = even_ceil(samples_per_period * om * w / (2.0 * PI)).max(*min_nbar);
                out.push(Cell {
                    swept: om,
                    grid: Grid::window(w, nbar)?,
                    amplitude: amplitude.amplitude(Some(om), nbar, om),
                    omega: Some(om),
                    kind: CellNoise::Tone { omega: om },
                });
            }
        }
        SweepAxis::GridDensity {
            nbars,
            amplitude,
            dist,
            rho,
        } => {
            for &nbar in nbars {
                out.push(Cell {
                    swept: nbar as f64,
                    grid: Grid::window(w, nbar)?,
                    amplitude: amplitude.amplitude(None, nbar, nbar as f64),
                    omega: None,
                    kind: CellNoise::Random { dist: *dist, rho: *rho },
                });
            }
        }
        SweepAxis::NoiseAmplitude {
            amplitudes,
            nbar,
            dist,
            rho,
        } => {
            for &a in amplitudes {
                out.push(Cell {
                    swept: a,
                    grid: Grid::window(w, *nbar)?,
                    amplitude: a,
                    omega: None,
                    kind: CellNoise::Random { dist: *dist, rho: *rho },
                });
            }
        }
    }
    for c in &out {
        if !(c.amplitude.is_finite() && c.amplitude >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise amplitude {} at cell {}",
                c.amplitude, c.swept
            )));
        }
    }
    Ok(out)
}

/// `g^T Σ g` for the AR(1) correlation `Σ_ij = ρ^|i-j|`, in linear time.
fn ar1_quadratic_form(g: &[f64], rho: f64) -> f64 {
    if rho == 0.0 {
        return g.iter().map(|x| x * x).sum();
    }
    // Σ_i g_i (Σ_{j≤i} ρ^{i-j} g_j) + Σ_i g_i (Σ_{j>i} ρ^{j-i} g_j)
    let mut acc = 0.0;
    let mut fwd = 0.0;
    for &x in g {
        fwd = rho * fwd + x;
        acc += x * fwd;
    }
    let mut bwd = 0.0;
    for &x in g.iter().rev() {
        acc += x * rho * bwd;
        bwd = rho * bwd + x;
    }
    acc
}

/// Runs every cell of a sweep and fits the log-log slope of the chosen metric.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be ≥ 1".into()));
    }
    let truth = cfg.truth.clone().unwrap_or_else(|| cfg.model.default_truth());
    let carrier = cfg.model.carrier(&truth, cfg.carrier_amplitude, cfg.carrier_phase)?;
    let (plan, image) = cfg.model.plan(crate::identifiability::DEFAULT_SEED)?;
    if cfg.param_index >= plan.arity() {
        return Err(Error::ArityMismatch {
            expected: plan.arity(),
            got: cfg.param_index + 1,
        });
    }
    let opts = cfg.eval.unwrap_or_default();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (ci, cell) in cells(cfg)?.iter().enumerate() {
        let clean = carrier.sample(&cell.grid)?;
        let ev = PlanEvaluator::new(&plan, &cell.grid, cfg.window, opts)?;
        let p = cfg.param_index;
        let outcomes: Vec<(Option<f64>, f64)> = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|trial| {
                let w = cell.noise(cfg.seed, ci as u64, trial);
                let y: Vec<f64> = clean.values().iter().zip(&w).map(|(a, b)| a + b).collect();
                let pn = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
                let snr = snr_from_powers(clean.mean_square(), pn);
                let r = ev.evaluate_values(&y)?;
                Ok((r.estimates.map(|e| e[p] - truth[p]), snr))
            })
            .collect::<Result<_>>()?;
        let errs: Vec<f64> = outcomes.iter().filter_map(|o| o.0).collect();
        let erasures = outcomes.len() - errs.len();
        let n = errs.len() as f64;
        let (mean, std, rms, mae) = if errs.is_empty() {
            warnings.push(format!("cell {} ({}) erased in every trial", ci, cell.swept));
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = errs.iter().sum::<f64>() / n;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let rms = (errs.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
            let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / n;
            (mean, var.sqrt(), rms, mae)
        };
        let finite: Vec<f64> = outcomes.iter().map(|o| o.1).filter(|s| s.is_finite()).collect();
        let snr = if finite.is_empty() {
            outcomes[0].1
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let predicted_std = match cell.kind {
            CellNoise::Random { rho, .. } => {
                let g = ev.error_weights(&image, &clean, &truth)?;
                Some(cell.amplitude * ar1_quadratic_form(&g[p], rho).sqrt())
            }
            CellNoise::Tone { .. } => None,
        };
        rows.push(SweepRow {
            swept: cell.swept,
            amplitude: cell.amplitude,
            nbar: cell.grid.segments(),
            omega: cell.omega,
            mean_err: mean,
            std_err: std,
            rms_err: rms,
            mean_abs_err: mae,
            snr_db: snr,
            erasures,
            trials: cfg.trials,
            predicted_std,
        });
    }
    let kept: Vec<&SweepRow> = rows.iter().filter(|r| r.erasures < r.trials).collect();
    let xs: Vec<f64> = kept.iter().map(|r| r.swept).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.metric(cfg.fit)).collect();
    let fit = fit_loglog(&xs, &ys);
    if fit.is_none() {
        warnings.push("fewer than 3 usable cells; no slope fitted".into());
    }
    Ok(SweepReport {
        rows,
        fit,
        metric: cfg.fit,
        seed: cfg.seed,
        warnings,
    })
}

/// Standard deviation of the first-order estimation error for white noise of
/// unit amplitude, from the plan's perturbation image.
pub fn white_error_std(
    plan: &EstimatorPlan,
    image: &PerturbationImage,
    clean: &SampledSignal,
    truth: &[f64],
    window: f64,
    param: usize,
) -> Result<f64> {
    let ev = PlanEvaluator::new(plan, clean.grid(), window, EvalOptions::default())?;
    let g = ev.error_weights(image, clean, truth)?;
    Ok(g[param].iter().map(|x| x * x).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SerConfig {
    /// Carrier frequency of the amplitude-keyed symbols.
    pub omega: f64,
    pub constellation: Vec<f64>,
    pub symbols: usize,
    pub snr_db: Vec<f64>,
    pub nbars: Vec<usize>,
    #[serde(default = "one")]
    pub symbol_period: f64,
    pub seed: u64,
    #[serde(default)]
    pub dist: NoiseDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerRow {
    pub snr_db: f64,
    pub nbar: usize,
    pub noise_amplitude: f64,
    pub symbols: usize,
    pub algebraic_errors: usize,
    pub algebraic_erasures: usize,
    pub algebraic_ser: f64,
    /// Gaussian-approximation SER from the analytic error variance.
    pub predicted_ser: f64,
    pub correlator_errors: usize,
    pub correlator_ser: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerReport {
    pub rows: Vec<SerRow>,
    pub seed: u64,
}

impl SerReport {
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            for line in c.lines() {
                writeln!(w, "# {line}")?;
            }
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "snr_db",
            "nbar",
            "noise_amplitude",
            "symbols",
            "algebraic_errors",
            "algebraic_erasures",
            "algebraic_ser",
            "predicted_ser",
            "correlator_errors",
            "correlator_ser",
        ])?;
        for r in &self.rows {
            out.write_record([
                fmt17(r.snr_db),
                r.nbar.to_string(),
                fmt17(r.noise_amplitude),
                r.symbols.to_string(),
                r.algebraic_errors.to_string(),
                r.algebraic_erasures.to_string(),
                fmt17(r.algebraic_ser),
                fmt17(r.predicted_ser),
                r.correlator_errors.to_string(),
                fmt17(r.correlator_ser),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn nearest_real(x: f64, c: &[f64]) -> usize {
    let pts: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    crate::runtime::nearest_point(Complex64::new(x, 0.0), &pts).0
}

const SER_BATCH: usize = 256;

/// Amplitude-keyed symbols on `sin(ω t)` with white noise at a target SNR,
/// decided by the algebraic amplitude estimator and by a correlation receiver.
pub fn ser_experiment(cfg: &SerConfig) -> Result<SerReport> {
    if cfg.constellation.is_empty() || cfg.symbols == 0 {
        return Err(Error::InvalidConfig(
            "need a constellation and at least one symbol".into(),
        ));
    }
    let model = BuiltinModel::Amplitude { omega: cfg.omega };
    let (plan, image) = model.plan(crate::identifiability::DEFAULT_SEED)?;
    let pts: Vec<Complex64> = cfg.constellation.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let half_gap = {
        let mut c = cfg.constellation.clone();
        c.sort_by(f64::total_cmp);
        c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min) / 2.0
    };
    let mean_symbol_power = cfg.constellation.iter().map(|c| c * c).sum::<f64>() / cfg.constellation.len() as f64;
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &snr in &cfg.snr_db {
        for &nbar in &cfg.nbars {
            let grid = Grid::window(cfg.symbol_period, nbar)?;
            let len = grid.count();
            let carrier: Vec<f64> = grid.times().map(|t| (cfg.omega * t).sin()).collect();
            let carrier_power = carrier.iter().map(|v| v * v).sum::<f64>() / len as f64;
            let amp = (mean_symbol_power * carrier_power / 10f64.powf(snr / 10.0)).sqrt();
            let unit = SampledSignal::new(grid, carrier.clone())?;
            let sigma = amp * white_error_std(&plan, &image, &unit, &[1.0], cfg.symbol_period, 0)?;
            let predicted_ser = if sigma == 0.0 {
                0.0
            } else {
                // binary: one neighbour; M-ary interior points have two
                let q = 1.0 - Normal::standard().cdf(half_gap / sigma);
                let m = cfg.constellation.len() as f64;
                q * 2.0 * (m - 1.0) / m
            };
            let energy: f64 = carrier.iter().map(|v| v * v).sum();
            let cell_id = cell;
            cell += 1;
            let batches: Vec<(usize, usize, usize, usize)> = (0..cfg.symbols)
                .step_by(SER_BATCH)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|start| {
                    let end = (start + SER_BATCH).min(cfg.symbols);
                    let mut stream = Vec::with_capacity((end - start) * len);
                    let mut truth = Vec::with_capacity(end - start);
                    let mut corr_errors = 0;
                    for k in start..end {
                        let mut rng = trial_rng(cfg.seed, cell_id, k as u64);
                        let sym = rng.random_range(0..cfg.constellation.len());
                        truth.push(sym);
                        let d = cfg.constellation[sym];
                        let mut w = vec![0.0; len];
                        fill_noise(
                            &NoiseSpec::White {
                                amplitude: amp,
                                dist: cfg.dist,
                            },
                            &grid,
                            &mut rng,
                            &mut w,
                        );
                        let block: Vec<f64> = carrier.iter().zip(&w).map(|(c, n)| d * c + n).collect();
                        let stat = block.iter().zip(&carrier).map(|(y, c)| y * c).sum::<f64>() / energy;
                        if nearest_real(stat, &cfg.constellation) != sym {
                            corr_errors += 1;
                        }
                        stream.extend(block);
                    }
                    let stream_grid = Grid::new(grid.dt(), stream.len())?;
                    let report = sliding_demodulate(
                        &plan,
                        &SampledSignal::new(stream_grid, stream)?,
                        grid.t_end(),
                        &pts,
                        EvalOptions::default(),
                    )?;
                    Ok((end - start, report.errors(&truth), report.erasures, corr_errors))
                })
                .collect::<Result<_>>()?;
            let (n, errs, eras, corr) = batches
                .iter()
                .fold((0, 0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
            rows.push(SerRow {
                snr_db: snr,
                nbar,
                noise_amplitude: amp,
                symbols: n,
                algebraic_errors: errs,
                algebraic_erasures: eras,
                algebraic_ser: errs as f64 / n as f64,
                predicted_ser,
                correlator_errors: corr,
                correlator_ser: corr as f64 / n as f64,
            });
        }
    }
    Ok(SerReport { rows, seed: cfg.seed })
}
