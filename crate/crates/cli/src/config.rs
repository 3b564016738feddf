//! Run configuration. Every section rejects unknown keys.

use std::path::{Path, PathBuf};

use algest_core::noise::{FitMetric, NoiseDistribution, NoiseSpec, SweepAxis};
use algest_core::runtime::EvalOptions;
use algest_core::BuiltinModel;
use serde::{Deserialize, Serialize};

use crate::Failure;

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "NoiseSpec::none")]
    pub noise: NoiseSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demod: Option<DemodSection>,
    /// Master seed for certification draws, noise and trials.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub carrier: BuiltinModel,
    /// True parameter values, in the model's parameter order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    /// Carrier amplitude and phase for the frequency model.
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Parameters to estimate; the rest take their true values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<String>>,
    /// Signal CSV read by `estimate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<PathBuf>,
    /// Plan JSON written by `derive`; derived afresh when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PathBuf>,
    /// Estimation window; the grid window when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalOptions>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nbar: usize,
    #[serde(default = "one")]
    pub window: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            nbar: 10_000,
            window: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub sweep: SweepAxis,
    pub trials: usize,
    #[serde(default)]
    pub fit: FitMetric,
    #[serde(default)]
    pub param_index: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodSection {
    pub omega: f64,
    pub constellation: Vec<f64>,
    pub symbols: usize,
    pub snr_db: Vec<f64>,
    pub nbars: Vec<usize>,
    #[serde(default = "one")]
    pub symbol_period: f64,
    #[serde(default)]
    pub dist: NoiseDistribution,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Artifact directory; `--out` wins, then this, then the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Prepended to every artifact file name.
    #[serde(default)]
    pub prefix: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| {
            // positional errors already start with `line:column:`
            let sep = if e.starts_with(|c: char| c.is_ascii_digit()) {
                ":"
            } else {
                ": "
            };
            Failure::input(format!("{}{sep}{e}", path.display()))
        })
    }

    /// Parses and validates. Syntax and schema errors read `line:column: message`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            let kind = match e.classify() {
                serde_json::error::Category::Syntax | serde_json::error::Category::Eof => "malformed JSON",
                _ => "schema error",
            };
            format!("{}:{}: {kind}: {e}", e.line(), e.column())
        })?;
        cfg.validate().map_err(|e| format!("schema error: {e}"))?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if self.grid.nbar < 2 {
            return Err(format!("grid.nbar must be at least 2, got {}", self.grid.nbar));
        }
        if !(self.grid.window.is_finite() && self.grid.window > 0.0) {
            return Err(format!("grid.window must be positive, got {}", self.grid.window));
        }
        if let Some(truth) = &self.model.truth {
            let want = self.model.carrier.params().len();
            if truth.len() != want {
                return Err(format!("model.truth needs {want} values, got {}", truth.len()));
            }
        }
        if let Some(t) = self.estimator.t {
            if !(t > 0.0 && t <= self.grid.window) {
                return Err(format!("estimator.t must lie in (0, grid.window], got {t}"));
            }
        }
        self.noise.validate().map_err(|e| e.to_string())?;
        Ok(())
    }

    pub fn truth(&self) -> Vec<f64> {
        self.model
            .truth
            .clone()
            .unwrap_or_else(|| self.model.carrier.default_truth())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_optional_sections() {
        let cfg = RunConfig::parse(r#"{"model": {"carrier": {"kind": "frequency"}}}"#).unwrap();
        assert_eq!(cfg.grid.nbar, 10_000);
        assert_eq!(cfg.model.amplitude, 1.0);
        assert_eq!(cfg.truth(), vec![9.0]);
        assert!(cfg.experiment.is_none());
    }

    #[test]
    fn errors_carry_line_and_column() {
        let err = RunConfig::parse("{\n \"model\": 1\n}").unwrap_err();
        assert!(err.starts_with("2:11: schema error"), "{err}");
        let err = RunConfig::parse("{\n\n  \"seed\": }").unwrap_err();
        assert!(err.starts_with("3:11: malformed JSON"), "{err}");
    }

    #[test]
    fn semantic_checks_run_after_parsing() {
        let bad = [
            r#"{"model": {"carrier": {"kind": "frequency"}, "truth": [1, 2]}}"#,
            r#"{"model": {"carrier": {"kind": "frequency"}}, "grid": {"nbar": 1}}"#,
            r#"{"model": {"carrier": {"kind": "frequency"}}, "estimator": {"t": 2.0}}"#,
            r#"{"model": {"carrier": {"kind": "frequency"}}, "noise": {"kind": "correlated", "amplitude": 1, "rho": 1.5}}"#,
        ];
        for text in bad {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let text = r#"{"model": {"carrier": {"kind": "phase", "omega": 2.0}}, "seed": 4,
            "experiment": {"sweep": {"axis": "noise-amplitude", "amplitudes": [0.1, 1.0], "nbar": 500}, "trials": 3}}"#;
        let cfg = RunConfig::parse(text).unwrap();
        let echo = serde_json::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&echo).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), echo);
    }
}
