//! Algebraic parameter estimation for carrier signals.
//!
//! Carriers that solve linear ODEs with polynomial coefficients are moved to
//! the operational (Laplace) domain, where unknown parameters are isolated by
//! exact operator algebra. The resulting linear systems are compiled into
//! iterated-integral estimators that run on sampled, noisy measurements.
//!
//! Layers, bottom-up:
//! - [`scalar`], [`poly`], [`ratfunc`], [`diffop`], [`module`]: exact symbolic arithmetic
//! - [`signal`]: carrier models and their operational relations
//! - [`identifiability`]: coefficient forms, rank tests and estimator systems
//! - [`compiler`]: strictly proper normalization and time-domain plans
//! - [`runtime`]: quadrature, plan evaluation and symbol demodulation
//! - [`noise`]: perturbation generators and Monte-Carlo experiments

pub mod compiler;
pub mod diffop;
pub mod error;
pub mod identifiability;
pub mod linalg;
pub mod models;
pub mod module;
pub mod noise;
pub mod poly;
pub mod ratfunc;
pub mod runtime;
pub mod scalar;
pub mod signal;

pub use compiler::{
    compile, normalize_strictly_proper, perturbation_image, AtomSource, EstimatorPlan, IntegralAtom, TimeFunctional,
};
pub use diffop::{DiffOp, OpExpr};
pub use error::{Error, Result};
pub use identifiability::{
    build_estimator_system, build_estimator_system_at, CoefficientForm, LinearSystemSpec, MMatrix,
};
pub use models::{BuiltinModel, EstimatorKind};
pub use module::{module_reduce, AnnihilatorModule, ModuleElement};
pub use poly::SPoly;
pub use ratfunc::RatFunc;
pub use runtime::{evaluate_plan, quadrature, EstimateResult, Grid, SampledSignal};
pub use scalar::{Assignment, ParamScalar, Rational, Symbol};
pub use signal::{CarrierSpec, MinimalEquation, OperationalRelation, TimeOde};
