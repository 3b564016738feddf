use std::io::Write;
use std::path::{Path, PathBuf};

use algest_core::compiler::{compile, normalize_strictly_proper};
use algest_core::identifiability::is_projectively_identifiable;
use algest_core::noise::{self, gen_noise, snr_db, ExperimentConfig, SerConfig};
use algest_core::runtime::{evaluate_plan_with, GuardVerdict};
use algest_core::{EstimatorPlan, Grid, LinearSystemSpec, SampledSignal, Symbol};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{Common, Failure, EXIT_DEGENERATE, EXIT_NOT_IDENTIFIABLE};

pub type Handler = fn(&Ctx) -> Result<u8, Failure>;

pub struct Ctx {
    pub cfg: RunConfig,
    /// Directory holding the config; relative input paths resolve against it.
    base: PathBuf,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    pub fn new(args: &Common) -> Result<Self, Failure> {
        let mut cfg = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        if let (Some(trials), Some(exp)) = (args.trials, cfg.experiment.as_mut()) {
            exp.trials = trials;
        }
        let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output.dir.as_ref().map(|d| base.join(d)))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Ctx {
            cfg,
            base,
            out,
            quiet: args.quiet,
        })
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", text.as_ref());
        }
    }

    fn input(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    fn echo(&self) -> Value {
        serde_json::to_value(&self.cfg).expect("config serializes")
    }

    fn comments(&self) -> Vec<String> {
        vec![format!("config: {}", self.echo()), format!("seed: {}", self.cfg.seed)]
    }

    /// Writes through a temporary file in the target directory, then renames.
    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Failure::input(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(format!("{}{name}", self.cfg.output.prefix));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.out)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path)
            .map_err(|e| Failure::input(format!("cannot write {}: {}", path.display(), e.error)))?;
        Ok(path)
    }

    /// JSON artifact with the config echo and seed merged in.
    fn write_json(&self, name: &str, body: Value) -> Result<PathBuf, Failure> {
        let mut doc = match body {
            Value::Object(map) => map,
            other => {
                let mut m = serde_json::Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        doc.insert("config".into(), self.echo());
        doc.insert("seed".into(), json!(self.cfg.seed));
        let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write_csv(
        &self,
        name: &str,
        emit: impl FnOnce(&mut Vec<u8>, &[String]) -> algest_core::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let mut buf = Vec::new();
        emit(&mut buf, &self.comments())?;
        self.write(name, &buf)
    }

    fn theta(&self) -> Option<Vec<Symbol>> {
        self.cfg
            .estimator
            .params
            .as_ref()
            .map(|ps| ps.iter().map(|p| Symbol::new(p)).collect())
    }

    fn system(&self) -> algest_core::Result<LinearSystemSpec> {
        self.cfg.model.carrier.system(self.theta().as_deref(), self.cfg.seed)
    }

    fn plan(&self) -> Result<EstimatorPlan, Failure> {
        if let Some(p) = &self.cfg.estimator.plan {
            let path = self.input(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
            return Ok(EstimatorPlan::from_json(&text)?);
        }
        Ok(compile(&normalize_strictly_proper(&self.system()?)?)?)
    }

    fn grid(&self) -> Result<Grid, Failure> {
        Ok(Grid::window(self.cfg.grid.window, self.cfg.grid.nbar)?)
    }

    /// True value of each named parameter, when the model defines one.
    fn truth_of(&self, names: &[String]) -> Vec<Option<f64>> {
        let params = self.cfg.model.carrier.params();
        let truth = self.cfg.truth();
        names
            .iter()
            .map(|n| params.iter().position(|p| p.name() == n).map(|i| truth[i]))
            .collect()
    }
}

fn system_json(sys: &LinearSystemSpec) -> Value {
    let rows: Vec<Value> = sys
        .a
        .iter()
        .zip(&sys.b)
        .zip(&sys.multipliers)
        .map(|((row, b), m)| {
            json!({
                "multiplier": format!("s^-{m}"),
                "a": row.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "b": b.to_string(),
            })
        })
        .collect();
    json!({
        "params": sys.params.iter().map(|p| p.name().to_string()).collect::<Vec<_>>(),
        "rows": rows,
    })
}

fn atom_table(plan: &EstimatorPlan) -> String {
    let mut out = format!(
        "{:>4} {:>8} {:>24} {:>3} {:>3}  source\n",
        "row", "column", "coeff", "k", "j"
    );
    for (r, row) in plan.a.iter().enumerate() {
        let cols = row.iter().zip(&plan.params).map(|(f, p)| (p.as_str(), f));
        for (col, f) in cols.chain(std::iter::once(("rhs", &plan.b[r]))) {
            for a in f.atoms() {
                out.push_str(&format!(
                    "{r:>4} {col:>8} {:>24} {:>3} {:>3}  {:?}\n",
                    a.coeff.to_string(),
                    a.k,
                    a.j,
                    a.source
                ));
            }
        }
    }
    out
}

pub fn derive(ctx: &Ctx) -> Result<u8, Failure> {
    let model = &ctx.cfg.model.carrier;
    let seed = ctx.cfg.seed;
    let rel = model.relation()?;
    let (cf, module) = model.coefficient_form()?;
    let rank = is_projectively_identifiable(&cf, &module, seed)?;
    let full_theta = ctx.theta().is_none_or(|t| model.params().iter().all(|p| t.contains(p)));

    ctx.say(format!("operational relation:\n  [{}] x̂ = {}", rel.lhs, rel.rhs));
    ctx.say(format!("coefficient form (N = {}, M = {}):", cf.n(), cf.m()));
    let columns = cf.columns();
    let coeffs = cf.coefficient_vector();
    for (c, col) in coeffs.iter().zip(&columns) {
        ctx.say(format!("  ({c}) · {col}"));
    }
    ctx.say(format!(
        "rank 𝔐 = {} (N + M = {}): {}",
        rank.rank,
        cf.n() + cf.m(),
        if rank.identifiable {
            "projectively identifiable"
        } else {
            "not identifiable"
        }
    ));

    let mut report = json!({
        "relation": { "lhs": rel.lhs.to_string(), "rhs": rel.rhs.to_string() },
        "coefficient_form": {
            "columns": columns.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "coefficients": coeffs.iter().map(ToString::to_string).collect::<Vec<_>>(),
        },
        "identifiability": rank,
    });

    let built = ctx.system().and_then(|sys| {
        let normalized = normalize_strictly_proper(&sys)?;
        let plan = compile(&normalized)?;
        Ok((normalized, plan))
    });
    let (normalized, plan) = match built {
        Ok(v) => v,
        Err(algest_core::Error::NotIdentifiable(why)) => {
            report["identifiable"] = json!(false);
            report["error"] = json!(format!("not identifiable: {why}"));
            let path = ctx.write_json("derive.json", report)?;
            eprintln!("not identifiable: {why} (report in {})", path.display());
            return Ok(EXIT_NOT_IDENTIFIABLE);
        }
        Err(e) => return Err(e.into()),
    };

    ctx.say("estimator system:");
    for (i, ((row, b), m)) in normalized
        .a
        .iter()
        .zip(&normalized.b)
        .zip(&normalized.multipliers)
        .enumerate()
    {
        let lhs: Vec<String> = row
            .iter()
            .zip(&normalized.params)
            .map(|(e, p)| format!("[{e}]·{p}"))
            .collect();
        ctx.say(format!("  row {i} (× s^-{m}): {} = {b}", lhs.join(" + ")));
    }
    ctx.say(format!("plan:\n{plan}"));
    ctx.say(format!(
        "divisor is {}; {} measured atoms\n{}",
        if plan.divisor_is_analytic() {
            "analytic"
        } else {
            "data-dependent"
        },
        plan.measured_atom_count(),
        atom_table(&plan)
    ));

    let identifiable = !(full_theta && !rank.identifiable);
    report["identifiable"] = json!(identifiable);
    report["system"] = system_json(&normalized);
    report["plan"] = serde_json::to_value(&plan).expect("plan");
    report["divisor_analytic"] = json!(plan.divisor_is_analytic());
    report["measured_atoms"] = json!(plan.measured_atom_count());
    ctx.write_json("derive.json", report)?;
    // loadable by `EstimatorPlan::from_json`, which ignores the extra keys
    let plan_path = ctx.write_json("plan.json", serde_json::to_value(&plan).expect("plan"))?;
    ctx.say(format!("wrote {}", plan_path.display()));
    if !identifiable {
        eprintln!("not identifiable: rank {} < {}", rank.rank, cf.n() + cf.m());
        return Ok(EXIT_NOT_IDENTIFIABLE);
    }
    Ok(0)
}

pub fn simulate(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let grid = ctx.grid()?;
    let truth = cfg.truth();
    let carrier = cfg
        .model
        .carrier
        .carrier(&truth, cfg.model.amplitude, cfg.model.phase)?;
    let clean = carrier.sample(&grid)?;
    let noise = gen_noise(&cfg.noise, &grid, cfg.seed)?;
    let measured = clean.add(&noise)?;
    let snr = snr_db(&clean, &noise)?;

    ctx.write_csv("signal.csv", |w, c| measured.write_csv(w, c))?;
    ctx.write_csv("components.csv", |w, comments| {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut out = csv_writer(w);
        out.write_record(["t", "clean", "noise", "measured"])?;
        for (i, t) in grid.times().enumerate() {
            out.write_record(
                [t, clean.values()[i], noise.values()[i], measured.values()[i]].map(|v| format!("{v:.16e}")),
            )?;
        }
        out.flush()?;
        Ok(())
    })?;
    ctx.write_json(
        "simulate.json",
        json!({
            "params": cfg.model.carrier.params().iter().map(|p| p.name().to_string()).collect::<Vec<_>>(),
            "truth": truth,
            "nbar": cfg.grid.nbar,
            "window": cfg.grid.window,
            "snr_db": finite_or_null(snr),
        }),
    )?;
    ctx.say(format!(
        "{} samples on [0, {}], SNR {snr:.2} dB",
        grid.count(),
        cfg.grid.window
    ));
    Ok(0)
}

fn csv_writer(w: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(w)
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn estimate(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let signal = cfg
        .estimator
        .signal
        .as_ref()
        .ok_or_else(|| Failure::input("estimate needs estimator.signal"))?;
    let path = ctx.input(signal);
    let file =
        std::fs::File::open(&path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    let x = SampledSignal::read_csv(file).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let plan = ctx.plan()?;
    let t = cfg.estimator.t.unwrap_or_else(|| x.grid().t_end());
    let result = evaluate_plan_with(&plan, &x, t, cfg.estimator.eval.unwrap_or_default())?;

    let truth = ctx.truth_of(&plan.params);
    let rel_err: Vec<Option<f64>> = match &result.estimates {
        Some(est) => est
            .iter()
            .zip(&truth)
            .map(|(e, t)| t.filter(|t| *t != 0.0).map(|t| ((e - t) / t).abs()))
            .collect(),
        None => vec![None; plan.arity()],
    };
    ctx.write_json(
        "estimate.json",
        json!({ "result": result, "truth": truth, "relative_error": rel_err }),
    )?;
    match &result.estimates {
        Some(est) if result.guard == GuardVerdict::Passed => {
            for (p, e) in plan.params.iter().zip(est) {
                ctx.say(format!("{p} = {e:.12e}"));
            }
            Ok(0)
        }
        _ => {
            eprintln!(
                "estimate rejected by the divisor guard ({:?}, δ = {:e})",
                result.guard, result.divisor
            );
            Ok(EXIT_DEGENERATE)
        }
    }
}

pub fn sweep(ctx: &Ctx) -> Result<u8, Failure> {
    let cfg = &ctx.cfg;
    let exp = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| Failure::input("sweep needs an experiment section"))?;
    let ec = ExperimentConfig {
        model: cfg.model.carrier.clone(),
        truth: cfg.model.truth.clone(),
        carrier_amplitude: cfg.model.amplitude,
        carrier_phase: cfg.model.phase,
        param_index: exp.param_index,
        window: cfg.grid.window,
        sweep: exp.sweep.clone(),
        trials: exp.trials,
        seed: cfg.seed,
        fit: exp.fit,
        eval: cfg.estimator.eval,
    };
    let report = noise::sweep(&ec)?;
    let dominated: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| 2 * r.erasures > r.trials)
        .map(|r| r.swept)
        .collect();
    ctx.write_csv("sweep.csv", |w, c| report.write_csv(w, c))?;
    ctx.write_json("sweep.json", json!({ "report": report, "guard_dominated": dominated }))?;
    for r in &report.rows {
        ctx.say(format!(
            "x = {:.4e}  N̄ = {:>8}  A = {:.4e}  {:?} = {:.4e}  erasures {}",
            r.swept,
            r.nbar,
            r.amplitude,
            report.metric,
            r.metric(report.metric),
            r.erasures
        ));
    }
    if let Some(f) = &report.fit {
        ctx.say(format!(
            "log-log slope {:.4} (95% CI {:.4} .. {:.4})",
            f.slope, f.ci_low, f.ci_high
        ));
    }
    if !dominated.is_empty() {
        eprintln!("guard rejected most trials at {dominated:?}");
        return Ok(EXIT_DEGENERATE);
    }
    Ok(0)
}

pub fn demod(ctx: &Ctx) -> Result<u8, Failure> {
    let d = ctx
        .cfg
        .demod
        .as_ref()
        .ok_or_else(|| Failure::input("demod needs a demod section"))?;
    let sc = SerConfig {
        omega: d.omega,
        constellation: d.constellation.clone(),
        symbols: d.symbols,
        snr_db: d.snr_db.clone(),
        nbars: d.nbars.clone(),
        symbol_period: d.symbol_period,
        seed: ctx.cfg.seed,
        dist: d.dist,
    };
    let report = noise::ser_experiment(&sc)?;
    let dominated = report.rows.iter().any(|r| 2 * r.algebraic_erasures > r.symbols);
    ctx.write_csv("ser.csv", |w, c| report.write_csv(w, c))?;
    ctx.write_json("ser.json", json!({ "report": report, "guard_dominated": dominated }))?;
    for r in &report.rows {
        ctx.say(format!(
            "SNR {:>6.1} dB  N̄ = {:>7}  algebraic SER {:.4e} (predicted {:.4e})  correlator SER {:.4e}",
            r.snr_db, r.nbar, r.algebraic_ser, r.predicted_ser, r.correlator_ser
        ));
    }
    if dominated {
        eprintln!("guard rejected most symbols in at least one cell");
        return Ok(EXIT_DEGENERATE);
    }
    Ok(0)
}
