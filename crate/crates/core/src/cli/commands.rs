//! Command implementations.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{parse_config, ConfigError, ConfigFile};
use super::{AnalyzeArgs, Axis, Cli, Command, CommonArgs, OptimizeArgs, SearchArgs, ShortfallArg, SimulateArgs, SpendArg, SweepArgs};
use crate::analysis::{analyze_network, NetworkAnalysis};
use crate::model::{Model, PolicyParams};
use crate::optimizer::{linspace, logspace, solve_p1, OptimizationResult, SearchConfig};
use crate::simcore::{compare, simulate, AnalyticSummary, CompareReport, ShortfallMode, SimOptions, SpendModel};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    Invalid = 2,
    Infeasible = 3,
    OracleMismatch = 4,
}

/// A command failure with its exit status.
#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self { status: ExitStatus::Invalid, message: e.to_string() }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        let status = match e {
            crate::Error::Validation(_) | crate::Error::InvalidPolicy(_) => ExitStatus::Invalid,
            _ => ExitStatus::Failure,
        };
        Self { status, message: e.to_string() }
    }
}

fn failure(message: impl Into<String>) -> CliError {
    CliError { status: ExitStatus::Failure, message: message.into() }
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError { status: ExitStatus::Invalid, message: message.into() }
}

/// Everything needed to reproduce a run from its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub arguments: Vec<String>,
    pub seed: Option<u64>,
    pub config: &'a ConfigFile,
    pub outputs: Vec<String>,
}

/// Collects the CSV outputs of a command.
struct Sink {
    out: Option<PathBuf>,
    written: Vec<String>,
}

impl Sink {
    fn new(out: Option<PathBuf>) -> Result<Self, CliError> {
        if let Some(dir) = &out {
            fs::create_dir_all(dir).map_err(|e| failure(format!("cannot create {}: {e}", dir.display())))?;
        }
        Ok(Self { out, written: Vec::new() })
    }

    /// Writes `name` into the output directory, or to stdout without one.
    fn emit(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        match &self.out {
            Some(dir) => self.write_file(dir.clone(), name, contents),
            None => {
                std::io::stdout().write_all(contents.as_bytes()).map_err(|e| failure(e.to_string()))
            }
        }
    }

    /// Writes a file that has no stdout fallback.
    fn emit_file(&mut self, flag: &str, name: &str, contents: &str) -> Result<(), CliError> {
        let dir = self.out.clone().ok_or_else(|| invalid(format!("{flag} needs --out DIR")))?;
        self.write_file(dir, name, contents)
    }

    fn write_file(&mut self, dir: PathBuf, name: &str, contents: &str) -> Result<(), CliError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| failure(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(self, command: &'static str, seed: Option<u64>, config: &ConfigFile) -> Result<(), CliError> {
        let Some(dir) = self.out else { return Ok(()) };
        let manifest = RunManifest {
            tool: "cogharvest",
            version: env!("CARGO_PKG_VERSION"),
            command,
            arguments: std::env::args().collect(),
            seed,
            config,
            outputs: self.written,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| failure(e.to_string()))?;
        let path = dir.join("manifest.json");
        fs::write(&path, json + "\n").map_err(|e| failure(format!("cannot write {}: {e}", path.display())))
    }
}

/// CSV text from a header and rows of already formatted fields.
fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| failure(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| failure(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| failure(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| failure(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn load(common: &CommonArgs) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| invalid(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| prefix(&common.config, e))?;
    if common.ideal_sensing {
        cfg.system.ideal_sensing = true;
    }
    Ok(cfg)
}

fn prefix(path: &Path, e: ConfigError) -> CliError {
    let lines: Vec<String> = e.diagnostics.iter().map(|d| format!("{}: {d}", path.display())).collect();
    invalid(lines.join("\n"))
}

fn model_of(common: &CommonArgs, cfg: &ConfigFile) -> Result<Model, CliError> {
    let model = cfg.model().map_err(|e| prefix(&common.config, e))?;
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    Ok(model)
}

fn search_of(cfg: &ConfigFile, flags: &SearchArgs) -> Result<SearchConfig, CliError> {
    let mut s = cfg.search.clone();
    if let Some(v) = flags.grid_omega {
        s.grid_omega = v;
    }
    if let Some(v) = flags.grid_theta {
        s.grid_theta = v;
    }
    if let Some(v) = flags.refine {
        s.refine_levels = v;
    }
    if let Some(v) = flags.max_sweeps {
        s.max_sweeps = v;
    }
    if s.grid_omega < 1 || s.grid_theta < 1 {
        return Err(invalid("search grids need at least one point per axis"));
    }
    if !(s.theta_min > 0.0) {
        return Err(invalid("theta_min must be positive"));
    }
    Ok(s)
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> ExitStatus {
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Optimize(a) => cmd_optimize(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            e.status
        }
    }
}

const ANALYZE_HEADER: [&str; 14] = [
    "su",
    "omega",
    "theta",
    "p_fa",
    "p_d",
    "pi_hat_idle",
    "var_hat_h0",
    "var_hat_h1",
    "avg_energy",
    "battery_outage",
    "transmission_outage",
    "rate_lb",
    "interference",
    "aic_satisfied",
];

/// Metrics table of a network analysis: one row per SU and a totals row.
pub fn analysis_csv(net: &NetworkAnalysis) -> Result<String, CliError> {
    let mut rows: Vec<Vec<String>> = net
        .sus
        .iter()
        .map(|a| {
            vec![
                (a.su + 1).to_string(),
                num(a.params.omega),
                num(a.params.theta),
                num(a.sensing.p_fa),
                num(a.sensing.p_d),
                num(a.sensing.pi_hat_idle),
                num(a.estimation.var_hat_h0),
                num(a.estimation.var_hat_h1),
                num(a.avg_energy()),
                num(a.battery_outage()),
                num(a.transmission_outage),
                num(a.rate_lb()),
                num(a.interference),
                String::new(),
            ]
        })
        .collect();
    let mut total = vec![String::new(); ANALYZE_HEADER.len()];
    total[0] = "total".into();
    total[11] = num(net.sum_rate());
    total[12] = num(net.aic_lhs());
    total[13] = net.breakdown.aic_satisfied.to_string();
    rows.push(total);
    csv_text(&ANALYZE_HEADER, &rows)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<ExitStatus, CliError> {
    if args.dump_matrix && args.common.out.is_none() {
        return Err(invalid("--dump-matrix needs --out DIR"));
    }
    let cfg = load(&args.common)?;
    let model = model_of(&args.common, &cfg)?;
    let policies = cfg.require_policies().map_err(|e| prefix(&args.common.config, e))?;
    let net = analyze_network(&model, &policies)?;
    let mut sink = Sink::new(args.common.out.clone())?;
    sink.emit("analyze.csv", &analysis_csv(&net)?)?;
    if args.dump_matrix {
        for a in &net.sus {
            sink.emit_file("--dump-matrix", &format!("matrix_su{}.csv", a.su + 1), &a.chain.matrix_csv())?;
        }
    }
    sink.finish("analyze", None, &cfg)?;
    for a in &net.sus {
        eprintln!(
            "SU {}: avg energy {:.3} cells, battery outage {:.4}, transmission outage {:.4}, rate bound {:.2} bit/s",
            a.su + 1,
            a.avg_energy(),
            a.battery_outage(),
            a.transmission_outage,
            a.rate_lb()
        );
    }
    eprintln!(
        "sum rate bound {:.2} bit/s, interference {:.6} W (cap {}), constraint {}",
        net.sum_rate(),
        net.aic_lhs(),
        model.config.interference_cap,
        if net.breakdown.aic_satisfied { "met" } else { "violated" }
    );
    Ok(ExitStatus::Success)
}

/// Optimum table: one row per SU and a totals row.
pub fn optimization_csv(r: &OptimizationResult) -> Result<String, CliError> {
    let header = ["su", "omega", "theta", "rate_lb", "interference", "feasible"];
    let mut rows: Vec<Vec<String>> = r
        .params
        .iter()
        .enumerate()
        .map(|(n, p)| {
            vec![
                (n + 1).to_string(),
                num(p.omega),
                num(p.theta),
                num(r.per_su_rate[n]),
                num(r.per_su_interference[n]),
                String::new(),
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        String::new(),
        String::new(),
        num(r.sum_rate),
        num(r.aic_lhs),
        r.feasible.to_string(),
    ]);
    csv_text(&header, &rows)
}

fn cmd_optimize(args: &OptimizeArgs) -> Result<ExitStatus, CliError> {
    let cfg = load(&args.common)?;
    let model = model_of(&args.common, &cfg)?;
    let search = search_of(&cfg, &args.search)?;
    let r = solve_p1(&model, &search)?;
    let mut sink = Sink::new(args.common.out.clone())?;
    sink.emit("optimize.csv", &optimization_csv(&r)?)?;
    sink.finish("optimize", None, &cfg)?;
    let d = &r.diagnostics;
    eprintln!(
        "{} evaluations ({} rejected), {}x{} coarse grid, {} refinement levels, {} sweeps",
        d.evaluations, d.rejected, d.grid_omega, d.grid_theta, d.refine_levels, d.sweeps
    );
    if r.feasible {
        eprintln!("optimum sum rate bound {:.2} bit/s at interference {:.6} W", r.sum_rate, r.aic_lhs);
        Ok(ExitStatus::Success)
    } else {
        eprintln!(
            "infeasible: no policy meets the cap {} W; least interference found is {:.6} W",
            r.interference_cap, r.aic_lhs
        );
        Ok(ExitStatus::Infeasible)
    }
}

fn compare_csv(reports: &[CompareReport]) -> Result<String, CliError> {
    let header = ["su", "quantity", "analytic", "empirical", "deviation", "kind", "tolerance", "pass"];
    let mut rows = Vec::new();
    for r in reports {
        for c in &r.checks {
            rows.push(vec![
                (r.su + 1).to_string(),
                c.quantity.to_string(),
                num(c.analytic),
                num(c.empirical),
                num(c.deviation),
                format!("{:?}", c.kind),
                num(c.tolerance),
                c.pass.to_string(),
            ]);
        }
    }
    csv_text(&header, &rows)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitStatus, CliError> {
    if args.slots == 0 {
        return Err(invalid("--slots must be at least 1"));
    }
    let cfg = load(&args.common)?;
    let model = model_of(&args.common, &cfg)?;
    let policies = cfg.require_policies().map_err(|e| prefix(&args.common.config, e))?;
    let net = analyze_network(&model, &policies)?;
    let opts = SimOptions {
        slots: args.slots,
        seed: args.seed,
        shortfall: match args.shortfall {
            ShortfallArg::Drain => ShortfallMode::Drain,
            ShortfallArg::Skip => ShortfallMode::Skip,
        },
        spend: match args.spend {
            SpendArg::True => SpendModel::TrueHypothesis,
            SpendArg::Idle => SpendModel::IdleHypothesis,
        },
        record: args.dump_trace,
    };
    if args.dump_trace && args.common.out.is_none() {
        return Err(invalid("--dump-trace needs --out DIR"));
    }
    let trace = simulate(&model, &policies, &opts)?;

    let header = [
        "su",
        "slots",
        "seed",
        "avg_energy",
        "battery_outage",
        "transmission_outage",
        "mean_rate",
        "mean_interference",
        "sensed_idle",
        "shortfall_events",
        "clamped_low",
        "clamped_high",
    ];
    let rows: Vec<Vec<String>> = trace
        .per_su
        .iter()
        .map(|t| {
            vec![
                (t.su + 1).to_string(),
                t.slots.to_string(),
                args.seed.to_string(),
                num(t.avg_energy()),
                num(t.battery_outage()),
                num(t.transmission_outage()),
                num(t.mean_rate()),
                num(t.mean_interference()),
                t.sensed_idle.to_string(),
                t.shortfall_events.to_string(),
                t.clamped_low.to_string(),
                t.clamped_high.to_string(),
            ]
        })
        .collect();
    let reports: Vec<CompareReport> = trace
        .per_su
        .iter()
        .zip(&net.sus)
        .map(|(t, a)| compare(t, &AnalyticSummary::from(a)))
        .collect();

    let mut sink = Sink::new(args.common.out.clone())?;
    sink.emit("simulate.csv", &csv_text(&header, &rows)?)?;
    if args.common.out.is_some() {
        sink.emit("compare.csv", &compare_csv(&reports)?)?;
    }
    if args.dump_trace {
        for t in &trace.per_su {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &t.records {
                w.serialize(r).map_err(|e| failure(e.to_string()))?;
            }
            let text = String::from_utf8(w.into_inner().map_err(|e| failure(e.to_string()))?)
                .map_err(|e| failure(e.to_string()))?;
            sink.emit_file("--dump-trace", &format!("trace_su{}.csv", t.su + 1), &text)?;
        }
    }
    sink.finish("simulate", Some(args.seed), &cfg)?;

    let mut all_pass = true;
    for r in &reports {
        for c in &r.checks {
            eprintln!(
                "SU {} {:<20} analytic {:>14.6} simulated {:>14.6} deviation {:.3e} (tol {}) {}",
                r.su + 1,
                c.quantity,
                c.analytic,
                c.empirical,
                c.deviation,
                c.tolerance,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        all_pass &= r.passed();
    }
    Ok(if all_pass { ExitStatus::Success } else { ExitStatus::OracleMismatch })
}

/// One evaluated sweep point.
struct SweepRow {
    value: f64,
    outcome: Result<SweepPoint, String>,
}

struct SweepPoint {
    net: NetworkAnalysis,
    feasible: bool,
}

fn apply_axis(
    axis: Axis,
    value: f64,
    cfg: &ConfigFile,
    policies: &[Option<PolicyParams>],
) -> Result<(crate::model::SystemConfig, Vec<crate::model::SuProfile>, Vec<Option<PolicyParams>>), String> {
    let mut system = cfg.system.clone();
    let mut profiles = cfg.profiles.clone();
    let mut policies = policies.to_vec();
    let integral = |v: f64| -> Result<usize, String> {
        if v < 0.0 || (v - v.round()).abs() > 1e-9 {
            Err(format!("{} needs a non-negative integer, got {v}", axis.name()))
        } else {
            Ok(v.round() as usize)
        }
    };
    match axis {
        Axis::TauS => system.sensing_duration = value,
        Axis::AlphaT => system.probe_cells = integral(value)?,
        Axis::K => system.battery_cells = integral(value)?,
        Axis::Rho => profiles.iter_mut().for_each(|p| p.harvest_rate = value),
        Axis::IAv => system.interference_cap = value,
        Axis::Omega | Axis::Theta => {
            for p in policies.iter_mut() {
                let cur = p.ok_or("sweeping omega or theta needs a policy for every SU")?;
                let (o, t) = if axis == Axis::Omega { (value, cur.theta) } else { (cur.omega, value) };
                *p = Some(PolicyParams::new(o, t).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok((system, profiles, policies))
}

fn sweep_point(
    args: &SweepArgs,
    cfg: &ConfigFile,
    value: f64,
    search: &SearchConfig,
    optimize: bool,
) -> Result<(SweepPoint, Option<OptimizationResult>), String> {
    let (system, profiles, policies) = apply_axis(args.axis, value, cfg, &cfg.policies)?;
    let model = cfg.model_with(system, profiles).map_err(|e| {
        e.diagnostics.iter().map(|d| d.message.clone()).collect::<Vec<_>>().join("; ")
    })?;
    if optimize {
        let r = solve_p1(&model, search).map_err(|e| e.to_string())?;
        let net = analyze_network(&model, &r.params).map_err(|e| e.to_string())?;
        Ok((SweepPoint { net, feasible: r.feasible }, Some(r)))
    } else {
        let policies: Vec<PolicyParams> = policies
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or("every SU needs a policy unless --optimize is given")?;
        let net = analyze_network(&model, &policies).map_err(|e| e.to_string())?;
        let feasible = net.breakdown.aic_satisfied;
        Ok((SweepPoint { net, feasible }, None))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitStatus, CliError> {
    if args.points == 0 {
        return Err(invalid("--points must be at least 1"));
    }
    if !(args.from.is_finite() && args.to.is_finite()) {
        return Err(invalid("--from and --to must be finite"));
    }
    if args.log && !(args.from > 0.0 && args.to > 0.0) {
        return Err(invalid("--log needs a positive range"));
    }
    let cfg = load(&args.common)?;
    // the unmodified configuration must at least parse into a model
    model_of(&args.common, &cfg)?;
    let search = search_of(&cfg, &args.search)?;
    let optimize = args.optimize || args.axis == Axis::IAv;
    let values =
        if args.log { logspace(args.from, args.to, args.points) } else { linspace(args.from, args.to, args.points) };

    let rows: Vec<SweepRow> = if args.axis == Axis::IAv {
        // Continuation in the cap: each optimum seeds the next point, whose
        // feasible set contains it when the cap grows.
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut out: Vec<Option<SweepRow>> = (0..values.len()).map(|_| None).collect();
        let mut warm: Vec<Vec<PolicyParams>> = Vec::new();
        for i in order {
            let mut s = search.clone();
            s.warm_starts = warm.clone();
            let outcome = sweep_point(args, &cfg, values[i], &s, true);
            if let Ok((p, Some(r))) = &outcome {
                if p.feasible {
                    warm = vec![r.params.clone()];
                }
            }
            out[i] = Some(SweepRow { value: values[i], outcome: outcome.map(|(p, _)| p) });
        }
        out.into_iter().map(|r| r.expect("every sweep point evaluated")).collect()
    } else {
        values
            .par_iter()
            .map(|&v| SweepRow { value: v, outcome: sweep_point(args, &cfg, v, &search, optimize).map(|(p, _)| p) })
            .collect()
    };

    let header = [
        "axis",
        "value",
        "valid",
        "sum_rate",
        "aic_lhs",
        "feasible",
        "avg_energy",
        "battery_outage",
        "transmission_outage",
        "omega",
        "theta",
        "note",
    ];
    let mut table = Vec::with_capacity(rows.len());
    let mut invalid_rows = 0;
    for r in &rows {
        let mut row = vec![args.axis.name().to_string(), num(r.value)];
        match &r.outcome {
            Ok(p) => {
                let n = p.net.sus.len() as f64;
                let mean = |f: &dyn Fn(&crate::analysis::SuAnalysis) -> f64| p.net.sus.iter().map(f).sum::<f64>() / n;
                let join = |f: &dyn Fn(&PolicyParams) -> f64| {
                    p.net.sus.iter().map(|a| num(f(&a.params))).collect::<Vec<_>>().join(";")
                };
                row.extend([
                    "true".into(),
                    num(p.net.sum_rate()),
                    num(p.net.aic_lhs()),
                    p.feasible.to_string(),
                    num(mean(&|a| a.avg_energy())),
                    num(mean(&|a| a.battery_outage())),
                    num(mean(&|a| a.transmission_outage)),
                    join(&|q| q.omega),
                    join(&|q| q.theta),
                    String::new(),
                ]);
            }
            Err(msg) => {
                invalid_rows += 1;
                row.push("false".into());
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(msg.clone());
            }
        }
        table.push(row);
    }
    let mut sink = Sink::new(args.common.out.clone())?;
    sink.emit("sweep.csv", &csv_text(&header, &table)?)?;
    sink.finish("sweep", None, &cfg)?;
    eprintln!(
        "{} points on {} ({}), {} invalid",
        rows.len(),
        args.axis.name(),
        if optimize { "optimised policies" } else { "configured policies" },
        invalid_rows
    );
    Ok(ExitStatus::Success)
}
