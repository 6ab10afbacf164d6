//! Batch runs: JSON configuration in, CSV table and JSON report out.

use crate::borel;
use crate::dynamics::{self, EvolutionPlan, LatticeHamiltonian, LatticeSpec, Observable, Quadrature};
use crate::error::{Error, Result};
use crate::gauge::{self, CompleteFamily, FamilySpec, GaugeFunction, GaugeSpec, IndexInterval};
use crate::halfline::{self, HalfLineOperator, LyapunovConfig, Potential, PotentialSpec};
use crate::hausdorff_set::{self, CoverTree, TreeSpec, VerdictConfig};
use crate::logmath::{geomspace, linspace};
use crate::measure::{self, DimensionConfig, MeasureSpec, SpectralMeasure};
use crate::rank_one::{self, RankOnePerturbation, SuleGenerator};
use crate::sparse_barrier::{self, BarrierProfile, ProfileSpec, DEFAULT_CAP};
use crate::trend::TrendConfig;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    GaugeCompare,
    SetDim,
    MeasureDim,
    BorelScan,
    Boole,
    Lyapunov,
    Subordinacy,
    SparseBarrier,
    RankOne,
    Sule,
    Dynamics,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::GaugeCompare,
        Command::SetDim,
        Command::MeasureDim,
        Command::BorelScan,
        Command::Boole,
        Command::Lyapunov,
        Command::Subordinacy,
        Command::SparseBarrier,
        Command::RankOne,
        Command::Sule,
        Command::Dynamics,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::GaugeCompare => "gauge-compare",
            Command::SetDim => "set-dim",
            Command::MeasureDim => "measure-dim",
            Command::BorelScan => "borel-scan",
            Command::Boole => "boole",
            Command::Lyapunov => "lyapunov",
            Command::Subordinacy => "subordinacy",
            Command::SparseBarrier => "sparse-barrier",
            Command::RankOne => "rank-one",
            Command::Sule => "sule",
            Command::Dynamics => "dynamics",
        }
    }

    pub fn from_name(s: &str) -> Option<Command> {
        Command::ALL.iter().copied().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn empty_object() -> Value {
    json!({})
}

impl RunConfig {
    pub fn new(command: Command, params: Value, seed: u64) -> Self {
        RunConfig { command, params, seed, workers: None }
    }

    pub fn from_value(v: Value) -> Result<Self> {
        from_value_at(v, "")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| invalid("", e.to_string()))?;
        Self::from_value(v)
    }
}

/// CSV table plus JSON report of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub command: Command,
    pub csv: String,
    pub json: String,
}

impl RunOutput {
    pub fn csv_name(&self) -> String {
        format!("{}.csv", self.command.name())
    }

    pub fn json_name(&self) -> String {
        format!("{}.json", self.command.name())
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.to_string(), msg: msg.into() }
}

fn join(prefix: &str, path: &str) -> String {
    match (prefix.is_empty(), path.is_empty() || path == ".") {
        (_, true) => prefix.to_string(),
        (true, false) => path.to_string(),
        (false, false) => format!("{prefix}.{path}"),
    }
}

fn from_value_at<T: DeserializeOwned>(v: Value, field: &str) -> Result<T> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        invalid(&join(field, &path), e.into_inner().to_string())
    })
}

/// Typed view of a params object.
struct Params<'a> {
    obj: &'a serde_json::Map<String, Value>,
}

impl<'a> Params<'a> {
    /// Rejects keys outside `allowed` before anything runs.
    fn new(v: &'a Value, allowed: &[&str]) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| invalid("params", "must be an object"))?;
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(invalid(k, format!("unknown field; expected one of {allowed:?}")));
            }
        }
        Ok(Params { obj })
    }

    fn raw(&mut self, name: &'static str) -> Option<&'a Value> {
        self.obj.get(name)
    }

    fn req<T: DeserializeOwned>(&mut self, name: &'static str) -> Result<T> {
        let v = self.raw(name).ok_or_else(|| invalid(name, "missing"))?;
        from_value_at(v.clone(), name)
    }

    fn opt<T: DeserializeOwned>(&mut self, name: &'static str) -> Result<Option<T>> {
        match self.raw(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => from_value_at(v.clone(), name).map(Some),
        }
    }

    fn or<T: DeserializeOwned>(&mut self, name: &'static str, default: T) -> Result<T> {
        Ok(self.opt(name)?.unwrap_or(default))
    }

    fn gauge(&mut self, name: &'static str) -> Result<GaugeFunction> {
        let v = self.raw(name).ok_or_else(|| invalid(name, "missing"))?;
        parse_gauge(v, name)
    }

    fn gauge_or(&mut self, name: &'static str, default: GaugeFunction) -> Result<GaugeFunction> {
        match self.raw(name) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => parse_gauge(v, name),
        }
    }

    fn grid(&mut self, name: &'static str, default: Vec<f64>) -> Result<Vec<f64>> {
        Ok(match self.opt::<GridSpec>(name)? {
            Some(g) => g.points().map_err(|m| invalid(name, m))?,
            None => default,
        })
    }

    fn measure(&mut self, name: &'static str) -> Result<SpectralMeasure> {
        let spec: MeasureSpec = self.req(name)?;
        SpectralMeasure::new(spec).map_err(|e| invalid(name, e.to_string()))
    }

    fn family(&mut self, name: &'static str) -> Result<CompleteFamily> {
        let v = self.raw(name).ok_or_else(|| invalid(name, "missing"))?;
        let spec: FamilySpec = from_value_at(v.clone(), name)?;
        let interval = match self.opt::<IndexInterval>("interval")? {
            Some(iv) => iv,
            None => match spec {
                FamilySpec::Power => IndexInterval::unit(),
                _ => IndexInterval::positive(),
            },
        };
        CompleteFamily::new(spec, interval).map_err(|e| invalid(name, e.to_string()))
    }
}

const GAUGE_NAMES: [&str; 8] = ["power", "log_power", "f_delta", "rho_beta", "G_beta", "g_beta", "gensing", "transform"];

fn parse_gauge(v: &Value, field: &str) -> Result<GaugeFunction> {
    let name = v.get("name").ok_or_else(|| invalid(&format!("{field}.name"), "missing"))?;
    match name.as_str() {
        Some(n) if GAUGE_NAMES.contains(&n) => {}
        _ => return Err(invalid(&format!("{field}.name"), format!("unknown gauge {name}; expected one of {GAUGE_NAMES:?}"))),
    }
    let spec: GaugeSpec = from_value_at(v.clone(), field)?;
    GaugeFunction::new(spec).map_err(|e| invalid(&format!("{field}.params"), e.to_string()))
}

/// A list of numbers or `{"linspace": [a, b, n]}` / `{"geomspace": [a, b, n]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Lin { linspace: (f64, f64, usize) },
    Geom { geomspace: (f64, f64, usize) },
}

impl GridSpec {
    fn points(&self) -> std::result::Result<Vec<f64>, String> {
        let v = match self {
            GridSpec::List(v) => v.clone(),
            GridSpec::Lin { linspace: (a, b, n) } => linspace(*a, *b, *n),
            GridSpec::Geom { geomspace: (a, b, n) } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return Err("geomspace endpoints must be positive".into());
                }
                geomspace(*a, *b, *n)
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err("grid must be nonempty and finite".into());
        }
        Ok(v)
    }
}

/// CSV with a leading '#' comment line that documents the columns.
struct Table {
    comment: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(comment: impl Into<String>, header: &[&'static str]) -> Self {
        Table { comment: comment.into(), header: header.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).map_err(|e| Error::Io(e.to_string()))?;
        Ok(format!("# {}\n{body}", self.comment))
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn to_json<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

/// Fill `"seed"` of every `{"kind": "random"}` object that lacks one.
fn inject_seed(v: &mut Value, seed: u64) {
    match v {
        Value::Object(m) => {
            if m.get("kind").and_then(Value::as_str) == Some("random") && !m.contains_key("seed") {
                m.insert("seed".into(), json!(seed));
            }
            m.values_mut().for_each(|x| inject_seed(x, seed));
        }
        Value::Array(a) => a.iter_mut().for_each(|x| inject_seed(x, seed)),
        _ => {}
    }
}

/// Run one configuration; `workers` sizes a dedicated thread pool.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.workers {
        Some(0) => Err(invalid("workers", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &RunConfig) -> Result<RunOutput> {
    let mut params = cfg.params.clone();
    inject_seed(&mut params, cfg.seed);
    let mut p = Params::new(&params, allowed_keys(cfg.command))?;
    let (table, report) = match cfg.command {
        Command::GaugeCompare => gauge_compare(&mut p)?,
        Command::SetDim => set_dim(&mut p)?,
        Command::MeasureDim => measure_dim(&mut p)?,
        Command::BorelScan => borel_scan(&mut p)?,
        Command::Boole => boole(&mut p)?,
        Command::Lyapunov => lyapunov(&mut p)?,
        Command::Subordinacy => subordinacy(&mut p)?,
        Command::SparseBarrier => sparse_barrier_cmd(&mut p)?,
        Command::RankOne => rank_one_cmd(&mut p)?,
        Command::Sule => sule(&mut p, cfg.seed)?,
        Command::Dynamics => dynamics_cmd(&mut p, cfg.seed)?,
    };
    let echo = RunConfig { workers: None, ..cfg.clone() };
    let doc = json!({ "config": echo, "report": report });
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))? + "\n";
    Ok(RunOutput { command: cfg.command, csv: table.render()?, json })
}

fn allowed_keys(c: Command) -> &'static [&'static str] {
    match c {
        Command::GaugeCompare => &["rho", "xi", "s_grid", "trend"],
        Command::SetDim => &["tree", "family", "interval", "k_range", "tol", "verdict"],
        Command::MeasureDim => &["measure", "family", "interval", "config", "eps_grid"],
        Command::BorelScan => &["measure", "gauge", "points", "eps_grid"],
        Command::Boole => &["measure", "lambdas"],
        Command::Lyapunov => &["potential", "theta", "energies", "n_max", "config"],
        Command::Subordinacy => &["potential", "theta", "gauge", "energies", "l_schedule"],
        Command::SparseBarrier => &[
            "profile", "K", "report", "energies", "eps", "n_range", "m_per_scale", "m_cap", "n", "delta", "ln_l_grid", "k", "z", "offsets",
        ],
        Command::RankOne => &["measure", "lambda", "report", "z"],
        Command::Sule => &["generator", "report", "eps_list", "beta"],
        Command::Dynamics => &[
            "lattice", "psi", "observable", "gauge", "T_grid", "check", "budget", "adaptive", "component", "draws", "p",
        ],
    }
}

type Out = (Table, Value);

fn gauge_compare(p: &mut Params) -> Result<Out> {
    let rho = p.gauge("rho")?;
    let xi = p.gauge("xi")?;
    let s_grid = p.grid("s_grid", gauge::default_s_grid())?;
    let tcfg: TrendConfig = p.or("trend", TrendConfig::default())?;
    let ord = gauge::compare(&rho, &xi, &s_grid, &tcfg)?;
    let mut t = Table::new(format!("gauge-compare {} vs {}: s, ln rho(e^-s), ln xi(e^-s), difference", rho.name(), xi.name()), &["s", "log_rho", "log_xi", "log_ratio"]);
    for s in &s_grid {
        let (a, b) = (rho.log_form(*s), xi.log_form(*s));
        t.push(vec![f(*s), f(a), f(b), f(a - b)]);
    }
    Ok((t, json!({ "rho": rho.name(), "xi": xi.name(), "ordering": to_json(&ord) })))
}

fn set_dim(p: &mut Params) -> Result<Out> {
    let spec: TreeSpec = p.req("tree")?;
    let tree = CoverTree::from_spec(spec).map_err(|e| invalid("tree", e.to_string()))?;
    let family = p.family("family")?;
    let k_range: (usize, usize) = p.or("k_range", (5, 60))?;
    let tol: f64 = p.or("tol", 0.005)?;
    let vcfg: VerdictConfig = p.or("verdict", VerdictConfig::default())?;
    let r = hausdorff_set::set_dimension_report(&tree, &family, k_range, tol, &vcfg)?;
    let mut t = Table::new(format!("set-dim in family {}: probed index, cover-sum verdict", family.name()), &["alpha", "verdict"]);
    for (a, v) in &r.scan {
        t.push(vec![f(*a), format!("{v:?}")]);
    }
    Ok((t, to_json(&r)))
}

fn measure_dim(p: &mut Params) -> Result<Out> {
    let mu = p.measure("measure")?;
    let family = p.family("family")?;
    let dcfg: DimensionConfig = p.or("config", DimensionConfig::default())?;
    let eps = p.grid("eps_grid", measure::default_eps_grid(&mu))?;
    let r = measure::measure_dimension_with(&mu, &family, &eps, &dcfg)?;
    let mut t = Table::new(format!("measure-dim in family {}: probed index, measure class", family.name()), &["alpha", "class"]);
    for (a, c) in &r.scan {
        t.push(vec![f(*a), format!("{c:?}")]);
    }
    Ok((t, to_json(&r)))
}

fn borel_scan(p: &mut Params) -> Result<Out> {
    let mu = p.measure("measure")?;
    let rho = p.gauge("gauge")?;
    let points: Vec<f64> = p.req("points")?;
    let eps = p.grid("eps_grid", measure::default_eps_grid(&mu))?;
    let mut t = Table::new(
        format!("borel-scan with {}: x, eps, Im F(x + i eps), ln(M/rho), ln((eps/rho) Im F)", rho.name()),
        &["x", "eps", "im_f", "log_mass_ratio", "log_borel_ratio"],
    );
    let mut reports = Vec::new();
    for &x in &points {
        let r = borel::hausborel_compare(&mu, x, &rho, &eps)?;
        for ((e, m), b) in r.mass.epsilons.iter().zip(&r.mass.log_ratios).zip(&r.borel.log_ratios) {
            let im = borel::borel_transform(&mu, Complex64::new(x, *e))?.value.im;
            t.push(vec![f(x), f(*e), f(im), f(*m), f(*b)]);
        }
        reports.push(json!({
            "x": x,
            "mass_class": to_json(&r.mass_class),
            "borel_class": to_json(&r.borel_class),
            "borel_abs_verdict": to_json(&r.borel_abs_verdict),
            "consistent": r.consistent,
        }));
    }
    Ok((t, json!({ "gauge": rho.name(), "points": reports })))
}

fn boole(p: &mut Params) -> Result<Out> {
    let mu = p.measure("measure")?;
    let lambdas = p.grid("lambdas", vec![10.0, 50.0, 100.0])?;
    let rows = borel::boole_check(&mu, &lambdas)?;
    let mut t = Table::new("boole: lambda, |{|F| > lambda}|, 2/lambda, relative error", &["lambda", "measured", "exact", "rel_err"]);
    for r in &rows {
        t.push(vec![f(r.lambda), f(r.measured), f(r.exact), f(r.rel_err)]);
    }
    Ok((t, json!({ "rows": to_json(&rows) })))
}

fn operator(p: &mut Params) -> Result<HalfLineOperator> {
    let spec: PotentialSpec = p.req("potential")?;
    let theta: f64 = p.or("theta", 0.0)?;
    let pot = Potential::from_spec(&spec).map_err(|e| invalid("potential", e.to_string()))?;
    HalfLineOperator::new(pot, theta).map_err(|e| invalid("theta", e.to_string()))
}

fn lyapunov(p: &mut Params) -> Result<Out> {
    let h = operator(p)?;
    let energies = p.grid("energies", linspace(-1.9, 1.9, 21))?;
    let n_max: usize = p.or("n_max", 100_000)?;
    if n_max < 10 {
        return Err(invalid("n_max", "must be at least 10"));
    }
    let lcfg: LyapunovConfig = p.or("config", LyapunovConfig::default())?;
    let schedule = halfline::default_schedule(n_max);
    let reports: Vec<_> = energies.par_iter().map(|e| halfline::upper_lyapunov(&h, *e, &schedule, &lcfg)).collect();
    let mut t = Table::new(format!("lyapunov n_max = {n_max}: energy, max of (1/n) ln ||Phi_n|| over the last decade, positivity flag"), &["E", "estimate", "positive_flag"]);
    for r in &reports {
        t.push(vec![f(r.energy), f(r.estimate), r.positive.to_string()]);
    }
    let summary: Vec<Value> = reports.iter().map(|r| json!({ "energy": r.energy, "estimate": r.estimate, "witness_n": r.witness_n, "positive": r.positive })).collect();
    Ok((t, json!({ "rows": summary })))
}

fn subordinacy(p: &mut Params) -> Result<Out> {
    let h = operator(p)?;
    let rho = p.gauge("gauge")?;
    let energies = p.grid("energies", vec![0.0])?;
    let ls = p.grid("l_schedule", geomspace(10.0, 1e5, 41))?;
    let reports: Vec<_> = energies.par_iter().map(|e| halfline::subordinacy_functional(&h, *e, &rho, &ls, &TrendConfig::default())).collect();
    let mut t = Table::new(format!("subordinacy with {}: energy, L, ln functional", rho.name()), &["E", "L", "log_functional"]);
    for r in &reports {
        for (l, v) in &r.trace {
            t.push(vec![f(r.energy), f(*l), f(*v)]);
        }
    }
    let summary: Vec<Value> = reports.iter().map(|r| json!({ "energy": r.energy, "verdict": to_json(&r.verdict) })).collect();
    Ok((t, json!({ "gauge": rho.name(), "rows": summary })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BarrierReport {
    Expbound,
    Fndelta,
    Green,
    SingleStep,
    FreeStretch,
}

fn sparse_barrier_cmd(p: &mut Params) -> Result<Out> {
    let spec: ProfileSpec = p.or("profile", ProfileSpec { beta: sparse_barrier::BetaSpec::Exp, eta: 1.0 })?;
    let profile = BarrierProfile::new(spec).map_err(|e| invalid("profile", e.to_string()))?;
    let k: usize = p.or("K", 3)?;
    let scales = sparse_barrier::build_scales(&profile, k, DEFAULT_CAP)?;
    let report: BarrierReport = p.req("report")?;
    let energies = p.grid("energies", linspace(-1.9, 1.9, 9))?;
    let eps: f64 = p.or("eps", 0.5)?;
    match report {
        BarrierReport::Expbound => {
            let n: (usize, usize) = p.or("n_range", (2, 2))?;
            let m_per: usize = p.or("m_per_scale", 1)?;
            let m_cap: u64 = p.or("m_cap", 1)?;
            let rows = sparse_barrier::expbound_check(&profile, &scales, &energies, eps, n.0..=n.1, m_per, m_cap)?;
            let mut t = Table::new("sparse-barrier expbound: n, m, E, ln||Phi_m||, lower, upper, satisfied, margin", &["n", "m", "E", "ln_norm", "lower", "upper", "satisfied", "margin"]);
            for r in &rows {
                t.push(vec![r.n.to_string(), r.m.to_string(), f(r.energy), f(r.ln_norm), f(r.lower), f(r.upper), r.satisfied.to_string(), f(r.margin)]);
            }
            Ok((t, json!({ "rows": to_json(&rows) })))
        }
        BarrierReport::Fndelta => {
            let ns: Vec<usize> = p.or("n", vec![2, 3])?;
            let delta: f64 = p.or("delta", 0.5)?;
            let mut default_grid = vec![0.0];
            default_grid.extend(geomspace(0.01, 1e9, 400));
            let grid = p.grid("ln_l_grid", default_grid)?;
            let mut t = Table::new("sparse-barrier fndelta: n, ln l, ln F_{n,delta}(l), case, below boundary", &["n", "ln_l", "ln_f", "case", "below_boundary"]);
            let mut reps = Vec::new();
            for n in ns {
                let r = sparse_barrier::f_n_delta(&profile, &scales, n, delta, &grid, eps)?;
                for row in &r.rows {
                    t.push(vec![n.to_string(), f(row.ln_l), f(row.ln_f), format!("{:?}", row.case), row.below_boundary.to_string()]);
                }
                reps.push(json!({ "n": n, "ln_min": r.ln_min, "ln_boundary": r.ln_boundary }));
            }
            Ok((t, json!({ "rows": reps })))
        }
        BarrierReport::Green => {
            let kk: usize = p.or("k", 2)?;
            let z: (f64, f64) = p.or("z", (0.3, 1e-3))?;
            let offsets: Vec<usize> = p.or("offsets", vec![1, 3, 10])?;
            let h = sparse_barrier::potential(&profile, &scales).operator(0.0)?;
            let lk = scales.get(kk)? as usize;
            let ns: Vec<usize> = offsets.iter().map(|o| lk + o).collect();
            let rows = sparse_barrier::green_identity_check(&h, lk, &ns, Complex64::new(z.0, z.1), &Default::default())?;
            let mut t = Table::new(format!("sparse-barrier green at L_{kk} = {lk}: n, truncation, relative errors of both factorizations"), &["n", "truncation", "rel_err", "var_rel_err"]);
            for r in &rows {
                t.push(vec![r.n.to_string(), r.truncation.to_string(), f(r.rel_err), f(r.var_rel_err)]);
            }
            Ok((t, json!({ "rows": to_json(&rows) })))
        }
        BarrierReport::SingleStep => {
            let rows = sparse_barrier::single_step_check(&profile, &scales, &energies);
            let mut t = Table::new("sparse-barrier single_step: k, E, ln V, ln||T||, ln max{1, V-2}, ln(V+3), holds", &["k", "E", "ln_v", "ln_norm", "ln_lower", "ln_upper", "holds"]);
            for r in &rows {
                t.push(vec![r.k.to_string(), f(r.energy), f(r.ln_v), f(r.ln_norm), f(r.ln_lower), f(r.ln_upper), r.holds.to_string()]);
            }
            Ok((t, json!({ "all_hold": rows.iter().all(|r| r.holds) })))
        }
        BarrierReport::FreeStretch => {
            let kk: usize = p.or("k", 2)?;
            let m_cap: u64 = p.or("m_cap", 20_000)?;
            let rows = sparse_barrier::free_stretch_check(&profile, &scales, &energies, kk, m_cap)?;
            let mut t = Table::new("sparse-barrier free_stretch: k, E, C_I, min and max ||Phi||, holds", &["k", "E", "c_i", "min_norm", "max_norm", "holds"]);
            for r in &rows {
                t.push(vec![r.k.to_string(), f(r.energy), f(r.c_i), f(r.min_norm), f(r.max_norm), r.holds.to_string()]);
            }
            Ok((t, json!({ "all_hold": rows.iter().all(|r| r.holds) })))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RankOneReport {
    Eigen,
    Transform,
}

fn rank_one_cmd(p: &mut Params) -> Result<Out> {
    let mu = p.measure("measure")?;
    let lambda: f64 = p.req("lambda")?;
    let report: RankOneReport = p.or("report", RankOneReport::Eigen)?;
    let pert = RankOnePerturbation::new(mu, lambda).map_err(|e| invalid("measure", e.to_string()))?;
    match report {
        RankOneReport::Eigen => {
            let spec = rank_one::perturbed_spectrum(&pert)?;
            let mut t = Table::new(format!("rank-one lambda = {lambda}: eigenvalue, weight"), &["x", "weight"]);
            for (x, w) in &spec {
                t.push(vec![f(*x), f(*w)]);
            }
            let mass: f64 = spec.iter().map(|s| s.1).sum();
            Ok((t, json!({ "lambda": lambda, "count": spec.len(), "mass": mass })))
        }
        RankOneReport::Transform => {
            let zs: Vec<(f64, f64)> = p.or("z", vec![(0.0, 1.0)])?;
            let mut t = Table::new(format!("rank-one lambda = {lambda}: z, F(z), F_lambda(z)"), &["re_z", "im_z", "re_f", "im_f", "re_f_lambda", "im_f_lambda"]);
            for (a, b) in zs {
                let r = rank_one::perturbed_transform(&pert, Complex64::new(a, b))?;
                t.push(vec![f(a), f(b), f(r.f.re), f(r.f.im), f(r.value.re), f(r.value.im)]);
            }
            Ok((t, json!({ "lambda": lambda })))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum SuleReport {
    Weights,
    #[serde(alias = "dimension_bound")]
    DimensionBound,
}

fn sule(p: &mut Params, seed: u64) -> Result<Out> {
    let g: SuleGenerator = p.or("generator", SuleGenerator::default())?;
    let report: SuleReport = p.or("report", SuleReport::Weights)?;
    let model = rank_one::generate_sule(&g, seed).map_err(|e| invalid("generator", e.to_string()))?;
    match report {
        SuleReport::Weights => {
            let amps = model.origin_amplitudes();
            let mut idx: Vec<usize> = (0..amps.len()).collect();
            idx.sort_by(|a, b| amps[*b].abs().partial_cmp(&amps[*a].abs()).unwrap().then(a.cmp(b)));
            let mut t = Table::new("sule weights sorted by size: rank, energy, center, phi_n(0), |phi_n(0)|^2", &["rank", "energy", "center", "amplitude", "weight"]);
            for (r, i) in idx.iter().enumerate() {
                let e = &model.eigen[*i];
                t.push(vec![(r + 1).to_string(), f(e.energy), e.center[0].to_string(), f(amps[*i]), f(amps[*i] * amps[*i])]);
            }
            let fit = rank_one::decay_fit(&amps, 1)?;
            Ok((t, json!({ "fit": to_json(&fit), "alpha_fit": model.alpha_fit, "c_delta": model.c_delta })))
        }
        SuleReport::DimensionBound => {
            let eps: Vec<f64> = p.or("eps_list", vec![0.25, 0.1, 0.05])?;
            let beta: f64 = p.or("beta", 1.5)?;
            let b = rank_one::sule_dimension_bound(&model, &eps, beta)?;
            let ord = gauge::compare(&b.cover.bound, &GaugeFunction::log_power(1.0)?, &gauge::default_s_grid(), &TrendConfig::default())?;
            let mut t = Table::new("sule dimension-bound: eps, t exponent, tested member, cover-sum verdict", &["eps", "exponent", "member", "verdict"]);
            for c in &b.cover.checks {
                t.push(vec![f(c.eps), f(c.exponent), c.member.clone(), format!("{:?}", c.verdict)]);
            }
            Ok((t, json!({ "bound": to_json(&b), "bound_vs_log_power_1": to_json(&ord) })))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PsiSpec {
    Site(Vec<i64>),
    Vector { vector: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DynCheck {
    Average,
    Something,
    Posbd,
    Dyncompres,
}

fn parse_observable(s: &str) -> Option<Observable> {
    let (kind, arg) = s.split_once(':')?;
    let x: f64 = arg.trim().parse().ok()?;
    match kind.trim() {
        "moment" => Some(Observable::Moment { m: x }),
        "proj" => Some(Observable::Projection { radius: x }),
        _ => None,
    }
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / nrm).collect()
}

fn dynamics_cmd(p: &mut Params, seed: u64) -> Result<Out> {
    let spec: LatticeSpec = p.req("lattice")?;
    let psi: PsiSpec = p.or("psi", PsiSpec::Site(vec![0]))?;
    let obs_s: String = p.or("observable", "moment:2".to_string())?;
    let obs = parse_observable(&obs_s).ok_or_else(|| invalid("observable", "expected moment:<m> or proj:<N>"))?;
    let rho = p.gauge_or("gauge", GaugeFunction::power(1.0)?)?;
    let ts = p.grid("T_grid", geomspace(50.0, 400.0, 8))?;
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(invalid("T_grid", "times must be positive"));
    }
    let check: DynCheck = p.or("check", DynCheck::Average)?;
    let budget: f64 = p.or("budget", dynamics::DEFAULT_LEAKAGE_BUDGET)?;
    let adaptive: bool = p.or("adaptive", false)?;
    let component: bool = p.or("component", false)?;
    let draws: usize = p.or("draws", 16)?;
    let schatten_p: u32 = p.or("p", 2)?;
    let t_max = ts.iter().cloned().fold(0.0, f64::max);
    let plan = match (&psi, adaptive) {
        (PsiSpec::Site(s), true) => dynamics::adaptive_plan(&spec, s, t_max, budget, 4096)?,
        (_, true) => return Err(invalid("adaptive", "needs a site initial state")),
        (PsiSpec::Site(s), false) => {
            let ham = LatticeHamiltonian::new(spec).map_err(|e| invalid("lattice", e.to_string()))?;
            let i = ham.site_index(s).ok_or_else(|| invalid("psi", "site outside the box"))?;
            let mut v = vec![0.0; ham.dim()];
            v[i] = 1.0;
            EvolutionPlan::new(ham, v, budget)?
        }
        (PsiSpec::Vector { vector }, false) => {
            let ham = LatticeHamiltonian::new(spec).map_err(|e| invalid("lattice", e.to_string()))?;
            EvolutionPlan::new(ham, vector.clone(), budget).map_err(|e| invalid("psi", e.to_string()))?
        }
    };
    let plan = if component {
        let c = dynamics::uph_component(&plan, &rho)?.ok_or_else(|| Error::HypothesisNotCertified("no energy window of psi is certified".into()))?;
        let v = plan.window_component(c.window.0, c.window.1);
        let nrm = c.mass.sqrt();
        let mut q = plan.with_psi(v.iter().map(|x| x / nrm).collect())?;
        // the sharp window leaves a tail at the box edge from t = 0
        q.budget = q.budget.max(1e-3);
        q
    } else {
        plan
    };
    let radius = plan.hamiltonian().spec.radius;
    let head = format!("dynamics box radius {radius}, observable {obs_s}, gauge {}", rho.name());
    match check {
        DynCheck::Average => {
            let av = dynamics::average_over(&plan, &obs, &ts, Quadrature::Exact)?;
            let mut t = Table::new(format!("{head}: T, time average, bound (none), pass (none)"), &["T", "value", "bound", "pass"]);
            for a in &av {
                t.push(vec![f(a.t), f(a.value), String::new(), String::new()]);
            }
            let unitary = av.iter().all(|a| (a.norm - 1.0).abs() < 1e-10);
            Ok((t, json!({ "radius": radius, "rows": to_json(&av), "unitary": unitary })))
        }
        DynCheck::Something => {
            let n = plan.hamiltonian().dim();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut phis = vec![plan.psi().to_vec()];
            phis.extend((0..draws).map(|_| random_unit(n, &mut rng)));
            let r = dynamics::check_somethinglemma(&plan, &phis, &rho, &ts)?;
            let mut t = Table::new(format!("{head}: phi index (0 = psi, then random draws), T, <|<phi, psi(t)>|^2>_T, C rho(1/T) with the fitted C, pass"), &["index", "T", "value", "bound", "pass"]);
            for row in &r.rows {
                t.push(vec![row.index.to_string(), f(row.t), f(row.value), f(r.c_fit * row.bound), r.pass.to_string()]);
            }
            Ok((t, json!({ "c_fit": r.c_fit, "pass": r.pass, "certificate": to_json(&r.certificate) })))
        }
        DynCheck::Posbd => {
            let m = match obs {
                Observable::Moment { m } => m,
                _ => return Err(invalid("observable", "posbd needs moment:<m>")),
            };
            let r = dynamics::check_posbd(&plan, &rho, m, &ts)?;
            let mut t = Table::new(format!("{head}: T, <<|X|^m>>_T, C rho(1/T)^(-m/nu) with the fitted C, pass"), &["T", "value", "bound", "pass"]);
            for row in &r.rows {
                t.push(vec![f(row.t), f(row.value), f(r.c_fit * row.envelope), r.pass.to_string()]);
            }
            Ok((t, json!({ "c_fit": r.c_fit, "exponent": r.exponent, "pass": r.pass, "component": to_json(&r.component), "n_t": r.rows.iter().map(|x| x.n_t).collect::<Vec<_>>() })))
        }
        DynCheck::Dyncompres => {
            let radius = match obs {
                Observable::Projection { radius } => radius,
                _ => return Err(invalid("observable", "dyncompres needs proj:<N>")),
            };
            let triples = dynamics::projection_triples(plan.hamiltonian(), radius);
            let r = dynamics::check_dyncompres(&plan, &triples, schatten_p, &rho, &ts)?;
            let mut t = Table::new(format!("{head}: T, <|<P_N>|>_T, C^(1/p) ||P_N||_p rho(1/T)^(1/p), pass"), &["T", "value", "bound", "pass"]);
            for row in &r.rows {
                t.push(vec![f(row.t), f(row.value), f(row.bound), (row.value <= row.bound * (1.0 + 1e-10)).to_string()]);
            }
            Ok((t, json!({ "schatten": r.schatten, "c_psi": r.c_psi, "pass": r.pass })))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_gauge_name_is_named() {
        let cfg = RunConfig::new(Command::GaugeCompare, json!({"rho": {"name": "powr", "params": {"alpha": 1}}, "xi": {"name": "power", "params": {"alpha": 0.5}}}), 0);
        match run(&cfg) {
            Err(Error::ConfigInvalid { field, .. }) => assert_eq!(field, "rho.name"),
            other => panic!("{other:?}"),
        }
        let cfg = RunConfig::new(Command::Lyapunov, json!({"potential": {"kind": "constant", "value": 0}, "bogus": 1}), 0);
        assert!(matches!(run(&cfg), Err(Error::ConfigInvalid { field, .. }) if field == "bogus"));
        let cfg = RunConfig::new(Command::Lyapunov, json!({"potential": {"kind": "constant", "valu": 0}}), 0);
        assert!(matches!(run(&cfg), Err(Error::ConfigInvalid { field, .. }) if field.starts_with("potential")));
    }

    #[test]
    fn csv_has_comment_header_and_echo() {
        let cfg = RunConfig::new(Command::Boole, json!({"measure": {"atoms": [[0.0, 0.5], [1.0, 0.5]]}}), 7);
        let out = run(&cfg).unwrap();
        assert!(out.csv.starts_with("# "));
        assert_eq!(out.csv.lines().nth(1).unwrap(), "lambda,measured,exact,rel_err");
        let doc: Value = serde_json::from_str(&out.json).unwrap();
        let echo = RunConfig::from_value(doc["config"].clone()).unwrap();
        assert_eq!(run(&echo).unwrap(), out);
    }

    #[test]
    fn seed_is_injected() {
        let mut v = json!({"potential": {"kind": "random", "amplitude": 1.0}, "x": [{"kind": "random"}]});
        inject_seed(&mut v, 9);
        assert_eq!(v["potential"]["seed"], json!(9));
        assert_eq!(v["x"][0]["seed"], json!(9));
    }

    #[test]
    fn observable_strings() {
        assert_eq!(parse_observable("moment:2"), Some(Observable::Moment { m: 2.0 }));
        assert_eq!(parse_observable("proj:32"), Some(Observable::Projection { radius: 32.0 }));
        assert_eq!(parse_observable("spin:1"), None);
    }
}
