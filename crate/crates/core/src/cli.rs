//! Command runner behind the `singorb` binary.
//!
//! Every run writes `config.json` (enough to replay it) and `report.json`
//! to the output directory, plus CSV tables for commands that produce
//! them. Exit code 0 means every check passed, 1 that a check failed, 2
//! that the input could not be used.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::counterexample_gen as cx;
use crate::equivariant_averaging::{self as avg, ActionFile};
use crate::error::Error;
use crate::expr::{HamiltonianExpr, Layout};
use crate::flows::{self, FieldSource, MomentMap, PathFieldOptions, Region};
use crate::linalg;
use crate::linear_models::{LinearModel, ModelAutomorphism, ModelDescriptor, ModelPoint};
use crate::mineur_actions::{self as mineur, PeriodOptions, PlanarSystem, PrimitiveTag};
use crate::par;
use crate::symplectic_linear::{self as sl, ClassificationReport, ClassifyOptions, FamilyFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// What to run. Input files are read relative to the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    /// Williamson type of a quadratic family (JSON family file).
    Classify { input: PathBuf, m: usize },
    /// Linear model: moment map on a grid and structure of random
    /// automorphisms (JSON descriptor file).
    Model { input: PathBuf },
    /// Trajectory of `X_H` from a point.
    Flow { hamiltonian: String, point: Vec<f64>, time: f64 },
    /// Exponential map of `X_H`, checked against a moment map.
    Exp { hamiltonian: String, moment: Vec<String>, radius: f64 },
    /// Field recovered from the path `t ↦ φ_Z^t`.
    Pathinv { hamiltonian: String, moment: Vec<String>, samples: usize },
    /// Averaging linearization of a finite action (JSON action file).
    Average { input: PathBuf },
    /// Action profile of a planar system.
    Actions {
        hamiltonian: String,
        e_min: f64,
        e_max: f64,
        tag: String,
        radius: f64,
    },
    /// Nonresonant degenerate example.
    Counterexample {
        gamma: Vec<f64>,
        regions: usize,
        epsilon: f64,
        bound: i64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify { .. } => "classify",
            Command::Model { .. } => "model",
            Command::Flow { .. } => "flow",
            Command::Exp { .. } => "exp",
            Command::Pathinv { .. } => "pathinv",
            Command::Average { .. } => "average",
            Command::Actions { .. } => "actions",
            Command::Counterexample { .. } => "counterexample",
        }
    }

    fn default_tol(&self) -> f64 {
        match self {
            Command::Classify { .. } => 1e-8,
            Command::Model { .. } => 1e-10,
            Command::Flow { .. } | Command::Actions { .. } | Command::Counterexample { .. } => 1e-12,
            Command::Exp { .. } | Command::Pathinv { .. } | Command::Average { .. } => 1e-10,
        }
    }

    fn default_grid(&self) -> usize {
        match self {
            Command::Classify { .. } => 0,
            Command::Model { .. } => 3,
            Command::Flow { .. } => 100,
            Command::Exp { .. } | Command::Pathinv { .. } => 25,
            Command::Average { .. } => 12,
            Command::Actions { .. } => 10,
            Command::Counterexample { .. } => 8,
        }
    }

    fn default_trials(&self) -> usize {
        match self {
            Command::Classify { .. } => 5,
            Command::Model { .. } => 10,
            _ => 0,
        }
    }
}

/// A complete, replayable invocation. `None` fields take the command's
/// default, which is written into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub format: Format,
    /// Not serialized, so that reports do not depend on where they go.
    #[serde(skip, default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Settings after defaults are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolved {
    pub tol: f64,
    pub grid: usize,
    pub trials: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            command,
            tol: None,
            grid: None,
            seed: 0,
            trials: None,
            format: Format::Json,
            out: out.into(),
        }
    }

    pub fn resolved(&self) -> Resolved {
        Resolved {
            tol: self.tol.unwrap_or_else(|| self.command.default_tol()),
            grid: self.grid.unwrap_or_else(|| self.command.default_grid()),
            trials: self.trials.unwrap_or_else(|| self.command.default_trials()),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: PathBuf,
    pub message: String,
}

/// Failure of a run: bad input (exit 2) or a failed computation (exit 1).
#[derive(Debug)]
enum Failure {
    Input(String, String),
    Check(String, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        let kind = format!("{e:?}");
        let kind = kind.split([' ', '(', '{']).next().unwrap_or("").to_string();
        if is_input_error(&e) {
            Failure::Input(kind, e.to_string())
        } else {
            Failure::Check(kind, e.to_string())
        }
    }
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Syntax { .. }
            | Error::UnknownIdentifier(_)
            | Error::Dimension { .. }
            | Error::Arity { .. }
            | Error::ModelConstruction(_)
            | Error::Precondition(_)
            | Error::Domain(_)
    )
}

fn input_err(kind: &str, msg: impl Into<String>) -> Failure {
    Failure::Input(kind.to_string(), msg.into())
}

struct Artifacts {
    passed: bool,
    result: Value,
    /// `(file name, contents)`.
    files: Vec<(String, String)>,
}

/// Runs `cfg` and writes its artifacts. Never panics on bad input.
pub fn run(cfg: &RunConfig) -> Outcome {
    let res = cfg.resolved();
    let report_path = cfg.out.join("report.json");
    let outcome = execute(cfg, &res);
    let (status, code, result, error, files) = match outcome {
        Ok(a) => {
            let (s, c) = if a.passed { ("pass", 0) } else { ("fail", 1) };
            (s, c, a.result, Value::Null, a.files)
        }
        Err(Failure::Check(kind, msg)) => ("fail", 1, Value::Null, json!({"kind": kind, "message": msg}), vec![]),
        Err(Failure::Input(kind, msg)) => ("error", 2, Value::Null, json!({"kind": kind, "message": msg}), vec![]),
    };
    let report = json!({
        "command": cfg.command.name(),
        "config": cfg,
        "resolved": res,
        "status": status,
        "exit_code": code,
        "result": result,
        "error": error,
    });
    let mut message = format!("{}: {status}", cfg.command.name());
    if let Some(m) = report["error"]["message"].as_str() {
        message.push_str(": ");
        message.push_str(m);
    }
    let written = fs::create_dir_all(&cfg.out)
        .map_err(|e| e.to_string())
        .and_then(|_| write_atomic(&cfg.out.join("config.json"), &to_pretty(&json!(cfg))))
        .and_then(|_| write_atomic(&report_path, &to_pretty(&report)))
        .and_then(|_| {
            files
                .iter()
                .try_for_each(|(name, body)| write_atomic(&cfg.out.join(name), body))
        });
    match written {
        Ok(()) => Outcome {
            exit_code: code,
            report: report_path,
            message,
        },
        Err(e) => Outcome {
            exit_code: 2,
            report: report_path,
            message: format!("cannot write to {}: {e}", cfg.out.display()),
        },
    }
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, body: &str) -> std::result::Result<(), String> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| e.to_string())?;
    tmp.write_all(body.as_bytes()).map_err(|e| e.to_string())?;
    tmp.persist(path).map_err(|e| e.to_string())?;
    Ok(())
}

/// Loads a saved `config.json`.
pub fn load_config(path: &Path, out: PathBuf) -> std::result::Result<RunConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    cfg.out = out;
    Ok(cfg)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input_err("Io", format!("{}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(input_err("EmptyInput", format!("{} is empty", path.display())));
    }
    serde_json::from_str(&text).map_err(|e| input_err("Json", format!("{}: {e}", path.display())))
}

fn value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

/// Fixed-precision CSV number.
fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.into_iter().map(num).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn layout_of(texts: &[&str]) -> Result<Layout, Failure> {
    let mut l = Layout::fiber(0);
    for t in texts {
        let e = HamiltonianExpr::parse(t)?;
        let k = e.layout();
        l = Layout::new(l.action_pairs.max(k.action_pairs), l.fiber_pairs.max(k.fiber_pairs));
    }
    if l.dof() == 0 {
        return Err(input_err("Layout", "expressions use no coordinates"));
    }
    Ok(l)
}

fn execute(cfg: &RunConfig, r: &Resolved) -> Result<Artifacts, Failure> {
    if !(r.tol > 0.0 && r.tol.is_finite()) {
        return Err(input_err("Config", "tolerance must be positive"));
    }
    match &cfg.command {
        Command::Classify { input, m } => classify(input, *m, r),
        Command::Model { input } => model(input, r),
        Command::Flow { hamiltonian, point, time } => flow(hamiltonian, point, *time, r, cfg.format),
        Command::Exp { hamiltonian, moment, radius } => exp(hamiltonian, moment, *radius, r),
        Command::Pathinv {
            hamiltonian,
            moment,
            samples,
        } => pathinv(hamiltonian, moment, *samples, r),
        Command::Average { input } => average(input, r, cfg.grid, cfg.format),
        Command::Actions {
            hamiltonian,
            e_min,
            e_max,
            tag,
            radius,
        } => actions(hamiltonian, *e_min, *e_max, tag, *radius, r, cfg.format),
        Command::Counterexample {
            gamma,
            regions,
            epsilon,
            bound,
        } => counterexample(gamma, *regions, *epsilon, *bound, r, cfg.format),
    }
}

fn classify(input: &Path, m: usize, r: &Resolved) -> Result<Artifacts, Failure> {
    let file: FamilyFile = read_json(input)?;
    let fam = file.into_family()?;
    let opts = ClassifyOptions {
        trials: r.trials.max(1),
        eps: r.tol,
        seed: r.seed,
    };
    let c = sl::williamson_type(&fam, m, &opts)?;
    Ok(Artifacts {
        passed: true,
        result: json!({
            "classification": ClassificationReport::from(&c),
            "symmetry_defect": c.symmetry_defect,
        }),
        files: vec![],
    })
}

/// Pairs compared for commutativity in the `model` command.
pub const COMMUTATIVITY_THRESHOLD: f64 = 1e-12;

fn model(input: &Path, r: &Resolved) -> Result<Artifacts, Failure> {
    let d: ModelDescriptor = read_json(input)?;
    let model = LinearModel::from_descriptor(&d)?;
    let grid = model.sample_grid(r.grid.max(2));
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let mut autos = vec![model.identity_automorphism()];
    autos.extend((0..r.trials).map(|_| ModelAutomorphism::random(&model.wtype, &mut rng)));
    let maps = autos
        .iter()
        .map(|a| a.to_numeric_map())
        .collect::<crate::Result<Vec<_>>>()?;
    let structure = crate::linear_models::verify_linear_action_structure(&model, &maps, &grid, r.tol)?;
    let mut commutator = 0.0f64;
    for w in autos.windows(2) {
        for z in &grid {
            let pt = ModelPoint::from_flat(model.m, z);
            let ab = model.apply_automorphism(&w[0], &model.apply_automorphism(&w[1], &pt)?)?;
            let ba = model.apply_automorphism(&w[1], &model.apply_automorphism(&w[0], &pt)?)?;
            commutator = commutator.max(point_distance(&ab, &ba));
        }
    }
    let moments: Vec<Vec<f64>> = grid.iter().map(|z| model.moment_flat(z)).collect();
    Ok(Artifacts {
        passed: structure.passed && commutator < COMMUTATIVITY_THRESHOLD,
        result: json!({
            "descriptor": model.descriptor(),
            "gamma_order": model.gamma.order(),
            "moment_map": model.moment_exprs(),
            "grid": grid,
            "moment_values": moments,
            "automorphisms": autos,
            "structure": structure,
            "commutator": commutator,
            "commutator_threshold": COMMUTATIVITY_THRESHOLD,
        }),
        files: vec![],
    })
}

/// Distance on the model, with torus coordinates compared mod 1.
pub fn point_distance(a: &ModelPoint, b: &ModelPoint) -> f64 {
    let dq = a
        .q
        .iter()
        .zip(&b.q)
        .map(|(u, v)| crate::linear_models::wrap_centered(u - v).abs());
    let rest = a
        .p
        .iter()
        .zip(&b.p)
        .chain(a.xy.iter().zip(&b.xy))
        .map(|(u, v)| (u - v).abs());
    dq.chain(rest).fold(0.0, f64::max)
}

/// Energy drift allowed in the `flow` command, relative to the tolerance.
pub const DRIFT_FACTOR: f64 = 1e3;

fn flow(h: &str, point: &[f64], time: f64, r: &Resolved, format: Format) -> Result<Artifacts, Failure> {
    let layout = layout_of(&[h])?;
    if point.len() != layout.dim() {
        return Err(Error::Dimension {
            expected: layout.dim(),
            found: point.len(),
        }
        .into());
    }
    let hx = HamiltonianExpr::parse_on(h, layout)?;
    let field = FieldSource::hamiltonian(hx.clone());
    let trace = flows::flow_trace(&field, time, point, r.grid.max(1), r.tol)?;
    let drift = trace
        .iter()
        .map(|(_, z)| (hx.eval(z.as_slice()) - hx.eval(point)).abs())
        .fold(0.0, f64::max);
    let budget = DRIFT_FACTOR * r.tol * (1.0 + hx.eval(point).abs());
    let mut header = vec!["t".to_string()];
    header.extend((0..layout.dim()).map(|s| layout.var_at(s).to_string()));
    let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows = trace.iter().map(|(t, z)| std::iter::once(*t).chain(z.iter().copied()).collect());
    let table = csv(&hdr, rows);
    let end = trace.last().map(|(_, z)| z.clone()).unwrap_or_default();
    let mut result = json!({
        "layout": layout,
        "end": end,
        "energy_drift": drift,
        "drift_budget": budget,
    });
    let files = match format {
        Format::Csv => vec![("trace.csv".to_string(), table)],
        Format::Json => {
            result["trace"] = value(&trace);
            vec![]
        }
    };
    Ok(Artifacts {
        passed: drift < budget,
        result,
        files,
    })
}

fn parse_moment(moment: &[String], layout: Layout) -> Result<MomentMap, Failure> {
    let texts: Vec<&str> = moment.iter().map(|s| s.as_str()).collect();
    Ok(MomentMap::parse(&texts, layout)?)
}

fn exp(h: &str, moment: &[String], radius: f64, r: &Resolved) -> Result<Artifacts, Failure> {
    let mut texts: Vec<&str> = vec![h];
    texts.extend(moment.iter().map(|s| s.as_str()));
    let layout = layout_of(&texts)?;
    let mm = parse_moment(moment, layout)?;
    let field = FieldSource::parse(h, layout)?;
    let region = Region::cube(layout.dim(), radius);
    let tangency = flows::check_in_algebra(&field, &mm, &region)?;
    let map = flows::exponential(&field, &mm, &region, r.tol)?;
    let probes = region.halton(r.grid.max(1));
    let rows = par::collect_results(par::map(&probes, |z| -> crate::Result<(f64, f64)> {
        let (v, jac) = map.value_and_jacobian(z)?;
        Ok((linalg::symplectic_residual(&jac), mm.residual(z, &v)))
    }))?;
    let symplectic = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let moment_res = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let budget = DRIFT_FACTOR * r.tol;
    Ok(Artifacts {
        passed: symplectic < budget && moment_res < budget,
        result: json!({
            "layout": layout,
            "tangency_residual": tangency,
            "probes": probes.len(),
            "symplectic_residual": symplectic,
            "moment_residual": moment_res,
            "budget": budget,
        }),
        files: vec![],
    })
}

fn pathinv(h: &str, moment: &[String], samples: usize, r: &Resolved) -> Result<Artifacts, Failure> {
    let mut texts: Vec<&str> = vec![h];
    texts.extend(moment.iter().map(|s| s.as_str()));
    let layout = layout_of(&texts)?;
    let mm = parse_moment(moment, layout)?;
    let field = FieldSource::parse(h, layout)?;
    let probes = avg::averaging_probes(layout.dim(), r.grid.max(1), 0.05);
    let rep = flows::recover_autonomous(&field, &probes, &mm, samples, r.tol, &PathFieldOptions::default())?;
    Ok(Artifacts {
        passed: rep.passed,
        result: value(&rep),
        files: vec![],
    })
}

fn average(input: &Path, r: &Resolved, grid: Option<usize>, format: Format) -> Result<Artifacts, Failure> {
    let mut file: ActionFile = read_json(input)?;
    if let Some(g) = grid {
        file.probes = g;
    }
    let (action, ctx) = file.build(r.tol)?;
    let res = avg::average(&action, &ctx)?;
    let mut files = vec![];
    if format == Format::Csv {
        let d = ctx.dim();
        let images = par::collect_results(par::map(&ctx.probes, |z| res.phi_g.apply(z)))?;
        let mut header: Vec<String> = (0..d).map(|i| format!("z{i}")).collect();
        header.extend((0..d).map(|i| format!("phi{i}")));
        let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let rows = ctx.probes.iter().zip(&images).map(|(z, w)| z.iter().chain(w).copied().collect());
        files.push(("phi.csv".to_string(), csv(&hdr, rows)));
    }
    Ok(Artifacts {
        passed: res.residual_report.passed,
        result: json!({
            "group_order": file.elements.len(),
            "samples": ctx.samples,
            "probes": ctx.probes,
            "residuals": res.residual_report,
        }),
        files,
    })
}

#[allow(clippy::too_many_arguments)]
fn actions(h: &str, e_min: f64, e_max: f64, tag: &str, radius: f64, r: &Resolved, format: Format) -> Result<Artifacts, Failure> {
    let tag = PrimitiveTag::parse(tag)?;
    let sys = PlanarSystem::parse(h, radius)?.with_tag(tag);
    let count = r.grid.max(1);
    if !(e_min.is_finite() && e_max.is_finite()) || (count > 1 && e_max <= e_min) {
        return Err(input_err("Config", "need e_min < e_max"));
    }
    let energies: Vec<f64> = (0..count)
        .map(|i| {
            if count == 1 {
                e_min
            } else {
                e_min + (e_max - e_min) * i as f64 / (count - 1) as f64
            }
        })
        .collect();
    let copts = mineur::CycleOptions::with_tol(r.tol);
    let profile = mineur::action_profile(&sys, &energies, &copts)?;
    let popts = PeriodOptions {
        cycle: copts,
        ..PeriodOptions::default()
    };
    let period = mineur::verify_period_one(&sys, &profile, &popts)?;
    let table = csv(
        &["E", "p", "period_residual"],
        profile
            .energies
            .iter()
            .zip(&profile.actions)
            .zip(&period.samples)
            .map(|((e, p), s)| vec![*e, *p, s.period_mismatch]),
    );
    let files = match format {
        Format::Csv => vec![("actions.csv".to_string(), table)],
        Format::Json => vec![],
    };
    Ok(Artifacts {
        passed: period.status == mineur::PeriodStatus::Pass && profile.monotone,
        result: json!({"tag": tag, "profile": profile, "period_check": period}),
        files,
    })
}

/// Thresholds of the `counterexample` checks.
pub const NONRESONANCE_THRESHOLD: f64 = 1e-9;
pub const QUADRATIC_PART_TOL: f64 = 1e-10;
pub const WITNESS_TOL: f64 = 1e-8;
pub const PRODUCT_TOL: f64 = 1e-6;

fn counterexample(gamma: &[f64], regions: usize, epsilon: f64, bound: i64, r: &Resolved, format: Format) -> Result<Artifacts, Failure> {
    if gamma.len() != 2 {
        return Err(input_err("Config", "the example is built for two frequencies"));
    }
    let nonres = cx::check_nonresonance(gamma, bound, NONRESONANCE_THRESHOLD)?;
    let sys = cx::desk_system(gamma, regions, epsilon)?;
    let support = cx::support_check(&sys, &Region::cube(4, 1.0).halton(400));
    let quad = cx::quadratic_part_residual(&sys)?;
    let ks: Vec<usize> = (0..regions).collect();
    let opts = cx::FloquetOptions {
        tol: r.tol,
        ..cx::FloquetOptions::default()
    };
    let per_region = par::map(&ks, |&k| {
        let witness = cx::verify_integrability_witness(&sys, k, 30, WITNESS_TOL);
        let floquet = cx::detect_hyperbolic_orbit(&sys, k, &opts);
        let smallness = cx::smallness_report(&sys, k, 20);
        (witness, floquet, smallness)
    });
    let mut regions_out = Vec::new();
    let mut witnesses_ok = true;
    let mut hyperbolic = false;
    for (k, (w, f, s)) in per_region.into_iter().enumerate() {
        let w = w?;
        witnesses_ok &= w.passed;
        let floquet = match f {
            Ok(rep) => {
                hyperbolic |= rep.hyperbolic && rep.product_residual < PRODUCT_TOL;
                value(&rep)
            }
            Err(e) => json!({"not_found": e.to_string()}),
        };
        regions_out.push(json!({
            "region": k,
            "epsilon": sys.regions[k].epsilon,
            "resonance": sys.regions[k].resonance,
            "witness": w,
            "floquet": floquet,
            "derivative_sizes": s?,
        }));
    }
    let scatter = if regions > 0 {
        cx::section_scatter(&sys, 0, r.grid.max(1), 40, r.tol)?
    } else {
        vec![]
    };
    let mut files = vec![
        ("h2.txt".to_string(), format!("{}\n", sys.h2)),
        ("spec.json".to_string(), to_pretty(&value(&sys.spec))),
    ];
    if format == Format::Csv {
        files.push((
            "section.csv".to_string(),
            csv(&["x1", "y1", "x2", "y2"], scatter.iter().map(|p| p.to_vec())),
        ));
    }
    let passed = nonres.nonresonant
        && support.ast_supported
        && support.sampled_max == 0.0
        && quad < QUADRATIC_PART_TOL
        && witnesses_ok
        && (regions == 0 || hyperbolic);
    Ok(Artifacts {
        passed,
        result: json!({
            "nonresonance": nonres,
            "spec": sys.spec,
            "kappa": sys.kappa,
            "support": support,
            "quadratic_part_residual": quad,
            "thresholds": {
                "nonresonance": NONRESONANCE_THRESHOLD,
                "quadratic_part": QUADRATIC_PART_TOL,
                "witness": WITNESS_TOL,
                "multiplier_product": PRODUCT_TOL,
                "hyperbolic_margin": opts.hyperbolic_margin,
            },
            "regions": regions_out,
            "section_points": scatter.len(),
        }),
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn empty_input_is_exit_two() {
        let dir = tmp();
        let input = dir.path().join("empty.json");
        fs::write(&input, "").unwrap();
        let cfg = RunConfig::new(Command::Classify { input, m: 0 }, dir.path().join("out"));
        let o = run(&cfg);
        assert_eq!(o.exit_code, 2);
        let rep: Value = serde_json::from_str(&fs::read_to_string(o.report).unwrap()).unwrap();
        assert_eq!(rep["status"], "error");
        assert_eq!(rep["error"]["kind"], "EmptyInput");
    }

    #[test]
    fn syntax_error_is_exit_two() {
        let dir = tmp();
        let cfg = RunConfig::new(
            Command::Flow {
                hamiltonian: "x*(y".into(),
                point: vec![1.0, 0.0],
                time: 1.0,
            },
            dir.path(),
        );
        assert_eq!(run(&cfg).exit_code, 2);
    }

    #[test]
    fn classify_focus_focus_file() {
        let dir = tmp();
        let input = dir.path().join("ff.json");
        let fam = sl::model_family(&sl::WilliamsonType::fiber(0, 0, 1));
        fs::write(&input, serde_json::to_string(&FamilyFile::from_family(&fam)).unwrap()).unwrap();
        let cfg = RunConfig::new(Command::Classify { input, m: 0 }, dir.path().join("out"));
        let o = run(&cfg);
        assert_eq!(o.exit_code, 0, "{}", o.message);
        let rep: Value = serde_json::from_str(&fs::read_to_string(o.report).unwrap()).unwrap();
        let c = &rep["result"]["classification"];
        assert_eq!((c["k_e"].as_u64(), c["k_h"].as_u64(), c["k_f"].as_u64()), (Some(0), Some(0), Some(1)));
    }

    #[test]
    fn actions_csv_matches_area() {
        let dir = tmp();
        let mut cfg = RunConfig::new(
            Command::Actions {
                hamiltonian: "x^2+y^2".into(),
                e_min: 0.1,
                e_max: 1.0,
                tag: "ydx".into(),
                radius: 2.0,
            },
            dir.path(),
        );
        cfg.format = Format::Csv;
        cfg.grid = Some(4);
        let o = run(&cfg);
        assert_eq!(o.exit_code, 0, "{}", o.message);
        let text = fs::read_to_string(dir.path().join("actions.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("E,p,period_residual"));
        for l in lines {
            let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            assert!((v[1] - std::f64::consts::PI * v[0]).abs() < 1e-6 * v[1]);
        }
    }

    #[test]
    fn config_round_trip_and_replay_is_identical() {
        let dir = tmp();
        let mut cfg = RunConfig::new(
            Command::Flow {
                hamiltonian: "x1*y1 + x2^2 + y2^2".into(),
                point: vec![0.5, 0.2, 0.1, -0.3],
                time: 0.7,
            },
            dir.path().join("a"),
        );
        cfg.grid = Some(5);
        let a = run(&cfg);
        let replay = load_config(&dir.path().join("a/config.json"), dir.path().join("b")).unwrap();
        assert_eq!(replay.command, cfg.command);
        let b = run(&replay);
        assert_eq!(a.exit_code, 0);
        assert_eq!(fs::read(a.report).unwrap(), fs::read(b.report).unwrap());
    }

    #[test]
    fn exp_rejects_transverse_field() {
        let dir = tmp();
        let cfg = RunConfig::new(
            Command::Exp {
                hamiltonian: "x".into(),
                moment: vec!["x*y".into()],
                radius: 1.0,
            },
            dir.path(),
        );
        let o = run(&cfg);
        assert_eq!(o.exit_code, 1, "{}", o.message);
    }
}
