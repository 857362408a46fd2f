//! Command-line front door: build the reference models, deform and classify
//! them, solve profile problems from JSON, re-verify solved artifacts, and
//! emit CSV/JSON reports with plot-ready data.
//!
//! Exit codes are deterministic functions of the report contents, and float
//! columns are fixed at 17 significant digits so re-running a command on
//! identical inputs reproduces its files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::contact::{
    classify, deformed_ricci, geodesic_reeb_checks, phi_sectional, AlmostContactStructure,
    DeformationParams, StructureTag, ACS_TOL, CLASSIFY_TOL, KILLING_TOL,
};
use crate::error::GeomError;
use crate::identities::{
    hess_eigenvalue_clusters, killing_residual, rectifiability_report, soliton_identities,
    transnormal_fit, SampleSource, SolitonSample,
};
use crate::models::{
    cigar_soliton, gaussian_soliton, round_sphere_hypersurface, tanno_model, ModelId, SolitonModel,
};
use crate::tube::{
    boundary_check, calabi_base, calabi_to_tube, soliton_residual, solve_alpha, BoundaryClass,
    BoundaryReport, Endpoint, ProblemDocument, SplineProfile, WarpedProductMetric,
};

/// All named checks passed (or the classification is a recognized type).
pub const EXIT_OK: i32 = 0;
/// At least one verification check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// The classifier returned Neither.
pub const EXIT_NEITHER: i32 = 2;
/// The profile collapsed before any integration progress.
pub const EXIT_PROFILE_VANISHED: i32 = 3;
/// The requested model does not exist or does not fit the command.
pub const EXIT_UNKNOWN_MODEL: i32 = 64;
/// Malformed input: JSON, CSV, flags, or a constraint-violating problem.
pub const EXIT_BAD_INPUT: i32 = 65;
/// A required input file is missing.
pub const EXIT_MISSING_FILES: i32 = 66;
/// An output file could not be written.
pub const EXIT_IO: i32 = 74;

/// Default residual bound for freshly solved profiles.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-6;
/// Default residual bound when a profile is reloaded from CSV samples.
/// Spline reconstruction carries an O(grid step squared) error in the
/// second derivatives entering the normal-direction residual, so this is
/// looser than the in-memory bound while still far below any real defect.
pub const RELOADED_RESIDUAL_TOL: f64 = 1e-3;
/// Sample intervals excluded at each end when re-checking reloaded
/// residuals. Spline end conditions are approximate and their effect on
/// second derivatives decays geometrically away from the endpoints.
const RELOAD_MARGIN_INTERVALS: usize = 8;
/// Default bound for the identity suite on closed-form models.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Default bound for the Killing residual of J grad f.
pub const KILLING_RESIDUAL_TOL: f64 = 1e-6;

/// Contact-geometry classifiers and cohomogeneity-one soliton profile tools.
#[derive(Parser, Debug)]
#[command(name = "soliton-forge", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for generated reports and CSV files.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Tolerance override, repeatable: classify|residual|identities|killing=VALUE.
    #[arg(long = "tol", global = true, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    /// Grid resolution for profile and residual outputs (at least 16).
    #[arg(long, global = true, default_value_t = 200)]
    pub grid_size: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classify the covariant-derivative type of a contact model.
    Classify {
        /// Model name: sphere3 | sl2r | nil3 | hopf-hypersurface.
        #[arg(long)]
        model: String,
        /// Homothetic deformation H:F or SIGN:H:F applied first.
        #[arg(long, allow_hyphen_values = true)]
        deform: Option<String>,
    },
    /// Write the closed-form curvature report of a deformed model.
    Deform {
        /// Model name: sphere3 | sl2r | nil3 | hopf-hypersurface.
        #[arg(long)]
        model: String,
        /// Homothetic deformation H:F or SIGN:H:F.
        #[arg(long, allow_hyphen_values = true)]
        deform: String,
    },
    /// Solve a profile problem from JSON and write profile/residual CSVs.
    Solve {
        /// Problem document with keys {lambda, k, n, A, B, C, s_min, s_max, alpha_init}.
        #[arg(long)]
        problem: PathBuf,
    },
    /// Check the invariants of a model or of a solved profile directory.
    Verify {
        /// Model name: sphere3 | sl2r | nil3 | gaussian | cigar.
        #[arg(long, conflicts_with = "profile_dir")]
        model: Option<String>,
        /// Directory holding solve.json and profile.csv (default: output dir).
        #[arg(long)]
        profile_dir: Option<PathBuf>,
        /// Extra named check; currently phi-sectional (contact models only).
        #[arg(long)]
        check: Option<String>,
    },
    /// Run the identity suite and emit a JSON report plus fit tables.
    Report {
        /// Model name: gaussian | cigar.
        #[arg(long, conflicts_with = "profile_dir")]
        model: Option<String>,
        /// Directory holding solve.json (default: output dir).
        #[arg(long)]
        profile_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Classify,
    Deform,
    Solve,
    Verify,
    Report,
}

/// Resolved invocation state shared by every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: Option<ModelId>,
    pub problem_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub tolerances: BTreeMap<String, f64>,
    pub grid_size: usize,
}

/// A command abort: exit code plus the message printed to stderr.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

impl RunConfig {
    fn from_cli(cli: &Cli) -> std::result::Result<Self, Failure> {
        let (command, model_name, problem_file) = match &cli.command {
            Command::Classify { model, .. } => (CommandKind::Classify, Some(model.clone()), None),
            Command::Deform { model, .. } => (CommandKind::Deform, Some(model.clone()), None),
            Command::Solve { problem } => (CommandKind::Solve, None, Some(problem.clone())),
            Command::Verify { model, .. } => (CommandKind::Verify, model.clone(), None),
            Command::Report { model, .. } => (CommandKind::Report, model.clone(), None),
        };
        let model = match model_name {
            Some(name) => Some(
                ModelId::from_name(&name)
                    .map_err(|e| Failure::new(EXIT_UNKNOWN_MODEL, e.to_string()))?,
            ),
            None => None,
        };
        if cli.grid_size < 16 {
            return Err(Failure::new(
                EXIT_BAD_INPUT,
                format!("grid size must be at least 16, got {}", cli.grid_size),
            ));
        }
        let tolerances = parse_tolerances(&cli.tol)?;
        fs::create_dir_all(&cli.output_dir).map_err(|e| {
            Failure::new(
                EXIT_IO,
                format!("cannot create output dir {}: {e}", cli.output_dir.display()),
            )
        })?;
        Ok(Self {
            command,
            model,
            problem_file,
            output_dir: cli.output_dir.clone(),
            tolerances,
            grid_size: cli.grid_size,
        })
    }

    fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

fn parse_tolerances(raw: &[String]) -> std::result::Result<BTreeMap<String, f64>, Failure> {
    const KNOWN: [&str; 4] = ["classify", "residual", "identities", "killing"];
    let mut out = BTreeMap::new();
    for item in raw {
        let (name, value) = item.split_once('=').ok_or_else(|| {
            Failure::new(
                EXIT_BAD_INPUT,
                format!("tolerance override '{item}' is not of the form NAME=VALUE"),
            )
        })?;
        if !KNOWN.contains(&name) {
            return Err(Failure::new(
                EXIT_BAD_INPUT,
                format!(
                    "unknown tolerance '{name}' (expected one of {})",
                    KNOWN.join("|")
                ),
            ));
        }
        let parsed: f64 = value.parse().map_err(|_| {
            Failure::new(
                EXIT_BAD_INPUT,
                format!("tolerance value '{value}' is not a number"),
            )
        })?;
        if !(parsed > 0.0 && parsed.is_finite()) {
            return Err(Failure::new(
                EXIT_BAD_INPUT,
                format!("tolerance '{name}' must be positive and finite, got {parsed}"),
            ));
        }
        out.insert(name.to_string(), parsed);
    }
    Ok(out)
}

/// Parses H:F or SIGN:H:F into deformation parameters.
fn parse_deform(raw: &str) -> std::result::Result<(f64, f64, f64, DeformationParams), Failure> {
    let bad = |msg: String| Failure::new(EXIT_BAD_INPUT, msg);
    let parts: Vec<&str> = raw.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(format!("deformation '{raw}' has a non-numeric part")))?;
    let (sign, h, f) = match nums.as_slice() {
        [h, f] => (1.0, *h, *f),
        [sign, h, f] => (*sign, *h, *f),
        _ => return Err(bad(format!("deformation '{raw}' must be H:F or SIGN:H:F"))),
    };
    let params = DeformationParams::new(sign, h, f)
        .map_err(|e| bad(format!("deformation '{raw}' is invalid: {e}")))?;
    Ok((sign, h, f, params))
}

/// 17 significant digits, fixed exponent form, locale-independent.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_text(path: &Path, content: &str) -> std::result::Result<(), Failure> {
    fs::write(path, content)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::result::Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::new(EXIT_IO, format!("cannot encode {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// The contact-geometry realization of a model id, when it has one.
fn contact_model(id: ModelId) -> std::result::Result<AlmostContactStructure, Failure> {
    match id {
        ModelId::Sphere3 | ModelId::SL2RCover | ModelId::Nil3 => {
            tanno_model(id).map_err(|e| Failure::new(EXIT_UNKNOWN_MODEL, e.to_string()))
        }
        ModelId::RoundSphereHypersurface { radius } => round_sphere_hypersurface(radius)
            .map(|(acs, _)| acs)
            .map_err(|e| Failure::new(EXIT_UNKNOWN_MODEL, e.to_string())),
        other => Err(Failure::new(
            EXIT_UNKNOWN_MODEL,
            format!("'{}' is not an almost-contact model", other.cli_name()),
        )),
    }
}

/// The soliton-model realization of a model id, when it has one.
fn soliton_model(id: ModelId) -> std::result::Result<SolitonModel, Failure> {
    match id {
        ModelId::GaussianSoliton { dim, lambda } => gaussian_soliton(dim, lambda)
            .map_err(|e| Failure::new(EXIT_UNKNOWN_MODEL, e.to_string())),
        ModelId::Cigar => Ok(cigar_soliton()),
        other => Err(Failure::new(
            EXIT_UNKNOWN_MODEL,
            format!("'{}' is not a soliton model", other.cli_name()),
        )),
    }
}

fn tag_name(tag: StructureTag) -> &'static str {
    match tag {
        StructureTag::DeformedSasakian => "DeformedSasakian",
        StructureTag::ProductKahler => "ProductKahler",
        StructureTag::Neither => "Neither",
    }
}

fn boundary_json(report: &BoundaryReport) -> serde_json::Value {
    let (class, reason) = match &report.class {
        BoundaryClass::SmoothPoint => ("SmoothPoint", serde_json::Value::Null),
        BoundaryClass::SmoothCircleCollapse => ("SmoothCircleCollapse", serde_json::Value::Null),
        BoundaryClass::RegularBoundary => ("RegularBoundary", serde_json::Value::Null),
        BoundaryClass::NotSmooth(msg) => ("NotSmooth", json!(msg)),
    };
    json!({
        "class": class,
        "reason": reason,
        "h_limit": report.h_limit,
        "f_limit": report.f_limit,
        "h_prime_limit": report.h_prime_limit,
        "f_prime_limit": report.f_prime_limit,
        "extrapolation_residual": report.extrapolation_residual,
    })
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// One named verification check in the machine-readable report.
struct Check {
    name: &'static str,
    pass: bool,
    value: f64,
    detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, value: f64, detail: impl Into<String>) -> Self {
        Self {
            name,
            pass,
            value,
            detail: detail.into(),
        }
    }
}

fn checks_json(checks: &[Check]) -> serde_json::Value {
    json!(checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "pass": c.pass,
                "value": c.value,
                "detail": c.detail,
            })
        })
        .collect::<Vec<_>>())
}

/// Prints per-check lines, writes the report, and folds into an exit code.
fn finish_checks(
    config: &RunConfig,
    target: &str,
    checks: &[Check],
    extra: serde_json::Value,
) -> CmdResult {
    for c in checks {
        println!(
            "{} {:<18} {:.3e}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.detail
        );
    }
    let all_pass = checks.iter().all(|c| c.pass);
    let mut doc = json!({
        "target": target,
        "checks": checks_json(checks),
        "all_pass": all_pass,
    });
    if let Some(map) = extra.as_object() {
        for (k, v) in map {
            doc.as_object_mut().unwrap().insert(k.clone(), v.clone());
        }
    }
    write_json(&config.output_dir.join("verify.json"), &doc)?;
    if all_pass {
        Ok(EXIT_OK)
    } else {
        let failing: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        eprintln!("verification failed: {}", failing.join(", "));
        Ok(EXIT_CHECK_FAILED)
    }
}

fn cmd_classify(config: &RunConfig, deform: Option<&str>) -> CmdResult {
    let id = config.model.expect("clap requires --model");
    let mut acs = contact_model(id)?;
    let mut deform_echo = serde_json::Value::Null;
    if let Some(raw) = deform {
        let (sign, h, f, params) = parse_deform(raw)?;
        acs = acs
            .hf_deform(&params)
            .map_err(|e| Failure::new(EXIT_BAD_INPUT, e.to_string()))?;
        deform_echo = json!({"sign": sign, "h": h, "f": f});
    }
    let tol = config.tol("classify", CLASSIFY_TOL);
    let class = classify(&acs, tol).map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    let doc = json!({
        "model": id.cli_name(),
        "deformation": deform_echo,
        "tag": tag_name(class.tag),
        "b": class.b,
        "residual": class.residual,
        "tolerance": tol,
    });
    write_json(&config.output_dir.join("classification.json"), &doc)?;
    println!(
        "tag={} b={} residual={:.3e}",
        tag_name(class.tag),
        fmt17(class.b),
        class.residual
    );
    match class.tag {
        StructureTag::Neither => Ok(EXIT_NEITHER),
        _ => Ok(EXIT_OK),
    }
}

fn cmd_deform(config: &RunConfig, deform: &str) -> CmdResult {
    let id = config.model.expect("clap requires --model");
    let acs = contact_model(id)?;
    let (sign, h, f, params) = parse_deform(deform)?;
    let report = deformed_ricci(&acs, &params)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    let doc = json!({
        "model": id.cli_name(),
        "sign": sign,
        "h": h,
        "f": f,
        "reeb_reeb": report.reeb_reeb,
        "reeb_sectional": report.reeb_sectional,
        "scalar": report.exact.scalar,
        "closed_form_ricci": matrix_rows(&report.closed_form_ricci),
        "residual_norms": report.residual_norms,
    });
    write_json(&config.output_dir.join("deformation.json"), &doc)?;
    println!(
        "reeb_reeb={} reeb_sectional={} scalar={}",
        fmt17(report.reeb_reeb),
        fmt17(report.reeb_sectional),
        fmt17(report.exact.scalar)
    );
    Ok(EXIT_OK)
}

fn cmd_solve(config: &RunConfig) -> CmdResult {
    let path = config
        .problem_file
        .as_ref()
        .expect("clap requires --problem");
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(
            EXIT_MISSING_FILES,
            format!("cannot read problem file {}: {e}", path.display()),
        )
    })?;
    let doc: ProblemDocument = serde_json::from_str(&text).map_err(|e| {
        Failure::new(
            EXIT_BAD_INPUT,
            format!(
                "problem file {} is not a valid document: {e}",
                path.display()
            ),
        )
    })?;
    doc.problem
        .validate()
        .map_err(|e| Failure::new(EXIT_BAD_INPUT, e.to_string()))?;

    let ap = match solve_alpha(&doc.problem, doc.alpha_init) {
        Ok(ap) => ap,
        Err(GeomError::EmptyProfile(msg)) => {
            return Err(Failure::new(
                EXIT_PROFILE_VANISHED,
                format!("profile vanished before integration progressed: {msg}"),
            ))
        }
        Err(GeomError::InvalidProblem(msg)) => return Err(Failure::new(EXIT_BAD_INPUT, msg)),
        Err(e) => return Err(Failure::new(EXIT_CHECK_FAILED, e.to_string())),
    };
    let w = match calabi_to_tube(&ap, &doc.problem) {
        Ok(w) => w,
        Err(GeomError::DegenerateTube(msg)) => {
            return Err(Failure::new(EXIT_PROFILE_VANISHED, msg))
        }
        Err(e) => return Err(Failure::new(EXIT_CHECK_FAILED, e.to_string())),
    };

    // Profile CSV on an inclusive uniform t-grid. s and alpha are recovered
    // from the warping factors exactly: w = F^2 = 2s + A and alpha = H^2.
    let mut profile = String::from("s,t,alpha,H,F,f\n");
    let span = w.t_max - w.t_min;
    for j in 0..config.grid_size {
        let t = w.t_min + span * j as f64 / (config.grid_size as f64 - 1.0);
        let h = w.h.value(t);
        let fw = w.f_warp.value(t);
        let pot = w.potential.value(t);
        let s = (fw * fw - doc.problem.a) / 2.0;
        let row = [s, t, h * h, h, fw, pot];
        profile.push_str(&row.map(fmt17).join(","));
        profile.push('\n');
    }
    write_text(&config.output_dir.join("profile.csv"), &profile)?;

    // Residual CSV on the interior evaluation grid.
    let res = soliton_residual(&w, &doc.problem, config.grid_size)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    let mut residuals = String::from("s,t,alpha,H,F,f,R1,R2_zeta,R2_horiz,R3,R4\n");
    for row in &res.rows {
        let h = w.h.value(row.t);
        let fw = w.f_warp.value(row.t);
        let pot = w.potential.value(row.t);
        let s = (fw * fw - doc.problem.a) / 2.0;
        let cols = [
            s,
            row.t,
            h * h,
            h,
            fw,
            pot,
            row.r1,
            row.r2_zeta,
            row.r2_horiz,
            row.r3,
            row.r4,
        ];
        residuals.push_str(&cols.map(fmt17).join(","));
        residuals.push('\n');
    }
    write_text(&config.output_dir.join("residuals.csv"), &residuals)?;

    let lower = boundary_check(&w, Endpoint::Lower)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    let upper = boundary_check(&w, Endpoint::Upper)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;

    let tol = config.tol("residual", SOLVE_RESIDUAL_TOL);
    let pass = res.worst_primary() < tol;
    let mut summary =
        serde_json::to_value(&doc).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    {
        let obj = summary.as_object_mut().unwrap();
        obj.insert("route_gap".into(), json!(ap.route_gap));
        obj.insert("zero_bracket".into(), json!(ap.zero_bracket));
        obj.insert("grid_size".into(), json!(config.grid_size));
        obj.insert("residual_tolerance".into(), json!(tol));
        obj.insert("residual_sup".into(), json!(res.sup));
        obj.insert("residuals_pass".into(), json!(pass));
        obj.insert(
            "boundary".into(),
            json!({"lower": boundary_json(&lower), "upper": boundary_json(&upper)}),
        );
    }
    write_json(&config.output_dir.join("solve.json"), &summary)?;

    println!(
        "worst residual {:.3e} (tolerance {:.1e}); boundary lower={} upper={}",
        res.worst_primary(),
        tol,
        boundary_json(&lower)["class"].as_str().unwrap_or("?"),
        boundary_json(&upper)["class"].as_str().unwrap_or("?"),
    );
    if pass {
        Ok(EXIT_OK)
    } else {
        let failing: Vec<&String> = res
            .sup
            .iter()
            .filter(|(k, v)| k.as_str() != "r4_alt" && **v >= tol)
            .map(|(k, _)| k)
            .collect();
        eprintln!(
            "residuals over tolerance: {}",
            failing
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
        Ok(EXIT_CHECK_FAILED)
    }
}

/// Columns of a reloaded profile CSV.
struct ProfileTable {
    t: Vec<f64>,
    alpha: Vec<f64>,
    h: Vec<f64>,
    f_warp: Vec<f64>,
    potential: Vec<f64>,
}

fn read_profile_csv(path: &Path) -> std::result::Result<ProfileTable, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::new(
            EXIT_MISSING_FILES,
            format!("cannot read profile file {}: {e}", path.display()),
        )
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "s,t,alpha,H,F,f" {
        return Err(Failure::new(
            EXIT_BAD_INPUT,
            format!("unexpected profile header '{header}'"),
        ));
    }
    let mut table = ProfileTable {
        t: Vec::new(),
        alpha: Vec::new(),
        h: Vec::new(),
        f_warp: Vec::new(),
        potential: Vec::new(),
    };
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                Failure::new(
                    EXIT_BAD_INPUT,
                    format!("profile row {} has a non-numeric field", i + 2),
                )
            })?;
        if fields.len() != 6 {
            return Err(Failure::new(
                EXIT_BAD_INPUT,
                format!(
                    "profile row {} has {} fields, expected 6",
                    i + 2,
                    fields.len()
                ),
            ));
        }
        table.t.push(fields[1]);
        table.alpha.push(fields[2]);
        table.h.push(fields[3]);
        table.f_warp.push(fields[4]);
        table.potential.push(fields[5]);
    }
    if table.t.len() < 4 {
        return Err(Failure::new(
            EXIT_BAD_INPUT,
            "profile needs at least 4 rows to rebuild",
        ));
    }
    if table.t.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Failure::new(
            EXIT_BAD_INPUT,
            "profile t column must be strictly increasing",
        ));
    }
    Ok(table)
}

fn load_solve_summary(
    dir: &Path,
) -> std::result::Result<(ProblemDocument, serde_json::Value), Failure> {
    let path = dir.join("solve.json");
    let text = fs::read_to_string(&path).map_err(|e| {
        Failure::new(
            EXIT_MISSING_FILES,
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        Failure::new(
            EXIT_BAD_INPUT,
            format!("{} is not valid JSON: {e}", path.display()),
        )
    })?;
    let doc: ProblemDocument = serde_json::from_value(raw.clone()).map_err(|e| {
        Failure::new(
            EXIT_BAD_INPUT,
            format!("{} is not a valid solve summary: {e}", path.display()),
        )
    })?;
    Ok((doc, raw))
}

/// Rebuilds the warped metric of a solved directory from its CSV samples,
/// restricted to the interior window where spline reconstruction is clean.
fn reload_tube(
    dir: &Path,
) -> std::result::Result<
    (
        ProblemDocument,
        serde_json::Value,
        ProfileTable,
        WarpedProductMetric,
    ),
    Failure,
> {
    let (doc, raw) = load_solve_summary(dir)?;
    let table = read_profile_csv(&dir.join("profile.csv"))?;
    let degraded = |e: GeomError| Failure::new(EXIT_CHECK_FAILED, e.to_string());
    let base = calabi_base(doc.problem.k).map_err(degraded)?;
    let h = SplineProfile::from_samples(table.t.clone(), table.h.clone()).map_err(degraded)?;
    let f = SplineProfile::from_samples(table.t.clone(), table.f_warp.clone()).map_err(degraded)?;
    let pot =
        SplineProfile::from_samples(table.t.clone(), table.potential.clone()).map_err(degraded)?;
    let t0 = table.t[0];
    let t1 = *table.t.last().unwrap();
    let span = t1 - t0;
    let margin =
        (RELOAD_MARGIN_INTERVALS as f64 * span / (table.t.len() as f64 - 1.0)).min(0.15 * span);
    let w = WarpedProductMetric::new(
        t0 + margin,
        t1 - margin,
        Arc::new(h),
        Arc::new(f),
        Arc::new(pot),
        base,
    )
    .map_err(|e| {
        Failure::new(
            EXIT_CHECK_FAILED,
            format!("reloaded profile is not a consistent tube metric: {e}"),
        )
    })?;
    Ok((doc, raw, table, w))
}

fn verify_contact_model(config: &RunConfig, check: Option<&str>) -> CmdResult {
    let id = config.model.expect("model present");
    let acs = contact_model(id)?;
    let mut checks = Vec::new();

    let report = acs.validate();
    let (worst_name, worst_val) = report.worst();
    checks.push(Check::new(
        "structure-closure",
        report.is_valid(ACS_TOL),
        worst_val,
        format!("worst axiom residual: {worst_name}"),
    ));

    let diag = geodesic_reeb_checks(&acs, KILLING_TOL)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    let worst_reeb = diag.residuals.values().copied().fold(0.0, f64::max);
    checks.push(Check::new(
        "geodesic-reeb",
        diag.all_hold,
        worst_reeb,
        "four equivalent Reeb-geodesic statements",
    ));

    let tol = config.tol("classify", CLASSIFY_TOL);
    let class = classify(&acs, tol).map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    checks.push(Check::new(
        "classification",
        class.tag != StructureTag::Neither,
        class.residual,
        format!("tag {} with b = {}", tag_name(class.tag), fmt17(class.b)),
    ));

    let mut extra = json!({});
    match check {
        None => {}
        Some("phi-sectional") => {
            let mut x = DVector::zeros(acs.dim());
            x[1] = 1.0;
            let value = phi_sectional(&acs, &x)
                .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
            checks.push(Check::new(
                "phi-sectional",
                true,
                value,
                "curvature of the (X, Phi X) plane",
            ));
            extra = json!({"phi_sectional": value});
            println!("phi-sectional = {}", fmt17(value));
        }
        Some(other) => {
            return Err(Failure::new(
                EXIT_BAD_INPUT,
                format!("unknown check '{other}' (expected phi-sectional)"),
            ))
        }
    }

    finish_checks(config, id.cli_name(), &checks, extra)
}

fn verify_soliton_model(config: &RunConfig) -> CmdResult {
    let id = config.model.expect("model present");
    let model = soliton_model(id)?;
    // Defaults reflect how sharply each closed form is known: the flat model
    // is exact to rounding, the conformal one is finite-difference limited.
    let (id_default, killing_default) = match id {
        ModelId::GaussianSoliton { .. } => (1e-8, 1e-10),
        _ => (IDENTITY_TOL, KILLING_RESIDUAL_TOL),
    };
    let tol_id = config.tol("identities", id_default);
    let tol_kill = config.tol("killing", killing_default);

    let sample = SolitonSample::from_model(&model)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    let failed = |e: GeomError| Failure::new(EXIT_CHECK_FAILED, e.to_string());

    let rep = soliton_identities(&sample).map_err(failed)?;
    let mut checks = vec![
        Check::new(
            "soliton-residual",
            rep.soliton_residual_sup < tol_id,
            rep.soliton_residual_sup,
            "sup |Rc + Hess f - lambda g|",
        ),
        Check::new(
            "trace-identity",
            rep.trace_residual < tol_id,
            rep.trace_residual,
            "S + Delta f - n lambda",
        ),
        Check::new(
            "bianchi-identity",
            rep.bianchi_residual < tol_id,
            rep.bianchi_residual,
            "Rc(grad f) - grad S / 2",
        ),
        Check::new(
            "conservation",
            rep.conservation_residual < tol_id,
            rep.conservation_residual,
            "stddev of S + |grad f|^2 - 2 lambda f",
        ),
        Check::new(
            "scalar-laplacian",
            rep.laplacian_residual < tol_id,
            rep.laplacian_residual,
            "Delta S + 2|Rc|^2 - <grad f, grad S> - 2 lambda S",
        ),
    ];

    let killing = killing_residual(&sample).map_err(failed)?;
    checks.push(Check::new(
        "killing-potential",
        killing < tol_kill,
        killing,
        "sup |L_{J grad f} g|",
    ));

    let rect = rectifiability_report(&sample).map_err(failed)?;
    let rect_worst = rect
        .level_set_variation
        .max(rect.eigenvector_residual)
        .max(rect.parallel_residual);
    checks.push(Check::new(
        "rectifiability",
        rect.passes.iter().all(|&b| b) && rect.consistent,
        rect_worst,
        "level-set variation, Ricci eigenvector, gradient alignment",
    ));

    let fit = transnormal_fit(&sample).map_err(failed)?;
    checks.push(Check::new(
        "transnormal",
        fit.transnormal && fit.isoparametric,
        fit.b_scatter.max(fit.a_scatter),
        "|grad f|^2 and Delta f as functions of f",
    ));

    finish_checks(config, id.cli_name(), &checks, json!({}))
}

/// Endpoint sample values against the class recorded at solve time. This
/// uses values only: endpoint derivatives of a reloaded spline sit inside
/// the end-condition error layer and cannot be recovered reliably.
fn boundary_record_check(
    name: &'static str,
    recorded: Option<&str>,
    h_end: f64,
    f_end: f64,
    scale: f64,
) -> Check {
    let tiny = 1e-6 * scale;
    match recorded {
        None => Check::new(name, false, f64::NAN, "no boundary class recorded"),
        Some("SmoothPoint") => Check::new(
            name,
            h_end.abs() <= tiny && f_end.abs() <= tiny,
            h_end.abs().max(f_end.abs()),
            "SmoothPoint: both warp factors collapse",
        ),
        Some("SmoothCircleCollapse") => Check::new(
            name,
            h_end.abs() <= tiny && f_end > tiny,
            h_end.abs(),
            "SmoothCircleCollapse: fiber circle collapses",
        ),
        Some("RegularBoundary") => Check::new(
            name,
            h_end > tiny && f_end > tiny,
            h_end.min(f_end),
            "RegularBoundary: both warp factors positive",
        ),
        Some(other) => Check::new(name, true, f64::NAN, format!("recorded as {other}")),
    }
}

fn verify_profile_dir(config: &RunConfig, dir: &Path) -> CmdResult {
    let (doc, raw, table, w) = reload_tube(dir)?;
    let tol = config.tol("residual", RELOADED_RESIDUAL_TOL);
    let mut checks = Vec::new();

    let mut alpha_gap = 0.0f64;
    let mut scale = 1.0f64;
    for (h, alpha) in table.h.iter().zip(table.alpha.iter()) {
        alpha_gap = alpha_gap.max((h * h - alpha).abs());
        scale = scale.max(alpha.abs());
    }
    checks.push(Check::new(
        "alpha-consistency",
        alpha_gap <= 1e-8 * scale,
        alpha_gap,
        "alpha column equals H^2",
    ));

    let res = soliton_residual(&w, &doc.problem, config.grid_size)
        .map_err(|e| Failure::new(EXIT_CHECK_FAILED, e.to_string()))?;
    for (name, label) in [
        ("r1", "r1"),
        ("r2_zeta", "r2_zeta"),
        ("r2_horiz", "r2_horiz"),
        ("r3", "r3"),
        ("r4", "r4"),
    ] {
        let value = res.sup[name];
        checks.push(Check::new(
            label,
            value < tol,
            value,
            "reduced-system residual",
        ));
    }

    let warp_scale = table
        .h
        .iter()
        .chain(table.f_warp.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let class_at = |end: &str| {
        raw.get("boundary")
            .and_then(|b| b.get(end))
            .and_then(|e| e.get("class"))
            .and_then(|c| c.as_str())
    };
    checks.push(boundary_record_check(
        "boundary-lower",
        class_at("lower"),
        table.h[0],
        table.f_warp[0],
        warp_scale,
    ));
    checks.push(boundary_record_check(
        "boundary-upper",
        class_at("upper"),
        *table.h.last().unwrap(),
        *table.f_warp.last().unwrap(),
        warp_scale,
    ));

    finish_checks(
        config,
        &dir.display().to_string(),
        &checks,
        json!({"residual_tolerance": tol}),
    )
}

fn cmd_verify(config: &RunConfig, profile_dir: Option<&Path>, check: Option<&str>) -> CmdResult {
    match config.model {
        Some(
            ModelId::Sphere3
            | ModelId::SL2RCover
            | ModelId::Nil3
            | ModelId::RoundSphereHypersurface { .. },
        ) => verify_contact_model(config, check),
        Some(_) => {
            if let Some(name) = check {
                return Err(Failure::new(
                    EXIT_BAD_INPUT,
                    format!("check '{name}' applies to contact models only"),
                ));
            }
            verify_soliton_model(config)
        }
        None => {
            if let Some(name) = check {
                return Err(Failure::new(
                    EXIT_BAD_INPUT,
                    format!("check '{name}' applies to contact models only"),
                ));
            }
            let dir = profile_dir.unwrap_or(&config.output_dir).to_path_buf();
            verify_profile_dir(config, &dir)
        }
    }
}

fn cmd_report(config: &RunConfig, profile_dir: Option<&Path>) -> CmdResult {
    let failed = |e: GeomError| Failure::new(EXIT_CHECK_FAILED, e.to_string());
    let (target, sample) = match config.model {
        Some(id) => {
            let model = soliton_model(id)?;
            let sample = SolitonSample::from_model(&model).map_err(failed)?;
            (id.cli_name().to_string(), sample)
        }
        None => {
            let dir = profile_dir.unwrap_or(&config.output_dir);
            let (doc, _) = load_solve_summary(dir)?;
            // Slice count scales with the requested grid without exceeding
            // what the identity oracles need.
            let slices = (config.grid_size / 8).clamp(8, 32);
            let sample = SolitonSample::from_tube_problem(&doc.problem, doc.alpha_init, slices, 2)
                .map_err(|e| Failure::new(EXIT_BAD_INPUT, e.to_string()))?;
            (dir.display().to_string(), sample)
        }
    };

    let identities = soliton_identities(&sample).map_err(failed)?;
    let killing = killing_residual(&sample).map_err(failed)?;
    let rect = rectifiability_report(&sample).map_err(failed)?;
    let fit = transnormal_fit(&sample).map_err(failed)?;
    let hess = match sample.source {
        SampleSource::Tube(_) => Some(hess_eigenvalue_clusters(&sample).map_err(failed)?),
        SampleSource::Chart => None,
    };

    let doc = json!({
        "target": target,
        "identities": identities,
        "killing_residual": killing,
        "rectifiability": rect,
        "transnormal": fit,
        "hess_spectrum": hess,
    });
    write_json(&config.output_dir.join("report.json"), &doc)?;

    let mut fit_csv = String::from("f,b,a\n");
    for (f, b, a) in &fit.table {
        fit_csv.push_str(&[*f, *b, *a].map(fmt17).join(","));
        fit_csv.push('\n');
    }
    write_text(&config.output_dir.join("fit_table.csv"), &fit_csv)?;

    println!(
        "identities worst {:.3e}; killing {:.3e}; transnormal={} isoparametric={}",
        identities.worst(),
        killing,
        fit.transnormal,
        fit.isoparametric
    );
    Ok(EXIT_OK)
}

/// Dispatches a parsed invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let config = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("{}", f.message);
            return f.code;
        }
    };
    let outcome = match &cli.command {
        Command::Classify { deform, .. } => cmd_classify(&config, deform.as_deref()),
        Command::Deform { deform, .. } => cmd_deform(&config, deform),
        Command::Solve { .. } => cmd_solve(&config),
        Command::Verify {
            profile_dir, check, ..
        } => cmd_verify(&config, profile_dir.as_deref(), check.as_deref()),
        Command::Report { profile_dir, .. } => cmd_report(&config, profile_dir.as_deref()),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("{}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deform_strings_parse() {
        let (sign, h, f, _) = parse_deform("1:0.5").unwrap();
        assert_eq!((sign, h, f), (1.0, 1.0, 0.5));
        let (sign, h, f, _) = parse_deform("-1:2:0.25").unwrap();
        assert_eq!((sign, h, f), (-1.0, 2.0, 0.25));
        assert!(parse_deform("1:0.5:2:9").is_err());
        assert!(parse_deform("abc:1").is_err());
        // The parameter validator rejects a zero warp factor.
        assert!(parse_deform("1:0").is_err());
    }

    #[test]
    fn tolerance_overrides_parse() {
        let map = parse_tolerances(&["residual=1e-4".into(), "classify=2e-9".into()]).unwrap();
        assert_eq!(map["residual"], 1e-4);
        assert_eq!(map["classify"], 2e-9);
        assert!(parse_tolerances(&["bogus=1".into()]).is_err());
        assert!(parse_tolerances(&["residual".into()]).is_err());
        assert!(parse_tolerances(&["residual=-1".into()]).is_err());
    }

    #[test]
    fn float_format_is_17_digits() {
        assert_eq!(fmt17(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt17(-3.0), "-3.0000000000000000e0");
    }
}
