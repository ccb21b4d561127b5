//! Scenario configuration: JSON schema types, defaults and validation.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::sync::OnceLock;

use phaselab::error::Error as CoreError;
use phaselab::lattice::{make_phase_space_from, PhaseSpaceParams};
use phaselab::moyal::{DerivativeScheme, DEFAULT_TRUNCATION, MAX_TRUNCATION};
use phaselab::states::StateRecipe;
use phaselab::symbol::{ScheduleSegment, DEGREE_CAP};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SUPPORTED_VERSIONS: &[&str] = &["1"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaViolation {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: String,
    #[serde(default)]
    pub seed: u64,
    pub factors: Vec<FactorConfig>,
    #[serde(default)]
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub coupling: Vec<TermConfig>,
    #[serde(default = "ground")]
    pub initial_state: StateRecipe,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn ground() -> StateRecipe {
    StateRecipe::Ground
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    Grid,
    Levels,
}

/// A grid factor (`n` points per axis, `d` modes) or `n` oscillator levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub label: String,
    pub kind: FactorKind,
    pub n: usize,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn one() -> usize {
    1
}

impl FactorConfig {
    pub fn dof(&self) -> usize {
        match self.kind {
            FactorKind::Grid => self.d,
            FactorKind::Levels => 1,
        }
    }

    pub fn params(&self) -> Option<PhaseSpaceParams> {
        if self.kind != FactorKind::Grid {
            return None;
        }
        let covariance = self.covariance.clone().unwrap_or_else(|| {
            (0..self.d).map(|i| (0..self.d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
        });
        Some(PhaseSpaceParams { d: self.d, n: self.n, half_width: self.half_width.unwrap_or(f64::NAN), covariance })
    }
}

/// One monomial `coeff · q^powers_q p^powers_p` over the degrees of freedom of `support`.
///
/// An empty support means every factor, in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<String>,
    pub powers_q: Vec<usize>,
    pub powers_p: Vec<usize>,
    pub coeff: f64,
}

impl TermConfig {
    pub fn degree(&self) -> usize {
        self.powers_q.iter().chain(&self.powers_p).sum()
    }
}

/// Hamiltonian terms; schedule coefficients cover these terms followed by the coupling terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduleSegment>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    #[default]
    Wigner,
    Eta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Omitted: 0.95 times the stability guard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default)]
    pub scheme: DerivativeScheme,
    /// Refuse steps above the stability guard.
    #[serde(default = "yes")]
    pub dt_guard: bool,
    #[serde(default)]
    pub route: Route,
    /// Feedback only: also run the classical Liouville evolution of the composite.
    #[serde(default)]
    pub classical: bool,
}

fn default_t_end() -> f64 {
    1.0
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: default_t_end(),
            stride: 1,
            truncation: DEFAULT_TRUNCATION,
            scheme: DerivativeScheme::default(),
            dt_guard: true,
            route: Route::default(),
            classical: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Binary,
    Gnuplot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    /// Keep every `stride`-th snapshot of a run.
    #[serde(default = "one")]
    pub stride: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Binary]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats(), stride: 1 }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_normalization")]
    pub normalization: f64,
    #[serde(default = "tol_purity")]
    pub purity: f64,
    #[serde(default = "tol_mass_drift")]
    pub mass_drift: f64,
    #[serde(default = "tol_oracle")]
    pub oracle: f64,
    #[serde(default = "tol_square_gap")]
    pub square_gap: f64,
}

fn tol_normalization() -> f64 {
    1e-8
}

fn tol_purity() -> f64 {
    1e-6
}

fn tol_mass_drift() -> f64 {
    1e-6
}

fn tol_oracle() -> f64 {
    1e-4
}

fn tol_square_gap() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            normalization: tol_normalization(),
            purity: tol_purity(),
            mass_drift: tol_mass_drift(),
            oracle: tol_oracle(),
            square_gap: tol_square_gap(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_verify_width")]
    pub half_width: f64,
    #[serde(default = "default_verify_variance")]
    pub variance: f64,
}

fn default_sizes() -> Vec<usize> {
    vec![32, 64]
}

fn default_states() -> usize {
    5
}

fn default_verify_width() -> f64 {
    6.0
}

fn default_verify_variance() -> f64 {
    0.5
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            sizes: default_sizes(),
            states: default_states(),
            half_width: default_verify_width(),
            variance: default_verify_variance(),
        }
    }
}

impl ScenarioConfig {
    pub fn factor(&self, label: &str) -> Option<&FactorConfig> {
        self.factors.iter().find(|f| f.label == label)
    }

    /// Support labels of a term, with the empty support expanded.
    pub fn support_of<'a>(&'a self, term: &'a TermConfig) -> Vec<&'a str> {
        if term.support.is_empty() {
            self.factors.iter().map(|f| f.label.as_str()).collect()
        } else {
            term.support.iter().map(String::as_str).collect()
        }
    }

    pub fn term_count(&self) -> usize {
        self.hamiltonian.terms.len() + self.coupling.len()
    }
}

/// Parses and validates a config, reporting every semantic violation at once.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(CliError::Syntax)?;
    match value.get("version") {
        Some(serde_json::Value::String(v)) if SUPPORTED_VERSIONS.contains(&v.as_str()) => {}
        Some(serde_json::Value::String(v)) => return Err(CliError::UnknownVersion(v.clone())),
        Some(other) => return Err(CliError::UnknownVersion(other.to_string())),
        None => {
            return Err(CliError::Schema(vec![SchemaViolation {
                path: "version".into(),
                reason: "missing version tag".into(),
            }]))
        }
    }
    let violations = schema_violations(&value);
    if !violations.is_empty() {
        return Err(CliError::Schema(violations));
    }
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema(vec![SchemaViolation {
            path: if path == "." { "(root)".into() } else { path },
            reason: e.into_inner().to_string(),
        }])
    })?;
    let violations = validate(&cfg);
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Schema(violations))
    }
}

/// The shipped JSON Schema for scenario files.
pub const SCHEMA: &str = include_str!("../schema/scenario.schema.json");

fn schema_validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).expect("shipped schema is JSON");
        jsonschema::validator_for(&schema).expect("shipped schema compiles")
    })
}

/// `/factors/0/covariance` as `factors[0].covariance`.
fn dotted(pointer: &str) -> String {
    let mut out = String::new();
    for seg in pointer.split('/').skip(1) {
        let seg = seg.replace("~1", "/").replace("~0", "~");
        if seg.parse::<usize>().is_ok() {
            out.push_str(&format!("[{seg}]"));
        } else {
            if !out.is_empty() {
                out.push('.');
            }
            out.push_str(&seg);
        }
    }
    if out.is_empty() {
        "(root)".into()
    } else {
        out
    }
}

/// Every structural violation of the shipped schema.
pub fn schema_violations(value: &serde_json::Value) -> Vec<SchemaViolation> {
    schema_validator()
        .iter_errors(value)
        .map(|e| SchemaViolation { path: dotted(e.instance_path().as_str()), reason: e.to_string() })
        .collect()
}

struct Report(Vec<SchemaViolation>);

impl Report {
    fn push(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.0.push(SchemaViolation { path: path.into(), reason: reason.into() });
    }
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

pub fn validate(cfg: &ScenarioConfig) -> Vec<SchemaViolation> {
    let mut r = Report(Vec::new());
    check_factors(cfg, &mut r);
    let labels: HashSet<&str> = cfg.factors.iter().map(|f| f.label.as_str()).collect();
    for (k, t) in cfg.hamiltonian.terms.iter().enumerate() {
        check_term(cfg, &labels, t, &format!("hamiltonian.terms[{k}]"), false, &mut r);
    }
    for (k, t) in cfg.coupling.iter().enumerate() {
        check_term(cfg, &labels, t, &format!("coupling[{k}]"), true, &mut r);
    }
    for (k, seg) in cfg.hamiltonian.schedule.iter().enumerate() {
        let path = format!("hamiltonian.schedule[{k}]");
        if !(seg.start.is_finite() && seg.start >= 0.0) {
            r.push(format!("{path}.start"), "must be a non-negative time");
        }
        if seg.coeffs.len() != cfg.term_count() {
            r.push(
                format!("{path}.coeffs"),
                format!("has {} coefficients for {} terms", seg.coeffs.len(), cfg.term_count()),
            );
        }
        if seg.coeffs.iter().any(|c| !c.is_finite()) {
            r.push(format!("{path}.coeffs"), "coefficients must be finite");
        }
    }
    if let StateRecipe::Product { parts } = &cfg.initial_state {
        if parts.len() != cfg.factors.len() {
            r.push("initial_state.parts", format!("has {} parts for {} factors", parts.len(), cfg.factors.len()));
        }
    }
    check_run(cfg, &mut r);
    if cfg.output.stride == 0 {
        r.push("output.stride", "must be at least 1");
    }
    let t = &cfg.tolerances;
    for (name, v) in [
        ("normalization", t.normalization),
        ("purity", t.purity),
        ("mass_drift", t.mass_drift),
        ("oracle", t.oracle),
        ("square_gap", t.square_gap),
    ] {
        if !finite_positive(v) {
            r.push(format!("tolerances.{name}"), "must be positive");
        }
    }
    check_verify(&cfg.verify, &mut r);
    r.0
}

fn check_factors(cfg: &ScenarioConfig, r: &mut Report) {
    if cfg.factors.is_empty() {
        r.push("factors", "at least one factor is required");
    }
    let mut seen = HashSet::new();
    for (i, f) in cfg.factors.iter().enumerate() {
        let path = format!("factors[{i}]");
        if f.label.is_empty() {
            r.push(format!("{path}.label"), "must not be empty");
        } else if !seen.insert(f.label.as_str()) {
            r.push(format!("{path}.label"), format!("duplicate label `{}`", f.label));
        }
        match f.kind {
            FactorKind::Levels => {
                if f.n < 2 {
                    r.push(format!("{path}.n"), "a level factor needs at least 2 levels");
                }
                if f.d != 1 {
                    r.push(format!("{path}.d"), "a level factor carries exactly one mode");
                }
                if f.half_width.is_some() || f.covariance.is_some() {
                    r.push(path.clone(), "half_width and covariance apply to grid factors only");
                }
            }
            FactorKind::Grid => check_grid(f, &path, r),
        }
    }
}

fn check_grid(f: &FactorConfig, path: &str, r: &mut Report) {
    if f.d == 0 {
        r.push(format!("{path}.d"), "must be at least 1");
        return;
    }
    let Some(l) = f.half_width else {
        r.push(format!("{path}.half_width"), "required for grid factors");
        return;
    };
    if !finite_positive(l) {
        r.push(format!("{path}.half_width"), "must be positive");
        return;
    }
    if let Some(c) = &f.covariance {
        if c.len() != f.d || c.iter().any(|row| row.len() != f.d) {
            r.push(format!("{path}.covariance"), format!("expected a {0}x{0} matrix", f.d));
            return;
        }
        if c.iter().flatten().any(|v| !v.is_finite()) {
            r.push(format!("{path}.covariance"), "entries must be finite");
            return;
        }
    }
    let params = f.params().expect("grid factor");
    match make_phase_space_from(&params) {
        Ok(_) => {}
        Err(e @ (CoreError::NonSymmetricCovariance { .. } | CoreError::NonPositiveCovariance { .. })) => {
            r.push(format!("{path}.covariance"), e.to_string())
        }
        Err(e @ CoreError::InsufficientDomain { .. }) => r.push(format!("{path}.half_width"), e.to_string()),
        Err(e) => r.push(format!("{path}.n"), e.to_string()),
    }
}

fn check_term(
    cfg: &ScenarioConfig,
    labels: &HashSet<&str>,
    t: &TermConfig,
    path: &str,
    coupling: bool,
    r: &mut Report,
) {
    if coupling && t.support.is_empty() {
        r.push(format!("{path}.support"), "coupling terms need an explicit support");
    }
    let mut seen = HashSet::new();
    let mut resolved = true;
    for l in &t.support {
        if !labels.contains(l.as_str()) {
            r.push(format!("{path}.support"), format!("unknown subsystem label `{l}`"));
            resolved = false;
        } else if !seen.insert(l.as_str()) {
            r.push(format!("{path}.support"), format!("label `{l}` appears twice"));
            resolved = false;
        }
    }
    if resolved {
        let dof: usize = cfg.support_of(t).iter().filter_map(|l| cfg.factor(l)).map(FactorConfig::dof).sum();
        if t.powers_q.len() != dof {
            r.push(format!("{path}.powers_q"), format!("expected {dof} entries, found {}", t.powers_q.len()));
        }
        if t.powers_p.len() != dof {
            r.push(format!("{path}.powers_p"), format!("expected {dof} entries, found {}", t.powers_p.len()));
        }
    }
    if t.degree() > DEGREE_CAP {
        r.push(path.to_string(), format!("degree {} exceeds the cap {DEGREE_CAP}", t.degree()));
    }
    if !t.coeff.is_finite() {
        r.push(format!("{path}.coeff"), "must be finite");
    }
}

fn check_run(cfg: &ScenarioConfig, r: &mut Report) {
    let run = &cfg.run;
    if let Some(dt) = run.dt {
        if !finite_positive(dt) {
            r.push("run.dt", "must be positive");
        }
    }
    if !(run.t_end.is_finite() && run.t_end >= 0.0) {
        r.push("run.t_end", "must be a non-negative time");
    }
    if run.stride == 0 {
        r.push("run.stride", "must be at least 1");
    }
    if run.truncation == 0 || run.truncation > MAX_TRUNCATION {
        r.push("run.truncation", format!("must lie in 1..={MAX_TRUNCATION}"));
    }
}

fn check_verify(v: &VerifyConfig, r: &mut Report) {
    if v.sizes.is_empty() {
        r.push("verify.sizes", "at least one size is required");
    }
    for (i, &n) in v.sizes.iter().enumerate() {
        if n < 8 || !n.is_power_of_two() {
            r.push(format!("verify.sizes[{i}]"), format!("{n} is not a power of two of at least 8"));
        }
    }
    if v.states == 0 {
        r.push("verify.states", "must be at least 1");
    }
    if !finite_positive(v.half_width) {
        r.push("verify.half_width", "must be positive");
    }
    if !finite_positive(v.variance) {
        r.push("verify.variance", "must be positive");
    }
}
