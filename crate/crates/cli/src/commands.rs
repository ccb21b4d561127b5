//! The six batch commands. Each writes its artifacts through [`Outputs`] and
//! returns the tolerance violations and warnings it found.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use ndarray::Array2;
use phaselab::error::Error as CoreError;
use phaselab::feedback::{classify_coupling, run_classical_scenario, run_scenario, FeedbackVerdict, PlantRow};
use phaselab::field::PhaseSpaceField;
use phaselab::fourier::C64;
use phaselab::hilbert::DensityOperator;
use phaselab::io::{write_diagnostics_csv, write_plant_csv};
use phaselab::linalg;
use phaselab::moyal::{evolve, oracle_for_symbol, DiagnosticsRow, Evolution, EvolutionRun, MoyalGenerator};
use phaselab::states::prepare;
use phaselab::symbol::HamiltonianSymbol;
use phaselab::weyl::weyl_quantize;
use phaselab::wigner::{eta_density, inverse_wigner, wigner_from_density, wigner_from_eta};
use serde::Serialize;

use crate::config::{Route, ScenarioConfig};
use crate::error::{CliError, Result};
use crate::model;
use crate::output::{Manifest, ManifestInfo, Outputs};
use crate::verify;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Transform,
    Evolve,
    Oracle,
    Compare,
    Feedback,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Transform => "transform",
            Command::Evolve => "evolve",
            Command::Oracle => "oracle",
            Command::Compare => "compare",
            Command::Feedback => "feedback",
            Command::Verify => "verify",
        }
    }
}

pub struct Context {
    pub config: ScenarioConfig,
    pub config_text: String,
    pub out: PathBuf,
    pub seed: u64,
    pub strict: bool,
}

pub struct Outcome {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub manifest: Manifest,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Default)]
struct Findings {
    violations: Vec<String>,
    warnings: Vec<String>,
}

impl Findings {
    /// Records a violation unless `value <= tol`; NaN always violates.
    fn at_most(&mut self, what: &str, value: f64, tol: f64) {
        if !(value <= tol) {
            self.violations.push(format!("{what} = {value:.3e} exceeds {tol:.1e}"));
        }
    }
}

pub fn run(command: Command, ctx: &Context) -> Result<Outcome> {
    let mut out = Outputs::new(&ctx.out, &ctx.config.output)?;
    let mut f = Findings::default();
    match command {
        Command::Transform => transform(ctx, &mut out, &mut f)?,
        Command::Evolve => evolve_cmd(ctx, &mut out, &mut f)?,
        Command::Oracle => oracle(ctx, &mut out, &mut f)?,
        Command::Compare => compare(ctx, &mut out, &mut f)?,
        Command::Feedback => feedback(ctx, &mut out, &mut f)?,
        Command::Verify => verify_cmd(ctx, &mut out, &mut f)?,
    }
    f.warnings.append(&mut out.warnings);
    for w in &f.warnings {
        log::warn!("{w}");
    }
    if ctx.strict {
        let promoted: Vec<String> = f.warnings.iter().map(|w| format!("warning (strict): {w}")).collect();
        f.violations.extend(promoted);
    }
    let manifest = out.finish(ManifestInfo {
        command: command.name(),
        config_text: &ctx.config_text,
        seed: ctx.seed,
        tolerances: &ctx.config.tolerances,
        violations: &f.violations,
        warnings: &f.warnings,
    })?;
    Ok(Outcome { violations: f.violations, warnings: f.warnings, manifest })
}

/// Indices of run snapshots to persist: every `stride`-th and the last.
fn kept(count: usize, stride: usize) -> Vec<usize> {
    let mut k: Vec<usize> = (0..count).step_by(stride.max(1)).collect();
    if count > 0 && k.last() != Some(&(count - 1)) {
        k.push(count - 1);
    }
    k
}

fn energy_operators<'a>(
    symbol: &'a HamiltonianSymbol,
    state: &DensityOperator,
) -> impl FnMut(f64) -> Result<Array2<C64>> + 'a {
    let system = state.system().clone();
    let mut cache: HashMap<Option<usize>, Array2<C64>> = HashMap::new();
    move |t| {
        let seg = symbol.segment_at(t);
        if let Entry::Vacant(e) = cache.entry(seg) {
            e.insert(weyl_quantize(&symbol.at(t), &system)?);
        }
        Ok(cache[&seg].clone())
    }
}

#[derive(Serialize)]
struct TransformReport {
    trace: f64,
    purity: f64,
    energy: f64,
    wigner: Option<WignerStats>,
}

#[derive(Serialize)]
struct WignerStats {
    integral: f64,
    purity: f64,
    min: f64,
    max_abs: f64,
    bound: f64,
    inversion_error: f64,
    eta_integral: Option<f64>,
}

fn transform(ctx: &Context, out: &mut Outputs, f: &mut Findings) -> Result<()> {
    let cfg = &ctx.config;
    let tol = &cfg.tolerances;
    let sys = model::system(cfg)?;
    let symbol = model::composite_symbol(cfg, &sys)?;
    let t = prepare(&model::recipe_for(cfg, &sys), &sys)?;
    out.density("density", &t, Some(0.0))?;
    let energy = linalg::trace_product(t.matrix(), &energy_operators(&symbol, &t)(0.0)?).re;
    let wigner = match sys.phase_space() {
        None => {
            f.warnings.push("no shared phase lattice; only the density operator is written".into());
            None
        }
        Some(spec) => {
            let w = wigner_from_density(&t)?;
            out.field("wigner", &w, Some(0.0), "Wigner density")?;
            let bound = PI.powi(-(spec.d() as i32));
            let back = inverse_wigner(&w)?;
            let inversion_error = linalg::frobenius(&(back.matrix() - t.matrix())) / linalg::frobenius(t.matrix());
            let eta_integral = match eta_density(&w) {
                Ok(phi) => {
                    out.field("eta", &phi, Some(0.0), "Wigner eta-density")?;
                    Some(phi.integral_against_eta())
                }
                Err(e @ CoreError::UnderflowRegion { .. }) => {
                    f.warnings.push(format!("eta-density skipped: {e}"));
                    None
                }
                Err(e) => return Err(e.into()),
            };
            let row = DiagnosticsRow {
                t: 0.0,
                mass: w.integral(),
                l2: w.l2_norm(),
                energy,
                min_w: w.min(),
                purity_est: w.purity(),
            };
            out.csv("diagnostics.csv", |wr| write_diagnostics_csv(&[row], wr))?;
            f.at_most("|∫W - tr T|", (w.integral() - t.trace()).abs(), tol.normalization);
            f.at_most("|(2π)^d ∫W² - tr T²|", (w.purity() - t.purity()).abs(), tol.purity);
            f.at_most("max|W| - π^-d", (w.max_abs() - bound).max(0.0), tol.normalization);
            f.at_most("inversion error", inversion_error, tol.normalization);
            if let Some(m) = eta_integral {
                f.at_most("|∫Φ d(μ⊗ν) - 1|", (m - 1.0).abs(), tol.normalization);
            }
            Some(WignerStats {
                integral: w.integral(),
                purity: w.purity(),
                min: w.min(),
                max_abs: w.max_abs(),
                bound,
                inversion_error,
                eta_integral,
            })
        }
    };
    out.json("transform.json", &TransformReport { trace: t.trace(), purity: t.purity(), energy, wigner })
}

struct Prepared {
    symbol: HamiltonianSymbol,
    state: DensityOperator,
    generator: MoyalGenerator,
    run: EvolutionRun,
}

/// Symbol, initial state, generator and run parameters shared by `evolve` and `compare`.
fn prepare_dynamics(cfg: &ScenarioConfig, command: &str) -> Result<Prepared> {
    let sys = model::system(cfg)?;
    let spec = model::phase_space(&sys, command)?;
    let symbol = model::composite_symbol(cfg, &sys)?;
    let state = prepare(&model::recipe_for(cfg, &sys), &sys)?;
    let generator = MoyalGenerator::new(&symbol, cfg.run.truncation, cfg.run.scheme, spec)?;
    let dt = cfg.run.dt.unwrap_or(0.95 * generator.cfl_limit());
    let run = EvolutionRun { dt, t_end: cfg.run.t_end, stride: cfg.run.stride, cfl_override: !cfg.run.dt_guard };
    Ok(Prepared { symbol, state, generator, run })
}

fn moyal_run(cfg: &ScenarioConfig, p: &Prepared) -> Result<Evolution> {
    let w0 = wigner_from_density(&p.state)?;
    let initial = match cfg.run.route {
        Route::Wigner => w0,
        Route::Eta => eta_density(&w0)?,
    };
    log::info!("moyal run: dt = {:.3e}, {} steps, K = {}", p.run.effective_dt(), p.run.steps(), cfg.run.truncation);
    Ok(evolve(&initial, &p.generator, &p.run)?)
}

fn as_wigner(field: &PhaseSpaceField, route: Route) -> Result<PhaseSpaceField> {
    Ok(match route {
        Route::Wigner => field.clone(),
        Route::Eta => wigner_from_eta(field)?,
    })
}

fn max_mass_drift(rows: &[DiagnosticsRow]) -> f64 {
    let m0 = rows.first().map_or(0.0, |r| r.mass);
    rows.iter().map(|r| (r.mass - m0).abs()).fold(0.0, f64::max)
}

#[derive(Serialize)]
struct EvolveReport {
    route: Route,
    truncation: usize,
    dt: f64,
    steps: usize,
    stability_guard: f64,
    max_mass_drift: f64,
    last: Option<DiagnosticsRow>,
}

fn evolve_cmd(ctx: &Context, out: &mut Outputs, f: &mut Findings) -> Result<()> {
    let cfg = &ctx.config;
    let p = prepare_dynamics(cfg, "evolve")?;
    let ev = moyal_run(cfg, &p)?;
    f.warnings.extend(ev.warnings.iter().cloned());
    out.csv("diagnostics.csv", |w| write_diagnostics_csv(&ev.diagnostics, w))?;
    let (prefix, title) = match cfg.run.route {
        Route::Wigner => ("w", "Wigner density"),
        Route::Eta => ("phi", "Wigner eta-density"),
    };
    for k in kept(ev.snapshots.len(), cfg.output.stride) {
        let s = &ev.snapshots[k];
        out.field(&format!("snapshots/{prefix}_{k:04}"), &s.field, Some(s.t), &format!("{title}, t = {:.4}", s.t))?;
    }
    let drift = max_mass_drift(&ev.diagnostics);
    f.at_most("mass drift", drift, cfg.tolerances.mass_drift);
    out.json(
        "evolve.json",
        &EvolveReport {
            route: cfg.run.route,
            truncation: cfg.run.truncation,
            dt: ev.dt,
            steps: p.run.steps(),
            stability_guard: p.generator.cfl_limit(),
            max_mass_drift: drift,
            last: ev.diagnostics.last().copied(),
        },
    )
}

fn oracle(ctx: &Context, out: &mut Outputs, f: &mut Findings) -> Result<()> {
    let cfg = &ctx.config;
    let sys = model::system(cfg)?;
    let symbol = model::composite_symbol(cfg, &sys)?;
    let state = prepare(&model::recipe_for(cfg, &sys), &sys)?;
    let dt = match (cfg.run.dt, sys.phase_space()) {
        (Some(dt), _) => dt,
        (None, Some(spec)) => {
            0.95 * MoyalGenerator::new(&symbol, cfg.run.truncation, cfg.run.scheme, spec.clone())?.cfl_limit()
        }
        (None, None) => return Err(CliError::Usage("`oracle` without a phase lattice needs run.dt".into())),
    };
    let run = EvolutionRun::new(dt, cfg.run.t_end, cfg.run.stride);
    run.validate()?;
    let times = run.snapshot_times();
    let states = oracle_for_symbol(&state, &symbol, &times)?;
    let mut energy_of = energy_operators(&symbol, &state);
    let mut text = String::from("t,trace,purity,energy\n");
    let p0 = state.purity();
    let (mut trace_err, mut purity_err) = (0f64, 0f64);
    for (t, s) in times.iter().zip(&states) {
        let e = linalg::trace_product(s.matrix(), &energy_of(*t)?).re;
        text.push_str(&format!("{:e},{:e},{:e},{:e}\n", t, s.trace(), s.purity(), e));
        trace_err = trace_err.max((s.trace() - 1.0).abs());
        purity_err = purity_err.max((s.purity() - p0).abs());
    }
    if out.wants(crate::config::Format::Csv) {
        out.text("oracle.csv", &text)?;
    }
    for k in kept(states.len(), cfg.output.stride) {
        let (t, s) = (times[k], &states[k]);
        out.density(&format!("snapshots/rho_{k:04}"), s, Some(t))?;
        if sys.phase_space().is_some() {
            out.field(
                &format!("snapshots/w_{k:04}"),
                &wigner_from_density(s)?,
                Some(t),
                &format!("Wigner density, t = {t:.4}"),
            )?;
        }
    }
    f.at_most("max |tr T(t) - 1|", trace_err, cfg.tolerances.normalization);
    f.at_most("max |tr T(t)² - tr T(0)²|", purity_err, cfg.tolerances.purity);
    Ok(())
}

#[derive(Serialize)]
struct SnapshotError {
    t: f64,
    max_abs: f64,
}

#[derive(Serialize)]
struct CompareReport {
    route: Route,
    truncation: usize,
    dt: f64,
    steps: usize,
    tolerance: f64,
    max_abs: f64,
    /// `max|W(T) - W(0)|` of the Moyal run.
    return_gap: f64,
    max_mass_drift: f64,
    pass: bool,
    snapshots: Vec<SnapshotError>,
}

fn compare(ctx: &Context, out: &mut Outputs, f: &mut Findings) -> Result<()> {
    let cfg = &ctx.config;
    let p = prepare_dynamics(cfg, "compare")?;
    let ev = moyal_run(cfg, &p)?;
    f.warnings.extend(ev.warnings.iter().cloned());
    let times: Vec<f64> = ev.snapshots.iter().map(|s| s.t).collect();
    let states = oracle_for_symbol(&p.state, &p.symbol, &times)?;
    let mut errors = Vec::with_capacity(times.len());
    let keep = kept(times.len(), cfg.output.stride);
    let mut first = None;
    let mut return_gap = 0.0;
    for (k, (s, exact)) in ev.snapshots.iter().zip(&states).enumerate() {
        let moyal = as_wigner(&s.field, cfg.run.route)?;
        let oracle = wigner_from_density(exact)?;
        errors.push(SnapshotError { t: s.t, max_abs: moyal.max_abs_diff(&oracle)? });
        if keep.contains(&k) {
            out.field(&format!("snapshots/moyal_{k:04}"), &moyal, Some(s.t), &format!("Moyal, t = {:.4}", s.t))?;
            out.field(
                &format!("snapshots/oracle_{k:04}"),
                &oracle,
                Some(s.t),
                &format!("von Neumann, t = {:.4}", s.t),
            )?;
        }
        match &first {
            None => first = Some(moyal),
            Some(w0) => return_gap = moyal.max_abs_diff(w0)?,
        }
    }
    let max_abs = errors.iter().map(|e| e.max_abs).fold(0.0, f64::max);
    out.csv("diagnostics.csv", |w| write_diagnostics_csv(&ev.diagnostics, w))?;
    if out.wants(crate::config::Format::Csv) {
        let mut text = String::from("t,max_abs\n");
        for e in &errors {
            text.push_str(&format!("{:e},{:e}\n", e.t, e.max_abs));
        }
        out.text("compare.csv", &text)?;
    }
    f.at_most("max|W_moyal - W_oracle|", max_abs, cfg.tolerances.oracle);
    let report = CompareReport {
        route: cfg.run.route,
        truncation: cfg.run.truncation,
        dt: ev.dt,
        steps: p.run.steps(),
        tolerance: cfg.tolerances.oracle,
        max_abs,
        return_gap,
        max_mass_drift: max_mass_drift(&ev.diagnostics),
        pass: max_abs <= cfg.tolerances.oracle,
        snapshots: errors,
    };
    out.json("compare.json", &report)
}

#[derive(Serialize)]
struct VerdictReport<'a> {
    roles: Vec<&'static str>,
    #[serde(flatten)]
    verdict: &'a FeedbackVerdict,
}

#[derive(Serialize)]
struct FeedbackReport {
    class: String,
    min_plant_purity: f64,
    final_plant: Option<PlantRow>,
    max_square_gap: Option<f64>,
    classical_final: Option<PlantRow>,
}

fn feedback(ctx: &Context, out: &mut Outputs, f: &mut Findings) -> Result<()> {
    let cfg = &ctx.config;
    let fm = model::feedback_model(cfg)?;
    let verdict = classify_coupling(&fm.coupling, &fm.layout)?;
    log::info!("coupling class: {:?} (residual {:.3e})", verdict.class, verdict.residual);
    let roles = fm.layout.roles().iter().map(|r| r.label()).collect();
    out.json("verdict.json", &VerdictReport { roles, verdict: &verdict })?;

    let system = fm.layout.system().clone();
    let t0 = prepare(&model::recipe_for(cfg, &system), &system)?;
    let classical_gen = match (cfg.run.classical, system.phase_space()) {
        (true, Some(spec)) => Some(MoyalGenerator::classical(&fm.symbol, spec.clone())?),
        (true, None) => {
            return Err(CliError::Usage("run.classical needs grid factors sharing one lattice".into()));
        }
        (false, _) => None,
    };
    let dt = match (cfg.run.dt, &classical_gen) {
        (Some(dt), _) => dt,
        (None, Some(g)) => 0.95 * g.cfl_limit(),
        (None, None) => return Err(CliError::Usage("`feedback` needs run.dt".into())),
    };
    let run = EvolutionRun { dt, t_end: cfg.run.t_end, stride: cfg.run.stride, cfl_override: !cfg.run.dt_guard };
    let res = run_scenario(&fm.layout, &fm.hamiltonian, &fm.plant_hamiltonian, &t0, &run)?;
    out.csv("plant.csv", |w| write_plant_csv(&res.rows, w))?;
    for k in kept(res.snapshots.len(), cfg.output.stride) {
        let s = &res.snapshots[k];
        out.density(&format!("snapshots/plant_rho_{k:04}"), &s.state, Some(s.t))?;
        if let Some(w) = &s.wigner {
            out.field(
                &format!("snapshots/plant_w_{k:04}"),
                w,
                Some(s.t),
                &format!("plant Wigner density, t = {:.4}", s.t),
            )?;
        }
    }
    let trace_err = res.rows.iter().map(|r| (r.plant_trace - 1.0).abs()).fold(0.0, f64::max);
    f.at_most("max |tr T_P - 1|", trace_err, cfg.tolerances.normalization);
    let max_square_gap = res.rows.iter().filter_map(|r| r.square_gap).reduce(f64::max);
    if let Some(g) = max_square_gap {
        f.at_most("commuting-square gap", g, cfg.tolerances.square_gap);
    }

    let mut classical_final = None;
    if cfg.run.classical {
        let w0 = wigner_from_density(&t0)?;
        let (rows, fields, warnings) = run_classical_scenario(&fm.layout, &fm.symbol, &w0, &run)?;
        f.warnings.extend(warnings);
        out.csv("classical.csv", |w| write_plant_csv(&rows, w))?;
        for k in kept(fields.len(), cfg.output.stride) {
            let t = rows[k].t;
            out.field(
                &format!("snapshots/classical_w_{k:04}"),
                &fields[k],
                Some(t),
                &format!("classical plant, t = {t:.4}"),
            )?;
        }
        classical_final = rows.last().copied();
    }
    let class = serde_json::to_value(verdict.class)?.as_str().unwrap_or_default().to_string();
    out.json(
        "feedback.json",
        &FeedbackReport {
            class,
            min_plant_purity: res.rows.iter().map(|r| r.plant_purity).fold(f64::INFINITY, f64::min),
            final_plant: res.rows.last().copied(),
            max_square_gap,
            classical_final,
        },
    )
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    seed: u64,
    passed: usize,
    failed: usize,
    checks: &'a [verify::Check],
}

fn verify_cmd(ctx: &Context, out: &mut Outputs, f: &mut Findings) -> Result<()> {
    let checks = verify::run_suite(&ctx.config.verify, ctx.seed)?;
    let mut text = String::from("invariant,size,residual,tolerance,bound,pass\n");
    for c in &checks {
        let size = c.size.map(|n| n.to_string()).unwrap_or_default();
        let bound = if c.bound == verify::Bound::Upper { "upper" } else { "lower" };
        text.push_str(&format!("{},{size},{:e},{:e},{bound},{}\n", c.invariant, c.residual, c.tolerance, c.pass));
        if !c.pass {
            let at = c.size.map(|n| format!(" (n = {n})")).unwrap_or_default();
            f.violations.push(format!("{}{at}: residual {:.3e} against {:.1e}", c.invariant, c.residual, c.tolerance));
        }
    }
    if out.wants(crate::config::Format::Csv) {
        out.text("verify.csv", &text)?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    out.json("verify.json", &VerifyReport { seed: ctx.seed, passed: checks.len() - failed, failed, checks: &checks })
}
