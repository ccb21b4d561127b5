//! Systems, symbols and operators assembled from a validated config.

use std::sync::Arc;

use ndarray::Array2;
use phaselab::feedback::{embed_symbol, CouplingSpec, LocalOperator, Role, SubsystemLayout};
use phaselab::fourier::C64;
use phaselab::hilbert::{CompositeSystem, Factor};
use phaselab::lattice::{make_phase_space_from, PhaseSpaceSpec};
use phaselab::linalg;
use phaselab::states::StateRecipe;
use phaselab::symbol::{HamiltonianSymbol, Monomial};

use crate::config::{FactorConfig, FactorKind, ScenarioConfig, TermConfig};
use crate::error::{CliError, Result};

pub fn factor(f: &FactorConfig) -> Result<Factor> {
    Ok(match f.kind {
        FactorKind::Grid => Factor::Grid(make_phase_space_from(&f.params().expect("grid factor"))?),
        FactorKind::Levels => Factor::Levels(f.n),
    })
}

/// Factors in declaration order.
pub fn system(cfg: &ScenarioConfig) -> Result<Arc<CompositeSystem>> {
    let parts = cfg.factors.iter().map(|f| Ok((f.label.clone(), factor(f)?))).collect::<Result<Vec<_>>>()?;
    Ok(CompositeSystem::new(parts)?)
}

/// The shared phase lattice of `system`, or a usage error naming `command`.
pub fn phase_space(system: &CompositeSystem, command: &str) -> Result<Arc<PhaseSpaceSpec>> {
    system.phase_space().cloned().ok_or_else(|| {
        CliError::Usage(format!(
            "`{command}` needs grid factors sharing one lattice (same n and half_width); this layout has none"
        ))
    })
}

fn local_symbol(t: &TermConfig) -> Result<HamiltonianSymbol> {
    Ok(HamiltonianSymbol::polynomial(
        t.powers_q.len(),
        vec![Monomial::new(t.powers_q.clone(), t.powers_p.clone(), t.coeff)],
    )?)
}

/// Support labels of the factors a term actually involves; constant terms sit on the first label.
fn active_support<'a>(cfg: &'a ScenarioConfig, t: &'a TermConfig) -> (Vec<&'a str>, TermConfig) {
    let support = cfg.support_of(t);
    let mut keep = Vec::new();
    let (mut q, mut p) = (Vec::new(), Vec::new());
    let mut off = 0;
    for l in &support {
        let n = cfg.factor(l).map_or(0, FactorConfig::dof);
        let (tq, tp) = (&t.powers_q[off..off + n], &t.powers_p[off..off + n]);
        if tq.iter().chain(tp).any(|&e| e > 0) {
            keep.push(*l);
            q.extend_from_slice(tq);
            p.extend_from_slice(tp);
        }
        off += n;
    }
    if keep.is_empty() {
        let n = cfg.factor(support[0]).map_or(0, FactorConfig::dof);
        keep.push(support[0]);
        q = vec![0; n];
        p = vec![0; n];
    }
    let term =
        TermConfig { support: keep.iter().map(|l| l.to_string()).collect(), powers_q: q, powers_p: p, coeff: t.coeff };
    (keep, term)
}

fn all_terms(cfg: &ScenarioConfig) -> impl Iterator<Item = &TermConfig> {
    cfg.hamiltonian.terms.iter().chain(&cfg.coupling)
}

/// Every Hamiltonian and coupling term over the degrees of freedom of `system`, with the schedule attached.
pub fn composite_symbol(cfg: &ScenarioConfig, system: &CompositeSystem) -> Result<HamiltonianSymbol> {
    let mut terms = Vec::new();
    for t in all_terms(cfg) {
        let embedded = embed_symbol(system, &cfg.support_of(t), &local_symbol(t)?)?;
        terms.extend(embedded.terms().iter().cloned());
    }
    let symbol = HamiltonianSymbol::polynomial(system.dof(), terms)?;
    if cfg.hamiltonian.schedule.is_empty() {
        Ok(symbol)
    } else {
        Ok(symbol.with_schedule(cfg.hamiltonian.schedule.clone())?)
    }
}

/// The initial-state recipe with product parts reordered to follow `system`.
pub fn recipe_for(cfg: &ScenarioConfig, system: &CompositeSystem) -> StateRecipe {
    match &cfg.initial_state {
        StateRecipe::Product { parts } => {
            let reordered = system
                .labels()
                .iter()
                .map(|l| {
                    let i = cfg.factors.iter().position(|f| &f.label == l).expect("label from config");
                    parts[i].clone()
                })
                .collect();
            StateRecipe::Product { parts: reordered }
        }
        other => other.clone(),
    }
}

pub struct FeedbackModel {
    pub layout: SubsystemLayout,
    pub hamiltonian: Array2<C64>,
    pub plant_hamiltonian: Array2<C64>,
    /// Coupling on `𝒫 ⊗ 𝒞`.
    pub coupling: Array2<C64>,
    pub symbol: HamiltonianSymbol,
}

pub fn feedback_model(cfg: &ScenarioConfig) -> Result<FeedbackModel> {
    if !cfg.hamiltonian.schedule.is_empty() {
        return Err(CliError::Usage("feedback scenarios take static Hamiltonians; remove the schedule".into()));
    }
    let mut parts = Vec::new();
    for f in &cfg.factors {
        let role = Role::parse(&f.label).ok_or_else(|| {
            CliError::Usage(format!("feedback factors are labeled P1, P2, C1, C2 or X; found `{}`", f.label))
        })?;
        parts.push((role, factor(f)?));
    }
    let layout = SubsystemLayout::new(parts)?;
    let system = layout.system().clone();
    let plant_sys = layout.plant_system()?;
    let plant = layout.plant_labels();
    let controller = layout.controller_labels();

    let mut h = Array2::<C64>::zeros((system.dim(), system.dim()));
    let mut h_p = Array2::<C64>::zeros((plant_sys.dim(), plant_sys.dim()));
    for (k, t) in cfg.hamiltonian.terms.iter().enumerate() {
        let (support, t) = active_support(cfg, t);
        let on_plant = support.iter().any(|l| plant.contains(l));
        let on_controller = support.iter().any(|l| controller.contains(l));
        if on_plant && on_controller && !support.contains(&Role::X.label()) {
            return Err(CliError::Usage(format!(
                "hamiltonian.terms[{k}] acts on both plant and controller; list it under `coupling`"
            )));
        }
        let op = LocalOperator::from_symbol(&system, &support, &local_symbol(&t)?)?;
        h += &op.embed(&system)?;
        if support.iter().all(|l| plant.contains(l)) {
            h_p += &op.embed(&plant_sys)?;
        }
    }
    let mut coupling = CouplingSpec::default();
    for t in &cfg.coupling {
        let (support, t) = active_support(cfg, t);
        let op = LocalOperator::from_symbol(&system, &support, &local_symbol(&t)?)?;
        h += &op.embed(&system)?;
        coupling.terms.push(op);
    }
    let k = coupling.operator(&layout)?;
    let symbol = composite_symbol(cfg, &system)?;
    Ok(FeedbackModel {
        layout,
        hamiltonian: linalg::symmetrize(&h),
        plant_hamiltonian: linalg::symmetrize(&h_p),
        coupling: k,
        symbol,
    })
}
