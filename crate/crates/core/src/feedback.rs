//! Plant/controller composites, their Hamiltonians and the feedback classifier.
//!
//! Factors are ordered `P1, P2, C1, C2` (optional ones omitted) followed by an
//! optional perturbation factor `X`, so that `ℋ = 𝒫 ⊗ 𝒞 (⊗ X)`. Couplings live
//! on `𝒫 ⊗ 𝒞`.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PhaseSpaceField;
use crate::fourier::C64;
use crate::hilbert::{partial_trace, CompositeSystem, DensityOperator, Factor};
use crate::linalg;
use crate::moyal::{evolve, von_neumann_oracle, EvolutionRun, MoyalGenerator};
use crate::symbol::{HamiltonianSymbol, Monomial};
use crate::weyl::weyl_quantize;
use crate::wigner::{reduce_wigner, wigner_from_density};

pub const DIMENSION_CAP: usize = 65536;
pub const RESIDUAL_LIMIT: f64 = 1e-8;
pub const NON_SCALAR_LIMIT: f64 = 1e-8;
const HERMITIAN_LIMIT: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    P1,
    P2,
    C1,
    C2,
    X,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::P1 => "P1",
            Role::P2 => "P2",
            Role::C1 => "C1",
            Role::C2 => "C2",
            Role::X => "X",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        Some(match label {
            "P1" => Role::P1,
            "P2" => Role::P2,
            "C1" => Role::C1,
            "C2" => Role::C2,
            "X" => Role::X,
            _ => return None,
        })
    }

    /// The role exchanged by the plant/controller swap `P1↔P2, C1↔C2`.
    pub fn mirrored(self) -> Self {
        match self {
            Role::P1 => Role::P2,
            Role::P2 => Role::P1,
            Role::C1 => Role::C2,
            Role::C2 => Role::C1,
            Role::X => Role::X,
        }
    }
}

/// Labeled plant, controller and perturbation factors.
#[derive(Clone, Debug)]
pub struct SubsystemLayout {
    roles: Vec<Role>,
    system: Arc<CompositeSystem>,
}

impl SubsystemLayout {
    pub fn new(mut parts: Vec<(Role, Factor)>) -> Result<Self> {
        parts.sort_by_key(|(r, _)| *r);
        if parts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::FactorMismatch("duplicate role".into()));
        }
        for need in [Role::P1, Role::C1] {
            if !parts.iter().any(|(r, _)| *r == need) {
                return Err(Error::FactorMismatch(format!("layout has no {} factor", need.label())));
            }
        }
        let dim = parts.iter().fold(1usize, |acc, (_, f)| acc.saturating_mul(f.dim()));
        if dim > DIMENSION_CAP {
            return Err(Error::DimensionCap { dim, cap: DIMENSION_CAP });
        }
        let roles = parts.iter().map(|(r, _)| *r).collect();
        let system = CompositeSystem::new(parts.into_iter().map(|(r, f)| (r.label().to_string(), f)).collect())?;
        Ok(Self { roles, system })
    }

    /// Every role with `n` oscillator levels.
    pub fn levels(roles: &[Role], n: usize) -> Result<Self> {
        Self::new(roles.iter().map(|&r| (r, Factor::Levels(n))).collect())
    }

    pub fn system(&self) -> &Arc<CompositeSystem> {
        &self.system
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn dim_of(&self, role: Role) -> usize {
        self.system.factor(role.label()).map(Factor::dim).unwrap_or(1)
    }

    pub fn plant_labels(&self) -> Vec<&'static str> {
        self.present(&[Role::P1, Role::P2])
    }

    pub fn controller_labels(&self) -> Vec<&'static str> {
        self.present(&[Role::C1, Role::C2])
    }

    /// Labels of `𝒫 ⊗ 𝒞`.
    pub fn coupling_labels(&self) -> Vec<&'static str> {
        self.present(&[Role::P1, Role::P2, Role::C1, Role::C2])
    }

    fn present(&self, roles: &[Role]) -> Vec<&'static str> {
        roles.iter().filter(|r| self.has(**r)).map(|r| r.label()).collect()
    }

    pub fn plant_system(&self) -> Result<Arc<CompositeSystem>> {
        self.system.subsystem(&self.plant_labels())
    }

    pub fn controller_system(&self) -> Result<Arc<CompositeSystem>> {
        self.system.subsystem(&self.controller_labels())
    }

    pub fn coupling_system(&self) -> Result<Arc<CompositeSystem>> {
        self.system.subsystem(&self.coupling_labels())
    }

    fn require_all_four(&self) -> Result<()> {
        for r in [Role::P2, Role::C2] {
            if !self.has(r) {
                return Err(Error::FactorMismatch(format!("layout has no {} factor", r.label())));
            }
        }
        Ok(())
    }
}

/// Hermitian operator on a named subset of factors, identity elsewhere.
#[derive(Clone, Debug)]
pub struct LocalOperator {
    pub support: Vec<String>,
    pub matrix: Array2<C64>,
}

impl LocalOperator {
    pub fn new(support: &[&str], matrix: Array2<C64>) -> Self {
        Self { support: support.iter().map(|s| s.to_string()).collect(), matrix }
    }

    /// Weyl quantization of a polynomial symbol over the support's degrees of freedom.
    pub fn from_symbol(system: &CompositeSystem, support: &[&str], symbol: &HamiltonianSymbol) -> Result<Self> {
        let parts =
            support.iter().map(|l| Ok((l.to_string(), system.factor(l)?.clone()))).collect::<Result<Vec<_>>>()?;
        let local = CompositeSystem::new(parts)?;
        Ok(Self::new(support, weyl_quantize(symbol, &local)?))
    }

    /// Embedding into `system`, whose factors must include the support.
    pub fn embed(&self, system: &CompositeSystem) -> Result<Array2<C64>> {
        let mut cur = Vec::with_capacity(system.dims().len());
        for l in &self.support {
            let i = system.index_of(l)?;
            if cur.contains(&i) {
                return Err(Error::FactorMismatch(format!("factor `{l}` appears twice in a support")));
            }
            cur.push(i);
        }
        let local: usize = cur.iter().map(|&i| system.dims()[i]).product();
        if self.matrix.dim() != (local, local) {
            return Err(Error::FactorMismatch(format!(
                "operator on {:?} is {:?}, expected {local}x{local}",
                self.support,
                self.matrix.dim()
            )));
        }
        check_hermitian(&self.support.join("⊗"), &self.matrix)?;
        let rest: Vec<usize> = (0..system.dims().len()).filter(|k| !cur.contains(k)).collect();
        let rest_dim: usize = rest.iter().map(|&k| system.dims()[k]).product();
        cur.extend(&rest);
        let full = linalg::kron(&self.matrix, &linalg::identity(rest_dim));
        let dims_cur: Vec<usize> = cur.iter().map(|&k| system.dims()[k]).collect();
        let order: Vec<usize> = (0..cur.len()).map(|k| cur.iter().position(|&c| c == k).unwrap()).collect();
        Ok(linalg::permute_factors(&full, &dims_cur, &order))
    }
}

/// Coupling terms on `𝒫 ⊗ 𝒞`.
#[derive(Clone, Debug, Default)]
pub struct CouplingSpec {
    pub terms: Vec<LocalOperator>,
}

impl CouplingSpec {
    pub fn operator(&self, layout: &SubsystemLayout) -> Result<Array2<C64>> {
        let sys = layout.coupling_system()?;
        let mut out = Array2::zeros((sys.dim(), sys.dim()));
        for t in &self.terms {
            if t.support.iter().any(|l| l == Role::X.label()) {
                return Err(Error::FactorMismatch("couplings act on plant and controller factors only".into()));
            }
            out += &t.embed(&sys)?;
        }
        Ok(out)
    }
}

fn check_hermitian(name: &str, m: &Array2<C64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::FactorMismatch(format!("`{name}` is not square")));
    }
    let scale = linalg::max_abs(m).max(1.0);
    if linalg::hermitian_deviation(m) > HERMITIAN_LIMIT * scale {
        return Err(Error::NonHermitianInput(name.to_string()));
    }
    Ok(())
}

fn embed_on(layout: &SubsystemLayout, support: &[&str], m: &Array2<C64>, name: &str) -> Result<Array2<C64>> {
    check_hermitian(name, m)?;
    LocalOperator::new(support, m.clone()).embed(layout.system())
}

/// `Ĥ_P ⊗ I_C + I_P ⊗ Ĥ_C + 𝒦̂`, with `𝒦̂` given on `𝒫 ⊗ 𝒞`.
pub fn build_general_hamiltonian(
    h_p: &Array2<C64>,
    h_c: &Array2<C64>,
    k: &Array2<C64>,
    layout: &SubsystemLayout,
) -> Result<Array2<C64>> {
    let mut out = embed_on(layout, &layout.plant_labels(), h_p, "H_P")?;
    out += &embed_on(layout, &layout.controller_labels(), h_c, "H_C")?;
    out += &embed_on(layout, &layout.coupling_labels(), k, "K")?;
    Ok(linalg::symmetrize(&out))
}

/// `K̂₁ ⊗ I_{P2⊗C2} + I_{P1⊗C1} ⊗ K̂₂` on `𝒫 ⊗ 𝒞`.
pub fn feedback_coupling(k1: &Array2<C64>, k2: &Array2<C64>, layout: &SubsystemLayout) -> Result<Array2<C64>> {
    layout.require_all_four()?;
    check_hermitian("K1", k1)?;
    check_hermitian("K2", k2)?;
    CouplingSpec {
        terms: vec![LocalOperator::new(&["P1", "C1"], k1.clone()), LocalOperator::new(&["P2", "C2"], k2.clone())],
    }
    .operator(layout)
}

/// The coherent feedback Hamiltonian
/// `Ĥ_P ⊗ I_C + I_P ⊗ Ĥ_C + K̂_{P1⊗C1} ⊗ I_{P2⊗C2} + I_{P1⊗C1} ⊗ K̂_{P2⊗C2}`.
pub fn build_feedback_hamiltonian(
    h_p: &Array2<C64>,
    h_c: &Array2<C64>,
    k1: &Array2<C64>,
    k2: &Array2<C64>,
    layout: &SubsystemLayout,
) -> Result<Array2<C64>> {
    let k = feedback_coupling(k1, k2, layout)?;
    build_general_hamiltonian(h_p, h_c, &k, layout)
}

/// Sub-Hamiltonians and couplings of the refined plant/controller model.
#[derive(Clone, Debug)]
pub struct RefinedParts {
    pub h_p1: Array2<C64>,
    pub h_p2: Array2<C64>,
    pub k_p1p2: Array2<C64>,
    pub h_c1: Array2<C64>,
    pub h_c2: Array2<C64>,
    pub k_c1c2: Array2<C64>,
    pub k_p1c1: Array2<C64>,
    pub k_p2c2: Array2<C64>,
}

impl RefinedParts {
    /// All eight terms zero for a layout.
    pub fn zeros(layout: &SubsystemLayout) -> Result<Self> {
        layout.require_all_four()?;
        let z = |a: usize| Array2::<C64>::zeros((a, a));
        let d = |r| layout.dim_of(r);
        Ok(Self {
            h_p1: z(d(Role::P1)),
            h_p2: z(d(Role::P2)),
            k_p1p2: z(d(Role::P1) * d(Role::P2)),
            h_c1: z(d(Role::C1)),
            h_c2: z(d(Role::C2)),
            k_c1c2: z(d(Role::C1) * d(Role::C2)),
            k_p1c1: z(d(Role::P1) * d(Role::C1)),
            k_p2c2: z(d(Role::P2) * d(Role::C2)),
        })
    }
}

/// Eight-term Hamiltonian with internal plant and controller couplings.
pub fn build_refined_hamiltonian(parts: &RefinedParts, layout: &SubsystemLayout) -> Result<Array2<C64>> {
    layout.require_all_four()?;
    let terms: [(&[&str], &Array2<C64>, &str); 8] = [
        (&["P1"], &parts.h_p1, "H_P1"),
        (&["P2"], &parts.h_p2, "H_P2"),
        (&["P1", "P2"], &parts.k_p1p2, "K_P1P2"),
        (&["C1"], &parts.h_c1, "H_C1"),
        (&["C2"], &parts.h_c2, "H_C2"),
        (&["C1", "C2"], &parts.k_c1c2, "K_C1C2"),
        (&["P1", "C1"], &parts.k_p1c1, "K_P1C1"),
        (&["P2", "C2"], &parts.k_p2c2, "K_P2C2"),
    ];
    let dim = layout.system().dim();
    let mut out = Array2::zeros((dim, dim));
    for (support, m, name) in terms {
        out += &embed_on(layout, support, m, name)?;
    }
    Ok(linalg::symmetrize(&out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackClass {
    Feedback,
    NoFeedback,
    General,
}

/// Classification of a coupling across the `(P1⊗C1) | (P2⊗C2)` cut.
///
/// `residual` and the witness norms are relative to the Frobenius norm of
/// the traceless part of `K`.
#[derive(Clone, Debug, Serialize)]
pub struct FeedbackVerdict {
    pub class: FeedbackClass,
    pub residual: f64,
    pub witness_norm_a: f64,
    pub witness_norm_b: f64,
    pub coupling_norm: f64,
    /// Traceless `A` on `P1⊗C1`.
    #[serde(skip)]
    pub a: Option<Array2<C64>>,
    /// Traceless `B` on `P2⊗C2`.
    #[serde(skip)]
    pub b: Option<Array2<C64>>,
}

/// Projects `K` onto `{A ⊗ I + I ⊗ B}` across the cut and reads off the class.
pub fn classify_coupling(k: &Array2<C64>, layout: &SubsystemLayout) -> Result<FeedbackVerdict> {
    let sys = layout.coupling_system()?;
    let dim = sys.dim();
    if k.dim() != (dim, dim) {
        return Err(Error::FactorMismatch(format!("coupling is {:?}, expected {dim}x{dim}", k.dim())));
    }
    check_hermitian("K", k)?;
    let ix = |r: Role| sys.index_of(r.label()).ok();
    let left: Vec<usize> = [Role::P1, Role::C1].into_iter().filter_map(ix).collect();
    let right: Vec<usize> = [Role::P2, Role::C2].into_iter().filter_map(ix).collect();
    let mut order = left.clone();
    order.extend(&right);
    let kk = linalg::permute_factors(k, sys.dims(), &order);
    let dims: Vec<usize> = order.iter().map(|&i| sys.dims()[i]).collect();
    let dx: usize = left.iter().map(|&i| sys.dims()[i]).product();
    let dy: usize = right.iter().map(|&i| sys.dims()[i]).product();

    let shift = linalg::trace(&kk) / dim as f64;
    let mut k0 = kk;
    for i in 0..dim {
        k0[[i, i]] -= shift;
    }
    let norm = linalg::frobenius(&k0);
    if norm == 0.0 {
        return Ok(FeedbackVerdict {
            class: FeedbackClass::NoFeedback,
            residual: 0.0,
            witness_norm_a: 0.0,
            witness_norm_b: 0.0,
            coupling_norm: 0.0,
            a: Some(Array2::zeros((dx, dx))),
            b: Some(Array2::zeros((dy, dy))),
        });
    }
    let nx = left.len();
    let left_ix: Vec<usize> = (0..nx).collect();
    let right_ix: Vec<usize> = (nx..order.len()).collect();
    let a = linalg::partial_trace_factors(&k0, &dims, &left_ix).mapv(|v| v / dy as f64);
    let b = linalg::partial_trace_factors(&k0, &dims, &right_ix).mapv(|v| v / dx as f64);
    let fit = &linalg::kron(&a, &linalg::identity(dy)) + &linalg::kron(&linalg::identity(dx), &b);
    let residual = linalg::frobenius(&(&k0 - &fit)) / norm;
    // A and B are traceless, so their norms are the distances from scalars
    let na = linalg::frobenius(&a) * (dy as f64).sqrt() / norm;
    let nb = linalg::frobenius(&b) * (dx as f64).sqrt() / norm;
    let class = if residual >= RESIDUAL_LIMIT {
        FeedbackClass::General
    } else if na > NON_SCALAR_LIMIT && nb > NON_SCALAR_LIMIT {
        FeedbackClass::Feedback
    } else {
        FeedbackClass::NoFeedback
    };
    let general = class == FeedbackClass::General;
    Ok(FeedbackVerdict {
        class,
        residual,
        witness_norm_a: na,
        witness_norm_b: nb,
        coupling_norm: norm,
        a: (!general).then_some(a),
        b: (!general).then_some(b),
    })
}

/// Shifts the degrees of freedom of a polynomial symbol on `support` to their slots in `system`.
pub fn embed_symbol(
    system: &CompositeSystem,
    support: &[&str],
    symbol: &HamiltonianSymbol,
) -> Result<HamiltonianSymbol> {
    let mut offsets = Vec::new();
    for l in support {
        let i = system.index_of(l)?;
        let off: usize = system.factors()[..i].iter().map(Factor::dof).sum();
        offsets.push((off, system.factors()[i].dof()));
    }
    let local: usize = offsets.iter().map(|o| o.1).sum();
    if symbol.dof() != local {
        return Err(Error::FactorMismatch(format!(
            "symbol has {} degrees of freedom, support {:?} has {local}",
            symbol.dof(),
            support
        )));
    }
    if symbol.sampled().is_some() || symbol.is_time_dependent() {
        return Err(Error::FactorMismatch("only static polynomial symbols can be embedded".into()));
    }
    let total = system.dof();
    let terms = symbol
        .terms()
        .iter()
        .map(|m| {
            let (mut q, mut p) = (vec![0; total], vec![0; total]);
            let mut src = 0;
            for &(off, n) in &offsets {
                for t in 0..n {
                    q[off + t] = m.powers_q[src];
                    p[off + t] = m.powers_p[src];
                    src += 1;
                }
            }
            Monomial::new(q, p, m.coeff)
        })
        .collect();
    HamiltonianSymbol::polynomial(total, terms)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlantRow {
    pub t: f64,
    pub plant_purity: f64,
    pub plant_energy: f64,
    pub plant_trace: f64,
    /// Max-abs gap between the reduced composite Wigner density and the Wigner density of the reduced state.
    pub square_gap: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PlantSnapshot {
    pub t: f64,
    pub state: DensityOperator,
    pub wigner: Option<PhaseSpaceField>,
}

#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub rows: Vec<PlantRow>,
    pub snapshots: Vec<PlantSnapshot>,
}

/// Whether the composite lattice is small enough for the commuting-square check.
fn square_checkable(system: &CompositeSystem) -> bool {
    system.dof() <= 2 && system.phase_space().is_some()
}

/// Evolves the composite state exactly and observes the plant.
///
/// The plant's Wigner snapshots are produced when the plant factors share a
/// phase grid; for composites with at most two degrees of freedom the
/// reduced composite Wigner density is compared against them.
pub fn run_scenario(
    layout: &SubsystemLayout,
    hamiltonian: &Array2<C64>,
    plant_hamiltonian: &Array2<C64>,
    t0: &DensityOperator,
    run: &EvolutionRun,
) -> Result<ScenarioResult> {
    run.validate()?;
    let system = layout.system();
    if t0.system().as_ref() != system.as_ref() {
        return Err(Error::FactorMismatch("initial state does not live on the layout".into()));
    }
    check_hermitian("H", hamiltonian)?;
    let plant = layout.plant_labels();
    let plant_sys = layout.plant_system()?;
    if plant_hamiltonian.dim() != (plant_sys.dim(), plant_sys.dim()) {
        return Err(Error::FactorMismatch("plant Hamiltonian does not act on the plant".into()));
    }
    check_hermitian("H_P", plant_hamiltonian)?;
    let times = run.snapshot_times();
    let states = von_neumann_oracle(t0, hamiltonian, &times)?;
    let check = square_checkable(system);
    let mut rows = Vec::with_capacity(times.len());
    let mut snapshots = Vec::with_capacity(times.len());
    for (t, full) in times.iter().zip(states) {
        let reduced = partial_trace(&full, &plant)?;
        let wigner = match plant_sys.phase_space() {
            Some(_) => Some(wigner_from_density(&reduced)?),
            None => None,
        };
        let square_gap = match (&wigner, check) {
            (Some(w), true) => {
                let composite = wigner_from_density(&full)?;
                Some(reduce_wigner(&composite, system, &plant)?.max_abs_diff(w)?)
            }
            _ => None,
        };
        rows.push(PlantRow {
            t: *t,
            plant_purity: reduced.purity(),
            plant_energy: linalg::trace_product(reduced.matrix(), plant_hamiltonian).re,
            plant_trace: reduced.trace(),
            square_gap,
        });
        snapshots.push(PlantSnapshot { t: *t, state: reduced, wigner });
    }
    Ok(ScenarioResult { rows, snapshots })
}

/// Classical Liouville evolution of the composite Wigner density, observed on the plant.
///
/// Only for composites with at most two degrees of freedom on a shared grid.
pub fn run_classical_scenario(
    layout: &SubsystemLayout,
    symbol: &HamiltonianSymbol,
    w0: &PhaseSpaceField,
    run: &EvolutionRun,
) -> Result<(Vec<PlantRow>, Vec<PhaseSpaceField>, Vec<String>)> {
    let system = layout.system();
    if !square_checkable(system) {
        return Err(Error::FactorMismatch(
            "classical scenarios need a shared phase grid with at most two degrees of freedom".into(),
        ));
    }
    let spec = system.require_phase_space()?;
    let gen = MoyalGenerator::classical(symbol, spec.clone())?;
    let ev = evolve(w0, &gen, run)?;
    let plant = layout.plant_labels();
    let plant_sys = layout.plant_system()?;
    let plant_symbol = restrict_symbol(symbol, system, &plant_sys)?;
    let mut rows = Vec::new();
    let mut fields = Vec::new();
    for s in &ev.snapshots {
        let w = reduce_wigner(&s.field, system, &plant)?;
        let energy = plant_energy_of(&w, &plant_symbol);
        rows.push(PlantRow {
            t: s.t,
            plant_purity: w.purity(),
            plant_energy: energy,
            plant_trace: w.integral(),
            square_gap: None,
        });
        fields.push(w);
    }
    Ok((rows, fields, ev.warnings))
}

/// Terms of a composite symbol that only involve the plant's degrees of freedom.
fn restrict_symbol(
    symbol: &HamiltonianSymbol,
    system: &CompositeSystem,
    plant: &CompositeSystem,
) -> Result<HamiltonianSymbol> {
    let mut slots = Vec::new();
    let mut off = 0;
    for (l, f) in system.labels().iter().zip(system.factors()) {
        if plant.labels().contains(l) {
            slots.extend(off..off + f.dof());
        }
        off += f.dof();
    }
    let terms = symbol
        .terms()
        .iter()
        .filter(|m| (0..system.dof()).all(|t| slots.contains(&t) || (m.powers_q[t] == 0 && m.powers_p[t] == 0)))
        .map(|m| {
            Monomial::new(
                slots.iter().map(|&t| m.powers_q[t]).collect(),
                slots.iter().map(|&t| m.powers_p[t]).collect(),
                m.coeff,
            )
        })
        .collect();
    HamiltonianSymbol::polynomial(plant.dof(), terms)
}

fn plant_energy_of(w: &PhaseSpaceField, symbol: &HamiltonianSymbol) -> f64 {
    let h = crate::field::sample_lattice(w.spec(), |q, p| symbol.eval_polynomial(q, p));
    w.values.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>() * w.cell()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weyl::{ladder_momentum, ladder_position};

    fn q(n: usize) -> Array2<C64> {
        ladder_position(n)
    }

    #[test]
    fn embedding_reorders_factors() {
        let layout = SubsystemLayout::levels(&[Role::P1, Role::P2, Role::C1], 2).unwrap();
        let a = linalg::to_complex(ndarray::arr2(&[[1.0, 2.0], [2.0, 3.0]]).view());
        let b = ladder_momentum(2);
        let op = LocalOperator::new(&["C1", "P1"], linalg::kron(&b, &a));
        let got = op.embed(layout.system()).unwrap();
        let want = linalg::kron_all(&[a, linalg::identity(2), b]);
        assert!(linalg::max_abs_diff(&got, &want) < 1e-14);
    }

    #[test]
    fn scalar_coupling_has_no_feedback() {
        let layout = SubsystemLayout::levels(&[Role::P1, Role::P2, Role::C1, Role::C2], 2).unwrap();
        let v = classify_coupling(&linalg::identity(16).mapv(|x| x * 3.0), &layout).unwrap();
        assert_eq!(v.class, FeedbackClass::NoFeedback);
        assert_eq!(v.coupling_norm, 0.0);
    }

    #[test]
    fn two_factor_layout_has_no_second_block() {
        let layout = SubsystemLayout::levels(&[Role::P1, Role::C1], 3).unwrap();
        let k = linalg::kron(&q(3), &q(3));
        let v = classify_coupling(&k, &layout).unwrap();
        assert_eq!(v.class, FeedbackClass::NoFeedback);
        assert!(v.residual < 1e-12);
        assert!(feedback_coupling(&k, &k, &layout).is_err());
    }

    #[test]
    fn layout_validation() {
        assert!(matches!(SubsystemLayout::levels(&[Role::P1, Role::P2], 2), Err(Error::FactorMismatch(_))));
        assert!(matches!(
            SubsystemLayout::levels(&[Role::P1, Role::P2, Role::C1, Role::C2], 17),
            Err(Error::DimensionCap { .. })
        ));
        let l = SubsystemLayout::levels(&[Role::C1, Role::X, Role::P1], 2).unwrap();
        assert_eq!(l.system().labels(), ["P1", "C1", "X"]);
        assert_eq!(l.coupling_labels(), ["P1", "C1"]);
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let layout = SubsystemLayout::levels(&[Role::P1, Role::C1], 2).unwrap();
        let mut k = Array2::<C64>::zeros((4, 4));
        k[[0, 1]] = C64::new(1.0, 0.0);
        assert!(matches!(classify_coupling(&k, &layout), Err(Error::NonHermitianInput(_))));
    }
}
