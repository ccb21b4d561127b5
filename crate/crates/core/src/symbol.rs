//! Real phase-space symbols: polynomials in `(q, p)` plus an optional sampled part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PhaseSpaceField;

/// Highest total degree accepted by [`crate::weyl::weyl_quantize`].
pub const DEGREE_CAP: usize = 6;

/// `coeff · Π q_t^{powers_q[t]} p_t^{powers_p[t]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub powers_q: Vec<usize>,
    pub powers_p: Vec<usize>,
    pub coeff: f64,
}

impl Monomial {
    pub fn new(powers_q: Vec<usize>, powers_p: Vec<usize>, coeff: f64) -> Self {
        Self { powers_q, powers_p, coeff }
    }

    pub fn degree(&self) -> usize {
        self.powers_q.iter().sum::<usize>() + self.powers_p.iter().sum::<usize>()
    }

    pub fn eval(&self, q: &[f64], p: &[f64]) -> f64 {
        let mut v = self.coeff;
        for (x, &k) in q.iter().zip(&self.powers_q) {
            v *= x.powi(k as i32);
        }
        for (x, &k) in p.iter().zip(&self.powers_p) {
            v *= x.powi(k as i32);
        }
        v
    }

    /// `∂_q^{aq} ∂_p^{ap}` of the monomial, `None` when it vanishes identically.
    pub fn derivative(&self, aq: &[usize], ap: &[usize]) -> Option<Monomial> {
        let mut out = self.clone();
        for (pow, &a) in out.powers_q.iter_mut().zip(aq).chain(out.powers_p.iter_mut().zip(ap)) {
            if a > *pow {
                return None;
            }
            for j in 0..a {
                out.coeff *= (*pow - j) as f64;
            }
            *pow -= a;
        }
        if out.coeff == 0.0 {
            None
        } else {
            Some(out)
        }
    }
}

/// Piecewise-constant coefficients: from `start` on, term `k` uses `coeffs[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub start: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HamiltonianSymbol {
    dof: usize,
    terms: Vec<Monomial>,
    sampled: Option<PhaseSpaceField>,
    schedule: Vec<ScheduleSegment>,
}

impl HamiltonianSymbol {
    pub fn polynomial(dof: usize, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            if t.powers_q.len() != dof || t.powers_p.len() != dof {
                return Err(Error::SpecMismatch(format!(
                    "monomial has {}+{} powers, expected {dof} each",
                    t.powers_q.len(),
                    t.powers_p.len()
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::SpecMismatch("non-finite coefficient".into()));
            }
        }
        Ok(Self { dof, terms, sampled: None, schedule: Vec::new() })
    }

    pub fn zero(dof: usize) -> Self {
        Self { dof, terms: Vec::new(), sampled: None, schedule: Vec::new() }
    }

    /// `Σ_t (q_t² + p_t²)/2`.
    pub fn harmonic(dof: usize) -> Self {
        let mut terms = Vec::new();
        for t in 0..dof {
            let mut e = vec![0; dof];
            e[t] = 2;
            terms.push(Monomial::new(e.clone(), vec![0; dof], 0.5));
            terms.push(Monomial::new(vec![0; dof], e, 0.5));
        }
        Self::polynomial(dof, terms).expect("consistent powers")
    }

    /// Builds a symbol from `(powers_q, powers_p, coeff)` triples.
    pub fn from_terms(dof: usize, terms: &[(&[usize], &[usize], f64)]) -> Result<Self> {
        Self::polynomial(dof, terms.iter().map(|(q, p, c)| Monomial::new(q.to_vec(), p.to_vec(), *c)).collect())
    }

    pub fn with_sampled(mut self, field: PhaseSpaceField) -> Result<Self> {
        if field.spec().d() != self.dof {
            return Err(Error::DomainOverflow(format!(
                "sampled part has {} degrees of freedom, symbol has {}",
                field.spec().d(),
                self.dof
            )));
        }
        self.sampled = Some(field);
        Ok(self)
    }

    pub fn with_schedule(mut self, schedule: Vec<ScheduleSegment>) -> Result<Self> {
        for seg in &schedule {
            if seg.coeffs.len() != self.terms.len() {
                return Err(Error::InvalidRun(format!(
                    "schedule segment at t={} has {} coefficients for {} terms",
                    seg.start,
                    seg.coeffs.len(),
                    self.terms.len()
                )));
            }
        }
        let mut schedule = schedule;
        schedule.sort_by(|a, b| a.start.total_cmp(&b.start));
        self.schedule = schedule;
        Ok(self)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn sampled(&self) -> Option<&PhaseSpaceField> {
        self.sampled.as_ref()
    }

    pub fn schedule(&self) -> &[ScheduleSegment] {
        &self.schedule
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.schedule.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    /// The static symbol in force at time `t`.
    pub fn at(&self, t: f64) -> Self {
        let mut out = Self { schedule: Vec::new(), ..self.clone() };
        if let Some(seg) = self.schedule.iter().rev().find(|s| s.start <= t) {
            for (term, &c) in out.terms.iter_mut().zip(&seg.coeffs) {
                term.coeff = c;
            }
        }
        out
    }

    /// Index of the schedule segment in force at `t`.
    pub fn segment_at(&self, t: f64) -> Option<usize> {
        self.schedule.iter().rposition(|s| s.start <= t)
    }

    /// `α·self + β·other` (polynomial parts only).
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.dof != other.dof {
            return Err(Error::SpecMismatch("symbols have different dimensions".into()));
        }
        let mut terms: Vec<Monomial> =
            self.terms.iter().map(|t| Monomial { coeff: alpha * t.coeff, ..t.clone() }).collect();
        terms.extend(other.terms.iter().map(|t| Monomial { coeff: beta * t.coeff, ..t.clone() }));
        Self::polynomial(self.dof, terms)
    }

    /// Value of the polynomial part.
    pub fn eval_polynomial(&self, q: &[f64], p: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(q, p)).sum()
    }

    /// Analytic derivative of the polynomial part, as a list of monomials.
    pub fn polynomial_derivative(&self, aq: &[usize], ap: &[usize]) -> Vec<Monomial> {
        self.terms.iter().filter_map(|t| t.derivative(aq, ap)).collect()
    }
}

/// A point `h = (q, p)` of the phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        Self { q, p }
    }

    pub fn zero(dof: usize) -> Self {
        Self { q: vec![0.0; dof], p: vec![0.0; dof] }
    }

    /// `Jh = (p, q)`.
    pub fn j(&self) -> Self {
        Self { q: self.p.clone(), p: self.q.clone() }
    }

    pub fn neg(&self) -> Self {
        Self { q: self.q.iter().map(|v| -v).collect(), p: self.p.iter().map(|v| -v).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            q: self.q.iter().zip(&o.q).map(|(a, b)| a + b).collect(),
            p: self.p.iter().zip(&o.p).map(|(a, b)| a + b).collect(),
        }
    }

    /// Symplectic form `⟨q₁, p₂⟩ - ⟨p₁, q₂⟩`.
    pub fn symplectic(&self, o: &Self) -> f64 {
        self.q.iter().zip(&o.p).map(|(a, b)| a * b).sum::<f64>()
            - self.p.iter().zip(&o.q).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm_sq(&self) -> f64 {
        self.q.iter().chain(&self.p).map(|v| v * v).sum()
    }
}
