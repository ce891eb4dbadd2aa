//! Builders that turn Lyapunov and barrier conditions into affine
//! inequalities on one agent's input.
//!
//! Every builder returns rows of the form `normal . u <= offset` (plus an
//! optional slack `- delta` on the left). Nonsmooth Lyapunov functions
//! contribute one row per candidate gradient; enforcing all of them enforces
//! the maximum over the finite generalized-gradient set.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::qp::{QpRow, QuadraticProgram};
use crate::types::{ClassK, ControlAffinePlant, InputBox, SeGroup};

/// Penalty used when the engine softens an infeasible hard CLF row.
pub const AUTO_SLACK_PENALTY: f64 = 1e6;

/// A private-entangled Lyapunov function evaluated at one state snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub value: f64,
    pub partial_t: f64,
    /// Gradients with respect to the owning agent's state. One entry at
    /// smooth points; several near a topology switch.
    pub candidate_gradients: Vec<DVector<f64>>,
    /// Gradients with respect to neighbor states, for monitoring and oracles.
    pub neighbor_gradients: BTreeMap<usize, DVector<f64>>,
}

impl LyapunovSpec {
    pub fn smooth(value: f64, gradient: DVector<f64>, partial_t: f64) -> Self {
        Self {
            value,
            partial_t,
            candidate_gradients: vec![gradient],
            neighbor_gradients: BTreeMap::new(),
        }
    }

    pub fn gradient(&self) -> &DVector<f64> {
        &self.candidate_gradients[0]
    }
}

/// A Lyapunov function shared by the members of one SE group.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedLyapunovSpec {
    pub value: f64,
    pub partial_t: f64,
    pub member_gradients: BTreeMap<usize, Vec<DVector<f64>>>,
}

/// A barrier function `h` (safe set `h >= 0`) seen from one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSpec {
    pub value: f64,
    pub grad_own: DVector<f64>,
    pub partial_t: f64,
    /// Share of `gamma(h)` assigned to this agent when `h` is shared.
    pub allocation_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    PeClf,
    SeClf,
    Cbf,
    SeCbf,
}

impl ConstraintKind {
    pub fn is_barrier(self) -> bool {
        matches!(self, ConstraintKind::Cbf | ConstraintKind::SeCbf)
    }
}

/// `normal . u (- delta) <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearControlConstraint {
    pub normal: DVector<f64>,
    pub offset: f64,
    /// Quadratic penalty `kappa` on the slack, when softened.
    pub slack_penalty: Option<f64>,
    pub kind: ConstraintKind,
}

impl LinearControlConstraint {
    /// Left side minus right side; `<= 0` when satisfied.
    pub fn residual(&self, u: &DVector<f64>, slack: f64) -> f64 {
        let s = if self.slack_penalty.is_some() { slack } else { 0.0 };
        self.normal.dot(u) - s - self.offset
    }

    /// A zero normal with a negative offset: no input can satisfy the row.
    pub fn is_degenerate_infeasible(&self) -> bool {
        self.slack_penalty.is_none() && self.normal.amax() <= 1e-12 && self.offset < 0.0
    }
}

fn check_finite(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_scalar(v: f64, what: &'static str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn lie_row(
    gradient: &DVector<f64>,
    plant: &ControlAffinePlant,
    position: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    if gradient.len() != plant.state_dim() {
        return Err(Error::Dimension(format!(
            "gradient length {} vs state dim {}",
            gradient.len(),
            plant.state_dim()
        )));
    }
    let g = plant.actuation(position)?;
    let f = plant.drift(position)?;
    let normal = g.transpose() * gradient;
    Ok((normal, gradient.dot(&f)))
}

/// One row per candidate gradient `nu`:
/// `(nu g) u <= -nu f - dV/dt - alpha(V)`.
pub fn build_pe_constraint(
    spec: &LyapunovSpec,
    plant: &ControlAffinePlant,
    position: &DVector<f64>,
    alpha: ClassK,
) -> Result<Vec<LinearControlConstraint>> {
    if spec.candidate_gradients.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_scalar(spec.value, "Lyapunov value")?;
    check_scalar(spec.partial_t, "Lyapunov time derivative")?;
    let budget = spec.partial_t + alpha.eval(spec.value);
    spec.candidate_gradients
        .iter()
        .map(|nu| {
            check_finite(nu, "Lyapunov gradient")?;
            let (normal, drift) = lie_row(nu, plant, position)?;
            Ok(LinearControlConstraint {
                normal,
                offset: -drift - budget,
                slack_penalty: None,
                kind: ConstraintKind::PeClf,
            })
        })
        .collect()
}

/// Constraint allocation for a shared Lyapunov function: member `i` takes
/// the fraction `w_i` of the decrease budget,
/// `(zeta g) u <= -zeta f - w_i (dV/dt + alpha(V))`.
pub fn build_se_constraint(
    spec: &SharedLyapunovSpec,
    group: &SeGroup,
    member: usize,
    plant: &ControlAffinePlant,
    position: &DVector<f64>,
    alpha: ClassK,
) -> Result<Vec<LinearControlConstraint>> {
    let w = group.weight(member)?;
    let candidates = spec
        .member_gradients
        .get(&member)
        .ok_or(Error::NotAMember { member })?;
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_scalar(spec.value, "Lyapunov value")?;
    check_scalar(spec.partial_t, "Lyapunov time derivative")?;
    let budget = w * (spec.partial_t + alpha.eval(spec.value));
    candidates
        .iter()
        .map(|zeta| {
            check_finite(zeta, "Lyapunov gradient")?;
            let (normal, drift) = lie_row(zeta, plant, position)?;
            Ok(LinearControlConstraint {
                normal,
                offset: -drift - budget,
                slack_penalty: None,
                kind: ConstraintKind::SeClf,
            })
        })
        .collect()
}

/// Barrier condition `grad h . x' + dh/dt + w gamma(h) >= 0` written as
/// `-(grad h g) u <= grad h f + dh/dt + w gamma(h)`; `w = 1` unless an
/// allocation weight is set.
pub fn build_cbf_constraint(
    spec: &BarrierSpec,
    plant: &ControlAffinePlant,
    position: &DVector<f64>,
    gamma: ClassK,
) -> Result<LinearControlConstraint> {
    check_scalar(spec.value, "barrier value")?;
    check_scalar(spec.partial_t, "barrier time derivative")?;
    check_finite(&spec.grad_own, "barrier gradient")?;
    let w = spec.allocation_weight.unwrap_or(1.0);
    check_scalar(w, "allocation weight")?;
    let (normal, drift) = lie_row(&spec.grad_own, plant, position)?;
    Ok(LinearControlConstraint {
        normal: -normal,
        offset: drift + spec.partial_t + w * gamma.eval(spec.value),
        slack_penalty: None,
        kind: if spec.allocation_weight.is_some() {
            ConstraintKind::SeCbf
        } else {
            ConstraintKind::Cbf
        },
    })
}

/// Recasts a nonpositive barrier as a Lyapunov function `V = -h`.
pub fn clf_from_cbf(spec: &BarrierSpec) -> Result<LyapunovSpec> {
    if spec.value > 0.0 {
        return Err(Error::PositiveBarrier(spec.value));
    }
    Ok(LyapunovSpec::smooth(
        -spec.value,
        -spec.grad_own.clone(),
        -spec.partial_t,
    ))
}

/// Softens a row with a slack `delta` penalized by `kappa delta^2`.
pub fn attach_slack(c: LinearControlConstraint, penalty: f64) -> Result<LinearControlConstraint> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::InvalidPenalty(penalty));
    }
    Ok(LinearControlConstraint {
        slack_penalty: Some(penalty),
        ..c
    })
}

/// The per-agent program: minimize `||u||^2 + sum kappa_k delta_k^2` over
/// `[u; delta]` subject to the given rows.
#[derive(Debug, Clone)]
pub struct AgentProgram {
    pub input_dim: usize,
    pub constraints: Vec<LinearControlConstraint>,
    /// Decision-vector index of each row's slack, if any.
    slack_index: Vec<Option<usize>>,
    qp: QuadraticProgram,
}

impl AgentProgram {
    pub fn new(
        input_dim: usize,
        constraints: Vec<LinearControlConstraint>,
        bounds: Option<&InputBox>,
    ) -> Result<Self> {
        let mut hessian = vec![2.0; input_dim];
        let mut slack_index = Vec::with_capacity(constraints.len());
        for c in &constraints {
            if c.normal.len() != input_dim {
                return Err(Error::Dimension("constraint normal vs input dim".into()));
            }
            match c.slack_penalty {
                Some(k) => {
                    slack_index.push(Some(hessian.len()));
                    hessian.push(2.0 * k);
                }
                None => slack_index.push(None),
            }
        }
        let dim = hessian.len();
        let rows = constraints
            .iter()
            .zip(&slack_index)
            .map(|(c, s)| {
                let mut a = DVector::zeros(dim);
                a.rows_mut(0, input_dim).copy_from(&c.normal);
                if let Some(k) = s {
                    a[*k] = -1.0;
                }
                QpRow { normal: a, offset: c.offset }
            })
            .collect();
        let mut qp = QuadraticProgram::new(hessian, rows)?;
        if let Some(b) = bounds {
            let mut lo = vec![f64::NEG_INFINITY; dim];
            let mut hi = vec![f64::INFINITY; dim];
            lo[..input_dim].copy_from_slice(&b.lower);
            hi[..input_dim].copy_from_slice(&b.upper);
            qp = qp.with_bounds(lo, hi)?;
        }
        Ok(Self {
            input_dim,
            constraints,
            slack_index,
            qp,
        })
    }

    pub fn qp(&self) -> &QuadraticProgram {
        &self.qp
    }

    /// Splits a decision vector into the input and one slack value per row
    /// (zero for hard rows).
    pub fn split(&self, point: &DVector<f64>) -> (DVector<f64>, Vec<f64>) {
        let u = point.rows(0, self.input_dim).clone_owned();
        let slacks = self
            .slack_index
            .iter()
            .map(|s| s.map_or(0.0, |k| point[k]))
            .collect();
        (u, slacks)
    }

    pub fn residuals(&self, point: &DVector<f64>) -> Vec<f64> {
        let (u, slacks) = self.split(point);
        self.constraints
            .iter()
            .zip(slacks)
            .map(|(c, s)| c.residual(&u, s))
            .collect()
    }
}
