use std::cell::RefCell;
use std::collections::BTreeSet;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::types::{ClassK, MultiAgentState};

/// Pose and velocity of a leader (real or virtual) as sensed by followers.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSignal {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
}

/// What one agent can see while building its rows: the state snapshot and
/// prepared data of itself and its neighborhood, the leader signal and the
/// class-K rate. There is deliberately no access to any input.
pub struct LocalView<'a, L> {
    agent: usize,
    state: &'a MultiAgentState,
    locals: &'a [L],
    leader: Option<&'a LeaderSignal>,
    alpha: ClassK,
    neighborhood: &'a BTreeSet<usize>,
    reads: Option<RefCell<BTreeSet<usize>>>,
}

impl<'a, L> LocalView<'a, L> {
    pub fn new(
        agent: usize,
        state: &'a MultiAgentState,
        locals: &'a [L],
        leader: Option<&'a LeaderSignal>,
        alpha: ClassK,
        neighborhood: &'a BTreeSet<usize>,
        audit: bool,
    ) -> Self {
        Self {
            agent,
            state,
            locals,
            leader,
            alpha,
            neighborhood,
            reads: audit.then(|| RefCell::new(BTreeSet::new())),
        }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn alpha(&self) -> ClassK {
        self.alpha
    }

    pub fn neighborhood(&self) -> &BTreeSet<usize> {
        self.neighborhood
    }

    fn note(&self, j: usize) {
        if let Some(r) = &self.reads {
            r.borrow_mut().insert(j);
        }
    }

    pub fn own_position(&self) -> &'a DVector<f64> {
        self.state.position(self.agent)
    }

    pub fn position(&self, j: usize) -> &'a DVector<f64> {
        self.note(j);
        self.state.position(j)
    }

    pub fn own_local(&self) -> &'a L {
        &self.locals[self.agent]
    }

    pub fn local(&self, j: usize) -> &'a L {
        self.note(j);
        &self.locals[j]
    }

    pub fn leader(&self) -> Option<&'a LeaderSignal> {
        self.leader
    }

    /// Errors if an audited view read outside its neighborhood.
    pub fn check_reads(&self) -> Result<()> {
        if let Some(r) = &self.reads {
            for &j in r.borrow().iter() {
                if j != self.agent && !self.neighborhood.contains(&j) {
                    return Err(Error::UndeclaredRead { agent: self.agent, read: j });
                }
            }
        }
        Ok(())
    }

    /// Agents read so far (audit mode only).
    pub fn reads(&self) -> Option<BTreeSet<usize>> {
        self.reads.as_ref().map(|r| r.borrow().clone())
    }
}
