use std::collections::VecDeque;
use std::fmt;

use super::{Mdp, ROW_SUM_TOLERANCE};
use crate::games::Action;

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    EmptyLegalActions { state: u32 },
    MissingRow { state: u32, action: Action },
    OrphanRow { state: u32, action: Action },
    DuplicateRow { state: u32, action: Action },
    RowSum { state: u32, action: Action, sum: f64 },
    NegativeProbability { state: u32, action: Action, successor: u32, prob: f64 },
    ProbabilityAboveOne { state: u32, action: Action, successor: u32, prob: f64 },
    NonFinite { state: u32, action: Action, successor: u32 },
    UnknownSuccessor { state: u32, action: Action, successor: u32 },
    UnreachableState { state: u32 },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::EmptyLegalActions { state } => write!(f, "state {state}: non-terminal with no legal actions"),
            Issue::MissingRow { state, action } => write!(f, "({state}, {action}): missing row"),
            Issue::OrphanRow { state, action } => write!(f, "({state}, {action}): row for an illegal or terminal pair"),
            Issue::DuplicateRow { state, action } => write!(f, "({state}, {action}): duplicate row"),
            Issue::RowSum { state, action, sum } => write!(f, "({state}, {action}): row sums to {sum}"),
            Issue::NegativeProbability { state, action, successor, prob } => {
                write!(f, "({state}, {action}) -> {successor}: negative probability {prob}")
            }
            Issue::ProbabilityAboveOne { state, action, successor, prob } => {
                write!(f, "({state}, {action}) -> {successor}: probability {prob} above one")
            }
            Issue::NonFinite { state, action, successor } => {
                write!(f, "({state}, {action}) -> {successor}: non-finite probability")
            }
            Issue::UnknownSuccessor { state, action, successor } => {
                write!(f, "({state}, {action}) -> {successor}: successor outside the state index")
            }
            Issue::UnreachableState { state } => write!(f, "state {state}: unreachable from the initial state"),
        }
    }
}

/// Every violated MDP invariant; empty iff the MDP is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    /// Issues other than unreachable states. An MDP assembled over an index
    /// shared with other dynamics may legitimately hold states it cannot reach.
    pub fn structural(&self) -> ValidationReport {
        let issues = self.issues.iter().filter(|i| !matches!(i, Issue::UnreachableState { .. })).cloned().collect();
        ValidationReport { issues }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut issues = Vec::new();
    let n = mdp.state_count() as u32;
    let table = mdp.transitions();

    for s in 0..n {
        if !mdp.is_terminal(s) && mdp.legal_actions(s).is_empty() {
            issues.push(Issue::EmptyLegalActions { state: s });
        }
        for &a in mdp.legal_actions(s) {
            if !mdp.is_terminal(s) && table.find(s, a).is_none() {
                issues.push(Issue::MissingRow { state: s, action: a });
            }
        }
    }

    let mut prev: Option<(u32, Action)> = None;
    for ((s, a), succ, prob) in table.rows() {
        if prev == Some((s, a)) {
            issues.push(Issue::DuplicateRow { state: s, action: a });
        }
        prev = Some((s, a));
        if s >= n || mdp.is_terminal(s) || !mdp.legal_actions(s).contains(&a) {
            issues.push(Issue::OrphanRow { state: s, action: a });
        }
        let mut sum = 0.0;
        for (&j, &p) in succ.iter().zip(prob) {
            if j >= n {
                issues.push(Issue::UnknownSuccessor { state: s, action: a, successor: j });
            }
            if !p.is_finite() {
                issues.push(Issue::NonFinite { state: s, action: a, successor: j });
                continue;
            }
            if p < 0.0 {
                issues.push(Issue::NegativeProbability { state: s, action: a, successor: j, prob: p });
            } else if p > 1.0 {
                issues.push(Issue::ProbabilityAboveOne { state: s, action: a, successor: j, prob: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            issues.push(Issue::RowSum { state: s, action: a, sum });
        }
    }

    // Reachability over positive-probability edges.
    if n > 0 {
        let mut seen = vec![false; n as usize];
        let mut queue = VecDeque::from([mdp.initial_state()]);
        seen[0] = true;
        while let Some(s) = queue.pop_front() {
            for &a in mdp.legal_actions(s) {
                if let Some(row) = table.find(s, a) {
                    let (succ, prob) = table.row(row);
                    for (&j, &p) in succ.iter().zip(prob) {
                        if j < n && p > 0.0 && !seen[j as usize] {
                            seen[j as usize] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        issues.extend(
            seen.iter()
                .enumerate()
                .filter(|(_, &r)| !r)
                .map(|(s, _)| Issue::UnreachableState { state: s as u32 }),
        );
    }
    ValidationReport { issues }
}
