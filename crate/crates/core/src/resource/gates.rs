//! Dependency gates `B_i(u)` multiplying a task's own resource demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// `Π (1 − u_parent)^γ`
    And,
    /// `max (1 − u_parent)^γ`
    Or,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    /// Gated task (0-based).
    pub task: usize,
    pub kind: GateKind,
    pub parents: Vec<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

pub fn default_gamma() -> f64 {
    0.01
}

impl Gate {
    pub fn and(task: usize, parents: Vec<usize>, gamma: f64) -> Self {
        Self {
            task,
            kind: GateKind::And,
            parents,
            gamma,
        }
    }

    pub fn or(task: usize, parents: Vec<usize>, gamma: f64) -> Self {
        Self {
            task,
            kind: GateKind::Or,
            parents,
            gamma,
        }
    }
}

/// At most one gate per task; the parent graph is acyclic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSet {
    n_task: usize,
    by_task: Vec<Option<Gate>>,
}

impl GateSet {
    pub fn new(n_task: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut by_task: Vec<Option<Gate>> = vec![None; n_task];
        for g in gates {
            if g.task >= n_task {
                return Err(Error::invalid("gates", format!("task {} out of range", g.task)));
            }
            if g.parents.is_empty() {
                return Err(Error::invalid("gates", format!("gate on task {} has no parents", g.task)));
            }
            if let Some(&bad) = g.parents.iter().find(|&&q| q >= n_task || q == g.task) {
                return Err(Error::invalid("gates", format!("task {} has invalid parent {bad}", g.task)));
            }
            if !(g.gamma > 0.0 && g.gamma.is_finite()) {
                return Err(Error::invalid("gamma", "must be finite and > 0"));
            }
            if by_task[g.task].is_some() {
                return Err(Error::invalid("gates", format!("task {} gated twice", g.task)));
            }
            let t = g.task;
            by_task[t] = Some(g);
        }
        let set = Self { n_task, by_task };
        if let Some(task) = set.find_cycle() {
            return Err(Error::CyclicGates(task));
        }
        Ok(set)
    }

    fn find_cycle(&self) -> Option<usize> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark = vec![0u8; self.n_task];
        fn visit(set: &GateSet, i: usize, mark: &mut [u8]) -> Option<usize> {
            match mark[i] {
                1 => return Some(i),
                2 => return None,
                _ => {}
            }
            mark[i] = 1;
            if let Some(g) = &set.by_task[i] {
                for &q in &g.parents {
                    if let Some(c) = visit(set, q, mark) {
                        return Some(c);
                    }
                }
            }
            mark[i] = 2;
            None
        }
        (0..self.n_task).find_map(|i| visit(self, i, &mut mark))
    }

    pub fn n_task(&self) -> usize {
        self.n_task
    }

    pub fn gate(&self, task: usize) -> Option<&Gate> {
        self.by_task[task].as_ref()
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.by_task.iter().flatten()
    }

    /// `B_task(u)`, or 1 for ungated tasks.
    pub fn factor(&self, task: usize, u: &[f64]) -> f64 {
        let Some(g) = &self.by_task[task] else {
            return 1.0;
        };
        let term = |q: usize| (1.0 - u[q]).clamp(0.0, 1.0).powf(g.gamma);
        match g.kind {
            GateKind::And => g.parents.iter().map(|&q| term(q)).product(),
            GateKind::Or => g.parents.iter().map(|&q| term(q)).fold(0.0, f64::max),
        }
    }
}

/// Chain `1 → 2 → … → n` of AND gates (0-based parents).
pub fn and_chain(n_task: usize, gamma: f64) -> Result<GateSet> {
    GateSet::new(n_task, (1..n_task).map(|i| Gate::and(i, vec![i - 1], gamma)).collect())
}

/// Seven-task hierarchy: 4 ← (1, 2), 5 ← (2, 3), 6 ← (4, 5), 7 ← (5, 6)
/// (1-based). With `or_top` the last two gates are ORs instead of ANDs.
pub fn hierarchy7(gamma: f64, or_top: bool) -> Result<GateSet> {
    let top = |task, parents| {
        if or_top {
            Gate::or(task, parents, gamma)
        } else {
            Gate::and(task, parents, gamma)
        }
    };
    GateSet::new(
        7,
        vec![
            Gate::and(3, vec![0, 1], gamma),
            Gate::and(4, vec![1, 2], gamma),
            top(5, vec![3, 4]),
            top(6, vec![4, 5]),
        ],
    )
}

/// Tasks with a directed path to `task`.
pub fn ancestors(set: &GateSet, task: usize) -> Vec<usize> {
    let mut seen = vec![false; set.n_task()];
    let mut stack = vec![task];
    while let Some(i) = stack.pop() {
        if let Some(g) = set.gate(i) {
            for &q in &g.parents {
                if !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    (0..set.n_task()).filter(|&i| seen[i]).collect()
}
