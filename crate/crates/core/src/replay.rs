//! Deterministic analyses of a finished tree.
//!
//! Nothing here draws random bits: every quantity is a function of the tree
//! shape. [`mark_lifetime`] follows the analytic marking models for
//! thresholds 1 and 2, while [`engine_lifetime`] replays the two-stack
//! parallel engine literally. The two disagree (at threshold 1 the engine's
//! first task keeps both children of the root, for one) and are reported
//! separately.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::treestore::{NodeHandle, Tree};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LifetimeModel {
    Marking,
    Engine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LifetimeRecord {
    pub lifetime: u64,
    pub model: LifetimeModel,
    pub threshold: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunMetrics {
    /// Largest number of pending nodes (`|lds1| + |lds2|`) held by a single
    /// task during the replay.
    pub peak_load: u64,
    /// Fully parallel completion time, for thresholds with a schedule model.
    pub parallel_time: Option<u64>,
    pub tasks_spawned: u64,
    /// Nodes processed per task, first task first, then in spawn order.
    pub per_task_loads: Vec<u64>,
    /// `|lds1|` when the first task first pushed into `lds2`; either `t` or
    /// `t + 1`, since children are pushed in pairs.
    pub lds1_at_first_overflow: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Bfs,
    Dfs,
}

/// Nodes handled by the first thread under the marking model.
///
/// * threshold 1: the left spine.
/// * threshold 2: leaf → 1; two leaf children → 3; one leaf child → 2 plus
///   the other child's lifetime; two internal children → 2 (the node and the
///   right child's root) plus the left child's lifetime.
pub fn mark_lifetime(tree: &Tree, threshold: usize) -> Result<u64> {
    match threshold {
        1 => Ok(tree.left_spine()),
        2 => {
            let mut k = 0;
            let mut node = tree.root();
            loop {
                let Some((l, r)) = tree.children(node) else {
                    return Ok(k + 1);
                };
                match (tree.is_leaf(l), tree.is_leaf(r)) {
                    (true, true) => return Ok(k + 3),
                    (true, false) => node = r,
                    (false, _) => node = l,
                }
                k += 2;
            }
        }
        t => Err(Error::UnsupportedThreshold(t)),
    }
}

/// Replays the two-stack parallel engine on `tree` with its known bits.
///
/// Spawned batches are replayed in spawn order after the task that produced
/// them; loads do not depend on that order.
pub fn engine_lifetime(tree: &Tree, threshold: usize) -> Result<(LifetimeRecord, RunMetrics)> {
    if threshold < 1 {
        return Err(Error::UnsupportedThreshold(threshold));
    }
    let t = threshold;
    let mut pending: VecDeque<Vec<NodeHandle>> = VecDeque::from([vec![tree.root()]]);
    let mut loads = Vec::new();
    let mut peak = 0u64;
    let mut first_overflow = None;
    while let Some(mut lds1) = pending.pop_front() {
        let first_task = loads.is_empty();
        let mut lds2: Vec<NodeHandle> = Vec::with_capacity(t + 1);
        let mut load = 0u64;
        peak = peak.max(lds1.len() as u64);
        loop {
            let node = match lds2.pop().or_else(|| lds1.pop()) {
                Some(n) => n,
                None => break,
            };
            load += 1;
            if let Some((l, r)) = tree.children(node) {
                if lds1.len() < t {
                    lds1.push(r);
                    lds1.push(l);
                } else {
                    if first_task && first_overflow.is_none() && lds2.is_empty() {
                        first_overflow = Some(lds1.len());
                    }
                    lds2.push(r);
                    lds2.push(l);
                    if lds2.len() >= t {
                        pending.push_back(std::mem::replace(&mut lds2, Vec::with_capacity(t + 1)));
                    }
                }
                peak = peak.max((lds1.len() + lds2.len()) as u64);
            }
        }
        loads.push(load);
    }
    let record = LifetimeRecord {
        lifetime: loads[0],
        model: LifetimeModel::Engine,
        threshold,
    };
    let metrics = RunMetrics {
        peak_load: peak.max(1),
        parallel_time: parallel_time(tree, threshold).ok(),
        tasks_spawned: loads.len() as u64 - 1,
        per_task_loads: loads,
        lds1_at_first_overflow: first_overflow,
    };
    Ok((record, metrics))
}

/// Completion step and level of one node in the fully parallel schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeTiming {
    pub level: u64,
    pub step: u64,
}

/// The fully parallel schedule with unbounded workers and free spawning.
/// The root completes at step 1.
///
/// * threshold 1: every node completes one step after its parent.
/// * threshold 2: a task processes its marked nodes one per step, in the
///   order node, leaf child (if any), then descent. When both children are
///   internal it processes the right child's root next and hands each of that
///   root's two children to a new task starting one step later.
pub fn parallel_schedule(tree: &Tree, threshold: usize) -> Result<Vec<NodeTiming>> {
    let mut out = Vec::with_capacity(tree.size() as usize);
    match threshold {
        1 => {
            let mut stack = vec![(tree.root(), 0u64)];
            while let Some((node, level)) = stack.pop() {
                out.push(NodeTiming { level, step: level + 1 });
                if let Some((l, r)) = tree.children(node) {
                    stack.push((r, level + 1));
                    stack.push((l, level + 1));
                }
            }
        }
        2 => {
            // (subtree root, its level, step at which it is processed)
            let mut tasks = vec![(tree.root(), 0u64, 1u64)];
            while let Some((mut node, mut level, mut step)) = tasks.pop() {
                loop {
                    out.push(NodeTiming { level, step });
                    let Some((l, r)) = tree.children(node) else { break };
                    match (tree.is_leaf(l), tree.is_leaf(r)) {
                        (true, true) => {
                            out.push(NodeTiming { level: level + 1, step: step + 1 });
                            out.push(NodeTiming { level: level + 1, step: step + 2 });
                            break;
                        }
                        (true, false) | (false, true) => {
                            let other = if tree.is_leaf(l) { r } else { l };
                            out.push(NodeTiming { level: level + 1, step: step + 1 });
                            node = other;
                        }
                        (false, false) => {
                            out.push(NodeTiming { level: level + 1, step: step + 1 });
                            let (rl, rr) = tree.children(r).expect("internal right child");
                            tasks.push((rr, level + 2, step + 2));
                            tasks.push((rl, level + 2, step + 2));
                            node = l;
                        }
                    }
                    level += 1;
                    step += 2;
                }
            }
        }
        t => return Err(Error::UnsupportedThreshold(t)),
    }
    Ok(out)
}

/// Completion time of the whole tree in the fully parallel model.
pub fn parallel_time(tree: &Tree, threshold: usize) -> Result<u64> {
    match threshold {
        1 => Ok(tree.level_widths().len() as u64),
        2 => Ok(parallel_schedule(tree, 2)?.iter().map(|n| n.step).max().unwrap_or(1)),
        t => Err(Error::UnsupportedThreshold(t)),
    }
}

/// How the threshold-2 schedule compares with "a node at level h is treated
/// 2h−1 or 2h steps after the root".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowReport {
    pub nodes_checked: u64,
    pub violations: u64,
    /// Violations treated after step `2h`; the rest are treated early.
    pub late: u64,
    /// Smallest `c` with `step ≤ 2·level + c` for every node.
    pub max_offset: i64,
}

impl WindowReport {
    pub fn merge(&mut self, other: &WindowReport) {
        if self.nodes_checked == 0 {
            *self = *other;
            return;
        }
        self.nodes_checked += other.nodes_checked;
        self.violations += other.violations;
        self.late += other.late;
        self.max_offset = self.max_offset.max(other.max_offset);
    }

    pub fn violation_rate(&self) -> f64 {
        if self.nodes_checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.nodes_checked as f64
        }
    }
}

pub fn window_report(tree: &Tree) -> WindowReport {
    let schedule = parallel_schedule(tree, 2).expect("threshold 2 is supported");
    let mut report = WindowReport {
        max_offset: i64::MIN,
        ..Default::default()
    };
    for n in &schedule {
        report.max_offset = report.max_offset.max(n.step as i64 - 2 * n.level as i64);
        if n.level == 0 {
            continue;
        }
        report.nodes_checked += 1;
        let elapsed = n.step - 1;
        if elapsed + 1 != 2 * n.level && elapsed != 2 * n.level {
            report.violations += 1;
            report.late += u64::from(elapsed > 2 * n.level);
        }
    }
    report
}

/// Largest number of pending nodes while draining the tree from a single
/// queue (BFS) or left-first stack (DFS), measured after each node is
/// treated. Starts at 1 for the root.
pub fn peak_load(tree: &Tree, order: Order) -> u64 {
    let mut peak = 1u64;
    match order {
        Order::Bfs => {
            let mut queue = VecDeque::from([tree.root()]);
            while let Some(node) = queue.pop_front() {
                if let Some((l, r)) = tree.children(node) {
                    queue.push_back(l);
                    queue.push_back(r);
                    peak = peak.max(queue.len() as u64);
                }
            }
        }
        Order::Dfs => {
            let mut stack = vec![tree.root()];
            while let Some(node) = stack.pop() {
                if let Some((l, r)) = tree.children(node) {
                    stack.push(r);
                    stack.push(l);
                    peak = peak.max(stack.len() as u64);
                }
            }
        }
    }
    peak
}
