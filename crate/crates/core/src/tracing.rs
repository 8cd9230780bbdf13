//! Budgeted evaluation and fixed-target bookkeeping.
//!
//! Every objective call an optimizer makes goes through a
//! [`BudgetedEvaluator`], which counts evaluations, tracks the best-so-far
//! point and records the first evaluation at which each target of the
//! [`TargetGrid`] is reached. Because precision only improves, the set of
//! reached targets is always a prefix of the (descending) grid, so hitting
//! times are stored as a vector indexed by grid position.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{precision_of, Landscape, ProblemId};

/// Number of targets on the grid: `10^2, 10^1.8, ..., 10^-8`.
pub const GRID_LEN: usize = 51;
const TOP_TENTHS: i32 = 20;
const STEP_TENTHS: i32 = 2;

/// The fixed log-spaced target grid. Exponents are kept in tenths so grid
/// membership is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TargetGrid;

impl TargetGrid {
    pub const LEN: usize = GRID_LEN;

    /// Index of the default final target `1e-8`.
    pub const FINAL: usize = GRID_LEN - 1;

    pub fn tenths(k: usize) -> i32 {
        assert!(k < GRID_LEN, "grid index {k} out of range");
        TOP_TENTHS - STEP_TENTHS * k as i32
    }

    pub fn exponent(k: usize) -> f64 {
        Self::tenths(k) as f64 / 10.0
    }

    pub fn target(k: usize) -> f64 {
        10f64.powf(Self::exponent(k))
    }

    pub fn targets() -> Vec<f64> {
        (0..GRID_LEN).map(Self::target).collect()
    }

    pub fn index_of_tenths(tenths: i32) -> Option<usize> {
        let offset = TOP_TENTHS - tenths;
        if offset < 0 || offset % STEP_TENTHS != 0 {
            return None;
        }
        let k = (offset / STEP_TENTHS) as usize;
        (k < GRID_LEN).then_some(k)
    }

    pub fn index_of_exponent(exponent: f64) -> Option<usize> {
        let tenths = exponent * 10.0;
        if (tenths - tenths.round()).abs() > 1e-6 {
            return None;
        }
        Self::index_of_tenths(tenths.round() as i32)
    }

    /// Grid index whose target is nearest to `value` in log space; ties go to
    /// the larger target.
    pub fn snap(value: f64) -> Result<usize> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::config(format!("target must be positive and finite, got {value}")));
        }
        let steps = (TOP_TENTHS as f64 / 10.0 - value.log10()) / (STEP_TENTHS as f64 / 10.0);
        let k = (steps - 0.5).ceil().max(0.0) as usize;
        Ok(k.min(GRID_LEN - 1))
    }

    /// Index of the largest grid target that is `<= value`, i.e. the next
    /// finer (or equal) grid point.
    pub fn next_finer(value: f64) -> Option<usize> {
        (0..GRID_LEN).find(|&k| Self::target(k) <= value * (1.0 + 1e-9))
    }
}

/// Why an evaluator refuses further evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// The current stop target (final target or switching point) was reached.
    TargetHit,
    BudgetExhausted,
    /// A local cap inside an optimizer (MLSL's per-search budget) ran out.
    LocalBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    TargetHit,
    BudgetExhausted,
    AlgorithmConverged,
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminationReason::TargetHit => "target_hit",
            TerminationReason::BudgetExhausted => "budget_exhausted",
            TerminationReason::AlgorithmConverged => "algorithm_converged",
        })
    }
}

/// Anything that hands out objective values under a stop protocol.
pub trait Evaluate {
    fn dimension(&self) -> usize;
    fn eval(&mut self, x: &[f64]) -> std::result::Result<f64, Stop>;
}

/// Counts, caps and records evaluations for one run.
pub struct BudgetedEvaluator<'a> {
    landscape: &'a dyn Landscape,
    targets: Vec<f64>,
    budget: u64,
    evals: u64,
    stop_index: usize,
    hits: Vec<u64>,
    best_precision: f64,
    best_value: f64,
    best_x: Vec<f64>,
}

impl<'a> BudgetedEvaluator<'a> {
    /// `stop_index` is the grid index whose hit ends the run (usually
    /// [`TargetGrid::FINAL`]).
    pub fn new(landscape: &'a dyn Landscape, budget: u64, stop_index: usize) -> Self {
        assert!(stop_index < GRID_LEN);
        BudgetedEvaluator {
            landscape,
            targets: TargetGrid::targets(),
            budget,
            evals: 0,
            stop_index,
            hits: Vec::new(),
            best_precision: f64::INFINITY,
            best_value: f64::INFINITY,
            best_x: Vec::new(),
        }
    }

    pub fn landscape(&self) -> &'a dyn Landscape {
        self.landscape
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn evals_used(&self) -> u64 {
        self.evals
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.evals
    }

    /// Fraction of the budget consumed, in `[0, 1]`.
    pub fn progress(&self) -> f64 {
        if self.budget == 0 {
            1.0
        } else {
            self.evals as f64 / self.budget as f64
        }
    }

    pub fn best_precision(&self) -> f64 {
        self.best_precision
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }

    /// Best point evaluated so far; empty before the first evaluation.
    pub fn best_point(&self) -> &[f64] {
        &self.best_x
    }

    pub fn hits(&self) -> &[u64] {
        &self.hits
    }

    pub fn stop_index(&self) -> usize {
        self.stop_index
    }

    pub fn set_stop_index(&mut self, k: usize) {
        assert!(k < GRID_LEN);
        self.stop_index = k;
    }

    pub fn target_reached(&self) -> bool {
        self.hits.len() > self.stop_index
    }

    pub fn stop_reason(&self) -> Option<Stop> {
        if self.target_reached() {
            Some(Stop::TargetHit)
        } else if self.evals >= self.budget {
            Some(Stop::BudgetExhausted)
        } else {
            None
        }
    }

    /// Returns the objective value and updates the bookkeeping. NaN values
    /// are reported as `+inf`.
    pub fn eval_and_record(&mut self, x: &[f64]) -> std::result::Result<f64, Stop> {
        if let Some(stop) = self.stop_reason() {
            return Err(stop);
        }
        self.evals += 1;
        let mut value = self.landscape.value(x);
        if value.is_nan() {
            value = f64::INFINITY;
        }
        let p = precision_of(value, self.landscape.f_opt());
        if p < self.best_precision || self.best_x.is_empty() {
            self.best_precision = p;
            self.best_value = value;
            self.best_x.clear();
            self.best_x.extend_from_slice(x);
            while self.hits.len() < GRID_LEN && p <= self.targets[self.hits.len()] {
                self.hits.push(self.evals);
            }
        }
        Ok(value)
    }

    pub fn into_trace(
        self,
        problem: ProblemId,
        algorithm_label: impl Into<String>,
        run_index: u32,
        terminated_reason: TerminationReason,
    ) -> RunTrace {
        RunTrace {
            problem,
            algorithm_label: algorithm_label.into(),
            run_index,
            evals_used: self.evals,
            best_precision: self.best_precision,
            hit_at: self.hits,
            budget: self.budget,
            terminated_reason,
        }
    }
}

impl Evaluate for BudgetedEvaluator<'_> {
    fn dimension(&self) -> usize {
        self.landscape.dimension()
    }

    fn eval(&mut self, x: &[f64]) -> std::result::Result<f64, Stop> {
        self.eval_and_record(x)
    }
}

/// A completed run. `hit_at[k]` is the evaluation count at which grid
/// target `k` was first reached; targets past the end were never reached.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub problem: ProblemId,
    pub algorithm_label: String,
    pub run_index: u32,
    pub evals_used: u64,
    pub best_precision: f64,
    pub hit_at: Vec<u64>,
    pub budget: u64,
    pub terminated_reason: TerminationReason,
}

impl RunTrace {
    pub fn hit(&self, k: usize) -> Option<u64> {
        self.hit_at.get(k).copied()
    }

    /// Hitting time for any positive target. Off-grid targets are answered
    /// with the next finer grid target, which never understates the cost.
    pub fn hitting_time(&self, target: f64) -> Option<u64> {
        TargetGrid::next_finer(target).and_then(|k| self.hit(k))
    }

    pub fn to_record(&self) -> RunRecord {
        RunRecord {
            algorithm_label: self.algorithm_label.clone(),
            function_id: self.problem.function_id,
            dimension: self.problem.dimension,
            instance: self.problem.instance,
            run_index: self.run_index,
            budget: self.budget,
            evals_used: self.evals_used,
            best_precision: self.best_precision.is_finite().then_some(self.best_precision),
            terminated_reason: self.terminated_reason,
            hit_at: self
                .hit_at
                .iter()
                .enumerate()
                .map(|(k, &e)| (TargetGrid::exponent(k), e))
                .collect(),
            switch: None,
        }
    }
}

pub fn hitting_time(trace: &RunTrace, target: f64) -> Option<u64> {
    trace.hitting_time(target)
}

/// Extra fields carried by the record of a switching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchFields {
    pub tau_exponent: f64,
    pub switch_eval: Option<u64>,
    pub phase1_reason: TerminationReason,
    pub phase2_reason: Option<TerminationReason>,
}

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm_label: String,
    pub function_id: u32,
    pub dimension: usize,
    pub instance: u32,
    pub run_index: u32,
    pub budget: u64,
    pub evals_used: u64,
    /// `null` when nothing was evaluated.
    pub best_precision: Option<f64>,
    pub terminated_reason: TerminationReason,
    /// Sparse `(target_exponent, eval_count)` pairs.
    pub hit_at: Vec<(f64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch: Option<SwitchFields>,
}

impl RunRecord {
    pub fn to_trace(&self) -> Result<RunTrace> {
        let problem = ProblemId::new(self.function_id, self.dimension, self.instance)?;
        if self.evals_used > self.budget {
            return Err(Error::Parse(format!(
                "evals_used {} exceeds budget {}",
                self.evals_used, self.budget
            )));
        }
        let mut hits = Vec::with_capacity(self.hit_at.len());
        let mut pairs = self.hit_at.clone();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (k, (exp, eval)) in pairs.iter().enumerate() {
            let idx = TargetGrid::index_of_exponent(*exp)
                .ok_or_else(|| Error::Parse(format!("target exponent {exp} is not on the grid")))?;
            if idx != k {
                return Err(Error::Parse(format!("hit_at skips grid target at index {k}")));
            }
            if hits.last().is_some_and(|&prev| prev > *eval) || *eval > self.evals_used {
                return Err(Error::Parse("hit_at is not monotone".into()));
            }
            hits.push(*eval);
        }
        Ok(RunTrace {
            problem,
            algorithm_label: self.algorithm_label.clone(),
            run_index: self.run_index,
            evals_used: self.evals_used,
            best_precision: self.best_precision.unwrap_or(f64::INFINITY),
            hit_at: hits,
            budget: self.budget,
            terminated_reason: self.terminated_reason,
        })
    }
}

pub fn write_records<'r, W: Write>(records: impl IntoIterator<Item = &'r RunRecord>, mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads a line-delimited log. Malformed lines are skipped with a warning
/// and counted in the second return value.
pub fn read_records<R: BufRead>(input: R) -> Result<(Vec<RunRecord>, usize)> {
    let mut records = Vec::new();
    let mut malformed = 0;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("skipping malformed log line {}: {e}", lineno + 1);
                malformed += 1;
            }
        }
    }
    Ok((records, malformed))
}
