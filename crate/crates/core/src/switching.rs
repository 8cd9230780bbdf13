//! Single-switch runs: `A1` until precision `tau`, warm start, `A2` until
//! `phi`, all under one budget and one evaluation counter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizers::{drive, Algorithm, AnyOptimizer, OptimizerConfig};
use crate::problems::{Landscape, ProblemId, ProblemInstance};
use crate::seed::derive_seed;
use crate::tracing::{BudgetedEvaluator, RunRecord, RunTrace, SwitchFields, TargetGrid, TerminationReason};
use crate::warmstart::{extract, warm_start, WarmStartPolicy};

const A2_SEED_TAG: u64 = 0xA2;
const SWITCH_CELL_TAG: u64 = 0x5357;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPlan {
    pub a1: OptimizerConfig,
    pub a2: OptimizerConfig,
    /// Switching precision; snapped to the target grid.
    pub tau: f64,
    pub phi: f64,
    pub policy: WarmStartPolicy,
    /// Switch as soon as `A1` converges internally above `tau`.
    pub early_switch: bool,
}

impl SwitchPlan {
    /// Default hyperparameters, full warm start and early switching.
    pub fn new(a1: Algorithm, a2: Algorithm, tau: f64, phi: f64) -> Self {
        SwitchPlan {
            a1: OptimizerConfig::new(a1, 0),
            a2: OptimizerConfig::new(a2, 0),
            tau,
            phi,
            policy: WarmStartPolicy::default(),
            early_switch: true,
        }
    }

    pub fn with_policy(mut self, policy: WarmStartPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn tau_index(&self) -> Result<usize> {
        TargetGrid::snap(self.tau)
    }

    pub fn phi_index(&self) -> Result<usize> {
        TargetGrid::snap(self.phi)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, p) = (self.tau_index()?, self.phi_index()?);
        if t >= p {
            return Err(Error::config(format!(
                "switching point 1e{} must be above the final target 1e{}",
                TargetGrid::exponent(t),
                TargetGrid::exponent(p)
            )));
        }
        self.a1.validate()?;
        self.a2.validate()?;
        self.policy.validate()
    }

    /// `A1>A2@1e<exponent>` with the snapped switching point.
    pub fn label(&self) -> String {
        let exp = self.tau_index().map(TargetGrid::exponent).unwrap_or(f64::NAN);
        format!("{}>{}@1e{}", self.a1.algorithm, self.a2.algorithm, exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchInfo {
    pub tau_index: usize,
    /// Evaluations spent when `A2` took over; `None` if it never did.
    pub switch_eval: Option<u64>,
    pub phase1_reason: TerminationReason,
    pub phase2_reason: Option<TerminationReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchTrace {
    /// Cumulative over both phases.
    pub trace: RunTrace,
    pub info: SwitchInfo,
}

impl SwitchTrace {
    pub fn switched(&self) -> bool {
        self.info.switch_eval.is_some()
    }

    pub fn to_record(&self) -> RunRecord {
        let mut r = self.trace.to_record();
        r.switch = Some(SwitchFields {
            tau_exponent: TargetGrid::exponent(self.info.tau_index),
            switch_eval: self.info.switch_eval,
            phase1_reason: self.info.phase1_reason,
            phase2_reason: self.info.phase2_reason,
        });
        r
    }
}

/// Executes one switching run. `A1` is seeded with `seed`, `A2` with a seed
/// derived from it.
pub fn run_switch(plan: &SwitchPlan, problem: &ProblemInstance, budget: u64, seed: u64, run_index: u32) -> Result<SwitchTrace> {
    run_switch_on(plan, problem, problem.id, budget, seed, run_index)
}

/// [`run_switch`] on an arbitrary landscape reported as `id`.
pub fn run_switch_on(
    plan: &SwitchPlan,
    landscape: &dyn Landscape,
    id: ProblemId,
    budget: u64,
    seed: u64,
    run_index: u32,
) -> Result<SwitchTrace> {
    plan.validate()?;
    let tau_k = plan.tau_index()?;
    let phi_k = plan.phi_index()?;
    let d = landscape.dimension();
    let a1_cfg = OptimizerConfig { rng_seed: seed, ..plan.a1.clone() };
    let a2_cfg = OptimizerConfig { rng_seed: derive_seed(&[seed, A2_SEED_TAG]), ..plan.a2.clone() };

    let mut ev = BudgetedEvaluator::new(landscape, budget, tau_k);
    let mut a1 = AnyOptimizer::cold(&a1_cfg, d, budget)?;
    let phase1 = drive(&mut a1, &mut ev);
    let switch_now = match phase1 {
        TerminationReason::TargetHit => true,
        TerminationReason::AlgorithmConverged => plan.early_switch && ev.evals_used() > 0 && ev.remaining() > 0,
        TerminationReason::BudgetExhausted => false,
    };
    ev.set_stop_index(phi_k);

    let (reason, switch_eval, phase2) = if switch_now {
        let at = ev.evals_used();
        let ws = extract(&a1, &ev)?;
        let mut a2 = warm_start(&ws, &a2_cfg, &plan.policy, budget)?;
        let r2 = drive(&mut a2, &mut ev);
        (r2, Some(at), Some(r2))
    } else {
        (phase1, None, None)
    };
    Ok(SwitchTrace {
        trace: ev.into_trace(id, plan.label(), run_index, reason),
        info: SwitchInfo { tau_index: tau_k, switch_eval, phase1_reason: phase1, phase2_reason: phase2 },
    })
}

/// Seed of one `(plan, problem, run)` cell; independent of `tau` so that
/// sweeps share random numbers across switching points.
pub fn switch_cell_seed(master: u64, plan: &SwitchPlan, problem: &ProblemInstance, run: u32) -> u64 {
    derive_seed(&[
        master,
        SWITCH_CELL_TAG,
        plan.a1.algorithm.code(),
        plan.a2.algorithm.code(),
        problem.id.function_id as u64,
        problem.id.dimension as u64,
        problem.id.instance as u64,
        run as u64,
    ])
}

/// `runs` switching runs on each problem, in parallel; results are ordered
/// by problem, then run.
pub fn run_switch_batch(
    plan: &SwitchPlan,
    problems: &[ProblemInstance],
    runs: u32,
    budget: u64,
    master_seed: u64,
) -> Result<Vec<SwitchTrace>> {
    plan.validate()?;
    let cells: Vec<(usize, u32)> = (0..problems.len()).flat_map(|p| (0..runs).map(move |r| (p, r))).collect();
    cells
        .par_iter()
        .map(|&(p, r)| {
            let seed = switch_cell_seed(master_seed, plan, &problems[p], r);
            run_switch(plan, &problems[p], budget, seed, r)
        })
        .collect()
}

/// Grid switching points strictly above `phi`, from `10^2` downwards.
pub fn default_tau_grid(phi: f64) -> Result<Vec<f64>> {
    let p = TargetGrid::snap(phi)?;
    Ok((0..p).map(TargetGrid::target).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau_exponent: f64,
    pub instance: u32,
    pub run_index: u32,
    /// Hitting time of `phi`, `None` if missed.
    pub hitting_time: Option<u64>,
    pub evals_used: u64,
    pub switched: bool,
}

impl SweepRow {
    /// Hitting time, or the evaluations consumed for a miss.
    pub fn cost(&self) -> u64 {
        self.hitting_time.unwrap_or(self.evals_used)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub tau_exponent: f64,
    pub runs: usize,
    pub successes: usize,
    /// Mean and population standard deviation of [`SweepRow::cost`].
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl SweepResult {
    /// Mean cost over all rows whose switching point lies in
    /// `[lo_exponent, hi_exponent]`.
    pub fn mean_cost_between(&self, lo_exponent: f64, hi_exponent: f64) -> Option<f64> {
        let costs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.tau_exponent >= lo_exponent - 1e-9 && r.tau_exponent <= hi_exponent + 1e-9)
            .map(|r| r.cost() as f64)
            .collect();
        (!costs.is_empty()).then(|| costs.iter().sum::<f64>() / costs.len() as f64)
    }
}

/// Runs `template` at every switching point in `taus` (strictly descending,
/// all above `phi`) on every problem, `runs` times each.
pub fn sweep_tau(
    template: &SwitchPlan,
    problems: &[ProblemInstance],
    taus: &[f64],
    runs: u32,
    budget: u64,
    master_seed: u64,
) -> Result<SweepResult> {
    if taus.is_empty() {
        return Err(Error::Usage("empty switching-point grid".into()));
    }
    let idx: Vec<usize> = taus.iter().map(|&t| TargetGrid::snap(t)).collect::<Result<_>>()?;
    if idx.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("switching points must be strictly descending".into()));
    }
    let plans: Vec<SwitchPlan> = idx
        .iter()
        .map(|&k| SwitchPlan { tau: TargetGrid::target(k), ..template.clone() })
        .collect();
    for p in &plans {
        p.validate()?;
    }
    let cells: Vec<(usize, usize, u32)> = (0..plans.len())
        .flat_map(|t| (0..problems.len()).flat_map(move |p| (0..runs).map(move |r| (t, p, r))))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(t, p, r)| {
            let problem = &problems[p];
            let seed = switch_cell_seed(master_seed, &plans[t], problem, r);
            let st = run_switch(&plans[t], problem, budget, seed, r)?;
            let phi_k = plans[t].phi_index()?;
            Ok(SweepRow {
                tau_exponent: TargetGrid::exponent(idx[t]),
                instance: problem.id.instance,
                run_index: r,
                hitting_time: st.trace.hit(phi_k),
                evals_used: st.trace.evals_used,
                switched: st.switched(),
            })
        })
        .collect::<Result<_>>()?;
    let summary = idx
        .iter()
        .map(|&k| {
            let e = TargetGrid::exponent(k);
            let costs: Vec<f64> = rows.iter().filter(|r| r.tau_exponent == e).map(|r| r.cost() as f64).collect();
            let n = costs.len() as f64;
            let mean = costs.iter().sum::<f64>() / n;
            let std = (costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n).sqrt();
            SweepSummary {
                tau_exponent: e,
                runs: costs.len(),
                successes: rows.iter().filter(|r| r.tau_exponent == e && r.hitting_time.is_some()).count(),
                mean,
                std,
            }
        })
        .collect();
    Ok(SweepResult { rows, summary })
}

pub fn write_sweep_rows<W: std::io::Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "tau_exponent\tinstance\trun\thitting_time\tevals_used\tswitched")?;
    for r in rows {
        let ht = r.hitting_time.map_or_else(|| "inf".to_string(), |v| v.to_string());
        writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", r.tau_exponent, r.instance, r.run_index, ht, r.evals_used, r.switched)?;
    }
    Ok(())
}

pub fn write_sweep_summary<W: std::io::Write>(summary: &[SweepSummary], mut out: W) -> Result<()> {
    writeln!(out, "tau_exponent\tmean\tstd\tsuccesses\truns")?;
    for s in summary {
        writeln!(out, "{}\t{:.3}\t{:.3}\t{}\t{}", s.tau_exponent, s.mean, s.std, s.successes, s.runs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::run_single;
    use crate::problems::{instantiate, ProblemId};
    use crate::warmstart::WarmStartMode;

    fn problem(f: u32, d: usize, i: u32) -> ProblemInstance {
        instantiate(ProblemId::new(f, d, i).unwrap(), 1).unwrap()
    }

    #[test]
    fn plan_validation_and_label() {
        let p = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 3.98e-6, 1e-8);
        p.validate().unwrap();
        assert_eq!(p.label(), "BFGS>CMAES@1e-5.4");
        assert!(SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 1e-8, 1e-8).validate().is_err());
        assert!(SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 1e-9, 1e-8).validate().is_err());
        assert_eq!(SwitchPlan::new(Algorithm::Pso, Algorithm::De, 100.0, 1e-8).label(), "PSO>DE@1e2");
    }

    #[test]
    fn budget_is_conserved_and_switch_recorded() {
        let prob = problem(10, 3, 1);
        let plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 1e-3, 1e-8);
        let st = run_switch(&plan, &prob, 30_000, 7, 0).unwrap();
        assert!(st.trace.evals_used <= 30_000);
        if st.info.phase1_reason == TerminationReason::TargetHit {
            assert_eq!(st.trace.hit(plan.tau_index().unwrap()), st.info.switch_eval);
        }
        assert!(st.trace.hit_at.windows(2).all(|w| w[0] <= w[1]));
        let rec = st.to_record();
        assert_eq!(rec.to_trace().unwrap(), st.trace);
        assert_eq!(rec.switch.unwrap().tau_exponent, -3.0);
    }

    #[test]
    fn no_switch_equals_pure_a1_run() {
        // DE cannot reach 1e-7 on F21 within 300 evaluations.
        let prob = problem(21, 5, 1);
        let plan = SwitchPlan::new(Algorithm::De, Algorithm::Cmaes, 1e-7, 1e-8);
        let st = run_switch(&plan, &prob, 300, 13, 0).unwrap();
        assert!(!st.switched());
        let pure = run_single(&OptimizerConfig::new(Algorithm::De, 13), &prob, 300, 1e-8).unwrap();
        assert_eq!(st.trace.hit_at, pure.hit_at);
        assert_eq!(st.trace.evals_used, pure.evals_used);
        assert_eq!(st.trace.best_precision.to_bits(), pure.best_precision.to_bits());
        assert_eq!(st.trace.terminated_reason, pure.terminated_reason);
    }

    #[test]
    fn early_switch_flag() {
        // BFGS often stalls in a local optimum of the Gallagher function.
        let prob = problem(21, 2, 1);
        let mut plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 1e-7, 1e-8);
        let seed = (0..50)
            .find(|&s| {
                run_switch(&plan, &prob, 5_000, s, 0).unwrap().info.phase1_reason == TerminationReason::AlgorithmConverged
            })
            .expect("some BFGS run converges early");
        assert!(run_switch(&plan, &prob, 5_000, seed, 0).unwrap().switched());
        plan.early_switch = false;
        let strict = run_switch(&plan, &prob, 5_000, seed, 0).unwrap();
        assert!(!strict.switched());
        assert_eq!(strict.trace.terminated_reason, TerminationReason::AlgorithmConverged);
    }

    #[test]
    fn deterministic_per_seed() {
        let prob = problem(14, 2, 1);
        let plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 3.98e-6, 1e-8)
            .with_policy(WarmStartPolicy::with_mode(WarmStartMode::PointOnly));
        let a = run_switch(&plan, &prob, 20_000, 5, 1).unwrap();
        let b = run_switch(&plan, &prob, 20_000, 5, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_accounting() {
        let probs = vec![problem(1, 2, 1), problem(1, 2, 2)];
        let plan = SwitchPlan::new(Algorithm::Pso, Algorithm::Bfgs, 1.0, 1e-8);
        let taus = [10.0, 1.0, 1e-2];
        let s = sweep_tau(&plan, &probs, &taus, 2, 4_000, 1).unwrap();
        assert_eq!(s.rows.len(), 3 * 2 * 2);
        assert_eq!(s.summary.len(), 3);
        let single = sweep_tau(&plan, &probs, &taus[..1], 2, 4_000, 1).unwrap();
        let batch = run_switch_batch(&SwitchPlan { tau: 10.0, ..plan.clone() }, &probs, 2, 4_000, 1).unwrap();
        let from_batch: Vec<Option<u64>> = batch.iter().map(|t| t.trace.hit(TargetGrid::FINAL)).collect();
        let from_sweep: Vec<Option<u64>> = single.rows.iter().map(|r| r.hitting_time).collect();
        assert_eq!(from_batch, from_sweep);
        assert!(sweep_tau(&plan, &probs, &[1e-2, 1.0], 1, 100, 1).is_err());
    }

    #[test]
    fn default_grid_has_fifty_points() {
        let g = default_tau_grid(1e-8).unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 100.0);
        assert!((g[49].log10() + 7.8).abs() < 1e-12);
    }
}
