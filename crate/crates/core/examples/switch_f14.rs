//! BFGS then CMA-ES on F14 in 2D, switching at 1e-5.4, against static
//! CMA-ES and a point-only warm start.

use dynas::analysis::{gains, ErtCurve};
use dynas::optimizers::{run_single, Algorithm, OptimizerConfig};
use dynas::problems::{instantiate, ProblemId, ProblemInstance};
use dynas::switching::{run_switch_batch, SwitchPlan};
use dynas::tracing::{RunTrace, TargetGrid};
use dynas::warmstart::{WarmStartMode, WarmStartPolicy};

fn ert_of(traces: &[&RunTrace]) -> dynas::Result<f64> {
    Ok(ErtCurve::from_traces(traces)?.ert[TargetGrid::FINAL])
}

fn main() -> dynas::Result<()> {
    let problems: Vec<ProblemInstance> =
        (1..=5).map(|i| instantiate(ProblemId::new(14, 2, i)?, 1)).collect::<dynas::Result<_>>()?;
    let mut statics = Vec::new();
    for p in &problems {
        for run in 0..5 {
            statics.push(run_single(&OptimizerConfig::new(Algorithm::Cmaes, 31 * p.id.instance as u64 + run), p, 20_000, 1e-8)?);
        }
    }
    let static_ert = ert_of(&statics.iter().collect::<Vec<_>>())?;
    println!("static CMAES: {static_ert:.1}");

    for mode in [WarmStartMode::Full, WarmStartMode::PointOnly] {
        let plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 10f64.powf(-5.4), 1e-8)
            .with_policy(WarmStartPolicy::with_mode(mode));
        let runs = run_switch_batch(&plan, &problems, 5, 20_000, 7)?;
        let actual = ert_of(&runs.iter().map(|r| &r.trace).collect::<Vec<_>>())?;
        let g = gains(static_ert, actual, Some(actual));
        println!("{} ({mode}): {actual:.1}, gain over static {:.1}%", plan.label(), 100.0 * g.actual_vs_static.unwrap_or(0.0));
    }
    Ok(())
}
