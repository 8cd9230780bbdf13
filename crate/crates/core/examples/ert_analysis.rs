//! ERT curves of BFGS and CMA-ES on F14 in 2D and the best switching point
//! between them.

use dynas::analysis::{best_tau, ErtCurve};
use dynas::optimizers::{run_single, Algorithm, OptimizerConfig};
use dynas::problems::{instantiate, ProblemId};
use dynas::tracing::{RunTrace, TargetGrid};

fn curve(a: Algorithm) -> dynas::Result<ErtCurve> {
    let mut traces: Vec<RunTrace> = Vec::new();
    for instance in 1..=5 {
        let p = instantiate(ProblemId::new(14, 2, instance)?, 1)?;
        for run in 0..5 {
            traces.push(run_single(&OptimizerConfig::new(a, 100 * instance as u64 + run), &p, 20_000, 1e-8)?);
        }
    }
    ErtCurve::from_traces(&traces.iter().collect::<Vec<_>>())
}

fn main() -> dynas::Result<()> {
    let bfgs = curve(Algorithm::Bfgs)?;
    let cma = curve(Algorithm::Cmaes)?;
    println!("{:>7} {:>10} {:>10}", "target", "BFGS", "CMAES");
    for k in (0..TargetGrid::LEN).step_by(5) {
        println!("{:>7} {:>10.1} {:>10.1}", format!("1e{}", TargetGrid::exponent(k)), bfgs.ert[k], cma.ert[k]);
    }
    let grid: Vec<usize> = (0..TargetGrid::FINAL).collect();
    if let Some((k, v)) = best_tau(&bfgs.ert, &cma.ert, TargetGrid::FINAL, &grid) {
        println!("BFGS>CMAES: best switch at 1e{} with theoretical ERT {v:.1}", TargetGrid::exponent(k));
    }
    Ok(())
}
