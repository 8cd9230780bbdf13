//! Runs BFGS on F10 until 1e-2, then shows the CMA-ES distribution built
//! from its state.

use dynas::optimizers::{drive, Algorithm, AnyOptimizer, OptimizerConfig};
use dynas::problems::{instantiate, ProblemId};
use dynas::tracing::{BudgetedEvaluator, TargetGrid};
use dynas::warmstart::{extract, warm_start, WarmStartMode, WarmStartPolicy};

fn main() -> dynas::Result<()> {
    let p = instantiate(ProblemId::new(10, 3, 1)?, 1)?;
    let tau = TargetGrid::snap(1e-2)?;
    let mut ev = BudgetedEvaluator::new(&p, 30_000, tau);
    let mut bfgs = AnyOptimizer::cold(&OptimizerConfig::new(Algorithm::Bfgs, 1), 3, 30_000)?;
    let reason = drive(&mut bfgs, &mut ev);
    println!("BFGS stopped ({reason:?}) after {} evaluations", ev.evals_used());

    let ws = extract(&bfgs, &ev)?;
    for mode in [WarmStartMode::PointOnly, WarmStartMode::Full] {
        let next = warm_start(&ws, &OptimizerConfig::new(Algorithm::Cmaes, 2), &WarmStartPolicy::with_mode(mode), 30_000)?;
        if let AnyOptimizer::Cmaes(es) = next {
            let eig = es.covariance.clone().symmetric_eigen();
            println!(
                "{mode}: sigma {:.3e}, det(C) {:.6}, axis ratio {:.1}",
                es.sigma,
                es.covariance.determinant(),
                (eig.eigenvalues.max() / eig.eigenvalues.min()).sqrt()
            );
        }
    }
    Ok(())
}
