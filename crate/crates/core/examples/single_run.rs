//! One static run of each optimizer on F10 in 5D, with its hitting times.

use dynas::optimizers::{run_single, Algorithm, OptimizerConfig};
use dynas::problems::{instantiate, ProblemId};
use dynas::tracing::TargetGrid;

fn main() -> dynas::Result<()> {
    let p = instantiate(ProblemId::new(10, 5, 1)?, 1)?;
    for a in Algorithm::ALL {
        let t = run_single(&OptimizerConfig::new(a, 42), &p, 50_000, 1e-8)?;
        let at = |e: f64| TargetGrid::index_of_exponent(e).and_then(|k| t.hit(k));
        println!(
            "{a:>5}: {:?} after {} evals, best precision {:.2e}, 1e0 at {:?}, 1e-4 at {:?}, 1e-8 at {:?}",
            t.terminated_reason,
            t.evals_used,
            t.best_precision,
            at(0.0),
            at(-4.0),
            at(-8.0)
        );
    }
    Ok(())
}
