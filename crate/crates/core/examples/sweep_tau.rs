//! Mean hitting time of BFGS then CMA-ES on F10 in 5D as a function of the
//! switching point.

use dynas::optimizers::Algorithm;
use dynas::problems::{instantiate, ProblemId, ProblemInstance};
use dynas::switching::{default_tau_grid, sweep_tau, SwitchPlan};

fn main() -> dynas::Result<()> {
    let problems: Vec<ProblemInstance> =
        (1..=5).map(|i| instantiate(ProblemId::new(10, 5, i)?, 1)).collect::<dynas::Result<_>>()?;
    let plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 1e2, 1e-8);
    let res = sweep_tau(&plan, &problems, &default_tau_grid(1e-8)?, 5, 50_000, 1)?;
    for s in res.summary.iter().step_by(2) {
        let bar = "#".repeat((s.mean / 40.0) as usize);
        println!("1e{:<5} {:>8.1} +- {:>6.1} {bar}", s.tau_exponent, s.mean, s.std);
    }
    Ok(())
}
