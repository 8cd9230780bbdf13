//! Instantiates every function of the suite in 2D and prints its optimum.

use dynas::problems::{evaluate, instantiate, ProblemId, FUNCTION_IDS};

fn main() -> dynas::Result<()> {
    println!("{:>3} {:>12} {:>12}  x_opt", "f", "f_opt", "f(x_opt)");
    for f in FUNCTION_IDS {
        let p = instantiate(ProblemId::new(f, 2, 1)?, 1)?;
        let at_opt = evaluate(&p, &p.x_opt)?;
        println!("{f:>3} {:>12.4} {:>12.4}  [{:.4}, {:.4}]", p.f_opt, at_opt, p.x_opt[0], p.x_opt[1]);
    }
    Ok(())
}
