//! Benchmarks the whole portfolio on a few 2D functions and reports the
//! static and dynamic virtual best solvers and the switching use cases.

use dynas::analysis::{use_case_table, vbs_reports, ErtTable};
use dynas::experiment::{cmd_bench, load_traces, ExperimentSpec};
use dynas::tracing::TargetGrid;

fn main() -> dynas::Result<()> {
    let dir = std::env::temp_dir().join("dynas-portfolio-vbs");
    let spec = ExperimentSpec {
        functions: vec![1, 8, 14, 21],
        dimensions: vec![2],
        budget_multiplier: 5_000,
        out: dir.clone(),
        ..ExperimentSpec::default().quick()
    };
    cmd_bench(&spec)?;
    let (traces, _) = load_traces(&dir)?;
    let reports = vbs_reports(&ErtTable::from_traces(&traces)?, TargetGrid::FINAL)?;
    for r in &reports {
        println!(
            "F{:<2} {}D  static {:<5} {:>9.1}   dynamic {}>{}@1e{} {:>9.1}   gain {:>6.1}%",
            r.function_id,
            r.dimension,
            r.static_best,
            r.static_ert,
            r.a1,
            r.a2,
            TargetGrid::exponent(r.tau_index),
            r.theoretical_ert,
            100.0 * r.gains().theoretical_vs_static
        );
    }
    for u in use_case_table(&reports) {
        println!("{}>{}: {} use cases {:?}", u.a1, u.a2, u.count(), u.cells);
    }
    Ok(())
}
