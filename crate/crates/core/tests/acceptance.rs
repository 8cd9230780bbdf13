//! End-to-end acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each and exits non-zero if any fails.

use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;

use dynas::analysis::{best_tau, ert, theoretical_performance, vbs_reports, ErtCurve, ErtTable, RunOutcome};
use dynas::experiment::{cmd_bench, load_traces, ExperimentSpec};
use dynas::optimizers::{drive, run_single, Algorithm, AnyOptimizer, Bfgs, BfgsParams, Hyperparameters, OptimizerConfig};
use dynas::problems::{evaluate, instantiate, precision, random_rotation, Landscape, ProblemId, ProblemInstance, DIMENSIONS, FUNCTION_IDS, INSTANCES};
use dynas::seed::{derive_seed, rng_from_seed};
use dynas::switching::{run_switch_batch, run_switch_on, sweep_tau, SwitchPlan, SwitchTrace};
use dynas::tracing::{BudgetedEvaluator, RunTrace, TargetGrid, GRID_LEN};
use dynas::warmstart::{cmaes_from_bfgs, extract, trajectory_step_size, warm_start, WarmStartMode, WarmStartPolicy, WarmStartState};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn problems(f: u32, d: usize) -> Vec<ProblemInstance> {
    INSTANCES.iter().map(|&i| instantiate(ProblemId::new(f, d, i).unwrap(), 1).unwrap()).collect()
}

fn switch_curve(traces: &[SwitchTrace]) -> ErtCurve {
    ErtCurve::from_traces(&traces.iter().map(|t| &t.trace).collect::<Vec<_>>()).unwrap()
}

fn bench_table(dir: &Path, algorithms: Vec<Algorithm>, functions: Vec<u32>, dimensions: Vec<usize>) -> ErtTable {
    let spec = ExperimentSpec { algorithms, functions, dimensions, out: dir.to_path_buf(), ..ExperimentSpec::default() };
    let o = cmd_bench(&spec).unwrap();
    assert_eq!(o.failures, 0);
    let (traces, bad) = load_traces(dir).unwrap();
    assert_eq!(bad, 0);
    ErtTable::from_traces(&traces).unwrap()
}

struct Tables {
    low_dim: ErtTable,
    ill_conditioned: ErtTable,
}

impl Tables {
    fn all(&self) -> impl Iterator<Item = &ErtCurve> {
        self.low_dim.curves.values().chain(self.ill_conditioned.curves.values())
    }
}

// ---------------------------------------------------------------------------

fn ert_oracle(runs: &[(Option<u64>, u64)]) -> f64 {
    let mut successes = 0.0;
    let mut total = 0.0;
    for i in (0..runs.len()).rev() {
        let (hit, consumed) = runs[i];
        if let Some(t) = hit {
            successes += 1.0;
            total += if t < consumed { t as f64 } else { consumed as f64 };
        } else {
            total += consumed as f64;
        }
    }
    if successes == 0.0 {
        f64::INFINITY
    } else {
        total / successes
    }
}

fn criterion_1() -> Check {
    let mut rng = rng_from_seed(11);
    let sets: Vec<Vec<(Option<u64>, u64)>> = (0..1000)
        .map(|_| {
            let n = rng.random_range(1..=60);
            let p = rng.random_range(0.0..1.0);
            (0..n)
                .map(|_| {
                    let consumed = rng.random_range(1..200_000u64);
                    (rng.random_bool(p).then(|| rng.random_range(1..=consumed)), consumed)
                })
                .collect()
        })
        .collect();
    let start = Instant::now();
    let mut mismatches = 0;
    for s in &sets {
        let outcomes: Vec<RunOutcome> = s.iter().map(|&(h, c)| RunOutcome { hitting_time: h, consumed: c }).collect();
        if ert(&outcomes).unwrap().to_bits() != ert_oracle(s).to_bits() {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(mismatches == 0 && secs < 1.0, format!("{mismatches} mismatches over 1000 sets in {secs:.3}s"))
}

fn criterion_2(t: &Tables) -> Check {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for c in t.all() {
        for tau in 0..GRID_LEN {
            let v = theoretical_performance(&c.ert, &c.ert, tau, TargetGrid::FINAL);
            let e = c.ert[TargetGrid::FINAL];
            let err = if v.is_infinite() && e.is_infinite() { 0.0 } else { (v - e).abs() };
            worst = worst.max(err);
            n += 1;
        }
    }
    ensure(worst <= 1e-9, format!("{n} identity evaluations, max deviation {worst:e}"))
}

fn criterion_3(t: &Tables) -> Check {
    let mut reports = vbs_reports(&t.low_dim, TargetGrid::FINAL).unwrap();
    reports.extend(vbs_reports(&t.ill_conditioned, TargetGrid::FINAL).unwrap());
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| !(r.theoretical_ert <= r.static_ert))
        .map(|r| format!("f{} d{}", r.function_id, r.dimension))
        .collect();
    ensure(bad.is_empty(), format!("{} cells analyzed, violations: {bad:?}", reports.len()))
}

fn f1_oracle(p: &ProblemInstance, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        let z = x[i] - p.x_opt[i];
        s += z * z;
    }
    s + p.f_opt
}

fn f8_oracle(p: &ProblemInstance, x: &[f64]) -> f64 {
    let d = x.len();
    let c = if (d as f64).sqrt() / 8.0 > 1.0 { (d as f64).sqrt() / 8.0 } else { 1.0 };
    let z: Vec<f64> = (0..d).map(|i| c * (x[i] - p.x_opt[i]) + 1.0).collect();
    let mut s = 0.0;
    for i in 0..d - 1 {
        let a = z[i] * z[i] - z[i + 1];
        s += 100.0 * a * a + (z[i] - 1.0) * (z[i] - 1.0);
    }
    s + p.f_opt
}

fn criterion_4() -> Check {
    let mut worst_opt: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for &f in &FUNCTION_IDS {
        for &d in &DIMENSIONS {
            for &i in &INSTANCES {
                let p = instantiate(ProblemId::new(f, d, i).unwrap(), 1).unwrap();
                worst_opt = worst_opt.max((evaluate(&p, &p.x_opt).unwrap() - p.f_opt).abs());
                for m in [&p.rotation_r, &p.rotation_q] {
                    let e = (m.transpose() * m - DMatrix::identity(d, d)).abs().max();
                    worst_orth = worst_orth.max(e);
                }
            }
        }
    }
    let mut rng = rng_from_seed(44);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let d = DIMENSIONS[rng.random_range(0..DIMENSIONS.len())];
        let i = rng.random_range(1..=5);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        for (f, oracle) in [(1, f1_oracle as fn(&ProblemInstance, &[f64]) -> f64), (8, f8_oracle)] {
            let p = instantiate(ProblemId::new(f, d, i).unwrap(), 1).unwrap();
            let got = evaluate(&p, &x).unwrap();
            let want = oracle(&p, &x);
            worst_rel = worst_rel.max((got - want).abs() / want.abs().max(1e-300));
        }
    }
    ensure(
        worst_opt <= 1e-12 && worst_orth <= 1e-10 && worst_rel <= 1e-10,
        format!("optimum gap {worst_opt:e}, orthogonality {worst_orth:e}, F1/F8 relative {worst_rel:e}"),
    )
}

struct Quadratic {
    a: DMatrix<f64>,
}

impl Landscape for Quadratic {
    fn dimension(&self) -> usize {
        self.a.nrows()
    }
    fn f_opt(&self) -> f64 {
        -1.0
    }
    fn value(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        0.5 * (v.transpose() * &self.a * &v)[0]
    }
}

fn criterion_5() -> Check {
    let mut msgs = Vec::new();
    let mut ok = true;
    for a in [Algorithm::Cmaes, Algorithm::Bfgs] {
        for d in [2, 5] {
            let probs = problems(1, d);
            let hits: usize = (0..25u32)
                .into_par_iter()
                .map(|k| {
                    let p = &probs[(k / 5) as usize];
                    let cfg = OptimizerConfig::new(a, derive_seed(&[5, a.code(), d as u64, k as u64]));
                    run_single(&cfg, p, 10_000 * d as u64, 1e-8).unwrap().hit(TargetGrid::FINAL).is_some() as usize
                })
                .sum();
            ok &= hits >= 24;
            msgs.push(format!("{a} d{d} {hits}/25"));
        }
    }
    let mut rng = rng_from_seed(55);
    let mut worst: f64 = 0.0;
    for d in [2, 4, 6] {
        let r = random_rotation(d, &mut rng);
        let eig = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| 1.0 + 4.0 * i as f64));
        let a = &r * eig * r.transpose();
        let q = Quadratic { a: a.clone() };
        let mut ev = BudgetedEvaluator::new(&q, 100_000, TargetGrid::FINAL);
        let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
        let mut opt = AnyOptimizer::Bfgs(Bfgs::warm(BfgsParams::default(), x0, None, DMatrix::identity(d, d)));
        drive(&mut opt, &mut ev);
        let AnyOptimizer::Bfgs(b) = &opt else { unreachable!() };
        let expected = a.try_inverse().unwrap();
        worst = worst.max((b.curvature_estimate() - &expected).norm() / expected.norm());
    }
    ok &= worst < 1e-3;
    msgs.push(format!("inverse Hessian relative error {worst:e}"));
    ensure(ok, msgs.join(", "))
}

fn alignment_error(c: &DMatrix<f64>, h: &DMatrix<f64>) -> f64 {
    let eig = h.clone().symmetric_eigen();
    let mut worst: f64 = 0.0;
    for j in 0..h.ncols() {
        let u = eig.eigenvectors.column(j).into_owned();
        let cu = c * &u;
        let along = u.dot(&cu);
        let sin = (&cu - &u * along).norm() / cu.norm();
        worst = worst.max(sin.asin());
    }
    worst
}

fn criterion_6() -> Check {
    let mut rng = rng_from_seed(66);
    let d = 5;
    let r = random_rotation(d, &mut rng);
    let eig = DMatrix::from_diagonal(&DVector::from_fn(d, |i, _| 10f64.powi(i as i32 - 2)));
    let h = &r * eig * r.transpose();
    let mut ws = WarmStartState::point(Algorithm::Bfgs, vec![0.5; d], 3.0, 100);
    ws.inv_hessian = Some(h.clone());
    let trajectory: Vec<Vec<f64>> = (0..12).map(|i| {
        let mut x = vec![0.5; d];
        x[0] += 0.75 * i as f64;
        x[1] -= i as f64;
        x
    }).collect();
    ws.recent_trajectory = Some(trajectory.clone());
    let policy = WarmStartPolicy::default();
    let mut es = cmaes_from_bfgs(&ws, &policy, &Hyperparameters::default(), 7);
    let det_err = (es.covariance.determinant() - 1.0).abs();
    let angle = alignment_error(&es.covariance, &h);
    let sigma_exact = trajectory_step_size(&trajectory, 10) == Some(1.25) && es.sigma == 1.25;

    let mut sum = DMatrix::<f64>::zeros(d, d);
    let mut n = 0usize;
    while n < 10_000 {
        let (_, xs) = es.ask();
        for x in xs.iter().take(10_000 - n) {
            let dx = x - &es.mean;
            sum += &dx * dx.transpose();
            n += 1;
        }
    }
    let target = &es.covariance * (es.sigma * es.sigma);
    let mc_err = (sum / n as f64 - &target).norm() / target.norm();

    // The same invariants on a state extracted from a real BFGS run.
    let p = instantiate(ProblemId::new(10, 5, 1).unwrap(), 1).unwrap();
    let mut ev = BudgetedEvaluator::new(&p, 50_000, TargetGrid::index_of_exponent(-2.0).unwrap());
    let mut bfgs = AnyOptimizer::cold(&OptimizerConfig::new(Algorithm::Bfgs, 3), 5, 50_000).unwrap();
    drive(&mut bfgs, &mut ev);
    let real = extract(&bfgs, &ev).unwrap();
    let warmed = warm_start(&real, &OptimizerConfig::new(Algorithm::Cmaes, 4), &policy, 50_000).unwrap();
    let AnyOptimizer::Cmaes(real_es) = &warmed else { unreachable!() };
    let real_det = (real_es.covariance.determinant() - 1.0).abs();
    let real_angle = alignment_error(&real_es.covariance, real.inv_hessian.as_ref().unwrap());

    ensure(
        det_err <= 1e-8 && real_det <= 1e-8 && angle <= 1e-8 && real_angle <= 1e-8 && es.sigma > 0.0 && real_es.sigma > 0.0 && sigma_exact && mc_err < 0.05,
        format!(
            "det error {det_err:e}/{real_det:e}, angle {angle:e}/{real_angle:e}, sigma {}/{:.3e}, constant step exact {sigma_exact}, MC covariance error {:.2}%",
            es.sigma,
            real_es.sigma,
            100.0 * mc_err
        ),
    )
}

fn criterion_7(t: &Tables) -> Check {
    let probs = problems(14, 2);
    let tau = 10f64.powf(-5.4);
    let static_cma = t.low_dim.get("CMAES", 14, 2).unwrap().ert[TargetGrid::FINAL];
    let run = |mode| {
        let plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, tau, 1e-8).with_policy(WarmStartPolicy::with_mode(mode));
        switch_curve(&run_switch_batch(&plan, &probs, 5, 20_000, 7).unwrap()).ert[TargetGrid::FINAL]
    };
    let full = run(WarmStartMode::Full);
    let point = run(WarmStartMode::PointOnly);
    let gain = (static_cma - full) / static_cma;
    ensure(
        full < static_cma && full < point && gain > 0.25,
        format!("full switch {full:.1}, point_only switch {point:.1}, static CMA-ES {static_cma:.1}, gain {:.1}%", 100.0 * gain),
    )
}

fn criterion_8(t: &Tables) -> Check {
    let mut ok = true;
    let mut msgs = Vec::new();
    for f in [10, 11] {
        let bfgs = t.ill_conditioned.get("BFGS", f, 10).unwrap();
        let cma = t.ill_conditioned.get("CMAES", f, 10).unwrap();
        let grid: Vec<usize> = (0..TargetGrid::FINAL).collect();
        let (tau_k, theo) = best_tau(&bfgs.ert, &cma.ert, TargetGrid::FINAL, &grid).unwrap();
        let plan = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, TargetGrid::target(tau_k), 1e-8);
        let actual = switch_curve(&run_switch_batch(&plan, &problems(f, 10), 5, 100_000, 8).unwrap()).ert[TargetGrid::FINAL];
        let s_cma = cma.ert[TargetGrid::FINAL];
        let s_bfgs = bfgs.ert[TargetGrid::FINAL];
        let gain = (s_cma - actual) / s_cma;
        ok &= gain > 0.2 || (actual < s_cma && actual < s_bfgs);
        msgs.push(format!(
            "F{f}: tau* 1e{}, theoretical {theo:.1}, actual {actual:.1}, static CMA-ES {s_cma:.1}, static BFGS {s_bfgs:.1}, gain {:.1}%",
            TargetGrid::exponent(tau_k),
            100.0 * gain
        ));
    }
    ensure(ok, msgs.join("; "))
}

fn criterion_9() -> Check {
    let template = SwitchPlan::new(Algorithm::Bfgs, Algorithm::Cmaes, 1e2, 1e-8);
    let taus: Vec<f64> = (0..TargetGrid::FINAL).map(TargetGrid::target).collect();
    let res = sweep_tau(&template, &problems(10, 5), &taus, 5, 50_000, 9).unwrap();
    let late = res.mean_cost_between(-7.8, -4.0).unwrap();
    let early = res.mean_cost_between(1.0, 2.0).unwrap();
    ensure(late < early, format!("{} switching points, mean for tau in [1e-7.8, 1e-4] {late:.1}, for tau in [1e1, 1e2] {early:.1}", taus.len()))
}

/// Forwards to an instance and records every value handed out.
struct Recording<'a> {
    inner: &'a ProblemInstance,
    values: Mutex<Vec<f64>>,
}

impl Landscape for Recording<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn f_opt(&self) -> f64 {
        self.inner.f_opt()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let v = self.inner.value(x);
        self.values.lock().unwrap().push(v);
        v
    }
}

fn check_trace(trace: &RunTrace, values: &[f64], p: &ProblemInstance, stop: usize) -> Result<(), String> {
    if values.len() as u64 != trace.evals_used || trace.evals_used > trace.budget {
        return Err(format!("{} evaluations seen, {} counted, budget {}", values.len(), trace.evals_used, trace.budget));
    }
    if trace.hit_at.windows(2).any(|w| w[0] > w[1]) || trace.hit_at.iter().any(|&h| h == 0 || h > trace.evals_used) {
        return Err(format!("non-monotone hits {:?}", trace.hit_at));
    }
    let mut best = f64::INFINITY;
    let mut expected_hits = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        best = best.min(precision(p, v));
        while expected_hits.len() < GRID_LEN && best <= TargetGrid::target(expected_hits.len()) {
            expected_hits.push(i as u64 + 1);
        }
    }
    if expected_hits != trace.hit_at {
        return Err(format!("hits {:?} differ from best-so-far replay {:?}", trace.hit_at, expected_hits));
    }
    if !values.is_empty() && trace.best_precision != best {
        return Err(format!("best precision {} but replay gives {best}", trace.best_precision));
    }
    if trace.evals_used < trace.budget && expected_hits.len() <= stop && trace.terminated_reason == dynas::TerminationReason::BudgetExhausted {
        return Err("budget reported exhausted early".into());
    }
    Ok(())
}

fn fuzz_case(k: u64) -> Result<bool, String> {
    let mut rng = rng_from_seed(derive_seed(&[10, k]));
    let f = FUNCTION_IDS[rng.random_range(0..FUNCTION_IDS.len())];
    let d = [2, 3, 5][rng.random_range(0..3)];
    let p = instantiate(ProblemId::new(f, d, rng.random_range(1..=5)).unwrap(), 1).unwrap();
    let budget = rng.random_range(1..400u64);
    let rec = Recording { inner: &p, values: Mutex::new(Vec::new()) };
    let a1 = Algorithm::ALL[rng.random_range(0..5)];
    let seed = rng.random();
    if rng.random_bool(0.5) {
        let stop = rng.random_range(0..GRID_LEN);
        let mut opt = AnyOptimizer::cold(&OptimizerConfig::new(a1, seed), d, budget).map_err(|e| e.to_string())?;
        let mut ev = BudgetedEvaluator::new(&rec, budget, stop);
        let reason = drive(&mut opt, &mut ev);
        let trace = ev.into_trace(p.id, a1.label(), 0, reason);
        check_trace(&trace, &rec.values.lock().unwrap(), &p, stop)?;
        Ok(false)
    } else {
        let a2 = Algorithm::ALL[rng.random_range(0..5)];
        let tau = rng.random_range(0..TargetGrid::FINAL);
        let phi = rng.random_range(tau + 1..GRID_LEN);
        let mode = if rng.random_bool(0.5) { WarmStartMode::Full } else { WarmStartMode::PointOnly };
        let mut plan = SwitchPlan::new(a1, a2, TargetGrid::target(tau), TargetGrid::target(phi)).with_policy(WarmStartPolicy::with_mode(mode));
        plan.early_switch = rng.random_bool(0.5);
        let st = run_switch_on(&plan, &rec, p.id, budget, seed, 0).map_err(|e| format!("{}: {e}", plan.label()))?;
        check_trace(&st.trace, &rec.values.lock().unwrap(), &p, phi).map_err(|e| format!("{}: {e}", plan.label()))?;
        if let Some(at) = st.info.switch_eval {
            if at > st.trace.evals_used || at == 0 {
                return Err(format!("{}: switch at {at} of {}", plan.label(), st.trace.evals_used));
            }
            if st.info.phase1_reason == dynas::TerminationReason::TargetHit && st.trace.hit(tau) != Some(at) {
                return Err(format!("{}: switched at {at}, tau hit at {:?}", plan.label(), st.trace.hit(tau)));
            }
        }
        Ok(true)
    }
}

fn criterion_10() -> Check {
    let results: Vec<Result<bool, String>> = (0..10_000u64).into_par_iter().map(fuzz_case).collect();
    let switches = results.iter().filter(|r| matches!(r, Ok(true))).count();
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    ensure(
        failures.is_empty(),
        format!("10000 runs ({switches} switching), {} violations{}", failures.len(), failures.first().map(|e| format!(", first: {e}")).unwrap_or_default()),
    )
}

fn criterion_11() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let spec = |sub: &str, jobs| ExperimentSpec {
        functions: vec![1, 14, 21],
        dimensions: vec![2, 3],
        budget_multiplier: 500,
        jobs: Some(jobs),
        out: dir.path().join(sub),
        ..ExperimentSpec::default().quick()
    };
    cmd_bench(&spec("a", 1)).unwrap();
    cmd_bench(&spec("b", 4)).unwrap();
    let read = |s: &str| std::fs::read(dir.path().join(s).join("runs.jsonl")).unwrap();
    let (a, b) = (read("a"), read("b"));
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    ensure(a == b && lines == 5 * 3 * 2 * 2 * 3, format!("{lines} records, {} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let tables = Tables {
        low_dim: bench_table(&dir.path().join("low"), Algorithm::ALL.to_vec(), vec![1, 14, 21], vec![2]),
        ill_conditioned: bench_table(&dir.path().join("ill"), vec![Algorithm::Bfgs, Algorithm::Cmaes], vec![10, 11], vec![10]),
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("ERT oracle equivalence", Box::new(criterion_1)),
        ("identity switch equals static ERT", Box::new(|| criterion_2(&tables))),
        ("dynamic VBS never worse than static VBS", Box::new(|| criterion_3(&tables))),
        ("problem suite correctness", Box::new(criterion_4)),
        ("optimizer smoke convergence", Box::new(criterion_5)),
        ("warm-start invariants", Box::new(criterion_6)),
        ("F14 2D switch ordering", Box::new(|| criterion_7(&tables))),
        ("ill-conditioned gains", Box::new(|| criterion_8(&tables))),
        ("switching-point regimes on F10 5D", Box::new(criterion_9)),
        ("trace invariants under fuzzing", Box::new(criterion_10)),
        ("bench determinism", Box::new(criterion_11)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
