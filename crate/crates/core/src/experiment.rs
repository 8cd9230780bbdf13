//! Batch drivers behind the `dynas` subcommands. Every command writes into
//! one output directory together with a manifest echoing its spec.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    heatmap_data, read_vbs_reports, theoretical_performance, use_case_table, vbs_reports, write_ert_table, write_heatmap,
    write_use_cases, write_vbs_reports, ErtCurve, ErtTable, GainKind, Gains, VbsReport,
};
use crate::error::{Error, Result};
use crate::optimizers::{run_single, Algorithm, Hyperparameters, OptimizerConfig};
use crate::problems::{instantiate, write_manifest, ProblemId, ProblemInstance, DEFAULT_SUITE_SEED, DIMENSIONS, FUNCTION_IDS, INSTANCES};
use crate::seed::derive_seed;
use crate::switching::{default_tau_grid, run_switch, switch_cell_seed, sweep_tau, write_sweep_rows, write_sweep_summary, SwitchPlan};
use crate::tracing::{read_records, write_records, RunRecord, RunTrace, TargetGrid};
use crate::warmstart::WarmStartPolicy;

pub const RUN_LOG: &str = "runs.jsonl";
pub const VBS_FILE: &str = "vbs.tsv";

/// Everything a command needs; loadable from TOML with any subset of keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub algorithms: Vec<Algorithm>,
    pub functions: Vec<u32>,
    pub dimensions: Vec<usize>,
    pub instances: Vec<u32>,
    pub runs: u32,
    pub budget_multiplier: u64,
    pub phi: f64,
    pub seed: u64,
    pub suite_seed: u64,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub early_switch: bool,
    pub warm_start: WarmStartPolicy,
    pub params: Hyperparameters,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            algorithms: Algorithm::ALL.to_vec(),
            functions: FUNCTION_IDS.to_vec(),
            dimensions: DIMENSIONS.to_vec(),
            instances: INSTANCES.to_vec(),
            runs: 5,
            budget_multiplier: 10_000,
            phi: 1e-8,
            seed: 1,
            suite_seed: DEFAULT_SUITE_SEED,
            out: PathBuf::from("results"),
            jobs: None,
            early_switch: true,
            warm_start: WarmStartPolicy::default(),
            params: Hyperparameters::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    /// Small-scale variant: 3 runs on the first 2 instances.
    pub fn quick(mut self) -> Self {
        self.runs = 3;
        self.instances.truncate(2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() || self.functions.is_empty() || self.dimensions.is_empty() || self.instances.is_empty() {
            return Err(Error::Usage("algorithms, functions, dimensions and instances must be non-empty".into()));
        }
        if self.runs == 0 || self.budget_multiplier == 0 {
            return Err(Error::Usage("runs and budget multiplier must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Usage("--jobs must be positive".into()));
        }
        for &f in &self.functions {
            for &d in &self.dimensions {
                for &i in &self.instances {
                    ProblemId::new(f, d, i)?;
                }
            }
        }
        TargetGrid::snap(self.phi)?;
        self.warm_start.validate()?;
        self.params.validate()
    }

    pub fn budget(&self, d: usize) -> u64 {
        self.budget_multiplier * d as u64
    }

    fn problems(&self) -> Result<Vec<ProblemInstance>> {
        let mut out = Vec::new();
        for &f in &self.functions {
            for &d in &self.dimensions {
                for &i in &self.instances {
                    out.push(instantiate(ProblemId::new(f, d, i)?, self.suite_seed)?);
                }
            }
        }
        Ok(out)
    }

    fn problems_for(&self, f: u32, d: usize) -> Result<Vec<ProblemInstance>> {
        self.instances.iter().map(|&i| instantiate(ProblemId::new(f, d, i)?, self.suite_seed)).collect()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = self.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Result of a command: files written plus the number of failed cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

impl Outcome {
    /// Process exit code: 0 on success, 2 when some cells failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            2
        } else {
            0
        }
    }
}

/// Exit code for an error returned by a command.
pub fn error_exit_code(_e: &Error) -> i32 {
    1
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_manifest_file(dir: &Path, command: &str, spec: &ExperimentSpec, extra: &[(&str, String)]) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        command: &'a str,
        version: &'a str,
        extra: std::collections::BTreeMap<&'a str, String>,
        spec: &'a ExperimentSpec,
    }
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        extra: extra.iter().map(|(k, v)| (*k, v.clone())).collect(),
        spec,
    };
    let text = toml::to_string(&m).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text)?;
    Ok(path)
}

/// Seed of one static run cell.
pub fn bench_cell_seed(master: u64, algorithm: Algorithm, id: ProblemId, run: u32) -> u64 {
    derive_seed(&[master, algorithm.code(), id.function_id as u64, id.dimension as u64, id.instance as u64, run as u64])
}

fn run_cell<T>(what: impl Fn() -> Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(what)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(p) => Err(p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into())),
    }
}

fn write_failures(dir: &Path, failures: &[(String, String)]) -> Result<Option<PathBuf>> {
    if failures.is_empty() {
        return Ok(None);
    }
    let path = dir.join("failures.tsv");
    let mut w = create(&path)?;
    writeln!(w, "cell\terror")?;
    for (cell, err) in failures {
        writeln!(w, "{cell}\t{}", err.replace(['\t', '\n'], " "))?;
    }
    w.flush()?;
    Ok(Some(path))
}

/// Static runs of every algorithm on every problem. Writes `runs.jsonl`,
/// `suite.tsv`, `summary.tsv` and the manifest.
pub fn cmd_bench(spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    fs::create_dir_all(&spec.out)?;
    let problems = spec.problems()?;
    let cells: Vec<(Algorithm, usize, u32)> = spec
        .algorithms
        .iter()
        .flat_map(|&a| (0..problems.len()).flat_map(move |p| (0..spec.runs).map(move |r| (a, p, r))))
        .collect();
    let results: Vec<std::result::Result<RunRecord, String>> = spec.pool()?.install(|| {
        cells
            .par_iter()
            .map(|&(a, p, r)| {
                let problem = &problems[p];
                run_cell(|| {
                    let seed = bench_cell_seed(spec.seed, a, problem.id, r);
                    let cfg = OptimizerConfig::new(a, seed).with_params(spec.params.clone());
                    let mut t = run_single(&cfg, problem, spec.budget(problem.id.dimension), spec.phi)?;
                    t.run_index = r;
                    Ok(t.to_record())
                })
            })
            .collect()
    });

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (&(a, p, r), res) in cells.iter().zip(results) {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) => {
                let id = problems[p].id;
                log::error!("{a} f{} d{} i{} run {r} failed: {e}", id.function_id, id.dimension, id.instance);
                failures.push((format!("{a}/f{}/d{}/i{}/r{r}", id.function_id, id.dimension, id.instance), e));
            }
        }
    }

    let mut files = Vec::new();
    let log_path = spec.out.join(RUN_LOG);
    let mut w = create(&log_path)?;
    write_records(&records, &mut w)?;
    w.flush()?;
    files.push(log_path);

    let suite_path = spec.out.join("suite.tsv");
    let mut w = create(&suite_path)?;
    write_manifest(&problems, &mut w)?;
    w.flush()?;
    files.push(suite_path);

    let phi_k = TargetGrid::snap(spec.phi)?;
    let summary_path = spec.out.join("summary.tsv");
    let mut w = create(&summary_path)?;
    writeln!(w, "algorithm\tfunction_id\tdimension\tsuccesses\truns")?;
    for &a in &spec.algorithms {
        for &f in &spec.functions {
            for &d in &spec.dimensions {
                let cell: Vec<&RunRecord> = records
                    .iter()
                    .filter(|r| r.algorithm_label == a.label() && r.function_id == f && r.dimension == d)
                    .collect();
                let ok = cell
                    .iter()
                    .filter(|r| r.to_trace().map(|t| t.hit(phi_k).is_some()).unwrap_or(false))
                    .count();
                log::info!("{a} f{f} d{d}: {ok}/{} successes", cell.len());
                writeln!(w, "{a}\t{f}\t{d}\t{ok}\t{}", cell.len())?;
            }
        }
    }
    w.flush()?;
    files.push(summary_path);
    files.extend(write_failures(&spec.out, &failures)?);
    files.push(write_manifest_file(&spec.out, "bench", spec, &[])?);
    Ok(Outcome { files, failures: failures.len() })
}

/// Reads every `*.jsonl` file in `dir`, in name order.
pub fn load_traces(dir: &Path) -> Result<(Vec<RunTrace>, usize)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut traces = Vec::new();
    let mut malformed = 0;
    for p in paths {
        let (records, bad) = read_records(BufReader::new(File::open(&p)?))?;
        malformed += bad;
        for r in records {
            match r.to_trace() {
                Ok(t) => traces.push(t),
                Err(e) => {
                    log::warn!("{}: skipping record: {e}", p.display());
                    malformed += 1;
                }
            }
        }
    }
    Ok((traces, malformed))
}

/// ERT tables, virtual best solvers, use cases and heatmaps from the run
/// logs in `log_dir`. Only static runs (labels without a switch) enter the
/// virtual best solver search.
pub fn cmd_analyze(log_dir: &Path, phi: f64, out: &Path) -> Result<Outcome> {
    let phi_k = TargetGrid::snap(phi)?;
    let (traces, malformed) = load_traces(log_dir)?;
    if traces.is_empty() {
        return Err(Error::Usage(format!("no parseable run logs in {}", log_dir.display())));
    }
    if malformed > 0 {
        log::warn!("skipped {malformed} malformed log lines");
    }
    fs::create_dir_all(out)?;
    let table = ErtTable::from_traces(&traces)?;
    let static_only = ErtTable {
        curves: table
            .curves
            .iter()
            .filter(|(k, _)| k.algorithm_label.parse::<Algorithm>().is_ok())
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect(),
    };
    let reports = vbs_reports(&static_only, phi_k)?;
    let cells = table.cells();
    let mut functions: Vec<u32> = cells.iter().map(|c| c.0).collect();
    functions.dedup();
    let mut dims: Vec<usize> = cells.iter().map(|c| c.1).collect();
    dims.sort_unstable();
    dims.dedup();

    let mut files = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let path = out.join(name);
        let mut w = create(&path)?;
        f(&mut w)?;
        w.flush()?;
        files.push(path);
        Ok(())
    };
    emit("ert.tsv", &|w| write_ert_table(&table, w))?;
    emit(VBS_FILE, &|w| write_vbs_reports(&reports, w))?;
    emit("use_cases.tsv", &|w| write_use_cases(&use_case_table(&reports), w))?;
    emit("heatmap_theoretical.tsv", &|w| {
        write_heatmap(&heatmap_data(&reports, &functions, &dims, GainKind::Theoretical), w)
    })?;
    let spec = ExperimentSpec { phi, out: out.to_path_buf(), ..ExperimentSpec::default() };
    files.push(write_manifest_file(
        out,
        "analyze",
        &spec,
        &[("log_dir", log_dir.display().to_string()), ("malformed_lines", malformed.to_string())],
    )?);
    Ok(Outcome { files, failures: 0 })
}

/// Actual against theoretical against static performance of one plan on
/// one `(function, dimension)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchReport {
    pub plan: String,
    pub vbs: VbsReport,
    pub successes: usize,
    pub runs: usize,
}

impl SwitchReport {
    pub fn gains(&self) -> Gains {
        self.vbs.gains()
    }
}

pub fn write_switch_reports<W: Write>(reports: &[SwitchReport], mut out: W) -> Result<()> {
    writeln!(out, "plan\tsuccesses\truns")?;
    for r in reports {
        writeln!(out, "{}\t{}\t{}", r.plan, r.successes, r.runs)?;
    }
    Ok(())
}

fn static_curve(spec: &ExperimentSpec, a: Algorithm, problems: &[ProblemInstance]) -> Result<ErtCurve> {
    let traces: Vec<RunTrace> = problems
        .iter()
        .flat_map(|p| (0..spec.runs).map(move |r| (p, r)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(p, r)| {
            let cfg = OptimizerConfig::new(a, bench_cell_seed(spec.seed, a, p.id, r)).with_params(spec.params.clone());
            run_single(&cfg, p, spec.budget(p.id.dimension), spec.phi)
        })
        .collect::<Result<_>>()?;
    ErtCurve::from_traces(&traces.iter().collect::<Vec<_>>())
}

/// A plan to execute on one `(function, dimension)`; `reference` carries the
/// analysis row it came from, if any.
#[derive(Debug, Clone)]
pub struct SwitchJob {
    pub plan: SwitchPlan,
    pub function_id: u32,
    pub dimension: usize,
    pub reference: Option<VbsReport>,
}

/// Switch jobs for every switching virtual best solver in an analysis
/// directory, exactly as discovered.
pub fn jobs_from_analysis(dir: &Path, spec: &ExperimentSpec) -> Result<Vec<SwitchJob>> {
    let path = dir.join(VBS_FILE);
    let reports = read_vbs_reports(BufReader::new(
        File::open(&path).map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?,
    ))?;
    reports
        .into_iter()
        .filter(VbsReport::is_switch)
        .map(|r| {
            let a1: Algorithm = r.a1.parse()?;
            let a2: Algorithm = r.a2.parse()?;
            Ok(SwitchJob {
                plan: make_plan(spec, a1, a2, TargetGrid::target(r.tau_index)),
                function_id: r.function_id,
                dimension: r.dimension,
                reference: Some(r),
            })
        })
        .collect()
}

pub fn make_plan(spec: &ExperimentSpec, a1: Algorithm, a2: Algorithm, tau: f64) -> SwitchPlan {
    let mut plan = SwitchPlan::new(a1, a2, tau, spec.phi).with_policy(spec.warm_start);
    plan.a1.params = spec.params.clone();
    plan.a2.params = spec.params.clone();
    plan.early_switch = spec.early_switch;
    plan
}

/// Parses `A1:A2` (or `A1>A2`).
pub fn parse_pair(s: &str) -> Result<(Algorithm, Algorithm)> {
    let (a, b) = s
        .split_once([':', '>'])
        .ok_or_else(|| Error::Usage(format!("expected A1:A2, got '{s}'")))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// Executes every job on all instances of its `(function, dimension)`.
/// Static baselines and the theoretical value are recomputed from fresh
/// static runs unless the job carries an analysis row.
pub fn cmd_switch(spec: &ExperimentSpec, jobs: &[SwitchJob]) -> Result<Outcome> {
    spec.validate()?;
    if jobs.is_empty() {
        return Err(Error::Usage("no switch plans to execute".into()));
    }
    for j in jobs {
        j.plan.validate()?;
        ProblemId::new(j.function_id, j.dimension, 1)?;
    }
    fs::create_dir_all(&spec.out)?;
    let phi_k = TargetGrid::snap(spec.phi)?;
    let pool = spec.pool()?;
    let mut records = Vec::new();
    let mut reports = Vec::new();
    let mut failures = Vec::new();

    for job in jobs {
        let problems = spec.problems_for(job.function_id, job.dimension)?;
        let budget = spec.budget(job.dimension);
        let cells: Vec<(usize, u32)> = (0..problems.len()).flat_map(|p| (0..spec.runs).map(move |r| (p, r))).collect();
        let results: Vec<std::result::Result<RunRecord, String>> = pool.install(|| {
            cells
                .par_iter()
                .map(|&(p, r)| {
                    run_cell(|| {
                        let seed = switch_cell_seed(spec.seed, &job.plan, &problems[p], r);
                        Ok(run_switch(&job.plan, &problems[p], budget, seed, r)?.to_record())
                    })
                })
                .collect()
        });
        let mut traces = Vec::new();
        for (&(p, r), res) in cells.iter().zip(results) {
            match res.and_then(|rec| rec.to_trace().map(|t| (rec, t)).map_err(|e| e.to_string())) {
                Ok((rec, t)) => {
                    records.push(rec);
                    traces.push(t);
                }
                Err(e) => {
                    let id = problems[p].id;
                    log::error!("{} f{} d{} i{} run {r} failed: {e}", job.plan.label(), id.function_id, id.dimension, id.instance);
                    failures.push((format!("{}/f{}/d{}/i{}/r{r}", job.plan.label(), id.function_id, id.dimension, id.instance), e));
                }
            }
        }
        if traces.is_empty() {
            continue;
        }
        let actual = ErtCurve::from_traces(&traces.iter().collect::<Vec<_>>())?;
        let mut vbs = match &job.reference {
            Some(r) => r.clone(),
            None => {
                let (c1, c2) = pool.install(|| -> Result<_> {
                    Ok((
                        static_curve(spec, job.plan.a1.algorithm, &problems)?,
                        static_curve(spec, job.plan.a2.algorithm, &problems)?,
                    ))
                })?;
                let tau_k = job.plan.tau_index()?;
                let (static_best, static_ert) = if c2.ert[phi_k] < c1.ert[phi_k] {
                    (job.plan.a2.algorithm, c2.ert[phi_k])
                } else {
                    (job.plan.a1.algorithm, c1.ert[phi_k])
                };
                VbsReport {
                    function_id: job.function_id,
                    dimension: job.dimension,
                    static_best: static_best.label().into(),
                    static_ert,
                    a1: job.plan.a1.algorithm.label().into(),
                    a2: job.plan.a2.algorithm.label().into(),
                    tau_index: tau_k,
                    theoretical_ert: theoretical_performance(&c1.ert, &c2.ert, tau_k, phi_k),
                    actual_ert: None,
                }
            }
        };
        vbs.actual_ert = Some(actual.ert[phi_k]);
        reports.push(SwitchReport {
            plan: job.plan.label(),
            vbs,
            successes: actual.successes[phi_k],
            runs: actual.runs,
        });
    }

    let mut files = Vec::new();
    let log_path = spec.out.join("switch_runs.jsonl");
    let mut w = create(&log_path)?;
    write_records(&records, &mut w)?;
    w.flush()?;
    files.push(log_path);

    let table_path = spec.out.join("switch_report.tsv");
    let mut w = create(&table_path)?;
    let rows: Vec<VbsReport> = reports.iter().map(|r| r.vbs.clone()).collect();
    write_vbs_reports(&rows, &mut w)?;
    w.flush()?;
    files.push(table_path);

    let counts_path = spec.out.join("switch_counts.tsv");
    let mut w = create(&counts_path)?;
    write_switch_reports(&reports, &mut w)?;
    w.flush()?;
    files.push(counts_path);

    files.extend(write_failures(&spec.out, &failures)?);
    let plans: Vec<String> = jobs.iter().map(|j| format!("{}/f{}/d{}", j.plan.label(), j.function_id, j.dimension)).collect();
    files.push(write_manifest_file(&spec.out, "switch", spec, &[("plans", plans.join(","))])?);
    Ok(Outcome { files, failures: failures.len() })
}

/// Switching-point sweep of one pair on one `(function, dimension)` over
/// all instances of `spec`. `taus` defaults to the full grid above `phi`.
pub fn cmd_sweep_tau(
    spec: &ExperimentSpec,
    a1: Algorithm,
    a2: Algorithm,
    function_id: u32,
    dimension: usize,
    taus: Option<Vec<f64>>,
) -> Result<Outcome> {
    spec.validate()?;
    let taus = match taus {
        Some(t) => t,
        None => default_tau_grid(spec.phi)?,
    };
    let template = make_plan(spec, a1, a2, taus[0]);
    let problems = spec.problems_for(function_id, dimension)?;
    fs::create_dir_all(&spec.out)?;
    let result = spec
        .pool()?
        .install(|| sweep_tau(&template, &problems, &taus, spec.runs, spec.budget(dimension), spec.seed))?;
    let rows_path = spec.out.join("sweep_rows.tsv");
    let mut w = create(&rows_path)?;
    write_sweep_rows(&result.rows, &mut w)?;
    w.flush()?;
    let summary_path = spec.out.join("sweep_summary.tsv");
    let mut w = create(&summary_path)?;
    write_sweep_summary(&result.summary, &mut w)?;
    w.flush()?;
    let manifest = write_manifest_file(
        &spec.out,
        "sweep-tau",
        spec,
        &[("pair", format!("{a1}:{a2}")), ("function_id", function_id.to_string()), ("dimension", dimension.to_string())],
    )?;
    Ok(Outcome { files: vec![rows_path, summary_path, manifest], failures: 0 })
}
