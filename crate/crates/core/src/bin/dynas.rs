use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynas::experiment::{
    cmd_analyze, cmd_bench, cmd_sweep_tau, cmd_switch, error_exit_code, jobs_from_analysis, make_plan, parse_pair,
    ExperimentSpec, Outcome, SwitchJob,
};
use dynas::{Algorithm, Error, Result, WarmStartMode};

#[derive(Parser)]
#[command(name = "dynas", version, about = "Single-switch dynamic algorithm selection benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Static runs of the portfolio.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms.
        #[arg(long, value_delimiter = ',')]
        algorithms: Option<Vec<Algorithm>>,
    },
    /// ERT tables, virtual best solvers, use cases and heatmaps from run logs.
    Analyze {
        /// Directory holding `*.jsonl` run logs.
        logs: PathBuf,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs switching plans and compares them with static and theoretical performance.
    Switch {
        #[command(flatten)]
        common: Common,
        /// Pairs `A1:A2`, run on every selected function and dimension at `--tau`.
        #[arg(long = "plan")]
        plans: Vec<String>,
        /// Analysis directory whose switching virtual best solvers are executed.
        #[arg(long, conflicts_with = "plans")]
        from_analysis: Option<PathBuf>,
    },
    /// Switching-point sweep of one pair on one function and dimension.
    SweepTau {
        #[command(flatten)]
        common: Common,
        /// Pair `A1:A2`.
        #[arg(long)]
        plan: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_delimiter = ',')]
    functions: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    instances: Option<Vec<u32>>,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    budget_mult: Option<u64>,
    #[arg(long)]
    phi: Option<f64>,
    /// Switching points; several values for a sweep.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    tau: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// 3 runs on 2 instances.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    warmstart_mode: Option<WarmStartMode>,
    #[arg(long)]
    no_early_switch: bool,
    /// TOML file with spec keys; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec> {
        let mut s = match &self.config {
            Some(p) => ExperimentSpec::from_toml(&std::fs::read_to_string(p)?)?,
            None => ExperimentSpec::default(),
        };
        if self.quick {
            s = s.quick();
        }
        if let Some(v) = &self.functions {
            s.functions = v.clone();
        }
        if let Some(v) = &self.dims {
            s.dimensions = v.clone();
        }
        if let Some(v) = &self.instances {
            s.instances = v.clone();
        }
        if let Some(v) = self.runs {
            s.runs = v;
        }
        if let Some(v) = self.budget_mult {
            s.budget_multiplier = v;
        }
        if let Some(v) = self.phi {
            s.phi = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.jobs {
            s.jobs = Some(v);
        }
        if let Some(v) = &self.out {
            s.out = v.clone();
        }
        if let Some(m) = self.warmstart_mode {
            s.warm_start.mode = m;
        }
        if self.no_early_switch {
            s.early_switch = false;
        }
        s.validate()?;
        Ok(s)
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Bench { common, algorithms } => {
            let mut spec = common.spec()?;
            if let Some(a) = algorithms {
                spec.algorithms = a;
            }
            cmd_bench(&spec)
        }
        Command::Analyze { logs, phi, out } => {
            let out = out.unwrap_or_else(|| logs.join("analysis"));
            cmd_analyze(&logs, phi.unwrap_or(1e-8), &out)
        }
        Command::Switch { common, plans, from_analysis } => {
            let spec = common.spec()?;
            let jobs = match from_analysis {
                Some(dir) => jobs_from_analysis(&dir, &spec)?,
                None => {
                    let tau = match common.tau.as_deref() {
                        Some([t]) => *t,
                        _ => return Err(Error::Usage("explicit plans need exactly one --tau".into())),
                    };
                    let mut jobs = Vec::new();
                    for p in &plans {
                        let (a1, a2) = parse_pair(p)?;
                        for &f in &spec.functions {
                            for &d in &spec.dimensions {
                                jobs.push(SwitchJob { plan: make_plan(&spec, a1, a2, tau), function_id: f, dimension: d, reference: None });
                            }
                        }
                    }
                    jobs
                }
            };
            cmd_switch(&spec, &jobs)
        }
        Command::SweepTau { common, plan } => {
            let spec = common.spec()?;
            let (a1, a2) = parse_pair(&plan)?;
            match (spec.functions.as_slice(), spec.dimensions.as_slice()) {
                ([f], [d]) => cmd_sweep_tau(&spec, a1, a2, *f, *d, common.tau.clone()),
                _ => Err(Error::Usage("sweep-tau needs exactly one --functions and one --dims value".into())),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            if o.failures > 0 {
                eprintln!("{} cells failed; see failures.tsv", o.failures);
            }
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
