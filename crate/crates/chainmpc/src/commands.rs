//! Subcommands. Each reads its inputs, runs one pipeline stage and writes
//! one artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chainmpc_core::dist::{flop_report, total_flops, FlopCounter};
use chainmpc_core::instances::{random_instance, InstanceParams};
use chainmpc_core::ipm::{mehrotra_solve_with, residuals, CentralizedKkt, IpmOptions, KktSolver, NewtonRhs};
use chainmpc_core::linalg::Vector;
use chainmpc_core::model::{random_chain, ChainSystem, RandomChainParams};
use chainmpc_core::mpcloop::{simulate_closed_loop_with, Controller, TraceStatus};
use chainmpc_core::oracle::solve_dense_qp;
use chainmpc_core::qpstruct::build_structured_qp;
use chainmpc_core::sets::{build_terminal_sets, TerminalSets};
use chainmpc_core::synthesis::{synthesize, SynthesisOptions, TerminalDesign};
use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::formats::{
    flop_report_csv, message_log_csv, parse_state, read_json, trace_csv, write_atomic, write_json, DesignFile,
    PlantFile, SdpVarsFile, SetsFile, SolutionFile,
};
use crate::runner::ThreadedKkt;

#[derive(Debug, Parser)]
#[command(name = "chainmpc", version, about = "Distributed MPC for leader-follower chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random plant description.
    Generate(GenerateArgs),
    /// Compute terminal gains and penalties.
    Synth(SynthArgs),
    /// Compute terminal sets for a design.
    Sets(SetsArgs),
    /// Solve one finite-horizon problem.
    Solve(SolveArgs),
    /// Run the closed loop and write a trace.
    Simulate(SimulateArgs),
    /// Flop, message and runtime sweep over chain lengths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub subsystems: usize,
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    #[arg(long, default_value_t = 1)]
    pub inputs: usize,
    /// Spectral radius of each `A^i`.
    #[arg(long, default_value_t = 0.9)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.3)]
    pub coupling: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub plant: PathBuf,
    /// Recover the design from LMI variables computed elsewhere.
    #[arg(long)]
    pub sdp_vars: Option<PathBuf>,
    /// Skip the LMI program in the fallback pipeline.
    #[arg(long)]
    pub no_sdp: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SetsArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub plant: PathBuf,
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub sets: PathBuf,
    /// Stacked initial state, comma-separated, leader first.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: String,
    /// Prediction horizon.
    #[arg(short = 'N', long = "horizon")]
    pub horizon: usize,
    /// Relative termination tolerance of the interior-point method.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Run every Newton solve on per-subsystem threads.
    #[arg(long)]
    pub distributed: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Also solve with the dense active-set oracle and print the deviation.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Closed-loop steps.
    #[arg(short = 'T', long = "steps")]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: u64,
    /// Chain lengths, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    pub subsystems: Vec<usize>,
    #[arg(short = 'N', long = "horizon", default_value_t = 10)]
    pub horizon: usize,
    #[arg(long, default_value_t = 2)]
    pub states: usize,
    #[arg(long, default_value_t = 2)]
    pub inputs: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Directory for per-length message logs and flop reports.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Sets(a) => cmd_sets(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn load_chain(path: &Path) -> CliResult<ChainSystem> {
    read_json::<PlantFile>(path)?.to_chain()
}

fn load_design(path: &Path, chain: &ChainSystem) -> CliResult<TerminalDesign> {
    read_json::<DesignFile>(path)?.to_design(chain)
}

fn load_sets(path: &Path, chain: &ChainSystem, design: &TerminalDesign) -> CliResult<TerminalSets> {
    read_json::<SetsFile>(path)?.to_sets(chain, design)
}

fn options(tol: f64) -> CliResult<IpmOptions> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Usage(format!("--tol must be positive, got {tol}")));
    }
    Ok(IpmOptions {
        tol,
        ..IpmOptions::default()
    })
}

fn backend(distributed: bool) -> Box<dyn KktSolver> {
    if distributed {
        Box::new(ThreadedKkt::default())
    } else {
        Box::new(CentralizedKkt::new())
    }
}

pub fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    if a.subsystems == 0 || a.states == 0 || a.inputs == 0 {
        return Err(CliError::Usage("dimensions must be positive".into()));
    }
    let params = RandomChainParams::uniform(a.subsystems, a.states, a.inputs, a.margin, a.coupling);
    let chain = random_chain(a.seed, &params)?;
    write_json(&a.out, &PlantFile::from_chain(&chain))
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let chain = load_chain(&a.plant)?;
    let design = match &a.sdp_vars {
        Some(p) => read_json::<SdpVarsFile>(p)?.to_design(&chain)?,
        None => synthesize(
            &chain,
            &SynthesisOptions {
                try_sdp: !a.no_sdp,
                ..SynthesisOptions::default()
            },
        )?,
    };
    write_json(&a.out, &DesignFile::from_design(&design))?;
    println!(
        "design: method {:?}, lambda_max(W) = {:e}, certified = {}",
        design.method, design.lambda_max_w, design.certified
    );
    if !design.certified {
        eprintln!("warning: the design is not certified; stability guarantees do not apply");
    }
    Ok(())
}

pub fn cmd_sets(a: &SetsArgs) -> CliResult<()> {
    let chain = load_chain(&a.plant)?;
    let design = load_design(&a.design, &chain)?;
    let sets = build_terminal_sets(&chain, &design)?;
    write_json(&a.out, &SetsFile::from_sets(&sets))?;
    println!("terminal sets: alpha = {}, certified = {:?}", sets.alpha, sets.certified);
    if !sets.all_certified() {
        eprintln!("warning: some terminal sets failed their vertex checks");
    }
    Ok(())
}

struct Problem {
    chain: ChainSystem,
    design: TerminalDesign,
    sets: TerminalSets,
    x0: Vec<Vector>,
}

fn load_problem(p: &ProblemArgs) -> CliResult<Problem> {
    if p.horizon == 0 {
        return Err(CliError::Usage("-N must be at least 1".into()));
    }
    let chain = load_chain(&p.plant)?;
    let design = load_design(&p.design, &chain)?;
    let sets = load_sets(&p.sets, &chain, &design)?;
    let x0 = parse_state(&p.x0, &chain)?;
    Ok(Problem { chain, design, sets, x0 })
}

pub fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let pr = load_problem(&a.problem)?;
    let opts = options(a.problem.tol)?;
    let qp = build_structured_qp(&pr.chain, &pr.design, &pr.sets, &pr.x0, a.problem.horizon)?;
    let mut kkt = backend(a.problem.distributed);
    let sol = mehrotra_solve_with(&qp, &opts, kkt.as_mut(), &mut |_| {})?;
    let status = if sol.converged() { "converged" } else { "not_converged" };
    let mut file = SolutionFile::new(&qp, &sol.iterate, status, sol.iterations);
    if a.oracle {
        let oracle = solve_dense_qp(&qp.densify())?;
        let dev = (&sol.iterate.z - &oracle.z).amax();
        file.oracle_max_deviation = Some(dev);
        println!("oracle max deviation: {dev:e}");
    }
    write_json(&a.out, &file)?;
    println!("status {status}, iterations {}, cost {:e}", sol.iterations, file.cost);
    if !sol.converged() {
        return Err(CliError::Solver(format!(
            "no convergence in {} iterations (x0 may be outside the feasible region)",
            sol.iterations
        )));
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> CliResult<()> {
    let pr = load_problem(&a.problem)?;
    let ctrl = Controller {
        chain: &pr.chain,
        design: &pr.design,
        terminal: &pr.sets,
        horizon: a.problem.horizon,
        options: options(a.problem.tol)?,
    };
    let mut kkt = backend(a.problem.distributed);
    let trace = simulate_closed_loop_with(&ctrl, &pr.x0, a.steps, kkt.as_mut())?;
    write_atomic(&a.out, &trace_csv(&trace)?)?;
    let worst = trace.decrease_margins(&pr.chain).into_iter().fold(f64::NEG_INFINITY, f64::max);
    println!("{} rows, max decrease margin {worst:e}", trace.len());
    match trace.status {
        TraceStatus::Completed => Ok(()),
        TraceStatus::SolverFailed { step } => Err(CliError::Solver(format!(
            "solve failed at t = {step}; partial trace written"
        ))),
    }
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    if a.subsystems.is_empty() || a.subsystems.contains(&0) || a.horizon == 0 {
        return Err(CliError::Usage("chain lengths and -N must be positive".into()));
    }
    let opts = options(a.tol)?;
    if let Some(dir) = &a.log_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut rows = Vec::new();
    for &m in &a.subsystems {
        let params = InstanceParams {
            chain: RandomChainParams::uniform(m, a.states, a.inputs, 0.9, 0.3),
            horizon: a.horizon,
            fill: 0.9,
        };
        let qp = random_instance(a.seed, &params)?.qp()?;

        // One factorization and solve at the starting point, for counts.
        let ones = Vector::from_element(qp.num_ineq(), 1.0);
        let mut probe = ThreadedKkt::default();
        probe.factor(&qp, &ones, &ones)?;
        let flops: FlopCounter = total_flops(probe.agents());
        let it = chainmpc_core::ipm::IpmIterate {
            z: Vector::zeros(qp.num_vars()),
            nu: Vector::zeros(qp.num_eq()),
            lambda: ones.clone(),
            s: ones.clone(),
            mu: 1.0,
        };
        let r = residuals(&qp, &it);
        let rhs = NewtonRhs {
            r_z: r.r_z,
            r_nu: r.r_nu,
            r_lambda: r.r_lambda,
            r_s: ones.clone(),
        };
        probe.solve(&qp, &ones, &ones, &rhs)?;
        if let Some(dir) = &a.log_dir {
            let mut log = probe.factor_log.clone();
            log.extend(&probe.solve_log);
            write_atomic(&dir.join(format!("messages_M{m}.csv")), &message_log_csv(&log)?)?;
            write_atomic(
                &dir.join(format!("flops_M{m}.csv")),
                &flop_report_csv(&flop_report(&flops, &qp.layout))?,
            )?;
        }

        let mut kkt = ThreadedKkt::default();
        let start = Instant::now();
        let sol = mehrotra_solve_with(&qp, &opts, &mut kkt, &mut |_| {})?;
        let seconds = start.elapsed().as_secs_f64();
        rows.push(vec![
            m.to_string(),
            a.horizon.to_string(),
            flops.total().to_string(),
            probe.factor_log.block_messages().to_string(),
            probe.solve_log.vector_messages().to_string(),
            (probe.factor_log.non_neighbor_messages() + kkt.factor_log.non_neighbor_messages()).to_string(),
            sol.iterations.to_string(),
            sol.converged().to_string(),
            format!("{seconds:e}"),
        ]);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "M",
        "N",
        "factor_flops",
        "block_messages",
        "vector_messages",
        "non_neighbor_messages",
        "ipm_iterations",
        "converged",
        "ipm_seconds",
    ])?;
    for r in &rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&a.out, &bytes)?;
    println!("{} rows written to {}", rows.len(), a.out.display());
    Ok(())
}
