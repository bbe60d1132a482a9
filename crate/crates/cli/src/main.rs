//! `trwgp`: generate models, compute tree weights, run solvers and check
//! inputs from the command line.
//!
//! Exit codes: 0 success or convergence, 1 invalid input, 2 iteration cap
//! (or a non-settling message-passing run), 3 exact-inference size guard.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trw_core::baselines::{
    exact_log_partition, exact_marginals, run_trw_mp, solve_gradient_descent, GdConfig, MpConfig,
};
use trw_core::dual::{consistency_check, primal_objective};
use trw_core::math::fmt17;
use trw_core::spanning::{enumerate_directed_trees, probs_from_trees, validate_probs};
use trw_core::{
    gen_ising_grid, solve, uniform_tree_probs, EdgeProbabilities, EntropyForm, Error, GpConfig,
    IsingSpec, PairwiseMrf, PrimalMarginals, SolveStatus, SolveTrace,
};

/// Largest graph for the enumeration cross-check in `check`.
const CHECK_ENUMERATION_NODES: usize = 8;

#[derive(Parser)]
#[command(name = "trwgp", version, about = "Tree-reweighted inference on pairwise MRFs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random ±1 Ising grid model.
    GenIsing {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        /// Fields are drawn from [-alpha-f, alpha-f].
        #[arg(long = "alpha-f")]
        alpha_field: f64,
        /// Couplings are drawn from [-alpha-i, alpha-i].
        #[arg(long = "alpha-i")]
        alpha_inter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write root and directed-edge probabilities of the uniform
    /// distribution over directed spanning trees.
    TreeWeights {
        model: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a solver and write its trace and final marginals.
    Solve(SolveArgs),
    /// Print the exact log partition function and marginals.
    Exact { model: PathBuf },
    /// Validate a model and its edge probabilities.
    Check {
        model: PathBuf,
        /// Defaults to the uniform spanning-tree probabilities.
        #[arg(long)]
        rho: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    TrwGp,
    TrwMp,
    Grad,
}

#[derive(Clone, Copy, ValueEnum)]
enum EntropyFlag {
    /// Root entropies plus conditional entropies of both orientations.
    Eq6,
    /// Singleton entropies minus edge mutual informations.
    Eq2,
}

impl From<EntropyFlag> for EntropyForm {
    fn from(f: EntropyFlag) -> Self {
        match f {
            EntropyFlag::Eq6 => EntropyForm::Conditional,
            EntropyFlag::Eq2 => EntropyForm::MutualInfo,
        }
    }
}

#[derive(clap::Args)]
struct SolveArgs {
    model: PathBuf,
    /// Defaults to the uniform spanning-tree probabilities.
    #[arg(long)]
    rho: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Algorithm::TrwGp)]
    alg: Algorithm,
    /// Residual (trw-gp), gradient max-norm (grad) or max log-message
    /// change (trw-mp) at which to stop. Defaults per algorithm.
    #[arg(long)]
    tol: Option<f64>,
    /// Sweep cap; iterations for grad.
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 0.5)]
    eps_factor: f64,
    /// Weight of the old log-message in trw-mp.
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Undamped trw-mp runs still changing by more than 1e-3 at this sweep
    /// stop as non-settling; 0 disables the check.
    #[arg(long, default_value_t = 500)]
    settle_window: usize,
    #[arg(long, value_enum, default_value_t = EntropyFlag::Eq6)]
    entropy: EntropyFlag,
    /// Sweeps between primal-objective evaluations; 0 disables them.
    #[arg(long, default_value_t = 1)]
    primal_every: usize,
    /// Keep only per-sweep rows in the trw-gp trace.
    #[arg(long)]
    sweeps_only: bool,
    /// Trace CSV output.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Final marginals output.
    #[arg(long)]
    marginals: Option<PathBuf>,
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::SizeGuard(_)) { 3 } else { 1 };
        Failure { code, msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure { code: 1, msg: msg.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<PairwiseMrf, Failure> {
    PairwiseMrf::from_text(&read(path)?)
        .map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn load_probs(path: Option<&Path>, mrf: &PairwiseMrf) -> Result<EdgeProbabilities, Failure> {
    match path {
        Some(p) => EdgeProbabilities::from_text(&read(p)?, &mrf.graph)
            .map_err(|e| input_error(format!("{}: {e}", p.display()))),
        None => Ok(uniform_tree_probs(&mrf.graph)?),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn marginals_text(m: &PrimalMarginals, mrf: &PairwiseMrf) -> String {
    let mut out = String::from("TRWMARG 1\n");
    for (i, t) in m.mu_node.iter().enumerate() {
        let _ = writeln!(out, "node {i} {}", join(t));
    }
    for (d, t) in m.mu_cond.iter().enumerate() {
        let (p, c) = mrf.graph.directed_edge(d);
        let _ = writeln!(out, "cond {p} {c} {}", join(t));
    }
    out
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt17(v)).collect::<Vec<_>>().join(" ")
}

fn opt17(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_else(|| "-".into())
}

fn cmd_gen_ising(spec: IsingSpec, output: &Path) -> Result<u8, Failure> {
    let mrf = gen_ising_grid(&spec)?;
    write_file(output, &mrf.to_text())?;
    Ok(0)
}

fn cmd_tree_weights(model: &Path, output: &Path) -> Result<u8, Failure> {
    let mrf = load_model(model)?;
    let ep = uniform_tree_probs(&mrf.graph)?;
    let report = validate_probs(&ep, &mrf.graph, true);
    if !report.is_empty() {
        return Err(input_error(format!("computed probabilities failed validation:\n{report}")));
    }
    write_file(output, &ep.to_text(&mrf.graph))?;
    Ok(0)
}

struct Outcome {
    status: SolveStatus,
    dual: Option<f64>,
    primal: Option<f64>,
    residual: f64,
    sweeps: usize,
    marginals: PrimalMarginals,
    trace: SolveTrace,
}

fn cmd_solve(args: &SolveArgs) -> Result<u8, Failure> {
    let mrf = load_model(&args.model)?;
    let ep = load_probs(args.rho.as_deref(), &mrf)?;
    let form = EntropyForm::from(args.entropy);
    let outcome = match args.alg {
        Algorithm::TrwGp => {
            let cfg = GpConfig {
                eps_factor: args.eps_factor,
                tol: args.tol.unwrap_or(GpConfig::default().tol),
                max_sweeps: args.max_sweeps,
                primal_eval_every: args.primal_every,
                record_updates: !args.sweeps_only,
                entropy_form: form,
                ..GpConfig::default()
            };
            let sol = solve(&mrf, &ep, &cfg)?;
            Outcome {
                status: sol.trace.status,
                dual: Some(sol.dual_objective()),
                primal: Some(primal_objective(&sol.marginals, &ep, &mrf, form)?),
                residual: sol.trace.final_residual,
                sweeps: sol.trace.sweeps,
                marginals: sol.marginals,
                trace: sol.trace,
            }
        }
        Algorithm::TrwMp => {
            let cfg = MpConfig {
                damping: args.damping,
                tol: args.tol.unwrap_or(MpConfig::default().tol),
                max_sweeps: args.max_sweeps,
                settle_window: (args.damping == 0.0 && args.settle_window > 0)
                    .then_some(args.settle_window),
                primal_eval_every: args.primal_every,
                entropy_form: form,
                ..MpConfig::default()
            };
            let sol = run_trw_mp(&mrf, &ep, &cfg)?;
            Outcome {
                status: sol.trace.status,
                dual: None,
                primal: Some(sol.primal_objective(&mrf, &ep, form)?),
                residual: sol.trace.final_residual,
                sweeps: sol.trace.sweeps,
                marginals: sol.marginals,
                trace: sol.trace,
            }
        }
        Algorithm::Grad => {
            let cfg = GdConfig {
                tol: args.tol.unwrap_or(GdConfig::default().tol),
                max_iters: args.max_sweeps,
                ..GdConfig::default()
            };
            let sol = solve_gradient_descent(&mrf, &ep, &cfg)?;
            let marginals = sol.state.to_primal();
            Outcome {
                status: sol.trace.status,
                dual: Some(sol.state.dual_objective()),
                primal: Some(primal_objective(&marginals, &ep, &mrf, form)?),
                residual: sol.trace.final_residual,
                sweeps: sol.trace.sweeps,
                marginals,
                trace: sol.trace,
            }
        }
    };

    if let Some(path) = &args.trace {
        let file = fs::File::create(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        outcome.trace.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &args.marginals {
        write_file(path, &marginals_text(&outcome.marginals, &mrf))?;
    }
    println!(
        "status {} dual {} primal {} residual {} sweeps {}",
        outcome.status,
        opt17(outcome.dual),
        opt17(outcome.primal),
        fmt17(outcome.residual),
        outcome.sweeps
    );
    Ok(if outcome.status == SolveStatus::Converged { 0 } else { 2 })
}

fn cmd_exact(model: &Path) -> Result<u8, Failure> {
    let mrf = load_model(model)?;
    let log_z = exact_log_partition(&mrf)?;
    let m = exact_marginals(&mrf)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "logZ {}", fmt17(log_z))?;
    for (i, t) in m.mu_node.iter().enumerate() {
        writeln!(out, "node {i} {}", join(t))?;
    }
    for e in 0..mrf.num_edges() {
        let (u, v) = mrf.graph.edge(e);
        writeln!(out, "pair {u} {v} {}", join(&m.joint_copy(&mrf.graph, 2 * e)))?;
    }
    writeln!(out, "consistency {}", fmt17(consistency_check(&m, &mrf.graph)))?;
    out.flush()?;
    Ok(0)
}

fn cmd_check(model: &Path, rho: Option<&Path>) -> Result<u8, Failure> {
    let mrf = load_model(model)?;
    let mut ok = true;
    let model_report = mrf.validate();
    if model_report.is_empty() {
        println!("model: ok");
    } else {
        ok = false;
        print!("model:\n{model_report}");
    }
    let ep = load_probs(rho, &mrf)?;
    let probs_report = validate_probs(&ep, &mrf.graph, true);
    if probs_report.is_empty() {
        println!("rho: ok");
    } else {
        ok = false;
        print!("rho:\n{probs_report}");
    }
    let g = &mrf.graph;
    if g.num_nodes() <= CHECK_ENUMERATION_NODES {
        let matrix_tree = uniform_tree_probs(g)?;
        let trees = enumerate_directed_trees(g)?;
        let w = 1.0 / trees.len() as f64;
        let weighted: Vec<_> = trees.into_iter().map(|t| (t, w)).collect();
        let enumerated = probs_from_trees(g, &weighted)?;
        let gap = matrix_tree
            .rho_root
            .iter()
            .zip(&enumerated.rho_root)
            .chain(matrix_tree.rho_dir.iter().zip(&enumerated.rho_dir))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap < 1e-10 {
            println!("enumeration: ok ({} trees, max gap {})", weighted.len(), fmt17(gap));
        } else {
            ok = false;
            println!("enumeration: matrix-tree and enumeration differ by {}", fmt17(gap));
        }
    } else {
        println!("enumeration: skipped ({} nodes)", g.num_nodes());
    }
    Ok(if ok { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::GenIsing { rows, cols, alpha_field, alpha_inter, seed, output } => {
            cmd_gen_ising(IsingSpec { rows, cols, alpha_field, alpha_inter, seed }, &output)
        }
        Command::TreeWeights { model, output } => cmd_tree_weights(&model, &output),
        Command::Solve(args) => cmd_solve(&args),
        Command::Exact { model } => cmd_exact(&model),
        Command::Check { model, rho } => cmd_check(&model, rho.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
