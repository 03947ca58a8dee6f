//! Command-line interface.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bcd_core::bound::{generalization_gap_bound, verify_norm_premise, BoundInputs, GapBound, LogFactor};
use bcd_core::matrix::{norm_sq, operator_norm};
use bcd_core::network::{mean_squared_error, TrainingData};

use crate::checkpoint::{read_checkpoint, Checkpoint};
use crate::config::{ConfigOverrides, RunConfig, ScheduleSource};
use crate::data::{check_full_rank, gen_teacher_split, read_dataset, write_dataset, Dataset, TeacherConfig};
use crate::error::{exit, CliError, Result};
use crate::gradcheck::run_grad_check;
use crate::run::{initial_state, load_data, pick_schedule, run_train, schedule_lines};
use crate::suite::{run_suite, Suite};

pub const DEFAULT_OUT_DIR: &str = "out";
pub const BOUND_FILE: &str = "bound.txt";
pub const SCHEDULE_FILE: &str = "schedule.toml";
pub const GRAD_CHECK_FILE: &str = "grad_check.txt";

#[derive(Debug, Parser)]
#[command(name = "bcd", version, about = "Layer-wise block coordinate descent experiments")]
pub struct Cli {
    /// Seed for weight initialization (and the teacher in `gen-data`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory every output file is written to.
    #[arg(long, global = true, default_value = DEFAULT_OUT_DIR)]
    pub out_dir: PathBuf,
    /// Worker threads. Training is single-threaded, so this only has to be at least 1.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a teacher–student dataset.
    GenData(GenDataArgs),
    /// Train a network and write trace.csv, model.ckpt and summary.txt.
    Train(ConfigOverrides),
    /// Print the schedule a `train` run with the same config would use.
    Schedule(ConfigOverrides),
    /// Evaluate the generalization-gap bound for a checkpoint.
    Bound(BoundArgs),
    /// Compare every analytic gradient with central finite differences.
    GradCheck(GradCheckArgs),
    /// Run a pinned acceptance experiment.
    Suite(SuiteArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d_in: usize,
    #[arg(long)]
    pub teacher_hidden: usize,
    #[arg(long, default_value = "leaky_relu:0.5")]
    pub activation: String,
    #[arg(long, default_value_t = 1.0)]
    pub teacher_scale: f64,
    /// Training set path; relative paths are taken under --out-dir.
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
    /// Size of an extra test draw from the same teacher.
    #[arg(long, default_value_t = 0)]
    pub test_n: usize,
    #[arg(long, default_value = "test.csv")]
    pub test_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training set the checkpoint was fit on.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Fresh test set for the empirical gap.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Use the printed `ln(1/sqrt n)` factor, which makes the bound negative.
    #[arg(long)]
    pub printed_log: bool,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    /// tiny-convergence, fig2, fig3, deep-depths, lemma62-mc or all.
    pub name: String,
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::Train(o) => train(cli, o),
        Command::Schedule(o) => schedule(cli, o),
        Command::Bound(a) => bound(cli, a),
        Command::GradCheck(a) => grad_check(cli, a),
        Command::Suite(a) => suite(cli, a),
    }
}

fn under(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out_dir.join(p)
    }
}

/// The config file (or defaults), then flag overrides, then `--seed`.
pub fn resolve_config(cli: &Cli, overrides: &ConfigOverrides) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    overrides.apply(&mut cfg);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> Result<i32> {
    let activation = a.activation.parse().map_err(|e| CliError::Config(format!("activation: {e}")))?;
    if a.n == 0 || a.d_in == 0 || a.teacher_hidden == 0 {
        return Err(CliError::Config("--n, --d-in and --teacher-hidden must be at least 1".into()));
    }
    let cfg = TeacherConfig {
        scale: a.teacher_scale,
        ..TeacherConfig::new(a.d_in, a.teacher_hidden, activation, cli.seed.unwrap_or(1))
    };
    let (train, test) = gen_teacher_split(a.n, a.test_n, cfg)?;
    let out = under(&cli.out_dir, &a.out);
    write_dataset(&out, &train)?;
    let (full, smallest) = check_full_rank(&train.x)?;
    println!("wrote {} ({} x {})", out.display(), train.n(), train.d_in());
    println!("full_row_rank = {full}");
    println!("sigma_min = {smallest:e}");
    if let Some(t) = test {
        let path = under(&cli.out_dir, &a.test_out);
        write_dataset(&path, &t)?;
        println!("wrote {} ({} x {})", path.display(), t.n(), t.d_in());
    }
    Ok(exit::OK)
}

fn train(cli: &Cli, o: &ConfigOverrides) -> Result<i32> {
    let cfg = resolve_config(cli, o)?;
    let (_, files) = run_train(&cfg, &cli.out_dir)?;
    print!("{}", fs::read_to_string(&files.summary).map_err(|e| CliError::io(&files.summary, e))?);
    eprintln!("wrote {}, {}, {}", files.trace.display(), files.checkpoint.display(), files.summary.display());
    Ok(exit::OK)
}

fn schedule(cli: &Cli, o: &ConfigOverrides) -> Result<i32> {
    let cfg = resolve_config(cli, o)?;
    let (train, _) = load_data(&cfg)?;
    let data = TrainingData::new(&train.x, &train.y)?;
    let (state, _, _) = initial_state(&cfg, &data)?;
    let (s, report) = pick_schedule(&cfg, &state, &train)?;

    let mut out = String::new();
    for line in schedule_lines(&s).lines() {
        let _ = writeln!(out, "{}", line.replacen(" = ", "=", 1));
    }
    if let Some(r) = &report {
        let _ = writeln!(out, "c_k={:e}", r.c_k);
        let _ = writeln!(out, "c_v={:e}", r.c_v);
        if let Some(cap) = r.eta_v_printed_cap {
            let _ = writeln!(out, "eta_v_printed_cap={cap:e}");
        }
    }
    let fragment = format!("schedule = \"{}\"\n{}", ScheduleSource::Explicit, schedule_lines(&s));
    let path = cli.out_dir.join(SCHEDULE_FILE);
    fs::write(&path, &fragment).map_err(|e| CliError::io(&path, e))?;
    print!("{out}");
    println!();
    println!("# config fragment ({})", path.display());
    print!("{fragment}");
    Ok(exit::OK)
}

/// Largest `‖x_i‖` and `|y_i|` over the given datasets.
pub fn empirical_bounds<'a>(sets: impl IntoIterator<Item = &'a Dataset>) -> (f64, f64) {
    let mut b_x = 0.0f64;
    let mut b_y = 0.0f64;
    for d in sets {
        for row in d.x.iter_rows() {
            b_x = b_x.max(norm_sq(row).sqrt());
        }
        for y in &d.y {
            b_y = b_y.max(y.abs());
        }
    }
    (b_x, b_y)
}

/// Everything the `bound` subcommand reports.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub bound: GapBound,
    pub premise: bool,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

impl BoundReport {
    pub fn empirical_gap(&self) -> Option<f64> {
        self.test_mse.map(|t| t - self.train_mse)
    }
}

/// Evaluates the gap bound for trained weights. `B_X` and `B_Y` are the
/// largest `‖x_i‖` and `|y_i|` seen in the training and test sets.
pub fn evaluate_bound(
    ckpt: &Checkpoint,
    train: &Dataset,
    test: Option<&Dataset>,
    delta: f64,
    log: LogFactor,
) -> Result<BoundReport> {
    for (name, d) in std::iter::once(("dataset", train)).chain(test.map(|t| ("test", t))) {
        if d.d_in() != ckpt.d_in {
            return Err(CliError::Config(format!(
                "{name} has d_in = {}, the checkpoint expects {}",
                d.d_in(),
                ckpt.d_in
            )));
        }
    }
    let (b_x, b_y) = empirical_bounds(std::iter::once(train).chain(test));
    let inputs = BoundInputs {
        x_norm: operator_norm(&train.x)?,
        n: train.n(),
        r: ckpt.r,
        layers: ckpt.layers(),
        d_in: ckpt.d_in,
        b_x,
        b_y,
        ell: ckpt.activation.ell(),
        delta,
    };
    let mse = |d: &Dataset| mean_squared_error(&ckpt.weights, &d.x, &d.y, ckpt.activation, ckpt.skip);
    Ok(BoundReport {
        bound: generalization_gap_bound(&inputs, log)?,
        inputs,
        premise: verify_norm_premise(&ckpt.weights)?,
        train_mse: mse(train),
        test_mse: test.map(mse),
    })
}

fn bound(cli: &Cli, a: &BoundArgs) -> Result<i32> {
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let train = read_dataset(&a.dataset)?;
    let test = a.test.as_deref().map(read_dataset).transpose()?;
    let log = if a.printed_log { LogFactor::Printed } else { LogFactor::SqrtN };
    let rep = evaluate_bound(&ckpt, &train, test.as_ref(), a.delta, log)?;
    let b = &rep.bound;

    let mut out = String::new();
    let _ = writeln!(out, "n = {}", rep.inputs.n);
    let _ = writeln!(out, "x_norm = {:e}", rep.inputs.x_norm);
    let _ = writeln!(out, "b_x = {:e}", rep.inputs.b_x);
    let _ = writeln!(out, "b_y = {:e}", rep.inputs.b_y);
    let _ = writeln!(out, "log_factor = \"{}\"", if a.printed_log { "printed" } else { "sqrt_n" });
    let _ = writeln!(out, "m = {:e}", b.m);
    let _ = writeln!(out, "r_f = {:e}", b.r_f);
    let _ = writeln!(out, "rademacher = {:e}", b.rademacher);
    let _ = writeln!(out, "gap_bound = {:e}", b.gap);
    let _ = writeln!(out, "delta = {:e}", b.delta);
    let _ = writeln!(out, "train_mse = {:e}", rep.train_mse);
    if let (Some(t), Some(gap)) = (rep.test_mse, rep.empirical_gap()) {
        let _ = writeln!(out, "test_mse = {t:e}");
        let _ = writeln!(out, "empirical_gap = {gap:e}");
        let _ = writeln!(out, "gap_within_bound = {}", gap <= b.gap);
    }
    let _ = writeln!(out, "norm_premise = {}", rep.premise);
    if ckpt.skip {
        let _ = writeln!(out, "# the bound is stated for networks without skip connections");
    }
    let path = cli.out_dir.join(BOUND_FILE);
    fs::write(&path, &out).map_err(|e| CliError::io(&path, e))?;
    print!("{out}");
    Ok(exit::OK)
}

fn grad_check(cli: &Cli, a: &GradCheckArgs) -> Result<i32> {
    if a.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let report = run_grad_check(cli.seed.unwrap_or(0), a.trials);
    let text = format!("{report}\n");
    let path = cli.out_dir.join(GRAD_CHECK_FILE);
    fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
    print!("{text}");
    Ok(if report.passed() { exit::OK } else { exit::CRITERION })
}

fn suite(cli: &Cli, a: &SuiteArgs) -> Result<i32> {
    let suites: Vec<Suite> =
        if a.name == "all" { Suite::ALL.to_vec() } else { vec![a.name.parse().map_err(CliError::Config)?] };
    let mut all_passed = true;
    for s in suites {
        let report = run_suite(s, &cli.out_dir)?;
        println!("{report}");
        all_passed &= report.passed();
    }
    Ok(if all_passed { exit::OK } else { exit::CRITERION })
}
