//! The `train` pipeline: data, initialization, schedule, training, outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bcd_core::bound::verify_norm_premise;
use bcd_core::network::{mean_squared_error, TrainingData};
use bcd_core::schedule::{derive_monotone, derive_relu, measure_stats, ScheduleReport};
use bcd_core::{monotone, relu, Activation, LossTrace, NetworkShape, NetworkState, TraceObserver, TrainSchedule};

use crate::checkpoint::{write_checkpoint, Checkpoint};
use crate::config::{RunConfig, ScheduleSource};
use crate::data::{gen_teacher_split, read_dataset, Dataset, TeacherConfig};
use crate::error::{CliError, Result};
use crate::tracefile::{Algo, TraceWriter};

pub const TRACE_FILE: &str = "trace.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Training data and the optional test set named by the config.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Option<Dataset>)> {
    let (train, generated_test) = match &cfg.dataset {
        Some(path) => (read_dataset(path)?, None),
        None => {
            let teacher = TeacherConfig {
                d_in: cfg.d_in,
                hidden: cfg.teacher_hidden(),
                activation: cfg.activation()?,
                scale: cfg.teacher_scale,
                seed: cfg.data_seed,
            };
            gen_teacher_split(cfg.n, cfg.test_n, teacher)?
        }
    };
    let test = match &cfg.test_dataset {
        Some(path) => Some(read_dataset(path)?),
        None => generated_test,
    };
    if let Some(t) = &test {
        if t.d_in() != train.d_in() {
            return Err(CliError::Config(format!(
                "test set has d_in = {}, training set has {}",
                t.d_in(),
                train.d_in()
            )));
        }
    }
    Ok((train, test))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub algo: Algo,
    pub activation: Activation,
    pub state: NetworkState,
    pub trace: LossTrace,
    pub schedule: TrainSchedule,
    /// Present when the schedule was derived from a theorem.
    pub report: Option<ScheduleReport>,
    pub seed_used: u64,
    pub redraws: usize,
    pub wall: Duration,
    /// Every `‖W_j‖_op ≤ 2`, the premise of the generalization bound.
    pub norm_premise: bool,
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

impl RunOutcome {
    pub fn final_losses(&self) -> &bcd_core::LossBreakdown {
        self.trace.last().expect("trace records iteration 0")
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let s = self.state.shape();
        Checkpoint {
            d_in: s.d_in,
            r: s.r,
            activation: self.activation,
            skip: self.algo.skip(),
            weights: self.state.weights().to_vec(),
        }
    }
}

/// The initialized network, the seed that produced it and the number of
/// redraws the relu initialization needed.
pub fn initial_state(cfg: &RunConfig, data: &TrainingData<'_>) -> Result<(NetworkState, u64, usize)> {
    cfg.validate()?;
    let act = cfg.activation()?;
    let (n, d_in) = data.x.shape();
    let shape = if cfg.strict_rank {
        // Reports n > d_in as a rank refusal with the measured singular values.
        data.require_full_row_rank()?;
        NetworkShape::new_strict(d_in, cfg.width, cfg.layers, n)?
    } else {
        NetworkShape::new(d_in, cfg.width, cfg.layers, n)?
    };
    // Initialization only reads the SVB bounds.
    let init_schedule = TrainSchedule {
        eta_v: 1.0,
        eta_w1: 1.0,
        eta_w2: 1.0,
        k_outer: 1,
        k_v: 1,
        k_w: 1,
        gamma: cfg.gamma,
        svb: cfg.svb_bounds(),
        scaling: cfg.step_scaling()?,
    };
    Ok(match cfg.mode {
        Algo::ReluSkip => {
            let init = relu::initialize_relu(data, &shape, &init_schedule, cfg.seed)?;
            (init.state, init.seed_used, init.redraws)
        }
        _ => (monotone::initialize(data, &shape, &init_schedule, act, cfg.seed)?, cfg.seed, 0),
    })
}

/// The explicit schedule, or the theorem schedule measured on `state` with
/// any explicit fields applied on top.
pub fn pick_schedule(
    cfg: &RunConfig,
    state: &NetworkState,
    train: &Dataset,
) -> Result<(TrainSchedule, Option<ScheduleReport>)> {
    if let Some(s) = cfg.explicit_schedule()? {
        return Ok((s, None));
    }
    let act = cfg.activation()?;
    let stats = measure_stats(state, &train.x, &train.y, act, cfg.gamma, cfg.epsilon)?;
    let report = match cfg.mode {
        Algo::Monotone => derive_monotone(&stats)?,
        Algo::ReluSkip => derive_relu(&stats)?,
        Algo::ReluNoskip => {
            return Err(CliError::Config(
                "no theorem schedule exists for relu_noskip; set schedule = \"explicit\"".into(),
            ))
        }
    };
    Ok((cfg.override_schedule(report.schedule)?, Some(report)))
}

/// Initializes, picks the schedule and trains; `observer` sees every outer
/// iteration including the initial one.
pub fn train_dataset(
    cfg: &RunConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    observer: &mut impl TraceObserver,
) -> Result<RunOutcome> {
    let act = cfg.activation()?;
    let data = TrainingData::new(&train.x, &train.y)?;
    let (mut state, seed_used, redraws) = initial_state(cfg, &data)?;
    let (schedule, report) = pick_schedule(cfg, &state, train)?;

    let start = Instant::now();
    let trace = match cfg.mode {
        Algo::ReluSkip => relu::run_relu(&mut state, &data, &schedule, observer)?,
        Algo::Monotone | Algo::ReluNoskip => monotone::run(&mut state, &data, &schedule, act, observer)?,
    };
    let wall = start.elapsed();

    let skip = cfg.mode.skip();
    let train_mse = mean_squared_error(state.weights(), &train.x, &train.y, act, skip);
    let test_mse = test.map(|t| mean_squared_error(state.weights(), &t.x, &t.y, act, skip));
    Ok(RunOutcome {
        algo: cfg.mode,
        activation: act,
        norm_premise: verify_norm_premise(state.weights())?,
        state,
        trace,
        schedule,
        report,
        seed_used,
        redraws,
        wall,
        train_mse,
        test_mse,
    })
}

/// Paths of the files a run writes under its output directory.
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub trace: PathBuf,
    pub checkpoint: PathBuf,
    pub summary: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self { trace: dir.join(TRACE_FILE), checkpoint: dir.join(CHECKPOINT_FILE), summary: dir.join(SUMMARY_FILE) }
    }
}

/// Full `train` subcommand: writes `trace.csv`, `model.ckpt` and
/// `summary.txt` under `out_dir`.
pub fn run_train(cfg: &RunConfig, out_dir: &Path) -> Result<(RunOutcome, RunFiles)> {
    run_train_observed(cfg, out_dir, &mut ())
}

/// [`run_train`] with a second observer alongside the trace writer.
pub fn run_train_observed(
    cfg: &RunConfig,
    out_dir: &Path,
    extra: &mut impl TraceObserver,
) -> Result<(RunOutcome, RunFiles)> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let files = RunFiles::in_dir(out_dir);
    let mut writer = TraceWriter::create(&files.trace, cfg.mode, cfg.layers, !cfg.deterministic)?;
    let mut both = |k: usize, state: &NetworkState, losses: &bcd_core::LossBreakdown| {
        writer.on_iteration(k, state, losses);
        extra.on_iteration(k, state, losses);
    };
    let outcome = train_dataset(cfg, &train, test.as_ref(), &mut both);
    writer.finish().map_err(|e| CliError::io(&files.trace, e))?;
    let outcome = outcome?;
    write_checkpoint(&files.checkpoint, &outcome.checkpoint())?;
    let text = summary(cfg, &train, &outcome);
    fs::write(&files.summary, text).map_err(|e| CliError::io(&files.summary, e))?;
    Ok((outcome, files))
}

pub fn schedule_lines(s: &TrainSchedule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "eta_v = {:e}", s.eta_v);
    let _ = writeln!(out, "eta_w1 = {:e}", s.eta_w1);
    let _ = writeln!(out, "eta_w2 = {:e}", s.eta_w2);
    let _ = writeln!(out, "k_outer = {}", s.k_outer);
    let _ = writeln!(out, "k_v = {}", s.k_v);
    let _ = writeln!(out, "k_w = {}", s.k_w);
    let _ = writeln!(out, "gamma = {:e}", s.gamma);
    let _ = writeln!(out, "step_scaling = \"{}\"", s.scaling);
    let _ = writeln!(out, "svb = {}", s.svb.is_some());
    out
}

pub fn summary(cfg: &RunConfig, train: &Dataset, o: &RunOutcome) -> String {
    let mut s = String::new();
    let last = o.final_losses();
    let first = o.trace.first().expect("trace records iteration 0");
    let _ = writeln!(s, "mode = {}", o.algo);
    let _ = writeln!(s, "activation = {}", o.activation);
    let _ = writeln!(s, "data = {}", train.meta);
    let _ = writeln!(s, "n = {}", train.n());
    let _ = writeln!(s, "d_in = {}", train.d_in());
    let _ = writeln!(s, "layers = {}", cfg.layers);
    let _ = writeln!(s, "width = {}", cfg.width);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "seed_used = {}", o.seed_used);
    let _ = writeln!(s, "redraws = {}", o.redraws);
    let _ = writeln!(
        s,
        "schedule_source = {}",
        if o.report.is_some() { ScheduleSource::Theorem } else { ScheduleSource::Explicit }
    );
    s.push_str(&schedule_lines(&o.schedule));
    if let Some(r) = &o.report {
        let _ = writeln!(s, "c_k = {:e}", r.c_k);
        let _ = writeln!(s, "c_v = {:e}", r.c_v);
        let _ = writeln!(s, "k_w_s_power = {}", r.k_w_s_power);
        if let Some(cap) = r.eta_v_printed_cap {
            let _ = writeln!(s, "eta_v_printed_cap = {cap:e}");
        }
    }
    let _ = writeln!(s, "initial_total = {:e}", first.total);
    let _ = writeln!(s, "final_total = {:e}", last.total);
    let _ = writeln!(s, "final_output = {:e}", last.output);
    for (j, h) in last.hidden.iter().enumerate() {
        let _ = writeln!(s, "final_hidden_{} = {h:e}", j + 1);
    }
    let _ = writeln!(s, "max_uptick = {:e}", o.trace.max_uptick());
    let _ = writeln!(s, "non_increasing = {}", o.trace.is_non_increasing(1e-12));
    let _ = writeln!(s, "train_mse = {:e}", o.train_mse);
    if let Some(t) = o.test_mse {
        let _ = writeln!(s, "test_mse = {t:e}");
        let _ = writeln!(s, "empirical_gap = {:e}", t - o.train_mse);
    }
    let _ = writeln!(s, "norm_premise = {}", o.norm_premise);
    let _ = writeln!(s, "wall_ms = {}", o.wall.as_millis());
    s
}
