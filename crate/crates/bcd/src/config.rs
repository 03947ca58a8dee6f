//! Run configuration: a flat `key = value` file (TOML) plus command-line
//! overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bcd_core::{Activation, StepScaling, SvbBounds, TrainSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::tracefile::Algo;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSource {
    /// Derived from the initialized instance by the convergence schedule; explicit
    /// fields still override.
    Theorem,
    /// Every step size and count given in the config.
    Explicit,
}

impl fmt::Display for ScheduleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleSource::Theorem => "theorem",
            ScheduleSource::Explicit => "explicit",
        })
    }
}

impl FromStr for ScheduleSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "theorem" => Ok(ScheduleSource::Theorem),
            "explicit" => Ok(ScheduleSource::Explicit),
            _ => Err(format!("unknown schedule source {s:?} (expected theorem or explicit)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training set CSV; when absent the teacher generator below is used.
    pub dataset: Option<PathBuf>,
    /// Optional held-out CSV for the measured generalization gap.
    pub test_dataset: Option<PathBuf>,
    pub n: usize,
    pub d_in: usize,
    /// Teacher hidden width; defaults to `width`.
    pub teacher_hidden: Option<usize>,
    pub teacher_scale: f64,
    pub data_seed: u64,
    /// Size of an extra test draw from the teacher.
    pub test_n: usize,

    pub layers: usize,
    pub width: usize,
    pub activation: String,
    pub mode: Algo,
    pub gamma: f64,
    pub seed: u64,
    pub strict_rank: bool,
    /// Write `wall_ms = 0` so traces are byte-identical across runs.
    pub deterministic: bool,

    pub schedule: ScheduleSource,
    pub epsilon: f64,
    pub step_scaling: String,
    pub svb: bool,
    pub eta_v: Option<f64>,
    pub eta_w1: Option<f64>,
    pub eta_w2: Option<f64>,
    pub k_outer: Option<usize>,
    pub k_v: Option<usize>,
    pub k_w: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            test_dataset: None,
            n: 8,
            d_in: 16,
            teacher_hidden: None,
            teacher_scale: 1.0,
            data_seed: 1,
            test_n: 0,
            layers: 3,
            width: 6,
            activation: "leaky_relu:0.5".into(),
            mode: Algo::Monotone,
            gamma: 1.0,
            seed: 7,
            strict_rank: false,
            deterministic: false,
            schedule: ScheduleSource::Theorem,
            epsilon: 1e-3,
            step_scaling: "raw".into(),
            svb: true,
            eta_v: None,
            eta_w1: None,
            eta_w2: None,
            k_outer: None,
            k_v: None,
            k_w: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn activation(&self) -> Result<Activation> {
        self.activation.parse().map_err(|e| CliError::Config(format!("activation: {e}")))
    }

    pub fn step_scaling(&self) -> Result<StepScaling> {
        self.step_scaling.parse().map_err(|e| CliError::Config(format!("step_scaling: {e}")))
    }

    pub fn teacher_hidden(&self) -> usize {
        self.teacher_hidden.unwrap_or(self.width)
    }

    /// SVB bounds used at initialization, if enabled.
    pub fn svb_bounds(&self) -> Option<SvbBounds> {
        self.svb.then_some(match self.mode {
            Algo::ReluSkip => SvbBounds::RELU,
            Algo::Monotone | Algo::ReluNoskip => SvbBounds::MONOTONE,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let act = self.activation()?;
        self.step_scaling()?;
        let bad = |m: String| Err(CliError::Config(m));
        match self.mode {
            Algo::ReluSkip | Algo::ReluNoskip if !act.is_relu() => {
                return bad(format!("mode {} requires activation relu, got {act}", self.mode));
            }
            Algo::Monotone if !act.check_assumption().holds => {
                return bad(format!(
                    "mode monotone requires a strictly increasing activation (0 < alpha <= ell), got {act}"
                ));
            }
            _ => {}
        }
        if self.layers < 2 {
            return bad(format!("layers must be >= 2, got {}", self.layers));
        }
        if self.width == 0 {
            return bad("width must be >= 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.dataset.is_none() {
            if self.n == 0 || self.d_in == 0 {
                return bad("the generated dataset needs n >= 1 and d_in >= 1".into());
            }
            if self.teacher_hidden() == 0 {
                return bad("teacher_hidden must be >= 1".into());
            }
        }
        for (name, v) in [("eta_v", self.eta_v), ("eta_w1", self.eta_w1), ("eta_w2", self.eta_w2)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        for (name, v) in [("k_outer", self.k_outer), ("k_v", self.k_v), ("k_w", self.k_w)] {
            if v == Some(0) {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.schedule == ScheduleSource::Explicit {
            let missing: Vec<&str> = [
                ("eta_v", self.eta_v.is_none()),
                ("eta_w1", self.eta_w1.is_none()),
                ("eta_w2", self.eta_w2.is_none()),
                ("k_outer", self.k_outer.is_none()),
                ("k_v", self.k_v.is_none()),
                ("k_w", self.k_w.is_none()),
            ]
            .into_iter()
            .filter_map(|(k, m)| m.then_some(k))
            .collect();
            if !missing.is_empty() {
                return bad(format!("schedule = \"explicit\" needs {}", missing.join(", ")));
            }
        }
        Ok(())
    }

    /// The explicit schedule; `None` unless `schedule = "explicit"`.
    pub fn explicit_schedule(&self) -> Result<Option<TrainSchedule>> {
        if self.schedule != ScheduleSource::Explicit {
            return Ok(None);
        }
        self.validate()?;
        let s = TrainSchedule {
            eta_v: self.eta_v.expect("validated"),
            eta_w1: self.eta_w1.expect("validated"),
            eta_w2: self.eta_w2.expect("validated"),
            k_outer: self.k_outer.expect("validated"),
            k_v: self.k_v.expect("validated"),
            k_w: self.k_w.expect("validated"),
            gamma: self.gamma,
            svb: self.svb_bounds(),
            scaling: self.step_scaling()?,
        };
        Ok(Some(s))
    }

    /// Applies the explicit fields on top of a derived schedule.
    pub fn override_schedule(&self, mut s: TrainSchedule) -> Result<TrainSchedule> {
        if let Some(v) = self.eta_v {
            s.eta_v = v;
        }
        if let Some(v) = self.eta_w1 {
            s.eta_w1 = v;
        }
        if let Some(v) = self.eta_w2 {
            s.eta_w2 = v;
        }
        if let Some(v) = self.k_outer {
            s.k_outer = v;
        }
        if let Some(v) = self.k_v {
            s.k_v = v;
        }
        if let Some(v) = self.k_w {
            s.k_w = v;
        }
        s.scaling = self.step_scaling()?;
        s.svb = self.svb_bounds();
        Ok(s)
    }
}

/// Command-line overrides for [`RunConfig`]; every flag is optional.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct ConfigOverrides {
    /// Training set CSV (otherwise generated from the teacher).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub test_dataset: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d_in: Option<usize>,
    #[arg(long)]
    pub teacher_hidden: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long)]
    pub test_n: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// `leaky_relu:<slope>`, `relu` or `identity`.
    #[arg(long)]
    pub activation: Option<String>,
    /// `monotone`, `relu_skip` or `relu_noskip`.
    #[arg(long)]
    pub mode: Option<Algo>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub strict_rank: Option<bool>,
    #[arg(long)]
    pub deterministic: Option<bool>,
    /// `theorem` or `explicit`.
    #[arg(long)]
    pub schedule: Option<ScheduleSource>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// `raw` or `smoothness`.
    #[arg(long)]
    pub step_scaling: Option<String>,
    #[arg(long)]
    pub svb: Option<bool>,
    #[arg(long)]
    pub eta_v: Option<f64>,
    #[arg(long)]
    pub eta_w1: Option<f64>,
    #[arg(long)]
    pub eta_w2: Option<f64>,
    #[arg(long)]
    pub k_outer: Option<usize>,
    #[arg(long)]
    pub k_v: Option<usize>,
    #[arg(long)]
    pub k_w: Option<usize>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$f = v.clone();
                }
            )*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$f = Some(v.clone());
                }
            )*};
        }
        set!(n, d_in, data_seed, test_n, layers, width, activation, mode, gamma, strict_rank, deterministic);
        set!(schedule, epsilon, step_scaling, svb);
        set_opt!(dataset, test_dataset, teacher_hidden, eta_v, eta_w1, eta_w2, k_outer, k_v, k_w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_file_round_trip() {
        let cfg =
            RunConfig { mode: Algo::ReluSkip, activation: "relu".into(), eta_v: Some(1.0), ..RunConfig::default() };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("widht = 3").unwrap_err().contains("widht"));
    }

    #[test]
    fn mode_activation_pairing() {
        let cfg = RunConfig { mode: Algo::ReluSkip, ..RunConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), crate::error::exit::CONFIG);
        let cfg = RunConfig { activation: "relu".into(), ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { mode: Algo::ReluNoskip, activation: "relu".into(), ..RunConfig::default() };
        cfg.validate().unwrap();
    }

    #[test]
    fn explicit_needs_every_field() {
        let cfg = RunConfig { schedule: ScheduleSource::Explicit, eta_v: Some(1.0), ..RunConfig::default() };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("eta_w1") && msg.contains("k_w"), "{msg}");
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        let o = ConfigOverrides { width: Some(9), k_v: Some(4), ..Default::default() };
        o.apply(&mut cfg);
        assert_eq!((cfg.width, cfg.k_v, cfg.layers), (9, Some(4), 3));
    }
}
