//! Experiment descriptions and their defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    BinomialTest,
    WinRate,
    OutlierSingle,
    OutlierFWER,
    Conformal,
    RiskControl,
    TwoSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    OnlyReal,
    OnlySynth,
    Gespi,
    GespiOneSided,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::OnlyReal => "OnlyReal",
            Self::OnlySynth => "OnlySynth",
            Self::Gespi => "Gespi",
            Self::GespiOneSided => "GespiOneSided",
            Self::Oracle => "Oracle",
        }
    }
}

impl Task {
    pub fn supported_methods(self) -> &'static [Method] {
        use Method::*;
        match self {
            Task::OutlierSingle | Task::OutlierFWER => &[OnlyReal, OnlySynth, Gespi, Oracle],
            Task::Conformal => &[OnlyReal, OnlySynth, Gespi, GespiOneSided],
            _ => &[OnlyReal, OnlySynth, Gespi],
        }
    }
}

/// The parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Rho,
    RhoSynt,
    Epsilon,
    Alpha,
    #[serde(rename = "n")]
    RealSize,
    #[serde(rename = "N")]
    SynthSize,
    TrimRate,
    ContaminationRate,
    SynthShift,
    ProxyBias,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rho => "rho",
            Self::RhoSynt => "rho_synt",
            Self::Epsilon => "epsilon",
            Self::Alpha => "alpha",
            Self::RealSize => "n",
            Self::SynthSize => "N",
            Self::TrimRate => "trim_rate",
            Self::ContaminationRate => "contamination_rate",
            Self::SynthShift => "synth_shift",
            Self::ProxyBias => "proxy_bias",
        }
    }
}

/// A named parameter and the values it takes.
///
/// In JSON either `{"param": "rho_synt", "values": [...]}` or
/// `{"param": "rho_synt", "start": 0.45, "stop": 0.65, "step": 0.05}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: SweepParam,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl Sweep {
    pub fn values(param: SweepParam, values: Vec<f64>) -> Self {
        Self {
            param,
            values,
            start: None,
            stop: None,
            step: None,
        }
    }

    /// Expand a range form into explicit values (inclusive of `stop`).
    pub fn grid(&self) -> Result<Vec<f64>> {
        let has_range = self.start.is_some() || self.stop.is_some() || self.step.is_some();
        if !self.values.is_empty() {
            if has_range {
                return Err(Error::Config(
                    "sweep: give either values or start/stop/step, not both".into(),
                ));
            }
            return Ok(self.values.clone());
        }
        match (self.start, self.stop, self.step) {
            (Some(start), Some(stop), Some(step)) => {
                if step.is_nan() || step <= 0.0 || stop < start {
                    return Err(Error::Config(format!(
                        "sweep: invalid range {start}..{stop} step {step}"
                    )));
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                // round to the step's decimal precision so 0.45 + 2*0.05 prints as 0.55
                Ok((0..count)
                    .map(|i| round12(start + i as f64 * step))
                    .collect())
            }
            (None, None, None) => Err(Error::Config("sweep: grid is empty".into())),
            _ => Err(Error::Config(
                "sweep: start, stop and step must all be given".into(),
            )),
        }
    }
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Population of a scalar score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreLaw {
    Gaussian { mean: f64, sd: f64 },
    Discrete { support: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalSetup {
    pub real: ScoreLaw,
    pub synth: ScoreLaw,
}

impl Default for ConformalSetup {
    fn default() -> Self {
        Self {
            real: ScoreLaw::Gaussian { mean: 0.0, sd: 1.0 },
            synth: ScoreLaw::Gaussian { mean: 0.0, sd: 1.0 },
        }
    }
}

/// Contaminated-reference outlier protocol on Gaussian data or a CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContaminationSpec {
    pub dim: usize,
    /// Euclidean norm of the outlier mean shift, spread evenly over coordinates.
    pub outlier_shift: f64,
    pub contamination_rate: f64,
    pub trim_rate: f64,
    /// Size of the contaminated reference pool.
    pub reference_size: usize,
    /// Size of the contaminated sample the score model is fitted on.
    pub training_size: usize,
    pub clean_size: usize,
    pub test_inliers: usize,
    pub test_outliers: usize,
    pub batch_count: usize,
    /// Optional CSV with feature columns (or a `score` column) and a `label` column.
    pub data: Option<PathBuf>,
}

impl ContaminationSpec {
    /// Single-test defaults: one fifth of the published table sizes,
    /// keeping the 40-point clean reference.
    pub fn single_default() -> Self {
        Self {
            dim: 8,
            outlier_shift: 3.0,
            contamination_rate: 0.05,
            trim_rate: 0.05,
            reference_size: 500,
            training_size: 1000,
            clean_size: 40,
            test_inliers: 190,
            test_outliers: 10,
            batch_count: 10,
            data: None,
        }
    }

    /// Batch FWER defaults: 100 clean inliers, 200 test points in 10 batches.
    pub fn fwer_default() -> Self {
        Self {
            clean_size: 100,
            ..Self::single_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if !(0.0..1.0).contains(&self.contamination_rate) {
            return bad(format!(
                "contamination_rate must lie in [0, 1), got {}",
                self.contamination_rate
            ));
        }
        if !(0.0..1.0).contains(&self.trim_rate) {
            return bad(format!(
                "trim_rate must lie in [0, 1), got {}",
                self.trim_rate
            ));
        }
        if self.dim == 0
            || self.reference_size == 0
            || self.training_size == 0
            || self.clean_size == 0
        {
            return bad("contamination sizes must be positive".into());
        }
        if self.test_inliers + self.test_outliers == 0 || self.batch_count == 0 {
            return bad("test set and batch count must be positive".into());
        }
        if self.batch_count > self.test_inliers + self.test_outliers {
            return bad("more batches than test points".into());
        }
        Ok(())
    }
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        Self::single_default()
    }
}

/// How synthetic losses relate to real ones in the risk-control experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticProxy {
    /// Synthetic errors drawn with the real error probability plus `proxy_bias`.
    Biased,
    /// Every synthetic loss is zero.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrcSetup {
    /// Residues per datapoint.
    pub residues: usize,
    /// Candidate thresholds `0, 1, ..., grid_max`.
    pub grid_max: usize,
    /// Held-out datapoints per trial.
    pub test_size: usize,
    pub proxy: SyntheticProxy,
    /// Additive shift of the synthetic error probability (clamped to [0, 1]).
    pub proxy_bias: f64,
}

impl Default for CrcSetup {
    fn default() -> Self {
        Self {
            residues: 20,
            grid_max: 100,
            test_size: 50,
            proxy: SyntheticProxy::Biased,
            proxy_bias: 0.0,
        }
    }
}

/// Item pools for simulated win/tie/loss records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatedItems {
    pub real_items: usize,
    pub synth_items: usize,
    /// Correctness probabilities of models A and B on real items.
    pub real_p_a: f64,
    pub real_p_b: f64,
    pub synth_p_a: f64,
    pub synth_p_b: f64,
}

impl Default for SimulatedItems {
    fn default() -> Self {
        Self {
            real_items: 200,
            synth_items: 1000,
            real_p_a: 0.6,
            real_p_b: 0.4,
            synth_p_a: 0.6,
            synth_p_b: 0.45,
        }
    }
}

#[derive(Default, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WinrateSetup {
    /// CSV with `item_id,model_a_correct,model_b_correct,source`.
    pub records: Option<PathBuf>,
    /// Swap the two models' answers on each item with probability 1/2,
    /// independently in every trial.
    pub shuffled: bool,
    /// Used when `records` is absent.
    pub simulated: SimulatedItems,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoSampleSetup {
    /// Mean of group A minus mean of group B in the real population.
    pub effect: f64,
    pub synth_effect: f64,
    pub n_perms: usize,
}

impl Default for TwoSampleSetup {
    fn default() -> Self {
        Self {
            effect: 0.5,
            synth_effect: 0.5,
            n_perms: 200,
        }
    }
}

/// Full description of a simulated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub task: Task,
    pub rho: f64,
    pub rho_synt: f64,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub inner_trials: u64,
    pub outer_reps: u64,
    /// `None` runs the single point given by the spec itself.
    pub sweep: Option<Sweep>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub contamination: ContaminationSpec,
    pub conformal: ConformalSetup,
    pub crc: CrcSetup,
    pub winrate: WinrateSetup,
    pub twosample: TwoSampleSetup,
}

impl ExperimentSpec {
    /// Defaults: n=50, N=500, alpha=5%, epsilon=2%, rho=0.6, rho_synt=0.55,
    /// 100 inner trials and 100 outer repetitions.
    pub fn default_for(task: Task) -> Self {
        Self {
            task,
            rho: 0.6,
            rho_synt: 0.55,
            n: 50,
            big_n: 500,
            alpha: 0.05,
            epsilon: 0.02,
            inner_trials: 100,
            outer_reps: 100,
            sweep: None,
            methods: task.supported_methods().to_vec(),
            seed: 0,
            contamination: match task {
                Task::OutlierFWER => ContaminationSpec::fwer_default(),
                _ => ContaminationSpec::single_default(),
            },
            conformal: ConformalSetup::default(),
            crc: CrcSetup::default(),
            winrate: WinrateSetup::default(),
            twosample: TwoSampleSetup::default(),
        }
    }

    /// A copy with one sweep parameter set.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut s = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Domain(format!(
                    "{} must be a nonnegative integer, got {v}",
                    param.name()
                )))
            }
        };
        match param {
            SweepParam::Rho => s.rho = value,
            SweepParam::RhoSynt => s.rho_synt = value,
            SweepParam::Epsilon => s.epsilon = value,
            SweepParam::Alpha => s.alpha = value,
            SweepParam::RealSize => s.n = count(value)?,
            SweepParam::SynthSize => s.big_n = count(value)?,
            SweepParam::TrimRate => s.contamination.trim_rate = value,
            SweepParam::ContaminationRate => s.contamination.contamination_rate = value,
            SweepParam::SynthShift => match &mut s.conformal.synth {
                ScoreLaw::Gaussian { mean, .. } => *mean = value,
                ScoreLaw::Discrete { .. } => {
                    return Err(Error::Domain(
                        "synth_shift sweep needs a Gaussian synthetic law".into(),
                    ))
                }
            },
            SweepParam::ProxyBias => s.crc.proxy_bias = value,
        }
        Ok(s)
    }

    /// The swept parameter, or `None` for a single point.
    pub fn sweep_param(&self) -> Option<SweepParam> {
        self.sweep.as_ref().map(|s| s.param)
    }

    /// Parameter and values of the sweep; a single-point run reports its epsilon.
    pub fn sweep_points(&self) -> Result<(SweepParam, Vec<f64>)> {
        match &self.sweep {
            Some(s) => Ok((s.param, s.grid().map_err(|e| Error::Domain(e.to_string()))?)),
            None => Ok((SweepParam::Epsilon, vec![self.epsilon])),
        }
    }

    /// Validate the spec and every point of its sweep.
    pub fn validate(&self) -> Result<Vec<f64>> {
        let (param, grid) = self.sweep_points()?;
        if grid.is_empty() {
            return Err(Error::Domain("sweep grid is empty".into()));
        }
        if self.inner_trials == 0 || self.outer_reps == 0 {
            return Err(Error::Domain(
                "inner_trials and outer_reps must be at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no methods selected".into()));
        }
        if let Some(m) = self
            .methods
            .iter()
            .find(|m| !self.task.supported_methods().contains(m))
        {
            return Err(Error::Domain(format!(
                "method {} is not available for {:?}",
                m.name(),
                self.task
            )));
        }
        for &v in &grid {
            self.with_param(param, v)?.validate_point()?;
        }
        Ok(grid)
    }

    fn validate_point(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 || self.alpha + self.epsilon >= 1.0 {
            return bad(format!(
                "epsilon must be >= 0 with alpha + epsilon < 1, got {}",
                self.epsilon
            ));
        }
        for (name, p) in [("rho", self.rho), ("rho_synt", self.rho_synt)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        match self.task {
            Task::OutlierSingle | Task::OutlierFWER => self.contamination.validate()?,
            Task::Conformal => {
                for law in [&self.conformal.real, &self.conformal.synth] {
                    match law {
                        ScoreLaw::Gaussian { mean, sd } if !(mean.is_finite() && *sd > 0.0) => {
                            return bad(format!(
                                "Gaussian score law needs finite mean and sd > 0, got {mean}, {sd}"
                            ))
                        }
                        ScoreLaw::Discrete { support, probs } => {
                            crate::oracles::DiscreteDist::new(support.clone(), probs.clone())?;
                        }
                        _ => {}
                    }
                }
            }
            Task::RiskControl => {
                let c = &self.crc;
                if c.residues == 0 || c.grid_max == 0 || c.test_size == 0 {
                    return bad("risk-control sizes must be positive".into());
                }
                if !c.proxy_bias.is_finite() {
                    return bad("proxy_bias must be finite".into());
                }
            }
            Task::WinRate => {
                let s = &self.winrate.simulated;
                for p in [s.real_p_a, s.real_p_b, s.synth_p_a, s.synth_p_b] {
                    if !(0.0..=1.0).contains(&p) {
                        return bad(format!(
                            "simulated correctness probability {p} outside [0, 1]"
                        ));
                    }
                }
            }
            Task::TwoSample => {
                if self.n < 2 || self.twosample.n_perms == 0 {
                    return bad("two-sample task needs n >= 2 and n_perms >= 1".into());
                }
            }
            Task::BinomialTest => {}
        }
        Ok(())
    }
}
