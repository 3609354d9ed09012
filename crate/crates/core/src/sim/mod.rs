//! Monte-Carlo harnesses comparing real-only, synthetic-only, oracle and
//! wrapped procedures.
//!
//! Every trial draws from its own generator seeded by
//! `derive_seed(master, [sweep_index, rep, trial])`, and reps are reduced in
//! index order, so the output does not depend on the rayon pool size.

mod binomial;
mod conformal;
mod crc;
mod outlier;
mod spec;
mod twosample;
mod winrate;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::Lattice;
use crate::numeric::derive_seed;

pub use binomial::run_binomial_experiment;
pub use conformal::run_conformal_experiment;
pub use crc::run_crc_experiment;
pub use outlier::{run_outlier_experiment, OutlierTable};
pub use spec::{
    ConformalSetup, ContaminationSpec, CrcSetup, ExperimentSpec, Method, ScoreLaw, SimulatedItems,
    Sweep, SweepParam, SyntheticProxy, Task, TwoSampleSetup, WinrateSetup,
};
pub use twosample::run_twosample_experiment;
pub use winrate::{run_winrate_experiment, ItemRecord, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Power,
    TypeIError,
    Fwer,
    Risk,
    Coverage,
    AbstentionRate,
    /// Average finite conformal threshold; not a rate.
    MeanThreshold,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Power => "power",
            Self::TypeIError => "type_i_error",
            Self::Fwer => "fwer",
            Self::Risk => "risk",
            Self::Coverage => "coverage",
            Self::AbstentionRate => "abstention_rate",
            Self::MeanThreshold => "mean_threshold",
        }
    }

    pub fn is_rate(self) -> bool {
        self != Self::MeanThreshold
    }
}

/// One aggregated cell: a metric for one method at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub sweep_param: SweepParam,
    pub sweep_value: f64,
    pub method: Method,
    pub metric: Metric,
    /// Mean over outer reps of the per-rep average over inner trials.
    pub mean: f64,
    /// Sample standard deviation of the per-rep averages.
    pub std: f64,
    pub inner_trials: u64,
    pub outer_reps: u64,
    pub seed: u64,
}

impl MetricRow {
    /// Standard error of `mean` estimated from the outer-rep dispersion.
    pub fn mc_se(&self) -> f64 {
        self.std / (self.outer_reps as f64).sqrt()
    }

    /// Three standard errors.
    pub fn mc_tolerance(&self) -> f64 {
        3.0 * self.mc_se()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
    /// Trials in which the wrapped action left `[base, guardrail]`.
    pub sandwich_violations: u64,
}

impl MetricsTable {
    pub fn get(&self, sweep_value: f64, method: Method, metric: Metric) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.method == method && r.metric == metric)
    }

    /// Rows of one method and metric, in sweep order.
    pub fn series(&self, method: Method, metric: Metric) -> Vec<&MetricRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.metric == metric)
            .collect()
    }
}

/// Values recorded by one trial.
#[derive(Debug, Default)]
pub(crate) struct TrialRecord {
    values: Vec<(Method, Metric, f64)>,
    violations: u64,
}

impl TrialRecord {
    pub(crate) fn push(&mut self, method: Method, metric: Metric, value: f64) {
        self.values.push((method, metric, value));
    }

    /// Count a violation unless `base ⪯ action ⪯ guard`.
    pub(crate) fn check_sandwich<A: Lattice>(
        &mut self,
        base: &A,
        action: &A,
        guard: &A,
    ) -> Result<()> {
        if !(base.leq(action)? && action.leq(guard)?) {
            self.violations += 1;
        }
        Ok(())
    }
}

/// A task-specific trial generator.
pub(crate) trait Harness: Sync {
    /// State precomputed once per sweep value.
    type Point: Sync;

    fn point(&self, spec: &ExperimentSpec) -> Result<Self::Point>;

    fn trial(
        &self,
        spec: &ExperimentSpec,
        point: &Self::Point,
        seed: u64,
        out: &mut TrialRecord,
    ) -> Result<()>;
}

type Sums = BTreeMap<(Method, Metric), (f64, u64)>;

/// Run every (sweep value, outer rep) cell in parallel and reduce in order.
pub(crate) fn run_harness<H: Harness>(spec: &ExperimentSpec, harness: &H) -> Result<MetricsTable> {
    let grid = spec.validate()?;
    let (param, _) = spec.sweep_points()?;
    let points = grid
        .iter()
        .map(|&v| {
            let s = spec.with_param(param, v)?;
            let p = harness.point(&s)?;
            Ok((s, p))
        })
        .collect::<Result<Vec<_>>>()?;

    let reps = spec.outer_reps;
    let cells: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(i, r)| {
            let (s, p) = &points[i];
            let mut sums = Sums::new();
            let mut violations = 0;
            for t in 0..spec.inner_trials {
                let mut rec = TrialRecord::default();
                harness.trial(s, p, derive_seed(spec.seed, &[i as u64, r, t]), &mut rec)?;
                violations += rec.violations;
                for (method, metric, v) in rec.values {
                    let e = sums.entry((method, metric)).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
            Ok((sums, violations))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = MetricsTable::default();
    for (i, chunk) in results.chunks(reps as usize).enumerate() {
        let mut per_key: BTreeMap<(Method, Metric), Vec<f64>> = BTreeMap::new();
        for (sums, violations) in chunk {
            table.sandwich_violations += violations;
            for (&key, &(sum, count)) in sums {
                per_key.entry(key).or_default().push(sum / count as f64);
            }
        }
        for ((method, metric), rep_means) in per_key {
            if !spec.methods.contains(&method) {
                continue;
            }
            let (mean, std) = mean_std(&rep_means);
            table.rows.push(MetricRow {
                sweep_param: param,
                sweep_value: grid[i],
                method,
                metric,
                mean,
                std,
                inner_trials: spec.inner_trials,
                outer_reps: reps,
                seed: spec.seed,
            });
        }
    }
    Ok(table)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Dispatch on the spec's task using the configuration sections it carries.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricsTable> {
    match spec.task {
        Task::BinomialTest => run_binomial_experiment(spec),
        Task::OutlierSingle | Task::OutlierFWER => {
            run_outlier_experiment(spec, &spec.contamination)
        }
        Task::Conformal => {
            run_conformal_experiment(spec, &spec.conformal.real, &spec.conformal.synth)
        }
        Task::RiskControl => run_crc_experiment(spec, &spec.crc),
        Task::WinRate => {
            let records = match &spec.winrate.records {
                Some(path) => crate::io::read_winrate_records(path)?,
                None => winrate::simulate_records(
                    &spec.winrate.simulated,
                    derive_seed(spec.seed, &[u64::MAX]),
                ),
            };
            run_winrate_experiment(&records, spec)
        }
        Task::TwoSample => run_twosample_experiment(spec, &spec.twosample),
    }
}

/// `1` for a rejection.
pub(crate) fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Fail early when the spec was built for another task.
pub(crate) fn expect_task(spec: &ExperimentSpec, tasks: &[Task]) -> Result<()> {
    if tasks.contains(&spec.task) {
        Ok(())
    } else {
        Err(crate::Error::Domain(format!(
            "harness cannot run task {:?}",
            spec.task
        )))
    }
}
