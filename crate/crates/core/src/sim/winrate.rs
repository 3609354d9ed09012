use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    expect_task, indicator, run_harness, ExperimentSpec, Harness, Method, Metric, MetricsTable,
    SimulatedItems, Task, TrialRecord,
};
use crate::error::{Error, Result};
use crate::gespi::{combine, GespiConfig, Variant};
use crate::hypothesis::{uniform_from_seed, winrate_test, TrinomialCounts};
use crate::numeric::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Synthetic,
}

/// Correctness of two models on one evaluation item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub model_a_correct: bool,
    pub model_b_correct: bool,
    pub source: Source,
}

/// `+1` when only A is right, `-1` when only B is, `0` otherwise.
fn outcome(r: &ItemRecord) -> i8 {
    i8::from(r.model_a_correct) - i8::from(r.model_b_correct)
}

/// Item bank drawn once from fixed per-source correctness probabilities.
pub(crate) fn simulate_records(sim: &SimulatedItems, seed: u64) -> Vec<ItemRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |i: usize, source: Source, pa: f64, pb: f64| ItemRecord {
        item_id: format!("{}{i}", if source == Source::Real { "r" } else { "s" }),
        model_a_correct: rng.random::<f64>() < pa,
        model_b_correct: rng.random::<f64>() < pb,
        source,
    };
    let mut out: Vec<ItemRecord> = (0..sim.real_items)
        .map(|i| draw(i, Source::Real, sim.real_p_a, sim.real_p_b))
        .collect();
    out.extend(
        (0..sim.synth_items).map(|i| draw(i, Source::Synthetic, sim.synth_p_a, sim.synth_p_b)),
    );
    out
}

struct WinrateHarness {
    real: Vec<i8>,
    synth: Vec<i8>,
    shuffled: bool,
}

impl WinrateHarness {
    /// Counts over a subsample; shuffled mode flips each item's orientation
    /// with probability one half.
    fn counts<R: Rng>(&self, rng: &mut R, pool: &[i8], size: usize) -> TrinomialCounts {
        let mut c = TrinomialCounts::default();
        for i in sample(rng, pool.len(), size).into_iter() {
            let mut o = pool[i];
            if self.shuffled && rng.random::<bool>() {
                o = -o;
            }
            match o {
                1 => c.wins += 1,
                -1 => c.losses += 1,
                _ => c.ties += 1,
            }
        }
        c
    }
}

impl Harness for WinrateHarness {
    type Point = Metric;

    fn point(&self, spec: &ExperimentSpec) -> Result<Metric> {
        if spec.n > self.real.len() || spec.big_n > self.synth.len() {
            return Err(Error::Domain(format!(
                "cannot subsample n={} real and N={} synthetic items from {} and {}",
                spec.n,
                spec.big_n,
                self.real.len(),
                self.synth.len()
            )));
        }
        Ok(if self.shuffled {
            Metric::TypeIError
        } else {
            Metric::Power
        })
    }

    fn trial(
        &self,
        spec: &ExperimentSpec,
        metric: &Metric,
        seed: u64,
        out: &mut TrialRecord,
    ) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real = self.counts(&mut rng, &self.real, spec.n);
        let synth = self.counts(&mut rng, &self.synth, spec.big_n);
        let cfg = GespiConfig::new(
            spec.alpha,
            spec.epsilon,
            Variant::TwoSided,
            derive_seed(seed, &[1]),
        )?;
        let u_real = uniform_from_seed(cfg.real_seed());

        let base = winrate_test(&real, spec.alpha, u_real)?.decision;
        let guard = winrate_test(&real, spec.alpha + spec.epsilon, u_real)?.decision;
        let pooled = winrate_test(
            &(real + synth),
            spec.alpha,
            uniform_from_seed(cfg.pooled_seed()),
        )?
        .decision;
        let action = combine(Variant::TwoSided, &base, &pooled, &guard)?;
        out.check_sandwich(&base, &action, &guard)?;

        out.push(Method::OnlyReal, *metric, indicator(base.is_reject()));
        out.push(Method::Gespi, *metric, indicator(action.is_reject()));
        if spec.big_n > 0 {
            let d = winrate_test(
                &synth,
                spec.alpha,
                uniform_from_seed(derive_seed(seed, &[2])),
            )?
            .decision;
            out.push(Method::OnlySynth, *metric, indicator(d.is_reject()));
        }
        Ok(())
    }
}

/// Win-rate tests of model A over model B on subsamples of `n` real and `N`
/// synthetic items, drawn afresh each trial.
///
/// Reports `power`, or `type_i_error` when `spec.winrate.shuffled`.
pub fn run_winrate_experiment(
    records: &[ItemRecord],
    spec: &ExperimentSpec,
) -> Result<MetricsTable> {
    expect_task(spec, &[Task::WinRate])?;
    let pick = |s: Source| {
        records
            .iter()
            .filter(|r| r.source == s)
            .map(outcome)
            .collect::<Vec<_>>()
    };
    let harness = WinrateHarness {
        real: pick(Source::Real),
        synth: pick(Source::Synthetic),
        shuffled: spec.winrate.shuffled,
    };
    run_harness(spec, &harness)
}
