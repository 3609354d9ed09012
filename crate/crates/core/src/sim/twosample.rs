use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    expect_task, indicator, run_harness, ExperimentSpec, Harness, Method, Metric, MetricsTable,
    Task, TrialRecord, TwoSampleSetup,
};
use crate::error::Result;
use crate::gespi::{gespi, BaseProcedure, GespiConfig, Variant};
use crate::hypothesis::{Group, Permutation};
use crate::numeric::derive_seed;

struct TwoSampleHarness<'a> {
    setup: &'a TwoSampleSetup,
}

/// Half the records in group A with mean `effect`, half in group B with mean 0.
fn draw<R: Rng>(rng: &mut R, size: usize, effect: f64) -> Vec<(Group, f64)> {
    (0..size)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            if i % 2 == 0 {
                (Group::A, effect + z)
            } else {
                (Group::B, z)
            }
        })
        .collect()
}

impl Harness for TwoSampleHarness<'_> {
    type Point = Metric;

    fn point(&self, _spec: &ExperimentSpec) -> Result<Metric> {
        Ok(if self.setup.effect > 0.0 {
            Metric::Power
        } else {
            Metric::TypeIError
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
        let real = draw(&mut rng, spec.n, self.setup.effect);
        let synth = draw(&mut rng, spec.big_n, self.setup.synth_effect);
        let proc = Permutation {
            n_perms: self.setup.n_perms,
        };
        let cfg = GespiConfig::new(
            spec.alpha,
            spec.epsilon,
            Variant::TwoSided,
            derive_seed(seed, &[1]),
        )?;
        let res = gespi(&proc, &real, &synth, &cfg)?;
        out.check_sandwich(&res.base_action, &res.action, &res.guardrail_action)?;

        out.push(
            Method::OnlyReal,
            *metric,
            indicator(res.base_action.is_reject()),
        );
        out.push(Method::Gespi, *metric, indicator(res.action.is_reject()));
        if synth.len() >= 2 {
            let d = proc.run(&synth, spec.alpha, derive_seed(seed, &[2]))?;
            out.push(Method::OnlySynth, *metric, indicator(d.is_reject()));
        }
        Ok(())
    }
}

/// Monte-Carlo permutation test of a Gaussian mean difference between two
/// groups, with real and synthetic samples of possibly different effects.
pub fn run_twosample_experiment(
    spec: &ExperimentSpec,
    setup: &TwoSampleSetup,
) -> Result<MetricsTable> {
    expect_task(spec, &[Task::TwoSample])?;
    run_harness(spec, &TwoSampleHarness { setup })
}
