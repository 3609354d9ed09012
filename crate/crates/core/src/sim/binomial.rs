use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;

use super::{
    expect_task, indicator, run_harness, ExperimentSpec, Harness, Method, Metric, MetricsTable,
    Task, TrialRecord,
};
use crate::error::{Error, Result};
use crate::gespi::{combine, GespiConfig, Variant};
use crate::hypothesis::{uniform_from_seed, RandomizedBinomialTest};
use crate::numeric::derive_seed;

/// Null success probability of the one-sided test.
const P0: f64 = 0.5;

struct BinomialHarness;

struct Point {
    real: Binomial,
    synth: Binomial,
    base: RandomizedBinomialTest,
    guard: RandomizedBinomialTest,
    pooled: RandomizedBinomialTest,
    only_synth: Option<RandomizedBinomialTest>,
    metric: Metric,
}

fn binomial(n: usize, p: f64) -> Result<Binomial> {
    Binomial::new(n as u64, p).map_err(|e| Error::Domain(format!("Binomial({n}, {p}): {e}")))
}

impl Harness for BinomialHarness {
    type Point = Point;

    fn point(&self, spec: &ExperimentSpec) -> Result<Point> {
        let (n, big_n) = (spec.n as u64, spec.big_n as u64);
        Ok(Point {
            real: binomial(spec.n, spec.rho)?,
            synth: binomial(spec.big_n, spec.rho_synt)?,
            base: RandomizedBinomialTest::new(n, P0, spec.alpha)?,
            guard: RandomizedBinomialTest::new(n, P0, spec.alpha + spec.epsilon)?,
            pooled: RandomizedBinomialTest::new(n + big_n, P0, spec.alpha)?,
            only_synth: if big_n > 0 {
                Some(RandomizedBinomialTest::new(big_n, P0, spec.alpha)?)
            } else {
                None
            },
            metric: if spec.rho > P0 {
                Metric::Power
            } else {
                Metric::TypeIError
            },
        })
    }

    fn trial(
        &self,
        spec: &ExperimentSpec,
        p: &Point,
        seed: u64,
        out: &mut TrialRecord,
    ) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = rng.sample(p.real);
        let w_synth = rng.sample(p.synth);
        let cfg = GespiConfig::new(
            spec.alpha,
            spec.epsilon,
            Variant::TwoSided,
            derive_seed(seed, &[1]),
        )?;
        let u_real = uniform_from_seed(cfg.real_seed());

        let base = p.base.decide(w, u_real)?.decision;
        let guard = p.guard.decide(w, u_real)?.decision;
        let pooled = p
            .pooled
            .decide(w + w_synth, uniform_from_seed(cfg.pooled_seed()))?
            .decision;
        let action = combine(Variant::TwoSided, &base, &pooled, &guard)?;
        out.check_sandwich(&base, &action, &guard)?;

        out.push(Method::OnlyReal, p.metric, indicator(base.is_reject()));
        out.push(Method::Gespi, p.metric, indicator(action.is_reject()));
        if let Some(t) = &p.only_synth {
            let d = t
                .decide(w_synth, uniform_from_seed(derive_seed(seed, &[2])))?
                .decision;
            out.push(Method::OnlySynth, p.metric, indicator(d.is_reject()));
        }
        Ok(())
    }
}

/// Rejection rates of the randomized one-sided binomial test of `rho <= 1/2`
/// on `W ~ Binom(n, rho)` and `W~ ~ Binom(N, rho_synt)`.
///
/// The metric is `power` when `rho > 1/2` and `type_i_error` otherwise.
pub fn run_binomial_experiment(spec: &ExperimentSpec) -> Result<MetricsTable> {
    expect_task(spec, &[Task::BinomialTest])?;
    run_harness(spec, &BinomialHarness)
}
