use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::{
    expect_task, indicator, run_harness, ExperimentSpec, Harness, Method, Metric, MetricsTable,
    ScoreLaw, Task, TrialRecord,
};
use crate::conformal::{conformal_quantile, coverage_indicator, ScoreSample};
use crate::error::{Error, Result};
use crate::gespi::{combine, Variant};
use crate::lattice::ThresholdAction;
use crate::oracles::DiscreteDist;

pub(crate) enum Sampler {
    Gaussian(Normal<f64>),
    Discrete(DiscreteDist),
}

impl Sampler {
    pub(crate) fn new(law: &ScoreLaw) -> Result<Self> {
        match law {
            ScoreLaw::Gaussian { mean, sd } => Normal::new(*mean, *sd)
                .map(Self::Gaussian)
                .map_err(|e| Error::Domain(format!("Normal({mean}, {sd}): {e}"))),
            ScoreLaw::Discrete { support, probs } => Ok(Self::Discrete(DiscreteDist::new(
                support.clone(),
                probs.clone(),
            )?)),
        }
    }

    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian(d) => rng.sample(d),
            Self::Discrete(d) => d.sample(rng),
        }
    }

    fn draw_n<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

struct ConformalHarness<'a> {
    real: &'a ScoreLaw,
    synth: &'a ScoreLaw,
}

struct Point {
    real: Sampler,
    synth: Sampler,
}

fn record(out: &mut TrialRecord, method: Method, threshold: &ThresholdAction, test: f64) {
    out.push(
        method,
        Metric::Coverage,
        indicator(coverage_indicator(threshold, test) == 1),
    );
    if threshold.threshold().is_finite() {
        out.push(method, Metric::MeanThreshold, threshold.threshold());
    }
}

impl Harness for ConformalHarness<'_> {
    type Point = Point;

    fn point(&self, spec: &ExperimentSpec) -> Result<Point> {
        let mut synth = self.synth.clone();
        if spec.sweep_param() == Some(super::SweepParam::SynthShift) {
            // the swept value was written into the spec's own synthetic law
            match (&mut synth, &spec.conformal.synth) {
                (ScoreLaw::Gaussian { mean, .. }, ScoreLaw::Gaussian { mean: swept, .. }) => {
                    *mean = *swept
                }
                _ => {
                    return Err(Error::Domain(
                        "synth_shift sweep needs a Gaussian synthetic law".into(),
                    ))
                }
            }
        }
        Ok(Point {
            real: Sampler::new(self.real)?,
            synth: Sampler::new(&synth)?,
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
        let real = p.real.draw_n(&mut rng, spec.n);
        let synth = p.synth.draw_n(&mut rng, spec.big_n);
        let test = p.real.draw(&mut rng);

        let real_sample = ScoreSample::new(real.clone())?;
        let base = conformal_quantile(&real_sample, spec.alpha)?;
        let guard = conformal_quantile(&real_sample, spec.alpha + spec.epsilon)?;
        let mut pooled = real;
        pooled.extend_from_slice(&synth);
        let pooled = conformal_quantile(&ScoreSample::new(pooled)?, spec.alpha)?;
        let two = combine(Variant::TwoSided, &base, &pooled, &guard)?;
        let one = combine(Variant::OneSided, &base, &pooled, &guard)?;
        out.check_sandwich(&base, &two, &guard)?;

        record(out, Method::OnlyReal, &base, test);
        record(out, Method::Gespi, &two, test);
        record(out, Method::GespiOneSided, &one, test);
        if !synth.is_empty() {
            record(
                out,
                Method::OnlySynth,
                &conformal_quantile(&ScoreSample::new(synth)?, spec.alpha)?,
                test,
            );
        }
        Ok(())
    }
}

/// Coverage of split-conformal thresholds with real scores from `real`,
/// synthetic scores from `synth` and the test score from `real`.
///
/// `mean_threshold` averages only finite thresholds.
pub fn run_conformal_experiment(
    spec: &ExperimentSpec,
    real: &ScoreLaw,
    synth: &ScoreLaw,
) -> Result<MetricsTable> {
    expect_task(spec, &[Task::Conformal])?;
    Sampler::new(real)?;
    Sampler::new(synth)?;
    run_harness(spec, &ConformalHarness { real, synth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Sweep, SweepParam};

    fn spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::default_for(Task::Conformal);
        s.inner_trials = 200;
        s.outer_reps = 20;
        s.seed = 3;
        s
    }

    #[test]
    fn coverage_same_law() {
        let s = spec();
        let t = run_experiment_default(&s);
        assert_eq!(t.sandwich_violations, 0);
        for m in [Method::OnlyReal, Method::Gespi, Method::OnlySynth] {
            let row = t.get(0.02, m, Metric::Coverage).unwrap();
            assert!(row.mean >= 0.95 - row.mc_tolerance() - 0.01, "{row:?}");
        }
    }

    fn run_experiment_default(s: &ExperimentSpec) -> MetricsTable {
        run_conformal_experiment(s, &s.conformal.real, &s.conformal.synth).unwrap()
    }

    #[test]
    fn shifted_synthetic_is_guarded() {
        let mut s = spec();
        s.sweep = Some(Sweep::values(SweepParam::SynthShift, vec![-5.0]));
        let t = run_experiment_default(&s);
        let synth = t.get(-5.0, Method::OnlySynth, Metric::Coverage).unwrap();
        assert!(synth.mean < 0.01);
        let gespi = t.get(-5.0, Method::Gespi, Metric::Coverage).unwrap();
        assert!(
            gespi.mean >= 0.93 - gespi.mc_tolerance() - 0.01,
            "{gespi:?}"
        );
        let base = t
            .get(-5.0, Method::OnlyReal, Metric::MeanThreshold)
            .unwrap();
        let g = t.get(-5.0, Method::Gespi, Metric::MeanThreshold).unwrap();
        assert!(g.mean <= base.mean);
    }

    #[test]
    fn discrete_laws() {
        let mut s = spec();
        s.n = 5;
        s.big_n = 10;
        let law = ScoreLaw::Discrete {
            support: vec![0.0, 1.0, 2.0],
            probs: vec![0.5, 0.3, 0.2],
        };
        let t = run_conformal_experiment(&s, &law, &law).unwrap();
        assert_eq!(t.sandwich_violations, 0);
        // n = 5 at alpha = 0.05 gives an infinite real threshold
        assert_eq!(
            t.get(0.02, Method::OnlyReal, Metric::Coverage)
                .unwrap()
                .mean,
            1.0
        );
        assert!(t
            .get(0.02, Method::OnlyReal, Metric::MeanThreshold)
            .is_none());
    }
}
