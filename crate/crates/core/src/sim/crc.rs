use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    expect_task, run_harness, CrcSetup, ExperimentSpec, Harness, Method, Metric, MetricsTable,
    SyntheticProxy, Task, TrialRecord,
};
use crate::conformal::{crc_lambda, LossMonotonicity, RiskGrid};
use crate::error::Result;
use crate::gespi::{combine, Variant};
use crate::lattice::ThresholdAction;

/// Residue-level abstention model. Each datapoint has `residues` residues
/// with confidence `c ~ U(0, M)` on the grid `0..=M`; a residue is wrong
/// with probability `(1 - c/M)^2`. Keeping residues with `c >= λ` gives the
/// loss `(1/R) Σ wrong · 1{c >= λ}`, non-increasing in λ and bounded by 1.
struct CrcHarness<'a> {
    setup: &'a CrcSetup,
}

struct Point {
    lambdas: Vec<f64>,
    proxy_bias: f64,
}

struct Datapoint {
    loss: Vec<f64>,
    abstention: Vec<f64>,
}

impl CrcHarness<'_> {
    fn datapoint<R: Rng>(&self, rng: &mut R, bias: Option<f64>) -> Datapoint {
        let grid_max = self.setup.grid_max;
        let m = grid_max as f64;
        let r = self.setup.residues as f64;
        // kept_err[j]: wrong residues whose confidence floor is j; all[j]: any residue
        let mut kept_err = vec![0.0; grid_max + 1];
        let mut all = vec![0.0; grid_max + 1];
        for _ in 0..self.setup.residues {
            let c = rng.random::<f64>() * m;
            let p = (1.0 - c / m).powi(2);
            let p = match bias {
                Some(b) => (p + b).clamp(0.0, 1.0),
                None => p,
            };
            let bin = (c.floor() as usize).min(grid_max);
            all[bin] += 1.0;
            if rng.random::<f64>() < p {
                kept_err[bin] += 1.0;
            }
        }
        // loss at λ_j counts residues with c >= j: suffix sums of the bins
        let mut loss = vec![0.0; grid_max + 1];
        let mut abstention = vec![0.0; grid_max + 1];
        let (mut err_above, mut below) = (0.0, 0.0);
        for j in (0..=grid_max).rev() {
            err_above += kept_err[j];
            loss[j] = err_above / r;
        }
        for j in 0..=grid_max {
            abstention[j] = below / r;
            below += all[j];
        }
        Datapoint { loss, abstention }
    }

    fn grid(&self, lambdas: &[f64], rows: Vec<Vec<f64>>) -> Result<RiskGrid> {
        RiskGrid::new(lambdas.to_vec(), rows, 1.0, LossMonotonicity::NonIncreasing)
    }
}

fn evaluate(out: &mut TrialRecord, method: Method, lambda: &ThresholdAction, test: &[Datapoint]) {
    let j = lambda.threshold() as usize;
    let k = test.len() as f64;
    out.push(
        method,
        Metric::Risk,
        test.iter().map(|d| d.loss[j]).sum::<f64>() / k,
    );
    out.push(
        method,
        Metric::AbstentionRate,
        test.iter().map(|d| d.abstention[j]).sum::<f64>() / k,
    );
}

impl Harness for CrcHarness<'_> {
    type Point = Point;

    fn point(&self, spec: &ExperimentSpec) -> Result<Point> {
        // a proxy_bias sweep writes into the spec's own setup
        let proxy_bias = if spec.sweep_param() == Some(super::SweepParam::ProxyBias) {
            spec.crc.proxy_bias
        } else {
            self.setup.proxy_bias
        };
        Ok(Point {
            lambdas: (0..=self.setup.grid_max).map(|j| j as f64).collect(),
            proxy_bias,
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
        let real: Vec<Vec<f64>> = (0..spec.n)
            .map(|_| self.datapoint(&mut rng, None).loss)
            .collect();
        let synth: Vec<Vec<f64>> = match self.setup.proxy {
            SyntheticProxy::Zero => vec![vec![0.0; p.lambdas.len()]; spec.big_n],
            SyntheticProxy::Biased => (0..spec.big_n)
                .map(|_| self.datapoint(&mut rng, Some(p.proxy_bias)).loss)
                .collect(),
        };
        let test: Vec<Datapoint> = (0..self.setup.test_size)
            .map(|_| self.datapoint(&mut rng, None))
            .collect();

        let real_grid = self.grid(&p.lambdas, real)?;
        let synth_grid = self.grid(&p.lambdas, synth)?;
        let pooled_grid = real_grid.pooled_with(&synth_grid)?;
        let base = crc_lambda(&real_grid, spec.alpha)?;
        let guard = crc_lambda(&real_grid, spec.alpha + spec.epsilon)?;
        let pooled = crc_lambda(&pooled_grid, spec.alpha)?;
        let action = combine(Variant::TwoSided, &base, &pooled, &guard)?;
        out.check_sandwich(&base, &action, &guard)?;

        evaluate(out, Method::OnlyReal, &base, &test);
        evaluate(out, Method::Gespi, &action, &test);
        if spec.big_n > 0 {
            evaluate(
                out,
                Method::OnlySynth,
                &crc_lambda(&synth_grid, spec.alpha)?,
                &test,
            );
        }
        Ok(())
    }
}

/// Held-out risk and abstention rate of risk-controlling thresholds chosen
/// from real, synthetic and pooled loss grids.
pub fn run_crc_experiment(spec: &ExperimentSpec, setup: &CrcSetup) -> Result<MetricsTable> {
    expect_task(spec, &[Task::RiskControl])?;
    run_harness(spec, &CrcHarness { setup })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn datapoint_rows_are_valid_losses() {
        let setup = CrcSetup::default();
        let h = CrcHarness { setup: &setup };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let d = h.datapoint(&mut rng, Some(0.3));
            assert_eq!(d.loss.len(), 101);
            assert!(d.loss.windows(2).all(|w| w[1] <= w[0]));
            assert!(d.abstention.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(d.abstention[0], 0.0);
            assert!(d.loss.iter().all(|&l| (0.0..=1.0).contains(&l)));
        }
    }

    #[test]
    fn real_only_controls_risk() {
        let mut spec = ExperimentSpec::default_for(Task::RiskControl);
        spec.alpha = 0.1;
        spec.inner_trials = 40;
        spec.outer_reps = 20;
        spec.big_n = 100;
        let t = run_crc_experiment(&spec, &spec.crc).unwrap();
        assert_eq!(t.sandwich_violations, 0);
        let row = t.get(0.02, Method::OnlyReal, Metric::Risk).unwrap();
        assert!(row.mean <= 0.1 + row.mc_tolerance(), "{row:?}");
        assert!(t.rows.iter().all(|r| (0.0..=1.0).contains(&r.mean)));
    }
}
