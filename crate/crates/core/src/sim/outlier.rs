use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    expect_task, run_harness, ContaminationSpec, ExperimentSpec, Harness, Method, Metric,
    MetricsTable, Task, TrialRecord,
};
use crate::conformal::{ScoreSample, SortedCalibration};
use crate::error::{Error, Result};
use crate::gespi::{combine, Variant};
use crate::lattice::BinaryDecision;
use crate::multiple::{hochberg, PValueVector};

/// Ingested outlier data: rows split by label. When `scored`, each row holds
/// a single precomputed score; otherwise rows are feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierTable {
    pub inliers: Vec<Vec<f64>>,
    pub outliers: Vec<Vec<f64>>,
    pub scored: bool,
}

enum Population<'a> {
    Gaussian { dim: usize, shift: f64 },
    Table(&'a OutlierTable),
}

impl Population<'_> {
    fn draw<R: Rng>(&self, rng: &mut R, outlier: bool) -> Vec<f64> {
        match self {
            Self::Gaussian { dim, shift } => {
                let mu = if outlier { *shift } else { 0.0 };
                (0..*dim)
                    .map(|_| mu + rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            Self::Table(t) => {
                let rows = if outlier { &t.outliers } else { &t.inliers };
                rows[rng.random_range(0..rows.len())].clone()
            }
        }
    }

    fn scored(&self) -> bool {
        matches!(self, Self::Table(t) if t.scored)
    }
}

/// Distance to the centroid of a contaminated training sample, or the
/// ingested score itself.
enum ScoreModel {
    Centroid(Vec<f64>),
    Column,
}

impl ScoreModel {
    fn score(&self, x: &[f64]) -> f64 {
        match self {
            Self::Centroid(c) => c
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt(),
            Self::Column => x[0],
        }
    }
}

fn outlier_count(size: usize, rate: f64) -> usize {
    (size as f64 * rate).round() as usize
}

struct OutlierHarness<'a> {
    population: Population<'a>,
    /// Held only so sweeps over the rates can fall back to the explicit spec.
    cont: &'a ContaminationSpec,
}

struct Point {
    cont: ContaminationSpec,
}

/// Per-test-point p-values from each calibration set.
struct PValues {
    real: Vec<f64>,
    synth: Vec<f64>,
    pooled: Vec<f64>,
    oracle: Vec<f64>,
    is_outlier: Vec<bool>,
}

impl OutlierHarness<'_> {
    fn pvalues(&self, cont: &ContaminationSpec, rng: &mut ChaCha8Rng) -> Result<PValues> {
        let pop = &self.population;
        let model = if pop.scored() {
            ScoreModel::Column
        } else {
            let k = outlier_count(cont.training_size, cont.contamination_rate);
            let mut centroid = vec![0.0; pop.draw(rng, false).len()];
            for i in 0..cont.training_size {
                for (c, x) in centroid.iter_mut().zip(pop.draw(rng, i < k)) {
                    *c += x;
                }
            }
            centroid
                .iter_mut()
                .for_each(|c| *c /= cont.training_size as f64);
            ScoreModel::Centroid(centroid)
        };
        let mut score = |outlier: bool| model.score(&pop.draw(rng, outlier));

        let clean: Vec<f64> = (0..cont.clean_size).map(|_| score(false)).collect();
        let k = outlier_count(cont.reference_size, cont.contamination_rate);
        let mut pool: Vec<(f64, bool)> = (0..cont.reference_size)
            .map(|i| (score(i < k), i < k))
            .collect();
        let test: Vec<(f64, bool)> = (0..cont.test_inliers + cont.test_outliers)
            .map(|i| {
                let outlier = i >= cont.test_inliers;
                (score(outlier), outlier)
            })
            .collect();

        // trimming drops the most outlying scores of the pool
        pool.sort_by(|a, b| a.0.total_cmp(&b.0));
        let keep =
            cont.reference_size - (cont.reference_size as f64 * cont.trim_rate).floor() as usize;
        let synth: Vec<f64> = pool[..keep].iter().map(|p| p.0).collect();
        let mut oracle: Vec<f64> = pool.iter().filter(|p| !p.1).map(|p| p.0).collect();
        oracle.extend_from_slice(&clean);
        let mut pooled = clean.clone();
        pooled.extend_from_slice(&synth);

        let cal = |xs: Vec<f64>| -> Result<Option<SortedCalibration>> {
            if xs.is_empty() {
                Ok(None)
            } else {
                SortedCalibration::new(&ScoreSample::new(xs)?).map(Some)
            }
        };
        let (real, synth, pooled, oracle) = (cal(clean)?, cal(synth)?, cal(pooled)?, cal(oracle)?);
        let ps = |c: &Option<SortedCalibration>| -> Vec<f64> {
            match c {
                Some(c) => test.iter().map(|t| c.pvalue(t.0)).collect(),
                None => vec![1.0; test.len()],
            }
        };
        Ok(PValues {
            real: ps(&real),
            synth: ps(&synth),
            pooled: ps(&pooled),
            oracle: ps(&oracle),
            is_outlier: test.iter().map(|t| t.1).collect(),
        })
    }

    fn single(&self, spec: &ExperimentSpec, pv: &PValues, out: &mut TrialRecord) -> Result<()> {
        let (a, e) = (spec.alpha, spec.epsilon);
        let mut rejections = [[0usize; 2]; 4];
        for i in 0..pv.real.len() {
            let base = BinaryDecision::from_bool(pv.real[i] <= a);
            let guard = BinaryDecision::from_bool(pv.real[i] <= a + e);
            let pooled = BinaryDecision::from_bool(pv.pooled[i] <= a);
            let g = combine(Variant::TwoSided, &base, &pooled, &guard)?;
            out.check_sandwich(&base, &g, &guard)?;
            let col = usize::from(pv.is_outlier[i]);
            for (m, rej) in [
                base.is_reject(),
                pv.synth[i] <= a,
                pv.oracle[i] <= a,
                g.is_reject(),
            ]
            .into_iter()
            .enumerate()
            {
                rejections[m][col] += usize::from(rej);
            }
        }
        let outliers = pv.is_outlier.iter().filter(|&&o| o).count();
        let inliers = pv.is_outlier.len() - outliers;
        for (m, method) in [
            Method::OnlyReal,
            Method::OnlySynth,
            Method::Oracle,
            Method::Gespi,
        ]
        .into_iter()
        .enumerate()
        {
            if inliers > 0 {
                out.push(
                    method,
                    Metric::TypeIError,
                    rejections[m][0] as f64 / inliers as f64,
                );
            }
            if outliers > 0 {
                out.push(
                    method,
                    Metric::Power,
                    rejections[m][1] as f64 / outliers as f64,
                );
            }
        }
        Ok(())
    }

    fn batches(
        &self,
        spec: &ExperimentSpec,
        cont: &ContaminationSpec,
        pv: &PValues,
        rng: &mut ChaCha8Rng,
        out: &mut TrialRecord,
    ) -> Result<()> {
        let (a, e) = (spec.alpha, spec.epsilon);
        let mut order: Vec<usize> = (0..pv.real.len()).collect();
        order.shuffle(rng);
        let total = order.len();
        let methods = [
            Method::OnlyReal,
            Method::OnlySynth,
            Method::Oracle,
            Method::Gespi,
        ];
        let mut false_batches = [0usize; 4];
        let mut true_hits = [0usize; 4];
        for b in 0..cont.batch_count {
            let idx = &order[b * total / cont.batch_count..(b + 1) * total / cont.batch_count];
            let pick = |xs: &[f64]| PValueVector::new(idx.iter().map(|&i| xs[i]).collect());
            let base = hochberg(&pick(&pv.real)?, a)?;
            let guard = hochberg(&pick(&pv.real)?, a + e)?;
            let pooled = hochberg(&pick(&pv.pooled)?, a)?;
            let g = combine(Variant::TwoSided, &base, &pooled, &guard)?;
            out.check_sandwich(&base, &g, &guard)?;
            let sets = [
                base,
                hochberg(&pick(&pv.synth)?, a)?,
                hochberg(&pick(&pv.oracle)?, a)?,
                g,
            ];
            for (m, set) in sets.iter().enumerate() {
                let mut any_false = false;
                for &j in set.members() {
                    if pv.is_outlier[idx[j - 1]] {
                        true_hits[m] += 1;
                    } else {
                        any_false = true;
                    }
                }
                false_batches[m] += usize::from(any_false);
            }
        }
        let outliers = pv.is_outlier.iter().filter(|&&o| o).count();
        for (m, method) in methods.into_iter().enumerate() {
            out.push(
                method,
                Metric::Fwer,
                false_batches[m] as f64 / cont.batch_count as f64,
            );
            if outliers > 0 {
                out.push(method, Metric::Power, true_hits[m] as f64 / outliers as f64);
            }
        }
        Ok(())
    }
}

impl Harness for OutlierHarness<'_> {
    type Point = Point;

    fn point(&self, spec: &ExperimentSpec) -> Result<Point> {
        let mut cont = self.cont.clone();
        match spec.sweep_param() {
            Some(super::SweepParam::TrimRate) => cont.trim_rate = spec.contamination.trim_rate,
            Some(super::SweepParam::ContaminationRate) => {
                cont.contamination_rate = spec.contamination.contamination_rate
            }
            _ => {}
        }
        cont.validate()?;
        Ok(Point { cont })
    }

    fn trial(
        &self,
        spec: &ExperimentSpec,
        p: &Point,
        seed: u64,
        out: &mut TrialRecord,
    ) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pv = self.pvalues(&p.cont, &mut rng)?;
        match spec.task {
            Task::OutlierFWER => self.batches(spec, &p.cont, &pv, &mut rng, out),
            _ => self.single(spec, &pv, out),
        }
    }
}

/// Conformal outlier detection with a clean reference set and a trimmed,
/// contaminated pool as synthetic calibration data.
///
/// Data come from `cont.data` when set (see [`crate::io::read_outlier_table`]),
/// otherwise from Gaussian inliers and mean-shifted outliers.
pub fn run_outlier_experiment(
    spec: &ExperimentSpec,
    cont: &ContaminationSpec,
) -> Result<MetricsTable> {
    expect_task(spec, &[Task::OutlierSingle, Task::OutlierFWER])?;
    cont.validate()?;
    let table;
    let population = match &cont.data {
        Some(path) => {
            table = crate::io::read_outlier_table(path)?;
            if table.inliers.is_empty()
                || (table.outliers.is_empty()
                    && cont.contamination_rate + cont.test_outliers as f64 > 0.0)
            {
                return Err(Error::Ingest(format!(
                    "{}: need labelled inliers and outliers",
                    path.display()
                )));
            }
            Population::Table(&table)
        }
        None => Population::Gaussian {
            dim: cont.dim,
            shift: cont.outlier_shift / (cont.dim as f64).sqrt(),
        },
    };
    run_harness(spec, &OutlierHarness { population, cont })
}
