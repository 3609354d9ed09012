//! Single-hypothesis tests usable as base procedures.
//!
//! Randomized tests take their uniform draw explicitly; the
//! [`BaseProcedure`] adapters derive it from the seed they are handed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_pvalue, ScoreSample};
use crate::error::{check_level, domain, Result};
use crate::gespi::BaseProcedure;
use crate::lattice::BinaryDecision;
use crate::numeric::{binom_pmf, cdf, choose_exact, upper_tails, PROB_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BernoulliSample {
    successes: u64,
    trials: u64,
}

impl BernoulliSample {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if successes > trials {
            return domain(format!("{successes} successes out of {trials} trials"));
        }
        Ok(Self { successes, trials })
    }

    pub fn from_signs(xs: &[f64]) -> Self {
        let w = xs.iter().filter(|&&x| x > 0.0).count() as u64;
        Self {
            successes: w,
            trials: xs.len() as u64,
        }
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrinomialCounts {
    pub wins: u64,
    pub ties: u64,
    pub losses: u64,
}

impl TrinomialCounts {
    pub fn n(&self) -> u64 {
        self.wins + self.ties + self.losses
    }
}

impl std::ops::Add for TrinomialCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            wins: self.wins + o.wins,
            ties: self.ties + o.ties,
            losses: self.losses + o.losses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleData {
    pub group_a: Vec<f64>,
    pub group_b: Vec<f64>,
}

/// Outcome of a single test.
///
/// For randomized tests `pvalue` is the conservative tail `P(W >= w)`; the
/// decision may reject at the boundary count even when it exceeds the level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub decision: BinaryDecision,
    pub pvalue: Option<f64>,
    pub randomization_used: bool,
}

impl TestDecision {
    fn from_pvalue(p: f64, alpha: f64) -> Self {
        Self {
            decision: BinaryDecision::from_bool(p <= alpha),
            pvalue: Some(p),
            randomization_used: false,
        }
    }

    pub fn is_reject(&self) -> bool {
        self.decision.is_reject()
    }
}

/// `min{k : P(Binom(n, p) <= k) >= level}`.
pub fn binomial_quantile(n: u64, p: f64, level: f64) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("p must lie in (0, 1), got {p}"));
    }
    check_level("level", level)?;
    let c = cdf(&binom_pmf(n, p));
    Ok(c.iter()
        .position(|&x| x >= level - PROB_TOL)
        .unwrap_or(n as usize) as u64)
}

/// Sign test for a non-positive median: reject when the count of positive
/// observations exceeds the `1 - alpha` quantile of `Binom(n, 1/2)`.
pub fn sign_test(sample: &BernoulliSample, alpha: f64) -> Result<TestDecision> {
    check_level("alpha", alpha)?;
    let k = binomial_quantile(sample.trials, 0.5, 1.0 - alpha)?;
    let pmf = binom_pmf(sample.trials, 0.5);
    let w = sample.successes as usize;
    let pvalue: f64 = pmf[w..].iter().sum::<f64>().min(1.0);
    Ok(TestDecision {
        decision: BinaryDecision::from_bool(sample.successes > k),
        pvalue: Some(pvalue),
        randomization_used: false,
    })
}

/// Exact-level one-sided binomial test of `p = p0` against `p > p0`.
///
/// Rejects when `W > k`, and with probability `gamma` when `W = k`, where
/// `k = min{k : P(W > k) <= alpha}` and `gamma = (alpha - P(W > k)) / P(W = k)`.
#[derive(Debug, Clone)]
pub struct RandomizedBinomialTest {
    n: u64,
    cutoff: u64,
    gamma: f64,
    pmf: Vec<f64>,
    /// `P(W >= w)`.
    tails_ge: Vec<f64>,
}

impl RandomizedBinomialTest {
    pub fn new(n: u64, p0: f64, alpha: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0 < 1.0) {
            return domain(format!("p0 must lie in (0, 1), got {p0}"));
        }
        check_level("alpha", alpha)?;
        let pmf = binom_pmf(n, p0);
        let gt = upper_tails(&pmf);
        let cutoff = gt
            .iter()
            .position(|&t| t <= alpha + PROB_TOL)
            .unwrap_or(n as usize);
        let at = pmf[cutoff];
        let gamma = if at > 0.0 {
            ((alpha - gt[cutoff]) / at).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let tails_ge = gt.iter().zip(&pmf).map(|(g, p)| (g + p).min(1.0)).collect();
        Ok(Self {
            n,
            cutoff: cutoff as u64,
            gamma,
            pmf,
            tails_ge,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn cutoff(&self) -> u64 {
        self.cutoff
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Probability of rejecting when `W = w`.
    pub fn reject_probability(&self, w: u64) -> f64 {
        use std::cmp::Ordering::*;
        match w.cmp(&self.cutoff) {
            Greater => 1.0,
            Equal => self.gamma,
            Less => 0.0,
        }
    }

    pub fn decide(&self, w: u64, u: f64) -> Result<TestDecision> {
        if w > self.n {
            return domain(format!("{w} successes out of {} trials", self.n));
        }
        let reject = w > self.cutoff || (w == self.cutoff && u < self.gamma);
        Ok(TestDecision {
            decision: BinaryDecision::from_bool(reject),
            pvalue: Some(self.tails_ge[w as usize]),
            randomization_used: true,
        })
    }
}

pub fn randomized_binomial_test(
    sample: &BernoulliSample,
    p0: f64,
    alpha: f64,
    u: f64,
) -> Result<TestDecision> {
    if !(0.0..1.0).contains(&u) {
        return domain(format!("uniform draw must lie in [0, 1), got {u}"));
    }
    RandomizedBinomialTest::new(sample.trials, p0, alpha)?.decide(sample.successes, u)
}

/// Win-rate test: conditional on ties, wins among decisive comparisons are
/// `Binom(wins + losses, 1/2)` under the null of no advantage.
pub fn winrate_test(counts: &TrinomialCounts, alpha: f64, u: f64) -> Result<TestDecision> {
    check_level("alpha", alpha)?;
    let decisive = counts.wins + counts.losses;
    if decisive == 0 {
        return Ok(TestDecision {
            decision: BinaryDecision::Accept,
            pvalue: Some(1.0),
            randomization_used: false,
        });
    }
    randomized_binomial_test(&BernoulliSample::new(counts.wins, decisive)?, 0.5, alpha, u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationMode {
    MonteCarlo,
    Exhaustive,
}

/// Upper bound on the number of group assignments enumerated exhaustively.
pub const EXHAUSTIVE_CAP: u64 = 1_000_000;

/// Standardized mean difference with population variances; falls back to
/// the raw difference when both groups are constant.
pub fn standardized_difference(a: &[f64], b: &[f64]) -> f64 {
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        (mean, var / n)
    };
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    let denom = (va + vb).sqrt();
    if denom > 0.0 {
        (ma - mb) / denom
    } else {
        ma - mb
    }
}

fn at_least(stat: f64, observed: f64) -> bool {
    stat >= observed - 1e-12 * observed.abs().max(1.0)
}

/// One-sided permutation test of `mean_A > mean_B`.
pub fn permutation_test(
    data: &TwoSampleData,
    n_perms: usize,
    mode: PermutationMode,
    alpha: f64,
    seed: u64,
) -> Result<TestDecision> {
    let (na, nb) = (data.group_a.len(), data.group_b.len());
    if na == 0 || nb == 0 {
        return domain("permutation test needs two nonempty groups");
    }
    if data
        .group_a
        .iter()
        .chain(&data.group_b)
        .any(|x| !x.is_finite())
    {
        return domain("permutation test data must be finite");
    }
    let observed = standardized_difference(&data.group_a, &data.group_b);
    let pooled: Vec<f64> = data.group_a.iter().chain(&data.group_b).copied().collect();
    let p = match mode {
        PermutationMode::MonteCarlo => {
            if n_perms == 0 {
                return domain("Monte-Carlo permutation test needs n_perms >= 1");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut buf = pooled;
            let mut hits = 0usize;
            for _ in 0..n_perms {
                buf.shuffle(&mut rng);
                let (a, b) = buf.split_at(na);
                if at_least(standardized_difference(a, b), observed) {
                    hits += 1;
                }
            }
            (1 + hits) as f64 / (n_perms + 1) as f64
        }
        PermutationMode::Exhaustive => {
            let total = choose_exact((na + nb) as u64, na as u64);
            if total > EXHAUSTIVE_CAP.into() {
                return domain(format!(
                    "exhaustive enumeration of C({}, {na}) assignments exceeds {EXHAUSTIVE_CAP}; use MonteCarlo",
                    na + nb
                ));
            }
            let (hits, count) = exhaustive_count(&pooled, na, observed);
            hits as f64 / count as f64
        }
    };
    Ok(TestDecision::from_pvalue(p, alpha))
}

fn exhaustive_count(pooled: &[f64], na: usize, observed: f64) -> (u64, u64) {
    let total = pooled.len();
    let mut idx: Vec<usize> = (0..na).collect();
    let (mut hits, mut count) = (0u64, 0u64);
    let mut a = Vec::with_capacity(na);
    let mut b = Vec::with_capacity(total - na);
    loop {
        a.clear();
        b.clear();
        let mut next = 0;
        for (i, &x) in pooled.iter().enumerate() {
            if next < na && idx[next] == i {
                a.push(x);
                next += 1;
            } else {
                b.push(x);
            }
        }
        count += 1;
        if at_least(standardized_difference(&a, &b), observed) {
            hits += 1;
        }
        // advance to the next combination in lexicographic order
        let Some(pos) = (0..na).rev().find(|&i| idx[i] != i + total - na) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..na {
            idx[j] = idx[j - 1] + 1;
        }
    }
    (hits, count)
}

/// Conformal outlier test: reject when the conformal p-value is at most `alpha`.
pub fn outlier_test(cal: &ScoreSample, test_score: f64, alpha: f64) -> Result<TestDecision> {
    check_level("alpha", alpha)?;
    Ok(TestDecision::from_pvalue(
        conformal_pvalue(cal, test_score)?,
        alpha,
    ))
}

/// Uniform draw in `[0, 1)` for a randomized procedure.
pub fn uniform_from_seed(seed: u64) -> f64 {
    ChaCha8Rng::seed_from_u64(seed).random::<f64>()
}

/// Sign test over raw observations.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignTest;

impl BaseProcedure for SignTest {
    type Record = f64;
    type Action = BinaryDecision;

    fn run(&self, data: &[f64], level: f64, _seed: u64) -> Result<BinaryDecision> {
        Ok(sign_test(&BernoulliSample::from_signs(data), level)?.decision)
    }
}

/// Randomized binomial test over Bernoulli records.
#[derive(Debug, Clone, Copy)]
pub struct RandomizedBinomial {
    pub p0: f64,
}

impl BaseProcedure for RandomizedBinomial {
    type Record = bool;
    type Action = BinaryDecision;

    fn run(&self, data: &[bool], level: f64, seed: u64) -> Result<BinaryDecision> {
        let w = data.iter().filter(|&&x| x).count() as u64;
        let sample = BernoulliSample::new(w, data.len() as u64)?;
        Ok(randomized_binomial_test(&sample, self.p0, level, uniform_from_seed(seed))?.decision)
    }
}

/// Pairwise comparison of two models on one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Win,
    Tie,
    Loss,
}

pub fn tally(records: &[Comparison]) -> TrinomialCounts {
    records.iter().fold(TrinomialCounts::default(), |mut c, r| {
        match r {
            Comparison::Win => c.wins += 1,
            Comparison::Tie => c.ties += 1,
            Comparison::Loss => c.losses += 1,
        }
        c
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WinRate;

impl BaseProcedure for WinRate {
    type Record = Comparison;
    type Action = BinaryDecision;

    fn run(&self, data: &[Comparison], level: f64, seed: u64) -> Result<BinaryDecision> {
        Ok(winrate_test(&tally(data), level, uniform_from_seed(seed))?.decision)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

/// Monte-Carlo permutation test over labelled observations.
#[derive(Debug, Clone, Copy)]
pub struct Permutation {
    pub n_perms: usize,
}

impl BaseProcedure for Permutation {
    type Record = (Group, f64);
    type Action = BinaryDecision;

    fn run(&self, data: &[(Group, f64)], level: f64, seed: u64) -> Result<BinaryDecision> {
        let split = TwoSampleData {
            group_a: data
                .iter()
                .filter(|r| r.0 == Group::A)
                .map(|r| r.1)
                .collect(),
            group_b: data
                .iter()
                .filter(|r| r.0 == Group::B)
                .map(|r| r.1)
                .collect(),
        };
        Ok(permutation_test(
            &split,
            self.n_perms,
            PermutationMode::MonteCarlo,
            level,
            seed,
        )?
        .decision)
    }
}

/// Conformal outlier test of one fixed test score; records are calibration scores.
#[derive(Debug, Clone, Copy)]
pub struct OutlierTest {
    pub test_score: f64,
}

impl BaseProcedure for OutlierTest {
    type Record = f64;
    type Action = BinaryDecision;

    fn run(&self, data: &[f64], level: f64, _seed: u64) -> Result<BinaryDecision> {
        Ok(outlier_test(&ScoreSample::new(data.to_vec())?, self.test_score, level)?.decision)
    }
}
