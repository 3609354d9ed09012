//! Split conformal prediction, conformal p-values and conformal risk control.

use serde::{Deserialize, Serialize};

use crate::error::{check_level, domain, Error, Result};
use crate::gespi::{combine, BaseProcedure, GespiConfig};
use crate::lattice::{Conservativeness, ThresholdAction};
use crate::numeric::{big_ratio, ceil_index, choose_exact, ln_choose, PROB_TOL};

/// Finite nonconformity scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    scores: Vec<f64>,
}

impl ScoreSample {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return domain(format!("score {i} is not finite ({})", scores[i]));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Rank of the conformal quantile: `ceil((1 - alpha)(n + 1))`.
pub fn quantile_index(n: usize, alpha: f64) -> i64 {
    ceil_index((1.0 - alpha) * (n as f64 + 1.0))
}

/// The `ceil((1-alpha)(n+1))`-th smallest score, or `+inf` past `n`.
pub fn conformal_quantile(sample: &ScoreSample, alpha: f64) -> Result<ThresholdAction> {
    check_level("alpha", alpha)?;
    let n = sample.len();
    if n == 0 {
        return domain("conformal quantile of an empty sample");
    }
    let k = quantile_index(n, alpha);
    if k > n as i64 {
        return ThresholdAction::upper(f64::INFINITY);
    }
    let k = k.max(1) as usize;
    let mut buf = sample.scores.clone();
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    ThresholdAction::upper(*kth)
}

/// `1` when the test score falls inside the closed prediction set.
pub fn coverage_indicator(threshold: &ThresholdAction, test_score: f64) -> u8 {
    debug_assert_eq!(
        threshold.direction(),
        Conservativeness::LargerIsMoreConservative
    );
    u8::from(test_score <= threshold.threshold())
}

/// `(1 + #{cal_i >= s}) / (n + 1)`.
pub fn conformal_pvalue(cal: &ScoreSample, test_score: f64) -> Result<f64> {
    if cal.is_empty() {
        return domain("conformal p-value needs calibration scores");
    }
    let ge = cal.scores.iter().filter(|&&c| c >= test_score).count();
    Ok((1 + ge) as f64 / (cal.len() + 1) as f64)
}

/// Calibration scores sorted once for repeated p-value queries.
#[derive(Debug, Clone)]
pub struct SortedCalibration {
    sorted: Vec<f64>,
}

impl SortedCalibration {
    pub fn new(cal: &ScoreSample) -> Result<Self> {
        if cal.is_empty() {
            return domain("conformal p-value needs calibration scores");
        }
        let mut sorted = cal.scores.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn pvalue(&self, test_score: f64) -> f64 {
        let below = self.sorted.partition_point(|&c| c < test_score);
        (1 + self.sorted.len() - below) as f64 / (self.sorted.len() + 1) as f64
    }
}

/// How each datapoint's loss moves as λ grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossMonotonicity {
    NonIncreasing,
    NonDecreasing,
}

impl LossMonotonicity {
    pub fn conservativeness(self) -> Conservativeness {
        match self {
            Self::NonIncreasing => Conservativeness::LargerIsMoreConservative,
            Self::NonDecreasing => Conservativeness::SmallerIsMoreConservative,
        }
    }
}

/// Per-datapoint losses evaluated on a shared grid of candidate λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGrid {
    lambdas: Vec<f64>,
    /// Row-major, one row of `lambdas.len()` losses per datapoint.
    losses: Vec<f64>,
    bound: f64,
    direction: LossMonotonicity,
}

impl RiskGrid {
    pub fn new(
        lambdas: Vec<f64>,
        rows: Vec<Vec<f64>>,
        bound: f64,
        direction: LossMonotonicity,
    ) -> Result<Self> {
        let width = lambdas.len();
        let mut losses = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return domain(format!(
                    "loss row {i} has {} entries, expected {width}",
                    row.len()
                ));
            }
            losses.extend(row);
        }
        Self::from_flat(lambdas, losses, bound, direction)
    }

    fn from_flat(
        lambdas: Vec<f64>,
        losses: Vec<f64>,
        bound: f64,
        direction: LossMonotonicity,
    ) -> Result<Self> {
        if lambdas.is_empty() {
            return domain("risk grid has no candidate lambdas");
        }
        if lambdas.iter().any(|l| !l.is_finite()) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return domain("grid lambdas must be finite and strictly increasing");
        }
        if !(bound.is_finite() && bound > 0.0) {
            return domain(format!("loss bound must be positive, got {bound}"));
        }
        let width = lambdas.len();
        for (i, row) in losses.chunks(width).enumerate() {
            if let Some(l) = row.iter().find(|&&l| !(0.0..=bound).contains(&l)) {
                return domain(format!("loss {l} of row {i} outside [0, {bound}]"));
            }
            let ok = row.windows(2).all(|w| match direction {
                LossMonotonicity::NonIncreasing => w[1] <= w[0],
                LossMonotonicity::NonDecreasing => w[1] >= w[0],
            });
            if !ok {
                return domain(format!("loss row {i} is not {direction:?} in lambda"));
            }
        }
        Ok(Self {
            lambdas,
            losses,
            bound,
            direction,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn direction(&self) -> LossMonotonicity {
        self.direction
    }

    pub fn n(&self) -> usize {
        self.losses.len() / self.lambdas.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.lambdas.len();
        &self.losses[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.losses.chunks(self.lambdas.len())
    }

    fn same_axis(&self, other: &Self) -> Result<()> {
        if self.lambdas != other.lambdas
            || self.direction != other.direction
            || self.bound != other.bound
        {
            return Err(Error::Mismatch(
                "risk grids differ in lambdas, bound or direction".into(),
            ));
        }
        Ok(())
    }

    /// Real rows followed by synthetic rows.
    pub fn pooled_with(&self, synth: &RiskGrid) -> Result<RiskGrid> {
        self.same_axis(synth)?;
        let mut losses = self.losses.clone();
        losses.extend_from_slice(&synth.losses);
        Ok(RiskGrid {
            losses,
            ..self.clone()
        })
    }

    /// Sum of losses at each grid λ.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.lambdas.len()];
        for row in self.rows() {
            for (s, l) in sums.iter_mut().zip(row) {
                *s += l;
            }
        }
        sums
    }
}

fn select_lambda(
    lambdas: &[f64],
    sums: &[f64],
    n: usize,
    bound: f64,
    direction: LossMonotonicity,
    alpha: f64,
) -> Result<ThresholdAction> {
    let ok = |j: usize| (sums[j] + bound) / (n as f64 + 1.0) <= alpha + PROB_TOL;
    let idx = match direction {
        LossMonotonicity::NonIncreasing => (0..lambdas.len())
            .find(|&j| ok(j))
            .unwrap_or(lambdas.len() - 1),
        LossMonotonicity::NonDecreasing => (0..lambdas.len()).rev().find(|&j| ok(j)).unwrap_or(0),
    };
    ThresholdAction::new(lambdas[idx], direction.conservativeness())
}

/// Risk-controlling λ: the least conservative grid value whose inflated
/// empirical risk `(sum + B) / (n + 1)` is at most `alpha`; the most
/// conservative grid value when none qualifies.
pub fn crc_lambda(grid: &RiskGrid, alpha: f64) -> Result<ThresholdAction> {
    check_level("alpha", alpha)?;
    select_lambda(
        &grid.lambdas,
        &grid.column_sums(),
        grid.n(),
        grid.bound,
        grid.direction,
        alpha,
    )
}

/// The wrapper applied to conformal risk control.
pub fn gespi_crc(
    real_grid: &RiskGrid,
    pooled_grid: &RiskGrid,
    cfg: &GespiConfig,
) -> Result<ThresholdAction> {
    real_grid.same_axis(pooled_grid)?;
    let n = real_grid.n();
    if pooled_grid.n() < n || pooled_grid.losses[..real_grid.losses.len()] != real_grid.losses[..] {
        return Err(Error::Mismatch(
            "pooled grid must start with the real rows".into(),
        ));
    }
    if n == 0 {
        return domain("real risk grid is empty");
    }
    let base = crc_lambda(real_grid, cfg.alpha())?;
    let guard = crc_lambda(real_grid, cfg.guard_level())?;
    let pooled = crc_lambda(pooled_grid, cfg.alpha())?;
    combine(cfg.variant(), &base, &pooled, &guard)
}

/// Conformal risk control as a base procedure over loss rows.
#[derive(Debug, Clone)]
pub struct RiskControl {
    pub lambdas: Vec<f64>,
    pub bound: f64,
    pub direction: LossMonotonicity,
}

impl BaseProcedure for RiskControl {
    type Record = Vec<f64>;
    type Action = ThresholdAction;

    fn run(&self, data: &[Vec<f64>], level: f64, _seed: u64) -> Result<ThresholdAction> {
        let grid = RiskGrid::new(
            self.lambdas.clone(),
            data.to_vec(),
            self.bound,
            self.direction,
        )?;
        crc_lambda(&grid, level)
    }
}

/// `P(R_t <= k_max)`: probability that the `t`-th smallest of `n` real
/// scores ranks at most `k_max` among `n + N` exchangeable scores.
pub fn rank_cdf(n: usize, big_n: usize, t: usize, k_max: usize) -> f64 {
    let total = n + big_n;
    let k_max = k_max.min(total);
    if t == 0 || t > n || k_max < t {
        return 0.0;
    }
    if total <= 64 {
        let num = (t..=k_max).fold(num_bigint::BigUint::from(0u32), |acc, k| {
            acc + choose_exact((k - 1) as u64, (t - 1) as u64)
                * choose_exact((total - k) as u64, (n - t) as u64)
        });
        return big_ratio(&num, &choose_exact(total as u64, n as u64));
    }
    let ln_den = ln_choose(total as u64, n as u64);
    let s: f64 = (t..=k_max.min(big_n + t))
        .map(|k| {
            (ln_choose((k - 1) as u64, (t - 1) as u64)
                + ln_choose((total - k) as u64, (n - t) as u64)
                - ln_den)
                .exp()
        })
        .sum();
    s.min(1.0)
}

/// Exact `P(R_t = k)`.
pub fn rank_pmf(n: usize, big_n: usize, t: usize, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    rank_cdf(n, big_n, t, k) - rank_cdf(n, big_n, t, k - 1)
}

/// The `r_delta` rule and the guardrail order statistic it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackRule {
    /// Smallest `r` in `1..=n` meeting the confidence requirement.
    pub r_delta: usize,
    /// Order statistic of the real scores used by the guardrail, `n + 1 - r_delta`.
    pub guard_rank: usize,
    /// Rank cutoff `ceil((1 - alpha)(N + n + 1))` of the pooled quantile.
    pub pooled_rank: usize,
    /// `P(R_{guard_rank} <= pooled_rank)` at the selected `r_delta`.
    pub probability: f64,
    pub epsilon: f64,
}

/// Choose `r_delta` so that the guardrail quantile falls below the pooled
/// quantile with probability at least `1 - delta` when real and synthetic
/// scores are exchangeable, then set `epsilon = r_delta / (n + 1) - alpha`.
pub fn slack_rule(n: usize, big_n: usize, alpha: f64, delta: f64) -> Result<SlackRule> {
    if n == 0 || big_n == 0 {
        return domain("epsilon_from_delta needs n >= 1 and N >= 1");
    }
    check_level("alpha", alpha)?;
    if !(0.0..=1.0).contains(&delta) {
        return domain(format!("delta must lie in [0, 1], got {delta}"));
    }
    let pooled_rank = quantile_index(n + big_n, alpha).max(0) as usize;
    let mut best = 0.0f64;
    for r in 1..=n {
        let t = n + 1 - r;
        let probability = rank_cdf(n, big_n, t, pooled_rank);
        best = best.max(probability);
        if probability >= 1.0 - delta - PROB_TOL {
            return Ok(SlackRule {
                r_delta: r,
                guard_rank: t,
                pooled_rank,
                probability,
                epsilon: r as f64 / (n as f64 + 1.0) - alpha,
            });
        }
    }
    domain(format!(
        "no r in 1..={n} reaches probability {}; best achieved {best}",
        1.0 - delta
    ))
}

/// `epsilon = r_delta / (n + 1) - alpha`; may be negative for large `delta`.
pub fn epsilon_from_delta(n: usize, big_n: usize, alpha: f64, delta: f64) -> Result<f64> {
    slack_rule(n, big_n, alpha, delta).map(|r| r.epsilon)
}
