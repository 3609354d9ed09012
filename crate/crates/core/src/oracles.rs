//! Exact and brute-force companions to the inference procedures: total
//! variation distances, the Pinsker-type bound for the median test, order
//! statistic laws, the rank distribution behind the `r_delta` rule and a
//! Monte-Carlo estimator of the sandwich failure probability `tau`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{quantile_index, SlackRule};
use crate::error::{check_level, domain, Result};
use crate::gespi::{BaseProcedure, GespiConfig, Variant};
use crate::lattice::Lattice;
use crate::numeric::{binom_pmf, derive_seed, PROB_TOL};

/// A finitely supported distribution on the reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    support: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != probs.len() {
            return domain("support and probabilities must be nonempty and of equal length");
        }
        if support.iter().any(|x| !x.is_finite()) || support.windows(2).any(|w| w[0] >= w[1]) {
            return domain("support must be finite, sorted and distinct");
        }
        if probs.iter().any(|p| p.is_nan() || *p < 0.0) {
            return domain("probabilities must be nonnegative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return domain(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { support, probs })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cdf(&self) -> Vec<f64> {
        crate::numeric::cdf(&self.probs)
            .into_iter()
            .map(|c| c.min(1.0))
            .collect()
    }

    /// Draw by inverse CDF.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let cdf = self.cdf();
        let i = cdf.partition_point(|&c| c <= u).min(self.support.len() - 1);
        self.support[i]
    }

    fn mass_at(&self, x: f64) -> f64 {
        match self.support.binary_search_by(|s| s.total_cmp(&x)) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }
}

/// Total variation distance between two discrete distributions.
pub fn tv_discrete(p: &DiscreteDist, q: &DiscreteDist) -> f64 {
    let mut xs: Vec<f64> = p.support.iter().chain(&q.support).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    0.5 * xs
        .iter()
        .map(|&x| (p.mass_at(x) - q.mass_at(x)).abs())
        .sum::<f64>()
}

/// Exact total variation between `Binom(n, p)` and `Binom(n, q)`.
pub fn tv_binomial(n: u64, p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return domain(format!(
            "binomial parameters must lie in [0, 1], got {p} and {q}"
        ));
    }
    let (a, b) = (binom_pmf(n, p), binom_pmf(n, q));
    Ok((0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0))
}

/// `sqrt(n / (2 q (1 - q))) |p - q|`, an upper bound on [`tv_binomial`].
pub fn pinsker_bound(n: u64, p: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("q must lie in (0, 1), got {q}"));
    }
    Ok((n as f64 / (2.0 * q * (1.0 - q))).sqrt() * (p - q).abs())
}

/// Law of the `r`-th smallest of `n` iid draws from `base`.
pub fn order_statistic_dist(base: &DiscreteDist, n: usize, r: usize) -> Result<DiscreteDist> {
    if r == 0 || r > n {
        return domain(format!("order statistic rank {r} outside 1..={n}"));
    }
    // P(X_(r) <= x) = P(Binom(n, F(x)) >= r)
    let at_most: Vec<f64> = base
        .cdf()
        .into_iter()
        .map(|f| binom_pmf(n as u64, f)[r..].iter().sum::<f64>().min(1.0))
        .collect();
    let mut probs: Vec<f64> = at_most
        .iter()
        .scan(0.0, |prev, &c| {
            let p = (c - *prev).max(0.0);
            *prev = c;
            Some(p)
        })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    DiscreteDist::new(base.support.clone(), probs)
}

/// Averaged order-statistic total variation
/// `(1/(n+1)) sum_{r=1}^{n+1} TV(P_(r), Q_(r))` over `n + 1` draws.
pub fn conformal_gap_bound(p: &DiscreteDist, q: &DiscreteDist, n: usize) -> Result<f64> {
    if n > 50 {
        return domain("conformal gap bound is an oracle for n <= 50");
    }
    let draws = n + 1;
    let mut total = 0.0;
    for r in 1..=draws {
        total += tv_discrete(
            &order_statistic_dist(p, draws, r)?,
            &order_statistic_dist(q, draws, r)?,
        );
    }
    Ok(total / draws as f64)
}

/// Empirical rank counts: `counts[t-1][k-1]` is how often the `t`-th smallest
/// of `n` real scores had rank `k` among all `n + N` scores.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCounts {
    pub n: usize,
    pub big_n: usize,
    pub trials: u64,
    pub counts: Vec<Vec<u64>>,
}

impl RankCounts {
    /// Empirical `P(R_t <= k_max)`.
    pub fn cdf(&self, t: usize, k_max: usize) -> f64 {
        let k_max = k_max.min(self.n + self.big_n);
        self.counts[t - 1][..k_max].iter().sum::<u64>() as f64 / self.trials as f64
    }

    pub fn pmf(&self, t: usize) -> Vec<f64> {
        self.counts[t - 1]
            .iter()
            .map(|&c| c as f64 / self.trials as f64)
            .collect()
    }
}

const RANK_CHUNK: u64 = 4096;

/// Simulate the ranks of all real order statistics within the pooled
/// sample. Continuous iid scores make the set of real ranks a uniformly
/// random `n`-subset of `1..=n+N`, which is what is drawn here.
pub fn rank_counts(n: usize, big_n: usize, trials: u64, seed: u64) -> Result<RankCounts> {
    if n == 0 || trials == 0 {
        return domain("rank oracle needs n >= 1 and trials >= 1");
    }
    let total = n + big_n;
    let chunks = trials.div_ceil(RANK_CHUNK);
    let partials: Vec<Vec<Vec<u64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c]));
            let mut counts = vec![vec![0u64; total]; n];
            let todo = RANK_CHUNK.min(trials - c * RANK_CHUNK);
            for _ in 0..todo {
                let mut ranks = rand::seq::index::sample(&mut rng, total, n).into_vec();
                ranks.sort_unstable();
                for (t, &k) in ranks.iter().enumerate() {
                    counts[t][k] += 1;
                }
            }
            counts
        })
        .collect();
    let mut counts = vec![vec![0u64; total]; n];
    for part in partials {
        for (row, prow) in counts.iter_mut().zip(part) {
            for (c, p) in row.iter_mut().zip(prow) {
                *c += p;
            }
        }
    }
    Ok(RankCounts {
        n,
        big_n,
        trials,
        counts,
    })
}

/// Empirical pmf of the rank of the `r`-th smallest real score among the
/// pooled sample; entry `k - 1` is the frequency of rank `k`.
pub fn rank_distribution_oracle(
    n: usize,
    big_n: usize,
    r: usize,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    if r == 0 || r > n {
        return domain(format!("order statistic rank {r} outside 1..={n}"));
    }
    Ok(rank_counts(n, big_n, trials, seed)?.pmf(r))
}

/// The `r_delta` rule evaluated with empirical rank probabilities.
pub fn empirical_slack_rule(counts: &RankCounts, alpha: f64, delta: f64) -> Result<SlackRule> {
    check_level("alpha", alpha)?;
    let n = counts.n;
    let pooled_rank = quantile_index(n + counts.big_n, alpha).max(0) as usize;
    for r in 1..=n {
        let t = n + 1 - r;
        let probability = counts.cdf(t, pooled_rank);
        if probability >= 1.0 - delta {
            return Ok(SlackRule {
                r_delta: r,
                guard_rank: t,
                pooled_rank,
                probability,
                epsilon: r as f64 / (n as f64 + 1.0) - alpha,
            });
        }
    }
    domain("no r reaches the requested empirical probability")
}

/// Monte-Carlo estimate of `tau` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub tau: f64,
    pub std_error: f64,
    pub trials: u64,
}

/// Estimate `tau = 1 - P(A_a(D) ⪯ A_a(D ∪ D~) ⪯ A_{a+e}(D))` with all data
/// iid from `sampler`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_tau<P, S>(
    proc: &P,
    sampler: S,
    n: usize,
    big_n: usize,
    alpha: f64,
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> Result<TauEstimate>
where
    P: BaseProcedure + Sync,
    S: Fn(&mut ChaCha8Rng) -> P::Record + Sync,
{
    if trials == 0 || n == 0 {
        return domain("tau estimation needs trials >= 1 and n >= 1");
    }
    let failures: Result<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let trial_seed = derive_seed(seed, &[i]);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, &[2]));
            let pooled: Vec<P::Record> = (0..n + big_n).map(|_| sampler(&mut rng)).collect();
            let cfg = GespiConfig::new(alpha, epsilon, Variant::TwoSided, trial_seed)?;
            let real = &pooled[..n];
            let base = proc.run(real, alpha, cfg.real_seed())?;
            let guard = proc.run(real, cfg.guard_level(), cfg.real_seed())?;
            let pool = proc.run(&pooled, alpha, cfg.pooled_seed())?;
            Ok(!(base.leq(&pool)? && pool.leq(&guard)?))
        })
        .collect();
    let k = failures?.into_iter().filter(|&f| f).count();
    let tau = k as f64 / trials as f64;
    Ok(TauEstimate {
        tau,
        std_error: (tau * (1.0 - tau) / trials as f64).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{rank_pmf, slack_rule};
    use crate::hypothesis::SignTest;
    use crate::lattice::BinaryDecision;

    fn two_point(p: f64) -> DiscreteDist {
        DiscreteDist::new(vec![0.0, 1.0], vec![1.0 - p, p]).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_binomial(50, 0.6, 0.6).unwrap(), 0.0);
        assert!((tv_binomial(1, 0.6, 0.55).unwrap() - 0.05).abs() < 1e-15);
        // reference value from an independent pmf implementation
        assert!((tv_binomial(50, 0.6, 0.55).unwrap() - 0.280_174_544_329_927_56).abs() < 1e-12);
        assert!(tv_binomial(5, -0.1, 0.5).is_err());
    }

    #[test]
    fn tv_binomial_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 200_000usize;
        let mut hist_p = vec![0f64; 51];
        let mut hist_q = vec![0f64; 51];
        let bp = rand_distr::Binomial::new(50, 0.6).unwrap();
        let bq = rand_distr::Binomial::new(50, 0.55).unwrap();
        for _ in 0..draws {
            hist_p[rng.sample(bp) as usize] += 1.0;
            hist_q[rng.sample(bq) as usize] += 1.0;
        }
        let emp = 0.5
            * hist_p
                .iter()
                .zip(&hist_q)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
            / draws as f64;
        // plug-in TV is biased upward by finite-sample noise; allow a small band
        assert!(
            (emp - tv_binomial(50, 0.6, 0.55).unwrap()).abs() < 0.01,
            "{emp}"
        );
    }

    #[test]
    fn pinsker_examples() {
        assert_eq!(pinsker_bound(10, 0.3, 0.3).unwrap(), 0.0);
        assert!((pinsker_bound(50, 0.6, 0.55).unwrap() - 0.502_518_907_629_606).abs() < 1e-12);
        assert!(pinsker_bound(5, 0.5, 0.0).is_err());
        assert!(pinsker_bound(5, 0.5, 1.0).is_err());
    }

    #[test]
    fn order_statistic_examples() {
        let base = DiscreteDist::new(vec![1.0, 2.0, 4.0], vec![0.2, 0.5, 0.3]).unwrap();
        let first = order_statistic_dist(&base, 1, 1).unwrap();
        assert!(first
            .probs()
            .iter()
            .zip(base.probs())
            .all(|(a, b)| (a - b).abs() < 1e-12));
        for n in 1..6 {
            let d = order_statistic_dist(&two_point(0.3), n, n).unwrap();
            assert!((d.probs()[1] - (1.0 - 0.7f64.powi(n as i32))).abs() < 1e-12);
        }
        assert!(order_statistic_dist(&base, 3, 0).is_err());
        assert!(order_statistic_dist(&base, 3, 4).is_err());
    }

    #[test]
    fn order_statistic_matches_enumeration() {
        let base = DiscreteDist::new(vec![1.0, 2.0, 4.0], vec![0.2, 0.5, 0.3]).unwrap();
        let mut exact = [0.0; 3];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut v = [a, b, c];
                    v.sort();
                    exact[v[1]] += base.probs()[a] * base.probs()[b] * base.probs()[c];
                }
            }
        }
        let d = order_statistic_dist(&base, 3, 2).unwrap();
        for (p, e) in d.probs().iter().zip(exact) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn order_statistic_sums_and_stochastic_order() {
        let base = DiscreteDist::new(vec![-1.0, 0.0, 0.5, 3.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let n = 7;
        let mut prev: Option<Vec<f64>> = None;
        for r in 1..=n {
            let d = order_statistic_dist(&base, n, r).unwrap();
            assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let cdf = d.cdf();
            if let Some(p) = &prev {
                assert!(cdf.iter().zip(p).all(|(c, pc)| *c <= pc + 1e-12));
            }
            prev = Some(cdf);
        }
    }

    #[test]
    fn gap_bound_examples() {
        let p = two_point(0.3);
        assert_eq!(conformal_gap_bound(&p, &p, 10).unwrap(), 0.0);
        let a = DiscreteDist::new(vec![0.0], vec![1.0]).unwrap();
        let b = DiscreteDist::new(vec![1.0], vec![1.0]).unwrap();
        assert!((conformal_gap_bound(&a, &b, 4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_bound_matches_enumeration_two_point() {
        // n = 2: three draws, order statistics enumerated over 8 outcomes
        let (p, q) = (0.3, 0.6);
        let dist = |prob: f64| {
            let mut laws = vec![[0.0f64; 2]; 3];
            for mask in 0..8u32 {
                let ones = mask.count_ones() as usize;
                let w = prob.powi(ones as i32) * (1.0 - prob).powi(3 - ones as i32);
                for (r, law) in laws.iter_mut().enumerate() {
                    // r-th smallest (0-based) is 1 iff r >= 3 - ones
                    law[usize::from(r >= 3 - ones)] += w;
                }
            }
            laws
        };
        let (lp, lq) = (dist(p), dist(q));
        let expected: f64 = (0..3)
            .map(|r| 0.5 * ((lp[r][0] - lq[r][0]).abs() + (lp[r][1] - lq[r][1]).abs()))
            .sum::<f64>()
            / 3.0;
        let got = conformal_gap_bound(&two_point(p), &two_point(q), 2).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn rank_oracle_examples() {
        let pmf = rank_distribution_oracle(4, 0, 3, 1000, 1).unwrap();
        assert_eq!(pmf[2], 1.0);

        let pmf = rank_distribution_oracle(1, 1, 1, 100_000, 2).unwrap();
        let se = (0.25f64 / 100_000.0).sqrt();
        assert!((pmf[0] - 0.5).abs() < 3.0 * se);

        let trials = 200_000;
        let pmf = rank_distribution_oracle(5, 10, 3, trials, 3).unwrap();
        for k in 1..=15 {
            let exact = rank_pmf(5, 10, 3, k);
            let se = (exact * (1.0 - exact) / trials as f64).sqrt();
            assert!((pmf[k - 1] - exact).abs() <= 3.0 * se + 1e-12, "k={k}");
        }
    }

    #[test]
    fn rank_counts_are_reproducible() {
        let a = rank_counts(5, 7, 10_000, 9).unwrap();
        let b = rank_counts(5, 7, 10_000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_rule_agrees_on_small_case() {
        let counts = rank_counts(5, 10, 200_000, 4).unwrap();
        let exact = slack_rule(5, 10, 0.1, 0.1).unwrap();
        let emp = empirical_slack_rule(&counts, 0.1, 0.1).unwrap();
        assert_eq!(exact.r_delta, emp.r_delta);
    }

    #[test]
    fn tau_examples() {
        let sampler = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
        let est = estimate_tau(&SignTest, sampler, 2, 1, 0.2, 0.7, 2000, 3).unwrap();
        assert_eq!(est.tau, 0.0);

        let est = estimate_tau(&SignTest, sampler, 5, 0, 0.1, 0.0, 500, 3).unwrap();
        assert_eq!(est.tau, 0.0);

        let est = estimate_tau(&SignTest, sampler, 3, 4, 0.1, 0.05, 1, 3).unwrap();
        assert!(est.tau == 0.0 || est.tau == 1.0);
    }

    #[test]
    fn tau_zero_case_holds_exhaustively() {
        // every sign pattern of 2 real and 1 synthetic observation
        for mask in 0..8u32 {
            let data: Vec<f64> = (0..3)
                .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let base = SignTest.run(&data[..2], 0.2, 0).unwrap();
            let guard = SignTest.run(&data[..2], 0.9, 0).unwrap();
            let pooled = SignTest.run(&data, 0.2, 0).unwrap();
            assert!(base.leq(&pooled).unwrap() && pooled.leq(&guard).unwrap());
            assert_eq!(base, BinaryDecision::Accept);
        }
    }

    #[test]
    fn discrete_dist_validation() {
        assert!(DiscreteDist::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDist::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![0.0], vec![1.0, 0.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = two_point(0.25);
        let ones = (0..40_000).filter(|_| d.sample(&mut rng) == 1.0).count();
        assert!((ones as f64 / 40_000.0 - 0.25).abs() < 0.01);
    }
}
