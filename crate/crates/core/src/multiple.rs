//! Family-wise error control over p-value vectors.

use serde::{Deserialize, Serialize};

use crate::error::{check_level, domain, Error, Result};
use crate::gespi::gespi_rejection_set;
use crate::lattice::RejectionSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pvalues: Vec<f64>,
}

impl PValueVector {
    pub fn new(pvalues: Vec<f64>) -> Result<Self> {
        if pvalues.is_empty() {
            return domain("p-value vector is empty");
        }
        if let Some((i, p)) = pvalues
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p <= 1.0))
        {
            return domain(format!("p-value {} = {p} outside (0, 1]", i + 1));
        }
        Ok(Self { pvalues })
    }

    pub fn m(&self) -> usize {
        self.pvalues.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.pvalues
    }

    /// Indices (0-based) ordered by p-value, ties by index.
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.m()).collect();
        idx.sort_by(|&a, &b| self.pvalues[a].total_cmp(&self.pvalues[b]).then(a.cmp(&b)));
        idx
    }
}

/// Simes-Hochberg step-up procedure.
pub fn hochberg(pv: &PValueVector, alpha: f64) -> Result<RejectionSet> {
    check_level("alpha", alpha)?;
    let m = pv.m();
    let order = pv.order();
    let k = (1..=m)
        .rev()
        .find(|&k| pv.pvalues[order[k - 1]] <= alpha / (m - k + 1) as f64);
    let members = order[..k.unwrap_or(0)].iter().map(|&i| i + 1);
    RejectionSet::new(m, members)
}

/// Generalized Bonferroni rule for the k-FWER: reject `H_j` when `p_j <= k alpha / m`.
pub fn bonferroni_kfwer(pv: &PValueVector, alpha: f64, k: usize) -> Result<RejectionSet> {
    check_level("alpha", alpha)?;
    let m = pv.m();
    if k == 0 || k > m {
        return domain(format!("k must lie in 1..={m}, got {k}"));
    }
    let cut = k as f64 * alpha / m as f64;
    RejectionSet::new(m, (1..=m).filter(|&j| pv.pvalues[j - 1] <= cut))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FwerRule {
    Hochberg,
    Bonferroni { k: usize },
}

impl FwerRule {
    pub fn apply(&self, pv: &PValueVector, alpha: f64) -> Result<RejectionSet> {
        match *self {
            Self::Hochberg => hochberg(pv, alpha),
            Self::Bonferroni { k } => bonferroni_kfwer(pv, alpha, k),
        }
    }
}

/// The wrapper for multiple testing: the rule at `alpha` on real and pooled
/// p-values and at `alpha + epsilon` on real p-values, combined as
/// `S_real ∪ (S_pooled ∩ S_guard)`.
pub fn gespi_multiple(
    pv_real_alpha: &PValueVector,
    pv_pooled_alpha: &PValueVector,
    pv_real_guard: &PValueVector,
    alpha: f64,
    epsilon: f64,
    rule: FwerRule,
) -> Result<RejectionSet> {
    let m = pv_real_alpha.m();
    if pv_pooled_alpha.m() != m || pv_real_guard.m() != m {
        return Err(Error::Mismatch(format!(
            "p-value vectors of lengths {m}, {}, {}",
            pv_pooled_alpha.m(),
            pv_real_guard.m()
        )));
    }
    if epsilon.is_nan() || epsilon < 0.0 || alpha + epsilon >= 1.0 {
        return domain(format!("invalid epsilon {epsilon} for alpha {alpha}"));
    }
    let s_real = rule.apply(pv_real_alpha, alpha)?;
    let s_pooled = rule.apply(pv_pooled_alpha, alpha)?;
    let s_guard = rule.apply(pv_real_guard, alpha + epsilon)?;
    gespi_rejection_set(&s_real, &s_pooled, &s_guard)
}

/// Local test for an intersection hypothesis in the closure principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalTest {
    /// Reject `H_I` when some `p_(j) <= alpha / (|I| - j + 1)`.
    StepUp,
    /// Simes: reject `H_I` when some `p_(j) <= j alpha / |I|`.
    Simes,
}

impl LocalTest {
    fn rejects(self, sorted: &[f64], alpha: f64) -> bool {
        let size = sorted.len() as f64;
        sorted.iter().enumerate().any(|(j, &p)| {
            let j = j as f64 + 1.0;
            match self {
                Self::StepUp => p <= alpha / (size - j + 1.0),
                Self::Simes => p <= j * alpha / size,
            }
        })
    }
}

/// Closed testing by brute force over all `2^m - 1` intersection hypotheses.
/// Intended as an oracle for small `m`.
pub fn closed_testing(pv: &PValueVector, alpha: f64, local: LocalTest) -> Result<RejectionSet> {
    let m = pv.m();
    if m > 16 {
        return domain("closed testing oracle limited to m <= 16");
    }
    let rejected_mask: Vec<bool> = (1u32..1 << m)
        .map(|mask| {
            let mut sub: Vec<f64> = (0..m)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| pv.pvalues[i])
                .collect();
            sub.sort_by(f64::total_cmp);
            local.rejects(&sub, alpha)
        })
        .collect();
    let members = (0..m).filter(|&j| {
        (1u32..1 << m)
            .filter(|mask| mask >> j & 1 == 1)
            .all(|mask| rejected_mask[mask as usize - 1])
    });
    RejectionSet::new(m, members.map(|j| j + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use proptest::prelude::*;

    fn pv(xs: &[f64]) -> PValueVector {
        PValueVector::new(xs.to_vec()).unwrap()
    }

    fn set(m: usize, xs: &[usize]) -> RejectionSet {
        RejectionSet::new(m, xs.iter().copied()).unwrap()
    }

    #[test]
    fn hochberg_examples() {
        assert!(hochberg(&pv(&[1., 1., 1.]), 0.05).unwrap().is_empty());
        assert_eq!(
            hochberg(&pv(&[0.01, 0.04, 0.03]), 0.05).unwrap(),
            set(3, &[1, 2, 3])
        );
        assert_eq!(hochberg(&pv(&[0.05]), 0.05).unwrap(), set(1, &[1]));
        assert!(hochberg(&pv(&[0.06]), 0.05).unwrap().is_empty());
        // step-up: the largest qualifying k wins even if smaller ones fail
        assert_eq!(
            hochberg(&pv(&[0.04, 0.045]), 0.05).unwrap(),
            set(2, &[1, 2])
        );
        assert_eq!(
            hochberg(&pv(&[0.02, 0.03, 0.06]), 0.05).unwrap(),
            set(3, &[])
        );
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(
            bonferroni_kfwer(&pv(&[0.004, 0.2]), 0.01, 1).unwrap(),
            set(2, &[1])
        );
        assert_eq!(
            bonferroni_kfwer(&pv(&[0.04, 0.06, 0.05]), 0.05, 3).unwrap(),
            set(3, &[1, 3])
        );
        assert!(bonferroni_kfwer(&pv(&[1., 1.]), 0.05, 2)
            .unwrap()
            .is_empty());
        assert!(bonferroni_kfwer(&pv(&[0.1]), 0.05, 0).is_err());
        assert!(bonferroni_kfwer(&pv(&[0.1]), 0.05, 2).is_err());
    }

    #[test]
    fn pvalue_validation() {
        assert!(PValueVector::new(vec![]).is_err());
        assert!(PValueVector::new(vec![0.0]).is_err());
        assert!(PValueVector::new(vec![1.1]).is_err());
        assert!(PValueVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn gespi_multiple_examples() {
        let real = pv(&[0.01, 0.2, 0.3]);
        let out = gespi_multiple(&real, &real, &real, 0.05, 0.0, FwerRule::Hochberg).unwrap();
        assert_eq!(out, hochberg(&real, 0.05).unwrap());

        // pooled rejects everything, guardrail nothing
        let pooled = pv(&[0.001, 0.001, 0.001]);
        let real = pv(&[0.01, 0.9, 0.9]);
        let out = gespi_multiple(&real, &pooled, &real, 0.05, 0.0, FwerRule::Hochberg).unwrap();
        assert_eq!(out, set(3, &[1]));

        let s_real = set(3, &[1]);
        let s_pooled = set(3, &[1, 2, 3]);
        let s_guard = set(3, &[1, 2]);
        assert_eq!(
            gespi_rejection_set(&s_real, &s_pooled, &s_guard).unwrap(),
            set(3, &[1, 2])
        );

        assert!(matches!(
            gespi_multiple(
                &pv(&[0.1]),
                &pv(&[0.1, 0.2]),
                &pv(&[0.1]),
                0.05,
                0.0,
                FwerRule::Hochberg
            ),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn closed_simes_can_reject_more_than_hochberg() {
        let p = pv(&[0.02, 0.03, 0.06]);
        assert_eq!(
            closed_testing(&p, 0.05, LocalTest::Simes).unwrap(),
            set(3, &[1])
        );
        assert!(hochberg(&p, 0.05).unwrap().is_empty());
        assert!(closed_testing(&p, 0.05, LocalTest::StepUp)
            .unwrap()
            .is_empty());
    }

    fn grid_p() -> impl Strategy<Value = f64> {
        (1u32..100).prop_map(|i| f64::from(i) / 100.0)
    }

    proptest! {
        #[test]
        fn hochberg_monotone_in_alpha(ps in prop::collection::vec(grid_p(), 1..8), a in 0.01f64..0.5, b in 0.01f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = pv(&ps);
            prop_assert!(hochberg(&p, lo).unwrap().leq(&hochberg(&p, hi).unwrap()).unwrap());
        }

        #[test]
        fn hochberg_is_permutation_equivariant(ps in prop::collection::vec(0.001f64..1.0, 1..8), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let m = ps.len();
            let mut perm: Vec<usize> = (0..m).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<f64> = perm.iter().map(|&i| ps[i]).collect();
            let orig = hochberg(&pv(&ps), 0.1).unwrap();
            let moved = hochberg(&pv(&permuted), 0.1).unwrap();
            let mapped = RejectionSet::new(m, moved.members().iter().map(|&j| perm[j - 1] + 1)).unwrap();
            prop_assert_eq!(orig, mapped);
        }

        #[test]
        fn gespi_multiple_sandwich(real in prop::collection::vec(grid_p(), 4), pooled in prop::collection::vec(grid_p(), 4), eps in 0.0f64..0.3) {
            let (r, p) = (pv(&real), pv(&pooled));
            let out = gespi_multiple(&r, &p, &r, 0.1, eps, FwerRule::Hochberg).unwrap();
            prop_assert!(hochberg(&r, 0.1).unwrap().leq(&out).unwrap());
            prop_assert!(out.leq(&hochberg(&r, 0.1 + eps).unwrap()).unwrap());
        }
    }
}
