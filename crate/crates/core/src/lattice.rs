//! Ordered action spaces with meet and join.
//!
//! Every inference output the library produces lives in one of three
//! distributive lattices. The order `a ⪯ b` reads "a is at most as risky as
//! b": a bounded, monotone loss never decreases along it. Meet is the more
//! conservative combination, join the less conservative one.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A partially ordered action space where every pair has a meet and a join.
///
/// Combining actions from different instances of the same space (rejection
/// sets over different `m`, thresholds with opposite directions) is a
/// [`Error::Mismatch`].
pub trait Lattice: Sized + Clone + PartialEq + fmt::Debug {
    fn meet(&self, other: &Self) -> Result<Self>;
    fn join(&self, other: &Self) -> Result<Self>;
    fn leq(&self, other: &Self) -> Result<bool>;
}

/// Accept (0) or reject (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryDecision {
    Accept,
    Reject,
}

impl BinaryDecision {
    pub fn from_bool(reject: bool) -> Self {
        if reject {
            Self::Reject
        } else {
            Self::Accept
        }
    }

    pub fn is_reject(self) -> bool {
        self == Self::Reject
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl Lattice for BinaryDecision {
    fn meet(&self, other: &Self) -> Result<Self> {
        Ok(Self::from_bool(self.is_reject() && other.is_reject()))
    }

    fn join(&self, other: &Self) -> Result<Self> {
        Ok(Self::from_bool(self.is_reject() || other.is_reject()))
    }

    fn leq(&self, other: &Self) -> Result<bool> {
        Ok(self.as_u8() <= other.as_u8())
    }
}

/// A set of rejected hypotheses, indexed `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RejectionSet {
    m: usize,
    members: BTreeSet<usize>,
}

impl RejectionSet {
    pub fn new(m: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("rejection set needs m >= 1".into()));
        }
        let members: BTreeSet<usize> = members.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&j| j == 0 || j > m) {
            return Err(Error::Domain(format!(
                "hypothesis index {bad} outside 1..={m}"
            )));
        }
        Ok(Self { m, members })
    }

    pub fn empty(m: usize) -> Result<Self> {
        Self::new(m, [])
    }

    pub fn full(m: usize) -> Result<Self> {
        Self::new(m, 1..=m)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.contains(&j)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.m == other.m {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "rejection sets over m={} and m={}",
                self.m, other.m
            )))
        }
    }
}

impl Lattice for RejectionSet {
    fn meet(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self {
            m: self.m,
            members: self.members.intersection(&other.members).copied().collect(),
        })
    }

    fn join(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self {
            m: self.m,
            members: self.members.union(&other.members).copied().collect(),
        })
    }

    fn leq(&self, other: &Self) -> Result<bool> {
        self.same_space(other)?;
        Ok(self.members.is_subset(&other.members))
    }
}

/// Which end of the threshold axis is the conservative one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Conservativeness {
    LargerIsMoreConservative,
    SmallerIsMoreConservative,
}

/// A scalar-indexed action (conformal quantile, risk-control λ).
///
/// Thresholds are extended reals; NaN is rejected. Equality is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAction {
    threshold: f64,
    direction: Conservativeness,
}

impl ThresholdAction {
    pub fn new(threshold: f64, direction: Conservativeness) -> Result<Self> {
        if threshold.is_nan() {
            return Err(Error::Domain("threshold must not be NaN".into()));
        }
        Ok(Self {
            threshold,
            direction,
        })
    }

    /// Convenience constructor for conformal thresholds.
    pub fn upper(threshold: f64) -> Result<Self> {
        Self::new(threshold, Conservativeness::LargerIsMoreConservative)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn direction(&self) -> Conservativeness {
        self.direction
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.direction == other.direction {
            Ok(())
        } else {
            Err(Error::Mismatch(format!(
                "threshold directions {:?} and {:?}",
                self.direction, other.direction
            )))
        }
    }

    fn pick(&self, other: &Self, conservative: bool) -> Self {
        use Conservativeness::*;
        let larger = self.threshold >= other.threshold;
        let take_self = match (self.direction, conservative) {
            (LargerIsMoreConservative, true) | (SmallerIsMoreConservative, false) => larger,
            (LargerIsMoreConservative, false) | (SmallerIsMoreConservative, true) => !larger,
        };
        if take_self {
            *self
        } else {
            *other
        }
    }
}

impl Lattice for ThresholdAction {
    fn meet(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(self.pick(other, true))
    }

    fn join(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(self.pick(other, false))
    }

    fn leq(&self, other: &Self) -> Result<bool> {
        self.same_space(other)?;
        Ok(match self.direction {
            Conservativeness::LargerIsMoreConservative => self.threshold >= other.threshold,
            Conservativeness::SmallerIsMoreConservative => self.threshold <= other.threshold,
        })
    }
}

/// Any of the supported actions, for code that handles them uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartialAction {
    Binary(BinaryDecision),
    Set(RejectionSet),
    Threshold(ThresholdAction),
}

impl PartialAction {
    fn kind(&self) -> &'static str {
        match self {
            Self::Binary(_) => "binary decision",
            Self::Set(_) => "rejection set",
            Self::Threshold(_) => "threshold",
        }
    }

    fn mismatch(&self, other: &Self) -> Error {
        Error::Mismatch(format!("{} combined with {}", self.kind(), other.kind()))
    }
}

macro_rules! dispatch {
    ($a:expr, $b:expr, $op:ident, $wrap:expr) => {
        match ($a, $b) {
            (PartialAction::Binary(x), PartialAction::Binary(y)) => {
                x.$op(y).map(|v| $wrap(PartialAction::Binary(v)))
            }
            (PartialAction::Set(x), PartialAction::Set(y)) => {
                x.$op(y).map(|v| $wrap(PartialAction::Set(v)))
            }
            (PartialAction::Threshold(x), PartialAction::Threshold(y)) => {
                x.$op(y).map(|v| $wrap(PartialAction::Threshold(v)))
            }
            (a, b) => Err(a.mismatch(b)),
        }
    };
}

impl Lattice for PartialAction {
    fn meet(&self, other: &Self) -> Result<Self> {
        dispatch!(self, other, meet, |v| v)
    }

    fn join(&self, other: &Self) -> Result<Self> {
        dispatch!(self, other, join, |v| v)
    }

    fn leq(&self, other: &Self) -> Result<bool> {
        match (self, other) {
            (Self::Binary(x), Self::Binary(y)) => x.leq(y),
            (Self::Set(x), Self::Set(y)) => x.leq(y),
            (Self::Threshold(x), Self::Threshold(y)) => x.leq(y),
            (a, b) => Err(a.mismatch(b)),
        }
    }
}

impl From<BinaryDecision> for PartialAction {
    fn from(v: BinaryDecision) -> Self {
        Self::Binary(v)
    }
}

impl From<RejectionSet> for PartialAction {
    fn from(v: RejectionSet) -> Self {
        Self::Set(v)
    }
}

impl From<ThresholdAction> for PartialAction {
    fn from(v: ThresholdAction) -> Self {
        Self::Threshold(v)
    }
}

/// A bounded loss that is monotone along the action order.
pub trait LossSpec<A, V> {
    /// Uniform upper bound `c` on the loss.
    fn bound(&self) -> f64;
    fn evaluate(&self, action: &A, point: &V) -> f64;
}

/// Miscoverage of a conformal threshold: `1{score > threshold}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MiscoverageLoss;

impl LossSpec<ThresholdAction, f64> for MiscoverageLoss {
    fn bound(&self) -> f64 {
        1.0
    }

    fn evaluate(&self, action: &ThresholdAction, score: &f64) -> f64 {
        f64::from(*score > action.threshold())
    }
}

/// Type I error of a single test evaluated at a null configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct RejectionLoss;

impl LossSpec<BinaryDecision, ()> for RejectionLoss {
    fn bound(&self) -> f64 {
        1.0
    }

    fn evaluate(&self, action: &BinaryDecision, _: &()) -> f64 {
        f64::from(action.as_u8())
    }
}

/// k-FWER indicator: at least `k` true nulls among the rejections.
#[derive(Debug, Clone, Copy)]
pub struct KFwerLoss {
    pub k: usize,
}

impl LossSpec<RejectionSet, BTreeSet<usize>> for KFwerLoss {
    fn bound(&self) -> f64 {
        1.0
    }

    fn evaluate(&self, action: &RejectionSet, nulls: &BTreeSet<usize>) -> f64 {
        f64::from(action.members().intersection(nulls).count() >= self.k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BinaryDecision::*;

    fn set(m: usize, xs: &[usize]) -> RejectionSet {
        RejectionSet::new(m, xs.iter().copied()).unwrap()
    }

    fn up(t: f64) -> ThresholdAction {
        ThresholdAction::upper(t).unwrap()
    }

    fn all_binary() -> Vec<BinaryDecision> {
        vec![Accept, Reject]
    }

    fn all_sets(m: usize) -> Vec<RejectionSet> {
        (0..1usize << m)
            .map(|mask| {
                set(
                    m,
                    &(1..=m)
                        .filter(|j| mask >> (j - 1) & 1 == 1)
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    #[test]
    fn binary_examples() {
        assert_eq!(Reject.meet(&Accept).unwrap(), Accept);
        assert_eq!(Reject.join(&Accept).unwrap(), Reject);
        assert!(Accept.leq(&Reject).unwrap());
        assert!(!Reject.leq(&Accept).unwrap());
    }

    #[test]
    fn rejection_set_examples() {
        assert_eq!(
            set(3, &[1, 2]).meet(&set(3, &[2, 3])).unwrap(),
            set(3, &[2])
        );
        assert_eq!(set(3, &[1]).join(&set(3, &[3])).unwrap(), set(3, &[1, 3]));
        assert!(!set(3, &[1, 2]).leq(&set(3, &[1])).unwrap());
        assert!(set(3, &[1]).leq(&set(3, &[1, 2])).unwrap());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(up(2.0).meet(&up(3.5)).unwrap(), up(3.5));
        assert_eq!(up(2.0).join(&up(3.5)).unwrap(), up(2.0));
        assert!(up(5.0).leq(&up(1.0)).unwrap());
        let lo = |t| ThresholdAction::new(t, Conservativeness::SmallerIsMoreConservative).unwrap();
        assert_eq!(lo(2.0).meet(&lo(3.5)).unwrap(), lo(2.0));
        assert_eq!(lo(2.0).join(&lo(3.5)).unwrap(), lo(3.5));
        assert!(lo(1.0).leq(&lo(5.0)).unwrap());
    }

    #[test]
    fn infinite_thresholds_order_normally() {
        let inf = up(f64::INFINITY);
        assert_eq!(inf.meet(&up(3.0)).unwrap(), inf);
        assert_eq!(inf.join(&up(3.0)).unwrap(), up(3.0));
        assert!(inf.leq(&up(f64::NEG_INFINITY)).unwrap());
        assert!(ThresholdAction::upper(f64::NAN).is_err());
    }

    #[test]
    fn mismatched_spaces_are_errors() {
        assert!(matches!(
            set(3, &[1]).meet(&set(4, &[1])),
            Err(Error::Mismatch(_))
        ));
        let lo = ThresholdAction::new(1.0, Conservativeness::SmallerIsMoreConservative).unwrap();
        assert!(matches!(up(1.0).join(&lo), Err(Error::Mismatch(_))));
        let a = PartialAction::from(Reject);
        let b = PartialAction::from(up(1.0));
        assert!(matches!(a.leq(&b), Err(Error::Mismatch(_))));
        assert_eq!(
            PartialAction::from(Reject).meet(&Accept.into()).unwrap(),
            PartialAction::Binary(Accept)
        );
    }

    #[test]
    fn rejection_set_validates_members() {
        assert!(RejectionSet::new(3, [4]).is_err());
        assert!(RejectionSet::new(3, [0]).is_err());
        assert!(RejectionSet::new(0, []).is_err());
    }

    fn check_laws<A: Lattice>(a: &A, b: &A, c: &A) {
        // distributivity
        let lhs = a.meet(b).unwrap().join(c).unwrap();
        let rhs = a.join(c).unwrap().meet(&b.join(c).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
        // idempotence, commutativity, associativity
        assert_eq!(&a.meet(a).unwrap(), a);
        assert_eq!(&a.join(a).unwrap(), a);
        assert_eq!(a.meet(b).unwrap(), b.meet(a).unwrap());
        assert_eq!(a.join(b).unwrap(), b.join(a).unwrap());
        assert_eq!(
            a.meet(b).unwrap().meet(c).unwrap(),
            a.meet(&b.meet(c).unwrap()).unwrap()
        );
        assert_eq!(
            a.join(b).unwrap().join(c).unwrap(),
            a.join(&b.join(c).unwrap()).unwrap()
        );
        // order consistency and bounds
        let le = a.leq(b).unwrap();
        assert_eq!(le, &a.meet(b).unwrap() == a);
        assert_eq!(le, &a.join(b).unwrap() == b);
        let m = a.meet(b).unwrap();
        let j = a.join(b).unwrap();
        assert!(m.leq(a).unwrap() && m.leq(b).unwrap());
        assert!(a.leq(&j).unwrap() && b.leq(&j).unwrap());
        if c.leq(a).unwrap() && c.leq(b).unwrap() {
            assert!(c.leq(&m).unwrap());
        }
        if a.leq(c).unwrap() && b.leq(c).unwrap() {
            assert!(j.leq(c).unwrap());
        }
    }

    #[test]
    fn laws_exhaustive_binary() {
        let xs = all_binary();
        for a in &xs {
            for b in &xs {
                for c in &xs {
                    check_laws(a, b, c);
                }
            }
        }
    }

    #[test]
    fn laws_exhaustive_rejection_sets() {
        for m in 1..=4 {
            let xs = all_sets(m);
            for a in &xs {
                for b in &xs {
                    for c in &xs {
                        check_laws(a, b, c);
                    }
                }
            }
        }
    }

    fn threshold_value() -> impl Strategy<Value = f64> {
        prop_oneof![
            Just(f64::INFINITY),
            Just(f64::NEG_INFINITY),
            (-5i32..5).prop_map(f64::from),
            -1e3f64..1e3,
        ]
    }

    proptest! {
        #[test]
        fn laws_randomized_thresholds(a in threshold_value(), b in threshold_value(), c in threshold_value(), larger in any::<bool>()) {
            let dir = if larger {
                Conservativeness::LargerIsMoreConservative
            } else {
                Conservativeness::SmallerIsMoreConservative
            };
            let t = |x| ThresholdAction::new(x, dir).unwrap();
            check_laws(&t(a), &t(b), &t(c));
            prop_assert_eq!(t(a).meet(&t(b)).unwrap().direction(), dir);
        }

        #[test]
        fn miscoverage_is_monotone(a in threshold_value(), b in threshold_value(), s in -1e3f64..1e3) {
            let (a, b) = (up(a), up(b));
            let loss = MiscoverageLoss;
            if a.leq(&b).unwrap() {
                prop_assert!(loss.evaluate(&a, &s) <= loss.evaluate(&b, &s));
            }
            prop_assert!((0.0..=loss.bound()).contains(&loss.evaluate(&a, &s)));
        }
    }

    #[test]
    fn kfwer_loss_is_monotone() {
        let nulls: BTreeSet<usize> = [1, 3].into_iter().collect();
        let loss = KFwerLoss { k: 1 };
        let xs = all_sets(3);
        for a in &xs {
            for b in &xs {
                if a.leq(b).unwrap() {
                    assert!(loss.evaluate(a, &nulls) <= loss.evaluate(b, &nulls));
                }
            }
        }
        assert_eq!(RejectionLoss.evaluate(&Reject, &()), 1.0);
    }
}
