//! The guarded synthetic-data wrapper.
//!
//! A base procedure is run three times: on the real data at level `alpha`
//! (base), on real data at the relaxed level `alpha + epsilon` (guardrail),
//! and on real followed by synthetic data at level `alpha` (pooled). The
//! one-sided wrapper returns `pooled ∧ guardrail`; the two-sided wrapper
//! returns `base ∨ (pooled ∧ guardrail)`, which always lies between the base
//! and guardrail actions when the procedure is monotone in its level.

use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_quantile, ScoreSample};
use crate::error::{check_level, domain, Result};
use crate::lattice::{Lattice, RejectionSet, ThresholdAction};
use crate::numeric::derive_seed;

/// An inference procedure mapping a dataset and a level to an action.
///
/// Implementations must be permutation-invariant in `data`: the wrapper
/// pools by concatenating real then synthetic records.
pub trait BaseProcedure {
    type Record: Clone;
    type Action: Lattice;

    fn run(&self, data: &[Self::Record], level: f64, seed: u64) -> Result<Self::Action>;

    /// Whether `run(D, a1) ⪯ run(D, a2)` for `a1 <= a2` at fixed data and seed.
    fn monotone_in_level(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    OneSided,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GespiConfig {
    alpha: f64,
    epsilon: f64,
    variant: Variant,
    seed: u64,
}

impl GespiConfig {
    pub fn new(alpha: f64, epsilon: f64, variant: Variant, seed: u64) -> Result<Self> {
        check_level("alpha", alpha)?;
        if epsilon.is_nan() || epsilon < 0.0 {
            return domain(format!("epsilon must be nonnegative, got {epsilon}"));
        }
        if alpha + epsilon >= 1.0 {
            return domain(format!(
                "alpha + epsilon must be below 1, got {}",
                alpha + epsilon
            ));
        }
        Ok(Self {
            alpha,
            epsilon,
            variant,
            seed,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn guard_level(&self) -> f64 {
        self.alpha + self.epsilon
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Seed handed to the runs on real data. Base and guardrail share it so
    /// that a randomized procedure stays monotone in its level.
    pub fn real_seed(&self) -> u64 {
        derive_seed(self.seed, &[0])
    }

    /// Seed for the pooled run, independent of [`Self::real_seed`].
    pub fn pooled_seed(&self) -> u64 {
        derive_seed(self.seed, &[1])
    }
}

/// The wrapper's action together with the three component actions.
#[derive(Debug, Clone, PartialEq)]
pub struct GespiOutput<A> {
    pub action: A,
    pub base_action: A,
    pub guardrail_action: A,
    pub pooled_action: A,
}

impl<A: Lattice> GespiOutput<A> {
    /// `base ⪯ action ⪯ guardrail`.
    pub fn sandwich_holds(&self) -> Result<bool> {
        Ok(self.base_action.leq(&self.action)? && self.action.leq(&self.guardrail_action)?)
    }
}

/// Combine already computed component actions.
pub fn combine<A: Lattice>(variant: Variant, base: &A, pooled: &A, guard: &A) -> Result<A> {
    let guarded = pooled.meet(guard)?;
    match variant {
        Variant::OneSided => Ok(guarded),
        Variant::TwoSided => base.join(&guarded),
    }
}

/// Run all three component procedures and combine them.
pub fn gespi<P: BaseProcedure>(
    proc: &P,
    real: &[P::Record],
    synth: &[P::Record],
    cfg: &GespiConfig,
) -> Result<GespiOutput<P::Action>> {
    if real.is_empty() {
        return domain("real dataset is empty");
    }
    let pooled_data: Vec<P::Record> = real.iter().chain(synth).cloned().collect();
    let base_action = proc.run(real, cfg.alpha, cfg.real_seed())?;
    let guardrail_action = proc.run(real, cfg.guard_level(), cfg.real_seed())?;
    let pooled_action = proc.run(&pooled_data, cfg.alpha, cfg.pooled_seed())?;
    let action = combine(cfg.variant, &base_action, &pooled_action, &guardrail_action)?;
    Ok(GespiOutput {
        action,
        base_action,
        guardrail_action,
        pooled_action,
    })
}

/// `pooled ∧ guardrail`, regardless of the variant in `cfg`.
pub fn gespi_one_sided<P: BaseProcedure>(
    proc: &P,
    real: &[P::Record],
    synth: &[P::Record],
    cfg: &GespiConfig,
) -> Result<GespiOutput<P::Action>> {
    gespi(proc, real, synth, &cfg.with_variant(Variant::OneSided))
}

/// `base ∨ (pooled ∧ guardrail)`, regardless of the variant in `cfg`.
pub fn gespi_two_sided<P: BaseProcedure>(
    proc: &P,
    real: &[P::Record],
    synth: &[P::Record],
    cfg: &GespiConfig,
) -> Result<GespiOutput<P::Action>> {
    gespi(proc, real, synth, &cfg.with_variant(Variant::TwoSided))
}

/// Split conformal prediction as a base procedure over nonconformity scores.
#[derive(Debug, Clone, Copy, Default)]
pub struct SplitConformal;

impl BaseProcedure for SplitConformal {
    type Record = f64;
    type Action = ThresholdAction;

    fn run(&self, data: &[f64], level: f64, _seed: u64) -> Result<ThresholdAction> {
        conformal_quantile(&ScoreSample::new(data.to_vec())?, level)
    }
}

/// Conformal score threshold of the wrapper; `s <= threshold` is coverage.
pub fn gespi_conformal_threshold(
    real_scores: &[f64],
    synth_scores: &[f64],
    cfg: &GespiConfig,
) -> Result<ThresholdAction> {
    Ok(gespi(&SplitConformal, real_scores, synth_scores, cfg)?.action)
}

/// `s_real ∪ (s_pooled ∩ s_guard)`.
pub fn gespi_rejection_set(
    s_real: &RejectionSet,
    s_pooled: &RejectionSet,
    s_guard: &RejectionSet,
) -> Result<RejectionSet> {
    combine(Variant::TwoSided, s_real, s_pooled, s_guard)
}
