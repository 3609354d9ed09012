//! One-shot procedures and oracles: read inputs, run once, print a small table.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use gespi_core::conformal::{epsilon_from_delta, LossMonotonicity, RiskControl};
use gespi_core::gespi::{gespi, BaseProcedure, GespiOutput, SplitConformal};
use gespi_core::hypothesis::{
    Comparison, Group, Permutation, RandomizedBinomial, SignTest, WinRate,
};
use gespi_core::io::{
    read_pvalues, read_risk_grid, read_score_sample, read_two_sample, read_winrate_records,
};
use gespi_core::multiple::{gespi_multiple, FwerRule};
use gespi_core::oracles::{pinsker_bound, rank_distribution_oracle, tv_binomial};
use gespi_core::sim::{ItemRecord, Source};
use gespi_core::{BinaryDecision, GespiConfig, Variant};
use serde_json::{Map, Value};

use crate::{Global, OutFormat};

/// A small result table; cells are numbers or strings.
struct Rows {
    header: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Rows {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

fn text(x: impl ToString) -> Value {
    Value::String(x.to_string())
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.as_f64().map_or_else(|| n.to_string(), |x| x.to_string()),
        other => other.to_string(),
    }
}

pub(crate) fn write_stdout(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|()| out.flush())
        .context("writing to standard output")
}

fn emit_bytes(g: &Global, bytes: &[u8]) -> Result<()> {
    match &g.output {
        Some(path) => {
            std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => write_stdout(bytes),
    }
}

fn emit(g: &Global, rows: &Rows) -> Result<()> {
    let bytes = match g.format {
        OutFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&rows.header)?;
            for r in &rows.rows {
                w.write_record(r.iter().map(cell))?;
            }
            w.into_inner().context("flushing csv")?
        }
        OutFormat::Json => {
            let objects: Vec<Value> = rows
                .rows
                .iter()
                .map(|r| {
                    Value::Object(
                        rows.header
                            .iter()
                            .map(|h| h.to_string())
                            .zip(r.iter().cloned())
                            .collect::<Map<_, _>>(),
                    )
                })
                .collect();
            let mut b = serde_json::to_vec_pretty(&objects)?;
            b.push(b'\n');
            b
        }
    };
    emit_bytes(g, &bytes)
}

/// A single number: bare in CSV mode, `{"name": value}` in JSON mode.
fn emit_scalar(g: &Global, name: &str, x: f64) -> Result<()> {
    let bytes = match g.format {
        OutFormat::Csv => format!("{x}\n").into_bytes(),
        OutFormat::Json => {
            let mut b = serde_json::to_vec_pretty(&Value::Object(Map::from_iter([(
                name.to_owned(),
                num(x),
            )])))?;
            b.push(b'\n');
            b
        }
    };
    emit_bytes(g, &bytes)
}

#[derive(Args, Debug, Clone)]
pub struct Levels {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Guardrail slack.
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::TwoSided)]
    variant: VariantArg,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VariantArg {
    OneSided,
    TwoSided,
}

impl Levels {
    fn config(&self, g: &Global) -> Result<GespiConfig> {
        let variant = match self.variant {
            VariantArg::OneSided => Variant::OneSided,
            VariantArg::TwoSided => Variant::TwoSided,
        };
        Ok(GespiConfig::new(
            self.alpha,
            self.epsilon,
            variant,
            g.seed.unwrap_or(0),
        )?)
    }
}

/// Component and combined actions, one row each.
fn components<A>(
    out: &GespiOutput<A>,
    header: &[&'static str],
    show: impl Fn(&A) -> Vec<Value>,
) -> Rows {
    let mut rows = Rows::new(header);
    for (name, a) in [
        ("only_real", &out.base_action),
        ("guardrail", &out.guardrail_action),
        ("pooled", &out.pooled_action),
        ("gespi", &out.action),
    ] {
        let mut row = vec![text(name)];
        row.extend(show(a));
        rows.push(row);
    }
    rows
}

fn decision(d: &BinaryDecision) -> Vec<Value> {
    vec![text(if d.is_reject() { "reject" } else { "accept" })]
}

fn run_binary<P: BaseProcedure<Action = BinaryDecision>>(
    g: &Global,
    proc: &P,
    real: &[P::Record],
    synth: &[P::Record],
    levels: &Levels,
) -> Result<()> {
    let out = gespi(proc, real, synth, &levels.config(g)?)?;
    emit(g, &components(&out, &["method", "decision"], decision))
}

#[derive(Args, Debug)]
pub struct ConformalArgs {
    /// Real calibration scores (`value` column).
    #[arg(long)]
    real: PathBuf,
    /// Synthetic calibration scores.
    #[arg(long)]
    synth: Option<PathBuf>,
    #[command(flatten)]
    levels: Levels,
}

fn scores(path: Option<&PathBuf>) -> Result<Vec<f64>> {
    match path {
        Some(p) => Ok(read_score_sample(p)?.scores().to_vec()),
        None => Ok(Vec::new()),
    }
}

pub(crate) fn conformal(g: &Global, a: &ConformalArgs) -> Result<()> {
    let real = scores(Some(&a.real))?;
    let synth = scores(a.synth.as_ref())?;
    let out = gespi(&SplitConformal, &real, &synth, &a.levels.config(g)?)?;
    emit(
        g,
        &components(&out, &["method", "threshold"], |t| vec![num(t.threshold())]),
    )
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum DirectionArg {
    NonIncreasing,
    NonDecreasing,
}

#[derive(Args, Debug)]
pub struct CrcArgs {
    /// Real losses in long format (`point_id,lambda,loss`).
    #[arg(long)]
    real: PathBuf,
    /// Synthetic losses on the same lambda grid.
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Upper bound on every loss.
    #[arg(long, default_value_t = 1.0)]
    bound: f64,
    /// How each loss moves as lambda grows.
    #[arg(long, value_enum, default_value_t = DirectionArg::NonIncreasing)]
    direction: DirectionArg,
    #[command(flatten)]
    levels: Levels,
}

pub(crate) fn crc(g: &Global, a: &CrcArgs) -> Result<()> {
    let direction = match a.direction {
        DirectionArg::NonIncreasing => LossMonotonicity::NonIncreasing,
        DirectionArg::NonDecreasing => LossMonotonicity::NonDecreasing,
    };
    let real = read_risk_grid(&a.real, a.bound, direction)?;
    let synth_rows: Vec<Vec<f64>> = match &a.synth {
        Some(p) => {
            let s = read_risk_grid(p, a.bound, direction)?;
            ensure!(
                s.lambdas() == real.lambdas(),
                "{} uses a different lambda grid than {}",
                p.display(),
                a.real.display()
            );
            s.rows().map(<[f64]>::to_vec).collect()
        }
        None => Vec::new(),
    };
    let proc = RiskControl {
        lambdas: real.lambdas().to_vec(),
        bound: a.bound,
        direction,
    };
    let real_rows: Vec<Vec<f64>> = real.rows().map(<[f64]>::to_vec).collect();
    let out = gespi(&proc, &real_rows, &synth_rows, &a.levels.config(g)?)?;
    emit(
        g,
        &components(&out, &["method", "lambda"], |t| vec![num(t.threshold())]),
    )
}

#[derive(Subcommand, Debug)]
pub enum TestCommand {
    /// Sign test of a non-positive median on the `value` column.
    Sign {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: Option<PathBuf>,
        #[command(flatten)]
        levels: Levels,
    },
    /// Randomized exact binomial test of `p <= p0`.
    Binomial {
        #[arg(long)]
        successes: u64,
        #[arg(long)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        synth_successes: u64,
        #[arg(long, default_value_t = 0)]
        synth_trials: u64,
        #[arg(long, default_value_t = 0.5)]
        p0: f64,
        #[command(flatten)]
        levels: Levels,
    },
    /// Win-rate test of model A over model B on a records file.
    Winrate {
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        levels: Levels,
    },
    /// Monte-Carlo permutation test of `mean_A > mean_B` (`value,group` file).
    Permutation {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n_perms: usize,
        #[command(flatten)]
        levels: Levels,
    },
}

fn bernoulli(successes: u64, trials: u64) -> Result<Vec<bool>> {
    ensure!(
        successes <= trials,
        "{successes} successes out of {trials} trials"
    );
    Ok((0..trials).map(|i| i < successes).collect())
}

fn comparison(r: &ItemRecord) -> Comparison {
    match (r.model_a_correct, r.model_b_correct) {
        (true, false) => Comparison::Win,
        (false, true) => Comparison::Loss,
        _ => Comparison::Tie,
    }
}

fn labelled(path: &Path) -> Result<Vec<(Group, f64)>> {
    let d = read_two_sample(path)?;
    Ok(d.group_a
        .iter()
        .map(|&x| (Group::A, x))
        .chain(d.group_b.iter().map(|&x| (Group::B, x)))
        .collect())
}

pub(crate) fn test(g: &Global, t: &TestCommand) -> Result<()> {
    match t {
        TestCommand::Sign {
            real,
            synth,
            levels,
        } => run_binary(
            g,
            &SignTest,
            &scores(Some(real))?,
            &scores(synth.as_ref())?,
            levels,
        ),
        TestCommand::Binomial {
            successes,
            trials,
            synth_successes,
            synth_trials,
            p0,
            levels,
        } => run_binary(
            g,
            &RandomizedBinomial { p0: *p0 },
            &bernoulli(*successes, *trials)?,
            &bernoulli(*synth_successes, *synth_trials)?,
            levels,
        ),
        TestCommand::Winrate { records, levels } => {
            let records = read_winrate_records(records)?;
            let pick = |s: Source| {
                records
                    .iter()
                    .filter(|r| r.source == s)
                    .map(comparison)
                    .collect::<Vec<_>>()
            };
            run_binary(
                g,
                &WinRate,
                &pick(Source::Real),
                &pick(Source::Synthetic),
                levels,
            )
        }
        TestCommand::Permutation {
            real,
            synth,
            n_perms,
            levels,
        } => {
            ensure!(*n_perms >= 1, "--n-perms must be at least 1");
            let synth = match synth {
                Some(p) => labelled(p)?,
                None => Vec::new(),
            };
            run_binary(
                g,
                &Permutation { n_perms: *n_perms },
                &labelled(real)?,
                &synth,
                levels,
            )
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RuleArg {
    Hochberg,
    Bonferroni,
}

#[derive(Args, Debug)]
pub struct MtArgs {
    /// P-values computed from real data (`hypothesis_id,pvalue`).
    #[arg(long)]
    real: PathBuf,
    /// P-values computed from pooled real and synthetic data; same ids and order.
    #[arg(long)]
    pooled: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::Hochberg)]
    rule: RuleArg,
    /// `k` of the k-FWER for the Bonferroni rule.
    #[arg(long, default_value_t = 1)]
    k: usize,
}

pub(crate) fn mt(g: &Global, a: &MtArgs) -> Result<()> {
    let (ids, real) = read_pvalues(&a.real)?;
    let pooled = match &a.pooled {
        Some(p) => {
            let (pids, pooled) = read_pvalues(p)?;
            if pids != ids {
                bail!(
                    "{} must list the hypotheses of {} in the same order",
                    p.display(),
                    a.real.display()
                );
            }
            pooled
        }
        None => real.clone(),
    };
    let rule = match a.rule {
        RuleArg::Hochberg => FwerRule::Hochberg,
        RuleArg::Bonferroni => FwerRule::Bonferroni { k: a.k },
    };
    let only_real = rule.apply(&real, a.alpha)?;
    let combined = gespi_multiple(&real, &pooled, &real, a.alpha, a.epsilon, rule)?;
    let mut rows = Rows::new(&[
        "hypothesis_id",
        "pvalue_real",
        "pvalue_pooled",
        "reject_only_real",
        "reject_gespi",
    ]);
    for (j, id) in ids.iter().enumerate() {
        rows.push(vec![
            text(id),
            num(real.values()[j]),
            num(pooled.values()[j]),
            Value::Bool(only_real.contains(j + 1)),
            Value::Bool(combined.contains(j + 1)),
        ]);
    }
    emit(g, &rows)
}

#[derive(Subcommand, Debug)]
pub enum OracleCommand {
    /// Total variation between Binom(n, p) and Binom(n, q).
    TvBinomial {
        #[arg(long = "n")]
        n: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
    },
    /// Pinsker upper bound on that total variation.
    Pinsker {
        #[arg(long = "n")]
        n: u64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
    },
    /// Guardrail slack implied by the confidence parameter delta.
    EpsilonFromDelta {
        #[arg(long = "n")]
        n: usize,
        #[arg(long = "N")]
        big_n: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
    },
    /// Monte-Carlo pmf of the pooled rank of the r-th smallest real score.
    RankDistribution {
        #[arg(long = "n")]
        n: usize,
        #[arg(long = "N")]
        big_n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
    },
}

pub(crate) fn oracle(g: &Global, o: &OracleCommand) -> Result<()> {
    match *o {
        OracleCommand::TvBinomial { n, p, q } => emit_scalar(g, "tv", tv_binomial(n, p, q)?),
        OracleCommand::Pinsker { n, p, q } => {
            emit_scalar(g, "pinsker_bound", pinsker_bound(n, p, q)?)
        }
        OracleCommand::EpsilonFromDelta {
            n,
            big_n,
            alpha,
            delta,
        } => emit_scalar(g, "epsilon", epsilon_from_delta(n, big_n, alpha, delta)?),
        OracleCommand::RankDistribution {
            n,
            big_n,
            r,
            trials,
        } => {
            ensure!(trials >= 1, "--trials must be at least 1");
            let pmf = rank_distribution_oracle(n, big_n, r, trials, g.seed.unwrap_or(0))?;
            let mut rows = Rows::new(&["rank", "probability"]);
            for (k, p) in pmf.into_iter().enumerate() {
                rows.push(vec![Value::from(k + 1), num(p)]);
            }
            emit(g, &rows)
        }
    }
}
