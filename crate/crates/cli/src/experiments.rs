//! The canned studies behind the `experiment` subcommand: the three-sampler
//! comparison, the certificate sweep table, and the mean-versus-median
//! replication study.
//!
//! All randomness flows through per-replication substreams keyed by a global
//! replication index, and parallel results are collected in index order, so a
//! given `(config, seed)` yields a bit-identical result at any parallelism
//! degree.

use mcmc_certify::concentration::{aggregate, replications_needed, AggregationMode};
use mcmc_certify::constants::{
    ar1_certificate_at_r, beta_bar, k_constant, minorization_constant_ar1, optimize_k_over_r,
    DriftCertificate, KVariant, MinorizationRoute, RegenCertificateBuilder,
};
use mcmc_certify::diagnostics::{mean_se, quantiles, sample_mean};
use mcmc_certify::models::LyapunovFunction;
use mcmc_certify::samplers::{optimal_envelope, run_chain, Budget, ChainKind, ChainSpec, InitialState};
use mcmc_certify::{Error, Result, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CertificateFamily, ExperimentConfig, ExperimentKind, DEFAULT_A, DEFAULT_ALPHA};

/// Schema tag stamped on every [`ExperimentResult`].
pub const RESULT_SCHEMA: &str = "mcmc-certify.experiment-result.v1";
/// Schema tag stamped on every [`ConstantsTableReport`].
pub const TABLE_SCHEMA: &str = "mcmc-certify.constants-table.v1";

/// Most chains one aggregate may hold; also the stride that keeps substream
/// ids of different aggregates disjoint.
const MAX_CHAINS_PER_AGGREGATE: u64 = 10_000;

/// One replication of one group (a sampler, or an aggregation rule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub group: String,
    pub rep: u64,
    pub estimate: f64,
    /// Recorded states per inner step; absent where the ratio is trivial.
    #[serde(default)]
    pub accepted_fraction: Option<f64>,
    pub states: u64,
    pub inner_steps: u64,
    #[serde(default)]
    pub regenerations: Option<u64>,
    /// Whether the estimate missed its certified deviation band
    /// (replication study only).
    #[serde(default)]
    pub missed: Option<bool>,
}

/// Per-group statistics; every field is a pure function of the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub count: u64,
    pub mean: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub iqr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_fraction_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miss_rate: Option<f64>,
}

/// Sizing of one replication-study group, echoed for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub group: String,
    pub chains_per_aggregate: u64,
    pub states_per_chain: u64,
    pub states_per_aggregate: u64,
    /// Deviation beyond which a single aggregate counts as a miss: the
    /// exact standard deviation of one chain's mean times
    /// `sqrt(2 ln(1/a))`, the sub-Gaussian quantile at level `a`.
    pub miss_threshold: f64,
    pub level_a: f64,
    pub level_alpha: f64,
}

/// Replication records plus derived summaries, with the config echoed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema: String,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plans: Vec<StudyPlan>,
    pub records: Vec<RepRecord>,
    pub summaries: Vec<GroupSummary>,
}

/// Recompute the per-group summaries from raw records. Groups appear in
/// first-seen order; this is the function that builds every published
/// summary, so `result.summaries == summarize(&result.records)` always.
pub fn summarize(records: &[RepRecord]) -> Result<Vec<GroupSummary>> {
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.iter().any(|g| *g == r.group) {
            order.push(&r.group);
        }
    }
    order
        .into_iter()
        .map(|group| {
            let of_group: Vec<&RepRecord> = records.iter().filter(|r| r.group == group).collect();
            let estimates: Vec<f64> = of_group.iter().map(|r| r.estimate).collect();
            let qs = quantiles(&estimates, &[0.05, 0.25, 0.5, 0.75, 0.95])?;
            let fractions: Vec<f64> =
                of_group.iter().filter_map(|r| r.accepted_fraction).collect();
            let misses: Vec<bool> = of_group.iter().filter_map(|r| r.missed).collect();
            Ok(GroupSummary {
                group: group.to_string(),
                count: of_group.len() as u64,
                mean: sample_mean(&estimates)?,
                median: qs[2],
                q05: qs[0],
                q25: qs[1],
                q50: qs[2],
                q75: qs[3],
                q95: qs[4],
                iqr: qs[3] - qs[1],
                accepted_fraction_mean: if fractions.is_empty() {
                    None
                } else {
                    Some(sample_mean(&fractions)?)
                },
                miss_rate: if misses.is_empty() {
                    None
                } else {
                    Some(misses.iter().filter(|&&m| m).count() as f64 / misses.len() as f64)
                },
            })
        })
        .collect()
}

fn require_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment.kind == kind {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "experiment.kind: expected {kind}, got {}",
            config.experiment.kind
        )))
    }
}

/// Run the three samplers for the configured target side by side: the
/// regenerative accept/reject walk and the rejection sampler on an equal
/// inner-step budget, and the random-walk chain on the matching number of
/// states from 0. Each replication's estimate is the plain average of the
/// identity over recorded states.
pub fn run_three_sampler_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    require_kind(config, ExperimentKind::ThreeSamplerComparison)?;
    let model = config.model;
    let envelope_m = optimal_envelope(&model.target, &model.proposal)?;
    let reps = config.experiment.reps;
    let budget = config.experiment.n;
    let stream = RngStream::new(config.experiment.seed);
    let kinds = [ChainKind::Regenerative, ChainKind::Rejection, ChainKind::Rwm];

    let records = (0..3 * reps)
        .into_par_iter()
        .map(|id| {
            let sampler = kinds[(id / reps) as usize];
            let spec = match sampler {
                ChainKind::Regenerative => {
                    ChainSpec::regenerative(model.target, model.proposal, model.lyapunov)
                }
                ChainKind::Rejection => ChainSpec::rejection(
                    model.target,
                    model.proposal,
                    envelope_m,
                    model.lyapunov,
                ),
                ChainKind::Rwm => {
                    ChainSpec::rwm(model.target, model.proposal, model.lyapunov, 0.0)
                }
                ChainKind::Ar1 => unreachable!("not part of the comparison"),
            };
            let chain_budget = match sampler {
                // One inner step per state for this family, so the state
                // budget and the inner-step budget coincide.
                ChainKind::Rwm => Budget::States(budget as usize),
                _ => Budget::InnerSteps(budget),
            };
            let traj = run_chain(&spec, chain_budget, &stream.substream(id))?;
            Ok(RepRecord {
                group: sampler.to_string(),
                rep: id % reps,
                estimate: sample_mean(&traj.states)?,
                accepted_fraction: match sampler {
                    ChainKind::Rwm => None,
                    _ => traj.accepted_fraction(),
                },
                states: traj.states.len() as u64,
                inner_steps: traj.total_inner_steps,
                regenerations: (sampler == ChainKind::Regenerative)
                    .then_some(traj.regeneration_count),
                missed: None,
            })
        })
        .collect::<Result<Vec<RepRecord>>>()?;

    let summaries = summarize(&records)?;
    Ok(ExperimentResult {
        schema: RESULT_SCHEMA.to_string(),
        config: config.clone(),
        plans: Vec::new(),
        records,
        summaries,
    })
}

/// One row of the certificate sweep. Rows where no finite certificate
/// exists are kept and flagged instead of aborting the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRow {
    /// `"d"` (small-set half-width) or `"r"` (sublevel-set level).
    pub sweep_parameter: String,
    pub sweep_value: f64,
    pub c: Option<f64>,
    pub beta_bar: Option<f64>,
    #[serde(rename = "k_eq4")]
    pub k_single_weight: Option<f64>,
    #[serde(rename = "k_sec4")]
    pub k_doubled_weight: Option<f64>,
    pub valid: bool,
    pub optimum: bool,
    #[serde(default)]
    pub note: Option<String>,
}

impl ConstantsRow {
    fn invalid(parameter: &str, value: f64, c: Option<f64>, note: String) -> Self {
        ConstantsRow {
            sweep_parameter: parameter.to_string(),
            sweep_value: value,
            c,
            beta_bar: None,
            k_single_weight: None,
            k_doubled_weight: None,
            valid: false,
            optimum: false,
            note: Some(note),
        }
    }

    fn from_certificate(parameter: &str, value: f64, cert: &DriftCertificate<f64>) -> Self {
        ConstantsRow {
            sweep_parameter: parameter.to_string(),
            sweep_value: value,
            c: Some(cert.c_r),
            beta_bar: Some(cert.beta_bar),
            k_single_weight: Some(cert.k),
            k_doubled_weight: Some(cert.k_doubled),
            valid: true,
            optimum: false,
            note: None,
        }
    }
}

/// Certificate sweep plus optimum row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTableReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub family: CertificateFamily,
    pub rows: Vec<ConstantsRow>,
}

fn linear_sweep(lo: f64, hi: f64, points: u64) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Tabulate `(sweep value, beta_bar, c, K)` for one certificate family over
/// a sweep, then append the row minimizing the single-weight prefactor over
/// the swept range.
pub fn constants_table(config: &ExperimentConfig) -> Result<ConstantsTableReport> {
    config.validate()?;
    require_kind(config, ExperimentKind::ConstantsTable)?;
    let family = config
        .experiment
        .family
        .ok_or_else(|| Error::Config("experiment.family: required for the constants table".into()))?;
    let points = config.experiment.n;

    let mut rows = match family {
        CertificateFamily::Ar1 => {
            let lo = config.experiment.sweep_min.unwrap_or(1.0);
            let hi = config.experiment.sweep_max.unwrap_or(64.0);
            if lo < 1.0 {
                return Err(Error::Config(format!(
                    "experiment.sweep_min: half-width sweep must start at 1 or above, got {lo}"
                )));
            }
            let mut rows: Vec<ConstantsRow> = Vec::new();
            for d in linear_sweep(lo, hi, points) {
                let m = minorization_constant_ar1(d)?;
                let row = match beta_bar(
                    mcmc_certify::constants::ar1_drift_rate::<f64>(),
                    mcmc_certify::constants::ar1_drift_offset::<f64>(),
                    m.r,
                ) {
                    Err(e) => ConstantsRow::invalid("d", d, Some(m.c), e.to_string()),
                    Ok(bb) => {
                        let pair = k_constant(bb, m.r, m.c, KVariant::SingleWeight).and_then(|k1| {
                            Ok((k1, k_constant(bb, m.r, m.c, KVariant::DoubledWeight)?))
                        });
                        match pair {
                            Err(e) => ConstantsRow::invalid("d", d, Some(m.c), e.to_string()),
                            Ok((k1, k2)) => ConstantsRow {
                                sweep_parameter: "d".to_string(),
                                sweep_value: d,
                                c: Some(m.c),
                                beta_bar: Some(bb),
                                k_single_weight: Some(k1),
                                k_doubled_weight: Some(k2),
                                valid: true,
                                optimum: false,
                                note: None,
                            },
                        }
                    }
                };
                rows.push(row);
            }
            let r_lo = minorization_constant_ar1(lo)?.r;
            let r_hi = minorization_constant_ar1(hi)?.r;
            let best = optimize_k_over_r(ar1_certificate_at_r::<f64>, r_lo, r_hi)?;
            // The sweep walks half-widths; report the optimum in the same
            // units, d = sqrt(4 r^2 - 7).
            let d_star = (4.0 * best.r_star * best.r_star - 7.0).sqrt();
            let mut optimum = ConstantsRow::from_certificate("d", d_star, &best.certificate);
            optimum.optimum = true;
            rows.push(optimum);
            rows
        }
        CertificateFamily::Regen => {
            let lo = config.experiment.sweep_min.unwrap_or(50.0);
            let hi = config.experiment.sweep_max.unwrap_or(5000.0);
            let tail = config.model.target.tail.ok_or_else(|| {
                Error::Config(
                    "model.target.tail: the regenerative certificate needs declared tail \
                     parameters"
                        .into(),
                )
            })?;
            let builder = RegenCertificateBuilder::new(
                config.model.target,
                config.model.proposal,
                config.model.lyapunov,
                tail.x1,
                MinorizationRoute::DensityFloor,
            )?;
            let mut rows: Vec<ConstantsRow> = Vec::new();
            for r in linear_sweep(lo, hi, points) {
                rows.push(match builder.certificate(r) {
                    Ok(cert) => ConstantsRow::from_certificate("r", r, &cert),
                    Err(e) => ConstantsRow::invalid("r", r, None, e.to_string()),
                });
            }
            let best = optimize_k_over_r(|r| builder.certificate(r), lo, hi)?;
            let mut optimum = ConstantsRow::from_certificate("r", best.r_star, &best.certificate);
            optimum.optimum = true;
            rows.push(optimum);
            rows
        }
    };

    // Exactly one optimum row, and it comes last.
    debug_assert_eq!(rows.iter().filter(|r| r.optimum).count(), 1);
    if let Some(last) = rows.last_mut() {
        debug_assert!(last.optimum);
    }
    Ok(ConstantsTableReport {
        schema: TABLE_SCHEMA.to_string(),
        config: config.clone(),
        family,
        rows,
    })
}

/// Exact standard deviation of the mean of `n` consecutive states of the
/// stationary autoregression `X' = X/2 + sqrt(3/4) N`: unit marginal
/// variance and lag-k correlation `2^{-k}`.
fn ar1_mean_sd(n: u64) -> f64 {
    let nf = n as f64;
    let mut cross = 0.0;
    let mut rho_k = 1.0;
    for k in 1..n {
        rho_k *= 0.5;
        cross += (n - k) as f64 * rho_k;
        if rho_k * nf < 1e-18 {
            break;
        }
    }
    ((nf + 2.0 * cross) / (nf * nf)).sqrt()
}

/// Mean-versus-median replication study on the stationary autoregression.
///
/// For each aggregation rule, the certified replication count `m` at levels
/// `(alpha, a)` splits the per-aggregate state budget `n` into `m` chains of
/// `n/m` states; each aggregate combines the `m` chain means. A miss is a
/// deviation beyond the single-chain sub-Gaussian band at level `a`, whose
/// aggregate miss rate the replication bound certifies at level `alpha`.
pub fn replication_study(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    require_kind(config, ExperimentKind::Aggregation)?;
    let alpha = config.experiment.alpha.unwrap_or(DEFAULT_ALPHA);
    let a = config.experiment.a.unwrap_or(DEFAULT_A);
    let budget = config.experiment.n;
    let reps = config.experiment.reps;
    let stream = RngStream::new(config.experiment.seed);
    let modes = match config.experiment.aggregation {
        Some(mode) => vec![mode],
        None => vec![AggregationMode::Mean, AggregationMode::Median],
    };

    let mut plans = Vec::new();
    let mut records = Vec::new();
    for (study_idx, &mode) in modes.iter().enumerate() {
        let m = replications_needed(mode, alpha, a)?;
        if m > MAX_CHAINS_PER_AGGREGATE {
            return Err(Error::Config(format!(
                "experiment.a: {m} chains per aggregate exceed the supported \
                 {MAX_CHAINS_PER_AGGREGATE}; level a = {a} is too close to 1/2"
            )));
        }
        if m > budget {
            return Err(Error::Config(format!(
                "experiment.n: state budget {budget} cannot host {m} chains of one state each"
            )));
        }
        let states_per_chain = budget / m;
        let threshold = ar1_mean_sd(states_per_chain) * (2.0 * (1.0 / a).ln()).sqrt();
        plans.push(StudyPlan {
            group: mode.to_string(),
            chains_per_aggregate: m,
            states_per_chain,
            states_per_aggregate: m * states_per_chain,
            miss_threshold: threshold,
            level_a: a,
            level_alpha: alpha,
        });

        let mut study_records = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let estimates = (0..m)
                    .map(|chain| {
                        let id = (study_idx as u64 * reps + rep) * MAX_CHAINS_PER_AGGREGATE
                            + chain;
                        let spec = ChainSpec::<f64>::ar1(
                            LyapunovFunction::one_plus_square(),
                            InitialState::Stationary,
                        );
                        let traj = run_chain(
                            &spec,
                            Budget::States(states_per_chain as usize),
                            &stream.substream(id),
                        )?;
                        sample_mean(&traj.states)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let value = aggregate(&estimates, mode)?;
                Ok(RepRecord {
                    group: mode.to_string(),
                    rep,
                    estimate: value,
                    accepted_fraction: None,
                    states: m * states_per_chain,
                    inner_steps: m * states_per_chain,
                    regenerations: None,
                    missed: Some(value.abs() > threshold),
                })
            })
            .collect::<Result<Vec<RepRecord>>>()?;
        records.append(&mut study_records);
    }

    let summaries = summarize(&records)?;
    Ok(ExperimentResult {
        schema: RESULT_SCHEMA.to_string(),
        config: config.clone(),
        plans,
        records,
        summaries,
    })
}

/// Centering check used by the studies: is the group mean within three
/// standard errors of the reference value?
pub fn centered_within_three_se(records: &[RepRecord], group: &str, reference: f64) -> Result<bool> {
    let estimates: Vec<f64> = records
        .iter()
        .filter(|r| r.group == group)
        .map(|r| r.estimate)
        .collect();
    let mean = sample_mean(&estimates)?;
    let se = mean_se(&estimates)?;
    Ok((mean - reference).abs() <= 3.0 * se)
}
