//! Experiment configuration: a single versioned JSON document describing the
//! model, the experiment and its knobs, and where the results go.
//!
//! Configs round-trip bit-exactly (`float_roundtrip` is enabled on the JSON
//! backend and nothing is rewritten on load), and every numeric field is
//! checked against the preconditions of the module that will consume it, with
//! the failing field named in the error.

use std::path::{Path, PathBuf};

use mcmc_certify::concentration::AggregationMode;
use mcmc_certify::models::{
    LyapunovFunction, ProposalDensity, SymmetricProposal, TargetDensity, UnnormalizedTarget,
};
use mcmc_certify::{Error, Result};
use serde::{Deserialize, Serialize};

/// Version of the config document itself.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Output encoding for emitted files.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

/// Which canned experiment to run.
///
/// The wire names are fixed: `fig2` for the three-sampler comparison,
/// `constants_table` for the certificate sweep, `aggregation` for the
/// mean-versus-median replication study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[serde(rename = "fig2")]
    ThreeSamplerComparison,
    ConstantsTable,
    Aggregation,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::ThreeSamplerComparison => "fig2",
            ExperimentKind::ConstantsTable => "constants_table",
            ExperimentKind::Aggregation => "aggregation",
        })
    }
}

/// Certificate family swept by the constants table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CertificateFamily {
    /// Linear autoregression with the quadratic weight; closed forms.
    Ar1,
    /// Regenerative accept/reject walk for the configured model; quadrature.
    Regen,
}

/// The sampled model: target, proposal, and Lyapunov weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub target: UnnormalizedTarget<f64>,
    pub proposal: SymmetricProposal<f64>,
    pub lyapunov: LyapunovFunction<f64>,
}

/// Experiment selection plus its knobs. Knobs that a kind does not read may
/// be omitted; present knobs are validated regardless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    pub kind: ExperimentKind,
    /// Per-replication size: inner-step budget (`fig2`), total states per
    /// aggregate (`aggregation`), or sweep length (`constants_table`).
    pub n: u64,
    /// Replications (`fig2`), aggregates (`aggregation`); unused by the
    /// constants table.
    pub reps: u64,
    pub seed: u64,
    /// Deviation parameter of the confidence interval; must exceed sqrt(2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_dev: Option<f64>,
    /// Variance floor of the confidence interval; positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_tune: Option<f64>,
    /// Tilt of the exponential inequality check; nonnegative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Small-set half-width for coupling runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Truncation horizon for coupling runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    /// Aggregation rule under study; `aggregation` runs both when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationMode>,
    /// Final confidence level of the replication study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Per-replication confidence level of the replication study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    /// Certificate family for the constants table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<CertificateFamily>,
    /// Sweep bounds for the constants table: half-width `d` for the
    /// autoregressive family, level `r` for the regenerative walk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_max: Option<f64>,
}

/// Where results are written. `path: None` means standard output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub experiment: ExperimentSettings,
    pub output: OutputConfig,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn require_finite(field: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format_args!("must be finite, got {value}")))
    }
}

fn require_positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format_args!("must be positive and finite, got {value}")))
    }
}

impl ModelConfig {
    /// The model behind the three-sampler comparison: a unit-width squared
    /// exponential centred at 1 with declared log-concave tails, a standard
    /// normal proposal, and the exponential weight just under the tail rate.
    pub fn offset_gaussian() -> Self {
        ModelConfig {
            target: UnnormalizedTarget::new(TargetDensity::SquaredExp { center: 1.0, scale: 1.0 })
                .with_tail(1.0, 3.0)
                .expect("tail parameters are fixed and valid"),
            proposal: SymmetricProposal::standard_normal(),
            lyapunov: LyapunovFunction::exp_abs(0.49).expect("rate is fixed and valid"),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.target.density {
            TargetDensity::SquaredExp { center, scale } => {
                require_finite("model.target.center", center)?;
                require_positive("model.target.scale", scale)?;
            }
            TargetDensity::AbsExp { rate } => require_positive("model.target.rate", rate)?,
            TargetDensity::Cauchy => {}
            TargetDensity::NormalizedGaussian { mean, sd } => {
                require_finite("model.target.mean", mean)?;
                require_positive("model.target.sd", sd)?;
            }
        }
        if let Some(tail) = self.target.tail {
            require_positive("model.target.tail.alpha", tail.alpha)?;
            if !(tail.x1 >= 0.0 && tail.x1.is_finite()) {
                return Err(bad(
                    "model.target.tail.x1",
                    format_args!("must be nonnegative and finite, got {}", tail.x1),
                ));
            }
        }
        if let Some(mean) = self.target.true_mean {
            require_finite("model.target.true_mean", mean)?;
        }
        self.proposal
            .validate()
            .map_err(|e| bad("model.proposal", e))?;
        match self.proposal.density {
            ProposalDensity::StandardNormal => {}
            ProposalDensity::Normal { sd } => require_positive("model.proposal.sd", sd)?,
        }
        match self.lyapunov {
            LyapunovFunction::ExpAbs { s } => require_positive("model.lyapunov.s", s)?,
            LyapunovFunction::OnePlusSquare => {}
        }
        Ok(())
    }
}

impl ExperimentSettings {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(bad("experiment.n", "must be at least 1"));
        }
        match self.kind {
            ExperimentKind::ThreeSamplerComparison => {
                if self.reps < 2 {
                    return Err(bad(
                        "experiment.reps",
                        format_args!(
                            "the three-sampler comparison needs at least 2 replications, got {}",
                            self.reps
                        ),
                    ));
                }
            }
            ExperimentKind::ConstantsTable => {
                if self.n < 2 {
                    return Err(bad(
                        "experiment.n",
                        format_args!("a sweep needs at least 2 points, got {}", self.n),
                    ));
                }
                if let (Some(lo), Some(hi)) = (self.sweep_min, self.sweep_max) {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(bad(
                            "experiment.sweep_min",
                            format_args!("sweep bounds must be finite and ordered, got [{lo}, {hi}]"),
                        ));
                    }
                }
            }
            ExperimentKind::Aggregation => {
                if self.reps < 2 {
                    return Err(bad(
                        "experiment.reps",
                        format_args!("the replication study needs at least 2 aggregates, got {}", self.reps),
                    ));
                }
                let alpha = self.alpha.unwrap_or(DEFAULT_ALPHA);
                let a = self.a.unwrap_or(DEFAULT_A);
                if !(alpha > 0.0 && alpha < a && a < 0.5) {
                    return Err(bad(
                        "experiment.alpha",
                        format_args!("levels must satisfy 0 < alpha < a < 1/2, got alpha = {alpha}, a = {a}"),
                    ));
                }
            }
        }
        if let Some(x) = self.x_dev {
            if !(x > std::f64::consts::SQRT_2 && x.is_finite()) {
                return Err(bad(
                    "experiment.x_dev",
                    format_args!("must exceed sqrt(2), got {x}"),
                ));
            }
        }
        if let Some(y) = self.y_tune {
            require_positive("experiment.y_tune", y)?;
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(bad(
                    "experiment.lambda",
                    format_args!("must be nonnegative and finite, got {l}"),
                ));
            }
        }
        if let Some(d) = self.d {
            if !(d > 1.0 && d.is_finite()) {
                return Err(bad(
                    "experiment.d",
                    format_args!("small-set half-width must exceed 1, got {d}"),
                ));
            }
        }
        if let Some(h) = self.horizon {
            if h == 0 {
                return Err(bad("experiment.horizon", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Default final level of the replication study.
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Default per-replication level of the replication study.
pub const DEFAULT_A: f64 = 0.2;

/// Desk-scale replication count; paired with [`DESK_N`].
pub const DESK_REPS: u64 = 1000;
/// Desk-scale per-replication size.
pub const DESK_N: u64 = 2000;
/// Published-scale replication count and size (`--paper-scale`).
pub const PAPER_SCALE: u64 = 10_000;

impl ExperimentConfig {
    /// Desk-scale three-sampler comparison on the offset-Gaussian model.
    pub fn three_sampler_default() -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            model: ModelConfig::offset_gaussian(),
            experiment: ExperimentSettings {
                kind: ExperimentKind::ThreeSamplerComparison,
                n: DESK_N,
                reps: DESK_REPS,
                seed: 7,
                x_dev: None,
                y_tune: None,
                lambda: None,
                d: None,
                horizon: None,
                aggregation: None,
                alpha: None,
                a: None,
                family: None,
                sweep_min: None,
                sweep_max: None,
            },
            output: OutputConfig { path: None, format: OutputFormat::Json },
        }
    }

    /// Certificate sweep for one family; defaults to the closed-form
    /// autoregressive family over half-widths `[1, 64]`.
    pub fn constants_table_default(family: CertificateFamily) -> Self {
        let mut config = Self::three_sampler_default();
        config.experiment.kind = ExperimentKind::ConstantsTable;
        config.experiment.n = 25;
        config.experiment.reps = 1;
        config.experiment.family = Some(family);
        config
    }

    /// Desk-scale mean-versus-median replication study.
    pub fn aggregation_default() -> Self {
        let mut config = Self::three_sampler_default();
        config.experiment.kind = ExperimentKind::Aggregation;
        config.experiment.n = DESK_N;
        config.experiment.reps = 2000;
        config.experiment.alpha = Some(DEFAULT_ALPHA);
        config.experiment.a = Some(DEFAULT_A);
        config
    }

    /// Rescale the run to the published size: both the per-replication size
    /// and the replication count move to 10^4.
    pub fn apply_paper_scale(&mut self) {
        match self.experiment.kind {
            ExperimentKind::ThreeSamplerComparison | ExperimentKind::Aggregation => {
                self.experiment.n = PAPER_SCALE;
                self.experiment.reps = PAPER_SCALE;
            }
            ExperimentKind::ConstantsTable => {}
        }
    }

    /// Check the document version and every field against the preconditions
    /// of the modules that will consume them.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format_args!(
                    "unsupported version {}, this build reads {CONFIG_SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        self.model.validate()?;
        self.experiment.validate()
    }

    /// Parse and validate a JSON config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config does not parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Load and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
