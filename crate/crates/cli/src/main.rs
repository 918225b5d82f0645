//! `mcmc-certify`: drift certificates, concentration checks, and sampler
//! studies from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration and input errors, 3 for
//! numerical failures, 4 when a requested property check runs to completion
//! but the property fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mcmc_certify::concentration::{
    confidence_report, sigma_hat_sq, verify_exp_inequality_mc, v_norm, InequalityCase,
    InequalityCheck,
};
use mcmc_certify::constants::{
    ar1_certificate, ar1_certificate_at_r, CertificateProvenance, DriftCertificate,
    MinorizationRoute, RegenCertificateBuilder,
};
use mcmc_certify::coupling::{estimate_weak_dependence_sum, OffSmallSetMoves, SmallSetSpec};
use mcmc_certify::models::{expectation_under_proposal, LyapunovFunction};
use mcmc_certify::samplers::{run_chain, Budget, ChainSpec, InitialState, Trajectory};
use mcmc_certify::special::linspace;
use mcmc_certify::{Error, Result, RngStream};
use mcmc_certify_cli::config::{
    CertificateFamily, ExperimentConfig, ExperimentKind, OutputFormat,
};
use mcmc_certify_cli::experiments::{
    constants_table, replication_study, run_three_sampler_experiment,
};
use mcmc_certify_cli::output::{
    constants_csv, kv_csv, records_csv, to_pretty_json, trajectory_csv, write_output,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "mcmc-certify",
    version,
    about = "Drift certificates, concentration checks, and sampler studies \
             for Markov chain Monte Carlo"
)]
struct Cli {
    /// Experiment config file (JSON); each subcommand has built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Output encoding.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Restore the published 10^4 x 10^4 study sizes instead of the desk
    /// defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SampleKind {
    Regenerative,
    Rejection,
    Rwm,
    Ar1,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InequalityCaseArg {
    Iid,
    Ar1,
    Regen,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain and emit its trajectory.
    Sample {
        #[arg(long, value_enum, default_value_t = SampleKind::Regenerative)]
        kind: SampleKind,
        /// Recorded states (or inner steps with --inner-budget).
        #[arg(long, default_value_t = 1000)]
        n: u64,
        /// Count the budget in inner steps instead of recorded states.
        #[arg(long)]
        inner_budget: bool,
        /// Fixed start; the autoregression starts stationary when omitted.
        #[arg(long)]
        initial: Option<f64>,
    },
    /// Emit one drift certificate.
    Constants {
        #[arg(long, value_enum, default_value_t = CertificateFamily::Ar1)]
        family: CertificateFamily,
        /// Small-set half-width (autoregressive family).
        #[arg(long)]
        d: Option<f64>,
        /// Sublevel-set level; overrides --d.
        #[arg(long)]
        r: Option<f64>,
    },
    /// Certified confidence interval for the stationary autoregression mean.
    Ci {
        /// Chain length.
        #[arg(long, default_value_t = 1000)]
        n: u64,
        /// Deviation parameter; coverage is 1 - exp(-x^2/2).
        #[arg(long, default_value_t = 2.0)]
        x: f64,
        /// Variance floor; defaults to the estimated variance over n.
        #[arg(long)]
        y: Option<f64>,
        /// Half-width of the certificate's small set.
        #[arg(long, default_value_t = 6.0)]
        cert_d: f64,
    },
    /// Monte Carlo check of the exponential deviation inequality.
    VerifyInequality {
        #[arg(long, value_enum)]
        case: InequalityCaseArg,
        /// Tilt parameter; 0 degenerates to an exact identity.
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        /// Chain length per replication.
        #[arg(long, default_value_t = 25)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        /// Certificate half-width for the autoregressive case.
        #[arg(long, default_value_t = 6.0)]
        cert_d: f64,
    },
    /// Coupled-chain check of the weak-dependence bound.
    CouplingCheck {
        /// First chain's start.
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Second chain's start.
        #[arg(long, allow_hyphen_values = true)]
        xp: f64,
        /// Simulated small-set half-width.
        #[arg(long, default_value_t = 1.5)]
        d: f64,
        #[arg(long, default_value_t = 300)]
        horizon: usize,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        /// Half-width behind the certified prefactor K; defaults to 6.
        #[arg(long, default_value_t = 6.0)]
        cert_d: f64,
        /// Share innovations outside the small set instead of drawing
        /// independent ones.
        #[arg(long)]
        synchronous: bool,
    },
    /// Run a canned study.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Three-sampler comparison on the offset-Gaussian target.
    Fig2,
    /// Certificate sweep with an optimum row.
    ConstantsTable {
        #[arg(long, value_enum)]
        family: Option<CertificateFamily>,
    },
    /// Mean-versus-median replication study.
    Aggregation,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 2 for bad inputs, 3 for numerical failures.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Precondition(_)
        | Error::Empty(_)
        | Error::Evaluation(_)
        | Error::Io(_) => 2,
        Error::Numerical(_)
        | Error::CertificateInvalid(_)
        | Error::Stall(_)
        | Error::Envelope(_) => 3,
    }
}

/// Exit code reserved for completed property checks that fail.
const PROPERTY_FAILURE: u8 = 4;

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Sample { kind, n, inner_budget, initial } => {
            let config = resolve_config(cli, ExperimentConfig::three_sampler_default)?;
            let traj = sample(&config, *kind, *n, *inner_budget, *initial)?;
            emit(&config, &traj, trajectory_csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Constants { family, d, r } => {
            let config = resolve_config(cli, ExperimentConfig::three_sampler_default)?;
            let cert = certificate(&config, *family, *d, *r)?;
            emit(&config, &cert, kv_csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ci { n, x, y, cert_d } => {
            let config = resolve_config(cli, ExperimentConfig::three_sampler_default)?;
            let report = confidence_interval(&config, *n, *x, *y, *cert_d)?;
            emit(&config, &report, kv_csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyInequality { case, lambda, n, reps, cert_d } => {
            let config = resolve_config(cli, ExperimentConfig::three_sampler_default)?;
            let report = verify_inequality(&config, *case, *lambda, *n, *reps, *cert_d)?;
            emit(&config, &report, kv_csv)?;
            if report.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "property check failed: estimate {} exceeds 1 + 3 SE (SE {})",
                    report.estimate, report.se
                );
                Ok(ExitCode::from(PROPERTY_FAILURE))
            }
        }
        Command::CouplingCheck { x, xp, d, horizon, reps, cert_d, synchronous } => {
            let config = resolve_config(cli, ExperimentConfig::three_sampler_default)?;
            let small_set = SmallSetSpec::new(*d)?;
            let k_bound = ar1_certificate(*cert_d)?.k;
            let moves = if *synchronous {
                OffSmallSetMoves::Synchronous
            } else {
                OffSmallSetMoves::Independent
            };
            let report = estimate_weak_dependence_sum(
                *x,
                *xp,
                *horizon,
                *reps,
                &small_set,
                &LyapunovFunction::one_plus_square(),
                k_bound,
                moves,
                &RngStream::new(config.experiment.seed),
            )?;
            emit(&config, &report, kv_csv)?;
            if report.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "property check failed: sum estimate {} minus 3 SE exceeds K d_V = {}",
                    report.sum_estimate, report.bound_rhs
                );
                Ok(ExitCode::from(PROPERTY_FAILURE))
            }
        }
        Command::Experiment { which } => {
            let (config, kind) = match which {
                ExperimentCommand::Fig2 => (
                    resolve_config(cli, ExperimentConfig::three_sampler_default)?,
                    ExperimentKind::ThreeSamplerComparison,
                ),
                ExperimentCommand::ConstantsTable { family } => {
                    let mut config = resolve_config(cli, || {
                        ExperimentConfig::constants_table_default(
                            family.unwrap_or(CertificateFamily::Ar1),
                        )
                    })?;
                    if let Some(family) = family {
                        config.experiment.family = Some(*family);
                    }
                    (config, ExperimentKind::ConstantsTable)
                }
                ExperimentCommand::Aggregation => (
                    resolve_config(cli, ExperimentConfig::aggregation_default)?,
                    ExperimentKind::Aggregation,
                ),
            };
            if config.experiment.kind != kind {
                return Err(Error::Config(format!(
                    "experiment.kind: config says {}, command line asks for {kind}",
                    config.experiment.kind
                )));
            }
            match kind {
                ExperimentKind::ThreeSamplerComparison => {
                    let result = run_three_sampler_experiment(&config)?;
                    emit(&config, &result, records_csv)?;
                }
                ExperimentKind::ConstantsTable => {
                    let report = constants_table(&config)?;
                    emit(&config, &report, constants_csv)?;
                }
                ExperimentKind::Aggregation => {
                    let result = replication_study(&config)?;
                    emit(&config, &result, records_csv)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Load `--config` or fall back to the subcommand default, then fold the
/// global flags in and validate.
fn resolve_config(
    cli: &Cli,
    default: impl FnOnce() -> ExperimentConfig,
) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => default(),
    };
    if let Some(seed) = cli.seed {
        config.experiment.seed = seed;
    }
    if cli.paper_scale {
        config.apply_paper_scale();
    }
    if let Some(format) = cli.format {
        config.output.format = format;
    }
    if let Some(out) = &cli.out {
        config.output.path = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

/// Serialize per the resolved output config and write it out.
fn emit<T: Serialize>(
    config: &ExperimentConfig,
    value: &T,
    csv_form: impl FnOnce(&T) -> Result<String>,
) -> Result<()> {
    let text = match config.output.format {
        OutputFormat::Json => to_pretty_json(value),
        OutputFormat::Csv => csv_form(value)?,
    };
    write_output(&text, config.output.path.as_deref())
}

fn sample(
    config: &ExperimentConfig,
    kind: SampleKind,
    n: u64,
    inner_budget: bool,
    initial: Option<f64>,
) -> Result<Trajectory<f64>> {
    let model = config.model;
    let spec = match kind {
        SampleKind::Regenerative => {
            ChainSpec::regenerative(model.target, model.proposal, model.lyapunov)
        }
        SampleKind::Rejection => {
            let envelope = mcmc_certify::samplers::optimal_envelope(&model.target, &model.proposal)?;
            ChainSpec::rejection(model.target, model.proposal, envelope, model.lyapunov)
        }
        SampleKind::Rwm => ChainSpec::rwm(
            model.target,
            model.proposal,
            model.lyapunov,
            initial.unwrap_or(0.0),
        ),
        SampleKind::Ar1 => ChainSpec::ar1(
            LyapunovFunction::one_plus_square(),
            match initial {
                Some(x0) => InitialState::Fixed(x0),
                None => InitialState::Stationary,
            },
        ),
    };
    let budget = if inner_budget {
        Budget::InnerSteps(n)
    } else {
        Budget::States(n as usize)
    };
    run_chain(&spec, budget, &RngStream::new(config.experiment.seed))
}

fn certificate(
    config: &ExperimentConfig,
    family: CertificateFamily,
    d: Option<f64>,
    r: Option<f64>,
) -> Result<DriftCertificate<f64>> {
    match family {
        CertificateFamily::Ar1 => match (d, r) {
            (_, Some(r)) => ar1_certificate_at_r(r),
            (d, None) => ar1_certificate(d.unwrap_or(6.0)),
        },
        CertificateFamily::Regen => {
            let tail = config.model.target.tail.ok_or_else(|| {
                Error::Config(
                    "model.target.tail: the regenerative certificate needs declared tail \
                     parameters"
                        .into(),
                )
            })?;
            if d.is_some() {
                return Err(Error::Config(
                    "the regenerative family is parameterized by --r, not --d".into(),
                ));
            }
            let builder = RegenCertificateBuilder::new(
                config.model.target,
                config.model.proposal,
                config.model.lyapunov,
                tail.x1,
                MinorizationRoute::DensityFloor,
            )?;
            builder.certificate(r.unwrap_or(182.0))
        }
    }
}

fn confidence_interval(
    config: &ExperimentConfig,
    n: u64,
    x_dev: f64,
    y_tune: Option<f64>,
    cert_d: f64,
) -> Result<mcmc_certify::concentration::ConfidenceReport<f64>> {
    let cert = ar1_certificate(cert_d)?;
    let spec = ChainSpec::<f64>::ar1(
        LyapunovFunction::one_plus_square(),
        InitialState::Stationary,
    );
    let traj = run_chain(
        &spec,
        Budget::States(n as usize),
        &RngStream::new(config.experiment.seed),
    )?;
    // E[V^2] = E[(1 + X^2)^2] = 6 under the standard normal stationary law.
    let var = sigma_hat_sq(&traj, &cert, 6.0)?;
    let y = y_tune.unwrap_or_else(|| var.default_y_tune());
    // sup |x| / (1 + x^2) = 1/2.
    confidence_report(&traj.states, 0.5, &var, x_dev, y)
}

fn verify_inequality(
    config: &ExperimentConfig,
    case: InequalityCaseArg,
    lambda: f64,
    n: usize,
    reps: usize,
    cert_d: f64,
) -> Result<mcmc_certify::concentration::InequalityReport<f64>> {
    let check = match case {
        InequalityCaseArg::Iid => InequalityCheck {
            case: InequalityCase::IidStandardNormal,
            v: LyapunovFunction::one_plus_square(),
            g: |x| x,
            g_vnorm: 0.5,
            // Independent draws carry no interaction weight; a one-step
            // certificate with unit overlap collapses the prefactor to 1.
            cert: DriftCertificate::from_parts(
                0.25,
                0.5,
                1.0,
                1.0,
                CertificateProvenance::closed_form(),
            )?,
            eq_v2: 6.0,
            n,
            lambda,
            reps,
        },
        InequalityCaseArg::Ar1 => InequalityCheck {
            case: InequalityCase::Ar1Stationary,
            v: LyapunovFunction::one_plus_square(),
            g: |x| x,
            g_vnorm: 0.5,
            cert: ar1_certificate(cert_d)?,
            eq_v2: 6.0,
            n,
            lambda,
            reps,
        },
        InequalityCaseArg::Regen => {
            let model = config.model;
            let tail = model.target.tail.ok_or_else(|| {
                Error::Config(
                    "model.target.tail: the regenerative case needs declared tail parameters"
                        .into(),
                )
            })?;
            let builder = RegenCertificateBuilder::new(
                model.target,
                model.proposal,
                model.lyapunov,
                tail.x1,
                MinorizationRoute::DensityFloor,
            )?;
            let g_vnorm = v_norm(|x| x, &model.lyapunov, &linspace(-60.0, 60.0, 4001))?.value;
            let eq_v2 =
                expectation_under_proposal(&model.proposal, |z| model.lyapunov.eval_sq(z))?;
            InequalityCheck {
                case: InequalityCase::Regen { target: model.target, proposal: model.proposal },
                v: model.lyapunov,
                g: |x| x,
                g_vnorm,
                cert: builder.certificate(182.0)?,
                eq_v2,
                n,
                lambda,
                reps,
            }
        }
    };
    verify_exp_inequality_mc(&check, &RngStream::new(config.experiment.seed))
}
