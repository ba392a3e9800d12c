//! `gauth`: command-line front end for the authentication simulator.
//! Runs scenario files and writes report directories, replays captured
//! challenges to grade the protocol's replay resistance, checks the
//! calibrated channel models against their configured targets, and
//! generates one-time codes for cross-checking other implementations.
//!
//! Exit status: 0 on success, 1 when an experiment verdict or a
//! calibration check fails, 2 on operational errors (bad paths, parse
//! errors, invalid arguments).

mod calibrate;
mod reports;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gauth_core::otp::{
    hotp_generate, totp_generate, OtpKey, TotpParams, MAX_CODE_WIDTH, MIN_CODE_WIDTH,
};
use gauth_core::scenario::{parse_scenario, Action, ScenarioConfig, ScenarioError};
use gauth_core::simnet::{run_with_options, RunReport};

const EXIT_VERDICT_FAILED: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "gauth",
    version,
    about = "Deterministic simulator for hands-free visual-challenge authentication"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and write trace, CSV, and summary reports
    Run(RunArgs),
    /// Adversarial experiments against a scenario
    Attack {
        #[command(subcommand)]
        experiment: AttackExperiment,
    },
    /// Check one channel model's behavior against its configured targets
    Calibrate {
        #[arg(value_enum)]
        component: Component,
    },
    /// Print a one-time code for a key, for cross-checking authenticators
    Otp(OtpArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file to execute
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Seed override; defaults to the seed declared in the scenario
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory root; defaults to $GAUTH_OUT, then ./runs
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Execute N consecutive seeds, each isolated in its own directory
    #[arg(long, default_value_t = 1, value_name = "N")]
    runs: u64,
    /// Refuse device geometry that is not exactly on a calibrated
    /// optics cell instead of snapping to the nearest one
    #[arg(long)]
    strict_optics: bool,
}

#[derive(Subcommand)]
enum AttackExperiment {
    /// Replay captured challenges and requests; PASS means every
    /// presentation was refused and the legitimate session survived
    Replay(AttackArgs),
}

#[derive(Args)]
struct AttackArgs {
    /// Scenario file with capture and replay/guess timeline actions
    #[arg(long, value_name = "FILE")]
    scenario: PathBuf,
    /// Seed override; defaults to the seed declared in the scenario
    #[arg(long)]
    seed: Option<u64>,
    /// Refuse device geometry off the calibrated optics cells
    #[arg(long)]
    strict_optics: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Component {
    Optics,
    Latency,
    Battery,
}

#[derive(Clone, Copy, ValueEnum)]
enum OtpMode {
    Hotp,
    Totp,
}

#[derive(Args)]
struct OtpArgs {
    /// Base-32 key shared with the verifier
    #[arg(long, value_name = "BASE32")]
    key: String,
    #[arg(long, value_enum)]
    mode: OtpMode,
    /// Counter value (hotp only; defaults to 0)
    #[arg(long)]
    counter: Option<u64>,
    /// Unix time in seconds (totp only)
    #[arg(long)]
    time: Option<u64>,
    /// Code width in digits
    #[arg(long, default_value_t = 6)]
    digits: usize,
    /// Step length in seconds (totp only)
    #[arg(long, default_value_t = 30)]
    step: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Attack {
            experiment: AttackExperiment::Replay(args),
        } => cmd_attack_replay(args),
        Command::Calibrate { component } => cmd_calibrate(component),
        Command::Otp(args) => cmd_otp(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("gauth: {err:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

/// Reads and parses a scenario, reporting parse errors as file:line.
fn load_scenario(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario {}", path.display()))?;
    parse_scenario(&text).map_err(|err| match err {
        ScenarioError::Parse { line, reason } => {
            anyhow::anyhow!("{}:{line}: {reason}", path.display())
        }
        other => anyhow::anyhow!("{}: {other}", path.display()),
    })
}

fn execute(cfg: &ScenarioConfig, strict_optics: bool) -> anyhow::Result<RunReport> {
    let report = run_with_options(cfg, strict_optics)?;
    // Attempt counts recounted from the trace must match the tallies
    // the metrics kept; a mismatch is a simulator defect, not a finding.
    if !report.reconciles() {
        bail!(
            "internal error: metrics for {} seed {} do not reconcile with the trace",
            report.scenario_name,
            report.seed
        );
    }
    Ok(report)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let out_root = args
        .out
        .or_else(|| std::env::var_os("GAUTH_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));

    let first_seed = cfg.seed;
    for offset in 0..args.runs {
        cfg.seed = first_seed + offset;
        let report = execute(&cfg, args.strict_optics)?;
        let dir = reports::allocate_run_dir(&out_root, &report.scenario_name, report.seed)?;
        reports::write_reports(&dir, &cfg, &report)
            .with_context(|| format!("writing reports to {}", dir.display()))?;
        let m = &report.metrics;
        println!(
            "run {} seed={}: {} attempts, {} accepted, reports in {}",
            report.scenario_name,
            report.seed,
            m.attempts(),
            m.accepts(),
            dir.display()
        );
        for verdict in reports::verdicts(&cfg, &report) {
            println!("  {verdict}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_attack_replay(args: AttackArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let captures = cfg
        .timeline
        .iter()
        .any(|e| matches!(e.action, Action::Capture { .. }));
    let presentations = cfg
        .timeline
        .iter()
        .any(|e| matches!(e.action, Action::Replay { .. } | Action::Guess { .. }));
    if !captures || !presentations {
        bail!(
            "scenario {} has no capture-then-replay adversary actions",
            cfg.name
        );
    }

    let report = execute(&cfg, args.strict_optics)?;
    for line in report.trace.lines() {
        if line.text.starts_with("adversary ") {
            println!("{:09} {}", line.at_ms, line.text);
        }
    }

    let m = &report.metrics;
    let legit_refused = m.auths.iter().filter(|a| !a.accepted()).count();
    println!(
        "adversary: {} presentations, {} accepted",
        m.adversary_presentations, m.adversary_accepts
    );
    println!(
        "legitimate: {} auths, {} refused, {} locks, {} grace logouts",
        m.auths.len(),
        legit_refused,
        m.locks,
        m.grace_logouts
    );

    // PASS means the attack achieved nothing and cost the user nothing:
    // zero adversarial accepts, no legitimate refusal, no lock fired.
    let pass =
        m.adversary_accepts == 0 && legit_refused == 0 && m.locks == 0 && m.grace_logouts == 0;
    println!("verdict: {}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERDICT_FAILED)
    })
}

fn cmd_calibrate(component: Component) -> anyhow::Result<ExitCode> {
    let ok = match component {
        Component::Optics => calibrate::optics(),
        Component::Latency => calibrate::latency(),
        Component::Battery => calibrate::battery(),
    };
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERDICT_FAILED)
    })
}

fn cmd_otp(args: OtpArgs) -> anyhow::Result<ExitCode> {
    if !(MIN_CODE_WIDTH..=MAX_CODE_WIDTH).contains(&args.digits) {
        bail!(
            "--digits must be between {MIN_CODE_WIDTH} and {MAX_CODE_WIDTH}, got {}",
            args.digits
        );
    }
    let key = OtpKey::from_base32(&args.key).context("invalid --key")?;
    let code = match args.mode {
        OtpMode::Hotp => {
            if args.time.is_some() {
                bail!("hotp takes --counter, not --time");
            }
            hotp_generate(&key, args.counter.unwrap_or(0), args.digits)
        }
        OtpMode::Totp => {
            if args.counter.is_some() {
                bail!("totp takes --time, not --counter");
            }
            let time = args.time.context("totp needs --time <unix seconds>")?;
            if args.step == 0 {
                bail!("--step must be positive");
            }
            let params = TotpParams {
                step_secs: args.step,
                ..TotpParams::default()
            };
            totp_generate(&key, time, &params, args.digits)?
        }
    };
    println!("{}", code.as_str());
    Ok(ExitCode::SUCCESS)
}
