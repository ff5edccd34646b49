//! Command line front end.
//!
//! Exit codes: 0 success, 1 validation or lint denial, 2 usage error,
//! 3 runtime error. With `--json` every subcommand prints exactly one JSON
//! document on stdout; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use studyspec_core::config::{check_document, ParseMode, StudyConfig, ValidationReport};
use studyspec_core::latin::LatinPool;
use studyspec_core::provenance::{
    dwell_log, dwell_per_item, exclude_by_dwell, reconstruct_timeline, validate_log, DwellReport,
    DWELL_THRESHOLD_MS,
};
use studyspec_core::ranksum::rank_sum_test;
use studyspec_core::runtime::{Next, Session, SessionStatus};
use studyspec_core::sequence::{implicit_assignments, realize_sequence, PoolAssignments};
use studyspec_core::simulate::{
    participant_id, run_staircase, simulate_cohort, CohortOptions, ParticipantPolicy, PolicyKind, SimError,
};
use studyspec_core::staircase::{Approach, CorrelationSign, StaircaseParams};
use studyspec_core::LintReport;

use crate::export::export_dir;
use crate::files::{load_log, load_pool, read_number_column, read_text, save_pool, to_json, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DENIED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "studyspec", version, about = "Compile, run and analyze declarative study configurations")]
pub struct Cli {
    /// Print a single JSON document instead of the human format.
    #[arg(long, global = true)]
    pub json: bool,
    /// Root seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, resolve and validate a config.
    Validate {
        config: PathBuf,
        /// Ignore unknown fields instead of rejecting them.
        #[arg(long)]
        lenient: bool,
        /// Print the resolved config in canonical form on success.
        #[arg(long)]
        canonical: bool,
    },
    /// Report design-hygiene warnings.
    Lint {
        config: PathBuf,
        /// Exit 1 when there is any finding.
        #[arg(long)]
        deny_warnings: bool,
    },
    /// Realize one participant's sequence.
    Sequence {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        participant_index: u64,
        /// Participant id looked up in pool files; defaults to the
        /// simulator's id for the index.
        #[arg(long)]
        participant: Option<String>,
        /// Pool file of a latinSquare block; repeatable.
        #[arg(long)]
        pool: Vec<PathBuf>,
        /// One line per item instead of JSON.
        #[arg(long)]
        summary: bool,
    },
    /// Latin square pool ledger.
    #[command(subcommand)]
    Pool(PoolCommand),
    /// Participant sessions.
    #[command(subcommand)]
    Session(SessionCommand),
    /// Run staircases against a simulated observer.
    Staircase(StaircaseArgs),
    /// Simulate a cohort.
    Simulate(SimulateArgs),
    /// Provenance analytics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Event log replay.
    #[command(subcommand)]
    Replay(ReplayCommand),
    /// Result exports.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Debug, Subcommand)]
pub enum PoolCommand {
    /// Create a pool file holding the first square.
    Init {
        pool: PathBuf,
        /// Path of the latinSquare block.
        #[arg(long)]
        block_path: String,
        /// Square order; taken from --config when omitted.
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overwrite an existing pool file.
        #[arg(long)]
        force: bool,
    },
    Assign {
        pool: PathBuf,
        #[arg(long)]
        participant: String,
        /// Current time, epoch ms.
        #[arg(long)]
        now: u64,
    },
    Complete {
        pool: PathBuf,
        #[arg(long)]
        participant: String,
    },
    Reject {
        pool: PathBuf,
        #[arg(long)]
        participant: String,
        #[arg(long, default_value = "rejected")]
        reason: String,
    },
    Reclaim {
        pool: PathBuf,
        #[arg(long)]
        now: u64,
        #[arg(long)]
        timeout: u64,
    },
    /// Condition-by-position counts over completed rows.
    Report { pool: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    Oracle,
    Random,
    Weber,
    AlwaysLeft,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    pub policy: PolicyName,
    /// Weber observer 75%-correct difference.
    #[arg(long, default_value_t = 0.12)]
    pub jnd75: f64,
    /// Weber observer logistic slope.
    #[arg(long, default_value_t = 0.04)]
    pub slope: f64,
}

impl PolicyArgs {
    fn kind(&self) -> PolicyKind {
        match self.policy {
            PolicyName::Oracle => PolicyKind::Oracle,
            PolicyName::Random => PolicyKind::UniformRandom,
            PolicyName::Weber => PolicyKind::Weber { jnd75: self.jnd75, slope: self.slope },
            PolicyName::AlwaysLeft => PolicyKind::AlwaysLeft,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Run one simulated session and write its trial records.
    Run {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        participant_index: u64,
        #[arg(long)]
        participant: Option<String>,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Pool file; participants without a row are assigned one at --now.
        #[arg(long)]
        pool: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        now: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproachArg {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignArg {
    Positive,
    Negative,
}

#[derive(Debug, Args)]
pub struct StaircaseArgs {
    #[arg(long)]
    pub base: f64,
    #[arg(long, value_enum, default_value = "above")]
    pub approach: ApproachArg,
    #[arg(long, value_enum, default_value = "positive")]
    pub sign: SignArg,
    #[arg(long, default_value_t = 0.1)]
    pub start_diff: f64,
    /// Weber observer 75%-correct difference.
    #[arg(long, default_value_t = 0.12)]
    pub observer_jnd: f64,
    #[arg(long, default_value_t = 0.04)]
    pub slope: f64,
    #[arg(long, value_enum, default_value = "weber")]
    pub policy: PolicyName,
    #[arg(long, default_value_t = 200)]
    pub runs: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Probability that a participant abandons mid-session.
    #[arg(long, default_value_t = 0.0)]
    pub abandon: f64,
    /// Reclamation timeout in ms; no reclamation when omitted.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Inter-arrival gap in ms; defaults to timeout + 60000.
    #[arg(long)]
    pub gap: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-participant `.jsonl` logs and `.trials.json` records.
    #[arg(long)]
    pub emit_logs: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Hover dwell per item; participants are named after their log files.
    Dwell {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = DWELL_THRESHOLD_MS)]
        threshold: u64,
        /// Restrict to one component instance.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wilcoxon rank-sum test between two single-column CSV files.
    Ranksum {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReplayCommand {
    /// Reconstruct the per-component timeline of a log.
    Timeline {
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List ordering and pairing problems in a log.
    Validate { log: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum ExportCommand {
    /// Tidy CSV from a directory of trial record files.
    Csv {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error that maps to the usage exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

struct Output {
    json: bool,
    stdout: String,
}

impl Output {
    fn line(&mut self, s: impl AsRef<str>) {
        self.stdout.push_str(s.as_ref());
        self.stdout.push('\n');
    }

    fn doc(&mut self, v: &impl serde::Serialize) -> Result<()> {
        self.stdout.push_str(&to_json(v)?);
        Ok(())
    }

    /// Writes an artifact to `out`, or to stdout when there is no file.
    /// With a file, `summary` is printed instead (as JSON under `--json`).
    fn artifact(&mut self, out: Option<&Path>, body: &str, summary: Value, human: String) -> Result<()> {
        match out {
            Some(p) => {
                write_atomic(p, body.as_bytes())?;
                if self.json {
                    self.doc(&summary)?;
                } else {
                    self.line(human);
                }
            }
            None => self.stdout.push_str(body),
        }
        Ok(())
    }
}

/// Parses `args` and runs the command. Returns the exit code and the text
/// destined for stdout.
pub fn run_with_args<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                eprint!("{text}");
                return (code, String::new());
            }
            return (code, text);
        }
    };
    let mut out = Output { json: cli.json, stdout: String::new() };
    match dispatch(&cli, &mut out) {
        Ok(code) => (code, out.stdout),
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { EXIT_USAGE } else { EXIT_RUNTIME };
            if cli.json {
                let doc = json!({"error": format!("{e:#}"), "exitCode": code});
                return (code, to_json(&doc).unwrap_or_default());
            }
            eprintln!("error: {e:#}");
            (code, out.stdout)
        }
    }
}

pub fn main() -> i32 {
    let (code, stdout) = run_with_args(std::env::args_os());
    print!("{stdout}");
    code
}

fn dispatch(cli: &Cli, out: &mut Output) -> Result<i32> {
    let seed = cli.seed;
    match &cli.command {
        Command::Validate { config, lenient, canonical } => cmd_validate(out, config, *lenient, *canonical),
        Command::Lint { config, deny_warnings } => cmd_lint(out, config, *deny_warnings),
        Command::Sequence { config, participant_index, participant, pool, summary } => {
            cmd_sequence(out, seed, config, *participant_index, participant.as_deref(), pool, *summary)
        }
        Command::Pool(p) => cmd_pool(out, seed, p),
        Command::Session(SessionCommand::Run { config, participant_index, participant, policy, pool, now, out: file }) => {
            cmd_session(out, seed, config, *participant_index, participant.as_deref(), policy, pool, *now, file.as_deref())
        }
        Command::Staircase(a) => cmd_staircase(out, seed, a),
        Command::Simulate(a) => cmd_simulate(out, seed, a),
        Command::Analyze(AnalyzeCommand::Dwell { logs, threshold, instance, out: file }) => {
            cmd_dwell(out, logs, *threshold, instance.as_deref(), file.as_deref())
        }
        Command::Analyze(AnalyzeCommand::Ranksum { a, b }) => cmd_ranksum(out, a, b),
        Command::Replay(ReplayCommand::Timeline { log, out: file }) => cmd_timeline(out, log, file.as_deref()),
        Command::Replay(ReplayCommand::Validate { log }) => cmd_replay_validate(out, log),
        Command::Export(ExportCommand::Csv { dir, out: file }) => {
            let body = export_dir(dir)?;
            let rows = body.lines().count().saturating_sub(1);
            out.artifact(file.as_deref(), &body, json!({"rows": rows}), format!("{rows} rows"))?;
            Ok(EXIT_OK)
        }
    }
}

fn report_lines(report: &ValidationReport) -> String {
    let mut s = String::new();
    for i in &report.errors {
        let _ = writeln!(s, "ERROR {} {} — {}", i.code, i.path, i.message);
    }
    for i in &report.warnings {
        let _ = writeln!(s, "WARN {} {} — {}", i.code, i.path, i.message);
    }
    s
}

/// Loads a config that must validate. Validation failures are printed and
/// turned into `Err(exit code)`.
fn load_config(out: &mut Output, path: &Path) -> Result<std::result::Result<(StudyConfig, LintReport), i32>> {
    let outcome = check_document(&read_text(path)?, ParseMode::Strict);
    for w in &outcome.report.warnings {
        eprintln!("WARN {} {} — {}", w.code, w.path, w.message);
    }
    match outcome.config {
        Some(c) => Ok(Ok((c, outcome.lint))),
        None => {
            if out.json {
                out.doc(&outcome.report)?;
            } else {
                eprint!("{}", report_lines(&outcome.report));
            }
            Ok(Err(EXIT_DENIED))
        }
    }
}

fn cmd_validate(out: &mut Output, path: &Path, lenient: bool, canonical: bool) -> Result<i32> {
    let mode = if lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let outcome = check_document(&read_text(path)?, mode);
    let code = if outcome.report.is_ok() { EXIT_OK } else { EXIT_DENIED };
    if out.json {
        let mut doc = serde_json::to_value(&outcome.report)?;
        doc["ok"] = json!(outcome.report.is_ok());
        if let (true, Some(c)) = (canonical, &outcome.config) {
            doc["canonical"] = studyspec_core::config::to_canonical_value(c);
        }
        out.doc(&doc)?;
    } else {
        out.stdout.push_str(&report_lines(&outcome.report));
        if let (true, Some(c)) = (canonical, &outcome.config) {
            out.stdout.push_str(&studyspec_core::config::to_canonical_string(c));
        }
    }
    Ok(code)
}

fn cmd_lint(out: &mut Output, path: &Path, deny: bool) -> Result<i32> {
    let (_, lint) = match load_config(out, path)? {
        Ok(x) => x,
        Err(code) => return Ok(code),
    };
    if out.json {
        out.doc(&lint)?;
    } else {
        for f in &lint.findings {
            out.line(f.to_string());
        }
    }
    Ok(if deny && !lint.is_empty() { EXIT_DENIED } else { EXIT_OK })
}

/// Rows from pool files for `participant`, assigning at `now` when
/// `assign_missing` is set. Latin blocks without a pool file fall back to
/// implicit assignments.
fn pool_assignments(
    config: &StudyConfig,
    seed: u64,
    index: u64,
    participant: &str,
    pools: &[PathBuf],
    assign_missing: Option<u64>,
) -> Result<PoolAssignments> {
    let mut rows = implicit_assignments(config, index, seed);
    for path in pools {
        let mut pool = load_pool(path)?;
        if !rows.contains_key(&pool.block_path) {
            return Err(UsageError(format!("pool {} is for `{}`, which is not a latinSquare block", path.display(), pool.block_path)).into());
        }
        let row = match (pool.assigned.get(participant), pool.completed.get(participant)) {
            (Some(a), _) => a.row.clone(),
            (None, Some(r)) => r.clone(),
            (None, None) => match assign_missing {
                Some(now) => {
                    let row = pool.assign(participant, now)?;
                    save_pool(path, &pool)?;
                    row
                }
                None => bail!("participant `{participant}` holds no row in {}", path.display()),
            },
        };
        rows.insert(pool.block_path.clone(), row);
    }
    Ok(rows)
}

fn cmd_sequence(
    out: &mut Output,
    seed: u64,
    path: &Path,
    index: u64,
    participant: Option<&str>,
    pools: &[PathBuf],
    summary: bool,
) -> Result<i32> {
    let (config, _) = match load_config(out, path)? {
        Ok(x) => x,
        Err(code) => return Ok(code),
    };
    let pid = participant.map(str::to_string).unwrap_or_else(|| participant_id(index));
    let rows = pool_assignments(&config, seed, index, &pid, pools, None)?;
    let seq = realize_sequence(&config, index, seed, &rows).map_err(|e| anyhow!(e))?;
    if summary && !out.json {
        for (i, item) in seq.items.iter().enumerate() {
            let tag = if item.is_interruption { "  [interruption]" } else { "" };
            out.line(format!("{i}  {}  {}{tag}", item.block_path, item.component_name));
        }
    } else {
        out.doc(&seq)?;
    }
    Ok(EXIT_OK)
}

fn cmd_pool(out: &mut Output, seed: u64, cmd: &PoolCommand) -> Result<i32> {
    match cmd {
        PoolCommand::Init { pool, block_path, order, config, force } => {
            if pool.exists() && !force {
                return Err(UsageError(format!("{} exists; pass --force to overwrite", pool.display())).into());
            }
            let n = match (order, config) {
                (Some(n), _) => *n,
                (None, Some(cfg)) => {
                    let (c, _) = match load_config(out, cfg)? {
                        Ok(x) => x,
                        Err(code) => return Ok(code),
                    };
                    let blocks = c.block_index();
                    let b = blocks
                        .get(block_path.as_str())
                        .ok_or_else(|| UsageError(format!("no block `{block_path}` in {}", cfg.display())))?;
                    b.components.len()
                }
                (None, None) => return Err(UsageError("pass --order or --config".into()).into()),
            };
            let p = LatinPool::new(block_path.clone(), n, seed)?;
            save_pool(pool, &p)?;
            if out.json {
                out.doc(&p)?;
            } else {
                out.line(format!("initialized {} with {} rows", pool.display(), p.queue.len()));
            }
        }
        PoolCommand::Assign { pool, participant, now } => {
            let mut p = load_pool(pool)?;
            let row = p.assign(participant, *now)?;
            save_pool(pool, &p)?;
            if out.json {
                out.doc(&json!({"participant": participant, "row": row}))?;
            } else {
                out.line(format!("{participant} {}", join(&row)));
            }
        }
        PoolCommand::Complete { pool, participant } => {
            let mut p = load_pool(pool)?;
            p.complete(participant)?;
            save_pool(pool, &p)?;
            ack(out, "completed", participant)?;
        }
        PoolCommand::Reject { pool, participant, reason } => {
            let mut p = load_pool(pool)?;
            p.reject(participant, reason)?;
            save_pool(pool, &p)?;
            ack(out, "rejected", participant)?;
        }
        PoolCommand::Reclaim { pool, now, timeout } => {
            let mut p = load_pool(pool)?;
            let ids = p.reclaim_expired(*now, *timeout)?;
            save_pool(pool, &p)?;
            if out.json {
                out.doc(&json!({"reclaimed": ids}))?;
            } else {
                for id in ids {
                    out.line(id);
                }
            }
        }
        PoolCommand::Report { pool } => {
            let p = load_pool(pool)?;
            let counts = p.balance_report();
            if out.json {
                out.doc(&json!({
                    "blockPath": p.block_path,
                    "counts": counts,
                    "completed": p.completed.len(),
                    "assigned": p.assigned.len(),
                    "queued": p.queue.len(),
                    "conserved": p.conserved(),
                }))?;
            } else {
                out.line(format!(
                    "{}: {} completed, {} assigned, {} queued, conserved={}",
                    p.block_path,
                    p.completed.len(),
                    p.assigned.len(),
                    p.queue.len(),
                    p.conserved()
                ));
                for (cond, row) in counts.iter().enumerate() {
                    out.line(format!("condition {cond}: {}", join(row)));
                }
            }
        }
    }
    Ok(EXIT_OK)
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn ack(out: &mut Output, what: &str, participant: &str) -> Result<()> {
    if out.json {
        out.doc(&json!({"participant": participant, "status": what}))
    } else {
        out.line(format!("{what} {participant}"));
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_session(
    out: &mut Output,
    seed: u64,
    path: &Path,
    index: u64,
    participant: Option<&str>,
    policy: &PolicyArgs,
    pools: &[PathBuf],
    now: u64,
    file: Option<&Path>,
) -> Result<i32> {
    let (config, _) = match load_config(out, path)? {
        Ok(x) => x,
        Err(code) => return Ok(code),
    };
    let pid = participant.map(str::to_string).unwrap_or_else(|| participant_id(index));
    let rows = pool_assignments(&config, seed, index, &pid, pools, Some(now))?;
    let realized = realize_sequence(&config, index, seed, &rows).map_err(|e| anyhow!(e))?;
    let mut session = Session::start(&config, realized).map_err(|e| anyhow!(e))?;
    let kind = policy.kind();
    ParticipantPolicy::new(kind).validate().map_err(|e| UsageError(e.to_string()))?;
    let mut rng = studyspec_core::seed::stream(studyspec_core::seed::derive_seed(seed, "participant", index));
    let mut clock = now;
    while session.status() == SessionStatus::Active {
        let served = match session.next_component().map_err(|e| anyhow!(e))? {
            Next::Done => break,
            Next::Serve(s) => s,
        };
        let responses = studyspec_core::simulate::answer(&config, &kind, &served, &mut rng);
        let started = clock;
        let ended = started + studyspec_core::simulate::trial_duration(studyspec_core::simulate::DEFAULT_TRIAL_MS, &mut rng);
        clock = ended;
        session.submit_answer(responses, started, ended).map_err(|e| anyhow!(e))?;
    }
    let status = session.status();
    for path in pools {
        let mut pool = load_pool(path)?;
        if pool.assigned.contains_key(&pid) {
            pool.complete(&pid)?;
            save_pool(path, &pool)?;
        }
    }
    let records = session.into_answers();
    let body = to_json(&records)?;
    let status_str = match status {
        SessionStatus::Active => "active",
        SessionStatus::Ended(studyspec_core::runtime::EndReason::Finished) => "finished",
        SessionStatus::Ended(studyspec_core::runtime::EndReason::SkippedToEnd) => "skippedToEnd",
    };
    out.artifact(
        file,
        &body,
        json!({"participant": pid, "records": records.len(), "status": status_str}),
        format!("{pid}: {} records, {status_str}", records.len()),
    )?;
    Ok(EXIT_OK)
}

fn cmd_staircase(out: &mut Output, seed: u64, a: &StaircaseArgs) -> Result<i32> {
    let approach = match a.approach {
        ApproachArg::Above => Approach::Above,
        ApproachArg::Below => Approach::Below,
    };
    let mut params = StaircaseParams::new(a.base, approach, a.start_diff);
    params.sign = match a.sign {
        SignArg::Positive => CorrelationSign::Positive,
        SignArg::Negative => CorrelationSign::Negative,
    };
    params.validate().map_err(|e| UsageError(e.to_string()))?;
    let kind = PolicyArgs { policy: a.policy, jnd75: a.observer_jnd, slope: a.slope }.kind();
    ParticipantPolicy::new(kind).validate().map_err(|e| UsageError(e.to_string()))?;
    let mut runs = Vec::new();
    for i in 0..a.runs {
        runs.push(run_staircase(&params, &kind, seed.wrapping_add(i)).map_err(|e| anyhow!(e))?);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "trials", "terminationReason", "jndEstimate", "attentionPassRate", "excluded"])?;
    for r in &runs {
        w.write_record([
            r.seed.to_string(),
            r.trials.to_string(),
            r.termination.as_str().to_string(),
            r.jnd_estimate.to_string(),
            r.attention_pass_rate.map(|p| p.to_string()).unwrap_or_default(),
            r.excluded.to_string(),
        ])?;
    }
    let body = String::from_utf8(w.into_inner()?)?;
    let n = runs.len().max(1) as f64;
    let mean = runs.iter().map(|r| r.jnd_estimate).sum::<f64>() / n;
    let converged = runs.iter().filter(|r| r.termination.as_str() == "converged").count();
    let excluded = runs.iter().filter(|r| r.excluded).count();
    if out.json && a.out.is_none() {
        out.doc(&runs)?;
        return Ok(EXIT_OK);
    }
    out.artifact(
        a.out.as_deref(),
        &body,
        json!({"runs": runs.len(), "meanJnd": mean, "converged": converged, "excluded": excluded}),
        format!("{} runs, mean JND {mean:.4}, {converged} converged, {excluded} excluded", runs.len()),
    )?;
    Ok(EXIT_OK)
}

fn cmd_simulate(out: &mut Output, seed: u64, a: &SimulateArgs) -> Result<i32> {
    let (config, _) = match load_config(out, &a.config)? {
        Ok(x) => x,
        Err(code) => return Ok(code),
    };
    let policy = ParticipantPolicy::new(a.policy.kind()).abandoning(a.abandon);
    policy.validate().map_err(|e| UsageError(e.to_string()))?;
    if a.timeout == Some(0) {
        return Err(UsageError("--timeout must be positive".into()).into());
    }
    let mut opts = CohortOptions::new(a.n, policy, seed);
    opts.timeout_ms = a.timeout;
    opts.inter_arrival_ms = a.gap;
    let (result, code) = match simulate_cohort(&config, &opts) {
        Ok(r) => (r, EXIT_OK),
        Err(SimError::AttemptCap { attempts, finished, partial }) => {
            eprintln!("error: E_ATTEMPT_CAP: {attempts} attempts produced only {finished} finished sessions");
            (*partial, EXIT_RUNTIME)
        }
        Err(e) => return Err(anyhow!(e)),
    };
    if let Some(dir) = &a.emit_logs {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, p) in result.participants.iter().enumerate() {
            let log = studyspec_core::provenance::to_jsonl(&result.provenance_log(k));
            write_atomic(&dir.join(format!("{}.jsonl", p.participant_id)), log.as_bytes())?;
            let trials = to_json(&result.records[k])?;
            write_atomic(&dir.join(format!("{}.trials.json", p.participant_id)), trials.as_bytes())?;
        }
    }
    let coverage = studyspec_core::simulate::coverage_stats(&config, &result);
    let mut doc = serde_json::to_value(&result)?;
    doc["coverage"] = serde_json::to_value(&coverage)?;
    let body = to_json(&doc)?;
    let human = format!(
        "{} attempts: {} completed, {} abandoned, {} excluded",
        result.attempts(),
        result.completed,
        result.abandoned,
        result.excluded
    );
    let summary = json!({
        "attempts": result.attempts(),
        "completed": result.completed,
        "abandoned": result.abandoned,
        "excluded": result.excluded,
    });
    out.artifact(a.out.as_deref(), &body, summary, human)?;
    Ok(code)
}

fn cmd_dwell(out: &mut Output, logs: &[PathBuf], threshold: u64, instance: Option<&str>, file: Option<&Path>) -> Result<i32> {
    let mut reports: BTreeMap<String, DwellReport> = BTreeMap::new();
    for path in logs {
        let events = load_log(path)?;
        let report = match instance {
            Some(id) => dwell_per_item(&events, id),
            None => dwell_log(&events),
        }
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if reports.insert(name.clone(), report).is_some() {
            return Err(UsageError(format!("two logs are named `{name}`")).into());
        }
    }
    let kept = exclude_by_dwell(&reports, threshold);
    let excluded: Vec<&String> = reports.keys().filter(|k| !kept.contains(k)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant", "itemId", "totalDwell", "visits", "searchDwell", "nonSearchDwell", "kept"])?;
    for (p, r) in &reports {
        let keep = kept.contains(p).to_string();
        for (item, d) in &r.items {
            w.write_record([
                p.clone(),
                item.clone(),
                d.total_dwell.to_string(),
                d.visits.to_string(),
                d.search_dwell.to_string(),
                d.non_search_dwell.to_string(),
                keep.clone(),
            ])?;
        }
    }
    let body = String::from_utf8(w.into_inner()?)?;
    if out.json && file.is_none() {
        out.doc(&json!({"participants": reports, "kept": kept, "excluded": excluded, "thresholdMs": threshold}))?;
        return Ok(EXIT_OK);
    }
    out.artifact(
        file,
        &body,
        json!({"kept": kept, "excluded": excluded, "thresholdMs": threshold}),
        format!("kept {} of {} participants (max dwell > {threshold} ms)", kept.len(), reports.len()),
    )?;
    Ok(EXIT_OK)
}

fn cmd_ranksum(out: &mut Output, a: &Path, b: &Path) -> Result<i32> {
    let (xa, xb) = (read_number_column(a)?, read_number_column(b)?);
    let r = rank_sum_test(&xa, &xb).map_err(|e| UsageError(e.to_string()))?;
    if out.json {
        out.doc(&r)?;
    } else {
        let method = if r.exact { "exact" } else { "normal" };
        out.line(format!("W={} p={} n_a={} n_b={} method={method}", r.w, r.p_two_sided, r.n_a, r.n_b));
    }
    Ok(EXIT_OK)
}

fn cmd_timeline(out: &mut Output, log: &Path, file: Option<&Path>) -> Result<i32> {
    let events = load_log(log)?;
    let report = validate_log(&events);
    if !report.is_replayable() {
        return deny_log(out, &report);
    }
    let tl = reconstruct_timeline(&events).map_err(|e| anyhow!(e))?;
    let body = to_json(&tl)?;
    out.artifact(
        file,
        &body,
        json!({"intervals": tl.intervals.len(), "totalDuration": tl.total_duration}),
        format!("{} intervals, total {} ms", tl.intervals.len(), tl.total_duration),
    )?;
    Ok(EXIT_OK)
}

fn deny_log(out: &mut Output, report: &studyspec_core::provenance::LogReport) -> Result<i32> {
    if out.json {
        out.doc(report)?;
    } else {
        for f in &report.findings {
            eprintln!("{} event {} — {}", f.code, f.index, f.message);
        }
    }
    Ok(EXIT_DENIED)
}

fn cmd_replay_validate(out: &mut Output, log: &Path) -> Result<i32> {
    let report = validate_log(&load_log(log)?);
    if report.is_replayable() {
        if out.json {
            out.doc(&report)?;
        }
        return Ok(EXIT_OK);
    }
    if out.json {
        return deny_log(out, &report);
    }
    for f in &report.findings {
        out.line(format!("{} event {} — {}", f.code, f.index, f.message));
    }
    Ok(EXIT_DENIED)
}

