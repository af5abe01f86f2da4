//! Validation surfaces: execution with repair, synthetic stability and
//! coverage, simulated batch submission, and benchmark with optimization.
//!
//! Each run gets a private directory `sandbox/<skill-id>/<layer>/<attempt>/`
//! holding a copy of the package, the logs and a `report.json`. Commands are
//! tokenized without a shell and run with a cleared environment. Network
//! isolation is not enforced.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use skillforge_core::contract::{needs_scheduler, tokenize, InputKind, OutputKind, SkillContract, TestCommand};
use skillforge_core::digest::{sha256_hex, Digester};
use skillforge_core::ownership::clean_relative;
use skillforge_core::registry::{Layer, Outcome};
use skillforge_core::stage::{FixPayload, OptimizePayload};
use wait_timeout::ChildExt;

use crate::config::SchedulerConfig;
use crate::fsutil::{self, FsError};
use crate::package::{apply_edits, package_digest, PackageError};

pub const JOB_ID_VAR: &str = "SF_JOB_ID";
pub const JOB_NAME_VAR: &str = "SF_JOB_NAME";
pub const NTASKS_VAR: &str = "SF_NTASKS";
pub const OUTPUT_DIR_VAR: &str = "SF_OUTPUT_DIR";
pub const ARM_OUTPUT_VAR: &str = "SF_ARM_OUTPUT";
pub const ARM_VAR: &str = "SF_ARM";

const SANDBOX_PATH: &str = "/usr/local/bin:/usr/bin:/bin";
const WORK: &str = "work";
const FIXTURE_DIR: &str = "_fixtures";
const OUT_DIR: &str = "out";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error(transparent)]
    Package(#[from] PackageError),
    #[error("system test not applicable: {0} declares no scheduler dependency")]
    NotApplicable(String),
    #[error("scheduler adapter misconfigured: {0}")]
    Misconfigured(String),
    #[error("missing fixture for input {input}: {reason}")]
    MissingFixture { input: String, reason: String },
    #[error("case {case} arm {arm}: scoring printed {output:?}, not a score in [0,1]")]
    NonNumericScore { case: String, arm: String, output: String },
    #[error("invalid benchmark cases: {0}")]
    InvalidCases(String),
    #[error("provider: {0}")]
    Provider(String),
}

/// Where runs go and how long they may take.
#[derive(Debug, Clone)]
pub struct Harness {
    project_root: PathBuf,
    sandbox_root: PathBuf,
    pub timeout: Duration,
}

impl Harness {
    pub fn new(project_root: impl Into<PathBuf>, timeout: Duration) -> Self {
        let project_root = project_root.into();
        Self {
            sandbox_root: project_root.join("sandbox"),
            project_root,
            timeout,
        }
    }

    pub fn run_dir(&self, skill_id: &str, layer: &str, attempt: u32) -> PathBuf {
        self.sandbox_root.join(skill_id).join(layer).join(attempt.to_string())
    }

    /// Project-relative locator of the report for one run.
    pub fn report_locator(&self, skill_id: &str, layer: &str, attempt: u32) -> String {
        self.locator(&self.run_dir(skill_id, layer, attempt).join("report.json"))
    }

    fn locator(&self, path: &Path) -> String {
        path.strip_prefix(&self.project_root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn fresh_dir(&self, dir: &Path) -> Result<(), FsError> {
        fsutil::remove_dir_if_exists(dir)?;
        fsutil::create_dir_all(dir)
    }
}

/// Outcome of one child process.
#[derive(Debug, Clone)]
struct RunResult {
    exit: Option<i32>,
    timed_out: bool,
    elapsed: Duration,
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    /// Set when the process could not be started at all.
    spawn_error: Option<String>,
}

fn run_process(
    tokens: &[String],
    cwd: &Path,
    env: &[(String, String)],
    timeout: Duration,
    log_dir: &Path,
) -> Result<RunResult, FsError> {
    let out_path = log_dir.join("stdout.log");
    let err_path = log_dir.join("stderr.log");
    let stdout = File::create(&out_path).map_err(fsutil::at(&out_path))?;
    let stderr = File::create(&err_path).map_err(fsutil::at(&err_path))?;
    let mut cmd = Command::new(&tokens[0]);
    cmd.args(&tokens[1..])
        .current_dir(cwd)
        .env_clear()
        .env("PATH", SANDBOX_PATH)
        .env("HOME", cwd)
        .env("LANG", "C")
        .env("TZ", "UTC")
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let started = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            return Ok(RunResult {
                exit: None,
                timed_out: false,
                elapsed: started.elapsed(),
                stdout: Vec::new(),
                stderr: Vec::new(),
                spawn_error: Some(format!("cannot start {}: {}", tokens[0], e)),
            })
        }
    };
    let waited = child.wait_timeout(timeout).map_err(fsutil::at(cwd))?;
    let (exit, timed_out) = match waited {
        Some(status) => (status.code(), false),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    let elapsed = started.elapsed();
    Ok(RunResult {
        exit,
        timed_out,
        elapsed,
        stdout: fs::read(&out_path).map_err(fsutil::at(&out_path))?,
        stderr: fs::read(&err_path).map_err(fsutil::at(&err_path))?,
        spawn_error: None,
    })
}

/// Trailing whitespace stripped per line, trailing blank lines dropped.
pub fn normalize_output(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    while lines.last() == Some(&"") {
        lines.pop();
    }
    lines.join("\n")
}

fn log_digest(run: &RunResult) -> String {
    let mut d = Digester::new();
    d.entry("stdout", normalize_output(&run.stdout).as_bytes());
    d.entry("stderr", normalize_output(&run.stderr).as_bytes());
    d.finish_hex()
}

fn resolve_cwd(work: &Path, working_dir: &str) -> Result<PathBuf, String> {
    match working_dir.trim() {
        "" | "." => Ok(work.to_path_buf()),
        wd => clean_relative(wd).map(|c| work.join(c)).map_err(|e| e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub skill_id: String,
    pub layer: Layer,
    pub attempt: u32,
    pub command: String,
    pub exit_status: Option<i32>,
    pub duration_seconds: f64,
    pub log_digest: String,
    pub artifacts_digest: String,
    pub verdict: Outcome,
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Project-relative path of the persisted report.
    pub report_locator: String,
}

impl TestReport {
    fn harness_fault(skill_id: &str, layer: Layer, attempt: u32, command: &str, note: String) -> Self {
        Self {
            skill_id: skill_id.to_string(),
            layer,
            attempt,
            command: command.to_string(),
            exit_status: None,
            duration_seconds: 0.0,
            log_digest: String::new(),
            artifacts_digest: String::new(),
            verdict: Outcome::Error,
            timed_out: false,
            note: Some(note),
            report_locator: String::new(),
        }
    }

    /// The report with durations zeroed, for hermeticity comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            duration_seconds: 0.0,
            ..self.clone()
        }
    }
}

fn persist<T: Serialize>(dir: &Path, value: &T) -> Result<(), FsError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fsutil::write_atomic(&dir.join("report.json"), text.as_bytes())
}

/// Runs `smoke` against a fresh copy of the package in `dir`.
fn run_command_report(
    h: &Harness,
    dir: &Path,
    skill_id: &str,
    layer: Layer,
    attempt: u32,
    package_root: &Path,
    smoke: &TestCommand,
    env: &[(String, String)],
) -> Result<TestReport, HarnessError> {
    h.fresh_dir(dir)?;
    let locator = h.locator(&dir.join("report.json"));
    let fault = |note: String| {
        let mut r = TestReport::harness_fault(skill_id, layer, attempt, &smoke.command, note);
        r.report_locator = locator.clone();
        r
    };
    let work = dir.join(WORK);
    let report = match (tokenize(&smoke.command), fsutil::copy_tree(package_root, &work)) {
        (Err(e), _) => fault(e.to_string()),
        (_, Err(e)) => fault(format!("sandbox setup failed: {}", e)),
        (Ok(tokens), Ok(())) => match resolve_cwd(&work, &smoke.working_dir) {
            Err(e) => fault(e),
            Ok(cwd) => {
                let timeout = Duration::from_secs(smoke.timeout_secs.max(1)).min(h.timeout.max(Duration::from_millis(1)));
                let run = run_process(&tokens, &cwd, env, timeout, dir)?;
                match run.spawn_error.clone() {
                    Some(e) => fault(e),
                    None => {
                        let pass = !run.timed_out && run.exit == Some(smoke.expected_exit);
                        TestReport {
                            skill_id: skill_id.to_string(),
                            layer,
                            attempt,
                            command: smoke.command.clone(),
                            exit_status: run.exit,
                            duration_seconds: run.elapsed.as_secs_f64(),
                            log_digest: log_digest(&run),
                            artifacts_digest: fsutil::dir_digest(&work, |_| true)?,
                            verdict: if pass { Outcome::Pass } else { Outcome::Fail },
                            timed_out: run.timed_out,
                            note: run.timed_out.then(|| format!("timeout after {}s", timeout.as_secs_f64())),
                            report_locator: locator.clone(),
                        }
                    }
                }
            }
        },
    };
    persist(dir, &report)?;
    Ok(report)
}

/// Runs the smoke target once. An absent target is a harness error.
pub fn execution_test(
    h: &Harness,
    skill_id: &str,
    package_root: &Path,
    smoke: Option<&TestCommand>,
    attempt: u32,
) -> Result<TestReport, HarnessError> {
    let dir = h.run_dir(skill_id, "execution", attempt);
    match smoke {
        Some(cmd) => run_command_report(h, &dir, skill_id, Layer::Execution, attempt, package_root, cmd, &[]),
        None => {
            h.fresh_dir(&dir)?;
            let mut r = TestReport::harness_fault(skill_id, Layer::Execution, attempt, "", "no smoke target".into());
            r.report_locator = h.locator(&dir.join("report.json"));
            persist(&dir, &r)?;
            Ok(r)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RepairStatus {
    Repaired { attempt: u32 },
    Removed { attempts: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairOutcome {
    pub status: RepairStatus,
    /// One report per attempt made inside the loop, in order.
    pub reports: Vec<TestReport>,
    pub diagnoses: Vec<String>,
}

/// Asks for fixes and reruns the smoke target until it passes or the budget
/// of total execution attempts is spent. Rejected edits count as attempts.
pub fn repair_loop<F>(
    h: &Harness,
    skill_id: &str,
    package_root: &Path,
    failing: &TestReport,
    smoke: &TestCommand,
    budget: u32,
    mut fixer: F,
) -> Result<RepairOutcome, HarnessError>
where
    F: FnMut(u32, &TestReport) -> Result<FixPayload, HarnessError>,
{
    let mut reports = Vec::new();
    let mut diagnoses = Vec::new();
    let mut last = failing.clone();
    for attempt in failing.attempt + 1..=budget {
        let fix = fixer(attempt, &last)?;
        diagnoses.push(fix.diagnosis.clone());
        let report = match apply_edits(package_root, &fix.edits) {
            Ok(_) => execution_test(h, skill_id, package_root, Some(smoke), attempt)?,
            Err(e) => {
                let dir = h.run_dir(skill_id, "execution", attempt);
                h.fresh_dir(&dir)?;
                let mut r = TestReport::harness_fault(
                    skill_id,
                    Layer::Execution,
                    attempt,
                    &smoke.command,
                    format!("edit rejected: {}", e),
                );
                r.report_locator = h.locator(&dir.join("report.json"));
                persist(&dir, &r)?;
                r
            }
        };
        let passed = report.verdict == Outcome::Pass;
        reports.push(report.clone());
        if passed {
            return Ok(RepairOutcome {
                status: RepairStatus::Repaired { attempt },
                reports,
                diagnoses,
            });
        }
        last = report;
    }
    Ok(RepairOutcome {
        status: RepairStatus::Removed {
            attempts: budget.max(failing.attempt),
        },
        reports,
        diagnoses,
    })
}

// ---- synthetic -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageItem {
    pub kind: InterfaceKind,
    pub exercised: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub skill_id: String,
    pub attempt: u32,
    pub contract_coverage: BTreeMap<String, CoverageItem>,
    pub stability: Stability,
    pub run_digests: (String, String),
    pub gaps: Vec<String>,
    pub verdict: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub report_locator: String,
}

fn default_value(kind: InputKind) -> &'static str {
    match kind {
        // an empty file would leave most tools nothing to act on
        InputKind::File => "synthetic record one\nsynthetic record two\n",
        InputKind::Argument => "synthetic",
        InputKind::Number => "0",
    }
}

fn perturbed_value(kind: InputKind, current: &str) -> String {
    match kind {
        InputKind::Number => {
            if current == "1" {
                "2".to_string()
            } else {
                "1".to_string()
            }
        }
        _ if current == "perturbed" => "perturbed-again".to_string(),
        _ => "perturbed".to_string(),
    }
}

/// A value the example invocations give for `name`, as `--name value` or
/// `name=value`.
fn example_value(contract: &SkillContract, name: &str) -> Option<String> {
    let flag = format!("--{}", name);
    let assign = format!("{}=", name);
    for ex in &contract.example_invocations {
        let tokens = tokenize(ex).unwrap_or_default();
        for (i, t) in tokens.iter().enumerate() {
            if *t == flag {
                if let Some(v) = tokens.get(i + 1).filter(|v| !v.contains('{')) {
                    return Some(v.clone());
                }
            }
            if let Some(v) = t.strip_prefix(&assign).filter(|v| !v.is_empty() && !v.contains('{')) {
                return Some(v.to_string());
            }
            if let Some(v) = t.strip_prefix(&format!("{}=", flag)).filter(|v| !v.contains('{')) {
                return Some(v.to_string());
            }
        }
    }
    None
}

/// Declared-volatile output patterns from `volatile: <pattern>` assumptions.
fn volatile_patterns(contract: &SkillContract) -> Vec<String> {
    contract
        .environment_assumptions
        .iter()
        .filter_map(|a| a.strip_prefix("volatile:"))
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect()
}

fn is_volatile(rel: &str, patterns: &[String]) -> bool {
    let file = rel.rsplit('/').next().unwrap_or(rel);
    patterns.iter().any(|p| match p.strip_prefix('*') {
        Some(suffix) => file.ends_with(suffix),
        None => file == p || rel == p,
    })
}

struct SyntheticRun {
    digest: String,
    ok: bool,
    stdout_seen: bool,
    out_files: Vec<String>,
    note: Option<String>,
}

fn synthetic_run(
    h: &Harness,
    dir: &Path,
    package_root: &Path,
    template: &[String],
    values: &BTreeMap<String, (InputKind, String)>,
    volatile: &[String],
) -> Result<SyntheticRun, HarnessError> {
    h.fresh_dir(dir)?;
    let work = dir.join(WORK);
    fsutil::copy_tree(package_root, &work)?;
    fsutil::create_dir_all(&work.join(OUT_DIR))?;
    let mut subst: BTreeMap<String, String> = BTreeMap::new();
    for (name, (kind, value)) in values {
        let actual = if *kind == InputKind::File {
            let rel = format!("{}/{}", FIXTURE_DIR, name);
            fsutil::write_atomic(&work.join(&rel), value.as_bytes())?;
            rel
        } else {
            value.clone()
        };
        subst.insert(format!("{{{}}}", name), actual);
    }
    let tokens: Vec<String> = template
        .iter()
        .map(|t| subst.iter().fold(t.clone(), |acc, (ph, v)| acc.replace(ph, v)))
        .collect();
    let env = vec![(OUTPUT_DIR_VAR.to_string(), OUT_DIR.to_string())];
    let run = run_process(&tokens, &work, &env, h.timeout, dir)?;
    let out_dir = work.join(OUT_DIR);
    let out_files: Vec<String> = fsutil::list_files(&out_dir)
        .into_iter()
        .filter(|f| !is_volatile(f, volatile))
        .collect();
    let mut d = Digester::new();
    d.entry("exit", format!("{:?}", run.exit).as_bytes());
    d.entry("stdout", normalize_output(&run.stdout).as_bytes());
    for f in &out_files {
        let bytes = fs::read(out_dir.join(f)).map_err(fsutil::at(out_dir.join(f)))?;
        d.entry(f, normalize_output(&bytes).as_bytes());
    }
    let note = run.spawn_error.clone().or_else(|| {
        if run.timed_out {
            Some("timeout".to_string())
        } else if run.exit != Some(0) {
            Some(format!("exit status {:?}", run.exit))
        } else {
            None
        }
    });
    Ok(SyntheticRun {
        digest: d.finish_hex(),
        ok: note.is_none(),
        stdout_seen: !normalize_output(&run.stdout).is_empty(),
        out_files,
        note,
    })
}

/// Runs the first example invocation twice under identical fixtures, then
/// once per input with that input perturbed.
///
/// `{name}` placeholders in the invocation take the fixture values; file
/// inputs become files under `_fixtures/`. `fixtures` overrides defaults.
pub fn synthetic_test(
    h: &Harness,
    skill_id: &str,
    package_root: &Path,
    contract: &SkillContract,
    fixtures: &BTreeMap<String, String>,
    attempt: u32,
) -> Result<SyntheticReport, HarnessError> {
    let dir = h.run_dir(skill_id, "synthetic", attempt);
    h.fresh_dir(&dir)?;
    let locator = h.locator(&dir.join("report.json"));
    for name in fixtures.keys() {
        if !contract.inputs.iter().any(|i| &i.name == name) {
            return Err(HarnessError::MissingFixture {
                input: name.clone(),
                reason: "fixture names no declared input".to_string(),
            });
        }
    }
    let mut values: BTreeMap<String, (InputKind, String)> = BTreeMap::new();
    for input in &contract.inputs {
        let v = fixtures
            .get(&input.name)
            .cloned()
            .or_else(|| example_value(contract, &input.name))
            .unwrap_or_else(|| default_value(input.kind).to_string());
        values.insert(input.name.clone(), (input.kind, v));
    }
    let template = match contract.example_invocations.first().map(|e| tokenize(e)) {
        Some(Ok(t)) => t,
        Some(Err(e)) => return finish_error(skill_id, attempt, contract, &dir, locator, e.to_string()),
        None => {
            return finish_error(
                skill_id,
                attempt,
                contract,
                &dir,
                locator,
                "no example invocation to drive".to_string(),
            )
        }
    };
    let volatile = volatile_patterns(contract);
    let first = synthetic_run(h, &dir.join("run1"), package_root, &template, &values, &volatile)?;
    let second = synthetic_run(h, &dir.join("run2"), package_root, &template, &values, &volatile)?;
    if let Some(note) = first.note.clone().filter(|_| !first.ok) {
        if note.starts_with("cannot start") {
            return finish_error(skill_id, attempt, contract, &dir, locator, note);
        }
    }
    let stability = if first.digest == second.digest {
        Stability::Stable
    } else {
        Stability::Unstable
    };

    let joined = template.join(" ");
    let mut coverage = BTreeMap::new();
    let mut gaps = Vec::new();
    for input in &contract.inputs {
        let placeholder = format!("{{{}}}", input.name);
        let item = if !joined.contains(&placeholder) {
            if input.required {
                gaps.push(input.name.clone());
            }
            CoverageItem {
                kind: InterfaceKind::Input,
                exercised: false,
                detail: "not passed by the example invocation".to_string(),
            }
        } else {
            let mut perturbed = values.clone();
            let (kind, current) = values[&input.name].clone();
            perturbed.insert(input.name.clone(), (kind, perturbed_value(kind, &current)));
            let ablate = synthetic_run(
                h,
                &dir.join(format!("ablate-{}", input.name)),
                package_root,
                &template,
                &perturbed,
                &volatile,
            )?;
            let used = ablate.digest != first.digest;
            if !used && input.required {
                gaps.push(input.name.clone());
            }
            CoverageItem {
                kind: InterfaceKind::Input,
                exercised: used,
                detail: if used {
                    "perturbing it changes the output".to_string()
                } else {
                    "perturbing it changes nothing".to_string()
                },
            }
        };
        coverage.insert(input.name.clone(), item);
    }
    for output in &contract.outputs {
        let seen = match output.kind {
            OutputKind::Stream => first.stdout_seen,
            OutputKind::File => first.out_files.iter().any(|f| {
                let file = f.rsplit('/').next().unwrap_or(f);
                file == output.name || file.split('.').next() == Some(output.name.as_str())
            }),
        };
        if !seen {
            gaps.push(output.name.clone());
        }
        coverage.insert(
            output.name.clone(),
            CoverageItem {
                kind: InterfaceKind::Output,
                exercised: seen,
                detail: if seen { "observed" } else { "not observed" }.to_string(),
            },
        );
    }
    let pass = first.ok && second.ok && stability == Stability::Stable && gaps.is_empty();
    let report = SyntheticReport {
        skill_id: skill_id.to_string(),
        attempt,
        contract_coverage: coverage,
        stability,
        run_digests: (first.digest, second.digest),
        gaps,
        verdict: if pass { Outcome::Pass } else { Outcome::Fail },
        note: first.note.or(second.note),
        report_locator: locator,
    };
    persist(&dir, &report)?;
    Ok(report)
}

fn finish_error(
    skill_id: &str,
    attempt: u32,
    contract: &SkillContract,
    dir: &Path,
    locator: String,
    note: String,
) -> Result<SyntheticReport, HarnessError> {
    let mut coverage = BTreeMap::new();
    for i in &contract.inputs {
        coverage.insert(
            i.name.clone(),
            CoverageItem {
                kind: InterfaceKind::Input,
                exercised: false,
                detail: "not run".to_string(),
            },
        );
    }
    for o in &contract.outputs {
        coverage.insert(
            o.name.clone(),
            CoverageItem {
                kind: InterfaceKind::Output,
                exercised: false,
                detail: "not run".to_string(),
            },
        );
    }
    let report = SyntheticReport {
        skill_id: skill_id.to_string(),
        attempt,
        contract_coverage: coverage,
        stability: Stability::Unstable,
        run_digests: (String::new(), String::new()),
        gaps: Vec::new(),
        verdict: Outcome::Error,
        note: Some(note),
        report_locator: locator,
    };
    persist(dir, &report)?;
    Ok(report)
}

// ---- system ----------------------------------------------------------------------

/// Renders batch submissions and runs them on a local simulated backend.
#[derive(Debug, Clone)]
pub struct SlurmAdapter {
    pub config: SchedulerConfig,
    /// Whether the backend exports the scheduler variables to the job.
    pub inject_env: bool,
}

impl SlurmAdapter {
    pub fn new(config: SchedulerConfig) -> Self {
        Self {
            config,
            inject_env: true,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let c = &self.config;
        if c.partition.trim().is_empty() {
            return Err(HarnessError::Misconfigured("empty partition".into()));
        }
        if c.ntasks == 0 {
            return Err(HarnessError::Misconfigured("ntasks must be at least 1".into()));
        }
        let parts: Vec<&str> = c.time_limit.split(':').collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
            return Err(HarnessError::Misconfigured(format!(
                "time limit {:?} is not HH:MM:SS",
                c.time_limit
            )));
        }
        Ok(())
    }

    pub fn render(&self, job_name: &str, command: &str) -> Result<String, HarnessError> {
        self.validate()?;
        Ok(format!(
            "#!/bin/sh\n#SBATCH --job-name={}\n#SBATCH --partition={}\n#SBATCH --ntasks={}\n#SBATCH --time={}\n#SBATCH --output=job.out\n{}\n",
            job_name, self.config.partition, self.config.ntasks, self.config.time_limit, command
        ))
    }

    /// Deterministic simulated job id.
    pub fn job_id(job_name: &str) -> String {
        let h = sha256_hex(job_name.as_bytes());
        let n = u32::from_str_radix(&h[..6], 16).unwrap_or(0);
        (100_000 + n % 900_000).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub report: TestReport,
    pub rendered_submission: String,
}

pub fn system_test(
    h: &Harness,
    skill_id: &str,
    package_root: &Path,
    contract: &SkillContract,
    smoke: Option<&TestCommand>,
    adapter: &SlurmAdapter,
    attempt: u32,
) -> Result<SystemReport, HarnessError> {
    if !needs_scheduler(contract) {
        return Err(HarnessError::NotApplicable(skill_id.to_string()));
    }
    let dir = h.run_dir(skill_id, "system", attempt);
    let job_name = format!("sf-{}", skill_id);
    let command = smoke.map(|s| s.command.as_str()).unwrap_or("");
    let rendered = adapter.render(&job_name, command)?;
    let Some(smoke) = smoke else {
        h.fresh_dir(&dir)?;
        let mut r = TestReport::harness_fault(skill_id, Layer::System, attempt, "", "no smoke target".into());
        r.report_locator = h.locator(&dir.join("report.json"));
        let out = SystemReport {
            report: r,
            rendered_submission: rendered,
        };
        persist(&dir, &out)?;
        return Ok(out);
    };
    if adapter.config.ntasks > adapter.config.max_ntasks {
        h.fresh_dir(&dir)?;
        let mut r = TestReport::harness_fault(skill_id, Layer::System, attempt, &smoke.command, String::new());
        r.verdict = Outcome::Fail;
        r.note = Some(format!(
            "queue rejected: {} tasks exceed the partition limit of {}",
            adapter.config.ntasks, adapter.config.max_ntasks
        ));
        r.report_locator = h.locator(&dir.join("report.json"));
        let out = SystemReport {
            report: r,
            rendered_submission: rendered,
        };
        persist(&dir, &out)?;
        return Ok(out);
    }
    let env: Vec<(String, String)> = if adapter.inject_env {
        vec![
            (JOB_ID_VAR.to_string(), SlurmAdapter::job_id(&job_name)),
            (JOB_NAME_VAR.to_string(), job_name.clone()),
            (NTASKS_VAR.to_string(), adapter.config.ntasks.to_string()),
        ]
    } else {
        Vec::new()
    };
    let report = run_command_report(h, &dir, skill_id, Layer::System, attempt, package_root, smoke, &env)?;
    fsutil::write_atomic(&dir.join("submission.sh"), rendered.as_bytes())?;
    let out = SystemReport {
        report,
        rendered_submission: rendered,
    };
    persist(&dir, &out)?;
    Ok(out)
}

// ---- benchmark -------------------------------------------------------------------

/// One line of a benchmark case file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    #[serde(default)]
    pub fixtures: Vec<String>,
    pub with_command: String,
    pub baseline_command: String,
    pub scoring_command: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub with_skill_score: f64,
    pub baseline_score: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub skill_id: String,
    pub cases: Vec<CaseScore>,
    pub margin: f64,
    pub threshold: f64,
    pub weak: bool,
}

impl BenchmarkReport {
    pub fn from_scores(skill_id: &str, cases: Vec<CaseScore>, threshold: f64) -> Result<Self, HarnessError> {
        if cases.is_empty() {
            return Err(HarnessError::InvalidCases("no cases".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &cases {
            if !seen.insert(c.case_id.as_str()) {
                return Err(HarnessError::InvalidCases(format!("duplicate case id {}", c.case_id)));
            }
            for s in [c.with_skill_score, c.baseline_score] {
                if !(0.0..=1.0).contains(&s) {
                    return Err(HarnessError::InvalidCases(format!("case {} score {} outside [0,1]", c.case_id, s)));
                }
            }
        }
        let margin = mean_margin(&cases);
        Ok(Self {
            skill_id: skill_id.to_string(),
            cases,
            margin,
            threshold,
            weak: margin < threshold,
        })
    }
}

/// Persists a benchmark report scored elsewhere, such as by the provider.
pub fn persist_benchmark(h: &Harness, report: &BenchmarkReport, attempt: u32) -> Result<String, HarnessError> {
    let dir = h.run_dir(&report.skill_id, "benchmark", attempt);
    h.fresh_dir(&dir)?;
    persist(&dir, report)?;
    Ok(h.report_locator(&report.skill_id, "benchmark", attempt))
}

pub fn mean_margin(cases: &[CaseScore]) -> f64 {
    let total: f64 = cases.iter().map(|c| c.with_skill_score - c.baseline_score).sum();
    total / cases.len() as f64
}

pub fn load_cases(path: &Path) -> Result<Vec<BenchmarkCase>, HarnessError> {
    let text = fsutil::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| HarnessError::InvalidCases(format!("line {}: {}", i + 1, e)))
        })
        .collect()
}

fn parse_score(text: &str) -> Option<f64> {
    let v: f64 = text.trim().parse().ok()?;
    (v.is_finite() && (0.0..=1.0).contains(&v)).then_some(v)
}

/// Scores one arm of one case; a crashing arm scores 0.
#[allow(clippy::too_many_arguments)]
fn score_arm(
    h: &Harness,
    dir: &Path,
    package_root: &Path,
    case: &BenchmarkCase,
    arm: &str,
    command: &str,
    with_package: bool,
    notes: &mut Vec<String>,
) -> Result<f64, HarnessError> {
    let arm_dir = dir.join(arm);
    h.fresh_dir(&arm_dir)?;
    let work = arm_dir.join(WORK);
    if with_package {
        fsutil::copy_tree(package_root, &work)?;
    } else {
        fsutil::create_dir_all(&work)?;
    }
    for f in &case.fixtures {
        let rel = clean_relative(f).map_err(|e| HarnessError::MissingFixture {
            input: f.clone(),
            reason: e.to_string(),
        })?;
        let src = package_root.join(&rel);
        if !src.is_file() {
            return Err(HarnessError::MissingFixture {
                input: f.clone(),
                reason: "not found in the package".into(),
            });
        }
        fsutil::copy_file(&src, &work.join(&rel))?;
    }
    let tokens = tokenize(command).map_err(|e| HarnessError::InvalidCases(e.to_string()))?;
    let env = vec![(ARM_VAR.to_string(), arm.to_string())];
    let run = run_process(&tokens, &work, &env, h.timeout, &arm_dir)?;
    if run.spawn_error.is_some() || run.timed_out || run.exit != Some(0) {
        notes.push(format!("{} arm crashed; scored 0", arm));
        return Ok(0.0);
    }
    let arm_output = arm_dir.join("stdout.log");
    let score_dir = dir.join(format!("score-{}", arm));
    h.fresh_dir(&score_dir)?;
    let score_work = score_dir.join(WORK);
    fsutil::copy_tree(package_root, &score_work)?;
    let tokens = tokenize(&case.scoring_command).map_err(|e| HarnessError::InvalidCases(e.to_string()))?;
    let env = vec![
        (ARM_VAR.to_string(), arm.to_string()),
        (ARM_OUTPUT_VAR.to_string(), arm_output.to_string_lossy().into_owned()),
    ];
    let scored = run_process(&tokens, &score_work, &env, h.timeout, &score_dir)?;
    let printed = String::from_utf8_lossy(&scored.stdout).into_owned();
    match parse_score(&printed) {
        Some(s) if scored.exit == Some(0) => Ok(s),
        _ => Err(HarnessError::NonNumericScore {
            case: case.case_id.clone(),
            arm: arm.to_string(),
            output: printed.trim().to_string(),
        }),
    }
}

/// Runs both arms of every case under identical fixtures and scores them.
pub fn benchmark_compare(
    h: &Harness,
    skill_id: &str,
    package_root: &Path,
    cases: &[BenchmarkCase],
    threshold: f64,
    attempt: u32,
) -> Result<BenchmarkReport, HarnessError> {
    if cases.is_empty() {
        return Err(HarnessError::InvalidCases("no cases".into()));
    }
    let dir = h.run_dir(skill_id, "benchmark", attempt);
    h.fresh_dir(&dir)?;
    let mut scores = Vec::with_capacity(cases.len());
    for case in cases {
        let case_dir = dir.join(&case.case_id);
        let mut notes = Vec::new();
        let with = score_arm(h, &case_dir, package_root, case, "with", &case.with_command, true, &mut notes)?;
        let base = score_arm(
            h,
            &case_dir,
            package_root,
            case,
            "baseline",
            &case.baseline_command,
            false,
            &mut notes,
        )?;
        scores.push(CaseScore {
            case_id: case.case_id.clone(),
            with_skill_score: with,
            baseline_score: base,
            notes,
        });
    }
    let report = BenchmarkReport::from_scores(skill_id, scores, threshold)?;
    persist(&dir, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum OptimizeStatus {
    Optimized { round: u32 },
    Exhausted { rounds: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRound {
    pub round: u32,
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub status: OptimizeStatus,
    pub rounds: Vec<OptimizeRound>,
    pub last: BenchmarkReport,
}

/// Applies optimize edits and benchmarks again until the margin clears the
/// threshold or the rounds run out. An edit that breaks the smoke target is
/// rolled back and still uses its round.
pub fn optimize_loop<O, B>(
    h: &Harness,
    skill_id: &str,
    package_root: &Path,
    weak: &BenchmarkReport,
    smoke: Option<&TestCommand>,
    budget: u32,
    mut optimizer: O,
    mut rebenchmark: B,
) -> Result<OptimizeOutcome, HarnessError>
where
    O: FnMut(u32, &BenchmarkReport) -> Result<OptimizePayload, HarnessError>,
    B: FnMut(u32) -> Result<BenchmarkReport, HarnessError>,
{
    let mut rounds = Vec::new();
    let mut last = weak.clone();
    for round in 1..=budget {
        let payload = optimizer(round, &last)?;
        let backup = h.run_dir(skill_id, "optimize", round).join("backup");
        fsutil::remove_dir_if_exists(&backup)?;
        fsutil::copy_tree(package_root, &backup)?;
        let before = package_digest(package_root)?;
        let restore = || -> Result<(), HarnessError> {
            fsutil::remove_dir_if_exists(package_root)?;
            fsutil::copy_tree(&backup, package_root)?;
            debug_assert_eq!(package_digest(package_root).ok(), Some(before.clone()));
            Ok(())
        };
        if let Err(e) = apply_edits(package_root, &payload.actions) {
            rounds.push(OptimizeRound {
                round,
                note: format!("edit rejected: {}", e),
                margin: None,
            });
            continue;
        }
        let dir = h.run_dir(skill_id, "optimize", round).join("smoke");
        let smoke_ok = match smoke {
            Some(cmd) => {
                run_command_report(h, &dir, skill_id, Layer::Execution, round, package_root, cmd, &[])?.verdict
                    == Outcome::Pass
            }
            None => true,
        };
        if !smoke_ok {
            restore()?;
            rounds.push(OptimizeRound {
                round,
                note: "edit broke the smoke target; restored".to_string(),
                margin: None,
            });
            continue;
        }
        last = rebenchmark(round)?;
        rounds.push(OptimizeRound {
            round,
            note: if last.weak { "still weak" } else { "cleared threshold" }.to_string(),
            margin: Some(last.margin),
        });
        if !last.weak {
            return Ok(OptimizeOutcome {
                status: OptimizeStatus::Optimized { round },
                rounds,
                last,
            });
        }
    }
    Ok(OptimizeOutcome {
        status: OptimizeStatus::Exhausted { rounds: budget },
        rounds,
        last,
    })
}
