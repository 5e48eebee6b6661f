//! Command-line entry points: `run`, `eval`, `replay` and `validate`.
//!
//! Exit codes: 0 task stopped (or every suite task succeeded), 2 the agent
//! hit a cap or a suite task failed, 1 tool or environment error, 64 usage
//! error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::adb::AdbDevice;
use crate::agents::Agents;
use crate::backends::{
    BackendError, ChatBackend, FaultPlan, ModelConfig, OraclePolicy, RemoteBackend,
};
use crate::device::{Device, RollbackMechanism};
use crate::eval::{self, Annotations, EvalOptions, Policy, Suite, SuiteDevice, TaskSpec};
use crate::orchestrator::{inject_knowledge, run_task_with, Event, GroundTruthOracle, Hooks, RunConfig};
use crate::perception::{Perceiver, RemotePerception};
use crate::prompting::TemplateSet;
use crate::sim::{DeviceSpec, SimHandle};
use crate::trace::{read_trace, serialize_trace, TaskTrace, Terminal};
use crate::types::{Instruction, Locale, Operation, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_AGENT_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "mobile-operator", version, about = "Operate a phone UI with planning, decision and reflection agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one task and write its trace.
    Run(RunArgs),
    /// Run a task suite and report SR/CR/DA/RA.
    Eval(EvalArgs),
    /// Print a trace as a timeline.
    Replay(ReplayArgs),
    /// Check suite, device, config, annotation or template files.
    Validate(ValidateArgs),
}

/// Where operations are executed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeviceArg {
    /// Simulator; `None` is the bundled demo device.
    Sim(Option<PathBuf>),
    /// Real phone; `None` uses AGENT_ADB_SERIAL.
    Adb(Option<String>),
}

fn parse_device(s: &str) -> Result<DeviceArg, String> {
    match s.split_once(':') {
        None if s == "sim" => Ok(DeviceArg::Sim(None)),
        None if s == "adb" => Ok(DeviceArg::Adb(None)),
        Some(("sim", "demo")) => Ok(DeviceArg::Sim(None)),
        Some(("sim", p)) if !p.is_empty() => Ok(DeviceArg::Sim(Some(PathBuf::from(p)))),
        Some(("adb", serial)) if !serial.is_empty() => Ok(DeviceArg::Adb(Some(serial.to_string()))),
        _ => Err(format!("expected sim, sim:FILE or adb[:SERIAL], got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Oracle policy playing the task's ground truth (simulator only).
    Scripted,
    /// Chat-completions endpoint at AGENT_API_BASE.
    Remote,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Chat-completions base URL.
    #[arg(long, env = "AGENT_API_BASE")]
    api_base: Option<String>,
    /// API key for the remote backend.
    #[arg(long, env = "AGENT_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Model id used for every role.
    #[arg(long, env = "AGENT_MODEL", default_value = "gpt-4o")]
    model: String,
    /// Directory with <locale>/<role>.txt templates replacing the built-in ones.
    #[arg(long, env = "AGENT_TEMPLATES")]
    templates: Option<PathBuf>,
}

impl ModelArgs {
    fn remote(&self) -> Result<Arc<dyn ChatBackend>, BackendError> {
        let base = self
            .api_base
            .clone()
            .ok_or_else(|| BackendError::TransportError("AGENT_API_BASE is not set".into()))?;
        let key = self
            .api_key
            .clone()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::AuthError("AGENT_API_KEY is not set".into()))?;
        Ok(Arc::new(RemoteBackend::new(base, key)))
    }

    fn templates(&self, locale: Locale) -> Result<Arc<TemplateSet>, String> {
        match &self.templates {
            Some(dir) => TemplateSet::from_dir(dir, locale).map(Arc::new).map_err(|e| e.to_string()),
            None => Ok(TemplateSet::builtin(locale)),
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Task instruction. Optional with --task.
    #[arg(long, env = "AGENT_INSTRUCTION")]
    instruction: Option<String>,
    /// sim, sim:FILE or adb[:SERIAL].
    #[arg(long, env = "AGENT_DEVICE", default_value = "sim", value_parser = parse_device)]
    device: DeviceArg,
    #[arg(long, env = "AGENT_BACKEND", value_enum, default_value = "scripted")]
    backend: BackendKind,
    #[arg(long, env = "AGENT_LOCALE", default_value = "en")]
    locale: Locale,
    /// Hint file, one hint per line; lines starting with # are skipped.
    #[arg(long, env = "AGENT_KNOWLEDGE")]
    knowledge: Option<PathBuf>,
    #[arg(long, env = "AGENT_MAX_ITERS")]
    max_iters: Option<usize>,
    /// Where to write the trace (JSON lines).
    #[arg(long, env = "AGENT_TRACE")]
    trace: Option<PathBuf>,
    /// Run configuration (TOML); flags take precedence.
    #[arg(long, env = "AGENT_CONFIG")]
    config: Option<PathBuf>,
    /// Suite to take --task from.
    #[arg(long, env = "AGENT_SUITE", default_value = "builtin:demo")]
    suite: String,
    /// Task id: supplies instruction, ground truth and hints.
    #[arg(long, env = "AGENT_TASK")]
    task: Option<String>,
    /// Ground-truth operations for the scripted backend, separated by `;`
    /// or given repeatedly.
    #[arg(long = "ground-truth", env = "AGENT_GROUND_TRUTH", value_delimiter = ';', value_parser = crate::opspace::parse_operation)]
    ground_truth: Vec<Operation>,
    /// Perception service for real devices.
    #[arg(long, env = "PERCEPTION_URL")]
    perception_url: Option<String>,
    /// App name to Android package (or package/activity) map, TOML.
    #[arg(long, env = "AGENT_APPS")]
    apps: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Suite file, or builtin:demo / builtin:knowledge.
    #[arg(long, env = "AGENT_SUITE")]
    suite: String,
    /// Output directory for traces and report.json.
    #[arg(long, env = "AGENT_OUT")]
    out: PathBuf,
    /// Attach hints to the tasks that carry them.
    #[arg(long, env = "AGENT_INJECT_KNOWLEDGE")]
    inject_knowledge: bool,
    /// Tasks run at once.
    #[arg(long, env = "AGENT_PARALLEL", default_value_t = 1)]
    parallel: usize,
    #[arg(long, env = "AGENT_BACKEND", value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// Plant one ineffective and one erroneous decision per task (scripted backend).
    #[arg(long, env = "AGENT_FAULTS")]
    faults: bool,
    /// Disable the memory unit.
    #[arg(long, env = "AGENT_NO_MEMORY")]
    no_memory: bool,
    #[arg(long, env = "AGENT_MAX_ITERS")]
    max_iters: Option<usize>,
    /// Score existing real-device traces in --out with these annotations.
    #[arg(long, env = "AGENT_ANNOTATIONS")]
    annotations: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Trace file (JSON lines).
    #[arg(env = "AGENT_TRACE")]
    trace: PathBuf,
    /// Re-check the history rule and index order.
    #[arg(long, env = "AGENT_VERIFY")]
    verify: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, env = "AGENT_SUITE")]
    suite: Option<String>,
    #[arg(long = "device-spec", env = "AGENT_DEVICE_SPEC")]
    device_spec: Option<PathBuf>,
    #[arg(long, env = "AGENT_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "AGENT_ANNOTATIONS")]
    annotations: Option<PathBuf>,
    /// Template directory; both locales are checked.
    #[arg(long, env = "AGENT_TEMPLATES")]
    templates: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Replay(a) => cmd_replay(a, out),
        Command::Validate(a) => cmd_validate(a, out),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_ERROR
        }
    }
}

type CmdResult = Result<i32, String>;

fn load_suite(s: &str) -> Result<Suite, String> {
    match s {
        "builtin:demo" => Ok(Suite::demo()),
        "builtin:knowledge" => Ok(Suite::knowledge_demo()),
        path => Suite::from_path(path).map_err(|e| e.to_string()),
    }
}

fn read_hints(path: &Path) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn terminal_code(t: Option<&Terminal>) -> i32 {
    match t {
        Some(Terminal::Stopped) => EXIT_OK,
        Some(Terminal::MaxIterations | Terminal::MaxConsecutiveFailures) => EXIT_AGENT_FAILED,
        _ => EXIT_ERROR,
    }
}

fn print_event(out: &mut dyn Write, e: &Event) {
    let _ = match e {
        Event::IterationStarted { index, state } => writeln!(out, "[{index}] screen {state}"),
        Event::Decided { index, operation } => writeln!(out, "[{index}] action: {operation}"),
        Event::DecisionFault { index, attempt, message } => {
            writeln!(out, "[{index}] unusable reply (attempt {}): {message}", attempt + 1)
        }
        Event::Reflected { index, verdict, rollback } => match rollback {
            Some(s) => writeln!(out, "[{index}] verdict: {} {verdict:?}, rolled back to {s}", verdict.letter()),
            None => writeln!(out, "[{index}] verdict: {} {verdict:?}", verdict.letter()),
        },
        Event::Finished { terminal } => writeln!(out, "finished: {}", terminal.label()),
    };
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = load_config(a.config.as_deref())?;
    cfg.locale = a.locale;
    if let Some(n) = a.max_iters {
        cfg.max_iterations = n;
    }
    let task: Option<TaskSpec> = match &a.task {
        Some(id) => {
            let suite = load_suite(&a.suite)?;
            Some(suite.task(id).cloned().ok_or_else(|| format!("no task {id:?} in {}", a.suite))?)
        }
        None => None,
    };
    let text = a
        .instruction
        .clone()
        .or_else(|| task.as_ref().map(|t| t.instruction.clone()))
        .ok_or("--instruction or --task is required")?;
    let mut ins = Instruction::new(text).map_err(|e| e.to_string())?;
    let mut hints = task.as_ref().map(|t| t.knowledge.clone()).unwrap_or_default();
    if let Some(path) = &a.knowledge {
        hints = read_hints(path)?;
    }
    if !hints.is_empty() && (a.knowledge.is_some() || cfg.knowledge_injection) {
        cfg.knowledge_injection = true;
        ins = inject_knowledge(&ins, &hints);
    }
    let gt: Vec<Operation> = if a.ground_truth.is_empty() {
        task.as_ref().map(|t| t.ground_truth.clone()).unwrap_or_default()
    } else {
        a.ground_truth.clone()
    };
    let script = task.as_ref().map(|t| t.script.clone()).unwrap_or_default();
    let templates = a.model.templates(cfg.locale)?;
    let models = ModelConfig::uniform(&a.model.model);

    let trace = match &a.device {
        DeviceArg::Sim(path) => {
            let spec = match path {
                Some(p) => DeviceSpec::from_path(p).map_err(|e| format!("{}: {e}", p.display()))?,
                None => DeviceSpec::demo(),
            };
            let world = SimHandle::new(Arc::new(spec));
            let backend: Arc<dyn ChatBackend> = match a.backend {
                BackendKind::Scripted => {
                    if gt.is_empty() {
                        return Err("the scripted backend needs --task or --ground-truth".into());
                    }
                    Arc::new(OraclePolicy::new(world.clone(), gt.clone(), FaultPlan::none(), script).backend())
                }
                BackendKind::Remote => a.model.remote().map_err(|e| e.to_string())?,
            };
            let agents = Agents::new(backend, templates).with_models(models);
            let mut oracle = (!gt.is_empty()).then(|| GroundTruthOracle::new(gt.clone()));
            let mut device = world.clone();
            let mut sink = |e: &Event| print_event(out, e);
            run_task_with(
                &ins,
                &mut device,
                &world,
                &agents,
                &cfg,
                Hooks {
                    sink: Some(&mut sink),
                    oracle: oracle.as_mut().map(|o| o as _),
                },
            )
        }
        DeviceArg::Adb(serial) => {
            if a.backend == BackendKind::Scripted {
                return Err("the scripted backend needs a simulator device".into());
            }
            let backend = a.model.remote().map_err(|e| e.to_string())?;
            let url = a
                .perception_url
                .clone()
                .ok_or("PERCEPTION_URL is not set; real devices need the perception service")?;
            let perception: Arc<dyn Perceiver> = Arc::new(RemotePerception::new(url, cfg.locale));
            let apps: BTreeMap<String, String> = match &a.apps {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                    toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
                }
                None => BTreeMap::new(),
            };
            let mut device = AdbDevice::connect(serial.clone())
                .map_err(|e| e.to_string())?
                .with_apps(apps)
                .with_label_perception(perception.clone());
            let agents = Agents::new(backend, templates).with_models(models);
            let mut sink = |e: &Event| print_event(out, e);
            run_task_with(
                &ins,
                &mut device as &mut dyn Device,
                perception.as_ref(),
                &agents,
                &cfg,
                Hooks {
                    sink: Some(&mut sink),
                    oracle: None,
                },
            )
        }
    };
    if let Some(path) = &a.trace {
        std::fs::write(path, serialize_trace(&trace)).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        let _ = writeln!(out, "trace: {}", path.display());
    }
    if let Some(Terminal::BackendError { message } | Terminal::DeviceError { message } | Terminal::PerceptionError { message }) =
        &trace.terminal
    {
        return Err(message.clone());
    }
    Ok(terminal_code(trace.terminal.as_ref()))
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let suite = load_suite(&a.suite)?;
    let report = if let Some(path) = &a.annotations {
        if !matches!(suite.device, SuiteDevice::Adb) {
            return Err("annotations apply to real-device suites".into());
        }
        let ann = Annotations::from_path(path).map_err(|e| e.to_string())?;
        let mut traces = Vec::new();
        for t in &suite.tasks {
            let p = a.out.join("traces").join(format!("{}.jsonl", t.id));
            traces.push(load_trace(&p)?);
        }
        let report = eval::score_annotated(&suite, &traces, &ann).map_err(|e| e.to_string())?;
        write_report(&a.out, &report)?;
        report
    } else {
        let mut config = RunConfig {
            knowledge_injection: a.inject_knowledge,
            memory_enabled: !a.no_memory,
            ..RunConfig::default()
        };
        if let Some(n) = a.max_iters {
            config.max_iterations = n;
        }
        let policy = match a.backend {
            BackendKind::Scripted => Policy::Oracle,
            BackendKind::Remote => Policy::Backend(a.model.remote().map_err(|e| e.to_string())?),
        };
        let templates = match &a.model.templates {
            Some(_) => Some(a.model.templates(Locale::En)?),
            None => None,
        };
        let opts = EvalOptions {
            config,
            policy,
            faults: if a.faults { FaultPlan::one_of_each() } else { FaultPlan::none() },
            parallel: a.parallel.max(1),
            models: ModelConfig::uniform(&a.model.model),
            templates,
        };
        let run = eval::run_suite(&suite, &opts).map_err(|e| e.to_string())?;
        run.write(&suite, &a.out).map_err(|e| e.to_string())?;
        run.report
    };
    let _ = write!(out, "{}", report.render_table());
    let _ = writeln!(out, "report: {}", a.out.join("report.json").display());
    Ok(if report.overall.sr.hits == report.overall.sr.total {
        EXIT_OK
    } else {
        EXIT_AGENT_FAILED
    })
}

fn write_report(dir: &Path, report: &eval::MetricsReport) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join("report.json");
    std::fs::write(&path, report.to_json()).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn load_trace(path: &Path) -> Result<TaskTrace, String> {
    let f = std::fs::File::open(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    read_trace(std::io::BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_replay(a: ReplayArgs, out: &mut dyn Write) -> CmdResult {
    let trace = load_trace(&a.trace)?;
    let _ = writeln!(out, "Instruction: {}", trace.instruction.text());
    for h in trace.instruction.hints() {
        let _ = writeln!(out, "Hint: {h}");
    }
    let _ = writeln!(
        out,
        "Terminal: {}  iterations: {}  kept operations: {}",
        trace.terminal.as_ref().map_or("unfinished", |t| t.label()),
        trace.iterations.len(),
        trace.history.len()
    );
    for it in &trace.iterations {
        let _ = writeln!(out);
        let action = match (&it.fault, &it.record) {
            (Some(f), _) => format!("(no usable action: {f})"),
            (None, Some(r)) => r.operation.to_string(),
            (None, None) => "(none)".to_string(),
        };
        let _ = writeln!(out, "#{} {action}", it.index);
        if let Some(r) = &it.record {
            if !r.thought.is_empty() {
                let _ = writeln!(out, "  thought: {}", r.thought.replace('\n', " "));
            }
        }
        if let Some(v) = it.verdict() {
            let _ = write!(out, "  verdict: {} {v:?}", v.letter());
            if let Some(o) = it.oracle_verdict {
                let mark = if Some(o) == it.verdict() { "agrees" } else { "disagrees" };
                let _ = write!(out, " (ground truth {o:?}, {mark})");
            }
            let _ = writeln!(out);
        }
        if let Some(rb) = &it.rollback {
            let via = match trace.rollback_mechanism {
                Some(RollbackMechanism::BackKey) => " (Back key, approximate)",
                _ => "",
            };
            let _ = writeln!(out, "  rolled back to {rb}{via}");
        }
    }
    if a.verify {
        trace.verify().map_err(|e| format!("verification failed: {e}"))?;
        let counts = [Verdict::Correct, Verdict::Erroneous, Verdict::Ineffective]
            .map(|v| trace.iterations.iter().filter(|i| i.verdict() == Some(v)).count());
        let _ = writeln!(
            out,
            "verified: {} correct, {} erroneous, {} ineffective",
            counts[0], counts[1], counts[2]
        );
    }
    Ok(EXIT_OK)
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let mut checked = 0;
    if let Some(s) = &a.suite {
        let suite = load_suite(s)?;
        let _ = writeln!(out, "ok: suite {s} ({} tasks)", suite.tasks.len());
        checked += 1;
    }
    if let Some(p) = &a.device_spec {
        let spec = DeviceSpec::from_path(p).map_err(|e| format!("{}: {e}", p.display()))?;
        let _ = writeln!(out, "ok: device {} ({} screens)", p.display(), spec.screens.len());
        checked += 1;
    }
    if let Some(p) = &a.config {
        load_config(Some(p))?;
        let _ = writeln!(out, "ok: config {}", p.display());
        checked += 1;
    }
    if let Some(p) = &a.annotations {
        let ann = Annotations::from_path(p).map_err(|e| e.to_string())?;
        let _ = writeln!(out, "ok: annotations {} ({} tasks)", p.display(), ann.tasks.len());
        checked += 1;
    }
    if let Some(dir) = &a.templates {
        for locale in [Locale::En, Locale::Zh] {
            TemplateSet::from_dir(dir, locale).map_err(|e| format!("{} ({locale}): {e}", dir.display()))?;
        }
        let _ = writeln!(out, "ok: templates {}", dir.display());
        checked += 1;
    }
    if checked == 0 {
        return Err("nothing to validate; pass --suite, --device-spec, --config, --annotations or --templates".into());
    }
    Ok(EXIT_OK)
}
