//! Library side of the `llnlab` binary: config loading, task dispatch and
//! report writing.

pub mod assertions;
pub mod config;
pub mod tasks;

use std::path::{Path, PathBuf};
use std::time::Instant;

use llnlab_core::report::to_json_string;
use serde_json::{json, Value};

use crate::assertions::AssertionOutcome;
use crate::config::{ExperimentConfig, TaskKind};

pub const SEED_ENV: &str = "LLNLAB_SEED";
pub const THREADS_ENV: &str = "LLNLAB_THREADS";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

impl From<llnlab_core::Error> for CliError {
    fn from(e: llnlab_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// One `llnlab <task>` call after flag parsing.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub task: TaskKind,
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_ASSERTION
        }
    }
}

fn env_u64(name: &str) -> Result<Option<u64>, CliError> {
    match std::env::var(name) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{name}={s} is not a non-negative integer"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then config, then environment.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    env_u64(SEED_ENV)?.ok_or_else(|| CliError::Config(format!("no seed: set `seed`, pass --seed or export {SEED_ENV}")))
}

pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let t = match flag {
        Some(t) => Some(t),
        None => env_u64(THREADS_ENV)?.map(|t| t as usize),
    };
    if t == Some(0) {
        return Err(CliError::Config("thread count must be positive".into()));
    }
    Ok(t)
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Validates, runs and writes one config. Nothing is written unless the
/// task finished.
pub fn run(inv: &Invocation) -> Result<RunOutcome, CliError> {
    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let mut config = ExperimentConfig::load(&inv.config)?;
    if config.task != inv.task {
        return Err(CliError::Config(format!(
            "config task is `{}` but the `{}` subcommand was used",
            config.task.as_str(),
            inv.task.as_str()
        )));
    }
    let params = config.validate()?;
    let seed = resolve_seed(inv.seed, config.seed)?;
    config.seed = Some(seed);
    let threads = resolve_threads(inv.threads)?;
    let out_dir = match (&inv.out, &config.output_path) {
        (Some(o), _) => o.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => {
            return Err(CliError::Config(
                "no output directory: set `output_path` or pass --out".into(),
            ))
        }
    };
    let families = config.family_list()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let output = pool.install(|| tasks::run_task(&params, &families, &config.normalizer, seed))?;

    let mut result = output.result;
    llnlab_core::report::round_json(&mut result);
    let outcomes: Vec<AssertionOutcome> = config.assertions.iter().map(|a| a.evaluate(&result)).collect();
    let passed = outcomes.iter().all(|o| o.passed);

    let summary = json!({
        "name": config.name,
        "task": config.task.as_str(),
        "seed": seed,
        "families": families,
        "normalizer": config.normalizer,
        "result": result,
        "assertions": outcomes,
        "passed": passed,
    });
    let mut bodies: Vec<(String, String)> = Vec::new();
    for (stem, table) in &output.tables {
        bodies.push((format!("{stem}.csv"), table.to_csv_string()?));
    }
    bodies.push(("summary.json".into(), to_json_string(&summary)?));

    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    for (name, body) in &bodies {
        write(&out_dir.join(name), body)?;
    }
    let mut outputs: Vec<String> = bodies.into_iter().map(|(n, _)| n).collect();
    outputs.push("manifest.json".into());
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config_path": inv.config.display().to_string(),
        "config": config,
        "seed": seed,
        "threads": threads,
        "started_at": started_at.to_rfc3339(),
        "finished_at": chrono::Utc::now().to_rfc3339(),
        "runtime_ms": clock.elapsed().as_millis() as u64,
        "outputs": outputs,
        "assertions_total": outcomes.len(),
        "assertions_failed": outcomes.iter().filter(|o| !o.passed).count(),
        "passed": passed,
    });
    write(&out_dir.join("manifest.json"), &to_json_string(&manifest)?)?;
    Ok(RunOutcome {
        out_dir,
        outputs,
        assertions: outcomes,
        passed,
    })
}

/// Reads a finished run back for the `report` subcommand.
pub fn load_run(dir: &Path) -> Result<(Value, Value), CliError> {
    let read = |name: &str| -> Result<Value, CliError> {
        let p = dir.join(name);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
    };
    Ok((read("summary.json")?, read("manifest.json")?))
}

/// One line per assertion, then a verdict line.
pub fn render_text(summary: &Value, manifest: &Value) -> String {
    let mut s = format!(
        "{} ({}), seed {}\n",
        summary["name"].as_str().unwrap_or("?"),
        summary["task"].as_str().unwrap_or("?"),
        summary["seed"]
    );
    if let Some(xs) = summary["assertions"].as_array() {
        for a in xs {
            let mark = if a["passed"] == json!(true) { "PASS" } else { "FAIL" };
            s.push_str(&format!(
                "  {mark} {} {} observed={}\n",
                a["path"].as_str().unwrap_or("?"),
                a["op"],
                a["observed"]
            ));
        }
    }
    s.push_str(&format!(
        "passed={} runtime_ms={} outputs={}\n",
        summary["passed"], manifest["runtime_ms"], manifest["outputs"]
    ));
    s
}
