//! `vizbridge`: run the MCP server over stdio, replay traces, or run the
//! goal-controller demos.
//!
//! Exit codes: 0 success, 1 assertion or convergence failure, 2 usage or
//! configuration error.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use vizbridge::config::{ConfigLayer, ServerConfig};
use vizbridge::engine::Backend;
use vizbridge::goal::{
    refine_transfer_function, solve_iso_area, AreaGoal, BandColorGoal, BandReportEvaluator, ColorBand, GoalError,
};
use vizbridge::harness::{self, Trace};
use vizbridge::protocol::{serve, McpServer, WireClient};
use vizbridge::tools::{Manager, ToolSurface};

#[derive(Debug, Parser)]
#[command(name = "vizbridge", version, about = "MCP bridge to a scientific visualization engine")]
struct Cli {
    /// Engine backend.
    #[arg(long, global = true, env = "VIZBRIDGE_BACKEND", value_enum)]
    backend: Option<BackendArg>,
    /// pvserver address (host:port), required with --backend paraview.
    #[arg(long, global = true, env = "VIZBRIDGE_PVSERVER_URL")]
    pvserver_url: Option<String>,
    /// Directory for screenshots and the session log [default: ./screenshots].
    #[arg(long, global = true, env = "VIZBRIDGE_SCREENSHOT_DIR")]
    screenshot_dir: Option<PathBuf>,
    /// Diagnostic log file [default: <screenshot-dir>/vizbridge.log].
    #[arg(long = "log", global = true, env = "VIZBRIDGE_LOG")]
    log_path: Option<PathBuf>,
    /// JSON config file with the same keys as the flags (snake_case).
    #[arg(long, global = true, env = "VIZBRIDGE_CONFIG")]
    config: Option<PathBuf>,
    /// FieldSpec JSON file preloaded as the active source (mock backend).
    #[arg(long, global = true, env = "VIZBRIDGE_MOCK_DATASET")]
    mock_dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Paraview,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Mock => Backend::Mock,
            BackendArg::Paraview => Backend::Paraview,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve MCP over stdin/stdout until EOF.
    Serve,
    /// Replay a trace file or a bundled trace (iso-half, tf-bands,
    /// shared-session, error-handling) and report each step.
    Replay {
        trace: String,
    },
    /// Convert a session log (JSON lines) into a trace printed on stdout.
    Record {
        session_log: PathBuf,
        #[arg(long, default_value = "recorded")]
        name: String,
    },
    /// Run a goal controller end to end and print its trace as JSON.
    Demo {
        #[arg(value_enum)]
        goal: DemoGoal,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DemoGoal {
    /// Find the isovalue halving the area of the radial isosurface at 0.4.
    IsoHalf,
    /// Refine the color map to a brown base and green top.
    TfBands,
}

enum Failure {
    /// Exit 1.
    Failed(String),
    /// Exit 2.
    Usage(String),
}

impl Failure {
    fn usage(e: impl ToString) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("vizbridge: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("vizbridge: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes to stdout; a closed pipe is not an error worth reporting.
fn emit(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn resolve_config(cli: &Cli) -> Result<ServerConfig, Failure> {
    let file = match &cli.config {
        Some(path) => ConfigLayer::from_file(path).map_err(Failure::usage)?,
        None => ConfigLayer::default(),
    };
    let flags = ConfigLayer {
        backend: cli.backend.map(Backend::from),
        pvserver_url: cli.pvserver_url.clone(),
        screenshot_dir: cli.screenshot_dir.clone(),
        log_path: cli.log_path.clone(),
        mock_dataset: cli.mock_dataset.clone(),
    };
    ServerConfig::resolve(file.overlay(flags)).map_err(Failure::usage)
}

fn init_logging(path: &Path) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", parent.display())))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Failure::Usage(format!("cannot open log {}: {e}", path.display())))?;
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Pipe(Box::new(file)))
        .try_init()
        .map_err(Failure::usage)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Record { session_log, name } = &cli.command {
        let backend = cli.backend.map_or(Backend::Mock, Backend::from);
        let trace = harness::record(session_log, name, backend).map_err(Failure::usage)?;
        emit(&format!("{}\n", trace.to_json_pretty()));
        return Ok(());
    }
    let config = resolve_config(&cli)?;
    init_logging(&config.log_path)?;
    log::info!("starting {:?} with {config:?}", cli.command);
    let engine = config.build_engine().map_err(Failure::usage)?;
    let manager = config.build_manager(engine).map_err(Failure::usage)?;
    match cli.command {
        Command::Serve => run_serve(manager),
        Command::Replay { trace } => run_replay(&trace, manager),
        Command::Demo { goal } => run_demo(goal, manager, config.backend),
        Command::Record { .. } => unreachable!("handled above"),
    }
}

fn run_serve(manager: Manager) -> Result<(), Failure> {
    ctrlc::set_handler(|| {
        log::info!("interrupted; shutting down");
        std::process::exit(0);
    })
    .map_err(Failure::usage)?;
    let mut server = McpServer::new(manager);
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve(&mut server, stdin.lock(), stdout.lock()).map_err(|e| Failure::Failed(format!("stdio failure: {e}")))?;
    log::info!("stdin closed; shutting down");
    Ok(())
}

fn load_trace(spec: &str) -> Result<Trace, Failure> {
    let path = Path::new(spec);
    if path.exists() {
        return Trace::load(path).map_err(Failure::usage);
    }
    harness::bundled(spec).ok_or_else(|| {
        Failure::Usage(format!(
            "no trace file '{spec}' and no bundled trace of that name (bundled: {})",
            harness::bundled_names().join(", ")
        ))
    })
}

fn run_replay(spec: &str, manager: Manager) -> Result<(), Failure> {
    let trace = load_trace(spec)?;
    let mut client = WireClient::connect(McpServer::new(manager)).map_err(Failure::usage)?;
    let report = harness::replay(&trace, &mut client).map_err(Failure::usage)?;
    emit(&report.render());
    if report.passed {
        Ok(())
    } else {
        let step = report.failed_step().map_or(report.steps.len(), |s| s.index);
        Err(Failure::Failed(format!("trace '{}' failed at step {step}", trace.name)))
    }
}

fn setup(tools: &mut dyn ToolSurface, calls: &[(&str, serde_json::Value)]) -> Result<Vec<serde_json::Value>, Failure> {
    calls
        .iter()
        .map(|(tool, args)| {
            let r = tools.call_tool(tool, args.clone());
            if r.is_error {
                Err(Failure::Failed(format!("demo setup: {tool} failed: {}", r.joined_text())))
            } else {
                Ok(r.payload().unwrap_or_default())
            }
        })
        .collect()
}

fn goal_failure(e: GoalError) -> Failure {
    Failure::Failed(e.to_string())
}

fn run_demo(goal: DemoGoal, mut manager: Manager, backend: Backend) -> Result<(), Failure> {
    if backend != Backend::Mock {
        return Err(Failure::Usage("demos run on the mock backend's analytic fields".into()));
    }
    let out = match goal {
        DemoGoal::IsoHalf => {
            let payloads = setup(
                &mut manager,
                &[
                    ("load_data", json!({"source": {"family": "radial"}})),
                    ("create_isosurface", json!({"value": 0.4})),
                ],
            )?;
            let contour = payloads[1]["source"]["id"].as_str().unwrap_or_default().to_string();
            let reference = payloads[1]["area"].as_f64().unwrap_or(f64::NAN);
            let goal = AreaGoal {
                search_range: Some((0.0, 0.5)),
                ..AreaGoal::new(contour, reference, 0.5)
            };
            let sol = solve_iso_area(&goal, &mut manager).map_err(goal_failure)?;
            (sol.trace.to_json(), sol.trace.converged)
        }
        DemoGoal::TfBands => {
            setup(
                &mut manager,
                &[
                    ("load_data", json!({"source": {"family": "radial"}})),
                    ("toggle_volume_rendering", json!({})),
                ],
            )?;
            let goal = BandColorGoal::new(vec![
                ColorBand {
                    lo: 0.0,
                    hi: 0.3,
                    rgb: [0.55, 0.27, 0.07],
                },
                ColorBand {
                    lo: 0.5,
                    hi: 0.87,
                    rgb: [0.0, 0.8, 0.0],
                },
            ]);
            let sol = refine_transfer_function(&goal, &mut manager, &mut BandReportEvaluator).map_err(goal_failure)?;
            let tf = &sol.transfer_function;
            let out = json!({
                "transfer_function": {
                    "color_points": tf.color_points.iter().map(|p| [p.scalar, p.rgb[0], p.rgb[1], p.rgb[2]]).collect::<Vec<_>>(),
                    "opacity_points": tf.opacity_points.iter().map(|p| [p.scalar, p.alpha]).collect::<Vec<_>>(),
                },
                "trace": sol.trace.to_json(),
            });
            (out, sol.trace.converged)
        }
    };
    let (json, converged) = out;
    emit(&format!("{}\n", serde_json::to_string_pretty(&json).unwrap_or_default()));
    if converged {
        Ok(())
    } else {
        Err(Failure::Failed("goal did not converge within the iteration budget".into()))
    }
}
