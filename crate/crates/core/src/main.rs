use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use andor_tmp::bench::{gen_habitat, gen_hanoi, HabitatConfig, HanoiLayout, RunConfig};
use andor_tmp::dsl::{parse_scenario, serialize, Scenario};
use andor_tmp::planner::{metrics_document, run, FinalStatus};

#[derive(Parser)]
#[command(name = "andor-tmp", version, about = "Task and motion planning over networks of AND/OR graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan and execute a scenario in simulation.
    Run(RunArgs),
    /// Parse and check a scenario file.
    Validate { path: PathBuf },
    /// Write a generated scenario as text.
    Gen {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the main graph of a scenario in dot format.
    Dot {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    /// `hanoi`, `habitat`, or a path to a scenario file.
    #[arg(long, default_value = "hanoi")]
    scenario: String,
    #[arg(long, default_value_t = 3)]
    disks: usize,
    /// Single arm that reaches every peg.
    #[arg(long)]
    omnipotent: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    depth_cap: Option<usize>,
    #[arg(long)]
    retries: Option<u32>,
    /// Metrics JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Line-delimited trace destination.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Directory receiving one dot file per graph in the final network.
    #[arg(long)]
    dot: Option<PathBuf>,
}

fn load(src: &Source) -> Result<Scenario, String> {
    match src.scenario.as_str() {
        "hanoi" => {
            let layout = if src.omnipotent { HanoiLayout::omnipotent() } else { HanoiLayout::dual_arm() };
            gen_hanoi(src.disks, &layout).map_err(|e| e.to_string())
        }
        "habitat" => gen_habitat(&HabitatConfig::default()).map_err(|e| e.to_string()),
        path => read_file(Path::new(path)),
    }
}

fn read_file(path: &Path) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_scenario(&text).map_err(|e| format!("{}:{e}", path.display()))
}

fn write(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_cmd(args: &RunArgs) -> Result<ExitCode, String> {
    let scenario = load(&args.source)?;
    let mut config = RunConfig { seed: args.seed, ..RunConfig::default() };
    if let Some(d) = args.depth_cap {
        config.depth_cap = d;
    }
    if let Some(r) = args.retries {
        config.retries = r;
    }
    let trace = run(&scenario, &config).map_err(|e| e.to_string())?;
    let doc = serde_json::to_string_pretty(&metrics_document(&trace)).unwrap();
    write(args.out.as_deref(), &(doc + "\n"))?;
    if let Some(p) = &args.trace {
        write(Some(p), &trace.to_jsonl())?;
    }
    if let Some(dir) = &args.dot {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for (i, g) in trace.network.graphs.iter().enumerate() {
            write(Some(&dir.join(format!("graph_{i:03}.dot"))), &g.to_dot())?;
        }
    }
    eprintln!(
        "{:?}: depth {}, {} actions, {} handovers",
        trace.final_status,
        trace.depth(),
        trace.metrics.executed_actions,
        trace.metrics.handovers
    );
    Ok(match trace.final_status {
        FinalStatus::GoalAchieved => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run_cmd(args),
        Command::Validate { path } => read_file(path).and_then(|s| {
            s.world().validate().map_err(|e| format!("{}: {e}", path.display()))?;
            println!("{}: ok", path.display());
            Ok(ExitCode::SUCCESS)
        }),
        Command::Gen { source, out } => load(source).and_then(|s| write(out.as_deref(), &serialize(&s))).map(|_| ExitCode::SUCCESS),
        Command::Dot { source, out } => load(source)
            .and_then(|s| {
                let g = andor_tmp::andor_graph::build_graph(&s.graph).map_err(|e| e.to_string())?;
                write(out.as_deref(), &g.to_dot())
            })
            .map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
