use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use planshape::harness::compare::compare;
use planshape::harness::config::RunConfig;
use planshape::harness::gradcheck::run_suite;
use planshape::harness::run::RunStatus;
use planshape::harness::{HarnessError, Session, EXIT_FAILURE};
use planshape::llmgen::{
    GenerateOptions, HttpTransport, LlmConfig, RefusingTransport, StubTransport, Transport,
};
use planshape::core::env::{LbfConfig, MpeConfig};
use planshape::core::marl::{AlgorithmConfig, MappoConfig};
use planshape::core::{EnvConfig, EnvId, ShapingConfig};

#[derive(Parser)]
#[command(name = "planshape", version, about = "Planning-function reward shaping for cooperative MARL")]
struct Cli {
    /// Forbid every network request.
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seeds.
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Aggregate baseline and shaped runs into a table and a plot.
    Compare {
        #[arg(long, required = true, num_args = 1..)]
        baseline: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        shaped: Vec<PathBuf>,
        /// Steps to report; defaults to every shared checkpoint.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate and store a planning function with the LLM pipeline.
    Generate {
        /// lbf or mpe_spread
        #[arg(long)]
        env: String,
        #[arg(long)]
        n_agents: Option<usize>,
        #[arg(long, default_value = "artifacts")]
        artifact_dir: PathBuf,
        /// TOML file with LLM settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        max_retries: Option<usize>,
        /// Skip the strategy stage.
        #[arg(long)]
        skip_strategy: bool,
        /// Serve canned completions from these files instead of calling the API.
        #[arg(long, num_args = 1..)]
        stub: Vec<PathBuf>,
    },
    /// Finite-difference check of network gradients.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_sign_flip: bool,
    },
    /// Greedy evaluation of a finished run.
    Eval {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the reference planner over the planner protocol on stdin/stdout.
    ServePlanner,
    /// Print the state layout reference.
    Layouts,
    /// Print a run config with every default filled in.
    ExplainConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn env_config(name: &str, n_agents: Option<usize>) -> Result<EnvConfig, HarnessError> {
    let env = EnvId::parse(name).ok_or_else(|| HarnessError::Config(format!("unknown env {name:?}")))?;
    Ok(match env {
        EnvId::Lbf => {
            let mut c = LbfConfig::default();
            if let Some(n) = n_agents {
                c.n_agents = n;
                c.agent_levels = vec![1; n];
            }
            EnvConfig::Lbf(c)
        }
        EnvId::MpeSpread => {
            let mut c = MpeConfig::default();
            if let Some(n) = n_agents {
                c.n_agents = n;
            }
            EnvConfig::MpeSpread(c)
        }
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut refusing = RefusingTransport::default();
    match cli.command {
        Cmd::Train { config, seed, output_dir } => {
            let mut cfg = RunConfig::load(&config)?;
            if !seed.is_empty() {
                cfg.seeds = seed;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let mut session = Session { transport: &mut refusing, offline: cli.offline };
            for (dir, status) in session.cmd_train(&cfg)? {
                let note = if status == RunStatus::Skipped { " (already complete, skipped)" } else { "" };
                println!("{}{note}", dir.display());
            }
        }
        Cmd::Compare { baseline, shaped, checkpoints, output_dir } => {
            let report = compare(&baseline, &shaped, &checkpoints)?;
            print!("{}", report.table());
            if let Some(dir) = output_dir {
                let io = |e: io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
                std::fs::create_dir_all(&dir).map_err(io)?;
                let stem = format!("{}_{}", report.env, report.algorithm);
                std::fs::write(dir.join(format!("{stem}.csv")), report.to_csv()).map_err(io)?;
                std::fs::write(dir.join(format!("{stem}.svg")), report.svg()).map_err(io)?;
                std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&report).unwrap())
                    .map_err(io)?;
            }
        }
        Cmd::Generate { env, n_agents, artifact_dir, config, model, endpoint, max_retries, skip_strategy, stub } => {
            let env = env_config(&env, n_agents)?;
            let mut llm = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
                    toml::from_str::<LlmConfig>(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?
                }
                None => LlmConfig::default(),
            };
            if let Some(m) = model {
                llm.model_id = m;
            }
            if let Some(e) = endpoint {
                llm.endpoint = e;
            }
            if let Some(r) = max_retries {
                llm.max_retries = r;
            }
            let opts = GenerateOptions { skip_strategy, ..GenerateOptions::new() };
            let mut transport: Box<dyn Transport> = if !stub.is_empty() {
                let replies = stub
                    .iter()
                    .map(|p| std::fs::read_to_string(p).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display()))))
                    .collect::<Result<Vec<_>, _>>()?;
                Box::new(StubTransport::new(replies))
            } else if cli.offline || llm.offline {
                Box::new(RefusingTransport::default())
            } else {
                Box::new(
                    HttpTransport::new(&llm.endpoint, &llm.api_key_env, llm.api_style)
                        .map_err(|e| HarnessError::Generate(e.into()))?,
                )
            };
            let mut session = Session { transport: transport.as_mut(), offline: cli.offline };
            let out = session.cmd_generate(&env, &llm, &artifact_dir, &opts)?;
            if out.cache_hit {
                eprintln!("cache hit: no model calls");
            }
            for (k, r) in out.reports.iter().enumerate() {
                eprintln!("attempt {}: {}", k + 1, r.summary());
            }
            println!("{}", out.hash);
        }
        Cmd::Gradcheck { nets, seed, inject_sign_flip } => {
            let report = run_suite(nets, seed, inject_sign_flip);
            print!("{}", report.render());
            if !report.passed() {
                return Err(HarnessError::GradCheck(report.max_rel_error));
            }
        }
        Cmd::Eval { run_dir, episodes, seed } => {
            let mut session = Session { transport: &mut refusing, offline: cli.offline };
            let r = session.cmd_eval(&run_dir, episodes, seed)?;
            println!(
                "{}",
                serde_json::json!({ "episodes": episodes, "mean": r.mean, "min": r.min, "max": r.max })
            );
        }
        Cmd::ServePlanner => {
            let stdin = io::stdin();
            planshape::planner::serve_reference(stdin.lock(), BufWriter::new(io::stdout().lock()))
                .map_err(|e| HarnessError::Io(e.to_string()))?;
        }
        Cmd::Layouts => print!("{}", planshape::layouts::state_layouts_markdown()),
        Cmd::ExplainConfig { config } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig {
                    seeds: vec![0, 1, 2],
                    total_steps: 200_000,
                    eval_interval: 20_000,
                    eval_episodes: 100,
                    output_dir: PathBuf::from("runs/lbf_mappo_shaped"),
                    planner: planshape::harness::PlannerChoice::Reference,
                    planner_fallback: Default::default(),
                    artifact_dir: PathBuf::from("artifacts"),
                    jobs: 1,
                    env: EnvConfig::Lbf(LbfConfig::default()),
                    algorithm: AlgorithmConfig::Mappo(MappoConfig::default()),
                    shaping: ShapingConfig::default(),
                },
            };
            print!("{}", cfg.to_toml());
        }
    }
    debug_assert_eq!(refusing.attempts, 0);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(EXIT_FAILURE as u8))
        }
    }
}
