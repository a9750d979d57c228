use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use laserplan::env::{write_trace, EnvConfig, LayoutEnv, ObsMode, TraceRecord};
use laserplan::ppo::{self, evaluate, Actor, Checkpoint, EvalMode, EvalSummary, PpoConfig, PpoError};
use laserplan::render::{render_env, replay, save_png, RenderStyle};
use laserplan::scenario::{resolve_scenario, Scenario};
use laserplan::serve::{serve, Server};

const EXIT_INVALID: u8 = 3;
const EXIT_ABORTED: u8 = 4;

#[derive(Parser)]
#[command(name = "laserplan", version, about = "Laser-wall layout planning: train, evaluate, render, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObsArg {
    Features,
    Image,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Argmax,
    Sample,
}

#[derive(clap::Args)]
struct EnvArgs {
    /// Observation layout encoding.
    #[arg(long, value_enum, default_value = "features")]
    obs: ObsArg,
    /// Append the design-context vector to observations.
    #[arg(long, value_enum, default_value = "on")]
    context: Toggle,
}

impl EnvArgs {
    fn config(&self) -> EnvConfig {
        EnvConfig {
            obs: match self.obs {
                ObsArg::Features => ObsMode::Features,
                ObsArg::Image => ObsMode::Image,
            },
            context: matches!(self.context, Toggle::On),
            ..EnvConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a PPO policy; writes metrics.csv and checkpoints to --outdir.
    Train {
        /// Builtin scenario name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        total_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        minibatch_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Suppress per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint; prints a JSON summary.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Must match the scenario stored in the checkpoint.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_enum, default_value = "argmax")]
        mode: ModeArg,
        /// Writes one PNG and one JSONL trace per episode.
        #[arg(long)]
        render_dir: Option<PathBuf>,
    },
    /// Run a uniform-random policy; prints a JSON summary.
    Baseline {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render a layout reached by replaying actions (or a JSONL trace) after a reset.
    Render {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated action ids.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "trace")]
        actions: Vec<i64>,
        /// Trace file as written by `eval --render-dir`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 24)]
        cell_px: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speak the JSON-lines control protocol over stdin/stdout.
    Serve {
        #[arg(long, required = true)]
        stdio: bool,
        #[arg(long, default_value = "scenario1")]
        scenario: String,
        #[command(flatten)]
        env: EnvArgs,
    },
}

struct Fail(u8, String);

impl From<io::Error> for Fail {
    fn from(e: io::Error) -> Self {
        Fail(1, e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> Fail {
    Fail(EXIT_INVALID, e.to_string())
}

fn load_scenario(name: &str, config: EnvConfig) -> Result<Scenario, Fail> {
    let scenario = resolve_scenario(name).map_err(invalid)?;
    LayoutEnv::new(scenario.clone(), config).map_err(invalid)?;
    Ok(scenario)
}

fn print_summary(summary: &EvalSummary) -> Result<(), Fail> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| Fail(1, e.to_string()))?;
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Fail(1, e.to_string())),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.command {
        Command::Train {
            scenario,
            total_steps,
            seed,
            outdir,
            env,
            workers,
            batch_size,
            minibatch_size,
            epochs,
            lr,
            checkpoint_every,
            quiet,
        } => {
            let mut config = PpoConfig {
                seed,
                workers,
                env: env.config(),
                ..PpoConfig::default()
            };
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            config.minibatch_size = minibatch_size.unwrap_or(config.minibatch_size);
            config.epochs = epochs.unwrap_or(config.epochs);
            config.adam.lr = lr.unwrap_or(config.adam.lr);
            config.checkpoint_every = checkpoint_every.unwrap_or(config.checkpoint_every);
            config.validate().map_err(|e| Fail(2, e.to_string()))?;
            let scenario = load_scenario(&scenario, config.env)?;
            let out = ppo::train(&scenario, &config, total_steps, &outdir, |row| {
                if !quiet {
                    eprintln!("{}", row.csv_line());
                }
            })
            .map_err(|e| match e {
                PpoError::Io(e) => Fail(1, e.to_string()),
                e => Fail(EXIT_ABORTED, format!("training aborted: {e}")),
            })?;
            eprintln!("wrote {} ({} iterations)", out.metrics_path.display(), out.rows.len());
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            scenario,
            mode,
            render_dir,
        } => {
            let ck = Checkpoint::load(&checkpoint).map_err(invalid)?;
            let embedded = ck.header.scenario.clone();
            if let Some(name) = scenario {
                let given = resolve_scenario(&name).map_err(invalid)?;
                ck.check_scenario(&given).map_err(invalid)?;
                if given != embedded {
                    return Err(invalid(format!(
                        "scenario `{}` differs from the one the checkpoint was trained on (`{}`)",
                        given.name, embedded.name
                    )));
                }
            }
            let mode = match mode {
                ModeArg::Argmax => EvalMode::Argmax,
                ModeArg::Sample => EvalMode::Sample,
            };
            let eval = evaluate(Actor::Policy(&ck.net, mode), &embedded, ck.header.ppo.env, episodes, seed)
                .map_err(invalid)?;
            if let Some(dir) = render_dir {
                fs::create_dir_all(&dir)?;
                let style = RenderStyle::default();
                for (k, (env, trace)) in eval.finals.iter().zip(&eval.traces).enumerate() {
                    let img = render_env(env, &style).map_err(|e| Fail(1, e.to_string()))?;
                    save_png(&img, dir.join(format!("episode-{k:04}.png"))).map_err(|e| Fail(1, e.to_string()))?;
                    write_trace(BufWriter::new(File::create(dir.join(format!("episode-{k:04}.jsonl")))?), trace)?;
                }
            }
            print_summary(&eval.summary)?;
        }
        Command::Baseline { scenario, episodes, seed } => {
            let config = EnvConfig::default();
            let scenario = load_scenario(&scenario, config)?;
            let eval = evaluate(Actor::Uniform, &scenario, config, episodes, seed).map_err(invalid)?;
            print_summary(&eval.summary)?;
        }
        Command::Render {
            scenario,
            seed,
            actions,
            trace,
            cell_px,
            out,
        } => {
            let config = EnvConfig::default();
            let scenario = load_scenario(&scenario, config)?;
            let actions = match trace {
                Some(path) => read_trace_actions(&path)?,
                None => actions,
            };
            let env = replay(&scenario, config, seed, &actions).map_err(invalid)?;
            let style = RenderStyle { cell_px, ..RenderStyle::default() };
            let img = render_env(&env, &style).map_err(|e| Fail(2, e.to_string()))?;
            save_png(&img, &out).map_err(|e| Fail(1, e.to_string()))?;
        }
        Command::Serve { stdio: _, scenario, env } => {
            let config = env.config();
            let scenario = load_scenario(&scenario, config)?;
            let mut server = Server::new(scenario, config).map_err(invalid)?;
            let stdin = io::stdin();
            serve(&mut server, stdin.lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}

fn read_trace_actions(path: &Path) -> Result<Vec<i64>, Fail> {
    use std::io::BufRead;
    let mut actions = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), n + 1)))?;
        actions.push(rec.action);
    }
    Ok(actions)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
