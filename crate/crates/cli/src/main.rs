use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use byzcone::logic::parse_formula;
use byzcone::queries::{run_queries, run_queries_with, scripted_runs, Options, Outcome};
use byzcone::run::{dump_run, enumerate_runs, replay_run, RangeMode};
use byzcone::scenario::{load_scenario_with, Overrides, Query, QueryKind, Scenario};
use byzcone::text::{parse_local_hap, parse_node};
use byzcone::{AgentId, Error, Time};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Byzantine runs, reliable causal cones and hope analysis.
#[derive(Parser, Debug)]
#[command(name = "byzcone", version)]
struct Cli {
    /// Output directory for traces/, reports/ and graphs/.
    #[arg(long, global = true, default_value = "byzcone-out")]
    out: PathBuf,
    /// Maximum number of runs in an enumerated universe.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Overrides the scenario horizon.
    #[arg(long, global = true)]
    horizon: Option<Time>,
    /// Overrides the adversary seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Target {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Named adversary script (defaults to the first one).
    #[arg(long)]
    script: Option<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Base,
    Full,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Verdict {
    True,
    False,
    Satisfied,
    Violated,
}

impl Verdict {
    fn as_bool(self) -> bool {
        matches!(self, Verdict::True | Verdict::Satisfied)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Executes every query declared in the scenario.
    Run { scenario: PathBuf },
    /// Executes the scripted and seeded random runs and prints their traces.
    Simulate {
        #[command(flatten)]
        target: Target,
        /// Extra random runs.
        #[arg(long, default_value_t = 0)]
        random: usize,
    },
    /// Enumerates every run of the scenario.
    Enumerate {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "base")]
        mode: Mode,
    },
    /// Checks cone equivalence for every correct node (or one).
    #[command(name = "verify-lemma5")]
    ConeEquivalence {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        theta: Option<String>,
    },
    /// Evaluates a formula over the scenario universe.
    Eval {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        formula: String,
        /// Point of evaluation; without it the whole universe is tabulated.
        #[arg(long)]
        time: Option<Time>,
        /// Expected value (at the point, or at every point).
        #[arg(long, value_enum)]
        expect: Option<Verdict>,
    },
    /// Writes the causal graph with cone/buffer colouring.
    Dot {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        theta: String,
    },
    /// Prints the cone, buffer and masses at a node.
    Partition {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        theta: String,
    },
    /// Builds a brain-in-a-vat run for a victim.
    Vat {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        victim: u16,
        #[arg(long)]
        time: Time,
    },
    /// Checks the multipede conditions for an event.
    Multipede {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        theta: String,
        #[arg(long)]
        event: String,
        /// Use the bounded universe check instead of the path condition.
        #[arg(long)]
        bounded: bool,
        #[arg(long, value_enum)]
        expect: Option<Verdict>,
    },
    /// Replays a dumped run and checks its rounds are reproduced.
    Replay { scenario: PathBuf, dump: PathBuf },
}

enum Failure {
    Assertion,
    Lib(Error),
    Other(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario, Failure> {
    let overrides = Overrides {
        horizon: cli.horizon,
        seed: cli.seed,
        budget: cli.budget,
    };
    Ok(load_scenario_with(path, overrides)?)
}

fn default_script(sc: &Scenario, script: &Option<String>) -> Result<String, Failure> {
    if let Some(s) = script {
        return Ok(s.clone());
    }
    match sc.scripts.first() {
        Some(s) => Ok(s.name.clone()),
        None if sc.random_runs > 0 => Ok("random-0".into()),
        None => Err(Error::Validation("the scenario declares no adversary script".into()).into()),
    }
}

fn finish(cli: &Cli, out: &Outcome, print_reports: bool) -> Result<(), Failure> {
    out.write(&cli.out)?;
    if print_reports {
        for r in &out.results {
            print!("{}", r.report);
        }
    }
    print!("{}", out.summary());
    if out.all_passed() {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn single(cli: &Cli, sc: &Scenario, q: Query) -> Result<(), Failure> {
    let out = run_queries_with(sc, &[q], Options::default())?;
    finish(cli, &out, true)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { scenario } => {
            let sc = load(cli, scenario)?;
            let out = run_queries(&sc, Options::default())?;
            finish(cli, &out, false)
        }
        Command::Simulate { target, random } => {
            let mut sc = load(cli, &target.scenario)?;
            sc.random_runs += random;
            let runs = scripted_runs(&sc)?;
            let mut out = Outcome::default();
            for (name, run) in &runs {
                if target.script.as_ref().is_some_and(|s| s != name) {
                    continue;
                }
                let lines = run.trace_lines().join("\n") + "\n";
                println!("# {name}");
                print!("{lines}");
                out.artifacts.insert(format!("traces/{name}.trace"), lines);
                out.artifacts.insert(format!("traces/{name}.json"), dump_run(run));
            }
            out.write(&cli.out)?;
            Ok(())
        }
        Command::Enumerate { scenario, mode } => {
            let sc = load(cli, scenario)?;
            let mode = match mode {
                Mode::Base => RangeMode::Base,
                Mode::Full => RangeMode::Full,
            };
            let runs = enumerate_runs(&sc.ctx, mode, sc.universe.budget)?;
            let mut report = format!("{} runs\n", runs.len());
            for (k, run) in runs.iter().enumerate() {
                report.push_str(&format!("# run {k}\n"));
                for l in run.trace_lines() {
                    report.push_str(&l);
                    report.push('\n');
                }
            }
            let mut out = Outcome::default();
            out.artifacts.insert("reports/enumerate.txt".into(), report);
            out.write(&cli.out)?;
            println!("{} runs", runs.len());
            Ok(())
        }
        Command::ConeEquivalence { target, theta } => {
            let sc = load(cli, &target.scenario)?;
            let mut q = Query::new(QueryKind::ConeEquivalence, "cone-equivalence");
            q.script = target.script.clone();
            q.theta = theta.as_deref().map(|t| parse_node(&sc.ctx.sig, t)).transpose()?;
            single(cli, &sc, q)
        }
        Command::Eval {
            target,
            formula,
            time,
            expect,
        } => {
            let sc = load(cli, &target.scenario)?;
            let mut q = Query::new(QueryKind::EvalFormula, "eval");
            q.formula = Some(parse_formula(&sc.ctx.sig, formula)?);
            if let Some(t) = time {
                q.script = Some(default_script(&sc, &target.script)?);
                q.time = Some(*t);
            }
            q.expect = expect.map(Verdict::as_bool);
            single(cli, &sc, q)
        }
        Command::Dot { target, theta } | Command::Partition { target, theta } => {
            let sc = load(cli, &target.scenario)?;
            let mut q = Query::new(QueryKind::Partition, "partition");
            q.script = Some(default_script(&sc, &target.script)?);
            q.theta = Some(parse_node(&sc.ctx.sig, theta)?);
            let out = run_queries_with(&sc, &[q], Options::default())?;
            out.write(&cli.out)?;
            if matches!(cli.command, Command::Dot { .. }) {
                print!("{}", out.artifacts["graphs/partition.dot"]);
            } else {
                print!("{}", out.results[0].report);
            }
            Ok(())
        }
        Command::Vat { target, victim, time } => {
            let sc = load(cli, &target.scenario)?;
            let mut q = Query::new(QueryKind::Vat, "vat");
            q.script = Some(default_script(&sc, &target.script)?);
            q.victim = Some(AgentId(*victim));
            q.time = Some(*time);
            single(cli, &sc, q)
        }
        Command::Multipede {
            target,
            theta,
            event,
            bounded,
            expect,
        } => {
            let sc = load(cli, &target.scenario)?;
            let (kind, name) = if *bounded {
                (QueryKind::MultipedeBounded, "multipede-bounded")
            } else {
                (QueryKind::MultipedeNecessary, "multipede-necessary")
            };
            let mut q = Query::new(kind, name);
            q.script = Some(default_script(&sc, &target.script)?);
            q.theta = Some(parse_node(&sc.ctx.sig, theta)?);
            q.event = Some(parse_local_hap(&sc.ctx.sig, event)?);
            q.expect = expect.map(Verdict::as_bool);
            single(cli, &sc, q)
        }
        Command::Replay { scenario, dump } => {
            let sc = load(cli, scenario)?;
            let text = std::fs::read_to_string(dump).with_context(|| format!("reading {}", dump.display()))?;
            let run = replay_run(&sc.ctx, &text)?;
            print!("{}", run.trace_lines().join("\n") + "\n");
            if dump_run(&run).trim_end() == text.trim_end() {
                println!("replay reproduces all {} rounds", run.time());
                Ok(())
            } else {
                println!("replay differs from the dump");
                Err(Failure::Assertion)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion) => ExitCode::from(1),
        Err(Failure::Lib(e @ Error::Budget { .. })) => {
            eprintln!("byzcone: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("byzcone: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("byzcone: {e:#}");
            ExitCode::from(2)
        }
    }
}
