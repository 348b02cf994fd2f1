use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocrchain::chain::validate;
use ocrchain::forge::TableGateMetric;
use ocrchain::harness::{
    cmd_construct, cmd_eval, cmd_reward, cmd_split, render_table, serve, HarnessError, RunConfig,
};
use ocrchain::TaskKind;

/// Reasoning-chain OCR toolkit: evaluation, dataset construction, splitting
/// and reward scoring.
#[derive(Parser)]
#[command(name = "ocrchain", version, about)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, short, global = true, env = "OCRCHAIN_CONFIG")]
    config: Option<PathBuf>,

    /// Task kind: seal, table or formula.
    #[arg(long, global = true)]
    task: Option<TaskKind>,

    /// Print the resolved config as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against references.
    Eval(EvalArgs),
    /// Build a reasoning dataset with a chat model and OCR tools.
    Construct(ConstructArgs),
    /// Leakage-isolated train/test split of seal data.
    Split(SplitArgs),
    /// Score rollouts as JSONL, one line out per line in.
    Reward(RewardArgs),
    /// Serve rewards over HTTP.
    Serve(ServeArgs),
    /// Check reasoning-chain format.
    ValidateFormat(ValidateArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// JSONL of {id, prediction}.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// JSONL of {id, answer} (or answer_gt).
    #[arg(long)]
    references: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Score the <answer> body of each prediction.
    #[arg(long)]
    extract_answer: bool,
    /// Print the JSON report to stdout instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory of recorded responses (`<id>.turn<N>.txt`).
    #[arg(long)]
    canned_dir: Option<PathBuf>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    retry_budget: Option<u32>,
    #[arg(long)]
    tool_output_cap: Option<usize>,
    #[arg(long)]
    table_threshold: Option<f64>,
    #[arg(long)]
    formula_threshold: Option<f64>,
    /// Metric for the table gate: teds or steds.
    #[arg(long, value_parser = parse_table_metric)]
    table_metric: Option<TableGateMetric>,
    /// Validate and print the plan without calling the model or tools.
    #[arg(long)]
    dry_run: bool,
}

fn parse_table_metric(s: &str) -> Result<TableGateMetric, String> {
    match s {
        "teds" => Ok(TableGateMetric::Teds),
        "steds" => Ok(TableGateMetric::Steds),
        _ => Err(format!("expected teds or steds, got `{s}`")),
    }
}

#[derive(Args)]
struct SplitArgs {
    /// Seal SampleRecord JSONL.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Similarity (1 - NED) at which two titles are linked.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct RewardArgs {
    /// Input JSONL of {rollout, gt}; stdin when absent.
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Score accuracy only for well-formed chains.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    payload_cap_bytes: Option<usize>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Chain text file; stdin when absent.
    input: Option<PathBuf>,
    /// Treat input as JSONL of {rollout} and report per line.
    #[arg(long)]
    jsonl: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, HarnessError> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    set_opt(&mut c.task, cli.task);
    match &cli.command {
        Command::Eval(a) => {
            set_opt(&mut c.eval.predictions, a.predictions.clone());
            set_opt(&mut c.eval.references, a.references.clone());
            set_opt(&mut c.eval.report, a.report.clone());
            c.eval.extract_answer |= a.extract_answer;
        }
        Command::Construct(a) => {
            let k = &mut c.construct;
            set_opt(&mut k.input, a.input.clone());
            set_opt(&mut k.dataset, a.dataset.clone());
            set_opt(&mut k.audit, a.audit.clone());
            set_opt(&mut k.report, a.report.clone());
            set_opt(&mut k.client.canned_dir, a.canned_dir.clone());
            set_opt(&mut k.templates_dir, a.templates_dir.clone());
            set(&mut k.concurrency, a.concurrency);
            set(&mut k.retry.budget, a.retry_budget);
            set(&mut k.tool_output_cap, a.tool_output_cap);
            set(&mut k.gate.table_threshold, a.table_threshold);
            set(&mut k.gate.formula_threshold, a.formula_threshold);
            set(&mut k.gate.table_metric, a.table_metric);
        }
        Command::Split(a) => {
            let s = &mut c.split;
            set_opt(&mut s.input, a.input.clone());
            set_opt(&mut s.train, a.train.clone());
            set_opt(&mut s.test, a.test.clone());
            set_opt(&mut s.report, a.report.clone());
            set(&mut s.threshold, a.threshold);
            set(&mut s.test_fraction, a.test_fraction);
            set(&mut s.seed, a.seed);
            set_opt(&mut s.lexicon, a.lexicon.clone());
        }
        Command::Reward(a) => c.strict_gating |= a.strict,
        Command::Serve(a) => {
            set(&mut c.serve.addr, a.addr.clone());
            set(&mut c.serve.payload_cap_bytes, a.payload_cap_bytes);
            c.strict_gating |= a.strict;
        }
        Command::ValidateFormat(_) => {}
    }
    Ok(c)
}

fn read_input(path: Option<&PathBuf>) -> Result<Box<dyn BufRead>, HarnessError> {
    match path {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| HarnessError::Input { path: p.clone(), message: e.to_string() })?;
            Ok(Box::new(BufReader::new(f)))
        }
        None => Ok(Box::new(BufReader::new(std::io::stdin()))),
    }
}

fn stdout_json(v: &impl serde::Serialize) -> Result<(), HarnessError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| HarnessError::Internal(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn validate_format(args: &ValidateArgs) -> Result<bool, HarnessError> {
    let mut input = read_input(args.input.as_ref())?;
    let io = |e: std::io::Error| HarnessError::Input { path: "<input>".into(), message: e.to_string() };
    if !args.jsonl {
        let mut text = String::new();
        input.read_to_string(&mut text).map_err(io)?;
        let verdict = validate(&text);
        stdout_json(&verdict)?;
        return Ok(verdict.valid);
    }
    let mut all_valid = true;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(io)?;
        let v = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(m)) if m.get("rollout").is_some_and(|r| r.is_string()) => {
                let verdict = validate(m["rollout"].as_str().unwrap_or_default());
                all_valid &= verdict.valid;
                serde_json::to_value(&verdict).expect("verdict serializes")
            }
            _ => {
                all_valid = false;
                serde_json::json!({"line": n + 1, "error": "expected an object with a string `rollout`"})
            }
        };
        writeln!(out, "{v}").map_err(|e| HarnessError::Internal(e.to_string()))?;
    }
    Ok(all_valid)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let config = resolve(&cli)?;
    if cli.print_config {
        return stdout_json(&config);
    }
    match &cli.command {
        Command::Eval(a) => {
            let report = cmd_eval(&config)?;
            if a.json {
                stdout_json(&report)?;
            } else {
                print!("{}", render_table(&report));
            }
        }
        Command::Construct(a) => {
            let (plan, report) = cmd_construct(&config, a.dry_run)?;
            match report {
                None => stdout_json(&plan)?,
                Some(r) => {
                    println!("submitted {}  retained {}  rejected {}", r.submitted, r.retained, r.rejected);
                    for (reason, n) in &r.rejected_by_reason {
                        println!("  {reason}: {n}");
                    }
                }
            }
        }
        Command::Split(_) => {
            let r = cmd_split(&config)?;
            println!(
                "train {}  test {} (target {}{})  communities {}  cross pairs {}",
                r.train,
                r.test,
                r.target_test,
                if r.undersized { ", undersized" } else { "" },
                r.communities,
                r.cross_edge_check.cross_pairs
            );
        }
        Command::Reward(a) => {
            let input = read_input(a.input.as_ref())?;
            let errors = match &a.output {
                Some(p) => {
                    let f = std::fs::File::create(p).map_err(|e| HarnessError::write(p, e))?;
                    cmd_reward(&config, input, std::io::BufWriter::new(f))?
                }
                None => cmd_reward(&config, input, std::io::stdout().lock())?,
            };
            if errors > 0 {
                log::warn!("{errors} input lines could not be scored");
            }
        }
        Command::Serve(_) => serve(&config)?,
        Command::ValidateFormat(a) => {
            if !validate_format(a)? {
                return Err(HarnessError::Infeasible("chain format is invalid".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
