//! Command-line front end: single decodes, suite evaluation, and the
//! machine-simulation demo.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gramdec::decode::{
    adaptive_generate, constrained_generate, unconstrained_generate, DecodeOptions, Generation,
    OnNoViable, StepMode, Strategy,
};
use gramdec::eval::{load_dataset, run_eval, EvalConfig, Method};
use gramdec::grammar::{parse_grammar_text, SharedGrammar};
use gramdec::lm::{LanguageModel, RemoteLm, ScriptedLm};
use gramdec::mask::TokenTrie;
use gramdec::turing::{run_reasoning_demo, TmLm, TuringMachine};

const BUNDLED_GRAMMARS: &[(&str, &str)] = &[
    ("gsm", include_str!("../fixtures/grammars/gsm_expr.lark")),
    ("gsm-symbolic", include_str!("../fixtures/grammars/gsm_symbolic.lark")),
    ("prover9", include_str!("../fixtures/grammars/prover9.lark")),
];

#[derive(Parser)]
#[command(
    name = "gramdec",
    version,
    about = "Grammar-constrained decoding with free-form reasoning windows"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate from a model, optionally constrained by a grammar.
    Decode(DecodeArgs),
    /// Score a JSONL suite and report parse/accuracy rates.
    Eval(EvalArgs),
    /// Simulate a machine and reproduce the run by constrained decoding.
    TmDemo(TmDemoArgs),
}

#[derive(clap::Args)]
struct DecodeArgs {
    /// Bundled grammar id (gsm, gsm-symbolic, prover9) or a file path.
    /// Optional for unconstrained decoding.
    #[arg(long)]
    grammar: Option<String>,
    /// Opening delimiter for adaptive windows.
    #[arg(long, default_value = "<<")]
    s1: String,
    /// Closing delimiter for adaptive windows.
    #[arg(long, default_value = ">>")]
    s2: String,
    #[arg(long, value_enum, default_value_t = CliMode::Adaptive)]
    mode: CliMode,
    /// Model spec: scripted:FILE, tm:FILE, or remote:URL.
    #[arg(long)]
    lm: String,
    /// File whose contents seed the context; omitted means empty.
    #[arg(long)]
    prompt: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    max_new_tokens: usize,
    /// "greedy" or "temp:T".
    #[arg(long, default_value = "greedy")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-step log (JSON array of {index, token_id, bytes, mode}).
    #[arg(long)]
    log_steps: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = CliNoViable::Abort)]
    on_no_viable: CliNoViable,
    /// Input tape contents for tm: models.
    #[arg(long, default_value = "")]
    tm_input: String,
    /// Step budget for tm: models.
    #[arg(long, default_value_t = 10_000)]
    tm_budget: usize,
    /// Request timeout for remote: models, in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// JSONL file, one task instance per line.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    method: CliMethod,
    /// Model spec: scripted:FILE, tm:FILE, or remote:URL.
    #[arg(long)]
    lm: String,
    /// Bundled grammar id (gsm, gsm-symbolic, prover9) or a file path.
    #[arg(long)]
    grammar: String,
    /// Write the full report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Random assignments per equivalence check.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "<<")]
    s1: String,
    #[arg(long, default_value = ">>")]
    s2: String,
    #[arg(long, default_value_t = 256)]
    max_new_tokens: usize,
    #[arg(long, default_value = "")]
    tm_input: String,
    #[arg(long, default_value_t = 10_000)]
    tm_budget: usize,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

#[derive(clap::Args)]
struct TmDemoArgs {
    /// Machine description (JSON).
    #[arg(long)]
    machine: PathBuf,
    #[arg(long, default_value = "")]
    input: String,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Adaptive,
    Constrained,
    Unconstrained,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMethod {
    Adaptive,
    Constrained,
    Unconstrained,
    UnconstrainedNoCot,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliNoViable {
    Abort,
    CloseWindow,
}

fn resolve_grammar(spec: &str) -> Result<SharedGrammar> {
    let text = match BUNDLED_GRAMMARS.iter().find(|(id, _)| *id == spec) {
        Some((_, text)) => text.to_string(),
        None => fs::read_to_string(spec)
            .with_context(|| format!("reading grammar file {:?}", spec))?,
    };
    let g = parse_grammar_text(&text).with_context(|| format!("parsing grammar {:?}", spec))?;
    Ok(Arc::new(g))
}

fn build_lm(
    spec: &str,
    tm_input: &str,
    tm_budget: usize,
    timeout_secs: u64,
) -> Result<Box<dyn LanguageModel + Sync>> {
    let Some((kind, rest)) = spec.split_once(':') else {
        bail!("lm spec must look like scripted:FILE, tm:FILE, or remote:URL");
    };
    match kind {
        "scripted" => {
            let text = fs::read_to_string(rest)
                .with_context(|| format!("reading scripted model {:?}", rest))?;
            Ok(Box::new(ScriptedLm::from_json(&text)?))
        }
        "tm" => {
            let text = fs::read_to_string(rest)
                .with_context(|| format!("reading machine {:?}", rest))?;
            let machine = TuringMachine::from_json(&text)?;
            let input = machine.parse_input(tm_input)?;
            Ok(Box::new(TmLm::new(&machine, &input, tm_budget)?))
        }
        "remote" => Ok(Box::new(RemoteLm::connect(
            rest,
            Duration::from_secs(timeout_secs),
        )?)),
        other => bail!("unknown lm kind {:?}", other),
    }
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    if s == "greedy" {
        return Ok(Strategy::Greedy);
    }
    if let Some(t) = s.strip_prefix("temp:") {
        let t: f64 = t.parse().context("temperature must be a number")?;
        return Ok(Strategy::Temperature(t));
    }
    bail!("strategy must be \"greedy\" or \"temp:T\"");
}

fn step_log(gen: &Generation) -> serde_json::Value {
    let steps: Vec<serde_json::Value> = gen
        .steps
        .iter()
        .map(|s| {
            serde_json::json!({
                "index": s.index,
                "token_id": s.token_id,
                "bytes": String::from_utf8_lossy(&s.bytes),
                "mode": match s.mode {
                    StepMode::Free => "free",
                    StepMode::Masked => "masked",
                    StepMode::Forced => "forced",
                },
            })
        })
        .collect();
    serde_json::Value::Array(steps)
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let lm = build_lm(&args.lm, &args.tm_input, args.tm_budget, args.timeout_secs)?;
    let prompt_bytes = match &args.prompt {
        Some(path) => fs::read(path).with_context(|| format!("reading prompt {:?}", path))?,
        None => Vec::new(),
    };
    let trie = TokenTrie::build(lm.vocabulary());
    let Some(prompt) = lm.vocabulary().tokenize_greedy(&prompt_bytes, &trie) else {
        bail!("prompt is not tokenizable with this model's vocabulary");
    };
    let opts = DecodeOptions {
        max_new_tokens: args.max_new_tokens,
        strategy: parse_strategy(&args.strategy)?,
        seed: args.seed,
        on_no_viable: match args.on_no_viable {
            CliNoViable::Abort => OnNoViable::Abort,
            CliNoViable::CloseWindow => OnNoViable::CloseWindow,
        },
    };
    let gen = match args.mode {
        CliMode::Adaptive => {
            let grammar = resolve_grammar(
                args.grammar.as_deref().context("--grammar is required for adaptive mode")?,
            )?;
            adaptive_generate(
                &*lm,
                &grammar,
                args.s1.as_bytes(),
                args.s2.as_bytes(),
                &prompt,
                &opts,
            )?
        }
        CliMode::Constrained => {
            let grammar = resolve_grammar(
                args.grammar.as_deref().context("--grammar is required for constrained mode")?,
            )?;
            constrained_generate(&*lm, &grammar, &prompt, &opts)?
        }
        CliMode::Unconstrained => unconstrained_generate(&*lm, &prompt, &opts)?,
    };
    let mut out = std::io::stdout().lock();
    out.write_all(&gen.text)?;
    out.write_all(b"\n")?;
    let complete = gen.windows.iter().filter(|w| w.complete).count();
    eprintln!(
        "steps: {}  windows: {} ({} complete)  eos: {}",
        gen.steps.len(),
        gen.windows.len(),
        complete,
        gen.ended_with_eos
    );
    if let Some(path) = &args.log_steps {
        fs::write(path, serde_json::to_string_pretty(&step_log(&gen))?)
            .with_context(|| format!("writing step log {:?}", path))?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&args.dataset)
        .with_context(|| format!("reading dataset {:?}", args.dataset))?;
    let instances = load_dataset(&text)?;
    let grammar = resolve_grammar(&args.grammar)?;
    let lm = build_lm(&args.lm, &args.tm_input, args.tm_budget, args.timeout_secs)?;
    let cfg = EvalConfig {
        s1: args.s1.into_bytes(),
        s2: args.s2.into_bytes(),
        max_new_tokens: args.max_new_tokens,
        seed: args.seed,
        trials: args.trials,
    };
    let method = match args.method {
        CliMethod::Adaptive => Method::Adaptive,
        CliMethod::Constrained => Method::Constrained,
        CliMethod::Unconstrained => Method::Unconstrained,
        CliMethod::UnconstrainedNoCot => Method::UnconstrainedNoCot,
    };
    let report = run_eval(&*lm, &instances, &grammar, method, &cfg);
    println!(
        "method={} total={} parsed={} ({:.1}%) correct={} ({:.1}%) avg_tokens={:.1}",
        report.method,
        report.total,
        report.parsed,
        report.parse_pct,
        report.correct,
        report.accuracy_pct,
        report.avg_tokens
    );
    if let Some(path) = &args.report {
        fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing report {:?}", path))?;
    }
    Ok(())
}

fn cmd_tm_demo(args: TmDemoArgs) -> Result<()> {
    let text = fs::read_to_string(&args.machine)
        .with_context(|| format!("reading machine {:?}", args.machine))?;
    let machine = TuringMachine::from_json(&text)?;
    let report = run_reasoning_demo(&machine, &args.input, args.budget)?;
    println!(
        "machine={} input={:?} steps={} output={:?}",
        report.machine, report.input, report.steps, report.output
    );
    println!(
        "exact={} member={} prefixes_valid={}",
        report.exact, report.member, report.prefixes_valid
    );
    println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Decode(args) => cmd_decode(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::TmDemo(args) => cmd_tm_demo(args),
    };
    if let Err(e) = result {
        eprintln!("error: {:#}", e);
        std::process::exit(1);
    }
}
