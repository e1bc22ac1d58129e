//! The `semodel` command line.
//!
//! Exit codes: 0 on success, 1 on domain errors (reported as
//! `{"error":{"kind":…,"message":…}}` on stderr), 2 on usage errors.

use std::fmt::Display;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde::Serialize;
use serde_json::json;

use crate::concepts::{parse_concepts, parse_concepts_for, ConceptSet, Literal};
use crate::facts::FactualModel;
use crate::lunch::{
    evaluate_agent, explore, invent_subgoals, transitions_to_kb, Dish, LunchConfig, SubgoalChain,
};
use crate::miner::{mine_laws, oracle_mine, MiningParams};
use crate::predict::{predict, ObjectDescription};
use crate::rules::{
    conditional_probability, explain, fraction_string, parse_fraction, LawSet, Prob, Rule,
};
use crate::{datasets, testgen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(
    name = "semodel",
    version,
    about = "Mine and apply probabilistic laws over fact bases"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Output format [default: json; text for `lunch show-chain`].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a fact file (JSON Lines) and summarise it.
    KbLoad { path: PathBuf },
    /// Parse a concept file, optionally checking it against a fact file.
    ConceptsLoad {
        path: PathBuf,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Mine probabilistic laws.
    Mine(MineArgs),
    /// Predict concept literals for a described object.
    Predict {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        concepts: PathBuf,
        #[arg(long)]
        laws: PathBuf,
        /// JSON object, or `@file`.
        #[arg(long)]
        object: String,
    },
    /// Render laws as sentences.
    Explain {
        #[arg(long)]
        laws: PathBuf,
        #[arg(long)]
        concepts: PathBuf,
    },
    /// Grid-world lunch harness.
    Lunch {
        #[command(subcommand)]
        command: LunchCommand,
    },
    /// Run the oracle and consistency checks on generated inputs.
    Selfcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
    /// Print a built-in dataset (`hair10`, `hair100`, `hair-concepts`).
    #[command(hide = true)]
    Dataset { name: String },
}

#[derive(Debug, Args)]
struct MineArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    concepts: PathBuf,
    /// Target literal, e.g. `T10` or `!T9`. Repeatable.
    #[arg(long = "target", required = true, value_parser = parse_literal)]
    targets: Vec<Literal>,
    /// Comma-separated concept names [default: every concept].
    #[arg(long, value_delimiter = ',')]
    vocab: Option<Vec<String>>,
    #[arg(long, default_value_t = 3)]
    max_premises: usize,
    #[arg(long, default_value_t = 3)]
    min_support: u64,
    /// Fraction (`1/2`) or decimal (`0.5`).
    #[arg(long, default_value = "1/2", value_parser = parse_prob)]
    min_p: Prob,
    /// Beam width; 0 means exhaustive.
    #[arg(long, default_value_t = 0)]
    beam: usize,
    /// Also write the law set to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum LunchCommand {
    /// Explore with a random policy, mine laws and invent subgoals.
    Train {
        #[arg(long, default_value = "5x5", value_parser = parse_grid)]
        grid: (usize, usize),
        #[arg(long, default_value_t = 500)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated eating order.
        #[arg(long, value_delimiter = ',', value_parser = parse_dish)]
        order: Option<Vec<Dish>>,
        /// Steps per exploration episode [default: the evaluation budget].
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model on fresh layouts.
    Eval {
        #[arg(long, default_value_t = 100)]
        episodes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: PathBuf,
    },
    /// Print the learned subgoal hierarchy.
    ShowChain {
        #[arg(long)]
        model: PathBuf,
    },
}

fn parse_literal(s: &str) -> Result<Literal, String> {
    s.parse::<Literal>().map_err(|e| e.to_string())
}

/// Exact parse of `a/b` or a finite decimal such as `0.95`.
pub fn parse_prob(s: &str) -> Result<Prob, String> {
    let s = s.trim();
    let p = if s.contains('/') {
        parse_fraction(s)
    } else {
        parse_decimal(s)
    };
    match p {
        Some(p) if p <= Ratio::from_integer(1) => Ok(p),
        _ => Err(format!("`{s}` is not a probability")),
    }
}

fn parse_decimal(s: &str) -> Option<Prob> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    let digits = |d: &str| d.chars().all(|c| c.is_ascii_digit());
    if (int.is_empty() && frac.is_empty()) || !digits(int) || !digits(frac) || frac.len() > 18 {
        return None;
    }
    let denom = 10u64.pow(frac.len() as u32);
    let num = |d: &str| {
        if d.is_empty() {
            Some(0)
        } else {
            d.parse::<u64>().ok()
        }
    };
    let n = num(int)?.checked_mul(denom)?.checked_add(num(frac)?)?;
    Some(Ratio::new(n, denom))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not WIDTHxHEIGHT"))?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((n(w)?, n(h)?))
}

fn parse_dish(s: &str) -> Result<Dish, String> {
    Dish::from_name(s.trim()).ok_or_else(|| format!("unknown dish `{s}`"))
}

/// A domain failure, rendered as JSON on stderr.
#[derive(Debug)]
struct Failure {
    kind: String,
    message: String,
}

impl Failure {
    fn new(kind: &str, message: impl Display) -> Self {
        Failure {
            kind: kind.to_string(),
            message: message.to_string(),
        }
    }
}

const WRAPPERS: [&str; 6] = ["Mine", "Concept", "Rule", "Fact", "Lunch", "Predict"];

/// Innermost enum variant name from a `Debug` rendering, skipping wrapper
/// variants such as `Mine(Concept(..))`.
fn error_kind(debug: &str) -> String {
    let mut rest = debug;
    loop {
        let end = rest
            .find(|c: char| !c.is_alphanumeric() && c != '_')
            .unwrap_or(rest.len());
        let name = &rest[..end];
        if WRAPPERS.contains(&name) && rest[end..].starts_with('(') {
            rest = &rest[end + 1..];
        } else {
            return name.to_string();
        }
    }
}

macro_rules! domain_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure { kind: error_kind(&format!("{e:?}")), message: e.to_string() }
            }
        }
    )*};
}

domain_errors!(
    crate::facts::FactError,
    crate::concepts::ConceptError,
    crate::rules::RuleError,
    crate::miner::MineError,
    crate::predict::PredictError,
    crate::lunch::LunchError
);

type Outcome = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))
}

fn load_kb(path: &Path) -> Result<FactualModel, Failure> {
    let file =
        fs::File::open(path).map_err(|e| Failure::new("Io", format!("{}: {e}", path.display())))?;
    Ok(FactualModel::from_jsonl(BufReader::new(file))?)
}

fn load_concepts(path: &Path, model: Option<&FactualModel>) -> Result<ConceptSet, Failure> {
    let src = read(path)?;
    Ok(match model {
        Some(m) => parse_concepts_for(&src, m)?,
        None => parse_concepts(&src)?,
    })
}

fn load_laws(path: &Path) -> Result<LawSet, Failure> {
    Ok(LawSet::from_jsonl(read(path)?.as_bytes())?)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn execute<S: AsRef<str>>(args: &[S], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args.iter().map(|a| a.as_ref())) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    match run(cli) {
        Ok(out) => {
            let _ = stdout.write_all(out.as_bytes());
            0
        }
        Err(f) => {
            let err = json!({"error": {"kind": f.kind, "message": f.message}});
            let _ = writeln!(stderr, "{err}");
            1
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let text = |default: Format| cli.format.unwrap_or(default) == Format::Text;
    match cli.command {
        Command::KbLoad { path } => kb_load(&path, text(Format::Json)),
        Command::ConceptsLoad { path, kb } => {
            concepts_load(&path, kb.as_deref(), text(Format::Json))
        }
        Command::Mine(args) => mine(args, text(Format::Json)),
        Command::Predict {
            kb,
            concepts,
            laws,
            object,
        } => predict_cmd(kb.as_deref(), &concepts, &laws, &object, text(Format::Json)),
        Command::Explain { laws, concepts } => explain_cmd(&laws, &concepts, text(Format::Json)),
        Command::Lunch { command } => match command {
            LunchCommand::Train {
                grid,
                episodes,
                seed,
                order,
                max_steps,
                out,
            } => {
                let order = order.unwrap_or_else(|| Dish::ALL.to_vec());
                let config = LunchConfig::new(grid.0, grid.1, order)?;
                lunch_train(config, episodes, seed, max_steps, &out, text(Format::Json))
            }
            LunchCommand::Eval {
                episodes,
                seed,
                model,
            } => lunch_eval(&model, episodes, seed, text(Format::Json)),
            LunchCommand::ShowChain { model } => {
                let chain = load_chain(&model)?;
                Ok(if text(Format::Text) {
                    chain.to_text()
                } else {
                    to_json(&chain)
                })
            }
        },
        Command::Selfcheck { seed, cases } => selfcheck(seed, cases, text(Format::Json)),
        Command::Dataset { name } => match name.as_str() {
            "hair-concepts" => Ok(datasets::HAIR_CONCEPTS.to_string()),
            other => datasets::by_name(other)
                .map(|m| m.to_jsonl())
                .ok_or_else(|| Failure::new("UnknownDataset", format!("no dataset `{other}`"))),
        },
    }
}

fn kb_load(path: &Path, text: bool) -> Outcome {
    let model = load_kb(path)?;
    let categories: Vec<&str> = model.categories().collect();
    if text {
        let mut out = format!(
            "{} objects, {} facts\nfingerprint {}\ncategories: {}\n",
            model.object_count(),
            model.fact_count(),
            model.fingerprint(),
            categories.join(", ")
        );
        for (symbol, kind) in model.schema() {
            out.push_str(&format!("{symbol}: {kind:?}\n"));
        }
        return Ok(out);
    }
    let schema: serde_json::Map<String, serde_json::Value> = model
        .schema()
        .iter()
        .map(|(s, k)| (s.clone(), json!(format!("{k:?}"))))
        .collect();
    Ok(to_json(&json!({
        "objects": model.object_count(),
        "facts": model.fact_count(),
        "fingerprint": model.fingerprint(),
        "categories": categories,
        "schema": schema,
    })))
}

fn concepts_load(path: &Path, kb: Option<&Path>, text: bool) -> Outcome {
    let model = kb.map(load_kb).transpose()?;
    let concepts = load_concepts(path, model.as_ref())?;
    if text {
        return Ok(concepts
            .iter()
            .map(|c| format!("{}: {}\n", c.name, c.gloss()))
            .collect());
    }
    let list: Vec<_> = concepts
        .iter()
        .map(|c| json!({"name": c.name, "source": c.to_source(), "gloss": c.gloss()}))
        .collect();
    Ok(to_json(&json!({ "concepts": list })))
}

fn mine(args: MineArgs, text: bool) -> Outcome {
    let model = load_kb(&args.kb)?;
    let concepts = load_concepts(&args.concepts, Some(&model))?;
    let params = MiningParams {
        targets: args.targets,
        vocabulary: args.vocab.unwrap_or_else(|| concepts.names()),
        max_premises: args.max_premises,
        min_support: args.min_support,
        min_p: args.min_p,
        beam_width: args.beam,
        ..Default::default()
    };
    let laws = mine_laws(&model, &concepts, &params)?;
    let jsonl = laws.to_jsonl();
    if let Some(out) = &args.out {
        write(out, &jsonl)?;
    }
    if text {
        let mut out = String::new();
        for law in &laws.laws {
            out.push_str(&format!(
                "{}  [{} = {}/{}]\n",
                law.rule,
                fraction_string(&law.p()),
                law.stats.hits,
                law.stats.support
            ));
            out.push_str(&format!("  {}\n", explain(law, &concepts)?));
        }
        if out.is_empty() {
            out.push_str("No laws.\n");
        }
        return Ok(out);
    }
    Ok(jsonl)
}

fn predict_cmd(
    kb: Option<&Path>,
    concepts: &Path,
    laws: &Path,
    object: &str,
    text: bool,
) -> Outcome {
    let model = kb.map(load_kb).transpose()?;
    let concepts = load_concepts(concepts, model.as_ref())?;
    let laws = load_laws(laws)?;
    let src = match object.strip_prefix('@') {
        Some(path) => read(Path::new(path))?,
        None => object.to_string(),
    };
    let desc = ObjectDescription::from_json(&src)?;
    if let Some(m) = &model {
        desc.check_against(m)?;
    }
    let report = predict(&desc, &laws.laws, &concepts)?;
    Ok(if text {
        report.to_text(&concepts)?
    } else {
        to_json(&report)
    })
}

fn explain_cmd(laws: &Path, concepts: &Path, text: bool) -> Outcome {
    let concepts = load_concepts(concepts, None)?;
    let laws = load_laws(laws)?;
    let mut lines = Vec::new();
    for law in &laws.laws {
        lines.push((law, explain(law, &concepts)?));
    }
    if text {
        return Ok(lines.iter().map(|(_, s)| format!("{s}\n")).collect());
    }
    let list: Vec<_> = lines
        .iter()
        .map(|(law, s)| json!({"law": law, "text": s}))
        .collect();
    Ok(to_json(&list))
}

#[derive(Debug, Serialize, serde::Deserialize)]
struct LunchModelInfo {
    config: LunchConfig,
    seed: u64,
    episodes: u64,
    max_steps: usize,
}

/// Files written by `lunch train`.
pub const MODEL_FILES: [&str; 5] = [
    "model.json",
    "episodes.jsonl",
    "laws.jsonl",
    "chain.json",
    "concepts.cdl",
];

fn lunch_train(
    config: LunchConfig,
    episodes: u64,
    seed: u64,
    max_steps: Option<usize>,
    out: &Path,
    text: bool,
) -> Outcome {
    let max_steps = max_steps.unwrap_or_else(|| config.step_budget());
    let log = explore(&config, episodes, max_steps, seed)?;
    let (model, concepts) = transitions_to_kb(&log.plain(), &config.order)?;
    let root = *config.order.last().expect("validated order");
    let params = MiningParams {
        max_premises: 3,
        min_support: 3,
        ..Default::default()
    };
    let invention = invent_subgoals(&model, &concepts, &params, root)?;
    fs::create_dir_all(out).map_err(|e| Failure::new("Io", format!("{}: {e}", out.display())))?;
    let info = LunchModelInfo {
        config,
        seed,
        episodes: log.episodes,
        max_steps,
    };
    write(&out.join("model.json"), &to_json(&info))?;
    write(&out.join("episodes.jsonl"), &log.to_jsonl())?;
    write(&out.join("laws.jsonl"), &invention.laws.to_jsonl())?;
    write(&out.join("chain.json"), &to_json(&invention.chain))?;
    write(&out.join("concepts.cdl"), &concepts.to_source())?;
    if text {
        return Ok(format!(
            "{} episodes, {} transitions, {} laws\n{}",
            log.episodes,
            log.transitions.len(),
            invention.laws.laws.len(),
            invention.chain.to_text()
        ));
    }
    Ok(to_json(&json!({
        "episodes": log.episodes,
        "transitions": log.transitions.len(),
        "laws": invention.laws.laws.len(),
        "chain": invention.chain,
    })))
}

fn load_chain(dir: &Path) -> Result<SubgoalChain, Failure> {
    serde_json::from_str(&read(&dir.join("chain.json"))?)
        .map_err(|e| Failure::new("Format", format!("chain.json: {e}")))
}

fn lunch_eval(dir: &Path, episodes: u64, seed: u64, text: bool) -> Outcome {
    let info: LunchModelInfo = serde_json::from_str(&read(&dir.join("model.json"))?)
        .map_err(|e| Failure::new("Format", format!("model.json: {e}")))?;
    let chain = load_chain(dir)?;
    let eval = evaluate_agent(&chain, &info.config, episodes, seed)?;
    Ok(if text {
        format!(
            "{}/{} episodes succeeded (rate {})\n",
            eval.successes,
            eval.episodes,
            fraction_string(&eval.success_rate)
        )
    } else {
        to_json(&eval)
    })
}

/// One named check and whether it passed.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
}

/// Property suites on generated inputs: counting oracle, miner oracle
/// equivalence and prediction consistency.
pub fn run_selfcheck(seed: u64, cases: usize) -> Vec<CheckResult> {
    let mut results = Vec::new();

    let mut r = testgen::rng(seed);
    let mut failure = String::new();
    for i in 0..cases {
        let world = testgen::random_world(&mut r, 12, 8);
        let conclusion = testgen::random_literal(&mut r, &world);
        let premises = testgen::random_premises(&mut r, &world, &conclusion, 3);
        let rule = Rule::new(premises, conclusion).expect("distinct concepts");
        let fast = conditional_probability(&world.model, &world.concepts, &rule);
        let slow = count_oracle(&world.model, &world.concepts, &rule);
        if fast.as_ref().ok() != Some(&slow) {
            failure = format!("case {i}: {rule}: {fast:?} vs {slow:?}");
            break;
        }
    }
    results.push(CheckResult {
        name: "conditional probability equals per-object count".into(),
        passed: failure.is_empty(),
        cases,
        detail: failure,
    });

    let mut r = testgen::rng(seed.wrapping_add(1));
    let mut failure = String::new();
    for i in 0..cases {
        let world = testgen::random_world(&mut r, 12, 8);
        let target = testgen::random_literal(&mut r, &world);
        let params = MiningParams {
            targets: vec![target],
            vocabulary: world.names(),
            max_premises: 3,
            min_support: 1,
            min_p: Ratio::from_integer(0),
            ..Default::default()
        };
        let a = mine_laws(&world.model, &world.concepts, &params).map(|s| s.laws);
        let b = oracle_mine(&world.model, &world.concepts, &params).map(|s| s.laws);
        if a != b {
            failure = format!("case {i}: miner and oracle disagree");
            break;
        }
    }
    results.push(CheckResult {
        name: "exhaustive miner equals brute-force oracle".into(),
        passed: failure.is_empty(),
        cases,
        detail: failure,
    });

    let mut r = testgen::rng(seed.wrapping_add(2));
    let mut failure = String::new();
    for i in 0..cases {
        let world = testgen::random_world(&mut r, 12, 8);
        let params = MiningParams {
            targets: world
                .names()
                .into_iter()
                .flat_map(|n| [Literal::pos(n.clone()), Literal::neg(n)])
                .collect(),
            vocabulary: world.names(),
            max_premises: 2,
            min_support: 1,
            min_p: Ratio::from_integer(0),
            ..Default::default()
        };
        let laws = match mine_laws(&world.model, &world.concepts, &params) {
            Ok(l) => l.laws,
            Err(e) => {
                failure = format!("case {i}: {e}");
                break;
            }
        };
        let desc = testgen::random_description(&mut r);
        match predict(&desc, &laws, &world.concepts) {
            Ok(report) => {
                let mut seen = std::collections::BTreeSet::new();
                if report
                    .predicted
                    .iter()
                    .any(|p| !seen.insert(&p.literal.concept))
                {
                    failure = format!("case {i}: both T and ¬T predicted");
                    break;
                }
            }
            Err(e) => {
                failure = format!("case {i}: {e}");
                break;
            }
        }
    }
    results.push(CheckResult {
        name: "prediction never yields T and ¬T together".into(),
        passed: failure.is_empty(),
        cases,
        detail: failure,
    });
    results
}

/// Filter-and-count reference for a rule's statistics.
pub fn count_oracle(
    model: &FactualModel,
    concepts: &ConceptSet,
    rule: &Rule,
) -> crate::rules::RuleStats {
    let mut stats = crate::rules::RuleStats {
        support: 0,
        hits: 0,
    };
    for id in model.object_ids() {
        let eval = |l: &Literal| {
            crate::concepts::eval_literal(model, concepts, l, id).expect("known concept and object")
        };
        let Some(c) = eval(rule.conclusion()) else {
            continue;
        };
        if rule.premises().iter().all(|l| eval(l) == Some(true)) {
            stats.support += 1;
            stats.hits += c as u64;
        }
    }
    stats
}

fn selfcheck(seed: u64, cases: usize, text: bool) -> Outcome {
    let results = run_selfcheck(seed, cases);
    let failed = results.iter().filter(|r| !r.passed).count();
    let out = if text {
        results
            .iter()
            .map(|r| {
                let mark = if r.passed { "PASS" } else { "FAIL" };
                let detail = if r.detail.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", r.detail)
                };
                format!("{mark} {} [{} cases]{detail}\n", r.name, r.cases)
            })
            .collect()
    } else {
        to_json(&json!({ "passed": failed == 0, "checks": results }))
    };
    if failed > 0 {
        return Err(Failure::new(
            "SelfcheckFailed",
            format!("{failed} check(s) failed\n{out}"),
        ));
    }
    Ok(out)
}
