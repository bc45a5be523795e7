use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use memadapter::harness::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use memadapter::harness::config::{ConfigError, EngineConfig};
use memadapter::harness::pipeline::{
    build_vocab, module_from_sections, module_sections, retriever_from_sections, retriever_sections, Engine,
    PipelineError,
};
use memadapter::harness::{generate_synthetic_corpus, load_corpus, write_corpus, CorpusError, CorpusInstance};
use memadapter::retriever::vocab::VocabError;
use memadapter::{parse_evidence, parse_full_graph, verify_subset, AlignmentModule, EvidenceSubgraph, Vocabulary};

const RETRIEVER_FILE: &str = "retriever.ckpt";
const VOCAB_FILE: &str = "vocab.jsonl";

#[derive(Parser, Debug)]
#[command(name = "memadapter", version, about = "Train, align, retrieve from and evaluate agent memories")]
struct Cli {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for artifacts, also where later stages look for them.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus as JSONL.
    GenData {
        #[arg(short = 'n', long, default_value_t = 2500)]
        count: usize,
        #[arg(long, default_value = "corpus.jsonl")]
        output: String,
    },
    /// Distill the subgraph retriever from gold subgraphs.
    TrainRetriever {
        #[arg(long)]
        corpus: PathBuf,
        /// Train on the first N instances only; the vocabulary still covers the whole corpus.
        #[arg(long)]
        train_count: Option<usize>,
    },
    /// Align one paradigm to the anchor space.
    TrainAlign {
        #[arg(long)]
        paradigm: String,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Retrieve evidence subgraphs from a single paradigm's memory.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        paradigm: String,
        #[arg(long)]
        output: Option<String>,
    },
    /// Retrieve from the max-pooled memories of the fusion paradigms.
    FuseRetrieve {
        #[arg(long)]
        corpus: PathBuf,
        /// Fraction of content segments each memory observes.
        #[arg(long, default_value_t = 1.0)]
        coverage: f64,
        #[arg(long, default_value = "fused.jsonl")]
        output: String,
    },
    /// Score retrieved subgraphs against a corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        retrieved: PathBuf,
        #[arg(long, default_value = "eval.json")]
        output: String,
    },
    /// Check that an evidence subgraph is a subset of a memory graph.
    Verify {
        #[arg(long)]
        full: PathBuf,
        #[arg(long)]
        sub: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Invalid(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) | CliError::Invalid(m) => f.write_str(m),
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let io = matches!(
            e,
            PipelineError::Config(ConfigError::Io { .. })
                | PipelineError::Corpus(CorpusError::Io { .. })
                | PipelineError::Checkpoint(CheckpointError::Io { .. })
        );
        if io {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        PipelineError::from(e).into()
    }
}

impl From<VocabError> for CliError {
    fn from(e: VocabError) -> Self {
        match e {
            VocabError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

/// One line of a retrieval output file.
#[derive(Debug, Serialize, Deserialize)]
struct RetrievedRecord {
    id: String,
    subgraph: String,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn load_config(cli: &Cli) -> Result<EngineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_vocab(dir: &Path) -> Result<Vocabulary, CliError> {
    let path = dir.join(VOCAB_FILE);
    let file = fs::File::open(&path).map_err(|e| io_error(&path, e))?;
    Ok(Vocabulary::read_jsonl(BufReader::new(file))?)
}

fn load_module(dir: &Path, paradigm: &str) -> Result<AlignmentModule, CliError> {
    let sections = load_checkpoint(&dir.join(format!("align_{paradigm}.ckpt")))?;
    Ok(module_from_sections(&sections)?)
}

fn write_retrieved(path: &Path, corpus: &[CorpusInstance], subgraphs: &[EvidenceSubgraph]) -> Result<(), CliError> {
    let mut out = String::new();
    for (inst, sub) in corpus.iter().zip(subgraphs) {
        let record = RetrievedRecord { id: inst.id.clone(), subgraph: sub.to_text() };
        out.push_str(&serde_json::to_string(&record).expect("records serialize"));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(&cli)?;
    let out = cli.out.as_path();
    if !matches!(cli.command, Command::Verify { .. }) {
        fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    }
    match &cli.command {
        Command::GenData { count, output } => {
            let config = config.resolved()?;
            let corpus = generate_synthetic_corpus(*count, config.seed, &config.synth)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            let path = out.join(output);
            let mut bytes = Vec::new();
            write_corpus(&mut bytes, &corpus).expect("writing to memory");
            write_file(&path, &bytes)?;
            println!("wrote {} instances to {}", corpus.len(), path.display());
        }
        Command::TrainRetriever { corpus, train_count } => {
            let engine = Engine::new(config)?;
            let corpus = load_corpus(corpus)?;
            let n = train_count.unwrap_or(corpus.len());
            if n == 0 || n > corpus.len() {
                return Err(CliError::Invalid(format!("train count must be in 1..={}", corpus.len())));
            }
            let vocab = build_vocab(&[&corpus])?;
            let (model, report) = engine.train_retriever(&corpus[..n], &vocab)?;
            save_checkpoint(&retriever_sections(&model), &out.join(RETRIEVER_FILE))?;
            write_file(&out.join(VOCAB_FILE), vocab.to_jsonl().as_bytes())?;
            write_json(&out.join("retriever_report.json"), &report)?;
            println!("trained on {n} instances; final epoch loss {:.6}", report.epoch_losses.last().copied().unwrap_or(f64::NAN));
        }
        Command::TrainAlign { paradigm, corpus } => {
            let engine = Engine::new(config)?;
            let corpus = load_corpus(corpus)?;
            let (module, report) = engine.train_align(&corpus, paradigm)?;
            save_checkpoint(&module_sections(&module), &out.join(format!("align_{paradigm}.ckpt")))?;
            write_json(&out.join(format!("align_{paradigm}.json")), &report)?;
            println!(
                "{paradigm}: held-out top-1 {:.4}, cosine gap {:.4}",
                report.final_eval.top1_accuracy,
                report.final_eval.cosine_gap()
            );
        }
        Command::Retrieve { corpus, paradigm, output } => {
            let engine = Engine::new(config)?;
            let corpus = load_corpus(corpus)?;
            let model = retriever_from_sections(&load_checkpoint(&out.join(RETRIEVER_FILE))?)?;
            let vocab = load_vocab(out)?;
            let module = if engine.paradigm(paradigm)? == engine.anchor { None } else { Some(load_module(out, paradigm)?) };
            let subgraphs = corpus
                .iter()
                .map(|inst| engine.retrieve(&model, &vocab, inst, paradigm, module.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            let name = output.clone().unwrap_or_else(|| format!("retrieved_{paradigm}.jsonl"));
            write_retrieved(&out.join(name), &corpus, &subgraphs)?;
            println!("retrieved {} subgraphs", subgraphs.len());
        }
        Command::FuseRetrieve { corpus, coverage, output } => {
            if !(0.0..=1.0).contains(coverage) {
                return Err(CliError::Invalid(format!("coverage must be in [0, 1], got {coverage}")));
            }
            let engine = Engine::new(config)?;
            let corpus = load_corpus(corpus)?;
            let model = retriever_from_sections(&load_checkpoint(&out.join(RETRIEVER_FILE))?)?;
            let vocab = load_vocab(out)?;
            let mut modules = BTreeMap::new();
            for name in &engine.config.fusion.paradigms {
                let id = engine.paradigm(name)?;
                let module = if id == engine.anchor { engine.anchor_module.clone() } else { load_module(out, name)? };
                modules.insert(id, module);
            }
            let subgraphs = corpus
                .iter()
                .map(|inst| engine.fuse_retrieve(&model, &vocab, &modules, inst, *coverage, None))
                .collect::<Result<Vec<_>, _>>()?;
            write_retrieved(&out.join(output), &corpus, &subgraphs)?;
            println!("retrieved {} fused subgraphs at coverage {coverage}", subgraphs.len());
        }
        Command::Eval { corpus, retrieved, output } => {
            let engine = Engine::new(config)?;
            let corpus = load_corpus(corpus)?;
            let text = read_text(retrieved)?;
            let mut by_id = HashMap::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let record: RetrievedRecord = serde_json::from_str(line)
                    .map_err(|e| CliError::Invalid(format!("{} line {}: {e}", retrieved.display(), i + 1)))?;
                let sub = parse_evidence(&record.subgraph)
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", record.id)))?;
                by_id.insert(record.id, sub);
            }
            let subgraphs = corpus
                .iter()
                .map(|inst| {
                    by_id.remove(&inst.id).ok_or_else(|| CliError::Invalid(format!("no retrieval for instance {}", inst.id)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let score = engine.score(&corpus, &subgraphs)?;
            write_json(&out.join(output), &score.report)?;
            let mut stdout = io::stdout().lock();
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&score.report).expect("report serializes"));
            let _ = writeln!(stdout, "subgraph exact match: {:.4}", score.exact_match);
        }
        Command::Verify { full, sub } => {
            let full_text = read_text(full)?;
            let sub_text = read_text(sub)?;
            let graph = parse_full_graph(&full_text).map_err(|e| CliError::Invalid(format!("{}: {e}", full.display())))?;
            let evidence = parse_evidence(&sub_text).map_err(|e| CliError::Invalid(format!("{}: {e}", sub.display())))?;
            let report = verify_subset(&evidence, &graph);
            if report.accepted {
                println!("ACCEPTED");
            } else {
                println!("REJECTED");
                for v in &report.violations {
                    println!("{:?}: {}", v.kind, v.element);
                }
                return Err(CliError::Invalid(format!("{} violation(s)", report.violations.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
