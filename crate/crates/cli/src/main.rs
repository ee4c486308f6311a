use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use cctrace::dataset::{self, Dataset, LoadMode, Tier, TierThresholds};
use cctrace::group::{trace_group, GroupQuery};
use cctrace::harness::{evaluate, trace_targets};
use cctrace::ledger::{ChainId, ChainModel, TransferKey};
use cctrace::orchestrator::{step_loop, BeliefState, Env, HeuristicPolicy, Outcome};
use cctrace::simgen::{generate_world, WorldSpec};
use cctrace::trace::{trace_single, TraceConfig, TraceResult};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cctrace", version, about = "Cross-chain transfer tracing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML file overriding trace configuration fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override for simulation and tier sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Abort on the first malformed input line (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Skip malformed input lines and report them.
    #[arg(long, global = true)]
    lenient: bool,
    /// Output path: dataset directory for `simulate` and `ingest`, report
    /// file otherwise (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and write it as a dataset directory.
    Simulate {
        /// TOML world specification; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// TOML tier thresholds.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Trace one destination transfer back to its source candidates.
    TraceSingle {
        #[arg(long)]
        dataset: PathBuf,
        /// Destination transaction id.
        #[arg(long)]
        target: String,
        /// Chain of the target; required only when the id is ambiguous.
        #[arg(long)]
        chain: Option<String>,
        /// Run through the milestone-gated investigation loop.
        #[arg(long)]
        orchestrated: bool,
        /// Also write the loop transcript as JSON lines.
        #[arg(long, requires = "orchestrated")]
        transcript: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        budget: usize,
    },
    /// Trace a group of destination transfers and vote on shared ancestors.
    TraceGroup {
        #[arg(long)]
        dataset: PathBuf,
        /// File with one target per line, `chain:tx_id` or a bare tx id.
        #[arg(long, conflicts_with = "sybil", required_unless_present = "sybil")]
        targets: Option<PathBuf>,
        /// Use the leaves of a planted Sybil scenario as targets.
        #[arg(long)]
        sybil: Option<String>,
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long, default_value_t = 2)]
        threshold: usize,
        /// Expand only each target's rank-1 candidate.
        #[arg(long)]
        top1: bool,
    },
    /// Trace every swap of a tier (or read saved results) and score them.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "hf_mini")]
        tier: String,
        /// Directory of saved trace results (`*.json`) to score instead of
        /// tracing.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Save each trace result as JSON into this directory.
        #[arg(long, conflicts_with = "results")]
        save_results: Option<PathBuf>,
    },
    /// Convert an external swap-record file into a dataset directory.
    Ingest {
        #[arg(long)]
        swaps: PathBuf,
        /// Price series files in the dataset price format.
        #[arg(long)]
        prices: Vec<PathBuf>,
        /// Chain model overrides, e.g. `BTC=utxo`.
        #[arg(long = "chain-model", value_parser = parse_model)]
        chain_models: Vec<(ChainId, ChainModel)>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
}

fn parse_model(s: &str) -> std::result::Result<(ChainId, ChainModel), String> {
    let (chain, model) = s.split_once('=').ok_or("expected CHAIN=MODEL")?;
    let model = match model {
        "utxo" => ChainModel::Utxo,
        "account" => ChainModel::Account,
        other => return Err(format!("unknown chain model {other:?}")),
    };
    Ok((ChainId::new(chain), model))
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<cctrace::Error>().map_or("cli", |e| e.kind());
            let message = format!("{e:#}").replace('\n', " ");
            let record = ErrorRecord { error: kind, message };
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            ExitCode::FAILURE
        }
    }
}

fn mode(g: &Global) -> LoadMode {
    if g.lenient && !g.strict {
        LoadMode::Lenient
    } else {
        LoadMode::Strict
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn trace_config(g: &Global) -> Result<TraceConfig> {
    let cfg: TraceConfig = match &g.config {
        Some(p) => read_toml(p)?,
        None => TraceConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn thresholds(path: Option<&PathBuf>, g: &Global) -> Result<TierThresholds> {
    let mut th: TierThresholds = match path {
        Some(p) => read_toml(p)?,
        None => TierThresholds::default(),
    };
    if let Some(seed) = g.seed {
        th.seed = seed;
    }
    Ok(th)
}

fn emit(g: &Global, text: String, structured: String) -> Result<()> {
    let body = match g.format {
        Format::Text => text,
        Format::Structured => structured,
    };
    match &g.out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn load(dir: &Path, g: &Global) -> Result<Dataset> {
    let ds = Dataset::load(dir, mode(g)).with_context(|| format!("loading dataset {}", dir.display()))?;
    for issue in &ds.issues {
        eprintln!("skipped {}:{}: {}", issue.file, issue.line, issue.message);
    }
    Ok(ds)
}

fn resolve_target(ds: &Dataset, spec: &str, chain: Option<&str>) -> Result<TransferKey> {
    let (chain, tx) = match (chain, spec.split_once(':')) {
        (Some(c), _) => (Some(c), spec),
        (None, Some((c, tx))) if ds.registry().model(&ChainId::new(c)).is_ok() => (Some(c), tx),
        _ => (None, spec),
    };
    if let Some(c) = chain {
        return Ok(TransferKey::new(c, tx));
    }
    let matches: Vec<_> = ds.store.iter().filter(|t| t.tx_id == tx).map(|t| t.key()).collect();
    match matches.as_slice() {
        [one] => Ok(one.clone()),
        [] => bail!("no transfer with id {tx}"),
        _ => bail!("transaction id {tx} exists on several chains; pass --chain"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { spec, thresholds: th } => {
            let mut spec: WorldSpec = match spec {
                Some(p) => read_toml(p)?,
                None => WorldSpec::default(),
            };
            if let Some(seed) = g.seed {
                spec.seed = seed;
            }
            let out = g.out.as_ref().ok_or_else(|| anyhow!("simulate needs --out DIR"))?;
            let world = generate_world(&spec)?;
            let mut th = thresholds(th.as_ref(), g)?;
            th.seed = spec.seed;
            world.write(out, &th)?;
            eprintln!(
                "wrote {} transfers, {} swaps, {} sybil scenarios to {}",
                world.store.len(),
                world.truth.links.len(),
                world.truth.sybils.len(),
                out.display()
            );
            Ok(())
        }
        Command::TraceSingle {
            dataset,
            target,
            chain,
            orchestrated,
            transcript,
            budget,
        } => {
            let ds = load(dataset, g)?;
            let cfg = trace_config(g)?;
            let key = resolve_target(&ds, target, chain.as_deref())?;
            let result: TraceResult = if *orchestrated {
                let env = Env {
                    store: &ds.store,
                    oracle: &ds.oracle,
                    cfg: &cfg,
                };
                let mut policy = HeuristicPolicy::new(key.clone(), &cfg);
                let out = step_loop(&mut policy, env, BeliefState::fresh(), *budget)?;
                if let Some(p) = transcript {
                    fs::write(p, out.transcript_jsonl()).with_context(|| format!("writing {}", p.display()))?;
                }
                match out.outcome {
                    Outcome::Completed(r) => r,
                    Outcome::Failed(f) => bail!("investigation stopped at belief {}: {}", f.belief, f.reason),
                }
            } else {
                trace_single(&ds.store, &ds.oracle, &key, &cfg)?
            };
            emit(g, result.render_text(), result.to_json() + "\n")
        }
        Command::TraceGroup {
            dataset,
            targets,
            sybil,
            depth,
            threshold,
            top1,
        } => {
            let ds = load(dataset, g)?;
            let keys = match (targets, sybil) {
                (Some(p), _) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    text.lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.starts_with('#'))
                        .map(|l| resolve_target(&ds, l, None))
                        .collect::<Result<Vec<_>>>()?
                }
                (None, Some(id)) => ds
                    .sybils
                    .iter()
                    .find(|s| &s.id == id)
                    .ok_or_else(|| anyhow!("no sybil scenario {id}"))?
                    .leaves
                    .clone(),
                (None, None) => bail!("pass --targets or --sybil"),
            };
            let q = GroupQuery {
                targets: keys,
                depth: *depth,
                trace: trace_config(g)?,
                vote_threshold: *threshold,
                top1_only: *top1,
                ..GroupQuery::default()
            };
            let result = trace_group(&ds.store, &ds.oracle, &q)?;
            emit(g, result.render_text(), result.to_json() + "\n")
        }
        Command::Evaluate {
            dataset,
            tier,
            results,
            save_results,
        } => {
            let ds = load(dataset, g)?;
            let tier: Tier = tier.parse()?;
            let records = ds.tier(dataset, tier, mode(g))?;
            let traced: BTreeMap<TransferKey, TraceResult> = match results {
                Some(dir) => read_results(dir)?,
                None => {
                    let targets: Vec<TransferKey> = records.iter().map(|r| r.link().dst).collect();
                    trace_targets(&ds.store, &ds.oracle, &targets, &trace_config(g)?)?
                }
            };
            if let Some(dir) = save_results {
                fs::create_dir_all(dir)?;
                for (i, r) in traced.values().enumerate() {
                    fs::write(dir.join(format!("{i:06}.json")), r.to_json() + "\n")?;
                }
            }
            let report = evaluate(&traced, &ds.links)?;
            emit(g, report.render_text(), report.to_json())
        }
        Command::Ingest {
            swaps,
            prices,
            chain_models,
            thresholds: th,
        } => {
            let out = g.out.as_ref().ok_or_else(|| anyhow!("ingest needs --out DIR"))?;
            let models: BTreeMap<ChainId, ChainModel> = chain_models.iter().cloned().collect();
            let th = thresholds(th.as_ref(), g)?;
            let ds = dataset::ingest(swaps, prices, &models, mode(g), out, Some(&th))?;
            for issue in &ds.issues {
                eprintln!("skipped {}:{}: {}", issue.file, issue.line, issue.message);
            }
            eprintln!(
                "ingested {} swaps ({} transfers) into {}",
                ds.swaps.len(),
                ds.store.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn read_results(dir: &Path) -> Result<BTreeMap<TransferKey, TraceResult>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let r: TraceResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        out.insert(r.target.clone(), r);
    }
    Ok(out)
}
