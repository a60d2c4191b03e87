//! Command-line entry points and the labeling service.

pub mod server;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use battleship_core::dataset::{load_candidate_pairs, load_dataset, write_candidate_pairs, DatasetSplit, LabelEntry, OracleMode};
use battleship_core::eval::{compare_table, write_reports_jsonl, write_summary_csv, IterationReport, Strategy};
use battleship_core::matcher::{encode_all, export_encodings, import_encodings};
use battleship_core::pairgraph::PairGraph;
use battleship_core::scoring::write_scores_csv;
use battleship_core::selector::{select_batch, ActiveLearner, GroundTruthOracle, LoopConfig};
use battleship_core::session::Session;
use battleship_core::synth::{generate, SynthConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for a configuration file that cannot be found.
pub const EXIT_MISSING_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "battleship", version, about = "Graph-based active learning for entity matching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Oracle,
    Human,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Candidate pair CSV (id, label, split, left_*, right_* columns).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub mode: Mode,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Port for human mode.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Write per-iteration graph edge lists and score tables.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the active-learning loop.
    Run(RunArgs),
    /// Serve a human labeling session over HTTP.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Run every strategy over several seeds and tabulate F1 and AUC.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Write a synthetic candidate-pair dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5000)]
        pairs: usize,
        #[arg(long, default_value_t = 0.1)]
        positive_rate: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the seed model and write encodings of every pool pair.
    ExportEncodings {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate an encodings file against a dataset.
    ImportEncodings {
        #[arg(long)]
        encodings: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Select the next batch from externally produced encodings.
    Select {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        encodings: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Label journal (JSON Lines) holding the current training labels.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0)]
        iteration: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: battleship_core::Error| e.to_string())
}

/// Load the config (or defaults); a named file that does not exist is reported
/// separately so it can map to its own exit status.
pub enum ConfigError {
    Missing(PathBuf),
    Invalid(anyhow::Error),
}

pub fn load_config(path: Option<&Path>) -> Result<LoopConfig, ConfigError> {
    match path {
        None => Ok(LoopConfig::default()),
        Some(p) if !p.exists() => Err(ConfigError::Missing(p.to_path_buf())),
        Some(p) => LoopConfig::load(p).map_err(|e| ConfigError::Invalid(e.into())),
    }
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    execute(cli.command)
}

pub fn execute(command: Command) -> i32 {
    let config_path = match &command {
        Command::Run(a) => a.config.clone(),
        Command::Serve { config, .. }
        | Command::Compare { config, .. }
        | Command::ExportEncodings { config, .. }
        | Command::Select { config, .. } => config.clone(),
        _ => None,
    };
    let config = match load_config(config_path.as_deref()) {
        Ok(c) => c,
        Err(ConfigError::Missing(p)) => {
            eprintln!("error: config file {} not found", p.display());
            return EXIT_MISSING_CONFIG;
        }
        Err(ConfigError::Invalid(e)) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    match dispatch(command, config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command, mut config: LoopConfig) -> anyhow::Result<()> {
    match command {
        Command::Run(args) => {
            if let Some(s) = args.strategy {
                config.strategy = s;
            }
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            match args.mode {
                Mode::Oracle => {
                    config.oracle = OracleMode::GroundTruth;
                    config.validate()?;
                    let split = load_dataset(&args.dataset, config.seed)?;
                    let reports = run_oracle(&config, &split, &args.out_dir, args.dump)?;
                    print_summary(&reports);
                    Ok(())
                }
                Mode::Human => {
                    config.oracle = OracleMode::Human;
                    serve(config, &args.dataset, &args.out_dir, args.port)
                }
            }
        }
        Command::Serve {
            dataset,
            strategy,
            seed,
            out_dir,
            port,
            ..
        } => {
            if let Some(s) = strategy {
                config.strategy = s;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            config.oracle = OracleMode::Human;
            serve(config, &dataset, &out_dir, port)
        }
        Command::Compare { dataset, seeds, out_dir, .. } => {
            std::fs::create_dir_all(&out_dir)?;
            let mut table_runs = Vec::new();
            for seed in seeds {
                let split = load_dataset(&dataset, seed)?;
                for strategy in [Strategy::Battleship, Strategy::Random, Strategy::Entropy] {
                    let run_config = LoopConfig {
                        seed,
                        strategy,
                        oracle: OracleMode::GroundTruth,
                        ..config.clone()
                    };
                    let dir = out_dir.join(format!("{strategy}-seed{seed}"));
                    let reports = run_oracle(&run_config, &split, &dir, false)?;
                    table_runs.push((format!("{strategy}-seed{seed}"), reports));
                }
            }
            let table = compare_table(&table_runs);
            std::fs::write(out_dir.join("compare.csv"), &table)?;
            print!("{table}");
            Ok(())
        }
        Command::Synth {
            out,
            pairs,
            positive_rate,
            noise,
            seed,
        } => {
            let data = generate(&SynthConfig {
                n_pairs: pairs,
                positive_rate,
                noise,
                seed,
                ..SynthConfig::default()
            });
            write_candidate_pairs(&out, &data, None)?;
            println!("wrote {} pairs to {}", data.len(), out.display());
            Ok(())
        }
        Command::ExportEncodings { dataset, out, .. } => {
            let split = load_dataset(&dataset, config.seed)?;
            let mut learner = ActiveLearner::new(config, &split)?;
            learner.start()?;
            let encodings = encode_all(learner.matcher.as_ref().unwrap(), &split.train_pool);
            export_encodings(&out, &encodings)?;
            println!("wrote {} encodings to {}", encodings.len(), out.display());
            Ok(())
        }
        Command::ImportEncodings { encodings, dataset } => {
            let pairs = load_candidate_pairs(&dataset)?;
            let imported = import_encodings(&encodings, &pairs)?;
            let dim = imported.first().map_or(0, |e| e.representation.len());
            println!("{} encodings of dimension {dim} match the dataset", imported.len());
            Ok(())
        }
        Command::Select {
            encodings,
            dataset,
            labels,
            iteration,
            out,
            ..
        } => {
            let pairs = load_candidate_pairs(&dataset)?;
            let imported = import_encodings(&encodings, &pairs)?;
            let position: std::collections::HashMap<&str, usize> =
                imported.iter().enumerate().map(|(i, e)| (e.pair_id.as_str(), i)).collect();
            let mut train = vec![None; imported.len()];
            let text = std::fs::read_to_string(&labels).with_context(|| format!("reading {}", labels.display()))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: LabelEntry =
                    serde_json::from_str(line).with_context(|| format!("{}:{}", labels.display(), n + 1))?;
                let Some(&i) = position.get(entry.pair_id.as_str()) else {
                    bail!("{}:{}: pair {} has no encoding", labels.display(), n + 1, entry.pair_id);
                };
                train[i] = Some(entry.label);
            }
            let selection = select_batch(&imported, &train, &config, iteration)?;
            let body = serde_json::json!({
                "selected": selection.selected.iter().map(|&i| &imported[i].pair_id).collect::<Vec<_>>(),
                "weak": selection.weak.iter().map(|&(i, l)| serde_json::json!({"pair_id": imported[i].pair_id, "label": l})).collect::<Vec<_>>(),
                "plan": selection.plan,
            });
            let text = serde_json::to_string_pretty(&body)?;
            match out {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
    }
}

fn dump_graph(graph: &PairGraph, path: PathBuf) -> anyhow::Result<()> {
    graph.write_edges_csv(&path).with_context(|| format!("writing {}", path.display()))
}

/// Ground-truth run writing reports (and optional dumps) into `out_dir`.
pub fn run_oracle(config: &LoopConfig, split: &DatasetSplit, out_dir: &Path, dump: bool) -> anyhow::Result<Vec<IterationReport>> {
    std::fs::create_dir_all(out_dir)?;
    let mut learner = ActiveLearner::new(config.clone(), split)?;
    let mut oracle = GroundTruthOracle::default();
    learner.start()?;
    for _ in 0..config.iterations {
        let Some(report) = learner.step(&mut oracle)? else { break };
        let i = report.iteration;
        if dump {
            if let Some(sel) = &learner.last_selection {
                if let Some(g) = &sel.graphs {
                    dump_graph(&g.positive, out_dir.join(format!("iter{i}_positive_edges.csv")))?;
                    dump_graph(&g.negative, out_dir.join(format!("iter{i}_negative_edges.csv")))?;
                    dump_graph(&g.heterogeneous, out_dir.join(format!("iter{i}_heterogeneous_edges.csv")))?;
                }
                if let Some(s) = &sel.scores {
                    write_scores_csv(out_dir.join(format!("iter{i}_scores.csv")), s)?;
                }
            }
        }
        if learner.state.pool_exhausted {
            break;
        }
    }
    let reports = learner.state.reports;
    write_reports_jsonl(out_dir.join("reports.jsonl"), &reports)?;
    write_summary_csv(out_dir.join("summary.csv"), &reports)?;
    std::fs::write(out_dir.join("config.toml"), config.to_toml_string())?;
    Ok(reports)
}

fn print_summary(reports: &[IterationReport]) {
    for r in reports {
        println!("iteration {:>2}  labels {:>5}  f1 {:.4}", r.iteration, r.labels_used, r.f1);
    }
    if let Ok(auc) = battleship_core::eval::auc_f1(&battleship_core::eval::curve(reports)) {
        println!("auc {auc:.2}");
    }
}

fn serve(config: LoopConfig, dataset: &Path, out_dir: &Path, port: u16) -> anyhow::Result<()> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let split = Arc::new(load_dataset(dataset, config.seed)?);
    let session = Session::new(&split.train_pool, Some(&out_dir.join("labels.jsonl")))?;
    let worker = server::spawn_loop(config, split, session.clone());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, server::router(session.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    session.close();
    let reports = session.reports();
    write_reports_jsonl(out_dir.join("reports.jsonl"), &reports)?;
    write_summary_csv(out_dir.join("summary.csv"), &reports)?;
    match worker.join() {
        Ok(Ok(())) | Ok(Err(battleship_core::Error::SessionClosed)) => Ok(()),
        Ok(Err(e)) => Err(e.into()),
        Err(_) => bail!("labeling loop panicked"),
    }
}
