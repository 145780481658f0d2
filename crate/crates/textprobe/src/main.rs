use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use textprobe::chart::{emit_chart, ChartKind, Series};
use textprobe::config::ConfigFile;
use textprobe::corpus::segment;
use textprobe::iterate::{run_iterative, IterationSettings};
use textprobe::report::{aggregate, emit_csv, mean_matrix, rate_table, round3, GroupBy};
use textprobe::runner::{run_probe, sweep_max_tokens, RunSummary};
use textprobe::store::{read_store, DirLock, ProbeResult, StoreRecord, StoreWriter, STORE_FILE};

#[derive(Parser)]
#[command(name = "textprobe")]
#[command(about = "Measure how much of a source text a model reproduces from partial prefixes")]
struct Cli {
    /// Path to the experiment config file (TOML)
    #[arg(long, global = true, default_value = "textprobe.toml")]
    config: PathBuf,

    /// Override the config's output_dir
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Segment the corpus and write a samples manifest
    Segment,
    /// Probe every sample x model and persist scored results
    Probe,
    /// Run the probe once per configured max_tokens sweep value
    Sweep,
    /// Iterative prompting: feed each completion back as the next prompt
    Iterate {
        /// Document id (or title) to iterate on
        #[arg(long)]
        doc: String,
    },
    /// Aggregate the result store into CSV tables and SVG charts
    Report {
        /// Table to emit (by_model, by_text_type, by_max_tokens, by_family);
        /// repeatable, defaults to all that apply
        #[arg(long)]
        table: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = ConfigFile::from_path(&cli.config)?;
    let base_dir = cli
        .config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let exp = cfg.to_experiment(&base_dir, cli.output_dir.as_deref())?;
    if cli.verbose {
        eprintln!("config hash: {}", exp.config_hash);
        eprintln!("output dir:  {}", exp.output_dir.display());
    }

    match &cli.command {
        Commands::Segment => cmd_segment(&cfg, &exp),
        Commands::Probe => cmd_probe(&exp),
        Commands::Sweep => cmd_sweep(&exp),
        Commands::Iterate { doc } => cmd_iterate(&cfg, &exp, doc),
        Commands::Report { table } => cmd_report(&cfg, &exp, table),
    }
}

fn cmd_segment(cfg: &ConfigFile, exp: &textprobe::runner::Experiment) -> Result<ExitCode> {
    let _ = cfg;
    std::fs::create_dir_all(&exp.output_dir)?;
    let mut manifest = Vec::new();
    for doc in &exp.docs {
        let samples = segment(doc, &exp.segmentation)?;
        println!(
            "{} ({}, {} words): {} samples",
            doc.id,
            doc.text_type,
            doc.words.len(),
            samples.len()
        );
        manifest.extend(samples);
    }
    let path = exp.output_dir.join("samples.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("samples manifest: {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn print_summary(summary: &RunSummary) {
    let sweep_tag = summary
        .max_tokens
        .map(|mt| format!(" [max_tokens={mt}]"))
        .unwrap_or_default();
    println!(
        "tasks: {}  attempted: {}  succeeded: {}  failed: {}  skipped: {}{}",
        summary.total_tasks,
        summary.attempted,
        summary.succeeded,
        summary.failed,
        summary.skipped,
        sweep_tag
    );
}

fn exit_for(failed: usize) -> ExitCode {
    if failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_probe(exp: &textprobe::runner::Experiment) -> Result<ExitCode> {
    std::fs::create_dir_all(&exp.output_dir)?;
    let _lock = DirLock::acquire(&exp.output_dir)?;
    let summary = run_probe(exp)?;
    print_summary(&summary);
    println!("store: {}", summary.store_path);
    Ok(exit_for(summary.failed))
}

fn cmd_sweep(exp: &textprobe::runner::Experiment) -> Result<ExitCode> {
    std::fs::create_dir_all(&exp.output_dir)?;
    let _lock = DirLock::acquire(&exp.output_dir)?;
    let summaries = sweep_max_tokens(exp)?;
    let mut failed = 0;
    for summary in &summaries {
        print_summary(summary);
        failed += summary.failed;
    }
    Ok(exit_for(failed))
}

fn cmd_iterate(
    cfg: &ConfigFile,
    exp: &textprobe::runner::Experiment,
    doc_sel: &str,
) -> Result<ExitCode> {
    let doc = exp
        .docs
        .iter()
        .find(|d| d.id == doc_sel || d.title == doc_sel)
        .ok_or_else(|| anyhow!("unknown document id or title: {doc_sel}"))?;
    std::fs::create_dir_all(&exp.output_dir)?;
    let _lock = DirLock::acquire(&exp.output_dir)?;
    let mut writer = StoreWriter::append(&exp.output_dir.join(STORE_FILE))?;
    let mut had_error = false;
    for (provider_name, model_id) in &exp.models {
        let provider = &exp.providers[provider_name];
        let settings = IterationSettings {
            seed_word_count: cfg.iterate.seed_word_count,
            iterations: cfg.iterate.iterations,
            params: textprobe::provider::GenerationParams {
                model: model_id.clone(),
                ..exp.params.clone()
            },
            rouge: exp.rouge.clone(),
        };
        let outcome = run_iterative(doc, &settings, provider.as_ref())?;
        for record in outcome.to_records(&exp.config_hash) {
            writer.write(&StoreRecord::Iteration(record))?;
        }
        for (iteration, recall) in outcome.recall_series() {
            println!(
                "{model_id} trace {} iteration {iteration}: recall {:.3}",
                outcome.trace_id,
                round3(recall)
            );
        }
        if let Some(err) = outcome.error {
            eprintln!("{model_id}: trace ended early: {err}");
            had_error = true;
        }
    }
    Ok(exit_for(usize::from(had_error)))
}

const ALL_TABLES: [&str; 4] = ["by_model", "by_text_type", "by_max_tokens", "by_family"];

fn cmd_report(
    cfg: &ConfigFile,
    exp: &textprobe::runner::Experiment,
    tables: &[String],
) -> Result<ExitCode> {
    let records = read_store(&exp.output_dir.join(STORE_FILE))?;
    let probes: Vec<&ProbeResult> = records
        .iter()
        .filter_map(|r| match r {
            StoreRecord::Probe(p) => Some(p),
            _ => None,
        })
        .collect();

    let selected: Vec<String> = if tables.is_empty() {
        ALL_TABLES
            .iter()
            .filter(|t| **t != "by_family" || !cfg.families.is_empty())
            .map(|t| t.to_string())
            .collect()
    } else {
        for t in tables {
            if !ALL_TABLES.contains(&t.as_str()) {
                bail!("unknown table name: {t} (expected one of {ALL_TABLES:?})");
            }
        }
        tables.to_vec()
    };

    for table in &selected {
        let rows = match table.as_str() {
            "by_model" => aggregate(&probes, GroupBy::Model, &exp.rouge)?,
            "by_text_type" => aggregate(&probes, GroupBy::TextType, &exp.rouge)?,
            "by_max_tokens" => aggregate(&probes, GroupBy::MaxTokens, &exp.rouge)?,
            "by_family" => rate_table(&probes, &cfg.families, &exp.rouge)?,
            _ => unreachable!(),
        };
        let csv_path = exp.output_dir.join(format!("{table}.csv"));
        emit_csv(&rows, &csv_path).context("emitting table")?;
        println!("table: {}", csv_path.display());

        let mean_series = Series {
            label: "mean Rouge-L recall".into(),
            points: rows.iter().map(|r| (r.group.clone(), r.mean)).collect(),
        };
        match table.as_str() {
            "by_max_tokens" => {
                let high_series = Series {
                    label: "high-similarity count".into(),
                    points: rows
                        .iter()
                        .map(|r| (r.group.clone(), r.high_count as f64))
                        .collect(),
                };
                let svg = exp.output_dir.join("mean_vs_high_by_max_tokens.svg");
                emit_chart(
                    &[mean_series, high_series],
                    ChartKind::Line,
                    "Mean Rouge-L and high-similarity count by max_tokens",
                    &svg,
                )?;
                println!("figure: {}", svg.display());

                let (models, token_labels, matrix) = mean_matrix(&probes);
                if models.len() > 1 || token_labels.len() > 1 {
                    let rows: Vec<Series> = models
                        .iter()
                        .zip(&matrix)
                        .map(|(m, vals)| Series {
                            label: m.clone(),
                            points: token_labels
                                .iter()
                                .cloned()
                                .zip(vals.iter().cloned())
                                .collect(),
                        })
                        .collect();
                    let svg = exp.output_dir.join("heatmap_model_max_tokens.svg");
                    emit_chart(
                        &rows,
                        ChartKind::Heatmap,
                        "Mean Rouge-L by model and max_tokens",
                        &svg,
                    )?;
                    println!("figure: {}", svg.display());
                }
            }
            name => {
                let svg = exp.output_dir.join(format!("mean_{name}.svg"));
                emit_chart(
                    std::slice::from_ref(&mean_series),
                    ChartKind::Bar,
                    &format!("Mean Rouge-L recall {}", name.replace('_', " ")),
                    &svg,
                )?;
                println!("figure: {}", svg.display());
            }
        }
    }

    // iteration traces, when present: score-vs-iteration series
    let mut traces: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for r in &records {
        if let StoreRecord::Iteration(it) = r {
            traces
                .entry(format!("{}:{}", it.model_id, it.trace_id))
                .or_default()
                .push((it.iteration, it.score.recall));
        }
    }
    if !traces.is_empty() {
        let csv_path = exp.output_dir.join("iteration_recall.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["trace", "iteration", "recall"])?;
        for (trace, points) in &traces {
            for (iteration, recall) in points {
                w.write_record([
                    trace.clone(),
                    iteration.to_string(),
                    format!("{:.3}", round3(*recall)),
                ])?;
            }
        }
        w.flush()?;
        println!("table: {}", csv_path.display());

        let series: Vec<Series> = traces
            .iter()
            .map(|(trace, points)| Series {
                label: trace.clone(),
                points: points
                    .iter()
                    .map(|(i, r)| (i.to_string(), *r))
                    .collect(),
            })
            .collect();
        let svg = exp.output_dir.join("iteration_recall.svg");
        emit_chart(
            &series,
            ChartKind::Line,
            "Rouge-L recall across iterations",
            &svg,
        )?;
        println!("figure: {}", svg.display());
    }

    Ok(ExitCode::SUCCESS)
}
