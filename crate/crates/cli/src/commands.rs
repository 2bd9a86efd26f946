use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use thought_graph::baselines::{load_exemplars, select_exemplars, BaselineKind, Baselines};
use thought_graph::dataset::Dataset;
use thought_graph::evaluation::{
    aggregate, aggregate_graph_scores, layer_stats, reports_to_tsv, sample_dataset, EvalReport,
    GraphPick, GraphScore, SampleScore, Scorer, Vocabulary,
};
use thought_graph::gateway::Embedder;
use thought_graph::{Engine, GeneSetRecord, RunConfig, ThoughtGraph};

use crate::error::{CliError, CliResult};
use crate::setup::{self, graph_file_name, read_text, write_text, RunArgs};

const EMBED_BATCH: usize = 64;

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Comma- or space-separated gene symbols.
    #[arg(long, conflicts_with = "gene_set_id")]
    pub genes: Option<String>,
    #[arg(long = "gene-set-id", requires = "dataset")]
    pub gene_set_id: Option<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Graph JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// Print the effective run config as JSON and exit.
    #[arg(long = "dry-run")]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Gene sets to sample; all when absent.
    #[arg(long)]
    pub sample: Option<usize>,
    /// `url [URL]`, `vectors-file FILE` or `dictionary FILE`.
    #[arg(long, num_args = 1..=2, required = true, value_names = ["KIND", "SOURCE"])]
    pub embedder: Vec<String>,
    /// Null-distribution vocabulary, one term per line; defaults to the
    /// dataset's term names.
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report rows as TSV, with the published reference rows appended.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    #[arg(long = "layers-out")]
    pub layers_out: Option<PathBuf>,
    /// Read graphs from this directory instead of generating them.
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    /// Save generated graphs here.
    #[arg(long = "graphs-out")]
    pub graphs_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    IoZeroShot,
    #[value(name = "io-zero-shot-9")]
    IoZeroShot9,
    FewShot,
    Cot,
}

impl From<Method> for BaselineKind {
    fn from(m: Method) -> Self {
        match m {
            Method::IoZeroShot => BaselineKind::IoZeroShot,
            Method::IoZeroShot9 => BaselineKind::IoZeroShot9,
            Method::FewShot => BaselineKind::FewShot,
            Method::Cot => BaselineKind::Cot,
        }
    }
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Few-shot exemplar TSV (`genes<TAB>answer[<TAB>id]`).
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Graphs for CoT; generated when absent.
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Subcommand)]
pub enum OntologyCommand {
    /// Parse an OBO file into a JSON index.
    Index {
        #[arg(long)]
        obo: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    Dot,
    Json,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    pub format: ExportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn split_genes(raw: &str) -> Vec<String> {
    raw.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn generate(args: GenerateArgs) -> CliResult<()> {
    let cfg = args.run.resolve_config()?;
    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let record = match (&args.genes, &args.gene_set_id, &args.dataset) {
        (Some(genes), _, _) => GeneSetRecord::new("adhoc", split_genes(genes))?,
        (None, Some(id), Some(ds)) => setup::load_dataset(ds)?
            .find(id)
            .cloned()
            .ok_or_else(|| CliError::input(format!("no gene set `{id}` in {}", ds.display())))?,
        _ => return Err(CliError::input("give --genes, or --gene-set-id with --dataset")),
    };
    let ontology = args.run.ontology()?;
    let templates = args.run.templates()?;
    let chat = args.run.chat()?;
    let result = Engine::new(&cfg, &chat)
        .with_templates(&templates)
        .with_ontology(ontology.as_ref())
        .run(&record);
    chat.save_record(args.run.record.as_deref())?;
    let graph = result?;
    log::info!(
        "{} nodes, {} edges, final answer {:?}, {} chat calls",
        graph.nodes.len(),
        graph.edges.len(),
        graph.final_answer.and_then(|id| graph.node(id)).map(|n| n.term.as_str()),
        chat.calls()
    );
    emit(args.out.as_deref(), &graph.to_json())?;
    if let Some(dot) = &args.dot {
        write_text(dot, &graph.to_dot())?;
    }
    Ok(())
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config(format!("cannot start workers: {e}")))
}

struct EvalContext {
    cfg: RunConfig,
    dataset: Dataset,
    records: Vec<GeneSetRecord>,
    embedder: Box<dyn Embedder>,
    vocabulary: Vocabulary,
    workers: usize,
}

impl EvalContext {
    fn new(args: &EvalArgs) -> CliResult<Self> {
        let cfg = args.run.resolve_config()?;
        let dataset = setup::load_dataset(&args.dataset)?;
        if dataset.records.is_empty() {
            return Err(CliError::input(format!("{}: no gene sets", args.dataset.display())));
        }
        let records = sample_dataset(&dataset.records, args.sample.unwrap_or(usize::MAX), cfg.seed);
        if let Some(r) = records.iter().find(|r| r.ground_truth_name.is_none()) {
            return Err(CliError::input(format!("gene set `{}` has no ground-truth name", r.id)));
        }
        let embedder = setup::embedder(&args.embedder)?;
        let mut terms: Vec<String> = match &args.vocabulary {
            Some(p) => read_text(p)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect(),
            None => dataset.term_names(),
        };
        let mut seen = std::collections::HashSet::new();
        terms.retain(|t| seen.insert(t.to_lowercase()));
        let vocabulary = Vocabulary::embed(terms, embedder.as_ref(), EMBED_BATCH)?;
        log::info!("null vocabulary: {} terms", vocabulary.len());
        let workers = args.run.workers(args.workers);
        Ok(EvalContext {
            cfg,
            dataset,
            records,
            embedder,
            vocabulary,
            workers,
        })
    }

    fn scorer(&self) -> Scorer<'_, dyn Embedder> {
        Scorer::new(self.embedder.as_ref(), &self.vocabulary)
    }

    fn truth(record: &GeneSetRecord) -> &str {
        record.ground_truth_name.as_deref().expect("checked on load")
    }
}

fn load_graph(dir: &Path, record: &GeneSetRecord) -> CliResult<ThoughtGraph> {
    let path = dir.join(graph_file_name(&record.id));
    let graph = ThoughtGraph::from_json(&read_text(&path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if graph.gene_set.genes != record.genes {
        return Err(CliError::input(format!(
            "{}: gene set differs from dataset row `{}`",
            path.display(),
            record.id
        )));
    }
    Ok(graph)
}

/// Load graphs from `dir` when given, otherwise generate them.
fn obtain_graphs(
    ctx: &EvalContext,
    run: &RunArgs,
    dir: Option<&Path>,
    save_to: Option<&Path>,
) -> CliResult<Vec<ThoughtGraph>> {
    if let Some(dir) = dir {
        return ctx.records.iter().map(|r| load_graph(dir, r)).collect();
    }
    let ontology = run.ontology()?;
    let templates = run.templates()?;
    let chat = run.chat()?;
    let result: CliResult<Vec<ThoughtGraph>> = pool(ctx.workers)?.install(|| {
        ctx.records
            .par_iter()
            .map(|r| {
                Engine::new(&ctx.cfg, &chat)
                    .with_templates(&templates)
                    .with_ontology(ontology.as_ref())
                    .run(r)
                    .map_err(|e| CliError::from(e).with_context(&r.id))
            })
            .collect()
    });
    chat.save_record(run.record.as_deref())?;
    let graphs = result?;
    if let Some(out) = save_to {
        for g in &graphs {
            write_text(&out.join(graph_file_name(&g.gene_set.id)), &g.to_json())?;
        }
    }
    Ok(graphs)
}

fn finish_reports(args: &EvalArgs, ctx: &EvalContext, mut reports: Vec<EvalReport>, extra: serde_json::Value) -> CliResult<()> {
    for r in &mut reports {
        r.embedding_model = ctx.embedder.model_tag();
    }
    let table = reports_to_tsv(&reports, true);
    let mut doc = json!({
        "embedding_model": ctx.embedder.model_tag(),
        "vocabulary_size": ctx.vocabulary.len(),
        "seed": ctx.cfg.seed,
        "dataset_size": ctx.dataset.records.len(),
        "samples": ctx.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
        "reports": reports,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
        obj.extend(more);
    }
    if let Some(out) = &args.out {
        write_text(out, &format!("{}\n", serde_json::to_string_pretty(&doc).expect("report serializes")))?;
    }
    if let Some(t) = &args.table {
        write_text(t, &table)?;
    }
    print!("{table}");
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let ctx = EvalContext::new(&args.eval)?;
    let graphs = obtain_graphs(&ctx, &args.eval.run, args.graphs.as_deref(), args.graphs_out.as_deref())?;
    let scorer = ctx.scorer();
    let scores: Vec<GraphScore> = pool(ctx.workers)?.install(|| {
        graphs
            .par_iter()
            .zip(&ctx.records)
            .map(|(g, r)| scorer.score_graph(g, EvalContext::truth(r)).map_err(CliError::from))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let pairs: Vec<(&ThoughtGraph, &GraphScore)> = graphs.iter().zip(&scores).collect();
    let reports = vec![
        aggregate_graph_scores("Thought Graph (p)", &pairs, GraphPick::Predicted)?,
        aggregate_graph_scores("Thought Graph (b)", &pairs, GraphPick::Best)?,
    ];
    let stats = layer_stats(&scores);
    if let Some(p) = &args.layers_out {
        write_text(p, &stats.to_csv())?;
    }
    finish_reports(
        &args.eval,
        &ctx,
        reports,
        json!({ "graph_scores": scores, "layer_stats": stats }),
    )
}

pub fn baseline(args: BaselineArgs) -> CliResult<()> {
    let kind = BaselineKind::from(args.method);
    let ctx = EvalContext::new(&args.eval)?;
    let exemplars = match (kind, &args.exemplars) {
        (BaselineKind::FewShot, Some(p)) => {
            let pool = load_exemplars(read_text(p)?.as_bytes(), &ctx.dataset.records)?;
            select_exemplars(&pool, ctx.cfg.seed)?
        }
        (BaselineKind::FewShot, None) => return Err(CliError::input("few-shot needs --exemplars FILE")),
        _ => Vec::new(),
    };
    let graphs = match kind {
        BaselineKind::Cot => Some(obtain_graphs(&ctx, &args.eval.run, args.graphs.as_deref(), None)?),
        _ => None,
    };
    let templates = args.eval.run.templates()?;
    let chat = args.eval.run.chat()?;
    let baselines = Baselines::new(&ctx.cfg, &chat).with_templates(&templates);
    let scorer = ctx.scorer();
    let result: CliResult<Vec<(SampleScore, Vec<String>)>> = pool(ctx.workers)?.install(|| {
        ctx.records
            .par_iter()
            .enumerate()
            .map(|(i, r)| -> CliResult<_> {
                let candidates = match kind {
                    BaselineKind::IoZeroShot => vec![baselines.io_zero_shot(r)?],
                    BaselineKind::IoZeroShot9 => baselines.io_zero_shot_9(r)?,
                    BaselineKind::FewShot => vec![baselines.few_shot(r, &exemplars)?],
                    BaselineKind::Cot => vec![baselines.cot(r, &graphs.as_ref().expect("cot graphs")[i])?],
                };
                let (best, score) = scorer.score_best_of(&candidates, EvalContext::truth(r))?;
                Ok((
                    SampleScore {
                        gene_set_id: r.id.clone(),
                        predicted_term: candidates[best].clone(),
                        similarity: score.similarity,
                        percentile: score.percentile,
                    },
                    candidates,
                ))
            })
            .collect()
    });
    chat.save_record(args.eval.run.record.as_deref())?;
    let (samples, candidates): (Vec<_>, Vec<_>) = result?.into_iter().unzip();
    let predictions: BTreeMap<String, Vec<String>> = samples
        .iter()
        .map(|s| s.gene_set_id.clone())
        .zip(candidates)
        .collect();
    let report = aggregate(kind.report_label(), samples)?;
    finish_reports(
        &args.eval,
        &ctx,
        vec![report],
        json!({ "method": kind.as_str(), "predictions": predictions }),
    )
}

pub fn ontology(cmd: OntologyCommand) -> CliResult<()> {
    match cmd {
        OntologyCommand::Index { obo, out } => {
            let o = setup::load_ontology(&obo)?;
            write_text(&out, &o.to_index_json())?;
            println!(
                "{} terms, {} biological_process names, {} diagnostics",
                o.len(),
                o.bp_term_names().len(),
                o.diagnostics().len()
            );
            Ok(())
        }
    }
}

pub fn export(args: ExportArgs) -> CliResult<()> {
    let graph = ThoughtGraph::from_json(&read_text(&args.input)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;
    let text = match args.format {
        ExportFormat::Dot => graph.to_dot(),
        ExportFormat::Json => graph.to_json(),
    };
    emit(args.out.as_deref(), &text)
}
