use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use layoutrank::config::RunConfig;
use layoutrank::dom::{self, Viewport};
use layoutrank::features::{
    fit_buckets, FeatureSchema, FitOptions, DEFAULT_MIN_COUNT, DEFAULT_NUM_QUANTILES,
};
use layoutrank::graph::{build_layout_graph, load_graphs, write_graphs, LayoutGraph};
use layoutrank::metrics::{self, EvalReport, GsbCounts, Judgments};
use layoutrank::model::{init_for_schema, Checkpoint, ModelConfig};
use layoutrank::pipeline::{self, RankedList};
use layoutrank::store::ScoreStore;
use layoutrank::synth::{self, CorpusSpec, Splits};
use layoutrank::train::{self, AblationPlan, Example};
use layoutrank::{Error, Result};

/// Layout-aware webpage quality scoring.
///
/// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
/// 4 schema or version mismatch.
#[derive(Parser)]
#[command(name = "layoutrank", version)]
struct Cli {
    /// Log filter, e.g. `info`, `debug`, `layoutrank=trace`.
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse HTML or pre-rendered JSONL into DOM trees and layout graphs.
    Ingest(IngestArgs),
    /// Fit feature buckets and vocabularies over a graph corpus.
    FitBuckets(FitArgs),
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Train every model family over several seeds plus a layer-depth sweep.
    Ablate(AblateArgs),
    /// Score graphs offline into a score store.
    Score(ScoreArgs),
    /// Compute evaluation metrics for a score store.
    Evaluate(EvaluateArgs),
    /// Blend quality scores into ranked lists and report the DCG change.
    RerankSim(RerankArgs),
    /// Compare two evaluation reports, or render an ablation result.
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// HTML or `.jsonl` file, or a directory of them.
    #[arg(long, conflicts_with = "manifest")]
    input: Option<PathBuf>,
    /// Synthetic corpus manifest; ingests every listed HTML file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Page url (single input only).
    #[arg(long)]
    url: Option<String>,
    #[arg(long, default_value = "unknown")]
    category: String,
    #[arg(long, default_value = "1280x2000")]
    viewport: Viewport,
    /// Tree output: a `.jsonl` file for one input, otherwise a directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Layout graph JSONL output.
    #[arg(long)]
    graphs: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, required = true, num_args = 1..)]
    graphs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: usize,
    #[arg(long, default_value_t = DEFAULT_NUM_QUANTILES)]
    quantiles: usize,
    /// Embedding width recorded in the schema.
    #[arg(long, default_value_t = 64)]
    embedding_dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "rich:0.3,thin:0.4,chaotic:0.3")]
    profile_mix: String,
    #[arg(long, default_value_t = 5)]
    categories: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Per-category share of rich pages, comma separated (one per category).
    #[arg(long, value_delimiter = ',')]
    rich_share: Option<Vec<f64>>,
    /// Train/eval/test ratios.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.1,0.1")]
    split: Vec<f64>,
    #[arg(long, default_value_t = 1280.0)]
    viewport_width: f64,
    /// Also write one pre-rendered tree per document.
    #[arg(long)]
    emit_prerendered: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelOverrides {
    /// TOML file with `[model]` and `[train]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model family label, e.g. `Virt-GAT` or `GIN-NC`.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl ModelOverrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(f) = &self.family {
            c.model = c.model.with_family(f)?;
        }
        if let Some(d) = self.d {
            c.model.d = d;
        }
        if let Some(k) = self.layers {
            c.model.num_layers = k;
        }
        if let Some(e) = self.epochs {
            c.train.epochs = e;
        }
        if let Some(lr) = self.lr {
            c.train.lr = lr;
        }
        if let Some(b) = self.batch_size {
            c.train.batch_size = b;
        }
        if let Some(s) = self.seed {
            c.train.seed = s;
        }
        if let Some(t) = self.threads {
            c.train.threads = t;
        }
        c.model.validate()?;
        c.train.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Split file from `synth`; selects the train, eval and test urls.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Separate evaluation graphs (when no split file is given).
    #[arg(long, conflicts_with = "splits")]
    eval_graphs: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelOverrides,
    /// Output directory for the checkpoint, training log and effective config.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelOverrides,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Families to compare; defaults to all eight.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    depths: Vec<usize>,
    #[arg(long, default_value = "Virt-GAT")]
    sweep_family: String,
    /// Output directory for `ablation.json` and `ablation.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses every available core. Scores do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Restrict to one part of a split file.
    #[arg(long, requires = "split")]
    splits: Option<PathBuf>,
    #[arg(long, value_parser = ["train", "eval", "test"])]
    split: Option<String>,
    /// Ranked lists with graded results, for DCG@p.
    #[arg(long)]
    judgments: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// Side-by-side counts `good,same,bad`.
    #[arg(long, value_parser = parse_gsb)]
    gsb: Option<GsbCounts>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    lists: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    weight: f64,
    #[arg(long, default_value_t = 4)]
    p: usize,
    /// Reranked lists (JSONL); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// DCG report with the position-change log (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, requires = "baseline", conflicts_with = "ablation")]
    eval: Option<PathBuf>,
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// `ablation.json` written by `ablate`.
    #[arg(long)]
    ablation: Option<PathBuf>,
    /// Also write the delta table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_gsb(s: &str) -> std::result::Result<GsbCounts, String> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| format!("`{x}` is not a count"))
        })
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [good, same, bad] => Ok(GsbCounts { good, same, bad }),
        _ => Err("expected good,same,bad".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::FitBuckets(a) => fit(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::RerankSim(a) => rerank(a),
        Command::Report(a) => report(a),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn ingest(a: IngestArgs) -> Result<()> {
    if a.out.is_none() && a.graphs.is_none() {
        return Err(Error::Config(
            "nothing to write: pass --out and/or --graphs".into(),
        ));
    }
    let mut trees = Vec::new();
    if let Some(manifest) = &a.manifest {
        let base = manifest.parent().unwrap_or(Path::new("."));
        for e in synth::read_manifest(manifest)? {
            let src = read_file(&base.join(&e.html))?;
            trees.push((
                e.id.clone(),
                pipeline::ingest_html(&src, &e.url, &e.category, a.viewport)?,
            ));
        }
    } else {
        let input = a
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("pass --input or --manifest".into()))?;
        let files = if input.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .is_some_and(|x| x == "html" || x == "htm" || x == "jsonl")
                })
                .collect();
            v.sort();
            v
        } else {
            vec![input.clone()]
        };
        if files.len() > 1 && a.url.is_some() {
            return Err(Error::Config("--url needs a single input file".into()));
        }
        for f in files {
            let stem = f
                .file_stem()
                .map_or_else(|| "doc".to_string(), |s| s.to_string_lossy().into_owned());
            trees.push((
                stem,
                pipeline::ingest_file(&f, a.url.as_deref(), &a.category, a.viewport)?,
            ));
        }
    }
    log::info!("ingested {} documents", trees.len());
    if let Some(out) = &a.out {
        let single = trees.len() == 1 && out.extension().is_some_and(|e| e == "jsonl");
        for (name, tree) in &trees {
            let path = if single {
                out.clone()
            } else {
                out.join(format!("{name}.jsonl"))
            };
            let mut buf = Vec::new();
            dom::write_prerendered(tree, &mut buf)?;
            write_file(&path, buf)?;
        }
    }
    if let Some(g) = &a.graphs {
        let graphs: Vec<LayoutGraph> = trees.iter().map(|(_, t)| build_layout_graph(t)).collect();
        let mut buf = Vec::new();
        write_graphs(&graphs, &mut buf)?;
        write_file(g, buf)?;
    }
    Ok(())
}

fn fit(a: FitArgs) -> Result<()> {
    let mut graphs = Vec::new();
    for p in &a.graphs {
        graphs.extend(load_graphs(p)?);
    }
    let opts = FitOptions {
        min_count: a.min_count,
        num_quantiles: a.quantiles,
        embedding_dim: a.embedding_dim,
    };
    let schema = fit_buckets(&graphs, &opts)?;
    for f in &schema.features {
        log::info!("{}: {} embedding rows", f.name, f.table_size());
    }
    schema.save(&a.out)?;
    log::info!("schema {} written to {}", schema.hash(), a.out.display());
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let [tr, ev, te] = a.split[..] else {
        return Err(Error::BadRatios(a.split.clone()));
    };
    let spec = CorpusSpec {
        n: a.n,
        categories: a.categories,
        profile_mix: synth::parse_profile_mix(&a.profile_mix)?,
        rich_share_by_category: a.rich_share.clone(),
        seed: a.seed,
        viewport_width: a.viewport_width,
    };
    let docs = synth::generate_corpus(&spec)?;
    let files = synth::write_corpus(&docs, &a.out, [tr, ev, te], a.seed, a.emit_prerendered)?;
    log::info!(
        "wrote {} documents; manifest {}",
        docs.len(),
        files.manifest.display()
    );
    Ok(())
}

struct Data {
    schema: FeatureSchema,
    train: Vec<Example>,
    eval: Vec<Example>,
    test: Vec<Example>,
}

fn load_data(a: &DataArgs) -> Result<Data> {
    let schema = FeatureSchema::load(&a.schema)?;
    let labels = pipeline::load_labels(&a.labels)?;
    let graphs = load_graphs(&a.graphs)?;
    let (train, eval, test) = if let Some(sp) = &a.splits {
        let splits = Splits::load(sp)?;
        let pick = |urls: &[String]| -> Result<Vec<Example>> {
            let set: BTreeSet<&str> = urls.iter().map(String::as_str).collect();
            let gs: Vec<LayoutGraph> = graphs
                .iter()
                .filter(|g| set.contains(g.url.as_str()))
                .cloned()
                .collect();
            pipeline::examples(&gs, &schema, &labels)
        };
        (
            pick(&splits.train)?,
            pick(&splits.eval)?,
            pick(&splits.test)?,
        )
    } else {
        let eval = match &a.eval_graphs {
            Some(p) => pipeline::examples(&load_graphs(p)?, &schema, &labels)?,
            None => Vec::new(),
        };
        (
            pipeline::examples(&graphs, &schema, &labels)?,
            eval,
            Vec::new(),
        )
    };
    log::info!(
        "{} train / {} eval / {} test examples",
        train.len(),
        eval.len(),
        test.len()
    );
    Ok(Data {
        schema,
        train,
        eval,
        test,
    })
}

fn warn_on_dim(model: &ModelConfig, schema: &FeatureSchema) {
    if model.d != schema.embedding_dim {
        log::warn!(
            "model d = {} differs from the schema's embedding_dim = {}; using d",
            model.d,
            schema.embedding_dim
        );
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = a.model.resolve()?;
    let data = load_data(&a.data)?;
    warn_on_dim(&cfg.model, &data.schema);
    let init = init_for_schema(&cfg.model, &data.schema, cfg.train.seed)?;
    let outcome = train::train_from(init, &data.train, &data.eval, &cfg.model, &cfg.train)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let ckpt = Checkpoint::new(&cfg.model, &data.schema, &outcome.params);
    ckpt.save(a.out.join("checkpoint.json"))?;
    write_file(
        &a.out.join("training_log.csv"),
        train::log_to_csv(&outcome.log),
    )?;
    write_file(&a.out.join("config.toml"), cfg.to_toml())?;
    log::info!(
        "{} trained; best epoch {}; checkpoint {}",
        cfg.model.family(),
        outcome.best_epoch,
        ckpt.hash()
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let cfg = a.model.resolve()?;
    let data = load_data(&a.data)?;
    if data.test.is_empty() {
        return Err(Error::Config(
            "ablation needs a test split (--splits)".into(),
        ));
    }
    warn_on_dim(&cfg.model, &data.schema);
    let names: Vec<String> = match &a.families {
        Some(f) => f.clone(),
        None => ModelConfig::all_families()
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let families = names
        .iter()
        .map(|f| cfg.model.with_family(f))
        .collect::<Result<Vec<_>>>()?;
    let sweep = cfg.model.with_family(&a.sweep_family)?;
    let plan = AblationPlan {
        families: &families,
        seeds: &a.seeds,
        depths: &a.depths,
        sweep_family: &sweep,
    };
    let table = train::run_ablation(
        (&data.train, &data.eval, &data.test),
        &plan,
        &cfg.train,
        &data.schema.table_sizes(),
        data.schema.num_categories(),
    )?;
    let text = table.render();
    write_file(
        &a.out.join("ablation.json"),
        serde_json::to_string_pretty(&table)? + "\n",
    )?;
    write_file(&a.out.join("ablation.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let schema = FeatureSchema::load(&a.schema)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let graphs = load_graphs(&a.graphs)?;
    let threads = match a.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    };
    let store = pipeline::score_batch(&graphs, &ckpt, &schema, threads)?;
    store.save(&a.out)?;
    log::info!("{} scores written to {}", store.len(), a.out.display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JudgmentLine {
    Graded(Judgments),
    Ranked(RankedList),
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let store = ScoreStore::load(&a.scores)?;
    let labels = pipeline::load_labels(&a.labels)?;
    let keep: Option<BTreeSet<String>> = match (&a.splits, &a.split) {
        (Some(p), Some(part)) => {
            let s = Splits::load(p)?;
            let urls = match part.as_str() {
                "train" => s.train,
                "eval" => s.eval,
                _ => s.test,
            };
            Some(urls.into_iter().collect())
        }
        _ => None,
    };
    let mut scores = Vec::new();
    let mut ys = Vec::new();
    let mut unlabeled = 0usize;
    for (url, s) in store.entries() {
        if keep.as_ref().is_some_and(|k| !k.contains(url)) {
            continue;
        }
        match labels.get(url) {
            Some(&y) => {
                scores.push(*s);
                ys.push(y);
            }
            None => unlabeled += 1,
        }
    }
    if unlabeled > 0 {
        log::warn!("{unlabeled} scored urls have no label and were skipped");
    }
    let mut report = EvalReport::compute(&scores, &ys)?;
    if let Some(j) = &a.judgments {
        let lists = read_file(j)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let line: JudgmentLine = serde_json::from_str(l).map_err(|e| Error::Schema {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                Ok(match line {
                    JudgmentLine::Graded(j) => j,
                    JudgmentLine::Ranked(r) => Judgments {
                        query: r.query,
                        grades: r.results.iter().map(|x| x.rel_grade).collect(),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report.dcg = Some(metrics::dcg_at(&lists, a.p)?);
    }
    if let Some(g) = &a.gsb {
        report.gsb = Some(metrics::gsb(*g)?);
    }
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => write_file(p, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn rerank(a: RerankArgs) -> Result<()> {
    let store = ScoreStore::load(&a.store)?;
    let lists = pipeline::parse_ranked_lists(&read_file(&a.lists)?)?;
    let (out, report) = pipeline::rerank_sim(&lists, &store, a.weight, a.p)?;
    let mut buf = Vec::new();
    for l in &out {
        serde_json::to_writer(&mut buf, l)?;
        buf.push(b'\n');
    }
    match &a.out {
        Some(p) => write_file(p, buf)?,
        None => std::io::stdout()
            .write_all(&buf)
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    if let Some(p) = &a.report {
        write_file(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    log::info!(
        "DCG@{}: {:.4} -> {:.4} ({:+.4}); {} position changes, {} urls missing from the store",
        report.p,
        report.dcg_before,
        report.dcg_after,
        report.delta,
        report.changes.len(),
        report.missing.len()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if let Some(p) = &a.ablation {
        let table: train::AblationTable = serde_json::from_str(&read_file(p)?)?;
        print!("{}", table.render());
        return Ok(());
    }
    let (Some(e), Some(b)) = (&a.eval, &a.baseline) else {
        return Err(Error::Config(
            "pass --eval and --baseline, or --ablation".into(),
        ));
    };
    let eval: EvalReport = serde_json::from_str(&read_file(e)?)?;
    let base: EvalReport = serde_json::from_str(&read_file(b)?)?;
    let delta = pipeline::report_delta(&eval, &base)?;
    print!("{}", delta.render());
    if let Some(j) = &a.json {
        let rows: BTreeMap<&str, f64> = delta
            .rows
            .iter()
            .map(|r| (r.metric.as_str(), r.delta))
            .collect();
        write_file(
            j,
            serde_json::to_string_pretty(
                &serde_json::json!({ "rows": delta.rows, "delta": rows }),
            )? + "\n",
        )?;
    }
    Ok(())
}
