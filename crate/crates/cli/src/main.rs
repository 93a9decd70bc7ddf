//! `chunkblend` command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use chunkblend::blending::{auto_blend, blend_pair, build_sgraph, full_blend, to_dot};
use chunkblend::corpus::{level_file_text, load_corpus, load_level, Level, TileLegend};
use chunkblend::evaluation::{
    mann_whitney_u, rank_distributions, score_level, spearman, wilcoxon_signed_rank, Alternative, ScoreDistribution,
};
use chunkblend::format::{ModelFile, RunHeader, ScoreFile};
use chunkblend::generation::{explain_sequence, generate_level_with, GenerateConfig, DEFAULT_TOP_P};
use chunkblend::model::LNode;
use chunkblend::pipeline::{learn_corpus, LearnConfig, DEFAULT_CHUNK_WIDTH};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "chunkblend", version, about = "Learn, generate, blend and score tile-level chunk models")]
struct Cli {
    /// Output style for stdout.
    #[arg(long, value_enum, default_value_t = OutputFormat::Text, global = true)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    /// One JSON document per run.
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Learn one model per chunk category of a corpus directory.
    Learn(LearnArgs),
    /// Generate a level from a model file.
    Generate(GenerateArgs),
    /// Blend models of a model file.
    Blend(BlendArgs),
    /// Score levels against a model set.
    Score(ScoreArgs),
    /// Rank levels by their median chunk score.
    Rank(RankArgs),
    /// Compare two score distributions.
    Stats(StatsArgs),
    /// Dump style graphs as DOT and the category distortion curve.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct LearnArgs {
    /// Directory holding legend.txt and levels/*.txt.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CHUNK_WIDTH, value_parser = positive)]
    chunk_width: usize,
    #[arg(long, default_value_t = DEFAULT_CHUNK_WIDTH, value_parser = positive)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = LearnConfig::default().recluster_threshold, value_parser = positive_f64)]
    recluster_threshold: f64,
    #[arg(long, default_value_t = LearnConfig::default().k_max, value_parser = positive)]
    k_max: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Level whose chunk sequence picks the model for each generated chunk.
    #[arg(long, conflicts_with = "lnodes", required_unless_present = "lnodes")]
    target_level: Option<PathBuf>,
    /// Comma-separated model ids, one generated chunk each.
    #[arg(long, value_delimiter = ',')]
    lnodes: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOP_P, value_parser = positive)]
    top_p: usize,
    /// Draw shape geometry by frequency instead of always the modal mask.
    #[arg(long)]
    sample_geometry: bool,
    /// Level file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BlendArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, requires = "target", conflicts_with_all = ["auto", "full"])]
    source: Option<String>,
    #[arg(long, requires = "source")]
    target: Option<String>,
    /// Blend every pair of models that explain the target level.
    #[arg(long, conflicts_with = "full")]
    auto: bool,
    /// Blend every model of one tag with every model of another.
    #[arg(long, requires = "tags")]
    full: bool,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    tags: Vec<String>,
    /// Level deciding which target styles a mapping may use.
    #[arg(long)]
    target_level: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "level", required = true, num_args = 1..)]
    levels: Vec<PathBuf>,
    /// Score this many randomly drawn chunks per level.
    #[arg(long, value_parser = positive)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score file to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    /// At least two level files.
    #[arg(long = "level", required = true, num_args = 1..)]
    levels: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestKind {
    Mwu,
    Wilcoxon,
    Spearman,
}

#[derive(Clone, Copy, ValueEnum)]
enum AltArg {
    TwoSided,
    Greater,
    Less,
}

impl From<AltArg> for Alternative {
    fn from(a: AltArg) -> Self {
        match a {
            AltArg::TwoSided => Alternative::TwoSided,
            AltArg::Greater => Alternative::Greater,
            AltArg::Less => Alternative::Less,
        }
    }
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, value_enum)]
    test: TestKind,
    /// Score file for the first sample.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Level id to take from the first file; its first distribution otherwise.
    #[arg(long)]
    a_level: Option<String>,
    #[arg(long)]
    b_level: Option<String>,
    #[arg(long, value_enum, default_value_t = AltArg::TwoSided)]
    alternative: AltArg,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Only this model id.
    #[arg(long)]
    lnode: Option<String>,
    /// Print the category distortion curve instead of graphs.
    #[arg(long)]
    curves: bool,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        Ok(_) => Err("must be positive".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// What a command prints: a human summary and its structured twin.
struct Report {
    text: String,
    data: Value,
}

fn params(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Writes through a sibling temporary file so a failed run leaves nothing
/// half-written behind.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

fn read_models(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = ModelFile::from_json(&text).with_context(|| format!("loading {}", path.display()))?;
    ensure!(!file.lnodes.is_empty(), "{} holds no models", path.display());
    Ok(file)
}

fn read_scores(path: &Path) -> Result<ScoreFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScoreFile::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

/// Chunk dimensions shared by every model of a set.
fn chunk_dims(models: &[LNode]) -> Result<(usize, usize)> {
    let dims = (models[0].chunk_width, models[0].chunk_height);
    for m in models {
        ensure!(
            (m.chunk_width, m.chunk_height) == dims,
            "model {} has {}x{} chunks, model {} has {}x{}",
            m.id,
            m.chunk_width,
            m.chunk_height,
            models[0].id,
            dims.0,
            dims.1
        );
    }
    Ok(dims)
}

fn read_level(path: &Path, legend: &TileLegend, height: usize) -> Result<Level> {
    let level = load_level(path, legend)?;
    ensure!(
        level.grid.height() == height,
        "level {} is {} rows high but the models expect {height}",
        level.id,
        level.grid.height()
    );
    Ok(level)
}

fn find<'a>(models: &'a [LNode], id: &str) -> Result<&'a LNode> {
    models.iter().find(|m| m.id == id).with_context(|| {
        let ids: Vec<&str> = models.iter().map(|m| m.id.as_str()).collect();
        format!("no model with id {id:?} (have {})", ids.join(", "))
    })
}

fn cmd_learn(a: &LearnArgs) -> Result<Report> {
    let corpus = load_corpus(&a.corpus)?;
    let config = LearnConfig {
        chunk_width: a.chunk_width,
        stride: a.stride,
        seed: a.seed,
        recluster_threshold: a.recluster_threshold,
        k_max: a.k_max,
    };
    let learned = learn_corpus(&corpus, &config)?;
    let run = RunHeader {
        command: "learn".into(),
        seed: a.seed,
        params: params(&[
            ("corpus", path_str(&a.corpus)),
            ("chunk_width", a.chunk_width.to_string()),
            ("stride", a.stride.to_string()),
            ("recluster_threshold", a.recluster_threshold.to_string()),
            ("k_max", a.k_max.to_string()),
        ]),
    };
    let sizes: Vec<(String, usize)> =
        learned.categorization.categories.iter().map(|c| (c.id.clone(), c.chunks.len())).collect();
    let file = ModelFile::new(run, corpus.legend, Some(learned.categorization), learned.lnodes);
    write_atomic(&a.out, &file.to_json())?;
    let mut text = format!("{} categories from {} chunks\n", sizes.len(), learned.chunks.len());
    for (id, n) in &sizes {
        text += &format!("  category {id}: {n} chunks\n");
    }
    text += &format!("wrote {}\n", a.out.display());
    let data = json!({
        "command": "learn",
        "categories": sizes.iter().map(|(id, n)| json!({"id": id, "chunks": n})).collect::<Vec<_>>(),
        "chunks": learned.chunks.len(),
        "out": path_str(&a.out),
    });
    Ok(Report { text, data })
}

fn cmd_generate(a: &GenerateArgs) -> Result<Report> {
    let file = read_models(&a.model)?;
    let (width, height) = chunk_dims(&file.lnodes)?;
    let sequence: Vec<&LNode> = match &a.target_level {
        Some(path) => {
            let level = read_level(path, &file.legend, height)?;
            explain_sequence(&level, &file.lnodes, width)?.iter().map(|e| &file.lnodes[e.model]).collect()
        }
        None => a.lnodes.iter().map(|id| find(&file.lnodes, id)).collect::<Result<_>>()?,
    };
    ensure!(!sequence.is_empty(), "the chunk sequence is empty");
    let config = GenerateConfig { top_p: a.top_p, sample_geometry: a.sample_geometry };
    let level = generate_level_with(&sequence, width, height, a.seed, &config)?;
    let body = level_file_text(&level, &file.legend)?;
    let ids: Vec<&str> = sequence.iter().map(|m| m.id.as_str()).collect();
    let mut text = String::new();
    match &a.out {
        Some(out) => {
            write_atomic(out, &body)?;
            text += &format!(
                "generated {} chunks from [{}] with seed {}\nwrote {}\n",
                ids.len(),
                ids.join(", "),
                a.seed,
                out.display()
            );
        }
        None => text += &body,
    }
    let data = json!({
        "command": "generate",
        "seed": a.seed,
        "top_p": a.top_p,
        "sequence": ids,
        "level": body,
        "out": a.out.as_deref().map(path_str),
    });
    Ok(Report { text, data })
}

fn cmd_blend(a: &BlendArgs) -> Result<Report> {
    let file = read_models(&a.model)?;
    let (width, height) = chunk_dims(&file.lnodes)?;
    let level = read_level(&a.target_level, &file.legend, height)?;
    let originals = file.lnodes.len();
    let (mode, models, mappings) = if a.auto {
        let ab = auto_blend(&file.lnodes, &level, width)?;
        ensure!(!ab.degenerate, "fewer than two models explain {}, so there is nothing to blend", level.id);
        let maps = serde_json::to_value(&ab.records)?;
        ("auto", ab.models, maps)
    } else if a.full {
        let [ta, tb] = a.tags.as_slice() else {
            bail!("--tags takes exactly two tags, got {}", a.tags.len());
        };
        let blends = full_blend(&file.lnodes, ta, tb, &level, width)?;
        let mut models = file.lnodes.clone();
        models.extend(blends);
        ("full", models, Value::Null)
    } else {
        let (Some(s), Some(t)) = (&a.source, &a.target) else {
            bail!("pass --source and --target, --auto, or --full --tags a,b");
        };
        let (src, tgt) = (find(&file.lnodes, s)?, find(&file.lnodes, t)?);
        let Some((blend, maps)) = blend_pair(src, tgt, &level, width)? else {
            bail!("{s} or {t} has no style relations to map");
        };
        let mut models = file.lnodes.clone();
        models.push(blend);
        ("pair", models, serde_json::to_value(&maps)?)
    };
    let blended: Vec<String> = models[originals..].iter().map(|m| m.id.clone()).collect();
    let run = RunHeader {
        command: "blend".into(),
        seed: file.run.seed,
        params: params(&[
            ("mode", mode.into()),
            ("model", path_str(&a.model)),
            ("target_level", path_str(&a.target_level)),
        ]),
    };
    let out = ModelFile::new(run, file.legend, file.categorization, models);
    write_atomic(&a.out, &out.to_json())?;
    let text = format!("{} blended models: {}\nwrote {}\n", blended.len(), blended.join(", "), a.out.display());
    let data =
        json!({"command": "blend", "mode": mode, "blended": blended, "mappings": mappings, "out": path_str(&a.out)});
    Ok(Report { text, data })
}

fn summary_json(d: &ScoreDistribution) -> Value {
    json!({"level": d.level_id, "models": d.model_set_id, "scores": d.scores, "median": d.median(), "mean": d.mean()})
}

fn cmd_score(a: &ScoreArgs) -> Result<Report> {
    let file = read_models(&a.model)?;
    let (width, height) = chunk_dims(&file.lnodes)?;
    let mut dists = Vec::new();
    for path in &a.levels {
        let level = read_level(path, &file.legend, height)?;
        dists.push(score_level(&level, &file.lnodes, width, a.sample, a.seed)?);
    }
    let mut text = String::new();
    for d in &dists {
        let scores: Vec<String> = d.scores.iter().map(|s| format!("{s:.4}")).collect();
        text += &format!(
            "{}: median {:.4} mean {:.4} over {} chunks\n  {}\n",
            d.level_id,
            d.median(),
            d.mean(),
            d.scores.len(),
            scores.join(" ")
        );
    }
    if let Some(out) = &a.out {
        let mut p = vec![("model", path_str(&a.model))];
        if let Some(n) = a.sample {
            p.push(("sample", n.to_string()));
        }
        let run = RunHeader { command: "score".into(), seed: a.seed, params: params(&p) };
        write_atomic(out, &ScoreFile::new(run, dists.clone()).to_json())?;
        text += &format!("wrote {}\n", out.display());
    }
    let data = json!({"command": "score", "distributions": dists.iter().map(summary_json).collect::<Vec<_>>()});
    Ok(Report { text, data })
}

fn cmd_rank(a: &RankArgs) -> Result<Report> {
    ensure!(a.levels.len() >= 2, "ranking needs at least 2 levels, got {}", a.levels.len());
    let file = read_models(&a.model)?;
    let (width, height) = chunk_dims(&file.lnodes)?;
    let mut dists = Vec::new();
    for path in &a.levels {
        let level = read_level(path, &file.legend, height)?;
        dists.push(score_level(&level, &file.lnodes, width, None, 0)?);
    }
    let ranking = rank_distributions(&dists);
    let text: String = ranking
        .iter()
        .map(|r| format!("{:>3}. {}  median {:.4}  mean {:.4}\n", r.rank, r.level_id, r.median, r.mean))
        .collect();
    let data = json!({"command": "rank", "ranking": ranking});
    Ok(Report { text, data })
}

fn pick<'a>(file: &'a ScoreFile, level: Option<&str>, path: &Path) -> Result<&'a ScoreDistribution> {
    match level {
        Some(id) => file.distributions.iter().find(|d| d.level_id == id),
        None => file.distributions.first(),
    }
    .with_context(|| format!("{} has no distribution {}", path.display(), level.unwrap_or("at all")))
}

fn cmd_stats(a: &StatsArgs) -> Result<Report> {
    let (fa, fb) = (read_scores(&a.a)?, read_scores(&a.b)?);
    let (da, db) = (pick(&fa, a.a_level.as_deref(), &a.a)?, pick(&fb, a.b_level.as_deref(), &a.b)?);
    let alt = Alternative::from(a.alternative);
    let (name, data) = match a.test {
        TestKind::Mwu => {
            let r = mann_whitney_u(&da.scores, &db.scores, alt)?;
            ("mann-whitney", json!({"statistic": "U", "value": r.statistic, "p": r.p, "exact": r.exact}))
        }
        TestKind::Wilcoxon => {
            let r = wilcoxon_signed_rank(&da.scores, &db.scores, alt)?;
            ("wilcoxon", json!({"statistic": "W", "value": r.statistic, "p": r.p, "exact": r.exact}))
        }
        TestKind::Spearman => {
            let r = spearman(&da.scores, &db.scores)?;
            ("spearman", json!({"statistic": "rho", "value": r.rho, "p": r.p, "exact": false}))
        }
    };
    let text = format!(
        "{name}: {} = {} p = {:.6}{}\n",
        data["statistic"].as_str().unwrap_or_default(),
        data["value"],
        data["p"].as_f64().unwrap_or(f64::NAN),
        if data["exact"].as_bool() == Some(true) { " (exact)" } else { "" }
    );
    let mut data = data;
    data["command"] = json!("stats");
    data["test"] = json!(name);
    data["a"] = json!(da.level_id);
    data["b"] = json!(db.level_id);
    Ok(Report { text, data })
}

fn cmd_inspect(a: &InspectArgs) -> Result<Report> {
    let file = read_models(&a.model)?;
    if a.curves {
        let cat = file.categorization.as_ref().context("the model file carries no categorization")?;
        let curve = &cat.estimate.curve;
        let mut text = format!("selected K = {}\n  K  f(K)  S_K\n", cat.estimate.k);
        for (k, f) in &curve.f_values {
            text += &format!("{k:>3}  {f:.4}  {:.6}\n", curve.distortions.get(k).copied().unwrap_or(f64::NAN));
        }
        let rows: Vec<Value> = curve
            .f_values
            .iter()
            .map(|(k, f)| json!({"k": k, "f": f, "distortion": curve.distortions.get(k)}))
            .collect();
        let data = json!({"command": "inspect", "k": cat.estimate.k, "curve": rows});
        return Ok(Report { text, data });
    }
    let models: Vec<&LNode> = match &a.lnode {
        Some(id) => vec![find(&file.lnodes, id)?],
        None => file.lnodes.iter().collect(),
    };
    let mut text = String::new();
    let mut graphs = Vec::new();
    for m in models {
        let dot = to_dot(&build_sgraph(m)?, m, &file.legend);
        text += &dot;
        graphs.push(json!({"lnode": m.id, "dot": dot}));
    }
    Ok(Report { text, data: json!({"command": "inspect", "graphs": graphs}) })
}

fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Learn(a) => cmd_learn(a),
        Command::Generate(a) => cmd_generate(a),
        Command::Blend(a) => cmd_blend(a),
        Command::Score(a) => cmd_score(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    // invariant violations inside the library surface as panics
    panic::set_hook(Box::new(|info| eprintln!("internal error: {info}")));
    match panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(report)) => {
            match cli.format {
                OutputFormat::Text => print!("{}", report.text),
                OutputFormat::Structured => println!("{}", serde_json::to_string_pretty(&report.data).expect("json")),
            }
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            match cli.format {
                OutputFormat::Text => eprintln!("error: {e:#}"),
                OutputFormat::Structured => {
                    println!("{}", json!({"error": format!("{e:#}")}));
                }
            }
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
