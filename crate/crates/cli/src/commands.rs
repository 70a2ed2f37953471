use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use untangle_core::corpus::Vocab;
use untangle_core::embedder::{read_checkpoint, write_checkpoint, Embeddings};
use untangle_core::graph::{
    conversation_labels, export_graph, extract_conversations, ExportFormat, GraphJson, ReplyGraph,
};
use untangle_core::harness::{agglomerative, evaluate, generate, project_3d, GoldStandard, SynthConfig};
use untangle_core::ingest::{parse_chat_log, thread_stats, write_chat_log, ParseOptions, Thread};
use untangle_core::pipeline::{disentangle, train_model};
use untangle_core::temporal::{default_tau, fit_thread, segmentation_series, smooth, uniform_grid, IntensitySeries};

use crate::config::PipelineConfig;
use crate::error::{user_error, OrUser};

#[derive(Debug, Parser)]
#[command(name = "untangle", version, about = "Recover reply structure in flat chat threads")]
pub struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print thread statistics as JSON.
    Stats {
        file: PathBuf,
        #[arg(long)]
        keep_empty: bool,
    },
    /// Train the post encoder; writes model.untg, vocab.tsv and loss.csv.
    Train(PipelineFlags),
    /// Run the full pipeline; writes graph.json, graph.dot, conversations.json
    /// and embeddings.csv.
    Disentangle(PipelineFlags),
    /// Generate a synthetic thread with gold structure; writes thread.jsonl
    /// and gold.json.
    Synth(SynthArgs),
    /// Score a predicted graph against a gold standard.
    Eval(EvalArgs),
    /// Write the raw and smoothed intensity series as intensity.csv.
    ExportIntensity(IntensityArgs),
    /// Project embeddings onto three principal axes; writes projection.csv.
    Project(ProjectArgs),
}

/// Pipeline settings, each overriding the config file key of the same name.
#[derive(Debug, Args)]
struct PipelineFlags {
    /// Input JSONL chat log; repeat to train on several threads.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    vocab: Option<String>,
    #[arg(long)]
    keep_empty: bool,
    #[arg(long)]
    min_count: Option<String>,
    #[arg(long)]
    max_len: Option<String>,
    /// `symmetric` or `before`.
    #[arg(long)]
    paradigm: Option<String>,
    /// Context window size.
    #[arg(short, long)]
    k: Option<String>,
    #[arg(long)]
    embed_dim: Option<String>,
    #[arg(long)]
    hidden_dim: Option<String>,
    #[arg(long, alias = "lr")]
    learning_rate: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    negatives: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// `fit` or `mu,alpha,beta`.
    #[arg(long)]
    hawkes: Option<String>,
    #[arg(long)]
    fit_steps: Option<String>,
    #[arg(long)]
    fit_step_size: Option<String>,
    /// Smoothing scale in seconds, or `auto` for the median gap.
    #[arg(long)]
    tau: Option<String>,
    /// Range-detection quantile.
    #[arg(long)]
    quantile: Option<String>,
    /// Minimum relative valley depth for a range boundary.
    #[arg(long)]
    depth: Option<String>,
    /// Comma-separated graph formats: json, dot.
    #[arg(long)]
    formats: Option<String>,
}

impl PipelineFlags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if !self.input.is_empty() {
            let joined = self
                .input
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.push(("input", joined));
        }
        if self.keep_empty {
            out.push(("keep_empty", "true".to_string()));
        }
        let named = [
            ("checkpoint", &self.checkpoint),
            ("vocab", &self.vocab),
            ("min_count", &self.min_count),
            ("max_len", &self.max_len),
            ("paradigm", &self.paradigm),
            ("k", &self.k),
            ("embed_dim", &self.embed_dim),
            ("hidden_dim", &self.hidden_dim),
            ("learning_rate", &self.learning_rate),
            ("epochs", &self.epochs),
            ("negatives", &self.negatives),
            ("batch_size", &self.batch_size),
            ("hawkes", &self.hawkes),
            ("fit_steps", &self.fit_steps),
            ("fit_step_size", &self.fit_step_size),
            ("tau", &self.tau),
            ("quantile", &self.quantile),
            ("depth", &self.depth),
            ("formats", &self.formats),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k, v))));
        out
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Easy,
    Toy,
    Large,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "easy")]
    preset: Preset,
    /// Conversation count for the large preset.
    #[arg(long, default_value_t = 50)]
    conversations: usize,
    /// Mean posts per conversation for the large preset.
    #[arg(long, default_value_t = 100)]
    posts: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Thread the graph was predicted on (maps node indices to post ids).
    #[arg(long)]
    thread: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Predicted graph JSON from `disentangle`.
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Debug, Args)]
struct IntensityArgs {
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Sample a uniform grid of this many points instead of the
    /// segmentation grid.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    /// Embeddings CSV from `disentangle`.
    #[arg(long)]
    embeddings: PathBuf,
    /// Also label each row with an agglomerative cluster id.
    #[arg(long)]
    clusters: Option<usize>,
}

struct Global {
    config: PipelineConfig,
}

impl Global {
    fn build(cli: &Cli, flags: Option<&PipelineFlags>) -> Result<Self> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &cli.config {
            config.apply_file(path).user()?;
        }
        if let Some(flags) = flags {
            for (key, value) in flags.overrides() {
                config
                    .set(key, &value)
                    .with_context(|| format!("--{}", key.replace('_', "-")))
                    .user()?;
            }
        }
        if let Some(seed) = cli.seed {
            config.train.encoder.seed = seed;
        }
        if let Some(threads) = cli.threads {
            config.threads = threads;
        }
        if let Some(dir) = &cli.out_dir {
            config.out_dir = dir.clone();
        }
        config.validate().user()?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .context("configuring worker threads")?;
        Ok(Self { config })
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        let dir = &self.config.out_dir;
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .user()?;
        Ok(dir.join(name))
    }

    fn seed(&self) -> u64 {
        self.config.train.encoder.seed
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let flags = match &cli.command {
        Command::Train(f) | Command::Disentangle(f) => Some(f),
        Command::ExportIntensity(a) => Some(&a.pipeline),
        _ => None,
    };
    let global = Global::build(&cli, flags)?;
    match &cli.command {
        Command::Stats { file, keep_empty } => cmd_stats(file, *keep_empty || global.config.keep_empty),
        Command::Train(_) => cmd_train(&global),
        Command::Disentangle(_) => cmd_disentangle(&global),
        Command::Synth(a) => cmd_synth(&global, a),
        Command::Eval(a) => cmd_eval(a),
        Command::ExportIntensity(a) => cmd_export_intensity(&global, a),
        Command::Project(a) => cmd_project(&global, a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .user()?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path)
            .with_context(|| format!("opening {}", path.display()))
            .user()?,
    ))
}

fn read_thread(path: &Path, keep_empty: bool) -> Result<Thread> {
    let mut thread = parse_chat_log(open(path)?, ParseOptions { keep_empty })
        .with_context(|| format!("parsing {}", path.display()))
        .user()?;
    thread.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(thread)
}

fn single_input(config: &PipelineConfig) -> Result<&Path> {
    match config.input.as_slice() {
        [one] => Ok(one),
        [] => Err(user_error(
            "no input thread given (use --input or `input =` in the config)",
        )),
        _ => Err(user_error("this command takes exactly one input thread")),
    }
}

fn cmd_stats(file: &Path, keep_empty: bool) -> Result<()> {
    let thread = read_thread(file, keep_empty)?;
    print_json(&thread_stats(&thread))
}

fn cmd_train(g: &Global) -> Result<()> {
    let config = &g.config;
    if config.input.is_empty() {
        return Err(user_error(
            "no training input given (use --input or `input =` in the config)",
        ));
    }
    let threads = config
        .input
        .iter()
        .map(|p| read_thread(p, config.keep_empty))
        .collect::<Result<Vec<_>>>()?;
    let model = train_model(&threads, &config.train).context("training").user()?;
    let ckpt = config.checkpoint.clone().unwrap_or(g.out("model.untg")?);
    let vocab_path = config.vocab.clone().unwrap_or(g.out("vocab.tsv")?);
    let loss_path = g.out("loss.csv")?;
    for p in [&ckpt, &vocab_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .user()?;
        }
    }
    let mut out = create(&ckpt)?;
    write_checkpoint(&mut out, &model.config, &model.params)?;
    out.flush()?;
    let mut out = create(&vocab_path)?;
    model.vocab.write_to(&mut out)?;
    out.flush()?;
    let mut out = create(&loss_path)?;
    writeln!(out, "epoch,mean_loss")?;
    for (e, l) in model.loss_curve.iter().enumerate() {
        writeln!(out, "{},{l}", e + 1)?;
    }
    out.flush()?;
    print_json(&json!({
        "checkpoint": ckpt,
        "vocab": vocab_path,
        "loss_curve": loss_path,
        "threads": threads.len(),
        "posts": threads.iter().map(Thread::len).sum::<usize>(),
        "vocab_size": model.vocab.len(),
        "epochs": model.loss_curve.len(),
        "first_loss": model.loss_curve.first(),
        "final_loss": model.loss_curve.last(),
    }))
}

#[derive(Serialize)]
struct ConversationRecord<'a> {
    id: usize,
    root: &'a str,
    size: usize,
    depth: usize,
    posts: Vec<&'a str>,
}

fn write_embeddings(path: &Path, thread: &Thread, e: &Embeddings) -> Result<()> {
    let mut out = create(path)?;
    write!(out, "id")?;
    for d in 0..e.dim {
        write!(out, ",e{d}")?;
    }
    writeln!(out)?;
    for (post, row) in thread.posts.iter().zip(e.rows()) {
        write!(out, "{}", csv_field(&post.id))?;
        for v in row {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Split one CSV line, honouring double-quoted fields.
fn csv_split(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

fn cmd_disentangle(g: &Global) -> Result<()> {
    let config = &g.config;
    let input = single_input(config)?;
    let thread = read_thread(input, config.keep_empty)?;
    let ckpt_path = config.checkpoint_path();
    let (enc, params) = read_checkpoint(open(&ckpt_path)?)
        .with_context(|| format!("reading checkpoint {}", ckpt_path.display()))
        .user()?;
    let vocab_path = config.vocab_path();
    let vocab = Vocab::read_from(open(&vocab_path)?)
        .with_context(|| format!("reading vocabulary {}", vocab_path.display()))
        .user()?;
    if vocab.len() != enc.vocab_size {
        return Err(user_error(format!(
            "vocabulary {} has {} entries but the checkpoint expects {}",
            vocab_path.display(),
            vocab.len(),
            enc.vocab_size
        )));
    }
    let out = disentangle(&thread, &params, &vocab, enc.max_len, &config.disentangle_settings())
        .context("disentangling")
        .user()?;

    let mut written = Vec::new();
    for format in &config.formats {
        let name = match format {
            ExportFormat::Json => "graph.json",
            ExportFormat::Dot => "graph.dot",
        };
        let path = g.out(name)?;
        std::fs::write(&path, export_graph(&out.forest, *format))
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let ids: Vec<&str> = thread.posts.iter().map(|p| p.id.as_str()).collect();
    let records: Vec<ConversationRecord> = out
        .conversations
        .iter()
        .enumerate()
        .map(|(id, c)| ConversationRecord {
            id,
            root: ids[c.root],
            size: c.members.len(),
            depth: c.depth(),
            posts: c.members.iter().map(|&m| ids[m]).collect(),
        })
        .collect();
    let conv_path = g.out("conversations.json")?;
    write_json(&conv_path, &json!({ "conversations": records }))?;
    written.push(conv_path);
    let emb_path = g.out("embeddings.csv")?;
    write_embeddings(&emb_path, &thread, &out.embeddings)?;
    written.push(emb_path);

    print_json(&json!({
        "posts": thread.len(),
        "edges": out.forest.edge_count(),
        "conversations": out.conversations.len(),
        "ranges": out.ranges.iter().map(|r| [r.lo, r.hi]).collect::<Vec<_>>(),
        "hawkes": out.model,
        "outputs": written,
    }))
}

fn cmd_synth(g: &Global, a: &SynthArgs) -> Result<()> {
    let config = match a.preset {
        Preset::Easy => SynthConfig::easy(),
        Preset::Toy => SynthConfig::toy(),
        Preset::Large => SynthConfig::large(a.conversations, a.posts),
    };
    let (mut thread, gold) = generate(&config, g.seed()).user()?;
    let thread_path = g.out("thread.jsonl")?;
    let gold_path = g.out("gold.json")?;
    thread.name = "thread".into();
    let mut out = create(&thread_path)?;
    write_chat_log(&thread, &mut out)?;
    out.flush()?;
    write_json(&gold_path, &gold)?;
    print_json(&json!({
        "thread": thread_path,
        "gold": gold_path,
        "posts": thread.len(),
        "conversations": config.n_conversations,
        "seed": g.seed(),
    }))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let thread = read_thread(&a.thread, true)?;
    let gold: GoldStandard = serde_json::from_reader(open(&a.gold)?)
        .with_context(|| format!("parsing {}", a.gold.display()))
        .user()?;
    let pred: GraphJson = serde_json::from_reader(open(&a.pred)?)
        .with_context(|| format!("parsing {}", a.pred.display()))
        .user()?;
    if pred.n != thread.len() {
        return Err(user_error(format!(
            "predicted graph has {} nodes but the thread has {} posts",
            pred.n,
            thread.len()
        )));
    }
    let graph: ReplyGraph = pred.to_graph().user()?;
    let parents = graph.parent_map().user()?;
    let conversations = extract_conversations(&graph).user()?;
    let labels = conversation_labels(&conversations, thread.len());
    let gold_parents = gold.parent_indices(&thread).user()?;
    let gold_labels = gold.label_indices(&thread).user()?;
    let report = evaluate(&parents, &gold_parents, &labels, &gold_labels).user()?;
    print_json(&report)
}

fn cmd_export_intensity(g: &Global, a: &IntensityArgs) -> Result<()> {
    let config = &g.config;
    let thread = read_thread(single_input(config)?, config.keep_empty)?;
    let ts = thread.timestamps();
    if ts.is_empty() {
        return Err(user_error("thread has no posts"));
    }
    let model = match config.hawkes {
        Some(m) => m,
        None => fit_thread(&thread, config.fit)
            .context("fitting Hawkes parameters")
            .user()?,
    };
    let tau = config.ranges.tau.unwrap_or_else(|| default_tau(&ts));
    let series = match a.points {
        Some(points) => {
            let grid = uniform_grid(ts[0], ts[ts.len() - 1], points);
            smooth(&IntensitySeries::sample(&model, &ts, grid).user()?, tau).user()?
        }
        None => segmentation_series(&ts, &model, tau).user()?,
    };
    let path = g.out("intensity.csv")?;
    let mut out = create(&path)?;
    series.write_csv(&mut out)?;
    out.flush()?;
    print_json(&json!({
        "intensity": path,
        "points": series.grid.len(),
        "tau": tau,
        "hawkes": model,
    }))
}

fn read_embeddings(path: &Path) -> Result<(Vec<String>, Embeddings)> {
    let mut lines = open(path)?.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| user_error(format!("{} is empty", path.display())))?;
    let dim = csv_split(&header).len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = csv_split(&line);
        if fields.len() != dim + 1 {
            return Err(user_error(format!(
                "{} line {}: expected {} columns",
                path.display(),
                n + 2,
                dim + 1
            )));
        }
        let row = fields[1..]
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{} line {}", path.display(), n + 2))
            .user()?;
        ids.push(fields[0].clone());
        rows.push(row);
    }
    let mut e = Embeddings::from_rows(&rows);
    e.dim = dim;
    Ok((ids, e))
}

fn cmd_project(g: &Global, a: &ProjectArgs) -> Result<()> {
    let (ids, embeddings) = read_embeddings(&a.embeddings)?;
    let projection = project_3d(&embeddings).user()?;
    let clusters = a.clusters.map(|k| agglomerative(&embeddings, k)).transpose().user()?;
    let path = g.out("projection.csv")?;
    let mut out = create(&path)?;
    write!(out, "id,x,y,z")?;
    if clusters.is_some() {
        write!(out, ",cluster")?;
    }
    writeln!(out)?;
    for (i, (id, c)) in ids.iter().zip(&projection.coords).enumerate() {
        write!(out, "{},{},{},{}", csv_field(id), c[0], c[1], c[2])?;
        if let Some(labels) = &clusters {
            write!(out, ",{}", labels[i])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    print_json(&json!({
        "projection": path,
        "points": ids.len(),
        "variances": projection.variances,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        for s in ["plain", "a,b", "say \"hi\"", ""] {
            let line = format!("{},1.5", csv_field(s));
            assert_eq!(csv_split(&line), [s.to_string(), "1.5".to_string()]);
        }
    }
}
