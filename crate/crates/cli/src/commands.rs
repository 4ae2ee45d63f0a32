use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use sessionrank::checks::{gradcheck_suite, GRADCHECK_TOLERANCE};
use sessionrank::config::RunConfig;
use sessionrank::datamodel::{
    generate_synthetic, load_dataset, parse_events, prepare_dataset, sessionize, write_events, Dataset, QueryBlock,
};
use sessionrank::eval::{ablation, evaluate_method, order_by_score, EvalReport, Method, Ranker};
use sessionrank::listnet::{rank_log_csv, train_listrank, RankModel};
use sessionrank::pipeline::{load_rank_model, load_sie_model, save_model, VocabFile};
use sessionrank::sie::{epoch_log_csv, train_sie, Ablation, SieModel};
use sessionrank::{Error, Result};

use crate::{Cli, Command, GlobalArgs, Split, Stage};

const SIE_MODEL: &str = "sie_model.json";
const RANK_MODEL: &str = "rank_model.json";
const VOCAB: &str = "vocab.json";

/// File < SESSIONRANK_SEED < --set < dedicated flags.
pub fn effective_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    for kv in &g.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(t) = g.threads {
        cfg.threads = t;
    }
    if g.use_user_embedding {
        cfg.use_user_embedding = true;
    }
    if let Some(r) = g.repr_item {
        cfg.repr_item = r;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli.global)?;
    if cfg.threads > 0 {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    match cli.command {
        Command::GenSynthetic { out } => gen_synthetic(&cfg, out.as_deref().unwrap_or(&cfg.events)),
        Command::Ingest { events, json } => ingest(&cfg, events.as_deref().unwrap_or(&cfg.events), json),
        Command::Train { stage } => train(&cfg, stage),
        Command::Evaluate {
            methods,
            ablation,
            gain,
        } => evaluate(&cfg, &methods, ablation, gain.unwrap_or(cfg.gain)),
        Command::Rank { split, out } => rank(&cfg, split, out.as_deref()),
        Command::Gradcheck { seeds, epsilon } => gradcheck(seeds, epsilon),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    let mut s = serde_json::to_string_pretty(cfg)?;
    s.push('\n');
    write_file(&cfg.report_dir.join("config.json"), &s)
}

fn open_events(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open events file {}: {e}", path.display())))
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    let d = load_dataset(open_events(&cfg.events)?, cfg.gap_ms)?;
    info!(
        "dataset: {} train blocks, {} test blocks, {} items",
        d.train.len(),
        d.test.len(),
        d.item_vocab.len()
    );
    Ok(d)
}

fn gen_synthetic(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate_synthetic(&cfg.synthetic, cfg.seed)?;
    create_parent(out)?;
    let file = File::create(out).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", out.display()))))?;
    let mut w = BufWriter::new(file);
    write_events(&corpus.events, &mut w)?;
    w.flush()?;
    let dataset = prepare_dataset(&sessionize(&corpus.events, cfg.gap_ms))?;
    println!("wrote {} events to {}", corpus.events.len(), out.display());
    print!("{}", dataset.stats);
    Ok(())
}

fn ingest(cfg: &RunConfig, events: &Path, json: bool) -> Result<()> {
    let parsed = parse_events(open_events(events)?)?;
    if parsed.malformed > 0 {
        log::warn!("{} of {} lines malformed and skipped", parsed.malformed, parsed.lines);
    }
    let sessions = sessionize(&parsed.events, cfg.gap_ms);
    let dataset = prepare_dataset(&sessions)?;
    if json {
        let doc = serde_json::json!({
            "events": parsed.events.len(),
            "malformed_lines": parsed.malformed,
            "sessions": sessions.len(),
            "prepare": dataset.report,
            "stats": dataset.stats,
            "train_blocks": dataset.train.len(),
            "test_blocks": dataset.test.len(),
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}", dataset.stats);
        println!(
            "sessions: {} in, {} retained; blocks: {} train, {} test",
            dataset.report.sessions_in,
            dataset.report.retained,
            dataset.train.len(),
            dataset.test.len()
        );
    }
    Ok(())
}

fn load_sie(cfg: &RunConfig, vocab: &VocabFile) -> Result<SieModel<f64>> {
    load_sie_model(&cfg.model_dir.join(SIE_MODEL), &cfg.sie_config(), vocab)
}

fn load_rank(cfg: &RunConfig, vocab: &VocabFile) -> Result<RankModel<f64>> {
    load_rank_model(&cfg.model_dir.join(RANK_MODEL), &cfg.rank_config(), cfg.embedding_dim, vocab)
}

fn read_vocab(cfg: &RunConfig, dataset: &Dataset) -> Result<VocabFile> {
    let path = cfg.model_dir.join(VOCAB);
    if !path.exists() {
        return Err(Error::MissingModel(format!("vocabulary not found at {}; train the S-IE stage first", path.display())));
    }
    let vocab = VocabFile::read(&path)?;
    vocab.check_matches(dataset)?;
    Ok(vocab)
}

fn train(cfg: &RunConfig, stage: Stage) -> Result<()> {
    let dataset = load(cfg)?;
    let settings = cfg.train_settings();
    fs::create_dir_all(&cfg.model_dir)?;
    echo_config(cfg)?;
    let sie = if stage == Stage::Rank {
        let vocab = read_vocab(cfg, &dataset)?;
        load_sie(cfg, &vocab)?
    } else {
        let t = train_sie::<f64>(&dataset, &settings.sie, &settings.sie_train)?;
        VocabFile::of_dataset(&dataset).write(&cfg.model_dir.join(VOCAB))?;
        save_model(&t.model, &cfg.model_dir.join(SIE_MODEL))?;
        write_file(&cfg.report_dir.join("sie_train_log.csv"), &epoch_log_csv(&t.log))?;
        if let Some(last) = t.log.last() {
            println!("sie: {} epochs, final mean loss {:.5}, accuracy {:.4}", last.epoch, last.mean_loss, last.accuracy);
        }
        t.model
    };
    if stage != Stage::Sie {
        let t = train_listrank(&dataset, &sie, &settings.rank, &settings.rank_train)?;
        save_model(&t.model, &cfg.model_dir.join(RANK_MODEL))?;
        write_file(&cfg.report_dir.join("rank_train_log.csv"), &rank_log_csv(&t.log))?;
        if let Some(last) = t.log.last() {
            println!("listrank: {} epochs, final mean loss {:.5}", last.epoch, last.mean_loss);
        }
    }
    println!("models written to {}", cfg.model_dir.display());
    Ok(())
}

fn per_query_csv(r: &EvalReport) -> String {
    let mut s = String::from("query_id,ndcg_at_all,ndcg_at_10\n");
    for q in &r.per_query {
        s.push_str(&format!("{},{:.6},{:.6}\n", q.query_id, q.ndcg_at_all, q.ndcg_at_10));
    }
    s
}

fn evaluate(cfg: &RunConfig, methods: &[Method], run_ablation: bool, gain: sessionrank::eval::Gain) -> Result<()> {
    let dataset = load(cfg)?;
    echo_config(cfg)?;
    let needs_models = methods.iter().any(|m| *m != Method::Popularity);
    let (sie, rank) = if needs_models {
        let vocab = read_vocab(cfg, &dataset)?;
        let sie = load_sie(cfg, &vocab)?;
        let rank = if methods.contains(&Method::ListRank) {
            Some(load_rank(cfg, &vocab)?)
        } else {
            None
        };
        (Some(sie), rank)
    } else {
        (None, None)
    };
    let mut summary = format!("{}\n", EvalReport::CSV_HEADER);
    for &m in methods {
        let report = evaluate_method(m, &dataset, sie.as_ref(), rank.as_ref(), gain)?;
        println!("{report}");
        summary.push_str(&report.csv_row());
        summary.push('\n');
        write_file(&cfg.report_dir.join(format!("eval_{}.csv", m.name())), &per_query_csv(&report))?;
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        write_file(&cfg.report_dir.join(format!("eval_{}.json", m.name())), &json)?;
    }
    write_file(&cfg.report_dir.join("eval_summary.csv"), &summary)?;
    if run_ablation {
        let table = ablation(&dataset, &cfg.train_settings(), &Ablation::ALL, gain)?;
        print!("{table}");
        write_file(&cfg.report_dir.join("ablation.csv"), &table.to_csv())?;
        write_file(&cfg.report_dir.join("ablation.txt"), &table.to_string())?;
    }
    Ok(())
}

struct Scored<'a> {
    sie: &'a SieModel<f64>,
    rank: Option<&'a RankModel<f64>>,
}

impl Ranker for Scored<'_> {
    fn rank(&self, block: &QueryBlock) -> Result<Vec<usize>> {
        match self.rank {
            Some(rank) => {
                let s = self.sie.session_representation(block)?;
                Ok(order_by_score(&rank.scores(&s.vector, &block.shown_items)?))
            }
            None => sessionrank::eval::SieRanker(self.sie).rank(block),
        }
    }
}

fn rank(cfg: &RunConfig, split: Split, out: Option<&Path>) -> Result<()> {
    let dataset = load(cfg)?;
    let vocab = read_vocab(cfg, &dataset)?;
    let sie = load_sie(cfg, &vocab)?;
    let rank = match load_rank(cfg, &vocab) {
        Ok(r) => Some(r),
        Err(Error::MissingModel(msg)) => {
            log::warn!("{msg}; ranking with S-IE class probabilities");
            None
        }
        Err(e) => return Err(e),
    };
    let ranker = Scored {
        sie: &sie,
        rank: rank.as_ref(),
    };
    let blocks = match split {
        Split::Train => &dataset.train,
        Split::Test => &dataset.test,
    };
    let mut tsv = String::new();
    for b in blocks {
        let order = ranker.rank(b)?;
        let items: Vec<String> = order.iter().map(|&i| b.shown_items[i].to_string()).collect();
        tsv.push_str(&format!("{}\t{}\n", b.query_id, items.join(" ")));
    }
    match out {
        Some(path) => write_file(path, &tsv)?,
        None => print!("{tsv}"),
    }
    Ok(())
}

fn gradcheck(seeds: u64, epsilon: f64) -> Result<()> {
    if seeds == 0 || !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("gradcheck needs at least one seed and a positive epsilon".into()));
    }
    let cases = gradcheck_suite(&(1..=seeds).collect::<Vec<_>>(), epsilon)?;
    let mut worst = &cases[0];
    for c in &cases {
        println!(
            "{:<14} seed {:>3}  max rel. error {:.3e}  ({} params)  {}",
            c.model,
            c.seed,
            c.max_relative_error,
            c.checked,
            if c.passed() { "ok" } else { "FAIL" }
        );
        if c.max_relative_error > worst.max_relative_error {
            worst = c;
        }
    }
    println!(
        "worst: {} seed {} at {} ({:.3e}, tolerance {:.0e})",
        worst.model, worst.seed, worst.worst_param, worst.max_relative_error, GRADCHECK_TOLERANCE
    );
    if cases.iter().all(|c| c.passed()) {
        println!("gradcheck passed");
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient check failed: {} seed {} parameter {} relative error {:.3e}",
            worst.model, worst.seed, worst.worst_param, worst.max_relative_error
        )))
    }
}
