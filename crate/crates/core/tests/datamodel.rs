mod common;

use std::collections::{BTreeSet, HashMap};

use sessionrank::datamodel::{
    generate_synthetic, load_dataset, parse_events, write_events, Dataset, EventKind, SyntheticConfig, SyntheticCorpus,
    DEFAULT_GAP_MS,
};

fn corpus_and_dataset(cfg: &SyntheticConfig, seed: u64) -> (SyntheticCorpus, Dataset) {
    let corpus = generate_synthetic(cfg, seed).unwrap();
    let mut buf = Vec::new();
    write_events(&corpus.events, &mut buf).unwrap();
    let ds = load_dataset(&buf[..], DEFAULT_GAP_MS).unwrap();
    (corpus, ds)
}

#[test]
fn stats_equal_generator_bookkeeping() {
    for seed in [1, 2, 3] {
        let (corpus, ds) = corpus_and_dataset(&SyntheticConfig::default(), seed);
        let c = &corpus.truth.counts;
        let s = &ds.stats;
        assert_eq!(s.users, c.users);
        assert_eq!(s.sessions, c.sessions);
        assert_eq!(s.queryless_queries, c.queries);
        assert_eq!(s.click_logs, c.clicks);
        assert_eq!(s.view_logs, c.views);
        assert_eq!(s.purchase_records, c.purchases);
        assert_eq!(ds.label_counts(), c.label_counts);
        assert_eq!(c.label_counts.iter().sum::<usize>(), c.impressions);
        assert!((s.avg_shown_items_per_query - c.impressions as f64 / c.queries as f64).abs() < 1e-12);
        let shown: BTreeSet<_> = corpus
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Presentation)
            .flat_map(|e| e.shown_items.iter().copied())
            .collect();
        assert_eq!(s.presented_products, shown.len());
    }
}

#[test]
fn click_rates_within_three_sigma() {
    let (corpus, _) = corpus_and_dataset(&SyntheticConfig::default(), 7);
    let cfg = SyntheticConfig::default();
    let c = &corpus.truth.counts;
    assert!(c.intent_impressions >= 10_000, "{} intent impressions", c.intent_impressions);
    for (clicks, n, p) in [
        (c.intent_clicks, c.intent_impressions, cfg.intent_click_prob),
        (c.noise_clicks, c.noise_impressions, cfg.noise_click_prob),
    ] {
        let rate = clicks as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() <= 3.0 * sigma, "rate {rate} vs {p} (sigma {sigma})");
    }
}

#[test]
fn click_events_agree_with_ground_truth_tallies() {
    let (corpus, _) = corpus_and_dataset(&SyntheticConfig::default(), 8);
    let truth = &corpus.truth;
    let mut intent = 0;
    let mut noise = 0;
    for e in corpus.events.iter().filter(|e| e.kind == EventKind::Click) {
        let q = e.query_id.expect("generator tags clicks with their query");
        if truth.category(e.item_id.unwrap()) == truth.query_intent[&q] {
            intent += 1;
        } else {
            noise += 1;
        }
    }
    assert_eq!(intent, truth.counts.intent_clicks);
    assert_eq!(noise, truth.counts.noise_clicks);
}

#[test]
fn degenerate_config_only_clicks_intent_items() {
    let cfg = SyntheticConfig {
        intent_click_prob: 1.0,
        noise_click_prob: 0.0,
        ..SyntheticConfig::default()
    };
    let (corpus, _) = corpus_and_dataset(&cfg, 2);
    let truth = &corpus.truth;
    for e in corpus.events.iter().filter(|e| e.kind == EventKind::Click) {
        assert_eq!(truth.category(e.item_id.unwrap()), truth.query_intent[&e.query_id.unwrap()]);
    }
    assert_eq!(truth.counts.clicks, truth.counts.intent_impressions);
}

#[test]
fn same_seed_same_stream() {
    let cfg = SyntheticConfig::default();
    let enc = |seed| {
        let mut buf = Vec::new();
        write_events(&generate_synthetic(&cfg, seed).unwrap().events, &mut buf).unwrap();
        buf
    };
    assert_eq!(enc(11), enc(11));
    assert_ne!(enc(11), enc(12));
}

#[test]
fn jsonl_round_trip() {
    let corpus = generate_synthetic(&SyntheticConfig::default(), 4).unwrap();
    let mut buf = Vec::new();
    write_events(&corpus.events, &mut buf).unwrap();
    let parsed = parse_events(&buf[..]).unwrap();
    assert_eq!(parsed.malformed, 0);
    let mut a = corpus.events.clone();
    let mut b = parsed.events;
    let key = |e: &sessionrank::datamodel::Event| serde_json::to_string(e).unwrap();
    a.sort_by_key(key);
    b.sort_by_key(key);
    assert_eq!(a, b);
}

#[test]
fn intent_switches_follow_probability() {
    let never = generate_synthetic(&SyntheticConfig::default(), 3).unwrap();
    assert_eq!(never.truth.counts.intent_switches, 0);
    let cfg = SyntheticConfig {
        intent_switch_prob: 1.0,
        ..SyntheticConfig::default()
    };
    let always = generate_synthetic(&cfg, 3).unwrap();
    let c = &always.truth.counts;
    assert_eq!(c.intent_switches, c.sessions * (cfg.queries_per_session - 1));
}

#[test]
fn split_is_last_query_per_session() {
    let (_, ds) = corpus_and_dataset(&SyntheticConfig::default(), 5);
    let mut last: HashMap<_, i64> = HashMap::new();
    for b in ds.train.iter().chain(&ds.test) {
        let t = last.entry(b.session_id).or_insert(i64::MIN);
        *t = (*t).max(b.timestamp);
    }
    assert_eq!(ds.test.len(), last.len());
    for b in &ds.test {
        assert_eq!(b.timestamp, last[&b.session_id]);
    }
    let train_q: BTreeSet<_> = ds.train.iter().map(|b| b.query_id).collect();
    let test_q: BTreeSet<_> = ds.test.iter().map(|b| b.query_id).collect();
    assert!(train_q.is_disjoint(&test_q));
    assert_eq!(train_q.len() + test_q.len(), ds.stats.queryless_queries);
    for b in ds.train.iter().chain(&ds.test) {
        assert_eq!(b.labels.len(), b.shown_items.len());
        assert!(b.shown_items.iter().all(|i| ds.item_vocab.contains(i)));
    }
}

#[test]
fn too_many_malformed_lines_fail() {
    let text = "{\"timestamp\":1,\"kind\":\"click\",\"item_id\":3}\nnot json\n";
    assert!(parse_events(text.as_bytes()).is_err());
    let mut ok = "{\"timestamp\":1,\"kind\":\"click\",\"item_id\":3}\n".repeat(20);
    ok.push_str("garbage\n");
    let parsed = parse_events(ok.as_bytes()).unwrap();
    assert_eq!((parsed.events.len(), parsed.malformed), (20, 1));
}
