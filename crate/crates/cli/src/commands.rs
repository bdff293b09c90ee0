use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use margin_attr::engine::{
    attribute, erasure_attribution, EngineError, MarginalizationConfig, Replacement, Truncation,
    DEFAULT_PROB_CLAMP,
};
use margin_attr::evaluation::{
    ablation_csv, corpus_deletion_curves, iot, mean_auc, neutral_mean_score, rule_label,
    truncation_ablation, RNG_ALGORITHM,
};
use margin_attr::exec::map_indexed;
use margin_attr::oracles::{ClassifierOracle, LikelihoodOracle};
use margin_attr::report::{render_comparison, Format};
use margin_attr::vocab::{load_corpus, load_vocabulary, Tag, TaggedCorpus};
use margin_attr::{AttributionMap, Execution, Method, Sentence, Vocabulary};
use serde_json::{json, Map, Value};

use crate::args::{
    AblateArgs, AttributeArgs, CommonArgs, EvaluateArgs, Metric, OutputFormat, Polarity,
    TruncationArgs,
};
use crate::error::CliError;
use crate::oracles::{resolve, Oracles};
use crate::output::{ensure_dir, sentence_stem, write_atomic, write_json};

struct Run {
    vocab: Vocabulary,
    corpus: TaggedCorpus,
    oracles: Oracles,
    execution: Execution,
}

impl Run {
    fn load(common: &CommonArgs) -> Result<Self, CliError> {
        if common.batch_size == 0 {
            return Err(CliError::config("--batch-size must be at least 1"));
        }
        let vocab = load_vocabulary(&common.vocab)?;
        let corpus = load_corpus(&common.corpus, &vocab, None)?;
        let oracles = resolve(common, &corpus, &vocab)?;
        let class_count = oracles.classifier.class_count();
        if let Some(c) = common.class {
            if c >= class_count {
                return Err(CliError::config(format!(
                    "--class {c} out of range for {class_count} classes"
                )));
            }
        }
        let requested = if common.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        };
        let execution = requested.with_oracles(&[
            oracles.classifier.concurrency(),
            oracles.likelihood.concurrency(),
        ]);
        ensure_dir(&common.out)?;
        Ok(Self {
            vocab,
            corpus,
            oracles,
            execution,
        })
    }

    fn clf(&self) -> &dyn ClassifierOracle {
        &*self.oracles.classifier
    }

    fn lm(&self) -> &dyn LikelihoodOracle {
        &*self.oracles.likelihood
    }

    fn sentences(&self) -> &[Sentence] {
        self.corpus.sentences()
    }

    /// Fixed `--class`, or each sentence's argmax class.
    fn targets(&self, fixed: Option<usize>, batch: usize) -> Result<Vec<usize>, CliError> {
        if let Some(c) = fixed {
            return Ok(vec![c; self.corpus.len()]);
        }
        let mut out = Vec::with_capacity(self.corpus.len());
        for chunk in self.sentences().chunks(batch) {
            let rows = self.clf().classify_batch(chunk)?;
            if rows.len() != chunk.len() {
                return Err(EngineError::OracleArity {
                    expected: chunk.len(),
                    got: rows.len(),
                }
                .into());
            }
            out.extend(rows.iter().map(|r| r.argmax()));
        }
        Ok(out)
    }

    /// Attribution maps for every sentence, in corpus order.
    fn attribute_all(
        &self,
        method: Method,
        targets: &[usize],
        truncation: Truncation,
        batch: usize,
    ) -> Result<Vec<AttributionMap>, CliError> {
        map_indexed(self.sentences(), self.execution, |i, s| {
            let mut cfg = MarginalizationConfig::new(targets[i])
                .with_truncation(truncation)
                .with_execution(Execution::Sequential);
            cfg.batch_size = batch;
            let result = match method {
                Method::Marginalization => attribute(s, &cfg, self.clf(), self.lm()),
                Method::ZeroErasure => {
                    erasure_attribution(s, Replacement::zero(&self.vocab), &cfg, self.clf())
                }
                Method::UnkErasure => {
                    erasure_attribution(s, Replacement::unk(&self.vocab), &cfg, self.clf())
                }
            };
            result.map_err(|e| (i, e))
        })
        .map_err(|(i, e)| with_context(CliError::from(e), &format!("sentence {i}")))
    }
}

fn with_context(e: CliError, context: &str) -> CliError {
    match e {
        CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
        CliError::Oracle(m) => CliError::Oracle(format!("{context}: {m}")),
        CliError::Invariant(m) => CliError::Invariant(format!("{context}: {m}")),
    }
}

fn truncation(t: &TruncationArgs) -> Result<Truncation, CliError> {
    let rule = match t.top_n {
        Some(n) => Truncation::TopN(n),
        None => Truncation::Threshold(t.sigma),
    };
    MarginalizationConfig::new(0)
        .with_truncation(rule)
        .validate()?;
    Ok(rule)
}

fn truncation_json(t: Truncation) -> Value {
    match t {
        Truncation::Threshold(s) => json!({ "sigma": s }),
        Truncation::TopN(n) => json!({ "top_n": n }),
    }
}

fn unique<T: PartialEq + Copy>(items: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn formats_json(formats: &[OutputFormat]) -> Value {
    let names: Vec<&str> = formats
        .iter()
        .map(|f| match f {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
            OutputFormat::Html => "html",
            OutputFormat::Ansi => "ansi",
        })
        .collect();
    json!(names)
}

fn methods_json(methods: &[Method]) -> Value {
    json!(methods.iter().map(|m| m.as_str()).collect::<Vec<_>>())
}

/// Provenance shared by every output of a run. The output directory and
/// thread count are left out: they do not change results.
fn base_config(command: &str, common: &CommonArgs, run: &Run) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("corpus".into(), json!(common.corpus.display().to_string()));
    m.insert("vocab".into(), json!(common.vocab.display().to_string()));
    m.insert(
        "classifier".into(),
        json!(run.oracles.classifier_spec.describe()),
    );
    m.insert(
        "likelihood".into(),
        json!(run.oracles.likelihood_spec.describe()),
    );
    m.insert("smoothing".into(), json!(common.smoothing));
    m.insert(
        "target_class".into(),
        common.class.map_or(json!("predicted"), |c| json!(c)),
    );
    m.insert("batch_size".into(), json!(common.batch_size));
    m.insert("prob_clamp".into(), json!(DEFAULT_PROB_CLAMP));
    m
}

fn heatmap(
    format: OutputFormat,
    maps: &[AttributionMap],
    tokens: &[String],
    provenance: &str,
) -> Result<Option<(Vec<u8>, &'static str)>, CliError> {
    let (f, ext) = match format {
        OutputFormat::Html => (Format::Html, "html"),
        OutputFormat::Ansi => (Format::Ansi, "ansi"),
        _ => return Ok(None),
    };
    Ok(Some((
        render_comparison(maps, tokens, f, Some(provenance))?,
        ext,
    )))
}

fn write_heatmaps(
    out: &Path,
    formats: &[OutputFormat],
    run: &Run,
    per_method: &[Vec<AttributionMap>],
    provenance: &str,
) -> Result<(), CliError> {
    for (i, s) in run.sentences().iter().enumerate() {
        let tokens = run.vocab.display(s);
        let maps: Vec<AttributionMap> = per_method.iter().map(|m| m[i].clone()).collect();
        for &format in formats {
            if let Some((bytes, ext)) = heatmap(format, &maps, &tokens, provenance)? {
                write_atomic(&out.join(format!("{}.{ext}", sentence_stem(i))), &bytes)?;
            }
        }
    }
    Ok(())
}

pub fn cmd_attribute(args: &AttributeArgs) -> Result<(), CliError> {
    let common = &args.common;
    let run = Run::load(common)?;
    let methods = unique(&args.methods);
    let formats = unique(&args.formats);
    let trunc = truncation(&args.truncation)?;
    let mut config = base_config("attribute", common, &run);
    config.insert("truncation".into(), truncation_json(trunc));
    config.insert("methods".into(), methods_json(&methods));
    config.insert("formats".into(), formats_json(&formats));
    let config = Value::Object(config);
    let provenance = config.to_string();

    let targets = run.targets(common.class, common.batch_size)?;
    let per_method = methods
        .iter()
        .map(|&m| run.attribute_all(m, &targets, trunc, common.batch_size))
        .collect::<Result<Vec<_>, _>>()?;

    let out = &common.out;
    if formats.contains(&OutputFormat::Json) {
        for (i, s) in run.sentences().iter().enumerate() {
            let tokens = run.vocab.display(s);
            for maps in &per_method {
                let m = &maps[i];
                let doc = json!({
                    "tokens": tokens,
                    "scores": m.scores,
                    "method": m.method.as_str(),
                    "target_class": m.target_class,
                    "config": config,
                });
                write_json(
                    &out.join(format!("{}.{}.json", sentence_stem(i), m.method)),
                    &doc,
                )?;
            }
        }
    }
    if formats.contains(&OutputFormat::Csv) {
        let invariant = |e: csv::Error| CliError::Invariant(format!("cannot build CSV: {e}"));
        let mut csv = csv::Writer::from_writer(Vec::new());
        csv.write_record([
            "sentence",
            "position",
            "token",
            "method",
            "target_class",
            "score",
        ])
        .map_err(invariant)?;
        for (i, s) in run.sentences().iter().enumerate() {
            let tokens = run.vocab.display(s);
            for maps in &per_method {
                let m = &maps[i];
                for (p, score) in m.scores.iter().enumerate() {
                    csv.write_record([
                        i.to_string(),
                        p.to_string(),
                        tokens[p].clone(),
                        m.method.to_string(),
                        m.target_class.to_string(),
                        score.to_string(),
                    ])
                    .map_err(invariant)?;
                }
            }
        }
        let csv = csv
            .into_inner()
            .map_err(|e| CliError::Invariant(format!("cannot build CSV: {e}")))?;
        write_atomic(&out.join("attributions.csv"), &csv)?;
        write_json(&out.join("attributions.json"), &json!({ "config": config }))?;
    }
    write_heatmaps(out, &formats, &run, &per_method, &provenance)?;
    eprintln!(
        "attributed {} sentences with {} method(s) into {}",
        run.corpus.len(),
        methods.len(),
        out.display()
    );
    Ok(())
}

fn polarity_for(p: Polarity, target: usize, class_count: usize) -> Result<Tag, CliError> {
    match p {
        Polarity::Pos => Ok(Tag::Pos),
        Polarity::Neg => Ok(Tag::Neg),
        Polarity::Auto if class_count == 2 => Ok(if target == 1 { Tag::Pos } else { Tag::Neg }),
        Polarity::Auto => Err(CliError::config(
            "--polarity auto needs a two-class task; pass pos or neg",
        )),
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let common = &args.common;
    let metrics = unique(&args.metrics);
    let needs_tags = metrics
        .iter()
        .any(|m| matches!(m, Metric::Iot | Metric::Neutral));
    if !(args.max_fraction > 0.0 && args.max_fraction <= 1.0) {
        return Err(CliError::config(format!(
            "--max-fraction must lie in (0, 1], got {}",
            args.max_fraction
        )));
    }
    if args.top_k == 0 {
        return Err(CliError::config("--top-k must be at least 1"));
    }
    let run = Run::load(common)?;
    if needs_tags && !run.corpus.is_tagged() {
        return Err(CliError::config("tags required"));
    }
    let methods = unique(&args.methods);
    let formats = unique(&args.formats);
    let trunc = truncation(&args.truncation)?;
    let class_count = run.clf().class_count();

    let mut config = base_config("evaluate", common, &run);
    config.insert("truncation".into(), truncation_json(trunc));
    config.insert("methods".into(), methods_json(&methods));
    config.insert(
        "metrics".into(),
        json!(metrics
            .iter()
            .map(|m| match m {
                Metric::Auc => "auc",
                Metric::Iot => "iot",
                Metric::Neutral => "neutral",
            })
            .collect::<Vec<_>>()),
    );
    config.insert("seed".into(), json!(args.seed));
    config.insert("rng".into(), json!(RNG_ALGORITHM));
    config.insert("max_fraction".into(), json!(args.max_fraction));
    config.insert("top_k".into(), json!(args.top_k));
    config.insert(
        "polarity".into(),
        json!(match args.polarity {
            Polarity::Auto => "auto",
            Polarity::Pos => "pos",
            Polarity::Neg => "neg",
        }),
    );
    config.insert("formats".into(), formats_json(&formats));
    let config = Value::Object(config);

    let targets = run.targets(common.class, common.batch_size)?;
    let polarities = if metrics.contains(&Metric::Iot) {
        targets
            .iter()
            .map(|&t| polarity_for(args.polarity, t, class_count))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };

    let out = &common.out;
    let mut results: BTreeMap<&str, Map<String, Value>> = BTreeMap::new();
    let mut per_method = Vec::with_capacity(methods.len());
    for &method in &methods {
        let maps = run.attribute_all(method, &targets, trunc, common.batch_size)?;
        let mut entry = Map::new();
        entry.insert("sentences".into(), json!(maps.len()));
        if metrics.contains(&Metric::Auc) {
            let curves = corpus_deletion_curves(
                run.sentences(),
                &maps,
                run.clf(),
                run.lm(),
                args.max_fraction,
                args.seed,
                run.execution,
            )?;
            if formats.contains(&OutputFormat::Csv) {
                let dir = out.join("curves").join(method.as_str());
                ensure_dir(&dir)?;
                for (i, c) in curves.iter().enumerate() {
                    let stem = sentence_stem(i);
                    write_atomic(&dir.join(format!("{stem}.csv")), c.to_csv().as_bytes())?;
                    let mut side = c.sidecar();
                    side["config"] = config.clone();
                    write_json(&dir.join(format!("{stem}.json")), &side)?;
                }
            }
            let mean = mean_auc(&curves)
                .ok_or_else(|| CliError::Invariant("no deletion curves".into()))?;
            entry.insert("auc_rep".into(), json!(mean));
        }
        if metrics.contains(&Metric::Iot) {
            let mut total = 0.0;
            let mut counted = 0usize;
            for ((m, s), &pol) in maps.iter().zip(run.sentences()).zip(&polarities) {
                let tags = s.tags().expect("checked above");
                if !tags.contains(&pol) {
                    continue;
                }
                total += iot(m, tags, args.top_k, pol)?;
                counted += 1;
            }
            if counted == 0 {
                return Err(CliError::config("no tagged tokens"));
            }
            entry.insert("iot".into(), json!(total / counted as f64));
            entry.insert("iot_sentences".into(), json!(counted));
        }
        if metrics.contains(&Metric::Neutral) {
            let items = maps
                .iter()
                .zip(run.sentences())
                .map(|(m, s)| (m, s.tags().expect("checked above")));
            entry.insert("neutral_mean".into(), json!(neutral_mean_score(items)?));
        }
        results.insert(method.as_str(), entry);
        per_method.push(maps);
    }

    let summary = json!({ "config": config, "methods": results });
    if formats.contains(&OutputFormat::Json) {
        write_json(&out.join("summary.json"), &summary)?;
    }
    write_heatmaps(out, &formats, &run, &per_method, &config.to_string())?;
    print!("{}", summary_table(&methods, &results));
    Ok(())
}

fn summary_table(methods: &[Method], results: &BTreeMap<&str, Map<String, Value>>) -> String {
    let columns = [
        ("auc_rep", "AUC_rep"),
        ("iot", "IoT"),
        ("neutral_mean", "neutral"),
    ];
    let present: Vec<_> = columns
        .iter()
        .filter(|(k, _)| results.values().any(|e| e.contains_key(*k)))
        .collect();
    let mut out = format!("{:<8}", "method");
    for (_, title) in &present {
        let _ = write!(out, " {title:>10}");
    }
    out.push('\n');
    for m in methods {
        let entry = &results[m.as_str()];
        let _ = write!(out, "{:<8}", m.as_str());
        for (key, _) in &present {
            match entry.get(*key).and_then(Value::as_f64) {
                Some(v) => {
                    let _ = write!(out, " {v:>10.4}");
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<(), CliError> {
    let common = &args.common;
    let mut rules: Vec<Truncation> = args
        .sigmas
        .iter()
        .map(|&s| Truncation::Threshold(s))
        .collect();
    rules.extend(args.top_ns.iter().map(|&n| Truncation::TopN(n)));
    if rules.is_empty() {
        return Err(CliError::config(
            "empty truncation grid: pass --sigma and/or --top-n values",
        ));
    }
    let vocab = load_vocabulary(&common.vocab)?;
    if vocab.len() > args.max_vocab {
        return Err(CliError::config(format!(
            "full marginalization infeasible: vocabulary has {} tokens, cap is {} (raise --max-vocab)",
            vocab.len(),
            args.max_vocab
        )));
    }
    drop(vocab);
    let run = Run::load(common)?;
    // The ablation correlates one class's scores across rules; with two
    // classes the choice only flips signs.
    let target = common.class.unwrap_or(1);
    let mut base = MarginalizationConfig::new(target).with_execution(run.execution);
    base.batch_size = common.batch_size;
    let rows = truncation_ablation(run.sentences(), &rules, &base, run.clf(), run.lm())?;

    let mut config = base_config("ablate", common, &run);
    config.insert("target_class".into(), json!(target));
    config.insert(
        "grid".into(),
        json!(rules.iter().map(|&r| rule_label(r)).collect::<Vec<_>>()),
    );
    config.insert("max_vocab".into(), json!(args.max_vocab));
    let csv = ablation_csv(&rows);
    write_atomic(&common.out.join("ablation.csv"), csv.as_bytes())?;
    let rows_json: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "rule": rule_label(r.rule),
                "truncation": truncation_json(r.rule),
                "pearson": r.pearson,
                "avg_candidates": r.avg_candidates,
            })
        })
        .collect();
    write_json(
        &common.out.join("ablation.json"),
        &json!({ "config": config, "rows": rows_json }),
    )?;
    print!("{csv}");
    Ok(())
}
