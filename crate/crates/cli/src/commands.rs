use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use seqseg_core::annotate::{aggregate_corpus, load_annotations, screen, AnnotationSet};
use seqseg_core::corpus::{
    apply_homophone_noise, generate_homophone_lexicon, generate_synthetic, load_records,
    parse_wiki_text, save_records, Corpus, Document, Granularity, PhoneLexicon, Source, Split,
    SynthSpec, SynthVocabulary,
};
use seqseg_core::eval::{
    bench_sweep, compare_runs, doc_confusion, positive_prf, BenchMetric, DocPair, RunCounts,
};
use seqseg_core::inference::{
    segment_documents, PhoneContext, PreparedDocument, SegmentationResult, StrategyRegistry,
};
use seqseg_core::model::{ModelConfig, SegModel};
use seqseg_core::tokenizer::{build_vocab, Vocab};
use seqseg_core::training::{
    build_training_samples, grad_check, train, GradCheckOptions, TrainConfig,
};
use seqseg_core::{Error, Result};

use crate::args::*;
use crate::settings::Settings;

pub struct Ctx {
    pub settings: Settings,
    pub workers: usize,
    pub quiet: bool,
}

/// `println!` unless the context is quiet.
macro_rules! say {
    ($ctx:expr, $($arg:tt)*) => {
        if !$ctx.quiet {
            println!($($arg)*);
        }
    };
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Refuses to write over any input.
fn check_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for o in outputs {
        if inputs.iter().any(|i| same_file(i, o)) {
            return Err(Error::Config(format!(
                "output {} would overwrite an input",
                o.display()
            )));
        }
    }
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

pub fn load_results(path: &Path) -> Result<Vec<SegmentationResult>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

fn source(s: SourceArg) -> Source {
    match s {
        SourceArg::Written => Source::Written,
        SourceArg::Spoken => Source::Spoken,
    }
}

/// Per-document noise seed derived from the run seed.
fn noise_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn add_noise(corpus: Corpus, lex: &PhoneLexicon, rate: f64, seed: u64) -> Result<Corpus> {
    let docs = corpus
        .documents()
        .iter()
        .enumerate()
        .map(|(i, d)| apply_homophone_noise(d, lex, rate, noise_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(docs, Split::Unsplit)
}

fn prepare(corpus: &Corpus, vocab: &Vocab, phones: Option<&PhoneContext>) -> Vec<PreparedDocument> {
    corpus
        .documents()
        .iter()
        .map(|d| PreparedDocument::new(d, vocab, phones))
        .collect()
}

/// The phone context a model needs, checked against its configuration.
fn phones_for(cfg: &ModelConfig, lexicon: Option<&Path>) -> Result<Option<PhoneContext>> {
    if !cfg.use_phone {
        return Ok(None);
    }
    let path = lexicon.ok_or_else(|| Error::Config("phone embeddings need --lexicon".into()))?;
    let ctx = PhoneContext::new(PhoneLexicon::load(path)?);
    if cfg.phone_vocab_size != 0 && cfg.phone_vocab_size != ctx.phone_vocab_size() {
        return Err(Error::InvalidInput(format!(
            "model expects {} phones, lexicon has {}",
            cfg.phone_vocab_size,
            ctx.phone_vocab_size()
        )));
    }
    Ok(Some(ctx))
}

fn load_model(path: &Path, vocab: &Vocab) -> Result<SegModel> {
    let model = SegModel::load(path)?;
    if model.config.vocab_size != vocab.len() {
        return Err(Error::InvalidInput(format!(
            "model has {} token embeddings, vocabulary has {} entries",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(model)
}

pub fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_docs: a.docs,
        sentences_per_doc: a.sentences,
        words_per_sentence: a.words,
        segment_length: a.segment_len,
        vocab_size: a.vocab_size,
        cue_words: a.cue_words,
        boundary_cue_strength: a.cue_strength,
        seed: ctx.settings.train.seed,
        source: source(a.source),
    };
    let corpus = generate_synthetic(&spec)?;
    save_records(&corpus, &a.out)?;
    if let Some(path) = &a.lexicon_out {
        let vocab = SynthVocabulary::generate(&spec);
        generate_homophone_lexicon(&vocab, a.class_size, spec.seed)?.save(path)?;
    }
    say!(
        ctx,
        "wrote {} documents to {}",
        corpus.len(),
        a.out.display()
    );
    Ok(())
}

fn read_wiki(input: &Path, granularity: Granularity, src: Source) -> Result<Corpus> {
    let mut files: Vec<PathBuf> = if input.is_dir() {
        std::fs::read_dir(input)
            .map_err(|e| io_err(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect()
    } else {
        vec![input.to_path_buf()]
    };
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for f in &files {
        let raw = std::fs::read_to_string(f).map_err(|e| io_err(f, e))?;
        let id = f
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let doc = parse_wiki_text(id, &raw, granularity)?;
        docs.push(Document::from_parts(
            doc.id().to_string(),
            doc.sentences().iter().map(|s| s.words().to_vec()).collect(),
            &doc.labels(),
            src,
        )?);
    }
    Corpus::new(docs, Split::Unsplit)
}

pub fn convert(ctx: &Ctx, a: &ConvertArgs) -> Result<()> {
    let mut inputs = vec![a.input.as_path()];
    if let Some(l) = &a.lexicon {
        inputs.push(l);
    }
    let mut outputs = vec![a.out.as_path()];
    if let Some(t) = &a.test_out {
        outputs.push(t);
    }
    check_outputs(&inputs, &outputs)?;
    let corpus = match a.format {
        InputFormat::Records => load_records(&a.input)?,
        InputFormat::Wiki => {
            let g = match a.granularity {
                GranularityArg::Section => Granularity::Section,
                GranularityArg::Paragraph => Granularity::Paragraph,
            };
            read_wiki(&a.input, g, source(a.source))?
        }
    };
    let corpus = match (a.noise, &a.lexicon) {
        (Some(rate), Some(path)) => add_noise(
            corpus,
            &PhoneLexicon::load(path)?,
            rate,
            ctx.settings.train.seed,
        )?,
        _ => corpus,
    };
    match (a.test_docs, &a.test_out) {
        (Some(n), Some(test_out)) => {
            let (train_c, test_c) = corpus.split_tail(n)?;
            save_records(&train_c, &a.out)?;
            save_records(&test_c, test_out)?;
            say!(
                ctx,
                "wrote {} train and {} test documents",
                train_c.len(),
                test_c.len()
            );
        }
        _ => {
            save_records(&corpus, &a.out)?;
            say!(
                ctx,
                "wrote {} documents to {}",
                corpus.len(),
                a.out.display()
            );
        }
    }
    Ok(())
}

pub fn vocab(ctx: &Ctx, a: &VocabArgs) -> Result<()> {
    check_outputs(&[&a.corpus], &[&a.out])?;
    let corpus = load_records(&a.corpus)?;
    let v = build_vocab(&corpus, a.size)?;
    v.save(&a.out)?;
    say!(
        ctx,
        "wrote {} vocabulary entries to {}",
        v.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let mut inputs = vec![a.corpus.as_path(), a.vocab.as_path()];
    inputs.extend(a.dev.as_deref());
    inputs.extend(a.lexicon.as_deref());
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.report.as_deref());
    check_outputs(&inputs, &outputs)?;

    let vocab = Vocab::load(&a.vocab)?;
    let mut model_cfg = ctx.settings.model.clone();
    model_cfg.vocab_size = vocab.len();
    let phones = phones_for(&model_cfg, a.lexicon.as_deref())?;
    if let Some(p) = &phones {
        model_cfg.phone_vocab_size = p.phone_vocab_size();
    } else if a.lexicon.is_some() {
        log::warn!("--lexicon given without phone embeddings; ignoring it");
    }
    let train_docs = prepare(&load_records(&a.corpus)?, &vocab, phones.as_ref());
    let dev_docs = a
        .dev
        .as_deref()
        .map(|p| load_records(p).map(|c| prepare(&c, &vocab, phones.as_ref())))
        .transpose()?;
    let (model, report) = train(
        &train_docs,
        dev_docs.as_deref(),
        &model_cfg,
        &ctx.settings.train,
    )?;
    model.save(&a.out)?;
    if let Some(path) = &a.report {
        write_json(path, &report)?;
    }
    for (i, l) in report.epoch_losses.iter().enumerate() {
        log::info!("epoch {} loss {l:.6}", i + 1);
    }
    say!(
        ctx,
        "trained on {} samples for {} epochs; final loss {:.6}{}",
        report.n_samples,
        report.epoch_losses.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report
            .best_epoch
            .map_or(String::new(), |e| format!("; kept epoch {e}")),
    );
    Ok(())
}

pub fn segment(ctx: &Ctx, a: &SegmentArgs) -> Result<()> {
    let mut inputs = vec![a.model.as_path(), a.vocab.as_path(), a.corpus.as_path()];
    inputs.extend(a.lexicon.as_deref());
    check_outputs(&inputs, &[&a.out])?;
    let vocab = Vocab::load(&a.vocab)?;
    let model = load_model(&a.model, &vocab)?;
    let phones = phones_for(&model.config, a.lexicon.as_deref())?;
    let docs = prepare(&load_records(&a.corpus)?, &vocab, phones.as_ref());
    let results = segment_documents(
        &docs,
        &model,
        &ctx.settings.infer,
        &StrategyRegistry::default(),
        ctx.workers,
    )?;
    write_jsonl(&a.out, &results)?;
    say!(
        ctx,
        "segmented {} documents with {}: {} windows, {} encoder calls",
        results.len(),
        ctx.settings.infer.strategy,
        results.iter().map(|r| r.n_windows).sum::<usize>(),
        results.iter().map(|r| r.n_encoder_calls).sum::<usize>(),
    );
    Ok(())
}

fn doc_pairs<'a>(
    results: &'a [SegmentationResult],
    refs: &'a HashMap<String, Vec<bool>>,
) -> Result<Vec<DocPair<'a>>> {
    results
        .iter()
        .map(|r| {
            let reference = refs.get(&r.id).ok_or_else(|| {
                Error::InvalidInput(format!("no reference for document `{}`", r.id))
            })?;
            Ok(DocPair {
                id: &r.id,
                pred: &r.decisions,
                reference,
            })
        })
        .collect()
}

fn run_counts(path: &Path, refs: &HashMap<String, Vec<bool>>) -> Result<RunCounts> {
    let results = load_results(path)?;
    let docs = doc_pairs(&results, refs)?
        .iter()
        .map(|p| Ok((p.id.to_string(), doc_confusion(p)?)))
        .collect::<Result<_>>()?;
    Ok(RunCounts { docs })
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.corpus];
    inputs.extend(a.pred.as_deref());
    inputs.extend(a.runs_a.iter().map(PathBuf::as_path));
    inputs.extend(a.runs_b.iter().map(PathBuf::as_path));
    if let Some(o) = &a.out {
        check_outputs(&inputs, &[o])?;
    }
    let corpus = load_records(&a.corpus)?;
    let refs: HashMap<String, Vec<bool>> = corpus
        .documents()
        .iter()
        .map(|d| (d.id().to_string(), d.labels()))
        .collect();
    let value = if !a.runs_a.is_empty() {
        let side = |paths: &[PathBuf]| {
            paths
                .iter()
                .map(|p| run_counts(p, &refs))
                .collect::<Result<Vec<_>>>()
        };
        let sig = compare_runs(
            &side(&a.runs_a)?,
            &side(&a.runs_b)?,
            ctx.settings.train.seed,
        )?;
        serde_json::to_value(sig)?
    } else {
        let pred = a
            .pred
            .as_deref()
            .expect("clap requires --pred without --runs-a");
        let results = load_results(pred)?;
        serde_json::to_value(positive_prf(&doc_pairs(&results, &refs)?)?)?
    };
    say!(ctx, "{}", serde_json::to_string(&value)?);
    if let Some(o) = &a.out {
        write_json(o, &value)?;
    }
    Ok(())
}

pub fn bench(ctx: &Ctx, a: &BenchArgs) -> Result<()> {
    let mut inputs = vec![a.model.as_path(), a.vocab.as_path(), a.corpus.as_path()];
    inputs.extend(a.baseline.as_deref());
    inputs.extend(a.lexicon.as_deref());
    check_outputs(&inputs, &[&a.out])?;
    let vocab = Vocab::load(&a.vocab)?;
    let model = load_model(&a.model, &vocab)?;
    let baseline = a
        .baseline
        .as_deref()
        .map(|p| load_model(p, &vocab))
        .transpose()?;
    if let Some(b) = &baseline {
        if b.config.use_phone != model.config.use_phone {
            return Err(Error::Config(
                "model and baseline must agree on phone embeddings".into(),
            ));
        }
    }
    let phones = phones_for(&model.config, a.lexicon.as_deref())?;
    let docs = prepare(&load_records(&a.corpus)?, &vocab, phones.as_ref());
    let report = bench_sweep(
        &model,
        baseline
            .as_ref()
            .map(|b| b as &dyn seqseg_core::inference::Scorer),
        &docs,
        &a.steps,
        &ctx.settings.infer,
        &StrategyRegistry::default(),
        ctx.workers,
    )?;
    write_json(&a.out, &report)?;
    if let Some(dir) = &a.series_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for strategy in ["fixed", "adaptive"] {
            for (metric, name) in [
                (BenchMetric::F1, "f1"),
                (BenchMetric::EncoderCalls, "calls"),
                (BenchMetric::WallMs, "wall_ms"),
            ] {
                let path = dir.join(format!("{strategy}_{name}.tsv"));
                std::fs::write(&path, report.series_text(strategy, metric))
                    .map_err(|e| io_err(&path, e))?;
            }
        }
    }
    if !ctx.quiet {
        print!("{}", report.table());
    }
    Ok(())
}

fn drop_annotators(set: &AnnotationSet, failed: &HashSet<String>) -> Result<AnnotationSet> {
    let (ids, votes): (Vec<String>, Vec<Vec<bool>>) = set
        .annotator_ids
        .iter()
        .zip(&set.votes)
        .filter(|(id, _)| !failed.contains(*id))
        .map(|(id, v)| (id.clone(), v.clone()))
        .unzip();
    AnnotationSet::new(set.doc_id.clone(), ids, votes)
}

pub fn aggregate(ctx: &Ctx, a: &AggregateArgs) -> Result<()> {
    let mut inputs = vec![a.annotations.as_path(), a.corpus.as_path()];
    inputs.extend(a.screen.as_deref());
    inputs.extend(a.screen_ref.as_deref());
    check_outputs(&inputs, &[&a.out])?;
    let mut sets = load_annotations(&a.annotations)?;
    if let (Some(screen_path), Some(ref_path)) = (&a.screen, &a.screen_ref) {
        let refs: BTreeMap<String, Vec<bool>> = load_records(ref_path)?
            .documents()
            .iter()
            .map(|d| (d.id().to_string(), d.labels()))
            .collect();
        let results = screen(&load_annotations(screen_path)?, &refs, a.min_f1)?;
        let failed: HashSet<String> = results
            .iter()
            .filter(|r| !r.passed)
            .map(|r| r.annotator_id.clone())
            .collect();
        for r in &results {
            eprintln!(
                "screening {}: F1 {:.4} {}",
                r.annotator_id,
                r.report.f1,
                if r.passed { "passed" } else { "failed" }
            );
        }
        sets = sets
            .iter()
            .map(|s| drop_annotators(s, &failed))
            .collect::<Result<_>>()?;
    }
    let corpus = load_records(&a.corpus)?;
    let out = aggregate_corpus(&corpus, &sets, a.top_k, a.positive_votes)?;
    save_records(&out, &a.out)?;
    say!(
        ctx,
        "wrote {} aggregated documents to {}",
        out.len(),
        a.out.display()
    );
    Ok(())
}

/// Defaults of the gradient check: one layer, one head, eight dimensions.
pub fn gradcheck_base() -> Settings {
    Settings {
        model: ModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 1,
            d_ff: 16,
            max_seq_len: 32,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            max_seq_len: 32,
            ..TrainConfig::default()
        },
        ..Settings::default()
    }
}

pub fn gradcheck(ctx: &Ctx, a: &GradcheckArgs) -> Result<()> {
    let seed = ctx.settings.train.seed;
    let spec = SynthSpec {
        n_docs: 1,
        sentences_per_doc: (a.sentences, a.sentences),
        words_per_sentence: (2, 3),
        segment_length: (1, 2),
        vocab_size: 8,
        cue_words: 2,
        seed,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic(&spec)?;
    let vocab = build_vocab(&corpus, 64)?;
    let mut model_cfg = ctx.settings.model.clone();
    model_cfg.vocab_size = vocab.len();
    let phones = if model_cfg.use_phone {
        let lex = generate_homophone_lexicon(&SynthVocabulary::generate(&spec), 2, seed)?;
        let p = PhoneContext::new(lex);
        model_cfg.phone_vocab_size = p.phone_vocab_size();
        Some(p)
    } else {
        None
    };
    let doc = PreparedDocument::new(&corpus.documents()[0], &vocab, phones.as_ref());
    let train_cfg = TrainConfig {
        max_seq_len: model_cfg.max_seq_len,
        max_sentences: a.sentences.max(1),
        forward_step: a.sentences.max(1),
        ..ctx.settings.train.clone()
    };
    let sample = build_training_samples(&doc, &train_cfg)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Config("no window fits the model".into()))?;
    let model = SegModel::init(model_cfg, seed)?;
    let opts = GradCheckOptions {
        epsilon: a.epsilon,
        coords_per_tensor: a.coords,
        seed,
        only: None,
    };
    let report = grad_check(&model, &sample, &opts)?;
    if let Some(o) = &a.out {
        write_json(o, &report)?;
    }
    say!(
        ctx,
        "max relative error {:.3e} over {} tensors",
        report.max_rel_error,
        report.tensors.len()
    );
    if !(report.max_rel_error < a.tolerance) {
        return Err(Error::Numerical(format!(
            "gradient check error {:.3e} exceeds tolerance {:.1e}",
            report.max_rel_error, a.tolerance
        )));
    }
    Ok(())
}
