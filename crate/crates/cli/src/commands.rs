use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use nel_core::classifier::{self, Grid, ModelParams, Resources, TrainConfig};
use nel_core::evaluation::{evaluate, load_dataset};
use nel_core::ingest::{
    default_type_roots, index_dump, open_dump, stream_items, IndexOptions, Languages, LinkGraph, UpsertOutcome,
};
use nel_core::pagerank::{compute_pagerank, PageRankParams};
use nel_core::{
    Exec, ItemId, PageRankVector, RecordStore, SimilarityParams, SurfaceDictionary, TypeClosure, UnigramLm,
};
use serde_json::json;

use crate::cli::*;
use crate::config::{self, EngineConfig};
use crate::engine::Engine;

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load_store(dir: &Path) -> Result<RecordStore> {
    RecordStore::load(dir).with_context(|| format!("loading record store from {}", dir.display()))
}

fn languages(list: &Option<String>) -> Languages {
    list.as_deref().map_or(Languages::All, Languages::parse)
}

fn parse_roots(list: &str) -> Result<std::collections::BTreeSet<ItemId>> {
    let roots = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ItemId>().with_context(|| format!("bad type root `{s}`")))
        .collect::<Result<_>>()?;
    Ok(roots)
}

pub fn index(args: &IndexArgs, exec: Exec, out: &mut dyn Write) -> Result<()> {
    let opts = IndexOptions {
        languages: languages(&args.langs),
        roots: parse_roots(&args.roots)?,
        exec,
        ..Default::default()
    };
    let index = index_dump(&args.dump, &opts).with_context(|| format!("indexing {}", args.dump.display()))?;
    index.save(&args.out)?;
    writeln!(out, "{}", serde_json::to_string(&index.report)?)?;
    Ok(())
}

pub fn pagerank(args: &PagerankArgs, exec: Exec, out: &mut dyn Write) -> Result<()> {
    let store = load_store(&args.store)?;
    let params = PageRankParams {
        damping: args.damping,
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let mut pr = if args.filtered {
        compute_pagerank(store.iter().map(|r| (r.id, r.out_links.as_slice())), params, exec)?
    } else {
        let graph = LinkGraph::load(&args.store).context("loading link graph")?;
        compute_pagerank(graph.nodes.iter().map(|(id, l)| (*id, l.as_slice())), params, exec)?
    };
    pr.source_generation = Some(store.generation());
    pr.save(&args.out)?;
    writeln!(
        out,
        "{}",
        json!({"nodes": pr.len(), "iterations": pr.iterations_run, "residual": pr.residual})
    )?;
    Ok(())
}

pub fn train_lm(args: &TrainLmArgs, exec: Exec, out: &mut dyn Write) -> Result<()> {
    let store = load_store(&args.store)?;
    let labels: Vec<&str> = store.iter().flat_map(|r| r.labels.values().map(String::as_str)).collect();
    let mut lm = UnigramLm::train(&labels, args.alpha, exec)?;
    lm.source_generation = Some(store.generation());
    lm.save(&args.out)?;
    writeln!(
        out,
        "{}",
        json!({"labels": labels.len(), "tokens": lm.total_tokens(), "vocabulary": lm.vocab_size()})
    )?;
    Ok(())
}

pub fn build_dict(args: &BuildDictArgs, out: &mut dyn Write) -> Result<()> {
    let store = load_store(&args.store)?;
    let mut dict = SurfaceDictionary::build(store.iter(), &languages(&args.langs))?;
    dict.source_generation = Some(store.generation());
    dict.save(&args.out)?;
    writeln!(out, "{}", json!({"surface_forms": dict.len()}))?;
    Ok(())
}

pub fn train(args: &TrainArgs, exec: Exec, out: &mut dyn Write) -> Result<()> {
    let dataset = load_dataset(&args.dataset)?;
    let resources = Resources {
        dict: SurfaceDictionary::load(&args.dict).context("loading dictionary")?,
        lm: UnigramLm::load(&args.lm).context("loading language model")?,
        pagerank: PageRankVector::load(&args.pagerank).context("loading pagerank table")?,
        records: load_store(&args.store)?,
    };
    let config = TrainConfig {
        params: ModelParams {
            similarity: SimilarityParams {
                beta: args.beta,
                eta: args.eta,
                max_distance: args.max_distance,
            },
            k: args.k,
            lambda: args.lambda,
            epochs: args.epochs,
            seed: args.seed,
            ..Default::default()
        },
        grid: args.grid.then(Grid::default),
        folds: args.folds,
        exec,
    };
    let (model, report) = classifier::train(&dataset, &resources, &config)?;
    model.save(&args.out)?;

    let absolute = |p: &Path| std::fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()));
    let sidecar = EngineConfig {
        store: Some(absolute(&args.store)?),
        dict: Some(absolute(&args.dict)?),
        lm: Some(absolute(&args.lm)?),
        pagerank: Some(absolute(&args.pagerank)?),
        ..Default::default()
    };
    let sidecar_path = config::sidecar_path(&args.out);
    std::fs::write(&sidecar_path, sidecar.to_kv()).with_context(|| format!("writing {}", sidecar_path.display()))?;

    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    writeln!(
        out,
        "{}",
        json!({
            "documents": report.documents,
            "vertices": report.vertices,
            "positives": report.positives,
            "unreachable": report.unreachable,
            "params": model.params,
        })
    )?;
    Ok(())
}

pub fn engine_config(args: &EngineArgs) -> Result<EngineConfig> {
    config::resolve(args.config.as_deref(), Some(&args.model), std::env::vars())
}

/// Annotates each input line as one document and writes one JSON line each.
pub fn annotate_lines(engine: &Engine, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<usize> {
    let mut n = 0;
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.strip_suffix('\n').unwrap_or(&line);
        let text = text.strip_suffix('\r').unwrap_or(text);
        writeln!(out, "{}", engine.linker.annotate_json(text)?)?;
        n += 1;
    }
    Ok(n)
}

pub fn annotate(args: &AnnotateArgs, out: &mut dyn Write) -> Result<()> {
    let engine = Engine::load(engine_config(&args.engine)?)?;
    let mut input: Box<dyn BufRead> = match &args.input {
        Some(p) => Box::new(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?)),
        None => Box::new(io::stdin().lock()),
    };
    annotate_lines(&engine, &mut input, out)?;
    out.flush()?;
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs, exec: Exec, out: &mut dyn Write) -> Result<()> {
    let engine = Engine::load(engine_config(&args.engine)?)?;
    let dataset = load_dataset(&args.dataset)?;
    let report = evaluate(&engine.linker, &dataset, exec)?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    writeln!(
        out,
        "micro P {:.4} R {:.4} F1 {:.4} | macro P {:.4} R {:.4} F1 {:.4} | {} documents",
        report.micro_precision,
        report.micro_recall,
        report.micro_f1,
        report.macro_precision,
        report.macro_recall,
        report.macro_f1,
        report.per_document.len()
    )?;
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let mut cfg = engine_config(&args.engine)?;
    if let Some(p) = args.port {
        cfg.port = p;
    }
    if let Some(l) = args.body_limit {
        cfg.body_limit = l;
    }
    let addr = std::net::SocketAddr::new(args.host, cfg.port);
    let engine = Arc::new(Engine::load(cfg)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::service::serve(engine, addr))
}

pub fn upsert(args: &UpsertArgs, exec: Exec, out: &mut dyn Write) -> Result<()> {
    let mut store = load_store(&args.store)?;
    let closure = match TypeClosure::load(&args.store) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("no type closure in the store ({e}); filtering on the type roots alone");
            TypeClosure::build(&[], &default_type_roots())
        }
    };
    let mut graph = LinkGraph::load(&args.store).ok();
    let before = store.generation();
    let (mut inserted, mut replaced, mut unchanged, mut skipped) = (0, 0, 0, 0);
    let stats = stream_items(open_dump(&args.items)?, 1024, exec, |rec| {
        if let Some(g) = graph.as_mut() {
            g.upsert(rec.id, rec.out_links.clone());
        }
        if !closure.admits(&rec) {
            skipped += 1;
            return;
        }
        match store.apply_upsert(rec) {
            UpsertOutcome::Inserted => inserted += 1,
            UpsertOutcome::Replaced => replaced += 1,
            UpsertOutcome::Unchanged => unchanged += 1,
        }
    })?;
    if stats.malformed > 0 && stats.items == 0 {
        bail!("no valid items in {}", args.items.display());
    }
    store.save(&args.store)?;
    if let Some(g) = &graph {
        g.save(&args.store)?;
    }
    if store.generation() != before {
        log::warn!("store changed; rebuild pagerank, language model, dictionary and model artifacts");
    }
    writeln!(
        out,
        "{}",
        json!({
            "inserted": inserted,
            "replaced": replaced,
            "unchanged": unchanged,
            "skipped": skipped,
            "malformed": stats.malformed,
            "generation": store.generation(),
        })
    )?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::Index(a) => index(a, exec, out),
        Command::Pagerank(a) => pagerank(a, exec, out),
        Command::TrainLm(a) => train_lm(a, exec, out),
        Command::BuildDict(a) => build_dict(a, out),
        Command::Train(a) => train(a, exec, out),
        Command::Annotate(a) => annotate(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, exec, out),
        Command::Serve(a) => serve(a),
        Command::Upsert(a) => upsert(a, exec, out),
    }
}
