//! Trains on the synthetic benchmark and reports held-out scores for the
//! full model and the popularity-only baseline.
//!
//! usage: synthetic_benchmark [seed] [beta] [eta] [k] [grid]

use nel_core::classifier::{self, Grid, ModelParams, TrainConfig};
use nel_core::evaluation::{evaluate, Annotator};
use nel_core::semantics::SimilarityParams;
use nel_core::synthetic::{SyntheticConfig, SyntheticWorld};
use nel_core::{Exec, Linker};

fn main() -> nel_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let seed = arg(0, 42.0) as u64;
    let similarity = SimilarityParams {
        beta: arg(1, 0.5),
        eta: arg(2, 0.01),
        max_distance: 200,
    };
    let k = arg(3, 2.0) as usize;
    let grid = args.get(4).map(|s| s == "grid").unwrap_or(false);

    let world = SyntheticWorld::generate(&SyntheticConfig { seed, ..Default::default() });
    let (train, test) = world.documents.split_at(150);
    let heavy = test.iter().filter(|d| world.is_ambiguity_heavy(d)).count();
    println!("held-out documents: {} ({} ambiguity-heavy)", test.len(), heavy);

    for (name, k) in [("full", k), ("baseline", 0)] {
        let config = TrainConfig {
            params: ModelParams { similarity, k, ..Default::default() },
            grid: (grid && k > 0).then(|| Grid {
                ks: vec![1, 2, 3],
                ..Default::default()
            }),
            ..Default::default()
        };
        let started = std::time::Instant::now();
        let resources = world.resources(Exec::Parallel)?;
        let (model, report) = classifier::train(train, &resources, &config)?;
        let linker = Linker::new(resources, model);
        let eval = evaluate(&linker, test, Exec::Parallel)?;
        println!(
            "{name:8} k={k} vertices={} positives={} micro P/R/F1 {:.4}/{:.4}/{:.4} macro F1 {:.4} ({:.1?})",
            report.vertices, report.positives, eval.micro_precision, eval.micro_recall, eval.micro_f1, eval.macro_f1,
            started.elapsed()
        );
        // misses by kind of gold entity
        let mut missed = std::collections::BTreeMap::<&str, (usize, usize)>::new();
        for doc in test {
            let preds = linker.predict(&doc.text)?;
            for g in &doc.gold {
                let q = g.qid.expect("planted gold is in the KB");
                let kind = match world.ambiguous_groups.iter().find(|grp| grp.contains(&q)) {
                    None => "unique",
                    Some(grp) if grp[0] == q => "head",
                    Some(_) => "rare",
                };
                let hit = preds.iter().any(|p| p.qid == q && p.start < g.end && g.start < p.end);
                let e = missed.entry(kind).or_default();
                e.0 += usize::from(!hit);
                e.1 += 1;
            }
        }
        println!("         misses {missed:?}");
    }
    Ok(())
}
