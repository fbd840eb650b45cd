use nel_core::classifier::{self, ModelParams, TrainConfig};
use nel_core::evaluation::evaluate;
use nel_core::synthetic::{SyntheticConfig, SyntheticWorld};
use nel_core::{Exec, LinearModel, Linker, SimilarityParams};

fn trained(world: &SyntheticWorld, k: usize) -> Linker {
    let resources = world.resources(Exec::Parallel).unwrap();
    let config = TrainConfig {
        params: ModelParams {
            similarity: SimilarityParams {
                beta: 0.5,
                eta: 0.01,
                max_distance: 200,
            },
            k,
            ..Default::default()
        },
        ..Default::default()
    };
    let (model, report) = classifier::train(&world.documents[..60], &resources, &config).unwrap();
    assert_eq!(report.unreachable, 0);
    Linker::new(resources, model)
}

fn small_world() -> SyntheticWorld {
    SyntheticWorld::generate(&SyntheticConfig {
        items: 200,
        clusters: 8,
        documents: 80,
        seed: 21,
        ..Default::default()
    })
}

#[test]
fn annotations_are_well_formed() {
    let world = small_world();
    let linker = trained(&world, 2);
    for doc in &world.documents[60..] {
        let anns = linker.annotate(&doc.text).unwrap();
        for w in anns.windows(2) {
            assert!(w[0].end <= w[1].start, "sorted and disjoint");
        }
        for a in &anns {
            assert!(doc.text.is_char_boundary(a.start) && doc.text.is_char_boundary(a.end));
            let top = &a.candidates[0];
            assert_eq!(top.qid, a.qid);
            assert_eq!(top.score, a.score);
            assert!(a.score > linker.model.params.threshold);
            assert!(a.candidates.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }
}

#[test]
fn batch_policies_agree() {
    let world = small_world();
    let linker = trained(&world, 2);
    let texts: Vec<&str> = world.documents.iter().map(|d| d.text.as_str()).collect();
    let seq = linker.annotate_batch(&texts, Exec::Sequential).unwrap();
    let par = linker.annotate_batch(&texts, Exec::Parallel).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn propagation_beats_local_features() {
    let world = small_world();
    let test = &world.documents[60..];
    let full = evaluate(&trained(&world, 3), test, Exec::Parallel).unwrap();
    let local = evaluate(&trained(&world, 0), test, Exec::Parallel).unwrap();
    assert!(full.micro_f1 > local.micro_f1, "{} vs {}", full.micro_f1, local.micro_f1);
}

#[test]
fn saved_model_annotates_identically() {
    let world = small_world();
    let linker = trained(&world, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    linker.model.save(&path).unwrap();
    let reloaded = Linker::new(world.resources(Exec::Sequential).unwrap(), LinearModel::load(&path).unwrap());
    for doc in &world.documents[60..] {
        assert_eq!(linker.annotate_json(&doc.text).unwrap(), reloaded.annotate_json(&doc.text).unwrap());
    }
}

#[test]
fn text_without_spots() {
    let world = small_world();
    let linker = trained(&world, 2);
    assert!(linker.annotate("").unwrap().is_empty());
    assert_eq!(
        linker.annotate_json("nothing here matches").unwrap(),
        r#"{"text":"nothing here matches","annotations":[]}"#
    );
}
