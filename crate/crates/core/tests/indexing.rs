use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use nel_core::ingest::{index_dump, IndexOptions, Languages, LinkGraph};
use nel_core::pagerank::{compute_pagerank, PageRankParams};
use nel_core::synthetic::entity_json;
use nel_core::{Exec, ItemId, ItemRecord, RecordStore, SurfaceDictionary, TypeClosure};

fn q(n: u64) -> ItemId {
    ItemId::from_raw(n)
}

fn item(id: u64, en: &str, types: &[u64], parents: &[u64], links: &[u64]) -> ItemRecord {
    let mut r = ItemRecord::new(q(id));
    r.labels.insert("en".into(), en.into());
    r.labels.insert("fr".into(), format!("{en} (fr)"));
    r.types = types.iter().map(|&t| q(t)).collect();
    r.subclass_of = parents.iter().map(|&p| q(p)).collect();
    let mut out: Vec<ItemId> = types.iter().chain(parents).chain(links).map(|&l| q(l)).collect();
    out.sort_unstable();
    out.dedup();
    r.n_statements = out.len() as u32;
    r.out_links = out;
    r
}

fn dump() -> Vec<ItemRecord> {
    vec![
        // class hierarchy: big city < city < human settlement (Q486972) < geographic location (Q618123)
        item(1637706, "big city", &[], &[515], &[]),
        item(515, "city", &[], &[486972], &[]),
        item(486972, "human settlement", &[], &[618123], &[]),
        item(618123, "geographical object", &[], &[], &[]),
        item(5, "human", &[], &[], &[]),
        // instances
        item(90, "Paris", &[1637706], &[], &[142]),
        item(142, "France", &[6256], &[], &[90]),
        item(7186, "Marie Curie", &[5], &[], &[90, 142]),
        item(11424, "A Film", &[11424], &[], &[7186]),
    ]
}

fn write_gz(path: &std::path::Path, records: &[ItemRecord]) {
    let mut enc = GzEncoder::new(std::fs::File::create(path).unwrap(), Compression::fast());
    writeln!(enc, "[").unwrap();
    for (i, r) in records.iter().enumerate() {
        let sep = if i + 1 < records.len() { "," } else { "" };
        writeln!(enc, "{}{sep}", entity_json(r)).unwrap();
    }
    writeln!(enc, "]").unwrap();
    enc.finish().unwrap();
}

#[test]
fn indexes_gzipped_dump_through_subclass_chain() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.json.gz");
    write_gz(&path, &dump());

    let opts = IndexOptions {
        languages: Languages::parse("en"),
        ..Default::default()
    };
    let index = index_dump(&path, &opts).unwrap();
    let kept: Vec<ItemId> = index.store.iter().map(|r| r.id).collect();
    // Paris via three subclass steps, Curie as a human; France's type is outside the closure
    assert_eq!(kept, vec![q(90), q(7186)]);
    assert_eq!(index.report.scanned.items, 9);
    assert_eq!(index.report.graph_nodes, 9);
    assert!(index.closure.contains(q(1637706)));
    assert!(!index.closure.contains(q(6256)));
    assert!(index.store.iter().all(|r| r.labels.keys().all(|l| l == "en")));

    let store_dir = dir.path().join("store");
    index.save(&store_dir).unwrap();
    assert_eq!(RecordStore::load(&store_dir).unwrap(), index.store);
    assert_eq!(LinkGraph::load(&store_dir).unwrap(), index.graph);
    assert_eq!(TypeClosure::load(&store_dir).unwrap(), index.closure);

    // the full graph ranks items that were filtered out
    let pr = compute_pagerank(
        index.graph.nodes.iter().map(|(id, l)| (*id, l.as_slice())),
        PageRankParams::default(),
        Exec::Sequential,
    )
    .unwrap();
    assert!(pr.get(q(142)).is_some());
    assert!((pr.total() - 1.0).abs() < 1e-9);
    assert!(pr.get(q(90)).unwrap() > pr.get(q(11424)).unwrap());
}

#[test]
fn parallel_and_sequential_indexing_agree() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.json.gz");
    write_gz(&path, &dump());
    let run = |exec| {
        let opts = IndexOptions {
            exec,
            batch_size: 2,
            ..Default::default()
        };
        index_dump(&path, &opts).unwrap()
    };
    let (a, b) = (run(Exec::Sequential), run(Exec::Parallel));
    assert_eq!(a.store, b.store);
    assert_eq!(a.graph, b.graph);
}

#[test]
fn dictionary_from_indexed_store() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.json.gz");
    write_gz(&path, &dump());
    let index = index_dump(&path, &IndexOptions::default()).unwrap();
    let dict = SurfaceDictionary::build(index.store.iter(), &Languages::All).unwrap();
    let spots = dict.spot("Marie Curie moved to Paris (fr) in 1891.");
    let found: Vec<(&str, Vec<ItemId>)> = spots.iter().map(|s| (s.phrase.as_str(), s.candidates.clone())).collect();
    assert_eq!(found, vec![("Marie Curie", vec![q(7186)]), ("Paris (fr)", vec![q(90)])]);
}
