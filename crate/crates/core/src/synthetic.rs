//! Seeded synthetic knowledge bases and annotated corpora.
//!
//! Items live in topical clusters and link mostly within their cluster.
//! Labels are shared across clusters with Zipf-distributed ambiguity, and in
//! each ambiguous group one "head" sense is much more popular than the rest.
//! Documents mention entities of a single cluster and prefer the less
//! popular senses, so popularity alone resolves ambiguity badly while
//! neighborhood coherence resolves it well.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::classifier::Resources;
use crate::error::Result;
use crate::evaluation::{GoldDocument, GoldSpan};
use crate::exec::Exec;
use crate::ingest::{default_type_roots, ItemRecord, Languages, RecordStore, INSTANCE_OF, SUBCLASS_OF};
use crate::item::ItemId;
use crate::language_model::UnigramLm;
use crate::pagerank::{compute_pagerank, PageRankParams};
use crate::surface::SurfaceDictionary;

/// Property used for generic item-valued statements in generated dumps.
const RELATED_TO: &str = "P1327";
/// Property used for string statements in generated dumps.
const NAME_STRING: &str = "P1448";

const FIRST_ITEM: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub items: usize,
    pub clusters: usize,
    pub documents: usize,
    pub min_mentions: usize,
    pub max_mentions: usize,
    /// Group sizes `g` are drawn with probability proportional to `g^-s`.
    pub zipf_exponent: f64,
    pub max_ambiguity: usize,
    pub links_per_item: usize,
    /// Chance that a mention slot is filled by an ambiguous non-head sense
    /// when one is available in the cluster.
    pub rare_sense_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            items: 500,
            clusters: 20,
            documents: 200,
            min_mentions: 6,
            max_mentions: 9,
            zipf_exponent: 1.2,
            max_ambiguity: 6,
            links_per_item: 10,
            rare_sense_rate: 0.6,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub records: Vec<ItemRecord>,
    pub documents: Vec<GoldDocument>,
    pub cluster_of: BTreeMap<ItemId, usize>,
    /// Label groups with more than one item; the first id is the head sense.
    pub ambiguous_groups: Vec<Vec<ItemId>>,
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ra", "ven", "tor", "li", "sa", "dor", "gan", "bel", "ri", "zo", "nu", "pe", "ta", "mar",
    "el", "os", "qui", "fen", "ho", "jun", "wex",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn fresh_name(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let mut word = |n: usize| {
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            capitalize(&w)
        };
        let name = format!("{} {}", word(2), word(3));
        if used.insert(name.clone()) {
            return name;
        }
    }
}

impl SyntheticWorld {
    pub fn generate(cfg: &SyntheticConfig) -> SyntheticWorld {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = cfg.items;
        let clusters = cfg.clusters.max(1);
        let roots: Vec<ItemId> = default_type_roots().into_iter().collect();
        let id_of = |i: usize| ItemId::from_raw(FIRST_ITEM + i as u64);
        let cluster = |i: usize| i % clusters;
        let members: Vec<Vec<usize>> = (0..clusters).map(|c| (0..n).filter(|&i| cluster(i) == c).collect()).collect();

        // label groups
        let weights: Vec<f64> = (1..=cfg.max_ambiguity.max(1)).map(|g| (g as f64).powf(-cfg.zipf_exponent)).collect();
        let sizes = WeightedIndex::new(&weights).expect("positive weights");
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut assigned = vec![false; n];
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            if assigned[i] {
                continue;
            }
            let want = sizes.sample(&mut rng) + 1;
            let mut group = vec![i];
            assigned[i] = true;
            let mut used_clusters: HashSet<usize> = [cluster(i)].into();
            for &j in &order {
                if group.len() == want {
                    break;
                }
                if !assigned[j] && used_clusters.insert(cluster(j)) {
                    assigned[j] = true;
                    group.push(j);
                }
            }
            groups.push(group);
        }

        let mut used_names = HashSet::new();
        let mut label = vec![String::new(); n];
        let mut head = vec![true; n];
        for g in &groups {
            let name = fresh_name(&mut rng, &mut used_names);
            for (pos, &i) in g.iter().enumerate() {
                label[i] = name.clone();
                head[i] = pos == 0;
            }
        }

        // links: mostly inside the cluster, heads also collect inbound links
        let mut links: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for i in 0..n {
            let peers: Vec<usize> = members[cluster(i)].iter().copied().filter(|&j| j != i).collect();
            for &j in peers.choose_multiple(&mut rng, cfg.links_per_item.min(peers.len())) {
                links[i].insert(j);
            }
            if rng.gen_bool(0.1) {
                let j = rng.gen_range(0..n);
                if j != i {
                    links[i].insert(j);
                }
            }
        }
        for g in groups.iter().filter(|g| g.len() > 1) {
            let h = g[0];
            for _ in 0..12 {
                let j = rng.gen_range(0..n);
                if j != h {
                    links[j].insert(h);
                }
            }
        }

        let mut records = Vec::with_capacity(n);
        let mut cluster_of = BTreeMap::new();
        for i in 0..n {
            let id = id_of(i);
            let mut rec = ItemRecord::new(id);
            rec.labels.insert("en".into(), label[i].clone());
            rec.descriptions.insert("en".into(), format!("synthetic entity of topic {}", cluster(i)));
            let ty = roots[(i / clusters) % roots.len()];
            rec.types = vec![ty];
            let mut out: Vec<ItemId> = links[i].iter().map(|&j| id_of(j)).collect();
            out.push(ty);
            out.sort_unstable();
            out.dedup();
            let extra = rng.gen_range(0..4);
            rec.n_statements = (out.len() + extra) as u32;
            rec.n_sitelinks = if head[i] && groups_len(&groups, i) > 1 {
                rng.gen_range(25..60)
            } else {
                rng.gen_range(0..8)
            };
            rec.out_links = out;
            cluster_of.insert(id, cluster(i));
            records.push(rec);
        }

        let ambiguous_groups: Vec<Vec<ItemId>> = groups
            .iter()
            .filter(|g| g.len() > 1)
            .map(|g| g.iter().map(|&i| id_of(i)).collect())
            .collect();
        let rare: Vec<bool> = (0..n).map(|i| !head[i]).collect();

        let documents = (0..cfg.documents)
            .map(|_| {
                let c = rng.gen_range(0..clusters);
                let m = rng.gen_range(cfg.min_mentions..=cfg.max_mentions.max(cfg.min_mentions));
                let mut pool_rare: Vec<usize> = members[c].iter().copied().filter(|&i| rare[i]).collect();
                let mut pool_other: Vec<usize> = members[c].iter().copied().filter(|&i| !rare[i]).collect();
                pool_rare.shuffle(&mut rng);
                pool_other.shuffle(&mut rng);
                let mut chosen = Vec::with_capacity(m);
                while chosen.len() < m && !(pool_rare.is_empty() && pool_other.is_empty()) {
                    let take_rare = !pool_rare.is_empty() && (pool_other.is_empty() || rng.gen_bool(cfg.rare_sense_rate));
                    let next = if take_rare { pool_rare.pop() } else { pool_other.pop() };
                    chosen.extend(next);
                }
                write_document(&mut rng, &chosen.iter().map(|&i| (label[i].as_str(), id_of(i))).collect::<Vec<_>>())
            })
            .collect();

        SyntheticWorld {
            records,
            documents,
            cluster_of,
            ambiguous_groups,
        }
    }

    /// Dictionary, label language model and PageRank for the world.
    pub fn resources(&self, exec: Exec) -> Result<Resources> {
        let store = RecordStore::from_records(self.records.iter().cloned());
        let dict = SurfaceDictionary::build(store.iter(), &Languages::All)?;
        let labels: Vec<&str> = store.iter().flat_map(|r| r.labels.values().map(String::as_str)).collect();
        let lm = UnigramLm::train(&labels, 1.0, exec)?;
        let pagerank = compute_pagerank(
            store.iter().map(|r| (r.id, r.out_links.as_slice())),
            PageRankParams::default(),
            exec,
        )?;
        Ok(Resources {
            dict,
            lm,
            pagerank,
            records: store,
        })
    }

    /// Dump lines (Wikidata entity layout) for the world, including the type
    /// root classes.
    pub fn dump_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = default_type_roots()
            .into_iter()
            .map(|root| {
                let mut r = ItemRecord::new(root);
                r.labels.insert("en".into(), format!("class {root}"));
                entity_json(&r)
            })
            .collect();
        lines.extend(self.records.iter().map(entity_json));
        lines
    }

    /// True when the document mentions at least one non-head sense.
    pub fn is_ambiguity_heavy(&self, doc: &GoldDocument) -> bool {
        doc.gold.iter().filter_map(|g| g.qid).any(|q| {
            self.ambiguous_groups
                .iter()
                .any(|grp| grp[0] != q && grp.contains(&q))
        })
    }
}

fn groups_len(groups: &[Vec<usize>], i: usize) -> usize {
    groups.iter().find(|g| g.contains(&i)).map_or(1, Vec::len)
}

const TEMPLATES: [&str; 6] = [
    "{} met with {} near {}.",
    "According to the report, {} visited {} after talks with {}.",
    "{} and {} signed an agreement.",
    "Officials from {} praised {}.",
    "{} commented on the plans.",
    "Later, {} joined {} for a meeting with {} and {}.",
];

fn write_document(rng: &mut ChaCha8Rng, mentions: &[(&str, ItemId)]) -> GoldDocument {
    let mut text = String::new();
    let mut gold = Vec::new();
    let mut rest = mentions;
    while !rest.is_empty() {
        let fitting: Vec<&str> = TEMPLATES
            .iter()
            .copied()
            .filter(|t| t.matches("{}").count() <= rest.len())
            .collect();
        let template = fitting.choose(rng).expect("one-slot template always fits");
        if !text.is_empty() {
            text.push(' ');
        }
        let mut parts = template.split("{}");
        text.push_str(parts.next().unwrap_or(""));
        for part in parts {
            let (name, id) = rest[0];
            rest = &rest[1..];
            let start = text.len();
            text.push_str(name);
            gold.push(GoldSpan {
                start,
                end: text.len(),
                qid: Some(id),
            });
            text.push_str(part);
        }
    }
    GoldDocument { text, gold }
}

fn item_snak(property: &str, id: ItemId) -> Value {
    json!({
        "snaktype": "value",
        "property": property,
        "datavalue": {
            "value": {"entity-type": "item", "numeric-id": id.get(), "id": id.to_string()},
            "type": "wikibase-entityid"
        },
        "datatype": "wikibase-item"
    })
}

fn statement(snak: Value) -> Value {
    json!({"mainsnak": snak, "type": "statement", "rank": "normal"})
}

/// Renders a record as one dump line. Links that are neither types nor
/// superclasses become generic item statements; the remaining statement
/// count is filled with string statements.
pub fn entity_json(rec: &ItemRecord) -> String {
    let mut claims: BTreeMap<&str, Vec<Value>> = BTreeMap::new();
    let special: BTreeSet<ItemId> = rec.types.iter().chain(&rec.subclass_of).copied().collect();
    for &t in &rec.types {
        claims.entry(INSTANCE_OF).or_default().push(statement(item_snak(INSTANCE_OF, t)));
    }
    for &p in &rec.subclass_of {
        claims.entry(SUBCLASS_OF).or_default().push(statement(item_snak(SUBCLASS_OF, p)));
    }
    for &l in rec.out_links.iter().filter(|l| !special.contains(l)) {
        claims.entry(RELATED_TO).or_default().push(statement(item_snak(RELATED_TO, l)));
    }
    let used: usize = claims.values().map(Vec::len).sum();
    for k in used..rec.n_statements as usize {
        let snak = json!({
            "snaktype": "value",
            "property": NAME_STRING,
            "datavalue": {"value": format!("s{k}"), "type": "string"}
        });
        claims.entry(NAME_STRING).or_default().push(statement(snak));
    }
    let terms = |m: &BTreeMap<String, String>| -> Value {
        m.iter()
            .map(|(l, v)| (l.clone(), json!({"language": l, "value": v})))
            .collect::<serde_json::Map<_, _>>()
            .into()
    };
    let aliases: serde_json::Map<String, Value> = rec
        .aliases
        .iter()
        .map(|(l, vs)| {
            let list: Vec<Value> = vs.iter().map(|v| json!({"language": l, "value": v})).collect();
            (l.clone(), Value::Array(list))
        })
        .collect();
    let sitelinks: serde_json::Map<String, Value> = (0..rec.n_sitelinks)
        .map(|k| {
            let site = format!("site{k}wiki");
            (site.clone(), json!({"site": site, "title": format!("Page {}", rec.id)}))
        })
        .collect();
    json!({
        "type": "item",
        "id": rec.id.to_string(),
        "labels": terms(&rec.labels),
        "descriptions": terms(&rec.descriptions),
        "aliases": aliases,
        "claims": claims,
        "sitelinks": sitelinks,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_item;

    #[test]
    fn generation_is_seeded() {
        let cfg = SyntheticConfig {
            documents: 10,
            ..Default::default()
        };
        let a = SyntheticWorld::generate(&cfg);
        let b = SyntheticWorld::generate(&cfg);
        assert_eq!(a.records, b.records);
        assert_eq!(a.documents, b.documents);
        let c = SyntheticWorld::generate(&SyntheticConfig { seed: 7, ..cfg });
        assert_ne!(a.documents, c.documents);
    }

    #[test]
    fn world_shape() {
        let w = SyntheticWorld::generate(&SyntheticConfig::default());
        assert_eq!(w.records.len(), 500);
        assert_eq!(w.documents.len(), 200);
        let types: BTreeSet<ItemId> = w.records.iter().flat_map(|r| r.types.iter().copied()).collect();
        assert_eq!(types.len(), 3);
        assert!(!w.ambiguous_groups.is_empty());
        for g in &w.ambiguous_groups {
            let clusters: BTreeSet<usize> = g.iter().map(|id| w.cluster_of[id]).collect();
            assert_eq!(clusters.len(), g.len(), "senses of one label live in distinct clusters");
        }
        for d in &w.documents {
            for g in &d.gold {
                let rec = w.records.iter().find(|r| Some(r.id) == g.qid).unwrap();
                assert_eq!(&d.text[g.start..g.end], rec.labels["en"]);
            }
            assert!(d.clone().validate(0).is_ok());
        }
        assert!(w.documents.iter().filter(|d| w.is_ambiguity_heavy(d)).count() > 100);
    }

    #[test]
    fn dump_lines_parse_back() {
        let w = SyntheticWorld::generate(&SyntheticConfig {
            documents: 0,
            ..Default::default()
        });
        let lines = w.dump_lines();
        for (line, rec) in lines[3..].iter().zip(&w.records) {
            assert_eq!(&parse_item(line).unwrap(), rec);
        }
    }
}
