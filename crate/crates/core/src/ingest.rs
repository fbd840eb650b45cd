//! Knowledge-base ingestion.
//!
//! Dumps are read one entity per line, in the layout of the Wikidata JSON
//! entity dumps: an optional `[` first line, entity objects separated by
//! `,\n`, an optional `]` last line. Lines are parsed in fixed-size batches
//! so memory stays bounded whatever the dump size.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::{self, Deserializer, IgnoredAny, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::item::ItemId;
use crate::persist::Format;

pub const INSTANCE_OF: &str = "P31";
pub const SUBCLASS_OF: &str = "P279";

/// human, organization, geographical object
pub const DEFAULT_TYPE_ROOTS: [u64; 3] = [5, 43229, 618123];

const BUFFER_CAPACITY: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: ItemId,
    pub labels: BTreeMap<String, String>,
    pub aliases: BTreeMap<String, Vec<String>>,
    /// Kept for display; never indexed as surface forms.
    pub descriptions: BTreeMap<String, String>,
    /// Sorted, duplicate-free item values of statements and qualifiers.
    pub out_links: Vec<ItemId>,
    pub n_statements: u32,
    pub n_sitelinks: u32,
    /// Sorted instance-of values.
    pub types: Vec<ItemId>,
    /// Sorted subclass-of values.
    pub subclass_of: Vec<ItemId>,
}

impl ItemRecord {
    pub fn new(id: ItemId) -> Self {
        ItemRecord {
            id,
            labels: BTreeMap::new(),
            aliases: BTreeMap::new(),
            descriptions: BTreeMap::new(),
            out_links: Vec::new(),
            n_statements: 0,
            n_sitelinks: 0,
            types: Vec::new(),
            subclass_of: Vec::new(),
        }
    }

    /// Every label and alias in the selected languages.
    pub fn surface_forms<'a>(&'a self, languages: &'a Languages) -> impl Iterator<Item = &'a str> + 'a {
        let labels = self
            .labels
            .iter()
            .filter(move |(lang, _)| languages.contains(lang))
            .map(|(_, v)| v.as_str());
        let aliases = self
            .aliases
            .iter()
            .filter(move |(lang, _)| languages.contains(lang))
            .flat_map(|(_, vs)| vs.iter().map(String::as_str));
        labels.chain(aliases)
    }

    pub fn retain_languages(&mut self, languages: &Languages) {
        self.labels.retain(|l, _| languages.contains(l));
        self.aliases.retain(|l, _| languages.contains(l));
        self.descriptions.retain(|l, _| languages.contains(l));
    }
}

/// Language selection for labels and aliases.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Languages {
    #[default]
    All,
    Only(BTreeSet<String>),
}

impl Languages {
    /// Parses a comma-separated list; an empty list or `*` selects all.
    pub fn parse(list: &str) -> Self {
        let set: BTreeSet<String> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        if set.is_empty() || set.contains("*") {
            Languages::All
        } else {
            Languages::Only(set)
        }
    }

    pub fn contains(&self, lang: &str) -> bool {
        match self {
            Languages::All => true,
            Languages::Only(set) => set.contains(lang),
        }
    }
}

// ---------------------------------------------------------------------------
// Dump entity format

#[derive(Deserialize)]
struct RawEntity {
    #[serde(rename = "type")]
    kind: String,
    id: String,
    #[serde(default, deserialize_with = "map_or_empty_seq")]
    labels: BTreeMap<String, RawTerm>,
    #[serde(default, deserialize_with = "map_or_empty_seq")]
    descriptions: BTreeMap<String, RawTerm>,
    #[serde(default, deserialize_with = "map_or_empty_seq")]
    aliases: BTreeMap<String, Vec<RawTerm>>,
    #[serde(default, deserialize_with = "map_or_empty_seq")]
    claims: BTreeMap<String, Vec<RawStatement>>,
    #[serde(default, deserialize_with = "count_entries")]
    sitelinks: u32,
}

#[derive(Deserialize)]
struct RawTerm {
    value: String,
}

#[derive(Deserialize)]
struct RawStatement {
    mainsnak: RawSnak,
    #[serde(default, deserialize_with = "map_or_empty_seq")]
    qualifiers: BTreeMap<String, Vec<RawSnak>>,
}

#[derive(Deserialize)]
struct RawSnak {
    #[serde(default)]
    datavalue: Option<RawDataValue>,
}

#[derive(Deserialize)]
struct RawDataValue {
    #[serde(rename = "type")]
    kind: String,
    value: serde_json::Value,
}

impl RawSnak {
    fn item_value(&self) -> Option<ItemId> {
        let dv = self.datavalue.as_ref()?;
        if dv.kind != "wikibase-entityid" {
            return None;
        }
        let obj = dv.value.as_object()?;
        match obj.get("entity-type").and_then(|v| v.as_str()) {
            Some("item") | None => {}
            Some(_) => return None,
        }
        if let Some(id) = obj.get("id").and_then(|v| v.as_str()) {
            return id.parse().ok();
        }
        obj.get("numeric-id").and_then(|v| v.as_u64()).and_then(ItemId::new)
    }
}

/// Empty maps appear as `[]` in the dumps.
fn map_or_empty_seq<'de, D, V>(d: D) -> std::result::Result<BTreeMap<String, V>, D::Error>
where
    D: Deserializer<'de>,
    V: Deserialize<'de>,
{
    struct MapVisitor<V>(std::marker::PhantomData<V>);

    impl<'de, V: Deserialize<'de>> Visitor<'de> for MapVisitor<V> {
        type Value = BTreeMap<String, V>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map or an empty array")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((k, v)) = map.next_entry()? {
                out.insert(k, v);
            }
            Ok(out)
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
            if seq.next_element::<IgnoredAny>()?.is_some() {
                return Err(de::Error::custom("expected an empty array"));
            }
            Ok(BTreeMap::new())
        }

        fn visit_unit<E: de::Error>(self) -> std::result::Result<Self::Value, E> {
            Ok(BTreeMap::new())
        }
    }

    d.deserialize_any(MapVisitor(std::marker::PhantomData))
}

fn count_entries<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    struct CountVisitor;

    impl<'de> Visitor<'de> for CountVisitor {
        type Value = u32;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map or an empty array")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<u32, A::Error> {
            let mut n = 0;
            while map.next_entry::<IgnoredAny, IgnoredAny>()?.is_some() {
                n += 1;
            }
            Ok(n)
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<u32, A::Error> {
            let mut n = 0;
            while seq.next_element::<IgnoredAny>()?.is_some() {
                n += 1;
            }
            Ok(n)
        }

        fn visit_unit<E: de::Error>(self) -> std::result::Result<u32, E> {
            Ok(0)
        }
    }

    d.deserialize_any(CountVisitor)
}

fn sorted_dedup(mut v: Vec<ItemId>) -> Vec<ItemId> {
    v.sort_unstable();
    v.dedup();
    v
}

impl TryFrom<RawEntity> for ItemRecord {
    type Error = String;

    fn try_from(raw: RawEntity) -> std::result::Result<Self, String> {
        let id: ItemId = raw.id.parse().map_err(|e: Error| e.to_string())?;
        let mut rec = ItemRecord::new(id);
        rec.labels = raw.labels.into_iter().map(|(l, t)| (l, t.value)).collect();
        rec.descriptions = raw.descriptions.into_iter().map(|(l, t)| (l, t.value)).collect();
        for (lang, terms) in raw.aliases {
            let mut seen = HashSet::new();
            let list: Vec<String> = terms
                .into_iter()
                .map(|t| t.value)
                .filter(|v| seen.insert(v.clone()))
                .collect();
            if !list.is_empty() {
                rec.aliases.insert(lang, list);
            }
        }

        let mut links = Vec::new();
        let mut types = Vec::new();
        let mut parents = Vec::new();
        let mut n_statements = 0u32;
        for (property, statements) in &raw.claims {
            for st in statements {
                n_statements += 1;
                if let Some(v) = st.mainsnak.item_value() {
                    links.push(v);
                    match property.as_str() {
                        INSTANCE_OF => types.push(v),
                        SUBCLASS_OF => parents.push(v),
                        _ => {}
                    }
                }
                links.extend(st.qualifiers.values().flatten().filter_map(RawSnak::item_value));
            }
        }
        rec.out_links = sorted_dedup(links);
        rec.types = sorted_dedup(types);
        rec.subclass_of = sorted_dedup(parents);
        rec.n_statements = n_statements;
        rec.n_sitelinks = raw.sitelinks;
        Ok(rec)
    }
}

/// Strips the array punctuation around one dump line. `None` for lines that
/// carry no entity.
fn entity_payload(line: &[u8]) -> Option<&[u8]> {
    let mut s = line.trim_ascii();
    if let Some(rest) = s.strip_suffix(b",") {
        s = rest.trim_ascii_end();
    }
    if let Some(rest) = s.strip_prefix(b"[") {
        s = rest.trim_ascii_start();
    }
    // An entity object always ends with `}`, so a trailing `]` is array syntax.
    if let Some(rest) = s.strip_suffix(b"]") {
        s = rest.trim_ascii_end();
    }
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

/// Parses one dump line. Returns `Ok(None)` for non-item entities
/// (properties, lexemes) and for array punctuation lines.
pub fn parse_item_line(line: &[u8], offset: u64) -> Result<Option<ItemRecord>> {
    let Some(payload) = entity_payload(line) else {
        return Ok(None);
    };
    let raw: RawEntity = serde_json::from_slice(payload).map_err(|e| Error::Parse {
        offset,
        message: e.to_string(),
    })?;
    if raw.kind != "item" {
        return Ok(None);
    }
    ItemRecord::try_from(raw)
        .map(Some)
        .map_err(|message| Error::Parse { offset, message })
}

/// Parses one entity given as JSON text.
pub fn parse_item(json: &str) -> Result<ItemRecord> {
    parse_item_line(json.as_bytes(), 0)?.ok_or_else(|| Error::Parse {
        offset: 0,
        message: "not an item entity".to_string(),
    })
}

/// Opens a dump, transparently decompressing `.gz` files.
pub fn open_dump(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|source| Error::IoPath {
        path: path.to_path_buf(),
        source,
    })?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    Ok(if gz {
        let decoder = flate2::read::MultiGzDecoder::new(BufReader::with_capacity(BUFFER_CAPACITY, file));
        Box::new(BufReader::with_capacity(BUFFER_CAPACITY, decoder))
    } else {
        Box::new(BufReader::with_capacity(BUFFER_CAPACITY, file))
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub lines: u64,
    pub items: u64,
    pub malformed: u64,
}

/// Streams every item of a dump into `sink`, in dump order.
///
/// Lines are read `batch_size` at a time and parsed under `exec`. Malformed
/// lines are logged and skipped; only I/O errors abort the stream.
pub fn stream_items<R, F>(mut reader: R, batch_size: usize, exec: Exec, mut sink: F) -> Result<IngestStats>
where
    R: BufRead,
    F: FnMut(ItemRecord),
{
    let batch_size = batch_size.max(1);
    let mut stats = IngestStats::default();
    let mut offset = 0u64;
    let mut batch: Vec<(u64, Vec<u8>)> = Vec::with_capacity(batch_size);
    let mut spare: Vec<Vec<u8>> = Vec::new();
    loop {
        batch.clear();
        while batch.len() < batch_size {
            let mut buf = spare.pop().unwrap_or_default();
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            if n == 0 {
                break;
            }
            batch.push((offset, buf));
            offset += n as u64;
        }
        if batch.is_empty() {
            return Ok(stats);
        }
        stats.lines += batch.len() as u64;
        let parsed = exec.map(&batch, |(off, line)| parse_item_line(line, *off));
        for result in parsed {
            match result {
                Ok(Some(rec)) => {
                    stats.items += 1;
                    sink(rec);
                }
                Ok(None) => {}
                Err(e) => {
                    stats.malformed += 1;
                    log::warn!("skipping {e}");
                }
            }
        }
        spare.extend(batch.drain(..).map(|(_, buf)| buf));
    }
}

// ---------------------------------------------------------------------------
// Type restriction

/// Reflexive-transitive closure of the roots under inverse subclass-of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeClosure {
    pub roots: BTreeSet<ItemId>,
    pub members: HashSet<ItemId>,
}

impl TypeClosure {
    /// `edges` are `(child, parent)` subclass-of pairs. Cycles are fine.
    pub fn build(edges: &[(ItemId, ItemId)], roots: &BTreeSet<ItemId>) -> TypeClosure {
        let mut children: HashMap<ItemId, Vec<ItemId>> = HashMap::new();
        for &(child, parent) in edges {
            children.entry(parent).or_default().push(child);
        }
        let mut members: HashSet<ItemId> = roots.iter().copied().collect();
        let mut queue: VecDeque<ItemId> = roots.iter().copied().collect();
        while let Some(class) = queue.pop_front() {
            for &child in children.get(&class).into_iter().flatten() {
                if members.insert(child) {
                    queue.push_back(child);
                }
            }
        }
        TypeClosure {
            roots: roots.clone(),
            members,
        }
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.members.contains(&id)
    }

    /// True iff one of the record's instance-of values is in the closure.
    pub fn admits(&self, rec: &ItemRecord) -> bool {
        rec.types.iter().any(|t| self.members.contains(t))
    }
}

pub fn default_type_roots() -> BTreeSet<ItemId> {
    DEFAULT_TYPE_ROOTS.iter().map(|&n| ItemId::from_raw(n)).collect()
}

pub fn filter_item(rec: &ItemRecord, closure: &TypeClosure) -> bool {
    closure.admits(rec)
}

// ---------------------------------------------------------------------------
// Record store

/// Read access to item records by id.
pub trait RecordAccess {
    fn record(&self, id: ItemId) -> Option<&ItemRecord>;

    fn links(&self, id: ItemId) -> &[ItemId] {
        self.record(id).map(|r| r.out_links.as_slice()).unwrap_or(&[])
    }
}

impl RecordAccess for HashMap<ItemId, ItemRecord> {
    fn record(&self, id: ItemId) -> Option<&ItemRecord> {
        self.get(&id)
    }
}

impl RecordAccess for BTreeMap<ItemId, ItemRecord> {
    fn record(&self, id: ItemId) -> Option<&ItemRecord> {
        self.get(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Inserted,
    Replaced,
    Unchanged,
}

pub(crate) const RECORDS_FORMAT: Format = Format {
    kind: "record store",
    magic: *b"NELREC\0\0",
    version: 1,
};

pub(crate) const GRAPH_FORMAT: Format = Format {
    kind: "link graph",
    magic: *b"NELGRPH\0",
    version: 1,
};

pub(crate) const CLOSURE_FORMAT: Format = Format {
    kind: "type closure",
    magic: *b"NELTYPE\0",
    version: 1,
};

pub const RECORDS_FILE: &str = "records.bin";
pub const GRAPH_FILE: &str = "graph.bin";
pub const CLOSURE_FILE: &str = "types.bin";

#[derive(Serialize, Deserialize)]
struct StoreFile {
    generation: u64,
    records: Vec<ItemRecord>,
}

/// Filtered item records keyed by id.
///
/// `generation` increases with every content change; artifacts built from
/// the store remember the generation they saw so staleness can be detected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordStore {
    records: BTreeMap<ItemId, ItemRecord>,
    generation: u64,
}

impl RecordStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = ItemRecord>) -> Self {
        let mut store = RecordStore::new();
        for rec in records {
            store.apply_upsert(rec);
        }
        store
    }

    /// Replaces any previous record with the same id.
    pub fn apply_upsert(&mut self, rec: ItemRecord) -> UpsertOutcome {
        let outcome = match self.records.get(&rec.id) {
            Some(old) if *old == rec => return UpsertOutcome::Unchanged,
            Some(_) => UpsertOutcome::Replaced,
            None => UpsertOutcome::Inserted,
        };
        self.records.insert(rec.id, rec);
        self.generation += 1;
        outcome
    }

    pub fn get(&self, id: ItemId) -> Option<&ItemRecord> {
        self.records.get(&id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemRecord> {
        self.records.values()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Whether an artifact built at `built_at` predates the current content.
    pub fn is_stale(&self, built_at: u64) -> bool {
        built_at != self.generation
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::IoPath {
            path: dir.to_path_buf(),
            source,
        })?;
        let file = StoreFile {
            generation: self.generation,
            records: self.records.values().cloned().collect(),
        };
        RECORDS_FORMAT.save(&dir.join(RECORDS_FILE), &file)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let file: StoreFile = RECORDS_FORMAT.load(&dir.join(RECORDS_FILE))?;
        Ok(RecordStore {
            records: file.records.into_iter().map(|r| (r.id, r)).collect(),
            generation: file.generation,
        })
    }
}

impl RecordAccess for RecordStore {
    fn record(&self, id: ItemId) -> Option<&ItemRecord> {
        self.records.get(&id)
    }
}

/// Adjacency of every item seen in a dump, filtered or not. PageRank runs
/// over this graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkGraph {
    pub nodes: Vec<(ItemId, Vec<ItemId>)>,
}

impl LinkGraph {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ItemRecord>) -> Self {
        LinkGraph {
            nodes: records.into_iter().map(|r| (r.id, r.out_links.clone())).collect(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        GRAPH_FORMAT.save(&dir.join(GRAPH_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        GRAPH_FORMAT.load(&dir.join(GRAPH_FILE))
    }

    /// Replaces the adjacency of `id`, adding the node if it is new.
    pub fn upsert(&mut self, id: ItemId, links: Vec<ItemId>) {
        match self.nodes.iter_mut().find(|(n, _)| *n == id) {
            Some(node) => node.1 = links,
            None => self.nodes.push((id, links)),
        }
    }
}

impl TypeClosure {
    pub fn save(&self, dir: &Path) -> Result<()> {
        CLOSURE_FORMAT.save(&dir.join(CLOSURE_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        CLOSURE_FORMAT.load(&dir.join(CLOSURE_FILE))
    }
}

#[derive(Debug, Clone)]
pub struct IndexOptions {
    pub languages: Languages,
    pub roots: BTreeSet<ItemId>,
    pub batch_size: usize,
    pub exec: Exec,
}

impl Default for IndexOptions {
    fn default() -> Self {
        IndexOptions {
            languages: Languages::All,
            roots: default_type_roots(),
            batch_size: 4096,
            exec: Exec::default(),
        }
    }
}

/// Output of [`index_dump`].
#[derive(Debug, Clone)]
pub struct Index {
    pub store: RecordStore,
    pub graph: LinkGraph,
    pub closure: TypeClosure,
    pub report: IndexReport,
}

impl Index {
    /// Writes store, graph and type closure into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.store.save(dir)?;
        self.graph.save(dir)?;
        self.closure.save(dir)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IndexReport {
    pub scanned: IngestStats,
    pub kept: usize,
    pub graph_nodes: usize,
}

/// Two passes over the dump: the first gathers subclass edges and the full
/// link graph, the second keeps the items whose type falls in the closure.
pub fn index_dump(path: &Path, opts: &IndexOptions) -> Result<Index> {
    let mut edges = Vec::new();
    let mut graph = LinkGraph::default();
    let scanned = stream_items(open_dump(path)?, opts.batch_size, opts.exec, |rec| {
        edges.extend(rec.subclass_of.iter().map(|&p| (rec.id, p)));
        graph.nodes.push((rec.id, rec.out_links));
    })?;
    let closure = TypeClosure::build(&edges, &opts.roots);
    log::info!(
        "{} items scanned, {} classes under the type roots",
        scanned.items,
        closure.members.len()
    );

    let mut store = RecordStore::new();
    stream_items(open_dump(path)?, opts.batch_size, opts.exec, |mut rec| {
        if closure.admits(&rec) {
            rec.retain_languages(&opts.languages);
            store.apply_upsert(rec);
        }
    })?;
    let report = IndexReport {
        scanned,
        kept: store.len(),
        graph_nodes: graph.nodes.len(),
    };
    Ok(Index {
        store,
        graph,
        closure,
        report,
    })
}
