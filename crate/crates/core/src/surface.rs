//! Case-sensitive surface-form dictionary and spotter.
//!
//! Labels and aliases are stored in an FST mapping each phrase to a postings
//! list of items. Spotting walks the FST from every token start and keeps the
//! longest phrase that also ends on a token boundary (leftmost-longest,
//! non-overlapping).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use fst::raw::Output;
use fst::Map;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{ItemRecord, Languages};
use crate::item::ItemId;
use crate::persist::Format;
use crate::tokenize::token_spans;

pub(crate) const FORMAT: Format = Format {
    kind: "surface dictionary",
    magic: *b"NELDICT\0",
    version: 1,
};

/// A mention candidate: `text[start..end]` is a dictionary phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spot {
    /// Byte offsets into the UTF-8 document.
    pub start: usize,
    pub end: usize,
    /// Character offsets, used for mention distances.
    pub char_start: usize,
    pub char_end: usize,
    pub phrase: String,
    pub candidates: Vec<ItemId>,
}

impl Spot {
    /// Characters strictly between two non-overlapping spots.
    pub fn char_gap(&self, other: &Spot) -> usize {
        if self.char_end <= other.char_start {
            other.char_start - self.char_end
        } else {
            self.char_start.saturating_sub(other.char_end)
        }
    }
}

#[derive(Clone)]
pub struct SurfaceDictionary {
    map: Map<Vec<u8>>,
    postings: Vec<Vec<ItemId>>,
    pub source_generation: Option<u64>,
}

impl std::fmt::Debug for SurfaceDictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurfaceDictionary")
            .field("phrases", &self.postings.len())
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct DictFile {
    fst: Vec<u8>,
    postings: Vec<Vec<ItemId>>,
    source_generation: Option<u64>,
}

impl SurfaceDictionary {
    /// Indexes every label and alias of `records` in the selected languages.
    /// Surrounding whitespace is trimmed; blank phrases are skipped.
    pub fn build<'a, I>(records: I, languages: &Languages) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ItemRecord>,
    {
        let mut entries: BTreeMap<String, BTreeSet<ItemId>> = BTreeMap::new();
        for rec in records {
            for phrase in rec.surface_forms(languages) {
                let phrase = phrase.trim();
                if !phrase.is_empty() {
                    entries.entry(phrase.to_string()).or_default().insert(rec.id);
                }
            }
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: BTreeMap<String, BTreeSet<ItemId>>) -> Result<Self> {
        let mut postings = Vec::with_capacity(entries.len());
        let mut keys = Vec::with_capacity(entries.len());
        for (phrase, ids) in entries {
            if phrase.is_empty() || ids.is_empty() {
                continue;
            }
            keys.push(phrase);
            postings.push(ids.into_iter().collect());
        }
        let map = Map::from_iter(keys.into_iter().enumerate().map(|(slot, k)| (k, slot as u64)))?;
        Ok(SurfaceDictionary {
            map,
            postings,
            source_generation: None,
        })
    }

    pub fn len(&self) -> usize {
        self.postings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postings.is_empty()
    }

    pub fn lookup(&self, phrase: &str) -> Option<&[ItemId]> {
        self.map.get(phrase).map(|slot| self.postings[slot as usize].as_slice())
    }

    /// All `(phrase, candidates)` pairs in byte order.
    pub fn entries(&self) -> Vec<(String, Vec<ItemId>)> {
        use fst::Streamer;
        let mut out = Vec::with_capacity(self.len());
        let mut stream = self.map.stream();
        while let Some((k, slot)) = stream.next() {
            out.push((
                String::from_utf8_lossy(k).into_owned(),
                self.postings[slot as usize].clone(),
            ));
        }
        out
    }

    /// Longest phrase starting at byte `from` and ending on a token end.
    fn longest_at(&self, bytes: &[u8], from: usize, is_end: &[bool]) -> Option<(usize, u64)> {
        let fst = self.map.as_fst();
        let mut node = fst.root();
        let mut out = Output::zero();
        let mut best = None;
        for (pos, &b) in bytes.iter().enumerate().skip(from) {
            let Some(i) = node.find_input(b) else { break };
            let t = node.transition(i);
            out = out.cat(t.out);
            node = fst.node(t.addr);
            if node.is_final() && is_end[pos + 1] {
                best = Some((pos + 1, out.cat(node.final_output()).value()));
            }
        }
        best
    }

    /// Finds leftmost-longest, non-overlapping, token-aligned matches.
    pub fn spot(&self, document: &str) -> Vec<Spot> {
        let bytes = document.as_bytes();
        let tokens = token_spans(document);
        let mut is_end = vec![false; bytes.len() + 1];
        for t in &tokens {
            is_end[t.end] = true;
        }

        let mut found: Vec<(usize, usize, u64)> = Vec::new();
        let mut covered_until = 0;
        for t in &tokens {
            if t.start < covered_until {
                continue;
            }
            if let Some((end, slot)) = self.longest_at(bytes, t.start, &is_end) {
                found.push((t.start, end, slot));
                covered_until = end;
            }
        }

        // byte -> char offsets, one forward pass since matches are sorted
        let mut spots = Vec::with_capacity(found.len());
        let mut chars = document.char_indices().map(|(b, _)| b).chain(std::iter::once(bytes.len()));
        let mut char_pos = 0usize;
        let mut next_byte = chars.next();
        let mut char_of = |byte: usize| {
            while let Some(b) = next_byte {
                if b >= byte {
                    break;
                }
                char_pos += 1;
                next_byte = chars.next();
            }
            char_pos
        };
        for (start, end, slot) in found {
            let char_start = char_of(start);
            let char_end = char_of(end);
            spots.push(Spot {
                start,
                end,
                char_start,
                char_end,
                phrase: document[start..end].to_string(),
                candidates: self.postings[slot as usize].clone(),
            });
        }
        spots
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DictFile {
            fst: self.map.as_fst().as_bytes().to_vec(),
            postings: self.postings.clone(),
            source_generation: self.source_generation,
        };
        FORMAT.save(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DictFile = FORMAT.load(path)?;
        Ok(SurfaceDictionary {
            map: Map::new(file.fst)?,
            postings: file.postings,
            source_generation: file.source_generation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: u64) -> ItemId {
        ItemId::from_raw(n)
    }

    fn dict(entries: &[(&str, &[u64])]) -> SurfaceDictionary {
        let mut m: BTreeMap<String, BTreeSet<ItemId>> = BTreeMap::new();
        for (k, ids) in entries {
            m.entry(k.to_string()).or_default().extend(ids.iter().map(|&i| q(i)));
        }
        SurfaceDictionary::from_entries(m).unwrap()
    }

    fn labeled(id: u64, lang: &str, label: &str) -> ItemRecord {
        let mut r = ItemRecord::new(q(id));
        r.labels.insert(lang.into(), label.into());
        r
    }

    #[test]
    fn shared_labels_union() {
        let recs = [labeled(2368856, "en", "Curry"), labeled(5195194, "en", "Curry")];
        let d = SurfaceDictionary::build(&recs, &Languages::All).unwrap();
        assert_eq!(d.lookup("Curry").unwrap(), &[q(2368856), q(5195194)]);
    }

    #[test]
    fn case_sensitive_and_language_filtered() {
        let mut ap = labeled(40469, "en", "Associated Press");
        ap.aliases.insert("fr".into(), vec!["AP France".into()]);
        let d = SurfaceDictionary::build([&ap], &Languages::parse("en")).unwrap();
        assert!(d.lookup("Associated Press").is_some());
        assert!(d.lookup("associated press").is_none());
        assert!(d.lookup("AP France").is_none());
    }

    #[test]
    fn empty_build() {
        let d = SurfaceDictionary::build(std::iter::empty(), &Languages::All).unwrap();
        assert!(d.is_empty());
        assert!(d.spot("Anything at all").is_empty());
    }

    #[test]
    fn blank_phrases_skipped() {
        let recs = [labeled(1, "en", "  "), labeled(2, "en", " Paris ")];
        let d = SurfaceDictionary::build(&recs, &Languages::All).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.lookup("Paris").is_some());
    }

    #[test]
    fn spots_example_sentence() {
        let d = dict(&[("Associated Press", &[40469]), ("Julie Pace", &[34666768]), ("Washington", &[61, 1223])]);
        let text = "Associated Press writer Julie Pace contributed from Washington.";
        let spots = d.spot(text);
        let phrases: Vec<&str> = spots.iter().map(|s| s.phrase.as_str()).collect();
        assert_eq!(phrases, ["Associated Press", "Julie Pace", "Washington"]);
        for s in &spots {
            assert_eq!(&text[s.start..s.end], s.phrase);
        }
        assert_eq!(spots[2].candidates, vec![q(61), q(1223)]);
    }

    #[test]
    fn longest_match_wins() {
        let d = dict(&[("New York", &[1]), ("New York City", &[2])]);
        let spots = d.spot("New York City");
        assert_eq!(spots.len(), 1);
        assert_eq!(spots[0].phrase, "New York City");
        let spots = d.spot("New York Cityscape");
        assert_eq!(spots[0].phrase, "New York");
    }

    #[test]
    fn no_mid_token_matches() {
        let d = dict(&[("Paris", &[90])]);
        assert!(d.spot("Parisian cafes").is_empty());
        assert!(d.spot("SParis").is_empty());
        assert_eq!(d.spot("(Paris)").len(), 1);
        assert!(d.spot("").is_empty());
    }

    #[test]
    fn char_offsets_for_multibyte_text() {
        let d = dict(&[("Zürich", &[72]), ("Genève", &[71])]);
        let text = "Zürich – Genève";
        let spots = d.spot(text);
        assert_eq!(spots.len(), 2);
        assert_eq!((spots[0].char_start, spots[0].char_end), (0, 6));
        assert_eq!((spots[1].char_start, spots[1].char_end), (9, 15));
        assert_eq!(spots[0].char_gap(&spots[1]), 3);
        assert_eq!(spots[1].char_gap(&spots[0]), 3);
        assert_eq!(&text[spots[1].start..spots[1].end], "Genève");
    }

    #[test]
    fn round_trips_on_disk() {
        let d = dict(&[("A", &[1]), ("A B", &[2, 3])]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.bin");
        d.save(&path).unwrap();
        let back = SurfaceDictionary::load(&path).unwrap();
        assert_eq!(back.entries(), d.entries());
    }

    proptest! {
        #[test]
        fn spots_are_sorted_disjoint_exact_keys(
            keys in prop::collection::vec("[AB][ab]{0,2}( [AB][ab]{0,2}){0,2}", 1..8),
            words in prop::collection::vec("[AB][ab]{0,2}|[.,]|x", 0..30),
        ) {
            let entries: Vec<(String, u64)> = keys.iter().enumerate().map(|(i, k)| (k.clone(), i as u64 + 1)).collect();
            let mut m: BTreeMap<String, BTreeSet<ItemId>> = BTreeMap::new();
            for (k, i) in &entries {
                m.entry(k.clone()).or_default().insert(q(*i));
            }
            let d = SurfaceDictionary::from_entries(m).unwrap();
            let text = words.join(" ");
            let spots = d.spot(&text);
            prop_assert_eq!(&spots, &d.spot(&text));
            let toks = token_spans(&text);
            for w in spots.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
            for s in &spots {
                prop_assert!(s.start < s.end && s.end <= text.len());
                prop_assert_eq!(&text[s.start..s.end], s.phrase.as_str());
                prop_assert_eq!(d.lookup(&s.phrase).unwrap(), s.candidates.as_slice());
                prop_assert!(toks.iter().any(|t| t.start == s.start));
                prop_assert!(toks.iter().any(|t| t.end == s.end));
            }
        }
    }
}
