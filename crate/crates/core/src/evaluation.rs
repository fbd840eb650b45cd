//! Gold datasets and InKB scoring under weak annotation matching.
//!
//! Gold format, one JSON document per line:
//!
//! ```json
//! {"text": "...", "gold": [{"start": 0, "end": 5, "qid": "Q1"}, {"start": 9, "end": 12, "qid": null}]}
//! ```
//!
//! Offsets are UTF-8 byte offsets; `null` marks an out-of-KB mention.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::item::{qid_string, ItemId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSpan {
    pub start: usize,
    pub end: usize,
    /// `None` for mentions of things outside the knowledge base.
    #[serde(with = "qid_string::option", default)]
    pub qid: Option<ItemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldDocument {
    pub text: String,
    #[serde(default)]
    pub gold: Vec<GoldSpan>,
}

impl GoldDocument {
    /// Sorts the spans and checks bounds, UTF-8 boundaries and overlaps.
    pub fn validate(mut self, index: usize) -> Result<Self> {
        let err = |message: String| Error::Dataset { document: index, message };
        self.gold.sort_by_key(|g| (g.start, g.end));
        for g in &self.gold {
            if g.start >= g.end {
                return Err(err(format!("empty or inverted span {}..{}", g.start, g.end)));
            }
            if g.end > self.text.len() {
                return Err(err(format!("span {}..{} exceeds text length {}", g.start, g.end, self.text.len())));
            }
            if !self.text.is_char_boundary(g.start) || !self.text.is_char_boundary(g.end) {
                return Err(err(format!("span {}..{} splits a UTF-8 character", g.start, g.end)));
            }
        }
        for w in self.gold.windows(2) {
            if w[1].start < w[0].end {
                return Err(err(format!(
                    "spans {}..{} and {}..{} overlap",
                    w[0].start, w[0].end, w[1].start, w[1].end
                )));
            }
        }
        Ok(self)
    }

    pub fn in_kb(&self) -> impl Iterator<Item = (usize, usize, ItemId)> + '_ {
        self.gold.iter().filter_map(|g| g.qid.map(|q| (g.start, g.end, q)))
    }
}

pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<GoldDocument>> {
    let mut docs = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let index = docs.len();
        let doc: GoldDocument = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            document: index,
            message: e.to_string(),
        })?;
        docs.push(doc.validate(index)?);
    }
    Ok(docs)
}

pub fn load_dataset(path: &Path) -> Result<Vec<GoldDocument>> {
    let file = File::open(path).map_err(|source| Error::IoPath {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(BufReader::new(file))
}

/// A predicted link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub start: usize,
    pub end: usize,
    #[serde(with = "qid_string")]
    pub qid: ItemId,
}

pub fn spans_overlap(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Spans share at least one byte and the entities agree.
pub fn weak_match(pred: (usize, usize, ItemId), gold: (usize, usize, ItemId)) -> bool {
    pred.2 == gold.2 && spans_overlap((pred.0, pred.1), (gold.0, gold.1))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    /// Zero when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when there is no gold.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }

    fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Greedy one-to-one weak matching of one document's predictions, taken in
/// document order, against its in-KB gold.
pub fn match_document(predictions: &[Prediction], gold: &[GoldSpan]) -> Counts {
    let gold: Vec<(usize, usize, ItemId)> = gold.iter().filter_map(|g| g.qid.map(|q| (g.start, g.end, q))).collect();
    let mut preds = predictions.to_vec();
    preds.sort_by_key(|p| (p.start, p.end, p.qid));
    let mut used = vec![false; gold.len()];
    let mut counts = Counts::default();
    for p in &preds {
        let hit = gold
            .iter()
            .enumerate()
            .find(|(i, g)| !used[*i] && weak_match((p.start, p.end, p.qid), **g));
        match hit {
            Some((i, _)) => {
                used[i] = true;
                counts.tp += 1;
            }
            None => counts.fp += 1,
        }
    }
    counts.fn_ = used.iter().filter(|u| !**u).count();
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_document: Vec<Counts>,
}

impl EvalReport {
    /// Micro scores pool the counts; macro scores average per-document
    /// values, where a document with neither gold nor predictions scores 1.
    pub fn from_counts(per_document: Vec<Counts>) -> EvalReport {
        let total: Counts = per_document.iter().copied().sum();
        let n = per_document.len();
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for c in &per_document {
            if c.is_empty() {
                p += 1.0;
                r += 1.0;
                f += 1.0;
            } else {
                p += c.precision();
                r += c.recall();
                f += c.f1();
            }
        }
        let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
        EvalReport {
            micro_precision: total.precision(),
            micro_recall: total.recall(),
            micro_f1: total.f1(),
            macro_precision: mean(p),
            macro_recall: mean(r),
            macro_f1: mean(f),
            per_document,
        }
    }

    pub fn totals(&self) -> Counts {
        self.per_document.iter().copied().sum()
    }
}

pub trait Annotator {
    fn predict(&self, text: &str) -> Result<Vec<Prediction>>;
}

/// Runs the annotator over every document and scores the result.
pub fn evaluate<A: Annotator + Sync>(annotator: &A, dataset: &[GoldDocument], exec: Exec) -> Result<EvalReport> {
    let per_document = exec
        .map(dataset, |doc| {
            annotator
                .predict(&doc.text)
                .map(|preds| match_document(&preds, &doc.gold))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_counts(per_document))
}
