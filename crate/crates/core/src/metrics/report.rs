use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::io::BufRead;
use std::str::FromStr;

use num_rational::BigRational;
use serde::Serialize;

use super::{
    graph_edge_f1, macro_f1, negation_metrics, ner_strict_f1, pos_accuracy, sentiment_graph_f1,
    span_token_f1, targeted_f1, Element, Matching, MetricError, Prf,
};
use crate::scalar::Scalar;
use crate::tasks::{
    parse_conllu, parse_conllu_ner, parse_negations, parse_sentence_labels, parse_sentiment_graphs,
    Polarity, SentenceInfo, TaskError,
};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pos,
    Ner,
    Sent,
    Fgsa,
    Neg,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Pos, Task::Ner, Task::Sent, Task::Fgsa, Task::Neg];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Pos => "pos",
            Task::Ner => "ner",
            Task::Sent => "sent",
            Task::Fgsa => "fgsa",
            Task::Neg => "neg",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}` (expected pos, ner, sent, fgsa or neg)"))
    }
}

/// A named input; the name appears in error messages.
pub struct EvalInput<R> {
    pub name: String,
    pub reader: R,
}

impl<R: BufRead> EvalInput<R> {
    pub fn new(name: impl Into<String>, reader: R) -> Self {
        EvalInput {
            name: name.into(),
            reader,
        }
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricEntry {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

impl MetricEntry {
    fn value(name: &str, value: f64) -> Self {
        MetricEntry {
            name: name.to_string(),
            value: round4(value),
            precision: None,
            recall: None,
        }
    }

    fn prf<S: Scalar>(name: &str, prf: &Prf<S>) -> Self {
        MetricEntry {
            name: name.to_string(),
            value: round4(prf.f1().to_f64()),
            precision: Some(round4(prf.precision().to_f64())),
            recall: Some(round4(prf.recall().to_f64())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEntry {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: u64,
    pub predicted: u64,
}

impl ClassEntry {
    fn new<S: Scalar>(label: &str, prf: &Prf<S>) -> Self {
        ClassEntry {
            label: label.to_string(),
            precision: round4(prf.precision().to_f64()),
            recall: round4(prf.recall().to_f64()),
            f1: round4(prf.f1().to_f64()),
            gold: prf.gold.to_f64() as u64,
            predicted: prf.predicted.to_f64() as u64,
        }
    }
}

/// Number of sentences and of scored items (tokens, entities, graphs, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceCounts {
    pub sentences: u64,
    pub gold: u64,
    pub predicted: u64,
}

/// Scores for one task; values are rounded to four decimals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matching: Option<Matching>,
    pub metrics: Vec<MetricEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_class: Vec<ClassEntry>,
    pub counts: InstanceCounts,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.value)
    }

    pub fn metric_names(&self) -> Vec<&str> {
        self.metrics.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn render_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        match self.matching {
            Some(m) => writeln!(out, "task {} ({m} matching)", self.task),
            None => writeln!(out, "task {}", self.task),
        }
        .unwrap();
        writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9}",
            "metric", "value", "precision", "recall"
        )
        .unwrap();
        for m in &self.metrics {
            writeln!(
                out,
                "{:<16} {:>9} {:>9} {:>9}",
                m.name,
                cell(Some(m.value)),
                cell(m.precision),
                cell(m.recall)
            )
            .unwrap();
        }
        if !self.per_class.is_empty() {
            writeln!(
                out,
                "{:<16} {:>9} {:>9} {:>9} {:>7} {:>7}",
                "class", "f1", "precision", "recall", "gold", "pred"
            )
            .unwrap();
            for c in &self.per_class {
                writeln!(
                    out,
                    "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>7}",
                    c.label, c.f1, c.precision, c.recall, c.gold, c.predicted
                )
                .unwrap();
            }
        }
        writeln!(
            out,
            "sentences {}, gold items {}, predicted items {}",
            self.counts.sentences, self.counts.gold, self.counts.predicted
        )
        .unwrap();
        out
    }
}

fn parse<T, R: BufRead>(
    input: EvalInput<R>,
    parser: impl FnOnce(R) -> Result<T, TaskError>,
) -> Result<(String, T), MetricError> {
    let EvalInput { name, reader } = input;
    match parser(reader) {
        Ok(v) => Ok((name, v)),
        Err(source) => Err(MetricError::Parse { file: name, source }),
    }
}

/// Pairs prediction records with gold records by `sent_id`, in gold order.
fn align_by_id<T, U>(
    gold: Vec<(String, T)>,
    pred: Vec<(String, U)>,
    gold_name: &str,
    pred_name: &str,
) -> Result<(Vec<T>, Vec<U>), MetricError> {
    let id_error = |file: &str, sent_id: &str, problem| MetricError::SentenceId {
        file: file.to_string(),
        sent_id: sent_id.to_string(),
        problem,
    };
    let mut seen = HashSet::new();
    for (id, _) in &gold {
        if !seen.insert(id.as_str()) {
            return Err(id_error(gold_name, id, "appears more than once"));
        }
    }
    let mut by_id: HashMap<String, U> = HashMap::new();
    for (id, v) in pred {
        if !seen.contains(id.as_str()) {
            return Err(id_error(pred_name, &id, "is not in the gold file"));
        }
        if by_id.contains_key(&id) {
            return Err(id_error(pred_name, &id, "appears more than once"));
        }
        by_id.insert(id, v);
    }
    let mut g_out = Vec::with_capacity(gold.len());
    let mut p_out = Vec::with_capacity(gold.len());
    for (id, v) in gold {
        let p = by_id
            .remove(&id)
            .ok_or_else(|| id_error(pred_name, &id, "is missing"))?;
        g_out.push(v);
        p_out.push(p);
    }
    Ok((g_out, p_out))
}

fn keyed<T>(records: Vec<(SentenceInfo, T)>) -> Vec<(String, T)> {
    records
        .into_iter()
        .map(|(info, v)| (info.sent_id, v))
        .collect()
}

type Exact = BigRational;

/// Parses both files for `task` and scores the prediction against gold.
///
/// CoNLL-U tasks align sentences by position; JSON-lines tasks by
/// `sent_id`. `matching` only affects the graph metrics of `fgsa`.
pub fn evaluate_task<G: BufRead, P: BufRead>(
    task: Task,
    gold: EvalInput<G>,
    pred: EvalInput<P>,
    matching: Matching,
) -> Result<EvalReport, MetricError> {
    let mut report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task,
        matching: None,
        metrics: Vec::new(),
        per_class: Vec::new(),
        counts: InstanceCounts {
            sentences: 0,
            gold: 0,
            predicted: 0,
        },
    };
    match task {
        Task::Pos => {
            let (_, g) = parse(gold, parse_conllu)?;
            let (_, p) = parse(pred, parse_conllu)?;
            let g: Vec<_> = g.into_iter().map(|s| s.upos).collect();
            let p: Vec<_> = p.into_iter().map(|s| s.upos).collect();
            let acc = pos_accuracy(&g, &p)?;
            report
                .metrics
                .push(MetricEntry::value("accuracy", acc.value::<f64>()));
            report.counts = InstanceCounts {
                sentences: g.len() as u64,
                gold: acc.total,
                predicted: acc.total,
            };
        }
        Task::Ner => {
            let (_, g) = parse(gold, parse_conllu_ner)?;
            let (_, p) = parse(pred, parse_conllu_ner)?;
            for (index, (gs, ps)) in g.iter().zip(&p).enumerate() {
                if gs.tokens.len() != ps.tokens.len() {
                    return Err(MetricError::Alignment {
                        index,
                        gold: gs.tokens.len(),
                        pred: ps.tokens.len(),
                    });
                }
            }
            let g: Vec<_> = g.into_iter().map(|s| s.entities).collect();
            let p: Vec<_> = p.into_iter().map(|s| s.entities).collect();
            let scores = ner_strict_f1::<Exact>(&g, &p)?;
            report.metrics.push(MetricEntry::prf("f1", &scores.micro));
            report.per_class = scores
                .per_type
                .iter()
                .map(|(t, prf)| ClassEntry::new(t.as_str(), prf))
                .collect();
            report.counts = counts(g.len(), &scores.micro);
        }
        Task::Sent => {
            let (gn, g) = parse(gold, parse_sentence_labels)?;
            let (pn, p) = parse(pred, parse_sentence_labels)?;
            let g = g.into_iter().map(|l| (l.sent_id, l.label)).collect();
            let p = p.into_iter().map(|l| (l.sent_id, l.label)).collect();
            let (g, p) = align_by_id(g, p, &gn, &pn)?;
            let scores = macro_f1::<Polarity, Exact>(&g, &p, &Polarity::ALL)?;
            report
                .metrics
                .push(MetricEntry::value("macro_f1", scores.macro_f1.to_f64()));
            report.per_class = scores
                .per_class
                .iter()
                .map(|(c, prf)| ClassEntry::new(c.as_str(), prf))
                .collect();
            report.counts = InstanceCounts {
                sentences: g.len() as u64,
                gold: g.len() as u64,
                predicted: p.len() as u64,
            };
        }
        Task::Fgsa => {
            let (gn, g) = parse(gold, parse_sentiment_graphs)?;
            let (pn, p) = parse(pred, parse_sentiment_graphs)?;
            let (g, p) = align_by_id(keyed(g), keyed(p), &gn, &pn)?;
            let sf1 = sentiment_graph_f1::<Exact>(&g, &p, true, matching)?;
            let entries = [
                (
                    "holder_f1",
                    span_token_f1::<Exact>(&g, &p, Element::Holder)?,
                ),
                ("target_f1", span_token_f1(&g, &p, Element::Target)?),
                ("expression_f1", span_token_f1(&g, &p, Element::Expression)?),
                ("targeted_f1", targeted_f1(&g, &p)?),
                ("uf1", graph_edge_f1(&g, &p, false)?),
                ("lf1", graph_edge_f1(&g, &p, true)?),
                ("nsf1", sentiment_graph_f1(&g, &p, false, matching)?),
                ("sf1", sf1.clone()),
            ];
            report.metrics = entries
                .iter()
                .map(|(n, prf)| MetricEntry::prf(n, prf))
                .collect();
            report.matching = Some(matching);
            report.counts = counts(g.len(), &sf1);
        }
        Task::Neg => {
            let (gn, g) = parse(gold, parse_negations)?;
            let (pn, p) = parse(pred, parse_negations)?;
            let (g, p) = align_by_id(keyed(g), keyed(p), &gn, &pn)?;
            let scores = negation_metrics::<Exact>(&g, &p)?;
            report.metrics = vec![
                MetricEntry::prf("cue_f1", &scores.cue),
                MetricEntry::prf("st_f1", &scores.scope_tokens),
                MetricEntry::prf("fn_f1", &scores.full),
            ];
            report.counts = counts(g.len(), &scores.cue);
        }
    }
    Ok(report)
}

fn counts(sentences: usize, prf: &Prf<Exact>) -> InstanceCounts {
    InstanceCounts {
        sentences: sentences as u64,
        gold: prf.gold.to_f64() as u64,
        predicted: prf.predicted.to_f64() as u64,
    }
}
